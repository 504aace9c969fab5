//! Sigmoid-output network read as the probability of exceeding a threshold.

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::mlp::{self, Network, OutputKind};
use crate::pruning::{self, PruneConfig, PruneTrace};
use crate::uncertainty::{exceedance_by_interval, PredictionInterval};

pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;

/// How the 0/1 training targets are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    /// 1 when the observed peak reaches the threshold.
    #[default]
    Observed,
    /// 1 when the regression forecast plus its half-width reaches the threshold.
    Interval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceTargets {
    pub targets: Vec<f64>,
    pub mode: TargetMode,
    /// Set when every target is equal; such targets cannot train a classifier.
    pub single_class: bool,
}

impl ExceedanceTargets {
    pub fn positives(&self) -> usize {
        self.targets.iter().filter(|t| **t == 1.0).count()
    }
}

pub fn make_targets(
    observed: &[f64],
    threshold: f64,
    mode: TargetMode,
    intervals: Option<&[PredictionInterval]>,
) -> Result<ExceedanceTargets> {
    let flags: Vec<bool> = match mode {
        TargetMode::Observed => observed.iter().map(|y| *y >= threshold).collect(),
        TargetMode::Interval => {
            let intervals = intervals.ok_or(Error::MissingRegressionContext)?;
            if intervals.len() != observed.len() {
                return Err(Error::LengthMismatch {
                    left: observed.len(),
                    right: intervals.len(),
                });
            }
            intervals
                .iter()
                .map(|iv| exceedance_by_interval(iv, threshold))
                .collect()
        }
    };
    let positives = flags.iter().filter(|f| **f).count();
    Ok(ExceedanceTargets {
        targets: flags.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect(),
        mode,
        single_class: positives == 0 || positives == flags.len(),
    })
}

pub fn forward_classifier(net: &Network, x: &[f64]) -> Result<f64> {
    if net.output_kind() != OutputKind::Sigmoid {
        return Err(Error::WrongOutputKind);
    }
    net.predict(x)
}

pub fn decide(probability: f64, threshold: f64) -> bool {
    probability >= threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityForecast {
    pub probability: f64,
    pub threshold: f64,
    pub decision: bool,
}

impl ProbabilityForecast {
    pub fn new(probability: f64, threshold: f64) -> Self {
        ProbabilityForecast {
            probability,
            threshold,
            decision: decide(probability, threshold),
        }
    }
}

/// Per-column rescaling to [0, 1] fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(table: &FeatureTable) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::TooFewRows { needed: 1, got: 0 });
        }
        let mut min = vec![f64::INFINITY; table.width()];
        let mut max = vec![f64::NEG_INFINITY; table.width()];
        for row in &table.rows {
            for (j, v) in row.iter().enumerate() {
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        if let Some(j) = (0..min.len()).find(|&j| max[j] <= min[j]) {
            return Err(Error::ConstantColumn(table.columns[j].name.clone()));
        }
        Ok(MinMaxScaler { min, max })
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| (v - self.min[j]) / (self.max[j] - self.min[j]))
            .collect()
    }

    pub fn apply(&self, table: &FeatureTable) -> FeatureTable {
        let mut out = table.clone();
        out.rows = table.rows.iter().map(|r| self.apply_row(r)).collect();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierOutcome {
    pub network: Network,
    pub trace: PruneTrace,
}

/// Train a sigmoid network on 0/1 targets.
///
/// `architecture` fixes the hidden-layer size and the pruned connections the
/// classifier starts from (normally the selected regression network). The
/// usual restarts and stepwise elimination follow.
pub fn train_classifier(
    train: &FeatureTable,
    targets: &ExceedanceTargets,
    architecture: &Network,
    cfg: &PruneConfig,
) -> Result<ClassifierOutcome> {
    if targets.single_class {
        return Err(Error::SingleClass);
    }
    let data = train.with_targets(targets.targets.clone())?;
    let template = architecture.clone().with_output_kind(OutputKind::Sigmoid);
    let mut blank = Network::zeros(template.inputs(), template.hidden(), OutputKind::Sigmoid);
    blank.apply_mask_of(&template)?;
    let start = mlp::multistart_from(&blank, &data, &cfg.train)?;
    let trace = pruning::prune_to_minimal(&start.network, &data, cfg)?;
    Ok(ClassifierOutcome {
        network: trace.network.clone(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::TrainConfig;
    use crate::uncertainty::PredictionInterval;
    use approx::assert_abs_diff_eq;

    #[test]
    fn observed_targets() {
        let t = make_targets(&[150.0, 190.0], 180.0, TargetMode::Observed, None).unwrap();
        assert_eq!(t.targets, vec![0.0, 1.0]);
        assert!(!t.single_class);
        let low = make_targets(&[10.0, 20.0, 179.9], 180.0, TargetMode::Observed, None).unwrap();
        assert_eq!(low.targets, vec![0.0; 3]);
        assert!(low.single_class);
    }

    #[test]
    fn interval_targets() {
        let iv = PredictionInterval {
            point: 175.0,
            half_width: 10.0,
            alpha: 0.05,
            dof: 50,
        };
        let t = make_targets(&[120.0], 180.0, TargetMode::Interval, Some(&[iv])).unwrap();
        assert_eq!(t.targets, vec![1.0]);
        assert!(matches!(
            make_targets(&[120.0], 180.0, TargetMode::Interval, None),
            Err(Error::MissingRegressionContext)
        ));
    }

    #[test]
    fn classifier_outputs() {
        let net = Network::zeros(2, 1, OutputKind::Sigmoid);
        assert_eq!(forward_classifier(&net, &[0.3, 1.0]).unwrap(), 0.5);

        let mut sat = Network::zeros(2, 1, OutputKind::Sigmoid);
        let ob = sat.output_bias_index();
        sat.set_weight(ob, 20.0);
        assert!(forward_classifier(&sat, &[1.0, 1.0]).unwrap() > 1.0 - 1e-8);

        let mut one = Network::zeros(1, 1, OutputKind::Sigmoid);
        one.set_weight(one.input_weight_index(0, 0), 1.0);
        one.set_weight(one.output_weight_index(0), 2.0);
        assert_abs_diff_eq!(forward_classifier(&one, &[1.0]).unwrap(), 0.821_007_496_006, epsilon = 1e-9);

        let reg = Network::zeros(1, 1, OutputKind::Identity);
        assert!(matches!(forward_classifier(&reg, &[1.0]), Err(Error::WrongOutputKind)));
        assert!(matches!(forward_classifier(&one, &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn decision_rule() {
        assert!(decide(0.50, DEFAULT_DECISION_THRESHOLD));
        assert!(!decide(0.49, DEFAULT_DECISION_THRESHOLD));
        assert!(decide(1.0, DEFAULT_DECISION_THRESHOLD));
        assert!(ProbabilityForecast::new(0.7, 0.5).decision);
    }

    fn separable() -> (FeatureTable, ExceedanceTargets) {
        let xs: Vec<f64> = (0..40).map(|i| -1.0 + i as f64 / 20.0 + 0.025).collect();
        let table = FeatureTable::from_xy(xs.iter().map(|x| vec![*x]).collect(), vec![0.0; 40]).unwrap();
        let targets = make_targets(&xs, 0.3, TargetMode::Observed, None).unwrap();
        (table, targets)
    }

    #[test]
    fn separable_data_is_learned() {
        let (table, targets) = separable();
        let arch = Network::zeros(1, 1, OutputKind::Identity);
        let out = train_classifier(&table, &targets, &arch, &PruneConfig::default()).unwrap();
        for (x, t) in table.rows.iter().zip(&targets.targets) {
            let p = forward_classifier(&out.network, x).unwrap();
            assert_eq!(decide(p, 0.5), *t == 1.0);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn flipped_labels_give_complementary_probabilities() {
        let xs: Vec<f64> = (0..60).map(|i| -1.5 + i as f64 / 20.0).collect();
        let table = FeatureTable::from_xy(xs.iter().map(|x| vec![*x]).collect(), vec![0.0; 60]).unwrap();
        // Overlapping classes so the optimum is finite.
        let labels: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| if *x > 0.0 || i % 7 == 0 { 1.0 } else { 0.0 })
            .collect();
        let pos = ExceedanceTargets {
            targets: labels.clone(),
            mode: TargetMode::Observed,
            single_class: false,
        };
        let neg = ExceedanceTargets {
            targets: labels.iter().map(|t| 1.0 - t).collect(),
            ..pos.clone()
        };
        let arch = Network::zeros(1, 1, OutputKind::Identity);
        let cfg = PruneConfig {
            train: TrainConfig {
                tolerance: 1e-14,
                max_iterations: 2000,
                ..TrainConfig::default()
            },
            ..PruneConfig::default()
        };
        let a = train_classifier(&table, &pos, &arch, &cfg).unwrap();
        let b = train_classifier(&table, &neg, &arch, &cfg).unwrap();
        for x in &table.rows {
            let pa = forward_classifier(&a.network, x).unwrap();
            let pb = forward_classifier(&b.network, x).unwrap();
            assert_abs_diff_eq!(pa + pb, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let (table, _) = separable();
        let t = make_targets(&vec![0.0; 40], 1.0, TargetMode::Observed, None).unwrap();
        let arch = Network::zeros(1, 1, OutputKind::Identity);
        assert!(matches!(
            train_classifier(&table, &t, &arch, &PruneConfig::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn min_max_scaling() {
        let table = FeatureTable::from_xy(vec![vec![2.0, -1.0], vec![4.0, 1.0], vec![3.0, 0.0]], vec![0.0; 3]).unwrap();
        let s = MinMaxScaler::fit(&table).unwrap();
        assert_eq!(s.apply(&table).rows, vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, 0.5]]);
        let flat = FeatureTable::from_xy(vec![vec![1.0], vec![1.0]], vec![0.0; 2]).unwrap();
        assert!(matches!(MinMaxScaler::fit(&flat), Err(Error::ConstantColumn(_))));
    }
}
