//! Penalized log-MSE criterion, stepwise weight elimination and selection of
//! the hidden-layer size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::mlp::{self, Network, OutputKind, TrainConfig};
use crate::uncertainty;

/// `ln(mse) + w * ln(n) / n`.
pub fn bic(mse: f64, n: usize, w: usize) -> Result<f64> {
    if !(mse > 0.0) {
        return Err(Error::NonPositiveMse);
    }
    if n == 0 {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    let n = n as f64;
    Ok(mse.ln() + w as f64 * n.ln() / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicValue {
    pub mse: f64,
    pub n: usize,
    pub w: usize,
    pub value: f64,
}

/// Smallest MSE fed to the criterion; an exact fit would otherwise have no
/// finite score.
const MSE_FLOOR: f64 = 1e-300;

impl BicValue {
    pub fn new(mse: f64, n: usize, w: usize) -> Result<Self> {
        Ok(BicValue {
            mse,
            n,
            w,
            value: bic(mse, n, w)?,
        })
    }

    /// Criterion of `net` on `data`, counting its active weights.
    pub fn of_network(net: &Network, data: &FeatureTable) -> Result<Self> {
        let mse = mlp::mse(net, data);
        if !mse.is_finite() {
            return Err(Error::NonFiniteCost);
        }
        Ok(BicValue {
            mse,
            n: data.len(),
            w: net.active_count(),
            value: bic(mse.max(MSE_FLOOR), data.len(), net.active_count())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PruneMode {
    /// Try every active weight, retrain each candidate, keep the best.
    #[default]
    Exhaustive,
    /// Only try the active weight of smallest magnitude.
    Magnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// LM iterations allowed after each tentative elimination.
    pub retrain_iterations: usize,
    pub mode: PruneMode,
    pub train: TrainConfig,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            retrain_iterations: 50,
            mode: PruneMode::Exhaustive,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum PrunedItem {
    Weight(usize),
    HiddenUnit(usize),
    Input(usize),
}

impl PrunedItem {
    pub fn kind(&self) -> &'static str {
        match self {
            PrunedItem::Weight(_) => "weight",
            PrunedItem::HiddenUnit(_) => "hidden_unit",
            PrunedItem::Input(_) => "input",
        }
    }

    pub fn id(&self) -> usize {
        match *self {
            PrunedItem::Weight(k) | PrunedItem::HiddenUnit(k) | PrunedItem::Input(k) => k,
        }
    }
}

/// One accepted elimination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneEntry {
    pub weight: usize,
    /// Hidden units and inputs that lost their last connection with it.
    pub consequences: Vec<PrunedItem>,
    pub bic_before: f64,
    pub bic_after: f64,
    pub active_after: usize,
}

impl PruneEntry {
    pub fn items(&self) -> impl Iterator<Item = PrunedItem> + '_ {
        std::iter::once(PrunedItem::Weight(self.weight)).chain(self.consequences.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneTrace {
    pub entries: Vec<PruneEntry>,
    pub initial_active: usize,
    pub network: Network,
}

impl PruneTrace {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "step",
            "item_kind",
            "item_id",
            "bic_before",
            "bic_after",
            "active_parameter_count",
        ])?;
        for (step, e) in self.entries.iter().enumerate() {
            for item in e.items() {
                w.write_record([
                    (step + 1).to_string(),
                    item.kind().to_string(),
                    item.id().to_string(),
                    e.bic_before.to_string(),
                    e.bic_after.to_string(),
                    e.active_after.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<prune trace>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PruneStep {
    Accept { entry: PruneEntry, network: Network },
    Stop,
}

/// Mask weight `idx`, then drop hidden units left without output weight or
/// without any input weight. A unit with no inputs is a constant, which is
/// folded into the output bias.
pub fn eliminate(net: &Network, idx: usize) -> (Network, Vec<PrunedItem>) {
    let gone_before: Vec<bool> = (0..net.inputs()).map(|i| net.input_eliminated(i)).collect();
    let mut out = net.clone();
    out.prune(idx);
    let mut consequences = Vec::new();
    for j in 0..out.hidden() {
        if !net.hidden_unit_alive(j) {
            continue;
        }
        let vk = out.output_weight_index(j);
        let no_output = !out.is_active(vk);
        let no_inputs = (0..out.inputs()).all(|i| !out.is_active(out.input_weight_index(j, i)));
        if no_output || no_inputs {
            if no_inputs && !no_output {
                let bk = out.hidden_bias_index(j);
                let constant = out.weights()[vk] * out.weights()[bk].tanh();
                let ob = out.output_bias_index();
                let folded = out.weights()[ob] + constant;
                out.set_weight(ob, folded);
            }
            out.remove_hidden_unit(j);
            consequences.push(PrunedItem::HiddenUnit(j));
        }
    }
    for (i, before) in gone_before.iter().enumerate() {
        if !before && out.input_eliminated(i) {
            consequences.push(PrunedItem::Input(i));
        }
    }
    (out, consequences)
}

struct Candidate {
    weight: usize,
    network: Network,
    consequences: Vec<PrunedItem>,
    bic: f64,
}

/// Try one elimination. Accepts the best candidate when its criterion does
/// not exceed the current one.
pub fn prune_step(net: &Network, train: &FeatureTable, cfg: &PruneConfig) -> Result<PruneStep> {
    let ob = net.output_bias_index();
    let mut candidates: Vec<usize> = net.active_indices().into_iter().filter(|&k| k != ob).collect();
    if candidates.is_empty() {
        return Ok(PruneStep::Stop);
    }
    if cfg.mode == PruneMode::Magnitude {
        let smallest = candidates
            .iter()
            .copied()
            .min_by(|&a, &b| net.weights()[a].abs().total_cmp(&net.weights()[b].abs()).then(a.cmp(&b)))
            .expect("non-empty");
        candidates = vec![smallest];
    }
    let current = BicValue::of_network(net, train)?.value;
    let retrain = TrainConfig {
        max_iterations: cfg.retrain_iterations,
        ..cfg.train
    };

    let evaluated: Vec<Result<Option<Candidate>>> = candidates
        .par_iter()
        .map(|&k| {
            let (start, consequences) = eliminate(net, k);
            let trained = match mlp::train_lm(&start, train, &retrain) {
                Ok(t) => t.network,
                Err(Error::NonFiniteCost) => return Ok(None),
                Err(e) => return Err(e),
            };
            let bic = match BicValue::of_network(&trained, train) {
                Ok(b) => b.value,
                Err(Error::NonFiniteCost) => return Ok(None),
                Err(e) => return Err(e),
            };
            Ok(Some(Candidate {
                weight: k,
                network: trained,
                consequences,
                bic,
            }))
        })
        .collect();

    let mut best: Option<Candidate> = None;
    for c in evaluated {
        let Some(c) = c? else { continue };
        let better = match &best {
            None => true,
            Some(b) => c
                .bic
                .total_cmp(&b.bic)
                .then(c.network.active_count().cmp(&b.network.active_count()))
                .then(c.weight.cmp(&b.weight))
                .is_lt(),
        };
        if better {
            best = Some(c);
        }
    }
    match best {
        Some(c) if c.bic <= current => Ok(PruneStep::Accept {
            entry: PruneEntry {
                weight: c.weight,
                consequences: c.consequences,
                bic_before: current,
                bic_after: c.bic,
                active_after: c.network.active_count(),
            },
            network: c.network,
        }),
        _ => Ok(PruneStep::Stop),
    }
}

/// Repeat [`prune_step`] until no elimination lowers the criterion.
pub fn prune_to_minimal(net: &Network, train: &FeatureTable, cfg: &PruneConfig) -> Result<PruneTrace> {
    let mut current = net.clone();
    let mut entries = Vec::new();
    while let PruneStep::Accept { entry, network } = prune_step(&current, train, cfg)? {
        entries.push(entry);
        current = network;
    }
    Ok(PruneTrace {
        entries,
        initial_active: net.active_count(),
        network: current,
    })
}

/// Where the criterion used to compare hidden-layer sizes is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BicTarget {
    Train,
    Validation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchitecturePoint {
    pub hidden: usize,
    pub bic: f64,
    pub mse: f64,
    pub active: usize,
    /// Whether the pruned network's gradient matrix has full column rank.
    /// Sizes without it cannot be selected.
    pub identifiable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub hidden_dim: usize,
    pub curve: Vec<ArchitecturePoint>,
    /// Trained and pruned network for the selected size.
    pub network: Network,
    pub trace: PruneTrace,
}

pub fn write_curve_csv<W: std::io::Write>(curve: &[ArchitecturePoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["hidden_units", "bic", "mse", "active_parameters", "identifiable"])?;
    for p in curve {
        w.write_record([
            p.hidden.to_string(),
            p.bic.to_string(),
            p.mse.to_string(),
            p.active.to_string(),
            u8::from(p.identifiable).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<bic curve>", e))?;
    Ok(())
}

/// Criterion differences below this are rounding noise and count as ties.
/// Larger layers often prune down to the same function as a smaller one.
pub const BIC_TIE_TOLERANCE: f64 = 1e-9;

/// Train and prune one network per hidden-layer size and keep the size with
/// the lowest criterion on the chosen data. Zero hidden units is the linear
/// regression. Ties go to the smaller size. A size whose pruned network has
/// a rank-deficient gradient matrix (typically a saturated unit fitting a few
/// rows) is recorded on the curve but never selected.
pub fn select_architecture(
    train: &FeatureTable,
    validation: Option<&FeatureTable>,
    hidden_range: &[usize],
    target: BicTarget,
    cfg: &PruneConfig,
) -> Result<Selection> {
    if !hidden_range.contains(&0) {
        return Err(Error::InvalidConfig("hidden-unit range must include 0".into()));
    }
    let eval = match target {
        BicTarget::Train => train,
        BicTarget::Validation => validation.ok_or_else(|| {
            Error::InvalidConfig("criterion on validation data needs a validation set".into())
        })?,
    };
    let mut sizes = hidden_range.to_vec();
    sizes.sort_unstable();
    sizes.dedup();

    let mut curve = Vec::with_capacity(sizes.len());
    let mut best: Option<(f64, usize, PruneTrace)> = None;
    let mut deficiency = None;
    for &n in &sizes {
        let template = Network::zeros(train.width(), n, OutputKind::Identity);
        let start = mlp::multistart_from(&template, train, &cfg.train)?;
        let trace = prune_to_minimal(&start.network, train, cfg)?;
        let score = BicValue::of_network(&trace.network, eval)?;
        let identifiable = match uncertainty::leverages(&trace.network, train) {
            Ok(_) => true,
            Err(e @ Error::RankDeficient { .. }) => {
                deficiency.get_or_insert(e);
                false
            }
            Err(e) => return Err(e),
        };
        curve.push(ArchitecturePoint {
            hidden: n,
            bic: score.value,
            mse: score.mse,
            active: score.w,
            identifiable,
        });
        if identifiable && best.as_ref().is_none_or(|(b, _, _)| score.value < *b - BIC_TIE_TOLERANCE) {
            best = Some((score.value, n, trace));
        }
    }
    let Some((_, hidden_dim, trace)) = best else {
        return Err(deficiency.expect("every size was rejected for rank"));
    };
    Ok(Selection {
        hidden_dim,
        curve,
        network: trace.network.clone(),
        trace,
    })
}
