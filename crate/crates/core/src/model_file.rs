//! On-disk form of a trained forecaster: the pruned networks, the scaling
//! they were trained under, the cached interval context and the fitted
//! baselines.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{LinearModel, LogisticModel};
use crate::classifier::{MinMaxScaler, TargetMode};
use crate::dataset::{BalanceSpec, ColumnStats, Column, Normalization, Schema};
use crate::error::{Error, Result};
use crate::mlp::Network;
use crate::uncertainty::IntervalContext;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub network: Network,
    pub inputs: Normalization,
    pub target: ColumnStats,
    pub interval: IntervalContext,
    pub bic: f64,
    /// Training MSE on the standardized target.
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub network: Network,
    pub scaler: MinMaxScaler,
    pub target_mode: TargetMode,
    pub decision_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub schema: Schema,
    pub columns: Vec<Column>,
    pub seed: u64,
    /// Concentration threshold for exceedances.
    pub threshold: f64,
    pub confidence: f64,
    pub balance: Option<BalanceSpec>,
    pub train_rows: usize,
    pub regression: RegressionModel,
    pub classifier: Option<ClassifierModel>,
    pub linear: Option<LinearModel>,
    pub logistic: Option<LogisticModel>,
}

impl ModelBundle {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: ModelBundle = serde_json::from_str(text)?;
        if bundle.format_version != FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model format version {}",
                bundle.format_version
            )));
        }
        bundle.regression.network.validate()?;
        if let Some(c) = &bundle.classifier {
            c.network.validate()?;
        }
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{feature_columns, FeatureTable};
    use crate::mlp::{self, OutputKind, TrainConfig};

    fn bundle() -> ModelBundle {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (1.3 * r[0] - 0.4 * r[1]).tanh() / 3.0).collect();
        let table = FeatureTable::from_xy(rows, y).unwrap();
        let fit = mlp::multistart(&table, 1, &TrainConfig::default()).unwrap();
        let interval = IntervalContext::new(&fit.network, &table).unwrap();
        let schema = Schema {
            date: "date".into(),
            target: "peak".into(),
            persistence: "o3_noon".into(),
            numeric: vec!["t_max".into()],
            categorical: Vec::new(),
        };
        ModelBundle {
            format_version: FORMAT_VERSION,
            columns: feature_columns(&schema),
            schema,
            seed: 7,
            threshold: 180.0,
            confidence: 0.95,
            balance: None,
            train_rows: 30,
            regression: RegressionModel {
                network: fit.network.clone(),
                inputs: Normalization {
                    columns: vec![ColumnStats { mean: 0.1, std: 1.0 / 3.0 }; 2],
                },
                target: ColumnStats { mean: 101.7, std: 29.3 },
                interval,
                bic: -7.123456789012345,
                mse: fit.cost,
            },
            classifier: Some(ClassifierModel {
                network: fit.network.with_output_kind(OutputKind::Sigmoid),
                scaler: MinMaxScaler {
                    min: vec![-1.0, -0.9],
                    max: vec![1.0, 1.0],
                },
                target_mode: TargetMode::Observed,
                decision_threshold: 0.5,
            }),
            linear: None,
            logistic: None,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let b = bundle();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        b.save(&path).unwrap();
        let back = ModelBundle::load(&path).unwrap();
        let (w0, w1) = (b.regression.network.weights(), back.regression.network.weights());
        assert!(w0.iter().zip(w1).all(|(a, c)| a.to_bits() == c.to_bits()));
        assert_eq!(back.regression.interval, b.regression.interval);
        assert_eq!(back.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn rejects_unknown_version() {
        let mut b = bundle();
        b.format_version = 99;
        let text = serde_json::to_string(&b).unwrap();
        assert!(matches!(ModelBundle::from_json(&text), Err(Error::InvalidConfig(_))));
        assert!(ModelBundle::load("/nonexistent/model.json").is_err());
    }
}
