mod evaluate;
mod forecast;
mod plotdata;
mod retrain;
mod synth;
mod train;

pub use evaluate::{evaluate, Evaluation, ModelScore};
pub use forecast::forecast;
pub use plotdata::plotdata;
pub use retrain::retrain;
pub use synth::synth;
pub use train::{prune_config, train, train_records};

use anyhow::Result;

use ozonecast::classifier::{decide, forward_classifier};
use ozonecast::model_file::ModelBundle;
use ozonecast::uncertainty::{exceedance_by_interval, prediction_interval, IntervalKind};

/// Both alarm rules for one day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayForecast {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub interval_alarm: bool,
    pub probability: Option<f64>,
    pub probability_alarm: Option<bool>,
}

pub fn forecast_day(
    bundle: &ModelBundle,
    x: &[f64],
    threshold: f64,
    confidence: f64,
    kind: IntervalKind,
) -> Result<DayForecast> {
    let reg = &bundle.regression;
    let xn = reg.inputs.apply_row(x);
    let iv = prediction_interval(&reg.network, &reg.interval, &xn, confidence, kind)?.restored(&reg.target);
    let (probability, probability_alarm) = match &bundle.classifier {
        Some(c) => {
            let p = forward_classifier(&c.network, &c.scaler.apply_row(x))?;
            (Some(p), Some(decide(p, c.decision_threshold)))
        }
        None => (None, None),
    };
    Ok(DayForecast {
        point: iv.point,
        lower: iv.lower(),
        upper: iv.upper(),
        interval_alarm: exceedance_by_interval(&iv, threshold),
        probability,
        probability_alarm,
    })
}
