use std::path::Path;

use anyhow::{ensure, Context, Result};

use ozonecast::dataset::{self, feature_vector, LoadMode};
use ozonecast::model_file::ModelBundle;

use super::forecast_day;
use crate::config::RunConfig;
use crate::files::{self, flag, num, opt};

pub const FORECAST_HEADER: [&str; 7] = [
    "date",
    "point",
    "lower",
    "upper",
    "interval_alarm",
    "probability",
    "probability_alarm",
];

pub fn forecast(cfg: &RunConfig, input: &Path) -> Result<()> {
    let target = cfg.out_dir.join("forecast.csv");
    let same = |a: &Path, b: &Path| matches!((a.canonicalize(), b.canonicalize()), (Ok(x), Ok(y)) if x == y);
    ensure!(
        !same(input, &target),
        "input {} would be overwritten by the forecast output",
        input.display()
    );
    let bundle = ModelBundle::load(&cfg.model).with_context(|| format!("loading model {}", cfg.model.display()))?;
    let threshold = cfg.threshold.unwrap_or(bundle.threshold);
    let confidence = cfg.confidence.unwrap_or(bundle.confidence);
    let (records, _) = dataset::load_csv_with(input, &bundle.schema, LoadMode::Forecast)
        .with_context(|| format!("loading {}", input.display()))?;
    let mut rows = Vec::with_capacity(records.len());
    for r in &records {
        let x = feature_vector(r, &bundle.schema)?;
        let d = forecast_day(&bundle, &x, threshold, confidence, cfg.interval)?;
        rows.push(vec![
            r.date.format("%Y-%m-%d").to_string(),
            num(d.point),
            num(d.lower),
            num(d.upper),
            flag(Some(d.interval_alarm)),
            opt(d.probability),
            flag(d.probability_alarm),
        ]);
    }
    files::write_rows(&target, &FORECAST_HEADER, &rows)
}
