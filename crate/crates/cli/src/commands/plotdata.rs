use anyhow::{ensure, Context, Result};

use ozonecast::metrics::standardized_residuals;

use super::Evaluation;
use crate::config::RunConfig;
use crate::files::{self, num};

/// Residuals beyond this many standard deviations are listed separately.
const RESIDUAL_BAND: f64 = 2.0;

struct Day {
    date: String,
    observed: f64,
    predicted: f64,
    lower: f64,
    upper: f64,
    probability: Option<f64>,
}

fn parse(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>().with_context(|| format!("bad {what} value `{s}`"))
}

pub fn plotdata(cfg: &RunConfig) -> Result<()> {
    let out = &cfg.out_dir;
    let predictions = out.join("eval_predictions.csv");
    let curve = out.join("bic_curve.csv");
    ensure!(
        predictions.exists(),
        "missing {}; run `evaluate` first",
        predictions.display()
    );
    ensure!(curve.exists(), "missing {}; run `train` first", curve.display());
    let summary = out.join("evaluation.json");
    let text = std::fs::read_to_string(&summary)
        .with_context(|| format!("reading {}; run `evaluate` first", summary.display()))?;
    let evaluation: Evaluation = serde_json::from_str(&text)?;
    let threshold = cfg.threshold.unwrap_or(evaluation.threshold);

    let mut rdr = csv::Reader::from_path(&predictions)?;
    let mut days = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let probability = match rec.get(6).unwrap_or("") {
            "" => None,
            s => Some(parse(s, "probability")?),
        };
        days.push(Day {
            date: rec[0].to_string(),
            observed: parse(&rec[1], "observed")?,
            predicted: parse(&rec[2], "predicted")?,
            lower: parse(&rec[3], "lower")?,
            upper: parse(&rec[4], "upper")?,
            probability,
        });
    }

    let series: Vec<Vec<String>> = days
        .iter()
        .map(|d| {
            vec![
                d.date.clone(),
                num(d.observed),
                num(d.predicted),
                num(d.lower),
                num(d.upper),
            ]
        })
        .collect();
    files::write_rows(
        &out.join("plot_timeseries.csv"),
        &["date", "observed", "predicted", "lower", "upper"],
        &series,
    )?;

    let scatter: Vec<Vec<String>> = days
        .iter()
        .map(|d| vec![num(d.observed), num(d.predicted)])
        .collect();
    files::write_rows(&out.join("plot_scatter.csv"), &["observed", "predicted"], &scatter)?;

    let probability: Vec<Vec<String>> = days
        .iter()
        .filter_map(|d| {
            d.probability.map(|p| {
                let target = u8::from(d.observed >= threshold);
                vec![d.date.clone(), num(p), target.to_string()]
            })
        })
        .collect();
    files::write_rows(
        &out.join("plot_probability.csv"),
        &["date", "probability", "observed_exceedance"],
        &probability,
    )?;

    let p: Vec<f64> = days.iter().map(|d| d.predicted).collect();
    let o: Vec<f64> = days.iter().map(|d| d.observed).collect();
    let sr = standardized_residuals(&p, &o)?;
    let residuals: Vec<Vec<String>> = days
        .iter()
        .zip(&sr)
        .map(|(d, r)| vec![d.date.clone(), num(*r)])
        .collect();
    files::write_rows(&out.join("plot_residuals.csv"), &["date", "standardized_residual"], &residuals)?;
    let flagged: Vec<Vec<String>> = residuals
        .iter()
        .zip(&sr)
        .filter(|(_, r)| r.abs() > RESIDUAL_BAND)
        .map(|(row, _)| row.clone())
        .collect();
    files::write_rows(
        &out.join("plot_residual_flags.csv"),
        &["date", "standardized_residual"],
        &flagged,
    )?;

    std::fs::copy(&curve, out.join("plot_bic_curve.csv")).context("copying the criterion curve")?;
    Ok(())
}
