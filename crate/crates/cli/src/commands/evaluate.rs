use std::io::Write as _;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use ozonecast::baselines::{logistic_predict, persistence_forecast};
use ozonecast::classifier::decide;
use ozonecast::dataset::{self, FeatureTable, Role};
use ozonecast::metrics::{
    contingency, exceedance_report, global_fit_report, report_row, ContingencyTable, ExceedanceScores, FitReport,
    REPORT_HEADER,
};
use ozonecast::model_file::ModelBundle;
use ozonecast::Error;

use super::forecast_day;
use crate::config::{Baseline, RunConfig};
use crate::files::{self, flag, num, opt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    pub fit: Option<FitReport>,
    pub contingency: Option<ContingencyTable>,
    pub scores: Option<ExceedanceScores>,
    /// Why exceedance scores are missing, if they are.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub threshold: f64,
    pub confidence: f64,
    pub days: usize,
    pub models: Vec<ModelScore>,
}

impl Evaluation {
    pub fn model(&self, name: &str) -> Option<&ModelScore> {
        self.models.iter().find(|m| m.model == name)
    }
}

/// Score a model that may produce a value, an alarm, or both, on the days
/// where it has an output.
fn score(
    name: &str,
    observed: &[f64],
    threshold: f64,
    values: Option<&[Option<f64>]>,
    alarms: &[Option<bool>],
) -> Result<ModelScore> {
    let fit = match values {
        Some(v) => {
            let (p, o): (Vec<f64>, Vec<f64>) =
                v.iter().zip(observed).filter_map(|(p, o)| p.map(|p| (p, *o))).unzip();
            Some(global_fit_report(&p, &o).with_context(|| format!("scoring {name}"))?)
        }
        None => None,
    };
    let (pf, of): (Vec<bool>, Vec<bool>) = alarms
        .iter()
        .zip(observed)
        .filter_map(|(a, o)| a.map(|a| (a, *o >= threshold)))
        .unzip();
    let table = contingency(&pf, &of)?;
    let (scores, note) = match exceedance_report(&table) {
        Ok(s) => (Some(s), None),
        Err(e @ (Error::NoObservedExceedances | Error::AllExceedances)) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    Ok(ModelScore {
        model: name.to_string(),
        fit,
        contingency: Some(table),
        scores,
        note,
    })
}

pub const PREDICTION_HEADER: [&str; 11] = [
    "date",
    "observed",
    "mlp",
    "mlp_lower",
    "mlp_upper",
    "mlp_alarm",
    "probability",
    "probability_alarm",
    "pers",
    "lin",
    "logistic",
];

pub fn evaluate(cfg: &RunConfig) -> Result<Evaluation> {
    let bundle = ModelBundle::load(&cfg.model).with_context(|| format!("loading model {}", cfg.model.display()))?;
    let threshold = cfg.threshold.unwrap_or(bundle.threshold);
    let confidence = cfg.confidence.unwrap_or(bundle.confidence);
    let path = cfg.validation_path()?;
    let (records, report) =
        dataset::load_csv(path, &bundle.schema).with_context(|| format!("loading {}", path.display()))?;
    if !report.skipped.is_empty() {
        eprint!("{report}");
    }
    let table = FeatureTable::from_records(&records, &bundle.schema, Role::Validation)?;
    let observed = &table.targets;
    let n = table.len();

    let days = table
        .rows
        .iter()
        .map(|x| forecast_day(&bundle, x, threshold, confidence, cfg.interval))
        .collect::<Result<Vec<_>>>()?;
    let mlp: Vec<Option<f64>> = days.iter().map(|d| Some(d.point)).collect();
    let mlp_alarm: Vec<Option<bool>> = days.iter().map(|d| Some(d.interval_alarm)).collect();

    let pers: Option<Vec<Option<f64>>> = if cfg.has(Baseline::Pers) {
        let series: Vec<(NaiveDate, f64)> = table.dates.iter().copied().zip(observed.iter().copied()).collect();
        Some(persistence_forecast(&series)?)
    } else {
        None
    };
    let lin: Option<Vec<Option<f64>>> = match (&bundle.linear, cfg.has(Baseline::Lin)) {
        (Some(m), true) => Some(table.rows.iter().map(|x| m.predict(x).map(Some)).collect::<Result<_, _>>()?),
        _ => None,
    };
    let logistic: Option<Vec<Option<f64>>> = match (&bundle.logistic, cfg.has(Baseline::Logistic)) {
        (Some(m), true) => Some(
            table
                .rows
                .iter()
                .map(|x| {
                    let xn = bundle.regression.inputs.apply_row(x);
                    let picked: Vec<f64> = m.columns.iter().map(|&c| xn[c]).collect();
                    logistic_predict(m, &picked).map(Some)
                })
                .collect::<Result<_, _>>()?,
        ),
        _ => None,
    };

    let alarms_of = |v: &[Option<f64>], cut: f64| -> Vec<Option<bool>> { v.iter().map(|p| p.map(|p| p >= cut)).collect() };
    let mut models = vec![score("mlp", observed, threshold, Some(&mlp), &mlp_alarm)?];
    if bundle.classifier.is_some() {
        let alarms: Vec<Option<bool>> = days.iter().map(|d| d.probability_alarm).collect();
        models.push(score("classifier", observed, threshold, None, &alarms)?);
    }
    if let Some(p) = &pers {
        models.push(score("pers", observed, threshold, Some(p), &alarms_of(p, threshold))?);
    }
    if let Some(l) = &lin {
        models.push(score("lin", observed, threshold, Some(l), &alarms_of(l, threshold))?);
    }
    if let Some(g) = &logistic {
        let alarms: Vec<Option<bool>> = g.iter().map(|p| p.map(|p| decide(p, 0.5))).collect();
        models.push(score("logistic", observed, threshold, None, &alarms)?);
    }

    let out = &cfg.out_dir;
    let rows: Vec<Vec<String>> = models
        .iter()
        .map(|m| report_row(&m.model, m.fit.as_ref(), m.scores.as_ref()))
        .collect();
    files::write_rows(&out.join("evaluation.csv"), &REPORT_HEADER, &rows)?;
    for m in &models {
        if let Some(t) = &m.contingency {
            files::write_with(&out.join(format!("contingency_{}.csv", m.model)), |w| Ok(t.write_csv(w)?))?;
        }
    }

    let column = |v: &Option<Vec<Option<f64>>>, i: usize| v.as_ref().and_then(|v| v[i]);
    let prediction_rows: Vec<Vec<String>> = (0..n)
        .map(|i| {
            let d = &days[i];
            vec![
                table.dates[i].format("%Y-%m-%d").to_string(),
                num(observed[i]),
                num(d.point),
                num(d.lower),
                num(d.upper),
                flag(Some(d.interval_alarm)),
                opt(d.probability),
                flag(d.probability_alarm),
                opt(column(&pers, i)),
                opt(column(&lin, i)),
                opt(column(&logistic, i)),
            ]
        })
        .collect();
    files::write_rows(&out.join("eval_predictions.csv"), &PREDICTION_HEADER, &prediction_rows)?;

    let evaluation = Evaluation {
        threshold,
        confidence,
        days: n,
        models,
    };
    files::write_with(&out.join("evaluation.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &evaluation)?;
        writeln!(w)?;
        Ok(())
    })?;
    files::write_with(&out.join("evaluation.txt"), |w| write_text(w, &evaluation))?;
    Ok(evaluation)
}

fn write_text(w: &mut impl std::io::Write, e: &Evaluation) -> Result<()> {
    writeln!(w, "days: {}  threshold: {}  confidence: {}", e.days, e.threshold, e.confidence)?;
    for m in &e.models {
        writeln!(w, "[{}]", m.model)?;
        if let Some(f) = &m.fit {
            writeln!(
                w,
                "  MBE {:.3}  MAE {:.3}  RMSE {:.3}  RMSE_s {:.3}  RMSE_u {:.3}  d {:.4}  (N {})",
                f.mbe, f.mae, f.rmse, f.rmse_s, f.rmse_u, f.d, f.n
            )?;
        }
        if let Some(t) = &m.contingency {
            writeln!(w, "  A {}  F {}  M {}  N {}", t.a, t.f, t.m, t.n)?;
        }
        match (&m.scores, &m.note) {
            (Some(s), _) => writeln!(w, "  TPR {:.3}  FAR {:.3}  SI {:.3}", s.tpr, s.far, s.si)?,
            (None, Some(note)) => writeln!(w, "  exceedance scores unavailable: {note}")?,
            (None, None) => {}
        }
    }
    Ok(())
}
