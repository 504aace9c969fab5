use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use ozonecast::baselines::{self, DEFAULT_RIDGE_LAMBDA};
use ozonecast::classifier::{self, make_targets, MinMaxScaler, TargetMode};
use ozonecast::dataset::{self, normalize_fit, ColumnStats, FeatureTable, RawRecord, Role, Schema};
use ozonecast::model_file::{ClassifierModel, ModelBundle, RegressionModel, FORMAT_VERSION};
use ozonecast::pruning::{self, select_architecture, BicTarget, BicValue, PruneConfig};
use ozonecast::uncertainty::{self, prediction_interval, IntervalContext, PredictionInterval};
use ozonecast::{ExceedanceTargets, TrainConfig};

use crate::config::{Baseline, RunConfig};
use crate::files;

/// Retention level for backward elimination in the logistic baseline.
const LOGISTIC_KEEP_P: f64 = 0.05;

pub fn prune_config(cfg: &RunConfig) -> PruneConfig {
    PruneConfig {
        train: TrainConfig {
            restarts: cfg.restarts,
            seed: cfg.seed,
            ..TrainConfig::default()
        },
        ..PruneConfig::default()
    }
}

fn standardized_targets(table: &FeatureTable, stats: &ColumnStats) -> Result<FeatureTable> {
    let y = table.targets.iter().map(|v| stats.standardize(*v)).collect();
    Ok(table.with_targets(y)?)
}

pub fn train(cfg: &RunConfig) -> Result<ModelBundle> {
    let schema = cfg.schema()?;
    let path = cfg.train_path()?;
    let records = load_training(path, schema, cfg)?;
    train_records(cfg, schema, records)
}

fn load_training(path: &Path, schema: &Schema, cfg: &RunConfig) -> Result<Vec<RawRecord>> {
    let (records, report) =
        dataset::load_csv(path, schema).with_context(|| format!("loading {}", path.display()))?;
    files::write_with(&cfg.out_dir.join("load_report.txt"), |w| {
        write!(w, "{report}")?;
        Ok(())
    })?;
    if !report.skipped.is_empty() {
        eprint!("{report}");
    }
    Ok(records)
}

/// The training pipeline on already loaded records.
pub fn train_records(cfg: &RunConfig, schema: &Schema, records: Vec<RawRecord>) -> Result<ModelBundle> {
    let target = cfg
        .bic_on
        .context("choose where the architecture criterion is computed with --bic-on train|validation")?;
    let out = &cfg.out_dir;

    let records = match &cfg.balance {
        Some(spec) => {
            let balanced = dataset::balance(&records, spec, cfg.seed).context("balancing the training set")?;
            files::write_with(&out.join("balance_manifest.csv"), |w| Ok(balanced.write_manifest(w)?))?;
            balanced.records
        }
        None => records,
    };

    let raw = FeatureTable::from_records(&records, schema, Role::Train)?;
    let (normalized, inputs) = normalize_fit(&raw)?;
    let target_stats = ColumnStats::fit(&raw.targets);
    anyhow::ensure!(target_stats.std > 0.0, "training peaks are all equal");
    let train_std = standardized_targets(&normalized, &target_stats)?;

    let validation = match target {
        BicTarget::Train => None,
        BicTarget::Validation => {
            let path = cfg.validation_path()?;
            let (recs, _) = dataset::load_csv(path, schema).with_context(|| format!("loading {}", path.display()))?;
            let table = FeatureTable::from_records(&recs, schema, Role::Validation)?;
            Some(standardized_targets(&inputs.apply(&table)?, &target_stats)?)
        }
    };

    let prune_cfg = prune_config(cfg);
    let selection = select_architecture(&train_std, validation.as_ref(), &cfg.hidden_range, target, &prune_cfg)?;
    files::write_with(&out.join("prune_trace.csv"), |w| Ok(selection.trace.write_csv(w)?))?;
    files::write_with(&out.join("bic_curve.csv"), |w| Ok(pruning::write_curve_csv(&selection.curve, w)?))?;

    let net = selection.network.clone();
    let lev = uncertainty::leverages(&net, &train_std)?;
    files::write_with(&out.join("leverages.csv"), |w| Ok(lev.write_csv(w)?))?;
    let s = uncertainty::residual_std(&net, &train_std, lev.q)?;
    let interval = IntervalContext::from_leverages(&net, &lev, s);
    let fit = BicValue::of_network(&net, &train_std)?;

    let regression = RegressionModel {
        network: net,
        inputs,
        target: target_stats,
        interval,
        bic: fit.value,
        mse: fit.mse,
    };

    let classifier = train_classifier(cfg, &raw, &train_std, &regression, &prune_cfg)?;

    let linear = if cfg.has(Baseline::Lin) {
        Some(baselines::ridge_fit(&raw.rows, &raw.targets, DEFAULT_RIDGE_LAMBDA)?)
    } else {
        None
    };

    let logistic = if cfg.has(Baseline::Logistic) {
        let y: Vec<f64> = raw
            .targets
            .iter()
            .map(|v| if *v >= cfg.train_threshold() { 1.0 } else { 0.0 })
            .collect();
        let names: Vec<String> = raw.columns.iter().map(|c| c.name.clone()).collect();
        match baselines::logistic_stepwise(&train_std.rows, &y, &names, LOGISTIC_KEEP_P) {
            Ok((model, _)) => {
                files::write_with(&out.join("logistic_coefficients.csv"), |w| Ok(model.write_coefficients_csv(w)?))?;
                Some(model)
            }
            Err(e) => {
                eprintln!("warning: logistic baseline not fitted: {e}");
                None
            }
        }
    } else {
        None
    };

    let bundle = ModelBundle {
        format_version: FORMAT_VERSION,
        schema: schema.clone(),
        columns: raw.columns.clone(),
        seed: cfg.seed,
        threshold: cfg.train_threshold(),
        confidence: cfg.train_confidence(),
        balance: cfg.balance,
        train_rows: raw.len(),
        regression,
        classifier,
        linear,
        logistic,
    };
    files::write_with(&cfg.model, |w| {
        w.write_all(bundle.to_json()?.as_bytes())?;
        Ok(())
    })?;
    Ok(bundle)
}

fn train_classifier(
    cfg: &RunConfig,
    raw: &FeatureTable,
    train_std: &FeatureTable,
    regression: &RegressionModel,
    prune_cfg: &PruneConfig,
) -> Result<Option<ClassifierModel>> {
    let intervals: Option<Vec<PredictionInterval>> = match cfg.target_mode {
        TargetMode::Observed => None,
        TargetMode::Interval => Some(
            train_std
                .rows
                .iter()
                .map(|x| {
                    prediction_interval(&regression.network, &regression.interval, x, cfg.train_confidence(), cfg.interval)
                        .map(|iv| iv.restored(&regression.target))
                })
                .collect::<ozonecast::Result<_>>()?,
        ),
    };
    let targets: ExceedanceTargets = make_targets(&raw.targets, cfg.train_threshold(), cfg.target_mode, intervals.as_deref())?;
    if targets.single_class {
        eprintln!("warning: classifier not trained: training targets contain a single class");
        return Ok(None);
    }
    let scaler = MinMaxScaler::fit(raw)?;
    let scaled = scaler.apply(raw);
    let outcome = classifier::train_classifier(&scaled, &targets, &regression.network, prune_cfg)?;
    files::write_with(&cfg.out_dir.join("classifier_prune_trace.csv"), |w| Ok(outcome.trace.write_csv(w)?))?;
    Ok(Some(ClassifierModel {
        network: outcome.network,
        scaler,
        target_mode: cfg.target_mode,
        decision_threshold: classifier::DEFAULT_DECISION_THRESHOLD,
    }))
}
