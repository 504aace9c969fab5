//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use ozonecast::dataset::Schema;
use ozonecast::pruning::BicTarget;
use ozonecast::uncertainty::IntervalKind;
use ozonecast::{BalanceSpec, TargetMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Pers,
    Lin,
    Logistic,
}

impl FromStr for Baseline {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pers" => Ok(Baseline::Pers),
            "lin" => Ok(Baseline::Lin),
            "logistic" => Ok(Baseline::Logistic),
            other => bail!("unknown baseline `{other}` (expected pers, lin or logistic)"),
        }
    }
}

pub fn parse_baselines(s: &str) -> Result<Vec<Baseline>> {
    if s.trim().is_empty() || s.trim() == "none" {
        return Ok(Vec::new());
    }
    s.split(',').map(Baseline::from_str).collect()
}

/// `none` or `a,b,theta,multiplier`.
pub fn parse_balance(s: &str) -> Result<Option<BalanceSpec>> {
    if s.trim() == "none" {
        return Ok(None);
    }
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    ensure!(parts.len() == 4, "balance must be `none` or `a,b,theta,multiplier`, got `{s}`");
    let num = |k: usize| -> Result<f64> {
        parts[k]
            .parse::<f64>()
            .with_context(|| format!("bad number `{}` in balance spec", parts[k]))
    };
    let multiplier: u32 = parts[3]
        .parse()
        .with_context(|| format!("bad multiplier `{}` in balance spec", parts[3]))?;
    Ok(Some(BalanceSpec::new(num(2)?, num(0)?, num(1)?, multiplier)?))
}

/// `lo-hi` (inclusive) or a comma list such as `0,1,3`.
pub fn parse_hidden_range(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    let sizes: Vec<usize> = if let Some((lo, hi)) = s.split_once('-') {
        let lo: usize = lo.trim().parse().context("bad hidden-range start")?;
        let hi: usize = hi.trim().parse().context("bad hidden-range end")?;
        (lo..=hi).collect()
    } else {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse::<usize>().context("bad hidden-range entry"))
            .collect::<Result<_>>()?
    };
    ensure!(!sizes.is_empty(), "hidden-unit range `{s}` is empty");
    Ok(sizes)
}

pub fn parse_target_mode(s: &str) -> Result<TargetMode> {
    match s.trim() {
        "observed" => Ok(TargetMode::Observed),
        "interval" => Ok(TargetMode::Interval),
        other => bail!("unknown target mode `{other}` (expected observed or interval)"),
    }
}

pub fn parse_bic_target(s: &str) -> Result<BicTarget> {
    match s.trim() {
        "train" => Ok(BicTarget::Train),
        "validation" => Ok(BicTarget::Validation),
        other => bail!("unknown criterion data `{other}` (expected train or validation)"),
    }
}

pub fn parse_interval_kind(s: &str) -> Result<IntervalKind> {
    match s.trim() {
        "mean" => Ok(IntervalKind::Mean),
        "prediction" => Ok(IntervalKind::Prediction),
        other => bail!("unknown interval kind `{other}` (expected mean or prediction)"),
    }
}

/// The file form. Every field is optional; missing ones take defaults or
/// must come from flags.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub confidence: Option<f64>,
    pub hidden_range: Option<String>,
    pub balance: Option<String>,
    pub target_mode: Option<String>,
    pub baselines: Option<String>,
    pub bic_on: Option<String>,
    pub interval: Option<String>,
    pub restarts: Option<usize>,
    pub schema: Option<Schema>,
}

impl ConfigFile {
    /// Read a config; relative paths in it are taken from its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ConfigFile =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.train, &mut cfg.validation, &mut cfg.model, &mut cfg.out_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Values given on the command line; they win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub confidence: Option<f64>,
    pub hidden_range: Option<String>,
    pub balance: Option<String>,
    pub target_mode: Option<String>,
    pub baselines: Option<String>,
    pub bic_on: Option<String>,
    pub interval: Option<String>,
    pub restarts: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub model: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Unset means the default when training and the model's value afterwards.
    pub threshold: Option<f64>,
    pub confidence: Option<f64>,
    pub hidden_range: Vec<usize>,
    pub balance: Option<BalanceSpec>,
    pub target_mode: TargetMode,
    pub baselines: Vec<Baseline>,
    pub bic_on: Option<BicTarget>,
    pub interval: IntervalKind,
    pub restarts: usize,
    pub schema: Option<Schema>,
}

pub const DEFAULT_THRESHOLD: f64 = 180.0;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_HIDDEN_RANGE: &str = "0-3";
pub const DEFAULT_RESTARTS: usize = 4;

impl RunConfig {
    pub fn resolve(file: ConfigFile, flags: Overrides) -> Result<Self> {
        let out_dir = flags.out_dir.or(file.out_dir).unwrap_or_else(|| PathBuf::from("."));
        let threshold = flags.threshold.or(file.threshold);
        if let Some(t) = threshold {
            ensure!(t > 0.0, "threshold must be positive, got {t}");
        }
        let confidence = flags.confidence.or(file.confidence);
        if let Some(c) = confidence {
            ensure!(c > 0.0 && c < 1.0, "confidence must lie in (0, 1), got {c}");
        }
        let restarts = flags.restarts.or(file.restarts).unwrap_or(DEFAULT_RESTARTS);
        ensure!(restarts >= 1, "restarts must be at least 1");
        let pick = |a: Option<String>, b: Option<String>| a.or(b);
        Ok(RunConfig {
            train: flags.train.or(file.train),
            validation: flags.validation.or(file.validation),
            model: flags
                .model
                .or(file.model)
                .unwrap_or_else(|| out_dir.join("model.json")),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            threshold,
            confidence,
            hidden_range: parse_hidden_range(
                &pick(flags.hidden_range, file.hidden_range).unwrap_or_else(|| DEFAULT_HIDDEN_RANGE.into()),
            )?,
            balance: match pick(flags.balance, file.balance) {
                Some(s) => parse_balance(&s)?,
                None => None,
            },
            target_mode: match pick(flags.target_mode, file.target_mode) {
                Some(s) => parse_target_mode(&s)?,
                None => TargetMode::default(),
            },
            baselines: match pick(flags.baselines, file.baselines) {
                Some(s) => parse_baselines(&s)?,
                None => vec![Baseline::Pers, Baseline::Lin, Baseline::Logistic],
            },
            bic_on: pick(flags.bic_on, file.bic_on)
                .map(|s| parse_bic_target(&s))
                .transpose()?,
            interval: match pick(flags.interval, file.interval) {
                Some(s) => parse_interval_kind(&s)?,
                None => IntervalKind::default(),
            },
            restarts,
            schema: file.schema,
            out_dir,
        })
    }

    pub fn train_path(&self) -> Result<&Path> {
        self.train.as_deref().context("no training file given (set `train` or --train)")
    }

    pub fn validation_path(&self) -> Result<&Path> {
        self.validation
            .as_deref()
            .context("no validation file given (set `validation` or --validation)")
    }

    pub fn schema(&self) -> Result<&Schema> {
        self.schema.as_ref().context("config has no [schema] table")
    }

    pub fn train_threshold(&self) -> f64 {
        self.threshold.unwrap_or(DEFAULT_THRESHOLD)
    }

    pub fn train_confidence(&self) -> f64 {
        self.confidence.unwrap_or(DEFAULT_CONFIDENCE)
    }

    pub fn has(&self, b: Baseline) -> bool {
        self.baselines.contains(&b)
    }
}
