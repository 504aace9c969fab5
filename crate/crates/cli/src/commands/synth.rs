use std::io::Write as _;

use anyhow::Result;

use ozonecast::dataset;
use ozonecast::synth::{self, SynthConfig};

use crate::config::{ConfigFile, RunConfig};
use crate::files;

/// Writes `train.csv`, `validation.csv`, `forecast_days.csv` (validation days
/// without the target) and `config.toml` into the output directory.
pub fn synth(cfg: &RunConfig) -> Result<()> {
    let season = synth::generate(&SynthConfig {
        seed: cfg.seed,
        threshold: cfg.train_threshold(),
        ..SynthConfig::default()
    })?;
    let schema = synth::schema();
    let out = &cfg.out_dir;
    files::write_with(&out.join("train.csv"), |w| Ok(dataset::write_csv(&season.train, &schema, w)?))?;
    files::write_with(&out.join("validation.csv"), |w| {
        Ok(dataset::write_csv(&season.validation, &schema, w)?)
    })?;
    let blind: Vec<_> = season
        .validation
        .iter()
        .cloned()
        .map(|mut r| {
            r.target_peak = None;
            r
        })
        .collect();
    files::write_with(&out.join("forecast_days.csv"), |w| Ok(dataset::write_csv(&blind, &schema, w)?))?;

    let config = ConfigFile {
        train: Some("train.csv".into()),
        validation: Some("validation.csv".into()),
        model: Some("model.json".into()),
        out_dir: Some(".".into()),
        seed: Some(cfg.seed),
        threshold: Some(cfg.train_threshold()),
        bic_on: Some("train".into()),
        schema: Some(schema),
        ..ConfigFile::default()
    };
    files::write_with(&out.join("config.toml"), |w| {
        w.write_all(toml::to_string(&config)?.as_bytes())?;
        Ok(())
    })
}
