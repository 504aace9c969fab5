use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use ozonecast::dataset::{self, RawRecord};

use super::train_records;
use crate::config::RunConfig;
use crate::files;

pub const ARCHIVE_FILE: &str = "archive.csv";

/// Append `season` to the training archive in the output directory, train
/// on the result, and store a copy of the model named by its content hash.
/// Returns the path of that copy.
pub fn retrain(cfg: &RunConfig, season: &Path) -> Result<PathBuf> {
    let schema = cfg.schema()?;
    let archive_path = cfg.out_dir.join(ARCHIVE_FILE);
    let source = if archive_path.exists() {
        archive_path.clone()
    } else {
        cfg.train_path()?.to_path_buf()
    };
    let (mut archive, _) =
        dataset::load_csv(&source, schema).with_context(|| format!("loading archive {}", source.display()))?;
    let (new, report) =
        dataset::load_csv(season, schema).with_context(|| format!("loading season {}", season.display()))?;
    if !report.skipped.is_empty() {
        eprint!("{report}");
    }
    merge(&mut archive, new)?;
    files::write_with(&archive_path, |w| Ok(dataset::write_csv(&archive, schema, w)?))?;

    let bundle = train_records(cfg, schema, archive)?;
    let json = bundle.to_json()?;
    let digest = hex::encode(Sha256::digest(json.as_bytes()));
    let versioned = cfg.out_dir.join(format!("model-{}.json", &digest[..16]));
    files::write_with(&versioned, |w| {
        use std::io::Write as _;
        w.write_all(json.as_bytes())?;
        Ok(())
    })?;
    println!("{}", versioned.display());
    Ok(versioned)
}

/// Date-ordered union; any date present twice is a conflict.
fn merge(archive: &mut Vec<RawRecord>, season: Vec<RawRecord>) -> Result<()> {
    let mut seen: BTreeSet<_> = BTreeSet::new();
    for r in archive.iter().chain(&season) {
        if !seen.insert(r.date) {
            bail!("archive conflict: date {} appears more than once", r.date);
        }
    }
    archive.extend(season);
    archive.sort_by_key(|r| r.date);
    Ok(())
}
