//! Daily records, feature construction, standardization and rebalancing.
//!
//! Input files hold one row per day. Numeric predictors are plain decimal
//! columns. A categorical forecast parameter such as sky cover is spread over
//! several columns `<param>@0`, `<param>@1`, ... each holding the class label
//! forecast for one equal slice of the day; it is turned into the fraction of
//! hours spent in each class.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::index;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

pub const HOURS_PER_DAY: f64 = 24.0;

/// A categorical forecast parameter and its ordered class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalParameter {
    pub name: String,
    pub classes: Vec<String>,
}

/// Maps input columns to their roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub date: String,
    pub target: String,
    /// Concentration measured at noon on the issuing day.
    pub persistence: String,
    #[serde(default)]
    pub numeric: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<CategoricalParameter>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start_hour: f64,
    pub end_hour: f64,
}

impl Interval {
    pub fn hours(&self) -> f64 {
        self.end_hour - self.start_hour
    }

    /// Slot `index` of `count` equal slices of the day.
    pub fn slice(index: usize, count: usize) -> Interval {
        let width = HOURS_PER_DAY / count as f64;
        Interval {
            start_hour: width * index as f64,
            end_hour: if index + 1 == count {
                HOURS_PER_DAY
            } else {
                width * (index + 1) as f64
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalSeries {
    pub parameter: String,
    pub slots: Vec<(Interval, String)>,
}

/// One day of raw input.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub date: NaiveDate,
    /// Daily maximum of hourly means; absent for days still to be forecast.
    pub target_peak: Option<f64>,
    pub ozone_noon: f64,
    pub numeric: Vec<(String, f64)>,
    pub categorical: Vec<CategoricalSeries>,
}

impl RawRecord {
    pub fn numeric_value(&self, name: &str) -> Option<f64> {
        self.numeric.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    fn target(&self, row: usize, schema_target: &str) -> Result<f64> {
        self.target_peak.ok_or_else(|| Error::MissingValue {
            row,
            column: schema_target.to_string(),
        })
    }
}

/// How incomplete rows are handled while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    /// Target required; rows with any blank cell are skipped and reported.
    Training,
    /// Target optional; a blank predictor is an error naming the column.
    Forecast,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipEntry {
    /// 1-based data row number (the header is row 0).
    pub row: usize,
    pub column: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: usize,
    pub skipped: Vec<SkipEntry>,
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "loaded {} rows", self.loaded)?;
        for s in &self.skipped {
            writeln!(f, "skipped row {}: missing `{}`", s.row, s.column)?;
        }
        Ok(())
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<(Vec<RawRecord>, LoadReport)> {
    load_csv_with(path, schema, LoadMode::Training)
}

pub fn load_csv_with(
    path: impl AsRef<Path>,
    schema: &Schema,
    mode: LoadMode,
) -> Result<(Vec<RawRecord>, LoadReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema, mode)
}

struct ColumnMap {
    date: usize,
    target: Option<usize>,
    persistence: usize,
    numeric: Vec<usize>,
    categorical: Vec<Vec<usize>>,
}

impl ColumnMap {
    fn resolve(header: &csv::StringRecord, schema: &Schema, mode: LoadMode) -> Result<Self> {
        let position: HashMap<&str, usize> =
            header.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
        let find = |name: &str| {
            position
                .get(name)
                .copied()
                .ok_or_else(|| Error::MalformedHeader(format!("missing column `{name}`")))
        };
        let target = match mode {
            LoadMode::Training => Some(find(&schema.target)?),
            LoadMode::Forecast => position.get(schema.target.as_str()).copied(),
        };
        let mut categorical = Vec::with_capacity(schema.categorical.len());
        for param in &schema.categorical {
            let prefix = format!("{}@", param.name);
            let count = header.iter().filter(|h| h.trim().starts_with(&prefix)).count();
            if count == 0 {
                return Err(Error::MalformedHeader(format!(
                    "no `{prefix}<slot>` columns for categorical parameter `{}`",
                    param.name
                )));
            }
            let slots = (0..count)
                .map(|k| find(&format!("{prefix}{k}")))
                .collect::<Result<Vec<_>>>()?;
            categorical.push(slots);
        }
        Ok(ColumnMap {
            date: find(&schema.date)?,
            target,
            persistence: find(&schema.persistence)?,
            numeric: schema
                .numeric
                .iter()
                .map(|n| find(n))
                .collect::<Result<Vec<_>>>()?,
            categorical,
        })
    }
}

enum Cell<T> {
    Value(T),
    Blank,
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<Cell<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(Cell::Blank);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Cell::Value(v)),
        _ => Err(Error::UnparsableNumber {
            row,
            column: column.to_string(),
        }),
    }
}

fn parse_concentration(raw: &str, row: usize, column: &str) -> Result<Cell<f64>> {
    match parse_number(raw, row, column)? {
        Cell::Value(v) if v < 0.0 => Err(Error::NegativeConcentration {
            row,
            column: column.to_string(),
        }),
        other => Ok(other),
    }
}

/// Parse records from any reader. Rows come back in file order.
pub fn read_csv<R: Read>(
    reader: R,
    schema: &Schema,
    mode: LoadMode,
) -> Result<(Vec<RawRecord>, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return Err(Error::EmptyFile);
    }
    let map = ColumnMap::resolve(&header, schema, mode)?;

    let mut records = Vec::new();
    let mut report = LoadReport::default();
    let mut rows_seen = 0;
    for (i, result) in rdr.records().enumerate() {
        let row = i + 1;
        rows_seen += 1;
        let fields = result?;
        let cell = |idx: usize| fields.get(idx).unwrap_or("");
        let mut missing: Option<String> = None;
        let mut note_missing = |column: &str| -> Result<()> {
            match mode {
                LoadMode::Training => {
                    missing.get_or_insert_with(|| column.to_string());
                    Ok(())
                }
                LoadMode::Forecast => Err(Error::MissingValue {
                    row,
                    column: column.to_string(),
                }),
            }
        };

        let date_raw = cell(map.date).trim();
        let date = if date_raw.is_empty() {
            note_missing(&schema.date)?;
            None
        } else {
            Some(
                NaiveDate::parse_from_str(date_raw, "%Y-%m-%d").map_err(|_| {
                    Error::UnparsableDate {
                        row,
                        value: date_raw.to_string(),
                    }
                })?,
            )
        };

        let target_peak = match map.target {
            Some(idx) => match parse_concentration(cell(idx), row, &schema.target)? {
                Cell::Value(v) => Some(v),
                Cell::Blank => {
                    if mode == LoadMode::Training {
                        note_missing(&schema.target)?;
                    }
                    None
                }
            },
            None => None,
        };

        let ozone_noon = match parse_concentration(cell(map.persistence), row, &schema.persistence)? {
            Cell::Value(v) => Some(v),
            Cell::Blank => {
                note_missing(&schema.persistence)?;
                None
            }
        };

        let mut numeric = Vec::with_capacity(schema.numeric.len());
        for (name, &idx) in schema.numeric.iter().zip(&map.numeric) {
            match parse_number(cell(idx), row, name)? {
                Cell::Value(v) => numeric.push((name.clone(), v)),
                Cell::Blank => note_missing(name)?,
            }
        }

        let mut categorical = Vec::with_capacity(schema.categorical.len());
        for (param, slots) in schema.categorical.iter().zip(&map.categorical) {
            let mut series = CategoricalSeries {
                parameter: param.name.clone(),
                slots: Vec::with_capacity(slots.len()),
            };
            for (k, &idx) in slots.iter().enumerate() {
                let label = cell(idx).trim();
                if label.is_empty() {
                    note_missing(&format!("{}@{k}", param.name))?;
                } else {
                    series
                        .slots
                        .push((Interval::slice(k, slots.len()), label.to_string()));
                }
            }
            categorical.push(series);
        }

        if let Some(column) = missing {
            report.skipped.push(SkipEntry { row, column });
            continue;
        }
        records.push(RawRecord {
            date: date.expect("checked above"),
            target_peak,
            ozone_noon: ozone_noon.expect("checked above"),
            numeric,
            categorical,
        });
    }
    if rows_seen == 0 {
        return Err(Error::EmptyFile);
    }
    report.loaded = records.len();
    Ok((records, report))
}

/// Write records in the layout `read_csv` accepts. Slot columns follow the
/// slot count of the first record; a missing target is left blank.
pub fn write_csv<W: std::io::Write>(records: &[RawRecord], schema: &Schema, writer: W) -> Result<()> {
    let slot_counts: Vec<usize> = schema
        .categorical
        .iter()
        .map(|p| {
            records
                .first()
                .and_then(|r| r.categorical.iter().find(|s| s.parameter == p.name))
                .map_or(0, |s| s.slots.len())
        })
        .collect();
    let mut header = vec![schema.date.clone(), schema.target.clone(), schema.persistence.clone()];
    header.extend(schema.numeric.iter().cloned());
    for (p, &count) in schema.categorical.iter().zip(&slot_counts) {
        header.extend((0..count).map(|k| format!("{}@{k}", p.name)));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.date.format("%Y-%m-%d").to_string(),
            r.target_peak.map(|v| v.to_string()).unwrap_or_default(),
            r.ozone_noon.to_string(),
        ];
        for name in &schema.numeric {
            let v = r
                .numeric_value(name)
                .ok_or_else(|| Error::MalformedHeader(format!("record lacks `{name}`")))?;
            row.push(v.to_string());
        }
        for (p, &count) in schema.categorical.iter().zip(&slot_counts) {
            let series = r
                .categorical
                .iter()
                .find(|s| s.parameter == p.name)
                .ok_or_else(|| Error::UnknownParameter(p.name.clone()))?;
            if series.slots.len() != count {
                return Err(Error::DimensionMismatch {
                    expected: count,
                    got: series.slots.len(),
                });
            }
            row.extend(series.slots.iter().map(|(_, label)| label.clone()));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<records>", e))?;
    Ok(())
}

/// Fraction of the day spent in each class of `parameter`, in class order.
pub fn encode_class_frequencies(
    record: &RawRecord,
    parameter: &str,
    classes: &[String],
) -> Result<Vec<f64>> {
    let series = record
        .categorical
        .iter()
        .find(|s| s.parameter == parameter)
        .ok_or_else(|| Error::UnknownParameter(parameter.to_string()))?;
    let mut fractions = vec![0.0; classes.len()];
    for (interval, label) in &series.slots {
        let k = classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::UnknownClassLabel {
                parameter: parameter.to_string(),
                label: label.clone(),
            })?;
        fractions[k] += interval.hours() / HOURS_PER_DAY;
    }
    Ok(fractions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Raw,
    ClassFrequency { parameter: String, class: String },
    Persistence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Validation,
}

/// Predictor columns derived from a schema.
///
/// The last class of every categorical parameter is left out: the fractions
/// of one parameter sum to one and would otherwise duplicate the intercept.
pub fn feature_columns(schema: &Schema) -> Vec<Column> {
    let mut columns: Vec<Column> = schema
        .numeric
        .iter()
        .map(|n| Column {
            name: n.clone(),
            kind: ColumnKind::Raw,
        })
        .collect();
    columns.push(Column {
        name: schema.persistence.clone(),
        kind: ColumnKind::Persistence,
    });
    for param in &schema.categorical {
        let kept = param.classes.len().saturating_sub(1);
        for class in &param.classes[..kept] {
            columns.push(Column {
                name: format!("{}={}", param.name, class),
                kind: ColumnKind::ClassFrequency {
                    parameter: param.name.clone(),
                    class: class.clone(),
                },
            });
        }
    }
    columns
}

/// Predictor vector of one record, in `feature_columns` order.
pub fn feature_vector(record: &RawRecord, schema: &Schema) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(feature_columns(schema).len());
    for name in &schema.numeric {
        let v = record
            .numeric_value(name)
            .ok_or_else(|| Error::MalformedHeader(format!("record lacks `{name}`")))?;
        x.push(v);
    }
    x.push(record.ozone_noon);
    for param in &schema.categorical {
        let fractions = encode_class_frequencies(record, &param.name, &param.classes)?;
        let kept = fractions.len().saturating_sub(1);
        x.extend_from_slice(&fractions[..kept]);
    }
    Ok(x)
}

/// Mean and standard deviation of one column, recorded at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

impl ColumnStats {
    pub fn fit(values: &[f64]) -> Self {
        ColumnStats {
            mean: linalg::mean(values),
            std: linalg::sample_std(values),
        }
    }

    pub fn standardize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn restore(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    fn is_degenerate(&self) -> bool {
        !(self.std > 1e-12 * self.mean.abs().max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub columns: Vec<ColumnStats>,
}

impl Normalization {
    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.columns)
            .map(|(v, s)| s.standardize(*v))
            .collect()
    }

    pub fn restore_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.columns)
            .map(|(z, s)| s.restore(*z))
            .collect()
    }

    /// Standardize another table (typically validation rows) with these statistics.
    pub fn apply(&self, table: &FeatureTable) -> Result<FeatureTable> {
        if table.width() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: table.width(),
            });
        }
        let mut out = table.clone();
        out.rows = table.rows.iter().map(|r| self.apply_row(r)).collect();
        out.normalization = Some(self.clone());
        Ok(out)
    }
}

/// Predictor matrix, one row per day, with targets and column metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// One per row, or empty for tables built from bare arrays.
    pub dates: Vec<NaiveDate>,
    pub role: Role,
    pub normalization: Option<Normalization>,
}

impl FeatureTable {
    /// Table over unnamed raw columns `x0, x1, ...`.
    pub fn from_xy(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: targets.len(),
            });
        }
        let width = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch {
                expected: width,
                got: bad.len(),
            });
        }
        Ok(FeatureTable {
            columns: (0..width)
                .map(|i| Column {
                    name: format!("x{i}"),
                    kind: ColumnKind::Raw,
                })
                .collect(),
            rows,
            targets,
            dates: Vec::new(),
            role: Role::Train,
            normalization: None,
        })
    }

    pub fn from_records(records: &[RawRecord], schema: &Schema, role: Role) -> Result<Self> {
        let mut rows = Vec::with_capacity(records.len());
        let mut targets = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            rows.push(feature_vector(r, schema)?);
            targets.push(r.target(i + 1, &schema.target)?);
        }
        Ok(FeatureTable {
            columns: feature_columns(schema),
            rows,
            targets,
            dates: records.iter().map(|r| r.date).collect(),
            role,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Copy with the targets replaced.
    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Self> {
        if targets.len() != self.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: targets.len(),
            });
        }
        let mut out = self.clone();
        out.targets = targets;
        Ok(out)
    }
}

/// Standardize every column of a train table with its own mean and sample std.
pub fn normalize_fit(table: &FeatureTable) -> Result<(FeatureTable, Normalization)> {
    if table.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: table.len(),
        });
    }
    let mut columns = Vec::with_capacity(table.width());
    for (j, col) in table.columns.iter().enumerate() {
        let stats = ColumnStats::fit(&table.column(j));
        if stats.is_degenerate() {
            return Err(Error::ConstantColumn(col.name.clone()));
        }
        columns.push(stats);
    }
    let norm = Normalization { columns };
    let out = norm.apply(table)?;
    Ok((out, norm))
}

/// Undersampling of below-threshold days: keep `multiplier * a * exp(b * threshold)`
/// of them per exceedance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceSpec {
    pub threshold: f64,
    pub a: f64,
    pub b: f64,
    pub multiplier: u32,
}

impl BalanceSpec {
    pub fn new(threshold: f64, a: f64, b: f64, multiplier: u32) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidBalance(format!("a must be positive, got {a}")));
        }
        if !(b >= 0.0) {
            return Err(Error::InvalidBalance(format!("b must be non-negative, got {b}")));
        }
        if multiplier < 1 {
            return Err(Error::InvalidBalance("multiplier must be at least 1".into()));
        }
        Ok(BalanceSpec {
            threshold,
            a,
            b,
            multiplier,
        })
    }

    pub fn ratio(&self) -> f64 {
        self.a * (self.b * self.threshold).exp()
    }

    /// Below-threshold records wanted for `above` exceedances, before clamping.
    /// The multiplier scales the rounded single-size quota.
    pub fn quota(&self, above: usize) -> usize {
        self.multiplier as usize * (self.ratio() * above as f64).round_ties_even() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Balanced {
    pub records: Vec<RawRecord>,
    /// Indices into the input, ascending.
    pub retained: Vec<usize>,
}

impl Balanced {
    pub fn write_manifest<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row_index"])?;
        for i in &self.retained {
            w.write_record([i.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<manifest>", e))?;
        Ok(())
    }
}

/// Keep every record at or above the threshold and a seeded uniform sample
/// of the others. Output preserves input order.
pub fn balance(records: &[RawRecord], spec: &BalanceSpec, seed: u64) -> Result<Balanced> {
    let mut above = Vec::new();
    let mut below = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let peak = r.target(i + 1, "target")?;
        if peak >= spec.threshold {
            above.push(i);
        } else {
            below.push(i);
        }
    }
    if above.is_empty() {
        return Err(Error::NoExceedances);
    }
    let keep = spec.quota(above.len()).min(below.len());
    let mut rng = rng::stream(seed, 0);
    let picked = index::sample(&mut rng, below.len(), keep);
    let mut retained: Vec<usize> = above
        .into_iter()
        .chain(picked.into_iter().map(|k| below[k]))
        .collect();
    retained.sort_unstable();
    Ok(Balanced {
        records: retained.iter().map(|&i| records[i].clone()).collect(),
        retained,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anova {
    pub f: f64,
    pub p_value: f64,
    pub df_between: f64,
    pub df_within: f64,
}

/// One-way ANOVA between two groups.
pub fn anova_check(group_a: &[f64], group_b: &[f64]) -> Result<Anova> {
    if group_a.len() < 2 || group_b.len() < 2 {
        return Err(Error::GroupTooSmall);
    }
    let n = (group_a.len() + group_b.len()) as f64;
    let grand = (group_a.iter().sum::<f64>() + group_b.iter().sum::<f64>()) / n;
    let (ma, mb) = (linalg::mean(group_a), linalg::mean(group_b));
    let ssb = group_a.len() as f64 * (ma - grand).powi(2) + group_b.len() as f64 * (mb - grand).powi(2);
    let ssw: f64 = group_a.iter().map(|v| (v - ma).powi(2)).sum::<f64>()
        + group_b.iter().map(|v| (v - mb).powi(2)).sum::<f64>();
    let df_within = n - 2.0;
    let f = if ssb == 0.0 {
        0.0
    } else {
        ssb / (ssw / df_within)
    };
    let p_value = if f.is_infinite() {
        0.0
    } else {
        FisherSnedecor::new(1.0, df_within)
            .map_err(|e| Error::OutOfDomain(e.to_string()))?
            .sf(f)
    };
    Ok(Anova {
        f,
        p_value,
        df_between: 1.0,
        df_within,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn schema() -> Schema {
        Schema {
            date: "date".into(),
            target: "peak".into(),
            persistence: "o3_noon".into(),
            numeric: vec!["t_min".into(), "t_max".into()],
            categorical: vec![CategoricalParameter {
                name: "sky".into(),
                classes: vec!["clear".into(), "cloudy".into(), "rain".into()],
            }],
        }
    }

    const GOOD: &str = "\
date,peak,o3_noon,t_min,t_max,sky@0,sky@1
2003-06-01,120,80,12,25,clear,clear
2003-06-02,150,95,14,29,clear,cloudy
2003-06-03,190,110,16,33,cloudy,rain
";

    #[test]
    fn loads_well_formed_file() {
        let (recs, report) = read_csv(GOOD.as_bytes(), &schema(), LoadMode::Training).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(report.skipped.is_empty());
        assert_eq!(recs[2].target_peak, Some(190.0));
        assert_eq!(recs[1].numeric_value("t_max"), Some(29.0));
        assert_eq!(recs[0].date, NaiveDate::from_ymd_opt(2003, 6, 1).unwrap());
    }

    #[test]
    fn write_then_read_round_trips() {
        let (recs, _) = read_csv(GOOD.as_bytes(), &schema(), LoadMode::Training).unwrap();
        let mut buf = Vec::new();
        write_csv(&recs, &schema(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), GOOD);
        let (back, _) = read_csv(buf.as_slice(), &schema(), LoadMode::Training).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn blank_target_is_skipped_and_reported() {
        let text = GOOD.replace("2003-06-02,150", "2003-06-02,");
        let (recs, report) = read_csv(text.as_bytes(), &schema(), LoadMode::Training).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(
            report.skipped,
            vec![SkipEntry {
                row: 2,
                column: "peak".into()
            }]
        );
        assert_eq!(report.to_string(), "loaded 2 rows\nskipped row 2: missing `peak`\n");
    }

    #[test]
    fn missing_declared_column_is_malformed() {
        let text = GOOD.replace("t_max", "tmax");
        let err = read_csv(text.as_bytes(), &schema(), LoadMode::Training).unwrap_err();
        assert!(matches!(err, Error::MalformedHeader(m) if m.contains("t_max")));
    }

    #[test]
    fn bad_number_and_empty_file() {
        let text = GOOD.replace(",25,", ",warm,");
        let err = read_csv(text.as_bytes(), &schema(), LoadMode::Training).unwrap_err();
        assert!(matches!(err, Error::UnparsableNumber { row: 1, ref column } if column == "t_max"));
        let header_only = GOOD.lines().next().unwrap().to_string() + "\n";
        assert!(matches!(
            read_csv(header_only.as_bytes(), &schema(), LoadMode::Training),
            Err(Error::EmptyFile)
        ));
        assert!(matches!(
            read_csv("".as_bytes(), &schema(), LoadMode::Training),
            Err(Error::EmptyFile)
        ));
    }

    #[test]
    fn forecast_mode_names_missing_predictor() {
        let text = "date,o3_noon,t_min,t_max,sky@0,sky@1\n2003-06-04,100,,30,clear,clear\n";
        let err = read_csv(text.as_bytes(), &schema(), LoadMode::Forecast).unwrap_err();
        assert!(matches!(err, Error::MissingValue { ref column, .. } if column == "t_min"));
        let ok = "date,o3_noon,t_min,t_max,sky@0,sky@1\n2003-06-04,100,15,30,clear,clear\n";
        let (recs, _) = read_csv(ok.as_bytes(), &schema(), LoadMode::Forecast).unwrap();
        assert_eq!(recs[0].target_peak, None);
    }

    fn record_with(labels: &[&str]) -> RawRecord {
        RawRecord {
            date: NaiveDate::from_ymd_opt(2003, 7, 1).unwrap(),
            target_peak: Some(100.0),
            ozone_noon: 80.0,
            numeric: vec![],
            categorical: vec![CategoricalSeries {
                parameter: "sky".into(),
                slots: labels
                    .iter()
                    .enumerate()
                    .map(|(k, l)| (Interval::slice(k, labels.len()), l.to_string()))
                    .collect(),
            }],
        }
    }

    fn classes(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn class_frequencies() {
        let whole = encode_class_frequencies(&record_with(&["c1"]), "sky", &classes(6)).unwrap();
        assert_eq!(whole, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let half = encode_class_frequencies(&record_with(&["c1", "c2"]), "sky", &classes(6)).unwrap();
        assert_eq!(&half[..3], &[0.5, 0.5, 0.0]);

        let eight = ["c1", "c1", "c1", "c2", "c2", "c2", "c3", "c3"];
        let f = encode_class_frequencies(&record_with(&eight), "sky", &classes(3)).unwrap();
        assert_abs_diff_eq!(f[0], 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(f[2], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn unknown_label_is_rejected() {
        let err = encode_class_frequencies(&record_with(&["fog"]), "sky", &classes(3)).unwrap_err();
        assert!(matches!(err, Error::UnknownClassLabel { ref label, .. } if label == "fog"));
    }

    proptest! {
        #[test]
        fn frequencies_sum_to_one(labels in prop::collection::vec(0usize..4, 1..30)) {
            let names: Vec<String> = labels.iter().map(|k| format!("c{}", k + 1)).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let f = encode_class_frequencies(&record_with(&refs), "sky", &classes(4)).unwrap();
            prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn normalize_round_trip(col in prop::collection::vec(-1e3f64..1e3, 3..40)) {
            let spread = col.iter().cloned().fold(f64::MIN, f64::max) - col.iter().cloned().fold(f64::MAX, f64::min);
            prop_assume!(spread > 1e-3);
            let table = FeatureTable::from_xy(col.iter().map(|v| vec![*v]).collect(), vec![0.0; col.len()]).unwrap();
            let (z, norm) = normalize_fit(&table).unwrap();
            let zc = z.column(0);
            prop_assert!(linalg::mean(&zc).abs() < 1e-9);
            prop_assert!((linalg::sample_std(&zc) - 1.0).abs() < 1e-9);
            for (orig, row) in col.iter().zip(&z.rows) {
                prop_assert!((norm.restore_row(row)[0] - orig).abs() < 1e-9 * orig.abs().max(1.0));
            }
        }

        #[test]
        fn quota_monotone_in_threshold(t1 in 0.0f64..200.0, dt in 0.0f64..100.0, n_a in 1usize..20) {
            let lo = BalanceSpec::new(t1, 1.0, 0.0125, 1).unwrap();
            let hi = BalanceSpec::new(t1 + dt, 1.0, 0.0125, 1).unwrap();
            prop_assert!(hi.quota(n_a) >= lo.quota(n_a));
        }
    }

    #[test]
    fn normalize_examples() {
        let t = FeatureTable::from_xy(vec![vec![1.0], vec![2.0], vec![3.0]], vec![0.0; 3]).unwrap();
        let (z, norm) = normalize_fit(&t).unwrap();
        assert_eq!(z.column(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(norm.columns[0], ColumnStats { mean: 2.0, std: 1.0 });

        let (again, _) = normalize_fit(&z).unwrap();
        for (a, b) in again.rows.iter().zip(&z.rows) {
            assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-9);
        }

        let c = FeatureTable::from_xy(vec![vec![5.0], vec![5.0], vec![5.0]], vec![0.0; 3]).unwrap();
        assert!(matches!(normalize_fit(&c), Err(Error::ConstantColumn(n)) if n == "x0"));
        let one = FeatureTable::from_xy(vec![vec![5.0]], vec![0.0]).unwrap();
        assert!(matches!(normalize_fit(&one), Err(Error::TooFewRows { .. })));
    }

    #[test]
    fn validation_rows_use_train_statistics() {
        let t = FeatureTable::from_xy(vec![vec![1.0], vec![2.0], vec![3.0]], vec![0.0; 3]).unwrap();
        let (_, norm) = normalize_fit(&t).unwrap();
        let mut v = FeatureTable::from_xy(vec![vec![4.0], vec![0.0]], vec![0.0; 2]).unwrap();
        v.role = Role::Validation;
        let z = norm.apply(&v).unwrap();
        assert_eq!(z.column(0), vec![2.0, -2.0]);
    }

    fn peaks(values: &[f64]) -> Vec<RawRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| RawRecord {
                date: NaiveDate::from_ymd_opt(2000, 1, 1).unwrap() + chrono::Days::new(i as u64),
                target_peak: Some(*v),
                ozone_noon: 50.0,
                numeric: vec![],
                categorical: vec![],
            })
            .collect()
    }

    #[test]
    fn balance_quota_examples() {
        let zero = BalanceSpec::new(0.0, 1.0, 0.0125, 1).unwrap();
        assert_eq!(zero.ratio(), 1.0);
        assert_eq!(zero.quota(7), 7);

        let mlp2 = BalanceSpec::new(180.0, 1.0, 0.0125, 1).unwrap();
        assert_abs_diff_eq!(mlp2.ratio(), 9.487735836358526, epsilon = 1e-12);
        assert_eq!(mlp2.quota(5), 47);
        let mlp3 = BalanceSpec::new(180.0, 1.0, 0.0125, 2).unwrap();
        assert_eq!(mlp3.quota(5), 94);
    }

    #[test]
    fn balance_keeps_exceedances_and_is_deterministic() {
        let mut values: Vec<f64> = (0..600).map(|i| 60.0 + (i % 110) as f64).collect();
        for k in [10, 100, 250, 400, 599] {
            values[k] = 185.0 + k as f64 / 100.0;
        }
        let recs = peaks(&values);
        let spec = BalanceSpec::new(180.0, 1.0, 0.0125, 1).unwrap();
        let a = balance(&recs, &spec, 7).unwrap();
        let b = balance(&recs, &spec, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 52);
        for k in [10, 100, 250, 400, 599] {
            assert!(a.retained.contains(&k));
        }
        assert!(a.retained.windows(2).all(|w| w[0] < w[1]));
        let c = balance(&recs, &spec, 8).unwrap();
        assert_ne!(a.retained, c.retained);

        let mut manifest = Vec::new();
        a.write_manifest(&mut manifest).unwrap();
        let text = String::from_utf8(manifest).unwrap();
        assert_eq!(text.lines().count(), 53);
        assert_eq!(text.lines().next(), Some("row_index"));
    }

    #[test]
    fn balance_clamps_and_requires_exceedance() {
        let recs = peaks(&[200.0, 10.0, 20.0]);
        let spec = BalanceSpec::new(180.0, 1.0, 0.0125, 1).unwrap();
        assert_eq!(balance(&recs, &spec, 1).unwrap().records.len(), 3);
        assert!(matches!(
            balance(&peaks(&[10.0, 20.0]), &spec, 1),
            Err(Error::NoExceedances)
        ));
        assert!(BalanceSpec::new(180.0, 0.0, 0.0, 1).is_err());
        assert!(BalanceSpec::new(180.0, 1.0, -1.0, 1).is_err());
        assert!(BalanceSpec::new(180.0, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn anova_examples() {
        let same = anova_check(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(same.f, 0.0);
        assert_abs_diff_eq!(same.p_value, 1.0, epsilon = 1e-12);

        let apart = anova_check(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_abs_diff_eq!(apart.f, 13.5, epsilon = 1e-12);
        assert_eq!((apart.df_between, apart.df_within), (1.0, 4.0));
        assert!(apart.p_value > 0.0 && apart.p_value < 0.05);

        assert!(matches!(anova_check(&[1.0], &[1.0, 2.0]), Err(Error::GroupTooSmall)));
    }

    #[test]
    fn feature_vector_drops_reference_class() {
        let (recs, _) = read_csv(GOOD.as_bytes(), &schema(), LoadMode::Training).unwrap();
        let cols = feature_columns(&schema());
        let names: Vec<&str> = cols.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["t_min", "t_max", "o3_noon", "sky=clear", "sky=cloudy"]);
        assert_eq!(feature_vector(&recs[2], &schema()).unwrap(), vec![16.0, 33.0, 110.0, 0.0, 0.5]);
        let table = FeatureTable::from_records(&recs, &schema(), Role::Train).unwrap();
        assert_eq!(table.targets, vec![120.0, 150.0, 190.0]);
        assert_eq!(table.dates.len(), 3);
    }
}
