//! Stay records from CSV files, and JSON/CSV persistence of fitted models,
//! reports and goodness-of-fit tables.
//!
//! A stay file has a header row and one admission per line (comma separated,
//! RFC 4180 quoting). The length of stay is a decimal number of days in the
//! schema's `los_column`; a file may instead carry a `days` and an `hours`
//! column, combined as `days + hours / 24`. Columns not named by the schema
//! are ignored. Empty cells and `NA` are missing values.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::covariates::{FeatureSchema, FieldKind, FieldValue, MissingPolicy};
use crate::error::{LosError, Result};
use crate::estimation::{FitConfig, FitResult};
use crate::gof::GofRow;
use crate::mixture::{LosData, MixtureModel};

/// Version of the JSON documents written here.
pub const FORMAT_VERSION: u32 = 1;

/// Column pair accepted in place of a decimal length of stay.
pub const DAYS_COLUMN: &str = "days";
pub const HOURS_COLUMN: &str = "hours";

/// One admission: the length of stay (days) and the raw schema fields, in
/// schema order. `row` is the 1-based data row in the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct StayRecord {
    pub row: usize,
    pub los_days: Option<f64>,
    pub features: Vec<FieldValue>,
}

enum LosSource {
    Decimal(usize),
    DaysHours(usize, usize),
    Absent,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "NA"
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| LosError::Parse {
        row,
        reason: format!("`{cell}` in column `{column}` is not a number"),
    })
}

/// Read stays from `path`. Every record must have a length of stay.
pub fn read_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Vec<StayRecord>> {
    read_csv_with(path, schema, true)
}

/// Read stays from `path`; with `require_los` false the length-of-stay
/// column may be absent or empty (as for records to predict).
pub fn read_csv_with(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    require_los: bool,
) -> Result<Vec<StayRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| LosError::io(path, e))?;
    parse_csv(file, schema, require_los)
}

/// Parse stay records from any reader.
pub fn parse_csv<R: Read>(reader: R, schema: &FeatureSchema, require_los: bool) -> Result<Vec<StayRecord>> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| LosError::Parse { row: 0, reason: format!("header: {e}") })?
        .clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let los = match (col(&schema.los_column), col(DAYS_COLUMN), col(HOURS_COLUMN)) {
        (Some(j), _, _) => LosSource::Decimal(j),
        (None, Some(d), Some(h)) => LosSource::DaysHours(d, h),
        _ if require_los => {
            return Err(LosError::Schema {
                row: 0,
                field: schema.los_column.clone(),
                reason: format!("header has neither `{}` nor `{DAYS_COLUMN}`/`{HOURS_COLUMN}`", schema.los_column),
            })
        }
        _ => LosSource::Absent,
    };
    let field_cols = schema
        .fields
        .iter()
        .map(|f| {
            col(&f.name).ok_or_else(|| LosError::Schema {
                row: 0,
                field: f.name.clone(),
                reason: "column missing from the header".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| LosError::Parse { row, reason: e.to_string() })?;
        let cell = |j: usize| rec.get(j).unwrap_or("");
        let mut missing: Option<String> = None;

        let los_days = match los {
            LosSource::Decimal(j) if !is_missing(cell(j)) => Some(parse_number(cell(j), row, &schema.los_column)?),
            LosSource::DaysHours(d, h) if !is_missing(cell(d)) => {
                let days = parse_number(cell(d), row, DAYS_COLUMN)?;
                let hours = if is_missing(cell(h)) { 0.0 } else { parse_number(cell(h), row, HOURS_COLUMN)? };
                Some(days + hours / 24.0)
            }
            LosSource::Absent => None,
            _ => {
                if require_los {
                    missing = Some(schema.los_column.clone());
                }
                None
            }
        };
        if let Some(y) = los_days {
            if !(y > 0.0 && y.is_finite()) {
                return Err(LosError::DataDomain {
                    row,
                    reason: format!("length of stay must be positive and finite, got {y}"),
                });
            }
        }

        let mut features = Vec::with_capacity(schema.fields.len());
        for (k, (f, &j)) in schema.fields.iter().zip(&field_cols).enumerate() {
            let raw = cell(j);
            let value = if is_missing(raw) {
                missing.get_or_insert_with(|| f.name.clone());
                FieldValue::Missing
            } else {
                match f.kind {
                    FieldKind::Numeric => FieldValue::Numeric(parse_number(raw, row, &f.name)?),
                    FieldKind::Categorical => FieldValue::Category(raw.trim().to_string()),
                }
            };
            schema.check_value(k, &value, row)?;
            features.push(value);
        }
        if let Some(field) = missing {
            match schema.missing {
                MissingPolicy::Reject => {
                    return Err(LosError::Schema { row, field, reason: "missing value".into() })
                }
                MissingPolicy::DropRow => continue,
            }
        }
        out.push(StayRecord { row, los_days, features });
    }
    Ok(out)
}

/// Write records with the schema's columns. Numbers use the shortest
/// representation that parses back to the same value.
pub fn write_csv(path: impl AsRef<Path>, schema: &FeatureSchema, records: &[StayRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| LosError::io(path, e))?;
    write_records(file, schema, records).map_err(|e| format_error(path, e))
}

fn write_records<W: Write>(w: W, schema: &FeatureSchema, records: &[StayRecord]) -> std::result::Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![schema.los_column.clone()];
    header.extend(schema.fields.iter().map(|f| f.name.clone()));
    wtr.write_record(&header)?;
    for r in records {
        let mut line = vec![r.los_days.map(|v| v.to_string()).unwrap_or_default()];
        line.extend(r.features.iter().map(|v| v.to_string()));
        wtr.write_record(&line)?;
    }
    wtr.flush()?;
    Ok(())
}

fn format_error(path: &Path, e: impl std::fmt::Display) -> LosError {
    LosError::Format { path: path.to_path_buf(), reason: e.to_string() }
}

/// Records to model input: undeclared categorical levels are taken from the
/// records, then the covariates are encoded. Returns the resolved schema,
/// which later files must be encoded with.
pub fn prepare(records: &[StayRecord], schema: &FeatureSchema) -> Result<(LosData, FeatureSchema)> {
    let resolved = schema.resolve_levels(records)?;
    let design = resolved.encode(records)?;
    Ok((LosData::from_records(records, design)?, resolved))
}

/// Non-reproducible facts about a run, kept apart so that everything else in
/// a report is a function of the inputs and the seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    /// Seconds since the Unix epoch when the report was written.
    pub created_unix: u64,
    pub elapsed_seconds: f64,
}

impl RunMetadata {
    pub fn now(elapsed_seconds: f64) -> Self {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunMetadata { created_unix, elapsed_seconds }
    }
}

/// A fit as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub format_version: u32,
    #[serde(flatten)]
    pub fit: FitResult,
    pub n_obs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<FeatureSchema>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<FitConfig>,
    #[serde(default)]
    pub gof: Vec<GofRow>,
    #[serde(default)]
    pub metadata: RunMetadata,
}

impl FitReport {
    /// Report of `fit` on `n_obs` stays; per-observation posteriors are
    /// dropped.
    pub fn new(mut fit: FitResult, n_obs: usize) -> Self {
        fit.responsibilities = None;
        fit.count_posterior = None;
        FitReport {
            format_version: FORMAT_VERSION,
            fit,
            n_obs,
            schema: None,
            config: None,
            gof: Vec::new(),
            metadata: RunMetadata::default(),
        }
    }
}

#[derive(Serialize)]
struct ModelDocRef<'a> {
    format_version: u32,
    model: &'a MixtureModel,
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| LosError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| format_error(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| LosError::io(path, e))
}

fn read_json_value(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| LosError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| format_error(path, e))
}

pub fn write_report(path: impl AsRef<Path>, report: &FitReport) -> Result<()> {
    if !report.fit.loglik.is_finite() {
        return Err(LosError::Config(format!("report log-likelihood is {}", report.fit.loglik)));
    }
    write_json(path, report)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<FitReport> {
    let path = path.as_ref();
    let v = read_json_value(path)?;
    serde_json::from_value(v).map_err(|e| format_error(path, e))
}

/// Write `{format_version, model}`.
pub fn write_model(path: impl AsRef<Path>, model: &MixtureModel) -> Result<()> {
    write_json(path, &ModelDocRef { format_version: FORMAT_VERSION, model })
}

/// Load a model from a report, a model document or a bare model object,
/// together with the schema stored alongside it, if any.
pub fn load_model(path: impl AsRef<Path>) -> Result<(MixtureModel, Option<FeatureSchema>)> {
    let path = path.as_ref();
    let mut v = read_json_value(path)?;
    let schema = match v.get_mut("schema").map(serde_json::Value::take) {
        Some(s) if !s.is_null() => Some(serde_json::from_value(s).map_err(|e| format_error(path, e))?),
        _ => None,
    };
    let model_value = match v.get_mut("model") {
        Some(m) => m.take(),
        None => v,
    };
    let model = serde_json::from_value(model_value).map_err(|e| format_error(path, e))?;
    Ok((model, schema))
}

/// Goodness-of-fit table as CSV (`group,label,n,distance`).
pub fn write_gof_csv(path: impl AsRef<Path>, rows: &[GofRow]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| LosError::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    let res: std::result::Result<(), csv::Error> = (|| {
        for r in rows {
            wtr.serialize(r)?;
        }
        if rows.is_empty() {
            wtr.write_record(["group", "label", "n", "distance"])?;
        }
        wtr.flush()?;
        Ok(())
    })();
    res.map_err(|e| format_error(path, e))
}

#[derive(Serialize)]
struct GofDoc<'a> {
    format_version: u32,
    rows: &'a [GofRow],
}

/// Goodness-of-fit table as JSON (`{format_version, rows}`).
pub fn write_gof_json(path: impl AsRef<Path>, rows: &[GofRow]) -> Result<()> {
    write_json(path, &GofDoc { format_version: FORMAT_VERSION, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::FieldSpec;

    fn schema() -> FeatureSchema {
        FeatureSchema {
            fields: vec![FieldSpec::numeric("age"), FieldSpec::categorical("gender")],
            ..Default::default()
        }
    }

    #[test]
    fn header_only_is_empty() {
        let recs = parse_csv("los_days,age,gender\n".as_bytes(), &schema(), true).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn negative_stay_names_row() {
        let text = "los_days,age,gender\n2.5,40,F\n-1,50,M\n";
        match parse_csv(text.as_bytes(), &schema(), true) {
            Err(LosError::DataDomain { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn days_and_hours_combine() {
        let text = "days,hours,age,gender\n4,6,40,F\n";
        let recs = parse_csv(text.as_bytes(), &schema(), true).unwrap();
        assert_eq!(recs[0].los_days, Some(4.25));
    }

    #[test]
    fn quoted_fields() {
        let text = "gender,los_days,age\n\"F, x\",1.5,3\n";
        let recs = parse_csv(text.as_bytes(), &schema(), true).unwrap();
        assert_eq!(recs[0].features[1], FieldValue::Category("F, x".into()));
    }

    #[test]
    fn missing_policy() {
        let text = "los_days,age,gender\n1,,F\n2,3,M\n";
        assert!(matches!(
            parse_csv(text.as_bytes(), &schema(), true),
            Err(LosError::Schema { row: 1, .. })
        ));
        let mut s = schema();
        s.missing = MissingPolicy::DropRow;
        let recs = parse_csv(text.as_bytes(), &s, true).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].row, 2);
    }

    #[test]
    fn malformed_number_is_parse_error() {
        let text = "los_days,age,gender\n1,old,F\n";
        assert!(matches!(
            parse_csv(text.as_bytes(), &schema(), true),
            Err(LosError::Parse { row: 1, .. })
        ));
    }
}
