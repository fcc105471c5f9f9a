//! Raw sensor-table ingestion: parsing, PM size-bin differencing, QA
//! filtering, and the offset/quantile scaling transform that produces the
//! non-negative matrix consumed by the estimators.
//!
//! Timestamps are naive local-time strings of the fixed format
//! `YYYY-MM-DD HH:MM`; no timezone arithmetic is performed anywhere.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use chrono::NaiveDateTime;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::quantile_of;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M";

/// Cumulative PM column names expected by [`derive_size_bins`].
pub const PM_CUMULATIVE: [&str; 4] = ["PM1", "PM2.5", "PM10", "TSP"];
/// Non-overlapping size-bin names produced by [`derive_size_bins`].
pub const PM_BINS: [&str; 4] = ["PM1", "PM2.5-PM1", "PM10-PM2.5", "TSP-PM10"];

/// Column mapping from canonical names to file headers.
#[derive(Debug, Clone)]
pub struct Schema {
    pub timestamp: String,
    pub location: String,
    /// (canonical pollutant name, file column header), in column order.
    pub pollutants: Vec<(String, String)>,
    /// (canonical covariate name, file column header).
    pub covariates: Vec<(String, String)>,
    pub delimiter: u8,
}

impl Schema {
    /// Parse a `key=value` config: `timestamp=`, `location=`,
    /// `pollutant.NAME=column`, `covariate.NAME=column`, optional
    /// `delimiter=`. Lines starting with `#` are ignored.
    pub fn from_key_value(text: &str) -> Result<Schema> {
        let mut timestamp = None;
        let mut location = None;
        let mut pollutants = Vec::new();
        let mut covariates = Vec::new();
        let mut delimiter = b',';
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Schema(format!(
                    "line {}: expected key=value, got {line:?}",
                    lineno + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "timestamp" => timestamp = Some(value.to_string()),
                "location" => location = Some(value.to_string()),
                "delimiter" => {
                    let bytes = value.as_bytes();
                    if bytes.len() != 1 {
                        return Err(Error::Schema(format!(
                            "delimiter must be a single character, got {value:?}"
                        )));
                    }
                    delimiter = bytes[0];
                }
                _ => {
                    if let Some(name) = key.strip_prefix("pollutant.") {
                        pollutants.push((name.to_string(), value.to_string()));
                    } else if let Some(name) = key.strip_prefix("covariate.") {
                        covariates.push((name.to_string(), value.to_string()));
                    } else {
                        return Err(Error::Schema(format!("unknown key {key:?}")));
                    }
                }
            }
        }
        let schema = Schema {
            timestamp: timestamp.ok_or_else(|| Error::Schema("missing timestamp=".into()))?,
            location: location.ok_or_else(|| Error::Schema("missing location=".into()))?,
            pollutants,
            covariates,
            delimiter,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Schema> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_key_value(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.pollutants.len() < 2 {
            return Err(Error::Schema(
                "schema must name at least two pollutant columns".into(),
            ));
        }
        let mut seen = HashSet::new();
        for (name, _) in self.pollutants.iter().chain(self.covariates.iter()) {
            if !seen.insert(name.clone()) {
                return Err(Error::Schema(format!("duplicate column name {name:?}")));
            }
        }
        Ok(())
    }
}

/// One parsed sensor record. Pollutant/covariate slots align with the
/// owning [`RawTable`]'s name lists; `None` marks a missing cell.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub timestamp: NaiveDateTime,
    pub location: String,
    pub pollutants: Vec<Option<f64>>,
    pub covariates: Vec<Option<f64>>,
}

/// Parsed records plus their column names.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub pollutant_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub records: Vec<RawRecord>,
}

/// Complete (no missing pollutant cells) concentration matrix with aligned
/// timestamps, locations, and optional covariate columns. Covariates may
/// still carry missing values; they are only consumed by downstream
/// analyses, never by the apportionment itself.
#[derive(Debug, Clone)]
pub struct PollutantMatrix {
    /// n x J concentrations.
    pub values: Array2<f64>,
    pub pollutant_names: Vec<String>,
    pub timestamps: Vec<NaiveDateTime>,
    pub locations: Vec<String>,
    pub covariate_names: Vec<String>,
    /// One column per covariate name, each of length n.
    pub covariates: Vec<Vec<Option<f64>>>,
}

impl PollutantMatrix {
    pub fn new(
        values: Array2<f64>,
        pollutant_names: Vec<String>,
        timestamps: Vec<NaiveDateTime>,
        locations: Vec<String>,
        covariate_names: Vec<String>,
        covariates: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        let (n, j) = values.dim();
        if j < 2 {
            return Err(Error::Invalid(format!("need at least 2 pollutants, got {j}")));
        }
        if n < j {
            return Err(Error::Invalid(format!("need n >= J rows, got n={n}, J={j}")));
        }
        if pollutant_names.len() != j {
            return Err(Error::Invalid("pollutant name count mismatch".into()));
        }
        if timestamps.len() != n || locations.len() != n {
            return Err(Error::Invalid("row metadata length mismatch".into()));
        }
        if covariate_names.len() != covariates.len()
            || covariates.iter().any(|c| c.len() != n)
        {
            return Err(Error::Invalid("covariate column length mismatch".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite concentration value".into()));
        }
        Ok(PollutantMatrix {
            values,
            pollutant_names,
            timestamps,
            locations,
            covariate_names,
            covariates,
        })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn npollutants(&self) -> usize {
        self.values.ncols()
    }

    pub fn pollutant_index(&self, name: &str) -> Option<usize> {
        self.pollutant_names.iter().position(|n| n == name)
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    /// Retain only the given rows (used by resampling and analyses).
    pub fn select_rows(&self, rows: &[usize]) -> PollutantMatrix {
        let j = self.npollutants();
        let mut values = Array2::zeros((rows.len(), j));
        for (out, &r) in rows.iter().enumerate() {
            values.row_mut(out).assign(&self.values.row(r));
        }
        PollutantMatrix {
            values,
            pollutant_names: self.pollutant_names.clone(),
            timestamps: rows.iter().map(|&r| self.timestamps[r]).collect(),
            locations: rows.iter().map(|&r| self.locations[r].clone()).collect(),
            covariate_names: self.covariate_names.clone(),
            covariates: self
                .covariates
                .iter()
                .map(|col| rows.iter().map(|&r| col[r]).collect())
                .collect(),
        }
    }
}

/// Per-pollutant parameters of the invertible preprocessing transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingParams {
    pub entries: Vec<ScaleEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub name: String,
    /// Observed column minimum, original units.
    pub min: f64,
    /// 85th percentile, original units.
    pub q85: f64,
}

impl ScalingParams {
    pub fn get(&self, name: &str) -> Option<&ScaleEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Row-accounting from [`filter_complete`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub rows_in: usize,
    pub rows_dropped_incomplete: usize,
    pub rows_dropped_outlier: usize,
    pub rows_out: usize,
}

/// Parse a delimited text file into records. Missing cells are empty
/// strings; duplicate `(timestamp, location)` pairs are rejected.
pub fn parse_table(path: &Path, schema: &Schema) -> Result<RawTable> {
    schema.validate()?;
    let path_str = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| Error::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path_str.clone(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column {name:?} not found in header")))
    };
    let ts_col = col(&schema.timestamp)?;
    let loc_col = col(&schema.location)?;
    let pol_cols: Vec<usize> = schema
        .pollutants
        .iter()
        .map(|(_, c)| col(c))
        .collect::<Result<_>>()?;
    let cov_cols: Vec<usize> = schema
        .covariates
        .iter()
        .map(|(_, c)| col(c))
        .collect::<Result<_>>()?;

    let parse_cell = |cell: &str, line: usize| -> Result<Option<f64>> {
        let cell = cell.trim();
        if cell.is_empty() {
            return Ok(None);
        }
        cell.parse::<f64>().map(Some).map_err(|_| Error::Parse {
            path: path_str.clone(),
            line,
            message: format!("unparseable number {cell:?}"),
        })
    };

    let mut records = Vec::new();
    let mut seen: HashSet<(NaiveDateTime, String)> = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let row = row.map_err(|e| Error::Parse {
            path: path_str.clone(),
            line,
            message: e.to_string(),
        })?;
        let ts_text = row.get(ts_col).unwrap_or("").trim();
        let timestamp =
            NaiveDateTime::parse_from_str(ts_text, TIMESTAMP_FORMAT).map_err(|_| Error::Parse {
                path: path_str.clone(),
                line,
                message: format!("unparseable timestamp {ts_text:?}"),
            })?;
        let location = row.get(loc_col).unwrap_or("").trim().to_string();
        if !seen.insert((timestamp, location.clone())) {
            return Err(Error::DuplicateRecord {
                timestamp: ts_text.to_string(),
                location,
                path: path_str.clone(),
                line,
            });
        }
        let pollutants = pol_cols
            .iter()
            .map(|&c| parse_cell(row.get(c).unwrap_or(""), line))
            .collect::<Result<Vec<_>>>()?;
        let covariates = cov_cols
            .iter()
            .map(|&c| parse_cell(row.get(c).unwrap_or(""), line))
            .collect::<Result<Vec<_>>>()?;
        records.push(RawRecord {
            timestamp,
            location,
            pollutants,
            covariates,
        });
    }
    Ok(RawTable {
        pollutant_names: schema.pollutants.iter().map(|(n, _)| n.clone()).collect(),
        covariate_names: schema.covariates.iter().map(|(n, _)| n.clone()).collect(),
        records,
    })
}

/// Replace cumulative PM columns with non-overlapping size increments:
/// `PM1`, `PM2.5-PM1`, `PM10-PM2.5`, `TSP-PM10`. A difference is missing
/// when either operand is; negative differences (instrument inversions)
/// clamp to zero. Returns the rewritten table plus per-bin clamp counts.
pub fn derive_size_bins(table: &RawTable) -> Result<(RawTable, Vec<(String, usize)>)> {
    let idx: Vec<usize> = PM_CUMULATIVE
        .iter()
        .map(|name| {
            table
                .pollutant_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Schema(format!("required PM column {name:?} absent")))
        })
        .collect::<Result<_>>()?;

    let mut names = table.pollutant_names.clone();
    for (slot, bin) in idx.iter().zip(PM_BINS.iter()) {
        names[*slot] = bin.to_string();
    }

    let mut clamps = vec![0usize; 3];
    let records = table
        .records
        .iter()
        .map(|rec| {
            let mut pollutants = rec.pollutants.clone();
            // Work from the largest bin down so each difference reads the
            // original cumulative values.
            for d in (1..4).rev() {
                pollutants[idx[d]] = match (rec.pollutants[idx[d]], rec.pollutants[idx[d - 1]]) {
                    (Some(hi), Some(lo)) => {
                        let diff = hi - lo;
                        if diff < 0.0 {
                            clamps[d - 1] += 1;
                            Some(0.0)
                        } else {
                            Some(diff)
                        }
                    }
                    _ => None,
                };
            }
            RawRecord {
                pollutants,
                ..rec.clone()
            }
        })
        .collect();

    let clamp_counts = PM_BINS[1..]
        .iter()
        .zip(clamps)
        .map(|(name, c)| (name.to_string(), c))
        .collect();
    Ok((
        RawTable {
            pollutant_names: names,
            covariate_names: table.covariate_names.clone(),
            records,
        },
        clamp_counts,
    ))
}

/// Keep only rows where every `required` pollutant is present and no
/// outlier rule fires, then assemble the (untransformed) matrix over the
/// required columns. An outlier rule `(name, t)` drops rows with
/// `value >= t` (retained rows satisfy `value < t`). Covariate columns are
/// carried along and may remain missing.
pub fn filter_complete(
    table: &RawTable,
    required: &[String],
    outlier_rules: &[(String, f64)],
) -> Result<(PollutantMatrix, FilterReport)> {
    let req_idx: Vec<usize> = required
        .iter()
        .map(|name| {
            table
                .pollutant_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Schema(format!("required pollutant {name:?} absent")))
        })
        .collect::<Result<_>>()?;
    let rule_idx: Vec<(usize, f64)> = outlier_rules
        .iter()
        .map(|(name, t)| {
            required
                .iter()
                .position(|n| n == name)
                .map(|i| (i, *t))
                .ok_or_else(|| Error::Schema(format!("outlier rule names unknown column {name:?}")))
        })
        .collect::<Result<_>>()?;

    let mut report = FilterReport {
        rows_in: table.records.len(),
        ..Default::default()
    };
    let mut kept: Vec<(usize, Vec<f64>)> = Vec::new();
    'rows: for (r, rec) in table.records.iter().enumerate() {
        let mut row = Vec::with_capacity(req_idx.len());
        for &c in &req_idx {
            match rec.pollutants[c] {
                Some(v) => row.push(v),
                None => {
                    report.rows_dropped_incomplete += 1;
                    continue 'rows;
                }
            }
        }
        for &(i, t) in &rule_idx {
            if row[i] >= t {
                report.rows_dropped_outlier += 1;
                continue 'rows;
            }
        }
        kept.push((r, row));
    }
    if kept.is_empty() {
        return Err(Error::EmptyFilter);
    }
    report.rows_out = kept.len();

    let n = kept.len();
    let j = required.len();
    let mut values = Array2::zeros((n, j));
    for (out, (_, row)) in kept.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            values[[out, c]] = *v;
        }
    }
    let matrix = PollutantMatrix::new(
        values,
        required.to_vec(),
        kept.iter().map(|(r, _)| table.records[*r].timestamp).collect(),
        kept.iter()
            .map(|(r, _)| table.records[*r].location.clone())
            .collect(),
        table.covariate_names.clone(),
        (0..table.covariate_names.len())
            .map(|c| kept.iter().map(|(r, _)| table.records[*r].covariates[c]).collect())
            .collect(),
    )?;
    Ok((matrix, report))
}

/// Per-pollutant minimum and 85th percentile, computed on the post-filter
/// data in original units.
pub fn fit_scaling(matrix: &PollutantMatrix) -> Result<ScalingParams> {
    let mut entries = Vec::with_capacity(matrix.npollutants());
    for (j, name) in matrix.pollutant_names.iter().enumerate() {
        let col: Vec<f64> = matrix.values.column(j).to_vec();
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let q85 = quantile_of(&col, 0.85);
        if q85 - min <= 0.0 {
            return Err(Error::DegeneratePollutant {
                name: name.clone(),
                min,
                q85,
            });
        }
        entries.push(ScaleEntry {
            name: name.clone(),
            min,
            q85,
        });
    }
    Ok(ScalingParams { entries })
}

/// Apply `y = (y0 - min(m, 0)) / (q85 - m)` per pollutant. The shift is
/// applied only when `m < 0`; the transform is invertible given the params.
pub fn apply_scaling(matrix: &PollutantMatrix, params: &ScalingParams) -> Result<PollutantMatrix> {
    transform(matrix, params, |v, m, q85| (v - m.min(0.0)) / (q85 - m))
}

/// Inverse of [`apply_scaling`].
pub fn invert_scaling(matrix: &PollutantMatrix, params: &ScalingParams) -> Result<PollutantMatrix> {
    transform(matrix, params, |v, m, q85| v * (q85 - m) + m.min(0.0))
}

fn transform(
    matrix: &PollutantMatrix,
    params: &ScalingParams,
    f: impl Fn(f64, f64, f64) -> f64,
) -> Result<PollutantMatrix> {
    let mut values = matrix.values.clone();
    for (j, name) in matrix.pollutant_names.iter().enumerate() {
        let entry = params
            .get(name)
            .ok_or_else(|| Error::MissingScaling(name.clone()))?;
        for v in values.column_mut(j).iter_mut() {
            *v = f(*v, entry.min, entry.q85);
        }
    }
    let mut out = matrix.clone();
    out.values = values;
    Ok(out)
}

/// One row of a Table-1-style summary.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub name: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub p15: f64,
    pub p85: f64,
}

fn summarize_column(name: &str, values: &[f64]) -> SummaryRow {
    let count = values.len();
    if count == 0 {
        return SummaryRow {
            name: name.to_string(),
            count: 0,
            mean: f64::NAN,
            std: f64::NAN,
            median: f64::NAN,
            min: f64::NAN,
            max: f64::NAN,
            p15: f64::NAN,
            p85: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / count as f64;
    let std = if count > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    SummaryRow {
        name: name.to_string(),
        count,
        mean,
        std,
        median: crate::numeric::quantile_sorted(&sorted, 0.5),
        min: sorted[0],
        max: sorted[count - 1],
        p15: crate::numeric::quantile_sorted(&sorted, 0.15),
        p85: crate::numeric::quantile_sorted(&sorted, 0.85),
    }
}

/// Per-pollutant summary statistics of a complete matrix, original units.
pub fn summarize_matrix(matrix: &PollutantMatrix) -> Vec<SummaryRow> {
    matrix
        .pollutant_names
        .iter()
        .enumerate()
        .map(|(j, name)| summarize_column(name, &matrix.values.column(j).to_vec()))
        .collect()
}

/// Per-pollutant summary statistics of raw records; missing cells are
/// excluded, so counts may differ across pollutants.
pub fn summarize_records(table: &RawTable) -> Result<Vec<SummaryRow>> {
    if table.records.is_empty() {
        return Err(Error::Invalid("no records to summarize".into()));
    }
    Ok(table
        .pollutant_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let values: Vec<f64> = table
                .records
                .iter()
                .filter_map(|r| r.pollutants[j])
                .collect();
            summarize_column(name, &values)
        })
        .collect())
}

/// Sidecar metadata stored next to a serialized matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixMetadata {
    pub pollutant_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub rows: usize,
    pub scaling: Option<ScalingParams>,
    #[serde(default)]
    pub filter: Option<FilterReport>,
    #[serde(default)]
    pub clamp_counts: Vec<(String, usize)>,
}

impl MatrixMetadata {
    pub fn describe(matrix: &PollutantMatrix) -> MatrixMetadata {
        MatrixMetadata {
            pollutant_names: matrix.pollutant_names.clone(),
            covariate_names: matrix.covariate_names.clone(),
            rows: matrix.nrows(),
            scaling: None,
            filter: None,
            clamp_counts: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Invalid(format!("metadata serialization: {e}")))?;
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<MatrixMetadata> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })
    }
}

/// Write a matrix as delimited text: `timestamp,location,<pollutants>,
/// <covariates>`; missing covariate cells are empty.
pub fn write_matrix(matrix: &PollutantMatrix, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_writer(fs::File::create(path).map_err(io_err)?);
    let mut header = vec!["timestamp".to_string(), "location".to_string()];
    header.extend(matrix.pollutant_names.iter().cloned());
    header.extend(matrix.covariate_names.iter().cloned());
    w.write_record(&header)
        .map_err(|e| Error::Invalid(format!("csv write: {e}")))?;
    for r in 0..matrix.nrows() {
        let mut row = vec![
            matrix.timestamps[r].format(TIMESTAMP_FORMAT).to_string(),
            matrix.locations[r].clone(),
        ];
        for j in 0..matrix.npollutants() {
            row.push(matrix.values[[r, j]].to_string());
        }
        for col in &matrix.covariates {
            row.push(col[r].map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row)
            .map_err(|e| Error::Invalid(format!("csv write: {e}")))?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Read a matrix previously written by [`write_matrix`], using its sidecar
/// metadata for the column split.
pub fn read_matrix(path: &Path, meta: &MatrixMetadata) -> Result<PollutantMatrix> {
    let schema = Schema {
        timestamp: "timestamp".into(),
        location: "location".into(),
        pollutants: meta
            .pollutant_names
            .iter()
            .map(|n| (n.clone(), n.clone()))
            .collect(),
        covariates: meta
            .covariate_names
            .iter()
            .map(|n| (n.clone(), n.clone()))
            .collect(),
        delimiter: b',',
    };
    let table = parse_table(path, &schema)?;
    let (matrix, _) = filter_complete(&table, &meta.pollutant_names, &[])?;
    Ok(matrix)
}
