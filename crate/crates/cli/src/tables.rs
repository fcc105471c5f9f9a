//! Delimited-text output helpers. Floats use Rust's shortest round-trip
//! formatting (lossless and deterministic); non-finite values become empty
//! cells.

use std::fs;
use std::path::Path;

use anyhow::Context;

pub fn write_csv<R>(path: &Path, header: &[&str], rows: R) -> anyhow::Result<()>
where
    R: IntoIterator<Item = Vec<String>>,
{
    let file = fs::File::create(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn fmt(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}
