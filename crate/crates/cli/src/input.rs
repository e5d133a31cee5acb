//! Study CSV ingestion.
//!
//! The input format is deliberately strict: a header line spelled exactly
//! `label,estimate,stderr`, then one study per line, decimal points, no
//! thousands separators. Positional inference is refused because a silent
//! swap of the estimate and standard-error columns is the worst possible
//! failure mode for this kind of data.

use anyhow::{anyhow, bail, Result};
use remeta::{Dataset, Study};

const EXPECTED_HEADER: [&str; 3] = ["label", "estimate", "stderr"];

/// Parses study CSV text into a dataset, preserving file order.
///
/// Errors name the expected header when it is missing or misspelled, cite
/// the line number for malformed rows (non-numeric fields, stderr <= 0,
/// wrong field count), and reject files with no data rows.
pub fn parse_study_csv(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| anyhow!("failed to read CSV header: {e}"))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != EXPECTED_HEADER {
        bail!(
            "unexpected CSV header {:?}: expected exactly `label,estimate,stderr`",
            got.join(",")
        );
    }

    let mut studies = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| anyhow!("malformed CSV row: {e}"))?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or_default();
        if record.len() != 3 {
            bail!(
                "line {line}: expected 3 fields (label, estimate, stderr), got {}",
                record.len()
            );
        }
        let label = record.get(0).unwrap_or_default();
        let estimate: f64 = record
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|_| anyhow!("line {line}: estimate {:?} is not a number", &record[1]))?;
        let stderr: f64 = record
            .get(2)
            .unwrap_or_default()
            .parse()
            .map_err(|_| anyhow!("line {line}: stderr {:?} is not a number", &record[2]))?;
        let study = Study::new(label, estimate, stderr)
            .map_err(|e| anyhow!("line {line}: {e}"))?;
        studies.push(study);
    }

    if studies.is_empty() {
        bail!("no data rows: the file contains a header but no studies");
    }
    Dataset::new(studies).map_err(|e| anyhow!("{e}"))
}
