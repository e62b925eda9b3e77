//! Plain-text data files read by the command-line front end.
//!
//! Numeric tables are comma-separated with a fixed header line; blank lines
//! and lines starting with `#` are skipped. Outcome runs are a JSON array of
//! outcome tables.

use crate::error::{Error, Result};
use crate::timetag_sim::OutcomeTable;

pub const FRINGE_HEADER: [&str; 2] = ["x", "count"];
pub const FRANSON_HEADER: [&str; 5] = ["phase", "a1b1", "a1b2", "a2b1", "a2b2"];
pub const BEATING_HEADER: [&str; 2] = ["tau_ps", "count"];
pub const POWER_SWEEP_HEADER: [&str; 5] = ["power_mw", "n_s", "n_i", "c_c", "a_cc"];

/// Reads a numeric table with exactly the given header and returns its
/// columns. Every value must be finite.
pub fn read_columns(text: &str, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, found) = lines.next().ok_or_else(|| Error::parse(None, "empty table"))?;
    let names: Vec<&str> = found.split(',').map(str::trim).collect();
    if names != header {
        return Err(Error::parse(
            Some(hline),
            format!("expected header {:?}, found {names:?}", header.join(",")),
        ));
    }
    let mut cols = vec![Vec::new(); header.len()];
    for (line, l) in lines {
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(Error::parse(
                Some(line),
                format!("expected {} fields, found {}", header.len(), fields.len()),
            ));
        }
        for (col, f) in cols.iter_mut().zip(fields) {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(Some(line), format!("invalid number {f:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(Some(line), "value is not finite"));
            }
            col.push(v);
        }
    }
    if cols[0].is_empty() {
        return Err(Error::parse(None, "table has no data rows"));
    }
    Ok(cols)
}

pub fn write_columns(header: &[&str], cols: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    let n = cols.first().map_or(0, Vec::len);
    for i in 0..n {
        let row: Vec<String> = cols.iter().map(|c| c[i].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn outcome_runs_to_json(runs: &[OutcomeTable]) -> String {
    let values: Vec<serde_json::Value> = runs
        .iter()
        .map(|r| serde_json::from_str(&r.to_json()).expect("outcome table JSON is valid"))
        .collect();
    serde_json::to_string_pretty(&values).expect("array serializes")
}

pub fn outcome_runs_from_json(text: &str) -> Result<Vec<OutcomeTable>> {
    let values: Vec<serde_json::Value> = serde_json::from_str(text)?;
    values
        .iter()
        .map(|v| OutcomeTable::from_json(&v.to_string()))
        .collect()
}
