//! File formats.
//!
//! * Events: JSON `{"d": 2, "T": 10.0, "events": [[...], [...]]}`, or CSV
//!   rows `node,time` (0-based node, header optional) on input.
//! * Matrices: CSV, row-major, no header. Vectors: one value per line.
//!
//! Floats are written in shortest round-trip form, so parsing a written file
//! recovers the exact values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EventData;

#[derive(Debug, Serialize, Deserialize)]
struct EventFile {
    d: usize,
    #[serde(rename = "T")]
    horizon: f64,
    events: Vec<Vec<f64>>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn events_to_json(data: &EventData) -> String {
    let file = EventFile { d: data.dim(), horizon: data.horizon(), events: data.events().to_vec() };
    serde_json::to_string(&file).expect("event data serializes")
}

pub fn events_from_json(text: &str) -> Result<EventData> {
    let file: EventFile = serde_json::from_str(text).map_err(|e| Error::InvalidEvents(e.to_string()))?;
    if file.d != file.events.len() {
        return Err(Error::InvalidEvents(format!("d = {} but {} event lists", file.d, file.events.len())));
    }
    EventData::new(file.horizon, file.events)
}

/// `node,time` rows. `horizon` defaults to the last timestamp, `d` to the
/// largest node index plus one.
pub fn events_from_csv(text: &str, horizon: Option<f64>, d: Option<usize>) -> Result<EventData> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (Some(node), Some(time), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::InvalidEvents(format!("line {}: expected `node,time`", lineno + 1)));
        };
        match (node.parse::<usize>(), time.parse::<f64>()) {
            (Ok(n), Ok(t)) => rows.push((n, t)),
            _ if lineno == 0 => continue,
            _ => return Err(Error::InvalidEvents(format!("line {}: cannot parse {line:?}", lineno + 1))),
        }
    }
    let d = d.unwrap_or_else(|| rows.iter().map(|r| r.0 + 1).max().unwrap_or(0));
    let horizon = match horizon {
        Some(h) => h,
        None => rows.iter().map(|r| r.1).fold(0.0, f64::max),
    };
    let mut events = vec![Vec::new(); d];
    for (n, t) in rows {
        let list = events
            .get_mut(n)
            .ok_or_else(|| Error::InvalidEvents(format!("node {n} outside 0..{d}")))?;
        list.push(t);
    }
    for list in &mut events {
        list.sort_by(f64::total_cmp);
    }
    EventData::new(horizon, events)
}

pub fn write_events(path: &Path, data: &EventData) -> Result<()> {
    fs::write(path, events_to_json(data)).map_err(|e| io_err(path, e))
}

/// Reads JSON, or CSV when the extension is `.csv`.
pub fn read_events(path: &Path, horizon: Option<f64>) -> Result<EventData> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        events_from_csv(&text, horizon, None)
    } else {
        events_from_json(&text)
    }
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad matrix entry {v:?}: {e}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_row_iterator(n, m, rows.into_iter().flatten()))
}

pub fn vector_to_csv(v: &DVector<f64>) -> String {
    v.iter().map(|x| format!("{x}\n")).collect()
}

pub fn vector_from_csv(text: &str) -> Result<DVector<f64>> {
    let vals = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad vector entry {l:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(vals))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m)).map_err(|e| io_err(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    matrix_from_csv(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    fs::write(path, vector_to_csv(v)).map_err(|e| io_err(path, e))
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    vector_from_csv(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_events_with_header() {
        let text = "node,time\n1,0.5\n0,0.25\n1,0.1\n";
        let data = events_from_csv(text, Some(1.0), None).unwrap();
        assert_eq!(data.events(), &[vec![0.25], vec![0.1, 0.5]]);
        assert!(events_from_csv("0,1\n0,1\n", Some(2.0), None).is_err());
        assert!(events_from_csv("0,1\nx,y\n", Some(2.0), None).is_err());
    }

    #[test]
    fn json_dimension_mismatch() {
        assert!(events_from_json(r#"{"d": 3, "T": 1.0, "events": [[0.5]]}"#).is_err());
    }

    #[test]
    fn ragged_matrix_rejected() {
        assert!(matrix_from_csv("1,2\n3\n").is_err());
    }

    proptest! {
        #[test]
        fn events_json_round_trip(raw in prop::collection::vec(prop::collection::vec(1e-9f64..1.0, 0..20), 1..4)) {
            let events: Vec<Vec<f64>> = raw
                .into_iter()
                .map(|mut v| {
                    v.sort_by(f64::total_cmp);
                    v.dedup();
                    v.into_iter().map(|t| t * 7.3).collect()
                })
                .collect();
            let data = EventData::new(7.3, events).unwrap();
            let back = events_from_json(&events_to_json(&data)).unwrap();
            prop_assert_eq!(back, data);
        }

        #[test]
        fn matrix_csv_round_trip(vals in prop::collection::vec(-1e6f64..1e6, 9)) {
            let m = DMatrix::from_row_slice(3, 3, &vals);
            prop_assert_eq!(matrix_from_csv(&matrix_to_csv(&m)).unwrap(), m);
        }
    }
}
