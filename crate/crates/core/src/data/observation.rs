use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One row of a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawObservation {
    pub frame_id: i64,
    pub pedestrian_id: i64,
    pub x: f64,
    pub y: f64,
}

fn integral(field: &str, line: usize, what: &str) -> Result<i64> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        detail: format!("{what} `{field}` is not a number"),
    })?;
    if !v.is_finite() || libm::trunc(v) != v || libm::fabs(v) > 9.0e15 {
        return Err(Error::Parse {
            line,
            detail: format!("{what} `{field}` is not an integer"),
        });
    }
    Ok(v as i64)
}

fn real(field: &str, line: usize, what: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            detail: format!("{what} `{field}` is not a finite number"),
        }),
    }
}

/// Parses whitespace-separated `frame_id pedestrian_id x y` rows.
///
/// Blank lines are skipped. Integer columns may be written as `780.0`, which
/// is how the public ETH/UCY distribution stores them.
pub fn parse_observations(text: &str) -> Result<Vec<RawObservation>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(Error::Parse {
                line,
                detail: format!("expected 4 columns, found {}", fields.len()),
            });
        }
        let obs = RawObservation {
            frame_id: integral(fields[0], line, "frame_id")?,
            pedestrian_id: integral(fields[1], line, "pedestrian_id")?,
            x: real(fields[2], line, "x")?,
            y: real(fields[3], line, "y")?,
        };
        if !seen.insert((obs.frame_id, obs.pedestrian_id)) {
            return Err(Error::Integrity(format!(
                "duplicate observation of pedestrian {} at frame {} (line {line})",
                obs.pedestrian_id, obs.frame_id
            )));
        }
        out.push(obs);
    }
    Ok(out)
}
