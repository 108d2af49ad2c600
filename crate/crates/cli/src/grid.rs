//! ε grids: `start:step:end` (inclusive) or a comma list.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("cannot read `{0}` as a number")]
    Number(String),
    #[error("grid `{0}` needs start:step:end with step > 0 and start <= end")]
    Range(String),
    #[error("grid is empty")]
    Empty,
}

/// Values are rounded to 12 decimals so that `0:0.01:0.03` prints as 0.03, not 0.030000000000000002.
fn tidy(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

fn number(s: &str) -> Result<f64, GridError> {
    let t = s.trim();
    t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| GridError::Number(t.to_string()))
}

pub fn parse_grid(spec: &str) -> Result<Vec<f64>, GridError> {
    if spec.trim().is_empty() {
        return Err(GridError::Empty);
    }
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, step, end] = parts[..] else {
            return Err(GridError::Range(spec.to_string()));
        };
        let (start, step, end) = (number(start)?, number(step)?, number(end)?);
        if !(step > 0.0) || start > end {
            return Err(GridError::Range(spec.to_string()));
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| tidy(start + k as f64 * step)).collect());
    }
    spec.split(',').map(number).collect()
}
