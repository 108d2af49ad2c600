//! CHSH values per copy, and the nine magic-square perfection conditions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{primed_magic, AnalyticError, PrimedOps};
use crate::linalg::CMatrix;
use crate::quantum::{Behavior, Strategy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("behavior must have 4 inputs and 4 outcomes per party, found {0:?}")]
    DimensionMismatch((usize, usize, usize, usize)),
    #[error("CHSH value {0} outside (0, 2√2]")]
    OutOfRange(f64),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CopyIndex {
    I,
    II,
}

impl CopyIndex {
    fn bit(self, v: usize) -> usize {
        match self {
            CopyIndex::I => v >> 1,
            CopyIndex::II => v & 1,
        }
    }
}

/// Correlator of one copy, averaging uniformly over the other copy's inputs.
pub fn copy_correlator(b: &Behavior, copy: CopyIndex, xj: usize, yj: usize) -> Result<f64, GameError> {
    if b.counts() != (4, 4, 4, 4) {
        return Err(GameError::DimensionMismatch(b.counts()));
    }
    let mut acc = 0.0;
    for x in (0..4).filter(|&x| copy.bit(x) == xj) {
        for y in (0..4).filter(|&y| copy.bit(y) == yj) {
            for a in 0..4 {
                for bb in 0..4 {
                    let s = if copy.bit(a) == copy.bit(bb) { 1.0 } else { -1.0 };
                    acc += s * b.p(x, y, a, bb);
                }
            }
        }
    }
    Ok(acc / 4.0)
}

/// E(0,0) + E(0,1) − E(1,0) + E(1,1): with Alice on σ_z/σ_x and Bob on σ_z/σ_x acting on the
/// rotated singlet, the sign sits on the (x, z) correlator.
pub fn chsh_value(b: &Behavior, copy: CopyIndex) -> Result<f64, GameError> {
    let e = |x, y| copy_correlator(b, copy, x, y);
    Ok(e(0, 0)? + e(0, 1)? - e(1, 0)? + e(1, 1)?)
}

/// Same combination for a 2-input, 2-outcome behavior.
pub fn single_chsh_value(b: &Behavior) -> Result<f64, GameError> {
    if b.counts() != (2, 2, 2, 2) {
        return Err(GameError::DimensionMismatch(b.counts()));
    }
    let e = |x, y| (0..2).flat_map(|a| (0..2).map(move |bb| (a, bb))).map(|(a, bb)| {
        let s = if a == bb { 1.0 } else { -1.0 };
        s * b.p(x, y, a, bb)
    }).sum::<f64>();
    Ok(e(0, 0) + e(0, 1) - e(1, 0) + e(1, 1))
}

pub fn epsilon_from_chsh(chsh: f64) -> Result<f64, GameError> {
    let max = 2.0 * std::f64::consts::SQRT_2;
    if !(chsh > 0.0 && chsh <= max + 1e-12) {
        return Err(GameError::OutOfRange(chsh));
    }
    Ok((1.0 - chsh / max).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionValues {
    #[serde(rename = "eq:zi")]
    pub zi: f64,
    #[serde(rename = "eq:zii")]
    pub zii: f64,
    #[serde(rename = "eq:xi")]
    pub xi: f64,
    #[serde(rename = "eq:xii")]
    pub xii: f64,
    #[serde(rename = "eq:t2b")]
    pub t2b: f64,
    #[serde(rename = "eq:t1b")]
    pub t1b: f64,
    #[serde(rename = "eq:t1a")]
    pub t1a: f64,
    #[serde(rename = "eq:t2a")]
    pub t2a: f64,
    #[serde(rename = "eq:tt")]
    pub tt: f64,
}

impl ConditionValues {
    pub fn as_array(&self) -> [f64; 9] {
        [self.zi, self.zii, self.xi, self.xii, self.t2b, self.t1b, self.t1a, self.t2a, self.tt]
    }

    pub const NAMES: [&'static str; 9] = ["zi", "zii", "xi", "xii", "t2b", "t1b", "t1a", "t2a", "tt"];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub values: ConditionValues,
    /// 1 − min over the nine values, floored at 0 (the ideal strategy lands a few ulps above 1).
    pub epsilon: f64,
}

pub fn magic_conditions(s: &Strategy) -> Result<ConditionReport, GameError> {
    Ok(conditions_from(&primed_magic(s)?, s))
}

pub(crate) fn conditions_from(p: &PrimedOps, s: &Strategy) -> ConditionReport {
    let w = p.w.as_ref().expect("magic ops carry W");
    let ev = |a: &[&CMatrix], b: &[&CMatrix]| -> f64 {
        let prod = |ms: &[&CMatrix], d: usize| ms.iter().fold(CMatrix::identity(d), |acc, m| &acc * *m);
        s.expectation(&prod(a, s.dim_a()), &prod(b, s.dim_b())).re
    };
    let (z, x) = (&p.z, &p.x);
    let values = ConditionValues {
        zi: ev(&[&z[0]], &[&x[2]]),
        zii: ev(&[&z[1]], &[&x[3]]),
        xi: ev(&[&x[0]], &[&z[2]]),
        xii: ev(&[&x[1]], &[&z[3]]),
        t2b: ev(&[&z[0], &z[1]], &[&w[2]]),
        t1b: ev(&[&x[0], &x[1]], &[&w[3]]),
        t1a: ev(&[&w[0]], &[&x[2], &z[3]]),
        t2a: ev(&[&w[1]], &[&x[3], &z[2]]),
        tt: -ev(&[&w[0], &w[1]], &[&w[2], &w[3]]),
    };
    let epsilon = (1.0 - values.as_array().into_iter().fold(f64::INFINITY, f64::min)).max(0.0);
    ConditionReport { values, epsilon }
}
