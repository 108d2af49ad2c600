//! Block-diagonal linear matrix inequalities and a primal-dual interior-point solver.
//!
//! Problems have the form
//!
//! ```text
//!   minimize   f·y + c0
//!   subject to G0 + Σ_i y_i G_i ⪰ 0
//! ```
//!
//! whose dual is `maximize −⟨G0, X⟩ + c0` over `X ⪰ 0` with `⟨G_i, X⟩ = f_i`. Any such X gives a
//! lower bound on the minimum, which is what `certify_lower_bound` checks.

mod ipm;

use std::fmt::Write as _;
use std::io;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ipm::solve;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("entry ({block}, {row}, {col}) outside block dimensions")]
    OutOfBounds { block: usize, row: usize, col: usize },
    #[error("objective has {found} coefficients for {expected} variables")]
    ObjectiveLength { expected: usize, found: usize },
    #[error("malformed problem dump: {0}")]
    Parse(String),
}

/// One stored entry of a symmetric block-diagonal matrix; `row <= col`, mirrored on read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymEntry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseSym {
    pub entries: Vec<SymEntry>,
}

impl SparseSym {
    /// Adds `value` at (row, col) and its mirror; duplicates accumulate.
    pub fn push(&mut self, block: usize, row: usize, col: usize, value: f64) {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        self.entries.push(SymEntry { block, row, col, value });
    }

    /// Merge duplicates and drop zeros, in a deterministic order.
    pub fn compact(&mut self) {
        self.entries.sort_by(|a, b| (a.block, a.row, a.col).cmp(&(b.block, b.row, b.col)));
        let mut out: Vec<SymEntry> = Vec::with_capacity(self.entries.len());
        for e in self.entries.drain(..) {
            match out.last_mut() {
                Some(l) if (l.block, l.row, l.col) == (e.block, e.row, e.col) => l.value += e.value,
                _ => out.push(e),
            }
        }
        out.retain(|e| e.value != 0.0);
        self.entries = out;
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// ⟨self, X⟩ for symmetric X.
    pub fn inner(&self, x: &[Mat<f64>]) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let v = x[e.block][(e.row, e.col)];
                if e.row == e.col { e.value * v } else { 2.0 * e.value * v }
            })
            .sum()
    }

    /// out += alpha * self
    pub fn add_to(&self, out: &mut [Mat<f64>], alpha: f64) {
        for e in &self.entries {
            out[e.block][(e.row, e.col)] += alpha * e.value;
            if e.row != e.col {
                out[e.block][(e.col, e.row)] += alpha * e.value;
            }
        }
    }

    pub fn norm_fro(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| if e.row == e.col { e.value * e.value } else { 2.0 * e.value * e.value })
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    pub offset: SparseSym,
    pub constraints: Vec<SparseSym>,
    pub objective: Vec<f64>,
    pub constant: f64,
    /// Known bounds |y_i| ≤ B_i, used to absorb dual residuals when certifying.
    pub var_bounds: Option<Vec<f64>>,
}

impl SdpProblem {
    pub fn new(blocks: Vec<usize>) -> Self {
        Self { blocks, offset: SparseSym::default(), constraints: Vec::new(), objective: Vec::new(), constant: 0.0, var_bounds: None }
    }

    pub fn n_vars(&self) -> usize {
        self.constraints.len()
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.objective.len() != self.constraints.len() {
            return Err(SdpError::ObjectiveLength { expected: self.constraints.len(), found: self.objective.len() });
        }
        for m in std::iter::once(&self.offset).chain(&self.constraints) {
            for e in &m.entries {
                if e.block >= self.blocks.len() || e.col >= self.blocks[e.block] {
                    return Err(SdpError::OutOfBounds { block: e.block, row: e.row, col: e.col });
                }
            }
        }
        Ok(())
    }

    pub fn zero_blocks(&self) -> Vec<Mat<f64>> {
        self.blocks.iter().map(|&n| Mat::zeros(n, n)).collect()
    }

    /// G0 + Σ y_i G_i as dense blocks.
    pub fn lmi(&self, y: &[f64]) -> Vec<Mat<f64>> {
        let mut s = self.zero_blocks();
        self.offset.add_to(&mut s, 1.0);
        for (g, &yi) in self.constraints.iter().zip(y) {
            if yi != 0.0 {
                g.add_to(&mut s, yi);
            }
        }
        s
    }

    pub fn primal_objective(&self, y: &[f64]) -> f64 {
        self.constant + self.objective.iter().zip(y).map(|(f, y)| f * y).sum::<f64>()
    }

    pub fn dual_objective(&self, x: &[Mat<f64>]) -> f64 {
        self.constant - self.offset.inner(x)
    }

    /// ⟨G_i, X⟩ − f_i
    pub fn dual_residual(&self, x: &[Mat<f64>]) -> Vec<f64> {
        self.constraints.iter().zip(&self.objective).map(|(g, f)| g.inner(x) - f).collect()
    }

    /// Plain-text dump: a header line with variable count and block sizes, then
    /// `matrix-id row col value` lines (row <= col, indices global across blocks, 1-based;
    /// matrix 0 is the offset) and a final objective section.
    pub fn write_triplets(&self, mut w: impl io::Write) -> io::Result<()> {
        let mut starts = vec![0usize; self.blocks.len()];
        for k in 1..self.blocks.len() {
            starts[k] = starts[k - 1] + self.blocks[k - 1];
        }
        let dims: Vec<String> = self.blocks.iter().map(usize::to_string).collect();
        writeln!(w, "# vars {} blocks {}", self.n_vars(), dims.join(" "))?;
        for (id, m) in std::iter::once(&self.offset).chain(&self.constraints).enumerate() {
            for e in &m.entries {
                let b = starts[e.block];
                writeln!(w, "{} {} {} {:e}", id, b + e.row + 1, b + e.col + 1, e.value)?;
            }
        }
        writeln!(w, "# objective constant {:e}", self.constant)?;
        let mut line = String::new();
        for f in &self.objective {
            let _ = write!(line, "{f:e} ");
        }
        writeln!(w, "{}", line.trim_end())
    }

    pub fn read_triplets(text: &str) -> Result<Self, SdpError> {
        let err = |m: &str| SdpError::Parse(m.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err("empty"))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() < 4 || toks[0] != "#" || toks[1] != "vars" || toks[3] != "blocks" {
            return Err(err("bad header"));
        }
        let nv: usize = toks[2].parse().map_err(|_| err("bad variable count"))?;
        let blocks: Vec<usize> = toks[4..].iter().map(|t| t.parse().map_err(|_| err("bad block size"))).collect::<Result<_, _>>()?;
        let mut starts = vec![0usize; blocks.len()];
        for k in 1..blocks.len() {
            starts[k] = starts[k - 1] + blocks[k - 1];
        }
        let locate = |g: usize| -> Result<(usize, usize), SdpError> {
            let g = g.checked_sub(1).ok_or_else(|| err("index 0"))?;
            let b = (0..blocks.len()).rev().find(|&b| starts[b] <= g).ok_or_else(|| err("index"))?;
            Ok((b, g - starts[b]))
        };
        let mut p = SdpProblem::new(blocks.clone());
        p.constraints = vec![SparseSym::default(); nv];
        let mut objective_next = false;
        for line in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.is_empty() {
                continue;
            }
            if t[0] == "#" {
                if t.get(1) == Some(&"objective") {
                    p.constant = t.get(3).ok_or_else(|| err("constant"))?.parse().map_err(|_| err("constant"))?;
                    objective_next = true;
                }
                continue;
            }
            if objective_next {
                p.objective = t.iter().map(|v| v.parse().map_err(|_| err("objective"))).collect::<Result<_, _>>()?;
                objective_next = false;
                continue;
            }
            if t.len() != 4 {
                return Err(err("expected 4 fields"));
            }
            let id: usize = t[0].parse().map_err(|_| err("matrix id"))?;
            let (b, r) = locate(t[1].parse().map_err(|_| err("row"))?)?;
            let (b2, c) = locate(t[2].parse().map_err(|_| err("col"))?)?;
            if b != b2 {
                return Err(err("entry crosses blocks"));
            }
            let v: f64 = t[3].parse().map_err(|_| err("value"))?;
            let target = if id == 0 { &mut p.offset } else { p.constraints.get_mut(id - 1).ok_or_else(|| err("matrix id"))? };
            target.push(b, r, c, v);
        }
        if nv == 0 {
            p.objective.clear();
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    NumericalFailure,
    /// Only for problems without variables whose offset is not PSD.
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::MaxIter => "max_iter",
            Self::NumericalFailure => "numerical_failure",
            Self::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 200, verbose: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub y: Vec<f64>,
    /// Dual matrix, one dense block per LMI block.
    pub x: Vec<Mat<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl SdpSolution {
    pub fn min_lmi_eigenvalue(&self, p: &SdpProblem) -> f64 {
        p.lmi(&self.y).iter().map(min_eig).fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn min_eig(m: &Mat<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.self_adjoint_eigenvalues(Side::Lower).map(|v| v[0]).unwrap_or(f64::NAN)
}

/// Eigen-clip onto the PSD cone.
pub fn psd_projection(m: &Mat<f64>) -> Mat<f64> {
    let n = m.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let Ok(evd) = sym.self_adjoint_eigen(Side::Lower) else {
        return Mat::zeros(n, n);
    };
    let u = evd.U();
    let s = evd.S().column_vector();
    let mut us = u.to_owned();
    for k in 0..n {
        let l = s[k].max(0.0);
        for i in 0..n {
            us[(i, k)] *= l;
        }
    }
    &us * u.transpose()
}

pub const CERTIFY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Certificate {
    Certified { bound: f64, max_residual: f64 },
    Rejected { reason: String },
}

impl Certificate {
    pub fn bound(&self) -> Option<f64> {
        match self {
            Self::Certified { bound, .. } => Some(*bound),
            Self::Rejected { .. } => None,
        }
    }
}

/// Re-derives a lower bound from the dual matrix alone. X is projected onto the PSD cone, so the
/// bound −⟨G0, X₊⟩ + c0 − Σ|r_i|·B_i is valid whenever |y_i| ≤ B_i for every feasible y.
pub fn certify_lower_bound(p: &SdpProblem, sol: &SdpSolution) -> Certificate {
    if p.n_vars() == 0 {
        return match sol.status {
            SolveStatus::Optimal => Certificate::Certified { bound: p.constant, max_residual: 0.0 },
            s => Certificate::Rejected { reason: format!("offset check ended with status {}", s.as_str()) },
        };
    }
    certify_dual(p, &sol.x)
}

/// Certificate check of a dual matrix alone: PSD projection, residuals, penalty.
pub fn certify_dual(p: &SdpProblem, x: &[Mat<f64>]) -> Certificate {
    if x.len() != p.blocks.len() || x.iter().zip(&p.blocks).any(|(x, &n)| x.nrows() != n || x.ncols() != n) {
        return Certificate::Rejected { reason: "dual matrix has the wrong shape".into() };
    }
    if x.iter().any(|x| (0..x.nrows()).any(|i| (0..x.ncols()).any(|j| !x[(i, j)].is_finite()))) {
        return Certificate::Rejected { reason: "dual matrix is not finite".into() };
    }
    let xp: Vec<Mat<f64>> = x.iter().map(psd_projection).collect();
    let r = p.dual_residual(&xp);
    let max_residual = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_residual > CERTIFY_TOL {
        return Certificate::Rejected { reason: format!("dual residual {max_residual:.3e} exceeds {CERTIFY_TOL:.0e}") };
    }
    let penalty = match &p.var_bounds {
        Some(b) => r.iter().zip(b).map(|(ri, bi)| ri.abs() * bi).sum(),
        None => 0.0,
    };
    Certificate::Certified { bound: p.dual_objective(&xp) - penalty, max_residual }
}
