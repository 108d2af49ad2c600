//! States, projective measurements and the behaviors they generate.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{kron_vec, permute_factors, re, tensor, CMatrix, LinalgError, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("noise parameter {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("unknown state name `{0}`")]
    UnknownName(String),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid measurement family: {0}")]
    InvalidPvm(String),
    #[error("invalid behavior: {0}")]
    InvalidBehavior(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

const STATE_TOL: f64 = 1e-10;
const PVM_TOL: f64 = 1e-10;
const BEHAVIOR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityState {
    matrix: CMatrix,
    party_dims: Vec<usize>,
}

impl DensityState {
    pub fn new(matrix: CMatrix, party_dims: Vec<usize>) -> Result<Self, QuantumError> {
        let dim: usize = party_dims.iter().product();
        if !matrix.is_square() || matrix.rows() != dim {
            return Err(QuantumError::DimensionMismatch { expected: dim, found: matrix.rows() });
        }
        let dev = matrix.hermitian_deviation();
        if dev > 1e-12 {
            return Err(QuantumError::InvalidState(format!("not Hermitian ({dev:.2e})")));
        }
        let tr = matrix.trace();
        if (tr - re(1.0)).norm() > 1e-12 {
            return Err(QuantumError::InvalidState(format!("trace {tr}")));
        }
        let lmin = crate::linalg::min_eigenvalue(&matrix)?;
        if lmin < -STATE_TOL {
            return Err(QuantumError::InvalidState(format!("negative eigenvalue {lmin:.3e}")));
        }
        Ok(Self { matrix, party_dims })
    }

    pub fn pure(v: &[C64], party_dims: Vec<usize>) -> Result<Self, QuantumError> {
        Self::new(CMatrix::projector(v), party_dims)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn party_dims(&self) -> &[usize] {
        &self.party_dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// R with ρ = R R†, from the spectral decomposition. Eigenvalues at roundoff level are
    /// dropped so a pure state gives an exact rank-one factor.
    pub fn square_root_factor(&self) -> CMatrix {
        let (vals, vecs) = crate::linalg::hermitian_eig(&self.matrix).expect("validated state is Hermitian");
        let d = vals.len();
        let cutoff = 1e-13 * vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        CMatrix::from_fn(d, d, |i, k| if vals[k] > cutoff { vecs[(i, k)] * vals[k].sqrt() } else { C64::new(0.0, 0.0) })
    }

    pub fn purity(&self) -> f64 {
        self.matrix.trace_product(&self.matrix).re
    }

    /// ⟨v|ρ|v⟩
    pub fn overlap(&self, v: &[C64]) -> f64 {
        let rv = self.matrix.mul_vec(v);
        v.iter().zip(&rv).map(|(a, b)| a.conj() * b).sum::<C64>().re
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NamedState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
    ChiPlus,
    ChiMinus,
    ChiPrimePlus,
    ChiPrimeMinus,
    Psi0,
}

impl NamedState {
    pub const ALL: [NamedState; 9] = [
        Self::PhiPlus,
        Self::PhiMinus,
        Self::PsiPlus,
        Self::PsiMinus,
        Self::ChiPlus,
        Self::ChiMinus,
        Self::ChiPrimePlus,
        Self::ChiPrimeMinus,
        Self::Psi0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::PhiPlus => "phi_plus",
            Self::PhiMinus => "phi_minus",
            Self::PsiPlus => "psi_plus",
            Self::PsiMinus => "psi_minus",
            Self::ChiPlus => "chi_plus",
            Self::ChiMinus => "chi_minus",
            Self::ChiPrimePlus => "chi_prime_plus",
            Self::ChiPrimeMinus => "chi_prime_minus",
            Self::Psi0 => "psi0",
        }
    }

    /// Two-qubit state vector in the basis |00⟩, |01⟩, |10⟩, |11⟩.
    pub fn vector(self) -> Vec<C64> {
        let s = FRAC_1_SQRT_2;
        let comb = |a: [f64; 4], ca: f64, b: [f64; 4], cb: f64| -> Vec<C64> {
            (0..4).map(|i| re(ca * a[i] + cb * b[i])).collect()
        };
        let phi_p = [s, 0.0, 0.0, s];
        let phi_m = [s, 0.0, 0.0, -s];
        let psi_p = [0.0, s, s, 0.0];
        let psi_m = [0.0, s, -s, 0.0];
        match self {
            Self::PhiPlus => comb(phi_p, 1.0, psi_p, 0.0),
            Self::PhiMinus => comb(phi_m, 1.0, psi_p, 0.0),
            Self::PsiPlus => comb(psi_p, 1.0, phi_p, 0.0),
            Self::PsiMinus => comb(psi_m, 1.0, phi_p, 0.0),
            Self::ChiPlus => comb(phi_m, s, psi_p, s),
            Self::ChiMinus => comb(phi_m, s, psi_p, -s),
            Self::ChiPrimePlus => comb(phi_p, s, psi_m, s),
            Self::ChiPrimeMinus => comb(phi_p, s, psi_m, -s),
            Self::Psi0 => comb(phi_p, (PI / 8.0).cos(), psi_m, (PI / 8.0).sin()),
        }
    }
}

impl FromStr for NamedState {
    type Err = QuantumError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| QuantumError::UnknownName(s.to_string()))
    }
}

pub fn named_state(name: NamedState) -> DensityState {
    DensityState::pure(&name.vector(), vec![2, 2]).expect("named states are normalized")
}

/// (1-ε)|v⟩⟨v| + ε I/d
pub fn depolarized(v: &[C64], eps: f64) -> Result<CMatrix, QuantumError> {
    check_eps(eps)?;
    let d = v.len();
    Ok(&CMatrix::projector(v).scale_re(1.0 - eps) + &CMatrix::identity(d).scale_re(eps / d as f64))
}

pub(crate) fn check_eps(eps: f64) -> Result<(), QuantumError> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(QuantumError::OutOfRange(eps));
    }
    Ok(())
}

// Factors are given per copy as (A_j, B_j); output is ordered (A_I, A_II, B_I, B_II).
fn two_copy(first: &CMatrix, second: &CMatrix) -> CMatrix {
    permute_factors(&tensor(first, second), &[2, 2, 2, 2], &[0, 2, 1, 3]).expect("4 qubits")
}

/// Two copies given as (A_j, B_j) vectors, reordered party-major.
pub fn two_copy_vector(first: &[C64], second: &[C64]) -> Vec<C64> {
    crate::linalg::permute_vector(&kron_vec(first, second), &[2, 2, 2, 2], &[0, 2, 1, 3])
}

pub fn double_chsh_state(eps: f64) -> Result<DensityState, QuantumError> {
    let f = depolarized(&NamedState::Psi0.vector(), eps)?;
    DensityState::new(two_copy(&f, &f), vec![4, 4])
}

pub fn magic_state(eps: f64) -> Result<DensityState, QuantumError> {
    let f1 = depolarized(&NamedState::PhiPlus.vector(), eps)?;
    let f2 = depolarized(&NamedState::ChiPrimePlus.vector(), eps)?;
    DensityState::new(two_copy(&f1, &f2), vec![4, 4])
}

pub fn single_chsh_state(eps: f64) -> Result<DensityState, QuantumError> {
    DensityState::new(depolarized(&NamedState::Psi0.vector(), eps)?, vec![2, 2])
}

/// Projective measurements indexed by input, then outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvmFamily {
    projectors: Vec<Vec<CMatrix>>,
}

impl PvmFamily {
    pub fn new(projectors: Vec<Vec<CMatrix>>) -> Result<Self, QuantumError> {
        let fam = Self { projectors };
        fam.validate()?;
        Ok(fam)
    }

    pub fn validate(&self) -> Result<(), QuantumError> {
        let dim = self.dim();
        for (x, outs) in self.projectors.iter().enumerate() {
            if outs.is_empty() {
                return Err(QuantumError::InvalidPvm(format!("input {x} has no outcomes")));
            }
            let mut sum = CMatrix::zeros(dim, dim);
            for (a, p) in outs.iter().enumerate() {
                if p.rows() != dim || p.cols() != dim {
                    return Err(QuantumError::DimensionMismatch { expected: dim, found: p.rows() });
                }
                if p.hermitian_deviation() > PVM_TOL || (p * p).max_abs_diff(p) > PVM_TOL {
                    return Err(QuantumError::InvalidPvm(format!("Π[{a}|{x}] is not a projector")));
                }
                for (b, q) in outs.iter().enumerate().skip(a + 1) {
                    if (p * q).max_abs() > PVM_TOL {
                        return Err(QuantumError::InvalidPvm(format!("Π[{a}|{x}] and Π[{b}|{x}] overlap")));
                    }
                }
                sum += p;
            }
            if sum.max_abs_diff(&CMatrix::identity(dim)) > PVM_TOL {
                return Err(QuantumError::InvalidPvm(format!("input {x} is incomplete")));
            }
        }
        Ok(())
    }

    pub fn n_inputs(&self) -> usize {
        self.projectors.len()
    }

    pub fn n_outcomes(&self, x: usize) -> usize {
        self.projectors[x].len()
    }

    pub fn dim(&self) -> usize {
        self.projectors.first().and_then(|o| o.first()).map_or(0, CMatrix::rows)
    }

    pub fn projector(&self, x: usize, a: usize) -> &CMatrix {
        &self.projectors[x][a]
    }

    pub fn input(&self, x: usize) -> &[CMatrix] {
        &self.projectors[x]
    }

    /// Σ_a sign(a) Π_{a|x}
    pub fn observable(&self, x: usize, sign: impl Fn(usize) -> f64) -> CMatrix {
        let dim = self.dim();
        self.projectors[x]
            .iter()
            .enumerate()
            .fold(CMatrix::zeros(dim, dim), |acc, (a, p)| &acc + &p.scale_re(sign(a)))
    }
}

fn basis_projectors(v0: [f64; 2], v1: [f64; 2]) -> [CMatrix; 2] {
    [
        CMatrix::projector(&[re(v0[0]), re(v0[1])]),
        CMatrix::projector(&[re(v1[0]), re(v1[1])]),
    ]
}

/// Single-qubit σ_z (m = 0) or σ_x (m = 1) eigenprojectors, outcome 0 for eigenvalue +1.
pub fn qubit_basis(m: usize) -> [CMatrix; 2] {
    let s = FRAC_1_SQRT_2;
    match m {
        0 => basis_projectors([1.0, 0.0], [0.0, 1.0]),
        _ => basis_projectors([s, s], [s, -s]),
    }
}

/// Input x = 2x_I + x_II, outcome a = 2a_I + a_II; bit value 0 measures σ_z and 1 measures σ_x.
pub fn chsh_settings() -> PvmFamily {
    let proj = (0..4)
        .map(|x| {
            let (b1, b2) = (qubit_basis(x >> 1), qubit_basis(x & 1));
            (0..4).map(|a| tensor(&b1[a >> 1], &b2[a & 1])).collect()
        })
        .collect();
    PvmFamily { projectors: proj }
}

/// Inputs: 0 = z⊗z, 1 = x⊗x, 2 = Bell-type basis (χ₊, χ₋, χ′₊, χ′₋).
pub fn magic_settings() -> PvmFamily {
    let z = qubit_basis(0);
    let x = qubit_basis(1);
    let prod = |b: &[CMatrix; 2]| (0..4).map(|a| tensor(&b[a >> 1], &b[a & 1])).collect::<Vec<_>>();
    let bell = [NamedState::ChiPlus, NamedState::ChiMinus, NamedState::ChiPrimePlus, NamedState::ChiPrimeMinus]
        .iter()
        .map(|n| CMatrix::projector(&n.vector()))
        .collect();
    PvmFamily { projectors: vec![prod(&z), prod(&x), bell] }
}

pub fn single_chsh_settings() -> PvmFamily {
    PvmFamily { projectors: vec![qubit_basis(0).to_vec(), qubit_basis(1).to_vec()] }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub state: DensityState,
    pub alice: PvmFamily,
    pub bob: PvmFamily,
}

impl Strategy {
    pub fn new(state: DensityState, alice: PvmFamily, bob: PvmFamily) -> Result<Self, QuantumError> {
        if state.party_dims().len() != 2 {
            return Err(QuantumError::DimensionMismatch { expected: 2, found: state.party_dims().len() });
        }
        for (dim, fam) in state.party_dims().iter().zip([&alice, &bob]) {
            if fam.dim() != *dim {
                return Err(QuantumError::DimensionMismatch { expected: *dim, found: fam.dim() });
            }
        }
        Ok(Self { state, alice, bob })
    }

    pub fn dim_a(&self) -> usize {
        self.state.party_dims()[0]
    }

    pub fn dim_b(&self) -> usize {
        self.state.party_dims()[1]
    }

    /// Tr[ρ (A ⊗ B)]
    pub fn expectation(&self, a: &CMatrix, b: &CMatrix) -> C64 {
        self.state.matrix().trace_product(&tensor(a, b))
    }

    /// Tr[ρ O] for an operator on the joint space.
    pub fn expectation_joint(&self, op: &CMatrix) -> C64 {
        self.state.matrix().trace_product(op)
    }
}

/// P(a,b|x,y), stored densely as [x][y][a][b].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BehaviorJson", into = "BehaviorJson")]
pub struct Behavior {
    n_x: usize,
    n_y: usize,
    n_a: usize,
    n_b: usize,
    table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BehaviorJson {
    n_x: usize,
    n_y: usize,
    n_a: usize,
    n_b: usize,
    table: Vec<Vec<Vec<Vec<f64>>>>,
}

impl TryFrom<BehaviorJson> for Behavior {
    type Error = QuantumError;
    fn try_from(j: BehaviorJson) -> Result<Self, Self::Error> {
        let bad = || QuantumError::InvalidBehavior("table shape does not match the declared counts".into());
        if j.table.len() != j.n_x {
            return Err(bad());
        }
        let mut flat = Vec::with_capacity(j.n_x * j.n_y * j.n_a * j.n_b);
        for tx in &j.table {
            if tx.len() != j.n_y {
                return Err(bad());
            }
            for ty in tx {
                if ty.len() != j.n_a {
                    return Err(bad());
                }
                for ta in ty {
                    if ta.len() != j.n_b {
                        return Err(bad());
                    }
                    flat.extend_from_slice(ta);
                }
            }
        }
        Behavior::new(j.n_x, j.n_y, j.n_a, j.n_b, flat)
    }
}

impl From<Behavior> for BehaviorJson {
    fn from(b: Behavior) -> Self {
        let table = (0..b.n_x)
            .map(|x| {
                (0..b.n_y)
                    .map(|y| (0..b.n_a).map(|a| (0..b.n_b).map(|bb| b.p(x, y, a, bb)).collect()).collect())
                    .collect()
            })
            .collect();
        BehaviorJson { n_x: b.n_x, n_y: b.n_y, n_a: b.n_a, n_b: b.n_b, table }
    }
}

impl Behavior {
    pub fn new(n_x: usize, n_y: usize, n_a: usize, n_b: usize, table: Vec<f64>) -> Result<Self, QuantumError> {
        if table.len() != n_x * n_y * n_a * n_b {
            return Err(QuantumError::InvalidBehavior(format!(
                "expected {} entries, found {}",
                n_x * n_y * n_a * n_b,
                table.len()
            )));
        }
        let b = Self { n_x, n_y, n_a, n_b, table };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), QuantumError> {
        if let Some(v) = self.table.iter().find(|v| !(-1e-12..=1.0 + 1e-12).contains(*v)) {
            return Err(QuantumError::InvalidBehavior(format!("probability {v} outside [0, 1]")));
        }
        for x in 0..self.n_x {
            for y in 0..self.n_y {
                let s: f64 = (0..self.n_a).flat_map(|a| (0..self.n_b).map(move |b| (a, b))).map(|(a, b)| self.p(x, y, a, b)).sum();
                if (s - 1.0).abs() > BEHAVIOR_TOL {
                    return Err(QuantumError::InvalidBehavior(format!("P(·,·|{x},{y}) sums to {s}")));
                }
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> (usize, usize, usize, usize) {
        (self.n_x, self.n_y, self.n_a, self.n_b)
    }

    #[inline]
    pub fn p(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.table[((x * self.n_y + y) * self.n_a + a) * self.n_b + b]
    }

    /// Σ_b P(a,b|x,y)
    pub fn alice_marginal(&self, x: usize, y: usize, a: usize) -> f64 {
        (0..self.n_b).map(|b| self.p(x, y, a, b)).sum()
    }

    /// Σ_a P(a,b|x,y)
    pub fn bob_marginal(&self, x: usize, y: usize, b: usize) -> f64 {
        (0..self.n_a).map(|a| self.p(x, y, a, b)).sum()
    }

    /// Largest dependence of either party's marginal on the other party's input.
    pub fn signaling_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for x in 0..self.n_x {
            for a in 0..self.n_a {
                let r = self.alice_marginal(x, 0, a);
                for y in 1..self.n_y {
                    dev = dev.max((self.alice_marginal(x, y, a) - r).abs());
                }
            }
        }
        for y in 0..self.n_y {
            for b in 0..self.n_b {
                let r = self.bob_marginal(0, y, b);
                for x in 1..self.n_x {
                    dev = dev.max((self.bob_marginal(x, y, b) - r).abs());
                }
            }
        }
        dev
    }

    pub fn uniform(n_x: usize, n_y: usize, n_a: usize, n_b: usize) -> Self {
        let v = 1.0 / (n_a * n_b) as f64;
        Self { n_x, n_y, n_a, n_b, table: vec![v; n_x * n_y * n_a * n_b] }
    }
}

pub fn behavior_from_strategy(s: &Strategy) -> Result<Behavior, QuantumError> {
    let (nx, ny) = (s.alice.n_inputs(), s.bob.n_inputs());
    let na = s.alice.n_outcomes(0);
    let nb = s.bob.n_outcomes(0);
    if (0..nx).any(|x| s.alice.n_outcomes(x) != na) || (0..ny).any(|y| s.bob.n_outcomes(y) != nb) {
        return Err(QuantumError::InvalidPvm("inputs must share one outcome count per party".into()));
    }
    let mut table = Vec::with_capacity(nx * ny * na * nb);
    for x in 0..nx {
        for y in 0..ny {
            for a in 0..na {
                for b in 0..nb {
                    let v = s.expectation(s.alice.projector(x, a), s.bob.projector(y, b)).re;
                    // clip rounding noise around 0
                    table.push(if v.abs() < 1e-15 { 0.0 } else { v });
                }
            }
        }
    }
    Behavior::new(nx, ny, na, nb, table)
}

fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    C64::new(a, b)
}

/// Haar-ish random unitary: Gram-Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<C64> = (0..dim).map(|_| gaussian_c64(rng)).collect();
        for u in &cols {
            let ov: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= ov * ui;
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-8 {
            cols.push(v.into_iter().map(|z| z / n).collect());
        }
    }
    CMatrix::from_fn(dim, dim, |i, j| cols[j][i])
}

/// Random PVM family; projector ranks are drawn at random and may be zero.
pub fn random_pvm<R: Rng + ?Sized>(dim: usize, n_inputs: usize, n_outcomes: usize, rng: &mut R) -> PvmFamily {
    let projectors = (0..n_inputs)
        .map(|_| {
            let u = random_unitary(dim, rng);
            let mut owner: Vec<usize> = (0..dim).map(|k| k % n_outcomes).collect();
            // shuffle column ownership so ranks vary between inputs
            for k in (1..dim).rev() {
                let j = rng.random_range(0..=k);
                owner.swap(k, j);
            }
            if rng.random_bool(0.3) {
                owner[0] = rng.random_range(0..n_outcomes);
            }
            (0..n_outcomes)
                .map(|a| {
                    CMatrix::from_fn(dim, dim, |i, j| {
                        (0..dim).filter(|&k| owner[k] == a).map(|k| u[(i, k)] * u[(j, k)].conj()).sum()
                    })
                })
                .collect()
        })
        .collect();
    PvmFamily { projectors }
}

/// Random full-rank mixed state G G† / Tr[G G†].
pub fn random_density<R: Rng + ?Sized>(party_dims: Vec<usize>, rng: &mut R) -> DensityState {
    let d: usize = party_dims.iter().product();
    let g = CMatrix::from_fn(d, d, |_, _| gaussian_c64(rng));
    let m = &g * &g.adjoint();
    let tr = m.trace().re;
    let m = m.scale_re(1.0 / tr).hermitian_part();
    DensityState::new(m, party_dims).expect("G G† is a valid state")
}
