//! Primed observables, the closed-form magic-square bound and the numerical checks of its derivation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{operator_sign, tensor, CMatrix, LinalgError};
use crate::quantum::{PvmFamily, Strategy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("strategy needs {inputs} inputs with {outcomes} outcomes per party")]
    DimensionMismatch { inputs: usize, outcomes: usize },
    #[error("noise parameter must be nonnegative, got {0}")]
    OutOfRange(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// (−1)^{first bit of a}
pub fn sign_first(a: usize) -> f64 {
    if a & 2 == 0 { 1.0 } else { -1.0 }
}

/// (−1)^{second bit of a}
pub fn sign_second(a: usize) -> f64 {
    if a & 1 == 0 { 1.0 } else { -1.0 }
}

/// (−1)^{parity of a}
pub fn sign_parity(a: usize) -> f64 {
    sign_first(a) * sign_second(a)
}

/// Raw Bob-side averages of the double-CHSH construction (before taking spectral signs).
#[derive(Debug, Clone, PartialEq)]
pub struct RawAverages {
    pub v3: CMatrix,
    pub w3: CMatrix,
    pub v4: CMatrix,
    pub w4: CMatrix,
}

/// Observables on the two parties. Slots 0 and 1 (labels 1, 2) live on Alice, slots 2 and 3 on Bob;
/// all matrices are local to their party.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimedOps {
    pub z: [CMatrix; 4],
    pub x: [CMatrix; 4],
    /// Magic square only.
    pub w: Option<[CMatrix; 4]>,
    /// Double CHSH only: Alice's observables for the other subtest, as [Z″₁, Z″₂] and [X″₁, X″₂].
    pub z_alt: Option<[CMatrix; 2]>,
    pub x_alt: Option<[CMatrix; 2]>,
    pub raw: Option<RawAverages>,
    dim_a: usize,
    dim_b: usize,
}

impl PrimedOps {
    /// Lift a local operator in slot `k` (0-based) to the joint space.
    pub fn lift(&self, k: usize, op: &CMatrix) -> CMatrix {
        if k < 2 {
            tensor(op, &CMatrix::identity(self.dim_b))
        } else {
            tensor(&CMatrix::identity(self.dim_a), op)
        }
    }

    pub fn zj(&self, k: usize) -> CMatrix {
        self.lift(k, &self.z[k])
    }

    pub fn xj(&self, k: usize) -> CMatrix {
        self.lift(k, &self.x[k])
    }

    pub fn wj(&self, k: usize) -> Option<CMatrix> {
        self.w.as_ref().map(|w| self.lift(k, &w[k]))
    }

    pub fn joint_identity(&self) -> CMatrix {
        CMatrix::identity(self.dim_a * self.dim_b)
    }
}

fn require(s: &Strategy, inputs: usize, outcomes: usize) -> Result<(), AnalyticError> {
    let ok = |f: &PvmFamily| f.n_inputs() == inputs && (0..inputs).all(|x| f.n_outcomes(x) == outcomes);
    if ok(&s.alice) && ok(&s.bob) {
        Ok(())
    } else {
        Err(AnalyticError::DimensionMismatch { inputs, outcomes })
    }
}

/// Sign assignments are fixed so the ideal strategy meets all nine conditions with value 1.
pub fn primed_magic(s: &Strategy) -> Result<PrimedOps, AnalyticError> {
    require(s, 3, 4)?;
    let (a, b) = (&s.alice, &s.bob);
    let neg = |m: CMatrix| m.scale_re(-1.0);
    let z = [
        a.observable(0, sign_first),
        a.observable(0, sign_second),
        b.observable(1, sign_first),
        neg(b.observable(0, sign_second)),
    ];
    let x = [
        a.observable(1, sign_first),
        a.observable(1, sign_second),
        b.observable(0, sign_first),
        b.observable(1, sign_second),
    ];
    let w = [
        a.observable(2, sign_second),
        a.observable(2, sign_parity),
        b.observable(2, sign_second),
        neg(b.observable(2, sign_parity)),
    ];
    Ok(PrimedOps { z, x, w: Some(w), z_alt: None, x_alt: None, raw: None, dim_a: s.dim_a(), dim_b: s.dim_b() })
}

/// Alice reads copy bits off her inputs directly; Bob's observables come from averaging over the
/// unused input bit and taking spectral signs (zero eigenvalues mapped to +1).
pub fn primed_double_chsh(s: &Strategy) -> Result<PrimedOps, AnalyticError> {
    require(s, 4, 4)?;
    let (a, b) = (&s.alice, &s.bob);
    let z = |x| a.observable(x, sign_first);
    let zz = |x| a.observable(x, sign_second);
    let half = |p: CMatrix, q: CMatrix| (&p + &q).scale_re(0.5);
    let v3 = half(b.observable(0, sign_first), b.observable(1, sign_first));
    let w3 = half(b.observable(2, sign_first), b.observable(3, sign_first));
    let v4 = half(b.observable(0, sign_second), b.observable(2, sign_second));
    let w4 = half(b.observable(1, sign_second), b.observable(3, sign_second));
    let x3 = operator_sign(&(&v3 + &w3))?;
    let z3 = operator_sign(&(&v3 - &w3))?;
    let x4 = operator_sign(&(&v4 + &w4))?;
    let z4 = operator_sign(&(&v4 - &w4))?;
    Ok(PrimedOps {
        z: [z(0), zz(0), z3, z4],
        x: [z(3), zz(3), x3, x4],
        w: None,
        z_alt: Some([z(1), zz(2)]),
        x_alt: Some([z(2), zz(1)]),
        raw: Some(RawAverages { v3, w3, v4, w4 }),
        dim_a: s.dim_a(),
        dim_b: s.dim_b(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonParams {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
}

/// (4√(2ε), √(2ε), 9√(2ε)). An earlier write-up of the derivation had 7√(2ε) for the third entry.
pub fn epsilon_params(eps: f64) -> Result<EpsilonParams, AnalyticError> {
    if !(eps >= 0.0) {
        return Err(AnalyticError::OutOfRange(eps));
    }
    let u = (2.0 * eps).sqrt();
    Ok(EpsilonParams { eps1: 4.0 * u, eps2: u, eps3: 9.0 * u })
}

pub fn norm_bound(p_weight: u32, e: &EpsilonParams) -> f64 {
    let p = f64::from(p_weight);
    (p / 2.0 * (3.0 * e.eps1 + 8.0 * e.eps2 + e.eps3) + e.eps1 + e.eps3 + 4.0 * e.eps2).sqrt()
        + (2.0 * e.eps1 + 10.0 * e.eps2 + 2.0 * e.eps3).sqrt()
}

/// Coefficient c(p) with norm_bound(p, epsilon_params(ε)) = c(p)·(2ε)^{1/4}.
pub fn norm_bound_coefficient(p_weight: u32) -> f64 {
    (29.0 * f64::from(p_weight) / 2.0 + 17.0).sqrt() + 6.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticBound {
    pub bound: f64,
    /// Set when the bound reaches √2, the largest value the left-hand side can take.
    pub trivial: bool,
}

pub fn magic_analytic_bound(eps: f64) -> Result<AnalyticBound, AnalyticError> {
    let bound = norm_bound(0, &epsilon_params(eps)?);
    Ok(AnalyticBound { bound, trivial: bound >= std::f64::consts::SQRT_2 })
}

/// ε at which the p = 0 bound reaches √2.
pub fn trivial_threshold() -> f64 {
    (std::f64::consts::SQRT_2 / norm_bound_coefficient(0)).powi(4) / 2.0
}

/// ‖M ψ‖ for a mixed state, read as √Tr[M†M ρ] = ‖M R‖_F with ρ = R R†. The factored form keeps
/// the error near machine precision where the trace form would lose half the digits.
pub fn state_norm(s: &Strategy, m: &CMatrix) -> f64 {
    let mr = m * &s.state.square_root_factor();
    mr.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStep {
    pub name: String,
    pub expression: String,
    pub value: f64,
    /// Budget in units of √(2ε).
    pub multiple: f64,
    pub budget: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub epsilon: f64,
    pub observed_epsilon: f64,
    pub precondition_ok: bool,
    pub steps: Vec<ChainStep>,
    pub pass: bool,
}

const CHAIN_SLACK: f64 = 1e-9;

/// Evaluates every inequality in the anticommutation chain against its budget k·√(2ε).
pub fn verify_magic_chain(s: &Strategy, eps: f64) -> Result<ChainReport, AnalyticError> {
    if !(eps >= 0.0) {
        return Err(AnalyticError::OutOfRange(eps));
    }
    let p = primed_magic(s)?;
    let observed = crate::games::conditions_from(&p, s).epsilon;
    let z: Vec<CMatrix> = (0..4).map(|k| p.zj(k)).collect();
    let x: Vec<CMatrix> = (0..4).map(|k| p.xj(k)).collect();
    let w: Vec<CMatrix> = (0..4).map(|k| p.wj(k).expect("magic ops carry W")).collect();
    let prod = |ms: &[&CMatrix]| ms.iter().skip(1).fold(ms[0].clone(), |acc, m| &acc * *m);
    let unit = (2.0 * eps).sqrt();
    let mut steps = Vec::new();
    let mut push = |name: &str, expr: &str, m: CMatrix, k: f64| {
        let value = state_norm(s, &m);
        let budget = k * unit;
        steps.push(ChainStep {
            name: name.to_string(),
            expression: expr.to_string(),
            value,
            multiple: k,
            budget,
            pass: value <= budget + CHAIN_SLACK,
        });
    };
    // single-condition consequences
    push("pair_zi", "Z1 - X3", &z[0] - &x[2], 1.0);
    push("pair_zii", "Z2 - X4", &z[1] - &x[3], 1.0);
    push("pair_xi", "X1 - Z3", &x[0] - &z[2], 1.0);
    push("pair_xii", "X2 - Z4", &x[1] - &z[3], 1.0);
    push("step1", "W1 W2 + W3 W4", &prod(&[&w[0], &w[1]]) + &prod(&[&w[2], &w[3]]), 1.0);
    push("step2", "W1 X4 Z3 + W3 X2 X1", &prod(&[&w[0], &x[3], &z[2]]) + &prod(&[&w[2], &x[1], &x[0]]), 3.0);
    push(
        "step3",
        "X4 Z3 X3 Z4 + X2 X1 Z1 Z2",
        &prod(&[&x[3], &z[2], &x[2], &z[3]]) + &prod(&[&x[1], &x[0], &z[0], &z[1]]),
        5.0,
    );
    push(
        "step4",
        "X4 Z3 X3 X2 + X2 X1 Z1 X4",
        &prod(&[&x[3], &z[2], &x[2], &x[1]]) + &prod(&[&x[1], &x[0], &z[0], &x[3]]),
        7.0,
    );
    push("step5", "Z3 X3 + X1 Z1", &prod(&[&z[2], &x[2]]) + &prod(&[&x[0], &z[0]]), 7.0);
    push("step6", "Z1 X1 + X1 Z1", &prod(&[&z[0], &x[0]]) + &prod(&[&x[0], &z[0]]), 9.0);
    push("step7", "Z1 X2 - Z4 X3", &prod(&[&z[0], &x[1]]) - &prod(&[&z[3], &x[2]]), 2.0);
    push("step8", "Z1 X2 - X2 Z1", &prod(&[&z[0], &x[1]]) - &prod(&[&x[1], &z[0]]), 4.0);
    let precondition_ok = observed <= eps + 1e-12;
    let pass = precondition_ok && steps.iter().all(|st| st.pass);
    Ok(ChainReport { epsilon: eps, observed_epsilon: observed, precondition_ok, steps, pass })
}

/// 4-bit string s₁s₂s₃s₄ ↦ s₃s₄s₁s₂, bits stored most significant first.
pub fn swap_halves(s: u8) -> u8 {
    ((s & 0b11) << 2) | ((s >> 2) & 0b11)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationReport {
    /// max over (s,t) of ‖X^s Z^t ψ − (−1)^{s·t} Z^t X^s ψ‖
    pub commutation_residual: f64,
    /// max over s of min over ± of ‖X^s ψ ∓ Z^{R(s)} ψ‖
    pub correspondence_residual: f64,
    /// Sign found for each s (index = s), +1 or −1.
    pub correspondence_signs: Vec<i8>,
    pub max_residual: f64,
}

fn ordered_product(ops: &[CMatrix], bits: u8, id: &CMatrix) -> CMatrix {
    (0..4).filter(|k| bits & (8 >> k) != 0).fold(id.clone(), |acc, k| &acc * &ops[k])
}

pub fn verify_ideal_double_chsh(s: &Strategy) -> Result<RelationReport, AnalyticError> {
    let p = primed_double_chsh(s)?;
    let id = p.joint_identity();
    let z: Vec<CMatrix> = (0..4).map(|k| p.zj(k)).collect();
    let x: Vec<CMatrix> = (0..4).map(|k| p.xj(k)).collect();
    let xs: Vec<CMatrix> = (0..16u8).map(|b| ordered_product(&x, b, &id)).collect();
    let zs: Vec<CMatrix> = (0..16u8).map(|b| ordered_product(&z, b, &id)).collect();
    let mut comm: f64 = 0.0;
    for sb in 0..16u8 {
        for tb in 0..16u8 {
            let sign = if (sb & tb).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            let d = &(&xs[sb as usize] * &zs[tb as usize]) - &(&zs[tb as usize] * &xs[sb as usize]).scale_re(sign);
            comm = comm.max(state_norm(s, &d));
        }
    }
    let mut corr: f64 = 0.0;
    let mut signs = Vec::with_capacity(16);
    for sb in 0..16u8 {
        let zr = &zs[swap_halves(sb) as usize];
        let plus = state_norm(s, &(&xs[sb as usize] - zr));
        let minus = state_norm(s, &(&xs[sb as usize] + zr));
        signs.push(if plus <= minus { 1 } else { -1 });
        corr = corr.max(plus.min(minus));
    }
    Ok(RelationReport {
        commutation_residual: comm,
        correspondence_residual: corr,
        correspondence_signs: signs,
        max_residual: comm.max(corr),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{double_chsh_state, magic_settings, magic_state, Strategy};
    use crate::scenario::Scenario;

    #[test]
    fn magic_primed_square_to_identity() {
        let s = Scenario::Magic.ideal_strategy();
        let p = primed_magic(&s).unwrap();
        let id = CMatrix::identity(4);
        for m in p.z.iter().chain(&p.x).chain(p.w.as_ref().unwrap()) {
            assert!((m * m).max_abs_diff(&id) < 1e-10);
        }
        let comm = |a: &CMatrix, b: &CMatrix| (&(a * b) - &(b * a)).max_abs();
        let w = p.w.as_ref().unwrap();
        assert!(comm(&p.z[0], &p.z[1]) < 1e-12);
        assert!(comm(&p.x[0], &p.x[1]) < 1e-12);
        assert!(comm(&w[0], &w[1]) < 1e-12);
        assert!(comm(&w[2], &w[3]) < 1e-12);
        // Z'1 = σz ⊗ I, Z'2 = I ⊗ σz
        let pz = crate::linalg::pauli::z();
        assert!(p.z[0].max_abs_diff(&tensor(&pz, &crate::linalg::pauli::i2())) < 1e-12);
        assert!(p.z[1].max_abs_diff(&tensor(&crate::linalg::pauli::i2(), &pz)) < 1e-12);
        let prod = &(&p.wj(0).unwrap() * &p.wj(1).unwrap()) * &(&p.wj(2).unwrap() * &p.wj(3).unwrap());
        assert!((s.expectation_joint(&prod).re + 1.0).abs() < 1e-10);
    }

    #[test]
    fn params_examples() {
        assert_eq!(epsilon_params(0.0).unwrap(), EpsilonParams { eps1: 0.0, eps2: 0.0, eps3: 0.0 });
        let e = epsilon_params(0.02).unwrap();
        assert!((e.eps1 - 0.8).abs() < 1e-12 && (e.eps2 - 0.2).abs() < 1e-12 && (e.eps3 - 1.8).abs() < 1e-12);
        let e = epsilon_params(2e-4).unwrap();
        assert!((e.eps1 - 0.08).abs() < 1e-12 && (e.eps2 - 0.02).abs() < 1e-12 && (e.eps3 - 0.18).abs() < 1e-12);
        assert!(epsilon_params(-1.0).is_err());
        assert!(epsilon_params(f64::NAN).is_err());
    }

    #[test]
    fn bound_closed_form() {
        for p in 0..=4 {
            for eps in [1e-6, 1e-4, 0.02] {
                let direct = norm_bound(p, &epsilon_params(eps).unwrap());
                assert!((direct - norm_bound_coefficient(p) * (2.0 * eps).powf(0.25)).abs() < 1e-12);
            }
        }
        assert_eq!(norm_bound(0, &epsilon_params(0.0).unwrap()), 0.0);
        let b = magic_analytic_bound(1e-6).unwrap();
        assert!((b.bound - 0.3806).abs() < 1e-4 && !b.trivial);
        let b0 = magic_analytic_bound(0.0).unwrap();
        assert_eq!(b0, AnalyticBound { bound: 0.0, trivial: false });
        assert!(magic_analytic_bound(3e-4).unwrap().trivial);
    }

    #[test]
    fn double_chsh_ideal_quotients() {
        let s = Scenario::DoubleChsh.ideal_strategy();
        let p = primed_double_chsh(&s).unwrap();
        let raw = p.raw.as_ref().unwrap();
        let (vals, _) = crate::linalg::hermitian_eig(&(&raw.v3 + &raw.w3)).unwrap();
        assert!(vals.iter().all(|l| l.abs() > 1e-3));
        assert!((&p.x[2] * &p.x[2]).max_abs_diff(&CMatrix::identity(4)) < 1e-10);
        assert!(state_norm(&s, &(&p.zj(0) - &p.xj(2))) < 1e-10);
    }

    #[test]
    fn mixed_state_quotients_stay_unitary() {
        let st = Strategy::new(double_chsh_state(1.0).unwrap(), crate::quantum::chsh_settings(), crate::quantum::chsh_settings())
            .unwrap();
        let p = primed_double_chsh(&st).unwrap();
        for m in p.x.iter().chain(&p.z) {
            assert!((m * m).max_abs_diff(&CMatrix::identity(4)) < 1e-10);
        }
    }

    #[test]
    fn relation_examples() {
        let s = Scenario::DoubleChsh.ideal_strategy();
        let r = verify_ideal_double_chsh(&s).unwrap();
        assert!(r.max_residual <= 1e-9, "{r:?}");
        // s = 1100: X'1 X'2 ψ = ± Z'3 Z'4 ψ
        assert_eq!(swap_halves(0b1100), 0b0011);
        for s4 in 0..16u8 {
            assert_eq!(swap_halves(swap_halves(s4)), s4);
        }
    }

    #[test]
    fn chain_on_ideal_and_noisy() {
        let ideal = Scenario::Magic.ideal_strategy();
        let r = verify_magic_chain(&ideal, 0.0).unwrap();
        assert!(r.pass);
        assert!(r.steps.iter().all(|s| s.value < 1e-9));
        let noisy = Strategy::new(magic_state(0.01).unwrap(), magic_settings(), magic_settings()).unwrap();
        let eps = crate::games::magic_conditions(&noisy).unwrap().epsilon;
        assert!(verify_magic_chain(&noisy, eps).unwrap().pass);
        // budget smaller than the observed deviation violates the precondition
        assert!(!verify_magic_chain(&noisy, 0.001).unwrap().pass);
    }
}
