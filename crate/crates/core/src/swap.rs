//! Swap isometry built from the measured projectors, and the fidelity it certifies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{re, tensor, CMatrix, C64};
use crate::npa::word::{canonicalize, Letter, Party, Word};
use crate::quantum::{PvmFamily, Strategy};
use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwapError {
    #[error("measurement family lacks input {input} with {outcomes} outcomes")]
    MissingInput { input: usize, outcomes: usize },
    #[error("strategy dimensions do not match the {0} swap")]
    DimensionMismatch(Scenario),
}

/// (−1)^{|mask ∧ a|}: the sign with which outcome a enters the flip X_mask.
pub fn flip_sign(mask: usize, a: usize) -> f64 {
    if (mask & a).count_ones() % 2 == 0 { 1.0 } else { -1.0 }
}

/// Branch operators S^u indexed by the ancilla bit string u.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapBranches {
    pub branches: Vec<CMatrix>,
}

/// S^u = X_u Π_{u|0}, with X_u the signed sum of the flip input's projectors.
pub fn build_swap(pvm: &PvmFamily, variant: Scenario) -> Result<SwapBranches, SwapError> {
    let n = variant.n_outcomes();
    let xin = variant.flip_input();
    for input in [0, xin] {
        if pvm.n_inputs() <= input || pvm.n_outcomes(input) != n {
            return Err(SwapError::MissingInput { input, outcomes: n });
        }
    }
    let branches = (0..n)
        .map(|u| {
            let flip = pvm.observable(xin, |a| flip_sign(u, a));
            &flip * pvm.projector(0, u)
        })
        .collect();
    Ok(SwapBranches { branches })
}

/// max-norm of Σ (S^u)† S^u − I
pub fn check_swap_isometry(sb: &SwapBranches) -> f64 {
    let d = sb.branches.first().map_or(0, CMatrix::rows);
    let sum = sb.branches.iter().fold(CMatrix::zeros(d, d), |acc, s| &acc + &(&s.adjoint() * s));
    sum.max_abs_diff(&CMatrix::identity(d))
}

/// ρ_{A′B′}[(u,v),(u′,v′)] = Tr[(S_A^{u′} ⊗ S_B^{v′})† (S_A^u ⊗ S_B^v) ρ]
pub fn ancilla_state(s: &Strategy, variant: Scenario) -> Result<CMatrix, SwapError> {
    let sa = build_swap(&s.alice, variant)?;
    let sb = build_swap(&s.bob, variant)?;
    if s.dim_a() != sa.branches[0].rows() || s.dim_b() != sb.branches[0].rows() {
        return Err(SwapError::DimensionMismatch(variant));
    }
    let n = sa.branches.len();
    let kron: Vec<CMatrix> = (0..n * n).map(|k| tensor(&sa.branches[k / n], &sb.branches[k % n])).collect();
    let rho = s.state.matrix();
    let rk: Vec<CMatrix> = kron.iter().map(|k| k * rho).collect();
    Ok(CMatrix::from_fn(n * n, n * n, |r, c| kron[c].adjoint().trace_product(&rk[r])))
}

pub fn isometry_fidelity(s: &Strategy, variant: Scenario) -> Result<f64, SwapError> {
    let anc = ancilla_state(s, variant)?;
    let t = variant.target_vector();
    let at = anc.mul_vec(&t);
    Ok(t.iter().zip(&at).map(|(a, b)| a.conj() * b).sum::<C64>().re)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalTerm {
    pub alice: Vec<Letter>,
    pub bob: Vec<Letter>,
    pub re: f64,
    pub im: f64,
}

/// F = Σ coeff ⟨alice ⊗ bob⟩ + constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityFunctional {
    pub terms: Vec<FunctionalTerm>,
    pub constant: f64,
}

impl FidelityFunctional {
    pub fn coefficient(t: &FunctionalTerm) -> C64 {
        C64::new(t.re, t.im)
    }

    /// Joint canonical word of each term.
    pub fn words(&self) -> impl Iterator<Item = (Word, C64)> + '_ {
        self.terms.iter().map(|t| {
            let w = Word::new(t.alice.iter().chain(&t.bob).copied().collect());
            (w, Self::coefficient(t))
        })
    }

    pub fn evaluate(&self, s: &Strategy) -> f64 {
        self.constant + self.words().map(|(w, c)| c * w.expectation(s)).sum::<C64>().re
    }

    /// Evaluate with an arbitrary moment oracle.
    pub fn evaluate_with(&self, mut moment: impl FnMut(&Word) -> C64) -> f64 {
        self.constant + self.words().map(|(w, c)| c * moment(&w)).sum::<C64>().re
    }
}

// (S^{u2})† S^{u1} = Π_{u2|0} X_{u1⊕u2} Π_{u1|0}, expanded over the flip input's outcomes.
fn branch_pair(party: Party, u2: usize, u1: usize, variant: Scenario) -> Vec<(f64, Word)> {
    let l = |x: usize, a: usize| Letter { party, input: x as u8, outcome: a as u8 };
    if u1 == u2 {
        return vec![(1.0, Word::new(vec![l(0, u1)]))];
    }
    (0..variant.n_outcomes())
        .map(|a| (flip_sign(u1 ^ u2, a), Word::new(vec![l(0, u2), l(variant.flip_input(), a), l(0, u1)])))
        .collect()
}

pub fn fidelity_functional(variant: Scenario) -> FidelityFunctional {
    let n = variant.n_outcomes();
    let t = variant.target_vector();
    let mut acc: BTreeMap<(Word, Word), C64> = BTreeMap::new();
    for i in 0..n {
        for k in 0..n {
            for i2 in 0..n {
                for k2 in 0..n {
                    let coeff = t[i * n + k].conj() * t[i2 * n + k2];
                    if coeff.norm() < 1e-15 {
                        continue;
                    }
                    for (sa, wa) in branch_pair(Party::A, i2, i, variant) {
                        for (sb, wb) in branch_pair(Party::B, k2, k, variant) {
                            let Some(wa) = canonicalize(&wa) else { continue };
                            let Some(wb) = canonicalize(&wb) else { continue };
                            *acc.entry((wa, wb)).or_default() += coeff * (sa * sb);
                        }
                    }
                }
            }
        }
    }
    // F is Hermitian; average each term with its adjoint partner
    let sym: BTreeMap<(Word, Word), C64> = acc
        .iter()
        .map(|((wa, wb), &c)| {
            let partner = acc.get(&(wa.adjoint(), wb.adjoint())).copied().unwrap_or_default();
            ((wa.clone(), wb.clone()), (c + partner.conj()) * re(0.5))
        })
        .collect();
    let terms = sym
        .into_iter()
        .filter(|(_, c)| c.norm() > 1e-15)
        .map(|((wa, wb), c)| FunctionalTerm { alice: wa.letters().to_vec(), bob: wb.letters().to_vec(), re: c.re, im: c.im })
        .collect();
    FidelityFunctional { terms, constant: 0.0 }
}
