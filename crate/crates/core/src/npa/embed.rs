//! Moment program to real linear matrix inequality.
//!
//! Completeness is eliminated by rewriting every word in the basis without last-outcome letters,
//! which satisfies all equalities of the program identically. Each remaining word that is not
//! pinned by the behavior becomes one free variable (two for the complex embedding).

use std::collections::BTreeMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::program::{pin_value, Entry, MomentProgram, ProgramError};
use super::reduce::{Expansion, Reducer};
use super::word::{canonicalize, product, Word};
use crate::linalg::C64;
use crate::sdp::{SdpProblem, SparseSym};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embedding {
    /// [[Re Γ, −Im Γ], [Im Γ, Re Γ]]
    Complex,
    /// Re Γ only. Exact whenever behavior and objective are real, since Γ ↦ Γ̄ maps feasible
    /// points to feasible points with the same objective and the feasible set is convex.
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SdpForm {
    pub embedding: Embedding,
    /// Use Γ over the reduced words reachable from the monomial list instead of Γ itself. The
    /// two are congruent through a full-column-rank map, so the constraint is unchanged.
    pub compress: bool,
}

impl Default for SdpForm {
    fn default() -> Self {
        Self { embedding: Embedding::Real, compress: true }
    }
}

impl SdpForm {
    pub const FAITHFUL: SdpForm = SdpForm { embedding: Embedding::Complex, compress: false };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Re,
    Im,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpVariable {
    pub word: Word,
    pub part: Part,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpMap {
    pub problem: SdpProblem,
    pub variables: Vec<SdpVariable>,
    /// Row labels of the Hermitian matrix before embedding.
    pub basis: Vec<Word>,
    pub form: SdpForm,
}

/// Hermitian matrix entry as constant + Σ coeff · z(word), with z over reduced words.
struct Cell {
    constant: f64,
    terms: Vec<(Word, f64)>,
}

struct Builder<'a> {
    program: &'a MomentProgram,
    reducer: Reducer,
    /// reduced word representative → (Re id, Im id)
    vars: BTreeMap<Word, (usize, Option<usize>)>,
}

impl Builder<'_> {
    fn cell(&mut self, w: Option<Word>) -> Result<Cell, ProgramError> {
        let mut cell = Cell { constant: 0.0, terms: Vec::new() };
        let Some(w) = w else { return Ok(cell) };
        let e: Rc<Expansion> = self.reducer.expand(&w);
        for (r, c) in e.iter() {
            match pin_value(r, &self.program.behavior)? {
                Some(v) => cell.constant += c * v,
                None => cell.terms.push((r.clone(), *c)),
            }
        }
        Ok(cell)
    }
}

pub fn to_sdp(program: &MomentProgram, form: SdpForm) -> Result<SdpMap, ProgramError> {
    let mut b = Builder { program, reducer: Reducer::new(program.n_outcomes()), vars: BTreeMap::new() };

    let basis: Vec<Word> = if form.compress {
        let mut set = std::collections::BTreeSet::new();
        for w in &program.words {
            let Some(c) = canonicalize(w) else { continue };
            set.extend(b.reducer.expand(&c).keys().cloned());
        }
        set.into_iter().collect()
    } else {
        program.words.clone()
    };
    let n = basis.len();

    // upper-triangle cells of the Hermitian matrix
    let mut cells: Vec<(usize, usize, Cell)> = Vec::new();
    for i in 0..n {
        for j in i..n {
            let w = if form.compress {
                product(&basis[i], &basis[j])
            } else {
                match program.entry(i, j) {
                    Entry::Zero => None,
                    Entry::Pinned(v) => {
                        cells.push((i, j, Cell { constant: v, terms: Vec::new() }));
                        continue;
                    }
                    Entry::Var(r) => {
                        let rep = &program.variables[r.id];
                        Some(if r.conj { rep.adjoint() } else { rep.clone() })
                    }
                }
            };
            let cell = b.cell(w)?;
            if cell.constant != 0.0 || !cell.terms.is_empty() {
                cells.push((i, j, cell));
            }
        }
    }

    // variables in word order of their representatives
    let mut reps: Vec<Word> = cells.iter().flat_map(|(_, _, c)| c.terms.iter().map(|(w, _)| w.hermitian_rep().0)).collect();
    reps.sort();
    reps.dedup();
    let mut variables = Vec::new();
    for w in reps {
        let re_id = variables.len();
        variables.push(SdpVariable { word: w.clone(), part: Part::Re });
        let im_id = (form.embedding == Embedding::Complex && !w.is_self_adjoint()).then(|| {
            variables.push(SdpVariable { word: w.clone(), part: Part::Im });
            re_id + 1
        });
        b.vars.insert(w, (re_id, im_id));
    }

    // z(r) = a + i·s·b with s = −1 when r is the adjoint of its representative
    let resolve = |vars: &BTreeMap<Word, (usize, Option<usize>)>, r: &Word| -> Option<(usize, Option<(usize, f64)>)> {
        let (rep, flipped) = r.hermitian_rep();
        vars.get(&rep).map(|&(re, im)| (re, im.map(|k| (k, if flipped { -1.0 } else { 1.0 }))))
    };

    let dim = match form.embedding {
        Embedding::Real => n,
        Embedding::Complex => 2 * n,
    };
    let mut problem = SdpProblem::new(vec![dim]);
    problem.constraints = vec![SparseSym::default(); variables.len()];
    for (i, j, cell) in &cells {
        let (i, j) = (*i, *j);
        // real part sits on the diagonal blocks
        let put_re = |m: &mut SparseSym, v: f64| {
            m.push(0, i, j, v);
            if form.embedding == Embedding::Complex {
                m.push(0, n + i, n + j, v);
            }
        };
        put_re(&mut problem.offset, cell.constant);
        for (r, c) in &cell.terms {
            let (re, im) = resolve(&b.vars, r).expect("registered above");
            put_re(&mut problem.constraints[re], *c);
            if let (Embedding::Complex, Some((k, s))) = (form.embedding, im) {
                // Im Γ_ij = s·c·b: stored at (i, n+j) as −Im Γ_ij and at (j, n+i) as +Im Γ_ij
                let v = s * c;
                problem.constraints[k].push(0, i, n + j, -v);
                if i != j {
                    problem.constraints[k].push(0, j, n + i, v);
                }
            }
        }
    }
    for m in std::iter::once(&mut problem.offset).chain(problem.constraints.iter_mut()) {
        m.compact();
    }

    // F = c0 + Re Σ coeff · z(word)
    problem.objective = vec![0.0; variables.len()];
    problem.constant = program.objective.constant;
    for (r, coeff) in &program.objective.terms {
        let rep = &program.variables[r.id];
        let w = if r.conj { rep.adjoint() } else { rep.clone() };
        let cell = b.cell(Some(w.clone()))?;
        problem.constant += (coeff * cell.constant).re;
        for (rw, c) in &cell.terms {
            let (re, im) = resolve(&b.vars, rw).ok_or_else(|| ProgramError::ObjectiveNotRepresentable(rw.to_string()))?;
            let k: C64 = coeff * *c;
            problem.objective[re] += k.re;
            if let Some((id, s)) = im {
                problem.objective[id] -= s * k.im;
            }
        }
    }
    // moments of projector products are bounded by 1 in modulus
    problem.var_bounds = Some(vec![1.0; variables.len()]);
    Ok(SdpMap { problem, variables, basis, form })
}

impl SdpMap {
    /// Variable vector matching an explicit moment oracle, for checking the assembly.
    pub fn variables_from(&self, mut moment: impl FnMut(&Word) -> C64) -> Vec<f64> {
        self.variables
            .iter()
            .map(|v| {
                let z = moment(&v.word);
                match v.part {
                    Part::Re => z.re,
                    Part::Im => z.im,
                }
            })
            .collect()
    }
}
