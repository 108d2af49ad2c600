use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::word::{canonicalize, product, Letter, Party, Word};
use crate::linalg::{min_eigenvalue, CMatrix, C64};
use crate::quantum::{Behavior, Strategy};
use crate::scenario::Scenario;
use crate::swap::FidelityFunctional;

/// Largest tolerated deviation between marginals for different partner inputs.
pub const SIGNALING_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProgramError {
    #[error("objective word {0} has no entry in the moment matrix")]
    ObjectiveNotRepresentable(String),
    #[error("behavior is signaling (deviation {0:.3e})")]
    Signaling(f64),
    #[error("letter {letter} outside the {counts:?} behavior")]
    DimensionMismatch { letter: String, counts: (usize, usize, usize, usize) },
    #[error("unknown moment level {0:?}")]
    UnknownLevel(String),
}

/// Size of the monomial list. `Full` keeps every Alice–Bob product; `Reduced` keeps only the
/// products on input 0 of both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    #[serde(alias = "paper")]
    Full,
    Reduced,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Full => "full",
            Level::Reduced => "reduced",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Level {
    type Err = ProgramError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" | "paper" => Ok(Level::Full),
            "reduced" => Ok(Level::Reduced),
            _ => Err(ProgramError::UnknownLevel(s.to_string())),
        }
    }
}

/// 1, single letters, cross products, then the two degree-3 families built on the flip input.
/// The degree-3 words are stored as Π_{a′|flip} Π_{a|0} Π_{b|0} and Π_{a|0} Π_{b′|flip} Π_{b|0},
/// so that the swap terms Π_{a|0} Π_{a′|flip} Π_{a″|0} appear as products of two of them.
pub fn moment_set(test: Scenario, level: Level) -> Vec<Word> {
    let nx = test.n_inputs() as u8;
    let no = test.n_outcomes() as u8;
    let flip = test.flip_input() as u8;
    let mut out = vec![Word::identity()];
    for party in [Party::A, Party::B] {
        for x in 0..nx {
            for a in 0..no {
                out.push(Word::new(vec![Letter { party, input: x, outcome: a }]));
            }
        }
    }
    let cross_inputs = match level {
        Level::Full => 0..nx,
        Level::Reduced => 0..1,
    };
    for x in cross_inputs.clone() {
        for y in cross_inputs.clone() {
            for a in 0..no {
                for b in 0..no {
                    out.push(Word::new(vec![Letter::a(x, a), Letter::b(y, b)]));
                }
            }
        }
    }
    for a in 0..no {
        for a2 in 0..no {
            for b in 0..no {
                out.push(Word::new(vec![Letter::a(flip, a2), Letter::a(0, a), Letter::b(0, b)]));
            }
        }
    }
    for a in 0..no {
        for b in 0..no {
            for b2 in 0..no {
                out.push(Word::new(vec![Letter::a(0, a), Letter::b(flip, b2), Letter::b(0, b)]));
            }
        }
    }
    out
}

/// A variable, possibly read through its adjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarRef {
    pub id: usize,
    pub conj: bool,
}

impl VarRef {
    pub fn read(self, values: &[C64]) -> C64 {
        let v = values[self.id];
        if self.conj { v.conj() } else { v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Entry {
    Zero,
    Pinned(f64),
    Var(VarRef),
}

/// Σ coeff · var + constant = 0, over complex moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equality {
    pub terms: Vec<(VarRef, f64)>,
    pub constant: f64,
}

impl Equality {
    pub fn residual(&self, values: &[C64]) -> C64 {
        self.terms.iter().map(|(v, c)| v.read(values) * *c).sum::<C64>() + self.constant
    }
}

/// constant + Re Σ coeff · var
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub terms: Vec<(VarRef, C64)>,
    pub constant: f64,
}

impl Objective {
    pub fn evaluate(&self, values: &[C64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * v.read(values)).sum::<C64>().re
    }
}

/// Value of a word with at most one letter per party, read off the behavior.
pub fn pin_value(w: &Word, b: &Behavior) -> Result<Option<f64>, ProgramError> {
    if !w.is_observable() {
        return Ok(None);
    }
    let (nx, ny, na, nb) = b.counts();
    for l in w.letters() {
        let (ni, no) = match l.party {
            Party::A => (nx, na),
            Party::B => (ny, nb),
        };
        if l.input as usize >= ni || l.outcome as usize >= no {
            return Err(ProgramError::DimensionMismatch { letter: l.to_string(), counts: b.counts() });
        }
    }
    let (al, bl) = w.split();
    let v = match (al.first(), bl.first()) {
        (None, None) => 1.0,
        (Some(a), None) => b.alice_marginal(a.input as usize, 0, a.outcome as usize),
        (None, Some(l)) => b.bob_marginal(0, l.input as usize, l.outcome as usize),
        (Some(a), Some(l)) => b.p(a.input as usize, l.input as usize, a.outcome as usize, l.outcome as usize),
    };
    Ok(Some(v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProgram {
    pub words: Vec<Word>,
    /// Row-major, words.len()².
    pub entries: Vec<Entry>,
    /// Representative (the smaller of w, w†) for each variable id, in word order.
    pub variables: Vec<Word>,
    pub equalities: Vec<Equality>,
    pub objective: Objective,
    pub behavior: Behavior,
}

enum Class {
    Zero,
    Pinned(f64),
    Var(Word, bool),
}

fn classify(w: Option<Word>, b: &Behavior) -> Result<Class, ProgramError> {
    let Some(w) = w else { return Ok(Class::Zero) };
    if let Some(v) = pin_value(&w, b)? {
        return Ok(Class::Pinned(v));
    }
    let (rep, flipped) = w.hermitian_rep();
    Ok(Class::Var(rep, flipped))
}

pub fn build_program(words: Vec<Word>, behavior: &Behavior, objective: &FidelityFunctional) -> Result<MomentProgram, ProgramError> {
    let dev = behavior.signaling_deviation();
    if dev > SIGNALING_TOL {
        return Err(ProgramError::Signaling(dev));
    }
    let n = words.len();
    let mut classes = Vec::with_capacity(n * n);
    let mut reps: BTreeMap<Word, usize> = BTreeMap::new();
    for wi in &words {
        for wj in &words {
            let c = classify(product(wi, wj), behavior)?;
            if let Class::Var(rep, _) = &c {
                reps.entry(rep.clone()).or_insert(0);
            }
            classes.push(c);
        }
    }
    for (k, id) in reps.values_mut().enumerate() {
        *id = k;
    }
    let lookup = |rep: &Word, conj: bool| reps.get(rep).map(|&id| VarRef { id, conj });
    let entries = classes
        .into_iter()
        .map(|c| match c {
            Class::Zero => Entry::Zero,
            Class::Pinned(v) => Entry::Pinned(v),
            Class::Var(rep, conj) => Entry::Var(lookup(&rep, conj).expect("collected above")),
        })
        .collect();
    let variables: Vec<Word> = reps.keys().cloned().collect();

    let mut obj_terms: BTreeMap<VarRef, C64> = BTreeMap::new();
    let mut obj_const = 0.0;
    for (w, coeff) in objective.words() {
        match classify(canonicalize(&w), behavior)? {
            Class::Zero => {}
            Class::Pinned(v) => obj_const += (coeff * v).re,
            Class::Var(rep, conj) => {
                let r = lookup(&rep, conj).ok_or_else(|| ProgramError::ObjectiveNotRepresentable(w.to_string()))?;
                *obj_terms.entry(r).or_default() += coeff;
            }
        }
    }
    let objective = Objective { terms: obj_terms.into_iter().filter(|(_, c)| c.norm() > 0.0).collect(), constant: objective.constant + obj_const };

    let n_outcomes = behavior.counts().2.max(behavior.counts().3) as u8;
    let equalities = completeness_equalities(&variables, &reps, behavior, n_outcomes)?;

    Ok(MomentProgram { words, entries, variables, equalities, objective, behavior: behavior.clone() })
}

// Σ_a w[k → a] = w without letter k, for every variable word and letter position whose whole
// family lives in the program.
fn completeness_equalities(
    variables: &[Word],
    reps: &BTreeMap<Word, usize>,
    behavior: &Behavior,
    n_outcomes: u8,
) -> Result<Vec<Equality>, ProgramError> {
    let mut seen: HashSet<Vec<(VarRef, u64)>> = HashSet::new();
    let mut out = Vec::new();
    for v in variables {
        'family: for k in 0..v.len() {
            let mut terms: BTreeMap<VarRef, f64> = BTreeMap::new();
            let mut constant = 0.0;
            let mut add = |w: Option<Word>, sign: f64, terms: &mut BTreeMap<VarRef, f64>| -> Result<bool, ProgramError> {
                match classify(w, behavior)? {
                    Class::Zero => {}
                    Class::Pinned(p) => constant += sign * p,
                    Class::Var(rep, conj) => match reps.get(&rep) {
                        Some(&id) => *terms.entry(VarRef { id, conj }).or_default() += sign,
                        None => return Ok(false),
                    },
                }
                Ok(true)
            };
            let letters = v.letters();
            for a in 0..n_outcomes {
                let mut ls = letters.to_vec();
                ls[k] = ls[k].with_outcome(a);
                if !add(canonicalize(&Word::new(ls)), 1.0, &mut terms)? {
                    continue 'family;
                }
            }
            let mut rest = letters.to_vec();
            rest.remove(k);
            if !add(canonicalize(&Word::new(rest)), -1.0, &mut terms)? {
                continue 'family;
            }
            terms.retain(|_, c| *c != 0.0);
            if terms.is_empty() {
                continue;
            }
            let key: Vec<(VarRef, u64)> = terms.iter().map(|(r, c)| (*r, c.to_bits())).collect();
            let conj_key: Vec<(VarRef, u64)> = {
                let mut k: Vec<_> = terms.iter().map(|(r, c)| (VarRef { id: r.id, conj: !r.conj }, c.to_bits())).collect();
                k.sort();
                k
            };
            if seen.contains(&key) || seen.contains(&conj_key) {
                continue;
            }
            seen.insert(key);
            out.push(Equality { terms: terms.into_iter().collect(), constant });
        }
    }
    Ok(out)
}

impl MomentProgram {
    pub fn dim(&self) -> usize {
        self.words.len()
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> Entry {
        self.entries[i * self.dim() + j]
    }

    pub fn n_outcomes(&self) -> usize {
        let (_, _, na, nb) = self.behavior.counts();
        na.max(nb)
    }

    /// Variable values read from a moment matrix at the first cell holding each id.
    pub fn read_variables(&self, gamma: &CMatrix) -> Vec<C64> {
        let mut out = vec![C64::new(f64::NAN, 0.0); self.n_vars()];
        let mut set = vec![false; self.n_vars()];
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                if let Entry::Var(r) = self.entry(i, j) {
                    if !set[r.id] {
                        let g = gamma[(i, j)];
                        out[r.id] = if r.conj { g.conj() } else { g };
                        set[r.id] = true;
                    }
                }
            }
        }
        out
    }

    /// How well a candidate moment matrix satisfies this program.
    pub fn check_point(&self, gamma: &CMatrix) -> PointReport {
        let n = self.dim();
        let values = self.read_variables(gamma);
        let mut pin = 0.0f64;
        let mut ident = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let g = gamma[(i, j)];
                let d = match self.entry(i, j) {
                    Entry::Zero => g.norm(),
                    Entry::Pinned(v) => {
                        pin = pin.max((g - v).norm());
                        continue;
                    }
                    Entry::Var(r) => (g - r.read(&values)).norm(),
                };
                ident = ident.max(d);
            }
        }
        let equality = self.equalities.iter().map(|e| e.residual(&values).norm()).fold(0.0, f64::max);
        PointReport {
            min_eigenvalue: min_eigenvalue(&gamma.hermitian_part()).unwrap_or(f64::NAN),
            pin_residual: pin,
            identification_residual: ident,
            equality_residual: equality,
            objective: self.objective.evaluate(&values),
        }
    }

    pub fn dump(&self) -> ProgramDump {
        let n = self.dim();
        let mut pinned = Vec::new();
        let mut cells = Vec::new();
        for i in 0..n {
            for j in i..n {
                match self.entry(i, j) {
                    Entry::Zero => {}
                    Entry::Pinned(v) => pinned.push((i, j, v)),
                    Entry::Var(r) => cells.push((i, j, r.id, r.conj)),
                }
            }
        }
        let equalities = self
            .equalities
            .iter()
            .enumerate()
            .flat_map(|(k, e)| e.terms.iter().map(move |(r, c)| (k, r.id, r.conj, *c)))
            .collect();
        ProgramDump {
            words: self.words.iter().map(Word::to_string).collect(),
            variables: self.variables.iter().map(Word::to_string).collect(),
            pinned,
            variable_entries: cells,
            equalities,
            equality_constants: self.equalities.iter().map(|e| e.constant).collect(),
            objective: self.objective.terms.iter().map(|(r, c)| (r.id, r.conj, c.re, c.im)).collect(),
            objective_constant: self.objective.constant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub min_eigenvalue: f64,
    pub pin_residual: f64,
    pub identification_residual: f64,
    pub equality_residual: f64,
    pub objective: f64,
}

impl PointReport {
    pub fn max_residual(&self) -> f64 {
        self.pin_residual.max(self.identification_residual).max(self.equality_residual)
    }
}

/// Flat JSON layout for cross-checking; upper-triangle cells only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramDump {
    pub words: Vec<String>,
    pub variables: Vec<String>,
    /// (row, col, value)
    pub pinned: Vec<(usize, usize, f64)>,
    /// (row, col, variable, conjugated)
    pub variable_entries: Vec<(usize, usize, usize, bool)>,
    /// (equality, variable, conjugated, coefficient)
    pub equalities: Vec<(usize, usize, bool, f64)>,
    pub equality_constants: Vec<f64>,
    /// (variable, conjugated, re, im)
    pub objective: Vec<(usize, bool, f64, f64)>,
    pub objective_constant: f64,
}

/// Γ_ij = Tr[ρ w_i† w_j] for an explicit strategy, built as a Gram matrix of w_j·√ρ.
pub fn feasible_point(s: &Strategy, words: &[Word]) -> Result<CMatrix, ProgramError> {
    let counts = (s.alice.n_inputs(), s.bob.n_inputs(), s.alice.n_outcomes(0), s.bob.n_outcomes(0));
    for w in words {
        for l in w.letters() {
            let fam = match l.party {
                Party::A => &s.alice,
                Party::B => &s.bob,
            };
            if l.input as usize >= fam.n_inputs() || l.outcome as usize >= fam.n_outcomes(l.input as usize) {
                return Err(ProgramError::DimensionMismatch { letter: l.to_string(), counts });
            }
        }
    }
    let root = s.state.square_root_factor();
    let cols: Vec<CMatrix> = words
        .iter()
        .map(|w| {
            let (oa, ob) = w.operators(&s.alice, &s.bob);
            &crate::linalg::tensor(&oa, &ob) * &root
        })
        .collect();
    Ok(CMatrix::from_fn(words.len(), words.len(), |i, j| cols[i].adjoint().trace_product(&cols[j])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::behavior_from_strategy;
    use crate::swap::{fidelity_functional, isometry_fidelity};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cardinalities() {
        assert_eq!(moment_set(Scenario::DoubleChsh, Level::Full).len(), 417);
        assert_eq!(moment_set(Scenario::Magic, Level::Full).len(), 297);
        assert_eq!(moment_set(Scenario::DoubleChsh, Level::Reduced).len(), 177);
        assert_eq!(moment_set(Scenario::Magic, Level::Reduced).len(), 169);
        assert_eq!(moment_set(Scenario::SingleChsh, Level::Full).len(), 41);
        assert_eq!(moment_set(Scenario::SingleChsh, Level::Reduced).len(), 29);
        for t in [Scenario::DoubleChsh, Scenario::Magic] {
            let ws = moment_set(t, Level::Full);
            let distinct: HashSet<_> = ws.iter().collect();
            assert_eq!(distinct.len(), ws.len());
            assert!(ws.iter().all(Word::is_canonical));
        }
    }

    #[test]
    fn level_names() {
        assert_eq!("paper".parse::<Level>().unwrap(), Level::Full);
        assert_eq!("reduced".parse::<Level>().unwrap(), Level::Reduced);
        assert!("npa2".parse::<Level>().is_err());
    }

    fn program(t: Scenario, level: Level, eps: f64) -> (MomentProgram, Strategy) {
        let s = t.noisy_strategy(eps).unwrap();
        let b = behavior_from_strategy(&s).unwrap();
        (build_program(moment_set(t, level), &b, &fidelity_functional(t)).unwrap(), s)
    }

    #[test]
    fn pinned_examples() {
        let (p, s) = program(Scenario::DoubleChsh, Level::Reduced, 0.1);
        let b = behavior_from_strategy(&s).unwrap();
        // row 0 is the identity, rows 1..17 are Alice's letters
        let Entry::Pinned(v) = p.entry(0, 1 + 4 * 2 + 3) else { panic!() };
        assert!((v - b.alice_marginal(2, 0, 3)).abs() < 1e-15);
        let Entry::Pinned(v) = p.entry(1 + 4 + 1, 17 + 2 * 4 + 3) else { panic!() };
        assert!((v - b.p(1, 2, 1, 3)).abs() < 1e-15);
        assert!(matches!(p.entry(1, 2), Entry::Zero));
    }

    #[test]
    fn adjoint_words_share_variable() {
        let (p, _) = program(Scenario::DoubleChsh, Level::Reduced, 0.0);
        let find = |w: &Word| p.words.iter().position(|x| x == w).unwrap();
        // ⟨Π_{a|0}Π_{a′|3}⟩ sits at (A0, A3) and, conjugated, at (A3, A0)
        let (i, j) = (find(&Word::new(vec![Letter::a(0, 1)])), find(&Word::new(vec![Letter::a(3, 2)])));
        let (Entry::Var(r1), Entry::Var(r2)) = (p.entry(i, j), p.entry(j, i)) else { panic!() };
        assert_eq!(r1.id, r2.id);
        assert_ne!(r1.conj, r2.conj);
    }

    #[test]
    fn hermitian_structure() {
        let (p, _) = program(Scenario::SingleChsh, Level::Full, 0.05);
        for i in 0..p.dim() {
            for j in 0..p.dim() {
                match (p.entry(i, j), p.entry(j, i)) {
                    (Entry::Zero, Entry::Zero) => {}
                    (Entry::Pinned(a), Entry::Pinned(b)) => assert_eq!(a, b),
                    (Entry::Var(a), Entry::Var(b)) => {
                        assert_eq!(a.id, b.id);
                        assert!(a.conj != b.conj || p.variables[a.id].is_self_adjoint());
                    }
                    e => panic!("{e:?}"),
                }
            }
        }
    }

    #[test]
    fn feasible_point_examples() {
        let (p, s) = program(Scenario::DoubleChsh, Level::Full, 0.0);
        let g = feasible_point(&s, &p.words).unwrap();
        let r = p.check_point(&g);
        assert!(r.min_eigenvalue >= -1e-9 && r.max_residual() < 1e-9, "{r:?}");
        assert!((r.objective - 1.0).abs() < 1e-8);
        let (p, s) = program(Scenario::Magic, Level::Reduced, 0.05);
        let r = p.check_point(&feasible_point(&s, &p.words).unwrap());
        assert!((r.objective - isometry_fidelity(&s, Scenario::Magic).unwrap()).abs() < 1e-8);
        assert!(r.max_residual() < 1e-9);
        let (p, s) = program(Scenario::Magic, Level::Reduced, 1.0);
        assert!(p.check_point(&feasible_point(&s, &p.words).unwrap()).min_eigenvalue >= -1e-9);
    }

    #[test]
    fn random_strategies_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in [Scenario::SingleChsh, Scenario::DoubleChsh] {
            for _ in 0..3 {
                let s = t.random_strategy(&mut rng);
                let b = behavior_from_strategy(&s).unwrap();
                let p = build_program(moment_set(t, Level::Reduced), &b, &fidelity_functional(t)).unwrap();
                let r = p.check_point(&feasible_point(&s, &p.words).unwrap());
                assert!(r.min_eigenvalue >= -1e-9 && r.max_residual() < 1e-9, "{r:?}");
                assert!((r.objective - isometry_fidelity(&s, t).unwrap()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn too_small_set_rejected() {
        let s = Scenario::SingleChsh.ideal_strategy();
        let b = behavior_from_strategy(&s).unwrap();
        let words: Vec<Word> = moment_set(Scenario::SingleChsh, Level::Full).into_iter().filter(|w| w.len() <= 1).collect();
        let r = build_program(words, &b, &fidelity_functional(Scenario::SingleChsh));
        assert!(matches!(r, Err(ProgramError::ObjectiveNotRepresentable(_))));
    }

    #[test]
    fn signaling_rejected() {
        let s = Scenario::SingleChsh.ideal_strategy();
        let mut b = behavior_from_strategy(&s).unwrap();
        let mut j = serde_json::to_value(&b).unwrap();
        // shift weight between outcomes of Alice for y = 1 only
        let t = j["table"][0][1].as_array_mut().unwrap();
        let p00 = t[0][0].as_f64().unwrap();
        t[0][0] = (p00 - 0.01).into();
        t[1][0] = (t[1][0].as_f64().unwrap() + 0.01).into();
        b = serde_json::from_value(j).unwrap();
        let r = build_program(moment_set(Scenario::SingleChsh, Level::Reduced), &b, &fidelity_functional(Scenario::SingleChsh));
        assert!(matches!(r, Err(ProgramError::Signaling(_))));
    }

    #[test]
    fn equalities_nonempty_and_dumped() {
        let (p, _) = program(Scenario::SingleChsh, Level::Full, 0.0);
        assert!(!p.equalities.is_empty());
        let d = p.dump();
        assert_eq!(d.words.len(), 41);
        assert_eq!(d.equality_constants.len(), p.equalities.len());
        let js = serde_json::to_string(&d).unwrap();
        let back: ProgramDump = serde_json::from_str(&js).unwrap();
        assert_eq!(back, d);
    }
}
