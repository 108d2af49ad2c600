//! Products of projector letters and their normal form.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::CMatrix;
use crate::quantum::{PvmFamily, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Party {
    A,
    B,
}

/// Π_{outcome|input} held by `party`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Letter {
    pub party: Party,
    pub input: u8,
    pub outcome: u8,
}

impl Letter {
    pub const fn a(input: u8, outcome: u8) -> Self {
        Self { party: Party::A, input, outcome }
    }

    pub const fn b(input: u8, outcome: u8) -> Self {
        Self { party: Party::B, input, outcome }
    }

    pub fn with_outcome(self, outcome: u8) -> Self {
        Self { outcome, ..self }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.party {
            Party::A => 'A',
            Party::B => 'B',
        };
        write!(f, "{p}{}|{}", self.outcome, self.input)
    }
}

/// A product of letters read left to right. Canonical words keep A letters first and never
/// hold two neighbours with the same (party, input).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Word(Vec<Letter>);

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("1");
        }
        for (k, l) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl Word {
    pub fn identity() -> Self {
        Self(Vec::new())
    }

    pub fn new(letters: Vec<Letter>) -> Self {
        Self(letters)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    /// Reversed letter order; the result is canonical when `self` is.
    pub fn adjoint(&self) -> Word {
        let (a, b) = self.split();
        Word(a.iter().rev().chain(b.iter().rev()).copied().collect())
    }

    /// Letters of each party, assuming canonical order.
    pub fn split(&self) -> (&[Letter], &[Letter]) {
        let k = self.0.iter().position(|l| l.party == Party::B).unwrap_or(self.0.len());
        self.0.split_at(k)
    }

    pub fn party_counts(&self) -> (usize, usize) {
        let na = self.0.iter().filter(|l| l.party == Party::A).count();
        (na, self.0.len() - na)
    }

    /// At most one letter per party: the value is fixed by the observed behavior.
    pub fn is_observable(&self) -> bool {
        let (na, nb) = self.party_counts();
        na <= 1 && nb <= 1
    }

    /// The smaller of w and w† under word order.
    pub fn hermitian_rep(&self) -> (Word, bool) {
        let adj = self.adjoint();
        if adj < *self {
            (adj, true)
        } else {
            (self.clone(), false)
        }
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.adjoint() == *self
    }

    pub fn is_canonical(&self) -> bool {
        canonicalize(self).as_ref() == Some(self)
    }

    /// Operators of both parties' factors for an explicit measurement family.
    pub fn operators(&self, alice: &PvmFamily, bob: &PvmFamily) -> (CMatrix, CMatrix) {
        let mut oa = CMatrix::identity(alice.dim());
        let mut ob = CMatrix::identity(bob.dim());
        for l in &self.0 {
            match l.party {
                Party::A => oa = &oa * alice.projector(l.input as usize, l.outcome as usize),
                Party::B => ob = &ob * bob.projector(l.input as usize, l.outcome as usize),
            }
        }
        (oa, ob)
    }

    /// Tr[ρ w]
    pub fn expectation(&self, s: &Strategy) -> crate::linalg::C64 {
        let (oa, ob) = self.operators(&s.alice, &s.bob);
        s.expectation(&oa, &ob)
    }
}

/// Normal form under A/B commutation, idempotence and orthogonality; `None` is the zero operator.
pub fn canonicalize(w: &Word) -> Option<Word> {
    let mut out = Vec::with_capacity(w.0.len());
    for party in [Party::A, Party::B] {
        let start = out.len();
        for &l in w.0.iter().filter(|l| l.party == party) {
            if out.len() > start {
                let last: &Letter = out.last().expect("nonempty");
                if last.input == l.input {
                    if last.outcome == l.outcome {
                        continue;
                    }
                    return None;
                }
            }
            out.push(l);
        }
    }
    Some(Word(out))
}

/// canonicalize(u† v)
pub fn product(u: &Word, v: &Word) -> Option<Word> {
    canonicalize(&u.adjoint().concat(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let w = Word::new(vec![Letter::b(0, 1), Letter::a(0, 0)]);
        assert_eq!(canonicalize(&w), Some(Word::new(vec![Letter::a(0, 0), Letter::b(0, 1)])));
        let w = Word::new(vec![Letter::a(0, 0), Letter::a(0, 0)]);
        assert_eq!(canonicalize(&w), Some(Word::new(vec![Letter::a(0, 0)])));
        let w = Word::new(vec![Letter::a(0, 0), Letter::a(0, 1)]);
        assert_eq!(canonicalize(&w), None);
    }

    #[test]
    fn same_party_order_is_kept() {
        let w = Word::new(vec![Letter::a(1, 0), Letter::b(0, 0), Letter::a(0, 1)]);
        let c = canonicalize(&w).unwrap();
        assert_eq!(c.letters(), &[Letter::a(1, 0), Letter::a(0, 1), Letter::b(0, 0)]);
    }

    #[test]
    fn merge_cascades() {
        // A0|0 A1|1 A1|1 A0|0 -> A0|0 A1|1 A0|0
        let w = Word::new(vec![Letter::a(0, 0), Letter::a(1, 1), Letter::a(1, 1), Letter::a(0, 0)]);
        assert_eq!(canonicalize(&w).unwrap().len(), 3);
        let w = Word::new(vec![Letter::a(0, 0), Letter::a(1, 1), Letter::a(1, 1), Letter::a(1, 0)]);
        assert_eq!(canonicalize(&w), None);
    }

    #[test]
    fn adjoint_and_rep() {
        let w = Word::new(vec![Letter::a(3, 1), Letter::a(0, 2), Letter::b(0, 3), Letter::b(3, 0)]);
        let adj = w.adjoint();
        assert_eq!(adj.letters(), &[Letter::a(0, 2), Letter::a(3, 1), Letter::b(3, 0), Letter::b(0, 3)]);
        assert_eq!(adj.adjoint(), w);
        let (rep, flipped) = w.hermitian_rep();
        assert!(rep <= w && rep <= adj);
        assert_eq!(flipped, rep != w);
        assert!(Word::new(vec![Letter::a(0, 1), Letter::a(1, 0), Letter::a(0, 1)]).is_self_adjoint());
    }
}
