//! Elimination of each input's last outcome through Π_{last|x} = 1 − Σ_{a<last} Π_{a|x}.

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use super::word::{canonicalize, Word};

/// Linear combination of canonical words free of last-outcome letters.
pub type Expansion = BTreeMap<Word, f64>;

pub struct Reducer {
    last: u8,
    memo: HashMap<Word, Rc<Expansion>>,
}

impl Reducer {
    pub fn new(n_outcomes: usize) -> Self {
        Self { last: (n_outcomes - 1) as u8, memo: HashMap::new() }
    }

    pub fn is_reduced(&self, w: &Word) -> bool {
        w.letters().iter().all(|l| l.outcome != self.last)
    }

    /// Expansion of a canonical word.
    pub fn expand(&mut self, w: &Word) -> Rc<Expansion> {
        if let Some(e) = self.memo.get(w) {
            return Rc::clone(e);
        }
        let letters = w.letters();
        let out = match letters.iter().position(|l| l.outcome == self.last) {
            None => BTreeMap::from([(w.clone(), 1.0)]),
            Some(k) => {
                let mut acc = Expansion::new();
                let mut rest = letters.to_vec();
                rest.remove(k);
                self.accumulate(canonicalize(&Word::new(rest)), 1.0, &mut acc);
                for a in 0..self.last {
                    let mut ls = letters.to_vec();
                    ls[k] = ls[k].with_outcome(a);
                    self.accumulate(canonicalize(&Word::new(ls)), -1.0, &mut acc);
                }
                acc.retain(|_, c| *c != 0.0);
                acc
            }
        };
        let rc = Rc::new(out);
        self.memo.insert(w.clone(), Rc::clone(&rc));
        rc
    }

    fn accumulate(&mut self, w: Option<Word>, sign: f64, acc: &mut Expansion) {
        let Some(w) = w else { return };
        let e = self.expand(&w);
        for (r, c) in e.iter() {
            *acc.entry(r.clone()).or_default() += sign * c;
        }
    }
}
