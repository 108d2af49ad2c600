//! The three test configurations and everything that is fixed per test.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::C64;
use crate::quantum::{
    chsh_settings, double_chsh_state, magic_settings, magic_state, random_density, random_pvm, single_chsh_settings, single_chsh_state,
    two_copy_vector, NamedState, PvmFamily, QuantumError, Strategy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    DoubleChsh,
    Magic,
    SingleChsh,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::DoubleChsh, Scenario::Magic, Scenario::SingleChsh];

    pub fn name(self) -> &'static str {
        match self {
            Self::DoubleChsh => "double_chsh",
            Self::Magic => "magic",
            Self::SingleChsh => "single_chsh",
        }
    }

    pub fn n_inputs(self) -> usize {
        match self {
            Self::DoubleChsh => 4,
            Self::Magic => 3,
            Self::SingleChsh => 2,
        }
    }

    pub fn n_outcomes(self) -> usize {
        match self {
            Self::DoubleChsh | Self::Magic => 4,
            Self::SingleChsh => 2,
        }
    }

    /// Number of ancilla qubits per party, i.e. bits in an outcome.
    pub fn swap_bits(self) -> usize {
        match self {
            Self::DoubleChsh | Self::Magic => 2,
            Self::SingleChsh => 1,
        }
    }

    /// Input whose ±1 combinations act as the σ_x-like flips in the swap.
    pub fn flip_input(self) -> usize {
        match self {
            Self::DoubleChsh => 3,
            Self::Magic | Self::SingleChsh => 1,
        }
    }

    pub fn party_dim(self) -> usize {
        1 << self.swap_bits()
    }

    pub fn ideal_settings(self) -> PvmFamily {
        match self {
            Self::DoubleChsh => chsh_settings(),
            Self::Magic => magic_settings(),
            Self::SingleChsh => single_chsh_settings(),
        }
    }

    pub fn noisy_strategy(self, eps: f64) -> Result<Strategy, QuantumError> {
        let state = match self {
            Self::DoubleChsh => double_chsh_state(eps)?,
            Self::Magic => magic_state(eps)?,
            Self::SingleChsh => single_chsh_state(eps)?,
        };
        Strategy::new(state, self.ideal_settings(), self.ideal_settings())
    }

    pub fn ideal_strategy(self) -> Strategy {
        self.noisy_strategy(0.0).expect("ε = 0 is in range")
    }

    /// Random mixed state with random projective measurements of this test's shape, both
    /// parties on the test's local dimension.
    pub fn random_strategy<R: Rng + ?Sized>(self, rng: &mut R) -> Strategy {
        let d = self.party_dim();
        let state = random_density(vec![d, d], rng);
        let alice = random_pvm(d, self.n_inputs(), self.n_outcomes(), rng);
        let bob = random_pvm(d, self.n_inputs(), self.n_outcomes(), rng);
        Strategy::new(state, alice, bob).expect("shapes agree by construction")
    }

    /// Ancilla target, ordered (A′ bits, B′ bits) like the strategies themselves.
    pub fn target_vector(self) -> Vec<C64> {
        match self {
            Self::DoubleChsh => two_copy_vector(&NamedState::Psi0.vector(), &NamedState::Psi0.vector()),
            Self::Magic => two_copy_vector(&NamedState::PhiPlus.vector(), &NamedState::ChiPrimePlus.vector()),
            Self::SingleChsh => NamedState::Psi0.vector(),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown test `{0}` (expected double_chsh, magic or single_chsh)")]
pub struct UnknownScenario(pub String);

impl FromStr for Scenario {
    type Err = UnknownScenario;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| UnknownScenario(s.to_string()))
    }
}
