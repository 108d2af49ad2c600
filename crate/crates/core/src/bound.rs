//! One row of a fidelity-bound sweep: noisy behavior in, certified number out.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{magic_analytic_bound, AnalyticError};
use crate::npa::{build_program, moment_set, to_sdp, Level, ProgramError, SdpForm};
use crate::quantum::{behavior_from_strategy, Behavior, QuantumError};
use crate::scenario::Scenario;
use crate::sdp::{certify_lower_bound, solve, Certificate, SolveStatus, SolverOptions};
use crate::swap::{fidelity_functional, isometry_fidelity, SwapError};

#[derive(Debug, Error)]
pub enum BoundError {
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Swap(#[from] SwapError),
    #[error("method {method} is not available for {test}")]
    Unsupported { method: Method, test: Scenario },
    #[error("unknown method `{0}` (expected sdp, analytic or explicit)")]
    UnknownMethod(String),
    #[error("behavior counts {found:?} do not fit {test}")]
    BehaviorShape { test: Scenario, found: (usize, usize, usize, usize) },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sdp,
    Analytic,
    Explicit,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sdp => "sdp",
            Method::Analytic => "analytic",
            Method::Explicit => "explicit",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = BoundError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sdp" => Ok(Method::Sdp),
            "analytic" => Ok(Method::Analytic),
            "explicit" => Ok(Method::Explicit),
            _ => Err(BoundError::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub level: Level,
    pub solver: SolverOptions,
    pub form: SdpForm,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self { level: Level::Reduced, solver: SolverOptions::default(), form: SdpForm::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub epsilon: f64,
    pub test: Scenario,
    pub method: Method,
    pub moment_level: Option<Level>,
    /// Certified fidelity lower bound (sdp), exact fidelity (explicit) or the norm bound
    /// (analytic). Empty when the solve did not produce a certificate.
    pub fidelity_bound: Option<f64>,
    pub gap: Option<f64>,
    pub status: String,
    pub runtime_s: f64,
}

impl BoundResult {
    /// Statuses that carry a usable number.
    pub fn succeeded(&self) -> bool {
        matches!(self.status.as_str(), "certified" | "exact" | "trivial" | "nontrivial")
    }

    pub const CSV_HEADER: &'static str = "epsilon,test,method,moment_level,fidelity_bound,gap,status,runtime_s";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.10}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{:.3}",
            self.epsilon,
            self.test,
            self.method,
            self.moment_level.map(|l| l.to_string()).unwrap_or_default(),
            opt(self.fidelity_bound),
            self.gap.map(|g| format!("{g:.3e}")).unwrap_or_default(),
            self.status,
            self.runtime_s
        )
    }
}

/// Detailed SDP outcome for one behavior.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpOutcome {
    pub status: SolveStatus,
    pub certificate: Certificate,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub iterations: usize,
    pub n_vars: usize,
    pub block_dim: usize,
}

impl SdpOutcome {
    /// Certified value, clamped at 0 since every fidelity is nonnegative.
    pub fn bound(&self) -> Option<f64> {
        match self.status {
            SolveStatus::Optimal => self.certificate.bound().map(|b| b.max(0.0)),
            _ => None,
        }
    }
}

fn check_shape(test: Scenario, b: &Behavior) -> Result<(), BoundError> {
    let (n, o) = (test.n_inputs(), test.n_outcomes());
    if b.counts() != (n, n, o, o) {
        return Err(BoundError::BehaviorShape { test, found: b.counts() });
    }
    Ok(())
}

pub fn sdp_bound(test: Scenario, behavior: &Behavior, opts: &BoundOptions) -> Result<SdpOutcome, BoundError> {
    check_shape(test, behavior)?;
    let program = build_program(moment_set(test, opts.level), behavior, &fidelity_functional(test))?;
    let map = to_sdp(&program, opts.form)?;
    let sol = solve(&map.problem, &opts.solver);
    let certificate = certify_lower_bound(&map.problem, &sol);
    Ok(SdpOutcome {
        status: sol.status,
        certificate,
        primal_obj: sol.primal_obj,
        dual_obj: sol.dual_obj,
        iterations: sol.iterations,
        n_vars: map.problem.n_vars(),
        block_dim: map.problem.total_dim(),
    })
}

/// Bound for the noisy ideal strategy of `test` at noise `eps`.
pub fn bound_at(test: Scenario, method: Method, eps: f64, opts: &BoundOptions) -> Result<BoundResult, BoundError> {
    let start = Instant::now();
    let mut row = BoundResult {
        epsilon: eps,
        test,
        method,
        moment_level: None,
        fidelity_bound: None,
        gap: None,
        status: String::new(),
        runtime_s: 0.0,
    };
    match method {
        Method::Explicit => {
            let s = test.noisy_strategy(eps)?;
            row.fidelity_bound = Some(isometry_fidelity(&s, test)?);
            row.status = "exact".into();
        }
        Method::Analytic => {
            if test != Scenario::Magic {
                return Err(BoundError::Unsupported { method, test });
            }
            let b = magic_analytic_bound(eps)?;
            row.fidelity_bound = Some(b.bound);
            row.status = if b.trivial { "trivial" } else { "nontrivial" }.into();
        }
        Method::Sdp => {
            let behavior = behavior_from_strategy(&test.noisy_strategy(eps)?)?;
            return sdp_row(test, eps, &behavior, opts);
        }
    }
    row.runtime_s = start.elapsed().as_secs_f64();
    Ok(row)
}

/// SDP row for an arbitrary behavior; `eps` only labels the row.
pub fn sdp_row(test: Scenario, eps: f64, behavior: &Behavior, opts: &BoundOptions) -> Result<BoundResult, BoundError> {
    let start = Instant::now();
    let out = sdp_bound(test, behavior, opts)?;
    let status = match (&out.status, &out.certificate) {
        (SolveStatus::Optimal, Certificate::Certified { .. }) => "certified".into(),
        (SolveStatus::Optimal, Certificate::Rejected { .. }) => "rejected".into(),
        (s, _) => s.as_str().into(),
    };
    Ok(BoundResult {
        epsilon: eps,
        test,
        method: Method::Sdp,
        moment_level: Some(opts.level),
        fidelity_bound: out.bound(),
        gap: Some((out.primal_obj - out.dual_obj).abs()),
        status,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}
