//! Per-solve convergence reports and their CSV serialization.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    Diverged,
    MaxIters,
    LinearSolveFailed,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Converged => "CONVERGED",
            Outcome::Diverged => "DIVERGED",
            Outcome::MaxIters => "MAX_ITERS",
            Outcome::LinearSolveFailed => "LINEAR_SOLVE_FAILED",
        }
    }
}

/// Convergence record of one solve.
///
/// `residual_history[0]` is the initial residual norm; entry k > 0 is the
/// norm after iteration k. `step_history[k]` is the line-search step size or
/// the trust-region radius used at iteration k + 1, and `precond_used[k]`
/// says whether the neural preconditioner contributed to that iteration.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub outcome: Outcome,
    pub residual_history: Vec<f64>,
    pub step_history: Vec<f64>,
    pub precond_used: Vec<bool>,
    /// Seconds; informational only, never asserted.
    pub wall_time: f64,
    /// The neural preconditioner produced a non-finite output and the solve
    /// fell back to the plain inner method.
    pub model_fallback: bool,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.residual_history.len().saturating_sub(1)
    }

    pub fn initial_residual(&self) -> f64 {
        self.residual_history.first().copied().unwrap_or(0.0)
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }

    /// CSV with columns `iter,res_norm,rel_res,step,precond_used`, one row
    /// per recorded residual, LF line endings, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,res_norm,rel_res,step,precond_used\n");
        let r0 = self.initial_residual();
        for (i, &r) in self.residual_history.iter().enumerate() {
            let rel = if r0 > 0.0 { r / r0 } else { 0.0 };
            if i == 0 {
                let _ = writeln!(out, "0,{},{},,false", fmt_f64(r), fmt_f64(rel));
            } else {
                let step = self
                    .step_history
                    .get(i - 1)
                    .map(|&s| fmt_f64(s))
                    .unwrap_or_default();
                let pre = self.precond_used.get(i - 1).copied().unwrap_or(false);
                let _ = writeln!(out, "{i},{},{},{step},{pre}", fmt_f64(r), fmt_f64(rel));
            }
        }
        out
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
