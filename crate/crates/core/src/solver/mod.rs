//! Newton solvers: cubic-backtracking line search, dogleg trust region,
//! incremental loading, and the neural-preconditioned wrappers, all with
//! per-iteration convergence reporting.

mod newton;
mod np;
mod report;

pub use newton::{incremental_loading, newton_ls, newton_ls_traced, newton_tr, newton_tr_traced};
pub use np::{np_newton, np_newton_from, InnerSolver};
pub use report::{fmt_f64, Outcome, SolveReport};

/// Backtracking line-search parameters.
#[derive(Debug, Clone, Copy)]
pub struct LineSearchOptions {
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    /// Smallest step size; once reached the step is taken anyway and the
    /// divergence cap decides.
    pub lambda_min: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchOptions {
    fn default() -> Self {
        LineSearchOptions {
            c1: 1e-4,
            lambda_min: 1e-12,
            max_backtracks: 40,
        }
    }
}

/// Dogleg trust-region parameters.
#[derive(Debug, Clone, Copy)]
pub struct TrustRegionOptions {
    pub delta0: f64,
    pub delta_max: f64,
    /// Minimum gain ratio to accept a step.
    pub eta_accept: f64,
    pub shrink: f64,
    pub grow: f64,
}

impl Default for TrustRegionOptions {
    fn default() -> Self {
        TrustRegionOptions {
            delta0: 1.0,
            delta_max: 1e3,
            eta_accept: 1e-4,
            shrink: 0.25,
            grow: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
    pub ls: LineSearchOptions,
    pub tr: TrustRegionOptions,
    /// Relative residual above which the solve is declared divergent.
    pub divergence_cap: f64,
    /// Apply the preconditioner unconditionally (no discard safeguard).
    pub strict_paper: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            abs_tol: 1e-15,
            rel_tol: 1e-9,
            max_iters: 200,
            ls: LineSearchOptions::default(),
            tr: TrustRegionOptions::default(),
            divergence_cap: 1e4,
            strict_paper: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    Continue,
    Converged,
    Diverged,
}

/// Stopping rule: converged when |r| <= abs_tol or |r|/|r0| <= rel_tol;
/// diverged when |r|/|r0| exceeds the cap. A zero initial residual is
/// already a solution.
pub fn check_convergence(r_norm: f64, r0_norm: f64, opts: &SolveOptions) -> Convergence {
    if r0_norm == 0.0 {
        return Convergence::Converged;
    }
    if r_norm <= opts.abs_tol || r_norm / r0_norm <= opts.rel_tol {
        return Convergence::Converged;
    }
    if r_norm / r0_norm > opts.divergence_cap {
        return Convergence::Diverged;
    }
    Convergence::Continue
}
