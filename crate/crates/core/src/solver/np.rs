//! Neural-preconditioned Newton: apply the fixed-point operator before each
//! inner Newton step, discarding a preconditioned point whenever it raises
//! the residual (unless strict-paper mode applies it unconditionally).

use super::newton::{ls_step, tr_step, LsWork, StepFail, StepResult, StepState, TrWork};
use super::report::{Outcome, SolveReport};
use super::{check_convergence, Convergence, SolveOptions};
use crate::error::{Error, Result};
use crate::nn::fpno::FpnoBinding;
use crate::problems::{NonlinearSystem, Problem};
use crate::sparse::norm2;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSolver {
    LineSearch,
    TrustRegion,
}

/// Right-preconditioned Newton iteration: v = M(u), then one inner step
/// from v. Stopping rules are evaluated on F at the outer iterates.
pub fn np_newton(
    problem: &Problem,
    binding: &FpnoBinding,
    inner: InnerSolver,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let start = Instant::now();
    let u0 = vec![0.0; problem.n_free()];
    let report = np_newton_from(problem, binding, inner, &u0, opts)?;
    let mut report = report;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

/// As [`np_newton`] with an explicit initial guess over free dofs.
pub fn np_newton_from(
    problem: &Problem,
    binding: &FpnoBinding,
    inner: InnerSolver,
    u0: &[f64],
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let start = Instant::now();
    let mut state = StepState::at(problem, u0)?;
    let r0 = state.r_norm;
    let mut work = TrWork::new(opts);
    let mut ls_work = LsWork::new();
    let mut fallback = false;
    let mut report = SolveReport {
        outcome: Outcome::MaxIters,
        residual_history: vec![r0],
        step_history: Vec::new(),
        precond_used: Vec::new(),
        wall_time: 0.0,
        model_fallback: false,
    };
    loop {
        match check_convergence(state.r_norm, r0, opts) {
            Convergence::Converged => {
                report.outcome = Outcome::Converged;
                break;
            }
            Convergence::Diverged => {
                report.outcome = Outcome::Diverged;
                break;
            }
            Convergence::Continue => {}
        }
        if report.iterations() >= opts.max_iters {
            report.outcome = Outcome::MaxIters;
            break;
        }

        // Preconditioning: v = M(u).
        let mut used = false;
        if !fallback {
            let u_full = problem.dofmap.to_full(&state.u)?;
            match binding.apply_with_residual(problem, &u_full, &state.r) {
                Ok(v_full) => {
                    if v_full != u_full {
                        let v_free = problem.dofmap.to_free(&v_full)?;
                        match problem.residual(&v_free) {
                            Ok(rv) => {
                                let rv_norm = norm2(&rv);
                                if opts.strict_paper || rv_norm <= state.r_norm {
                                    state.u = v_free;
                                    state.r = rv;
                                    state.r_norm = rv_norm;
                                    used = true;
                                }
                            }
                            // An inadmissible preconditioned point is
                            // discarded like a residual increase.
                            Err(Error::ElementInversion { .. }) => {}
                            Err(e) => return Err(e),
                        }
                    } else {
                        // Identity application (eta = 0): nothing changed,
                        // but the preconditioner did run.
                        used = true;
                    }
                }
                Err(Error::ModelNan) => {
                    // Permanent fallback to the plain inner solver.
                    fallback = true;
                    report.model_fallback = true;
                }
                Err(e) => return Err(e),
            }
        }

        let step = match inner {
            InnerSolver::LineSearch => ls_step(problem, &mut state, &mut ls_work, opts)?,
            InnerSolver::TrustRegion => tr_step(problem, &mut state, &mut work, opts)?,
        };
        match step {
            StepResult::Taken(s) | StepResult::Rejected(s) => {
                report.residual_history.push(state.r_norm);
                report.step_history.push(s);
                report.precond_used.push(used);
            }
            StepResult::Failed(StepFail::Singular) => {
                report.outcome = Outcome::LinearSolveFailed;
                break;
            }
            StepResult::Failed(StepFail::NoValidStep) => {
                report.outcome = Outcome::Diverged;
                break;
            }
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}
