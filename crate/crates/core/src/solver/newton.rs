//! Newton iterations: cubic backtracking line search and dogleg trust
//! region over the Gauss-Newton model of 1/2 |F|^2, plus incremental
//! loading for the displacement-driven problem.
//!
//! The single-step routines are shared with the neural-preconditioned
//! wrappers so that a zero-initialized preconditioner reproduces the plain
//! trajectories bit for bit.

use super::report::{Outcome, SolveReport};
use super::{check_convergence, Convergence, SolveOptions};
use crate::error::{Error, Result};
use crate::problems::{ElasticityParams, NonlinearSystem, Problem};
use crate::solver::np::InnerSolver;
use crate::sparse::{dot, lu_factorize, norm2, CsrMatrix};
use std::time::Instant;

/// Why a single Newton step could not be completed.
pub(super) enum StepFail {
    /// Jacobian factorization failed.
    Singular,
    /// No admissible trial point (element inversion down to lambda_min).
    NoValidStep,
}

pub(super) struct StepState {
    pub u: Vec<f64>,
    pub r: Vec<f64>,
    pub r_norm: f64,
}

impl StepState {
    pub fn at(sys: &dyn NonlinearSystem, u0: &[f64]) -> Result<Self> {
        if u0.len() != sys.n_free() {
            return Err(Error::Dimension {
                expected: sys.n_free(),
                got: u0.len(),
            });
        }
        let r = sys.residual(u0)?;
        let r_norm = norm2(&r);
        Ok(StepState {
            u: u0.to_vec(),
            r,
            r_norm,
        })
    }
}

pub(super) enum StepResult {
    /// Step taken; the state was updated. Carries the step size (lambda or
    /// the trust radius used).
    Taken(f64),
    /// Trust-region proposal rejected; iterate unchanged, radius shrunk.
    Rejected(f64),
    Failed(StepFail),
}

/// Line-search state carried between iterations: the next search starts at
/// twice the previously accepted step (capped at the full step), so a
/// heavily damped phase ramps back up gradually instead of re-probing the
/// full step every iteration.
pub(super) struct LsWork {
    lambda_prev: f64,
}

impl LsWork {
    pub fn new() -> Self {
        LsWork { lambda_prev: 1.0 }
    }
}

/// One damped-Newton iteration with quadratic/cubic backtracking.
///
/// If no step down to lambda_min satisfies the Armijo test, the search has
/// stagnated; the full Newton step is taken instead and the divergence cap
/// decides the outcome. An inadmissible full step ends the solve.
pub(super) fn ls_step(
    sys: &dyn NonlinearSystem,
    state: &mut StepState,
    work: &mut LsWork,
    opts: &SolveOptions,
) -> Result<StepResult> {
    let jac = match sys.jacobian(&state.u) {
        Ok(j) => j,
        Err(Error::SingularMatrix { .. }) => return Ok(StepResult::Failed(StepFail::Singular)),
        Err(e) => return Err(e),
    };
    let fac = match lu_factorize(&jac) {
        Ok(f) => f,
        Err(Error::SingularMatrix { .. }) => return Ok(StepResult::Failed(StepFail::Singular)),
        Err(e) => return Err(e),
    };
    let neg_r: Vec<f64> = state.r.iter().map(|v| -v).collect();
    let p = fac.solve(&neg_r)?;

    let f0 = 0.5 * state.r_norm * state.r_norm;
    // Exact Newton direction: d/dlambda of 1/2 |F(u + lambda p)|^2 at 0 is
    // r . J p = -|r|^2.
    let g0 = -state.r_norm * state.r_norm;
    let c1 = opts.ls.c1;
    let lambda_min = opts.ls.lambda_min;

    let mut lambda = (2.0 * work.lambda_prev).min(1.0);
    let mut forced = false;
    // Most recent valid trial, for the two-point cubic model.
    let mut prev: Option<(f64, f64)> = None;

    for bt in 0..=opts.ls.max_backtracks {
        let trial: Vec<f64> = state
            .u
            .iter()
            .zip(&p)
            .map(|(ui, pi)| ui + lambda * pi)
            .collect();
        match sys.residual(&trial) {
            Ok(rt) => {
                let rt_norm = norm2(&rt);
                let ft = 0.5 * rt_norm * rt_norm;
                let sufficient = ft.is_finite() && ft <= f0 + c1 * lambda * g0;
                if sufficient || (forced && ft.is_finite()) {
                    state.u = trial;
                    state.r = rt;
                    state.r_norm = rt_norm;
                    work.lambda_prev = lambda;
                    return Ok(StepResult::Taken(lambda));
                }
                if forced {
                    return Ok(StepResult::Failed(StepFail::NoValidStep));
                }
                // Next lambda: quadratic model on the first backtrack,
                // cubic (two-point) afterwards, clamped to [0.1, 0.5] of
                // the current step.
                let mut next = match prev {
                    None => {
                        let denom = 2.0 * (ft - f0 - g0 * lambda);
                        if ft.is_finite() {
                            -g0 * lambda * lambda / denom
                        } else {
                            0.5 * lambda
                        }
                    }
                    Some((l2, f2)) => cubic_min(f0, g0, lambda, ft, l2, f2),
                };
                if !next.is_finite() {
                    next = 0.5 * lambda;
                }
                next = next.clamp(0.1 * lambda, 0.5 * lambda);
                if ft.is_finite() {
                    prev = Some((lambda, ft));
                } else {
                    prev = None;
                }
                if next <= lambda_min || bt + 1 == opts.ls.max_backtracks {
                    // Stagnated: escape with the full Newton step.
                    lambda = 1.0;
                    forced = true;
                } else {
                    lambda = next;
                }
            }
            Err(Error::ElementInversion { .. }) => {
                if forced || lambda <= lambda_min {
                    return Ok(StepResult::Failed(StepFail::NoValidStep));
                }
                // Sufficient-decrease failure without a merit value to
                // interpolate with; bisect.
                prev = None;
                lambda *= 0.5;
                if lambda <= lambda_min {
                    lambda = 1.0;
                    forced = true;
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(StepResult::Failed(StepFail::NoValidStep))
}

/// Minimizer of the cubic through (0, f0) with slope g0 and the two trials
/// (l1, f1), (l2, f2); the two-point backtracking formula.
fn cubic_min(f0: f64, g0: f64, l1: f64, f1: f64, l2: f64, f2: f64) -> f64 {
    let d1 = f1 - f0 - g0 * l1;
    let d2 = f2 - f0 - g0 * l2;
    let denom = l1 - l2;
    if denom == 0.0 {
        return 0.5 * l1;
    }
    let a = (d1 / (l1 * l1) - d2 / (l2 * l2)) / denom;
    let b = (-l2 * d1 / (l1 * l1) + l1 * d2 / (l2 * l2)) / denom;
    if a.abs() < 1e-300 {
        return -g0 / (2.0 * b);
    }
    let disc = b * b - 3.0 * a * g0;
    if disc < 0.0 {
        return 0.5 * l1;
    }
    (-b + disc.sqrt()) / (3.0 * a)
}

/// Trust-region working state persisting across iterations.
pub(super) struct TrWork {
    pub delta: f64,
    cache: Option<TrCache>,
}

struct TrCache {
    at_u: Vec<f64>,
    jac: CsrMatrix,
    grad: Vec<f64>,
    newton: Option<Vec<f64>>,
}

impl TrWork {
    pub fn new(opts: &SolveOptions) -> Self {
        TrWork {
            delta: opts.tr.delta0,
            cache: None,
        }
    }
}

/// One dogleg trust-region cycle: propose, test the gain ratio, accept or
/// shrink. Rejections leave the iterate unchanged; the cached factorization
/// is reused on the retry.
pub(super) fn tr_step(
    sys: &dyn NonlinearSystem,
    state: &mut StepState,
    work: &mut TrWork,
    opts: &SolveOptions,
) -> Result<StepResult> {
    let rebuild = match &work.cache {
        Some(c) => c.at_u != state.u,
        None => true,
    };
    if rebuild {
        let jac = match sys.jacobian(&state.u) {
            Ok(j) => j,
            Err(Error::SingularMatrix { .. }) => {
                return Ok(StepResult::Failed(StepFail::Singular))
            }
            Err(e) => return Err(e),
        };
        let grad = jac.matvec_transpose(&state.r)?;
        let newton = match lu_factorize(&jac) {
            Ok(fac) => {
                let neg_r: Vec<f64> = state.r.iter().map(|v| -v).collect();
                Some(fac.solve(&neg_r)?)
            }
            // Singular Jacobian: fall back to the Cauchy step this cycle.
            Err(Error::SingularMatrix { .. }) => None,
            Err(e) => return Err(e),
        };
        work.cache = Some(TrCache {
            at_u: state.u.clone(),
            jac,
            grad,
            newton,
        });
    }
    let cache = work.cache.as_ref().unwrap();

    let delta = work.delta;
    let Some(p) = dogleg(cache, delta)? else {
        return Ok(StepResult::Failed(StepFail::Singular));
    };
    let p_norm = norm2(&p);

    // Predicted reduction of the Gauss-Newton model:
    // m(0) - m(p) = -g.p - 1/2 |J p|^2.
    let jp = cache.jac.matvec(&p)?;
    let pred = -dot(&cache.grad, &p)? - 0.5 * dot(&jp, &jp)?;

    let trial: Vec<f64> = state.u.iter().zip(&p).map(|(a, b)| a + b).collect();
    let f0 = 0.5 * state.r_norm * state.r_norm;
    match sys.residual(&trial) {
        Ok(rt) => {
            let rt_norm = norm2(&rt);
            let ft = 0.5 * rt_norm * rt_norm;
            if pred > 0.0 && ft.is_finite() && (f0 - ft) / pred >= opts.tr.eta_accept {
                let rho = (f0 - ft) / pred;
                state.u = trial;
                state.r = rt;
                state.r_norm = rt_norm;
                work.cache = None;
                if rho > 0.75 && p_norm >= 0.99 * delta {
                    work.delta = (opts.tr.grow * work.delta).min(opts.tr.delta_max);
                }
                return Ok(StepResult::Taken(delta));
            }
        }
        Err(Error::ElementInversion { .. }) => {}
        Err(e) => return Err(e),
    }
    work.delta *= opts.tr.shrink;
    Ok(StepResult::Rejected(delta))
}

fn dogleg(cache: &TrCache, delta: f64) -> Result<Option<Vec<f64>>> {
    if let Some(pn) = &cache.newton {
        if norm2(pn) <= delta {
            return Ok(Some(pn.clone()));
        }
    }
    let g = &cache.grad;
    let g2 = dot(g, g)?;
    if g2 == 0.0 {
        return Ok(None);
    }
    let jg = cache.jac.matvec(g)?;
    let jg2 = dot(&jg, &jg)?;
    if jg2 == 0.0 {
        return Ok(None);
    }
    let t = g2 / jg2;
    let pc: Vec<f64> = g.iter().map(|v| -t * v).collect();
    let pc_norm = t * g2.sqrt();
    if pc_norm >= delta {
        let s = delta / g2.sqrt();
        return Ok(Some(g.iter().map(|v| -s * v).collect()));
    }
    match &cache.newton {
        None => Ok(Some(pc)),
        Some(pn) => {
            // Walk from the Cauchy point toward the Newton point until the
            // boundary: |pc + tau d|^2 = delta^2.
            let d: Vec<f64> = pn.iter().zip(&pc).map(|(a, b)| a - b).collect();
            let dd = dot(&d, &d)?;
            if dd == 0.0 {
                return Ok(Some(pc));
            }
            let pd = dot(&pc, &d)?;
            let cc = pc_norm * pc_norm - delta * delta;
            let disc = (pd * pd - dd * cc).max(0.0);
            let tau = (-pd + disc.sqrt()) / dd;
            Ok(Some(pc.iter().zip(&d).map(|(a, b)| a + tau * b).collect()))
        }
    }
}

fn blank_report() -> SolveReport {
    SolveReport {
        outcome: Outcome::MaxIters,
        residual_history: Vec::new(),
        step_history: Vec::new(),
        precond_used: Vec::new(),
        wall_time: 0.0,
        model_fallback: false,
    }
}

/// Newton's method with cubic backtracking line search on 1/2 |F|^2.
pub fn newton_ls(
    sys: &dyn NonlinearSystem,
    u0: &[f64],
    opts: &SolveOptions,
) -> Result<SolveReport> {
    Ok(newton_ls_traced(sys, u0, opts)?.0)
}

/// As [`newton_ls`], also returning every iterate (u0 first, the final
/// iterate last); dataset generation records these snapshots.
pub fn newton_ls_traced(
    sys: &dyn NonlinearSystem,
    u0: &[f64],
    opts: &SolveOptions,
) -> Result<(SolveReport, Vec<Vec<f64>>)> {
    let start = Instant::now();
    let mut state = StepState::at(sys, u0)?;
    let r0 = state.r_norm;
    let mut work = LsWork::new();
    let mut report = blank_report();
    report.residual_history.push(r0);
    let mut trace = vec![state.u.clone()];
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
        match ls_step(sys, &mut state, &mut work, opts)? {
            StepResult::Taken(lambda) => {
                report.residual_history.push(state.r_norm);
                report.step_history.push(lambda);
                report.precond_used.push(false);
                trace.push(state.u.clone());
            }
            StepResult::Rejected(_) => unreachable!("line search does not reject"),
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
    Ok((report, trace))
}

/// Newton's method with a dogleg trust region; rejected proposals count as
/// iterations (the iterate repeats in the history, matching convergence
/// plots with plateaus).
pub fn newton_tr(
    sys: &dyn NonlinearSystem,
    u0: &[f64],
    opts: &SolveOptions,
) -> Result<SolveReport> {
    Ok(newton_tr_traced(sys, u0, opts)?.0)
}

pub fn newton_tr_traced(
    sys: &dyn NonlinearSystem,
    u0: &[f64],
    opts: &SolveOptions,
) -> Result<(SolveReport, Vec<Vec<f64>>)> {
    let start = Instant::now();
    let mut state = StepState::at(sys, u0)?;
    let r0 = state.r_norm;
    let mut work = TrWork::new(opts);
    let mut report = blank_report();
    report.residual_history.push(r0);
    let mut trace = vec![state.u.clone()];
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
        match tr_step(sys, &mut state, &mut work, opts)? {
            StepResult::Taken(delta) => {
                report.residual_history.push(state.r_norm);
                report.step_history.push(delta);
                report.precond_used.push(false);
                trace.push(state.u.clone());
            }
            StepResult::Rejected(delta) => {
                report.residual_history.push(state.r_norm);
                report.step_history.push(delta);
                report.precond_used.push(false);
            }
            StepResult::Failed(_) => {
                report.outcome = Outcome::LinearSolveFailed;
                break;
            }
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((report, trace))
}

/// Incremental loading for the displacement-driven elasticity problem: the
/// top displacement is applied in uniform increments, each solve warm-started
/// from the previous solution, and the residual histories are concatenated.
pub fn incremental_loading(
    mesh: &crate::mesh::Mesh,
    material: ElasticityParams,
    u_t_total: f64,
    delta_u_t: f64,
    inner: InnerSolver,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if delta_u_t <= 0.0 {
        return Err(Error::Unsupported("loading step must be positive".into()));
    }
    let steps_f = u_t_total / delta_u_t;
    let steps = steps_f.round();
    if (steps_f - steps).abs() > 1e-12 || steps < 1.0 {
        return Err(Error::Unsupported(format!(
            "loading step {delta_u_t} does not divide the total displacement {u_t_total}"
        )));
    }
    let steps = steps as usize;
    let start = Instant::now();
    let mut combined = blank_report();
    combined.outcome = Outcome::Converged;
    let mut warm: Option<Vec<f64>> = None;
    for k in 1..=steps {
        let u_t = k as f64 * delta_u_t;
        let problem = Problem::neo_hookean(mesh.clone(), ElasticityParams { u_t, ..material })?;
        let u0 = warm.take().unwrap_or_else(|| vec![0.0; problem.n_free()]);
        let result = match inner {
            InnerSolver::LineSearch => newton_ls_traced(&problem, &u0, opts),
            InnerSolver::TrustRegion => newton_tr_traced(&problem, &u0, opts),
        };
        let (report, trace) = match result {
            Ok(r) => r,
            Err(Error::ElementInversion { .. }) => {
                // The warm start itself is inadmissible at the new load.
                combined.outcome = Outcome::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        combined.residual_history.extend(&report.residual_history);
        combined.step_history.extend(&report.step_history);
        combined.precond_used.extend(&report.precond_used);
        if report.outcome != Outcome::Converged {
            combined.outcome = Outcome::Diverged;
            break;
        }
        warm = trace.into_iter().last();
    }
    combined.wall_time = start.elapsed().as_secs_f64();
    Ok(combined)
}
