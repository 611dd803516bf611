//! Dirichlet solvers for the discrete operators.
//!
//! - Laplace: red-black SOR with near-optimal relaxation and a
//!   machine-precision stall detector.
//! - Pucci: policy iteration. The extremal frame and per-direction
//!   coefficients are frozen from the current iterate, the resulting linear
//!   problem is relaxed, the policy re-optimized; updates are damped by 0.8
//!   and the gradient term is lagged.
//! - p-Laplace: damped Picard on the regularized flux with delta
//!   continuation from 8h down to the target regularization and an energy
//!   line search on the damping factor.
//!
//! Convergence is always reported against the sup norm of the true
//! nonlinear residual; non-convergence is returned, never hidden.

use crate::geometry::{localize, DomainGrid, NodeClass};
use crate::grid::ScalarField;
use crate::operators::{apply_at, gradient_at, ExtremalSign, OperatorKind, OperatorSpec};
use crate::{Error, Result};

/// A discrete Dirichlet problem: interior equation `F(D^2 u, grad u) = f`,
/// boundary values `g`.
pub struct DirichletProblem<'a> {
    pub dg: &'a DomainGrid,
    pub spec: OperatorSpec,
    pub f: ScalarField,
    pub g: ScalarField,
}

impl<'a> DirichletProblem<'a> {
    pub fn new(dg: &'a DomainGrid, spec: OperatorSpec, f: ScalarField, g: ScalarField) -> Result<Self> {
        if f.spec != dg.spec || g.spec != dg.spec {
            return Err(Error::Precondition("f/g grids do not match the domain grid".into()));
        }
        for (i, j) in dg.interior_nodes() {
            if !f.get(i, j).is_finite() {
                let p = dg.spec.pos(i, j);
                return Err(Error::Precondition(format!("f not finite at ({}, {})", p[0], p[1])));
            }
        }
        for (i, j) in dg.boundary_nodes() {
            if !g.get(i, j).is_finite() {
                let p = dg.spec.pos(i, j);
                return Err(Error::Precondition(format!("g not finite at ({}, {})", p[0], p[1])));
            }
        }
        Ok(DirichletProblem { dg, spec, f, g })
    }

    /// Problem with rhs `f` and the boundary data already stored on `dg`.
    pub fn with_stored_boundary(dg: &'a DomainGrid, spec: OperatorSpec, f: ScalarField) -> Result<Self> {
        let g = dg.boundary_values.clone();
        DirichletProblem::new(dg, spec, f, g)
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Sup-norm residual tolerance.
    pub tol: f64,
    /// Grid-sweep budget.
    pub max_iter: usize,
    /// SOR relaxation factor in (0, 2); None selects it from the grid size.
    pub relaxation: Option<f64>,
    /// Number of delta halvings in the p-Laplace continuation (8h -> h).
    pub continuation_steps: usize,
}

impl SolverConfig {
    pub fn for_operator(kind: OperatorKind) -> Self {
        let tol = match kind {
            OperatorKind::Laplace => 1e-10,
            _ => 1e-8,
        };
        SolverConfig { tol, max_iter: 100_000, relaxation: None, continuation_steps: 3 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Precondition(format!("tol must be positive, got {}", self.tol)));
        }
        if let Some(w) = self.relaxation {
            if !(w > 0.0 && w < 2.0) {
                return Err(Error::Precondition(format!("relaxation must lie in (0, 2), got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: ScalarField,
    pub residual_inf: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Regularized Dirichlet energy after each accepted Picard iteration of
    /// the final continuation stage (p-Laplace solves only).
    pub energy_trace: Vec<f64>,
}

struct Workspace {
    red: Vec<usize>,
    black: Vec<usize>,
    interior: Vec<usize>,
    nx: usize,
    omega: f64,
}

fn workspace(dg: &DomainGrid, cfg: &SolverConfig) -> Workspace {
    let nx = dg.spec.nx;
    let mut red = Vec::new();
    let mut black = Vec::new();
    let mut interior = Vec::new();
    let mut lo = [usize::MAX; 2];
    let mut hi = [0usize; 2];
    for (i, j) in dg.interior_nodes() {
        let k = dg.spec.idx(i, j);
        interior.push(k);
        if (i + j) % 2 == 0 {
            red.push(k);
        } else {
            black.push(k);
        }
        lo[0] = lo[0].min(i);
        lo[1] = lo[1].min(j);
        hi[0] = hi[0].max(i);
        hi[1] = hi[1].max(j);
    }
    let span = (hi[0].saturating_sub(lo[0])).max(hi[1].saturating_sub(lo[1])).max(2) as f64;
    let omega = cfg.relaxation.unwrap_or_else(|| 2.0 / (1.0 + (std::f64::consts::PI / span).sin()));
    Workspace { red, black, interior, nx, omega }
}

fn seed_from_boundary(prob: &DirichletProblem, initial: Option<&ScalarField>) -> ScalarField {
    let dg = prob.dg;
    let mut u = ScalarField::zeros(dg.spec);
    if let Some(init) = initial {
        u.pull_shared(init);
        for v in &mut u.data {
            if !v.is_finite() {
                *v = 0.0;
            }
        }
    }
    for j in 0..dg.spec.ny {
        for i in 0..dg.spec.nx {
            match dg.class(i, j) {
                NodeClass::GraphBoundary | NodeClass::CapBoundary => u.set(i, j, prob.g.get(i, j)),
                // NaN poisons any accidental read through an exterior node
                NodeClass::Exterior => u.set(i, j, f64::NAN),
                NodeClass::Interior => {}
            }
        }
    }
    u
}

fn residual_inf(prob: &DirichletProblem, u: &ScalarField) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, j) in prob.dg.interior_nodes() {
        let r = apply_at(&prob.spec, u, i, j)? - prob.f.get(i, j);
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Residual level below which floating point cannot certify improvement:
/// the relaxation stalls with an iterate error of a few hundred ulps of the
/// solution scale, whose residual image carries the 1/h^2 factor.
fn residual_floor(u: &ScalarField, h: f64) -> f64 {
    256.0 * f64::EPSILON * (1.0 + u.max_abs()) / (h * h)
}

fn clean_exterior_result(
    mut u: ScalarField,
    residual: f64,
    iterations: usize,
    converged: bool,
) -> Result<SolveResult> {
    for v in &mut u.data {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    Ok(SolveResult { u, residual_inf: residual, iterations, converged, energy_trace: Vec::new() })
}

/// Solves the Dirichlet problem, dispatching on the operator kind.
pub fn solve(prob: &DirichletProblem, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_with_initial(prob, cfg, None)
}

/// As [`solve`], seeding the interior iterate from `initial` where the grids
/// overlap (localized replacement solves start very close to the answer).
pub fn solve_with_initial(
    prob: &DirichletProblem,
    cfg: &SolverConfig,
    initial: Option<&ScalarField>,
) -> Result<SolveResult> {
    cfg.validate()?;
    match prob.spec.kind {
        OperatorKind::Laplace => solve_laplace(prob, cfg, initial),
        OperatorKind::Pucci => solve_pucci(prob, cfg, initial),
        OperatorKind::PLaplace => solve_plaplace(prob, cfg, initial),
    }
}

fn solve_laplace(
    prob: &DirichletProblem,
    cfg: &SolverConfig,
    initial: Option<&ScalarField>,
) -> Result<SolveResult> {
    let dg = prob.dg;
    let ws = workspace(dg, cfg);
    let mut u = seed_from_boundary(prob, initial);
    let h2 = dg.spec.h * dg.spec.h;
    let nx = ws.nx;
    let mut iterations = 0usize;
    let mut stalled = false;
    let mut best_res = f64::INFINITY;
    let mut since_improved = 0usize;
    while iterations < cfg.max_iter {
        let mut update_max = 0.0f64;
        for color in [&ws.red, &ws.black] {
            for &k in color.iter() {
                let s = u.data[k - 1] + u.data[k + 1] + u.data[k - nx] + u.data[k + nx];
                let gs = 0.25 * (s - h2 * prob.f.data[k]);
                let new = u.data[k] + ws.omega * (gs - u.data[k]);
                update_max = update_max.max((new - u.data[k]).abs());
                u.data[k] = new;
            }
        }
        iterations += 1;
        if update_max <= 8.0 * f64::EPSILON * (1.0 + u.max_abs()) {
            stalled = true;
            break;
        }
        if iterations % 8 == 0 {
            let r = laplace_residual(&u, prob, &ws, h2);
            if r <= cfg.tol {
                return clean_exterior_result(u, r, iterations, true);
            }
            if r < best_res * 0.999 {
                best_res = r;
                since_improved = 0;
            } else {
                since_improved += 8;
                if since_improved >= 128 {
                    stalled = true;
                    break;
                }
            }
        }
    }
    let r = laplace_residual(&u, prob, &ws, h2);
    let floor = residual_floor(&u, dg.spec.h);
    let converged = r <= cfg.tol || (stalled && r <= floor.max(cfg.tol));
    clean_exterior_result(u, r, iterations, converged)
}

fn laplace_residual(u: &ScalarField, prob: &DirichletProblem, ws: &Workspace, h2: f64) -> f64 {
    let nx = ws.nx;
    let mut worst = 0.0f64;
    for &k in &ws.interior {
        let s = u.data[k - 1] + u.data[k + 1] + u.data[k - nx] + u.data[k + nx];
        let r = (s - 4.0 * u.data[k]) / h2 - prob.f.data[k];
        worst = worst.max(r.abs());
    }
    worst
}

fn solve_pucci(
    prob: &DirichletProblem,
    cfg: &SolverConfig,
    initial: Option<&ScalarField>,
) -> Result<SolveResult> {
    let dg = prob.dg;
    let spec = &prob.spec;
    let ws = workspace(dg, cfg);
    let stencil = spec.stencil();
    let minus = spec.pucci_sign == ExtremalSign::Minus;
    let h = dg.spec.h;
    let h2 = h * h;
    let nx = dg.spec.nx as i64;
    let mut u = seed_from_boundary(prob, initial);
    let damping = 0.8;

    // Frozen policy per interior node: two direction offsets (flat-index
    // deltas), their 1/|v|^2 weights, the extremal coefficients, and the
    // lagged gradient folded into the rhs.
    let ni = ws.interior.len();
    let mut off_a = vec![0i64; ni];
    let mut off_b = vec![0i64; ni];
    let mut w_a = vec![0.0f64; ni];
    let mut w_b = vec![0.0f64; ni];
    let mut c_a = vec![0.0f64; ni];
    let mut c_b = vec![0.0f64; ni];
    let mut rhs = vec![0.0f64; ni];

    let mut iterations = 0usize;
    for _policy_round in 0..400 {
        for (n, &k) in ws.interior.iter().enumerate() {
            let (i, j) = (k % dg.spec.nx, k / dg.spec.nx);
            let (ii, jj) = (i as i64, j as i64);
            let uc = u.data[k];
            let grad = if spec.gradient_coeff > 0.0 {
                let g = gradient_at(&u, i, j)?;
                spec.gradient_coeff * (g[0] * g[0] + g[1] * g[1]).sqrt()
            } else {
                0.0
            };
            // Minus scheme: P^-(u) - M|grad u| = f  =>  rhs = f + M|grad|.
            rhs[n] = prob.f.data[k] + if minus { grad } else { -grad };
            if spec.lambda_min == spec.lambda_max {
                off_a[n] = 1;
                off_b[n] = nx;
                w_a[n] = 1.0;
                w_b[n] = 1.0;
                c_a[n] = spec.lambda_min;
                c_b[n] = spec.lambda_min;
                continue;
            }
            let mut best = (f64::INFINITY, 0usize, 0usize, 0.0f64, 0.0f64);
            for &(a, b) in &stencil.frames {
                let mut frame_val = 0.0;
                let mut coeffs = [0.0f64; 2];
                for (slot, &line) in [a, b].iter().enumerate() {
                    let v = stencil.directions[line];
                    let kp = (jj + v[1]) * nx + (ii + v[0]);
                    let km = (jj - v[1]) * nx + (ii - v[0]);
                    let d2 = (u.data[kp as usize] + u.data[km as usize] - 2.0 * uc)
                        * stencil.weights[line]
                        / h2;
                    let c = if (d2 >= 0.0) == minus { spec.lambda_min } else { spec.lambda_max };
                    coeffs[slot] = c;
                    frame_val += c * d2;
                }
                let keyed = if minus { frame_val } else { -frame_val };
                if keyed < best.0 {
                    best = (keyed, a, b, coeffs[0], coeffs[1]);
                }
            }
            let (_, a, b, ca, cb) = best;
            let va = stencil.directions[a];
            let vb = stencil.directions[b];
            off_a[n] = va[1] * nx + va[0];
            off_b[n] = vb[1] * nx + vb[0];
            w_a[n] = stencil.weights[a];
            w_b[n] = stencil.weights[b];
            c_a[n] = ca;
            c_b[n] = cb;
        }

        // Relax the frozen linear problem. Plain Gauss-Seidel: the frozen
        // matrix is an M-matrix but not symmetric (coefficients vary per
        // node), so over-relaxation is not safe here.
        let prev = u.clone();
        let sweep_cap = 600.max((2.0 / h) as usize);
        let mut first_update = 0.0f64;
        for sweep in 0..sweep_cap {
            let mut update_max = 0.0f64;
            for (n, &k) in ws.interior.iter().enumerate() {
                let (ka, kb) = (off_a[n], off_b[n]);
                let sa = u.data[(k as i64 + ka) as usize] + u.data[(k as i64 - ka) as usize];
                let sb = u.data[(k as i64 + kb) as usize] + u.data[(k as i64 - kb) as usize];
                let num = c_a[n] * w_a[n] * sa + c_b[n] * w_b[n] * sb - h2 * rhs[n];
                let den = 2.0 * (c_a[n] * w_a[n] + c_b[n] * w_b[n]);
                let gs = num / den;
                update_max = update_max.max((gs - u.data[k]).abs());
                u.data[k] = gs;
            }
            iterations += 1;
            if sweep == 0 {
                first_update = update_max;
            }
            // Inexact inner solve: a modest relative reduction per policy
            // round is enough for the outer iteration to contract.
            if update_max <= 8.0 * f64::EPSILON * (1.0 + u.max_abs())
                || update_max <= 0.01 * first_update
                || iterations >= cfg.max_iter
            {
                break;
            }
        }

        // Damped policy update.
        for &k in &ws.interior {
            u.data[k] = prev.data[k] + damping * (u.data[k] - prev.data[k]);
        }

        let r = residual_inf(prob, &u)?;
        if r <= cfg.tol {
            return clean_exterior_result(u, r, iterations, true);
        }
        if iterations >= cfg.max_iter {
            break;
        }
    }
    let r = residual_inf(prob, &u)?;
    clean_exterior_result(u, r, iterations, r <= cfg.tol)
}

fn solve_plaplace(
    prob: &DirichletProblem,
    cfg: &SolverConfig,
    initial: Option<&ScalarField>,
) -> Result<SolveResult> {
    let dg = prob.dg;
    let spec = &prob.spec;
    let p = spec.p;
    let h = dg.spec.h;
    let h2 = h * h;
    let nx = dg.spec.nx;
    let n_all = dg.spec.n_nodes();
    let ws = workspace(dg, cfg);
    let mut u = seed_from_boundary(prob, initial);
    let omega = ws.omega.min(1.9);

    // Delta continuation: 8h halved down to the target regularization.
    let target_delta = spec.reg_delta;
    let mut deltas = Vec::new();
    if p == 2.0 {
        deltas.push(target_delta);
    } else {
        let mut d = (8.0 * h).max(target_delta);
        deltas.push(d);
        for _ in 0..cfg.continuation_steps {
            d = (0.5 * d).max(target_delta);
            if d < *deltas.last().unwrap() {
                deltas.push(d);
            }
        }
        if *deltas.last().unwrap() > target_delta {
            deltas.push(target_delta);
        }
    }

    let coeff = |g2: f64, d2: f64| -> f64 {
        if p == 2.0 {
            1.0
        } else {
            (g2 + d2).powf(0.5 * (p - 2.0))
        }
    };

    // East/north face gradients at the face owned by flat node k.
    let east_g2 = |u: &ScalarField, k: usize| -> f64 {
        let gx = (u.data[k + 1] - u.data[k]) / h;
        let gy = (u.data[k + nx] - u.data[k - nx] + u.data[k + 1 + nx] - u.data[k + 1 - nx]) / (4.0 * h);
        gx * gx + gy * gy
    };
    let north_g2 = |u: &ScalarField, k: usize| -> f64 {
        let gy = (u.data[k + nx] - u.data[k]) / h;
        let gx = (u.data[k + 1] - u.data[k - 1] + u.data[k + 1 + nx] - u.data[k - 1 + nx]) / (4.0 * h);
        gx * gx + gy * gy
    };

    let face_coeffs = |u: &ScalarField, d2: f64, ax: &mut [f64], ay: &mut [f64]| {
        for &k in &ws.interior {
            ax[k] = coeff(east_g2(u, k), d2);
            ax[k - 1] = coeff(east_g2(u, k - 1), d2);
            ay[k] = coeff(north_g2(u, k), d2);
            ay[k - nx] = coeff(north_g2(u, k - nx), d2);
        }
    };

    // Regularized Dirichlet energy over every face adjacent to the interior.
    let is_interior =
        |k: usize| -> bool { dg.class[k] == NodeClass::Interior };
    let energy = |u: &ScalarField, d2: f64| -> f64 {
        let mut e = 0.0;
        for k in 0..n_all {
            let i = k % nx;
            if i + 1 < nx && (is_interior(k) || is_interior(k + 1)) {
                e += (east_g2(u, k) + d2).powf(0.5 * p) / p;
            }
            if k + nx < n_all && (is_interior(k) || is_interior(k + nx)) {
                e += (north_g2(u, k) + d2).powf(0.5 * p) / p;
            }
            if is_interior(k) {
                e += prob.f.data[k] * u.data[k];
            }
        }
        e * h2
    };

    let mut ax = vec![0.0f64; n_all];
    let mut ay = vec![0.0f64; n_all];
    let mut iterations = 0usize;
    let mut energy_trace: Vec<f64> = Vec::new();

    for (si, &delta) in deltas.iter().enumerate() {
        let d2 = delta * delta;
        let last_stage = si + 1 == deltas.len();
        let stage_tol = if last_stage { cfg.tol } else { (cfg.tol * 100.0).max(1e-6) };
        // p = 2 is linear: full steps, with rounds standing in for a
        // longer sweep budget. For degenerate p > 2 the undamped Picard map
        // loses contractivity near vanishing gradients; 1/(p-1) restores it.
        let max_picard = if p == 2.0 { 12 } else { 400 };
        let mut alpha = if p == 2.0 { 1.0f64 } else { (1.0 / (p - 1.0)).min(0.7) };
        let mut best_res = f64::INFINITY;
        let mut stall = 0usize;
        for _picard in 0..max_picard {
            face_coeffs(&u, d2, &mut ax, &mut ay);
            let prev = u.clone();
            let sweep_cap = 400.max((2.0 / h) as usize);
            let mut first_update = 0.0f64;
            for sweep in 0..sweep_cap {
                let mut update_max = 0.0f64;
                for &k in &ws.interior {
                    let ae = ax[k];
                    let aw = ax[k - 1];
                    let an = ay[k];
                    let as_ = ay[k - nx];
                    let num = ae * u.data[k + 1] + aw * u.data[k - 1] + an * u.data[k + nx]
                        + as_ * u.data[k - nx]
                        - h2 * prob.f.data[k];
                    let den = ae + aw + an + as_;
                    let gs = num / den;
                    let new = u.data[k] + omega * (gs - u.data[k]);
                    update_max = update_max.max((new - u.data[k]).abs());
                    u.data[k] = new;
                }
                iterations += 1;
                if sweep == 0 {
                    first_update = update_max;
                }
                if update_max <= 8.0 * f64::EPSILON * (1.0 + u.max_abs())
                    || update_max <= 0.005 * first_update
                    || iterations >= cfg.max_iter
                {
                    break;
                }
            }
            // Damped Picard step, driven by the true stage residual.
            for &k in &ws.interior {
                u.data[k] = prev.data[k] + alpha * (u.data[k] - prev.data[k]);
            }
            let r = stage_residual(prob, &u, delta)?;
            if last_stage {
                energy_trace.push(energy(&u, d2));
            }
            if r <= stage_tol {
                break;
            }
            if r > 4.0 * best_res && alpha > 0.05 {
                // Overshoot: back off the damping and retry from prev.
                u.data.copy_from_slice(&prev.data);
                alpha *= 0.5;
                stall = 0;
                continue;
            }
            if r < best_res * 0.999 {
                best_res = r;
                stall = 0;
            } else {
                stall += 1;
                if stall >= 12 {
                    break;
                }
            }
            if iterations >= cfg.max_iter {
                break;
            }
        }
        if iterations >= cfg.max_iter {
            break;
        }
    }

    let r = residual_inf(prob, &u)?;
    let mut out = clean_exterior_result(u, r, iterations, r <= cfg.tol)?;
    out.energy_trace = energy_trace;
    Ok(out)
}

/// Residual of the delta-stage scheme (the final stage uses the target
/// regularization).
fn stage_residual(prob: &DirichletProblem, u: &ScalarField, delta: f64) -> Result<f64> {
    let mut spec = prob.spec;
    spec.reg_delta = delta;
    let mut worst = 0.0f64;
    for (i, j) in prob.dg.interior_nodes() {
        let r = apply_at(&spec, u, i, j)? - prob.f.get(i, j);
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Report of a comparison-principle check between two admissible problems.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    /// max over interior of u1 - u2 (should not exceed `bound`).
    pub max_gap: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Verifies `f1 >= f2` and `g1 <= g2` nodewise, solves both problems and
/// checks `u1 <= u2` up to twice the solver tolerance.
pub fn comparison_check(
    p1: &DirichletProblem,
    p2: &DirichletProblem,
    cfg: &SolverConfig,
) -> Result<ComparisonReport> {
    if p1.dg.spec != p2.dg.spec {
        return Err(Error::Precondition("comparison problems must share the grid".into()));
    }
    for (i, j) in p1.dg.interior_nodes() {
        if p1.f.get(i, j) < p2.f.get(i, j) - 1e-14 {
            let p = p1.dg.spec.pos(i, j);
            return Err(Error::Precondition(format!(
                "f1 < f2 at node ({}, {}): {} < {}",
                p[0],
                p[1],
                p1.f.get(i, j),
                p2.f.get(i, j)
            )));
        }
    }
    for (i, j) in p1.dg.boundary_nodes() {
        if p1.g.get(i, j) > p2.g.get(i, j) + 1e-14 {
            let p = p1.dg.spec.pos(i, j);
            return Err(Error::Precondition(format!(
                "g1 > g2 at node ({}, {}): {} > {}",
                p[0],
                p[1],
                p1.g.get(i, j),
                p2.g.get(i, j)
            )));
        }
    }
    let r1 = solve(p1, cfg)?;
    let r2 = solve(p2, cfg)?;
    let mut max_gap = f64::NEG_INFINITY;
    for (i, j) in p1.dg.interior_nodes() {
        max_gap = max_gap.max(r1.u.get(i, j) - r2.u.get(i, j));
    }
    let bound = 2.0 * cfg.tol.max(r1.residual_inf).max(r2.residual_inf);
    Ok(ComparisonReport { max_gap, bound, ok: max_gap <= bound })
}

/// Report of an extension (restriction-consistency) check.
#[derive(Debug, Clone)]
pub struct ExtensionReport {
    pub sup_diff: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Solves on the full grid, re-solves on a localization whose boundary data
/// is read from the full solution, and reports the sup difference over the
/// localized interior.
pub fn extension_check(
    dg: &DomainGrid,
    sub_center: [f64; 2],
    sub_r: f64,
    prob: &DirichletProblem,
    cfg: &SolverConfig,
) -> Result<ExtensionReport> {
    let full = solve(prob, cfg)?;
    let mut loc = localize(dg, sub_center, sub_r)?;
    loc.set_boundary_from_field(&full.u)?;
    let mut f_loc = ScalarField::zeros(loc.spec);
    f_loc.pull_shared(&prob.f);
    let loc_prob = DirichletProblem::with_stored_boundary(&loc, prob.spec, f_loc)?;
    let sub = solve_with_initial(&loc_prob, cfg, Some(&full.u))?;
    let mut sup = 0.0f64;
    for (i, j) in loc.interior_nodes() {
        let (li, lj) = loc.spec.lattice(i, j);
        let a = full.u.get_lattice(li, lj).unwrap();
        sup = sup.max((a - sub.u.get(i, j)).abs());
    }
    let bound = 2.0 * cfg.tol.max(full.residual_inf).max(sub.residual_inf);
    Ok(ExtensionReport { sup_diff: sup, bound, ok: sup <= bound })
}

/// CSV dump of a solution: `x,y,value,node_class` rows.
pub fn dump_csv(u: &ScalarField, dg: &DomainGrid) -> String {
    let mut out = String::from("x,y,value,node_class\n");
    for j in 0..dg.spec.ny {
        for i in 0..dg.spec.nx {
            let p = dg.spec.pos(i, j);
            let class = match dg.class(i, j) {
                NodeClass::Interior => "interior",
                NodeClass::GraphBoundary => "graph-boundary",
                NodeClass::CapBoundary => "cap-boundary",
                NodeClass::Exterior => "exterior",
            };
            out.push_str(&format!("{:.16e},{:.16e},{:.16e},{}\n", p[0], p[1], u.get(i, j), class));
        }
    }
    out
}

/// Closed-form solution of the 1-D slab problem `(|u'|^{p-2} u')' = -1`,
/// `u(0) = u(1) = 0`.
pub fn slab_exact(p: f64, x: f64) -> f64 {
    let q = p / (p - 1.0);
    (p - 1.0) / p * ((0.5f64).powf(q) - (x - 0.5).abs().powf(q))
}
