//! Layer-iteration certification: executes the sup-ratio recurrence over
//! dyadic boundary strips as a runnable numerical procedure.
//!
//! The engine decomposes the near-boundary region of `B_{c*}` into distance
//! layers `A_k`, measures the sup ratio `M_k = sup_{A_k} u_1/u_2`, and for
//! each layer replays the recurrence step: localize at a nearby boundary
//! site, solve the homogeneous replacements, measure the relative
//! approximation error and the ratio oscillation between the layer point
//! and a corkscrew-depth reference point, and compare the measured `M_k`
//! against the predicted bound
//! `M_0 * prod_j [((1+t_j)/(1-t_j))^2 (1 + C3 (osc/s_j)^alpha)]`,
//! `t_j = C1 s_j^zeta / (C4 r_j^beta)`, built from measured constants.

use crate::estimates::{
    check_boundary_harnack_homogeneous, measure_growth_lower, GrowthFit, GrowthWindow,
    HarnackReport,
};
use crate::geometry::{
    build_graph_domain, build_mask_domain, corkscrew, localize, DomainGrid, GraphFn,
    LipschitzGraphDomain, MaskDomain, NodeClass,
};
use crate::grid::{GridSpec, ScalarField};
use crate::operators::{OperatorKind, OperatorSpec};
use crate::solver::{solve_with_initial, DirichletProblem, SolverConfig};
use crate::util::{linear_fit, Rng64};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Layer schedule: radii, localization scales and the exponent bookkeeping.
#[derive(Debug, Clone)]
pub struct LayerSchedule {
    /// Growth exponent beta (from the measured lower bound).
    pub beta: f64,
    /// Approximation exponent zeta (fitted).
    pub zeta: f64,
    /// Boundary Harnack oscillation exponent alpha.
    pub alpha: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub c_star: f64,
    /// Per-step shrink cap on r_k / r_{k-1} (1/4 by default).
    pub shrink_cap: f64,
    /// r_0 ..= r_{k_max}.
    pub r: Vec<f64>,
    /// s_k for k = 1 ..= k_max (s[k-1]).
    pub s: Vec<f64>,
    pub k_max: usize,
}

/// Builds the schedule with the default paper shrink cap of 1/4.
pub fn compute_schedule(beta: f64, zeta: f64, alpha: f64, c_star: f64, h: f64) -> Result<LayerSchedule> {
    compute_schedule_with_cap(beta, zeta, alpha, c_star, h, 0.25)
}

/// Builds the schedule: `gamma = sqrt(zeta/beta)` (clipped into
/// `(1, zeta/beta)`), `sigma = (beta gamma / zeta + 1)/2`,
/// `r_0 = c*^2/2`, `r_k = min(r_{k-1}^gamma, cap * r_{k-1})` down to the
/// resolution floor `4h`, and `s_k = max(r_{k-1}^sigma, 5 r_{k-1})`.
///
/// The 5 r_{k-1} floor on the localization scale keeps the corkscrew-depth
/// reference point (depth exactly r_{k-1}) inside `B_{s_k/2}` of the site at
/// finite scales; the power law takes over once r is small enough.
pub fn compute_schedule_with_cap(
    beta: f64,
    zeta: f64,
    alpha: f64,
    c_star: f64,
    h: f64,
    shrink_cap: f64,
) -> Result<LayerSchedule> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Precondition(format!("beta must be positive, got {beta}")));
    }
    if beta >= zeta {
        return Err(Error::GrowthExponentTooLarge { beta, zeta });
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Precondition(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if !(c_star > 0.0 && c_star < 0.5) {
        return Err(Error::Precondition(format!("c_star must lie in (0, 1/2), got {c_star}")));
    }
    if !(shrink_cap > 0.0 && shrink_cap <= 0.5) {
        return Err(Error::Precondition(format!("shrink cap must lie in (0, 1/2], got {shrink_cap}")));
    }
    // The layer-chain containment |z| <= c* + r_{k-2}/c* needs
    // (3/2 + c*) r_{k-1} <= r_{k-2}.
    if shrink_cap > 1.0 / (1.5 + c_star) {
        return Err(Error::ScheduleInfeasible(format!(
            "shrink cap {shrink_cap} exceeds 1/(3/2 + c*) = {}",
            1.0 / (1.5 + c_star)
        )));
    }
    let gamma = (zeta / beta).sqrt().clamp(1.0 + 1e-9, zeta / beta - 1e-9);
    let sigma = (beta * gamma / zeta + 1.0) / 2.0;
    debug_assert!(zeta * sigma > beta * gamma);
    debug_assert!(sigma < 1.0);

    let floor = 4.0 * h;
    let r0 = c_star * c_star / 2.0;
    if r0 < floor {
        return Err(Error::ScheduleInfeasible(format!(
            "k_max = 0 at this resolution: r_0 = {r0} below the floor 4h = {floor}"
        )));
    }
    let mut r = vec![r0];
    loop {
        let prev = *r.last().unwrap();
        let next = prev.powf(gamma).min(shrink_cap * prev);
        if next < floor {
            break;
        }
        r.push(next);
        if r.len() > 64 {
            break;
        }
    }
    let k_max = r.len() - 1;
    if k_max == 0 {
        return Err(Error::ScheduleInfeasible(format!(
            "k_max = 0 at this resolution: r_1 = {} below the floor 4h = {floor}",
            r0.powf(gamma).min(shrink_cap * r0)
        )));
    }
    let s: Vec<f64> = (1..=k_max).map(|k| r[k - 1].powf(sigma).max(5.0 * r[k - 1])).collect();
    for k in 1..=k_max {
        debug_assert!(r[k] <= shrink_cap * r[k - 1] + 1e-15);
        debug_assert!(r[k] >= floor);
    }
    Ok(LayerSchedule { beta, zeta, alpha, gamma, sigma, c_star, shrink_cap, r, s, k_max })
}

/// Layer decomposition per the displayed definitions:
/// `A_0 = {x in U cap B_{2c*} : d >= r_0}` and
/// `A_k = {x in U cap B_{c* + r_{k-1}/c*} : r_k <= d <= r_{k-1}}`.
pub fn decompose_layers(dg: &DomainGrid, schedule: &LayerSchedule) -> Result<Vec<Vec<(usize, usize)>>> {
    let cs = schedule.c_star;
    let mut layers: Vec<Vec<(usize, usize)>> = vec![Vec::new(); schedule.k_max + 1];
    for (i, j) in dg.interior_nodes() {
        let p = dg.spec.pos(i, j);
        let rad = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let d = dg.dist_at(i, j);
        if rad <= 2.0 * cs && d >= schedule.r[0] {
            layers[0].push((i, j));
        }
        for k in 1..=schedule.k_max {
            if rad <= cs + schedule.r[k - 1] / cs && d >= schedule.r[k] && d <= schedule.r[k - 1] {
                layers[k].push((i, j));
            }
        }
    }
    for (k, layer) in layers.iter().enumerate() {
        if layer.is_empty() {
            return Err(Error::EmptyLayer { k });
        }
    }
    Ok(layers)
}

/// Homogeneous replacement: solves `H_{U_{y,s}}[0, u]` on the localization
/// at `(y, s)` with boundary data read from `u`. Returns the localized grid
/// and the replacement field.
pub fn homogeneous_replacement(
    u: &ScalarField,
    dg: &DomainGrid,
    y: [f64; 2],
    s: f64,
    op: &OperatorSpec,
    cfg: &SolverConfig,
) -> Result<(DomainGrid, ScalarField)> {
    let mut loc = localize(dg, y, s)?;
    loc.set_boundary_from_field(u)?;
    let f = ScalarField::zeros(loc.spec);
    let prob = DirichletProblem::with_stored_boundary(&loc, *op, f)?;
    let res = solve_with_initial(&prob, cfg, Some(u))?;
    if !res.converged {
        return Err(Error::SolverDiverged { residual: res.residual_inf, iterations: res.iterations });
    }
    let v = res.u;
    Ok((loc, v))
}

/// Fit of `max |u - H[0, u]|` against the localization scale.
#[derive(Debug, Clone)]
pub struct ReplacementFit {
    pub c1: f64,
    pub zeta: f64,
    /// (s, max|u - v|) pairs entering the fit.
    pub points: Vec<(f64, f64)>,
}

/// Regresses `log max|u - v|` on `log s` over the given scales at the
/// boundary site `y`.
pub fn fit_replacement_exponent(
    u: &ScalarField,
    dg: &DomainGrid,
    y: [f64; 2],
    scales: &[f64],
    op: &OperatorSpec,
    cfg: &SolverConfig,
) -> Result<ReplacementFit> {
    let mut points = Vec::new();
    for &s in scales {
        if s < 4.0 * dg.spec.h {
            continue;
        }
        let (loc, v) = homogeneous_replacement(u, dg, y, s, op, cfg)?;
        let mut err = 0.0f64;
        for (i, j) in loc.interior_nodes() {
            let (li, lj) = loc.spec.lattice(i, j);
            if let Some(uv) = u.get_lattice(li, lj) {
                err = err.max((uv - v.get(i, j)).abs());
            }
        }
        points.push((s, err));
    }
    if points.len() < 2 {
        return Err(Error::ResolutionFloor("fewer than two usable replacement scales".into()));
    }
    let xs: Vec<f64> = points.iter().map(|(s, _)| s.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.max(1e-300).ln()).collect();
    let (intercept, slope, _) = linear_fit(&xs, &ys);
    Ok(ReplacementFit { c1: intercept.exp(), zeta: slope, points })
}

/// Per-layer statistics.
#[derive(Debug, Clone)]
pub struct LayerStats {
    pub k: usize,
    pub r_k: f64,
    pub s_k: f64,
    /// Measured sup ratio over the sampled layer nodes.
    pub m_k: f64,
    /// Max relative approximation error |u_i - v_i| / u_i over the layer
    /// slice of the localizations.
    pub approx_err_max: f64,
    /// Worst measured replacement-ratio oscillation factor between a layer
    /// point and its corkscrew-depth reference point.
    pub bhp_factor: f64,
    /// Predicted recurrence factor from the measured constants.
    pub predicted_factor: f64,
    /// Max separation |x - z1| actually used.
    pub osc_dist_max: f64,
    pub sites_ok: usize,
    pub sites_failed: usize,
}

/// Measured constants consumed by the predicted factors.
#[derive(Debug, Clone, Copy)]
pub struct CertifyConstants {
    /// Approximation constant (replacement-error fit).
    pub c1: f64,
    /// Boundary Harnack oscillation constant (ratio-oscillation fit).
    pub c3: f64,
    /// Growth constant (lower bound fit).
    pub c4: f64,
}

#[derive(Debug, Clone)]
pub struct CertifyInputs {
    pub anchor: [f64; 2],
    pub constants: CertifyConstants,
    pub seed: u64,
    /// Slack multiplier on the pass comparison (0.5 = 50%).
    pub slack: f64,
    /// Layer subsample cap (default 512).
    pub sample_cap: usize,
    /// Fast path: the homogeneous replacement of a field that already
    /// solves the homogeneous equation is the field itself.
    pub f1_is_zero: bool,
    pub f2_is_zero: bool,
    pub solver: SolverConfig,
}

impl CertifyInputs {
    pub fn new(anchor: [f64; 2], constants: CertifyConstants, seed: u64, kind: OperatorKind) -> Self {
        CertifyInputs {
            anchor,
            constants,
            seed,
            slack: 0.5,
            sample_cap: 512,
            f1_is_zero: false,
            f2_is_zero: false,
            solver: SolverConfig::for_operator(kind),
        }
    }
}

/// The certification result.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub schedule: LayerSchedule,
    pub layers: Vec<LayerStats>,
    pub m0: f64,
    /// M_0 times the product of predicted factors.
    pub c_star_bound: f64,
    /// Max measured M_k (including M_0).
    pub c_star_measured: f64,
    pub pass: bool,
    pub diagnostics: String,
}

impl Certificate {
    /// Least-squares decay exponent of `log(predicted_factor - 1)` against
    /// the layer index (positive = geometric decay of the excess factors).
    pub fn excess_decay_exponent(&self) -> Option<f64> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for l in &self.layers {
            let excess = l.predicted_factor - 1.0;
            if excess.is_finite() && excess > 0.0 {
                xs.push(l.k as f64);
                ys.push(excess.ln());
            }
        }
        if xs.len() < 2 {
            return None;
        }
        let (_, slope, _) = linear_fit(&xs, &ys);
        Some(-slope)
    }
}

fn ratio_max_over<'a, I: Iterator<Item = &'a (usize, usize)>>(
    u1: &ScalarField,
    u2: &ScalarField,
    nodes: I,
) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for &(i, j) in nodes {
        let r = u1.get(i, j) / u2.get(i, j);
        if r > m {
            m = r;
        }
    }
    m
}

/// Deterministic stratified subsample of at most `cap` nodes.
fn stratified_sample(nodes: &[(usize, usize)], cap: usize, seed: u64) -> Vec<(usize, usize)> {
    if nodes.len() <= cap {
        return nodes.to_vec();
    }
    let mut rng = Rng64::new(seed);
    let stride = nodes.len() / cap;
    let offset = (rng.next_u64() as usize) % stride.max(1);
    (0..cap)
        .map(|i| nodes[(i * nodes.len() / cap + offset).min(nodes.len() - 1)])
        .collect()
}

/// Runs the layer iteration and emits a certificate.
pub fn certify(
    u1: &ScalarField,
    u2: &ScalarField,
    dg: &DomainGrid,
    op: &OperatorSpec,
    schedule: &LayerSchedule,
    inputs: &CertifyInputs,
) -> Result<Certificate> {
    let h = dg.spec.h;
    let mut diagnostics = String::new();

    // Preconditions: positivity inside B_1, zero Dirichlet data on the
    // graph part inside B_1, anchored normalization of u1.
    for (i, j) in dg.interior_nodes() {
        let p = dg.spec.pos(i, j);
        if p[0] * p[0] + p[1] * p[1] < 1.0 {
            if u1.get(i, j) <= 0.0 || u2.get(i, j) <= 0.0 {
                return Err(Error::Precondition(format!(
                    "solution not positive at ({}, {}): u1 = {}, u2 = {}",
                    p[0],
                    p[1],
                    u1.get(i, j),
                    u2.get(i, j)
                )));
            }
        }
    }
    let scale1 = u1.max_abs();
    let scale2 = u2.max_abs();
    for (i, j) in dg.boundary_nodes() {
        if dg.class(i, j) != NodeClass::GraphBoundary {
            continue;
        }
        let p = dg.snap[dg.spec.idx(i, j)];
        if p[0] * p[0] + p[1] * p[1] < 1.0 - 1e-12 {
            if u1.get(i, j).abs() > 1e-9 * (1.0 + scale1)
                || u2.get(i, j).abs() > 1e-9 * (1.0 + scale2)
            {
                return Err(Error::Precondition(format!(
                    "solutions must vanish on the graph boundary inside B_1; at ({}, {}): {} / {}",
                    p[0],
                    p[1],
                    u1.get(i, j),
                    u2.get(i, j)
                )));
            }
        }
    }
    let (ai, aj) = dg.spec.nearest(inputs.anchor);
    let anchor_d = dg.dist_at(ai, aj);
    let need = schedule.c_star * schedule.c_star;
    if anchor_d < need {
        return Err(Error::AnchorTooClose { d: anchor_d, need });
    }
    let anchor_val = u1.get(ai, aj);
    if (anchor_val - 1.0).abs() > 0.5 {
        return Err(Error::AnchorNotNormalized { value: anchor_val });
    }

    let layers = decompose_layers(dg, schedule)?;
    let m0 = ratio_max_over(u1, u2, layers[0].iter());
    let cst = inputs.constants;

    let mut stats: Vec<LayerStats> = Vec::new();
    let mut running_bound = m0;
    let mut pass = true;

    for k in 1..=schedule.k_max {
        let r_k = schedule.r[k];
        let r_km1 = schedule.r[k - 1];
        let s_k = schedule.s[k - 1];
        let sampled = stratified_sample(&layers[k], inputs.sample_cap, inputs.seed ^ (k as u64));
        let m_k = ratio_max_over(u1, u2, sampled.iter());

        // Group sampled layer points by their nearest boundary site.
        let mut sites: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for &(i, j) in &sampled {
            let p = dg.spec.pos(i, j);
            if let Some((bi, bj)) = dg.nearest_graph_boundary(p) {
                sites.entry(dg.spec.idx(bi, bj)).or_default().push((i, j));
            }
        }

        let mut approx_err_max = 0.0f64;
        let mut bhp_factor = f64::NEG_INFINITY;
        let mut osc_dist_max = 0.0f64;
        let mut sites_ok = 0usize;
        let mut sites_failed = 0usize;

        for (&site_idx, xs) in &sites {
            let (bi, bj) = (site_idx % dg.spec.nx, site_idx / dg.spec.nx);
            let y = dg.snap[site_idx];
            let _ = (bi, bj);

            // Corkscrew at half the localization scale; the reference point
            // z1 sits on the segment from z to y at depth exactly r_{k-1}.
            let rho = 0.5 * s_k;
            let z = match corkscrew(dg, y, rho) {
                Ok(c) => c.point,
                Err(_) => {
                    sites_failed += 1;
                    continue;
                }
            };
            let (zi, zj) = dg.spec.nearest(z);
            if dg.dist_at(zi, zj) < r_km1 {
                sites_failed += 1;
                continue;
            }
            let mut z1 = z;
            let steps = (2.0 * rho / h).ceil() as usize;
            for t in 0..=steps {
                let tt = t as f64 / steps as f64;
                let p = [z[0] + tt * (y[0] - z[0]), z[1] + tt * (y[1] - z[1])];
                let (pi, pj) = dg.spec.nearest(p);
                if dg.dist_at(pi, pj) <= r_km1 || t == steps {
                    z1 = p;
                    break;
                }
            }
            let (z1i, z1j) = dg.spec.nearest(z1);
            if !dg.is_interior(z1i, z1j) {
                sites_failed += 1;
                continue;
            }

            // Homogeneous replacements at the site; both solutions share
            // one localization build. Fast path when the right-hand side is
            // identically zero: the replacement is the field itself.
            let loc = localize(dg, y, s_k)?;
            let rep = |u: &ScalarField, is_zero: bool| -> Result<ScalarField> {
                let mut g = ScalarField::zeros(loc.spec);
                g.pull_shared(u);
                if is_zero {
                    return Ok(g);
                }
                let prob = DirichletProblem::new(&loc, *op, ScalarField::zeros(loc.spec), g)?;
                let res = solve_with_initial(&prob, &inputs.solver, Some(u))?;
                if !res.converged {
                    return Err(Error::SolverDiverged {
                        residual: res.residual_inf,
                        iterations: res.iterations,
                    });
                }
                Ok(res.u)
            };
            let v1 = rep(u1, inputs.f1_is_zero)?;
            let v2 = rep(u2, inputs.f2_is_zero)?;

            // Relative approximation error over the A_k-and-deeper slice of
            // the localization (the recurrence reads it on A_k and A_{k-1};
            // deeper nodes only stabilize the ratio).
            for (i, j) in loc.interior_nodes() {
                let d = loc.dist_at(i, j);
                if d < r_k {
                    continue;
                }
                let (li, lj) = loc.spec.lattice(i, j);
                let uv1 = u1.get_lattice(li, lj).unwrap_or(f64::NAN);
                let uv2 = u2.get_lattice(li, lj).unwrap_or(f64::NAN);
                if uv1 > 0.0 {
                    approx_err_max = approx_err_max.max((uv1 - v1.get(i, j)).abs() / uv1);
                }
                if uv2 > 0.0 {
                    approx_err_max = approx_err_max.max((uv2 - v2.get(i, j)).abs() / uv2);
                }
            }

            // Measured oscillation factor between each layer point and z1.
            let (rz1, rz2) = match (
                v1.get_lattice(dg.spec.lattice(z1i, z1j).0, dg.spec.lattice(z1i, z1j).1),
                v2.get_lattice(dg.spec.lattice(z1i, z1j).0, dg.spec.lattice(z1i, z1j).1),
            ) {
                (Some(a), Some(b)) if b > 0.0 && a > 0.0 => (a, b),
                _ => {
                    sites_failed += 1;
                    continue;
                }
            };
            let ref_ratio = rz1 / rz2;
            let mut site_used = false;
            for &(i, j) in xs {
                let (li, lj) = dg.spec.lattice(i, j);
                let (w1, w2) = match (v1.get_lattice(li, lj), v2.get_lattice(li, lj)) {
                    (Some(a), Some(b)) if b > 0.0 => (a, b),
                    _ => continue,
                };
                let factor = (w1 / w2) / ref_ratio;
                if factor.is_finite() {
                    bhp_factor = bhp_factor.max(factor);
                    let p = dg.spec.pos(i, j);
                    let sep = ((p[0] - z1[0]).powi(2) + (p[1] - z1[1]).powi(2)).sqrt();
                    osc_dist_max = osc_dist_max.max(sep);
                    site_used = true;
                }
            }
            if site_used {
                sites_ok += 1;
            } else {
                sites_failed += 1;
            }
        }

        if sites_ok == 0 {
            return Err(Error::Precondition(format!(
                "no usable replacement site at layer {k} ({sites_failed} failed)"
            )));
        }

        // Predicted recurrence factor from measured constants.
        let t_k = cst.c1 * s_k.powf(schedule.zeta) / (cst.c4 * r_k.powf(schedule.beta));
        let predicted_factor = if t_k < 1.0 {
            let a = (1.0 + t_k) / (1.0 - t_k);
            a * a * (1.0 + cst.c3 * (osc_dist_max / s_k).powf(schedule.alpha))
        } else {
            f64::INFINITY
        };
        running_bound *= predicted_factor;

        if m_k > running_bound * (1.0 + inputs.slack) {
            pass = false;
            diagnostics.push_str(&format!(
                "layer {k}: measured M_k = {m_k} exceeds predicted bound {running_bound} (slack {})\n",
                inputs.slack
            ));
        }
        if approx_err_max >= 0.5 {
            pass = false;
            diagnostics.push_str(&format!(
                "layer {k}: approximation error {approx_err_max} violates (1 - C s^z/r^b) > 1/2\n"
            ));
        }

        stats.push(LayerStats {
            k,
            r_k,
            s_k,
            m_k,
            approx_err_max,
            bhp_factor,
            predicted_factor,
            osc_dist_max,
            sites_ok,
            sites_failed,
        });
    }

    let c_star_bound = running_bound;
    let c_star_measured = stats.iter().map(|l| l.m_k).fold(m0, f64::max);
    Ok(Certificate {
        schedule: schedule.clone(),
        layers: stats,
        m0,
        c_star_bound,
        c_star_measured,
        pass,
        diagnostics,
    })
}

/// Which end-to-end experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoremKind {
    /// Fully nonlinear / Laplace on a Lipschitz graph domain.
    FlMain,
    /// p-Laplace on a Lipschitz graph domain.
    FlpMain,
    /// Laplace on a mask (NTA) domain with growth asserted from measurement.
    Nta,
}

/// Domain description for experiments.
#[derive(Debug, Clone)]
pub enum DomainSpec {
    Graph { graph: GraphFn, l: f64, r: f64 },
    /// L-shaped polygon with the reentrant corner at the origin.
    LShape,
    /// Square with a one-cell slit; the slit mouth corners sit at the origin.
    SlitSquare,
    Mask(MaskDomain),
}

impl DomainSpec {
    pub fn build(&self, h: f64) -> Result<DomainGrid> {
        match self {
            DomainSpec::Graph { graph, l, r } => {
                let dom = LipschitzGraphDomain::new(graph.clone(), *l, *r)?;
                let m = 4.0 * h;
                let y_lo = -((l * r / h).ceil() + 4.0) * h;
                let spec = GridSpec::from_box(h, [-r - m, y_lo], [r + m, r + m])?;
                build_graph_domain(&dom, spec)
            }
            DomainSpec::LShape => {
                let m = 3.0 * h;
                let spec = GridSpec::from_box(h, [-1.0 - m, -1.0 - m], [1.0 + m, 1.0 + m])?;
                let mut occ = vec![false; spec.n_nodes()];
                for (i, j) in spec.nodes() {
                    let p = spec.pos(i, j);
                    let in_square = p[0] > -1.0 && p[0] < 1.0 && p[1] > -1.0 && p[1] < 1.0;
                    let in_notch = p[0] >= 0.0 && p[1] <= 0.0;
                    if in_square && !in_notch {
                        occ[spec.idx(i, j)] = true;
                    }
                }
                build_mask_domain(&MaskDomain::new(spec, occ, 6.0)?)
            }
            DomainSpec::SlitSquare => {
                let m = 3.0 * h;
                let spec = GridSpec::from_box(h, [-1.0 - m, -m], [1.0 + m, 2.0 + m])?;
                let mut occ = vec![false; spec.n_nodes()];
                for (i, j) in spec.nodes() {
                    let p = spec.pos(i, j);
                    let in_square = p[0] > -1.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 2.0;
                    let on_slit = p[0] == 0.0 && p[1] <= 1.0;
                    if in_square && !on_slit {
                        occ[spec.idx(i, j)] = true;
                    }
                }
                build_mask_domain(&MaskDomain::new(spec, occ, 8.0)?)
            }
            DomainSpec::Mask(mask) => build_mask_domain(mask),
        }
    }
}

/// Right-hand-side description; the random variant draws one constant from
/// the seed (reused across refinement levels).
#[derive(Debug, Clone)]
pub enum RhsSpec {
    Constant(f64),
    RandomConstant { lo: f64, hi: f64 },
    /// c0 + c1 x + c2 y + c3 x^2 + c4 x y + c5 y^2, clamped to [lo, hi].
    Poly { coeffs: [f64; 6], lo: f64, hi: f64 },
}

impl RhsSpec {
    pub fn realize(&self, spec: GridSpec, rng: &mut Rng64) -> ScalarField {
        match self {
            RhsSpec::Constant(c) => ScalarField::constant(spec, *c),
            RhsSpec::RandomConstant { lo, hi } => ScalarField::constant(spec, rng.uniform(*lo, *hi)),
            RhsSpec::Poly { coeffs, lo, hi } => {
                let c = *coeffs;
                ScalarField::sample(spec, move |x, y| {
                    (c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y)
                        .clamp(*lo, *hi)
                })
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, RhsSpec::Constant(c) if *c == 0.0)
    }
}

/// Full experiment description for a theorem run at one grid level.
#[derive(Debug, Clone)]
pub struct TheoremExperiment {
    pub kind: TheoremKind,
    pub domain: DomainSpec,
    pub op: OperatorSpec,
    pub f1: RhsSpec,
    pub f2: RhsSpec,
    pub h: f64,
    pub beta_target: f64,
    pub c_star: f64,
    pub slack: f64,
    pub shrink_cap: f64,
    pub zeta_override: Option<f64>,
    pub seed: u64,
    pub sample_cap: usize,
    /// NTA anchor x0 (interior); graph experiments anchor at (0, c*).
    pub anchor: Option<[f64; 2]>,
    /// Amplitude of the positive far-field boundary data on mask domains.
    pub far_scale: f64,
    /// Solver tolerance override.
    pub tol: Option<f64>,
}

impl TheoremExperiment {
    pub fn defaults(kind: TheoremKind) -> Self {
        let (domain, op) = match kind {
            TheoremKind::FlMain => (
                DomainSpec::Graph { graph: GraphFn::Sawtooth { slope: 0.05 }, l: 0.05, r: 1.0 },
                OperatorSpec::laplace(),
            ),
            TheoremKind::FlpMain => (
                DomainSpec::Graph { graph: GraphFn::Sawtooth { slope: 0.05 }, l: 0.05, r: 1.0 },
                OperatorSpec::p_laplace(3.0, 0.0).unwrap(),
            ),
            TheoremKind::Nta => (DomainSpec::LShape, OperatorSpec::laplace()),
        };
        TheoremExperiment {
            kind,
            domain,
            op,
            f1: RhsSpec::RandomConstant { lo: -1.0, hi: 0.0 },
            f2: RhsSpec::RandomConstant { lo: -1.0, hi: 0.0 },
            h: 1.0 / 128.0,
            beta_target: 1.2,
            c_star: 0.45,
            slack: 0.5,
            shrink_cap: 0.5,
            zeta_override: None,
            seed: 7,
            sample_cap: 512,
            anchor: None,
            far_scale: 8.0,
            tol: None,
        }
    }
}

/// Builds the experiment domain and installs its boundary data: zero on
/// the Dirichlet (graph) part, positive data away from it. Mask domains
/// carry far data that vanishes inside B_1.
pub fn prepare_domain(exp: &TheoremExperiment) -> Result<DomainGrid> {
    let mut dg = exp.domain.build(exp.h)?;
    match exp.kind {
        TheoremKind::FlMain | TheoremKind::FlpMain => {
            for j in 0..dg.spec.ny {
                for i in 0..dg.spec.nx {
                    match dg.class(i, j) {
                        NodeClass::CapBoundary => {
                            let y = dg.spec.pos(i, j)[1];
                            dg.boundary_values.set(i, j, 2.2 * y.max(0.0));
                        }
                        NodeClass::GraphBoundary => dg.boundary_values.set(i, j, 0.0),
                        _ => {}
                    }
                }
            }
        }
        TheoremKind::Nta => {
            let a = exp.far_scale;
            dg.set_boundary_values(move |x, y| a * (x * x + y * y - 1.0).max(0.0));
        }
    }
    Ok(dg)
}

/// Draws both right-hand sides from the experiment seed (f1 first).
pub fn realize_rhs(exp: &TheoremExperiment, spec: GridSpec) -> (ScalarField, ScalarField) {
    let mut rng = Rng64::new(exp.seed);
    let f1 = exp.f1.realize(spec, &mut rng);
    let f2 = exp.f2.realize(spec, &mut rng);
    (f1, f2)
}

/// The operator actually solved: a zero p-Laplace regularization defaults
/// to the grid spacing.
pub fn effective_operator(exp: &TheoremExperiment) -> OperatorSpec {
    let mut op = exp.op;
    if op.kind == OperatorKind::PLaplace && op.reg_delta == 0.0 {
        op.reg_delta = exp.h;
    }
    op
}

/// Normalization anchor: the configured NTA point, or (0, c*) on graph
/// domains.
pub fn anchor_of(exp: &TheoremExperiment) -> [f64; 2] {
    exp.anchor.unwrap_or([0.0, exp.c_star])
}

/// Solves one Dirichlet problem with the stored boundary data and
/// normalizes at the anchor. By positive 1-homogeneity the normalized field
/// solves the same problem with a rescaled rhs whose range is returned
/// (p-Laplace rescales by the (p-1) power).
pub fn solve_normalized(
    dg: &DomainGrid,
    op: &OperatorSpec,
    cfg: &SolverConfig,
    f: &ScalarField,
    anchor: [f64; 2],
) -> Result<(ScalarField, (f64, f64))> {
    let (ai, aj) = dg.spec.nearest(anchor);
    if !dg.is_interior(ai, aj) {
        return Err(Error::Precondition(format!("anchor ({}, {}) is not interior", anchor[0], anchor[1])));
    }
    let prob = DirichletProblem::with_stored_boundary(dg, *op, f.clone())?;
    let res = solve_with_initial(&prob, cfg, None)?;
    if !res.converged {
        return Err(Error::SolverDiverged { residual: res.residual_inf, iterations: res.iterations });
    }
    let mut u = res.u;
    let c = u.get(ai, aj);
    if !(c > 0.0) {
        return Err(Error::Precondition("solution not positive at the anchor".into()));
    }
    u.scale(1.0 / c);
    let fscale = match op.kind {
        OperatorKind::PLaplace => c.powf(op.p - 1.0),
        _ => c,
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, j) in dg.interior_nodes() {
        let v = f.get(i, j) / fscale;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((u, (lo, hi)))
}

/// Everything a theorem run produces at one level.
#[derive(Debug, Clone)]
pub struct TheoremRun {
    pub certificate: Certificate,
    pub growth: GrowthFit,
    pub replacement: ReplacementFit,
    pub bhp: HarnackReport,
    pub h: f64,
    /// Effective (post-normalization) rhs bounds per solution.
    pub f_ranges: [(f64, f64); 2],
    pub anchor: [f64; 2],
}

/// Orchestrates one theorem experiment at one grid level: build the domain,
/// solve the pair, normalize at the anchor, measure growth / approximation /
/// oscillation constants, compute the schedule and certify.
///
/// For NTA runs the growth bound is asserted from measurement: the run
/// aborts with the designated hypothesis error when the fitted exponent
/// reaches 2 or when `prev_growth` (the same measurement on the previous,
/// coarser level) shows the fitted constant collapsing under refinement.
pub fn run_theorem_experiment(
    exp: &TheoremExperiment,
    prev_growth: Option<&GrowthFit>,
) -> Result<TheoremRun> {
    let h = exp.h;
    let dg = prepare_domain(exp)?;
    let is_mask = matches!(exp.kind, TheoremKind::Nta);
    let (f1, f2) = realize_rhs(exp, dg.spec);
    let mut cfg = SolverConfig::for_operator(exp.op.kind);
    if let Some(t) = exp.tol {
        cfg.tol = t;
    }
    let op = effective_operator(exp);
    let anchor = anchor_of(exp);

    let (u1, range1) = solve_normalized(&dg, &op, &cfg, &f1, anchor)?;
    let (u2, range2) = solve_normalized(&dg, &op, &cfg, &f2, anchor)?;
    let f_ranges = [range1, range2];

    // Growth measurement (hypothesis for the schedule).
    let window = if is_mask {
        GrowthWindow::near_origin(0.25, 1.0 / 16.0, h)
    } else {
        GrowthWindow::near_origin(0.25, 1.0 / 8.0, h)
    };
    let growth = {
        let g1 = measure_growth_lower(&u1, &dg, &window, exp.beta_target)?;
        let g2 = measure_growth_lower(&u2, &dg, &window, exp.beta_target)?;
        if g2.c_fit < g1.c_fit {
            g2
        } else {
            g1
        }
    };
    if is_mask {
        // Conditional hypothesis: abort when the measured exponent reaches 2
        // or the constant collapses under refinement.
        if growth.beta_fit >= 1.9 || growth.c_fit <= 0.0 {
            return Err(Error::GrowthHypothesisNotMet);
        }
        if let Some(prev) = prev_growth {
            if growth.c_fit < 0.8 * prev.c_fit {
                return Err(Error::GrowthHypothesisNotMet);
            }
        }
    }

    // Approximation exponent fit at the distinguished boundary point.
    let scales: Vec<f64> = [0.125, 0.0625, 0.03125].iter().cloned().filter(|s| *s >= 4.0 * h).collect();
    let replacement = fit_replacement_exponent(&u1, &dg, [0.0, 0.0], &scales, &op, &cfg)?;
    let zeta = exp.zeta_override.unwrap_or_else(|| replacement.zeta.min(2.0));
    if zeta <= exp.beta_target {
        return Err(Error::ScheduleInfeasible(format!(
            "fitted zeta = {zeta} does not exceed beta = {}",
            exp.beta_target
        )));
    }

    // Boundary Harnack constants from a homogeneous replacement pair.
    let bhp_r = 0.25f64.max(8.0 * h);
    let (bloc, b1) = homogeneous_replacement(&u1, &dg, [0.0, 0.0], bhp_r, &op, &cfg)?;
    let (_, b2) = homogeneous_replacement(&u2, &dg, [0.0, 0.0], bhp_r, &op, &cfg)?;
    let bhp = check_boundary_harnack_homogeneous(&b1, &b2, &bloc, [0.0, 0.0], bhp_r)?;
    let alpha = if bhp.c3_fit == 0.0 { 1.0 } else { bhp.alpha_fit.clamp(0.05, 1.0) };

    let schedule =
        compute_schedule_with_cap(exp.beta_target, zeta, alpha, exp.c_star, h, exp.shrink_cap)?;

    let constants = CertifyConstants {
        c1: replacement.c1,
        c3: if bhp.c3_fit == 0.0 { 0.0 } else { bhp.c3_fit },
        c4: growth.c_fit,
    };
    let mut inputs = CertifyInputs::new(anchor, constants, exp.seed, op.kind);
    inputs.solver = cfg.clone();
    inputs.slack = exp.slack;
    inputs.sample_cap = exp.sample_cap;
    inputs.f1_is_zero = exp.f1.is_zero();
    inputs.f2_is_zero = exp.f2.is_zero();
    let certificate = certify(&u1, &u2, &dg, &op, &schedule, &inputs)?;

    Ok(TheoremRun { certificate, growth, replacement, bhp, h, f_ranges, anchor })
}
