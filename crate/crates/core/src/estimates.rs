//! Empirical measurement of the inequalities the layer iteration consumes:
//! growth bounds from the boundary, interior and boundary Harnack
//! constants, gradient comparability, boundedness, and the linearized
//! p-Laplace coefficient field with its ellipticity profile.
//!
//! Every "there exists C" statement becomes a measured constant whose
//! pass/fail criterion is stability under grid refinement, not a magic
//! threshold.

use crate::geometry::{Ball, DomainGrid};
use crate::grid::{GridSpec, ScalarField};
use crate::operators::gradient_at;
use crate::util::{adaptive_simpson, linear_fit, sym_eig_2x2};
use crate::{Error, Result};

/// Spatial window for growth fits: nodes inside the ball with boundary
/// distance in `[d_min, d_max]`.
#[derive(Debug, Clone, Copy)]
pub struct GrowthWindow {
    pub center: [f64; 2],
    pub radius: f64,
    pub d_min: f64,
    pub d_max: f64,
}

impl GrowthWindow {
    /// Window centred at the origin with the resolution-floor cut `2h`.
    pub fn near_origin(radius: f64, d_max: f64, h: f64) -> Self {
        GrowthWindow { center: [0.0, 0.0], radius, d_min: 2.0 * h, d_max }
    }
}

/// Result of a growth-bound measurement.
#[derive(Debug, Clone)]
pub struct GrowthFit {
    /// min (lower) or max (upper) of u / d^beta_target over the window.
    pub c_fit: f64,
    /// Free exponent from the log-log least squares fit.
    pub beta_fit: f64,
    pub window: (f64, f64),
    /// Max log deviation from the fitted line.
    pub residual: f64,
    pub samples: usize,
}

fn growth_nodes(dg: &DomainGrid, w: &GrowthWindow) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    let mut saw_below_floor = false;
    for (i, j) in dg.interior_nodes() {
        let p = dg.spec.pos(i, j);
        let dc = ((p[0] - w.center[0]).powi(2) + (p[1] - w.center[1]).powi(2)).sqrt();
        if dc > w.radius {
            continue;
        }
        let d = dg.dist_at(i, j);
        if d < w.d_min {
            saw_below_floor = true;
            continue;
        }
        if d <= w.d_max {
            out.push((i, j));
        }
    }
    if out.is_empty() {
        if saw_below_floor {
            return Err(Error::ResolutionFloor(
                "growth window contains only nodes below the 2h distance floor".into(),
            ));
        }
        return Err(Error::EmptyRegion);
    }
    Ok(out)
}

fn growth_fit(
    u: &ScalarField,
    dg: &DomainGrid,
    w: &GrowthWindow,
    beta_target: f64,
    lower: bool,
) -> Result<GrowthFit> {
    let nodes = growth_nodes(dg, w)?;
    let mut c_fit = if lower { f64::INFINITY } else { f64::NEG_INFINITY };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(i, j) in &nodes {
        let d = dg.dist_at(i, j);
        let v = u.get(i, j);
        if lower && v < 0.0 {
            let p = dg.spec.pos(i, j);
            return Err(Error::Precondition(format!(
                "u negative at ({}, {}) inside a lower-growth window",
                p[0], p[1]
            )));
        }
        let ratio = v / d.powf(beta_target);
        c_fit = if lower { c_fit.min(ratio) } else { c_fit.max(ratio) };
        if v > 0.0 {
            xs.push(d.ln());
            ys.push(v.ln());
        }
    }
    let (beta_fit, residual) = if xs.len() >= 2 {
        let (_, slope, resid) = linear_fit(&xs, &ys);
        (slope, resid)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(GrowthFit { c_fit, beta_fit, window: (w.d_min, w.d_max), residual, samples: nodes.len() })
}

/// Lower growth bound: `c_fit = min u / d^beta` over the window.
pub fn measure_growth_lower(
    u: &ScalarField,
    dg: &DomainGrid,
    w: &GrowthWindow,
    beta_target: f64,
) -> Result<GrowthFit> {
    growth_fit(u, dg, w, beta_target, true)
}

/// Upper growth bound: `C_fit = max u / d^beta` over the window.
pub fn measure_growth_upper(
    u: &ScalarField,
    dg: &DomainGrid,
    w: &GrowthWindow,
    beta_target: f64,
) -> Result<GrowthFit> {
    growth_fit(u, dg, w, beta_target, false)
}

/// Interior/boundary Harnack measurement report.
#[derive(Debug, Clone)]
pub struct HarnackReport {
    /// max over balls of sup u / (inf u + 1).
    pub c2_fit: f64,
    /// Fitted oscillation constant of the homogeneous ratio.
    pub c3_fit: f64,
    /// Fitted Holder exponent of the ratio oscillation.
    pub alpha_fit: f64,
    pub samples: usize,
}

/// Interior Harnack: per-ball `sup u / (inf u + 1)`, maximized over balls.
/// Each `B_{2r}(x)` must sit inside the interior.
pub fn check_interior_harnack(u: &ScalarField, dg: &DomainGrid, balls: &[Ball]) -> Result<HarnackReport> {
    if balls.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut c2 = f64::NEG_INFINITY;
    let mut samples = 0;
    for (bi, b) in balls.iter().enumerate() {
        let (ci, cj) = dg.spec.nearest(b.center);
        if !dg.is_interior(ci, cj) || dg.clearance_at(ci, cj) + 1e-9 < 2.0 * b.radius {
            return Err(Error::Precondition(format!(
                "ball {bi} violates B_2r inside the interior (clearance {})",
                dg.clearance_at(ci, cj)
            )));
        }
        let mut sup = f64::NEG_INFINITY;
        let mut inf = f64::INFINITY;
        for (i, j) in dg.interior_nodes() {
            let p = dg.spec.pos(i, j);
            if (p[0] - b.center[0]).powi(2) + (p[1] - b.center[1]).powi(2) <= b.radius * b.radius {
                sup = sup.max(u.get(i, j));
                inf = inf.min(u.get(i, j));
                samples += 1;
            }
        }
        if sup.is_finite() {
            c2 = c2.max(sup / (inf + 1.0));
        }
    }
    Ok(HarnackReport { c2_fit: c2, c3_fit: f64::NAN, alpha_fit: f64::NAN, samples })
}

/// Boundary Harnack for a homogeneous pair: fits `C3` and `alpha` by
/// regressing the log ratio oscillation over dyadic scales `r/4, r/8, ...`
/// around the boundary point `a`. Both fields must be positive on the
/// sample set (they vanish on the Dirichlet boundary itself).
pub fn check_boundary_harnack_homogeneous(
    u1: &ScalarField,
    u2: &ScalarField,
    dg: &DomainGrid,
    a: [f64; 2],
    r: f64,
) -> Result<HarnackReport> {
    let h = dg.spec.h;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut samples = 0;
    let mut s = r / 4.0;
    while s >= 4.0 * h {
        let mut qmax = f64::NEG_INFINITY;
        let mut qmin = f64::INFINITY;
        for (i, j) in dg.interior_nodes() {
            let p = dg.spec.pos(i, j);
            if (p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2) > s * s {
                continue;
            }
            if dg.dist_at(i, j) < 2.0 * h {
                continue;
            }
            let (li, lj) = dg.spec.lattice(i, j);
            let (v1, v2) = match (u1.get_lattice(li, lj), u2.get_lattice(li, lj)) {
                (Some(a), Some(b)) => (a, b),
                _ => continue,
            };
            if v2 <= 0.0 {
                return Err(Error::Precondition(format!(
                    "u2 not positive at ({}, {}): {v2}",
                    p[0], p[1]
                )));
            }
            let q = v1 / v2;
            qmax = qmax.max(q);
            qmin = qmin.min(q);
            samples += 1;
        }
        if qmax.is_finite() && qmin > 0.0 {
            let osc = qmax / qmin - 1.0;
            if osc > 1e-13 {
                xs.push((s / r).ln());
                ys.push(osc.ln());
            }
        }
        s *= 0.5;
    }
    if xs.len() < 2 {
        // ratio is constant to fp precision at every scale
        return Ok(HarnackReport { c2_fit: f64::NAN, c3_fit: 0.0, alpha_fit: 0.0, samples });
    }
    let (intercept, slope, _) = linear_fit(&xs, &ys);
    Ok(HarnackReport { c2_fit: f64::NAN, c3_fit: intercept.exp(), alpha_fit: slope, samples })
}

/// Gradient comparability report: extremes of `|grad u| d / u`.
#[derive(Debug, Clone)]
pub struct GradCompReport {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub samples: usize,
    pub excluded: usize,
}

/// Measures `|grad_h u| d / u` over region nodes with `d >= 2h`.
pub fn check_gradient_comparability(
    u: &ScalarField,
    dg: &DomainGrid,
    center: [f64; 2],
    radius: f64,
) -> Result<GradCompReport> {
    let h = dg.spec.h;
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max = f64::NEG_INFINITY;
    let mut samples = 0;
    let mut excluded = 0;
    for (i, j) in dg.interior_nodes() {
        let p = dg.spec.pos(i, j);
        if (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) > radius * radius {
            continue;
        }
        let d = dg.dist_at(i, j);
        if d < 2.0 * h {
            excluded += 1;
            continue;
        }
        let v = u.get(i, j);
        if v <= 0.0 {
            return Err(Error::Precondition(format!("u not positive at ({}, {})", p[0], p[1])));
        }
        let g = gradient_at(u, i, j)?;
        let ratio = (g[0] * g[0] + g[1] * g[1]).sqrt() * d / v;
        ratio_min = ratio_min.min(ratio);
        ratio_max = ratio_max.max(ratio);
        samples += 1;
    }
    if samples == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(GradCompReport { ratio_min, ratio_max, samples, excluded })
}

/// Sup of `u` over the interior nodes of `D_{L,1/2}` (`|x| <= 1/2`).
pub fn check_boundedness(u: &ScalarField, dg: &DomainGrid) -> f64 {
    let mut sup = f64::NEG_INFINITY;
    for (i, j) in dg.interior_nodes() {
        let p = dg.spec.pos(i, j);
        if p[0] * p[0] + p[1] * p[1] <= 0.25 {
            sup = sup.max(u.get(i, j));
        }
    }
    sup
}

/// Grid-indexed 2-vectors (gradients).
#[derive(Debug, Clone)]
pub struct VectorField {
    pub spec: GridSpec,
    pub data: Vec<[f64; 2]>,
    pub valid: Vec<bool>,
}

/// Centered-difference gradient field over the interior.
pub fn gradient_field(u: &ScalarField, dg: &DomainGrid) -> Result<VectorField> {
    let mut data = vec![[0.0, 0.0]; dg.spec.n_nodes()];
    let mut valid = vec![false; dg.spec.n_nodes()];
    for (i, j) in dg.interior_nodes() {
        let k = dg.spec.idx(i, j);
        data[k] = gradient_at(u, i, j)?;
        valid[k] = true;
    }
    Ok(VectorField { spec: dg.spec, data, valid })
}

/// Symmetric 2x2 coefficient field `a_ij` with the scalar bound field `a`.
#[derive(Debug, Clone)]
pub struct LinearizedField {
    pub spec: GridSpec,
    /// (a11, a12, a22) per node.
    pub mat: Vec<[f64; 3]>,
    /// Scalar integral without the m factor.
    pub scalar: Vec<f64>,
    /// False where the node was flagged and skipped.
    pub valid: Vec<bool>,
}

const QUAD_TOL: f64 = 1e-10;

/// Linearized p-Laplace coefficients
/// `a_ij(x) = int_0^1 |z(t)|^{p-2} m_ij(t) dt`, `z(t) = t grad_u + (1-t) grad_w`,
/// `m_ij = delta_ij + (p-2) z_i z_j / |z|^2`, by adaptive quadrature split at
/// the minimum-norm parameter; nodes where both gradients vanish are flagged
/// and skipped for p < 2 (and yield zeros for p > 2).
pub fn linearized_coefficients(
    grad_u: &VectorField,
    grad_w: &VectorField,
    p: f64,
) -> Result<LinearizedField> {
    if grad_u.spec != grad_w.spec {
        return Err(Error::Precondition("gradient fields live on different grids".into()));
    }
    if !(p > 1.0) {
        return Err(Error::Precondition(format!("p must exceed 1, got {p}")));
    }
    let spec = grad_u.spec;
    let n = spec.n_nodes();
    let mut mat = vec![[0.0; 3]; n];
    let mut scalar = vec![0.0; n];
    let mut valid = vec![false; n];
    for k in 0..n {
        if !grad_u.valid[k] || !grad_w.valid[k] {
            continue;
        }
        let gu = grad_u.data[k];
        let gw = grad_w.data[k];
        let nu = (gu[0] * gu[0] + gu[1] * gu[1]).sqrt();
        let nw = (gw[0] * gw[0] + gw[1] * gw[1]).sqrt();
        let scale = nu.max(nw);
        if scale == 0.0 {
            // both gradients vanish: integrand is 0 for p > 2, undefined for
            // p < 2; flagged and skipped either way (a = 0 is degenerate).
            continue;
        }
        let z = |t: f64| -> [f64; 2] {
            [t * gu[0] + (1.0 - t) * gw[0], t * gu[1] + (1.0 - t) * gw[1]]
        };
        let d = [gu[0] - gw[0], gu[1] - gw[1]];
        let d2 = d[0] * d[0] + d[1] * d[1];
        // minimum-norm parameter of |z(t)|^2 (quadratic in t)
        let t_star = if d2 > 0.0 { (-(gw[0] * d[0] + gw[1] * d[1]) / d2).clamp(0.0, 1.0) } else { 0.5 };
        let zmin = {
            let zs = z(t_star);
            (zs[0] * zs[0] + zs[1] * zs[1]).sqrt()
        };

        if zmin <= 1e-13 * scale && p < 2.0 {
            // Colinear crossing: z(t) = (t - t*) d. The direction is fixed,
            // so m is constant and the profile integrates in closed form.
            let i1 = ((1.0 - t_star).powf(p - 1.0) + t_star.powf(p - 1.0)) / (p - 1.0);
            let w = d2.sqrt().powf(p - 2.0) * i1;
            let e = [d[0] / d2.sqrt(), d[1] / d2.sqrt()];
            mat[k] = [
                w * (1.0 + (p - 2.0) * e[0] * e[0]),
                w * (p - 2.0) * e[0] * e[1],
                w * (1.0 + (p - 2.0) * e[1] * e[1]),
            ];
            scalar[k] = w;
            valid[k] = true;
            continue;
        }

        let integrand = |t: f64, which: usize| -> f64 {
            let zt = z(t);
            let n2 = zt[0] * zt[0] + zt[1] * zt[1];
            let w = n2.sqrt().powf(p - 2.0);
            match which {
                0 => w * (1.0 + (p - 2.0) * zt[0] * zt[0] / n2),
                1 => w * (p - 2.0) * zt[0] * zt[1] / n2,
                2 => w * (1.0 + (p - 2.0) * zt[1] * zt[1] / n2),
                _ => w,
            }
        };
        let pos = |k: usize| {
            let (i, j) = (k % spec.nx, k / spec.nx);
            spec.pos(i, j)
        };
        let mut vals = [0.0f64; 4];
        for which in 0..4 {
            let f = |t: f64| integrand(t, which);
            let split = t_star > 1e-9 && t_star < 1.0 - 1e-9;
            let tol = QUAD_TOL * scale.powf(p - 2.0).max(1e-10);
            let v = if split {
                let a = adaptive_simpson(&f, 0.0, t_star, 0.5 * tol);
                let b = adaptive_simpson(&f, t_star, 1.0, 0.5 * tol);
                match (a, b) {
                    (Some(a), Some(b)) => Some(a + b),
                    _ => None,
                }
            } else {
                adaptive_simpson(&f, 0.0, 1.0, tol)
            };
            match v {
                Some(v) => vals[which] = v,
                None => {
                    let p = pos(k);
                    return Err(Error::QuadratureFailure { x: p[0], y: p[1] });
                }
            }
        }
        mat[k] = [vals[0], vals[1], vals[2]];
        scalar[k] = vals[3];
        valid[k] = true;
    }
    Ok(LinearizedField { spec, mat, scalar, valid })
}

/// Ellipticity profile of a linearized coefficient field against `d^alpha`.
#[derive(Debug, Clone)]
pub struct EllipticityReport {
    /// min over nodes of (smallest eigenvalue) / d^alpha.
    pub min_lower: f64,
    /// max over nodes of (largest eigenvalue) * d^alpha.
    pub max_upper: f64,
    pub samples: usize,
}

/// Reports the degenerate-ellipticity profile `c d^alpha <= a <= C d^-alpha`
/// over interior nodes with `d >= 2h`.
pub fn check_linearized_ellipticity(
    field: &LinearizedField,
    dg: &DomainGrid,
    alpha: f64,
) -> EllipticityReport {
    let h = dg.spec.h;
    let mut min_lower = f64::INFINITY;
    let mut max_upper = f64::NEG_INFINITY;
    let mut samples = 0;
    for (i, j) in dg.interior_nodes() {
        let k = dg.spec.idx(i, j);
        if !field.valid[k] {
            continue;
        }
        let d = dg.dist_at(i, j);
        if d < 2.0 * h {
            continue;
        }
        let [a11, a12, a22] = field.mat[k];
        let (lo, hi) = sym_eig_2x2(a11, a12, a22);
        min_lower = min_lower.min(lo / d.powf(alpha));
        max_upper = max_upper.max(hi * d.powf(alpha));
        samples += 1;
    }
    EllipticityReport { min_lower, max_upper, samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_graph_domain, GraphFn, LipschitzGraphDomain};
    use crate::util::Rng64;

    fn half_space(h: f64) -> DomainGrid {
        let dom = LipschitzGraphDomain::new(GraphFn::Flat, 0.0, 1.0).unwrap();
        let m = 4.0 * h;
        let spec = GridSpec::from_box(h, [-1.0 - m, -m], [1.0 + m, 1.0 + m]).unwrap();
        build_graph_domain(&dom, spec).unwrap()
    }

    #[test]
    fn growth_lower_on_linear_field() {
        let h = 1.0 / 64.0;
        let dg = half_space(h);
        let u = ScalarField::sample(dg.spec, |_, y| y);
        let w = GrowthWindow::near_origin(0.5, 0.25, h);
        let fit = measure_growth_lower(&u, &dg, &w, 1.0).unwrap();
        assert!((fit.c_fit - 1.0).abs() < 1e-9, "c_fit {}", fit.c_fit);
        assert!((fit.beta_fit - 1.0).abs() < 1e-6, "beta_fit {}", fit.beta_fit);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn growth_lower_on_d_squared() {
        let h = 1.0 / 64.0;
        let dg = half_space(h);
        let d = dg.dist.clone();
        let u = ScalarField { spec: d.spec, data: d.data.iter().map(|v| v * v).collect() };
        let w = GrowthWindow::near_origin(0.5, 0.25, h);
        let fit = measure_growth_lower(&u, &dg, &w, 2.0).unwrap();
        assert!((fit.c_fit - 1.0).abs() < 1e-9);
        assert!((fit.beta_fit - 2.0).abs() < 1e-6);
    }

    #[test]
    fn growth_upper_examples() {
        let h = 1.0 / 64.0;
        let dg = half_space(h);
        let u = ScalarField::sample(dg.spec, |_, y| y);
        let w = GrowthWindow::near_origin(0.9, 1.0, h);
        let fit = measure_growth_upper(&u, &dg, &w, 0.9).unwrap();
        assert!(fit.c_fit <= 1.0 + 1e-9, "C_fit {}", fit.c_fit);
        let d = dg.dist.clone();
        let u = ScalarField { spec: d.spec, data: d.data.iter().map(|v| v.sqrt()).collect() };
        let fit = measure_growth_upper(&u, &dg, &w, 0.5).unwrap();
        assert!((fit.c_fit - 1.0).abs() < 1e-9);
    }

    #[test]
    fn growth_window_resolution_floor() {
        let h = 1.0 / 64.0;
        let dg = half_space(h);
        let u = ScalarField::sample(dg.spec, |_, y| y);
        let w = GrowthWindow { center: [0.0, 0.0], radius: 0.5, d_min: 2.0 * h, d_max: 1.5 * h };
        assert!(matches!(
            measure_growth_lower(&u, &dg, &w, 1.0),
            Err(Error::ResolutionFloor(_))
        ));
    }

    #[test]
    fn interior_harnack_exact_examples() {
        let h = 1.0 / 64.0;
        let dg = half_space(h);
        let five = ScalarField::constant(dg.spec, 5.0);
        let balls = [Ball { center: [0.0, 0.5], radius: 0.125 }];
        let rep = check_interior_harnack(&five, &dg, &balls).unwrap();
        assert!((rep.c2_fit - 5.0 / 6.0).abs() < 1e-12);
        let linear = ScalarField::sample(dg.spec, |_, y| y);
        let rep = check_interior_harnack(&linear, &dg, &balls).unwrap();
        assert!((rep.c2_fit - (5.0 / 8.0) / (3.0 / 8.0 + 1.0)).abs() < 1e-9, "{}", rep.c2_fit);
        assert!(check_interior_harnack(&five, &dg, &[]).is_err());
        // B_2r not inside the interior
        let bad = [Ball { center: [0.0, 0.1], radius: 0.125 }];
        assert!(check_interior_harnack(&five, &dg, &bad).is_err());
    }

    #[test]
    fn boundary_harnack_identical_fields_give_zero_c3() {
        let h = 1.0 / 64.0;
        let dg = half_space(h);
        let u = ScalarField::sample(dg.spec, |_, y| y);
        let rep = check_boundary_harnack_homogeneous(&u, &u, &dg, [0.0, 0.0], 0.5).unwrap();
        assert_eq!(rep.c3_fit, 0.0);
        assert_eq!(rep.alpha_fit, 0.0);
    }

    #[test]
    fn boundary_harnack_smooth_pair_fits_alpha_near_one() {
        let h = 1.0 / 128.0;
        let dg = half_space(h);
        let u1 = ScalarField::sample(dg.spec, |_, y| y);
        let u2 = ScalarField::sample(dg.spec, |x, y| y + x * y / 10.0);
        // analytic ratio oracle: u1/u2 = 1 / (1 + x/10), oscillation ~ s/5
        let rep = check_boundary_harnack_homogeneous(&u1, &u2, &dg, [0.0, 0.0], 0.5).unwrap();
        assert!((rep.alpha_fit - 1.0).abs() < 0.2, "alpha {}", rep.alpha_fit);
        assert!(rep.c3_fit > 0.05 && rep.c3_fit < 1.0, "c3 {}", rep.c3_fit);
    }

    #[test]
    fn gradient_comparability_examples() {
        let h = 1.0 / 64.0;
        let dg = half_space(h);
        let u = ScalarField::sample(dg.spec, |_, y| y);
        let rep = check_gradient_comparability(&u, &dg, [0.0, 0.25], 0.2).unwrap();
        assert!((rep.ratio_min - 1.0).abs() < 1e-9 && (rep.ratio_max - 1.0).abs() < 1e-9);
        let u = ScalarField::sample(dg.spec, |_, y| y + y * y / 10.0);
        let rep = check_gradient_comparability(&u, &dg, [0.0, 0.25], 0.24).unwrap();
        // analytic: ratio = (1 + y/5) / (1 + y/10) in [1, 1.1] for y <= 1/2
        assert!(rep.ratio_min >= 1.0 - 1e-9, "{}", rep.ratio_min);
        assert!(rep.ratio_max <= 1.2 + 1e-9, "{}", rep.ratio_max);
    }

    #[test]
    fn boundedness_of_linear_field() {
        let h = 1.0 / 64.0;
        let dg = half_space(h);
        let u = ScalarField::sample(dg.spec, |_, y| 2.0 * y);
        let sup = check_boundedness(&u, &dg);
        assert!(sup <= 2.0 * 0.5 + 1e-12 && sup >= 2.0 * 0.5 - 2.0 * h, "sup {sup}");
    }

    fn constant_gradient_fields(spec: GridSpec, gu: [f64; 2], gw: [f64; 2]) -> (VectorField, VectorField) {
        let n = spec.n_nodes();
        (
            VectorField { spec, data: vec![gu; n], valid: vec![true; n] },
            VectorField { spec, data: vec![gw; n], valid: vec![true; n] },
        )
    }

    #[test]
    fn linearized_coefficients_constant_cases() {
        let h = 1.0 / 16.0;
        let dg = half_space(h);
        let (gu, gw) = constant_gradient_fields(dg.spec, [1.0, 0.0], [1.0, 0.0]);
        let f = linearized_coefficients(&gu, &gw, 2.0).unwrap();
        let k = dg.spec.idx(4, 4);
        assert!((f.mat[k][0] - 1.0).abs() < 1e-9);
        assert!(f.mat[k][1].abs() < 1e-12);
        assert!((f.mat[k][2] - 1.0).abs() < 1e-9);
        // p = 4: weight 1, m = I + 2 e1 e1^T = diag(3, 1)
        let f = linearized_coefficients(&gu, &gw, 4.0).unwrap();
        assert!((f.mat[k][0] - 3.0).abs() < 1e-8, "{}", f.mat[k][0]);
        assert!((f.mat[k][2] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn linearized_coefficients_fundamental_identity() {
        // a_ij (u_j - w_j) = F_i(grad u) - F_i(grad w), F(z) = |z|^{p-2} z
        let h = 1.0 / 16.0;
        let dg = half_space(h);
        let mut rng = Rng64::new(21);
        for &p in &[1.5, 2.5, 3.0] {
            for _ in 0..20 {
                let gu = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
                let gw = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
                let (fu, fw) = constant_gradient_fields(dg.spec, gu, gw);
                let f = linearized_coefficients(&fu, &fw, p).unwrap();
                let k = dg.spec.idx(3, 3);
                if !f.valid[k] {
                    continue;
                }
                let big_f = |z: [f64; 2]| -> [f64; 2] {
                    let n = (z[0] * z[0] + z[1] * z[1]).sqrt();
                    if n == 0.0 {
                        [0.0, 0.0]
                    } else {
                        [n.powf(p - 2.0) * z[0], n.powf(p - 2.0) * z[1]]
                    }
                };
                let lhs = [
                    f.mat[k][0] * (gu[0] - gw[0]) + f.mat[k][1] * (gu[1] - gw[1]),
                    f.mat[k][1] * (gu[0] - gw[0]) + f.mat[k][2] * (gu[1] - gw[1]),
                ];
                let rhs = [big_f(gu)[0] - big_f(gw)[0], big_f(gu)[1] - big_f(gw)[1]];
                let scale = 1.0 + rhs[0].abs() + rhs[1].abs();
                assert!(
                    (lhs[0] - rhs[0]).abs() < 1e-6 * scale && (lhs[1] - rhs[1]).abs() < 1e-6 * scale,
                    "p = {p}: {lhs:?} vs {rhs:?}"
                );
            }
        }
    }

    #[test]
    fn linearized_coefficients_colinear_crossing_closed_form() {
        let h = 1.0 / 16.0;
        let dg = half_space(h);
        // gradients exactly opposite: z crosses zero at t* = 1/2
        let (fu, fw) = constant_gradient_fields(dg.spec, [1.0, 0.5], [-1.0, -0.5]);
        let p = 1.5;
        let f = linearized_coefficients(&fu, &fw, p).unwrap();
        let k = dg.spec.idx(3, 3);
        assert!(f.valid[k]);
        // identity still holds through the closed form
        let gu = [1.0, 0.5];
        let gw = [-1.0, -0.5];
        let nrm = |z: [f64; 2]| (z[0] * z[0] + z[1] * z[1]).sqrt();
        let fz = |z: [f64; 2]| {
            let n = nrm(z);
            [n.powf(p - 2.0) * z[0], n.powf(p - 2.0) * z[1]]
        };
        let lhs = [
            f.mat[k][0] * (gu[0] - gw[0]) + f.mat[k][1] * (gu[1] - gw[1]),
            f.mat[k][1] * (gu[0] - gw[0]) + f.mat[k][2] * (gu[1] - gw[1]),
        ];
        let rhs = [fz(gu)[0] - fz(gw)[0], fz(gu)[1] - fz(gw)[1]];
        assert!((lhs[0] - rhs[0]).abs() < 1e-8 && (lhs[1] - rhs[1]).abs() < 1e-8, "{lhs:?} vs {rhs:?}");
    }

    #[test]
    fn linearized_eigenvalue_sandwich_and_spd() {
        let h = 1.0 / 16.0;
        let dg = half_space(h);
        let mut rng = Rng64::new(5);
        for &p in &[1.5, 3.0] {
            let lam = (1.0f64).min(p - 1.0) / (1.0f64).max(p - 1.0);
            for _ in 0..30 {
                let gu = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
                let gw = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
                let (fu, fw) = constant_gradient_fields(dg.spec, gu, gw);
                let f = linearized_coefficients(&fu, &fw, p).unwrap();
                let k = dg.spec.idx(3, 3);
                if !f.valid[k] {
                    continue;
                }
                let (lo, hi) = sym_eig_2x2(f.mat[k][0], f.mat[k][1], f.mat[k][2]);
                let a = f.scalar[k];
                assert!(lo > 0.0, "not SPD: {lo}");
                assert!(lo >= lam * a - 1e-8 * a, "p={p}: {lo} < {}", lam * a);
                assert!(hi <= a / lam + 1e-8 * a, "p={p}: {hi} > {}", a / lam);
            }
        }
    }

    #[test]
    fn ellipticity_profile_trivial_at_p2() {
        let h = 1.0 / 32.0;
        let dg = half_space(h);
        let (fu, fw) = constant_gradient_fields(dg.spec, [1.0, 0.0], [0.0, 1.0]);
        let f = linearized_coefficients(&fu, &fw, 2.0).unwrap();
        let rep = check_linearized_ellipticity(&f, &dg, 0.3);
        // a = I everywhere: extremes are exactly the d^{+-alpha} envelope
        assert!(rep.min_lower > 0.0 && rep.max_upper.is_finite());
        assert!(rep.samples > 100);
    }
}
