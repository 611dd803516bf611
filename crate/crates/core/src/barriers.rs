//! Explicit barrier functions and verification of their defining sign
//! conditions under the discrete operators.
//!
//! Four families: the quadratic bump `R^2/(lambda n) (1 - |x|^2/R^2)`, the
//! exponential `e^{2S} - e^{S(x_1+1)}`, the radial power `|x|^{-q}`, and the
//! annulus barrier built from it. `choose_q` picks the smallest integer
//! exponent whose exact radial operator value clears 1 on a sampled radius
//! range; `verify_sign` then checks the discrete operator value against the
//! target on a node region, up to a slack proportional to sampled third
//! derivatives times h^2.

use crate::geometry::DomainGrid;
use crate::grid::ScalarField;
use crate::operators::{apply_at, OperatorKind, OperatorSpec};
use crate::{Error, Result};

pub const DIM: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierKind {
    Quadratic,
    Exponential,
    Radial,
    Annulus,
}

/// Parameters for one barrier; only the kind-appropriate fields are read.
#[derive(Debug, Clone, Copy)]
pub struct BarrierSpec {
    pub kind: BarrierKind,
    /// Radial exponent q > 0 (radial and annulus kinds).
    pub q: f64,
    /// Exponential rate S >= 0.
    pub s_rate: f64,
    /// Inner annulus radius kappa in (0, 3/8).
    pub kappa: f64,
    /// Quadratic scale R.
    pub scale_r: f64,
    pub center: [f64; 2],
    /// Annulus inner level c.
    pub c_level: f64,
    /// Ellipticity constant entering the quadratic barrier formula.
    pub lam: f64,
}

impl BarrierSpec {
    pub fn quadratic(scale_r: f64, lam: f64, center: [f64; 2]) -> Self {
        BarrierSpec {
            kind: BarrierKind::Quadratic,
            q: 0.0,
            s_rate: 0.0,
            kappa: 0.0,
            scale_r,
            center,
            c_level: 0.0,
            lam,
        }
    }

    pub fn exponential(s_rate: f64) -> Self {
        BarrierSpec {
            kind: BarrierKind::Exponential,
            q: 0.0,
            s_rate,
            kappa: 0.0,
            scale_r: 0.0,
            center: [0.0, 0.0],
            c_level: 0.0,
            lam: 1.0,
        }
    }

    pub fn radial(q: f64, center: [f64; 2]) -> Self {
        BarrierSpec {
            kind: BarrierKind::Radial,
            q,
            s_rate: 0.0,
            kappa: 0.0,
            scale_r: 0.0,
            center,
            c_level: 0.0,
            lam: 1.0,
        }
    }

    pub fn annulus(q: f64, kappa: f64, c_level: f64, center: [f64; 2]) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 0.375) {
            return Err(Error::Precondition(format!("kappa must lie in (0, 3/8), got {kappa}")));
        }
        Ok(BarrierSpec {
            kind: BarrierKind::Annulus,
            q,
            s_rate: 0.0,
            kappa,
            scale_r: 0.0,
            center,
            c_level,
            lam: 1.0,
        })
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self.kind {
            BarrierKind::Quadratic => eval_quadratic(self, x),
            BarrierKind::Exponential => eval_exponential(self, x),
            BarrierKind::Radial => eval_radial(self, x),
            BarrierKind::Annulus => eval_annulus(self, x),
        }
    }
}

/// The exponential barrier rate `S = max(2M/lambda, 1)`.
pub fn exp_rate(op: &OperatorSpec) -> f64 {
    (2.0 * op.gradient_coeff / op.lambda_min).max(1.0)
}

/// `G(x) = R^2/(lambda n) (1 - |x - center|^2 / R^2)`.
pub fn eval_quadratic(spec: &BarrierSpec, x: [f64; 2]) -> f64 {
    let r2 = (x[0] - spec.center[0]).powi(2) + (x[1] - spec.center[1]).powi(2);
    let rr = spec.scale_r * spec.scale_r;
    rr / (spec.lam * DIM) * (1.0 - r2 / rr)
}

/// `G(x) = e^{2S} - e^{S (x_1 + 1)}`.
pub fn eval_exponential(spec: &BarrierSpec, x: [f64; 2]) -> f64 {
    (2.0 * spec.s_rate).exp() - (spec.s_rate * (x[0] + 1.0)).exp()
}

/// `phi(x) = |x - center|^{-q}`.
pub fn eval_radial(spec: &BarrierSpec, x: [f64; 2]) -> f64 {
    let r = ((x[0] - spec.center[0]).powi(2) + (x[1] - spec.center[1]).powi(2)).sqrt();
    r.powf(-spec.q)
}

/// `h(x) = c (phi(x - center) - (3/8)^{-q}) / (kappa^{-q} - (3/8)^{-q})`.
pub fn eval_annulus(spec: &BarrierSpec, x: [f64; 2]) -> f64 {
    let phi = eval_radial(spec, x);
    let outer = 0.375f64.powf(-spec.q);
    let inner = spec.kappa.powf(-spec.q);
    spec.c_level * (phi - outer) / (inner - outer)
}

/// Exact value of the operator's subsolution form on the radial barrier
/// `|x|^{-q}` at radius `r`: `P^-(D^2 phi) - M |grad phi|` for Laplace and
/// Pucci parameters (tangential eigenvalue `-q r^{-q-2}`, radial
/// `q(q+1) r^{-q-2}`), and the radial p-Laplacian for p-Laplace.
pub fn radial_operator_value(op: &OperatorSpec, q: f64, r: f64) -> f64 {
    match op.kind {
        OperatorKind::Laplace => q * q * r.powf(-q - 2.0),
        OperatorKind::Pucci => {
            let tang = -q * r.powf(-q - 2.0);
            let rad = q * (q + 1.0) * r.powf(-q - 2.0);
            let pm = op.lambda_min * rad + op.lambda_max * tang; // rad > 0 > tang
            pm - op.gradient_coeff * q * r.powf(-q - 1.0)
        }
        OperatorKind::PLaplace => {
            let p = op.p;
            q.powf(p - 1.0) * ((q + 1.0) * (p - 1.0) - (DIM - 1.0))
                * r.powf(-((q + 1.0) * (p - 1.0) + 1.0))
        }
    }
}

/// Smallest integer q in [3, 200] such that the exact radial formula for
/// the operator applied to `|x|^{-q}` clears 1 on a sample of `(r_min, 1]`.
pub fn choose_q(op: &OperatorSpec, r_min: f64) -> Result<u32> {
    let r_min = r_min.max(1e-6).min(0.5);
    let samples: Vec<f64> = (0..=64)
        .map(|k| {
            let t = k as f64 / 64.0;
            // log-spaced from r_min to 1
            (r_min.ln() * (1.0 - t)).exp()
        })
        .collect();
    for q in 3..=200u32 {
        let qf = q as f64;
        if samples.iter().all(|&r| radial_operator_value(op, qf, r) >= 1.0) {
            return Ok(q);
        }
    }
    Err(Error::NoAdmissibleQ { lo: 3, hi: 200 })
}

/// Node region for sign verification.
#[derive(Debug, Clone, Copy)]
pub enum Region {
    Ball { center: [f64; 2], r: f64 },
    Annulus { center: [f64; 2], r_in: f64, r_out: f64 },
    Box { lo: [f64; 2], hi: [f64; 2] },
}

impl Region {
    fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Region::Ball { center, r } => {
                (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) <= r * r
            }
            Region::Annulus { center, r_in, r_out } => {
                let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                d2 >= r_in * r_in && d2 <= r_out * r_out
            }
            Region::Box { lo, hi } => {
                p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1]
            }
        }
    }
}

/// Inequality target for `verify_sign`.
#[derive(Debug, Clone, Copy)]
pub enum SignTarget {
    AtMost(f64),
    AtLeast(f64),
}

#[derive(Debug, Clone)]
pub struct SignReport {
    pub pass: bool,
    /// Distance from the worst value to the raw target (positive = clear).
    pub margin: f64,
    /// Discretization slack the pass test allows.
    pub slack: f64,
    pub worst_value: f64,
    pub worst_at: [f64; 2],
    pub nodes: usize,
}

/// Samples the barrier onto the grid, applies the discrete operator at
/// every interior region node and checks the target inequality up to a
/// slack of `10 * max|third derivative| * h^2` (sampled).
pub fn verify_sign(
    spec: &BarrierSpec,
    op: &OperatorSpec,
    dg: &DomainGrid,
    region: Region,
    target: SignTarget,
) -> Result<SignReport> {
    let h = dg.spec.h;
    let nodes: Vec<(usize, usize)> = dg
        .interior_nodes()
        .filter(|&(i, j)| region.contains(dg.spec.pos(i, j)))
        .collect();
    if nodes.is_empty() {
        return Err(Error::EmptyRegion);
    }
    // Radial kinds are singular at the center; the stencil reaches 2h past
    // a region node.
    if matches!(spec.kind, BarrierKind::Radial | BarrierKind::Annulus) {
        let mut closest = f64::INFINITY;
        for &(i, j) in &nodes {
            let p = dg.spec.pos(i, j);
            let d = ((p[0] - spec.center[0]).powi(2) + (p[1] - spec.center[1]).powi(2)).sqrt();
            closest = closest.min(d);
        }
        if closest < 3.0 * h {
            return Err(Error::SingularRegion { closest });
        }
    }

    let field = ScalarField::sample(dg.spec, |x, y| spec.eval([x, y]));

    // Sampled third derivatives along the axes, for the slack constant.
    let mut max3 = 0.0f64;
    let step = h;
    let stride = (nodes.len() / 200).max(1);
    for &(i, j) in nodes.iter().step_by(stride) {
        let p = dg.spec.pos(i, j);
        for axis in 0..2 {
            let at = |t: f64| {
                let mut q = p;
                q[axis] += t;
                spec.eval(q)
            };
            let d3 = (-at(-2.0 * step) + 2.0 * at(-step) - 2.0 * at(step) + at(2.0 * step))
                / (2.0 * step * step * step);
            max3 = max3.max(d3.abs());
        }
    }
    let slack = 10.0 * max3 * h * h;

    let mut worst_value = match target {
        SignTarget::AtMost(_) => f64::NEG_INFINITY,
        SignTarget::AtLeast(_) => f64::INFINITY,
    };
    let mut worst_at = [0.0, 0.0];
    for &(i, j) in &nodes {
        let v = apply_at(op, &field, i, j)?;
        let is_worse = match target {
            SignTarget::AtMost(_) => v > worst_value,
            SignTarget::AtLeast(_) => v < worst_value,
        };
        if is_worse {
            worst_value = v;
            worst_at = dg.spec.pos(i, j);
        }
    }
    let (pass, margin) = match target {
        SignTarget::AtMost(t) => (worst_value <= t + slack, t - worst_value),
        SignTarget::AtLeast(t) => (worst_value >= t - slack, worst_value - t),
    };
    Ok(SignReport { pass, margin, slack, worst_value, worst_at, nodes: nodes.len() })
}
