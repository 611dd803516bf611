//! Discrete elliptic operators: the 5-point Laplacian, wide-stencil Pucci
//! extremal operators, and the staggered-flux p-Laplacian.
//!
//! The Pucci operators are discretized as Bellman envelopes over orthogonal
//! direction frames: each frame contributes a pair of directional second
//! differences weighted by lambda or Lambda (whichever is extremal for the
//! sign of the difference), and the frame min/max realizes P^-/P^+. The
//! scheme is monotone for M = 0; the M |grad u| term uses centered
//! differences, which is documented as a knob for the small-M experiments.

use crate::geometry::{DomainGrid, NodeClass};
use crate::grid::ScalarField;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Laplace,
    Pucci,
    PLaplace,
}

/// Which extremal operator realizes the fully nonlinear F.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremalSign {
    /// F = P^-_{Lambda,lambda} - M |grad u|
    Minus,
    /// F = P^+_{Lambda,lambda} + M |grad u|
    Plus,
}

/// Elliptic operator selection and parameters.
#[derive(Debug, Clone, Copy)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    /// Lower ellipticity constant lambda.
    pub lambda_min: f64,
    /// Upper ellipticity constant Lambda.
    pub lambda_max: f64,
    /// Gradient-term coefficient M.
    pub gradient_coeff: f64,
    /// p-Laplace exponent.
    pub p: f64,
    pub pucci_sign: ExtremalSign,
    /// p-Laplace gradient regularization delta.
    pub reg_delta: f64,
    /// Use the 16-direction wide stencil instead of the default 8.
    pub dirs16: bool,
}

impl OperatorSpec {
    pub fn laplace() -> Self {
        OperatorSpec {
            kind: OperatorKind::Laplace,
            lambda_min: 1.0,
            lambda_max: 1.0,
            gradient_coeff: 0.0,
            p: 2.0,
            pucci_sign: ExtremalSign::Minus,
            reg_delta: 0.0,
            dirs16: false,
        }
    }

    pub fn pucci(lambda_min: f64, lambda_max: f64, gradient_coeff: f64, sign: ExtremalSign) -> Result<Self> {
        if !(lambda_min > 0.0) || lambda_max < lambda_min {
            return Err(Error::Precondition(format!(
                "need 0 < lambda <= Lambda, got {lambda_min}, {lambda_max}"
            )));
        }
        if gradient_coeff < 0.0 {
            return Err(Error::Precondition(format!("M must be nonnegative, got {gradient_coeff}")));
        }
        Ok(OperatorSpec {
            kind: OperatorKind::Pucci,
            lambda_min,
            lambda_max,
            gradient_coeff,
            p: 2.0,
            pucci_sign: sign,
            reg_delta: 0.0,
            dirs16: false,
        })
    }

    pub fn p_laplace(p: f64, reg_delta: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::Precondition(format!("p must exceed 1, got {p}")));
        }
        if reg_delta < 0.0 {
            return Err(Error::Precondition(format!("delta must be nonnegative, got {reg_delta}")));
        }
        Ok(OperatorSpec {
            kind: OperatorKind::PLaplace,
            lambda_min: 1.0,
            lambda_max: 1.0,
            gradient_coeff: 0.0,
            p,
            pucci_sign: ExtremalSign::Minus,
            reg_delta,
            dirs16: false,
        })
    }

    /// Laplace reduction: a Pucci spec with lambda = Lambda and M = 0
    /// evaluates the plain trace, and a p-Laplace spec with p = 2 has unit
    /// flux coefficients.
    pub fn reduces_to_laplace(&self) -> bool {
        match self.kind {
            OperatorKind::Laplace => true,
            OperatorKind::Pucci => self.lambda_min == self.lambda_max && self.gradient_coeff == 0.0,
            OperatorKind::PLaplace => self.p == 2.0,
        }
    }

    pub fn stencil(&self) -> StencilSet {
        if self.dirs16 {
            StencilSet::dirs16()
        } else {
            StencilSet::dirs8()
        }
    }
}

/// Integer direction set for wide-stencil second differences. Directions
/// come in +- pairs; `frames` lists indices of orthogonal line pairs.
#[derive(Debug, Clone)]
pub struct StencilSet {
    /// One representative per +- line pair.
    pub directions: Vec<[i64; 2]>,
    /// 1 / |v|^2 scaling for the directional second difference.
    pub weights: Vec<f64>,
    pub frames: Vec<(usize, usize)>,
}

impl StencilSet {
    /// 8 signed directions: axes and diagonals (2 orthogonal frames).
    pub fn dirs8() -> Self {
        let directions = vec![[1, 0], [0, 1], [1, 1], [1, -1]];
        let weights = directions.iter().map(|v: &[i64; 2]| 1.0 / ((v[0] * v[0] + v[1] * v[1]) as f64)).collect();
        StencilSet { directions, weights, frames: vec![(0, 1), (2, 3)] }
    }

    /// 16 signed directions: adds the knight moves (4 orthogonal frames).
    pub fn dirs16() -> Self {
        let directions = vec![[1, 0], [0, 1], [1, 1], [1, -1], [2, 1], [1, -2], [1, 2], [2, -1]];
        let weights = directions.iter().map(|v: &[i64; 2]| 1.0 / ((v[0] * v[0] + v[1] * v[1]) as f64)).collect();
        StencilSet { directions, weights, frames: vec![(0, 1), (2, 3), (4, 5), (6, 7)] }
    }
}

/// P^-_{Lambda,lambda}: lambda * (positive eigenvalues) + Lambda * (negative).
pub fn pucci_minus(eigs: &[f64], lambda_min: f64, lambda_max: f64) -> f64 {
    debug_assert!(lambda_min <= lambda_max);
    eigs.iter().map(|&e| if e > 0.0 { lambda_min * e } else { lambda_max * e }).sum()
}

/// P^+_{Lambda,lambda}: Lambda * (positive eigenvalues) + lambda * (negative).
pub fn pucci_plus(eigs: &[f64], lambda_min: f64, lambda_max: f64) -> f64 {
    debug_assert!(lambda_min <= lambda_max);
    eigs.iter().map(|&e| if e > 0.0 { lambda_max * e } else { lambda_min * e }).sum()
}

#[inline]
fn extremal_dir(d: f64, lambda_min: f64, lambda_max: f64, minus: bool) -> f64 {
    if minus {
        if d >= 0.0 {
            lambda_min * d
        } else {
            lambda_max * d
        }
    } else if d >= 0.0 {
        lambda_max * d
    } else {
        lambda_min * d
    }
}

fn need(u: &ScalarField, i: i64, j: i64) -> Result<f64> {
    let v = if i >= 0 && j >= 0 && (i as usize) < u.spec.nx && (j as usize) < u.spec.ny {
        u.get(i as usize, j as usize)
    } else {
        f64::NAN
    };
    if v.is_nan() {
        let x = (u.spec.i0 + i) as f64 * u.spec.h;
        let y = (u.spec.j0 + j) as f64 * u.spec.h;
        return Err(Error::MissingNeighbor { x, y });
    }
    Ok(v)
}

/// Centered gradient at an interior node.
pub fn gradient_at(u: &ScalarField, i: usize, j: usize) -> Result<[f64; 2]> {
    let h = u.spec.h;
    let (i, j) = (i as i64, j as i64);
    let gx = (need(u, i + 1, j)? - need(u, i - 1, j)?) / (2.0 * h);
    let gy = (need(u, i, j + 1)? - need(u, i, j - 1)?) / (2.0 * h);
    Ok([gx, gy])
}

/// Residual of the operator at one interior node.
pub fn apply_at(spec: &OperatorSpec, u: &ScalarField, i: usize, j: usize) -> Result<f64> {
    let h = u.spec.h;
    let h2 = h * h;
    let (ii, jj) = (i as i64, j as i64);
    let uc = need(u, ii, jj)?;
    match spec.kind {
        OperatorKind::Laplace => {
            let s = need(u, ii + 1, jj)? + need(u, ii - 1, jj)? + need(u, ii, jj + 1)?
                + need(u, ii, jj - 1)?;
            Ok((s - 4.0 * uc) / h2)
        }
        OperatorKind::Pucci => {
            let grad_term = if spec.gradient_coeff > 0.0 {
                let g = gradient_at(u, i, j)?;
                spec.gradient_coeff * (g[0] * g[0] + g[1] * g[1]).sqrt()
            } else {
                0.0
            };
            // Degenerate control set: with lambda = Lambda every admissible
            // coefficient matrix is lambda * I, so the envelope is the plain
            // trace in the axis frame.
            if spec.lambda_min == spec.lambda_max {
                let s = need(u, ii + 1, jj)? + need(u, ii - 1, jj)? + need(u, ii, jj + 1)?
                    + need(u, ii, jj - 1)?;
                let tr = spec.lambda_min * (s - 4.0 * uc) / h2;
                return Ok(match spec.pucci_sign {
                    ExtremalSign::Minus => tr - grad_term,
                    ExtremalSign::Plus => tr + grad_term,
                });
            }
            let stencil = spec.stencil();
            let minus = spec.pucci_sign == ExtremalSign::Minus;
            let mut extremal = if minus { f64::INFINITY } else { f64::NEG_INFINITY };
            for &(a, b) in &stencil.frames {
                let mut frame_val = 0.0;
                for &line in &[a, b] {
                    let v = stencil.directions[line];
                    let d2 = (need(u, ii + v[0], jj + v[1])? + need(u, ii - v[0], jj - v[1])?
                        - 2.0 * uc)
                        * stencil.weights[line]
                        / h2;
                    frame_val += extremal_dir(d2, spec.lambda_min, spec.lambda_max, minus);
                }
                extremal = if minus { extremal.min(frame_val) } else { extremal.max(frame_val) };
            }
            Ok(if minus { extremal - grad_term } else { extremal + grad_term })
        }
        OperatorKind::PLaplace => {
            let p = spec.p;
            let d2 = spec.reg_delta * spec.reg_delta;
            let e = need(u, ii + 1, jj)?;
            let w = need(u, ii - 1, jj)?;
            let n = need(u, ii, jj + 1)?;
            let s = need(u, ii, jj - 1)?;
            let ne = need(u, ii + 1, jj + 1)?;
            let nw = need(u, ii - 1, jj + 1)?;
            let se = need(u, ii + 1, jj - 1)?;
            let sw = need(u, ii - 1, jj - 1)?;
            // Face coefficient |grad u|_delta^{p-2} on the staggered face
            // between (i, j) and its axis neighbour.
            let coeff = |g2: f64| -> f64 {
                if p == 2.0 {
                    1.0
                } else {
                    (g2 + d2).powf(0.5 * (p - 2.0))
                }
            };
            // east face
            let gx = (e - uc) / h;
            let gy = (n - s + ne - se) / (4.0 * h);
            let flux_e = coeff(gx * gx + gy * gy) * gx;
            // west face
            let gx = (uc - w) / h;
            let gy = (n - s + nw - sw) / (4.0 * h);
            let flux_w = coeff(gx * gx + gy * gy) * gx;
            // north face
            let gy = (n - uc) / h;
            let gx = (e - w + ne - nw) / (4.0 * h);
            let flux_n = coeff(gx * gx + gy * gy) * gy;
            // south face
            let gy = (uc - s) / h;
            let gx = (e - w + se - sw) / (4.0 * h);
            let flux_s = coeff(gx * gx + gy * gy) * gy;
            Ok((flux_e - flux_w + flux_n - flux_s) / h)
        }
    }
}

/// Residual field `F(D^2 u, grad u)` over the interior nodes of `dg`;
/// zero at non-interior nodes.
pub fn apply_operator(spec: &OperatorSpec, u: &ScalarField, dg: &DomainGrid) -> Result<ScalarField> {
    if u.spec != dg.spec {
        return Err(Error::Precondition("field grid does not match domain grid".into()));
    }
    let mut out = ScalarField::zeros(u.spec);
    for j in 0..dg.spec.ny {
        for i in 0..dg.spec.nx {
            if dg.class(i, j) == NodeClass::Interior {
                out.set(i, j, apply_at(spec, u, i, j)?);
            }
        }
    }
    Ok(out)
}
