//! Property tests for the operator algebra and geometry invariants.

use bhp_core::geometry::{build_graph_domain, harnack_chain, GraphFn, LipschitzGraphDomain};
use bhp_core::grid::{GridSpec, ScalarField};
use bhp_core::operators::{
    apply_at, apply_operator, pucci_minus, pucci_plus, ExtremalSign, OperatorSpec,
};
use proptest::prelude::*;

fn half_space(h: f64) -> bhp_core::geometry::DomainGrid {
    let dom = LipschitzGraphDomain::new(GraphFn::Flat, 0.0, 1.0).unwrap();
    let m = 4.0 * h;
    let spec = GridSpec::from_box(h, [-1.0 - m, -m], [1.0 + m, 1.0 + m]).unwrap();
    build_graph_domain(&dom, spec).unwrap()
}

/// Smooth random field from a small trigonometric basis.
fn smooth_field(spec: GridSpec, c: &[f64; 6]) -> ScalarField {
    let c = *c;
    ScalarField::sample(spec, move |x, y| {
        c[0] * (2.0 * x).sin() * (1.5 * y).cos()
            + c[1] * x * x
            + c[2] * y * y
            + c[3] * x * y
            + c[4] * (x + 2.0 * y).sin()
            + c[5] * y
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pucci_duality(e0 in -3.0..3.0f64, e1 in -3.0..3.0f64, dl in 0.0..2.0f64) {
        let (l, ll) = (1.0, 1.0 + dl);
        let lhs = pucci_plus(&[e0, e1], l, ll);
        let rhs = -pucci_minus(&[-e0, -e1], l, ll);
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn pucci_dominates_trace_split(e0 in -3.0..3.0f64, e1 in -3.0..3.0f64) {
        // P^- <= lambda tr <= P^+ when lambda = 1 <= Lambda
        let tr = e0 + e1;
        prop_assert!(pucci_minus(&[e0, e1], 1.0, 2.0) <= tr + 1e-12);
        prop_assert!(pucci_plus(&[e0, e1], 1.0, 2.0) >= tr - 1e-12);
    }

    #[test]
    fn homogeneity_of_laplace_and_pucci(
        c in prop::array::uniform6(-1.0..1.0f64),
        k in -3i32..6,
        frac in 0.1..2.0f64,
    ) {
        let dg = half_space(1.0 / 16.0);
        let u = smooth_field(dg.spec, &c);
        // power-of-two scaling is exact in floating point
        let g2 = (2.0f64).powi(k);
        for spec in [
            OperatorSpec::laplace(),
            OperatorSpec::pucci(1.0, 2.0, 0.7, ExtremalSign::Minus).unwrap(),
            OperatorSpec::pucci(1.0, 3.0, 0.0, ExtremalSign::Plus).unwrap(),
        ] {
            let base = apply_operator(&spec, &u, &dg).unwrap();
            let mut us = u.clone();
            us.scale(g2);
            let scaled = apply_operator(&spec, &us, &dg).unwrap();
            for (i, j) in dg.interior_nodes() {
                prop_assert_eq!(scaled.get(i, j), g2 * base.get(i, j));
            }
            // general positive factor up to roundoff
            let mut ug = u.clone();
            ug.scale(frac);
            let scaled = apply_operator(&spec, &ug, &dg).unwrap();
            for (i, j) in dg.interior_nodes().step_by(17) {
                let a = scaled.get(i, j);
                let b = frac * base.get(i, j);
                prop_assert!((a - b).abs() <= 1e-11 * (1.0 + b.abs()) / dg.spec.h);
            }
        }
    }

    #[test]
    fn plaplace_scaling_with_delta(
        c in prop::array::uniform6(-1.0..1.0f64),
        k in -2i32..4,
        p in 1.5..4.0f64,
    ) {
        // Delta_p with delta scaled along u is (p-1)-homogeneous:
        // apply(p, gamma*delta, gamma*u) = gamma^{p-1} apply(p, delta, u).
        let dg = half_space(1.0 / 16.0);
        let u = smooth_field(dg.spec, &c);
        let g2 = (2.0f64).powi(k);
        let d0 = 0.25;
        let base = apply_operator(&OperatorSpec::p_laplace(p, d0).unwrap(), &u, &dg).unwrap();
        let mut us = u.clone();
        us.scale(g2);
        let scaled =
            apply_operator(&OperatorSpec::p_laplace(p, g2 * d0).unwrap(), &us, &dg).unwrap();
        let factor = g2.powf(p - 1.0);
        for (i, j) in dg.interior_nodes().step_by(13) {
            let a = scaled.get(i, j);
            let b = factor * base.get(i, j);
            prop_assert!(
                (a - b).abs() <= 1e-9 * (1.0 + b.abs()) / dg.spec.h,
                "{} vs {}", a, b
            );
        }
    }

    #[test]
    fn structural_sandwich_for_extremal_realization(
        cu in prop::array::uniform6(-1.0..1.0f64),
        cv in prop::array::uniform6(-1.0..1.0f64),
    ) {
        // P^-(D^2(u-v)) - M|grad(u-v)| <= F(u) - F(v)
        //   <= P^+(D^2(u-v)) + M|grad(u-v)|
        // holds exactly for the discrete frame envelopes.
        let dg = half_space(1.0 / 16.0);
        let u = smooth_field(dg.spec, &cu);
        let v = smooth_field(dg.spec, &cv);
        let mut w = u.clone();
        for (a, b) in w.data.iter_mut().zip(&v.data) {
            *a -= b;
        }
        let f_op = OperatorSpec::pucci(1.0, 2.0, 0.5, ExtremalSign::Minus).unwrap();
        let minus = OperatorSpec::pucci(1.0, 2.0, 0.5, ExtremalSign::Minus).unwrap();
        let plus = OperatorSpec::pucci(1.0, 2.0, 0.5, ExtremalSign::Plus).unwrap();
        let fu = apply_operator(&f_op, &u, &dg).unwrap();
        let fv = apply_operator(&f_op, &v, &dg).unwrap();
        let lo = apply_operator(&minus, &w, &dg).unwrap();
        let hi = apply_operator(&plus, &w, &dg).unwrap();
        for (i, j) in dg.interior_nodes().step_by(7) {
            let diff = fu.get(i, j) - fv.get(i, j);
            let tol = 1e-9 * (1.0 + diff.abs());
            prop_assert!(lo.get(i, j) <= diff + tol, "lower: {} > {}", lo.get(i, j), diff);
            prop_assert!(hi.get(i, j) >= diff - tol, "upper: {} < {}", hi.get(i, j), diff);
        }
    }

    #[test]
    fn pucci_stencil_monotone_in_neighbors(
        c in prop::array::uniform6(-1.0..1.0f64),
        bump in 0.001..0.5f64,
    ) {
        // With M = 0, raising any neighbor value never lowers the residual
        // at the center (degenerate ellipticity of the monotone scheme).
        let dg = half_space(1.0 / 16.0);
        let spec = OperatorSpec::pucci(1.0, 2.0, 0.0, ExtremalSign::Minus).unwrap();
        let u = smooth_field(dg.spec, &c);
        let (ci, cj) = dg.spec.nearest([0.1, 0.4]);
        let before = apply_at(&spec, &u, ci, cj).unwrap();
        for dj in -2i64..=2 {
            for di in -2i64..=2 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ni, nj) = ((ci as i64 + di) as usize, (cj as i64 + dj) as usize);
                let mut pert = u.clone();
                pert.set(ni, nj, pert.get(ni, nj) + bump);
                let after = apply_at(&spec, &pert, ci, cj).unwrap();
                prop_assert!(after >= before - 1e-12, "raising ({di},{dj}) lowered residual");
            }
        }
    }
}

#[test]
fn chain_count_non_increasing_under_refinement() {
    // Ball count for fixed endpoints does not grow (up to +1) as h halves.
    let dom = LipschitzGraphDomain::new(GraphFn::Sawtooth { slope: 0.1 }, 0.1, 1.0).unwrap();
    let x = [-0.3, 0.15];
    let y = [0.4, 0.1];
    let mut prev = usize::MAX;
    for h in [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0] {
        let m = 4.0 * h;
        let spec = GridSpec::from_box(h, [-1.0 - m, -0.5], [1.0 + m, 1.0 + m]).unwrap();
        let dg = build_graph_domain(&dom, spec).unwrap();
        let n = harnack_chain(&dg, x, y).unwrap().len();
        assert!(n <= prev.saturating_add(1), "chain grew from {prev} to {n} at h = {h}");
        prev = n;
    }
}
