//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line (run with `cargo test -p bhp-lab --test acceptance -- --nocapture`
//! to see them). Tolerances and budgets are pinned in code.

use bhp_core::barriers::{choose_q, exp_rate, verify_sign, BarrierSpec, Region, SignTarget};
use bhp_core::certify::{
    certify, compute_schedule_with_cap, fit_replacement_exponent, CertifyConstants, CertifyInputs,
};
use bhp_core::estimates::{measure_growth_lower, GrowthWindow};
use bhp_core::geometry::{
    build_graph_domain, build_mask_domain, DomainGrid, GraphFn, LipschitzGraphDomain, MaskDomain,
};
use bhp_core::grid::{GridSpec, ScalarField};
use bhp_core::operators::{ExtremalSign, OperatorKind, OperatorSpec};
use bhp_core::solver::{slab_exact, solve, DirichletProblem, SolverConfig};
use bhp_core::util::Rng64;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

fn half_space(h: f64) -> DomainGrid {
    let dom = LipschitzGraphDomain::new(GraphFn::Flat, 0.0, 1.0).unwrap();
    let m = 4.0 * h;
    let spec = GridSpec::from_box(h, [-1.0 - m, -m], [1.0 + m, 1.0 + m]).unwrap();
    build_graph_domain(&dom, spec).unwrap()
}

fn report_line(criterion: &str, pass: bool, detail: String, t0: Instant) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {verdict} — {detail} ({:.1}s)", t0.elapsed().as_secs_f64());
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bhp-lab")
}

fn out_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bhp-acceptance-{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

// 1. Exactness: Laplace half-space with g = x_n returns u = x_n to 1e-12.
#[test]
fn criterion_01_exactness() {
    let t0 = Instant::now();
    let h = 1.0 / 64.0;
    let dg = half_space(h);
    let g = ScalarField::sample(dg.spec, |_, y| y);
    let f = ScalarField::zeros(dg.spec);
    let prob = DirichletProblem::new(&dg, OperatorSpec::laplace(), f, g).unwrap();
    let mut cfg = SolverConfig::for_operator(OperatorKind::Laplace);
    cfg.tol = 1e-13;
    let res = solve(&prob, &cfg).unwrap();
    let mut sup = 0.0f64;
    for (i, j) in dg.interior_nodes() {
        sup = sup.max((res.u.get(i, j) - dg.spec.pos(i, j)[1]).abs());
    }
    let pass = sup <= 1e-12 && t0.elapsed().as_secs_f64() < 1.0;
    report_line("1 (exactness)", pass, format!("sup_error = {sup:.3e}"), t0);
    assert!(sup <= 1e-12, "sup error {sup}");
    assert!(t0.elapsed().as_secs_f64() < 1.0, "budget exceeded");
}

fn slab_error(p: f64, h: f64) -> f64 {
    let m = 3.0 * h;
    let height = 8.0 * h;
    let spec = GridSpec::from_box(h, [-m, -m], [1.0 + m, height + m]).unwrap();
    let mut occupied = vec![false; spec.n_nodes()];
    for (i, j) in spec.nodes() {
        let pnt = spec.pos(i, j);
        if pnt[0] > 0.0 && pnt[0] < 1.0 && pnt[1] > 0.0 && pnt[1] < height {
            occupied[spec.idx(i, j)] = true;
        }
    }
    let mut dg = build_mask_domain(&MaskDomain::new(spec, occupied, 4.0).unwrap()).unwrap();
    dg.set_boundary_values(|x, _| slab_exact(p, x.clamp(0.0, 1.0)));
    let f = ScalarField::constant(dg.spec, -1.0);
    let op = OperatorSpec::p_laplace(p, if p == 2.0 { 0.0 } else { h }).unwrap();
    let prob = DirichletProblem::with_stored_boundary(&dg, op, f).unwrap();
    let cfg = SolverConfig::for_operator(OperatorKind::PLaplace);
    let res = solve(&prob, &cfg).unwrap();
    assert!(res.converged, "slab solve p = {p} h = {h}: residual {}", res.residual_inf);
    let mut err = 0.0f64;
    for (i, j) in dg.interior_nodes() {
        let x = dg.spec.pos(i, j)[0];
        err = err.max((res.u.get(i, j) - slab_exact(p, x)).abs());
    }
    err
}

// 2. Oracle equivalence on the 1-D p-Laplace slab.
#[test]
fn criterion_02_slab_oracle() {
    let t0 = Instant::now();
    let mut detail = String::new();
    let mut pass = true;
    for &p in &[1.5, 2.0, 3.0, 4.0] {
        let tp = Instant::now();
        for &h in &[1.0 / 64.0, 1.0 / 128.0] {
            let err = slab_error(p, h);
            if err > 5.0 * h {
                pass = false;
            }
            detail.push_str(&format!("p={p} h=1/{:.0}: {err:.2e}; ", 1.0 / h));
            assert!(err <= 5.0 * h, "p = {p}, h = {h}: sup error {err}");
        }
        if p == 2.0 {
            // solved max equals 1/8 at h = 1/64
            let h = 1.0 / 64.0;
            let m = 3.0 * h;
            let spec = GridSpec::from_box(h, [-m, -m], [1.0 + m, 8.0 * h + m]).unwrap();
            let mut occupied = vec![false; spec.n_nodes()];
            for (i, j) in spec.nodes() {
                let pnt = spec.pos(i, j);
                if pnt[0] > 0.0 && pnt[0] < 1.0 && pnt[1] > 0.0 && pnt[1] < 8.0 * h {
                    occupied[spec.idx(i, j)] = true;
                }
            }
            let mut dg = build_mask_domain(&MaskDomain::new(spec, occupied, 4.0).unwrap()).unwrap();
            dg.set_boundary_values(|x, _| slab_exact(2.0, x.clamp(0.0, 1.0)));
            let f = ScalarField::constant(dg.spec, -1.0);
            let prob = DirichletProblem::with_stored_boundary(
                &dg,
                OperatorSpec::p_laplace(2.0, 0.0).unwrap(),
                f,
            )
            .unwrap();
            let cfg = SolverConfig::for_operator(OperatorKind::PLaplace);
            let res = solve(&prob, &cfg).unwrap();
            let mut max_u = f64::NEG_INFINITY;
            for (i, j) in dg.interior_nodes() {
                max_u = max_u.max(res.u.get(i, j));
            }
            assert!((max_u - 0.125).abs() <= 1e-6, "p = 2 max {max_u}");
            detail.push_str(&format!("p=2 max={max_u:.8}; "));
        }
        assert!(tp.elapsed().as_secs_f64() < 10.0, "budget exceeded for p = {p}");
    }
    report_line("2 (slab oracle)", pass, detail, t0);
}

// 3. Reductions agree with the Laplace solve on random problems.
#[test]
fn criterion_03_reductions() {
    let t0 = Instant::now();
    let h = 1.0 / 32.0;
    let dg = half_space(h);
    let cfg_l = SolverConfig::for_operator(OperatorKind::Laplace);
    let cfg_p = SolverConfig::for_operator(OperatorKind::Pucci);
    let cfg_pl = SolverConfig::for_operator(OperatorKind::PLaplace);
    let bound = 10.0 * cfg_p.tol;
    let mut rng = Rng64::new(2024);
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let fc = rng.uniform(-1.0, 1.0);
        let (a, b) = (rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
        let g = ScalarField::sample(dg.spec, move |x, y| y * (1.0 + a * x) + b * x * x);
        let f = ScalarField::constant(dg.spec, fc);
        let lap = DirichletProblem::new(&dg, OperatorSpec::laplace(), f.clone(), g.clone()).unwrap();
        let puc = DirichletProblem::new(
            &dg,
            OperatorSpec::pucci(1.0, 1.0, 0.0, ExtremalSign::Minus).unwrap(),
            f.clone(),
            g.clone(),
        )
        .unwrap();
        let pl = DirichletProblem::new(
            &dg,
            OperatorSpec::p_laplace(2.0, 0.0).unwrap(),
            f.clone(),
            g.clone(),
        )
        .unwrap();
        let ul = solve(&lap, &cfg_l).unwrap();
        let up = solve(&puc, &cfg_p).unwrap();
        let upl = solve(&pl, &cfg_pl).unwrap();
        assert!(ul.converged && up.converged && upl.converged);
        for (i, j) in dg.interior_nodes() {
            worst = worst.max((ul.u.get(i, j) - up.u.get(i, j)).abs());
            worst = worst.max((ul.u.get(i, j) - upl.u.get(i, j)).abs());
        }
        assert!(worst <= bound, "trial {trial}: gap {worst} > {bound}");
    }
    let pass = worst <= bound && t0.elapsed().as_secs_f64() < 30.0;
    report_line("3 (reductions)", pass, format!("worst gap = {worst:.2e} <= {bound:.1e}"), t0);
    assert!(t0.elapsed().as_secs_f64() < 30.0, "budget exceeded");
}

// 4. Barrier suite at h = 1/256 with margins stable under one refinement.
#[test]
fn criterion_04_barrier_suite() {
    let t0 = Instant::now();
    let op_plus0 = OperatorSpec::pucci(1.0, 2.0, 0.0, ExtremalSign::Plus).unwrap();
    let op_plus = OperatorSpec::pucci(1.0, 2.0, 1.0, ExtremalSign::Plus).unwrap();
    let op_minus = OperatorSpec::pucci(1.0, 2.0, 1.0, ExtremalSign::Minus).unwrap();
    let mut detail = String::new();
    let mut runs = Vec::new();
    let quad_region = Region::Ball { center: [0.0, 0.0], r: 0.45 };
    for &h in &[1.0 / 256.0, 1.0 / 512.0] {
        let dg = half_space(h);
        let quad = BarrierSpec::quadratic(0.5, 1.0, [0.0, 0.0]);
        // margin-stability row at M = 0: exact interior value -2 everywhere
        let rq = verify_sign(&quad, &op_plus0, &dg, quad_region, SignTarget::AtMost(-1.0)).unwrap();
        assert!((rq.worst_value + 2.0).abs() < 1e-9, "{}", rq.worst_value);
        // exact-value row with the gradient term: -2 + 2 M |x| / (lambda n)
        let rq_m = verify_sign(&quad, &op_plus, &dg, quad_region, SignTarget::AtMost(-1.0)).unwrap();
        let rim: f64 = dg
            .interior_nodes()
            .filter(|&(i, j)| {
                let p = dg.spec.pos(i, j);
                p[0] * p[0] + p[1] * p[1] <= 0.45 * 0.45
            })
            .map(|(i, j)| {
                let p = dg.spec.pos(i, j);
                (p[0] * p[0] + p[1] * p[1]).sqrt()
            })
            .fold(0.0, f64::max);
        let exact = -2.0 + 2.0 * 1.0 * rim / 2.0;
        assert!((rq_m.worst_value - exact).abs() < 1e-6, "{} vs {exact}", rq_m.worst_value);
        assert!(rq_m.pass);

        let s = exp_rate(&op_plus);
        assert_eq!(s, 2.0);
        let expo = BarrierSpec::exponential(s);
        let re = verify_sign(
            &expo,
            &op_plus,
            &dg,
            Region::Box { lo: [-0.75, 0.0], hi: [0.75, 0.75] },
            SignTarget::AtMost(-1.0),
        )
        .unwrap();

        let q = choose_q(&op_minus, h).unwrap() as f64;
        let ann = BarrierSpec::annulus(q, 0.25, 1.0, [0.0, 0.5]).unwrap();
        let eps1 = 1.0 / (0.25f64.powf(-q) - 0.375f64.powf(-q));
        let ra = verify_sign(
            &ann,
            &op_minus,
            &dg,
            Region::Annulus { center: [0.0, 0.5], r_in: 0.25, r_out: 0.375 },
            SignTarget::AtLeast(eps1),
        )
        .unwrap();
        assert!(rq.pass && re.pass && ra.pass, "barrier failed at h = {h}");
        detail.push_str(&format!(
            "h=1/{:.0}: q={q} margins {:.3}/{:.3}/{:.3e}; ",
            1.0 / h,
            rq.margin,
            re.margin,
            ra.margin
        ));
        runs.push([
            (rq.margin, rq.slack),
            (re.margin, re.slack),
            (ra.margin, ra.slack),
        ]);
    }
    // margins non-decreasing under refinement, up to the coarse slack
    for b in 0..3 {
        let (m0, s0) = runs[0][b];
        let (m1, _) = runs[1][b];
        assert!(m1 >= m0 - s0, "barrier {b}: margin {m1} < {m0} - slack {s0}");
    }
    let pass = t0.elapsed().as_secs_f64() < 60.0;
    report_line("4 (barrier suite)", pass, detail, t0);
    assert!(pass, "budget exceeded");
}

fn cap_data(dg: &mut DomainGrid, scale: f64) {
    for j in 0..dg.spec.ny {
        for i in 0..dg.spec.nx {
            if dg.is_boundary(i, j) {
                let p = dg.snap[dg.spec.idx(i, j)];
                let v = if p[0] * p[0] + p[1] * p[1] >= 1.0 - 1e-9 {
                    scale * p[1].max(0.0)
                } else {
                    0.0
                };
                dg.boundary_values.set(i, j, v);
            }
        }
    }
}

// 5. Approximation exponent fits of the homogeneous replacement.
#[test]
fn criterion_05_approximation_exponent() {
    let t0 = Instant::now();
    let h = 1.0 / 128.0;
    let scales = [0.125, 0.0625, 0.03125];
    let mut detail = String::new();
    for (name, op, floor) in [
        ("laplace", OperatorSpec::laplace(), 1.7),
        ("pucci", OperatorSpec::pucci(1.0, 2.0, 0.0, ExtremalSign::Minus).unwrap(), 1.7),
        ("plaplace p=3", OperatorSpec::p_laplace(3.0, h).unwrap(), 1.5),
    ] {
        let mut dg = half_space(h);
        cap_data(&mut dg, 2.2);
        let cfg = SolverConfig::for_operator(op.kind);
        let prob =
            DirichletProblem::with_stored_boundary(&dg, op, ScalarField::constant(dg.spec, -1.0))
                .unwrap();
        let res = solve(&prob, &cfg).unwrap();
        assert!(res.converged, "{name}: residual {}", res.residual_inf);
        let fit = fit_replacement_exponent(&res.u, &dg, [0.0, 0.0], &scales, &op, &cfg).unwrap();
        detail.push_str(&format!("{name}: zeta = {:.3}; ", fit.zeta));
        assert!(fit.zeta >= floor, "{name}: zeta {} below {floor}", fit.zeta);
    }
    let pass = t0.elapsed().as_secs_f64() < 300.0;
    report_line("5 (approximation exponent)", pass, detail, t0);
    assert!(pass, "budget exceeded");
}

// 6. Growth measurement is positive and refinement-stable.
#[test]
fn criterion_06_growth_stability() {
    let t0 = Instant::now();
    let mut fits = Vec::new();
    for &h in &[1.0f64 / 128.0, 1.0 / 256.0] {
        let dom =
            LipschitzGraphDomain::new(GraphFn::Sawtooth { slope: 0.05 }, 0.05, 1.0).unwrap();
        let m = 4.0 * h;
        let y_lo = -((0.05 / h).ceil() + 4.0) * h;
        let spec = GridSpec::from_box(h, [-1.0 - m, y_lo], [1.0 + m, 1.0 + m]).unwrap();
        let mut dg = build_graph_domain(&dom, spec).unwrap();
        cap_data(&mut dg, 2.0);
        let mut rng = Rng64::new(6);
        let f = ScalarField::constant(dg.spec, rng.uniform(-1.0, 0.0));
        let cfg = SolverConfig::for_operator(OperatorKind::Laplace);
        let prob = DirichletProblem::with_stored_boundary(&dg, OperatorSpec::laplace(), f).unwrap();
        let res = solve(&prob, &cfg).unwrap();
        assert!(res.converged);
        // normalize at e_n/2 as in the growth lemmas
        let (ai, aj) = dg.spec.nearest([0.0, 0.5]);
        let mut u = res.u;
        let c = u.get(ai, aj);
        u.scale(1.0 / c);
        let w = GrowthWindow::near_origin(0.25, 1.0 / 8.0, h);
        let fit = measure_growth_lower(&u, &dg, &w, 1.5).unwrap();
        assert!(fit.c_fit > 0.0, "c_fit {} at h = {h}", fit.c_fit);
        fits.push(fit);
    }
    let rel = (fits[1].c_fit - fits[0].c_fit).abs() / fits[0].c_fit;
    let pass = rel <= 0.25 && t0.elapsed().as_secs_f64() < 300.0;
    report_line(
        "6 (growth stability)",
        pass,
        format!("c_fit {:.4} -> {:.4}, drift {:.2}%", fits[0].c_fit, fits[1].c_fit, 100.0 * rel),
        t0,
    );
    assert!(rel <= 0.25, "c_fit drift {rel}");
    assert!(t0.elapsed().as_secs_f64() < 300.0, "budget exceeded");
}

// 7. Full metatheorem certification through the CLI.
#[test]
fn criterion_07_theorem_flmain() {
    let t0 = Instant::now();
    let out = out_dir("c7");
    let status = Command::new(bin())
        .args([
            "run",
            configs_dir().join("theorem_flmain.conf").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .expect("run bhp-lab");
    let report = std::fs::read_to_string(out.join("report.txt")).expect("report exists");
    let pass0 = report.contains("level 0 certificate pass")
        && !report.lines().any(|l| l.contains("certificate pass") && l.contains("FAIL"));
    let drift_ok = report.lines().any(|l| l.contains("C_star drift") && l.contains("[pass]"));
    let decay_ok =
        report.lines().any(|l| l.contains("excess factor decay exponent") && l.contains("[pass]"));
    let budget = t0.elapsed().as_secs_f64() < 900.0;
    let pass = status.success() && pass0 && drift_ok && decay_ok && budget;
    report_line(
        "7 (theorem_flmain)",
        pass,
        format!(
            "exit = {:?}, drift_ok = {drift_ok}, decay_ok = {decay_ok}",
            status.code()
        ),
        t0,
    );
    assert!(status.success(), "nonzero exit");
    assert!(pass0 && drift_ok && decay_ok, "report:\n{report}");
    assert!(budget, "budget exceeded");
}

// 8. Ratio-level scale invariance of the certificate.
#[test]
fn criterion_08_scale_invariance() {
    let t0 = Instant::now();
    let h = 1.0 / 128.0;
    let mut dg = half_space(h);
    cap_data(&mut dg, 1.0 / 0.45);
    let op = OperatorSpec::laplace();
    let cfg = SolverConfig::for_operator(OperatorKind::Laplace);
    let solve_f = |fc: f64| -> ScalarField {
        let prob =
            DirichletProblem::with_stored_boundary(&dg, op, ScalarField::constant(dg.spec, fc))
                .unwrap();
        solve(&prob, &cfg).unwrap().u
    };
    let anchor = [0.0, 0.45];
    let (ai, aj) = dg.spec.nearest(anchor);
    let mut u1 = solve_f(-0.3);
    u1.scale(1.0 / u1.get(ai, aj));
    let mut u2 = solve_f(-0.8);
    u2.scale(1.0 / u2.get(ai, aj));

    let schedule = compute_schedule_with_cap(1.2, 2.0, 1.0, 0.45, h, 0.5).unwrap();
    let constants = CertifyConstants { c1: 0.25, c3: 0.5, c4: 1.5 };
    let mut inputs = CertifyInputs::new(anchor, constants, 9, OperatorKind::Laplace);
    inputs.sample_cap = 64;
    let base = certify(&u1, &u2, &dg, &op, &schedule, &inputs).unwrap();
    let gamma = 7.0;
    let mut u2s = u2.clone();
    u2s.scale(gamma);
    let scaled = certify(&u1, &u2s, &dg, &op, &schedule, &inputs).unwrap();

    let ulp = 4.0 * f64::EPSILON;
    let mut worst_rel = (scaled.m0 - base.m0 / gamma).abs() / (base.m0 / gamma);
    for (a, b) in base.layers.iter().zip(&scaled.layers) {
        worst_rel = worst_rel.max((b.m_k - a.m_k / gamma).abs() / (a.m_k / gamma).abs());
    }
    let pass = worst_rel <= ulp && base.pass == scaled.pass;
    report_line(
        "8 (scale invariance)",
        pass,
        format!("worst relative M_k deviation = {worst_rel:.2e}, pass preserved = {}", base.pass == scaled.pass),
        t0,
    );
    assert!(worst_rel <= ulp, "M_k not scale invariant: {worst_rel}");
    assert_eq!(base.pass, scaled.pass);
}

// 9. Negative control (slit square aborts) and L-shape passes.
#[test]
fn criterion_09_nta_controls() {
    let t0 = Instant::now();
    let out_slit = out_dir("c9-slit");
    let status_slit = Command::new(bin())
        .args([
            "run",
            configs_dir().join("theorem_nta_slit.conf").to_str().unwrap(),
            "--out",
            out_slit.to_str().unwrap(),
        ])
        .status()
        .expect("run bhp-lab");
    let report_slit = std::fs::read_to_string(out_slit.join("report.txt")).unwrap();
    let aborted = report_slit.contains("hypothesis (lower-bound) not met");
    assert!(!status_slit.success(), "slit run must exit nonzero");
    assert!(aborted, "slit report must carry the designated abort status:\n{report_slit}");

    let out_l = out_dir("c9-lshape");
    let status_l = Command::new(bin())
        .args([
            "run",
            configs_dir().join("theorem_nta_lshape.conf").to_str().unwrap(),
            "--out",
            out_l.to_str().unwrap(),
        ])
        .status()
        .expect("run bhp-lab");
    let report_l = std::fs::read_to_string(out_l.join("report.txt")).unwrap();
    assert!(status_l.success(), "L-shape run must pass:\n{report_l}");
    // measured beta stays below 2
    let mut beta_ok = false;
    for line in report_l.lines() {
        if line.contains("growth beta_fit") {
            let val: f64 = line
                .split('=')
                .nth(1)
                .and_then(|s| s.split_whitespace().next())
                .and_then(|s| s.parse().ok())
                .unwrap_or(f64::NAN);
            assert!(val < 2.0, "beta_fit {val} not below 2");
            beta_ok = true;
        }
    }
    assert!(beta_ok, "no beta_fit rows in the L-shape report");
    let budget = t0.elapsed().as_secs_f64() < 600.0;
    report_line(
        "9 (nta controls)",
        budget,
        format!("slit aborted (exit {:?}), lshape passed (exit {:?})", status_slit.code(), status_l.code()),
        t0,
    );
    assert!(budget, "budget exceeded");
}

// 10. Byte-identical CSV bodies for identical config and seed.
#[test]
fn criterion_10_determinism() {
    let t0 = Instant::now();
    let out_a = out_dir("c10-a");
    let out_b = out_dir("c10-b");
    for out in [&out_a, &out_b] {
        let status = Command::new(bin())
            .args([
                "run",
                configs_dir().join("theorem_flmain.conf").to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .expect("run bhp-lab");
        assert!(status.success());
    }
    let mut identical = true;
    let mut compared = 0;
    for entry in std::fs::read_dir(&out_a).unwrap() {
        let name = entry.unwrap().file_name();
        let name = name.to_string_lossy().to_string();
        if name.ends_with(".csv") {
            let a = std::fs::read(out_a.join(&name)).unwrap();
            let b = std::fs::read(out_b.join(&name)).unwrap();
            if a != b {
                identical = false;
            }
            compared += 1;
        }
    }
    let pass = identical && compared >= 2;
    report_line("10 (determinism)", pass, format!("{compared} CSV bodies compared"), t0);
    assert!(compared >= 2, "expected at least two CSV tables");
    assert!(identical, "CSV bodies differ between identical runs");
}
