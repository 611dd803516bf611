//! CLI surface checks: validate subcommand, error paths, and a coarse
//! solver-validation run through the binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bhp-lab")
}

fn tmp(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bhp-cli-{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn validate_accepts_shipped_configs() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        let out = Command::new(bin()).args(["validate", path.to_str().unwrap()]).output().unwrap();
        assert!(out.status.success(), "validate failed for {}", path.display());
        assert!(String::from_utf8_lossy(&out.stdout).contains("# config ok"));
    }
}

#[test]
fn bad_mask_path_fails_naming_the_path() {
    let dir = tmp("badmask");
    let cfg = dir.join("bad.conf");
    std::fs::write(
        &cfg,
        "experiment = theorem_nta\ndomain.type = mask\ndomain.mask = file\n\
         domain.mask_path = nope/missing.txt\nrhs.seed = 1\n",
    )
    .unwrap();
    let out = Command::new(bin())
        .args(["run", cfg.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing.txt"), "stderr does not name the path: {err}");
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tmp("badkey");
    let cfg = dir.join("bad.conf");
    std::fs::write(&cfg, "experiment = growth\nschedule.betta = 1.5\n").unwrap();
    let out = Command::new(bin()).args(["validate", cfg.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("betta"));
}

#[test]
fn solver_validate_runs_through_the_binary() {
    let dir = tmp("sv");
    let cfg = dir.join("sv.conf");
    std::fs::write(
        &cfg,
        "experiment = solver_validate\ngrid.h = 0.03125\ngrid.levels = 2\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    let status = Command::new(bin())
        .args(["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out_dir.join("validate.csv")).unwrap();
    assert!(csv.starts_with("level,h,p,sup_error\n"));
    // error column decreases with h per p
    let mut by_p: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        by_p.entry(cols[2].to_string()).or_default().push(cols[3].parse().unwrap());
    }
    for (p, errs) in by_p {
        assert!(
            errs.windows(2).all(|w| w[1] <= w[0] || w[1] <= 1e-10),
            "errors not decreasing for p = {p}: {errs:?}"
        );
    }
    let report = std::fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("overall: pass"), "{report}");
}

#[test]
fn seed_override_changes_the_draw_and_rerun_reproduces() {
    let dir = tmp("seed");
    let cfg = dir.join("g.conf");
    std::fs::write(
        &cfg,
        "experiment = growth\ndomain.graph = sawtooth\ndomain.l = 0.05\n\
         rhs.f1 = random\nrhs.f1_range = -1 0\nrhs.f2 = random\nrhs.f2_range = -1 0\n\
         rhs.seed = 3\ngrid.h = 0.015625\ngrid.levels = 1\nschedule.beta = 1.5\n",
    )
    .unwrap();
    let run = |tag: &str, seed: Option<&str>| -> String {
        let out = dir.join(tag);
        let mut args = vec![
            "run".to_string(),
            cfg.to_str().unwrap().to_string(),
            "--out".to_string(),
            out.to_str().unwrap().to_string(),
        ];
        if let Some(s) = seed {
            args.push("--seed".into());
            args.push(s.into());
        }
        let status = Command::new(bin()).args(&args).status().unwrap();
        assert!(status.success());
        std::fs::read_to_string(out.join("growth.csv")).unwrap()
    };
    let a = run("a", None);
    let b = run("b", None);
    let c = run("c", Some("99"));
    assert_eq!(a, b, "same seed must reproduce the CSV body");
    assert_ne!(a, c, "different seed should change the drawn rhs");
}
