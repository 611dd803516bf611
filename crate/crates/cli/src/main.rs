//! bhp-lab: experiment runner for the boundary Harnack laboratory.
//!
//! Usage:
//!   bhp-lab run <config-path> [--out DIR] [--levels N] [--seed S]
//!   bhp-lab validate <config-path>
//!
//! Exit status is 0 exactly when every pass flag in the report is true.

mod config;
mod experiments;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

fn usage() -> ExitCode {
    eprintln!("usage: bhp-lab run <config-path> [--out DIR] [--levels N] [--seed S]");
    eprintln!("       bhp-lab validate <config-path>");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 2 {
        return usage();
    }
    let cmd = args[0].as_str();
    let path = PathBuf::from(&args[1]);
    match cmd {
        "validate" => match config::parse_config(&path) {
            Ok(cfg) => {
                print!("{}", cfg.to_text());
                println!("# config ok");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("config error: {e}");
                ExitCode::FAILURE
            }
        },
        "run" => {
            let mut cfg = match config::parse_config(&path) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let mut i = 2;
            while i < args.len() {
                match args[i].as_str() {
                    "--out" if i + 1 < args.len() => {
                        cfg.out_dir = PathBuf::from(&args[i + 1]);
                        i += 2;
                    }
                    "--levels" if i + 1 < args.len() => {
                        match args[i + 1].parse::<usize>() {
                            Ok(n) if n >= 1 => cfg.levels = n,
                            _ => return usage(),
                        }
                        i += 2;
                    }
                    "--seed" if i + 1 < args.len() => {
                        match args[i + 1].parse::<u64>() {
                            Ok(s) => cfg.seed = s,
                            _ => return usage(),
                        }
                        i += 2;
                    }
                    _ => return usage(),
                }
            }
            let rep = experiments::run(&cfg);
            if let Err(e) = rep.write_all(&cfg.out_dir) {
                eprintln!("cannot write report: {e}");
                return ExitCode::FAILURE;
            }
            print!("{}", rep.body());
            println!("report written to {}", cfg.out_dir.display());
            if rep.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        _ => usage(),
    }
}
