//! Experiment configuration: a flat key-value file with dotted section
//! names, one directive per line, `#` comments. Unknown keys are errors.

use bhp_core::certify::{DomainSpec, RhsSpec, TheoremKind};
use bhp_core::geometry::{GraphFn, MaskDomain};
use bhp_core::operators::{ExtremalSign, OperatorSpec};
use bhp_core::{Error, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    SolverValidate,
    BarrierVerify,
    Growth,
    Harnack,
    BhpCertify,
    TheoremFlMain,
    TheoremFlpMain,
    TheoremNta,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::SolverValidate => "solver_validate",
            ExperimentKind::BarrierVerify => "barrier_verify",
            ExperimentKind::Growth => "growth",
            ExperimentKind::Harnack => "harnack",
            ExperimentKind::BhpCertify => "bhp_certify",
            ExperimentKind::TheoremFlMain => "theorem_flmain",
            ExperimentKind::TheoremFlpMain => "theorem_flpmain",
            ExperimentKind::TheoremNta => "theorem_nta",
        }
    }
}

#[derive(Debug, Clone)]
pub enum DomainConfig {
    Graph { graph: String, l: f64, r: f64, period: f64, points: Vec<(f64, f64)> },
    Mask { mask: String, mask_path: Option<PathBuf>, k: f64 },
}

#[derive(Debug, Clone)]
pub struct RhsConfig {
    pub kind: String, // constant | random | poly
    pub value: f64,
    pub range: (f64, f64),
    pub coeffs: [f64; 6],
}

impl RhsConfig {
    fn to_spec(&self) -> RhsSpec {
        match self.kind.as_str() {
            "constant" => RhsSpec::Constant(self.value),
            "random" => RhsSpec::RandomConstant { lo: self.range.0, hi: self.range.1 },
            _ => RhsSpec::Poly { coeffs: self.coeffs, lo: self.range.0, hi: self.range.1 },
        }
    }
}

/// Parsed and validated experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub domain: DomainConfig,
    pub op: OperatorSpec,
    pub op_kind_name: String,
    pub pucci_sign_name: String,
    pub f1: RhsConfig,
    pub f2: RhsConfig,
    pub seed: u64,
    pub h: f64,
    pub levels: usize,
    pub beta: f64,
    pub zeta: Option<f64>, // None = fit
    pub c_star: f64,
    pub slack: f64,
    pub shrink: f64,
    pub sample_cap: usize,
    pub anchor: Option<[f64; 2]>,
    pub far_scale: f64,
    pub tol: Option<f64>,
    pub out_dir: PathBuf,
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|_| Error::Config(format!("{key}: expected a number, got '{v}'")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>().map_err(|_| Error::Config(format!("{key}: expected an integer, got '{v}'")))
}

fn parse_pair(key: &str, v: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("{key}: expected two numbers, got '{v}'")));
    }
    Ok((parse_f64(key, parts[0])?, parse_f64(key, parts[1])?))
}

/// Parses a config file from its text. Every key must be known; missing
/// keys fall back to documented defaults.
pub fn parse_config_text(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
        let key = k.trim().to_string();
        if kv.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
        }
    }

    const KNOWN: &[&str] = &[
        "experiment",
        "domain.type",
        "domain.graph",
        "domain.l",
        "domain.r",
        "domain.period",
        "domain.points",
        "domain.mask",
        "domain.mask_path",
        "domain.k",
        "domain.anchor",
        "domain.far_scale",
        "operator.kind",
        "operator.lambda",
        "operator.lambda_max",
        "operator.m",
        "operator.p",
        "operator.pucci_sign",
        "operator.delta",
        "operator.dirs16",
        "rhs.f1",
        "rhs.f1_value",
        "rhs.f1_range",
        "rhs.f1_coeffs",
        "rhs.f2",
        "rhs.f2_value",
        "rhs.f2_range",
        "rhs.f2_coeffs",
        "rhs.seed",
        "grid.h",
        "grid.levels",
        "schedule.beta",
        "schedule.zeta",
        "schedule.c_star",
        "schedule.slack",
        "schedule.shrink",
        "schedule.sample_cap",
        "solver.tol",
        "output.dir",
    ];
    for key in kv.keys() {
        if !KNOWN.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
    }
    let get = |k: &str| kv.get(k).map(|s| s.as_str());

    let experiment = match get("experiment") {
        Some("solver_validate") => ExperimentKind::SolverValidate,
        Some("barrier_verify") => ExperimentKind::BarrierVerify,
        Some("growth") => ExperimentKind::Growth,
        Some("harnack") => ExperimentKind::Harnack,
        Some("bhp_certify") => ExperimentKind::BhpCertify,
        Some("theorem_flmain") => ExperimentKind::TheoremFlMain,
        Some("theorem_flpmain") => ExperimentKind::TheoremFlpMain,
        Some("theorem_nta") => ExperimentKind::TheoremNta,
        Some(other) => return Err(Error::Config(format!("unknown experiment '{other}'"))),
        None => return Err(Error::Config("missing required key 'experiment'".into())),
    };

    let domain = match get("domain.type").unwrap_or("lipschitz_graph") {
        "lipschitz_graph" => {
            let graph = get("domain.graph").unwrap_or("sawtooth").to_string();
            if !["flat", "sawtooth", "zigzag", "piecewise"].contains(&graph.as_str()) {
                return Err(Error::Config(format!("unknown graph kind '{graph}'")));
            }
            let l = parse_f64("domain.l", get("domain.l").unwrap_or("0.05"))?;
            if l < 0.0 {
                return Err(Error::Config(format!("domain.l must be nonnegative, got {l}")));
            }
            let r = parse_f64("domain.r", get("domain.r").unwrap_or("1.0"))?;
            let period = parse_f64("domain.period", get("domain.period").unwrap_or("0.25"))?;
            let points = match get("domain.points") {
                Some(v) => {
                    let nums: Vec<f64> = v
                        .split_whitespace()
                        .map(|t| parse_f64("domain.points", t))
                        .collect::<Result<_>>()?;
                    if nums.len() % 2 != 0 || nums.len() < 4 {
                        return Err(Error::Config("domain.points needs pairs 't g t g ...'".into()));
                    }
                    nums.chunks(2).map(|c| (c[0], c[1])).collect()
                }
                None => Vec::new(),
            };
            DomainConfig::Graph { graph, l, r, period, points }
        }
        "mask" => {
            let mask = get("domain.mask").unwrap_or("lshape").to_string();
            if !["lshape", "slit_square", "file"].contains(&mask.as_str()) {
                return Err(Error::Config(format!("unknown mask kind '{mask}'")));
            }
            let mask_path = match get("domain.mask_path") {
                Some(p) => {
                    let path = base_dir.join(p);
                    if !path.exists() {
                        return Err(Error::Config(format!("mask file does not exist: {}", path.display())));
                    }
                    Some(path)
                }
                None => {
                    if mask == "file" {
                        return Err(Error::Config("domain.mask = file requires domain.mask_path".into()));
                    }
                    None
                }
            };
            let k = parse_f64("domain.k", get("domain.k").unwrap_or("8.0"))?;
            DomainConfig::Mask { mask, mask_path, k }
        }
        other => return Err(Error::Config(format!("unknown domain.type '{other}'"))),
    };

    let op_kind_name = get("operator.kind").unwrap_or("laplace").to_string();
    let lambda = parse_f64("operator.lambda", get("operator.lambda").unwrap_or("1.0"))?;
    let lambda_max = parse_f64("operator.lambda_max", get("operator.lambda_max").unwrap_or("1.0"))?;
    let m = parse_f64("operator.m", get("operator.m").unwrap_or("0.0"))?;
    let p = parse_f64("operator.p", get("operator.p").unwrap_or("2.0"))?;
    let delta = parse_f64("operator.delta", get("operator.delta").unwrap_or("0.0"))?;
    let pucci_sign_name = get("operator.pucci_sign").unwrap_or("minus").to_string();
    let sign = match pucci_sign_name.as_str() {
        "minus" => ExtremalSign::Minus,
        "plus" => ExtremalSign::Plus,
        other => return Err(Error::Config(format!("unknown pucci_sign '{other}'"))),
    };
    if p <= 1.0 {
        return Err(Error::Config(format!("p must exceed 1, got {p}")));
    }
    if lambda_max < lambda {
        return Err(Error::Config(format!("lambda = {lambda} exceeds lambda_max = {lambda_max}")));
    }
    let mut op = match op_kind_name.as_str() {
        "laplace" => OperatorSpec::laplace(),
        "pucci" => OperatorSpec::pucci(lambda, lambda_max, m, sign)?,
        "plaplace" => OperatorSpec::p_laplace(p, delta)?,
        other => return Err(Error::Config(format!("unknown operator.kind '{other}'"))),
    };
    if get("operator.dirs16") == Some("true") {
        op.dirs16 = true;
    }

    let parse_rhs = |which: &str| -> Result<RhsConfig> {
        let kind = get(&format!("rhs.{which}")).unwrap_or("constant").to_string();
        if !["constant", "random", "poly"].contains(&kind.as_str()) {
            return Err(Error::Config(format!("unknown rhs kind '{kind}'")));
        }
        let value = parse_f64("rhs.value", get(&format!("rhs.{which}_value")).unwrap_or("0.0"))?;
        let range = match get(&format!("rhs.{which}_range")) {
            Some(v) => parse_pair("rhs.range", v)?,
            None => (-1.0, 0.0),
        };
        if range.1 < range.0 {
            return Err(Error::Config(format!("rhs.{which}_range is empty")));
        }
        let coeffs = match get(&format!("rhs.{which}_coeffs")) {
            Some(v) => {
                let nums: Vec<f64> = v
                    .split_whitespace()
                    .map(|t| parse_f64("rhs.coeffs", t))
                    .collect::<Result<_>>()?;
                if nums.len() != 6 {
                    return Err(Error::Config("rhs coeffs need 6 numbers".into()));
                }
                [nums[0], nums[1], nums[2], nums[3], nums[4], nums[5]]
            }
            None => [0.0; 6],
        };
        Ok(RhsConfig { kind, value, range, coeffs })
    };
    let f1 = parse_rhs("f1")?;
    let f2 = parse_rhs("f2")?;
    let seed = match get("rhs.seed") {
        Some(v) => v.parse::<u64>().map_err(|_| Error::Config(format!("bad seed '{v}'")))?,
        None => {
            if f1.kind == "random" || f2.kind == "random" {
                return Err(Error::Config("rhs.seed is required when an rhs is random".into()));
            }
            7
        }
    };

    let h = parse_f64("grid.h", get("grid.h").unwrap_or("0.0078125"))?;
    if !(h > 0.0) {
        return Err(Error::Config(format!("grid.h must be positive, got {h}")));
    }
    let levels = parse_usize("grid.levels", get("grid.levels").unwrap_or("1"))?;
    if levels == 0 {
        return Err(Error::Config("grid.levels must be at least 1".into()));
    }

    let beta = parse_f64("schedule.beta", get("schedule.beta").unwrap_or("1.2"))?;
    let zeta = match get("schedule.zeta") {
        None | Some("fit") => None,
        Some(v) => Some(parse_f64("schedule.zeta", v)?),
    };
    let c_star = parse_f64("schedule.c_star", get("schedule.c_star").unwrap_or("0.1"))?;
    let slack = parse_f64("schedule.slack", get("schedule.slack").unwrap_or("0.5"))?;
    let shrink = parse_f64("schedule.shrink", get("schedule.shrink").unwrap_or("0.25"))?;
    let sample_cap = parse_usize("schedule.sample_cap", get("schedule.sample_cap").unwrap_or("512"))?;
    let anchor = match get("domain.anchor") {
        Some(v) => {
            let (x, y) = parse_pair("domain.anchor", v)?;
            Some([x, y])
        }
        None => None,
    };
    let far_scale = parse_f64("domain.far_scale", get("domain.far_scale").unwrap_or("8.0"))?;
    let tol = match get("solver.tol") {
        Some(v) => Some(parse_f64("solver.tol", v)?),
        None => None,
    };
    let out_dir = PathBuf::from(get("output.dir").unwrap_or("out"));

    Ok(ExperimentConfig {
        experiment,
        domain,
        op,
        op_kind_name,
        pucci_sign_name,
        f1,
        f2,
        seed,
        h,
        levels,
        beta,
        zeta,
        c_star,
        slack,
        shrink,
        sample_cap,
        anchor,
        far_scale,
        tol,
        out_dir,
    })
}

/// Reads and parses a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_text(&text, base)
}

impl ExperimentConfig {
    /// Re-emits the parsed configuration in the documented format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("experiment = {}\n", self.experiment.name()));
        match &self.domain {
            DomainConfig::Graph { graph, l, r, period, points } => {
                out.push_str("domain.type = lipschitz_graph\n");
                out.push_str(&format!("domain.graph = {graph}\n"));
                out.push_str(&format!("domain.l = {l}\n"));
                out.push_str(&format!("domain.r = {r}\n"));
                out.push_str(&format!("domain.period = {period}\n"));
                if !points.is_empty() {
                    let flat: Vec<String> =
                        points.iter().flat_map(|(t, g)| [t.to_string(), g.to_string()]).collect();
                    out.push_str(&format!("domain.points = {}\n", flat.join(" ")));
                }
            }
            DomainConfig::Mask { mask, mask_path, k } => {
                out.push_str("domain.type = mask\n");
                out.push_str(&format!("domain.mask = {mask}\n"));
                if let Some(p) = mask_path {
                    out.push_str(&format!("domain.mask_path = {}\n", p.display()));
                }
                out.push_str(&format!("domain.k = {k}\n"));
            }
        }
        if let Some(a) = self.anchor {
            out.push_str(&format!("domain.anchor = {} {}\n", a[0], a[1]));
        }
        out.push_str(&format!("domain.far_scale = {}\n", self.far_scale));
        out.push_str(&format!("operator.kind = {}\n", self.op_kind_name));
        out.push_str(&format!("operator.lambda = {}\n", self.op.lambda_min));
        out.push_str(&format!("operator.lambda_max = {}\n", self.op.lambda_max));
        out.push_str(&format!("operator.m = {}\n", self.op.gradient_coeff));
        out.push_str(&format!("operator.p = {}\n", self.op.p));
        out.push_str(&format!("operator.pucci_sign = {}\n", self.pucci_sign_name));
        out.push_str(&format!("operator.delta = {}\n", self.op.reg_delta));
        if self.op.dirs16 {
            out.push_str("operator.dirs16 = true\n");
        }
        for (which, rhs) in [("f1", &self.f1), ("f2", &self.f2)] {
            out.push_str(&format!("rhs.{which} = {}\n", rhs.kind));
            out.push_str(&format!("rhs.{which}_value = {}\n", rhs.value));
            out.push_str(&format!("rhs.{which}_range = {} {}\n", rhs.range.0, rhs.range.1));
        }
        out.push_str(&format!("rhs.seed = {}\n", self.seed));
        out.push_str(&format!("grid.h = {}\n", self.h));
        out.push_str(&format!("grid.levels = {}\n", self.levels));
        out.push_str(&format!("schedule.beta = {}\n", self.beta));
        match self.zeta {
            None => out.push_str("schedule.zeta = fit\n"),
            Some(z) => out.push_str(&format!("schedule.zeta = {z}\n")),
        }
        out.push_str(&format!("schedule.c_star = {}\n", self.c_star));
        out.push_str(&format!("schedule.slack = {}\n", self.slack));
        out.push_str(&format!("schedule.shrink = {}\n", self.shrink));
        out.push_str(&format!("schedule.sample_cap = {}\n", self.sample_cap));
        if let Some(t) = self.tol {
            out.push_str(&format!("solver.tol = {t}\n"));
        }
        out.push_str(&format!("output.dir = {}\n", self.out_dir.display()));
        out
    }

    pub fn domain_spec(&self) -> Result<DomainSpec> {
        match &self.domain {
            DomainConfig::Graph { graph, l, r, period, points } => {
                let g = match graph.as_str() {
                    "flat" => GraphFn::Flat,
                    "sawtooth" => GraphFn::Sawtooth { slope: *l },
                    "zigzag" => GraphFn::Zigzag { slope: *l, period: *period },
                    _ => GraphFn::PiecewiseLinear { points: points.clone() },
                };
                Ok(DomainSpec::Graph { graph: g, l: *l, r: *r })
            }
            DomainConfig::Mask { mask, mask_path, k } => match mask.as_str() {
                "lshape" => Ok(DomainSpec::LShape),
                "slit_square" => Ok(DomainSpec::SlitSquare),
                _ => {
                    let path = mask_path.as_ref().expect("validated at parse time");
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| Error::Config(format!("cannot read mask {}: {e}", path.display())))?;
                    Ok(DomainSpec::Mask(MaskDomain::from_raster(&text, None, *k)?))
                }
            },
        }
    }

    pub fn rhs_specs(&self) -> (RhsSpec, RhsSpec) {
        (self.f1.to_spec(), self.f2.to_spec())
    }

    pub fn theorem_kind(&self) -> TheoremKind {
        match self.experiment {
            ExperimentKind::TheoremFlpMain => TheoremKind::FlpMain,
            ExperimentKind::TheoremNta => TheoremKind::Nta,
            ExperimentKind::BhpCertify => match self.domain {
                DomainConfig::Mask { .. } => TheoremKind::Nta,
                DomainConfig::Graph { .. } => {
                    if self.op_kind_name == "plaplace" {
                        TheoremKind::FlpMain
                    } else {
                        TheoremKind::FlMain
                    }
                }
            },
            _ => TheoremKind::FlMain,
        }
    }
}
