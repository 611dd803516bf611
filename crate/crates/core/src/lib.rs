//! Finite-difference laboratory for boundary Harnack experiments.
//!
//! The crate solves inhomogeneous elliptic Dirichlet problems (Laplace,
//! Pucci-extremal, p-Laplace) on Lipschitz graph domains and mask-defined
//! domains, evaluates the explicit barrier functions used in comparison
//! arguments, measures growth/Harnack/gradient estimates empirically, and
//! runs a layer-iteration certification that tracks the sup ratio of two
//! positive solutions through dyadic boundary strips.
//!
//! Modules follow the pipeline order:
//!
//! - [`grid`]: uniform lattice, scalar fields
//! - [`geometry`]: domain construction, distance fields, corkscrews, chains
//! - [`operators`]: discrete operators and pointwise extremal algebra
//! - [`solver`]: Dirichlet solvers per operator kind
//! - [`barriers`]: explicit barriers and sign verification
//! - [`estimates`]: growth, Harnack, gradient and coefficient measurements
//! - [`certify`]: layer schedules, homogeneous replacements, certificates

pub mod barriers;
pub mod certify;
pub mod estimates;
pub mod geometry;
pub mod grid;
pub mod operators;
pub mod solver;
pub mod util;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    GridSpec(String),
    #[error("graph escapes box: {0}")]
    GraphEscapesBox(String),
    #[error("lipschitz bound violated between x'={x0} and x'={x1}: |dg|={slope} > L={l}")]
    LipschitzViolated { x0: f64, x1: f64, slope: f64, l: f64 },
    #[error("mask domain is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("degenerate localization")]
    DegenerateLocalization,
    #[error("no corkscrew ball at this resolution; best achieved K' = {best}")]
    NoCorkscrew { best: f64 },
    #[error("points lie in different components")]
    DifferentComponents,
    #[error("missing value at node ({x}, {y})")]
    MissingNeighbor { x: f64, y: f64 },
    #[error("resolution floor: {0}")]
    ResolutionFloor(String),
    #[error("empty region")]
    EmptyRegion,
    #[error("region touches barrier singularity (min |x - center| = {closest})")]
    SingularRegion { closest: f64 },
    #[error("no admissible radial exponent q in [{lo}, {hi}]")]
    NoAdmissibleQ { lo: u32, hi: u32 },
    #[error("quadrature did not converge at node ({x}, {y})")]
    QuadratureFailure { x: f64, y: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("growth exponent too large: beta = {beta} must be below zeta = {zeta}")]
    GrowthExponentTooLarge { beta: f64, zeta: f64 },
    #[error("schedule infeasible: {0}")]
    ScheduleInfeasible(String),
    #[error("empty layer A_{k}: resolution too coarse for the schedule")]
    EmptyLayer { k: usize },
    #[error("anchor too close to boundary: d = {d} < c_star^2 = {need}")]
    AnchorTooClose { d: f64, need: f64 },
    #[error("anchor not normalized: u1(x0) = {value}")]
    AnchorNotNormalized { value: f64 },
    #[error("solver failed to converge: residual {residual} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("hypothesis (lower-bound) not met")]
    GrowthHypothesisNotMet,
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
