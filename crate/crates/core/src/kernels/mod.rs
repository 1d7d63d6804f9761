//! Geometry queries built on the relaxation compiler.

mod bounding;
mod multi;
mod pairs;
mod single;

pub use bounding::{min_enclosing_ellipsoid, min_surrounding_sphere, Aabb, Ellipsoid, Sphere};
pub use multi::{multi_ccd, multi_ssi, MultiPatchReport, PairOutcome};
pub use pairs::{continuous_collision, diameter, self_intersection, surface_surface_intersection};
pub use single::{closest_point, hex_jacobian, hex_validity, min_aabb};

use crate::error::{Error, Result};
use crate::patch::{DomainKind, PatchSpec, ShapeFunction};
use crate::poly::Polynomial;
use crate::relax::{self, RecoveryReport, Relaxation, RelaxationOrder};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sosgeom_sdp::{SdpProblem, SdpSolution, SolveStatus, SolverSettings};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Tolerance on `||x1(u1*) - x2(u2*)||` for accepting a witness.
pub const EMBEDDED_TOL: f64 = 1e-2;
/// Minimum parameter distance for a self-intersection.
pub const EPS_PARAM: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Cp,
    Mbb,
    Pd,
    Ssi,
    Si,
    Ccd,
    Mss,
    Mee,
    Hex,
}

impl KernelKind {
    pub const ALL: [KernelKind; 9] = [
        KernelKind::Cp,
        KernelKind::Mbb,
        KernelKind::Pd,
        KernelKind::Ssi,
        KernelKind::Si,
        KernelKind::Ccd,
        KernelKind::Mss,
        KernelKind::Mee,
        KernelKind::Hex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Cp => "cp",
            KernelKind::Mbb => "mbb",
            KernelKind::Pd => "pd",
            KernelKind::Ssi => "ssi",
            KernelKind::Si => "si",
            KernelKind::Ccd => "ccd",
            KernelKind::Mss => "mss",
            KernelKind::Mee => "mee",
            KernelKind::Hex => "hex",
        }
    }

    /// Number of patches the kernel consumes.
    pub fn arity(self) -> usize {
        match self {
            KernelKind::Ssi | KernelKind::Ccd => 2,
            _ => 1,
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

/// Default relaxation degree for a kernel and patch kind.
pub fn default_degree(kernel: KernelKind, patch: &PatchSpec) -> usize {
    let cubic = patch.kind.order_class() >= 3;
    match (kernel, cubic) {
        (KernelKind::Cp, false) => 3,
        (KernelKind::Cp, true) => 5,
        (KernelKind::Mbb, false) => 2,
        (KernelKind::Mbb, true) => 4,
        (KernelKind::Pd, false) => 4,
        (KernelKind::Pd, true) => 6,
        (KernelKind::Ssi, false) => 5,
        (KernelKind::Ssi, true) => 6,
        (KernelKind::Si, _) => 4,
        (KernelKind::Ccd, false) => 5,
        (KernelKind::Ccd, true) => 6,
        (KernelKind::Mss, false) => 2,
        (KernelKind::Mss, true) => 4,
        (KernelKind::Mee, false) => 4,
        (KernelKind::Mee, true) => 6,
        (KernelKind::Hex, _) => 4,
    }
}

#[derive(Clone, Debug)]
pub struct KernelOptions {
    /// Relaxation degree; `None` picks the default for the kernel.
    pub d: Option<usize>,
    /// Seed for symmetry-breaking directions.
    pub seed: u64,
    pub settings: SolverSettings,
    /// When set, every main relaxation is copied here before it is solved.
    pub capture: Option<Arc<Mutex<Vec<SdpProblem>>>>,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions { d: None, seed: 0, settings: SolverSettings::default(), capture: None }
    }
}

impl KernelOptions {
    pub fn with_d(d: usize) -> Self {
        KernelOptions { d: Some(d), ..Default::default() }
    }

    pub fn degree(&self, kernel: KernelKind, patch: &PatchSpec) -> usize {
        self.d.unwrap_or_else(|| default_degree(kernel, patch))
    }

    fn solve(&self, p: &SdpProblem) -> Result<SdpSolution> {
        if let Some(c) = &self.capture {
            c.lock().expect("capture lock").push(p.clone());
        }
        Ok(sosgeom_sdp::solve(p, &self.settings)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Intersects,
    SelfIntersects,
    Collides,
    None,
    Valid,
    Invalid,
    Unknown,
}

impl Decision {
    /// Whether the verdict asserts a contact (or an invalid element).
    pub fn is_positive(self) -> bool {
        matches!(self, Decision::Intersects | Decision::SelfIntersects | Decision::Collides | Decision::Invalid)
    }

    pub fn is_decided(self) -> bool {
        self != Decision::Unknown
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub status: &'static str,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub constraints: usize,
    pub solves: usize,
}

impl SolverStats {
    fn absorb(&mut self, rel: &Relaxation) {
        let s = &rel.solution;
        self.status = s.status.as_str();
        self.iterations += s.iterations;
        self.primal_objective = s.primal_objective;
        self.dual_objective = s.dual_objective;
        self.gap = self.gap.max(s.gap);
        self.primal_residual = self.primal_residual.max(s.primal_residual);
        self.dual_residual = self.dual_residual.max(s.dual_residual);
        self.constraints = self.constraints.max(rel.compiled.sdp().num_constraints());
        self.solves += 1;
    }

    fn absorb_raw(&mut self, s: &SdpSolution, constraints: usize) {
        self.status = s.status.as_str();
        self.iterations += s.iterations;
        self.primal_objective = s.primal_objective;
        self.dual_objective = s.dual_objective;
        self.gap = self.gap.max(s.gap);
        self.primal_residual = self.primal_residual.max(s.primal_residual);
        self.dual_residual = self.dual_residual.max(s.dual_residual);
        self.constraints = self.constraints.max(constraints);
        self.solves += 1;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Timings {
    pub compile_ms: f64,
    pub solve_ms: f64,
    pub total_ms: f64,
}

/// Outcome of one kernel call.
#[derive(Clone, Debug, Serialize)]
pub struct KernelResult {
    pub kernel: KernelKind,
    /// Requested relaxation degree.
    pub d: usize,
    /// Relaxation degree actually compiled (Gram order `ceil(d_used / 2)`),
    /// see `kernel_order`.
    pub d_used: usize,
    /// Optimal value `lambda*` in the kernel's units.
    pub value: Option<f64>,
    /// Extracted parameters per patch; CCD appends `[t]`.
    pub u: Vec<Vec<f64>>,
    /// Embedded points at the extracted parameters.
    pub x: Vec<Vec<f64>>,
    pub recovery: Option<RecoveryReport>,
    pub decision: Option<Decision>,
    /// True when the verdict is backed by a checked witness or certificate.
    pub certified: bool,
    pub witness_gap: Option<f64>,
    /// Physical collision time for CCD.
    pub time: Option<f64>,
    pub aabb: Option<Aabb>,
    pub sphere: Option<Sphere>,
    pub ellipsoid: Option<Ellipsoid>,
    pub seed: u64,
    pub solver: SolverStats,
    pub timings: Timings,
}

impl KernelResult {
    fn new(kernel: KernelKind, d: usize, seed: u64) -> Self {
        KernelResult {
            kernel,
            d,
            d_used: 0,
            value: None,
            u: Vec::new(),
            x: Vec::new(),
            recovery: None,
            decision: None,
            certified: false,
            witness_gap: None,
            time: None,
            aabb: None,
            sphere: None,
            ellipsoid: None,
            seed,
            solver: SolverStats::default(),
            timings: Timings::default(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("kernel results serialize")
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Relaxation order for kernel degree `d`.  Kernels read `d` as the degree
/// of the SOS multipliers on the inequality constraints, so the Gram order
/// is `floor(d/2) + max_i ceil(deg g_i / 2)`; the order is then lifted until
/// the multipliers reach an objective of degree `f_degree`.
pub fn kernel_order(d: usize, f_degree: usize, domain: &crate::patch::SemialgebraicDomain) -> RelaxationOrder {
    let w = domain.inequalities.iter().map(|g| g.degree().div_ceil(2)).max().unwrap_or(0);
    RelaxationOrder::new((2 * (d / 2 + w)).max(relax::lifted_d(f_degree, domain)))
}

/// Compile + solve of a ratio objective with timing bookkeeping.
pub(crate) struct Solved {
    pub rel: Relaxation,
    pub compile: Duration,
    pub solve: Duration,
}

pub(crate) fn solve_ratio(
    num: &Polynomial,
    den: &Polynomial,
    domain: &crate::patch::SemialgebraicDomain,
    d: usize,
    opts: &KernelOptions,
) -> Result<Solved> {
    let order = kernel_order(d, num.degree().max(den.degree()), domain);
    let t0 = Instant::now();
    let compiled = relax::compile_sos_ratio(num, den, domain, order)?;
    let t1 = Instant::now();
    let solution = opts.solve(compiled.sdp())?;
    let t2 = Instant::now();
    Ok(Solved { rel: Relaxation { compiled, solution, order }, compile: t1 - t0, solve: t2 - t1 })
}

impl Solved {
    fn record(&self, res: &mut KernelResult) {
        res.solver.absorb(&self.rel);
        res.timings.compile_ms += ms(self.compile);
        res.timings.solve_ms += ms(self.solve);
        res.d_used = res.d_used.max(self.rel.order.d);
    }
}

/// Statuses whose primal point carries a usable bound.
fn has_bound(status: SolveStatus) -> bool {
    matches!(status, SolveStatus::Optimal | SolveStatus::Inaccurate)
}

fn solver_error(rel: &Relaxation) -> Error {
    Error::Solver(format!("relaxation ended with status {}", rel.status().as_str()))
}

/// Nearest point of a canonical domain (Euclidean projection).
pub fn project_to_domain(kind: DomainKind, u: &[f64]) -> Vec<f64> {
    match kind {
        DomainKind::Triangle => {
            let (mut a, mut b) = (u[0].max(0.0), u[1].max(0.0));
            let s = a + b;
            if s > 1.0 {
                let shift = (s - 1.0) / 2.0;
                a -= shift;
                b -= shift;
                if a < 0.0 {
                    (a, b) = (0.0, 1.0);
                } else if b < 0.0 {
                    (a, b) = (1.0, 0.0);
                }
            }
            vec![a, b]
        }
        _ => u.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    }
}

fn split(u: &[f64], k1: usize) -> (Vec<f64>, Vec<f64>) {
    (u[..k1].to_vec(), u[k1..].to_vec())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Unit vector drawn from the seeded generator.
fn symmetry_direction(k: usize, seed: u64) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `sum_j (a_j - t_j b)^2` and `b^2` for a shape.
fn squared_distance_ratio(sf: &ShapeFunction, target: &[f64]) -> (Polynomial, Polynomial) {
    let mut num = Polynomial::zero(sf.k());
    for (a, t) in sf.numerators.iter().zip(target) {
        let diff = a - &sf.denominator.scale(*t);
        num = &num + &(&diff * &diff);
    }
    (num, &sf.denominator * &sf.denominator)
}

fn check_dim(sf: &ShapeFunction, n: usize) -> Result<()> {
    if sf.dim() != n {
        return Err(Error::DimensionMismatch { expected: sf.dim(), found: n });
    }
    Ok(())
}
