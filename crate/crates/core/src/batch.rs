//! Randomized experiments: sample instances, run a kernel, check each answer
//! against the reference solver and tabulate.

use crate::error::{Error, Result};
use crate::kernels::{self, Decision, KernelKind, KernelOptions, KernelResult};
use crate::oracle::{self, OracleQuery, Verdict};
use crate::patch::{PatchKind, PatchSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sosgeom_sdp::SolverSettings;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Control points (and targets) with i.i.d. standard normal coordinates.
    #[default]
    StandardNormal,
    /// CCD pairs: standard normal, then patches shifted by `(0,0,+-s)` and
    /// velocities by `(0,0,-+s)`, `s = sqrt(2)/2`.
    CcdShifted,
}

fn default_t_max() -> f64 {
    1.0
}

fn default_tol() -> f64 {
    oracle::COMPARE_TOL
}

fn default_density() -> usize {
    oracle::DEFAULT_DENSITY
}

fn default_hex_noise() -> f64 {
    0.1
}

fn default_samples() -> usize {
    10_000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: KernelKind,
    pub patch_kind: PatchKind,
    /// Relaxation degree; the kernel default when absent.
    #[serde(default)]
    pub d: Option<usize>,
    pub instances: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
    /// Directory receiving `results.csv`, `summary.json`, `instances/` and
    /// the plot files.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Agreement threshold for the oracle comparison.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// First oracle density; doubled up to 160 while answers disagree.
    #[serde(default = "default_density")]
    pub density: usize,
    /// Standard deviation of the corner perturbation for random hexes.
    #[serde(default = "default_hex_noise")]
    pub hex_noise: f64,
    /// Points sampled when checking enclosing shapes.
    #[serde(default = "default_samples")]
    pub containment_samples: usize,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(problem: KernelKind, patch_kind: PatchKind, instances: usize, seed: u64) -> Self {
        ExperimentConfig {
            problem,
            patch_kind,
            d: None,
            instances,
            seed,
            sampling: if problem == KernelKind::Ccd { Sampling::CcdShifted } else { Sampling::StandardNormal },
            output_dir: None,
            t_max: default_t_max(),
            tol: default_tol(),
            density: default_density(),
            hex_noise: default_hex_noise(),
            containment_samples: default_samples(),
            jobs: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 {
            return Err(Error::Config("instance count must be at least 1".into()));
        }
        if self.patch_kind.fixed_count().is_none() {
            return Err(Error::Config(format!("cannot sample random {} patches", self.patch_kind.name())));
        }
        if (self.problem == KernelKind::Hex) != (self.patch_kind == PatchKind::TrilinearHex) {
            return Err(Error::Config("hex validity runs exactly on trilinear-hex patches".into()));
        }
        if self.sampling == Sampling::CcdShifted && self.problem != KernelKind::Ccd {
            return Err(Error::Config("ccd-shifted sampling only applies to ccd".into()));
        }
        if !(self.t_max > 0.0) || !(self.tol > 0.0) || self.density == 0 {
            return Err(Error::Config("t_max, tol and density must be positive".into()));
        }
        Ok(())
    }

    /// Oracle densities tried in order.
    pub fn densities(&self) -> Vec<usize> {
        let mut out = vec![self.density];
        while *out.last().unwrap() * 2 <= *oracle::ESCALATION.last().unwrap() {
            out.push(out.last().unwrap() * 2);
        }
        out
    }
}

/// A sampled problem instance.
#[derive(Clone, Debug, Serialize)]
pub struct Instance {
    pub id: usize,
    pub patches: Vec<PatchSpec>,
    /// Velocities per patch (CCD only).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub velocities: Vec<Vec<Vec<f64>>>,
    /// CP target point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
}

fn normal_points(rng: &mut ChaCha8Rng, count: usize, dim: usize, shift_z: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|j| {
                    let v: f64 = StandardNormal.sample(rng);
                    if j == 2 { v + shift_z } else { v }
                })
                .collect()
        })
        .collect()
}

fn embed_dim(kind: PatchKind) -> usize {
    match kind {
        PatchKind::QuadraticBezierCurve | PatchKind::CubicBezierCurve => 2,
        _ => 3,
    }
}

/// Instance `id` of an experiment; independent of every other instance.
pub fn sample_instance(cfg: &ExperimentConfig, id: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(id as u64);
    let kind = cfg.patch_kind;
    let count = kind.fixed_count().unwrap_or(0);
    let dim = embed_dim(kind);
    let mut inst = Instance { id, patches: Vec::new(), velocities: Vec::new(), target: None };
    if kind == PatchKind::TrilinearHex {
        let pts = (0..8)
            .map(|i| {
                (0..3)
                    .map(|a| {
                        let v: f64 = StandardNormal.sample(&mut rng);
                        ((i >> a) & 1) as f64 + cfg.hex_noise * v
                    })
                    .collect()
            })
            .collect();
        inst.patches.push(PatchSpec::new(kind, pts));
        return inst;
    }
    let shift = std::f64::consts::FRAC_1_SQRT_2;
    match cfg.problem {
        KernelKind::Ssi => {
            for _ in 0..2 {
                inst.patches.push(PatchSpec::new(kind, normal_points(&mut rng, count, dim, 0.0)));
            }
        }
        KernelKind::Ccd => {
            let s = if cfg.sampling == Sampling::CcdShifted { shift } else { 0.0 };
            for sign in [1.0, -1.0] {
                inst.patches.push(PatchSpec::new(kind, normal_points(&mut rng, count, dim, sign * s)));
            }
            for sign in [-1.0, 1.0] {
                inst.velocities.push(normal_points(&mut rng, count, dim, sign * s));
            }
        }
        _ => {
            inst.patches.push(PatchSpec::new(kind, normal_points(&mut rng, count, dim, 0.0)));
            if cfg.problem == KernelKind::Cp {
                inst.target = normal_points(&mut rng, 1, dim, 0.0).pop();
            }
        }
    }
    inst
}

/// Runs the kernel an instance asks for.
pub fn run_kernel(kind: KernelKind, inst: &Instance, t_max: f64, opts: &KernelOptions) -> Result<KernelResult> {
    let p = &inst.patches;
    match kind {
        KernelKind::Cp => kernels::closest_point(&p[0], inst.target.as_deref().unwrap_or(&[]), opts),
        KernelKind::Mbb => kernels::min_aabb(&p[0], opts),
        KernelKind::Pd => kernels::diameter(&p[0], opts),
        KernelKind::Ssi => kernels::surface_surface_intersection(&p[0], &p[1], opts),
        KernelKind::Si => kernels::self_intersection(&p[0], opts),
        KernelKind::Ccd => kernels::continuous_collision(&p[0], &inst.velocities[0], &p[1], &inst.velocities[1], t_max, opts),
        KernelKind::Mss => kernels::min_surrounding_sphere(&p[0], opts),
        KernelKind::Mee => kernels::min_enclosing_ellipsoid(&p[0], opts),
        KernelKind::Hex => kernels::hex_validity(&p[0], opts),
    }
}

/// Reference check for one result: oracle comparison for the contact and
/// bound kernels, sampled containment for enclosing shapes, and a grid
/// minimum for hex validity.
pub fn check_result(cfg: &ExperimentConfig, inst: &Instance, res: &KernelResult) -> Result<(Verdict, Option<usize>)> {
    let p = &inst.patches;
    let q = match cfg.problem {
        KernelKind::Cp => OracleQuery::Cp { patch: &p[0], target: inst.target.as_deref().unwrap_or(&[]) },
        KernelKind::Mbb => OracleQuery::Mbb { patch: &p[0] },
        KernelKind::Pd => OracleQuery::Pd { patch: &p[0] },
        KernelKind::Ssi => OracleQuery::Ssi { a: &p[0], b: &p[1] },
        KernelKind::Si => OracleQuery::Si { patch: &p[0] },
        KernelKind::Ccd => OracleQuery::Ccd { a: &p[0], va: &inst.velocities[0], b: &p[1], vb: &inst.velocities[1], t_max: cfg.t_max },
        KernelKind::Mss | KernelKind::Mee => {
            let pts = oracle::sample_surface(&p[0], cfg.containment_samples, cfg.seed ^ inst.id as u64)?;
            let inside = |x: &Vec<f64>| match (&res.sphere, &res.ellipsoid) {
                (Some(s), _) => s.contains(x, 1e-6),
                (_, Some(e)) => e.contains(x, 1e-6),
                _ => false,
            };
            let v = if pts.iter().all(inside) { Verdict::Match } else { Verdict::Mismatch };
            return Ok((v, None));
        }
        KernelKind::Hex => {
            let f = kernels::hex_jacobian(&p[0])?;
            let (min, _) = oracle::grid_minimum(&f, crate::patch::DomainKind::Cube, 50);
            let lambda = res.value.unwrap_or(f64::NAN);
            let v = if lambda <= min + 1e-4 && lambda >= min - 1e-3 { Verdict::Match } else { Verdict::Mismatch };
            return Ok((v, None));
        }
    };
    let v = oracle::verify(res, &q, cfg.tol, &cfg.densities())?;
    Ok((v.verdict, Some(v.density)))
}

/// One CSV row.
#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub instance: usize,
    pub decision: String,
    pub lambda: Option<f64>,
    pub exact: Option<bool>,
    pub certified: bool,
    pub verdict: String,
    pub oracle_density: Option<usize>,
    pub d_used: Option<usize>,
    pub solver_status: String,
    pub error: String,
    pub solve_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct InstanceRecord {
    pub instance: Instance,
    pub result: Option<KernelResult>,
    pub verdict: Verdict,
    pub oracle_density: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub instances: usize,
    pub errors: usize,
    pub pct_correct: f64,
    pub pct_exact: f64,
    pub pct_positive: f64,
    pub median_solve_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BatchReport {
    pub config: ExperimentConfig,
    pub records: Vec<InstanceRecord>,
    pub summary: Summary,
}

impl BatchReport {
    pub fn rows(&self) -> Vec<Row> {
        self.records
            .iter()
            .map(|r| {
                let res = r.result.as_ref();
                Row {
                    instance: r.instance.id,
                    decision: res.and_then(|x| x.decision).map(decision_name).unwrap_or_default().to_string(),
                    lambda: res.and_then(|x| x.value),
                    exact: res.and_then(|x| x.recovery).map(|x| x.exact),
                    certified: res.is_some_and(|x| x.certified),
                    verdict: r.verdict.as_str().to_string(),
                    oracle_density: r.oracle_density,
                    d_used: res.map(|x| x.d_used),
                    solver_status: res.map(|x| x.solver.status).unwrap_or("").to_string(),
                    error: r.error.clone().unwrap_or_default(),
                    solve_ms: res.map_or(0.0, |x| x.timings.solve_ms),
                    total_ms: res.map_or(0.0, |x| x.timings.total_ms),
                }
            })
            .collect()
    }
}

pub fn decision_name(d: Decision) -> &'static str {
    match d {
        Decision::Intersects => "intersects",
        Decision::SelfIntersects => "self-intersects",
        Decision::Collides => "collides",
        Decision::None => "none",
        Decision::Valid => "valid",
        Decision::Invalid => "invalid",
        Decision::Unknown => "unknown",
    }
}

fn run_one(cfg: &ExperimentConfig, id: usize, opts: &KernelOptions) -> InstanceRecord {
    let instance = sample_instance(cfg, id);
    let mut rec = InstanceRecord { instance, result: None, verdict: Verdict::Inconclusive, oracle_density: None, error: None };
    match run_kernel(cfg.problem, &rec.instance, cfg.t_max, opts) {
        Ok(res) => {
            match check_result(cfg, &rec.instance, &res) {
                Ok((v, density)) => {
                    rec.verdict = v;
                    rec.oracle_density = density;
                }
                Err(e) => rec.error = Some(format!("oracle: {e}")),
            }
            rec.result = Some(res);
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

fn summarize(records: &[InstanceRecord]) -> Summary {
    let n = records.len();
    let pct = |c: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
    let mut times: Vec<f64> = records.iter().filter_map(|r| r.result.as_ref()).map(|r| r.timings.solve_ms).collect();
    times.sort_by(|a, b| a.total_cmp(b));
    let results = || records.iter().filter_map(|r| r.result.as_ref());
    Summary {
        instances: n,
        errors: records.iter().filter(|r| r.error.is_some()).count(),
        pct_correct: pct(records.iter().filter(|r| r.verdict == Verdict::Match).count()),
        pct_exact: pct(results().filter(|r| r.recovery.is_some_and(|x| x.exact)).count()),
        pct_positive: pct(results().filter(|r| r.decision.is_some_and(|d| d.is_positive())).count()),
        median_solve_ms: times.get(times.len() / 2).copied().unwrap_or(0.0),
    }
}

/// Runs every instance (in parallel up to `jobs`) and collects the results
/// in instance order.
pub fn run_batch(cfg: &ExperimentConfig, settings: &SolverSettings) -> Result<BatchReport> {
    cfg.validate()?;
    let opts = KernelOptions { d: cfg.d, seed: cfg.seed, settings: settings.clone(), capture: None };
    let work = || (0..cfg.instances).into_par_iter().map(|id| run_one(cfg, id, &opts)).collect::<Vec<_>>();
    let records = match cfg.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let summary = summarize(&records);
    Ok(BatchReport { config: cfg.clone(), records, summary })
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes `results.csv` (rows, then a summary row), `summary.json`,
/// `instances/<id>.json`, `plot.csv` and `plot.gp` into `dir`.
pub fn write_outputs(report: &BatchReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("instances"))?;
    let mut w = csv::Writer::from_path(dir.join("results.csv")).map_err(csv_error)?;
    for row in report.rows() {
        w.serialize(row).map_err(csv_error)?;
    }
    let s = &report.summary;
    w.write_record([
        "summary".to_string(),
        format!("correct={:.1}%", s.pct_correct),
        format!("exact={:.1}%", s.pct_exact),
        format!("positive={:.1}%", s.pct_positive),
        format!("errors={}", s.errors),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        format!("{:.3}", s.median_solve_ms),
        String::new(),
    ])
    .map_err(csv_error)?;
    w.flush()?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&serde_json::json!({
        "config": report.config,
        "summary": report.summary,
    }))?)?;
    for r in &report.records {
        let f = std::fs::File::create(dir.join("instances").join(format!("{:05}.json", r.instance.id)))?;
        serde_json::to_writer_pretty(f, r)?;
    }
    let mut plot = std::fs::File::create(dir.join("plot.csv"))?;
    writeln!(plot, "instance,lambda,solve_ms,match")?;
    for row in report.rows() {
        writeln!(
            plot,
            "{},{},{},{}",
            row.instance,
            row.lambda.map(|v| v.to_string()).unwrap_or_default(),
            row.solve_ms,
            u8::from(row.verdict == "match")
        )?;
    }
    std::fs::write(
        dir.join("plot.gp"),
        format!(
            "set datafile separator ','\nset terminal pngcairo size 900,600\nset output 'plot.png'\n\
             set title '{} on {} (d = {})'\nset xlabel 'instance'\nset ylabel 'solve time [ms]'\nset logscale y\n\
             plot 'plot.csv' using 1:($4==1?$3:1/0) title 'match' with points pt 7, \\\n     \
             'plot.csv' using 1:($4==0?$3:1/0) title 'other' with points pt 2\n",
            report.config.problem.name(),
            report.config.patch_kind.name(),
            report.config.d.map(|d| d.to_string()).unwrap_or_else(|| "default".into()),
        ),
    )?;
    Ok(())
}
