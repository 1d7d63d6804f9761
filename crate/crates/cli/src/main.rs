use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sosgeom::batch::{self, ExperimentConfig, Instance};
use sosgeom::kernels::{Decision, KernelKind, KernelOptions, KernelResult};
use sosgeom::oracle::{self, Verdict};
use sosgeom::patch::{load_patches, PatchSpec};
use sosgeom_sdp::sdpa::{read_sdpa, write_sdpa};
use sosgeom_sdp::{SdpProblem, SolverSettings};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

/// Sum-of-squares geometry queries on polynomial and rational patches.
///
/// Exit status: 0 when the query is decided, 2 when it is undecided or the
/// reference check does not confirm it, 1 on errors.
#[derive(Parser)]
#[command(name = "sosgeom", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one query and print the result as JSON.
    Solve(SolveArgs),
    /// Run a randomized experiment described by a JSON config.
    Batch(BatchArgs),
    /// Write the relaxations of a query in SDPA sparse format.
    ExportSdpa(ExportArgs),
}

#[derive(Args)]
struct Query {
    /// cp, mbb, pd, ssi, si, ccd, mss, mee or hex.
    #[arg(long)]
    problem: KernelKind,
    /// Relaxation degree; the kernel default when absent.
    #[arg(long)]
    degree: Option<usize>,
    /// Seed for symmetry-breaking directions.
    #[arg(long, env = "SOSGEOM_SEED", default_value_t = 0)]
    seed: u64,
    /// Target point for cp, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    target: Option<Vec<f64>>,
    /// Time horizon for ccd.
    #[arg(long, default_value_t = 1.0)]
    t_max: f64,
    /// Patch files; each holds one patch or an array of patches.
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    query: Query,
    /// Check the answer against the linearization oracle.
    #[arg(long)]
    verify: bool,
    /// Agreement threshold for the oracle check.
    #[arg(long, default_value_t = oracle::COMPARE_TOL)]
    tol_embedded: f64,
    /// First oracle grid density; doubled while the answers disagree.
    #[arg(long, default_value_t = oracle::DEFAULT_DENSITY)]
    density: usize,
    /// Also write the relaxations to this path.
    #[arg(long)]
    export_sdpa: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    config: PathBuf,
    /// Overrides the config's worker count.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the config's seed.
    #[arg(long, env = "SOSGEOM_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    tol_embedded: Option<f64>,
    #[arg(long)]
    density: Option<usize>,
    /// Overrides the config's output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    query: Query,
    /// Destination; several relaxations get `-1`, `-2`, ... before the extension.
    #[arg(long, short)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Batch(a) => run_batch(a),
        Command::ExportSdpa(a) => export(a),
    };
    match run {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_instance(q: &Query) -> Result<Instance> {
    let mut patches: Vec<PatchSpec> = Vec::new();
    for f in &q.files {
        patches.extend(load_patches(f).with_context(|| format!("reading {}", f.display()))?);
    }
    let need = q.problem.arity();
    if patches.len() != need {
        bail!("{} takes {need} patch(es), got {}", q.problem.name(), patches.len());
    }
    let velocities = if q.problem == KernelKind::Ccd {
        patches
            .iter()
            .enumerate()
            .map(|(i, p)| p.velocities.clone().ok_or_else(|| anyhow!("patch {i}: ccd needs `velocities`")))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    if q.problem == KernelKind::Cp && q.target.is_none() {
        bail!("cp needs --target");
    }
    Ok(Instance { id: 0, patches, velocities, target: q.target.clone() })
}

fn options(q: &Query, capture: bool) -> KernelOptions {
    KernelOptions {
        d: q.degree,
        seed: q.seed,
        settings: SolverSettings::default(),
        capture: capture.then(|| Arc::new(Mutex::new(Vec::new()))),
    }
}

fn is_decided(r: &KernelResult) -> bool {
    match r.decision {
        Some(Decision::Unknown) => false,
        Some(_) => true,
        None => r.value.is_some(),
    }
}

fn solve(a: SolveArgs) -> Result<u8> {
    let inst = load_instance(&a.query)?;
    let opts = options(&a.query, a.export_sdpa.is_some());
    let res = batch::run_kernel(a.query.problem, &inst, a.query.t_max, &opts)?;
    let mut code = if is_decided(&res) { 0 } else { 2 };
    let mut out = res.to_json();
    if a.verify {
        let mut cfg = ExperimentConfig::new(a.query.problem, inst.patches[0].kind, 1, a.query.seed);
        cfg.t_max = a.query.t_max;
        cfg.tol = a.tol_embedded;
        cfg.density = a.density;
        let (verdict, density) = batch::check_result(&cfg, &inst, &res)?;
        if verdict != Verdict::Match {
            code = 2;
        }
        out["check"] = serde_json::json!({ "verdict": verdict.as_str(), "oracle_density": density });
    }
    if let Some(path) = &a.export_sdpa {
        write_captured(&opts, path)?;
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(code)
}

fn run_batch(a: BatchArgs) -> Result<u8> {
    let mut cfg = ExperimentConfig::load(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    if a.jobs.is_some() {
        cfg.jobs = a.jobs;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.degree.is_some() {
        cfg.d = a.degree;
    }
    if let Some(t) = a.tol_embedded {
        cfg.tol = t;
    }
    if let Some(d) = a.density {
        cfg.density = d;
    }
    if a.output.is_some() {
        cfg.output_dir = a.output;
    }
    cfg.validate()?;
    let report = batch::run_batch(&cfg, &SolverSettings::default())?;
    if let Some(dir) = &cfg.output_dir {
        batch::write_outputs(&report, dir)?;
        eprintln!("wrote {}", dir.display());
    }
    println!("{}", serde_json::to_string_pretty(&report.summary)?);
    let all = report.records.iter().all(|r| r.verdict == Verdict::Match);
    Ok(if all { 0 } else { 2 })
}

fn export(a: ExportArgs) -> Result<u8> {
    let inst = load_instance(&a.query)?;
    let opts = options(&a.query, true);
    batch::run_kernel(a.query.problem, &inst, a.query.t_max, &opts)?;
    write_captured(&opts, &a.out)?;
    Ok(0)
}

fn numbered(path: &Path, i: usize) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match name.split_once('.') {
        Some((stem, ext)) => format!("{stem}-{i}.{ext}"),
        None => format!("{name}-{i}"),
    };
    path.with_file_name(name)
}

fn write_captured(opts: &KernelOptions, path: &Path) -> Result<()> {
    let problems = opts.capture.as_ref().expect("capture enabled").lock().expect("capture lock").clone();
    if problems.is_empty() {
        bail!("the query solved no relaxation");
    }
    for (i, p) in problems.iter().enumerate() {
        let dest = if problems.len() == 1 { path.to_path_buf() } else { numbered(path, i + 1) };
        write_one(p, &dest)?;
    }
    Ok(())
}

fn write_one(p: &SdpProblem, dest: &Path) -> Result<()> {
    let file = std::fs::File::create(dest).with_context(|| format!("creating {}", dest.display()))?;
    write_sdpa(p, std::io::BufWriter::new(file)).with_context(|| format!("writing {}", dest.display()))?;
    let back = read_sdpa(BufReader::new(std::fs::File::open(dest)?)).with_context(|| format!("re-reading {}", dest.display()))?;
    let sizes: Vec<usize> = p.blocks.iter().map(|b| b.size).collect();
    let back_sizes: Vec<usize> = back.blocks.iter().map(|b| b.size).collect();
    if sizes != back_sizes || back.num_constraints() != p.num_constraints() || back.num_free() != p.num_free() {
        bail!("{} does not round-trip", dest.display());
    }
    let entries: usize = p.constraints.iter().map(|c| c.entries.len() + c.free.len()).sum();
    eprintln!(
        "wrote {}: blocks {:?}, {} free, {} constraints, {} entries",
        dest.display(),
        sizes,
        p.num_free(),
        p.num_constraints(),
        entries
    );
    Ok(())
}
