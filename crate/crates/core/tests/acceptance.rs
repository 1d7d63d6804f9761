//! Acceptance suite: one PASS/FAIL line per criterion.  Run with
//! `cargo test --release -p sosgeom --test acceptance`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sosgeom::batch::{run_batch, sample_instance, BatchReport, ExperimentConfig};
use sosgeom::kernels::*;
use sosgeom::oracle::{sample_surface, Verdict};
use sosgeom::patch::{shape_function, PatchKind, PatchSpec};
use sosgeom::poly::Polynomial;
use sosgeom::relax::{solve_moment, solve_sos, RelaxationOrder, TemplateProblem};
use sosgeom_sdp::certify::verify;
use sosgeom_sdp::sdpa::{read_sdpa, write_sdpa};
use sosgeom_sdp::{solve, Constraint, Entry, LogDet, SdpProblem, SolveStatus, SolverSettings};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

const SEED: u64 = 20261016;
const WITNESS_TOL: f64 = 1e-2;
const MBB_SIDE_TOL: f64 = 1e-3;
const RANK_TOL: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, limit: Option<Duration>, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = run();
    let took = start.elapsed();
    let in_time = limit.is_none_or(|l| took <= l);
    let pass = out.pass && in_time;
    let budget = limit.map(|l| format!(" (limit {}s)", l.as_secs())).unwrap_or_default();
    println!(
        "{} {id:>2} {name}: {}; {:.1}s{budget}",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64()
    );
    pass
}

fn batch(problem: KernelKind, patch: PatchKind, n: usize, d: usize, tol: f64) -> BatchReport {
    let mut cfg = ExperimentConfig::new(problem, patch, n, SEED);
    cfg.d = Some(d);
    cfg.tol = tol;
    run_batch(&cfg, &SolverSettings::default()).expect("batch runs")
}

fn count(r: &BatchReport, f: impl Fn(&sosgeom::batch::InstanceRecord) -> bool) -> usize {
    r.records.iter().filter(|x| f(x)).count()
}

fn matched(r: &BatchReport) -> usize {
    count(r, |x| x.verdict == Verdict::Match)
}

fn positive(x: &sosgeom::batch::InstanceRecord) -> bool {
    x.result.as_ref().and_then(|r| r.decision).is_some_and(|d| d.is_positive())
}

fn gap_ok(x: &sosgeom::batch::InstanceRecord) -> bool {
    x.result.as_ref().and_then(|r| r.witness_gap).is_some_and(|g| g <= WITNESS_TOL)
}

fn c1() -> Outcome {
    let r = batch(KernelKind::Cp, PatchKind::QuadraticTriangle, 50, 3, WITNESS_TOL);
    let m = matched(&r);
    Outcome { pass: m == 50, detail: format!("{m}/50 match") }
}

fn c2() -> Outcome {
    let q = batch(KernelKind::Mbb, PatchKind::QuadraticTriangle, 50, 2, MBB_SIDE_TOL);
    let c = batch(KernelKind::Mbb, PatchKind::CubicTriangle, 20, 4, MBB_SIDE_TOL);
    let exact = |r: &BatchReport| count(r, |x| x.result.as_ref().and_then(|r| r.recovery).is_some_and(|rec| rec.rank_ratio <= RANK_TOL));
    let (mq, mc, eq, ec) = (matched(&q), matched(&c), exact(&q), exact(&c));
    Outcome {
        pass: mq == 50 && mc == 20 && eq == 50 && ec == 20,
        detail: format!("quadratic {mq}/50 boxes, {eq}/50 exact; cubic {mc}/20 boxes, {ec}/20 exact"),
    }
}

fn c3() -> Outcome {
    let r = batch(KernelKind::Ssi, PatchKind::QuadraticTriangle, 50, 5, WITNESS_TOL);
    let m = matched(&r);
    let pos = count(&r, positive);
    let gaps = count(&r, |x| positive(x) && gap_ok(x));
    let frac = pos as f64 / 50.0;
    Outcome {
        pass: m == 50 && (0.46..=0.74).contains(&frac) && gaps == pos,
        detail: format!("{m}/50 match, {:.0}% intersect, {gaps}/{pos} witness gaps <= {WITNESS_TOL:e}", 100.0 * frac),
    }
}

fn c4() -> Outcome {
    let r = batch(KernelKind::Si, PatchKind::QuadraticTriangle, 50, 4, WITNESS_TOL);
    let m = matched(&r);
    let pos = count(&r, positive);
    let good = count(&r, |x| {
        positive(x)
            && gap_ok(x)
            && x.result.as_ref().is_some_and(|res| {
                let (a, b) = (&res.u[0], &res.u[1]);
                a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt() >= 1e-3
            })
    });
    Outcome { pass: m == 50 && good == pos, detail: format!("{m}/50 match, {good}/{pos} witnesses separated and closed") }
}

/// The comparison already requires `|t_kernel - t_oracle| <= tol` (both
/// normalized by `t_max`) for colliding pairs.
fn c5() -> Outcome {
    let r = batch(KernelKind::Ccd, PatchKind::QuadraticTriangle, 20, 5, WITNESS_TOL);
    let m = matched(&r);
    let pos = count(&r, positive);
    Outcome { pass: m == 20, detail: format!("{m}/20 match ({pos} colliding)") }
}

/// `|x(u) - t|^2` for a polynomial patch.
fn squared_distance(patch: &PatchSpec, t: &[f64]) -> TemplateProblem {
    let sf = shape_function(patch).unwrap();
    let k = sf.k();
    let f = sf.numerators.iter().zip(t).fold(Polynomial::zero(k), |acc, (a, c)| {
        let d = a.add_constant(-c);
        &acc + &(&d * &d)
    });
    TemplateProblem::new(f, sf.domain).unwrap()
}

/// Kernel degree `d` fixes multipliers of degree `d` on the linear domain
/// constraints, i.e. Gram order `floor(d/2) + 1`.  The 1e-8 monotonicity
/// margin is below the default relative gap on bounds of size ~10, so these
/// solves run at tighter tolerances.
fn c6() -> Outcome {
    let settings = SolverSettings { gap_tol: 1e-11, feas_tol: 1e-11, ..SolverSettings::default() };
    let cfg = ExperimentConfig::new(KernelKind::Cp, PatchKind::QuadraticTriangle, 30, SEED);
    let (mut mono, mut dual, mut worst_drop, mut worst_gap) = (0, 0, 0.0f64, 0.0f64);
    for id in 0..30 {
        let inst = sample_instance(&cfg, id);
        let t = squared_distance(&inst.patches[0], inst.target.as_deref().unwrap());
        let mut prev = f64::NEG_INFINITY;
        let (mut ok_m, mut ok_d) = (true, true);
        for d in [2usize, 3, 4] {
            let order = RelaxationOrder::new(2 * (d / 2 + 1));
            let sos = solve_sos(&t, order, &settings).unwrap();
            let mom = solve_moment(&t, order, &settings).unwrap();
            let lam = sos.lower_bound();
            let ok = |s: SolveStatus| matches!(s, SolveStatus::Optimal | SolveStatus::Inaccurate);
            worst_drop = worst_drop.max(prev - lam);
            let gap = (mom.value() - lam).abs();
            worst_gap = worst_gap.max(gap);
            ok_m &= ok(sos.status()) && lam >= prev - 1e-8;
            ok_d &= ok(mom.solution.status) && gap <= 1e-6;
            prev = lam;
        }
        mono += usize::from(ok_m);
        dual += usize::from(ok_d);
    }
    Outcome {
        pass: mono == 30 && dual == 30,
        detail: format!("{mono}/30 monotone (worst drop {worst_drop:.1e}), {dual}/30 dual-consistent (worst gap {worst_gap:.1e})"),
    }
}

fn c7() -> Outcome {
    let opts = KernelOptions::default();
    let cfg = ExperimentConfig::new(KernelKind::Mee, PatchKind::BicubicTensor, 20, SEED);
    let (mut contained, mut ordered_e, mut ordered_s, mut errors) = (0, 0, 0, 0);
    let le = |a: f64, b: f64| a <= b * (1.0 + 1e-8);
    for id in 0..20 {
        let p = &sample_instance(&cfg, id).patches[0];
        let (Ok(e), Ok(s), Ok(b)) = (min_enclosing_ellipsoid(p, &opts), min_surrounding_sphere(p, &opts), min_aabb(p, &opts)) else {
            errors += 1;
            continue;
        };
        let (e, s, b) = (e.ellipsoid.unwrap(), s.sphere.unwrap(), b.aabb.unwrap());
        let pts = sample_surface(p, 10_000, SEED ^ id as u64).unwrap();
        contained += usize::from(pts.iter().all(|x| e.contains(x, 1e-6) && s.contains(x, 1e-6)));
        ordered_e += usize::from(le(e.volume, s.volume()));
        ordered_s += usize::from(le(s.volume(), b.volume()));
    }
    Outcome {
        pass: errors == 0 && contained == 20 && ordered_e == 20 && ordered_s == 20,
        detail: format!(
            "{contained}/20 contain samples, Vol(MEE)<=Vol(MSS) {ordered_e}/20, Vol(MSS)<=Vol(MBB) {ordered_s}/20, {errors} errors"
        ),
    }
}

fn cube(mirror: bool) -> PatchSpec {
    let pts = (0..8)
        .map(|i| {
            let x = (i & 1) as f64;
            vec![if mirror { -x } else { x }, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]
        })
        .collect();
    PatchSpec::new(PatchKind::TrilinearHex, pts)
}

fn c8() -> Outcome {
    let opts = KernelOptions::default();
    let id = hex_validity(&cube(false), &opts).unwrap().value.unwrap();
    let mi = hex_validity(&cube(true), &opts).unwrap().value.unwrap();
    let r = batch(KernelKind::Hex, PatchKind::TrilinearHex, 20, 4, WITNESS_TOL);
    let m = matched(&r);
    let pass = (id - 1.0).abs() <= 1e-6 && (mi + 1.0).abs() <= 1e-6 && m == 20;
    Outcome { pass, detail: format!("identity {id:.9}, mirrored {mi:.9}, {m}/20 random within grid bounds") }
}

fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&a + a.transpose()) * 0.5
}

/// SDP with known optimum: complementary `X*`, `Z*` and random `y*` fix
/// `b` and `C`.
fn planted(seed: u64) -> (SdpProblem, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..9);
    let m = rng.random_range(2..2 * n);
    let rank = rng.random_range(1..n);
    let q = SymmetricEigen::new(random_sym(&mut rng, n)).eigenvectors;
    let d = |lo: usize, hi: usize, rng: &mut ChaCha8Rng| {
        DVector::from_fn(n, |i, _| if i >= lo && i < hi { 0.5 + rng.random::<f64>() } else { 0.0 })
    };
    let dx = d(0, rank, &mut rng);
    let dz = d(rank, n, &mut rng);
    let xs = &q * DMatrix::from_diagonal(&dx) * q.transpose();
    let zs = &q * DMatrix::from_diagonal(&dz) * q.transpose();
    let mut p = SdpProblem::new();
    p.add_block("X", n);
    let mut c = zs;
    for _ in 0..m {
        let a = random_sym(&mut rng, n);
        let y: f64 = rng.sample(StandardNormal);
        c += &a * y;
        let entries = (0..n).flat_map(|r| (r..n).map(move |col| (r, col))).map(|(r, col)| Entry::new(0, r, col, a[(r, col)])).collect();
        p.add_constraint(Constraint { entries, free: vec![], rhs: a.dot(&xs) });
    }
    for r in 0..n {
        for col in r..n {
            p.objective.entries.push(Entry::new(0, r, col, c[(r, col)]));
        }
    }
    (p, c.dot(&xs))
}

fn toy_problems() -> bool {
    let st = SolverSettings::default();
    let mut a = SdpProblem::new();
    a.add_block("X", 1);
    a.objective.entries.push(Entry::new(0, 0, 0, 1.0));
    let ra = solve(&a, &st).unwrap();

    let mut b = SdpProblem::new();
    b.add_block("X", 2);
    let t = b.add_free("t");
    for i in 0..2 {
        b.add_constraint(Constraint { entries: vec![Entry::new(0, i, i, 1.0)], free: vec![(t, -1.0)], rhs: 0.0 });
    }
    b.add_constraint(Constraint { entries: vec![Entry::new(0, 0, 1, 1.0)], free: vec![], rhs: 2.0 });
    b.objective.free.push((t, 1.0));
    let rb = solve(&b, &st).unwrap();

    let mut c = SdpProblem::new();
    let blk = c.add_block("B", 3);
    let s = c.add_block("S", 3);
    for i in 0..3 {
        for j in i..3 {
            let rhs = if i == j { 1.0 } else { 0.0 };
            c.add_constraint(Constraint { entries: vec![Entry::new(blk, i, j, 1.0), Entry::new(s, i, j, 1.0)], free: vec![], rhs });
        }
    }
    c.objective.log_det = Some(LogDet { block: blk, weight: 1.0 });
    let rc = solve(&c, &st).unwrap();
    let logdet = rc.x[blk].determinant().ln();

    ra.status == SolveStatus::Optimal
        && ra.x[0][(0, 0)].abs() <= 1e-6
        && rb.status == SolveStatus::Optimal
        && (rb.x_free[t] - 1.0).abs() <= 1e-6
        && rc.status == SolveStatus::Optimal
        && (&rc.x[blk] - DMatrix::identity(3, 3)).norm() <= 1e-5
        && logdet.abs() <= 1e-5
}

fn c9() -> Outcome {
    let st = SolverSettings::default();
    let (mut good, mut worst_gap, mut worst_res, mut worst_abs, mut worst_opt) = (0, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for seed in 0..100 {
        let (p, opt) = planted(seed);
        let sol = solve(&p, &st).unwrap();
        let gap = (sol.primal_objective - sol.dual_objective).abs();
        // Residual relative to 1 + ||b||, the solver's own convention.
        let abs = verify(&p, &sol).primal_residual;
        let bnorm = p.constraints.iter().map(|c| c.rhs * c.rhs).sum::<f64>().sqrt();
        let res = abs / (1.0 + bnorm);
        let err = (sol.primal_objective - opt).abs();
        worst_gap = worst_gap.max(gap);
        worst_res = worst_res.max(res);
        worst_abs = worst_abs.max(abs);
        worst_opt = worst_opt.max(err);
        good += usize::from(sol.status == SolveStatus::Optimal && gap <= 1e-7 && res <= 1e-8 && err <= 1e-5);
    }
    let toys = toy_problems();
    Outcome {
        pass: good == 100 && toys,
        detail: format!(
            "{good}/100 planted (worst gap {worst_gap:.1e}, relative residual {worst_res:.1e} [absolute {worst_abs:.1e}], optimum error {worst_opt:.1e}); toys {}",
            if toys { "exact" } else { "wrong" }
        ),
    }
}

fn c10() -> Outcome {
    let st = SolverSettings::default();
    let cfg = ExperimentConfig::new(KernelKind::Cp, PatchKind::QuadraticTriangle, 10, SEED);
    let mut good = 0;
    let mut worst = 0.0f64;
    for id in 0..10 {
        let inst = sample_instance(&cfg, id);
        let sink = Arc::new(Mutex::new(Vec::new()));
        let opts = KernelOptions { capture: Some(sink.clone()), ..KernelOptions::default() };
        closest_point(&inst.patches[0], inst.target.as_deref().unwrap(), &opts).unwrap();
        let p = sink.lock().unwrap()[0].clone();
        let mut buf = Vec::new();
        write_sdpa(&p, &mut buf).unwrap();
        let back = read_sdpa(&buf[..]).unwrap();
        let (a, b) = (solve(&p, &st).unwrap(), solve(&back, &st).unwrap());
        let diff = (a.primal_objective - b.primal_objective).abs();
        worst = worst.max(diff);
        good += usize::from(diff <= 1e-9 && a.status == b.status);
    }
    Outcome { pass: good == 10, detail: format!("{good}/10 round trips agree (worst {worst:.1e})") }
}

fn main() {
    let min = |m: u64| Some(Duration::from_secs(60 * m));
    let results = [
        report(1, "CP correctness", min(2), c1),
        report(2, "MBB exactness", min(1), c2),
        report(3, "SSI detection", min(15), c3),
        report(4, "SI", min(10), c4),
        report(5, "CCD", min(90), c5),
        report(6, "degree monotonicity and duality", None, c6),
        report(7, "MEE/MSS properties", min(10), c7),
        report(8, "hex validity", None, c8),
        report(9, "SDP engine certification", None, c9),
        report(10, "SDPA round trip", None, c10),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria pass", results.len());
    if std::env::var_os("ACCEPTANCE_STRICT").is_some() && passed < results.len() {
        std::process::exit(1);
    }
}
