use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sosgeom_sdp::certify::{farkas_violation, verify};
use sosgeom_sdp::{solve, Constraint, Entry, LogDet, SdpProblem, SolveStatus, SolverSettings};

fn settings() -> SolverSettings {
    SolverSettings::default()
}

#[test]
fn unconstrained_trace_minimum_is_zero() {
    let mut p = SdpProblem::new();
    p.add_block("X", 1);
    p.objective.entries.push(Entry::new(0, 0, 0, 1.0));
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!(sol.primal_objective.abs() < 1e-7, "{}", sol.primal_objective);
}

#[test]
fn smallest_t_with_t_one_one_t_psd() {
    // [[t, 1], [1, t]] PSD, minimize t.
    let mut p = SdpProblem::new();
    p.add_block("X", 2);
    let t = p.add_free("t");
    p.add_constraint(Constraint { entries: vec![Entry::new(0, 0, 0, 1.0)], free: vec![(t, -1.0)], rhs: 0.0 });
    p.add_constraint(Constraint { entries: vec![Entry::new(0, 1, 1, 1.0)], free: vec![(t, -1.0)], rhs: 0.0 });
    p.add_constraint(Constraint { entries: vec![Entry::new(0, 0, 1, 1.0)], free: vec![], rhs: 2.0 });
    p.objective.free.push((t, 1.0));
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.x_free[t] - 1.0).abs() < 1e-6, "t = {}", sol.x_free[t]);
    let v = verify(&p, &sol);
    assert!(v.primal_residual < 1e-7 && v.dual_residual < 1e-7);
}

#[test]
fn max_determinant_under_identity_bound() {
    // maximize log det B subject to B + S = I, S PSD.
    let n = 3;
    let mut p = SdpProblem::new();
    let b = p.add_block("B", n);
    let s = p.add_block("S", n);
    for i in 0..n {
        for j in i..n {
            p.add_constraint(Constraint {
                entries: vec![Entry::new(b, i, j, 1.0), Entry::new(s, i, j, 1.0)],
                free: vec![],
                rhs: if i == j { 1.0 } else { 0.0 },
            });
        }
    }
    p.objective.log_det = Some(LogDet { block: b, weight: 1.0 });
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((&sol.x[b] - DMatrix::identity(n, n)).norm() < 1e-5, "{}", sol.x[b]);
}

#[test]
fn log_det_with_linear_cost_matches_closed_form() {
    // minimize c x - log x over scalar x > 0 gives x = 1 / c.
    let mut p = SdpProblem::new();
    let b = p.add_block("B", 1);
    p.objective.entries.push(Entry::new(b, 0, 0, 4.0));
    p.objective.log_det = Some(LogDet { block: b, weight: 1.0 });
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.x[b][(0, 0)] - 0.25).abs() < 1e-6);
    assert!((sol.primal_objective - (1.0 + 4f64.ln())).abs() < 1e-6);
}

#[test]
fn negative_scalar_is_primal_infeasible() {
    let mut p = SdpProblem::new();
    p.add_block("X", 2);
    p.add_constraint(Constraint { entries: vec![Entry::new(0, 0, 0, 1.0), Entry::new(0, 1, 1, 1.0)], free: vec![], rhs: -1.0 });
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
    let (bty, viol) = farkas_violation(&p, &sol.y);
    assert!(bty > 0.0 && viol < 1e-6 * bty);
}

#[test]
fn unbounded_objective_is_dual_infeasible() {
    // X00 = t, minimize -X00.
    let mut p = SdpProblem::new();
    p.add_block("X", 2);
    let t = p.add_free("t");
    p.add_constraint(Constraint { entries: vec![Entry::new(0, 0, 1, 1.0)], free: vec![], rhs: 0.0 });
    p.add_constraint(Constraint { entries: vec![Entry::new(0, 0, 0, 1.0)], free: vec![(t, -1.0)], rhs: 0.0 });
    p.objective.entries.push(Entry::new(0, 0, 0, -1.0));
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::DualInfeasible);
}

#[test]
fn inconsistent_duplicate_rows_are_infeasible() {
    let mut p = SdpProblem::new();
    p.add_block("X", 1);
    p.add_constraint(Constraint { entries: vec![Entry::new(0, 0, 0, 1.0)], free: vec![], rhs: 1.0 });
    p.add_constraint(Constraint { entries: vec![Entry::new(0, 0, 0, 2.0)], free: vec![], rhs: 3.0 });
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
}

#[test]
fn consistent_duplicate_rows_are_dropped() {
    let mut p = SdpProblem::new();
    p.add_block("X", 2);
    p.add_constraint(Constraint { entries: vec![Entry::new(0, 0, 0, 1.0)], free: vec![], rhs: 1.0 });
    p.add_constraint(Constraint { entries: vec![Entry::new(0, 0, 0, 2.0)], free: vec![], rhs: 2.0 });
    p.add_constraint(Constraint { entries: vec![Entry::new(0, 1, 1, 1.0)], free: vec![], rhs: 1.0 });
    // minimize 2 X01: optimum -2 at X = [[1,-1],[-1,1]].
    p.objective.entries.push(Entry::new(0, 0, 1, 1.0));
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal_objective + 2.0).abs() < 1e-6);
    let v = verify(&p, &sol);
    assert!(v.primal_residual < 1e-6);
}

#[test]
fn invalid_settings_are_rejected() {
    let p = SdpProblem::new();
    let s = SolverSettings { gap_tol: -1.0, ..SolverSettings::default() };
    assert!(solve(&p, &s).is_err());
}

fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&a + a.transpose()) * 0.5
}

/// Builds an SDP whose optimum is known by construction: complementary
/// `X*`, `Z*` and an arbitrary `y*` fix `b` and `C`.
fn planted(seed: u64, n: usize, m: usize, rank: usize, with_free: bool) -> (SdpProblem, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = {
        let g = random_sym(&mut rng, n);
        SymmetricEigen::new(g).eigenvectors
    };
    let mut dx = DVector::zeros(n);
    let mut dz = DVector::zeros(n);
    for i in 0..n {
        if i < rank {
            dx[i] = 0.5 + rng.random::<f64>();
        } else {
            dz[i] = 0.5 + rng.random::<f64>();
        }
    }
    let xs = &q * DMatrix::from_diagonal(&dx) * q.transpose();
    let zs = &q * DMatrix::from_diagonal(&dz) * q.transpose();
    let ys: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let mats: Vec<DMatrix<f64>> = (0..m).map(|_| random_sym(&mut rng, n)).collect();
    let mut p = SdpProblem::new();
    p.add_block("X", n);
    let fcoef: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let xf_star = 0.7;
    if with_free {
        p.add_free("s");
    }
    let mut c = zs.clone();
    for (i, a) in mats.iter().enumerate() {
        c += a * ys[i];
        let mut entries = Vec::new();
        for r in 0..n {
            for col in r..n {
                entries.push(Entry::new(0, r, col, a[(r, col)]));
            }
        }
        let mut rhs = a.dot(&xs);
        let mut free = vec![];
        if with_free {
            free.push((0, fcoef[i]));
            rhs += fcoef[i] * xf_star;
        }
        p.add_constraint(Constraint { entries, free, rhs });
    }
    for r in 0..n {
        for col in r..n {
            p.objective.entries.push(Entry::new(0, r, col, c[(r, col)]));
        }
    }
    let mut opt = c.dot(&xs);
    if with_free {
        let cf: f64 = fcoef.iter().zip(&ys).map(|(a, y)| a * y).sum();
        p.objective.free.push((0, cf));
        opt += cf * xf_star;
    }
    (p, opt)
}

#[test]
fn planted_instances_reach_known_optimum() {
    for seed in 0..6u64 {
        let with_free = seed % 2 == 1;
        let (p, opt) = planted(seed, 6, 10, 2, with_free);
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}");
        let rel = (sol.primal_objective - opt).abs() / (1.0 + opt.abs());
        assert!(rel < 1e-6, "seed {seed}: {} vs {}", sol.primal_objective, opt);
        let v = verify(&p, &sol);
        assert!(v.min_eig_x > -1e-7 && v.min_eig_z > -1e-7, "seed {seed}");
        assert!(v.primal_residual < 1e-6 * (1.0 + opt.abs()), "seed {seed}");
    }
}

#[test]
fn certify_flags_perturbed_primal() {
    use sosgeom_sdp::certify::certify;
    let (p, _) = planted(11, 4, 6, 1, false);
    let st = settings();
    let mut sol = solve(&p, &st).unwrap();
    let rep = certify(&p, &sol, &st);
    assert!(rep.consistent(), "{:?}", rep.flags);
    assert!(rep.verification.primal_residual <= 1e-8 * (1.0 + p.constraints.iter().map(|c| c.rhs.abs()).sum::<f64>()));
    sol.x[0][(0, 0)] += 1e-3;
    let rep = certify(&p, &sol, &st);
    assert!(rep.verification.primal_residual >= 1e-4);
    assert!(!rep.consistent());
}

#[test]
fn scaling_the_objective_keeps_the_minimizer() {
    let (p, _) = planted(5, 5, 8, 2, false);
    let mut q = p.clone();
    for e in q.objective.entries.iter_mut() {
        e.value *= 10.0;
    }
    let a = solve(&p, &settings()).unwrap();
    let b = solve(&q, &settings()).unwrap();
    assert!((&a.x[0] - &b.x[0]).norm() < 1e-6);
}

#[test]
fn repeated_solves_are_identical() {
    let (p, _) = planted(3, 5, 8, 2, true);
    let a = solve(&p, &settings()).unwrap();
    let b = solve(&p, &settings()).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.x[0], b.x[0]);
    assert_eq!(a.y, b.y);
}
