use proptest::prelude::*;
use sosgeom_sdp::sdpa::{read_sdpa, write_sdpa};
use sosgeom_sdp::{solve, Constraint, Entry, LogDet, SdpError, SdpProblem, SolveStatus, SolverSettings};
use std::io::BufReader;

fn sample_problem() -> SdpProblem {
    let mut p = SdpProblem::new();
    p.add_block("X", 2);
    let t = p.add_free("t");
    p.add_constraint(Constraint { entries: vec![Entry::new(0, 0, 0, 1.0)], free: vec![(t, -1.0)], rhs: 0.0 });
    p.add_constraint(Constraint { entries: vec![Entry::new(0, 1, 1, 1.0)], free: vec![(t, -1.0)], rhs: 0.0 });
    p.add_constraint(Constraint { entries: vec![Entry::new(0, 0, 1, 1.0)], free: vec![], rhs: 2.0 });
    p.objective.free.push((t, 1.0));
    p
}

#[test]
fn round_trip_preserves_optimum() {
    let p = sample_problem();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.dat-s");
    write_sdpa(&p, std::fs::File::create(&path).unwrap()).unwrap();
    let q = read_sdpa(BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(q.num_constraints(), p.num_constraints());
    assert_eq!(q.num_free(), 1);
    let a = solve(&p, &SolverSettings::default()).unwrap();
    let b = solve(&q, &SolverSettings::default()).unwrap();
    assert_eq!(b.status, SolveStatus::Optimal);
    assert!((a.primal_objective - b.primal_objective).abs() < 1e-7);
}

#[test]
fn diagonal_blocks_become_scalar_blocks() {
    let text = "\"toy\"\n1 =mdim\n2 =nblocks\n{2, -2}\n1.0\n0 1 1 1 -1.0\n0 2 2 2 -3.0\n1 1 1 1 1.0\n1 2 1 1 1.0\n1 2 2 2 1.0\n";
    let p = read_sdpa(BufReader::new(text.as_bytes())).unwrap();
    assert_eq!(p.blocks.len(), 3);
    assert!(p.blocks.iter().skip(1).all(|b| b.size == 1));
    // minimize X00 + 3 d2 with X00 + d1 + d2 = 1: optimum 0 (all weight on d1).
    let s = solve(&p, &SolverSettings::default()).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!(s.primal_objective.abs() < 1e-6);
}

#[test]
fn malformed_input_reports_line() {
    let text = "1\n1\n2\n1.0\n1 1 1 x 1.0\n";
    match read_sdpa(BufReader::new(text.as_bytes())) {
        Err(SdpError::Format { line, .. }) => assert_eq!(line, 5),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn log_det_cannot_be_exported() {
    let mut p = SdpProblem::new();
    p.add_block("B", 1);
    p.objective.log_det = Some(LogDet { block: 0, weight: 1.0 });
    assert!(matches!(write_sdpa(&p, Vec::new()), Err(SdpError::LogDetNotExportable)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimal_status_meets_reported_tolerances(
        diag in proptest::collection::vec(-3.0f64..3.0, 3),
        off in -2.0f64..2.0,
        rhs in 0.1f64..4.0,
    ) {
        // minimize <C, X> subject to tr X = rhs.
        let mut p = SdpProblem::new();
        p.add_block("X", 3);
        p.add_constraint(Constraint {
            entries: (0..3).map(|i| Entry::new(0, i, i, 1.0)).collect(),
            free: vec![],
            rhs,
        });
        for (i, d) in diag.iter().enumerate() {
            p.objective.entries.push(Entry::new(0, i, i, *d));
        }
        p.objective.entries.push(Entry::new(0, 0, 2, off));
        let st = SolverSettings::default();
        let s = solve(&p, &st).unwrap();
        prop_assert_eq!(s.status, SolveStatus::Optimal);
        prop_assert!(s.primal_residual <= st.feas_tol && s.dual_residual <= st.feas_tol);
        prop_assert!(s.relative_gap() <= st.gap_tol * 1.0001);
        // Closed form: rhs times the smallest eigenvalue of C.
        let c = p.objective_matrix(0);
        let lmin = nalgebra::SymmetricEigen::new(c).eigenvalues.min();
        prop_assert!((s.primal_objective - rhs * lmin).abs() < 1e-6 * (1.0 + (rhs * lmin).abs()));
    }

    #[test]
    fn writer_output_reparses(vals in proptest::collection::vec(-1e3f64..1e3, 4)) {
        let mut p = SdpProblem::new();
        p.add_block("A", 2);
        p.add_free("f");
        p.add_constraint(Constraint {
            entries: vec![Entry::new(0, 0, 1, vals[0]), Entry::new(0, 1, 1, vals[1])],
            free: vec![(0, vals[2])],
            rhs: vals[3],
        });
        let mut buf = Vec::new();
        write_sdpa(&p, &mut buf).unwrap();
        let q = read_sdpa(BufReader::new(buf.as_slice())).unwrap();
        prop_assert_eq!(q.constraints[0].rhs, vals[3]);
        let e = &q.constraints[0].entries;
        let nz: Vec<f64> = e.iter().map(|e| e.value).collect();
        let expect: Vec<f64> = vals[..2].iter().copied().filter(|v| *v != 0.0).collect();
        prop_assert_eq!(nz, expect);
        let f: Vec<f64> = q.constraints[0].free.iter().map(|f| f.1).collect();
        prop_assert_eq!(f, if vals[2] != 0.0 { vec![vals[2]] } else { vec![] });
    }
}
