use proptest::prelude::*;
use sosgeom::oracle::grid_minimum;
use sosgeom::patch::{canonical_domain, DomainKind};
use sosgeom::poly::{MultiIndex, Polynomial};
use sosgeom::relax::{solve_moment, solve_sos, RelaxationOrder, TemplateProblem};
use sosgeom_sdp::{SolveStatus, SolverSettings};

fn problem() -> impl Strategy<Value = (DomainKind, TemplateProblem)> {
    let kind = prop_oneof![Just(DomainKind::Triangle), Just(DomainKind::Square), Just(DomainKind::Interval)];
    kind.prop_flat_map(|kind| {
        let k = kind.dim();
        proptest::collection::vec((proptest::collection::vec(0u32..3, k), -2.0f64..2.0), 1..7).prop_map(move |terms| {
            let f = Polynomial::from_terms(k, terms.into_iter().map(|(e, c)| (MultiIndex::new(e), c))).unwrap();
            (kind, TemplateProblem::new(f, canonical_domain(kind)).unwrap())
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bounds_rise_with_degree_and_stay_below_samples((kind, t) in problem()) {
        let settings = SolverSettings::default();
        let base = RelaxationOrder::lifted(0, &t).r();
        let (grid, _) = grid_minimum(&t.objective, kind, 60);
        let mut prev = f64::NEG_INFINITY;
        for r in base..base + 3 {
            let rel = solve_sos(&t, RelaxationOrder::new(2 * r), &settings).unwrap();
            prop_assert_eq!(rel.status(), SolveStatus::Optimal);
            let lam = rel.lower_bound();
            prop_assert!(lam >= prev - 1e-6, "r={} {} < {}", r, lam, prev);
            prop_assert!(lam <= grid + 1e-4, "r={} {} > grid {}", r, lam, grid);
            prop_assert!(rel.certificate_ok(), "{:?}", rel.recovery());
            let rep = rel.recovery();
            if rep.exact {
                let u = rel.minimizer().unwrap();
                for g in &t.domain.inequalities {
                    prop_assert!(g.eval(&u) >= -1e-6, "u={:?}", u);
                }
            }
            prev = lam;
        }
    }

    #[test]
    fn moment_and_sos_optima_agree((_kind, t) in problem()) {
        let settings = SolverSettings::default();
        let order = RelaxationOrder::lifted(0, &t);
        let sos = solve_sos(&t, order, &settings).unwrap();
        let mom = solve_moment(&t, order, &settings).unwrap();
        prop_assert_eq!(mom.solution.status, SolveStatus::Optimal);
        let gap = mom.value() - sos.lower_bound();
        prop_assert!(gap.abs() <= 1e-6, "moment {} sos {}", mom.value(), sos.lower_bound());
    }
}
