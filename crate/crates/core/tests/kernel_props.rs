use proptest::prelude::*;
use sosgeom::batch::{sample_instance, ExperimentConfig};
use sosgeom::kernels::*;
use sosgeom::oracle::grid_minimum;
use sosgeom::patch::{canonical_domain, shape_function, PatchKind, PatchSpec};
use sosgeom::poly::Polynomial;

fn instance(kind: KernelKind, patch: PatchKind, seed: u64) -> sosgeom::batch::Instance {
    sample_instance(&ExperimentConfig::new(kind, patch, 1, seed), 0)
}

/// Rotation from a unit quaternion.
fn rotation(q: [f64; 4]) -> Vec<Vec<f64>> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    vec![
        vec![1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        vec![2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        vec![2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn apply(a: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
    (0..3).map(|i| (0..3).map(|j| a[i][j] * x[j]).sum::<f64>() + b[i]).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn motion() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (
        proptest::array::uniform4(-1.0f64..1.0).prop_filter("nonzero", |q| q.iter().map(|v| v * v).sum::<f64>() > 0.1),
        proptest::collection::vec(-3.0f64..3.0, 3),
    )
        .prop_map(|(q, b)| (rotation(q), b))
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs()))
}

/// `|x(u) - t|^2` as a polynomial (polynomial patches only).
fn squared_distance(patch: &PatchSpec, t: &[f64]) -> Polynomial {
    let sf = shape_function(patch).unwrap();
    let k = sf.k();
    sf.numerators.iter().zip(t).fold(Polynomial::zero(k), |acc, (a, c)| {
        let d = a.add_constant(-c);
        &acc + &(&d * &d)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn closest_point_bound_is_sound(seed in any::<u64>()) {
        let inst = instance(KernelKind::Cp, PatchKind::QuadraticTriangle, seed);
        let t = inst.target.clone().unwrap();
        let r = closest_point(&inst.patches[0], &t, &KernelOptions::default()).unwrap();
        let f = squared_distance(&inst.patches[0], &t);
        let (grid, _) = grid_minimum(&f, inst.patches[0].kind.domain_kind(), 80);
        prop_assert!(r.value.unwrap() <= grid + 1e-4);
        let dom = canonical_domain(inst.patches[0].kind.domain_kind());
        for u in &r.u {
            prop_assert!(dom.contains(u, 1e-6), "{:?}", u);
        }
    }

    #[test]
    fn motions_preserve_values_and_map_witnesses(seed in any::<u64>(), (a, b) in motion()) {
        let inst = instance(KernelKind::Cp, PatchKind::QuadraticTriangle, seed);
        let p = &inst.patches[0];
        let q = p.transformed(&a, &b);
        let t = inst.target.clone().unwrap();
        let opts = KernelOptions::default();

        let (r0, r1) = (closest_point(p, &t, &opts).unwrap(), closest_point(&q, &apply(&a, &b, &t), &opts).unwrap());
        prop_assert!(same(r0.value.unwrap(), r1.value.unwrap()), "cp {:?} {:?}", r0.value, r1.value);
        if r0.recovery.unwrap().exact && r1.recovery.unwrap().exact {
            prop_assert!(dist(&apply(&a, &b, &r0.x[0]), &r1.x[0]) <= 1e-4);
        }

        let (r0, r1) = (diameter(p, &opts).unwrap(), diameter(&q, &opts).unwrap());
        prop_assert!(same(r0.value.unwrap(), r1.value.unwrap()), "pd {:?} {:?}", r0.value, r1.value);
        if r0.recovery.unwrap().exact && r1.recovery.unwrap().exact {
            let (m0, m1) = (apply(&a, &b, &r0.x[0]), apply(&a, &b, &r0.x[1]));
            let direct = dist(&m0, &r1.x[0]).max(dist(&m1, &r1.x[1]));
            let swapped = dist(&m0, &r1.x[1]).max(dist(&m1, &r1.x[0]));
            prop_assert!(direct.min(swapped) <= 1e-4);
        }

        let (s0, s1) = (min_surrounding_sphere(p, &opts).unwrap(), min_surrounding_sphere(&q, &opts).unwrap());
        prop_assert!(same(s0.value.unwrap(), s1.value.unwrap()), "mss {:?} {:?}", s0.value, s1.value);
        prop_assert!(dist(&apply(&a, &b, &s0.sphere.unwrap().center), &s1.sphere.unwrap().center) <= 1e-4);

        let (e0, e1) = (min_enclosing_ellipsoid(p, &opts).unwrap(), min_enclosing_ellipsoid(&q, &opts).unwrap());
        prop_assert!(same(e0.value.unwrap(), e1.value.unwrap()), "mee {:?} {:?}", e0.value, e1.value);
        prop_assert!(dist(&apply(&a, &b, &e0.ellipsoid.unwrap().center), &e1.ellipsoid.unwrap().center) <= 1e-4);
    }

    #[test]
    fn intersection_verdicts_ship_witnesses(seed in any::<u64>()) {
        let inst = instance(KernelKind::Ssi, PatchKind::QuadraticTriangle, seed);
        let r = surface_surface_intersection(&inst.patches[0], &inst.patches[1], &KernelOptions::default()).unwrap();
        if r.decision.is_some_and(|d| d.is_positive()) {
            prop_assert!(r.witness_gap.unwrap() <= 1e-2);
            prop_assert!(dist(&r.x[0], &r.x[1]) <= 1e-2);
            let dom = canonical_domain(inst.patches[0].kind.domain_kind());
            prop_assert!(dom.contains(&r.u[0], 1e-6) && dom.contains(&r.u[1], 1e-6));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn longer_horizons_never_delay_contact(seed in any::<u64>()) {
        let inst = instance(KernelKind::Ccd, PatchKind::QuadraticTriangle, seed);
        let (p, v) = (&inst.patches, &inst.velocities);
        let opts = KernelOptions::default();
        let short = continuous_collision(&p[0], &v[0], &p[1], &v[1], 1.0, &opts).unwrap();
        if short.decision == Some(Decision::Collides) {
            let long = continuous_collision(&p[0], &v[0], &p[1], &v[1], 2.0, &opts).unwrap();
            prop_assert_eq!(long.decision, Some(Decision::Collides));
            prop_assert!(long.time.unwrap() <= short.time.unwrap() + 1e-6, "{:?} > {:?}", long.time, short.time);
        }
    }
}
