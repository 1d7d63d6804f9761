use super::*;
use rayon::prelude::*;

#[derive(Clone, Debug, Serialize)]
pub struct PairOutcome {
    pub i: usize,
    pub j: usize,
    pub result: KernelResult,
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiPatchReport {
    pub pairs_total: usize,
    pub pairs_pruned: usize,
    pub spheres_a: Vec<Sphere>,
    pub spheres_b: Vec<Sphere>,
    pub results: Vec<PairOutcome>,
    pub decision: Decision,
    /// Earliest physical collision time over all colliding pairs.
    pub earliest_time: Option<f64>,
}

fn spheres(patches: &[PatchSpec], opts: &KernelOptions) -> Result<Vec<Sphere>> {
    let broad = KernelOptions { d: None, ..opts.clone() };
    patches
        .par_iter()
        .map(|p| min_surrounding_sphere(p, &broad).map(|r| r.sphere.expect("sphere kernel fills sphere")))
        .collect()
}

/// Upper bound on `|sum v_i phi_i(u)|` over the domain, from the certified
/// box of the velocity field.
fn speed_bound(p: &PatchSpec, opts: &KernelOptions) -> Result<f64> {
    let Some(v) = &p.velocities else { return Ok(0.0) };
    if v.iter().flatten().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    let mut field = p.clone();
    field.control_points = v.clone();
    field.velocities = None;
    let b = min_aabb(&field, &KernelOptions { d: None, ..opts.clone() })?.aabb.expect("box kernel fills aabb");
    Ok(b.min.iter().zip(&b.max).map(|(lo, hi)| lo.abs().max(hi.abs()).powi(2)).sum::<f64>().sqrt())
}

fn combine(results: &[PairOutcome]) -> Decision {
    if results.iter().any(|r| r.result.decision.is_some_and(|d| d.is_positive())) {
        return results.iter().find_map(|r| r.result.decision.filter(|d| d.is_positive())).unwrap();
    }
    if results.iter().any(|r| r.result.decision == Some(Decision::Unknown)) {
        return Decision::Unknown;
    }
    Decision::None
}

/// Intersections between two patch sets, pruned by surrounding spheres.
pub fn multi_ssi(a: &[PatchSpec], b: &[PatchSpec], opts: &KernelOptions) -> Result<MultiPatchReport> {
    let sa = spheres(a, opts)?;
    let sb = spheres(b, opts)?;
    let mut pairs = Vec::new();
    for i in 0..a.len() {
        for j in 0..b.len() {
            if dist(&sa[i].center, &sb[j].center) <= sa[i].radius + sb[j].radius {
                pairs.push((i, j));
            }
        }
    }
    let results: Vec<PairOutcome> = pairs
        .par_iter()
        .map(|&(i, j)| surface_surface_intersection(&a[i], &b[j], opts).map(|result| PairOutcome { i, j, result }))
        .collect::<Result<_>>()?;
    Ok(MultiPatchReport {
        pairs_total: a.len() * b.len(),
        pairs_pruned: a.len() * b.len() - pairs.len(),
        decision: combine(&results),
        earliest_time: None,
        spheres_a: sa,
        spheres_b: sb,
        results,
    })
}

/// Collisions between two moving patch sets; each patch carries its own
/// velocities (missing means static).  Pairs whose swept spheres cannot
/// meet within `t_max` are skipped.
pub fn multi_ccd(a: &[PatchSpec], b: &[PatchSpec], t_max: f64, opts: &KernelOptions) -> Result<MultiPatchReport> {
    let sa = spheres(a, opts)?;
    let sb = spheres(b, opts)?;
    let va: Vec<f64> = a.iter().map(|p| speed_bound(p, opts)).collect::<Result<_>>()?;
    let vb: Vec<f64> = b.iter().map(|p| speed_bound(p, opts)).collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    for i in 0..a.len() {
        for j in 0..b.len() {
            let reach = sa[i].radius + sb[j].radius + t_max * (va[i] + vb[j]);
            if dist(&sa[i].center, &sb[j].center) <= reach {
                pairs.push((i, j));
            }
        }
    }
    let vel = |p: &PatchSpec| p.velocities.clone().unwrap_or_else(|| vec![vec![0.0; p.dim()]; p.control_points.len()]);
    let results: Vec<PairOutcome> = pairs
        .par_iter()
        .map(|&(i, j)| {
            continuous_collision(&a[i], &vel(&a[i]), &b[j], &vel(&b[j]), t_max, opts).map(|result| PairOutcome { i, j, result })
        })
        .collect::<Result<_>>()?;
    let earliest_time = results.iter().filter_map(|r| r.result.time).min_by(|x, y| x.total_cmp(y));
    Ok(MultiPatchReport {
        pairs_total: a.len() * b.len(),
        pairs_pruned: a.len() * b.len() - pairs.len(),
        decision: combine(&results),
        earliest_time,
        spheres_a: sa,
        spheres_b: sb,
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::PatchKind;

    fn tri(offset: [f64; 3]) -> PatchSpec {
        let base = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        PatchSpec::new(
            PatchKind::LinearTriangle,
            base.iter().map(|p| (0..3).map(|i| p[i] + offset[i]).collect()).collect(),
        )
    }

    #[test]
    fn far_pairs_are_pruned() {
        let a = vec![tri([0.0; 3]), tri([10.0, 0.0, 0.0])];
        let b = vec![tri([0.0, 0.0, 0.0])];
        let r = multi_ssi(&a, &b, &KernelOptions::default()).unwrap();
        assert_eq!((r.pairs_total, r.pairs_pruned), (2, 1));
        assert_eq!(r.decision, Decision::Intersects);
    }

    #[test]
    fn sweep_keeps_approaching_pair() {
        let mut mover = tri([0.0, 0.0, 3.0]);
        mover.velocities = Some(vec![vec![0.0, 0.0, -4.0]; 3]);
        let a = vec![mover];
        let b = vec![tri([0.0; 3]), tri([0.0, 50.0, 0.0])];
        let r = multi_ccd(&a, &b, 1.0, &KernelOptions::default()).unwrap();
        assert_eq!(r.pairs_pruned, 1);
        assert_eq!(r.decision, Decision::Collides);
        assert!((r.earliest_time.unwrap() - 0.75).abs() < 1e-3, "{:?}", r.earliest_time);
    }
}
