use super::*;
use crate::patch::{shape_function, PatchKind};

/// Squared distance from `target` to the patch and the closest point.
pub fn closest_point(patch: &PatchSpec, target: &[f64], opts: &KernelOptions) -> Result<KernelResult> {
    let start = Instant::now();
    let d = opts.degree(KernelKind::Cp, patch);
    let mut res = KernelResult::new(KernelKind::Cp, d, opts.seed);
    let sf = shape_function(patch)?;
    check_dim(&sf, target.len())?;
    let (num, den) = squared_distance_ratio(&sf, target);
    let s = solve_ratio(&num, &den, &sf.domain, d, opts)?;
    s.record(&mut res);
    if !has_bound(s.rel.status()) {
        return Err(solver_error(&s.rel));
    }
    let u = project_to_domain(patch.kind.domain_kind(), &s.rel.minimizer()?);
    res.value = Some(s.rel.lower_bound());
    res.x = vec![sf.eval(&u)];
    res.u = vec![u];
    res.recovery = Some(s.rel.recovery());
    res.certified = s.rel.certificate_ok();
    res.timings.total_ms = ms(start.elapsed());
    Ok(res)
}

/// Axis-aligned box from `2n` bound computations `min +-x_j(u)`.
pub fn min_aabb(patch: &PatchSpec, opts: &KernelOptions) -> Result<KernelResult> {
    let start = Instant::now();
    let d = opts.degree(KernelKind::Mbb, patch);
    let mut res = KernelResult::new(KernelKind::Mbb, d, opts.seed);
    let sf = shape_function(patch)?;
    let n = sf.dim();
    let (mut lo, mut hi) = (vec![0.0; n], vec![0.0; n]);
    let mut worst_rank: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    let mut all_certified = true;
    let mut all_exact = true;
    for j in 0..n {
        for sign in [1.0, -1.0] {
            let num = sf.numerators[j].scale(sign);
            let s = solve_ratio(&num, &sf.denominator, &sf.domain, d, opts)?;
            s.record(&mut res);
            if !has_bound(s.rel.status()) {
                return Err(solver_error(&s.rel));
            }
            let v = s.rel.lower_bound();
            if sign > 0.0 {
                lo[j] = v;
            } else {
                hi[j] = -v;
            }
            let rec = s.rel.recovery();
            worst_rank = worst_rank.max(rec.rank_ratio);
            worst_res = worst_res.max(rec.certificate_residual);
            all_exact &= rec.exact;
            all_certified &= s.rel.certificate_ok();
        }
    }
    res.recovery = Some(RecoveryReport { exact: all_exact, rank_ratio: worst_rank, certificate_residual: worst_res });
    res.certified = all_certified;
    res.value = Some(lo.iter().zip(&hi).map(|(a, b)| b - a).product());
    res.aabb = Some(Aabb { min: lo, max: hi });
    res.timings.total_ms = ms(start.elapsed());
    Ok(res)
}

/// `det grad x` of a trilinear hex as a polynomial on the unit cube.
pub fn hex_jacobian(patch: &PatchSpec) -> Result<Polynomial> {
    if patch.kind != PatchKind::TrilinearHex {
        return Err(Error::InvalidPatch(format!("hex validity needs trilinear-hex, got {}", patch.kind.name())));
    }
    let sf = shape_function(patch)?;
    if sf.dim() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, found: sf.dim() });
    }
    let x = sf.polynomial_coords()?;
    let j: Vec<Vec<Polynomial>> = (0..3).map(|r| (0..3).map(|c| x[r].derivative(c)).collect()).collect();
    let minor = |a: usize, b: usize, c: usize, e: usize| &(&j[a][c] * &j[b][e]) - &(&j[a][e] * &j[b][c]);
    let det = &(&(&j[0][0] * &minor(1, 2, 1, 2)) - &(&j[0][1] * &minor(1, 2, 0, 2))) + &(&j[0][2] * &minor(1, 2, 0, 1));
    Ok(det)
}

/// Certified lower bound on the Jacobian determinant over the cube.
pub fn hex_validity(patch: &PatchSpec, opts: &KernelOptions) -> Result<KernelResult> {
    let start = Instant::now();
    let d = opts.degree(KernelKind::Hex, patch);
    let mut res = KernelResult::new(KernelKind::Hex, d, opts.seed);
    let f = hex_jacobian(patch)?;
    let sf = shape_function(patch)?;
    let one = Polynomial::constant(3, 1.0);
    let s = solve_ratio(&f, &one, &sf.domain, d, opts)?;
    s.record(&mut res);
    if !has_bound(s.rel.status()) {
        return Err(solver_error(&s.rel));
    }
    let u = project_to_domain(DomainKind::Cube, &s.rel.minimizer()?);
    let lambda = s.rel.lower_bound();
    res.value = Some(lambda);
    res.x = vec![sf.eval(&u)];
    res.u = vec![u];
    res.recovery = Some(s.rel.recovery());
    res.certified = s.rel.certificate_ok();
    res.decision = Some(if lambda > 0.0 { Decision::Valid } else { Decision::Invalid });
    res.timings.total_ms = ms(start.elapsed());
    Ok(res)
}
