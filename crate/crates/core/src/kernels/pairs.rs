use super::*;
use crate::patch::{canonical_domain, clear_denominators, product_domain, shape_function, time_extend, SemialgebraicDomain};
use crate::relax::emptiness_certificate;

/// Patch diameter: `lambda* = -diam^2` with the two realizing points.
pub fn diameter(patch: &PatchSpec, opts: &KernelOptions) -> Result<KernelResult> {
    let start = Instant::now();
    let d = opts.degree(KernelKind::Pd, patch);
    let mut res = KernelResult::new(KernelKind::Pd, d, opts.seed);
    let sf = shape_function(patch)?;
    let k1 = sf.k();
    let k = 2 * k1;
    let domain = product_domain(&sf.domain, &sf.domain, &[separating_halfspace(k1, opts.seed)])?;
    let diffs = clear_denominators(&sf, &sf)?;
    let mut num = Polynomial::zero(k);
    for h in &diffs {
        num = &num - &(h * h);
    }
    let b = &sf.denominator.embed(k, 0) * &sf.denominator.embed(k, k1);
    let den = &b * &b;
    let s = solve_ratio(&num, &den, &domain, d, opts)?;
    s.record(&mut res);
    if !has_bound(s.rel.status()) {
        return Err(solver_error(&s.rel));
    }
    let (u1, u2) = split(&s.rel.minimizer()?, k1);
    let kind = patch.kind.domain_kind();
    let (u1, u2) = (project_to_domain(kind, &u1), project_to_domain(kind, &u2));
    res.value = Some(s.rel.lower_bound());
    res.x = vec![sf.eval(&u1), sf.eval(&u2)];
    res.u = vec![u1, u2];
    res.recovery = Some(s.rel.recovery());
    res.certified = s.rel.certificate_ok();
    res.timings.total_ms = ms(start.elapsed());
    Ok(res)
}

/// `(u1 - u2) . v >= 0` for a seeded unit vector `v`.
fn separating_halfspace(k1: usize, seed: u64) -> Polynomial {
    let v = symmetry_direction(k1, seed);
    let k = 2 * k1;
    let mut q = Polynomial::zero(k);
    for (i, vi) in v.iter().enumerate() {
        q = &q + &(&Polynomial::var(k, i) - &Polynomial::var(k, k1 + i)).scale(*vi);
    }
    q
}

/// Verdict from a solved contact relaxation: a positive answer needs a
/// checked witness; a negative one is certified when an emptiness proof
/// is found.
struct ContactCheck<'a> {
    domain: &'a SemialgebraicDomain,
    positive: Decision,
    /// Maps the raw extracted parameters to (projected parameters, gap).
    witness: &'a dyn Fn(&[f64]) -> (Vec<f64>, f64),
    /// Extra condition a witness must meet besides the embedded gap.
    accept: &'a dyn Fn(&[f64], f64) -> bool,
}

struct ContactOutcome {
    decision: Decision,
    certified: bool,
    u: Option<Vec<f64>>,
    gap: Option<f64>,
}

fn decide_contact(s: &Solved, check: &ContactCheck, settings: &SolverSettings, res: &mut KernelResult) -> Result<ContactOutcome> {
    let status = s.rel.status();
    let mut out = ContactOutcome { decision: Decision::Unknown, certified: false, u: None, gap: None };
    if status != SolveStatus::DualInfeasible && status != SolveStatus::PrimalInfeasible {
        if let Ok(raw) = s.rel.minimizer() {
            if raw.iter().all(|v| v.is_finite()) {
                let (u, gap) = (check.witness)(&raw);
                let lambda = s.rel.lower_bound();
                if gap <= EMBEDDED_TOL && (check.accept)(&u, lambda) {
                    out.decision = check.positive;
                    out.certified = true;
                }
                out.u = Some(u);
                out.gap = Some(gap);
            }
        }
        if out.decision != Decision::Unknown || status != SolveStatus::Optimal {
            return Ok(out);
        }
    }
    // No usable witness: the set is declared empty only with a proof.
    if status == SolveStatus::DualInfeasible || status == SolveStatus::Optimal {
        let t0 = Instant::now();
        let cert = emptiness_certificate(check.domain, s.rel.order.r(), settings)?;
        res.timings.solve_ms += ms(t0.elapsed());
        res.solver.solves += 1;
        if cert.valid || status == SolveStatus::DualInfeasible {
            out.decision = Decision::None;
            out.certified = cert.valid;
        }
    }
    Ok(out)
}

/// Weight of the linear tie-break added to contact objectives.
const TIE_BREAK: f64 = 1e-4;

/// `TIE_BREAK * sum c_i u_i` over `vars` with seeded `c_i >= 0`,
/// `sum c_i = 1`.  Contact sets are often curves; the perturbation makes
/// the minimizer unique so that its first moments land on the set.
fn tie_break(k: usize, vars: std::ops::Range<usize>, seed: u64) -> Polynomial {
    let c: Vec<f64> = symmetry_direction(vars.len(), seed ^ 0x9e37_79b9).iter().map(|v| v.abs()).collect();
    let total: f64 = c.iter().sum();
    let mut q = Polynomial::zero(k);
    for (ci, i) in c.iter().zip(vars) {
        q = &q + &Polynomial::var(k, i).scale(TIE_BREAK * ci / total);
    }
    q
}

struct PairSetup {
    sf1: ShapeFunction,
    sf2: ShapeFunction,
    domain: SemialgebraicDomain,
}

fn pair_setup(p1: &PatchSpec, p2: &PatchSpec, extra: &[Polynomial]) -> Result<PairSetup> {
    let sf1 = shape_function(p1)?;
    let sf2 = shape_function(p2)?;
    check_dim(&sf1, sf2.dim())?;
    let mut domain = product_domain(&sf1.domain, &sf2.domain, extra)?;
    domain.equalities.extend(clear_denominators(&sf1, &sf2)?);
    Ok(PairSetup { sf1, sf2, domain })
}

/// Does `p1` meet `p2`?  Minimizes `u1_1` (plus a small tie-break) over the
/// intersection set.
pub fn surface_surface_intersection(p1: &PatchSpec, p2: &PatchSpec, opts: &KernelOptions) -> Result<KernelResult> {
    let start = Instant::now();
    let d = opts.d.unwrap_or_else(|| default_degree(KernelKind::Ssi, p1).max(default_degree(KernelKind::Ssi, p2)));
    let mut res = KernelResult::new(KernelKind::Ssi, d, opts.seed);
    let ps = pair_setup(p1, p2, &[])?;
    let (k1, k) = (ps.sf1.k(), ps.domain.k);
    let f = &Polynomial::var(k, 0) + &tie_break(k, 1..k, opts.seed);
    let s = solve_ratio(&f, &Polynomial::constant(k, 1.0), &ps.domain, d, opts)?;
    s.record(&mut res);
    let (kd1, kd2) = (p1.kind.domain_kind(), p2.kind.domain_kind());
    let witness = |raw: &[f64]| {
        let (a, b) = split(raw, k1);
        let (a, b) = (project_to_domain(kd1, &a), project_to_domain(kd2, &b));
        let gap = dist(&ps.sf1.eval(&a), &ps.sf2.eval(&b));
        ([a, b].concat(), gap)
    };
    let check = ContactCheck { domain: &ps.domain, positive: Decision::Intersects, witness: &witness, accept: &|_, _| true };
    let out = decide_contact(&s, &check, &opts.settings, &mut res)?;
    finish_pair(&mut res, &s, out, &two_parts(&ps.sf1, &ps.sf2));
    res.timings.total_ms = ms(start.elapsed());
    Ok(res)
}

/// Fills value, recovery and witness fields; `parts` splits a witness
/// vector into per-patch parameters and embedded points.
fn finish_pair(res: &mut KernelResult, s: &Solved, out: ContactOutcome, parts: &dyn Fn(&[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>)) {
    res.decision = Some(out.decision);
    res.certified = out.certified;
    res.witness_gap = out.gap;
    if has_bound(s.rel.status()) || s.rel.status() == SolveStatus::IterLimit {
        res.value = Some(s.rel.lower_bound());
        res.recovery = Some(s.rel.recovery());
    }
    if let Some(u) = out.u {
        let (us, xs) = parts(&u);
        res.u = us;
        res.x = xs;
    }
}

fn two_parts<'a>(sf1: &'a ShapeFunction, sf2: &'a ShapeFunction) -> impl Fn(&[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) + 'a {
    move |u: &[f64]| {
        let (a, b) = split(u, sf1.k());
        let xs = vec![sf1.eval(&a), sf2.eval(&b)];
        (vec![a, b], xs)
    }
}

/// Does the patch meet itself at two parameters at least `EPS_PARAM` apart?
pub fn self_intersection(patch: &PatchSpec, opts: &KernelOptions) -> Result<KernelResult> {
    let start = Instant::now();
    let d = opts.degree(KernelKind::Si, patch);
    let mut res = KernelResult::new(KernelKind::Si, d, opts.seed);
    let sf = shape_function(patch)?;
    let k1 = sf.k();
    let ps = pair_setup(patch, patch, &[separating_halfspace(k1, opts.seed)])?;
    let k = ps.domain.k;
    let mut f = Polynomial::zero(k);
    for i in 0..k1 {
        let diff = &Polynomial::var(k, i) - &Polynomial::var(k, k1 + i);
        f = &f - &(&diff * &diff);
    }
    let s = solve_ratio(&f, &Polynomial::constant(k, 1.0), &ps.domain, d, opts)?;
    s.record(&mut res);
    let kind = patch.kind.domain_kind();
    let witness = |raw: &[f64]| {
        let (a, b) = split(raw, k1);
        let (a, b) = (project_to_domain(kind, &a), project_to_domain(kind, &b));
        let gap = dist(&sf.eval(&a), &sf.eval(&b));
        ([a, b].concat(), gap)
    };
    let accept = |u: &[f64], lambda: f64| lambda <= -EPS_PARAM * EPS_PARAM && dist(&u[..k1], &u[k1..]) >= EPS_PARAM;
    let check = ContactCheck { domain: &ps.domain, positive: Decision::SelfIntersects, witness: &witness, accept: &accept };
    let mut out = decide_contact(&s, &check, &opts.settings, &mut res)?;
    // A bound above -eps^2 rules out separated pairs outright.
    if out.decision != Decision::SelfIntersects && has_bound(s.rel.status()) && s.rel.lower_bound() > -EPS_PARAM * EPS_PARAM {
        out.decision = Decision::None;
        out.certified = s.rel.certificate_ok();
    }
    finish_pair(&mut res, &s, out, &two_parts(&ps.sf1, &ps.sf2));
    res.timings.total_ms = ms(start.elapsed());
    Ok(res)
}

/// Earliest time in `[0, t_max]` at which the moving patches touch.  The
/// reported `time` is the witness time; `value` includes the tie-break.
pub fn continuous_collision(
    p1: &PatchSpec,
    v1: &[Vec<f64>],
    p2: &PatchSpec,
    v2: &[Vec<f64>],
    t_max: f64,
    opts: &KernelOptions,
) -> Result<KernelResult> {
    let start = Instant::now();
    let d = opts.d.unwrap_or_else(|| default_degree(KernelKind::Ccd, p1).max(default_degree(KernelKind::Ccd, p2)));
    let mut res = KernelResult::new(KernelKind::Ccd, d, opts.seed);
    let st1 = time_extend(p1, v1, t_max)?;
    let st2 = time_extend(p2, v2, t_max)?;
    check_dim(&st1, st2.dim())?;
    let (k1, k2) = (st1.k() - 1, st2.k() - 1);
    let k = k1 + k2 + 1;
    let embed1: Vec<Polynomial> = (0..k1).map(|i| Polynomial::var(k, i)).chain([Polynomial::var(k, k - 1)]).collect();
    let embed2: Vec<Polynomial> = (0..k2).map(|i| Polynomial::var(k, k1 + i)).chain([Polynomial::var(k, k - 1)]).collect();
    let b1 = st1.denominator.compose(&embed1)?;
    let b2 = st2.denominator.compose(&embed2)?;
    let base1 = shape_function(p1)?;
    let base2 = shape_function(p2)?;
    let mut domain = product_domain(&product_domain(&base1.domain, &base2.domain, &[])?, &canonical_domain(DomainKind::Interval), &[])?;
    for (a1, a2) in st1.numerators.iter().zip(&st2.numerators) {
        let h = &(&a1.compose(&embed1)? * &b2) - &(&a2.compose(&embed2)? * &b1);
        domain.equalities.push(h);
    }
    let f = &Polynomial::var(k, k - 1) + &tie_break(k, 0..k - 1, opts.seed);
    let one = Polynomial::constant(k, 1.0);
    let (kd1, kd2) = (p1.kind.domain_kind(), p2.kind.domain_kind());
    let witness = |raw: &[f64]| {
        let a = project_to_domain(kd1, &raw[..k1]);
        let b = project_to_domain(kd2, &raw[k1..k1 + k2]);
        let t = raw[k - 1].clamp(0.0, 1.0);
        let gap = dist(&st1.eval(&[a.clone(), vec![t]].concat()), &st2.eval(&[b.clone(), vec![t]].concat()));
        ([a, b, vec![t]].concat(), gap)
    };
    let check = ContactCheck { domain: &domain, positive: Decision::Collides, witness: &witness, accept: &|_, _| true };

    // Staged: a cheaper relaxation is kept when it already yields a
    // witness whose time matches its own lower bound.
    let mut chosen = None;
    if d >= 2 && kernel_order(d - 1, 1, &domain).r() < kernel_order(d, 1, &domain).r() {
        let s = solve_ratio(&f, &one, &domain, d - 1, opts)?;
        s.record(&mut res);
        let out = decide_contact_light(&s, &check);
        if let Some(out) = out {
            chosen = Some((s, out));
        }
    }
    let (s, out) = match chosen {
        Some(c) => c,
        None => {
            let s = solve_ratio(&f, &one, &domain, d, opts)?;
            s.record(&mut res);
            let out = decide_contact(&s, &check, &opts.settings, &mut res)?;
            (s, out)
        }
    };
    res.d_used = s.rel.order.d;
    let positive = out.decision == Decision::Collides;
    let parts = |u: &[f64]| {
        let (a, b, t) = (u[..k1].to_vec(), u[k1..k1 + k2].to_vec(), u[k - 1]);
        let xs = vec![st1.eval(&[a.clone(), vec![t]].concat()), st2.eval(&[b.clone(), vec![t]].concat())];
        (vec![a, b, vec![t]], xs)
    };
    finish_pair(&mut res, &s, out, &parts);
    if positive {
        res.time = res.u.last().map(|t| t[0] * t_max);
    }
    res.timings.total_ms = ms(start.elapsed());
    Ok(res)
}

/// Positive verdict from a lower-order solve, if its witness time agrees
/// with its bound.
fn decide_contact_light(s: &Solved, check: &ContactCheck) -> Option<ContactOutcome> {
    if !has_bound(s.rel.status()) {
        return None;
    }
    let raw = s.rel.minimizer().ok()?;
    let (u, gap) = (check.witness)(&raw);
    let t = *u.last()?;
    if gap <= EMBEDDED_TOL && t - s.rel.lower_bound() <= STAGE_TIME_TOL {
        return Some(ContactOutcome { decision: Decision::Collides, certified: true, u: Some(u), gap: Some(gap) });
    }
    None
}

/// Allowed difference between witness time and lower bound when keeping
/// the lower-order CCD solve.
const STAGE_TIME_TOL: f64 = 1e-3;
