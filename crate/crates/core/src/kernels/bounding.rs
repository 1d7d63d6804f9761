use super::*;
use crate::patch::{grid_points, shape_function, SemialgebraicDomain};
use crate::relax::{residual_l1, PutinarSystem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sosgeom_sdp::{Constraint, Entry, LogDet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Aabb {
    pub fn volume(&self) -> f64 {
        self.min.iter().zip(&self.max).map(|(a, b)| (b - a).max(0.0)).product()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter().zip(self.min.iter().zip(&self.max)).all(|(v, (a, b))| *v >= a - tol && *v <= b + tol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sphere {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Sphere {
    pub fn volume(&self) -> f64 {
        ball_volume(self.center.len()) * self.radius.powi(self.center.len() as i32)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        dist(x, &self.center) <= self.radius * (1.0 + tol)
    }
}

/// `{p : (p - c)^T A (p - c) <= 1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ellipsoid {
    pub a: Vec<Vec<f64>>,
    pub center: Vec<f64>,
    pub volume: f64,
}

impl Ellipsoid {
    pub fn level(&self, x: &[f64]) -> f64 {
        let n = self.center.len();
        let d: Vec<f64> = (0..n).map(|i| x[i] - self.center[i]).collect();
        (0..n).map(|i| (0..n).map(|j| d[i] * self.a[i][j] * d[j]).sum::<f64>()).sum()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.level(x) <= 1.0 + tol
    }
}

fn ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 / 3.0 * std::f64::consts::PI,
        _ => {
            // pi^(n/2) / Gamma(n/2 + 1) via the two-step recurrence.
            let mut v = [2.0, std::f64::consts::PI];
            for k in 3..=n {
                let next = v[(k - 1) % 2] * 2.0 * std::f64::consts::PI / k as f64;
                v[(k - 1) % 2] = next;
            }
            v[(n - 1) % 2]
        }
    }
}

/// Samples used for normalization and the flatness test.
fn samples(patch: &PatchSpec, sf: &ShapeFunction) -> Vec<Vec<f64>> {
    let kind = patch.kind.domain_kind();
    let n = if kind.dim() >= 3 { 12 } else { 30 };
    grid_points(kind, n).iter().map(|u| sf.eval(u)).collect()
}

/// Box domains are moved to `[-1, 1]^k`; monomials of high degree on
/// `[0, 1]` make the moment matrices nearly singular.
fn centered(sf: &ShapeFunction) -> Result<(SemialgebraicDomain, Vec<Polynomial>, Polynomial)> {
    let k = sf.k();
    let boxed = sf.domain.inequalities.len() == 2 * k
        && (0..k).all(|i| sf.domain.inequalities[2 * i] == Polynomial::var(k, i))
        && sf.domain.equalities.is_empty();
    if !boxed || k == 0 {
        return Ok((sf.domain.clone(), sf.numerators.clone(), sf.denominator.clone()));
    }
    let one = Polynomial::constant(k, 1.0);
    let map: Vec<Polynomial> = (0..k).map(|i| (&Polynomial::var(k, i) + &one).scale(0.5)).collect();
    let mut domain = SemialgebraicDomain::new(k);
    for i in 0..k {
        let v = Polynomial::var(k, i);
        domain.inequalities.push(&one + &v);
        domain.inequalities.push(&one - &v);
    }
    let num = sf.numerators.iter().map(|a| a.compose(&map)).collect::<Result<Vec<_>>>()?;
    Ok((domain, num, sf.denominator.compose(&map)?))
}

struct Lifted {
    b: DMatrix<f64>,
    /// Points were mapped by `(x - shift) / scale`.
    shift: Vec<f64>,
    scale: f64,
    delta: f64,
}

/// Solves `max log det B` s.t. `b^2 - y~^T B y~` is in the quadratic module,
/// with `y~ = [a~; b]` for the normalized numerators `a~`.
fn solve_lifted(patch: &PatchSpec, d: usize, sphere: bool, opts: &KernelOptions, res: &mut KernelResult) -> Result<Lifted> {
    let sf = shape_function(patch)?;
    let n = sf.dim();
    let pts = samples(patch, &sf);
    let mut shift = vec![0.0; n];
    for p in &pts {
        for j in 0..n {
            shift[j] += p[j] / pts.len() as f64;
        }
    }
    let scale = pts.iter().map(|p| dist(p, &shift)).fold(0.0, f64::max).max(1e-12);
    if !sphere {
        let mut cov = DMatrix::<f64>::zeros(n, n);
        for p in &pts {
            let v = DVector::from_iterator(n, (0..n).map(|j| (p[j] - shift[j]) / scale));
            cov += &v * v.transpose();
        }
        cov /= pts.len() as f64;
        let ev = cov.symmetric_eigenvalues();
        if ev.min() <= 1e-10 * ev.max().max(1e-300) {
            return Err(Error::DegenerateFlat);
        }
    }
    let k = sf.k();
    let (domain, num, bden) = centered(&sf)?;
    let bden = &bden;
    let mut y: Vec<Polynomial> = num
        .iter()
        .zip(&shift)
        .map(|(a, c)| (a - &bden.scale(*c)).scale(1.0 / scale))
        .collect();
    y.push(bden.clone());
    let ydeg = y.iter().map(|p| p.degree()).max().unwrap_or(0);
    let order = kernel_order(d, 2 * ydeg, &sf.domain);
    let r = order.r();
    res.d_used = order.d;
    let t0 = Instant::now();
    let mut sys = PutinarSystem::new(&domain, r)?;
    let blk = sys.sdp.add_block("B", n + 1);
    let b2 = bden * bden;
    sys.add_target_constant(&b2)?;
    let mut products = vec![vec![Polynomial::zero(k); n + 1]; n + 1];
    for i in 0..=n {
        for j in i..=n {
            let q = &y[i] * &y[j];
            sys.add_target_block(blk, i, j, &q.neg())?;
            products[i][j] = q;
        }
    }
    if sphere {
        for i in 0..n {
            for j in i + 1..n {
                sys.sdp.add_constraint(Constraint { entries: vec![Entry::new(blk, i, j, 1.0)], free: vec![], rhs: 0.0 });
            }
            if i > 0 {
                sys.sdp.add_constraint(Constraint {
                    entries: vec![Entry::new(blk, 0, 0, 1.0), Entry::new(blk, i, i, -1.0)],
                    free: vec![],
                    rhs: 0.0,
                });
            }
        }
    }
    sys.sdp.objective.log_det = Some(LogDet { block: blk, weight: 1.0 });
    let t1 = Instant::now();
    let sol = opts.solve(&sys.sdp)?;
    res.timings.compile_ms += ms(t1 - t0);
    res.timings.solve_ms += ms(t1.elapsed());
    res.solver.absorb_raw(&sol, sys.sdp.num_constraints());
    match sol.status {
        SolveStatus::Optimal | SolveStatus::Inaccurate => {}
        SolveStatus::DualInfeasible if !sphere => return Err(Error::DegenerateFlat),
        s => return Err(Error::Solver(format!("bounding program ended with status {}", s.as_str()))),
    }
    let b = sol.x[blk].clone();
    if !(b.iter().all(|v| v.is_finite())) || b.clone().cholesky().is_none() {
        return Err(if sphere { Error::Solver("bounding matrix is not positive definite".into()) } else { Error::DegenerateFlat });
    }
    // Residual of b^2 - y~^T B y~ = s_0 + sum g_i s_i, bounded over the box.
    let mut target = b2.clone();
    for i in 0..=n {
        for j in i..=n {
            let w = if i == j { b[(i, j)] } else { 2.0 * b[(i, j)] };
            target = &target - &products[i][j].scale(w);
        }
    }
    let abs = residual_l1(&sys, &target, &sol);
    let bmin = grid_points(patch.kind.domain_kind(), 20).iter().map(|u| sf.denominator.eval(u).powi(2)).fold(f64::INFINITY, f64::min);
    let delta = abs / bmin;
    res.certified = delta.is_finite() && delta < 1e-3;
    Ok(Lifted { b, shift, scale, delta })
}

/// Smallest-volume ellipsoid containing the patch.
pub fn min_enclosing_ellipsoid(patch: &PatchSpec, opts: &KernelOptions) -> Result<KernelResult> {
    let start = Instant::now();
    let d = opts.degree(KernelKind::Mee, patch);
    let mut res = KernelResult::new(KernelKind::Mee, d, opts.seed);
    let l = solve_lifted(patch, d, false, opts, &mut res)?;
    let n = l.shift.len();
    let b = &l.b / (1.0 + l.delta);
    let b3 = b.view((0, 0), (n, n)).into_owned();
    let bv = b.view((0, n), (n, 1)).into_owned();
    let beta = b[(n, n)];
    let inv = b3.clone().try_inverse().ok_or(Error::DegenerateFlat)?;
    let ct = -(&inv * &bv);
    let denom = 1.0 - beta + (bv.transpose() * &inv * &bv)[(0, 0)];
    if !(denom > 0.0) {
        return Err(Error::Solver(format!("completed square has non-positive radius term {denom:e}")));
    }
    let a = &b3 / (denom * l.scale * l.scale);
    let a = (&a + a.transpose()) * 0.5;
    let center: Vec<f64> = (0..n).map(|i| l.shift[i] + l.scale * ct[i]).collect();
    let det = a.determinant();
    if !(det > 0.0) {
        return Err(Error::DegenerateFlat);
    }
    let e = Ellipsoid {
        a: (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect(),
        center,
        volume: ball_volume(n) / det.sqrt(),
    };
    res.value = Some(e.volume);
    res.ellipsoid = Some(e);
    res.timings.total_ms = ms(start.elapsed());
    Ok(res)
}

/// Smallest sphere containing the patch.
pub fn min_surrounding_sphere(patch: &PatchSpec, opts: &KernelOptions) -> Result<KernelResult> {
    let start = Instant::now();
    let d = opts.degree(KernelKind::Mss, patch);
    let mut res = KernelResult::new(KernelKind::Mss, d, opts.seed);
    let l = solve_lifted(patch, d, true, opts, &mut res)?;
    let n = l.shift.len();
    let b = &l.b / (1.0 + l.delta);
    let a = b[(0, 0)];
    let bv: Vec<f64> = (0..n).map(|i| b[(i, n)]).collect();
    let beta = b[(n, n)];
    let bb: f64 = bv.iter().map(|v| v * v).sum();
    let r2 = (1.0 - beta + bb / a) / a;
    if !(a > 0.0 && r2 > 0.0) {
        return Err(Error::Solver(format!("degenerate sphere (a = {a:e}, r^2 = {r2:e})")));
    }
    let center: Vec<f64> = (0..n).map(|i| l.shift[i] - l.scale * bv[i] / a).collect();
    let s = Sphere { center, radius: l.scale * r2.sqrt() };
    res.value = Some(s.volume());
    res.sphere = Some(s);
    res.timings.total_ms = ms(start.elapsed());
    Ok(res)
}
