//! Primal-dual path-following interior-point method.
//!
//! Linear-objective problems are solved through the homogeneous self-dual
//! embedding, so infeasibility surfaces as a certificate instead of an
//! iteration failure.  Problems carrying a log-det reward are solved with the
//! same Newton machinery with the homogenizing variable frozen at one; the
//! log-det weight is added to the centering target of its block, which makes
//! `X_B Z_B -> w I` along the central path.
//!
//! Directions use Nesterov-Todd scaling with a Mehrotra predictor-corrector.
//! The Schur complement is dense; free variables are handled by a nullspace
//! method so the reduced system stays positive definite.

use crate::error::SdpError;
use crate::linalg::{pivoted_qr, robust_cholesky, sym, NtScaling};
use crate::problem::SdpProblem;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    pub infeas_tol: f64,
    /// Fraction-to-boundary factor applied to the maximal step.
    pub step_fraction: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { gap_tol: 1e-8, feas_tol: 1e-8, max_iter: 200, infeas_tol: 1e-7, step_fraction: 0.98 }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), SdpError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.gap_tol) && ok(self.feas_tol) && ok(self.infeas_tol)) {
            return Err(SdpError::InvalidSettings("tolerances must be positive".into()));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(SdpError::InvalidSettings("step fraction must lie in (0, 1)".into()));
        }
        if self.max_iter == 0 {
            return Err(SdpError::InvalidSettings("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    /// A Farkas certificate `y` proves that no feasible `X` exists.
    PrimalInfeasible,
    /// A primal ray proves that the dual constraints cannot be met
    /// (the primal objective is unbounded below when the primal is feasible).
    DualInfeasible,
    /// Stalled within 100x of the tolerances; the best iterate is returned.
    Inaccurate,
    IterLimit,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::PrimalInfeasible => "primal_infeasible",
            SolveStatus::DualInfeasible => "dual_infeasible",
            SolveStatus::Inaccurate => "inaccurate",
            SolveStatus::IterLimit => "iter_limit",
        }
    }
}

/// Result of a solve.  For infeasible statuses the primal (resp. dual)
/// fields hold the normalized certificate ray.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub x: Vec<DMatrix<f64>>,
    pub x_free: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn relative_gap(&self) -> f64 {
        self.gap / (1.0 + self.primal_objective.abs().min(self.dual_objective.abs()))
    }
}

/// Working copy of the problem after presolve and scaling.
struct Prepared {
    m: usize,
    rows: Vec<usize>,
    row_scale: Vec<f64>,
    free_cols: Vec<usize>,
    sizes: Vec<usize>,
    /// Per block: `(row, entries)` with upper-triangular `(r, c, v)` triples.
    a_blocks: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    af: DMatrix<f64>,
    b: DVector<f64>,
    c: Vec<DMatrix<f64>>,
    cf: DVector<f64>,
    log_det: Option<(usize, f64)>,
    cs: f64,
    bs: f64,
    nullspace: Option<Nullspace>,
}

struct Nullspace {
    q1: DMatrix<f64>,
    r1: DMatrix<f64>,
    n: DMatrix<f64>,
}

#[derive(Clone)]
struct State {
    x: Vec<DMatrix<f64>>,
    xf: DVector<f64>,
    y: DVector<f64>,
    z: Vec<DMatrix<f64>>,
    tau: f64,
    kappa: f64,
}

struct Residuals {
    rp: DVector<f64>,
    rd: Vec<DMatrix<f64>>,
    rf: DVector<f64>,
    rg: f64,
}

#[derive(Debug, Clone, Copy)]
struct Measures {
    pres: f64,
    dres: f64,
    pobj: f64,
    dobj: f64,
    gap: f64,
}

impl Measures {
    fn rel_gap(&self) -> f64 {
        self.gap / (1.0 + self.pobj.abs().min(self.dobj.abs()))
    }
    fn merit(&self) -> f64 {
        self.pres.max(self.dres).max(self.rel_gap())
    }
}

enum Presolved {
    Ready(Box<Prepared>),
    Infeasible(SdpSolution),
}

/// Solves `p` with the given settings.
pub fn solve(p: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution, SdpError> {
    p.validate()?;
    settings.validate()?;
    let prep = match Prepared::new(p)? {
        Presolved::Ready(prep) => prep,
        Presolved::Infeasible(sol) => return Ok(sol),
    };
    Ok(prep.run(p, settings))
}

impl Prepared {
    fn new(p: &SdpProblem) -> Result<Presolved, SdpError> {
        let sizes: Vec<usize> = p.blocks.iter().map(|b| b.size).collect();
        let m0 = p.num_constraints();
        let nf0 = p.num_free();

        // Dense free-column matrix over all rows.
        let mut af0: DMatrix<f64> = DMatrix::zeros(m0, nf0);
        for (i, c) in p.constraints.iter().enumerate() {
            for &(k, v) in &c.free {
                af0[(i, k)] += v;
            }
        }

        // Row presolve on the Gram matrix of the full constraint rows.
        let gram = {
            let mut g = gram_of_rows(p, &sizes);
            g += &af0 * af0.transpose();
            g
        };
        let mut rows: Vec<usize> = (0..m0).collect();
        if m0 > 0 {
            let qr = pivoted_qr(&gram, 1e-11);
            if qr.rank < m0 {
                let mut kept: Vec<usize> = qr.perm[..qr.rank].to_vec();
                kept.sort_unstable();
                let dropped: Vec<usize> = (0..m0).filter(|i| !kept.contains(i)).collect();
                let gkk = DMatrix::from_fn(kept.len(), kept.len(), |a, b| gram[(kept[a], kept[b])]);
                let chol = robust_cholesky(&gkk);
                for &d in &dropped {
                    let gkd = DVector::from_fn(kept.len(), |a, _| gram[(kept[a], d)]);
                    let coef = match &chol {
                        Some(ch) => ch.solve(&gkd),
                        None => DVector::zeros(kept.len()),
                    };
                    let pred: f64 = kept.iter().zip(coef.iter()).map(|(&k, c)| c * p.constraints[k].rhs).sum();
                    let bd = p.constraints[d].rhs;
                    let scale = 1.0 + bd.abs() + pred.abs();
                    if (bd - pred).abs() > 1e-9 * scale {
                        // y = e_d - sum coef_k e_k annihilates the rows and has b^T y != 0.
                        let sign = (bd - pred).signum();
                        let mut y = vec![0.0; m0];
                        y[d] = sign;
                        for (&k, c) in kept.iter().zip(coef.iter()) {
                            y[k] = -sign * c;
                        }
                        let norm = (bd - pred).abs();
                        for v in y.iter_mut() {
                            *v /= norm;
                        }
                        let sol = SdpSolution {
                            status: SolveStatus::PrimalInfeasible,
                            x: sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
                            x_free: vec![0.0; nf0],
                            y,
                            z: sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
                            primal_objective: f64::INFINITY,
                            dual_objective: f64::INFINITY,
                            gap: f64::NAN,
                            primal_residual: f64::NAN,
                            dual_residual: f64::NAN,
                            iterations: 0,
                        };
                        return Ok(Presolved::Infeasible(sol));
                    }
                }
                rows = kept;
            }
        }
        let m = rows.len();

        // Row scaling to unit norm.
        let mut row_scale = vec![1.0; m];
        for (i, &orig) in rows.iter().enumerate() {
            let norm2 = gram[(orig, orig)];
            if norm2 > 0.0 {
                row_scale[i] = 1.0 / norm2.sqrt();
            }
        }
        let mut a_blocks: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> = vec![Vec::new(); sizes.len()];
        for (i, &orig) in rows.iter().enumerate() {
            let mut per_block: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); sizes.len()];
            for e in &p.constraints[orig].entries {
                per_block[e.block].push((e.row, e.col, e.value * row_scale[i]));
            }
            for (j, mut ent) in per_block.into_iter().enumerate() {
                if ent.is_empty() {
                    continue;
                }
                ent.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
                let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(ent.len());
                for (r, c, v) in ent {
                    match merged.last_mut() {
                        Some(last) if last.0 == r && last.1 == c => last.2 += v,
                        _ => merged.push((r, c, v)),
                    }
                }
                merged.retain(|e| e.2 != 0.0);
                if !merged.is_empty() {
                    a_blocks[j].push((i, merged));
                }
            }
        }
        let af_all = DMatrix::from_fn(m, nf0, |i, k| af0[(rows[i], k)] * row_scale[i]);
        let mut cf_all: DVector<f64> = DVector::zeros(nf0);
        for &(k, v) in &p.objective.free {
            cf_all[k] += v;
        }

        // Free-column presolve: keep a basis of the column space of A_f.
        let (free_cols, nullspace) = if nf0 > 0 {
            let qr = pivoted_qr(&af_all, 1e-12);
            let rank = qr.rank;
            let free_cols: Vec<usize> = qr.perm[..rank].to_vec();
            let q1 = qr.q.columns(0, rank).into_owned();
            let r1 = qr.r.view((0, 0), (rank, rank)).upper_triangle();
            let n = qr.q.columns(rank, m - rank).into_owned();
            // A dependent column must carry a consistent cost, otherwise moving
            // along it leaves the rows unchanged and lowers the objective.
            for &k in &qr.perm[rank..] {
                let beta = {
                    let t = q1.transpose() * af_all.column(k);
                    r1.solve_upper_triangular(&t).unwrap_or_else(|| DVector::zeros(rank))
                };
                let pred: f64 = free_cols.iter().zip(beta.iter()).map(|(&c, b)| cf_all[c] * b).sum();
                let diff = cf_all[k] - pred;
                if diff.abs() > 1e-9 * (1.0 + cf_all[k].abs() + pred.abs()) {
                    let mut x_free = vec![0.0; nf0];
                    x_free[k] = -diff.signum();
                    for (&c, b) in free_cols.iter().zip(beta.iter()) {
                        x_free[c] = diff.signum() * b;
                    }
                    for v in x_free.iter_mut() {
                        *v /= diff.abs();
                    }
                    return Ok(Presolved::Infeasible(SdpSolution {
                        status: SolveStatus::DualInfeasible,
                        x: sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
                        x_free,
                        y: vec![0.0; m0],
                        z: sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
                        primal_objective: f64::NEG_INFINITY,
                        dual_objective: f64::NEG_INFINITY,
                        gap: f64::NAN,
                        primal_residual: f64::NAN,
                        dual_residual: f64::NAN,
                        iterations: 0,
                    }));
                }
            }
            (free_cols, if rank > 0 { Some(Nullspace { q1, r1, n }) } else { None })
        } else {
            (Vec::new(), None)
        };
        let nf = free_cols.len();
        let af = DMatrix::from_fn(m, nf, |i, k| af_all[(i, free_cols[k])]);
        let mut cf = DVector::from_fn(nf, |k, _| cf_all[free_cols[k]]);
        let mut b = DVector::from_fn(m, |i, _| p.constraints[rows[i]].rhs * row_scale[i]);
        let mut c: Vec<DMatrix<f64>> = (0..sizes.len()).map(|j| p.objective_matrix(j)).collect();
        let normc = (c.iter().map(|m| m.norm_squared()).sum::<f64>() + cf.norm_squared()).sqrt();
        let cs = 1.0 / normc.max(1.0);
        let bs = 1.0 / b.norm().max(1.0);
        for cj in c.iter_mut() {
            *cj *= cs;
        }
        cf *= cs;
        b *= bs;
        Ok(Presolved::Ready(Box::new(Prepared {
            m,
            rows,
            row_scale,
            free_cols,
            sizes,
            a_blocks,
            af,
            b,
            c,
            cf,
            log_det: p.objective.log_det.map(|ld| (ld.block, ld.weight * cs * bs)),
            cs,
            bs,
            nullspace,
        })))
    }

    fn nu(&self) -> f64 {
        self.sizes.iter().sum::<usize>() as f64
    }

    fn apply_a(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (j, rows) in self.a_blocks.iter().enumerate() {
            let xj = &x[j];
            for (i, ent) in rows {
                let mut s = 0.0;
                for &(r, c, v) in ent {
                    s += if r == c { v * xj[(r, c)] } else { v * (xj[(r, c)] + xj[(c, r)]) };
                }
                out[*i] += s;
            }
        }
        out
    }

    fn apply_at(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (j, rows) in self.a_blocks.iter().enumerate() {
            let o = &mut out[j];
            for (i, ent) in rows {
                let yi = y[*i];
                if yi == 0.0 {
                    continue;
                }
                for &(r, c, v) in ent {
                    o[(r, c)] += yi * v;
                    if r != c {
                        o[(c, r)] += yi * v;
                    }
                }
            }
        }
        out
    }

    /// Schur complement `M_ik = sum_j <A_ij, W_j A_kj W_j>`.
    fn schur(&self, scal: &[NtScaling]) -> DMatrix<f64> {
        let mut mat = DMatrix::zeros(self.m, self.m);
        for (j, rows) in self.a_blocks.iter().enumerate() {
            let w = &scal[j].w;
            let n = self.sizes[j];
            for (idx_i, (i, ent_i)) in rows.iter().enumerate() {
                let g = sandwich(w, ent_i, n);
                for (k, ent_k) in rows[..=idx_i].iter() {
                    let mut s = 0.0;
                    for &(r, c, v) in ent_k {
                        s += if r == c { v * g[(r, c)] } else { v * (g[(r, c)] + g[(c, r)]) };
                    }
                    mat[(*i, *k)] += s;
                    if i != k {
                        mat[(*k, *i)] += s;
                    }
                }
            }
        }
        mat
    }

    fn residuals(&self, s: &State) -> Residuals {
        let mut rp = self.apply_a(&s.x);
        rp += &self.af * &s.xf;
        rp -= &self.b * s.tau;
        let aty = self.apply_at(&s.y);
        let rd: Vec<DMatrix<f64>> = aty
            .into_iter()
            .enumerate()
            .map(|(j, m)| m + &s.z[j] - &self.c[j] * s.tau)
            .collect();
        let rf = self.af.transpose() * &s.y - &self.cf * s.tau;
        let rg = self.b.dot(&s.y) - self.lin_obj(&s.x, &s.xf) - s.kappa;
        Residuals { rp, rd, rf, rg }
    }

    fn lin_obj(&self, x: &[DMatrix<f64>], xf: &DVector<f64>) -> f64 {
        x.iter().zip(&self.c).map(|(x, c)| x.dot(c)).sum::<f64>() + self.cf.dot(xf)
    }

    /// Residuals and objectives in the units of the original problem.
    fn measure(&self, s: &State, res: &Residuals, orig_b_norm: f64, orig_c_norm: f64) -> Measures {
        let unscale_p = |i: usize| 1.0 / (self.row_scale[i] * self.bs);
        let pres = (0..self.m).map(|i| (res.rp[i] * unscale_p(i)).powi(2)).sum::<f64>().sqrt() / s.tau;
        let dres = (res.rd.iter().map(|m| m.norm_squared()).sum::<f64>() + res.rf.norm_squared()).sqrt()
            / (self.cs * s.tau);
        let scale = 1.0 / (self.cs * self.bs * s.tau);
        let mut pobj = self.lin_obj(&s.x, &s.xf) * scale;
        let mut dobj = self.b.dot(&s.y) * scale;
        let gap;
        if let Some((blk, wt)) = self.log_det {
            // Only used with tau frozen at one.
            let w_orig = wt / (self.cs * self.bs);
            let n = self.sizes[blk] as f64;
            let ldx = log_det(&s.x[blk]) - n * self.bs.ln();
            let ldz = log_det(&s.z[blk]) - n * self.cs.ln();
            pobj -= w_orig * ldx;
            dobj += w_orig * ldz + w_orig * n * (1.0 - w_orig.ln());
            let xz: f64 = s.x.iter().zip(&s.z).map(|(x, z)| x.dot(z)).sum::<f64>() * scale;
            gap = (xz - w_orig * (ldx + ldz + n - n * w_orig.ln())).abs();
        } else {
            gap = (pobj - dobj).abs();
        }
        Measures {
            pres: pres / (1.0 + orig_b_norm),
            dres: dres / (1.0 + orig_c_norm),
            pobj,
            dobj,
            gap,
        }
    }

    fn mu(&self, s: &State, frozen: bool) -> f64 {
        let xz: f64 = s.x.iter().zip(&s.z).map(|(x, z)| x.dot(z)).sum();
        if frozen {
            let shift = self.log_det.map(|(b, w)| w * self.sizes[b] as f64).unwrap_or(0.0);
            ((xz - shift) / self.nu()).max(0.0)
        } else {
            (xz + s.tau * s.kappa) / (self.nu() + 1.0)
        }
    }

    fn factor(&self, scal: &[NtScaling]) -> Option<Factor> {
        let m_mat = self.schur(scal);
        match &self.nullspace {
            None => {
                let chol = robust_cholesky(&m_mat)?;
                Some(Factor { m_mat, chol })
            }
            Some(ns) => {
                let red = sym(&(ns.n.transpose() * &m_mat * &ns.n));
                let chol = if red.nrows() == 0 {
                    DMatrix::<f64>::identity(0, 0).cholesky()?
                } else {
                    robust_cholesky(&red)?
                };
                Some(Factor { m_mat, chol })
            }
        }
    }

    /// Solves `[M A_f; A_f^T 0] [u; v] = [p; q]` with one refinement step.
    fn kkt_solve(&self, f: &Factor, p: &DVector<f64>, q: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut u, mut v) = self.kkt_solve_once(f, p, q);
        let r1 = p - (&f.m_mat * &u + &self.af * &v);
        let r2 = q - self.af.transpose() * &u;
        if r1.iter().chain(r2.iter()).all(|x| x.is_finite()) {
            let (du, dv) = self.kkt_solve_once(f, &r1, &r2);
            u += du;
            v += dv;
        }
        (u, v)
    }

    fn kkt_solve_once(&self, f: &Factor, p: &DVector<f64>, q: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        match &self.nullspace {
            None => (f.chol.solve(p), DVector::zeros(0)),
            Some(ns) => {
                // u0 = Q1 R1^{-T} q solves A_f^T u0 = q.
                let rt = ns.r1.transpose();
                let t = rt.solve_lower_triangular(q).unwrap_or_else(|| DVector::zeros(q.len()));
                let u0 = &ns.q1 * t;
                let rhs = ns.n.transpose() * (p - &f.m_mat * &u0);
                let zred = if rhs.is_empty() { rhs } else { f.chol.solve(&rhs) };
                let u = u0 + &ns.n * zred;
                let resid = p - &f.m_mat * &u;
                let qtr = ns.q1.transpose() * resid;
                let v = ns.r1.solve_upper_triangular(&qtr).unwrap_or_else(|| DVector::zeros(qtr.len()));
                (u, v)
            }
        }
    }

    fn initial_state(&self) -> State {
        let x: Vec<DMatrix<f64>> = self.sizes.iter().map(|&n| DMatrix::identity(n, n)).collect();
        let mut z = x.clone();
        if let Some((blk, w)) = self.log_det {
            // Start on the shifted centering target for the log-det block.
            let n = self.sizes[blk];
            z[blk] = DMatrix::identity(n, n) * (1.0 + w);
        }
        State { x, xf: DVector::zeros(self.af.ncols()), y: DVector::zeros(self.m), z, tau: 1.0, kappa: 1.0 }
    }

    fn run(&self, p: &SdpProblem, st: &SolverSettings) -> SdpSolution {
        let frozen = self.log_det.is_some();
        let orig_b_norm = p.constraints.iter().map(|c| c.rhs * c.rhs).sum::<f64>().sqrt();
        let orig_c_norm = {
            let cn: f64 = (0..p.blocks.len()).map(|j| p.objective_matrix(j).norm_squared()).sum();
            let fnorm: f64 = p.objective.free.iter().map(|(_, v)| v * v).sum();
            (cn + fnorm).sqrt()
        };
        let mut s = self.initial_state();
        if frozen {
            s.kappa = 0.0;
        }
        let mut best: Option<(f64, State)> = None;
        let mut status = SolveStatus::IterLimit;
        let mut iterations = 0;
        let mut stall = 0;
        let mut since_progress = 0;
        let mut final_state: Option<State> = None;
        let near = 100.0 * st.feas_tol.max(st.gap_tol);

        for it in 0..st.max_iter {
            iterations = it;
            let res = self.residuals(&s);
            let meas = self.measure(&s, &res, orig_b_norm, orig_c_norm);
            let merit = meas.merit();
            match &best {
                Some((b, _)) if merit >= 0.5 * b || !merit.is_finite() => since_progress += 1,
                _ => since_progress = 0,
            }
            if best.as_ref().is_none_or(|(b, _)| merit < *b) && merit.is_finite() {
                best = Some((merit, s.clone()));
            }
            // Stuck at the accuracy floor just short of the tolerances.
            if since_progress >= 15 && best.as_ref().is_some_and(|(b, _)| *b <= near) {
                status = SolveStatus::Inaccurate;
                break;
            }
            if meas.pres <= st.feas_tol
                && meas.dres <= st.feas_tol
                && meas.gap <= st.gap_tol * (1.0 + meas.pobj.abs().min(meas.dobj.abs()))
            {
                status = SolveStatus::Optimal;
                final_state = Some(s.clone());
                break;
            }
            if !frozen {
                if let Some(kind) = self.check_infeasible(&s, &res, st.infeas_tol) {
                    status = kind;
                    final_state = Some(s.clone());
                    break;
                }
            }

            // Newton step.
            let Some(scal) = s
                .x
                .iter()
                .zip(&s.z)
                .map(|(x, z)| NtScaling::new(x, z))
                .collect::<Option<Vec<_>>>()
            else {
                status = SolveStatus::Inaccurate;
                break;
            };
            let Some(fact) = self.factor(&scal) else {
                status = SolveStatus::Inaccurate;
                break;
            };
            let mu = self.mu(&s, frozen);

            // Predictor.
            let t_aff: Vec<DMatrix<f64>> = scal
                .iter()
                .map(|sc| {
                    let mut t = DMatrix::from_diagonal(&sc.lambda.map(|l| -l * l));
                    let _ = &mut t;
                    t
                })
                .enumerate()
                .map(|(j, mut t)| {
                    if let Some((blk, w)) = self.log_det {
                        if blk == j {
                            for i in 0..t.nrows() {
                                t[(i, i)] += w;
                            }
                        }
                    }
                    t
                })
                .collect();
            let aff = self.direction(&s, &res, &scal, &fact, 1.0, &t_aff, -s.tau * s.kappa, frozen);
            let alpha_aff = self.step_length(&s, &scal, &aff, frozen).min(1.0);
            let mu_aff = {
                let trial = self.advance(&s, &aff, alpha_aff);
                self.mu(&trial, frozen)
            };
            let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };

            // Corrector.
            let t_cor: Vec<DMatrix<f64>> = scal
                .iter()
                .enumerate()
                .map(|(j, sc)| {
                    let n = sc.lambda.len();
                    let prod = &aff.dxs[j] * &aff.dzs[j];
                    let corr = sym(&prod);
                    let mut t = -corr;
                    let shift = match self.log_det {
                        Some((blk, w)) if blk == j => w,
                        _ => 0.0,
                    };
                    for i in 0..n {
                        t[(i, i)] += -sc.lambda[i] * sc.lambda[i] + sigma * mu + shift;
                    }
                    t
                })
                .collect();
            let t_tk = -s.tau * s.kappa + sigma * mu - aff.dtau * aff.dkappa;
            let dir = self.direction(&s, &res, &scal, &fact, 1.0 - sigma, &t_cor, t_tk, frozen);
            let alpha_max = self.step_length(&s, &scal, &dir, frozen);
            let mut alpha = (st.step_fraction * alpha_max).min(1.0);
            if !alpha.is_finite() || alpha <= 0.0 {
                status = SolveStatus::Inaccurate;
                break;
            }
            let mut next = self.advance(&s, &dir, alpha);
            let mut tries = 0;
            while !next.x.iter().chain(&next.z).all(|m| m.clone().cholesky().is_some()) && tries < 8 {
                alpha *= 0.5;
                next = self.advance(&s, &dir, alpha);
                tries += 1;
            }
            if tries == 8 {
                status = SolveStatus::Inaccurate;
                break;
            }
            if alpha < 1e-7 {
                stall += 1;
            } else {
                stall = 0;
            }
            s = next;
            if stall >= 5 {
                status = SolveStatus::Inaccurate;
                break;
            }
            if !frozen && (s.tau < 1e-300 || !s.tau.is_finite()) {
                status = SolveStatus::Inaccurate;
                break;
            }
            // Keep the embedding well scaled.
            if !frozen {
                let scale = s.tau + s.kappa;
                if scale > 1e8 || scale < 1e-8 {
                    let f = 1.0 / scale;
                    s.x.iter_mut().for_each(|m| *m *= f);
                    s.z.iter_mut().for_each(|m| *m *= f);
                    s.xf *= f;
                    s.y *= f;
                    s.tau *= f;
                    s.kappa *= f;
                }
            }
            iterations = it + 1;
        }

        if status == SolveStatus::IterLimit && best.as_ref().is_some_and(|(b, _)| *b <= near) {
            status = SolveStatus::Inaccurate;
        }
        let state = match status {
            SolveStatus::Optimal | SolveStatus::PrimalInfeasible | SolveStatus::DualInfeasible => {
                final_state.expect("terminal state recorded")
            }
            _ => best.map(|(_, b)| b).unwrap_or(s),
        };
        self.assemble(p, &state, status, iterations, orig_b_norm, orig_c_norm)
    }

    fn check_infeasible(&self, s: &State, res: &Residuals, tol: f64) -> Option<SolveStatus> {
        // Work in original units.
        let y_orig: DVector<f64> = DVector::from_fn(self.m, |i, _| s.y[i] * self.row_scale[i] / self.cs);
        let bty: f64 = (0..self.m).map(|i| self.b[i] / (self.row_scale[i] * self.bs) * y_orig[i]).sum();
        if bty > 0.0 {
            // ||A^* y + Z|| = ||tau C + R_d|| in scaled units.
            let mut num2 = 0.0;
            for (j, rdj) in res.rd.iter().enumerate() {
                let m = rdj + &self.c[j] * s.tau;
                num2 += m.norm_squared();
            }
            let fr = &res.rf + &self.cf * s.tau;
            num2 += fr.norm_squared();
            let num = num2.sqrt() / self.cs;
            if num <= tol * bty && s.tau <= s.kappa {
                return Some(SolveStatus::PrimalInfeasible);
            }
        }
        let ctx = -self.lin_obj(&s.x, &s.xf) / (self.cs * self.bs);
        if ctx > 0.0 {
            let mut num2 = 0.0;
            for i in 0..self.m {
                let v = (res.rp[i] + self.b[i] * s.tau) / (self.row_scale[i] * self.bs);
                num2 += v * v;
            }
            if num2.sqrt() <= tol * ctx && s.tau <= s.kappa {
                return Some(SolveStatus::DualInfeasible);
            }
        }
        None
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        s: &State,
        res: &Residuals,
        scal: &[NtScaling],
        fact: &Factor,
        eta: f64,
        t_blocks: &[DMatrix<f64>],
        t_tk: f64,
        frozen: bool,
    ) -> Direction {
        let nb = self.sizes.len();
        // D = R S R^T with Lambda o S = T.
        let d: Vec<DMatrix<f64>> = (0..nb)
            .map(|j| {
                let sj = scal[j].solve_lyapunov(&t_blocks[j]);
                sym(&(&scal[j].r * sj * scal[j].r.transpose()))
            })
            .collect();
        let base: Vec<DMatrix<f64>> = (0..nb)
            .map(|j| &d[j] + (&scal[j].w * &res.rd[j] * &scal[j].w) * eta)
            .collect();
        let p1 = -(&res.rp * eta) - self.apply_a(&base);
        let q1 = -(&res.rf * eta);
        let (u1, v1) = self.kkt_solve(fact, &p1, &q1);

        let (dy, dxf, dtau, dkappa);
        if frozen {
            dy = u1;
            dxf = v1;
            dtau = 0.0;
            dkappa = 0.0;
        } else {
            let wcw: Vec<DMatrix<f64>> = (0..nb).map(|j| sym(&(&scal[j].w * &self.c[j] * &scal[j].w))).collect();
            let aw = self.apply_a(&wcw);
            let p2 = &aw + &self.b;
            let q2 = self.cf.clone();
            let (u2, v2) = self.kkt_solve(fact, &p2, &q2);
            let c0: f64 = (0..nb).map(|j| self.c[j].dot(&base[j])).sum();
            let cwc: f64 = (0..nb).map(|j| self.c[j].dot(&wcw[j])).sum();
            let denom = self.b.dot(&u2) - aw.dot(&u2) + cwc - self.cf.dot(&v2) + s.kappa / s.tau;
            let numer = -eta * res.rg - self.b.dot(&u1) + c0 + aw.dot(&u1) + self.cf.dot(&v1) + t_tk / s.tau;
            let dt = numer / denom;
            dy = &u1 + &u2 * dt;
            dxf = &v1 + &v2 * dt;
            dtau = dt;
            dkappa = (t_tk - s.kappa * dt) / s.tau;
        }
        let aty = self.apply_at(&dy);
        let mut dx = Vec::with_capacity(nb);
        let mut dz = Vec::with_capacity(nb);
        let mut dxs = Vec::with_capacity(nb);
        let mut dzs = Vec::with_capacity(nb);
        for j in 0..nb {
            let dzj = sym(&(-(&res.rd[j] * eta) - &aty[j] + &self.c[j] * dtau));
            let dxj = sym(&(&d[j] - &scal[j].w * &dzj * &scal[j].w));
            dxs.push(scal[j].scale_primal(&dxj));
            dzs.push(scal[j].scale_dual(&dzj));
            dx.push(dxj);
            dz.push(dzj);
        }
        Direction { dx, dxf, dy, dz, dtau, dkappa, dxs, dzs }
    }

    fn step_length(&self, s: &State, scal: &[NtScaling], d: &Direction, frozen: bool) -> f64 {
        let mut a = f64::INFINITY;
        for j in 0..self.sizes.len() {
            a = a.min(scal[j].max_step(&d.dxs[j]));
            a = a.min(scal[j].max_step(&d.dzs[j]));
        }
        if !frozen {
            if d.dtau < 0.0 {
                a = a.min(-s.tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                a = a.min(-s.kappa / d.dkappa);
            }
        }
        a
    }

    fn advance(&self, s: &State, d: &Direction, alpha: f64) -> State {
        State {
            x: s.x.iter().zip(&d.dx).map(|(x, dx)| sym(&(x + dx * alpha))).collect(),
            xf: &s.xf + &d.dxf * alpha,
            y: &s.y + &d.dy * alpha,
            z: s.z.iter().zip(&d.dz).map(|(z, dz)| sym(&(z + dz * alpha))).collect(),
            tau: s.tau + alpha * d.dtau,
            kappa: s.kappa + alpha * d.dkappa,
        }
    }

    fn assemble(
        &self,
        p: &SdpProblem,
        s: &State,
        status: SolveStatus,
        iterations: usize,
        orig_b_norm: f64,
        orig_c_norm: f64,
    ) -> SdpSolution {
        let nf0 = p.num_free();
        let m0 = p.num_constraints();
        let res = self.residuals(s);
        let meas = self.measure(s, &res, orig_b_norm, orig_c_norm);
        // Normalization of the returned iterate.
        let (xscale, yscale) = match status {
            SolveStatus::PrimalInfeasible => {
                let bty: f64 = self.b.dot(&s.y) / (self.cs * self.bs);
                (0.0, 1.0 / bty)
            }
            SolveStatus::DualInfeasible => {
                let ctx = -self.lin_obj(&s.x, &s.xf) / (self.cs * self.bs);
                (1.0 / ctx, 0.0)
            }
            _ => (1.0 / s.tau, 1.0 / s.tau),
        };
        let x: Vec<DMatrix<f64>> = s.x.iter().map(|m| m * (xscale / self.bs)).collect();
        let mut x_free = vec![0.0; nf0];
        for (k, &col) in self.free_cols.iter().enumerate() {
            x_free[col] = s.xf[k] * xscale / self.bs;
        }
        let mut y = vec![0.0; m0];
        for (i, &row) in self.rows.iter().enumerate() {
            y[row] = s.y[i] * self.row_scale[i] / self.cs * yscale;
        }
        let z: Vec<DMatrix<f64>> = s.z.iter().map(|m| m * (yscale / self.cs)).collect();
        let (pobj, dobj, gap) = match status {
            SolveStatus::PrimalInfeasible => (f64::INFINITY, f64::INFINITY, f64::NAN),
            SolveStatus::DualInfeasible => (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NAN),
            _ => (meas.pobj, meas.dobj, meas.gap),
        };
        SdpSolution {
            status,
            x,
            x_free,
            y,
            z,
            primal_objective: pobj,
            dual_objective: dobj,
            gap,
            primal_residual: meas.pres,
            dual_residual: meas.dres,
            iterations,
        }
    }
}

struct Factor {
    m_mat: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dxf: DVector<f64>,
    dy: DVector<f64>,
    dz: Vec<DMatrix<f64>>,
    dtau: f64,
    dkappa: f64,
    dxs: Vec<DMatrix<f64>>,
    dzs: Vec<DMatrix<f64>>,
}

/// `W A W` for a sparse symmetric `A`.
fn sandwich(w: &DMatrix<f64>, ent: &[(usize, usize, f64)], n: usize) -> DMatrix<f64> {
    if ent.len() < n {
        let mut g = DMatrix::zeros(n, n);
        for &(r, c, v) in ent {
            let wr = w.column(r);
            let wc = w.column(c);
            if r == c {
                g.ger(v, &wr, &wr, 1.0);
            } else {
                g.ger(v, &wr, &wc, 1.0);
                g.ger(v, &wc, &wr, 1.0);
            }
        }
        g
    } else {
        // T = A W, then W T.
        let mut t = DMatrix::zeros(n, n);
        for &(r, c, v) in ent {
            for k in 0..n {
                t[(r, k)] += v * w[(c, k)];
                if r != c {
                    t[(c, k)] += v * w[(r, k)];
                }
            }
        }
        w * t
    }
}

fn log_det(m: &DMatrix<f64>) -> f64 {
    match m.clone().cholesky() {
        Some(ch) => 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => f64::NEG_INFINITY,
    }
}

/// Gram matrix `<A_i, A_k>` of the block parts of the constraint rows.
fn gram_of_rows(p: &SdpProblem, sizes: &[usize]) -> DMatrix<f64> {
    use std::collections::BTreeMap;
    let m = p.num_constraints();
    let mut g = DMatrix::zeros(m, m);
    // position -> list of (row, coefficient); off-diagonal positions weigh 2.
    let mut by_pos: BTreeMap<(usize, usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
    for (i, c) in p.constraints.iter().enumerate() {
        for e in &c.entries {
            by_pos.entry((e.block, e.row, e.col)).or_default().push((i, e.value));
        }
    }
    let _ = sizes;
    for ((_, r, c), list) in by_pos {
        let wgt = if r == c { 1.0 } else { 2.0 };
        for &(i, vi) in &list {
            for &(k, vk) in &list {
                g[(i, k)] += wgt * vi * vk;
            }
        }
    }
    g
}
