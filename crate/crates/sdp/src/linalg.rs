//! Small dense kernels the interior-point loop needs on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Symmetric part `(A + A^T) / 2`.
pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(sym(a)).eigenvalues.min()
}

/// Nesterov-Todd scaling of a primal-dual pair of positive definite blocks.
///
/// `r` satisfies `r^T Z r = r^{-1} X r^{-T} = diag(lambda)`, and the scaling
/// matrix is `W = r r^T`, so that `W Z W = X`.
#[derive(Debug, Clone)]
pub struct NtScaling {
    pub r: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub w: DMatrix<f64>,
}

impl NtScaling {
    pub fn new(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Self> {
        let l1 = x.clone().cholesky()?.l();
        let l2 = z.clone().cholesky()?.l();
        let prod = l2.transpose() * &l1;
        let svd = prod.try_svd(true, true, 1e-15, 200)?;
        let (u, v_t) = (svd.u?, svd.v_t?);
        let lambda = svd.singular_values;
        if lambda.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return None;
        }
        let n = x.nrows();
        // r = L1 V diag(lambda^{-1/2});  r^{-1} = diag(lambda^{1/2}) V^T L1^{-1}
        let v = v_t.transpose();
        let mut r = &l1 * &v;
        for j in 0..n {
            let s = lambda[j].sqrt();
            for i in 0..n {
                r[(i, j)] /= s;
            }
        }
        // Equivalent form avoiding L1^{-1}: r^{-1} = diag(lambda^{-1/2}) U^T L2^T.
        let mut r_inv = u.transpose() * l2.transpose();
        for i in 0..n {
            let s = lambda[i].sqrt();
            for j in 0..n {
                r_inv[(i, j)] /= s;
            }
        }
        let w = &r * r.transpose();
        Some(NtScaling { r, r_inv, lambda, w: sym(&w) })
    }

    /// Maps a primal direction into the scaled space: `r^{-1} dX r^{-T}`.
    pub fn scale_primal(&self, dx: &DMatrix<f64>) -> DMatrix<f64> {
        sym(&(&self.r_inv * dx * self.r_inv.transpose()))
    }

    /// Maps a dual direction into the scaled space: `r^T dZ r`.
    pub fn scale_dual(&self, dz: &DMatrix<f64>) -> DMatrix<f64> {
        sym(&(self.r.transpose() * dz * &self.r))
    }

    /// Solves `Lambda o S = T` for symmetric `S`, where `o` is the
    /// symmetrized product and `Lambda` is diagonal.
    pub fn solve_lyapunov(&self, t: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.lambda.len();
        DMatrix::from_fn(n, n, |i, j| 2.0 * t[(i, j)] / (self.lambda[i] + self.lambda[j]))
    }

    /// Largest step `alpha` keeping `diag(lambda) + alpha * d` PSD.
    pub fn max_step(&self, d: &DMatrix<f64>) -> f64 {
        let n = self.lambda.len();
        let s = DMatrix::from_fn(n, n, |i, j| {
            -d[(i, j)] / (self.lambda[i].sqrt() * self.lambda[j].sqrt())
        });
        let top = SymmetricEigen::new(sym(&s)).eigenvalues.max();
        if top <= 0.0 {
            f64::INFINITY
        } else {
            1.0 / top
        }
    }
}

/// Householder QR with column pivoting.  Returns the full orthogonal factor,
/// the upper-triangular factor, the column permutation and the numerical rank.
pub struct PivotedQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub perm: Vec<usize>,
    pub rank: usize,
}

pub fn pivoted_qr(a: &DMatrix<f64>, rel_tol: f64) -> PivotedQr {
    let (m, n) = a.shape();
    let mut r = a.clone();
    let mut q = DMatrix::<f64>::identity(m, m);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = (0..n).map(|j| r.column(j).norm_squared()).collect();
    let steps = m.min(n);
    let mut rank = 0;
    let mut first = 0.0;
    for k in 0..steps {
        let (mut best, mut best_norm) = (k, -1.0);
        for j in k..n {
            let nj: f64 = (k..m).map(|i| r[(i, j)] * r[(i, j)]).sum();
            norms[j] = nj;
            if nj > best_norm {
                best_norm = nj;
                best = j;
            }
        }
        if best != k {
            r.swap_columns(k, best);
            perm.swap(k, best);
            norms.swap(k, best);
        }
        let alpha_abs = best_norm.sqrt();
        if k == 0 {
            first = alpha_abs;
        }
        if alpha_abs <= rel_tol * first.max(f64::MIN_POSITIVE) {
            break;
        }
        rank += 1;
        let alpha = if r[(k, k)] >= 0.0 { -alpha_abs } else { alpha_abs };
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..n {
            let s: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                r[(i, j)] -= s * v[i - k];
            }
        }
        for row in 0..m {
            let s: f64 = (k..m).map(|i| q[(row, i)] * v[i - k]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                q[(row, i)] -= s * v[i - k];
            }
        }
    }
    PivotedQr { q, r, perm, rank }
}

/// Cholesky factorization with escalating diagonal regularization.
pub fn robust_cholesky(a: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = a.clone().cholesky() {
        return Some(c);
    }
    let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut delta = 1e-14 * scale;
    while delta < 1e-4 * scale {
        let mut reg = a.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += delta;
        }
        if let Some(c) = reg.cholesky() {
            return Some(c);
        }
        delta *= 100.0;
    }
    None
}
