//! Independent a-posteriori checks of a returned solution, computed on the
//! original (unscaled) problem data.

use crate::linalg::min_eigenvalue;
use crate::problem::SdpProblem;
use crate::solver::{SdpSolution, SolveStatus, SolverSettings};
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    /// `||A(X) + A_f x_f - b||`.
    pub primal_residual: f64,
    /// `||C - A^*(y) - Z||` over all blocks.
    pub dual_residual: f64,
    /// `||A_f^T y - c_f||`.
    pub free_residual: f64,
    pub min_eig_x: f64,
    pub min_eig_z: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

/// `A^*(y) = sum_i y_i A_i` as dense blocks.
pub fn adjoint(p: &SdpProblem, y: &[f64]) -> Vec<DMatrix<f64>> {
    let mut out: Vec<DMatrix<f64>> = p.blocks.iter().map(|b| DMatrix::zeros(b.size, b.size)).collect();
    for (c, &yi) in p.constraints.iter().zip(y) {
        for e in &c.entries {
            out[e.block][(e.row, e.col)] += yi * e.value;
            if e.row != e.col {
                out[e.block][(e.col, e.row)] += yi * e.value;
            }
        }
    }
    out
}

fn free_adjoint(p: &SdpProblem, y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.num_free()];
    for (c, &yi) in p.constraints.iter().zip(y) {
        for &(k, v) in &c.free {
            out[k] += yi * v;
        }
    }
    out
}

pub fn verify(p: &SdpProblem, sol: &SdpSolution) -> Verification {
    let ax = p.apply(&sol.x, &sol.x_free);
    let primal_residual = ax
        .iter()
        .zip(&p.constraints)
        .map(|(a, c)| (a - c.rhs).powi(2))
        .sum::<f64>()
        .sqrt();
    let aty = adjoint(p, &sol.y);
    let mut dual2 = 0.0;
    for j in 0..p.blocks.len() {
        let r = p.objective_matrix(j) - &aty[j] - &sol.z[j];
        dual2 += r.norm_squared();
    }
    let mut cf = vec![0.0; p.num_free()];
    for &(k, v) in &p.objective.free {
        cf[k] += v;
    }
    let free_residual = free_adjoint(p, &sol.y)
        .iter()
        .zip(&cf)
        .map(|(a, c)| (a - c).powi(2))
        .sum::<f64>()
        .sqrt();
    let min_eig_x = sol.x.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min);
    let min_eig_z = sol.z.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min);
    let mut primal_objective = p.linear_objective(&sol.x, &sol.x_free);
    let mut dual_objective: f64 = p.constraints.iter().zip(&sol.y).map(|(c, y)| c.rhs * y).sum();
    if let Some(ld) = p.objective.log_det {
        let n = p.blocks[ld.block].size as f64;
        let w = ld.weight;
        primal_objective -= w * log_det(&sol.x[ld.block]);
        dual_objective += w * log_det(&sol.z[ld.block]) + w * n * (1.0 - w.ln());
    }
    Verification {
        primal_residual,
        dual_residual: dual2.sqrt(),
        free_residual,
        min_eig_x,
        min_eig_z,
        primal_objective,
        dual_objective,
    }
}

/// Residual report for a returned solution, with any disagreement between
/// the recomputed quantities and the reported status listed in `flags`.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifyReport {
    pub verification: Verification,
    /// `sum_j <X_j, Z_j>`.
    pub complementarity: f64,
    pub flags: Vec<String>,
}

impl CertifyReport {
    pub fn consistent(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Recomputes residuals and checks them against the reported status.  The
/// relative measures mirror the solver's stopping test; a slack factor of
/// ten absorbs the difference between scaled and unscaled arithmetic.
pub fn certify(p: &SdpProblem, sol: &SdpSolution, settings: &SolverSettings) -> CertifyReport {
    let mut flags = Vec::new();
    let v = verify(p, sol);
    let complementarity: f64 = sol.x.iter().zip(&sol.z).map(|(x, z)| x.dot(z)).sum();
    let b_norm = p.constraints.iter().map(|c| c.rhs * c.rhs).sum::<f64>().sqrt();
    let c_norm = {
        let cn: f64 = (0..p.blocks.len()).map(|j| p.objective_matrix(j).norm_squared()).sum();
        let fnorm: f64 = p.objective.free.iter().map(|(_, v)| v * v).sum();
        (cn + fnorm).sqrt()
    };
    let slack = 10.0;
    match sol.status {
        SolveStatus::Optimal => {
            let pres = v.primal_residual / (1.0 + b_norm);
            let dres = (v.dual_residual.powi(2) + v.free_residual.powi(2)).sqrt() / (1.0 + c_norm);
            if pres > slack * settings.feas_tol {
                flags.push(format!("primal residual {pres:.3e} exceeds tolerance"));
            }
            if dres > slack * settings.feas_tol {
                flags.push(format!("dual residual {dres:.3e} exceeds tolerance"));
            }
            let gap = (v.primal_objective - v.dual_objective).abs();
            let scale = 1.0 + v.primal_objective.abs().min(v.dual_objective.abs());
            if gap > slack * settings.gap_tol * scale {
                flags.push(format!("duality gap {gap:.3e} exceeds tolerance"));
            }
            let eig_tol = 1e-9 * (1.0 + sol.x.iter().map(|m| m.norm()).fold(0.0, f64::max));
            if v.min_eig_x < -eig_tol {
                flags.push(format!("primal block has eigenvalue {:.3e}", v.min_eig_x));
            }
            if v.min_eig_z < -1e-9 * (1.0 + sol.z.iter().map(|m| m.norm()).fold(0.0, f64::max)) {
                flags.push(format!("dual slack has eigenvalue {:.3e}", v.min_eig_z));
            }
        }
        SolveStatus::PrimalInfeasible => {
            let (bty, viol) = farkas_violation(p, &sol.y);
            if !(bty > 0.0) || viol > slack * settings.infeas_tol * bty {
                flags.push(format!("Farkas certificate invalid: b^T y = {bty:.3e}, violation {viol:.3e}"));
            }
        }
        SolveStatus::DualInfeasible => {
            let ax = p.apply(&sol.x, &sol.x_free);
            let cx = p.linear_objective(&sol.x, &sol.x_free);
            let ray: f64 = ax.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(cx < 0.0) || ray > slack * settings.infeas_tol * (-cx) || v.min_eig_x < -1e-9 {
                flags.push(format!("unboundedness ray invalid: c^T x = {cx:.3e}, ||A x|| = {ray:.3e}"));
            }
        }
        SolveStatus::Inaccurate | SolveStatus::IterLimit => {}
    }
    CertifyReport { verification: v, complementarity, flags }
}

/// Quality of a Farkas certificate `y` for primal infeasibility:
/// returns `(b^T y, violation)` where the violation measures how far
/// `-A^*(y)` is from PSD and `A_f^T y` from zero.
pub fn farkas_violation(p: &SdpProblem, y: &[f64]) -> (f64, f64) {
    let bty: f64 = p.constraints.iter().zip(y).map(|(c, y)| c.rhs * y).sum();
    let aty = adjoint(p, y);
    let mut viol: f64 = 0.0;
    for m in &aty {
        viol = viol.max((-min_eigenvalue(&(-m))).max(0.0));
    }
    let fr: f64 = free_adjoint(p, y).iter().map(|v| v * v).sum::<f64>().sqrt();
    (bty, viol.max(fr))
}

fn log_det(m: &DMatrix<f64>) -> f64 {
    match m.clone().cholesky() {
        Some(ch) => 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => f64::NEG_INFINITY,
    }
}
