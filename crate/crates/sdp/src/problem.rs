//! Standard-form semidefinite programs with free scalars.
//!
//! The primal problem is
//!
//! ```text
//! minimize    sum_j <C_j, X_j> + c_f^T x_f - w log det X_B
//! subject to  sum_j <A_ij, X_j> + a_i^T x_f = b_i     (i = 1..m)
//!             X_j PSD,  x_f free
//! ```
//!
//! and its dual is
//!
//! ```text
//! maximize    b^T y (+ log-det terms)
//! subject to  Z_j = C_j - sum_i y_i A_ij  PSD,   A_f^T y = c_f
//! ```
//!
//! Symmetric matrices are stored as upper-triangular coordinate lists; an
//! off-diagonal entry `(r, c, v)` stands for both `(r, c)` and `(c, r)`.

use crate::error::SdpError;
use nalgebra::DMatrix;

/// A PSD block variable.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub name: String,
    pub size: usize,
}

/// One upper-triangular entry of a symmetric coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Entry {
    /// Builds an entry, swapping indices so that `row <= col`.
    pub fn new(block: usize, row: usize, col: usize, value: f64) -> Self {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        Entry { block, row, col, value }
    }
}

/// A linear equality `sum <A_j, X_j> + a^T x_f = rhs`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Constraint {
    pub entries: Vec<Entry>,
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Weighted log-determinant reward on one block: the objective gains
/// `-weight * log det X_block` (so minimizing it maximizes the determinant).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    pub block: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Objective {
    pub entries: Vec<Entry>,
    pub free: Vec<(usize, f64)>,
    pub log_det: Option<LogDet>,
}

/// A semidefinite program in standard (primal) form.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdpProblem {
    pub blocks: Vec<BlockSpec>,
    pub free_names: Vec<String>,
    pub constraints: Vec<Constraint>,
    pub objective: Objective,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a PSD block and returns its index.
    pub fn add_block(&mut self, name: impl Into<String>, size: usize) -> usize {
        self.blocks.push(BlockSpec { name: name.into(), size });
        self.blocks.len() - 1
    }

    /// Adds a free scalar and returns its index.
    pub fn add_free(&mut self, name: impl Into<String>) -> usize {
        self.free_names.push(name.into());
        self.free_names.len() - 1
    }

    pub fn add_constraint(&mut self, c: Constraint) -> usize {
        self.constraints.push(c);
        self.constraints.len() - 1
    }

    pub fn num_free(&self) -> usize {
        self.free_names.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn block_index(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    /// Total number of scalar unknowns (upper triangles plus free scalars).
    pub fn num_variables(&self) -> usize {
        self.blocks.iter().map(|b| b.size * (b.size + 1) / 2).sum::<usize>() + self.num_free()
    }

    /// Checks indices, symmetry layout and finiteness.
    pub fn validate(&self) -> Result<(), SdpError> {
        for b in &self.blocks {
            if b.size == 0 {
                return Err(SdpError::InvalidProblem(format!("block `{}` has size 0", b.name)));
            }
        }
        let check_entry = |e: &Entry, ctx: &str| -> Result<(), SdpError> {
            let Some(block) = self.blocks.get(e.block) else {
                return Err(SdpError::InvalidProblem(format!("{ctx}: block {} out of range", e.block)));
            };
            if e.row > e.col || e.col >= block.size {
                return Err(SdpError::InvalidProblem(format!(
                    "{ctx}: entry ({}, {}) invalid for block `{}` of size {}",
                    e.row, e.col, block.name, block.size
                )));
            }
            if !e.value.is_finite() {
                return Err(SdpError::InvalidProblem(format!("{ctx}: non-finite coefficient")));
            }
            Ok(())
        };
        let check_free = |&(k, v): &(usize, f64), ctx: &str| -> Result<(), SdpError> {
            if k >= self.num_free() {
                return Err(SdpError::InvalidProblem(format!("{ctx}: free variable {k} out of range")));
            }
            if !v.is_finite() {
                return Err(SdpError::InvalidProblem(format!("{ctx}: non-finite coefficient")));
            }
            Ok(())
        };
        for (i, c) in self.constraints.iter().enumerate() {
            let ctx = format!("constraint {i}");
            for e in &c.entries {
                check_entry(e, &ctx)?;
            }
            for f in &c.free {
                check_free(f, &ctx)?;
            }
            if !c.rhs.is_finite() {
                return Err(SdpError::InvalidProblem(format!("{ctx}: non-finite right-hand side")));
            }
        }
        for e in &self.objective.entries {
            check_entry(e, "objective")?;
        }
        for f in &self.objective.free {
            check_free(f, "objective")?;
        }
        if let Some(ld) = self.objective.log_det {
            if ld.block >= self.blocks.len() {
                return Err(SdpError::InvalidProblem("log-det block out of range".into()));
            }
            if !(ld.weight > 0.0 && ld.weight.is_finite()) {
                return Err(SdpError::InvalidProblem("log-det weight must be positive".into()));
            }
        }
        Ok(())
    }

    /// Dense symmetric matrix of the objective on block `j`.
    pub fn objective_matrix(&self, j: usize) -> DMatrix<f64> {
        dense_block(&self.objective.entries, j, self.blocks[j].size)
    }

    /// Dense symmetric matrix of constraint `i` on block `j`.
    pub fn constraint_matrix(&self, i: usize, j: usize) -> DMatrix<f64> {
        dense_block(&self.constraints[i].entries, j, self.blocks[j].size)
    }

    /// `sum_j <A_ij, X_j> + a_i^T x_f` for every constraint.
    pub fn apply(&self, x: &[DMatrix<f64>], xf: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| {
                let mut s = 0.0;
                for e in &c.entries {
                    s += entry_inner(e, &x[e.block]);
                }
                for &(k, v) in &c.free {
                    s += v * xf[k];
                }
                s
            })
            .collect()
    }

    /// Linear part of the primal objective.
    pub fn linear_objective(&self, x: &[DMatrix<f64>], xf: &[f64]) -> f64 {
        let mut s = 0.0;
        for e in &self.objective.entries {
            s += entry_inner(e, &x[e.block]);
        }
        for &(k, v) in &self.objective.free {
            s += v * xf[k];
        }
        s
    }
}

/// `<E, X>` for the symmetric matrix represented by one stored entry.
pub(crate) fn entry_inner(e: &Entry, x: &DMatrix<f64>) -> f64 {
    if e.row == e.col {
        e.value * x[(e.row, e.col)]
    } else {
        e.value * (x[(e.row, e.col)] + x[(e.col, e.row)])
    }
}

pub(crate) fn dense_block(entries: &[Entry], block: usize, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for e in entries.iter().filter(|e| e.block == block) {
        m[(e.row, e.col)] += e.value;
        if e.row != e.col {
            m[(e.col, e.row)] += e.value;
        }
    }
    m
}
