//! Shared linear algebra: a small CSR matrix, conjugate gradients, dense
//! direct solves with residual reporting, and a MatrixMarket dump for
//! offline inspection.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Compressed sparse row matrix assembled from triplets.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> CsrMatrix {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); nrows];
        for (i, j, v) in triplets {
            *rows[i].entry(j).or_insert(0.0) += v;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (j, v) in row {
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.nrows {
            let xi = x[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * xi;
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows.min(self.ncols)];
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] = self.values[k];
                }
            }
        }
        d
    }

    /// Writes the matrix in MatrixMarket coordinate format.
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.values.len())?;
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(out, "{} {} {:.17e}", i + 1, self.col_idx[k] + 1, self.values[k])?;
            }
        }
        Ok(())
    }
}

/// Outcome report of a linear solve.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LinearSolveReport {
    /// Relative residual |Ax - b| / |b|.
    pub residual: f64,
    /// Iteration count for iterative modes, 0 for direct.
    pub iterations: usize,
    /// Smallest pivot magnitude relative to the largest (direct modes).
    pub pivot_health: f64,
}

/// Solver mode for the dense front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    DirectSymmetricIndefinite,
    DirectSpd,
    Cg,
}

/// Dense direct or CG solve with a residual report.
pub fn linear_solve(
    matrix: &DMatrix<f64>,
    rhs: &DVector<f64>,
    mode: SolveMode,
) -> Result<(DVector<f64>, LinearSolveReport)> {
    if matrix.nrows() != rhs.len() || !matrix.is_square() {
        return Err(Error::SingularSystem(format!(
            "dimension mismatch: {}x{} vs rhs {}",
            matrix.nrows(),
            matrix.ncols(),
            rhs.len()
        )));
    }
    let bnorm = rhs.norm().max(f64::MIN_POSITIVE);
    match mode {
        SolveMode::DirectSpd => {
            let chol = matrix
                .clone()
                .cholesky()
                .ok_or_else(|| Error::SingularSystem("matrix is not SPD".into()))?;
            let x = chol.solve(rhs);
            let res = (matrix * &x - rhs).norm() / bnorm;
            let diag = chol.l().diagonal();
            let pivot_health = diag.min() / diag.max();
            Ok((
                x,
                LinearSolveReport {
                    residual: res,
                    iterations: 0,
                    pivot_health,
                },
            ))
        }
        SolveMode::DirectSymmetricIndefinite => {
            let lu = matrix.clone().lu();
            let x = lu
                .solve(rhs)
                .ok_or_else(|| Error::SingularSystem("LU solve failed".into()))?;
            let u_diag = lu.u().diagonal().map(|d| d.abs());
            let pivot_health = u_diag.min() / u_diag.max().max(f64::MIN_POSITIVE);
            if pivot_health < 1e-14 {
                return Err(Error::SingularSystem(format!(
                    "pivot ratio {pivot_health:.3e}"
                )));
            }
            let res = (matrix * &x - rhs).norm() / bnorm;
            Ok((
                x,
                LinearSolveReport {
                    residual: res,
                    iterations: 0,
                    pivot_health,
                },
            ))
        }
        SolveMode::Cg => {
            let apply = |x: &[f64], y: &mut [f64]| {
                let xv = DVector::from_column_slice(x);
                let yv = matrix * xv;
                y.copy_from_slice(yv.as_slice());
            };
            let mut x = vec![0.0; rhs.len()];
            let report = cg_solve(
                &apply,
                rhs.as_slice(),
                &mut x,
                &CgOptions {
                    tol: 1e-12,
                    max_iter: 10 * rhs.len() + 100,
                    precond_diag: None,
                    project: None,
                },
            )?;
            Ok((DVector::from_vec(x), report))
        }
    }
}

/// Options for the conjugate gradient solver.
pub struct CgOptions<'a> {
    /// Relative residual target.
    pub tol: f64,
    pub max_iter: usize,
    /// Jacobi preconditioner diagonal (must be positive).
    pub precond_diag: Option<&'a [f64]>,
    /// Projection applied to rhs, iterates and directions (for singular
    /// systems: projects out the known kernel).
    pub project: Option<&'a dyn Fn(&mut [f64])>,
}

/// Preconditioned CG on an operator given as a matvec closure. The operator
/// must be symmetric positive (semi)definite on the projected subspace.
pub fn cg_solve(
    apply: &dyn Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    x: &mut [f64],
    opts: &CgOptions,
) -> Result<LinearSolveReport> {
    let n = rhs.len();
    let mut b = rhs.to_vec();
    if let Some(p) = opts.project {
        p(&mut b);
    }
    let bnorm = norm(&b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(LinearSolveReport {
            residual: 0.0,
            iterations: 0,
            pivot_health: 1.0,
        });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if let Some(p) = opts.project {
        p(&mut r);
    }
    let precond = |z: &mut [f64], r: &[f64]| {
        match opts.precond_diag {
            Some(d) => {
                for i in 0..z.len() {
                    z[i] = r[i] / d[i];
                }
            }
            None => z.copy_from_slice(r),
        }
    };
    let mut z = vec![0.0; n];
    precond(&mut z, &r);
    if let Some(p) = opts.project {
        p(&mut z);
    }
    let mut p_dir = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..opts.max_iter {
        let rnorm = norm(&r);
        if rnorm <= opts.tol * bnorm {
            return Ok(LinearSolveReport {
                residual: rnorm / bnorm,
                iterations: it,
                pivot_health: 1.0,
            });
        }
        apply(&p_dir, &mut ap);
        if let Some(pr) = opts.project {
            pr(&mut ap);
        }
        let pap = dot(&p_dir, &ap);
        if pap <= 0.0 {
            return Err(Error::SingularSystem(format!(
                "CG direction with non-positive curvature ({pap:.3e})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p_dir[i];
            r[i] -= alpha * ap[i];
        }
        if let Some(pr) = opts.project {
            pr(&mut r);
        }
        precond(&mut z, &r);
        if let Some(pr) = opts.project {
            pr(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p_dir[i] = z[i] + beta * p_dir[i];
        }
    }
    let rnorm = norm(&r) / bnorm;
    if rnorm <= opts.tol * 10.0 {
        // Close enough to report rather than fail hard.
        return Ok(LinearSolveReport {
            residual: rnorm,
            iterations: opts.max_iter,
            pivot_health: 1.0,
        });
    }
    Err(Error::MaxIterations(format!(
        "CG stalled at relative residual {rnorm:.3e} after {} iterations",
        opts.max_iter
    )))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
