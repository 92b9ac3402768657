//! Linear solvers: SPD, general, saddle-point and bordered systems.
//!
//! Direct sparse factorizations come from `faer`. Every solve checks its
//! residual afterwards (with a few steps of iterative refinement) and
//! reports a violation as an error instead of returning a bad vector.

use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::{Col, Side};
use faer::prelude::Solve;

use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, SparseMatrix, TripletBuilder};

/// Default relative tolerance of all linear solves.
pub const DEFAULT_TOL: f64 = 1e-10;

const REFINEMENT_STEPS: usize = 4;

enum Kind {
    Cholesky(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

/// A sparse direct factorization that keeps its matrix for residual checks.
pub struct Factorization {
    matrix: SparseMatrix,
    kind: Kind,
}

impl Factorization {
    /// Cholesky factorization; fails if the matrix is not positive definite.
    pub fn cholesky(a: &SparseMatrix) -> Result<Self> {
        check_square(a)?;
        let llt = a
            .to_faer()?
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Factorization(format!("Cholesky: {e:?}")))?;
        Ok(Self {
            matrix: a.clone(),
            kind: Kind::Cholesky(llt),
        })
    }

    /// LU factorization with partial pivoting.
    pub fn lu(a: &SparseMatrix) -> Result<Self> {
        check_square(a)?;
        let lu = a
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::Factorization(format!("LU: {e:?}")))?;
        Ok(Self {
            matrix: a.clone(),
            kind: Kind::Lu(lu),
        })
    }

    /// Cholesky if possible, LU otherwise.
    pub fn symmetric_or_general(a: &SparseMatrix) -> Result<Self> {
        match Self::cholesky(a) {
            Ok(f) => Ok(f),
            Err(_) => Self::lu(a),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Col::<f64>::from_fn(b.len(), |i| b[i]);
        let x = match &self.kind {
            Kind::Cholesky(f) => f.solve(&rhs),
            Kind::Lu(f) => f.solve(&rhs),
        };
        (0..b.len()).map(|i| x[i]).collect()
    }

    /// Further refinement of `x` while the largest residual entry keeps
    /// decreasing. Used where entrywise accuracy matters more than the
    /// Euclidean bound of [`Factorization::solve`].
    pub fn polish(&self, b: &[f64], mut x: Vec<f64>) -> Vec<f64> {
        let max_abs = |r: &[f64]| r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut res = residual(&self.matrix, &x, b);
        let mut worst = max_abs(&res);
        for _ in 0..REFINEMENT_STEPS {
            let dx = self.raw_solve(&res);
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
            let trial_res = residual(&self.matrix, &trial, b);
            let trial_worst = max_abs(&trial_res);
            if !(trial_worst < worst) {
                break;
            }
            x = trial;
            res = trial_res;
            worst = trial_worst;
        }
        x
    }

    /// Solves `A x = b` with `||A x - b|| <= tol ||b||`.
    pub fn solve(&self, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "right-hand side",
                expected: self.dim(),
                got: b.len(),
            });
        }
        let bound = tol * norm2(b);
        let mut x = self.raw_solve(b);
        let mut res = residual(&self.matrix, &x, b);
        let mut rnorm = norm2(&res);
        for _ in 0..REFINEMENT_STEPS {
            if rnorm <= bound || !rnorm.is_finite() {
                break;
            }
            let dx = self.raw_solve(&res);
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
            let trial_res = residual(&self.matrix, &trial, b);
            let trial_norm = norm2(&trial_res);
            if trial_norm >= rnorm {
                break;
            }
            x = trial;
            res = trial_res;
            rnorm = trial_norm;
        }
        if !(rnorm <= bound) {
            return Err(Error::ResidualCheck {
                what: "||Ax - b||",
                value: rnorm,
                bound,
            });
        }
        Ok(x)
    }
}

fn check_square(a: &SparseMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            what: "square matrix",
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    Ok(())
}

/// `b - A x`
pub fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.mul_vec(x);
    b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
}

/// Solves an SPD system by sparse Cholesky.
pub fn solve_spd(a: &SparseMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    Factorization::cholesky(a)?.solve(b, tol)
}

/// Solves a general square system by sparse LU.
pub fn solve_general(a: &SparseMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    Factorization::lu(a)?.solve(b, tol)
}

/// Jacobi-preconditioned conjugate gradients, capped at `10 n` iterations.
pub fn pcg(a: &SparseMatrix, b: &[f64], x0: Option<&[f64]>, tol: f64) -> Result<Vec<f64>> {
    check_square(a)?;
    let n = a.nrows();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let bnorm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut r = residual(a, &x, b);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let cap = 10 * n.max(1);
    for _ in 0..cap {
        if norm2(&r) <= tol * bnorm {
            return Ok(x);
        }
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Factorization(
                "conjugate gradients met a non-positive curvature direction".into(),
            ));
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = norm2(&r) / bnorm;
    if rel <= tol {
        Ok(x)
    } else {
        Err(Error::NotConverged {
            iterations: cap,
            residual: rel,
        })
    }
}

/// Solves `M p + B^T y = f`, `B p = g`.
///
/// The full KKT matrix is factored by sparse LU; both block residuals are
/// checked against `tol ||(f, g)||`.
pub fn solve_saddle(
    m: &SparseMatrix,
    b: &SparseMatrix,
    f: &[f64],
    g: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let np = m.nrows();
    let ny = b.nrows();
    if b.ncols() != np || f.len() != np || g.len() != ny {
        return Err(Error::DimensionMismatch {
            what: "saddle-point blocks",
            expected: np,
            got: b.ncols(),
        });
    }
    let mut kkt = TripletBuilder::with_capacity(np + ny, np + ny, m.nnz() + 2 * b.nnz());
    for (i, j, v) in m.triplets() {
        kkt.push(i, j, v);
    }
    for (i, j, v) in b.triplets() {
        kkt.push(np + i, j, v);
        kkt.push(j, np + i, v);
    }
    let kkt = kkt.build(true);
    let rhs: Vec<f64> = f.iter().chain(g).copied().collect();
    let fact = Factorization::lu(&kkt)?;
    let sol = fact.solve(&rhs, tol)?;
    let sol = fact.polish(&rhs, sol);
    let (p, y) = sol.split_at(np);
    Ok((p.to_vec(), y.to_vec()))
}

/// Solves `A x + mu c = b`, `c^T x = beta` by block elimination with a
/// single factorization of `A`.
pub fn solve_bordered(
    a: &SparseMatrix,
    c: &[f64],
    b: &[f64],
    beta: f64,
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let fact = Factorization::symmetric_or_general(a)?;
    solve_bordered_with(&fact, c, b, beta, tol)
}

/// [`solve_bordered`] with a precomputed factorization of `A`.
pub fn solve_bordered_with(
    fact: &Factorization,
    c: &[f64],
    b: &[f64],
    beta: f64,
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let n = fact.dim();
    if c.len() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            what: "bordered system",
            expected: n,
            got: c.len().min(b.len()),
        });
    }
    // Inner solves run tighter so the combined residual stays below `tol`.
    let inner = tol * 1e-2;
    let w = fact.solve(c, inner)?;
    let x0 = fact.solve(b, inner)?;
    let ctw = dot(c, &w);
    if !(ctw.abs() > f64::EPSILON * norm2(c) * norm2(&w)) {
        return Err(Error::DegenerateConstraint(ctw));
    }
    let mu = (dot(c, &x0) - beta) / ctw;
    let x: Vec<f64> = x0.iter().zip(&w).map(|(a, b)| a - mu * b).collect();

    let ax = fact.matrix().mul_vec(&x);
    let res: Vec<f64> = (0..n).map(|i| ax[i] + mu * c[i] - b[i]).collect();
    let scale = norm2(b) + mu.abs() * norm2(c);
    let bound = tol * scale;
    let rnorm = norm2(&res);
    if !(rnorm <= bound) {
        return Err(Error::ResidualCheck {
            what: "||Ax + mu c - b||",
            value: rnorm,
            bound,
        });
    }
    let gap = (dot(c, &x) - beta).abs();
    let gap_bound = tol * (beta.abs() + norm2(c) * norm2(&x));
    if !(gap <= gap_bound) {
        return Err(Error::ResidualCheck {
            what: "|c^T x - beta|",
            value: gap,
            bound: gap_bound,
        });
    }
    Ok((x, mu))
}
