//! Householder QR with column pivoting (largest remaining column norm first).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a column is declared dependent.
pub const RANK_TOL: f64 = 1e-10;

/// Factorization A·P = Q·R of an m×d matrix.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Householder vectors below the diagonal, R on and above it.
    qr: DMatrix<f64>,
    /// Householder scalars.
    tau: Vec<f64>,
    /// `perm[k]` is the original index of the column in position k.
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(mut a: DMatrix<f64>) -> Self {
        let (m, d) = a.shape();
        let steps = m.min(d);
        let mut perm: Vec<usize> = (0..d).collect();
        let mut tau = vec![0.0; steps];
        let mut first_pivot = 0.0_f64;
        let mut rank = 0;

        for k in 0..steps {
            // Exact norms of the trailing columns; O(m·d) per step, same order as the update.
            let (best, best_norm) = (k..d)
                .map(|j| (j, a.view((k, j), (m - k, 1)).norm_squared()))
                .fold((k, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            if best != k {
                a.swap_columns(k, best);
                perm.swap(k, best);
            }
            let norm = best_norm.sqrt();
            if k == 0 {
                first_pivot = norm;
            }
            if norm <= RANK_TOL * first_pivot || norm == 0.0 {
                break;
            }
            rank += 1;

            let akk = a[(k, k)];
            let alpha = if akk >= 0.0 { -norm } else { norm };
            // v = x - alpha e1, stored in place with v[0] implicit in tau.
            let v0 = akk - alpha;
            for i in (k + 1)..m {
                a[(i, k)] /= v0;
            }
            let t = -v0 / alpha;
            tau[k] = t;
            a[(k, k)] = alpha;

            for j in (k + 1)..d {
                let mut s = a[(k, j)];
                for i in (k + 1)..m {
                    s += a[(i, k)] * a[(i, j)];
                }
                s *= t;
                a[(k, j)] -= s;
                for i in (k + 1)..m {
                    let vik = a[(i, k)];
                    a[(i, j)] -= s * vik;
                }
            }
        }

        PivotedQr {
            qr: a,
            tau,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn ncols(&self) -> usize {
        self.qr.ncols()
    }

    /// Original column indices left out of the numerical rank.
    pub fn dependent_columns(&self) -> Vec<usize> {
        let mut cols = self.perm[self.rank..].to_vec();
        cols.sort_unstable();
        cols
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.ncols()
    }

    fn apply_qt(&self, b: &mut DVector<f64>) {
        let m = self.qr.nrows();
        for k in 0..self.rank {
            let mut s = b[k];
            for i in (k + 1)..m {
                s += self.qr[(i, k)] * b[i];
            }
            s *= self.tau[k];
            b[k] -= s;
            for i in (k + 1)..m {
                b[i] -= s * self.qr[(i, k)];
            }
        }
    }

    /// Least-squares solution of A x = b; fails if A is rank deficient.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if !self.is_full_rank() {
            return Err(Error::Singular {
                columns: self.dependent_columns(),
            });
        }
        let d = self.ncols();
        let mut qtb = b.clone();
        self.apply_qt(&mut qtb);
        let mut y = vec![0.0; d];
        for k in (0..d).rev() {
            let mut s = qtb[k];
            for j in (k + 1)..d {
                s -= self.qr[(k, j)] * y[j];
            }
            y[k] = s / self.qr[(k, k)];
        }
        let mut x = DVector::zeros(d);
        for k in 0..d {
            x[self.perm[k]] = y[k];
        }
        Ok(x)
    }
}

/// Solves the square system J x = b.
pub fn solve_square(j: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    PivotedQr::new(j.clone()).solve(b)
}

/// Inverse of a square matrix via the pivoted QR.
pub fn inverse(j: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = j.nrows();
    let qr = PivotedQr::new(j.clone());
    let mut inv = DMatrix::zeros(d, d);
    for c in 0..d {
        let mut e = DVector::zeros(d);
        e[c] = 1.0;
        inv.set_column(c, &qr.solve(&e)?);
    }
    Ok(inv)
}

/// Weighted least squares: argmin Σ v_i (z_i − x_iᵀθ)² over rows with v_i > 0.
pub fn weighted_least_squares(
    x: &DMatrix<f64>,
    z: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let rows: Vec<usize> = (0..x.nrows()).filter(|&i| v[i] > 0.0).collect();
    let d = x.ncols();
    let mut a = DMatrix::zeros(rows.len(), d);
    let mut b = DVector::zeros(rows.len());
    for (r, &i) in rows.iter().enumerate() {
        let s = v[i].sqrt();
        for j in 0..d {
            a[(r, j)] = s * x[(i, j)];
        }
        b[r] = s * z[i];
    }
    let qr = PivotedQr::new(a);
    if !qr.is_full_rank() {
        return Err(Error::Singular {
            columns: qr.dependent_columns(),
        });
    }
    qr.solve(&b)
}
