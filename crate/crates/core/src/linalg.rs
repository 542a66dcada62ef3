//! Dense kernels used by the design builder and the estimators.

use nalgebra::DMatrix;

/// Relative pivot tolerance for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Householder QR with column pivoting, `A P = Q R`.
///
/// Factorisation stops once the largest remaining column norm drops below
/// `rel_tol * |R[0,0]|`; the columns left over are the dependent ones.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    nrows: usize,
    ncols: usize,
    // column-major working copy: R on and above the diagonal
    work: Vec<f64>,
    reflectors: Vec<(Vec<f64>, f64)>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(a: &DMatrix<f64>, rel_tol: f64) -> Self {
        let (n, p) = a.shape();
        let mut work = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..p).collect();
        let mut reflectors = Vec::with_capacity(p.min(n));
        let mut rank = 0;
        let mut first_pivot = 0.0;

        for k in 0..p.min(n) {
            // pick the remaining column with the largest trailing norm
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..p {
                let col = &work[j * n + k..(j + 1) * n];
                let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > best_norm {
                    best_norm = norm;
                    best = j;
                }
            }
            if k == 0 {
                first_pivot = best_norm;
            }
            if best_norm <= rel_tol * first_pivot || best_norm == 0.0 {
                break;
            }
            if best != k {
                for i in 0..n {
                    work.swap(k * n + i, best * n + i);
                }
                perm.swap(k, best);
            }

            let x = &work[k * n + k..(k + 1) * n];
            let alpha = if x[0] >= 0.0 { -best_norm } else { best_norm };
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vtv: f64 = v.iter().map(|t| t * t).sum();
            let tau = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };

            work[k * n + k] = alpha;
            for i in k + 1..n {
                work[k * n + i] = 0.0;
            }
            for j in k + 1..p {
                let col = &mut work[j * n + k..(j + 1) * n];
                let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                let s = tau * dot;
                for (c, vi) in col.iter_mut().zip(&v) {
                    *c -= s * vi;
                }
            }
            reflectors.push((v, tau));
            rank = k + 1;
        }

        PivotedQr {
            nrows: n,
            ncols: p,
            work,
            reflectors,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.ncols
    }

    /// Original indices of columns judged linearly dependent.
    pub fn dependent_columns(&self) -> Vec<usize> {
        let mut cols = self.perm[self.rank..].to_vec();
        cols.sort_unstable();
        cols
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        self.work[j * self.nrows + i]
    }

    /// Least-squares solution of `A x = b`; requires full column rank.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert!(self.is_full_rank());
        let mut qtb = b.to_vec();
        for (k, (v, tau)) in self.reflectors.iter().enumerate() {
            let tail = &mut qtb[k..];
            let s = tau * v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum::<f64>();
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= s * vi;
            }
        }
        let p = self.ncols;
        let mut z = vec![0.0; p];
        for i in (0..p).rev() {
            let mut acc = qtb[i];
            for j in i + 1..p {
                acc -= self.r(i, j) * z[j];
            }
            z[i] = acc / self.r(i, i);
        }
        let mut x = vec![0.0; p];
        for (i, &col) in self.perm.iter().enumerate() {
            x[col] = z[i];
        }
        x
    }

    /// `(A'A)^{-1}` in the original column order; requires full column rank.
    pub fn inverse_gram(&self) -> DMatrix<f64> {
        let p = self.ncols;
        // R^{-1}, upper triangular
        let mut rinv = DMatrix::<f64>::zeros(p, p);
        for j in 0..p {
            rinv[(j, j)] = 1.0 / self.r(j, j);
            for i in (0..j).rev() {
                let mut acc = 0.0;
                for k in i + 1..=j {
                    acc += self.r(i, k) * rinv[(k, j)];
                }
                rinv[(i, j)] = -acc / self.r(i, i);
            }
        }
        let g = &rinv * rinv.transpose();
        let mut out = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                out[(self.perm[i], self.perm[j])] = g[(i, j)];
            }
        }
        out
    }
}

/// Cholesky positive-definiteness test with a relative pivot floor.
///
/// Fails when any pivot is non-positive or below `rel_tol * max(diag)`.
pub fn is_positive_definite(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    let p = a.nrows();
    if p == 0 {
        return true;
    }
    let max_diag = (0..p).map(|i| a[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    if !(max_diag > 0.0) {
        return false;
    }
    let floor = rel_tol * max_diag;
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return false;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    true
}

/// Rows of `x` scaled by `sqrt(w)`.
pub fn scale_rows(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = x.clone();
    let n = x.nrows();
    for col in out.as_mut_slice().chunks_mut(n) {
        for (v, wi) in col.iter_mut().zip(w) {
            *v *= wi.sqrt();
        }
    }
    out
}

/// `X' diag(w) X`.
pub fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let xs = scale_rows(x, w);
    xs.transpose() * &xs
}

/// Forces exact symmetry by averaging with the transpose.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        for j in i + 1..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_square_system() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[(i, j)] * x_true[j]).sum()).collect();
        let qr = PivotedQr::new(&a, RANK_TOL);
        assert!(qr.is_full_rank());
        for (x, t) in qr.solve(&b).iter().zip(x_true) {
            assert!((x - t).abs() < 1e-12);
        }
        let inv = qr.inverse_gram();
        let gram = a.transpose() * &a;
        let eye = &gram * inv;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((eye[(i, j)] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn detects_dependent_column() {
        // third column = first + second
        let a = DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 2.0, 3.0, 1.0, 5.0, 6.0]);
        let qr = PivotedQr::new(&a, RANK_TOL);
        assert_eq!(qr.rank(), 2);
        assert_eq!(qr.dependent_columns().len(), 1);
    }

    #[test]
    fn pd_check() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(is_positive_definite(&a, 1e-12));
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(!is_positive_definite(&b, 1e-12));
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(!is_positive_definite(&c, 0.0));
    }
}
