//! Dense kernels: column-pivoted Householder QR and symmetric eigen helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Column-pivoted Householder QR, `Z P = Q R`, truncated at the numerical rank.
///
/// Columns are pivoted by largest remaining residual norm (Businger-Golub), so
/// the diagonal of `R` is non-increasing in magnitude and the factorization
/// stops as soon as the largest residual column norm falls below
/// `1e-12 * max_j |z_j| * max(n, k)`.
pub(crate) struct PivotedQr {
    n: usize,
    k: usize,
    /// Column-major n x k work array: R in the upper triangle, reflectors below.
    a: Vec<f64>,
    taus: Vec<f64>,
    /// `perm[j]` is the original index of the column in position `j`.
    perm: Vec<usize>,
    rank: usize,
}

pub(crate) const RANK_TOL: f64 = 1e-12;

impl PivotedQr {
    pub fn new(z: &DMatrix<f64>) -> Self {
        let (n, k) = z.shape();
        let mut a = z.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..k).collect();
        let steps = n.min(k);
        let mut taus = Vec::with_capacity(steps);
        let mut norms = vec![0.0; k];

        let col_norm = |a: &[f64], j: usize, from: usize| -> f64 {
            a[j * n + from..(j + 1) * n].iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        let scale = (0..k).map(|j| col_norm(&a, j, 0)).fold(0.0, f64::max);
        let tol = RANK_TOL * scale * n.max(k) as f64;

        let mut rank = 0;
        for i in 0..steps {
            for (j, slot) in norms.iter_mut().enumerate().skip(i) {
                *slot = col_norm(&a, j, i);
            }
            let (p, &best) = norms[i..]
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.total_cmp(y.1).then(y.0.cmp(&x.0)))
                .map(|(off, v)| (off + i, v))
                .unwrap();
            if best <= tol || best == 0.0 {
                break;
            }
            if p != i {
                for row in 0..n {
                    a.swap(i * n + row, p * n + row);
                }
                perm.swap(i, p);
            }

            // Reflector H = I - tau v v^T with v[0] = 1, mapping x to beta e_1.
            let x0 = a[i * n + i];
            let beta = if x0 >= 0.0 { -best } else { best };
            let tau = (beta - x0) / beta;
            let inv = 1.0 / (x0 - beta);
            for row in i + 1..n {
                a[i * n + row] *= inv;
            }
            a[i * n + i] = beta;

            let (head, tail) = a.split_at_mut((i + 1) * n);
            let v = &head[i * n + i..i * n + n];
            for j in 0..k - i - 1 {
                let col = &mut tail[j * n + i..j * n + n];
                let mut w = col[0];
                for (c, vv) in col[1..].iter().zip(&v[1..]) {
                    w += c * vv;
                }
                w *= tau;
                col[0] -= w;
                for (c, vv) in col[1..].iter_mut().zip(&v[1..]) {
                    *c -= w * vv;
                }
            }
            taus.push(tau);
            rank += 1;
        }

        Self {
            n,
            k,
            a,
            taus,
            perm,
            rank,
        }
    }

    #[cfg(test)]
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Orthonormal basis of the column space, n x rank.
    pub fn thin_q(&self) -> DMatrix<f64> {
        let n = self.n;
        let r = self.rank;
        let mut q = DMatrix::<f64>::zeros(n, r);
        for c in 0..r {
            q[(c, c)] = 1.0;
        }
        let qs = q.as_mut_slice();
        for i in (0..r).rev() {
            let v = &self.a[i * n + i..i * n + n];
            let tau = self.taus[i];
            for c in i..r {
                let col = &mut qs[c * n + i..c * n + n];
                let mut w = col[0];
                for (x, vv) in col[1..].iter().zip(&v[1..]) {
                    w += x * vv;
                }
                w *= tau;
                col[0] -= w;
                for (x, vv) in col[1..].iter_mut().zip(&v[1..]) {
                    *x -= w * vv;
                }
            }
        }
        q
    }

    /// Leading `rank` rows of R, in pivoted column order (rank x k).
    pub fn r_top(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(self.rank, self.k, |i, j| {
            if i <= j {
                self.a[j * n + i]
            } else {
                0.0
            }
        })
    }
}

/// Minimum-norm solver for `R_top b = c` where `R_top = [R11 R12]` has full row rank.
#[derive(Clone, Debug)]
pub(crate) enum MinNormSolver {
    /// Full column rank: plain back substitution on R11.
    Square(DMatrix<f64>),
    /// `R_top^T = U T`, so the minimum-norm solution is `U T^{-T} c`.
    Wide { u: DMatrix<f64>, t: DMatrix<f64> },
}

impl MinNormSolver {
    pub fn new(r_top: DMatrix<f64>) -> Self {
        let (rank, k) = r_top.shape();
        if rank == k {
            MinNormSolver::Square(r_top)
        } else {
            let qr = r_top.transpose().qr();
            MinNormSolver::Wide {
                u: qr.q(),
                t: qr.r(),
            }
        }
    }

    pub fn solve(&self, c: &DVector<f64>) -> DVector<f64> {
        match self {
            MinNormSolver::Square(r) => r
                .solve_upper_triangular(c)
                .expect("R11 has a nonzero diagonal at numerical rank"),
            MinNormSolver::Wide { u, t } => {
                let y = t
                    .tr_solve_upper_triangular(c)
                    .expect("T has a nonzero diagonal at numerical rank");
                u * y
            }
        }
    }
}

/// Inverse symmetric square root with eigenvalues floored at `floor_rel * trace`.
///
/// Returns the matrix and whether any eigenvalue was floored.
pub fn inv_sqrt_floored(m: &DMatrix<f64>, floor_rel: f64) -> (DMatrix<f64>, bool) {
    let sym = (m + m.transpose()) * 0.5;
    let trace = sym.trace().abs();
    let floor = (floor_rel * trace).max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(sym);
    let mut floored = false;
    let d = eig.eigenvalues.map(|l| {
        if l < floor {
            floored = true;
            1.0 / floor.sqrt()
        } else {
            1.0 / l.sqrt()
        }
    });
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&d) * v.transpose(), floored)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstructs_full_rank() {
        let z = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 1.0, -1.0]);
        let qr = PivotedQr::new(&z);
        assert_eq!(qr.rank(), 2);
        let q = qr.thin_q();
        let r = qr.r_top();
        let zp = DMatrix::from_fn(4, 2, |i, j| z[(i, qr.perm()[j])]);
        assert!((q.clone() * r - zp).norm() < 1e-12);
        assert!((q.transpose() * &q - DMatrix::identity(2, 2)).norm() < 1e-13);
    }

    #[test]
    fn detects_duplicate_column() {
        let z = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 2.0, 1.0, 3.0, 3.0, 1.0, 5.0, 5.0, 1.0, -1.0, -1.0]);
        assert_eq!(PivotedQr::new(&z).rank(), 2);
    }

    #[test]
    fn inverse_sqrt_roundtrip() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let (s, floored) = inv_sqrt_floored(&m, 1e-12);
        assert!(!floored);
        assert!((&s * &m * &s - DMatrix::identity(2, 2)).norm() < 1e-12);
    }
}
