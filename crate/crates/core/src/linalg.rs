//! Small dense linear algebra on jets and complex matrices.

use crate::jet::{Jet, C64};
use nalgebra::{DMatrix, DVector};

pub type JetMatrix = Vec<Vec<Jet>>;

/// Solves `a x = b` (b has several columns) by Gaussian elimination with
/// partial pivoting on base-point values. Returns `None` when a pivot falls
/// below `rel_tol` times the largest entry of `a`.
pub fn solve_jet(a: &[Vec<Jet>], b: &[Vec<Jet>], rel_tol: f64) -> Option<JetMatrix> {
    let n = a.len();
    let mut m: Vec<Vec<Jet>> = a.to_vec();
    let mut rhs: Vec<Vec<Jet>> = b.to_vec();
    let scale = a
        .iter()
        .flat_map(|r| r.iter().map(|j| j.value().norm()))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].value().norm().total_cmp(&m[j][col].value().norm()))
            .unwrap();
        if m[piv][col].value().norm() <= rel_tol * scale {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        let inv = m[col][col].recip();
        for row in 0..n {
            if row == col || m[row][col].is_zero() {
                continue;
            }
            let f = m[row][col] * inv;
            for k in col..n {
                if !m[col][k].is_zero() {
                    let t = f * m[col][k];
                    m[row][k] -= t;
                }
            }
            for k in 0..rhs[row].len() {
                if !rhs[col][k].is_zero() {
                    let t = f * rhs[col][k];
                    rhs[row][k] -= t;
                }
            }
        }
    }
    for (row, r) in rhs.iter_mut().enumerate() {
        let inv = m[row][row].recip();
        for v in r.iter_mut() {
            *v = *v * inv;
        }
    }
    Some(rhs)
}

/// Inverse of a square jet matrix.
pub fn inverse_jet(a: &[Vec<Jet>], rel_tol: f64) -> Option<JetMatrix> {
    let n = a.len();
    let space = a[0][0].space();
    let id: Vec<Vec<Jet>> = (0..n)
        .map(|i| (0..n).map(|j| Jet::constant(space, if i == j { 1.0 } else { 0.0 })).collect())
        .collect();
    solve_jet(a, &id, rel_tol)
}

/// Base-point values of a jet matrix.
pub fn values(a: &[Vec<Jet>]) -> DMatrix<C64> {
    let (r, c) = (a.len(), a.first().map_or(0, |x| x.len()));
    DMatrix::from_fn(r, c, |i, j| a[i][j].value())
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &DMatrix<C64>) -> Vec<f64> {
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Pivoted Cholesky `P^T a P = L L^*` of a Hermitian positive definite
/// matrix. Pivot ties go to the lowest index. Returns `(L, perm)` with
/// `perm[k]` the original index placed at position `k`.
pub fn pivoted_cholesky(a: &DMatrix<C64>) -> Option<(DMatrix<C64>, Vec<usize>)> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut l = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let mut best = k;
        for i in k + 1..n {
            if m[(i, i)].re > m[(best, best)].re {
                best = i;
            }
        }
        if best != k {
            m.swap_rows(k, best);
            m.swap_columns(k, best);
            l.swap_rows(k, best);
            perm.swap(k, best);
        }
        let d = m[(k, k)].re;
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let s = d.sqrt();
        l[(k, k)] = C64::new(s, 0.0);
        for i in k + 1..n {
            l[(i, k)] = m[(i, k)] / s;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let t = l[(i, k)] * l[(j, k)].conj();
                m[(i, j)] -= t;
            }
        }
    }
    Some((l, perm))
}

/// Dense complex solve via LU.
pub fn solve_complex(a: &DMatrix<C64>, b: &DVector<C64>) -> Option<DVector<C64>> {
    a.clone().lu().solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::JetSpace;

    #[test]
    fn jet_inverse_differentiates_correctly() {
        // A(x) = [[1 + x, 2], [x², 3]]; check (A⁻¹)' = -A⁻¹ A' A⁻¹ at x = 0.4
        let x = Jet::variables(&[0.4], 2)[0];
        let one = Jet::constant(JetSpace::get(1, 2), 1.0);
        let a = vec![vec![one + x, one * 2.0], vec![x * x, one * 3.0]];
        let inv = inverse_jet(&a, 1e-14).unwrap();
        let av = values(&a);
        let iv = av.clone().try_inverse().unwrap();
        let da = DMatrix::from_fn(2, 2, |i, j| a[i][j].partial(&[1]));
        let want = -&iv * da * &iv;
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv[i][j].value() - iv[(i, j)]).norm() < 1e-14);
                assert!((inv[i][j].partial(&[1]) - want[(i, j)]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn pivoted_cholesky_reconstructs() {
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(0.5, 0.5), C64::new(0.5, -0.5), C64::new(3.0, 0.0)],
        );
        let (l, perm) = pivoted_cholesky(&a).unwrap();
        assert_eq!(perm, vec![1, 0]);
        let r = &l * l.adjoint();
        for i in 0..2 {
            for j in 0..2 {
                assert!((r[(i, j)] - a[(perm[i], perm[j])]).norm() < 1e-14);
            }
        }
    }
}
