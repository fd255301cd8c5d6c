//! Small symbolic matrix helpers (Laplace expansion) used for Stäckel
//! cofactors and block inverses. Numeric linear algebra goes through
//! nalgebra.

use nalgebra::DMatrix;

use crate::expr::Expr;

fn minor_rows(m: &[Vec<Expr>], row: usize, col: usize) -> Vec<Vec<Expr>> {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != row)
        .map(|(_, r)| r.iter().enumerate().filter(|(j, _)| *j != col).map(|(_, e)| e.clone()).collect())
        .collect()
}

/// Determinant by cofactor expansion along the first column.
pub fn det(m: &[Vec<Expr>]) -> Expr {
    let n = m.len();
    match n {
        0 => Expr::one(),
        1 => m[0][0].clone(),
        2 => &m[0][0] * &m[1][1] - &m[0][1] * &m[1][0],
        _ => {
            let mut acc = Expr::zero();
            for i in 0..n {
                if m[i][0].is_zero() {
                    continue;
                }
                let term = &m[i][0] * det(&minor_rows(m, i, 0));
                acc = if i % 2 == 0 { acc + term } else { acc - term };
            }
            acc
        }
    }
}

/// Signed cofactor (-1)^{i+j} · minor(i, j).
pub fn cofactor(m: &[Vec<Expr>], i: usize, j: usize) -> Expr {
    let minor = det(&minor_rows(m, i, j));
    if (i + j).is_multiple_of(2) {
        minor
    } else {
        -minor
    }
}

/// Inverse via the adjugate: `inv[i][j] = cofactor(j, i) / det`.
pub fn inverse(m: &[Vec<Expr>]) -> Vec<Vec<Expr>> {
    let n = m.len();
    let d = det(m);
    (0..n)
        .map(|i| (0..n).map(|j| cofactor(m, j, i) / &d).collect())
        .collect()
}

/// Numeric matrix from nested rows.
pub fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = if n == 0 { 0 } else { rows[0].len() };
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

/// Entry-wise max |a - b|.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Whether all leading principal minors are positive.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (1..=n).all(|k| m.view((0, 0), (k, k)).into_owned().determinant() > 0.0)
}
