//! Small complex dense-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn diag(d: &[C64]) -> CMat {
    CMat::from_diagonal(&DVector::from_column_slice(d))
}

pub fn fro(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// [[Re, −Im], [Im, Re]]: same singular values as `m`, each twice.
fn realify(m: &CMat) -> DMatrix<f64> {
    let (r, k) = m.shape();
    DMatrix::from_fn(2 * r, 2 * k, |i, j| {
        let z = m[(i % r, j % k)];
        match (i < r, j < k) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Ratio of extreme singular values; infinite for a numerically zero matrix.
pub fn condition_number(m: &CMat) -> f64 {
    let sv = realify(m).singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn inverse(m: &CMat, what: &str) -> Result<CMat> {
    let cond = condition_number(m);
    if !cond.is_finite() || cond > 1e13 {
        return Err(Error::Singular(format!("{what}: condition number {cond:.3e}")));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{what}: LU failed")))
}

/// Minimum-norm least-squares solution of A x = b; returns (x, relative residual).
/// Goes through the eigendecomposition of the real normal matrix: nalgebra's SVD returns
/// singular vectors off by up to 1e-5 on some rank-deficient fit matrices.
pub fn lstsq(a: &CMat, b: &DVector<C64>) -> Result<(DVector<C64>, f64)> {
    let m = b.len();
    let k = a.ncols();
    let ra = realify(a);
    let eig = SymmetricEigen::new(ra.transpose() * &ra);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return Err(Error::Singular("least squares: zero matrix".into()));
    }
    let keep: Vec<usize> = (0..2 * k).filter(|&i| eig.eigenvalues[i] > 1e-11 * top).collect();
    let solve = |rhs: &DVector<f64>| {
        let atb = ra.transpose() * rhs;
        let mut y = DVector::zeros(2 * k);
        for &i in &keep {
            let v = eig.eigenvectors.column(i);
            y += v * (v.dot(&atb) / eig.eigenvalues[i]);
        }
        y
    };
    let rb = DVector::from_fn(2 * m, |i, _| if i < m { b[i].re } else { b[i - m].im });
    let mut y = solve(&rb);
    // one step of refinement
    let r = &rb - &ra * &y;
    y += solve(&r);
    let x = DVector::from_fn(k, |i, _| c(y[i], y[i + k]));
    let r = a * &x - b;
    let nb = b.norm();
    let rel = if nb == 0.0 { r.norm() } else { r.norm() / nb };
    Ok((x, rel))
}

/// Eigenvalues via complex Schur decomposition.
pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    m.clone()
        .try_schur(1e-15, 10_000)
        .map(|s| s.eigenvalues().expect("complex Schur form is triangular").iter().cloned().collect())
        .ok_or_else(|| Error::Invalid("Schur iteration did not converge".into()))
}

/// Largest distance after greedily pairing two eigenvalue lists.
pub fn spectrum_distance(a: &[C64], b: &[C64]) -> f64 {
    let mut rest: Vec<C64> = b.to_vec();
    let mut worst: f64 = 0.0;
    for x in a {
        let (k, d) = rest
            .iter()
            .enumerate()
            .map(|(k, y)| (k, (x - y).norm()))
            .fold((usize::MAX, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc });
        if k == usize::MAX {
            return f64::INFINITY;
        }
        rest.swap_remove(k);
        worst = worst.max(d);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lstsq_recovers_exact_solution() {
        let a = CMat::from_row_slice(3, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(2.0, 0.0), c(1.0, -1.0), c(0.5, 0.5), c(3.0, 0.0)]);
        let x = DVector::from_column_slice(&[c(0.3, -0.2), c(1.1, 0.4)]);
        let b = &a * &x;
        let (y, rel) = lstsq(&a, &b).unwrap();
        assert!((y - x).norm() < 1e-12);
        assert!(rel < 1e-12);
    }

    #[test]
    fn lstsq_rank_deficient_is_min_norm() {
        // third column = first + i·second, so (1, i, −1) spans the kernel
        let a = CMat::from_fn(6, 3, |i, j| {
            let p = c((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos());
            let q = c(1.0 / (1.0 + i as f64), (i * i) as f64 * 0.1);
            match j {
                0 => p,
                1 => q,
                _ => p + c(0.0, 1.0) * q,
            }
        });
        let x0 = DVector::from_column_slice(&[c(0.4, 0.1), c(-0.2, 0.9), c(0.0, 0.0)]);
        let (x, rel) = lstsq(&a, &(&a * &x0)).unwrap();
        assert!(rel < 1e-13);
        let kernel = DVector::from_column_slice(&[c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)]);
        assert!(kernel.dotc(&x).norm() < 1e-13);
    }

    #[test]
    fn eigenvalues_of_triangular() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 1.0), c(5.0, 0.0), c(0.0, 0.0), c(-2.0, 0.0)]);
        let ev = eigenvalues(&m).unwrap();
        assert!(spectrum_distance(&ev, &[c(-2.0, 0.0), c(1.0, 1.0)]) < 1e-12);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        assert!(inverse(&m, "test").is_err());
    }
}
