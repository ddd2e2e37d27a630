//! Small dense helpers shared by the eigensolver, the Krylov propagator and
//! the photonic integrator.

use faer::{Mat, Side};
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        // conj(x) * y
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    C64::new(re, im)
}

#[inline]
pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[inline]
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Error-free transformation `a + b = s + e` with `s = fl(a + b)`.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `sum += z` keeping the rounding error in `carry`; the compensated value is
/// `sum + carry`.
#[inline]
pub fn compensated_add(sum: &mut C64, carry: &mut C64, z: C64) {
    let (re, ere) = two_sum(sum.re, z.re);
    let (im, eim) = two_sum(sum.im, z.im);
    *sum = C64::new(re, im);
    *carry += C64::new(ere, eim);
}

/// Compensated sum of complex terms.
pub fn compensated_sum(terms: impl IntoIterator<Item = C64>) -> C64 {
    let (mut sum, mut carry) = (ZERO, ZERO);
    for z in terms {
        compensated_add(&mut sum, &mut carry, z);
    }
    sum + carry
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues in ascending
/// order. Columns of the returned matrix are the eigenvectors.
pub fn eigh(matrix: DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::param("eigh needs a square matrix"));
    }
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let m = Mat::<C64>::from_fn(n, n, |r, c| matrix[(r, c)]);
    let eig = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::numerical(format!("Hermitian eigensolver failed: {e:?}")))?;
    let (s, u) = (eig.S(), eig.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].re.total_cmp(&s[b].re).then(a.cmp(&b)));
    let values = order.iter().map(|&i| s[i].re).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| u[(r, order[c])]);
    Ok((values, vectors))
}

/// Real symmetric version used for the Lanczos tridiagonal matrices.
pub fn eigh_real(matrix: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = matrix.nrows();
    let m = Mat::<f64>::from_fn(n, n, |r, c| matrix[(r, c)]);
    let eig = m
        .self_adjoint_eigen(Side::Lower)
        .expect("symmetric tridiagonal eigensolver failed");
    let (s, u) = (eig.S(), eig.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let values = order.iter().map(|&i| s[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| u[(r, order[c])]);
    (values, vectors)
}

/// Rotate a vector's global phase so that its largest-magnitude component
/// (first one on ties) is real and positive.
pub fn fix_phase(v: &mut [C64]) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best_mag * (1.0 + 1e-9) {
            best = i;
            best_mag = m;
        }
    }
    if best_mag > 0.0 {
        let phase = v[best].conj() / best_mag;
        for z in v.iter_mut() {
            *z *= phase;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigh_sorts_ascending_and_reconstructs() {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[
                C64::new(2.0, 0.0),
                C64::new(0.0, 1.0),
                C64::new(0.5, 0.0),
                C64::new(0.0, -1.0),
                C64::new(-1.0, 0.0),
                ZERO,
                C64::new(0.5, 0.0),
                ZERO,
                C64::new(0.3, 0.0),
            ],
        );
        let (vals, vecs) = eigh(m.clone()).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        for (k, &lam) in vals.iter().enumerate() {
            let v = vecs.column(k);
            let r = &m * v - v * C64::new(lam, 0.0);
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn fix_phase_makes_largest_component_positive() {
        let mut v = vec![C64::new(0.1, 0.0), C64::new(0.0, -0.9), C64::new(0.2, 0.2)];
        fix_phase(&mut v);
        assert!(v[1].im.abs() < 1e-15 && v[1].re > 0.0);
        assert!((norm(&v) - (0.01f64 + 0.81 + 0.08).sqrt()).abs() < 1e-15);
    }
}
