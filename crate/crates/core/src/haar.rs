//! Haar-distributed unitaries and uniformly random unit vectors.

use num_complex::Complex;
use num_traits::Zero;
use rand::Rng;

use crate::error::{ensure_arg, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Standard complex Gaussian: independent real and imaginary parts of variance 1/2.
#[inline]
pub fn standard_complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let s = T::FRAC_1_SQRT_2();
    Complex::new(T::standard_normal(rng) * s, T::standard_normal(rng) * s)
}

/// `d × d` matrix of i.i.d. standard complex Gaussians.
pub fn ginibre<T: Real, R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix<T> {
    Matrix::from_fn(d, |_, _| standard_complex_normal(rng))
}

/// Haar-random element of `U(d)`.
///
/// Householder QR of a Ginibre matrix, with the columns of `Q` rescaled by the
/// phases of `diag(R)` so that the factorization is the unique one with a
/// positive real diagonal.
pub fn haar_unitary<T: Real, R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix<T> {
    assert!(d >= 1, "dimension must be positive");
    let mut a = ginibre::<T, R>(d, rng);
    let mut reflectors: Vec<(Vec<Complex<T>>, T)> = Vec::with_capacity(d);
    let mut r_phase = vec![Complex::new(T::one(), T::zero()); d];

    for k in 0..d {
        let norm = (k..d).map(|i| a[(i, k)].norm_sqr()).sum::<T>().sqrt();
        if norm.is_zero() {
            reflectors.push((vec![Complex::zero(); d - k], T::zero()));
            continue;
        }
        let x0 = a[(k, k)];
        let phase = if x0.norm().is_zero() { Complex::new(T::one(), T::zero()) } else { x0 / x0.norm() };
        let alpha = -phase * norm;
        let mut v: Vec<Complex<T>> = (k..d).map(|i| a[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2.is_zero() {
            reflectors.push((v, T::zero()));
            r_phase[k] = alpha / alpha.norm();
            continue;
        }
        let beta = T::lit(2.0) / vnorm2;
        for j in k..d {
            let s = v.iter().enumerate().fold(Complex::zero(), |acc, (i, vi)| acc + vi.conj() * a[(k + i, j)]);
            let f = s * beta;
            for (i, vi) in v.iter().enumerate() {
                a[(k + i, j)] -= vi * f;
            }
        }
        r_phase[k] = alpha / alpha.norm();
        reflectors.push((v, beta));
    }

    // Q = H_0 H_1 ... H_{d-1}, accumulated right to left.
    let mut q = Matrix::<T>::identity(d);
    for (k, (v, beta)) in reflectors.iter().enumerate().rev() {
        if beta.is_zero() {
            continue;
        }
        for j in 0..d {
            let s = v.iter().enumerate().fold(Complex::zero(), |acc, (i, vi)| acc + vi.conj() * q[(k + i, j)]);
            let f = s * *beta;
            for (i, vi) in v.iter().enumerate() {
                q[(k + i, j)] -= vi * f;
            }
        }
    }
    for j in 0..d {
        let ph = r_phase[j];
        for i in 0..d {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Uniform point on the complex unit sphere in `C^d`.
pub fn random_unit_vector<T: Real, R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<Complex<T>> {
    assert!(d >= 1, "dimension must be positive");
    loop {
        let v: Vec<Complex<T>> = (0..d).map(|_| standard_complex_normal(rng)).collect();
        let n = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if n > T::zero() {
            return v.into_iter().map(|z| z / n).collect();
        }
    }
}

/// `Σ_{i ≤ d/2} |v_i|² − Σ_{i > d/2} |v_i|²`.
///
/// Squared moduli: this is the diagonal entry of `U† X' U` when `v` is a
/// column of `U`.
pub fn delta_statistic<T: Real>(v: &[Complex<T>]) -> Result<T> {
    let d = v.len();
    ensure_arg!(d >= 2 && d % 2 == 0, "delta statistic needs an even dimension, got {d}");
    let norm2: T = v.iter().map(|z| z.norm_sqr()).sum();
    ensure_arg!(
        norm2.sqrt() <= T::one() + T::tol(1e-9),
        "vector norm {} exceeds one",
        norm2.sqrt().as_f64()
    );
    Ok(signed_half_sum(v))
}

#[inline]
pub(crate) fn signed_half_sum<T: Real>(v: &[Complex<T>]) -> T {
    let h = v.len() / 2;
    let top: T = v[..h].iter().map(|z| z.norm_sqr()).sum();
    let bottom: T = v[h..].iter().map(|z| z.norm_sqr()).sum();
    top - bottom
}
