//! Dense complex matrices, Hermitian matrices and a cyclic Jacobi eigensolver.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_arg, Error, Result};
use crate::scalar::Real;

/// Square `d × d` complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix<T: Real = f64> {
    d: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.d, self.d)?;
        for i in 0..self.d {
            write!(f, "  ")?;
            for j in 0..self.d {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl<T: Real> Matrix<T> {
    pub fn zeros(d: usize) -> Self {
        Matrix { d, data: vec![Complex::zero(); d * d] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m[(i, i)] = Complex::one();
        }
        m
    }

    pub fn from_fn(d: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                data.push(f(i, j));
            }
        }
        Matrix { d, data }
    }

    /// Builds from row-major entries; `entries.len()` must be a perfect square.
    pub fn from_row_major(entries: Vec<Complex<T>>) -> Result<Self> {
        let d = (entries.len() as f64).sqrt().round() as usize;
        ensure_arg!(d * d == entries.len(), "{} entries do not form a square matrix", entries.len());
        let m = Matrix { d, data: entries };
        ensure_arg!(m.is_finite(), "matrix has non-finite entries");
        Ok(m)
    }

    /// Builds from real row slices; convenient for literals in tests.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.len();
        ensure_arg!(rows.iter().all(|r| r.len() == d), "rows must all have length {d}");
        Ok(Self::from_fn(d, |i, j| Complex::new(T::lit(rows[i][j]), T::zero())))
    }

    pub fn from_real_diagonal(diag: &[T]) -> Self {
        let d = diag.len();
        let mut m = Self::zeros(d);
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = Complex::new(x, T::zero());
        }
        m
    }

    /// Outer product `v v†`.
    pub fn outer(v: &[Complex<T>]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j].conj())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<Complex<T>> {
        (0..self.d).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<Complex<T>> {
        (0..self.d).map(|i| self[(i, i)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        ensure_arg!(
            self.d == other.d,
            "dimension mismatch: {} vs {}",
            self.d,
            other.d
        );
        Ok(())
    }

    /// `self · other`, with a dimension check.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(self.matmul_unchecked(other))
    }

    pub(crate) fn matmul_unchecked(&self, other: &Self) -> Self {
        let d = self.d;
        let mut out = Self::zeros(d);
        for i in 0..d {
            let row = &self.data[i * d..(i + 1) * d];
            let out_row = &mut out.data[i * d..(i + 1) * d];
            for (k, &a) in row.iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                let other_row = &other.data[k * d..(k + 1) * d];
                for (o, &b) in out_row.iter_mut().zip(other_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.d, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.d).map(|i| self[(i, i)]).fold(Complex::zero(), |a, b| a + b)
    }

    /// Hilbert–Schmidt inner product `Tr(self† other)`.
    pub fn hs_inner(&self, other: &Self) -> Result<Complex<T>> {
        self.check_same_dim(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(Complex::zero(), |acc, (a, b)| acc + a.conj() * b))
    }

    pub fn hs_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn scale(&self, s: T) -> Self {
        Matrix { d: self.d, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.d, other.d, "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(T::zero(), T::max)
    }

    /// `max |(U†U − I)_{ij}|`.
    pub fn unitarity_defect(&self) -> T {
        self.adjoint()
            .matmul_unchecked(self)
            .max_abs_diff(&Self::identity(self.d))
    }

    /// `U† A U` for this matrix playing the role of `U`.
    pub fn conjugate(&self, a: &Self) -> Result<Self> {
        self.check_same_dim(a)?;
        Ok(self.adjoint().matmul_unchecked(&a.matmul_unchecked(self)))
    }

    pub fn map_scalar<S: Real>(&self) -> Matrix<S> {
        Matrix {
            d: self.d,
            data: self
                .data
                .iter()
                .map(|z| Complex::new(S::lit(z.re.as_f64()), S::lit(z.im.as_f64())))
                .collect(),
        }
    }

    pub fn to_file(&self) -> MatrixFile {
        let rows = |f: &dyn Fn(Complex<T>) -> f64| -> Vec<Vec<f64>> {
            (0..self.d)
                .map(|i| (0..self.d).map(|j| f(self[(i, j)])).collect())
                .collect()
        };
        MatrixFile { d: self.d, re: rows(&|z| z.re.as_f64()), im: rows(&|z| z.im.as_f64()) }
    }

    pub fn from_file(file: &MatrixFile) -> Result<Self> {
        let d = file.d;
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == d && rows.iter().all(|r| r.len() == d);
        if d == 0 || !shape_ok(&file.re) || !shape_ok(&file.im) {
            return Err(Error::Format(format!("matrix file shape does not match d = {d}")));
        }
        let m = Self::from_fn(d, |i, j| Complex::new(T::lit(file.re[i][j]), T::lit(file.im[i][j])));
        if !m.is_finite() {
            return Err(Error::Format("matrix file has non-finite entries".into()));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("matrix serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: MatrixFile = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_file(&file)
    }
}

impl<T: Real> Index<(usize, usize)> for Matrix<T> {
    type Output = Complex<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.d + j]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.d + j]
    }
}

impl<T: Real> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.d, rhs.d, "dimension mismatch");
        self.matmul_unchecked(rhs)
    }
}

impl<T: Real> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.d, rhs.d, "dimension mismatch");
        Matrix { d: self.d, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl<T: Real> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.d, rhs.d, "dimension mismatch");
        Matrix { d: self.d, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

/// On-disk form: `{"d": int, "re": [[...]], "im": [[...]]}`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub d: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

/// A self-adjoint matrix. Construction symmetrizes away rounding noise.
#[derive(Clone, PartialEq, Debug)]
pub struct Hermitian<T: Real = f64> {
    inner: Matrix<T>,
}

/// Absolute tolerance on `|H_ij − conj(H_ji)|` accepted at construction.
pub const HERMITIAN_TOL: f64 = 1e-12;

impl<T: Real> Hermitian<T> {
    /// Accepts `a` when it is Hermitian within [`HERMITIAN_TOL`] and returns `(a + a†)/2`.
    pub fn new(a: Matrix<T>) -> Result<Self> {
        ensure_arg!(a.is_finite(), "matrix has non-finite entries");
        let d = a.dim();
        let tol = T::tol(HERMITIAN_TOL);
        let mut worst = T::zero();
        for i in 0..d {
            for j in i..d {
                worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
            }
        }
        ensure_arg!(worst <= tol, "matrix is not Hermitian (defect {:e})", worst.as_f64());
        Ok(Self::symmetrized(a))
    }

    pub(crate) fn symmetrized(a: Matrix<T>) -> Self {
        let d = a.dim();
        let half = T::lit(0.5);
        let m = Matrix::from_fn(d, |i, j| {
            if i == j {
                Complex::new(a[(i, i)].re, T::zero())
            } else {
                (a[(i, j)] + a[(j, i)].conj()) * half
            }
        });
        Hermitian { inner: m }
    }

    pub fn from_real_diagonal(diag: &[T]) -> Self {
        Hermitian { inner: Matrix::from_real_diagonal(diag) }
    }

    pub fn identity(d: usize) -> Self {
        Hermitian { inner: Matrix::identity(d) }
    }

    /// Rank-one projector `v v†` (not normalized).
    pub fn outer(v: &[Complex<T>]) -> Self {
        Self::symmetrized(Matrix::outer(v))
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix<T> {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.inner
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn trace(&self) -> T {
        self.inner.trace().re
    }

    /// `Tr(self · other)` for Hermitian operands; real by construction.
    pub fn inner_product(&self, other: &Self) -> Result<T> {
        Ok(self.inner.hs_inner(&other.inner)?.re)
    }

    pub fn scale(&self, s: T) -> Self {
        Hermitian { inner: self.inner.scale(s) }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.inner.check_same_dim(&other.inner)?;
        Ok(Hermitian { inner: &self.inner - &other.inner })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.inner.check_same_dim(&other.inner)?;
        Ok(Hermitian { inner: &self.inner + &other.inner })
    }

    /// `U† self U`.
    pub fn conjugate_by(&self, u: &Matrix<T>) -> Result<Self> {
        Ok(Self::symmetrized(u.conjugate(&self.inner)?))
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.inner[(i, j)].is_zero()))
    }

    pub fn eigh(&self) -> Result<Eigh<T>> {
        jacobi_eigh(self)
    }

    /// Schatten-1 norm `Σ |λ_i|`.
    pub fn trace_norm(&self) -> Result<T> {
        Ok(self.eigh()?.eigenvalues.iter().map(|l| l.abs()).sum())
    }
}

/// Eigen-decomposition `H = V diag(λ) V†` with ascending `λ`.
#[derive(Clone, Debug)]
pub struct Eigh<T: Real = f64> {
    pub eigenvalues: Vec<T>,
    /// Unitary matrix whose columns are the eigenvectors.
    pub eigenvectors: Matrix<T>,
}

impl<T: Real> Eigh<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let d = self.eigenvalues.len();
        let v = &self.eigenvectors;
        Matrix::from_fn(d, |i, j| {
            (0..d).fold(Complex::zero(), |acc, k| acc + v[(i, k)] * v[(j, k)].conj() * self.eigenvalues[k])
        })
    }
}

pub const JACOBI_MAX_SWEEPS: usize = 100;
pub const JACOBI_REL_TOL: f64 = 1e-12;

fn off_diagonal_norm<T: Real>(a: &[Complex<T>], d: usize) -> T {
    let mut s = T::zero();
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += a[i * d + j].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic complex Jacobi eigensolver.
///
/// Each rotation first removes the phase of `H_pq` with a diagonal unitary,
/// then applies the real symmetric Jacobi rotation that annihilates it.
/// Stops when the off-diagonal HS norm falls to `1e-12·‖H‖_HS`.
pub fn jacobi_eigh<T: Real>(h: &Hermitian<T>) -> Result<Eigh<T>> {
    let d = h.dim();
    let mut a: Vec<Complex<T>> = h.matrix().as_slice().to_vec();
    let mut v = Matrix::<T>::identity(d);
    let scale = h.matrix().hs_norm();
    let target = T::tol(JACOBI_REL_TOL) * scale;

    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a, d) <= target {
            converged = true;
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                let r = apq.norm();
                if r <= T::min_positive_value() {
                    continue;
                }
                let phase = apq / r;
                let app = a[p * d + p].re;
                let aqq = a[q * d + q].re;
                let theta = (aqq - app) / (r + r);
                let t = if theta.abs() > T::lit(1e150) {
                    T::one() / (theta + theta)
                } else {
                    let s = if theta >= T::zero() { T::one() } else { -T::one() };
                    s / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                let w_pp = Complex::new(c, T::zero());
                let w_pq = Complex::new(s, T::zero());
                let w_qp = -phase.conj() * s;
                let w_qq = phase.conj() * c;

                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = akp * w_pp + akq * w_qp;
                    a[k * d + q] = akp * w_pq + akq * w_qq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = w_pp.conj() * apk + w_qp.conj() * aqk;
                    a[q * d + k] = w_pq.conj() * apk + w_qq.conj() * aqk;
                }
                a[p * d + q] = Complex::zero();
                a[q * d + p] = Complex::zero();
                a[p * d + p].im = T::zero();
                a[q * d + q].im = T::zero();

                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * w_pp + vkq * w_qp;
                    v[(k, q)] = vkp * w_pq + vkq * w_qq;
                }
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(&a, d);
        if off > target {
            return Err(Error::Numerical {
                message: format!("Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps"),
                residual: (off / scale.max(T::min_positive_value())).as_f64(),
            });
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[i * d + i].re.partial_cmp(&a[j * d + j].re).expect("finite eigenvalues"));
    let eigenvalues = order.iter().map(|&i| a[i * d + i].re).collect();
    let eigenvectors = Matrix::from_fn(d, |row, col| v[(row, order[col])]);
    Ok(Eigh { eigenvalues, eigenvectors })
}
