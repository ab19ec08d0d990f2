//! Small dense symmetric-matrix numerics.
//!
//! Everything here targets matrices of order at most a dozen or so: cyclic
//! Jacobi eigendecomposition, spectral matrix functions, and their Fréchet
//! derivatives through the Daleckii–Krein first divided differences.

use std::ops::Deref;

use smallvec::SmallVec;

use crate::error::{dim, E2mError, Result};
use crate::scalar::Real;

const JACOBI_MAX_SWEEPS: usize = 50;
const JACOBI_TOL: f64 = 1e-12;
const SYM_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

type Storage<T> = SmallVec<[T; 16]>;

/// Square dense matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Storage<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: SmallVec::from_elem(T::zero(), n * n),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = v;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Storage::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn from_row_major(n: usize, values: &[T]) -> Result<Self> {
        if values.len() != n * n {
            return Err(dim(format!("expected {} entries for a {n}x{n} matrix, got {}", n * n, values.len())));
        }
        Ok(Self {
            n,
            data: SmallVec::from_slice(values),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.n, rhs.n);
        Self {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// `self += s * rhs`
    pub fn add_scaled(&mut self, s: T, rhs: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
    }

    pub fn add_diag(&mut self, v: T) {
        for i in 0..self.n {
            self.data[i * self.n + i] += v;
        }
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frob_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Frobenius inner product `tr(Aᵀ B)`.
    pub fn frob_inner(&self, rhs: &Self) -> T {
        crate::scalar::dot(&self.data, &rhs.data)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(A + Aᵀ) / 2`
    pub fn symmetrized(&self) -> SymMatrix<T> {
        let half = T::lit(0.5);
        SymMatrix(Self::from_fn(self.n, |i, j| half * (self.get(i, j) + self.get(j, i))))
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

/// Symmetric matrix (symmetric within `1e-10` relative on construction).
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix<T>(Matrix<T>);

impl<T: Real> SymMatrix<T> {
    pub fn new(m: Matrix<T>) -> Result<Self> {
        let scale = T::one().max(m.max_abs());
        let asym = m.max_asymmetry();
        if !(asym <= T::tol(SYM_TOL) * scale) {
            return Err(E2mError::Invalid(format!("matrix is not symmetric (max asymmetry {asym})")));
        }
        Ok(m.symmetrized())
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n))
    }

    pub fn from_diag(d: &[T]) -> Self {
        Self(Matrix::from_diag(d))
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    /// `B A B` for symmetric `B`, symmetrized against rounding.
    pub fn congruence(&self, b: &SymMatrix<T>) -> SymMatrix<T> {
        b.0.matmul(&self.0).matmul(&b.0).symmetrized()
    }

    pub fn add(&self, rhs: &Self) -> Self {
        Self(self.0.add(&rhs.0))
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        Self(self.0.sub(&rhs.0))
    }

    pub fn scale(&self, s: T) -> Self {
        Self(self.0.scale(s))
    }

    pub fn add_scaled(&mut self, s: T, rhs: &Self) {
        self.0.add_scaled(s, &rhs.0);
    }

    pub fn add_diag(&mut self, v: T) {
        self.0.add_diag(v);
    }

    pub fn cast<U: Real>(&self) -> SymMatrix<U> {
        SymMatrix(self.0.cast())
    }
}

impl<T> Deref for SymMatrix<T> {
    type Target = Matrix<T>;
    fn deref(&self) -> &Matrix<T> {
        &self.0
    }
}

/// Spectral decomposition `A = U diag(values) Uᵀ`, values ascending,
/// eigenvectors in the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct EigenPair<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Real> EigenPair<T> {
    /// `U diag(d) Uᵀ`
    pub fn reconstruct_with(&self, d: &[T]) -> SymMatrix<T> {
        let n = self.vectors.dim();
        let u = &self.vectors;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut s = T::zero();
                for k in 0..n {
                    s += u.get(i, k) * d[k] * u.get(j, k);
                }
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        SymMatrix(out)
    }

    pub fn min_value(&self) -> T {
        self.values[0]
    }

    pub fn max_value(&self) -> T {
        *self.values.last().expect("non-empty spectrum")
    }
}

/// One exact Jacobi rotation diagonalizes a 2×2 block.
fn eigen2<T: Real>(a: T, b: T, c: T) -> EigenPair<T> {
    let (mut lo, mut hi, mut cs, mut sn) = (a, c, T::one(), T::zero());
    if b != T::zero() {
        let theta = (c - a) / (T::lit(2.0) * b);
        let t = if theta.abs() > T::lit(1e150).min(T::max_value().sqrt()) {
            T::one() / (T::lit(2.0) * theta)
        } else {
            let t = T::one() / (theta.abs() + (theta * theta + T::one()).sqrt());
            if theta < T::zero() {
                -t
            } else {
                t
            }
        };
        cs = T::one() / (t * t + T::one()).sqrt();
        sn = t * cs;
        lo = a - t * b;
        hi = c + t * b;
    }
    // Columns (cs, −sn) and (sn, cs) pair with `lo` and `hi`.
    let (values, vectors) = if lo <= hi {
        (vec![lo, hi], Matrix::from_row_major(2, &[cs, sn, -sn, cs]))
    } else {
        (vec![hi, lo], Matrix::from_row_major(2, &[sn, cs, cs, -sn]))
    };
    EigenPair { values, vectors: vectors.expect("2x2") }
}

/// Eigendecomposition by cyclic Jacobi rotations (fixed sweep order).
pub fn sym_eigen<T: Real>(a: &SymMatrix<T>) -> Result<EigenPair<T>> {
    let n = a.dim();
    if n == 0 {
        return Err(dim("empty matrix"));
    }
    if !a.is_finite() {
        return Err(E2mError::Invalid("non-finite matrix entry".into()));
    }
    if n == 2 {
        return Ok(eigen2(a.get(0, 0), a.get(0, 1), a.get(1, 1)));
    }
    let mut m: Vec<T> = a.as_slice().to_vec();
    let mut v = Matrix::<T>::identity(n);
    let norm = a.frob_norm();
    let tol = T::lit(JACOBI_TOL).max(T::epsilon() * T::lit(32.0)) * norm;

    let off = |m: &[T]| -> T {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    let mut last_off = T::zero();
    for _sweep in 0..=JACOBI_MAX_SWEEPS {
        last_off = off(&m);
        if last_off <= tol {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = if theta.abs() > T::lit(1e150).min(T::max_value().sqrt()) {
                    T::one() / (T::lit(2.0) * theta)
                } else {
                    let t = T::one() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    if theta < T::zero() {
                        -t
                    } else {
                        t
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = T::zero();
                m[q * n + p] = T::zero();
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        return Err(E2mError::NoConvergence {
            iterations: JACOBI_MAX_SWEEPS,
            residual: last_off.to_f64_lossy(),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].partial_cmp(&m[j * n + j]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = Matrix::from_fn(n, |r, c| v.get(r, order[c]));
    Ok(EigenPair { values, vectors })
}

/// Scalar function applied through the spectrum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatFn<T> {
    Power(T),
    Sqrt,
    Square,
}

impl<T: Real> MatFn<T> {
    fn needs_psd(&self) -> bool {
        !matches!(self, MatFn::Square)
    }

    pub fn eval(&self, x: T) -> T {
        match *self {
            MatFn::Power(a) => x.powf(a),
            MatFn::Sqrt => x.sqrt(),
            MatFn::Square => x * x,
        }
    }

    pub fn deriv(&self, x: T) -> Result<T> {
        match *self {
            MatFn::Square => Ok(T::lit(2.0) * x),
            MatFn::Sqrt => {
                if x <= T::zero() {
                    Err(E2mError::DerivativeSingular("square root at a zero eigenvalue".into()))
                } else {
                    Ok(T::lit(0.5) / x.sqrt())
                }
            }
            MatFn::Power(a) => {
                if a == T::one() {
                    Ok(T::one())
                } else if x <= T::zero() && a < T::one() {
                    Err(E2mError::DerivativeSingular(format!("power {a} at a zero eigenvalue")))
                } else {
                    Ok(a * x.powf(a - T::one()))
                }
            }
        }
    }

    /// First divided difference `(f(x) - f(y)) / (x - y)`, `f'(x)` on the diagonal.
    pub fn divided_difference(&self, x: T, y: T) -> Result<T> {
        match *self {
            MatFn::Square => Ok(x + y),
            MatFn::Sqrt => {
                let s = x.sqrt() + y.sqrt();
                if s <= T::zero() {
                    Err(E2mError::DerivativeSingular("square root at a zero eigenvalue".into()))
                } else {
                    Ok(T::one() / s)
                }
            }
            MatFn::Power(_) => {
                let gap = (x - y).abs();
                let scale = x.abs().max(y.abs());
                if gap > T::lit(1e-8).max(T::epsilon().sqrt()) * scale && gap > T::zero() {
                    Ok((self.eval(x) - self.eval(y)) / (x - y))
                } else {
                    self.deriv(T::lit(0.5) * (x + y))
                }
            }
        }
    }
}

/// Eigenvalues after the PSD check: values below `-tol` are rejected, the
/// rest of the negative ones clipped to zero.
fn clipped_spectrum<T: Real>(e: &EigenPair<T>, f: &MatFn<T>) -> Result<Vec<T>> {
    if !f.needs_psd() {
        return Ok(e.values.clone());
    }
    let tol = T::tol(PSD_TOL) * T::one().max(e.max_value().abs());
    let lo = e.min_value();
    if lo < -tol {
        return Err(E2mError::NotPsd(lo.to_f64_lossy()));
    }
    let vals: Vec<T> = e.values.iter().map(|&v| v.max(T::zero())).collect();
    if let MatFn::Power(a) = f {
        if *a < T::zero() && vals[0] <= T::zero() {
            return Err(E2mError::DerivativeSingular(format!("negative power {a} of a singular matrix")));
        }
    }
    Ok(vals)
}

/// `U f(Λ) Uᵀ` from an existing decomposition.
pub fn apply_eigen<T: Real>(e: &EigenPair<T>, f: MatFn<T>) -> Result<SymMatrix<T>> {
    let vals = clipped_spectrum(e, &f)?;
    let fv: Vec<T> = vals.iter().map(|&v| f.eval(v)).collect();
    Ok(e.reconstruct_with(&fv))
}

pub fn sym_apply<T: Real>(a: &SymMatrix<T>, f: MatFn<T>) -> Result<SymMatrix<T>> {
    apply_eigen(&sym_eigen(a)?, f)
}

/// Directional derivative `Df(A)[H]` from an existing decomposition of `A`.
pub fn dk_from_eigen<T: Real>(e: &EigenPair<T>, f: MatFn<T>, h: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    let n = e.vectors.dim();
    if h.dim() != n {
        return Err(dim(format!("direction is {}x{}, matrix is {n}x{n}", h.dim(), h.dim())));
    }
    let vals = clipped_spectrum(e, &f)?;
    let u = &e.vectors;
    // Uᵀ H U, scaled entrywise by the divided differences.
    let mut inner = u.transpose().matmul(h).matmul(u);
    for i in 0..n {
        for j in i..n {
            let phi = f.divided_difference(vals[i], vals[j])?;
            let sym = T::lit(0.5) * (inner.get(i, j) + inner.get(j, i)) * phi;
            inner.set(i, j, sym);
            inner.set(j, i, sym);
        }
    }
    Ok(u.matmul(&inner).matmul(&u.transpose()).symmetrized())
}

/// Daleckii–Krein directional derivative `Df(A)[H] = U ((Uᵀ H U) ∘ Φ) Uᵀ`.
pub fn dk_directional<T: Real>(a: &SymMatrix<T>, f: MatFn<T>, h: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    dk_from_eigen(&sym_eigen(a)?, f, h)
}
