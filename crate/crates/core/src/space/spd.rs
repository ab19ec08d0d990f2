//! Symmetric positive (semi-)definite matrices under the power metric
//! `d_α(A, B) = (1/α)‖A^α − B^α‖_F`.

use crate::error::{dim, E2mError, Result};
use crate::geometry::{MetricSpace, SpaceId};
use crate::linalg::{sym_apply, sym_eigen, Matrix, MatFn, SymMatrix};
use crate::scalar::Real;
use crate::space::flat::FlatAnchors;

const PSD_OUTPUT_TOL: f64 = 1e-8;

/// A symmetric matrix whose spectrum is non-negative up to rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix<T>(SymMatrix<T>);

impl<T: Real> SpdMatrix<T> {
    pub fn new(m: SymMatrix<T>) -> Result<Self> {
        let e = sym_eigen(&m)?;
        let tol = T::tol(1e-10) * T::one().max(e.max_value().abs());
        if e.min_value() < -tol {
            return Err(E2mError::NotPsd(e.min_value().to_f64_lossy()));
        }
        Ok(Self(m))
    }

    pub(crate) fn from_sym_unchecked(m: SymMatrix<T>) -> Self {
        Self(m)
    }

    pub fn identity(l: usize) -> Self {
        Self(SymMatrix::identity(l))
    }

    pub fn from_diag(d: &[T]) -> Result<Self> {
        Self::new(SymMatrix::from_diag(d))
    }

    pub fn from_row_major(l: usize, values: &[T]) -> Result<Self> {
        Self::new(SymMatrix::new(Matrix::from_row_major(l, values)?)?)
    }

    /// `l(l+1)/2` values, row-major over the lower triangle, diagonal included.
    pub fn from_lower_triangle(l: usize, values: &[T]) -> Result<Self> {
        if values.len() != l * (l + 1) / 2 {
            return Err(dim(format!("{} lower-triangle values for l = {l}", values.len())));
        }
        let mut m = Matrix::zeros(l);
        let mut k = 0;
        for i in 0..l {
            for j in 0..=i {
                m.set(i, j, values[k]);
                m.set(j, i, values[k]);
                k += 1;
            }
        }
        Self::new(SymMatrix::new(m)?)
    }

    pub fn lower_triangle(&self) -> Vec<T> {
        let l = self.dim();
        let mut out = Vec::with_capacity(l * (l + 1) / 2);
        for i in 0..l {
            for j in 0..=i {
                out.push(self.0.get(i, j));
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn sym(&self) -> &SymMatrix<T> {
        &self.0
    }

    pub fn into_sym(self) -> SymMatrix<T> {
        self.0
    }

    pub fn cast<U: Real>(&self) -> SpdMatrix<U> {
        SpdMatrix(self.0.cast())
    }

    /// `A^α` through the spectrum.
    pub fn power(&self, alpha: T) -> Result<SymMatrix<T>> {
        if alpha == T::lit(0.5) {
            sym_apply(&self.0, MatFn::Sqrt)
        } else {
            sym_apply(&self.0, MatFn::Power(alpha))
        }
    }

    /// Smallest eigenvalue `≥ −1e-8·max(1, |λ_max|)`.
    pub fn check_output(&self) -> Result<()> {
        let e = sym_eigen(&self.0)?;
        if e.min_value() < -T::tol(PSD_OUTPUT_TOL) * T::one().max(e.max_value().abs()) {
            return Err(E2mError::NotPsd(e.min_value().to_f64_lossy()));
        }
        Ok(())
    }
}

fn check_same_dim<T: Real>(a: &SpdMatrix<T>, b: &SpdMatrix<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(dim(format!("{}x{} vs {}x{}", a.dim(), a.dim(), b.dim(), b.dim())));
    }
    Ok(())
}

/// `(1/α)‖A^α − B^α‖_F`
pub fn power_distance<T: Real>(a: &SpdMatrix<T>, b: &SpdMatrix<T>, alpha: T) -> Result<T> {
    check_same_dim(a, b)?;
    Ok(a.power(alpha)?.sub(&b.power(alpha)?).frob_norm() / alpha)
}

/// Power-metric backend on `l×l` matrices.
#[derive(Clone, Copy, Debug)]
pub struct SpdPower {
    pub l: usize,
    pub alpha: f64,
}

impl SpdPower {
    pub fn new(l: usize) -> Self {
        Self { l, alpha: 0.5 }
    }

    pub fn with_alpha(l: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(E2mError::Invalid(format!("power exponent must be positive, got {alpha}")));
        }
        Ok(Self { l, alpha })
    }

    fn alpha<T: Real>(&self) -> T {
        T::lit(self.alpha)
    }

    fn check_dim<T: Real>(&self, a: &SpdMatrix<T>) -> Result<()> {
        if a.dim() != self.l {
            return Err(dim(format!("matrix is {}x{}, expected l = {}", a.dim(), a.dim(), self.l)));
        }
        Ok(())
    }

    /// Inverse transform `M ↦ M^{1/α}` of a PSD combination of powered anchors.
    pub fn unpower<T: Real>(&self, m: &SymMatrix<T>) -> Result<SpdMatrix<T>> {
        let out = if self.alpha == 0.5 {
            m.matmul(m).symmetrized()
        } else {
            sym_apply(m, MatFn::Power(T::one() / self.alpha::<T>()))?
        };
        Ok(SpdMatrix::from_sym_unchecked(out))
    }
}

impl<T: Real> MetricSpace<T> for SpdPower {
    type Point = SpdMatrix<T>;
    type Prepared = FlatAnchors<T>;
    type Target = Vec<T>;

    fn id(&self) -> SpaceId {
        SpaceId::SpdPower
    }

    fn validate(&self, p: &SpdMatrix<T>) -> Result<()> {
        self.check_dim(p)?;
        SpdMatrix::new(p.sym().clone()).map(|_| ())
    }

    fn distance(&self, a: &SpdMatrix<T>, b: &SpdMatrix<T>) -> Result<T> {
        self.check_dim(a)?;
        power_distance(a, b, self.alpha())
    }

    fn prepare_anchors(&self, anchors: &[SpdMatrix<T>]) -> Result<FlatAnchors<T>> {
        let alpha = self.alpha();
        let powered = anchors
            .iter()
            .map(|a| {
                self.check_dim(a)?;
                a.power(alpha)
            })
            .collect::<Result<Vec<_>>>()?;
        FlatAnchors::from_rows(self.l * self.l, powered.iter().map(|p| p.as_slice()))
    }

    fn anchor_count(&self, prepared: &FlatAnchors<T>) -> usize {
        prepared.len()
    }

    fn prepare_target(&self, target: &SpdMatrix<T>) -> Result<Vec<T>> {
        self.check_dim(target)?;
        Ok(target.power(self.alpha())?.as_slice().to_vec())
    }

    fn mean_prepared(&self, prepared: &FlatAnchors<T>, w: &[T]) -> Result<SpdMatrix<T>> {
        let m = Matrix::from_row_major(self.l, &prepared.combine(w))?.symmetrized();
        self.unpower(&m)
    }

    fn loss_and_grad(&self, prepared: &FlatAnchors<T>, w: &[T], target: &Vec<T>, grad: &mut [T]) -> Result<T> {
        let a: T = self.alpha();
        Ok(prepared.loss_and_grad(T::one() / (a * a), w, target, grad))
    }

    fn loss(&self, prepared: &FlatAnchors<T>, w: &[T], target: &Vec<T>) -> Result<T> {
        let a: T = self.alpha();
        Ok(prepared.loss(T::one() / (a * a), w, target))
    }
}
