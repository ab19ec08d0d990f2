//! Bures–Wasserstein geometry on SPD matrices.
//!
//! The barycenter is the fixed point of
//! `Σ ↦ Σ^{-½} (Σᵢ wᵢ (Σ^½ Yᵢ Σ^½)^½)² Σ^{-½}`, started from the Euclidean
//! mean. Weight gradients are obtained by reverse-mode differentiation through
//! the last `unroll_k` recorded iterations.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, E2mError, Result};
use crate::geometry::{MetricSpace, SpaceId};
use crate::linalg::{apply_eigen, dk_from_eigen, sym_eigen, EigenPair, MatFn, SymMatrix};
use crate::scalar::Real;
use crate::space::spd::SpdMatrix;

const ANCHOR_RIDGE: f64 = 1e-10;
const MONITOR_WINDOW: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BwSolveConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub unroll_k: usize,
}

impl Default for BwSolveConfig {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-10, unroll_k: 20 }
    }
}

impl BwSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.unroll_k > self.max_iter {
            return Err(invalid(format!("unroll_k {} exceeds max_iter {}", self.unroll_k, self.max_iter)));
        }
        Ok(())
    }
}

/// `√max(0, Tr A + Tr B − 2 Tr((A^½ B A^½)^½))`
pub fn bw_distance<T: Real>(a: &SpdMatrix<T>, b: &SpdMatrix<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(dim(format!("{}x{} vs {}x{}", a.dim(), a.dim(), b.dim(), b.dim())));
    }
    Ok(bw_sq_distance(a.sym(), b.sym())?.sqrt())
}

fn bw_sq_distance<T: Real>(a: &SymMatrix<T>, b: &SymMatrix<T>) -> Result<T> {
    let ah = apply_eigen(&sym_eigen(a)?, MatFn::Sqrt)?;
    let cross = apply_eigen(&sym_eigen(&b.congruence(&ah))?, MatFn::Sqrt)?;
    Ok((a.trace() + b.trace() - T::lit(2.0) * cross.trace()).max(T::zero()))
}

/// One recorded fixed-point step out of `Σ`.
struct Step<T> {
    sigma_eig: EigenPair<T>,
    s: SymMatrix<T>,
    sinv: SymMatrix<T>,
    c_eigs: Vec<EigenPair<T>>,
    roots: Vec<SymMatrix<T>>,
    t: SymMatrix<T>,
    p: SymMatrix<T>,
}

struct Solve<T> {
    sigma: SymMatrix<T>,
    iterations: usize,
    steps: VecDeque<Step<T>>,
    /// Whether `steps` reaches back to the Euclidean initialization.
    from_start: bool,
}

fn euclidean_mean<T: Real>(w: &[T], anchors: &[SymMatrix<T>]) -> SymMatrix<T> {
    let mut m = SymMatrix::zeros(anchors[0].dim());
    for (&wi, a) in w.iter().zip(anchors) {
        if wi != T::zero() {
            m.add_scaled(wi, a);
        }
    }
    m
}

fn step<T: Real>(sigma: &SymMatrix<T>, w: &[T], anchors: &[SymMatrix<T>]) -> Result<(SymMatrix<T>, Step<T>)> {
    let sigma_eig = sym_eigen(sigma)?;
    if sigma_eig.min_value() <= T::zero() {
        return Err(E2mError::DerivativeSingular(format!(
            "singular barycenter iterate (smallest eigenvalue {})",
            sigma_eig.min_value()
        )));
    }
    let s = apply_eigen(&sigma_eig, MatFn::Sqrt)?;
    let sinv = apply_eigen(&sigma_eig, MatFn::Power(T::lit(-0.5)))?;
    let l = sigma.dim();
    let mut t = SymMatrix::zeros(l);
    let mut c_eigs = Vec::with_capacity(anchors.len());
    let mut roots = Vec::with_capacity(anchors.len());
    for (&wi, y) in w.iter().zip(anchors) {
        let ce = sym_eigen(&y.congruence(&s))?;
        let r = apply_eigen(&ce, MatFn::Sqrt)?;
        if wi != T::zero() {
            t.add_scaled(wi, &r);
        }
        c_eigs.push(ce);
        roots.push(r);
    }
    let p = t.matmul(&t).symmetrized();
    let next = p.congruence(&sinv);
    Ok((next, Step { sigma_eig, s, sinv, c_eigs, roots, t, p }))
}

fn solve<T: Real>(w: &[T], anchors: &[SymMatrix<T>], cfg: &BwSolveConfig, record: bool) -> Result<Solve<T>> {
    cfg.validate()?;
    let mut sigma = euclidean_mean(w, anchors);
    let keep = if record { cfg.unroll_k } else { 0 };
    let mut steps = VecDeque::with_capacity(keep);
    let mut from_start = true;
    let mut residuals: Vec<T> = Vec::with_capacity(cfg.max_iter);
    for it in 1..=cfg.max_iter {
        let (next, st) = step(&sigma, w, anchors)?;
        if !next.is_finite() {
            return Err(invalid("non-finite barycenter iterate"));
        }
        let residual = next.sub(&sigma).frob_norm();
        residuals.push(residual);
        if keep > 0 {
            if steps.len() == keep {
                steps.pop_front();
                from_start = false;
            }
            steps.push_back(st);
        } else {
            from_start = false;
        }
        let tol = T::tol(cfg.tol) * T::one().max(next.frob_norm());
        sigma = next;
        if residual <= tol {
            monitor(&residuals);
            return Ok(Solve { sigma, iterations: it, steps, from_start });
        }
    }
    Err(E2mError::NoConvergence {
        iterations: cfg.max_iter,
        residual: residuals.last().map_or(f64::NAN, |r| r.to_f64_lossy()),
    })
}

fn monitor<T: Real>(residuals: &[T]) {
    let tail = &residuals[residuals.len().saturating_sub(MONITOR_WINDOW)..];
    if tail.windows(2).any(|p| p[1] > p[0] * T::lit(1.0 + 1e-6) + T::epsilon()) {
        log::warn!("barycenter residual increased within the last {MONITOR_WINDOW} iterations");
    }
}

fn regularize<T: Real>(a: &SpdMatrix<T>) -> SymMatrix<T> {
    let mut m = a.sym().clone();
    m.add_diag(T::lit(ANCHOR_RIDGE));
    m
}

/// Weighted BW barycenter with the given solver settings.
pub fn bw_barycenter<T: Real>(w: &[T], anchors: &[SpdMatrix<T>], cfg: &BwSolveConfig) -> Result<SpdMatrix<T>> {
    if anchors.is_empty() || w.len() != anchors.len() {
        return Err(dim(format!("{} weights for {} anchors", w.len(), anchors.len())));
    }
    let prepared: Vec<_> = anchors.iter().map(regularize).collect();
    Ok(SpdMatrix::from_sym_unchecked(solve(w, &prepared, cfg, false)?.sigma))
}

/// `∂/∂w d²(Σ_K(w), Y)` by reverse accumulation through the recorded steps.
fn backprop<T: Real>(solve: &Solve<T>, w: &[T], anchors: &[SymMatrix<T>], g_final: SymMatrix<T>, grad: &mut [T]) -> Result<()> {
    grad.iter_mut().for_each(|g| *g = T::zero());
    let mut g = g_final;
    for st in solve.steps.iter().rev() {
        let p_bar = g.congruence(&st.sinv);
        let gsp = g.matmul(&st.sinv).matmul(&st.p);
        let sinv_bar = gsp.add(&gsp.transpose()).symmetrized();
        let pt = p_bar.matmul(&st.t);
        let t_bar = pt.add(&pt.transpose()).symmetrized();
        let mut s_bar = SymMatrix::zeros(st.s.dim());
        for (i, ((&wi, y), r)) in w.iter().zip(anchors).zip(&st.roots).enumerate() {
            grad[i] += t_bar.frob_inner(r);
            let c_bar = dk_from_eigen(&st.c_eigs[i], MatFn::Sqrt, &t_bar.scale(wi))?;
            let csy = c_bar.matmul(&st.s).matmul(y);
            s_bar.add_scaled(T::one(), &csy.add(&csy.transpose()).symmetrized());
        }
        g = dk_from_eigen(&st.sigma_eig, MatFn::Sqrt, &s_bar)?
            .add(&dk_from_eigen(&st.sigma_eig, MatFn::Power(T::lit(-0.5)), &sinv_bar)?);
    }
    if solve.from_start {
        for (gi, y) in grad.iter_mut().zip(anchors) {
            *gi += g.frob_inner(y);
        }
    }
    Ok(())
}

/// Loss `d²(Σ, Y)` and its gradient `I − Σ^{-½}(Σ^½ Y Σ^½)^½ Σ^{-½}` in `Σ`.
fn loss_and_sigma_grad<T: Real>(sigma: &SymMatrix<T>, y: &SymMatrix<T>) -> Result<(T, SymMatrix<T>)> {
    let e = sym_eigen(sigma)?;
    let s = apply_eigen(&e, MatFn::Sqrt)?;
    let sinv = apply_eigen(&e, MatFn::Power(T::lit(-0.5)))?;
    let root = apply_eigen(&sym_eigen(&y.congruence(&s))?, MatFn::Sqrt)?;
    let loss = (sigma.trace() + y.trace() - T::lit(2.0) * root.trace()).max(T::zero());
    let mut g = root.congruence(&sinv).scale(-T::one());
    g.add_diag(T::one());
    Ok((loss, g))
}

/// Bures–Wasserstein backend on `l×l` matrices.
#[derive(Clone, Copy, Debug)]
pub struct SpdBw {
    pub l: usize,
    pub cfg: BwSolveConfig,
}

impl SpdBw {
    pub fn new(l: usize) -> Self {
        Self { l, cfg: BwSolveConfig::default() }
    }

    pub fn with_config(l: usize, cfg: BwSolveConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { l, cfg })
    }

    fn check_dim<T: Real>(&self, a: &SpdMatrix<T>) -> Result<()> {
        if a.dim() != self.l {
            return Err(dim(format!("matrix is {}x{}, expected l = {}", a.dim(), a.dim(), self.l)));
        }
        Ok(())
    }

    /// Number of fixed-point iterations the solver needs at `w`.
    pub fn iterations<T: Real>(&self, prepared: &[SymMatrix<T>], w: &[T]) -> Result<usize> {
        Ok(solve(w, prepared, &self.cfg, false)?.iterations)
    }
}

impl<T: Real> MetricSpace<T> for SpdBw {
    type Point = SpdMatrix<T>;
    type Prepared = Vec<SymMatrix<T>>;
    type Target = SymMatrix<T>;

    fn id(&self) -> SpaceId {
        SpaceId::SpdBw
    }

    fn validate(&self, p: &SpdMatrix<T>) -> Result<()> {
        self.check_dim(p)?;
        SpdMatrix::new(p.sym().clone()).map(|_| ())
    }

    fn distance(&self, a: &SpdMatrix<T>, b: &SpdMatrix<T>) -> Result<T> {
        self.check_dim(a)?;
        bw_distance(a, b)
    }

    fn prepare_anchors(&self, anchors: &[SpdMatrix<T>]) -> Result<Vec<SymMatrix<T>>> {
        anchors
            .iter()
            .map(|a| {
                self.check_dim(a)?;
                Ok(regularize(a))
            })
            .collect()
    }

    fn anchor_count(&self, prepared: &Vec<SymMatrix<T>>) -> usize {
        prepared.len()
    }

    fn prepare_target(&self, target: &SpdMatrix<T>) -> Result<SymMatrix<T>> {
        self.check_dim(target)?;
        Ok(target.sym().clone())
    }

    fn mean_prepared(&self, prepared: &Vec<SymMatrix<T>>, w: &[T]) -> Result<SpdMatrix<T>> {
        Ok(SpdMatrix::from_sym_unchecked(solve(w, prepared, &self.cfg, false)?.sigma))
    }

    fn loss_and_grad(&self, prepared: &Vec<SymMatrix<T>>, w: &[T], target: &SymMatrix<T>, grad: &mut [T]) -> Result<T> {
        let sol = solve(w, prepared, &self.cfg, true)?;
        let (loss, g) = loss_and_sigma_grad(&sol.sigma, target)?;
        backprop(&sol, w, prepared, g, grad)?;
        Ok(loss)
    }

    fn loss(&self, prepared: &Vec<SymMatrix<T>>, w: &[T], target: &SymMatrix<T>) -> Result<T> {
        let sigma = solve(w, prepared, &self.cfg, false)?.sigma;
        bw_sq_distance(&sigma, target)
    }
}
