use crate::error::{dim, Result};
use crate::scalar::{axpy, dot, Real};

/// Anchors of a flat geometry, stored as rows of their linear coordinates.
///
/// For such a space `d²(μ(w), y) = scale · ‖Σᵢ wᵢ aᵢ − t‖²`, so both the mean
/// and the weight gradient are a single pass over the anchor matrix.
#[derive(Clone, Debug)]
pub struct FlatAnchors<T> {
    coords: usize,
    rows: Vec<T>,
}

impl<T: Real> FlatAnchors<T> {
    pub fn from_rows<'a>(coords: usize, rows: impl IntoIterator<Item = &'a [T]>) -> Result<Self> {
        let mut data = Vec::new();
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != coords {
                return Err(dim(format!("anchor {i} has {} coordinates, expected {coords}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { coords, rows: data })
    }

    pub fn len(&self) -> usize {
        if self.coords == 0 {
            0
        } else {
            self.rows.len() / self.coords
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn coords(&self) -> usize {
        self.coords
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.rows[i * self.coords..(i + 1) * self.coords]
    }

    /// `Σᵢ wᵢ aᵢ`
    pub fn combine(&self, w: &[T]) -> Vec<T> {
        debug_assert_eq!(w.len(), self.len());
        let mut out = vec![T::zero(); self.coords];
        for (i, &wi) in w.iter().enumerate() {
            if wi != T::zero() {
                axpy(wi, self.row(i), &mut out);
            }
        }
        out
    }

    /// Loss `scale·‖Σ wᵢ aᵢ − t‖²` and gradient `2·scale·⟨r, aᵢ⟩`.
    pub fn loss_and_grad(&self, scale: T, w: &[T], target: &[T], grad: &mut [T]) -> T {
        let mut r = self.combine(w);
        for (ri, &ti) in r.iter_mut().zip(target) {
            *ri -= ti;
        }
        let two_scale = T::lit(2.0) * scale;
        for (i, g) in grad.iter_mut().enumerate() {
            *g = two_scale * dot(&r, self.row(i));
        }
        scale * dot(&r, &r)
    }

    pub fn loss(&self, scale: T, w: &[T], target: &[T]) -> T {
        scale * crate::scalar::sq_dist(&self.combine(w), target)
    }
}
