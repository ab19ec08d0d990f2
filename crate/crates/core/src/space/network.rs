//! Weighted undirected networks as graph Laplacians under the Frobenius metric.

use crate::error::{dim, invalid, Result};
use crate::geometry::{MetricSpace, SpaceId};
use crate::linalg::{sym_eigen, Matrix, SymMatrix};
use crate::scalar::Real;
use crate::space::flat::FlatAnchors;

/// `L = D − A`, stored as a full `V×V` row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphLaplacian<T> {
    v: usize,
    entries: Vec<T>,
}

impl<T: Real> GraphLaplacian<T> {
    pub fn nodes(&self) -> usize {
        self.v
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.v + j]
    }

    pub(crate) fn from_entries(v: usize, entries: Vec<T>) -> Self {
        debug_assert_eq!(entries.len(), v * v);
        Self { v, entries }
    }

    /// Builds from a full matrix and checks every Laplacian invariant.
    pub fn from_matrix(v: usize, entries: Vec<T>) -> Result<Self> {
        if entries.len() != v * v {
            return Err(dim(format!("{} entries for {v} nodes", entries.len())));
        }
        let l = Self { v, entries };
        l.check()?;
        Ok(l)
    }

    /// Edge weights `(0,1), (0,2), …, (V−2,V−1)`, read as `−L_ij`.
    pub fn upper_triangle(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.v * (self.v - 1) / 2);
        for i in 0..self.v {
            for j in (i + 1)..self.v {
                out.push(-self.get(i, j));
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> GraphLaplacian<U> {
        GraphLaplacian {
            v: self.v,
            entries: self.entries.iter().map(|x| U::lit(x.to_f64_lossy())).collect(),
        }
    }

    /// Symmetric, non-positive off-diagonals, zero row sums, PSD.
    fn check(&self) -> Result<()> {
        let v = self.v;
        if self.entries.iter().any(|x| !x.is_finite()) {
            return Err(invalid("non-finite Laplacian entry"));
        }
        let scale = self.entries.iter().fold(T::one(), |m, x| m.max(x.abs()));
        let sym_tol = T::tol(1e-9) * scale;
        let off_tol = T::tol(1e-12) * scale;
        for i in 0..v {
            let mut row = T::zero();
            for j in 0..v {
                let x = self.get(i, j);
                row += x;
                if i != j {
                    if (x - self.get(j, i)).abs() > sym_tol {
                        return Err(invalid(format!("Laplacian not symmetric at ({i},{j})")));
                    }
                    if x > off_tol {
                        return Err(invalid(format!("positive off-diagonal entry {x} at ({i},{j})")));
                    }
                }
            }
            if row.abs() > sym_tol {
                return Err(invalid(format!("row {i} sums to {row}")));
            }
        }
        let m = SymMatrix::new(Matrix::from_row_major(v, &self.entries)?)?;
        let lo = sym_eigen(&m)?.min_value();
        if lo < -T::tol(1e-8) * scale {
            return Err(invalid(format!("Laplacian has negative eigenvalue {lo}")));
        }
        Ok(())
    }
}

/// Laplacian of the undirected graph with the given upper-triangle edge weights.
pub fn laplacian_from_edges<T: Real>(edge_weights: &[T], v: usize) -> Result<GraphLaplacian<T>> {
    if v == 0 || edge_weights.len() != v * (v - 1) / 2 {
        return Err(dim(format!(
            "{} edge weights for {v} nodes (expected {})",
            edge_weights.len(),
            v * v.saturating_sub(1) / 2
        )));
    }
    if let Some(k) = edge_weights.iter().position(|w| !(*w >= T::zero()) || !w.is_finite()) {
        return Err(invalid(format!("edge weight {k} is {}", edge_weights[k])));
    }
    let mut entries = vec![T::zero(); v * v];
    let mut k = 0;
    for i in 0..v {
        for j in (i + 1)..v {
            let w = edge_weights[k];
            k += 1;
            entries[i * v + j] = -w;
            entries[j * v + i] = -w;
            entries[i * v + i] += w;
            entries[j * v + j] += w;
        }
    }
    Ok(GraphLaplacian { v, entries })
}

/// Undirected Laplacian from a directed `V×V` adjacency, averaging `(i,j)` and `(j,i)`.
pub fn laplacian_from_directed<T: Real>(adjacency: &[T], v: usize) -> Result<GraphLaplacian<T>> {
    if adjacency.len() != v * v {
        return Err(dim(format!("{} adjacency entries for {v} nodes", adjacency.len())));
    }
    let half = T::lit(0.5);
    let mut upper = Vec::with_capacity(v * (v - 1) / 2);
    for i in 0..v {
        for j in (i + 1)..v {
            upper.push(half * (adjacency[i * v + j] + adjacency[j * v + i]));
        }
    }
    laplacian_from_edges(&upper, v)
}

pub fn frobenius_distance<T: Real>(a: &GraphLaplacian<T>, b: &GraphLaplacian<T>) -> Result<T> {
    if a.v != b.v {
        return Err(dim(format!("{} vs {} nodes", a.v, b.v)));
    }
    Ok(crate::scalar::sq_dist(&a.entries, &b.entries).sqrt())
}

/// Network backend; `max_weight` is an optional edge-weight cap enforced on ingest.
#[derive(Clone, Copy, Debug)]
pub struct Network {
    pub nodes: usize,
    pub max_weight: Option<f64>,
}

impl Network {
    pub fn new(nodes: usize) -> Self {
        Self { nodes, max_weight: None }
    }

    /// Applies the ingest cap to a parsed network.
    pub fn check_cap<T: Real>(&self, l: &GraphLaplacian<T>) -> Result<()> {
        if let Some(cap) = self.max_weight {
            if let Some(w) = l.upper_triangle().into_iter().find(|w| w.to_f64_lossy() > cap) {
                return Err(invalid(format!("edge weight {w} exceeds cap {cap}")));
            }
        }
        Ok(())
    }

    fn check_nodes<T: Real>(&self, l: &GraphLaplacian<T>) -> Result<()> {
        if l.v != self.nodes {
            return Err(dim(format!("network has {} nodes, expected {}", l.v, self.nodes)));
        }
        Ok(())
    }
}

impl<T: Real> MetricSpace<T> for Network {
    type Point = GraphLaplacian<T>;
    type Prepared = FlatAnchors<T>;
    type Target = Vec<T>;

    fn id(&self) -> SpaceId {
        SpaceId::Network
    }

    fn validate(&self, p: &GraphLaplacian<T>) -> Result<()> {
        self.check_nodes(p)?;
        p.check()
    }

    fn distance(&self, a: &GraphLaplacian<T>, b: &GraphLaplacian<T>) -> Result<T> {
        self.check_nodes(a)?;
        frobenius_distance(a, b)
    }

    fn prepare_anchors(&self, anchors: &[GraphLaplacian<T>]) -> Result<FlatAnchors<T>> {
        FlatAnchors::from_rows(self.nodes * self.nodes, anchors.iter().map(|a| a.entries.as_slice()))
    }

    fn anchor_count(&self, prepared: &FlatAnchors<T>) -> usize {
        prepared.len()
    }

    fn prepare_target(&self, target: &GraphLaplacian<T>) -> Result<Vec<T>> {
        self.check_nodes(target)?;
        Ok(target.entries.clone())
    }

    fn mean_prepared(&self, prepared: &FlatAnchors<T>, w: &[T]) -> Result<GraphLaplacian<T>> {
        Ok(GraphLaplacian::from_entries(self.nodes, prepared.combine(w)))
    }

    fn loss_and_grad(&self, prepared: &FlatAnchors<T>, w: &[T], target: &Vec<T>, grad: &mut [T]) -> Result<T> {
        Ok(prepared.loss_and_grad(T::one(), w, target, grad))
    }

    fn loss(&self, prepared: &FlatAnchors<T>, w: &[T], target: &Vec<T>) -> Result<T> {
        Ok(prepared.loss(T::one(), w, target))
    }
}
