//! Neighborhood graphs for graph convolution: fixed graphs in the noisy
//! 3D space, and dynamic graphs selected in feature space from per-point
//! 3D search areas.

use std::fmt::Write as _;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::geometry::{Point3, SpatialIndex};
use crate::tensor::{Scalar, Tensor};

/// Per-point candidate lists of uniform width, nearest first, self
/// excluded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchArea {
    width: usize,
    candidates: Vec<usize>,
}

impl SearchArea {
    pub fn len(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.candidates.len() / self.width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn candidates(&self, i: usize) -> &[usize] {
        &self.candidates[i * self.width..(i + 1) * self.width]
    }

    /// Areas of independent clouds stacked into one, with indices offset.
    pub fn disjoint_union(parts: &[SearchArea]) -> Result<SearchArea> {
        let width = parts.first().map_or(0, |p| p.width);
        let mut candidates = Vec::new();
        let mut offset = 0;
        for p in parts {
            if p.width != width {
                return Err(Error::contract("search areas of different widths cannot be stacked"));
            }
            candidates.extend(p.candidates.iter().map(|&c| c + offset));
            offset += p.len();
        }
        Ok(SearchArea { width, candidates })
    }
}

/// Fixed-degree neighbor lists plus their flattening into edge arrays.
///
/// Edge `e = i * k + s` runs from source `neighbors(i)[s]` to target `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborGraph {
    k: usize,
    sources: Rc<[usize]>,
    targets: Rc<[usize]>,
}

impl NeighborGraph {
    pub fn from_lists(lists: &[Vec<usize>]) -> Result<Self> {
        let n = lists.len();
        let k = lists.first().map_or(0, Vec::len);
        let mut sources = Vec::with_capacity(n * k);
        let mut targets = Vec::with_capacity(n * k);
        for (i, list) in lists.iter().enumerate() {
            if list.len() != k {
                return Err(Error::contract(format!(
                    "point {i} has {} neighbors, expected {k}",
                    list.len()
                )));
            }
            for &j in list {
                if j >= n {
                    return Err(Error::Index {
                        op: "neighbor graph",
                        index: j,
                        len: n,
                    });
                }
                if j == i {
                    return Err(Error::contract(format!("self-loop at point {i}")));
                }
                sources.push(j);
                targets.push(i);
            }
        }
        Ok(NeighborGraph {
            k,
            sources: sources.into(),
            targets: targets.into(),
        })
    }

    fn from_flat(k: usize, flat: Vec<usize>) -> Self {
        let targets: Vec<usize> = (0..flat.len()).map(|e| e / k.max(1)).collect();
        NeighborGraph {
            k,
            sources: flat.into(),
            targets: targets.into(),
        }
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.targets.len() / self.k
        }
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.sources[i * self.k..(i + 1) * self.k]
    }

    pub fn to_lists(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|i| self.neighbors(i).to_vec()).collect()
    }

    pub fn sources(&self) -> Rc<[usize]> {
        self.sources.clone()
    }

    pub fn targets(&self) -> Rc<[usize]> {
        self.targets.clone()
    }

    /// Graphs of independent clouds stacked into one, with indices offset.
    pub fn disjoint_union(parts: &[NeighborGraph]) -> Result<NeighborGraph> {
        let k = parts.first().map_or(0, |p| p.k);
        let mut flat = Vec::new();
        let mut offset = 0;
        for p in parts {
            if p.k != k {
                return Err(Error::contract("graphs of different degree cannot be stacked"));
            }
            flat.extend(p.sources.iter().map(|&s| s + offset));
            offset += p.len();
        }
        Ok(Self::from_flat(k, flat))
    }

    /// One `i: j1 j2 ... jk` line per point.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            let _ = write!(out, "{i}:");
            for j in self.neighbors(i) {
                let _ = write!(out, " {j}");
            }
            out.push('\n');
        }
        out
    }
}

/// The `m` nearest points of every point in 3D, itself excluded. `m` is
/// clamped to `N - 1` for small clouds.
pub fn build_search_areas(points: &[Point3], m: usize, k: usize) -> Result<SearchArea> {
    if m < k {
        return Err(Error::config(format!(
            "search area size {m} is smaller than neighbor count {k}"
        )));
    }
    if points.len() < 2 {
        return Err(Error::contract("search areas need at least two points"));
    }
    let width = m.min(points.len() - 1);
    let index = SpatialIndex::build(points);
    let mut candidates = Vec::with_capacity(points.len() * width);
    for (i, p) in points.iter().enumerate() {
        candidates.extend(index.knn(p, width, Some(i))?);
    }
    Ok(SearchArea { width, candidates })
}

/// k-nearest-neighbor graph in the 3D space of `points`.
pub fn build_fixed_graph(points: &[Point3], k: usize) -> Result<NeighborGraph> {
    if k >= points.len() {
        return Err(Error::contract(format!(
            "fixed graph with k = {k} needs more than {} points",
            points.len()
        )));
    }
    let index = SpatialIndex::build(points);
    let mut flat = Vec::with_capacity(points.len() * k);
    for (i, p) in points.iter().enumerate() {
        flat.extend(index.knn(p, k, Some(i))?);
    }
    Ok(NeighborGraph::from_flat(k, flat))
}

/// For every point, the `k` members of its search area closest in
/// feature space. Ties go to the lower point index. The selection is a
/// hard choice and carries no gradient.
pub fn build_feature_graph<T: Scalar>(features: &Tensor<T>, areas: &SearchArea, k: usize) -> Result<NeighborGraph> {
    let n = features.rows();
    if areas.len() != n {
        return Err(Error::Dimension {
            op: "build_feature_graph",
            lhs: features.shape().to_vec(),
            rhs: vec![areas.len(), areas.width()],
        });
    }
    if k > areas.width() {
        return Err(Error::contract(format!(
            "k = {k} exceeds search area size {}",
            areas.width()
        )));
    }
    if let Some(pos) = features.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!(
            "non-finite feature in row {} during graph construction",
            pos / features.cols().max(1)
        )));
    }
    let mut flat = Vec::with_capacity(n * k);
    let mut scored: Vec<(T, usize)> = Vec::with_capacity(areas.width());
    for i in 0..n {
        let hi = features.row(i);
        scored.clear();
        for &j in areas.candidates(i) {
            let d: T = hi.iter().zip(features.row(j)).map(|(&a, &b)| (a - b) * (a - b)).sum();
            scored.push((d, j));
        }
        scored.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite distances")
                .then(a.1.cmp(&b.1))
        });
        flat.extend(scored[..k].iter().map(|&(_, j)| j));
    }
    Ok(NeighborGraph::from_flat(k, flat))
}
