//! Receptive fields of residual blocks on their neighbor graphs.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::{squared_distance, Point3, PointCloud};
use crate::graph::NeighborGraph;
use crate::network::{GpdNet, GraphMode};

/// `fields[l][i]`: sorted input points reaching point `i` after `l + 1`
/// graph convolutions on `graph`.
pub fn receptive_fields(graph: &NeighborGraph, layers: usize) -> Vec<Vec<Vec<usize>>> {
    let n = graph.len();
    let closed: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut f = vec![i];
            f.extend_from_slice(graph.neighbors(i));
            f.sort_unstable();
            f.dedup();
            f
        })
        .collect();
    let mut out = Vec::with_capacity(layers);
    let mut mark = vec![usize::MAX; n];
    for l in 0..layers {
        if l == 0 {
            out.push(closed.clone());
            continue;
        }
        let prev: &Vec<Vec<usize>> = &out[l - 1];
        let next = (0..n)
            .map(|i| {
                let mut f = Vec::new();
                for &j in &prev[i] {
                    for &m in &closed[j] {
                        if mark[m] != i {
                            mark[m] = i;
                            f.push(m);
                        }
                    }
                }
                f.sort_unstable();
                f
            })
            .collect();
        mark.iter_mut().for_each(|m| *m = usize::MAX);
        out.push(next);
    }
    out
}

/// Points within `depth` hops of `i`, following edges from each point
/// to its neighbors.
pub fn bfs_receptive_field(graph: &NeighborGraph, i: usize, depth: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; graph.len()];
    let mut queue = VecDeque::from([i]);
    dist[i] = 0;
    while let Some(u) = queue.pop_front() {
        if dist[u] == depth {
            continue;
        }
        for &v in graph.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    (0..graph.len()).filter(|&v| dist[v] != usize::MAX).collect()
}

/// Nearest-rank percentile: the `ceil(p * n)`-th smallest value.
pub fn percentile_nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p * v.len() as f64).ceil() as usize).max(1);
    Some(v[rank - 1])
}

#[derive(Clone, Debug)]
pub struct ReceptiveFieldStat {
    pub block: usize,
    pub graph_mode: GraphMode,
    /// `fields[l][i]` after layer `l` of the block.
    pub fields: Vec<Vec<Vec<usize>>>,
    /// 90th-percentile clean-space distance from each point to the
    /// members of its field at the block output.
    pub radii: Vec<f64>,
}

impl ReceptiveFieldStat {
    pub fn mean_sizes(&self) -> Vec<f64> {
        self.fields
            .iter()
            .map(|layer| layer.iter().map(Vec::len).sum::<usize>() as f64 / layer.len().max(1) as f64)
            .collect()
    }
}

/// Runs the network on `noisy`, takes the graph of residual `block` and
/// measures the block-output receptive field of every point in the
/// index-aligned `clean` cloud.
pub fn receptive_field_radius(
    net: &GpdNet<f32>,
    noisy: &PointCloud,
    clean: &[Point3],
    block: usize,
    graph_mode: GraphMode,
) -> Result<ReceptiveFieldStat> {
    let blocks = net.config().blocks;
    if block >= blocks {
        return Err(Error::contract(format!("block {block} out of range for {blocks} blocks")));
    }
    if clean.len() != noisy.len() {
        return Err(Error::contract("clean cloud must be aligned with the noisy cloud"));
    }
    let (_, graphs) = net.predict_noise(noisy.points(), graph_mode)?;
    let fields = receptive_fields(&graphs[block], net.config().layers_per_block);
    let last = fields.last().expect("at least one layer");
    let radii = last
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let d: Vec<f64> = f.iter().map(|&j| squared_distance(&clean[i], &clean[j]).sqrt()).collect();
            percentile_nearest_rank(&d, 0.9).expect("field contains the point itself")
        })
        .collect();
    Ok(ReceptiveFieldStat {
        block,
        graph_mode,
        fields,
        radii,
    })
}
