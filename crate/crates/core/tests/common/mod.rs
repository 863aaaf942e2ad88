#![allow(dead_code)]

pub mod gradsuite;

use std::rc::Rc;

use gpdnet::geometry::{Point3, PointCloud};
use gpdnet::graph::NeighborGraph;
use gpdnet::network::circulant::CirculantStackLinear;
use gpdnet::network::layers::{graph_conv, GraphConvVars};
use gpdnet::network::{GpdNet, GpdNetConfig, GraphMode};
use gpdnet::rng;
use gpdnet::tensor::{Tape, Tensor};
use rand::Rng;

pub fn rng_for(seed: u64) -> rng::Rng {
    rng::seeded(seed, 0x7e57)
}

/// Uniform points in the unit cube; continuous coordinates make
/// distance ties vanishingly unlikely.
pub fn random_points(r: &mut rng::Rng, n: usize) -> Vec<Point3> {
    (0..n)
        .map(|_| [r.random::<f64>(), r.random::<f64>(), r.random::<f64>()])
        .collect()
}

pub fn random_vec(r: &mut rng::Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-scale..scale)).collect()
}

pub fn sq(a: &Point3, b: &Point3) -> f64 {
    let d: Vec<f64> = (0..3).map(|i| a[i] - b[i]).collect();
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Exhaustive k nearest, ranked by `(distance, index)`.
pub fn brute_knn(points: &[Point3], q: &Point3, k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, p)| (sq(p, q), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

pub fn brute_nearest(points: &[Point3], q: &Point3) -> (usize, f64) {
    let i = brute_knn(points, q, 1, None)[0];
    (i, sq(&points[i], q))
}

pub fn brute_one_sided(from: &[Point3], to: &[Point3]) -> f64 {
    from.iter().map(|p| brute_nearest(to, p).1).sum()
}

pub fn brute_chamfer(a: &[Point3], b: &[Point3]) -> f64 {
    (brute_one_sided(a, b) + brute_one_sided(b, a)) / (2.0 * a.len() as f64)
}

pub fn brute_rmsd(a: &[Point3], b: &[Point3]) -> f64 {
    (brute_one_sided(a, b) / a.len() as f64).sqrt()
}

/// Angle between unit normals via the dot product, ignoring sign.
pub fn angle_by_dot(a: &Point3, b: &Point3) -> f64 {
    let d = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).abs();
    d.clamp(-1.0, 1.0).acos().to_degrees()
}

/// `sum_t w_t phi_t psi_t^T` as a dense `f_out x f_in` matrix.
pub fn materialize_low_rank(row: &[f64], rank: usize, f_out: usize, f_in: usize) -> Vec<f64> {
    let (phi, rest) = row.split_at(rank * f_out);
    let (psi, omega) = rest.split_at(rank * f_in);
    let mut m = vec![0.0; f_out * f_in];
    for t in 0..rank {
        for a in 0..f_out {
            for b in 0..f_in {
                m[a * f_in + b] += omega[t] * phi[t * f_out + a] * psi[t * f_in + b];
            }
        }
    }
    m
}

pub fn permute_points(points: &[Point3], perm: &[usize]) -> Vec<Point3> {
    perm.iter().map(|&i| points[i]).collect()
}

pub fn random_permutation(r: &mut rng::Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(r);
    p
}

/// Max abs deviation between `forward(P X)` and `P forward(X)` in eval
/// mode.
pub fn equivariance_gap(net: &GpdNet<f32>, points: &[Point3], perm: &[usize], mode: GraphMode) -> f64 {
    let pc = PointCloud::new(points.to_vec()).unwrap();
    let base = net.denoise(&pc, mode).unwrap();
    let permuted = PointCloud::new(permute_points(points, perm)).unwrap();
    let out = net.denoise(&permuted, mode).unwrap();
    let mut gap = 0.0f64;
    for (row, &src) in perm.iter().enumerate() {
        for a in 0..3 {
            gap = gap.max((out.points()[row][a] - base.points()[src][a]).abs());
        }
    }
    gap
}

/// Trained-looking network: fresh init plus random batch-norm running
/// statistics and shifts, so eval mode exercises every term.
pub fn perturbed_network(config: GpdNetConfig, seed: u64) -> GpdNet<f32> {
    let mut net = GpdNet::<f32>::new(config, seed).unwrap();
    let mut r = rng_for(seed ^ 0xb0b);
    let names: Vec<String> = net.params().names().to_vec();
    for name in names {
        if name.ends_with("bias") || name.ends_with("shift") {
            for v in net.params_mut().get_mut(&name).unwrap().data_mut() {
                *v = r.random_range(-0.1..0.1);
            }
        }
    }
    let names: Vec<String> = net.buffers().names().to_vec();
    for name in names {
        let var = name.ends_with("running_var");
        for v in net.buffers_mut().get_mut(&name).unwrap().data_mut() {
            *v = if var { r.random_range(0.5..2.0) } else { r.random_range(-0.2..0.2) };
        }
    }
    net
}

/// Single-edge graph convolution with fixed edge coefficients
/// `(phi, psi, omega)`: the edge MLP weights are zero and its output bias
/// carries the coefficients.
pub fn single_edge_conv(h: [f64; 2], w: f64, phi: f64, psi: f64, omega: f64, delta: f64) -> f64 {
    let mut tape = Tape::<f64>::new();
    let t = |shape: &[usize], v: &[f64]| Tensor::new(shape.to_vec(), v.to_vec()).unwrap();
    let x = tape.constant(t(&[2, 1], &h));
    let layout = CirculantStackLinear::new(1, 3, 1).unwrap();
    let vars = GraphConvVars {
        weight: tape.constant(t(&[1, 1], &[w])),
        mlp1_weight: tape.constant(t(&[1, 1], &[0.0])),
        mlp1_bias: tape.constant(t(&[1], &[0.0])),
        mlp2_generators: tape.constant(Tensor::zeros(layout.generator_shape())),
        mlp2_bias: tape.constant(t(&[3], &[phi, psi, omega])),
        mlp2_index: layout.index_map(),
        mlp2_layout: layout,
        f_in: 1,
        f_out: 1,
        rank: 1,
    };
    let graph = NeighborGraph::from_lists(&[vec![1], vec![0]]).unwrap();
    let y = graph_conv(&mut tape, x, &graph, &vars, delta, 0.2).unwrap();
    tape.value(y).data()[0]
}

pub fn rc(v: Vec<usize>) -> Rc<[usize]> {
    v.into()
}
