//! Differentiable building blocks of the network, recorded on a tape.

use std::rc::Rc;

use super::circulant::CirculantStackLinear;
use crate::error::{Error, Result};
use crate::graph::NeighborGraph;
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Size-1 convolution over points: `x W^T + b`.
pub fn single_point_conv<T: Scalar>(tape: &mut Tape<T>, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let y = tape.matmul_nt(x, weight)?;
    tape.add_bias(y, bias)
}

/// Tape handles of one graph-convolutional layer.
#[derive(Clone, Debug)]
pub struct GraphConvVars {
    /// Self-loop matrix, `f_out x f_in`.
    pub weight: Var,
    /// Edge MLP hidden layer, `hidden x f_in`.
    pub mlp1_weight: Var,
    pub mlp1_bias: Var,
    /// Circulant generators of the edge MLP output layer.
    pub mlp2_generators: Var,
    pub mlp2_bias: Var,
    pub mlp2_layout: CirculantStackLinear,
    pub mlp2_index: Rc<[usize]>,
    pub f_in: usize,
    pub f_out: usize,
    pub rank: usize,
}

/// Per-edge aggregation coefficients from feature differences: dense
/// layer, leaky ReLU, circulant-stack layer. Output is
/// `E x rank(f_out + f_in + 1)`, split as in [`split_edge_coefficients`].
pub fn edge_mlp<T: Scalar>(tape: &mut Tape<T>, diff: Var, layer: &GraphConvVars, slope: T) -> Result<Var> {
    let hidden = single_point_conv(tape, diff, layer.mlp1_weight, layer.mlp1_bias)?;
    let hidden = tape.leaky_relu(hidden, slope);
    let l = &layer.mlp2_layout;
    let w2 = tape.index_select(layer.mlp2_generators, layer.mlp2_index.clone(), vec![l.d_out, l.d_in])?;
    single_point_conv(tape, hidden, w2, layer.mlp2_bias)
}

/// Edge coefficients regrouped per rank term.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeCoefficients<T> {
    /// `[edge][t]` output-side vectors, length `f_out`.
    pub phi: Vec<Vec<Vec<T>>>,
    /// `[edge][t]` input-side vectors, length `f_in`.
    pub psi: Vec<Vec<Vec<T>>>,
    /// `[edge][t]` scalar weights.
    pub omega: Vec<Vec<T>>,
}

pub fn split_edge_coefficients<T: Scalar>(
    coeffs: &Tensor<T>,
    rank: usize,
    f_out: usize,
    f_in: usize,
) -> Result<EdgeCoefficients<T>> {
    let width = rank * (f_out + f_in + 1);
    if coeffs.cols() != width {
        return Err(Error::Dimension {
            op: "split_edge_coefficients",
            lhs: coeffs.shape().to_vec(),
            rhs: vec![coeffs.rows(), width],
        });
    }
    let mut out = EdgeCoefficients {
        phi: Vec::new(),
        psi: Vec::new(),
        omega: Vec::new(),
    };
    for e in 0..coeffs.rows() {
        let row = coeffs.row(e);
        let (phi, rest) = row.split_at(rank * f_out);
        let (psi, omega) = rest.split_at(rank * f_in);
        out.phi.push(phi.chunks(f_out.max(1)).map(<[T]>::to_vec).collect());
        out.psi.push(psi.chunks(f_in.max(1)).map(<[T]>::to_vec).collect());
        out.omega.push(omega.to_vec());
    }
    Ok(out)
}

/// `exp(-||diff_e||^2 / delta)` for every edge.
pub fn edge_attention<T: Scalar>(tape: &mut Tape<T>, diff: Var, delta: f64) -> Result<Var> {
    if !(delta > 0.0) {
        return Err(Error::config(format!("attention decay must be positive, got {delta}")));
    }
    let sq = tape.row_squared_norm(diff)?;
    let scaled = tape.scale(sq, T::from_f64(-1.0 / delta));
    Ok(tape.exp(scaled))
}

/// One graph-convolutional layer:
/// `h_i' = W h_i + mean_{j in N(i)} gamma_ji * sum_t w_t phi_t (psi_t . h_j)`
/// with `(phi, psi, w)` produced by the edge MLP from `h_i - h_j`.
pub fn graph_conv<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    graph: &NeighborGraph,
    layer: &GraphConvVars,
    delta: f64,
    slope: T,
) -> Result<Var> {
    let n = tape.value(h).rows();
    if graph.len() != n {
        return Err(Error::Dimension {
            op: "graph_conv",
            lhs: tape.value(h).shape().to_vec(),
            rhs: vec![graph.len(), graph.degree()],
        });
    }
    let self_term = tape.matmul_nt(h, layer.weight)?;
    if graph.degree() == 0 {
        return Ok(self_term);
    }
    let h_src = tape.gather_rows(h, graph.sources())?;
    let h_dst = tape.gather_rows(h, graph.targets())?;
    let diff = tape.sub(h_dst, h_src)?;
    let coeffs = edge_mlp(tape, diff, layer, slope)?;
    let gamma = edge_attention(tape, diff, delta)?;
    let messages = tape.low_rank_message(coeffs, h_src, gamma, layer.rank, layer.f_out, layer.f_in)?;
    let aggregated = tape.segment_mean(messages, graph.targets(), n)?;
    tape.add(self_term, aggregated)
}
