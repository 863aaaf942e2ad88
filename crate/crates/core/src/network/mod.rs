//! The denoising network: single-point convolutions lifting 3D points to
//! features, residual blocks of graph-convolutional layers on dynamically
//! rebuilt graphs, and a final graph convolution estimating the noise,
//! which is subtracted from the input.

pub mod circulant;
pub mod layers;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

pub use circulant::{circulant_matvec, CirculantStackLinear};
pub use layers::{edge_attention, edge_mlp, graph_conv, single_point_conv, split_edge_coefficients, GraphConvVars};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::graph::{build_feature_graph, build_fixed_graph, build_search_areas, NeighborGraph, SearchArea};
use crate::kv::parse_value;
use crate::rng;
use crate::tensor::{BatchNormStats, ParameterStore, Scalar, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphMode {
    /// Feature-space kNN inside 3D search areas, rebuilt per block.
    Dynamic,
    /// 3D kNN on the noisy input, shared by every layer.
    Fixed,
}

impl fmt::Display for GraphMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphMode::Dynamic => "dynamic",
            GraphMode::Fixed => "fixed",
        })
    }
}

impl FromStr for GraphMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(GraphMode::Dynamic),
            "fixed" => Ok(GraphMode::Fixed),
            _ => Err(Error::config(format!("unknown graph mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GpdNetConfig {
    /// Output widths of the single-point convolutions; the last one is
    /// the trunk width.
    pub point_widths: Vec<usize>,
    pub blocks: usize,
    pub layers_per_block: usize,
    /// Rank of the per-edge aggregation matrix.
    pub rank: usize,
    /// Free generator rows per circulant block.
    pub circulant_rows: usize,
    /// Edge attention decay.
    pub delta: f64,
    /// Neighbors per point.
    pub k: usize,
    /// Candidates per point in the 3D search area.
    pub search_area: usize,
    pub slope: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for GpdNetConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl GpdNetConfig {
    /// Full-size architecture (99 features, rank 11, 3 circulant rows,
    /// decay 10, 16 neighbors).
    pub fn paper() -> Self {
        GpdNetConfig {
            point_widths: vec![33, 66, 99],
            blocks: 2,
            layers_per_block: 3,
            rank: 11,
            circulant_rows: 3,
            delta: 10.0,
            k: 16,
            search_area: 32,
            slope: 0.2,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
        }
    }

    /// Reduced architecture that trains in minutes on a CPU.
    pub fn desk() -> Self {
        GpdNetConfig {
            point_widths: vec![8, 16, 24],
            rank: 4,
            circulant_rows: 2,
            k: 8,
            search_area: 24,
            ..Self::paper()
        }
    }

    /// Smallest useful architecture, for gradient checks.
    pub fn tiny() -> Self {
        GpdNetConfig {
            point_widths: vec![4, 6, 8],
            rank: 2,
            circulant_rows: 2,
            k: 4,
            search_area: 8,
            ..Self::paper()
        }
    }

    /// Trunk feature width.
    pub fn features(&self) -> usize {
        self.point_widths.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.features();
        let fail = |msg: String| Err(Error::config(msg));
        if self.point_widths.is_empty() || self.point_widths.contains(&0) {
            return fail(format!("invalid point widths {:?}", self.point_widths));
        }
        if self.rank == 0 {
            return fail("rank must be at least 1".into());
        }
        if self.circulant_rows == 0 || self.circulant_rows > f {
            return fail(format!("circulant rows must lie in 1..={f}, got {}", self.circulant_rows));
        }
        if self.k == 0 || self.k > self.search_area {
            return fail(format!(
                "need 1 <= k <= search area, got k = {} and search area {}",
                self.k, self.search_area
            ));
        }
        if !(self.delta > 0.0) {
            return fail(format!("delta must be positive, got {}", self.delta));
        }
        if self.blocks == 0 || self.layers_per_block == 0 {
            return fail("need at least one residual block with one layer".into());
        }
        if !(self.bn_eps >= 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return fail("invalid batch-norm constants".into());
        }
        Ok(())
    }

    /// Learnable scalar count, derived from the architecture alone.
    pub fn parameter_count(&self) -> usize {
        let f = self.features();
        let mut total = 0;
        let mut prev = 3;
        for &w in &self.point_widths {
            total += w * prev + w + 2 * w;
            prev = w;
        }
        let gconv = |f_in: usize, f_out: usize| {
            let hidden = f_in;
            let c = self.rank * (f_out + f_in + 1);
            let blocks = c.div_ceil(hidden);
            f_out * f_in + hidden * f_in + hidden + blocks * self.circulant_rows * hidden + c
        };
        total += self.blocks * self.layers_per_block * (gconv(f, f) + 2 * f);
        total + gconv(f, 3)
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let widths: Vec<String> = self.point_widths.iter().map(usize::to_string).collect();
        vec![
            ("point_widths", widths.join(",")),
            ("blocks", self.blocks.to_string()),
            ("layers_per_block", self.layers_per_block.to_string()),
            ("rank", self.rank.to_string()),
            ("circulant_rows", self.circulant_rows.to_string()),
            ("delta", self.delta.to_string()),
            ("k", self.k.to_string()),
            ("search_area", self.search_area.to_string()),
            ("slope", self.slope.to_string()),
            ("bn_eps", self.bn_eps.to_string()),
            ("bn_momentum", self.bn_momentum.to_string()),
        ]
    }

    /// Applies one `key = value` setting. Returns `false` for keys that
    /// do not belong to the network.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "point_widths" => {
                self.point_widths = value
                    .split(',')
                    .map(|w| parse_value(key, w))
                    .collect::<Result<_>>()?;
            }
            "blocks" => self.blocks = parse_value(key, value)?,
            "layers_per_block" => self.layers_per_block = parse_value(key, value)?,
            "rank" => self.rank = parse_value(key, value)?,
            "circulant_rows" => self.circulant_rows = parse_value(key, value)?,
            "delta" => self.delta = parse_value(key, value)?,
            "k" => self.k = parse_value(key, value)?,
            "search_area" => self.search_area = parse_value(key, value)?,
            "slope" => self.slope = parse_value(key, value)?,
            "bn_eps" => self.bn_eps = parse_value(key, value)?,
            "bn_momentum" => self.bn_momentum = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Clone, Debug)]
struct BnIds {
    scale: usize,
    shift: usize,
    running_mean: usize,
    running_var: usize,
}

#[derive(Clone, Debug)]
struct DenseIds {
    weight: usize,
    bias: usize,
    bn: BnIds,
}

#[derive(Clone, Debug)]
struct GconvIds {
    weight: usize,
    mlp1_weight: usize,
    mlp1_bias: usize,
    mlp2_generators: usize,
    mlp2_bias: usize,
    layout: CirculantStackLinear,
    index: Vec<usize>,
    f_in: usize,
    f_out: usize,
    bn: Option<BnIds>,
}

#[derive(Clone, Debug)]
struct Layout {
    point_convs: Vec<DenseIds>,
    blocks: Vec<Vec<GconvIds>>,
    head: GconvIds,
}

/// Running-statistics update produced by a train-mode forward pass.
#[derive(Clone, Debug)]
pub struct BnUpdate<T> {
    running_mean: usize,
    running_var: usize,
    stats: BatchNormStats<T>,
}

/// Graph inputs of a forward pass, built from the noisy 3D points.
#[derive(Clone, Debug)]
pub struct GraphContext {
    pub mode: GraphMode,
    pub areas: Option<SearchArea>,
    pub fixed: Option<NeighborGraph>,
}

impl GraphContext {
    /// Context for a stack of independent clouds; graphs never connect
    /// points of different clouds.
    pub fn build(clouds: &[&[Point3]], config: &GpdNetConfig, mode: GraphMode) -> Result<Self> {
        for c in clouds {
            if c.len() <= config.k {
                return Err(Error::contract(format!(
                    "cloud of {} points is too small for k = {}",
                    c.len(),
                    config.k
                )));
            }
        }
        match mode {
            GraphMode::Dynamic => {
                let parts = clouds
                    .iter()
                    .map(|c| build_search_areas(c, config.search_area, config.k))
                    .collect::<Result<Vec<_>>>()?;
                Ok(GraphContext {
                    mode,
                    areas: Some(SearchArea::disjoint_union(&parts)?),
                    fixed: None,
                })
            }
            GraphMode::Fixed => {
                let parts = clouds
                    .iter()
                    .map(|c| build_fixed_graph(c, config.k))
                    .collect::<Result<Vec<_>>>()?;
                Ok(GraphContext {
                    mode,
                    areas: None,
                    fixed: Some(NeighborGraph::disjoint_union(&parts)?),
                })
            }
        }
    }
}

/// Tape handles and side products of one forward pass.
#[derive(Debug)]
pub struct ForwardOutput<T> {
    /// Estimated noise, `N x 3`.
    pub noise: Var,
    /// `input - noise`.
    pub denoised: Var,
    /// Graph used by each residual block; the head reuses the last one.
    pub graphs: Vec<NeighborGraph>,
    pub bn_updates: Vec<BnUpdate<T>>,
}

/// Network parameters plus batch-norm running statistics.
#[derive(Clone, Debug)]
pub struct GpdNet<T> {
    config: GpdNetConfig,
    params: ParameterStore<T>,
    buffers: ParameterStore<T>,
    layout: Layout,
}

fn register_bn<T: Scalar>(
    params: &mut ParameterStore<T>,
    buffers: &mut ParameterStore<T>,
    prefix: &str,
    width: usize,
) -> Result<BnIds> {
    Ok(BnIds {
        scale: params.insert(format!("{prefix}.bn.scale"), Tensor::full([width], T::ONE))?,
        shift: params.insert(format!("{prefix}.bn.shift"), Tensor::zeros([width]))?,
        running_mean: buffers.insert(format!("{prefix}.bn.running_mean"), Tensor::zeros([width]))?,
        running_var: buffers.insert(format!("{prefix}.bn.running_var"), Tensor::full([width], T::ONE))?,
    })
}

fn register_gconv<T: Scalar>(
    config: &GpdNetConfig,
    params: &mut ParameterStore<T>,
    buffers: &mut ParameterStore<T>,
    prefix: &str,
    f_in: usize,
    f_out: usize,
    with_bn: bool,
) -> Result<GconvIds> {
    let hidden = f_in;
    let width = config.rank * (f_out + f_in + 1);
    let layout = CirculantStackLinear::new(hidden, width, config.circulant_rows)?;
    Ok(GconvIds {
        weight: params.insert(format!("{prefix}.weight"), Tensor::zeros([f_out, f_in]))?,
        mlp1_weight: params.insert(format!("{prefix}.mlp1.weight"), Tensor::zeros([hidden, f_in]))?,
        mlp1_bias: params.insert(format!("{prefix}.mlp1.bias"), Tensor::zeros([hidden]))?,
        mlp2_generators: params.insert(format!("{prefix}.mlp2.generators"), Tensor::zeros(layout.generator_shape()))?,
        mlp2_bias: params.insert(format!("{prefix}.mlp2.bias"), Tensor::zeros([width]))?,
        index: layout.index_map().to_vec(),
        layout,
        f_in,
        f_out,
        bn: if with_bn {
            Some(register_bn(params, buffers, prefix, f_out)?)
        } else {
            None
        },
    })
}

const HEAD_GENERATOR_SCALE: f64 = 0.1;

impl<T: Scalar> GpdNet<T> {
    /// Network with every learnable tensor (batch-norm scales included)
    /// set to zero. Its output equals its input.
    pub fn zeroed(config: GpdNetConfig) -> Result<Self> {
        let mut net = Self::allocate(config)?;
        net.params.zero_values();
        Ok(net)
    }

    /// Freshly initialized network: weights and circulant generators
    /// uniform in `+-sqrt(6 / (fan_in + fan_out))`, biases zero,
    /// batch-norm scale one and shift zero. The projection head is the
    /// exception: its direct weight starts at zero and its edge generators
    /// at a tenth of the usual range, so a fresh network is close to the
    /// identity map.
    pub fn new(config: GpdNetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::allocate(config)?;
        let mut rng = rng::seeded(seed, rng::stream::INIT);
        let mut glorot = |t: &mut Tensor<T>, fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in t.data_mut() {
                *v = T::from_f64(rng.random_range(-bound..bound));
            }
        };
        let layout = net.layout.clone();
        for d in &layout.point_convs {
            let [fo, fi] = [net.params.value(d.weight).shape()[0], net.params.value(d.weight).shape()[1]];
            glorot(net.params.value_mut(d.weight), fi, fo);
        }
        for g in layout.blocks.iter().flatten().chain(std::iter::once(&layout.head)) {
            glorot(net.params.value_mut(g.weight), g.f_in, g.f_out);
            glorot(net.params.value_mut(g.mlp1_weight), g.f_in, g.f_in);
            glorot(net.params.value_mut(g.mlp2_generators), g.layout.d_in, g.layout.d_out);
        }
        let head = &layout.head;
        net.params.value_mut(head.weight).data_mut().fill(T::ZERO);
        for v in net.params.value_mut(head.mlp2_generators).data_mut() {
            *v = *v * T::from_f64(HEAD_GENERATOR_SCALE);
        }
        Ok(net)
    }

    fn allocate(config: GpdNetConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParameterStore::new();
        let mut buffers = ParameterStore::new();
        let mut point_convs = Vec::new();
        let mut prev = 3;
        for (l, &w) in config.point_widths.iter().enumerate() {
            let prefix = format!("point{l}");
            point_convs.push(DenseIds {
                weight: params.insert(format!("{prefix}.weight"), Tensor::zeros([w, prev]))?,
                bias: params.insert(format!("{prefix}.bias"), Tensor::zeros([w]))?,
                bn: register_bn(&mut params, &mut buffers, &prefix, w)?,
            });
            prev = w;
        }
        let f = config.features();
        let mut blocks = Vec::new();
        for b in 0..config.blocks {
            let mut layers = Vec::new();
            for l in 0..config.layers_per_block {
                let prefix = format!("block{b}.gconv{l}");
                layers.push(register_gconv(&config, &mut params, &mut buffers, &prefix, f, f, true)?);
            }
            blocks.push(layers);
        }
        let head = register_gconv(&config, &mut params, &mut buffers, "head", f, 3, false)?;
        Ok(GpdNet {
            config,
            params,
            buffers,
            layout: Layout {
                point_convs,
                blocks,
                head,
            },
        })
    }

    /// Rebuilds a network from stored tensors; names and shapes must
    /// match the architecture exactly.
    pub fn from_parts(config: GpdNetConfig, params: ParameterStore<T>, buffers: ParameterStore<T>) -> Result<Self> {
        let mut net = Self::allocate(config)?;
        for (target, source, what) in [(&mut net.params, &params, "parameter"), (&mut net.buffers, &buffers, "buffer")] {
            if target.len() != source.len() {
                return Err(Error::contract(format!(
                    "expected {} {what} tensors, found {}",
                    target.len(),
                    source.len()
                )));
            }
            for id in 0..target.len() {
                let name = target.name(id).to_string();
                let src = source
                    .get(&name)
                    .ok_or_else(|| Error::contract(format!("missing {what} {name}")))?;
                if src.shape() != target.value(id).shape() {
                    return Err(Error::Dimension {
                        op: "load parameters",
                        lhs: target.value(id).shape().to_vec(),
                        rhs: src.shape().to_vec(),
                    });
                }
                *target.value_mut(id) = src.clone();
            }
        }
        Ok(net)
    }

    pub fn config(&self) -> &GpdNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.params
    }

    pub fn buffers(&self) -> &ParameterStore<T> {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.buffers
    }

    pub fn cast<U: Scalar>(&self) -> GpdNet<U> {
        GpdNet {
            config: self.config.clone(),
            params: self.params.cast(),
            buffers: self.buffers.cast(),
            layout: self.layout.clone(),
        }
    }

    /// Tape handles of one graph-conv layer, given the registered params.
    fn gconv_vars(&self, vars: &[Var], g: &GconvIds) -> GraphConvVars {
        GraphConvVars {
            weight: vars[g.weight],
            mlp1_weight: vars[g.mlp1_weight],
            mlp1_bias: vars[g.mlp1_bias],
            mlp2_generators: vars[g.mlp2_generators],
            mlp2_bias: vars[g.mlp2_bias],
            mlp2_layout: g.layout,
            mlp2_index: g.index.as_slice().into(),
            f_in: g.f_in,
            f_out: g.f_out,
            rank: self.config.rank,
        }
    }

    fn norm_act(
        &self,
        tape: &mut Tape<T>,
        x: Var,
        vars: &[Var],
        bn: &BnIds,
        mode: Mode,
        updates: &mut Vec<BnUpdate<T>>,
    ) -> Result<Var> {
        let eps = T::from_f64(self.config.bn_eps);
        let running = match mode {
            Mode::Train => None,
            Mode::Eval => Some((
                self.buffers.value(bn.running_mean).data(),
                self.buffers.value(bn.running_var).data(),
            )),
        };
        let (y, stats) = tape.batch_norm(x, vars[bn.scale], vars[bn.shift], eps, running)?;
        if let Some(stats) = stats {
            updates.push(BnUpdate {
                running_mean: bn.running_mean,
                running_var: bn.running_var,
                stats,
            });
        }
        Ok(tape.leaky_relu(y, T::from_f64(self.config.slope)))
    }

    fn next_graph(&self, tape: &Tape<T>, h: Var, ctx: &GraphContext) -> Result<NeighborGraph> {
        match (ctx.mode, &ctx.areas, &ctx.fixed) {
            (GraphMode::Dynamic, Some(areas), _) => build_feature_graph(tape.value(h), areas, self.config.k),
            (GraphMode::Fixed, _, Some(g)) => Ok(g.clone()),
            _ => Err(Error::contract("graph context does not match its graph mode")),
        }
    }

    /// Records the full network on `tape`.
    ///
    /// `vars` are the parameter leaves from [`ParameterStore::register`];
    /// `input` is `N x 3`. With `frozen` set, those graphs are used for the
    /// blocks instead of building new ones.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        input: Var,
        ctx: &GraphContext,
        mode: Mode,
        frozen: Option<&[NeighborGraph]>,
    ) -> Result<ForwardOutput<T>> {
        let shape = tape.value(input).shape().to_vec();
        if shape.len() != 2 || shape[1] != 3 {
            return Err(Error::Dimension {
                op: "gpdnet forward",
                lhs: shape,
                rhs: vec![0, 3],
            });
        }
        if shape[0] <= self.config.k {
            return Err(Error::contract(format!(
                "{} points cannot support k = {}",
                shape[0], self.config.k
            )));
        }
        if vars.len() != self.params.len() {
            return Err(Error::contract("parameter handles do not match the network"));
        }
        if let Some(f) = frozen {
            if f.len() != self.config.blocks {
                return Err(Error::contract(format!(
                    "{} frozen graphs for {} blocks",
                    f.len(),
                    self.config.blocks
                )));
            }
        }
        let slope = T::from_f64(self.config.slope);
        let mut updates = Vec::new();
        let mut h = input;
        for d in &self.layout.point_convs {
            h = single_point_conv(tape, h, vars[d.weight], vars[d.bias])?;
            h = self.norm_act(tape, h, vars, &d.bn, mode, &mut updates)?;
        }
        let mut graphs = Vec::with_capacity(self.config.blocks);
        for (b, block) in self.layout.blocks.iter().enumerate() {
            let graph = match frozen {
                Some(f) => f[b].clone(),
                None => self.next_graph(tape, h, ctx)?,
            };
            let mut x = h;
            for g in block {
                let layer = self.gconv_vars(vars, g);
                x = graph_conv(tape, x, &graph, &layer, self.config.delta, slope)?;
                let bn = g.bn.as_ref().expect("trunk layers are normalized");
                x = self.norm_act(tape, x, vars, bn, mode, &mut updates)?;
            }
            h = tape.add(h, x)?;
            graphs.push(graph);
        }
        let head = self.gconv_vars(vars, &self.layout.head);
        let last = graphs.last().expect("at least one block");
        let noise = graph_conv(tape, h, last, &head, self.config.delta, slope)?;
        let denoised = tape.sub(input, noise)?;
        Ok(ForwardOutput {
            noise,
            denoised,
            graphs,
            bn_updates: updates,
        })
    }

    /// Folds batch statistics into the running averages:
    /// `running = momentum * running + (1 - momentum) * batch`, with the
    /// unbiased batch variance.
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate<T>]) {
        let mom = T::from_f64(self.config.bn_momentum);
        let rest = T::ONE - mom;
        for u in updates {
            let n = u.stats.count;
            let unbias = if n > 1 {
                T::from_usize(n) / T::from_usize(n - 1)
            } else {
                T::ONE
            };
            let mean = self.buffers.value_mut(u.running_mean).data_mut();
            for (r, &b) in mean.iter_mut().zip(&u.stats.mean) {
                *r = mom * *r + rest * b;
            }
            let var = self.buffers.value_mut(u.running_var).data_mut();
            for (r, &b) in var.iter_mut().zip(&u.stats.var) {
                *r = mom * *r + rest * b * unbias;
            }
        }
    }

    /// Eval-mode inference on one whole cloud. Returns the estimated
    /// noise per point and the graphs used by each block.
    pub fn predict_noise(&self, points: &[Point3], mode: GraphMode) -> Result<(Vec<[T; 3]>, Vec<NeighborGraph>)> {
        let ctx = GraphContext::build(&[points], &self.config, mode)?;
        let mut tape = Tape::new();
        let vars: Vec<Var> = (0..self.params.len())
            .map(|id| tape.constant(self.params.value(id).clone()))
            .collect();
        let data: Vec<T> = points.iter().flat_map(|p| p.map(T::from_f64)).collect();
        let input = tape.constant(Tensor::new([points.len(), 3], data)?);
        let out = self.forward(&mut tape, &vars, input, &ctx, Mode::Eval, None)?;
        let noise = tape.value(out.noise);
        if !noise.all_finite() {
            return Err(Error::numeric("network produced a non-finite noise estimate"));
        }
        let rows = noise.data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok((rows, out.graphs))
    }

    /// Denoised copy of `noisy` (eval mode, whole cloud). Normals are
    /// dropped; the clean reference, if any, is kept.
    pub fn denoise(&self, noisy: &PointCloud, mode: GraphMode) -> Result<PointCloud> {
        let (noise, _) = self.predict_noise(noisy.points(), mode)?;
        let points = noisy
            .points()
            .iter()
            .zip(&noise)
            .map(|(p, n)| std::array::from_fn(|a| p[a] - n[a].to_f64()))
            .collect();
        let mut out = PointCloud::new(points)?;
        if let Some(c) = noisy.clean_reference() {
            out = out.with_clean_reference(c.to_vec())?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_primitive, Primitive};

    #[test]
    fn tiny_parameter_count_matches_hand_count() {
        // point convs: (3*4+4+8) + (4*6+6+12) + (6*8+8+16) = 138
        // trunk layer: W 64, mlp1 72, 5 circulant blocks * 2 rows * 8 = 80,
        //   bias 34, batch norm 16 => 266, six of them => 1596
        // head: W 24, mlp1 72, 3 blocks * 2 * 8 = 48, bias 24 => 168
        let cfg = GpdNetConfig::tiny();
        assert_eq!(cfg.parameter_count(), 1902);
        let net = GpdNet::<f64>::new(cfg, 1).unwrap();
        assert_eq!(net.params().numel(), 1902);
    }

    #[test]
    fn parameter_count_is_a_function_of_config() {
        for cfg in [GpdNetConfig::paper(), GpdNetConfig::desk()] {
            let net = GpdNet::<f32>::new(cfg.clone(), 3).unwrap();
            assert_eq!(net.params().numel(), cfg.parameter_count());
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = GpdNetConfig::tiny();
        cfg.k = 9;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = GpdNetConfig::tiny();
        cfg.circulant_rows = 9;
        assert!(cfg.validate().is_err());
        let mut cfg = GpdNetConfig::tiny();
        cfg.delta = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_entries_round_trip() {
        let cfg = GpdNetConfig::desk();
        let mut back = GpdNetConfig::paper();
        for (k, v) in cfg.entries() {
            assert!(back.apply(k, &v).unwrap());
        }
        assert_eq!(back, cfg);
        assert!(!back.apply("sigma", "0.1").unwrap());
    }

    #[test]
    fn zeroed_network_is_identity() {
        let cloud = sample_primitive(Primitive::torus(), 64, 2).unwrap();
        let net = GpdNet::<f32>::zeroed(GpdNetConfig::tiny()).unwrap();
        for mode in [GraphMode::Dynamic, GraphMode::Fixed] {
            let (noise, graphs) = net.predict_noise(cloud.points(), mode).unwrap();
            assert!(noise.iter().flatten().all(|&v| v == 0.0));
            assert_eq!(graphs.len(), 2);
        }
    }

    #[test]
    fn fresh_head_starts_small() {
        let net = GpdNet::<f64>::new(GpdNetConfig::desk(), 5).unwrap();
        assert!(net.params().get("head.weight").unwrap().data().iter().all(|&v| v == 0.0));
        let cfg = GpdNetConfig::desk();
        let layout = CirculantStackLinear::new(cfg.features(), cfg.rank * (3 + cfg.features() + 1), cfg.circulant_rows).unwrap();
        let bound = 0.1 * (6.0 / (layout.d_in + layout.d_out) as f64).sqrt();
        let g = net.params().get("head.mlp2.generators").unwrap().data();
        assert!(g.iter().all(|v| v.abs() <= bound) && g.iter().any(|&v| v != 0.0));
        let trunk = net.params().get("block0.gconv0.weight").unwrap().data();
        assert!(trunk.iter().any(|v| v.abs() > 0.1 * (6.0 / (2.0 * cfg.features() as f64)).sqrt()));
    }

    #[test]
    fn output_shape_and_small_input_error() {
        let cloud = sample_primitive(Primitive::sphere(), 40, 4).unwrap();
        let net = GpdNet::<f32>::new(GpdNetConfig::tiny(), 9).unwrap();
        let out = net.denoise(&cloud, GraphMode::Dynamic).unwrap();
        assert_eq!(out.len(), 40);
        assert!(net.predict_noise(&cloud.points()[..4], GraphMode::Dynamic).is_err());
    }
}
