//! Supervised training at a fixed noise level: dataset and batching,
//! the Adam optimization loop, loss traces and checkpoints.

mod checkpoint;
mod loss;

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use loss::{loss_mse, loss_mse_sp, nearest_clean};

use crate::error::{Error, Result};
use crate::geometry::{add_gaussian_noise, extract_patch_with_index, Point3, PointCloud, SpatialIndex};
use crate::kv::parse_value;
use crate::network::{GpdNet, GpdNetConfig, GraphContext, GraphMode, Mode};
use crate::rng::{self, Rng};
use crate::tensor::{adam_step, AdamConfig, AdamState, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    /// MSE plus surface proximity to the nearest clean point.
    MseSp,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::MseSp => "mse_sp",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "mse_sp" => Ok(LossKind::MseSp),
            _ => Err(Error::config(format!("unknown loss {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    /// Noise std used to build the training set.
    pub sigma: f64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub iterations: u64,
    pub learning_rate: f64,
    pub loss: LossKind,
    /// Weight of the surface-proximity term.
    pub lambda: f64,
    pub seed: u64,
    /// Iterations between checkpoints; 0 writes only the final one.
    pub checkpoint_interval: u64,
    pub graph_mode: GraphMode,
    /// Draw new noise for every patch instead of reusing the dataset's.
    pub fresh_noise: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl TrainingConfig {
    pub fn paper() -> Self {
        TrainingConfig {
            sigma: 0.02,
            batch_size: 16,
            patch_size: 1024,
            iterations: 700_000,
            learning_rate: 1e-4,
            loss: LossKind::Mse,
            lambda: 1.0,
            seed: 0,
            checkpoint_interval: 10_000,
            graph_mode: GraphMode::Dynamic,
            fresh_noise: false,
        }
    }

    pub fn desk() -> Self {
        TrainingConfig {
            batch_size: 4,
            patch_size: 256,
            iterations: 3000,
            learning_rate: 3e-3,
            checkpoint_interval: 0,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::config(format!("sigma must be positive, got {}", self.sigma)));
        }
        self.validate_noise_free()
    }

    /// Every check of [`validate`](Self::validate) except that `sigma`
    /// may also be zero, as for noise-free data generation.
    pub fn validate_noise_free(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(Error::config(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.batch_size == 0 || self.patch_size == 0 {
            return Err(Error::config("batch size and patch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("sigma", self.sigma.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("iterations", self.iterations.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("loss", self.loss.to_string()),
            ("lambda", self.lambda.to_string()),
            ("seed", self.seed.to_string()),
            ("checkpoint_interval", self.checkpoint_interval.to_string()),
            ("graph_mode", self.graph_mode.to_string()),
            ("fresh_noise", self.fresh_noise.to_string()),
        ]
    }

    /// Applies one `key = value` setting. Returns `false` for keys that
    /// do not belong to training.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "sigma" => self.sigma = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "patch_size" => self.patch_size = parse_value(key, value)?,
            "iterations" => self.iterations = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "loss" => self.loss = value.trim().parse()?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "checkpoint_interval" => self.checkpoint_interval = parse_value(key, value)?,
            "graph_mode" => self.graph_mode = value.trim().parse()?,
            "fresh_noise" => self.fresh_noise = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Noisy clouds with aligned clean references, plus a spatial index per
/// cloud for patch extraction.
#[derive(Clone, Debug)]
pub struct Dataset {
    clouds: Vec<PointCloud>,
    indices: Vec<SpatialIndex>,
}

impl Dataset {
    pub fn new(clouds: Vec<PointCloud>) -> Result<Self> {
        if clouds.is_empty() {
            return Err(Error::contract("dataset is empty"));
        }
        if let Some(i) = clouds.iter().position(|c| c.clean_reference().is_none()) {
            return Err(Error::contract(format!("cloud {i} has no clean reference")));
        }
        let indices = clouds.iter().map(|c| SpatialIndex::build(c.points())).collect();
        Ok(Dataset { clouds, indices })
    }

    /// One noisy realization of each clean cloud; cloud `i` uses noise
    /// seed `seed + i`.
    pub fn from_clean(clean: &[PointCloud], sigma: f64, seed: u64) -> Result<Self> {
        let noisy = clean
            .iter()
            .enumerate()
            .map(|(i, c)| add_gaussian_noise(c, sigma, seed.wrapping_add(i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(noisy)
    }

    pub fn clouds(&self) -> &[PointCloud] {
        &self.clouds
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }
}

/// `batch_size` patches, each around a uniformly chosen point of a
/// uniformly chosen cloud.
pub fn make_batch(dataset: &Dataset, config: &TrainingConfig, rng: &mut Rng) -> Result<Vec<PointCloud>> {
    if let Some(c) = dataset.clouds.iter().find(|c| c.len() < config.patch_size) {
        return Err(Error::contract(format!(
            "cloud of {} points is smaller than the patch size {}",
            c.len(),
            config.patch_size
        )));
    }
    let mut out = Vec::with_capacity(config.batch_size);
    for _ in 0..config.batch_size {
        let c = rng.random_range(0..dataset.len());
        let cloud = &dataset.clouds[c];
        let center = rng.random_range(0..cloud.len());
        let mut patch = extract_patch_with_index(cloud, &dataset.indices[c], center, config.patch_size)?;
        if config.fresh_noise {
            let clean = patch.clean_reference().expect("dataset clouds carry a reference").to_vec();
            let noisy: Vec<Point3> = clean
                .iter()
                .map(|p| {
                    p.map(|v| {
                        let z: f64 = StandardNormal.sample(rng);
                        v + config.sigma * z
                    })
                })
                .collect();
            patch = PointCloud::new(noisy)?.with_clean_reference(clean)?;
        }
        out.push(patch);
    }
    Ok(out)
}

/// One row of the loss trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: u64,
    pub loss: f64,
    pub seconds: f64,
}

pub fn format_trace(rows: &[TraceRow]) -> String {
    let mut out = String::from("iteration,loss,seconds\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.3}", r.iteration, r.loss, r.seconds);
    }
    out
}

/// Mean of the last `window` losses minus mean of the first `window`.
pub fn smoothed(rows: &[TraceRow], window: usize) -> Option<(f64, f64)> {
    if rows.len() < window || window == 0 {
        return None;
    }
    let mean = |r: &[TraceRow]| r.iter().map(|x| x.loss).sum::<f64>() / r.len() as f64;
    Some((mean(&rows[..window]), mean(&rows[rows.len() - window..])))
}

/// Network, optimizer and sampling state of a training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub(crate) net: GpdNet<f32>,
    pub(crate) adam: AdamState<f32>,
    pub(crate) config: TrainingConfig,
    pub(crate) iteration: u64,
    pub(crate) rng: Rng,
}

impl Trainer {
    pub fn new(net_config: GpdNetConfig, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let net = GpdNet::new(net_config, config.seed)?;
        Ok(Self::with_network(net, config))
    }

    /// Starts training from given network weights.
    pub fn with_network(net: GpdNet<f32>, config: TrainingConfig) -> Self {
        let adam = AdamState::new(
            net.params(),
            AdamConfig {
                lr: config.learning_rate,
                ..AdamConfig::default()
            },
        );
        Trainer {
            rng: rng::seeded(config.seed, rng::stream::BATCH),
            net,
            adam,
            config,
            iteration: 0,
        }
    }

    pub fn network(&self) -> &GpdNet<f32> {
        &self.net
    }

    pub fn into_network(self) -> GpdNet<f32> {
        self.net
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// One optimization step on a fresh batch; returns the batch loss.
    pub fn step(&mut self, dataset: &Dataset) -> Result<f64> {
        let patches = make_batch(dataset, &self.config, &mut self.rng)?;
        let k = self.net.config().k;
        if self.config.patch_size <= k {
            return Err(Error::config(format!(
                "patch size {} must exceed k = {k}",
                self.config.patch_size
            )));
        }
        let slices: Vec<&[Point3]> = patches.iter().map(PointCloud::points).collect();
        let ctx = GraphContext::build(&slices, self.net.config(), self.config.graph_mode)?;
        let n = patches.len() * self.config.patch_size;
        let noisy: Vec<f32> = patches.iter().flat_map(|p| p.to_f32_rows()).collect();
        let clean: Vec<f32> = patches
            .iter()
            .flat_map(|p| p.clean_reference().expect("patches carry a reference"))
            .flat_map(|p| p.map(|v| v as f32))
            .collect();
        let clean = Tensor::new([n, 3], clean)?;

        let mut tape = Tape::new();
        let vars = self.net.params().register(&mut tape);
        let input = tape.constant(Tensor::new([n, 3], noisy)?);
        let out = self.net.forward(&mut tape, &vars, input, &ctx, Mode::Train, None)?;
        let loss = match self.config.loss {
            LossKind::Mse => loss_mse(&mut tape, out.denoised, &clean)?,
            LossKind::MseSp => loss_mse_sp(&mut tape, out.denoised, &clean, self.config.patch_size, self.config.lambda)?,
        };
        let value = tape.value(loss).data()[0] as f64;
        let iteration = self.iteration + 1;
        if !value.is_finite() {
            return Err(Error::numeric(format!("non-finite loss {value} at iteration {iteration}")));
        }
        let mut grads = tape.backward(loss)?;
        self.net.params_mut().collect_grads(&vars, &mut grads);
        adam_step(self.net.params_mut(), &mut self.adam)?;
        self.net.apply_bn_updates(&out.bn_updates);
        self.iteration = iteration;
        Ok(value)
    }

    /// Runs `iterations` steps. `on_step` sees each trace row after the
    /// step that produced it.
    pub fn run(
        &mut self,
        dataset: &Dataset,
        iterations: u64,
        mut on_step: impl FnMut(&Trainer, &TraceRow) -> Result<()>,
    ) -> Result<Vec<TraceRow>> {
        let start = Instant::now();
        let mut trace = Vec::with_capacity(iterations as usize);
        for _ in 0..iterations {
            let loss = self.step(dataset)?;
            let row = TraceRow {
                iteration: self.iteration,
                loss,
                seconds: start.elapsed().as_secs_f64(),
            };
            on_step(self, &row)?;
            trace.push(row);
        }
        Ok(trace)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_trainer(self)
    }
}

/// Trains a fresh network for `config.iterations` steps. With
/// `checkpoint_dir` set, writes `ckpt_NNNNNN.gpd` every
/// `checkpoint_interval` iterations and `final.gpd` at the end.
pub fn train(
    dataset: &Dataset,
    net_config: GpdNetConfig,
    config: TrainingConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(Checkpoint, Vec<TraceRow>)> {
    let iterations = config.iterations;
    let interval = config.checkpoint_interval;
    let mut trainer = Trainer::new(net_config, config)?;
    let trace = trainer.run(dataset, iterations, |t, row| {
        if let Some(dir) = checkpoint_dir {
            if interval > 0 && row.iteration % interval == 0 {
                t.checkpoint().save(dir.join(format!("ckpt_{:06}.gpd", row.iteration)))?;
            }
        }
        Ok(())
    })?;
    let ck = trainer.checkpoint();
    if let Some(dir) = checkpoint_dir {
        ck.save(dir.join("final.gpd"))?;
    }
    Ok((ck, trace))
}
