//! Binary checkpoints: a text manifest (configs, optimizer and sampler
//! state, tensor table) followed by raw little-endian `f32` data.

use std::path::Path;

use super::{Trainer, TrainingConfig};
use crate::error::{Error, Result};
use crate::kv::{parse_value, KvDoc};
use crate::network::{GpdNet, GpdNetConfig};
use crate::rng::RngState;
use crate::tensor::{AdamConfig, AdamState, ParameterStore, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

const DATA_MARKER: &[u8] = b"\n[data]\n";

/// Everything needed to continue a training run bitwise.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    network: GpdNet<f32>,
    training: TrainingConfig,
    adam: AdamState<f32>,
    iteration: u64,
    rng: RngState,
}

fn bad(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: msg.into(),
    }
}

impl Checkpoint {
    pub(crate) fn from_trainer(t: &Trainer) -> Self {
        Checkpoint {
            network: t.net.clone(),
            training: t.config.clone(),
            adam: t.adam.clone(),
            iteration: t.iteration,
            rng: RngState::capture(&t.rng),
        }
    }

    /// A checkpoint of untrained weights, e.g. for inference with a
    /// hand-built network.
    pub fn from_network(network: GpdNet<f32>, training: TrainingConfig) -> Self {
        Trainer::with_network(network, training).checkpoint()
    }

    pub fn into_trainer(self) -> Trainer {
        Trainer {
            net: self.network,
            adam: self.adam,
            config: self.training,
            iteration: self.iteration,
            rng: self.rng.restore(),
        }
    }

    pub fn network(&self) -> &GpdNet<f32> {
        &self.network
    }

    pub fn into_network(self) -> GpdNet<f32> {
        self.network
    }

    pub fn training_config(&self) -> &TrainingConfig {
        &self.training
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    fn tensors(&self) -> Vec<(String, &[f32], Vec<usize>)> {
        let mut out = Vec::new();
        for (prefix, store) in [("param", self.network.params()), ("buffer", self.network.buffers())] {
            for (name, t) in store.iter() {
                out.push((format!("{prefix}/{name}"), t.data(), t.shape().to_vec()));
            }
        }
        let params = self.network.params();
        for (prefix, moments) in [("adam.m", &self.adam.m), ("adam.v", &self.adam.v)] {
            for (id, m) in moments.iter().enumerate() {
                let shape = params.value(id).shape().to_vec();
                out.push((format!("{prefix}/{}", params.name(id)), m.as_slice(), shape));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut doc = KvDoc::new();
        doc.set("checkpoint", "format_version", CHECKPOINT_VERSION.to_string());
        for (k, v) in self.network.config().entries() {
            doc.set("network", k, v);
        }
        for (k, v) in self.training.entries() {
            doc.set("training", k, v);
        }
        let a = &self.adam.config;
        doc.set("state", "iteration", self.iteration.to_string());
        doc.set("state", "adam_step", self.adam.step.to_string());
        doc.set("state", "adam_lr", a.lr.to_string());
        doc.set("state", "adam_beta1", a.beta1.to_string());
        doc.set("state", "adam_beta2", a.beta2.to_string());
        doc.set("state", "adam_eps", a.eps.to_string());
        doc.set("state", "rng", self.rng.to_hex());
        let tensors = self.tensors();
        let mut offset = 0usize;
        for (name, data, shape) in &tensors {
            let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
            doc.set("tensors", name, format!("{} {offset} {}", dims.join(","), data.len()));
            offset += 4 * data.len();
        }
        let mut bytes = b"# gpdnet checkpoint\n".to_vec();
        bytes.extend_from_slice(doc.render().as_bytes());
        bytes.extend_from_slice(&DATA_MARKER[1..]);
        for (_, data, _) in &tensors {
            for v in data.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let split = bytes
            .windows(DATA_MARKER.len())
            .position(|w| w == DATA_MARKER)
            .ok_or_else(|| bad(path, "missing data section"))?;
        let text = std::str::from_utf8(&bytes[..split + 1]).map_err(|_| bad(path, "manifest is not UTF-8"))?;
        let data = &bytes[split + DATA_MARKER.len()..];
        let doc = KvDoc::parse(text, path)?;

        let version: u32 = doc
            .get("checkpoint", "format_version")
            .ok_or_else(|| bad(path, "missing format_version"))?
            .parse()
            .map_err(|_| bad(path, "invalid format_version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }

        let mut net_cfg = GpdNetConfig::paper();
        for (k, v) in doc.section("network") {
            if !net_cfg.apply(k, v)? {
                return Err(bad(path, format!("unknown network key {k}")));
            }
        }
        let mut training = TrainingConfig::paper();
        for (k, v) in doc.section("training") {
            if !training.apply(k, v)? {
                return Err(bad(path, format!("unknown training key {k}")));
            }
        }
        let state = |key: &str| doc.get("state", key).ok_or_else(|| bad(path, format!("missing state {key}")));
        let iteration: u64 = parse_value("iteration", state("iteration")?)?;
        let adam_config = AdamConfig {
            lr: parse_value("adam_lr", state("adam_lr")?)?,
            beta1: parse_value("adam_beta1", state("adam_beta1")?)?,
            beta2: parse_value("adam_beta2", state("adam_beta2")?)?,
            eps: parse_value("adam_eps", state("adam_eps")?)?,
        };
        let adam_step: u64 = parse_value("adam_step", state("adam_step")?)?;
        let rng = RngState::from_hex(state("rng")?).ok_or_else(|| bad(path, "invalid rng state"))?;

        let mut params = ParameterStore::new();
        let mut buffers = ParameterStore::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (name, spec) in doc.section("tensors") {
            let fields: Vec<&str> = spec.split_whitespace().collect();
            let [dims, offset, count] = fields[..] else {
                return Err(bad(path, format!("malformed tensor entry {name}")));
            };
            let shape: Vec<usize> = if dims.is_empty() {
                Vec::new()
            } else {
                dims.split(',').map(|d| parse_value(name, d)).collect::<Result<_>>()?
            };
            let offset: usize = parse_value(name, offset)?;
            let count: usize = parse_value(name, count)?;
            let raw = data
                .get(offset..offset + 4 * count)
                .ok_or_else(|| bad(path, format!("tensor {name} runs past the end of the file")))?;
            let values: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let (kind, short) = name
                .split_once('/')
                .ok_or_else(|| bad(path, format!("unprefixed tensor {name}")))?;
            match kind {
                "param" => {
                    params.insert(short, Tensor::new(shape, values)?)?;
                }
                "buffer" => {
                    buffers.insert(short, Tensor::new(shape, values)?)?;
                }
                "adam.m" => m.push(values),
                "adam.v" => v.push(values),
                _ => return Err(bad(path, format!("unknown tensor kind {kind}"))),
            }
        }
        let network = GpdNet::from_parts(net_cfg, params, buffers)?;
        if m.len() != network.params().len() || v.len() != m.len() {
            return Err(bad(path, "optimizer moments do not match the parameters"));
        }
        Ok(Checkpoint {
            network,
            training,
            adam: AdamState {
                config: adam_config,
                step: adam_step,
                m,
                v,
            },
            iteration,
            rng,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
