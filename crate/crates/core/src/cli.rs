//! The `gpd` command line: run configuration, dataset layout on disk and
//! the six commands.
//!
//! ```text
//! gpd <generate|train|denoise|evaluate|ablate|rfield> [--config FILE] [--key value ...]
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_cloud, format_reports, receptive_field_radius, Metrics, MetricsReport, ReceptiveFieldStat,
};
use crate::geometry::io::{read_off, read_xyz, write_xyz};
use crate::geometry::{
    add_gaussian_noise, add_structured_noise, normalize_diameter, sample_mesh, sample_primitive, Point3, PointCloud,
    Primitive,
};
use crate::kv::{parse_value, KvDoc};
use crate::network::{GpdNetConfig, GraphMode};
use crate::training::{format_trace, train, Checkpoint, Dataset, TraceRow, TrainingConfig};

pub const COMMANDS: [&str; 6] = ["generate", "train", "denoise", "evaluate", "ablate", "rfield"];

pub const SEED_ENV: &str = "GPD_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    /// Scanner-like bias along the viewing ray plus jitter.
    Structured,
}

/// Every setting of a run. Each field has a default from the chosen
/// preset; config files and then `--key value` flags override them.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub network: GpdNetConfig,
    pub training: TrainingConfig,
    pub dataset_dir: PathBuf,
    /// Held-out clouds for `ablate`; the training set when unset.
    pub eval_dir: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub output_dir: PathBuf,
    pub input: Option<PathBuf>,
    pub clean: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub mesh_dir: Option<PathBuf>,
    pub shapes: Vec<Primitive>,
    pub points: usize,
    pub noise: NoiseKind,
    pub sigma_bias: f64,
    pub sigma_ray: f64,
    pub scanner_origin: Point3,
    pub normal_neighbors: usize,
    pub ablate_k: Vec<usize>,
    pub ablate_modes: Vec<GraphMode>,
    pub block: usize,
    pub dump_graphs: bool,
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let (network, training, points) = match name {
            "paper" => (GpdNetConfig::paper(), TrainingConfig::paper(), 30720),
            "desk" => (GpdNetConfig::desk(), TrainingConfig::desk(), 4096),
            "tiny" => (GpdNetConfig::tiny(), TrainingConfig::desk(), 1024),
            _ => return Err(Error::config(format!("unknown preset {name:?}"))),
        };
        Ok(RunConfig {
            preset: name.to_string(),
            ablate_k: vec![network.k],
            network,
            training,
            dataset_dir: PathBuf::from("data"),
            eval_dir: None,
            checkpoint: PathBuf::from("out/final.gpd"),
            output_dir: PathBuf::from("out"),
            input: None,
            clean: None,
            output: None,
            resume: None,
            mesh_dir: None,
            shapes: vec![Primitive::sphere(), Primitive::torus(), Primitive::cube()],
            points,
            noise: NoiseKind::Gaussian,
            sigma_bias: 0.01,
            sigma_ray: 0.005,
            scanner_origin: [0.0, 0.0, 3.0],
            normal_neighbors: crate::evaluation::NORMAL_NEIGHBORS,
            ablate_modes: vec![GraphMode::Dynamic, GraphMode::Fixed],
            block: 1,
            dump_graphs: false,
        })
    }

    /// Applies one setting by its key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        if self.network.apply(key, value)? || self.training.apply(key, value)? {
            return Ok(());
        }
        let path = |v: &str| (!v.trim().is_empty()).then(|| PathBuf::from(v.trim()));
        match key {
            "preset" => {
                if value.trim() != self.preset {
                    return Err(Error::config("preset must be chosen before any other setting"));
                }
            }
            "dataset_dir" => self.dataset_dir = PathBuf::from(value.trim()),
            "eval_dir" => self.eval_dir = path(value),
            "checkpoint" => self.checkpoint = PathBuf::from(value.trim()),
            "output_dir" => self.output_dir = PathBuf::from(value.trim()),
            "input" => self.input = path(value),
            "clean" => self.clean = path(value),
            "output" => self.output = path(value),
            "resume" => self.resume = path(value),
            "mesh_dir" => self.mesh_dir = path(value),
            "shapes" => {
                self.shapes = list(value)
                    .into_iter()
                    .map(|s| Primitive::from_name(s).ok_or_else(|| Error::config(format!("unknown shape {s:?}"))))
                    .collect::<Result<_>>()?;
            }
            "points" => self.points = parse_value(key, value)?,
            "noise" => {
                self.noise = match value.trim() {
                    "gaussian" => NoiseKind::Gaussian,
                    "structured" => NoiseKind::Structured,
                    v => return Err(Error::config(format!("unknown noise model {v:?}"))),
                }
            }
            "sigma_bias" => self.sigma_bias = parse_value(key, value)?,
            "sigma_ray" => self.sigma_ray = parse_value(key, value)?,
            "scanner_origin" => {
                let v: Vec<f64> = list(value).into_iter().map(|c| parse_value(key, c)).collect::<Result<_>>()?;
                self.scanner_origin = v
                    .try_into()
                    .map_err(|_| Error::config("scanner_origin needs three comma-separated values"))?;
            }
            "normal_neighbors" => self.normal_neighbors = parse_value(key, value)?,
            "ablate_k" => self.ablate_k = list(value).into_iter().map(|k| parse_value(key, k)).collect::<Result<_>>()?,
            "ablate_modes" => self.ablate_modes = list(value).into_iter().map(str::parse).collect::<Result<_>>()?,
            "block" => self.block = parse_value(key, value)?,
            "dump_graphs" => self.dump_graphs = parse_value(key, value)?,
            _ => return Err(Error::config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Resolved settings, grouped by section. Feeding this back through
    /// [`RunConfig::from_sources`] yields the same configuration.
    pub fn to_doc(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let join = |v: Vec<String>| v.join(",");
        doc.set("run", "preset", self.preset.clone());
        for (k, v) in self.network.entries() {
            doc.set("network", k, v);
        }
        for (k, v) in self.training.entries() {
            doc.set("training", k, v);
        }
        doc.set("paths", "dataset_dir", self.dataset_dir.display().to_string());
        doc.set("paths", "eval_dir", opt(&self.eval_dir));
        doc.set("paths", "checkpoint", self.checkpoint.display().to_string());
        doc.set("paths", "output_dir", self.output_dir.display().to_string());
        doc.set("paths", "input", opt(&self.input));
        doc.set("paths", "clean", opt(&self.clean));
        doc.set("paths", "output", opt(&self.output));
        doc.set("paths", "resume", opt(&self.resume));
        doc.set("paths", "mesh_dir", opt(&self.mesh_dir));
        doc.set("generate", "shapes", join(self.shapes.iter().map(|s| s.name().to_string()).collect()));
        doc.set("generate", "points", self.points.to_string());
        let noise = match self.noise {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Structured => "structured",
        };
        doc.set("generate", "noise", noise);
        doc.set("generate", "sigma_bias", self.sigma_bias.to_string());
        doc.set("generate", "sigma_ray", self.sigma_ray.to_string());
        doc.set("generate", "scanner_origin", join(self.scanner_origin.iter().map(f64::to_string).collect()));
        doc.set("evaluate", "normal_neighbors", self.normal_neighbors.to_string());
        doc.set("ablate", "ablate_k", join(self.ablate_k.iter().map(usize::to_string).collect()));
        doc.set("ablate", "ablate_modes", join(self.ablate_modes.iter().map(GraphMode::to_string).collect()));
        doc.set("rfield", "block", self.block.to_string());
        doc.set("debug", "dump_graphs", self.dump_graphs.to_string());
        doc
    }

    /// Builds the configuration from an optional config file and ordered
    /// flag overrides, then applies the seed environment override.
    pub fn from_sources(file: Option<&KvDoc>, flags: &[(String, String)], env_seed: Option<&str>) -> Result<Self> {
        let preset = flags
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.as_str())
            .or_else(|| file.and_then(|d| d.entries().find(|(_, k, _)| *k == "preset").map(|(_, _, v)| v)))
            .unwrap_or("paper");
        let mut cfg = RunConfig::preset(preset.trim())?;
        if let Some(doc) = file {
            for (_, k, v) in doc.entries() {
                cfg.apply(k, v)?;
            }
        }
        for (k, v) in flags {
            cfg.apply(k, v)?;
        }
        if let Some(seed) = env_seed {
            cfg.training.seed = parse_value(SEED_ENV, seed)?;
        }
        cfg.network.validate()?;
        cfg.training.validate_noise_free()?;
        Ok(cfg)
    }

    fn echo(&self) -> Result<()> {
        create_dir(&self.output_dir)?;
        write_text(&self.output_dir.join("resolved.cfg"), &self.to_doc().render())
    }
}

/// Splits `args` (without the program name) into the command and its
/// resolved configuration.
pub fn parse_args(args: &[String]) -> Result<(String, RunConfig)> {
    let usage = || Error::config(format!("usage: gpd <{}> [--config FILE] [--key value ...]", COMMANDS.join("|")));
    let command = args.first().ok_or_else(usage)?.clone();
    if !COMMANDS.contains(&command.as_str()) {
        return Err(Error::config(format!("unknown command {command:?}")));
    }
    let mut file = None;
    let mut flags = Vec::new();
    let mut rest = args[1..].iter();
    while let Some(flag) = rest.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| Error::config(format!("expected --key, got {flag:?}")))?;
        let value = rest
            .next()
            .ok_or_else(|| Error::config(format!("missing value for --{key}")))?;
        if key == "config" {
            let path = Path::new(value);
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            file = Some(KvDoc::parse(&text, path)?);
        } else {
            flags.push((key.replace('-', "_"), value.clone()));
        }
    }
    let env = std::env::var(SEED_ENV).ok();
    let cfg = RunConfig::from_sources(file.as_ref(), &flags, env.as_deref())?;
    Ok((command, cfg))
}

/// Parses and runs one command line.
pub fn run(args: &[String]) -> Result<()> {
    let (command, cfg) = parse_args(args)?;
    match command.as_str() {
        "generate" => cmd_generate(&cfg),
        "train" => cmd_train(&cfg).map(|_| ()),
        "denoise" => cmd_denoise(&cfg),
        "evaluate" => cmd_evaluate(&cfg).map(|_| ()),
        "ablate" => cmd_ablate(&cfg).map(|_| ()),
        "rfield" => cmd_receptive_field(&cfg).map(|_| ()),
        _ => unreachable!("checked by parse_args"),
    }
}

fn list(v: &str) -> Vec<&str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::config(format!("--{key} is required")))
}

/// One cloud of a generated dataset.
#[derive(Clone, Debug)]
pub struct DatasetCloud {
    pub id: String,
    pub sigma: f64,
    /// Noisy points with the clean points as reference.
    pub noisy: PointCloud,
    /// Clean points with ground-truth normals.
    pub clean: PointCloud,
}

pub const MANIFEST: &str = "manifest.txt";

/// Reads the clouds listed in `dir/manifest.txt`.
pub fn load_dataset(dir: &Path) -> Result<Vec<DatasetCloud>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let doc = KvDoc::parse(&text, &path)?;
    let mut ids: Vec<&str> = Vec::new();
    for (s, _, _) in doc.entries() {
        if let Some(id) = s.strip_prefix("cloud.") {
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
    }
    let field = |id: &str, key: &str| {
        doc.get(&format!("cloud.{id}"), key).ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: 0,
            msg: format!("cloud {id} lacks {key}"),
        })
    };
    ids.iter()
        .map(|&id| {
            let sigma: f64 = parse_value("sigma", field(id, "sigma")?)?;
            let clean = read_xyz(dir.join(field(id, "clean")?))?;
            let noisy = read_xyz(dir.join(field(id, "noisy")?))?.without_normals();
            if noisy.len() != clean.len() {
                return Err(Error::contract(format!("cloud {id}: noisy and clean sizes differ")));
            }
            let noisy = noisy.with_clean_reference(clean.points().to_vec())?;
            Ok(DatasetCloud {
                id: id.to_string(),
                sigma,
                noisy,
                clean,
            })
        })
        .collect()
}

/// Samples, normalizes and noises every source, writing
/// `<id>_clean.xyz`, `<id>_noisy.xyz` and the manifest.
pub fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let mut sources: Vec<(String, Box<dyn Fn(u64) -> Result<PointCloud>>)> = Vec::new();
    let n = cfg.points;
    if let Some(dir) = &cfg.mesh_dir {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("off")))
            .collect();
        files.sort();
        for f in files {
            let id = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let mesh = read_off(&f)?;
            sources.push((id, Box::new(move |seed| sample_mesh(&mesh, n, seed))));
        }
    } else {
        for &s in &cfg.shapes {
            sources.push((s.name().to_string(), Box::new(move |seed| sample_primitive(s, n, seed))));
        }
    }
    if sources.is_empty() {
        return Err(Error::config("nothing to generate"));
    }
    create_dir(&cfg.dataset_dir)?;
    let sigma = cfg.training.sigma;
    let mut manifest = KvDoc::new();
    manifest.set("dataset", "count", sources.len().to_string());
    for (i, (id, sample)) in sources.iter().enumerate() {
        let seed = cfg.training.seed.wrapping_add(i as u64);
        let (clean, _) = normalize_diameter(&sample(seed)?)?;
        let noisy = match cfg.noise {
            NoiseKind::Gaussian => add_gaussian_noise(&clean, sigma, seed)?,
            NoiseKind::Structured => {
                add_structured_noise(&clean, cfg.sigma_bias, cfg.sigma_ray, cfg.scanner_origin, seed)?
            }
        };
        let (clean_name, noisy_name) = (format!("{id}_clean.xyz"), format!("{id}_noisy.xyz"));
        write_xyz(cfg.dataset_dir.join(&clean_name), &clean)?;
        write_xyz(cfg.dataset_dir.join(&noisy_name), &noisy)?;
        let section = format!("cloud.{id}");
        manifest.set(&section, "source", id.clone());
        manifest.set(&section, "sigma", sigma.to_string());
        manifest.set(&section, "seed", seed.to_string());
        manifest.set(&section, "points", clean.len().to_string());
        manifest.set(&section, "clean", clean_name);
        manifest.set(&section, "noisy", noisy_name);
    }
    write_text(&cfg.dataset_dir.join(MANIFEST), &manifest.render())?;
    cfg.echo()?;
    println!("generated {} clouds in {}", sources.len(), cfg.dataset_dir.display());
    Ok(())
}

/// Trains on the dataset (or resumes `resume`) up to the configured
/// iteration count. Writes `final.gpd`, periodic checkpoints and
/// `loss.csv` to the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<TraceRow>> {
    let clouds = load_dataset(&cfg.dataset_dir)?;
    let dataset = Dataset::new(clouds.into_iter().map(|c| c.noisy).collect())?;
    create_dir(&cfg.output_dir)?;
    cfg.echo()?;
    let mut trainer = match &cfg.resume {
        Some(path) => Checkpoint::load(path)?.into_trainer(),
        None => crate::training::Trainer::new(cfg.network.clone(), cfg.training.clone())?,
    };
    let total = cfg.training.iterations;
    trainer.config.iterations = total;
    let interval = trainer.config().checkpoint_interval;
    let remaining = total.saturating_sub(trainer.iteration());
    let dir = cfg.output_dir.clone();
    let trace = trainer.run(&dataset, remaining, |t, row| {
        if interval > 0 && row.iteration % interval == 0 {
            t.checkpoint().save(dir.join(format!("ckpt_{:06}.gpd", row.iteration)))?;
        }
        if row.iteration % 100 == 0 {
            eprintln!("iteration {} loss {:.6e}", row.iteration, row.loss);
        }
        Ok(())
    })?;
    trainer.checkpoint().save(cfg.output_dir.join("final.gpd"))?;
    write_text(&cfg.output_dir.join("loss.csv"), &format_trace(&trace))?;
    if let Some(last) = trace.last() {
        println!("trained to iteration {} (loss {:.6e})", last.iteration, last.loss);
    }
    Ok(trace)
}

/// Whole-cloud inference with the checkpoint on `input`, written to
/// `output`.
pub fn cmd_denoise(cfg: &RunConfig) -> Result<()> {
    let input = required(&cfg.input, "input")?;
    let output = required(&cfg.output, "output")?;
    let net = Checkpoint::load(&cfg.checkpoint)?.into_network();
    let noisy = read_xyz(input)?.without_normals();
    let mode = cfg.training.graph_mode;
    let (noise, graphs) = net.predict_noise(noisy.points(), mode)?;
    let points = noisy
        .points()
        .iter()
        .zip(&noise)
        .map(|(p, n)| std::array::from_fn(|a| p[a] - f64::from(n[a])))
        .collect();
    write_xyz(output, &PointCloud::new(points)?)?;
    cfg.echo()?;
    if cfg.dump_graphs {
        for (b, g) in graphs.iter().enumerate() {
            write_text(&cfg.output_dir.join(format!("graph_block{b}.txt")), &g.dump())?;
        }
    }
    println!("denoised {} points into {}", noisy.len(), output.display());
    Ok(())
}

fn checkpoint_id(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Metrics of every dataset cloud, written to `output` (default
/// `metrics.csv` in the output directory).
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Vec<MetricsReport>> {
    let net = Checkpoint::load(&cfg.checkpoint)?.into_network();
    let clouds = load_dataset(&cfg.dataset_dir)?;
    let mode = cfg.training.graph_mode;
    let mut reports = Vec::new();
    for c in &clouds {
        let (_, denoised, noisy) = evaluate_cloud(&net, &c.noisy, &c.clean, mode, cfg.normal_neighbors)?;
        reports.push(MetricsReport {
            cloud_id: c.id.clone(),
            sigma: c.sigma,
            k: net.config().k,
            graph_mode: mode,
            checkpoint_id: checkpoint_id(&cfg.checkpoint),
            denoised,
            noisy,
        });
    }
    create_dir(&cfg.output_dir)?;
    let out = cfg.output.clone().unwrap_or_else(|| cfg.output_dir.join("metrics.csv"));
    write_text(&out, &format_reports(&reports))?;
    cfg.echo()?;
    println!("wrote {}", out.display());
    Ok(reports)
}

/// One trained and evaluated cell of an ablation sweep.
#[derive(Clone, Debug)]
pub struct AblationCell {
    pub graph_mode: GraphMode,
    pub k: usize,
    pub mean: Metrics,
    pub noisy: Metrics,
}

/// Ablation results as a long-form CSV.
pub fn format_ablation(cfg: &RunConfig, cells: &[AblationCell]) -> String {
    let mut out = String::from("sigma,loss,graph_mode,k,chamfer,chamfer_e6,rmsd,unae_deg,noisy_chamfer_e6\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{:e},{:.4},{:e},{:.6},{:.4}",
            cfg.training.sigma,
            cfg.training.loss,
            c.graph_mode,
            c.k,
            c.mean.chamfer,
            c.mean.chamfer * 1e6,
            c.mean.rmsd,
            c.mean.unae_deg,
            c.noisy.chamfer * 1e6
        );
    }
    out
}

/// Ablation results as a table: one row for the noise level and loss,
/// one column per `(graph mode, k)` cell, Chamfer x 1e6 entries.
pub fn format_ablation_table(cfg: &RunConfig, cells: &[AblationCell]) -> String {
    let mut out = String::from("variant");
    for c in cells {
        let _ = write!(out, ",{} k={}", c.graph_mode, c.k);
    }
    let _ = write!(out, "\nsigma={} {}", cfg.training.sigma, cfg.training.loss);
    for c in cells {
        let _ = write!(out, ",{:.4}", c.mean.chamfer * 1e6);
    }
    out.push('\n');
    out
}

/// Trains and evaluates one model per `(graph mode, k)` cell with a
/// shared seed.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<AblationCell>> {
    let train_clouds = load_dataset(&cfg.dataset_dir)?;
    let eval_clouds = match &cfg.eval_dir {
        Some(dir) => load_dataset(dir)?,
        None => train_clouds.clone(),
    };
    let dataset = Dataset::new(train_clouds.into_iter().map(|c| c.noisy).collect())?;
    create_dir(&cfg.output_dir)?;
    cfg.echo()?;
    let mut cells = Vec::new();
    for &mode in &cfg.ablate_modes {
        for &k in &cfg.ablate_k {
            let mut net_cfg = cfg.network.clone();
            net_cfg.k = k;
            net_cfg.search_area = net_cfg.search_area.max(k);
            let training = TrainingConfig {
                graph_mode: mode,
                ..cfg.training.clone()
            };
            eprintln!("ablation cell: {mode} graph, k = {k}");
            let (ck, _) = train(&dataset, net_cfg, training, None)?;
            let mut denoised = Vec::new();
            let mut noisy = Vec::new();
            for c in &eval_clouds {
                let (_, d, n) = evaluate_cloud(ck.network(), &c.noisy, &c.clean, mode, cfg.normal_neighbors)?;
                denoised.push(d);
                noisy.push(n);
            }
            cells.push(AblationCell {
                graph_mode: mode,
                k,
                mean: mean_metrics(&denoised),
                noisy: mean_metrics(&noisy),
            });
        }
    }
    write_text(&cfg.output_dir.join("ablation.csv"), &format_ablation(cfg, &cells))?;
    let table = format_ablation_table(cfg, &cells);
    write_text(&cfg.output_dir.join("ablation_table.csv"), &table)?;
    print!("{table}");
    Ok(cells)
}

fn mean_metrics(m: &[Metrics]) -> Metrics {
    let n = m.len().max(1) as f64;
    Metrics {
        chamfer: m.iter().map(|x| x.chamfer).sum::<f64>() / n,
        rmsd: m.iter().map(|x| x.rmsd).sum::<f64>() / n,
        unae_deg: m.iter().map(|x| x.unae_deg).sum::<f64>() / n,
    }
}

/// Per-point receptive-field radii of `block` under both graph modes.
/// Writes `rfield.csv`, `rfield_sizes.csv` and `rfield_hist.csv`.
pub fn cmd_receptive_field(cfg: &RunConfig) -> Result<[ReceptiveFieldStat; 2]> {
    let noisy = read_xyz(required(&cfg.input, "input")?)?.without_normals();
    let clean = read_xyz(required(&cfg.clean, "clean")?)?;
    let net = Checkpoint::load(&cfg.checkpoint)?.into_network();
    let stats = [GraphMode::Dynamic, GraphMode::Fixed]
        .map(|mode| receptive_field_radius(&net, &noisy, clean.points(), cfg.block, mode));
    let [dynamic, fixed] = stats;
    let stats = [dynamic?, fixed?];
    create_dir(&cfg.output_dir)?;
    let mut per_point = String::from("point,radius_dynamic,radius_fixed\n");
    for (i, (a, b)) in stats[0].radii.iter().zip(&stats[1].radii).enumerate() {
        let _ = writeln!(per_point, "{i},{a:e},{b:e}");
    }
    write_text(&cfg.output_dir.join("rfield.csv"), &per_point)?;
    let mut sizes = String::from("graph_mode,block,layer,mean_size\n");
    for s in &stats {
        for (l, m) in s.mean_sizes().iter().enumerate() {
            let _ = writeln!(sizes, "{},{},{},{m:.3}", s.graph_mode, s.block, l + 1);
        }
    }
    write_text(&cfg.output_dir.join("rfield_sizes.csv"), &sizes)?;
    write_text(&cfg.output_dir.join("rfield_hist.csv"), &radius_histogram(&stats, 20))?;
    cfg.echo()?;
    print!("{sizes}");
    Ok(stats)
}

/// Shared-bin histogram of the radii of both modes.
pub fn radius_histogram(stats: &[ReceptiveFieldStat; 2], bins: usize) -> String {
    let max = stats
        .iter()
        .flat_map(|s| s.radii.iter().copied())
        .fold(0.0f64, f64::max);
    let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
    let mut counts = vec![[0usize; 2]; bins];
    for (m, s) in stats.iter().enumerate() {
        for &r in &s.radii {
            let b = ((r / width) as usize).min(bins - 1);
            counts[b][m] += 1;
        }
    }
    let mut out = String::from("bin_lo,bin_hi,count_dynamic,count_fixed\n");
    for (b, c) in counts.iter().enumerate() {
        let _ = writeln!(out, "{:e},{:e},{},{}", b as f64 * width, (b + 1) as f64 * width, c[0], c[1]);
    }
    out
}
