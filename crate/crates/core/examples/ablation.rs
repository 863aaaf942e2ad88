//! Fixed vs dynamic graph and neighbor-count sweep on the tiny network,
//! using the same harness as `gpd ablate`.
//!
//! `cargo run --release --example ablation`

use gpdnet::cli::{cmd_ablate, cmd_generate, RunConfig};
use gpdnet::network::GraphMode;

fn main() -> gpdnet::Result<()> {
    let dir = std::env::temp_dir().join("gpdnet_ablation");
    let mut cfg = RunConfig::preset("tiny")?;
    cfg.points = 1024;
    cfg.dataset_dir = dir.join("train");
    cfg.output_dir = dir.join("train");
    cmd_generate(&cfg)?;

    cfg.training.seed = 10;
    cfg.dataset_dir = dir.join("eval");
    cfg.output_dir = dir.join("eval");
    cmd_generate(&cfg)?;

    cfg.eval_dir = Some(dir.join("eval"));
    cfg.dataset_dir = dir.join("train");
    cfg.output_dir = dir.join("out");
    cfg.training.iterations = 100;
    cfg.training.patch_size = 128;
    cfg.training.learning_rate = 3e-3;
    cfg.ablate_k = vec![4, 6];
    cfg.ablate_modes = vec![GraphMode::Dynamic, GraphMode::Fixed];
    for cell in cmd_ablate(&cfg)? {
        println!(
            "{:7} k={}: chamfer x1e6 {:.2} (noisy {:.2})",
            cell.graph_mode,
            cell.k,
            cell.mean.chamfer * 1e6,
            cell.noisy.chamfer * 1e6
        );
    }
    Ok(())
}
