//! Denoises an .xyz file with a saved checkpoint, or a generated noisy
//! torus with a briefly trained tiny network when no arguments are given.
//!
//! `cargo run --release --example denoise_cloud -- [model.gpd input.xyz output.xyz]`

use gpdnet::evaluation::Metrics;
use gpdnet::geometry::io::{read_xyz, write_xyz};
use gpdnet::geometry::{add_gaussian_noise, normalize_diameter, sample_primitive, Primitive};
use gpdnet::network::{GpdNetConfig, GraphMode};
use gpdnet::training::{train, Checkpoint, Dataset, TrainingConfig};

fn main() -> gpdnet::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [model, input, output] = args.as_slice() {
        let net = Checkpoint::load(model)?.into_network();
        let noisy = read_xyz(input)?;
        let denoised = net.denoise(&noisy, GraphMode::Dynamic)?;
        write_xyz(output, &denoised)?;
        println!("denoised {} points into {output}", denoised.len());
        return Ok(());
    }

    let sigma = 0.02;
    let clean = normalize_diameter(&sample_primitive(Primitive::torus(), 1024, 1)?)?.0;
    let dataset = Dataset::from_clean(&[clean], sigma, 2)?;
    let config = TrainingConfig {
        sigma,
        iterations: 150,
        batch_size: 2,
        patch_size: 128,
        learning_rate: 3e-3,
        ..TrainingConfig::desk()
    };
    let (checkpoint, _) = train(&dataset, GpdNetConfig::tiny(), config, None)?;

    let held_out = normalize_diameter(&sample_primitive(Primitive::torus(), 1024, 3)?)?.0;
    let noisy = add_gaussian_noise(&held_out, sigma, 4)?;
    let denoised = checkpoint.network().denoise(&noisy, GraphMode::Dynamic)?;
    let before = Metrics::compute(&noisy, &held_out, 16)?;
    let after = Metrics::compute(&denoised, &held_out, 16)?;
    println!("noisy:    {before:?}");
    println!("denoised: {after:?}");

    let out = std::env::temp_dir().join("gpdnet_denoised_torus.xyz");
    write_xyz(&out, &denoised)?;
    println!("wrote {}", out.display());
    Ok(())
}
