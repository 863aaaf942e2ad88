//! Trains the desk-size network on sphere, torus and cube clouds and
//! reports held-out Chamfer before and after denoising.
//!
//! `cargo run --release --example train_desk -- [iterations] [dynamic|fixed]`

use gpdnet::evaluation::chamfer;
use gpdnet::geometry::{add_gaussian_noise, normalize_diameter, sample_primitive, Primitive};
use gpdnet::network::{GpdNetConfig, GraphMode};
use gpdnet::training::{smoothed, Dataset, Trainer, TrainingConfig};

fn main() -> gpdnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations: u64 = args.next().map_or(300, |s| s.parse().expect("iteration count"));
    let mode: GraphMode = match args.next() {
        Some(s) => s.parse()?,
        None => GraphMode::Dynamic,
    };
    let sigma = 0.02;
    let shapes = [Primitive::sphere(), Primitive::torus(), Primitive::cube()];

    let mut clean = Vec::new();
    for (i, s) in shapes.iter().enumerate() {
        clean.push(normalize_diameter(&sample_primitive(*s, 4096, 10 + i as u64)?)?.0);
    }
    let dataset = Dataset::from_clean(&clean, sigma, 100)?;
    let config = TrainingConfig {
        sigma,
        graph_mode: mode,
        ..TrainingConfig::desk()
    };
    let mut trainer = Trainer::new(GpdNetConfig::desk(), config)?;
    let trace = trainer.run(&dataset, iterations, |_, row| {
        if row.iteration % 50 == 0 {
            println!("iteration {:5}  loss {:.6}  {:.1}s", row.iteration, row.loss, row.seconds);
        }
        Ok(())
    })?;
    if let Some((first, last)) = smoothed(&trace, 20) {
        println!("smoothed loss {first:.6} -> {last:.6}");
    }

    for (i, s) in shapes.iter().enumerate() {
        let held_out = normalize_diameter(&sample_primitive(*s, 4096, 50 + i as u64)?)?.0;
        let noisy = add_gaussian_noise(&held_out, sigma, 900 + i as u64)?;
        let denoised = trainer.network().denoise(&noisy, mode)?;
        let before = chamfer(noisy.points(), held_out.points())?;
        let after = chamfer(denoised.points(), held_out.points())?;
        println!(
            "{:6} chamfer x1e6: noisy {:.2}, denoised {:.2} ({:.0}%)",
            s.name(),
            before * 1e6,
            after * 1e6,
            100.0 * after / before
        );
    }
    Ok(())
}
