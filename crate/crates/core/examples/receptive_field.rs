//! Receptive fields of the residual blocks of an untrained desk-size
//! network, under dynamic and fixed graphs.

use gpdnet::evaluation::receptive_field_radius;
use gpdnet::geometry::{add_gaussian_noise, sample_primitive, Primitive};
use gpdnet::network::{GpdNet, GpdNetConfig, GraphMode};

fn main() -> gpdnet::Result<()> {
    let clean = sample_primitive(Primitive::torus(), 4096, 1)?;
    let noisy = add_gaussian_noise(&clean, 0.02, 2)?;
    let net = GpdNet::<f32>::new(GpdNetConfig::desk(), 3)?;
    for mode in [GraphMode::Dynamic, GraphMode::Fixed] {
        for block in 0..net.config().blocks {
            let stat = receptive_field_radius(&net, &noisy, clean.points(), block, mode)?;
            let sizes: Vec<String> = stat.mean_sizes().iter().map(|s| format!("{s:.1}")).collect();
            let mut radii = stat.radii.clone();
            radii.sort_by(f64::total_cmp);
            println!(
                "{mode:7} block {block}: field sizes per layer [{}], median radius {:.4}",
                sizes.join(", "),
                radii[radii.len() / 2]
            );
        }
    }
    Ok(())
}
