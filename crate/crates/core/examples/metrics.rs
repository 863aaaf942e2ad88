//! Chamfer, RMSD and normal-angle error of a noisy sphere at several
//! noise levels, plus PCA normals against the analytic ones.

use gpdnet::evaluation::{chamfer, estimate_normals_pca, rmsd, unae, unoriented_angle_deg};
use gpdnet::geometry::{add_gaussian_noise, sample_primitive, Primitive};

fn main() -> gpdnet::Result<()> {
    let clean = sample_primitive(Primitive::sphere(), 8192, 1)?;
    let normals = estimate_normals_pca(&clean, 16)?;
    let truth = clean.normals().expect("sampled spheres carry normals");
    let mean_err = normals.iter().zip(truth).map(|(a, b)| unoriented_angle_deg(a, b)).sum::<f64>() / 8192.0;
    println!("PCA normals on the clean sphere: mean error {mean_err:.3} deg");

    println!("{:>6} {:>14} {:>10} {:>10}", "sigma", "chamfer x1e6", "rmsd", "unae deg");
    for sigma in [0.0, 0.005, 0.01, 0.015, 0.02] {
        let noisy = add_gaussian_noise(&clean, sigma, 7)?.without_normals();
        println!(
            "{sigma:>6} {:>14.3} {:>10.5} {:>10.3}",
            chamfer(noisy.points(), clean.points())? * 1e6,
            rmsd(noisy.points(), clean.points())?,
            unae(&noisy, &clean, 16)?
        );
    }
    Ok(())
}
