use rand_distr::{Distribution, Normal};

use super::{norm, sub, Point3, PointCloud};
use crate::error::{Error, Result};
use crate::rng;

fn gaussian(sigma: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sigma).map_err(|e| Error::contract(format!("invalid noise std {sigma}: {e}")))
}

/// Adds i.i.d. zero-mean Gaussian noise of std `sigma` to every
/// coordinate. The input points become the clean reference.
pub fn add_gaussian_noise(pc: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud> {
    if !(sigma >= 0.0) {
        return Err(Error::contract(format!("noise std must be non-negative, got {sigma}")));
    }
    let dist = gaussian(sigma)?;
    let mut rng = rng::seeded(seed, rng::stream::NOISE);
    let noisy: Vec<Point3> = pc
        .points()
        .iter()
        .map(|p| {
            if sigma == 0.0 {
                *p
            } else {
                p.map(|c| c + dist.sample(&mut rng))
            }
        })
        .collect();
    rebuild(pc, noisy)
}

/// Scanner-like noise: a per-point distance bias along the ray from
/// `origin` (std `sigma_bias`) plus isotropic jitter (std `sigma_ray`).
pub fn add_structured_noise(
    pc: &PointCloud,
    sigma_bias: f64,
    sigma_ray: f64,
    origin: Point3,
    seed: u64,
) -> Result<PointCloud> {
    if !(sigma_bias >= 0.0 && sigma_ray >= 0.0) {
        return Err(Error::contract("noise std must be non-negative"));
    }
    let bias = gaussian(sigma_bias)?;
    let jitter = gaussian(sigma_ray)?;
    let mut rng = rng::seeded(seed, rng::stream::NOISE);
    let mut noisy = Vec::with_capacity(pc.len());
    for (i, p) in pc.points().iter().enumerate() {
        let ray = sub(p, &origin);
        let len = norm(&ray);
        if len == 0.0 {
            return Err(Error::geometry(format!("point {i} coincides with the scanner origin")));
        }
        let b = if sigma_bias > 0.0 { bias.sample(&mut rng) } else { 0.0 };
        let mut q: Point3 = std::array::from_fn(|a| p[a] + b * ray[a] / len);
        if sigma_ray > 0.0 {
            for c in &mut q {
                *c += jitter.sample(&mut rng);
            }
        }
        noisy.push(q);
    }
    rebuild(pc, noisy)
}

fn rebuild(pc: &PointCloud, noisy: Vec<Point3>) -> Result<PointCloud> {
    let mut out = PointCloud::new(noisy)?.with_clean_reference(pc.points().to_vec())?;
    if let Some(n) = pc.normals() {
        out = out.with_normals(n.to_vec())?;
    }
    Ok(out)
}
