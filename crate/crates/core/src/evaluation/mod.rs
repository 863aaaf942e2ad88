//! Denoising quality metrics and receptive-field analysis.

mod normals;
mod receptive;

use std::fmt::Write as _;

pub use normals::{covariance, estimate_normals_pca, smallest_eigenvector, symmetric_eigen3};
pub use receptive::{
    bfs_receptive_field, percentile_nearest_rank, receptive_field_radius, receptive_fields, ReceptiveFieldStat,
};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, SpatialIndex};
use crate::network::{GpdNet, GraphMode};

/// Default neighborhood size for PCA normals.
pub const NORMAL_NEIGHBORS: usize = 16;

fn non_empty(a: &[Point3], b: &[Point3], op: &str) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract(format!("{op} needs two non-empty clouds")));
    }
    Ok(())
}

/// `sum_i min_j ||from_i - to_j||^2`.
pub fn one_sided_squared_sum(from: &[Point3], to: &[Point3]) -> Result<f64> {
    non_empty(from, to, "nearest-point search")?;
    let index = SpatialIndex::build(to);
    from.iter().map(|p| Ok(index.nearest(p)?.1)).sum()
}

/// Symmetric Chamfer measure, both directed sums normalized by the
/// common cloud size.
pub fn chamfer(denoised: &[Point3], clean: &[Point3]) -> Result<f64> {
    non_empty(denoised, clean, "chamfer")?;
    if denoised.len() != clean.len() {
        return Err(Error::contract(format!(
            "chamfer needs equal cloud sizes, got {} and {}",
            denoised.len(),
            clean.len()
        )));
    }
    let n = denoised.len() as f64;
    Ok((one_sided_squared_sum(denoised, clean)? + one_sided_squared_sum(clean, denoised)?) / (2.0 * n))
}

/// Root mean squared distance from each denoised point to the clean
/// cloud.
pub fn rmsd(denoised: &[Point3], clean: &[Point3]) -> Result<f64> {
    Ok((one_sided_squared_sum(denoised, clean)? / denoised.len() as f64).sqrt())
}

/// Angle in degrees between two unit normals, ignoring orientation.
pub fn unoriented_angle_deg(a: &Point3, b: &Point3) -> f64 {
    let d = |s: f64| (0..3).map(|i| (a[i] - s * b[i]).powi(2)).sum::<f64>();
    let m = d(1.0).min(d(-1.0));
    (1.0 - 0.5 * m).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Unoriented normal angle error between given estimated normals of
/// `denoised` and the ground-truth normals of `clean`: every clean point
/// is compared with its nearest denoised point.
pub fn unae_with_normals(denoised: &[Point3], estimated: &[Point3], clean: &PointCloud) -> Result<f64> {
    let truth = clean
        .normals()
        .ok_or_else(|| Error::contract("clean cloud has no ground-truth normals"))?;
    non_empty(denoised, clean.points(), "unae")?;
    if estimated.len() != denoised.len() {
        return Err(Error::contract("one estimated normal per denoised point is required"));
    }
    let index = SpatialIndex::build(denoised);
    let mut total = 0.0;
    for (p, n) in clean.points().iter().zip(truth) {
        let (j, _) = index.nearest(p)?;
        total += unoriented_angle_deg(&estimated[j], n);
    }
    Ok(total / clean.len() as f64)
}

/// [`unae_with_normals`] with PCA normals estimated on `denoised`.
pub fn unae(denoised: &PointCloud, clean: &PointCloud, k_n: usize) -> Result<f64> {
    if clean.normals().is_none() {
        return Err(Error::contract("clean cloud has no ground-truth normals"));
    }
    let est = estimate_normals_pca(denoised, k_n)?;
    unae_with_normals(denoised.points(), &est, clean)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub chamfer: f64,
    pub rmsd: f64,
    pub unae_deg: f64,
}

impl Metrics {
    pub fn compute(denoised: &PointCloud, clean: &PointCloud, k_n: usize) -> Result<Self> {
        Ok(Metrics {
            chamfer: chamfer(denoised.points(), clean.points())?,
            rmsd: rmsd(denoised.points(), clean.points())?,
            unae_deg: unae(denoised, clean, k_n)?,
        })
    }

    fn mean(items: impl Iterator<Item = Metrics>) -> Metrics {
        let mut acc = Metrics {
            chamfer: 0.0,
            rmsd: 0.0,
            unae_deg: 0.0,
        };
        let mut n = 0.0;
        for m in items {
            acc.chamfer += m.chamfer;
            acc.rmsd += m.rmsd;
            acc.unae_deg += m.unae_deg;
            n += 1.0;
        }
        Metrics {
            chamfer: acc.chamfer / n,
            rmsd: acc.rmsd / n,
            unae_deg: acc.unae_deg / n,
        }
    }
}

/// Metrics of one denoised cloud, with the noisy input's metrics as
/// baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub cloud_id: String,
    pub sigma: f64,
    pub k: usize,
    pub graph_mode: GraphMode,
    pub checkpoint_id: String,
    pub denoised: Metrics,
    pub noisy: Metrics,
}

/// Whole-cloud inference followed by all metrics against `clean`.
pub fn evaluate_cloud(
    net: &GpdNet<f32>,
    noisy: &PointCloud,
    clean: &PointCloud,
    graph_mode: GraphMode,
    k_n: usize,
) -> Result<(PointCloud, Metrics, Metrics)> {
    let denoised = net.denoise(noisy, graph_mode)?;
    let m = Metrics::compute(&denoised, clean, k_n)?;
    let base = Metrics::compute(noisy, clean, k_n)?;
    Ok((denoised, m, base))
}

pub const REPORT_HEADER: &str = "cloud_id,sigma,k,graph_mode,chamfer,rmsd,unae_deg,chamfer_e6,\
noisy_chamfer,noisy_rmsd,noisy_unae_deg,noisy_chamfer_e6,checkpoint";

/// CSV rows for `reports` plus a trailing `mean` row.
pub fn format_reports(reports: &[MetricsReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    let mut row = |id: &str, r: &MetricsReport, d: Metrics, n: Metrics| {
        let _ = writeln!(
            out,
            "{id},{},{},{},{:e},{:e},{:.6},{:.4},{:e},{:e},{:.6},{:.4},{}",
            r.sigma,
            r.k,
            r.graph_mode,
            d.chamfer,
            d.rmsd,
            d.unae_deg,
            d.chamfer * 1e6,
            n.chamfer,
            n.rmsd,
            n.unae_deg,
            n.chamfer * 1e6,
            r.checkpoint_id
        );
    };
    for r in reports {
        row(&r.cloud_id, r, r.denoised, r.noisy);
    }
    if let Some(first) = reports.first() {
        let d = Metrics::mean(reports.iter().map(|r| r.denoised));
        let n = Metrics::mean(reports.iter().map(|r| r.noisy));
        row("mean", first, d, n);
    }
    out
}
