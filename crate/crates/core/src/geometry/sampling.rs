use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{cross, norm, sub, Point3, PointCloud, TriangleMesh};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Analytic surfaces used as desk-scale training and test shapes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    Sphere { radius: f64 },
    /// Ring of major radius `major` around the z axis, tube radius `minor`.
    Torus { major: f64, minor: f64 },
    /// Surface of the axis-aligned cube `[-half, half]^3`.
    Cube { half: f64 },
}

impl Primitive {
    pub fn sphere() -> Self {
        Primitive::Sphere { radius: 0.5 }
    }

    pub fn torus() -> Self {
        Primitive::Torus {
            major: 0.35,
            minor: 0.15,
        }
    }

    pub fn cube() -> Self {
        Primitive::Cube { half: 0.5 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Sphere { .. } => "sphere",
            Primitive::Torus { .. } => "torus",
            Primitive::Cube { .. } => "cube",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sphere" => Some(Self::sphere()),
            "torus" => Some(Self::torus()),
            "cube" => Some(Self::cube()),
            _ => None,
        }
    }

    /// Value of the implicit surface equation; zero on the surface.
    pub fn implicit(&self, p: &Point3) -> f64 {
        match *self {
            Primitive::Sphere { radius } => norm(p) - radius,
            Primitive::Torus { major, minor } => {
                let q = (p[0] * p[0] + p[1] * p[1]).sqrt() - major;
                (q * q + p[2] * p[2]).sqrt() - minor
            }
            Primitive::Cube { half } => p.iter().map(|c| c.abs()).fold(0.0, f64::max) - half,
        }
    }
}

fn sample_one(kind: Primitive, rng: &mut Rng) -> (Point3, Point3) {
    match kind {
        Primitive::Sphere { radius } => loop {
            let g: Point3 = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
            let len = norm(&g);
            if len < 1e-12 {
                continue;
            }
            let p = g.map(|c| c / len * radius);
            let pn = norm(&p);
            break (p, p.map(|c| c / pn));
        },
        Primitive::Torus { major, minor } => loop {
            // rejection on the tube angle makes the density proportional
            // to the area element (major + minor cos v)
            let u = rng.random::<f64>() * 2.0 * PI;
            let v = rng.random::<f64>() * 2.0 * PI;
            let w = rng.random::<f64>();
            if w * (major + minor) > major + minor * v.cos() {
                continue;
            }
            let ring = major + minor * v.cos();
            let p = [ring * u.cos(), ring * u.sin(), minor * v.sin()];
            let n = [v.cos() * u.cos(), v.cos() * u.sin(), v.sin()];
            let nl = norm(&n);
            break (p, n.map(|c| c / nl));
        },
        Primitive::Cube { half } => {
            let face = rng.random_range(0..6usize);
            let axis = face / 2;
            let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
            let mut p = [0.0; 3];
            let mut n = [0.0; 3];
            for (a, c) in p.iter_mut().enumerate() {
                *c = if a == axis {
                    sign * half
                } else {
                    (rng.random::<f64>() * 2.0 - 1.0) * half
                };
            }
            n[axis] = sign;
            (p, n)
        }
    }
}

/// `n` area-uniform samples on an analytic surface, with exact normals.
pub fn sample_primitive(kind: Primitive, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::contract("cannot sample zero points"));
    }
    let mut rng = rng::seeded(seed, rng::stream::SAMPLE);
    let (points, normals): (Vec<_>, Vec<_>) = (0..n).map(|_| sample_one(kind, &mut rng)).unzip();
    PointCloud::new(points)?.with_normals(normals)
}

/// `n` samples distributed uniformly by area over the mesh surface, each
/// carrying the normal of the face it was drawn from.
pub fn sample_mesh(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::contract("cannot sample zero points"));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for f in 0..mesh.faces().len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::geometry("mesh has no face with positive area"));
    }
    let mut rng = rng::seeded(seed, rng::stream::SAMPLE);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let mut f = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        // zero-area faces share their cumulative value with a neighbor and
        // can only be hit through rounding; skip forward to a real face
        while mesh.face_area(f) == 0.0 {
            f = (f + 1) % cumulative.len();
        }
        let [a, b, c] = mesh.triangle(f);
        let r1 = rng.random::<f64>().sqrt();
        let r2 = rng.random::<f64>();
        let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        points.push(std::array::from_fn(|k| wa * a[k] + wb * b[k] + wc * c[k]));
        let nrm = cross(&sub(&b, &a), &sub(&c, &a));
        let len = norm(&nrm);
        normals.push(nrm.map(|v| v / len));
    }
    PointCloud::new(points)?.with_normals(normals)
}
