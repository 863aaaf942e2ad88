//! Point clouds, meshes, sampling, noise models, patches and exact
//! nearest-neighbor search.

pub mod io;
mod kdtree;
mod noise;
mod sampling;

pub use kdtree::{squared_distance, SpatialIndex};
pub use noise::{add_gaussian_noise, add_structured_noise};
pub use sampling::{sample_mesh, sample_primitive, Primitive};

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng;

pub type Point3 = [f64; 3];

/// Clouds with more points than this have their diameter estimated on a
/// seeded subsample.
pub const EXACT_DIAMETER_LIMIT: usize = 4096;
const DIAMETER_SEED: u64 = 0x6470_6e65_7464_6961;

/// Ordered 3D points with optional unit normals, an index-aligned clean
/// reference (for noisy clouds) and the source indices of a patch.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<Point3>>,
    clean: Option<Vec<Point3>>,
    source_indices: Option<Vec<usize>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::geometry("point cloud must hold at least one point"));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::geometry(format!("point {i} has a non-finite coordinate")));
        }
        Ok(PointCloud {
            points,
            normals: None,
            clean: None,
            source_indices: None,
        })
    }

    pub fn with_normals(mut self, normals: Vec<Point3>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::contract(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        for (i, n) in normals.iter().enumerate() {
            let len = norm(n);
            if !len.is_finite() || (len - 1.0).abs() > 1e-5 {
                return Err(Error::geometry(format!("normal {i} has length {len}")));
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_clean_reference(mut self, clean: Vec<Point3>) -> Result<Self> {
        if clean.len() != self.points.len() {
            return Err(Error::contract(format!(
                "clean reference has {} points, cloud has {}",
                clean.len(),
                self.points.len()
            )));
        }
        self.clean = Some(clean);
        Ok(self)
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Point3]> {
        self.normals.as_deref()
    }

    pub fn clean_reference(&self) -> Option<&[Point3]> {
        self.clean.as_deref()
    }

    /// Indices into the cloud a patch was cut from.
    pub fn source_indices(&self) -> Option<&[usize]> {
        self.source_indices.as_deref()
    }

    /// The clean reference as its own cloud, carrying the normals.
    pub fn clean_cloud(&self) -> Option<PointCloud> {
        self.clean.as_ref().map(|c| PointCloud {
            points: c.clone(),
            normals: self.normals.clone(),
            clean: None,
            source_indices: None,
        })
    }

    pub fn centroid(&self) -> Point3 {
        let mut c = [0.0; 3];
        for p in &self.points {
            for a in 0..3 {
                c[a] += p[a];
            }
        }
        let n = self.points.len() as f64;
        c.map(|v| v / n)
    }

    /// Rows as 32-bit values for the network.
    pub fn to_f32_rows(&self) -> Vec<f32> {
        self.points.iter().flat_map(|p| p.map(|v| v as f32)).collect()
    }
}

pub(crate) fn norm(v: &Point3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: &Point3, b: &Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Vertices plus triangles given as vertex index triples.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        for (f, face) in faces.iter().enumerate() {
            if let Some(&bad) = face.iter().find(|&&v| v >= vertices.len()) {
                return Err(Error::geometry(format!(
                    "face {f} references vertex {bad}, mesh has {}",
                    vertices.len()
                )));
            }
        }
        Ok(TriangleMesh { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn triangle(&self, f: usize) -> [Point3; 3] {
        self.faces[f].map(|v| self.vertices[v])
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * norm(&cross(&sub(&b, &a), &sub(&c, &a)))
    }
}

fn max_pairwise_distance(points: &[Point3], subset: &[usize]) -> f64 {
    let mut best = 0.0f64;
    for (i, &a) in subset.iter().enumerate() {
        for &b in &subset[i + 1..] {
            best = best.max(squared_distance(&points[a], &points[b]));
        }
    }
    best.sqrt()
}

/// Maximum pairwise distance, exact up to [`EXACT_DIAMETER_LIMIT`] points
/// and estimated on a fixed-seed subsample of that size above it.
pub fn estimate_diameter(points: &[Point3]) -> f64 {
    let n = points.len();
    if n <= EXACT_DIAMETER_LIMIT {
        let all: Vec<usize> = (0..n).collect();
        max_pairwise_distance(points, &all)
    } else {
        let mut r = rng::seeded(DIAMETER_SEED, rng::stream::DIAMETER);
        let mut subset = index::sample(&mut r, n, EXACT_DIAMETER_LIMIT).into_vec();
        subset.sort_unstable();
        max_pairwise_distance(points, &subset)
    }
}

/// Rescales the cloud about its centroid to unit diameter. The clean
/// reference, if any, gets the same transform. Returns the scale factor.
pub fn normalize_diameter(pc: &PointCloud) -> Result<(PointCloud, f64)> {
    if pc.len() < 2 {
        return Err(Error::geometry("diameter normalization needs at least two points"));
    }
    let d = estimate_diameter(pc.points());
    if d == 0.0 || !d.is_finite() {
        return Err(Error::geometry("cannot normalize a cloud of coincident points"));
    }
    let scale = 1.0 / d;
    let c = pc.centroid();
    let apply = |p: &Point3| -> Point3 { std::array::from_fn(|a| c[a] + (p[a] - c[a]) * scale) };
    let mut out = pc.clone();
    out.points = pc.points.iter().map(apply).collect();
    out.clean = pc.clean.as_ref().map(|cl| cl.iter().map(apply).collect());
    Ok((out, scale))
}

/// The point at `center` plus its `size - 1` nearest neighbors in the
/// cloud's own coordinates, ordered by distance, with the clean
/// reference and normals carried along.
pub fn extract_patch(pc: &PointCloud, center: usize, size: usize) -> Result<PointCloud> {
    let index = SpatialIndex::build(pc.points());
    extract_patch_with_index(pc, &index, center, size)
}

/// [`extract_patch`] reusing a prebuilt index over `pc.points()`.
pub fn extract_patch_with_index(
    pc: &PointCloud,
    index: &SpatialIndex,
    center: usize,
    size: usize,
) -> Result<PointCloud> {
    if size == 0 || pc.len() < size {
        return Err(Error::contract(format!(
            "patch of {size} points requested from a cloud of {}",
            pc.len()
        )));
    }
    if center >= pc.len() {
        return Err(Error::Index {
            op: "extract_patch",
            index: center,
            len: pc.len(),
        });
    }
    let mut chosen = vec![center];
    chosen.extend(index.knn(&pc.points[center], size - 1, Some(center))?);
    let pick = |v: &Vec<Point3>| chosen.iter().map(|&i| v[i]).collect::<Vec<_>>();
    Ok(PointCloud {
        points: pick(&pc.points),
        normals: pc.normals.as_ref().map(pick),
        clean: pc.clean.as_ref().map(pick),
        source_indices: Some(match &pc.source_indices {
            Some(parent) => chosen.iter().map(|&i| parent[i]).collect(),
            None => chosen,
        }),
    })
}
