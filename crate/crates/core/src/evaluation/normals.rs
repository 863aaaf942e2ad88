//! Unoriented normal estimation by local principal component analysis.

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, SpatialIndex};

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi
/// rotations. Returns eigenvalues and the matching unit eigenvectors
/// (as rows), unsorted.
pub fn symmetric_eigen3(m: [[f64; 3]; 3]) -> ([f64; 3], [Point3; 3]) {
    let mut a = m;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..64 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for row in a.iter_mut() {
                let (x, y) = (row[p], row[q]);
                row[p] = c * x - s * y;
                row[q] = s * x + c * y;
            }
            for k in 0..3 {
                let (x, y) = (a[p][k], a[q][k]);
                a[p][k] = c * x - s * y;
                a[q][k] = s * x + c * y;
            }
            for row in v.iter_mut() {
                let (x, y) = (row[p], row[q]);
                row[p] = c * x - s * y;
                row[q] = s * x + c * y;
            }
        }
    }
    let vectors = std::array::from_fn(|j| [v[0][j], v[1][j], v[2][j]]);
    ([a[0][0], a[1][1], a[2][2]], vectors)
}

fn canonical_sign(n: Point3) -> Point3 {
    let mut best = 0;
    for a in 1..3 {
        if n[a].abs() > n[best].abs() {
            best = a;
        }
    }
    if n[best] < 0.0 {
        n.map(|c| -c)
    } else {
        n
    }
}

/// Eigenvector of the smallest eigenvalue. Eigenvalues within a relative
/// `1e-12` of the smallest count as tied; among tied vectors the one with
/// the lexicographically largest absolute components wins. The sign is
/// fixed so the largest-magnitude component is positive.
pub fn smallest_eigenvector(cov: [[f64; 3]; 3]) -> Point3 {
    let (vals, vecs) = symmetric_eigen3(cov);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale;
    let abs = |v: &Point3| v.map(f64::abs);
    let mut best: Option<Point3> = None;
    for (val, vec) in vals.iter().zip(vecs) {
        if *val - min > tol {
            continue;
        }
        best = match best {
            Some(b) if abs(&b).partial_cmp(&abs(&vec)) != Some(std::cmp::Ordering::Less) => Some(b),
            _ => Some(vec),
        };
    }
    let n = best.expect("three eigenvalues");
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    canonical_sign(n.map(|c| c / len))
}

/// Covariance of `pts` about their mean.
pub fn covariance(pts: &[Point3]) -> [[f64; 3]; 3] {
    let n = pts.len() as f64;
    let mut mean = [0.0; 3];
    for p in pts {
        for a in 0..3 {
            mean[a] += p[a] / n;
        }
    }
    let mut c = [[0.0; 3]; 3];
    for p in pts {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for r in 0..3 {
            for s in 0..3 {
                c[r][s] += d[r] * d[s] / n;
            }
        }
    }
    c
}

/// PCA normal of every point from itself and its `k_n` nearest
/// neighbors.
pub fn estimate_normals_pca(pc: &PointCloud, k_n: usize) -> Result<Vec<Point3>> {
    if k_n < 3 || pc.len() <= k_n {
        return Err(Error::contract(format!(
            "normal estimation needs 3 <= k_n < N, got k_n = {k_n} and N = {}",
            pc.len()
        )));
    }
    let index = SpatialIndex::build(pc.points());
    let mut hood = Vec::with_capacity(k_n + 1);
    pc.points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            hood.clear();
            hood.push(*p);
            hood.extend(index.knn(p, k_n, Some(i))?.into_iter().map(|j| pc.points()[j]));
            Ok(smallest_eigenvector(covariance(&hood)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_is_already_decomposed() {
        let (vals, vecs) = symmetric_eigen3([[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]);
        assert_eq!(vals, [3.0, 1.0, 2.0]);
        assert_eq!(vecs[1], [0.0, 1.0, 0.0]);
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let m = [[4.0, 1.0, -2.0], [1.0, 2.0, 0.5], [-2.0, 0.5, 3.0]];
        let (vals, vecs) = symmetric_eigen3(m);
        for r in 0..3 {
            for c in 0..3 {
                let v: f64 = (0..3).map(|j| vals[j] * vecs[j][r] * vecs[j][c]).sum();
                assert!((v - m[r][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tie_rule_prefers_lexicographically_largest_pattern() {
        // points on the x axis: eigenvalue 0 twice (y and z directions)
        let n = smallest_eigenvector(covariance(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]));
        assert_eq!(n, [0.0, 1.0, 0.0]);
        // flat in z: unique answer, sign made positive
        let n = smallest_eigenvector(covariance(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]));
        assert_eq!(n, [0.0, 0.0, 1.0]);
    }
}
