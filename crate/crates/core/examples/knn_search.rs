//! Exact k-d tree queries checked against brute force, then the two
//! kinds of neighbor graph the network uses.

use gpdnet::geometry::{sample_primitive, squared_distance, Primitive, SpatialIndex};
use gpdnet::graph::{build_feature_graph, build_fixed_graph, build_search_areas};
use gpdnet::tensor::Tensor;

fn main() -> gpdnet::Result<()> {
    let cloud = sample_primitive(Primitive::torus(), 2000, 3)?;
    let pts = cloud.points();
    let index = SpatialIndex::build(pts);

    let mut mismatches = 0;
    for (i, q) in pts.iter().enumerate().step_by(97) {
        let fast = index.knn(q, 16, Some(i))?;
        let mut brute: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, p)| (squared_distance(q, p), j))
            .collect();
        brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let brute: Vec<usize> = brute[..16].iter().map(|&(_, j)| j).collect();
        mismatches += usize::from(fast != brute);
    }
    println!("k-d tree vs brute force: {mismatches} mismatching queries");

    let fixed = build_fixed_graph(pts, 8)?;
    let areas = build_search_areas(pts, 24, 8)?;
    // features: a nonlinear function of position, standing in for hidden features
    let feats: Vec<f32> = pts
        .iter()
        .flat_map(|p| [(4.0 * p[0]).sin() as f32, (4.0 * p[1]).cos() as f32, p[2] as f32])
        .collect();
    let dynamic = build_feature_graph(&Tensor::new([pts.len(), 3], feats)?, &areas, 8)?;
    let shared = (0..pts.len())
        .map(|i| {
            let a = fixed.neighbors(i);
            dynamic.neighbors(i).iter().filter(|j| a.contains(j)).count()
        })
        .sum::<usize>();
    println!(
        "fixed and feature-space graphs share {:.1}% of their edges",
        100.0 * shared as f64 / (8 * pts.len()) as f64
    );
    print!("first rows of the fixed graph:\n{}", fixed.dump().lines().take(3).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
