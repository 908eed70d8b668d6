//! Shared inputs for the pipeline benchmarks.

use udfrecon::experiment::gen_fixture;
use udfrecon::field::AnalyticShape;
use udfrecon::geom::{normalize_to_unit_cube, PointCloud};

/// A standard shape sampled with `n` points and normalized to the unit cube.
pub fn unit_fixture(name: &str, n: usize) -> (AnalyticShape, PointCloud) {
    let shape = AnalyticShape::standard(name).expect("standard shape");
    let raw = gen_fixture(&shape, n, 7).expect("fixture");
    let (pc, t) = normalize_to_unit_cube(&raw).expect("normalize");
    (shape.transformed(&t), pc)
}
