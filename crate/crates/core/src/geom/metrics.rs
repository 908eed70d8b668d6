//! Chamfer-L1 and modified normal consistency between two point sets.
//!
//! Both are symmetric averages of a nearest-neighbour quantity: half the mean
//! over A of the term at `NN_B(x)`, plus half the mean over B of the term at
//! `NN_A(y)`. Chamfer uses the L1 norm of the 3-vector difference.

use serde::{Deserialize, Serialize};

use super::{vec3, GeomError, KnnIndex, PointCloud, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub cd1: f64,
    pub nc: f64,
}

fn directed_mean<F>(from: &[Vec3], to: &KnnIndex, mut term: F) -> f64
where
    F: FnMut(usize, usize) -> f64,
{
    let sum: f64 = from
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let (j, _) = to.nearest(x).expect("nonempty index");
            term(i, j)
        })
        .sum();
    sum / from.len() as f64
}

pub fn chamfer_l1(a: &PointCloud, b: &PointCloud) -> Result<f64, GeomError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeomError::EmptyCloud);
    }
    let ia = KnnIndex::new(&a.points);
    let ib = KnnIndex::new(&b.points);
    Ok(chamfer_l1_indexed(&a.points, &ia, &b.points, &ib))
}

pub(crate) fn chamfer_l1_indexed(a: &[Vec3], ia: &KnnIndex, b: &[Vec3], ib: &KnnIndex) -> f64 {
    let ab = directed_mean(a, ib, |i, j| vec3::l1(vec3::sub(a[i], b[j])));
    let ba = directed_mean(b, ia, |i, j| vec3::l1(vec3::sub(b[i], a[j])));
    0.5 * ab + 0.5 * ba
}

pub fn normal_consistency(a: &PointCloud, b: &PointCloud) -> Result<f64, GeomError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeomError::EmptyCloud);
    }
    let (na, nb) = match (&a.normals, &b.normals) {
        (Some(na), Some(nb)) => (na, nb),
        _ => return Err(GeomError::MissingNormals),
    };
    let ia = KnnIndex::new(&a.points);
    let ib = KnnIndex::new(&b.points);
    let ab = directed_mean(&a.points, &ib, |i, j| vec3::dot(na[i], nb[j]).abs());
    let ba = directed_mean(&b.points, &ia, |i, j| vec3::dot(nb[i], na[j]).abs());
    Ok((0.5 * ab + 0.5 * ba).clamp(0.0, 1.0))
}
