use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GeomError, Mesh, PointCloud};

/// `n` area-uniform samples, each carrying its triangle's unit normal.
pub fn sample_mesh_surface(mesh: &Mesh, n: usize, seed: u64) -> Result<PointCloud, GeomError> {
    if mesh.triangles.is_empty() {
        return Err(GeomError::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(GeomError::EmptyMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random::<f64>() * total;
        let t = cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangles[t];
        let (a, b, c) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let (u, v): (f64, f64) = (rng.random(), rng.random());
        let su = u.sqrt();
        let (wa, wb, wc) = (1.0 - su, su * (1.0 - v), su * v);
        points.push([0, 1, 2].map(|k| wa * a[k] + wb * b[k] + wc * c[k]));
        let nrm = mesh.triangle_normal(t);
        normals.push(if nrm == [0.0; 3] { [0.0, 0.0, 1.0] } else { nrm });
    }
    Ok(PointCloud { points, normals: Some(normals) })
}
