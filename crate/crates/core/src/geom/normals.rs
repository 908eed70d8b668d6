use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{vec3, GeomError, KnnIndex, PointCloud, Vec3};

/// Per-point PCA normals with a rank-deficiency flag.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaNormals {
    pub normals: Vec<Vec3>,
    /// Set where the neighbourhood is collinear or a single point; the
    /// normal there is an arbitrary unit vector.
    pub rank_deficient: Vec<bool>,
}

/// Smallest-eigenvalue eigenvector of each point's k-neighbourhood covariance.
/// Signs are not oriented.
pub fn pca_normal(pc: &PointCloud, index: &KnnIndex, k: usize) -> Result<PcaNormals, GeomError> {
    if k < 3 {
        return Err(GeomError::Invalid(format!("pca_normal needs k >= 3, got {k}")));
    }
    let mut normals = Vec::with_capacity(pc.len());
    let mut flags = Vec::with_capacity(pc.len());
    for &p in &pc.points {
        let nb = index.knn(p, k);
        let pts: Vec<Vec3> = nb.iter().map(|&i| index.points()[i]).collect();
        let (n, deficient) = neighbourhood_normal(&pts);
        normals.push(n);
        flags.push(deficient);
    }
    Ok(PcaNormals { normals, rank_deficient: flags })
}

pub(crate) fn covariance(pts: &[Vec3]) -> [[f64; 3]; 3] {
    let n = pts.len() as f64;
    let mut mean = [0.0; 3];
    for p in pts {
        mean = vec3::add(mean, *p);
    }
    mean = vec3::scale(mean, 1.0 / n);
    let mut c = [[0.0; 3]; 3];
    for p in pts {
        let d = vec3::sub(*p, mean);
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] += d[i] * d[j] / n;
            }
        }
    }
    c
}

fn neighbourhood_normal(pts: &[Vec3]) -> (Vec3, bool) {
    let (vals, vecs) = vec3::symmetric_eigen(covariance(pts));
    let scale = vals[2].abs().max(1e-300);
    if vals[1] <= 1e-12 * scale || vals[2] <= 0.0 {
        // Collinear: any direction orthogonal to the principal axis.
        let axis = vecs[2];
        let helper = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let mut n = vec3::normalize_or_zero(vec3::cross(axis, helper));
        if n == [0.0; 3] {
            n = [0.0, 0.0, 1.0];
        }
        return (n, true);
    }
    (vecs[0], false)
}

/// Orients unsigned normals consistently by propagating along a minimum
/// spanning tree of the k-neighbour graph with weights `1 − |⟨n_i, n_j⟩|`.
///
/// Each connected component is rooted at its point with the largest
/// `(x, y, z)` in lexicographic order, whose normal is made to point along +x.
/// The choice depends only on geometry, so reordering the input reorders the
/// output.
pub fn orient_normals(index: &KnnIndex, normals: &[Vec3], k: usize) -> Vec<Vec3> {
    let pts = index.points();
    let n = pts.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &p) in pts.iter().enumerate() {
        for j in index.knn(p, k + 1) {
            if j != i {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut out = normals.to_vec();
    let mut done = vec![false; n];
    let mut roots: Vec<usize> = (0..n).collect();
    roots.sort_by(|&a, &b| {
        let (pa, pb) = (pts[a], pts[b]);
        pb[0].total_cmp(&pa[0]).then(pb[1].total_cmp(&pa[1])).then(pb[2].total_cmp(&pa[2])).then(a.cmp(&b))
    });
    let mut heap = BinaryHeap::new();
    for root in roots {
        if done[root] {
            continue;
        }
        if out[root][0] < 0.0 {
            out[root] = vec3::scale(out[root], -1.0);
        }
        heap.push(Reverse(Edge { w: 0.0, to: root, from: root }));
        while let Some(Reverse(e)) = heap.pop() {
            if done[e.to] {
                continue;
            }
            done[e.to] = true;
            if e.to != e.from && vec3::dot(out[e.to], out[e.from]) < 0.0 {
                out[e.to] = vec3::scale(out[e.to], -1.0);
            }
            for &j in &adj[e.to] {
                if !done[j] {
                    let w = 1.0 - vec3::dot(out[e.to], out[j]).abs();
                    heap.push(Reverse(Edge { w, to: j, from: e.to }));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Edge {
    w: f64,
    to: usize,
    from: usize,
}

impl Eq for Edge {}

impl Ord for Edge {
    fn cmp(&self, other: &Self) -> Ordering {
        self.w.total_cmp(&other.w).then(self.to.cmp(&other.to)).then(self.from.cmp(&other.from))
    }
}

impl PartialOrd for Edge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Surface variation `λ₀ / (λ₀ + λ₁ + λ₂)` of each point's k-neighbourhood.
pub fn surface_variation(index: &KnnIndex, k: usize) -> Vec<f64> {
    index
        .points()
        .iter()
        .map(|&p| {
            let pts: Vec<Vec3> = index.knn(p, k).iter().map(|&i| index.points()[i]).collect();
            let (vals, _) = vec3::symmetric_eigen(covariance(&pts));
            let total = vals.iter().map(|v| v.max(0.0)).sum::<f64>();
            if total > 0.0 {
                vals[0].max(0.0) / total
            } else {
                0.0
            }
        })
        .collect()
}
