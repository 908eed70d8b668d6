use std::collections::{HashMap, VecDeque};
use std::time::Instant;

use serde::Serialize;

use super::{assign_signs_gradient_baseline, marching_cubes_at, ExtractError, SignedCube};
use crate::field::{extract_cube_sample, CubeSample, UdfGrid};
use crate::geom::{vec3, Mesh, Vec3};
use crate::sign::SignNet;

/// Where corner signs come from.
#[derive(Debug, Clone, Copy)]
pub enum SignSource<'a> {
    Learned(&'a SignNet),
    Baseline,
    /// Per-vertex signs of the same lattice, e.g. from an analytic shape.
    Oracle(&'a [i8]),
}

impl SignSource<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            SignSource::Learned(_) => "learned",
            SignSource::Baseline => "baseline",
            SignSource::Oracle(_) => "oracle",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExtractionReport {
    pub mode: String,
    pub cubes_processed: usize,
    pub cubes_emitting: usize,
    /// Cubes with contradictory edge relations; baseline mode only.
    pub conflicts: Option<usize>,
    pub triangles: usize,
    pub vertices: usize,
    pub boundary_edges: usize,
    pub sign_seconds: f64,
    pub mc_seconds: f64,
    pub weld_seconds: f64,
}

fn corner_indices(grid: &UdfGrid, anchor: [usize; 3]) -> [usize; 8] {
    std::array::from_fn(|b| {
        let s = CubeSample::corner_site(b);
        grid.index(anchor[0] + s[0], anchor[1] + s[1], anchor[2] + s[2])
    })
}

/// Independent per-cube signs from the classifier, corner 0 positive.
pub fn assign_signs_learned(grid: &UdfGrid, anchors: &[[usize; 3]], net: &SignNet) -> Result<Vec<SignedCube>, ExtractError> {
    let samples = anchors.iter().map(|&a| extract_cube_sample(grid, a)).collect::<Result<Vec<_>, _>>()?;
    let signs = net.predict_signs(&samples)?;
    Ok(anchors
        .iter()
        .zip(signs)
        .map(|(&anchor, signs)| SignedCube { anchor, signs, udf: corner_indices(grid, anchor).map(|i| grid.udf[i]) })
        .collect())
}

pub fn assign_signs_oracle(grid: &UdfGrid, anchors: &[[usize; 3]], signs: &[i8]) -> Vec<SignedCube> {
    anchors
        .iter()
        .map(|&anchor| {
            let idx = corner_indices(grid, anchor);
            SignedCube { anchor, signs: idx.map(|i| signs[i]), udf: idx.map(|i| grid.udf[i]) }
        })
        .collect()
}

/// Marching cubes over every cube, then welding of coincident vertices and
/// removal of degenerate triangles. Returns the mesh and the number of cubes
/// that emitted geometry.
pub fn mesh_from_cubes(grid: &UdfGrid, cubes: &[SignedCube]) -> (Mesh, usize, f64, f64) {
    let t0 = Instant::now();
    let mut soup = Vec::new();
    let mut emitting = 0;
    for c in cubes {
        let idx = corner_indices(grid, c.anchor);
        let corners: [Vec3; 8] = idx.map(|i| {
            let v = grid.coords(i);
            grid.vertex(v[0], v[1], v[2])
        });
        let tris = marching_cubes_at(c, &corners);
        if !tris.is_empty() {
            emitting += 1;
        }
        soup.extend(tris);
    }
    let mc = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let sp = grid.spacing();
    let tol = 1e-7 * sp[0].min(sp[1]).min(sp[2]);
    let mut map: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(soup.len());
    for t in &soup {
        let ids = t.map(|p| {
            let key = p.map(|x| (x / tol).round() as i64);
            *map.entry(key).or_insert_with(|| {
                vertices.push(p);
                vertices.len() - 1
            })
        });
        if ids[0] == ids[1] || ids[1] == ids[2] || ids[0] == ids[2] {
            continue;
        }
        let (a, b, c) = (vertices[ids[0]], vertices[ids[1]], vertices[ids[2]]);
        if vec3::norm(vec3::cross(vec3::sub(b, a), vec3::sub(c, a))) <= 0.0 {
            continue;
        }
        triangles.push(ids);
    }
    // Drop vertices no triangle kept.
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut kept = Vec::new();
    for t in &mut triangles {
        for v in t.iter_mut() {
            if remap[*v] == usize::MAX {
                remap[*v] = kept.len();
                kept.push(vertices[*v]);
            }
            *v = remap[*v];
        }
    }
    let weld = t1.elapsed().as_secs_f64();
    (Mesh { vertices: kept, triangles }, emitting, mc, weld)
}

/// Signs, marching cubes and welding over the given cube anchors.
pub fn extract_mesh(grid: &UdfGrid, anchors: &[[usize; 3]], source: SignSource) -> Result<(Mesh, ExtractionReport), ExtractError> {
    if anchors.is_empty() {
        return Err(ExtractError::NoSurface);
    }
    let t = Instant::now();
    let (cubes, conflicts) = match source {
        SignSource::Learned(net) => (assign_signs_learned(grid, anchors, net)?, None),
        SignSource::Baseline => {
            let (c, n) = assign_signs_gradient_baseline(grid, anchors);
            (c, Some(n))
        }
        SignSource::Oracle(signs) => {
            if signs.len() != grid.len() {
                return Err(ExtractError::BadSigns(signs.len(), grid.len()));
            }
            (assign_signs_oracle(grid, anchors, signs), None)
        }
    };
    let sign_seconds = t.elapsed().as_secs_f64();
    let (mesh, emitting, mc_seconds, weld_seconds) = mesh_from_cubes(grid, &cubes);
    if mesh.triangles.is_empty() {
        return Err(ExtractError::NoSurface);
    }
    let report = ExtractionReport {
        mode: source.name().to_string(),
        cubes_processed: cubes.len(),
        cubes_emitting: emitting,
        conflicts,
        triangles: mesh.triangles.len(),
        vertices: mesh.vertices.len(),
        boundary_edges: mesh.boundary_edge_count(),
        sign_seconds,
        mc_seconds,
        weld_seconds,
    };
    Ok((mesh, report))
}

/// Makes windings agree across shared edges by breadth-first propagation.
/// Non-orientable or inconsistent regions keep their first assignment.
pub fn orient_windings(mesh: &mut Mesh) {
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    let directed = |tri: &[usize; 3], a: usize, b: usize| (0..3).any(|k| tri[k] == a && tri[(k + 1) % 3] == b);
    let mut seen = vec![false; mesh.triangles.len()];
    for start in 0..mesh.triangles.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(t) = queue.pop_front() {
            let tri = mesh.triangles[t];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                for &n in &by_edge[&(a.min(b), a.max(b))] {
                    if seen[n] {
                        continue;
                    }
                    seen[n] = true;
                    if directed(&mesh.triangles[n], a, b) {
                        mesh.triangles[n].swap(1, 2);
                    }
                    queue.push_back(n);
                }
            }
        }
    }
}

impl ExtractionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}
