use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SignError;
use crate::field::{analytic_sign_grid, analytic_udf_grid, extract_cube_sample, near_surface_cubes, AnalyticShape, Bounds, CubeSample, FieldError, UdfGrid};
use crate::geom::{normalize_to_unit_cube, PointCloud};

/// Where a sample came from: the shape in the unit-cube frame and the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub shape: AnalyticShape,
    pub anchor: [usize; 3],
    /// All eight labels agree; the cube does not cross the surface.
    pub constant: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SignDataset {
    pub samples: Vec<CubeSample>,
    pub provenance: Vec<Provenance>,
}

/// Labelled near-surface cubes of one closed shape. The shape is placed in
/// the unit cube the same way a sampled fixture of it would be, then cubes
/// are selected against `n_points` surface samples.
pub fn harvest(shape: &AnalyticShape, h: usize, n_points: usize, seed: u64) -> Result<Vec<(CubeSample, Provenance)>, SignError> {
    if !shape.is_closed() {
        return Err(FieldError::UndefinedSign(shape.name()).into());
    }
    let pc = shape.sample(n_points, seed)?;
    let (pc, t) = normalize_to_unit_cube(&pc)?;
    let unit = shape.transformed(&t);
    let (grid, _) = analytic_udf_grid(&unit, h, Bounds::unit())?;
    harvest_from_grid(&unit, &grid, &pc)
}

/// Labelled near-surface cubes of any field sampled for `unit`, such as an
/// estimated one. Labels come from the analytic signed distance.
pub fn harvest_from_grid(unit: &AnalyticShape, grid: &UdfGrid, pc: &PointCloud) -> Result<Vec<(CubeSample, Provenance)>, SignError> {
    let signs = analytic_sign_grid(unit, grid.h, grid.bounds)?;
    near_surface_cubes(grid, pc)
        .into_iter()
        .map(|a| {
            let s = extract_cube_sample(grid, a)?.with_labels(grid, &signs);
            let l = s.labels.expect("labelled");
            let constant = l.iter().all(|&v| v == l[0]);
            Ok((s, Provenance { shape: *unit, anchor: a, constant }))
        })
        .collect()
}

impl SignDataset {
    pub fn from_shapes(shapes: &[AnalyticShape], h: usize, n_points: usize, seed: u64) -> Result<Self, SignError> {
        let mut ds = Self::default();
        for (i, s) in shapes.iter().enumerate() {
            for (sample, prov) in harvest(s, h, n_points, seed.wrapping_add(i as u64))? {
                ds.samples.push(sample);
                ds.provenance.push(prov);
            }
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<[i8; 8]> {
        self.samples.iter().map(|s| s.labels.expect("labelled sample")).collect()
    }

    /// Random split; the first part holds `1 − held_out` of the samples.
    pub fn split(&self, held_out: f64, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = ((1.0 - held_out.clamp(0.0, 1.0)) * self.len() as f64).round() as usize;
        let pick = |ids: &[usize]| Self {
            samples: ids.iter().map(|&i| self.samples[i].clone()).collect(),
            provenance: ids.iter().map(|&i| self.provenance[i].clone()).collect(),
        };
        (pick(&idx[..cut]), pick(&idx[cut..]))
    }

    pub fn extend(&mut self, other: Self) {
        self.samples.extend(other.samples);
        self.provenance.extend(other.provenance);
    }

    /// CSV with one row per sample: kind, shape parameters as JSON, anchor,
    /// constant flag and the eight labels.
    pub fn write_manifest(&self, mut w: impl Write) -> Result<(), SignError> {
        writeln!(w, "kind,params,anchor_x,anchor_y,anchor_z,constant,l0,l1,l2,l3,l4,l5,l6,l7")?;
        for (s, p) in self.samples.iter().zip(&self.provenance) {
            let params = serde_json::to_string(&p.shape).map_err(|e| SignError::BadConfig(e.to_string()))?.replace('"', "\"\"");
            let l = s.labels.expect("labelled sample");
            let labels: Vec<String> = l.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},\"{}\",{},{},{},{},{}", p.shape.name(), params, p.anchor[0], p.anchor[1], p.anchor[2], p.constant, labels.join(","))?;
        }
        Ok(())
    }
}
