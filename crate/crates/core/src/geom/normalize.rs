use serde::{Deserialize, Serialize};

use super::{GeomError, PointCloud, Vec3};

/// Margin left on every side of the unit cube after normalisation.
pub const UNIT_CUBE_MARGIN: f64 = 0.05;

/// Uniform scale plus translation: `x' = (x - center) * scale + 0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitCubeTransform {
    pub center: Vec3,
    pub scale: f64,
}

impl UnitCubeTransform {
    pub fn identity() -> Self {
        Self { center: [0.5; 3], scale: 1.0 }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        [0, 1, 2].map(|a| (p[a] - self.center[a]) * self.scale + 0.5)
    }

    pub fn invert(&self, q: Vec3) -> Vec3 {
        [0, 1, 2].map(|a| (q[a] - 0.5) / self.scale + self.center[a])
    }
}

/// Maps the bounding box of `pc` into `[0.05, 0.95]³`, centred, aspect ratio preserved.
pub fn normalize_to_unit_cube(pc: &PointCloud) -> Result<(PointCloud, UnitCubeTransform), GeomError> {
    let (lo, hi) = pc.bounds().ok_or(GeomError::EmptyCloud)?;
    if !pc.is_finite() {
        return Err(GeomError::Invalid("non-finite coordinate".into()));
    }
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    if extent <= 0.0 {
        return Err(GeomError::DegenerateExtent);
    }
    let tf = UnitCubeTransform {
        center: [0, 1, 2].map(|a| 0.5 * (lo[a] + hi[a])),
        scale: (1.0 - 2.0 * UNIT_CUBE_MARGIN) / extent,
    };
    let points = pc.points.iter().map(|&p| tf.apply(p)).collect();
    Ok((PointCloud { points, normals: pc.normals.clone() }, tf))
}
