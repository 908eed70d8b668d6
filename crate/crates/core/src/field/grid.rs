use serde::{Deserialize, Serialize};

use super::{AnalyticShape, FieldError};
use crate::estimator::{Encoding, Estimator, PointContext};
use crate::geom::{vec3, PointCloud, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Bounds {
    pub fn new(lo: Vec3, hi: Vec3) -> Self {
        Self { lo, hi }
    }

    pub fn unit() -> Self {
        Self { lo: [0.0; 3], hi: [1.0; 3] }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|c| p[c] >= self.lo[c] && p[c] <= self.hi[c])
    }

    fn is_valid(&self) -> bool {
        (0..3).all(|c| self.lo[c].is_finite() && self.hi[c].is_finite() && self.hi[c] > self.lo[c])
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Self::unit()
    }
}

/// UDF values and unit gradients at the `H³` vertices of a lattice. Vertex
/// `(i, j, k)` is stored at `i + H·(j + H·k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UdfGrid {
    pub h: usize,
    pub bounds: Bounds,
    pub udf: Vec<f64>,
    pub grad: Vec<Vec3>,
}

impl UdfGrid {
    pub fn new(h: usize, bounds: Bounds, udf: Vec<f64>, grad: Vec<Vec3>) -> Result<Self, FieldError> {
        let g = Self { h, bounds, udf, grad };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.h < 2 {
            return Err(FieldError::Resolution(self.h));
        }
        if !self.bounds.is_valid() {
            return Err(FieldError::Format(format!("degenerate bounds {:?}", self.bounds)));
        }
        let n = self.h.pow(3);
        if self.udf.len() != n || self.grad.len() != n {
            return Err(FieldError::Format(format!("expected {n} vertices, got {} values and {} gradients", self.udf.len(), self.grad.len())));
        }
        if let Some(i) = self.udf.iter().position(|u| !u.is_finite() || *u < 0.0) {
            return Err(FieldError::Format(format!("udf at vertex {i} is {}", self.udf[i])));
        }
        for (i, g) in self.grad.iter().enumerate() {
            let n = vec3::norm(*g);
            if !(n == 0.0 || (n - 1.0).abs() < 1e-9) {
                return Err(FieldError::Format(format!("gradient at vertex {i} has norm {n}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.udf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.udf.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.h * (j + self.h * k)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        [idx % self.h, (idx / self.h) % self.h, idx / (self.h * self.h)]
    }

    /// Lattice step along each axis.
    pub fn spacing(&self) -> Vec3 {
        [0, 1, 2].map(|c| (self.bounds.hi[c] - self.bounds.lo[c]) / (self.h - 1) as f64)
    }

    pub fn vertex(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let s = self.spacing();
        [self.bounds.lo[0] + i as f64 * s[0], self.bounds.lo[1] + j as f64 * s[1], self.bounds.lo[2] + k as f64 * s[2]]
    }

    pub fn vertices(&self) -> Vec<Vec3> {
        lattice(self.h, &self.bounds)
    }

    /// Normalised central differences of the udf (one-sided on the border);
    /// zero where the difference vanishes.
    pub fn finite_difference_gradients(&self) -> Vec<Vec3> {
        let s = self.spacing();
        let h = self.h;
        (0..self.len())
            .map(|idx| {
                let c = self.coords(idx);
                let mut g = [0.0; 3];
                for ax in 0..3 {
                    let (mut a, mut b) = (c, c);
                    if c[ax] + 1 < h {
                        a[ax] += 1;
                    }
                    if c[ax] > 0 {
                        b[ax] -= 1;
                    }
                    let span = (a[ax] - b[ax]) as f64 * s[ax];
                    g[ax] = (self.udf[self.index(a[0], a[1], a[2])] - self.udf[self.index(b[0], b[1], b[2])]) / span;
                }
                vec3::normalize_or_zero(g)
            })
            .collect()
    }
}

fn lattice(h: usize, b: &Bounds) -> Vec<Vec3> {
    let s = [0, 1, 2].map(|c| (b.hi[c] - b.lo[c]) / (h - 1) as f64);
    let mut out = Vec::with_capacity(h * h * h);
    for k in 0..h {
        for j in 0..h {
            for i in 0..h {
                out.push([b.lo[0] + i as f64 * s[0], b.lo[1] + j as f64 * s[1], b.lo[2] + k as f64 * s[2]]);
            }
        }
    }
    out
}

fn check(h: usize, bounds: &Bounds) -> Result<(), FieldError> {
    if h < 8 {
        return Err(FieldError::Resolution(h));
    }
    if !bounds.is_valid() {
        return Err(FieldError::Format(format!("degenerate bounds {bounds:?}")));
    }
    Ok(())
}

/// Runs the projection pipeline with every lattice vertex as a query.
pub fn evaluate_grid(est: &Estimator, pc: &PointCloud, h: usize, bounds: Bounds) -> Result<UdfGrid, FieldError> {
    check(h, &bounds)?;
    if pc.points.iter().any(|p| !bounds.contains(*p)) {
        return Err(FieldError::OutOfBounds);
    }
    let ctx = est.context(pc)?;
    let enc = est.encode(&ctx)?;
    evaluate_grid_with(est, &ctx, &enc, h, bounds)
}

/// As [`evaluate_grid`] with a precomputed context and encoding.
pub fn evaluate_grid_with(est: &Estimator, ctx: &PointContext, enc: &Encoding, h: usize, bounds: Bounds) -> Result<UdfGrid, FieldError> {
    check(h, &bounds)?;
    if ctx.points.iter().any(|p| !bounds.contains(*p)) {
        return Err(FieldError::OutOfBounds);
    }
    let queries = lattice(h, &bounds);
    let (flow, grad) = est.evaluate_with_gradients(ctx, enc, &queries)?;
    let udf = (0..queries.len()).map(|i| flow.udf(i)).collect();
    UdfGrid::new(h, bounds, udf, grad)
}

/// Exact UDF and gradient of an analytic surface, plus inside/outside signs
/// (`+1` outside) when the surface is closed.
pub fn analytic_udf_grid(shape: &AnalyticShape, h: usize, bounds: Bounds) -> Result<(UdfGrid, Option<Vec<i8>>), FieldError> {
    check(h, &bounds)?;
    shape.validate()?;
    let pts = lattice(h, &bounds);
    let udf = pts.iter().map(|p| shape.distance(*p)).collect();
    let grad = pts.iter().map(|p| shape.gradient(*p)).collect();
    let signs = if shape.is_closed() { Some(signs_at(shape, &pts)?) } else { None };
    Ok((UdfGrid::new(h, bounds, udf, grad)?, signs))
}

pub fn analytic_sign_grid(shape: &AnalyticShape, h: usize, bounds: Bounds) -> Result<Vec<i8>, FieldError> {
    check(h, &bounds)?;
    signs_at(shape, &lattice(h, &bounds))
}

pub(crate) fn signs_at(shape: &AnalyticShape, pts: &[Vec3]) -> Result<Vec<i8>, FieldError> {
    pts.iter()
        .map(|p| match shape.signed_distance(*p) {
            Some(s) if s < 0.0 => Ok(-1),
            Some(_) => Ok(1),
            None => Err(FieldError::UndefinedSign(shape.name())),
        })
        .collect()
}
