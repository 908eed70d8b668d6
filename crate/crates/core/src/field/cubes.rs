use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FieldError, UdfGrid};
use crate::geom::{KnnIndex, PointCloud};

/// Side of the sample window in lattice sites.
pub const WINDOW: usize = 5;
/// Side of a sign cube in lattice steps.
pub const CUBE_SIDE: usize = 2;
pub const NEAR_SURFACE_THRESHOLD: f64 = 0.03;

const SITES: usize = WINDOW * WINDOW * WINDOW;

/// A 4×5×5×5 block: channel 0 is the UDF, channels 1 to 3 the gradient.
/// Site `(x, y, z)` of channel `c` is at `c·125 + x + 5·(y + 5·z)`. Corner
/// `b = bx | by<<1 | bz<<2` of the sign cube is at site `(1+2bx, 1+2by, 1+2bz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeSample {
    pub data: Vec<f64>,
    pub anchor: [usize; 3],
    /// Inside/outside sign per corner, `+1` or `−1`.
    pub labels: Option<[i8; 8]>,
}

fn site(x: usize, y: usize, z: usize) -> usize {
    x + WINDOW * (y + WINDOW * z)
}

impl CubeSample {
    pub fn udf(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[site(x, y, z)]
    }

    pub fn grad(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        let s = site(x, y, z);
        [self.data[SITES + s], self.data[2 * SITES + s], self.data[3 * SITES + s]]
    }

    pub fn corner_site(b: usize) -> [usize; 3] {
        [1 + 2 * (b & 1), 1 + (b & 2), 1 + ((b >> 2) & 1) * 2]
    }

    /// Lattice coordinate of corner `b`.
    pub fn corner_vertex(&self, b: usize) -> [usize; 3] {
        let s = Self::corner_site(b);
        [self.anchor[0] + s[0], self.anchor[1] + s[1], self.anchor[2] + s[2]]
    }

    pub fn corner_udf(&self) -> [f64; 8] {
        std::array::from_fn(|b| {
            let s = Self::corner_site(b);
            self.udf(s[0], s[1], s[2])
        })
    }

    /// Reads corner labels from a per-vertex sign grid of the same lattice.
    pub fn with_labels(mut self, grid: &UdfGrid, signs: &[i8]) -> Self {
        let labels = std::array::from_fn(|b| {
            let v = self.corner_vertex(b);
            signs[grid.index(v[0], v[1], v[2])]
        });
        self.labels = Some(labels);
        self
    }
}

/// Anchors of the cubes tiling the lattice, on even coordinates.
pub fn cube_anchors(grid: &UdfGrid) -> Vec<[usize; 3]> {
    if grid.h < WINDOW {
        return Vec::new();
    }
    let n = (grid.h - WINDOW) / CUBE_SIDE + 1;
    let mut out = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                out.push([i * CUBE_SIDE, j * CUBE_SIDE, k * CUBE_SIDE]);
            }
        }
    }
    out
}

/// Cubes whose centre lies closer than [`NEAR_SURFACE_THRESHOLD`] to an input point.
pub fn near_surface_cubes(grid: &UdfGrid, pc: &PointCloud) -> Vec<[usize; 3]> {
    if pc.is_empty() {
        return Vec::new();
    }
    let idx = KnnIndex::new(&pc.points);
    let t2 = NEAR_SURFACE_THRESHOLD * NEAR_SURFACE_THRESHOLD;
    cube_anchors(grid)
        .into_iter()
        .filter(|a| {
            let c = grid.vertex(a[0] + 2, a[1] + 2, a[2] + 2);
            idx.nearest(c).is_some_and(|(_, d2)| d2 < t2)
        })
        .collect()
}

pub fn extract_cube_sample(grid: &UdfGrid, anchor: [usize; 3]) -> Result<CubeSample, FieldError> {
    if anchor.iter().any(|&a| a + WINDOW > grid.h) {
        return Err(FieldError::OutOfRange(anchor));
    }
    let mut data = vec![0.0; 4 * SITES];
    for z in 0..WINDOW {
        for y in 0..WINDOW {
            for x in 0..WINDOW {
                let v = grid.index(anchor[0] + x, anchor[1] + y, anchor[2] + z);
                let s = site(x, y, z);
                data[s] = grid.udf[v];
                for c in 0..3 {
                    data[(c + 1) * SITES + s] = grid.grad[v][c];
                }
            }
        }
    }
    Ok(CubeSample { data, anchor, labels: None })
}

/// A signed axis permutation acting about the window centre: `r′ = M·r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Symmetry {
    pub m: [[i8; 3]; 3],
}

impl Symmetry {
    pub fn identity() -> Self {
        Self { m: [[1, 0, 0], [0, 1, 0], [0, 0, 1]] }
    }

    pub fn flip(axis: usize) -> Self {
        let mut s = Self::identity();
        s.m[axis][axis] = -1;
        s
    }

    /// Quarter turn about `axis`, taking the next axis onto the one after it.
    pub fn rot90(axis: usize) -> Self {
        let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut m = [[0i8; 3]; 3];
        m[axis][axis] = 1;
        m[b][a] = 1;
        m[a][b] = -1;
        Self { m }
    }

    /// `self` applied after `first`.
    pub fn then(self, next: Self) -> Self {
        let mut m = [[0i8; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = (0..3).map(|k| next.m[i][k] * self.m[k][j]).sum();
            }
        }
        Self { m }
    }

    /// The 48 signed permutations.
    pub fn all() -> Vec<Self> {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut out = Vec::with_capacity(48);
        for p in perms {
            for s in 0..8 {
                let mut m = [[0i8; 3]; 3];
                for i in 0..3 {
                    m[i][p[i]] = if s >> i & 1 == 1 { -1 } else { 1 };
                }
                out.push(Self { m });
            }
        }
        out
    }

    pub fn apply_vec(&self, v: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| (0..3).map(|j| self.m[i][j] as f64 * v[j]).sum())
    }

    fn apply_offset(&self, r: [i64; 3]) -> [i64; 3] {
        std::array::from_fn(|i| (0..3).map(|j| self.m[i][j] as i64 * r[j]).sum())
    }

    /// Index map on corner bits.
    pub fn corner_map(&self, b: usize) -> usize {
        let r = [0, 1, 2].map(|c| if b >> c & 1 == 1 { 1 } else { -1 });
        let r2 = self.apply_offset(r);
        (0..3).map(|c| if r2[c] > 0 { 1 << c } else { 0 }).sum()
    }

    pub fn apply(&self, s: &CubeSample) -> CubeSample {
        let mut data = vec![0.0; 4 * SITES];
        let half = (WINDOW / 2) as i64;
        for z in 0..WINDOW {
            for y in 0..WINDOW {
                for x in 0..WINDOW {
                    let r = [x as i64 - half, y as i64 - half, z as i64 - half];
                    let t = self.apply_offset(r);
                    let dst = site((t[0] + half) as usize, (t[1] + half) as usize, (t[2] + half) as usize);
                    let src = site(x, y, z);
                    data[dst] = s.data[src];
                    let g = self.apply_vec(s.grad(x, y, z));
                    for c in 0..3 {
                        data[(c + 1) * SITES + dst] = g[c];
                    }
                }
            }
        }
        let labels = s.labels.map(|l| {
            let mut out = [0i8; 8];
            for (b, &v) in l.iter().enumerate() {
                out[self.corner_map(b)] = v;
            }
            out
        });
        CubeSample { data, anchor: s.anchor, labels }
    }
}

/// Random flips, a random quarter-turn rotation and a UDF scale in `[0.5, 1.5]`.
pub fn augment(sample: &CubeSample, seed: u64) -> CubeSample {
    augment_with(sample, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub(crate) fn augment_with(sample: &CubeSample, rng: &mut impl Rng) -> CubeSample {
    let mut sym = Symmetry::identity();
    for axis in 0..3 {
        if rng.random::<bool>() {
            sym = sym.then(Symmetry::flip(axis));
        }
    }
    let axis = rng.random_range(0..3);
    for _ in 0..rng.random_range(0..4) {
        sym = sym.then(Symmetry::rot90(axis));
    }
    let scale = rng.random_range(0.5..=1.5);
    let mut out = sym.apply(sample);
    for v in &mut out.data[..SITES] {
        *v *= scale;
    }
    out
}
