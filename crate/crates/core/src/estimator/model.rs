use std::path::Path;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backbone::OFFSET_SCALE;
use super::{Backbone, EstimatorConfig, EstimatorError, PointContext, StageMode};
use crate::autodiff::nn::Mlp;
use crate::autodiff::{load_checkpoint, save_checkpoint, AutodiffError, Graph, ParamStore, Tensor, Var};
use crate::geom::{vec3, Vec3};

/// Bound on each component of the stage-2 refinement.
pub const REFINE_SCALE: f64 = 0.01;

const EVAL_CHUNK: usize = 4096;

/// Stage-1 plane projection `(1/k)·Σ ⟨p_x − q, a_x⟩·a_x`.
///
/// Flipping the sign of any `a_x` negates both factors of its term, so the
/// result is bit-for-bit unchanged.
pub fn stage1_project(q: Vec3, neighbors: &[Vec3], approach: &[Vec3]) -> Vec3 {
    let mut s = [0.0; 3];
    for (p, a) in neighbors.iter().zip(approach) {
        let d = vec3::sub(*p, q);
        let t = d[0] * a[0] + d[1] * a[1] + d[2] * a[2];
        for c in 0..3 {
            s[c] += a[c] * t;
        }
    }
    vec3::scale(s, 1.0 / neighbors.len().max(1) as f64)
}

/// Per-query displacements. `udf = ‖s1 + s2‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionFlow {
    pub s1: Vec<Vec3>,
    pub s2: Vec<Vec3>,
}

impl ProjectionFlow {
    pub fn len(&self) -> usize {
        self.s1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s1.is_empty()
    }

    pub fn flow(&self, i: usize) -> Vec3 {
        vec3::add(self.s1[i], self.s2[i])
    }

    pub fn udf(&self, i: usize) -> f64 {
        vec3::norm(self.flow(i))
    }

    /// `−flow/‖flow‖`, pointing away from the surface; zero where the flow is.
    pub fn gradient(&self, i: usize) -> Vec3 {
        vec3::scale(vec3::normalize_or_zero(self.flow(i)), -1.0)
    }

    pub fn projected(&self, queries: &[Vec3]) -> Vec<Vec3> {
        queries.iter().enumerate().map(|(i, &q)| vec3::add(q, self.flow(i))).collect()
    }
}

/// Graph handles of one projection pass.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionVars {
    pub s1: Var,
    pub s2: Option<Var>,
    pub flow: Var,
}

/// Weight-dependent per-point state of one cloud, detached from any graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub features: Tensor,
    pub approach: Tensor,
}

impl Encoding {
    pub fn approach_vectors(&self) -> Vec<Vec3> {
        self.approach.data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
    }
}

/// The projection-flow network and its parameters.
#[derive(Debug, Clone)]
pub struct Estimator {
    pub config: EstimatorConfig,
    pub store: ParamStore,
    backbone: Backbone,
    mlp_a: Mlp,
    mlp_f: Mlp,
    mlp_d: Mlp,
}

fn knn_rows(ctx: &PointContext, pts: &Tensor, k: usize) -> (Rc<[usize]>, Rc<[usize]>, Vec<f64>) {
    let n = pts.rows();
    let k = k.min(ctx.len());
    let mut nbr = Vec::with_capacity(n * k);
    let mut rep = Vec::with_capacity(n * k);
    let mut coords = Vec::with_capacity(n * k * 3);
    for i in 0..n {
        let r = pts.row(i);
        for j in ctx.index.knn([r[0], r[1], r[2]], k) {
            nbr.push(j);
            rep.push(i);
            coords.extend_from_slice(&ctx.points[j]);
        }
    }
    (nbr.into(), rep.into(), coords)
}

impl Estimator {
    pub fn new(config: EstimatorConfig) -> Result<Self, EstimatorError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5555);
        let mut store = ParamStore::new();
        let backbone = Backbone::new(&mut store, &config.widths, config.pos_hidden, &mut rng)?;
        let f = backbone.out_width();
        let hh = config.head_hidden;
        let mlp_a = Mlp::new(&mut store, "approach", &[f, hh, 3], &mut rng)?;
        let mlp_f = Mlp::new(&mut store, "interp", &[3, hh, f], &mut rng)?;
        let mlp_d = Mlp::new(&mut store, "refine", &[f, hh, 3], &mut rng)?;
        mlp_d.last().shrink(&mut store, 0.1);
        Ok(Self { config, store, backbone, mlp_a, mlp_f, mlp_d })
    }

    pub fn feature_width(&self) -> usize {
        self.backbone.out_width()
    }

    pub fn context(&self, pc: &crate::geom::PointCloud) -> Result<PointContext, EstimatorError> {
        PointContext::new(pc, self.config.k_backbone, self.config.k_normal)
    }

    /// Backbone features and unit approaching vectors as graph nodes.
    pub fn encode_graph(&self, g: &mut Graph, ctx: &PointContext) -> Result<(Var, Var), AutodiffError> {
        let f = self.backbone.forward(g, &self.store, ctx)?;
        let a = self.mlp_a.forward(g, &self.store, f)?;
        let a = g.normalize_rows(a)?;
        Ok((f, a))
    }

    pub fn encode(&self, ctx: &PointContext) -> Result<Encoding, EstimatorError> {
        let mut g = Graph::new();
        let (f, a) = self.encode_graph(&mut g, ctx)?;
        Ok(Encoding { features: g.value(f).clone(), approach: g.value(a).clone() })
    }

    fn stage1_graph(&self, g: &mut Graph, ctx: &PointContext, approach: Var, queries: Var) -> Result<Var, AutodiffError> {
        let (nbr, rep, coords) = knn_rows(ctx, g.value(queries), self.config.k_stage1);
        let k = nbr.len() / g.shape(queries).0.max(1);
        let p = g.constant(Tensor::matrix(nbr.len(), 3, coords)?)?;
        let q = g.gather_rows(queries, rep)?;
        let a = g.gather_rows(approach, nbr)?;
        let d = g.sub(p, q)?;
        let t = g.mul(d, a)?;
        let t = g.sum_rows(t)?;
        let s = g.mul_col(a, t)?;
        let s = g.sum_groups(s, k.max(1))?;
        g.scale(s, 1.0 / k.max(1) as f64)
    }

    /// Interpolated feature `Σ MLPᶠ(p_x − q̂) ∘ f_x` over the neighbours of `q̂`.
    pub fn interpolate_graph(&self, g: &mut Graph, ctx: &PointContext, features: Var, qhat: Var) -> Result<Var, AutodiffError> {
        let (nbr, rep, coords) = knn_rows(ctx, g.value(qhat), self.config.k_stage1);
        let k = nbr.len() / g.shape(qhat).0.max(1);
        let p = g.constant(Tensor::matrix(nbr.len(), 3, coords)?)?;
        let q = g.gather_rows(qhat, rep)?;
        let d = g.sub(p, q)?;
        let d = g.scale(d, OFFSET_SCALE)?;
        let gate = self.mlp_f.forward(g, &self.store, d)?;
        let fx = g.gather_rows(features, nbr)?;
        let prod = g.mul(gate, fx)?;
        g.sum_groups(prod, k.max(1))
    }

    /// `β·tanh(MLPᵈ(f))`.
    pub fn refine_graph(&self, g: &mut Graph, fq: Var) -> Result<Var, AutodiffError> {
        let d = self.mlp_d.forward(g, &self.store, fq)?;
        let t = g.tanh(d)?;
        g.scale(t, REFINE_SCALE)
    }

    pub fn project_graph(&self, g: &mut Graph, ctx: &PointContext, features: Var, approach: Var, queries: Var) -> Result<ProjectionVars, AutodiffError> {
        let s1 = self.stage1_graph(g, ctx, approach, queries)?;
        match self.config.stage {
            StageMode::S1 => Ok(ProjectionVars { s1, s2: None, flow: s1 }),
            StageMode::S1Twice => {
                let qhat = g.add(queries, s1)?;
                let again = self.stage1_graph(g, ctx, approach, qhat)?;
                let total = g.add(s1, again)?;
                Ok(ProjectionVars { s1: total, s2: None, flow: total })
            }
            StageMode::Full => {
                let qhat = g.add(queries, s1)?;
                let fq = self.interpolate_graph(g, ctx, features, qhat)?;
                let s2 = self.refine_graph(g, fq)?;
                let flow = g.add(s1, s2)?;
                Ok(ProjectionVars { s1, s2: Some(s2), flow })
            }
        }
    }

    /// Forward-only evaluation of the flow at arbitrary queries.
    pub fn evaluate(&self, ctx: &PointContext, enc: &Encoding, queries: &[Vec3]) -> Result<ProjectionFlow, EstimatorError> {
        let mut s1 = Vec::with_capacity(queries.len());
        let mut s2 = Vec::with_capacity(queries.len());
        for chunk in queries.chunks(EVAL_CHUNK) {
            let mut g = Graph::new();
            let f = g.constant(enc.features.clone())?;
            let a = g.constant(enc.approach.clone())?;
            let q = g.constant(Tensor::from_rows(chunk))?;
            let pv = self.project_graph(&mut g, ctx, f, a, q)?;
            let v1 = g.value(pv.s1).data();
            s1.extend(v1.chunks(3).map(|c| [c[0], c[1], c[2]]));
            match pv.s2 {
                Some(v) => s2.extend(g.value(v).data().chunks(3).map(|c| [c[0], c[1], c[2]])),
                None => s2.extend(std::iter::repeat_n([0.0; 3], chunk.len())),
            }
        }
        Ok(ProjectionFlow { s1, s2 })
    }

    /// Flow plus the unit gradient of the predicted UDF `‖flow(q)‖` with
    /// respect to `q`, neighbour sets held fixed. Zero where undefined.
    pub fn evaluate_with_gradients(&self, ctx: &PointContext, enc: &Encoding, queries: &[Vec3]) -> Result<(ProjectionFlow, Vec<Vec3>), EstimatorError> {
        let mut s1 = Vec::with_capacity(queries.len());
        let mut s2 = Vec::with_capacity(queries.len());
        let mut grad = Vec::with_capacity(queries.len());
        for chunk in queries.chunks(EVAL_CHUNK) {
            let mut g = Graph::new();
            let f = g.constant(enc.features.clone())?;
            let a = g.constant(enc.approach.clone())?;
            let q = g.constant(Tensor::from_rows(chunk))?;
            let pv = self.project_graph(&mut g, ctx, f, a, q)?;
            let u = g.l2norm_rows(pv.flow)?;
            let total = g.sum_all(u)?;
            g.backward(total)?;
            s1.extend(g.value(pv.s1).data().chunks(3).map(|c| [c[0], c[1], c[2]]));
            match pv.s2 {
                Some(v) => s2.extend(g.value(v).data().chunks(3).map(|c| [c[0], c[1], c[2]])),
                None => s2.extend(std::iter::repeat_n([0.0; 3], chunk.len())),
            }
            match g.adjoint(q) {
                Some(d) => grad.extend(d.data().chunks(3).map(|c| {
                    let v = [c[0], c[1], c[2]];
                    if v.iter().all(|x| x.is_finite()) { vec3::normalize_or_zero(v) } else { [0.0; 3] }
                })),
                None => grad.extend(std::iter::repeat_n([0.0; 3], chunk.len())),
            }
        }
        Ok((ProjectionFlow { s1, s2 }, grad))
    }

    pub fn save(&self, path: &Path) -> Result<(), EstimatorError> {
        Ok(save_checkpoint(&self.store, path)?)
    }

    /// Builds the architecture described by `config` and loads weights into it.
    pub fn load(config: EstimatorConfig, path: &Path) -> Result<Self, EstimatorError> {
        let mut e = Self::new(config)?;
        load_checkpoint(&mut e.store, path)?;
        Ok(e)
    }
}
