use std::rc::Rc;

use rand::Rng;

use super::EstimatorError;
use crate::autodiff::nn::Linear;
use crate::autodiff::{AutodiffError, Graph, ParamStore, Tensor, Var};
use crate::geom::{orient_normals, pca_normal, surface_variation, vec3, KnnIndex, PointCloud, Vec3};

/// Per-point input channels: oriented PCA normal (3) and surface variation.
pub const INPUT_FEATURES: usize = 4;

/// Relative offsets are a few hundredths in unit-cube coordinates; this brings
/// them to order one before they enter a perceptron.
pub(crate) const OFFSET_SCALE: f64 = 20.0;

/// Everything about an input cloud that does not depend on the weights.
#[derive(Debug, Clone)]
pub struct PointContext {
    pub points: Vec<Vec3>,
    pub index: KnnIndex,
    /// `k` neighbour indices per point, nearest first, flattened.
    pub nbr: Rc<[usize]>,
    pub k: usize,
    /// Scaled offsets `p_j − p_i`, one row per neighbour pair.
    pub rel: Tensor,
    /// `[N, INPUT_FEATURES]` input channels.
    pub input: Tensor,
}

impl PointContext {
    pub fn new(pc: &PointCloud, k_backbone: usize, k_normal: usize) -> Result<Self, EstimatorError> {
        if pc.is_empty() {
            return Err(EstimatorError::EmptyCloud);
        }
        let index = KnnIndex::new(&pc.points);
        let k = k_backbone.min(pc.len());
        let mut nbr = Vec::with_capacity(pc.len() * k);
        let mut rel = Vec::with_capacity(pc.len() * k * 3);
        for &p in &pc.points {
            for j in index.knn(p, k) {
                nbr.push(j);
                let d = vec3::sub(pc.points[j], p);
                rel.extend(d.iter().map(|x| x * OFFSET_SCALE));
            }
        }
        let kn = k_normal.clamp(3, pc.len().max(3));
        let raw = pca_normal(pc, &index, kn)?;
        let normals = orient_normals(&index, &raw.normals, kn.min(8));
        let variation = surface_variation(&index, kn);
        let mut input = Vec::with_capacity(pc.len() * INPUT_FEATURES);
        for (n, v) in normals.iter().zip(&variation) {
            input.extend_from_slice(n);
            input.push(3.0 * v);
        }
        Ok(Self {
            points: pc.points.clone(),
            index,
            nbr: nbr.into(),
            k,
            rel: Tensor::matrix(pc.len() * k, 3, rel)?,
            input: Tensor::matrix(pc.len(), INPUT_FEATURES, input)?,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Layer {
    q: Linear,
    k: Linear,
    v: Linear,
    pos: Linear,
    out: Linear,
    skip: Linear,
}

/// Stack of local vector-attention layers over fixed k-neighbourhoods.
///
/// Layer `l` maps `x` to `skip(x) + relu(out(attn))` where `attn` attends
/// from each point to its neighbours with keys and values shifted by a
/// learned encoding of the relative position.
#[derive(Debug, Clone)]
pub struct Backbone {
    pos_in: Linear,
    layers: Vec<Layer>,
    pub widths: Vec<usize>,
}

impl Backbone {
    pub fn new(store: &mut ParamStore, widths: &[usize], pos_hidden: usize, rng: &mut impl Rng) -> Result<Self, AutodiffError> {
        let pos_in = Linear::new(store, "backbone.pos_in", 3, pos_hidden, rng)?;
        let mut layers = Vec::with_capacity(widths.len());
        let mut d_in = INPUT_FEATURES;
        for (l, &d) in widths.iter().enumerate() {
            let p = format!("backbone.{l}");
            layers.push(Layer {
                q: Linear::new(store, &format!("{p}.q"), d_in, d, rng)?,
                k: Linear::new(store, &format!("{p}.k"), d_in, d, rng)?,
                v: Linear::new(store, &format!("{p}.v"), d_in, d, rng)?,
                pos: Linear::new(store, &format!("{p}.pos"), pos_hidden, d, rng)?,
                out: Linear::new(store, &format!("{p}.out"), d, d, rng)?,
                skip: Linear::new(store, &format!("{p}.skip"), d_in, d, rng)?,
            });
            d_in = d;
        }
        Ok(Self { pos_in, layers, widths: widths.to_vec() })
    }

    pub fn out_width(&self) -> usize {
        *self.widths.last().unwrap_or(&INPUT_FEATURES)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, ctx: &PointContext) -> Result<Var, AutodiffError> {
        let rel = g.constant(ctx.rel.clone())?;
        let h = self.pos_in.forward(g, store, rel)?;
        let h = g.relu(h)?;
        let mut x = g.constant(ctx.input.clone())?;
        for layer in &self.layers {
            let q = layer.q.forward(g, store, x)?;
            let k = layer.k.forward(g, store, x)?;
            let v = layer.v.forward(g, store, x)?;
            let delta = layer.pos.forward(g, store, h)?;
            let d = g.shape(q).1;
            let att = g.local_attention(q, k, v, delta, ctx.nbr.clone(), ctx.k, 1.0 / (d as f64).sqrt())?;
            let o = layer.out.forward(g, store, att)?;
            let o = g.relu(o)?;
            let s = layer.skip.forward(g, store, x)?;
            x = g.add(s, o)?;
        }
        Ok(x)
    }
}
