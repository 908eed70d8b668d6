use std::rc::Rc;

use super::{EstimatorError, LossWeights};
use crate::autodiff::{AutodiffError, Graph, Tensor, Var};
use crate::geom::{vec3, KnnIndex, Vec3};

/// `q + 0.5·flow`, the point halfway to the estimated surface.
pub fn offset_point(q: Vec3, flow: Vec3) -> Result<Vec3, EstimatorError> {
    if flow == [0.0; 3] {
        return Err(EstimatorError::ZeroFlow);
    }
    Ok(vec3::add(q, vec3::scale(flow, 0.5)))
}

fn rows3(t: &Tensor) -> Vec<Vec3> {
    t.data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
}

/// Chamfer-L1 between fixed `targets` and the projected points. Nearest
/// neighbours are matched on current values and held fixed for the gradient.
pub fn chamfer_loss(g: &mut Graph, targets: &[Vec3], projected: Var) -> Result<Var, AutodiffError> {
    let index = KnnIndex::new(targets);
    chamfer_loss_to_cloud(g, targets, targets, &index, projected)
}

/// As [`chamfer_loss`], but projections are matched against the whole cloud
/// (`cloud`, indexed by `index`) while `targets` is the sampled subset.
pub fn chamfer_loss_to_cloud(g: &mut Graph, targets: &[Vec3], cloud: &[Vec3], index: &KnnIndex, projected: Var) -> Result<Var, AutodiffError> {
    let proj = rows3(g.value(projected));
    if targets.is_empty() || proj.is_empty() || cloud.is_empty() {
        return Err(AutodiffError::ShapeMismatch("chamfer of an empty set".into()));
    }
    let ip = KnnIndex::new(&proj);
    let to_proj: Rc<[usize]> = targets.iter().map(|&t| ip.nearest(t).unwrap().0).collect();
    let to_target: Vec<Vec3> = proj.iter().map(|&p| cloud[index.nearest(p).unwrap().0]).collect();
    let t = g.constant(Tensor::from_rows(targets))?;
    let matched = g.gather_rows(projected, to_proj)?;
    let d1 = g.sub(t, matched)?;
    let d1 = g.abs(d1)?;
    let a = g.sum_all(d1)?;
    let a = g.scale(a, 0.5 / targets.len() as f64)?;
    let nt = g.constant(Tensor::from_rows(&to_target))?;
    let d2 = g.sub(projected, nt)?;
    let d2 = g.abs(d2)?;
    let b = g.sum_all(d2)?;
    let b = g.scale(b, 0.5 / proj.len() as f64)?;
    g.add(a, b)
}

/// Mean UDF over the given flows.
pub fn intra_loss(g: &mut Graph, flow: Var) -> Result<Var, AutodiffError> {
    let u = g.l2norm_rows(flow)?;
    g.mean_all(u)
}

/// `mean |0.5·UDF(q) − UDF(q′)| + ‖flow(q) − 2·flow(q′)‖`.
///
/// The second term asks the flow at the offset point to keep the direction of
/// the flow at `q` with half its length; both terms vanish on a linear field.
pub fn inter_loss(g: &mut Graph, flow_q: Var, flow_offset: Var) -> Result<Var, AutodiffError> {
    let u = g.l2norm_rows(flow_q)?;
    let u2 = g.l2norm_rows(flow_offset)?;
    let half = g.scale(u, 0.5)?;
    let t1 = g.sub(half, u2)?;
    let t1 = g.abs(t1)?;
    let twice = g.scale(flow_offset, 2.0)?;
    let dd = g.sub(flow_q, twice)?;
    let t2 = g.l2norm_rows(dd)?;
    let s = g.add(t1, t2)?;
    g.mean_all(s)
}

#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub chamfer: Var,
    pub intra: Var,
    /// Absent when the inter-consistency term is disabled.
    pub inter: Option<Var>,
}

pub fn total_loss(g: &mut Graph, parts: LossParts, w: LossWeights) -> Result<Var, AutodiffError> {
    let c = g.scale(parts.chamfer, w.w_chamfer)?;
    let i = g.scale(parts.intra, w.w_intra)?;
    let mut t = g.add(c, i)?;
    if let Some(e) = parts.inter {
        let e = g.scale(e, w.w_inter)?;
        t = g.add(t, e)?;
    }
    Ok(t)
}
