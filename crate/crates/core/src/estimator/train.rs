use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{chamfer_loss_to_cloud, inter_loss, intra_loss, total_loss, upsample, Estimator, EstimatorConfig, EstimatorError, LossParts, PointContext, UpsampleSet};
use crate::autodiff::{cosine_lr, AutodiffError, Gradients, Graph, Tensor};
use crate::geom::{vec3, PointCloud, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRecord {
    pub step: usize,
    pub lr: f64,
    pub chamfer: f64,
    pub intra: f64,
    pub inter: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub estimator: Estimator,
    pub history: Vec<LossRecord>,
}

pub fn write_history_csv(history: &[LossRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "step,lr,L_chamfer,L_intra,L_inter,total")?;
    for r in history {
        writeln!(w, "{},{},{},{},{},{}", r.step, r.lr, r.chamfer, r.intra, r.inter, r.total)?;
    }
    Ok(())
}

struct Shape {
    ctx: PointContext,
    ups: UpsampleSet,
}

impl Shape {
    fn new(est: &Estimator, pc: &PointCloud, seed: u64) -> Result<Self, EstimatorError> {
        let ctx = est.context(pc)?;
        let ups = upsample(pc, est.config.m, est.config.delta, seed)?;
        Ok(Self { ctx, ups })
    }
}

/// One batch loss on one shape; returns gradients and `[chamfer, intra, inter, total]`.
fn shape_step(est: &Estimator, shape: &Shape, rng: &mut ChaCha8Rng) -> Result<(Gradients, [f64; 4]), AutodiffError> {
    let n = shape.ctx.len();
    let b = est.config.batch.min(n);
    let m = shape.ups.m;
    let mut sources = sample(rng, n, b).into_vec();
    sources.sort_unstable();
    let per = est.config.queries_per_source.min(m);
    let mut queries = Vec::with_capacity(b * per);
    for &s in &sources {
        for j in sample(rng, m, per) {
            queries.push(shape.ups.queries[s * m + j]);
        }
    }
    let targets: Vec<Vec3> = sources.iter().map(|&s| shape.ctx.points[s]).collect();

    let mut g = Graph::new();
    let (f, a) = est.encode_graph(&mut g, &shape.ctx)?;
    let q = g.constant(Tensor::from_rows(&queries))?;
    let pv = est.project_graph(&mut g, &shape.ctx, f, a, q)?;
    let projected = g.add(q, pv.flow)?;
    let chamfer = chamfer_loss_to_cloud(&mut g, &targets, &shape.ctx.points, &shape.ctx.index, projected)?;
    let p = g.constant(Tensor::from_rows(&targets))?;
    let pin = est.project_graph(&mut g, &shape.ctx, f, a, p)?;
    let intra = intra_loss(&mut g, pin.flow)?;
    let w = est.config.weights;
    let inter = if w.w_inter > 0.0 {
        let valid: Vec<usize> = g.value(pv.flow).data().chunks(3).enumerate().filter(|(_, c)| c.iter().any(|&x| x != 0.0)).map(|(i, _)| i).collect();
        if valid.is_empty() {
            None
        } else {
            let valid: std::rc::Rc<[usize]> = valid.into();
            let fq = g.gather_rows(pv.flow, valid.clone())?;
            let qv = g.gather_rows(q, valid)?;
            let half = g.scale(fq, 0.5)?;
            let q2 = g.add(qv, half)?;
            let pv2 = est.project_graph(&mut g, &shape.ctx, f, a, q2)?;
            Some(inter_loss(&mut g, fq, pv2.flow)?)
        }
    } else {
        None
    };
    let total = total_loss(&mut g, LossParts { chamfer, intra, inter }, w)?;
    let vals = [g.value(chamfer).item(), g.value(intra).item(), inter.map_or(0.0, |v| g.value(v).item()), g.value(total).item()];
    let grads = g.gradients(total, &est.store)?;
    Ok((grads, vals))
}

fn diverged(step: usize) -> impl Fn(AutodiffError) -> EstimatorError {
    move |e| match e {
        AutodiffError::NonFinite(_) => EstimatorError::Divergence { step },
        other => other.into(),
    }
}

fn run(mut est: Estimator, shapes: &[Shape], progress: &mut dyn FnMut(&LossRecord)) -> Result<TrainOutput, EstimatorError> {
    let cfg = est.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA5A5_0000);
    let mut history = Vec::with_capacity(cfg.steps);
    let per_step = cfg.shapes_per_step.min(shapes.len());
    for step in 0..cfg.steps {
        let lr = cosine_lr(step, cfg.steps, cfg.lr);
        let picks: Vec<usize> = if shapes.len() == 1 { vec![0] } else { sample(&mut rng, shapes.len(), per_step).into_vec() };
        let mut grads = est.store.zero_grads();
        let mut vals = [0.0; 4];
        for &s in &picks {
            let (gs, v) = shape_step(&est, &shapes[s], &mut rng).map_err(diverged(step))?;
            grads.add_assign(&gs);
            for (acc, x) in vals.iter_mut().zip(v) {
                *acc += x / picks.len() as f64;
            }
        }
        if !vals[3].is_finite() {
            return Err(EstimatorError::Divergence { step });
        }
        grads.scale(1.0 / picks.len() as f64);
        est.store.adam_step(&grads, lr).map_err(diverged(step))?;
        let rec = LossRecord { step, lr, chamfer: vals[0], intra: vals[1], inter: vals[2], total: vals[3] };
        progress(&rec);
        history.push(rec);
    }
    Ok(TrainOutput { estimator: est, history })
}

/// Fits the estimator to a single normalized cloud.
pub fn train_per_shape(pc: &PointCloud, config: &EstimatorConfig) -> Result<TrainOutput, EstimatorError> {
    train_per_shape_with(pc, config, &mut |_| {})
}

pub fn train_per_shape_with(pc: &PointCloud, config: &EstimatorConfig, progress: &mut dyn FnMut(&LossRecord)) -> Result<TrainOutput, EstimatorError> {
    let est = Estimator::new(config.clone())?;
    let shape = Shape::new(&est, pc, config.seed)?;
    run(est, &[shape], progress)
}

/// Learns one weight set over several clouds; inference on a new cloud is a
/// forward pass.
pub fn train_prior(dataset: &[PointCloud], config: &EstimatorConfig) -> Result<TrainOutput, EstimatorError> {
    train_prior_with(dataset, config, &mut |_| {})
}

pub fn train_prior_with(dataset: &[PointCloud], config: &EstimatorConfig, progress: &mut dyn FnMut(&LossRecord)) -> Result<TrainOutput, EstimatorError> {
    if dataset.len() < 2 {
        return Err(EstimatorError::EmptyDataset(dataset.len()));
    }
    let est = Estimator::new(config.clone())?;
    let shapes = dataset
        .iter()
        .enumerate()
        .map(|(i, pc)| Shape::new(&est, pc, config.seed.wrapping_add(i as u64 * 7919)))
        .collect::<Result<Vec<_>, _>>()?;
    run(est, &shapes, progress)
}

/// Mean `|⟨a_x, n_x⟩|` between approaching vectors and reference normals.
pub fn approach_alignment(approach: &[Vec3], normals: &[Vec3]) -> f64 {
    approach.iter().zip(normals).map(|(a, n)| vec3::dot(*a, *n).abs()).sum::<f64>() / approach.len().max(1) as f64
}
