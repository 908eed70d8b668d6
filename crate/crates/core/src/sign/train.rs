use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::labels::{class_of, pair_relations, to_bits, SIGN_CLASSES};
use super::{Head, SignConfig, SignDataset, SignError, SignNet};
use crate::autodiff::{cosine_lr, AutodiffError, Graph, Tensor, Var};
use crate::field::{augment_with, CubeSample};

#[derive(Debug, Clone)]
pub struct SignTrainOutput {
    pub net: SignNet,
    /// Batch loss per step.
    pub history: Vec<f64>,
}

fn bce_rows(g: &mut Graph, z: Var, y: Tensor) -> Result<Var, AutodiffError> {
    let y = g.constant(y)?;
    let sp = g.softplus(z)?;
    let yz = g.mul(y, z)?;
    let l = g.sub(sp, yz)?;
    g.sum_rows(l)
}

/// Mean over the batch of the head's loss on logits `z`.
fn batch_loss(g: &mut Graph, head: Head, z: Var, labels: &[[u8; 8]]) -> Result<Var, AutodiffError> {
    let b = labels.len();
    match head {
        Head::L1 => {
            let y: Vec<f64> = labels.iter().flat_map(|l| l.map(f64::from)).collect();
            let yf: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
            let a = bce_rows(g, z, Tensor::matrix(b, 8, y)?)?;
            let c = bce_rows(g, z, Tensor::matrix(b, 8, yf)?)?;
            let m = g.minimum(a, c)?;
            g.mean_all(m)
        }
        Head::L2 => {
            let r: Vec<f64> = labels.iter().flat_map(|l| pair_relations(l).map(f64::from)).collect();
            let a = bce_rows(g, z, Tensor::matrix(b, 28, r)?)?;
            g.mean_all(a)
        }
        Head::L3 => {
            let mut onehot = vec![0.0; b * SIGN_CLASSES];
            for (i, l) in labels.iter().enumerate() {
                onehot[i * SIGN_CLASSES + class_of(l)] = 1.0;
            }
            let ls = g.log_softmax_rows(z)?;
            let oh = g.constant(Tensor::matrix(b, SIGN_CLASSES, onehot)?)?;
            let picked = g.mul(ls, oh)?;
            let s = g.sum_all(picked)?;
            g.scale(s, -1.0 / b as f64)
        }
    }
}

pub fn train_sign_net(dataset: &SignDataset, config: &SignConfig) -> Result<SignTrainOutput, SignError> {
    train_sign_net_with(dataset, config, &mut |_, _| {})
}

/// Adam with a cosine schedule; every batch is freshly augmented.
pub fn train_sign_net_with(dataset: &SignDataset, config: &SignConfig, progress: &mut dyn FnMut(usize, f64)) -> Result<SignTrainOutput, SignError> {
    if dataset.is_empty() {
        return Err(SignError::EmptyDataset);
    }
    if dataset.samples.iter().any(|s| s.labels.is_none()) {
        return Err(SignError::ShapeMismatch("unlabelled sample in training set".into()));
    }
    let mut net = SignNet::new(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5157_0000);
    let b = config.batch.min(dataset.len());
    let mut history = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let picks = sample(&mut rng, dataset.len(), b).into_vec();
        let batch: Vec<CubeSample> = picks.iter().map(|&i| augment_with(&dataset.samples[i], &mut rng)).collect();
        let labels: Vec<[u8; 8]> = batch.iter().map(|s| to_bits(&s.labels.expect("labelled"))).collect();
        let refs: Vec<&CubeSample> = batch.iter().collect();
        let diverged = |e: AutodiffError| match e {
            AutodiffError::NonFinite(_) => SignError::Divergence { step },
            other => other.into(),
        };
        let mut g = Graph::new();
        let z = net.forward_graph(&mut g, &refs).map_err(diverged)?;
        let loss = batch_loss(&mut g, config.head, z, &labels).map_err(diverged)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(SignError::Divergence { step });
        }
        let grads = g.gradients(loss, &net.store).map_err(diverged)?;
        net.store.adam_step(&grads, cosine_lr(step, config.steps, config.lr)).map_err(diverged)?;
        progress(step, value);
        history.push(value);
    }
    Ok(SignTrainOutput { net, history })
}
