use std::collections::HashMap;

use super::{AutodiffError, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Gradients aligned with [`ParamStore`] insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Gradients {
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.0 {
            t.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// Named parameters plus their Adam moments.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId, AutodiffError> {
        if self.index.contains_key(name) {
            return Err(AutodiffError::DuplicateParam(name.to_string()));
        }
        let id = self.values.len();
        self.index.insert(name.to_string(), id);
        self.names.push(name.to_string());
        self.m.push(Tensor::zeros_like(&value));
        self.v.push(Tensor::zeros_like(&value));
        self.values.push(value);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> Vec<ParamId> {
        (0..self.values.len()).map(ParamId).collect()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn param_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients(self.values.iter().map(Tensor::zeros_like).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Overwrites values from `(name, tensor)` pairs. Every stored parameter
    /// must appear exactly once with an identical shape.
    pub fn load_values(&mut self, entries: Vec<(String, Tensor)>) -> Result<(), AutodiffError> {
        if entries.len() != self.values.len() {
            return Err(AutodiffError::Checkpoint(format!("expected {} parameters, found {}", self.values.len(), entries.len())));
        }
        let mut seen = vec![false; self.values.len()];
        for (name, t) in entries {
            let id = *self.index.get(&name).ok_or_else(|| AutodiffError::UnknownParam(name.clone()))?;
            if self.values[id].shape() != t.shape() {
                return Err(AutodiffError::ShapeMismatch(format!(
                    "{name}: model {:?}, checkpoint {:?}",
                    self.values[id].shape(),
                    t.shape()
                )));
            }
            if seen[id] {
                return Err(AutodiffError::DuplicateParam(name));
            }
            seen[id] = true;
            self.values[id] = t;
        }
        Ok(())
    }

    /// One bias-corrected Adam update.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64) -> Result<(), AutodiffError> {
        if grads.0.len() != self.values.len() {
            return Err(AutodiffError::ShapeMismatch(format!("{} gradients for {} parameters", grads.0.len(), self.values.len())));
        }
        for (g, p) in grads.0.iter().zip(&self.values) {
            if g.shape() != p.shape() {
                return Err(AutodiffError::ShapeMismatch(format!("gradient {:?} for parameter {:?}", g.shape(), p.shape())));
            }
            if !g.is_finite() {
                return Err(AutodiffError::NonFinite("adam_step"));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - ADAM_BETA1.powf(t);
        let c2 = 1.0 - ADAM_BETA2.powf(t);
        for i in 0..self.values.len() {
            let (g, m, v, p) = (grads.0[i].data(), self.m[i].data_mut(), self.v[i].data_mut(), self.values[i].data_mut());
            for j in 0..g.len() {
                m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
                v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= lr * mh / (vh.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

/// `lr0·½(1 + cos(π·step/total))`, clamped to the schedule's range.
pub fn cosine_lr(step: usize, total: usize, lr0: f64) -> f64 {
    if total == 0 {
        return lr0;
    }
    let s = step.min(total) as f64 / total as f64;
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * s).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(v: Vec<f64>) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let n = v.len();
        let id = s.add("p", Tensor::matrix(1, n, v).unwrap()).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut s, id) = store_with(vec![1.0, -2.0]);
        let g = s.zero_grads();
        s.adam_step(&g, 0.1).unwrap();
        assert_eq!(s.value(id).data(), &[1.0, -2.0]);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn constant_gradient_update_tends_to_lr() {
        let (mut s, id) = store_with(vec![0.0]);
        let g = Gradients(vec![Tensor::matrix(1, 1, vec![0.37]).unwrap()]);
        let lr = 1e-3;
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = s.value(id).data()[0];
            s.adam_step(&g, lr).unwrap();
            last = before - s.value(id).data()[0];
        }
        // Bias-corrected moments give m̂ = g and v̂ = g², so the step is lr·g/(|g|+ε).
        let expected = lr * 0.37 / (0.37 + ADAM_EPS);
        assert!((last - expected).abs() < 1e-12, "{last} vs {expected}");
    }

    #[test]
    fn step_count_increments_by_one() {
        let (mut s, _) = store_with(vec![0.0]);
        let g = Gradients(vec![Tensor::matrix(1, 1, vec![1.0]).unwrap()]);
        for k in 1..=3 {
            s.adam_step(&g, 0.01).unwrap();
            assert_eq!(s.step(), k);
        }
    }

    #[test]
    fn misaligned_gradients_are_rejected() {
        let (mut s, _) = store_with(vec![0.0, 1.0]);
        let g = Gradients(vec![Tensor::matrix(1, 1, vec![1.0]).unwrap()]);
        assert!(matches!(s.adam_step(&g, 0.01), Err(AutodiffError::ShapeMismatch(_))));
        assert!(matches!(s.adam_step(&Gradients(vec![]), 0.01), Err(AutodiffError::ShapeMismatch(_))));
    }

    #[test]
    fn cosine_schedule_points() {
        assert_eq!(cosine_lr(0, 100, 0.001), 0.001);
        assert!(cosine_lr(100, 100, 0.001).abs() < 1e-18);
        assert!((cosine_lr(50, 100, 0.001) - 0.0005).abs() < 1e-15);
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let (mut s, _) = store_with(vec![0.0]);
        assert!(matches!(s.add("p", Tensor::scalar(1.0)), Err(AutodiffError::DuplicateParam(_))));
    }
}
