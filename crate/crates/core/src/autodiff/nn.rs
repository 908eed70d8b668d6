//! Small layer helpers that register parameters in a [`ParamStore`].

use rand::Rng;

use super::{AutodiffError, Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// He-uniform weights, zero bias.
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Result<Self, AutodiffError> {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let w = (0..fan_in * fan_out).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound).collect();
        let w = store.add(&format!("{name}.w"), Tensor::matrix(fan_in, fan_out, w)?)?;
        let b = store.add(&format!("{name}.b"), Tensor::zeros(1, fan_out))?;
        Ok(Self { w, b, fan_in, fan_out })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, AutodiffError> {
        let w = g.param(store, self.w)?;
        let b = g.param(store, self.b)?;
        g.linear(x, w, b)
    }

    /// Scales the weight matrix in place, e.g. to start a head near zero.
    pub fn shrink(&self, store: &mut ParamStore, factor: f64) {
        store.value_mut(self.w).data_mut().iter_mut().for_each(|x| *x *= factor);
    }
}

/// Linear layers with ReLU between them and no activation after the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut impl Rng) -> Result<Self, AutodiffError> {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Linear::new(store, &format!("{name}.{i}"), d[0], d[1], rng))
            .collect::<Result<_, _>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, mut x: Var) -> Result<Var, AutodiffError> {
        let last = self.layers.len().saturating_sub(1);
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(g, store, x)?;
            if i < last {
                x = g.relu(x)?;
            }
        }
        Ok(x)
    }

    pub fn last(&self) -> &Linear {
        self.layers.last().expect("mlp has a layer")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn mlp_shapes_and_names() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "head", &[3, 8, 2], &mut rng).unwrap();
        assert_eq!(store.len(), 4);
        assert!(store.id("head.1.b").is_some());
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(5, 3)).unwrap();
        let y = mlp.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.shape(y), (5, 2));
    }
}
