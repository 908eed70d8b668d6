use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EstimatorError;
use crate::geom::{PointCloud, Vec3};

/// `m` jittered copies of every input point, stored source-major: query
/// `i·m + c` is copy `c` of point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsampleSet {
    pub queries: Vec<Vec3>,
    pub source: Vec<usize>,
    pub m: usize,
    pub delta: f64,
}

pub fn upsample(pc: &PointCloud, m: usize, delta: f64, seed: u64) -> Result<UpsampleSet, EstimatorError> {
    if pc.is_empty() {
        return Err(EstimatorError::EmptyCloud);
    }
    if m == 0 || !(delta >= 0.0) {
        return Err(EstimatorError::BadConfig(format!("upsample needs m >= 1 and delta >= 0, got m={m} delta={delta}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries = Vec::with_capacity(pc.len() * m);
    let mut source = Vec::with_capacity(pc.len() * m);
    for (i, p) in pc.points.iter().enumerate() {
        for _ in 0..m {
            let off: Vec3 = [0, 1, 2].map(|_| (rng.random::<f64>() * 2.0 - 1.0) * delta);
            queries.push([p[0] + off[0], p[1] + off[1], p[2] + off[2]]);
            source.push(i);
        }
    }
    Ok(UpsampleSet { queries, source, m, delta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        PointCloud::new((0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect())
    }

    #[test]
    fn counts_and_bounds() {
        let pc = cloud(100);
        let up = upsample(&pc, 16, 0.03, 4).unwrap();
        assert_eq!(up.queries.len(), 1600);
        for (q, &s) in up.queries.iter().zip(&up.source) {
            let p = pc.points[s];
            assert!((0..3).all(|k| (q[k] - p[k]).abs() <= 0.03));
        }
    }

    #[test]
    fn zero_amplitude_copies_inputs() {
        let pc = cloud(10);
        let up = upsample(&pc, 1, 0.0, 0).unwrap();
        assert_eq!(up.queries, pc.points);
    }

    #[test]
    fn deterministic_and_errors() {
        let pc = cloud(10);
        assert_eq!(upsample(&pc, 3, 0.01, 9).unwrap(), upsample(&pc, 3, 0.01, 9).unwrap());
        assert!(matches!(upsample(&PointCloud::default(), 3, 0.01, 9), Err(EstimatorError::EmptyCloud)));
    }
}
