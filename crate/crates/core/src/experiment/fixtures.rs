use crate::estimator::{train_per_shape, EstimatorConfig};
use crate::field::{evaluate_grid_with, AnalyticShape, Bounds, FieldError};
use crate::geom::{normalize_to_unit_cube, PointCloud};
use crate::sign::{accuracy, harvest_from_grid, train_sign_net, SignConfig, SignDataset, SignError, SignNet, SignTrainOutput};
use crate::{Error, Result};

/// Area-uniform samples of an analytic surface, in the shape's own frame.
pub fn gen_fixture(shape: &AnalyticShape, n: usize, seed: u64) -> Result<PointCloud, FieldError> {
    if n == 0 {
        return Err(FieldError::BadShape("fixture needs at least one point".into()));
    }
    shape.sample(n, seed)
}

/// Closed kinds the sign classifier is trained on.
pub fn sign_training_shapes() -> Vec<AnalyticShape> {
    ["sphere", "box", "ellipsoid", "capsule", "plane"].iter().map(|n| AnalyticShape::standard(n).expect("standard shape")).collect()
}

/// Closed kinds kept away from sign training.
pub fn sign_heldout_shapes() -> Vec<AnalyticShape> {
    ["torus", "cylinder"].iter().map(|n| AnalyticShape::standard(n).expect("standard shape")).collect()
}

/// Harvests cubes from [`sign_training_shapes`] on an `h³` lattice and trains.
pub fn train_standard_sign_net(config: &SignConfig, h: usize) -> Result<SignTrainOutput, SignError> {
    let ds = SignDataset::from_shapes(&sign_training_shapes(), h, 3000, config.seed)?;
    train_sign_net(&ds, config)
}

/// Cubes of fitted (not analytic) fields of `shapes`, labelled by the
/// analytic signs. Each shape gets its own per-shape estimator.
pub fn estimated_sign_dataset(shapes: &[AnalyticShape], h: usize, n_points: usize, estimator: &EstimatorConfig, seed: u64) -> Result<SignDataset> {
    let mut ds = SignDataset::default();
    for (i, shape) in shapes.iter().enumerate() {
        if !shape.is_closed() {
            return Err(FieldError::UndefinedSign(shape.name()).into());
        }
        let s = seed.wrapping_add(i as u64);
        let raw = gen_fixture(shape, n_points, s)?;
        let (pc, t) = normalize_to_unit_cube(&raw)?;
        let unit = shape.transformed(&t);
        let est = train_per_shape(&pc, &EstimatorConfig { seed: s, ..estimator.clone() })?.estimator;
        let ctx = est.context(&pc)?;
        let enc = est.encode(&ctx)?;
        let grid = evaluate_grid_with(&est, &ctx, &enc, h, Bounds::unit())?;
        for (sample, prov) in harvest_from_grid(&unit, &grid, &pc)? {
            ds.samples.push(sample);
            ds.provenance.push(prov);
        }
    }
    Ok(ds)
}

/// Accuracy over the analytic near-surface cubes of [`sign_heldout_shapes`].
pub fn sign_heldout_accuracy(net: &SignNet, h: usize, n_points: usize, seed: u64) -> Result<f64> {
    let ds = SignDataset::from_shapes(&sign_heldout_shapes(), h, n_points, seed)?;
    if ds.is_empty() {
        return Err(Error::Sign(SignError::EmptyDataset));
    }
    let pred = net.predict_signs(&ds.samples)?;
    Ok(accuracy(&pred, &ds.labels()))
}
