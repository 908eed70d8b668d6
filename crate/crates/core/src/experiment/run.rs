use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::gen_fixture;
use crate::estimator::{train_per_shape, upsample, write_history_csv, Estimator, EstimatorConfig, LossRecord};
use crate::extract::{extract_mesh, ExtractionReport, SignSource, SignedCube};
use crate::field::{analytic_udf_grid, evaluate_grid_with, near_surface_cubes, slice, slice_relative_l1, write_grid, AnalyticShape, Bounds, UdfGrid, NEAR_SURFACE_THRESHOLD};
use crate::geom::{chamfer_l1, normal_consistency, normalize_to_unit_cube, sample_mesh_surface, write_obj, write_xyz, Mesh, PointCloud};
use crate::sign::{accuracy, SignNet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignMode {
    Learned,
    Baseline,
    /// Signs of the analytic shape; closed fixtures only.
    Oracle,
}

impl SignMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SignMode::Learned => "learned",
            SignMode::Baseline => "baseline",
            SignMode::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for SignMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(SignMode::Learned),
            "baseline" => Ok(SignMode::Baseline),
            "oracle" => Ok(SignMode::Oracle),
            other => Err(Error::Config(format!("unknown sign mode {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub shape: AnalyticShape,
    pub n_points: usize,
    /// Seeds the fixture; the estimator keeps its own seed.
    pub seed: u64,
    pub estimator: EstimatorConfig,
    pub resolution: usize,
    pub sign: SignMode,
    /// Surface samples per side for Chamfer and normal consistency.
    pub eval_samples: usize,
    pub out_dir: Option<PathBuf>,
}

impl RunSpec {
    pub fn new(shape: AnalyticShape, n_points: usize, seed: u64, estimator: EstimatorConfig) -> Self {
        Self { shape, n_points, seed, estimator, resolution: 64, sign: SignMode::Learned, eval_samples: 300_000, out_dir: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimes {
    pub training: f64,
    pub field_prediction: f64,
    pub mesh_extraction: f64,
    /// Wall time across the three stages, measured separately.
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub cd1: f64,
    pub nc: f64,
    /// Mean `|UDF_pred − UDF_true|` over lattice vertices within the
    /// near-surface threshold of the true surface.
    pub udf_error: f64,
    /// Relative L1 error of the three mid-slices against the analytic field.
    pub slice_error: f64,
    /// CD₁ of the projected upsampled cloud against as many analytic samples.
    pub upsample_cd1: f64,
    /// Per-cube sign accuracy on crossing cubes, closed fixtures only.
    pub acc: Option<f64>,
    pub boundary_edges: usize,
    pub triangles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub spec: RunSpec,
    pub metrics: RunMetrics,
    pub times: StageTimes,
    pub report: ExtractionReport,
    pub artifacts: Vec<PathBuf>,
    #[serde(skip)]
    pub mesh: Mesh,
}

/// Where the field comes from.
#[derive(Debug, Clone, Copy)]
pub enum FieldSource<'a> {
    /// Fit a fresh estimator to the fixture.
    PerShape,
    /// Forward pass of a trained prior.
    Prior(&'a Estimator),
}

/// Stage table with ratios to the total.
pub fn time_stages(record: &RunRecord) -> Vec<(String, f64, f64)> {
    let t = record.times;
    let total = t.total.max(f64::MIN_POSITIVE);
    vec![
        ("training".to_string(), t.training, t.training / total),
        ("field_prediction".to_string(), t.field_prediction, t.field_prediction / total),
        ("mesh_extraction".to_string(), t.mesh_extraction, t.mesh_extraction / total),
        ("total".to_string(), t.total, 1.0),
    ]
}

pub fn run_reconstruct(spec: &RunSpec, sign_net: Option<&SignNet>) -> Result<RunRecord> {
    reconstruct(spec, FieldSource::PerShape, sign_net)
}

/// Fixture, field, signs, mesh and metrics against the analytic surface.
pub fn reconstruct(spec: &RunSpec, field: FieldSource, sign_net: Option<&SignNet>) -> Result<RunRecord> {
    let raw = gen_fixture(&spec.shape, spec.n_points, spec.seed)?;
    let (pc, t) = normalize_to_unit_cube(&raw)?;
    let truth = spec.shape.transformed(&t);
    let bounds = Bounds::unit();

    let (true_grid, true_signs) = analytic_udf_grid(&truth, spec.resolution, bounds)?;

    let start = Instant::now();
    let (trained, history): (Option<Estimator>, Vec<LossRecord>) = match field {
        FieldSource::PerShape => {
            let out = train_per_shape(&pc, &spec.estimator)?;
            (Some(out.estimator), out.history)
        }
        FieldSource::Prior(_) => (None, Vec::new()),
    };
    let est = match (&trained, field) {
        (Some(e), _) => e,
        (None, FieldSource::Prior(e)) => e,
        (None, FieldSource::PerShape) => unreachable!("per-shape run trains an estimator"),
    };
    let t_train = start.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let ctx = est.context(&pc)?;
    let enc = est.encode(&ctx)?;
    let grid = evaluate_grid_with(est, &ctx, &enc, spec.resolution, bounds)?;
    let t_field = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let anchors = near_surface_cubes(&grid, &pc);
    let source = match spec.sign {
        SignMode::Learned => SignSource::Learned(sign_net.ok_or_else(|| Error::Config("learned sign mode needs a sign classifier".into()))?),
        SignMode::Baseline => SignSource::Baseline,
        SignMode::Oracle => SignSource::Oracle(true_signs.as_deref().ok_or_else(|| Error::Config(format!("no oracle signs for open {}", truth.name())))?),
    };
    let (mesh, report) = extract_mesh(&grid, &anchors, source)?;
    let t_mesh = t1.elapsed().as_secs_f64();
    let total = start.elapsed().as_secs_f64();
    let ups = upsample(&pc, est.config.m, est.config.delta, spec.seed ^ 0x0F5E)?;
    let projected = PointCloud::new(est.evaluate(&ctx, &enc, &ups.queries)?.projected(&ups.queries));

    let acc = match (&true_signs, source) {
        (Some(signs), SignSource::Learned(net)) => Some(sign_accuracy(&grid, &anchors, signs, |g, a| crate::extract::assign_signs_learned(g, a, net).map_err(Error::from))?),
        (Some(signs), SignSource::Baseline) => Some(sign_accuracy(&grid, &anchors, signs, |g, a| Ok(crate::extract::assign_signs_gradient_baseline(g, a).0))?),
        _ => None,
    };
    let metrics = evaluate(&mesh, &projected, &truth, &grid, &true_grid, spec, acc)?;
    let times = StageTimes { training: t_train, field_prediction: t_field, mesh_extraction: t_mesh, total };

    let mut artifacts = Vec::new();
    if let Some(dir) = &spec.out_dir {
        std::fs::create_dir_all(dir)?;
        let p = dir.join("fixture.xyz");
        write_xyz(&p, &pc)?;
        artifacts.push(p);
        let p = dir.join("mesh.obj");
        write_obj(&p, &mesh)?;
        artifacts.push(p);
        let p = dir.join("grid.udfg");
        write_grid(&grid, &p)?;
        artifacts.push(p);
        if !history.is_empty() {
            let p = dir.join("history.csv");
            write_history_csv(&history, std::io::BufWriter::new(std::fs::File::create(&p)?))?;
            artifacts.push(p);
        }
        if let Some(e) = &trained {
            let p = dir.join("estimator.ckpt");
            e.save(&p)?;
            artifacts.push(p);
        }
        let p = dir.join("report.json");
        std::fs::write(&p, report.to_json())?;
        artifacts.push(p);
    }
    let record = RunRecord { spec: spec.clone(), metrics, times, report, artifacts, mesh };
    if let Some(dir) = &spec.out_dir {
        let json = serde_json::to_string_pretty(&record).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(dir.join("record.json"), json)?;
    }
    Ok(record)
}

/// Accuracy of the assigned signs over cubes the true surface crosses.
fn sign_accuracy(grid: &UdfGrid, anchors: &[[usize; 3]], true_signs: &[i8], assign: impl Fn(&UdfGrid, &[[usize; 3]]) -> Result<Vec<SignedCube>>) -> Result<f64> {
    let truth = crate::extract::assign_signs_oracle(grid, anchors, true_signs);
    let crossing: Vec<usize> = (0..truth.len()).filter(|&i| truth[i].crosses()).collect();
    let sel: Vec<[usize; 3]> = crossing.iter().map(|&i| anchors[i]).collect();
    let pred = assign(grid, &sel)?;
    let p: Vec<[i8; 8]> = pred.iter().map(|c| c.signs).collect();
    let l: Vec<[i8; 8]> = crossing.iter().map(|&i| truth[i].signs).collect();
    Ok(accuracy(&p, &l))
}

fn evaluate(mesh: &Mesh, projected: &PointCloud, truth: &AnalyticShape, grid: &UdfGrid, true_grid: &UdfGrid, spec: &RunSpec, acc: Option<f64>) -> Result<RunMetrics> {
    let n = spec.eval_samples.max(1);
    let ms = sample_mesh_surface(mesh, n, spec.seed ^ 0xE4A1)?;
    let gs: PointCloud = truth.sample(n, spec.seed ^ 0x6A7)?;
    let cd1 = chamfer_l1(&ms, &gs)?;
    let nc = normal_consistency(&ms, &gs)?;
    let (mut err, mut cnt) = (0.0, 0usize);
    for (p, t) in grid.udf.iter().zip(&true_grid.udf) {
        if *t < NEAR_SURFACE_THRESHOLD {
            err += (p - t).abs();
            cnt += 1;
        }
    }
    let us = truth.sample(projected.len(), spec.seed ^ 0x6A8)?;
    let upsample_cd1 = chamfer_l1(projected, &us)?;
    let mid = grid.h / 2;
    let slice_error = (0..3).map(|ax| slice_relative_l1(&slice(grid, ax, mid), &slice(true_grid, ax, mid))).sum::<f64>() / 3.0;
    Ok(RunMetrics {
        cd1,
        nc,
        udf_error: if cnt > 0 { err / cnt as f64 } else { f64::NAN },
        slice_error,
        upsample_cd1,
        acc,
        boundary_edges: mesh.boundary_edge_count(),
        triangles: mesh.triangles.len(),
    })
}
