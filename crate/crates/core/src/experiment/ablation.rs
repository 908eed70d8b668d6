use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{run_reconstruct, RunRecord, RunSpec, SignMode};
use crate::estimator::{EstimatorConfig, StageMode};
use crate::field::AnalyticShape;
use crate::sign::SignNet;
use crate::Result;

pub const ABLATION_HEADER: &str = "fixture,variant,n_points,seed,k,stage,inter_loss,cd1,upsample_cd1,nc,udf_error,acc,train_seconds,field_seconds,extract_seconds,total_seconds";

/// One estimator setting under comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub inter_loss: bool,
    pub stage: StageMode,
    /// Stage-1 neighbourhood; `None` keeps the base value.
    pub k: Option<usize>,
}

impl Variant {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string(), inter_loss: true, stage: StageMode::Full, k: None }
    }

    pub fn apply(&self, base: &EstimatorConfig) -> EstimatorConfig {
        let mut cfg = base.clone();
        if !self.inter_loss {
            cfg.weights.w_inter = 0.0;
        }
        cfg.stage = self.stage;
        if let Some(k) = self.k {
            cfg.k_stage1 = k;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub shapes: Vec<AnalyticShape>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub n_points: usize,
    pub resolution: usize,
    pub eval_samples: usize,
    pub sign: SignMode,
    pub base: EstimatorConfig,
}

impl AblationSpec {
    /// Inter-consistency loss on and off.
    pub fn inter_loss(shapes: Vec<AnalyticShape>, base: EstimatorConfig) -> Self {
        let off = Variant { inter_loss: false, ..Variant::new("no-inter") };
        Self::with_variants(shapes, base, vec![Variant::new("full"), off])
    }

    /// Stage-1 only, stage 1 twice, and both stages.
    pub fn stages(shapes: Vec<AnalyticShape>, base: EstimatorConfig) -> Self {
        let v = [("s1", StageMode::S1), ("s1x2", StageMode::S1Twice), ("full", StageMode::Full)];
        Self::with_variants(shapes, base, v.iter().map(|&(n, s)| Variant { stage: s, ..Variant::new(n) }).collect())
    }

    pub fn neighbourhood(shapes: Vec<AnalyticShape>, base: EstimatorConfig, ks: &[usize]) -> Self {
        Self::with_variants(shapes, base, ks.iter().map(|&k| Variant { k: Some(k), ..Variant::new(&format!("k{k}")) }).collect())
    }

    fn with_variants(shapes: Vec<AnalyticShape>, base: EstimatorConfig, variants: Vec<Variant>) -> Self {
        Self { shapes, variants, seeds: vec![0, 1, 2], n_points: 1000, resolution: 64, eval_samples: 50_000, sign: SignMode::Baseline, base }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub fixture: String,
    pub variant: String,
    pub n_points: usize,
    pub seed: u64,
    pub k: usize,
    pub stage: StageMode,
    pub inter_loss: bool,
    pub cd1: f64,
    pub upsample_cd1: f64,
    pub nc: f64,
    pub udf_error: f64,
    pub acc: Option<f64>,
    pub train_seconds: f64,
    pub field_seconds: f64,
    pub extract_seconds: f64,
    pub total_seconds: f64,
}

impl AblationRow {
    pub fn from_record(variant: &Variant, rec: &RunRecord) -> Self {
        let t = rec.times;
        Self {
            fixture: rec.spec.shape.name().to_string(),
            variant: variant.name.clone(),
            n_points: rec.spec.n_points,
            seed: rec.spec.seed,
            k: rec.spec.estimator.k_stage1,
            stage: rec.spec.estimator.stage,
            inter_loss: rec.spec.estimator.weights.w_inter > 0.0,
            cd1: rec.metrics.cd1,
            upsample_cd1: rec.metrics.upsample_cd1,
            nc: rec.metrics.nc,
            udf_error: rec.metrics.udf_error,
            acc: rec.metrics.acc,
            train_seconds: t.training,
            field_seconds: t.field_prediction,
            extract_seconds: t.mesh_extraction,
            total_seconds: t.total,
        }
    }
}

/// Runs every (shape, variant, seed) triple. The seed drives both the
/// fixture and the estimator initialisation.
pub fn run_ablation_suite(spec: &AblationSpec, sign_net: Option<&SignNet>, progress: &mut dyn FnMut(&AblationRow)) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for shape in &spec.shapes {
        for v in &spec.variants {
            for &seed in &spec.seeds {
                let mut cfg = v.apply(&spec.base);
                cfg.seed = seed;
                let run = RunSpec { resolution: spec.resolution, sign: spec.sign, eval_samples: spec.eval_samples, ..RunSpec::new(shape.clone(), spec.n_points, seed, cfg) };
                let rec = run_reconstruct(&run, sign_net)?;
                let row = AblationRow::from_record(v, &rec);
                progress(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub fn write_ablation_csv(rows: &[AblationRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{ABLATION_HEADER}")?;
    for r in rows {
        let acc = r.acc.map_or(String::new(), |a| format!("{a:.6}"));
        writeln!(
            w,
            "{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{:.3},{:.3},{:.3},{:.3}",
            r.fixture,
            r.variant,
            r.n_points,
            r.seed,
            r.k,
            r.stage.as_str(),
            r.inter_loss,
            r.cd1,
            r.upsample_cd1,
            r.nc,
            r.udf_error,
            acc,
            r.train_seconds,
            r.field_seconds,
            r.extract_seconds,
            r.total_seconds
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> AblationRow {
        AblationRow {
            fixture: "sphere".into(),
            variant: "no-inter".into(),
            n_points: 1000,
            seed: 2,
            k: 8,
            stage: StageMode::Full,
            inter_loss: false,
            cd1: 0.0122,
            upsample_cd1: 0.0061,
            nc: 0.95,
            udf_error: 0.004,
            acc: None,
            train_seconds: 12.5,
            field_seconds: 1.0,
            extract_seconds: 0.25,
            total_seconds: 13.75,
        }
    }

    #[test]
    fn csv_golden() {
        let mut out = Vec::new();
        write_ablation_csv(&[row()], &mut out).unwrap();
        let expected = format!("{ABLATION_HEADER}\nsphere,no-inter,1000,2,8,full,false,0.012200,0.006100,0.950000,0.004000,,12.500,1.000,0.250,13.750\n");
        assert_eq!(String::from_utf8(out).unwrap(), expected);
    }

    #[test]
    fn variants_edit_only_their_field() {
        let base = EstimatorConfig::quick();
        let s = AblationSpec::inter_loss(vec![], base.clone());
        assert_eq!(s.variants[0].apply(&base), base);
        let off = s.variants[1].apply(&base);
        assert_eq!(off.weights.w_inter, 0.0);
        assert_eq!(off.weights.w_intra, base.weights.w_intra);
        let k = AblationSpec::neighbourhood(vec![], base.clone(), &[8, 64]);
        assert_eq!(k.variants[1].apply(&base).k_stage1, 64);
        let st = AblationSpec::stages(vec![], base.clone());
        assert_eq!(st.variants[0].apply(&base).stage, StageMode::S1);
    }
}
