use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EstimatorError;

/// Which projection stages make up the flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageMode {
    /// Stage-1 plane projection only.
    #[serde(rename = "s1")]
    S1,
    /// Stage 1 applied twice, the second time from the displaced point.
    #[serde(rename = "s1x2")]
    S1Twice,
    /// Stage 1 followed by the learned refinement.
    #[serde(rename = "full")]
    Full,
}

impl StageMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StageMode::S1 => "s1",
            StageMode::S1Twice => "s1x2",
            StageMode::Full => "full",
        }
    }
}

impl FromStr for StageMode {
    type Err = EstimatorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "s1" => Ok(StageMode::S1),
            "s1x2" => Ok(StageMode::S1Twice),
            "full" | "s1+s2" => Ok(StageMode::Full),
            other => Err(EstimatorError::BadConfig(format!("unknown stage mode {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_chamfer: f64,
    pub w_intra: f64,
    pub w_inter: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w_chamfer: 10.0, w_intra: 1.0, w_inter: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Upsampling factor.
    pub m: usize,
    /// Half-width of the uniform perturbation.
    pub delta: f64,
    pub k_stage1: usize,
    pub k_backbone: usize,
    /// Neighbourhood size for the PCA normals fed to the backbone.
    pub k_normal: usize,
    pub widths: Vec<usize>,
    /// Hidden width of the relative-position encoder.
    pub pos_hidden: usize,
    /// Hidden width of the approaching-vector, interpolation and refinement heads.
    pub head_hidden: usize,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub weights: LossWeights,
    /// Source points drawn per step.
    pub batch: usize,
    /// Perturbed queries drawn per source point, at most `m`.
    pub queries_per_source: usize,
    /// Shapes per step in prior mode.
    pub shapes_per_step: usize,
    pub stage: StageMode,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            m: 16,
            delta: 0.03,
            k_stage1: 8,
            k_backbone: 36,
            k_normal: 16,
            widths: vec![16, 32, 64, 64],
            pos_hidden: 16,
            head_hidden: 32,
            steps: 3000,
            lr: 1e-3,
            seed: 0,
            weights: LossWeights::default(),
            batch: 256,
            queries_per_source: 16,
            shapes_per_step: 2,
            stage: StageMode::Full,
        }
    }
}

impl EstimatorConfig {
    /// Layer widths and neighbourhood from the reference architecture.
    pub fn reference() -> Self {
        Self { widths: vec![32, 128, 256, 256], ..Self::default() }
    }

    /// A small configuration that trains in tens of seconds on one core.
    pub fn quick() -> Self {
        Self {
            k_backbone: 12,
            widths: vec![8, 16, 16, 16],
            pos_hidden: 8,
            head_hidden: 16,
            steps: 600,
            lr: 3e-3,
            batch: 128,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: &str| Err(EstimatorError::BadConfig(m.to_string()));
        if self.m == 0 {
            return bad("m must be >= 1");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be > 0");
        }
        if self.k_stage1 == 0 || self.k_backbone == 0 {
            return bad("neighbour counts must be >= 1");
        }
        if self.k_normal < 3 {
            return bad("k_normal must be >= 3");
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths must be a nonempty list of positive sizes");
        }
        if self.queries_per_source == 0 || self.queries_per_source > self.m {
            return bad("queries_per_source must be in 1..=m");
        }
        if self.pos_hidden == 0 || self.head_hidden == 0 || self.batch == 0 || self.shapes_per_step == 0 {
            return bad("hidden sizes, batch and shapes_per_step must be >= 1");
        }
        let w = self.weights;
        if !(w.w_chamfer >= 0.0 && w.w_intra >= 0.0 && w.w_inter >= 0.0) {
            return bad("loss weights must be >= 0");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be > 0");
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), EstimatorError> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, EstimatorError> {
            v.parse().map_err(|_| EstimatorError::BadConfig(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "m" => self.m = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "k_stage1" => self.k_stage1 = num(key, value)?,
            "k_backbone" => self.k_backbone = num(key, value)?,
            "k_normal" => self.k_normal = num(key, value)?,
            "widths" => {
                self.widths = value.split(',').map(|w| num(key, w.trim())).collect::<Result<_, _>>()?;
            }
            "pos_hidden" => self.pos_hidden = num(key, value)?,
            "head_hidden" => self.head_hidden = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "w_chamfer" => self.weights.w_chamfer = num(key, value)?,
            "w_intra" => self.weights.w_intra = num(key, value)?,
            "w_inter" => self.weights.w_inter = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "queries_per_source" => self.queries_per_source = num(key, value)?,
            "shapes_per_step" => self.shapes_per_step = num(key, value)?,
            "stage" => self.stage = value.parse()?,
            other => return Err(EstimatorError::BadConfig(format!("unknown key {other}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, EstimatorError> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| EstimatorError::BadConfig(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "k_stage1 = {}", self.k_stage1);
        let _ = writeln!(s, "k_backbone = {}", self.k_backbone);
        let _ = writeln!(s, "k_normal = {}", self.k_normal);
        let _ = writeln!(s, "widths = {}", widths.join(","));
        let _ = writeln!(s, "pos_hidden = {}", self.pos_hidden);
        let _ = writeln!(s, "head_hidden = {}", self.head_hidden);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "w_chamfer = {}", self.weights.w_chamfer);
        let _ = writeln!(s, "w_intra = {}", self.weights.w_intra);
        let _ = writeln!(s, "w_inter = {}", self.weights.w_inter);
        let _ = writeln!(s, "batch = {}", self.batch);
        let _ = writeln!(s, "queries_per_source = {}", self.queries_per_source);
        let _ = writeln!(s, "shapes_per_step = {}", self.shapes_per_step);
        let _ = writeln!(s, "stage = {}", self.stage.as_str());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_values() {
        let c = EstimatorConfig::default();
        assert_eq!(c.delta, 0.03);
        assert_eq!(c.m, 16);
        assert_eq!(c.k_stage1, 8);
        assert_eq!(c.k_backbone, 36);
        assert_eq!(c.lr, 0.001);
        assert_eq!(c.weights, LossWeights { w_chamfer: 10.0, w_intra: 1.0, w_inter: 1.0 });
        assert_eq!(EstimatorConfig::reference().widths, vec![32, 128, 256, 256]);
    }

    #[test]
    fn text_round_trip() {
        let mut c = EstimatorConfig::quick();
        c.stage = StageMode::S1Twice;
        c.weights.w_inter = 0.0;
        let back = EstimatorConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(EstimatorConfig::parse("m = two").is_err());
        assert!(EstimatorConfig::parse("nonsense").is_err());
        assert!(EstimatorConfig::parse("colour = red").is_err());
        assert!(EstimatorConfig::parse("w_inter = -1").is_err());
        let c = EstimatorConfig::parse("# comment\nwidths = 4, 8\n\nstage = s1\n").unwrap();
        assert_eq!(c.widths, vec![4, 8]);
        assert_eq!(c.stage, StageMode::S1);
    }
}
