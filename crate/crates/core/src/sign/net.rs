use std::f64::consts::PI;
use std::path::Path;
use std::rc::Rc;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::labels::{decode_class, signs_from_pairs, PAIRS, SIGN_CLASSES};
use super::SignError;
use crate::autodiff::nn::Linear;
use crate::autodiff::{load_checkpoint, save_checkpoint, AutodiffError, Graph, ParamStore, Tensor, Var};
use crate::field::{CubeSample, WINDOW};

const SITES: usize = WINDOW * WINDOW * WINDOW;
const KERNEL: usize = 27;
/// Multiplies the UDF channel so that near-surface values are of order one
/// on a 64³ unit lattice.
pub const UDF_INPUT_SCALE: f64 = 30.0;
const EVAL_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Per-corner probabilities with the flip-minimised BCE.
    L1,
    /// Per-pair "differ" probabilities.
    L2,
    /// 128-way classification of the canonical pattern.
    L3,
}

impl Head {
    pub fn as_str(&self) -> &'static str {
        match self {
            Head::L1 => "l1",
            Head::L2 => "l2",
            Head::L3 => "l3",
        }
    }
}

impl FromStr for Head {
    type Err = SignError;
    fn from_str(s: &str) -> Result<Self, SignError> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Head::L1),
            "l2" => Ok(Head::L2),
            "l3" => Ok(Head::L3),
            other => Err(SignError::BadConfig(format!("unknown sign head {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignConfig {
    pub head: Head,
    /// Channel widths of the four convolution layers.
    pub widths: [usize; 4],
    pub head_hidden: usize,
    pub pe_octaves: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SignConfig {
    fn default() -> Self {
        Self { head: Head::L1, widths: [8, 64, 128, 128], head_hidden: 64, pe_octaves: 4, steps: 2000, batch: 2048, lr: 1e-3, seed: 0 }
    }
}

impl SignConfig {
    /// Smaller batches and fewer steps for a single CPU core.
    pub fn quick() -> Self {
        Self { steps: 600, batch: 256, lr: 3e-3, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SignError> {
        if self.widths.contains(&0) || self.head_hidden == 0 || self.batch == 0 {
            return Err(SignError::BadConfig("widths, head_hidden and batch must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(SignError::BadConfig(format!("learning rate {}", self.lr)));
        }
        Ok(())
    }

    pub fn pe_dim(&self) -> usize {
        3 * (1 + 2 * self.pe_octaves)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignPrediction {
    Corners([f64; 8]),
    /// Probability that the two corners of each pair in [`PAIRS`] differ.
    Pairs([f64; 28]),
    Classes(Vec<f64>),
}

impl SignPrediction {
    /// Thresholded corner signs with corner 0 positive.
    pub fn signs(&self) -> [i8; 8] {
        let bits: [u8; 8] = match self {
            SignPrediction::Corners(p) => p.map(|v| u8::from(v >= 0.5)),
            SignPrediction::Pairs(p) => signs_from_pairs(p),
            SignPrediction::Classes(d) => {
                let k = d.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0;
                decode_class(k)
            }
        };
        let f = bits[0];
        bits.map(|b| if b == f { 1 } else { -1 })
    }
}

/// Fourier features of a corner position in window units scaled to `[0, 1]`.
fn corner_encoding(b: usize, octaves: usize) -> Vec<f64> {
    let site = CubeSample::corner_site(b);
    let mut out = Vec::with_capacity(3 * (1 + 2 * octaves));
    for s in site {
        let x = s as f64 / (WINDOW - 1) as f64;
        out.push(x);
        for k in 0..octaves {
            let w = (1u64 << k) as f64 * PI * x;
            out.push(w.sin());
            out.push(w.cos());
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SignNet {
    pub config: SignConfig,
    pub store: ParamStore,
    conv1: Linear,
    conv2: Linear,
    conv3: Linear,
    conv4: Linear,
    head_g: Option<Linear>,
    head_p: Option<Linear>,
    head_out: Linear,
}

impl SignNet {
    pub fn new(config: SignConfig) -> Result<Self, SignError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let w = config.widths;
        // 3³ kernels without padding take 5³ to 3³ then 1³; 1³ kernels after.
        let conv1 = Linear::new(&mut store, "sign.conv1", 4 * KERNEL, w[0], &mut rng)?;
        let conv2 = Linear::new(&mut store, "sign.conv2", KERNEL * w[0], w[1], &mut rng)?;
        let conv3 = Linear::new(&mut store, "sign.conv3", w[1], w[2], &mut rng)?;
        let conv4 = Linear::new(&mut store, "sign.conv4", w[2], w[3], &mut rng)?;
        let hh = config.head_hidden;
        let pe = config.pe_dim();
        let (head_g, head_p, head_out) = match config.head {
            Head::L1 => (
                Some(Linear::new(&mut store, "sign.head.g", w[3], hh, &mut rng)?),
                Some(Linear::new(&mut store, "sign.head.pe", pe, hh, &mut rng)?),
                Linear::new(&mut store, "sign.head.out", hh, 1, &mut rng)?,
            ),
            Head::L2 => (
                Some(Linear::new(&mut store, "sign.head.g", w[3], hh, &mut rng)?),
                Some(Linear::new(&mut store, "sign.head.pe", 2 * pe, hh, &mut rng)?),
                Linear::new(&mut store, "sign.head.out", hh, 1, &mut rng)?,
            ),
            Head::L3 => (None, None, Linear::new(&mut store, "sign.head.out", w[3], SIGN_CLASSES, &mut rng)?),
        };
        Ok(Self { config, store, conv1, conv2, conv3, conv4, head_g, head_p, head_out })
    }

    /// Logits: `[B, 8]` for L1, `[B, 28]` for L2, `[B, 128]` for L3.
    pub fn forward_graph(&self, g: &mut Graph, samples: &[&CubeSample]) -> Result<Var, AutodiffError> {
        let b = samples.len();
        let w = self.config.widths;
        let mut cols = Vec::with_capacity(b * 27 * 4 * KERNEL);
        for s in samples {
            if s.data.len() != 4 * SITES {
                return Err(AutodiffError::ShapeMismatch(format!("cube sample with {} values", s.data.len())));
            }
            for oz in 0..3 {
                for oy in 0..3 {
                    for ox in 0..3 {
                        for c in 0..4 {
                            let scale = if c == 0 { UDF_INPUT_SCALE } else { 1.0 };
                            for kz in 0..3 {
                                for ky in 0..3 {
                                    for kx in 0..3 {
                                        let site = (ox + kx) + WINDOW * ((oy + ky) + WINDOW * (oz + kz));
                                        cols.push(s.data[c * SITES + site] * scale);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let x = g.constant(Tensor::matrix(b * 27, 4 * KERNEL, cols)?)?;
        let h = self.conv1.forward(g, &self.store, x)?;
        let h = g.relu(h)?;
        let h = g.reshape(h, b, 27 * w[0])?;
        let h = self.conv2.forward(g, &self.store, h)?;
        let h = g.relu(h)?;
        let h = self.conv3.forward(g, &self.store, h)?;
        let h = g.relu(h)?;
        let h = self.conv4.forward(g, &self.store, h)?;
        let feat = g.relu(h)?;
        match self.config.head {
            Head::L3 => self.head_out.forward(g, &self.store, feat),
            head => {
                let pe_dim = self.config.pe_dim();
                let enc: Vec<Vec<f64>> = (0..8).map(|c| corner_encoding(c, self.config.pe_octaves)).collect();
                let (reps, rows): (usize, Vec<Vec<f64>>) = match head {
                    Head::L1 => (8, enc),
                    _ => (28, PAIRS.iter().map(|&(i, j)| [enc[i].clone(), enc[j].clone()].concat()).collect()),
                };
                let width = if head == Head::L1 { pe_dim } else { 2 * pe_dim };
                let mut pe = Vec::with_capacity(b * reps * width);
                for _ in 0..b {
                    for r in &rows {
                        pe.extend_from_slice(r);
                    }
                }
                let pe = g.constant(Tensor::matrix(b * reps, width, pe)?)?;
                let hg = self.head_g.as_ref().expect("corner head").forward(g, &self.store, feat)?;
                let idx: Rc<[usize]> = (0..b * reps).map(|r| r / reps).collect();
                let hg = g.gather_rows(hg, idx)?;
                let hp = self.head_p.as_ref().expect("corner head").forward(g, &self.store, pe)?;
                let h = g.add(hg, hp)?;
                let h = g.relu(h)?;
                let z = self.head_out.forward(g, &self.store, h)?;
                g.reshape(z, b, reps)
            }
        }
    }

    pub fn predict(&self, samples: &[CubeSample]) -> Result<Vec<SignPrediction>, SignError> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(EVAL_CHUNK) {
            let refs: Vec<&CubeSample> = chunk.iter().collect();
            let mut g = Graph::new();
            let z = self.forward_graph(&mut g, &refs)?;
            let z = match self.config.head {
                Head::L3 => g.softmax_rows(z)?,
                _ => g.sigmoid(z)?,
            };
            let t = g.value(z);
            let c = t.cols();
            for row in t.data().chunks(c) {
                out.push(match self.config.head {
                    Head::L1 => SignPrediction::Corners(row.try_into().expect("8 corners")),
                    Head::L2 => SignPrediction::Pairs(row.try_into().expect("28 pairs")),
                    Head::L3 => SignPrediction::Classes(row.to_vec()),
                });
            }
        }
        Ok(out)
    }

    pub fn forward(&self, sample: &CubeSample) -> Result<SignPrediction, SignError> {
        Ok(self.predict(std::slice::from_ref(sample))?.remove(0))
    }

    pub fn predict_signs(&self, samples: &[CubeSample]) -> Result<Vec<[i8; 8]>, SignError> {
        Ok(self.predict(samples)?.iter().map(|p| p.signs()).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), SignError> {
        Ok(save_checkpoint(&self.store, path)?)
    }

    pub fn load(config: SignConfig, path: &Path) -> Result<Self, SignError> {
        let mut net = Self::new(config)?;
        load_checkpoint(&mut net.store, path)?;
        Ok(net)
    }
}
