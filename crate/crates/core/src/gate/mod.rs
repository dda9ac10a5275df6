//! The gate network: `z = W2 · relu(W1 · h + b1) + b2`, one output per
//! language family in [`LanguageFamily::ALL`] order.
//!
//! Training targets come from [`target`], the loop lives in [`train`], and
//! the JSON file format in [`file`].

pub mod file;
pub mod target;
pub mod train;

use rand::Rng;

use crate::vocab::{FamilySet, LanguageFamily};
use crate::{Error, Result};

pub use file::{load_gate, save_gate, GateFile};
pub use target::{pseudo_target, AdjustedTargets, PseudoTarget, RawTargets, TargetRegistry, TargetSource, Truncated};
pub use train::{train, EpochStats, TrainConfig, TrainOutcome};

pub const N_FAMILIES: usize = 4;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Weights of the two-layer gate. Matrices are row-major:
/// `w1` is `d_hidden x d_in`, `w2` is `4 x d_hidden`.
///
/// The same shape doubles as the gradient type.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub d_in: usize,
    pub d_hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl GateParams {
    pub fn zeros(d_in: usize, d_hidden: usize) -> Self {
        Self {
            d_in,
            d_hidden,
            w1: vec![0.0; d_hidden * d_in],
            b1: vec![0.0; d_hidden],
            w2: vec![0.0; N_FAMILIES * d_hidden],
            b2: vec![0.0; N_FAMILIES],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(d_in: usize, d_hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(d_in, d_hidden);
        let a1 = (6.0 / (d_in + d_hidden) as f64).sqrt();
        for w in &mut p.w1 {
            *w = rng.random_range(-a1..a1);
        }
        let a2 = (6.0 / (d_hidden + N_FAMILIES) as f64).sqrt();
        for w in &mut p.w2 {
            *w = rng.random_range(-a2..a2);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let check = |what, got, expected| {
            if got == expected {
                Ok(())
            } else {
                Err(Error::Dimension { what, expected, got })
            }
        };
        if self.d_in == 0 || self.d_hidden == 0 {
            return Err(Error::config("gate dimensions must be positive"));
        }
        check("W1 size", self.w1.len(), self.d_hidden * self.d_in)?;
        check("b1 size", self.b1.len(), self.d_hidden)?;
        check("W2 size", self.w2.len(), N_FAMILIES * self.d_hidden)?;
        check("b2 size", self.b2.len(), N_FAMILIES)
    }

    pub fn check_input(&self, d_in: usize) -> Result<()> {
        if d_in != self.d_in {
            return Err(Error::Dimension {
                what: "hidden state width",
                expected: self.d_in,
                got: d_in,
            });
        }
        Ok(())
    }

    fn hidden_pre(&self, h: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.w1[j * self.d_in..(j + 1) * self.d_in];
            *o = self.b1[j] + row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    fn output(&self, hidden: &[f64]) -> [f64; N_FAMILIES] {
        let mut z = [0.0; N_FAMILIES];
        for (i, zi) in z.iter_mut().enumerate() {
            let row = &self.w2[i * self.d_hidden..(i + 1) * self.d_hidden];
            *zi = self.b2[i]
                + row
                    .iter()
                    .zip(hidden)
                    .map(|(w, a)| w * a.max(0.0))
                    .sum::<f64>();
        }
        z
    }

    /// Family logits for one hidden state.
    pub fn forward(&self, h: &[f64]) -> Result<[f64; N_FAMILIES]> {
        self.check_input(h.len())?;
        let mut pre = vec![0.0; self.d_hidden];
        self.hidden_pre(h, &mut pre);
        Ok(self.output(&pre))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &GateParams) {
        let pairs = [
            (&mut self.w1, &other.w1),
            (&mut self.b1, &other.b1),
            (&mut self.w2, &other.w2),
            (&mut self.b2, &other.b2),
        ];
        for (dst, src) in pairs {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .flat_map(|v| v.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Every parameter rounded to `f32`, the precision of the gate file.
    pub fn quantized(&self) -> Self {
        let q = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect();
        Self {
            d_in: self.d_in,
            d_hidden: self.d_hidden,
            w1: q(&self.w1),
            b1: q(&self.b1),
            w2: q(&self.w2),
            b2: q(&self.b2),
        }
    }

    /// Flat view over all parameters in a fixed order (w1, b1, w2, b2).
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
    }
}

/// Families whose sigmoid output reaches `threshold`.
pub fn allowed_set(z: &[f64; N_FAMILIES], threshold: f64) -> FamilySet {
    LanguageFamily::ALL
        .iter()
        .filter(|f| sigmoid(z[f.index()]) >= threshold)
        .copied()
        .collect()
}

/// Summed binary cross-entropy over the four families, in the stable form
/// `softplus(z) - y*z`.
pub fn bce_loss(z: &[f64; N_FAMILIES], y: &PseudoTarget) -> f64 {
    z.iter()
        .zip(y.values())
        .map(|(&zi, yi)| softplus(zi) - yi * zi)
        .sum()
}

/// Analytic gradient of the mean batch loss.
pub fn gradient(params: &GateParams, batch: &[(&[f64], PseudoTarget)]) -> Result<GateParams> {
    assert!(!batch.is_empty(), "gradient of an empty batch");
    let mut grad = GateParams::zeros(params.d_in, params.d_hidden);
    let mut pre = vec![0.0; params.d_hidden];
    let mut back = vec![0.0; params.d_hidden];
    for (h, y) in batch {
        params.check_input(h.len())?;
        params.hidden_pre(h, &mut pre);
        let z = params.output(&pre);
        let y = y.values();
        back.iter_mut().for_each(|b| *b = 0.0);
        for i in 0..N_FAMILIES {
            let dz = sigmoid(z[i]) - y[i];
            grad.b2[i] += dz;
            let row = i * params.d_hidden;
            for j in 0..params.d_hidden {
                grad.w2[row + j] += dz * pre[j].max(0.0);
                back[j] += dz * params.w2[row + j];
            }
        }
        for j in 0..params.d_hidden {
            if pre[j] <= 0.0 {
                continue;
            }
            let da = back[j];
            grad.b1[j] += da;
            let row = &mut grad.w1[j * params.d_in..(j + 1) * params.d_in];
            for (g, x) in row.iter_mut().zip(h.iter()) {
                *g += da * x;
            }
        }
    }
    let inv = 1.0 / batch.len() as f64;
    for g in grad.params_mut() {
        *g *= inv;
    }
    Ok(grad)
}
