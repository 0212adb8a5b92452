//! Input pipelines: first-order differencing, autoregressive embedding and
//! random tanh features.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAG: usize = 9;
pub const DEFAULT_HIDDEN: usize = 20;

/// `out[i] = s[i+1] − s[i]`.
pub fn difference(series: &[f64]) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::invalid("differencing needs at least 2 points"));
    }
    Ok(series.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Inverse of [`difference`] given the first level.
pub fn undifference(diffs: &[f64], first: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(diffs.len() + 1);
    out.push(first);
    let mut level = first;
    for d in diffs {
        level += d;
        out.push(level);
    }
    out
}

/// Autoregressive design: row `i` is `(y[i−1], …, y[i−lag], 1)` with target
/// `y[i]`, for `i = lag..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArEmbedding {
    pub lag: usize,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
}

impl ArEmbedding {
    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }
}

pub fn ar_embed(series: &[f64], lag: usize) -> Result<ArEmbedding> {
    if lag == 0 {
        return Err(Error::invalid("lag must be positive"));
    }
    if series.len() <= lag {
        return Err(Error::invalid(format!(
            "series of length {} is too short for lag {lag}",
            series.len()
        )));
    }
    let rows = series.len() - lag;
    let x = DMatrix::from_fn(rows, lag + 1, |r, c| {
        if c == lag {
            1.0
        } else {
            series[r + lag - 1 - c]
        }
    });
    Ok(ArEmbedding {
        lag,
        x,
        y: series[lag..].to_vec(),
    })
}

/// Per-feature affine standardization fitted on a training block. Columns
/// with zero spread (the constant column) pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::invalid("cannot standardize on an empty training block"))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let (mean, scale) = mean
            .into_iter()
            .zip(var)
            .map(|(m, v)| if v > 0.0 { (m, v.sqrt()) } else { (0.0, 1.0) })
            .unzip();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Fixed random hidden layer with tanh activation. The output has a leading
/// constant 1 followed by `tanh(v_k · x)` for each hidden node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElmMap {
    hidden: usize,
    input_dim: usize,
    seed: u64,
    /// Row `k` is the hidden weight vector `v_k`.
    weights: Vec<Vec<f64>>,
}

impl ElmMap {
    /// Hidden weights drawn i.i.d. uniform on `[−1, 1]` from ChaCha8 seeded
    /// with `seed`.
    pub fn new(hidden: usize, input_dim: usize, seed: u64) -> Result<Self> {
        if hidden == 0 || input_dim == 0 {
            return Err(Error::invalid("hidden count and input dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..hidden)
            .map(|_| (0..input_dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        Ok(Self {
            hidden,
            input_dim,
            seed,
            weights,
        })
    }

    /// Map with explicit hidden weights.
    pub fn from_weights(weights: Vec<Vec<f64>>) -> Result<Self> {
        let input_dim = weights.first().map_or(0, |w| w.len());
        if input_dim == 0 || weights.iter().any(|w| w.len() != input_dim) {
            return Err(Error::invalid("hidden weights must be a non-empty rectangular matrix"));
        }
        Ok(Self {
            hidden: weights.len(),
            input_dim,
            seed: 0,
            weights,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.hidden + 1
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "ELM input has length {}, expected {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut out = Vec::with_capacity(self.hidden + 1);
        out.push(1.0);
        for v in &self.weights {
            let z: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
            out.push(z.tanh());
        }
        Ok(out)
    }

    /// JSON manifest with `hidden`, `seed` and the weight matrix.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ELM map serializes")
    }
}
