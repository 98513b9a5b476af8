//! Linear SVM trained in the primal with a Pegasos-style stochastic
//! subgradient method, on standardized features.
//!
//! Objective, with `z` the standardized feature vector:
//!
//! ```text
//! λ/2·‖w‖² + 1/n · Σ max(0, 1 − yᵢ(w·zᵢ + b))
//! ```

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Container;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::seed;

pub const DEFAULT_LAMBDA: f64 = 1e-3;
pub const DEFAULT_EPOCHS: usize = 100;

const CONTAINER_KIND: &str = "linear-svm";

/// Per-dimension standardization fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant dimensions, which pass
    /// through centred but unscaled.
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: &[&[f64]]) -> Self {
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for j in 0..dim {
                let d = r[j] - mean[j];
                var[j] += d * d;
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub scaler: Scaler,
    pub lambda: f64,
}

/// Per-epoch objective of the averaged iterate, for diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SvmTrace {
    pub epoch_objective: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SvmDescriptor {
    kind: String,
    dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SvmConfigSnapshot {
    lambda: f64,
}

/// Primal objective on already standardized rows.
pub fn objective(weights: &[f64], bias: f64, lambda: f64, z: &[Vec<f64>], y: &[f64]) -> f64 {
    let reg = 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>();
    let hinge: f64 = z
        .iter()
        .zip(y)
        .map(|(x, &yi)| {
            let f = bias + weights.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            (1.0 - yi * f).max(0.0)
        })
        .sum();
    reg + hinge / z.len() as f64
}

fn validate_inputs(features: &[&[f64]], labels: &[f64], lambda: f64) -> Result<usize> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} feature rows for {} labels",
            features.len(),
            labels.len()
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::Parameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let dim = features[0].len();
    if dim == 0 || features.iter().any(|f| f.len() != dim) {
        return Err(Error::Dimension("inconsistent feature dimensions".into()));
    }
    if labels.iter().any(|&l| l != 1.0 && l != -1.0) {
        return Err(Error::Data("labels must be +1 or -1".into()));
    }
    if !labels.contains(&1.0) || !labels.contains(&-1.0) {
        return Err(Error::Data(
            "SVM training needs samples of both classes".into(),
        ));
    }
    Ok(dim)
}

/// Exact minimizer of the objective over the unregularized bias with `w`
/// fixed. The hinge sum is convex and piecewise linear in `b` with kinks at
/// `yᵢ − w·zᵢ`, so the minimum sits at a kink; `current` is kept on ties.
fn best_bias(w: &[f64], current: f64, z: &[Vec<f64>], y: &[f64]) -> f64 {
    let margins: Vec<f64> = z
        .iter()
        .map(|x| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let hinge = |b: f64| -> f64 {
        margins
            .iter()
            .zip(y)
            .map(|(m, yi)| (1.0 - yi * (m + b)).max(0.0))
            .sum()
    };
    let mut best = (hinge(current), current);
    for (m, yi) in margins.iter().zip(y) {
        let b = yi - m;
        let h = hinge(b);
        if h < best.0 {
            best = (h, b);
        }
    }
    best.1
}

/// Trains on raw feature rows with labels `+1` (genuine) / `-1` (attack).
///
/// Each epoch is one pass over a seeded permutation of the samples with step
/// size `1/(λ·t)` and the usual projection onto `‖w‖ ≤ 1/√λ`. The model
/// returned is whichever of the epoch-end iterates and the running average
/// of all iterates attains the lowest training objective.
pub fn train_svm_rows(
    features: &[&[f64]],
    labels: &[f64],
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<(SvmModel, SvmTrace)> {
    let dim = validate_inputs(features, labels, lambda)?;
    let scaler = Scaler::fit(features);
    let z: Vec<Vec<f64>> = features.iter().map(|f| scaler.apply(f)).collect();
    let n = z.len();

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; dim];
    let mut avg_b = 0.0;
    let mut best = (objective(&w, b, lambda, &z, labels), w.clone(), b);
    let mut trace = SvmTrace::default();
    let radius = 1.0 / lambda.sqrt();
    let mut rng = seed::rng(seed::derive(seed, 0x5EED));
    let mut order: Vec<usize> = (0..n).collect();
    let mut t: u64 = 0;

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = labels[i] * (b + w.iter().zip(&z[i]).map(|(a, c)| a * c).sum::<f64>());
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (v, x) in w.iter_mut().zip(&z[i]) {
                    *v += eta * labels[i] * x;
                }
                b += eta * labels[i];
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
            let k = 1.0 / t as f64;
            for (a, v) in avg_w.iter_mut().zip(&w) {
                *a += (v - *a) * k;
            }
            avg_b += (b - avg_b) * k;
        }
        let obj_last = objective(&w, b, lambda, &z, labels);
        let obj_avg = objective(&avg_w, avg_b, lambda, &z, labels);
        trace.epoch_objective.push(obj_avg);
        if obj_last < best.0 {
            best = (obj_last, w.clone(), b);
        }
        if obj_avg < best.0 {
            best = (obj_avg, avg_w.clone(), avg_b);
        }
    }

    let (_, weights, bias) = best;
    let bias = best_bias(&weights, bias, &z, labels);
    Ok((
        SvmModel {
            weights,
            bias,
            scaler,
            lambda,
        },
        trace,
    ))
}

/// Trains on feature vectors; see [`train_svm_rows`].
pub fn train_svm(
    features: &[FeatureVector],
    labels: &[f64],
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<SvmModel> {
    if let Some(f) = features.first() {
        if features.iter().any(|g| g.descriptor() != f.descriptor()) {
            return Err(Error::Data("mixed feature descriptors".into()));
        }
    }
    let rows: Vec<&[f64]> = features.iter().map(|f| f.values()).collect();
    Ok(train_svm_rows(&rows, labels, lambda, epochs, seed)?.0)
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `w · standardize(x) + b`; positive means genuine.
    pub fn decision_raw(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "SVM expects {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        let z = self.scaler.apply(x);
        Ok(self.bias + self.weights.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn decision(&self, x: &FeatureVector) -> Result<f64> {
        self.decision_raw(x.values())
    }

    /// Training objective of this model on raw rows.
    pub fn objective(&self, features: &[&[f64]], labels: &[f64]) -> f64 {
        let z: Vec<Vec<f64>> = features.iter().map(|f| self.scaler.apply(f)).collect();
        objective(&self.weights, self.bias, self.lambda, &z, labels)
    }

    pub fn to_container(&self, seed: u64) -> Container {
        let d = self.dim();
        let mut params = Vec::with_capacity(3 * d + 1);
        params.extend_from_slice(&self.weights);
        params.push(self.bias);
        params.extend_from_slice(&self.scaler.mean);
        params.extend_from_slice(&self.scaler.std);
        Container {
            kind: CONTAINER_KIND.into(),
            architecture: serde_json::to_string(&SvmDescriptor {
                kind: CONTAINER_KIND.into(),
                dim: d,
            })
            .expect("descriptor serializes"),
            params,
            seed,
            config: serde_json::to_string(&SvmConfigSnapshot {
                lambda: self.lambda,
            })
            .expect("config serializes"),
        }
    }

    pub fn from_container(c: &Container, path: &Path) -> Result<Self> {
        c.expect_kind(CONTAINER_KIND, path)?;
        let desc: SvmDescriptor =
            serde_json::from_str(&c.architecture).map_err(|e| Error::parse(path, e.to_string()))?;
        let cfg: SvmConfigSnapshot =
            serde_json::from_str(&c.config).map_err(|e| Error::parse(path, e.to_string()))?;
        let d = desc.dim;
        if c.params.len() != 3 * d + 1 {
            return Err(Error::parse(path, "SVM parameter blob has wrong length"));
        }
        Ok(Self {
            weights: c.params[..d].to_vec(),
            bias: c.params[d],
            scaler: Scaler {
                mean: c.params[d + 1..2 * d + 1].to_vec(),
                std: c.params[2 * d + 1..].to_vec(),
            },
            lambda: cfg.lambda,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: u64) -> Result<()> {
        self.to_container(seed).write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_container(&Container::read(path)?, path)
    }
}
