//! Contrastive objective over embedding pairs:
//!
//! ```text
//! l = 1/(2N) · Σ [ y·S + (1 − y)·max(margin − S, 0) ],   S = ‖φ(x1) − φ(x2)‖
//! ```
//!
//! with `y = 1` marking a same-class pair.

use rayon::prelude::*;

use super::layers::Tensor;
use super::model::EmbeddingModel;
use crate::error::{Error, Result};

/// Two preprocessed images and whether they share a class.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub x1: Tensor,
    pub x2: Tensor,
    pub same: bool,
}

pub type PairBatch = [Pair];

/// Euclidean (not squared) distance between two embeddings.
pub fn pair_distance(e1: &[f64], e2: &[f64]) -> Result<f64> {
    if e1.len() != e2.len() {
        return Err(Error::Dimension(format!(
            "embedding lengths differ: {} vs {}",
            e1.len(),
            e2.len()
        )));
    }
    Ok(e1
        .iter()
        .zip(e2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Loss of a batch of `(distance, same_class)` entries.
pub fn contrastive_loss(batch: &[(f64, bool)], margin: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Parameter(
            "contrastive loss of an empty batch".into(),
        ));
    }
    if !(margin > 0.0) {
        return Err(Error::Parameter(format!(
            "margin must be positive, got {margin}"
        )));
    }
    let total: f64 = batch
        .iter()
        .map(|&(s, same)| if same { s } else { (margin - s).max(0.0) })
        .sum();
    Ok(total / (2.0 * batch.len() as f64))
}

/// `dl/dS` for one pair; the subgradient at the hinge kink `S = margin` is 0.
fn loss_slope(s: f64, same: bool, margin: f64, n: usize) -> f64 {
    let k = 1.0 / (2.0 * n as f64);
    if same {
        k
    } else if s < margin {
        -k
    } else {
        0.0
    }
}

/// Loss value and exact gradient with respect to every model parameter.
///
/// Pairs are evaluated in parallel and their gradients summed in pair order,
/// so the result does not depend on scheduling. At `S = 0` the distance is
/// not differentiable and the zero subgradient is used.
pub fn loss_gradients(
    model: &EmbeddingModel,
    batch: &PairBatch,
    margin: f64,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Parameter("gradient of an empty batch".into()));
    }
    if !(margin > 0.0) {
        return Err(Error::Parameter(format!(
            "margin must be positive, got {margin}"
        )));
    }
    let n = batch.len();
    let per_pair: Vec<(f64, Option<Vec<f64>>)> = batch
        .par_iter()
        .map(|pair| -> Result<(f64, Option<Vec<f64>>)> {
            let c1 = model.forward(&pair.x1)?;
            let c2 = model.forward(&pair.x2)?;
            let s = pair_distance(c1.embedding(), c2.embedding())?;
            let slope = loss_slope(s, pair.same, margin, n);
            if slope == 0.0 || s == 0.0 {
                return Ok((s, None));
            }
            let g1: Vec<f64> = c1
                .embedding()
                .iter()
                .zip(c2.embedding())
                .map(|(a, b)| slope * (a - b) / s)
                .collect();
            let g2: Vec<f64> = g1.iter().map(|v| -v).collect();
            let mut grad = vec![0.0; model.param_count()];
            model.backward(&c1, &g1, &mut grad);
            model.backward(&c2, &g2, &mut grad);
            Ok((s, Some(grad)))
        })
        .collect::<Result<_>>()?;

    let mut grad = vec![0.0; model.param_count()];
    let mut dists = Vec::with_capacity(n);
    for (pair, (s, g)) in batch.iter().zip(per_pair) {
        dists.push((s, pair.same));
        if let Some(g) = g {
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
    }
    Ok((contrastive_loss(&dists, margin)?, grad))
}

/// Loss of a batch under `model`, without gradients.
pub fn batch_loss(model: &EmbeddingModel, batch: &PairBatch, margin: f64) -> Result<f64> {
    let dists = batch
        .iter()
        .map(|p| {
            let s = pair_distance(&model.embed(&p.x1)?, &model.embed(&p.x2)?)?;
            Ok((s, p.same))
        })
        .collect::<Result<Vec<_>>>()?;
    contrastive_loss(&dists, margin)
}
