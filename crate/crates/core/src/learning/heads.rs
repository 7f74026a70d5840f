use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LearningError;
use crate::gnn::{sigmoid, softplus, DenseMatrix};

/// Output encoding of a per-selection task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Shared score with three ordered thresholds.
    Ordinal,
    /// Four independent "reached stage k" outputs.
    Multilabel,
}

impl HeadKind {
    pub fn outputs(self) -> usize {
        match self {
            HeadKind::Ordinal => 3,
            HeadKind::Multilabel => 4,
        }
    }

    pub fn targets(self, stage: u8) -> Result<Vec<f64>, LearningError> {
        Ok(match self {
            HeadKind::Ordinal => ordinal_targets(stage)?.to_vec(),
            HeadKind::Multilabel => multilabel_targets(stage)?.to_vec(),
        })
    }
}

fn check_stage(stage: u8) -> Result<(), LearningError> {
    if stage > 3 {
        return Err(LearningError::InvalidStage(stage));
    }
    Ok(())
}

/// `[y>0, y>1, y>2]`
pub fn ordinal_targets(stage: u8) -> Result<[f64; 3], LearningError> {
    check_stage(stage)?;
    Ok(std::array::from_fn(|k| f64::from(stage > k as u8)))
}

/// `[y≥0, y≥1, y≥2, y≥3]`
pub fn multilabel_targets(stage: u8) -> Result<[f64; 4], LearningError> {
    check_stage(stage)?;
    Ok(std::array::from_fn(|k| f64::from(stage >= k as u8)))
}

/// Output layer of one selection.
///
/// Ordinal heads keep the score vector in `weight` (1 row) and raw
/// threshold parameters `r` in `bias`: `b1 = r1`, `b2 = b1 + softplus(r2)`,
/// `b3 = b2 + softplus(r3)`. Multilabel heads keep one row and one bias per
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskHead {
    pub selection_id: String,
    pub kind: HeadKind,
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl TaskHead {
    pub fn new(selection_id: &str, kind: HeadKind, hidden: usize, rng: &mut impl Rng) -> Self {
        let rows = match kind {
            HeadKind::Ordinal => 1,
            HeadKind::Multilabel => 4,
        };
        let limit = (6.0 / (rows + hidden) as f64).sqrt();
        let weight = DenseMatrix::from_vec(
            rows,
            hidden,
            (0..rows * hidden).map(|_| rng.random_range(-limit..limit)).collect(),
        );
        // ordinal thresholds start at 0, 1, 2
        let gap = (std::f64::consts::E - 1.0).ln();
        let bias = match kind {
            HeadKind::Ordinal => vec![0.0, gap, gap],
            HeadKind::Multilabel => vec![0.0; 4],
        };
        TaskHead {
            selection_id: selection_id.to_string(),
            kind,
            weight,
            bias,
        }
    }

    pub(crate) fn zeros_like(&self) -> Self {
        TaskHead {
            selection_id: self.selection_id.clone(),
            kind: self.kind,
            weight: DenseMatrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn hidden(&self) -> usize {
        self.weight.cols()
    }

    /// Ordered thresholds `b1 ≤ b2 ≤ b3` of an ordinal head.
    pub fn thresholds(&self) -> [f64; 3] {
        let b1 = self.bias[0];
        let b2 = b1 + softplus(self.bias[1]);
        let b3 = b2 + softplus(self.bias[2]);
        [b1, b2, b3]
    }

    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        let dot = |row: usize| -> f64 { self.weight.row(row).iter().zip(h).map(|(w, x)| w * x).sum() };
        match self.kind {
            HeadKind::Ordinal => {
                let s = dot(0);
                self.thresholds().iter().map(|b| s - b).collect()
            }
            HeadKind::Multilabel => (0..4).map(|k| dot(k) + self.bias[k]).collect(),
        }
    }

    pub fn probabilities(&self, h: &[f64]) -> Vec<f64> {
        self.logits(h).into_iter().map(sigmoid).collect()
    }

    /// Adds `scale · ∂loss` to `grads` and `dh`, returns the unscaled loss.
    pub(crate) fn accumulate(
        &self,
        h: &[f64],
        targets: &[f64],
        scale: f64,
        grads: &mut TaskHead,
        dh: &mut [f64],
    ) -> f64 {
        let z = self.logits(h);
        let loss = bce_sum(&z, targets);
        let dz: Vec<f64> = z
            .iter()
            .zip(targets)
            .map(|(&z, &t)| scale * (sigmoid(z) - t))
            .collect();
        match self.kind {
            HeadKind::Ordinal => {
                let ds: f64 = dz.iter().sum();
                for ((g, d), (&a, &x)) in grads
                    .weight
                    .row_mut(0)
                    .iter_mut()
                    .zip(dh.iter_mut())
                    .zip(self.weight.row(0).iter().zip(h))
                {
                    *g += ds * x;
                    *d += ds * a;
                }
                // logit_k = s - b_k
                let db = [-dz[0], -dz[1], -dz[2]];
                grads.bias[0] += db[0] + db[1] + db[2];
                grads.bias[1] += (db[1] + db[2]) * sigmoid(self.bias[1]);
                grads.bias[2] += db[2] * sigmoid(self.bias[2]);
            }
            HeadKind::Multilabel => {
                for (k, &d) in dz.iter().enumerate() {
                    for ((g, dhx), (&w, &x)) in grads
                        .weight
                        .row_mut(k)
                        .iter_mut()
                        .zip(dh.iter_mut())
                        .zip(self.weight.row(k).iter().zip(h))
                    {
                        *g += d * x;
                        *dhx += d * w;
                    }
                    grads.bias[k] += d;
                }
            }
        }
        loss
    }
}

/// `Σ_k softplus(z_k) - t_k z_k`, the logit form of binary cross-entropy.
fn bce_sum(logits: &[f64], targets: &[f64]) -> f64 {
    logits
        .iter()
        .zip(targets)
        .map(|(&z, &t)| softplus(z) - t * z)
        .sum()
}

/// Summed binary cross-entropy of one head on one embedding.
pub fn task_loss(h: &[f64], head: &TaskHead, stage: u8) -> Result<f64, LearningError> {
    if h.len() != head.hidden() {
        return Err(LearningError::Config(format!(
            "embedding has {} values, head expects {}",
            h.len(),
            head.hidden()
        )));
    }
    let loss = bce_sum(&head.logits(h), &head.kind.targets(stage)?);
    if !loss.is_finite() {
        return Err(LearningError::NonFiniteLoss);
    }
    Ok(loss)
}

/// Suffix maximum, so that entry k is the largest probability at or after k.
pub fn monotone_probabilities(probs: &[f64]) -> Vec<f64> {
    let mut out = probs.to_vec();
    for k in (0..out.len().saturating_sub(1)).rev() {
        out[k] = out[k].max(out[k + 1]);
    }
    out
}

pub fn predict_stage(kind: HeadKind, probs: &[f64]) -> u8 {
    match kind {
        HeadKind::Ordinal => probs.iter().filter(|&&p| p > 0.5).count() as u8,
        HeadKind::Multilabel => monotone_probabilities(probs)
            .iter()
            .rposition(|&p| p > 0.5)
            .map_or(0, |k| k as u8),
    }
}

/// Probability of reaching stage 2 or beyond.
pub fn score_high(kind: HeadKind, probs: &[f64]) -> f64 {
    match kind {
        HeadKind::Ordinal => probs[1],
        HeadKind::Multilabel => monotone_probabilities(probs)[2],
    }
}
