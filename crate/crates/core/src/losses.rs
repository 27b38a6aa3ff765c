//! Differentiable training objectives.
//!
//! Each loss returns its value together with the analytic gradient with
//! respect to its differentiable argument. Segmentation losses take a batch
//! of prediction maps and sum over every class, pixel and batch item.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ClassMap, EmbeddingBatch, SoftLabelMap};

/// A loss value and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult<G> {
    pub value: f64,
    pub grad: G,
}

/// How the cross-entropy sum is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Plain sum over classes, pixels and batch items.
    Sum,
    /// Sum divided by the number of pixel positions in the batch.
    #[default]
    MeanOverPixels,
}

/// Granularity of the Dice quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiceMode {
    /// One quotient over the whole batch.
    #[default]
    BatchGlobal,
    /// One quotient per image, averaged over the batch.
    PerImage,
}

/// Constants of the segmentation and alignment losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the similarity-alignment term.
    pub lambda: f64,
    /// Dice denominator smoothing.
    pub epsilon: f64,
    /// Floor applied to probabilities inside the log.
    pub prob_clamp: f64,
    pub ce_reduction: Reduction,
    pub dice_mode: DiceMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            epsilon: 1e-5,
            prob_clamp: 1e-7,
            ce_reduction: Reduction::MeanOverPixels,
            dice_mode: DiceMode::BatchGlobal,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("dice epsilon must be positive"));
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 1.0) {
            return Err(Error::invalid("probability clamp must lie in (0, 1)"));
        }
        Ok(())
    }
}

fn check_pairs(pred: &[SoftLabelMap], target: &[SoftLabelMap]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    for (p, t) in pred.iter().zip(target) {
        if !p.same_shape(t) {
            return Err(Error::shape(format!(
                "prediction {}x{}x{} vs target {}x{}x{}",
                p.classes, p.height, p.width, t.classes, t.height, t.width
            )));
        }
    }
    Ok(())
}

fn zeros_like(maps: &[SoftLabelMap]) -> Vec<ClassMap> {
    maps.iter()
        .map(|m| ClassMap::zeros(m.classes, m.height, m.width))
        .collect()
}

// Dice over a group of maps sharing one quotient; gradient scaled by `weight`.
fn dice_group(pred: &[SoftLabelMap], target: &[SoftLabelMap], eps: f64, weight: f64, grad: &mut [ClassMap]) -> f64 {
    let mut inter = 0.0;
    let mut sum_p = 0.0;
    let mut sum_t = 0.0;
    for (p, t) in pred.iter().zip(target) {
        for (a, b) in p.data.iter().zip(&t.data) {
            inter += a * b;
            sum_p += a;
            sum_t += b;
        }
    }
    let denom = sum_p + sum_t + eps;
    let value = 1.0 - 2.0 * inter / denom;
    let scale = -2.0 * weight / (denom * denom);
    for (g, t) in grad.iter_mut().zip(target) {
        for (gi, &ti) in g.data.iter_mut().zip(&t.data) {
            *gi += scale * (ti * denom - inter);
        }
    }
    value
}

/// `1 − 2 Σ P·L / (Σ P + Σ L + ε)`.
pub fn soft_dice_loss(
    pred: &[SoftLabelMap],
    target: &[SoftLabelMap],
    eps: f64,
    mode: DiceMode,
) -> Result<LossResult<Vec<ClassMap>>> {
    check_pairs(pred, target)?;
    let mut grad = zeros_like(pred);
    let value = match mode {
        DiceMode::BatchGlobal => dice_group(pred, target, eps, 1.0, &mut grad),
        DiceMode::PerImage => {
            let w = 1.0 / pred.len() as f64;
            let mut total = 0.0;
            for i in 0..pred.len() {
                total += w * dice_group(&pred[i..=i], &target[i..=i], eps, w, &mut grad[i..=i]);
            }
            total
        }
    };
    Ok(LossResult { value, grad })
}

/// `−Σ L · log(max(P, clamp))`, optionally averaged over pixels.
///
/// Where `P` falls below the clamp the gradient is zero.
pub fn soft_cross_entropy(
    pred: &[SoftLabelMap],
    target: &[SoftLabelMap],
    prob_clamp: f64,
    reduction: Reduction,
) -> Result<LossResult<Vec<ClassMap>>> {
    check_pairs(pred, target)?;
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::MeanOverPixels => {
            1.0 / pred.iter().map(ClassMap::plane_len).sum::<usize>() as f64
        }
    };
    let mut grad = zeros_like(pred);
    let mut value = 0.0;
    for ((p, t), g) in pred.iter().zip(target).zip(grad.iter_mut()) {
        for ((&pi, &ti), gi) in p.data.iter().zip(&t.data).zip(g.data.iter_mut()) {
            if ti == 0.0 {
                continue;
            }
            if pi > prob_clamp {
                value -= ti * pi.min(1.0).ln();
                *gi = -scale * ti / pi;
            } else {
                value -= ti * prob_clamp.ln();
            }
        }
    }
    Ok(LossResult {
        value: value * scale,
        grad,
    })
}

/// Dice plus cross-entropy; values and gradients add.
pub fn soft_segmentation_loss(
    pred: &[SoftLabelMap],
    target: &[SoftLabelMap],
    cfg: &LossConfig,
) -> Result<LossResult<Vec<ClassMap>>> {
    let dice = soft_dice_loss(pred, target, cfg.epsilon, cfg.dice_mode)?;
    let ce = soft_cross_entropy(pred, target, cfg.prob_clamp, cfg.ce_reduction)?;
    let mut grad = dice.grad;
    for (g, c) in grad.iter_mut().zip(&ce.grad) {
        for (a, b) in g.data.iter_mut().zip(&c.data) {
            *a += b;
        }
    }
    Ok(LossResult {
        value: dice.value + ce.value,
        grad,
    })
}

/// Gradient with respect to logits given the gradient with respect to the
/// softmax probabilities: `g_ℓc = p_c (g_c − Σ_k p_k g_k)`.
pub fn softmax_backward(probs: &SoftLabelMap, grad_probs: &ClassMap) -> Result<ClassMap> {
    if !probs.same_shape(grad_probs) {
        return Err(Error::shape("softmax backward shape mismatch"));
    }
    let n = probs.plane_len();
    let c = probs.classes;
    let mut out = ClassMap::zeros(c, probs.height, probs.width);
    for p in 0..n {
        let dot: f64 = (0..c).map(|k| probs.data[k * n + p] * grad_probs.data[k * n + p]).sum();
        for k in 0..c {
            let i = k * n + p;
            out.data[i] = probs.data[i] * (grad_probs.data[i] - dot);
        }
    }
    Ok(out)
}

/// Nearest real neighbour of every synthetic row.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestNeighbors {
    /// Euclidean distance to the nearest real row.
    pub distances: Vec<f64>,
    /// Index of that row; ties go to the lowest index.
    pub indices: Vec<usize>,
}

/// `d_i = min_j ‖syn_i − real_j‖₂` for each synthetic row.
pub fn nn_min_distances(syn: &EmbeddingBatch, real: &EmbeddingBatch) -> Result<NearestNeighbors> {
    if syn.dim != real.dim {
        return Err(Error::shape(format!(
            "embedding dims differ: {} vs {}",
            syn.dim, real.dim
        )));
    }
    if real.rows == 0 || syn.rows == 0 {
        return Err(Error::invalid("empty embedding batch"));
    }
    let mut distances = Vec::with_capacity(syn.rows);
    let mut indices = Vec::with_capacity(syn.rows);
    for i in 0..syn.rows {
        let s = syn.row(i);
        let mut best = f64::INFINITY;
        let mut best_j = 0;
        for j in 0..real.rows {
            let d2: f64 = s
                .iter()
                .zip(real.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 < best {
                best = d2;
                best_j = j;
            }
        }
        distances.push(best.sqrt());
        indices.push(best_j);
    }
    Ok(NearestNeighbors { distances, indices })
}

/// Mean nearest-neighbour distance from synthetic to real embeddings.
///
/// The gradient flows to the synthetic rows only; a row sitting exactly on
/// its neighbour gets a zero subgradient.
pub fn sa_loss(syn: &EmbeddingBatch, real: &EmbeddingBatch) -> Result<(LossResult<EmbeddingBatch>, NearestNeighbors)> {
    let nn = nn_min_distances(syn, real)?;
    let m = syn.rows as f64;
    let mut grad = EmbeddingBatch::zeros(syn.rows, syn.dim);
    for i in 0..syn.rows {
        let d = nn.distances[i];
        if d > 0.0 {
            let r = real.row(nn.indices[i]);
            let scale = 1.0 / (m * d);
            for ((g, &a), &b) in grad.row_mut(i).iter_mut().zip(syn.row(i)).zip(r) {
                *g = (a - b) * scale;
            }
        }
    }
    let value = nn.distances.iter().sum::<f64>() / m;
    Ok((LossResult { value, grad }, nn))
}

/// `L_soft + λ · L_SA`.
pub fn total_loss(soft: f64, sa: f64, lambda: f64) -> f64 {
    soft + lambda * sa
}
