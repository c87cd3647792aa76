//! Losses, analytic gradients and a constant learning-rate SGD loop for the
//! hierarchical head.
//!
//! The total objective is
//! `w_sup·mean(L_sup) + w_sub·mean(L_sub) + w_con·L_con (+ w_flat·mean(L_flat))`
//! where `L_sup` is the super-category NLL, `L_sub` the NLL of the target
//! relation's joint probability (zero for background targets), and `L_con` a
//! supervised contrastive term over the non-background pair features of the
//! batch whose normaliser runs over negatives only. By default the features
//! are scaled to unit length before the contrastive term; without that the
//! term is unbounded below.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commonsense::AlignmentSets;
use crate::model::{RelationHierarchy, Triplet};
use crate::relhead::{head_activations, log_softmax, softmax, ComposedDistribution, HeadParameters, Linear};

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

pub const DEFAULT_LAMBDA_WEAK: f64 = 0.1;
pub const DEFAULT_LAMBDA_STRONG: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum TrainingError {
    #[error("relation {relation} does not belong to super-category {category}")]
    TargetCategoryMismatch { category: usize, relation: usize },
    #[error("sample targets are inconsistent: {0}")]
    BadTarget(String),
    #[error("input of length {actual} does not fit the head (expected {expected})")]
    InputDimension { expected: usize, actual: usize },
    #[error("empty training batch")]
    EmptyBatch,
    #[error("gradient and parameter shapes differ")]
    ShapeMismatch,
    #[error(transparent)]
    Head(#[from] crate::relhead::HeadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w_sup: f64,
    pub w_sub: f64,
    pub w_con: f64,
    /// Weight of the flat baseline head's NLL; only used when the head has one.
    pub w_flat: f64,
    pub temperature: f64,
    /// Feed unit-length features to the contrastive term.
    pub l2_normalize: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w_sup: 1.0, w_sub: 1.0, w_con: 1.0, w_flat: 0.0, temperature: 0.1, l2_normalize: true }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let ws = [self.w_sup, self.w_sub, self.w_con, self.w_flat];
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(TrainingError::BadTarget("loss weights must be finite and non-negative".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(TrainingError::BadTarget("temperature must be positive".into()));
        }
        Ok(())
    }
}

/// What a sample feeds into the head.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleInput {
    /// A ready pair feature of width `d`; the projection receives no gradient.
    Feature(Vec<f64>),
    /// A pooled pair vector of width `2·channels`, passed through the projection.
    Pooled(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: SampleInput,
    /// Super-category index; the hierarchy's background index means no relation.
    pub target_sc: usize,
    /// Relation index, present exactly when the target is not background.
    pub target_rel: Option<usize>,
}

impl TrainingSample {
    /// `(category, position within category)` of the target, or `None` for background.
    fn locate(&self, h: &RelationHierarchy) -> Result<Option<(usize, usize)>, TrainingError> {
        let bg = h.background_index();
        match (self.target_sc, self.target_rel) {
            (sc, None) if sc == bg => Ok(None),
            (sc, Some(rel)) if sc < bg => match h.locate(rel) {
                Some((c, pos)) if c == sc => Ok(Some((c, pos))),
                _ => Err(TrainingError::TargetCategoryMismatch { category: sc, relation: rel }),
            },
            (sc, rel) => Err(TrainingError::BadTarget(format!("super-category {sc} with relation {rel:?}"))),
        }
    }

    /// Index in the flat head's output (relations then background).
    fn flat_target(&self, h: &RelationHierarchy) -> usize {
        self.target_rel.unwrap_or(h.num_relations())
    }

    fn feature(&self, p: &HeadParameters) -> Result<Vec<f64>, TrainingError> {
        match &self.input {
            SampleInput::Feature(x) => {
                if x.len() != p.feature_dim() {
                    return Err(TrainingError::InputDimension { expected: p.feature_dim(), actual: x.len() });
                }
                Ok(x.clone())
            }
            SampleInput::Pooled(z) => {
                if z.len() != p.pooled_dim() {
                    return Err(TrainingError::InputDimension { expected: p.pooled_dim(), actual: z.len() });
                }
                Ok(p.proj.forward(z))
            }
        }
    }
}

fn nll(prob: f64) -> f64 {
    -prob.max(PROB_FLOOR).ln()
}

/// Super-category negative log-likelihood.
pub fn loss_super(cd: &ComposedDistribution, target_sc: usize) -> f64 {
    nll(cd.r_sc[target_sc])
}

/// Negative log of the target relation's joint probability; zero for background.
pub fn loss_sub(
    cd: &ComposedDistribution,
    target_sc: usize,
    target_rel: Option<usize>,
    h: &RelationHierarchy,
) -> Result<f64, TrainingError> {
    if target_sc == h.background_index() {
        return Ok(0.0);
    }
    let rel = target_rel.ok_or_else(|| TrainingError::BadTarget("relation target missing".into()))?;
    match h.locate(rel) {
        Some((c, pos)) if c == target_sc => Ok(nll(cd.joint[c][pos])),
        _ => Err(TrainingError::TargetCategoryMismatch { category: target_sc, relation: rel }),
    }
}

/// Supervised contrastive loss and its gradient with respect to each feature.
///
/// For an anchor `a` with positives `P` (same label, not `a`) and negatives
/// `N` (other labels), the anchor term is
/// `(1/|P|) Σ_p [ -x_a·x_p/τ + log Σ_n exp(x_a·x_n/τ) ]`. Anchors with empty
/// `N` contribute zero; the result is averaged over anchors with non-empty `P`.
pub fn contrastive_with_grad(features: &[&[f64]], labels: &[usize], tau: f64) -> (f64, Vec<Vec<f64>>) {
    let n = features.len();
    let dim = features.first().map_or(0, |f| f.len());
    let mut grads = vec![vec![0.0; dim]; n];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let anchors = (0..n).filter(|&a| (0..n).any(|j| j != a && labels[j] == labels[a])).count();
    if anchors == 0 {
        return (0.0, grads);
    }
    let scale = 1.0 / anchors as f64;
    let mut total = 0.0;

    for a in 0..n {
        let pos: Vec<usize> = (0..n).filter(|&j| j != a && labels[j] == labels[a]).collect();
        let neg: Vec<usize> = (0..n).filter(|&j| labels[j] != labels[a]).collect();
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let xa = features[a];
        let neg_logits: Vec<f64> = neg.iter().map(|&j| dot(xa, features[j]) / tau).collect();
        let max = neg_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + neg_logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let inv_p = 1.0 / pos.len() as f64;

        let pos_mean: f64 = pos.iter().map(|&j| dot(xa, features[j]) / tau).sum::<f64>() * inv_p;
        total += lse - pos_mean;

        let weights = softmax(&neg_logits);
        for &j in &pos {
            for k in 0..dim {
                grads[a][k] -= scale * inv_p * features[j][k] / tau;
                grads[j][k] -= scale * inv_p * xa[k] / tau;
            }
        }
        for (&j, w) in neg.iter().zip(&weights) {
            for k in 0..dim {
                grads[a][k] += scale * w * features[j][k] / tau;
                grads[j][k] += scale * w * xa[k] / tau;
            }
        }
    }
    (total * scale, grads)
}

pub fn loss_contrastive(batch: &[(&[f64], usize)], tau: f64) -> f64 {
    let features: Vec<&[f64]> = batch.iter().map(|(x, _)| *x).collect();
    let labels: Vec<usize> = batch.iter().map(|(_, l)| *l).collect();
    contrastive_with_grad(&features, &labels, tau).0
}

/// Commonsense distillation penalty for one predicted triplet.
pub fn loss_distill(t: &Triplet, sets: &AlignmentSets, lambda_weak: f64, lambda_strong: f64) -> f64 {
    let mut penalty = 0.0;
    if !sets.aligned.contains(t) {
        penalty += lambda_weak;
    }
    if sets.violated.contains(t) {
        penalty += lambda_strong;
    }
    penalty
}

/// Gradients laid out like [`HeadParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet(pub HeadParameters);

impl std::ops::Deref for GradientSet {
    type Target = HeadParameters;

    fn deref(&self) -> &HeadParameters {
        &self.0
    }
}

impl GradientSet {
    pub fn max_abs(&self) -> f64 {
        self.0.blocks().iter().flat_map(|b| b.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Per-term breakdown of a batch objective.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub sup: f64,
    pub sub: f64,
    pub contrastive: f64,
    pub flat: f64,
    pub total: f64,
}

fn accumulate(layer: &mut Linear, x: &[f64], g: &[f64]) {
    layer.weight.add_outer(x, g);
    for (b, gi) in layer.bias.iter_mut().zip(g) {
        *b += gi;
    }
}

/// NLL of `log_probs[target]` with the probability floor, plus its logit
/// gradient `softmax − onehot` (zero once the floor is active).
fn nll_with_grad(log_probs: &[f64], target: usize) -> (f64, Option<Vec<f64>>) {
    let lp = log_probs[target];
    if lp < PROB_FLOOR.ln() {
        return (-PROB_FLOOR.ln(), None);
    }
    let mut g: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
    g[target] -= 1.0;
    (-lp, Some(g))
}

/// Total batch loss and its analytic gradient.
pub fn total_loss_and_grads(
    samples: &[TrainingSample],
    p: &HeadParameters,
    h: &RelationHierarchy,
    w: &LossWeights,
) -> Result<(LossBreakdown, GradientSet), TrainingError> {
    if samples.is_empty() {
        return Err(TrainingError::EmptyBatch);
    }
    w.validate()?;
    p.check_hierarchy(h)?;
    let use_flat = w.w_flat > 0.0 && p.flat.is_some();
    let n = samples.len() as f64;
    let mut grads = p.zeros_like();
    let mut out = LossBreakdown::default();

    let targets = samples.iter().map(|s| s.locate(h)).collect::<Result<Vec<_>, _>>()?;
    let features = samples.iter().map(|s| s.feature(p)).collect::<Result<Vec<_>, _>>()?;

    // Contrastive term over non-background samples.
    let con_idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].target_rel.is_some()).collect();
    let mut dx: Vec<Vec<f64>> = vec![vec![0.0; p.feature_dim()]; samples.len()];
    if w.w_con > 0.0 && con_idx.len() >= 2 {
        let scaled: Vec<(Vec<f64>, f64)> = con_idx
            .iter()
            .map(|&i| {
                let x = &features[i];
                let norm = if w.l2_normalize { x.iter().map(|v| v * v).sum::<f64>().sqrt() } else { 1.0 };
                (x.iter().map(|v| v / norm).collect(), norm)
            })
            .collect();
        let feats: Vec<&[f64]> = scaled.iter().map(|(y, _)| y.as_slice()).collect();
        let labels: Vec<usize> = con_idx.iter().map(|&i| samples[i].target_rel.unwrap_or_default()).collect();
        let (loss, g) = contrastive_with_grad(&feats, &labels, w.temperature);
        out.contrastive = loss;
        for ((&i, gi), (y, norm)) in con_idx.iter().zip(g).zip(&scaled) {
            // d(x/|x|)ᵀg = (g − y·(yᵀg)) / |x|
            let proj = if w.l2_normalize { y.iter().zip(&gi).map(|(a, b)| a * b).sum::<f64>() } else { 0.0 };
            for ((d, v), yk) in dx[i].iter_mut().zip(&gi).zip(y) {
                *d += w.w_con * (v - yk * proj) / norm;
            }
        }
    }

    for (i, sample) in samples.iter().enumerate() {
        let x = &features[i];
        let act = head_activations(x, p);
        let sc_lsm = log_softmax(&act.sc_logits);
        let mut d_sc = vec![0.0; sc_lsm.len()];

        let (l_sup, g_sup) = nll_with_grad(&sc_lsm, sample.target_sc);
        out.sup += l_sup / n;
        if let Some(g) = g_sup {
            for (d, v) in d_sc.iter_mut().zip(g) {
                *d += w.w_sup / n * v;
            }
        }

        if let Some((c, pos)) = targets[i] {
            let cat_lsm = log_softmax(&act.cat_logits[c]);
            let lj = cat_lsm[pos] + sc_lsm[c];
            if lj >= PROB_FLOOR.ln() {
                out.sub += -lj / n;
                let mut d_cat: Vec<f64> = cat_lsm.iter().map(|l| l.exp() * w.w_sub / n).collect();
                d_cat[pos] -= w.w_sub / n;
                for (k, l) in sc_lsm.iter().enumerate() {
                    d_sc[k] += w.w_sub / n * (l.exp() - if k == c { 1.0 } else { 0.0 });
                }
                for (d, v) in dx[i].iter_mut().zip(p.categories[c].weight.right_mul(&d_cat)) {
                    *d += v;
                }
                accumulate(&mut grads.categories[c], x, &d_cat);
            } else {
                out.sub += -PROB_FLOOR.ln() / n;
            }
        }

        if use_flat {
            let flat = p.flat.as_ref().expect("checked above");
            let (l_flat, g_flat) = nll_with_grad(&log_softmax(&flat.forward(x)), sample.flat_target(h));
            out.flat += l_flat / n;
            if let Some(g) = g_flat {
                let g: Vec<f64> = g.into_iter().map(|v| v * w.w_flat / n).collect();
                for (d, v) in dx[i].iter_mut().zip(flat.weight.right_mul(&g)) {
                    *d += v;
                }
                accumulate(grads.flat.as_mut().expect("same layout"), x, &g);
            }
        }

        for (d, v) in dx[i].iter_mut().zip(p.super_cat.weight.right_mul(&d_sc)) {
            *d += v;
        }
        accumulate(&mut grads.super_cat, x, &d_sc);

        if let SampleInput::Pooled(z) = &sample.input {
            accumulate(&mut grads.proj, z, &dx[i]);
        }
    }

    out.total = w.w_sup * out.sup + w.w_sub * out.sub + w.w_con * out.contrastive
        + if use_flat { w.w_flat * out.flat } else { 0.0 };
    Ok((out, GradientSet(grads)))
}

/// Central differences `(f(θ+ε) − f(θ−ε)) / 2ε` for every entry of `theta`.
pub fn central_differences<F: FnMut(&[f64]) -> f64>(mut f: F, theta: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            probe[i] = theta[i] + eps;
            let plus = f(&probe);
            probe[i] = theta[i] - eps;
            let minus = f(&probe);
            probe[i] = theta[i];
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

/// Central-difference gradient of `loss_fn` with respect to every parameter.
pub fn finite_difference_gradients<F: FnMut(&HeadParameters) -> f64>(
    mut loss_fn: F,
    p: &HeadParameters,
    eps: f64,
) -> GradientSet {
    let mut probe = p.clone();
    let mut grads = p.zeros_like();
    let sizes: Vec<usize> = p.blocks().iter().map(|b| b.len()).collect();
    for (block, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let orig = probe.blocks()[block][i];
            probe.blocks_mut()[block][i] = orig + eps;
            let plus = loss_fn(&probe);
            probe.blocks_mut()[block][i] = orig - eps;
            let minus = loss_fn(&probe);
            probe.blocks_mut()[block][i] = orig;
            grads.blocks_mut()[block][i] = (plus - minus) / (2.0 * eps);
        }
    }
    GradientSet(grads)
}

/// `θ ← θ − lr·g`.
pub fn sgd_step(p: &HeadParameters, g: &GradientSet, lr: f64) -> Result<HeadParameters, TrainingError> {
    if !p.same_shape(&g.0) {
        return Err(TrainingError::ShapeMismatch);
    }
    let mut next = p.clone();
    for (dst, src) in next.blocks_mut().into_iter().zip(g.0.blocks()) {
        for (v, d) in dst.iter_mut().zip(src) {
            *v -= lr * d;
        }
    }
    Ok(next)
}

/// Fraction of samples whose joint argmax (over all relations plus background)
/// equals the target.
pub fn top1_accuracy(samples: &[TrainingSample], p: &HeadParameters, h: &RelationHierarchy) -> Result<f64, TrainingError> {
    if samples.is_empty() {
        return Err(TrainingError::EmptyBatch);
    }
    let mut correct = 0usize;
    for s in samples {
        let cd = head_activations(&s.feature(p)?, p).compose();
        let predicted = cd.top1().map(|(c, pos)| h.within_category_order[c][pos]);
        if predicted == s.target_rel {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: HeadParameters,
    /// Loss before each step, followed by the loss after the last step.
    pub losses: Vec<f64>,
}

/// Full-batch SGD for a fixed number of steps.
pub fn train(
    samples: &[TrainingSample],
    init: HeadParameters,
    h: &RelationHierarchy,
    w: &LossWeights,
    lr: f64,
    steps: usize,
) -> Result<TrainOutcome, TrainingError> {
    let mut params = init;
    let mut losses = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let (loss, g) = total_loss_and_grads(samples, &params, h, w)?;
        losses.push(loss.total);
        params = sgd_step(&params, &g, lr)?;
    }
    losses.push(total_loss_and_grads(samples, &params, h, w)?.0.total);
    Ok(TrainOutcome { params, losses })
}

/// Seeded generator of separable pooled pair vectors, one Gaussian cluster
/// per relation plus one for background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_samples: usize,
    /// Channels of the simulated feature map; pooled vectors have twice this width.
    pub channels: usize,
    pub category_sizes: Vec<usize>,
    /// Share of samples labelled background.
    pub background_fraction: f64,
    /// Scale of the class centres.
    pub separation: f64,
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_samples: 200,
            channels: 8,
            category_sizes: vec![2, 2, 2],
            background_fraction: 1.0 / 7.0,
            separation: 1.0,
            noise: 0.3,
        }
    }
}

pub fn synthetic_samples<R: Rng>(cfg: &SyntheticConfig, rng: &mut R) -> Vec<TrainingSample> {
    let h = RelationHierarchy::contiguous(&cfg.category_sizes);
    let relations = h.num_relations();
    let dim = 2 * cfg.channels;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let centres: Vec<Vec<f64>> = (0..=relations)
        .map(|_| (0..dim).map(|_| cfg.separation * unit.sample(rng)).collect())
        .collect();
    let n_bg = (cfg.num_samples as f64 * cfg.background_fraction).round() as usize;
    (0..cfg.num_samples)
        .map(|i| {
            let class = if i < n_bg { relations } else { (i - n_bg) % relations.max(1) };
            let z = centres[class].iter().map(|c| c + cfg.noise * unit.sample(rng)).collect();
            let (target_sc, target_rel) = if class == relations {
                (h.background_index(), None)
            } else {
                (h.category_of(class).expect("contiguous"), Some(class))
            };
            TrainingSample { input: SampleInput::Pooled(z), target_sc, target_rel }
        })
        .collect()
}
