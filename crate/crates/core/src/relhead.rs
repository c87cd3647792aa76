//! Relation classification heads.
//!
//! A directed object pair is turned into a feature vector by masking the
//! image feature map with each object's box, pooling, concatenating in both
//! orders and projecting. The hierarchical head then predicts a distribution
//! over super-categories plus background and, per super-category, a
//! conditional distribution over its relations; the product of the two gives
//! joint relation probabilities. Each edge yields one candidate per
//! super-category.

use std::cmp::Ordering;

use rand::Rng;
use thiserror::Error;

use crate::model::{BoundingBox, PredicateCandidate, RelationHierarchy};
use crate::tensor::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum HeadError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("parameters carry no flat classification head")]
    MissingFlatHead,
    #[error("box [{x}, {y}, {w}, {h}] does not overlap the {width}x{height} feature map")]
    BoxOutsideMap { x: f64, y: f64, w: f64, h: f64, width: usize, height: usize },
}

fn mismatch(msg: impl Into<String>) -> HeadError {
    HeadError::DimensionMismatch(msg.into())
}

/// Image features of shape `channels × height × width`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, HeadError> {
        if data.len() != channels * height * width {
            return Err(mismatch(format!(
                "feature map data has {} values, expected {channels}x{height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(mismatch("feature map contains non-finite values"));
        }
        Ok(Self { channels, height, width, data })
    }

    /// Appends a `height × width` depth map as an extra channel.
    pub fn with_depth(mut self, depth: &[f64]) -> Result<Self, HeadError> {
        if depth.len() != self.height * self.width {
            return Err(mismatch(format!(
                "depth map has {} values, expected {}x{}",
                depth.len(),
                self.height,
                self.width
            )));
        }
        self.data.extend_from_slice(depth);
        self.channels += 1;
        Ok(self)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn at(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[(c * self.height + r) * self.width + col]
    }

    /// Grid cells overlapping the box, as half-open row and column ranges.
    fn cell_span(&self, b: &BoundingBox) -> Result<(std::ops::Range<usize>, std::ops::Range<usize>), HeadError> {
        let span = |lo: f64, hi: f64, n: usize| {
            let start = lo.max(0.0).floor() as usize;
            let end = (hi.min(n as f64).ceil().max(0.0) as usize).min(n);
            start..end
        };
        let cols = span(b.x, b.right(), self.width);
        let rows = span(b.y, b.bottom(), self.height);
        if cols.is_empty() || rows.is_empty() {
            return Err(HeadError::BoxOutsideMap {
                x: b.x,
                y: b.y,
                w: b.w,
                h: b.h,
                width: self.width,
                height: self.height,
            });
        }
        Ok((rows, cols))
    }

    /// Mean of each channel over the cells covered by the box.
    pub fn masked_mean(&self, b: &BoundingBox) -> Result<Vec<f64>, HeadError> {
        let (rows, cols) = self.cell_span(b)?;
        let count = (rows.len() * cols.len()) as f64;
        Ok((0..self.channels)
            .map(|c| {
                let mut acc = 0.0;
                for r in rows.clone() {
                    let base = (c * self.height + r) * self.width;
                    acc += self.data[base + cols.start..base + cols.end].iter().sum::<f64>();
                }
                acc / count
            })
            .collect())
    }
}

/// Affine map `y = xᵀW + b` with `W` of shape `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: Matrix::zeros(inputs, outputs), bias: vec![0.0; outputs] }
    }

    pub fn random<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (inputs.max(1) as f64).sqrt();
        Self { weight: Matrix::random(inputs, outputs, scale, rng), bias: vec![0.0; outputs] }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.left_mul(x);
        for (o, b) in y.iter_mut().zip(&self.bias) {
            *o += b;
        }
        y
    }

    fn same_shape(&self, other: &Linear) -> bool {
        self.weight.rows() == other.weight.rows()
            && self.weight.cols() == other.weight.cols()
            && self.bias.len() == other.bias.len()
    }
}

/// Trainable state of the relation head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParameters {
    /// Pooled pair vector (`2·channels`) to pair feature (`d`).
    pub proj: Linear,
    /// Pair feature to super-categories plus background.
    pub super_cat: Linear,
    /// One conditional classifier per super-category.
    pub categories: Vec<Linear>,
    /// Baseline flat head over all relations plus background.
    pub flat: Option<Linear>,
}

impl HeadParameters {
    pub fn zeros(pooled_dim: usize, d: usize, category_sizes: &[usize], with_flat: bool) -> Self {
        let relations: usize = category_sizes.iter().sum();
        Self {
            proj: Linear::zeros(pooled_dim, d),
            super_cat: Linear::zeros(d, category_sizes.len() + 1),
            categories: category_sizes.iter().map(|&n| Linear::zeros(d, n)).collect(),
            flat: with_flat.then(|| Linear::zeros(d, relations + 1)),
        }
    }

    pub fn random<R: Rng>(pooled_dim: usize, d: usize, category_sizes: &[usize], with_flat: bool, rng: &mut R) -> Self {
        let relations: usize = category_sizes.iter().sum();
        Self {
            proj: Linear::random(pooled_dim, d, rng),
            super_cat: Linear::random(d, category_sizes.len() + 1, rng),
            categories: category_sizes.iter().map(|&n| Linear::random(d, n, rng)).collect(),
            flat: with_flat.then(|| Linear::random(d, relations + 1, rng)),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.proj.outputs()
    }

    pub fn pooled_dim(&self) -> usize {
        self.proj.inputs()
    }

    pub fn category_sizes(&self) -> Vec<usize> {
        self.categories.iter().map(Linear::outputs).collect()
    }

    pub fn num_relations(&self) -> usize {
        self.categories.iter().map(Linear::outputs).sum()
    }

    /// Same parameter layout with every entry zero.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.pooled_dim(), self.feature_dim(), &self.category_sizes(), self.flat.is_some())
    }

    pub fn same_shape(&self, other: &HeadParameters) -> bool {
        self.proj.same_shape(&other.proj)
            && self.super_cat.same_shape(&other.super_cat)
            && self.categories.len() == other.categories.len()
            && self.categories.iter().zip(&other.categories).all(|(a, b)| a.same_shape(b))
            && match (&self.flat, &other.flat) {
                (Some(a), Some(b)) => a.same_shape(b),
                (None, None) => true,
                _ => false,
            }
    }

    fn layers(&self) -> impl Iterator<Item = &Linear> {
        std::iter::once(&self.proj)
            .chain(std::iter::once(&self.super_cat))
            .chain(self.categories.iter())
            .chain(self.flat.iter())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Linear> {
        std::iter::once(&mut self.proj)
            .chain(std::iter::once(&mut self.super_cat))
            .chain(self.categories.iter_mut())
            .chain(self.flat.iter_mut())
    }

    /// Every parameter block (weights then bias, layer by layer) in a fixed order.
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.layers().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()]).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Checks the parameter layout against a hierarchy.
    pub fn check_hierarchy(&self, h: &RelationHierarchy) -> Result<(), HeadError> {
        if self.super_cat.outputs() != h.num_categories() + 1 {
            return Err(mismatch(format!(
                "super-category head has {} outputs, hierarchy needs {}",
                self.super_cat.outputs(),
                h.num_categories() + 1
            )));
        }
        if self.category_sizes() != h.category_sizes() {
            return Err(mismatch(format!(
                "category heads have sizes {:?}, hierarchy has {:?}",
                self.category_sizes(),
                h.category_sizes()
            )));
        }
        let d = self.feature_dim();
        if self.super_cat.inputs() != d || self.categories.iter().any(|c| c.inputs() != d) {
            return Err(mismatch("classifier input width differs from the projection output"));
        }
        Ok(())
    }
}

/// Projected feature for one direction of an object pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeature {
    pub x: Vec<f64>,
    pub subject_idx: usize,
    pub object_idx: usize,
}

/// Concatenated masked-mean vectors for both directions: `([i, j], [j, i])`.
pub fn pool_pair(
    fm: &FeatureMap,
    box_i: &BoundingBox,
    box_j: &BoundingBox,
) -> Result<(Vec<f64>, Vec<f64>), HeadError> {
    let pi = fm.masked_mean(box_i)?;
    let pj = fm.masked_mean(box_j)?;
    let ij = pi.iter().chain(&pj).copied().collect();
    let ji = pj.iter().chain(&pi).copied().collect();
    Ok((ij, ji))
}

/// Pair features for `(i → j)` and `(j → i)`.
pub fn build_pair_features(
    fm: &FeatureMap,
    (i, box_i): (usize, &BoundingBox),
    (j, box_j): (usize, &BoundingBox),
    p: &HeadParameters,
) -> Result<(PairFeature, PairFeature), HeadError> {
    if p.pooled_dim() != 2 * fm.channels() {
        return Err(mismatch(format!(
            "projection expects {} pooled inputs but the feature map has {} channels",
            p.pooled_dim(),
            fm.channels()
        )));
    }
    let (ij, ji) = pool_pair(fm, box_i, box_j)?;
    Ok((
        PairFeature { x: p.proj.forward(&ij), subject_idx: i, object_idx: j },
        PairFeature { x: p.proj.forward(&ji), subject_idx: j, object_idx: i },
    ))
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log(softmax(logits))`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

/// Baseline head: softmax over all relations plus background (last entry).
pub fn flat_forward(x: &PairFeature, p: &HeadParameters) -> Result<Vec<f64>, HeadError> {
    let flat = p.flat.as_ref().ok_or(HeadError::MissingFlatHead)?;
    if x.x.len() != flat.inputs() {
        return Err(mismatch(format!("feature has length {}, flat head expects {}", x.x.len(), flat.inputs())));
    }
    Ok(softmax(&flat.forward(&x.x)))
}

/// Output of the hierarchical head for one directed pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedDistribution {
    /// Super-category probabilities; the last entry is background.
    pub r_sc: Vec<f64>,
    /// Per super-category, joint probabilities of its relations.
    pub joint: Vec<Vec<f64>>,
}

impl ComposedDistribution {
    pub fn total_mass(&self) -> f64 {
        self.joint.iter().flatten().sum::<f64>() + self.r_sc.last().copied().unwrap_or(0.0)
    }

    pub fn background(&self) -> f64 {
        self.r_sc.last().copied().unwrap_or(0.0)
    }

    /// Argmax over every relation plus background, as `Some((category, position))`
    /// for a relation or `None` for background. Ties go to the earlier entry.
    pub fn top1(&self) -> Option<(usize, usize)> {
        let mut best = None;
        let mut best_p = f64::NEG_INFINITY;
        for (c, probs) in self.joint.iter().enumerate() {
            for (k, &p) in probs.iter().enumerate() {
                if p > best_p {
                    best_p = p;
                    best = Some((c, k));
                }
            }
        }
        if self.background() > best_p {
            return None;
        }
        best
    }
}

/// Super-category and per-category conditional probabilities.
#[derive(Debug, Clone)]
pub(crate) struct HeadActivations {
    pub sc_logits: Vec<f64>,
    pub cat_logits: Vec<Vec<f64>>,
}

pub(crate) fn head_activations(x: &[f64], p: &HeadParameters) -> HeadActivations {
    HeadActivations {
        sc_logits: p.super_cat.forward(x),
        cat_logits: p.categories.iter().map(|c| c.forward(x)).collect(),
    }
}

impl HeadActivations {
    pub fn compose(&self) -> ComposedDistribution {
        let r_sc = softmax(&self.sc_logits);
        let joint = self
            .cat_logits
            .iter()
            .zip(&r_sc)
            .map(|(logits, &scale)| softmax(logits).into_iter().map(|q| q * scale).collect())
            .collect();
        ComposedDistribution { r_sc, joint }
    }
}

pub fn hierarchical_forward(
    x: &PairFeature,
    p: &HeadParameters,
    h: &RelationHierarchy,
) -> Result<ComposedDistribution, HeadError> {
    p.check_hierarchy(h)?;
    if x.x.len() != p.feature_dim() {
        return Err(mismatch(format!("feature has length {}, head expects {}", x.x.len(), p.feature_dim())));
    }
    Ok(head_activations(&x.x, p).compose())
}

/// One candidate per super-category: the most probable relation within it.
pub fn edge_candidates(
    cd: &ComposedDistribution,
    subject_idx: usize,
    object_idx: usize,
    h: &RelationHierarchy,
) -> Vec<PredicateCandidate> {
    cd.joint
        .iter()
        .enumerate()
        .filter_map(|(c, probs)| {
            let (best, conf) = probs
                .iter()
                .enumerate()
                .fold(None, |acc: Option<(usize, f64)>, (k, &p)| match acc {
                    Some((_, bp)) if p <= bp => acc,
                    _ => Some((k, p)),
                })?;
            Some(PredicateCandidate {
                subject_idx,
                object_idx,
                relation: h.within_category_order[c][best],
                super_category: c,
                confidence: conf.clamp(0.0, 1.0),
            })
        })
        .collect()
}

/// Ranking order: confidence descending, then subject, object and relation
/// index ascending.
pub fn rank_order(a: &PredicateCandidate, b: &PredicateCandidate) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.subject_idx.cmp(&b.subject_idx))
        .then(a.object_idx.cmp(&b.object_idx))
        .then(a.relation.cmp(&b.relation))
}

/// The `k` most confident candidates, sorted.
pub fn rank_graph(candidates: &[PredicateCandidate], k: usize) -> Vec<PredicateCandidate> {
    let mut ranked = candidates.to_vec();
    ranked.sort_by(rank_order);
    ranked.truncate(k);
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn feature(x: Vec<f64>) -> PairFeature {
        PairFeature { x, subject_idx: 0, object_idx: 1 }
    }

    #[test]
    fn constant_map_gives_symmetric_features() {
        let fm = FeatureMap::new(3, 4, 5, vec![1.0; 60]).unwrap();
        let mut p = HeadParameters::zeros(6, 6, &[2, 2, 2], false);
        p.proj.weight = Matrix::identity(6);
        let (ij, ji) = build_pair_features(&fm, (0, &bx(0.0, 0.0, 2.0, 2.0)), (1, &bx(1.5, 1.0, 3.0, 2.5)), &p).unwrap();
        assert_eq!(ij.x, vec![1.0; 6]);
        assert_eq!(ij.x, ji.x);
        assert_eq!((ji.subject_idx, ji.object_idx), (1, 0));
    }

    #[test]
    fn swapping_boxes_swaps_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = (0..2 * 6 * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fm = FeatureMap::new(2, 6, 6, data).unwrap();
        let p = HeadParameters::random(4, 5, &[1, 1, 1], false, &mut rng);
        let a = bx(0.0, 0.0, 3.0, 2.0);
        let b = bx(2.0, 3.0, 4.0, 3.0);
        let (ab, ba) = build_pair_features(&fm, (0, &a), (1, &b), &p).unwrap();
        let (ba2, ab2) = build_pair_features(&fm, (1, &b), (0, &a), &p).unwrap();
        assert_eq!(ab, ab2);
        assert_eq!(ba, ba2);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let fm = FeatureMap::new(2, 2, 2, vec![0.0; 8]).unwrap();
        let p = HeadParameters::zeros(6, 3, &[1, 1, 1], false);
        let err = build_pair_features(&fm, (0, &bx(0.0, 0.0, 1.0, 1.0)), (1, &bx(0.0, 0.0, 1.0, 1.0)), &p);
        assert!(matches!(err, Err(HeadError::DimensionMismatch(_))));
    }

    #[test]
    fn box_outside_map_is_rejected() {
        let fm = FeatureMap::new(1, 2, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(fm.masked_mean(&bx(5.0, 5.0, 1.0, 1.0)), Err(HeadError::BoxOutsideMap { .. })));
        // Partially outside boxes are clamped.
        assert!(fm.masked_mean(&bx(-3.0, 1.5, 4.0, 10.0)).is_ok());
    }

    #[test]
    fn depth_channel_is_appended() {
        let fm = FeatureMap::new(1, 1, 2, vec![1.0, 3.0]).unwrap().with_depth(&[5.0, 7.0]).unwrap();
        assert_eq!(fm.channels(), 2);
        assert_eq!(fm.masked_mean(&bx(0.0, 0.0, 2.0, 1.0)).unwrap(), vec![2.0, 6.0]);
    }

    #[test]
    fn flat_head_zero_weights_is_uniform() {
        let p = HeadParameters::zeros(2, 3, &[2, 2, 2], true);
        let probs = flat_forward(&feature(vec![0.3, -1.0, 2.0]), &p).unwrap();
        assert_eq!(probs.len(), 7);
        for q in probs {
            assert!((q - 1.0 / 7.0).abs() < 1e-15);
        }
        let no_flat = HeadParameters::zeros(2, 3, &[2, 2, 2], false);
        assert_eq!(flat_forward(&feature(vec![0.0; 3]), &no_flat), Err(HeadError::MissingFlatHead));
    }

    #[test]
    fn flat_head_is_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = HeadParameters::random(2, 4, &[2, 1, 3], true, &mut rng);
        let x = feature(vec![0.5, -0.2, 1.1, 0.0]);
        let before = flat_forward(&x, &p).unwrap();
        for b in &mut p.flat.as_mut().unwrap().bias {
            *b += 3.7;
        }
        let after = flat_forward(&x, &p).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_hierarchical_head() {
        let h = RelationHierarchy::contiguous(&[2, 2, 2]);
        let p = HeadParameters::zeros(2, 4, &[2, 2, 2], false);
        let cd = hierarchical_forward(&feature(vec![1.0, 2.0, 3.0, 4.0]), &p, &h).unwrap();
        assert_eq!(cd.r_sc, vec![0.25; 4]);
        for probs in &cd.joint {
            assert_eq!(probs, &vec![0.125, 0.125]);
        }
        assert!((cd.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn suppressed_category_has_no_joint_mass() {
        let h = RelationHierarchy::contiguous(&[2, 2, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = HeadParameters::random(2, 4, &[2, 2, 2], false, &mut rng);
        p.super_cat.bias[1] = -1e4;
        let cd = hierarchical_forward(&feature(vec![0.1, 0.2, 0.3, 0.4]), &p, &h).unwrap();
        assert!(cd.joint[1].iter().all(|&q| q < 1e-300));
        assert!((cd.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hierarchy_layout_must_match() {
        let h = RelationHierarchy::contiguous(&[2, 2, 2]);
        let p = HeadParameters::zeros(2, 4, &[2, 3, 1], false);
        assert!(matches!(
            hierarchical_forward(&feature(vec![0.0; 4]), &p, &h),
            Err(HeadError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn candidates_from_hand_built_distribution() {
        let h = RelationHierarchy::contiguous(&[2, 2, 2]);
        let cd = ComposedDistribution {
            r_sc: vec![0.5, 0.2, 0.25, 0.05],
            joint: vec![vec![0.4, 0.1], vec![0.05, 0.15], vec![0.2, 0.05]],
        };
        let got: Vec<_> = edge_candidates(&cd, 2, 7, &h)
            .into_iter()
            .map(|c| (c.super_category, c.relation, c.confidence, c.subject_idx, c.object_idx))
            .collect();
        assert_eq!(got, vec![(0, 0, 0.4, 2, 7), (1, 3, 0.15, 2, 7), (2, 4, 0.2, 2, 7)]);
    }

    #[test]
    fn uniform_candidates_take_lowest_index() {
        let h = RelationHierarchy::contiguous(&[2, 2, 2]);
        let p = HeadParameters::zeros(2, 3, &[2, 2, 2], false);
        let cd = hierarchical_forward(&feature(vec![0.0; 3]), &p, &h).unwrap();
        let cands = edge_candidates(&cd, 0, 1, &h);
        assert_eq!(cands.iter().map(|c| c.relation).collect::<Vec<_>>(), vec![0, 2, 4]);
        assert!(cands.iter().all(|c| c.confidence == 0.125));
    }

    fn cand(s: usize, o: usize, r: usize, conf: f64) -> PredicateCandidate {
        PredicateCandidate { subject_idx: s, object_idx: o, relation: r, super_category: 0, confidence: conf }
    }

    #[test]
    fn ranking_ties_and_short_lists() {
        let cands = vec![cand(1, 0, 3, 0.5), cand(0, 2, 1, 0.5), cand(0, 1, 4, 0.9), cand(0, 1, 2, 0.5)];
        let ranked = rank_graph(&cands, 10);
        assert_eq!(ranked, vec![cand(0, 1, 4, 0.9), cand(0, 1, 2, 0.5), cand(0, 2, 1, 0.5), cand(1, 0, 3, 0.5)]);
        assert_eq!(rank_graph(&cands, 2).len(), 2);
        assert!(rank_graph(&[], 5).is_empty());
    }
}
