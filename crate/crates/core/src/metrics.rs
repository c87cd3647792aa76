//! Scene graph evaluation: R@k, mR@k, zsR@k, weighted mAP and the composite
//! OpenImage-style score.
//!
//! Ground truth and predictions may come from different graphs of the same
//! image (SGDET, where predicted boxes differ from annotated ones) or from one
//! graph carrying both (PredCLS).

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{iou, GtPredicate, ObjectInstance, PredicateCandidate, SceneGraph, Triplet};
use crate::relhead::{rank_graph, rank_order};

pub const IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("dataset has no ground-truth triplets")]
    NoGroundTruth,
    #[error("no ground-truth triplet is absent from the training set")]
    NoZeroShotGroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    PredCls,
    SgCls,
    SgDet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecallAveraging {
    /// Σ matched / Σ ground truth over the dataset.
    #[default]
    Micro,
    /// Mean of per-image recalls over images with ground truth.
    PerImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapMode {
    Relationship,
    Phrase,
}

/// Ground truth and predictions for one image.
#[derive(Debug, Clone, Copy)]
pub struct EvalImage<'a> {
    pub gt: &'a SceneGraph,
    pub pred: &'a SceneGraph,
}

impl<'a> From<&'a SceneGraph> for EvalImage<'a> {
    fn from(g: &'a SceneGraph) -> Self {
        Self { gt: g, pred: g }
    }
}

/// Whether a predicted edge reproduces a ground-truth edge.
pub fn match_predicate(
    pred: &PredicateCandidate,
    pred_objects: &[ObjectInstance],
    gt: &GtPredicate,
    gt_objects: &[ObjectInstance],
    mode: EvalMode,
) -> bool {
    if pred.relation != gt.relation {
        return false;
    }
    let (ps, po) = (&pred_objects[pred.subject_idx], &pred_objects[pred.object_idx]);
    let (gs, go) = (&gt_objects[gt.subject_idx], &gt_objects[gt.object_idx]);
    if ps.label != gs.label || po.label != go.label {
        return false;
    }
    match mode {
        EvalMode::PredCls | EvalMode::SgCls => pred.subject_idx == gt.subject_idx && pred.object_idx == gt.object_idx,
        EvalMode::SgDet => iou(&ps.bbox, &gs.bbox) >= IOU_THRESHOLD && iou(&po.bbox, &go.bbox) >= IOU_THRESHOLD,
    }
}

fn phrase_match(
    pred: &PredicateCandidate,
    pred_objects: &[ObjectInstance],
    gt: &GtPredicate,
    gt_objects: &[ObjectInstance],
) -> bool {
    if pred.relation != gt.relation {
        return false;
    }
    let (ps, po) = (&pred_objects[pred.subject_idx], &pred_objects[pred.object_idx]);
    let (gs, go) = (&gt_objects[gt.subject_idx], &gt_objects[gt.object_idx]);
    ps.label == gs.label && po.label == go.label && iou(&ps.bbox.union(&po.bbox), &gs.bbox.union(&go.bbox)) >= IOU_THRESHOLD
}

/// Matched flag per ground-truth edge, greedily assigning the top-k
/// predictions in rank order to the first unmatched ground truth they hit.
pub fn match_image(img: &EvalImage<'_>, k: usize, mode: EvalMode) -> Vec<bool> {
    let gts = &img.gt.gt_predicates;
    let mut matched = vec![false; gts.len()];
    for pred in rank_graph(&img.pred.pred_candidates, k) {
        if let Some(i) = (0..gts.len())
            .find(|&i| !matched[i] && match_predicate(&pred, &img.pred.objects, &gts[i], &img.gt.objects, mode))
        {
            matched[i] = true;
        }
    }
    matched
}

pub fn recall_at_k(images: &[EvalImage<'_>], k: usize, mode: EvalMode) -> Result<f64, MetricsError> {
    recall_at_k_with(images, k, mode, RecallAveraging::Micro)
}

pub fn recall_at_k_with(
    images: &[EvalImage<'_>],
    k: usize,
    mode: EvalMode,
    averaging: RecallAveraging,
) -> Result<f64, MetricsError> {
    filtered_recall(images, k, mode, averaging, |_, _| true).ok_or(MetricsError::NoGroundTruth)
}

/// Recall over the ground truths accepted by `keep`, or `None` if none are.
fn filtered_recall<F>(images: &[EvalImage<'_>], k: usize, mode: EvalMode, averaging: RecallAveraging, keep: F) -> Option<f64>
where
    F: Fn(&SceneGraph, &GtPredicate) -> bool,
{
    let (mut hit, mut total) = (0usize, 0usize);
    let mut per_image = Vec::new();
    for img in images {
        let matched = match_image(img, k, mode);
        let (mut h, mut t) = (0usize, 0usize);
        for (gt, m) in img.gt.gt_predicates.iter().zip(matched) {
            if keep(img.gt, gt) {
                t += 1;
                h += usize::from(m);
            }
        }
        if t > 0 {
            per_image.push(h as f64 / t as f64);
        }
        hit += h;
        total += t;
    }
    if total == 0 {
        return None;
    }
    Some(match averaging {
        RecallAveraging::Micro => hit as f64 / total as f64,
        RecallAveraging::PerImage => per_image.iter().sum::<f64>() / per_image.len() as f64,
    })
}

/// Dataset-wide recall per relation class, for classes with ground truth.
pub fn per_class_recall(images: &[EvalImage<'_>], k: usize, mode: EvalMode) -> BTreeMap<usize, f64> {
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for img in images {
        for (gt, m) in img.gt.gt_predicates.iter().zip(match_image(img, k, mode)) {
            let e = counts.entry(gt.relation).or_default();
            e.0 += usize::from(m);
            e.1 += 1;
        }
    }
    counts.into_iter().map(|(r, (h, t))| (r, h as f64 / t as f64)).collect()
}

pub fn mean_recall_at_k(images: &[EvalImage<'_>], k: usize, mode: EvalMode) -> Result<f64, MetricsError> {
    let per_class = per_class_recall(images, k, mode);
    if per_class.is_empty() {
        return Err(MetricsError::NoGroundTruth);
    }
    Ok(per_class.values().sum::<f64>() / per_class.len() as f64)
}

/// Recall restricted to ground truths whose label-level triplet never occurs
/// in `train_triplets`.
pub fn zero_shot_recall(
    images: &[EvalImage<'_>],
    k: usize,
    mode: EvalMode,
    train_triplets: &HashSet<Triplet>,
) -> Result<f64, MetricsError> {
    filtered_recall(images, k, mode, RecallAveraging::Micro, |g, gt| !train_triplets.contains(&g.gt_triplet(gt)))
        .ok_or(MetricsError::NoZeroShotGroundTruth)
}

/// All-point interpolated average precision from TP flags in rank order.
pub fn average_precision(tp: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, &t) in tp.iter().enumerate() {
        hits += usize::from(t);
        precision.push(hits as f64 / (i + 1) as f64);
        recall.push(hits as f64 / num_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// Per-class AP weighted by each class's share of ground truth.
pub fn weighted_map(images: &[EvalImage<'_>], mode: MapMode) -> Result<f64, MetricsError> {
    Ok(weighted_map_detail(images, mode)?.into_values().map(|(w, ap)| w * ap).sum())
}

/// `relation → (weight, AP)` for classes with ground truth.
pub fn weighted_map_detail(images: &[EvalImage<'_>], mode: MapMode) -> Result<BTreeMap<usize, (f64, f64)>, MetricsError> {
    let mut gt_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for img in images {
        for gt in &img.gt.gt_predicates {
            *gt_counts.entry(gt.relation).or_default() += 1;
        }
    }
    let total: usize = gt_counts.values().sum();
    if total == 0 {
        return Err(MetricsError::NoGroundTruth);
    }

    // (image, candidate), ordered by confidence with image and rank order breaking ties.
    let mut preds: Vec<(usize, PredicateCandidate)> = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let mut ranked = img.pred.pred_candidates.clone();
        ranked.sort_by(rank_order);
        preds.extend(ranked.into_iter().map(|c| (i, c)));
    }
    preds.sort_by(|a, b| b.1.confidence.total_cmp(&a.1.confidence));

    let mut out = BTreeMap::new();
    for (&rel, &n_gt) in &gt_counts {
        let mut used: Vec<Vec<bool>> = images.iter().map(|img| vec![false; img.gt.gt_predicates.len()]).collect();
        let tp: Vec<bool> = preds
            .iter()
            .filter(|(_, c)| c.relation == rel)
            .map(|(i, c)| {
                let img = &images[*i];
                let hit = img.gt.gt_predicates.iter().enumerate().position(|(g, gt)| {
                    !used[*i][g]
                        && match mode {
                            MapMode::Relationship => {
                                match_predicate(c, &img.pred.objects, gt, &img.gt.objects, EvalMode::SgDet)
                            }
                            MapMode::Phrase => phrase_match(c, &img.pred.objects, gt, &img.gt.objects),
                        }
                });
                if let Some(g) = hit {
                    used[*i][g] = true;
                }
                hit.is_some()
            })
            .collect();
        out.insert(rel, (n_gt as f64 / total as f64, average_precision(&tp, n_gt)));
    }
    Ok(out)
}

/// `0.2·R@50 + 0.4·wmAP_rel + 0.4·wmAP_phr`.
pub fn composite_score(r50: f64, wmap_rel: f64, wmap_phr: f64) -> f64 {
    0.2 * r50 + 0.4 * wmap_rel + 0.4 * wmap_phr
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub recall: BTreeMap<usize, f64>,
    pub mean_recall: BTreeMap<usize, f64>,
    /// `k → relation → recall`.
    pub per_class_recall: BTreeMap<usize, BTreeMap<usize, f64>>,
    pub zero_shot_recall: BTreeMap<usize, f64>,
    pub wmap_rel: f64,
    pub wmap_phr: f64,
    /// Composite of R@50 and both wmAPs on the [0, 1] scale.
    pub composite: f64,
}

pub fn evaluate(
    images: &[EvalImage<'_>],
    mode: EvalMode,
    ks: &[usize],
    train_triplets: Option<&HashSet<Triplet>>,
    averaging: RecallAveraging,
) -> Result<EvalReport, MetricsError> {
    let mut report = EvalReport {
        mode,
        recall: BTreeMap::new(),
        mean_recall: BTreeMap::new(),
        per_class_recall: BTreeMap::new(),
        zero_shot_recall: BTreeMap::new(),
        wmap_rel: weighted_map(images, MapMode::Relationship)?,
        wmap_phr: weighted_map(images, MapMode::Phrase)?,
        composite: 0.0,
    };
    for &k in ks {
        report.recall.insert(k, recall_at_k_with(images, k, mode, averaging)?);
        let per_class = per_class_recall(images, k, mode);
        report.mean_recall.insert(k, per_class.values().sum::<f64>() / per_class.len() as f64);
        report.per_class_recall.insert(k, per_class);
        if let Some(train) = train_triplets {
            match zero_shot_recall(images, k, mode, train) {
                Ok(v) => {
                    report.zero_shot_recall.insert(k, v);
                }
                Err(MetricsError::NoZeroShotGroundTruth) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let r50 = match report.recall.get(&50) {
        Some(v) => *v,
        None => recall_at_k_with(images, 50, mode, averaging)?,
    };
    report.composite = composite_score(r50, report.wmap_rel, report.wmap_phr);
    Ok(report)
}

impl EvalReport {
    /// Fixed-order text table with values in percent.
    pub fn table(&self) -> String {
        let mut rows: Vec<(String, f64)> = Vec::new();
        rows.extend(self.recall.iter().map(|(k, v)| (format!("R@{k}"), *v)));
        rows.extend(self.mean_recall.iter().map(|(k, v)| (format!("mR@{k}"), *v)));
        rows.extend(self.zero_shot_recall.iter().map(|(k, v)| (format!("zsR@{k}"), *v)));
        rows.push(("wmAP_rel".into(), self.wmap_rel));
        rows.push(("wmAP_phr".into(), self.wmap_phr));
        rows.push(("score".into(), self.composite));
        let mut out = format!("{:<10} {:>8}\n", "metric", "value");
        for (name, v) in rows {
            out.push_str(&format!("{name:<10} {:>8.2}\n", v * 100.0));
        }
        out
    }
}
