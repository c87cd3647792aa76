mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenerel::metrics::{
    composite_score, evaluate, mean_recall_at_k, recall_at_k, recall_at_k_with, weighted_map, zero_shot_recall,
    EvalImage, EvalMode, MapMode, MetricsError, RecallAveraging,
};
use scenerel::model::PredicateCandidate;

#[test]
fn recalls_match_brute_force_on_random_datasets() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for mode in [EvalMode::PredCls, EvalMode::SgCls, EvalMode::SgDet] {
        for round in 0..10 {
            let insts: Vec<TinyInstance> = (0..10).map(|i| tiny_instance(&mut rng, mode, i)).collect();
            let imgs: Vec<EvalImage> = insts.iter().map(|t| EvalImage { gt: &t.gt, pred: &t.pred }).collect();
            let train = random_train_triplets(&mut rng);
            for k in [1, 3, 5, 20] {
                assert_eq!(recall_at_k(&imgs, k, mode).ok(), brute_recall(&insts, k, mode), "{mode:?} round {round} k {k}");
                assert_eq!(mean_recall_at_k(&imgs, k, mode).ok(), brute_mean_recall(&insts, k, mode));
                assert_eq!(zero_shot_recall(&imgs, k, mode, &train).ok(), brute_zero_shot(&insts, k, mode, &train));
            }
        }
    }
}

#[test]
fn recall_is_monotone_in_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let insts: Vec<TinyInstance> = (0..30).map(|i| tiny_instance(&mut rng, EvalMode::SgDet, i)).collect();
    let imgs: Vec<EvalImage> = insts.iter().map(|t| EvalImage { gt: &t.gt, pred: &t.pred }).collect();
    let rs: Vec<f64> = (1..15).map(|k| recall_at_k(&imgs, k, EvalMode::SgDet).unwrap()).collect();
    assert!(rs.windows(2).all(|w| w[0] <= w[1]), "{rs:?}");
}

#[test]
fn perfect_predictions_score_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut insts: Vec<TinyInstance> = (0..10).map(|i| tiny_instance(&mut rng, EvalMode::PredCls, i)).collect();
    for t in &mut insts {
        t.pred = t.gt.clone();
        t.pred.pred_candidates = t
            .gt
            .gt_predicates
            .iter()
            .map(|g| PredicateCandidate { subject_idx: g.subject_idx, object_idx: g.object_idx, relation: g.relation, super_category: 0, confidence: 0.5 })
            .collect();
    }
    let imgs: Vec<EvalImage> = insts.iter().map(|t| EvalImage { gt: &t.gt, pred: &t.pred }).collect();
    for mode in [EvalMode::PredCls, EvalMode::SgDet] {
        assert_eq!(recall_at_k(&imgs, 50, mode).unwrap(), 1.0);
        assert_eq!(mean_recall_at_k(&imgs, 50, mode).unwrap(), 1.0);
        assert_eq!(recall_at_k_with(&imgs, 50, mode, RecallAveraging::PerImage).unwrap(), 1.0);
    }
    assert!((weighted_map(&imgs, MapMode::Relationship).unwrap() - 1.0).abs() < 1e-12);
    assert!((weighted_map(&imgs, MapMode::Phrase).unwrap() - 1.0).abs() < 1e-12);
    let report = evaluate(&imgs, EvalMode::PredCls, &[20, 50, 100], None, RecallAveraging::Micro).unwrap();
    assert_eq!(report.recall.len(), 3);
    assert!((report.composite - 1.0).abs() < 1e-12);
}

#[test]
fn empty_dataset_and_fully_seen_training_set_are_errors() {
    assert_eq!(recall_at_k(&[], 20, EvalMode::PredCls), Err(MetricsError::NoGroundTruth));
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let insts: Vec<TinyInstance> = (0..5).map(|i| tiny_instance(&mut rng, EvalMode::PredCls, i)).collect();
    let imgs: Vec<EvalImage> = insts.iter().map(|t| EvalImage { gt: &t.gt, pred: &t.pred }).collect();
    let every: std::collections::HashSet<_> = insts
        .iter()
        .flat_map(|t| t.gt.gt_predicates.iter().map(|g| t.gt.gt_triplet(g)))
        .collect();
    assert_eq!(zero_shot_recall(&imgs, 20, EvalMode::PredCls, &every), Err(MetricsError::NoZeroShotGroundTruth));
    assert_eq!(
        zero_shot_recall(&imgs, 20, EvalMode::PredCls, &Default::default()).unwrap(),
        recall_at_k(&imgs, 20, EvalMode::PredCls).unwrap()
    );
}

#[test]
fn composite_of_zero_is_zero() {
    assert_eq!(composite_score(0.0, 0.0, 0.0), 0.0);
}
