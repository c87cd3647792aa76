use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenerel::model::{BoundingBox, PredicateCandidate, RelationHierarchy};
use scenerel::relhead::{
    build_pair_features, edge_candidates, flat_forward, hierarchical_forward, rank_graph, FeatureMap, HeadParameters,
    PairFeature,
};

fn naive_softmax(z: &[f64]) -> Vec<f64> {
    let s: f64 = z.iter().map(|v| v.exp()).sum();
    z.iter().map(|v| v.exp() / s).collect()
}

fn naive_affine(x: &[f64], w: &scenerel::tensor::Matrix, b: &[f64]) -> Vec<f64> {
    (0..w.cols())
        .map(|c| b[c] + (0..w.rows()).map(|r| x[r] * w.get(r, c)).sum::<f64>())
        .collect()
}

fn random_feature(rng: &mut ChaCha8Rng, d: usize) -> PairFeature {
    PairFeature { x: (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect(), subject_idx: 0, object_idx: 1 }
}

#[test]
fn pair_features_match_cell_by_cell_pooling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (c, hgt, wid) = (3, 6, 7);
        let data: Vec<f64> = (0..c * hgt * wid).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fm = FeatureMap::new(c, hgt, wid, data.clone()).unwrap();
        let bi = BoundingBox::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0), 2.5, 1.5).unwrap();
        let bj = BoundingBox::new(rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0), 1.0, 2.0).unwrap();
        let p = HeadParameters::random(2 * c, 5, &[1, 2, 1], false, &mut rng);

        // a cell (r, q) is covered when [q, q+1) x [r, r+1) overlaps the box interior
        let pool = |b: &BoundingBox| -> Vec<f64> {
            let mut sum = vec![0.0; c];
            let mut n = 0.0;
            for r in 0..hgt {
                for q in 0..wid {
                    let (x0, y0) = (q as f64, r as f64);
                    if x0 < b.x + b.w && x0 + 1.0 > b.x && y0 < b.y + b.h && y0 + 1.0 > b.y {
                        n += 1.0;
                        for ch in 0..c {
                            sum[ch] += data[ch * hgt * wid + r * wid + q];
                        }
                    }
                }
            }
            sum.iter().map(|s| s / n).collect()
        };
        let (pi, pj) = (pool(&bi), pool(&bj));
        let ij: Vec<f64> = pi.iter().chain(&pj).copied().collect();
        let ji: Vec<f64> = pj.iter().chain(&pi).copied().collect();
        let (f_ij, f_ji) = build_pair_features(&fm, (4, &bi), (9, &bj), &p).unwrap();
        for (got, want) in [(&f_ij.x, naive_affine(&ij, &p.proj.weight, &p.proj.bias)), (&f_ji.x, naive_affine(&ji, &p.proj.weight, &p.proj.bias))] {
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!((f_ij.subject_idx, f_ij.object_idx, f_ji.subject_idx, f_ji.object_idx), (4, 9, 9, 4));
    }
}

#[test]
fn forwards_match_naive_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..50 {
        let sizes: Vec<usize> = (0..rng.gen_range(1..5)).map(|_| rng.gen_range(1..4)).collect();
        let h = RelationHierarchy::contiguous(&sizes);
        let d = rng.gen_range(1..6);
        let p = HeadParameters::random(4, d, &sizes, true, &mut rng);
        let x = random_feature(&mut rng, d);

        let r_sc = naive_softmax(&naive_affine(&x.x, &p.super_cat.weight, &p.super_cat.bias));
        let cd = hierarchical_forward(&x, &p, &h).unwrap();
        for (a, b) in cd.r_sc.iter().zip(&r_sc) {
            assert!((a - b).abs() < 1e-12, "trial {trial}");
        }
        for (c, lin) in p.categories.iter().enumerate() {
            let within = naive_softmax(&naive_affine(&x.x, &lin.weight, &lin.bias));
            for (k, w) in within.iter().enumerate() {
                assert!((cd.joint[c][k] - w * r_sc[c]).abs() < 1e-12);
            }
        }

        let flat = p.flat.as_ref().unwrap();
        let want = naive_softmax(&naive_affine(&x.x, &flat.weight, &flat.bias));
        for (a, b) in flat_forward(&x, &p).unwrap().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn edge_candidates_match_brute_force_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let sizes = [rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..4)];
        let h = RelationHierarchy::contiguous(&sizes);
        let p = HeadParameters::random(2, 3, &sizes, false, &mut rng);
        let cd = hierarchical_forward(&random_feature(&mut rng, 3), &p, &h).unwrap();
        let cands = edge_candidates(&cd, 2, 5, &h);
        assert_eq!(cands.len(), 3);
        for (c, cand) in cands.iter().enumerate() {
            let mut best = 0;
            for k in 1..sizes[c] {
                if cd.joint[c][k] > cd.joint[c][best] {
                    best = k;
                }
            }
            let rel = sizes[..c].iter().sum::<usize>() + best;
            assert_eq!((cand.subject_idx, cand.object_idx, cand.super_category, cand.relation), (2, 5, c, rel));
            assert_eq!(cand.confidence, cd.joint[c][best]);
        }
    }
}

#[test]
fn rank_graph_agrees_with_selection_by_repeated_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cands: Vec<PredicateCandidate> = (0..300)
        .map(|_| PredicateCandidate {
            subject_idx: rng.gen_range(0..4),
            object_idx: rng.gen_range(0..4),
            relation: rng.gen_range(0..6),
            super_category: 0,
            // coarse grid so ties actually occur
            confidence: rng.gen_range(0..20) as f64 / 20.0,
        })
        .collect();
    let key = |c: &PredicateCandidate| (-(c.confidence * 20.0).round() as i64, c.subject_idx, c.object_idx, c.relation);
    let mut pool = cands.clone();
    let mut want = Vec::new();
    while !pool.is_empty() && want.len() < 100 {
        let i = (0..pool.len()).min_by_key(|&i| key(&pool[i])).unwrap();
        want.push(pool.remove(i));
    }
    let got = rank_graph(&cands, 100);
    assert_eq!(got.iter().map(key).collect::<Vec<_>>(), want.iter().map(key).collect::<Vec<_>>());
    assert_eq!(rank_graph(&cands, 1000).len(), 300);
}
