#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenerel::clustering::EmbeddingTable;
use scenerel::metrics::EvalMode;
use scenerel::model::{
    BoundingBox, GtPredicate, ObjectInstance, PredicateCandidate, RelationVocabulary, SceneGraph, Triplet,
};

// ---------------------------------------------------------------- metrics --

pub struct TinyInstance {
    pub gt: SceneGraph,
    pub pred: SceneGraph,
}

fn int_box(rng: &mut ChaCha8Rng) -> BoundingBox {
    let (x, y) = (rng.gen_range(0..5) as f64, rng.gen_range(0..5) as f64);
    let (w, h) = (rng.gen_range(1..4) as f64, rng.gen_range(1..4) as f64);
    BoundingBox::new(x, y, w, h).unwrap()
}

/// A few objects on an integer grid, deduplicated ground truth, and a
/// prediction graph whose candidates sit on a coarse confidence grid so that
/// ties are common. For SGDET the predicted boxes are shifted copies.
pub fn tiny_instance(rng: &mut ChaCha8Rng, mode: EvalMode, id: usize) -> TinyInstance {
    let n_obj = rng.gen_range(2..5);
    let objects: Vec<ObjectInstance> = (0..n_obj)
        .map(|_| ObjectInstance { label: rng.gen_range(0..3), bbox: int_box(rng), score: 1.0 })
        .collect();
    let mut gt_predicates = Vec::new();
    for _ in 0..rng.gen_range(0..6) {
        let s = rng.gen_range(0..n_obj);
        let o = (s + rng.gen_range(1..n_obj)) % n_obj;
        let g = GtPredicate { subject_idx: s, object_idx: o, relation: rng.gen_range(0..4) };
        if !gt_predicates.contains(&g) {
            gt_predicates.push(g);
        }
    }
    let gt = SceneGraph {
        image_id: format!("img{id}"),
        width: 8.0,
        height: 8.0,
        objects,
        gt_predicates,
        pred_candidates: Vec::new(),
    };

    let mut pred = gt.clone();
    pred.gt_predicates.clear();
    if mode == EvalMode::SgDet {
        let extra = rng.gen_range(0..2);
        pred.objects = gt
            .objects
            .iter()
            .map(|o| {
                let b = o.bbox;
                let (dx, dy) = (rng.gen_range(0..2) as f64, rng.gen_range(0..2) as f64);
                let label = if rng.gen_bool(0.15) { (o.label + 1) % 3 } else { o.label };
                ObjectInstance { label, bbox: BoundingBox::new(b.x + dx, b.y + dy, b.w, b.h).unwrap(), score: 1.0 }
            })
            .collect();
        for _ in 0..extra {
            pred.objects.push(ObjectInstance { label: rng.gen_range(0..3), bbox: int_box(rng), score: 1.0 });
        }
    }
    let m = pred.objects.len();
    pred.pred_candidates = (0..rng.gen_range(0..12))
        .map(|_| {
            let s = rng.gen_range(0..m);
            PredicateCandidate {
                subject_idx: s,
                object_idx: (s + rng.gen_range(1..m)) % m,
                relation: rng.gen_range(0..4),
                super_category: 0,
                confidence: rng.gen_range(1..=10) as f64 / 10.0,
            }
        })
        .collect();
    TinyInstance { gt, pred }
}

fn corner_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = (a.x, a.y, a.x + a.w, a.y + a.h);
    let (bx1, by1, bx2, by2) = (b.x, b.y, b.x + b.w, b.y + b.h);
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// Matched flag per ground truth: top-k by (confidence desc, subject, object,
/// relation), each prediction claiming the lowest-indexed unclaimed gt it hits.
pub fn brute_matches(inst: &TinyInstance, k: usize, mode: EvalMode) -> Vec<bool> {
    let mut keyed: Vec<(i64, usize, usize, usize)> = inst
        .pred
        .pred_candidates
        .iter()
        .map(|c| (-(c.confidence * 10.0).round() as i64, c.subject_idx, c.object_idx, c.relation))
        .collect();
    keyed.sort();
    keyed.truncate(k);
    let mut claimed = vec![false; inst.gt.gt_predicates.len()];
    for (_, s, o, r) in keyed {
        for (g, gt) in inst.gt.gt_predicates.iter().enumerate() {
            if claimed[g] || gt.relation != r {
                continue;
            }
            let (ps, po) = (&inst.pred.objects[s], &inst.pred.objects[o]);
            let (gs, go) = (&inst.gt.objects[gt.subject_idx], &inst.gt.objects[gt.object_idx]);
            let labels = ps.label == gs.label && po.label == go.label;
            let located = match mode {
                EvalMode::SgDet => corner_iou(&ps.bbox, &gs.bbox) >= 0.5 && corner_iou(&po.bbox, &go.bbox) >= 0.5,
                _ => s == gt.subject_idx && o == gt.object_idx,
            };
            if labels && located {
                claimed[g] = true;
                break;
            }
        }
    }
    claimed
}

fn label_triplet(g: &SceneGraph, p: &GtPredicate) -> Triplet {
    Triplet::new(g.objects[p.subject_idx].label, p.relation, g.objects[p.object_idx].label)
}

/// `(hits, total)` over ground truths accepted by `keep`.
fn brute_counts(insts: &[TinyInstance], k: usize, mode: EvalMode, keep: impl Fn(&SceneGraph, &GtPredicate) -> bool) -> (usize, usize) {
    let (mut h, mut t) = (0, 0);
    for inst in insts {
        for (gt, m) in inst.gt.gt_predicates.iter().zip(brute_matches(inst, k, mode)) {
            if keep(&inst.gt, gt) {
                t += 1;
                h += m as usize;
            }
        }
    }
    (h, t)
}

pub fn brute_recall(insts: &[TinyInstance], k: usize, mode: EvalMode) -> Option<f64> {
    let (h, t) = brute_counts(insts, k, mode, |_, _| true);
    (t > 0).then(|| h as f64 / t as f64)
}

pub fn brute_mean_recall(insts: &[TinyInstance], k: usize, mode: EvalMode) -> Option<f64> {
    let mut per_class = BTreeMap::new();
    for rel in 0..4 {
        let (h, t) = brute_counts(insts, k, mode, |_, gt| gt.relation == rel);
        if t > 0 {
            per_class.insert(rel, h as f64 / t as f64);
        }
    }
    (!per_class.is_empty()).then(|| per_class.values().sum::<f64>() / per_class.len() as f64)
}

pub fn brute_zero_shot(insts: &[TinyInstance], k: usize, mode: EvalMode, train: &HashSet<Triplet>) -> Option<f64> {
    let (h, t) = brute_counts(insts, k, mode, |g, gt| !train.contains(&label_triplet(g, gt)));
    (t > 0).then(|| h as f64 / t as f64)
}

pub fn random_train_triplets(rng: &mut ChaCha8Rng) -> HashSet<Triplet> {
    let mut set = HashSet::new();
    for s in 0..3 {
        for r in 0..4 {
            for o in 0..3 {
                if rng.gen_bool(0.5) {
                    set.insert(Triplet::new(s, r, o));
                }
            }
        }
    }
    set
}

// ------------------------------------------------------------- clustering --

/// Three tight, well separated Gaussian blobs; returns the table and the
/// generating blob of each point.
pub fn three_blobs(seed: u64, per_blob: usize) -> (EmbeddingTable, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 5.0]];
    let mut names = Vec::new();
    let mut vectors = Vec::new();
    let mut truth = Vec::new();
    for (b, c) in centres.iter().enumerate() {
        for i in 0..per_blob {
            names.push(format!("rel_{b}_{i}"));
            vectors.push(c.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect());
            truth.push(b);
        }
    }
    (EmbeddingTable::new(names, vectors).unwrap(), truth)
}

/// Whether two labelings induce the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len() && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

// ------------------------------------------------------------ commonsense --

pub fn commonsense_vocab() -> RelationVocabulary {
    RelationVocabulary::new(
        ["has", "on", "riding", "holding", "near"].map(String::from).to_vec(),
        ["tree", "hand", "girl", "skateboard", "man", "street"].map(String::from).to_vec(),
    )
    .unwrap()
}

/// A ranked graph of 40 candidates over six objects (one per label). Several
/// window candidates render as "tree has hand" or "street riding man".
pub fn commonsense_graph() -> SceneGraph {
    let objects: Vec<ObjectInstance> = (0..6)
        .map(|l| ObjectInstance { label: l, bbox: BoundingBox::new(l as f64, 0.0, 1.0, 1.0).unwrap(), score: 1.0 })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut cands: Vec<PredicateCandidate> = (0..40)
        .map(|i| {
            let s = rng.gen_range(0..6);
            PredicateCandidate {
                subject_idx: s,
                object_idx: (s + rng.gen_range(1..6)) % 6,
                relation: rng.gen_range(0..5),
                super_category: 0,
                confidence: 1.0 - i as f64 / 100.0,
            }
        })
        .collect();
    // blacklisted triplets both inside the top 10 and inside the window
    for (slot, (s, r, o)) in [(2, (0, 0, 1)), (12, (0, 0, 1)), (17, (5, 2, 4)), (25, (0, 0, 1)), (35, (5, 2, 4))] {
        cands[slot].subject_idx = s;
        cands[slot].relation = r;
        cands[slot].object_idx = o;
    }
    SceneGraph { image_id: "cs".into(), width: 6.0, height: 1.0, objects, gt_predicates: Vec::new(), pred_candidates: cands }
}

/// "subject relation object" spelled from the vocabulary for candidate `i`.
pub fn rendered_candidate(g: &SceneGraph, i: usize, vocab: &RelationVocabulary) -> String {
    let c = &g.pred_candidates[i];
    format!(
        "{} {} {}",
        vocab.object_names()[g.objects[c.subject_idx].label],
        vocab.relation_names()[c.relation],
        vocab.object_names()[g.objects[c.object_idx].label]
    )
}

// ------------------------------------------------------------ HTTP stub --

pub struct StubServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    pub bodies: Arc<Mutex<Vec<serde_json::Value>>>,
    _handle: JoinHandle<()>,
}

/// Serves every request with `status` and `body`, one request per connection.
pub fn stub_server(status: u16, body: &str) -> StubServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let (h, b, body) = (hits.clone(), bodies.clone(), body.to_string());
    let handle = std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut buf = vec![0; len];
            if reader.read_exact(&mut buf).is_err() {
                continue;
            }
            h.fetch_add(1, Ordering::SeqCst);
            if let Ok(v) = serde_json::from_slice(&buf) {
                b.lock().unwrap().push(v);
            }
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    StubServer { url, hits, bodies, _handle: handle }
}
