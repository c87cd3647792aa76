use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use scenerel::checkpoint::{load_checkpoint, save_checkpoint};
use scenerel::clustering::{hierarchy_from_clusters, kmeans_with_restarts, EmbeddingTable};
use scenerel::commonsense::{
    build_whitelist, AlignmentSets, PromptTemplates, TripletWhitelist, Validator, VerdictCache,
};
use scenerel::data::VG50_VOCABULARY_JSON;
use scenerel::io::{read_jsonl, JsonlReader, JsonlWriter};
use scenerel::llm_client::build_backend;
use scenerel::metrics::{evaluate, EvalImage};
use scenerel::model::{RelationHierarchy, RelationVocabulary, SceneGraph, Triplet};
use scenerel::relhead::{
    build_pair_features, edge_candidates, hierarchical_forward, rank_graph, FeatureMap, HeadParameters,
};
use scenerel::tensor::Tensor;
use scenerel::training::{
    loss_distill, synthetic_samples, top1_accuracy, train, SampleInput, TrainingSample,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;

/// Raised after outputs are written when some images could not be validated.
#[derive(Debug)]
pub struct BackendFailure(pub String);

impl std::error::Error for BackendFailure {}

impl std::fmt::Display for BackendFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a Path,
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json(path: &Path) -> anyhow::Result<serde_json::Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_vocab(path: Option<&Path>) -> anyhow::Result<RelationVocabulary> {
    let text = match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => VG50_VOCABULARY_JSON.to_string(),
    };
    serde_json::from_str(&text).context("parsing vocabulary")
}

/// Graphs in file order, checked as they are read.
fn stream_graphs(path: &Path) -> anyhow::Result<impl Iterator<Item = anyhow::Result<SceneGraph>>> {
    let shown = path.display().to_string();
    Ok(JsonlReader::<SceneGraph>::open(path)?.map(move |r| {
        let mut g = r?;
        g.normalize().with_context(|| format!("{shown}: image {}", g.image_id))?;
        Ok(g)
    }))
}

fn load_graphs(path: &Path) -> anyhow::Result<Vec<SceneGraph>> {
    stream_graphs(path)?.collect()
}

/// Images scored in parallel per chunk; output keeps input order.
const INFER_CHUNK: usize = 256;

// ------------------------------------------------------------- train-toy --

#[derive(Debug, Deserialize)]
struct FeatureRecord {
    pooled: Vec<f64>,
    relation: Option<usize>,
}

pub fn train_toy(ctx: &Ctx) -> anyhow::Result<serde_json::Value> {
    let t = &ctx.cfg.training;
    ensure!(t.lr.is_finite() && t.lr >= 0.0, "learning rate must be finite and non-negative");
    let h = RelationHierarchy::contiguous(&t.category_sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let samples = match &t.features {
        None => {
            ensure!(t.synthetic.category_sizes == t.category_sizes, "synthetic.category_sizes must equal category_sizes");
            synthetic_samples(&t.synthetic, &mut rng)
        }
        Some(path) => {
            let records: Vec<FeatureRecord> = read_jsonl(path)?;
            records
                .into_iter()
                .enumerate()
                .map(|(i, r)| {
                    let target_sc = match r.relation {
                        None => h.background_index(),
                        Some(rel) => h
                            .category_of(rel)
                            .with_context(|| format!("{}:{}: relation {rel} out of range", path.display(), i + 1))?,
                    };
                    Ok(TrainingSample { input: SampleInput::Pooled(r.pooled), target_sc, target_rel: r.relation })
                })
                .collect::<anyhow::Result<Vec<_>>>()?
        }
    };
    ensure!(!samples.is_empty(), "no training samples");
    let pooled_dim = match &samples[0].input {
        SampleInput::Pooled(z) | SampleInput::Feature(z) => z.len(),
    };
    let init = HeadParameters::random(pooled_dim, t.d, &t.category_sizes, false, &mut rng);
    let outcome = train(&samples, init, &h, &t.loss, t.lr, t.steps)?;
    let accuracy = top1_accuracy(&samples, &outcome.params, &h)?;

    save_checkpoint(&ctx.out.join("checkpoint"), &outcome.params, &h.super_categories)?;
    let mut csv = String::from("step,loss\n");
    for (step, loss) in outcome.losses.iter().enumerate() {
        csv.push_str(&format!("{step},{loss}\n"));
    }
    fs::write(ctx.out.join("loss.csv"), csv)?;

    let initial = outcome.losses.first().copied().unwrap_or(f64::NAN);
    let last = outcome.losses.last().copied().unwrap_or(f64::NAN);
    println!("trained {} steps on {} samples: loss {initial:.4} -> {last:.4}, accuracy {:.3}", t.steps, samples.len(), accuracy);
    Ok(json!({"samples": samples.len(), "initial_loss": initial, "final_loss": last, "accuracy": accuracy}))
}

// ----------------------------------------------------------------- infer --

fn load_feature_map(dir: &Path, image_id: &str) -> anyhow::Result<FeatureMap> {
    let path = dir.join(format!("{image_id}.sgt"));
    let t = Tensor::load(&path).with_context(|| format!("feature map {}", path.display()))?;
    ensure!(t.dims.len() == 3, "{}: expected [channels, height, width], got {:?}", path.display(), t.dims);
    let mut fm = FeatureMap::new(t.dims[0], t.dims[1], t.dims[2], t.data)?;
    let depth_path = dir.join(format!("{image_id}.depth.sgt"));
    if depth_path.exists() {
        let d = Tensor::load(&depth_path).with_context(|| format!("depth map {}", depth_path.display()))?;
        ensure!(d.dims == [fm.height(), fm.width()], "{}: depth dims {:?} do not match the feature grid", depth_path.display(), d.dims);
        fm = fm.with_depth(&d.data)?;
    }
    Ok(fm)
}

fn infer_graph(g: &SceneGraph, fm: &FeatureMap, p: &HeadParameters, h: &RelationHierarchy, top_k: Option<usize>) -> anyhow::Result<SceneGraph> {
    let (sx, sy) = (fm.width() as f64 / g.width, fm.height() as f64 / g.height);
    let mut cands = Vec::new();
    for i in 0..g.objects.len() {
        for j in i + 1..g.objects.len() {
            let (bi, bj) = (g.objects[i].bbox.scaled(sx, sy), g.objects[j].bbox.scaled(sx, sy));
            let (ij, ji) = build_pair_features(fm, (i, &bi), (j, &bj), p)?;
            for x in [ij, ji] {
                let cd = hierarchical_forward(&x, p, h)?;
                cands.extend(edge_candidates(&cd, x.subject_idx, x.object_idx, h));
            }
        }
    }
    let mut out = g.clone();
    out.pred_candidates = rank_graph(&cands, top_k.unwrap_or(cands.len()));
    Ok(out)
}

pub struct InferInputs<'a> {
    pub checkpoint: &'a Path,
    pub graphs: &'a Path,
    pub features: &'a Path,
    /// Maps head outputs to vocabulary relations; contiguous blocks when absent.
    pub hierarchy: Option<&'a Path>,
    pub vocab: Option<&'a Path>,
}

pub fn infer(ctx: &Ctx, inp: &InferInputs) -> anyhow::Result<serde_json::Value> {
    let (p, manifest) = load_checkpoint(inp.checkpoint)?;
    let h = match inp.hierarchy {
        Some(path) => {
            let vocab = load_vocab(inp.vocab)?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RelationHierarchy::from_json_str(&text, &vocab)?
        }
        None => {
            let mut h = RelationHierarchy::contiguous(&manifest.category_sizes);
            h.super_categories = manifest.category_names.clone();
            h
        }
    };
    ensure!(
        h.category_sizes() == manifest.category_sizes,
        "hierarchy category sizes {:?} do not match the checkpoint {:?}",
        h.category_sizes(),
        manifest.category_sizes
    );
    let top_k = ctx.cfg.inference.top_k;
    let mut input = stream_graphs(inp.graphs)?;
    let mut writer = JsonlWriter::create(&ctx.out.join("graphs.jsonl"))?;
    let (mut graphs, mut total) = (0usize, 0usize);
    loop {
        let chunk: Vec<SceneGraph> = input.by_ref().take(INFER_CHUNK).collect::<anyhow::Result<_>>()?;
        if chunk.is_empty() {
            break;
        }
        let scored: Vec<anyhow::Result<SceneGraph>> = chunk
            .par_iter()
            .map(|g| {
                let fm = load_feature_map(inp.features, &g.image_id)?;
                infer_graph(g, &fm, &p, &h, top_k).with_context(|| format!("image {}", g.image_id))
            })
            .collect();
        for g in scored {
            let g = g?;
            total += g.pred_candidates.len();
            graphs += 1;
            writer.write(&g)?;
        }
    }
    writer.finish()?;
    println!("wrote {graphs} graphs with {total} candidates");
    Ok(json!({"graphs": graphs, "candidates": total}))
}

// -------------------------------------------------------------- validate --

pub struct ValidateInputs<'a> {
    pub graphs: &'a Path,
    pub vocab: Option<&'a Path>,
    pub whitelist: Option<&'a Path>,
    pub train_graphs: Option<&'a Path>,
    pub cache: Option<&'a Path>,
    pub templates: Option<&'a Path>,
}

fn load_templates(dir: Option<&Path>) -> anyhow::Result<PromptTemplates> {
    let Some(dir) = dir else { return Ok(PromptTemplates::default()) };
    let mut per_triplet = Vec::new();
    for i in 1.. {
        let p = dir.join(format!("per_triplet_{i}.txt"));
        if !p.exists() {
            break;
        }
        per_triplet.push(fs::read_to_string(&p)?);
    }
    let batched_path = dir.join("batched.txt");
    let batched = if batched_path.exists() {
        fs::read_to_string(batched_path)?
    } else {
        PromptTemplates::default().batched
    };
    if per_triplet.is_empty() {
        per_triplet = PromptTemplates::default().per_triplet;
    }
    Ok(PromptTemplates::new(per_triplet, batched)?)
}

pub fn validate(ctx: &Ctx, inp: &ValidateInputs) -> anyhow::Result<serde_json::Value> {
    let vocab = load_vocab(inp.vocab)?;
    let templates = load_templates(inp.templates)?;
    let whitelist = match (inp.whitelist, inp.train_graphs) {
        (Some(_), Some(_)) => bail!("give either --whitelist or --train-graphs, not both"),
        (Some(p), None) => TripletWhitelist::from_json(read_json(p)?, &vocab)?,
        (None, Some(p)) => build_whitelist(&load_graphs(p)?),
        (None, None) => TripletWhitelist::default(),
    };
    let cache = match inp.cache {
        Some(p) if p.exists() => VerdictCache::from_json(read_json(p)?, &vocab)?,
        _ => VerdictCache::default(),
    };
    let client = build_backend(&ctx.cfg.client)?;
    let validator = Validator {
        cfg: &ctx.cfg.validation,
        templates: &templates,
        vocab: &vocab,
        client: &client,
        whitelist: &whitelist,
        cache: &cache,
    };

    let mut sets = AlignmentSets::default();
    let mut writer = JsonlWriter::create(&ctx.out.join("graphs.jsonl"))?;
    let (mut graphs, mut queries, mut cache_hits, mut whitelist_hits, mut removals) = (0, 0, 0, 0, 0);
    let mut failures = Vec::new();
    for g in stream_graphs(inp.graphs)? {
        let g = g?;
        let mut ranked = g.clone();
        ranked.pred_candidates = rank_graph(&g.pred_candidates, g.pred_candidates.len());
        let o = validator.validate_graph(&ranked, &mut sets)?;
        queries += o.query_count;
        cache_hits += o.cache_hits;
        whitelist_hits += o.whitelist_hits;
        removals += o.removals;
        if let Some(e) = &o.backend_error {
            failures.push(json!({"image_id": g.image_id, "error": e}));
        }
        writer.write(&o.graph)?;
        graphs += 1;
    }
    writer.finish()?;

    write_json(&ctx.out.join("alignment_sets.json"), &sets.to_json(&vocab))?;
    let cache_json = cache.to_json(&vocab);
    write_json(&ctx.out.join("cache.json"), &cache_json)?;
    if let Some(p) = inp.cache {
        write_json(p, &cache_json)?;
    }
    let stats = json!({
        "graphs": graphs,
        "query_count": queries,
        "cache_hits": cache_hits,
        "whitelist_hits": whitelist_hits,
        "removals": removals,
        "aligned": sets.aligned.len(),
        "violated": sets.violated.len(),
        "backend_failures": failures,
    });
    write_json(&ctx.out.join("stats.json"), &stats)?;
    println!("validated {graphs} graphs: {queries} queries, {cache_hits} cache hits, {removals} removals");
    if !failures.is_empty() {
        return Err(BackendFailure(format!("{} image(s) left unfiltered after backend errors", failures.len())).into());
    }
    Ok(stats)
}

// ------------------------------------------------------------------ eval --

fn load_train_triplets(path: &Path, vocab: Option<&Path>) -> anyhow::Result<HashSet<Triplet>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        return Ok(build_whitelist(&load_graphs(path)?).0);
    }
    let vocab = load_vocab(vocab)?;
    Ok(TripletWhitelist::from_json(read_json(path)?, &vocab)?.0)
}

pub fn eval(ctx: &Ctx, pred: &Path, gt: Option<&Path>, train_triplets: Option<&Path>, vocab: Option<&Path>) -> anyhow::Result<serde_json::Value> {
    let preds = load_graphs(pred)?;
    let gts = match gt {
        Some(p) => load_graphs(p)?,
        None => preds.clone(),
    };
    let by_id: HashMap<&str, &SceneGraph> = preds.iter().map(|g| (g.image_id.as_str(), g)).collect();
    ensure!(by_id.len() == preds.len(), "duplicate image_id in {}", pred.display());
    let images: Vec<EvalImage> = gts
        .iter()
        .map(|g| {
            let p = by_id.get(g.image_id.as_str()).with_context(|| format!("no prediction for image {}", g.image_id))?;
            Ok(EvalImage { gt: g, pred: p })
        })
        .collect::<anyhow::Result<_>>()?;
    let train = train_triplets.map(|p| load_train_triplets(p, vocab)).transpose()?;
    let e = &ctx.cfg.eval;
    let report = evaluate(&images, e.mode, &e.ks, train.as_ref(), e.averaging)?;
    write_json(&ctx.out.join("report.json"), &report)?;
    let table = report.table();
    fs::write(ctx.out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(serde_json::to_value(&report)?)
}

// --------------------------------------------------------------- cluster --

pub fn cluster(ctx: &Ctx, embeddings: &Path, vocab: Option<&Path>) -> anyhow::Result<serde_json::Value> {
    let vocab = load_vocab(vocab)?;
    let text = fs::read_to_string(embeddings).with_context(|| format!("reading {}", embeddings.display()))?;
    let mut table = EmbeddingTable::from_json_str(&text)?.aligned_to(&vocab)?;
    let c = &ctx.cfg.clustering;
    if c.l2_normalize {
        table = table.l2_normalized();
    }
    let cr = kmeans_with_restarts(&table, c.k, ctx.cfg.seed, c.restarts)?;
    let h = hierarchy_from_clusters(&cr, &vocab)?;
    write_json(&ctx.out.join("hierarchy.json"), &h.to_json_value(&vocab))?;
    let summary = json!({
        "k": c.k,
        "inertia": cr.inertia,
        "iterations": cr.iterations,
        "inertia_history": cr.inertia_history,
        "sizes": h.category_sizes(),
    });
    write_json(&ctx.out.join("clusters.json"), &summary)?;
    println!("{} relations in {} clusters, sizes {:?}, inertia {:.4}", vocab.num_relations(), c.k, h.category_sizes(), cr.inertia);
    Ok(summary)
}

// ---------------------------------------------------------- distill-sets --

pub fn distill_sets(ctx: &Ctx, sets_path: &Path, graphs: &Path, vocab: Option<&Path>) -> anyhow::Result<serde_json::Value> {
    let vocab = load_vocab(vocab)?;
    let sets = AlignmentSets::from_json(read_json(sets_path)?, &vocab)?;
    let d = &ctx.cfg.distill;
    let mut per_relation: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    let mut total = 0.0;
    let mut count = 0usize;
    for g in stream_graphs(graphs)? {
        let g = g?;
        for c in &g.pred_candidates {
            let t = g.candidate_triplet(c);
            let penalty = loss_distill(&t, &sets, d.lambda_weak, d.lambda_strong);
            let e = per_relation.entry(c.relation).or_default();
            e.0 += 1;
            e.1 += penalty;
            total += penalty;
            count += 1;
        }
    }
    let rows: Vec<serde_json::Value> = per_relation
        .iter()
        .map(|(r, (n, p))| json!({"relation": vocab.relation(*r).unwrap_or("?"), "candidates": n, "penalty": p}))
        .collect();
    let report = json!({"candidates": count, "total_penalty": total, "per_relation": rows});
    write_json(&ctx.out.join("penalties.json"), &report)?;
    println!("{count} candidates, total penalty {total:.4}");
    Ok(report)
}

pub fn write_metadata(out: &Path, command: &str, cfg: &RunConfig, summary: &serde_json::Value, args: &[String]) -> anyhow::Result<()> {
    let meta = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "config": cfg,
        "args": args,
        "summary": summary,
    });
    let mut f = fs::File::create(out.join("metadata.json"))?;
    writeln!(f, "{}", serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn ensure_out_dir(out: &Path) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out.to_path_buf())
}
