//! Commonsense validation of ranked scene-graph predictions.
//!
//! Per image, the top `skip_top` candidates pass through untouched and the next
//! `window` candidates are checked by a language model. Triplets seen in the
//! training annotations are whitelisted and never queried; earlier verdicts
//! are reused from a cache. Candidates judged implausible are removed, and
//! every verdict is folded into the aligned/violated sets used for
//! distillation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::RwLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm_client::{CompletionBackend, LlmError};
use crate::model::{PredicateCandidate, RelationVocabulary, SceneGraph, Triplet};

pub const DEFAULT_PER_TRIPLET_TEMPLATES: [&str; 3] = [
    include_str!("../prompts/per_triplet_1.txt"),
    include_str!("../prompts/per_triplet_2.txt"),
    include_str!("../prompts/per_triplet_3.txt"),
];
pub const DEFAULT_BATCHED_TEMPLATE: &str = include_str!("../prompts/batched.txt");

/// Placeholder replaced by the rendered triplet (or the numbered list).
pub const PLACEHOLDER: &str = "{}";

#[derive(Debug, Error)]
pub enum CommonsenseError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("image {image_id}: label index out of vocabulary in triplet {triplet}")]
    UnknownLabel { image_id: String, triplet: Triplet },
    #[error("unknown name in triplet {0:?}")]
    UnknownName([String; 3]),
    #[error("triplets present in both aligned and violated sets: {0:?}")]
    Overlap(Vec<Triplet>),
    #[error("invalid validation config: {0}")]
    Config(String),
    #[error("prompt template has no {{}} placeholder: {0:?}")]
    Template(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// `votes` separate yes/no prompts per triplet, majority decides.
    #[default]
    PerTripletMajority,
    /// One prompt listing every window triplet, answered as a yes/no list.
    BatchedList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub skip_top: usize,
    pub window: usize,
    pub votes: usize,
    pub strategy: Strategy,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { skip_top: 10, window: 20, votes: 3, strategy: Strategy::PerTripletMajority }
    }
}

impl ValidationConfig {
    pub fn validate(&self) -> Result<(), CommonsenseError> {
        if self.window == 0 {
            return Err(CommonsenseError::Config("window must be at least 1".into()));
        }
        if self.votes % 2 == 0 {
            return Err(CommonsenseError::Config(format!("votes must be odd, got {}", self.votes)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub per_triplet: Vec<String>,
    pub batched: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            per_triplet: DEFAULT_PER_TRIPLET_TEMPLATES.iter().map(|t| t.trim_end().to_string()).collect(),
            batched: DEFAULT_BATCHED_TEMPLATE.trim_end().to_string(),
        }
    }
}

impl PromptTemplates {
    pub fn new(per_triplet: Vec<String>, batched: String) -> Result<Self, CommonsenseError> {
        for t in per_triplet.iter().chain(std::iter::once(&batched)) {
            if !t.contains(PLACEHOLDER) {
                return Err(CommonsenseError::Template(t.clone()));
            }
        }
        if per_triplet.is_empty() {
            return Err(CommonsenseError::Config("at least one per-triplet template is required".into()));
        }
        Ok(Self { per_triplet, batched })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictSource {
    Cache,
    Model,
    Whitelist,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub triplet: Triplet,
    pub aligned: bool,
    pub raw_votes: Vec<bool>,
    pub source: VerdictSource,
}

/// Label-level triplets observed in training annotations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripletWhitelist(pub HashSet<Triplet>);

impl TripletWhitelist {
    pub fn contains(&self, t: &Triplet) -> bool {
        self.0.contains(t)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_json(&self, vocab: &RelationVocabulary) -> serde_json::Value {
        let sorted: BTreeSet<Triplet> = self.0.iter().copied().collect();
        triplets_to_json(&sorted, vocab)
    }

    pub fn from_json(value: serde_json::Value, vocab: &RelationVocabulary) -> Result<Self, CommonsenseError> {
        Ok(Self(triplets_from_json(value, vocab)?.into_iter().collect()))
    }
}

fn triplets_to_json<'a>(items: impl IntoIterator<Item = &'a Triplet>, vocab: &RelationVocabulary) -> serde_json::Value {
    serde_json::Value::Array(
        items
            .into_iter()
            .filter_map(|t| t.to_names(vocab))
            .map(|names| serde_json::json!(names))
            .collect(),
    )
}

fn triplets_from_json(value: serde_json::Value, vocab: &RelationVocabulary) -> Result<Vec<Triplet>, CommonsenseError> {
    let names: Vec<[String; 3]> = serde_json::from_value(value)?;
    names
        .into_iter()
        .map(|n| Triplet::from_names(&n, vocab).ok_or(CommonsenseError::UnknownName(n)))
        .collect()
}

/// Every label-level ground-truth triplet in the training graphs.
pub fn build_whitelist(training: &[SceneGraph]) -> TripletWhitelist {
    TripletWhitelist(
        training
            .iter()
            .flat_map(|g| g.gt_predicates.iter().map(move |p| g.gt_triplet(p)))
            .collect(),
    )
}

/// Verdicts keyed by label-level triplet; lookups may run concurrently.
#[derive(Debug, Default)]
pub struct VerdictCache {
    entries: RwLock<HashMap<Triplet, Verdict>>,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    triplet: [String; 3],
    aligned: bool,
    votes: Vec<bool>,
}

impl VerdictCache {
    pub fn get(&self, t: &Triplet) -> Option<Verdict> {
        self.entries.read().expect("cache poisoned").get(t).cloned()
    }

    /// Inserts unless an entry already exists; returns whether it was inserted.
    pub fn insert(&self, v: Verdict) -> bool {
        let mut map = self.entries.write().expect("cache poisoned");
        if map.contains_key(&v.triplet) {
            return false;
        }
        map.insert(v.triplet, v);
        true
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// JSON object keyed by rendered triplet text, in key order.
    pub fn to_json(&self, vocab: &RelationVocabulary) -> serde_json::Value {
        let map = self.entries.read().expect("cache poisoned");
        let sorted: BTreeMap<String, CacheEntry> = map
            .values()
            .filter_map(|v| {
                Some((
                    v.triplet.render(vocab)?,
                    CacheEntry { triplet: v.triplet.to_names(vocab)?, aligned: v.aligned, votes: v.raw_votes.clone() },
                ))
            })
            .collect();
        serde_json::to_value(sorted).expect("cache serializes")
    }

    pub fn from_json(value: serde_json::Value, vocab: &RelationVocabulary) -> Result<Self, CommonsenseError> {
        let raw: BTreeMap<String, CacheEntry> = serde_json::from_value(value)?;
        let cache = Self::default();
        for (_, e) in raw {
            let triplet = Triplet::from_names(&e.triplet, vocab).ok_or(CommonsenseError::UnknownName(e.triplet))?;
            cache.insert(Verdict { triplet, aligned: e.aligned, raw_votes: e.votes, source: VerdictSource::Cache });
        }
        Ok(cache)
    }
}

/// Triplets judged plausible and implausible; kept disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignmentSets {
    pub aligned: BTreeSet<Triplet>,
    pub violated: BTreeSet<Triplet>,
}

#[derive(Serialize, Deserialize)]
struct AlignmentSetsJson {
    aligned: serde_json::Value,
    violated: serde_json::Value,
}

impl AlignmentSets {
    /// Records the latest verdict, moving the triplet out of the other set.
    pub fn record(&mut self, t: Triplet, aligned: bool) {
        if aligned {
            self.violated.remove(&t);
            self.aligned.insert(t);
        } else {
            self.aligned.remove(&t);
            self.violated.insert(t);
        }
    }

    pub fn check_disjoint(&self) -> Result<(), CommonsenseError> {
        let overlap: Vec<Triplet> = self.aligned.intersection(&self.violated).copied().collect();
        if overlap.is_empty() {
            Ok(())
        } else {
            Err(CommonsenseError::Overlap(overlap))
        }
    }

    pub fn to_json(&self, vocab: &RelationVocabulary) -> serde_json::Value {
        serde_json::json!({
            "aligned": triplets_to_json(&self.aligned, vocab),
            "violated": triplets_to_json(&self.violated, vocab),
        })
    }

    /// Parses and checks disjointness.
    pub fn from_json(value: serde_json::Value, vocab: &RelationVocabulary) -> Result<Self, CommonsenseError> {
        let raw: AlignmentSetsJson = serde_json::from_value(value)?;
        let sets = Self {
            aligned: triplets_from_json(raw.aligned, vocab)?.into_iter().collect(),
            violated: triplets_from_json(raw.violated, vocab)?.into_iter().collect(),
        };
        sets.check_disjoint()?;
        Ok(sets)
    }
}

/// Candidates at ranks `[skip_top, skip_top + window)`.
pub fn validation_window<'a>(ranked: &'a [PredicateCandidate], cfg: &ValidationConfig) -> &'a [PredicateCandidate] {
    let start = cfg.skip_top.min(ranked.len());
    let end = cfg.skip_top.saturating_add(cfg.window).min(ranked.len());
    &ranked[start..end]
}

/// `votes` yes/no questions about one rendered triplet, cycling through the
/// templates.
pub fn render_prompts(triplet_text: &str, templates: &PromptTemplates, votes: usize) -> Vec<String> {
    (0..votes)
        .map(|i| templates.per_triplet[i % templates.per_triplet.len()].replace(PLACEHOLDER, triplet_text))
        .collect()
}

/// One prompt enumerating every triplet as a numbered list.
pub fn render_batched_prompt(triplet_texts: &[String], templates: &PromptTemplates) -> String {
    let list: Vec<String> = triplet_texts.iter().enumerate().map(|(i, t)| format!("{}. {t}", i + 1)).collect();
    templates.batched.replace(PLACEHOLDER, &list.join("\n"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Answer {
    Yes,
    No,
    Ambiguous,
}

fn yes_no_tokens(text: &str) -> impl Iterator<Item = bool> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter_map(|tok| {
        if tok.eq_ignore_ascii_case("yes") {
            Some(true)
        } else if tok.eq_ignore_ascii_case("no") {
            Some(false)
        } else {
            None
        }
    })
}

/// Polarity of the first standalone "yes"/"no" word, case-insensitive.
pub fn parse_verdict(text: &str) -> Answer {
    match yes_no_tokens(text).next() {
        Some(true) => Answer::Yes,
        Some(false) => Answer::No,
        None => Answer::Ambiguous,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("expected {expected} yes/no answers, found {found}")]
pub struct CountMismatch {
    pub expected: usize,
    pub found: usize,
}

pub fn parse_verdict_list(text: &str, expected: usize) -> Result<Vec<bool>, CountMismatch> {
    let answers: Vec<bool> = yes_no_tokens(text).collect();
    if answers.len() == expected {
        Ok(answers)
    } else {
        Err(CountMismatch { expected, found: answers.len() })
    }
}

/// Strict majority of `true` votes.
pub fn majority(votes: &[bool]) -> bool {
    votes.iter().filter(|v| **v).count() * 2 > votes.len()
}

/// Shared state for validating a stream of graphs.
pub struct Validator<'a, B: CompletionBackend + ?Sized> {
    pub cfg: &'a ValidationConfig,
    pub templates: &'a PromptTemplates,
    pub vocab: &'a RelationVocabulary,
    pub client: &'a B,
    pub whitelist: &'a TripletWhitelist,
    pub cache: &'a VerdictCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOutcome {
    pub graph: SceneGraph,
    pub query_count: usize,
    pub cache_hits: usize,
    pub whitelist_hits: usize,
    pub removals: usize,
    /// Verdicts for the unique window triplets, in first-seen order.
    pub verdicts: Vec<Verdict>,
    /// Set when the backend failed; the graph is then returned unfiltered.
    pub backend_error: Option<String>,
}

impl<B: CompletionBackend + ?Sized> Validator<'_, B> {
    fn ask_majority(&self, text: &str) -> Result<(Vec<bool>, usize), LlmError> {
        let prompts = render_prompts(text, self.templates, self.cfg.votes);
        let mut votes = Vec::with_capacity(prompts.len());
        for p in &prompts {
            // Unparseable replies count in favour of keeping the candidate.
            votes.push(parse_verdict(&self.client.complete(p)?) != Answer::No);
        }
        Ok((votes, prompts.len()))
    }

    fn query(&self, texts: &[String]) -> Result<(Vec<Vec<bool>>, usize), LlmError> {
        if texts.is_empty() {
            return Ok((Vec::new(), 0));
        }
        let mut spent = 0;
        if self.cfg.strategy == Strategy::BatchedList {
            let reply = self.client.complete(&render_batched_prompt(texts, self.templates))?;
            spent += 1;
            match parse_verdict_list(&reply, texts.len()) {
                Ok(list) => return Ok((list.into_iter().map(|v| vec![v]).collect(), spent)),
                Err(e) => tracing::debug!(error = %e, "batched reply unusable, falling back to per-triplet prompts"),
            }
        }
        let results: Vec<Result<(Vec<bool>, usize), LlmError>> =
            texts.par_iter().map(|t| self.ask_majority(t)).collect();
        let mut all = Vec::with_capacity(texts.len());
        for r in results {
            let (votes, n) = r?;
            spent += n;
            all.push(votes);
        }
        Ok((all, spent))
    }

    /// Validates one ranked graph and folds its verdicts into `sets`.
    pub fn validate_graph(&self, g: &SceneGraph, sets: &mut AlignmentSets) -> Result<ValidationOutcome, CommonsenseError> {
        self.cfg.validate()?;
        let window = validation_window(&g.pred_candidates, self.cfg);
        let start = self.cfg.skip_top.min(g.pred_candidates.len());

        let mut order: Vec<Triplet> = Vec::new();
        let mut seen = HashSet::new();
        for c in window {
            let t = g.candidate_triplet(c);
            if seen.insert(t) {
                order.push(t);
            }
        }

        let mut decided: HashMap<Triplet, Verdict> = HashMap::new();
        let mut pending: Vec<(Triplet, String)> = Vec::new();
        let (mut cache_hits, mut whitelist_hits) = (0, 0);
        for &t in &order {
            if self.whitelist.contains(&t) {
                whitelist_hits += 1;
                decided.insert(t, Verdict { triplet: t, aligned: true, raw_votes: Vec::new(), source: VerdictSource::Whitelist });
            } else if let Some(mut v) = self.cache.get(&t) {
                cache_hits += 1;
                v.source = VerdictSource::Cache;
                decided.insert(t, v);
            } else {
                let text = t
                    .render(self.vocab)
                    .ok_or_else(|| CommonsenseError::UnknownLabel { image_id: g.image_id.clone(), triplet: t })?;
                pending.push((t, text));
            }
        }

        let texts: Vec<String> = pending.iter().map(|(_, s)| s.clone()).collect();
        let (answers, query_count) = match self.query(&texts) {
            Ok(r) => r,
            Err(e @ (LlmError::AuthError(_) | LlmError::Config(_))) => return Err(e.into()),
            Err(e) => {
                tracing::warn!(image_id = %g.image_id, error = %e, "validation skipped, graph left unfiltered");
                return Ok(ValidationOutcome {
                    graph: g.clone(),
                    query_count: 0,
                    cache_hits,
                    whitelist_hits,
                    removals: 0,
                    verdicts: Vec::new(),
                    backend_error: Some(e.to_string()),
                });
            }
        };
        for ((t, _), votes) in pending.iter().zip(answers) {
            let v = Verdict { triplet: *t, aligned: majority(&votes), raw_votes: votes, source: VerdictSource::Model };
            self.cache.insert(v.clone());
            decided.insert(*t, v);
        }

        let verdicts: Vec<Verdict> = order.iter().map(|t| decided[t].clone()).collect();
        for v in &verdicts {
            sets.record(v.triplet, v.aligned);
        }

        let mut graph = g.clone();
        graph.pred_candidates = g
            .pred_candidates
            .iter()
            .enumerate()
            .filter(|(i, c)| {
                let in_window = *i >= start && *i < start + window.len();
                !in_window || decided[&g.candidate_triplet(c)].aligned
            })
            .map(|(_, c)| *c)
            .collect();
        let removals = g.pred_candidates.len() - graph.pred_candidates.len();

        Ok(ValidationOutcome { graph, query_count, cache_hits, whitelist_hits, removals, verdicts, backend_error: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_client::{MockBackend, MockRule};
    use crate::model::{BoundingBox, GtPredicate, ObjectInstance};

    fn cand(conf: f64) -> PredicateCandidate {
        PredicateCandidate { subject_idx: 0, object_idx: 1, relation: 0, super_category: 0, confidence: conf }
    }

    #[test]
    fn window_bounds() {
        let cfg = ValidationConfig::default();
        let ranked: Vec<_> = (0..50).map(|i| cand(1.0 - i as f64 / 100.0)).collect();
        let w = validation_window(&ranked, &cfg);
        assert_eq!(w.len(), 20);
        assert_eq!(w[0], ranked[10]);
        assert_eq!(w[19], ranked[29]);
        assert!(validation_window(&ranked[..5], &cfg).is_empty());
        assert_eq!(validation_window(&ranked[..15], &cfg), &ranked[10..15]);
    }

    #[test]
    fn prompts_embed_the_triplet() {
        let t = PromptTemplates::default();
        let prompts = render_prompts("girl riding skateboard", &t, 3);
        assert_eq!(prompts.len(), 3);
        assert!(prompts.iter().all(|p| p.contains("girl riding skateboard")));
        assert_eq!(prompts.iter().collect::<HashSet<_>>().len(), 3);
        assert_eq!(render_prompts("a b c", &t, 1).len(), 1);

        let batched = render_batched_prompt(&["girl riding skateboard".into(), "tree has hand".into()], &t);
        assert!(batched.contains("1. girl riding skateboard"));
        assert!(batched.contains("2. tree has hand"));
    }

    #[test]
    fn templates_need_a_placeholder() {
        assert!(PromptTemplates::new(vec!["no slot".into()], "{}".into()).is_err());
        assert!(PromptTemplates::new(vec!["{}?".into()], "{}".into()).is_ok());
    }

    #[test]
    fn single_verdicts() {
        assert_eq!(parse_verdict("Yes, a girl can ride a skateboard."), Answer::Yes);
        assert_eq!(parse_verdict("No."), Answer::No);
        assert_eq!(parse_verdict("It depends on context"), Answer::Ambiguous);
        assert_eq!(parse_verdict("Nobody knows; yesterday. NO"), Answer::No);
    }

    #[test]
    fn verdict_lists() {
        assert_eq!(parse_verdict_list("1. Yes 2. No 3. Yes", 3), Ok(vec![true, false, true]));
        assert_eq!(parse_verdict_list("Yes No", 3), Err(CountMismatch { expected: 3, found: 2 }));
        assert_eq!(parse_verdict_list("yes\nno", 2), Ok(vec![true, false]));
    }

    #[test]
    fn majority_over_all_three_vote_patterns() {
        for bits in 0u8..8 {
            let votes: Vec<bool> = (0..3).map(|i| bits & (1 << i) != 0).collect();
            assert_eq!(majority(&votes), bits.count_ones() >= 2, "{votes:?}");
        }
    }

    #[test]
    fn alignment_sets_stay_disjoint() {
        let mut s = AlignmentSets::default();
        let t = Triplet::new(0, 1, 2);
        s.record(t, true);
        s.record(t, false);
        assert!(s.aligned.is_empty());
        assert!(s.check_disjoint().is_ok());
        s.aligned.insert(t);
        assert!(matches!(s.check_disjoint(), Err(CommonsenseError::Overlap(_))));
    }

    fn vocab() -> RelationVocabulary {
        RelationVocabulary::new(
            vec!["has".into(), "on".into(), "riding".into()],
            vec!["tree".into(), "hand".into(), "girl".into(), "skateboard".into()],
        )
        .unwrap()
    }

    fn obj(label: usize) -> ObjectInstance {
        ObjectInstance { label, bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), score: 1.0 }
    }

    #[test]
    fn whitelist_is_a_set() {
        assert!(build_whitelist(&[]).is_empty());
        let g = SceneGraph {
            image_id: "a".into(),
            width: 1.0,
            height: 1.0,
            objects: vec![obj(2), obj(3)],
            gt_predicates: vec![GtPredicate { subject_idx: 0, object_idx: 1, relation: 2 }],
            pred_candidates: vec![],
        };
        let mut g2 = g.clone();
        g2.image_id = "b".into();
        let wl = build_whitelist(&[g, g2]);
        assert_eq!(wl.len(), 1);
        assert!(wl.contains(&Triplet::new(2, 2, 3)));
        let v = vocab();
        assert_eq!(TripletWhitelist::from_json(wl.to_json(&v), &v).unwrap(), wl);
    }

    #[test]
    fn batched_strategy_falls_back_on_count_mismatch() {
        let v = vocab();
        let g = SceneGraph {
            image_id: "x".into(),
            width: 1.0,
            height: 1.0,
            objects: vec![obj(0), obj(1), obj(2)],
            gt_predicates: vec![],
            pred_candidates: vec![
                PredicateCandidate { subject_idx: 0, object_idx: 1, relation: 0, super_category: 1, confidence: 0.9 },
                PredicateCandidate { subject_idx: 2, object_idx: 0, relation: 1, super_category: 0, confidence: 0.8 },
            ],
        };
        let cfg = ValidationConfig { skip_top: 0, window: 5, votes: 3, strategy: Strategy::BatchedList };
        let templates = PromptTemplates::default();
        let mock = MockBackend::new(MockRule { blacklist: ["tree has hand".into()].into(), default_answer: true });
        let wl = TripletWhitelist::default();
        let cache = VerdictCache::default();
        let validator = Validator { cfg: &cfg, templates: &templates, vocab: &v, client: &mock, whitelist: &wl, cache: &cache };
        let mut sets = AlignmentSets::default();
        let out = validator.validate_graph(&g, &mut sets).unwrap();
        // One batched prompt answered with a single "No", then 2 × 3 fallback prompts.
        assert_eq!(out.query_count, 7);
        assert_eq!(out.graph.pred_candidates, vec![g.pred_candidates[1]]);
        assert_eq!(sets.violated.iter().copied().collect::<Vec<_>>(), vec![Triplet::new(0, 0, 1)]);
    }

    #[test]
    fn cache_json_round_trip() {
        let v = vocab();
        let cache = VerdictCache::default();
        cache.insert(Verdict { triplet: Triplet::new(0, 0, 1), aligned: false, raw_votes: vec![false, false, true], source: VerdictSource::Model });
        let restored = VerdictCache::from_json(cache.to_json(&v), &v).unwrap();
        let got = restored.get(&Triplet::new(0, 0, 1)).unwrap();
        assert!(!got.aligned);
        assert_eq!(got.raw_votes, vec![false, false, true]);
        assert!(cache.to_json(&v).get("tree has hand").is_some());
    }
}
