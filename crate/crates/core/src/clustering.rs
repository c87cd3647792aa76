//! Relation hierarchy construction by k-means over relation-label embeddings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{validate_hierarchy, HierarchyError, RelationHierarchy, RelationVocabulary};

pub const MAX_ITERATIONS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("cannot form {k} clusters from {points} points")]
    TooFewPoints { k: usize, points: usize },
    #[error("embedding dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("k must be at least 1")]
    ZeroClusters,
    #[error("relation {0:?} has no embedding")]
    MissingEmbedding(String),
    #[error("cluster {0} is empty")]
    EmptyCategory(usize),
    #[error("malformed embedding file: {0}")]
    Parse(String),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyErrorWrapper),
}

#[derive(Debug, Error, PartialEq)]
#[error("{0}")]
pub struct HierarchyErrorWrapper(pub String);

impl From<HierarchyError> for ClusterError {
    fn from(e: HierarchyError) -> Self {
        ClusterError::Hierarchy(HierarchyErrorWrapper(e.to_string()))
    }
}

/// Relation name to embedding vector, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub names: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(names: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self, ClusterError> {
        if names.len() != vectors.len() {
            return Err(ClusterError::DimensionMismatch(format!("{} names for {} vectors", names.len(), vectors.len())));
        }
        if let Some(first) = vectors.first() {
            let dim = first.len();
            if dim == 0 {
                return Err(ClusterError::DimensionMismatch("empty embedding vectors".into()));
            }
            for (n, v) in names.iter().zip(&vectors) {
                if v.len() != dim {
                    return Err(ClusterError::DimensionMismatch(format!("{n:?} has length {}, expected {dim}", v.len())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(ClusterError::DimensionMismatch(format!("{n:?} has non-finite entries")));
                }
            }
        }
        Ok(Self { names, vectors })
    }

    /// Parses a JSON object mapping relation names to number arrays.
    pub fn from_json_str(s: &str) -> Result<Self, ClusterError> {
        let map: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(s).map_err(|e| ClusterError::Parse(e.to_string()))?;
        let mut names = Vec::with_capacity(map.len());
        let mut vectors = Vec::with_capacity(map.len());
        for (name, v) in map {
            let vec: Vec<f64> = serde_json::from_value(v).map_err(|e| ClusterError::Parse(format!("{name:?}: {e}")))?;
            names.push(name);
            vectors.push(vec);
        }
        Self::new(names, vectors)
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Scales every vector to unit length (zero vectors are left alone).
    pub fn l2_normalized(mut self) -> Self {
        for v in &mut self.vectors {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
        }
        self
    }

    /// Reorders rows to follow the vocabulary's relation order.
    pub fn aligned_to(&self, vocab: &RelationVocabulary) -> Result<Self, ClusterError> {
        let mut vectors = Vec::with_capacity(vocab.num_relations());
        for name in vocab.relation_names() {
            let i = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| ClusterError::MissingEmbedding(name.clone()))?;
            vectors.push(self.vectors[i].clone());
        }
        Self::new(vocab.relation_names().to_vec(), vectors)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Cluster id per table row.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning run.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, m)| (c, sq_dist(p, m)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn kmeans_plus_plus<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..points.len())
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        };
        centroids.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

/// Lloyd iterations from the given centroids until the assignment stops
/// changing or [`MAX_ITERATIONS`] is reached.
pub fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> ClusterResult {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignment: Vec<usize> = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;

    loop {
        let mut changed = false;
        let mut inertia = 0.0;
        for (a, p) in assignment.iter_mut().zip(points) {
            let (mut c, mut d) = nearest(p, &centroids);
            // Ties keep the current cluster so reseeded clusters hold their point.
            if *a != usize::MAX && *a != c {
                let own = sq_dist(p, &centroids[*a]);
                if own <= d {
                    (c, d) = (*a, own);
                }
            }
            inertia += d;
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        history.push(inertia);
        if !changed || iterations == MAX_ITERATIONS {
            return ClusterResult { assignment, centroids, inertia, inertia_history: history, iterations };
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignment.iter().zip(points) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        // Empty clusters take the point farthest from its own centroid.
        let mut reseeded = false;
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..points.len())
                .filter(|&i| counts[assignment[i]] > 1)
                .max_by(|&i, &j| {
                    sq_dist(&points[i], &centroids[assignment[i]])
                        .total_cmp(&sq_dist(&points[j], &centroids[assignment[j]]))
                        .then(j.cmp(&i))
                });
            if let Some(i) = far {
                counts[assignment[i]] -= 1;
                counts[c] = 1;
                assignment[i] = c;
                centroids[c] = points[i].clone();
                reseeded = true;
            }
        }
        if reseeded {
            for c in 0..k {
                let members: Vec<&Vec<f64>> =
                    assignment.iter().zip(points).filter(|(a, _)| **a == c).map(|(_, p)| p).collect();
                centroids[c] = (0..dim).map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64).collect();
            }
        }
    }
}

/// k-means++ seeded Lloyd clustering, best of `restarts` runs. Restart `r`
/// draws from stream `r` of the ChaCha generator seeded with `seed`.
pub fn kmeans_with_restarts(table: &EmbeddingTable, k: usize, seed: u64, restarts: usize) -> Result<ClusterResult, ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > table.len() {
        return Err(ClusterError::TooFewPoints { k, points: table.len() });
    }
    let runs: Vec<ClusterResult> = (0..restarts.max(1) as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r);
            lloyd(&table.vectors, kmeans_plus_plus(&table.vectors, k, &mut rng))
        })
        .collect();
    // earliest restart wins ties
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .expect("at least one run");
    Ok(best)
}

pub fn kmeans(table: &EmbeddingTable, k: usize, seed: u64) -> Result<ClusterResult, ClusterError> {
    kmeans_with_restarts(table, k, seed, DEFAULT_RESTARTS)
}

/// Turns clusters into super-categories `cluster_0..cluster_{k-1}`, members
/// ordered by relation index. The table must follow the vocabulary order.
pub fn hierarchy_from_clusters(cr: &ClusterResult, vocab: &RelationVocabulary) -> Result<RelationHierarchy, ClusterError> {
    if cr.assignment.len() != vocab.num_relations() {
        return Err(ClusterError::DimensionMismatch(format!(
            "{} assignments for {} relations",
            cr.assignment.len(),
            vocab.num_relations()
        )));
    }
    let k = cr.centroids.len();
    let mut members = vec![Vec::new(); k];
    for (r, &c) in cr.assignment.iter().enumerate() {
        members[c].push(r);
    }
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(ClusterError::EmptyCategory(c));
    }
    let names = (0..k).map(|c| format!("cluster_{c}")).collect();
    let h = RelationHierarchy::from_members(names, members, vocab.num_relations());
    validate_hierarchy(&h, vocab).map_err(HierarchyError)?;
    Ok(h)
}
