//! Scene graph domain types: boxes, vocabularies, the relation hierarchy and
//! per-image graphs.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Axis-aligned box in `(x, y, w, h)` form with a top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid bounding box [{x}, {y}, {w}, {h}]: width and height must be positive and finite")]
pub struct InvalidBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, InvalidBox> {
        let finite = x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite();
        if !finite || w <= 0.0 || h <= 0.0 {
            return Err(InvalidBox { x, y, w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Smallest box enclosing both `self` and `other`.
    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        BoundingBox {
            x,
            y,
            w: self.right().max(other.right()) - x,
            h: self.bottom().max(other.bottom()) - y,
        }
    }

    /// Scales the box from one coordinate frame into another.
    pub fn scaled(&self, sx: f64, sy: f64) -> BoundingBox {
        BoundingBox { x: self.x * sx, y: self.y * sy, w: self.w * sx, h: self.h * sy }
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = InvalidBox;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Error)]
pub enum VocabularyError {
    #[error("duplicate relation name {0:?}")]
    DuplicateRelation(String),
    #[error("duplicate object name {0:?}")]
    DuplicateObject(String),
}

/// Relation and object label names. Background is not a vocabulary entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVocabulary")]
pub struct RelationVocabulary {
    #[serde(rename = "relations")]
    relation_names: Vec<String>,
    #[serde(rename = "objects")]
    object_names: Vec<String>,
}

#[derive(Deserialize)]
struct RawVocabulary {
    relations: Vec<String>,
    objects: Vec<String>,
}

impl TryFrom<RawVocabulary> for RelationVocabulary {
    type Error = VocabularyError;

    fn try_from(raw: RawVocabulary) -> Result<Self, Self::Error> {
        RelationVocabulary::new(raw.relations, raw.objects)
    }
}

impl RelationVocabulary {
    pub fn new(relation_names: Vec<String>, object_names: Vec<String>) -> Result<Self, VocabularyError> {
        let mut seen = HashSet::new();
        for r in &relation_names {
            if !seen.insert(r.as_str()) {
                return Err(VocabularyError::DuplicateRelation(r.clone()));
            }
        }
        seen.clear();
        for o in &object_names {
            if !seen.insert(o.as_str()) {
                return Err(VocabularyError::DuplicateObject(o.clone()));
            }
        }
        Ok(Self { relation_names, object_names })
    }

    /// Vocabulary with placeholder names `rel0..`, `obj0..`.
    pub fn synthetic(num_relations: usize, num_objects: usize) -> Self {
        Self {
            relation_names: (0..num_relations).map(|i| format!("rel{i}")).collect(),
            object_names: (0..num_objects).map(|i| format!("obj{i}")).collect(),
        }
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn num_objects(&self) -> usize {
        self.object_names.len()
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn object_names(&self) -> &[String] {
        &self.object_names
    }

    pub fn relation(&self, idx: usize) -> Option<&str> {
        self.relation_names.get(idx).map(String::as_str)
    }

    pub fn object(&self, idx: usize) -> Option<&str> {
        self.object_names.get(idx).map(String::as_str)
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relation_names.iter().position(|r| r == name)
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.object_names.iter().position(|o| o == name)
    }
}

/// Problems reported by [`validate_hierarchy`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HierarchyIssue {
    #[error("relation {0} is not assigned to any super-category")]
    MissingRelation(usize),
    #[error("relation {0} is assigned more than once")]
    DuplicateAssignment(usize),
    #[error("super-category {0:?} is empty")]
    EmptyCategory(String),
    #[error("relation index {0} is outside the vocabulary")]
    UnknownRelation(usize),
    #[error("unknown relation name {0:?}")]
    UnknownRelationName(String),
    #[error("assignment of relation {0} disagrees with the category member lists")]
    AssignmentMismatch(usize),
}

#[derive(Debug, Error)]
#[error("invalid relation hierarchy: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct HierarchyError(pub Vec<HierarchyIssue>);

/// Partition of the relation vocabulary into disjoint super-categories.
///
/// The background class is implicit: it sits after the last super-category in
/// super-category probability vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationHierarchy {
    pub super_categories: Vec<String>,
    /// Relation index to super-category index.
    pub assignment: Vec<Option<usize>>,
    /// Per category, relation indices in within-category order.
    pub within_category_order: Vec<Vec<usize>>,
}

pub const DEFAULT_SUPER_CATEGORIES: [&str; 3] = ["geometric", "possessive", "semantic"];

impl RelationHierarchy {
    /// Builds a hierarchy from per-category member lists without validating it.
    pub fn from_members(super_categories: Vec<String>, members: Vec<Vec<usize>>, num_relations: usize) -> Self {
        let mut assignment = vec![None; num_relations];
        for (c, list) in members.iter().enumerate() {
            for &r in list {
                if let Some(slot) = assignment.get_mut(r) {
                    if slot.is_none() {
                        *slot = Some(c);
                    }
                }
            }
        }
        Self { super_categories, assignment, within_category_order: members }
    }

    /// Builds and validates.
    pub fn new(
        super_categories: Vec<String>,
        members: Vec<Vec<usize>>,
        vocab: &RelationVocabulary,
    ) -> Result<Self, HierarchyError> {
        let h = Self::from_members(super_categories, members, vocab.num_relations());
        validate_hierarchy(&h, vocab).map_err(HierarchyError)?;
        Ok(h)
    }

    /// Categories of the given sizes over relations `0..sum(sizes)` in order.
    /// Uses the default category names when there are three of them.
    pub fn contiguous(sizes: &[usize]) -> Self {
        let names: Vec<String> = if sizes.len() == DEFAULT_SUPER_CATEGORIES.len() {
            DEFAULT_SUPER_CATEGORIES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..sizes.len()).map(|i| format!("cluster_{i}")).collect()
        };
        let mut next = 0;
        let members = sizes
            .iter()
            .map(|&n| {
                let m: Vec<usize> = (next..next + n).collect();
                next += n;
                m
            })
            .collect();
        Self::from_members(names, members, next)
    }

    pub fn num_categories(&self) -> usize {
        self.super_categories.len()
    }

    pub fn num_relations(&self) -> usize {
        self.assignment.len()
    }

    /// Index of the background entry in super-category vectors.
    pub fn background_index(&self) -> usize {
        self.super_categories.len()
    }

    pub fn category_sizes(&self) -> Vec<usize> {
        self.within_category_order.iter().map(Vec::len).collect()
    }

    pub fn category_of(&self, relation: usize) -> Option<usize> {
        self.assignment.get(relation).copied().flatten()
    }

    /// `(category, position within category)` of a relation.
    pub fn locate(&self, relation: usize) -> Option<(usize, usize)> {
        let c = self.category_of(relation)?;
        let pos = self.within_category_order[c].iter().position(|&r| r == relation)?;
        Some((c, pos))
    }

    /// Parses the hierarchy JSON format: category name to relation names, in
    /// category order.
    pub fn from_json_str(s: &str, vocab: &RelationVocabulary) -> Result<Self, HierarchyLoadError> {
        let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(s)?;
        let mut names = Vec::with_capacity(map.len());
        let mut members = Vec::with_capacity(map.len());
        let mut unknown = Vec::new();
        for (cat, rels) in map {
            let rels: Vec<String> = serde_json::from_value(rels)?;
            let mut list = Vec::with_capacity(rels.len());
            for r in rels {
                match vocab.relation_index(&r) {
                    Some(i) => list.push(i),
                    None => unknown.push(HierarchyIssue::UnknownRelationName(r)),
                }
            }
            names.push(cat);
            members.push(list);
        }
        let h = Self::from_members(names, members, vocab.num_relations());
        let mut issues = unknown;
        if let Err(mut more) = validate_hierarchy(&h, vocab) {
            issues.append(&mut more);
        }
        if issues.is_empty() {
            Ok(h)
        } else {
            Err(HierarchyLoadError::Invalid(HierarchyError(issues)))
        }
    }

    pub fn to_json_value(&self, vocab: &RelationVocabulary) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (name, members) in self.super_categories.iter().zip(&self.within_category_order) {
            let rels: Vec<serde_json::Value> = members
                .iter()
                .map(|&r| serde_json::Value::String(vocab.relation(r).unwrap_or_default().to_string()))
                .collect();
            map.insert(name.clone(), serde_json::Value::Array(rels));
        }
        serde_json::Value::Object(map)
    }
}

#[derive(Debug, Error)]
pub enum HierarchyLoadError {
    #[error("malformed hierarchy JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(HierarchyError),
}

/// Checks that the hierarchy is a total partition of the vocabulary's
/// relations into non-empty, disjoint categories.
pub fn validate_hierarchy(h: &RelationHierarchy, v: &RelationVocabulary) -> Result<(), Vec<HierarchyIssue>> {
    let n = v.num_relations();
    let mut issues = Vec::new();
    let mut count = vec![0usize; n];
    let mut owner = vec![None; n];

    for (c, members) in h.within_category_order.iter().enumerate() {
        if members.is_empty() {
            let name = h.super_categories.get(c).cloned().unwrap_or_else(|| c.to_string());
            issues.push(HierarchyIssue::EmptyCategory(name));
        }
        for &r in members {
            if r >= n {
                issues.push(HierarchyIssue::UnknownRelation(r));
                continue;
            }
            count[r] += 1;
            if count[r] == 2 {
                issues.push(HierarchyIssue::DuplicateAssignment(r));
            }
            owner[r].get_or_insert(c);
        }
    }
    for c in h.within_category_order.len()..h.super_categories.len() {
        issues.push(HierarchyIssue::EmptyCategory(h.super_categories[c].clone()));
    }
    for r in 0..n {
        if count[r] == 0 {
            issues.push(HierarchyIssue::MissingRelation(r));
        } else if h.assignment.len() != n || h.assignment[r] != owner[r] {
            issues.push(HierarchyIssue::AssignmentMismatch(r));
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub label: usize,
    #[serde(rename = "bbox")]
    pub bbox: BoundingBox,
    #[serde(default = "one")]
    pub score: f64,
}

fn one() -> f64 {
    1.0
}

/// Label-level `(subject, relation, object)` triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub subject_label: usize,
    pub relation: usize,
    pub object_label: usize,
}

impl Triplet {
    pub fn new(subject_label: usize, relation: usize, object_label: usize) -> Self {
        Self { subject_label, relation, object_label }
    }

    /// Lowercase `"subject relation object"` text.
    pub fn render(&self, vocab: &RelationVocabulary) -> Option<String> {
        Some(
            format!(
                "{} {} {}",
                vocab.object(self.subject_label)?,
                vocab.relation(self.relation)?,
                vocab.object(self.object_label)?
            )
            .to_lowercase(),
        )
    }

    pub fn to_names(&self, vocab: &RelationVocabulary) -> Option<[String; 3]> {
        Some([
            vocab.object(self.subject_label)?.to_string(),
            vocab.relation(self.relation)?.to_string(),
            vocab.object(self.object_label)?.to_string(),
        ])
    }

    pub fn from_names(names: &[String; 3], vocab: &RelationVocabulary) -> Option<Self> {
        Some(Self {
            subject_label: vocab.object_index(&names[0])?,
            relation: vocab.relation_index(&names[1])?,
            object_label: vocab.object_index(&names[2])?,
        })
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject_label, self.relation, self.object_label)
    }
}

/// Ground-truth edge between two nodes of a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct GtPredicate {
    pub subject_idx: usize,
    pub object_idx: usize,
    pub relation: usize,
}

impl From<[usize; 3]> for GtPredicate {
    fn from(v: [usize; 3]) -> Self {
        Self { subject_idx: v[0], object_idx: v[1], relation: v[2] }
    }
}

impl From<GtPredicate> for [usize; 3] {
    fn from(p: GtPredicate) -> Self {
        [p.subject_idx, p.object_idx, p.relation]
    }
}

/// One ranked relation hypothesis for a directed node pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredicateCandidate {
    #[serde(rename = "sub")]
    pub subject_idx: usize,
    #[serde(rename = "obj")]
    pub object_idx: usize,
    #[serde(rename = "rel")]
    pub relation: usize,
    #[serde(rename = "supercat")]
    pub super_category: usize,
    #[serde(rename = "conf")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub image_id: String,
    #[serde(default)]
    pub width: f64,
    #[serde(default)]
    pub height: f64,
    pub objects: Vec<ObjectInstance>,
    #[serde(default)]
    pub gt_predicates: Vec<GtPredicate>,
    #[serde(default)]
    pub pred_candidates: Vec<PredicateCandidate>,
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("image {image_id}: node index {index} out of range ({num_objects} objects)")]
    NodeOutOfRange { image_id: String, index: usize, num_objects: usize },
    #[error("image {image_id}: candidate links node {0} to itself", .index)]
    SelfLoop { image_id: String, index: usize },
    #[error("image {image_id}: confidence {confidence} outside [0, 1]")]
    BadConfidence { image_id: String, confidence: f64 },
}

impl SceneGraph {
    /// Checks node indices and confidences. Duplicate ground truths are
    /// removed (keeping the first occurrence); returns how many were dropped.
    pub fn normalize(&mut self) -> Result<usize, GraphError> {
        let n = self.objects.len();
        let check = |index: usize| {
            if index >= n {
                Err(GraphError::NodeOutOfRange { image_id: self.image_id.clone(), index, num_objects: n })
            } else {
                Ok(())
            }
        };
        for p in &self.gt_predicates {
            check(p.subject_idx)?;
            check(p.object_idx)?;
        }
        for c in &self.pred_candidates {
            check(c.subject_idx)?;
            check(c.object_idx)?;
            if c.subject_idx == c.object_idx {
                return Err(GraphError::SelfLoop { image_id: self.image_id.clone(), index: c.subject_idx });
            }
            if !(0.0..=1.0).contains(&c.confidence) {
                return Err(GraphError::BadConfidence { image_id: self.image_id.clone(), confidence: c.confidence });
            }
        }
        let before = self.gt_predicates.len();
        let mut seen = HashSet::with_capacity(before);
        self.gt_predicates.retain(|p| seen.insert(*p));
        let dropped = before - self.gt_predicates.len();
        if dropped > 0 {
            tracing::warn!(image_id = %self.image_id, dropped, "duplicate ground-truth triplets removed");
        }
        Ok(dropped)
    }

    /// Label-level triplet of a ground-truth edge.
    pub fn gt_triplet(&self, p: &GtPredicate) -> Triplet {
        Triplet::new(self.objects[p.subject_idx].label, p.relation, self.objects[p.object_idx].label)
    }

    /// Label-level triplet of a predicted candidate.
    pub fn candidate_triplet(&self, c: &PredicateCandidate) -> Triplet {
        Triplet::new(self.objects[c.subject_idx].label, c.relation, self.objects[c.object_idx].label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn iou_spot_values() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(5.0, 5.0, 1.0, 1.0)), 0.0);
        assert!((iou(&a, &bx(1.0, 0.0, 2.0, 2.0)) - 1.0 / 3.0).abs() < 1e-12);
        // Touching edges share no area.
        assert_eq!(iou(&a, &bx(2.0, 0.0, 2.0, 2.0)), 0.0);
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(BoundingBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(serde_json::from_str::<BoundingBox>("[0, 0, 0, 3]").is_err());
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.1..40.0f64, 0.1..40.0f64).prop_map(|(x, y, w, h)| bx(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }
    }

    fn vocab(n: usize) -> RelationVocabulary {
        RelationVocabulary::synthetic(n, 4)
    }

    #[test]
    fn hierarchy_missing_relation() {
        let v = vocab(9);
        let h = RelationHierarchy::from_members(
            DEFAULT_SUPER_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 8]],
            9,
        );
        assert_eq!(validate_hierarchy(&h, &v), Err(vec![HierarchyIssue::MissingRelation(7)]));
    }

    #[test]
    fn hierarchy_empty_category() {
        let v = vocab(4);
        let h = RelationHierarchy::from_members(
            DEFAULT_SUPER_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            vec![vec![0, 1], vec![2, 3], vec![]],
            4,
        );
        assert_eq!(validate_hierarchy(&h, &v), Err(vec![HierarchyIssue::EmptyCategory("semantic".into())]));
    }

    #[test]
    fn hierarchy_duplicate() {
        let v = vocab(3);
        let h = RelationHierarchy::from_members(vec!["a".into(), "b".into()], vec![vec![0, 1], vec![1, 2]], 3);
        assert_eq!(validate_hierarchy(&h, &v), Err(vec![HierarchyIssue::DuplicateAssignment(1)]));
    }

    #[test]
    fn default_visual_genome_hierarchy_is_a_partition() {
        let v: RelationVocabulary = serde_json::from_str(crate::data::VG50_VOCABULARY_JSON).unwrap();
        let h = RelationHierarchy::from_json_str(crate::data::VG50_HIERARCHY_JSON, &v).unwrap();
        assert_eq!(v.num_relations(), 50);
        assert_eq!(h.super_categories, DEFAULT_SUPER_CATEGORIES);
        assert_eq!(h.category_sizes().iter().sum::<usize>(), 50);
        let mut all: Vec<usize> = h.within_category_order.concat();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn hierarchy_json_round_trip() {
        let v = vocab(6);
        let h = RelationHierarchy::contiguous(&[2, 2, 2]);
        let text = h.to_json_value(&v).to_string();
        assert_eq!(RelationHierarchy::from_json_str(&text, &v).unwrap(), h);
    }

    #[test]
    fn unknown_relation_name_is_reported() {
        let v = vocab(2);
        let err = RelationHierarchy::from_json_str(r#"{"a": ["rel0", "nope"], "b": ["rel1"]}"#, &v).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn normalize_dedups_ground_truth() {
        let mut g: SceneGraph = serde_json::from_str(
            r#"{"image_id":"a","width":10,"height":10,
                "objects":[{"label":0,"bbox":[0,0,1,1],"score":1.0},{"label":1,"bbox":[1,1,2,2],"score":0.5}],
                "gt_predicates":[[0,1,2],[0,1,2],[1,0,2]]}"#,
        )
        .unwrap();
        assert_eq!(g.normalize().unwrap(), 1);
        assert_eq!(g.gt_predicates.len(), 2);
        g.gt_predicates.push(GtPredicate { subject_idx: 0, object_idx: 5, relation: 0 });
        assert!(matches!(g.normalize(), Err(GraphError::NodeOutOfRange { index: 5, .. })));
    }

    #[test]
    fn triplet_rendering_is_lowercase() {
        let v = RelationVocabulary::new(vec!["Riding".into()], vec!["Girl".into(), "skateboard".into()]).unwrap();
        assert_eq!(Triplet::new(0, 0, 1).render(&v).unwrap(), "girl riding skateboard");
    }
}
