//! Hierarchical relation classification for scene graphs, commonsense
//! validation of predicted triplets through a language-model backend, scene
//! graph evaluation metrics, and automatic relation-hierarchy clustering.

pub mod checkpoint;
pub mod clustering;
pub mod commonsense;
pub mod data;
pub mod io;
pub mod llm_client;
pub mod metrics;
pub mod model;
pub mod relhead;
pub mod tensor;
pub mod training;

pub use model::{
    iou, validate_hierarchy, BoundingBox, GtPredicate, ObjectInstance, PredicateCandidate, RelationHierarchy,
    RelationVocabulary, SceneGraph, Triplet,
};
