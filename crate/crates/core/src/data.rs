//! Bundled fixtures: the 50-relation Visual Genome vocabulary, its default
//! three-way hierarchy and a synthetic embedding table over its relations.

pub const VG50_VOCABULARY_JSON: &str = include_str!("../data/vg50_vocabulary.json");
pub const VG50_HIERARCHY_JSON: &str = include_str!("../data/vg50_hierarchy.json");
/// Seeded random 16-d vectors, not real token embeddings.
pub const VG50_EMBEDDINGS_FIXTURE_JSON: &str = include_str!("../data/vg50_embeddings_fixture.json");
