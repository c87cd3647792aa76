//! Head checkpoints: one `SGT1` tensor file per weight or bias plus a JSON
//! manifest naming each file with its dimensions.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relhead::{HeadParameters, Linear};
use crate::tensor::{Matrix, Tensor, TensorError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("manifest is inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub feature_dim: usize,
    pub pooled_dim: usize,
    pub category_names: Vec<String>,
    pub category_sizes: Vec<usize>,
    pub has_flat: bool,
    pub tensors: Vec<TensorEntry>,
}

/// Short tag used in tensor names: `geo`, `pos`, `sem` for the default
/// categories, otherwise `c{index}`.
pub fn category_tag(index: usize, name: &str) -> String {
    match name {
        "geometric" => "geo".into(),
        "possessive" => "pos".into(),
        "semantic" => "sem".into(),
        _ => format!("c{index}"),
    }
}

fn layer_names(p: &HeadParameters, category_names: &[String]) -> Vec<String> {
    let mut names = vec!["proj".to_string(), "sc".to_string()];
    names.extend((0..p.categories.len()).map(|i| category_tag(i, category_names.get(i).map_or("", String::as_str))));
    if p.flat.is_some() {
        names.push("flat".into());
    }
    names
}

fn layers(p: &HeadParameters) -> Vec<&Linear> {
    let mut v = vec![&p.proj, &p.super_cat];
    v.extend(p.categories.iter());
    v.extend(p.flat.iter());
    v
}

pub fn save_checkpoint(dir: &Path, p: &HeadParameters, category_names: &[String]) -> Result<Manifest, CheckpointError> {
    fs::create_dir_all(dir)?;
    let mut tensors = Vec::new();
    for (tag, layer) in layer_names(p, category_names).iter().zip(layers(p)) {
        for (name, t) in [
            (format!("W_{tag}"), layer.weight.to_tensor()),
            (format!("b_{tag}"), Tensor { dims: vec![layer.bias.len()], data: layer.bias.clone() }),
        ] {
            let file = format!("{name}.sgt");
            t.save(&dir.join(&file))?;
            tensors.push(TensorEntry { name, file, dims: t.dims });
        }
    }
    let manifest = Manifest {
        format: "SGT1".into(),
        feature_dim: p.feature_dim(),
        pooled_dim: p.pooled_dim(),
        category_names: category_names.to_vec(),
        category_sizes: p.category_sizes(),
        has_flat: p.flat.is_some(),
        tensors,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(HeadParameters, Manifest), CheckpointError> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let mut p = HeadParameters::zeros(manifest.pooled_dim, manifest.feature_dim, &manifest.category_sizes, manifest.has_flat);
    let names = layer_names(&p, &manifest.category_names);
    let load = |name: &str| -> Result<Tensor, CheckpointError> {
        let entry = manifest
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| CheckpointError::Inconsistent(format!("tensor {name} missing")))?;
        let t = Tensor::load(&dir.join(&entry.file))?;
        if t.dims != entry.dims {
            return Err(CheckpointError::Inconsistent(format!("{name}: file dims {:?} vs manifest {:?}", t.dims, entry.dims)));
        }
        Ok(t)
    };
    let mut loaded = Vec::new();
    for tag in &names {
        let w = Matrix::from_tensor(load(&format!("W_{tag}"))?)?;
        let b = load(&format!("b_{tag}"))?;
        loaded.push(Linear { weight: w, bias: b.data });
    }
    let template = p.clone();
    let mut it = loaded.into_iter();
    p.proj = it.next().expect("proj");
    p.super_cat = it.next().expect("sc");
    for c in p.categories.iter_mut() {
        *c = it.next().expect("category");
    }
    if let Some(f) = p.flat.as_mut() {
        *f = it.next().expect("flat");
    }
    if !p.same_shape(&template) {
        return Err(CheckpointError::Inconsistent("tensor shapes disagree with manifest dimensions".into()));
    }
    Ok((p, manifest))
}
