//! JSON manifest reader/writer.
//!
//! A manifest is a single model object, an array of model objects, or
//! `{"models": [...]}`. Weights live in separate little-endian `f32` blobs,
//! row-major `[M][N][K][K]`, referenced by a path relative to the manifest.
//! A `null` weights entry on a weighted op is filled with seeded uniform
//! values in `[-1, 1]` derived from the model name and op position.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array4;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::builtin::{seeded_uniform, stable_seed};
use super::{ModelZoo, NetworkArch, NodeSpec, OpKind, OperatorSpec};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestModel {
    name: String,
    baseline_accuracy: f64,
    nodes: Vec<NodeSpec>,
    ops: Vec<ManifestOp>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestOp {
    src: String,
    dst: String,
    kind: OpKind,
    k: usize,
    stride: usize,
    padding: usize,
    #[serde(default)]
    weights: Option<String>,
    #[serde(default)]
    fixed_latency_cycles: Option<u64>,
}

/// Reads and validates a manifest file.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<ModelZoo> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest_str(&text, &base)
}

/// Parses manifest text; blob paths resolve against `base_dir`.
pub fn parse_manifest_str(text: &str, base_dir: &Path) -> Result<ModelZoo> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::parse("manifest", e.to_string()))?;
    let entries = match value {
        Value::Array(items) => items,
        Value::Object(mut map) if map.contains_key("models") && !map.contains_key("name") => {
            match map.remove("models") {
                Some(Value::Array(items)) => items,
                _ => return Err(Error::parse("models", "expected an array of models")),
            }
        }
        obj @ Value::Object(_) => vec![obj],
        _ => return Err(Error::parse("manifest", "expected an object or array")),
    };
    let mut models = Vec::with_capacity(entries.len());
    for (i, entry) in entries.into_iter().enumerate() {
        let model: ManifestModel =
            serde_json::from_value(entry).map_err(|e| Error::parse(format!("models[{i}]"), e.to_string()))?;
        models.push(build_model(model, base_dir)?);
    }
    ModelZoo::new(models)
}

fn build_model(model: ManifestModel, base_dir: &Path) -> Result<NetworkArch> {
    let ManifestModel {
        name,
        baseline_accuracy,
        nodes,
        ops,
    } = model;
    let mut built = Vec::with_capacity(ops.len());
    for (i, op) in ops.into_iter().enumerate() {
        let ctx = format!("op {i} ({} {} -> {})", op.kind.as_str(), op.src, op.dst);
        let weights = match op.kind {
            OpKind::Pool => {
                if op.weights.is_some() {
                    return Err(Error::validation(ctx, "pool ops carry no weights"));
                }
                None
            }
            kind => {
                let shape = expected_shape(&nodes, &op, kind)
                    .ok_or_else(|| Error::validation(&ctx, "op references an unknown node"))?;
                Some(match &op.weights {
                    Some(rel) => read_blob(&base_dir.join(rel), shape, &ctx)?,
                    None => seeded_uniform(shape, stable_seed(&format!("{name}/{i}"))),
                })
            }
        };
        built.push(OperatorSpec {
            src: op.src,
            dst: op.dst,
            kind: op.kind,
            k: op.k,
            stride: op.stride,
            padding: op.padding,
            pattern: None,
            weights: weights.map(std::sync::Arc::new),
            fixed_latency_cycles: op.fixed_latency_cycles,
        });
    }
    NetworkArch::new(name, baseline_accuracy, nodes, built)
}

fn expected_shape(nodes: &[NodeSpec], op: &ManifestOp, kind: OpKind) -> Option<[usize; 4]> {
    let src = nodes.iter().find(|n| n.id == op.src)?;
    let dst = nodes.iter().find(|n| n.id == op.dst)?;
    Some(match kind {
        OpKind::Conv => [dst.channels, src.channels, op.k, op.k],
        OpKind::DepthwiseConv => [dst.channels, 1, op.k, op.k],
        OpKind::Linear => [dst.channels, src.channels * src.rows * src.cols, 1, 1],
        OpKind::Pool => return None,
    })
}

fn read_blob(path: &Path, shape: [usize; 4], ctx: &str) -> Result<Array4<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected: usize = shape.iter().product();
    if bytes.len() != expected * 4 {
        return Err(Error::validation(
            ctx,
            format!(
                "weight blob {} holds {} bytes, expected {} for shape {:?}",
                path.display(),
                bytes.len(),
                expected * 4,
                shape
            ),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Array4::from_shape_vec(shape, values).map_err(|e| Error::validation(ctx, e.to_string()))
}

/// Writes `zoo` as `manifest.json` plus one blob per weighted op under
/// `dir`. Returns the manifest path.
pub fn write_manifest(zoo: &ModelZoo, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut models = Vec::new();
    for net in zoo.models() {
        let mut ops = Vec::new();
        for (i, op) in net.ops().iter().enumerate() {
            let weights = match &op.weights {
                Some(w) => {
                    let rel = format!("{}_op{i}.bin", sanitize(net.name()));
                    let mut bytes = Vec::with_capacity(w.len() * 4);
                    for v in w.iter() {
                        bytes.extend_from_slice(&v.to_le_bytes());
                    }
                    let path = dir.join(&rel);
                    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
                    Some(rel)
                }
                None => None,
            };
            ops.push(ManifestOp {
                src: op.src.clone(),
                dst: op.dst.clone(),
                kind: op.kind,
                k: op.k,
                stride: op.stride,
                padding: op.padding,
                weights,
                fixed_latency_cycles: op.fixed_latency_cycles,
            });
        }
        models.push(ManifestModel {
            name: net.name().to_string(),
            baseline_accuracy: net.baseline_accuracy(),
            nodes: net.nodes().to_vec(),
            ops,
        });
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&models).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "one", "baseline_accuracy": 0.7,
        "nodes": [{"id":"in","rows":8,"cols":8,"channels":1},
                  {"id":"out","rows":8,"cols":8,"channels":1}],
        "ops": [{"src":"in","dst":"out","kind":"conv","k":1,"stride":1,"padding":0,
                 "weights":null,"fixed_latency_cycles":null}]
    }"#;

    #[test]
    fn minimal_manifest() {
        let zoo = parse_manifest_str(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(zoo.len(), 1);
        assert_eq!(zoo.models()[0].ops().len(), 1);
    }

    #[test]
    fn channel_mismatch_names_the_op() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("w.bin"), vec![0u8; 16 * 8 * 9 * 4]).unwrap();
        let text = r#"{
            "name": "bad", "baseline_accuracy": 0.7,
            "nodes": [{"id":"in","rows":8,"cols":8,"channels":4},
                      {"id":"out","rows":8,"cols":8,"channels":16}],
            "ops": [{"src":"in","dst":"out","kind":"conv","k":3,"stride":1,"padding":1,
                     "weights":"w.bin"}]
        }"#;
        let err = parse_manifest_str(text, dir.path()).unwrap_err();
        match err {
            Error::Validation { context, .. } => assert!(context.starts_with("op 0"), "{context}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_violation_names_the_field() {
        let text = MINIMAL.replace("\"k\":1,", "");
        let err = parse_manifest_str(&text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("`k`"), "{err}");
    }

    #[test]
    fn unknown_kind_rejected() {
        let text = MINIMAL.replace("\"conv\"", "\"attention\"");
        assert!(matches!(
            parse_manifest_str(&text, Path::new(".")),
            Err(Error::Parse { .. })
        ));
    }
}
