//! On-disk dataset layout.
//!
//! ```text
//! <root>/mapping.txt            "<index> <class name>" per line
//! <root>/splits/<split>.txt     one video id per line
//! <root>/features/<id>.bin      "DSEG", version, L, D (u32 LE), then L·D f32 LE row-major
//! <root>/groundTruth/<id>.txt   one class name per frame
//! <root>/dataset.toml           generator metadata (optional)
//! <root>/prototypes.bin         class prototypes in the feature format (optional)
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Split, SyntheticDataset, Video};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

const MAGIC: &[u8; 4] = b"DSEG";
const VERSION: u32 = 1;
const HEADER: usize = 16;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    feature_dim: usize,
    noise_std: f64,
    blend_width: usize,
    seed: u64,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_features(path: &Path, features: &Matrix) -> Result<()> {
    let mut bytes = Vec::with_capacity(HEADER + 4 * features.len());
    bytes.extend_from_slice(MAGIC);
    for v in [VERSION, features.rows() as u32, features.cols() as u32] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for &v in features.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write(path, &bytes)
}

/// Reads a feature file; `what` names the video in error messages.
pub fn read_features(path: &Path, what: &str) -> Result<Matrix> {
    let bytes = read(path)?;
    let fail = |offset: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        offset: offset as u64,
        msg: format!("{what}: {msg}"),
    };
    if bytes.len() < HEADER {
        return Err(fail(bytes.len(), "truncated header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail(0, "bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(1) != VERSION {
        return Err(fail(4, format!("unsupported version {}", word(1))));
    }
    let (rows, cols) = (word(2) as usize, word(3) as usize);
    let expected = HEADER + 4 * rows * cols;
    if bytes.len() < expected {
        return Err(fail(bytes.len(), format!("truncated body, expected {expected} bytes for {rows}x{cols}")));
    }
    if bytes.len() > expected {
        return Err(fail(expected, "trailing bytes after body".into()));
    }
    let data: Vec<f64> = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(fail(HEADER + 4 * i, "non-finite feature value".into()));
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn write_labels(path: &Path, labels: &[usize], class_names: &[String]) -> Result<()> {
    let mut text = String::new();
    for &l in labels {
        text.push_str(&class_names[l]);
        text.push('\n');
    }
    write(path, text.as_bytes())
}

pub fn read_labels(path: &Path, class_index: &HashMap<String, usize>, what: &str) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut labels = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let name = line.trim();
        if !name.is_empty() {
            let idx = class_index.get(name).ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                offset: offset as u64,
                msg: format!("{what}: unknown class {name:?}"),
            })?;
            labels.push(*idx);
        }
        offset += line.len();
    }
    Ok(labels)
}

fn read_mapping(path: &Path) -> Result<Vec<String>> {
    let text = read_text(path)?;
    let mut entries: Vec<Option<String>> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            let parse_err = |msg: String| Error::Parse {
                path: path.display().to_string(),
                offset: offset as u64,
                msg,
            };
            let (idx, name) = trimmed
                .split_once(char::is_whitespace)
                .ok_or_else(|| parse_err(format!("expected \"<index> <name>\", got {trimmed:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(format!("bad class index {idx:?}")))?;
            if idx >= entries.len() {
                entries.resize(idx + 1, None);
            }
            if entries[idx].is_some() {
                return Err(Error::Validation(format!(
                    "{}: duplicate class index {idx}",
                    path.display()
                )));
            }
            entries[idx] = Some(name.trim().to_string());
        }
        offset += line.len();
    }
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            e.ok_or_else(|| Error::Validation(format!("{}: class index {i} missing", path.display())))
        })
        .collect()
}

pub fn write_dataset(root: &Path, ds: &SyntheticDataset) -> Result<()> {
    let mapping: String = ds
        .class_names
        .iter()
        .enumerate()
        .map(|(i, n)| format!("{i} {n}\n"))
        .collect();
    write(&root.join("mapping.txt"), mapping.as_bytes())?;
    for split in [Split::Train, Split::Test] {
        let ids: String = ds.split(split).iter().map(|v| format!("{}\n", v.id)).collect();
        write(&root.join("splits").join(format!("{}.txt", split.name())), ids.as_bytes())?;
    }
    for v in &ds.videos {
        write_features(&root.join("features").join(format!("{}.bin", v.id)), &v.features)?;
        write_labels(&root.join("groundTruth").join(format!("{}.txt", v.id)), &v.labels, &ds.class_names)?;
    }
    let meta = Meta {
        feature_dim: ds.feature_dim,
        noise_std: ds.noise_std,
        blend_width: ds.blend_width,
        seed: ds.seed,
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    write(&root.join("dataset.toml"), text.as_bytes())?;
    if let Some(p) = &ds.prototypes {
        write_features(&root.join("prototypes.bin"), p)?;
    }
    Ok(())
}

pub fn read_dataset(root: &Path) -> Result<SyntheticDataset> {
    let class_names = read_mapping(&root.join("mapping.txt"))?;
    let class_index: HashMap<String, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    if class_index.len() != class_names.len() {
        return Err(Error::Validation("mapping.txt repeats a class name".into()));
    }

    let mut videos = Vec::new();
    let mut feature_dim = None;
    for split in [Split::Train, Split::Test] {
        let list = root.join("splits").join(format!("{}.txt", split.name()));
        if !list.exists() {
            continue;
        }
        for id in read_text(&list)?.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let what = format!("video {id}");
            let features = read_features(&root.join("features").join(format!("{id}.bin")), &what)?;
            let labels = read_labels(&root.join("groundTruth").join(format!("{id}.txt")), &class_index, &what)?;
            if labels.len() != features.rows() {
                return Err(Error::Validation(format!(
                    "{what}: {} labels for {} feature frames",
                    labels.len(),
                    features.rows()
                )));
            }
            if labels.is_empty() {
                return Err(Error::Validation(format!("{what}: empty video")));
            }
            match feature_dim {
                None => feature_dim = Some(features.cols()),
                Some(d) if d != features.cols() => {
                    return Err(Error::Validation(format!(
                        "{what}: feature dimension {} differs from {d}",
                        features.cols()
                    )))
                }
                _ => {}
            }
            videos.push(Video {
                id: id.to_string(),
                features,
                labels,
                split,
            });
        }
    }
    let feature_dim = feature_dim
        .ok_or_else(|| Error::Validation(format!("{}: no videos listed under splits/", root.display())))?;

    let meta_path = root.join("dataset.toml");
    let meta: Option<Meta> = if meta_path.exists() {
        let text = read_text(&meta_path)?;
        Some(toml::from_str(&text).map_err(|e| Error::Parse {
            path: meta_path.display().to_string(),
            offset: e.span().map_or(0, |s| s.start as u64),
            msg: e.message().to_string(),
        })?)
    } else {
        None
    };
    let proto_path = root.join("prototypes.bin");
    let prototypes = if proto_path.exists() {
        Some(read_features(&proto_path, "prototypes")?)
    } else {
        None
    };
    Ok(SyntheticDataset {
        class_names,
        feature_dim,
        prototypes,
        noise_std: meta.as_ref().map_or(0.0, |m| m.noise_std),
        blend_width: meta.as_ref().map_or(0, |m| m.blend_width),
        seed: meta.as_ref().map_or(0, |m| m.seed),
        videos,
    })
}
