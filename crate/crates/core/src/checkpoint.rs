//! Binary checkpoint files.
//!
//! ```text
//! "DSCK"                      magic
//! u32 LE                      format version (1)
//! u32 LE, bytes               TOML header: model config, training state scalars
//! u32 LE                      block count
//! per block:
//!   u32 LE, bytes             UTF-8 name
//!   u32 LE, u32 LE            rows, cols
//!   rows·cols f64 LE          row-major values
//! ```
//!
//! Parameter blocks carry their model names. When training state is present,
//! the optimizer moments follow as `adam.m.<name>` and `adam.v.<name>`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParamStore, SegmentationModel};
use crate::numerics::Matrix;

const MAGIC: &[u8; 4] = b"DSCK";
const VERSION: u32 = 1;

/// Optimizer and loop position needed to continue a run exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Epochs completed.
    pub epoch: usize,
    /// Optimizer steps taken.
    pub iteration: u64,
    pub seed: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub params: ParamStore,
    pub state: Option<TrainState>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    train: Option<StateHeader>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateHeader {
    epoch: usize,
    iteration: u64,
    seed: u64,
}

impl Checkpoint {
    pub fn from_model(model: &SegmentationModel, state: Option<TrainState>) -> Self {
        Self {
            model: model.config().clone(),
            params: model.params().clone(),
            state,
        }
    }

    pub fn into_model(self) -> Result<SegmentationModel> {
        SegmentationModel::from_params(self.model, self.params)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.model.clone(),
            train: self.state.as_ref().map(|s| StateHeader {
                epoch: s.epoch,
                iteration: s.iteration,
                seed: s.seed,
            }),
        };
        let text = toml::to_string(&header).map_err(|e| Error::Config(e.to_string()))?;

        let mut blocks: Vec<(String, &Matrix)> = self
            .params
            .names()
            .iter()
            .cloned()
            .zip(self.params.values())
            .collect();
        if let Some(s) = &self.state {
            for (name, m) in self.params.names().iter().zip(&s.m) {
                blocks.push((format!("adam.m.{name}"), m));
            }
            for (name, v) in self.params.names().iter().zip(&s.v) {
                blocks.push((format!("adam.v.{name}"), v));
            }
        }

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for (name, m) in blocks {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for &v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(4)? != MAGIC {
            return Err(r.fail(0, "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.fail(4, &format!("unsupported version {version}")));
        }
        let header_len = r.u32()? as usize;
        let header_at = r.pos;
        let text = std::str::from_utf8(r.take(header_len)?)
            .map_err(|_| r.fail(header_at, "header is not UTF-8"))?;
        let header: Header = toml::from_str(text).map_err(|e| {
            r.fail(header_at + e.span().map_or(0, |s| s.start), e.message())
        })?;

        let count = r.u32()? as usize;
        let mut blocks = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| r.fail(at, "block name is not UTF-8"))?
                .to_string();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let data: Vec<f64> = r
                .take(8 * rows * cols)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            blocks.push((name, Matrix::from_vec(rows, cols, data)?));
        }
        if r.pos != bytes.len() {
            return Err(r.fail(r.pos, "trailing bytes"));
        }

        let mut params = ParamStore::default();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (name, value) in blocks {
            if name.starts_with("adam.m.") {
                m.push(value);
            } else if name.starts_with("adam.v.") {
                v.push(value);
            } else {
                params.push(name, value);
            }
        }
        let state = match header.train {
            Some(h) => {
                if m.len() != params.len() || v.len() != params.len() {
                    return Err(Error::Validation(format!(
                        "{path}: optimizer state has {}/{} blocks for {} parameters",
                        m.len(),
                        v.len(),
                        params.len()
                    )));
                }
                Some(TrainState {
                    epoch: h.epoch,
                    iteration: h.iteration,
                    seed: h.seed,
                    m,
                    v,
                })
            }
            None => None,
        };
        let ckpt = Checkpoint {
            model: header.model,
            params,
            state,
        };
        // shape and name validation happens here
        SegmentationModel::from_params(ckpt.model.clone(), ckpt.params.clone())?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn fail(&self, offset: usize, msg: &str) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            offset: offset as u64,
            msg: msg.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(self.bytes.len(), "truncated checkpoint"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
