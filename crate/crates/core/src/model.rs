//! Dilated temporal-convolution encoder and step-conditioned denoising decoder.
//!
//! Both networks are stacks of residual blocks
//! `h ← h + W_out · relu(conv_dilated(h) + b) + b_out` with dilation `2^l` at
//! layer `l`. The encoder turns input features into conditioning features and
//! an auxiliary prediction; the decoder maps a noisy label sequence, its
//! diffusion step and the (masked) conditioning features to frame-wise class
//! probabilities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::Denoiser;
use crate::error::{Error, Result};
use crate::numerics::{linear, ConvShape, Graph, Matrix, Var};
use crate::schedule::{DiffusionState, ProbSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub layers: usize,
    pub width: usize,
    pub kernel: usize,
    /// 1-based layer indices whose outputs are concatenated into the
    /// conditioning features. Empty means the last layer only.
    pub tap_layers: Vec<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 6,
            width: 16,
            kernel: 3,
            tap_layers: Vec::new(),
        }
    }
}

impl EncoderConfig {
    pub fn taps(&self) -> Vec<usize> {
        if self.tap_layers.is_empty() {
            vec![self.layers]
        } else {
            self.tap_layers.clone()
        }
    }

    /// Width of the conditioning features.
    pub fn cond_dim(&self) -> usize {
        self.width * self.taps().len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub layers: usize,
    pub width: usize,
    pub kernel: usize,
    pub step_embed_dim: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            layers: 5,
            width: 8,
            kernel: 3,
            step_embed_dim: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub num_classes: usize,
    /// Largest diffusion step the decoder is conditioned on.
    pub total_steps: usize,
    pub init_seed: u64,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 16,
            num_classes: 6,
            total_steps: 1000,
            init_seed: 0,
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Full-size settings: 10 encoder layers, an 8-layer decoder with 30% of
    /// the encoder's feature maps, encoder taps 5/7/9 and a 512-d step
    /// embedding.
    pub fn full_scale(input_dim: usize, num_classes: usize, encoder_width: usize) -> Self {
        Self {
            input_dim,
            num_classes,
            total_steps: 1000,
            init_seed: 0,
            encoder: EncoderConfig {
                layers: 10,
                width: encoder_width,
                kernel: 3,
                tap_layers: vec![5, 7, 9],
            },
            decoder: DecoderConfig {
                layers: 8,
                width: ((encoder_width as f64) * 0.3).round().max(1.0) as usize,
                kernel: 3,
                step_embed_dim: 512,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        let d = &self.decoder;
        if self.input_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config("input_dim and num_classes must be >= 1".into()));
        }
        if e.layers == 0 || d.layers == 0 || e.width == 0 || d.width == 0 {
            return Err(Error::Config("layer counts and widths must be >= 1".into()));
        }
        if let Some(t) = e.taps().iter().find(|&&t| t == 0 || t > e.layers) {
            return Err(Error::Config(format!(
                "encoder tap layer {t} outside 1..={}",
                e.layers
            )));
        }
        if d.step_embed_dim == 0 || d.step_embed_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "step_embed_dim must be even and positive, got {}",
                d.step_embed_dim
            )));
        }
        ConvShape::new(e.kernel, 1)?;
        ConvShape::new(d.kernel, 1)?;
        Ok(())
    }
}

/// Sinusoidal embedding of a diffusion step: `dim/2` sines followed by
/// `dim/2` cosines over geometrically spaced frequencies.
pub fn step_embedding(s: usize, dim: usize, total_steps: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Config(format!("step embedding dim must be even, got {dim}")));
    }
    if s > total_steps {
        return Err(Error::Config(format!("step {s} exceeds {total_steps}")));
    }
    let half = dim / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|i| (-(10_000f64.ln()) * i as f64 / half as f64).exp())
        .collect();
    let mut out: Vec<f64> = freqs.iter().map(|f| (s as f64 * f).sin()).collect();
    out.extend(freqs.iter().map(|f| (s as f64 * f).cos()));
    Ok(out)
}

/// Ordered, named parameter blocks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn named(&self) -> Vec<(String, Matrix)> {
        self.names.iter().cloned().zip(self.values.iter().cloned()).collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }
}

#[derive(Clone, Debug)]
struct Block {
    conv_w: usize,
    conv_b: usize,
    out_w: usize,
    out_b: usize,
    shape: ConvShape,
}

#[derive(Clone, Debug)]
struct EncoderLayout {
    in_w: usize,
    in_b: usize,
    blocks: Vec<Block>,
    head_w: usize,
    head_b: usize,
}

#[derive(Clone, Debug)]
struct DecoderLayout {
    in_w: usize,
    in_b: usize,
    step_w: usize,
    step_b: usize,
    blocks: Vec<Block>,
    head_w: usize,
    head_b: usize,
}

/// Encoder and decoder parameters with their configuration.
#[derive(Clone, Debug)]
pub struct SegmentationModel {
    config: ModelConfig,
    params: ParamStore,
    encoder: EncoderLayout,
    decoder: DecoderLayout,
}

struct Init<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Init<'_> {
    fn weight(&mut self, name: String, fan_in: usize, rows: usize, cols: usize) -> usize {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let m = Matrix::uniform(rows, cols, bound, &mut self.rng);
        self.store.push(name, m)
    }

    fn bias(&mut self, name: String, cols: usize) -> usize {
        self.store.push(name, Matrix::zeros(1, cols))
    }

    fn blocks(&mut self, prefix: &str, layers: usize, width: usize, kernel: usize) -> Result<Vec<Block>> {
        (0..layers)
            .map(|l| {
                Ok(Block {
                    conv_w: self.weight(format!("{prefix}.l{l}.conv.w"), kernel * width, kernel * width, width),
                    conv_b: self.bias(format!("{prefix}.l{l}.conv.b"), width),
                    out_w: self.weight(format!("{prefix}.l{l}.out.w"), width, width, width),
                    out_b: self.bias(format!("{prefix}.l{l}.out.b"), width),
                    shape: ConvShape::new(kernel, 1 << l)?,
                })
            })
            .collect()
    }
}

fn residual_stack(g: &mut Graph, vars: &[Var], blocks: &[Block], mut h: Var, taps: &mut Vec<Var>, tap_at: &[usize]) -> Result<Var> {
    for (l, b) in blocks.iter().enumerate() {
        let c = g.conv1d(h, vars[b.conv_w], b.shape)?;
        let c = g.add_row(c, vars[b.conv_b])?;
        let a = g.relu(c);
        let o = linear(g, a, vars[b.out_w], vars[b.out_b])?;
        h = g.add(h, o)?;
        if tap_at.contains(&(l + 1)) {
            taps.push(h);
        }
    }
    Ok(h)
}

impl SegmentationModel {
    /// Fan-in-scaled uniform weights and zero biases, seeded by
    /// `config.init_seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::default();
        let mut init = Init {
            store: &mut params,
            rng: ChaCha8Rng::seed_from_u64(config.init_seed),
        };
        let (d, c) = (config.input_dim, config.num_classes);
        let ec = &config.encoder;
        let dc = &config.decoder;

        let encoder = EncoderLayout {
            in_w: init.weight("enc.in.w".into(), d, d, ec.width),
            in_b: init.bias("enc.in.b".into(), ec.width),
            blocks: init.blocks("enc", ec.layers, ec.width, ec.kernel)?,
            head_w: init.weight("enc.head.w".into(), ec.width, ec.width, c),
            head_b: init.bias("enc.head.b".into(), c),
        };
        let dec_in = ec.cond_dim() + c;
        let decoder = DecoderLayout {
            in_w: init.weight("dec.in.w".into(), dec_in, dec_in, dc.width),
            in_b: init.bias("dec.in.b".into(), dc.width),
            step_w: init.weight("dec.step.w".into(), dc.step_embed_dim, dc.step_embed_dim, dc.width),
            step_b: init.bias("dec.step.b".into(), dc.width),
            blocks: init.blocks("dec", dc.layers, dc.width, dc.kernel)?,
            head_w: init.weight("dec.head.w".into(), dc.width, dc.width, c),
            head_b: init.bias("dec.head.b".into(), c),
        };
        Ok(Self {
            config,
            params,
            encoder,
            decoder,
        })
    }

    /// Rebuilds a model from stored parameters; names and shapes must match
    /// what `config` produces.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut model = Self::new(config)?;
        if model.params.names() != params.names() {
            return Err(Error::Validation(
                "parameter block names do not match the model configuration".into(),
            ));
        }
        for ((name, want), got) in model.params.names.iter().zip(&model.params.values).zip(params.values()) {
            if want.shape() != got.shape() {
                return Err(Error::Validation(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
            got.ensure_finite(name)?;
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Whether parameter block `index` belongs to the encoder.
    pub fn is_encoder_param(&self, index: usize) -> bool {
        self.params.names[index].starts_with("enc.")
    }

    /// Inserts every parameter into `g`, trainable or constant.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .values
            .iter()
            .map(|m| if trainable { g.param(m.clone()) } else { g.constant(m.clone()) })
            .collect()
    }

    /// Encoder on the graph: returns `(conditioning features, auxiliary
    /// probabilities)`.
    pub fn encode_graph(&self, g: &mut Graph, vars: &[Var], features: Var) -> Result<(Var, Var)> {
        let (_, d) = g.shape(features);
        if d != self.config.input_dim {
            return Err(Error::Shape {
                op: "encode",
                lhs: g.shape(features),
                rhs: (0, self.config.input_dim),
            });
        }
        let e = &self.encoder;
        let h = linear(g, features, vars[e.in_w], vars[e.in_b])?;
        let tap_at = self.config.encoder.taps();
        let mut taps = Vec::with_capacity(tap_at.len());
        let last = residual_stack(g, vars, &e.blocks, h, &mut taps, &tap_at)?;
        // keep the configured tap order, not layer order
        let mut ordered = Vec::with_capacity(tap_at.len());
        let mut sorted = tap_at.clone();
        sorted.sort_unstable();
        sorted.dedup();
        for t in &tap_at {
            ordered.push(taps[sorted.iter().position(|s| s == t).unwrap()]);
        }
        let cond = if ordered.len() == 1 { ordered[0] } else { g.concat_cols(&ordered)? };
        let logits = linear(g, last, vars[e.head_w], vars[e.head_b])?;
        let aux = g.softmax_rows(logits);
        Ok((cond, aux))
    }

    /// Decoder on the graph. `cond` is expected to be masked already.
    pub fn decode_graph(&self, g: &mut Graph, vars: &[Var], y_s: Var, s: usize, cond: Var) -> Result<Var> {
        let c = self.config.num_classes;
        let (len, yc) = g.shape(y_s);
        let (cl, cd) = g.shape(cond);
        if yc != c || cl != len || cd != self.config.encoder.cond_dim() {
            return Err(Error::Shape {
                op: "decode",
                lhs: (len, yc),
                rhs: (cl, cd),
            });
        }
        let dl = &self.decoder;
        let dc = &self.config.decoder;
        let input = g.concat_cols(&[cond, y_s])?;
        let h = linear(g, input, vars[dl.in_w], vars[dl.in_b])?;
        let emb = step_embedding(s, dc.step_embed_dim, self.config.total_steps)?;
        let emb = g.constant(Matrix::from_vec(1, emb.len(), emb)?);
        let step = linear(g, emb, vars[dl.step_w], vars[dl.step_b])?;
        let h = g.add_row(h, step)?;
        let last = residual_stack(g, vars, &dl.blocks, h, &mut Vec::new(), &[])?;
        let logits = linear(g, last, vars[dl.head_w], vars[dl.head_b])?;
        Ok(g.softmax_rows(logits))
    }

    /// Gradient-free encoder pass.
    pub fn encode(&self, features: &Matrix) -> Result<(Matrix, ProbSequence)> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let f = g.constant(features.clone());
        let (cond, aux) = self.encode_graph(&mut g, &vars, f)?;
        Ok((g.value(cond).clone(), g.value(aux).clone()))
    }

    /// Gradient-free decoder pass.
    pub fn decode(&self, y_s: &DiffusionState, s: usize, cond: &Matrix) -> Result<ProbSequence> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let y = g.constant(y_s.clone());
        let c = g.constant(cond.clone());
        let p = self.decode_graph(&mut g, &vars, y, s, c)?;
        Ok(g.value(p).clone())
    }

    /// Frames on either side that can influence one output frame of an
    /// `n`-layer stack: `2^n − 1` for kernel 3.
    pub fn stack_radius(layers: usize, kernel: usize) -> usize {
        (0..layers).map(|l| (kernel - 1) / 2 * (1 << l)).sum()
    }
}

impl Denoiser for SegmentationModel {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn denoise(&self, y_s: &DiffusionState, s: usize, cond: &Matrix) -> Result<ProbSequence> {
        self.decode(y_s, s, cond)
    }
}
