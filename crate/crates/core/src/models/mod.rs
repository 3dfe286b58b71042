//! Classifiers: gated residual blocks, the attention encoder with optional
//! GRN insertion, MLP variants and a KNN baseline, plus the checkpoint format.

mod attention;
mod checkpoint;
mod grn;
mod knn;
mod mlp;
mod transformer;

pub use attention::{multi_head_attention, MhaParams};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ParamIndexEntry};
pub use grn::{glu, grn_forward, GluParams, GrnParams};
pub use knn::{KnnConfig, KnnModel};
pub use mlp::{MlpConfig, MlpNet};
pub use transformer::{positional_encoding, GrnPlacement, TransformerConfig, TransformerNet};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, SeededRng};
use crate::signal::PULSE_LEN;
use crate::tensor::{glorot_init, Tape, Tensor, Var};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered trainable tensors of one model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t.with_grad());
        ParamId(self.tensors.len() - 1)
    }

    pub fn glorot(&mut self, name: impl Into<String>, fan_out: usize, fan_in: usize, rng: &mut SeededRng) -> Result<ParamId> {
        Ok(self.add(name, glorot_init([fan_out, fan_in], rng)?))
    }

    pub fn zeros(&mut self, name: impl Into<String>, n: usize) -> ParamId {
        self.add(name, Tensor::zeros(&[n]))
    }

    pub fn ones(&mut self, name: impl Into<String>, n: usize) -> ParamId {
        self.add(name, Tensor::new(&[n], vec![1.0; n]).expect("non-empty"))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Copies every parameter onto `tape` as a leaf, in store order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t)).collect()
    }

    /// Replaces each tensor's gradient with the one computed on `tape`.
    pub fn collect_grads(&mut self, tape: &Tape, vars: &[Var]) {
        for (t, &v) in self.tensors.iter_mut().zip(vars) {
            t.zero_grad();
            tape.accumulate_grad(v, t);
        }
    }
}

/// Forward-pass state: the tape, the bound parameters, mode and dropout RNG.
pub struct Ctx<'a> {
    pub tape: &'a mut Tape,
    pub vars: &'a [Var],
    pub training: bool,
    pub rng: &'a mut SeededRng,
}

impl Ctx<'_> {
    pub fn p(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        self.tape.dropout(x, p, self.training, self.rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Transformer,
    GrnTransformer,
    Mlp,
    GrnMlp,
    Knn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Transformer,
        ModelKind::GrnTransformer,
        ModelKind::Mlp,
        ModelKind::GrnMlp,
        ModelKind::Knn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Transformer => "transformer",
            ModelKind::GrnTransformer => "grn-transformer",
            ModelKind::Mlp => "mlp",
            ModelKind::GrnMlp => "grn-mlp",
            ModelKind::Knn => "knn",
        }
    }

    pub fn supported() -> String {
        Self::ALL.map(Self::name).join(", ")
    }

    pub fn is_neural(self) -> bool {
        self != ModelKind::Knn
    }

    pub fn default_lr(self) -> f64 {
        match self {
            ModelKind::Transformer | ModelKind::GrnTransformer => 6e-4,
            _ => 1e-4,
        }
    }

    pub fn default_config(self) -> ModelConfig {
        match self {
            ModelKind::Transformer => ModelConfig::Transformer(TransformerConfig::default()),
            ModelKind::GrnTransformer => ModelConfig::Transformer(TransformerConfig {
                grn_blocks: 2,
                ..Default::default()
            }),
            ModelKind::Mlp => ModelConfig::Mlp(MlpConfig::default()),
            ModelKind::GrnMlp => ModelConfig::Mlp(MlpConfig {
                grn_blocks: 2,
                ..Default::default()
            }),
            ModelKind::Knn => ModelConfig::Knn(KnnConfig::default()),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::UnsupportedModel {
                name: s.to_string(),
                supported: Self::supported(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelConfig {
    Transformer(TransformerConfig),
    Mlp(MlpConfig),
    Knn(KnnConfig),
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Transformer(c) => c.validate(),
            ModelConfig::Mlp(c) => c.validate(),
            ModelConfig::Knn(c) => c.validate(),
        }
    }
}

/// A gradient-trained classifier producing one logit per pulse.
#[derive(Debug, Clone, PartialEq)]
pub enum NeuralNet {
    Transformer(TransformerNet),
    Mlp(MlpNet),
}

impl NeuralNet {
    /// Builds and initializes from `config`; `seed` drives the weights.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        match config {
            ModelConfig::Transformer(c) => Ok(NeuralNet::Transformer(TransformerNet::new(c.clone(), seed)?)),
            ModelConfig::Mlp(c) => Ok(NeuralNet::Mlp(MlpNet::new(c.clone(), seed)?)),
            ModelConfig::Knn(_) => Err(Error::Config("knn is not a gradient-trained model".into())),
        }
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            NeuralNet::Transformer(n) => ModelConfig::Transformer(n.config.clone()),
            NeuralNet::Mlp(n) => ModelConfig::Mlp(n.config.clone()),
        }
    }

    pub fn params(&self) -> &ParamStore {
        match self {
            NeuralNet::Transformer(n) => &n.params,
            NeuralNet::Mlp(n) => &n.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            NeuralNet::Transformer(n) => &mut n.params,
            NeuralNet::Mlp(n) => &mut n.params,
        }
    }

    /// Logits `[batch, 1]` for `x` holding `batch` pulses row-major.
    pub fn forward(&self, ctx: &mut Ctx<'_>, x: &[f64], batch: usize) -> Result<Var> {
        let input = ctx.tape.constant(&[batch, PULSE_LEN], x.to_vec())?;
        match self {
            NeuralNet::Transformer(n) => n.forward(ctx, input),
            NeuralNet::Mlp(n) => n.forward(ctx, input),
        }
    }

    /// Inference-mode probabilities, evaluated in chunks.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        const CHUNK: usize = 256;
        let mut rng = seeded(0);
        let mut out = Vec::with_capacity(x.len() / PULSE_LEN);
        for chunk in x.chunks(CHUNK * PULSE_LEN) {
            let mut tape = Tape::new();
            let vars = self.params().bind(&mut tape);
            let mut ctx = Ctx {
                tape: &mut tape,
                vars: &vars,
                training: false,
                rng: &mut rng,
            };
            let z = self.forward(&mut ctx, chunk, chunk.len() / PULSE_LEN)?;
            out.extend(tape.value(z).iter().map(|&v| crate::tensor::sigmoid(v)));
        }
        Ok(out)
    }
}

/// Any classifier: predicts artifact probabilities (vote fractions for KNN).
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Neural(NeuralNet),
    Knn(KnnModel),
}

impl Model {
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Neural(n) => n.predict_proba(x),
            Model::Knn(k) => k.predict_proba(x),
        }
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Neural(n) => n.config(),
            Model::Knn(k) => ModelConfig::Knn(k.config),
        }
    }
}

/// Per-purpose seed so optional blocks do not shift the base model's draws.
fn stream(seed: u64, name: &str) -> SeededRng {
    seeded(derive_seed(seed, name))
}
