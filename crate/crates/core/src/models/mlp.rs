use serde::{Deserialize, Serialize};

use super::grn::{grn_forward, GrnParams};
use super::{stream, Ctx, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::signal::PULSE_LEN;
use crate::tensor::Var;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    /// Stacked GRN blocks after a linear input adapter; 0 disables.
    pub grn_blocks: usize,
    pub grn_width: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![500, 500, 500],
            dropout: 0.3,
            grn_blocks: 0,
            grn_width: 128,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!("mlp hidden widths must be non-empty and positive, got {:?}", self.hidden)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.grn_blocks > 0 && self.grn_width < 2 {
            return Err(Error::Config(format!("grn_width must be at least 2, got {}", self.grn_width)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    pub config: MlpConfig,
    pub params: ParamStore,
    adapter: Option<(ParamId, ParamId)>,
    grns: Vec<GrnParams>,
    layers: Vec<(ParamId, ParamId)>,
    head: (ParamId, ParamId),
}

impl MlpNet {
    pub fn new(config: MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, "mlp");
        let mut grn_rng = stream(seed, "grn");
        let mut ps = ParamStore::new();
        let mut width = PULSE_LEN;
        let mut adapter = None;
        let mut grns = Vec::new();
        if config.grn_blocks > 0 {
            let g = config.grn_width;
            adapter = Some((ps.glorot("adapter.w", g, width, &mut grn_rng)?, ps.zeros("adapter.b", g)));
            for k in 0..config.grn_blocks {
                grns.push(GrnParams::init(&mut ps, &format!("grn{k}"), g, None, &mut grn_rng)?);
            }
            width = g;
        }
        let mut layers = Vec::with_capacity(config.hidden.len());
        for (l, &h) in config.hidden.iter().enumerate() {
            layers.push((ps.glorot(format!("fc{l}.w"), h, width, &mut rng)?, ps.zeros(format!("fc{l}.b"), h)));
            width = h;
        }
        let head = (ps.glorot("head.w", 1, width, &mut rng)?, ps.zeros("head.b", 1));
        Ok(Self {
            config,
            params: ps,
            adapter,
            grns,
            layers,
            head,
        })
    }

    /// Logits `[batch, 1]` from `x: [batch, 256]`.
    pub fn forward(&self, ctx: &mut Ctx<'_>, x: Var) -> Result<Var> {
        let p = self.config.dropout;
        let mut h = x;
        if let Some((w, b)) = self.adapter {
            h = ctx.tape.linear(h, ctx.p(w), Some(ctx.p(b)))?;
            for g in &self.grns {
                h = grn_forward(ctx, g, h, None, p)?;
            }
        }
        for &(w, b) in &self.layers {
            h = ctx.tape.linear(h, ctx.p(w), Some(ctx.p(b)))?;
            h = ctx.tape.relu(h);
            h = ctx.dropout(h, p)?;
        }
        ctx.tape.linear(h, ctx.p(self.head.0), Some(ctx.p(self.head.1)))
    }
}
