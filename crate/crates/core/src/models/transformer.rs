use serde::{Deserialize, Serialize};

use super::attention::{multi_head_attention, MhaParams};
use super::grn::{grn_forward, GrnParams, LAYER_NORM_EPS};
use super::{stream, Ctx, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::signal::PULSE_LEN;
use crate::tensor::Var;

/// Where the GRN blocks sit relative to the encoder stack.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrnPlacement {
    /// Token-wise, after embedding and positional encoding.
    #[default]
    BeforeEncoder,
    /// After the final layer norm, before pooling.
    AfterEncoder,
    /// One GRN per encoder layer in place of its feed-forward sublayer
    /// (`grn_blocks` only switches this on).
    ReplaceFeedForward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub ff_hidden: usize,
    pub dropout: f64,
    pub token_len: usize,
    pub n_tokens: usize,
    pub positional_encoding: bool,
    pub grn_blocks: usize,
    pub grn_placement: GrnPlacement,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            n_layers: 4,
            d_model: 128,
            n_heads: 4,
            ff_hidden: 128,
            dropout: 0.25,
            token_len: 16,
            n_tokens: 16,
            positional_encoding: true,
            grn_blocks: 0,
            grn_placement: GrnPlacement::BeforeEncoder,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} must be divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.d_model < 2 || self.ff_hidden == 0 || self.n_layers == 0 {
            return bad("transformer needs d_model >= 2, ff_hidden >= 1 and n_layers >= 1".into());
        }
        if self.token_len * self.n_tokens != PULSE_LEN {
            return bad(format!(
                "token_len {} x n_tokens {} must equal {PULSE_LEN}",
                self.token_len, self.n_tokens
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.grn_blocks > 8 {
            return bad(format!("grn_blocks must be at most 8, got {}", self.grn_blocks));
        }
        Ok(())
    }

    fn replaces_ff(&self) -> bool {
        self.grn_blocks > 0 && self.grn_placement == GrnPlacement::ReplaceFeedForward
    }
}

/// Sinusoidal table `[n_tokens, d]`: `sin(p / 10000^(2i/d))` on even
/// columns, the matching cosine on odd ones.
pub fn positional_encoding(n_tokens: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; n_tokens * d];
    for pos in 0..n_tokens {
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let a = pos as f64 / rate;
            pe[pos * d + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    pe
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderLayer {
    ln1: (ParamId, ParamId),
    attn: MhaParams,
    ln2: (ParamId, ParamId),
    ff: Option<(ParamId, ParamId, ParamId, ParamId)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerNet {
    pub config: TransformerConfig,
    pub params: ParamStore,
    embed: (ParamId, ParamId),
    layers: Vec<EncoderLayer>,
    final_ln: (ParamId, ParamId),
    head: (ParamId, ParamId),
    grns: Vec<GrnParams>,
}

impl TransformerNet {
    /// Base weights come from one seed stream and GRN weights from another,
    /// so the GRN variant shares every base weight with the plain model.
    pub fn new(config: TransformerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut rng = stream(seed, "transformer");
        let mut ps = ParamStore::new();
        let embed = (
            ps.glorot("embed.w", d, config.token_len, &mut rng)?,
            ps.zeros("embed.b", d),
        );
        let mut layers = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let ln1 = (ps.ones(format!("layer{l}.ln1.gain"), d), ps.zeros(format!("layer{l}.ln1.bias"), d));
            let attn = MhaParams::init(&mut ps, &format!("layer{l}.attn"), d, config.n_heads, &mut rng)?;
            let ln2 = (ps.ones(format!("layer{l}.ln2.gain"), d), ps.zeros(format!("layer{l}.ln2.bias"), d));
            let ff = if config.replaces_ff() {
                None
            } else {
                Some((
                    ps.glorot(format!("layer{l}.ff1.w"), config.ff_hidden, d, &mut rng)?,
                    ps.zeros(format!("layer{l}.ff1.b"), config.ff_hidden),
                    ps.glorot(format!("layer{l}.ff2.w"), d, config.ff_hidden, &mut rng)?,
                    ps.zeros(format!("layer{l}.ff2.b"), d),
                ))
            };
            layers.push(EncoderLayer { ln1, attn, ln2, ff });
        }
        let final_ln = (ps.ones("final_ln.gain", d), ps.zeros("final_ln.bias", d));
        let head = (ps.glorot("head.w", 1, d, &mut rng)?, ps.zeros("head.b", 1));

        let mut grn_rng = stream(seed, "grn");
        let count = if config.replaces_ff() { config.n_layers } else { config.grn_blocks };
        let grns = (0..count)
            .map(|g| GrnParams::init(&mut ps, &format!("grn{g}"), d, None, &mut grn_rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            params: ps,
            embed,
            layers,
            final_ln,
            head,
            grns,
        })
    }

    pub fn grn_params(&self) -> &[GrnParams] {
        &self.grns
    }

    /// The same network with the GRN blocks removed; base weights are kept.
    pub fn without_grn(&self) -> Result<Self> {
        if self.config.replaces_ff() {
            return Err(Error::Config("GRN blocks replace the feed-forward sublayers and cannot be removed".into()));
        }
        let base = self.params.len() - self.grns.iter().map(|_| grn_param_count()).sum::<usize>();
        let mut params = ParamStore::new();
        for id in self.params.ids().take(base) {
            params.add(self.params.name(id), self.params.get(id).clone());
        }
        Ok(Self {
            config: TransformerConfig {
                grn_blocks: 0,
                ..self.config.clone()
            },
            params,
            grns: Vec::new(),
            ..self.clone()
        })
    }

    /// Logits `[batch, 1]` from `x: [batch, 256]`.
    pub fn forward(&self, ctx: &mut Ctx<'_>, x: Var) -> Result<Var> {
        let c = &self.config;
        let rows = ctx.tape.value(x).len() / PULSE_LEN;
        let t = c.n_tokens;
        let tokens = ctx.tape.reshape(x, &[rows * t, c.token_len])?;
        let mut h = ctx.tape.linear(tokens, ctx.p(self.embed.0), Some(ctx.p(self.embed.1)))?;
        if c.positional_encoding {
            let pe = ctx.tape.constant(&[t, c.d_model], positional_encoding(t, c.d_model))?;
            h = ctx.tape.add_tiled(h, pe)?;
        }
        h = ctx.dropout(h, c.dropout)?;
        if c.grn_placement == GrnPlacement::BeforeEncoder {
            for g in &self.grns {
                h = grn_forward(ctx, g, h, None, c.dropout)?;
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let n = ctx.tape.layer_norm(h, ctx.p(layer.ln1.0), ctx.p(layer.ln1.1), LAYER_NORM_EPS)?;
            let a = multi_head_attention(ctx, &layer.attn, n, t)?;
            let a = ctx.dropout(a, c.dropout)?;
            h = ctx.tape.add(h, a)?;
            match layer.ff {
                Some((w1, b1, w2, b2)) => {
                    let n = ctx.tape.layer_norm(h, ctx.p(layer.ln2.0), ctx.p(layer.ln2.1), LAYER_NORM_EPS)?;
                    let f = ctx.tape.linear(n, ctx.p(w1), Some(ctx.p(b1)))?;
                    let f = ctx.tape.relu(f);
                    let f = ctx.tape.linear(f, ctx.p(w2), Some(ctx.p(b2)))?;
                    let f = ctx.dropout(f, c.dropout)?;
                    h = ctx.tape.add(h, f)?;
                }
                None => h = grn_forward(ctx, &self.grns[l], h, None, c.dropout)?,
            }
        }
        h = ctx.tape.layer_norm(h, ctx.p(self.final_ln.0), ctx.p(self.final_ln.1), LAYER_NORM_EPS)?;
        if c.grn_placement == GrnPlacement::AfterEncoder {
            for g in &self.grns {
                h = grn_forward(ctx, g, h, None, c.dropout)?;
            }
        }
        let pooled = ctx.tape.mean_groups(h, t)?;
        ctx.tape.linear(pooled, ctx.p(self.head.0), Some(ctx.p(self.head.1)))
    }
}

fn grn_param_count() -> usize {
    // w1 b1 w2 b2, four GLU tensors, layer-norm gain and bias
    10
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tensor::Tape;
    use rand::Rng;

    fn small(grn_blocks: usize, placement: GrnPlacement) -> TransformerConfig {
        TransformerConfig {
            n_layers: 2,
            d_model: 8,
            n_heads: 2,
            ff_hidden: 8,
            dropout: 0.25,
            token_len: 64,
            n_tokens: 4,
            positional_encoding: true,
            grn_blocks,
            grn_placement: placement,
        }
    }

    fn logits(net: &TransformerNet, x: &[f64], training: bool) -> Vec<f64> {
        let mut tape = Tape::new();
        let vars = net.params.bind(&mut tape);
        let mut rng = seeded(9);
        let mut ctx = Ctx {
            tape: &mut tape,
            vars: &vars,
            training,
            rng: &mut rng,
        };
        let xv = ctx.tape.constant(&[x.len() / PULSE_LEN, PULSE_LEN], x.to_vec()).unwrap();
        let z = net.forward(&mut ctx, xv).unwrap();
        tape.value(z).to_vec()
    }

    fn batch(n: usize) -> Vec<f64> {
        let mut rng = seeded(11);
        (0..n * PULSE_LEN).map(|_| rng.gen::<f64>()).collect()
    }

    #[test]
    fn grn_free_variant_matches_plain_model() {
        let x = batch(3);
        let plain = TransformerNet::new(small(0, GrnPlacement::BeforeEncoder), 5).unwrap();
        let with = TransformerNet::new(small(2, GrnPlacement::BeforeEncoder), 5).unwrap();
        assert_eq!(with.grn_params().len(), 2);
        let stripped = with.without_grn().unwrap();
        assert_eq!(stripped.params, plain.params);
        assert_eq!(logits(&stripped, &x, false), logits(&plain, &x, false));
        assert_ne!(logits(&with, &x, false), logits(&plain, &x, false));
    }

    #[test]
    fn placements_build_and_run() {
        let x = batch(2);
        for p in [GrnPlacement::BeforeEncoder, GrnPlacement::AfterEncoder, GrnPlacement::ReplaceFeedForward] {
            let net = TransformerNet::new(small(2, p), 1).unwrap();
            let z = logits(&net, &x, true);
            assert_eq!(z.len(), 2);
            assert!(z.iter().all(|v| v.is_finite()));
        }
        let net = TransformerNet::new(small(2, GrnPlacement::ReplaceFeedForward), 1).unwrap();
        assert_eq!(net.grn_params().len(), 2);
        assert!(net.without_grn().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = TransformerConfig::default();
        c.validate().unwrap();
        c.n_heads = 3;
        assert!(c.validate().is_err());
        let c = TransformerConfig {
            token_len: 10,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn positional_table_values() {
        let pe = positional_encoding(3, 4);
        assert_eq!(&pe[..4], &[0.0, 1.0, 0.0, 1.0]);
        assert!((pe[4] - 1f64.sin()).abs() < 1e-15);
        assert!((pe[6] - (1.0 / 100.0f64).sin()).abs() < 1e-15);
    }
}
