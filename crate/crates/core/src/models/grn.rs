use super::{Ctx, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Var;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Gate (`w4`, `b4`) and value (`w5`, `b5`) projections, both `d -> d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GluParams {
    pub w4: ParamId,
    pub b4: ParamId,
    pub w5: ParamId,
    pub b5: ParamId,
}

impl GluParams {
    pub fn init(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut SeededRng) -> Result<Self> {
        Ok(Self {
            w4: store.glorot(format!("{prefix}.w4"), d, d, rng)?,
            b4: store.zeros(format!("{prefix}.b4"), d),
            w5: store.glorot(format!("{prefix}.w5"), d, d, rng)?,
            b5: store.zeros(format!("{prefix}.b5"), d),
        })
    }
}

/// `sigmoid(x W4^T + b4) * (x W5^T + b5)` over the last axis.
pub fn glu(ctx: &mut Ctx<'_>, p: &GluParams, x: Var) -> Result<Var> {
    let gate = ctx.tape.linear(x, ctx.p(p.w4), Some(ctx.p(p.b4)))?;
    let gate = ctx.tape.sigmoid(gate);
    let value = ctx.tape.linear(x, ctx.p(p.w5), Some(ctx.p(p.b5)))?;
    ctx.tape.mul(gate, value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrnParams {
    pub d: usize,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    /// Context projection `d_ctx -> d`, when the block takes a context.
    pub w3: Option<(ParamId, usize)>,
    pub glu: GluParams,
    pub ln_gain: ParamId,
    pub ln_bias: ParamId,
}

impl GrnParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        d_ctx: Option<usize>,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let w1 = store.glorot(format!("{prefix}.w1"), d, d, rng)?;
        let b1 = store.zeros(format!("{prefix}.b1"), d);
        let w2 = store.glorot(format!("{prefix}.w2"), d, d, rng)?;
        let b2 = store.zeros(format!("{prefix}.b2"), d);
        let w3 = match d_ctx {
            Some(dc) => Some((store.glorot(format!("{prefix}.w3"), d, dc, rng)?, dc)),
            None => None,
        };
        let glu = GluParams::init(store, &format!("{prefix}.glu"), d, rng)?;
        Ok(Self {
            d,
            w1,
            b1,
            w2,
            b2,
            w3,
            glu,
            ln_gain: store.ones(format!("{prefix}.ln.gain"), d),
            ln_bias: store.zeros(format!("{prefix}.ln.bias"), d),
        })
    }
}

/// Gated residual block:
///
/// ```text
/// eta2 = ELU(a W2^T + c W3^T + b2)
/// eta1 = eta2 W1^T + b1            (dropout here when training)
/// out  = LayerNorm(a + GLU(eta1))
/// ```
///
/// A missing context contributes nothing, exactly as a zero context would.
pub fn grn_forward(ctx: &mut Ctx<'_>, p: &GrnParams, a: Var, c: Option<Var>, dropout: f64) -> Result<Var> {
    let mut pre = ctx.tape.linear(a, ctx.p(p.w2), Some(ctx.p(p.b2)))?;
    if let Some(c) = c {
        let (w3, dc) = p.w3.ok_or_else(|| Error::Config("grn block has no context projection".into()))?;
        let sc = ctx.tape.shape(c).to_vec();
        if sc.last() != Some(&dc) {
            return Err(Error::Shape {
                op: "grn context",
                lhs: sc,
                rhs: vec![dc],
            });
        }
        let cc = ctx.tape.linear(c, ctx.p(w3), None)?;
        pre = ctx.tape.add(pre, cc)?;
    }
    let eta2 = ctx.tape.elu(pre);
    let eta1 = ctx.tape.linear(eta2, ctx.p(p.w1), Some(ctx.p(p.b1)))?;
    let eta1 = ctx.dropout(eta1, dropout)?;
    let gated = glu(ctx, &p.glu, eta1)?;
    let sum = ctx.tape.add(a, gated)?;
    ctx.tape.layer_norm(sum, ctx.p(p.ln_gain), ctx.p(p.ln_bias), LAYER_NORM_EPS)
}
