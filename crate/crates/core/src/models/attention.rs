use super::{Ctx, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Var;

/// Query, key, value and output projections, each `d -> d` with bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhaParams {
    pub d: usize,
    pub heads: usize,
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
}

impl MhaParams {
    pub fn init(store: &mut ParamStore, prefix: &str, d: usize, heads: usize, rng: &mut SeededRng) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(format!("d_model {d} is not divisible by {heads} heads")));
        }
        let mut proj = |name: &str| -> Result<(ParamId, ParamId)> {
            Ok((
                store.glorot(format!("{prefix}.w{name}"), d, d, rng)?,
                store.zeros(format!("{prefix}.b{name}"), d),
            ))
        };
        let (wq, bq) = proj("q")?;
        let (wk, bk) = proj("k")?;
        let (wv, bv) = proj("v")?;
        let (wo, bo) = proj("o")?;
        Ok(Self {
            d,
            heads,
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
        })
    }
}

/// Self-attention over `x: [batch * seq_len, d]` (token rows grouped by
/// sequence): per-head `softmax(Q K^T / sqrt(d / heads)) V`, heads
/// concatenated, then the output projection.
pub fn multi_head_attention(ctx: &mut Ctx<'_>, p: &MhaParams, x: Var, seq_len: usize) -> Result<Var> {
    let q = ctx.tape.linear(x, ctx.p(p.wq), Some(ctx.p(p.bq)))?;
    let k = ctx.tape.linear(x, ctx.p(p.wk), Some(ctx.p(p.bk)))?;
    let v = ctx.tape.linear(x, ctx.p(p.wv), Some(ctx.p(p.bv)))?;
    let heads = ctx.tape.attention(q, k, v, p.heads, seq_len)?;
    ctx.tape.linear(heads, ctx.p(p.wo), Some(ctx.p(p.bo)))
}
