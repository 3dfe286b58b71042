//! Adaptive synthetic oversampling of the minority class.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PulseDataset;
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::signal::{Label, PULSE_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdasynConfig {
    pub k_neighbors: usize,
    /// Fraction of the class gap to fill; 1.0 balances exactly.
    pub beta: f64,
    /// Runs only when minority/majority is below this ratio.
    pub d_threshold: f64,
    pub seed: u64,
}

impl Default for AdasynConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            beta: 1.0,
            d_threshold: 1.0,
            seed: 0,
        }
    }
}

impl AdasynConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::Config("adasyn k_neighbors must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("adasyn beta must be in [0, 1], got {}", self.beta)));
        }
        if !(self.d_threshold > 0.0) {
            return Err(Error::Config(format!(
                "adasyn d_threshold must be positive, got {}",
                self.d_threshold
            )));
        }
        Ok(())
    }
}

/// Where a synthetic row came from: `row = seed + lambda * (neighbor - seed)`,
/// indices into the input dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOrigin {
    pub seed: usize,
    pub neighbor: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct AdasynOutput {
    /// Input rows unchanged, followed by the synthetic rows.
    pub dataset: PulseDataset,
    pub minority: Label,
    /// Total synthetic rows requested and produced.
    pub generated: usize,
    /// Neighborhood size actually used.
    pub k: usize,
    /// Per-minority-row allocation, aligned with `minority_rows`.
    pub allocation: Vec<usize>,
    pub minority_rows: Vec<usize>,
    /// One entry per synthetic row, in output order.
    pub origins: Vec<SyntheticOrigin>,
}

pub fn adasyn(train: &PulseDataset, cfg: &AdasynConfig) -> Result<PulseDataset> {
    Ok(adasyn_detailed(train, cfg)?.dataset)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` rows in `pool` closest to row `i` (excluding `i`),
/// ties broken by index.
fn nearest(ds: &PulseDataset, i: usize, pool: &[usize], k: usize) -> Vec<usize> {
    let q = ds.row(i);
    let mut d: Vec<(f64, usize)> = pool
        .iter()
        .filter(|&&j| j != i)
        .map(|&j| (sq_dist(q, ds.row(j)), j))
        .collect();
    let k = k.min(d.len());
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < d.len() {
        d.select_nth_unstable_by(k, cmp);
        d.truncate(k);
    }
    d.sort_by(cmp);
    d.into_iter().map(|(_, j)| j).collect()
}

/// Splits `total` into integer shares proportional to `weights` that sum to
/// `total` exactly: floors first, then the largest remainders (lower index
/// wins ties).
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    let quotas: Vec<f64> = if sum > 0.0 {
        weights.iter().map(|w| w / sum * total as f64).collect()
    } else {
        vec![total as f64 / weights.len() as f64; weights.len()]
    };
    let mut shares: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = shares.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        shares[i] += 1;
    }
    shares
}

pub fn adasyn_detailed(train: &PulseDataset, cfg: &AdasynConfig) -> Result<AdasynOutput> {
    cfg.validate()?;
    if !train.is_fully_labeled() {
        return Err(Error::Data("adasyn needs every training row labeled".into()));
    }
    let groups = train.indices_by_label();
    if groups.len() < 2 {
        return Err(Error::Class(format!(
            "adasyn needs both classes, found {:?}",
            groups.keys().collect::<Vec<_>>()
        )));
    }
    let normal = &groups[&Label::Normal];
    let artifact = &groups[&Label::Artifact];
    let (minority, min_rows, maj_len) = if artifact.len() <= normal.len() {
        (Label::Artifact, artifact.clone(), normal.len())
    } else {
        (Label::Normal, normal.clone(), artifact.len())
    };
    let m_s = min_rows.len();
    let unchanged = |k| AdasynOutput {
        dataset: train.clone(),
        minority,
        generated: 0,
        k,
        allocation: vec![0; m_s],
        minority_rows: min_rows.clone(),
        origins: Vec::new(),
    };

    let ratio = m_s as f64 / maj_len as f64;
    let g_total = ((maj_len - m_s) as f64 * cfg.beta).round() as usize;
    if ratio >= cfg.d_threshold || g_total == 0 {
        return Ok(unchanged(cfg.k_neighbors));
    }
    if m_s <= 1 {
        return Err(Error::InsufficientData(format!(
            "adasyn needs at least 2 minority rows, got {m_s}"
        )));
    }
    let mut k = cfg.k_neighbors;
    if m_s <= k {
        k = m_s - 1;
        log::warn!("adasyn: only {m_s} minority rows, reducing k to {k}");
    }

    let all: Vec<usize> = (0..train.len()).collect();
    let neighborhoods: Vec<(f64, Vec<usize>)> = min_rows
        .par_iter()
        .map(|&i| {
            let hard = nearest(train, i, &all, k)
                .into_iter()
                .filter(|&j| train.label(j) != Some(minority))
                .count();
            (hard as f64 / k as f64, nearest(train, i, &min_rows, k))
        })
        .collect();
    let r: Vec<f64> = neighborhoods.iter().map(|(r, _)| *r).collect();
    let allocation = largest_remainder(&r, g_total);

    let mut rng = seeded(cfg.seed);
    let mut out = train.clone();
    let mut origins = Vec::with_capacity(g_total);
    let mut row = vec![0.0; PULSE_LEN];
    for (s, (&seed, &g)) in min_rows.iter().zip(&allocation).enumerate() {
        let nbrs = &neighborhoods[s].1;
        for draw in 0..g {
            let z = nbrs[rng.gen_range(0..nbrs.len())];
            let lambda: f64 = rng.gen();
            for ((o, a), b) in row.iter_mut().zip(train.row(seed)).zip(train.row(z)) {
                *o = a + lambda * (b - a);
            }
            out.push(
                &row,
                Some(minority),
                format!("syn:{}:{draw}", train.source_id(seed)),
                true,
                {
                    let (ra, rb) = (train.amplitude_range(seed), train.amplitude_range(z));
                    ra + lambda * (rb - ra)
                },
            )?;
            origins.push(SyntheticOrigin {
                seed,
                neighbor: z,
                lambda,
            });
        }
    }
    Ok(AdasynOutput {
        dataset: out,
        minority,
        generated: g_total,
        k,
        allocation,
        minority_rows: min_rows,
        origins,
    })
}
