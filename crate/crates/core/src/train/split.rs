use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::adasyn::largest_remainder;
use crate::dataset::PulseDataset;
use crate::error::{Error, Result};
use crate::rng::seeded;

pub const MIN_PER_CLASS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    /// Share of the training part held out for validation curves.
    pub validation_fraction_of_train: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.70,
            validation_fraction_of_train: 0.15,
            stratified: true,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train_fraction", self.train_fraction),
            ("validation_fraction_of_train", self.validation_fraction_of_train),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1), got {f}")));
            }
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for `n` rows: the training part is
    /// `floor(n * train_fraction)`, the fit part `floor(train * (1 - v))`, and
    /// the remainders go to test and validation.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train_all = floor_frac(n, self.train_fraction);
        let fit = floor_frac(train_all, 1.0 - self.validation_fraction_of_train);
        (fit, train_all - fit, n - train_all)
    }
}

fn floor_frac(n: usize, f: f64) -> usize {
    ((n as f64 * f) + 1e-9).floor() as usize
}

/// Disjoint row-index sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn check_disjoint(&self, n: usize) -> Result<()> {
        let mut seen = vec![0u8; n];
        for (tag, part) in [(1u8, &self.train), (2, &self.val), (4, &self.test)] {
            for &i in part {
                if i >= n || seen[i] != 0 {
                    return Err(Error::Consistency(format!("row {i} appears in more than one split (tag {tag})")));
                }
                seen[i] = tag;
            }
        }
        if seen.contains(&0) {
            return Err(Error::Consistency("split does not cover every row".into()));
        }
        Ok(())
    }
}

/// Splits `ds` into train, validation and test rows. When stratified, the
/// split sizes are apportioned across classes by largest remainder so each
/// class keeps its global share to within one row.
pub fn split(ds: &PulseDataset, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let groups = ds.indices_by_label();
    if groups.len() < 2 || !ds.is_fully_labeled() {
        return Err(Error::Class("split needs a fully labeled dataset with both classes".into()));
    }
    if let Some((label, rows)) = groups.iter().find(|(_, r)| r.len() < MIN_PER_CLASS) {
        return Err(Error::Class(format!(
            "class {label:?} has {} rows, need at least {MIN_PER_CLASS}",
            rows.len()
        )));
    }
    let mut rng = seeded(spec.seed);
    let (_, val_n, test_n) = spec.sizes(ds.len());
    let mut out = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    if spec.stratified {
        let mut pools: Vec<Vec<usize>> = groups.values().cloned().collect();
        for p in &mut pools {
            p.shuffle(&mut rng);
        }
        let sizes: Vec<f64> = pools.iter().map(|p| p.len() as f64).collect();
        let test_k = largest_remainder(&sizes, test_n);
        let left: Vec<f64> = sizes.iter().zip(&test_k).map(|(s, t)| s - *t as f64).collect();
        let val_k = largest_remainder(&left, val_n);
        for ((p, t), v) in pools.iter().zip(&test_k).zip(&val_k) {
            out.test.extend_from_slice(&p[..*t]);
            out.val.extend_from_slice(&p[*t..t + v]);
            out.train.extend_from_slice(&p[t + v..]);
        }
    } else {
        let mut all: Vec<usize> = (0..ds.len()).collect();
        all.shuffle(&mut rng);
        out.test = all[..test_n].to_vec();
        out.val = all[test_n..test_n + val_n].to_vec();
        out.train = all[test_n + val_n..].to_vec();
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    out.check_disjoint(ds.len())?;
    Ok(out)
}

/// Stratified random subset holding `round(portion * n)` rows (original
/// order kept).
pub fn stratified_portion(ds: &PulseDataset, portion: f64, seed: u64) -> Result<Vec<usize>> {
    if !(portion > 0.0 && portion <= 1.0) {
        return Err(Error::Config(format!("portion must be in (0, 1], got {portion}")));
    }
    if portion == 1.0 {
        return Ok((0..ds.len()).collect());
    }
    let groups = ds.indices_by_label();
    let mut rng = seeded(seed);
    let total = (ds.len() as f64 * portion).round() as usize;
    let mut pools: Vec<Vec<usize>> = groups.into_values().collect();
    let sizes: Vec<f64> = pools.iter().map(|p| p.len() as f64).collect();
    let take = largest_remainder(&sizes, total);
    let mut out = Vec::with_capacity(total);
    for (p, k) in pools.iter_mut().zip(take) {
        p.shuffle(&mut rng);
        out.extend_from_slice(&p[..k]);
    }
    out.sort_unstable();
    Ok(out)
}
