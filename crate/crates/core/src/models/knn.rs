use serde::{Deserialize, Serialize};

use crate::dataset::PulseDataset;
use crate::error::{Error, Result};
use crate::signal::{Label, PULSE_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 5 }
    }
}

impl KnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("knn k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Euclidean k-nearest-neighbor vote. Equal distances keep the earlier
/// training row; split votes go to [`Label::Artifact`].
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub config: KnnConfig,
    data: Vec<f64>,
    targets: Vec<bool>,
}

impl KnnModel {
    pub fn fit(train: &PulseDataset, config: KnnConfig) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::InsufficientData("knn needs a non-empty training set".into()));
        }
        let targets = train
            .targets()?
            .into_iter()
            .map(|t| t == 1.0)
            .collect();
        Ok(Self {
            config,
            data: train.data().to_vec(),
            targets,
        })
    }

    /// Rebuilds from stored rows and 0/1 targets.
    pub fn from_parts(config: KnnConfig, data: Vec<f64>, targets: Vec<bool>) -> Result<Self> {
        config.validate()?;
        if targets.is_empty() || data.len() != targets.len() * PULSE_LEN {
            return Err(Error::Integrity(format!(
                "knn payload has {} values for {} targets",
                data.len(),
                targets.len()
            )));
        }
        Ok(Self { config, data, targets })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn targets(&self) -> &[bool] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Label and the fraction of artifact votes among the `k` neighbors.
    pub fn classify(&self, query: &[f64]) -> Result<(Label, f64)> {
        if query.len() != PULSE_LEN {
            return Err(Error::Shape {
                op: "knn query",
                lhs: vec![query.len()],
                rhs: vec![PULSE_LEN],
            });
        }
        let mut d: Vec<(f64, usize)> = self
            .data
            .chunks_exact(PULSE_LEN)
            .enumerate()
            .map(|(i, row)| (row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let k = self.config.k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
        }
        let votes = d[..k].iter().filter(|(_, i)| self.targets[*i]).count();
        let label = if 2 * votes >= k { Label::Artifact } else { Label::Normal };
        Ok((label, votes as f64 / k as f64))
    }

    /// Vote fractions, nudged so a tied vote lands on the artifact side of
    /// a 0.5 threshold.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        x.chunks(PULSE_LEN)
            .map(|q| {
                let (label, frac) = self.classify(q)?;
                Ok(if label == Label::Artifact { frac.max(0.5) } else { frac.min(0.5 - 1e-12) })
            })
            .collect()
    }
}
