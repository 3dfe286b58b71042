use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_frame, label_pulses, GeneratorConfig};
use crate::dataset::PulseDataset;
use crate::error::Result;
use crate::rng::derive_seed_n;
use crate::signal::{preprocess, BandpassSpec, Label, RejectionReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    /// Per-frame generator settings; `seed` is the corpus seed.
    pub generator: GeneratorConfig,
    pub bandpass: BandpassSpec,
    pub target_pulses: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            bandpass: BandpassSpec::default(),
            target_pulses: 4000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub dataset: PulseDataset,
    pub frames: usize,
    pub report: RejectionReport,
}

impl Corpus {
    pub fn artifact_fraction(&self) -> f64 {
        self.dataset.count(Label::Artifact) as f64 / self.dataset.len().max(1) as f64
    }
}

/// Generates frames with per-frame derived seeds, preprocesses and labels
/// them, and stops once `target_pulses` pulses are collected (the last
/// frame is truncated).
pub fn build_corpus(cfg: &CorpusConfig) -> Result<Corpus> {
    cfg.generator.validate()?;
    let mut dataset = PulseDataset::new();
    let mut report = RejectionReport::default();
    let mut frames = 0usize;
    let chunk = 32usize;
    while dataset.len() < cfg.target_pulses {
        let results: Vec<Result<_>> = (frames..frames + chunk)
            .into_par_iter()
            .map(|i| {
                let gen = GeneratorConfig {
                    seed: derive_seed_n(cfg.generator.seed, i as u64),
                    ..cfg.generator.clone()
                };
                let frame = generate_frame(&gen)?;
                let mut pre = preprocess(&frame.frame, &cfg.bandpass, &format!("f{i:05}"))?;
                label_pulses(&frame, &mut pre.pulses)?;
                Ok(pre)
            })
            .collect();
        for pre in results {
            let pre = pre?;
            frames += 1;
            report.merge(pre.report);
            for p in &pre.pulses {
                if dataset.len() == cfg.target_pulses {
                    break;
                }
                dataset.push(&p.samples, p.label, p.source_id.clone(), false, p.amplitude_range)?;
            }
            if dataset.len() == cfg.target_pulses {
                break;
            }
        }
    }
    Ok(Corpus {
        dataset,
        frames,
        report,
    })
}
