//! Synthetic labeled PPG: a two-lobe beat train with baseline wander and
//! noise, plus injected motion-artifact episodes whose time intervals are
//! known exactly.

mod annotator;
mod corpus;
mod label;

pub use annotator::{statistical_annotator, AnnotatorConfig, MIN_ANNOTATOR_PULSES};
pub use corpus::{build_corpus, Corpus, CorpusConfig};
pub use label::{label_pulses, OVERLAP_THRESHOLD};

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, SeededRng};
use crate::signal::SignalFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Spike,
    Flatline,
    BaselineJump,
    AmplitudeBurst,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 4] = [
        ArtifactKind::Spike,
        ArtifactKind::Flatline,
        ArtifactKind::BaselineJump,
        ArtifactKind::AmplitudeBurst,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtifactInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub kind: ArtifactKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub heart_rate_mean_bpm: f64,
    pub heart_rate_std_bpm: f64,
    pub baseline_wander_amplitude: f64,
    pub baseline_wander_hz: f64,
    pub noise_std: f64,
    /// Target fraction of pulses carrying an artifact.
    pub artifact_rate: f64,
    /// Relative weights over spike, flatline, baseline jump, amplitude burst.
    pub artifact_mix: [f64; 4],
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            duration_s: 30.0,
            sample_rate_hz: 128.0,
            heart_rate_mean_bpm: 75.0,
            heart_rate_std_bpm: 4.0,
            baseline_wander_amplitude: 0.3,
            baseline_wander_hz: 0.15,
            noise_std: 0.02,
            artifact_rate: 0.175,
            artifact_mix: [0.25, 0.25, 0.25, 0.25],
            seed: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=0.5).contains(&self.artifact_rate) {
            return bad(format!("artifact_rate must be in [0, 0.5], got {}", self.artifact_rate));
        }
        if !(self.sample_rate_hz > 10.0) {
            return bad(format!("sample_rate_hz must exceed 10, got {}", self.sample_rate_hz));
        }
        if !(self.duration_s > 0.0) {
            return bad(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if !(30.0..=300.0).contains(&self.heart_rate_mean_bpm) || !(self.heart_rate_std_bpm >= 0.0) {
            return bad(format!(
                "heart rate {} +- {} bpm outside 30..300",
                self.heart_rate_mean_bpm, self.heart_rate_std_bpm
            ));
        }
        if !(self.noise_std >= 0.0) || !(self.baseline_wander_amplitude >= 0.0) || !(self.baseline_wander_hz >= 0.0) {
            return bad("noise and wander parameters must be non-negative".into());
        }
        if self.artifact_mix.iter().any(|w| !(*w >= 0.0)) || self.artifact_mix.iter().sum::<f64>() <= 0.0 {
            return bad(format!("artifact_mix needs non-negative weights with a positive sum, got {:?}", self.artifact_mix));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedFrame {
    pub frame: SignalFrame,
    pub intervals: Vec<ArtifactInterval>,
}

/// Asymmetric systolic lobe (fast upstroke, slower decay) plus a wide
/// diastolic shoulder; positions and widths are fractions of the period.
/// The shoulder is wide enough that the filtered beat has a single minimum.
fn beat_shape(phase: f64) -> f64 {
    let d = phase - 0.25;
    let w = if d < 0.0 { 0.07 } else { 0.15 };
    let sys = (-d * d / (2.0 * w * w)).exp();
    let dia = 0.45 * (-(phase - 0.5).powi(2) / (2.0 * 0.2f64.powi(2))).exp();
    sys + dia
}

pub fn generate_frame(cfg: &GeneratorConfig) -> Result<AnnotatedFrame> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    let fs = cfg.sample_rate_hz;
    let n = (cfg.duration_s * fs).round() as usize;
    if n < 2 {
        return Err(Error::Config("frame shorter than two samples".into()));
    }

    // beat onsets, starting one partial beat before t = 0
    let hr = Normal::new(cfg.heart_rate_mean_bpm, cfg.heart_rate_std_bpm.max(1e-9))
        .map_err(|e| Error::Config(e.to_string()))?;
    let period = |rng: &mut SeededRng| 60.0 / hr.sample(rng).clamp(35.0, 250.0);
    let mut onsets = vec![-rng.gen::<f64>() * period(&mut rng)];
    while *onsets.last().unwrap() < cfg.duration_s + 2.0 {
        let next = onsets.last().unwrap() + period(&mut rng);
        onsets.push(next);
    }
    let amplitude = rng.gen_range(0.8..1.2);
    let wander_phase = rng.gen::<f64>() * 2.0 * PI;
    let noise = Normal::new(0.0, cfg.noise_std.max(1e-12)).map_err(|e| Error::Config(e.to_string()))?;

    let mut x = vec![0.0; n];
    let mut k = 0;
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / fs;
        while k + 1 < onsets.len() && onsets[k + 1] <= t {
            k += 1;
        }
        // lobes of the current beat plus the tail of the previous one
        let mut s = 0.0;
        for j in k.saturating_sub(1)..=(k + 1).min(onsets.len() - 2) {
            let p = onsets[j + 1] - onsets[j];
            s += beat_shape((t - onsets[j]) / p);
        }
        *v = amplitude * s
            + cfg.baseline_wander_amplitude * (2.0 * PI * cfg.baseline_wander_hz * t + wander_phase).sin()
            + if cfg.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
    }

    let intervals = inject_artifacts(cfg, &onsets, amplitude, &mut x, &mut rng);
    Ok(AnnotatedFrame {
        frame: SignalFrame::new(x, fs, 0.0)?,
        intervals,
    })
}

/// Picks whole beats to corrupt so the expected fraction of artifact pulses
/// matches `artifact_rate`, grouped into episodes of one to three beats.
fn inject_artifacts(
    cfg: &GeneratorConfig,
    onsets: &[f64],
    amplitude: f64,
    x: &mut [f64],
    rng: &mut SeededRng,
) -> Vec<ArtifactInterval> {
    if cfg.artifact_rate == 0.0 {
        return Vec::new();
    }
    let fs = cfg.sample_rate_hz;
    // complete beats inside the frame; the first and last are usually cut
    // off by segmentation, so episodes avoid them
    let beats: Vec<(f64, f64)> = onsets
        .windows(2)
        .map(|w| (w[0], w[1]))
        .filter(|&(a, b)| a >= 0.0 && b <= cfg.duration_s)
        .collect();
    if beats.len() < 3 {
        return Vec::new();
    }
    let candidates = beats.len() - 2;
    // budget in expected artifact-labeled pulses
    let mut budget = cfg.artifact_rate * beats.len() as f64;

    let mut taken = vec![false; beats.len()];
    let mut starts: Vec<usize> = (1..=candidates).collect();
    starts.shuffle(rng);
    let total_w: f64 = cfg.artifact_mix.iter().sum();
    let mut out = Vec::new();
    for s in starts {
        if budget <= 0.0 {
            break;
        }
        let kind = {
            let mut u = rng.gen::<f64>() * total_w;
            let mut pick = ArtifactKind::AmplitudeBurst;
            for (w, k) in cfg.artifact_mix.iter().zip(ArtifactKind::ALL) {
                if u < *w {
                    pick = k;
                    break;
                }
                u -= w;
            }
            pick
        };
        let max_len = match kind {
            ArtifactKind::Flatline => 2,
            ArtifactKind::BaselineJump => 1,
            _ => 3,
        };
        let len = rng.gen_range(1..=max_len);
        let end = s + len - 1;
        if end > candidates || (s - 1..=end + 1).any(|b| taken[b]) {
            continue;
        }
        let cost = len as f64 * pulse_yield(kind);
        if cost > budget && rng.gen::<f64>() >= budget / cost {
            budget = 0.0;
            continue;
        }
        (s..=end).for_each(|b| taken[b] = true);
        budget -= cost;
        let (t0, t1) = (beats[s].0, beats[end].1);
        let (i0, i1) = ((t0 * fs).ceil() as usize, ((t1 * fs).floor() as usize).min(x.len() - 1));
        apply_artifact(kind, &mut x[i0..=i1], len, amplitude, fs, rng);
        out.push(ArtifactInterval {
            start_s: t0,
            end_s: t1,
            kind,
        });
    }
    out.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    out
}

/// Expected artifact-labeled pulses per corrupted beat: spikes, jumps and
/// bursts add spurious minima and spill into neighbors, flatlines can merge
/// beats away.
fn pulse_yield(kind: ArtifactKind) -> f64 {
    match kind {
        ArtifactKind::Spike => 2.0,
        ArtifactKind::Flatline => 0.94,
        ArtifactKind::BaselineJump => 2.19,
        ArtifactKind::AmplitudeBurst => 2.32,
    }
}

fn apply_artifact(kind: ArtifactKind, seg: &mut [f64], beats: usize, amplitude: f64, fs: f64, rng: &mut SeededRng) {
    let n = seg.len();
    let sign = |rng: &mut SeededRng| if rng.gen::<bool>() { 1.0 } else { -1.0 };
    match kind {
        ArtifactKind::Spike => {
            // one or two per beat, tens of milliseconds wide so they
            // survive the low-pass edge
            let count = beats * rng.gen_range(1..=2);
            for s in 0..count {
                let lo = s * n / count;
                let hi = ((s + 1) * n / count).max(lo + 1);
                let c = rng.gen_range(lo..hi) as f64;
                let h = sign(rng) * rng.gen_range(2.0..4.0) * amplitude;
                let w = rng.gen_range(0.03..0.06) * fs;
                for (i, v) in seg.iter_mut().enumerate() {
                    let d = (i as f64 - c) / w;
                    *v += h * (-0.5 * d * d).exp();
                }
            }
        }
        ArtifactKind::Flatline => {
            let hold = seg[0];
            seg.iter_mut().for_each(|v| *v = hold);
        }
        ArtifactKind::BaselineJump => {
            let off = rng.gen_range(n / 4..=n * 3 / 4);
            let j = sign(rng) * rng.gen_range(1.5..3.0) * amplitude;
            seg[off..].iter_mut().for_each(|v| *v += j);
        }
        ArtifactKind::AmplitudeBurst => {
            let gain = rng.gen_range(1.8..3.0);
            let f = rng.gen_range(2.5..4.5);
            let a = rng.gen_range(0.5..1.0) * amplitude;
            let ph = rng.gen::<f64>() * 2.0 * PI;
            for (i, v) in seg.iter_mut().enumerate() {
                *v = *v * gain + a * (2.0 * PI * f * i as f64 / fs + ph).sin();
            }
        }
    }
}

/// `[{start_s, end_s, kind}, ...]`
pub fn intervals_to_json(intervals: &[ArtifactInterval]) -> Result<String> {
    Ok(serde_json::to_string_pretty(intervals)?)
}
