//! PPG preprocessing: bandpass filtering, pulse segmentation, resampling to
//! 256 samples and per-pulse normalization.

mod filter;
pub mod io;
mod pipeline;
mod resample;
mod segment;

pub use filter::{design_bandpass, filtfilt, BandpassSpec, Biquad, FilterCascade};
pub use pipeline::{preprocess, Preprocessed};
pub use resample::{normalize_pulse, resample_to_256, Normalized};
pub use segment::{find_minima, segment_pulses, Pulse, Rejection, RejectionReason, RejectionReport, Segmentation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples per canonical pulse.
pub const PULSE_LEN: usize = 256;

/// Shortest and longest accepted pulse (300 and 30 bpm).
pub const MIN_PULSE_S: f64 = 0.2;
pub const MAX_PULSE_S: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalFrame {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub start_time_s: f64,
}

impl SignalFrame {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, start_time_s: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0) {
            return Err(Error::Data(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        if samples.len() < 2 {
            return Err(Error::Data(format!("frame needs at least 2 samples, got {}", samples.len())));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            start_time_s,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.start_time_s + index as f64 / self.sample_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Normal = 0,
    Artifact = 1,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Normal => 0.0,
            Label::Artifact => 1.0,
        }
    }

    pub fn from_code(code: i64) -> Result<Option<Self>> {
        match code {
            0 => Ok(Some(Label::Normal)),
            1 => Ok(Some(Label::Artifact)),
            -1 => Ok(None),
            other => Err(Error::Data(format!("label must be 0, 1 or -1, got {other}"))),
        }
    }

    pub fn code(label: Option<Self>) -> i64 {
        label.map_or(-1, |l| l as i64)
    }
}

/// One beat resampled to [`PULSE_LEN`] points and scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalPulse {
    pub samples: Vec<f64>,
    pub label: Option<Label>,
    pub source_id: String,
    /// Absolute time of the first sample.
    pub start_s: f64,
    pub duration_s: f64,
    /// max - min of the filtered pulse before normalization.
    pub amplitude_range: f64,
    pub degenerate: bool,
}
