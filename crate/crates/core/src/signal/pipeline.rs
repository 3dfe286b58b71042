use serde::{Deserialize, Serialize};

use super::{
    design_bandpass, filtfilt, normalize_pulse, resample_to_256, segment_pulses, BandpassSpec,
    CanonicalPulse, Rejection, RejectionReason, RejectionReport, SignalFrame,
};
use crate::error::Result;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Preprocessed {
    pub pulses: Vec<CanonicalPulse>,
    pub report: RejectionReport,
}

/// Filter, segment, resample and normalize one frame. Pulses get ids
/// `"{source}#{k}"` in time order; flat pulses are rejected as degenerate.
pub fn preprocess(frame: &SignalFrame, spec: &BandpassSpec, source: &str) -> Result<Preprocessed> {
    let cascade = design_bandpass(spec, frame.sample_rate_hz)?;
    let filtered = filtfilt(frame, &cascade)?;
    let seg = segment_pulses(&filtered);
    let mut out = Preprocessed {
        pulses: Vec::with_capacity(seg.pulses.len()),
        report: seg.report,
    };
    for p in seg.pulses {
        let norm = normalize_pulse(&resample_to_256(&p.raw_samples)?)?;
        if norm.degenerate {
            out.report.rejected.push(Rejection {
                start_index: p.start_index,
                end_index: p.end_index(),
                duration_s: p.duration_s,
                reason: RejectionReason::Degenerate,
            });
            continue;
        }
        let k = out.pulses.len();
        out.pulses.push(CanonicalPulse {
            samples: norm.samples,
            label: None,
            source_id: format!("{source}#{k}"),
            start_s: frame.time_of(p.start_index),
            duration_s: p.duration_s,
            amplitude_range: norm.range,
            degenerate: false,
        });
    }
    out.report.rejected.sort_by_key(|r| r.start_index);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_frame_yields_nothing() {
        let frame = SignalFrame::new(vec![0.0; 3840], 128.0, 0.0).unwrap();
        let out = preprocess(&frame, &BandpassSpec::default(), "z").unwrap();
        assert!(out.pulses.is_empty());
        assert!(out.report.is_empty());
    }
}
