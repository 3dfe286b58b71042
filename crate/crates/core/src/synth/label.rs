use super::AnnotatedFrame;
use crate::error::{Error, Result};
use crate::signal::{CanonicalPulse, Label};

/// A pulse is an artifact when artifact intervals cover more than this
/// fraction of its duration.
pub const OVERLAP_THRESHOLD: f64 = 0.10;

/// Labels pulses segmented from `frame` against its ground-truth intervals.
pub fn label_pulses(frame: &AnnotatedFrame, pulses: &mut [CanonicalPulse]) -> Result<()> {
    let t0 = frame.frame.start_time_s;
    let t1 = frame.frame.time_of(frame.frame.len() - 1);
    let tol = 0.5 / frame.frame.sample_rate_hz;
    for p in pulses.iter_mut() {
        let (a, b) = (p.start_s, p.start_s + p.duration_s);
        if a < t0 - tol || b > t1 + tol || p.duration_s <= 0.0 {
            return Err(Error::Consistency(format!(
                "pulse {} spans [{a}, {b}] outside frame [{t0}, {t1}]",
                p.source_id
            )));
        }
        let overlap: f64 = frame
            .intervals
            .iter()
            .map(|iv| (b.min(iv.end_s) - a.max(iv.start_s)).max(0.0))
            .sum();
        p.label = Some(if overlap > OVERLAP_THRESHOLD * p.duration_s {
            Label::Artifact
        } else {
            Label::Normal
        });
    }
    Ok(())
}
