use serde::{Deserialize, Serialize};

use super::{SignalFrame, MAX_PULSE_S, MIN_PULSE_S};

/// A beat between two consecutive local minima, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    pub raw_samples: Vec<f64>,
    pub start_index: usize,
    pub duration_s: f64,
}

impl Pulse {
    pub fn end_index(&self) -> usize {
        self.start_index + self.raw_samples.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    TooShort,
    TooLong,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub start_index: usize,
    pub end_index: usize,
    pub duration_s: f64,
    pub reason: RejectionReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub rejected: Vec<Rejection>,
}

impl RejectionReport {
    pub fn count(&self, reason: RejectionReason) -> usize {
        self.rejected.iter().filter(|r| r.reason == reason).count()
    }

    pub fn is_empty(&self) -> bool {
        self.rejected.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rejected.len()
    }

    pub fn merge(&mut self, other: RejectionReport) {
        self.rejected.extend(other.rejected);
    }
}

#[derive(Debug, Clone, Default)]
pub struct Segmentation {
    pub pulses: Vec<Pulse>,
    pub report: RejectionReport,
}

/// Indices `i` with `x[i-1] > x[i]` where the signal rises again after
/// `x[i]`. A flat bottom is reported at its leftmost sample.
pub fn find_minima(x: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] > x[i] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] > x[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Splits a filtered frame at consecutive minima. Pulses whose duration is
/// outside `[0.2 s, 2.0 s]` are moved to the rejection report.
pub fn segment_pulses(frame: &SignalFrame) -> Segmentation {
    let minima = find_minima(&frame.samples);
    let mut seg = Segmentation::default();
    for w in minima.windows(2) {
        let (a, b) = (w[0], w[1]);
        let duration_s = (b - a) as f64 / frame.sample_rate_hz;
        let reason = if duration_s < MIN_PULSE_S {
            Some(RejectionReason::TooShort)
        } else if duration_s > MAX_PULSE_S {
            Some(RejectionReason::TooLong)
        } else {
            None
        };
        match reason {
            Some(reason) => seg.report.rejected.push(Rejection {
                start_index: a,
                end_index: b,
                duration_s,
                reason,
            }),
            None => seg.pulses.push(Pulse {
                raw_samples: frame.samples[a..=b].to_vec(),
                start_index: a,
                duration_s,
            }),
        }
    }
    seg
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn sine_gives_four_pulses() {
        let fs = 128.0;
        let x: Vec<f64> = (0..640).map(|i| (2.0 * PI * i as f64 / fs).sin()).collect();
        // brute-force scan for samples strictly below both neighbours
        let oracle: Vec<usize> = (1..x.len() - 1)
            .filter(|&i| x[i] < x[i - 1] && x[i] < x[i + 1])
            .collect();
        assert_eq!(find_minima(&x), oracle);
        let seg = segment_pulses(&SignalFrame::new(x, fs, 0.0).unwrap());
        assert_eq!(seg.pulses.len(), 4);
        for p in &seg.pulses {
            assert!((127..=129).contains(&p.raw_samples.len()));
        }
    }

    #[test]
    fn ramp_has_no_pulses() {
        let x: Vec<f64> = (0..500).map(f64::from).collect();
        let seg = segment_pulses(&SignalFrame::new(x, 128.0, 0.0).unwrap());
        assert!(seg.pulses.is_empty());
        assert!(seg.report.is_empty());
    }

    #[test]
    fn plateau_resolves_left() {
        assert_eq!(find_minima(&[3., 1., 1., 1., 3.]), vec![1]);
        // a shelf that keeps descending is not a minimum
        assert_eq!(find_minima(&[3., 1., 1., 0., 2.]), vec![3]);
    }

    proptest! {
        #[test]
        fn minima_are_affine_invariant(
            xs in prop::collection::vec(-10.0f64..10.0, 3..200),
            alpha in 0.1f64..10.0,
            beta in -5.0f64..5.0,
        ) {
            let ys: Vec<f64> = xs.iter().map(|v| alpha * v + beta).collect();
            // affine maps can merge distinct floats; compare on exact-order inputs
            let order_kept = xs.windows(2).zip(ys.windows(2)).all(|(a, b)| {
                a[0].partial_cmp(&a[1]) == b[0].partial_cmp(&b[1])
            });
            prop_assume!(order_kept);
            prop_assert_eq!(find_minima(&xs), find_minima(&ys));
        }
    }
}
