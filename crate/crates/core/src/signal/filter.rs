//! Butterworth bandpass design (bilinear transform, second-order sections)
//! and zero-phase forward-backward filtering.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SignalFrame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandpassSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    /// Order of the analog lowpass prototype. The bandpass has twice as many
    /// poles, realized as `order` biquads.
    pub order: usize,
}

impl Default for BandpassSpec {
    fn default() -> Self {
        Self {
            low_hz: 0.5,
            high_hz: 5.0,
            order: 4,
        }
    }
}

impl BandpassSpec {
    pub fn validate(&self, fs_hz: f64) -> Result<()> {
        if self.order == 0 || self.order % 2 != 0 {
            return Err(Error::Design(format!(
                "prototype order must be even and positive, got {}",
                self.order
            )));
        }
        if !(fs_hz > 0.0) {
            return Err(Error::Design(format!("sample rate must be positive, got {fs_hz}")));
        }
        if !(0.0 < self.low_hz && self.low_hz < self.high_hz && self.high_hz < fs_hz / 2.0) {
            return Err(Error::Design(format!(
                "need 0 < low ({}) < high ({}) < nyquist ({})",
                self.low_hz,
                self.high_hz,
                fs_hz / 2.0
            )));
        }
        Ok(())
    }
}

/// One second-order section, `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + z_inv * self.b[1] + z2 * self.b[2];
        let den = self.a[0] + z_inv * self.a[1] + z2 * self.a[2];
        num / den
    }

    /// Direct form II transposed, zero initial state.
    fn run(&self, x: &mut [f64]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z1;
            z1 = b1 * input - a1 * y + z2;
            z2 = b2 * input - a2 * y;
            *v = y;
        }
    }

    fn max_pole_radius(&self) -> f64 {
        let [_, a1, a2] = self.a;
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        let r1 = ((-a1 + disc) / 2.0).norm();
        let r2 = ((-a1 - disc) / 2.0).norm();
        r1.max(r2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCascade {
    pub sections: Vec<Biquad>,
    pub fs_hz: f64,
}

impl FilterCascade {
    /// Complex frequency response at `f_hz`.
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let w = 2.0 * PI * f_hz / self.fs_hz;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude(&self, f_hz: f64) -> f64 {
        self.response(f_hz).norm()
    }

    /// Causal filtering with zero initial state.
    pub fn apply(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.run(x);
        }
    }

    /// Minimum frame length accepted by [`filtfilt`]: three times the
    /// coefficient count of the equivalent single transfer function.
    pub fn min_padlen(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Samples for the slowest pole to decay below 1e-14.
    pub fn settle_samples(&self) -> usize {
        let r = self
            .sections
            .iter()
            .map(Biquad::max_pole_radius)
            .fold(0.0, f64::max);
        if r <= 0.0 {
            return 0;
        }
        ((1e-14f64).ln() / r.ln()).ceil() as usize
    }
}

/// Digital Butterworth bandpass via the bilinear transform with pre-warped
/// band edges, returned as cascaded biquads each normalized to unit gain at
/// the geometric center frequency.
pub fn design_bandpass(spec: &BandpassSpec, fs_hz: f64) -> Result<FilterCascade> {
    spec.validate(fs_hz)?;
    let n = spec.order;
    let fs2 = 2.0 * fs_hz;
    let wl = fs2 * (PI * spec.low_hz / fs_hz).tan();
    let wh = fs2 * (PI * spec.high_hz / fs_hz).tan();
    let bw = wh - wl;
    let w0 = (wl * wh).sqrt();

    // analog prototype poles on the left half of the unit circle
    let proto = (0..n).map(|k| {
        let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        Complex64::from_polar(1.0, theta)
    });
    // lowpass -> bandpass: each prototype pole yields two poles
    let mut analog = Vec::with_capacity(2 * n);
    for p in proto {
        let pb = p * (bw / 2.0);
        let root = (pb * pb - w0 * w0).sqrt();
        analog.push(pb + root);
        analog.push(pb - root);
    }
    // bilinear map; keep one pole of each conjugate pair
    let mut digital: Vec<Complex64> = analog
        .iter()
        .map(|&p| (fs2 + p) / (fs2 - p))
        .filter(|p| p.im > 0.0)
        .collect();
    if digital.len() != n {
        return Err(Error::Design(format!(
            "expected {n} conjugate pole pairs, found {}",
            digital.len()
        )));
    }
    digital.sort_by(|a, b| a.arg().total_cmp(&b.arg()));

    let wc = 2.0 * (w0 / fs2).atan();
    let zc_inv = Complex64::from_polar(1.0, -wc);
    let sections = digital
        .into_iter()
        .map(|p| {
            // one zero at z = 1 (from s = 0) and one at z = -1 (from s = inf)
            let mut s = Biquad {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -2.0 * p.re, p.norm_sqr()],
            };
            let g = s.response(zc_inv).norm();
            s.b.iter_mut().for_each(|c| *c /= g);
            s
        })
        .collect();
    Ok(FilterCascade { sections, fs_hz })
}

fn odd_extend(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    out.extend_from_slice(x);
    out.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    out
}

/// Zero-phase filtering: forward pass, then a pass over the time-reversed
/// output. The signal is odd-reflected at both ends before filtering and
/// trimmed afterwards; the reflection is long enough for start-up transients
/// to die out (capped at `len - 1`).
pub fn filtfilt(frame: &SignalFrame, cascade: &FilterCascade) -> Result<SignalFrame> {
    let x = &frame.samples;
    let n = x.len();
    let min = cascade.min_padlen();
    if n <= min {
        return Err(Error::TooShort { len: n, min });
    }
    let pad = cascade.settle_samples().max(min).min(n - 1);
    let mut ext = odd_extend(x, pad);
    cascade.apply(&mut ext);
    ext.reverse();
    cascade.apply(&mut ext);
    ext.reverse();
    Ok(SignalFrame {
        samples: ext[pad..pad + n].to_vec(),
        sample_rate_hz: frame.sample_rate_hz,
        start_time_s: frame.start_time_s,
    })
}
