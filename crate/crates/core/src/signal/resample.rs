use super::PULSE_LEN;
use crate::error::{Error, Result};

/// Linear interpolation of `raw` at `PULSE_LEN` evenly spaced positions
/// spanning the whole pulse, so `out[0] = raw[0]` and `out[255] = raw[n-1]`.
pub fn resample_to_256(raw: &[f64]) -> Result<Vec<f64>> {
    let n = raw.len();
    if n < 2 {
        return Err(Error::DegeneratePulse(format!("need at least 2 samples, got {n}")));
    }
    let last = (PULSE_LEN - 1) as f64;
    let out = (0..PULSE_LEN)
        .map(|j| {
            // j (n-1) / 255 in exact integer arithmetic where possible
            let num = j * (n - 1);
            let i = num / (PULSE_LEN - 1);
            let rem = num % (PULSE_LEN - 1);
            if rem == 0 {
                raw[i]
            } else {
                let frac = rem as f64 / last;
                raw[i] + frac * (raw[i + 1] - raw[i])
            }
        })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub samples: Vec<f64>,
    pub range: f64,
    pub degenerate: bool,
}

/// Min-max scaling to `[0, 1]`. A flat pulse (range < 1e-12) becomes all
/// zeros and is flagged degenerate.
pub fn normalize_pulse(samples: &[f64]) -> Result<Normalized> {
    if samples.len() != PULSE_LEN {
        return Err(Error::Data(format!(
            "normalize expects {PULSE_LEN} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite sample in pulse".into()));
    }
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range < 1e-12 {
        return Ok(Normalized {
            samples: vec![0.0; PULSE_LEN],
            range,
            degenerate: true,
        });
    }
    let out = samples
        .iter()
        .map(|&v| if v == max { 1.0 } else { (v - min) / range })
        .collect();
    Ok(Normalized {
        samples: out,
        range,
        degenerate: false,
    })
}
