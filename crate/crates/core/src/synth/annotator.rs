use serde::{Deserialize, Serialize};

use crate::dataset::PulseDataset;
use crate::error::{Error, Result};
use crate::signal::PULSE_LEN;

/// Thresholds for the template-correlation / amplitude second opinion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotatorConfig {
    pub min_correlation: f64,
    pub max_range_z: f64,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            min_correlation: 0.8,
            max_range_z: 3.0,
        }
    }
}

pub const MIN_ANNOTATOR_PULSES: usize = 20;

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return if saa <= 0.0 && sbb <= 0.0 { 1.0 } else { 0.0 };
    }
    sab / (saa * sbb).sqrt()
}

fn mean_template(ds: &PulseDataset, rows: impl Iterator<Item = usize>) -> Vec<f64> {
    let mut t = vec![0.0; PULSE_LEN];
    let mut k = 0usize;
    for i in rows {
        for (a, b) in t.iter_mut().zip(ds.row(i)) {
            *a += b;
        }
        k += 1;
    }
    if k > 0 {
        t.iter_mut().for_each(|v| *v /= k as f64);
    }
    t
}

/// Flags pulses that deviate from the dataset's normal-beat template.
///
/// The template starts as the mean of every pulse, is recomputed once from
/// the pulses correlating at least `min_correlation` with it, and a pulse is
/// flagged when its correlation with the final template is below the
/// threshold or its pre-normalization amplitude range has a z-score above
/// `max_range_z` (unknown ranges skip the amplitude test).
pub fn statistical_annotator(ds: &PulseDataset, cfg: &AnnotatorConfig) -> Result<Vec<bool>> {
    if ds.len() < MIN_ANNOTATOR_PULSES {
        return Err(Error::InsufficientData(format!(
            "annotator needs at least {MIN_ANNOTATOR_PULSES} pulses, got {}",
            ds.len()
        )));
    }
    let global = mean_template(ds, 0..ds.len());
    let kept: Vec<usize> = (0..ds.len())
        .filter(|&i| pearson(ds.row(i), &global) >= cfg.min_correlation)
        .collect();
    let template = if kept.is_empty() {
        global
    } else {
        mean_template(ds, kept.into_iter())
    };

    let ranges: Vec<f64> = (0..ds.len())
        .map(|i| ds.amplitude_range(i))
        .filter(|r| r.is_finite())
        .collect();
    let (mu, sd) = if ranges.len() >= 2 {
        let m = ranges.iter().sum::<f64>() / ranges.len() as f64;
        let v = ranges.iter().map(|r| (r - m).powi(2)).sum::<f64>() / ranges.len() as f64;
        (m, v.sqrt())
    } else {
        (0.0, 0.0)
    };

    Ok((0..ds.len())
        .map(|i| {
            let corr = pearson(ds.row(i), &template);
            let r = ds.amplitude_range(i);
            let z = if sd > 0.0 && r.is_finite() { (r - mu) / sd } else { 0.0 };
            corr < cfg.min_correlation || z > cfg.max_range_z
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn beat(i: usize) -> f64 {
        (PI * i as f64 / 255.0).sin().powi(2)
    }

    #[test]
    fn identical_pulses_have_no_flags() {
        let row: Vec<f64> = (0..PULSE_LEN).map(beat).collect();
        let mut ds = PulseDataset::new();
        for k in 0..30 {
            ds.push(&row, None, format!("{k}"), false, 1.0).unwrap();
        }
        let flags = statistical_annotator(&ds, &AnnotatorConfig::default()).unwrap();
        assert!(flags.iter().all(|f| !f));
    }

    #[test]
    fn inverted_pulse_is_flagged() {
        let row: Vec<f64> = (0..PULSE_LEN).map(beat).collect();
        let inv: Vec<f64> = row.iter().map(|v| 1.0 - v).collect();
        let mut ds = PulseDataset::new();
        for k in 0..100 {
            ds.push(&row, None, format!("{k}"), false, 1.0).unwrap();
        }
        ds.push(&inv, None, "inv".into(), false, 1.0).unwrap();
        let flags = statistical_annotator(&ds, &AnnotatorConfig::default()).unwrap();
        assert!(flags[100]);
        assert_eq!(flags.iter().filter(|f| **f).count(), 1);
        assert!((pearson(&inv, &row) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn amplitude_outlier_is_flagged_and_small_sets_fail() {
        let row: Vec<f64> = (0..PULSE_LEN).map(beat).collect();
        let mut ds = PulseDataset::new();
        for k in 0..50 {
            ds.push(&row, None, format!("{k}"), false, 1.0 + 0.01 * (k % 5) as f64).unwrap();
        }
        ds.push(&row, None, "big".into(), false, 5.0).unwrap();
        let flags = statistical_annotator(&ds, &AnnotatorConfig::default()).unwrap();
        assert!(flags[50]);
        let small = ds.subset(&[0, 1, 2]);
        assert!(matches!(
            statistical_annotator(&small, &AnnotatorConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
