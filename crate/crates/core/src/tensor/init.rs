use rand_distr::{Distribution, Normal};

use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Glorot (Xavier) normal initialization for a `[fan_out, fan_in]` weight:
/// i.i.d. `N(0, 2 / (fan_in + fan_out))`.
pub fn glorot_init(shape: [usize; 2], rng: &mut SeededRng) -> Result<Tensor> {
    let [fan_out, fan_in] = shape;
    if fan_out == 0 || fan_in == 0 {
        return Err(Error::Config(format!("glorot_init needs non-zero fans, got {shape:?}")));
    }
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
    let data = (0..fan_out * fan_in).map(|_| normal.sample(rng)).collect();
    Ok(Tensor::new(&shape, data)?.with_grad())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn empirical_std_matches() {
        let w = glorot_init([128, 128], &mut seeded(7)).unwrap();
        let n = w.len() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        let std = (w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let target = (2.0f64 / 256.0).sqrt();
        assert!((std - target).abs() / target < 0.1, "std {std}");
    }

    #[test]
    fn deterministic_and_edge_shapes() {
        let a = glorot_init([4, 3], &mut seeded(1)).unwrap();
        let b = glorot_init([4, 3], &mut seeded(1)).unwrap();
        assert_eq!(a, b);
        let one = glorot_init([1, 1], &mut seeded(2)).unwrap();
        assert!(one.data()[0].is_finite());
        assert!(matches!(glorot_init([0, 3], &mut seeded(1)), Err(Error::Config(_))));
    }
}
