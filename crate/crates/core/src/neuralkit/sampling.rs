use crate::error::{CteError, Result};
use rand::Rng;

/// Draws an index from `softmax(ln(probs) / temperature)`.
///
/// `temperature == 1` samples `probs` itself; small temperatures approach
/// the argmax.
pub fn categorical_sample<R: Rng + ?Sized>(probs: &[f64], temperature: f64, rng: &mut R) -> Result<usize> {
    if probs.is_empty() {
        return Err(CteError::Normalization("empty probability vector".into()));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(CteError::InvalidArgument(format!("temperature must be positive, got {temperature}")));
    }
    let sum: f64 = probs.iter().sum();
    if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) || (sum - 1.0).abs() > 1e-6 {
        return Err(CteError::Normalization(format!("entries must be non-negative and sum to 1, got sum {sum}")));
    }
    let scaled: Vec<f64> = probs.iter().map(|&p| if p > 0.0 { p.ln() / temperature } else { f64::NEG_INFINITY }).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if u < acc {
                return Ok(i);
            }
        }
    }
    Ok(last_positive)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_hot_always_returns_its_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(categorical_sample(&[0.0, 0.0, 1.0, 0.0], 1.0, &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn low_temperature_is_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hits = (0..10_000).filter(|_| categorical_sample(&[0.7, 0.3], 1e-3, &mut rng).unwrap() == 0).count();
        assert_eq!(hits, 10_000);
    }

    #[test]
    fn fair_coin_frequencies() {
        // 10k Bernoulli(0.5) draws: sd of the frequency is 0.005, so 0.02 is a 4-sigma band.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ones = (0..10_000).filter(|_| categorical_sample(&[0.5, 0.5], 1.0, &mut rng).unwrap() == 1).count();
        let f = ones as f64 / 10_000.0;
        assert!((f - 0.5).abs() <= 0.02, "{f}");
    }

    #[test]
    fn non_simplex_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(categorical_sample(&[0.5, 0.6], 1.0, &mut rng), Err(CteError::Normalization(_))));
        assert!(matches!(categorical_sample(&[-0.5, 1.5], 1.0, &mut rng), Err(CteError::Normalization(_))));
    }

    #[test]
    fn same_rng_state_same_draws() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| categorical_sample(&[0.2, 0.3, 0.5], 1.0, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }
}
