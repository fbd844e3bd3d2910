use crate::error::{CteError, Result};
use crate::scalar::Scalar;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Denominator floor for the relative error, so components whose true
/// gradient is ~0 are judged on absolute error instead.
const REL_FLOOR: f64 = 1e-4;

/// Compares `analytic` to central finite differences of `loss_fn` around
/// `params` and returns the worst relative error.
///
/// At most `samples` components are checked (all of them when the vector is
/// shorter), chosen with `seed`.
pub fn grad_check<T, F>(mut loss_fn: F, params: &[T], analytic: &[T], epsilon: f64, samples: usize, seed: u64) -> Result<f64>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<T>,
{
    if params.len() != analytic.len() {
        return Err(CteError::dim("grad_check", params.len(), analytic.len()));
    }
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(CteError::InvalidArgument(format!("epsilon {epsilon} outside [1e-7, 1e-4]")));
    }
    let base = loss_fn(params)?;
    if !base.is_finite() {
        return Err(CteError::Numeric("loss is not finite at the check point".into()));
    }
    let indices: Vec<usize> = if params.len() <= samples {
        (0..params.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = sample(&mut rng, params.len(), samples).into_vec();
        v.sort_unstable();
        v
    };
    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for i in indices {
        let orig = work[i];
        work[i] = orig + T::lit(epsilon);
        let up = loss_fn(&work)?.as_f64();
        work[i] = orig - T::lit(epsilon);
        let down = loss_fn(&work)?.as_f64();
        work[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(CteError::Numeric(format!("loss not finite while perturbing component {i}")));
        }
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[i].as_f64();
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_norm_has_exact_gradient() {
        // Central differences are exact for quadratics, so only roundoff remains.
        let p: Vec<f64> = (0..300).map(|i| 1.0 + 0.5 * (i as f64 * 0.13).sin()).collect();
        let g: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
        let err = grad_check(|x: &[f64]| Ok(x.iter().map(|v| v * v).sum()), &p, &g, 1e-4, 250, 1).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let p = vec![1.0f64, 2.0, 3.0];
        let g = vec![2.0, 4.0, 7.0];
        let err = grad_check(|x: &[f64]| Ok(x.iter().map(|v| v * v).sum()), &p, &g, 1e-5, 200, 1).unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let p = vec![1.0f64];
        let r = grad_check(|_: &[f64]| Ok(f64::NAN), &p, &[0.0], 1e-5, 200, 1);
        assert!(matches!(r, Err(CteError::Numeric(_))));
    }
}
