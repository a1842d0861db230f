use alloc::vec::Vec;

use crate::audio::AudioBuffer;
use crate::error::{invalid, Result};
use crate::real::Real;

/// Mean absolute error over all samples and channels.
pub fn mae_loss(estimate: &AudioBuffer, reference: &AudioBuffer) -> Result<f64> {
    estimate.assert_same_shape(reference)?;
    let count = (estimate.len() * estimate.num_channels()).max(1) as f64;
    Ok(estimate.samples().zip(reference.samples()).map(|(e, r)| (e - r).abs()).sum::<f64>() / count)
}

/// Loss and its subgradient `sign(e) / count` (zero at ties) for an
/// estimate held as raw channels in working precision.
pub fn mae_with_grad<T: Real>(estimate: &[Vec<T>], reference: &AudioBuffer) -> Result<(f64, Vec<Vec<T>>)> {
    if estimate.len() != reference.num_channels() || estimate.iter().any(|c| c.len() != reference.len()) {
        return Err(invalid("estimate and reference differ in shape"));
    }
    let count = (reference.len() * reference.num_channels()).max(1) as f64;
    let step = T::of(1.0 / count);
    let mut total = 0.0;
    let grads = estimate
        .iter()
        .zip(reference.channels())
        .map(|(est, r)| {
            est.iter()
                .zip(r)
                .map(|(&e, &r)| {
                    let diff = e.as_f64() - r;
                    total += diff.abs();
                    if diff > 0.0 {
                        step
                    } else if diff < 0.0 {
                        -step
                    } else {
                        T::zero()
                    }
                })
                .collect()
        })
        .collect();
    Ok((total / count, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn hand_values() {
        let a = AudioBuffer::mono(8000, vec![1.0, 2.0]).unwrap();
        let z = AudioBuffer::mono(8000, vec![0.0, 0.0]).unwrap();
        assert_eq!(mae_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(mae_loss(&a, &z).unwrap(), 1.5);
        assert!(mae_loss(&a, &AudioBuffer::mono(8000, vec![0.0]).unwrap()).is_err());
    }

    #[test]
    fn subgradient_is_sign_over_count() {
        let r = AudioBuffer::mono(8000, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let est = vec![vec![1.0f64, 1.0, 0.0, 3.0]];
        let (loss, g) = mae_with_grad(&est, &r).unwrap();
        assert_eq!(loss, 0.75);
        assert_eq!(g[0], vec![0.25, 0.0, -0.25, 0.0]);
    }
}
