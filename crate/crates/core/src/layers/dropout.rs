use rand::Rng;

use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Per-element multiplier applied by a train-mode dropout pass: `0` for
/// dropped elements, `1/(1-rate)` for survivors. `None` means identity.
#[derive(Debug, Clone)]
pub struct DropoutMask<T> {
    scale: Option<Tensor<T>>,
}

/// Inverted dropout.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<T>, DropoutMask<T>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((input.clone(), DropoutMask { scale: None }));
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let scale = Tensor::from_fn(
        input.shape(),
        |_| {
            if rng.gen::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        },
    )?;
    let out = input.mul(&scale)?;
    Ok((out, DropoutMask { scale: Some(scale) }))
}

pub fn dropout_backward<T: Real>(mask: &DropoutMask<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    match &mask.scale {
        None => Ok(upstream.clone()),
        Some(scale) => upstream.mul(scale),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_fn(&[4, 5], |i| i as f32 - 7.0).unwrap();
        for mode in [Mode::Train, Mode::Infer] {
            assert_eq!(dropout(&x, 0.0, mode, &mut rng).unwrap().0, x);
        }
        let (y, mask) = dropout(&x, 0.1, Mode::Infer, &mut rng).unwrap();
        assert_eq!(y, x);
        assert_eq!(dropout_backward(&mask, &x).unwrap(), x);
    }

    #[test]
    fn rejects_bad_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f32>::ones(&[3]).unwrap();
        assert!(dropout(&x, 1.0, Mode::Train, &mut rng).is_err());
        assert!(dropout(&x, -0.1, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn preserves_mean_in_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Tensor::<f64>::full(&[1_000_000], 2.0).unwrap();
        let (y, mask) = dropout(&x, 0.1, Mode::Train, &mut rng).unwrap();
        assert!((y.mean() - 2.0).abs() / 2.0 < 0.01, "mean {}", y.mean());
        let dropped = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        assert!((dropped - 0.1).abs() < 0.005);
        // backward applies the same mask and scale
        let g = dropout_backward(&mask, &Tensor::ones(&[1_000_000]).unwrap()).unwrap();
        assert_eq!(g.scale(2.0), y);
    }
}
