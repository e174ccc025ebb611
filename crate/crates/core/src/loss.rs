//! Softmax output and categorical cross-entropy.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Lower bound applied to probabilities before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax of `[n, C]` logits, stabilised by subtracting the row max.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.rank() != 2 || logits.shape()[1] < 2 {
        return Err(Error::invalid(format!(
            "softmax expects [n, C>=2] logits, got {:?}",
            logits.shape()
        )));
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite("softmax logits"));
    }
    let c = logits.shape()[1];
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor::new(logits.shape(), out)
}

/// Mean negative log-likelihood of `targets` under `probabilities`, and the
/// gradient of that loss with respect to the logits that produced them,
/// `(p - onehot) / n`.
pub fn cross_entropy<T: Real>(probabilities: &Tensor<T>, targets: &[usize]) -> Result<(T, Tensor<T>)> {
    if probabilities.rank() != 2 || probabilities.shape()[0] != targets.len() {
        return Err(Error::shape("cross_entropy", probabilities.shape(), &[targets.len()]));
    }
    let (n, c) = (probabilities.shape()[0], probabilities.shape()[1]);
    let floor = T::from_f64(PROB_FLOOR);
    let nf = T::from_usize(n);
    let mut loss = T::zero();
    let mut grad = probabilities.data().to_vec();
    for (i, &t) in targets.iter().enumerate() {
        if t >= c {
            return Err(Error::LabelOutOfRange { label: t, classes: c });
        }
        loss -= probabilities.data()[i * c + t].max(floor).ln();
        grad[i * c + t] -= T::one();
    }
    for g in grad.iter_mut() {
        *g /= nf;
    }
    Ok((loss / nf, Tensor::new(probabilities.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> Tensor<f64> {
        Tensor::new(&[1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&row(&[0.3, 0.3, 0.3, 0.3])).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let p = softmax(&row(&[2.0, 1.0, 0.0])).unwrap();
        // e^2, e^1, e^0 over their sum, evaluated to 4 places
        for (a, b) in p.data().iter().zip([0.6652, 0.2447, 0.0900]) {
            assert!((a - b).abs() < 5e-5, "{a} vs {b}");
        }
        let shifted = softmax(&row(&[102.0, 101.0, 100.0])).unwrap();
        for (a, b) in p.data().iter().zip(shifted.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_errors() {
        assert!(softmax(&row(&[1.0])).is_err());
        assert!(matches!(softmax(&row(&[1.0, f64::NAN])), Err(Error::NonFinite(_))));
        assert!(softmax(&row(&[1.0, f64::INFINITY])).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = Tensor::<f64>::full(&[3, 10], 0.1).unwrap();
        let (loss, _) = cross_entropy(&uniform, &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);

        let onehot = Tensor::<f64>::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let (loss, grad) = cross_entropy(&onehot, &[0, 1]).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.data().iter().all(|&g| g == 0.0));

        let p = softmax(&row(&[2.0, 1.0, 0.0])).unwrap();
        let (loss, _) = cross_entropy(&p, &[0]).unwrap();
        // -ln(e^2 / (e^2 + e + 1))
        assert!((loss - 0.4076).abs() < 5e-5, "{loss}");

        let zero = Tensor::new(&[1, 2], vec![0.0f64, 1.0]).unwrap();
        let (loss, _) = cross_entropy(&zero, &[0]).unwrap();
        assert!((loss + PROB_FLOOR.ln()).abs() < 1e-9);

        assert!(matches!(
            cross_entropy(&uniform, &[0, 1, 10]),
            Err(Error::LabelOutOfRange { label: 10, classes: 10 })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = Tensor::new(
            &[3, 4],
            vec![0.2, -1.0, 0.7, 0.1, 1.5, 0.3, -0.4, 0.0, -0.2, 0.9, 0.4, -1.1],
        )
        .unwrap();
        let targets = [2, 0, 1];
        let loss_at = |z: &Tensor<f64>| cross_entropy(&softmax(z).unwrap(), &targets).unwrap().0;
        let (_, grad) = cross_entropy(&softmax(&logits).unwrap(), &targets).unwrap();
        let h = 1e-5;
        for i in 0..logits.len() {
            let mut plus = logits.clone();
            plus.data_mut()[i] += h;
            let mut minus = logits.clone();
            minus.data_mut()[i] -= h;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let analytic = grad.data()[i];
            assert!(
                (numeric - analytic).abs() / analytic.abs().max(1e-3) < 1e-6,
                "{i}: {numeric} vs {analytic}"
            );
        }
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(v in proptest::collection::vec(-1e4f64..1e4, 2..12)) {
            let p = softmax(&row(&v)).unwrap();
            prop_assert!((p.sum() - 1.0).abs() < 1e-6);
            prop_assert!(p.data().iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn rows_sum_to_one_f32(v in proptest::collection::vec(-1e4f32..1e4, 2..12)) {
            let p = softmax(&Tensor::new(&[1, v.len()], v).unwrap()).unwrap();
            prop_assert!((p.sum() - 1.0).abs() < 1e-6);
        }
    }
}
