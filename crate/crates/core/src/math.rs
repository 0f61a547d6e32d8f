//! Scalar helpers over `libm` so the crate stays `no_std`.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `log(sum(exp(xs)))`, shifted by the max for stability. `-inf` for empty input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| exp(x - max)).sum();
    max + ln(sum)
}

/// `-log softmax(logits)[0]`, kept accurate when the first logit wins by a
/// wide margin (where `log_sum_exp - logits[0]` cancels to zero).
pub fn neg_log_softmax_first(logits: &[f64]) -> f64 {
    let first = logits[0];
    let max = logits[1..].iter().map(|&z| z - first).fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        ln_1p(logits[1..].iter().map(|&z| exp(z - first)).sum())
    } else {
        max + ln(exp(-max) + logits[1..].iter().map(|&z| exp(z - first - max)).sum::<f64>())
    }
}

/// Softmax into `out`; `out.len()` must equal `logits.len()`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let lse = log_sum_exp(logits);
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = exp(z - lse);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_entry_loss_matches_direct_form_and_keeps_tiny_values() {
        for logits in [[0.3, -1.2, 0.8], [2.0, 2.0, 2.0], [-4.0, 1.0, 3.5]] {
            let direct = log_sum_exp(&logits) - logits[0];
            assert!((neg_log_softmax_first(&logits) - direct).abs() < 1e-14);
        }
        let tiny = neg_log_softmax_first(&[70.0, 0.0]);
        assert!((tiny / exp(-70.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_symmetric() {
        for x in [-30.0, -2.5, 0.0, 0.7, 40.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn log_sum_exp_handles_large_values() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + ln(2.0))).abs() < 1e-12);
    }
}
