//! Log-domain helpers.

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Shifts `xs` so that `log_sum_exp(xs) == 0`.
pub fn normalize_log(xs: &mut [f64]) {
    let z = log_sum_exp(xs);
    xs.iter_mut().for_each(|x| *x -= z);
}

/// Probabilities from unnormalized log-weights.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(xs);
    xs.iter().map(|x| (x - z).exp()).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
