//! Small numeric helpers shared across losses and metrics.
//!
//! All reductions in this crate run in a fixed sequential order so that
//! identical inputs produce bit-identical results.

/// Neumaier-compensated sum. Costs one extra add per element and keeps
/// accumulated rounding well below the 1e-12 tolerances used by the tests.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

/// Arithmetic mean with compensated summation. Returns 0 for empty input.
pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let total = sum(values.into_iter().inspect(|_| n += 1));
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Population standard deviation (divides by N, not N-1).
pub fn population_sd(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values.iter().copied());
    let var = sum(values.iter().map(|v| (v - m) * (v - m))) / values.len() as f64;
    var.max(0.0).sqrt()
}

/// Logistic sigmoid, evaluated in the numerically stable branch form.
pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_matches_naive_on_small_input() {
        let v = [1.0, 2.0, 3.5, -1.25];
        assert_eq!(sum(v.iter().copied()), 5.25);
    }

    #[test]
    fn compensated_sum_beats_naive_on_adversarial_input() {
        // 1 + 1e-16 repeated: naive accumulation drops every tiny term.
        let mut values = vec![1.0f64];
        values.extend(std::iter::repeat(1e-16).take(10_000));
        let s = sum(values.iter().copied());
        assert!((s - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn population_sd_of_constant_is_zero() {
        assert_eq!(population_sd(&[0.7, 0.7, 0.7]), 0.0);
    }

    #[test]
    fn sd_matches_two_pass_oracle() {
        let v = [0.1, 0.9, 0.4, 0.4, 0.2];
        let m: f64 = v.iter().sum::<f64>() / 5.0;
        let var: f64 = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 5.0;
        assert!((population_sd(&v) - var.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_midpoint_and_symmetry() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
    }
}
