/// Expected generalisation gap bound `sqrt(2 sigma^2 I / n)` for a
/// `sigma`-sub-Gaussian loss. A loss clipped to `[0, a]` is `a/2`-sub-Gaussian.
pub fn pac_bayes_bound(sigma: f64, n: usize, iiw: f64) -> f64 {
    assert!(n >= 1, "bound needs at least one sample");
    (2.0 * sigma * sigma * iiw.max(0.0) / n as f64).sqrt()
}
