/// Absolute relative error `|pred - truth| / max(truth, floor)` and its
/// derivative with respect to `pred`. At `pred == truth` the subgradient 0
/// is returned.
pub fn relative_error_loss(pred: f64, truth: f64, floor: f64) -> (f64, f64) {
    debug_assert!(floor > 0.0);
    let denom = truth.max(floor);
    let diff = pred - truth;
    let grad = if diff > 0.0 {
        1.0 / denom
    } else if diff < 0.0 {
        -1.0 / denom
    } else {
        0.0
    };
    (diff.abs() / denom, grad)
}

/// `|ln((pred + 1) / (truth + 1))|`, the log of the q-error on counts, with
/// its derivative with respect to `pred`. Requires `pred, truth >= 0`.
pub fn log_ratio_loss(pred: f64, truth: f64) -> (f64, f64) {
    let d = (pred + 1.0).ln() - (truth + 1.0).ln();
    let grad = if d > 0.0 {
        1.0 / (pred + 1.0)
    } else if d < 0.0 {
        -1.0 / (pred + 1.0)
    } else {
        0.0
    };
    (d.abs(), grad)
}
