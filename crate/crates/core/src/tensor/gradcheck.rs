use super::{Network, Tensor};

/// Gradients smaller than this are compared on an absolute rather than a
/// relative scale; below it, central differences are dominated by
/// truncation error rather than by any backprop defect.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, GRAD_CHECK_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Fixed regression target for output unit `k`, so the check loss is not
/// symmetric across units.
fn check_target(k: usize) -> f64 {
    0.5 + 0.4 * ((k as f64) * 0.731).sin()
}

/// `loss(plus) − loss(minus)` summed per unit, avoiding the cancellation
/// of subtracting two large totals.
fn check_loss_delta(plus: &[f64], minus: &[f64]) -> f64 {
    plus.iter()
        .zip(minus)
        .enumerate()
        .map(|(k, (p, m))| 0.5 * (p - m) * (p + m - 2.0 * check_target(k)))
        .sum()
}

/// Largest relative discrepancy between backpropagated gradients and
/// central finite differences, over every parameter, for the smooth loss
/// `½ Σ (y_k − t_k)²`.
pub fn grad_check(net: &Network, input: &Tensor, epsilon: f64) -> f64 {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let trace = net.trace(input).expect("input must match the network");
    let loss_grad: Vec<f64> = trace
        .output()
        .iter()
        .enumerate()
        .map(|(k, y)| y - check_target(k))
        .collect();
    let (tape, _) = net.backprop(&trace, &loss_grad, false).expect("trace matches");
    let analytic = tape.flatten();

    let mut probe = net.clone();
    let mut params = net.parameters();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let original = params[i];
        params[i] = original + epsilon;
        probe.set_parameters(&params).unwrap();
        let plus = probe.predict(input).unwrap().into_data();
        params[i] = original - epsilon;
        probe.set_parameters(&params).unwrap();
        let minus = probe.predict(input).unwrap().into_data();
        params[i] = original;
        let numeric = check_loss_delta(&plus, &minus) / (2.0 * epsilon);
        worst = worst.max(relative_error(a, numeric));
    }
    worst
}
