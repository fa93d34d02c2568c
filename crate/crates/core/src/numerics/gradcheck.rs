use super::NumericsError;

/// Largest `|g_ad − g_fd| / max(1, |g_fd|)` over all coordinates, where
/// `g_fd` is the central difference of `f` with step `eps`.
///
/// `grad` is the analytic gradient of `f` at `params`.
pub fn finite_diff_check(
    f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    grad: &[f64],
    eps: f64,
) -> Result<f64, NumericsError> {
    let coords: Vec<usize> = (0..params.len()).collect();
    finite_diff_check_coords(f, params, grad, eps, &coords)
}

/// [`finite_diff_check`] restricted to the listed coordinates.
pub fn finite_diff_check_coords(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    grad: &[f64],
    eps: f64,
    coords: &[usize],
) -> Result<f64, NumericsError> {
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(NumericsError::InvalidStep(eps));
    }
    assert_eq!(params.len(), grad.len(), "gradient length mismatch");
    let mut x = params.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = x[i];
        x[i] = orig + eps;
        let up = f(&x);
        x[i] = orig - eps;
        let down = f(&x);
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(NumericsError::NonFinite { coord: i });
        }
        let fd = (up - down) / (2.0 * eps);
        let err = (grad[i] - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
