use crate::error::{AdError, Result};
use crate::tensor::Tensor;

/// Central-difference gradient estimate of a scalar objective with respect
/// to one tensor argument, per coordinate:
/// `(f(x + step e_i) - f(x - step e_i)) / (2 step)`.
///
/// The objective must be pure. Invalid at kinks (e.g. |x| at 0, where the
/// symmetric estimate returns 0); callers exclude those points.
pub fn finite_diff_grad<F>(objective: F, point: &Tensor, step: f64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    if step <= 0.0 {
        return Err(AdError::shape("finite_diff_grad", "step must be positive"));
    }
    let mut grad = Tensor::zeros(point.shape());
    let mut work = point.clone();
    for i in 0..point.len() {
        let orig = work.data()[i];
        work.data_mut()[i] = orig + step;
        let fp = objective(&work)?;
        work.data_mut()[i] = orig - step;
        let fm = objective(&work)?;
        work.data_mut()[i] = orig;
        let d = (fp - fm) / (2.0 * step);
        if !d.is_finite() {
            return Err(AdError::non_finite(format!("finite_diff_grad coord {i}")));
        }
        grad.data_mut()[i] = d;
    }
    Ok(grad)
}

/// Default step for the central-difference oracles: balances truncation
/// against rounding for 64-bit arithmetic.
pub const FD_STEP: f64 = 1e-5;

/// Finite-difference approximation of a mixed Hessian-vector product:
/// `(g(p + a v) - g(p - a v)) / (2 a)` with `a = 0.01 / ||v||_2`.
///
/// `grad_fn` returns the gradient of some loss with respect to an *outer*
/// variable, evaluated at the perturbed inner parameters `p`. The result
/// approximates the mixed second derivative applied to `v`; it is exact
/// (up to rounding) whenever `grad_fn` is linear in `p`.
pub fn finite_diff_hvp<F>(grad_fn: F, params: &Tensor, direction: &Tensor) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    if params.shape() != direction.shape() {
        return Err(AdError::shape(
            "finite_diff_hvp",
            format!("{:?} vs {:?}", params.shape(), direction.shape()),
        ));
    }
    let norm = direction.norm2();
    if norm == 0.0 {
        return Err(AdError::ZeroDirection);
    }
    let alpha = 0.01 / norm;

    let mut plus = params.clone();
    plus.axpy(alpha, direction)?;
    let gp = grad_fn(&plus)?;

    let mut minus = params.clone();
    minus.axpy(-alpha, direction)?;
    let gm = grad_fn(&minus)?;

    let out = gp.zip(&gm, |a, b| (a - b) / (2.0 * alpha))?;
    if !out.all_finite() {
        return Err(AdError::non_finite("finite_diff_hvp"));
    }
    Ok(out)
}

/// Norm-wise relative error between two tensors, used by every oracle
/// comparison: `||a - b|| / max(||a||, ||b||, floor)`.
pub fn relative_error(a: &Tensor, b: &Tensor) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    let mut diff = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        diff += (x - y) * (x - y);
    }
    let diff = diff.sqrt();
    let denom = a.norm2().max(b.norm2()).max(1e-8);
    diff / denom
}
