//! Finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_coord: Option<usize>,
    pub passed: bool,
}

/// Relative-error denominator floor. Below this scale the central-difference
/// estimate is dominated by cancellation noise, not gradient error.
const REL_FLOOR: f64 = 1e-6;

/// Compare the analytic gradient of `f` at `params` against central finite
/// differences, coordinate by coordinate.
///
/// `f` must be deterministic and return `(loss, grad)` with `grad` shaped
/// like `params`. An empty parameter matrix passes vacuously.
pub fn grad_check<F>(f: F, params: &Matrix, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&Matrix) -> Result<(f64, Matrix)>,
{
    let (loss, grad) = f(params)?;
    if !loss.is_finite() {
        return Err(Error::Numerical("grad_check: non-finite loss".into()));
    }
    if !params.same_shape(&grad) {
        return Err(Error::ShapeMismatch {
            op: "grad_check",
            expected: format!("{:?}", params.shape()),
            got: format!("{:?}", grad.shape()),
        });
    }

    let mut max_rel = 0.0;
    let mut worst = None;
    for i in 0..params.data().len() {
        let mut plus = params.clone();
        plus.data_mut()[i] += eps;
        let mut minus = params.clone();
        minus.data_mut()[i] -= eps;
        let (lp, _) = f(&plus)?;
        let (lm, _) = f(&minus)?;
        if !lp.is_finite() || !lm.is_finite() {
            return Err(Error::Numerical("grad_check: non-finite loss".into()));
        }
        let fd = (lp - lm) / (2.0 * eps);
        let g = grad.data()[i];
        let rel = (fd - g).abs() / g.abs().max(fd.abs()).max(REL_FLOOR);
        if rel > max_rel {
            max_rel = rel;
            worst = Some(i);
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        worst_coord: worst,
        passed: max_rel < tol,
    })
}
