//! Principal branch of the Lambert W function.

use std::f64::consts::E;

use crate::error::NumericError;

const INV_E: f64 = 1.0 / E;
const MAX_ITER: usize = 50;
const TOL: f64 = 1e-14;

/// Solves `w * exp(w) = x` for `w >= -1`.
///
/// Arguments a hair below `-1/e` (within 1e-15) are treated as the branch
/// point.
pub fn lambert_w0(x: f64) -> Result<f64, NumericError> {
    if x.is_nan() {
        return Err(NumericError::LambertDomain(x));
    }
    let offset = x + INV_E;
    if offset < -1e-15 {
        return Err(NumericError::LambertDomain(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if offset <= 0.0 {
        return Ok(-1.0);
    }
    if offset < 1e-10 {
        // Branch-point expansion is already exact to rounding here, and Halley
        // loses accuracy as w + 1 -> 0.
        return Ok(branch_series(offset));
    }

    let mut w = initial_guess(x, offset);
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let dw = f / denom;
        w -= dw;
        if dw.abs() <= TOL * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w.max(-1.0))
}

fn branch_series(offset: f64) -> f64 {
    let p = (2.0 * E * offset).sqrt();
    -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
}

fn initial_guess(x: f64, offset: f64) -> f64 {
    if x < -0.25 {
        branch_series(offset)
    } else if x < 3.0 {
        // Padé-like start that is good to a few percent on this range.
        let l = x.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}
