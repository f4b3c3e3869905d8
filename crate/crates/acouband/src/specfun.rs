//! Real-argument Bessel and Hankel function sequences for integer orders.
//!
//! Order-zero/one values come from the Cephes port in `spec_math`; higher
//! orders use the standard stable recurrences (downward Miller recursion for
//! `J_n`, upward recursion for `Y_n`).

use crate::error::{Error, Result};
use num_complex::Complex64;
use spec_math::Bessel;

/// `J_0(x) .. J_nmax(x)` for `x > 0`.
pub fn bessel_j_seq(nmax: usize, x: f64) -> Result<Vec<f64>> {
    if !(x > 0.0) {
        return Err(Error::NonPositiveArgument(x));
    }
    if x < 0.25 {
        return Ok(bessel_j_series(nmax, x));
    }
    let j0 = x.bessel_j0();
    let j1 = x.bessel_j1();
    if nmax == 0 {
        return Ok(vec![j0]);
    }
    if nmax == 1 {
        return Ok(vec![j0, j1]);
    }
    // Downward Miller recursion, rescaled to avoid overflow, anchored on the
    // larger of |J0|, |J1| (they cannot both be near a zero).
    let start = nmax + 18 + (x as usize);
    let mut vals = vec![0.0_f64; start + 2];
    vals[start + 1] = 0.0;
    vals[start] = 1e-30;
    for n in (1..=start).rev() {
        let v = 2.0 * n as f64 / x * vals[n] - vals[n + 1];
        vals[n - 1] = v;
        if v.abs() > 1e250 {
            let inv = 1e-250;
            for w in vals[n - 1..].iter_mut() {
                *w *= inv;
            }
        }
    }
    let scale = if j0.abs() >= j1.abs() {
        j0 / vals[0]
    } else {
        j1 / vals[1]
    };
    vals.truncate(nmax + 1);
    for v in vals.iter_mut() {
        *v *= scale;
    }
    Ok(vals)
}

/// Ascending series, reliable for small arguments where Miller would overflow.
fn bessel_j_series(nmax: usize, x: f64) -> Vec<f64> {
    let half = 0.5 * x;
    let q = -half * half;
    let mut out = Vec::with_capacity(nmax + 1);
    let mut leading = 1.0_f64; // (x/2)^n / n!
    for n in 0..=nmax {
        let mut term = leading;
        let mut sum = term;
        for k in 1..40 {
            term *= q / (k as f64 * (n + k) as f64);
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        out.push(sum);
        leading *= half / (n + 1) as f64;
    }
    out
}

/// `Y_0(x) .. Y_nmax(x)` for `x > 0` (upward recursion is stable for Y).
pub fn bessel_y_seq(nmax: usize, x: f64) -> Result<Vec<f64>> {
    if !(x > 0.0) {
        return Err(Error::NonPositiveArgument(x));
    }
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(x.bessel_y0());
    if nmax >= 1 {
        out.push(x.bessel_y1());
    }
    for n in 1..nmax {
        let next = 2.0 * n as f64 / x * out[n] - out[n - 1];
        out.push(next);
    }
    Ok(out)
}

/// `H^(1)_0(x) .. H^(1)_nmax(x)` for `x > 0`.
pub fn hankel1_seq(nmax: usize, x: f64) -> Result<Vec<Complex64>> {
    let j = bessel_j_seq(nmax, x)?;
    let y = bessel_y_seq(nmax, x)?;
    Ok(j
        .into_iter()
        .zip(y)
        .map(|(re, im)| Complex64::new(re, im))
        .collect())
}

/// Signed-order lookup using `J_{-n} = (-1)^n J_n` (same identity holds for Y and H).
#[inline]
pub fn signed_order<T: Copy + std::ops::Neg<Output = T>>(seq: &[T], n: i64) -> T {
    let idx = n.unsigned_abs() as usize;
    let v = seq[idx];
    if n < 0 && n % 2 != 0 {
        -v
    } else {
        v
    }
}
