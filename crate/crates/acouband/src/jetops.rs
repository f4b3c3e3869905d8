//! Coefficient-slice kernels shared by the hot paths (assembly, FMM).

use num_complex::Complex64;

/// out += a * x
pub(crate) fn axpy(out: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// out += (a0 + a1 z) * x
pub(crate) fn mul_linear_acc(out: &mut [Complex64], a0: Complex64, a1: Complex64, x: &[Complex64]) {
    let n = out.len();
    for i in 0..n {
        let mut v = a0 * x[i];
        if i >= 1 {
            v += a1 * x[i - 1];
        }
        out[i] += v;
    }
}

/// out += (a0 + a1 z + a2 z^2) * x
pub(crate) fn mul_quadratic_acc(
    out: &mut [Complex64],
    a0: Complex64,
    a1: Complex64,
    a2: Complex64,
    x: &[Complex64],
) {
    let n = out.len();
    for i in 0..n {
        let mut v = a0 * x[i];
        if i >= 1 {
            v += a1 * x[i - 1];
        }
        if i >= 2 {
            v += a2 * x[i - 2];
        }
        out[i] += v;
    }
}

/// out += a (*) b, truncated Cauchy convolution.
pub(crate) fn conv_acc(out: &mut [Complex64], a: &[Complex64], b: &[Complex64]) {
    let n = out.len();
    for i in 0..n.min(a.len()) {
        let ai = a[i];
        if ai == Complex64::ZERO {
            continue;
        }
        for j in 0..(n - i).min(b.len()) {
            out[i + j] += ai * b[j];
        }
    }
}
