//! Closed-form reference solutions used to validate the numerical solvers.

use crate::geom::Vec2;
use crate::specfun::{bessel_j_seq, bessel_y_seq, hankel1_seq};
use num_complex::Complex64;

/// Series solution for plane-wave scattering by one sound-hard circular
/// cylinder.
#[derive(Debug, Clone)]
pub struct SoundHardCylinder {
    pub center: Vec2,
    pub radius: f64,
    pub direction: Vec2,
    pub amplitude: f64,
    pub c: f64,
}

impl SoundHardCylinder {
    fn terms(&self, k: f64) -> usize {
        (k * self.radius).ceil() as usize + 25
    }

    /// Derivatives `J'_m(z)` and `H'_m(z)` for m = 0..nmax.
    fn radial_derivatives(nmax: usize, z: f64) -> (Vec<f64>, Vec<Complex64>) {
        let j = bessel_j_seq(nmax + 1, z).unwrap();
        let y = bessel_y_seq(nmax + 1, z).unwrap();
        let h: Vec<Complex64> = j
            .iter()
            .zip(&y)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        let mut jp = Vec::with_capacity(nmax + 1);
        let mut hp = Vec::with_capacity(nmax + 1);
        for m in 0..=nmax {
            if m == 0 {
                jp.push(-j[1]);
                hp.push(-h[1]);
            } else {
                jp.push(0.5 * (j[m - 1] - j[m + 1]));
                hp.push(0.5 * (h[m - 1] - h[m + 1]));
            }
        }
        (jp, hp)
    }

    /// Total boundary trace at polar angle `phi` measured from the incidence
    /// direction: `u(a, phi) = (2i/(pi k a)) sum_m i^m e^{i m phi} / H'_m(ka)`
    /// (Wronskian-reduced form of the Neumann series).
    pub fn boundary_field(&self, omega: f64, phi: f64) -> Complex64 {
        let k = omega / self.c;
        let ka = k * self.radius;
        let nmax = self.terms(k);
        let (_, hp) = Self::radial_derivatives(nmax, ka);
        let mut sum = Complex64::ONE / hp[0];
        for m in 1..=nmax {
            let im = Complex64::new(0.0, 1.0).powu(m as u32);
            sum += im * (2.0 * (m as f64 * phi).cos()) / hp[m];
        }
        let phase = self.incident_phase(omega);
        phase * sum * Complex64::new(0.0, 2.0 / (std::f64::consts::PI * ka))
    }

    /// Total field at radius `r >= a`, polar angle `phi` from the incidence
    /// direction. The incident wave is evaluated in closed form; only the
    /// scattered series (which converges on the scale of `ka`, not `kr`) is
    /// summed.
    pub fn exterior_field(&self, omega: f64, r: f64, phi: f64) -> Complex64 {
        let k = omega / self.c;
        let ka = k * self.radius;
        let kr = k * r;
        let nmax = self.terms(k);
        let (jp, hp) = Self::radial_derivatives(nmax, ka);
        let j = bessel_j_seq(nmax, kr).unwrap();
        let y = bessel_y_seq(nmax, kr).unwrap();
        let mut scattered = Complex64::ZERO;
        for m in 0..=nmax {
            let hm = Complex64::new(j[m], y[m]);
            let coeff = -(jp[m] / hp[m]) * hm;
            let im = Complex64::new(0.0, 1.0).powu(m as u32);
            let weight = if m == 0 { 1.0 } else { 2.0 * (m as f64 * phi).cos() };
            scattered += im * coeff * weight;
        }
        // incident wave in the cylinder frame: e^{i k r cos(phi)}
        let incident = Complex64::new(0.0, kr * phi.cos()).exp();
        self.incident_phase(omega) * (incident + scattered)
    }

    /// Field at a Cartesian point in the fluid.
    pub fn field_at(&self, omega: f64, x: Vec2) -> Complex64 {
        let rel = x - self.center;
        let r = rel.norm();
        let phi = rel.y.atan2(rel.x) - self.direction.y.atan2(self.direction.x);
        if r <= self.radius * (1.0 + 1e-12) {
            self.boundary_field(omega, phi)
        } else {
            self.exterior_field(omega, r, phi)
        }
    }

    fn incident_phase(&self, omega: f64) -> Complex64 {
        let k = omega / self.c;
        Complex64::new(self.amplitude, 0.0)
            * Complex64::new(0.0, k * self.direction.dot(self.center)).exp()
    }
}

/// Free-field Green function `G(x, y) = (i/4) H0(w |x-y| / c)`.
pub fn green_function(x: Vec2, y: Vec2, omega: f64, c: f64) -> Complex64 {
    let z = omega * x.distance(y) / c;
    let h = hankel1_seq(0, z).unwrap();
    Complex64::new(0.0, 0.25) * h[0]
}

/// Gradient of the free-field Green function with respect to `x`.
pub fn green_gradient(x: Vec2, y: Vec2, omega: f64, c: f64) -> [Complex64; 2] {
    let d = x - y;
    let r = d.norm();
    let z = omega * r / c;
    let h = hankel1_seq(1, z).unwrap();
    let factor = -Complex64::new(0.0, 0.25) * (omega / c) * h[1] / r;
    [factor * d.x, factor * d.y]
}

/// First-order (Born) estimate of the response sensitivity in free field:
/// with no scatterer present, the primal field is the incident wave and the
/// adjoint field is the free-field Green function, so the sensitivity of the
/// observed pressure to a small rigid disc at `x` is available in closed
/// form.
pub fn free_field_dt_response(
    x: Vec2,
    x_obs: Vec2,
    direction: Vec2,
    amplitude: f64,
    c: f64,
    omega: f64,
) -> Complex64 {
    let k = omega / c;
    let u_in =
        Complex64::new(amplitude, 0.0) * Complex64::new(0.0, k * direction.dot(x)).exp();
    let grad_u = [
        Complex64::new(0.0, k * direction.x) * u_in,
        Complex64::new(0.0, k * direction.y) * u_in,
    ];
    let g = green_function(x, x_obs, omega, c);
    let grad_g = green_gradient(x, x_obs, omega, c);
    2.0 * (grad_g[0] * grad_u[0] + grad_g[1] * grad_u[1]) - k * k * g * u_in
}
