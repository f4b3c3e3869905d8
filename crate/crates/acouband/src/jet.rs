//! Truncated Taylor series ("jets") in the angular frequency.
//!
//! A jet carries the scaled Taylor coefficients `c_n = g^(n)(w0)/n!` of a
//! frequency-dependent quantity about a fixed centre `w0`. Arithmetic on jets
//! is forward-mode automatic differentiation to the jet's order: products are
//! plain Cauchy convolutions, which is exactly why the scaled coefficients are
//! stored instead of raw derivatives.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::specfun::{bessel_j_seq, hankel1_seq, signed_order};
use num_complex::Complex64;

/// Truncated Taylor series of a complex quantity in the angular frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    center: f64,
    coeffs: Vec<Complex64>,
}

impl Jet {
    /// Builds a jet from scaled Taylor coefficients `c_n = g^(n)(w0)/n!`.
    pub fn from_coeffs(center: f64, coeffs: Vec<Complex64>) -> Self {
        assert!(!coeffs.is_empty(), "jet needs at least the order-0 coefficient");
        Self { center, coeffs }
    }

    pub fn zero(center: f64, order: usize) -> Self {
        Self {
            center,
            coeffs: vec![Complex64::ZERO; order + 1],
        }
    }

    pub fn constant(value: Complex64, center: f64, order: usize) -> Self {
        let mut coeffs = vec![Complex64::ZERO; order + 1];
        coeffs[0] = value;
        Self { center, coeffs }
    }

    /// The identity jet: `w` itself expanded at `w0`.
    pub fn omega(center: f64, order: usize) -> Self {
        let mut coeffs = vec![Complex64::ZERO; order + 1];
        coeffs[0] = Complex64::new(center, 0.0);
        if order >= 1 {
            coeffs[1] = Complex64::ONE;
        }
        Self { center, coeffs }
    }

    /// Jet of `w^2` at the centre.
    pub fn omega_squared(center: f64, order: usize) -> Self {
        let mut coeffs = vec![Complex64::ZERO; order + 1];
        coeffs[0] = Complex64::new(center * center, 0.0);
        if order >= 1 {
            coeffs[1] = Complex64::new(2.0 * center, 0.0);
        }
        if order >= 2 {
            coeffs[2] = Complex64::ONE;
        }
        Self { center, coeffs }
    }

    /// Jet of the Burton-Miller coupling `-i c / w`.
    pub fn coupling_gamma(c: f64, center: f64, order: usize) -> Self {
        let mut coeffs = Vec::with_capacity(order + 1);
        let mut pow = 1.0 / center; // (-1)^m / w0^(m+1)
        for _ in 0..=order {
            coeffs.push(Complex64::new(0.0, -c) * pow);
            pow *= -1.0 / center;
        }
        Self { center, coeffs }
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, n: usize) -> Complex64 {
        self.coeffs[n]
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Raw derivative `g^(n)(w0) = n! c_n`.
    pub fn derivative(&self, n: usize) -> Complex64 {
        self.coeffs[n] * factorial(n)
    }

    /// Truncates to a lower order (keeps `order + 1` coefficients).
    pub fn truncated(&self, order: usize) -> Jet {
        assert!(order <= self.order());
        Jet {
            center: self.center,
            coeffs: self.coeffs[..=order].to_vec(),
        }
    }

    /// Coefficient-wise conjugation: the jet of `conj(g)` for real `w`.
    pub fn conj(&self) -> Jet {
        Jet {
            center: self.center,
            coeffs: self.coeffs.iter().map(|c| c.conj()).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> Jet {
        Jet {
            center: self.center,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// Product with the linear polynomial `a0 + a1 (w - w0)`.
    pub fn mul_linear(&self, a0: Complex64, a1: Complex64) -> Jet {
        let n = self.coeffs.len();
        let mut coeffs = vec![Complex64::ZERO; n];
        for i in 0..n {
            coeffs[i] = self.coeffs[i] * a0;
            if i >= 1 {
                coeffs[i] += self.coeffs[i - 1] * a1;
            }
        }
        Jet {
            center: self.center,
            coeffs,
        }
    }

    fn check_compatible(&self, other: &Jet) -> Result<()> {
        if self.center != other.center || self.coeffs.len() != other.coeffs.len() {
            return Err(Error::JetMismatch(
                self.center,
                self.order(),
                other.center,
                other.order(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Jet) -> Jet {
        self.check_compatible(other).unwrap();
        Jet {
            center: self.center,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        self.check_compatible(other).unwrap();
        Jet {
            center: self.center,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Cauchy product truncated at the jet order.
    pub fn mul(&self, other: &Jet) -> Jet {
        self.check_compatible(other).unwrap();
        let n = self.coeffs.len();
        let mut coeffs = vec![Complex64::ZERO; n];
        for i in 0..n {
            let a = self.coeffs[i];
            if a == Complex64::ZERO {
                continue;
            }
            for j in 0..n - i {
                coeffs[i + j] += a * other.coeffs[j];
            }
        }
        Jet {
            center: self.center,
            coeffs,
        }
    }

    /// Forward-recursive division; requires a nonzero leading coefficient.
    pub fn div(&self, other: &Jet) -> Result<Jet> {
        self.check_compatible(other)?;
        let b0 = other.coeffs[0];
        if b0 == Complex64::ZERO {
            return Err(Error::ZeroLeadingCoefficient);
        }
        let n = self.coeffs.len();
        let mut coeffs = vec![Complex64::ZERO; n];
        for i in 0..n {
            let mut acc = self.coeffs[i];
            for j in 1..=i {
                acc -= other.coeffs[j] * coeffs[i - j];
            }
            coeffs[i] = acc / b0;
        }
        Ok(Jet {
            center: self.center,
            coeffs,
        })
    }

    /// Evaluates the truncated Taylor polynomial at `w`.
    pub fn eval_poly(&self, w: f64) -> Complex64 {
        let z = w - self.center;
        let mut acc = Complex64::ZERO;
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }
}

impl std::ops::Add<&Jet> for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.add(rhs)
    }
}

impl std::ops::Sub<&Jet> for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.sub(rhs)
    }
}

impl std::ops::Mul<&Jet> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.mul(rhs)
    }
}

fn factorial(n: usize) -> f64 {
    let mut f = 1.0;
    for k in 2..=n {
        f *= k as f64;
    }
    f
}

/// Taylor coefficients of `w -> F_n(w s)` for a cylinder function `F` with the
/// recurrence `d/dz F_n = (F_{n-1} - F_{n+1})/2` and `F_{-n} = (-1)^n F_n`.
///
/// Coefficient m equals `s^m / m! * (d^m/dz^m F_n)(w0 s)`, with the m-th
/// z-derivative expanded as `2^-m sum_j (-1)^j C(m,j) F_{n-m+2j}`.
fn cylinder_jet(seq: &[Complex64], n: usize, s: f64, center: f64, order: usize) -> Jet {
    let mut coeffs = Vec::with_capacity(order + 1);
    let mut prefactor = 1.0; // s^m / (2^m m!)
    let mut binom_row = vec![1.0_f64];
    for m in 0..=order {
        let mut val = Complex64::ZERO;
        for (j, &b) in binom_row.iter().enumerate() {
            let ord = n as i64 - m as i64 + 2 * j as i64;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            val += signed_order(seq, ord) * (sign * b);
        }
        coeffs.push(val * prefactor);
        // next row of Pascal's triangle and prefactor s^(m+1)/(2^(m+1) (m+1)!)
        let mut next = vec![1.0; binom_row.len() + 1];
        for j in 1..binom_row.len() {
            next[j] = binom_row[j - 1] + binom_row[j];
        }
        binom_row = next;
        prefactor *= s / (2.0 * (m + 1) as f64);
    }
    Jet::from_coeffs(center, coeffs)
}

/// Jet of `w -> H^(1)_n(w s)` at `w0`; requires `w0 s > 0`.
pub fn hankel1_jet(n: usize, s: f64, center: f64, order: usize) -> Result<Jet> {
    let z0 = center * s;
    let seq = hankel1_seq(n + order, z0)?;
    Ok(cylinder_jet(&seq, n, s, center, order))
}

/// Jets of `H^(1)_n(w s)` for every order n = 0..nmax, sharing one function
/// evaluation sweep.
pub fn hankel1_jets_upto(nmax: usize, s: f64, center: f64, order: usize) -> Result<Vec<Jet>> {
    let z0 = center * s;
    let seq = hankel1_seq(nmax + order, z0)?;
    Ok((0..=nmax)
        .map(|n| cylinder_jet(&seq, n, s, center, order))
        .collect())
}

/// Jets of `J_n(w s)` for every order n = 0..nmax.
pub fn bessel_jets_upto(nmax: usize, s: f64, center: f64, order: usize) -> Result<Vec<Jet>> {
    let z0 = center * s;
    let seq: Vec<Complex64> = bessel_j_seq(nmax + order, z0)?
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    Ok((0..=nmax)
        .map(|n| cylinder_jet(&seq, n, s, center, order))
        .collect())
}

/// Jet of `w -> J_n(w s)` at `w0`; requires `w0 s > 0`.
pub fn bessel_jet(n: usize, s: f64, center: f64, order: usize) -> Result<Jet> {
    let z0 = center * s;
    let seq: Vec<Complex64> = bessel_j_seq(n + order, z0)?
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    Ok(cylinder_jet(&seq, n, s, center, order))
}

/// Jet of a plane wave `exp(i w d.x / c)` of unit amplitude at position `x`.
///
/// Closed form: coefficient m is `(i d.x/c)^m exp(i w0 d.x/c) / m!`.
pub fn plane_wave_jet(x: Vec2, direction: Vec2, c: f64, center: f64, order: usize) -> Jet {
    let t = direction.dot(x) / c;
    let base = (Complex64::new(0.0, center * t)).exp();
    let mut coeffs = Vec::with_capacity(order + 1);
    let mut cur = base;
    coeffs.push(cur);
    for m in 1..=order {
        cur *= Complex64::new(0.0, t) / m as f64;
        coeffs.push(cur);
    }
    Jet::from_coeffs(center, coeffs)
}

/// Jets of the spatial gradient of the plane wave: `d(u_in)/dx_l = (i w d_l / c) u_in`.
pub fn plane_wave_gradient_jets(
    x: Vec2,
    direction: Vec2,
    c: f64,
    center: f64,
    order: usize,
) -> [Jet; 2] {
    let u = plane_wave_jet(x, direction, c, center, order);
    let gx = u.mul_linear(
        Complex64::new(0.0, center * direction.x / c),
        Complex64::new(0.0, direction.x / c),
    );
    let gy = u.mul_linear(
        Complex64::new(0.0, center * direction.y / c),
        Complex64::new(0.0, direction.y / c),
    );
    [gx, gy]
}

/// Jet of the plane wave's normal derivative `(i w / c)(d.n) u_in` at `x`.
pub fn plane_wave_normal_jet(
    x: Vec2,
    direction: Vec2,
    normal: Vec2,
    c: f64,
    center: f64,
    order: usize,
) -> Jet {
    let u = plane_wave_jet(x, direction, c, center, order);
    let dn = direction.dot(normal) / c;
    u.mul_linear(Complex64::new(0.0, center * dn), Complex64::new(0.0, dn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_jet(rng: &mut ChaCha8Rng, center: f64, order: usize) -> Jet {
        let coeffs = (0..=order)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Jet::from_coeffs(center, coeffs)
    }

    fn max_coeff_diff(a: &Jet, b: &Jet) -> f64 {
        a.coeffs()
            .iter()
            .zip(b.coeffs())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn mul_identity_and_monomial_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = random_jet(&mut rng, 2.0, 6);
        let one = Jet::constant(Complex64::ONE, 2.0, 6);
        assert_eq!(max_coeff_diff(&one.mul(&b), &b), 0.0);

        // (w - w0)^2 has coefficients [0, 0, 1, 0, ...]
        let mut m = Jet::zero(2.0, 5);
        m.coeffs[1] = Complex64::ONE;
        let sq = m.mul(&m);
        for (i, &c) in sq.coeffs().iter().enumerate() {
            let expect = if i == 2 { Complex64::ONE } else { Complex64::ZERO };
            assert_eq!(c, expect);
        }
    }

    #[test]
    fn mul_exponential_phases_compose() {
        // jets of exp(i w s1) * exp(i w s2) = exp(i w (s1+s2)), coefficient-wise.
        let center = 3.0;
        let order = 8;
        let a = plane_wave_jet(Vec2::new(0.7, 0.0), Vec2::new(1.0, 0.0), 1.0, center, order);
        let b = plane_wave_jet(Vec2::new(0.45, 0.0), Vec2::new(1.0, 0.0), 1.0, center, order);
        let ab = plane_wave_jet(Vec2::new(1.15, 0.0), Vec2::new(1.0, 0.0), 1.0, center, order);
        assert!(max_coeff_diff(&a.mul(&b), &ab) < 1e-12);
    }

    #[test]
    fn div_identity_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let one = Jet::constant(Complex64::ONE, 1.5, 7);
        let a = random_jet(&mut rng, 1.5, 7);
        assert!(max_coeff_diff(&a.div(&one).unwrap(), &a) < 1e-15);

        for _ in 0..50 {
            let a = random_jet(&mut rng, 1.5, 7);
            let mut b = random_jet(&mut rng, 1.5, 7);
            while b.coeffs[0].norm() <= 0.1 {
                b = random_jet(&mut rng, 1.5, 7);
            }
            let back = a.mul(&b).div(&b).unwrap();
            // The forward recursion amplifies rounding by ~(maxb/|b0|)^n.
            let maxb = b.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
            let growth = (maxb / b.coeffs[0].norm()).powi(7);
            assert!(max_coeff_diff(&back, &a) < 1e-12 + 1e-15 * growth);
        }
    }

    #[test]
    fn div_reciprocal_omega_geometric_series() {
        // 1/w at w0 = 2, K = 4: coefficients 1/2, -1/4, 1/8, -1/16, 1/32.
        let one = Jet::constant(Complex64::ONE, 2.0, 4);
        let w = Jet::omega(2.0, 4);
        let inv = one.div(&w).unwrap();
        let expect = [0.5, -0.25, 0.125, -0.0625, 0.03125];
        for (c, e) in inv.coeffs().iter().zip(expect) {
            assert_relative_eq!(c.re, e, epsilon = 1e-12);
            assert_relative_eq!(c.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn div_zero_leading_coefficient_rejected() {
        let a = Jet::constant(Complex64::ONE, 1.0, 3);
        let b = Jet::zero(1.0, 3);
        assert!(matches!(a.div(&b), Err(Error::ZeroLeadingCoefficient)));
    }

    #[test]
    fn leibniz_consistency() {
        // coefficient n of a*b equals (1/n!) sum_j C(n,j) (j! a_j)((n-j)! b_{n-j})
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_jet(&mut rng, 2.5, 8);
            let b = random_jet(&mut rng, 2.5, 8);
            let prod = a.mul(&b);
            for n in 0..=8 {
                let mut acc = Complex64::ZERO;
                let mut binom = 1.0;
                for j in 0..=n {
                    acc += a.derivative(j) * b.derivative(n - j) * binom;
                    binom = binom * (n - j) as f64 / (j + 1) as f64;
                }
                acc /= factorial(n);
                assert!((acc - prod.coeff(n)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn mul_commutative_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a = random_jet(&mut rng, 1.0, 9);
            let b = random_jet(&mut rng, 1.0, 9);
            let c = random_jet(&mut rng, 1.0, 9);
            assert!(max_coeff_diff(&a.mul(&b), &b.mul(&a)) < 1e-13);
            assert!(max_coeff_diff(&a.mul(&b).mul(&c), &a.mul(&b.mul(&c))) < 1e-13);
        }
    }

    // --- finite-difference oracle ---------------------------------------

    /// Default initial step for the m-th central difference.
    fn fd_step(m: usize) -> f64 {
        match m {
            0..=2 => 0.3,
            3..=4 => 0.6,
            5..=6 => 1.0,
            _ => 1.5,
        }
    }

    /// m-th derivative by central differences with Ridders' extrapolation:
    /// the Richardson table entry with the smallest internal discrepancy wins,
    /// which balances truncation against subtractive cancellation. `h0` is the
    /// initial step; keep `x0 - (m/2) h0` clear of any singularity of `g`.
    fn derivative_fd_step(g: &dyn Fn(f64) -> Complex64, x0: f64, m: usize, h0: f64) -> Complex64 {
        if m == 0 {
            return g(x0);
        }
        let stencil = |h: f64| -> Complex64 {
            // Central difference: sum_j (-1)^j C(m,j) g(x + (m/2 - j) h) / h^m
            let mut acc = Complex64::ZERO;
            let mut binom = 1.0;
            for j in 0..=m {
                let offset = (m as f64 / 2.0 - j as f64) * h;
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                acc += g(x0 + offset) * (sign * binom);
                binom = binom * (m - j) as f64 / (j + 1) as f64;
            }
            acc / h.powi(m as i32)
        };
        let con = 1.6_f64;
        let con2 = con * con;
        let mut h = h0;
        const NTAB: usize = 14;
        let mut table = vec![vec![Complex64::ZERO; NTAB]; NTAB];
        table[0][0] = stencil(h);
        let mut ans = table[0][0];
        let mut err = f64::MAX;
        for i in 1..NTAB {
            h /= con;
            table[0][i] = stencil(h);
            let mut fac = con2;
            for j in 1..=i {
                table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
                fac *= con2;
                let errt = (table[j][i] - table[j - 1][i])
                    .norm()
                    .max((table[j][i] - table[j - 1][i - 1]).norm());
                if errt <= err {
                    err = errt;
                    ans = table[j][i];
                }
            }
            if (table[i][i] - table[i - 1][i - 1]).norm() >= 2.0 * err {
                break;
            }
        }
        ans
    }

    fn derivative_fd(g: &dyn Fn(f64) -> Complex64, x0: f64, m: usize) -> Complex64 {
        derivative_fd_step(g, x0, m, fd_step(m))
    }

    /// FD in the frequency for functions with a branch point at w = 0: the
    /// initial step keeps all stencil points at w >= 0.4 x0.
    fn derivative_fd_positive(g: &dyn Fn(f64) -> Complex64, x0: f64, m: usize) -> Complex64 {
        let h0 = fd_step(m).min(1.2 * x0 / m.max(1) as f64);
        derivative_fd_step(g, x0, m, h0)
    }

    #[test]
    fn fd_oracle_validated_on_exponential() {
        // d^m/dz^m exp(i a z) = (i a)^m exp(i a z): check the oracle itself.
        let a = 1.3;
        let g = move |z: f64| Complex64::new(0.0, a * z).exp();
        for m in 0..=10 {
            let fd = derivative_fd(&g, 0.8, m);
            let exact = Complex64::new(0.0, a).powi(m as i32) * Complex64::new(0.0, a * 0.8).exp();
            assert!(
                (fd - exact).norm() / exact.norm() < 3e-6,
                "order {m}: fd {fd}, exact {exact}"
            );
        }
    }

    #[test]
    fn hankel_jet_low_orders_match_identities() {
        use spec_math::Bessel;
        let (s, center) = (1.5, 2.0);
        let z0 = s * center;
        let j0 = hankel1_jet(0, s, center, 1).unwrap();
        let h0 = Complex64::new(z0.bessel_j0(), z0.bessel_y0());
        let h1 = Complex64::new(z0.bessel_j1(), z0.bessel_y1());
        assert!((j0.coeff(0) - h0).norm() < 1e-14);
        // H_0' = -H_1, chain rule brings a factor s.
        assert!((j0.coeff(1) - h1 * (-s)).norm() < 1e-13);

        let b = bessel_jet(0, s, center, 1).unwrap();
        assert!((b.coeff(0).re - z0.bessel_j0()).abs() < 1e-14);
        assert!((b.coeff(1).re + s * z0.bessel_j1()).abs() < 1e-14);
    }

    #[test]
    fn hankel_jet_matches_fd_oracle() {
        use spec_math::Bessel;
        // K = 6, n = 0, w0 s = 3.
        let (s, center) = (1.0, 3.0);
        let jet = hankel1_jet(0, s, center, 6).unwrap();
        let g = move |w: f64| {
            let z = w * s;
            Complex64::new(z.bessel_j0(), z.bessel_y0())
        };
        for m in 0..=6 {
            let expect = derivative_fd_positive(&g, center, m) / factorial(m);
            let got = jet.coeff(m);
            assert!(
                (got - expect).norm() / expect.norm().max(1e-12) < 1e-5,
                "m = {m}: got {got}, fd {expect}"
            );
        }
    }

    #[test]
    fn special_jets_match_fd_to_order_ten() {
        use spec_math::Bessel;
        // Central differences in f64 degrade beyond coefficient order ~6; the
        // remaining orders of the K=10 jets are pinned by the Bessel-equation
        // residual test below.
        for &(n, s, center) in &[(0usize, 0.8, 2.5), (1, 1.4, 3.0), (3, 0.6, 4.0)] {
            let hj = hankel1_jet(n, s, center, 10).unwrap();
            let bj = bessel_jet(n, s, center, 10).unwrap();
            let gh = move |w: f64| {
                let z = w * s;
                Complex64::new(z.bessel_jv(n as f64), z.bessel_yv(n as f64))
            };
            let gb = move |w: f64| Complex64::new((w * s).bessel_jv(n as f64), 0.0);
            for m in 0..=6 {
                let eh = derivative_fd_positive(&gh, center, m) / factorial(m);
                let eb = derivative_fd_positive(&gb, center, m) / factorial(m);
                assert!(
                    (hj.coeff(m) - eh).norm() / eh.norm().max(1e-10) < 1e-5,
                    "hankel n={n} m={m}"
                );
                assert!(
                    (bj.coeff(m) - eb).norm() / eb.norm().max(1e-10) < 1e-5,
                    "bessel n={n} m={m}"
                );
            }
        }
    }

    /// Exact derivative of a jet: coefficient shift (d/dw drops one order).
    fn jet_derivative(j: &Jet) -> Jet {
        let order = j.order();
        let coeffs = (1..=order)
            .map(|m| j.coeff(m) * m as f64)
            .collect::<Vec<_>>();
        Jet::from_coeffs(j.center(), coeffs)
    }

    #[test]
    fn special_jets_satisfy_bessel_equation_to_order_ten() {
        // F(w) = C_n(w s) solves w^2 F'' + w F' + (s^2 w^2 - n^2) F = 0,
        // which pins every Taylor coefficient given the first two.
        for &(n, s, center) in &[(0usize, 0.8, 2.5), (1, 1.4, 3.0), (4, 0.6, 4.0)] {
            for jet in [
                hankel1_jet(n, s, center, 12).unwrap(),
                bessel_jet(n, s, center, 12).unwrap(),
            ] {
                let order = jet.order() - 2;
                let f = jet.truncated(order);
                let df = jet_derivative(&jet).truncated(order);
                let ddf = jet_derivative(&jet_derivative(&jet));
                let w = Jet::omega(center, order);
                let w2 = Jet::omega_squared(center, order);
                let n2 = Complex64::new((n * n) as f64, 0.0);
                let residual = w2
                    .mul(&ddf)
                    .add(&w.mul(&df))
                    .add(&w2.scale(Complex64::new(s * s, 0.0)).sub(&Jet::constant(n2, center, order)).mul(&f));
                let scale: f64 = jet.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
                for m in 0..=order {
                    assert!(
                        residual.coeff(m).norm() < 1e-10 * scale.max(1.0) * (center * center),
                        "n={n} m={m}: residual {}",
                        residual.coeff(m).norm()
                    );
                }
            }
        }
    }

    #[test]
    fn bessel_jet_order_six_fd() {
        use spec_math::Bessel;
        let (s, center) = (1.0, 3.0);
        let jet = bessel_jet(0, s, center, 6).unwrap();
        let g = move |w: f64| Complex64::new((w * s).bessel_j0(), 0.0);
        for m in 0..=6 {
            let expect = derivative_fd_positive(&g, center, m) / factorial(m);
            assert!(
                (jet.coeff(m) - expect).norm() / expect.norm().max(1e-12) < 1e-6,
                "m = {m}"
            );
        }
    }

    #[test]
    fn hankel_jet_rejects_nonpositive_argument() {
        assert!(hankel1_jet(0, 1.0, 0.0, 3).is_err());
        assert!(bessel_jet(0, -2.0, 1.0, 3).is_err());
    }

    #[test]
    fn plane_wave_jet_at_origin_is_one() {
        let j = plane_wave_jet(Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), 1.0, 3.0, 5);
        assert_eq!(j.coeff(0), Complex64::ONE);
        for m in 1..=5 {
            assert_eq!(j.coeff(m), Complex64::ZERO);
        }
    }

    #[test]
    fn plane_wave_jet_closed_form() {
        // K = 3 at x = (0,1), d = (0,1), c = 1, w0 = 3: coefficients i^m e^{3i}/m!.
        let j = plane_wave_jet(Vec2::new(0.0, 1.0), Vec2::new(0.0, 1.0), 1.0, 3.0, 3);
        let base = Complex64::new(0.0, 3.0).exp();
        for m in 0..=3 {
            let expect = Complex64::new(0.0, 1.0).powi(m as i32) * base / factorial(m);
            assert!((j.coeff(m) - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn plane_wave_normal_jet_vs_fd() {
        let x = Vec2::new(0.4, -0.3);
        let d = Vec2::new(0.6, 0.8);
        let n = Vec2::new(-0.8, 0.6);
        let c = 1.3;
        let center = 2.0;
        let qj = plane_wave_normal_jet(x, d, n, c, center, 5);
        let g = move |w: f64| {
            // analytic normal derivative (i w / c)(d.n) e^{i w d.x / c}
            let phase = Complex64::new(0.0, w * d.dot(x) / c).exp();
            Complex64::new(0.0, w / c * d.dot(n)) * phase
        };
        for m in 0..=5 {
            let expect = derivative_fd(&g, center, m) / factorial(m);
            assert!(
                (qj.coeff(m) - expect).norm() / expect.norm().max(1e-12) < 1e-8,
                "m = {m}"
            );
        }
    }
}
