//! Rational approximation of frequency responses and closed-form band
//! integration.
//!
//! All polynomial coefficients live in the shifted variable `w - w0`; raw
//! powers of `w` at band centres around 3 with degree 10 are numerically
//! hostile.

use crate::error::{Error, Result};
use crate::jet::Jet;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

/// Relative residual above which a fit is flagged degenerate.
const FIT_RESIDUAL_TOL: f64 = 1e-10;
/// Relative threshold for trimming spurious trailing denominator coefficients.
const TRIM_TOL: f64 = 1e-12;

/// `[M, N]` rational approximant of a complex frequency response about `w0`,
/// with the normalisation `q_0 = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct PadeApproximant {
    pub omega0: f64,
    pub p: Vec<Complex64>,
    pub q: Vec<Complex64>,
}

impl PadeApproximant {
    pub fn numerator_degree(&self) -> usize {
        self.p.len() - 1
    }

    pub fn denominator_degree(&self) -> usize {
        self.q.len() - 1
    }

    pub fn eval(&self, w: f64) -> Result<Complex64> {
        let z = Complex64::new(w - self.omega0, 0.0);
        let num = horner(&self.p, z);
        let den = horner(&self.q, z);
        if den.norm() < 1e-300 {
            return Err(Error::PoleEvaluation(den.norm()));
        }
        Ok(num / den)
    }
}

/// Real-coefficient rational form of the squared response `f = |u|^2 / 2`.
#[derive(Debug, Clone, Serialize)]
pub struct RationalResponse {
    pub omega0: f64,
    pub p_hat: Vec<f64>,
    pub q_hat: Vec<f64>,
}

impl RationalResponse {
    pub fn eval(&self, w: f64) -> Result<f64> {
        let z = w - self.omega0;
        let num = horner_real(&self.p_hat, z);
        let den = horner_real(&self.q_hat, z);
        if den.abs() < 1e-300 {
            return Err(Error::PoleEvaluation(den.abs()));
        }
        Ok(num / den)
    }
}

/// Partial fraction decomposition: a real polynomial part plus simple poles.
///
/// The pole set of a real-valued response is closed under conjugation, which
/// keeps the analytic band integral real by construction.
#[derive(Debug, Clone, Serialize)]
pub struct PartialFractionForm {
    pub omega0: f64,
    /// Polynomial part coefficients `r_i` in `(w - w0)^i`.
    pub poly: Vec<f64>,
    pub poles: Vec<Complex64>,
    pub residues: Vec<Complex64>,
}

impl PartialFractionForm {
    /// Shortest distance from a pole to the real segment `[w1, w2]`.
    fn pole_band_distance(pole: Complex64, w1: f64, w2: f64) -> f64 {
        if pole.re >= w1 && pole.re <= w2 {
            pole.im.abs()
        } else {
            let d1 = (pole - Complex64::new(w1, 0.0)).norm();
            let d2 = (pole - Complex64::new(w2, 0.0)).norm();
            d1.min(d2)
        }
    }

    /// Exact primitive evaluated at the band endpoints.
    ///
    /// Conjugate pole pairs combine to `2 Re(A Log(w - a))`, realised here by
    /// taking the real part of each pole term; the principal branch is safe
    /// because no pole may sit on the band (checked) and `w` stays real.
    pub fn integrate(&self, w1: f64, w2: f64) -> Result<f64> {
        let width = w2 - w1;
        for &pole in &self.poles {
            let d = Self::pole_band_distance(pole, w1, w2);
            if d < 1e-8 * width {
                return Err(Error::PoleNearBand {
                    pole_re: pole.re,
                    pole_im: pole.im,
                    distance: d,
                });
            }
            if d < 1e-3 * width {
                log::warn!(
                    "pole {:.6}+{:.6}i within {:.3e} of band [{}, {}]",
                    pole.re,
                    pole.im,
                    d,
                    w1,
                    w2
                );
            }
        }
        let mut total = 0.0;
        let (z1, z2) = (w1 - self.omega0, w2 - self.omega0);
        for (i, &r) in self.poly.iter().enumerate() {
            let k = (i + 1) as i32;
            total += r / k as f64 * (z2.powi(k) - z1.powi(k));
        }
        for (&pole, &res) in self.poles.iter().zip(&self.residues) {
            let log2 = (Complex64::new(w2, 0.0) - pole).ln();
            let log1 = (Complex64::new(w1, 0.0) - pole).ln();
            total += (res * (log2 - log1)).re;
        }
        Ok(total)
    }

    /// Pointwise value, for diagnostics and oracle comparisons.
    pub fn eval(&self, w: f64) -> f64 {
        let z = w - self.omega0;
        let mut v = horner_real(&self.poly, z);
        for (&pole, &res) in self.poles.iter().zip(&self.residues) {
            v += (res / (Complex64::new(w, 0.0) - pole)).re;
        }
        v
    }
}

fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::ZERO;
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

fn horner_real(coeffs: &[f64], z: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

/// Unrestarted GMRES on a dense square system; at most `n` steps are needed
/// for an `n x n` system, and the minimal-residual iterate stays meaningful
/// when the matrix is singular (degenerate rational inputs).
pub(crate) fn gmres_solve(
    a: &DMatrix<Complex64>,
    b: &DVector<Complex64>,
    tol: f64,
) -> (DVector<Complex64>, f64) {
    let n = b.len();
    let beta = b.norm();
    if beta == 0.0 {
        return (DVector::zeros(n), 0.0);
    }
    let max_iter = n;
    let mut basis: Vec<DVector<Complex64>> = vec![b / Complex64::new(beta, 0.0)];
    let mut h = DMatrix::<Complex64>::zeros(max_iter + 1, max_iter);
    let mut g = DVector::<Complex64>::zeros(max_iter + 1);
    g[0] = Complex64::new(beta, 0.0);
    let mut cos = vec![Complex64::ZERO; max_iter];
    let mut sin = vec![Complex64::ZERO; max_iter];
    let mut k_used = 0;

    for k in 0..max_iter {
        let mut w = a * &basis[k];
        for i in 0..=k {
            let hik = basis[i].dotc(&w);
            h[(i, k)] = hik;
            w -= &basis[i] * hik;
        }
        let wnorm = w.norm();
        h[(k + 1, k)] = Complex64::new(wnorm, 0.0);
        // Apply accumulated rotations to the new column.
        for i in 0..k {
            let t = cos[i] * h[(i, k)] + sin[i] * h[(i + 1, k)];
            h[(i + 1, k)] = -sin[i].conj() * h[(i, k)] + cos[i] * h[(i + 1, k)];
            h[(i, k)] = t;
        }
        // New rotation to annihilate the subdiagonal.
        let (alpha, betak) = (h[(k, k)], h[(k + 1, k)]);
        let denom = (alpha.norm_sqr() + betak.norm_sqr()).sqrt();
        if denom == 0.0 {
            cos[k] = Complex64::ONE;
            sin[k] = Complex64::ZERO;
        } else if alpha.norm() == 0.0 {
            cos[k] = Complex64::ZERO;
            sin[k] = Complex64::ONE;
        } else {
            cos[k] = Complex64::new(alpha.norm() / denom, 0.0);
            sin[k] = (alpha / alpha.norm()) * betak.conj() / denom;
        }
        h[(k, k)] = cos[k] * alpha + sin[k] * betak;
        h[(k + 1, k)] = Complex64::ZERO;
        let gk = g[k];
        g[k] = cos[k] * gk;
        g[k + 1] = -sin[k].conj() * gk;
        k_used = k + 1;
        if g[k + 1].norm() <= tol * beta || wnorm < 1e-300 {
            break;
        }
        basis.push(w / Complex64::new(wnorm, 0.0));
    }

    // Back substitution on the triangularised Hessenberg system.
    let mut y = vec![Complex64::ZERO; k_used];
    for i in (0..k_used).rev() {
        let mut acc = g[i];
        for j in i + 1..k_used {
            acc -= h[(i, j)] * y[j];
        }
        y[i] = if h[(i, i)].norm() > 1e-300 {
            acc / h[(i, i)]
        } else {
            Complex64::ZERO
        };
    }
    let mut x = DVector::<Complex64>::zeros(n);
    for (j, &yj) in y.iter().enumerate() {
        x += &basis[j] * yj;
    }
    let residual = (b - a * &x).norm();
    (x, residual)
}

/// Outcome report attached to a fit.
#[derive(Debug, Clone, Copy)]
pub struct FitReport {
    /// Relative residual of the denominator linear system.
    pub residual: f64,
    pub degenerate: bool,
}

/// Fits the `[m, n]` rational approximant from scaled Taylor coefficients
/// `a_0 .. a_{m+n}`.
///
/// The denominator coefficients solve the lower block of the linear system
/// `p_i = a_i + sum_j a_{i-j} q_j` (rows with `p_i = 0`); the numerator then
/// follows by forward substitution. Trailing denominator coefficients that
/// vanish to rounding are trimmed so downstream root finding stays stable.
pub fn fit(taylor: &[Complex64], m: usize, n: usize, omega0: f64) -> (PadeApproximant, FitReport) {
    assert_eq!(
        taylor.len(),
        m + n + 1,
        "need exactly m + n + 1 Taylor coefficients"
    );
    let a = |i: i64| -> Complex64 {
        if i < 0 {
            Complex64::ZERO
        } else {
            taylor[i as usize]
        }
    };
    let (q, residual) = if n == 0 {
        (vec![Complex64::ONE], 0.0)
    } else {
        let mut mat = DMatrix::<Complex64>::zeros(n, n);
        let mut rhs = DVector::<Complex64>::zeros(n);
        for r in 0..n {
            let i = (m + 1 + r) as i64;
            for c in 0..n {
                let j = (c + 1) as i64;
                if j <= i {
                    mat[(r, c)] = a(i - j);
                }
            }
            rhs[r] = -a(i);
        }
        let scale = rhs.norm();
        let (x, res) = gmres_solve(&mat, &rhs, 1e-14);
        let mut q = Vec::with_capacity(n + 1);
        q.push(Complex64::ONE);
        q.extend(x.iter().copied());
        (q, if scale > 0.0 { res / scale } else { 0.0 })
    };
    let mut p = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let mut v = a(i as i64);
        for j in 1..=n.min(i) {
            v += a((i - j) as i64) * q[j];
        }
        p.push(v);
    }
    let mut q = q;
    trim_trailing(&mut q);
    let report = FitReport {
        residual,
        degenerate: residual > FIT_RESIDUAL_TOL,
    };
    (PadeApproximant { omega0, p, q }, report)
}

fn trim_trailing(q: &mut Vec<Complex64>) {
    let maxabs = q.iter().map(|c| c.norm()).fold(0.0, f64::max);
    while q.len() > 1 && q.last().unwrap().norm() <= TRIM_TOL * maxabs {
        q.pop();
    }
}

/// Fit with the documented degenerate-fit fallback: retry once at
/// `[m-1, n-1]`, then surface the error.
pub fn fit_with_fallback(
    taylor: &[Complex64],
    m: usize,
    n: usize,
    omega0: f64,
) -> Result<PadeApproximant> {
    let (pade, report) = fit(&taylor[..=m + n], m, n, omega0);
    if !report.degenerate {
        return Ok(pade);
    }
    log::warn!(
        "degenerate [{}, {}] fit (residual {:.3e}); retrying at [{}, {}]",
        m,
        n,
        report.residual,
        m - 1,
        n - 1
    );
    if m == 0 || n == 0 {
        return Err(Error::DegenerateFit {
            residual: report.residual,
            m,
            n,
        });
    }
    let (pade, report) = fit(&taylor[..=m + n - 2], m - 1, n - 1, omega0);
    if report.degenerate {
        return Err(Error::DegenerateFit {
            residual: report.residual,
            m: m - 1,
            n: n - 1,
        });
    }
    Ok(pade)
}

/// Polynomial division `p/q = r + p'/q` (numerator degree below the
/// denominator's afterwards); requires `deg p >= deg q` and `q_N != 0`.
pub fn poly_divide(p: &[Complex64], q: &[Complex64]) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let m = p.len() - 1;
    let n = q.len() - 1;
    assert!(m >= n, "division needs numerator degree >= denominator degree");
    let qmax = q.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if q[n].norm() <= 1e-14 * qmax {
        return Err(Error::ZeroLeadingDenominator);
    }
    let mut work = p.to_vec();
    let mut r = vec![Complex64::ZERO; m - n + 1];
    for i in (0..=m - n).rev() {
        let ri = work[i + n] / q[n];
        r[i] = ri;
        for j in 0..=n {
            work[i + j] -= ri * q[j];
        }
    }
    work.truncate(n.max(1));
    Ok((r, work))
}

/// All roots of `sum_i q_i z^i` by the Aberth-Ehrlich simultaneous iteration
/// (the cubically convergent variant of the Durand-Kerner scheme), shifted
/// back from `z = w - w0` to `w`.
pub fn roots_dka(q: &[Complex64], omega0: f64) -> Result<Vec<Complex64>> {
    let n = q.len() - 1;
    assert!(n >= 1, "root finding needs degree >= 1");
    let lead = q[n];
    assert!(lead.norm() > 0.0, "leading coefficient must be nonzero");
    let monic: Vec<Complex64> = q.iter().map(|c| c / lead).collect();

    let centroid = -monic[n - 1] / n as f64;
    let radius = 1.0 + monic.iter().take(n).map(|c| c.norm()).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..n)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64 + 0.3779;
            centroid + Complex64::from_polar(0.9 * radius, theta)
        })
        .collect();

    let eval = |x: Complex64| -> (Complex64, Complex64) {
        let mut p = Complex64::ZERO;
        let mut dp = Complex64::ZERO;
        for &c in monic.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    };

    let mut best_residual = f64::MAX;
    for _ in 0..500 {
        let mut max_step = 0.0_f64;
        let mut max_res = 0.0_f64;
        for i in 0..n {
            let (pv, dpv) = eval(z[i]);
            max_res = max_res.max(pv.norm());
            if pv == Complex64::ZERO {
                continue;
            }
            let newton = if dpv.norm() > 1e-300 {
                pv / dpv
            } else {
                // Stationary point: nudge off it.
                let nudge = Complex64::new(1e-6 * (1.0 + z[i].norm()), 1e-6);
                z[i] += nudge;
                continue;
            };
            let mut repulsion = Complex64::ZERO;
            for j in 0..n {
                if j != i {
                    let d = z[i] - z[j];
                    if d.norm() > 1e-300 {
                        repulsion += Complex64::ONE / d;
                    }
                }
            }
            let denom = Complex64::ONE - newton * repulsion;
            let step = if denom.norm() > 1e-12 {
                newton / denom
            } else {
                newton
            };
            z[i] -= step;
            max_step = max_step.max(step.norm() / (1.0 + z[i].norm()));
        }
        best_residual = best_residual.min(max_res);
        if max_step <= 1e-13 {
            return Ok(z.into_iter().map(|r| r + omega0).collect());
        }
    }
    Err(Error::RootsNotConverged {
        iterations: 500,
        residual: best_residual,
    })
}

/// Residues of a proper rational `p'/q` at simple poles by the Heaviside
/// cover-up formula.
pub fn residues(
    p_prime: &[Complex64],
    q_lead: Complex64,
    poles: &[Complex64],
    omega0: f64,
) -> Result<Vec<Complex64>> {
    let scale = poles
        .iter()
        .map(|a| (a - Complex64::new(omega0, 0.0)).norm())
        .fold(1.0, f64::max);
    for i in 0..poles.len() {
        for j in i + 1..poles.len() {
            let gap = (poles[i] - poles[j]).norm();
            if gap <= 1e-8 * scale {
                return Err(Error::ClusteredPoles { gap });
            }
        }
    }
    let mut out = Vec::with_capacity(poles.len());
    for (i, &alpha) in poles.iter().enumerate() {
        let za = alpha - Complex64::new(omega0, 0.0);
        let num = horner(p_prime, za);
        let mut den = q_lead;
        for (j, &beta) in poles.iter().enumerate() {
            if j != i {
                den *= alpha - beta;
            }
        }
        out.push(num / den);
    }
    Ok(out)
}

/// Squared-response hat coefficients: `p_hat_i = (1/2) sum p_j conj(p_{i-j})`
/// and `q_hat_i = sum q_j conj(q_{i-j})`, both real by conjugate symmetry.
pub fn response_squared(pade: &PadeApproximant) -> RationalResponse {
    RationalResponse {
        omega0: pade.omega0,
        p_hat: conj_convolution(&pade.p, 0.5),
        q_hat: conj_convolution(&pade.q, 1.0),
    }
}

fn conj_convolution(c: &[Complex64], factor: f64) -> Vec<f64> {
    let deg = c.len() - 1;
    let mut out = vec![0.0; 2 * deg + 1];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut acc = Complex64::ZERO;
        let lo = i.saturating_sub(deg);
        let hi = i.min(deg);
        for j in lo..=hi {
            acc += c[j] * c[i - j].conj();
        }
        debug_assert!(acc.im.abs() <= 1e-12 * acc.norm().max(1.0));
        *slot = factor * acc.re;
    }
    out
}

/// Partial fraction pieces kept alongside the form for reuse by the
/// sensitivity chain.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub form: PartialFractionForm,
    /// Proper-part numerator after division.
    pub p_prime: Vec<f64>,
    pub q_lead: f64,
    /// Effective denominator degree after trimming.
    pub n_eff: usize,
}

/// Decomposes a real rational response into polynomial part plus simple-pole
/// terms, with the poles supplied by the caller (the indirect route knows
/// them as the u-approximant poles and their conjugates).
pub fn decompose_with_poles(
    resp: &RationalResponse,
    poles: Vec<Complex64>,
) -> Result<Decomposition> {
    let n_eff = poles.len();
    let q_hat: Vec<Complex64> = resp.q_hat[..=n_eff]
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    let p_hat: Vec<Complex64> = resp
        .p_hat
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    let m_deg = p_hat.len() - 1;

    let (poly, p_prime) = if m_deg >= n_eff && n_eff > 0 {
        let (r, pp) = poly_divide(&p_hat, &q_hat)?;
        (r, pp)
    } else if n_eff == 0 {
        (p_hat.clone(), vec![Complex64::ZERO])
    } else {
        (Vec::new(), p_hat.clone())
    };

    let (res, q_lead) = if n_eff > 0 {
        let q_lead = q_hat[n_eff];
        (residues(&p_prime, q_lead, &poles, resp.omega0)?, q_lead.re)
    } else {
        (Vec::new(), 1.0)
    };

    Ok(Decomposition {
        form: PartialFractionForm {
            omega0: resp.omega0,
            poly: poly.iter().map(|c| c.re).collect(),
            poles,
            residues: res,
        },
        p_prime: p_prime.iter().map(|c| c.re).collect(),
        q_lead,
        n_eff,
    })
}

/// Decomposition when only the real response is known (direct route): the
/// poles come from rooting the trimmed real denominator.
pub fn decompose(resp: &RationalResponse) -> Result<Decomposition> {
    let mut q: Vec<Complex64> = resp
        .q_hat
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    trim_trailing(&mut q);
    let n_eff = q.len() - 1;
    let poles = if n_eff > 0 {
        roots_dka(&q, resp.omega0)?
    } else {
        Vec::new()
    };
    let trimmed = RationalResponse {
        omega0: resp.omega0,
        p_hat: resp.p_hat.clone(),
        q_hat: resp.q_hat[..=n_eff].to_vec(),
    };
    decompose_with_poles(&trimmed, poles)
}

/// Everything the indirect route produces for one observation point.
#[derive(Debug, Clone)]
pub struct ObsPointRational {
    pub pade: PadeApproximant,
    pub response: RationalResponse,
    pub decomposition: Decomposition,
    /// Degrees the successful fit actually used (the fallback may reduce them).
    pub fit_m: usize,
    pub fit_n: usize,
}

impl ObsPointRational {
    /// Builds the per-point chain: u-fit, squared response, pole doubling,
    /// division and residues.
    pub fn build(u_jet: &Jet, m: usize, n: usize) -> Result<Self> {
        let order = m + n;
        assert!(u_jet.order() >= order, "jet order must reach m + n");
        let pade = fit_with_fallback(&u_jet.coeffs()[..=order], m, n, u_jet.center())?;
        let response = response_squared(&pade);
        let n_eff = pade.q.len() - 1;
        let poles = if n_eff > 0 {
            let u_poles = roots_dka(&pade.q, pade.omega0)?;
            let mut all = u_poles.clone();
            all.extend(u_poles.iter().map(|a| a.conj()));
            all
        } else {
            Vec::new()
        };
        let truncated = RationalResponse {
            omega0: response.omega0,
            p_hat: response.p_hat.clone(),
            q_hat: response.q_hat[..=2 * n_eff].to_vec(),
        };
        let decomposition = decompose_with_poles(&truncated, poles)?;
        let fit_m = pade.numerator_degree();
        let fit_n = if fit_m == m { n } else { n - 1 };
        Ok(Self {
            pade,
            response,
            decomposition,
            fit_m,
            fit_n,
        })
    }
}

/// Result of a band objective evaluation.
#[derive(Debug, Clone)]
pub struct BandObjective {
    /// Band- and observation-averaged sound intensity.
    pub value: f64,
    pub per_point: Vec<ObsPointRational>,
}

/// Indirect estimate: fit the complex response per observation point, square
/// into the real rational, integrate analytically, average over the band and
/// the observation points.
pub fn indirect_objective(
    u_jets: &[Jet],
    m: usize,
    n: usize,
    band: (f64, f64),
) -> Result<BandObjective> {
    let (w1, w2) = band;
    let mut per_point = Vec::with_capacity(u_jets.len());
    let mut total = 0.0;
    for jet in u_jets {
        let point = ObsPointRational::build(jet, m, n)?;
        total += point.decomposition.form.integrate(w1, w2)?;
        per_point.push(point);
    }
    Ok(BandObjective {
        value: total / ((w2 - w1) * u_jets.len() as f64),
        per_point,
    })
}

/// Direct estimate: assemble the jet of `f = (1/2) sum |u_i|^2` and fit the
/// real `[m, n]` rational to it.
pub fn direct_objective(u_jets: &[Jet], m: usize, n: usize, band: (f64, f64)) -> Result<f64> {
    let resp = direct_response(u_jets, m, n)?;
    let dec = decompose(&resp)?;
    let (w1, w2) = band;
    Ok(dec.form.integrate(w1, w2)? / ((w2 - w1) * u_jets.len() as f64))
}

/// Jet of the squared response summed over observation points.
pub fn squared_response_jet(u_jets: &[Jet]) -> Jet {
    let mut f = Jet::zero(u_jets[0].center(), u_jets[0].order());
    for u in u_jets {
        f = f.add(&u.mul(&u.conj()));
    }
    f.scale(Complex64::new(0.5, 0.0))
}

/// Real `[m, n]` fit of the direct response.
pub fn direct_response(u_jets: &[Jet], m: usize, n: usize) -> Result<RationalResponse> {
    let f_jet = squared_response_jet(u_jets);
    let order = m + n;
    assert!(f_jet.order() >= order);
    let pade = fit_with_fallback(&f_jet.coeffs()[..=order], m, n, f_jet.center())?;
    // Real data through real-valued Krylov steps stays exactly real.
    Ok(RationalResponse {
        omega0: pade.omega0,
        p_hat: pade.p.iter().map(|c| c.re).collect(),
        q_hat: pade.q.iter().map(|c| c.re).collect(),
    })
}
