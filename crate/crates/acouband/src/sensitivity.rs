//! Topological derivative of the band-averaged objective: the adjoint-based
//! point sensitivity as a jet, then the chain rule through every stage of the
//! indirect rational approximation, plus the brute-force hole-insertion
//! oracle.
//!
//! Every stage here is linear in the sensitivity inputs, so the whole chain
//! maps the sensitivity jet at a point to a real number without refitting.

use crate::bem::{BemOperator, BoundarySolution, FieldJet, PlaneWave, QuadConfig, SourceKind};
use crate::error::{Error, Result};
use crate::geom::{point_segment_distance, Vec2};
use crate::jet::Jet;
use crate::mesh::BoundaryMesh;
use crate::pade::{ObsPointRational, PadeApproximant, RationalResponse};
use crate::quadrature::trapezoid;
use num_complex::Complex64;

/// Jet of the response sensitivity at one evaluation point:
/// `2 sum_j d(adj)/dx_j d(u)/dx_j - (w^2/c^2) adj u`, with `w^2` carried as a
/// jet so all frequency derivatives come out at once.
pub fn dt_u_jet(primal: &FieldJet, adjoint: &FieldJet, c: f64) -> Jet {
    let gp = primal.grad.as_ref().expect("primal gradient required");
    let ga = adjoint.grad.as_ref().expect("adjoint gradient required");
    let cross = ga[0].mul(&gp[0]).add(&ga[1].mul(&gp[1]));
    let omega_sq = Jet::omega_squared(primal.u.center(), primal.u.order());
    let mass = omega_sq
        .scale(Complex64::new(1.0 / (c * c), 0.0))
        .mul(&adjoint.u)
        .mul(&primal.u);
    cross.scale(Complex64::new(2.0, 0.0)).sub(&mass)
}

/// Sensitivities of the rational-approximation coefficients.
///
/// The linear system mirrors the fit: the same lower block with the
/// sensitivity data on the right-hand side, solved the same way.
pub fn dt_pade_coeffs(
    u_taylor: &[Complex64],
    dt_taylor: &[Complex64],
    q: &[Complex64],
    m: usize,
    n: usize,
) -> (Vec<Complex64>, Vec<Complex64>) {
    assert!(u_taylor.len() >= m + n + 1 && dt_taylor.len() >= m + n + 1);
    let a = |i: i64| -> Complex64 {
        if i < 0 {
            Complex64::ZERO
        } else {
            u_taylor[i as usize]
        }
    };
    let da = |i: i64| -> Complex64 {
        if i < 0 {
            Complex64::ZERO
        } else {
            dt_taylor[i as usize]
        }
    };
    let qj = |j: usize| -> Complex64 {
        if j < q.len() {
            q[j]
        } else {
            Complex64::ZERO
        }
    };
    // rhs_i = dt_a_i + sum_{j=1}^{min(i,n)} dt_a_{i-j} q_j
    let rhs_at = |i: usize| -> Complex64 {
        let mut v = da(i as i64);
        for j in 1..=n.min(i) {
            v += da((i - j) as i64) * qj(j);
        }
        v
    };
    let dt_q = if n == 0 {
        vec![Complex64::ONE; 0]
    } else {
        let mut mat = nalgebra::DMatrix::<Complex64>::zeros(n, n);
        let mut rhs = nalgebra::DVector::<Complex64>::zeros(n);
        for r in 0..n {
            let i = m + 1 + r;
            for c in 0..n {
                let j = c + 1;
                if j <= i {
                    mat[(r, c)] = a((i - j) as i64);
                }
            }
            rhs[r] = -rhs_at(i);
        }
        let (x, _res) = crate::pade::gmres_solve(&mat, &rhs, 1e-14);
        x.iter().copied().collect::<Vec<_>>()
    };
    let full_dt_q = {
        let mut v = Vec::with_capacity(n + 1);
        v.push(Complex64::ZERO); // q_0 is pinned to 1
        v.extend(dt_q);
        v
    };
    let mut dt_p = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let mut v = rhs_at(i);
        for j in 1..=n.min(i) {
            v += a((i - j) as i64) * full_dt_q[j];
        }
        dt_p.push(v);
    }
    (dt_p, full_dt_q)
}

/// Product-rule sensitivities of the squared-response hat coefficients.
pub fn dt_hat_coeffs(
    p: &[Complex64],
    q: &[Complex64],
    dt_p: &[Complex64],
    dt_q: &[Complex64],
) -> (Vec<f64>, Vec<f64>) {
    let conv = |c: &[Complex64], dc: &[Complex64], factor: f64| -> Vec<f64> {
        let deg = c.len() - 1;
        let mut out = vec![0.0; 2 * deg + 1];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut acc = Complex64::ZERO;
            let lo = i.saturating_sub(deg);
            let hi = i.min(deg);
            for j in lo..=hi {
                acc += c[j] * dc[i - j].conj() + dc[j] * c[i - j].conj();
            }
            debug_assert!(acc.im.abs() <= 1e-10 * acc.norm().max(1.0));
            *slot = factor * acc.re;
        }
        out
    };
    (conv(p, dt_p, 0.5), conv(q, dt_q, 1.0))
}

/// Polynomial division with sensitivities carried through each update
/// (quotient rule on the leading term, product rule inside the loop).
/// Returns `(r, p', dt_r, dt_p')`.
#[allow(clippy::type_complexity)]
pub fn dt_divide(
    p_hat: &[f64],
    q_hat: &[f64],
    dt_p_hat: &[f64],
    dt_q_hat: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let m = p_hat.len() - 1;
    let n = q_hat.len() - 1;
    assert!(m >= n);
    let q_lead = q_hat[n];
    let qmax = q_hat.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if q_lead.abs() <= 1e-14 * qmax {
        return Err(Error::ZeroLeadingDenominator);
    }
    let dq_lead = dt_q_hat[n];
    let mut work = p_hat.to_vec();
    let mut dwork = dt_p_hat.to_vec();
    let mut r = vec![0.0; m - n + 1];
    let mut dr = vec![0.0; m - n + 1];
    for i in (0..=m - n).rev() {
        let ri = work[i + n] / q_lead;
        let dri = (dwork[i + n] * q_lead - work[i + n] * dq_lead) / (q_lead * q_lead);
        r[i] = ri;
        dr[i] = dri;
        for j in 0..=n {
            work[i + j] -= ri * q_hat[j];
            dwork[i + j] -= dri * q_hat[j] + ri * dt_q_hat[j];
        }
    }
    work.truncate(n.max(1));
    dwork.truncate(n.max(1));
    Ok((r, work, dr, dwork))
}

/// Pole sensitivities by the implicit-function theorem on `q(alpha) = 0`,
/// conjugated for the doubled poles.
pub fn dt_poles(
    q: &[Complex64],
    dt_q: &[Complex64],
    u_poles: &[Complex64],
    omega0: f64,
) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(2 * u_poles.len());
    for &alpha in u_poles {
        let z = alpha - Complex64::new(omega0, 0.0);
        let mut num = Complex64::ZERO;
        let mut zp = Complex64::ONE;
        for (j, &dq) in dt_q.iter().enumerate() {
            let _ = j;
            num += dq * zp;
            zp *= z;
        }
        let mut den = Complex64::ZERO;
        let mut den_scale = 0.0;
        let mut zp = Complex64::ONE;
        for (j, &qc) in q.iter().enumerate().skip(1) {
            let term = qc * (j as f64) * zp;
            den += term;
            den_scale += term.norm();
            zp *= z;
        }
        if den.norm() <= 1e-10 * den_scale.max(1e-300) {
            return Err(Error::NearMultiplePole);
        }
        out.push(-num / den);
    }
    let conj: Vec<Complex64> = out.iter().map(|d| d.conj()).collect();
    out.extend(conj);
    Ok(out)
}

/// Residue sensitivities from the cover-up formula: numerator variation,
/// pole motion, and the logarithmic derivative of the denominator product.
pub fn dt_residues(
    p_prime: &[f64],
    dt_p_prime: &[f64],
    q_lead: f64,
    dt_q_lead: f64,
    poles: &[Complex64],
    dt_poles: &[Complex64],
    omega0: f64,
) -> Result<Vec<Complex64>> {
    let n2 = poles.len();
    let mut out = Vec::with_capacity(n2);
    for i in 0..n2 {
        let z = poles[i] - Complex64::new(omega0, 0.0);
        let mut num = Complex64::ZERO;
        let mut dnum_coeff = Complex64::ZERO;
        let mut num_deriv = Complex64::ZERO;
        let mut zp = Complex64::ONE;
        let mut zp_prev = Complex64::ZERO;
        for (j, (&pc, &dpc)) in p_prime.iter().zip(dt_p_prime).enumerate() {
            num += Complex64::new(pc, 0.0) * zp;
            dnum_coeff += Complex64::new(dpc, 0.0) * zp;
            if j >= 1 {
                num_deriv += Complex64::new(pc * j as f64, 0.0) * zp_prev;
            }
            zp_prev = zp;
            zp *= z;
        }
        let mut den = Complex64::new(q_lead, 0.0);
        let mut log_deriv = Complex64::new(dt_q_lead / q_lead, 0.0);
        for j in 0..n2 {
            if j != i {
                let gap = poles[i] - poles[j];
                if gap.norm() == 0.0 {
                    return Err(Error::ClusteredPoles { gap: 0.0 });
                }
                den *= gap;
                log_deriv += (dt_poles[i] - dt_poles[j]) / gap;
            }
        }
        out.push((dnum_coeff + dt_poles[i] * num_deriv - log_deriv * num) / den);
    }
    Ok(out)
}

/// All stage sensitivities for one observation point.
#[derive(Debug, Clone)]
pub struct DtRational {
    pub dt_p: Vec<Complex64>,
    pub dt_q: Vec<Complex64>,
    pub dt_p_hat: Vec<f64>,
    pub dt_q_hat: Vec<f64>,
    pub dt_poly: Vec<f64>,
    pub dt_p_prime: Vec<f64>,
    pub dt_poles: Vec<Complex64>,
    pub dt_residues: Vec<Complex64>,
}

/// Runs the full sensitivity chain alongside an existing per-point rational.
pub fn dt_chain(point: &ObsPointRational, u_jet: &Jet, dt_jet: &Jet) -> Result<DtRational> {
    let pade = &point.pade;
    let (m, n) = (point.fit_m, point.fit_n);
    let (dt_p, dt_q_full) = dt_pade_coeffs(u_jet.coeffs(), dt_jet.coeffs(), &pade.q, m, n);
    // Mirror the trimming of the fitted denominator.
    let n_eff = pade.denominator_degree();
    let dt_q = dt_q_full[..=n_eff.min(dt_q_full.len() - 1)].to_vec();
    let (dt_p_hat, dt_q_hat) = dt_hat_coeffs(&pade.p, &pade.q, &dt_p, &dt_q);

    let resp = &point.response;
    let two_n = 2 * n_eff;
    let q_hat = &resp.q_hat[..=two_n];
    let (dt_poly, dt_p_prime) = if n_eff == 0 {
        (dt_p_hat.clone(), vec![0.0])
    } else if resp.p_hat.len() - 1 >= two_n {
        let (_, _, dr, dpp) = dt_divide(&resp.p_hat, q_hat, &dt_p_hat, &dt_q_hat)?;
        (dr, dpp)
    } else {
        (Vec::new(), dt_p_hat.clone())
    };

    let u_poles = &point.decomposition.form.poles[..n_eff];
    let dt_pole_vec = if n_eff > 0 {
        dt_poles(&pade.q, &dt_q, u_poles, pade.omega0)?
    } else {
        Vec::new()
    };
    let dt_res = if n_eff > 0 {
        dt_residues(
            &point.decomposition.p_prime,
            &dt_p_prime,
            point.decomposition.q_lead,
            dt_q_hat[two_n],
            &point.decomposition.form.poles,
            &dt_pole_vec,
            pade.omega0,
        )?
    } else {
        Vec::new()
    };
    Ok(DtRational {
        dt_p,
        dt_q,
        dt_p_hat,
        dt_q_hat,
        dt_poly,
        dt_p_prime,
        dt_poles: dt_pole_vec,
        dt_residues: dt_res,
    })
}

/// Analytic band integral of the sensitivity of the rational response:
/// the polynomial part, the residue variation against the pole logarithms,
/// and the pole-motion term, averaged over the band width.
pub fn dt_objective(
    point: &ObsPointRational,
    dt: &DtRational,
    w1: f64,
    w2: f64,
) -> Result<f64> {
    let form = &point.decomposition.form;
    let omega0 = form.omega0;
    for &pole in &form.poles {
        let d = if pole.re >= w1 && pole.re <= w2 {
            pole.im.abs()
        } else {
            (pole - Complex64::new(w1, 0.0))
                .norm()
                .min((pole - Complex64::new(w2, 0.0)).norm())
        };
        if d < 1e-8 * (w2 - w1) {
            return Err(Error::PoleNearBand {
                pole_re: pole.re,
                pole_im: pole.im,
                distance: d,
            });
        }
    }
    let mut total = 0.0;
    let (z1, z2) = (w1 - omega0, w2 - omega0);
    for (i, &dr) in dt.dt_poly.iter().enumerate() {
        let k = (i + 1) as i32;
        total += dr / k as f64 * (z2.powi(k) - z1.powi(k));
    }
    for ((&pole, &res), (&dres, &dpole)) in form
        .poles
        .iter()
        .zip(&form.residues)
        .zip(dt.dt_residues.iter().zip(&dt.dt_poles))
    {
        let e2 = Complex64::new(w2, 0.0) - pole;
        let e1 = Complex64::new(w1, 0.0) - pole;
        total += (dres * (e2.ln() - e1.ln())).re;
        total -= (res * dpole * (Complex64::ONE / e2 - Complex64::ONE / e1)).re;
    }
    Ok(total / (w2 - w1))
}

/// Pointwise sensitivity of the squared response (quotient-rule form), used
/// by the band-subdivision error monitor.
pub fn dt_response_value(resp: &RationalResponse, dt: &DtRational, w: f64) -> Result<f64> {
    let z = w - resp.omega0;
    let horner = |c: &[f64]| -> f64 {
        let mut acc = 0.0;
        for &v in c.iter().rev() {
            acc = acc * z + v;
        }
        acc
    };
    let n_eff = dt.dt_q.len() - 1;
    let den = horner(&resp.q_hat[..=2 * n_eff]);
    if den.abs() < 1e-300 {
        return Err(Error::PoleEvaluation(den.abs()));
    }
    let num = horner(&resp.p_hat);
    let dnum = horner(&dt.dt_p_hat);
    let dden = horner(&dt.dt_q_hat);
    Ok(dnum / den - num * dden / (den * den))
}

/// Evaluates the sensitivity jets `[point][observation]` given the shared
/// primal and adjoint solves; the caller provides any point list.
pub fn dt_u_jets(
    op: &BemOperator,
    primal: &BoundarySolution,
    incident: &SourceKind,
    adjoints: &[(Vec2, BoundarySolution)],
    points: &[Vec2],
) -> Vec<Vec<Jet>> {
    let primal_fields = op.eval_field(primal, incident, points, true);
    let mut per_obs_fields = Vec::with_capacity(adjoints.len());
    for (x_obs, adj_sol) in adjoints {
        per_obs_fields.push(op.eval_field(adj_sol, &SourceKind::Point(*x_obs), points, true));
    }
    (0..points.len())
        .map(|i| {
            per_obs_fields
                .iter()
                .map(|fields| dt_u_jet(&primal_fields[i], &fields[i], op.c))
                .collect()
        })
        .collect()
}

/// Brute-force band objective: trapezoid quadrature of order-0 solves.
pub fn trapezoid_objective(
    mesh: &BoundaryMesh,
    obs_points: &[Vec2],
    incident: &PlaneWave,
    c: f64,
    band: (f64, f64),
    n_points: usize,
    quad: QuadConfig,
) -> Result<f64> {
    let (w1, w2) = band;
    let f = |w: f64| -> f64 {
        let op = BemOperator::assemble(mesh, w, 0, c, quad).expect("assembly");
        let sol = op.solve_primal(incident);
        let fields = op.eval_field(&sol, &SourceKind::Plane(*incident), obs_points, false);
        0.5 * fields.iter().map(|f| f.u.coeff(0).norm_sqr()).sum::<f64>()
    };
    Ok(trapezoid(&f, w1, w2, n_points) / ((w2 - w1) * obs_points.len() as f64))
}

/// Hole-insertion difference oracle for the topological derivative of `J`:
/// insert a small rigid disc at `x`, rebuild the objective by the trapezoid
/// rule, subtract the baseline, and divide by the hole area.
#[allow(clippy::too_many_arguments)]
pub fn fd_topological_derivative(
    mesh: &BoundaryMesh,
    x: Vec2,
    epsilon: f64,
    hole_elements: usize,
    baseline_j: f64,
    obs_points: &[Vec2],
    incident: &PlaneWave,
    c: f64,
    band: (f64, f64),
    n_quad: usize,
    quad: QuadConfig,
) -> Result<f64> {
    for e in &mesh.elements {
        if point_segment_distance(x, e.a, e.b) <= 2.0 * epsilon {
            return Err(Error::Geometry(format!(
                "hole at ({}, {}) intersects an existing boundary",
                x.x, x.y
            )));
        }
    }
    let mut perturbed = mesh.clone();
    perturbed.append(&BoundaryMesh::circle(x, epsilon, hole_elements)?);
    let j = trapezoid_objective(&perturbed, obs_points, incident, c, band, n_quad, quad)?;
    Ok((j - baseline_j) / (std::f64::consts::PI * epsilon * epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use crate::pade;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// A generic synthetic response jet (decaying random coefficients, so
    /// the rational fit is well-posed) plus a random sensitivity direction.
    fn synthetic_case(seed: u64, order: usize) -> (Jet, Jet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = 3.0;
        let mut decay = 1.0;
        let u = Jet::from_coeffs(
            center,
            (0..=order)
                .map(|_| {
                    let v = c64(rng.gen_range(0.4..1.0), rng.gen_range(-1.0..1.0)) * decay;
                    decay /= 1.4;
                    v
                })
                .collect(),
        );
        let mut decay = 0.3;
        let dt = Jet::from_coeffs(
            center,
            (0..=order)
                .map(|_| {
                    let v = c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * decay;
                    decay /= 1.3;
                    v
                })
                .collect(),
        );
        (u, dt)
    }

    #[test]
    fn dt_u_jet_zero_adjoint_gives_zero() {
        let z = Jet::zero(3.0, 4);
        let one = Jet::constant(Complex64::ONE, 3.0, 4);
        let primal = FieldJet {
            u: one.clone(),
            grad: Some([one.clone(), one.clone()]),
            inside_material: false,
        };
        let adjoint = FieldJet {
            u: z.clone(),
            grad: Some([z.clone(), z.clone()]),
            inside_material: false,
        };
        let dt = dt_u_jet(&primal, &adjoint, 1.0);
        assert!(dt.coeffs().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn dt_u_jet_free_field_matches_born_closed_form() {
        // No scatterer: primal = incident plane wave, adjoint = free-field
        // Green function; the jet formula must reproduce the closed form.
        let mesh = BoundaryMesh::default();
        let omega0 = 3.0;
        let op = BemOperator::assemble(&mesh, omega0, 3, 1.0, QuadConfig::default()).unwrap();
        let pw = PlaneWave {
            direction: Vec2::new(0.0, 1.0),
            amplitude: 1.0,
        };
        let x_obs = Vec2::new(0.0, 0.0);
        let x = Vec2::new(-2.0, -1.5);
        let primal_sol = op.solve_primal(&pw);
        let adjoint_sol = op.solve_adjoint(x_obs).unwrap();
        let jets = dt_u_jets(
            &op,
            &primal_sol,
            &SourceKind::Plane(pw),
            &[(x_obs, adjoint_sol)],
            &[x],
        );
        for (m, &w) in [omega0, omega0].iter().enumerate().take(1) {
            let _ = (m, w);
        }
        let got = jets[0][0].coeff(0);
        let want =
            analytic::free_field_dt_response(x, x_obs, Vec2::new(0.0, 1.0), 1.0, 1.0, omega0);
        assert!(
            (got - want).norm() < 1e-10 * want.norm(),
            "got {got}, want {want}"
        );
        // First derivative against a frequency finite difference of the
        // closed form.
        let h = 1e-5;
        let fd = (analytic::free_field_dt_response(x, x_obs, Vec2::new(0.0, 1.0), 1.0, 1.0, omega0 + h)
            - analytic::free_field_dt_response(x, x_obs, Vec2::new(0.0, 1.0), 1.0, 1.0, omega0 - h))
            / (2.0 * h);
        let jet1 = jets[0][0].derivative(1);
        assert!((fd - jet1).norm() / jet1.norm() < 1e-6);
    }

    #[test]
    fn dt_pade_coeffs_zero_and_linearity() {
        let (u, dt) = synthetic_case(1, 8);
        let (pade, _) = pade::fit(&u.coeffs()[..=8], 4, 4, 3.0);
        let zero = vec![Complex64::ZERO; 9];
        let (dp0, dq0) = dt_pade_coeffs(u.coeffs(), &zero, &pade.q, 4, 4);
        assert!(dp0.iter().chain(&dq0).all(|v| v.norm() < 1e-14));

        let (dp1, dq1) = dt_pade_coeffs(u.coeffs(), dt.coeffs(), &pade.q, 4, 4);
        let scaled: Vec<Complex64> = dt.coeffs().iter().map(|v| v * 2.0).collect();
        let (dp2, dq2) = dt_pade_coeffs(u.coeffs(), &scaled, &pade.q, 4, 4);
        for (a, b) in dp1.iter().zip(&dp2) {
            assert!((b - a * 2.0).norm() < 1e-10 * a.norm().max(1.0));
        }
        for (a, b) in dq1.iter().zip(&dq2) {
            assert!((b - a * 2.0).norm() < 1e-10 * a.norm().max(1.0));
        }
        // dt_p_0 is exactly the point sensitivity
        assert!((dp1[0] - dt.coeff(0)).norm() < 1e-14);
    }

    /// Richardson-style check: the directional remainder of a stage must
    /// shrink like h^2 until the cancellation floor.
    fn assert_second_order(remainders: &[(f64, f64)], scale: f64) {
        let (h1, r1) = remainders[0];
        let (h2, r2) = remainders[1];
        let expected_drop = (h1 / h2).powi(2);
        if r1 > 1e-11 * scale {
            let drop = r1 / r2.max(1e-300);
            assert!(
                drop > 0.2 * expected_drop && drop < 5.0 * expected_drop || r2 < 1e-11 * scale,
                "remainders not O(h^2): {remainders:?}"
            );
        }
        let (_, r3) = remainders[2];
        assert!(
            r3 <= 10.0 * r2.max(1e-12 * scale),
            "smallest step should be at or below the floor: {remainders:?}"
        );
    }

    #[test]
    fn dt_pade_coeffs_directional() {
        let (u, dt) = synthetic_case(7, 8);
        let (pade, _) = pade::fit(&u.coeffs()[..=8], 4, 4, 3.0);
        let (dp, dq) = dt_pade_coeffs(u.coeffs(), dt.coeffs(), &pade.q, 4, 4);
        let mut remainders = Vec::new();
        for &h in &[1e-5, 1e-6, 1e-7] {
            let perturbed: Vec<Complex64> = u
                .coeffs()
                .iter()
                .zip(dt.coeffs())
                .map(|(a, d)| a + d * h)
                .collect();
            let (pade_h, _) = pade::fit(&perturbed, 4, 4, 3.0);
            let mut rem = 0.0_f64;
            for j in 0..pade_h.q.len().min(pade.q.len()) {
                let fd = (pade_h.q[j] - pade.q[j]) / h;
                rem = rem.max((fd - dq[j]).norm());
            }
            for j in 0..pade_h.p.len().min(pade.p.len()) {
                let fd = (pade_h.p[j] - pade.p[j]) / h;
                rem = rem.max((fd - dp[j]).norm());
            }
            remainders.push((h, rem * h)); // remainder of the un-divided difference
        }
        let scale = dq.iter().map(|v| v.norm()).fold(1.0, f64::max);
        assert_second_order(&remainders, scale);
    }

    #[test]
    fn dt_hat_zero_realness_and_directional() {
        let (u, dt) = synthetic_case(3, 8);
        let point = ObsPointRational::build(&u, 4, 4).unwrap();
        let chain = dt_chain(&point, &u, &dt).unwrap();
        // realness is structural (imaginary parts asserted in debug builds);
        // check the directional derivative of the hat coefficients.
        let mut remainders = Vec::new();
        for &h in &[1e-5, 1e-6, 1e-7] {
            let perturbed: Vec<Complex64> = u
                .coeffs()
                .iter()
                .zip(dt.coeffs())
                .map(|(a, d)| a + d * h)
                .collect();
            let jet_h = Jet::from_coeffs(3.0, perturbed);
            let point_h = ObsPointRational::build(&jet_h, 4, 4).unwrap();
            let mut rem = 0.0_f64;
            for j in 0..point.response.p_hat.len() {
                let fd = (point_h.response.p_hat[j] - point.response.p_hat[j]) / h;
                rem = rem.max((fd - chain.dt_p_hat[j]).abs());
            }
            for j in 0..point.response.q_hat.len().min(point_h.response.q_hat.len()) {
                let fd = (point_h.response.q_hat[j] - point.response.q_hat[j]) / h;
                rem = rem.max((fd - chain.dt_q_hat[j]).abs());
            }
            remainders.push((h, rem * h));
        }
        let scale = chain.dt_p_hat.iter().map(|v| v.abs()).fold(1.0, f64::max);
        assert_second_order(&remainders, scale);

        let zero = Jet::zero(3.0, 8);
        let chain0 = dt_chain(&point, &u, &zero).unwrap();
        assert!(chain0.dt_p_hat.iter().all(|v| v.abs() < 1e-13));
        assert!(chain0.dt_q_hat.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn dt_divide_matches_plain_division_and_quotient_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p_hat: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut q_hat: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        q_hat[8] = 0.9;
        let dp: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dq: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();

        // zero sensitivities leave the plain division intact
        let zeros = vec![0.0; 9];
        let (r0, pp0, dr0, dpp0) = dt_divide(&p_hat, &q_hat, &zeros, &zeros).unwrap();
        assert!(dr0.iter().chain(&dpp0).all(|v| v.abs() == 0.0));
        let pc: Vec<Complex64> = p_hat.iter().map(|&v| c64(v, 0.0)).collect();
        let qc: Vec<Complex64> = q_hat.iter().map(|&v| c64(v, 0.0)).collect();
        let (r_ref, pp_ref) = pade::poly_divide(&pc, &qc).unwrap();
        for (a, b) in r0.iter().zip(&r_ref) {
            assert!((a - b.re).abs() < 1e-14);
        }
        for (a, b) in pp0.iter().zip(&pp_ref) {
            assert!((a - b.re).abs() < 1e-14);
        }

        // directional consistency
        let (_, _, dr, dpp) = dt_divide(&p_hat, &q_hat, &dp, &dq).unwrap();
        let h = 1e-6;
        let ph: Vec<f64> = p_hat.iter().zip(&dp).map(|(a, d)| a + h * d).collect();
        let qh: Vec<f64> = q_hat.iter().zip(&dq).map(|(a, d)| a + h * d).collect();
        let (rh, pph, _, _) = dt_divide(&ph, &qh, &zeros, &zeros).unwrap();
        for j in 0..dr.len() {
            let fd = (rh[j] - r0[j]) / h;
            assert!(
                (fd - dr[j]).abs() < 1e-5 * dr[j].abs().max(1.0),
                "r[{j}]: fd {fd}, dt {}",
                dr[j]
            );
        }
        for j in 0..dpp.len() {
            let fd = (pph[j] - pp0[j]) / h;
            assert!((fd - dpp[j]).abs() < 1e-5 * dpp[j].abs().max(1.0));
        }

        // m = n: single quotient-rule coefficient
        let (r1, _, dr1, _) = dt_divide(&p_hat[..9], &q_hat[..9], &dp, &dq).unwrap();
        assert_eq!(r1.len(), 1);
        let expect = (dp[8] * q_hat[8] - p_hat[8] * dq[8]) / (q_hat[8] * q_hat[8]);
        assert_relative_eq!(dr1[0], expect, max_relative = 1e-12);
    }

    #[test]
    fn dt_poles_root_tracking_and_conjugate_closure() {
        let (u, dt) = synthetic_case(21, 8);
        let point = ObsPointRational::build(&u, 4, 4).unwrap();
        let chain = dt_chain(&point, &u, &dt).unwrap();
        let n_eff = point.pade.denominator_degree();
        let poles = &point.decomposition.form.poles;
        // conjugate closure
        for i in 0..n_eff {
            assert!((chain.dt_poles[i + n_eff] - chain.dt_poles[i].conj()).norm() < 1e-14);
        }
        // root tracking: roots of q + h dt_q
        let h = 1e-7;
        let qh: Vec<Complex64> = point
            .pade
            .q
            .iter()
            .zip(&chain.dt_q)
            .map(|(a, d)| a + d * h)
            .collect();
        let roots_h = pade::roots_dka(&qh, 3.0).unwrap();
        for i in 0..n_eff {
            let nearest = roots_h
                .iter()
                .copied()
                .min_by(|a, b| {
                    (a - poles[i])
                        .norm()
                        .partial_cmp(&(b - poles[i]).norm())
                        .unwrap()
                })
                .unwrap();
            let fd = (nearest - poles[i]) / h;
            assert!(
                (fd - chain.dt_poles[i]).norm() < 1e-5 * chain.dt_poles[i].norm().max(1.0),
                "pole {i}: fd {fd}, dt {}",
                chain.dt_poles[i]
            );
        }
    }

    #[test]
    fn dt_residues_perturbation_and_conjugate_closure() {
        let (u, dt) = synthetic_case(33, 8);
        let point = ObsPointRational::build(&u, 4, 4).unwrap();
        let chain = dt_chain(&point, &u, &dt).unwrap();
        let n_eff = point.pade.denominator_degree();
        for i in 0..n_eff {
            assert!(
                (chain.dt_residues[i + n_eff] - chain.dt_residues[i].conj()).norm()
                    < 1e-12 * chain.dt_residues[i].norm().max(1.0)
            );
        }
        // recompute residues with h-perturbed inputs
        let h = 1e-7;
        let perturbed: Vec<Complex64> = u
            .coeffs()
            .iter()
            .zip(dt.coeffs())
            .map(|(a, d)| a + d * h)
            .collect();
        let jet_h = Jet::from_coeffs(3.0, perturbed);
        let point_h = ObsPointRational::build(&jet_h, 4, 4).unwrap();
        let res = &point.decomposition.form.residues;
        let res_h = &point_h.decomposition.form.residues;
        for i in 0..res.len().min(res_h.len()) {
            // match poles to keep ordering stable
            let target = point.decomposition.form.poles[i];
            let (j, _) = point_h
                .decomposition
                .form
                .poles
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (*a - target).norm().partial_cmp(&(*b - target).norm()).unwrap()
                })
                .unwrap();
            let fd = (res_h[j] - res[i]) / h;
            assert!(
                (fd - chain.dt_residues[i]).norm()
                    < 1e-4 * chain.dt_residues[i].norm().max(1.0),
                "residue {i}: fd {fd}, dt {}",
                chain.dt_residues[i]
            );
        }
    }

    #[test]
    fn dt_objective_zero_linearity_and_whole_chain() {
        let (u, dt) = synthetic_case(55, 8);
        let point = ObsPointRational::build(&u, 4, 4).unwrap();
        let band = (2.6, 3.4);

        let zero = Jet::zero(3.0, 8);
        let chain0 = dt_chain(&point, &u, &zero).unwrap();
        let v0 = dt_objective(&point, &chain0, band.0, band.1).unwrap();
        assert!(v0.abs() < 1e-12);

        let chain = dt_chain(&point, &u, &dt).unwrap();
        let v1 = dt_objective(&point, &chain, band.0, band.1).unwrap();
        let dt2 = dt.scale(c64(2.0, 0.0));
        let chain2 = dt_chain(&point, &u, &dt2).unwrap();
        let v2 = dt_objective(&point, &chain2, band.0, band.1).unwrap();
        assert_relative_eq!(v2, 2.0 * v1, max_relative = 1e-9);

        // whole-chain directional test against re-running the objective
        let mut remainders = Vec::new();
        for &h in &[1e-5, 1e-6, 1e-7] {
            let perturbed: Vec<Complex64> = u
                .coeffs()
                .iter()
                .zip(dt.coeffs())
                .map(|(a, d)| a + d * h)
                .collect();
            let jet_h = Jet::from_coeffs(3.0, perturbed);
            let j_h = pade::indirect_objective(&[jet_h], 4, 4, band).unwrap().value;
            let j_0 = pade::indirect_objective(&[u.clone()], 4, 4, band).unwrap().value;
            let fd = (j_h - j_0) / h;
            remainders.push((h, (fd - v1).abs() * h));
        }
        assert_second_order(&remainders, v1.abs().max(1.0));
    }

    #[test]
    fn trapezoid_baseline_difference_is_zero() {
        // Differencing two identical baselines gives exactly zero.
        let mesh = BoundaryMesh::circle(Vec2::new(0.0, 3.0), 0.8, 40).unwrap();
        let pw = PlaneWave {
            direction: Vec2::new(0.0, 1.0),
            amplitude: 1.0,
        };
        let band = (2.8, 3.2);
        let j1 = trapezoid_objective(
            &mesh,
            &[Vec2::new(0.0, 0.0)],
            &pw,
            1.0,
            band,
            11,
            QuadConfig::default(),
        )
        .unwrap();
        let j2 = trapezoid_objective(
            &mesh,
            &[Vec2::new(0.0, 0.0)],
            &pw,
            1.0,
            band,
            11,
            QuadConfig::default(),
        )
        .unwrap();
        assert_eq!(j1, j2);
    }

    #[test]
    fn fd_oracle_rejects_hole_on_boundary() {
        let mesh = BoundaryMesh::circle(Vec2::new(0.0, 0.0), 1.0, 32).unwrap();
        let pw = PlaneWave {
            direction: Vec2::new(0.0, 1.0),
            amplitude: 1.0,
        };
        let err = fd_topological_derivative(
            &mesh,
            Vec2::new(1.0, 0.0),
            0.01,
            16,
            0.0,
            &[Vec2::new(3.0, 0.0)],
            &pw,
            1.0,
            (2.9, 3.1),
            5,
            QuadConfig::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn fd_oracle_matches_born_in_free_field() {
        // With no scatterer, the hole-difference oracle must reproduce the
        // closed-form first-order sensitivity within the Born error budget.
        let mesh = BoundaryMesh::default();
        let pw = PlaneWave {
            direction: Vec2::new(0.0, 1.0),
            amplitude: 1.0,
        };
        let x_obs = Vec2::new(0.0, 0.0);
        let x = Vec2::new(-2.0, -2.0);
        let band = (2.9, 3.1);
        let n_quad = 21;
        let baseline = trapezoid_objective(
            &mesh,
            &[x_obs],
            &pw,
            1.0,
            band,
            n_quad,
            QuadConfig::default(),
        )
        .unwrap();
        let fd = fd_topological_derivative(
            &mesh,
            x,
            0.01,
            100,
            baseline,
            &[x_obs],
            &pw,
            1.0,
            band,
            n_quad,
            QuadConfig::default(),
        )
        .unwrap();
        // Born: D_T f = Re(conj(u_obs) D_T u_obs); integrate by the same rule.
        let dt_f = |w: f64| {
            let u_obs = Complex64::new(0.0, w * x_obs.y).exp();
            let dtu = analytic::free_field_dt_response(x, x_obs, Vec2::new(0.0, 1.0), 1.0, 1.0, w);
            (u_obs.conj() * dtu).re
        };
        let born = trapezoid(&dt_f, band.0, band.1, n_quad) / (band.1 - band.0);
        assert!(
            (fd - born).abs() < 0.2 * born.abs(),
            "fd {fd} vs born {born}"
        );
    }
}
