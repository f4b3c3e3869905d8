//! Burton-Miller boundary-element solver for sound-hard scattering, with
//! arbitrary-order frequency-derivative solves carried as jets.
//!
//! The combined kernel is `W = dG/dn_y + gamma d2G/(dn_x dn_y)` with the
//! frequency-dependent coupling `gamma = -i c / w`; the coupling is carried as
//! a jet so its derivatives participate in the derivative right-hand sides.
//! All derivative solves share the order-0 LU factors.

use crate::error::{Error, Result};
use crate::geom::{point_segment_distance, Vec2};
use crate::jet::{
    plane_wave_gradient_jets, plane_wave_jet, plane_wave_normal_jet, Jet,
};
use crate::jetops::{axpy, conv_acc, mul_linear_acc, mul_quadratic_acc};
use crate::mesh::{BoundaryMesh, Element};
use crate::quadrature::GaussRule;
use crate::specfun::{hankel1_seq, signed_order};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

const I4: Complex64 = Complex64::new(0.0, 0.25); // i/4 prefactor of the Green function

/// Incident plane wave of given direction and amplitude.
#[derive(Debug, Clone, Copy)]
pub struct PlaneWave {
    pub direction: Vec2,
    pub amplitude: f64,
}

/// What drives a boundary solve / field evaluation.
#[derive(Debug, Clone, Copy)]
pub enum SourceKind {
    Plane(PlaneWave),
    /// Free-field point source (the adjoint excitation).
    Point(Vec2),
}

/// Quadrature parameters for the kernel integrals.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub points: usize,
    /// Distance (in element lengths) below which the subdivided rule kicks in.
    pub near_threshold: f64,
    pub near_subdivisions: usize,
    /// Geometric panels for the regularised self integral.
    pub self_panels: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            points: 8,
            near_threshold: 2.0,
            near_subdivisions: 4,
            self_panels: 16,
        }
    }
}

/// Boundary trace jets from one solve.
#[derive(Debug, Clone)]
pub struct BoundarySolution {
    pub u: Vec<Jet>,
    pub omega0: f64,
}

/// Field value (and optionally its spatial gradient) at one interior point.
#[derive(Debug, Clone)]
pub struct FieldJet {
    pub u: Jet,
    pub grad: Option<[Jet; 2]>,
    /// Set when the point lies inside a rigid region; the representation
    /// formula is still evaluated but the value is not a physical field.
    pub inside_material: bool,
}

/// Shared kernel-evaluation context.
pub(crate) struct KernelCtx {
    pub omega0: f64,
    pub c: f64,
    pub order: usize,
    pub gamma: Jet,
    /// rows[m][j] = (-1)^j C(m,j) / (2^m m!) for the cylinder-function jets.
    dtab: Vec<Vec<f64>>,
    rule: GaussRule,
    quad: QuadConfig,
}

impl KernelCtx {
    pub fn new(omega0: f64, c: f64, order: usize, quad: QuadConfig) -> Self {
        let mut dtab = Vec::with_capacity(order + 2);
        for m in 0..=order + 1 {
            let mut row = vec![0.0_f64; m + 1];
            let mut binom = 1.0;
            let mut norm = 1.0; // 2^m m!
            for k in 1..=m {
                norm *= 2.0 * k as f64;
            }
            for (j, slot) in row.iter_mut().enumerate() {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                *slot = sign * binom / norm;
                binom = binom * (m - j) as f64 / (j + 1) as f64;
            }
            dtab.push(row);
        }
        Self {
            omega0,
            c,
            order,
            gamma: Jet::coupling_gamma(c, omega0, order),
            dtab,
            rule: GaussRule::new(quad.points),
            quad,
        }
    }

    /// Jet coefficients of `H^(1)_0(w r/c)` and `H^(1)_1(w r/c)`.
    fn hankel_pair(&self, r: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let s = r / self.c;
        let seq = hankel1_seq(self.order + 1, self.omega0 * s)
            .expect("positive kernel argument");
        let k = self.order;
        let mut h0 = Vec::with_capacity(k + 1);
        let mut h1 = Vec::with_capacity(k + 1);
        let mut s_pow = 1.0;
        for m in 0..=k {
            let row = &self.dtab[m];
            let mut v0 = Complex64::ZERO;
            let mut v1 = Complex64::ZERO;
            for (j, &t) in row.iter().enumerate() {
                let base = 2 * j as i64 - m as i64;
                v0 += signed_order(&seq, base) * t;
                v1 += signed_order(&seq, base + 1) * t;
            }
            h0.push(v0 * s_pow);
            h1.push(v1 * s_pow);
            s_pow *= s;
        }
        (h0, h1)
    }

    /// Pointwise jet of `W(x, y)`; `n_x = None` drops the hypersingular part
    /// (the plain double-layer kernel used in interior evaluation).
    fn w_point(&self, x: Vec2, n_x: Option<Vec2>, y: Vec2, n_y: Vec2) -> Vec<Complex64> {
        let d = x - y;
        let r = d.norm();
        let rhat = d / r;
        let (h0, h1) = self.hankel_pair(r);
        let k = self.order;
        let inv_c = 1.0 / self.c;
        let ny_rhat = n_y.dot(rhat);

        // dlp = (i/4) (w/c) H1 (n_y . rhat)
        let mut out = vec![Complex64::ZERO; k + 1];
        mul_linear_acc(
            &mut out,
            I4 * (self.omega0 * inv_c * ny_rhat),
            I4 * (inv_c * ny_rhat),
            &h1,
        );

        if let Some(nx) = n_x {
            let nx_rhat = nx.dot(rhat);
            let nx_ny = nx.dot(n_y);
            // hyp = (i/4)[ (w/c)^2 H0 (nx.rhat)(ny.rhat)
            //              + (w/c) H1 (nx.ny - 2 (nx.rhat)(ny.rhat)) / r ]
            let mut hyp = vec![Complex64::ZERO; k + 1];
            mul_quadratic_acc(
                &mut hyp,
                I4 * (self.omega0 * self.omega0 * inv_c * inv_c * nx_rhat * ny_rhat),
                I4 * (2.0 * self.omega0 * inv_c * inv_c * nx_rhat * ny_rhat),
                I4 * (inv_c * inv_c * nx_rhat * ny_rhat),
                &h0,
            );
            let geo = (nx_ny - 2.0 * nx_rhat * ny_rhat) / r;
            mul_linear_acc(
                &mut hyp,
                I4 * (self.omega0 * inv_c * geo),
                I4 * (inv_c * geo),
                &h1,
            );
            conv_acc(&mut out, self.gamma.coeffs(), &hyp);
        }
        out
    }

    /// `p.f. int_e W(x, .) dGamma` accumulated into `out` with `scale`.
    pub(crate) fn w_element_acc(
        &self,
        x: Vec2,
        n_x: Option<Vec2>,
        elem: &Element,
        is_self: bool,
        scale: Complex64,
        out: &mut [Complex64],
    ) {
        if is_self {
            let self_jet = self.self_term(elem);
            axpy(out, scale, self_jet.coeffs());
            return;
        }
        let d = point_segment_distance(x, elem.a, elem.b);
        let subdiv = if d < 0.5 * elem.length {
            4 * self.quad.near_subdivisions
        } else if d < self.quad.near_threshold * elem.length {
            self.quad.near_subdivisions
        } else {
            1
        };
        let n_y = elem.normal;
        for s in 0..subdiv {
            let t0 = s as f64 / subdiv as f64;
            let t1 = (s + 1) as f64 / subdiv as f64;
            let a = elem.a + (elem.b - elem.a) * t0;
            let b = elem.a + (elem.b - elem.a) * t1;
            let seg_len = (b - a).norm();
            for (node, w) in self.rule.mapped(0.0, 1.0) {
                let y = a + (b - a) * node;
                let kernel = self.w_point(x, n_x, y, n_y);
                axpy(out, scale * (w * seg_len), &kernel);
            }
        }
    }

    /// Self term of the combined kernel on a straight element.
    ///
    /// The double-layer part vanishes by symmetry; what remains is
    /// `gamma * p.f. int (i/4)(w/c) H1(w|s|/c)/|s| ds`, evaluated as the
    /// analytic Laplace finite part `-2/(pi L)` plus the regular
    /// (Helmholtz-minus-Laplace) remainder on geometrically refined panels.
    pub(crate) fn self_term(&self, elem: &Element) -> Jet {
        let half = 0.5 * elem.length;
        let k = self.order;
        let mut reg = Jet::zero(self.omega0, k);
        let mut hi = half;
        for _ in 0..self.quad.self_panels {
            let lo = 0.5 * hi;
            for (s, w) in self.rule.mapped(lo, hi) {
                let (_, h1) = self.hankel_pair(s);
                let mut term = vec![Complex64::ZERO; k + 1];
                // (i/4)(w/c) H1(w s / c) / s
                mul_linear_acc(
                    &mut term,
                    I4 * (self.omega0 / (self.c * s)),
                    I4 * (1.0 / (self.c * s)),
                    &h1,
                );
                term[0] -= Complex64::new(1.0 / (2.0 * std::f64::consts::PI * s * s), 0.0);
                // even integrand: both half-elements at once
                axpy(reg.coeffs_mut(), Complex64::new(2.0 * w, 0.0), &term);
            }
            hi = lo;
        }
        let mut bracket = reg;
        let fp = -2.0 / (std::f64::consts::PI * elem.length);
        bracket.coeffs_mut()[0] += Complex64::new(fp, 0.0);
        self.gamma.mul(&bracket)
    }

    /// Pointwise jets of the double-layer kernel's spatial gradient
    /// components at an off-boundary target.
    fn dlp_gradient_point(&self, x: Vec2, y: Vec2, n_y: Vec2) -> [Vec<Complex64>; 2] {
        let d = x - y;
        let r = d.norm();
        let rhat = d / r;
        let (h0, h1) = self.hankel_pair(r);
        let k = self.order;
        let inv_c = 1.0 / self.c;
        let ny_rhat = n_y.dot(rhat);
        let mut out = [vec![Complex64::ZERO; k + 1], vec![Complex64::ZERO; k + 1]];
        for (l, slot) in out.iter_mut().enumerate() {
            let rl = if l == 0 { rhat.x } else { rhat.y };
            let nl = if l == 0 { n_y.x } else { n_y.y };
            // (i/4)[ (w/c)^2 H0 (ny.rhat) r_l + (w/c) H1 (n_l - 2 (ny.rhat) r_l)/r ]
            mul_quadratic_acc(
                slot,
                I4 * (self.omega0 * self.omega0 * inv_c * inv_c * ny_rhat * rl),
                I4 * (2.0 * self.omega0 * inv_c * inv_c * ny_rhat * rl),
                I4 * (inv_c * inv_c * ny_rhat * rl),
                &h0,
            );
            let geo = (nl - 2.0 * ny_rhat * rl) / r;
            mul_linear_acc(
                slot,
                I4 * (self.omega0 * inv_c * geo),
                I4 * (inv_c * geo),
                &h1,
            );
        }
        out
    }

    /// Jet of the free-field Green function `G(x, src)`.
    pub(crate) fn green_jet(&self, x: Vec2, src: Vec2) -> Jet {
        let r = x.distance(src);
        let (h0, _) = self.hankel_pair(r);
        let mut coeffs = h0;
        for c in coeffs.iter_mut() {
            *c *= I4;
        }
        Jet::from_coeffs(self.omega0, coeffs)
    }

    /// Jets of the gradient of `G(x, src)` with respect to `x`.
    pub(crate) fn green_gradient_jets(&self, x: Vec2, src: Vec2) -> [Jet; 2] {
        let d = x - src;
        let r = d.norm();
        let rhat = d / r;
        let (_, h1) = self.hankel_pair(r);
        let inv_c = 1.0 / self.c;
        let build = |component: f64| {
            let mut out = vec![Complex64::ZERO; self.order + 1];
            // -(i/4)(w/c) H1 rhat_l
            mul_linear_acc(
                &mut out,
                -I4 * (self.omega0 * inv_c * component),
                -I4 * (inv_c * component),
                &h1,
            );
            Jet::from_coeffs(self.omega0, out)
        };
        [build(rhat.x), build(rhat.y)]
    }
}

/// How the derivative right-hand-side layer potentials are evaluated.
#[derive(Debug, Clone, Copy, Default)]
pub enum RhsMode {
    /// Store all kernel matrices and use dense matrix-vector products.
    #[default]
    Dense,
    /// Keep only the order-0 matrix (for the LU factors) and evaluate the
    /// derivative sums with the fast multipole method.
    Fmm(crate::fmm::FmmConfig),
}

/// Assembled Burton-Miller operator: kernel jets plus the order-0 LU factors,
/// which are recycled across every derivative order and adjoint solve at this
/// frequency centre.
pub struct BemOperator {
    pub mesh: BoundaryMesh,
    pub omega0: f64,
    pub c: f64,
    pub order: usize,
    ctx: KernelCtx,
    mode: RhsMode,
    /// Kernel matrices per derivative order (scaled Taylor coefficients);
    /// only order 0 in FMM mode.
    w_mats: Vec<DMatrix<Complex64>>,
    lu: Option<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl BemOperator {
    /// Dense assembly of the kernel jets and LU factorisation of the order-0
    /// combined matrix `(1/2) I + [p.f. int W]`.
    pub fn assemble(
        mesh: &BoundaryMesh,
        omega0: f64,
        order: usize,
        c: f64,
        quad: QuadConfig,
    ) -> Result<Self> {
        Self::assemble_with_mode(mesh, omega0, order, c, quad, RhsMode::Dense)
    }

    pub fn assemble_with_mode(
        mesh: &BoundaryMesh,
        omega0: f64,
        order: usize,
        c: f64,
        quad: QuadConfig,
        mode: RhsMode,
    ) -> Result<Self> {
        let ctx = KernelCtx::new(omega0, c, order, quad);
        let n = mesh.len();
        if n == 0 {
            return Ok(Self {
                mesh: mesh.clone(),
                omega0,
                c,
                order,
                ctx,
                mode,
                w_mats: Vec::new(),
                lu: None,
            });
        }
        let k1 = match mode {
            RhsMode::Dense => order + 1,
            RhsMode::Fmm(_) => 1,
        };
        let rows: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = mesh.elements[i].midpoint;
                let nx = mesh.elements[i].normal;
                let mut row = vec![Complex64::ZERO; n * k1];
                let row_ctx = if k1 == order + 1 {
                    None
                } else {
                    Some(KernelCtx::new(omega0, c, 0, quad))
                };
                let active_ctx = row_ctx.as_ref().unwrap_or(&ctx);
                for (j, elem) in mesh.elements.iter().enumerate() {
                    active_ctx.w_element_acc(
                        x,
                        Some(nx),
                        elem,
                        i == j,
                        Complex64::ONE,
                        &mut row[j * k1..(j + 1) * k1],
                    );
                }
                row
            })
            .collect();
        let mut w_mats = Vec::with_capacity(k1);
        for m in 0..k1 {
            w_mats.push(DMatrix::from_fn(n, n, |i, j| rows[i][j * k1 + m]));
        }
        let mut a = w_mats[0].clone();
        for i in 0..n {
            a[(i, i)] += Complex64::new(0.5, 0.0);
        }
        let lu = a.lu();
        if lu.determinant().norm() == 0.0 {
            return Err(Error::SingularOperator(omega0));
        }
        Ok(Self {
            mesh: mesh.clone(),
            omega0,
            c,
            order,
            ctx,
            mode,
            w_mats,
            lu: Some(lu),
        })
    }

    /// Boundary solve for arbitrary right-hand-side jets, recursively from
    /// order 0 upward with the shared LU factors. The order-n right-hand side
    /// subtracts the lower-order kernel convolution terms, so the recursion
    /// is lower-triangular in derivative order.
    pub fn solve_with_rhs(&self, rhs: &[Jet]) -> BoundarySolution {
        let n = self.mesh.len();
        if n == 0 {
            return BoundarySolution {
                u: Vec::new(),
                omega0: self.omega0,
            };
        }
        let k1 = self.order + 1;
        let mut coeffs: Vec<DVector<Complex64>> = Vec::with_capacity(k1);
        for m in 0..k1 {
            let mut b = DVector::from_fn(n, |i, _| rhs[i].coeff(m));
            match &self.mode {
                RhsMode::Dense => {
                    for (lower, u_prev) in coeffs.iter().enumerate() {
                        let order_gap = m - lower;
                        b -= &self.w_mats[order_gap] * u_prev;
                    }
                }
                RhsMode::Fmm(config) => {
                    if m > 0 {
                        // Auxiliary density: orders below m keep the solved
                        // coefficients, the rest are zero; the full-jet fast
                        // sum then yields the needed convolution at order m.
                        let v: Vec<Jet> = (0..n)
                            .map(|i| {
                                let mut c = vec![Complex64::ZERO; k1];
                                for (lower, u_prev) in coeffs.iter().enumerate() {
                                    c[lower] = u_prev[i];
                                }
                                Jet::from_coeffs(self.omega0, c)
                            })
                            .collect();
                        let pot = crate::fmm::fmm_potential_with_ctx(
                            &self.ctx,
                            &self.mesh,
                            &v,
                            crate::fmm::FmmTargets::Collocation,
                            config,
                        )
                        .expect("fmm evaluation");
                        for i in 0..n {
                            b[i] -= pot[i].coeff(m);
                        }
                    }
                }
            }
            let sol = self
                .lu
                .as_ref()
                .expect("nonempty mesh has factors")
                .solve(&b)
                .expect("LU solve");
            coeffs.push(sol);
        }
        let u = (0..n)
            .map(|i| Jet::from_coeffs(self.omega0, (0..k1).map(|m| coeffs[m][i]).collect()))
            .collect();
        BoundarySolution {
            u,
            omega0: self.omega0,
        }
    }

    /// Right-hand-side jets `u_in + gamma q_in` for a source.
    pub fn rhs_jets(&self, source: &SourceKind) -> Vec<Jet> {
        let n = self.mesh.len();
        let mut rhs = Vec::with_capacity(n);
        for e in &self.mesh.elements {
            rhs.push(self.rhs_jet_at(source, e.midpoint, e.normal));
        }
        rhs
    }

    fn rhs_jet_at(&self, source: &SourceKind, x: Vec2, normal: Vec2) -> Jet {
        match source {
            SourceKind::Plane(pw) => {
                let amp = Complex64::new(pw.amplitude, 0.0);
                let u_in =
                    plane_wave_jet(x, pw.direction, self.c, self.omega0, self.order).scale(amp);
                let q_in = plane_wave_normal_jet(
                    x,
                    pw.direction,
                    normal,
                    self.c,
                    self.omega0,
                    self.order,
                )
                .scale(amp);
                u_in.add(&self.ctx.gamma.mul(&q_in))
            }
            SourceKind::Point(src) => {
                let g = self.ctx.green_jet(x, *src);
                let grad = self.ctx.green_gradient_jets(x, *src);
                let dgdn = grad[0]
                    .scale(Complex64::new(normal.x, 0.0))
                    .add(&grad[1].scale(Complex64::new(normal.y, 0.0)));
                g.add(&self.ctx.gamma.mul(&dgdn))
            }
        }
    }

    /// Primal solve driven by the incident plane wave.
    pub fn solve_primal(&self, incident: &PlaneWave) -> BoundarySolution {
        let rhs = self.rhs_jets(&SourceKind::Plane(*incident));
        self.solve_with_rhs(&rhs)
    }

    /// Adjoint solve: point source at the observation point, same LU factors.
    pub fn solve_adjoint(&self, x_obs: Vec2) -> Result<BoundarySolution> {
        let min_dist = self
            .mesh
            .elements
            .iter()
            .map(|e| point_segment_distance(x_obs, e.a, e.b))
            .fold(f64::INFINITY, f64::min);
        let max_len = self
            .mesh
            .elements
            .iter()
            .map(|e| e.length)
            .fold(0.0, f64::max);
        if min_dist < 1e-12 {
            return Err(Error::Geometry(format!(
                "observation point ({}, {}) lies on the boundary",
                x_obs.x, x_obs.y
            )));
        }
        if min_dist < max_len {
            log::warn!(
                "observation point ({}, {}) within one element length of the boundary",
                x_obs.x,
                x_obs.y
            );
        }
        let rhs = self.rhs_jets(&SourceKind::Point(x_obs));
        Ok(self.solve_with_rhs(&rhs))
    }

    /// Incident-field jet (and gradient) of a source at an interior point.
    pub fn incident_field(&self, source: &SourceKind, x: Vec2, want_gradient: bool) -> FieldJet {
        let (u, grad) = match source {
            SourceKind::Plane(pw) => {
                let amp = Complex64::new(pw.amplitude, 0.0);
                let u = plane_wave_jet(x, pw.direction, self.c, self.omega0, self.order).scale(amp);
                let g = want_gradient.then(|| {
                    let [gx, gy] =
                        plane_wave_gradient_jets(x, pw.direction, self.c, self.omega0, self.order);
                    [gx.scale(amp), gy.scale(amp)]
                });
                (u, g)
            }
            SourceKind::Point(src) => {
                let u = self.ctx.green_jet(x, *src);
                let g = want_gradient.then(|| self.ctx.green_gradient_jets(x, *src));
                (u, g)
            }
        };
        FieldJet {
            u,
            grad,
            inside_material: false,
        }
    }

    /// Interior evaluation `u(x) = u_in(x) - int dG/dn_y u dGamma` with
    /// optional analytic spatial gradients.
    pub fn eval_field(
        &self,
        sol: &BoundarySolution,
        source: &SourceKind,
        points: &[Vec2],
        want_gradient: bool,
    ) -> Vec<FieldJet> {
        points
            .par_iter()
            .map(|&x| self.eval_field_at(sol, source, x, want_gradient))
            .collect()
    }

    fn eval_field_at(
        &self,
        sol: &BoundarySolution,
        source: &SourceKind,
        x: Vec2,
        want_gradient: bool,
    ) -> FieldJet {
        let mut field = self.incident_field(source, x, want_gradient);
        let k1 = self.order + 1;
        let mut acc_u = vec![Complex64::ZERO; k1];
        let mut acc_gx = vec![Complex64::ZERO; k1];
        let mut acc_gy = vec![Complex64::ZERO; k1];
        for (elem, u_e) in self.mesh.elements.iter().zip(&sol.u) {
            let d = point_segment_distance(x, elem.a, elem.b);
            let subdiv = if d < 0.5 * elem.length {
                4 * self.ctx.quad.near_subdivisions
            } else if d < self.ctx.quad.near_threshold * elem.length {
                self.ctx.quad.near_subdivisions
            } else {
                1
            };
            let mut dlp = vec![Complex64::ZERO; k1];
            let mut grad_l = [vec![Complex64::ZERO; k1], vec![Complex64::ZERO; k1]];
            for s in 0..subdiv {
                let t0 = s as f64 / subdiv as f64;
                let t1 = (s + 1) as f64 / subdiv as f64;
                let a = elem.a + (elem.b - elem.a) * t0;
                let b = elem.a + (elem.b - elem.a) * t1;
                let seg_len = (b - a).norm();
                for (node, w) in self.ctx.rule.mapped(0.0, 1.0) {
                    let y = a + (b - a) * node;
                    let kernel = self.ctx.w_point(x, None, y, elem.normal);
                    axpy(&mut dlp, Complex64::new(w * seg_len, 0.0), &kernel);
                    if want_gradient {
                        let g = self.ctx.dlp_gradient_point(x, y, elem.normal);
                        axpy(&mut grad_l[0], Complex64::new(w * seg_len, 0.0), &g[0]);
                        axpy(&mut grad_l[1], Complex64::new(w * seg_len, 0.0), &g[1]);
                    }
                }
            }
            conv_acc(&mut acc_u, &dlp, u_e.coeffs());
            if want_gradient {
                conv_acc(&mut acc_gx, &grad_l[0], u_e.coeffs());
                conv_acc(&mut acc_gy, &grad_l[1], u_e.coeffs());
            }
        }
        let sub = Jet::from_coeffs(self.omega0, acc_u);
        field.u = field.u.sub(&sub);
        if want_gradient {
            if let Some(grad) = field.grad.as_mut() {
                grad[0] = grad[0].sub(&Jet::from_coeffs(self.omega0, acc_gx));
                grad[1] = grad[1].sub(&Jet::from_coeffs(self.omega0, acc_gy));
            }
        }
        field.inside_material = point_in_material(&self.mesh, x);
        field
    }

    pub(crate) fn kernel_ctx(&self) -> &KernelCtx {
        &self.ctx
    }

    pub(crate) fn kernel_matrices(&self) -> &[DMatrix<Complex64>] {
        &self.w_mats
    }

    pub fn gamma(&self) -> &Jet {
        &self.ctx.gamma
    }
}

/// Winding-number test: positive total winding marks the rigid side under the
/// material-on-the-left orientation convention.
pub fn point_in_material(mesh: &BoundaryMesh, p: Vec2) -> bool {
    let mut winding = 0i64;
    for e in &mesh.elements {
        let (a, b) = (e.a, e.b);
        if a.y <= p.y {
            if b.y > p.y && (b - a).cross(p - a) > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && (b - a).cross(p - a) < 0.0 {
            winding -= 1;
        }
    }
    winding > 0
}

/// Plain (non-regularised) boundary integral equation solve at order 0.
///
/// Diagnostic path only: it exhibits the fictitious-eigenfrequency breakdown
/// that the Burton-Miller formulation suppresses.
pub fn solve_plain_bie(
    mesh: &BoundaryMesh,
    incident: &PlaneWave,
    omega0: f64,
    c: f64,
    quad: QuadConfig,
) -> Result<Vec<Complex64>> {
    let ctx = KernelCtx::new(omega0, c, 0, quad);
    let n = mesh.len();
    let mut a = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        let x = mesh.elements[i].midpoint;
        for (j, elem) in mesh.elements.iter().enumerate() {
            let mut acc = [Complex64::ZERO];
            // double-layer only: self term vanishes on straight elements
            if i != j {
                ctx.w_element_acc(x, None, elem, false, Complex64::ONE, &mut acc);
            }
            a[(i, j)] = acc[0];
        }
        a[(i, i)] += Complex64::new(0.5, 0.0);
    }
    let rhs = DVector::from_fn(n, |i, _| {
        plane_wave_jet(
            mesh.elements[i].midpoint,
            incident.direction,
            c,
            omega0,
            0,
        )
        .coeff(0)
            * incident.amplitude
    });
    let lu = a.lu();
    lu.solve(&rhs)
        .map(|v| v.iter().copied().collect())
        .ok_or(Error::SingularOperator(omega0))
}
