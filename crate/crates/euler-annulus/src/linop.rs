//! Linearization of the nonlinear map at the radial state: the conjugated
//! operator `rho^{2-m} L_a (rho^{m-1} w)` with its singular potential, the
//! splitting into a critically singular principal part plus a smooth
//! relatively compact remainder, and the associated bilinear forms.
//!
//! All boundary-singular algebra is expanded into bounded factors before any
//! grid value is touched: `(rho')^2 - 1 = -(2/3) rho` turns the
//! `(m-1)(m-2) w / rho` contributions into a constant, and
//! `rho^2 f_a' + (m-1)(m-2)` vanishes linearly at the boundary with an
//! explicit closed form in the collars.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::grid::{barycentric_matrix, gauss_legendre, Grid};
use crate::profile::{big_psi_jet, RadialProfile};
use crate::space::{weight, weight_jet};

/// `q(R) = rho(R)^2 f_a'(Phi_{a,1}, psi~_a)` evaluated stably: closed forms in
/// the power-law collars, zero on the plateau, the differentiated profile ODE
/// in between. Smooth on the closed annulus with `q -> -(m-1)(m-2)` at both
/// ends.
pub fn potential_q(profile: &RadialProfile, big_r: f64) -> Result<f64> {
    let params = &profile.params;
    let m = params.m;
    let r = big_r + params.a - 4.0;
    let s_in = big_r - 1.0;
    let s_out = 7.0 - big_r;
    if s_in <= 0.5 {
        // psi = (r - a_-)^m exactly; f_-' per the small-argument closed form
        let (s, p) = (s_in, s_out);
        let d = s + params.a_minus();
        return Ok(-(m - 1.0) * (m - 2.0) * p * p / 36.0
            - (m - 1.0) * s * p * p / (36.0 * d)
            + s * s * p * p / (36.0 * d * d));
    }
    if s_out <= 0.5 {
        let (s, p) = (s_out, s_in);
        let d = s - params.a_plus();
        return Ok(-(m - 1.0) * (m - 2.0) * p * p / 36.0
            - (m - 1.0) * s * p * p / (36.0 * d)
            + s * s * p * p / (36.0 * d * d));
    }
    let t = profile.psi(r)?;
    if t >= 3.0 {
        return Ok(0.0);
    }
    let rho = weight(big_r);
    Ok(rho * rho * profile.fprime_along_profile(r)?)
}

/// `rho(R) P_a(R) = (q(R) + (m-1)(m-2)) / rho(R)`, the bounded potential of
/// the compact part. Collar values come from the expanded bounded factors.
pub fn rho_potential(profile: &RadialProfile, big_r: f64) -> Result<f64> {
    let params = &profile.params;
    let m = params.m;
    let s_in = big_r - 1.0;
    let s_out = 7.0 - big_r;
    if s_in <= 0.5 {
        let (s, p) = (s_in, s_out);
        let d = s + params.a_minus();
        return Ok((m - 1.0) * (m - 2.0) * (13.0 - big_r) / (6.0 * p)
            - (m - 1.0) * p / (6.0 * d)
            + s * p / (6.0 * d * d));
    }
    if s_out <= 0.5 {
        let (s, p) = (s_out, s_in);
        let d = s - params.a_plus();
        return Ok((m - 1.0) * (m - 2.0) * (5.0 + big_r) / (6.0 * p)
            - (m - 1.0) * p / (6.0 * d)
            + s * p / (6.0 * d * d));
    }
    let q = potential_q(profile, big_r)?;
    Ok((q + (m - 1.0) * (m - 2.0)) / weight(big_r))
}

/// Radial arrays entering the linearized operator and the nonlinear map:
/// everything that multiplies the unknown is precomputed analytically.
#[derive(Debug, Clone)]
pub struct SingularPotential {
    /// `rho^2 f_a'` at the radial nodes.
    pub q: Array1<f64>,
    /// `rho P_a` at the radial nodes.
    pub rho_p: Array1<f64>,
}

pub fn build_potential(profile: &RadialProfile, nodes: &Array1<f64>) -> Result<SingularPotential> {
    let mut q = Array1::zeros(nodes.len());
    let mut rho_p = Array1::zeros(nodes.len());
    for (k, &r) in nodes.iter().enumerate() {
        q[k] = potential_q(profile, r)?;
        rho_p[k] = rho_potential(profile, r)?;
    }
    Ok(SingularPotential { q, rho_p })
}

/// The linearized operator at the radial state, acting on the regularized
/// unknown `w` (so that the perturbation of the stream function is
/// `rho^{m-1} w`). All coefficients are bounded on the closed annulus.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    pub m: f64,
    pub a: f64,
    /// coefficient of `w_RR` (equals `rho`)
    c_rr: Array1<f64>,
    /// coefficient of `w_R`
    c_r: Array1<f64>,
    /// coefficient of `w` including the compact potential
    c_0: Array1<f64>,
    /// coefficient of `w` in the principal part only
    c_0_principal: Array1<f64>,
    /// coefficient of `w_thth`
    c_tt: Array1<f64>,
    /// `rho P_a` at the nodes
    pub rho_p: Array1<f64>,
}

impl LinearizedOperator {
    pub fn new(profile: &RadialProfile, grid: &Grid) -> Result<Self> {
        let m = profile.params.m;
        let a = profile.params.a;
        let n = grid.n_r;
        let pot = build_potential(profile, &grid.r)?;
        let mut c_rr = Array1::zeros(n);
        let mut c_r = Array1::zeros(n);
        let mut c_0 = Array1::zeros(n);
        let mut c_0_principal = Array1::zeros(n);
        let mut c_tt = Array1::zeros(n);
        for i in 0..n {
            let rj = weight_jet(grid.r[i]);
            let (rho, drho, ddrho) = (rj.0[0], rj.0[1], rj.0[2]);
            let rad = grid.r[i] + a - 4.0;
            c_rr[i] = rho;
            c_r[i] = 2.0 * (m - 1.0) * drho + rho / rad;
            // (m-1) rho'' - (2/3)(m-1)(m-2) + (m-1) rho' / rad
            c_0_principal[i] = (m - 1.0) * ddrho - (2.0 / 3.0) * (m - 1.0) * (m - 2.0)
                + (m - 1.0) * drho / rad;
            c_0[i] = c_0_principal[i] + pot.rho_p[i];
            c_tt[i] = rho / (rad * rad);
        }
        Ok(LinearizedOperator {
            m,
            a,
            c_rr,
            c_r,
            c_0,
            c_0_principal,
            c_tt,
            rho_p: pot.rho_p,
        })
    }

    /// Apply the full linearization to `w` on the grid.
    pub fn apply(&self, grid: &Grid, w: &Array2<f64>) -> Result<Array2<f64>> {
        self.apply_with(grid, w, &self.c_0)
    }

    /// Apply only the critically singular principal part.
    pub fn apply_principal(&self, grid: &Grid, w: &Array2<f64>) -> Result<Array2<f64>> {
        self.apply_with(grid, w, &self.c_0_principal)
    }

    /// Apply the smooth remainder `w -> rho P_a w`.
    pub fn apply_compact(&self, grid: &Grid, w: &Array2<f64>) -> Result<Array2<f64>> {
        if w.dim() != grid.shape() {
            return Err(Error::GridMismatch("apply_compact".into()));
        }
        let mut out = w.clone();
        for i in 0..grid.n_r {
            for k in 0..grid.n_theta {
                out[[i, k]] *= self.rho_p[i];
            }
        }
        Ok(out)
    }

    fn apply_with(&self, grid: &Grid, w: &Array2<f64>, c0: &Array1<f64>) -> Result<Array2<f64>> {
        if w.dim() != grid.shape() {
            return Err(Error::GridMismatch("apply_linearized".into()));
        }
        let w_r = grid.deriv_r(w);
        let w_rr = grid.deriv_rr(w);
        let w_tt = grid.deriv_theta(w, 2);
        let (nr, nt) = grid.shape();
        let mut out = Array2::zeros((nr, nt));
        for i in 0..nr {
            for k in 0..nt {
                out[[i, k]] = self.c_rr[i] * w_rr[[i, k]]
                    + self.c_r[i] * w_r[[i, k]]
                    + c0[i] * w[[i, k]]
                    + self.c_tt[i] * w_tt[[i, k]];
            }
        }
        Ok(out)
    }

    /// Apply to a single angular mode: `w(R) e^{i mu theta}` reduces to a 1D
    /// operator with `w_thth -> -mu^2 w`.
    pub fn apply_mode(&self, grid: &Grid, w: &Array1<f64>, mu: f64) -> Result<Array1<f64>> {
        if w.len() != grid.n_r {
            return Err(Error::GridMismatch("apply_mode".into()));
        }
        let w2 = w.clone().insert_axis(ndarray::Axis(1));
        let w_r = grid.d_r.dot(&w2);
        let w_rr = grid.d_r2.dot(&w2);
        let mut out = Array1::zeros(grid.n_r);
        for i in 0..grid.n_r {
            out[i] = self.c_rr[i] * w_rr[[i, 0]]
                + self.c_r[i] * w_r[[i, 0]]
                + self.c_0[i] * w[i]
                - self.c_tt[i] * mu * mu * w[i];
        }
        Ok(out)
    }
}

/// Which bilinear form to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FormKind {
    /// Full 2D form on the annulus.
    Full,
    /// Radial reduction (no angular term).
    Radial,
    /// Fixed angular mode: adds the centrifugal term `mu^2/(R+a-4)^2`.
    Mode(f64),
}

/// Quadrature data for the weighted radial integrals: Gauss--Legendre nodes
/// with barycentric interpolation from the Lobatto grid.
pub struct FormQuadrature {
    pub nodes: Array1<f64>,
    pub weights: Array1<f64>,
    /// interpolation matrix Lobatto -> Gauss
    pub interp: Array2<f64>,
    /// same composed with the radial derivative
    pub interp_d: Array2<f64>,
    /// q at the Gauss nodes
    pub q: Array1<f64>,
    pub m: f64,
    pub a: f64,
}

impl FormQuadrature {
    pub fn new(profile: &RadialProfile, grid: &Grid) -> Result<Self> {
        let (nodes, weights) = gauss_legendre(2 * grid.n_r, 1.0, 7.0);
        let interp = barycentric_matrix(&grid.r, &grid.bary_w, &nodes);
        let interp_d = interp.dot(&grid.d_r);
        let pot = build_potential(profile, &nodes)?;
        Ok(FormQuadrature {
            nodes,
            weights,
            interp,
            interp_d,
            q: pot.q,
            m: profile.params.m,
            a: profile.params.a,
        })
    }

    /// Pointwise integrand blocks of the form in the `w`-variable, at Gauss
    /// node `g`: returns the weights of `v_R w_R`, `(v_R w + v w_R)`, `v w`
    /// (without the centrifugal part), and the centrifugal density.
    fn blocks(&self, g: usize) -> (f64, f64, f64, f64) {
        let m = self.m;
        let rj = weight_jet(self.nodes[g]);
        let (rho, drho) = (rj.0[0], rj.0[1]);
        let rad = self.nodes[g] + self.a - 4.0;
        let rho2m2 = rho.powf(2.0 * m - 2.0);
        let rho2m3 = rho.powf(2.0 * m - 3.0);
        let rho2m4 = rho.powf(2.0 * m - 4.0);
        let grad = rho2m2;
        let cross = (m - 1.0) * rho2m3 * drho;
        let zero = (m - 1.0) * (m - 1.0) * rho2m4 * drho * drho - self.q[g] * rho2m4;
        let centrifugal = rho2m2 / (rad * rad);
        (
            grad * self.weights[g] * rad,
            cross * self.weights[g] * rad,
            zero * self.weights[g] * rad,
            centrifugal * self.weights[g] * rad,
        )
    }

    /// Mass density `rho^{2m-2} (R+a-4)` times the quadrature weight.
    pub fn mass_weight(&self, g: usize) -> f64 {
        let rho = weight(self.nodes[g]);
        rho.powf(2.0 * self.m - 2.0) * (self.nodes[g] + self.a - 4.0) * self.weights[g]
    }

    /// Evaluate the 1D radial/mode form on Lobatto-sampled `v, w`.
    pub fn radial_form(&self, v: &Array1<f64>, w: &Array1<f64>, mu: f64) -> f64 {
        let v2 = v.clone().insert_axis(ndarray::Axis(1));
        let w2 = w.clone().insert_axis(ndarray::Axis(1));
        let vg = self.interp.dot(&v2);
        let wg = self.interp.dot(&w2);
        let dvg = self.interp_d.dot(&v2);
        let dwg = self.interp_d.dot(&w2);
        let mut total = 0.0;
        for g in 0..self.nodes.len() {
            let (grad, cross, zero, cent) = self.blocks(g);
            total += grad * dvg[[g, 0]] * dwg[[g, 0]]
                + cross * (dvg[[g, 0]] * wg[[g, 0]] + vg[[g, 0]] * dwg[[g, 0]])
                + (zero + mu * mu * cent) * vg[[g, 0]] * wg[[g, 0]];
        }
        total
    }

    /// 1D mass inner product.
    pub fn radial_mass(&self, v: &Array1<f64>, w: &Array1<f64>) -> f64 {
        let v2 = v.clone().insert_axis(ndarray::Axis(1));
        let w2 = w.clone().insert_axis(ndarray::Axis(1));
        let vg = self.interp.dot(&v2);
        let wg = self.interp.dot(&w2);
        let mut total = 0.0;
        for g in 0..self.nodes.len() {
            total += self.mass_weight(g) * vg[[g, 0]] * wg[[g, 0]];
        }
        total
    }
}

/// Bilinear form of the linearization in the `w`-representation:
/// `B(rho^{m-1} v, rho^{m-1} w)` with all integrands expanded into bounded
/// factors. 2D fields for `Full`, radial vectors otherwise.
pub fn bilinear_form_w(
    quad: &FormQuadrature,
    grid: &Grid,
    kind: FormKind,
    v: &Array2<f64>,
    w: &Array2<f64>,
) -> Result<f64> {
    match kind {
        FormKind::Radial | FormKind::Mode(_) => {
            let mu = if let FormKind::Mode(mu) = kind { mu } else { 0.0 };
            let vr = v.column(0).to_owned();
            let wr = w.column(0).to_owned();
            Ok(quad.radial_form(&vr, &wr, mu))
        }
        FormKind::Full => {
            if v.dim() != grid.shape() || w.dim() != grid.shape() {
                return Err(Error::GridMismatch("bilinear_form_w".into()));
            }
            let dtheta = 2.0 * std::f64::consts::PI / grid.n_theta as f64;
            let v_r = grid.deriv_r(v);
            let w_r = grid.deriv_r(w);
            let v_t = grid.deriv_theta(v, 1);
            let w_t = grid.deriv_theta(w, 1);
            let interp = |f: &Array2<f64>| quad.interp.dot(f);
            let (vg, wg) = (interp(v), interp(w));
            let (dvg, dwg) = (interp(&v_r), interp(&w_r));
            let (vtg, wtg) = (interp(&v_t), interp(&w_t));
            let mut total = 0.0;
            for g in 0..quad.nodes.len() {
                let (grad, cross, zero, cent) = quad.blocks(g);
                for k in 0..grid.n_theta {
                    total += grad * dvg[[g, k]] * dwg[[g, k]]
                        + cross * (dvg[[g, k]] * wg[[g, k]] + vg[[g, k]] * dwg[[g, k]])
                        + zero * vg[[g, k]] * wg[[g, k]]
                        + cent * vtg[[g, k]] * wtg[[g, k]];
                }
            }
            Ok(total * dtheta)
        }
    }
}
