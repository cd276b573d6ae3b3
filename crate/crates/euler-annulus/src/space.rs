//! Discrete weighted function spaces on the reference annulus: the boundary
//! weight `rho`, anisotropic Sobolev norms, the parametrization of boundary
//! data plus interior correction by a single field `w`, and Hardy-quotient
//! diagnostics.

use ndarray::Array2;
use rustfft::num_complex::Complex64;

use crate::cutoff::{chi_tilde_jet, Jet};
use crate::domain::{trace_lift_derivs, BoundaryPerturbation, Side};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::profile::{big_psi_jet, RadialProfile};

/// Weight `rho(R) = (R-1)(7-R)/6` with derivatives: `rho'(1) = 1`,
/// `rho'(7) = -1`, `rho'' = -1/3`.
pub fn weight_jet(r: f64) -> Jet {
    Jet([
        (r - 1.0) * (7.0 - r) / 6.0,
        (8.0 - 2.0 * r) / 6.0,
        -1.0 / 3.0,
        0.0,
        0.0,
    ])
}

pub fn weight(r: f64) -> f64 {
    weight_jet(r).value()
}

/// A sampled field on the tensor grid with optional rotational symmetry
/// metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Array2<f64>,
    pub symmetry: Option<usize>,
}

impl GridFunction {
    pub fn new(values: Array2<f64>) -> Self {
        GridFunction {
            values,
            symmetry: None,
        }
    }

    pub fn with_symmetry(values: Array2<f64>, l: usize) -> Self {
        GridFunction {
            values,
            symmetry: Some(l),
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        GridFunction::new(Array2::zeros(grid.shape()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Deviation from invariance under rotation by `2 pi / l` and under the
    /// reflection `theta -> -theta`.
    pub fn symmetry_defect(&self, grid: &Grid, l: usize) -> f64 {
        let (nr, nt) = grid.shape();
        let shift = nt / l;
        let mut worst: f64 = 0.0;
        for i in 0..nr {
            for j in 0..nt {
                let rot = self.values[[i, (j + shift) % nt]];
                let refl = self.values[[i, (nt - j) % nt]];
                worst = worst
                    .max((self.values[[i, j]] - rot).abs())
                    .max((self.values[[i, j]] - refl).abs());
            }
        }
        worst
    }
}

/// Discrete `H^j` norm: all mixed derivatives `d_R^{j1} d_theta^{j2}` with
/// `j1 + j2 <= j` in `L^2(dR dtheta)`.
pub fn h_norm(grid: &Grid, u: &Array2<f64>, j: usize) -> f64 {
    let mut total = 0.0;
    // derivative ladder in R, reusing the previous level
    let mut du_r = u.clone();
    for j1 in 0..=j {
        if j1 > 0 {
            du_r = grid.deriv_r(&du_r);
        }
        let mut field = du_r.clone();
        for j2 in 0..=(j - j1) {
            if j2 > 0 {
                field = grid.deriv_theta(&field, 1);
            }
            let n = grid.l2_norm(&field);
            total += n * n;
        }
    }
    total.sqrt()
}

/// `X^j` norm: `H^j(w) + H^j(rho d_R w)`.
pub fn norm_x(grid: &Grid, u: &Array2<f64>, j: usize) -> f64 {
    let mut rdu = grid.deriv_r(u);
    for i in 0..grid.n_r {
        let rho = weight(grid.r[i]);
        for k in 0..grid.n_theta {
            rdu[[i, k]] *= rho;
        }
    }
    h_norm(grid, u, j) + h_norm(grid, &rdu, j)
}

/// Divide a zero-trace field by `rho`, using l'Hopital on the boundary rows.
pub fn divide_by_rho(grid: &Grid, u: &Array2<f64>) -> Array2<f64> {
    let du = grid.deriv_r(u);
    let (nr, nt) = grid.shape();
    let mut out = Array2::zeros((nr, nt));
    for i in 0..nr {
        if i == 0 || i == nr - 1 {
            let drho = weight_jet(grid.r[i]).deriv(1);
            for k in 0..nt {
                out[[i, k]] = du[[i, k]] / drho;
            }
        } else {
            let rho = weight(grid.r[i]);
            for k in 0..nt {
                out[[i, k]] = u[[i, k]] / rho;
            }
        }
    }
    out
}

/// Fixed splitting `F = rho F1 + F2` behind the `Y^j` norm surrogate: `F2`
/// keeps the interior part and the boundary-trace collar extension, `F1`
/// absorbs the rest after division by `rho`.
pub fn y_split(grid: &Grid, f: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (nr, nt) = grid.shape();
    let mut f2 = Array2::zeros((nr, nt));
    for i in 0..nr {
        let rho = weight(grid.r[i]);
        let cut = chi_tilde_jet(4.0 * rho).value();
        let boundary_row = if grid.r[i] < 4.0 { 0 } else { nr - 1 };
        for k in 0..nt {
            f2[[i, k]] = f[[i, k]] * (1.0 - cut) + f[[boundary_row, k]] * cut;
        }
    }
    let diff = f - &f2;
    let f1 = divide_by_rho(grid, &diff);
    (f1, f2)
}

/// `Y^j` norm surrogate: `|F1|_{X^{j-2}} + |F2|_{H^{j-1}}` for the fixed
/// splitting above (an upper bound for the true infimum, equivalent at fixed
/// resolution).
pub fn norm_y(grid: &Grid, f: &Array2<f64>, j: usize) -> f64 {
    let (f1, f2) = y_split(grid, f);
    norm_x(grid, &f1, j - 2) + h_norm(grid, &f2, j - 1)
}

/// Fractional Sobolev norm of boundary Fourier data:
/// `(sum (1+n^2)^s |c_n|^2)^{1/2}` over the Hermitian spectrum.
pub fn boundary_fractional_norm(coeffs: &[Complex64], s: f64) -> f64 {
    let mut total = 0.0;
    for (n, c) in coeffs.iter().enumerate() {
        let w = (1.0 + (n * n) as f64).powf(s);
        let contrib = c.norm_sqr() * w;
        total += if n == 0 { contrib } else { 2.0 * contrib };
    }
    total.sqrt()
}

/// Result of the parametrization `w -> (b_w, B_w, Theta_w)`.
#[derive(Debug, Clone)]
pub struct Parametrization {
    /// Boundary data extracted from the traces of `w` (not sup-norm checked;
    /// membership in the solvable neighborhood is a separate test).
    pub perturbation: BoundaryPerturbation,
    /// Interior unknown with exactly zero trace.
    pub theta: Array2<f64>,
    /// The lifting correction `Theta_w - w`.
    pub lambda: Array2<f64>,
}

/// The radial coefficient `(m rho' Psi~_a + rho Psi~_a') / 6` multiplying the
/// lifting block of the parametrization.
pub fn lifting_coefficient_jet(profile: &RadialProfile, big_r: f64) -> Result<Jet> {
    let params = &profile.params;
    let m = params.m;
    let rho = weight_jet(big_r);
    let psi = big_psi_jet(params, big_r + params.a - 4.0)?;
    // m * rho' * Psi + rho * Psi'
    let rho_d = Jet([rho.0[1], rho.0[2], rho.0[3], rho.0[4], 0.0]).scale(m);
    let psi_d = Jet([psi.0[1], psi.0[2], psi.0[3], psi.0[4], 0.0]);
    // derivative slots above order 3 of the shifted jets are not tracked
    Ok(rho_d.mul(&psi).add(&rho.mul(&psi_d)).scale(1.0 / 6.0))
}

/// Extract boundary Fourier data of `w` and assemble `(b_w, B_w, Theta_w)`:
///
/// `b_w = -w(1,.) / (m Psi~_a(1))`, `B_w = w(7,.) / (m Psi~_a(7))`,
/// `Theta_w = w + (1/6)(m rho' Psi~_a + rho Psi~_a')(B_flat (R-1) + b_sharp (7-R))`.
///
/// `Theta_w` vanishes on both boundary rows by construction; the rows are
/// projected to exact zero to keep `rho^{-1}` terms clean downstream.
pub fn parametrize(
    grid: &Grid,
    profile: &RadialProfile,
    w: &GridFunction,
) -> Result<Parametrization> {
    if w.values.dim() != grid.shape() {
        return Err(Error::GridMismatch("parametrize: field shape".into()));
    }
    if !w.is_finite() {
        return Err(Error::Assembly("parametrize: non-finite field".into()));
    }
    let params = &profile.params;
    let m = params.m;
    let psi1 = big_psi_jet(params, params.a_minus())?.value();
    let psi7 = big_psi_jet(params, params.a_plus())?.value();
    let (nr, nt) = grid.shape();
    // Fourier coefficients of the two traces
    let mut traces = Array2::zeros((2, nt));
    for k in 0..nt {
        traces[[0, k]] = -w.values[[0, k]] / (m * psi1);
        traces[[1, k]] = w.values[[nr - 1, k]] / (m * psi7);
    }
    let coeffs = grid.fourier_coeffs(&traces);
    let n_keep = grid.n_theta / 3;
    let take = |row: usize| -> Vec<Complex64> {
        (0..=n_keep).map(|n| coeffs[[row, n]]).collect()
    };
    let pert = BoundaryPerturbation::from_complex_unchecked(
        &take(0),
        &take(1),
        w.symmetry,
    )?;
    // lifting block with analytic radial coefficient
    let b_sharp = trace_lift_derivs(&pert, Side::Inner, grid, 0, 0)?;
    let b_flat = trace_lift_derivs(&pert, Side::Outer, grid, 0, 0)?;
    let mut lambda = Array2::zeros((nr, nt));
    for i in 0..nr {
        let g = lifting_coefficient_jet(profile, grid.r[i])?.value();
        let rm1 = grid.r[i] - 1.0;
        let sm7 = 7.0 - grid.r[i];
        for k in 0..nt {
            lambda[[i, k]] = g * (b_flat[[i, k]] * rm1 + b_sharp[[i, k]] * sm7);
        }
    }
    let mut theta = &w.values + &lambda;
    for k in 0..nt {
        theta[[0, k]] = 0.0;
        theta[[nr - 1, k]] = 0.0;
    }
    Ok(Parametrization {
        perturbation: pert,
        theta,
        lambda,
    })
}

/// Maximal boundary trace left in `Theta_w` before the projection; a
/// consistency diagnostic for the algebraic cancellation.
pub fn parametrize_trace_defect(
    grid: &Grid,
    profile: &RadialProfile,
    w: &GridFunction,
) -> Result<f64> {
    let p = parametrize(grid, profile, w)?;
    let raw = &w.values + &p.lambda;
    let (nr, nt) = grid.shape();
    let mut worst: f64 = 0.0;
    for k in 0..nt {
        worst = worst.max(raw[[0, k]].abs()).max(raw[[nr - 1, k]].abs());
    }
    Ok(worst)
}

/// Membership test for the solvable neighborhood: `|Theta_w / rho|_inf <
/// inf(Psi~_a)/10` and `|b_w|_inf + |B_w|_inf < 1/10`.
pub fn in_neighborhood(grid: &Grid, profile: &RadialProfile, w: &GridFunction) -> Result<bool> {
    let p = parametrize(grid, profile, w)?;
    let ratio = divide_by_rho(grid, &p.theta);
    let mut sup_ratio: f64 = 0.0;
    for v in ratio.iter() {
        sup_ratio = sup_ratio.max(v.abs());
    }
    let mut inf_psi = f64::INFINITY;
    for i in 0..grid.n_r {
        inf_psi =
            inf_psi.min(big_psi_jet(&profile.params, grid.r[i] + profile.params.a - 4.0)?.value());
    }
    let sup_b = (0..grid.n_theta)
        .map(|k| p.perturbation.eval(Side::Inner, grid.theta[k]).abs())
        .fold(0.0, f64::max);
    let sup_bb = (0..grid.n_theta)
        .map(|k| p.perturbation.eval(Side::Outer, grid.theta[k]).abs())
        .fold(0.0, f64::max);
    Ok(sup_ratio < 0.1 * inf_psi && sup_b + sup_bb < 0.1)
}

/// Hardy quotient `|w/rho|_{H^j} / (|w|_{H^j} + |d_R w|_{H^j})` for zero-trace
/// fields.
pub fn hardy_quotient(grid: &Grid, w: &Array2<f64>, j: usize) -> Result<f64> {
    let (nr, nt) = grid.shape();
    let mut trace: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for v in w.iter() {
        scale = scale.max(v.abs());
    }
    for k in 0..nt {
        trace = trace.max(w[[0, k]].abs()).max(w[[nr - 1, k]].abs());
    }
    if trace > 1e-12 * scale.max(1e-300) {
        return Err(Error::domain(format!(
            "hardy_quotient requires zero trace; found {trace:.3e}"
        )));
    }
    let ratio = divide_by_rho(grid, w);
    let num = h_norm(grid, &ratio, j);
    let den = h_norm(grid, w, j) + h_norm(grid, &grid.deriv_r(w), j);
    Ok(num / den)
}
