//! Tensor-product collocation grid on the reference annulus `(1,7) x T`:
//! Chebyshev--Gauss--Lobatto nodes in the radial direction, uniform Fourier
//! nodes in the angle. Radial derivatives go through barycentric
//! differentiation matrices, angular derivatives through the FFT.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const R_MIN: f64 = 1.0;
pub const R_MAX: f64 = 7.0;

/// Ascending Chebyshev--Gauss--Lobatto nodes on `[a, b]`.
pub fn chebyshev_lobatto(n: usize, a: f64, b: f64) -> Array1<f64> {
    assert!(n >= 2);
    let mut x = Array1::zeros(n);
    let nm1 = (n - 1) as f64;
    for k in 0..n {
        let c = (PI * k as f64 / nm1).cos();
        x[k] = 0.5 * (a + b) - 0.5 * (b - a) * c;
    }
    x[0] = a;
    x[n - 1] = b;
    x
}

/// Barycentric weights of the Chebyshev--Gauss--Lobatto nodes (ascending).
pub fn lobatto_bary_weights(n: usize) -> Array1<f64> {
    let mut w = Array1::zeros(n);
    for k in 0..n {
        let mut v = if k % 2 == 0 { 1.0 } else { -1.0 };
        if k == 0 || k == n - 1 {
            v *= 0.5;
        }
        w[k] = v;
    }
    w
}

/// First-derivative collocation matrix for arbitrary distinct nodes with
/// barycentric weights `w` (negative-sum trick on the diagonal).
pub fn differentiation_matrix(x: &Array1<f64>, w: &Array1<f64>) -> Array2<f64> {
    let n = x.len();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i != j {
                let v = (w[j] / w[i]) / (x[i] - x[j]);
                d[[i, j]] = v;
                row_sum += v;
            }
        }
        d[[i, i]] = -row_sum;
    }
    d
}

/// Clenshaw--Curtis quadrature weights on `[a, b]` for the ascending Lobatto
/// nodes of size `n`.
pub fn clenshaw_curtis(n: usize, a: f64, b: f64) -> Array1<f64> {
    let nn = n - 1; // polynomial degree
    let mut w = Array1::zeros(n);
    if nn == 0 {
        w[0] = b - a;
        return w;
    }
    let end = if nn % 2 == 0 {
        1.0 / ((nn * nn - 1) as f64)
    } else {
        1.0 / ((nn * nn) as f64)
    };
    w[0] = end;
    w[n - 1] = end;
    for i in 1..nn {
        let th = PI * i as f64 / nn as f64;
        let mut v = 1.0;
        let kmax = nn / 2;
        for k in 1..=kmax {
            if nn % 2 == 0 && k == kmax {
                v -= (2.0 * k as f64 * th).cos() / ((4 * k * k - 1) as f64);
            } else {
                v -= 2.0 * (2.0 * k as f64 * th).cos() / ((4 * k * k - 1) as f64);
            }
        }
        w[i] = 2.0 * v / nn as f64;
    }
    w *= 0.5 * (b - a);
    // canonical ordering is descending in the cosine; symmetric, so ascending
    // nodes reuse the same weights
    w
}

/// Gauss--Legendre rule on `[a, b]` via the Golub--Welsch eigendecomposition.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Array1<f64>, Array1<f64>) {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kk = k as f64;
        let off = kk / (4.0 * kk * kk - 1.0).sqrt();
        jac[(k, k - 1)] = off;
        jac[(k - 1, k)] = off;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], 2.0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    let mut x = Array1::zeros(n);
    let mut w = Array1::zeros(n);
    for (i, (xi, wi)) in pairs.into_iter().enumerate() {
        x[i] = 0.5 * (a + b) + 0.5 * (b - a) * xi;
        w[i] = 0.5 * (b - a) * wi;
    }
    (x, w)
}

/// Row-stochastic barycentric interpolation matrix from `(x, w)` nodes to the
/// target points `xi`.
pub fn barycentric_matrix(x: &Array1<f64>, w: &Array1<f64>, xi: &Array1<f64>) -> Array2<f64> {
    let n = x.len();
    let m = xi.len();
    let mut p = Array2::zeros((m, n));
    for i in 0..m {
        let mut hit = None;
        for j in 0..n {
            if xi[i] == x[j] {
                hit = Some(j);
                break;
            }
        }
        if let Some(j) = hit {
            p[[i, j]] = 1.0;
            continue;
        }
        let mut denom = 0.0;
        for j in 0..n {
            let t = w[j] / (xi[i] - x[j]);
            p[[i, j]] = t;
            denom += t;
        }
        for j in 0..n {
            p[[i, j]] /= denom;
        }
    }
    p
}

/// Collocation grid on the reference annulus.
pub struct Grid {
    pub n_r: usize,
    pub n_theta: usize,
    /// Ascending radial nodes on `[1, 7]`.
    pub r: Array1<f64>,
    /// Uniform angular nodes on `[0, 2*pi)`.
    pub theta: Array1<f64>,
    /// Barycentric weights of the radial nodes.
    pub bary_w: Array1<f64>,
    /// First radial derivative matrix.
    pub d_r: Array2<f64>,
    /// Second radial derivative matrix (`d_r^2`).
    pub d_r2: Array2<f64>,
    /// Clenshaw--Curtis weights on `[1, 7]`.
    pub w_r: Array1<f64>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("n_r", &self.n_r)
            .field("n_theta", &self.n_theta)
            .finish()
    }
}

impl Grid {
    pub fn new(n_r: usize, n_theta: usize) -> Result<Self> {
        if n_r < 8 {
            return Err(Error::parameter(format!("n_r = {n_r} too small")));
        }
        if n_theta < 4 || n_theta % 2 != 0 {
            return Err(Error::parameter(format!(
                "n_theta = {n_theta} must be even and >= 4"
            )));
        }
        let r = chebyshev_lobatto(n_r, R_MIN, R_MAX);
        let bary_w = lobatto_bary_weights(n_r);
        let d_r = differentiation_matrix(&r, &bary_w);
        let d_r2 = d_r.dot(&d_r);
        let w_r = clenshaw_curtis(n_r, R_MIN, R_MAX);
        let theta = Array1::from_iter((0..n_theta).map(|j| 2.0 * PI * j as f64 / n_theta as f64));
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(n_theta);
        let fft_inv = planner.plan_fft_inverse(n_theta);
        Ok(Grid {
            n_r,
            n_theta,
            r,
            theta,
            bary_w,
            d_r,
            d_r2,
            w_r,
            fft_fwd,
            fft_inv,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_r, self.n_theta)
    }

    /// Signed Fourier frequency of FFT bin `j`.
    pub fn freq(&self, j: usize) -> i64 {
        if j <= self.n_theta / 2 {
            j as i64
        } else {
            j as i64 - self.n_theta as i64
        }
    }

    /// First radial derivative of a field sampled as `(n_r, n_theta)`.
    pub fn deriv_r(&self, u: &Array2<f64>) -> Array2<f64> {
        self.d_r.dot(u)
    }

    pub fn deriv_rr(&self, u: &Array2<f64>) -> Array2<f64> {
        self.d_r2.dot(u)
    }

    /// Angular Fourier coefficients, row by row: `u_hat[i, n] = (1/N) sum_j u[i,j] e^{-i n theta_j}`.
    pub fn fourier_coeffs(&self, u: &Array2<f64>) -> Array2<Complex64> {
        let (nr, nt) = u.dim();
        let mut out = Array2::from_elem((nr, nt), Complex64::new(0.0, 0.0));
        let mut buf = vec![Complex64::new(0.0, 0.0); nt];
        for i in 0..nr {
            for j in 0..nt {
                buf[j] = Complex64::new(u[[i, j]], 0.0);
            }
            self.fft_fwd.process(&mut buf);
            for j in 0..nt {
                out[[i, j]] = buf[j] / nt as f64;
            }
        }
        out
    }

    /// Synthesize a real field from angular Fourier coefficients.
    pub fn fourier_synth(&self, c: &Array2<Complex64>) -> Array2<f64> {
        let (nr, nt) = c.dim();
        let mut out = Array2::zeros((nr, nt));
        let mut buf = vec![Complex64::new(0.0, 0.0); nt];
        for i in 0..nr {
            for j in 0..nt {
                buf[j] = c[[i, j]];
            }
            self.fft_inv.process(&mut buf);
            for j in 0..nt {
                out[[i, j]] = buf[j].re;
            }
        }
        out
    }

    /// Angular derivative of the given order via the FFT. Odd orders zero the
    /// Nyquist mode.
    pub fn deriv_theta(&self, u: &Array2<f64>, order: usize) -> Array2<f64> {
        if order == 0 {
            return u.clone();
        }
        let nt = self.n_theta;
        let mut c = self.fourier_coeffs(u);
        for j in 0..nt {
            let n = self.freq(j) as f64;
            let factor = Complex64::new(0.0, n).powu(order as u32);
            for i in 0..c.nrows() {
                c[[i, j]] *= factor;
            }
        }
        if order % 2 == 1 && nt % 2 == 0 {
            let nyq = nt / 2;
            for i in 0..c.nrows() {
                c[[i, nyq]] = Complex64::new(0.0, 0.0);
            }
        }
        self.fourier_synth(&c)
    }

    /// Integral over the annulus against `dR dtheta`.
    pub fn integrate(&self, u: &Array2<f64>) -> f64 {
        let dtheta = 2.0 * PI / self.n_theta as f64;
        let mut s = 0.0;
        for i in 0..self.n_r {
            let mut row = 0.0;
            for j in 0..self.n_theta {
                row += u[[i, j]];
            }
            s += self.w_r[i] * row;
        }
        s * dtheta
    }

    /// L2 norm against `dR dtheta`.
    pub fn l2_norm(&self, u: &Array2<f64>) -> f64 {
        self.integrate(&u.mapv(|v| v * v)).max(0.0).sqrt()
    }

    /// Evaluate a field at an arbitrary point by barycentric interpolation in
    /// R and direct Fourier summation in theta.
    pub fn eval_at(&self, u: &Array2<f64>, r: f64, theta: f64) -> f64 {
        // radial interpolation of each Fourier coefficient would be O(N^2);
        // interpolate the column values in R first, then sum the series.
        let nt = self.n_theta;
        let mut vals = Array1::zeros(nt);
        let mut exact = None;
        for k in 0..self.n_r {
            if self.r[k] == r {
                exact = Some(k);
                break;
            }
        }
        match exact {
            Some(k) => {
                for j in 0..nt {
                    vals[j] = u[[k, j]];
                }
            }
            None => {
                let mut denom = 0.0;
                let mut coef = Array1::zeros(self.n_r);
                for k in 0..self.n_r {
                    let t = self.bary_w[k] / (r - self.r[k]);
                    coef[k] = t;
                    denom += t;
                }
                for j in 0..nt {
                    let mut s = 0.0;
                    for k in 0..self.n_r {
                        s += coef[k] * u[[k, j]];
                    }
                    vals[j] = s / denom;
                }
            }
        }
        // Fourier sum at theta
        let mut buf: Vec<Complex64> = vals.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft_fwd.process(&mut buf);
        let mut s = buf[0].re / nt as f64;
        for j in 1..nt {
            let n = self.freq(j) as f64;
            let c = buf[j] / nt as f64;
            s += (c * Complex64::new(0.0, n * theta).exp()).re;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lobatto_nodes_and_weights() {
        let x = chebyshev_lobatto(9, 1.0, 7.0);
        assert_eq!(x[0], 1.0);
        assert_eq!(x[8], 7.0);
        let w = clenshaw_curtis(9, 1.0, 7.0);
        // integrate x^6 exactly (degree 6 < 8)
        let integral: f64 = (0..9).map(|k| w[k] * x[k].powi(6)).sum();
        assert_abs_diff_eq!(integral, (7.0f64.powi(7) - 1.0) / 7.0, epsilon = 1e-9);
    }

    #[test]
    fn differentiation_is_spectral() {
        let n = 33;
        let x = chebyshev_lobatto(n, 1.0, 7.0);
        let w = lobatto_bary_weights(n);
        let d = differentiation_matrix(&x, &w);
        let f = x.mapv(|v| (0.7 * v).sin());
        let fx_exact = x.mapv(|v| 0.7 * (0.7 * v).cos());
        let fx = d.dot(&f.clone().insert_axis(ndarray::Axis(1)));
        for k in 0..n {
            assert_abs_diff_eq!(fx[[k, 0]], fx_exact[k], epsilon = 1e-10);
        }
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre(12, -1.0, 1.0);
        // exact for polynomials up to degree 23
        let integral: f64 = (0..12).map(|k| w[k] * x[k].powi(20)).sum();
        assert_abs_diff_eq!(integral, 2.0 / 21.0, epsilon = 1e-13);
        let total: f64 = w.sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-13);
    }

    #[test]
    fn fourier_derivative_exact_for_modes() {
        let g = Grid::new(17, 32).unwrap();
        let mut u = Array2::zeros((17, 32));
        for i in 0..17 {
            for j in 0..32 {
                u[[i, j]] = (3.0 * g.theta[j]).cos() + 0.5 * (5.0 * g.theta[j]).sin();
            }
        }
        let du = g.deriv_theta(&u, 1);
        let d2u = g.deriv_theta(&u, 2);
        for j in 0..32 {
            let th = g.theta[j];
            assert_abs_diff_eq!(
                du[[3, j]],
                -3.0 * (3.0 * th).sin() + 2.5 * (5.0 * th).cos(),
                epsilon = 1e-11
            );
            assert_abs_diff_eq!(
                d2u[[3, j]],
                -9.0 * (3.0 * th).cos() - 12.5 * (5.0 * th).sin(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn interpolation_reproduces_smooth_field() {
        let g = Grid::new(24, 16).unwrap();
        let mut u = Array2::zeros((24, 16));
        for i in 0..24 {
            for j in 0..16 {
                u[[i, j]] = (g.r[i] * 0.5).cos() * (2.0 * g.theta[j]).cos();
            }
        }
        let v = g.eval_at(&u, 3.3, 1.1);
        assert_abs_diff_eq!(v, (3.3f64 * 0.5).cos() * (2.0f64 * 1.1).cos(), epsilon = 1e-9);
    }

    #[test]
    fn integrate_constant() {
        let g = Grid::new(17, 16).unwrap();
        let u = Array2::from_elem((17, 16), 1.0);
        assert_abs_diff_eq!(g.integrate(&u), 6.0 * 2.0 * PI, epsilon = 1e-12);
    }
}
