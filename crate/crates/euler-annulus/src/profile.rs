//! Radial steady state on the annulus `(a-3, a+3)`.
//!
//! The stream function is glued from a boundary power law and the torsion
//! function,
//!
//! `psi_a(r) = chi_tilde(rho~_a(r)) rho~_a(r)^m + (1 - chi_tilde(rho~_a(r))) tau_a(r)`,
//!
//! where `rho~_a(r) = min(r - a_-, a_+ - r)` and `tau_a` solves
//! `tau'' + tau'/r + 1 = 0` with zero Dirichlet data. The associated
//! non-autonomous nonlinearity has two branches `f_-` (inner) and `f_+`
//! (outer) with closed forms for small argument, the constant value 1 above 3,
//! and a numerically inverted middle segment.

use crate::cutoff::{chi_jet, chi_tilde_jet, Jet, MAX_DERIV};
use crate::error::{Error, Result};

/// Number of sample nodes in each cached middle-segment branch table.
const BRANCH_TABLE_NODES: usize = 2048;

/// Parameters of the radial construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileParams {
    /// Decay order of the stream function at the boundary.
    pub m: f64,
    /// Annulus center parameter; the annulus is `(a - 3, a + 3)`.
    pub a: f64,
}

impl ProfileParams {
    pub fn new(m: f64, a: f64) -> Result<Self> {
        if !(m >= 6.0) {
            return Err(Error::parameter(format!("m = {m} must satisfy m >= 6")));
        }
        let twice = 2.0 * m;
        if (twice - twice.round()).abs() < 1e-9 {
            return Err(Error::parameter(format!(
                "m = {m} must not be a half-integer"
            )));
        }
        if !(a >= 4.0) {
            return Err(Error::parameter(format!("a = {a} must satisfy a >= 4")));
        }
        Ok(ProfileParams { m, a })
    }

    pub fn a_minus(&self) -> f64 {
        self.a - 3.0
    }

    pub fn a_plus(&self) -> f64 {
        self.a + 3.0
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        if r < self.a_minus() - 1e-12 || r > self.a_plus() + 1e-12 {
            return Err(Error::domain(format!(
                "r = {r} outside [{}, {}]",
                self.a_minus(),
                self.a_plus()
            )));
        }
        Ok(())
    }
}

/// Torsion function `tau_a` and derivatives up to order 4.
pub fn torsion_jet(params: &ProfileParams, r: f64) -> Result<Jet> {
    params.check_radius(r)?;
    let (am, ap) = (params.a_minus(), params.a_plus());
    let aa = ap * ap - am * am;
    let dl = ap.ln() - am.ln();
    let d = 4.0 * dl;
    let c0 = am * am * ap.ln() - ap * ap * am.ln();
    let v = (aa * r.ln() - r * r * dl + c0) / d;
    Ok(Jet([
        v,
        (aa / r - 2.0 * r * dl) / d,
        (-aa / (r * r) - 2.0 * dl) / d,
        2.0 * aa / (r * r * r) / d,
        -6.0 * aa / (r * r * r * r) / d,
    ]))
}

pub fn torsion(params: &ProfileParams, r: f64) -> Result<f64> {
    Ok(torsion_jet(params, r)?.value())
}

/// Location and value of the unique maximum of `tau_a`.
///
/// The peak solves `tau_a'(m_a) = 0`, i.e. `m_a^2 = (a_+^2 - a_-^2) / (2 ln(a_+/a_-))`.
pub fn torsion_peak(params: &ProfileParams) -> (f64, f64) {
    let (am, ap) = (params.a_minus(), params.a_plus());
    let aa = ap * ap - am * am;
    let dl = ap.ln() - am.ln();
    let m_a = (aa / (2.0 * dl)).sqrt();
    let peak = torsion(params, m_a).expect("peak inside annulus");
    (m_a, peak)
}

/// Signed distance data to the nearest boundary component.
fn rho_tilde(params: &ProfileParams, r: f64) -> (f64, f64) {
    let inner = r - params.a_minus();
    let outer = params.a_plus() - r;
    if inner <= outer {
        (inner, 1.0)
    } else {
        (outer, -1.0)
    }
}

/// Jet of `rho~^m` as a function of r (sign carries the chain rule for the
/// outer side).
fn power_jet(s: f64, sign: f64, m: f64) -> Jet {
    let mut out = [0.0; MAX_DERIV + 1];
    let mut coef = 1.0;
    for (k, v) in out.iter_mut().enumerate() {
        *v = coef * s.powf(m - k as f64) * sign.powi(k as i32);
        coef *= m - k as f64;
    }
    Jet(out)
}

/// Glued radial profile `psi_a` with derivatives up to order 4.
///
/// When the plateau cutoff is exactly 0 or 1 the corresponding pure branch is
/// returned through the same code path, so the gluing identities of the
/// construction hold bitwise.
pub fn psi_jet(params: &ProfileParams, r: f64) -> Result<Jet> {
    params.check_radius(r)?;
    let (s, sign) = rho_tilde(params, r);
    let cut = chi_tilde_jet(s);
    if cut.value() == 0.0 {
        return torsion_jet(params, r);
    }
    let p = power_jet(s, sign, params.m);
    if cut.value() == 1.0 {
        return Ok(p);
    }
    // chain rule for chi_tilde(rho~(r)): rho~' = sign
    let c = Jet([
        cut.0[0],
        cut.0[1] * sign,
        cut.0[2],
        cut.0[3] * sign,
        cut.0[4],
    ]);
    let t = torsion_jet(params, r)?;
    let one_minus_c = Jet::constant(1.0).add(&c.scale(-1.0));
    Ok(c.mul(&p).add(&one_minus_c.mul(&t)))
}

pub fn radial_profile(params: &ProfileParams, r: f64) -> Result<f64> {
    Ok(psi_jet(params, r)?.value())
}

pub fn radial_profile_derivs(params: &ProfileParams, r: f64, order: usize) -> Result<f64> {
    if order > MAX_DERIV {
        return Err(Error::parameter(format!(
            "derivative order {order} > {MAX_DERIV}"
        )));
    }
    Ok(psi_jet(params, r)?.deriv(order))
}

/// Which branch of the nonlinearity: `Minus` is matched to the inner boundary,
/// `Plus` to the outer one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Minus,
    Plus,
}

/// Monotone section of the profile, cached as a lookup table for bracketing
/// the inversion `psi_a(r) = t`.
#[derive(Debug, Clone)]
struct MonotoneBranch {
    /// Radii, ordered so that the profile values are increasing.
    r: Vec<f64>,
    /// Profile values at `r` (strictly increasing).
    t: Vec<f64>,
}

impl MonotoneBranch {
    fn build(params: &ProfileParams, r_lo: f64, r_hi: f64) -> Result<Self> {
        let n = BRANCH_TABLE_NODES;
        let mut r = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        for k in 0..n {
            let x = r_lo + (r_hi - r_lo) * (k as f64) / ((n - 1) as f64);
            r.push(x);
            t.push(radial_profile(params, x)?);
        }
        if t[0] > t[n - 1] {
            r.reverse();
            t.reverse();
        }
        for k in 1..n {
            if t[k] <= t[k - 1] {
                return Err(Error::Assembly(format!(
                    "profile not monotone between r = {} and r = {}",
                    r[k - 1],
                    r[k]
                )));
            }
        }
        Ok(MonotoneBranch { r, t })
    }

    /// Solve `psi_a(r) = t` by bisection-safeguarded Newton inside the table
    /// bracket.
    fn invert(&self, params: &ProfileParams, t: f64) -> Result<f64> {
        if t < self.t[0] - 1e-12 || t > *self.t.last().unwrap() + 1e-12 {
            return Err(Error::domain(format!(
                "t = {t} outside branch range [{}, {}]",
                self.t[0],
                self.t.last().unwrap()
            )));
        }
        let idx = match self.t.partition_point(|v| *v < t) {
            0 => 0,
            i => (i - 1).min(self.t.len() - 2),
        };
        let (mut lo, mut hi) = (self.r[idx].min(self.r[idx + 1]), self.r[idx].max(self.r[idx + 1]));
        let increasing = self.r[idx + 1] > self.r[idx];
        let mut x = 0.5 * (lo + hi);
        for _ in 0..100 {
            let jet = psi_jet(params, x)?;
            let f = jet.value() - t;
            if f.abs() <= 1e-13 * t.abs().max(1.0) {
                return Ok(x);
            }
            // shrink the bracket
            if (f > 0.0) == increasing {
                hi = x;
            } else {
                lo = x;
            }
            let d = jet.deriv(1);
            let newton = x - f / d;
            x = if d != 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-15 * x.abs().max(1.0) {
                return Ok(x);
            }
        }
        Err(Error::non_convergence(format!(
            "branch inversion for t = {t}; residual {:.3e}",
            radial_profile(params, x)? - t
        )))
    }
}

/// The radial steady state with its cached branch inverters.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub params: ProfileParams,
    /// Location of the profile maximum.
    pub m_a: f64,
    /// Value at the maximum.
    pub peak: f64,
    branch_minus: MonotoneBranch,
    branch_plus: MonotoneBranch,
}

impl RadialProfile {
    pub fn new(params: ProfileParams) -> Result<Self> {
        let (m_a, peak) = torsion_peak(&params);
        if peak <= 3.0 {
            return Err(Error::Assembly(format!(
                "profile peak {peak} <= 3; middle segments do not reach the plateau"
            )));
        }
        // Monotone section endpoints: the inner branch starts where the pure
        // power law ends (psi = 2^-m at rho~ = 1/2 exactly) and stops at
        // psi = 3; same on the outer side.
        let r3_minus = bisect_level(&params, params.a_minus() + 0.5, m_a, 3.0)?;
        let r3_plus = bisect_level(&params, m_a, params.a_plus() - 0.5, 3.0)?;
        let branch_minus = MonotoneBranch::build(&params, params.a_minus() + 0.5, r3_minus)?;
        let branch_plus = MonotoneBranch::build(&params, r3_plus, params.a_plus() - 0.5)?;
        Ok(RadialProfile {
            params,
            m_a,
            peak,
            branch_minus,
            branch_plus,
        })
    }

    pub fn psi(&self, r: f64) -> Result<f64> {
        radial_profile(&self.params, r)
    }

    pub fn psi_jet(&self, r: f64) -> Result<Jet> {
        psi_jet(&self.params, r)
    }

    /// Evaluate the branch nonlinearity `f_-` or `f_+` at `t >= 0`.
    pub fn nonlinearity_eval(&self, branch: Branch, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::domain(format!("t = {t} < 0")));
        }
        let m = self.params.m;
        let small = 0.5f64.powf(m);
        if t >= 3.0 {
            return Ok(1.0);
        }
        if t <= small {
            return Ok(self.closed_form_f(branch, t));
        }
        let r = self.invert(branch, t)?;
        let jet = self.psi_jet(r)?;
        Ok(-(jet.deriv(2) + jet.deriv(1) / r))
    }

    /// Evaluate `f_-'` or `f_+'` at `t >= 0`.
    pub fn nonlinearity_deriv(&self, branch: Branch, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::domain(format!("t = {t} < 0")));
        }
        let m = self.params.m;
        let small = 0.5f64.powf(m);
        if t >= 3.0 {
            return Ok(0.0);
        }
        if t <= small {
            return Ok(self.closed_form_fprime(branch, t));
        }
        let r = self.invert(branch, t)?;
        self.fprime_on_profile_at(r)
    }

    /// Closed form of `f_{±}` on `[0, 2^{-m}]`:
    /// `f_{±}(t) = -m(m-1) t^{(m-2)/m} - m t^{(m-1)/m} / (t^{1/m} ± a_{∓ sign})`.
    fn closed_form_f(&self, branch: Branch, t: f64) -> f64 {
        let m = self.params.m;
        let denom = match branch {
            Branch::Minus => t.powf(1.0 / m) + self.params.a_minus(),
            Branch::Plus => t.powf(1.0 / m) - self.params.a_plus(),
        };
        -m * (m - 1.0) * t.powf((m - 2.0) / m) - m * t.powf((m - 1.0) / m) / denom
    }

    /// Closed form of `f_{±}'` on `[0, 2^{-m}]`.
    fn closed_form_fprime(&self, branch: Branch, t: f64) -> f64 {
        let m = self.params.m;
        let denom = match branch {
            Branch::Minus => t.powf(1.0 / m) + self.params.a_minus(),
            Branch::Plus => t.powf(1.0 / m) - self.params.a_plus(),
        };
        -(m - 1.0) * (m - 2.0) * t.powf(-2.0 / m) - (m - 1.0) * t.powf(-1.0 / m) / denom
            + 1.0 / (denom * denom)
    }

    fn invert(&self, branch: Branch, t: f64) -> Result<f64> {
        match branch {
            Branch::Minus => self.branch_minus.invert(&self.params, t),
            Branch::Plus => self.branch_plus.invert(&self.params, t),
        }
    }

    /// `f'(psi_a(r))` along the profile, through the differentiated ODE:
    /// `f'(psi_a(r)) = -(psi''' + psi''/r - psi'/r^2) / psi'(r)`.
    /// Only valid away from the peak, where `psi_a' != 0`; callers must be on
    /// the middle segment `2^{-m} < psi_a(r) < 3`.
    fn fprime_on_profile_at(&self, r: f64) -> Result<f64> {
        let jet = self.psi_jet(r)?;
        let d1 = jet.deriv(1);
        if d1.abs() < 1e-10 {
            return Err(Error::domain(format!(
                "profile derivative vanishes at r = {r}; cannot divide"
            )));
        }
        Ok(-(jet.deriv(3) + jet.deriv(2) / r - d1 / (r * r)) / d1)
    }

    /// Blended nonlinearity `f_a(r, t)`: the inner branch governs `r <= a - 1`
    /// and the outer branch `r >= a + 1`, switched by the smooth cutoff.
    pub fn nonlinearity_at(&self, r: f64, t: f64) -> Result<f64> {
        let x = chi_jet(r - self.params.a).value();
        if x == 0.0 {
            return self.nonlinearity_eval(Branch::Minus, t);
        }
        if x == 1.0 {
            return self.nonlinearity_eval(Branch::Plus, t);
        }
        Ok((1.0 - x) * self.nonlinearity_eval(Branch::Minus, t)?
            + x * self.nonlinearity_eval(Branch::Plus, t)?)
    }

    /// Blended derivative `f_a'(r, t) = ∂_t f_a(r, t)`.
    pub fn nonlinearity_deriv_at(&self, r: f64, t: f64) -> Result<f64> {
        let x = chi_jet(r - self.params.a).value();
        if x == 0.0 {
            return self.nonlinearity_deriv(Branch::Minus, t);
        }
        if x == 1.0 {
            return self.nonlinearity_deriv(Branch::Plus, t);
        }
        Ok((1.0 - x) * self.nonlinearity_deriv(Branch::Minus, t)?
            + x * self.nonlinearity_deriv(Branch::Plus, t)?)
    }

    /// `f_a'(r, psi_a(r))` along the profile, avoiding any inversion. On the
    /// plateau this is 0; in the boundary collars it is the closed form; in
    /// between it comes from the differentiated ODE.
    pub fn fprime_along_profile(&self, r: f64) -> Result<f64> {
        let t = self.psi(r)?;
        if t >= 3.0 {
            return Ok(0.0);
        }
        let m = self.params.m;
        let small = 0.5f64.powf(m);
        let branch = if r <= self.m_a { Branch::Minus } else { Branch::Plus };
        if t <= small {
            return Ok(self.closed_form_fprime(branch, t));
        }
        // The blend weight is constant on each middle segment (the cutoff only
        // varies on |r - a| < 1, where the profile sits on the plateau), so
        // the single-branch value is the blended one.
        self.fprime_on_profile_at(r)
    }

    /// Sup-norm residual of `psi'' + psi'/r + f_a(r, psi)` over interior
    /// collocation nodes.
    pub fn radial_residual(&self, n_grid: usize) -> Result<f64> {
        let (am, ap) = (self.params.a_minus(), self.params.a_plus());
        let mut sup: f64 = 0.0;
        for k in 1..n_grid {
            // Chebyshev-distributed interior nodes
            let x = (k as f64) * std::f64::consts::PI / (n_grid as f64);
            let r = 0.5 * (am + ap) + 0.5 * (ap - am) * x.cos();
            let jet = self.psi_jet(r)?;
            let res = jet.deriv(2) + jet.deriv(1) / r + self.nonlinearity_at(r, jet.value())?;
            sup = sup.max(res.abs());
        }
        Ok(sup)
    }
}

fn bisect_level(params: &ProfileParams, mut lo: f64, mut hi: f64, level: f64) -> Result<f64> {
    let flo = radial_profile(params, lo)? - level;
    let fhi = radial_profile(params, hi)? - level;
    if flo * fhi > 0.0 {
        return Err(Error::Assembly(format!(
            "level {level} not bracketed on [{lo}, {hi}]"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = radial_profile(params, mid)? - level;
        if (radial_profile(params, lo)? - level) * fm <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `Psi_a(r) = psi_a(r) / rho_a(r)^m` with `rho_a(r) = (a_+ - r)(r - a_-)/6`,
/// evaluated stably: in the boundary collars the quotient reduces to the
/// closed form `(6 / (a_+ - r))^m` resp. `(6 / (r - a_-))^m`.
pub fn big_psi_jet(params: &ProfileParams, r: f64) -> Result<Jet> {
    params.check_radius(r)?;
    let (s, _sign) = rho_tilde(params, r);
    let m = params.m;
    if s <= 0.45 {
        // pure power-law region: psi = rho~^m exactly
        let far = if r - params.a_minus() <= params.a_plus() - r {
            params.a_plus() - r // rho~ = r - a_-, psi/rho^m = (6/(a_+ - r))^m
        } else {
            r - params.a_minus()
        };
        let sign = if r - params.a_minus() <= params.a_plus() - r {
            -1.0
        } else {
            1.0
        };
        // g(r) = 6^m * far^{-m} with far' = sign, so
        // g^(k) = 6^m * (-m)(-m-1)...(-m-k+1) * far^{-m-k} * sign^k.
        let mut out = [0.0; MAX_DERIV + 1];
        let mut coef = 6.0f64.powf(m);
        let mut pw = -m;
        out[0] = coef * far.powf(-m);
        for k in 1..=MAX_DERIV {
            coef *= pw * sign;
            out[k] = coef * far.powf(pw - 1.0);
            pw -= 1.0;
        }
        return Ok(Jet(out));
    }
    let psi = psi_jet(params, r)?;
    let rho_m = {
        // rho_a^m jet via rho jet and log-derivative free products
        let (am, ap) = (params.a_minus(), params.a_plus());
        let rho = Jet([
            (ap - r) * (r - am) / 6.0,
            (ap + am - 2.0 * r) / 6.0,
            -2.0 / 6.0,
            0.0,
            0.0,
        ]);
        jet_powf(&rho, m)
    };
    Ok(psi.mul(&rho_m.recip()))
}

/// Jet of `f(r)^p` given the jet of a positive `f` (Faà di Bruno through
/// order 4, specialized to the power function).
pub fn jet_powf(f: &Jet, p: f64) -> Jet {
    let v = f.value();
    debug_assert!(v > 0.0);
    // u = f^p; u' = p f^{p-1} f'; expand with logarithmic derivatives.
    let w: [f64; 5] = f.0;
    let g = [
        v.powf(p),
        p * v.powf(p - 1.0),
        p * (p - 1.0) * v.powf(p - 2.0),
        p * (p - 1.0) * (p - 2.0) * v.powf(p - 3.0),
        p * (p - 1.0) * (p - 2.0) * (p - 3.0) * v.powf(p - 4.0),
    ];
    // Faà di Bruno with Bell polynomials in w[1..4]
    let (f1, f2, f3, f4) = (w[1], w[2], w[3], w[4]);
    Jet([
        g[0],
        g[1] * f1,
        g[1] * f2 + g[2] * f1 * f1,
        g[1] * f3 + g[2] * 3.0 * f1 * f2 + g[3] * f1 * f1 * f1,
        g[1] * f4
            + g[2] * (4.0 * f1 * f3 + 3.0 * f2 * f2)
            + g[3] * 6.0 * f1 * f1 * f2
            + g[4] * f1 * f1 * f1 * f1,
    ])
}

/// Limit objects as `a -> infinity`, living on the fixed interval `[1, 7]`.
#[derive(Debug, Clone)]
pub struct LimitProfile {
    pub m: f64,
    branch: MonotoneBranch2,
}

/// Lookup table for the increasing branch of the limit profile on (1, 4).
#[derive(Debug, Clone)]
struct MonotoneBranch2 {
    r: Vec<f64>,
    t: Vec<f64>,
}

/// `tau_bar(r) = (9 - (r-4)^2)/2`.
pub fn limit_torsion(r: f64) -> Result<f64> {
    check_unit_annulus(r)?;
    Ok(0.5 * (9.0 - (r - 4.0) * (r - 4.0)))
}

fn check_unit_annulus(r: f64) -> Result<()> {
    if !(1.0 - 1e-12..=7.0 + 1e-12).contains(&r) {
        return Err(Error::domain(format!("r = {r} outside [1, 7]")));
    }
    Ok(())
}

/// Jet of the limit profile `psi_bar` (same gluing as `psi_a`, with
/// `rho~(r) = min(r-1, 7-r)` and the parabolic torsion limit).
pub fn limit_psi_jet(m: f64, r: f64) -> Result<Jet> {
    check_unit_annulus(r)?;
    let (s, sign) = if r - 1.0 <= 7.0 - r {
        (r - 1.0, 1.0)
    } else {
        (7.0 - r, -1.0)
    };
    let cut = chi_tilde_jet(s);
    let tau = Jet([
        0.5 * (9.0 - (r - 4.0) * (r - 4.0)),
        -(r - 4.0),
        -1.0,
        0.0,
        0.0,
    ]);
    if cut.value() == 0.0 {
        return Ok(tau);
    }
    let p = power_jet(s, sign, m);
    if cut.value() == 1.0 {
        return Ok(p);
    }
    let c = Jet([
        cut.0[0],
        cut.0[1] * sign,
        cut.0[2],
        cut.0[3] * sign,
        cut.0[4],
    ]);
    let one_minus_c = Jet::constant(1.0).add(&c.scale(-1.0));
    Ok(c.mul(&p).add(&one_minus_c.mul(&tau)))
}

pub fn limit_profile(m: f64, r: f64) -> Result<f64> {
    Ok(limit_psi_jet(m, r)?.value())
}

impl LimitProfile {
    pub fn new(m: f64) -> Result<Self> {
        // increasing branch on [1.5, r3] where psi_bar = 3
        let mut lo = 1.5;
        let mut hi = 4.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if limit_profile(m, mid)? < 3.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r3 = 0.5 * (lo + hi);
        let n = BRANCH_TABLE_NODES;
        let mut r = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        for k in 0..n {
            let x = 1.5 + (r3 - 1.5) * (k as f64) / ((n - 1) as f64);
            r.push(x);
            t.push(limit_profile(m, x)?);
        }
        for k in 1..n {
            if t[k] <= t[k - 1] {
                return Err(Error::Assembly("limit profile not monotone".into()));
            }
        }
        Ok(LimitProfile {
            m,
            branch: MonotoneBranch2 { r, t },
        })
    }

    /// `f_bar(t)`: 1 for t >= 3, `-m(m-1) t^{(m-2)/m}` on `[0, 2^{-m}]`,
    /// middle segment by inversion of the limit profile.
    pub fn nonlinearity(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::domain(format!("t = {t} < 0")));
        }
        if t >= 3.0 {
            return Ok(1.0);
        }
        let m = self.m;
        if t <= 0.5f64.powf(m) {
            return Ok(-m * (m - 1.0) * t.powf((m - 2.0) / m));
        }
        let r = self.invert(t)?;
        Ok(-limit_psi_jet(m, r)?.deriv(2))
    }

    /// `f_bar'(t)`.
    pub fn nonlinearity_deriv(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::domain(format!("t = {t} < 0")));
        }
        if t >= 3.0 {
            return Ok(0.0);
        }
        let m = self.m;
        if t <= 0.5f64.powf(m) {
            return Ok(-(m - 1.0) * (m - 2.0) * t.powf(-2.0 / m));
        }
        let r = self.invert(t)?;
        let jet = limit_psi_jet(m, r)?;
        Ok(-jet.deriv(3) / jet.deriv(1))
    }

    /// `f_bar'(psi_bar(r))` along the limit profile.
    pub fn fprime_along_profile(&self, r: f64) -> Result<f64> {
        let t = limit_profile(self.m, r)?;
        if t >= 3.0 {
            return Ok(0.0);
        }
        if t <= 0.5f64.powf(self.m) {
            return Ok(-(self.m - 1.0) * (self.m - 2.0) * t.powf(-2.0 / self.m));
        }
        let jet = limit_psi_jet(self.m, r)?;
        Ok(-jet.deriv(3) / jet.deriv(1))
    }

    fn invert(&self, t: f64) -> Result<f64> {
        let tab = &self.branch;
        if t < tab.t[0] - 1e-12 || t > *tab.t.last().unwrap() + 1e-12 {
            return Err(Error::domain(format!("t = {t} outside limit branch")));
        }
        let idx = match tab.t.partition_point(|v| *v < t) {
            0 => 0,
            i => (i - 1).min(tab.t.len() - 2),
        };
        let (mut lo, mut hi) = (tab.r[idx], tab.r[idx + 1]);
        let mut x = 0.5 * (lo + hi);
        for _ in 0..100 {
            let jet = limit_psi_jet(self.m, x)?;
            let f = jet.value() - t;
            if f.abs() <= 1e-13 * t.abs().max(1.0) {
                return Ok(x);
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = jet.deriv(1);
            let newton = x - f / d;
            x = if d != 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Err(Error::non_convergence(format!("limit inversion at t = {t}")))
    }

    /// Sup residual of `psi_bar'' + f_bar(psi_bar)` at interior nodes.
    pub fn residual(&self, n_grid: usize) -> Result<f64> {
        let mut sup: f64 = 0.0;
        for k in 1..n_grid {
            let x = (k as f64) * std::f64::consts::PI / (n_grid as f64);
            let r = 4.0 + 3.0 * x.cos();
            let jet = limit_psi_jet(self.m, r)?;
            let res = jet.deriv(2) + self.nonlinearity(jet.value())?;
            sup = sup.max(res.abs());
        }
        Ok(sup)
    }
}

/// Scan for the smallest parameter `a0` (on a 0.1 grid from 4 upward) at which
/// the exact-gluing implications and the monotonicity margin both hold.
pub fn find_a0(m: f64) -> Result<f64> {
    'outer: for k in 0..200 {
        let a = 4.0 + 0.1 * k as f64;
        let params = ProfileParams::new(m, a)?;
        // gluing implications on a coarse scan
        for i in 0..4000 {
            let r = params.a_minus() + 6.0 * (i as f64 + 0.5) / 4000.0;
            let psi = radial_profile(&params, r)?;
            let (s, _) = rho_tilde(&params, r);
            let cut = chi_tilde_jet(s).value();
            if psi > 3.0 && cut != 0.0 {
                continue 'outer;
            }
            if psi < 0.5f64.powf(m) && cut != 1.0 {
                continue 'outer;
            }
        }
        // monotonicity margin on the transition zones
        let mut min_inner = f64::INFINITY;
        let mut max_outer = f64::NEG_INFINITY;
        for i in 0..=200 {
            let s = 0.5 + 0.5 * (i as f64) / 200.0;
            let d_in = psi_jet(&params, params.a_minus() + s)?.deriv(1);
            let d_out = psi_jet(&params, params.a_plus() - s)?.deriv(1);
            min_inner = min_inner.min(d_in);
            max_outer = max_outer.max(d_out);
        }
        if min_inner > 1e-3 && max_outer < -1e-3 {
            return Ok(a);
        }
    }
    Err(Error::Assembly("no a0 found below 24".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const M: f64 = 6.25;

    fn params(a: f64) -> ProfileParams {
        ProfileParams::new(M, a).unwrap()
    }

    #[test]
    fn torsion_boundary_zeros() {
        let p = params(4.0);
        assert_abs_diff_eq!(torsion(&p, 1.0).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(torsion(&p, 7.0).unwrap(), 0.0, epsilon = 1e-14);
        assert!(torsion(&p, 0.5).is_err());
    }

    #[test]
    fn torsion_center_value_frozen() {
        // (48 ln 4 - 15 ln 7) / (4 ln 7), independently evaluated in extended
        // precision.
        let expected = 4.798_972_490_592_532_2;
        assert_abs_diff_eq!(torsion(&params(4.0), 4.0).unwrap(), expected, epsilon = 1e-13);
    }

    #[test]
    fn torsion_peak_matches_bisection_and_closed_form() {
        let p = params(4.0);
        let (m_a, peak) = torsion_peak(&p);
        assert_abs_diff_eq!(m_a, 3.511_916_886_384_701_5, epsilon = 1e-12);
        assert_abs_diff_eq!(peak, 4.913_084_841_313_546_5, epsilon = 1e-12);
        // cross-check: bisect tau' on (a_-, a)
        let (mut lo, mut hi) = (1.0, 4.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if torsion_jet(&p, mid).unwrap().deriv(1) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_abs_diff_eq!(0.5 * (lo + hi), m_a, epsilon = 1e-10);
        // defining property at several a
        for a in [4.0, 9.0, 33.0] {
            let p = params(a);
            let (m_a, _) = torsion_peak(&p);
            assert_abs_diff_eq!(torsion_jet(&p, m_a).unwrap().deriv(1), 0.0, epsilon = 1e-10);
            assert!(m_a > p.a_minus() && m_a < a);
        }
    }

    #[test]
    fn torsion_peak_limit_location() {
        // m_a - (a - 4) -> 4 as a -> infinity
        let mut prev_gap = f64::INFINITY;
        for a in [10.0, 100.0, 1000.0] {
            let (m_a, _) = torsion_peak(&params(a));
            let gap = (m_a - (a - 4.0) - 4.0).abs();
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 0.01);
    }

    #[test]
    fn limit_values() {
        assert_abs_diff_eq!(limit_torsion(4.0).unwrap(), 4.5, epsilon = 1e-15);
        assert_abs_diff_eq!(limit_torsion(1.0).unwrap(), 0.0, epsilon = 1e-15);
        let lim = LimitProfile::new(M).unwrap();
        assert_abs_diff_eq!(lim.nonlinearity(3.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lim.nonlinearity(5.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn profile_pure_branches() {
        let p = params(8.0);
        // rho~ = 0.25 -> psi = 0.25^m (exactly the power-law code path)
        let r = p.a_minus() + 0.25;
        assert_eq!(radial_profile(&p, r).unwrap(), 0.25f64.powf(M));
        // rho~ = 1.5 -> psi = tau (identical code path)
        let r = p.a_minus() + 1.5;
        assert_eq!(radial_profile(&p, r).unwrap(), torsion(&p, r).unwrap());
        assert_eq!(radial_profile(&p, p.a_minus()).unwrap(), 0.0);
    }

    #[test]
    fn profile_derivs_match_finite_differences() {
        let p = params(6.0);
        let h = 1e-5;
        for &r in &[3.2, 3.75, 4.6, 6.0, 7.9, 8.35] {
            let jet = psi_jet(&p, r).unwrap();
            let fd = (radial_profile(&p, r + h).unwrap() - radial_profile(&p, r - h).unwrap())
                / (2.0 * h);
            assert_abs_diff_eq!(jet.deriv(1), fd, epsilon = 1e-7 * jet.deriv(1).abs().max(1.0));
            let fd2 = (psi_jet(&p, r + h).unwrap().deriv(1) - psi_jet(&p, r - h).unwrap().deriv(1))
                / (2.0 * h);
            assert_abs_diff_eq!(jet.deriv(2), fd2, epsilon = 1e-6 * jet.deriv(2).abs().max(1.0));
        }
    }

    #[test]
    fn nonlinearity_examples() {
        let prof = RadialProfile::new(params(8.0)).unwrap();
        assert_abs_diff_eq!(
            prof.nonlinearity_eval(Branch::Minus, 0.0).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            prof.nonlinearity_eval(Branch::Plus, 5.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        // matching point t = 2^{-m}: closed form against an independent
        // inline evaluation, and continuity against the inversion just above.
        let t = 0.5f64.powf(M);
        let expected = -M * (M - 1.0) * 0.5f64.powf(M - 2.0)
            - M * 0.5f64.powf(M - 1.0) / (0.5 + prof.params.a_minus());
        assert_abs_diff_eq!(
            prof.nonlinearity_eval(Branch::Minus, t).unwrap(),
            expected,
            epsilon = 1e-12
        );
        let just_above = prof.nonlinearity_eval(Branch::Minus, t * 1.0001).unwrap();
        assert_abs_diff_eq!(just_above, expected, epsilon = 1e-3);
        assert!(prof.nonlinearity_eval(Branch::Minus, -0.1).is_err());
    }

    #[test]
    fn nonlinearity_deriv_matches_finite_differences() {
        let prof = RadialProfile::new(params(8.0)).unwrap();
        let h = 1e-6;
        for &t in &[0.005, 0.3, 1.0, 2.2, 2.9] {
            for branch in [Branch::Minus, Branch::Plus] {
                let d = prof.nonlinearity_deriv(branch, t).unwrap();
                let fd = (prof.nonlinearity_eval(branch, t + h).unwrap()
                    - prof.nonlinearity_eval(branch, t - h).unwrap())
                    / (2.0 * h);
                assert_abs_diff_eq!(d, fd, epsilon = 1e-6 * d.abs().max(1.0));
            }
        }
    }

    #[test]
    fn radial_residual_small() {
        // The construction is an exact solution only once the gluing claim
        // holds, i.e. for a >= a0 (at a = 4 the torsion exceeds 3 inside the
        // cutoff transition zone and the residual is O(1)).
        let a0 = find_a0(M).unwrap();
        for a in [a0, 2.0 * a0, 8.0] {
            let prof = RadialProfile::new(params(a)).unwrap();
            let res = prof.radial_residual(256).unwrap();
            assert!(res <= 1e-8, "residual {res} at a = {a}");
        }
        let lim = LimitProfile::new(M).unwrap();
        assert!(lim.residual(256).unwrap() <= 1e-8);
    }

    #[test]
    fn gluing_claim_exact_above_a0() {
        let a0 = find_a0(M).unwrap();
        for a in [a0, 2.0 * a0, 4.0 * a0] {
            let p = params(a);
            for i in 0..10_000 {
                let r = p.a_minus() + 6.0 * (i as f64 + 0.5) / 10_000.0;
                let psi = radial_profile(&p, r).unwrap();
                if psi > 3.0 {
                    assert_eq!(psi, torsion(&p, r).unwrap());
                }
                if psi < 0.5f64.powf(M) {
                    let (s, _) = rho_tilde(&p, r);
                    assert_eq!(psi, s.powf(M));
                }
            }
        }
    }

    #[test]
    fn monotonicity_margin_uniform() {
        let a0 = find_a0(M).unwrap();
        let mut margins = Vec::new();
        for a in [a0, 2.0 * a0, 4.0 * a0] {
            let p = params(a);
            let mut min_d = f64::INFINITY;
            for i in 0..=400 {
                let r = p.a_minus() + 0.5 + 0.5 * (i as f64) / 400.0;
                min_d = min_d.min(psi_jet(&p, r).unwrap().deriv(1));
            }
            margins.push(min_d);
        }
        let eps_mono = 1e-3;
        for m in margins {
            assert!(m >= eps_mono, "margin {m}");
        }
    }

    #[test]
    fn limit_convergence_monotone() {
        let lim = LimitProfile::new(M).unwrap();
        let mut prev_psi = f64::INFINITY;
        let mut prev_f = f64::INFINITY;
        let mut prev_fp = f64::INFINITY;
        for a in [10.0, 100.0, 1000.0] {
            let p = params(a);
            let prof = RadialProfile::new(p).unwrap();
            let mut dpsi: f64 = 0.0;
            let mut dfp: f64 = 0.0;
            for i in 0..=600 {
                let big_r = 1.0 + 6.0 * (i as f64) / 600.0;
                let r = big_r + a - 4.0;
                dpsi = dpsi.max(
                    (radial_profile(&p, r).unwrap() - limit_profile(M, big_r).unwrap()).abs(),
                );
                // f'_{±}(psi_a) ∓ (m-1) rho^{-1} / a_{±} - f_bar'(psi_bar) -> 0
                if i > 0 && i < 600 {
                    let rho = (big_r - 1.0) * (7.0 - big_r) / 6.0;
                    let corr = if big_r <= 4.0 {
                        (M - 1.0) / (rho * p.a_minus())
                    } else {
                        -(M - 1.0) / (rho * p.a_plus())
                    };
                    let fp = prof.fprime_along_profile(r).unwrap();
                    let fbarp = lim.fprime_along_profile(big_r).unwrap();
                    dfp = dfp.max((fp + corr - fbarp).abs());
                }
            }
            let mut df: f64 = 0.0;
            for i in 0..=600 {
                let t = 3.0 * (i as f64) / 600.0;
                let fm = prof.nonlinearity_eval(Branch::Minus, t).unwrap();
                let fp = prof.nonlinearity_eval(Branch::Plus, t).unwrap();
                let fb = lim.nonlinearity(t).unwrap();
                df = df.max((fm - fb).abs().max((fp - fb).abs()));
            }
            assert!(dpsi < prev_psi, "psi convergence broke at a = {a}");
            assert!(df < prev_f, "f convergence broke at a = {a}");
            assert!(dfp < prev_fp, "f' convergence broke at a = {a}");
            prev_psi = dpsi;
            prev_f = df;
            prev_fp = dfp;
        }
    }

    #[test]
    fn overlap_identity() {
        let a0 = find_a0(M).unwrap();
        for a in [a0, 2.0 * a0] {
            let prof = RadialProfile::new(params(a)).unwrap();
            for i in 0..=100 {
                let r = a - 1.0 + 2.0 * (i as f64) / 100.0;
                let psi = prof.psi(r).unwrap();
                assert!(psi > 3.0, "psi = {psi} at r = {r}");
                assert_eq!(prof.nonlinearity_eval(Branch::Minus, psi).unwrap(), 1.0);
                assert_eq!(prof.nonlinearity_eval(Branch::Plus, psi).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn big_psi_positive_and_consistent() {
        let p = params(7.0);
        for &r in &[4.0 + 1e-9, 4.2, 4.55, 5.0, 7.0, 9.3, 9.999, 10.0 - 1e-9] {
            let bp = big_psi_jet(&p, r).unwrap().value();
            assert!(bp > 0.0);
            let rho = (p.a_plus() - r) * (r - p.a_minus()) / 6.0;
            let direct = radial_profile(&p, r).unwrap() / rho.powf(M);
            assert_abs_diff_eq!(bp, direct, epsilon = 1e-8 * bp.abs());
        }
    }
}
