//! Smooth cutoff functions built from a high-order polynomial smoothstep
//! `q(x)`, extended by 0 below 0 and by 1 above 1. The step is the C^7
//! monotone polynomial of degree 15 whose first seven derivatives vanish at
//! both ends, so the glued pieces can be differentiated spectrally at
//! realistic grid sizes (exponential partitions of unity are Gevrey-only and
//! stall Chebyshev convergence until N is in the thousands).
//!
//! Two shapes are exposed:
//! * `chi`: increasing transition, 0 on (-inf, -1], 1 on [1, +inf);
//! * `chi_tilde`: even plateau, 1 on |s| <= 1/2, 0 on |s| >= 1.
//!
//! All evaluators return the value together with derivatives up to order 4,
//! computed analytically (no differencing).

/// Maximum derivative order carried through the crate for closed-form pieces.
pub const MAX_DERIV: usize = 4;

/// Value and derivatives up to order `MAX_DERIV` of a scalar function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet(pub [f64; MAX_DERIV + 1]);

impl Jet {
    pub fn constant(c: f64) -> Self {
        let mut d = [0.0; MAX_DERIV + 1];
        d[0] = c;
        Jet(d)
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    pub fn deriv(&self, k: usize) -> f64 {
        self.0[k]
    }

    /// Leibniz product of two jets.
    pub fn mul(&self, other: &Jet) -> Jet {
        let mut out = [0.0; MAX_DERIV + 1];
        for n in 0..=MAX_DERIV {
            let mut s = 0.0;
            for k in 0..=n {
                s += binom(n, k) * self.0[k] * other.0[n - k];
            }
            out[n] = s;
        }
        Jet(out)
    }

    pub fn add(&self, other: &Jet) -> Jet {
        let mut out = [0.0; MAX_DERIV + 1];
        for n in 0..=MAX_DERIV {
            out[n] = self.0[n] + other.0[n];
        }
        Jet(out)
    }

    pub fn scale(&self, c: f64) -> Jet {
        let mut out = self.0;
        for v in out.iter_mut() {
            *v *= c;
        }
        Jet(out)
    }

    /// Reciprocal jet 1/f, valid when f != 0.
    pub fn recip(&self) -> Jet {
        // g = 1/f: derivatives from (f*g)^(n) = delta_{n0}.
        let mut g = [0.0; MAX_DERIV + 1];
        g[0] = 1.0 / self.0[0];
        for n in 1..=MAX_DERIV {
            let mut s = 0.0;
            for k in 1..=n {
                s += binom(n, k) * self.0[k] * g[n - k];
            }
            g[n] = -s / self.0[0];
        }
        Jet(g)
    }

    /// Composition with an affine reparametrization: returns the jet of
    /// x -> f(c*x + b) given the jet of f at c*x + b.
    pub fn affine_chain(&self, c: f64) -> Jet {
        let mut out = self.0;
        let mut fac = 1.0;
        for (k, v) in out.iter_mut().enumerate() {
            if k > 0 {
                fac *= c;
            }
            *v *= fac;
        }
        Jet(out)
    }
}

fn binom(n: usize, k: usize) -> f64 {
    const TABLE: [[f64; 5]; 5] = [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, 2.0, 1.0, 0.0, 0.0],
        [1.0, 3.0, 3.0, 1.0, 0.0],
        [1.0, 4.0, 6.0, 4.0, 1.0],
    ];
    TABLE[n][k]
}

/// Smoothness order of the step: q has `STEP_ORDER` vanishing derivatives at
/// x = 0 and x = 1.
pub const STEP_ORDER: usize = 7;

/// Coefficients of the degree-(2K+1) smoothstep
/// `q(x) = x^{K+1} sum_i binom(K+i, i) binom(2K+1, K-i) (-x)^i`.
/// Index k holds the coefficient of x^{K+1+k}.
const STEP_COEFFS: [f64; STEP_ORDER + 1] = {
    const K: usize = STEP_ORDER;
    let mut c = [0.0; K + 1];
    let mut i = 0;
    while i <= K {
        let b1 = binom_u128(K + i, i);
        let b2 = binom_u128(2 * K + 1, K - i);
        let v = (b1 * b2) as f64;
        c[i] = if i % 2 == 0 { v } else { -v };
        i += 1;
    }
    c
};

const fn binom_u128(n: usize, k: usize) -> u128 {
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    let mut j = 0;
    while j < k {
        num *= (n - j) as u128;
        den *= (j + 1) as u128;
        j += 1;
    }
    num / den
}

/// Jet of the smooth step q, with q = 0 for x <= 0 and q = 1 for x >= 1.
pub fn step_jet(x: f64) -> Jet {
    if x <= 0.0 {
        return Jet::constant(0.0);
    }
    if x >= 1.0 {
        return Jet::constant(1.0);
    }
    if x > 0.5 {
        // q(x) = 1 - q(1-x); the alternating Horner sum cancels badly on this
        // half, the reflected one does not.
        let m = step_half(1.0 - x);
        return Jet([1.0 - m.0[0], m.0[1], -m.0[2], m.0[3], -m.0[4]]);
    }
    step_half(x)
}

/// Horner evaluation of q and its first four derivatives for x in (0, 1/2]:
/// q(x) = sum_k STEP_COEFFS[k] x^{K+1+k}.
fn step_half(x: f64) -> Jet {
    const K: usize = STEP_ORDER;
    let mut out = [0.0; MAX_DERIV + 1];
    for (d, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in (0..=K).rev() {
            let p = (K + 1 + k) as f64;
            // falling factorial p (p-1) ... (p-d+1)
            let mut fac = 1.0;
            for t in 0..d {
                fac *= p - t as f64;
            }
            acc = acc * x + STEP_COEFFS[k] * fac;
        }
        let base = (K + 1 - d) as f64;
        *slot = acc * x.powf(base);
    }
    Jet(out)
}

/// Increasing cutoff: 0 on (-inf, -1], 1 on [1, +inf), smooth in between.
pub fn chi_jet(s: f64) -> Jet {
    step_jet((s + 1.0) / 2.0).affine_chain(0.5)
}

pub fn chi(s: f64) -> f64 {
    chi_jet(s).value()
}

/// Even plateau cutoff: 1 for |s| <= 1/2, 0 for |s| >= 1.
pub fn chi_tilde_jet(s: f64) -> Jet {
    let abs = s.abs();
    if abs <= 0.5 {
        return Jet::constant(1.0);
    }
    if abs >= 1.0 {
        return Jet::constant(0.0);
    }
    // chi_tilde(s) = q(2(1-|s|)); d|s|/ds = sign(s).
    let inner = step_jet(2.0 * (1.0 - abs)).affine_chain(-2.0);
    if s >= 0.0 {
        inner
    } else {
        Jet([inner.0[0], -inner.0[1], inner.0[2], -inner.0[3], inner.0[4]])
    }
}

pub fn chi_tilde(s: f64) -> f64 {
    chi_tilde_jet(s).value()
}
