//! Scaled complementary error function and related quantities.
//!
//! The function used throughout the steady-state analysis is
//!
//! ```text
//! f(x) = (2/π) e^{x²} ∫_x^∞ e^{-z²} dz = erfcx(x) / √π
//! ```
//!
//! which differs from the usual `erfcx` by a factor `1/√π`. Its companion
//! `m(x) = 1/π - x f(x)` appears in every first-moment formula, and is
//! evaluated here without the cancellation that the naive expression suffers
//! for large positive `x`.

use std::f64::consts::{FRAC_1_PI, PI};

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Above this the continued fraction converges in a few dozen terms.
const CF_THRESHOLD: f64 = 2.0;
/// Above this `m(x)` switches to its asymptotic series.
const ASYMPTOTIC_THRESHOLD: f64 = 8.0;

/// `f(x) = (2/π) e^{x²} ∫_x^∞ e^{-z²} dz`.
///
/// Overflows to `+inf` for `x < -26.6`, where the true value exceeds
/// `f64::MAX`; use [`ScaledValue`] (via [`f_scaled`]) when negative
/// arguments of that size can occur.
pub fn erfcx_scaled(x: f64) -> f64 {
    if x >= 0.0 {
        f_nonneg(x)
    } else {
        FRAC_2_SQRT_PI * (x * x).exp() - f_nonneg(-x)
    }
}

/// Standard `erfcx(x) = e^{x²} erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    erfcx_scaled(x) * PI.sqrt()
}

fn f_nonneg(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < CF_THRESHOLD {
        (x * x).exp() * libm::erfc(x) / PI.sqrt()
    } else {
        continued_fraction(x) * FRAC_1_PI
    }
}

/// `K(x) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))` so that
/// `erfc(x) = e^{-x²} K(x) / √π`. Modified Lentz, valid for `x > 0`.
fn continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..5000 {
        let a = n as f64 * 0.5;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// `m(x) = 1/π - x f(x)` for `x ≥ 0`, where it lies in `(0, 1/π]`.
fn m_nonneg(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < ASYMPTOTIC_THRESHOLD {
        FRAC_1_PI - x * f_nonneg(x)
    } else {
        // m(x) = (1/π) Σ_{n≥1} (-1)^{n+1} (2n-1)!! / (2x²)^n
        let u = 1.0 / (2.0 * x * x);
        let mut term = u;
        let mut sum = 0.0;
        let mut n = 1.0;
        loop {
            sum += term;
            let next = -term * (2.0 * n + 1.0) * u;
            if next.abs() < 1e-18 * sum.abs() || next.abs() >= term.abs() {
                break;
            }
            term = next;
            n += 1.0;
        }
        sum * FRAC_1_PI
    }
}

/// A positive number stored as `value · e^{log_scale}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledValue {
    pub value: f64,
    pub log_scale: f64,
}

impl ScaledValue {
    pub fn ln(&self) -> f64 {
        self.value.ln() + self.log_scale
    }

    /// Value expressed relative to `e^{scale}`.
    pub fn rescaled(&self, scale: f64) -> f64 {
        self.value * (self.log_scale - scale).exp()
    }
}

/// `f(x)` and `m(x) = 1/π - x f(x)` sharing one exponent, finite for all real `x`.
pub fn f_and_m_scaled(x: f64) -> (ScaledValue, ScaledValue) {
    if x >= 0.0 {
        let f = ScaledValue { value: f_nonneg(x), log_scale: 0.0 };
        let m = ScaledValue { value: m_nonneg(x), log_scale: 0.0 };
        (f, m)
    } else {
        // f(x) = e^{x²} [2/√π - e^{-x²} f(-x)],  m(x) = 1/π + |x| f(x)
        let s = x * x;
        let decay = (-s).exp();
        let fv = FRAC_2_SQRT_PI - decay * f_nonneg(-x);
        let mv = decay * FRAC_1_PI - x * fv;
        (
            ScaledValue { value: fv, log_scale: s },
            ScaledValue { value: mv, log_scale: s },
        )
    }
}

/// `f(x)` in scaled form; never overflows.
pub fn f_scaled(x: f64) -> ScaledValue {
    f_and_m_scaled(x).0
}

/// `1/π - x f(x)` for any real `x` (may overflow for very negative `x`).
pub fn one_over_pi_minus_x_f(x: f64) -> f64 {
    let (_, m) = f_and_m_scaled(x);
    m.rescaled(0.0)
}
