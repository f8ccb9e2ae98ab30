//! Log-gamma, digamma and trigamma for positive real arguments.
//!
//! All three shift the argument upward with the standard recurrences until it
//! is large enough for the asymptotic (Stirling / Bernoulli-number) series to
//! reach double precision, then undo the shift. Accurate to about 1e-13
//! relative for arguments down to 1e-6.

use std::f64::consts::PI;

const SHIFT_TARGET: f64 = 15.0;
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// ln Γ(x) for x > 0. Returns NaN for non-positive or non-finite input.
pub fn ln_gamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NAN;
    }
    let mut z = x;
    // ln(x (x+1) ... (x+n-1)) accumulated as a product, flushed into a log
    // sum whenever it grows large.
    let mut shift_log = 0.0;
    let mut prod = 1.0;
    while z < SHIFT_TARGET {
        prod *= z;
        if prod > 1e200 || prod < 1e-200 {
            shift_log += prod.ln();
            prod = 1.0;
        }
        z += 1.0;
    }
    shift_log += prod.ln();

    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2
                * (1.0 / 360.0
                    - inv2
                        * (1.0 / 1260.0
                            - inv2 * (1.0 / 1680.0 - inv2 * (1.0 / 1188.0 - inv2 * (691.0 / 360360.0))))));
    (z - 0.5) * z.ln() - z + HALF_LN_TWO_PI + series - shift_log
}

/// ln B(a, b) = ln Γ(a) + ln Γ(b) − ln Γ(a + b).
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// ψ(x), the logarithmic derivative of Γ, for x > 0.
pub fn digamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NAN;
    }
    let mut z = x;
    let mut acc = 0.0;
    while z < SHIFT_TARGET {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    acc + z.ln() - 0.5 / z - series
}

/// ψ′(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NAN;
    }
    let mut z = x;
    let mut acc = 0.0;
    while z < SHIFT_TARGET {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // 1/z + 1/(2z²) + Σ B_2k / z^(2k+1)
    let series = inv
        + 0.5 * inv2
        + inv
            * inv2
            * (1.0 / 6.0
                - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0)))));
    acc + series
}

/// ψ′(1) = π²/6.
pub const TRIGAMMA_ONE: f64 = PI * PI / 6.0;
