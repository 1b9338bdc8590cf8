//! Gamma function and the Riemann-Liouville weight kernels.
//!
//! The weight kernel of order beta > 0 is
//!
//!   omega_beta(t) = t^(beta - 1) / Gamma(beta),
//!
//! so that omega_{2-alpha} is an antiderivative of omega_{1-alpha} and
//! the Caputo derivative of order alpha can be written as the
//! convolution of omega_{1-alpha} with the first derivative.

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Lanczos approximation, g = 7, nine coefficients.  Relative accuracy
/// is a few ulp for real arguments in the ranges used here.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const SQRT_TWO_PI: f64 = 2.506_628_274_631_000_5;
const LN_SQRT_TWO_PI: f64 = 0.918_938_533_204_672_7;
const PI: f64 = core::f64::consts::PI;

/// Gamma function for real arguments (poles at 0, -1, -2, ... return NaN).
pub fn gamma(z: f64) -> f64 {
    if z < 0.5 {
        // Reflection: Gamma(z) Gamma(1-z) = pi / sin(pi z).
        let s = (PI * z).sin();
        if s == 0.0 {
            return f64::NAN;
        }
        return PI / (s * gamma(1.0 - z));
    }
    let z = z - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    SQRT_TWO_PI * t.powf(z + 0.5) * (-t).exp() * acc
}

/// Natural log of |Gamma(z)| for z > 0, safe for arguments where
/// Gamma itself would overflow.
pub fn ln_gamma(z: f64) -> f64 {
    if z < 0.5 {
        let s = (PI * z).sin();
        return PI.ln() - s.abs().ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    LN_SQRT_TWO_PI + (z + 0.5) * t.ln() - t + acc.ln()
}

/// omega_beta(t) = t^(beta-1) / Gamma(beta) for t > 0.
pub fn omega(beta: f64, t: f64) -> f64 {
    t.powf(beta - 1.0) / gamma(beta)
}

/// (tau + delta)^p - tau^p evaluated without cancellation, tau > 0,
/// delta >= 0.  Factoring out tau^p turns the difference into
/// expm1(p ln1p(delta/tau)), which stays accurate even when
/// delta/tau is far below machine precision.
pub fn pow_diff(tau: f64, delta: f64, p: f64) -> f64 {
    debug_assert!(tau > 0.0 && delta >= 0.0);
    tau.powf(p) * (p * (delta / tau).ln_1p()).exp_m1()
}

/// Mittag-Leffler function E_alpha(z) = sum_j z^j / Gamma(j alpha + 1)
/// for z >= 0 and alpha in (0, 1].
///
/// Terms are formed in log space so large arguments neither overflow
/// prematurely nor lose the tail; summation stops once a term falls
/// below 1e-17 of the running sum past the term peak.  Arguments whose
/// value exceeds f64 range are reported as overflow rather than
/// returned as infinity.
pub fn mittag_leffler(alpha: f64, z: f64) -> crate::error::Result<f64> {
    use crate::error::Error;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::ParamDomain { name: "alpha", value: alpha, constraint: "alpha in (0, 1]" });
    }
    if z < 0.0 {
        return Err(Error::MittagLefflerNegative { z });
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let ln_z = z.ln();
    // Scale sums by the largest term to keep them representable.
    let mut ln_max = f64::NEG_INFINITY;
    let mut scaled_sum = 0.0_f64;
    let mut prev_ln_term = f64::NEG_INFINITY;
    let mut past_peak = false;
    for j in 0..200_000u64 {
        let ln_term = j as f64 * ln_z - ln_gamma(j as f64 * alpha + 1.0);
        if ln_term < prev_ln_term {
            past_peak = true;
        }
        prev_ln_term = ln_term;
        if ln_term > ln_max {
            scaled_sum = scaled_sum * (ln_max - ln_term).exp() + 1.0;
            ln_max = ln_term;
        } else {
            let t = (ln_term - ln_max).exp();
            scaled_sum += t;
            if past_peak && t < 1e-17 * scaled_sum {
                break;
            }
        }
    }
    let ln_value = ln_max + scaled_sum.ln();
    if ln_value > 709.0 {
        return Err(Error::MittagLefflerOverflow { z });
    }
    Ok(ln_value.exp())
}
