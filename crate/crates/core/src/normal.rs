//! Standard-normal functions and the overshoot/stage-size kernels built on them.
//!
//! `Phi` comes from a correctly rounded `erfc`; the upper tail for large
//! arguments and `Delta` for positive arguments go through the Mills-ratio
//! continued fraction so that no cancellation happens in `phi(z) - z*Phi(-z)`.

use crate::error::{domain, Result};

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Above this the continued fraction is used for tail quantities.
const CF_THRESHOLD: f64 = 5.0;
const CF_DEPTH: usize = 400;

/// Standard normal density.
pub fn phi(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal distribution function.
#[allow(non_snake_case)]
pub fn Phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Upper tail `Phi(-z) = 1 - Phi(z)`, accurate in relative terms for large `z`.
pub fn upper_tail(z: f64) -> f64 {
    Phi(-z)
}

/// `w(z) = z + 2/(z + 3/(z + 4/(...)))`, the tail of the Mills-ratio continued
/// fraction. With it `Phi(-z)/phi(z) = w/(zw + 1)` and `1 - z*Phi(-z)/phi(z) = 1/(zw + 1)`.
fn mills_tail(z: f64) -> f64 {
    let mut acc = z;
    for n in (2..=CF_DEPTH).rev() {
        acc = z + n as f64 / acc;
    }
    acc
}

/// Mills ratio `Phi(-z)/phi(z)`.
pub fn mills_ratio(z: f64) -> f64 {
    if z > CF_THRESHOLD {
        let w = mills_tail(z);
        w / (z * w + 1.0)
    } else {
        Phi(-z) / phi(z)
    }
}

/// Hazard `phi(z) / (1 - Phi(z))`, strictly increasing from 0 to infinity.
pub fn hazard(z: f64) -> f64 {
    if z > CF_THRESHOLD {
        z + 1.0 / mills_tail(z)
    } else {
        phi(z) / Phi(-z)
    }
}

/// Natural log of the hazard; finite for all finite `z`.
pub fn ln_hazard(z: f64) -> f64 {
    if z > CF_THRESHOLD {
        hazard(z).ln()
    } else if z < -30.0 {
        // Phi(-z) rounds to 1 here.
        -0.5 * z * z - LN_SQRT_2PI
    } else {
        -0.5 * z * z - LN_SQRT_2PI - Phi(-z).ln()
    }
}

/// `Delta(z) = phi(z) - z*Phi(-z) = int_z^inf Phi(-x) dx`.
///
/// Negative arguments use `Delta(z) = Delta(-z) - z`, positive arguments above
/// the threshold the continued fraction. Past `z ~ 38` the result underflows
/// toward zero like `phi(z)/z^2`.
pub fn delta(z: f64) -> f64 {
    if z < 0.0 {
        return delta(-z) - z;
    }
    if z > CF_THRESHOLD {
        let w = mills_tail(z);
        phi(z) / (z * w + 1.0)
    } else {
        phi(z) - z * Phi(-z)
    }
}

/// Lower-tail quantile `Phi^{-1}(p)`.
pub fn inverse_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("probability {p} not in (0, 1)")));
    }
    let mut z = ppnd16(p);
    // One Halley step against erfc; AS241 is already near double precision.
    let (target, tail) = if p < 0.5 { (p, Phi(z)) } else { (1.0 - p, Phi(-z)) };
    let err = if p < 0.5 { tail - target } else { target - tail };
    let u = err / phi(z);
    if u.is_finite() {
        z -= u / (1.0 + 0.5 * z * u);
    }
    Ok(z)
}

/// Upper quantile `z_p`, i.e. `Phi(-z_p) = p`.
pub fn upper_quantile(p: f64) -> Result<f64> {
    Ok(-inverse_cdf(p)?)
}

/// Wichura's AS241 (PPND16), coefficients as published.
#[allow(clippy::excessive_precision)]
fn ppnd16(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.0809287301227 * r + 33430.575583588128) * r
                + 67265.770927008700853)
                * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437721)
                * r
                + 3.387132872796366608)
            / (((((((5226.495278852545925 * r + 28729.085735721942674) * r
                + 39307.89580009271061)
                * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247510771)
                * r
                + 687.18700749205790895)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((7.7454501427834140764e-4 * r + 0.022723844989269184583) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4)
                * r
                + 0.015198666563616457316)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757827e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((2.04426310338993978564e-15 * r + 1.4215117583164458876e-7)
                * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.014875361290850615025)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

fn check_stage_args(x: f64, mu: f64) -> Result<()> {
    if !(x > 0.0) {
        return Err(domain(format!("distance x = {x} must be > 0")));
    }
    if !(mu > 0.0) {
        return Err(domain(format!("drift mu = {mu} must be > 0")));
    }
    Ok(())
}

/// `sqrt(t(x, z))`: the positive root `u` of `mu*u^2 + z*u - x = 0`.
pub fn stage_root(x: f64, z: f64, mu: f64) -> Result<f64> {
    check_stage_args(x, mu)?;
    let s = (4.0 * x * mu + z * z).sqrt();
    // Pick the cancellation-free form for each sign of z.
    Ok(if z > 0.0 {
        2.0 * x / (s + z)
    } else {
        (s - z) / (2.0 * mu)
    })
}

/// Stage length `t(x, z)` solving `(x - mu*t)/sqrt(t) = z`; a stage of this
/// length ends across a boundary `x` away with probability `Phi(-z)`.
pub fn stage_size(x: f64, z: f64, mu: f64) -> Result<f64> {
    let u = stage_root(x, z, mu)?;
    Ok(u * u)
}

/// `E[X(t) - x; X(t) >= x]` for one stage of length `t(x, z)`.
pub fn expected_overshoot(x: f64, z: f64, mu: f64) -> Result<f64> {
    Ok(stage_root(x, z, mu)? * delta(z))
}

/// `E(Y; Y >= y)` for `Y ~ N(lambda, sigma^2)`.
pub fn truncated_normal_mean(y: f64, lambda: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(domain(format!("sigma = {sigma} must be > 0")));
    }
    let u = (y - lambda) / sigma;
    Ok(sigma * delta(u) + y * Phi(-u))
}
