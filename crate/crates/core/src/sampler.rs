//! Stage-size policies as explicit state machines.
//!
//! A [`SamplerState`] carries the distance still to go and the recursion
//! residue of the sampler; [`next_stage`] is a pure transition that emits the
//! next stage length. The caller applies the observed increment with
//! [`SamplerState::advance`].

use serde::{Deserialize, Serialize};

use crate::bands::HSpec;
use crate::error::{domain, Error, Result};
use crate::normal::{self, stage_size};

/// Remaining distances below this count as crossed.
pub const CROSSING_GUARD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Constant per-stage crossing probability `Phi(-z)`.
    Geometric { z: f64 },
    /// `delta^o_{m,h}`: `m - 1` planned stages, then geometric clean-up.
    Interior { m: u32, h: HSpec },
    /// `delta^+_{m,z}`: `m - 1` planned stages, a stage at quantile `z`, then clean-up.
    Boundary { m: u32, z: f64 },
    /// Constant stage length.
    FixedGroup { group: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    #[serde(flatten)]
    pub family: Family,
    pub mu: f64,
}

impl SamplerSpec {
    pub fn new(family: Family, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(domain(format!("drift mu = {mu} must be > 0")));
        }
        match family {
            Family::Interior { m, .. } | Family::Boundary { m, .. } if m < 1 => {
                return Err(domain("stage count m must be >= 1"));
            }
            Family::FixedGroup { group } if !(group > 0.0 && group.is_finite()) => {
                return Err(domain(format!("group size {group} must be > 0")));
            }
            Family::Geometric { z } | Family::Boundary { z, .. } if !z.is_finite() => {
                return Err(domain("z must be finite"));
            }
            _ => {}
        }
        Ok(Self { family, mu })
    }

    pub fn geometric(z: f64, mu: f64) -> Result<Self> {
        Self::new(Family::Geometric { z }, mu)
    }

    pub fn interior(m: u32, h: HSpec, mu: f64) -> Result<Self> {
        Self::new(Family::Interior { m, h }, mu)
    }

    pub fn boundary(m: u32, z: f64, mu: f64) -> Result<Self> {
        Self::new(Family::Boundary { m, z }, mu)
    }

    pub fn fixed_group(group: f64, mu: f64) -> Result<Self> {
        Self::new(Family::FixedGroup { group }, mu)
    }

    /// Short label used in reports, e.g. `boundary(m=1;z=-1.27)`.
    pub fn label(&self) -> String {
        match self.family {
            Family::Geometric { z } => format!("geometric(z={z})"),
            Family::Interior { m, h } => format!("interior(m={m};h={h})"),
            Family::Boundary { m, z } => format!("boundary(m={m};z={z})"),
            Family::FixedGroup { group } => format!("fixed_group(group={group})"),
        }
    }
}

/// Recursion residue of a sampler.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    /// Frozen-quantile geometric stages.
    Geometric { z: f64 },
    /// Next stage opens level `level` of `delta^o`, whose cost ratio is `h`
    /// composed with `f^{-1}` `depth` times.
    Interior { level: u32, depth: u32 },
    /// Next stage opens level `level` of `delta^+`.
    Boundary { level: u32 },
    /// `delta^+_1` has used its `t(a, z)` stage; the next one freezes `nu(remaining)`.
    BoundaryCleanup,
    FixedGroup,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerState {
    /// `a - X_k`, the distance to the boundary.
    pub remaining: f64,
    pub stage_index: u32,
    pub mode: Mode,
}

impl SamplerState {
    pub fn start(spec: &SamplerSpec, a: f64) -> Self {
        let mode = match spec.family {
            Family::Geometric { z } => Mode::Geometric { z },
            Family::Interior { m, .. } => Mode::Interior { level: m, depth: 0 },
            Family::Boundary { m, .. } => Mode::Boundary { level: m },
            Family::FixedGroup { .. } => Mode::FixedGroup,
        };
        Self { remaining: a, stage_index: 0, mode }
    }

    pub fn is_active(&self) -> bool {
        self.remaining >= CROSSING_GUARD
    }

    /// Applies the process increment observed over the last stage.
    pub fn advance(&mut self, increment: f64) {
        self.remaining -= increment;
    }
}

/// One emitted stage: its length and, where the sampler aims at a quantile,
/// the `z` it was sized with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage {
    pub length: f64,
    pub quantile: Option<f64>,
}

/// `f(x) = (6/sqrt(mu)) sqrt(x log(x + 1))`.
pub fn f_forward(x: f64, mu: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(domain(format!("f needs x >= 0, got {x}")));
    }
    Ok(6.0 / mu.sqrt() * (x * x.ln_1p()).sqrt())
}

/// Inverse of [`f_forward`] by bracketing and bisection.
pub fn f_inverse(y: f64, mu: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(domain(format!("f^-1 needs y >= 0, got {y}")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let f = |x: f64| 6.0 / mu.sqrt() * (x * x.ln_1p()).sqrt();
    let mut hi = 1.0f64;
    while f(hi) < y {
        hi *= 2.0;
    }
    while hi > 1e-300 && f(0.5 * hi) >= y {
        hi *= 0.5;
    }
    let mut lo = 0.5 * hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `h` composed with `f^{-1}` `depth` times, at `y`.
fn composed_h(h: &HSpec, depth: u32, y: f64, mu: f64) -> Result<f64> {
    if h.is_constant() {
        return Ok(h.coeff);
    }
    let mut x = y;
    for _ in 0..depth {
        x = f_inverse(x, mu)?;
    }
    Ok(h.eval(x))
}

/// `zeta(x) = -min(sqrt(h(x))/x^{1/4}, x^{1/7})`.
pub fn zeta(h_at_x: f64, x: f64) -> f64 {
    -(h_at_x.sqrt() / x.powf(0.25)).min(x.powf(1.0 / 7.0))
}

/// `nu(x) = -sqrt(log(x + 1))`.
pub fn nu(x: f64) -> f64 {
    -x.ln_1p().sqrt()
}

/// Emits the next stage and the successor state.
pub fn next_stage(spec: &SamplerSpec, state: &SamplerState) -> Result<(Stage, SamplerState)> {
    if !state.is_active() {
        return Err(Error::Inactive);
    }
    let y = state.remaining;
    let mu = spec.mu;
    let (z, mode) = match (state.mode, spec.family) {
        (Mode::Geometric { z }, _) => (z, Mode::Geometric { z }),
        (Mode::FixedGroup, Family::FixedGroup { group }) => {
            let next = SamplerState {
                stage_index: state.stage_index + 1,
                ..*state
            };
            return Ok((Stage { length: group, quantile: None }, next));
        }
        (Mode::Interior { level, depth }, Family::Interior { h, .. }) => {
            let h_y = composed_h(&h, depth, y, mu)?;
            if level >= 2 {
                let z = (y / (h_y * h_y)).ln_1p().sqrt();
                (z, Mode::Interior { level: level - 1, depth: depth + 1 })
            } else {
                let z = zeta(h_y, y);
                (z, Mode::Geometric { z })
            }
        }
        (Mode::Boundary { level }, Family::Boundary { z, .. }) => {
            if level >= 2 {
                let w = 1.0 - 0.5f64.powi(level as i32 - 1);
                ((w * y.ln_1p()).sqrt(), Mode::Boundary { level: level - 1 })
            } else {
                (z, Mode::BoundaryCleanup)
            }
        }
        (Mode::BoundaryCleanup, _) => {
            let z = nu(y);
            (z, Mode::Geometric { z })
        }
        (mode, family) => {
            return Err(Error::Precondition(format!(
                "state mode {mode:?} does not belong to sampler {family:?}"
            )))
        }
    };
    let length = stage_size(y, z, mu)?;
    let next = SamplerState {
        remaining: y,
        stage_index: state.stage_index + 1,
        mode,
    };
    Ok((Stage { length, quantile: Some(z) }, next))
}

/// `g(x) = Delta(-z)/(2 mu q) (sqrt(4 x mu + z^2) - z)`, `q = Phi(z)`: a bound on
/// the conditional mean undershoot after one more geometric stage.
pub fn undershoot_map(x: f64, z: f64, mu: f64) -> f64 {
    let q = normal::Phi(z);
    let s = (4.0 * x * mu + z * z).sqrt();
    let diff = if z > 0.0 { 4.0 * x * mu / (s + z) } else { s - z };
    normal::delta(-z) / (2.0 * mu * q) * diff
}

/// Positive fixed point of [`undershoot_map`], `Delta(-z) phi(z) / (mu q^2)`.
pub fn undershoot_fixed_point(z: f64, mu: f64) -> f64 {
    let q = normal::Phi(z);
    normal::delta(-z) * normal::phi(z) / (mu * q * q)
}

const BOUND_MAX_TERMS: usize = 10_000;

/// Upper bound on `E T - a/mu` under geometric sampling at quantile `z`.
///
/// The iterate series is cut once a term drops below `tol` times the running
/// sum. Near-certain-continuation quantiles (large positive `z`) make the
/// series decay too slowly to converge within the term cap.
pub fn geometric_time_bound(a: f64, z: f64, mu: f64, tol: f64) -> Result<f64> {
    if !(a > 0.0) || !(mu > 0.0) {
        return Err(domain(format!("bound needs a > 0 and mu > 0 (a={a}, mu={mu})")));
    }
    let q = normal::Phi(z);
    let lead = q * normal::delta(z) / (mu * normal::delta(-z));
    // z >= 0: lead g(a) + mu^-1 sum_{k>=2} g^(k)(a) q^k
    // z <  0: lead sum_{k>=1} g^(k)(a) q^(k-1)
    let (scale, mut weight) = if z >= 0.0 { (1.0 / mu, q) } else { (lead, 1.0) };
    let mut g = undershoot_map(a, z, mu);
    let mut sum = lead * g;
    for _ in 0..BOUND_MAX_TERMS {
        g = undershoot_map(g, z, mu);
        weight *= q;
        let term = scale * g * weight;
        sum += term;
        if term <= tol * sum {
            return Ok(sum);
        }
    }
    Err(Error::NotConverged(BOUND_MAX_TERMS))
}
