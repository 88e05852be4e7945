//! Monte Carlo simulation of staged Brownian sampling.
//!
//! Only end-of-stage values matter to every sampler and statistic, so a stage
//! of length `tau` contributes a single `Normal(mu*tau, tau)` increment.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::bands::{classify, BandKind, HSpec};
use crate::error::{domain, Error, Result};
use crate::normal::Phi;
use crate::sampler::{next_stage, Family, SamplerSpec, SamplerState, CROSSING_GUARD};
use crate::stream::{replicate, Moments};

pub const STAGE_CAP: usize = 1_000_000;
pub const REPLICATION_CAP: u64 = 100_000_000;

const MC_DOMAIN: u64 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageRecord {
    pub length: f64,
    pub end_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub stages: Vec<StageRecord>,
    pub total_time: f64,
    pub stage_count: usize,
    pub overshoot: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct PathEnd {
    total_time: f64,
    stage_count: usize,
    end_value: f64,
}

/// Runs one path until the boundary is crossed at a stage end, reporting each
/// stage to `observe`. Returning `false` from `observe` stops the path early.
fn drive<R, F>(spec: &SamplerSpec, a: f64, rng: &mut R, mut observe: F) -> Result<PathEnd>
where
    R: Rng + ?Sized,
    F: FnMut(&StageRecord, &SamplerState) -> bool,
{
    if !(a > 0.0) {
        return Err(domain(format!("boundary a = {a} must be > 0")));
    }
    let mu = spec.mu;
    let mut state = SamplerState::start(spec, a);
    let mut value = 0.0;
    let mut total_time = 0.0;
    // A boundary within the crossing guard of the origin is crossed by the first stage.
    let degenerate = a <= CROSSING_GUARD;
    for count in 1..=STAGE_CAP {
        let (stage, mut next) = next_stage(spec, &state)?;
        let tau = stage.length;
        let z: f64 = rng.sample(StandardNormal);
        let increment = mu * tau + tau.sqrt() * z;
        value += increment;
        total_time += tau;
        next.advance(increment);
        state = next;
        let record = StageRecord { length: tau, end_value: value };
        let done = degenerate || !state.is_active();
        if !observe(&record, &state) || done {
            return Ok(PathEnd { total_time, stage_count: count, end_value: value });
        }
    }
    Err(Error::StageCap(STAGE_CAP))
}

/// Simulates one trajectory of `spec` toward boundary `a`.
pub fn simulate_trajectory<R: Rng + ?Sized>(spec: &SamplerSpec, a: f64, rng: &mut R) -> Result<Trajectory> {
    let mut stages = Vec::new();
    let end = drive(spec, a, rng, |rec, _| {
        stages.push(*rec);
        true
    })?;
    Ok(Trajectory {
        stages,
        total_time: end.total_time,
        stage_count: end.stage_count,
        overshoot: (end.end_value - a).max(0.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl From<&Moments> for Estimate {
    fn from(m: &Moments) -> Self {
        Self { mean: m.mean, se: m.se() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub sampler: String,
    pub mu: f64,
    pub a: f64,
    pub h: HSpec,
    /// `E(T - a/mu)`
    pub excess_time: Estimate,
    /// `E M`
    pub stages: Estimate,
    /// `E(T - a/mu) + h(a) E M`; the SE is that of the per-replication scalar.
    pub risk: Estimate,
    pub overshoot: Estimate,
    /// `E(X(T) - mu T)`, zero by Wald's identity.
    pub wald_gap: Estimate,
    pub reps: u64,
    pub seed: u64,
}

fn check_reps(reps: u64) -> Result<()> {
    if !(2..=REPLICATION_CAP).contains(&reps) {
        return Err(domain(format!("reps = {reps} must be in [2, {REPLICATION_CAP}]")));
    }
    Ok(())
}

/// Monte Carlo risk of `spec` at boundary `a` under cost ratio `h`.
pub fn estimate_risk(spec: &SamplerSpec, a: f64, h: &HSpec, reps: u64, seed: u64) -> Result<RiskEstimate> {
    check_reps(reps)?;
    let mu = spec.mu;
    let h_a = h.eval(a);
    let bank = replicate::<5, _>(reps, seed, MC_DOMAIN, |_, rng| {
        let end = drive(spec, a, rng, |_, _| true)?;
        let excess = end.total_time - a / mu;
        let m = end.stage_count as f64;
        Ok([
            excess,
            m,
            excess + h_a * m,
            (end.end_value - a).max(0.0),
            end.end_value - mu * end.total_time,
        ])
    })?;
    let [excess, stages, risk, overshoot, wald] = bank.0;
    Ok(RiskEstimate {
        sampler: spec.label(),
        mu,
        a,
        h: *h,
        excess_time: (&excess).into(),
        stages: (&stages).into(),
        risk: Estimate { mean: excess.mean + h_a * stages.mean, se: risk.se() },
        overshoot: (&overshoot).into(),
        wald_gap: (&wald).into(),
        reps,
        seed,
    })
}

/// Limiting mean stage count of a sampler: `m`, `m + Phi(z)` or `1/Phi(-z)`.
pub fn stage_count_limit(spec: &SamplerSpec) -> Option<f64> {
    match spec.family {
        Family::Interior { m, .. } => Some(m as f64),
        Family::Boundary { m, z } => Some(m as f64 + Phi(z)),
        Family::Geometric { z } => Some(1.0 / Phi(-z)),
        Family::FixedGroup { .. } => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageCountRow {
    pub a: f64,
    pub mean_stages: f64,
    pub se: f64,
    pub limit: Option<f64>,
    pub gap: Option<f64>,
}

/// Empirical `E M` across an increasing grid of boundaries.
pub fn stage_count_limit_check(
    spec: &SamplerSpec,
    a_grid: &[f64],
    reps: u64,
    seed: u64,
) -> Result<Vec<StageCountRow>> {
    check_reps(reps)?;
    if a_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(domain("a grid must be strictly increasing"));
    }
    if let Family::Interior { m, h } = spec.family {
        let band = classify(&h)?;
        if band.m != m || band.kind != BandKind::Interior {
            return Err(Error::Precondition(format!(
                "interior sampler with m = {m} but h = {h} is in band {band:?}"
            )));
        }
    }
    let limit = stage_count_limit(spec);
    a_grid
        .iter()
        .map(|&a| {
            let bank = replicate::<1, _>(reps, seed, MC_DOMAIN, |_, rng| {
                Ok([drive(spec, a, rng, |_, _| true)?.stage_count as f64])
            })?;
            let m = bank.0[0];
            Ok(StageCountRow {
                a,
                mean_stages: m.mean,
                se: m.se(),
                limit,
                gap: limit.map(|l| (m.mean - l).abs()),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScheduleReport {
    /// `(1 - eps) (1/mu)^(1 - 2^-k) F_h^(k)(a)`
    pub threshold: f64,
    /// Fraction of replications with `a - X_k >= threshold`, early crossers included.
    pub frequency: f64,
    /// Fraction that crossed before completing `k` stages.
    pub early_fraction: f64,
    pub reps: u64,
}

/// Frequency with which the undershoot after `k` stages stays above the
/// schedule floor `(1 - eps) (1/mu)^(1 - 2^-k) F_h^(k)(a)`.
pub fn schedule_check(
    spec: &SamplerSpec,
    a: f64,
    h: &HSpec,
    k: usize,
    eps: f64,
    reps: u64,
    seed: u64,
) -> Result<ScheduleReport> {
    check_reps(reps)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(domain(format!("eps = {eps} must be in (0, 1)")));
    }
    let mu = spec.mu;
    let floor = crate::bands::f_iterate(h, k, a)?;
    let threshold = (1.0 - eps) * (1.0 / mu).powf(1.0 - 0.5f64.powi(k as i32)) * floor;
    if k == 0 {
        return Ok(ScheduleReport { threshold, frequency: 1.0, early_fraction: 0.0, reps });
    }
    let bank = replicate::<2, _>(reps, seed, MC_DOMAIN, |_, rng| {
        let mut undershoot = None;
        let end = drive(spec, a, rng, |_, state| {
            if state.stage_index as usize == k {
                undershoot = Some(state.remaining);
                false
            } else {
                true
            }
        })?;
        Ok(match undershoot {
            Some(u) if end.stage_count == k && u >= CROSSING_GUARD => {
                [if u >= threshold { 1.0 } else { 0.0 }, 0.0]
            }
            _ => [1.0, 1.0],
        })
    })?;
    Ok(ScheduleReport {
        threshold,
        frequency: bank.0[0].mean,
        early_fraction: bank.0[1].mean,
        reps,
    })
}
