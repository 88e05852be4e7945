//! Multistage tests of two simple hypotheses about a unit-variance Gaussian mean,
//! driven by the log-likelihood process.
//!
//! The variable-stage test runs the interior-band samplers of both hypotheses
//! on their normalized log-likelihood processes: the first stage is the smaller
//! of the two first stages, the likelihood-favoured sampler continues from the
//! distance still to go, and sampling stops at the end of any stage where
//! `|log(f1/f0)| >= log(1/d)`. The group-sequential comparator uses constant
//! integer stages with the same stopping rule.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::bands::{m_star, HSpec};
use crate::error::{domain, Error, Result};
use crate::mc::{Estimate, STAGE_CAP};
use crate::sampler::{next_stage, SamplerSpec, SamplerState};
use crate::stream::{replicate, MomentBank, StreamRng};

/// `H_0: Y ~ N(theta0, 1)` against `H_1: Y ~ N(theta1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussianHypotheses {
    pub theta0: f64,
    pub theta1: f64,
}

impl GaussianHypotheses {
    pub fn new(theta0: f64, theta1: f64) -> Result<Self> {
        if !(theta0.is_finite() && theta1.is_finite()) || theta0 == theta1 {
            return Err(domain(format!("hypotheses must differ (theta0={theta0}, theta1={theta1})")));
        }
        Ok(Self { theta0, theta1 })
    }

    /// `sum_j log(f1/f0)(Y_j)` for `n` observations with sum `sum_y`.
    pub fn llr(&self, sum_y: f64, n: f64) -> f64 {
        let (t0, t1) = (self.theta0, self.theta1);
        (t1 - t0) * sum_y - n * (t1 * t1 - t0 * t0) / 2.0
    }

    pub fn mean(&self, truth: usize) -> f64 {
        if truth == 0 { self.theta0 } else { self.theta1 }
    }
}

/// Per-hypothesis scale `sigma_i = SD_i log(f_i/f_{1-i})` and normalized drift
/// `mu_i = E_i log(f_i/f_{1-i}) / sigma_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LlrStats {
    pub sigma: [f64; 2],
    pub mu: [f64; 2],
}

pub fn llr_stats(hyp: &GaussianHypotheses) -> Result<LlrStats> {
    let gap = (hyp.theta1 - hyp.theta0).abs();
    if !(gap > 0.0) {
        return Err(domain("identical hypotheses"));
    }
    // log(f_i/f_{1-i})(Y) under f_i is N(gap^2/2, gap^2) for either i.
    let sigma = gap;
    let mu = gap * gap / 2.0 / sigma;
    Ok(LlrStats { sigma: [sigma; 2], mu: [mu; 2] })
}

/// Costs and weights of the integrated risk `sum_i [c E_i N + d E_i M + w_i P_i(D != i)] pi_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TestConfig {
    pub c: f64,
    pub d: f64,
    pub w: [f64; 2],
    pub prior: [f64; 2],
}

impl TestConfig {
    pub fn new(c: f64, d: f64, w: [f64; 2], prior: [f64; 2]) -> Result<Self> {
        let cfg = Self { c, d, w, prior };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `d = 0.001`, `c = d / d_over_c`, unit penalties, equal priors.
    pub fn with_ratio(d: f64, d_over_c: f64) -> Result<Self> {
        Self::new(d / d_over_c, d, [1.0, 1.0], [0.5, 0.5])
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.c) || !unit(self.d) {
            return Err(domain(format!("costs must lie in (0, 1) (c={}, d={})", self.c, self.d)));
        }
        if !(self.w[0] > 0.0 && self.w[1] > 0.0) {
            return Err(domain("penalties must be positive"));
        }
        let [p0, p1] = self.prior;
        if !(p0 >= 0.0 && p1 >= 0.0 && ((p0 + p1) - 1.0).abs() < 1e-12) {
            return Err(domain("priors must be nonnegative and sum to one"));
        }
        Ok(())
    }

    pub fn d_over_c(&self) -> f64 {
        self.d / self.c
    }

    /// `log(1/d)`, the stopping level of the unnormalized log-likelihood ratio.
    pub fn log_level(&self) -> f64 {
        -self.d.ln()
    }

    /// `a_i = log(1/d) / sigma_i`.
    pub fn boundaries(&self, stats: &LlrStats) -> [f64; 2] {
        [self.log_level() / stats.sigma[0], self.log_level() / stats.sigma[1]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Procedure {
    /// Variable-stage test from the interior-band samplers with `m_i*` stages.
    Optimal,
    /// Constant stage size `k`.
    FixedGroup(u64),
}

/// A procedure resolved against hypotheses and costs.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub hyp: GaussianHypotheses,
    pub cfg: TestConfig,
    pub stats: LlrStats,
    pub boundaries: [f64; 2],
    pub kind: DesignKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DesignKind {
    Optimal { m_star: [u32; 2], samplers: [SamplerSpec; 2] },
    FixedGroup(u64),
}

impl Design {
    pub fn new(hyp: GaussianHypotheses, cfg: TestConfig, procedure: Procedure) -> Result<Self> {
        cfg.validate()?;
        let stats = llr_stats(&hyp)?;
        let boundaries = cfg.boundaries(&stats);
        let kind = match procedure {
            Procedure::FixedGroup(0) => return Err(domain("group size must be >= 1")),
            Procedure::FixedGroup(k) => DesignKind::FixedGroup(k),
            Procedure::Optimal => {
                let h = HSpec::constant(cfg.d_over_c())?;
                let mut m_star_i = [0; 2];
                let mut samplers = Vec::with_capacity(2);
                for i in 0..2 {
                    m_star_i[i] = m_star(stats.mu[i], boundaries[i], cfg.d_over_c())?;
                    samplers.push(SamplerSpec::interior(m_star_i[i], h, stats.mu[i])?);
                }
                DesignKind::Optimal { m_star: m_star_i, samplers: [samplers[0], samplers[1]] }
            }
        };
        Ok(Self { hyp, cfg, stats, boundaries, kind })
    }

    /// `k` for group tests, `m*` (of the hypothesis-1 sampler) for the variable-stage test.
    pub fn size_label(&self) -> String {
        match &self.kind {
            DesignKind::FixedGroup(k) => k.to_string(),
            DesignKind::Optimal { m_star, .. } if m_star[0] == m_star[1] => m_star[0].to_string(),
            DesignKind::Optimal { m_star, .. } => format!("{}/{}", m_star[0], m_star[1]),
        }
    }

    pub fn procedure_label(&self) -> String {
        match &self.kind {
            DesignKind::FixedGroup(k) => format!("delta_g({k})"),
            DesignKind::Optimal { .. } => "delta".to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TestOutcome {
    /// Total observations.
    pub n: u64,
    /// Stages used.
    pub m: u64,
    pub decision: u8,
    pub truth: u8,
    /// `sum_j log(f1/f0)(Y_j)` at the end of the last stage.
    pub final_llr: f64,
}

/// Stage-by-stage state of one test under a given true mean.
struct Run<'a, R: Rng + ?Sized> {
    design: &'a Design,
    theta: f64,
    rng: &'a mut R,
    llr: f64,
    n: u64,
    m: u64,
}

impl<R: Rng + ?Sized> Run<'_, R> {
    /// Draws a stage of `k` observations; true once the stopping rule fires.
    fn stage(&mut self, k: u64) -> Result<bool> {
        if self.m as usize >= STAGE_CAP {
            return Err(Error::StageCap(STAGE_CAP));
        }
        let kf = k as f64;
        let z: f64 = self.rng.sample(StandardNormal);
        let sum_y = kf * self.theta + kf.sqrt() * z;
        self.llr += self.design.hyp.llr(sum_y, kf);
        self.n += k;
        self.m += 1;
        Ok(self.llr.abs() >= self.design.cfg.log_level())
    }

    /// `X_i(n)`, the normalized log-likelihood process favouring hypothesis `i`.
    fn normalized(&self, i: usize) -> f64 {
        let oriented = if i == 1 { self.llr } else { -self.llr };
        oriented / self.design.stats.sigma[i]
    }
}

fn integer_stage(length: f64) -> u64 {
    (length.ceil() as u64).max(1)
}

/// Simulates one test with data generated under hypothesis `truth`.
pub fn run_two_decision_test<R: Rng + ?Sized>(design: &Design, truth: usize, rng: &mut R) -> Result<TestOutcome> {
    if truth > 1 {
        return Err(domain(format!("truth index {truth} must be 0 or 1")));
    }
    let mut run = Run { design, theta: design.hyp.mean(truth), rng, llr: 0.0, n: 0, m: 0 };
    match &design.kind {
        DesignKind::FixedGroup(k) => while !run.stage(*k)? {},
        DesignKind::Optimal { samplers, .. } => {
            let a = design.boundaries;
            let (first0, next0) = next_stage(&samplers[0], &SamplerState::start(&samplers[0], a[0]))?;
            let (first1, next1) = next_stage(&samplers[1], &SamplerState::start(&samplers[1], a[1]))?;
            let k = integer_stage(first0.length.min(first1.length));
            if !run.stage(k)? {
                // ties go to hypothesis 0
                let favoured = usize::from(run.llr > 0.0);
                let spec = &samplers[favoured];
                let mut state = if favoured == 1 { next1 } else { next0 };
                loop {
                    state.remaining = a[favoured] - run.normalized(favoured);
                    let k = if state.is_active() {
                        let (stage, next) = next_stage(spec, &state)?;
                        state = next;
                        integer_stage(stage.length)
                    } else {
                        // Only reachable if the two-sided level is not the favoured boundary.
                        1
                    };
                    if run.stage(k)? {
                        break;
                    }
                }
            }
        }
    }
    Ok(TestOutcome {
        n: run.n,
        m: run.m,
        decision: u8::from(run.llr > 0.0),
        truth: truth as u8,
        final_llr: run.llr,
    })
}

/// Integrated risk and its standard error from raw outcome samples, indexed by truth.
pub fn integrated_risk(outcomes: &[Vec<TestOutcome>; 2], cfg: &TestConfig) -> Result<(f64, f64)> {
    let mut r = 0.0;
    let mut var = 0.0;
    for (i, sample) in outcomes.iter().enumerate() {
        if sample.is_empty() {
            return Err(domain(format!("no outcomes under hypothesis {i}")));
        }
        let mut bank = MomentBank::<1>::default();
        for o in sample {
            bank.push([loss(cfg, i, o)]);
        }
        let mom = bank.0[0];
        r += cfg.prior[i] * mom.mean;
        var += (cfg.prior[i] * mom.se()).powi(2);
    }
    Ok((r, var.sqrt()))
}

fn loss(cfg: &TestConfig, truth: usize, o: &TestOutcome) -> f64 {
    let wrong = if o.decision as usize != truth { cfg.w[truth] } else { 0.0 };
    cfg.c * o.n as f64 + cfg.d * o.m as f64 + wrong
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TruthSummary {
    pub truth: u8,
    pub n: Estimate,
    pub m: Estimate,
    pub err_rate: f64,
    /// `c N + d M + w 1{D != i}` averaged under this hypothesis.
    pub loss: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProcedureReport {
    pub procedure: String,
    pub size: String,
    pub d_over_c: f64,
    pub d: f64,
    pub reps: u64,
    pub seed: u64,
    pub truths: [TruthSummary; 2],
    pub r: f64,
    pub se_r: f64,
}

impl ProcedureReport {
    /// Prior-weighted `E N`.
    pub fn mean_n(&self, prior: [f64; 2]) -> f64 {
        prior[0] * self.truths[0].n.mean + prior[1] * self.truths[1].n.mean
    }

    pub fn mean_m(&self, prior: [f64; 2]) -> f64 {
        prior[0] * self.truths[0].m.mean + prior[1] * self.truths[1].m.mean
    }
}

const SEQ_DOMAIN: u64 = 100;

/// Streams `reps` tests per hypothesis and reduces them to a [`ProcedureReport`].
///
/// Every procedure evaluated with the same seed sees the same random streams.
pub fn evaluate(design: &Design, reps: u64, seed: u64) -> Result<ProcedureReport> {
    if reps < 2 {
        return Err(domain("reps must be >= 2"));
    }
    let cfg = &design.cfg;
    let mut truths = Vec::with_capacity(2);
    for truth in 0..2usize {
        let bank = replicate::<4, _>(reps, seed, SEQ_DOMAIN + truth as u64, |_, rng: &mut StreamRng| {
            let o = run_two_decision_test(design, truth, rng)?;
            let wrong = if o.decision as usize != truth { 1.0 } else { 0.0 };
            Ok([o.n as f64, o.m as f64, wrong, loss(cfg, truth, &o)])
        })?;
        let [n, m, wrong, l] = bank.0;
        truths.push(TruthSummary {
            truth: truth as u8,
            n: (&n).into(),
            m: (&m).into(),
            err_rate: wrong.mean,
            loss: (&l).into(),
        });
    }
    let truths = [truths[0], truths[1]];
    let r = cfg.prior[0] * truths[0].loss.mean + cfg.prior[1] * truths[1].loss.mean;
    let se_r = ((cfg.prior[0] * truths[0].loss.se).powi(2) + (cfg.prior[1] * truths[1].loss.se).powi(2)).sqrt();
    Ok(ProcedureReport {
        procedure: design.procedure_label(),
        size: design.size_label(),
        d_over_c: cfg.d_over_c(),
        d: cfg.d,
        reps,
        seed,
        truths,
        r,
        se_r,
    })
}

/// Grid search of the group size minimizing integrated risk.
pub fn best_group_size(
    hyp: GaussianHypotheses,
    cfg: TestConfig,
    k_range: &[u64],
    reps: u64,
    seed: u64,
) -> Result<(u64, Vec<ProcedureReport>)> {
    if k_range.is_empty() {
        return Err(domain("empty group-size range"));
    }
    let curve = k_range
        .iter()
        .map(|&k| evaluate(&Design::new(hyp, cfg, Procedure::FixedGroup(k))?, reps, seed))
        .collect::<Result<Vec<_>>>()?;
    let best = curve
        .iter()
        .zip(k_range)
        .min_by(|x, y| x.0.r.total_cmp(&y.0.r))
        .map(|(_, &k)| k)
        .expect("nonempty");
    Ok((best, curve))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table1Row {
    pub report: ProcedureReport,
    pub en: f64,
    pub em: f64,
    /// `100 r(delta) / r`
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table1Block {
    pub d_over_c: f64,
    pub best_k: u64,
    pub rows: Vec<Table1Row>,
    /// `(k, r)` over the searched group sizes.
    pub curve: Vec<(u64, f64)>,
}

/// Variable-stage test against group-sequential tests with `k = 1`, the best
/// `k` in `k_range`, and twice the best, for each cost ratio.
pub fn table1(
    hyp: GaussianHypotheses,
    d: f64,
    d_over_c: &[f64],
    k_range: &[u64],
    reps: u64,
    seed: u64,
) -> Result<Vec<Table1Block>> {
    d_over_c
        .iter()
        .map(|&ratio| {
            let cfg = TestConfig::with_ratio(d, ratio)?;
            let optimal = evaluate(&Design::new(hyp, cfg, Procedure::Optimal)?, reps, seed)?;
            let (best_k, curve) = best_group_size(hyp, cfg, k_range, reps, seed)?;
            let find = |k: u64| -> Result<ProcedureReport> {
                match k_range.iter().position(|&kk| kk == k) {
                    Some(i) => Ok(curve[i].clone()),
                    None => evaluate(&Design::new(hyp, cfg, Procedure::FixedGroup(k))?, reps, seed),
                }
            };
            let reports = vec![optimal, find(1)?, find(best_k)?, find(2 * best_k)?];
            let base = reports[0].r;
            let rows = reports
                .into_iter()
                .map(|report| Table1Row {
                    en: report.mean_n(cfg.prior),
                    em: report.mean_m(cfg.prior),
                    relative: 100.0 * base / report.r,
                    report,
                })
                .collect();
            Ok(Table1Block {
                d_over_c: ratio,
                best_k,
                rows,
                curve: k_range.iter().copied().zip(curve.iter().map(|c| c.r)).collect(),
            })
        })
        .collect()
}
