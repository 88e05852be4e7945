//! Flat report rows. Field order is the column order of the CSV schemas.

use serde::Serialize;

use crate::bands::{self, BandKind, HSpec, RiskRegime};
use crate::error::Result;
use crate::mc::RiskEstimate;
use crate::seqtest::{ProcedureReport, Table1Block};

/// One Monte Carlo cell. Boundary samplers carry their `z` in the label.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McRow {
    pub sampler: String,
    pub mu: f64,
    pub a: f64,
    pub h_spec: String,
    pub reps: u64,
    pub seed: u64,
    pub mean_excess_time: f64,
    pub se_excess_time: f64,
    pub mean_stages: f64,
    pub se_stages: f64,
    pub risk: f64,
    pub se_risk: f64,
    pub mean_overshoot: f64,
}

impl McRow {
    pub fn new(est: &RiskEstimate) -> Self {
        Self {
            sampler: est.sampler.clone(),
            mu: est.mu,
            a: est.a,
            h_spec: est.h.to_string(),
            reps: est.reps,
            seed: est.seed,
            mean_excess_time: est.excess_time.mean,
            se_excess_time: est.excess_time.se,
            mean_stages: est.stages.mean,
            se_stages: est.stages.se,
            risk: est.risk.mean,
            se_risk: est.risk.se,
            mean_overshoot: est.overshoot.mean,
        }
    }
}

/// One (procedure, truth) cell of a two-decision test. `r` is the integrated
/// risk over both truths and repeats on both rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeqRow {
    pub procedure: String,
    pub d_over_c: f64,
    pub d: f64,
    pub k_or_mstar: String,
    pub truth: u8,
    pub reps: u64,
    #[serde(rename = "EN")]
    pub en: f64,
    #[serde(rename = "se_EN")]
    pub se_en: f64,
    #[serde(rename = "EM")]
    pub em: f64,
    #[serde(rename = "se_EM")]
    pub se_em: f64,
    pub err_rate: f64,
    pub r: f64,
    pub se_r: f64,
}

pub fn seq_rows(rep: &ProcedureReport) -> [SeqRow; 2] {
    rep.truths.map(|t| SeqRow {
        procedure: rep.procedure.clone(),
        d_over_c: rep.d_over_c,
        d: rep.d,
        k_or_mstar: rep.size.clone(),
        truth: t.truth,
        reps: rep.reps,
        en: t.n.mean,
        se_en: t.n.se,
        em: t.m.mean,
        se_em: t.m.se,
        err_rate: t.err_rate,
        r: rep.r,
        se_r: rep.se_r,
    })
}

/// Fixed-width rendering with the columns `EN`, `EM`, `r` and `r(delta)/r (%)`.
pub fn format_table1(blocks: &[Table1Block]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<14}{:>10}{:>10}{:>10}{:>14}\n", "procedure", "EN", "EM", "r", "r(delta)/r %"));
    for block in blocks {
        out.push_str(&format!("d/c = {}\n", block.d_over_c));
        for row in &block.rows {
            out.push_str(&format!(
                "{:<14}{:>10.1}{:>10.1}{:>10.4}{:>14.1}\n",
                row.report.procedure, row.en, row.em, row.report.r, row.relative
            ));
        }
    }
    out
}

/// Classification of `h` with the constants that go with its band.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandsReport {
    pub h: HSpec,
    pub mu: f64,
    pub a: f64,
    pub m: u32,
    pub kind: BandKind,
    #[serde(rename = "Q", skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_star: Option<f64>,
    pub kappa: f64,
    pub h_m_a: f64,
    pub h_a: f64,
    /// Stage count for the constant ratio `d/c` at `a`, when a ratio is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_star: Option<u32>,
    pub risk_coefficient: f64,
    pub asymptotic_risk: f64,
}

pub fn bands_report(h: &HSpec, mu: f64, a: f64, d_over_c: Option<f64>) -> Result<BandsReport> {
    let class = bands::classify(h)?;
    let m = class.m;
    let z_star = match class.kind {
        BandKind::Boundary => Some(bands::z_star(m, mu, h)?),
        BandKind::Interior => None,
    };
    let regime = match z_star {
        Some(z_star) => RiskRegime::Boundary { z_star },
        None => RiskRegime::Interior,
    };
    let h_a = h.eval(a);
    Ok(BandsReport {
        h: *h,
        mu,
        a,
        m,
        kind: class.kind,
        q: class.q,
        z_star,
        kappa: bands::kappa(m, mu)?,
        h_m_a: bands::h_m(m, a)?,
        h_a,
        m_star: d_over_c.map(|r| bands::m_star(mu, a, r)).transpose()?,
        risk_coefficient: bands::risk_coefficient(m, regime),
        asymptotic_risk: bands::asymptotic_risk(m, regime, h_a),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands_report_examples() {
        let h: HSpec = "1*x^0.5*log^0".parse().unwrap();
        let r = bands_report(&h, 1.0, 100.0, None).unwrap();
        assert_eq!((r.m, r.kind, r.q), (1, BandKind::Boundary, Some(1.0)));
        let r = bands_report(&"1*x^0.3*log^0".parse().unwrap(), 1.0, 100.0, Some(1.0)).unwrap();
        assert_eq!((r.m, r.kind, r.q, r.z_star), (2, BandKind::Interior, None, None));
        assert_eq!(r.risk_coefficient, 2.0);
        assert!(r.m_star.is_some());
        let r = bands_report(&"5*x^0.5*log^0".parse().unwrap(), 1.0, 100.0, None).unwrap();
        let z = r.z_star.unwrap();
        assert!((crate::normal::hazard(z) - 0.2).abs() < 1e-12);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["kind"], "boundary");
        assert_eq!(json["Q"], 5.0);
    }

    #[test]
    fn seq_rows_split_truths() {
        use crate::seqtest::*;
        let hyp = GaussianHypotheses::new(-0.25, 0.25).unwrap();
        let cfg = TestConfig::with_ratio(0.001, 1.0).unwrap();
        let rep = evaluate(&Design::new(hyp, cfg, Procedure::FixedGroup(20)).unwrap(), 200, 3).unwrap();
        let rows = seq_rows(&rep);
        assert_eq!(rows[0].truth, 0);
        assert_eq!(rows[1].truth, 1);
        assert_eq!(rows[0].r, rows[1].r);
        assert_eq!(rows[1].k_or_mstar, "20");
        let json = serde_json::to_value(&rows[0]).unwrap();
        assert!(json.get("se_EN").is_some());
    }
}
