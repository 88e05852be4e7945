//! Critical functions `h_m`, the constants `kappa_m` and `C_k^m`, the iterates
//! `F_h^(k)`, band classification of a cost ratio `h`, and the first-order
//! optimal-risk coefficients.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::normal;

/// Largest stage index considered by [`m_star`] and [`classify`].
pub const MAX_STAGES: u32 = 30;

/// Cost ratio `h(x) = coeff * x^x_power * (log(x + e))^log_power`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct HSpec {
    pub coeff: f64,
    pub x_power: f64,
    pub log_power: f64,
}

impl HSpec {
    pub fn new(coeff: f64, x_power: f64, log_power: f64) -> Result<Self> {
        if !(coeff > 0.0 && coeff.is_finite()) {
            return Err(domain(format!("h coefficient {coeff} must be positive")));
        }
        if !x_power.is_finite() || !log_power.is_finite() {
            return Err(domain("h exponents must be finite"));
        }
        Ok(Self { coeff, x_power, log_power })
    }

    /// `h(x) = c`, used for the constant cost ratio `d/c` of a test.
    pub fn constant(c: f64) -> Result<Self> {
        Self::new(c, 0.0, 0.0)
    }

    /// `Q * x^(2^-m) * log(x+e)^(1/2 - 2^-m)`, asymptotic to `Q h_m`.
    pub fn critical(m: u32, q: f64) -> Result<Self> {
        let (p, l) = critical_exponents(m);
        Self::new(q, p, l)
    }

    pub fn is_constant(&self) -> bool {
        self.x_power == 0.0 && self.log_power == 0.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut v = self.coeff;
        if self.x_power != 0.0 {
            v *= x.powf(self.x_power);
        }
        if self.log_power != 0.0 {
            v *= (x + std::f64::consts::E).ln().powf(self.log_power);
        }
        v
    }
}

impl fmt::Display for HSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*x^{}*log^{}", self.coeff, self.x_power, self.log_power)
    }
}

impl FromStr for HSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("h spec {s:?} is not of the form c*x^p*log^q"));
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut parts = compact.split('*');
        let (Some(c), Some(xp), Some(lp), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        let p = xp.strip_prefix("x^").ok_or_else(bad)?;
        let q = lp.strip_prefix("log^").ok_or_else(bad)?;
        HSpec::new(num(c)?, num(p)?, num(q)?)
    }
}

impl TryFrom<String> for HSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<HSpec> for String {
    fn from(h: HSpec) -> String {
        h.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    /// `h_m << h << h_{m-1}`
    Interior,
    /// `h ~ Q h_m`
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandClass {
    pub m: u32,
    pub kind: BandKind,
    /// `lim h/h_m`, present exactly for boundary bands.
    #[serde(skip_serializing_if = "Option::is_none", rename = "Q")]
    pub q: Option<f64>,
}

/// Exponent pair `(2^-m, 1/2 - 2^-m)` of `h_m`; `h_0 = x` is `(1, 0)`.
pub fn critical_exponents(m: u32) -> (f64, f64) {
    if m == 0 {
        (1.0, 0.0)
    } else {
        let w = 0.5f64.powi(m as i32);
        (w, 0.5 - w)
    }
}

/// `h_m(x) = x^(2^-m) (log x)^(1/2 - 2^-m)` for `x > 1`, `h_0(x) = x`.
pub fn h_m(m: u32, x: f64) -> Result<f64> {
    if !(x > 1.0) {
        return Err(domain(format!("h_m needs x > 1, got {x}")));
    }
    if m == 0 {
        return Ok(x);
    }
    let (p, q) = critical_exponents(m);
    Ok(x.powf(p) * x.ln().powf(q))
}

/// Closed-form `C_k^m = prod_{i=1}^{k-1} [(1/2)^{k-1-i} - (1/2)^{m-1}]^{(1/2)^{i+1}}`.
pub fn c_km(k: u32, m: u32) -> Result<f64> {
    check_km(k, m)?;
    let tail = 0.5f64.powi(m as i32 - 1);
    let mut prod = 1.0;
    for i in 1..k {
        let base = 0.5f64.powi((k - 1 - i) as i32) - tail;
        prod *= base.powf(0.5f64.powi(i as i32 + 1));
    }
    Ok(prod)
}

/// `C_k^m` from `C_{k+1}^m = sqrt(C_k^m) [(1/2)^{k-1} - (1/2)^{m-1}]^{1/4}`, `C_1^m = 1`.
pub fn c_km_recurrence(k: u32, m: u32) -> Result<f64> {
    check_km(k, m)?;
    let tail = 0.5f64.powi(m as i32 - 1);
    let mut c = 1.0f64;
    for j in 1..k {
        c = c.sqrt() * (0.5f64.powi(j as i32 - 1) - tail).powf(0.25);
    }
    Ok(c)
}

fn check_km(k: u32, m: u32) -> Result<()> {
    if k < 1 || k > m {
        return Err(domain(format!("C_k^m needs 1 <= k <= m, got k={k}, m={m}")));
    }
    Ok(())
}

/// `kappa_m(mu) = mu^(-2 + 2^-m) * prod_{i=1}^{m-1} [(1/2)^{m-1-i} - (1/2)^{m-1}]^{(1/2)^{i+1}}`.
pub fn kappa(m: u32, mu: f64) -> Result<f64> {
    if m < 1 {
        return Err(domain("kappa_m needs m >= 1"));
    }
    if !(mu > 0.0) {
        return Err(domain(format!("drift mu = {mu} must be > 0")));
    }
    let tail = 0.5f64.powi(m as i32 - 1);
    let mut prod = 1.0;
    for i in 1..m {
        prod *= (0.5f64.powi((m - 1 - i) as i32) - tail).powf(0.5f64.powi(i as i32 + 1));
    }
    Ok(mu.powf(-2.0 + 0.5f64.powi(m as i32)) * prod)
}

/// `F_h^(k)(x)`: `k` applications of `v -> sqrt(v log(v / y^2))` from `v = x`,
/// with `y = h(x)` held fixed. Every iterate must stay strictly above `y^2`.
pub fn f_iterate(h: &HSpec, k: usize, x: f64) -> Result<f64> {
    let y = h.eval(x);
    let floor = y * y;
    let mut v = x;
    for index in 0..k {
        if !(v > floor) {
            return Err(Error::IterateDomain { index, value: v, floor });
        }
        v = (v * (v / floor).ln()).sqrt();
    }
    Ok(v)
}

/// Places `h` in `B_m^o` or `B_m^+` by lexicographic comparison of its
/// exponent pair with those of the critical functions.
pub fn classify(h: &HSpec) -> Result<BandClass> {
    let (p, q) = (h.x_power, h.log_power);
    let none = || Error::NoFiniteBand(h.to_string());
    if !(p > 0.0) || p >= 1.0 {
        return Err(none());
    }
    for m in 1..=MAX_STAGES {
        let (pm, qm) = critical_exponents(m);
        if p > pm || (p == pm && q > qm) {
            return Ok(BandClass { m, kind: BandKind::Interior, q: None });
        }
        if p == pm && q == qm {
            return Ok(BandClass { m, kind: BandKind::Boundary, q: Some(h.coeff) });
        }
    }
    Err(none())
}

/// Unique `z` with `phi(z)/(1 - Phi(z)) = target`.
pub fn z_for_hazard(target: f64) -> Result<f64> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(domain(format!("hazard target {target} must be positive and finite")));
    }
    let goal = target.ln();
    let f = |z: f64| normal::ln_hazard(z) - goal;
    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
    while f(lo) > 0.0 {
        lo *= 2.0;
        if lo < -1e6 {
            return Err(domain(format!("hazard target {target} too small")));
        }
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(domain(format!("hazard target {target} too large")));
        }
    }
    // bisection until the bracket is tight, then a Newton polish on the log scale
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * mid.abs().max(1.0) {
            break;
        }
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..3 {
        // d/dz ln H(z) = H(z) - z
        let slope = normal::hazard(z) - z;
        if !(slope > 0.0) {
            break;
        }
        let next = z - f(z) / slope;
        if !(next >= lo && next <= hi) {
            break;
        }
        z = next;
    }
    Ok(z)
}

/// `z*` solving `hazard(z*) = kappa_m(mu) / Q` for `h` in `B_m^+`.
pub fn z_star(m: u32, mu: f64, h: &HSpec) -> Result<f64> {
    let band = classify(h)?;
    match band {
        BandClass { m: bm, kind: BandKind::Boundary, q: Some(q) } if bm == m => {
            z_for_hazard(kappa(m, mu)? / q)
        }
        _ => Err(Error::Precondition(format!(
            "z* needs h in the boundary band B_{m}^+, but {h} is {band:?}"
        ))),
    }
}

/// `kappa_m(mu) h_m(a)`, the per-stage cost level separating bands at `a`.
pub fn band_edge(m: u32, mu: f64, a: f64) -> Result<f64> {
    Ok(kappa(m, mu)? * h_m(m, a)?)
}

/// Stage count for a constant cost ratio: the smallest `m >= 1` with
/// `kappa_m h_m(a) <= h_ratio`, i.e. `h_ratio` in `[kappa_m h_m(a), kappa_{m-1} h_{m-1}(a))`.
/// Ratios above `kappa_1 h_1(a)` give 1.
pub fn m_star(mu: f64, a: f64, h_ratio: f64) -> Result<u32> {
    if !(mu > 0.0) || !(a > 1.0) || !(h_ratio > 0.0) {
        return Err(domain(format!(
            "m* needs mu > 0, a > 1, d/c > 0 (got mu={mu}, a={a}, d/c={h_ratio})"
        )));
    }
    for m in 1..=MAX_STAGES {
        if band_edge(m, mu, a)? <= h_ratio {
            return Ok(m);
        }
    }
    Err(Error::Precondition(format!(
        "no stage count up to {MAX_STAGES} for mu={mu}, a={a}, d/c={h_ratio}"
    )))
}

/// First-order regime for [`asymptotic_risk`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RiskRegime {
    Interior,
    Boundary { z_star: f64 },
}

/// Coefficient of `h(a)` in the first-order optimal risk:
/// `m` inside a band, `m + Phi(z*) + Delta(z*) hazard(z*)` on a band boundary.
pub fn risk_coefficient(m: u32, regime: RiskRegime) -> f64 {
    match regime {
        RiskRegime::Interior => m as f64,
        RiskRegime::Boundary { z_star } => {
            m as f64 + normal::Phi(z_star) + normal::delta(z_star) * normal::hazard(z_star)
        }
    }
}

pub fn asymptotic_risk(m: u32, regime: RiskRegime, h_at_a: f64) -> f64 {
    risk_coefficient(m, regime) * h_at_a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::{phi, Phi};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn h_m_examples() {
        for x in [1.5, 7.0, 1e6] {
            assert!(close(h_m(1, x).unwrap(), x.sqrt(), 1e-15));
        }
        assert_eq!(h_m(0, 7.3).unwrap(), 7.3);
        let direct = h_m(2, 100.0).unwrap();
        let via_logs = (0.25 * 100f64.ln() + 0.25 * 100f64.ln().ln()).exp();
        assert!(close(direct, via_logs, 1e-14));
        assert!(close(direct, 4.632_457_259_694_197, 1e-12));
        assert!(h_m(1, 1.0).is_err());
        assert!(h_m(3, 0.5).is_err());
    }

    #[test]
    fn kappa_examples() {
        for mu in [0.25, 1.0, 3.0] {
            assert!(close(kappa(1, mu).unwrap(), mu.powf(-1.5), 1e-15));
        }
        assert_eq!(kappa(1, 1.0).unwrap(), 1.0);
        assert!(close(kappa(2, 1.0).unwrap(), 0.5f64.powf(0.25), 1e-15));
        assert!(close(0.5f64.powf(0.25), 0.840_896, 1e-6));
    }

    #[test]
    fn c_km_closed_form_matches_recurrence() {
        for m in 1..=8 {
            assert_eq!(c_km(1, m).unwrap(), 1.0);
            for k in 1..=m {
                let a = c_km(k, m).unwrap();
                let b = c_km_recurrence(k, m).unwrap();
                assert!((a - b).abs() < 1e-12, "k={k} m={m}: {a} vs {b}");
            }
        }
        assert!(close(c_km(2, 2).unwrap(), 0.5f64.powf(0.25), 1e-15));
        assert!(c_km(0, 3).is_err());
        assert!(c_km(4, 3).is_err());
    }

    #[test]
    fn kappa_is_scaled_c_mm() {
        for m in 1..=6 {
            for mu in [0.25f64, 1.0, 4.0] {
                let want = mu.powf(-2.0 + 0.5f64.powi(m as i32)) * c_km(m, m).unwrap();
                assert!((kappa(m, mu).unwrap() - want).abs() < 1e-12 * want);
            }
        }
    }

    #[test]
    fn f_iterate_basics() {
        let h = HSpec::new(1.0, 0.3, 0.0).unwrap();
        assert_eq!(f_iterate(&h, 0, 1234.0).unwrap(), 1234.0);
        let one = HSpec::constant(1.0).unwrap();
        let x = 50.0;
        assert!(close(f_iterate(&one, 1, x).unwrap(), (x * x.ln()).sqrt(), 1e-15));
        // h(x)^2 > x: the very first iterate is out of domain
        let big = HSpec::new(1.0, 0.6, 0.0).unwrap();
        assert!(matches!(f_iterate(&big, 1, 100.0), Err(Error::IterateDomain { index: 0, .. })));
        // feasible start but a later iterate falls below the floor
        let err = f_iterate(&one, 10, 3.0).unwrap_err();
        assert!(matches!(err, Error::IterateDomain { index, .. } if index >= 1));
    }

    #[test]
    fn f_iterate_tracks_critical_functions() {
        let h = HSpec::critical(3, 1.0).unwrap();
        for k in 1..=3u32 {
            let ratios: Vec<f64> = [1e6, 1e10, 1e14]
                .iter()
                .map(|&x| {
                    f_iterate(&h, (k - 1) as usize, x).unwrap().sqrt()
                        / (c_km(k, 3).unwrap() * h_m(k, x).unwrap())
                })
                .collect();
            let gaps: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
            assert!(gaps[0] >= gaps[1] && gaps[1] >= gaps[2], "k={k}: {ratios:?}");
            assert!(gaps[2] < 0.06);
        }
    }

    #[test]
    fn interior_sandwich() {
        let h = HSpec::new(1.0, 0.15, 0.0).unwrap();
        assert_eq!(classify(&h).unwrap().m, 3);
        let x = 1e12;
        let r = f_iterate(&h, 1, x).unwrap().sqrt() / h_m(2, x).unwrap();
        assert!(r >= 0.9 * c_km(2, 2).unwrap() && r <= 1.1 * c_km(2, 3).unwrap(), "{r}");
    }

    #[test]
    fn interior_ratio_converges() {
        for m in 1..=3u32 {
            for mu in [0.25, 1.0] {
                let ratio = |x: f64| {
                    let arg = ((1.0 - 0.5f64.powi(m as i32)) / mu * x * x.ln()).sqrt();
                    band_edge(m, mu, arg).unwrap() / band_edge(m + 1, mu, x).unwrap()
                };
                let gaps: Vec<f64> =
                    [1e6, 1e9, 1e12, 1e15].iter().map(|&x| (ratio(x) - 1.0).abs()).collect();
                for w in gaps.windows(2) {
                    // m = 1 is an exact identity; allow rounding there
                    assert!(w[1] < w[0] || w[1] < 1e-12, "m={m} mu={mu} {gaps:?}");
                }
                assert!(gaps[3] < 0.25);
            }
        }
    }

    /// `h/h_m` evaluated far out, the oracle for exponent-based classification.
    fn numeric_band(h: &HSpec) -> Option<u32> {
        let (x1, x2) = (1e8, 1e12);
        (1..10).find(|&m| {
            let above = h.eval(x2) / h_m(m, x2).unwrap() > h.eval(x1) / h_m(m, x1).unwrap();
            let below = h.eval(x2) / h_m(m - 1, x2).unwrap() < h.eval(x1) / h_m(m - 1, x1).unwrap();
            above && below
        })
    }

    #[test]
    fn classify_examples() {
        let h = HSpec::new(1.0, 0.7, 0.0).unwrap();
        assert_eq!(classify(&h).unwrap(), BandClass { m: 1, kind: BandKind::Interior, q: None });
        assert_eq!(numeric_band(&h), Some(1));

        let h = HSpec::new(5.0, 0.5, 0.0).unwrap();
        assert_eq!(classify(&h).unwrap(), BandClass { m: 1, kind: BandKind::Boundary, q: Some(5.0) });

        let h = HSpec::new(1.0, 0.3, 0.0).unwrap();
        assert_eq!(classify(&h).unwrap().m, 2);
        assert_eq!(classify(&h).unwrap().kind, BandKind::Interior);
        assert_eq!(numeric_band(&h), Some(2));

        // exponent tie on x, log power decides
        let h = HSpec::new(1.0, 0.25, 0.3).unwrap();
        assert_eq!(classify(&h).unwrap().m, 2);
        let h = HSpec::new(1.0, 0.25, 0.1).unwrap();
        assert_eq!(classify(&h).unwrap().m, 3);
        let h = HSpec::new(2.0, 0.25, 0.25).unwrap();
        assert_eq!(classify(&h).unwrap().kind, BandKind::Boundary);
    }

    #[test]
    fn classify_rejects_out_of_band() {
        for (p, q) in [(1.0, 0.0), (1.2, -1.0), (0.0, 0.0), (0.0, 0.7), (-0.1, 3.0)] {
            let h = HSpec::new(1.0, p, q).unwrap();
            assert!(matches!(classify(&h), Err(Error::NoFiniteBand(_))), "({p},{q})");
        }
    }

    #[test]
    fn hazard_inversion() {
        assert!(z_for_hazard(2.0 * phi(0.0)).unwrap().abs() < 1e-12);
        let z = z_for_hazard(1e-6).unwrap();
        assert!(z < -4.0);
        assert!((crate::normal::hazard(z) / 1e-6 - 1.0).abs() < 1e-10);
        for z0 in [-2.0, 0.0, 1.5, 7.0, 40.0] {
            let z = z_for_hazard(crate::normal::hazard(z0)).unwrap();
            assert!((z - z0).abs() < 1e-9, "{z0} -> {z}");
        }
        assert!(z_for_hazard(0.0).is_err());
    }

    #[test]
    fn z_star_examples() {
        let h = HSpec::new(5.0, 0.5, 0.0).unwrap();
        let z = z_star(1, 1.0, &h).unwrap();
        assert!((crate::normal::hazard(z) - 0.2).abs() < 1e-10);
        let h3 = HSpec::new(1.0, 0.3, 0.0).unwrap();
        assert!(matches!(z_star(2, 1.0, &h3), Err(Error::Precondition(_))));
        assert!(matches!(z_star(2, 1.0, &h), Err(Error::Precondition(_))));
    }

    #[test]
    fn m_star_scan() {
        let mu = 0.25;
        let a = 2.0 * 1000f64.ln();
        // oracle: the same scan written out directly
        let edges: Vec<f64> = (1..=30)
            .map(|m| kappa(m, mu).unwrap() * h_m(m, a).unwrap())
            .collect();
        assert!((edges[0] - 0.25f64.powf(-1.5) * a.sqrt()).abs() < 1e-12);
        for ratio in [1.0, 5.0, 10.0] {
            let want = 1 + edges.iter().position(|&e| e <= ratio).unwrap() as u32;
            assert_eq!(m_star(mu, a, ratio).unwrap(), want);
        }
        assert_eq!(m_star(mu, a, 1.0).unwrap(), 12);
        assert_eq!(m_star(mu, a, 5.0).unwrap(), 8);
        assert_eq!(m_star(mu, a, 10.0).unwrap(), 6);
        assert_eq!(m_star(mu, a, edges[0] + 1.0).unwrap(), 1);
        assert!(m_star(mu, a, 1e-12).is_err());
    }

    #[test]
    fn m_star_monotone_in_ratio() {
        for mu in [0.25, 1.0] {
            for a in [5.0, 13.8, 1e3] {
                let mut prev = u32::MAX;
                for i in 0..60 {
                    let ratio = 0.05 * 1.2f64.powi(i);
                    if let Ok(m) = m_star(mu, a, ratio) {
                        assert!(m <= prev);
                        prev = m;
                    }
                }
            }
        }
    }

    #[test]
    fn risk_coefficients() {
        assert_eq!(asymptotic_risk(2, RiskRegime::Interior, 10.0), 20.0);
        let c = risk_coefficient(3, RiskRegime::Boundary { z_star: 0.0 });
        assert!((c - (3.5 + 2.0 * phi(0.0) * phi(0.0))).abs() < 1e-14);
        assert!((c - 3.0 - 0.81831).abs() < 1e-5);
        let c = risk_coefficient(1, RiskRegime::Boundary { z_star: 8.0 });
        assert!((c - 2.0).abs() < 1e-3);
        assert!(Phi(8.0) > 0.999);
    }

    #[test]
    fn hspec_text_format() {
        let h: HSpec = "1*x^0.5*log^0".parse().unwrap();
        assert_eq!(h, HSpec::new(1.0, 0.5, 0.0).unwrap());
        assert_eq!(h.to_string(), "1*x^0.5*log^0");
        let h: HSpec = " 2.5 * x^-0.25 * log^1e-1 ".parse().unwrap();
        assert_eq!((h.coeff, h.x_power, h.log_power), (2.5, -0.25, 0.1));
        for bad in ["", "x^0.5", "1*x^0.5", "1*y^0.5*log^0", "0*x^0.5*log^0", "1*x^a*log^0", "1*x^1*log^1*x"] {
            assert!(bad.parse::<HSpec>().is_err(), "{bad}");
        }
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(serde_json::from_str::<HSpec>(&json).unwrap(), h);
    }

    #[test]
    fn hspec_positive() {
        let h = HSpec::new(0.1, 0.3, -2.0).unwrap();
        for x in [1e-9, 0.5, 1.0, 1e9] {
            assert!(h.eval(x) > 0.0);
        }
    }
}
