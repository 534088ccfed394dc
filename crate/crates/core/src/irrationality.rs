//! The irrationality measure function ψ_α(t) = min_{1<=q<=t} max_j ||q α_j||,
//! its best-approximation records and the singularity diagnostics built on
//! them.

use std::cmp::Ordering;
use std::fmt::Write as _;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::exact::cmp_scaled_power;
use crate::sequence::{AlphaComponent, AlphaVector};
use crate::torus::{raw_to_f64, torus_dist_raw, Frac64};

/// One coordinate of the orbit `q α_j mod 1`.
#[derive(Clone, Debug)]
enum Orbit {
    /// Fixed-point steps of the quantized value.
    Raw { step: u64, x: u64 },
    /// Exact residues `q p mod d` for a rational `p / d`.
    Residue { step: u64, den: u64, r: u64 },
}

impl Orbit {
    fn new(c: &AlphaComponent) -> Self {
        if let Some((num, den)) = &c.exact {
            if let Some(d) = den.to_u64().filter(|&d| d <= 1 << 62) {
                let p = num.mod_floor(&BigInt::from(d)).to_u64().unwrap();
                return Orbit::Residue { step: p, den: d, r: 0 };
            }
        }
        Orbit::Raw { step: c.value.raw(), x: 0 }
    }

    /// Advances to the next multiple and returns its distance to 0.
    #[inline]
    fn advance(&mut self) -> u64 {
        match self {
            Orbit::Raw { step, x } => {
                *x = x.wrapping_add(*step);
                torus_dist_raw(Frac64::from_raw(*x), Frac64::ZERO)
            }
            Orbit::Residue { step, den, r } => {
                *r += *step;
                if *r >= *den {
                    *r -= *den;
                }
                let near = (*r).min(*den - *r) as u128;
                // round(near 2^64 / den), at most 2^63
                (((near << 65) + *den as u128) / (2 * *den as u128)) as u64
            }
        }
    }
}

/// Lazy stream of best-approximation records `(q, ψ_α(q))` in raw units.
///
/// Components with an exact rational value of moderate denominator are
/// followed exactly, others through their 64-bit quantization. The stream
/// ends after `limit`, or right after a record with ψ = 0.
#[derive(Clone, Debug)]
pub struct Records {
    orbits: Vec<Orbit>,
    q: u64,
    best: u64,
    limit: u64,
    done: bool,
}

impl Records {
    pub fn new(alpha: &AlphaVector, limit: Option<u64>) -> Self {
        Records {
            orbits: alpha.components().iter().map(Orbit::new).collect(),
            q: 0,
            best: u64::MAX,
            limit: limit.unwrap_or(u64::MAX),
            done: false,
        }
    }

    /// Last `q` scanned so far.
    pub fn scanned(&self) -> u64 {
        self.q
    }
}

impl Iterator for Records {
    type Item = (u64, u64);

    fn next(&mut self) -> Option<(u64, u64)> {
        if self.done {
            return None;
        }
        while self.q < self.limit {
            self.q += 1;
            let h = self.orbits.iter_mut().map(Orbit::advance).fold(0, u64::max);
            if h < self.best {
                self.best = h;
                if h == 0 {
                    self.done = true;
                }
                return Some((self.q, h));
            }
        }
        self.done = true;
        None
    }
}

/// ψ_α(t) in raw units.
pub fn psi_raw(alpha: &AlphaVector, t: u64) -> Result<u64> {
    if t == 0 {
        return Err(invalid("psi needs t >= 1"));
    }
    Ok(Records::new(alpha, Some(t)).last().map(|(_, h)| h).unwrap())
}

pub fn psi(alpha: &AlphaVector, t: u64) -> Result<f64> {
    Ok(raw_to_f64(psi_raw(alpha, t)? as u128))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestApproxRecord {
    pub q: u64,
    #[serde(skip)]
    pub psi_raw: u64,
    pub psi_value: f64,
    /// `t^(1/n) ψ(t)` at `t = next record − 1`, or at `T` for the last record.
    pub normalized: f64,
    pub normalized_at: u64,
    /// `normalized` is a true local maximum: the next record is within `T`.
    pub local_max: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IrrationalityProfile {
    pub alpha: String,
    pub dim: usize,
    #[serde(rename = "T")]
    pub t_max: u64,
    pub records: Vec<BestApproxRecord>,
    pub limsup_estimate: f64,
}

impl IrrationalityProfile {
    /// ψ(t) from the step function, `t <= T`.
    pub fn psi_at(&self, t: u64) -> Option<f64> {
        if t == 0 || t > self.t_max {
            return None;
        }
        let i = self.records.partition_point(|r| r.q <= t);
        Some(self.records[i - 1].psi_value)
    }

    pub fn record_qs(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.q).collect()
    }

    pub fn hits_zero(&self) -> bool {
        self.records.last().is_some_and(|r| r.psi_raw == 0)
    }

    /// One row per record: `q,psi_value,normalized`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# alpha={} n={} T={}", self.alpha, self.dim, self.t_max);
        out.push_str("q,psi_value,normalized\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:e},{}", r.q, r.psi_value, r.normalized);
        }
        out
    }
}

fn normalized(t: u64, psi_raw: u64, dim: usize) -> f64 {
    (t as f64).powf(1.0 / dim as f64) * raw_to_f64(psi_raw as u128)
}

pub fn best_approx_records(alpha: &AlphaVector, t_max: u64) -> Result<IrrationalityProfile> {
    if t_max == 0 {
        return Err(invalid("record scan needs T >= 1"));
    }
    let dim = alpha.dim();
    let raw: Vec<(u64, u64)> = Records::new(alpha, Some(t_max)).collect();
    let records: Vec<BestApproxRecord> = raw
        .iter()
        .enumerate()
        .map(|(i, &(q, h))| {
            let (at, local_max) = match raw.get(i + 1) {
                Some(&(next, _)) => (next - 1, true),
                None => (t_max, false),
            };
            BestApproxRecord {
                q,
                psi_raw: h,
                psi_value: raw_to_f64(h as u128),
                normalized: normalized(at, h, dim),
                normalized_at: at,
                local_max,
            }
        })
        .collect();
    let limsup_estimate = records.iter().map(|r| r.normalized).fold(0.0, f64::max);
    Ok(IrrationalityProfile {
        alpha: alpha.provenance(),
        dim,
        t_max,
        records,
        limsup_estimate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirichletReport {
    pub passed: bool,
    /// `max_{t<=T} t^(1/n) ψ(t)`
    pub max_normalized: f64,
    pub argmax_t: u64,
    /// Smallest `t` with `t ψ(t)^n > 1`, if any.
    pub first_violation: Option<u64>,
}

/// Checks `t ψ(t)^n <= 1` for every `t <= T`. Within a record the left side
/// grows with `t`, so the right ends of the steps suffice; each is decided
/// exactly.
pub fn dirichlet_check(profile: &IrrationalityProfile) -> DirichletReport {
    let n = profile.dim;
    let mut report = DirichletReport {
        passed: true,
        max_normalized: 0.0,
        argmax_t: 1,
        first_violation: None,
    };
    for (i, r) in profile.records.iter().enumerate() {
        let end = profile
            .records
            .get(i + 1)
            .map_or(profile.t_max, |next| next.q - 1);
        if r.normalized > report.max_normalized {
            report.max_normalized = r.normalized;
            report.argmax_t = end;
        }
        if report.first_violation.is_none()
            && cmp_scaled_power(end, r.psi_raw as u128, n, 1.0) == Ordering::Greater
        {
            // the first violating t inside this step
            let first = (r.q..=end)
                .find(|&t| cmp_scaled_power(t, r.psi_raw as u128, n, 1.0) == Ordering::Greater)
                .unwrap();
            report.first_violation = Some(first);
            report.passed = false;
        }
    }
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    NonsingularLike,
    SingularLike,
    #[serde(rename = "rational/degenerate")]
    RationalDegenerate,
    Inconclusive,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::NonsingularLike => "nonsingular-like",
            Classification::SingularLike => "singular-like",
            Classification::RationalDegenerate => "rational/degenerate",
            Classification::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularityProfile {
    pub alpha: String,
    pub dim: usize,
    #[serde(rename = "T")]
    pub t_max: u64,
    pub theta: f64,
    /// `(t, t^(1/n) ψ(t))` at the right end of each completed record step.
    pub local_maxima: Vec<(u64, f64)>,
    pub classification: Classification,
    /// The classification looks at a finite window and is a heuristic only.
    pub heuristic: &'static str,
}

pub const DEFAULT_THETA: f64 = 0.05;

pub fn singularity_profile(alpha: &AlphaVector, t_max: u64, theta: f64) -> Result<SingularityProfile> {
    if t_max < 2 {
        return Err(invalid("singularity profile needs T >= 2"));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid(format!("threshold must be positive, got {theta}")));
    }
    let profile = best_approx_records(alpha, t_max)?;
    let local_maxima: Vec<(u64, f64)> = profile
        .records
        .iter()
        .filter(|r| r.local_max)
        .map(|r| (r.normalized_at, r.normalized))
        .collect();
    let classification = classify(&profile, &local_maxima, theta);
    Ok(SingularityProfile {
        alpha: profile.alpha,
        dim: profile.dim,
        t_max,
        theta,
        local_maxima,
        classification,
        heuristic: "window = last half of local maxima; finite-T evidence, not a proof",
    })
}

fn classify(profile: &IrrationalityProfile, maxima: &[(u64, f64)], theta: f64) -> Classification {
    if profile.hits_zero() {
        return Classification::RationalDegenerate;
    }
    if maxima.len() < 2 {
        return Classification::Inconclusive;
    }
    let tail = &maxima[maxima.len() / 2..];
    let top = tail.iter().map(|m| m.1).fold(0.0, f64::max);
    if top >= theta {
        Classification::NonsingularLike
    } else if tail.windows(2).all(|w| w[1].1 < w[0].1) {
        Classification::SingularLike
    } else {
        Classification::Inconclusive
    }
}

/// How a continued fraction expansion stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CfEnd {
    /// `count` convergents were produced.
    Complete,
    /// The input is rational and its expansion ran out.
    Terminated,
    /// Further convergents would exceed the precision of the input.
    PrecisionLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Convergents {
    /// `(p_k, q_k)` for `k >= 1` of the fractional part of `x`.
    pub convergents: Vec<(u128, u128)>,
    pub end: CfEnd,
}

impl Convergents {
    pub fn denominators(&self) -> Vec<u128> {
        self.convergents.iter().map(|c| c.1).collect()
    }

    pub fn is_flagged(&self) -> bool {
        self.end != CfEnd::Complete
    }
}

/// Convergents of `frac(x)` for any token accepted by [`AlphaComponent::parse`].
///
/// Named constants and long decimals are treated as the irrational numbers
/// they approximate: the expansion stops once `q_k^2` exceeds the decimal
/// denominator, past which partial quotients are artifacts of truncation.
/// Exact rationals (`p/q`, `cf[...]`) expand to the end.
pub fn cf_convergents(x: &str, count: usize) -> Result<Convergents> {
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let comp = AlphaComponent::parse(x)?;
    let (num, den) = comp.exact.expect("parsed components are exact");
    let x = x.trim();
    let exact_rational = x.contains('/') || x.starts_with("cf[");
    let den_i = BigInt::from(den.clone());
    let mut a_num: BigUint = num.mod_floor(&den_i).magnitude().clone();
    let mut a_den: BigUint = den.clone();

    let (mut p_prev, mut q_prev) = (BigUint::from(1u32), BigUint::zero());
    let (mut p, mut q) = (BigUint::zero(), BigUint::from(1u32));
    let mut out = Vec::new();
    let end = loop {
        if out.len() == count {
            break CfEnd::Complete;
        }
        if a_num.is_zero() {
            break CfEnd::Terminated;
        }
        // 1/x = a_den / a_num = a + r / a_num
        let (a, r) = a_den.div_rem(&a_num);
        a_den = std::mem::replace(&mut a_num, r);
        let p_next = &a * &p + &p_prev;
        let q_next = &a * &q + &q_prev;
        if !exact_rational && &q_next * &q_next > den {
            break CfEnd::PrecisionLimit;
        }
        let (Some(pn), Some(qn)) = (p_next.to_u128(), q_next.to_u128()) else {
            break CfEnd::PrecisionLimit;
        };
        out.push((pn, qn));
        p_prev = std::mem::replace(&mut p, p_next);
        q_prev = std::mem::replace(&mut q, q_next);
    };
    Ok(Convergents { convergents: out, end })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn alpha(s: &str) -> AlphaVector {
        AlphaVector::parse(s).unwrap()
    }

    /// ψ by the definition, over f64-free raw values and no shared code.
    fn brute_psi(a: &[u64], t: u64) -> u64 {
        (1..=t)
            .map(|q| {
                a.iter()
                    .map(|&v| {
                        let x = v.wrapping_mul(q);
                        x.min(x.wrapping_neg())
                    })
                    .max()
                    .unwrap()
            })
            .min()
            .unwrap()
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(&alpha("1/4"), 4).unwrap(), 0.0);
        assert!((psi(&alpha("golden"), 1).unwrap() - 0.381966011250105).abs() < 1e-15);
        assert!((psi(&alpha("golden"), 4).unwrap() - 0.145898033750315).abs() < 1e-15);
        assert!(psi(&alpha("golden"), 0).is_err());
    }

    #[test]
    fn record_examples() {
        let p = best_approx_records(&alpha("golden"), 100).unwrap();
        assert_eq!(p.record_qs(), vec![1, 2, 3, 5, 8, 13, 21, 34, 55, 89]);
        let p = best_approx_records(&alpha("1/2"), 10).unwrap();
        assert_eq!(p.record_qs(), vec![1, 2]);
        assert_eq!(p.records[1].psi_value, 0.0);
        assert!(p.hits_zero());
        let p = best_approx_records(&alpha("sqrt2"), 1).unwrap();
        assert_eq!(p.record_qs(), vec![1]);
        assert_eq!(p.psi_at(1), Some(p.records[0].psi_value));
    }

    #[test]
    fn step_function_reconstruction() {
        let a = alpha("sqrt3");
        let p = best_approx_records(&a, 500).unwrap();
        let raw = a.values()[0].raw();
        for t in 1..=500 {
            assert_eq!(p.psi_at(t).unwrap(), raw_to_f64(brute_psi(&[raw], t) as u128), "t = {t}");
        }
        assert_eq!(p.psi_at(501), None);
    }

    #[test]
    fn dirichlet_examples() {
        let r = dirichlet_check(&best_approx_records(&alpha("golden"), 10_000).unwrap());
        assert!(r.passed);
        assert!((r.max_normalized - 0.7236).abs() < 0.01, "{}", r.max_normalized);

        let p = best_approx_records(&alpha("1/3"), 100).unwrap();
        assert!(dirichlet_check(&p).passed);
        assert_eq!(p.psi_at(50), Some(0.0));

        let p = best_approx_records(&alpha("golden,sqrt2"), 10_000).unwrap();
        let r = dirichlet_check(&p);
        assert!(r.passed && r.max_normalized <= 1.0);
    }

    #[test]
    fn dirichlet_flags_a_forged_profile() {
        let mut p = best_approx_records(&alpha("golden"), 100).unwrap();
        p.records[3].psi_raw = u64::MAX / 3;
        let r = dirichlet_check(&p);
        assert!(!r.passed);
        assert_eq!(r.first_violation, Some(5));
    }

    #[test]
    fn singularity_examples() {
        let s = singularity_profile(&alpha("golden"), 100_000, DEFAULT_THETA).unwrap();
        assert_eq!(s.classification, Classification::NonsingularLike);
        for &(_, v) in &s.local_maxima[10..] {
            assert!((v - 0.7236).abs() < 0.01, "{v}");
        }

        let s = singularity_profile(&alpha("golden,0"), 1_000_000, DEFAULT_THETA).unwrap();
        assert_eq!(s.classification, Classification::SingularLike);
        assert!(s.local_maxima.last().unwrap().1 < 0.01);

        let s = singularity_profile(&alpha("1/2"), 10, DEFAULT_THETA).unwrap();
        assert_eq!(s.classification, Classification::RationalDegenerate);

        assert!(singularity_profile(&alpha("golden"), 1, DEFAULT_THETA).is_err());
    }

    #[test]
    fn convergent_examples() {
        let c = cf_convergents("golden", 6).unwrap();
        assert_eq!(c.denominators(), vec![1, 2, 3, 5, 8, 13]);
        assert!(!c.is_flagged());

        let c = cf_convergents("0.5", 5).unwrap();
        assert_eq!(c.convergents, vec![(1, 2)]);
        assert_eq!(c.end, CfEnd::Terminated);

        let c = cf_convergents("sqrt2", 4).unwrap();
        assert_eq!(c.denominators(), vec![2, 5, 12, 29]);
        assert_eq!(c.convergents[3], (12, 29));

        let c = cf_convergents("cf[0;3,1,4]", 10).unwrap();
        assert_eq!(c.convergents, vec![(1, 3), (1, 4), (5, 19)]);
        assert!(cf_convergents("golden", 0).is_err());
    }

    #[test]
    fn precision_limit_stops_long_expansions() {
        let c = cf_convergents("golden", 1000).unwrap();
        assert_eq!(c.end, CfEnd::PrecisionLimit);
        // 60 decimals carry about 140 Fibonacci steps
        assert!(c.convergents.len() > 100);
        for w in c.convergents.windows(3) {
            assert_eq!(w[2].1, w[1].1 + w[0].1);
        }
    }

    #[test]
    fn records_match_convergents_in_one_dimension() {
        for name in ["golden", "sqrt2", "sqrt3"] {
            let p = best_approx_records(&alpha(name), 1_000_000).unwrap();
            let mut expected: Vec<u64> = vec![1];
            for q in cf_convergents(name, 100).unwrap().denominators() {
                if q <= 1_000_000 && q as u64 != *expected.last().unwrap() {
                    expected.push(q as u64);
                }
            }
            assert_eq!(p.record_qs(), expected, "{name}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn psi_is_monotone_and_bounded(a in proptest::collection::vec(any::<u64>(), 1..4), t in 1u64..400) {
            let av = AlphaVector::from_fracs(&a.iter().map(|&v| Frac64::from_raw(v)).collect::<Vec<_>>()).unwrap();
            let p = best_approx_records(&av, t).unwrap();
            let mut prev = 0.5;
            for s in 1..=t {
                let v = p.psi_at(s).unwrap();
                prop_assert!(v <= prev);
                prev = v;
            }
            prop_assert_eq!(psi_raw(&av, t).unwrap(), brute_psi(&a, t));
            prop_assert!(dirichlet_check(&p).passed);
            for w in p.records.windows(2) {
                prop_assert!(w[0].q < w[1].q && w[0].psi_raw > w[1].psi_raw);
            }
        }

        #[test]
        fn integer_parts_are_ignored(k in 0u32..50, digits in "[0-9]{1,30}") {
            let frac = format!("0.{digits}");
            let shifted = format!("{k}.{digits}");
            prop_assert_eq!(
                best_approx_records(&alpha(&frac), 300).unwrap().records,
                best_approx_records(&alpha(&shifted), 300).unwrap().records
            );
            prop_assert_eq!(cf_convergents(&frac, 8).unwrap(), cf_convergents(&shifted, 8).unwrap());
        }
    }
}
