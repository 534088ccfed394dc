//! Record curves `r(K) = min_{k<=K} k^(1/n) ||ξ_k − η||` for target points
//! η, and the finite-scale inequalities they must satisfy at witness scales
//! and on the sets `E_ν` of the construction.

use std::cmp::Ordering;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

use crate::construction::ConstructionState;
use crate::dispersion::WitnessCertificate;
use crate::error::{invalid, Result};
use crate::exact::{cmp_record_with_radius, cmp_scaled_power_prod, cmp_weighted};
use crate::par;
use crate::sequence::PointSource;
use crate::torus::{sup_torus_dist_raw, Frac64, UnitPoint};

/// `count` points drawn uniformly from the fixed-point grid of `[0,1)^n`.
pub fn sample_etas(count: usize, dim: usize, seed: u64) -> Vec<UnitPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let coords = (0..dim).map(|_| Frac64::from_raw(rng.next_u64())).collect();
            UnitPoint::new(coords).unwrap()
        })
        .collect()
}

/// `k · (d / 2^64)^n` attained at index `k` and raw distance `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Record {
    pub k: u64,
    #[serde(skip)]
    pub dist_raw: u64,
}

impl Record {
    /// `k^(1/n) · d`
    pub fn value(&self, dim: usize) -> f64 {
        (self.k as f64).powf(1.0 / dim as f64) * (self.dist_raw as f64 / 18_446_744_073_709_551_616.0)
    }

    fn beats(&self, other: &Record, dim: usize) -> bool {
        cmp_weighted(self.k, self.dist_raw, other.k, other.dist_raw, dim) == Ordering::Less
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Checkpoint {
    #[serde(rename = "K")]
    pub big_k: u64,
    pub record: f64,
    pub best: Record,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecordSeries {
    pub eta: Vec<f64>,
    #[serde(skip)]
    pub eta_raw: Vec<Frac64>,
    pub checkpoints: Vec<Checkpoint>,
    /// Index attaining the record at the last checkpoint.
    pub best_k: u64,
}

impl RecordSeries {
    pub fn at(&self, big_k: u64) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.big_k == big_k)
    }

    pub fn is_non_increasing(&self, dim: usize) -> bool {
        self.checkpoints
            .windows(2)
            .all(|w| !w[0].best.beats(&w[1].best, dim))
    }
}

const ETA_CHUNK: usize = 32;
const REFRESH: u64 = 1024;

/// Tracks the records of every η over `k = 1..=max K` in one sweep per
/// chunk of targets.
///
/// With `R` bounding all current records, only targets whose first
/// coordinate lies within `(R/k)^(1/n)` of `ξ_k` can improve, so each step
/// inspects a window of the targets sorted by that coordinate.
pub fn record_tracker<S: PointSource + ?Sized>(
    source: &S,
    etas: &[UnitPoint],
    checkpoints: &[u64],
) -> Result<Vec<RecordSeries>> {
    if etas.is_empty() {
        return Err(invalid("no target points"));
    }
    if checkpoints.is_empty() || checkpoints[0] == 0 || checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("checkpoints must be positive and strictly ascending"));
    }
    let dim = source.dim();
    for eta in etas {
        if eta.dim() != dim {
            return Err(crate::error::Error::DimensionMismatch {
                expected: dim,
                got: eta.dim(),
            });
        }
    }
    source.check_available(*checkpoints.last().unwrap())?;
    let chunks: Vec<&[UnitPoint]> = etas.chunks(ETA_CHUNK).collect();
    let parts = par::map(chunks, |chunk| sweep(source, chunk, checkpoints));
    Ok(parts.into_iter().flatten().collect())
}

fn sweep<S: PointSource + ?Sized>(source: &S, etas: &[UnitPoint], checkpoints: &[u64]) -> Vec<RecordSeries> {
    let dim = source.dim();
    let mut order: Vec<usize> = (0..etas.len()).collect();
    order.sort_by_key(|&i| etas[i].coords()[0]);
    let firsts: Vec<u64> = order.iter().map(|&i| etas[i].coords()[0].raw()).collect();

    let mut point = vec![Frac64::ZERO; dim];
    let mut best: Vec<Record> = Vec::with_capacity(etas.len());
    source.fill_point(1, &mut point);
    for eta in etas {
        best.push(Record {
            k: 1,
            dist_raw: sup_torus_dist_raw(&point, eta.coords()),
        });
    }
    let mut series: Vec<Vec<Checkpoint>> = vec![Vec::with_capacity(checkpoints.len()); etas.len()];
    let mut next_cp = 0;
    let snapshot = |k: u64, best: &[Record], series: &mut Vec<Vec<Checkpoint>>| {
        for (s, b) in series.iter_mut().zip(best) {
            s.push(Checkpoint {
                big_k: k,
                record: b.value(dim),
                best: *b,
            });
        }
    };
    if checkpoints[0] == 1 {
        snapshot(1, &best, &mut series);
        next_cp = 1;
    }
    let bound = |best: &[Record]| best.iter().map(|b| b.value(dim).powi(dim as i32)).fold(0.0, f64::max);
    let mut r_max = bound(&best);
    let last = *checkpoints.last().unwrap();
    for k in 2..=last {
        if k % REFRESH == 0 {
            r_max = bound(&best);
        }
        source.fill_point(k, &mut point);
        let radius = ((r_max / k as f64).powf(1.0 / dim as f64) * (1.0 + 1e-9)) * 18_446_744_073_709_551_616.0 + 2.0;
        let visit = |slot: usize, best: &mut Vec<Record>| {
            let i = order[slot];
            let d = sup_torus_dist_raw(&point, etas[i].coords());
            let cand = Record { k, dist_raw: d };
            if cand.beats(&best[i], dim) {
                best[i] = cand;
            }
        };
        if radius >= 9.2e18 {
            for slot in 0..order.len() {
                visit(slot, &mut best);
            }
        } else {
            let r = radius as u64;
            let x = point[0].raw();
            let (lo, hi) = (x.wrapping_sub(r), x.wrapping_add(r));
            if lo <= hi {
                let a = firsts.partition_point(|&v| v < lo);
                let b = firsts.partition_point(|&v| v <= hi);
                for slot in a..b {
                    visit(slot, &mut best);
                }
            } else {
                // the window wraps around 0
                let b = firsts.partition_point(|&v| v <= hi);
                let a = firsts.partition_point(|&v| v < lo);
                for slot in (0..b).chain(a..firsts.len()) {
                    visit(slot, &mut best);
                }
            }
        }
        if next_cp < checkpoints.len() && checkpoints[next_cp] == k {
            snapshot(k, &best, &mut series);
            next_cp += 1;
        }
    }
    etas.iter()
        .zip(series)
        .zip(&best)
        .map(|((eta, checkpoints), b)| RecordSeries {
            eta: eta.to_f64(),
            eta_raw: eta.coords().to_vec(),
            checkpoints,
            best_k: b.k,
        })
        .collect()
}

/// `K = 1, 2, 4, …` up to `max_k`, with `max_k` itself last.
pub fn exponential_checkpoints(max_k: u64) -> Vec<u64> {
    let mut out: Vec<u64> = std::iter::successors(Some(1u64), |&k| k.checked_mul(2))
        .take_while(|&k| k < max_k)
        .collect();
    out.push(max_k.max(1));
    out
}

/// Record curves as CSV rows `eta_id,K,record`.
pub fn records_csv(series: &[RecordSeries]) -> String {
    let mut out = String::from("eta_id,K,record\n");
    for (i, s) in series.iter().enumerate() {
        for c in &s.checkpoints {
            out.push_str(&format!("{i},{},{}\n", c.big_k, c.record));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundedRecordReport {
    pub q: u64,
    /// `q^(1/n) · ρ(q)` with the upper end of the radius interval.
    pub bound: f64,
    pub max_record: f64,
    pub passed: bool,
    /// Targets whose record at `q` exceeds the bound.
    pub violations: Vec<usize>,
}

/// `r(q) <= q^(1/n) ρ(q)` for every target, read from record series that
/// include the checkpoint `q`. Exact; in one dimension against the exact
/// radius, otherwise against the upper end of its interval.
pub fn bounded_record_check_series(
    witness: &WitnessCertificate,
    series: &[RecordSeries],
    dim: usize,
) -> Result<BoundedRecordReport> {
    let q = witness.q;
    let mut violations = Vec::new();
    let mut max_record = 0.0f64;
    for (i, s) in series.iter().enumerate() {
        let cp = s
            .at(q)
            .ok_or_else(|| invalid(format!("record series lack the checkpoint {q}")))?;
        max_record = max_record.max(cp.record);
        let Record { k, dist_raw } = cp.best;
        let ok = match witness.rho_twice_raw {
            // 2 k d <= q (2ρ)
            Some(gap) if dim == 1 => {
                let lhs = num_bigint::BigUint::from(2 * k as u128) * dist_raw;
                lhs <= num_bigint::BigUint::from(q) * gap
            }
            _ => cmp_record_with_radius(k, dist_raw, dim, q, witness.rho_upper) != Ordering::Greater,
        };
        if !ok {
            violations.push(i);
        }
    }
    Ok(BoundedRecordReport {
        q,
        bound: (q as f64).powf(1.0 / dim as f64) * witness.rho_upper,
        max_record,
        passed: violations.is_empty(),
        violations,
    })
}

pub fn bounded_record_check<S: PointSource + ?Sized>(
    witness: &WitnessCertificate,
    source: &S,
    etas: &[UnitPoint],
) -> Result<BoundedRecordReport> {
    let series = record_tracker(source, etas, &[witness.q])?;
    bounded_record_check_series(witness, &series, source.dim())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelHits {
    pub nu: usize,
    pub hits: usize,
    pub fraction: f64,
    pub measure: f64,
    /// `sqrt(μ (1 − μ) / N)`
    pub sigma: f64,
    pub within_3_sigma: bool,
    /// Every hit satisfies `r(q_ν) <= C ψ_ν`.
    pub decay_certified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HitStatistics {
    pub samples: usize,
    /// Levels (1-based) whose union contains each target.
    pub per_eta: Vec<Vec<usize>>,
    pub per_level: Vec<LevelHits>,
    pub all_decay_certified: bool,
    pub all_within_3_sigma: bool,
}

/// Membership of each target in the `E_ν` and the record bound implied by
/// each hit, with `series` holding checkpoints at every `q_ν`.
pub fn level_hit_statistics_series(
    state: &ConstructionState,
    etas: &[UnitPoint],
    series: &[RecordSeries],
) -> Result<HitStatistics> {
    if state.levels.is_empty() {
        return Err(invalid("no admitted level"));
    }
    if series.len() != etas.len() {
        return Err(invalid("one record series per target is needed"));
    }
    let n = state.dim;
    let samples = etas.len();
    let mut per_eta = vec![Vec::new(); samples];
    let mut per_level = Vec::with_capacity(state.levels.len());
    for (idx, level) in state.levels.iter().enumerate() {
        let q = level.q();
        let mut hits = 0;
        let mut decay_certified = true;
        for (i, eta) in etas.iter().enumerate() {
            if level.locate(eta.coords()).is_none() {
                continue;
            }
            hits += 1;
            per_eta[i].push(idx + 1);
            let cp = series[i]
                .at(q)
                .ok_or_else(|| invalid(format!("record series lack the checkpoint {q}")))?;
            let Record { k, dist_raw } = cp.best;
            if cmp_scaled_power_prod(k, dist_raw as u128, n, level.c(), level.psi) == Ordering::Greater {
                decay_certified = false;
            }
        }
        let measure = state.measure(idx);
        let fraction = hits as f64 / samples as f64;
        let sigma = (measure * (1.0 - measure) / samples as f64).sqrt();
        per_level.push(LevelHits {
            nu: idx + 1,
            hits,
            fraction,
            measure,
            sigma,
            within_3_sigma: (fraction - measure).abs() <= 3.0 * sigma,
            decay_certified,
        });
    }
    Ok(HitStatistics {
        samples,
        all_decay_certified: per_level.iter().all(|l| l.decay_certified),
        all_within_3_sigma: per_level.iter().all(|l| l.within_3_sigma),
        per_eta,
        per_level,
    })
}

pub fn level_hit_statistics<S: PointSource + ?Sized>(
    state: &ConstructionState,
    source: &S,
    etas: &[UnitPoint],
) -> Result<HitStatistics> {
    let qs: Vec<u64> = state.levels.iter().map(|l| l.q()).collect();
    let series = record_tracker(source, etas, &qs)?;
    level_hit_statistics_series(state, etas, &series)
}
