//! The covering construction for the almost-everywhere result, run as an
//! algorithm on a concrete sequence.
//!
//! Each level ν takes a witness scale `q_ν`, covers the cube by cells of
//! side `g = C / q_ν^(1/n)`, keeps the cells whose indices are all
//! `≡ 1 (mod 3)`, picks the smallest-index point in each and surrounds it by
//! the closed box of half-width `h = ψ_ν g`. The union is `E_ν`. Levels are
//! admitted only when every earlier box meets roughly its fair share of new
//! boxes, which yields pairwise quasi-independence of the `E_ν` and with it
//! a lower bound for the measure of their limsup set.
//!
//! All geometry is in 64-bit fixed point, and every inequality is decided
//! exactly.

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::dispersion::{CoveringOptions, WitnessCertificate, WitnessScanner, WitnessSource};
use crate::error::{invalid, Error, Result};
use crate::exact::{ceil_root_over, floor_scaled_root, le_one_plus_eps, mul_floor};
use crate::par;
use crate::sequence::PointSource;
use crate::torus::{volume_to_f64, AnchoredBox, Frac64, UnitPoint, ONE};

/// Smallest admissible ψ_ν.
pub const MIN_PSI: f64 = 1.0 / (1u64 << 40) as f64;

/// Smallest per-axis cell count for which a level is built.
pub const MIN_PER_AXIS: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSchedule {
    pub kind: String,
    pub values: Vec<f64>,
}

/// ψ_1..ψ_count. Kinds: `harmonic` (ψ_ν = min(0.9, ν^(-1/n))) and `power:a`
/// (ψ_ν = min(0.9, ν^(-a)), `0 < a <= 1/n` so that Σψ_ν^n diverges).
/// Schedules that do not tend to zero are refused.
pub fn psi_schedule(kind: &str, n: usize, count: usize) -> Result<LevelSchedule> {
    if count == 0 {
        return Err(invalid("schedule needs at least one level"));
    }
    if n == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let exponent = match kind.split_once(':') {
        None if kind == "harmonic" => 1.0 / n as f64,
        Some(("power", a)) => {
            let a: f64 = a
                .parse()
                .map_err(|_| invalid(format!("bad exponent in schedule {kind:?}")))?;
            if a.is_nan() || a <= 0.0 {
                return Err(invalid("power schedule needs a positive exponent so that psi tends to 0"));
            }
            if a > 1.0 / n as f64 {
                return Err(invalid(format!(
                    "power schedule exponent {a} exceeds 1/n, the series of psi^n would converge"
                )));
            }
            a
        }
        Some(("constant", _)) => {
            return Err(invalid("constant schedules do not tend to 0"));
        }
        _ => return Err(invalid(format!("unknown schedule kind {kind:?}"))),
    };
    let values = (1..=count)
        .map(|nu| (nu as f64).powf(-exponent).min(0.9))
        .collect();
    Ok(LevelSchedule {
        kind: kind.to_string(),
        values,
    })
}

/// The covering of `[0,1)^n` by cells `∏ [i_j g, (i_j + 1) g)`,
/// `0 <= i_j < m`, `m = ⌈q^(1/n) / C⌉`, `g = C / q^(1/n)` rounded down to the
/// fixed-point grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverGrid {
    pub q: u64,
    #[serde(rename = "C")]
    pub c: f64,
    pub dim: usize,
    pub per_axis: u64,
    #[serde(skip)]
    pub cell_raw: u128,
}

pub fn cover_cube(q: u64, c: f64, n: usize) -> Result<CoverGrid> {
    if q == 0 {
        return Err(invalid("q must be positive"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid(format!("C must be positive, got {c}")));
    }
    if n == 0 {
        return Err(invalid("dimension must be positive"));
    }
    Ok(CoverGrid {
        q,
        c,
        dim: n,
        per_axis: ceil_root_over(q, n, c),
        cell_raw: floor_scaled_root(q, n, c),
    })
}

impl CoverGrid {
    /// `W = m^n`
    pub fn total(&self) -> u128 {
        (self.per_axis as u128).saturating_pow(self.dim as u32)
    }

    /// `W' = (m - 1)^n` cells with all indices `<= m - 2`, which lie inside
    /// the cube.
    pub fn interior(&self) -> u128 {
        (self.per_axis as u128 - 1).saturating_pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.cell_raw as f64 / ONE as f64
    }

    pub fn anchor(&self, index: &[u64]) -> Vec<Frac64> {
        index
            .iter()
            .map(|&i| Frac64::from_raw((i as u128 * self.cell_raw) as u64))
            .collect()
    }

    /// All `W` anchors, first axis slowest.
    pub fn anchors(&self) -> impl Iterator<Item = Vec<Frac64>> + '_ {
        let m = self.per_axis;
        let n = self.dim;
        (0..self.total()).map(move |mut l| {
            let mut idx = vec![0u64; n];
            for j in (0..n).rev() {
                idx[j] = (l % m as u128) as u64;
                l /= m as u128;
            }
            self.anchor(&idx)
        })
    }

    /// Number of selected indices per axis: `i = 1 + 3t >= 1` whose cell and
    /// both neighbours lie inside the cube, `(i + 2) g <= 1`.
    pub fn selected_per_axis(&self) -> u64 {
        let fit = (ONE / self.cell_raw) as u64; // largest i + 2 allowed
        if fit < 3 {
            0
        } else {
            (fit - 3) / 3 + 1
        }
    }

    /// Selected slot `t` of the cell holding `x`, if that cell is selected.
    #[inline]
    fn slot(&self, x: Frac64, selected: u64) -> Option<u64> {
        let i = (x.raw() as u128 / self.cell_raw) as u64;
        if i % 3 == 1 && (i - 1) / 3 < selected {
            Some((i - 1) / 3)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Representative {
    /// Per-axis cell indices.
    pub cell: Vec<u64>,
    /// Smallest index of a point in the cell.
    pub k: u64,
}

fn check_grid(grid: &CoverGrid) -> Result<u64> {
    if grid.per_axis < MIN_PER_AXIS {
        return Err(invalid(format!(
            "per-axis cell count {} below {MIN_PER_AXIS} at q = {}, C = {}",
            grid.per_axis, grid.q, grid.c
        )));
    }
    let s = grid.selected_per_axis();
    if s == 0 {
        return Err(invalid("no selectable cell inside the cube"));
    }
    Ok(s)
}

/// Smallest point index in every selected cell, cells in lexicographic
/// order with the first axis slowest. Stops scanning once all cells hold a
/// point.
fn fill_cells<S: PointSource + ?Sized>(source: &S, grid: &CoverGrid, selected: u64) -> Result<Vec<u64>> {
    let n = grid.dim;
    source.check_available(grid.q)?;
    let cells = (selected as u128).checked_pow(n as u32).filter(|&c| c < (1 << 34)).ok_or_else(|| {
        invalid(format!("{selected}^{n} selected cells is beyond desk scale"))
    })? as usize;
    let mut ks = vec![0u64; cells];
    let mut missing = cells;
    let mut point = vec![Frac64::ZERO; n];
    for k in 1..=grid.q {
        source.fill_point(k, &mut point);
        let mut l = 0usize;
        let mut inside = true;
        for &x in &point {
            match grid.slot(x, selected) {
                Some(t) => l = l * selected as usize + t as usize,
                None => {
                    inside = false;
                    break;
                }
            }
        }
        if inside && ks[l] == 0 {
            ks[l] = k;
            missing -= 1;
            if missing == 0 {
                break;
            }
        }
    }
    if let Some(l) = ks.iter().position(|&k| k == 0) {
        let cell = unflatten(l, selected, n);
        let anchor = grid.anchor(&cell).iter().map(|a| a.to_f64()).collect();
        return Err(Error::WitnessViolation { q: grid.q, anchor });
    }
    Ok(ks)
}

fn unflatten(mut l: usize, selected: u64, n: usize) -> Vec<u64> {
    let mut cell = vec![0u64; n];
    for j in (0..n).rev() {
        cell[j] = 1 + 3 * (l as u64 % selected);
        l /= selected as usize;
    }
    cell
}

/// One representative per selected cell. Requires the witness property at
/// `(q, C)`; an empty selected cell is reported as a witness violation.
pub fn select_mod3_representatives<S: PointSource + ?Sized>(
    source: &S,
    q: u64,
    c: f64,
) -> Result<Vec<Representative>> {
    let grid = cover_cube(q, c, source.dim())?;
    let s = check_grid(&grid)?;
    let ks = fill_cells(source, &grid, s)?;
    Ok(ks
        .into_iter()
        .enumerate()
        .map(|(l, k)| Representative {
            cell: unflatten(l, s, grid.dim),
            k,
        })
        .collect())
}

/// The boxes `I_l(ν)` of one level.
#[derive(Clone, Debug)]
pub struct ConstructionLevel {
    pub nu: usize,
    pub grid: CoverGrid,
    pub psi: f64,
    /// Selected indices per axis.
    pub selected: u64,
    pub half_width_raw: u128,
    ks: Vec<u64>,
    centers: Vec<Frac64>,
}

impl ConstructionLevel {
    pub fn q(&self) -> u64 {
        self.grid.q
    }

    pub fn c(&self) -> f64 {
        self.grid.c
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    /// `q'_ν`
    pub fn q_prime(&self) -> usize {
        self.ks.len()
    }

    pub fn ks(&self) -> &[u64] {
        &self.ks
    }

    pub fn center(&self, l: usize) -> &[Frac64] {
        let n = self.dim();
        &self.centers[l * n..(l + 1) * n]
    }

    /// `I_l(ν)` as a half-open box with the same closure and measure.
    pub fn box_at(&self, l: usize) -> AnchoredBox {
        let h = self.half_width_raw;
        let anchor = self
            .center(l)
            .iter()
            .map(|x| Frac64::from_raw((x.raw() as u128 - h) as u64))
            .collect();
        AnchoredBox::new(UnitPoint::new(anchor).unwrap(), 2 * h, true).unwrap()
    }

    /// `μ(E_ν)` in units of `2^(-64 n)`.
    pub fn measure_exact(&self) -> BigUint {
        BigUint::from(self.q_prime()) * BigUint::from(2 * self.half_width_raw).pow(self.dim() as u32)
    }

    pub fn measure(&self) -> f64 {
        volume_to_f64(&self.measure_exact(), self.dim())
    }

    /// Sum of the box volumes after clipping to the unit cube. Equals
    /// [`Self::measure_exact`] exactly when no box protrudes.
    pub fn clipped_measure_exact(&self) -> BigUint {
        let h = self.half_width_raw;
        let mut total = BigUint::zero();
        for l in 0..self.q_prime() {
            let mut v = BigUint::from(1u32);
            for x in self.center(l) {
                let c = x.raw() as i128;
                let lo = (c - h as i128).max(0);
                let hi = (c + h as i128).min(ONE as i128);
                v *= BigUint::from((hi - lo).max(0) as u128);
            }
            total += v;
        }
        total
    }

    /// `q'_ν / q_ν`
    pub fn c1(&self) -> f64 {
        self.q_prime() as f64 / self.q() as f64
    }

    /// `c` in `μ(E_ν) = c ψ_ν^n`, i.e. `q'_ν (2C)^n / q_ν` up to rounding of
    /// the half-width.
    pub fn measure_constant(&self) -> f64 {
        self.measure() / self.psi.powi(self.dim() as i32)
    }

    /// Index of the box containing `eta`, if any.
    pub fn locate(&self, eta: &[Frac64]) -> Option<usize> {
        let g = self.grid.cell_raw;
        let h = self.half_width_raw;
        let mut l = 0usize;
        for &x in eta {
            // a box centered in cell i reaches at most one cell either side
            let i = (x.raw() as u128 / g) as u64;
            let t = [i.wrapping_sub(1), i, i + 1]
                .into_iter()
                .find(|&c| c % 3 == 1 && c >= 1 && (c - 1) / 3 < self.selected)?;
            l = l * self.selected as usize + ((t - 1) / 3) as usize;
        }
        let inside = self
            .center(l)
            .iter()
            .zip(eta)
            .all(|(c, x)| (c.raw() as i128 - x.raw() as i128).unsigned_abs() <= h);
        inside.then_some(l)
    }

    /// Exact pairwise disjointness of the closed boxes by a sweep along the
    /// first axis.
    pub fn verify_disjoint(&self) -> std::result::Result<(), (usize, usize)> {
        let n = self.dim();
        let w = 2 * self.half_width_raw;
        let mut order: Vec<usize> = (0..self.q_prime()).collect();
        order.sort_by_key(|&l| self.centers[l * n]);
        for (a, &i) in order.iter().enumerate() {
            let ci = self.center(i);
            for &j in &order[a + 1..] {
                let cj = self.center(j);
                if (cj[0].raw() - ci[0].raw()) as u128 > w {
                    break;
                }
                let apart = ci
                    .iter()
                    .zip(cj)
                    .any(|(x, y)| (x.raw() as i128 - y.raw() as i128).unsigned_abs() > w);
                if !apart {
                    return Err((i.min(j), i.max(j)));
                }
            }
        }
        Ok(())
    }
}

/// Builds level `nu` at witness scale `q`.
pub fn build_level<S: PointSource + ?Sized>(
    source: &S,
    q: u64,
    c: f64,
    psi: f64,
    nu: usize,
) -> Result<ConstructionLevel> {
    if !(MIN_PSI..1.0).contains(&psi) {
        return Err(invalid(format!("psi must lie in [2^-40, 1), got {psi}")));
    }
    let grid = cover_cube(q, c, source.dim())?;
    let selected = check_grid(&grid)?;
    let ks = fill_cells(source, &grid, selected)?;
    let n = grid.dim;
    let mut centers = vec![Frac64::ZERO; ks.len() * n];
    for (l, &k) in ks.iter().enumerate() {
        source.fill_point(k, &mut centers[l * n..(l + 1) * n]);
    }
    let half_width_raw = mul_floor(grid.cell_raw, psi);
    if half_width_raw == 0 {
        return Err(invalid("boxes collapse to points at this scale"));
    }
    let level = ConstructionLevel {
        nu,
        grid,
        psi,
        selected,
        half_width_raw,
        ks,
        centers,
    };
    if let Err((a, b)) = level.verify_disjoint() {
        return Err(Error::Internal(format!(
            "boxes {a} and {b} of level {nu} intersect at q = {q}"
        )));
    }
    Ok(level)
}

/// Ranges of selected slots on each axis whose boxes can meet the closed
/// box `center ± reach`.
fn slot_ranges(level: &ConstructionLevel, center: &[Frac64], reach: u128) -> Option<Vec<(u64, u64)>> {
    let g = level.grid.cell_raw;
    center
        .iter()
        .map(|x| {
            let lo = (x.raw() as u128).saturating_sub(reach);
            let hi = x.raw() as u128 + reach;
            // cell i can hold a center within [lo, hi] iff i g <= hi and (i + 1) g > lo
            let i_min = (lo / g) as u64;
            let i_max = (hi / g).min(u64::MAX as u128) as u64;
            let t_min = i_min.saturating_add(1) / 3;
            if i_max < 1 {
                return None;
            }
            let t_max = ((i_max - 1) / 3).min(level.selected - 1);
            (t_min <= t_max).then_some((t_min, t_max))
        })
        .collect()
}

/// Number of boxes of `level` meeting the closed box `center ± half`, and
/// the sum of their intersection volumes in units of `2^(-64 n)`.
fn meet(level: &ConstructionLevel, center: &[Frac64], half: u128) -> (u64, BigUint) {
    let h = level.half_width_raw;
    let reach = half + h;
    let Some(ranges) = slot_ranges(level, center, reach) else {
        return (0, BigUint::zero());
    };
    let s = level.selected as usize;
    // overlap of [c - half, c + half] and [o - h, o + h] along one axis
    let overlap = |d: u128| (reach - d).min(2 * half).min(2 * h);
    let mut count = 0u64;
    let mut volume = BigUint::zero();
    let mut slot: Vec<u64> = ranges.iter().map(|r| r.0).collect();
    'cells: loop {
        let l = slot.iter().fold(0usize, |acc, &t| acc * s + t as usize);
        let dists: Vec<u128> = level
            .center(l)
            .iter()
            .zip(center)
            .map(|(o, c)| (o.raw() as i128 - c.raw() as i128).unsigned_abs())
            .collect();
        if dists.iter().all(|&d| d <= reach) {
            count += 1;
            volume += dists
                .iter()
                .fold(BigUint::from(1u32), |v, &d| v * BigUint::from(overlap(d)));
        }
        for j in (0..slot.len()).rev() {
            if slot[j] < ranges[j].1 {
                slot[j] += 1;
                continue 'cells;
            }
            slot[j] = ranges[j].0;
        }
        break;
    }
    (count, volume)
}

/// Per-box meeting counts of `new` against one earlier level together with
/// the exact measure of the intersection of their unions.
fn meet_level(prior: &ConstructionLevel, new: &ConstructionLevel) -> (Vec<u64>, BigUint) {
    const CHUNK: usize = 4096;
    let starts: Vec<usize> = (0..prior.q_prime()).step_by(CHUNK).collect();
    let parts = par::map(starts, |start| {
        let end = (start + CHUNK).min(prior.q_prime());
        let mut counts = Vec::with_capacity(end - start);
        let mut volume = BigUint::zero();
        for l in start..end {
            let (c, v) = meet(new, prior.center(l), prior.half_width_raw);
            counts.push(c);
            volume += v;
        }
        (counts, volume)
    });
    let mut counts = Vec::with_capacity(prior.q_prime());
    let mut volume = BigUint::zero();
    for (c, v) in parts {
        counts.extend(c);
        volume += v;
    }
    (counts, volume)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverlapCheck {
    pub passed: bool,
    /// Largest `count / (μ(I_l(λ)) q'_new)` over earlier boxes.
    pub worst_ratio: f64,
    /// `(λ, l)` attaining the worst ratio.
    pub worst_box: Option<(usize, usize)>,
    /// Meeting counts per earlier level and box.
    #[serde(skip)]
    pub counts: Vec<Vec<u64>>,
    /// Exact `μ(E_λ ∩ E_new)` per earlier level, units `2^(-64 n)`.
    #[serde(skip)]
    pub intersections: Vec<BigUint>,
}

/// Checks that every earlier box meets at most `(1 + ε) μ(I_l(λ)) q'_new`
/// new boxes.
pub fn check_overlap_condition(candidate: &ConstructionLevel, prior: &ConstructionState) -> OverlapCheck {
    let n = candidate.dim();
    let q_new = BigUint::from(candidate.q_prime());
    let scale = BigUint::from(1u32) << (64 * n);
    let mut passed = true;
    let mut worst_ratio = 0.0f64;
    let mut worst_box = None;
    let mut counts = Vec::with_capacity(prior.levels.len());
    let mut intersections = Vec::with_capacity(prior.levels.len());
    for (li, level) in prior.levels.iter().enumerate() {
        let (c, volume) = meet_level(level, candidate);
        let box_vol = BigUint::from(2 * level.half_width_raw).pow(n as u32);
        let expected = &box_vol * &q_new;
        let expected_f = volume_to_f64(&expected, n);
        // all boxes of a level share one volume, so the largest count decides
        if let Some((l, &most)) = c.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))) {
            let ratio = most as f64 / expected_f;
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst_box = Some((li, l));
            }
            if !le_one_plus_eps(&(BigUint::from(most) * &scale), &expected, prior.epsilon) {
                passed = false;
            }
        }
        counts.push(c);
        intersections.push(volume);
    }
    OverlapCheck {
        passed,
        worst_ratio,
        worst_box,
        counts,
        intersections,
    }
}

/// Admitted levels with their exact measures and pairwise intersections.
#[derive(Clone, Debug)]
pub struct ConstructionState {
    pub epsilon: f64,
    pub dim: usize,
    pub levels: Vec<ConstructionLevel>,
    /// `μ(E_ν)`, units `2^(-64 n)`.
    pub measures: Vec<BigUint>,
    /// `intersections[ν][λ] = μ(E_λ ∩ E_ν)` for `λ < ν`.
    pub intersections: Vec<Vec<BigUint>>,
}

impl ConstructionState {
    pub fn new(epsilon: f64, dim: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(ConstructionState {
            epsilon,
            dim,
            levels: Vec::new(),
            measures: Vec::new(),
            intersections: Vec::new(),
        })
    }

    pub fn measure(&self, nu: usize) -> f64 {
        volume_to_f64(&self.measures[nu], self.dim)
    }

    pub fn intersection(&self, lambda: usize, nu: usize) -> f64 {
        match lambda.cmp(&nu) {
            Ordering::Less => volume_to_f64(&self.intersections[nu][lambda], self.dim),
            Ordering::Greater => volume_to_f64(&self.intersections[lambda][nu], self.dim),
            Ordering::Equal => self.measure(nu),
        }
    }

    /// `μ(E_λ ∩ E_ν) / (μ(E_λ) μ(E_ν))` for `λ < ν`.
    pub fn quasi_ratio(&self, lambda: usize, nu: usize) -> f64 {
        self.intersection(lambda, nu) / (self.measure(lambda) * self.measure(nu))
    }

    /// `Σ_ν μ(E_ν)` over the first `t` levels.
    pub fn divergence_sum(&self, t: usize) -> f64 {
        (0..t.min(self.levels.len())).map(|nu| self.measure(nu)).sum()
    }
}

/// Adds `level` after checking exact quasi-independence against every
/// earlier level. `intersections` may carry the values already computed by
/// [`check_overlap_condition`].
pub fn admit_level(
    state: &mut ConstructionState,
    level: ConstructionLevel,
    intersections: Option<Vec<BigUint>>,
) -> Result<()> {
    if level.dim() != state.dim {
        return Err(Error::DimensionMismatch {
            expected: state.dim,
            got: level.dim(),
        });
    }
    let n = state.dim;
    let measure = level.measure_exact();
    let intersections = match intersections {
        Some(v) if v.len() == state.levels.len() => v,
        _ => state.levels.iter().map(|prior| meet_level(prior, &level).1).collect(),
    };
    let scale = BigUint::from(1u32) << (64 * n);
    for (lambda, inter) in intersections.iter().enumerate() {
        let product = &state.measures[lambda] * &measure;
        if !le_one_plus_eps(&(inter * &scale), &product, state.epsilon) {
            return Err(Error::QuasiIndependence {
                lambda: lambda + 1,
                nu: state.levels.len() + 1,
                intersection: volume_to_f64(inter, n),
                product: volume_to_f64(&product, 2 * n),
            });
        }
    }
    state.levels.push(level);
    state.measures.push(measure);
    state.intersections.push(intersections);
    Ok(())
}

/// `(Σ μ_ν)^2 / Σ_{λ,ν} μ(E_λ ∩ E_ν)` from plain numbers; `inter[ν][λ]`
/// for `λ < ν`.
pub fn schmidt_ratio(measures: &[f64], inter: &[Vec<f64>]) -> f64 {
    let sum: f64 = measures.iter().sum();
    let off: f64 = inter.iter().flatten().sum();
    sum * sum / (sum + 2.0 * off)
}

/// Finite-`t` value of the divergence Borel–Cantelli bound over the first
/// `t` admitted levels.
pub fn schmidt_lower_bound(state: &ConstructionState, t: usize) -> Result<f64> {
    if t == 0 || t > state.levels.len() {
        return Err(invalid(format!(
            "t must lie in 1..={}, got {t}",
            state.levels.len()
        )));
    }
    let mut sum = BigUint::zero();
    let mut pairs = BigUint::zero();
    for nu in 0..t {
        sum += &state.measures[nu];
        for v in &state.intersections[nu] {
            pairs += v;
        }
    }
    let n = state.dim;
    let s = volume_to_f64(&sum, n);
    let denom = volume_to_f64(&(sum + (pairs << 1u32)), n);
    Ok(s * s / denom)
}

/// Certified witnesses from an ascending candidate list, skipping scales too
/// coarse for a level.
pub struct WitnessStream<'a, I> {
    scanner: WitnessScanner<'a>,
    candidates: I,
    dim: usize,
    last: u64,
    /// Candidates examined so far.
    pub examined: u64,
}

impl<'a, I: Iterator<Item = u64>> WitnessStream<'a, I> {
    pub fn new(source: WitnessSource<'a>, candidates: I, c: f64, covering: CoveringOptions) -> Result<Self> {
        Ok(WitnessStream {
            dim: source.dim(),
            scanner: WitnessScanner::new(source, c, covering)?,
            candidates,
            last: 0,
            examined: 0,
        })
    }

    pub fn last_candidate(&self) -> u64 {
        self.last
    }
}

impl<I: Iterator<Item = u64>> Iterator for WitnessStream<'_, I> {
    type Item = Result<WitnessCertificate>;

    fn next(&mut self) -> Option<Self::Item> {
        let c = self.scanner.c_target();
        for q in self.candidates.by_ref() {
            if q <= self.last {
                continue;
            }
            self.last = q;
            self.examined += 1;
            let grid = match cover_cube(q, c, self.dim) {
                Ok(g) => g,
                Err(e) => return Some(Err(e)),
            };
            if grid.per_axis < MIN_PER_AXIS || grid.selected_per_axis() == 0 {
                continue;
            }
            match self.scanner.certify(q) {
                Ok(Some(cert)) => return Some(Ok(cert)),
                Ok(None) => {}
                Err(e) => return Some(Err(e)),
            }
        }
        None
    }
}

/// A level that passed the overlap condition, with the witness it used.
pub struct Accepted {
    pub level: ConstructionLevel,
    pub witness: WitnessCertificate,
    pub overlap: OverlapCheck,
    /// Certified witnesses rejected by the overlap condition first.
    pub rejected: usize,
}

/// Takes witnesses until one yields a level passing the overlap condition.
pub fn find_next_q<S, I>(
    prior: &ConstructionState,
    source: &S,
    witnesses: &mut WitnessStream<'_, I>,
    psi_next: f64,
) -> Result<Accepted>
where
    S: PointSource + ?Sized,
    I: Iterator<Item = u64>,
{
    let nu = prior.levels.len() + 1;
    let mut rejected = 0;
    let mut last_ratio: Option<f64> = None;
    for cert in witnesses.by_ref() {
        let cert = cert?;
        let level = build_level(source, cert.q, cert.c, psi_next, nu)?;
        let overlap = check_overlap_condition(&level, prior);
        if overlap.passed {
            return Ok(Accepted {
                level,
                witness: cert,
                overlap,
                rejected,
            });
        }
        last_ratio = Some(overlap.worst_ratio);
        rejected += 1;
    }
    let reason = match last_ratio {
        Some(r) => format!(
            "witness candidates exhausted at q = {} after {rejected} rejected levels, last worst ratio {r:.6}",
            witnesses.last_candidate()
        ),
        None => format!(
            "no certified witness among candidates up to q = {}",
            witnesses.last_candidate()
        ),
    };
    Err(Error::Stalled { level: nu, reason })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionParams {
    #[serde(rename = "C")]
    pub c: f64,
    pub epsilon: f64,
    pub schedule: LevelSchedule,
    pub levels: usize,
    /// Largest witness candidate examined.
    pub max_q: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelReport {
    pub nu: usize,
    pub q_nu: u64,
    pub q_prime: usize,
    pub psi_nu: f64,
    pub measure: f64,
    /// `min_{λ<ν} ((1 + ε) − μ(E_λ ∩ E_ν) / (μ(E_λ) μ(E_ν)))`
    pub min_pairwise_slack: Option<f64>,
    pub overlap_worst_ratio: Option<f64>,
    pub disjoint: bool,
    pub measure_matches_closed_form: bool,
    /// `q'_ν / q_ν`
    pub c1: f64,
    /// `μ(E_ν) / ψ_ν^n`
    pub measure_constant: f64,
    pub half_width: f64,
    pub s_star: f64,
    #[serde(rename = "C_of_q")]
    pub c_of_q: f64,
    pub rho: f64,
    pub witnesses_rejected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstructionReport {
    pub params: ConstructionParams,
    pub levels: Vec<LevelReport>,
    /// `intersections[ν][λ]` for `λ < ν`.
    pub intersections: Vec<Vec<f64>>,
    pub schmidt_bound_history: Vec<f64>,
    pub divergence_sum: Vec<f64>,
    /// Smallest measure constant over levels.
    pub uniform_measure_constant: f64,
    pub all_checks_passed: bool,
}

impl ConstructionReport {
    /// Rows `t,schmidt_bound`.
    pub fn schmidt_csv(&self) -> String {
        let mut out = String::from("t,schmidt_bound\n");
        for (t, b) in self.schmidt_bound_history.iter().enumerate() {
            out.push_str(&format!("{},{}\n", t + 1, b));
        }
        out
    }
}

/// Full pipeline: levels 1..=`levels` from the witness candidates.
pub struct Construction {
    pub state: ConstructionState,
    pub report: ConstructionReport,
    pub witnesses: Vec<WitnessCertificate>,
}

pub fn run_construction<S, I>(
    source: &S,
    witness_source: WitnessSource<'_>,
    candidates: I,
    params: &ConstructionParams,
    covering: CoveringOptions,
) -> Result<Construction>
where
    S: PointSource + ?Sized,
    I: Iterator<Item = u64>,
{
    if params.levels == 0 {
        return Err(invalid("at least one level is needed"));
    }
    if params.schedule.values.len() < params.levels {
        return Err(invalid("schedule shorter than the level count"));
    }
    let dim = source.dim();
    let mut state = ConstructionState::new(params.epsilon, dim)?;
    let max_q = params.max_q;
    let mut stream = WitnessStream::new(
        witness_source,
        candidates.take_while(|&q| q <= max_q),
        params.c,
        covering,
    )?;
    let mut reports = Vec::new();
    let mut witnesses = Vec::new();
    for nu in 1..=params.levels {
        let psi = params.schedule.values[nu - 1];
        let accepted = find_next_q(&state, source, &mut stream, psi)?;
        let Accepted {
            level,
            witness,
            overlap,
            rejected,
        } = accepted;
        let disjoint = level.verify_disjoint().is_ok();
        let measure_matches = level.clipped_measure_exact() == level.measure_exact();
        let mut report = LevelReport {
            nu,
            q_nu: level.q(),
            q_prime: level.q_prime(),
            psi_nu: psi,
            measure: level.measure(),
            min_pairwise_slack: None,
            overlap_worst_ratio: (nu > 1).then_some(overlap.worst_ratio),
            disjoint,
            measure_matches_closed_form: measure_matches,
            c1: level.c1(),
            measure_constant: level.measure_constant(),
            half_width: level.half_width_raw as f64 / ONE as f64,
            s_star: witness.s_star,
            c_of_q: witness.c_of_q,
            rho: witness.rho,
            witnesses_rejected: rejected,
        };
        admit_level(&mut state, level, Some(overlap.intersections))?;
        let i = state.levels.len() - 1;
        report.min_pairwise_slack = (0..i)
            .map(|lambda| 1.0 + params.epsilon - state.quasi_ratio(lambda, i))
            .reduce(f64::min);
        reports.push(report);
        witnesses.push(witness);
    }
    let t = state.levels.len();
    let schmidt_bound_history = (1..=t)
        .map(|k| schmidt_lower_bound(&state, k))
        .collect::<Result<Vec<_>>>()?;
    let divergence_sum = (1..=t).map(|k| state.divergence_sum(k)).collect();
    let intersections = (0..t)
        .map(|nu| (0..nu).map(|lambda| state.intersection(lambda, nu)).collect())
        .collect();
    let uniform_measure_constant = reports.iter().map(|r| r.measure_constant).fold(f64::INFINITY, f64::min);
    let all_checks_passed = uniform_measure_constant > 0.0
        && reports.iter().all(|r| {
            r.disjoint
                && r.measure_matches_closed_form
                && r.overlap_worst_ratio.is_none_or(|w| w <= 1.0 + params.epsilon)
                && r.min_pairwise_slack.is_none_or(|s| s >= 0.0)
        });
    let report = ConstructionReport {
        params: params.clone(),
        levels: reports,
        intersections,
        schmidt_bound_history,
        divergence_sum,
        uniform_measure_constant,
        all_checks_passed,
    };
    Ok(Construction {
        state,
        report,
        witnesses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{kronecker_prefix, AlphaVector, SequencePrefix};

    fn golden() -> AlphaVector {
        AlphaVector::parse("golden").unwrap()
    }

    #[test]
    fn schedule_examples() {
        let s = psi_schedule("harmonic", 1, 3).unwrap();
        assert_eq!(s.values[..2], [0.9, 0.5]);
        assert!((s.values[2] - 1.0 / 3.0).abs() < 1e-15);
        let s = psi_schedule("harmonic", 2, 4).unwrap();
        assert_eq!(s.values[0], 0.9);
        assert!((s.values[1] - 0.5f64.sqrt()).abs() < 1e-8);
        assert!((s.values[2] - (1.0f64 / 3.0).sqrt()).abs() < 1e-8);
        assert_eq!(s.values[3], 0.5);
        assert!(psi_schedule("constant:0.5", 1, 3).is_err());
        assert!(psi_schedule("power:0.8", 2, 3).is_err());
        assert!(psi_schedule("power:0.5", 2, 3).is_ok());
        assert!(psi_schedule("bogus", 1, 3).is_err());
        assert!(psi_schedule("harmonic", 1, 0).is_err());
    }

    #[test]
    fn cover_examples() {
        let g = cover_cube(100, 1.0, 2).unwrap();
        assert_eq!((g.total(), g.interior()), (100, 81));
        assert_eq!(g.cell_raw, ONE / 10);
        let anchors: Vec<_> = g.anchors().collect();
        assert_eq!(anchors.len(), 100);
        assert_eq!(anchors[13], vec![Frac64::from_raw((ONE / 10) as u64), Frac64::from_raw((3 * (ONE / 10)) as u64)]);

        let g = cover_cube(8, 1.0, 3).unwrap();
        assert_eq!((g.total(), g.interior()), (8, 1));

        let g = cover_cube(100, 0.1, 1).unwrap();
        assert_eq!(g.total(), 1000);
        assert!((g.spacing() - 0.001).abs() < 1e-15);

        assert!(cover_cube(0, 1.0, 1).is_err());
        assert!(cover_cube(10, 0.0, 1).is_err());
    }

    #[test]
    fn selection_counts() {
        // 10 cells per axis: {1, 4, 7} with room for both neighbours
        let g = cover_cube(100, 1.0, 2).unwrap();
        assert_eq!(g.selected_per_axis(), 3);
        // 55 / 3: g = 3/55, (i + 2) g <= 1 needs i <= 16
        let g = cover_cube(55, 3.0, 1).unwrap();
        assert_eq!(g.per_axis, 19);
        let by_hand = (0..19).filter(|&i| i % 3 == 1 && (i + 2) as f64 * 3.0 / 55.0 <= 1.0).count();
        assert_eq!(g.selected_per_axis(), by_hand as u64);
        assert_eq!(by_hand, 6);
    }

    #[test]
    fn representatives_take_the_smallest_index() {
        let p = |xs: &[f64]| {
            let pts: Vec<UnitPoint> = xs.iter().map(|&x| UnitPoint::from_f64(&[x]).unwrap()).collect();
            SequencePrefix::from_points(&pts, "t").unwrap()
        };
        // q = 5, C = 0.625: 8 cells of width 1/8, selected i = 1 and 4
        let reps = select_mod3_representatives(&p(&[0.55, 0.2, 0.13, 0.6, 0.9]), 5, 0.625).unwrap();
        assert_eq!(
            reps,
            vec![Representative { cell: vec![1], k: 2 }, Representative { cell: vec![4], k: 1 }]
        );
        // q = 2, C = 0.5: 4 cells, only [1/4, 1/2) selected and nothing lands there
        let err = select_mod3_representatives(&p(&[0.55, 0.9, 0.3]), 2, 0.5).unwrap_err();
        assert!(matches!(err, Error::WitnessViolation { q: 2, .. }));
        let err = select_mod3_representatives(&p(&[0.5]), 5, 0.625).unwrap_err();
        assert!(matches!(err, Error::ShortSequence { .. }));
    }

    #[test]
    fn golden_level_at_55() {
        let a = golden();
        let level = build_level(&a, 55, 3.0, 0.5, 1).unwrap();
        assert_eq!(level.q_prime(), 6);
        let side = 2.0 * level.half_width_raw as f64 / ONE as f64;
        assert!((side - 3.0 * 0.5 * 2.0 / 55.0).abs() < 1e-15);
        assert!((level.measure() - 6.0 * side).abs() < 1e-15);
        assert_eq!(level.clipped_measure_exact(), level.measure_exact());
        // representative of each cell is the smallest k with {kφ} in it
        let prefix = kronecker_prefix(&a, 55).unwrap();
        for (l, &k) in level.ks().iter().enumerate() {
            let i = 1 + 3 * l as u64;
            let lo = i as f64 * 3.0 / 55.0;
            let hi = lo + 3.0 / 55.0;
            let first = (1..=55).find(|&j| {
                let x = prefix.point(j)[0].to_f64();
                x >= lo && x < hi
            });
            assert_eq!(first, Some(k as usize));
        }
        for l in 0..level.q_prime() {
            let b = level.box_at(l);
            assert!(b.is_contained());
            assert_eq!(level.locate(level.center(l)), Some(l));
        }
    }

    #[test]
    fn level_guards() {
        let a = golden();
        assert!(build_level(&a, 55, 3.0, 1.0, 1).is_err());
        assert!(build_level(&a, 55, 3.0, 1e-13, 1).is_err());
        assert!(build_level(&a, 8, 3.0, 0.5, 1).is_err());
        assert!(build_level(&a, 55, 3.0, MIN_PSI, 1).is_ok());
    }

    #[test]
    fn adjacent_selected_boxes_are_separated() {
        let level = build_level(&golden(), 6765, 3.0, 0.99, 1).unwrap();
        let g = level.grid.cell_raw;
        for l in 1..level.q_prime() {
            let gap = level.center(l)[0].raw() - level.center(l - 1)[0].raw();
            assert!(gap as u128 > 2 * g - 2 * level.half_width_raw);
            assert!(gap as u128 > 2 * level.half_width_raw);
        }
        assert!(level.verify_disjoint().is_ok());
    }

    #[test]
    fn overlap_arithmetic() {
        // threshold (1 + ε) μ q' = 1.1 · 0.01 · 10^4 = 110
        let base = BigUint::from(100u32);
        assert!(le_one_plus_eps(&BigUint::from(110u32), &base, 0.1 + 1e-12));
        assert!(!le_one_plus_eps(&BigUint::from(111u32), &base, 0.1));
    }

    #[test]
    fn first_level_is_vacuous_and_tiny_second_level_fails() {
        let a = golden();
        let mut state = ConstructionState::new(0.1, 1).unwrap();
        let first = build_level(&a, 55, 3.0, 0.9, 1).unwrap();
        let check = check_overlap_condition(&first, &state);
        assert!(check.passed && check.counts.is_empty());
        admit_level(&mut state, first, None).unwrap();
        let tiny = build_level(&a, 89, 3.0, 0.5, 2).unwrap();
        let check = check_overlap_condition(&tiny, &state);
        assert!(!check.passed);
        assert!(check.worst_ratio > 1.1);
    }

    #[test]
    fn two_level_golden_run() {
        let a = golden();
        let mut state = ConstructionState::new(0.1, 1).unwrap();
        admit_level(&mut state, build_level(&a, 55, 3.0, 0.9, 1).unwrap(), None).unwrap();
        let second = build_level(&a, 6765, 3.0, 0.5, 2).unwrap();
        let check = check_overlap_condition(&second, &state);
        assert!(check.passed, "{}", check.worst_ratio);

        // counts and intersections against brute force over all box pairs
        let first = &state.levels[0];
        let mut brute = 0u128;
        for l in 0..first.q_prime() {
            let (c0, h0) = (first.center(l)[0].raw() as i128, first.half_width_raw as i128);
            let mut count = 0;
            for r in 0..second.q_prime() {
                let (c1, h1) = (second.center(r)[0].raw() as i128, second.half_width_raw as i128);
                let len = (c0 + h0).min(c1 + h1) - (c0 - h0).max(c1 - h1);
                if len >= 0 {
                    count += 1;
                    brute += len as u128;
                }
            }
            assert_eq!(check.counts[0][l], count);
        }
        assert_eq!(check.intersections[0], BigUint::from(brute));
        admit_level(&mut state, second, Some(check.intersections)).unwrap();
        let r = state.quasi_ratio(0, 1);
        assert!(r <= 1.1, "{r}");
    }

    #[test]
    fn two_dimensional_meeting_matches_brute_force() {
        let a = AlphaVector::parse("sqrt2,sqrt3").unwrap();
        let p = kronecker_prefix(&a, 20_000).unwrap();
        let first = build_level(&p, 400, 3.0, 0.9, 1).unwrap();
        let second = build_level(&p, 20_000, 3.0, 0.6, 2).unwrap();
        let mut state = ConstructionState::new(0.5, 2).unwrap();
        admit_level(&mut state, first, None).unwrap();
        let check = check_overlap_condition(&second, &state);
        let first = &state.levels[0];
        let mut brute = BigUint::zero();
        for l in 0..first.q_prime() {
            let mut count = 0;
            for r in 0..second.q_prime() {
                let mut vol = BigUint::from(1u32);
                let mut meets = true;
                for j in 0..2 {
                    let (c0, h0) = (first.center(l)[j].raw() as i128, first.half_width_raw as i128);
                    let (c1, h1) = (second.center(r)[j].raw() as i128, second.half_width_raw as i128);
                    let len = (c0 + h0).min(c1 + h1) - (c0 - h0).max(c1 - h1);
                    if len < 0 {
                        meets = false;
                        break;
                    }
                    vol *= BigUint::from(len as u128);
                }
                if meets {
                    count += 1;
                    brute += vol;
                }
            }
            assert_eq!(check.counts[0][l], count);
        }
        assert_eq!(check.intersections[0], brute);
    }

    #[test]
    fn schmidt_examples() {
        let b = schmidt_ratio(&[0.1, 0.1], &[vec![], vec![0.01]]);
        assert!((b - 0.04 / 0.22).abs() < 1e-15);
        let m = 0.2;
        let b = schmidt_ratio(&[m; 4], &[vec![], vec![0.0], vec![0.0; 2], vec![0.0; 3]]);
        assert!((b - 4.0 * m).abs() < 1e-15);
        let state = ConstructionState::new(0.1, 1).unwrap();
        assert!(schmidt_lower_bound(&state, 0).is_err());
        assert!(schmidt_lower_bound(&state, 1).is_err());
    }

    #[test]
    fn small_pipeline() {
        let a = golden();
        let params = ConstructionParams {
            c: 3.0,
            epsilon: 0.1,
            schedule: psi_schedule("harmonic", 1, 3).unwrap(),
            levels: 3,
            max_q: 1 << 40,
        };
        let cands = crate::irrationality::Records::new(&a, None).map(|r| r.0);
        let run = run_construction(&a, WitnessSource::Kronecker(&a), cands, &params, CoveringOptions::default()).unwrap();
        assert!(run.report.all_checks_passed, "{:?}", run.report);
        let qs: Vec<u64> = run.report.levels.iter().map(|l| l.q_nu).collect();
        assert!(qs.windows(2).all(|w| w[0] < w[1]));
        for w in run.report.divergence_sum.windows(2) {
            assert!(w[1] > w[0]);
        }
        // the bound depends only on the admitted set
        let t = run.state.levels.len();
        let direct = schmidt_ratio(
            &(0..t).map(|nu| run.state.measure(nu)).collect::<Vec<_>>(),
            &run.report.intersections,
        );
        assert!((direct - run.report.schmidt_bound_history[t - 1]).abs() < 1e-12);
    }

    #[test]
    fn stalls_without_witnesses() {
        let a = AlphaVector::parse("golden,0").unwrap();
        let params = ConstructionParams {
            c: 3.0,
            epsilon: 0.1,
            schedule: psi_schedule("harmonic", 2, 2).unwrap(),
            levels: 2,
            max_q: 100_000,
        };
        let cands = crate::irrationality::Records::new(&a, None).map(|r| r.0);
        let err = run_construction(&a, WitnessSource::Kronecker(&a), cands, &params, CoveringOptions::default())
            .err()
            .unwrap();
        assert!(matches!(err, Error::Stalled { level: 1, .. }));
    }

    #[test]
    fn tightening_epsilon_never_helps() {
        let a = golden();
        let run = |eps: f64| {
            let params = ConstructionParams {
                c: 3.0,
                epsilon: eps,
                schedule: psi_schedule("harmonic", 1, 2).unwrap(),
                levels: 2,
                max_q: 1_000_000,
            };
            let cands = crate::irrationality::Records::new(&a, None).map(|r| r.0);
            run_construction(&a, WitnessSource::Kronecker(&a), cands, &params, CoveringOptions::default())
        };
        let loose = run(0.1).unwrap();
        match run(1e-6) {
            Ok(tight) => {
                assert!(tight.report.levels[1].q_nu >= loose.report.levels[1].q_nu);
                assert!(tight.report.levels[1].overlap_worst_ratio.unwrap() <= 1.0 + 1e-6);
            }
            Err(e) => assert!(matches!(e, Error::Stalled { level: 2, .. })),
        }
    }
}
