//! Anchored-box dispersion, toroidal covering radius and well-distribution
//! witnesses for finite prefixes.
//!
//! The dispersion `s*` of ξ_1..ξ_q is the supremum side of a half-open cube
//! `[η, η + s)` inside `[0,1)^n` that holds none of the points. The supremum
//! is approached by anchors whose coordinates are either `0` or sit just
//! above a point coordinate; [`AnchorCoord::open`] marks the latter, so the
//! search is a finite scan without any epsilon.

use std::cmp::Ordering;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exact::cmp_scaled_power;
use crate::par;
use crate::sequence::{kronecker_prefix, AlphaVector, PointSource, SequencePrefix};
use crate::torus::{raw_to_f64, sup_torus_dist_raw, Frac64, ONE};

/// One coordinate of a candidate anchor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct AnchorCoord {
    pub value: Frac64,
    /// The anchor sits infinitesimally above `value`, so a point with this
    /// exact coordinate is outside the box.
    pub open: bool,
}

impl AnchorCoord {
    const ORIGIN: AnchorCoord = AnchorCoord {
        value: Frac64::ZERO,
        open: false,
    };

    fn above(value: Frac64) -> Self {
        AnchorCoord { value, open: true }
    }

    /// Is `x` at or beyond this anchor coordinate?
    #[inline]
    fn admits(self, x: Frac64) -> bool {
        if self.open {
            x > self.value
        } else {
            x >= self.value
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispersionResult {
    pub q: u64,
    #[serde(skip)]
    pub s_star_raw: u128,
    pub s_star: f64,
    /// `q^(1/n) · s*`
    #[serde(rename = "C_of_q")]
    pub c_of_q: f64,
    /// Lexicographically smallest candidate anchor attaining `s*`.
    pub witness_anchor: Vec<AnchorCoord>,
}

impl DispersionResult {
    fn new(q: u64, dim: usize, s_star_raw: u128, witness_anchor: Vec<AnchorCoord>) -> Self {
        let s_star = raw_to_f64(s_star_raw);
        DispersionResult {
            q,
            s_star_raw,
            s_star,
            c_of_q: (q as f64).powf(1.0 / dim as f64) * s_star,
            witness_anchor,
        }
    }

    pub fn anchor_f64(&self) -> Vec<f64> {
        self.witness_anchor.iter().map(|a| a.value.to_f64()).collect()
    }
}

fn check_nonempty(prefix: &SequencePrefix) -> Result<()> {
    if prefix.is_empty() {
        Err(Error::EmptyPrefix)
    } else {
        Ok(())
    }
}

/// Exact anchored dispersion. Uses the sorted-gap form in one dimension and
/// the candidate enumeration otherwise.
pub fn anchored_dispersion(prefix: &SequencePrefix) -> Result<DispersionResult> {
    check_nonempty(prefix)?;
    Ok(dispersion_of(prefix.coords(), prefix.dim()))
}

/// Exact anchored dispersion through the candidate enumeration in every
/// dimension, `O(q^(n+1))` in the worst case.
pub fn anchored_dispersion_enumerated(prefix: &SequencePrefix) -> Result<DispersionResult> {
    check_nonempty(prefix)?;
    let (side, anchor) = enumerate(prefix.coords(), prefix.dim());
    Ok(DispersionResult::new(prefix.len() as u64, prefix.dim(), side, anchor))
}

pub(crate) fn dispersion_of(coords: &[Frac64], dim: usize) -> DispersionResult {
    let q = (coords.len() / dim) as u64;
    let (side, anchor) = if dim == 1 {
        let (side, a) = sorted_gaps_1d(coords);
        (side, vec![a])
    } else {
        enumerate(coords, dim)
    };
    DispersionResult::new(q, dim, side, anchor)
}

fn sorted_gaps_1d(coords: &[Frac64]) -> (u128, AnchorCoord) {
    let mut v: Vec<Frac64> = coords.to_vec();
    v.sort_unstable();
    v.dedup();
    let mut best = (v[0].raw() as u128, AnchorCoord::ORIGIN);
    for w in v.windows(2) {
        let gap = (w[1].raw() - w[0].raw()) as u128;
        if gap > best.0 {
            best = (gap, AnchorCoord::above(w[0]));
        }
    }
    let last = *v.last().unwrap();
    let tail = ONE - last.raw() as u128;
    if tail > best.0 {
        best = (tail, AnchorCoord::above(last));
    }
    best
}

struct Search<'a> {
    coords: &'a [Frac64],
    dim: usize,
    cands: &'a [Vec<AnchorCoord>],
    shared: &'a AtomicU64,
    best: u128,
    best_anchor: Option<Vec<AnchorCoord>>,
    current: Vec<AnchorCoord>,
    buffers: Vec<Vec<u32>>,
}

impl Search<'_> {
    /// Anything below this has already been beaten by some subtree.
    #[inline]
    fn shared_floor(&self) -> u128 {
        (self.shared.load(AtomicOrdering::Relaxed) as u128) << 1
    }

    fn hopeless(&self, bound: u128) -> bool {
        (self.best_anchor.is_some() && bound <= self.best) || bound < self.shared_floor()
    }

    fn descend(&mut self, axis: usize, max_anchor: u128, ahead: &[u32]) {
        if axis == self.dim {
            self.leaf(max_anchor, ahead);
            return;
        }
        let mut child = std::mem::take(&mut self.buffers[axis]);
        for &c in &self.cands[axis] {
            let m = max_anchor.max(c.value.raw() as u128);
            if self.hopeless(ONE - m) {
                break;
            }
            child.clear();
            child.extend(
                ahead
                    .iter()
                    .copied()
                    .filter(|&i| c.admits(self.coords[i as usize * self.dim + axis])),
            );
            self.current[axis] = c;
            self.descend(axis + 1, m, &child);
        }
        self.buffers[axis] = child;
    }

    fn leaf(&mut self, max_anchor: u128, ahead: &[u32]) {
        let mut side = ONE - max_anchor;
        for &i in ahead {
            let p = &self.coords[i as usize * self.dim..(i as usize + 1) * self.dim];
            let reach = p
                .iter()
                .zip(&self.current)
                .map(|(x, a)| (x.raw() - a.value.raw()) as u128)
                .max()
                .unwrap();
            if reach < side {
                side = reach;
                if self.hopeless(side) {
                    return;
                }
            }
        }
        if self.best_anchor.is_none() || side > self.best {
            self.best = side;
            self.best_anchor = Some(self.current.clone());
            self.shared
                .fetch_max((side >> 1) as u64, AtomicOrdering::Relaxed);
        }
    }
}

fn enumerate(coords: &[Frac64], dim: usize) -> (u128, Vec<AnchorCoord>) {
    let q = coords.len() / dim;
    let cands: Vec<Vec<AnchorCoord>> = (0..dim)
        .map(|j| {
            let mut v = Vec::with_capacity(q + 1);
            v.push(AnchorCoord::ORIGIN);
            v.extend((0..q).map(|i| AnchorCoord::above(coords[i * dim + j])));
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let all: Vec<u32> = (0..q as u32).collect();
    let shared = AtomicU64::new(0);

    // Each first-axis candidate is an independent subtree; the reduction
    // keeps the largest side and, among equals, the earliest subtree, which
    // is the lexicographically smallest anchor.
    let firsts: Vec<AnchorCoord> = cands[0].clone();
    let results = par::map(firsts, |first| {
        let mut own = cands.clone();
        own[0] = vec![first];
        let mut search = Search {
            coords,
            dim,
            cands: &own,
            shared: &shared,
            best: 0,
            best_anchor: None,
            current: vec![AnchorCoord::ORIGIN; dim],
            buffers: vec![Vec::with_capacity(q); dim],
        };
        search.descend(0, 0, &all);
        search.best_anchor.map(|a| (search.best, a))
    });
    let mut best: Option<(u128, Vec<AnchorCoord>)> = None;
    for (side, anchor) in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|(b, _)| side > *b) {
            best = Some((side, anchor));
        }
    }
    best.expect("the origin anchor always yields a box")
}

/// Largest circle gap of the orbit `{j α}`, `0 <= j <= last`, found with the
/// three-distance structure: the successor of `jα` is `(j + k_u)α` when
/// `j + k_u <= last`, else `(j - k_v)α` when `j >= k_v`, else
/// `(j + k_u - k_v)α`, where `k_u` and `k_v` index the smallest and largest
/// non-zero orbit points. `O(last)` time and constant memory.
///
/// The gap starting at `j = 0` is reported with the closed origin anchor.
pub(crate) fn orbit_max_gap(alpha: Frac64, last: u64) -> (u128, AnchorCoord) {
    if last == 0 {
        return (ONE, AnchorCoord::ORIGIN);
    }
    let a = alpha.raw();
    let (mut u, mut ku, mut v, mut kv) = (u64::MAX, 0u64, 0u64, 0u64);
    let mut x = 0u64;
    for k in 1..=last {
        x = x.wrapping_add(a);
        if x < u {
            u = x;
            ku = k;
        }
        if x > v {
            v = x;
            kv = k;
        }
    }
    if u == 0 {
        // ku is the period and the orbit is the subgroup of order ku
        return (ONE / ku as u128, AnchorCoord::above(Frac64::ZERO));
    }
    let small = u as u128;
    let large = ONE - v as u128;
    let mut best = (0u128, AnchorCoord::ORIGIN);
    let mut x = 0u64;
    for j in 0..=last {
        let gap = if j + ku <= last {
            small
        } else if j >= kv {
            large
        } else {
            small + large
        };
        let anchor = if j == 0 {
            AnchorCoord::ORIGIN
        } else {
            AnchorCoord::above(Frac64::from_raw(x))
        };
        if gap > best.0 || (gap == best.0 && anchor < best.1) {
            best = (gap, anchor);
        }
        x = x.wrapping_add(a);
    }
    best
}

/// Dispersion of the one-dimensional Kronecker prefix `{kα}`, `k <= q`,
/// without materializing it.
pub fn kronecker_dispersion_1d(alpha: Frac64, q: u64) -> Result<DispersionResult> {
    if q == 0 {
        return Err(Error::EmptyPrefix);
    }
    let (side, anchor) = orbit_max_gap(alpha, q);
    Ok(DispersionResult::new(q, 1, side, vec![anchor]))
}

/// Lower bound on `s*` from closed anchors on the grid `resolution · Z^n`:
/// at each grid anchor the largest empty side is read off the points
/// directly. Validation oracle for [`anchored_dispersion`].
pub fn grid_oracle_dispersion(prefix: &SequencePrefix, resolution: f64) -> Result<f64> {
    if !(resolution > 0.0 && resolution <= 0.1) {
        return Err(invalid(format!("grid resolution must lie in (0, 0.1], got {resolution}")));
    }
    check_nonempty(prefix)?;
    let steps = (1.0 / resolution).floor() as u64;
    let grid: Vec<u128> = (0..=steps)
        .map(|i| (i as f64 * resolution * 18_446_744_073_709_551_616.0) as u128)
        .filter(|&g| g < ONE)
        .collect();
    // A coarse pass over every tenth anchor seeds the bound; its anchors are
    // fine anchors too, so the result is unchanged.
    let coarse: Vec<u128> = grid.iter().copied().step_by(10).collect();
    let seed = grid_pass(prefix, &coarse, 0);
    let best = grid_pass(prefix, &grid, seed);
    Ok(raw_to_f64(best))
}

fn grid_pass(prefix: &SequencePrefix, grid: &[u128], seed: u128) -> u128 {
    let dim = prefix.dim();
    let coords = prefix.coords();
    let q = prefix.len();
    let shared = AtomicU64::new((seed >> 1) as u64);
    let per_first = par::map(grid.to_vec(), |g0| {
        let mut best = seed;
        if ONE - g0 <= best {
            return best;
        }
        let mut anchor = vec![0u128; dim];
        anchor[0] = g0;
        let ahead0: Vec<usize> = (0..q)
            .filter(|&i| coords[i * dim].raw() as u128 >= g0)
            .collect();
        grid_descend(coords, dim, grid, 1, g0, &ahead0, &mut anchor, &mut best, &shared);
        best
    });
    per_first.into_iter().max().unwrap_or(seed)
}

#[allow(clippy::too_many_arguments)]
fn grid_descend(
    coords: &[Frac64],
    dim: usize,
    grid: &[u128],
    axis: usize,
    max_anchor: u128,
    ahead: &[usize],
    anchor: &mut Vec<u128>,
    best: &mut u128,
    shared: &AtomicU64,
) {
    let floor = |best: u128| best.max((shared.load(AtomicOrdering::Relaxed) as u128) << 1);
    if axis + 1 == dim {
        grid_last_axis(coords, dim, grid, max_anchor, ahead, anchor, best, shared);
        return;
    }
    if axis == dim {
        let mut side = ONE - max_anchor;
        for &i in ahead {
            let reach = (0..dim)
                .map(|j| coords[i * dim + j].raw() as u128 - anchor[j])
                .max()
                .unwrap();
            side = side.min(reach);
            if side <= floor(*best) {
                return;
            }
        }
        if side > *best {
            *best = side;
            shared.fetch_max((side >> 1) as u64, AtomicOrdering::Relaxed);
        }
        return;
    }
    let mut child = Vec::with_capacity(ahead.len());
    for &g in grid {
        let m = max_anchor.max(g);
        if ONE - m <= floor(*best) {
            break;
        }
        child.clear();
        child.extend(
            ahead
                .iter()
                .copied()
                .filter(|&i| coords[i * dim + axis].raw() as u128 >= g),
        );
        anchor[axis] = g;
        grid_descend(coords, dim, grid, axis + 1, m, &child, anchor, best, shared);
    }
}

/// Last axis of the grid search. A point whose reach on the fixed axes is
/// at most the current best caps the side at `best` for every last-axis
/// anchor in `[y - best, y]`, so those anchors are skipped by index.
#[allow(clippy::too_many_arguments)]
fn grid_last_axis(
    coords: &[Frac64],
    dim: usize,
    grid: &[u128],
    max_anchor: u128,
    ahead: &[usize],
    anchor: &mut [u128],
    best: &mut u128,
    shared: &AtomicU64,
) {
    let floor = |best: u128| best.max((shared.load(AtomicOrdering::Relaxed) as u128) << 1);
    let axis = dim - 1;
    let reach: Vec<(u128, u128)> = ahead
        .iter()
        .map(|&i| {
            let r = (0..axis)
                .map(|j| coords[i * dim + j].raw() as u128 - anchor[j])
                .max()
                .unwrap_or(0);
            (r, coords[i * dim + axis].raw() as u128)
        })
        .collect();
    let b = floor(*best);
    let mut blocked: Vec<(usize, usize)> = reach
        .iter()
        .filter(|&&(r, _)| r <= b)
        .map(|&(_, y)| (grid.partition_point(|&g| g + b < y), grid.partition_point(|&g| g <= y)))
        .filter(|&(lo, hi)| lo < hi)
        .collect();
    blocked.sort_unstable();
    let mut next = 0;
    let mut k = 0;
    loop {
        while next < blocked.len() && blocked[next].0 <= k {
            k = k.max(blocked[next].1);
            next += 1;
        }
        if k >= grid.len() {
            return;
        }
        let g = grid[k];
        let mut side = ONE - max_anchor.max(g);
        if side <= floor(*best) {
            return;
        }
        for &(r, y) in &reach {
            if y >= g {
                side = side.min(r.max(y - g));
            }
        }
        if side > *best {
            *best = side;
            shared.fetch_max((side >> 1) as u64, AtomicOrdering::Relaxed);
        }
        k += 1;
    }
}

/// `max_η min_k ||ξ_k - η||_∞` on the torus.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoveringRadius {
    pub lower: f64,
    pub upper: f64,
    /// Exact (`lower == upper`) in one dimension.
    pub exact: bool,
    /// Twice the radius in raw units when exact.
    #[serde(skip)]
    pub twice_raw: Option<u128>,
}

impl CoveringRadius {
    fn exact_from_gap(gap: u128) -> Self {
        let r = raw_to_f64(gap) / 2.0;
        CoveringRadius {
            lower: r,
            upper: r,
            exact: true,
            twice_raw: Some(gap),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoveringOptions {
    /// Grid spacing bound for `n >= 2`.
    pub resolution: f64,
}

impl Default for CoveringOptions {
    fn default() -> Self {
        CoveringOptions { resolution: 0.01 }
    }
}

pub fn covering_radius_torus(prefix: &SequencePrefix, opts: &CoveringOptions) -> Result<CoveringRadius> {
    check_nonempty(prefix)?;
    covering_radius_of(prefix.coords(), prefix.dim(), opts)
}

pub(crate) fn covering_radius_of(
    coords: &[Frac64],
    dim: usize,
    opts: &CoveringOptions,
) -> Result<CoveringRadius> {
    if dim == 1 {
        let mut v = coords.to_vec();
        v.sort_unstable();
        let wrap = ONE - v[v.len() - 1].raw() as u128 + v[0].raw() as u128;
        let inner = v
            .windows(2)
            .map(|w| (w[1].raw() - w[0].raw()) as u128)
            .max()
            .unwrap_or(0);
        return Ok(CoveringRadius::exact_from_gap(inner.max(wrap)));
    }
    if !(opts.resolution > 0.0 && opts.resolution <= 0.5) {
        return Err(invalid(format!(
            "covering grid resolution must lie in (0, 0.5], got {}",
            opts.resolution
        )));
    }
    let m = (1.0 / opts.resolution).ceil() as u64;
    let grid: Vec<Frac64> = (0..m)
        .map(|i| Frac64::from_raw(((i as u128) * ONE / m as u128) as u64))
        .collect();
    let q = coords.len() / dim;
    let shared = AtomicU64::new(0);
    let firsts = grid.clone();
    let per_first = par::map(firsts, |g0| {
        let mut eta = vec![g0; dim];
        let mut best = 0u64;
        covering_descend(coords, dim, q, &grid, 1, &mut eta, &mut best, &shared);
        best
    });
    let lower = raw_to_f64(per_first.into_iter().max().unwrap_or(0) as u128);
    Ok(CoveringRadius {
        lower,
        upper: (lower + 1.0 / m as f64).min(0.5),
        exact: false,
        twice_raw: None,
    })
}

#[allow(clippy::too_many_arguments)]
fn covering_descend(
    coords: &[Frac64],
    dim: usize,
    q: usize,
    grid: &[Frac64],
    axis: usize,
    eta: &mut Vec<Frac64>,
    best: &mut u64,
    shared: &AtomicU64,
) {
    if axis == dim {
        let floor = (*best).max(shared.load(AtomicOrdering::Relaxed));
        let mut nearest = u64::MAX;
        for i in 0..q {
            let d = sup_torus_dist_raw(&coords[i * dim..(i + 1) * dim], eta);
            if d < nearest {
                nearest = d;
                if nearest <= floor {
                    return;
                }
            }
        }
        if nearest > *best {
            *best = nearest;
            shared.fetch_max(nearest, AtomicOrdering::Relaxed);
        }
        return;
    }
    for &g in grid {
        eta[axis] = g;
        covering_descend(coords, dim, q, grid, axis + 1, eta, best, shared);
    }
}

/// Exact covering radius of the one-dimensional Kronecker prefix.
pub fn kronecker_covering_radius_1d(alpha: Frac64, q: u64) -> Result<CoveringRadius> {
    if q == 0 {
        return Err(Error::EmptyPrefix);
    }
    // {kα : 1 <= k <= q} is the orbit {jα : 0 <= j < q} rotated by α
    let (gap, _) = orbit_max_gap(alpha, q - 1);
    Ok(CoveringRadius::exact_from_gap(gap))
}

/// Dispersion and covering radius at one scale, as serialized per `q`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispersionRecord {
    pub q: u64,
    pub s_star: f64,
    #[serde(rename = "C_of_q")]
    pub c_of_q: f64,
    pub rho_lower: f64,
    pub rho_upper: f64,
    pub witness_anchor: Vec<f64>,
}

impl DispersionRecord {
    pub fn new(d: &DispersionResult, rho: &CoveringRadius) -> Self {
        DispersionRecord {
            q: d.q,
            s_star: d.s_star,
            c_of_q: d.c_of_q,
            rho_lower: rho.lower,
            rho_upper: rho.upper,
            witness_anchor: d.anchor_f64(),
        }
    }
}

/// A scale `q` at which every contained cube of side `C / q^(1/n)` holds
/// one of ξ_1..ξ_q.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessCertificate {
    pub q: u64,
    #[serde(rename = "C")]
    pub c: f64,
    pub s_star: f64,
    #[serde(rename = "C_of_q")]
    pub c_of_q: f64,
    /// Upper end of the covering radius interval.
    pub rho: f64,
    pub rho_lower: f64,
    pub rho_upper: f64,
    /// `C / 2`, the constant of the toroidal approximation form.
    pub delta: f64,
    #[serde(skip)]
    pub s_star_raw: u128,
    #[serde(skip)]
    pub rho_twice_raw: Option<u128>,
}

/// Points for witness scans.
#[derive(Clone, Copy, Debug)]
pub enum WitnessSource<'a> {
    Kronecker(&'a AlphaVector),
    Prefix(&'a SequencePrefix),
}

impl WitnessSource<'_> {
    pub fn dim(&self) -> usize {
        match self {
            WitnessSource::Kronecker(a) => a.dim(),
            WitnessSource::Prefix(p) => p.dim(),
        }
    }
}

/// Decides the witness condition scale by scale for ascending `q`.
///
/// The empty box found at the last exact evaluation is kept and shrunk as
/// points arrive; while it alone is too large for `C / q^(1/n)` the scale
/// fails without a full dispersion computation.
pub struct WitnessScanner<'a> {
    source: WitnessSource<'a>,
    c_target: f64,
    covering: CoveringOptions,
    materialized: Option<SequencePrefix>,
    retained: Option<(Vec<AnchorCoord>, u128, u64)>,
    last_q: u64,
}

impl<'a> WitnessScanner<'a> {
    pub fn new(source: WitnessSource<'a>, c_target: f64, covering: CoveringOptions) -> Result<Self> {
        if !(c_target > 0.0 && c_target.is_finite()) {
            return Err(invalid(format!("C must be positive, got {c_target}")));
        }
        Ok(WitnessScanner {
            source,
            c_target,
            covering,
            materialized: None,
            retained: None,
            last_q: 0,
        })
    }

    pub fn c_target(&self) -> f64 {
        self.c_target
    }

    fn dim(&self) -> usize {
        self.source.dim()
    }

    /// Coordinates of ξ_1..ξ_q, generating Kronecker points when needed.
    fn coords(&mut self, q: u64) -> Result<&[Frac64]> {
        let dim = self.dim();
        match self.source {
            WitnessSource::Prefix(p) => {
                p.check_available(q)?;
                Ok(&p.coords()[..q as usize * dim])
            }
            WitnessSource::Kronecker(alpha) => {
                let have = self.materialized.as_ref().map_or(0, |p| p.len() as u64);
                if have < q {
                    let target = q.max(have * 2);
                    self.materialized = Some(kronecker_prefix(alpha, target)?);
                }
                Ok(&self.materialized.as_ref().unwrap().coords()[..q as usize * dim])
            }
        }
    }

    fn kronecker_1d(&self) -> Option<Frac64> {
        match self.source {
            WitnessSource::Kronecker(a) if a.dim() == 1 => Some(a.values()[0]),
            _ => None,
        }
    }

    /// Exact dispersion and covering radius at `q`.
    pub fn evaluate(&mut self, q: u64) -> Result<(DispersionResult, CoveringRadius)> {
        if q == 0 {
            return Err(Error::EmptyPrefix);
        }
        let dim = self.dim();
        let covering = self.covering;
        if let Some(a) = self.kronecker_1d() {
            return Ok((kronecker_dispersion_1d(a, q)?, kronecker_covering_radius_1d(a, q)?));
        }
        let coords = self.coords(q)?;
        let d = dispersion_of(coords, dim);
        let rho = covering_radius_of(coords, dim, &covering)?;
        Ok((d, rho))
    }

    /// Shrinks the retained box with the points that arrived since it was
    /// last updated and returns its side.
    fn retained_side(&mut self, q: u64) -> Result<Option<u128>> {
        let Some((anchor, side, upto)) = self.retained.clone() else {
            return Ok(None);
        };
        let dim = self.dim();
        let mut side = side;
        let mut point = vec![Frac64::ZERO; dim];
        for k in upto + 1..=q {
            match self.source {
                WitnessSource::Kronecker(a) => a.fill_point(k, &mut point),
                WitnessSource::Prefix(p) => {
                    p.check_available(k)?;
                    p.fill_point(k, &mut point)
                }
            }
            if point.iter().zip(&anchor).all(|(x, a)| a.admits(*x)) {
                let reach = point
                    .iter()
                    .zip(&anchor)
                    .map(|(x, a)| (x.raw() - a.value.raw()) as u128)
                    .max()
                    .unwrap();
                side = side.min(reach);
            }
        }
        self.retained = Some((anchor, side, q));
        Ok(Some(side))
    }

    /// Certificate at `q`, or `None` when `q^(1/n) · s*(q) >= C`.
    pub fn certify(&mut self, q: u64) -> Result<Option<WitnessCertificate>> {
        if q < self.last_q {
            return Err(invalid("witness candidates must be ascending"));
        }
        if q == 0 {
            return Err(invalid("witness candidates must be positive"));
        }
        self.last_q = q;
        let dim = self.dim();
        if let Some(side) = self.retained_side(q)? {
            if cmp_scaled_power(q, side, dim, self.c_target) != Ordering::Less {
                return Ok(None);
            }
        }
        let (d, rho) = self.evaluate(q)?;
        self.retained = Some((d.witness_anchor.clone(), d.s_star_raw, q));
        if cmp_scaled_power(q, d.s_star_raw, dim, self.c_target) != Ordering::Less {
            return Ok(None);
        }
        Ok(Some(WitnessCertificate {
            q,
            c: self.c_target,
            s_star: d.s_star,
            c_of_q: d.c_of_q,
            rho: rho.upper,
            rho_lower: rho.lower,
            rho_upper: rho.upper,
            delta: self.c_target / 2.0,
            s_star_raw: d.s_star_raw,
            rho_twice_raw: rho.twice_raw,
        }))
    }
}

/// Certificates for every candidate `q` with `q^(1/n) · s*(q) < C_target`.
pub fn witness_search(
    source: WitnessSource<'_>,
    q_candidates: &[u64],
    c_target: f64,
    covering: &CoveringOptions,
) -> Result<Vec<WitnessCertificate>> {
    if q_candidates.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("witness candidates must be ascending"));
    }
    let mut scanner = WitnessScanner::new(source, c_target, *covering)?;
    let mut out = Vec::new();
    for &q in q_candidates {
        if let Some(cert) = scanner.certify(q)? {
            out.push(cert);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::AlphaVector;
    use crate::torus::{AnchoredBox, UnitPoint};
    use proptest::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn prefix_1d(values: &[f64]) -> SequencePrefix {
        let pts: Vec<UnitPoint> = values.iter().map(|&v| UnitPoint::from_f64(&[v]).unwrap()).collect();
        SequencePrefix::from_points(&pts, "test").unwrap()
    }

    fn random_prefix(rng: &mut ChaCha8Rng, dim: usize, q: usize) -> SequencePrefix {
        let coords = (0..dim * q).map(|_| Frac64::from_raw(rng.next_u64())).collect();
        SequencePrefix::new(dim, coords, "random").unwrap()
    }

    /// max(min p, 1 - max p, largest gap) computed independently.
    fn closed_form_1d(values: &[Frac64]) -> u128 {
        let mut v: Vec<u128> = values.iter().map(|x| x.raw() as u128).collect();
        v.sort();
        let mut best = v[0].max(ONE - v[v.len() - 1]);
        for w in v.windows(2) {
            best = best.max(w[1] - w[0]);
        }
        best
    }

    #[test]
    fn dispersion_examples() {
        let d = anchored_dispersion(&prefix_1d(&[0.5])).unwrap();
        assert_eq!(d.s_star, 0.5);
        assert_eq!(d.witness_anchor, vec![AnchorCoord::ORIGIN]);

        let d = anchored_dispersion(&prefix_1d(&[0.25, 0.5, 0.75])).unwrap();
        assert_eq!(d.s_star, 0.25);

        let p = SequencePrefix::from_points(&[UnitPoint::from_f64(&[0.5, 0.5]).unwrap()], "t").unwrap();
        let d = anchored_dispersion(&p).unwrap();
        assert_eq!(d.s_star, 0.5);
        assert_eq!(d.anchor_f64(), vec![0.0, 0.0]);
        assert_eq!(d.witness_anchor, vec![AnchorCoord::ORIGIN; 2]);
    }

    #[test]
    fn enumeration_matches_examples() {
        for vals in [&[0.5][..], &[0.25, 0.5, 0.75], &[0.0], &[0.9, 0.1]] {
            let p = prefix_1d(vals);
            let e = anchored_dispersion_enumerated(&p).unwrap();
            let s = anchored_dispersion(&p).unwrap();
            assert_eq!(e, s, "{vals:?}");
        }
    }

    #[test]
    fn point_at_origin_opens_the_anchor() {
        let d = anchored_dispersion_enumerated(&prefix_1d(&[0.0, 0.75])).unwrap();
        assert_eq!(d.s_star, 0.75);
        assert_eq!(d.witness_anchor, vec![AnchorCoord::above(Frac64::ZERO)]);
    }

    #[test]
    fn grid_oracle_examples() {
        let g = grid_oracle_dispersion(&prefix_1d(&[0.5]), 0.01).unwrap();
        assert!((0.49..=0.5).contains(&g));
        let p = SequencePrefix::from_points(&[UnitPoint::from_f64(&[0.5, 0.5]).unwrap()], "t").unwrap();
        let g = grid_oracle_dispersion(&p, 0.01).unwrap();
        assert!((0.49..=0.5).contains(&g));
        assert!(grid_oracle_dispersion(&p, 0.2).is_err());
        assert!(grid_oracle_dispersion(&p, 0.0).is_err());
    }

    #[test]
    fn grid_oracle_sandwich_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let p = random_prefix(&mut rng, 2, 20);
            let exact = anchored_dispersion(&p).unwrap().s_star;
            let grid = grid_oracle_dispersion(&p, 0.01).unwrap();
            assert!(grid <= exact && exact <= grid + 0.02, "{grid} {exact}");
        }
    }

    #[test]
    fn covering_radius_examples() {
        let r = covering_radius_torus(&prefix_1d(&[0.0, 0.5]), &CoveringOptions::default()).unwrap();
        assert_eq!((r.lower, r.upper), (0.25, 0.25));

        let golden = AlphaVector::parse("golden").unwrap();
        let p = kronecker_prefix(&golden, 5).unwrap();
        let r = covering_radius_torus(&p, &CoveringOptions::default()).unwrap();
        // sorted {kφ}: .0902 .2361 .4721 .6180 .8541, widest circle gap .2361
        assert!((r.lower - 0.118034).abs() < 1e-6, "{}", r.lower);
        assert!(r.exact);

        let r = covering_radius_torus(&prefix_1d(&[0.3]), &CoveringOptions::default()).unwrap();
        assert_eq!(r.upper, 0.5);
    }

    #[test]
    fn covering_radius_2d_interval() {
        let p = SequencePrefix::from_points(&[UnitPoint::from_f64(&[0.0, 0.0]).unwrap()], "t").unwrap();
        let r = covering_radius_torus(&p, &CoveringOptions { resolution: 0.05 }).unwrap();
        assert_eq!(r.lower, 0.5);
        assert_eq!(r.upper, 0.5);
        assert!(!r.exact);
    }

    #[test]
    fn kronecker_routes_agree_with_sorting() {
        let golden = AlphaVector::parse("golden").unwrap();
        let a = golden.values()[0];
        let p = kronecker_prefix(&golden, 3000).unwrap();
        for q in [1u64, 2, 3, 5, 8, 13, 100, 987, 2584, 3000] {
            let sub = p.truncated(q as usize).unwrap();
            assert_eq!(kronecker_dispersion_1d(a, q).unwrap(), anchored_dispersion(&sub).unwrap(), "q = {q}");
            assert_eq!(
                kronecker_covering_radius_1d(a, q).unwrap(),
                covering_radius_torus(&sub, &CoveringOptions::default()).unwrap()
            );
        }
    }

    #[test]
    fn rational_orbits() {
        // α = 1/4: orbit {1/4, 1/2, 3/4, 0}
        let a = Frac64::from_raw(1 << 62);
        let d = kronecker_dispersion_1d(a, 10).unwrap();
        assert_eq!(d.s_star, 0.25);
        assert_eq!(d.witness_anchor, vec![AnchorCoord::above(Frac64::ZERO)]);
        let p = kronecker_prefix(&AlphaVector::from_fracs(&[a]).unwrap(), 10).unwrap();
        assert_eq!(d, anchored_dispersion(&p).unwrap());
        assert_eq!(kronecker_covering_radius_1d(a, 10).unwrap().lower, 0.125);
    }

    #[test]
    fn witness_examples() {
        let golden = AlphaVector::parse("golden").unwrap();
        let fib: Vec<u64> = {
            let mut f = vec![1u64, 2];
            while *f.last().unwrap() < 1000 {
                let n = f[f.len() - 1] + f[f.len() - 2];
                f.push(n);
            }
            f.pop();
            f
        };
        let certs = witness_search(WitnessSource::Kronecker(&golden), &fib, 3.0, &CoveringOptions::default()).unwrap();
        assert_eq!(certs.iter().map(|c| c.q).collect::<Vec<_>>(), fib);
        for c in &certs {
            assert!(c.c_of_q < 3.0);
            assert_eq!(c.delta, 1.5);
        }

        // q = 1 with C = 10 always certifies
        let c = witness_search(WitnessSource::Kronecker(&golden), &[1], 10.0, &CoveringOptions::default()).unwrap();
        assert_eq!(c.len(), 1);

        assert!(witness_search(WitnessSource::Kronecker(&golden), &[5, 3], 3.0, &CoveringOptions::default()).is_err());
        assert!(witness_search(WitnessSource::Kronecker(&golden), &[5], 0.0, &CoveringOptions::default()).is_err());
    }

    #[test]
    fn degenerate_plane_never_certifies() {
        let alpha = AlphaVector::parse("golden,0").unwrap();
        let qs: Vec<u64> = (10..=2000).collect();
        let certs = witness_search(WitnessSource::Kronecker(&alpha), &qs, 3.0, &CoveringOptions::default()).unwrap();
        assert!(certs.is_empty());
        let mut scanner = WitnessScanner::new(WitnessSource::Kronecker(&alpha), 3.0, CoveringOptions::default()).unwrap();
        let (d, _) = scanner.evaluate(200).unwrap();
        assert_eq!(d.s_star_raw, ONE);
    }

    #[test]
    fn certificates_are_sound_on_samples() {
        let golden = AlphaVector::parse("golden").unwrap();
        let prefix = kronecker_prefix(&golden, 400).unwrap();
        let certs = witness_search(WitnessSource::Prefix(&prefix), &[55, 89, 144, 233, 377], 3.0, &CoveringOptions::default()).unwrap();
        assert_eq!(certs.len(), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for cert in &certs {
            let side = crate::exact::floor_scaled_root(cert.q, 1, cert.c);
            let pts = prefix.truncated(cert.q as usize).unwrap().to_points();
            for _ in 0..10_000 {
                let room = (ONE - side) as u64;
                let eta = Frac64::from_raw(rng.next_u64() % (room + 1));
                let b = AnchoredBox::new(UnitPoint::new(vec![eta]).unwrap(), side, true).unwrap();
                assert!(pts.iter().any(|p| b.contains(p).unwrap()));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn enumeration_reproduces_closed_form(raw in proptest::collection::vec(any::<u64>(), 1..60)) {
            let coords: Vec<Frac64> = raw.into_iter().map(Frac64::from_raw).collect();
            let p = SequencePrefix::new(1, coords.clone(), "p").unwrap();
            let e = anchored_dispersion_enumerated(&p).unwrap();
            prop_assert_eq!(e.s_star_raw, closed_form_1d(&coords));
            prop_assert_eq!(&e, &anchored_dispersion(&p).unwrap());
        }

        #[test]
        fn three_gap_route_matches_sorting(a in any::<u64>(), q in 1u64..1500) {
            let alpha = AlphaVector::from_fracs(&[Frac64::from_raw(a)]).unwrap();
            let p = kronecker_prefix(&alpha, q).unwrap();
            prop_assert_eq!(kronecker_dispersion_1d(Frac64::from_raw(a), q).unwrap(), anchored_dispersion(&p).unwrap());
            prop_assert_eq!(
                kronecker_covering_radius_1d(Frac64::from_raw(a), q).unwrap(),
                covering_radius_torus(&p, &CoveringOptions::default()).unwrap()
            );
        }

        #[test]
        fn dyadic_orbits_match_sorting(num in any::<u64>(), m in 1u32..12, q in 1u64..3000) {
            let a = Frac64::from_raw((num >> (64 - m)) << (64 - m));
            let alpha = AlphaVector::from_fracs(&[a]).unwrap();
            let p = kronecker_prefix(&alpha, q).unwrap();
            prop_assert_eq!(kronecker_dispersion_1d(a, q).unwrap(), anchored_dispersion(&p).unwrap());
        }

        #[test]
        fn appending_points_never_increases(seed in any::<u64>(), dim in 1usize..3, q in 2usize..25) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_prefix(&mut rng, dim, q);
            let shorter = p.truncated(q - 1).unwrap();
            let opts = CoveringOptions { resolution: 0.05 };
            prop_assert!(anchored_dispersion(&p).unwrap().s_star_raw <= anchored_dispersion(&shorter).unwrap().s_star_raw);
            let (r1, r0) = (covering_radius_torus(&p, &opts).unwrap(), covering_radius_torus(&shorter, &opts).unwrap());
            prop_assert!(r1.lower <= r0.lower);
        }

        #[test]
        fn witness_box_is_empty_and_maximal(seed in any::<u64>(), dim in 1usize..4, q in 1usize..15) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_prefix(&mut rng, dim, q);
            let d = anchored_dispersion_enumerated(&p).unwrap();
            // Shrinking the limit box by one raw unit on open axes gives an honest empty box.
            let anchor: Vec<Frac64> = d.witness_anchor.iter()
                .map(|a| Frac64::from_raw(a.value.raw() + a.open as u64)).collect();
            let side = d.s_star_raw - 1;
            let b = AnchoredBox::new(UnitPoint::new(anchor).unwrap(), side, true).unwrap();
            for pt in p.to_points() {
                prop_assert!(!b.contains(&pt).unwrap());
            }
        }
    }
}
