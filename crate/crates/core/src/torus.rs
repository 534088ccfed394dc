//! Fixed-point arithmetic on the unit torus `[0,1)^n`.
//!
//! A coordinate is a [`Frac64`]: the dyadic rational `raw / 2^64`. Adding
//! and multiplying by integers wraps modulo 1, so Kronecker orbits are exact
//! and bit-reproducible. Lengths that may reach 1 (box sides, gaps) are kept
//! as `u128` counts of 2^-64.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::decimal::Decimal;
use crate::error::{invalid, Error, Result};

/// `1.0` in raw units.
pub const ONE: u128 = 1 << 64;

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

/// A point of the circle `R/Z`, stored as `raw / 2^64`.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Frac64(u64);

impl Frac64 {
    pub const ZERO: Frac64 = Frac64(0);
    pub const HALF: Frac64 = Frac64(1 << 63);

    #[inline]
    pub const fn from_raw(raw: u64) -> Self {
        Frac64(raw)
    }

    #[inline]
    pub const fn raw(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.0 as f64 / TWO_POW_64
    }

    /// Fractional part of a decimal literal, rounded to nearest.
    pub fn parse_decimal(text: &str) -> Result<Self> {
        Ok(Frac64(Decimal::parse(text)?.frac_raw()))
    }

    /// Addition modulo 1.
    #[inline]
    pub fn wrapping_add(self, other: Frac64) -> Frac64 {
        Frac64(self.0.wrapping_add(other.0))
    }

    /// Multiplication by an integer modulo 1.
    #[inline]
    pub fn mul_int(self, k: u64) -> Frac64 {
        Frac64(self.0.wrapping_mul(k))
    }
}

impl fmt::Debug for Frac64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Frac64({})", self.to_f64())
    }
}

impl fmt::Display for Frac64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// `x - floor(x)` quantized to the nearest multiple of 2^-64.
pub fn frac(x: f64) -> Result<Frac64> {
    if !x.is_finite() {
        return Err(invalid(format!("frac of non-finite value {x}")));
    }
    let f = x - x.floor();
    // f is exact in f64; scaling by 2^64 is exact too, only the cast rounds.
    let scaled = (f * TWO_POW_64).round();
    if scaled >= TWO_POW_64 {
        Ok(Frac64::ZERO)
    } else {
        Ok(Frac64(scaled as u64))
    }
}

/// Distance to the nearest integer of `x - y`, in raw units (at most 2^63).
#[inline]
pub fn torus_dist_raw(x: Frac64, y: Frac64) -> u64 {
    let d = x.0.wrapping_sub(y.0);
    d.min(d.wrapping_neg())
}

/// `||x - y||`, the circle distance, in `[0, 1/2]`.
#[inline]
pub fn torus_dist(x: Frac64, y: Frac64) -> f64 {
    torus_dist_raw(x, y) as f64 / TWO_POW_64
}

/// Sup-norm circle distance between two coordinate slices of equal length.
#[inline]
pub fn sup_torus_dist_raw(a: &[Frac64], b: &[Frac64]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| torus_dist_raw(x, y))
        .max()
        .unwrap_or(0)
}

/// Raw length (count of 2^-64) as a real.
#[inline]
pub fn raw_to_f64(raw: u128) -> f64 {
    raw as f64 / TWO_POW_64
}

/// Largest raw length not exceeding the real `x >= 0`, capped at [`ONE`].
pub fn f64_to_raw_floor(x: f64) -> u128 {
    if x <= 0.0 || x.is_nan() {
        0
    } else if x >= 1.0 {
        ONE
    } else {
        (x * TWO_POW_64).floor() as u128
    }
}

/// An exact product of `dim` raw lengths, i.e. a volume in units of
/// `2^(-64 dim)`, converted to a real.
pub fn volume_to_f64(volume: &BigUint, dim: usize) -> f64 {
    let bits = volume.bits();
    if bits == 0 {
        return 0.0;
    }
    let shift = bits.saturating_sub(64);
    let top = (volume >> shift).to_u64().unwrap_or(u64::MAX) as f64;
    top * 2f64.powi(shift as i32 - 64 * dim as i32)
}

/// A point of `[0,1)^n`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitPoint {
    coords: Vec<Frac64>,
}

impl UnitPoint {
    pub fn new(coords: Vec<Frac64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("a point needs at least one coordinate"));
        }
        Ok(UnitPoint { coords })
    }

    pub fn from_f64(coords: &[f64]) -> Result<Self> {
        let coords = coords.iter().map(|&x| frac(x)).collect::<Result<Vec<_>>>()?;
        Self::new(coords)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Frac64] {
        &self.coords
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c.to_f64()).collect()
    }
}

impl fmt::Debug for UnitPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_f64()).finish()
    }
}

/// A half-open cube `[anchor, anchor + side)` with a common side length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnchoredBox {
    anchor: UnitPoint,
    side: u128,
    contained: bool,
}

impl AnchoredBox {
    /// `side` is in raw units. With `contained` set the box must lie inside
    /// the unit cube, i.e. `anchor_j + side <= 1` on every axis.
    pub fn new(anchor: UnitPoint, side: u128, contained: bool) -> Result<Self> {
        if side == 0 {
            return Err(invalid("box side must be positive"));
        }
        if contained {
            if let Some(j) = anchor
                .coords()
                .iter()
                .position(|c| c.raw() as u128 + side > ONE)
            {
                return Err(invalid(format!(
                    "box leaves the unit cube on axis {j}: anchor {} + side {}",
                    anchor.coords()[j],
                    raw_to_f64(side)
                )));
            }
        }
        Ok(AnchoredBox {
            anchor,
            side,
            contained,
        })
    }

    /// Convenience constructor from reals; the side is rounded down to the
    /// fixed-point grid.
    pub fn from_f64(anchor: &[f64], side: f64, contained: bool) -> Result<Self> {
        if !(side > 0.0 && side.is_finite()) {
            return Err(invalid(format!("box side must be positive, got {side}")));
        }
        Self::new(UnitPoint::from_f64(anchor)?, f64_to_raw_floor(side), contained)
    }

    pub fn anchor(&self) -> &UnitPoint {
        &self.anchor
    }

    pub fn side(&self) -> u128 {
        self.side
    }

    pub fn side_f64(&self) -> f64 {
        raw_to_f64(self.side)
    }

    pub fn is_contained(&self) -> bool {
        self.contained
    }

    pub fn dim(&self) -> usize {
        self.anchor.dim()
    }

    /// Half-open membership, exact in fixed point.
    pub fn contains(&self, p: &UnitPoint) -> Result<bool> {
        check_dim(self.dim(), p.dim())?;
        Ok(self.contains_coords(p.coords()))
    }

    #[inline]
    pub(crate) fn contains_coords(&self, p: &[Frac64]) -> bool {
        self.anchor.coords().iter().zip(p).all(|(a, x)| {
            let lo = a.raw() as u128;
            let x = x.raw() as u128;
            lo <= x && x < lo + self.side
        })
    }

    /// Exact measure of `self ∩ other` in units of `2^(-64 n)`.
    pub fn intersection_volume_exact(&self, other: &AnchoredBox) -> Result<BigUint> {
        check_dim(self.dim(), other.dim())?;
        let mut vol = BigUint::from(1u32);
        for (a, b) in self.anchor.coords().iter().zip(other.anchor.coords()) {
            let overlap = interval_overlap(
                a.raw() as u128,
                self.side,
                b.raw() as u128,
                other.side,
            );
            if overlap == 0 {
                return Ok(BigUint::zero());
            }
            vol *= overlap;
        }
        Ok(vol)
    }

    /// Lebesgue measure of `self ∩ other`.
    pub fn intersection_volume(&self, other: &AnchoredBox) -> Result<f64> {
        Ok(volume_to_f64(&self.intersection_volume_exact(other)?, self.dim()))
    }

    pub fn volume(&self) -> f64 {
        raw_to_f64(self.side).powi(self.dim() as i32)
    }
}

/// Length of `[lo_a, lo_a + len_a) ∩ [lo_b, lo_b + len_b)`.
#[inline]
pub(crate) fn interval_overlap(lo_a: u128, len_a: u128, lo_b: u128, len_b: u128) -> u128 {
    let lo = lo_a.max(lo_b);
    let hi = (lo_a + len_a).min(lo_b + len_b);
    hi.saturating_sub(lo)
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::DimensionMismatch { expected, got })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(x: f64) -> Frac64 {
        frac(x).unwrap()
    }

    #[test]
    fn frac_examples() {
        assert_eq!(f(1.25), Frac64::from_raw(1 << 62));
        assert_eq!(f(-0.25), Frac64::from_raw(3 << 62));
        assert_eq!(f(0.0), Frac64::ZERO);
        assert_eq!(f(-1e-300), Frac64::ZERO);
        assert!(frac(f64::NAN).is_err());
        assert!(frac(f64::INFINITY).is_err());
    }

    #[test]
    fn torus_dist_examples() {
        assert!((torus_dist(f(0.1), f(0.9)) - 0.2).abs() < 1e-15);
        assert_eq!(torus_dist(f(0.5), f(0.0)), 0.5);
        assert_eq!(torus_dist(f(0.3), f(0.3)), 0.0);
    }

    #[test]
    fn box_contains_examples() {
        let b = AnchoredBox::from_f64(&[0.25, 0.25], 0.25, true).unwrap();
        assert!(b.contains(&UnitPoint::from_f64(&[0.25, 0.3]).unwrap()).unwrap());
        assert!(!b.contains(&UnitPoint::from_f64(&[0.5, 0.3]).unwrap()).unwrap());
        let full = AnchoredBox::new(UnitPoint::from_f64(&[0.0]).unwrap(), ONE, true).unwrap();
        for x in [0.0, 0.5, 0.999_999] {
            assert!(full.contains(&UnitPoint::from_f64(&[x]).unwrap()).unwrap());
        }
        assert!(matches!(
            b.contains(&UnitPoint::from_f64(&[0.3]).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn box_construction_guards() {
        assert!(AnchoredBox::from_f64(&[0.5], 0.0, false).is_err());
        assert!(AnchoredBox::from_f64(&[0.75], 0.5, true).is_err());
        assert!(AnchoredBox::from_f64(&[0.75], 0.5, false).is_ok());
    }

    #[test]
    fn intersection_volume_examples() {
        let a = AnchoredBox::from_f64(&[0.0], 0.3, true).unwrap();
        let b = AnchoredBox::from_f64(&[0.5], 0.3, true).unwrap();
        assert_eq!(a.intersection_volume(&b).unwrap(), 0.0);

        let c = AnchoredBox::from_f64(&[0.3, 0.6], 0.2, true).unwrap();
        assert!((c.intersection_volume(&c).unwrap() - 0.04).abs() < 1e-15);

        let d = AnchoredBox::from_f64(&[0.0, 0.0], 0.5, true).unwrap();
        let e = AnchoredBox::from_f64(&[0.25, 0.25], 0.5, true).unwrap();
        assert_eq!(d.intersection_volume(&e).unwrap(), 0.0625);

        let one_d = AnchoredBox::from_f64(&[0.1], 0.2, true).unwrap();
        assert!(matches!(
            one_d.intersection_volume(&d),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn arb_frac() -> impl Strategy<Value = Frac64> {
        any::<u64>().prop_map(Frac64::from_raw)
    }

    fn arb_box(dim: usize) -> impl Strategy<Value = AnchoredBox> {
        (proptest::collection::vec(arb_frac(), dim), 1u128..=ONE)
            .prop_map(|(a, s)| AnchoredBox::new(UnitPoint::new(a).unwrap(), s, false).unwrap())
    }

    proptest! {
        #[test]
        fn dist_is_symmetric_and_bounded(x in arb_frac(), y in arb_frac()) {
            prop_assert_eq!(torus_dist_raw(x, y), torus_dist_raw(y, x));
            prop_assert!(torus_dist_raw(x, y) <= 1 << 63);
            prop_assert_eq!(torus_dist_raw(x, x), 0);
        }

        #[test]
        fn dist_triangle_inequality(x in arb_frac(), y in arb_frac(), z in arb_frac()) {
            let lhs = torus_dist_raw(x, z) as u128;
            let rhs = torus_dist_raw(x, y) as u128 + torus_dist_raw(y, z) as u128;
            prop_assert!(lhs <= rhs);
        }

        #[test]
        fn frac_fixes_dyadics(raw in 0u64..(1 << 53)) {
            // multiples of 2^-53 are exact in f64
            let v = Frac64::from_raw(raw << 11);
            prop_assert_eq!(frac(v.to_f64()).unwrap(), v);
        }

        #[test]
        fn volume_properties(a in arb_box(2), b in arb_box(2)) {
            let ab = a.intersection_volume_exact(&b).unwrap();
            prop_assert_eq!(&ab, &b.intersection_volume_exact(&a).unwrap());
            let self_a = a.intersection_volume_exact(&a).unwrap();
            prop_assert_eq!(&self_a, &(BigUint::from(a.side()) * a.side()));
            let self_b = b.intersection_volume_exact(&b).unwrap();
            prop_assert!(ab <= self_a && ab <= self_b);
        }

        #[test]
        fn contains_monotone_in_side(
            anchor in proptest::collection::vec(arb_frac(), 3),
            p in proptest::collection::vec(arb_frac(), 3),
            s in 1u128..ONE,
            extra in 0u128..ONE,
        ) {
            let anchor = UnitPoint::new(anchor).unwrap();
            let p = UnitPoint::new(p).unwrap();
            let small = AnchoredBox::new(anchor.clone(), s, false).unwrap();
            let big = AnchoredBox::new(anchor, s + extra, false).unwrap();
            if small.contains(&p).unwrap() {
                prop_assert!(big.contains(&p).unwrap());
            }
        }
    }
}
