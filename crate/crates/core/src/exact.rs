//! Exact comparisons between fixed-point lengths and real constants.
//!
//! Every finite `f64` is a dyadic rational, so inequalities such as
//! `q · s^n < C^n` can be decided without rounding by clearing
//! denominators in big integers.

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_traits::ToPrimitive;

/// A finite non-negative `f64` as `mantissa · 2^exponent`.
pub(crate) fn dyadic(x: f64) -> (u64, i32) {
    debug_assert!(x.is_finite() && x >= 0.0);
    let bits = x.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    }
}

/// `value · 2^shift` for a possibly negative shift, as numerator and
/// denominator exponents.
fn shifted(value: BigUint, shift: i64) -> (BigUint, u64) {
    if shift >= 0 {
        (value << shift as u64, 0)
    } else {
        (value, (-shift) as u64)
    }
}

/// Compares `q · (raw / 2^64)^n` with `c^n`.
pub(crate) fn cmp_scaled_power(q: u64, raw: u128, n: usize, c: f64) -> Ordering {
    let (m, e) = dyadic(c);
    let lhs = BigUint::from(q) * BigUint::from(raw).pow(n as u32);
    // rhs = m^n 2^(e n) 2^(64 n), after multiplying both sides by 2^(64 n)
    let (rhs, lhs_shift) = shifted(BigUint::from(m).pow(n as u32), (e as i64 + 64) * n as i64);
    (lhs << lhs_shift).cmp(&rhs)
}

/// Compares `q · (raw / 2^64)^n` with `(c1 · c2)^n`, the product taken
/// exactly.
pub(crate) fn cmp_scaled_power_prod(q: u64, raw: u128, n: usize, c1: f64, c2: f64) -> Ordering {
    let (m1, e1) = dyadic(c1);
    let (m2, e2) = dyadic(c2);
    let lhs = BigUint::from(q) * BigUint::from(raw).pow(n as u32);
    let base = BigUint::from(m1) * BigUint::from(m2);
    let (rhs, lhs_shift) = shifted(base.pow(n as u32), (e1 as i64 + e2 as i64 + 64) * n as i64);
    (lhs << lhs_shift).cmp(&rhs)
}

/// Compares `k · d^n` with `q · (r · 2^64)^n` for a raw distance `d` and a
/// real radius `r`.
pub(crate) fn cmp_record_with_radius(k: u64, d: u64, n: usize, q: u64, r: f64) -> Ordering {
    let (m, e) = dyadic(r);
    let lhs = BigUint::from(k) * BigUint::from(d).pow(n as u32);
    let rhs = BigUint::from(q) * BigUint::from(m).pow(n as u32);
    let (rhs, lhs_shift) = shifted(rhs, (e as i64 + 64) * n as i64);
    (lhs << lhs_shift).cmp(&rhs)
}

/// `lhs <= (1 + eps) · base` for `eps >= 0`.
pub(crate) fn le_one_plus_eps(lhs: &BigUint, base: &BigUint, eps: f64) -> bool {
    let (m, e) = dyadic(eps);
    let extra = base * BigUint::from(m);
    if e >= 0 {
        *lhs <= base + (extra << e as u64)
    } else {
        let s = (-e) as u64;
        (lhs << s) <= (base << s) + extra
    }
}

/// Compares `k1 · d1^n` with `k2 · d2^n` (raw distances).
pub(crate) fn cmp_weighted(k1: u64, d1: u64, k2: u64, d2: u64, n: usize) -> Ordering {
    if n == 1 {
        return (k1 as u128 * d1 as u128).cmp(&(k2 as u128 * d2 as u128));
    }
    let a = (k1 as f64).ln() + n as f64 * (d1 as f64).ln();
    let b = (k2 as f64).ln() + n as f64 * (d2 as f64).ln();
    if d1 == 0 || d2 == 0 || (a - b).abs() < 1e-9 {
        let l = BigUint::from(k1) * BigUint::from(d1).pow(n as u32);
        let r = BigUint::from(k2) * BigUint::from(d2).pow(n as u32);
        l.cmp(&r)
    } else {
        a.partial_cmp(&b).unwrap()
    }
}

/// Smallest `m >= 1` with `(m · c)^n >= q`, i.e. `⌈q^(1/n) / c⌉`.
pub(crate) fn ceil_root_over(q: u64, n: usize, c: f64) -> u64 {
    let (mant, e) = dyadic(c);
    let enough = |m: u64| -> bool {
        // (m · mant · 2^e)^n >= q
        let base = BigUint::from(m) * BigUint::from(mant);
        let (num, den_shift) = shifted(base.pow(n as u32), e as i64 * n as i64);
        num >= (BigUint::from(q) << den_shift)
    };
    let estimate = ((q as f64).powf(1.0 / n as f64) / c).ceil().max(1.0);
    let mut m = if estimate.is_finite() && estimate < 1e18 {
        estimate as u64
    } else {
        u64::MAX / 2
    };
    while m > 1 && enough(m - 1) {
        m -= 1;
    }
    while !enough(m) {
        m += 1;
    }
    m
}

/// Largest raw length `g` with `q · g^n <= (c · 2^64)^n`, i.e.
/// `⌊2^64 · c / q^(1/n)⌋`.
pub(crate) fn floor_scaled_root(q: u64, n: usize, c: f64) -> u128 {
    let fits = |g: u128| cmp_scaled_power(q, g, n, c) != Ordering::Greater;
    let estimate = c / (q as f64).powf(1.0 / n as f64) * 18_446_744_073_709_551_616.0;
    let mut g = if estimate.is_finite() && estimate < 3.4e38 {
        estimate.max(0.0) as u128
    } else {
        u128::MAX / 2
    };
    // the estimate is within a few ulps, walk to the exact value
    let step = (g >> 40).max(1);
    while g > 0 && !fits(g) {
        g = g.saturating_sub(step);
    }
    while fits(g + step) {
        g += step;
    }
    let (mut lo, mut hi) = (g, g + step);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `⌊raw · x⌋` for a real `x >= 0`.
pub(crate) fn mul_floor(raw: u128, x: f64) -> u128 {
    let (m, e) = dyadic(x);
    let prod = BigUint::from(raw) * BigUint::from(m);
    let v = if e >= 0 {
        prod << e as u64
    } else {
        prod >> (-e) as u64
    };
    v.to_u128().unwrap_or(u128::MAX)
}
