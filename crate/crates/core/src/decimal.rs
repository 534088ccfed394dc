//! Exact decimal literals.
//!
//! Decimal strings are kept as an integer mantissa and a power-of-ten
//! exponent so that they can be quantized to 64-bit fixed point with a
//! single correctly rounded step, or handed to the continued fraction code
//! as an exact rational.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};

use crate::error::{invalid, Result};

const MAX_DIGITS: usize = 4096;
const MAX_EXPONENT: i64 = 4096;

/// A finite decimal number `±mantissa × 10^exponent`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decimal {
    negative: bool,
    /// Base-10 digits of the mantissa, most significant first, no leading zeros.
    digits: Vec<u8>,
    exponent: i64,
}

impl Decimal {
    /// Parses `[+-]digits[.digits][(e|E)[+-]digits]`.
    pub fn parse(text: &str) -> Result<Self> {
        let s = text.trim();
        if s.is_empty() {
            return Err(invalid("empty decimal literal"));
        }
        let (negative, body) = match s.as_bytes()[0] {
            b'-' => (true, &s[1..]),
            b'+' => (false, &s[1..]),
            _ => (false, s),
        };
        let (mantissa, exp_part) = match body.find(['e', 'E']) {
            Some(pos) => (&body[..pos], Some(&body[pos + 1..])),
            None => (body, None),
        };
        let (int_part, frac_part) = match mantissa.find('.') {
            Some(pos) => (&mantissa[..pos], &mantissa[pos + 1..]),
            None => (mantissa, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(invalid(format!("not a decimal number: {text:?}")));
        }
        let all_digits = int_part.bytes().chain(frac_part.bytes());
        let mut digits = Vec::with_capacity(int_part.len() + frac_part.len());
        for b in all_digits {
            if !b.is_ascii_digit() {
                return Err(invalid(format!("not a decimal number: {text:?}")));
            }
            digits.push(b - b'0');
        }
        if digits.len() > MAX_DIGITS {
            return Err(invalid("decimal literal too long"));
        }
        let mut exponent = -(frac_part.len() as i64);
        if let Some(e) = exp_part {
            let e: i64 = e
                .parse()
                .map_err(|_| invalid(format!("bad exponent in {text:?}")))?;
            if e.abs() > MAX_EXPONENT {
                return Err(invalid(format!("exponent out of range in {text:?}")));
            }
            exponent += e;
        }
        let first_nonzero = digits.iter().position(|&d| d != 0).unwrap_or(digits.len());
        digits.drain(..first_nonzero);
        Ok(Decimal {
            negative: negative && !digits.is_empty(),
            digits,
            exponent,
        })
    }

    pub fn is_negative(&self) -> bool {
        self.negative
    }

    /// True when `0 <= x < 1`.
    pub fn in_unit_interval(&self) -> bool {
        !self.negative && (self.digits.len() as i64 + self.exponent) <= 0
    }

    /// Fractional part `x - floor(x)` rounded to the nearest multiple of 2^-64
    /// (ties away from zero), returned as the raw numerator. A value that
    /// rounds up to 1 wraps to 0.
    pub fn frac_raw(&self) -> u64 {
        if self.exponent >= 0 || self.digits.is_empty() {
            return 0;
        }
        let frac_len = (-self.exponent) as usize;
        // Digits of 0.F, padded on the left when the mantissa is short.
        let mut f = vec![0u8; frac_len];
        let take = self.digits.len().min(frac_len);
        f[frac_len - take..].copy_from_slice(&self.digits[self.digits.len() - take..]);

        let double = |f: &mut [u8]| -> u64 {
            let mut carry = 0u8;
            for d in f.iter_mut().rev() {
                let v = *d * 2 + carry;
                *d = v % 10;
                carry = v / 10;
            }
            carry as u64
        };
        let mut raw = 0u64;
        for _ in 0..64 {
            raw = (raw << 1) | double(&mut f);
        }
        let round_bit = double(&mut f);
        let raw = raw.wrapping_add(round_bit);
        if self.negative {
            raw.wrapping_neg()
        } else {
            raw
        }
    }

    /// Exact value as `numerator / denominator` with a positive denominator.
    pub fn to_ratio(&self) -> (BigInt, BigUint) {
        let mut mantissa = BigUint::zero();
        for &d in &self.digits {
            mantissa = mantissa * 10u32 + d as u32;
        }
        let ten = BigUint::from(10u32);
        let (num, den) = if self.exponent >= 0 {
            (mantissa * ten.pow(self.exponent as u32), BigUint::one())
        } else {
            (mantissa, ten.pow((-self.exponent) as u32))
        };
        let sign = if self.negative { Sign::Minus } else { Sign::Plus };
        (BigInt::from_biguint(sign, num), den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(s: &str) -> u64 {
        Decimal::parse(s).unwrap().frac_raw()
    }

    #[test]
    fn dyadic_values_are_exact() {
        assert_eq!(raw("0.5"), 1 << 63);
        assert_eq!(raw("0.25"), 1 << 62);
        assert_eq!(raw("1.25"), 1 << 62);
        assert_eq!(raw("-0.25"), 3 << 62);
        assert_eq!(raw("0"), 0);
        assert_eq!(raw("7"), 0);
        assert_eq!(raw("25e-2"), 1 << 62);
        assert_eq!(raw(".75"), 3 << 62);
    }

    #[test]
    fn rounding_to_nearest() {
        // 1/3 = 0x5555...5.555 in units of 2^-64, rounds down.
        assert_eq!(raw("0.33333333333333333333333333333333333"), 0x5555_5555_5555_5555);
        // 2/3 rounds up to ...aaab.
        assert_eq!(raw("0.66666666666666666666666666666666667"), 0xaaaa_aaaa_aaaa_aaab);
        // just below 1 rounds to 1 and wraps.
        assert_eq!(raw("0.99999999999999999999999999"), 0);
    }

    #[test]
    fn rejects_garbage() {
        for s in ["", "-", ".", "1.2.3", "abc", "1e", "nan", "inf", "0x10"] {
            assert!(Decimal::parse(s).is_err(), "{s}");
        }
    }

    #[test]
    fn unit_interval_membership() {
        for (s, inside) in [("0.5", true), ("0", true), ("1", false), ("-0.1", false), ("0.999", true), ("1e-3", true), ("10e-1", false)] {
            assert_eq!(Decimal::parse(s).unwrap().in_unit_interval(), inside, "{s}");
        }
    }

    #[test]
    fn ratio_is_exact() {
        let (n, d) = Decimal::parse("-1.250").unwrap().to_ratio();
        assert_eq!(n, BigInt::from(-1250));
        assert_eq!(d, BigUint::from(1000u32));
        let (n, d) = Decimal::parse("3e2").unwrap().to_ratio();
        assert_eq!(n, BigInt::from(300));
        assert_eq!(d, BigUint::one());
    }
}
