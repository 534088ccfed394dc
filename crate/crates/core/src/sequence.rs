//! Point sequences: Kronecker orbits `({k α_1}, …, {k α_n})` and prefixes
//! read from text files.

use std::fmt::Write as _;
use std::path::Path;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::decimal::Decimal;
use crate::error::{invalid, Error, Result};
use crate::torus::{Frac64, UnitPoint};

pub const GOLDEN: &str = "0.618033988749894848204586834365638117720309179805762862135449";
pub const SQRT2: &str = "0.41421356237309504880168872420969807856967187537694807317668";
pub const SQRT3: &str = "0.732050807568877293527446341505872366942805253810380628055807";

/// `sum_{m=1}^{5} 10^(-m!)` written out in full (120 decimals).
pub fn liouville_decimal() -> String {
    let mut digits = vec![b'0'; 120];
    for pos in [1usize, 2, 6, 24, 120] {
        digits[pos - 1] = b'1';
    }
    format!("0.{}", String::from_utf8(digits).unwrap())
}

/// Exact rational `numerator / denominator`, denominator positive.
pub type Ratio = (BigInt, BigUint);

/// One coordinate of α, with the exact value it was quantized from when one
/// is known.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaComponent {
    pub value: Frac64,
    pub exact: Option<Ratio>,
    pub label: String,
}

impl AlphaComponent {
    /// Parses a named constant (`golden`, `sqrt2`, `sqrt3`, `liouville`),
    /// a rational `p/q`, a finite continued fraction `cf[a0;a1,a2,...]`, or a
    /// decimal literal.
    pub fn parse(token: &str) -> Result<Self> {
        let token = token.trim();
        let label = token.to_string();
        let named = match token {
            "golden" => Some(GOLDEN.to_string()),
            "sqrt2" => Some(SQRT2.to_string()),
            "sqrt3" => Some(SQRT3.to_string()),
            "liouville" => Some(liouville_decimal()),
            _ => None,
        };
        let exact = if let Some(text) = named {
            Decimal::parse(&text)?.to_ratio()
        } else if let Some(body) = token.strip_prefix("cf[").and_then(|b| b.strip_suffix(']')) {
            continued_fraction_value(body)?
        } else if let Some((p, q)) = token.split_once('/') {
            let p: BigInt = p
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad numerator in {token:?}")))?;
            let q: BigInt = q
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad denominator in {token:?}")))?;
            if q.is_zero() {
                return Err(invalid(format!("zero denominator in {token:?}")));
            }
            let (p, q) = if q.sign() == Sign::Minus { (-p, -q) } else { (p, q) };
            (p, q.magnitude().clone())
        } else {
            Decimal::parse(token)?.to_ratio()
        };
        Ok(AlphaComponent {
            value: Frac64::from_raw(quantize_ratio(&exact.0, &exact.1)),
            exact: Some(exact),
            label,
        })
    }

    pub fn from_frac(value: Frac64) -> Self {
        AlphaComponent {
            value,
            exact: None,
            label: value.to_string(),
        }
    }
}

/// `frac(num/den)` rounded to the nearest multiple of 2^-64 (ties up).
pub fn quantize_ratio(num: &BigInt, den: &BigUint) -> u64 {
    let den_i = BigInt::from(den.clone());
    let r = num.mod_floor(&den_i).magnitude().clone();
    // round(r * 2^64 / den) = floor((2 r 2^64 + den) / (2 den))
    let scaled = ((r << 65u32) + den) / (den << 1u32);
    // scaled == 2^64 wraps to 0
    let mask = (BigUint::one() << 64u32) - 1u32;
    (scaled & mask).to_u64().unwrap()
}

fn continued_fraction_value(body: &str) -> Result<Ratio> {
    let (head, tail) = body.split_once(';').unwrap_or((body, ""));
    let mut terms = vec![head
        .trim()
        .parse::<BigInt>()
        .map_err(|_| invalid(format!("bad continued fraction term {head:?}")))?];
    for t in tail.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let a: BigInt = t
            .parse()
            .map_err(|_| invalid(format!("bad continued fraction term {t:?}")))?;
        if a.sign() != Sign::Plus {
            return Err(invalid("continued fraction partial quotients must be positive"));
        }
        terms.push(a);
    }
    // Evaluate from the back: x = a_k, x = a_{i} + 1/x.
    let mut num = terms.pop().unwrap();
    let mut den = BigInt::one();
    while let Some(a) = terms.pop() {
        let new_num = &a * &num + &den;
        den = num;
        num = new_num;
    }
    if den.sign() == Sign::Minus {
        num = -num;
        den = -den;
    }
    Ok((num, den.magnitude().clone()))
}

/// The direction vector α, stored as fractional parts.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector {
    components: Vec<AlphaComponent>,
}

impl AlphaVector {
    pub fn new(components: Vec<AlphaComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("alpha needs at least one component"));
        }
        Ok(AlphaVector { components })
    }

    pub fn from_fracs(values: &[Frac64]) -> Result<Self> {
        Self::new(values.iter().copied().map(AlphaComponent::from_frac).collect())
    }

    /// Parses a comma-separated list of component tokens, e.g. `golden,0`
    /// or `cf[0;2,2,2],1/3`.
    pub fn parse(spec: &str) -> Result<Self> {
        Self::new(
            split_top_level(spec)
                .into_iter()
                .map(AlphaComponent::parse)
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[AlphaComponent] {
        &self.components
    }

    pub fn values(&self) -> Vec<Frac64> {
        self.components.iter().map(|c| c.value).collect()
    }

    pub fn provenance(&self) -> String {
        self.components
            .iter()
            .map(|c| c.label.as_str())
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn split_top_level(spec: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, ch) in spec.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&spec[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&spec[start..]);
    parts
}

/// ξ_k of the Kronecker sequence, `k >= 1`.
pub fn kronecker_point(alpha: &AlphaVector, k: u64) -> Result<UnitPoint> {
    if k == 0 {
        return Err(invalid("Kronecker index must be at least 1"));
    }
    UnitPoint::new(alpha.components.iter().map(|c| c.value.mul_int(k)).collect())
}

/// Anything that can produce ξ_k on demand.
pub trait PointSource: Sync {
    fn dim(&self) -> usize;
    /// Number of points available; `None` for unbounded generators.
    fn available(&self) -> Option<u64>;
    /// Writes ξ_k (1-based) into `out`. `k` must be available.
    fn fill_point(&self, k: u64, out: &mut [Frac64]);
    fn describe(&self) -> String;

    fn check_available(&self, q: u64) -> Result<()> {
        match self.available() {
            Some(available) if available < q => Err(Error::ShortSequence {
                requested: q,
                available,
            }),
            _ => Ok(()),
        }
    }
}

impl PointSource for AlphaVector {
    fn dim(&self) -> usize {
        self.components.len()
    }

    fn available(&self) -> Option<u64> {
        None
    }

    #[inline]
    fn fill_point(&self, k: u64, out: &mut [Frac64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.value.mul_int(k);
        }
    }

    fn describe(&self) -> String {
        format!("kronecker:{}", self.provenance())
    }
}

/// The points ξ_1, …, ξ_q stored contiguously.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequencePrefix {
    dim: usize,
    coords: Vec<Frac64>,
    source: String,
}

impl SequencePrefix {
    pub fn new(dim: usize, coords: Vec<Frac64>, source: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(invalid("coordinate count is not a multiple of the dimension"));
        }
        Ok(SequencePrefix {
            dim,
            coords,
            source: source.into(),
        })
    }

    pub fn from_points(points: &[UnitPoint], source: impl Into<String>) -> Result<Self> {
        let dim = points.first().map(UnitPoint::dim).ok_or(Error::EmptyPrefix)?;
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            crate::torus::check_dim(dim, p.dim())?;
            coords.extend_from_slice(p.coords());
        }
        Self::new(dim, coords, source)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// ξ_k, 1-based.
    #[inline]
    pub fn point(&self, k: usize) -> &[Frac64] {
        &self.coords[(k - 1) * self.dim..k * self.dim]
    }

    /// Points in index order, ξ_1 first.
    pub fn points(&self) -> impl ExactSizeIterator<Item = &[Frac64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[Frac64] {
        &self.coords
    }

    /// The first `q` points.
    pub fn truncated(&self, q: usize) -> Result<SequencePrefix> {
        if q > self.len() {
            return Err(Error::ShortSequence {
                requested: q as u64,
                available: self.len() as u64,
            });
        }
        Ok(SequencePrefix {
            dim: self.dim,
            coords: self.coords[..q * self.dim].to_vec(),
            source: self.source.clone(),
        })
    }

    pub fn to_points(&self) -> Vec<UnitPoint> {
        self.points()
            .map(|p| UnitPoint::new(p.to_vec()).unwrap())
            .collect()
    }
}

impl PointSource for SequencePrefix {
    fn dim(&self) -> usize {
        self.dim
    }

    fn available(&self) -> Option<u64> {
        Some(self.len() as u64)
    }

    #[inline]
    fn fill_point(&self, k: u64, out: &mut [Frac64]) {
        out.copy_from_slice(self.point(k as usize));
    }

    fn describe(&self) -> String {
        self.source.clone()
    }
}

/// Where points come from.
#[derive(Debug, Clone)]
pub enum SequenceSpec {
    Kronecker(AlphaVector),
    File(std::path::PathBuf),
}

const CHUNK: usize = 1 << 14;

/// Materializes ξ_1..ξ_q.
pub fn stream_prefix(spec: &SequenceSpec, q: u64) -> Result<SequencePrefix> {
    if q == 0 {
        return Err(invalid("prefix length must be at least 1"));
    }
    match spec {
        SequenceSpec::Kronecker(alpha) => kronecker_prefix(alpha, q),
        SequenceSpec::File(path) => {
            let prefix = read_sequence_file(path)?;
            prefix.truncated(q as usize)
        }
    }
}

/// Kronecker prefix by incremental addition; chunks start from a direct
/// multiplication so parallel and serial runs agree bit for bit.
pub fn kronecker_prefix(alpha: &AlphaVector, q: u64) -> Result<SequencePrefix> {
    let dim = alpha.dim();
    let q = usize::try_from(q).map_err(|_| invalid("prefix too long"))?;
    let step = alpha.values();
    let mut coords = vec![Frac64::ZERO; q * dim];
    let fill = |(chunk_idx, chunk): (usize, &mut [Frac64])| {
        let first_k = (chunk_idx * CHUNK + 1) as u64;
        let mut current: Vec<Frac64> = step.iter().map(|a| a.mul_int(first_k)).collect();
        for point in chunk.chunks_exact_mut(dim) {
            point.copy_from_slice(&current);
            for (c, a) in current.iter_mut().zip(&step) {
                *c = c.wrapping_add(*a);
            }
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        coords.par_chunks_mut(CHUNK * dim).enumerate().for_each(fill);
    }
    #[cfg(not(feature = "parallel"))]
    coords.chunks_mut(CHUNK * dim).enumerate().for_each(fill);
    SequencePrefix::new(dim, coords, alpha.describe())
}

/// Reads the text sequence format: a header line `n q`, then `q` lines of `n`
/// decimals in `[0,1)`. Lines starting with `#` are comments.
pub fn parse_sequence_text(text: &str, source: &str) -> Result<SequencePrefix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (header_line, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header \"n q\"".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let parse_count = |s: &str| s.parse::<usize>().ok().filter(|&v| v > 0);
    let (dim, count) = match fields.as_slice() {
        [n, q] => match (parse_count(n), parse_count(q)) {
            (Some(n), Some(q)) => (n, q),
            _ => {
                return Err(Error::Parse {
                    line: header_line,
                    message: format!("header must hold two positive integers, got {header:?}"),
                })
            }
        },
        _ => {
            return Err(Error::Parse {
                line: header_line,
                message: format!("header must be \"n q\", got {header:?}"),
            })
        }
    };

    let mut coords = Vec::with_capacity(dim * count);
    let mut seen = 0usize;
    let mut last_line = header_line;
    for (line_no, line) in lines {
        last_line = line_no;
        if seen == count {
            return Err(Error::Parse {
                line: line_no,
                message: format!("trailing data after {count} points"),
            });
        }
        let values: Vec<&str> = line.split_whitespace().collect();
        if values.len() != dim {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {dim} coordinates, found {}", values.len()),
            });
        }
        for v in values {
            let d = Decimal::parse(v).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if !d.in_unit_interval() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("coordinate {v} outside [0,1)"),
                });
            }
            let mut raw = d.frac_raw();
            // values within 2^-65 of 1 round up to 1; keep them in [0,1)
            if raw == 0 && is_near_one(&d) {
                raw = u64::MAX;
            }
            coords.push(Frac64::from_raw(raw));
        }
        seen += 1;
    }
    if seen < count {
        return Err(Error::Parse {
            line: last_line + 1,
            message: format!("expected {count} points, found {seen}"),
        });
    }
    SequencePrefix::new(dim, coords, source)
}

fn is_near_one(d: &Decimal) -> bool {
    let (num, den) = d.to_ratio();
    num * 2 >= BigInt::from(den)
}

pub fn read_sequence_file(path: &Path) -> Result<SequencePrefix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_sequence_text(&text, &format!("file:{}", path.display()))
}

/// Writes the text sequence format. Twenty decimals round-trip every
/// fixed-point coordinate exactly.
pub fn format_sequence_text(prefix: &SequencePrefix) -> String {
    let mut out = format!("{} {}\n", prefix.dim(), prefix.len());
    for p in prefix.points() {
        let line: Vec<String> = p.iter().map(|c| decimal_string(*c)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

/// Truncated 20-digit decimal expansion of a coordinate.
pub fn decimal_string(x: Frac64) -> String {
    let mut r = x.raw() as u128;
    let mut s = String::from("0.");
    for _ in 0..20 {
        r *= 10;
        s.push((b'0' + (r >> 64) as u8) as char);
        r &= (1u128 << 64) - 1;
    }
    let trimmed = s.trim_end_matches('0');
    if trimmed == "0." {
        "0".to_string()
    } else {
        trimmed.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn alpha(spec: &str) -> AlphaVector {
        AlphaVector::parse(spec).unwrap()
    }

    #[test]
    fn kronecker_point_examples() {
        let p = kronecker_point(&alpha("0.5"), 3).unwrap();
        assert_eq!(p.coords(), &[Frac64::HALF]);

        let a = alpha("1/3,1/4");
        let p = kronecker_point(&a, 12).unwrap();
        assert_eq!(p.coords()[0], a.values()[0].mul_int(12));
        assert_eq!(p.coords()[1], Frac64::ZERO);

        // 2(φ-1) mod 1 = 0.23606797749978969640917366873127623544...
        let p = kronecker_point(&alpha("golden"), 2).unwrap();
        let expected = Frac64::parse_decimal("0.236067977499789696409173668731276235440618").unwrap();
        assert!(p.coords()[0].raw().abs_diff(expected.raw()) <= 2);

        assert!(kronecker_point(&alpha("golden"), 0).is_err());
    }

    #[test]
    fn stream_prefix_examples() {
        let golden = SequenceSpec::Kronecker(alpha("golden"));
        let p = stream_prefix(&golden, 5).unwrap();
        let expected = [0.618034, 0.236068, 0.854102, 0.472136, 0.090170];
        for (pt, e) in p.points().zip(expected) {
            assert!((pt[0].to_f64() - e).abs() < 1e-6);
        }

        let half = stream_prefix(&SequenceSpec::Kronecker(alpha("0.5")), 2).unwrap();
        assert_eq!(half.coords(), &[Frac64::HALF, Frac64::ZERO]);

        assert!(stream_prefix(&golden, 0).is_err());
    }

    #[test]
    fn short_file_is_an_error() {
        let dir = std::env::temp_dir().join(format!("welldist-seq-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("three.txt");
        std::fs::write(&path, "1 3\n0.1\n0.2\n0.3\n").unwrap();
        let spec = SequenceSpec::File(path.clone());
        assert_eq!(stream_prefix(&spec, 3).unwrap().len(), 3);
        assert!(matches!(
            stream_prefix(&spec, 5),
            Err(Error::ShortSequence { requested: 5, available: 3 })
        ));
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn parse_file_format() {
        let text = "# van der Corput\n2 3\n0.5 0.25\n\n# mid comment\n0.25 0.75\n0 0.125\n";
        let p = parse_sequence_text(text, "t").unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.len(), 3);
        assert_eq!(p.point(3), &[Frac64::ZERO, Frac64::from_raw(1 << 61)]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("", 1),
            ("2\n", 1),
            ("1 2\n0.5\n", 3),
            ("1 1\n0.5 0.5\n", 2),
            ("1 1\n1.5\n", 2),
            ("1 1\n-0.1\n", 2),
            ("1 1\nabc\n", 2),
            ("1 1\n0.5\n0.25\n", 3),
            ("0 1\n", 1),
        ];
        for (text, line) in cases {
            match parse_sequence_text(text, "t") {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn values_next_to_one_stay_inside() {
        let p = parse_sequence_text("1 1\n0.99999999999999999999999\n", "t").unwrap();
        assert_eq!(p.point(1)[0].raw(), u64::MAX);
    }

    #[test]
    fn named_constants() {
        let g = AlphaComponent::parse("golden").unwrap();
        // round(2^64 (φ - 1)) and round(2^64 (√2 - 1)), from a 80-digit evaluation
        assert_eq!(g.value.raw(), 0x9e37_79b9_7f4a_7c16);
        assert_eq!(AlphaComponent::parse("sqrt2").unwrap().value.raw(), 0x6a09_e667_f3bc_c909);
        let l = AlphaComponent::parse("liouville").unwrap();
        assert!((l.value.to_f64() - 0.110_001).abs() < 1e-15);
        assert!(liouville_decimal().len() == 122);
        assert!(AlphaComponent::parse("pi").is_err());
    }

    #[test]
    fn rational_and_cf_tokens() {
        assert_eq!(AlphaComponent::parse("1/4").unwrap().value, Frac64::from_raw(1 << 62));
        assert_eq!(AlphaComponent::parse("5/4").unwrap().value, Frac64::from_raw(1 << 62));
        assert_eq!(AlphaComponent::parse("-1/4").unwrap().value, Frac64::from_raw(3 << 62));
        assert_eq!(AlphaComponent::parse("1/3").unwrap().value.raw(), 0x5555_5555_5555_5555);
        // [0;2,2] = 1/(2 + 1/2) = 2/5
        let c = AlphaComponent::parse("cf[0;2,2]").unwrap();
        assert_eq!(c.exact, Some((BigInt::from(2), BigUint::from(5u32))));
        assert!(AlphaComponent::parse("1/0").is_err());
        let v = alpha("cf[0;1,2],golden");
        assert_eq!(v.dim(), 2);
    }

    #[test]
    fn format_round_trips() {
        let p = kronecker_prefix(&alpha("golden,sqrt2"), 50).unwrap();
        let text = format_sequence_text(&p);
        let back = parse_sequence_text(&text, &p.describe()).unwrap();
        assert_eq!(back.coords(), p.coords());
    }

    proptest! {
        #[test]
        fn incremental_matches_direct(raw in any::<u64>(), raw2 in any::<u64>(), q in 1u64..40_000) {
            let a = AlphaVector::from_fracs(&[Frac64::from_raw(raw), Frac64::from_raw(raw2)]).unwrap();
            let prefix = kronecker_prefix(&a, q).unwrap();
            for k in [1, q / 2 + 1, q] {
                let direct = kronecker_point(&a, k).unwrap();
                prop_assert_eq!(prefix.point(k as usize), direct.coords());
            }
            let shorter = kronecker_prefix(&a, q / 2 + 1).unwrap();
            prop_assert_eq!(shorter.coords(), &prefix.coords()[..shorter.coords().len()]);
        }

        #[test]
        fn dyadic_alpha_is_periodic(num in 0u64..256, m in 1u32..9, k in 1u64..10_000) {
            let a = AlphaVector::from_fracs(&[Frac64::from_raw((num % (1 << m)) << (64 - m))]).unwrap();
            let period = 1u64 << m;
            prop_assert_eq!(kronecker_point(&a, k).unwrap(), kronecker_point(&a, k + period).unwrap());
        }
    }
}
