use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Everything that determines an artifact; embedded verbatim in each output.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub n: usize,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t: Option<u64>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qs: Option<String>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_q: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub etas: Option<usize>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub format: Format,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Positive integer, also in `1e6` notation.
pub fn parse_count(s: &str) -> Result<u64, String> {
    let s = s.trim().replace('_', "");
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("not an integer: {s}"))?;
    if v.fract() != 0.0 || !(0.0..=9.007_199_254_740_992e15).contains(&v) {
        return Err(format!("not a representable non-negative integer: {s}"));
    }
    Ok(v as u64)
}

/// Comma-separated `fib:N`, `a..b` and plain integers, sorted and deduplicated.
pub fn parse_qs(spec: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some(n) = item.strip_prefix("fib:") {
            let n = parse_count(n)?;
            if n > 90 {
                return Err(format!("fib:{n} overflows 64 bits"));
            }
            let (mut a, mut b) = (1u64, 1u64);
            for _ in 0..n {
                out.push(a);
                (a, b) = (b, a + b);
            }
        } else if let Some((lo, hi)) = item.split_once("..") {
            let (lo, hi) = (parse_count(lo)?, parse_count(hi)?);
            if lo > hi {
                return Err(format!("empty range {item}"));
            }
            if hi - lo > 100_000_000 {
                return Err(format!("range {item} is too long"));
            }
            out.extend(lo..=hi);
        } else {
            out.push(parse_count(item)?);
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(format!("no q in {spec:?}"));
    }
    if out[0] == 0 {
        return Err("q must be positive".into());
    }
    Ok(out)
}
