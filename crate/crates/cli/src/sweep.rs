//! Parsing of sweep values: `0.16,0.2`, `0.16..0.24` or `0.16..0.24:0.04`.

use crate::error::{CliError, Result};

/// Step used when a real-valued range gives none.
pub const DEFAULT_WIDTH_STEP: f64 = 0.02;

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| CliError::Config(format!("{what}: cannot parse {s:?}")))
}

pub fn parse_reals(spec: &str, what: &str) -> Result<Vec<f64>> {
    let out: Vec<f64> = match spec.split_once("..") {
        Some((lo, rest)) => {
            let (hi, step) = match rest.split_once(':') {
                Some((hi, step)) => (num::<f64>(hi, what)?, num::<f64>(step, what)?),
                None => (num::<f64>(rest, what)?, DEFAULT_WIDTH_STEP),
            };
            let lo: f64 = num(lo, what)?;
            if !(step > 0.0) || !(hi >= lo) {
                return Err(CliError::Config(format!("{what}: empty range {spec:?}")));
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            // Rounded so 0.16 + 0.02 prints as 0.18.
            (0..=n).map(|i| ((lo + i as f64 * step) * 1e10).round() / 1e10).collect()
        }
        None => spec.split(',').map(|s| num(s, what)).collect::<Result<_>>()?,
    };
    if out.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(CliError::Config(format!("{what}: values must be finite and non-negative")));
    }
    Ok(out)
}

pub fn parse_counts(spec: &str, what: &str) -> Result<Vec<usize>> {
    match spec.split_once("..") {
        Some((lo, hi)) => {
            let (lo, hi): (usize, usize) = (num(lo, what)?, num(hi, what)?);
            if hi < lo {
                return Err(CliError::Config(format!("{what}: empty range {spec:?}")));
            }
            Ok((lo..=hi).collect())
        }
        None => spec.split(',').map(|s| num(s, what)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_range_uses_the_default_step() {
        assert_eq!(parse_reals("0.16..0.24", "w").unwrap(), vec![0.16, 0.18, 0.2, 0.22, 0.24]);
        assert_eq!(parse_reals("0.16..0.24:0.04", "w").unwrap(), vec![0.16, 0.2, 0.24]);
        assert_eq!(parse_reals("0.3, 0.1", "w").unwrap(), vec![0.3, 0.1]);
        assert!(parse_reals("0.2..0.1", "w").is_err());
        assert!(parse_reals("wide", "w").is_err());
    }

    #[test]
    fn count_ranges_are_inclusive() {
        assert_eq!(parse_counts("1..7", "n").unwrap(), (1..=7).collect::<Vec<_>>());
        assert_eq!(parse_counts("2,5", "n").unwrap(), vec![2, 5]);
        assert!(parse_counts("3..1", "n").is_err());
    }
}
