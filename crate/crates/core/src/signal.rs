//! UE measurement reports and the RSSI derivation from RSRP/RSRQ.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// PRB count assumed when a log row leaves it empty (SS/PBCH measurement bandwidth).
pub const DEFAULT_N_PRB: u32 = 20;

pub const RSRP_RANGE_DBM: (f64, f64) = (-156.0, -31.0);
pub const RSRQ_RANGE_DB: (f64, f64) = (-43.0, 20.0);

/// One UE measurement report. RSRQ is a signed dB value (typically negative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct UeReport<T> {
    pub rsrp: T,
    pub rsrq: T,
    pub sinr: Option<T>,
    pub n_prb: u32,
    pub pci: Option<u32>,
    pub timestamp: f64,
}

impl<T: Scalar> UeReport<T> {
    pub fn new(rsrp: T, rsrq: T, n_prb: u32) -> Self {
        UeReport { rsrp, rsrq, sinr: None, n_prb, pci: None, timestamp: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    RsrpRange,
    RsrqRange,
    NPrb,
    NonFiniteSinr,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Violation::RsrpRange => "rsrp range",
            Violation::RsrqRange => "rsrq range",
            Violation::NPrb => "n_prb ≥ 1",
            Violation::NonFiniteSinr => "sinr not finite",
        })
    }
}

/// Every violated report invariant, in field order. Empty means valid.
pub fn validate_report<T: Scalar>(r: &UeReport<T>) -> Vec<Violation> {
    let in_range = |v: T, (lo, hi): (f64, f64)| v.is_finite() && v >= T::of(lo) && v <= T::of(hi);
    let mut out = Vec::new();
    if !in_range(r.rsrp, RSRP_RANGE_DBM) {
        out.push(Violation::RsrpRange);
    }
    if !in_range(r.rsrq, RSRQ_RANGE_DB) {
        out.push(Violation::RsrqRange);
    }
    if r.n_prb < 1 {
        out.push(Violation::NPrb);
    }
    if r.sinr.is_some_and(|s| !s.is_finite()) {
        out.push(Violation::NonFiniteSinr);
    }
    out
}

/// RSSI in dBm: `RSRP + 10·log10(N) − RSRQ`.
pub fn rssi_from_report<T: Scalar>(r: &UeReport<T>) -> Result<T> {
    let violations = validate_report(r);
    if let Some(v) = violations.first() {
        let names: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Validation(format!("{v}: {}", names.join(", "))));
    }
    Ok(r.rsrp + T::of(10.0) * T::from_u32(r.n_prb).unwrap().log10() - r.rsrq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rssi_examples() {
        let r: f64 = rssi_from_report(&UeReport::new(-90.0, -10.0, 20)).unwrap();
        assert!((r - -66.989_700_043_360_19).abs() < 1e-9, "{r}");
        assert_eq!(rssi_from_report(&UeReport::new(-80.0, 0.0, 1)).unwrap(), -80.0);
        assert_eq!(rssi_from_report(&UeReport::new(-100.0, -3.0, 100)).unwrap(), -77.0);
    }

    #[test]
    fn validation_lists_every_violation() {
        assert!(validate_report(&UeReport::new(-90.0, -10.0, 20)).is_empty());
        assert_eq!(validate_report(&UeReport::new(-90.0, -10.0, 0)), vec![Violation::NPrb]);
        assert_eq!(validate_report(&UeReport::new(-200.0, -10.0, 20)), vec![Violation::RsrpRange]);
        let all = validate_report(&UeReport::new(-200.0, 30.0, 0));
        assert_eq!(all, vec![Violation::RsrpRange, Violation::RsrqRange, Violation::NPrb]);
        assert_eq!(Violation::RsrpRange.to_string(), "rsrp range");
    }

    #[test]
    fn invalid_report_error_names_field() {
        let e = rssi_from_report(&UeReport::new(-200.0, -10.0, 20)).unwrap_err();
        assert!(e.to_string().contains("rsrp range"));
    }

    #[test]
    fn powers_of_ten_are_exact() {
        for (n, k) in [(1u32, 0.0), (10, 10.0), (100, 20.0), (1000, 30.0)] {
            let r = rssi_from_report(&UeReport::new(-100.0, 0.0, n)).unwrap();
            assert_eq!(r, -100.0 + k);
        }
    }

    proptest! {
        #[test]
        fn monotone_and_invertible(
            rsrp in -150.0f64..-40.0, rsrq in -40.0f64..15.0, n in 1u32..300, d in 0.01f64..5.0,
        ) {
            let base = rssi_from_report(&UeReport::new(rsrp, rsrq, n)).unwrap();
            prop_assert!(rssi_from_report(&UeReport::new(rsrp + d, rsrq, n)).unwrap() > base);
            prop_assert!(rssi_from_report(&UeReport::new(rsrp, rsrq + d, n)).unwrap() < base);
            prop_assert!(rssi_from_report(&UeReport::new(rsrp, rsrq, n + 1)).unwrap() > base);
            let back = base - 10.0 * (n as f64).log10() + rsrq;
            prop_assert!((back - rsrp).abs() < 1e-12);
        }
    }
}
