//! Link statistics of a path set: path gain, mean excess delay, RMS delay
//! spread, Rician K-factor and outage.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::tracer::PathSet;

pub const DEFAULT_PG_THRESHOLD_DB: f64 = -130.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    #[default]
    Incoherent,
    Coherent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KFactor {
    Db(f64),
    Infinite,
}

impl KFactor {
    pub fn finite(self) -> Option<f64> {
        match self {
            KFactor::Db(v) => Some(v),
            KFactor::Infinite => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Connected {
    pub path_gain_db: f64,
    pub mean_excess_delay_ns: f64,
    pub delay_spread_ns: f64,
    pub k_factor: KFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum LinkMetrics {
    Connected(Connected),
    Outage,
}

impl LinkMetrics {
    pub fn connected(&self) -> Option<&Connected> {
        match self {
            LinkMetrics::Connected(c) => Some(c),
            LinkMetrics::Outage => None,
        }
    }

    pub fn is_outage(&self) -> bool {
        matches!(self, LinkMetrics::Outage)
    }
}

/// Metrics from raw `(delay_s, amplitude)` pairs.
pub fn metrics_from_taps(taps: &[(f64, Complex64)], pg_threshold_db: f64, combine: Combine) -> LinkMetrics {
    if taps.is_empty() {
        return LinkMetrics::Outage;
    }
    let powers: Vec<f64> = taps.iter().map(|t| t.1.norm_sqr()).collect();
    let total: f64 = powers.iter().sum();
    let pg_lin = match combine {
        Combine::Incoherent => total,
        Combine::Coherent => taps.iter().map(|t| t.1).sum::<Complex64>().norm_sqr(),
    };
    let pg_db = 10.0 * pg_lin.log10();
    if !(pg_db >= pg_threshold_db) || !(total > 0.0) {
        return LinkMetrics::Outage;
    }
    let t0 = taps.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
    let excess: Vec<f64> = taps.iter().map(|t| t.0 - t0).collect();
    let med: f64 = powers.iter().zip(&excess).map(|(p, e)| p * e).sum::<f64>() / total;
    let var: f64 = powers.iter().zip(&excess).map(|(p, e)| p * (e - med).powi(2)).sum::<f64>() / total;
    let k_factor = if taps.len() == 1 {
        KFactor::Infinite
    } else {
        let strongest = (0..powers.len()).max_by(|&a, &b| powers[a].total_cmp(&powers[b])).unwrap();
        let p_max = powers[strongest];
        let rest: f64 = powers.iter().enumerate().filter(|&(i, _)| i != strongest).map(|(_, p)| p).sum();
        if rest > 0.0 {
            KFactor::Db(10.0 * (p_max / rest).log10())
        } else {
            KFactor::Infinite
        }
    };
    LinkMetrics::Connected(Connected {
        path_gain_db: pg_db,
        mean_excess_delay_ns: med * 1e9,
        delay_spread_ns: var.max(0.0).sqrt() * 1e9,
        k_factor,
    })
}

pub fn compute_metrics(ps: &PathSet, pg_threshold_db: f64, combine: Combine) -> LinkMetrics {
    let taps: Vec<(f64, Complex64)> = ps.paths.iter().map(|p| (p.delay_s, p.amplitude)).collect();
    metrics_from_taps(&taps, pg_threshold_db, combine)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(m: LinkMetrics) -> Connected {
        *m.connected().expect("connected")
    }

    #[test]
    fn two_equal_paths() {
        let a = Complex64::new(1e-4, 0.0);
        let m = c(metrics_from_taps(&[(1e-6, a), (1e-6 + 100e-9, a)], -130.0, Combine::Incoherent));
        assert!((m.mean_excess_delay_ns - 50.0).abs() < 1e-6);
        assert!((m.delay_spread_ns - 50.0).abs() < 1e-6);
        assert_eq!(m.k_factor, KFactor::Db(0.0));
    }

    #[test]
    fn single_path_and_no_path() {
        let m = c(metrics_from_taps(&[(3e-7, Complex64::new(0.0, 1e-3))], -130.0, Combine::Incoherent));
        assert_eq!(m.delay_spread_ns, 0.0);
        assert_eq!(m.k_factor, KFactor::Infinite);
        assert!((m.path_gain_db + 60.0).abs() < 1e-9);
        assert_eq!(metrics_from_taps(&[], -130.0, Combine::Incoherent), LinkMetrics::Outage);
    }

    #[test]
    fn threshold_censors() {
        let weak = [(0.0, Complex64::new(1e-7, 0.0))];
        assert!(metrics_from_taps(&weak, -130.0, Combine::Incoherent).is_outage());
        assert!(!metrics_from_taps(&weak, -150.0, Combine::Incoherent).is_outage());
    }

    #[test]
    fn coherent_sum_can_cancel() {
        let a = Complex64::new(1e-3, 0.0);
        let taps = [(0.0, a), (1e-9, -a * (1.0 - 1e-9))];
        assert!(metrics_from_taps(&taps, -130.0, Combine::Coherent).is_outage());
        assert!(!metrics_from_taps(&taps, -130.0, Combine::Incoherent).is_outage());
    }
}
