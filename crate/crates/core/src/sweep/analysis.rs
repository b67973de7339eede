use serde::{Deserialize, Serialize};

use super::{CellStats, GroupResult, StdMetric};
use crate::perturb::PerturbationKind;

/// Bins with fewer contributing cells than this are flagged.
pub const LOW_CONFIDENCE_CELLS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub start_m: f64,
    pub end_m: f64,
    pub cells: usize,
    /// Mean std per metric, in `StdMetric::ALL` order.
    pub means: [Option<f64>; 4],
    pub counts: [usize; 4],
}

impl ProfileBin {
    pub fn low_confidence(&self) -> bool {
        self.counts.iter().any(|&n| n < LOW_CONFIDENCE_CELLS)
    }
}

/// Mean of each std field over cells binned by horizontal transmitter
/// distance. Bins run from zero up to the farthest cell.
pub fn distance_profile(cells: &[CellStats], distances: &[f64], bin_width_m: f64) -> Vec<ProfileBin> {
    assert!(bin_width_m > 0.0, "bin width must be positive");
    let far = distances.iter().copied().fold(0.0, f64::max);
    let nbins = (far / bin_width_m).floor() as usize + 1;
    let mut sums = vec![[0.0; 4]; nbins];
    let mut counts = vec![[0usize; 4]; nbins];
    let mut totals = vec![0usize; nbins];
    for (c, &d) in cells.iter().zip(distances) {
        let b = ((d / bin_width_m).floor() as usize).min(nbins - 1);
        totals[b] += 1;
        for (m, metric) in StdMetric::ALL.iter().enumerate() {
            if let Some(v) = c.std(*metric) {
                sums[b][m] += v;
                counts[b][m] += 1;
            }
        }
    }
    (0..nbins)
        .map(|b| ProfileBin {
            start_m: b as f64 * bin_width_m,
            end_m: (b + 1) as f64 * bin_width_m,
            cells: totals[b],
            means: std::array::from_fn(|m| (counts[b][m] > 0).then(|| sums[b][m] / counts[b][m] as f64)),
            counts: counts[b],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageHistogram {
    /// `None` for the histogram pooled over transmitters.
    pub tx: Option<usize>,
    pub kind: PerturbationKind,
    /// `counts[n]` cells were in outage in exactly `n` perturbations.
    pub counts: Vec<usize>,
    /// Cells without any path in every perturbation; not in `counts`.
    pub always_dead: usize,
}

pub fn outage_histogram(tx: Option<usize>, kind: PerturbationKind, k: usize, groups: &[&[CellStats]]) -> OutageHistogram {
    let mut counts = vec![0; k + 1];
    let mut always_dead = 0;
    for c in groups.iter().flat_map(|g| g.iter()) {
        if c.always_dead() {
            always_dead += 1;
        } else {
            counts[c.outage_count] += 1;
        }
    }
    OutageHistogram {
        tx,
        kind,
        counts,
        always_dead,
    }
}

/// Variables of the pairwise dispersion analysis.
pub const DISPERSION_VARIABLES: [&str; 5] = ["pg_std_db", "med_std_ns", "ds_std_ns", "k_std_db", "outage_freq"];

fn variable(c: &CellStats, i: usize) -> Option<f64> {
    match i {
        4 => Some(c.outage_frequency()),
        _ => c.std(StdMetric::ALL[i]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Major-axis angle from the x axis.
    pub angle_rad: f64,
}

impl Ellipse {
    /// Two-sigma ellipse of the covariance `[[sxx, sxy], [sxy, syy]]`.
    pub fn from_covariance(sxx: f64, sxy: f64, syy: f64) -> Self {
        let mid = 0.5 * (sxx + syy);
        let rad = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
        let (l1, l2) = (mid + rad, (mid - rad).max(0.0));
        Self {
            semi_major: 2.0 * l1.sqrt(),
            semi_minor: 2.0 * l2.sqrt(),
            angle_rad: 0.5 * (2.0 * sxy).atan2(sxx - syy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionPair {
    /// `None` pools every perturbation kind.
    pub kind: Option<PerturbationKind>,
    pub x: &'static str,
    pub y: &'static str,
    pub n: usize,
    pub r: Option<f64>,
    pub mean: Option<(f64, f64)>,
    pub ellipse: Option<Ellipse>,
}

pub(crate) fn pair_stats(points: &[(f64, f64)]) -> (Option<f64>, Option<(f64, f64)>, Option<Ellipse>) {
    let n = points.len();
    if n < 3 {
        return (None, None, None);
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let r = (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0));
    let d = nf - 1.0;
    (r, Some((mx, my)), Some(Ellipse::from_covariance(sxx / d, sxy / d, syy / d)))
}

/// Pearson correlation and covariance ellipse for every pair of
/// per-cell variables, per kind and pooled, over all transmitters.
/// Only cells where both variables are present contribute.
pub fn dispersion_pairs(groups: &[GroupResult]) -> Vec<DispersionPair> {
    let mut kinds: Vec<Option<PerturbationKind>> = Vec::new();
    for g in groups {
        if !kinds.contains(&Some(g.kind)) {
            kinds.push(Some(g.kind));
        }
    }
    kinds.push(None);
    let mut out = Vec::new();
    for kind in kinds {
        let cells: Vec<&CellStats> = groups
            .iter()
            .filter(|g| kind.is_none_or(|k| g.kind == k))
            .flat_map(|g| g.cells.iter())
            .collect();
        for i in 0..DISPERSION_VARIABLES.len() {
            for j in i + 1..DISPERSION_VARIABLES.len() {
                let pts: Vec<(f64, f64)> = cells
                    .iter()
                    .filter_map(|c| Some((variable(c, i)?, variable(c, j)?)))
                    .collect();
                let (r, mean, ellipse) = pair_stats(&pts);
                out.push(DispersionPair {
                    kind,
                    x: DISPERSION_VARIABLES[i],
                    y: DISPERSION_VARIABLES[j],
                    n: pts.len(),
                    r,
                    mean,
                    ellipse,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub avg: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scene: String,
    pub kind: PerturbationKind,
    /// In `StdMetric::ALL` order; `None` if no transmitter had a value.
    pub metrics: [Option<MetricSummary>; 4],
}

impl SummaryRow {
    pub fn get(&self, m: StdMetric) -> Option<MetricSummary> {
        self.metrics[StdMetric::ALL.iter().position(|&x| x == m).expect("metric listed")]
    }
}

/// Per transmitter, the mean per-cell variance; across transmitters, the
/// root of the mean and the roots of the extremes.
pub fn summary_table(scene: &str, kind: PerturbationKind, per_tx: &[&[CellStats]]) -> SummaryRow {
    let metrics = std::array::from_fn(|m| {
        let metric = StdMetric::ALL[m];
        let variances: Vec<f64> = per_tx
            .iter()
            .filter_map(|cells| {
                let vs: Vec<f64> = cells.iter().filter_map(|c| c.std(metric)).map(|s| s * s).collect();
                (!vs.is_empty()).then(|| vs.iter().sum::<f64>() / vs.len() as f64)
            })
            .collect();
        summarize_variances(&variances)
    });
    SummaryRow {
        scene: scene.to_string(),
        kind,
        metrics,
    }
}

pub(crate) fn summarize_variances(v: &[f64]) -> Option<MetricSummary> {
    if v.is_empty() {
        return None;
    }
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(MetricSummary {
        avg: (v.iter().sum::<f64>() / v.len() as f64).sqrt(),
        min: lo.sqrt(),
        max: hi.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(pg: Option<f64>, outage: usize, k: usize) -> CellStats {
        CellStats {
            pg_std_db: pg,
            med_std_ns: pg,
            ds_std_ns: None,
            k_std_db: None,
            outage_count: outage,
            alive_count: k - outage,
            pathless_count: 0,
        }
    }

    #[test]
    fn uniform_field_gives_flat_profile() {
        let cells = vec![cell(Some(3.0), 0, 5); 40];
        let d: Vec<f64> = (0..40).map(|i| i as f64 * 2.5).collect();
        let p = distance_profile(&cells, &d, 25.0);
        assert_eq!(p.len(), 4);
        assert!(p.iter().all(|b| b.means[0] == Some(3.0) && b.cells == 10));
    }

    #[test]
    fn single_distance_single_bin() {
        let cells = vec![cell(Some(1.0), 0, 5); 12];
        let p = distance_profile(&cells, &[60.0; 12], 25.0);
        assert_eq!(p.iter().filter(|b| b.cells > 0).count(), 1);
        assert_eq!(p[2].cells, 12);
        assert!(!p[2].counts[..2].iter().any(|&n| n < 10));
    }

    #[test]
    fn ramp_is_reproduced_by_bin_means() {
        let d: Vec<f64> = (0..1000).map(|i| i as f64 * 0.3).collect();
        let cells: Vec<CellStats> = d.iter().map(|x| cell(Some(x / 100.0), 0, 5)).collect();
        for b in distance_profile(&cells, &d, 25.0).iter().filter(|b| b.cells > 1) {
            let inside: Vec<f64> = d.iter().copied().filter(|x| *x >= b.start_m && *x < b.end_m).collect();
            let expect = inside.iter().sum::<f64>() / inside.len() as f64 / 100.0;
            assert!((b.means[0].unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_bins() {
        let mut cells = vec![cell(Some(1.0), 0, 50); 9];
        cells.push(cell(Some(1.0), 3, 50));
        let h = outage_histogram(Some(0), PerturbationKind::Height, 50, &[&cells]);
        assert_eq!((h.counts[0], h.counts[3], h.counts.len()), (9, 1, 51));
    }

    #[test]
    fn correlation_extremes_and_ellipse() {
        let up: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, i as f64)).collect();
        let down: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, -(i as f64))).collect();
        assert!((pair_stats(&up).0.unwrap() - 1.0).abs() < 1e-15);
        assert!((pair_stats(&down).0.unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pair_stats(&up[..2]), (None, None, None));
        let e = Ellipse::from_covariance(4.0, 0.0, 1.0);
        assert_eq!((e.semi_major, e.semi_minor, e.angle_rad), (4.0, 2.0, 0.0));
    }

    #[test]
    fn summary_formula() {
        let s = summarize_variances(&[4.0, 16.0]).unwrap();
        assert!((s.avg - 10f64.sqrt()).abs() < 1e-15);
        assert_eq!((s.min, s.max), (2.0, 4.0));
        let one = summarize_variances(&[9.0]).unwrap();
        assert_eq!((one.avg, one.min, one.max), (3.0, 3.0, 3.0));
    }
}
