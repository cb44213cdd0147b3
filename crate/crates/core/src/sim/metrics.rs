//! Per-step tracking errors.
//!
//! Estimates are the means of particles whose existence weight reaches the
//! extraction threshold. Position error is an RMSE over the minimum-cost
//! assignment of estimates to truths, with every distance capped at `cap` and
//! every unmatched truth charged the full cap. Cardinality error is
//! `|Σ w - N|`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gaussian::GaussianParticle;
use crate::geometry::Rect;
use crate::sensors::POSITION_INDICES;
use crate::Vector;

use super::experiment::TrackingLog;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    pub extraction_threshold: f64,
    /// Distance cap `c`, also the miss penalty.
    pub cap: f64,
    /// Also compute OSPA (order 2, cutoff `cap`).
    pub ospa: bool,
    /// Only truths inside this region are expected to be tracked.
    pub region: Option<Rect>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            extraction_threshold: 0.5,
            cap: 5.0,
            ospa: false,
            region: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub rmse: f64,
    pub cardinality_estimate: f64,
    pub cardinality_error: f64,
    pub ospa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub steps: Vec<StepMetrics>,
}

impl MetricReport {
    /// Mean RMSE and mean cardinality error over records whose 1-based step
    /// lies in `first..=last`.
    pub fn window_means(&self, first: usize, last: usize) -> Option<(f64, f64)> {
        let picked: Vec<&StepMetrics> = self
            .steps
            .iter()
            .filter(|m| m.step >= first && m.step <= last)
            .collect();
        if picked.is_empty() {
            return None;
        }
        let n = picked.len() as f64;
        Some((
            picked.iter().map(|m| m.rmse).sum::<f64>() / n,
            picked.iter().map(|m| m.cardinality_error).sum::<f64>() / n,
        ))
    }

    pub fn mean_rmse(&self) -> f64 {
        mean(self.steps.iter().map(|m| m.rmse))
    }

    pub fn mean_cardinality_error(&self) -> f64 {
        mean(self.steps.iter().map(|m| m.cardinality_error))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Optimal assignment for a square cost matrix (row `i` gets column
/// `result[i]`), by the Hungarian method with row/column potentials.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual start column
    let mut u = alloc::vec![0.0; n + 1];
    let mut v = alloc::vec![0.0; n + 1];
    let mut owner = alloc::vec![0usize; n + 1];
    let mut way = alloc::vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_v = alloc::vec![f64::INFINITY; n + 1];
        let mut used = alloc::vec![false; n + 1];
        loop {
            used[col0] = true;
            let i0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = col0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    col1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut result = alloc::vec![0; n];
    for j in 1..=n {
        if owner[j] > 0 {
            result[owner[j] - 1] = j - 1;
        }
    }
    result
}

fn capped_sq(a: (f64, f64), b: (f64, f64), cap: f64) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).min(cap * cap)
}

/// Minimum total of capped squared distances, padding the smaller side with
/// dummies that cost `pad_truth` (unmatched truth) or `pad_estimate`
/// (unmatched estimate).
fn min_capped_cost(
    truths: &[(f64, f64)],
    estimates: &[(f64, f64)],
    cap: f64,
    pad_truth: f64,
    pad_estimate: f64,
) -> f64 {
    let n = truths.len().max(estimates.len());
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match (truths.get(i), estimates.get(j)) {
                    (Some(t), Some(e)) => capped_sq(*t, *e, cap),
                    (Some(_), None) => pad_truth,
                    (None, Some(_)) => pad_estimate,
                    (None, None) => 0.0,
                })
                .collect()
        })
        .collect();
    hungarian(&cost)
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i][j])
        .sum()
}

/// Position RMSE over truths: `sqrt(Σ min(d, c)² / N)` under the optimal
/// assignment, unmatched truths counting `c²`. Zero when there are no truths.
pub fn assignment_rmse(truths: &[(f64, f64)], estimates: &[(f64, f64)], cap: f64) -> f64 {
    if truths.is_empty() {
        return 0.0;
    }
    let total = min_capped_cost(truths, estimates, cap, cap * cap, 0.0);
    libm::sqrt(total / truths.len() as f64)
}

/// OSPA distance of order 2 with cutoff `cap`.
pub fn ospa(truths: &[(f64, f64)], estimates: &[(f64, f64)], cap: f64) -> f64 {
    let n = truths.len().max(estimates.len());
    if n == 0 {
        return 0.0;
    }
    let total = min_capped_cost(truths, estimates, cap, cap * cap, cap * cap);
    libm::sqrt(total / n as f64)
}

fn positions(states: &[Vector]) -> Vec<(f64, f64)> {
    let [ix, iy] = POSITION_INDICES;
    states.iter().map(|x| (x[ix], x[iy])).collect()
}

/// Metrics for one step.
pub fn evaluate_step(
    step: usize,
    truth: &[Vector],
    particles: &[GaussianParticle],
    config: &MetricsConfig,
) -> StepMetrics {
    let truths: Vec<(f64, f64)> = positions(truth)
        .into_iter()
        .filter(|(x, y)| config.region.is_none_or(|r| r.contains_half_open(*x, *y)))
        .collect();
    let [ix, iy] = POSITION_INDICES;
    let estimates: Vec<(f64, f64)> = particles
        .iter()
        .filter(|p| p.weight >= config.extraction_threshold)
        .map(|p| (p.state.mean[ix], p.state.mean[iy]))
        .collect();
    let cardinality_estimate: f64 = particles.iter().map(|p| p.weight).sum();
    StepMetrics {
        step,
        rmse: assignment_rmse(&truths, &estimates, config.cap),
        cardinality_estimate,
        cardinality_error: (cardinality_estimate - truths.len() as f64).abs(),
        ospa: config.ospa.then(|| ospa(&truths, &estimates, config.cap)),
    }
}

/// Metrics for every record of `log` against the aligned `truth`.
pub fn evaluate_metrics(
    truth: &[Vec<Vector>],
    log: &TrackingLog,
    config: &MetricsConfig,
) -> Result<MetricReport> {
    if truth.len() != log.records.len() {
        return Err(Error::DimensionMismatch {
            context: "evaluate_metrics step count",
            expected: log.records.len(),
            actual: truth.len(),
        });
    }
    Ok(MetricReport {
        steps: truth
            .iter()
            .zip(&log.records)
            .map(|(t, r)| evaluate_step(r.step, t, &r.particles, config))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianState;
    use crate::Matrix;
    use alloc::vec;
    use nalgebra::dvector;

    fn est(w: f64, x: f64, y: f64) -> GaussianParticle {
        GaussianParticle::new(
            w,
            GaussianState::new(dvector![x, 0.0, y, 0.0], Matrix::identity(4, 4)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_estimates() {
        let truth = vec![dvector![1.0, 0.0, 2.0, 0.0], dvector![5.0, 0.0, 5.0, 0.0]];
        let ps = vec![est(1.0, 5.0, 5.0), est(1.0, 1.0, 2.0)];
        let m = evaluate_step(1, &truth, &ps, &MetricsConfig::default());
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.cardinality_error, 0.0);
        assert_eq!(m.ospa, None);
    }

    #[test]
    fn all_missed() {
        let truth = vec![dvector![1.0, 0.0, 2.0, 0.0], dvector![5.0, 0.0, 5.0, 0.0]];
        let m = evaluate_step(1, &truth, &[], &MetricsConfig::default());
        assert_eq!(m.rmse, 5.0);
        assert_eq!(m.cardinality_error, 2.0);
        // light particles are not extracted
        let m = evaluate_step(1, &truth, &[est(0.4, 1.0, 2.0)], &MetricsConfig::default());
        assert_eq!(m.rmse, 5.0);
        assert!((m.cardinality_error - 1.6).abs() < 1e-15);
    }

    #[test]
    fn cheaper_assignment_is_chosen() {
        let truths = [(0.0, 0.0), (10.0, 0.0)];
        let estimates = [(10.0, 0.0), (3.0, 4.0)];
        let rmse = assignment_rmse(&truths, &estimates, 5.0);
        assert!((rmse - libm::sqrt(12.5)).abs() < 1e-12);
    }

    #[test]
    fn region_filters_truths() {
        let truth = vec![dvector![1.0, 0.0, 2.0, 0.0], dvector![50.0, 0.0, 5.0, 0.0]];
        let config = MetricsConfig {
            region: Some(Rect::new(0.0, 0.0, 12.0, 12.0).unwrap()),
            ..MetricsConfig::default()
        };
        let m = evaluate_step(1, &truth, &[est(1.0, 1.0, 2.0)], &config);
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.cardinality_error, 0.0);
    }

    #[test]
    fn ospa_penalizes_false_tracks() {
        let truths = [(0.0, 0.0)];
        let estimates = [(0.0, 0.0), (9.0, 9.0)];
        assert_eq!(assignment_rmse(&truths, &estimates, 5.0), 0.0);
        assert!((ospa(&truths, &estimates, 5.0) - libm::sqrt(12.5)).abs() < 1e-12);
        assert_eq!(ospa(&[], &[], 5.0), 0.0);
        assert_eq!(ospa(&[], &estimates, 5.0), 5.0);
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = hungarian(&cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
        assert!(hungarian(&[]).is_empty());
    }

    #[test]
    fn window_means() {
        let report = MetricReport {
            steps: (1..=4)
                .map(|k| StepMetrics {
                    step: k,
                    rmse: k as f64,
                    cardinality_estimate: 0.0,
                    cardinality_error: 2.0 * k as f64,
                    ospa: None,
                })
                .collect(),
        };
        assert_eq!(report.window_means(1, 2), Some((1.5, 3.0)));
        assert_eq!(report.window_means(9, 10), None);
        assert_eq!(report.mean_rmse(), 2.5);
    }
}
