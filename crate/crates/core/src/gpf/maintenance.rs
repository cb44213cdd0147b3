//! Particle set upkeep: merging near-duplicates, births and pruning.

use alloc::vec::Vec;

use crate::gaussian::{cholesky_jittered, merge_particles, GaussianParticle, MergeCovariance};
use crate::Matrix;

/// Squared Mahalanobis distance between two particle means over the given
/// components, with `M = (Σ_a + Σ_b)⁻¹`.
pub fn merge_distance(a: &GaussianParticle, b: &GaussianParticle, components: &[usize]) -> f64 {
    let ga = a.state.marginal(components);
    let gb = b.state.marginal(components);
    let diff = &ga.mean - &gb.mean;
    if diff.iter().all(|d| *d == 0.0) {
        return 0.0;
    }
    let sum: Matrix = &ga.cov + &gb.cov;
    match cholesky_jittered(&sum, "merge distance") {
        Ok(chol) => diff.dot(&chol.solve(&diff)).max(0.0),
        Err(_) => f64::INFINITY,
    }
}

/// Greedy merging: while some pair is closer than `d_thresh`, merge the
/// closest pair. The merged particle takes the slot of the lower index and
/// surviving particles keep their relative order.
pub fn merge_close_particles(
    particles: Vec<GaussianParticle>,
    d_thresh: f64,
    components: &[usize],
    rule: MergeCovariance,
) -> Vec<GaussianParticle> {
    let n = particles.len();
    if n < 2 {
        return particles;
    }
    let mut slots: Vec<Option<GaussianParticle>> = particles.into_iter().map(Some).collect();
    let mut dist = alloc::vec![f64::INFINITY; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            dist[i * n + j] = pair_distance(&slots, i, j, components);
        }
    }
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if slots[i].is_none() {
                continue;
            }
            for j in (i + 1)..n {
                if slots[j].is_none() {
                    continue;
                }
                let d = dist[i * n + j];
                if d < d_thresh && best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((i, j, d));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        let a = slots[i].take().expect("live slot");
        let b = slots[j].take().expect("live slot");
        let merged = match merge_particles(&[a.clone(), b.clone()], rule) {
            Ok(m) => m,
            // both weights zero: keep the first
            Err(_) => a,
        };
        slots[i] = Some(merged);
        for k in 0..n {
            if k == i || slots[k].is_none() {
                continue;
            }
            let (lo, hi) = if k < i { (k, i) } else { (i, k) };
            dist[lo * n + hi] = pair_distance(&slots, lo, hi, components);
        }
    }
    slots.into_iter().flatten().collect()
}

fn pair_distance(
    slots: &[Option<GaussianParticle>],
    i: usize,
    j: usize,
    components: &[usize],
) -> f64 {
    match (&slots[i], &slots[j]) {
        (Some(a), Some(b)) => merge_distance(a, b, components),
        _ => f64::INFINITY,
    }
}

/// `Σ w_i`, the expected number of targets.
pub fn estimate_cardinality(particles: &[GaussianParticle]) -> f64 {
    particles.iter().map(|p| p.weight).sum()
}

/// Appends `births`, drops particles lighter than `w_prune`, then keeps the
/// `n_max` heaviest. Survivors keep their relative order.
pub fn birth_and_prune(
    mut particles: Vec<GaussianParticle>,
    births: Vec<GaussianParticle>,
    w_prune: f64,
    n_max: usize,
) -> Vec<GaussianParticle> {
    particles.extend(births);
    particles.retain(|p| p.weight >= w_prune);
    if particles.len() > n_max {
        let mut order: Vec<usize> = (0..particles.len()).collect();
        // stable: ties keep the earlier particle
        order.sort_by(|&a, &b| particles[b].weight.total_cmp(&particles[a].weight));
        let mut keep = alloc::vec![false; particles.len()];
        for &i in order.iter().take(n_max) {
            keep[i] = true;
        }
        let mut idx = 0;
        particles.retain(|_| {
            let k = keep[idx];
            idx += 1;
            k
        });
    }
    particles
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianState;
    use alloc::vec;
    use nalgebra::{dmatrix, dvector};

    fn p2(w: f64, x: f64, y: f64) -> GaussianParticle {
        GaussianParticle::new(
            w,
            GaussianState::new(dvector![x, 0.0, y, 0.0], Matrix::identity(4, 4) * 0.1).unwrap(),
        )
        .unwrap()
    }

    const POS: [usize; 2] = [0, 2];

    #[test]
    fn far_particles_untouched() {
        let ps = vec![p2(0.5, 0.0, 0.0), p2(0.5, 5.0, 0.0), p2(0.5, 0.0, 5.0)];
        let out = merge_close_particles(ps.clone(), 1.0, &POS, MergeCovariance::MomentMatch);
        assert_eq!(out, ps);
    }

    #[test]
    fn coincident_pair_merges() {
        let ps = vec![p2(0.3, 1.0, 1.0), p2(0.4, 1.0, 1.0)];
        let out = merge_close_particles(ps, 1.0, &POS, MergeCovariance::MomentMatch);
        assert_eq!(out.len(), 1);
        assert!((out[0].weight - 0.7).abs() < 1e-15);
    }

    #[test]
    fn three_coincident_merge_to_one() {
        let mut ps = vec![p2(0.5, 2.0, 3.0), p2(0.4, 2.0, 3.0), p2(0.6, 2.0, 3.0)];
        // distinct velocities so the merged mean is informative
        ps[0].state.mean[1] = 1.0;
        ps[1].state.mean[1] = -2.0;
        ps[2].state.mean[1] = 0.5;
        let out = merge_close_particles(ps.clone(), 1.0, &POS, MergeCovariance::MomentMatch);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].weight, 1.0);
        let direct = crate::gaussian::mixture_moments(
            &ps.iter().map(|p| (p.weight, &p.state)).collect::<Vec<_>>(),
        )
        .unwrap();
        assert!((&out[0].state.mean - &direct.mean).norm() < 1e-9);
    }

    #[test]
    fn closest_pair_merges_first() {
        // a-b at distance 0.2², b-c at 0.3²; with a loose threshold a and b merge first
        let ps = vec![p2(0.2, 0.0, 0.0), p2(0.2, 0.2, 0.0), p2(0.2, 0.5, 0.0)];
        let d_ab = merge_distance(&ps[0], &ps[1], &POS);
        let d_bc = merge_distance(&ps[1], &ps[2], &POS);
        assert!(d_ab < d_bc);
        let out = merge_close_particles(ps, d_bc * 0.99, &POS, MergeCovariance::MomentMatch);
        assert_eq!(out.len(), 2);
        assert!((out[0].state.mean[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn merge_distance_uses_summed_covariance() {
        let a = p2(0.5, 0.0, 0.0);
        let b = p2(0.5, 0.6, 0.8);
        // |d|² = 1, M = (0.2 I)⁻¹
        assert!((merge_distance(&a, &b, &POS) - 5.0).abs() < 1e-12);
        let direct = crate::gaussian::mahalanobis_sq(
            &dvector![0.0, 0.0],
            &dvector![0.6, 0.8],
            &(dmatrix![0.2, 0.0; 0.0, 0.2].try_inverse().unwrap()),
        )
        .unwrap();
        assert!((merge_distance(&a, &b, &POS) - direct).abs() < 1e-12);
    }

    #[test]
    fn cardinality_sums_weights() {
        assert_eq!(estimate_cardinality(&[]), 0.0);
        let ps = vec![p2(1.0, 0.0, 0.0), p2(1.0, 5.0, 0.0), p2(1.0, 9.0, 0.0)];
        assert_eq!(estimate_cardinality(&ps), 3.0);
        assert_eq!(estimate_cardinality(&[p2(0.5, 0.0, 0.0), p2(0.5, 1.0, 0.0)]), 1.0);
    }

    #[test]
    fn pruning_rules() {
        let ps = vec![p2(0.5, 0.0, 0.0), p2(0.2, 1.0, 0.0)];
        assert_eq!(birth_and_prune(ps.clone(), vec![], 0.01, 10), ps);

        let out = birth_and_prune(vec![p2(0.0, 0.0, 0.0), p2(0.3, 1.0, 0.0)], vec![], 0.01, 10);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].weight, 0.3);

        let ps: Vec<_> = [0.1, 0.9, 0.3, 0.7, 0.5]
            .iter()
            .enumerate()
            .map(|(i, w)| p2(*w, i as f64, 0.0))
            .collect();
        let out = birth_and_prune(ps, vec![], 0.0, 3);
        let weights: Vec<f64> = out.iter().map(|p| p.weight).collect();
        assert_eq!(weights, vec![0.9, 0.7, 0.5]);

        let out = birth_and_prune(vec![], vec![p2(0.1, 3.0, 3.0)], 0.01, 10);
        assert_eq!(out.len(), 1);
    }
}
