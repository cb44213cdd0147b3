//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit status if
//! any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mtt::config::load_config;
use mtt_core::gaussian::{is_symmetric_psd, GaussianParticle, GaussianState};
use mtt_core::gpf::{
    conditional_kf_update, enumerate_combinations, gpf_step, GpfConfig, GpfParticleSet, GpfSensor, Measurement,
};
use mtt_core::kalman::{kf_predict, kf_update, update, LinearGaussianModel};
use mtt_core::pf::{effective_sample_size, pf_step, PfConfig, PointParticleSet, Resampling};
use mtt_core::rand::{Rng, SeedableRng};
use mtt_core::sensors::{detection_prob, grid_measure, Grid, GridSensorModel, MeanSensorModel};
use mtt_core::sim::{assignment_rmse, constant_velocity, run_experiment, FilterChoice, SensorChoice};
use mtt_core::{Matrix, Rect, Vector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn vector(v: &[f64]) -> Vector {
    Vector::from_column_slice(v)
}

fn scalar(x: f64) -> Matrix {
    Matrix::from_element(1, 1, x)
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + Matrix::identity(n, n) * 0.1
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn gpf_reduces_to_kalman() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let f = constant_velocity(1.0);
    let q = random_psd(&mut rng, 4) * 0.1;
    let r = random_psd(&mut rng, 2);
    let sensor = MeanSensorModel::selecting(r.clone(), 4, &[0, 2]).unwrap();
    let h = sensor.projection.clone();
    let model = LinearGaussianModel::new(f.clone(), q.clone(), h.clone(), r.clone()).unwrap();
    let mut config = GpfConfig::new(f.clone(), q.clone());
    config.w_prune = 0.0;

    let start = GaussianState::new(random_vector(&mut rng, 4), random_psd(&mut rng, 4)).unwrap();
    let mut set = GpfParticleSet::new(vec![GaussianParticle::new(1.0, start.clone()).unwrap()]);
    let mut kf = start.clone();
    let mut textbook = start;
    let (mut worst, mut worst_textbook) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let z = random_vector(&mut rng, 2) * 5.0;
        kf = kf_update(&kf_predict(&kf, &model, &Vector::zeros(0)).unwrap(), &model, &z)
            .unwrap()
            .posterior;
        // independent predict/update with an explicit inverse
        let pm = &f * &textbook.mean;
        let pc = &f * &textbook.cov * f.transpose() + &q;
        let s = &h * &pc * h.transpose() + &r;
        let k = &pc * h.transpose() * s.try_inverse().unwrap();
        let mean = &pm + &k * (&z - &h * &pm);
        let cov = (Matrix::identity(4, 4) - &k * &h) * &pc;
        textbook = GaussianState::new(mean, (&cov + cov.transpose()) * 0.5).unwrap();
        set = gpf_step(&set, &Measurement::Vector(z), GpfSensor::Mean(&sensor), &config)
            .unwrap()
            .set;
        if set.len() != 1 || set.particles[0].weight != 1.0 {
            return outcome(false, format!("set changed shape: {} particles", set.len()));
        }
        let p = &set.particles[0].state;
        let err = |other: &GaussianState| {
            let mean_err = (&p.mean - &other.mean).norm() / other.mean.norm().max(f64::MIN_POSITIVE);
            mean_err.max(rel_err(&p.cov, &other.cov))
        };
        worst = worst.max(err(&kf));
        worst_textbook = worst_textbook.max(err(&textbook));
    }
    outcome(
        worst <= 1e-10 && worst_textbook <= 1e-10,
        format!("max relative error over 100 steps {worst:.2e} vs kalman module, {worst_textbook:.2e} vs independent oracle"),
    )
}

fn closed_form_gain(covs: &[Matrix], j: usize, p: &Matrix, r: &Matrix) -> Matrix {
    let m = covs.len() as f64;
    let total = covs.iter().fold(Matrix::zeros(p.ncols(), p.ncols()), |acc, c| acc + c);
    let s = r + p * total * p.transpose() / (m * m);
    &covs[j] * p.transpose() * s.try_inverse().expect("S invertible") / m
}

fn coupled_gain_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let n = [1, 2, 4][k % 3];
        let s = 1 + (k / 3) % 3;
        let r_dim = n.min(2);
        let particles: Vec<GaussianParticle> = (0..s)
            .map(|_| {
                GaussianParticle::new(
                    0.5,
                    GaussianState::new(random_vector(&mut rng, n), random_psd(&mut rng, n)).unwrap(),
                )
                .unwrap()
            })
            .collect();
        let p = Matrix::from_fn(r_dim, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = random_psd(&mut rng, r_dim);
        let sensor = MeanSensorModel::new(r.clone(), p.clone()).unwrap();
        let covs: Vec<Matrix> = particles.iter().map(|q| q.state.cov.clone()).collect();
        let bits = vec![true; s];
        for j in 0..s {
            let z = random_vector(&mut rng, r_dim);
            let gain = conditional_kf_update(j, &bits, &particles, &z, &sensor).unwrap().gain;
            worst = worst.max(rel_err(&gain, &closed_form_gain(&covs, j, &p, &r)));
        }
    }

    let pair: Vec<GaussianParticle> = [0.0, 2.0]
        .iter()
        .map(|mu| GaussianParticle::new(0.9, GaussianState::new(vector(&[*mu]), scalar(1.0)).unwrap()).unwrap())
        .collect();
    let sensor = MeanSensorModel::new(scalar(1.0), scalar(1.0)).unwrap();
    let upd = conditional_kf_update(0, &[true, true], &pair, &vector(&[1.0]), &sensor).unwrap();
    let k = upd.gain[(0, 0)];
    let mean = upd.posterior.mean[0];
    let var = upd.posterior.cov[(0, 0)];
    let example = (k - 1.0 / 3.0).abs() <= 1e-15 && mean.abs() <= 1e-15 && (var - 5.0 / 6.0).abs() <= 1e-15;
    outcome(
        worst <= 1e-10 && example,
        format!("max relative error {worst:.2e} over 200 instances; example K = {k}, mean = {mean}, var = {var}"),
    )
}

/// Ten PF runs (different seeds) on one measurement sequence. The Monte
/// Carlo standard error of a run at a step is the RMS deviation of the other
/// nine runs from the Kalman mean.
fn particle_filter_matches_kalman() -> Outcome {
    let model = LinearGaussianModel::new(scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0)).unwrap();
    let noise = Normal::new(0.0, 1.0).unwrap();
    let (n, steps, seeds) = (10_000, 50, 10usize);
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut x = 0.0;
    let zs: Vec<Vector> = (0..steps)
        .map(|_| {
            x += noise.sample(&mut rng);
            vector(&[x + noise.sample(&mut rng)])
        })
        .collect();
    let prior = GaussianState::new(vector(&[0.0]), scalar(1.0)).unwrap();
    let mut kf = prior.clone();
    let kf_means: Vec<f64> = zs
        .iter()
        .map(|z| {
            kf = kf_update(&kf_predict(&kf, &model, &Vector::zeros(0)).unwrap(), &model, z)
                .unwrap()
                .posterior;
            kf.mean[0]
        })
        .collect();
    let errors: Vec<Vec<f64>> = (0..seeds)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed as u64);
            let mut set = PointParticleSet::sample_from(&prior, n, &mut rng).unwrap();
            zs.iter()
                .zip(&kf_means)
                .map(|(z, kf_mean)| {
                    let lik = |s: &Vector, z: &Vector| (-0.5 * (s[0] - z[0]).powi(2)).exp();
                    set = pf_step(&set, &model, lik, z, &PfConfig::default(), &mut rng).unwrap().set;
                    set.moments().mean[0] - kf_mean
                })
                .collect()
        })
        .collect();
    let mut within = 0;
    for r in 0..seeds {
        for t in 0..steps {
            let others = (0..seeds).filter(|o| *o != r);
            let se = (others.map(|o| errors[o][t].powi(2)).sum::<f64>() / (seeds - 1) as f64).sqrt();
            if errors[r][t].abs() <= 3.0 * se {
                within += 1;
            }
        }
    }
    let total = seeds * steps;
    let frac = within as f64 / total as f64;
    outcome(frac >= 0.95, format!("{within}/{total} (step, seed) pairs within 3 SE ({:.1}%)", 100.0 * frac))
}

fn grid_detection_statistics() -> Outcome {
    let grid = Grid::new(Rect::new(0.0, 0.0, 12.0, 12.0).unwrap(), 12, 12).unwrap();
    let model = GridSensorModel::new(grid, 0.9, 3.0, 144).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let trials = 100_000;
    let mut pass = true;
    let mut detail = Vec::new();
    for t in 0..3usize {
        let expected = detection_prob(t, 0.9, 3.0);
        let truth = vec![vector(&[0.5, 0.0, 0.5, 0.0]); t];
        let hits: usize = (0..trials)
            .map(|_| grid_measure(&truth, &[0], &model, &mut rng).unwrap()[0].detected as usize)
            .sum();
        let freq = hits as f64 / trials as f64;
        let sigma = (expected * (1.0 - expected) / trials as f64).sqrt();
        let z = (freq - expected) / sigma;
        pass &= z.abs() <= 3.0;
        detail.push(format!("T={t}: {freq:.4} vs {expected:.4} ({z:+.2}σ)"));
    }
    outcome(pass, detail.join(", "))
}

fn errors_decrease_over_time() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/grid_sensor.cfg");
    let config = load_config(&path).expect("grid_sensor.cfg loads");
    let mut experiment = config.experiment.clone();
    let (mut d_rmse, mut d_card) = (Vec::new(), Vec::new());
    for seed in 1..=20u64 {
        experiment.scenario.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log = run_experiment(&experiment, FilterChoice::Gpf, SensorChoice::Grid, &mut rng).unwrap();
        let (r0, c0) = log.metrics.window_means(1, 10).unwrap();
        let (r1, c1) = log.metrics.window_means(91, 100).unwrap();
        d_rmse.push(r0 - r1);
        d_card.push(c0 - c1);
    }
    let t_crit = StudentsT::new(0.0, 1.0, 19.0).unwrap().inverse_cdf(0.95);
    let paired_t = |d: &[f64]| {
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, mean / (var / n).sqrt())
    };
    let (m_rmse, t_rmse) = paired_t(&d_rmse);
    let (m_card, t_card) = paired_t(&d_card);
    outcome(
        t_rmse > t_crit && t_card > t_crit,
        format!(
            "first10 - last10 over 20 seeds: rmse {m_rmse:.3} (t = {t_rmse:.2}), card_err {m_card:.3} (t = {t_card:.2}); one-sided t(0.95, 19) = {t_crit:.3}"
        ),
    )
}

fn invariant_suite() -> Outcome {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok && failures.len() < 5 {
            failures.push(what.to_string());
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut checks = 0usize;

    // point particle filter: normalized weights, ESS bounds, ESS after resampling
    let model = LinearGaussianModel::new(scalar(1.0), scalar(0.5), scalar(1.0), scalar(1.0)).unwrap();
    for trial in 0..200 {
        let n = rng.random_range(1..500);
        let prior = GaussianState::new(vector(&[rng.random_range(-5.0..5.0)]), scalar(2.0)).unwrap();
        let mut set = PointParticleSet::sample_from(&prior, n, &mut rng).unwrap();
        let config = PfConfig {
            resampling: if trial % 2 == 0 { Resampling::Multinomial } else { Resampling::Systematic },
            ..PfConfig::default()
        };
        let sharp = rng.random_range(0.1..20.0);
        for _ in 0..5 {
            let z = vector(&[rng.random_range(-5.0..5.0)]);
            let lik = |s: &Vector, z: &Vector| (-0.5 * sharp * (s[0] - z[0]).powi(2)).exp();
            let out = pf_step(&set, &model, lik, &z, &config, &mut rng).unwrap();
            let sum: f64 = out.set.weights().iter().sum();
            check((sum - 1.0).abs() <= 1e-9, "pf weights normalized");
            check(out.ess >= 1.0 && out.ess <= n as f64, "pf ESS in [1, N]");
            let ess_now = effective_sample_size(out.set.weights()).unwrap();
            check(ess_now >= 1.0 && ess_now <= n as f64, "pf ESS in [1, N]");
            if out.resampled {
                check(ess_now == n as f64, "ESS = N after resampling");
            }
            checks += 4;
            set = out.set;
        }
    }

    // Kalman posteriors stay symmetric PSD
    for _ in 0..200 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=n);
        let prior = GaussianState::new(random_vector(&mut rng, n), random_psd(&mut rng, n)).unwrap();
        let h = Matrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = random_psd(&mut rng, m);
        let post = update(&prior, &h, &r, &random_vector(&mut rng, m)).unwrap().posterior;
        check(is_symmetric_psd(&post.cov, 1e-9), "kalman covariance PSD");
        checks += 1;
    }

    // enumeration priors stay above epsilon
    for _ in 0..200 {
        let s = rng.random_range(0..10);
        let eps = 10f64.powf(rng.random_range(-6.0..-1.0));
        let ps: Vec<GaussianParticle> = (0..s)
            .map(|_| {
                GaussianParticle::new(rng.random(), GaussianState::new(vector(&[0.0]), scalar(1.0)).unwrap()).unwrap()
            })
            .collect();
        let combos = enumerate_combinations(&ps, eps, 20).unwrap();
        check(combos.iter().all(|c| c.prior > eps), "enumeration priors > epsilon");
        check(combos.len() <= 1 << s, "at most 2^S combinations");
        checks += 2;
    }

    // whole GPF runs: combination weights normalized, particle weights and
    // covariances valid, cardinality within [0, particle count]
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (file, sensor) in [("mean_sensor.cfg", SensorChoice::Mean), ("grid_sensor.cfg", SensorChoice::Grid)] {
        let config = load_config(&path.join(file)).unwrap();
        for seed in 0..5u64 {
            let mut experiment = config.experiment.clone();
            experiment.scenario.seed = seed;
            let gpf = experiment.gpf_config();
            let mut set = GpfParticleSet::default();
            if sensor == SensorChoice::Mean {
                let log = run_experiment(&experiment, FilterChoice::Gpf, sensor, &mut ChaCha8Rng::seed_from_u64(seed))
                    .unwrap();
                set.particles = log.records[0].particles.clone();
                let model = experiment.mean_model().unwrap();
                for record in &log.records[1..] {
                    let out = gpf_step(&set, &record.measurement, GpfSensor::Mean(&model), &gpf).unwrap();
                    if !out.combination_weights.is_empty() {
                        let sum: f64 = out.combination_weights.iter().sum();
                        check((sum - 1.0).abs() <= 1e-9, "combination weights normalized");
                        checks += 1;
                    }
                    set = out.set;
                }
            }
            let log = run_experiment(&experiment, FilterChoice::Gpf, sensor, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for record in &log.records {
                let card: f64 = record.particles.iter().map(|p| p.weight).sum();
                check(card >= 0.0 && card <= record.particles.len() as f64 + 1e-12, "cardinality in [0, count]");
                for p in &record.particles {
                    check((0.0..=1.0).contains(&p.weight), "existence weight in [0, 1]");
                    check(is_symmetric_psd(&p.state.cov, 1e-9), "gpf covariance PSD");
                    checks += 2;
                }
                checks += 1;
            }
        }
    }
    let pass = failures.is_empty();
    let detail = if pass {
        format!("{checks} checks")
    } else {
        format!("violated: {}", failures.join("; "))
    };
    outcome(pass, detail)
}

fn track_is_deterministic() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/grid_sensor.cfg");
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_mtt"))
            .args(["track", "--config", config.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()])
            .output()
            .expect("mtt runs");
        if !status.status.success() {
            return outcome(false, String::from_utf8_lossy(&status.stderr).into_owned());
        }
        outputs.push(std::fs::read(out.join("metrics.csv")).unwrap());
    }
    let same = outputs[0] == outputs[1];
    outcome(same, format!("two runs, {} bytes each, identical: {same}", outputs[0].len()))
}

fn brute_force_rmse(truths: &[(f64, f64)], estimates: &[(f64, f64)], cap: f64) -> f64 {
    if truths.is_empty() {
        return 0.0;
    }
    let n = truths.len().max(estimates.len());
    let cost = |i: usize, j: usize| match (truths.get(i), estimates.get(j)) {
        (Some(t), Some(e)) => ((t.0 - e.0).powi(2) + (t.1 - e.1).powi(2)).min(cap * cap),
        (Some(_), None) => cap * cap,
        _ => 0.0,
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm over all n! assignments
    let mut c = vec![0usize; n];
    let total = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| cost(i, j)).sum::<f64>();
    best = best.min(total(&perm));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    (best / truths.len() as f64).sqrt()
}

fn rmse_matches_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let nt = rng.random_range(0..=6);
        let ne = rng.random_range(0..=6);
        let mut point = || (rng.random_range(0.0..12.0), rng.random_range(0.0..12.0));
        let truths: Vec<_> = (0..nt).map(|_| point()).collect();
        let estimates: Vec<_> = (0..ne).map(|_| point()).collect();
        let got = assignment_rmse(&truths, &estimates, 5.0);
        let want = brute_force_rmse(&truths, &estimates, 5.0);
        worst = worst.max((got - want).abs() / want.max(1.0));
    }
    outcome(worst <= 1e-12, format!("max relative difference {worst:.1e} over 100 instances"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("AC1 GPF reduces to the Kalman filter", gpf_reduces_to_kalman, Duration::from_secs(5)),
        ("AC2 coupled gain equals the closed form", coupled_gain_closed_form, Duration::from_secs(5)),
        ("AC3 particle filter tracks the Kalman mean", particle_filter_matches_kalman, Duration::from_secs(30)),
        ("AC4 grid detection frequencies", grid_detection_statistics, Duration::from_secs(10)),
        ("AC5 errors decrease with more measurements", errors_decrease_over_time, Duration::from_secs(120)),
        ("AC6 invariant suite", invariant_suite, Duration::from_secs(30)),
        ("AC7 track output is deterministic", track_is_deterministic, Duration::from_secs(10)),
        ("AC8 assignment RMSE matches brute force", rmse_matches_brute_force, Duration::from_secs(5)),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= limit;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} [{:.2} s, limit {} s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
