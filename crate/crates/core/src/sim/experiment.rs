//! End-to-end runs: truth step, sensor measurement, filter step, log.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian::{cholesky_jittered, log_pdf, GaussianParticle, GaussianState, MergeCovariance};
use crate::gpf::{gpf_step, FovRegion, GpfConfig, GpfParticleSet, GpfSensor, Measurement};
use crate::kalman::{kf_predict, kf_update, LinearGaussianModel};
use crate::pf::{pf_step, PfConfig, PointParticleSet, Resampling};
use crate::sensors::{
    grid_measure, mean_sensor_measure, CellSelection, CellSelector, Grid, GridSensorModel,
    MeanSensorModel, POSITION_INDICES,
};
use crate::{Matrix, Vector};

use super::metrics::{evaluate_metrics, MetricReport, MetricsConfig};
use super::scenario::{generate_truth, ScenarioConfig, Truth};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterChoice {
    Gpf,
    ClassicalPf,
    Kalman,
}

impl FilterChoice {
    pub fn name(&self) -> &'static str {
        match self {
            FilterChoice::Gpf => "gpf",
            FilterChoice::ClassicalPf => "pf",
            FilterChoice::Kalman => "kf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorChoice {
    Mean,
    Grid,
}

impl SensorChoice {
    pub fn name(&self) -> &'static str {
        match self {
            SensorChoice::Mean => "mean",
            SensorChoice::Grid => "grid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    /// Mean sensor noise variances for `(x, y)`.
    pub r_diag: [f64; 2],
    pub p_d: f64,
    pub snr: f64,
    pub m_cells: usize,
    pub rows: usize,
    pub cols: usize,
    pub selection: CellSelection,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            r_diag: [1.0, 1.0],
            p_d: 0.9,
            snr: 3.0,
            m_cells: 144,
            rows: 12,
            cols: 12,
            selection: CellSelection::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpfParams {
    pub epsilon: f64,
    pub s_max: usize,
    pub d_thresh: f64,
    pub w_prune: f64,
    pub n_max: usize,
    pub w_birth: f64,
    pub merge_cov: MergeCovariance,
    /// Defaults to one over the workspace area.
    pub clutter_density: Option<f64>,
    pub fov: FovRegion,
    pub existence_ceiling: f64,
}

impl Default for GpfParams {
    fn default() -> Self {
        let base = GpfConfig::new(Matrix::identity(4, 4), Matrix::zeros(4, 4));
        Self {
            epsilon: base.epsilon,
            s_max: base.s_max,
            d_thresh: base.d_thresh,
            w_prune: base.w_prune,
            n_max: base.n_max,
            w_birth: base.w_birth,
            merge_cov: base.merge_cov,
            clutter_density: None,
            fov: FovRegion::Full,
            existence_ceiling: base.existence_ceiling,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfParams {
    pub n_particles: usize,
    pub resampling: Resampling,
}

impl Default for PfParams {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            resampling: Resampling::Multinomial,
        }
    }
}

/// Prior handed to the filters that start from the initial truth: the Kalman
/// and particle filters, and the Gaussian particle filter under the mean
/// sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitParams {
    pub weight: f64,
    pub cov_diag: [f64; 4],
}

impl Default for InitParams {
    fn default() -> Self {
        Self {
            weight: 0.9,
            cov_diag: [1.0, 0.1, 1.0, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub sensor: SensorConfig,
    pub gpf: GpfParams,
    pub pf: PfParams,
    pub init: InitParams,
    pub metrics: MetricsConfig,
}

/// What the filter believed after one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: usize,
    pub truth: Vec<Vector>,
    pub measurement: Measurement,
    pub particles: Vec<GaussianParticle>,
    pub cardinality: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingLog {
    pub filter: FilterChoice,
    pub sensor: SensorChoice,
    pub records: Vec<StepRecord>,
    pub metrics: MetricReport,
}

impl TrackingLog {
    pub fn truth(&self) -> Truth {
        self.records.iter().map(|r| r.truth.clone()).collect()
    }
}

enum FilterState {
    Gpf(GpfParticleSet, GpfConfig),
    Pf(PointParticleSet, LinearGaussianModel),
    Kalman(GaussianState, LinearGaussianModel),
}

enum Sensor {
    Mean(MeanSensorModel),
    Grid(GridSensorModel, CellSelector),
}

fn unsupported(msg: &str) -> Error {
    Error::Unsupported(String::from(msg))
}

impl ExperimentConfig {
    /// Metrics configuration with the observable region filled in: the grid
    /// sensor can only ever see targets inside the workspace.
    pub fn effective_metrics(&self, sensor: SensorChoice) -> MetricsConfig {
        let mut m = self.metrics.clone();
        if sensor == SensorChoice::Grid && m.region.is_none() {
            m.region = Some(self.scenario.workspace);
        }
        m
    }

    pub fn grid_model(&self) -> Result<GridSensorModel> {
        let grid = Grid::new(self.scenario.workspace, self.sensor.rows, self.sensor.cols)?;
        GridSensorModel::new(grid, self.sensor.p_d, self.sensor.snr, self.sensor.m_cells)
    }

    pub fn mean_model(&self) -> Result<MeanSensorModel> {
        let r = Matrix::from_diagonal(&Vector::from_column_slice(&self.sensor.r_diag));
        MeanSensorModel::selecting(r, 4, &POSITION_INDICES)
    }

    pub fn gpf_config(&self) -> GpfConfig {
        let s = &self.scenario;
        let g = &self.gpf;
        let mut c = GpfConfig::new(s.transition(), s.process_noise());
        c.epsilon = g.epsilon;
        c.s_max = g.s_max;
        c.d_thresh = g.d_thresh;
        c.w_prune = g.w_prune;
        c.n_max = g.n_max;
        c.w_birth = g.w_birth;
        c.merge_cov = g.merge_cov;
        c.clutter_density = g.clutter_density.unwrap_or(1.0 / s.workspace.area());
        c.fov = g.fov.clone();
        c.existence_ceiling = g.existence_ceiling;
        c
    }

    fn initial_prior(&self, x: &Vector) -> Result<GaussianState> {
        GaussianState::from_diagonal(x.clone(), &self.init.cov_diag)
    }

    pub fn validate(&self, filter: FilterChoice, sensor: SensorChoice) -> Result<()> {
        self.scenario.validate()?;
        match (filter, sensor) {
            (FilterChoice::Kalman, SensorChoice::Grid) => {
                return Err(unsupported("the Kalman filter needs the mean sensor"))
            }
            (FilterChoice::Kalman | FilterChoice::ClassicalPf, _) if self.scenario.n_targets != 1 => {
                return Err(unsupported(
                    "the Kalman and particle filters track exactly one target",
                ))
            }
            (_, SensorChoice::Mean) if self.scenario.n_targets == 0 => {
                return Err(unsupported("the mean sensor needs at least one target"))
            }
            _ => {}
        }
        if filter == FilterChoice::ClassicalPf && self.pf.n_particles == 0 {
            return Err(Error::InvalidParameter {
                name: "pf.n_particles",
                reason: "at least one particle is required".into(),
            });
        }
        match sensor {
            SensorChoice::Mean => {
                self.mean_model()?;
            }
            SensorChoice::Grid => {
                self.grid_model()?;
            }
        }
        self.gpf_config().validate()
    }
}

/// Simulates `config.scenario`, measures it with the chosen sensor and runs
/// the chosen filter, logging one record per step.
///
/// Ground truth is drawn from `rng` first, so it depends only on the seed and
/// not on the filter.
pub fn run_experiment<R: Rng + ?Sized>(
    config: &ExperimentConfig,
    filter: FilterChoice,
    sensor_choice: SensorChoice,
    rng: &mut R,
) -> Result<TrackingLog> {
    config.validate(filter, sensor_choice)?;
    let truth = generate_truth(&config.scenario, rng)?;

    let mut sensor = match sensor_choice {
        SensorChoice::Mean => Sensor::Mean(config.mean_model()?),
        SensorChoice::Grid => Sensor::Grid(
            config.grid_model()?,
            CellSelector::new(config.sensor.selection.clone()),
        ),
    };
    let f = config.scenario.transition();
    let q = config.scenario.process_noise();
    let h = match &sensor {
        Sensor::Mean(m) => m.projection.clone(),
        Sensor::Grid(..) => MeanSensorModel::selecting(Matrix::zeros(2, 2), 4, &POSITION_INDICES)?.projection,
    };
    let r = Matrix::from_diagonal(&Vector::from_column_slice(&config.sensor.r_diag));
    let linear = LinearGaussianModel::new(f.clone(), q.clone(), h, r)?;

    let mut state = match filter {
        FilterChoice::Gpf => {
            let particles = match sensor_choice {
                SensorChoice::Grid => Vec::new(),
                SensorChoice::Mean => truth[0]
                    .iter()
                    .map(|x| GaussianParticle::new(config.init.weight, config.initial_prior(x)?))
                    .collect::<Result<Vec<_>>>()?,
            };
            FilterState::Gpf(GpfParticleSet::new(particles), config.gpf_config())
        }
        FilterChoice::ClassicalPf => {
            let prior = config.initial_prior(&truth[0][0])?;
            FilterState::Pf(
                PointParticleSet::sample_from(&prior, config.pf.n_particles, rng)?,
                linear,
            )
        }
        FilterChoice::Kalman => FilterState::Kalman(config.initial_prior(&truth[0][0])?, linear),
    };
    let pf_config = PfConfig {
        resampling: config.pf.resampling,
        ..PfConfig::default()
    };
    let mean_noise_ok = match &sensor {
        Sensor::Mean(m) => cholesky_jittered(&m.r, "mean sensor noise").is_ok(),
        Sensor::Grid(..) => true,
    };
    if filter == FilterChoice::ClassicalPf && !mean_noise_ok {
        return Err(unsupported(
            "the particle filter needs a positive definite mean sensor noise",
        ));
    }

    let mut records = Vec::with_capacity(truth.len());
    for (k, targets) in truth.iter().enumerate() {
        let measurement = match &mut sensor {
            Sensor::Mean(model) => Measurement::Vector(mean_sensor_measure(targets, model, rng)?),
            Sensor::Grid(model, selector) => {
                let cells = selector.select(model, rng)?;
                Measurement::Cells(grid_measure(targets, &cells, model, rng)?)
            }
        };

        let (particles, degenerate) = match &mut state {
            FilterState::Gpf(set, gpf_config) => {
                let gpf_sensor = match &sensor {
                    Sensor::Mean(m) => GpfSensor::Mean(m),
                    Sensor::Grid(m, _) => GpfSensor::Grid(m),
                };
                let out = gpf_step(set, &measurement, gpf_sensor, gpf_config)?;
                *set = out.set;
                (set.particles.clone(), out.degenerate)
            }
            FilterState::Pf(set, model) => {
                let out = match (&sensor, &measurement) {
                    (Sensor::Mean(m), Measurement::Vector(z)) => {
                        let noise = m.r.clone();
                        let proj = m.projection.clone();
                        pf_step(
                            set,
                            model,
                            |x: &Vector, z: &Vector| {
                                let g = GaussianState {
                                    mean: &proj * x,
                                    cov: noise.clone(),
                                };
                                log_pdf(&g, z).map(libm::exp).unwrap_or(0.0)
                            },
                            z,
                            &pf_config,
                            rng,
                        )?
                    }
                    (Sensor::Grid(m, _), Measurement::Cells(returns)) => pf_step(
                        set,
                        model,
                        |x: &Vector, returns: &Vec<crate::sensors::CellReturn>| {
                            let [ix, iy] = m.position;
                            let here = m.grid.cell_of(x[ix], x[iy]);
                            returns
                                .iter()
                                .map(|r| {
                                    let occupancy = usize::from(here == Some(r.cell));
                                    m.return_likelihood(r.detected, occupancy)
                                })
                                .product()
                        },
                        returns,
                        &pf_config,
                        rng,
                    )?,
                    _ => return Err(unsupported("measurement does not match the sensor")),
                };
                *set = out.set;
                (
                    alloc::vec![GaussianParticle {
                        weight: 1.0,
                        state: set.moments(),
                    }],
                    out.degenerate,
                )
            }
            FilterState::Kalman(belief, model) => {
                let Measurement::Vector(z) = &measurement else {
                    return Err(unsupported("the Kalman filter needs the mean sensor"));
                };
                let predicted = kf_predict(belief, model, &Vector::zeros(0))?;
                *belief = kf_update(&predicted, model, z)?.posterior;
                (
                    alloc::vec![GaussianParticle {
                        weight: 1.0,
                        state: belief.clone(),
                    }],
                    false,
                )
            }
        };

        let cardinality = particles.iter().map(|p| p.weight).sum();
        records.push(StepRecord {
            step: k + 1,
            truth: targets.clone(),
            measurement,
            particles,
            cardinality,
            degenerate,
        });
    }

    let mut log = TrackingLog {
        filter,
        sensor: sensor_choice,
        records,
        metrics: MetricReport::default(),
    };
    log.metrics = evaluate_metrics(&truth, &log, &config.effective_metrics(sensor_choice))?;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_target() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.scenario.n_targets = 1;
        c.scenario.n_steps = 20;
        c.scenario.initial_states = Some(vec![[3.0, 0.2, 4.0, -0.1]]);
        c
    }

    #[test]
    fn kalman_with_exact_observations() {
        let mut c = single_target();
        c.scenario.q_diag = [0.0; 4];
        c.sensor.r_diag = [0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let log = run_experiment(&c, FilterChoice::Kalman, SensorChoice::Mean, &mut rng).unwrap();
        for m in &log.metrics.steps {
            assert!(m.rmse < 1e-9, "rmse {}", m.rmse);
        }
    }

    #[test]
    fn one_step_one_record() {
        let mut c = single_target();
        c.scenario.n_steps = 1;
        for (f, s) in [
            (FilterChoice::Kalman, SensorChoice::Mean),
            (FilterChoice::ClassicalPf, SensorChoice::Grid),
            (FilterChoice::Gpf, SensorChoice::Grid),
            (FilterChoice::Gpf, SensorChoice::Mean),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let log = run_experiment(&c, f, s, &mut rng).unwrap();
            assert_eq!(log.records.len(), 1);
            assert_eq!(log.metrics.steps.len(), 1);
            assert_eq!(log.records[0].step, 1);
        }
    }

    #[test]
    fn unsupported_combinations() {
        let c = ExperimentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            run_experiment(&c, FilterChoice::Kalman, SensorChoice::Grid, &mut rng),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            run_experiment(&c, FilterChoice::Kalman, SensorChoice::Mean, &mut rng),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            run_experiment(&c, FilterChoice::ClassicalPf, SensorChoice::Mean, &mut rng),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn runs_are_deterministic() {
        let c = ExperimentConfig::default();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            run_experiment(&c, FilterChoice::Gpf, SensorChoice::Grid, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn pf_tracks_single_target_with_mean_sensor() {
        let mut c = single_target();
        c.scenario.q_diag = [0.01, 0.001, 0.01, 0.001];
        c.sensor.r_diag = [0.1, 0.1];
        c.pf.n_particles = 500;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let log = run_experiment(&c, FilterChoice::ClassicalPf, SensorChoice::Mean, &mut rng).unwrap();
        assert!(log.metrics.mean_rmse() < 1.0);
    }
}
