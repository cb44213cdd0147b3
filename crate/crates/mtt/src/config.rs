//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Every key is optional and unknown keys are rejected. Lists are comma
//! separated; lists of tuples separate the tuples with `;`.
//!
//! | key | default | range |
//! |---|---|---|
//! | `scenario.n_targets` | 3 | ≥ 0 |
//! | `scenario.n_steps` | 100 | ≥ 1 |
//! | `scenario.tau` | 1 | > 0 |
//! | `scenario.q_diag` | 20, 0.2, 20, 0.2 | four values ≥ 0 |
//! | `scenario.workspace` | 0, 0, 12, 12 | x_min, y_min, x_max, y_max |
//! | `scenario.seed` | 0 | u64 |
//! | `scenario.initial_states` | none | `none` or `x, vx, y, vy; ...` |
//! | `filter.kind` | gpf | gpf, pf, kf |
//! | `filter.init_weight` | 0.9 | (0, 1] |
//! | `filter.init_cov_diag` | 1, 0.1, 1, 0.1 | four values ≥ 0 |
//! | `sensor.kind` | mean | mean, grid |
//! | `sensor.r_diag` | 1, 1 | two values ≥ 0 |
//! | `sensor.p_d` | 0.9 | (0, 1) |
//! | `sensor.snr` | 3 | > 0 |
//! | `sensor.m_cells` | 144 | ≥ 1 |
//! | `sensor.rows`, `sensor.cols` | 12 | ≥ 1 |
//! | `sensor.selection` | random | random, round_robin, fixed |
//! | `sensor.cells` | empty | cell indices for `fixed` |
//! | `gpf.epsilon` | 0.001 | (0, 1) |
//! | `gpf.s_max` | 20 | ≥ 1 |
//! | `gpf.d_thresh` | 1 | > 0 |
//! | `gpf.w_prune` | 0.001 | [0, 1) |
//! | `gpf.n_max` | 200 | ≥ 1 |
//! | `gpf.w_birth` | 0.1 | (0, 1] |
//! | `gpf.merge_cov` | moment_match | moment_match, paper_sum |
//! | `gpf.clutter_density` | auto | `auto` (1 / workspace area) or > 0 |
//! | `gpf.fov` | full | `full` or `x_min, y_min, x_max, y_max; ...` |
//! | `gpf.existence_ceiling` | 0.999 | (0, 1] |
//! | `pf.n_particles` | 1000 | ≥ 1 |
//! | `pf.resampling` | multinomial | multinomial, systematic |
//! | `metrics.extraction_threshold` | 0.5 | [0, 1] |
//! | `metrics.cap` | 5 | > 0 |
//! | `metrics.ospa` | false | true, false |

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use mtt_core::gaussian::MergeCovariance;
use mtt_core::gpf::FovRegion;
use mtt_core::pf::Resampling;
use mtt_core::sensors::CellSelection;
use mtt_core::sim::{ExperimentConfig, FilterChoice, SensorChoice};
use mtt_core::Rect;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` is set twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`: expected {expected}")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
        expected: String,
    },
    #[error("inconsistent configuration: {0}")]
    Inconsistent(#[from] mtt_core::Error),
}

/// Everything a run needs besides the seed override.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub filter: FilterChoice,
    pub sensor: SensorChoice,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            filter: FilterChoice::Gpf,
            sensor: SensorChoice::Mean,
        }
    }
}

impl RunConfig {
    /// Checks the cross-key constraints (filter/sensor pairing, initial state
    /// count and so on).
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.experiment.validate(self.filter, self.sensor)?;
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// Parses a configuration and checks per-key ranges. Cross-key constraints
/// are left to [`RunConfig::validate`].
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut config = RunConfig::default();
    let mut seen = HashSet::new();
    // resolved once `sensor.selection` is known, whatever the key order
    let mut cells: Option<(usize, String, Vec<usize>)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: content.to_string(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                text: content.to_string(),
            });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
        let result = if key == "sensor.cells" {
            cell_list(value).map(|c| cells = Some((line, value.to_string(), c)))
        } else {
            apply(&mut config, key, value)
        };
        result.map_err(|e| match e {
            Apply::Unknown => ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            },
            Apply::Invalid(expected) => ConfigError::InvalidValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
                expected,
            },
        })?;
    }
    if let Some((line, value, list)) = cells {
        match &mut config.experiment.sensor.selection {
            CellSelection::Fixed(current) => *current = list,
            _ if list.is_empty() => {}
            _ => {
                return Err(ConfigError::InvalidValue {
                    line,
                    key: "sensor.cells".into(),
                    value,
                    expected: "no cells unless sensor.selection = fixed".into(),
                })
            }
        }
    }
    Ok(config)
}

enum Apply {
    Unknown,
    Invalid(String),
}

fn invalid(expected: impl Into<String>) -> Apply {
    Apply::Invalid(expected.into())
}

fn real(value: &str, expected: &str, ok: impl Fn(f64) -> bool) -> Result<f64, Apply> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() && ok(v) => Ok(v),
        _ => Err(invalid(expected)),
    }
}

fn count(value: &str, min: usize) -> Result<usize, Apply> {
    match value.parse::<usize>() {
        Ok(v) if v >= min => Ok(v),
        _ => Err(invalid(format!("an integer ≥ {min}"))),
    }
}

fn reals<const N: usize>(value: &str, expected: &str, ok: impl Fn(f64) -> bool) -> Result<[f64; N], Apply> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(invalid(expected));
    }
    let mut out = [0.0; N];
    for (slot, part) in out.iter_mut().zip(parts) {
        *slot = real(part, expected, &ok)?;
    }
    Ok(out)
}

fn rect(value: &str) -> Result<Rect, Apply> {
    let expected = "x_min, y_min, x_max, y_max with x_min < x_max and y_min < y_max";
    let [a, b, c, d] = reals::<4>(value, expected, |_| true)?;
    Rect::new(a, b, c, d).map_err(|_| invalid(expected))
}

fn tuples(value: &str) -> impl Iterator<Item = &str> {
    value.split(';').map(str::trim).filter(|s| !s.is_empty())
}

fn cell_list(value: &str) -> Result<Vec<usize>, Apply> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| invalid("comma-separated cell indices")))
        .collect()
}

fn apply(config: &mut RunConfig, key: &str, value: &str) -> Result<(), Apply> {
    let e = &mut config.experiment;
    let non_negative = |v: f64| v >= 0.0;
    let positive = |v: f64| v > 0.0;
    match key {
        "scenario.n_targets" => e.scenario.n_targets = count(value, 0)?,
        "scenario.n_steps" => e.scenario.n_steps = count(value, 1)?,
        "scenario.tau" => e.scenario.tau = real(value, "a number > 0", positive)?,
        "scenario.q_diag" => e.scenario.q_diag = reals(value, "four numbers ≥ 0", non_negative)?,
        "scenario.workspace" => e.scenario.workspace = rect(value)?,
        "scenario.seed" => {
            e.scenario.seed = value
                .parse()
                .map_err(|_| invalid("an unsigned 64-bit integer"))?
        }
        "scenario.initial_states" => {
            e.scenario.initial_states = if value == "none" {
                None
            } else {
                Some(
                    tuples(value)
                        .map(|t| reals::<4>(t, "`none` or `x, vx, y, vy; ...`", |_| true))
                        .collect::<Result<_, _>>()?,
                )
            }
        }
        "filter.kind" => {
            config.filter = match value {
                "gpf" => FilterChoice::Gpf,
                "pf" => FilterChoice::ClassicalPf,
                "kf" => FilterChoice::Kalman,
                _ => return Err(invalid("one of gpf, pf, kf")),
            }
        }
        "filter.init_weight" => e.init.weight = real(value, "a number in (0, 1]", |v| v > 0.0 && v <= 1.0)?,
        "filter.init_cov_diag" => e.init.cov_diag = reals(value, "four numbers ≥ 0", non_negative)?,
        "sensor.kind" => {
            config.sensor = match value {
                "mean" => SensorChoice::Mean,
                "grid" => SensorChoice::Grid,
                _ => return Err(invalid("one of mean, grid")),
            }
        }
        "sensor.r_diag" => e.sensor.r_diag = reals(value, "two numbers ≥ 0", non_negative)?,
        "sensor.p_d" => e.sensor.p_d = real(value, "a number in (0, 1)", |v| v > 0.0 && v < 1.0)?,
        "sensor.snr" => e.sensor.snr = real(value, "a number > 0", positive)?,
        "sensor.m_cells" => e.sensor.m_cells = count(value, 1)?,
        "sensor.rows" => e.sensor.rows = count(value, 1)?,
        "sensor.cols" => e.sensor.cols = count(value, 1)?,
        "sensor.selection" => {
            e.sensor.selection = match value {
                "random" => CellSelection::Random,
                "round_robin" => CellSelection::RoundRobin,
                "fixed" => CellSelection::Fixed(Vec::new()),
                _ => return Err(invalid("one of random, round_robin, fixed")),
            }
        }
        "gpf.epsilon" => e.gpf.epsilon = real(value, "a number in (0, 1)", |v| v > 0.0 && v < 1.0)?,
        "gpf.s_max" => e.gpf.s_max = count(value, 1)?,
        "gpf.d_thresh" => e.gpf.d_thresh = real(value, "a number > 0", positive)?,
        "gpf.w_prune" => e.gpf.w_prune = real(value, "a number in [0, 1)", |v| (0.0..1.0).contains(&v))?,
        "gpf.n_max" => e.gpf.n_max = count(value, 1)?,
        "gpf.w_birth" => e.gpf.w_birth = real(value, "a number in (0, 1]", |v| v > 0.0 && v <= 1.0)?,
        "gpf.merge_cov" => {
            e.gpf.merge_cov = match value {
                "moment_match" => MergeCovariance::MomentMatch,
                "paper_sum" => MergeCovariance::Sum,
                _ => return Err(invalid("one of moment_match, paper_sum")),
            }
        }
        "gpf.clutter_density" => {
            e.gpf.clutter_density = if value == "auto" {
                None
            } else {
                Some(real(value, "`auto` or a number > 0", positive)?)
            }
        }
        "gpf.fov" => {
            e.gpf.fov = if value == "full" {
                FovRegion::Full
            } else {
                let rects = tuples(value).map(rect).collect::<Result<Vec<_>, _>>()?;
                if rects.is_empty() {
                    return Err(invalid("`full` or `x_min, y_min, x_max, y_max; ...`"));
                }
                FovRegion::Rects(rects)
            }
        }
        "gpf.existence_ceiling" => {
            e.gpf.existence_ceiling = real(value, "a number in (0, 1]", |v| v > 0.0 && v <= 1.0)?
        }
        "pf.n_particles" => e.pf.n_particles = count(value, 1)?,
        "pf.resampling" => {
            e.pf.resampling = match value {
                "multinomial" => Resampling::Multinomial,
                "systematic" => Resampling::Systematic,
                _ => return Err(invalid("one of multinomial, systematic")),
            }
        }
        "metrics.extraction_threshold" => {
            e.metrics.extraction_threshold = real(value, "a number in [0, 1]", |v| (0.0..=1.0).contains(&v))?
        }
        "metrics.cap" => e.metrics.cap = real(value, "a number > 0", positive)?,
        "metrics.ospa" => {
            e.metrics.ospa = match value {
                "true" => true,
                "false" => false,
                _ => return Err(invalid("true or false")),
            }
        }
        _ => return Err(Apply::Unknown),
    }
    Ok(())
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

fn rect_text(r: &Rect) -> String {
    join(&[r.x_min, r.y_min, r.x_max, r.y_max])
}

/// Renders every key. Numbers use the shortest representation that parses
/// back to the same value, so `parse_config(&write_config(c)) == c`.
pub fn write_config(config: &RunConfig) -> String {
    let e = &config.experiment;
    let s = &e.scenario;
    let mut out = String::new();
    let mut put = |key: &str, value: String| {
        let _ = writeln!(out, "{key} = {value}");
    };
    put("scenario.n_targets", s.n_targets.to_string());
    put("scenario.n_steps", s.n_steps.to_string());
    put("scenario.tau", s.tau.to_string());
    put("scenario.q_diag", join(&s.q_diag));
    put("scenario.workspace", rect_text(&s.workspace));
    put("scenario.seed", s.seed.to_string());
    put(
        "scenario.initial_states",
        match &s.initial_states {
            None => "none".into(),
            Some(states) => states.iter().map(|x| join(x)).collect::<Vec<_>>().join("; "),
        },
    );
    put("filter.kind", config.filter.name().into());
    put("filter.init_weight", e.init.weight.to_string());
    put("filter.init_cov_diag", join(&e.init.cov_diag));
    put("sensor.kind", config.sensor.name().into());
    put("sensor.r_diag", join(&e.sensor.r_diag));
    put("sensor.p_d", e.sensor.p_d.to_string());
    put("sensor.snr", e.sensor.snr.to_string());
    put("sensor.m_cells", e.sensor.m_cells.to_string());
    put("sensor.rows", e.sensor.rows.to_string());
    put("sensor.cols", e.sensor.cols.to_string());
    let (selection, cells) = match &e.sensor.selection {
        CellSelection::Random => ("random", Vec::new()),
        CellSelection::RoundRobin => ("round_robin", Vec::new()),
        CellSelection::Fixed(cells) => ("fixed", cells.clone()),
    };
    put("sensor.selection", selection.into());
    put(
        "sensor.cells",
        cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", "),
    );
    put("gpf.epsilon", e.gpf.epsilon.to_string());
    put("gpf.s_max", e.gpf.s_max.to_string());
    put("gpf.d_thresh", e.gpf.d_thresh.to_string());
    put("gpf.w_prune", e.gpf.w_prune.to_string());
    put("gpf.n_max", e.gpf.n_max.to_string());
    put("gpf.w_birth", e.gpf.w_birth.to_string());
    put(
        "gpf.merge_cov",
        match e.gpf.merge_cov {
            MergeCovariance::MomentMatch => "moment_match",
            MergeCovariance::Sum => "paper_sum",
        }
        .into(),
    );
    put(
        "gpf.clutter_density",
        e.gpf.clutter_density.map_or("auto".into(), |v| v.to_string()),
    );
    put(
        "gpf.fov",
        match &e.gpf.fov {
            FovRegion::Full => "full".into(),
            FovRegion::Rects(rects) => rects.iter().map(rect_text).collect::<Vec<_>>().join("; "),
        },
    );
    put("gpf.existence_ceiling", e.gpf.existence_ceiling.to_string());
    put("pf.n_particles", e.pf.n_particles.to_string());
    put(
        "pf.resampling",
        match e.pf.resampling {
            Resampling::Multinomial => "multinomial",
            Resampling::Systematic => "systematic",
        }
        .into(),
    );
    put("metrics.extraction_threshold", e.metrics.extraction_threshold.to_string());
    put("metrics.cap", e.metrics.cap.to_string());
    put("metrics.ospa", e.metrics.ospa.to_string());
    out
}
