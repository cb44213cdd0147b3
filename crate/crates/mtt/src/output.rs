//! Result files: `metrics.csv`, `truth.csv`, `particles.json`, `manifest.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mtt_core::gpf::Measurement;
use mtt_core::sensors::CellReturn;
use mtt_core::sim::{MetricReport, SensorChoice, StepRecord, TrackingLog, Truth};
use mtt_core::{GaussianParticle, GaussianState, Matrix, Vector};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: {reason}")]
    Malformed { path: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// `%.9g`: nine significant digits, trailing zeros dropped, exponent form
/// outside `1e-4 ..= 1e9`.
pub fn format_sig(value: f64) -> String {
    const DIGITS: i32 = 9;
    if value == 0.0 {
        return "0".into();
    }
    if !value.is_finite() {
        return if value.is_nan() {
            "nan".into()
        } else if value > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // rounding to nine digits can carry into the exponent, so read the
    // exponent off the rounded scientific form
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, value);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= DIGITS {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{value:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, OutputError> {
    let file = File::create(path).map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv {
        path: path.display().to_string(),
        source,
    }
}

/// Per-step metrics with the true positions of `n_targets` targets.
///
/// Columns: `step`, `true_x_i`, `true_y_i` for each target, `cardinality_est`,
/// `rmse`, `card_err`, and `ospa` when any step carries it.
pub fn write_metrics_csv(
    path: &Path,
    n_targets: usize,
    truth: &[Vec<Vector>],
    report: &MetricReport,
) -> Result<(), OutputError> {
    let err = csv_err(path);
    let with_ospa = report.steps.iter().any(|m| m.ospa.is_some());
    let mut header = vec!["step".to_string()];
    for i in 1..=n_targets {
        header.push(format!("true_x_{i}"));
        header.push(format!("true_y_{i}"));
    }
    header.extend(["cardinality_est", "rmse", "card_err"].map(String::from));
    if with_ospa {
        header.push("ospa".into());
    }
    let mut w = csv_writer(path)?;
    w.write_record(&header).map_err(&err)?;
    for (m, states) in report.steps.iter().zip(truth) {
        let mut row = vec![m.step.to_string()];
        for x in states {
            row.push(format_sig(x[0]));
            row.push(format_sig(x[2]));
        }
        row.push(format_sig(m.cardinality_estimate));
        row.push(format_sig(m.rmse));
        row.push(format_sig(m.cardinality_error));
        if with_ospa {
            row.push(m.ospa.map(format_sig).unwrap_or_default());
        }
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Full target states per step (steps counted from 1).
pub fn write_truth_csv(path: &Path, n_targets: usize, truth: &Truth) -> Result<(), OutputError> {
    let err = csv_err(path);
    let mut header = vec!["step".to_string()];
    for i in 1..=n_targets {
        for c in ["x", "vx", "y", "vy"] {
            header.push(format!("true_{c}_{i}"));
        }
    }
    let mut w = csv_writer(path)?;
    w.write_record(&header).map_err(&err)?;
    for (k, states) in truth.iter().enumerate() {
        let mut row = vec![(k + 1).to_string()];
        row.extend(states.iter().flat_map(|x| x.iter().map(|v| format_sig(*v))));
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEntry {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major.
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub cell: usize,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasurementEntry {
    Vector { value: Vec<f64> },
    Cells { returns: Vec<CellEntry> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEntry {
    pub step: usize,
    pub truth: Vec<Vec<f64>>,
    pub measurement: MeasurementEntry,
    pub particles: Vec<ParticleEntry>,
    pub cardinality: f64,
    pub degenerate: bool,
}

/// Contents of `particles.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleLog {
    pub filter: String,
    pub sensor: String,
    pub seed: u64,
    pub n_targets: usize,
    pub steps: Vec<StepEntry>,
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ParticleLog {
    pub fn from_tracking(log: &TrackingLog, seed: u64, n_targets: usize) -> Self {
        let steps = log
            .records
            .iter()
            .map(|r| StepEntry {
                step: r.step,
                truth: r.truth.iter().map(|x| x.iter().copied().collect()).collect(),
                measurement: match &r.measurement {
                    Measurement::Vector(z) => MeasurementEntry::Vector {
                        value: z.iter().copied().collect(),
                    },
                    Measurement::Cells(returns) => MeasurementEntry::Cells {
                        returns: returns
                            .iter()
                            .map(|c| CellEntry {
                                cell: c.cell,
                                value: c.value(),
                            })
                            .collect(),
                    },
                },
                particles: r
                    .particles
                    .iter()
                    .map(|p| ParticleEntry {
                        weight: p.weight,
                        mean: p.state.mean.iter().copied().collect(),
                        cov: matrix_rows(&p.state.cov),
                    })
                    .collect(),
                cardinality: r.cardinality,
                degenerate: r.degenerate,
            })
            .collect();
        Self {
            filter: log.filter.name().into(),
            sensor: log.sensor.name().into(),
            seed,
            n_targets,
            steps,
        }
    }

    pub fn sensor_choice(&self) -> Option<SensorChoice> {
        match self.sensor.as_str() {
            "mean" => Some(SensorChoice::Mean),
            "grid" => Some(SensorChoice::Grid),
            _ => None,
        }
    }

    /// Step records with the logged values, bit for bit.
    pub fn records(&self) -> Result<Vec<StepRecord>, String> {
        self.steps
            .iter()
            .map(|s| {
                let particles = s
                    .particles
                    .iter()
                    .map(|p| {
                        let n = p.mean.len();
                        if p.cov.len() != n || p.cov.iter().any(|row| row.len() != n) {
                            return Err(format!("step {}: covariance is not {n}x{n}", s.step));
                        }
                        let cov = Matrix::from_row_iterator(n, n, p.cov.iter().flatten().copied());
                        Ok(GaussianParticle {
                            weight: p.weight,
                            state: GaussianState {
                                mean: Vector::from_vec(p.mean.clone()),
                                cov,
                            },
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let measurement = match &s.measurement {
                    MeasurementEntry::Vector { value } => Measurement::Vector(Vector::from_vec(value.clone())),
                    MeasurementEntry::Cells { returns } => Measurement::Cells(
                        returns
                            .iter()
                            .map(|c| CellReturn {
                                cell: c.cell,
                                detected: c.value == 1,
                            })
                            .collect(),
                    ),
                };
                Ok(StepRecord {
                    step: s.step,
                    truth: s.truth.iter().map(|x| Vector::from_vec(x.clone())).collect(),
                    measurement,
                    particles,
                    cardinality: s.cardinality,
                    degenerate: s.degenerate,
                })
            })
            .collect()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| OutputError::Json {
        path: path.display().to_string(),
        source,
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_particle_log(path: &Path) -> Result<ParticleLog, OutputError> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| OutputError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Contents of `manifest.json`: enough to rerun the command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub filter: String,
    pub sensor: String,
    pub started_at: String,
    pub finished_at: String,
    /// The configuration as written by `write_config`, seed override applied.
    pub config: String,
    /// Every file the run wrote, relative to the output directory.
    pub outputs: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig(2.0 / 3.0), "0.666666667");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(-2.5), "-2.5");
        assert_eq!(format_sig(12.0), "12");
        assert_eq!(format_sig(123456789.0), "123456789");
        assert_eq!(format_sig(1234567890.0), "1.23456789e+09");
        assert_eq!(format_sig(0.0001), "0.0001");
        assert_eq!(format_sig(0.00001234), "1.234e-05");
        assert_eq!(format_sig(999999999.6), "1e+09");
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(f64::NAN), "nan");
    }

    #[test]
    fn empty_report_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics_csv(&path, 2, &[], &MetricReport::default()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "step,true_x_1,true_y_1,true_x_2,true_y_2,cardinality_est,rmse,card_err\n");
    }

    #[test]
    fn one_step_writes_two_lines() {
        use mtt_core::sim::StepMetrics;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let report = MetricReport {
            steps: vec![StepMetrics {
                step: 1,
                rmse: 1.0 / 3.0,
                cardinality_estimate: 0.9,
                cardinality_error: 0.1,
                ospa: None,
            }],
        };
        let truth = vec![vec![Vector::from_vec(vec![1.5, 0.0, 2.0, 0.0])]];
        write_metrics_csv(&path, 1, &truth, &report).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "step,true_x_1,true_y_1,cardinality_est,rmse,card_err\n1,1.5,2,0.9,0.333333333,0.1\n"
        );
        assert!(!text.contains('\r'));
    }
}
