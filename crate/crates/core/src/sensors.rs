//! Measurement models.
//!
//! [`MeanSensorModel`] observes the noisy average of all target positions.
//! [`GridSensorModel`] tiles the workspace into cells and returns one binary
//! Rayleigh-threshold detection per measured cell.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{psd_sqrt, standard_normal_vector};
use crate::geometry::Rect;
use crate::{Matrix, Vector};

/// State layout `(x, vx, y, vy)`: indices of the position components.
pub const POSITION_INDICES: [usize; 2] = [0, 2];

/// `z = P * mean(x_i) + w`, `w ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSensorModel {
    pub r: Matrix,
    pub projection: Matrix,
}

impl MeanSensorModel {
    pub fn new(r: Matrix, projection: Matrix) -> Result<Self> {
        check_dim("mean sensor R rows", projection.nrows(), r.nrows())?;
        check_dim("mean sensor R columns", projection.nrows(), r.ncols())?;
        Ok(Self { r, projection })
    }

    /// Measures the given components of a `state_dim` state.
    pub fn selecting(r: Matrix, state_dim: usize, components: &[usize]) -> Result<Self> {
        let mut projection = Matrix::zeros(components.len(), state_dim);
        for (row, &c) in components.iter().enumerate() {
            if c >= state_dim {
                return Err(Error::DimensionMismatch {
                    context: "mean sensor component",
                    expected: state_dim,
                    actual: c,
                });
            }
            projection[(row, c)] = 1.0;
        }
        Self::new(r, projection)
    }

    pub fn measurement_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.projection.ncols()
    }
}

pub fn mean_sensor_measure<R: Rng + ?Sized>(
    true_states: &[Vector],
    model: &MeanSensorModel,
    rng: &mut R,
) -> Result<Vector> {
    let first = true_states.first().ok_or(Error::NoTargets)?;
    check_dim("mean sensor state", model.state_dim(), first.len())?;
    let mut mean = Vector::zeros(first.len());
    for x in true_states {
        check_dim("mean sensor state", first.len(), x.len())?;
        mean += x;
    }
    mean /= true_states.len() as f64;
    let noise = psd_sqrt(&model.r) * standard_normal_vector(model.measurement_dim(), rng);
    Ok(&model.projection * mean + noise)
}

/// Regular `rows x cols` tiling of a rectangular workspace.
///
/// Cells are indexed row-major starting at the `(x_min, y_min)` corner:
/// `index = row * cols + col`, with `col` running along x and `row` along y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub workspace: Rect,
    pub rows: usize,
    pub cols: usize,
}

impl Grid {
    pub fn new(workspace: Rect, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "grid needs at least one row and one column".into(),
            });
        }
        Ok(Self {
            workspace,
            rows,
            cols,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell_width(&self) -> f64 {
        self.workspace.width() / self.cols as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.workspace.height() / self.rows as f64
    }

    fn x_edge(&self, col: usize) -> f64 {
        if col == self.cols {
            self.workspace.x_max
        } else {
            self.workspace.x_min + col as f64 * self.cell_width()
        }
    }

    fn y_edge(&self, row: usize) -> f64 {
        if row == self.rows {
            self.workspace.y_max
        } else {
            self.workspace.y_min + row as f64 * self.cell_height()
        }
    }

    pub fn cell(&self, index: usize) -> Result<Rect> {
        if index >= self.cell_count() {
            return Err(Error::InvalidCell {
                index,
                cells: self.cell_count(),
            });
        }
        let (row, col) = (index / self.cols, index % self.cols);
        Ok(Rect {
            x_min: self.x_edge(col),
            y_min: self.y_edge(row),
            x_max: self.x_edge(col + 1),
            y_max: self.y_edge(row + 1),
        })
    }

    /// The cell containing `(x, y)` under the half-open convention, or `None`
    /// outside the workspace.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<usize> {
        if !self.workspace.contains_half_open(x, y) {
            return None;
        }
        let guess_col = ((x - self.workspace.x_min) / self.cell_width()) as usize;
        let guess_row = ((y - self.workspace.y_min) / self.cell_height()) as usize;
        // rounding in the division can land one cell off; settle against the edges
        let mut col = guess_col.min(self.cols - 1);
        while col > 0 && x < self.x_edge(col) {
            col -= 1;
        }
        while col + 1 < self.cols && x >= self.x_edge(col + 1) {
            col += 1;
        }
        let mut row = guess_row.min(self.rows - 1);
        while row > 0 && y < self.y_edge(row) {
            row -= 1;
        }
        while row + 1 < self.rows && y >= self.y_edge(row + 1) {
            row += 1;
        }
        Some(row * self.cols + col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSensorModel {
    pub grid: Grid,
    /// Single-target detection probability.
    pub p_d: f64,
    /// Signal-to-noise ratio of a target return.
    pub snr: f64,
    /// Maximum number of cells measured per step.
    pub m_cells: usize,
    pub position: [usize; 2],
}

impl GridSensorModel {
    pub fn new(grid: Grid, p_d: f64, snr: f64, m_cells: usize) -> Result<Self> {
        if !(p_d > 0.0 && p_d < 1.0) {
            return Err(Error::InvalidParameter {
                name: "p_d",
                reason: alloc::format!("{p_d} is outside (0, 1)"),
            });
        }
        if !(snr > 0.0) || !snr.is_finite() {
            return Err(Error::InvalidParameter {
                name: "snr",
                reason: alloc::format!("{snr} must be positive"),
            });
        }
        if m_cells == 0 {
            return Err(Error::InvalidParameter {
                name: "m_cells",
                reason: "at least one cell must be measurable".into(),
            });
        }
        Ok(Self {
            grid,
            p_d,
            snr,
            m_cells: m_cells.min(grid.cell_count()),
            position: POSITION_INDICES,
        })
    }

    pub fn false_alarm_prob(&self) -> f64 {
        detection_prob(0, self.p_d, self.snr)
    }

    /// Number of targets in `cell`.
    pub fn occupancy(&self, true_states: &[Vector], cell: usize) -> Result<usize> {
        let rect = self.grid.cell(cell)?;
        let [ix, iy] = self.position;
        Ok(true_states
            .iter()
            .filter(|x| rect.contains_half_open(x[ix], x[iy]))
            .count())
    }

    /// Probability of the observed return given `occupancy` targets.
    pub fn return_likelihood(&self, detected: bool, occupancy: usize) -> f64 {
        let p = detection_prob(occupancy, self.p_d, self.snr);
        if detected {
            p
        } else {
            1.0 - p
        }
    }
}

/// Binary return of one measured cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellReturn {
    pub cell: usize,
    pub detected: bool,
}

impl CellReturn {
    pub fn value(&self) -> u8 {
        u8::from(self.detected)
    }
}

/// Threshold detection of Rayleigh returns: `p_d^((1 + snr) / (1 + T snr))`.
///
/// With `T = 0` this is the false-alarm probability `p_d^(1 + snr)`, with
/// `T = 1` it is `p_d` itself.
pub fn detection_prob(occupancy: usize, p_d: f64, snr: f64) -> f64 {
    let exponent = (1.0 + snr) / (1.0 + occupancy as f64 * snr);
    libm::pow(p_d, exponent)
}

pub fn grid_measure<R: Rng + ?Sized>(
    true_states: &[Vector],
    cells: &[usize],
    model: &GridSensorModel,
    rng: &mut R,
) -> Result<Vec<CellReturn>> {
    if cells.len() > model.m_cells {
        return Err(Error::TooManyCells {
            requested: cells.len(),
            limit: model.m_cells,
        });
    }
    cells
        .iter()
        .map(|&cell| {
            let t = model.occupancy(true_states, cell)?;
            let p = detection_prob(t, model.p_d, model.snr);
            let u: f64 = rng.random();
            Ok(CellReturn {
                cell,
                detected: u < p,
            })
        })
        .collect()
}

/// How the cells measured at each step are chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellSelection {
    /// Uniformly without replacement.
    Random,
    /// Consecutive blocks of `m_cells`, wrapping around the grid.
    RoundRobin,
    /// Always the same list (truncated to `m_cells`).
    Fixed(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSelector {
    strategy: CellSelection,
    cursor: usize,
}

impl CellSelector {
    pub fn new(strategy: CellSelection) -> Self {
        Self {
            strategy,
            cursor: 0,
        }
    }

    pub fn strategy(&self) -> &CellSelection {
        &self.strategy
    }

    /// Cells to measure at the next step, at most `m_cells`, distinct, sorted
    /// ascending except for round-robin wrap-around.
    pub fn select<R: Rng + ?Sized>(&mut self, model: &GridSensorModel, rng: &mut R) -> Result<Vec<usize>> {
        let total = model.grid.cell_count();
        let m = model.m_cells.min(total);
        match &self.strategy {
            CellSelection::Random => {
                let mut cells = rand::seq::index::sample(rng, total, m).into_vec();
                cells.sort_unstable();
                Ok(cells)
            }
            CellSelection::RoundRobin => {
                let cells = (0..m).map(|i| (self.cursor + i) % total).collect();
                self.cursor = (self.cursor + m) % total;
                Ok(cells)
            }
            CellSelection::Fixed(list) => {
                let mut out: Vec<usize> = Vec::with_capacity(m);
                for &c in list {
                    if c >= total {
                        return Err(Error::InvalidCell { index: c, cells: total });
                    }
                    if !out.contains(&c) && out.len() < m {
                        out.push(c);
                    }
                }
                Ok(out)
            }
        }
    }
}
