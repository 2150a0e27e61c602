//! Fixed-size sensor grids shared by the simulator, the networks and the metrics.

use thiserror::Error;

/// Rows of the mat, running along the world Y axis.
pub const GRID_ROWS: usize = 80;
/// Columns of the mat, running along the world X axis.
pub const GRID_COLS: usize = 28;
/// Number of sensing cells.
pub const GRID_CELLS: usize = GRID_ROWS * GRID_COLS;

/// Upper end of the mat's measuring range, in mmHg.
pub const PRESSURE_MAX_MMHG: f32 = 5000.0;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid needs {GRID_CELLS} values, got {0}")]
    WrongSize(usize),
    #[error("cell {index} holds {value}, outside [0, {PRESSURE_MAX_MMHG}] mmHg")]
    OutOfRange { index: usize, value: f32 },
}

/// An 80x28 row-major grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    values: Vec<T>,
}

/// Simulated plane indentation, 0 (untouched) to 255 (saturated).
pub type DeformationFrame = Grid<u8>;
/// Pressure in mmHg within the mat's measuring range.
pub type PressureFrame = Grid<f32>;

impl<T: Copy + Default> Grid<T> {
    pub fn zeros() -> Self {
        Self {
            values: vec![T::default(); GRID_CELLS],
        }
    }

    pub fn from_vec(values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != GRID_CELLS {
            return Err(GridError::WrongSize(values.len()));
        }
        Ok(Self { values })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * GRID_COLS + col]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }
}

impl<T> AsRef<[T]> for Grid<T> {
    fn as_ref(&self) -> &[T] {
        &self.values
    }
}

impl Grid<f32> {
    /// Builds a pressure frame, rejecting non-finite or out-of-range cells.
    pub fn pressure(values: Vec<f32>) -> Result<Self, GridError> {
        let grid = Self::from_vec(values)?;
        if let Some((index, &value)) = grid
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=PRESSURE_MAX_MMHG).contains(*v))
        {
            return Err(GridError::OutOfRange { index, value });
        }
        Ok(grid)
    }

    /// Builds a pressure frame, clamping every cell into the measuring range.
    /// NaN cells become 0.
    pub fn pressure_clipped(mut values: Vec<f32>) -> Result<Self, GridError> {
        for v in &mut values {
            *v = if v.is_nan() {
                0.0
            } else {
                v.clamp(0.0, PRESSURE_MAX_MMHG)
            };
        }
        Self::from_vec(values)
    }
}

/// World-space center of a cell's active area, in meters.
pub fn cell_center(row: usize, col: usize, pitch_x: f64, pitch_y: f64) -> (f64, f64) {
    ((col as f64 + 0.5) * pitch_x, (row as f64 + 0.5) * pitch_y)
}
