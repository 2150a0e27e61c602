//! Quasi-static contact between a rigid body and an elastic sensor plane.
//!
//! The plane is a bed of independent linear springs, one per sensor cell.
//! [`settle`] lowers the body vertically until the springs carry its weight;
//! the resulting penetrations are rendered as 0-255 deformation values and as
//! reference pressure in mmHg.

mod render;
mod sequence;
mod settle;

pub use render::{
    alpha_estimate, deformation_pgm, pressure_pgm, rasterize_deformation, reference_pressure,
    write_pgm, MMHG_PA,
};
pub use sequence::{simulate_sequence, SimulatedSequence};
pub use settle::{settle, ContactCell, FlatSlab, SettleResult, Support, MAX_SETTLE_DEPTH};

use thiserror::Error;

use crate::grid::{cell_center, GRID_COLS, GRID_ROWS};
use crate::posekit::PoseError;

#[derive(Debug, Error, PartialEq)]
pub enum DeformError {
    #[error("body does not reach the plane")]
    NoContact,
    #[error("settle did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("frame {frame}: settle did not converge (residual {residual:e})")]
    FrameNonConvergence { frame: usize, residual: f64 },
    #[error("invalid plane: {0}")]
    InvalidPlane(&'static str),
    #[error(transparent)]
    Pose(#[from] PoseError),
}

/// Sensor plane geometry and spring parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneModel {
    /// Row spacing along Y, meters.
    pub pitch_y: f64,
    /// Column spacing along X, meters.
    pub pitch_x: f64,
    /// Sensing area of one cell, square meters.
    pub active_area: f64,
    /// Newtons per meter of penetration, per contacted cell.
    pub stiffness_k: f64,
    /// Penetration mapped to the full-scale value 255, millimeters.
    pub d_max_mm: f64,
    pub gravity: f64,
}

impl Default for PlaneModel {
    fn default() -> Self {
        Self {
            pitch_y: 0.021,
            pitch_x: 0.020,
            active_area: 0.012 * 0.016,
            stiffness_k: 1.0e3,
            d_max_mm: 10.0,
            gravity: 9.81,
        }
    }
}

impl PlaneModel {
    pub fn new(stiffness_k: f64, d_max_mm: f64) -> Result<Self, DeformError> {
        let plane = Self {
            stiffness_k,
            d_max_mm,
            ..Self::default()
        };
        plane.validate()?;
        Ok(plane)
    }

    pub fn validate(&self) -> Result<(), DeformError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.stiffness_k) {
            return Err(DeformError::InvalidPlane("stiffness_k must be positive"));
        }
        if !positive(self.d_max_mm) {
            return Err(DeformError::InvalidPlane("d_max must be positive"));
        }
        if !(positive(self.pitch_x) && positive(self.pitch_y) && positive(self.active_area)) {
            return Err(DeformError::InvalidPlane(
                "pitch and active area must be positive",
            ));
        }
        if !positive(self.gravity) {
            return Err(DeformError::InvalidPlane("gravity must be positive"));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        GRID_ROWS
    }

    pub fn cols(&self) -> usize {
        GRID_COLS
    }

    /// World (x, y) of the active-area center of a cell.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        cell_center(row, col, self.pitch_x, self.pitch_y)
    }

    pub fn d_max(&self) -> f64 {
        self.d_max_mm / 1000.0
    }

    /// Mat extent in meters as (width along X, length along Y).
    pub fn extent(&self) -> (f64, f64) {
        (
            GRID_COLS as f64 * self.pitch_x,
            GRID_ROWS as f64 * self.pitch_y,
        )
    }
}
