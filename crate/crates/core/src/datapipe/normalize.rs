use crate::grid::{GRID_CELLS, GRID_COLS, PRESSURE_MAX_MMHG};

/// Scale constants mapping raw units into network units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    /// mmHg mapped to 1.0.
    pub pressure_max: f32,
    /// Deformation value mapped to 1.0.
    pub deform_max: f32,
    /// Meters mapped to 1.0: the mat diagonal.
    pub pose_scale: f32,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            pressure_max: PRESSURE_MAX_MMHG,
            deform_max: 255.0,
            pose_scale: 1.771,
        }
    }
}

/// Inputs and target of one sample, row-major: `width x J x 3` pose
/// coordinates, `width x 80 x 28` deformation values and one 80x28 pressure
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub joints: usize,
    pub pose: Vec<f32>,
    pub deform: Vec<f32>,
    pub target: Vec<f32>,
}

fn scaled(v: &[f32], by: f32) -> Vec<f32> {
    v.iter().map(|x| x / by).collect()
}

fn unscaled(v: &[f32], by: f32) -> Vec<f32> {
    v.iter().map(|x| x * by).collect()
}

impl Window {
    pub fn normalize(&self, n: &Normalization) -> Window {
        Window {
            joints: self.joints,
            pose: scaled(&self.pose, n.pose_scale),
            deform: scaled(&self.deform, n.deform_max),
            target: scaled(&self.target, n.pressure_max),
        }
    }

    pub fn denormalize(&self, n: &Normalization) -> Window {
        Window {
            joints: self.joints,
            pose: unscaled(&self.pose, n.pose_scale),
            deform: unscaled(&self.deform, n.deform_max),
            target: unscaled(&self.target, n.pressure_max),
        }
    }
}

/// Replaces every row of an 80x28 grid by its mean.
pub fn row_profile(grid: &[f32]) -> Vec<f32> {
    assert_eq!(grid.len(), GRID_CELLS);
    grid.chunks_exact(GRID_COLS)
        .flat_map(|row| {
            let m = row.iter().sum::<f32>() / GRID_COLS as f32;
            [m; GRID_COLS]
        })
        .collect()
}
