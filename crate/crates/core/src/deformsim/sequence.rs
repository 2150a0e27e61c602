use rayon::prelude::*;

use crate::grid::{DeformationFrame, Grid, PressureFrame};
use crate::posekit::{body_geometry, PoseSequence, SubjectProfile};

use super::{rasterize_deformation, reference_pressure, settle, DeformError, PlaneModel};

/// Per-frame deformation and pressure, sharing the pose timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSequence {
    pub timestamps: Vec<f64>,
    pub deformation: Vec<DeformationFrame>,
    pub pressure: Vec<PressureFrame>,
    /// Frames where the body never reached the mat.
    pub empty_frames: Vec<usize>,
}

/// Settles every frame independently. Frames without contact become zero
/// grids. Output is independent of the rayon thread count.
pub fn simulate_sequence(
    poses: &PoseSequence,
    subject: &SubjectProfile,
    plane: &PlaneModel,
) -> Result<SimulatedSequence, DeformError> {
    plane.validate()?;
    let frames: Vec<Result<Option<(DeformationFrame, PressureFrame)>, DeformError>> = poses
        .frames()
        .par_iter()
        .enumerate()
        .map(|(i, pose)| {
            let body = body_geometry(pose, poses.skeleton(), subject)?;
            match settle(&body, plane) {
                Ok(s) => Ok(Some((
                    rasterize_deformation(&s, plane),
                    reference_pressure(&s, plane),
                ))),
                Err(DeformError::NoContact) => Ok(None),
                Err(DeformError::NonConvergence { residual, .. }) => {
                    Err(DeformError::FrameNonConvergence { frame: i, residual })
                }
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut out = SimulatedSequence {
        timestamps: poses.timestamps().to_vec(),
        deformation: Vec::with_capacity(frames.len()),
        pressure: Vec::with_capacity(frames.len()),
        empty_frames: Vec::new(),
    };
    for (i, f) in frames.into_iter().enumerate() {
        match f? {
            Some((d, p)) => {
                out.deformation.push(d);
                out.pressure.push(p);
            }
            None => {
                out.deformation.push(Grid::zeros());
                out.pressure.push(Grid::zeros());
                out.empty_frames.push(i);
            }
        }
    }
    Ok(out)
}
