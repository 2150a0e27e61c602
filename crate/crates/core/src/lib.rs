//! Ground pressure map synthesis from 3D human pose sequences.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`posekit`] builds skeletons, body solids and deterministic synthetic motion.
//! 2. [`deformsim`] settles each body onto an 80x28 spring plane and renders
//!    0-255 deformation profiles plus reference pressure maps.
//! 3. [`datapipe`] stores sequences, aligns the pose/deformation/pressure streams
//!    and cuts 10-frame sliding windows.
//! 4. [`neuralnet`] trains the pose, deformation and fusion networks;
//!    [`evalkit`] scores the synthesized maps.

pub mod datapipe;
pub mod deformsim;
pub mod evalkit;
pub mod grid;
pub mod neuralnet;
pub mod posekit;

pub use grid::{DeformationFrame, Grid, PressureFrame, GRID_CELLS, GRID_COLS, GRID_ROWS};
pub use posekit::{PoseFrame, PoseSequence, Skeleton, SkeletonKind, SubjectProfile};
