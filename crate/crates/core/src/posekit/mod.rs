//! Skeletons, subjects, capsule body solids and synthetic motion.

mod motion;
mod skeleton;
mod validate;
mod vec3;

pub use motion::{generate_motion, MotionSpec, MotionTemplate};
pub use skeleton::{build_skeleton, BoneClass, RadiusTable, Skeleton, SkeletonKind};
pub use validate::{validate_pose_sequence, ValidationReport, Violation};
pub use vec3::Vec3;

use thiserror::Error;

/// Reference stature for the radius table and bone lengths.
pub const REFERENCE_HEIGHT_CM: f64 = 175.0;

#[derive(Debug, Error, PartialEq)]
pub enum PoseError {
    #[error("subject mass {0} kg outside [20, 250]")]
    InvalidMass(f64),
    #[error("subject height {0} cm outside [100, 230]")]
    InvalidHeight(f64),
    #[error("pose has {got} joints, skeleton expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("joint {joint} has a non-finite coordinate")]
    NonFinite { joint: usize },
    #[error("{frames} frames but {timestamps} timestamps")]
    LengthMismatch { frames: usize, timestamps: usize },
    #[error("invalid motion spec: {0}")]
    InvalidSpec(&'static str),
    #[error("capsule radii must be positive")]
    InvalidRadius,
    #[error("unknown name {0:?}")]
    UnknownName(String),
}

/// Per-subject body parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectProfile {
    id: String,
    mass_kg: f64,
    height_cm: f64,
    gender: String,
}

impl SubjectProfile {
    pub fn new(
        id: impl Into<String>,
        mass_kg: f64,
        height_cm: f64,
        gender: impl Into<String>,
    ) -> Result<Self, PoseError> {
        if !(20.0..=250.0).contains(&mass_kg) {
            return Err(PoseError::InvalidMass(mass_kg));
        }
        if !(100.0..=230.0).contains(&height_cm) {
            return Err(PoseError::InvalidHeight(height_cm));
        }
        Ok(Self {
            id: id.into(),
            mass_kg,
            height_cm,
            gender: gender.into(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mass_kg(&self) -> f64 {
        self.mass_kg
    }

    pub fn height_cm(&self) -> f64 {
        self.height_cm
    }

    pub fn gender(&self) -> &str {
        &self.gender
    }

    /// Linear size factor relative to the reference stature.
    pub fn height_scale(&self) -> f64 {
        self.height_cm / REFERENCE_HEIGHT_CM
    }
}

/// One frame of joint positions in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    joints: Vec<Vec3>,
}

impl PoseFrame {
    pub fn new(joints: Vec<Vec3>) -> Result<Self, PoseError> {
        if let Some(joint) = joints.iter().position(|j| !j.is_finite()) {
            return Err(PoseError::NonFinite { joint });
        }
        Ok(Self { joints })
    }

    /// Wraps externally sourced coordinates without the finiteness check,
    /// so that [`validate_pose_sequence`] can report on them.
    pub fn new_unchecked(joints: Vec<Vec3>) -> Self {
        Self { joints }
    }

    pub fn joints(&self) -> &[Vec3] {
        &self.joints
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn translated(&self, offset: Vec3) -> Self {
        Self {
            joints: self.joints.iter().map(|&j| j + offset).collect(),
        }
    }
}

/// Timestamped pose frames sharing one skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    skeleton: Skeleton,
    frames: Vec<PoseFrame>,
    timestamps: Vec<f64>,
}

impl PoseSequence {
    /// Checks structure only (lengths and joint counts); value-level problems
    /// are left for [`validate_pose_sequence`].
    pub fn new(
        skeleton: Skeleton,
        frames: Vec<PoseFrame>,
        timestamps: Vec<f64>,
    ) -> Result<Self, PoseError> {
        if frames.len() != timestamps.len() {
            return Err(PoseError::LengthMismatch {
                frames: frames.len(),
                timestamps: timestamps.len(),
            });
        }
        let expected = skeleton.joint_count();
        if let Some(f) = frames.iter().find(|f| f.joint_count() != expected) {
            return Err(PoseError::DimensionMismatch {
                expected,
                got: f.joint_count(),
            });
        }
        Ok(Self {
            skeleton,
            frames,
            timestamps,
        })
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn frames(&self) -> &[PoseFrame] {
        &self.frames
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Capsule: the set of points within `radius` of segment `a`-`b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

/// Union of capsules carrying the subject's whole mass.
#[derive(Debug, Clone, PartialEq)]
pub struct BodySolid {
    capsules: Vec<Capsule>,
    total_mass: f64,
}

impl BodySolid {
    pub fn new(capsules: Vec<Capsule>, total_mass: f64) -> Result<Self, PoseError> {
        if capsules.is_empty() || capsules.iter().any(|c| !(c.radius > 0.0)) {
            return Err(PoseError::InvalidRadius);
        }
        if !(total_mass > 0.0) {
            return Err(PoseError::InvalidMass(total_mass));
        }
        Ok(Self {
            capsules,
            total_mass,
        })
    }

    pub fn capsules(&self) -> &[Capsule] {
        &self.capsules
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }
}

/// Places one capsule per bone (plus a sphere per face keypoint) at the
/// pose's joint positions, radii scaled linearly with subject height.
pub fn body_geometry(
    pose: &PoseFrame,
    skeleton: &Skeleton,
    subject: &SubjectProfile,
) -> Result<BodySolid, PoseError> {
    if pose.joint_count() != skeleton.joint_count() {
        return Err(PoseError::DimensionMismatch {
            expected: skeleton.joint_count(),
            got: pose.joint_count(),
        });
    }
    let scale = subject.height_scale() / 1000.0;
    let joints = pose.joints();
    let mut capsules: Vec<Capsule> = skeleton
        .parent_edges()
        .iter()
        .zip(skeleton.capsule_radii())
        .map(|(&(child, parent), &r_mm)| Capsule {
            a: joints[child],
            b: joints[parent],
            radius: r_mm * scale,
        })
        .collect();
    capsules.extend(skeleton.face_joints().iter().map(|&j| Capsule {
        a: joints[j],
        b: joints[j],
        radius: skeleton.face_radius() * scale,
    }));
    BodySolid::new(capsules, subject.mass_kg())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subject(mass: f64, height: f64) -> SubjectProfile {
        SubjectProfile::new("s", mass, height, "x").unwrap()
    }

    fn any_pose(skel: &Skeleton) -> PoseFrame {
        PoseFrame::new(
            (0..skel.joint_count())
                .map(|i| Vec3::new(0.1 * i as f64, 0.05 * i as f64, 0.3))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn subject_bounds() {
        assert!(SubjectProfile::new("a", 19.9, 170.0, "").is_err());
        assert!(SubjectProfile::new("a", 60.0, 231.0, "").is_err());
        assert!(SubjectProfile::new("a", 60.0, 170.0, "").is_ok());
        assert!(SubjectProfile::new("a", f64::NAN, 170.0, "").is_err());
    }

    #[test]
    fn pose_frame_rejects_nan() {
        let r = PoseFrame::new(vec![Vec3::new(0.0, f64::NAN, 0.0)]);
        assert_eq!(r, Err(PoseError::NonFinite { joint: 0 }));
    }

    #[test]
    fn geometry_preserves_mass() {
        let skel = build_skeleton(SkeletonKind::Coco17);
        let body = body_geometry(&any_pose(&skel), &skel, &subject(74.3, 178.0)).unwrap();
        assert_eq!(body.total_mass(), 74.3);
        assert_eq!(body.capsules().len(), 16 + 5);
    }

    #[test]
    fn reference_height_keeps_table_radii() {
        let skel = build_skeleton(SkeletonKind::Body25);
        let body = body_geometry(&any_pose(&skel), &skel, &subject(70.0, 175.0)).unwrap();
        for (cap, r_mm) in body.capsules().iter().zip(skel.capsule_radii()) {
            assert_eq!(cap.radius, r_mm / 1000.0);
        }
    }

    #[test]
    fn translation_equivariance() {
        let skel = build_skeleton(SkeletonKind::Coco17);
        let s = subject(60.0, 160.0);
        let pose = any_pose(&skel);
        let shift = Vec3::new(0.1, 0.0, 0.0);
        let a = body_geometry(&pose, &skel, &s).unwrap();
        let b = body_geometry(&pose.translated(shift), &skel, &s).unwrap();
        for (ca, cb) in a.capsules().iter().zip(b.capsules()) {
            assert!((ca.a + shift - cb.a).norm() < 1e-15);
            assert!((ca.b + shift - cb.b).norm() < 1e-15);
            assert_eq!(ca.radius, cb.radius);
        }
    }

    #[test]
    fn joint_count_mismatch() {
        let skel = build_skeleton(SkeletonKind::Coco17);
        let pose = PoseFrame::new(vec![Vec3::default(); 25]).unwrap();
        assert_eq!(
            body_geometry(&pose, &skel, &subject(60.0, 160.0)),
            Err(PoseError::DimensionMismatch {
                expected: 17,
                got: 25
            })
        );
    }
}
