use std::fmt;
use std::str::FromStr;

use super::PoseError;

/// Keypoint convention of a pose source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SkeletonKind {
    /// 17 COCO keypoints, as produced by 2D keypoint detectors lifted to 3D.
    Coco17,
    /// 25 OpenPose BODY25 keypoints, as produced by volumetric body fitting.
    Body25,
}

impl SkeletonKind {
    pub fn joint_count(self) -> usize {
        match self {
            SkeletonKind::Coco17 => 17,
            SkeletonKind::Body25 => 25,
        }
    }
}

impl fmt::Display for SkeletonKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkeletonKind::Coco17 => "coco17",
            SkeletonKind::Body25 => "body25",
        })
    }
}

impl FromStr for SkeletonKind {
    type Err = PoseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "coco17" | "coco" => Ok(SkeletonKind::Coco17),
            "body25" => Ok(SkeletonKind::Body25),
            other => Err(PoseError::UnknownName(other.to_string())),
        }
    }
}

/// Anatomical class of a bone; selects its capsule radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoneClass {
    Head,
    Torso,
    UpperArm,
    Forearm,
    Thigh,
    Shin,
    Foot,
    Hand,
}

/// Capsule radii in millimeters at the 175 cm reference height.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusTable {
    pub head: f64,
    pub torso: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub thigh: f64,
    pub shin: f64,
    pub foot: f64,
    pub hand: f64,
}

impl Default for RadiusTable {
    fn default() -> Self {
        Self {
            head: 90.0,
            torso: 140.0,
            upper_arm: 45.0,
            forearm: 40.0,
            thigh: 75.0,
            shin: 55.0,
            foot: 40.0,
            hand: 35.0,
        }
    }
}

impl RadiusTable {
    pub fn radius_mm(&self, class: BoneClass) -> f64 {
        match class {
            BoneClass::Head => self.head,
            BoneClass::Torso => self.torso,
            BoneClass::UpperArm => self.upper_arm,
            BoneClass::Forearm => self.forearm,
            BoneClass::Thigh => self.thigh,
            BoneClass::Shin => self.shin,
            BoneClass::Foot => self.foot,
            BoneClass::Hand => self.hand,
        }
    }

    fn validate(&self) -> Result<(), PoseError> {
        let all = [
            self.head,
            self.torso,
            self.upper_arm,
            self.forearm,
            self.thigh,
            self.shin,
            self.foot,
            self.hand,
        ];
        if all.iter().all(|r| r.is_finite() && *r > 0.0) {
            Ok(())
        } else {
            Err(PoseError::InvalidRadius)
        }
    }
}

/// Joint topology plus per-bone capsule radii.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    kind: SkeletonKind,
    joint_names: Vec<&'static str>,
    /// (child, parent) pairs, one per bone.
    parent_edges: Vec<(usize, usize)>,
    bone_classes: Vec<BoneClass>,
    capsule_radii: Vec<f64>,
    face_joints: Vec<usize>,
    face_radius: f64,
    root: usize,
}

pub(crate) const COCO17_JOINTS: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

const COCO17_BONES: [(usize, usize, BoneClass); 16] = [
    (12, 11, BoneClass::Torso),
    (5, 11, BoneClass::Torso),
    (6, 12, BoneClass::Torso),
    (7, 5, BoneClass::UpperArm),
    (8, 6, BoneClass::UpperArm),
    (9, 7, BoneClass::Forearm),
    (10, 8, BoneClass::Forearm),
    (13, 11, BoneClass::Thigh),
    (14, 12, BoneClass::Thigh),
    (15, 13, BoneClass::Shin),
    (16, 14, BoneClass::Shin),
    (0, 5, BoneClass::Head),
    (1, 0, BoneClass::Head),
    (2, 0, BoneClass::Head),
    (3, 1, BoneClass::Head),
    (4, 2, BoneClass::Head),
];

pub(crate) const BODY25_JOINTS: [&str; 25] = [
    "nose",
    "neck",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "mid_hip",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_eye",
    "left_eye",
    "right_ear",
    "left_ear",
    "left_big_toe",
    "left_small_toe",
    "left_heel",
    "right_big_toe",
    "right_small_toe",
    "right_heel",
];

const BODY25_BONES: [(usize, usize, BoneClass); 24] = [
    (1, 8, BoneClass::Torso),
    (9, 8, BoneClass::Torso),
    (12, 8, BoneClass::Torso),
    (0, 1, BoneClass::Head),
    (2, 1, BoneClass::Torso),
    (5, 1, BoneClass::Torso),
    (3, 2, BoneClass::UpperArm),
    (4, 3, BoneClass::Forearm),
    (6, 5, BoneClass::UpperArm),
    (7, 6, BoneClass::Forearm),
    (10, 9, BoneClass::Thigh),
    (11, 10, BoneClass::Shin),
    (13, 12, BoneClass::Thigh),
    (14, 13, BoneClass::Shin),
    (15, 0, BoneClass::Head),
    (16, 0, BoneClass::Head),
    (17, 15, BoneClass::Head),
    (18, 16, BoneClass::Head),
    (19, 14, BoneClass::Foot),
    (20, 19, BoneClass::Foot),
    (21, 14, BoneClass::Foot),
    (22, 11, BoneClass::Foot),
    (23, 22, BoneClass::Foot),
    (24, 11, BoneClass::Foot),
];

/// Returns the fixed topology for `kind` with the default radius table.
pub fn build_skeleton(kind: SkeletonKind) -> Skeleton {
    Skeleton::with_radii(kind, &RadiusTable::default()).expect("default radii are positive")
}

impl Skeleton {
    pub fn with_radii(kind: SkeletonKind, radii: &RadiusTable) -> Result<Self, PoseError> {
        radii.validate()?;
        let (names, bones, face, root): (
            &[&'static str],
            &[(usize, usize, BoneClass)],
            &[usize],
            usize,
        ) = match kind {
            SkeletonKind::Coco17 => (&COCO17_JOINTS, &COCO17_BONES, &[0, 1, 2, 3, 4], 11),
            SkeletonKind::Body25 => (&BODY25_JOINTS, &BODY25_BONES, &[0, 15, 16, 17, 18], 8),
        };
        Ok(Self {
            kind,
            joint_names: names.to_vec(),
            parent_edges: bones.iter().map(|&(c, p, _)| (c, p)).collect(),
            bone_classes: bones.iter().map(|&(_, _, k)| k).collect(),
            capsule_radii: bones.iter().map(|&(_, _, k)| radii.radius_mm(k)).collect(),
            face_joints: face.to_vec(),
            face_radius: radii.head,
            root,
        })
    }

    pub fn kind(&self) -> SkeletonKind {
        self.kind
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[&'static str] {
        &self.joint_names
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| *n == name)
    }

    pub fn parent_edges(&self) -> &[(usize, usize)] {
        &self.parent_edges
    }

    pub fn bone_classes(&self) -> &[BoneClass] {
        &self.bone_classes
    }

    /// Per-bone capsule radius in millimeters at the reference height.
    pub fn capsule_radii(&self) -> &[f64] {
        &self.capsule_radii
    }

    /// Keypoints that also carry a head-radius sphere.
    pub fn face_joints(&self) -> &[usize] {
        &self.face_joints
    }

    pub fn face_radius(&self) -> f64 {
        self.face_radius
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Joint indices ordered so every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let j = self.joint_count();
        let mut order = Vec::with_capacity(j);
        let mut placed = vec![false; j];
        order.push(self.root);
        placed[self.root] = true;
        while order.len() < j {
            let before = order.len();
            for &(child, parent) in &self.parent_edges {
                if placed[parent] && !placed[child] {
                    placed[child] = true;
                    order.push(child);
                }
            }
            assert!(order.len() > before, "skeleton edges do not form a tree");
        }
        order
    }

    /// Parent of each joint (`None` for the root).
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut parents = vec![None; self.joint_count()];
        for &(c, p) in &self.parent_edges {
            parents[c] = Some(p);
        }
        parents
    }
}
