//! Deterministic synthetic motion.
//!
//! Every template describes the body as a [`Posture`]: unit directions for the
//! trunk, head and limb segments. Joint targets are derived from the posture and
//! then re-attached along the skeleton tree at fixed bone lengths, so lengths
//! stay constant to rounding regardless of how the template moves.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PoseError, PoseFrame, PoseSequence, Skeleton, SkeletonKind, SubjectProfile, Vec3};

/// Mat center in world coordinates.
const MAT_CENTER: (f64, f64) = (0.28, 0.84);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MotionTemplate {
    StandSway,
    SquatCycle,
    Plank,
    Bridge,
    Supine,
    SitToStand,
}

impl MotionTemplate {
    pub const ALL: [MotionTemplate; 6] = [
        MotionTemplate::StandSway,
        MotionTemplate::SquatCycle,
        MotionTemplate::Plank,
        MotionTemplate::Bridge,
        MotionTemplate::Supine,
        MotionTemplate::SitToStand,
    ];

    fn period(self) -> f64 {
        match self {
            MotionTemplate::StandSway => 5.0,
            MotionTemplate::SquatCycle => 6.0,
            MotionTemplate::Plank => 5.0,
            MotionTemplate::Bridge => 6.0,
            MotionTemplate::Supine => 8.0,
            MotionTemplate::SitToStand => 20.0,
        }
    }
}

impl fmt::Display for MotionTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MotionTemplate::StandSway => "stand_sway",
            MotionTemplate::SquatCycle => "squat_cycle",
            MotionTemplate::Plank => "plank",
            MotionTemplate::Bridge => "bridge",
            MotionTemplate::Supine => "supine",
            MotionTemplate::SitToStand => "sit_to_stand",
        })
    }
}

impl FromStr for MotionTemplate {
    type Err = PoseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MotionTemplate::ALL
            .into_iter()
            .find(|t| t.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| PoseError::UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionSpec {
    pub template: MotionTemplate,
    /// Seconds.
    pub duration: f64,
    /// Frames per second.
    pub fps: f64,
    /// Meters of smooth positional jitter on the root and free limbs.
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl MotionSpec {
    pub fn validate(&self) -> Result<(), PoseError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(PoseError::InvalidSpec("duration must be positive"));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(PoseError::InvalidSpec("fps must be positive"));
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return Err(PoseError::InvalidSpec(
                "noise amplitude must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.fps).round() as usize
    }
}

#[derive(Debug, Clone, Copy)]
struct Limb {
    upper: Vec3,
    lower: Vec3,
}

impl Limb {
    fn straight(dir: Vec3) -> Self {
        Self {
            upper: dir,
            lower: dir,
        }
    }
}

/// Segment directions; index 0 of each pair is the body's left side.
#[derive(Debug, Clone, Copy)]
struct Posture {
    pelvis: Vec3,
    /// Pelvis to neck.
    up: Vec3,
    /// Direction the chest faces.
    face: Vec3,
    /// Neck to head center.
    head: Vec3,
    /// Direction the nose points.
    head_face: Vec3,
    arms: [Limb; 2],
    legs: [Limb; 2],
    /// Heel-to-toe direction.
    feet: [Vec3; 2],
}

impl Posture {
    fn rest() -> Self {
        Self {
            pelvis: Vec3::default(),
            up: Vec3::Z,
            face: Vec3::Y,
            head: Vec3::Z,
            head_face: Vec3::Y,
            arms: [Limb::straight(-Vec3::Z); 2],
            legs: [Limb::straight(-Vec3::Z); 2],
            feet: [Vec3::Y; 2],
        }
    }
}

/// Anatomical target positions derived from a posture.
struct Targets {
    pelvis: Vec3,
    neck: Vec3,
    hip: [Vec3; 2],
    shoulder: [Vec3; 2],
    elbow: [Vec3; 2],
    wrist: [Vec3; 2],
    knee: [Vec3; 2],
    ankle: [Vec3; 2],
    nose: Vec3,
    eye: [Vec3; 2],
    ear: [Vec3; 2],
    heel: [Vec3; 2],
    big_toe: [Vec3; 2],
    small_toe: [Vec3; 2],
}

const SIDE: [f64; 2] = [1.0, -1.0];

fn targets(p: &Posture, s: f64) -> Targets {
    let left = p.up.cross(p.face).normalized();
    let head_left = p.head.cross(p.head_face).normalized();
    let neck = p.pelvis + p.up * (0.52 * s);
    let head_center = neck + p.head * (0.14 * s);
    let nose = head_center + p.head_face * (0.09 * s);
    let hip = SIDE.map(|k| p.pelvis + left * (k * 0.10 * s));
    let shoulder = SIDE.map(|k| neck + left * (k * 0.18 * s));
    let elbow = [0, 1].map(|i| shoulder[i] + p.arms[i].upper * (0.30 * s));
    let wrist = [0, 1].map(|i| elbow[i] + p.arms[i].lower * (0.26 * s));
    let knee = [0, 1].map(|i| hip[i] + p.legs[i].upper * (0.44 * s));
    let ankle = [0, 1].map(|i| knee[i] + p.legs[i].lower * (0.42 * s));
    let heel = [0, 1].map(|i| ankle[i] + p.legs[i].lower * (0.05 * s) - p.feet[i] * (0.05 * s));
    let big_toe = [0, 1].map(|i| ankle[i] + p.legs[i].lower * (0.06 * s) + p.feet[i] * (0.16 * s));
    let small_toe =
        [0, 1].map(|i| big_toe[i] + left * (SIDE[i] * 0.04 * s) - p.feet[i] * (0.02 * s));
    let eye = SIDE.map(|k| {
        nose + p.head * (0.035 * s) + head_left * (k * 0.035 * s) - p.head_face * (0.02 * s)
    });
    let ear = SIDE.map(|k| head_center + head_left * (k * 0.075 * s));
    Targets {
        pelvis: p.pelvis,
        neck,
        hip,
        shoulder,
        elbow,
        wrist,
        knee,
        ankle,
        nose,
        eye,
        ear,
        heel,
        big_toe,
        small_toe,
    }
}

fn joint_targets(kind: SkeletonKind, t: &Targets) -> Vec<Vec3> {
    const L: usize = 0;
    const R: usize = 1;
    match kind {
        SkeletonKind::Coco17 => vec![
            t.nose,
            t.eye[L],
            t.eye[R],
            t.ear[L],
            t.ear[R],
            t.shoulder[L],
            t.shoulder[R],
            t.elbow[L],
            t.elbow[R],
            t.wrist[L],
            t.wrist[R],
            t.hip[L],
            t.hip[R],
            t.knee[L],
            t.knee[R],
            t.ankle[L],
            t.ankle[R],
        ],
        SkeletonKind::Body25 => vec![
            t.nose,
            t.neck,
            t.shoulder[R],
            t.elbow[R],
            t.wrist[R],
            t.shoulder[L],
            t.elbow[L],
            t.wrist[L],
            t.pelvis,
            t.hip[R],
            t.knee[R],
            t.ankle[R],
            t.hip[L],
            t.knee[L],
            t.ankle[L],
            t.eye[R],
            t.eye[L],
            t.ear[R],
            t.ear[L],
            t.big_toe[L],
            t.small_toe[L],
            t.heel[L],
            t.big_toe[R],
            t.small_toe[R],
            t.heel[R],
        ],
    }
}

/// Tree re-attachment at fixed lengths.
struct Kinematics {
    order: Vec<usize>,
    parents: Vec<Option<usize>>,
    lengths: Vec<f64>,
    rest_dirs: Vec<Vec3>,
}

impl Kinematics {
    fn new(skeleton: &Skeleton, scale: f64) -> Self {
        let rest = joint_targets(skeleton.kind(), &targets(&Posture::rest(), scale));
        let parents = skeleton.parents();
        let mut lengths = vec![0.0; rest.len()];
        let mut rest_dirs = vec![Vec3::Z; rest.len()];
        for (j, parent) in parents.iter().enumerate() {
            if let Some(p) = *parent {
                let d = rest[j] - rest[p];
                lengths[j] = d.norm();
                rest_dirs[j] = d.normalized();
            }
        }
        Self {
            order: skeleton.topological_order(),
            parents,
            lengths,
            rest_dirs,
        }
    }

    fn solve(&self, target: &[Vec3]) -> Vec<Vec3> {
        let mut pos = target.to_vec();
        for &j in &self.order {
            if let Some(p) = self.parents[j] {
                let d = target[j] - pos[p];
                let dir = if d.norm() > 1e-12 {
                    d.normalized()
                } else {
                    self.rest_dirs[j]
                };
                pos[j] = pos[p] + dir * self.lengths[j];
            }
        }
        pos
    }
}

/// Smooth bounded noise: a sum of three low-frequency sinusoids, |n(t)| <= 1.
#[derive(Debug, Clone, Copy)]
struct NoiseChannel {
    terms: [(f64, f64, f64); 3],
}

impl NoiseChannel {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut weights = [0.0; 3];
        for w in &mut weights {
            *w = rng.random_range(0.2..1.0);
        }
        let total: f64 = weights.iter().sum();
        let terms = weights.map(|w| {
            let freq = rng.random_range(0.05..0.3);
            let phase = rng.random_range(0.0..TAU);
            (w / total, freq, phase)
        });
        Self { terms }
    }

    fn at(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|(a, f, ph)| a * (TAU * f * t + ph).sin())
            .sum()
    }
}

const CH_ROOT_X: usize = 0;
const CH_ROOT_Y: usize = 1;
const CH_HEAD: usize = 2;
const CH_ARM: [usize; 2] = [3, 4];
const CH_FOREARM: [usize; 2] = [5, 6];
const CHANNELS: usize = 7;

/// Named joints a template keeps on the plane or uses to place itself.
#[derive(Debug, Clone, Copy)]
enum JointSet {
    Feet,
    WristsAnkles,
    ShouldersFeet,
    ShouldersHips,
    AnklesNose,
    Ankles,
    All,
}

impl JointSet {
    fn indices(self, skeleton: &Skeleton) -> Vec<usize> {
        let has_heels = skeleton.joint_index("left_heel").is_some();
        let names: Vec<&str> = match self {
            JointSet::Feet if has_heels => {
                vec!["left_heel", "right_heel", "left_big_toe", "right_big_toe"]
            }
            JointSet::Feet | JointSet::Ankles => vec!["left_ankle", "right_ankle"],
            JointSet::WristsAnkles => {
                vec!["left_wrist", "right_wrist", "left_ankle", "right_ankle"]
            }
            JointSet::ShouldersFeet => {
                let mut v = vec!["left_shoulder", "right_shoulder"];
                v.extend(JointSet::Feet.names_for(has_heels));
                v
            }
            JointSet::ShouldersHips => {
                vec!["left_shoulder", "right_shoulder", "left_hip", "right_hip"]
            }
            JointSet::AnklesNose => vec!["left_ankle", "right_ankle", "nose"],
            JointSet::All => return (0..skeleton.joint_count()).collect(),
        };
        names
            .iter()
            .map(|n| {
                skeleton
                    .joint_index(n)
                    .expect("joint present in both skeletons")
            })
            .collect()
    }

    fn names_for(self, has_heels: bool) -> Vec<&'static str> {
        if has_heels {
            vec!["left_heel", "right_heel", "left_big_toe", "right_big_toe"]
        } else {
            vec!["left_ankle", "right_ankle"]
        }
    }
}

struct Placement {
    contact: JointSet,
    anchor: JointSet,
    anchor_xy: (f64, f64),
}

fn smooth_cycle(phi: f64) -> f64 {
    0.5 * (1.0 - phi.cos())
}

/// Direction `base` tilted toward `toward` by `angle` (both unit, orthogonal).
fn tilt(base: Vec3, toward: Vec3, angle: f64) -> Vec3 {
    base * angle.cos() + toward * angle.sin()
}

fn template_posture(template: MotionTemplate, phi: f64, s: f64) -> (Posture, Placement) {
    let centered = |contact, anchor| Placement {
        contact,
        anchor,
        anchor_xy: MAT_CENTER,
    };
    match template {
        MotionTemplate::StandSway => {
            let up =
                Vec3::new(0.035 * phi.sin(), 0.025 * (0.5 * phi + 1.0).sin(), 1.0).normalized();
            let face = (Vec3::Y - up * up.dot(Vec3::Y)).normalized();
            let swing = 0.08 * phi.sin();
            let p = Posture {
                up,
                face,
                head: up,
                head_face: face,
                arms: [
                    Limb::straight(tilt(-up, face, swing)),
                    Limb::straight(tilt(-up, face, -swing)),
                ],
                legs: [Limb::straight(-up); 2],
                feet: [face; 2],
                ..Posture::rest()
            };
            (p, centered(JointSet::Feet, JointSet::Feet))
        }
        MotionTemplate::SquatCycle => {
            let q = smooth_cycle(phi);
            let lean = 0.45 * q;
            let up = tilt(Vec3::Z, Vec3::Y, lean);
            let face = tilt(Vec3::Y, -Vec3::Z, lean);
            let thigh = tilt(-Vec3::Z, Vec3::Y, 1.25 * q);
            let shin = tilt(-Vec3::Z, -Vec3::Y, 0.55 * q);
            let arm = tilt(-Vec3::Z, Vec3::Y, 1.2 * q);
            let p = Posture {
                up,
                face,
                head: tilt(Vec3::Z, Vec3::Y, 0.2 * q),
                head_face: tilt(Vec3::Y, -Vec3::Z, 0.2 * q),
                arms: [Limb::straight(arm); 2],
                legs: [Limb {
                    upper: thigh,
                    lower: shin,
                }; 2],
                feet: [Vec3::Y; 2],
                ..Posture::rest()
            };
            (p, centered(JointSet::Feet, JointSet::Feet))
        }
        MotionTemplate::Plank => {
            // Straight body on hands and toes: wrists and ankles level when
            // (trunk + leg length) * sin(theta) equals the arm length.
            let theta = (0.56f64 / 1.38).asin();
            let body = Vec3::new(0.0, theta.cos(), theta.sin());
            let face = Vec3::new(0.0, theta.sin(), -theta.cos());
            let nod = 0.25 + 0.15 * phi.sin();
            let p = Posture {
                pelvis: Vec3::new(0.0, 0.02 * s * phi.sin(), 0.0),
                up: body,
                face,
                head: tilt(body, face, nod),
                head_face: tilt(face, -body, nod),
                arms: [Limb::straight(-Vec3::Z); 2],
                legs: [Limb::straight(-body); 2],
                feet: [-Vec3::Y; 2],
            };
            (p, centered(JointSet::WristsAnkles, JointSet::WristsAnkles))
        }
        MotionTemplate::Bridge => {
            let lift = 0.22 * s * smooth_cycle(phi);
            let trunk = 0.52 * s;
            let run = (trunk * trunk - lift * lift).sqrt();
            let pelvis = Vec3::new(0.0, 0.0, lift);
            let up = Vec3::new(0.0, run, -lift) * (1.0 / trunk);
            let face = Vec3::new(0.0, lift, run) * (1.0 / trunk);
            let (l1, l2, reach) = (0.44 * s, 0.42 * s, 0.55 * s);
            // two-link solve for a knee above the hip-ankle line
            let span = Vec3::new(0.0, -reach, -lift);
            let d = span.norm();
            let u = span * (1.0 / d);
            let mut w = Vec3::new(0.0, -u.z, u.y);
            if w.z < 0.0 {
                w = -w;
            }
            let cos_a = ((l1 * l1 + d * d - l2 * l2) / (2.0 * l1 * d)).clamp(-1.0, 1.0);
            let sin_a = (1.0 - cos_a * cos_a).sqrt();
            let thigh = u * cos_a + w * sin_a;
            let knee_rel = thigh * l1;
            let shin = (span - knee_rel).normalized();
            let p = Posture {
                pelvis,
                up,
                face,
                head: Vec3::Y,
                head_face: Vec3::Z,
                arms: [Limb::straight(-Vec3::Y); 2],
                legs: [Limb {
                    upper: thigh,
                    lower: shin,
                }; 2],
                feet: [-Vec3::Y; 2],
            };
            (
                p,
                centered(JointSet::ShouldersFeet, JointSet::ShouldersFeet),
            )
        }
        MotionTemplate::Supine => {
            let abduct = 0.25 + 0.6 * smooth_cycle(phi);
            let p = Posture {
                up: Vec3::Y,
                face: Vec3::Z,
                head: Vec3::Y,
                head_face: Vec3::Z,
                arms: [
                    Limb::straight(tilt(-Vec3::Y, Vec3::X, abduct)),
                    Limb::straight(tilt(-Vec3::Y, -Vec3::X, abduct)),
                ],
                legs: [Limb::straight(-Vec3::Y); 2],
                feet: [Vec3::Z; 2],
                ..Posture::rest()
            };
            (p, centered(JointSet::ShouldersHips, JointSet::AnklesNose))
        }
        MotionTemplate::SitToStand => {
            let q = smooth_cycle(phi);
            let rise = q * PI / 2.0;
            let lean = 0.7 * (PI * q).sin();
            let reach = 1.2 * (PI * q).sin();
            let leg = tilt(Vec3::Y, -Vec3::Z, rise);
            let up = tilt(Vec3::Z, Vec3::Y, lean);
            let face = tilt(Vec3::Y, -Vec3::Z, lean);
            let p = Posture {
                up,
                face,
                head: up,
                head_face: face,
                arms: [Limb::straight(tilt(-Vec3::Z, Vec3::Y, reach)); 2],
                legs: [Limb::straight(leg); 2],
                feet: [tilt(Vec3::Z, Vec3::Y, rise); 2],
                ..Posture::rest()
            };
            (
                p,
                Placement {
                    contact: JointSet::All,
                    anchor: JointSet::Ankles,
                    anchor_xy: (MAT_CENTER.0, 1.15),
                },
            )
        }
    }
}

/// Rotation axis used to perturb free limbs: lying templates swing limbs in
/// the floor plane, upright ones in the sagittal plane.
fn limb_noise_axis(template: MotionTemplate, p: &Posture) -> Option<Vec3> {
    match template {
        MotionTemplate::Plank => None,
        MotionTemplate::Bridge | MotionTemplate::Supine => Some(Vec3::Z),
        _ => Some(p.up.cross(p.face).normalized()),
    }
}

fn apply_noise(
    template: MotionTemplate,
    p: &mut Posture,
    noise: &[NoiseChannel],
    t: f64,
    amplitude: f64,
    s: f64,
) {
    if amplitude == 0.0 {
        return;
    }
    let head_axis = match template {
        MotionTemplate::Bridge | MotionTemplate::Supine => p.head,
        _ => p.head.cross(p.head_face).normalized(),
    };
    let a = amplitude * noise[CH_HEAD].at(t) / (0.14 * s);
    p.head = p.head.rotated(head_axis, a);
    p.head_face = p.head_face.rotated(head_axis, a);
    if let Some(axis) = limb_noise_axis(template, p) {
        for i in 0..2 {
            let au = amplitude * noise[CH_ARM[i]].at(t) / (0.30 * s);
            let al = amplitude * noise[CH_FOREARM[i]].at(t) / (0.26 * s);
            p.arms[i].upper = p.arms[i].upper.rotated(axis, au);
            p.arms[i].lower = p.arms[i].lower.rotated(axis, au + al);
        }
    }
}

/// Generates `round(duration * fps)` frames of the requested template.
pub fn generate_motion(
    spec: &MotionSpec,
    skeleton: &Skeleton,
    subject: &SubjectProfile,
) -> Result<PoseSequence, PoseError> {
    spec.validate()?;
    let s = subject.height_scale();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phase0 = rng.random_range(0.0..TAU);
    let noise: Vec<NoiseChannel> = (0..CHANNELS).map(|_| NoiseChannel::new(&mut rng)).collect();
    let kin = Kinematics::new(skeleton, s);
    let period = spec.template.period();

    let n = spec.frame_count();
    let mut frames = Vec::with_capacity(n);
    let mut timestamps = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / spec.fps;
        let phi = TAU * t / period + phase0;
        let (mut posture, placement) = template_posture(spec.template, phi, s);
        apply_noise(
            spec.template,
            &mut posture,
            &noise,
            t,
            spec.noise_amplitude,
            s,
        );
        let target = joint_targets(skeleton.kind(), &targets(&posture, s));
        let mut joints = kin.solve(&target);

        let contact = placement.contact.indices(skeleton);
        let floor = contact
            .iter()
            .map(|&j| joints[j].z)
            .fold(f64::INFINITY, f64::min);
        let anchor = placement.anchor.indices(skeleton);
        let inv = 1.0 / anchor.len() as f64;
        let (ax, ay) = anchor.iter().fold((0.0, 0.0), |(x, y), &j| {
            (x + joints[j].x * inv, y + joints[j].y * inv)
        });
        let shift = Vec3::new(
            placement.anchor_xy.0 - ax + spec.noise_amplitude * noise[CH_ROOT_X].at(t),
            placement.anchor_xy.1 - ay + spec.noise_amplitude * noise[CH_ROOT_Y].at(t),
            -floor,
        );
        for j in &mut joints {
            *j += shift;
        }
        frames.push(PoseFrame::new(joints)?);
        timestamps.push(t);
    }
    PoseSequence::new(skeleton.clone(), frames, timestamps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posekit::{build_skeleton, validate_pose_sequence};

    fn spec(template: MotionTemplate, seed: u64) -> MotionSpec {
        MotionSpec {
            template,
            duration: 20.0,
            fps: 10.0,
            noise_amplitude: 0.01,
            seed,
        }
    }

    fn subject() -> SubjectProfile {
        SubjectProfile::new("s1", 74.3, 178.0, "male").unwrap()
    }

    fn bone_lengths(seq: &PoseSequence) -> Vec<Vec<f64>> {
        seq.frames()
            .iter()
            .map(|f| {
                seq.skeleton()
                    .parent_edges()
                    .iter()
                    .map(|&(c, p)| (f.joints()[c] - f.joints()[p]).norm())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn stand_sway_frame_count_and_determinism() {
        let skel = build_skeleton(SkeletonKind::Coco17);
        let spec = MotionSpec {
            duration: 10.0,
            seed: 7,
            ..spec(MotionTemplate::StandSway, 7)
        };
        let a = generate_motion(&spec, &skel, &subject()).unwrap();
        let b = generate_motion(&spec, &skel, &subject()).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn plank_keeps_wrists_and_ankles_down() {
        for kind in [SkeletonKind::Coco17, SkeletonKind::Body25] {
            let skel = build_skeleton(kind);
            for noise in [0.0, 0.01, 0.05] {
                let spec = MotionSpec {
                    noise_amplitude: noise,
                    ..spec(MotionTemplate::Plank, 3)
                };
                let seq = generate_motion(&spec, &skel, &subject()).unwrap();
                let ids: Vec<usize> = ["left_wrist", "right_wrist", "left_ankle", "right_ankle"]
                    .iter()
                    .map(|n| skel.joint_index(n).unwrap())
                    .collect();
                for f in seq.frames() {
                    for &j in &ids {
                        assert!(f.joints()[j].z <= 0.03, "{kind} joint {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn seeds_differ_but_bone_lengths_agree() {
        let skel = build_skeleton(SkeletonKind::Coco17);
        let a = generate_motion(&spec(MotionTemplate::SquatCycle, 1), &skel, &subject()).unwrap();
        let b = generate_motion(&spec(MotionTemplate::SquatCycle, 2), &skel, &subject()).unwrap();
        assert_ne!(a.frames(), b.frames());
        // brute-force pass over every frame of both sequences
        let la = bone_lengths(&a);
        let lb = bone_lengths(&b);
        let reference = &la[0];
        for frame in la.iter().chain(&lb) {
            for (l, r) in frame.iter().zip(reference) {
                assert!((l - r).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn every_template_is_valid_smooth_and_rigid() {
        for kind in [SkeletonKind::Coco17, SkeletonKind::Body25] {
            let skel = build_skeleton(kind);
            for template in MotionTemplate::ALL {
                for fps in [10.0, 30.0] {
                    let spec = MotionSpec {
                        fps,
                        duration: 32.0,
                        ..spec(template, 11)
                    };
                    let seq = generate_motion(&spec, &skel, &subject()).unwrap();
                    let report = validate_pose_sequence(&seq);
                    assert!(report.is_clean(), "{template} {kind}: {report:?}");

                    let lengths = bone_lengths(&seq);
                    for b in 0..lengths[0].len() {
                        let mean = lengths.iter().map(|l| l[b]).sum::<f64>() / lengths.len() as f64;
                        for l in &lengths {
                            assert!((l[b] - mean).abs() < 1e-9, "{template} bone {b}");
                        }
                    }

                    let limit = 0.5 / fps;
                    for w in seq.frames().windows(2) {
                        for (p, q) in w[0].joints().iter().zip(w[1].joints()) {
                            let step = (*q - *p).norm();
                            assert!(step <= limit, "{template} {kind} step {step} > {limit}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        let skel = build_skeleton(SkeletonKind::Coco17);
        for (d, f) in [(0.0, 10.0), (10.0, 0.0), (-1.0, 10.0)] {
            let spec = MotionSpec {
                duration: d,
                fps: f,
                ..spec(MotionTemplate::Supine, 0)
            };
            assert!(matches!(
                generate_motion(&spec, &skel, &subject()),
                Err(PoseError::InvalidSpec(_))
            ));
        }
    }

    #[test]
    fn template_names_round_trip() {
        for t in MotionTemplate::ALL {
            assert_eq!(t.to_string().parse::<MotionTemplate>().unwrap(), t);
        }
        assert!("cartwheel".parse::<MotionTemplate>().is_err());
    }
}
