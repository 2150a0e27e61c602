//! Binary sequence files.
//!
//! Layout (little-endian): magic `PSIM`, version u16, kind u8, reserved u8,
//! frame count u32, the f64 timestamps, then one payload block per frame.

use std::fs;
use std::path::Path;

use crate::grid::{DeformationFrame, Grid, PressureFrame, GRID_CELLS};
use crate::posekit::{build_skeleton, PoseFrame, PoseSequence, SkeletonKind, Vec3};

use super::DataError;

pub const SEQUENCE_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"PSIM";
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceKind {
    Pose17,
    Pose25,
    Deform,
    Pressure,
}

impl SequenceKind {
    pub fn code(self) -> u8 {
        match self {
            SequenceKind::Pose17 => 0,
            SequenceKind::Pose25 => 1,
            SequenceKind::Deform => 2,
            SequenceKind::Pressure => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        [
            SequenceKind::Pose17,
            SequenceKind::Pose25,
            SequenceKind::Deform,
            SequenceKind::Pressure,
        ]
        .into_iter()
        .find(|k| k.code() == code)
    }

    /// Payload bytes per frame.
    pub fn frame_bytes(self) -> usize {
        match self {
            SequenceKind::Pose17 => 17 * 3 * 4,
            SequenceKind::Pose25 => 25 * 3 * 4,
            SequenceKind::Deform => GRID_CELLS,
            SequenceKind::Pressure => GRID_CELLS * 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Per frame, `J * 3` coordinates in meters, joint-major.
    Pose {
        joints: usize,
        frames: Vec<Vec<f32>>,
    },
    Deform(Vec<DeformationFrame>),
    Pressure(Vec<PressureFrame>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::Pose { frames, .. } => frames.len(),
            Payload::Deform(f) => f.len(),
            Payload::Pressure(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFile {
    timestamps: Vec<f64>,
    payload: Payload,
}

fn check_timestamps(ts: &[f64]) -> Result<(), DataError> {
    if let Some(i) = ts.iter().position(|t| !t.is_finite()) {
        return Err(DataError::FormatError(format!(
            "timestamp {i} is not finite"
        )));
    }
    if let Some(i) = ts.windows(2).position(|w| w[1] <= w[0]) {
        return Err(DataError::FormatError(format!(
            "timestamps not strictly increasing at frame {}",
            i + 1
        )));
    }
    Ok(())
}

impl SequenceFile {
    pub fn new(timestamps: Vec<f64>, payload: Payload) -> Result<Self, DataError> {
        check_timestamps(&timestamps)?;
        if timestamps.len() != payload.len() {
            return Err(DataError::FormatError(format!(
                "{} timestamps for {} frames",
                timestamps.len(),
                payload.len()
            )));
        }
        if let Payload::Pose { joints, frames } = &payload {
            if *joints != 17 && *joints != 25 {
                return Err(DataError::FormatError(format!(
                    "unsupported joint count {joints}"
                )));
            }
            if let Some(i) = frames.iter().position(|f| f.len() != joints * 3) {
                return Err(DataError::FormatError(format!(
                    "pose frame {i} has wrong size"
                )));
            }
        }
        Ok(Self {
            timestamps,
            payload,
        })
    }

    pub fn kind(&self) -> SequenceKind {
        match &self.payload {
            Payload::Pose { joints: 17, .. } => SequenceKind::Pose17,
            Payload::Pose { .. } => SequenceKind::Pose25,
            Payload::Deform(_) => SequenceKind::Deform,
            Payload::Pressure(_) => SequenceKind::Pressure,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.timestamps.len()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn from_poses(poses: &PoseSequence) -> Result<Self, DataError> {
        let joints = poses.skeleton().joint_count();
        let frames = poses
            .frames()
            .iter()
            .map(|f| {
                f.joints()
                    .iter()
                    .flat_map(|j| [j.x as f32, j.y as f32, j.z as f32])
                    .collect()
            })
            .collect();
        Self::new(
            poses.timestamps().to_vec(),
            Payload::Pose { joints, frames },
        )
    }

    /// Pose payload as a sequence on the matching skeleton.
    pub fn to_poses(&self) -> Result<PoseSequence, DataError> {
        let Payload::Pose { joints, frames } = &self.payload else {
            return Err(DataError::Mismatch(format!(
                "{:?} file holds no poses",
                self.kind()
            )));
        };
        let kind = if *joints == 17 {
            SkeletonKind::Coco17
        } else {
            SkeletonKind::Body25
        };
        let frames = frames
            .iter()
            .map(|f| {
                PoseFrame::new_unchecked(
                    f.chunks_exact(3)
                        .map(|c| Vec3::new(f64::from(c[0]), f64::from(c[1]), f64::from(c[2])))
                        .collect(),
                )
            })
            .collect();
        PoseSequence::new(build_skeleton(kind), frames, self.timestamps.clone())
            .map_err(|e| DataError::FormatError(e.to_string()))
    }

    pub fn deformation(&self) -> Option<&[DeformationFrame]> {
        match &self.payload {
            Payload::Deform(f) => Some(f),
            _ => None,
        }
    }

    pub fn pressure(&self) -> Option<&[PressureFrame]> {
        match &self.payload {
            Payload::Pressure(f) => Some(f),
            _ => None,
        }
    }
}

pub fn sequence_to_bytes(seq: &SequenceFile) -> Vec<u8> {
    let kind = seq.kind();
    let n = seq.frame_count();
    let mut buf = Vec::with_capacity(HEADER_LEN + n * (8 + kind.frame_bytes()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&SEQUENCE_VERSION.to_le_bytes());
    buf.push(kind.code());
    buf.push(0);
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    for t in &seq.timestamps {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    match &seq.payload {
        Payload::Pose { frames, .. } => {
            for v in frames.iter().flatten() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Payload::Deform(frames) => {
            for f in frames {
                buf.extend_from_slice(f.values());
            }
        }
        Payload::Pressure(frames) => {
            for v in frames.iter().flat_map(|f| f.values()) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    buf
}

fn f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect()
}

pub fn sequence_from_bytes(bytes: &[u8]) -> Result<SequenceFile, DataError> {
    let bad = |m: String| DataError::FormatError(m);
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SEQUENCE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let kind = SequenceKind::from_code(bytes[6])
        .ok_or_else(|| bad(format!("unknown kind code {}", bytes[6])))?;
    if bytes[7] != 0 {
        return Err(bad("reserved byte is not zero".into()));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let expected = (n as u64) * (8 + kind.frame_bytes() as u64) + HEADER_LEN as u64;
    if bytes.len() as u64 != expected {
        return Err(bad(format!(
            "expected {expected} bytes for {n} frames, found {}",
            bytes.len()
        )));
    }
    let ts_end = HEADER_LEN + 8 * n;
    let timestamps: Vec<f64> = bytes[HEADER_LEN..ts_end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let blocks = bytes[ts_end..].chunks_exact(kind.frame_bytes());
    let payload = match kind {
        SequenceKind::Pose17 | SequenceKind::Pose25 => Payload::Pose {
            joints: if kind == SequenceKind::Pose17 { 17 } else { 25 },
            frames: blocks.map(f32s).collect(),
        },
        SequenceKind::Deform => Payload::Deform(
            blocks
                .map(|b| Grid::from_vec(b.to_vec()).expect("block size"))
                .collect(),
        ),
        SequenceKind::Pressure => Payload::Pressure(
            blocks
                .enumerate()
                .map(|(i, b)| Grid::pressure(f32s(b)).map_err(|e| bad(format!("frame {i}: {e}"))))
                .collect::<Result<_, _>>()?,
        ),
    };
    SequenceFile::new(timestamps, payload)
}

pub fn write_sequence(path: &Path, seq: &SequenceFile) -> Result<(), DataError> {
    fs::write(path, sequence_to_bytes(seq)).map_err(|source| DataError::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_sequence(path: &Path) -> Result<SequenceFile, DataError> {
    let bytes = fs::read(path).map_err(|source| DataError::IoFailure {
        path: path.to_path_buf(),
        source,
    })?;
    sequence_from_bytes(&bytes).map_err(|e| match e {
        DataError::FormatError(m) => DataError::FormatError(format!("{}: {m}", path.display())),
        e => e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * 0.1).collect()
    }

    #[test]
    fn pressure_round_trip() {
        let frames: Vec<PressureFrame> = (0..100)
            .map(|i| {
                Grid::pressure(
                    (0..GRID_CELLS)
                        .map(|c| ((i * 31 + c) % 5001) as f32)
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let seq = SequenceFile::new(ts(100), Payload::Pressure(frames)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.psim");
        write_sequence(&p, &seq).unwrap();
        assert_eq!(read_sequence(&p).unwrap(), seq);
    }

    #[test]
    fn boundary_payloads() {
        let full = Grid::from_vec(vec![255u8; GRID_CELLS]).unwrap();
        let zero = Grid::from_vec(vec![0u8; GRID_CELLS]).unwrap();
        let seq = SequenceFile::new(ts(2), Payload::Deform(vec![full, zero])).unwrap();
        assert_eq!(sequence_from_bytes(&sequence_to_bytes(&seq)).unwrap(), seq);
        let top = Grid::pressure(vec![5000.0; GRID_CELLS]).unwrap();
        let seq = SequenceFile::new(ts(1), Payload::Pressure(vec![top])).unwrap();
        assert_eq!(sequence_from_bytes(&sequence_to_bytes(&seq)).unwrap(), seq);
        let pose = vec![-1.5f32; 75];
        let seq = SequenceFile::new(
            ts(1),
            Payload::Pose {
                joints: 25,
                frames: vec![pose],
            },
        )
        .unwrap();
        assert_eq!(seq.kind(), SequenceKind::Pose25);
        assert_eq!(sequence_from_bytes(&sequence_to_bytes(&seq)).unwrap(), seq);
    }

    #[test]
    fn faults() {
        let seq = SequenceFile::new(ts(3), Payload::Deform(vec![Grid::zeros(); 3])).unwrap();
        let bytes = sequence_to_bytes(&seq);
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            sequence_from_bytes(&bad),
            Err(DataError::FormatError(_))
        ));
        for cut in [0, 5, 11, 20, bytes.len() - 1] {
            assert!(matches!(
                sequence_from_bytes(&bytes[..cut]),
                Err(DataError::FormatError(_))
            ));
        }
        let mut swapped = bytes.clone();
        swapped[12..20].copy_from_slice(&1.0f64.to_le_bytes());
        assert!(matches!(
            sequence_from_bytes(&swapped),
            Err(DataError::FormatError(_))
        ));
        let mut over = sequence_to_bytes(
            &SequenceFile::new(ts(1), Payload::Pressure(vec![Grid::zeros()])).unwrap(),
        );
        over[20..24].copy_from_slice(&5000.5f32.to_le_bytes());
        assert!(matches!(
            sequence_from_bytes(&over),
            Err(DataError::FormatError(_))
        ));
        assert!(
            SequenceFile::new(vec![0.0, 0.0], Payload::Deform(vec![Grid::zeros(); 2])).is_err()
        );
        let missing = read_sequence(Path::new("/nonexistent/x.psim")).unwrap_err();
        assert!(missing.to_string().contains("/nonexistent/x.psim"));
    }

    #[test]
    fn poses_round_trip_through_f32() {
        use crate::posekit::{generate_motion, MotionSpec, MotionTemplate, SubjectProfile};
        let subject = SubjectProfile::new("s", 70.0, 175.0, "f").unwrap();
        let spec = MotionSpec {
            template: MotionTemplate::SquatCycle,
            duration: 1.0,
            fps: 30.0,
            noise_amplitude: 0.01,
            seed: 3,
        };
        let poses =
            generate_motion(&spec, &build_skeleton(SkeletonKind::Coco17), &subject).unwrap();
        let file = SequenceFile::from_poses(&poses).unwrap();
        assert_eq!(file.kind(), SequenceKind::Pose17);
        let back = file.to_poses().unwrap();
        assert_eq!(SequenceFile::from_poses(&back).unwrap(), file);
        let err = back.frames()[5].joints()[3].x - poses.frames()[5].joints()[3].x;
        assert!(err.abs() < 1e-6);
    }
}
