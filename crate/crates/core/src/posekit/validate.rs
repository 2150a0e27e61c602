use super::PoseSequence;

/// Maximum bone-length standard deviation, as a fraction of the mean length.
const BONE_LENGTH_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite { frame: usize },
    NonMonotonicTimestamp { index: usize },
    BoneLengthVariance { bone: usize, relative_std: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Reports non-finite frames, timestamp regressions and unstable bone lengths.
pub fn validate_pose_sequence(seq: &PoseSequence) -> ValidationReport {
    let mut violations = Vec::new();
    let mut finite = vec![true; seq.len()];
    for (i, frame) in seq.frames().iter().enumerate() {
        if frame.joints().iter().any(|j| !j.is_finite()) {
            finite[i] = false;
            violations.push(Violation::NonFinite { frame: i });
        }
    }
    for (i, w) in seq.timestamps().windows(2).enumerate() {
        if !(w[1] > w[0]) {
            violations.push(Violation::NonMonotonicTimestamp { index: i + 1 });
        }
    }
    for (bone, &(child, parent)) in seq.skeleton().parent_edges().iter().enumerate() {
        let lengths: Vec<f64> = seq
            .frames()
            .iter()
            .zip(&finite)
            .filter(|(_, ok)| **ok)
            .map(|(f, _)| (f.joints()[child] - f.joints()[parent]).norm())
            .collect();
        if lengths.len() < 2 {
            continue;
        }
        let n = lengths.len() as f64;
        let mean = lengths.iter().sum::<f64>() / n;
        let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        let relative_std = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
        if relative_std > BONE_LENGTH_TOLERANCE {
            violations.push(Violation::BoneLengthVariance { bone, relative_std });
        }
    }
    ValidationReport { violations }
}
