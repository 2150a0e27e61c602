use crate::posekit::SubjectProfile;

use super::DataError;

/// Half the period of a 10 fps stream, in seconds.
pub const DEFAULT_TOLERANCE: f64 = 0.075;

/// Source frame indices selected for one retained pressure frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedEntry {
    pub pose_index: usize,
    pub deform_index: usize,
    pub pressure_index: usize,
    /// Timestamp of the pressure frame.
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub subject: SubjectProfile,
    pub entries: Vec<AlignedEntry>,
}

impl AlignedDataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Index of the element of sorted `ts` closest to `t`; ties go to the
/// earlier frame.
fn nearest(ts: &[f64], t: f64) -> usize {
    let i = ts.partition_point(|&x| x < t);
    if i == 0 {
        return 0;
    }
    if i == ts.len() {
        return ts.len() - 1;
    }
    if t - ts[i - 1] <= ts[i] - t {
        i - 1
    } else {
        i
    }
}

fn check(name: &'static str, ts: &[f64]) -> Result<(), DataError> {
    if ts.is_empty() {
        return Err(DataError::EmptyStream(name));
    }
    if ts.iter().any(|t| !t.is_finite()) || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DataError::FormatError(format!(
            "{name} timestamps must be finite and strictly increasing"
        )));
    }
    Ok(())
}

/// For every pressure timestamp, picks the nearest pose and deformation
/// frames and keeps the entry when both lie within `tolerance` seconds.
pub fn align_timestamps(
    pose: &[f64],
    deform: &[f64],
    pressure: &[f64],
    tolerance: f64,
) -> Result<Vec<AlignedEntry>, DataError> {
    check("pose", pose)?;
    check("deformation", deform)?;
    check("pressure", pressure)?;
    let entries: Vec<AlignedEntry> = pressure
        .iter()
        .enumerate()
        .filter_map(|(k, &t)| {
            let p = nearest(pose, t);
            let d = nearest(deform, t);
            ((pose[p] - t).abs() <= tolerance && (deform[d] - t).abs() <= tolerance).then_some(
                AlignedEntry {
                    pose_index: p,
                    deform_index: d,
                    pressure_index: k,
                    timestamp: t,
                },
            )
        })
        .collect();
    if entries.is_empty() {
        return Err(DataError::NoOverlap);
    }
    Ok(entries)
}

pub fn align_streams(
    subject: &SubjectProfile,
    pose: &[f64],
    deform: &[f64],
    pressure: &[f64],
    tolerance: f64,
) -> Result<AlignedDataset, DataError> {
    Ok(AlignedDataset {
        subject: subject.clone(),
        entries: align_timestamps(pose, deform, pressure, tolerance)?,
    })
}
