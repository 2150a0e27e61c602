use std::ops::Range;

use crate::grid::{DeformationFrame, PressureFrame, GRID_CELLS, GRID_COLS, GRID_ROWS};
use crate::neuralnet::{SampleSource, Tensor};

use super::normalize::row_profile;
use super::{make_windows, AlignedEntry, DataError, Normalization, Window};

/// Normalized aligned frames of one or more sequences plus the windows cut
/// from each. Windows never span two sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    joints: usize,
    width: usize,
    norm: Normalization,
    pose: Vec<f32>,
    deform: Vec<f32>,
    pressure: Vec<f32>,
    /// First aligned frame of each window.
    starts: Vec<usize>,
    sequences: Vec<Range<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputSelection {
    Pose,
    Deformation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    /// The full pressure frame.
    Pressure,
    /// The pressure frame with each row replaced by its mean.
    RowProfile,
}

impl WindowedDataset {
    pub fn new(joints: usize, width: usize, norm: Normalization) -> Self {
        Self {
            joints,
            width,
            norm,
            pose: Vec::new(),
            deform: Vec::new(),
            pressure: Vec::new(),
            starts: Vec::new(),
            sequences: Vec::new(),
        }
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Window index ranges, one per appended sequence.
    pub fn sequences(&self) -> &[Range<usize>] {
        &self.sequences
    }

    fn frames(&self) -> usize {
        self.pressure.len() / GRID_CELLS
    }

    /// Appends the aligned frames of one sequence and its windows; returns
    /// the new window indices.
    pub fn push_sequence(
        &mut self,
        entries: &[AlignedEntry],
        pose: &[Vec<f32>],
        deform: &[DeformationFrame],
        pressure: &[PressureFrame],
    ) -> Result<Range<usize>, DataError> {
        let windows = make_windows(entries.len(), self.width)?;
        for e in entries {
            let (p, d, q) = (
                pose.get(e.pose_index),
                deform.get(e.deform_index),
                pressure.get(e.pressure_index),
            );
            let (Some(p), Some(d), Some(q)) = (p, d, q) else {
                return Err(DataError::Mismatch(format!(
                    "aligned entry at t = {} points past a stream end",
                    e.timestamp
                )));
            };
            if p.len() != self.joints * 3 {
                return Err(DataError::Mismatch(format!(
                    "pose frame has {} values, expected {}",
                    p.len(),
                    self.joints * 3
                )));
            }
            let n = &self.norm;
            self.pose.extend(p.iter().map(|v| v / n.pose_scale));
            self.deform
                .extend(d.values().iter().map(|&v| f32::from(v) / n.deform_max));
            self.pressure
                .extend(q.values().iter().map(|v| v / n.pressure_max));
        }
        let base = self.frames() - entries.len();
        let first = self.starts.len();
        self.starts.extend(windows.iter().map(|w| base + w.start));
        let range = first..self.starts.len();
        self.sequences.push(range.clone());
        Ok(range)
    }

    /// Window `i` in raw units.
    pub fn window(&self, i: usize) -> Window {
        let s = self.starts[i];
        let jp = self.joints * 3;
        Window {
            joints: self.joints,
            pose: self.pose[s * jp..(s + self.width) * jp].to_vec(),
            deform: self.deform[s * GRID_CELLS..(s + self.width) * GRID_CELLS].to_vec(),
            target: self.target_slice(i).to_vec(),
        }
        .denormalize(&self.norm)
    }

    fn target_slice(&self, i: usize) -> &[f32] {
        let t = self.starts[i] + self.width - 1;
        &self.pressure[t * GRID_CELLS..(t + 1) * GRID_CELLS]
    }

    /// Normalized target pressure of window `i`.
    pub fn target(&self, i: usize) -> &[f32] {
        self.target_slice(i)
    }

    pub fn view(
        &self,
        windows: Vec<usize>,
        input: InputSelection,
        target: TargetKind,
    ) -> WindowView<'_> {
        WindowView {
            data: self,
            windows,
            input,
            target,
        }
    }
}

/// A subset of windows presented as network samples.
#[derive(Debug, Clone)]
pub struct WindowView<'a> {
    data: &'a WindowedDataset,
    windows: Vec<usize>,
    input: InputSelection,
    target: TargetKind,
}

impl WindowView<'_> {
    pub fn windows(&self) -> &[usize] {
        &self.windows
    }
}

impl SampleSource<f32> for WindowView<'_> {
    fn len(&self) -> usize {
        self.windows.len()
    }

    fn batch(&self, indices: &[usize]) -> (Vec<Tensor<f32>>, Tensor<f32>) {
        let d = self.data;
        let w = d.width;
        let b = indices.len();
        let (per, shape, src) = match self.input {
            InputSelection::Pose => (d.joints * 3, vec![b, w, d.joints, 3], &d.pose),
            InputSelection::Deformation => {
                (GRID_CELLS, vec![b, w, GRID_ROWS, GRID_COLS], &d.deform)
            }
        };
        let mut x = Vec::with_capacity(b * w * per);
        let mut y = Vec::with_capacity(b * GRID_CELLS);
        for &k in indices {
            let win = self.windows[k];
            let s = d.starts[win];
            x.extend_from_slice(&src[s * per..(s + w) * per]);
            match self.target {
                TargetKind::Pressure => y.extend_from_slice(d.target_slice(win)),
                TargetKind::RowProfile => y.extend(row_profile(d.target_slice(win))),
            }
        }
        (
            vec![Tensor::new(shape, x).expect("window shape")],
            Tensor::new(vec![b, GRID_ROWS, GRID_COLS], y).expect("target shape"),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn entries(n: usize) -> Vec<AlignedEntry> {
        (0..n)
            .map(|i| AlignedEntry {
                pose_index: 3 * i,
                deform_index: i,
                pressure_index: i,
                timestamp: i as f64 / 10.0,
            })
            .collect()
    }

    fn sequence(n: usize, tag: f32) -> (Vec<Vec<f32>>, Vec<DeformationFrame>, Vec<PressureFrame>) {
        let pose = (0..3 * n)
            .map(|i| vec![tag + i as f32 * 0.01; 51])
            .collect();
        let deform = (0..n)
            .map(|i| Grid::from_vec(vec![(i % 256) as u8; GRID_CELLS]).unwrap())
            .collect();
        let pressure = (0..n)
            .map(|i| Grid::pressure(vec![i as f32 * 10.0; GRID_CELLS]).unwrap())
            .collect();
        (pose, deform, pressure)
    }

    #[test]
    fn windows_stay_inside_sequences() {
        let mut ds = WindowedDataset::new(17, 10, Normalization::default());
        let (p, d, q) = sequence(30, 0.0);
        assert_eq!(ds.push_sequence(&entries(30), &p, &d, &q).unwrap(), 0..20);
        let (p, d, q) = sequence(15, 1.0);
        assert_eq!(ds.push_sequence(&entries(15), &p, &d, &q).unwrap(), 20..25);
        assert_eq!(ds.len(), 25);
        let w = ds.window(20);
        assert!((w.pose[0] - 1.0).abs() < 1e-6);
        assert!((w.target[0] - 90.0).abs() < 1e-3);
        let w = ds.window(3);
        assert!((w.deform[9 * GRID_CELLS] - 12.0).abs() < 1e-4);
        assert!((w.pose[9 * 51] - 0.36).abs() < 1e-6);
    }

    #[test]
    fn view_batches() {
        let mut ds = WindowedDataset::new(17, 10, Normalization::default());
        let (p, d, q) = sequence(20, 0.0);
        ds.push_sequence(&entries(20), &p, &d, &q).unwrap();
        let v = ds.view(
            vec![4, 7],
            InputSelection::Deformation,
            TargetKind::Pressure,
        );
        let (x, y) = v.batch(&[1, 0]);
        assert_eq!(x[0].shape(), &[2, 10, 80, 28]);
        assert_eq!(y.data()[0], 160.0 / 5000.0);
        assert_eq!(y.data()[GRID_CELLS], 130.0 / 5000.0);
        let v = ds.view(vec![0], InputSelection::Pose, TargetKind::RowProfile);
        assert_eq!(v.batch(&[0]).0[0].shape(), &[1, 10, 17, 3]);
    }

    #[test]
    fn bad_entries_are_errors() {
        let mut ds = WindowedDataset::new(17, 10, Normalization::default());
        let (p, d, q) = sequence(12, 0.0);
        assert!(ds.push_sequence(&entries(5), &p, &d, &q).is_err());
        assert!(ds.push_sequence(&entries(20), &p, &d, &q).is_err());
    }
}
