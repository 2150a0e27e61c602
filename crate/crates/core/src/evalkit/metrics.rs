use crate::grid::GRID_COLS;

use super::EvalError;

/// A metric averaged over the frames it is defined on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameAverage {
    pub value: f64,
    /// Frames that contributed.
    pub frames: usize,
    /// Frames left out because the metric is undefined on them.
    pub skipped: usize,
}

fn pairs<'a, P, G, T, U>(pred: &'a [P], gt: &'a [G]) -> Result<Vec<(&'a [T], &'a [U])>, EvalError>
where
    P: AsRef<[T]>,
    G: AsRef<[U]>,
{
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    pred.iter()
        .zip(gt)
        .enumerate()
        .map(|(frame, (p, g))| {
            let (p, g) = (p.as_ref(), g.as_ref());
            if p.len() != g.len() {
                return Err(EvalError::ShapeMismatch {
                    frame,
                    pred: p.len(),
                    gt: g.len(),
                });
            }
            Ok((p, g))
        })
        .collect()
}

/// Mean absolute difference over every frame and cell.
pub fn mae<P, G, T>(pred: &[P], gt: &[G]) -> Result<f64, EvalError>
where
    P: AsRef<[T]>,
    G: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    let frames = pairs(pred, gt)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for (p, g) in frames {
        for (&a, &b) in p.iter().zip(g) {
            sum += (a.into() - b.into()).abs();
        }
        count += p.len();
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// 1 for cells strictly above zero, else 0.
pub fn binarize<T: Copy + Into<f64>>(frame: &[T]) -> Vec<f64> {
    frame
        .iter()
        .map(|&v| if v.into() > 0.0 { 1.0 } else { 0.0 })
        .collect()
}

fn frame_r2(p: &[f64], g: &[f64]) -> f64 {
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    let ss_tot: f64 = g.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = p.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Per-frame coefficient of determination about each frame's ground-truth
/// mean, averaged over frames. A frame with constant ground truth scores 1
/// when matched exactly and 0 otherwise.
pub fn r_squared<P, G, T>(pred: &[P], gt: &[G]) -> Result<f64, EvalError>
where
    P: AsRef<[T]>,
    G: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    let frames = pairs(pred, gt)?;
    if frames.is_empty() {
        return Ok(1.0);
    }
    let sum: f64 = frames
        .iter()
        .map(|(p, g)| {
            let p: Vec<f64> = p.iter().map(|&v| v.into()).collect();
            let g: Vec<f64> = g.iter().map(|&v| v.into()).collect();
            frame_r2(&p, &g)
        })
        .sum();
    Ok(sum / frames.len() as f64)
}

/// R² of the binarized maps.
pub fn binarized_r2<P, G, T>(pred: &[P], gt: &[G]) -> Result<f64, EvalError>
where
    P: AsRef<[T]>,
    G: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    let frames = pairs(pred, gt)?;
    let bp: Vec<Vec<f64>> = frames.iter().map(|(p, _)| binarize(p)).collect();
    let bg: Vec<Vec<f64>> = frames.iter().map(|(_, g)| binarize(g)).collect();
    r_squared(&bp, &bg)
}

/// Cells of one frame with ground truth above zero, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactMask {
    pub frame: usize,
    pub indices: Vec<(usize, usize)>,
}

impl ContactMask {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn contact_mask<T: Copy + Into<f64>>(frame: usize, gt: &[T]) -> ContactMask {
    ContactMask {
        frame,
        indices: gt
            .iter()
            .enumerate()
            .filter(|(_, &v)| v.into() > 0.0)
            .map(|(i, _)| (i / GRID_COLS, i % GRID_COLS))
            .collect(),
    }
}

/// Squared error mean and ground-truth variance over the contact cells of
/// one frame, or `None` for an empty mask.
fn masked_stats<T: Copy + Into<f64>>(p: &[T], g: &[T]) -> Option<(f64, f64)> {
    let cells: Vec<usize> = (0..g.len()).filter(|&i| g[i].into() > 0.0).collect();
    if cells.is_empty() {
        return None;
    }
    let n = cells.len() as f64;
    let mse = cells
        .iter()
        .map(|&i| {
            let d = p[i].into() - g[i].into();
            d * d
        })
        .sum::<f64>()
        / n;
    let mean = cells.iter().map(|&i| g[i].into()).sum::<f64>() / n;
    let var = cells
        .iter()
        .map(|&i| {
            let d = g[i].into() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Some((mse, var))
}

/// Per-frame RMS difference over the contact cells, averaged over frames
/// with a non-empty mask.
pub fn mask_rmsd<P, G, T>(pred: &[P], gt: &[G]) -> Result<FrameAverage, EvalError>
where
    P: AsRef<[T]>,
    G: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    let frames = pairs(pred, gt)?;
    let vals: Vec<f64> = frames
        .iter()
        .filter_map(|(p, g)| masked_stats(p, g))
        .map(|(mse, _)| mse.sqrt())
        .collect();
    average(vals, frames.len())
}

/// Per-frame `1 - RMSD² / variance` over the contact cells, averaged over
/// frames with a non-empty mask and non-zero masked variance.
pub fn corrected_r2<P, G, T>(pred: &[P], gt: &[G]) -> Result<FrameAverage, EvalError>
where
    P: AsRef<[T]>,
    G: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    let frames = pairs(pred, gt)?;
    let vals: Vec<f64> = frames
        .iter()
        .filter_map(|(p, g)| masked_stats(p, g))
        .filter(|&(_, var)| var > 0.0)
        .map(|(mse, var)| 1.0 - mse / var)
        .collect();
    average(vals, frames.len())
}

fn average(vals: Vec<f64>, total: usize) -> Result<FrameAverage, EvalError> {
    if vals.is_empty() {
        return Err(EvalError::AllFramesEmpty);
    }
    Ok(FrameAverage {
        value: vals.iter().sum::<f64>() / vals.len() as f64,
        frames: vals.len(),
        skipped: total - vals.len(),
    })
}
