use super::DataError;

/// A window over aligned entries `[start, start + width)`, targeting the
/// pressure frame of its last entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowIndex {
    pub start: usize,
    pub width: usize,
}

impl WindowIndex {
    pub fn target(&self) -> usize {
        self.start + self.width - 1
    }
}

/// `max(0, aligned - width)`.
pub fn window_count(aligned: usize, width: usize) -> usize {
    aligned.saturating_sub(width)
}

/// Stride-1 windows over `aligned` entries. The final entry never starts a
/// window's target, which keeps the count at `aligned - width`.
pub fn make_windows(aligned: usize, width: usize) -> Result<Vec<WindowIndex>, DataError> {
    if width == 0 || aligned < width {
        return Err(DataError::TooShort {
            needed: width.max(1),
            got: aligned,
        });
    }
    Ok((0..window_count(aligned, width))
        .map(|start| WindowIndex { start, width })
        .collect())
}
