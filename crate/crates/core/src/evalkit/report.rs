use std::fmt;

use super::metrics::{binarized_r2, corrected_r2, mae, mask_rmsd, FrameAverage};
use super::EvalError;

pub const CSV_HEADER: &str = "model,mae_mmhg,mask_rmsd_mmhg,corrected_r2,binarized_r2,frames";

/// All metrics of one model against the shared ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: String,
    pub mae: f64,
    pub mask_rmsd: FrameAverage,
    pub corrected_r2: FrameAverage,
    pub binarized_r2: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn row(&self, model: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.model, r.mae, r.mask_rmsd.value, r.corrected_r2.value, r.binarized_r2, r.frames
            ));
        }
        s
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>10} {:>12} {:>12} {:>12} {:>8}",
            "model", "MAE", "mask RMSD", "corr. R2", "bin. R2", "frames"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<12} {:>10.2} {:>12.2} {:>12.4} {:>12.4} {:>8}",
                r.model, r.mae, r.mask_rmsd.value, r.corrected_r2.value, r.binarized_r2, r.frames
            )?;
        }
        let skipped = self.rows.first().map_or(0, |r| r.mask_rmsd.skipped);
        if skipped > 0 {
            writeln!(
                f,
                "{skipped} frame(s) without contact left out of the masked metrics"
            )?;
        }
        Ok(())
    }
}

fn row<P, G, T>(model: &str, pred: &[P], gt: &[G]) -> Result<MetricRow, EvalError>
where
    P: AsRef<[T]>,
    G: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    Ok(MetricRow {
        model: model.to_string(),
        mae: mae(pred, gt)?,
        mask_rmsd: mask_rmsd(pred, gt)?,
        corrected_r2: corrected_r2(pred, gt)?,
        binarized_r2: binarized_r2(pred, gt)?,
        frames: gt.len(),
    })
}

/// Scores every model against `gt`; a failure names the offending model.
pub fn report<P, G, T>(models: &[(&str, &[P])], gt: &[G]) -> Result<MetricReport, EvalError>
where
    P: AsRef<[T]>,
    G: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    let rows = models
        .iter()
        .map(|(name, pred)| {
            row(name, pred, gt).map_err(|e| EvalError::Model {
                model: name.to_string(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(MetricReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let gt = vec![vec![0.0f64, 10.0, 20.0, 0.0]];
        let p = vec![vec![5.0f64, 13.0, 24.0, 1.0]];
        let r = report(&[("baseline", &p[..]), ("pressim", &gt[..])], &gt).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("pressim,0,0,1,1,1"));
        assert_eq!(r.row("baseline").unwrap().mae, 3.25);
        assert!(r.to_string().contains("pressim"));
    }

    #[test]
    fn errors_name_the_model() {
        let gt = vec![vec![1.0f64, 2.0, 0.0, 0.0]];
        let short: Vec<Vec<f64>> = vec![];
        let e = report(&[("ok", &gt[..]), ("bad", &short[..])], &gt).unwrap_err();
        assert!(matches!(&e, EvalError::Model { model, .. } if model == "bad"));
        assert!(e.to_string().contains("bad"));
        let flat = vec![vec![1.0f64; 4]];
        let e = report(&[("flat", &flat[..])], &flat).unwrap_err();
        assert!(
            matches!(&e, EvalError::Model { source, .. } if **source == EvalError::AllFramesEmpty)
        );
    }
}
