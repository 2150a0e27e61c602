use std::io::{self, Write};

use crate::grid::{
    DeformationFrame, Grid, PressureFrame, GRID_CELLS, GRID_COLS, GRID_ROWS, PRESSURE_MAX_MMHG,
};

use super::{PlaneModel, SettleResult};

/// Pascals per millimeter of mercury.
pub const MMHG_PA: f64 = 133.322;

/// Linear proximity-to-value transfer, saturating at `d_max`.
pub fn rasterize_deformation(settle: &SettleResult, plane: &PlaneModel) -> DeformationFrame {
    let d_max = plane.d_max();
    let mut values = vec![0u8; GRID_CELLS];
    for c in &settle.contact_cells {
        let v = (255.0 * c.penetration.min(d_max) / d_max).round();
        values[c.row * GRID_COLS + c.col] = v.clamp(0.0, 255.0) as u8;
    }
    Grid::from_vec(values).expect("fixed grid size")
}

/// Spring force over sensor area, in mmHg, clipped to the sensor range.
pub fn reference_pressure(settle: &SettleResult, plane: &PlaneModel) -> PressureFrame {
    let mut values = vec![0f32; GRID_CELLS];
    for c in &settle.contact_cells {
        let pa = plane.stiffness_k * c.penetration / plane.active_area;
        values[c.row * GRID_COLS + c.col] =
            (pa / MMHG_PA).clamp(0.0, f64::from(PRESSURE_MAX_MMHG)) as f32;
    }
    Grid::pressure(values).expect("clipped to range")
}

/// Least-squares factor `alpha` minimizing sum (p - alpha * d)^2; zero when the
/// deformation is empty.
pub fn alpha_estimate(pressure: &PressureFrame, deformation: &DeformationFrame) -> f64 {
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (&p, &d) in pressure.values().iter().zip(deformation.values()) {
        let d = f64::from(d);
        num += f64::from(p) * d;
        den += d * d;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Binary PGM (P5), 28 columns by 80 rows.
pub fn write_pgm<W: Write>(mut out: W, bytes: &[u8]) -> io::Result<()> {
    if bytes.len() != GRID_CELLS {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("expected {GRID_CELLS} bytes, got {}", bytes.len()),
        ));
    }
    write!(out, "P5\n{GRID_COLS} {GRID_ROWS}\n255\n")?;
    out.write_all(bytes)
}

pub fn deformation_pgm(frame: &DeformationFrame) -> Vec<u8> {
    let mut buf = Vec::with_capacity(GRID_CELLS + 16);
    write_pgm(&mut buf, frame.values()).expect("in-memory write");
    buf
}

/// Pressure scaled so that 5000 mmHg maps to 255.
pub fn pressure_pgm(frame: &PressureFrame) -> Vec<u8> {
    let bytes: Vec<u8> = frame
        .values()
        .iter()
        .map(|&p| {
            (255.0 * f64::from(p) / f64::from(PRESSURE_MAX_MMHG))
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .collect();
    let mut buf = Vec::with_capacity(GRID_CELLS + 16);
    write_pgm(&mut buf, &bytes).expect("in-memory write");
    buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformsim::ContactCell;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_cell(penetration: f64) -> SettleResult {
        SettleResult {
            settle_depth: penetration,
            contact_cells: vec![ContactCell {
                row: 3,
                col: 4,
                penetration,
            }],
            residual: 0.0,
        }
    }

    #[test]
    fn deformation_mapping() {
        let plane = PlaneModel::default();
        let f = rasterize_deformation(&one_cell(7.29e-3), &plane);
        assert_eq!(f.get(3, 4), 186);
        let f = rasterize_deformation(&one_cell(25e-3), &plane);
        assert_eq!(f.get(3, 4), 255);
        let empty = SettleResult {
            settle_depth: 0.0,
            contact_cells: vec![],
            residual: 0.0,
        };
        assert!(rasterize_deformation(&empty, &plane)
            .values()
            .iter()
            .all(|&v| v == 0));
        assert!(reference_pressure(&empty, &plane)
            .values()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn five_newtons_in_mmhg() {
        let plane = PlaneModel::default();
        // 5 N at k = 1e3 N/m is 5 mm
        let p = reference_pressure(&one_cell(5e-3), &plane).get(3, 4);
        assert!((f64::from(p) - 195.33).abs() < 0.01, "{p}");
        let p = reference_pressure(&one_cell(1.0), &plane).get(3, 4);
        assert_eq!(p, 5000.0);
    }

    #[test]
    fn alpha_exact_and_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d: Vec<u8> = (0..GRID_CELLS).map(|_| rng.random_range(0..=255)).collect();
        let p: Vec<f32> = d.iter().map(|&v| 3.0 * f32::from(v)).collect();
        let alpha = alpha_estimate(&Grid::pressure(p).unwrap(), &Grid::from_vec(d).unwrap());
        assert!((alpha - 3.0).abs() < 1e-12);
        assert_eq!(alpha_estimate(&Grid::zeros(), &Grid::zeros()), 0.0);
    }

    #[test]
    fn alpha_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d: Vec<u8> = (0..GRID_CELLS).map(|_| rng.random_range(0..=255)).collect();
        let p: Vec<f32> = (0..GRID_CELLS)
            .map(|_| rng.random_range(0.0..5000.0))
            .collect();
        let (pf, df) = (
            Grid::pressure(p.clone()).unwrap(),
            Grid::from_vec(d.clone()).unwrap(),
        );
        let alpha = alpha_estimate(&pf, &df);
        let sse = |a: f64| -> f64 {
            p.iter()
                .zip(&d)
                .map(|(&p, &d)| (f64::from(p) - a * f64::from(d)).powi(2))
                .sum()
        };
        // coarse scan, then successively finer scans around the best point
        let (mut center, mut width) = (10.0, 10.0);
        for _ in 0..12 {
            let best = (0..=200)
                .map(|i| center - width + 2.0 * width * i as f64 / 200.0)
                .min_by(|a, b| sse(*a).total_cmp(&sse(*b)))
                .unwrap();
            center = best;
            width /= 20.0;
        }
        assert!((alpha - center).abs() / center < 1e-6);
    }

    #[test]
    fn pgm_header_and_payload() {
        let mut values = vec![0u8; GRID_CELLS];
        values[1] = 7;
        values[GRID_CELLS - 1] = 255;
        let bytes = deformation_pgm(&Grid::from_vec(values.clone()).unwrap());
        let header = b"P5\n28 80\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &values[..]);
        let p = pressure_pgm(&Grid::pressure(vec![5000.0; GRID_CELLS]).unwrap());
        assert!(p[header.len()..].iter().all(|&b| b == 255));
    }
}
