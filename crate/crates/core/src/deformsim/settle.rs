use crate::grid::{GRID_COLS, GRID_ROWS};
use crate::posekit::{BodySolid, Capsule};

use super::{DeformError, PlaneModel};

/// Deepest penetration searched, measured from first touch.
pub const MAX_SETTLE_DEPTH: f64 = 0.5;
const MAX_ITERATIONS: usize = 200;
const RESIDUAL_TOLERANCE: f64 = 1e-6;

/// A rigid solid that can rest on the plane.
pub trait Support {
    /// Height of the solid's lowest surface above (x, y), or `None` if the
    /// vertical line through (x, y) misses it.
    fn lowest_surface(&self, x: f64, y: f64) -> Option<f64>;
    fn mass(&self) -> f64;
}

fn capsule_lowest_surface(c: &Capsule, x: f64, y: f64) -> Option<f64> {
    let (dx, dy) = (c.b.x - c.a.x, c.b.y - c.a.y);
    let len2 = dx * dx + dy * dy;
    let (t, axis_z) = if len2 > 1e-18 {
        let t = (((x - c.a.x) * dx + (y - c.a.y) * dy) / len2).clamp(0.0, 1.0);
        (t, c.a.z + t * (c.b.z - c.a.z))
    } else if c.a.z <= c.b.z {
        (0.0, c.a.z)
    } else {
        (1.0, c.b.z)
    };
    let (px, py) = (c.a.x + t * dx - x, c.a.y + t * dy - y);
    let r2_xy = px * px + py * py;
    let r2 = c.radius * c.radius;
    (r2_xy <= r2).then(|| axis_z - (r2 - r2_xy).sqrt())
}

impl Support for BodySolid {
    fn lowest_surface(&self, x: f64, y: f64) -> Option<f64> {
        self.capsules()
            .iter()
            .filter_map(|c| capsule_lowest_surface(c, x, y))
            .min_by(f64::total_cmp)
    }

    fn mass(&self) -> f64 {
        self.total_mass()
    }
}

/// Axis-aligned slab with a flat bottom at height `z`, used for calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatSlab {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub z: f64,
    pub mass: f64,
}

impl FlatSlab {
    /// Slab whose footprint contains exactly the centers of the given block
    /// of cells.
    pub fn covering_cells(
        plane: &PlaneModel,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
        z: f64,
        mass: f64,
    ) -> Self {
        Self {
            x_range: (
                cols.start as f64 * plane.pitch_x,
                cols.end as f64 * plane.pitch_x,
            ),
            y_range: (
                rows.start as f64 * plane.pitch_y,
                rows.end as f64 * plane.pitch_y,
            ),
            z,
            mass,
        }
    }
}

impl Support for FlatSlab {
    fn lowest_surface(&self, x: f64, y: f64) -> Option<f64> {
        let inside = (self.x_range.0..self.x_range.1).contains(&x)
            && (self.y_range.0..self.y_range.1).contains(&y);
        inside.then_some(self.z)
    }

    fn mass(&self) -> f64 {
        self.mass
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactCell {
    pub row: usize,
    pub col: usize,
    /// Meters.
    pub penetration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettleResult {
    /// Meters lowered past first touch.
    pub settle_depth: f64,
    pub contact_cells: Vec<ContactCell>,
    /// |spring force - weight| / weight.
    pub residual: f64,
}

impl SettleResult {
    /// Total spring reaction in newtons.
    pub fn total_force(&self, plane: &PlaneModel) -> f64 {
        self.contact_cells
            .iter()
            .map(|c| plane.stiffness_k * c.penetration)
            .sum()
    }
}

/// Surface heights over every cell center, row-major; `None` off the body.
fn surface_heights<S: Support + ?Sized>(body: &S, plane: &PlaneModel) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(GRID_ROWS * GRID_COLS);
    for row in 0..GRID_ROWS {
        for col in 0..GRID_COLS {
            let (x, y) = plane.cell_center(row, col);
            out.push(body.lowest_surface(x, y));
        }
    }
    out
}

fn spring_force(heights: &[(usize, f64)], k: f64, depth: f64) -> f64 {
    heights.iter().map(|&(_, h)| k * (depth - h).max(0.0)).sum()
}

/// Lowers `body` until the plane's spring reaction equals its weight.
///
/// The body is first translated vertically so that its lowest point over any
/// cell center rests at the plane; the settle depth is measured from there.
pub fn settle<S: Support + ?Sized>(
    body: &S,
    plane: &PlaneModel,
) -> Result<SettleResult, DeformError> {
    plane.validate()?;
    let heights = surface_heights(body, plane);
    let Some(base) = heights.iter().flatten().copied().min_by(f64::total_cmp) else {
        return Err(DeformError::NoContact);
    };
    // relative heights, row-major, only cells under the body
    let rel: Vec<(usize, f64)> = heights
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.map(|h| (i, h - base)))
        .collect();
    let weight = body.mass() * plane.gravity;
    let k = plane.stiffness_k;

    let mut lo = 0.0;
    let mut hi = MAX_SETTLE_DEPTH;
    if spring_force(&rel, k, hi) < weight {
        return Err(DeformError::NonConvergence {
            iterations: 0,
            residual: (spring_force(&rel, k, hi) - weight).abs() / weight,
        });
    }
    let mut depth = hi;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let force = spring_force(&rel, k, mid);
        let r = (force - weight).abs() / weight;
        if r < residual {
            residual = r;
            depth = mid;
        }
        if force < weight {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if residual >= RESIDUAL_TOLERANCE {
        return Err(DeformError::NonConvergence {
            iterations: MAX_ITERATIONS,
            residual,
        });
    }
    let contact_cells = rel
        .iter()
        .filter(|&&(_, h)| depth - h > 0.0)
        .map(|&(i, h)| ContactCell {
            row: i / GRID_COLS,
            col: i % GRID_COLS,
            penetration: depth - h,
        })
        .collect();
    Ok(SettleResult {
        settle_depth: depth,
        contact_cells,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posekit::Vec3;

    fn slab(mass: f64) -> FlatSlab {
        FlatSlab::covering_cells(&PlaneModel::default(), 30..40, 9..19, 0.2, mass)
    }

    fn body(capsules: Vec<Capsule>, mass: f64) -> BodySolid {
        BodySolid::new(capsules, mass).unwrap()
    }

    #[test]
    fn flat_patch_closed_form() {
        let plane = PlaneModel::default();
        let r = settle(&slab(74.3), &plane).unwrap();
        assert_eq!(r.contact_cells.len(), 100);
        let expected = 74.3 * 9.81 / (100.0 * 1000.0);
        assert!((r.settle_depth - expected).abs() / expected < 1e-9);
        assert!(r.residual < 1e-6);
        for c in &r.contact_cells {
            assert!((c.penetration - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_mass_doubles_flat_depth() {
        let plane = PlaneModel::default();
        let a = settle(&slab(40.0), &plane).unwrap().settle_depth;
        let b = settle(&slab(80.0), &plane).unwrap().settle_depth;
        assert!((b - 2.0 * a).abs() / b < 1e-9);
    }

    #[test]
    fn off_mat_body_has_no_contact() {
        let c = Capsule {
            a: Vec3::new(2.0, 3.0, 1.0),
            b: Vec3::new(2.3, 3.0, 1.0),
            radius: 0.1,
        };
        assert_eq!(
            settle(&body(vec![c], 70.0), &PlaneModel::default()),
            Err(DeformError::NoContact)
        );
    }

    #[test]
    fn horizontal_capsule_matches_force_scan() {
        let plane = PlaneModel::default();
        let c = Capsule {
            a: Vec3::new(0.15, 0.5, 0.3),
            b: Vec3::new(0.40, 1.1, 0.25),
            radius: 0.12,
        };
        let solid = body(vec![c], 74.3);
        let r = settle(&solid, &plane).unwrap();
        assert!(r.residual < 1e-6);
        assert!((r.total_force(&plane) - 74.3 * 9.81).abs() / (74.3 * 9.81) < 1e-6);

        // brute-force scan of the force curve over depth, independently
        // recomputing surface heights per cell
        let mut hs = Vec::new();
        for row in 0..GRID_ROWS {
            for col in 0..GRID_COLS {
                let x = (col as f64 + 0.5) * 0.020;
                let y = (row as f64 + 0.5) * 0.021;
                if let Some(h) = capsule_lowest_surface(&c, x, y) {
                    hs.push(h);
                }
            }
        }
        let base = hs.iter().cloned().fold(f64::INFINITY, f64::min);
        let step = 1e-7;
        let mut d = 0.0;
        loop {
            let f: f64 = hs.iter().map(|h| 1e3 * (d - (h - base)).max(0.0)).sum();
            if f >= 74.3 * 9.81 {
                break;
            }
            d += step;
        }
        assert!((r.settle_depth - d).abs() <= step);
    }

    #[test]
    fn force_is_monotone_in_depth() {
        let plane = PlaneModel::default();
        let solid = body(
            vec![
                Capsule {
                    a: Vec3::new(0.2, 0.4, 0.1),
                    b: Vec3::new(0.3, 1.2, 0.2),
                    radius: 0.1,
                },
                Capsule {
                    a: Vec3::new(0.1, 0.9, 0.05),
                    b: Vec3::new(0.45, 0.9, 0.15),
                    radius: 0.05,
                },
            ],
            60.0,
        );
        let heights = surface_heights(&solid, &plane);
        let base = heights
            .iter()
            .flatten()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let rel: Vec<(usize, f64)> = heights
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.map(|h| (i, h - base)))
            .collect();
        let mut prev = -1.0;
        for i in 0..=500 {
            let f = spring_force(&rel, 1e3, i as f64 * 1e-3);
            assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn heavier_body_sinks_deeper() {
        let plane = PlaneModel::default();
        let caps = vec![Capsule {
            a: Vec3::new(0.28, 0.3, 0.2),
            b: Vec3::new(0.28, 1.3, 0.2),
            radius: 0.14,
        }];
        let mut prev = 0.0;
        for mass in [20.0, 50.0, 74.3, 120.0, 250.0] {
            let d = settle(&body(caps.clone(), mass), &plane)
                .unwrap()
                .settle_depth;
            assert!(d > prev);
            prev = d;
        }
    }

    #[test]
    fn vertical_capsule_uses_lower_cap() {
        let c = Capsule {
            a: Vec3::new(0.1, 0.1, 0.5),
            b: Vec3::new(0.1, 0.1, 0.2),
            radius: 0.05,
        };
        let h = capsule_lowest_surface(&c, 0.1, 0.1).unwrap();
        assert!((h - 0.15).abs() < 1e-12);
        assert!(capsule_lowest_surface(&c, 0.2, 0.1).is_none());
    }
}
