//! Brute-force reference implementations shared by the integration and
//! acceptance tests. Deliberately naive: explicit masks, index loops, no
//! shared helpers with the library.
#![allow(dead_code)]

use pressim_core::deformsim::PlaneModel;
use pressim_core::posekit::{BodySolid, Capsule, Vec3};
use pressim_core::{GRID_CELLS, GRID_COLS, GRID_ROWS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn mae(p: &[Vec<f64>], g: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut n = 0.0;
    for f in 0..g.len() {
        for i in 0..g[f].len() {
            total += (p[f][i] - g[f][i]).abs();
            n += 1.0;
        }
    }
    total / n
}

fn r2_one(p: &[f64], g: &[f64]) -> f64 {
    let mut mean = 0.0;
    for v in g {
        mean += v;
    }
    mean /= g.len() as f64;
    let mut ss_tot = 0.0;
    let mut ss_res = 0.0;
    for i in 0..g.len() {
        ss_tot += (g[i] - mean) * (g[i] - mean);
        ss_res += (g[i] - p[i]) * (g[i] - p[i]);
    }
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

pub fn binarized_r2(p: &[Vec<f64>], g: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    for f in 0..g.len() {
        let bp: Vec<f64> = p[f]
            .iter()
            .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let bg: Vec<f64> = g[f]
            .iter()
            .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
            .collect();
        sum += r2_one(&bp, &bg);
    }
    sum / g.len() as f64
}

/// (mean squared error, variance of gt) over cells with gt > 0.
fn masked(p: &[f64], g: &[f64]) -> Option<(f64, f64)> {
    let mask: Vec<bool> = g.iter().map(|&v| v > 0.0).collect();
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return None;
    }
    let mut mean = 0.0;
    for i in 0..g.len() {
        if mask[i] {
            mean += g[i];
        }
    }
    mean /= n as f64;
    let (mut se, mut var) = (0.0, 0.0);
    for i in 0..g.len() {
        if mask[i] {
            se += (p[i] - g[i]).powi(2);
            var += (g[i] - mean).powi(2);
        }
    }
    Some((se / n as f64, var / n as f64))
}

pub fn mask_rmsd(p: &[Vec<f64>], g: &[Vec<f64>]) -> Option<f64> {
    let vals: Vec<f64> = (0..g.len())
        .filter_map(|f| masked(&p[f], &g[f]))
        .map(|(se, _)| se.sqrt())
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn corrected_r2(p: &[Vec<f64>], g: &[Vec<f64>]) -> Option<f64> {
    let vals: Vec<f64> = (0..g.len())
        .filter_map(|f| masked(&p[f], &g[f]))
        .filter(|&(_, var)| var > 0.0)
        .map(|(se, var)| 1.0 - se / var)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Random sparse frame in [0, 5000] with roughly `density` of the cells
/// non-zero; some values land exactly on the range ends.
pub fn random_frame(rng: &mut ChaCha8Rng, density: f64) -> Vec<f64> {
    (0..GRID_CELLS)
        .map(|_| {
            if rng.random::<f64>() >= density {
                return 0.0;
            }
            match rng.random_range(0..20) {
                0 => 5000.0,
                1 => 1e-3,
                _ => rng.random_range(0.0..5000.0),
            }
        })
        .collect()
}

/// `alpha` minimizing sum (p - alpha d)^2 by successively refined grid scans.
pub fn alpha_scan(p: &[f64], d: &[f64]) -> f64 {
    let cost = |a: f64| {
        p.iter()
            .zip(d)
            .map(|(x, y)| (x - a * y).powi(2))
            .sum::<f64>()
    };
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..12 {
        let step = (hi - lo) / 100.0;
        let best = (0..=100)
            .map(|i| lo + step * i as f64)
            .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
            .expect("non-empty grid");
        lo = (best - step).max(0.0);
        hi = best + step;
    }
    (lo + hi) / 2.0
}

/// Capsule bottom over (x, y) by the contract's rule: the axis point whose XY
/// projection is closest to (x, y), lowered by the remaining sphere depth. A
/// vertical axis degenerates to its lower end.
fn capsule_bottom(c: &Capsule, x: f64, y: f64) -> Option<f64> {
    let (ax, ay, bx, by) = (c.a.x, c.a.y, c.b.x, c.b.y);
    let seg = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
    let t = if seg < 1e-9 {
        if c.a.z <= c.b.z {
            0.0
        } else {
            1.0
        }
    } else {
        // distance along the unit XY direction, clamped to the segment
        let along = ((x - ax) * (bx - ax) + (y - ay) * (by - ay)) / seg;
        along.max(0.0).min(seg) / seg
    };
    let px = ax + t * (bx - ax);
    let py = ay + t * (by - ay);
    let pz = c.a.z + t * (c.b.z - c.a.z);
    let r_xy = ((px - x).powi(2) + (py - y).powi(2)).sqrt();
    if r_xy > c.radius {
        return None;
    }
    Some(pz - (c.radius.powi(2) - r_xy.powi(2)).sqrt())
}

/// Lowest body surface over every cell center, row-major.
pub fn surface(capsules: &[Capsule], plane: &PlaneModel) -> Vec<Option<f64>> {
    let mut out = Vec::new();
    for row in 0..GRID_ROWS {
        for col in 0..GRID_COLS {
            let (x, y) = plane.cell_center(row, col);
            out.push(
                capsules
                    .iter()
                    .filter_map(|c| capsule_bottom(c, x, y))
                    .min_by(f64::total_cmp),
            );
        }
    }
    out
}

/// Total spring force with the body lowered `depth` below first touch.
pub fn spring_force(heights: &[Option<f64>], plane: &PlaneModel, depth: f64) -> f64 {
    let base = heights
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    heights
        .iter()
        .flatten()
        .map(|h| plane.stiffness_k * (depth - (h - base)).max(0.0))
        .sum()
}

/// Random capsule body lying over the mat: 2 to 12 capsules of 3 to 9 cm
/// radius, mostly horizontal, some steep or vertical.
pub fn random_body(rng: &mut ChaCha8Rng, plane: &PlaneModel) -> BodySolid {
    let (w, l) = plane.extent();
    let n = rng.random_range(2..=12);
    let capsules = (0..n)
        .map(|i| {
            let a = Vec3::new(
                rng.random_range(0.1 * w..0.9 * w),
                rng.random_range(0.1 * l..0.9 * l),
                rng.random_range(0.05..0.4),
            );
            let b = if i % 5 == 4 {
                Vec3::new(a.x, a.y, a.z + rng.random_range(0.1..0.4))
            } else {
                Vec3::new(
                    (a.x + rng.random_range(-0.2..0.2)).clamp(0.0, w),
                    (a.y + rng.random_range(-0.4..0.4)).clamp(0.0, l),
                    a.z + rng.random_range(-0.1..0.1),
                )
            };
            Capsule {
                a,
                b,
                radius: rng.random_range(0.03..0.09),
            }
        })
        .collect();
    BodySolid::new(capsules, rng.random_range(40.0..120.0)).expect("valid body")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
