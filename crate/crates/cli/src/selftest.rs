//! Quick consistency checks of the numerical core, run by `pressim selftest`.

use std::fmt;

use pressim_core::deformsim::{settle, FlatSlab, PlaneModel};
use pressim_core::evalkit::{binarized_r2, corrected_r2, mae, mask_rmsd};
use pressim_core::neuralnet::{build_model_for, grad_check, NetworkKind, Tensor};
use pressim_core::posekit::{
    body_geometry, build_skeleton, generate_motion, MotionSpec, MotionTemplate, SkeletonKind,
};
use pressim_core::{SubjectProfile, GRID_CELLS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "ok  " } else { "FAIL" };
        write!(f, "{tag} {:<28} {}", self.name, self.detail)
    }
}

fn check(name: impl Into<String>, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

/// Sparse random frame pair: about a third of the cells in contact.
fn random_pair(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut cell = |p: f64| {
        if rng.random::<f64>() < p {
            rng.random_range(0.0..5000.0)
        } else {
            0.0
        }
    };
    let g = (0..GRID_CELLS).map(|_| cell(0.35)).collect();
    let p = (0..GRID_CELLS).map(|_| cell(0.4)).collect();
    (p, g)
}

fn brute_r2(p: &[f64], g: &[f64]) -> f64 {
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    let mut tot = 0.0;
    let mut res = 0.0;
    for i in 0..g.len() {
        tot += (g[i] - mean).powi(2);
        res += (p[i] - g[i]).powi(2);
    }
    match (tot == 0.0, res == 0.0) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        _ => 1.0 - res / tot,
    }
}

fn brute_masked(p: &[f64], g: &[f64]) -> (f64, f64) {
    let cells: Vec<usize> = (0..g.len()).filter(|&i| g[i] > 0.0).collect();
    let n = cells.len() as f64;
    let mse = cells.iter().map(|&i| (p[i] - g[i]).powi(2)).sum::<f64>() / n;
    let mean = cells.iter().map(|&i| g[i]).sum::<f64>() / n;
    let var = cells.iter().map(|&i| (g[i] - mean).powi(2)).sum::<f64>() / n;
    (mse, var)
}

/// Every metric against a direct re-computation on random frames.
pub fn metric_check(pairs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let (p, g) = random_pair(&mut rng);
        let (pv, gv) = (vec![p.clone()], vec![g.clone()]);
        let bin = |v: &[f64]| {
            v.iter()
                .map(|&x| f64::from(u8::from(x > 0.0)))
                .collect::<Vec<_>>()
        };
        let (mse, var) = brute_masked(&p, &g);
        let expected = [
            p.iter().zip(&g).map(|(a, b)| (a - b).abs()).sum::<f64>() / g.len() as f64,
            brute_r2(&bin(&p), &bin(&g)),
            mse.sqrt(),
            1.0 - mse / var,
        ];
        let got = [
            mae(&pv, &gv).unwrap_or(f64::NAN),
            binarized_r2(&pv, &gv).unwrap_or(f64::NAN),
            mask_rmsd(&pv, &gv).map_or(f64::NAN, |r| r.value),
            corrected_r2(&pv, &gv).map_or(f64::NAN, |r| r.value),
        ];
        for (a, b) in got.iter().zip(expected) {
            worst = worst.max(if a.is_nan() {
                f64::INFINITY
            } else {
                (a - b).abs()
            });
        }
    }
    check(
        "metrics vs brute force",
        worst <= 1e-9,
        format!("{pairs} frame pairs, max |diff| {worst:.2e}"),
    )
}

/// Finite-difference gradient check of one network kind in 64-bit mode.
pub fn gradient_check(kind: NetworkKind, per_type: usize, seed: u64) -> Check {
    let net = build_model_for::<f64>(kind, seed, SkeletonKind::Coco17.joint_count());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let inputs: Vec<Tensor<f64>> = net
        .input_shapes()
        .iter()
        .map(|s| {
            let shape: Vec<usize> = std::iter::once(2).chain(s.iter().copied()).collect();
            Tensor::from_fn(&shape, |_| rng.random_range(-1.0..1.0))
        })
        .collect();
    let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
    match grad_check(&net, &refs, per_type, seed) {
        Ok(r) => {
            let types: Vec<String> = r
                .per_type
                .iter()
                .map(|(t, n, e)| format!("{}:{n}:{e:.1e}", t.name()))
                .collect();
            check(
                format!("gradients {kind}"),
                r.max_rel_error() < 1e-3,
                types.join(" "),
            )
        }
        Err(e) => check(format!("gradients {kind}"), false, e.to_string()),
    }
}

/// Settles a flat patch and random generated postures; each must balance
/// its weight.
pub fn settle_check(bodies: usize, seed: u64) -> Check {
    let plane = PlaneModel::default();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let slab = FlatSlab::covering_cells(&plane, 30..40, 9..19, 0.05, 74.3);
    match settle(&slab, &plane) {
        Ok(r) => {
            let expected = 74.3 * plane.gravity / (100.0 * plane.stiffness_k);
            worst = worst.max(r.residual);
            if r.contact_cells.len() != 100 || (r.settle_depth - expected).abs() > 1e-9 {
                failures.push(format!("flat patch depth {} mm", r.settle_depth * 1e3));
            }
        }
        Err(e) => failures.push(format!("flat patch: {e}")),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skeleton = build_skeleton(SkeletonKind::Coco17);
    let lying = [
        MotionTemplate::Plank,
        MotionTemplate::Bridge,
        MotionTemplate::Supine,
    ];
    for b in 0..bodies {
        let subject = SubjectProfile::new(
            format!("b{b}"),
            rng.random_range(45.0..110.0),
            rng.random_range(150.0..200.0),
            "x",
        )
        .expect("within range");
        let spec = MotionSpec {
            template: if b % 2 == 0 {
                MotionTemplate::StandSway
            } else {
                lying[b / 2 % 3]
            },
            duration: 1.0,
            fps: 1.0,
            noise_amplitude: 0.01,
            seed: rng.random(),
        };
        let outcome = generate_motion(&spec, &skeleton, &subject)
            .map_err(|e| e.to_string())
            .and_then(|poses| {
                body_geometry(&poses.frames()[0], &skeleton, &subject).map_err(|e| e.to_string())
            })
            .and_then(|body| settle(&body, &plane).map_err(|e| e.to_string()));
        match outcome {
            Ok(r) => {
                let weight = subject.mass_kg() * plane.gravity;
                worst = worst
                    .max(r.residual)
                    .max((r.total_force(&plane) - weight).abs() / weight);
            }
            Err(e) => failures.push(format!("body {b}: {e}")),
        }
    }
    let passed = failures.is_empty() && worst < 1e-6;
    let mut detail = format!("flat patch + {bodies} bodies, max residual {worst:.2e}");
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; {f}"));
    }
    check("settle force balance", passed, detail)
}

pub fn run_all(seed: u64) -> Vec<Check> {
    let mut out = vec![metric_check(100, seed)];
    out.extend(NetworkKind::ALL.iter().map(|&k| gradient_check(k, 3, seed)));
    out.push(settle_check(20, seed));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_and_settle_checks_pass() {
        assert!(metric_check(5, 1).passed);
        let s = settle_check(4, 2);
        assert!(s.passed, "{s}");
    }
}
