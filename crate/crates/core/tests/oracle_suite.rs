mod oracles;

use pressim_core::deformsim::{
    alpha_estimate, rasterize_deformation, settle, FlatSlab, PlaneModel,
};
use pressim_core::evalkit::{binarized_r2, corrected_r2, mae, mask_rmsd};
use pressim_core::{Grid, GRID_CELLS};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn metrics_match_brute_force_on_1000_pairs() {
    let mut rng = oracles::rng(11);
    let mut worst = [0.0f64; 4];
    for k in 0..1000 {
        let density = rng.random_range(0.05..0.6);
        let g = oracles::random_frame(&mut rng, density);
        let p = match k % 10 {
            // exact, all-zero and perturbed predictions
            0 => g.clone(),
            1 => vec![0.0; GRID_CELLS],
            2 => g.iter().map(|v| v * 1.1 + 3.0).collect(),
            _ => oracles::random_frame(&mut rng, density),
        };
        let (pv, gv) = (vec![p], vec![g]);
        let pairs = [
            (mae(&pv, &gv).unwrap(), oracles::mae(&pv, &gv)),
            (
                binarized_r2(&pv, &gv).unwrap(),
                oracles::binarized_r2(&pv, &gv),
            ),
            (
                mask_rmsd(&pv, &gv).unwrap().value,
                oracles::mask_rmsd(&pv, &gv).unwrap(),
            ),
            (
                corrected_r2(&pv, &gv).unwrap().value,
                oracles::corrected_r2(&pv, &gv).unwrap(),
            ),
        ];
        for (w, (a, b)) in worst.iter_mut().zip(pairs) {
            *w = w.max((a - b).abs());
        }
    }
    assert!(worst.iter().all(|&w| w <= 1e-9), "{worst:?}");
}

#[test]
fn multi_frame_averages_match_brute_force() {
    let mut rng = oracles::rng(12);
    let mut g: Vec<Vec<f64>> = (0..20)
        .map(|_| oracles::random_frame(&mut rng, 0.3))
        .collect();
    g[3] = vec![0.0; GRID_CELLS];
    let p: Vec<Vec<f64>> = (0..20)
        .map(|_| oracles::random_frame(&mut rng, 0.3))
        .collect();
    assert!((mae(&p, &g).unwrap() - oracles::mae(&p, &g)).abs() <= 1e-9);
    assert!((binarized_r2(&p, &g).unwrap() - oracles::binarized_r2(&p, &g)).abs() <= 1e-9);
    let r = mask_rmsd(&p, &g).unwrap();
    assert_eq!(r.skipped, 1);
    assert!((r.value - oracles::mask_rmsd(&p, &g).unwrap()).abs() <= 1e-9);
    assert!(
        (corrected_r2(&p, &g).unwrap().value - oracles::corrected_r2(&p, &g).unwrap()).abs()
            <= 1e-9
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scaling_both_maps(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut rng = oracles::rng(seed);
        let g = vec![oracles::random_frame(&mut rng, 0.3)];
        let p = vec![oracles::random_frame(&mut rng, 0.3)];
        let scale = |v: &[Vec<f64>]| v.iter().map(|f| f.iter().map(|x| x * c).collect::<Vec<f64>>()).collect::<Vec<_>>();
        let (ps, gs) = (scale(&p), scale(&g));
        prop_assert_eq!(binarized_r2(&ps, &gs).unwrap(), binarized_r2(&p, &g).unwrap());
        let (a, b) = (corrected_r2(&ps, &gs).unwrap().value, corrected_r2(&p, &g).unwrap().value);
        prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        let (a, b) = (mae(&ps, &gs).unwrap(), mae(&p, &g).unwrap());
        prop_assert!((a - c * b).abs() <= 1e-9 * (c * b).max(1.0));
        let (a, b) = (mask_rmsd(&ps, &gs).unwrap().value, mask_rmsd(&p, &g).unwrap().value);
        prop_assert!((a - c * b).abs() <= 1e-9 * (c * b).max(1.0));
    }

    #[test]
    fn perfect_prediction_fixpoint(seed in any::<u64>()) {
        let mut rng = oracles::rng(seed);
        let g = vec![oracles::random_frame(&mut rng, 0.4)];
        prop_assert_eq!(mae(&g, &g).unwrap(), 0.0);
        prop_assert_eq!(binarized_r2(&g, &g).unwrap(), 1.0);
        prop_assert_eq!(mask_rmsd(&g, &g).unwrap().value, 0.0);
        prop_assert_eq!(corrected_r2(&g, &g).unwrap().value, 1.0);
    }
}

#[test]
fn random_bodies_balance_their_weight() {
    let plane = PlaneModel::default();
    let mut rng = oracles::rng(13);
    let mut settled = 0;
    for _ in 0..200 {
        let body = oracles::random_body(&mut rng, &plane);
        let r = settle(&body, &plane).expect("every random body is over the mat");
        let weight = body.total_mass() * plane.gravity;
        assert!(r.residual < 1e-6);
        let heights = oracles::surface(body.capsules(), &plane);
        let force = oracles::spring_force(&heights, &plane, r.settle_depth);
        assert!(
            (force - weight).abs() / weight < 1e-6,
            "oracle force {force} vs weight {weight}"
        );
        assert!((r.total_force(&plane) - weight).abs() / weight < 1e-6);
        settled += 1;
    }
    assert_eq!(settled, 200);
}

#[test]
fn flat_patch_depth_and_rendering() {
    let plane = PlaneModel::default();
    let slab = FlatSlab::covering_cells(&plane, 20..30, 5..15, 0.1, 74.3);
    let r = settle(&slab, &plane).unwrap();
    assert_eq!(r.contact_cells.len(), 100);
    let mm = r.settle_depth * 1e3;
    assert_eq!(format!("{mm:.2}"), "7.29");
    let frame = rasterize_deformation(&r, &plane);
    assert!(r
        .contact_cells
        .iter()
        .all(|c| frame.get(c.row, c.col) == 186));
}

#[test]
fn alpha_is_recovered_exactly_and_matches_scan() {
    let mut rng = oracles::rng(14);
    for alpha in [0.5f64, 3.0, 19.6] {
        let d: Vec<u8> = (0..GRID_CELLS).map(|_| rng.random_range(0..=255)).collect();
        let p: Vec<f32> = d.iter().map(|&v| (alpha * f64::from(v)) as f32).collect();
        let est = alpha_estimate(&Grid::pressure(p).unwrap(), &Grid::from_vec(d).unwrap());
        assert!((est - alpha).abs() / alpha < 1e-6, "{alpha} -> {est}");
    }
    let d: Vec<u8> = (0..GRID_CELLS).map(|_| rng.random_range(0..=255)).collect();
    let p: Vec<f32> = (0..GRID_CELLS)
        .map(|_| rng.random_range(0.0..5000.0))
        .collect();
    let est = alpha_estimate(
        &Grid::pressure(p.clone()).unwrap(),
        &Grid::from_vec(d.clone()).unwrap(),
    );
    let pf: Vec<f64> = p.iter().map(|&v| f64::from(v)).collect();
    let df: Vec<f64> = d.iter().map(|&v| f64::from(v)).collect();
    let scan = oracles::alpha_scan(&pf, &df);
    assert!((est - scan).abs() / scan < 1e-6, "{est} vs {scan}");
}
