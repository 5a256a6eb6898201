//! Cross-module study trends at desk scale: uptilted panels capturing the
//! high-altitude slice, and localization accuracy trends across corridor
//! shapes and altitudes.

use aamsim_core::channel::LinkBudgetParams;
use aamsim_core::coverage::{associate, PanelKind};
use aamsim_core::localization::{corridor_sweep, AntennaMode, SweepConfig};
use aamsim_core::scenario::{build_grid, build_hex_layout};

const MEDIAN_TOLERANCE: f64 = 1e-9;

#[test]
fn the_uptilt_angle_decides_which_ring_captures_the_high_slice() {
    let layout = build_hex_layout(1000.0, 2).unwrap();
    let params = LinkBudgetParams::new(layout.carrier_hz, layout.bs_power_dbm);
    let grid = build_grid(&layout, 500.0, 50.0).unwrap();

    let fractions = |angle: f64| {
        let tilted = layout.with_uptilts(&vec![angle; layout.sites.len()]);
        let map = associate(&tilted, &grid, &params).unwrap();
        let n = map.points.len() as f64;
        let up_any = map
            .points
            .iter()
            .filter(|p| p.serving_panel == PanelKind::Up)
            .count() as f64;
        let tier2_up = map
            .points
            .iter()
            .filter(|p| {
                p.serving_panel == PanelKind::Up && layout.sites[p.serving_site].tier == 2
            })
            .count() as f64;
        (up_any / n, tier2_up / n)
    };

    // A shallow shared uptilt puts the outer ring's main beams onto the
    // 500 m slice over the center cell: the whole slice is up-served, almost
    // entirely by tier-2 sites.
    let (up_shallow, tier2_shallow) = fractions(10.0);
    assert_eq!(up_shallow, 1.0);
    assert!(
        tier2_shallow >= 0.95,
        "tier-2 up-panels serve only {tier2_shallow}"
    );

    // A steep shared uptilt favors the near (tier-1) sites instead.
    let (up_steep, tier2_steep) = fractions(20.0);
    assert_eq!(up_steep, 1.0);
    assert!(
        tier2_steep < 0.2,
        "tier-2 still dominates at 20 deg: {tier2_steep}"
    );

    // Without uptilt panels the high slice keeps its patchy sidelobe-driven
    // association; the downtilt-only map is the baseline the uptilt study
    // compares against.
    let down_map = associate(&layout, &grid, &params).unwrap();
    assert!(down_map
        .points
        .iter()
        .all(|p| p.serving_panel == PanelKind::Down));
}

#[test]
fn localization_sweep_medians_match_the_reference_model() {
    let check = |dx: f64, dy: f64, heights: &[f64], expected: &[f64]| {
        let config = SweepConfig::new(dx, dy, heights.to_vec(), AntennaMode::Mimo);
        let result = corridor_sweep(&config).unwrap();
        for (slice, &want) in result.slices.iter().zip(expected) {
            let got = slice.median_rmse_m();
            assert!(
                ((got - want) / want).abs() < MEDIAN_TOLERANCE,
                "dx={dx} dy={dy} h={}: median {got} vs expected {want}",
                slice.height_m()
            );
            assert_eq!(slice.n_unobservable(), 0);
        }
    };
    check(
        1000.0,
        1000.0,
        &[100.0, 500.0],
        &[30.569104330590996, 22.939888635056995],
    );
    check(2000.0, 2000.0, &[500.0], &[35.49584515230019]);
}

#[test]
fn median_vs_altitude_trend_splits_by_corridor_shape() {
    let medians = |dx: f64, dy: f64| {
        let config = SweepConfig::new(dx, dy, vec![100.0, 500.0], AntennaMode::Mimo);
        let result = corridor_sweep(&config).unwrap();
        let m: Vec<f64> = result
            .slices
            .iter()
            .map(|s| s.median_rmse_m())
            .collect();
        (m[0], m[1])
    };
    // The narrow corridor watched by a wide-baseline rectangle loses
    // accuracy with altitude; the large square gains.
    let (narrow_low, narrow_high) = medians(500.0, 1000.0);
    assert!(
        narrow_high > narrow_low,
        "narrow corridor: {narrow_low} -> {narrow_high}"
    );
    let (square_low, square_high) = medians(2000.0, 2000.0);
    assert!(
        square_high < square_low,
        "large square: {square_low} -> {square_high}"
    );
}
