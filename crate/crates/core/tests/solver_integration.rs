//! End-to-end solver checks: hierarchy truncation, steady-state
//! invariance, convergence certificates, and growth calibration.

use renewal_core::doeblin::{certify_convergence, constants, cycle_contraction};
use renewal_core::grid::{init_density, DensityField, GapGrid, InitKind};
use renewal_core::model::RateSpec;
use renewal_core::solver::{
    boundary_flux, evolve, solve_inflated, steady_state, SolverConfig,
};

fn product_exp(grid: &GapGrid<f64>, rate: f64) -> DensityField<f64> {
    init_density(grid, &InitKind::ProductExponential { rate }).unwrap()
}

#[test]
fn hierarchy_marginal_gap_stays_within_the_tail_budget() {
    // Truncating the three-component rate to two components perturbs the
    // two-dimensional marginal law at speed at most twice the tail norm.
    let full: RateSpec<f64> = RateSpec::constants(&[0.5, 0.25, 0.125]).unwrap();
    let trunc = RateSpec::constants(&[0.5, 0.25]).unwrap();
    let eps = full.tail_norm(2, full.max_times()).unwrap();
    assert!((eps - 0.125).abs() <= 1e-15);
    let (m, h) = (60usize, 0.1f64);
    let grid3 = GapGrid::new(3, m, h).unwrap();
    let grid2 = GapGrid::new(2, m, h).unwrap();
    let mut cfg3 = SolverConfig::unit_cfl(&grid3);
    cfg3.t_end = 5.0;
    cfg3.snapshot_times = vec![1.0, 3.0, 5.0];
    let mut cfg2 = cfg3.clone();
    cfg2.dt = h;
    let run3 = evolve(product_exp(&grid3, 1.0), &full, &cfg3, None).unwrap();
    let run2 = evolve(product_exp(&grid2, 1.0), &trunc, &cfg2, None).unwrap();
    for ((t3, f3), (_, f2)) in run3.snapshots.iter().zip(&run2.snapshots) {
        let gap = f3.marginal(2).unwrap().l1_distance(f2).unwrap();
        let bound = 2.0 * eps * t3 + 10.0 * h;
        assert!(gap <= bound, "t={t3}: gap {gap} > bound {bound}");
    }
}

#[test]
fn evolution_from_the_steady_state_stays_put() {
    let spec = RateSpec::constant(1.0).unwrap();
    let grid = GapGrid::new(2, 80, 0.1).unwrap();
    let steady = steady_state(&spec, &grid, 1e-12, 120.0).unwrap();
    assert!(steady.converged);
    let mut cfg = SolverConfig::unit_cfl(&grid);
    cfg.t_end = 5.0;
    let traj = evolve(
        steady.field.clone(),
        &spec,
        &cfg,
        Some(&steady.field),
    )
    .unwrap();
    let drift = traj.l1_to_reference.unwrap();
    assert!(drift.last().unwrap() <= &(10.0 * 0.1));
    assert!(drift.last().unwrap() <= &1e-9);
}

#[test]
fn convergence_certificates_hold_on_a_real_run() {
    // One-dimensional unit-rate model started far from equilibrium; the
    // minorization certificate and per-cycle ratios must both hold with
    // the grid tolerance.
    let spec = RateSpec::constant(1.0).unwrap();
    let grid = GapGrid::new(1, 200, 0.05).unwrap();
    let steady = steady_state(&spec, &grid, 1e-12, 120.0).unwrap();
    let init = init_density(&grid, &InitKind::DiracAges(vec![3.0])).unwrap();
    let mut cfg = SolverConfig::unit_cfl(&grid);
    cfg.t_end = 8.0;
    let traj = evolve(init, &spec, &cfg, Some(&steady.field)).unwrap();
    let dist = traj.l1_to_reference.unwrap();
    let series: Vec<(f64, f64)> = traj.times.iter().copied().zip(dist).collect();
    let consts = constants(1.0, 1.0, 1, 1.0).unwrap();
    let d0 = series[0].1;
    let tol = 10.0 * 0.05;
    let report = certify_convergence(&series, &consts, d0, tol).unwrap();
    assert!(report.holds, "worst ratio {}", report.worst_ratio);
    let cycles = cycle_contraction(&series, &consts, tol).unwrap();
    assert!(cycles.holds, "worst cycle ratio {}", cycles.worst_ratio);
    assert!(cycles.cycles >= 7);
}

#[test]
fn inflated_growth_matches_the_tail_rate() {
    // Inflating the boundary weight by eps = 0.1 on the unit-rate model
    // grows mass by e^0.1 per unit time, within twice the cell width.
    let spec = RateSpec::constant(1.0).unwrap();
    let grid = GapGrid::new(1, 200, 0.05).unwrap();
    let out = solve_inflated(&spec, 1, 0.1, &grid, 1e-11, 120.0).unwrap();
    assert!(out.converged);
    assert!((out.growth_per_unit - 0.1f64.exp()).abs() <= 2.0 * 0.05);
}

#[test]
fn boundary_flux_is_sandwiched_by_the_rate_bounds() {
    let spec = RateSpec::clamped_identity(1.0, 1.4, 1.0).unwrap();
    let grid = GapGrid::new(2, 50, 0.2).unwrap();
    let mut field = product_exp(&grid, 1.0);
    let mut cfg = SolverConfig::unit_cfl(&grid);
    cfg.t_end = 2.0;
    field = evolve(field, &spec, &cfg, None).unwrap().final_field;
    let flux = boundary_flux(&field, &spec).unwrap();
    let mass = field.mass();
    // Evaluating the infinite family on two coordinates undershoots
    // a_minus by at most the tail norm past level 2.
    let eps = spec.tail_norm(2, spec.max_times()).unwrap();
    assert!(flux.total >= (spec.a_minus() - eps) * mass - 1e-12);
    assert!(flux.total <= spec.a_plus() * mass + 1e-12);
    let profile = flux.profile.unwrap();
    assert!((profile.mass() - flux.total).abs() <= 1e-12);
}
