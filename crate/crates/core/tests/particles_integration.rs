//! Statistical agreement between the jump-process sampler and the
//! deterministic evolution, plus rate-bound sanity on long runs.

use renewal_core::grid::{init_density, GapGrid, InitKind};
use renewal_core::model::RateSpec;
use renewal_core::particles::{empirical_marginal, simulate, simulate_coupled, InitLaw, PairInit};
use renewal_core::solver::{evolve, SolverConfig};

#[test]
fn empirical_marginal_tracks_the_evolved_law() {
    // 2e5 independent walkers against the deterministic solution of the
    // same initial law. The budget covers sampling noise (~0.01) plus the
    // first-order transport error of the scheme at h = 0.25.
    let spec = RateSpec::constant(1.0).unwrap();
    let n = 2;
    let m = 200_000usize;
    let t = 3.0;
    let grid = GapGrid::new(2, 40, 0.25).unwrap();
    let sim = simulate(&spec, n, m, t, &InitLaw::ExpGaps { rate: 1.0 }, 41, &[]).unwrap();
    let emp = empirical_marginal(&sim.final_state, 2, &grid).unwrap();
    let init = init_density(&grid, &InitKind::ProductExponential { rate: 1.0 }).unwrap();
    let mut cfg = SolverConfig::unit_cfl(&grid);
    cfg.t_end = t;
    let pde = evolve(init, &spec, &cfg, None).unwrap().final_field;
    let d2 = emp.l1_distance(&pde).unwrap();
    assert!(d2 <= 0.08, "two-dimensional marginal distance {d2}");
    // First marginal on the same grid.
    let grid1 = GapGrid::new(1, 40, 0.25).unwrap();
    let emp1 = empirical_marginal(&sim.final_state, 1, &grid1).unwrap();
    let pde1 = pde.marginal(1).unwrap();
    let d1 = emp1.l1_distance(&pde1).unwrap();
    assert!(d1 <= 0.05, "first marginal distance {d1}");
}

#[test]
fn coupled_members_follow_their_own_laws() {
    // Each member of an independently-initialized coupled pair has the
    // same law as a standalone run with that initial law.
    let spec = RateSpec::constant(1.0).unwrap();
    let m = 100_000usize;
    let t = 2.0;
    let coupled = simulate_coupled(
        &spec,
        2,
        m,
        t,
        &PairInit::Independent(InitLaw::ExpGaps { rate: 1.0 }, InitLaw::Origin),
        7,
        &[],
    )
    .unwrap();
    let single_a = simulate(&spec, 2, m, t, &InitLaw::ExpGaps { rate: 1.0 }, 1009, &[]).unwrap();
    let single_b = simulate(&spec, 2, m, t, &InitLaw::Origin, 2011, &[]).unwrap();
    let grid = GapGrid::new(1, 40, 0.25).unwrap();
    let d_a = empirical_marginal(&coupled.final_state.member(0), 1, &grid)
        .unwrap()
        .l1_distance(&empirical_marginal(&single_a.final_state, 1, &grid).unwrap())
        .unwrap();
    let d_b = empirical_marginal(&coupled.final_state.member(1), 1, &grid)
        .unwrap()
        .l1_distance(&empirical_marginal(&single_b.final_state, 1, &grid).unwrap())
        .unwrap();
    assert!(d_a <= 0.05, "member 0 law deviates by {d_a}");
    assert!(d_b <= 0.05, "member 1 law deviates by {d_b}");
}

#[test]
fn long_run_jump_rate_respects_the_declared_bounds() {
    let spec = RateSpec::clamped_identity(1.0, 1.4, 1.0).unwrap();
    let (m, t) = (20_000usize, 5.0f64);
    let out = simulate(&spec, 4, m, t, &InitLaw::ExpGaps { rate: 1.0 }, 3, &[]).unwrap();
    let rate = out.mean_jump_rate();
    let se = (rate / (m as f64 * t)).sqrt();
    assert!(rate >= spec.a_minus() - 5.0 * se, "rate {rate} below a_minus");
    assert!(rate <= spec.a_plus() + 5.0 * se, "rate {rate} above a_plus");
}

#[test]
fn snapshots_hold_admissible_states_at_the_right_times() {
    let spec = RateSpec::clamped_identity(1.0, 1.4, 1.0).unwrap();
    let out = simulate(
        &spec,
        3,
        500,
        4.0,
        &InitLaw::UniformGapBox {
            lo: vec![0.0, 0.5, 0.0],
            hi: vec![1.0, 1.5, 2.0],
        },
        19,
        &[0.0, 1.5, 4.0],
    )
    .unwrap();
    assert_eq!(out.snapshots.len(), 3);
    for (snap, expect) in out.snapshots.iter().zip([0.0, 1.5, 4.0]) {
        assert_eq!(snap.time(), expect);
        assert_eq!(snap.len(), 500);
        for i in 0..snap.len() {
            let ages: &[f64] = snap.ages(i);
            let mut prev = 0.0;
            for &s in ages {
                assert!(s >= prev && s.is_finite());
                prev = s;
            }
            // No age can exceed its initial bound plus elapsed time.
            assert!(ages[2] <= 2.0 + 1.0 + 1.5 + snap.time());
        }
    }
    // The t = 0 snapshot reproduces the initial law's box bounds.
    let first = &out.snapshots[0];
    for i in 0..first.len() {
        let ages = first.ages(i);
        assert!(ages[0] < 1.0 && ages[2] - ages[1] < 2.0);
    }
}
