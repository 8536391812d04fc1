//! Acceptance suite: ten end-to-end criteria covering steady states,
//! convergence certificates, moment bounds, hierarchy truncation,
//! quadrature bounds, particle/solver agreement, coupled contraction,
//! and the exact transport solver. Each criterion prints one PASS/FAIL
//! line; the test fails if any criterion does.

use std::io::Write;
use std::time::Instant;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use renewal_core::doeblin::{certify_convergence, constants, cycle_contraction, recommended_tstar};
use renewal_core::grid::{init_density, DensityField, GapGrid, InitKind};
use renewal_core::model::RateSpec;
use renewal_core::particles::{empirical_marginal, simulate, InitLaw, PairInit};
use renewal_core::solver::{evolve, steady_state, SolverConfig};
use renewal_core::transport::{contraction_experiment, cost, exact_mk, CostParams, DiscreteMeasure};

// Grid for criteria 1-3.
const FINE_CELLS: usize = 200;
const FINE_WIDTH: f64 = 0.05;
// Grid for criteria 4-5.
const HIER_CELLS: usize = 100;
const HIER_WIDTH: f64 = 0.1;
// Tolerances, in units of the cell width where the criterion says so.
const STEADY_L1_CELLS: f64 = 3.0;
const DISCRETIZATION_CELLS: f64 = 10.0;
const SIGMA_CELLS: f64 = 5.0;
// Residual target for the steady-state power iteration; the induced
// distance error is residual/(1−e^{−c}) ≤ 2.6e-3, far below 3h = 0.15.
const STEADY_RESIDUAL_TOL: f64 = 1e-3;
const STEADY_TIME_BUDGET: f64 = 55.0;
const QUADRATURE_SLACK: f64 = 1e-9;
const PARTICLE_L1_TOL: f64 = 0.02;
const RATE_SPREAD_LIMIT: f64 = 0.25;
const DUALITY_GAP_TOL: f64 = 1e-9;
const LP_MATCH_TOL: f64 = 1e-7;

struct Criterion {
    id: usize,
    pass: bool,
    detail: String,
}

fn check(id: usize, pass: bool, detail: String) -> Criterion {
    Criterion { id, pass, detail }
}

/// Closed-form steady cell masses for p ≡ c: the product of per-axis
/// exponential cell integrals, overflow cells absorbing the tail.
fn product_exponential_oracle(grid: &GapGrid<f64>, c: f64) -> DensityField<f64> {
    let m = grid.cells_per_axis();
    let h = grid.cell_width();
    let q = (-c * h).exp();
    let mut axis = Vec::with_capacity(m);
    for k in 0..m - 1 {
        axis.push(q.powi(k as i32) * (1.0 - q));
    }
    axis.push(q.powi((m - 1) as i32));
    let n = grid.times();
    let mut values = vec![0.0f64; grid.num_cells()];
    for (idx, v) in values.iter_mut().enumerate() {
        let mut prod = 1.0;
        let mut rem = idx;
        for _ in 0..n {
            prod *= axis[rem % m];
            rem /= m;
        }
        *v = prod;
    }
    DensityField::from_values(*grid, values).unwrap()
}

/// Criterion 1: steady states match the analytic closed form for
/// constant rates across c ∈ {0.5, 1, 2} and N ∈ {1, 2, 3}.
fn criterion_1() -> Criterion {
    let mut worst_err: f64 = 0.0;
    let mut worst_elapsed: f64 = 0.0;
    let mut pass = true;
    let mut notes = Vec::new();
    for &c in &[0.5f64, 1.0, 2.0] {
        let spec = RateSpec::constant(c).unwrap();
        for n in 1..=3usize {
            let start = Instant::now();
            let grid = GapGrid::new(n, FINE_CELLS, FINE_WIDTH).unwrap();
            let out = steady_state(&spec, &grid, STEADY_RESIDUAL_TOL, STEADY_TIME_BUDGET).unwrap();
            let elapsed = start.elapsed().as_secs_f64();
            let oracle = product_exponential_oracle(&grid, c);
            let err = out.field.l1_distance(&oracle).unwrap();
            worst_err = worst_err.max(err);
            worst_elapsed = worst_elapsed.max(elapsed);
            if !out.converged || err > STEADY_L1_CELLS * FINE_WIDTH || elapsed > 60.0 {
                pass = false;
                notes.push(format!("c={c} N={n}: err {err:.2e} in {elapsed:.1}s"));
            }
        }
    }
    let detail = if notes.is_empty() {
        format!(
            "9 cases, worst L1 error {worst_err:.2e} (tol {:.2e}), worst runtime {worst_elapsed:.1}s",
            STEADY_L1_CELLS * FINE_WIDTH
        )
    } else {
        notes.join("; ")
    };
    check(1, pass, detail)
}

/// Criteria 2 and 3 share one run: N=2, p≡1, dirac initial at (1,2),
/// tracked in L¹ against the steady state for t ≤ 10.
fn criteria_2_3() -> (Criterion, Criterion) {
    let spec = RateSpec::constant(1.0).unwrap();
    let grid = GapGrid::new(2, FINE_CELLS, FINE_WIDTH).unwrap();
    let steady = steady_state(&spec, &grid, 1e-12, 110.0).unwrap();
    let init = init_density(&grid, &InitKind::DiracAges(vec![1.0, 2.0])).unwrap();
    let mut cfg = SolverConfig::unit_cfl(&grid);
    cfg.t_end = 10.0;
    let traj = evolve(init, &spec, &cfg, Some(&steady.field)).unwrap();
    let dist = traj.l1_to_reference.clone().unwrap();
    let series: Vec<(f64, f64)> = traj.times.iter().copied().zip(dist).collect();
    let tol = DISCRETIZATION_CELLS * FINE_WIDTH;

    // Criterion 2: envelope at integer times plus per-cycle ratios.
    let n = 2usize;
    let t_star = n as f64 / spec.a_plus();
    let consts = constants(1.0, 1.0, n, t_star).unwrap();
    let d0 = series[0].1;
    let at_integers: Vec<(f64, f64)> = (1..=10)
        .map(|k| series[(k as f64 / cfg.dt).round() as usize])
        .collect();
    let cert = certify_convergence(&at_integers, &consts, d0, tol).unwrap();
    let cycles = cycle_contraction(&series, &consts, tol).unwrap();
    let pass2 = cert.holds && cycles.holds && cycles.cycles >= 4;
    let detail2 = format!(
        "envelope worst ratio {:.3}, {} cycles worst {:.3} (limit {:.3})",
        cert.worst_ratio,
        cycles.cycles,
        cycles.worst_ratio,
        1.0 - consts.alpha + tol
    );

    // Criterion 3: sigma-moment drift bound along the run and at the
    // steady state.
    let sig_tol = SIGMA_CELLS * FINE_WIDTH;
    let s0 = traj.sigma[0];
    let mut worst_gap = f64::NEG_INFINITY;
    for (t, s) in traj.times.iter().zip(&traj.sigma) {
        let shrink = (-0.5 * t).exp();
        let bound = shrink * s0 + (1.0 - shrink) * 2.0 + sig_tol;
        worst_gap = worst_gap.max(s - bound);
    }
    let steady_sigma = steady.field.sigma_moment();
    let pass3 = worst_gap <= 0.0 && steady_sigma <= 2.0 + sig_tol;
    let detail3 = format!(
        "worst drift slack {worst_gap:.2e}, steady sigma {steady_sigma:.3} (limit {:.3})",
        2.0 + sig_tol
    );
    (check(2, pass2, detail2), check(3, pass3, detail3))
}

/// Criteria 4 and 5 share one nested-spec run: components 2^{-i} with
/// (N1, N2) = (2, 3) from a common product-exponential initial law.
fn criteria_4_5() -> (Criterion, Criterion) {
    let full = RateSpec::constants(&[0.5, 0.25, 0.125]).unwrap();
    let trunc = RateSpec::constants(&[0.5, 0.25]).unwrap();
    let eps = 0.125f64;
    let grid3 = GapGrid::new(3, HIER_CELLS, HIER_WIDTH).unwrap();
    let grid2 = GapGrid::new(2, HIER_CELLS, HIER_WIDTH).unwrap();
    let snapshots: Vec<f64> = (1..=10).map(|k| k as f64).chain([50.0]).collect();
    let mut cfg3 = SolverConfig::unit_cfl(&grid3);
    cfg3.t_end = 50.0;
    cfg3.snapshot_times = snapshots.clone();
    let mut cfg2 = cfg3.clone();
    cfg2.dt = HIER_WIDTH;
    let init3 = init_density(&grid3, &InitKind::ProductExponential { rate: 1.0 }).unwrap();
    let init2 = init_density(&grid2, &InitKind::ProductExponential { rate: 1.0 }).unwrap();
    let run3 = evolve(init3, &full, &cfg3, None).unwrap();
    let run2 = evolve(init2, &trunc, &cfg2, None).unwrap();
    let gaps: Vec<(f64, f64)> = run3
        .snapshots
        .iter()
        .zip(&run2.snapshots)
        .map(|((t, f3), (_, f2))| (*t, f3.marginal(2).unwrap().l1_distance(f2).unwrap()))
        .collect();
    let tol = DISCRETIZATION_CELLS * HIER_WIDTH;

    // Criterion 4: linear-in-time truncation bound up to t = 10.
    let mut pass4 = true;
    let mut worst4: f64 = f64::NEG_INFINITY;
    for &(t, gap) in gaps.iter().filter(|(t, _)| *t <= 10.0) {
        let bound = 2.0 * eps * t + tol;
        worst4 = worst4.max(gap - bound);
        if gap > bound {
            pass4 = false;
        }
    }
    let detail4 = format!("worst slack {worst4:.2e} over t = 1..10, eps {eps}");

    // Criterion 5: uniform-in-time bound at t = 50 from the truncated
    // system's recommended minorization window.
    let rec = recommended_tstar(2, trunc.a_minus(), trunc.a_plus()).unwrap();
    let consts2 = constants(trunc.a_minus(), trunc.a_plus(), 2, rec.t_star).unwrap();
    let bound5 = 4.0 * rec.t_star * eps / consts2.alpha + tol;
    let (_, gap50) = gaps[gaps.len() - 1];
    let pass5 = gap50 <= bound5;
    let detail5 = format!("gap(50) {gap50:.3} vs bound {bound5:.3}");
    (check(4, pass4, detail4), check(5, pass5, detail5))
}

/// Criterion 6: quadrature alpha achieves the closed-form rate bound and
/// the incomplete-gamma median check stays above one half.
fn criterion_6() -> Criterion {
    let mut pass = true;
    let mut worst_margin = f64::INFINITY;
    for n in 1..=20usize {
        for &ratio in &[0.5f64, 0.9, 1.0] {
            let (am, ap) = (ratio, 1.0);
            let rec = recommended_tstar(n, am, ap).unwrap();
            let c = constants(am, ap, n, rec.t_star).unwrap();
            let achieved = c.alpha / rec.t_star;
            let margin = achieved / rec.rate_bound - 1.0;
            worst_margin = worst_margin.min(margin);
            if achieved < rec.rate_bound * (1.0 - QUADRATURE_SLACK) {
                pass = false;
            }
        }
    }
    let mut worst_gamma = f64::INFINITY;
    for n in 1..=50usize {
        let rec = recommended_tstar(n, 1.0, 1.0).unwrap();
        worst_gamma = worst_gamma.min(rec.gamma_check);
        if rec.gamma_check < 0.5 {
            pass = false;
        }
    }
    check(
        6,
        pass,
        format!("worst rate margin {worst_margin:.2e}, worst gamma mass {worst_gamma:.4}"),
    )
}

/// Criterion 7: a million-walker empirical two-dimensional marginal
/// agrees with the solver steady state in L¹.
fn criterion_7() -> Criterion {
    let start = Instant::now();
    let spec = RateSpec::constant(1.0).unwrap();
    let grid = GapGrid::new(2, 25, 0.4).unwrap();
    let steady = steady_state(&spec, &grid, 1e-12, 120.0).unwrap();
    let sim = simulate(&spec, 2, 1_000_000, 20.0, &InitLaw::Origin, 2024, &[]).unwrap();
    let emp = empirical_marginal(&sim.final_state, 2, &grid).unwrap();
    let d = emp.l1_distance(&steady.field).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    check(
        7,
        d <= PARTICLE_L1_TOL && elapsed <= 300.0,
        format!("L1 distance {d:.4} (tol {PARTICLE_L1_TOL}) in {elapsed:.0}s"),
    )
}

/// Criterion 8: coupled-cost contraction with the declared exponent,
/// uniformly over the state dimension.
fn criterion_8() -> Criterion {
    let start = Instant::now();
    let spec = RateSpec::clamped_identity(1.0, 1.4, 1.0).unwrap();
    let mut rates = Vec::new();
    let mut pass = true;
    let mut notes = Vec::new();
    for &n in &[4usize, 8, 16] {
        let params = CostParams::new(1.0, 0.4, n).unwrap();
        let init = PairInit::Independent(
            InitLaw::ExpGaps { rate: 1.0 },
            InitLaw::UniformGapBox {
                lo: vec![0.0; n],
                hi: vec![2.0; n],
            },
        );
        let rep = contraction_experiment(&spec, &params, &init, 100_000, &[2.0, 5.0, 10.0], 77, 0)
            .unwrap();
        if !rep.within_bound {
            pass = false;
            notes.push(format!("N={n} exceeded the envelope"));
        }
        match rep.fitted_rate {
            Some(r) if r > 0.0 => rates.push(r),
            _ => {
                pass = false;
                notes.push(format!("N={n} has no positive fitted rate"));
            }
        }
    }
    let spread = if rates.len() == 3 {
        let (lo, hi) = (
            rates.iter().cloned().fold(f64::INFINITY, f64::min),
            rates.iter().cloned().fold(0.0f64, f64::max),
        );
        let s = (hi - lo) / lo;
        if s >= RATE_SPREAD_LIMIT {
            pass = false;
            notes.push(format!("rate spread {s:.2}"));
        }
        s
    } else {
        f64::NAN
    };
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed > 600.0 {
        pass = false;
        notes.push(format!("runtime {elapsed:.0}s"));
    }
    let detail = if notes.is_empty() {
        format!(
            "fitted rates {:?} (spread {spread:.2}), envelope held, {elapsed:.0}s",
            rates.iter().map(|r| (r * 1e3).round() / 1e3).collect::<Vec<_>>()
        )
    } else {
        notes.join("; ")
    };
    check(8, pass, detail)
}

/// Criterion 9: exact transport between subsampled clouds stays below
/// the coupled-cost estimate at t ∈ {0, 2}.
fn criterion_9() -> Criterion {
    let spec = RateSpec::clamped_identity(1.0, 1.4, 1.0).unwrap();
    let n = 4usize;
    let params = CostParams::new(1.0, 0.4, n).unwrap();
    let init = PairInit::Independent(
        InitLaw::ExpGaps { rate: 1.0 },
        InitLaw::UniformGapBox {
            lo: vec![0.0; n],
            hi: vec![2.0; n],
        },
    );
    let rep =
        contraction_experiment(&spec, &params, &init, 100_000, &[2.0], 78, 1000).unwrap();
    let e0 = rep.initial_exact.unwrap();
    let e2 = rep.points[0].exact.unwrap();
    let pass = rep.exact_consistent;
    check(
        9,
        pass,
        format!(
            "exact(0) {e0:.4} vs {:.4}+3SE, exact(2) {e2:.4} vs {:.4}+3SE",
            rep.initial.mean, rep.points[0].mean_cost
        ),
    )
}

/// Reference LP optimum for small instances.
fn lp_value(mu: &DiscreteMeasure<f64>, nu: &DiscreteMeasure<f64>, params: &CostParams<f64>) -> f64 {
    let (n, m) = (mu.len(), nu.len());
    let mut pb = Problem::new(OptimizationDirection::Minimize);
    let mut vars = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let c = cost(mu.atom(i), nu.atom(j), params).unwrap();
            vars.push(pb.add_var(c, (0.0, f64::INFINITY)));
        }
    }
    for i in 0..n {
        let row: Vec<_> = (0..m).map(|j| (vars[i * m + j], 1.0)).collect();
        pb.add_constraint(&row, ComparisonOp::Eq, mu.weight(i));
    }
    for j in 0..m {
        let col: Vec<_> = (0..n).map(|i| (vars[i * m + j], 1.0)).collect();
        pb.add_constraint(&col, ComparisonOp::Eq, nu.weight(j));
    }
    pb.solve().unwrap().objective()
}

fn random_cloud(rng: &mut ChaCha8Rng, dim: usize, atoms: usize) -> DiscreteMeasure<f64> {
    let mut pts = Vec::with_capacity(atoms * dim);
    for _ in 0..atoms {
        let mut s = 0.0;
        for _ in 0..dim {
            s += 2.0 * rng.random::<f64>();
            pts.push(s);
        }
    }
    let raw: Vec<f64> = (0..atoms).map(|_| rng.random::<f64>() + 0.1).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let partial: f64 = weights[..atoms - 1].iter().sum();
    weights[atoms - 1] = 1.0 - partial;
    DiscreteMeasure::new(dim, pts, weights).unwrap()
}

/// Criterion 10: the exact solver agrees with LP-vertex optima on small
/// instances and certifies optimality by zero duality gap on all.
fn criterion_10() -> Criterion {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut pass = true;
    let mut lp_checked = 0usize;
    let mut worst_gap: f64 = 0.0;
    let mut worst_lp: f64 = 0.0;
    for case in 0..100usize {
        let dim = 1 + case % 3;
        let params = CostParams::new(0.9, 1.2, dim).unwrap();
        let small = case % 2 == 0;
        let (ka, kb) = if small {
            (2 + case % 5, 2 + (case / 2) % 5)
        } else {
            (7 + case % 44, 7 + (case / 3) % 44)
        };
        let mu = random_cloud(&mut rng, dim, ka);
        let nu = random_cloud(&mut rng, dim, kb);
        let sol = exact_mk(&mu, &nu, &params).unwrap();
        worst_gap = worst_gap.max(sol.duality_gap.abs());
        if sol.duality_gap.abs() > DUALITY_GAP_TOL {
            pass = false;
        }
        if ka <= 6 && kb <= 6 {
            lp_checked += 1;
            let lp = lp_value(&mu, &nu, &params);
            let diff = (sol.value - lp).abs();
            worst_lp = worst_lp.max(diff);
            if diff > LP_MATCH_TOL {
                pass = false;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        10,
        pass && elapsed < 60.0,
        format!(
            "100 instances, {lp_checked} LP-checked (worst diff {worst_lp:.1e}), worst gap {worst_gap:.1e}, {elapsed:.1}s"
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();
    results.push(criterion_1());
    let (c2, c3) = criteria_2_3();
    results.push(c2);
    results.push(c3);
    let (c4, c5) = criteria_4_5();
    results.push(c4);
    results.push(c5);
    results.push(criterion_6());
    results.push(criterion_7());
    results.push(criterion_8());
    results.push(criterion_9());
    results.push(criterion_10());
    let mut failed = Vec::new();
    // Raw handle: the lines must survive libtest's output capture.
    let mut out = std::io::stdout().lock();
    for r in &results {
        writeln!(
            out,
            "criterion {:>2}: {}: {}",
            r.id,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        )
        .unwrap();
        if !r.pass {
            failed.push(r.id);
        }
    }
    assert!(failed.is_empty(), "failing acceptance criteria: {failed:?}");
}
