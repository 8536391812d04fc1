//! Experiment runners: each executes one configured experiment, writes
//! its CSV reports and binary dumps under the output directory, and
//! returns the list of asserted bounds with their outcomes.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use renewal_core::doeblin::{constants, recommended_tstar};
use renewal_core::grid::{init_density, DensityField, GapGrid, InitKind};
use renewal_core::io::{format_float17, save_ensemble, save_field};
use renewal_core::model::{uniform_limit_diagnostic, Times};
use renewal_core::particles::{simulate, Ensemble, PairInit};
use renewal_core::solver::{evolve, steady_state, SolverConfig, Trajectory};
use renewal_core::transport::{contraction_experiment, cost, exact_mk, CostParams, DiscreteMeasure};
use thiserror::Error;

use crate::config::{Experiment, Kind, SolverBlock};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Wrap a module error as a runtime failure.
fn rt<E: Display>(e: E) -> RunError {
    RunError::Runtime(e.to_string())
}

/// One asserted bound and its outcome.
pub struct Check {
    pub label: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(label: &str, pass: bool, detail: String) -> Check {
        Check {
            label: label.into(),
            pass,
            detail,
        }
    }

    pub fn line(&self) -> String {
        let word = if self.pass { "PASS" } else { "FAIL" };
        format!("{word} {}: {}", self.label, self.detail)
    }
}

fn f(x: f64) -> String {
    format_float17(x)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), RunError> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Marginal mass/density table over cell centers in age coordinates.
fn write_marginal_csv(
    path: &Path,
    field: &DensityField<f64>,
    k: usize,
) -> Result<(), RunError> {
    let marg = if field.grid().times() == k {
        field.clone()
    } else {
        field.marginal(k).map_err(rt)?
    };
    let g = marg.grid();
    let (m, h) = (g.cells_per_axis(), g.cell_width());
    let vol = h.powi(k as i32);
    let mut rows = Vec::with_capacity(marg.values().len());
    match k {
        1 => {
            for (i, &v) in marg.values().iter().enumerate() {
                let s1 = (i as f64 + 0.5) * h;
                rows.push(vec![f(s1), f(v), f(v / vol)]);
            }
            write_csv(path, &["s1", "mass", "density"], &rows)
        }
        2 => {
            for (idx, &v) in marg.values().iter().enumerate() {
                let (i, j) = (idx / m, idx % m);
                let s1 = (i as f64 + 0.5) * h;
                let s2 = s1 + (j as f64 + 0.5) * h;
                rows.push(vec![f(s1), f(s2), f(v), f(v / vol)]);
            }
            write_csv(path, &["s1", "s2", "mass", "density"], &rows)
        }
        _ => Err(RunError::Validation(
            "marginal CSV export supports K <= 2".into(),
        )),
    }
}

/// Empirical mean of the weighted age moment sigma = sum_i s_i / 2^i.
fn sigma_mean(ens: &Ensemble<f64>) -> f64 {
    let m = ens.len();
    let mut total = 0.0;
    for i in 0..m {
        let mut s = 0.0;
        let mut w = 0.5;
        for &age in ens.ages(i) {
            s += age * w;
            w *= 0.5;
        }
        total += s;
    }
    total / m as f64
}

fn solver_config(grid: &GapGrid<f64>, blk: &SolverBlock) -> SolverConfig<f64> {
    let mut cfg = SolverConfig::unit_cfl(grid);
    cfg.dt = blk.dt;
    cfg.t_end = blk.t_end;
    cfg.snapshot_times = blk.snapshots.clone();
    cfg.steady_tol = blk.steady_tol;
    cfg.steady_max_time = blk.steady_max_time;
    cfg
}

fn initial_field(
    grid: &GapGrid<f64>,
    blk: &SolverBlock,
) -> Result<DensityField<f64>, RunError> {
    let kind = match &blk.init {
        Some(law) => crate::config::init_kind_of(law, grid.times()),
        None => InitKind::ProductExponential {
            rate: blk.init_rate,
        },
    };
    init_density(grid, &kind).map_err(rt)
}

/// Lower bound on the truncated rate: the declared floor minus the tail
/// the truncation discards. Nonpositive values mean no bound is usable.
fn truncated_lower(exp: &Experiment, k: usize) -> Result<f64, RunError> {
    let eps = exp.spec.tail_norm(k, exp.spec.max_times()).map_err(rt)?;
    Ok(exp.spec.a_minus() - eps)
}

fn sigma_drift_check(
    traj_times: &[f64],
    traj_sigma: &[f64],
    lower: f64,
    tol: f64,
) -> Check {
    let s0 = traj_sigma[0];
    let cap = 2.0 / lower;
    let mut worst = f64::NEG_INFINITY;
    for (t, s) in traj_times.iter().zip(traj_sigma) {
        let shrink = (-0.5 * lower * t).exp();
        let bound = shrink * s0 + (1.0 - shrink) * cap + tol;
        worst = worst.max(s - bound);
    }
    Check::new(
        "sigma-moment drift bound",
        worst <= 0.0,
        format!("worst slack {} against cap {}", f(worst), f(cap + tol)),
    )
}

fn dump_snapshots(
    out: &Path,
    traj: &Trajectory<f64>,
) -> Result<(), RunError> {
    let mut rows = Vec::new();
    for (i, (t, field)) in traj.snapshots.iter().enumerate() {
        let name = format!("snap_{i:03}.rnwl");
        save_field(&out.join(&name), field).map_err(rt)?;
        rows.push(vec![i.to_string(), f(*t), name]);
    }
    write_csv(&out.join("snapshots.csv"), &["index", "t", "file"], &rows)
}

fn run_solve(exp: &Experiment, out: &Path) -> Result<Vec<Check>, RunError> {
    let g = exp.grid.as_ref().unwrap();
    let blk = exp.solver.as_ref().unwrap();
    let grid = GapGrid::new(g.n, g.m, g.h).map_err(rt)?;
    let steady = steady_state(&exp.spec, &grid, blk.steady_tol, blk.steady_max_time).map_err(rt)?;
    let init = initial_field(&grid, blk)?;
    let cfg = solver_config(&grid, blk);
    let traj = evolve(init, &exp.spec, &cfg, Some(&steady.field)).map_err(rt)?;

    let dist = traj.l1_to_reference.as_ref().unwrap();
    let rows: Vec<Vec<String>> = traj
        .times
        .iter()
        .zip(&traj.mass)
        .zip(&traj.sigma)
        .zip(dist)
        .map(|(((t, m), s), d)| vec![f(*t), f(*m), f(*s), f(*d)])
        .collect();
    write_csv(
        &out.join("trajectory.csv"),
        &["t", "mass", "sigma_moment", "l1_to_steady"],
        &rows,
    )?;
    save_field(&out.join("steady.rnwl"), &steady.field).map_err(rt)?;
    save_field(&out.join("final.rnwl"), &traj.final_field).map_err(rt)?;
    dump_snapshots(out, &traj)?;
    write_marginal_csv(
        &out.join("marginal.csv"),
        &traj.final_field,
        g.n.min(2),
    )?;

    let drift = traj
        .mass
        .iter()
        .map(|m| (m - traj.mass[0]).abs())
        .fold(0.0, f64::max);
    let mut checks = vec![Check::new(
        "mass conservation",
        drift <= exp.tol.mass_drift,
        format!("max drift {} <= {}", f(drift), f(exp.tol.mass_drift)),
    )];
    let lower = truncated_lower(exp, g.n)?;
    if lower > 0.0 {
        checks.push(sigma_drift_check(
            &traj.times,
            &traj.sigma,
            lower,
            exp.tol.sigma_cells * g.h,
        ));
    }
    Ok(checks)
}

fn run_steady(exp: &Experiment, out: &Path) -> Result<Vec<Check>, RunError> {
    let g = exp.grid.as_ref().unwrap();
    let blk = exp.solver.as_ref().unwrap();
    let grid = GapGrid::new(g.n, g.m, g.h).map_err(rt)?;
    let steady = steady_state(&exp.spec, &grid, blk.steady_tol, blk.steady_max_time).map_err(rt)?;
    save_field(&out.join("steady.rnwl"), &steady.field).map_err(rt)?;
    write_marginal_csv(&out.join("marginal.csv"), &steady.field, g.n.min(2))?;

    let mut checks = vec![Check::new(
        "steady iteration converged",
        steady.converged,
        format!(
            "residual {} per unit time after {} model-time units",
            f(steady.residual),
            f(steady.elapsed)
        ),
    )];
    let mut analytic_err = None;
    if exp.rate_kind == "constant" {
        let oracle = init_density(
            &grid,
            &InitKind::ProductExponential {
                rate: exp.spec.a_minus(),
            },
        )
        .map_err(rt)?;
        let err = steady.field.l1_distance(&oracle).map_err(rt)?;
        let budget = exp.tol.steady_cells * g.h;
        analytic_err = Some(err);
        checks.push(Check::new(
            "steady state matches the analytic law",
            err <= budget,
            format!("L1 error {} <= {}", f(err), f(budget)),
        ));
    }
    let mut row = vec![
        f(steady.residual),
        f(steady.elapsed),
        (steady.converged as u8).to_string(),
        f(steady.field.sigma_moment()),
    ];
    let mut header = vec!["residual", "elapsed_model_time", "converged", "sigma_moment"];
    if let Some(err) = analytic_err {
        header.push("l1_to_analytic");
        row.push(f(err));
    }
    write_csv(&out.join("report.csv"), &header, &[row])?;
    Ok(checks)
}

fn run_hierarchy(exp: &Experiment, out: &Path) -> Result<Vec<Check>, RunError> {
    let g = exp.grid.as_ref().unwrap();
    let blk = exp.solver.as_ref().unwrap();
    let k = exp.hierarchy_k.unwrap();
    if blk.init.is_some() {
        return Err(RunError::Validation(
            "hierarchy runs from the common product-exponential law; use solver.init_rate".into(),
        ));
    }
    let grid_full = GapGrid::new(g.n, g.m, g.h).map_err(rt)?;
    let grid_k = GapGrid::new(k, g.m, g.h).map_err(rt)?;
    let mut cfg = solver_config(&grid_full, blk);
    if cfg.snapshot_times.is_empty() {
        let steps = blk.t_end.floor() as usize;
        cfg.snapshot_times = (1..=steps).map(|i| i as f64).collect();
    }
    if cfg.snapshot_times.is_empty() {
        return Err(RunError::Validation(
            "hierarchy needs solver.snapshots or t_end >= 1".into(),
        ));
    }
    let init_full = initial_field(&grid_full, blk)?;
    let init_k = initial_field(&grid_k, blk)?;
    let run_full = evolve(init_full, &exp.spec, &cfg, None).map_err(rt)?;
    let run_k = evolve(init_k, &exp.spec, &cfg, None).map_err(rt)?;

    let eps = exp.spec.tail_norm(k, Times::Finite(g.n)).map_err(rt)?;
    let tol = exp.tol.disc_cells * g.h;
    let mut rows = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    let mut final_gap = 0.0;
    for ((t, full), (_, low)) in run_full.snapshots.iter().zip(&run_k.snapshots) {
        let gap = full
            .marginal(k)
            .map_err(rt)?
            .l1_distance(low)
            .map_err(rt)?;
        let bound = 2.0 * eps * t + tol;
        worst = worst.max(gap - bound);
        final_gap = gap;
        rows.push(vec![f(*t), f(gap), f(bound)]);
    }
    write_csv(&out.join("gap.csv"), &["t", "gap", "bound"], &rows)?;
    save_field(&out.join("final_full.rnwl"), &run_full.final_field).map_err(rt)?;
    save_field(&out.join("final_truncated.rnwl"), &run_k.final_field).map_err(rt)?;

    let mut checks = vec![Check::new(
        "marginal truncation bound",
        worst <= 0.0,
        format!("worst slack {} with eps {}", f(worst), f(eps)),
    )];
    let lower = truncated_lower(exp, k)?;
    if lower > 0.0 {
        let mut upper = 0.0;
        for i in 1..=k {
            upper += exp.spec.sup_norm_at(i).map_err(rt)?;
        }
        let upper = upper.min(exp.spec.a_plus());
        let rec = recommended_tstar(k, lower, upper).map_err(rt)?;
        let cst = constants(lower, upper, k, rec.t_star).map_err(rt)?;
        let bound = 4.0 * rec.t_star * eps / cst.alpha + tol;
        let (t_last, _) = run_full.snapshots.last().unwrap();
        checks.push(Check::new(
            "uniform-in-time marginal bound",
            final_gap <= bound,
            format!("gap({}) {} <= {}", f(*t_last), f(final_gap), f(bound)),
        ));
    }
    Ok(checks)
}

fn run_doeblin(exp: &Experiment, out: &Path) -> Result<Vec<Check>, RunError> {
    let n_max = exp.doeblin_n_max.unwrap();
    if n_max == 0 {
        return Err(RunError::Validation("doeblin.n_max must be >= 1".into()));
    }
    let (am, ap) = (exp.spec.a_minus(), exp.spec.a_plus());
    let mut rows = Vec::with_capacity(n_max);
    let mut worst_margin = f64::INFINITY;
    for n in 1..=n_max {
        let rec = recommended_tstar(n, am, ap).map_err(rt)?;
        let cst = constants(am, ap, n, rec.t_star).map_err(rt)?;
        worst_margin = worst_margin.min(cst.alpha / rec.t_star - rec.rate_bound);
        rows.push(vec![
            n.to_string(),
            f(rec.t_star),
            f(cst.alpha),
            f(cst.lambda),
            f(cst.c),
            f(rec.rate_bound),
            f(rec.gamma_check),
        ]);
    }
    write_csv(
        &out.join("constants.csv"),
        &["N", "t_star", "alpha", "lambda", "c", "rate_bound", "gamma_check"],
        &rows,
    )?;
    let mut pass = true;
    for row in &rows {
        let alpha: f64 = row[2].parse().unwrap();
        let t_star: f64 = row[1].parse().unwrap();
        let bound: f64 = row[5].parse().unwrap();
        if alpha / t_star < bound * (1.0 - exp.tol.quad_slack) {
            pass = false;
        }
    }
    Ok(vec![Check::new(
        "minorization achieves the closed-form rate bound",
        pass,
        format!("worst margin {} over N = 1..{}", f(worst_margin), n_max),
    )])
}

fn run_particles(exp: &Experiment, out: &Path) -> Result<Vec<Check>, RunError> {
    let p = exp.particles.as_ref().unwrap();
    let n = exp.dim.unwrap();
    let sim = simulate(
        &exp.spec,
        n,
        p.count,
        p.t_end,
        &p.init,
        p.seed,
        &p.checkpoints,
    )
    .map_err(rt)?;

    let mut rows = Vec::new();
    for (i, snap) in sim.snapshots.iter().enumerate() {
        let name = format!("snap_{i:03}.rnwp");
        save_ensemble(&out.join(&name), snap).map_err(rt)?;
        rows.push(vec![f(snap.time()), f(sigma_mean(snap)), name]);
    }
    save_ensemble(&out.join("final.rnwp"), &sim.final_state).map_err(rt)?;
    rows.push(vec![
        f(sim.final_state.time()),
        f(sigma_mean(&sim.final_state)),
        "final.rnwp".into(),
    ]);
    write_csv(&out.join("sigma.csv"), &["t", "sigma_mean", "file"], &rows)?;

    let rate = sim.mean_jump_rate();
    let lower = exp.spec.a_minus() - sim.truncation_rate_error;
    let upper = exp.spec.a_plus();
    write_csv(
        &out.join("rates.csv"),
        &[
            "proposals",
            "jumps",
            "mean_jump_rate",
            "rate_lower",
            "rate_upper",
            "truncation_rate_error",
        ],
        &[vec![
            sim.stats.proposals.to_string(),
            sim.stats.jumps.to_string(),
            f(rate),
            f(lower),
            f(upper),
            f(sim.truncation_rate_error),
        ]],
    )?;

    if p.t_end <= 0.0 {
        return Ok(vec![Check::new(
            "sampled without time evolution",
            true,
            "t_end = 0, no rate assertion".into(),
        )]);
    }
    let slack = 5.0 * (rate / (p.count as f64 * p.t_end)).sqrt();
    let pass = rate >= lower - slack && rate <= upper + slack;
    Ok(vec![Check::new(
        "mean jump rate within the declared band",
        pass,
        format!(
            "rate {} in [{}, {}] widened by 5 SE",
            f(rate),
            f(lower - slack),
            f(upper + slack)
        ),
    )])
}

fn run_couple(exp: &Experiment, out: &Path) -> Result<Vec<Check>, RunError> {
    let p = exp.particles.as_ref().unwrap();
    let t = exp.transport.as_ref().unwrap();
    let n = exp.dim.unwrap();
    let params = CostParams::new(t.beta, t.a, n).map_err(rt)?;
    let init = PairInit::Independent(p.init.clone(), p.init2.clone().unwrap());
    let rep = contraction_experiment(
        &exp.spec,
        &params,
        &init,
        p.count,
        &p.checkpoints,
        p.seed,
        t.exact_support,
    )
    .map_err(rt)?;

    let blank = String::new();
    let exact_cell = |e: Option<f64>| e.map(f).unwrap_or_else(|| blank.clone());
    let mut rows = vec![vec![
        f(0.0),
        f(rep.initial.mean),
        f(rep.initial.std_error),
        f(rep.initial.mean),
        exact_cell(rep.initial_exact),
        n.to_string(),
    ]];
    for pt in &rep.points {
        rows.push(vec![
            f(pt.t),
            f(pt.mean_cost),
            f(pt.std_error),
            f(pt.bound),
            exact_cell(pt.exact),
            n.to_string(),
        ]);
    }
    write_csv(
        &out.join("couple.csv"),
        &["t", "coupled_cost", "std_error", "bound", "exact_mk", "N"],
        &rows,
    )?;
    let lone = rep.stats.lone_jump_fraction();
    write_csv(
        &out.join("report.csv"),
        &[
            "gamma",
            "fitted_rate",
            "lone_jump_fraction",
            "sync_jumps",
            "lone_first",
            "lone_second",
            "truncation_rate_error",
        ],
        &[vec![
            f(rep.gamma),
            rep.fitted_rate.map(f).unwrap_or_default(),
            f(lone),
            rep.stats.sync_jumps.to_string(),
            rep.stats.lone_first.to_string(),
            rep.stats.lone_second.to_string(),
            f(rep.truncation_rate_error),
        ]],
    )?;

    let mut checks = vec![Check::new(
        "coupled cost under the contraction envelope",
        rep.within_bound,
        format!(
            "gamma {}, fitted rate {}",
            f(rep.gamma),
            rep.fitted_rate.map(f).unwrap_or_else(|| "n/a".into())
        ),
    )];
    if t.exact_support > 0 {
        checks.push(Check::new(
            "exact transport below the coupled estimate",
            rep.exact_consistent,
            format!("{} subsampled pairs per checkpoint", t.exact_support),
        ));
    }
    Ok(checks)
}

fn run_mk_exact(exp: &Experiment, out: &Path) -> Result<Vec<Check>, RunError> {
    let p = exp.particles.as_ref().unwrap();
    let t = exp.transport.as_ref().unwrap();
    let n = exp.dim.unwrap();
    let params = CostParams::new(t.beta, t.a, n).map_err(rt)?;
    let second = p.init2.clone().unwrap();
    let sim_mu = simulate(&exp.spec, n, p.count, p.t_end, &p.init, p.seed, &[]).map_err(rt)?;
    let sim_nu = simulate(&exp.spec, n, p.count, p.t_end, &second, p.seed + 1, &[]).map_err(rt)?;
    let mu = DiscreteMeasure::from_ensemble(&sim_mu.final_state).map_err(rt)?;
    let nu = DiscreteMeasure::from_ensemble(&sim_nu.final_state).map_err(rt)?;
    let sol = exact_mk(&mu, &nu, &params).map_err(rt)?;

    let mut rows = Vec::with_capacity(sol.plan.len());
    for e in &sol.plan {
        let c = cost(mu.atom(e.from), nu.atom(e.to), &params).map_err(rt)?;
        rows.push(vec![e.from.to_string(), e.to.to_string(), f(e.mass), f(c)]);
    }
    write_csv(&out.join("plan.csv"), &["i", "j", "mass", "cost"], &rows)?;
    write_csv(
        &out.join("summary.csv"),
        &["value", "duality_gap", "atoms_mu", "atoms_nu", "t"],
        &[vec![
            f(sol.value),
            f(sol.duality_gap),
            mu.len().to_string(),
            nu.len().to_string(),
            f(p.t_end),
        ]],
    )?;
    save_ensemble(&out.join("cloud_mu.rnwp"), &sim_mu.final_state).map_err(rt)?;
    save_ensemble(&out.join("cloud_nu.rnwp"), &sim_nu.final_state).map_err(rt)?;

    Ok(vec![Check::new(
        "optimality certified by the duality gap",
        sol.duality_gap.abs() <= exp.tol.gap,
        format!("value {}, gap {}", f(sol.value), f(sol.duality_gap)),
    )])
}

fn run_uniform_limit(exp: &Experiment, out: &Path) -> Result<Vec<Check>, RunError> {
    let n_list = exp.limit_n_list.as_ref().unwrap();
    if n_list.len() < 2 {
        return Err(RunError::Validation(
            "limit.n_list needs at least two truncation levels to report a trend".into(),
        ));
    }
    let pts = uniform_limit_diagnostic(&exp.spec, n_list).map_err(rt)?;
    let rows: Vec<Vec<String>> = pts
        .iter()
        .map(|p| vec![p.n.to_string(), f(p.eps), f(p.r)])
        .collect();
    write_csv(&out.join("limit.csv"), &["N", "eps", "r"], &rows)?;
    let first = pts.first().unwrap().r;
    let last = pts.last().unwrap().r;
    let pass = last < first || (first == 0.0 && last == 0.0);
    Ok(vec![Check::new(
        "tail decay beats the rate-bound growth",
        pass,
        format!("r({}) = {} vs r({}) = {}", pts[0].n, f(first), pts.last().unwrap().n, f(last)),
    )])
}

/// Execute the experiment, writing outputs under `out`.
pub fn run(exp: &Experiment, out: &Path) -> Result<Vec<Check>, RunError> {
    fs::create_dir_all(out)?;
    match exp.kind {
        Kind::Solve => run_solve(exp, out),
        Kind::Steady => run_steady(exp, out),
        Kind::Hierarchy => run_hierarchy(exp, out),
        Kind::Doeblin => run_doeblin(exp, out),
        Kind::Particles => run_particles(exp, out),
        Kind::Couple => run_couple(exp, out),
        Kind::MkExact => run_mk_exact(exp, out),
        Kind::UniformLimit => run_uniform_limit(exp, out),
    }
}

/// Outcome of one config inside a batch.
pub struct BatchEntry {
    pub name: String,
    pub kind: String,
    pub passed: usize,
    pub failed: usize,
    pub status: &'static str,
    pub lines: Vec<String>,
}

/// Run every `.cfg` file in a directory; errors are contained per entry.
pub fn verify_all(dir: &Path, out_root: &Path, seed: Option<u64>) -> Result<Vec<BatchEntry>, RunError> {
    let mut configs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "cfg") && p.is_file())
        .collect();
    configs.sort();
    use rayon::prelude::*;
    let entries: Vec<BatchEntry> = configs
        .par_iter()
        .map(|path| run_batch_entry(path, out_root, seed))
        .collect();
    Ok(entries)
}

fn run_batch_entry(path: &Path, out_root: &Path, seed: Option<u64>) -> BatchEntry {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let exp = match crate::config::Experiment::from_file(path) {
        Ok(mut exp) => {
            if let (Some(s), Some(p)) = (seed, exp.particles.as_mut()) {
                p.seed = s;
            }
            exp
        }
        Err(e) => {
            return BatchEntry {
                name,
                kind: "?".into(),
                passed: 0,
                failed: 0,
                status: "error",
                lines: vec![format!("error: {e}")],
            }
        }
    };
    let kind = exp.kind.to_string();
    let out = out_root.join(&name);
    match run(&exp, &out) {
        Ok(checks) => {
            let passed = checks.iter().filter(|c| c.pass).count();
            let failed = checks.len() - passed;
            BatchEntry {
                name,
                kind,
                passed,
                failed,
                status: if failed == 0 { "pass" } else { "fail" },
                lines: checks.iter().map(Check::line).collect(),
            }
        }
        Err(e) => BatchEntry {
            name,
            kind,
            passed: 0,
            failed: 0,
            status: "error",
            lines: vec![format!("error: {e}")],
        },
    }
}

/// Write the batch summary CSV.
pub fn write_summary(out_root: &Path, entries: &[BatchEntry]) -> Result<(), RunError> {
    fs::create_dir_all(out_root)?;
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|e| {
            vec![
                e.name.clone(),
                e.kind.clone(),
                e.passed.to_string(),
                e.failed.to_string(),
                e.status.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out_root.join("summary.csv"),
        &["config", "experiment", "passed", "failed", "status"],
        &rows,
    )
}
