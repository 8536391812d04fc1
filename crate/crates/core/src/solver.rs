//! Time evolution of the renewal density on a gap-coordinate grid.
//!
//! The scheme runs at unit CFL (dt = h), so transport along the first gap
//! axis is an exact index shift with no numerical diffusion. Each step,
//! every cell keeps the fraction exp(−p̄·dt) of its mass, with p̄ the
//! renewal rate at the pre-shift cell-center ages; the removed complement
//! is deposited on the u_1 = 0 slice at the shifted gap indices
//! (0, u_1, …, u_{N−1}), realizing the renewal boundary condition. Both
//! halves conserve mass exactly up to rounding, and nonnegativity is
//! preserved bit-level.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{init_density, pairwise_sum, DensityField, GapGrid, GridError, InitKind};
use crate::model::{ModelError, RateSpec, Times};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Time-stepping parameters. dt must equal the grid cell width.
#[derive(Clone, Debug)]
pub struct SolverConfig<T: Scalar> {
    pub dt: T,
    pub t_end: T,
    pub snapshot_times: Vec<T>,
    pub steady_tol: T,
    pub steady_max_time: T,
}

impl<T: Scalar> SolverConfig<T> {
    /// Defaults for a given grid: dt = h, horizon 10, no snapshots.
    pub fn unit_cfl(grid: &GapGrid<T>) -> Self {
        Self {
            dt: grid.cell_width(),
            t_end: T::from_f64_lossy(10.0),
            snapshot_times: Vec::new(),
            steady_tol: T::from_f64_lossy(1e-12),
            steady_max_time: T::from_f64_lossy(500.0),
        }
    }

    pub fn validate(&self, grid: &GapGrid<T>) -> Result<(), SolverError> {
        let h = grid.cell_width();
        if !dt_matches(self.dt, h) {
            return Err(SolverError::Config(format!(
                "dt = {} must equal the grid cell width {h}",
                self.dt
            )));
        }
        if !(self.t_end >= T::zero()) || !self.t_end.is_finite() {
            return Err(SolverError::Config("t_end must be nonnegative".into()));
        }
        if !(self.steady_tol > T::zero()) || !(self.steady_max_time > T::zero()) {
            return Err(SolverError::Config(
                "steady_tol and steady_max_time must be positive".into(),
            ));
        }
        let mut prev = T::zero();
        for &t in &self.snapshot_times {
            if !(t >= prev) || t > self.t_end + self.dt * T::from_f64_lossy(0.5) {
                return Err(SolverError::Config(
                    "snapshot_times must be sorted within [0, t_end]".into(),
                ));
            }
            let k = (t / self.dt).round();
            if (t - k * self.dt).abs() > self.dt * T::from_f64_lossy(1e-9) {
                return Err(SolverError::Config(format!(
                    "snapshot time {t} is not a multiple of dt = {}",
                    self.dt
                )));
            }
            prev = t;
        }
        Ok(())
    }
}

fn dt_matches<T: Scalar>(dt: T, h: T) -> bool {
    (dt - h).abs() <= h * T::from_f64_lossy(1e-12)
}

/// Precomputed one-step kernel for a fixed grid and rate spec.
///
/// Holds per-cell survival factors and scratch buffers; one instance
/// drives one evolution at a time (steps parallelize internally).
pub struct Evolver<T: Scalar> {
    grid: GapGrid<T>,
    decay: Vec<T>,
    dep_scale: Option<Vec<T>>,
    dep: Vec<T>,
    scratch: Vec<T>,
}

impl<T: Scalar> Evolver<T> {
    pub fn new(grid: GapGrid<T>, spec: &RateSpec<T>) -> Result<Self, SolverError> {
        Self::build(grid, spec, None)
    }

    /// Kernel whose boundary reinjection is weighted by (p̄ + eps)/p̄,
    /// leaving the interior loss at p̄: mass grows at rate eps.
    pub fn new_inflated(grid: GapGrid<T>, spec: &RateSpec<T>, eps: T) -> Result<Self, SolverError> {
        if !(eps >= T::zero()) || !eps.is_finite() {
            return Err(SolverError::Config(
                "inflation eps must be nonnegative".into(),
            ));
        }
        Self::build(grid, spec, Some(eps))
    }

    fn build(grid: GapGrid<T>, spec: &RateSpec<T>, eps: Option<T>) -> Result<Self, SolverError> {
        let n = grid.times();
        if let Times::Finite(max) = spec.max_times() {
            if n > max {
                return Err(SolverError::Config(format!(
                    "grid has {n} axes but the rate spec supports at most {max}"
                )));
            }
        }
        let h = grid.cell_width();
        let cells = grid.num_cells();
        let mut decay = vec![T::zero(); cells];
        let mut dep_scale = eps.map(|_| vec![T::zero(); cells]);
        let chunk = 1 << 12;
        let fill = |ci: usize, dchunk: &mut [T], schunk: Option<&mut [T]>| {
            let mut digits = vec![0usize; n];
            let mut ages = vec![T::zero(); n];
            let mut rates = schunk.map(|s| (s, eps.unwrap()));
            for (off, d) in dchunk.iter_mut().enumerate() {
                grid.decode_into(ci * chunk + off, &mut digits);
                grid.center_ages_into(&digits, &mut ages);
                let p = spec.eval_rate_unchecked(&ages);
                *d = (-p * h).exp();
                if let Some((s, e)) = rates.as_mut() {
                    s[off] = (p + *e) / p;
                }
            }
        };
        match dep_scale.as_mut() {
            Some(scale) => decay
                .par_chunks_mut(chunk)
                .zip(scale.par_chunks_mut(chunk))
                .enumerate()
                .for_each(|(ci, (d, s))| fill(ci, d, Some(s))),
            None => decay
                .par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(ci, d)| fill(ci, d, None)),
        }
        if decay.iter().any(|d| !(*d > T::zero() && *d <= T::one()))
            || dep_scale
                .as_ref()
                .is_some_and(|s| s.iter().any(|x| !x.is_finite()))
        {
            return Err(SolverError::Config(
                "rate spec produced a non-positive or non-finite rate on the grid".into(),
            ));
        }
        let b = grid.block_size();
        Ok(Self {
            grid,
            decay,
            dep_scale,
            dep: vec![T::zero(); b],
            scratch: vec![T::zero(); cells],
        })
    }

    pub fn grid(&self) -> &GapGrid<T> {
        &self.grid
    }

    /// Advance the field by one step of dt = h, in place.
    pub fn advance(&mut self, field: &mut DensityField<T>) {
        assert_eq!(field.grid(), &self.grid, "field grid mismatch");
        let m = self.grid.cells_per_axis();
        let b = self.grid.block_size();
        let n = self.grid.times();
        let v = field.values();
        let decay = &self.decay;
        let scale = self.dep_scale.as_deref();

        // Removed mass, summed over the last gap axis onto the shifted
        // target slice: cell (k_1..k_N) deposits at flat offset idx/m.
        if n == 1 {
            let mut acc = T::zero();
            for idx in 0..m {
                let removed = v[idx] - v[idx] * decay[idx];
                acc += match scale {
                    Some(sc) => removed * sc[idx],
                    None => removed,
                };
            }
            self.dep[0] = acc;
        } else {
            let sub = b / m;
            self.dep
                .par_chunks_mut(sub)
                .enumerate()
                .for_each(|(j, chunk)| {
                    let base = j * b;
                    for (q, slot) in chunk.iter_mut().enumerate() {
                        let start = base + q * m;
                        let mut acc = T::zero();
                        match scale {
                            Some(sc) => {
                                for idx in start..start + m {
                                    let removed = v[idx] - v[idx] * decay[idx];
                                    acc += removed * sc[idx];
                                }
                            }
                            None => {
                                for idx in start..start + m {
                                    acc += v[idx] - v[idx] * decay[idx];
                                }
                            }
                        }
                        *slot = acc;
                    }
                });
        }

        // Shift surviving mass one cell along the first gap axis; the
        // overflow slice absorbs its own survivors; slice 0 receives the
        // renewal deposits.
        let dep = &self.dep;
        self.scratch
            .par_chunks_mut(b)
            .enumerate()
            .for_each(|(j, chunk)| {
                if j == 0 {
                    chunk.copy_from_slice(dep);
                } else {
                    let src = (j - 1) * b;
                    for (off, o) in chunk.iter_mut().enumerate() {
                        *o = v[src + off] * decay[src + off];
                    }
                    if j == m - 1 {
                        let src2 = (m - 1) * b;
                        for (off, o) in chunk.iter_mut().enumerate() {
                            *o += v[src2 + off] * decay[src2 + off];
                        }
                    }
                }
            });
        field.swap_values(&mut self.scratch);
    }
}

/// One step of size dt = h, returning the advanced field.
///
/// Builds the kernel afresh; loops should construct an [`Evolver`] once.
pub fn step<T: Scalar>(
    field: &DensityField<T>,
    spec: &RateSpec<T>,
    dt: T,
) -> Result<DensityField<T>, SolverError> {
    let grid = *field.grid();
    if !dt_matches(dt, grid.cell_width()) {
        return Err(SolverError::Config(format!(
            "dt = {dt} must equal the grid cell width {}",
            grid.cell_width()
        )));
    }
    let mut ev = Evolver::new(grid, spec)?;
    let mut out = field.clone();
    ev.advance(&mut out);
    Ok(out)
}

/// Per-step series and snapshots from [`evolve`].
#[derive(Clone, Debug)]
pub struct Trajectory<T: Scalar> {
    pub times: Vec<T>,
    pub mass: Vec<T>,
    pub sigma: Vec<T>,
    pub l1_to_reference: Option<Vec<T>>,
    pub snapshots: Vec<(T, DensityField<T>)>,
    pub final_field: DensityField<T>,
}

/// March the field to t_end, recording mass and σ-moment every step and
/// the L¹ distance to `reference` when one is supplied.
pub fn evolve<T: Scalar>(
    field: DensityField<T>,
    spec: &RateSpec<T>,
    config: &SolverConfig<T>,
    reference: Option<&DensityField<T>>,
) -> Result<Trajectory<T>, SolverError> {
    let grid = *field.grid();
    config.validate(&grid)?;
    let steps_f = (config.t_end / config.dt).round();
    if (config.t_end - steps_f * config.dt).abs()
        > config.dt * T::from_f64_lossy(1e-9) + T::from_f64_lossy(1e-12)
    {
        return Err(SolverError::Config(format!(
            "t_end = {} is not a multiple of dt = {}",
            config.t_end, config.dt
        )));
    }
    let steps = steps_f.to_f64_lossy() as usize;
    let snap_steps: Vec<usize> = config
        .snapshot_times
        .iter()
        .map(|&t| (t / config.dt).round().to_f64_lossy() as usize)
        .collect();
    let mut ev = Evolver::new(grid, spec)?;
    let mut field = field;
    let mut out = Trajectory {
        times: Vec::with_capacity(steps + 1),
        mass: Vec::with_capacity(steps + 1),
        sigma: Vec::with_capacity(steps + 1),
        l1_to_reference: reference.map(|_| Vec::with_capacity(steps + 1)),
        snapshots: Vec::new(),
        final_field: DensityField::zeros(grid),
    };
    for k in 0..=steps {
        let t = T::from_usize_lossy(k) * config.dt;
        out.times.push(t);
        out.mass.push(field.mass());
        out.sigma.push(field.sigma_moment());
        if let (Some(series), Some(r)) = (out.l1_to_reference.as_mut(), reference) {
            series.push(field.l1_distance(r)?);
        }
        if snap_steps.contains(&k) {
            out.snapshots.push((t, field.clone()));
        }
        if k < steps {
            ev.advance(&mut field);
        }
    }
    out.final_field = field;
    Ok(out)
}

/// Result of the steady-state power iteration.
#[derive(Clone, Debug)]
pub struct SteadyOutcome<T: Scalar> {
    pub field: DensityField<T>,
    /// L¹ distance between the iterates one time unit apart at exit.
    pub residual: T,
    pub elapsed: T,
    pub converged: bool,
}

/// Iterate the one-step kernel from a product-exponential start until the
/// field moves less than `steady_tol` per unit time. A timeout is not an
/// error: the best iterate is returned with `converged = false`.
pub fn steady_state<T: Scalar>(
    spec: &RateSpec<T>,
    grid: &GapGrid<T>,
    steady_tol: T,
    steady_max_time: T,
) -> Result<SteadyOutcome<T>, SolverError> {
    let init = init_density(
        grid,
        &InitKind::ProductExponential {
            rate: T::one(),
        },
    )?;
    steady_state_from(init, spec, steady_tol, steady_max_time)
}

/// As [`steady_state`], from a caller-supplied initial field.
pub fn steady_state_from<T: Scalar>(
    init: DensityField<T>,
    spec: &RateSpec<T>,
    steady_tol: T,
    steady_max_time: T,
) -> Result<SteadyOutcome<T>, SolverError> {
    if !(steady_tol > T::zero()) || !(steady_max_time > T::zero()) {
        return Err(SolverError::Config(
            "steady_tol and steady_max_time must be positive".into(),
        ));
    }
    let grid = *init.grid();
    let mut ev = Evolver::new(grid, spec)?;
    let steps_per_unit = unit_steps(grid.cell_width());
    let unit_span = T::from_usize_lossy(steps_per_unit) * grid.cell_width();
    let units = (steady_max_time / unit_span).ceil().to_f64_lossy() as usize;
    let mut field = init;
    let mut prev = field.clone();
    let mut residual = T::infinity();
    let mut converged = false;
    let mut elapsed = T::zero();
    for unit in 1..=units.max(1) {
        for _ in 0..steps_per_unit {
            ev.advance(&mut field);
        }
        elapsed = T::from_usize_lossy(unit) * unit_span;
        residual = field.l1_distance(&prev)?;
        if residual < steady_tol {
            converged = true;
            break;
        }
        prev.values_mut().copy_from_slice(field.values());
    }
    Ok(SteadyOutcome {
        field,
        residual,
        elapsed,
        converged,
    })
}

fn unit_steps<T: Scalar>(h: T) -> usize {
    let per = (T::one() / h).round().to_f64_lossy() as usize;
    per.max(1)
}

/// Stationary profile of the inflated system and its growth factor.
#[derive(Clone, Debug)]
pub struct InflatedOutcome<T: Scalar> {
    pub field: DensityField<T>,
    /// Mass multiplication factor over one time unit (≈ e^{eps}).
    pub growth_per_unit: T,
    pub residual: T,
    pub converged: bool,
}

/// Stationary shape of the system whose boundary reinjection weight is
/// p̄ + eps while the interior loss stays p̄; total mass then grows at
/// rate eps, so the iteration renormalizes once per time unit and reports
/// the growth factor. With eps = 0 this coincides with [`steady_state`].
pub fn solve_inflated<T: Scalar>(
    spec: &RateSpec<T>,
    k: usize,
    eps: T,
    grid: &GapGrid<T>,
    steady_tol: T,
    steady_max_time: T,
) -> Result<InflatedOutcome<T>, SolverError> {
    if k != grid.times() {
        return Err(SolverError::Config(format!(
            "truncation level {k} does not match the grid's {} axes",
            grid.times()
        )));
    }
    let mut ev = Evolver::new_inflated(*grid, spec, eps)?;
    let steps_per_unit = unit_steps(grid.cell_width());
    let unit_span = T::from_usize_lossy(steps_per_unit) * grid.cell_width();
    let units = (steady_max_time / unit_span).ceil().to_f64_lossy() as usize;
    let mut field = init_density(
        grid,
        &InitKind::ProductExponential {
            rate: T::one(),
        },
    )?;
    let mut prev = field.clone();
    let mut growth = T::one();
    let mut residual = T::infinity();
    let mut converged = false;
    for _ in 1..=units.max(1) {
        for _ in 0..steps_per_unit {
            ev.advance(&mut field);
        }
        growth = field.mass();
        if !(growth > T::zero()) || !growth.is_finite() {
            return Err(SolverError::Config(format!(
                "inflated iteration produced mass {growth}"
            )));
        }
        field.values_mut().iter_mut().for_each(|x| *x = *x / growth);
        residual = field.l1_distance(&prev)?;
        if residual < steady_tol {
            converged = true;
            break;
        }
        prev.values_mut().copy_from_slice(field.values());
    }
    // Normalize to a per-unit factor when 1/h is not an integer.
    if (unit_span - T::one()).abs() > T::from_f64_lossy(1e-12) {
        growth = growth.powf(T::one() / unit_span);
    }
    Ok(InflatedOutcome {
        field,
        growth_per_unit: growth,
        residual,
        converged,
    })
}

/// Instantaneous renewal inflow: total rate and, for N ≥ 2, its profile
/// over the post-renewal gap coordinates (u_1..u_{N−1} re-indexed).
#[derive(Clone, Debug)]
pub struct BoundaryFlux<T: Scalar> {
    pub total: T,
    pub profile: Option<DensityField<T>>,
}

pub fn boundary_flux<T: Scalar>(
    field: &DensityField<T>,
    spec: &RateSpec<T>,
) -> Result<BoundaryFlux<T>, SolverError> {
    let grid = *field.grid();
    let n = grid.times();
    if let Times::Finite(max) = spec.max_times() {
        if n > max {
            return Err(SolverError::Config(format!(
                "grid has {n} axes but the rate spec supports at most {max}"
            )));
        }
    }
    let m = grid.cells_per_axis();
    let runs = grid.num_cells() / m;
    let v = field.values();
    let values: Vec<T> = (0..runs)
        .into_par_iter()
        .map(|q| {
            let mut digits = vec![0usize; n];
            let mut ages = vec![T::zero(); n];
            let mut acc = T::zero();
            for idx in q * m..(q + 1) * m {
                if v[idx] == T::zero() {
                    continue;
                }
                grid.decode_into(idx, &mut digits);
                grid.center_ages_into(&digits, &mut ages);
                acc += v[idx] * spec.eval_rate_unchecked(&ages);
            }
            acc
        })
        .collect();
    let total = pairwise_sum(&values);
    let profile = if n >= 2 {
        Some(DensityField::from_values(grid.prefix(n - 1)?, values)?)
    } else {
        None
    };
    Ok(BoundaryFlux { total, profile })
}

/// Outcome of the minorization floor check.
#[derive(Clone, Debug)]
pub struct LowerBoundCheck<T: Scalar> {
    pub holds: bool,
    /// Minimum of cell-average density minus the floor over the region.
    pub worst_slack: T,
    pub cells_checked: usize,
}

/// Verify the renewal floor: for a probability field evolved to time t,
/// every non-overflow cell whose outer-corner age s_N is at most t must
/// carry cell-average density at least a_-^N e^{−a_+ s_N}, within 5h.
pub fn doeblin_lower_bound_check<T: Scalar>(
    field: &DensityField<T>,
    spec: &RateSpec<T>,
    t: T,
) -> Result<LowerBoundCheck<T>, SolverError> {
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(SolverError::Config("time must be nonnegative".into()));
    }
    let grid = *field.grid();
    let n = grid.times();
    let m = grid.cells_per_axis();
    let h = grid.cell_width();
    let cell_volume = h.powi(n as i32);
    let floor_scale = spec.a_minus().powi(n as i32);
    let a_plus = spec.a_plus();
    let slop = t + h * T::from_f64_lossy(1e-9);
    let v = field.values();
    let chunk = 1 << 12;
    let (worst, count) = v
        .par_chunks(chunk)
        .enumerate()
        .map(|(ci, vals)| {
            let mut digits = vec![0usize; n];
            let mut worst = T::infinity();
            let mut count = 0usize;
            for (off, &mass) in vals.iter().enumerate() {
                grid.decode_into(ci * chunk + off, &mut digits);
                if digits.iter().any(|&k| k == m - 1) {
                    continue;
                }
                let outer: usize = digits.iter().map(|&k| k + 1).sum();
                let s_outer = T::from_usize_lossy(outer) * h;
                if s_outer > slop {
                    continue;
                }
                let bound = floor_scale * (-a_plus * s_outer).exp();
                let slack = mass / cell_volume - bound;
                if slack < worst {
                    worst = slack;
                }
                count += 1;
            }
            (worst, count)
        })
        .reduce(
            || (T::infinity(), 0usize),
            |a, b| (if a.0 < b.0 { a.0 } else { b.0 }, a.1 + b.1),
        );
    Ok(LowerBoundCheck {
        holds: count == 0 || worst >= -(T::from_f64_lossy(5.0) * h),
        worst_slack: worst,
        cells_checked: count,
    })
}
