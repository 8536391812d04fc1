//! Jump-process simulation of single states and coupled pairs.
//!
//! A state is an ordered age vector; between jumps every age advances at
//! unit speed, and a jump applies the shift (s_1..s_N) → (0, s_1..s_{N−1}).
//! Jumps are simulated exactly in law by thinning: proposals arrive at the
//! envelope rate a_+ and are accepted with probability p/a_+. Every
//! proposal consumes exactly two uniform draws, and each particle (or
//! pair) owns its own counter-based RNG stream, so trajectories do not
//! depend on how the ensemble is partitioned across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{DensityField, GapGrid, GridError};
use crate::model::{ModelError, RateSpec};
use crate::scalar::Scalar;
use crate::transport::{cost, CostParams, TransportError};

#[derive(Debug, Error)]
pub enum ParticleError {
    #[error("argument out of range: {0}")]
    Argument(String),
    #[error("rate spec contract violated: {0}")]
    SpecContract(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Initial law for a single state.
#[derive(Clone, Debug)]
pub enum InitLaw<T: Scalar> {
    /// All ages zero.
    Origin,
    /// Independent exponential gaps with the given rate.
    ExpGaps { rate: T },
    /// Deterministic ages.
    DiracAges(Vec<T>),
    /// Independent uniform gaps on [lo_i, hi_i).
    UniformGapBox { lo: Vec<T>, hi: Vec<T> },
}

/// Initial law for a coupled pair.
#[derive(Clone, Debug)]
pub enum PairInit<T: Scalar> {
    /// Both members start from the same draw (the diagonal).
    Identical(InitLaw<T>),
    /// Members drawn independently from the two laws.
    Independent(InitLaw<T>, InitLaw<T>),
}

/// Flat ensemble of M ordered age vectors at a common time.
#[derive(Clone, Debug)]
pub struct Ensemble<T: Scalar> {
    dim: usize,
    ages: Vec<T>,
    time: T,
    seed: u64,
}

impl<T: Scalar> Ensemble<T> {
    /// Assembles an ensemble from flat age data (M·dim entries, each
    /// state nonnegative, nondecreasing, and finite).
    pub fn new(dim: usize, ages: Vec<T>, time: T, seed: u64) -> Result<Self, ParticleError> {
        if dim == 0 || ages.is_empty() || ages.len() % dim != 0 {
            return Err(ParticleError::Argument(
                "age array length must be a positive multiple of dim".into(),
            ));
        }
        if !(time >= T::zero()) || !time.is_finite() {
            return Err(ParticleError::Argument("time must be nonnegative".into()));
        }
        for state in ages.chunks(dim) {
            let mut prev = T::zero();
            for &s in state {
                if !(s >= prev) || !s.is_finite() {
                    return Err(ParticleError::Argument(
                        "each state must be nonnegative and nondecreasing".into(),
                    ));
                }
                prev = s;
            }
        }
        Ok(Ensemble {
            dim,
            ages,
            time,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.ages.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ages(&self, i: usize) -> &[T] {
        &self.ages[i * self.dim..(i + 1) * self.dim]
    }

    pub fn flat_ages(&self) -> &[T] {
        &self.ages
    }
}

/// Two marginal ensembles evolved under the coupled generator.
#[derive(Clone, Debug)]
pub struct CoupledEnsemble<T: Scalar> {
    dim: usize,
    first: Vec<T>,
    second: Vec<T>,
    time: T,
    seed: u64,
}

impl<T: Scalar> CoupledEnsemble<T> {
    pub fn len(&self) -> usize {
        self.first.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn pair(&self, i: usize) -> (&[T], &[T]) {
        let r = i * self.dim..(i + 1) * self.dim;
        (&self.first[r.clone()], &self.second[r])
    }

    /// One member's states as a standalone ensemble.
    pub fn member(&self, which: usize) -> Ensemble<T> {
        Ensemble {
            dim: self.dim,
            ages: if which == 0 {
                self.first.clone()
            } else {
                self.second.clone()
            },
            time: self.time,
            seed: self.seed,
        }
    }

    /// Evenly strided subsample of at most `k` pairs.
    pub fn subsample(&self, k: usize) -> CoupledEnsemble<T> {
        let m = self.len();
        let k = k.max(1).min(m);
        let stride = m / k;
        let mut first = Vec::with_capacity(k * self.dim);
        let mut second = Vec::with_capacity(k * self.dim);
        for j in 0..k {
            let (a, b) = self.pair(j * stride);
            first.extend_from_slice(a);
            second.extend_from_slice(b);
        }
        CoupledEnsemble {
            dim: self.dim,
            first,
            second,
            time: self.time,
            seed: self.seed,
        }
    }
}

/// Proposal and jump counts of a single-state run.
#[derive(Clone, Copy, Debug, Default)]
pub struct JumpStats {
    pub proposals: u64,
    pub jumps: u64,
}

/// Counts of the three coupled jump outcomes.
#[derive(Clone, Copy, Debug, Default)]
pub struct CoupledStats {
    pub proposals: u64,
    pub sync_jumps: u64,
    pub lone_first: u64,
    pub lone_second: u64,
}

impl CoupledStats {
    /// Fraction of jump events in which only one member jumped.
    pub fn lone_jump_fraction(&self) -> f64 {
        let lone = self.lone_first + self.lone_second;
        let total = self.sync_jumps + lone;
        if total == 0 {
            0.0
        } else {
            lone as f64 / total as f64
        }
    }
}

/// Single-law simulation output.
#[derive(Clone, Debug)]
pub struct SimOutcome<T: Scalar> {
    pub snapshots: Vec<Ensemble<T>>,
    pub final_state: Ensemble<T>,
    pub stats: JumpStats,
    /// Sup-norm rate error induced by truncating the spec to `dim` times.
    pub truncation_rate_error: T,
}

impl<T: Scalar> SimOutcome<T> {
    /// Observed jumps per particle per unit time.
    pub fn mean_jump_rate(&self) -> T {
        let t = self.final_state.time();
        let m = self.final_state.len();
        if t <= T::zero() || m == 0 {
            return T::zero();
        }
        T::from_f64_lossy(self.stats.jumps as f64) / (T::from_usize_lossy(m) * t)
    }
}

/// Coupled simulation output.
#[derive(Clone, Debug)]
pub struct CoupledOutcome<T: Scalar> {
    pub snapshots: Vec<CoupledEnsemble<T>>,
    pub final_state: CoupledEnsemble<T>,
    pub stats: CoupledStats,
    pub truncation_rate_error: T,
}

impl<T: Scalar> CoupledOutcome<T> {
    /// Observed jumps per member per unit time, averaged over members.
    pub fn mean_jump_rate(&self) -> T {
        let t = self.final_state.time();
        let m = self.final_state.len();
        if t <= T::zero() || m == 0 {
            return T::zero();
        }
        let jumps =
            2 * self.stats.sync_jumps + self.stats.lone_first + self.stats.lone_second;
        T::from_f64_lossy(jumps as f64 / 2.0) / (T::from_usize_lossy(m) * t)
    }
}

fn validate_common<T: Scalar>(
    spec: &RateSpec<T>,
    n: usize,
    m: usize,
    t_end: T,
    snapshot_times: &[T],
) -> Result<T, ParticleError> {
    if n == 0 || m == 0 {
        return Err(ParticleError::Argument(
            "need at least one time coordinate and one particle".into(),
        ));
    }
    if let crate::model::Times::Finite(max) = spec.max_times() {
        if n > max {
            return Err(ParticleError::Argument(format!(
                "state dimension {n} exceeds the spec's {max} times"
            )));
        }
    }
    if !(t_end >= T::zero()) || !t_end.is_finite() {
        return Err(ParticleError::Argument("t_end must be nonnegative".into()));
    }
    let mut prev = T::zero();
    for &t in snapshot_times {
        if !(t >= prev) || t > t_end {
            return Err(ParticleError::Argument(
                "snapshot times must be sorted within [0, t_end]".into(),
            ));
        }
        prev = t;
    }
    Ok(spec.tail_norm(n, spec.max_times())?)
}

fn validate_law<T: Scalar>(law: &InitLaw<T>, n: usize) -> Result<(), ParticleError> {
    match law {
        InitLaw::Origin => Ok(()),
        InitLaw::ExpGaps { rate } => {
            if !(*rate > T::zero()) || !rate.is_finite() {
                return Err(ParticleError::Argument(
                    "exponential gap rate must be positive".into(),
                ));
            }
            Ok(())
        }
        InitLaw::DiracAges(ages) => {
            if ages.len() != n {
                return Err(ParticleError::Argument(format!(
                    "dirac needs {n} ages, got {}",
                    ages.len()
                )));
            }
            let mut prev = T::zero();
            for &s in ages {
                if !(s >= prev) || !s.is_finite() {
                    return Err(ParticleError::Argument(
                        "dirac ages must be nonnegative and nondecreasing".into(),
                    ));
                }
                prev = s;
            }
            Ok(())
        }
        InitLaw::UniformGapBox { lo, hi } => {
            if lo.len() != n || hi.len() != n {
                return Err(ParticleError::Argument(format!(
                    "box needs {n} bounds per side"
                )));
            }
            for (&a, &b) in lo.iter().zip(hi) {
                if !(a >= T::zero()) || !(b > a) || !b.is_finite() {
                    return Err(ParticleError::Argument(
                        "box needs finite bounds with hi > lo >= 0 per axis".into(),
                    ));
                }
            }
            Ok(())
        }
    }
}

fn sample_init<T: Scalar>(law: &InitLaw<T>, n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    match law {
        InitLaw::Origin => vec![T::zero(); n],
        InitLaw::ExpGaps { rate } => {
            let mut ages = Vec::with_capacity(n);
            let mut acc = T::zero();
            for _ in 0..n {
                let u: f64 = rng.random();
                acc += T::from_f64_lossy(-(1.0 - u).ln()) / *rate;
                ages.push(acc);
            }
            ages
        }
        InitLaw::DiracAges(ages) => ages.clone(),
        InitLaw::UniformGapBox { lo, hi } => {
            let mut ages = Vec::with_capacity(n);
            let mut acc = T::zero();
            for (&a, &b) in lo.iter().zip(hi) {
                let u: f64 = rng.random();
                acc += a + (b - a) * T::from_f64_lossy(u);
                ages.push(acc);
            }
            ages
        }
    }
}

fn apply_shift<T: Scalar>(ages: &mut [T]) {
    let n = ages.len();
    ages.copy_within(0..n - 1, 1);
    ages[0] = T::zero();
}

/// One particle's walk to t_end, writing its state at each snapshot time
/// (post-jump at event ties) into `snap_out` as consecutive age vectors.
fn walk_single<T: Scalar>(
    spec: &RateSpec<T>,
    ages: &mut [T],
    t_end: T,
    snaps: &[T],
    rng: &mut ChaCha8Rng,
    snap_out: &mut Vec<T>,
) -> Result<JumpStats, ParticleError> {
    let a_plus = spec.a_plus();
    let tol = a_plus * T::from_f64_lossy(1e-9);
    let mut tc = T::zero();
    let mut si = 0usize;
    let mut stats = JumpStats::default();
    loop {
        while si < snaps.len() && snaps[si] <= tc {
            snap_out.extend_from_slice(ages);
            si += 1;
        }
        if tc >= t_end {
            break;
        }
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let t_next = tc + T::from_f64_lossy(-(1.0 - u1).ln()) / a_plus;
        let t_stop = if t_next < t_end { t_next } else { t_end };
        while si < snaps.len() && snaps[si] < t_stop {
            let d = snaps[si] - tc;
            for &a in ages.iter() {
                snap_out.push(a + d);
            }
            si += 1;
        }
        let d = t_stop - tc;
        for a in ages.iter_mut() {
            *a += d;
        }
        tc = t_stop;
        if t_next <= t_end {
            stats.proposals += 1;
            let p = spec.eval_rate_unchecked(ages);
            if p > a_plus + tol {
                return Err(ParticleError::SpecContract(format!(
                    "rate {p} exceeds the declared envelope {a_plus}"
                )));
            }
            if T::from_f64_lossy(u2) * a_plus < p {
                apply_shift(ages);
                stats.jumps += 1;
            }
        }
    }
    Ok(stats)
}

/// Exact-law simulation of M independent states.
pub fn simulate<T: Scalar>(
    spec: &RateSpec<T>,
    n: usize,
    m: usize,
    t_end: T,
    init: &InitLaw<T>,
    seed: u64,
    snapshot_times: &[T],
) -> Result<SimOutcome<T>, ParticleError> {
    let trunc = validate_common(spec, n, m, t_end, snapshot_times)?;
    validate_law(init, n)?;
    let k = snapshot_times.len();
    let per: Result<Vec<(Vec<T>, Vec<T>, JumpStats)>, ParticleError> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut ages = sample_init(init, n, &mut rng);
            let mut snap_out = Vec::with_capacity(k * n);
            let stats = walk_single(spec, &mut ages, t_end, snapshot_times, &mut rng, &mut snap_out)?;
            Ok((snap_out, ages, stats))
        })
        .collect();
    let per = per?;
    let mut snapshots: Vec<Ensemble<T>> = snapshot_times
        .iter()
        .map(|&t| Ensemble {
            dim: n,
            ages: Vec::with_capacity(m * n),
            time: t,
            seed,
        })
        .collect();
    let mut final_ages = Vec::with_capacity(m * n);
    let mut stats = JumpStats::default();
    for (snap_out, ages, st) in per {
        for (s, chunk) in snapshots.iter_mut().zip(snap_out.chunks(n)) {
            s.ages.extend_from_slice(chunk);
        }
        final_ages.extend_from_slice(&ages);
        stats.proposals += st.proposals;
        stats.jumps += st.jumps;
    }
    Ok(SimOutcome {
        snapshots,
        final_state: Ensemble {
            dim: n,
            ages: final_ages,
            time: t_end,
            seed,
        },
        stats,
        truncation_rate_error: trunc,
    })
}

/// One coupled pair's walk: a shared proposal clock dispatches both-jump,
/// first-only, second-only, or no-jump from a single uniform level.
#[allow(clippy::too_many_arguments)]
fn walk_pair<T: Scalar>(
    spec: &RateSpec<T>,
    first: &mut [T],
    second: &mut [T],
    t_end: T,
    snaps: &[T],
    rng: &mut ChaCha8Rng,
    snap_first: &mut Vec<T>,
    snap_second: &mut Vec<T>,
) -> Result<CoupledStats, ParticleError> {
    let a_plus = spec.a_plus();
    let tol = a_plus * T::from_f64_lossy(1e-9);
    let mut tc = T::zero();
    let mut si = 0usize;
    let mut stats = CoupledStats::default();
    loop {
        while si < snaps.len() && snaps[si] <= tc {
            snap_first.extend_from_slice(first);
            snap_second.extend_from_slice(second);
            si += 1;
        }
        if tc >= t_end {
            break;
        }
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let t_next = tc + T::from_f64_lossy(-(1.0 - u1).ln()) / a_plus;
        let t_stop = if t_next < t_end { t_next } else { t_end };
        while si < snaps.len() && snaps[si] < t_stop {
            let d = snaps[si] - tc;
            for &a in first.iter() {
                snap_first.push(a + d);
            }
            for &a in second.iter() {
                snap_second.push(a + d);
            }
            si += 1;
        }
        let d = t_stop - tc;
        for a in first.iter_mut() {
            *a += d;
        }
        for a in second.iter_mut() {
            *a += d;
        }
        tc = t_stop;
        if t_next <= t_end {
            stats.proposals += 1;
            let p1 = spec.eval_rate_unchecked(first);
            let p2 = spec.eval_rate_unchecked(second);
            if p1 > a_plus + tol || p2 > a_plus + tol {
                return Err(ParticleError::SpecContract(format!(
                    "rate {} exceeds the declared envelope {a_plus}",
                    if p1 > p2 { p1 } else { p2 }
                )));
            }
            let level = T::from_f64_lossy(u2) * a_plus;
            let both = if p1 < p2 { p1 } else { p2 };
            if level < both {
                apply_shift(first);
                apply_shift(second);
                stats.sync_jumps += 1;
            } else if level < p1 {
                apply_shift(first);
                stats.lone_first += 1;
            } else if level < p2 {
                apply_shift(second);
                stats.lone_second += 1;
            }
        }
    }
    Ok(stats)
}

/// Exact-law simulation of M coupled pairs under the joint generator
/// (synchronous rate min{p, p'}, lone rates (p−p')₊ and (p'−p)₊).
pub fn simulate_coupled<T: Scalar>(
    spec: &RateSpec<T>,
    n: usize,
    m: usize,
    t_end: T,
    init: &PairInit<T>,
    seed: u64,
    snapshot_times: &[T],
) -> Result<CoupledOutcome<T>, ParticleError> {
    let trunc = validate_common(spec, n, m, t_end, snapshot_times)?;
    match init {
        PairInit::Identical(law) => validate_law(law, n)?,
        PairInit::Independent(l1, l2) => {
            validate_law(l1, n)?;
            validate_law(l2, n)?;
        }
    }
    let k = snapshot_times.len();
    type PairOut<T> = (Vec<T>, Vec<T>, Vec<T>, Vec<T>, CoupledStats);
    let per: Result<Vec<PairOut<T>>, ParticleError> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let (mut first, mut second) = match init {
                PairInit::Identical(law) => {
                    let a = sample_init(law, n, &mut rng);
                    (a.clone(), a)
                }
                PairInit::Independent(l1, l2) => {
                    let a = sample_init(l1, n, &mut rng);
                    let b = sample_init(l2, n, &mut rng);
                    (a, b)
                }
            };
            let mut sf = Vec::with_capacity(k * n);
            let mut ss = Vec::with_capacity(k * n);
            let stats = walk_pair(
                spec,
                &mut first,
                &mut second,
                t_end,
                snapshot_times,
                &mut rng,
                &mut sf,
                &mut ss,
            )?;
            Ok((sf, ss, first, second, stats))
        })
        .collect();
    let per = per?;
    let mut snapshots: Vec<CoupledEnsemble<T>> = snapshot_times
        .iter()
        .map(|&t| CoupledEnsemble {
            dim: n,
            first: Vec::with_capacity(m * n),
            second: Vec::with_capacity(m * n),
            time: t,
            seed,
        })
        .collect();
    let mut final_first = Vec::with_capacity(m * n);
    let mut final_second = Vec::with_capacity(m * n);
    let mut stats = CoupledStats::default();
    for (sf, ss, first, second, st) in per {
        for (s, (cf, cs)) in snapshots.iter_mut().zip(sf.chunks(n).zip(ss.chunks(n))) {
            s.first.extend_from_slice(cf);
            s.second.extend_from_slice(cs);
        }
        final_first.extend_from_slice(&first);
        final_second.extend_from_slice(&second);
        stats.proposals += st.proposals;
        stats.sync_jumps += st.sync_jumps;
        stats.lone_first += st.lone_first;
        stats.lone_second += st.lone_second;
    }
    Ok(CoupledOutcome {
        snapshots,
        final_state: CoupledEnsemble {
            dim: n,
            first: final_first,
            second: final_second,
            time: t_end,
            seed,
        },
        stats,
        truncation_rate_error: trunc,
    })
}

/// Mean and standard error of a sample.
#[derive(Clone, Copy, Debug)]
pub struct CostStat<T: Scalar> {
    pub mean: T,
    pub std_error: T,
}

/// Mean truncated weighted transport cost over the pairs of an ensemble;
/// an upper-bound estimator of the distance between the marginal laws.
pub fn coupled_cost<T: Scalar>(
    cens: &CoupledEnsemble<T>,
    beta: T,
    a: T,
) -> Result<CostStat<T>, ParticleError> {
    let params = CostParams::new(beta, a, cens.dim())?;
    let m = cens.len();
    if m == 0 {
        return Err(ParticleError::Argument("empty ensemble".into()));
    }
    let costs: Vec<T> = (0..m)
        .into_par_iter()
        .map(|i| {
            let (x, y) = cens.pair(i);
            cost(x, y, &params)
        })
        .collect::<Result<_, _>>()?;
    let mean = crate::grid::pairwise_sum(&costs) / T::from_usize_lossy(m);
    if m == 1 {
        return Ok(CostStat {
            mean,
            std_error: T::zero(),
        });
    }
    let sq: Vec<T> = costs.iter().map(|&c| (c - mean) * (c - mean)).collect();
    let var = crate::grid::pairwise_sum(&sq)
        / (T::from_usize_lossy(m) * T::from_usize_lossy(m - 1));
    Ok(CostStat {
        mean,
        std_error: var.sqrt(),
    })
}

/// Histogram of the first-K gap coordinates, normalized to unit mass.
pub fn empirical_marginal<T: Scalar>(
    ens: &Ensemble<T>,
    k: usize,
    grid: &GapGrid<T>,
) -> Result<DensityField<T>, ParticleError> {
    if k == 0 || k > ens.dim() {
        return Err(ParticleError::Argument(format!(
            "marginal index {k} out of range for dimension {}",
            ens.dim()
        )));
    }
    if grid.times() != k {
        return Err(ParticleError::Argument(format!(
            "grid has {} axes, expected {k}",
            grid.times()
        )));
    }
    let m = ens.len();
    if m == 0 {
        return Err(ParticleError::Argument("empty ensemble".into()));
    }
    let cells = grid.num_cells();
    let mc = grid.cells_per_axis();
    let h = grid.cell_width();
    let counts = (0..m)
        .into_par_iter()
        .fold(
            || vec![0u64; cells],
            |mut acc, i| {
                let ages = ens.ages(i);
                let mut idx = 0usize;
                let mut prev = T::zero();
                for &s in ages.iter().take(k) {
                    let gap = s - prev;
                    prev = s;
                    let cell = (gap / h).floor().to_f64_lossy().max(0.0) as usize;
                    idx = idx * mc + cell.min(mc - 1);
                }
                acc[idx] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; cells],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let inv = T::one() / T::from_usize_lossy(m);
    let values: Vec<T> = counts
        .iter()
        .map(|&c| T::from_f64_lossy(c as f64) * inv)
        .collect();
    Ok(DensityField::from_values(*grid, values)?)
}
