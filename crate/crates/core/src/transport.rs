//! Truncated weighted transport distances between state clouds.
//!
//! The ground cost between two ordered age vectors is
//! sum_i min(|s_i − s'_i|, a) · (1+beta)^{-i}, a bounded metric. Exact
//! optimal-transport values between discrete clouds are computed in
//! integer arithmetic: masses are integerized by largest remainder to a
//! fixed scale, costs are rounded to a fixed scale, and the min-cost flow
//! solver returns an integer optimum together with a matching dual value,
//! so the reported duality gap is exact.

use rayon::prelude::*;
use thiserror::Error;

use crate::flow::{min_cost_transport, FlowError};
use crate::model::{lipschitz_params, LipschitzReport, ModelError, RateSpec, Times};
use crate::particles::{
    coupled_cost, simulate_coupled, CostStat, CoupledStats, Ensemble, PairInit, ParticleError,
};
use crate::scalar::Scalar;

/// Largest atom count per side accepted by the exact solver.
pub const MAX_SUPPORT: usize = 2000;

const MASS_SCALE: f64 = 1e12;
const COST_SCALE: f64 = 1e9;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("argument out of range: {0}")]
    Argument(String),
    #[error("support of size {0} exceeds the exact-solver limit {MAX_SUPPORT}")]
    SizeLimit(usize),
    #[error("cost is not contractive for these parameters: {0}")]
    NotContractive(String),
    #[error("flow solver: {0}")]
    Solver(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Particle(Box<ParticleError>),
}

impl From<ParticleError> for TransportError {
    fn from(e: ParticleError) -> Self {
        TransportError::Particle(Box::new(e))
    }
}

impl From<FlowError> for TransportError {
    fn from(e: FlowError) -> Self {
        TransportError::Solver(e.to_string())
    }
}

/// Parameters of the truncated weighted cost in dimension `n`.
#[derive(Clone, Copy, Debug)]
pub struct CostParams<T: Scalar> {
    pub beta: T,
    pub a: T,
    pub n: usize,
}

impl<T: Scalar> CostParams<T> {
    pub fn new(beta: T, a: T, n: usize) -> Result<Self, TransportError> {
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(TransportError::Argument("beta must be positive".into()));
        }
        if !(a > T::zero()) || !a.is_finite() {
            return Err(TransportError::Argument("a must be positive".into()));
        }
        if n == 0 {
            return Err(TransportError::Argument(
                "need at least one coordinate".into(),
            ));
        }
        Ok(CostParams { beta, a, n })
    }

    /// Upper bound a/beta on the cost between any two states.
    pub fn cap(&self) -> T {
        self.a / self.beta
    }
}

/// Truncated weighted distance between two ordered age vectors.
pub fn cost<T: Scalar>(x: &[T], y: &[T], params: &CostParams<T>) -> Result<T, TransportError> {
    if x.len() != params.n || y.len() != params.n {
        return Err(TransportError::Argument(format!(
            "states must have {} coordinates, got {} and {}",
            params.n,
            x.len(),
            y.len()
        )));
    }
    let mut total = T::zero();
    let mut weight = T::one();
    let one_plus = T::one() + params.beta;
    for (&xi, &yi) in x.iter().zip(y) {
        weight = weight / one_plus;
        let d = (xi - yi).abs().min(params.a);
        total += d * weight;
    }
    Ok(total)
}

/// Finitely supported probability measure on state space.
#[derive(Clone, Debug)]
pub struct DiscreteMeasure<T: Scalar> {
    dim: usize,
    atoms: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> DiscreteMeasure<T> {
    /// Atoms as one flat row-major array with explicit weights; the
    /// weights must be positive and sum to 1 within 1e-12.
    pub fn new(dim: usize, atoms: Vec<T>, weights: Vec<T>) -> Result<Self, TransportError> {
        if dim == 0 {
            return Err(TransportError::Argument(
                "need at least one coordinate".into(),
            ));
        }
        if weights.is_empty() || atoms.len() != weights.len() * dim {
            return Err(TransportError::Argument(format!(
                "atom array of length {} does not hold {} states of dimension {dim}",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(TransportError::Argument("atoms must be finite".into()));
        }
        let mut sum = T::zero();
        for &w in &weights {
            if !(w > T::zero()) || !w.is_finite() {
                return Err(TransportError::Argument(
                    "weights must be positive".into(),
                ));
            }
            sum += w;
        }
        if (sum - T::one()).abs() > T::from_f64_lossy(1e-12) {
            return Err(TransportError::Argument(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(DiscreteMeasure { dim, atoms, weights })
    }

    /// Uniform weights over the given flat point array.
    pub fn uniform(dim: usize, atoms: Vec<T>) -> Result<Self, TransportError> {
        if dim == 0 || atoms.is_empty() || atoms.len() % dim != 0 {
            return Err(TransportError::Argument(
                "atom array length must be a positive multiple of dim".into(),
            ));
        }
        let k = atoms.len() / dim;
        let w = T::one() / T::from_usize_lossy(k);
        let mut weights = vec![w; k];
        // Fix the last weight so the total is exactly 1.
        let partial: T = w * T::from_usize_lossy(k - 1);
        weights[k - 1] = T::one() - partial;
        DiscreteMeasure::new(dim, atoms, weights)
    }

    /// Empirical measure of an ensemble.
    pub fn from_ensemble(ens: &Ensemble<T>) -> Result<Self, TransportError> {
        DiscreteMeasure::uniform(ens.dim(), ens.flat_ages().to_vec())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atom(&self, i: usize) -> &[T] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> T {
        self.weights[i]
    }
}

/// One entry of a transport plan.
#[derive(Clone, Copy, Debug)]
pub struct PlanEntry<T: Scalar> {
    pub from: usize,
    pub to: usize,
    pub mass: T,
}

/// Exact solution of a discrete transport problem.
#[derive(Clone, Debug)]
pub struct MkSolution<T: Scalar> {
    pub value: T,
    pub plan: Vec<PlanEntry<T>>,
    /// Primal minus dual objective at the integer scale; zero at optimum.
    pub duality_gap: T,
}

/// Largest-remainder integerization of a weight vector to a fixed total.
fn integerize<T: Scalar>(weights: &[T], total: i64) -> Vec<i64> {
    let scaled: Vec<f64> = weights
        .iter()
        .map(|w| w.to_f64_lossy() * total as f64)
        .collect();
    let mut parts: Vec<i64> = scaled.iter().map(|&s| s.floor() as i64).collect();
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by(|&i, &j| {
        let ri = scaled[i] - parts[i] as f64;
        let rj = scaled[j] - parts[j] as f64;
        rj.partial_cmp(&ri).unwrap().then(i.cmp(&j))
    });
    let mut deficit = total - parts.iter().sum::<i64>();
    let mut cursor = 0usize;
    while deficit > 0 {
        parts[order[cursor % order.len()]] += 1;
        deficit -= 1;
        cursor += 1;
    }
    cursor = order.len();
    while deficit < 0 {
        cursor = if cursor == 0 { order.len() - 1 } else { cursor - 1 };
        if parts[order[cursor]] > 0 {
            parts[order[cursor]] -= 1;
            deficit += 1;
        }
    }
    parts
}

/// Exact transport distance between two discrete measures.
pub fn exact_mk<T: Scalar>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    params: &CostParams<T>,
) -> Result<MkSolution<T>, TransportError> {
    if mu.dim() != params.n || nu.dim() != params.n {
        return Err(TransportError::Argument(format!(
            "measures must live in dimension {}",
            params.n
        )));
    }
    if mu.len() > MAX_SUPPORT || nu.len() > MAX_SUPPORT {
        return Err(TransportError::SizeLimit(mu.len().max(nu.len())));
    }
    let cap = params.cap().to_f64_lossy();
    if !(cap * COST_SCALE < 1e18) {
        return Err(TransportError::Argument(
            "cost cap too large for exact integer arithmetic".into(),
        ));
    }
    let (n, m) = (mu.len(), nu.len());
    let costs: Vec<i64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = mu.atom(i);
            (0..m).map(move |j| {
                let c = cost(x, nu.atom(j), params).expect("dims checked");
                (c.to_f64_lossy() * COST_SCALE).round() as i64
            })
        })
        .collect();
    let supplies = integerize(&mu.weights, MASS_SCALE as i64);
    let demands = integerize(&nu.weights, MASS_SCALE as i64);
    let sol = min_cost_transport(&supplies, &demands, &costs)?;
    let scale = T::from_f64_lossy(MASS_SCALE * COST_SCALE);
    let value = T::from_f64_lossy(sol.objective as f64) / scale;
    let duality_gap =
        T::from_f64_lossy((sol.objective - sol.dual_objective) as f64) / scale;
    let inv_mass = T::from_f64_lossy(1.0 / MASS_SCALE);
    let mut plan = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let f = sol.flows[i * m + j];
            if f > 0 {
                plan.push(PlanEntry {
                    from: i,
                    to: j,
                    mass: T::from_f64_lossy(f as f64) * inv_mass,
                });
            }
        }
    }
    Ok(MkSolution {
        value,
        plan,
        duality_gap,
    })
}

/// One checkpoint of a contraction experiment.
#[derive(Clone, Copy, Debug)]
pub struct ContractionPoint<T: Scalar> {
    pub t: T,
    pub mean_cost: T,
    pub std_error: T,
    /// Predicted envelope: initial cost times exp(−gamma·t).
    pub bound: T,
    /// Exact distance between subsampled marginal clouds, when requested.
    pub exact: Option<T>,
}

/// Outcome of a coupled contraction experiment.
#[derive(Clone, Debug)]
pub struct ContractionReport<T: Scalar> {
    pub lipschitz: LipschitzReport<T>,
    pub gamma: T,
    pub initial: CostStat<T>,
    /// Exact distance between the subsampled initial clouds, when requested.
    pub initial_exact: Option<T>,
    pub points: Vec<ContractionPoint<T>>,
    /// Inverse-variance weighted least-squares decay rate of the mean
    /// cost, when enough positive samples exist.
    pub fitted_rate: Option<T>,
    /// Every checkpoint mean stayed below the envelope plus three SE.
    pub within_bound: bool,
    /// Every exact distance stayed below the coupled mean plus three SE.
    pub exact_consistent: bool,
    pub stats: CoupledStats,
    pub truncation_rate_error: T,
}

/// Least-squares slope of ln(c) against t over positive samples, negated.
fn fitted_decay_rate<T: Scalar>(points: &[(T, T)]) -> Option<T> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(_, c)| c > T::zero())
        .map(|&(t, c)| (t.to_f64_lossy(), c.to_f64_lossy().ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let (st, sl): (f64, f64) = logs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mt, ml) = (st / n, sl / n);
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, l) in logs {
        num += (t - mt) * (l - ml);
        den += (t - mt) * (t - mt);
    }
    if den == 0.0 {
        return None;
    }
    Some(T::from_f64_lossy(-num / den))
}

/// Decay-rate fit for Monte Carlo means with standard errors, weighting
/// each sample by 1/Var(ln c) ≈ (c/se)² so near-floor tail samples do not
/// drown the signal-dominant early decay. Falls back to the unweighted
/// fit when fewer than two samples carry a usable weight.
fn weighted_decay_rate<T: Scalar>(points: &[(T, T, T)]) -> Option<T> {
    let logs: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|&&(_, c, se)| c > T::zero() && se > T::zero())
        .map(|&(t, c, se)| {
            let (c, se) = (c.to_f64_lossy(), se.to_f64_lossy());
            (t.to_f64_lossy(), c.ln(), (c / se) * (c / se))
        })
        .collect();
    if logs.len() < 2 {
        let plain: Vec<(T, T)> = points.iter().map(|&(t, c, _)| (t, c)).collect();
        return fitted_decay_rate(&plain);
    }
    let sw: f64 = logs.iter().map(|p| p.2).sum();
    let mt = logs.iter().map(|p| p.0 * p.2).sum::<f64>() / sw;
    let ml = logs.iter().map(|p| p.1 * p.2).sum::<f64>() / sw;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, l, w) in logs {
        num += w * (t - mt) * (l - ml);
        den += w * (t - mt) * (t - mt);
    }
    if den == 0.0 {
        return None;
    }
    Some(T::from_f64_lossy(-num / den))
}

/// Runs the coupled process from a pair law and checks the cost decay
/// against the contraction envelope; `exact_support > 0` additionally
/// solves the exact distance between subsampled marginal clouds at each
/// checkpoint.
#[allow(clippy::too_many_arguments)]
pub fn contraction_experiment<T: Scalar>(
    spec: &RateSpec<T>,
    params: &CostParams<T>,
    init: &PairInit<T>,
    m: usize,
    t_checkpoints: &[T],
    seed: u64,
    exact_support: usize,
) -> Result<ContractionReport<T>, TransportError> {
    let lipschitz = lipschitz_params(spec, params.beta, params.a, Times::Finite(params.n))?;
    if !lipschitz.admissible {
        return Err(TransportError::NotContractive(
            lipschitz.violations().join("; "),
        ));
    }
    let gamma = lipschitz.gamma;
    if t_checkpoints.is_empty() {
        return Err(TransportError::Argument(
            "need at least one checkpoint".into(),
        ));
    }
    let mut snaps: Vec<T> = Vec::with_capacity(t_checkpoints.len() + 1);
    snaps.push(T::zero());
    for &t in t_checkpoints {
        if !(t > T::zero()) {
            return Err(TransportError::Argument(
                "checkpoints must be positive and sorted".into(),
            ));
        }
        if *snaps.last().unwrap() < t {
            snaps.push(t);
        } else if *snaps.last().unwrap() > t {
            return Err(TransportError::Argument(
                "checkpoints must be positive and sorted".into(),
            ));
        }
    }
    let t_end = *snaps.last().unwrap();
    let out = simulate_coupled(spec, params.n, m, t_end, init, seed, &snaps)?;
    let initial = coupled_cost(&out.snapshots[0], params.beta, params.a)?;
    let three = T::from_f64_lossy(3.0);
    let mut exact_consistent = true;
    let mut solve_exact = |snap: &crate::particles::CoupledEnsemble<T>,
                           stat: &CostStat<T>|
     -> Result<Option<T>, TransportError> {
        if exact_support == 0 {
            return Ok(None);
        }
        let sub = snap.subsample(exact_support);
        let mu = DiscreteMeasure::from_ensemble(&sub.member(0))?;
        let nu = DiscreteMeasure::from_ensemble(&sub.member(1))?;
        let sol = exact_mk(&mu, &nu, params)?;
        if sol.value > stat.mean + three * stat.std_error {
            exact_consistent = false;
        }
        Ok(Some(sol.value))
    };
    let initial_exact = solve_exact(&out.snapshots[0], &initial)?;
    let mut points = Vec::with_capacity(snaps.len() - 1);
    let mut within_bound = true;
    let mut series = vec![(T::zero(), initial.mean, initial.std_error)];
    for snap in &out.snapshots[1..] {
        let t = snap.time();
        let stat = coupled_cost(snap, params.beta, params.a)?;
        let bound = initial.mean * (-gamma * t).exp();
        if stat.mean > bound + three * stat.std_error {
            within_bound = false;
        }
        let exact = solve_exact(snap, &stat)?;
        series.push((t, stat.mean, stat.std_error));
        points.push(ContractionPoint {
            t,
            mean_cost: stat.mean,
            std_error: stat.std_error,
            bound,
            exact,
        });
    }
    Ok(ContractionReport {
        lipschitz,
        gamma,
        initial,
        initial_exact,
        points,
        fitted_rate: weighted_decay_rate(&series),
        within_bound,
        exact_consistent,
        stats: out.stats,
        truncation_rate_error: out.truncation_rate_error,
    })
}
