//! Additive renewal rates and their analytic bookkeeping.
//!
//! A rate is p([s]_N) = Σ_{i=1…N} φ_i(s_1, …, s_i) with every component
//! nonnegative, bounded, and summable: a_minus ≤ p ≤ a_plus. Infinite
//! families are stored as an explicit prefix plus a geometric tail, so
//! truncation to any N and tail norms ε_{K,N} = Σ_{i>K} ‖φ_i‖_∞ stay in
//! closed form.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;

/// Number of retained renewal times, finite or the full limit.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Times {
    Finite(usize),
    Infinite,
}

impl Times {
    pub fn is_finite(self) -> bool {
        matches!(self, Times::Finite(_))
    }

    /// Whether index `i` (1-based) is within this horizon.
    pub fn contains(self, i: usize) -> bool {
        match self {
            Times::Finite(n) => i <= n,
            Times::Infinite => true,
        }
    }
}

impl fmt::Display for Times {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Times::Finite(n) => write!(f, "{n}"),
            Times::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid rate component: {0}")]
    InvalidComponent(String),
    #[error("declared bounds rejected: {0}")]
    BoundsViolated(String),
    #[error("ages must be nonnegative and nondecreasing (got {0:?})")]
    InadmissibleAges(Vec<f64>),
    #[error("rate supports at most {max} times, requested {requested}")]
    TimesOutOfRange { max: usize, requested: usize },
    #[error("marginal index K={k} must satisfy 1 <= K <= {n}")]
    IndexOutOfRange { k: usize, n: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("argument out of range: {0}")]
    Argument(String),
}

/// One component φ_i of an additive rate.
#[derive(Clone)]
pub enum ComponentKind<T: Scalar> {
    /// φ_i ≡ value.
    Constant { value: T },
    /// φ_i(s_i) = weight · clamp(slope·s_i + intercept; floor, cap).
    ClampedAffine {
        weight: T,
        slope: T,
        intercept: T,
        floor: T,
        cap: T,
    },
    /// φ_i(s_i) = weight · clamp(f(s_i); floor, cap) with |f'| ≤ slope_bound.
    ClampedLipschitz {
        weight: T,
        floor: T,
        cap: T,
        f: Arc<dyn Fn(T) -> T + Send + Sync>,
        slope_bound: T,
    },
    /// φ_i(s_1..s_i) = eval(prefix), with caller-declared bounds. The
    /// Lipschitz constant is with respect to the last coordinate s_i;
    /// leave it `None` if unknown (Lipschitz reports will then error).
    WeightedGeneric {
        eval: Arc<dyn Fn(&[T]) -> T + Send + Sync>,
        sup_norm: T,
        lipschitz: Option<T>,
        oscillation: Option<T>,
    },
}

impl<T: Scalar> fmt::Debug for ComponentKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentKind::Constant { value } => write!(f, "Constant({value:?})"),
            ComponentKind::ClampedAffine {
                weight,
                slope,
                intercept,
                floor,
                cap,
            } => write!(
                f,
                "ClampedAffine(w={weight:?}, {slope:?}*s+{intercept:?} in [{floor:?},{cap:?}])"
            ),
            ComponentKind::ClampedLipschitz {
                weight,
                floor,
                cap,
                slope_bound,
                ..
            } => write!(
                f,
                "ClampedLipschitz(w={weight:?}, f in [{floor:?},{cap:?}], slope<={slope_bound:?})"
            ),
            ComponentKind::WeightedGeneric { sup_norm, .. } => {
                write!(f, "WeightedGeneric(sup={sup_norm:?})")
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct RateComponent<T: Scalar> {
    kind: ComponentKind<T>,
}

impl<T: Scalar> RateComponent<T> {
    pub fn new(kind: ComponentKind<T>) -> Result<Self, ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidComponent(msg.to_string()));
        match &kind {
            ComponentKind::Constant { value } => {
                if !(*value > T::zero()) || !value.is_finite() {
                    return bad("constant value must be positive and finite");
                }
            }
            ComponentKind::ClampedAffine {
                weight,
                slope,
                intercept,
                floor,
                cap,
            } => {
                if !(*weight > T::zero()) || !(*floor > T::zero()) || !(*cap >= *floor) {
                    return bad("clamped component needs weight > 0 and cap >= floor > 0");
                }
                if !slope.is_finite() || !intercept.is_finite() || !cap.is_finite() {
                    return bad("clamped affine parameters must be finite");
                }
            }
            ComponentKind::ClampedLipschitz {
                weight,
                floor,
                cap,
                slope_bound,
                ..
            } => {
                if !(*weight > T::zero()) || !(*floor > T::zero()) || !(*cap >= *floor) {
                    return bad("clamped component needs weight > 0 and cap >= floor > 0");
                }
                if !(*slope_bound >= T::zero()) || !slope_bound.is_finite() {
                    return bad("slope bound must be finite and nonnegative");
                }
            }
            ComponentKind::WeightedGeneric { sup_norm, .. } => {
                if !(*sup_norm > T::zero()) || !sup_norm.is_finite() {
                    return bad("generic component needs a positive finite sup norm");
                }
            }
        }
        Ok(Self { kind })
    }

    pub fn constant(value: T) -> Result<Self, ModelError> {
        Self::new(ComponentKind::Constant { value })
    }

    pub fn kind(&self) -> &ComponentKind<T> {
        &self.kind
    }

    /// Evaluate on the age prefix (s_1, …, s_i); per-coordinate kinds use
    /// the last entry.
    pub fn eval(&self, prefix: &[T]) -> T {
        let s = *prefix.last().expect("component prefix is nonempty");
        match &self.kind {
            ComponentKind::Constant { value } => *value,
            ComponentKind::ClampedAffine {
                weight,
                slope,
                intercept,
                floor,
                cap,
            } => *weight * clamp(*slope * s + *intercept, *floor, *cap),
            ComponentKind::ClampedLipschitz {
                weight,
                floor,
                cap,
                f,
                ..
            } => *weight * clamp(f(s), *floor, *cap),
            ComponentKind::WeightedGeneric { eval, .. } => eval(prefix),
        }
    }

    pub fn sup_norm(&self) -> T {
        match &self.kind {
            ComponentKind::Constant { value } => *value,
            ComponentKind::ClampedAffine { weight, cap, .. }
            | ComponentKind::ClampedLipschitz { weight, cap, .. } => *weight * *cap,
            ComponentKind::WeightedGeneric { sup_norm, .. } => *sup_norm,
        }
    }

    /// Lipschitz constant in the last coordinate, if declared.
    pub fn lipschitz(&self) -> Option<T> {
        match &self.kind {
            ComponentKind::Constant { .. } => Some(T::zero()),
            ComponentKind::ClampedAffine { weight, slope, .. } => Some(*weight * slope.abs()),
            ComponentKind::ClampedLipschitz {
                weight,
                slope_bound,
                ..
            } => Some(*weight * *slope_bound),
            ComponentKind::WeightedGeneric { lipschitz, .. } => *lipschitz,
        }
    }

    /// Oscillation sup φ_i − inf φ_i, if declared.
    pub fn oscillation(&self) -> Option<T> {
        match &self.kind {
            ComponentKind::Constant { .. } => Some(T::zero()),
            ComponentKind::ClampedAffine {
                weight, floor, cap, ..
            }
            | ComponentKind::ClampedLipschitz {
                weight, floor, cap, ..
            } => Some(*weight * (*cap - *floor)),
            ComponentKind::WeightedGeneric { oscillation, .. } => *oscillation,
        }
    }
}

fn clamp<T: Scalar>(x: T, lo: T, hi: T) -> T {
    x.max(lo).min(hi)
}

/// Closed-form geometric continuation of a rate family past its prefix.
///
/// Component P+j (j ≥ 1, P the prefix length) has weight
/// `first_weight · ratio^{j−1}`.
#[derive(Clone, Debug)]
pub struct GeometricTail<T: Scalar> {
    pub first_weight: T,
    pub ratio: T,
    pub kind: TailKind<T>,
}

#[derive(Clone, Debug)]
pub enum TailKind<T: Scalar> {
    /// φ_i ≡ weight_i.
    Constant,
    /// φ_i(s_i) = weight_i · clamp(s_i; floor, cap).
    ClampedIdentity { floor: T, cap: T },
}

impl<T: Scalar> GeometricTail<T> {
    fn validate(&self) -> Result<(), ModelError> {
        if !(self.first_weight > T::zero()) || !self.first_weight.is_finite() {
            return Err(ModelError::InvalidComponent(
                "tail first_weight must be positive and finite".into(),
            ));
        }
        if !(self.ratio > T::zero()) || !(self.ratio < T::one()) {
            return Err(ModelError::InvalidComponent(
                "tail ratio must lie in (0, 1)".into(),
            ));
        }
        if let TailKind::ClampedIdentity { floor, cap } = &self.kind {
            if !(*floor > T::zero()) || !(*cap >= *floor) || !cap.is_finite() {
                return Err(ModelError::InvalidComponent(
                    "tail clamp needs cap >= floor > 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Weight of tail component with 1-based offset j ≥ 1 past the prefix.
    fn weight(&self, j: usize) -> T {
        self.first_weight * self.ratio.powi((j - 1) as i32)
    }

    fn sup_factor(&self) -> T {
        match &self.kind {
            TailKind::Constant => T::one(),
            TailKind::ClampedIdentity { cap, .. } => *cap,
        }
    }

    fn eval(&self, j: usize, s: T) -> T {
        let w = self.weight(j);
        match &self.kind {
            TailKind::Constant => w,
            TailKind::ClampedIdentity { floor, cap } => w * clamp(s, *floor, *cap),
        }
    }

    fn lipschitz_factor(&self) -> T {
        match &self.kind {
            TailKind::Constant => T::zero(),
            TailKind::ClampedIdentity { .. } => T::one(),
        }
    }

    fn oscillation_factor(&self) -> T {
        match &self.kind {
            TailKind::Constant => T::zero(),
            TailKind::ClampedIdentity { floor, cap } => *cap - *floor,
        }
    }
}

/// An additive renewal rate with declared global bounds.
#[derive(Clone, Debug)]
pub struct RateSpec<T: Scalar> {
    components: Vec<RateComponent<T>>,
    tail: Option<GeometricTail<T>>,
    /// Components past the declared list are identically zero, making the
    /// spec valid at every number of times.
    zero_padded: bool,
    a_minus: T,
    a_plus: T,
}

const BOUND_TOL: f64 = 1e-12;
const VALIDATION_POINTS: usize = 10_000;
const VALIDATION_SEED: u64 = 0x52454e57;

impl<T: Scalar> RateSpec<T> {
    /// General constructor; samples admissible points and rejects declared
    /// bounds the evaluations violate (allowing the tail norm slack that
    /// truncated evaluation of an infinite family necessarily has).
    pub fn new(
        components: Vec<RateComponent<T>>,
        tail: Option<GeometricTail<T>>,
        a_minus: T,
        a_plus: T,
    ) -> Result<Self, ModelError> {
        if components.is_empty() && tail.is_none() {
            return Err(ModelError::InvalidComponent(
                "rate needs at least one component".into(),
            ));
        }
        if !(a_minus > T::zero()) || !(a_plus >= a_minus) || !a_plus.is_finite() {
            return Err(ModelError::BoundsViolated(format!(
                "need 0 < a_minus <= a_plus < inf, got [{a_minus}, {a_plus}]"
            )));
        }
        if let Some(t) = &tail {
            t.validate()?;
        }
        let spec = Self {
            components,
            tail,
            zero_padded: false,
            a_minus,
            a_plus,
        };
        spec.validate_by_sampling()?;
        Ok(spec)
    }

    /// p ≡ value at every number of times: φ_1 ≡ value and every later
    /// component identically zero.
    pub fn constant(value: T) -> Result<Self, ModelError> {
        let mut spec = Self::new(
            vec![RateComponent::constant(value)?],
            None,
            value,
            value,
        )?;
        spec.zero_padded = true;
        Ok(spec)
    }

    /// Finitely many constant components φ_i ≡ values[i−1].
    pub fn constants(values: &[T]) -> Result<Self, ModelError> {
        let components = values
            .iter()
            .map(|v| RateComponent::constant(*v))
            .collect::<Result<Vec<_>, _>>()?;
        let a_minus = values
            .first()
            .copied()
            .ok_or_else(|| ModelError::InvalidComponent("empty component list".into()))?;
        let a_plus = values.iter().fold(T::zero(), |s, v| s + *v);
        Self::new(components, None, a_minus, a_plus)
    }

    /// Infinite family of constants φ_i ≡ first · ratio^{i−1}.
    pub fn geometric(first: T, ratio: T) -> Result<Self, ModelError> {
        let tail = GeometricTail {
            first_weight: first,
            ratio,
            kind: TailKind::Constant,
        };
        tail.validate()?;
        let a_plus = first / (T::one() - ratio);
        Self::new(Vec::new(), Some(tail), first, a_plus)
    }

    /// Infinite clamped-identity family
    /// φ_i(s_i) = ((floor ∨ s_i) ∧ cap_ratio·floor) / (1+beta)^i.
    ///
    /// The full rate then satisfies floor/beta ≤ p ≤ cap_ratio·floor/beta.
    pub fn clamped_identity(floor: T, cap_ratio: T, beta: T) -> Result<Self, ModelError> {
        if !(cap_ratio >= T::one()) {
            return Err(ModelError::Argument("cap_ratio must be >= 1".into()));
        }
        if !(beta > T::zero()) {
            return Err(ModelError::Argument("beta must be positive".into()));
        }
        let w = T::one() / (T::one() + beta);
        let tail = GeometricTail {
            first_weight: w,
            ratio: w,
            kind: TailKind::ClampedIdentity {
                floor,
                cap: cap_ratio * floor,
            },
        };
        tail.validate()?;
        let a_minus = floor / beta;
        let a_plus = cap_ratio * floor / beta;
        Self::new(Vec::new(), Some(tail), a_minus, a_plus)
    }

    pub fn a_minus(&self) -> T {
        self.a_minus
    }

    pub fn a_plus(&self) -> T {
        self.a_plus
    }

    /// Largest number of times the rate supports.
    pub fn max_times(&self) -> Times {
        if self.tail.is_some() || self.zero_padded {
            Times::Infinite
        } else {
            Times::Finite(self.components.len())
        }
    }

    fn prefix_len(&self) -> usize {
        self.components.len()
    }

    /// Sup norm ‖φ_i‖_∞ of the i-th component (1-based).
    pub fn sup_norm_at(&self, i: usize) -> Result<T, ModelError> {
        assert!(i >= 1, "components are 1-indexed");
        if i <= self.prefix_len() {
            Ok(self.components[i - 1].sup_norm())
        } else if let Some(tail) = &self.tail {
            Ok(tail.weight(i - self.prefix_len()) * tail.sup_factor())
        } else if self.zero_padded {
            Ok(T::zero())
        } else {
            Err(ModelError::TimesOutOfRange {
                max: self.prefix_len(),
                requested: i,
            })
        }
    }

    fn lipschitz_at(&self, i: usize) -> Result<T, ModelError> {
        if i <= self.prefix_len() {
            self.components[i - 1].lipschitz().ok_or_else(|| {
                ModelError::Unsupported(format!("component {i} has no declared Lipschitz bound"))
            })
        } else if let Some(tail) = &self.tail {
            Ok(tail.weight(i - self.prefix_len()) * tail.lipschitz_factor())
        } else if self.zero_padded {
            Ok(T::zero())
        } else {
            Err(ModelError::TimesOutOfRange {
                max: self.prefix_len(),
                requested: i,
            })
        }
    }

    fn oscillation_at(&self, i: usize) -> Result<T, ModelError> {
        if i <= self.prefix_len() {
            self.components[i - 1].oscillation().ok_or_else(|| {
                ModelError::Unsupported(format!("component {i} has no declared oscillation"))
            })
        } else if let Some(tail) = &self.tail {
            Ok(tail.weight(i - self.prefix_len()) * tail.oscillation_factor())
        } else if self.zero_padded {
            Ok(T::zero())
        } else {
            Err(ModelError::TimesOutOfRange {
                max: self.prefix_len(),
                requested: i,
            })
        }
    }

    /// Evaluate the truncated rate p_N on ages (s_1 ≤ … ≤ s_N).
    pub fn eval_rate(&self, ages: &[T]) -> Result<T, ModelError> {
        if ages.is_empty() {
            return Err(ModelError::Argument("ages must be nonempty".into()));
        }
        if let Times::Finite(max) = self.max_times() {
            if ages.len() > max {
                return Err(ModelError::TimesOutOfRange {
                    max,
                    requested: ages.len(),
                });
            }
        }
        let mut prev = T::zero();
        for &s in ages {
            if !(s >= prev) || !s.is_finite() {
                return Err(ModelError::InadmissibleAges(
                    ages.iter().map(|x| x.to_f64_lossy()).collect(),
                ));
            }
            prev = s;
        }
        Ok(self.eval_rate_unchecked(ages))
    }

    /// `eval_rate` without admissibility checks, for hot loops that
    /// construct ages by valid operations.
    pub fn eval_rate_unchecked(&self, ages: &[T]) -> T {
        let n = ages.len();
        let p = self.prefix_len();
        let mut total = T::zero();
        for i in 1..=p.min(n) {
            total += self.components[i - 1].eval(&ages[..i]);
        }
        if let Some(tail) = &self.tail {
            for i in (p + 1)..=n {
                total += tail.eval(i - p, ages[i - 1]);
            }
        }
        total
    }

    /// Sum of the tail components only: Σ_{i>k, i≤N} φ_i at the given ages.
    pub(crate) fn eval_tail_unchecked(&self, ages: &[T], k: usize) -> T {
        let n = ages.len();
        let p = self.prefix_len();
        let mut total = T::zero();
        for i in (k + 1)..=p.min(n) {
            total += self.components[i - 1].eval(&ages[..i]);
        }
        if let Some(tail) = &self.tail {
            for i in (p.max(k) + 1)..=n {
                total += tail.eval(i - p, ages[i - 1]);
            }
        }
        total
    }

    /// Tail norm ε_{K,N} = Σ_{i=K+1}^{N} ‖φ_i‖_∞ (N may be infinite).
    pub fn tail_norm(&self, k: usize, horizon: Times) -> Result<T, ModelError> {
        if let (Times::Finite(max), Times::Finite(n)) = (self.max_times(), horizon) {
            if n > max {
                return Err(ModelError::TimesOutOfRange {
                    max,
                    requested: n,
                });
            }
        }
        if let Times::Finite(n) = horizon {
            if k > n {
                return Err(ModelError::IndexOutOfRange { k, n });
            }
        }
        let p = self.prefix_len();
        let mut total = T::zero();
        let prefix_end = match horizon {
            Times::Finite(n) => p.min(n),
            Times::Infinite => p,
        };
        for i in (k + 1)..=prefix_end {
            total += self.components[i - 1].sup_norm();
        }
        if let Some(tail) = &self.tail {
            // Tail components run over offsets j = i − p ≥ 1 with i > k.
            let j_start = k.saturating_sub(p) + 1;
            let factor = tail.sup_factor();
            match horizon {
                Times::Infinite => {
                    total += tail.weight(j_start) * factor / (T::one() - tail.ratio);
                }
                Times::Finite(n) if n > p => {
                    let j_end = n - p;
                    if j_end >= j_start {
                        let count = (j_end - j_start + 1) as i32;
                        let head = tail.weight(j_start) * factor;
                        total += head * (T::one() - tail.ratio.powi(count))
                            / (T::one() - tail.ratio);
                    }
                }
                Times::Finite(_) => {}
            }
        }
        Ok(total)
    }

    fn validate_by_sampling(&self) -> Result<(), ModelError> {
        // Σ ‖φ_i‖ over the whole family must not exceed the declared a_plus.
        let sup_sum = self.tail_norm(0, Times::Infinite)?;
        let tol = T::from_f64_lossy(BOUND_TOL);
        if sup_sum > self.a_plus + tol {
            return Err(ModelError::BoundsViolated(format!(
                "sum of component sup norms {sup_sum} exceeds a_plus {}",
                self.a_plus
            )));
        }
        let dims: Vec<usize> = match self.max_times() {
            Times::Finite(p) => {
                let mut d = vec![1, p.div_ceil(2), p];
                d.dedup();
                d
            }
            Times::Infinite => vec![1, 2, 4, 8],
        };
        let per_dim = VALIDATION_POINTS / dims.len().max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(VALIDATION_SEED);
        let scales = [0.1, 1.0, 10.0];
        let mut ages: Vec<T> = Vec::new();
        for (di, &d) in dims.iter().enumerate() {
            // Truncated evaluation may undershoot a_minus by the tail norm.
            let lower = self.a_minus - self.tail_norm(d, Times::Infinite)? - tol;
            let upper = self.a_plus + tol;
            for pt in 0..per_dim {
                ages.clear();
                let scale = scales[(pt + di) % scales.len()];
                let mut s = 0.0f64;
                for _ in 0..d {
                    let gap = if rng.random::<f64>() < 0.1 {
                        0.0
                    } else {
                        -scale * (1.0 - rng.random::<f64>()).ln()
                    };
                    s += gap;
                    ages.push(T::from_f64_lossy(s));
                }
                let p = self.eval_rate_unchecked(&ages);
                if p < lower || p > upper {
                    return Err(ModelError::BoundsViolated(format!(
                        "sampled rate {p} outside [{lower}, {upper}] at {d} times"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Weighted Lipschitz and fluctuation report for a cost with weights
/// (1+beta)^{-i} and truncation level a.
#[derive(Clone, Copy, Debug)]
pub struct LipschitzReport<T: Scalar> {
    pub beta: T,
    pub a: T,
    /// L(beta) = sup_i (1+beta)^i Lip(φ_i).
    pub weighted_lipschitz: T,
    /// F(beta) = sup_i (1+beta)^i osc(φ_i).
    pub weighted_fluctuation: T,
    /// delta = max(F/a, L); the rate is delta-Lipschitz for the cost.
    pub delta: T,
    /// Contraction exponent beta·a_minus/(1+beta) − a·delta/beta.
    pub gamma: T,
    /// Admissibility threshold a_minus·beta²/(1+beta).
    pub threshold: T,
    pub admissible: bool,
}

impl<T: Scalar> LipschitzReport<T> {
    /// Human-readable list of violated admissibility inequalities.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.weighted_fluctuation < self.threshold) {
            v.push(format!(
                "F(beta) = {} >= a_minus*beta^2/(1+beta) = {}",
                self.weighted_fluctuation, self.threshold
            ));
        }
        if !(self.a * self.weighted_lipschitz < self.threshold) {
            v.push(format!(
                "a*L(beta) = {} >= a_minus*beta^2/(1+beta) = {}",
                self.a * self.weighted_lipschitz,
                self.threshold
            ));
        }
        v
    }
}

/// Sup of the geometric sequence head·q^j over j = 0..count (count may be
/// infinite). Returns None when the sup is unbounded.
fn geometric_sup<T: Scalar>(head: T, q: T, count: Times) -> Option<T> {
    if head == T::zero() {
        return Some(T::zero());
    }
    let eps = T::from_f64_lossy(1e-14);
    if (q - T::one()).abs() <= eps || q < T::one() {
        Some(head)
    } else {
        match count {
            Times::Finite(j_max) => Some(head * q.powi(j_max as i32)),
            Times::Infinite => None,
        }
    }
}

/// Weighted Lipschitz/fluctuation constants of the truncated rate, the
/// induced delta, and the contraction exponent gamma.
pub fn lipschitz_params<T: Scalar>(
    spec: &RateSpec<T>,
    beta: T,
    a: T,
    horizon: Times,
) -> Result<LipschitzReport<T>, ModelError> {
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(ModelError::Argument("beta must be positive".into()));
    }
    if !(a > T::zero()) || !a.is_finite() {
        return Err(ModelError::Argument("a must be positive".into()));
    }
    if let (Times::Finite(max), Times::Finite(n)) = (spec.max_times(), horizon) {
        if n > max {
            return Err(ModelError::TimesOutOfRange {
                max,
                requested: n,
            });
        }
    }
    let one_plus = T::one() + beta;
    let prefix_end = match horizon {
        Times::Finite(n) => spec.prefix_len().min(n),
        Times::Infinite => spec.prefix_len(),
    };
    let mut l = T::zero();
    let mut f = T::zero();
    let mut weight = T::one();
    for i in 1..=prefix_end {
        weight = weight * one_plus;
        l = l.max(weight * spec.lipschitz_at(i)?);
        f = f.max(weight * spec.oscillation_at(i)?);
    }
    if let Some(tail) = &spec.tail {
        let p = spec.prefix_len();
        let tail_count = match horizon {
            Times::Finite(n) if n > p => Some(Times::Finite(n - p - 1)),
            Times::Finite(_) => None,
            Times::Infinite => Some(Times::Infinite),
        };
        if let Some(count) = tail_count {
            let w1 = one_plus.powi((p + 1) as i32) * tail.weight(1);
            let q = tail.ratio * one_plus;
            let head_l = w1 * tail.lipschitz_factor();
            let head_f = w1 * tail.oscillation_factor();
            let tail_l = geometric_sup(head_l, q, count).ok_or_else(|| {
                ModelError::Unsupported(
                    "weighted Lipschitz constant diverges along the tail".into(),
                )
            })?;
            let tail_f = geometric_sup(head_f, q, count).ok_or_else(|| {
                ModelError::Unsupported(
                    "weighted fluctuation diverges along the tail".into(),
                )
            })?;
            l = l.max(tail_l);
            f = f.max(tail_f);
        }
    }
    let delta = (f / a).max(l);
    let gamma = beta * spec.a_minus() / one_plus - a * delta / beta;
    let threshold = spec.a_minus() * beta * beta / one_plus;
    let admissible = f < threshold && a * l < threshold;
    Ok(LipschitzReport {
        beta,
        a,
        weighted_lipschitz: l,
        weighted_fluctuation: f,
        delta,
        gamma,
        threshold,
        admissible,
    })
}

/// One row of the uniform-limit diagnostic.
#[derive(Clone, Copy, Debug)]
pub struct UniformLimitPoint<T: Scalar> {
    pub n: usize,
    /// Tail norm ε_N past the first N components.
    pub eps: T,
    /// r_N = ε_N · N · (a_plus/a_minus)^N; the uniform-in-N limit
    /// condition holds iff r_N → 0.
    pub r: T,
}

/// Evaluate r_N = ε_N · N · (a_plus/a_minus)^N over the requested N.
pub fn uniform_limit_diagnostic<T: Scalar>(
    spec: &RateSpec<T>,
    n_list: &[usize],
) -> Result<Vec<UniformLimitPoint<T>>, ModelError> {
    let ratio = spec.a_plus() / spec.a_minus();
    n_list
        .iter()
        .map(|&n| {
            if n == 0 {
                return Err(ModelError::Argument("N must be >= 1".into()));
            }
            let eps = match spec.max_times() {
                Times::Finite(max) if n >= max => T::zero(),
                _ => spec.tail_norm(n, Times::Infinite)?,
            };
            let r = eps * T::from_usize_lossy(n) * ratio.powi(n as i32);
            Ok(UniformLimitPoint { n, eps, r })
        })
        .collect()
}
