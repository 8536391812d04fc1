//! Solvers and verification tools for N-times renewal equations on the
//! ordered age simplex.
//!
//! The state of the underlying process is a vector of ages since the last N
//! renewal events, ordered as 0 ≤ s_1 ≤ … ≤ s_N. Everything here works in
//! gap coordinates u_1 = s_1, u_i = s_i − s_{i−1}, where transport acts on
//! u_1 alone and a renewal is the index shift (u_1, …, u_N) ↦ (0, u_1, …,
//! u_{N−1}).
//!
//! * [`model`]: additive renewal rates p = Σ_i φ_i and their tail norms,
//!   Lipschitz/fluctuation reports, and the uniform-limit diagnostic.
//! * [`grid`]: truncated gap-coordinate grids, density fields, marginals,
//!   weighted moments, and coupling terms.
//! * [`solver`]: conservative transport/decay/reinjection evolution,
//!   steady states, boundary flux, inflated-boundary domination profiles,
//!   and the pointwise lower-bound check.
//! * [`doeblin`]: minorization constants, recommended cycle lengths,
//!   contraction certification, and uniform-in-time hierarchy bounds.
//! * [`particles`]: thinning-based jump process ensembles, coupled pairs
//!   driven by common proposals, and empirical marginals.
//! * [`transport`]: truncated weighted costs, exact discrete
//!   Monge-Kantorovich distances, and the coupled contraction experiment.
//! * [`io`]: binary field/ensemble dumps and CSV formatting.
//!
//! All numeric code is generic over [`scalar::Scalar`]; the `*64` aliases
//! below pin the default `f64` instantiation.

pub mod doeblin;
pub mod grid;
pub mod io;
pub mod model;
pub mod particles;
pub mod scalar;
pub mod solver;
pub mod transport;

mod flow;

pub use scalar::Scalar;

/// Default scalar type used by the CLI and the acceptance suite.
pub type Real = f64;

pub type RateSpec64 = model::RateSpec<f64>;
pub type LipschitzReport64 = model::LipschitzReport<f64>;
pub type GapGrid64 = grid::GapGrid<f64>;
pub type DensityField64 = grid::DensityField<f64>;
pub type DoeblinConstants64 = doeblin::DoeblinConstants<f64>;
pub type CostParams64 = transport::CostParams<f64>;
pub type Ensemble64 = particles::Ensemble<f64>;
