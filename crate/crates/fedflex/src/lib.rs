//! Federated aggregation of demand-side flexibility.
//!
//! A population of demand-side resources (DSRs) — EVs, storage, and other
//! loads with storage-like dynamics — each has a polytope of feasible power
//! profiles. Summing those polytopes exactly (a Minkowski sum) is
//! intractable, so the aggregate is inner-approximated: every DSR fits the
//! largest affine image of a shared template polytope (the *base set*)
//! inside its own feasible set, and the images sum in closed form.
//!
//! This crate implements the full pipeline:
//!
//! * [`flex`] — individual flexibility polytopes, fleet sampling, and
//!   small-scale Minkowski-sum oracles,
//! * [`containment`] — the per-DSR maximal-trace affine containment LP,
//! * [`projection`] — restoring a nonempty interior to a candidate base set,
//! * [`sensitivity`] — implicit differentiation of the two programs above
//!   through their KKT systems,
//! * [`volume`] — recursive estimation of base-set volume and its gradient,
//! * [`federated`] — the collaborative gradient ascent over the base set,
//!   where DSRs exchange only masked model updates,
//! * [`aggregation`] — building the aggregate model and dispatching targets
//!   back to individual resources,
//! * [`dispatch`] — peak-power and cost minimization over the aggregate set
//!   with centralized best-case benchmarks,
//! * [`harness`] — configuration, data ingestion, and experiment drivers
//!   behind the `fedflex` command-line tool.
//!
//! All dense linear algebra is `f64` on top of `ndarray`; factorizations go
//! through LAPACK. Problem sizes are desk scale (horizon `T` up to ~12).

pub mod aggregation;
pub mod containment;
pub mod dispatch;
mod error;
pub mod federated;
pub mod flex;
pub mod harness;
pub mod linalg;
pub mod projection;
pub mod sensitivity;
pub mod solver;
pub mod volume;

pub use error::{Error, Result};

/// Pins BLAS to one thread. Outer parallelism (trials, per-DSR solves) is
/// handled with rayon; nested BLAS threading on desk-scale matrices only
/// adds nondeterministic scheduling overhead.
pub fn init_threading() {
    // Must run before the first BLAS call to take effect.
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
}
