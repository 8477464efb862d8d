//! Longitudinal principal manifold estimation.
//!
//! Each time point's point cloud is summarized by weighted mixture centers,
//! parameterized, and fitted with a penalized thin-plate spline
//! `f_t: R^d -> R^D`. The spline coefficients of all time points are then
//! re-expressed on a shared knot grid and smoothed across time with a
//! weighted cubic smoothing spline, giving an embedding `F(t, r)` whose first
//! coordinate is literal time.
//!
//! Module map:
//!
//! * [`kernel`], [`spline`], [`cloud`]: radial kernels, spline models and the
//!   longitudinal data container shared by everything else.
//! * [`reduce`]: mixture-center reduction of a raw cloud.
//! * [`isomap`]: geodesic initial parameterization of the centers.
//! * [`pme`]: single time point principal manifold fits.
//! * [`lpme`]: the longitudinal pipeline, LOOCV tuning and volume estimation.
//! * [`augment`]: angular coordinate lifts for closed manifolds.
//! * [`sim`]: simulation cases, factorial design and truth scoring.

pub mod augment;
pub mod cloud;
pub mod error;
pub mod isomap;
pub mod kernel;
mod linalg;
pub mod lpme;
pub mod pme;
pub mod reduce;
pub mod sim;
pub mod spline;

pub use cloud::LongitudinalCloud;
pub use error::{Error, Result};
pub use kernel::{eta_kernel, poly_basis};
pub use spline::SplineModel;
