//! Desk-scale numerics for pseudoholomorphic curves.
//!
//! The crate collects the quantitative ingredients behind compactness of
//! pseudoholomorphic curves:
//!
//! * [`grid`], [`sample`], [`calculus`]: sampled maps on disks, annuli,
//!   cylinders and strips, discrete derivatives, energy and `L^p` norms;
//! * [`hyperbolic`]: collar geometry of curvature −1, pants graphs and
//!   plumbing coordinates;
//! * [`dbar`]: the Cauchy-Green transform, `∂̄_J` operators, the Neumann
//!   series solver and reflection across totally real boundaries;
//! * [`decay`]: Fourier modes on cylinders, three-annuli and three-strips
//!   inequalities, decay envelopes and the strip eigenproblem;
//! * [`bubble`]: patching covers, bubble-point detection, rescaling and
//!   subcase classification;
//! * [`io`]: the CSV + JSON sample format.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bubble;
pub mod calculus;
pub mod dbar;
pub mod decay;
pub mod error;
pub mod grid;
pub mod hyperbolic;
pub mod io;
pub mod sample;

pub use error::{Error, Result};
pub use grid::{Grid, GridKind, Region};
pub use sample::{MapSample, StructureField};

/// Library version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
