//! Monte Carlo comparison of multi-photon (quantum lithography) detection with
//! optical-centroid detection of N00N-state interference fringes.
//!
//! - [`state`]: densities and exact event sampling for the N-photon state.
//! - [`detector`]: pixel arrays, scanned fibers and the detection protocols.
//! - [`simulate`]: parallel, reproducible Monte Carlo runs.
//! - [`combinatorics`]: occupancy counts and efficiency ratios.
//! - [`fit`]: Gaussian-windowed fringe fitting and run-to-run ratios.
//! - [`replication`]: the laboratory presets and the full comparison.
//! - [`io`]: config parsing, CSV/JSON output and run manifests.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod combinatorics;
pub mod detector;
pub mod error;
pub mod fit;
pub mod histogram;
pub mod io;
pub mod quadrature;
pub mod replication;
pub mod rng;
pub mod simulate;
pub mod state;
pub mod stats;

pub use detector::{DetectionRecord, DetectionScheme, DetectorArray, FiberPair, RejectionReason, ScannedAperture};
pub use error::{Error, Result};
pub use fit::{fit_fringe, FitOptions, FringeFit};
pub use histogram::Histogram;
pub use simulate::{simulate_run, Execution, RunStats};
pub use state::{NoonStateSpec, PhotonArrivalEvent};
