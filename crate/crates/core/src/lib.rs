//! Energy-efficiency maximization for uplink NOMA-enabled bistatic
//! backscatter networks.
//!
//! An RF source powers `K` batteryless backscatter nodes (BNs) that alternate
//! between a sleep phase (harvest only) and a shared active phase (harvest
//! part of the carrier, reflect the rest towards the receiver, which separates
//! the users by successive interference cancellation). The solver jointly
//! picks the source power, the sleep/active split and the per-BN reflection
//! coefficients that maximize throughput per joule.
//!
//! Module map:
//!
//! * [`model`] - domain types and direct evaluation of rate, energy, EE and
//!   constraint satisfaction for any candidate allocation.
//! * [`channel`] - seeded Rayleigh-fading realizations with path loss and SIC
//!   ordering.
//! * [`optimizer`] - the Dinkelbach / alternating-optimization solver with its
//!   closed-form harvest-on-transmit and harvest-then-transmit branches.
//! * [`baselines`] - fixed-power, no-sleep and TDMA comparison schemes.
//! * [`oracle`] - brute-force grid search used to certify the solver.
//! * [`harness`] - Monte Carlo sweeps, config parsing and CSV/JSON output.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod harness;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod search;

mod error;

pub use error::{Error, Result};

pub use baselines::BaselineKind;
pub use channel::{default_geometry, sample_realization, Geometry, PathLoss, SeedSpec};
pub use model::{Allocation, ChannelRealization, Evaluation, SystemParams};
pub use optimizer::{dinkelbach_solve, Mode, SolveResult, SolverConfig};
