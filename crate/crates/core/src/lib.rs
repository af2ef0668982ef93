//! Joint computation offloading and wireless energy transfer for cell-free
//! style massive-MIMO access points with co-located edge servers.
//!
//! Each access point serves `K` users over one latency block: users split
//! their data between local processing and offloading, the AP computes and
//! returns the results, and the leftover time is spent charging users with
//! energy beams.

pub mod baselines;
pub mod channel;
pub mod charge;
pub mod error;
pub mod model;
pub mod numerics;
pub mod offload;
pub mod sim;

pub use channel::{channel_seed, generate_channels, generate_layout, realize, ChannelRealization, NetworkLayout};
pub use charge::{solve_pwc, ChargeOptions, ChargeSolution, RhoSign, WcDuals};
pub use error::{ConfigError, ModelError, NumericError, SolverError};
pub use model::{
    CMatrix, CVector, Complex64, DataPartition, Direction, EnergyBreakdown, Feasibility,
    SystemParams, TimeAllocation, UserLink, UserRequest,
};
pub use offload::{
    outer_descent, solve_fixed_partition, CoDuals, ConvergenceLog, OffloadOptions, OffloadSolution,
    StopReason,
};
