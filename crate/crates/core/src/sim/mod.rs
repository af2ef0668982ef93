//! Multi-block simulation: operating modes, the charging ledger, parameter
//! sweeps and the quick property suite.

pub mod config;
pub mod sweep;
pub mod validate;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::CapScaling;
use crate::charge::{solve_pwc, ChargeOptions, ChargeSolution};
use crate::model::{CVector, UserLink, UserRequest};
use crate::offload::{outer_descent, OffloadOptions, OffloadSolution};
use crate::SystemParams;

pub use config::{ExperimentConfig, Quantity, RequestSpec, ScheduleEntry, SweepSpec};
pub use sweep::{rows_to_csv, run_profile, run_sweep, Axis, ProfileRun, Row};
pub use validate::{run_validation, CheckOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    DataAndCharging,
    DataOnly,
    ChargingOnly,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::DataAndCharging => "data-and-charging",
            Mode::DataOnly => "data-only",
            Mode::ChargingOnly => "charging-only",
        }
    }

    pub fn has_data(self) -> bool {
        !matches!(self, Mode::ChargingOnly)
    }

    pub fn has_charging(self) -> bool {
        !matches!(self, Mode::DataOnly)
    }
}

/// Solver knobs shared by every experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub offload: OffloadOptions,
    pub charge: ChargeOptions,
    pub cap_scaling: CapScaling,
}

/// One user's energy account.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserAccount {
    pub requested: f64,
    pub received: f64,
    /// Energy credited in every block, including zeros.
    pub history: Vec<f64>,
}

impl UserAccount {
    pub fn outstanding(&self) -> f64 {
        (self.requested - self.received).max(0.0)
    }
}

/// Requested and received energy per user, carried across blocks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChargingLedger {
    pub users: Vec<UserAccount>,
}

impl ChargingLedger {
    pub fn new(k: usize) -> Self {
        Self {
            users: vec![UserAccount::default(); k],
        }
    }

    pub fn add_requests(&mut self, energy: &[f64]) {
        for (u, &e) in self.users.iter_mut().zip(energy) {
            u.requested += e.max(0.0);
        }
    }

    pub fn outstanding(&self) -> Vec<f64> {
        self.users.iter().map(UserAccount::outstanding).collect()
    }

    /// Credits one block's harvest. Amounts beyond the outstanding demand
    /// (solver round-off) are not credited.
    pub fn credit(&mut self, received: &[f64]) {
        for (u, &r) in self.users.iter_mut().zip(received) {
            let r = r.clamp(0.0, u.outstanding());
            u.received += r;
            u.history.push(r);
        }
    }

    /// A block in which nobody is charged.
    pub fn skip(&mut self) {
        for u in &mut self.users {
            u.history.push(0.0);
        }
    }

    pub fn total_received(&self) -> f64 {
        self.users.iter().map(|u| u.received).sum()
    }

    pub fn is_consistent(&self) -> bool {
        self.users.iter().all(|u| {
            let sum: f64 = u.history.iter().sum();
            u.received <= u.requested * (1.0 + 1e-12) + 1e-15
                && (sum - u.received).abs() <= 1e-12 * u.received.max(1e-300)
                && u.history.iter().all(|&h| h >= 0.0)
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockResult {
    pub block: usize,
    pub mode: Mode,
    pub offload: Option<OffloadSolution>,
    /// Why offloading failed, when it did.
    pub offload_error: Option<String>,
    pub charge: Option<ChargeSolution>,
    /// Outstanding demand per user when the block started.
    pub outstanding: Vec<f64>,
    /// Percent of the outstanding demand delivered, absent when nothing was
    /// outstanding.
    pub efficiency: Option<f64>,
    pub solve_seconds: f64,
}

impl BlockResult {
    pub fn received(&self) -> f64 {
        self.charge.as_ref().map_or(0.0, ChargeSolution::total_received)
    }

    pub fn t_charge(&self) -> f64 {
        self.charge.as_ref().map_or(0.0, |c| c.t_charge)
    }
}

/// `100 Σ received / Σ outstanding`, or `None` when nothing is outstanding.
pub fn charging_efficiency(received: &[f64], outstanding: &[f64]) -> Option<f64> {
    let den: f64 = outstanding.iter().sum();
    (den > 0.0).then(|| 100.0 * received.iter().sum::<f64>() / den)
}

/// Runs one block of one cell: offloading first (data modes), then charging
/// in whatever time is left against the ledger's outstanding demand.
#[allow(clippy::too_many_arguments)]
pub fn run_block(
    block: usize,
    mode: Mode,
    requests: &[UserRequest],
    ledger: &mut ChargingLedger,
    channels: &[CVector],
    links: &[UserLink],
    params: &SystemParams,
    settings: &SolverSettings,
) -> BlockResult {
    let clock = Instant::now();
    let k = requests.len();
    let (mut offload, mut offload_error) = (None, None);
    let mut t_charge = params.latency;
    if mode.has_data() {
        let data: Vec<UserRequest> = requests
            .iter()
            .map(|r| UserRequest::new(r.data_bits, 0.0))
            .collect();
        match outer_descent(links, &data, params, &settings.offload) {
            Ok(sol) => {
                t_charge = sol.times.t_charge;
                offload = Some(sol);
            }
            Err(e) => {
                t_charge = 0.0;
                offload_error = Some(e.to_string());
            }
        }
    }
    let mut charge = None;
    let mut outstanding = ledger.outstanding();
    let mut efficiency = None;
    if mode.has_charging() {
        let demand: Vec<f64> = requests.iter().map(|r| r.energy_req).collect();
        ledger.add_requests(&demand);
        outstanding = ledger.outstanding();
        let effective: Vec<UserRequest> = outstanding
            .iter()
            .map(|&e| UserRequest::new(0.0, e))
            .collect();
        let n = channels.first().map_or(params.n_antennas, |h| h.len());
        let sol = if t_charge > 0.0 {
            solve_pwc(channels, &effective, t_charge, params, &settings.charge)
                .unwrap_or_else(|e| {
                    log::warn!("block {block}: charging solve failed: {e}");
                    ChargeSolution::zero(n, k, 0.0)
                })
        } else {
            ChargeSolution::zero(n, k, 0.0)
        };
        ledger.credit(&sol.received);
        efficiency = charging_efficiency(&sol.received, &outstanding);
        charge = Some(sol);
    } else {
        ledger.skip();
    }
    BlockResult {
        block,
        mode,
        offload,
        offload_error,
        charge,
        outstanding,
        efficiency,
        solve_seconds: clock.elapsed().as_secs_f64(),
    }
}
