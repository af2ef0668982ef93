//! Parameter sweeps and block profiles emitted as long-format rows
//! `(axis_value, seed, scheme, metric, value)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Dim, ExperimentConfig};
use super::{run_block, BlockResult, ChargingLedger, Mode, SolverSettings};
use crate::baselines::{
    binary_offloading, equal_k_charging, fixed_power_offloading, isotropic_charging, time_usage_percent,
};
use crate::channel::{channel_seed, generate_channels, generate_layout, realize, ChannelRealization};
use crate::charge::{solve_pwc, ChargeSolution};
use crate::error::{ConfigError, SolverError};
use crate::model::{SystemParams, UserRequest};
use crate::offload::{outer_descent, OffloadSolution};

/// Task size of the joint scenarios in the energy and network-size sweeps.
const JOINT_DATA: f64 = 70e3;
const SMALL_DATA: f64 = 30e3;
const RELAXED_LATENCY: f64 = 40e-3;
/// Task size of the power-control comparison.
const POWER_CONTROL_DATA: f64 = 40e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    /// Charging schemes against users per cell.
    Scheme,
    /// Partial against binary offloading over the task size.
    Data,
    /// Partial against binary offloading over the latency budget.
    Latency,
    /// Received against requested energy in three joint scenarios.
    Energy,
    /// Received energy against the total number of users.
    NetworkSize,
    /// Charging-only harvest against the charging time.
    ChargingTime,
    /// Optimized against fixed transmit powers over the total number of users.
    PowerControl,
}

impl Axis {
    pub const ALL: [Axis; 7] = [
        Axis::Scheme,
        Axis::Data,
        Axis::Latency,
        Axis::Energy,
        Axis::NetworkSize,
        Axis::ChargingTime,
        Axis::PowerControl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Scheme => "scheme",
            Axis::Data => "data",
            Axis::Latency => "latency",
            Axis::Energy => "energy",
            Axis::NetworkSize => "network-size",
            Axis::ChargingTime => "charging-time",
            Axis::PowerControl => "power-control",
        }
    }

    pub fn parse(s: &str) -> Option<Axis> {
        Axis::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn dim(self) -> Dim {
        match self {
            Axis::Scheme | Axis::NetworkSize | Axis::PowerControl => Dim::Count,
            Axis::Data => Dim::Bits,
            Axis::Latency | Axis::ChargingTime => Dim::Time,
            Axis::Energy => Dim::Energy,
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            Axis::Scheme => vec![2.0, 4.0, 6.0, 8.0, 10.0],
            Axis::Data => vec![1e3, 10e3, 20e3, 30e3, 40e3, 50e3, 60e3],
            Axis::Latency => vec![20e-3, 30e-3, 40e-3],
            Axis::Energy => vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            Axis::NetworkSize | Axis::PowerControl => vec![4.0, 8.0, 16.0, 24.0, 32.0, 40.0],
            Axis::ChargingTime => vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
        }
    }

    /// Channel realizations per point, or spatial realizations for the
    /// network-size axes.
    pub fn default_realizations(self) -> usize {
        match self {
            Axis::NetworkSize | Axis::PowerControl => 200,
            _ => 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub axis_value: f64,
    pub seed: u64,
    pub scheme: String,
    pub metric: String,
    pub value: f64,
}

impl Row {
    fn new(axis_value: f64, seed: u64, scheme: &str, metric: &str, value: f64) -> Self {
        Self {
            axis_value,
            seed,
            scheme: scheme.to_string(),
            metric: metric.to_string(),
            value,
        }
    }
}

pub const CSV_HEADER: &str = "axis_value,seed,scheme,metric,value";

/// RFC-4180 text with a header line. Scheme and metric names never need
/// quoting.
pub fn rows_to_csv(rows: &[Row]) -> String {
    let mut out = String::with_capacity(48 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push_str("\r\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\r\n",
            r.axis_value, r.seed, r.scheme, r.metric, r.value
        ));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChargeScheme {
    Optimal,
    EqualK,
    Isotropic,
}

impl ChargeScheme {
    pub fn name(self) -> &'static str {
        match self {
            ChargeScheme::Optimal => "optimal",
            ChargeScheme::EqualK => "equal-k",
            ChargeScheme::Isotropic => "isotropic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OffloadScheme {
    Partial,
    Binary,
    FixedPower,
}

impl OffloadScheme {
    pub fn name(self) -> &'static str {
        match self {
            OffloadScheme::Partial => "partial",
            OffloadScheme::Binary => "binary",
            OffloadScheme::FixedPower => "fixed-power",
        }
    }
}

pub fn charge_cell(
    scheme: ChargeScheme,
    chans: &ChannelRealization,
    cell: usize,
    energy: &[f64],
    t_charge: f64,
    params: &SystemParams,
    settings: &SolverSettings,
) -> ChargeSolution {
    let h = chans.cell_channels(cell);
    let reqs: Vec<UserRequest> = energy.iter().map(|&e| UserRequest::new(0.0, e)).collect();
    let zero = || ChargeSolution::zero(params.n_antennas, h.len(), 0.0);
    if t_charge <= 0.0 {
        return zero();
    }
    let r = match scheme {
        ChargeScheme::Optimal => solve_pwc(&h, &reqs, t_charge, params, &settings.charge),
        ChargeScheme::EqualK => equal_k_charging(&h, &reqs, t_charge, params, settings.cap_scaling),
        ChargeScheme::Isotropic => Ok(isotropic_charging(&h, &reqs, t_charge, params, settings.cap_scaling)),
    };
    r.unwrap_or_else(|e| {
        log::warn!("charging solve failed in cell {cell}: {e}");
        zero()
    })
}

pub fn offload_cell(
    scheme: OffloadScheme,
    chans: &ChannelRealization,
    cell: usize,
    data: &[f64],
    params: &SystemParams,
    settings: &SolverSettings,
) -> Result<OffloadSolution, SolverError> {
    let links = chans.cell_links(cell);
    let reqs: Vec<UserRequest> = data.iter().map(|&u| UserRequest::new(u, 0.0)).collect();
    match scheme {
        OffloadScheme::Partial => outer_descent(&links, &reqs, params, &settings.offload),
        OffloadScheme::Binary => binary_offloading(&links, &reqs, params, &settings.offload),
        OffloadScheme::FixedPower => fixed_power_offloading(&links, &reqs, params, &settings.offload),
    }
}

struct Context {
    base: SystemParams,
    data: f64,
    energy: f64,
    settings: SolverSettings,
}

#[derive(Default)]
struct OffloadTotals {
    weighted: f64,
    users: f64,
    mec: f64,
    time: f64,
    time_usage: f64,
    t_charge: f64,
    offloaded: f64,
    received: f64,
    feasible: usize,
    infeasible: usize,
}

/// Offloading in every cell followed by optimal charging in the time left.
fn offload_network(
    scheme: OffloadScheme,
    chans: &ChannelRealization,
    data: f64,
    energy: f64,
    params: &SystemParams,
    settings: &SolverSettings,
) -> OffloadTotals {
    let k = params.users_per_cell;
    let mut t = OffloadTotals::default();
    for cell in 0..params.n_cells {
        let t_charge = match offload_cell(scheme, chans, cell, &vec![data; k], params, settings) {
            Ok(sol) => {
                t.feasible += 1;
                t.weighted += sol.energy.weighted_total;
                t.users += sol.energy.users;
                t.mec += sol.energy.mec;
                t.time += sol.times.total();
                t.time_usage += time_usage_percent(&sol.times, params);
                t.offloaded += sol.partition.offloaded_fraction();
                sol.times.t_charge
            }
            Err(SolverError::Infeasible { best_effort, .. }) => {
                t.infeasible += 1;
                if let Some(b) = best_effort {
                    t.time_usage += time_usage_percent(&b.times, params);
                }
                0.0
            }
            Err(e) => {
                log::warn!("{} offloading failed in cell {cell}: {e}", scheme.name());
                t.infeasible += 1;
                0.0
            }
        };
        t.t_charge += t_charge;
        let rx = charge_cell(ChargeScheme::Optimal, chans, cell, &vec![energy; k], t_charge, params, settings);
        t.received += rx.total_received();
    }
    t
}

fn with_users(base: &SystemParams, k: usize) -> SystemParams {
    let mut p = base.clone();
    p.set_users_per_cell(k.max(1));
    p
}

fn with_latency(base: &SystemParams, t_d: f64) -> SystemParams {
    let mut p = base.clone();
    p.set_latency(t_d);
    p
}

fn network(params: &SystemParams, seed: u64) -> Result<ChannelRealization, String> {
    realize(params, seed).map(|(_, c)| c).map_err(|e| e.to_string())
}

fn evaluate(axis: Axis, x: f64, seed: u64, ctx: &Context) -> Vec<Row> {
    let mut rows = Vec::new();
    let mut push = |scheme: &str, metric: &str, value: f64| rows.push(Row::new(x, seed, scheme, metric, value));
    let s = &ctx.settings;
    match axis {
        Axis::Scheme => {
            let p = with_users(&ctx.base, x as usize);
            let Ok(chans) = network(&p, seed).map_err(|e| log::warn!("{e}")) else {
                push("all", "realization_failed", 1.0);
                return rows;
            };
            let k = p.users_per_cell;
            let mut t_c = Vec::with_capacity(p.n_cells);
            let mut infeasible = 0;
            for cell in 0..p.n_cells {
                match offload_cell(OffloadScheme::Partial, &chans, cell, &vec![ctx.data; k], &p, s) {
                    Ok(sol) => t_c.push(sol.times.t_charge),
                    Err(_) => {
                        infeasible += 1;
                        t_c.push(0.0);
                    }
                }
            }
            let requested = ctx.energy * (k * p.n_cells) as f64;
            for scheme in [ChargeScheme::Optimal, ChargeScheme::EqualK, ChargeScheme::Isotropic] {
                let (mut rx, mut tx, mut beams) = (0.0, 0.0, 0.0);
                for (cell, &tc) in t_c.iter().enumerate() {
                    let sol = charge_cell(scheme, &chans, cell, &vec![ctx.energy; k], tc, &p, s);
                    rx += sol.total_received();
                    tx += sol.charging_energy;
                    beams += sol.active_beams as f64;
                }
                push(scheme.name(), "received_energy", rx);
                push(scheme.name(), "transmitted_energy", tx);
                push(scheme.name(), "efficiency", if requested > 0.0 { 100.0 * rx / requested } else { f64::NAN });
                push(scheme.name(), "active_beams", beams / p.n_cells as f64);
            }
            if infeasible > 0 {
                push("partial", "infeasible_cells", infeasible as f64);
            }
        }
        Axis::Data | Axis::Latency => {
            let (p, data) = match axis {
                Axis::Data => (ctx.base.clone(), x),
                _ => (with_latency(&ctx.base, x), ctx.data),
            };
            let Ok(chans) = network(&p, seed) else {
                push("all", "realization_failed", 1.0);
                return rows;
            };
            for scheme in [OffloadScheme::Partial, OffloadScheme::Binary] {
                let t = offload_network(scheme, &chans, data, ctx.energy, &p, s);
                let n = t.feasible.max(1) as f64;
                push(scheme.name(), "energy_weighted", t.weighted);
                push(scheme.name(), "energy_users", t.users);
                push(scheme.name(), "energy_mec", t.mec);
                push(scheme.name(), "time_offload", t.time / n);
                push(scheme.name(), "t_charge", t.t_charge / p.n_cells as f64);
                push(scheme.name(), "offloaded_fraction", t.offloaded / n);
                push(scheme.name(), "received_energy", t.received);
                if t.infeasible > 0 {
                    push(scheme.name(), "infeasible_cells", t.infeasible as f64);
                }
            }
        }
        Axis::ChargingTime => {
            let p = ctx.base.clone();
            let Ok(chans) = network(&p, seed) else {
                push("all", "realization_failed", 1.0);
                return rows;
            };
            let k = p.users_per_cell;
            let mut total = 0.0;
            let mut first = 0.0;
            for cell in 0..p.n_cells {
                let sol = charge_cell(ChargeScheme::Optimal, &chans, cell, &vec![ctx.energy; k], x, &p, s);
                if cell == 0 {
                    first = sol.received[0];
                }
                total += sol.total_received();
            }
            push("optimal", "requested_energy_user0", ctx.energy);
            push("optimal", "received_energy_user0", first);
            push("optimal", "received_energy", total);
        }
        Axis::Energy => {
            let scenarios = [
                ("u70k-td20", JOINT_DATA, ctx.base.latency),
                ("u70k-td40", JOINT_DATA, RELAXED_LATENCY),
                ("u30k-td20", SMALL_DATA, ctx.base.latency),
            ];
            for (name, data, t_d) in scenarios {
                let p = with_latency(&ctx.base, t_d);
                let Ok(chans) = network(&p, seed) else {
                    push(name, "realization_failed", 1.0);
                    continue;
                };
                let t = offload_network(OffloadScheme::Partial, &chans, data, x, &p, s);
                let users = (p.users_per_cell * p.n_cells) as f64;
                push(name, "requested_energy", x);
                push(name, "received_energy_per_user", t.received / users);
                push(name, "efficiency", if x > 0.0 { 100.0 * t.received / (x * users) } else { f64::NAN });
                if t.infeasible > 0 {
                    push(name, "infeasible_cells", t.infeasible as f64);
                }
            }
        }
        Axis::NetworkSize => {
            let k = (x / ctx.base.n_cells as f64).round().max(1.0) as usize;
            let scenarios = [
                ("charging-only", ctx.base.latency, None),
                ("charging-relaxed-latency", RELAXED_LATENCY, None),
                ("joint", ctx.base.latency, Some(JOINT_DATA)),
            ];
            for (name, t_d, data) in scenarios {
                let p = with_latency(&with_users(&ctx.base, k), t_d);
                let Ok(chans) = network(&p, seed) else {
                    push(name, "realization_failed", 1.0);
                    continue;
                };
                let received = match data {
                    Some(u) => {
                        let t = offload_network(OffloadScheme::Partial, &chans, u, ctx.energy, &p, s);
                        if t.infeasible > 0 {
                            push(name, "infeasible_cells", t.infeasible as f64);
                        }
                        t.received
                    }
                    None => (0..p.n_cells)
                        .map(|c| {
                            charge_cell(ChargeScheme::Optimal, &chans, c, &vec![ctx.energy; k], p.latency, &p, s)
                                .total_received()
                        })
                        .sum(),
                };
                push(name, "received_energy", received);
            }
        }
        Axis::PowerControl => {
            let k = (x / ctx.base.n_cells as f64).round().max(1.0) as usize;
            let p = with_users(&ctx.base, k);
            let Ok(chans) = network(&p, seed) else {
                push("all", "realization_failed", 1.0);
                return rows;
            };
            for (name, scheme) in [("power-control", OffloadScheme::Partial), ("fixed-power", OffloadScheme::FixedPower)] {
                let t = offload_network(scheme, &chans, POWER_CONTROL_DATA, ctx.energy, &p, s);
                push(name, "energy_users", t.users);
                push(name, "energy_mec", t.mec);
                push(name, "energy_weighted", t.weighted);
                push(name, "time_usage_percent", t.time_usage / p.n_cells as f64);
                push(name, "received_energy", t.received);
                if t.infeasible > 0 {
                    push(name, "infeasible_cells", t.infeasible as f64);
                }
            }
        }
    }
    rows
}

/// Runs every axis value against every realization seed. Rows are ordered by
/// axis value, then seed, regardless of how the work was scheduled.
pub fn run_sweep(cfg: &ExperimentConfig, axis: Axis) -> Result<Vec<Row>, ConfigError> {
    let ctx = Context {
        base: cfg.system_params()?,
        data: cfg.data_bits()?,
        energy: cfg.energy_request()?,
        settings: cfg.solver.clone(),
    };
    let values = cfg.sweep_values(axis)?;
    let n = cfg.realizations_or(axis.default_realizations());
    let jobs: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&v| (0..n as u64).map(move |r| (v, cfg.seed.wrapping_add(r))))
        .collect();
    let rows: Vec<Vec<Row>> = jobs
        .par_iter()
        .map(|&(v, seed)| evaluate(axis, v, seed, &ctx))
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Block-by-block results of a multi-block run over the whole network.
#[derive(Clone, Debug)]
pub struct ProfileRun {
    pub schedule: Vec<Mode>,
    /// `blocks[q][cell]`.
    pub blocks: Vec<Vec<BlockResult>>,
    /// One ledger per cell.
    pub ledgers: Vec<ChargingLedger>,
    pub rows: Vec<Row>,
}

/// Runs the configured mode schedule. Users stay put; fading is redrawn in
/// every block.
pub fn run_profile(cfg: &ExperimentConfig) -> Result<ProfileRun, ConfigError> {
    let params = cfg.system_params()?;
    let k = params.users_per_cell;
    let requests = cfg.requests(k)?;
    let schedule = cfg.schedule();
    let layout = generate_layout(&params, cfg.seed).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let mut ledgers = vec![ChargingLedger::new(k); params.n_cells];
    let mut blocks = Vec::with_capacity(schedule.len());
    let mut rows = Vec::new();
    let mut cumulative = 0.0;
    for (q, &mode) in schedule.iter().enumerate() {
        let chans = generate_channels(&layout, &params, channel_seed(cfg.seed.wrapping_add(q as u64)))
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let cells: Vec<BlockResult> = ledgers
            .iter_mut()
            .enumerate()
            .map(|(cell, ledger)| {
                run_block(
                    q,
                    mode,
                    &requests,
                    ledger,
                    &chans.cell_channels(cell),
                    &chans.cell_links(cell),
                    &params,
                    &cfg.solver,
                )
            })
            .collect();
        let received: f64 = cells.iter().map(BlockResult::received).sum();
        let outstanding: f64 = cells.iter().map(|b| b.outstanding.iter().sum::<f64>()).sum();
        cumulative += received;
        let x = q as f64;
        let name = mode.name();
        rows.push(Row::new(x, cfg.seed, name, "received_block", received));
        rows.push(Row::new(x, cfg.seed, name, "received_cumulative", cumulative));
        if mode.has_charging() && outstanding > 0.0 {
            rows.push(Row::new(x, cfg.seed, name, "efficiency", 100.0 * received / outstanding));
        }
        let t_c: f64 = cells.iter().map(BlockResult::t_charge).sum::<f64>() / cells.len() as f64;
        rows.push(Row::new(x, cfg.seed, name, "t_charge", t_c));
        let failed = cells.iter().filter(|b| b.offload_error.is_some()).count();
        if failed > 0 {
            rows.push(Row::new(x, cfg.seed, name, "infeasible_cells", failed as f64));
        }
        blocks.push(cells);
    }
    Ok(ProfileRun {
        schedule,
        blocks,
        ledgers,
        rows,
    })
}

/// Convergence traces of both solvers on one cell, as rows keyed by
/// iteration.
pub fn convergence_rows(
    offload: &OffloadSolution,
    charge: &ChargeSolution,
    seed: u64,
) -> Vec<Row> {
    let mut rows = Vec::new();
    for t in &offload.log.trace {
        let x = t.iter as f64;
        rows.push(Row::new(x, seed, "pco", "objective", t.objective));
        rows.push(Row::new(x, seed, "pco", "dual_residual", t.dual_residual));
        rows.push(Row::new(x, seed, "pco", "t1", t.t1));
        rows.push(Row::new(x, seed, "pco", "t3", t.t3));
        rows.push(Row::new(x, seed, "pco", "t_charge", t.t_charge));
    }
    for t in &charge.trace {
        let x = t.iter as f64;
        rows.push(Row::new(x, seed, "pwc", "dual_value", t.dual_value));
        rows.push(Row::new(x, seed, "pwc", "trace_w", t.trace_w));
        rows.push(Row::new(x, seed, "pwc", "max_cap_violation", t.max_cap_violation));
    }
    rows
}
