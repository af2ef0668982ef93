//! Scenario parameters, domain types and the closed-form energy/time model.
//!
//! All quantities are SI: watts, joules, seconds, hertz and (real-valued) bits.
//! Logarithmic inputs (dBm, dB) are converted once, when parameters are built.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub type Complex64 = Complex<f64>;
pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// Lower guard on transmission times; the transmit-energy expressions are
/// singular at `t = 0`.
pub const T_MIN: f64 = 1e-9;

/// Relative slack allowed by the feasibility predicate.
pub const LATENCY_RTOL: f64 = 1e-6;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1e3).log10()
}

/// Every fixed scalar of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub n_antennas: usize,
    pub users_per_cell: usize,
    pub n_cells: usize,
    pub bandwidth: f64,
    pub latency: f64,
    pub ap_power: f64,
    pub user_power_max: f64,
    pub cap_gap_ul: f64,
    pub cap_gap_dl: f64,
    /// Fraction of the coherence interval carrying data.
    pub data_fraction: f64,
    /// Result bits produced per offloaded bit.
    pub result_ratio: f64,
    /// Weight of MEC-side energy in the offloading objective.
    pub energy_weight: f64,
    pub user_cap: f64,
    pub user_cycles_per_bit: f64,
    pub mec_cap: f64,
    pub mec_cycles_per_bit: f64,
    pub user_freq: f64,
    pub mec_freq_per_user: f64,
    /// RF-to-DC conversion efficiency; one entry per user, or a single entry
    /// applied to every user.
    pub conv_eff: Vec<f64>,
    /// Coherence interval, in symbols.
    pub coherence_len: f64,
    pub noise_ul: f64,
    pub noise_dl: f64,
    pub pathloss_exp: f64,
    pub shadow_std_db: f64,
    pub area_side: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::paper_defaults()
    }
}

impl SystemParams {
    /// Reference scenario: 4 cells of 4 users, 100 antennas, 20 ms latency.
    ///
    /// The switched-capacitance constants (0.5 pF user, 5 pF MEC) are quoted for
    /// CPU frequencies in GHz; in SI with frequencies in Hz they become
    /// `0.5e-12 * 1e-18` and `5e-12 * 1e-18`.
    pub fn paper_defaults() -> Self {
        let bandwidth = 5e6;
        let latency = 20e-3;
        let k = 4;
        let mut p = Self {
            n_antennas: 100,
            users_per_cell: k,
            n_cells: 4,
            bandwidth,
            latency,
            ap_power: dbm_to_watts(46.0),
            user_power_max: dbm_to_watts(23.0),
            cap_gap_ul: 1.25,
            cap_gap_dl: 1.25,
            data_fraction: 1.0,
            result_ratio: 2.0,
            energy_weight: 1e-3,
            user_cap: 0.5e-12 * 1e-18,
            user_cycles_per_bit: 1000.0,
            mec_cap: 5e-12 * 1e-18,
            mec_cycles_per_bit: 500.0,
            user_freq: 1.8e9,
            mec_freq_per_user: 0.0,
            conv_eff: vec![0.5],
            coherence_len: bandwidth * latency,
            noise_ul: dbm_to_watts(-127.0),
            noise_dl: dbm_to_watts(-122.0),
            pathloss_exp: 2.2,
            shadow_std_db: 2.7,
            area_side: 20.0,
        };
        p.set_users_per_cell(k);
        p.set_latency(latency);
        p
    }

    /// Changes `K`, rescaling the per-user MEC frequency (24 cores at 3.4 GHz
    /// shared equally) and the pilot overhead.
    pub fn set_users_per_cell(&mut self, k: usize) {
        self.users_per_cell = k;
        self.mec_freq_per_user = 24.0 * 3.4e9 / k.max(1) as f64;
        self.refresh_data_fraction();
    }

    /// Changes `T_d`, keeping the coherence interval equal to `B * T_d`.
    pub fn set_latency(&mut self, latency: f64) {
        self.latency = latency;
        self.coherence_len = self.bandwidth * latency;
        self.refresh_data_fraction();
    }

    fn refresh_data_fraction(&mut self) {
        let pilots = self.users_per_cell as f64;
        if self.coherence_len > pilots {
            self.data_fraction = (self.coherence_len - pilots) / self.coherence_len;
        }
    }

    /// Pilot length: one orthogonal pilot per user in a cell.
    pub fn pilot_len(&self) -> f64 {
        self.users_per_cell as f64
    }

    pub fn xi(&self, user: usize) -> f64 {
        match self.conv_eff.len() {
            0 => 0.5,
            1 => self.conv_eff[0],
            _ => self.conv_eff[user.min(self.conv_eff.len() - 1)],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        fn bad(name: &'static str, reason: impl Into<String>) -> ModelError {
            ModelError::InvalidParam {
                name,
                reason: reason.into(),
            }
        }
        if self.n_antennas == 0 {
            return Err(bad("n_antennas", "must be positive"));
        }
        if self.users_per_cell == 0 {
            return Err(bad("users_per_cell", "must be positive"));
        }
        if self.n_cells == 0 {
            return Err(bad("n_cells", "must be positive"));
        }
        let positive = [
            ("bandwidth", self.bandwidth),
            ("latency", self.latency),
            ("ap_power", self.ap_power),
            ("user_power_max", self.user_power_max),
            ("result_ratio", self.result_ratio),
            ("user_freq", self.user_freq),
            ("mec_freq_per_user", self.mec_freq_per_user),
            ("coherence_len", self.coherence_len),
            ("noise_ul", self.noise_ul),
            ("noise_dl", self.noise_dl),
            ("area_side", self.area_side),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(name, format!("must be finite and > 0, got {v}")));
            }
        }
        let nonneg = [
            ("user_cap", self.user_cap),
            ("user_cycles_per_bit", self.user_cycles_per_bit),
            ("mec_cap", self.mec_cap),
            ("mec_cycles_per_bit", self.mec_cycles_per_bit),
            ("pathloss_exp", self.pathloss_exp),
            ("shadow_std_db", self.shadow_std_db),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.cap_gap_ul < 1.0 {
            return Err(bad("cap_gap_ul", "must be >= 1"));
        }
        if self.cap_gap_dl < 1.0 {
            return Err(bad("cap_gap_dl", "must be >= 1"));
        }
        if !(self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            return Err(bad("data_fraction", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.energy_weight) {
            return Err(bad("energy_weight", "must lie in [0, 1]"));
        }
        if self.conv_eff.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(bad("conv_eff", "every entry must lie in [0, 1]"));
        }
        if self.conv_eff.len() > 1 && self.conv_eff.len() != self.users_per_cell {
            return Err(bad("conv_eff", "needs one entry or one per user"));
        }
        Ok(())
    }
}

/// A user's demand in one time block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserRequest {
    pub data_bits: f64,
    pub energy_req: f64,
}

impl UserRequest {
    pub fn new(data_bits: f64, energy_req: f64) -> Self {
        Self {
            data_bits,
            energy_req,
        }
    }

    pub fn uniform(k: usize, data_bits: f64, energy_req: f64) -> Vec<Self> {
        vec![Self::new(data_bits, energy_req); k]
    }
}

/// Large-scale link quantities of one user, as seen by the offloading model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserLink {
    /// Mean-square channel estimate.
    pub gamma: f64,
    /// Uplink interference-plus-noise power.
    pub sigma1_sq: f64,
    /// Downlink interference-plus-noise power.
    pub sigma2_sq: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Uplink,
    Downlink,
}

/// Offloaded (`s`) and local (`q`) bits per user.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataPartition {
    pub offloaded: Vec<f64>,
    pub local: Vec<f64>,
}

impl DataPartition {
    pub fn new(requests: &[UserRequest], offloaded: &[f64]) -> Self {
        let local = requests
            .iter()
            .zip(offloaded)
            .map(|(r, s)| (r.data_bits - s).max(0.0))
            .collect();
        Self {
            offloaded: offloaded.to_vec(),
            local,
        }
    }

    pub fn all_local(requests: &[UserRequest]) -> Self {
        Self::new(requests, &vec![0.0; requests.len()])
    }

    pub fn offloaded_fraction(&self) -> f64 {
        let s: f64 = self.offloaded.iter().sum();
        let total = s + self.local.iter().sum::<f64>();
        if total > 0.0 {
            s / total
        } else {
            0.0
        }
    }
}

/// Phase durations of one time block.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeAllocation {
    pub t_up: Vec<f64>,
    pub t_down: Vec<f64>,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t_charge: f64,
}

impl TimeAllocation {
    /// Builds the phase maxima and the leftover charging time from per-user
    /// times.
    pub fn from_user_times(t_up: Vec<f64>, t_down: Vec<f64>, t2: f64, latency: f64) -> Self {
        let t1 = t_up.iter().copied().fold(0.0, f64::max);
        let t3 = t_down.iter().copied().fold(0.0, f64::max);
        Self {
            t_up,
            t_down,
            t1,
            t2,
            t3,
            t_charge: (latency - t1 - t3).max(0.0),
        }
    }

    /// Charging-only block: the whole latency budget goes to charging.
    pub fn idle(k: usize, latency: f64) -> Self {
        Self::from_user_times(vec![0.0; k], vec![0.0; k], 0.0, latency)
    }

    pub fn total(&self) -> f64 {
        self.t1 + self.t2 + self.t3
    }
}

/// Energy components of a solved block.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub offload: f64,
    pub local: f64,
    pub download: f64,
    pub mec_compute: f64,
    pub users: f64,
    pub mec: f64,
    pub weighted_total: f64,
    pub charging: f64,
    pub received: Vec<f64>,
}

impl EnergyBreakdown {
    pub fn assemble(offload: f64, local: f64, download: f64, mec_compute: f64, w: f64) -> Self {
        let users = offload + local;
        let mec = download + mec_compute;
        Self {
            offload,
            local,
            download,
            mec_compute,
            users,
            mec,
            weighted_total: (1.0 - w) * users + w * mec,
            charging: 0.0,
            received: Vec::new(),
        }
    }
}

fn check_link(gamma: f64, noise: f64) -> Result<(), ModelError> {
    if !(gamma > 0.0) {
        return Err(ModelError::Domain(format!(
            "channel estimate must be > 0, got {gamma}"
        )));
    }
    if !(noise > 0.0) {
        return Err(ModelError::Domain(format!(
            "interference-plus-noise power must be > 0, got {noise}"
        )));
    }
    Ok(())
}

/// Uplink spectral efficiency (bits/s/Hz) with MR combining.
pub fn uplink_rate(
    p: f64,
    gamma: f64,
    sigma1_sq: f64,
    params: &SystemParams,
) -> Result<f64, ModelError> {
    check_link(gamma, sigma1_sq)?;
    let sinr = params.n_antennas as f64 * gamma * p / sigma1_sq;
    Ok(params.data_fraction * (1.0 + sinr / params.cap_gap_ul).log2())
}

/// Downlink spectral efficiency (bits/s/Hz) with MR precoding and power
/// fraction `eta`.
pub fn downlink_rate(
    eta: f64,
    gamma: f64,
    sigma2_sq: f64,
    params: &SystemParams,
) -> Result<f64, ModelError> {
    check_link(gamma, sigma2_sq)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(ModelError::Domain(format!(
            "power fraction must lie in [0, 1], got {eta}"
        )));
    }
    let sinr = params.n_antennas as f64 * params.ap_power * gamma * eta / sigma2_sq;
    Ok((1.0 + sinr / params.cap_gap_dl).log2())
}

/// Effective noise `Γσ²/(Nγ)` of a link; the transmit energy of a user is
/// `t * noise * (2^(rate) - 1)`.
pub fn effective_noise(link: &UserLink, dir: Direction, params: &SystemParams) -> f64 {
    let n = params.n_antennas as f64;
    match dir {
        Direction::Uplink => params.cap_gap_ul * link.sigma1_sq / (n * link.gamma),
        Direction::Downlink => params.cap_gap_dl * link.sigma2_sq / (n * link.gamma),
    }
}

/// Bits moved per second-hertz: `s/(νB)` uplink, `μs/B` downlink.
pub fn bit_load(s: f64, dir: Direction, params: &SystemParams) -> f64 {
    match dir {
        Direction::Uplink => s / (params.data_fraction * params.bandwidth),
        Direction::Downlink => params.result_ratio * s / params.bandwidth,
    }
}

/// Power needed to move `s` bits in time `t`. Uplink returns watts, downlink
/// returns the fraction `η` of the AP power.
pub fn power_from_time(
    s: f64,
    t: f64,
    dir: Direction,
    link: &UserLink,
    params: &SystemParams,
) -> Result<f64, ModelError> {
    if !(t > 0.0) {
        return Err(ModelError::Domain(format!("time must be > 0, got {t}")));
    }
    if s < 0.0 {
        return Err(ModelError::Domain(format!("bits must be >= 0, got {s}")));
    }
    let gamma_noise = match dir {
        Direction::Uplink => link.sigma1_sq,
        Direction::Downlink => link.sigma2_sq,
    };
    check_link(link.gamma, gamma_noise)?;
    let excess = (bit_load(s, dir, params) / t).exp2() - 1.0;
    let base = excess * effective_noise(link, dir, params);
    Ok(match dir {
        Direction::Uplink => base,
        Direction::Downlink => base / params.ap_power,
    })
}

/// Transmit energy `t * noise * (2^(load/t) - 1)` with `t` guarded by
/// [`T_MIN`]. Zero bits cost nothing.
pub fn transmit_energy(load: f64, t: f64, noise: f64) -> f64 {
    if load <= 0.0 {
        return 0.0;
    }
    let t = t.max(T_MIN);
    t * noise * (load / t).exp_m1_base2()
}

trait ExpM1Base2 {
    fn exp_m1_base2(self) -> f64;
}

impl ExpM1Base2 for f64 {
    fn exp_m1_base2(self) -> f64 {
        (self * std::f64::consts::LN_2).exp_m1()
    }
}

pub fn local_compute_time(q: f64, params: &SystemParams) -> f64 {
    params.user_cycles_per_bit * q / params.user_freq
}

pub fn local_compute_energy(q: f64, params: &SystemParams) -> f64 {
    params.user_cap * params.user_cycles_per_bit * q * params.user_freq.powi(2)
}

pub fn mec_compute_time(s: f64, params: &SystemParams) -> f64 {
    params.mec_cycles_per_bit * s / params.mec_freq_per_user
}

pub fn mec_compute_energy(s: f64, params: &SystemParams) -> f64 {
    params.mec_cap * params.mec_cycles_per_bit * params.mec_freq_per_user.powi(2) * s
}

/// MEC computation phase: the slowest user's offloaded task.
pub fn t2_closed_form(offloaded: &[f64], params: &SystemParams) -> f64 {
    offloaded
        .iter()
        .map(|&s| mec_compute_time(s, params))
        .fold(0.0, f64::max)
}

/// Returns `(offload, local)` energy summed over users.
pub fn energy_users_parts(
    partition: &DataPartition,
    t_up: &[f64],
    links: &[UserLink],
    params: &SystemParams,
) -> (f64, f64) {
    let mut off = 0.0;
    let mut loc = 0.0;
    for i in 0..partition.offloaded.len() {
        let s = partition.offloaded[i];
        let noise = effective_noise(&links[i], Direction::Uplink, params);
        off += transmit_energy(bit_load(s, Direction::Uplink, params), t_up[i], noise);
        loc += local_compute_energy(partition.local[i], params);
    }
    (off, loc)
}

/// Total user-side energy: uplink transmission plus local computation.
pub fn energy_users(
    partition: &DataPartition,
    t_up: &[f64],
    links: &[UserLink],
    params: &SystemParams,
) -> f64 {
    let (a, b) = energy_users_parts(partition, t_up, links, params);
    a + b
}

/// Returns `(download, compute)` energy at the MEC-AP.
pub fn energy_mec_parts(
    partition: &DataPartition,
    t_down: &[f64],
    links: &[UserLink],
    params: &SystemParams,
) -> (f64, f64) {
    let mut dl = 0.0;
    let mut comp = 0.0;
    for i in 0..partition.offloaded.len() {
        let s = partition.offloaded[i];
        let noise = effective_noise(&links[i], Direction::Downlink, params);
        dl += transmit_energy(bit_load(s, Direction::Downlink, params), t_down[i], noise);
        comp += mec_compute_energy(s, params);
    }
    (dl, comp)
}

/// Total MEC-side energy: result download plus computation.
pub fn energy_mec(
    partition: &DataPartition,
    t_down: &[f64],
    links: &[UserLink],
    params: &SystemParams,
) -> f64 {
    let (a, b) = energy_mec_parts(partition, t_down, links, params);
    a + b
}

pub fn energy_breakdown(
    partition: &DataPartition,
    times: &TimeAllocation,
    links: &[UserLink],
    params: &SystemParams,
) -> EnergyBreakdown {
    let (off, loc) = energy_users_parts(partition, &times.t_up, links, params);
    let (dl, comp) = energy_mec_parts(partition, &times.t_down, links, params);
    EnergyBreakdown::assemble(off, loc, dl, comp, params.energy_weight)
}

/// Received RF power `ξ h* W h`. Rejects covariances with an eigenvalue below
/// `-1e-9 * max(1, tr W)`.
pub fn received_power(w: &CMatrix, h: &CVector, xi: f64) -> Result<f64, ModelError> {
    ensure_psd(w)?;
    Ok(xi * quad_form(w, h))
}

/// `h* W h` without validation.
pub fn quad_form(w: &CMatrix, h: &CVector) -> f64 {
    h.dotc(&(w * h)).re.max(0.0)
}

fn ensure_psd(w: &CMatrix) -> Result<(), ModelError> {
    let scale = w.trace().re.abs().max(1.0);
    let min = crate::numerics::hermitian_eig_desc(w)
        .map(|e| e.values.iter().copied().fold(f64::INFINITY, f64::min))
        .map_err(|e| ModelError::Domain(e.to_string()))?;
    if min >= -1e-9 * scale {
        Ok(())
    } else {
        Err(ModelError::NotPsd(min))
    }
}

/// Energy radiated for charging: `T_c tr(W)`.
pub fn charging_energy(w: &CMatrix, t_charge: f64) -> f64 {
    t_charge * w.trace().re
}

/// Outcome of checking a `(s, t)` pair against the latency constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct Feasibility {
    pub latency_total: f64,
    pub worst_user_latency: f64,
    pub violations: Vec<String>,
}

impl Feasibility {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the phase-sum latency, per-user local+uplink latency and the
/// per-phase maxima of a solution.
pub fn check_feasibility(
    requests: &[UserRequest],
    partition: &DataPartition,
    times: &TimeAllocation,
    params: &SystemParams,
) -> Feasibility {
    let td = params.latency;
    let tol = td * LATENCY_RTOL;
    let mut violations = Vec::new();
    let total = times.total();
    if total > td + tol {
        violations.push(format!("T1+T2+T3 = {total:e} exceeds T_d = {td:e}"));
    }
    if times.t_charge < -tol {
        violations.push("negative charging time".into());
    }
    let mut worst = 0.0f64;
    for i in 0..requests.len() {
        let s = partition.offloaded[i];
        let u = requests[i].data_bits;
        if s < -1e-9 * u.max(1.0) || s > u * (1.0 + 1e-12) + 1e-9 {
            violations.push(format!("user {i}: offloaded bits {s} outside [0, {u}]"));
        }
        let lat = local_compute_time(partition.local[i], params) + times.t_up[i];
        worst = worst.max(lat);
        if lat > td + tol {
            violations.push(format!("user {i}: local + uplink time {lat:e} exceeds T_d"));
        }
        if times.t_up[i] > times.t1 * (1.0 + 1e-12) + 1e-15 {
            violations.push(format!("user {i}: uplink time exceeds T1"));
        }
        if times.t_down[i] > times.t3 * (1.0 + 1e-12) + 1e-15 {
            violations.push(format!("user {i}: downlink time exceeds T3"));
        }
        if mec_compute_time(s, params) > times.t2 * (1.0 + 1e-12) + 1e-15 {
            violations.push(format!("user {i}: MEC time exceeds T2"));
        }
        if s > 0.0 && (times.t_up[i] <= 0.0 || times.t_down[i] <= 0.0) {
            violations.push(format!("user {i}: offloads with zero transmission time"));
        }
    }
    Feasibility {
        latency_total: total,
        worst_user_latency: worst,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example_params() -> SystemParams {
        let mut p = SystemParams::paper_defaults();
        p.n_antennas = 100;
        p.cap_gap_ul = 1.25;
        p.cap_gap_dl = 1.25;
        p.data_fraction = 1.0;
        p.bandwidth = 5e6;
        p.ap_power = 40.0;
        p
    }

    #[test]
    fn defaults_are_valid() {
        let p = SystemParams::paper_defaults();
        p.validate().unwrap();
        assert_relative_eq!(p.mec_freq_per_user, 2.04e10, max_relative = 1e-12);
        assert_relative_eq!(p.ap_power, 39.810717, max_relative = 1e-6);
        assert_relative_eq!(p.user_power_max, 0.19952623, max_relative = 1e-6);
        assert!(p.data_fraction < 1.0 && p.data_fraction > 0.9999);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut p = SystemParams::paper_defaults();
        p.cap_gap_ul = 0.5;
        assert!(p.validate().is_err());
        let mut p = SystemParams::paper_defaults();
        p.energy_weight = 1.5;
        assert!(p.validate().is_err());
        let mut p = SystemParams::paper_defaults();
        p.conv_eff = vec![0.5, 1.2];
        assert!(p.validate().is_err());
        let mut p = SystemParams::paper_defaults();
        p.latency = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn uplink_rate_examples() {
        let p = example_params();
        assert_eq!(uplink_rate(0.0, 1.0, 10.0, &p).unwrap(), 0.0);
        let r = uplink_rate(0.1, 1.0, 10.0, &p).unwrap();
        assert_relative_eq!(r, (1.0f64 + 1.0 / 1.25).log2(), max_relative = 1e-12);
        assert_relative_eq!(r, 0.8480, epsilon = 1e-4);
        assert!(uplink_rate(0.1, 0.0, 10.0, &p).is_err());
        assert!(uplink_rate(0.1, 1.0, 0.0, &p).is_err());
    }

    #[test]
    fn uplink_rate_gains_one_bit_per_doubling_at_high_sinr() {
        let mut p = example_params();
        p.data_fraction = 0.9;
        let gain = |pw: f64| {
            uplink_rate(2.0 * pw, 1.0, 10.0, &p).unwrap() - uplink_rate(pw, 1.0, 10.0, &p).unwrap()
        };
        assert!((gain(1e6) - 0.9).abs() < 1e-5);
        assert!(gain(1.0) < gain(1e3));
    }

    #[test]
    fn downlink_rate_examples() {
        let p = example_params();
        assert_eq!(downlink_rate(0.0, 1.0, 1000.0, &p).unwrap(), 0.0);
        let r = downlink_rate(0.25, 1.0, 1000.0, &p).unwrap();
        assert_relative_eq!(r, 0.8480, epsilon = 1e-4);
        assert!(downlink_rate(1.5, 1.0, 1000.0, &p).is_err());
    }

    #[test]
    fn power_from_time_example_and_round_trip() {
        let p = example_params();
        let link = UserLink {
            gamma: 1e-10,
            sigma1_sq: 1e-13,
            sigma2_sq: 1e-13,
        };
        assert_eq!(
            power_from_time(0.0, 5e-3, Direction::Uplink, &link, &p).unwrap(),
            0.0
        );
        let pw = power_from_time(1e4, 5e-3, Direction::Uplink, &link, &p).unwrap();
        let expected = (0.4f64.exp2() - 1.0) * 1.25 * 1e-13 / 1e-8;
        assert_relative_eq!(pw, expected, max_relative = 1e-12);
        assert_relative_eq!(pw, 3.99e-6, max_relative = 1e-3);
        // round trip: the rate at that power carries s/(νtB) bits/s/Hz
        let r = uplink_rate(pw, link.gamma, link.sigma1_sq, &p).unwrap();
        assert_relative_eq!(r, 1e4 / (5e-3 * 5e6), max_relative = 1e-12);
        assert!(power_from_time(1e4, 0.0, Direction::Uplink, &link, &p).is_err());
    }

    #[test]
    fn downlink_power_round_trip() {
        let p = example_params();
        let link = UserLink {
            gamma: 1e-3,
            sigma1_sq: 1e-6,
            sigma2_sq: 1e-4,
        };
        let eta = power_from_time(2e4, 4e-3, Direction::Downlink, &link, &p).unwrap();
        let r = downlink_rate(eta, link.gamma, link.sigma2_sq, &p).unwrap();
        assert_relative_eq!(r, 2.0 * 2e4 / (4e-3 * 5e6), max_relative = 1e-12);
    }

    #[test]
    fn user_energy_examples() {
        let p = example_params();
        let link = UserLink {
            gamma: 1e-10,
            sigma1_sq: 1e-13,
            sigma2_sq: 1e-13,
        };
        let req = [UserRequest::new(1e4, 0.0)];
        let local = DataPartition::all_local(&req);
        let e = energy_users(&local, &[0.0], &[link], &p);
        assert_relative_eq!(e, p.user_cap * 1000.0 * 1e4 * p.user_freq.powi(2));

        let full = DataPartition::new(&req, &[1e4]);
        let (off, loc) = energy_users_parts(&full, &[5e-3], &[link], &p);
        assert_eq!(loc, 0.0);
        assert_relative_eq!(off, 3.99e-6 * 5e-3, max_relative = 1e-3);
    }

    #[test]
    fn mec_energy_examples() {
        let mut p = example_params();
        p.mec_cap = 5e-12;
        p.mec_cycles_per_bit = 500.0;
        p.mec_freq_per_user = 2.04e10;
        let link = UserLink {
            gamma: 1e-10,
            sigma1_sq: 1e-13,
            sigma2_sq: 1e-13,
        };
        let req = [UserRequest::new(1e4, 0.0)];
        let none = DataPartition::all_local(&req);
        assert_eq!(energy_mec(&none, &[0.0], &[link], &p), 0.0);
        let full = DataPartition::new(&req, &[1e4]);
        let (_, comp) = energy_mec_parts(&full, &[5e-3], &[link], &p);
        assert_relative_eq!(comp, 5e-12 * 500.0 * 2.04e10f64.powi(2) * 1e4, max_relative = 1e-12);
    }

    #[test]
    fn breakdown_identities() {
        let b = EnergyBreakdown::assemble(1.0, 2.0, 3.0, 4.0, 1e-3);
        assert_eq!(b.users, 3.0);
        assert_eq!(b.mec, 7.0);
        assert_relative_eq!(b.weighted_total, 0.999 * 3.0 + 1e-3 * 7.0, max_relative = 1e-12);
    }

    #[test]
    fn t2_and_local_time() {
        let p = SystemParams::paper_defaults();
        assert_eq!(t2_closed_form(&[0.0, 0.0], &p), 0.0);
        assert_relative_eq!(t2_closed_form(&[1e4], &p), 2.451e-4, max_relative = 1e-3);
        assert_relative_eq!(
            t2_closed_form(&[1e3, 1e4, 5e3], &p),
            t2_closed_form(&[1e4], &p)
        );
        assert_eq!(local_compute_time(0.0, &p), 0.0);
        assert_relative_eq!(local_compute_time(1e4, &p), 5.556e-3, max_relative = 1e-3);
    }

    #[test]
    fn received_power_examples() {
        let n = 4;
        let h = CVector::from_fn(n, |i, _| Complex64::new(1e-3 * (i as f64 + 1.0), -2e-4));
        let zero = CMatrix::zeros(n, n);
        assert_eq!(received_power(&zero, &h, 0.5).unwrap(), 0.0);

        let norm_sq = h.norm_squared();
        let hs = &h / Complex64::new(norm_sq.sqrt(), 0.0);
        let aligned = (&hs * hs.adjoint()) * Complex64::new(40.0, 0.0);
        let pr = received_power(&aligned, &h, 0.5).unwrap();
        assert_relative_eq!(pr, 0.5 * 40.0 * norm_sq, max_relative = 1e-12);

        let iso = CMatrix::identity(n, n) * Complex64::new(40.0 / n as f64, 0.0);
        let pr = received_power(&iso, &h, 0.3).unwrap();
        assert_relative_eq!(pr, 0.3 * 10.0 * norm_sq, max_relative = 1e-12);

        let mut bad = CMatrix::identity(n, n);
        bad[(0, 0)] = Complex64::new(-1.0, 0.0);
        assert!(received_power(&bad, &h, 0.5).is_err());
    }

    #[test]
    fn charging_energy_examples() {
        let w = CMatrix::identity(4, 4) * Complex64::new(10.0, 0.0);
        assert_eq!(charging_energy(&w, 0.0), 0.0);
        assert_relative_eq!(charging_energy(&w, 10e-3), 0.4, max_relative = 1e-12);
    }

    #[test]
    fn feasibility_predicate_flags_latency() {
        let p = SystemParams::paper_defaults();
        let req = [UserRequest::new(1e4, 0.0)];
        let part = DataPartition::all_local(&req);
        let times = TimeAllocation::idle(1, p.latency);
        assert!(check_feasibility(&req, &part, &times, &p).ok());

        let req = [UserRequest::new(1e5, 0.0)];
        let part = DataPartition::all_local(&req);
        let f = check_feasibility(&req, &part, &times, &p);
        assert!(!f.ok());
        assert!(f.worst_user_latency > p.latency);
    }
}
