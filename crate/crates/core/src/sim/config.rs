//! JSON experiment configuration. Physical quantities are plain SI numbers or
//! strings with a unit, such as `"23 dBm"`, `"5 MHz"` or `"60 kbit"`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sweep::Axis;
use super::{Mode, SolverSettings};
use crate::error::ConfigError;
use crate::model::{db_to_linear, dbm_to_watts, SystemParams, UserRequest};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dim {
    Power,
    Frequency,
    Time,
    Bits,
    Energy,
    Length,
    /// Dimensionless; a `dB` suffix converts to linear.
    Ratio,
    /// A value quoted in dB and kept in dB.
    Decibel,
    Count,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

impl From<f64> for Quantity {
    fn from(v: f64) -> Self {
        Quantity::Number(v)
    }
}

impl Quantity {
    pub fn to_si(&self, dim: Dim) -> Result<f64, String> {
        let text = match self {
            Quantity::Number(v) => return Ok(*v),
            Quantity::Text(t) => t.trim(),
        };
        let split = text
            .find(|c: char| !(c.is_ascii_digit() || "+-.eE".contains(c)))
            .unwrap_or(text.len());
        // "1e3" keeps its exponent; "5 MHz" splits at the space
        let (num, unit) = text.split_at(split);
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|_| format!("cannot read a number from {text:?}"))?;
        let unit = unit.trim();
        let scale = |table: &[(&str, f64)]| -> Result<f64, String> {
            table
                .iter()
                .find(|(u, _)| *u == unit)
                .map(|(_, f)| value * f)
                .ok_or_else(|| {
                    let known: Vec<&str> = table.iter().map(|(u, _)| *u).collect();
                    format!("unit {unit:?} not accepted here; expected one of {known:?}")
                })
        };
        match dim {
            Dim::Power => match unit {
                "dBm" => Ok(dbm_to_watts(value)),
                "dBW" => Ok(db_to_linear(value)),
                _ => scale(&[("W", 1.0), ("mW", 1e-3), ("uW", 1e-6), ("kW", 1e3), ("", 1.0)]),
            },
            Dim::Frequency => scale(&[("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6), ("GHz", 1e9), ("", 1.0)]),
            Dim::Time => scale(&[("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("ns", 1e-9), ("", 1.0)]),
            Dim::Bits => scale(&[
                ("bit", 1.0),
                ("bits", 1.0),
                ("kbit", 1e3),
                ("kbits", 1e3),
                ("Mbit", 1e6),
                ("Mbits", 1e6),
                ("", 1.0),
            ]),
            Dim::Energy => scale(&[("J", 1.0), ("mJ", 1e-3), ("uJ", 1e-6), ("kJ", 1e3), ("", 1.0)]),
            Dim::Length => scale(&[("m", 1.0), ("km", 1e3), ("", 1.0)]),
            Dim::Ratio => match unit {
                "dB" => Ok(db_to_linear(value)),
                _ => scale(&[("", 1.0)]),
            },
            Dim::Decibel => scale(&[("dB", 1.0), ("", 1.0)]),
            Dim::Count => {
                let v = scale(&[("", 1.0)])?;
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v)
                } else {
                    Err(format!("expected a whole number, got {v}"))
                }
            }
        }
    }
}

/// Overrides applied on top of the reference scenario.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamOverrides {
    pub n_antennas: Option<usize>,
    pub users_per_cell: Option<usize>,
    pub n_cells: Option<usize>,
    pub bandwidth: Option<Quantity>,
    pub latency: Option<Quantity>,
    pub coherence_len: Option<Quantity>,
    pub ap_power: Option<Quantity>,
    pub user_power_max: Option<Quantity>,
    pub cap_gap: Option<Quantity>,
    pub cap_gap_ul: Option<Quantity>,
    pub cap_gap_dl: Option<Quantity>,
    pub result_ratio: Option<Quantity>,
    pub energy_weight: Option<Quantity>,
    pub user_cap: Option<Quantity>,
    pub user_cycles_per_bit: Option<Quantity>,
    pub mec_cap: Option<Quantity>,
    pub mec_cycles_per_bit: Option<Quantity>,
    pub user_freq: Option<Quantity>,
    pub mec_freq_per_user: Option<Quantity>,
    pub conv_eff: Option<Vec<f64>>,
    pub noise_ul: Option<Quantity>,
    pub noise_dl: Option<Quantity>,
    pub pathloss_exp: Option<Quantity>,
    pub shadow_std_db: Option<Quantity>,
    pub area_side: Option<Quantity>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RequestSpec {
    /// Task size of every user.
    pub data: Quantity,
    /// Energy demand of every user per block.
    pub energy: Quantity,
    /// Per-user task sizes; overrides `data` when present.
    pub per_user_data: Option<Vec<Quantity>>,
    pub per_user_energy: Option<Vec<Quantity>>,
}

impl Default for RequestSpec {
    fn default() -> Self {
        Self {
            data: Quantity::Text("20 kbit".into()),
            energy: Quantity::Text("500 mJ".into()),
            per_user_data: None,
            per_user_energy: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub mode: Mode,
    pub blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    #[serde(default)]
    pub values: Option<Vec<Quantity>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub params: ParamOverrides,
    pub seed: u64,
    /// Monte-Carlo realizations per axis value; each axis has its own
    /// default when absent.
    pub realizations: Option<usize>,
    pub requests: RequestSpec,
    /// Block modes of a profile run; an illustrative schedule is used when
    /// absent.
    pub schedule: Option<Vec<ScheduleEntry>>,
    pub sweep: Option<SweepSpec>,
    pub solver: SolverSettings,
    pub output_dir: Option<String>,
    /// Treat any infeasible solve as a failure of the run.
    pub strict: bool,
    #[serde(skip)]
    source: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            params: ParamOverrides::default(),
            seed: 0,
            realizations: None,
            requests: RequestSpec::default(),
            schedule: None,
            sweep: None,
            solver: SolverSettings::default(),
            output_dir: None,
            strict: false,
            source: String::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.source = text.to_string();
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(cfg.error_at(
                "schema_version",
                format!("unsupported schema version {}", cfg.schema_version),
            ));
        }
        cfg.system_params()?;
        cfg.requests(cfg.system_params()?.users_per_cell)?;
        if let Some(s) = &cfg.sweep {
            cfg.sweep_values(s.axis)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Points an error at the first mention of `key` in the source text.
    fn error_at(&self, key: &str, message: String) -> ConfigError {
        let needle = format!("\"{key}\"");
        let (line, column) = self
            .source
            .find(&needle)
            .map(|pos| {
                let before = &self.source[..pos];
                let line = before.matches('\n').count() + 1;
                let col = pos - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                (line, col)
            })
            .unwrap_or((0, 0));
        ConfigError::Parse {
            line,
            column,
            message: format!("{key}: {message}"),
        }
    }

    fn quantity(&self, key: &str, q: &Quantity, dim: Dim) -> Result<f64, ConfigError> {
        q.to_si(dim).map_err(|m| self.error_at(key, m))
    }

    pub fn system_params(&self) -> Result<SystemParams, ConfigError> {
        let o = &self.params;
        let mut p = SystemParams::paper_defaults();
        let get = |key: &str, q: &Option<Quantity>, dim: Dim| -> Result<Option<f64>, ConfigError> {
            q.as_ref().map(|q| self.quantity(key, q, dim)).transpose()
        };
        if let Some(n) = o.n_antennas {
            p.n_antennas = n;
        }
        if let Some(n) = o.n_cells {
            p.n_cells = n;
        }
        if let Some(k) = o.users_per_cell {
            p.set_users_per_cell(k);
        }
        if let Some(v) = get("bandwidth", &o.bandwidth, Dim::Frequency)? {
            p.bandwidth = v;
            p.set_latency(p.latency);
        }
        if let Some(v) = get("latency", &o.latency, Dim::Time)? {
            p.set_latency(v);
        }
        if let Some(v) = get("coherence_len", &o.coherence_len, Dim::Count)? {
            p.coherence_len = v;
            p.set_users_per_cell(p.users_per_cell);
        }
        let set = |target: &mut f64, key: &str, q: &Option<Quantity>, dim: Dim| -> Result<(), ConfigError> {
            if let Some(v) = get(key, q, dim)? {
                *target = v;
            }
            Ok(())
        };
        set(&mut p.ap_power, "ap_power", &o.ap_power, Dim::Power)?;
        set(&mut p.user_power_max, "user_power_max", &o.user_power_max, Dim::Power)?;
        if let Some(v) = get("cap_gap", &o.cap_gap, Dim::Ratio)? {
            p.cap_gap_ul = v;
            p.cap_gap_dl = v;
        }
        set(&mut p.cap_gap_ul, "cap_gap_ul", &o.cap_gap_ul, Dim::Ratio)?;
        set(&mut p.cap_gap_dl, "cap_gap_dl", &o.cap_gap_dl, Dim::Ratio)?;
        set(&mut p.result_ratio, "result_ratio", &o.result_ratio, Dim::Ratio)?;
        set(&mut p.energy_weight, "energy_weight", &o.energy_weight, Dim::Ratio)?;
        set(&mut p.user_cap, "user_cap", &o.user_cap, Dim::Ratio)?;
        set(&mut p.user_cycles_per_bit, "user_cycles_per_bit", &o.user_cycles_per_bit, Dim::Ratio)?;
        set(&mut p.mec_cap, "mec_cap", &o.mec_cap, Dim::Ratio)?;
        set(&mut p.mec_cycles_per_bit, "mec_cycles_per_bit", &o.mec_cycles_per_bit, Dim::Ratio)?;
        set(&mut p.user_freq, "user_freq", &o.user_freq, Dim::Frequency)?;
        set(&mut p.mec_freq_per_user, "mec_freq_per_user", &o.mec_freq_per_user, Dim::Frequency)?;
        set(&mut p.noise_ul, "noise_ul", &o.noise_ul, Dim::Power)?;
        set(&mut p.noise_dl, "noise_dl", &o.noise_dl, Dim::Power)?;
        set(&mut p.pathloss_exp, "pathloss_exp", &o.pathloss_exp, Dim::Ratio)?;
        set(&mut p.shadow_std_db, "shadow_std_db", &o.shadow_std_db, Dim::Decibel)?;
        set(&mut p.area_side, "area_side", &o.area_side, Dim::Length)?;
        if let Some(c) = &o.conv_eff {
            p.conv_eff = c.clone();
        }
        p.validate().map_err(|e| match &e {
            crate::error::ModelError::InvalidParam { name, .. } => self.error_at(name, e.to_string()),
            _ => ConfigError::Invalid(e.to_string()),
        })?;
        Ok(p)
    }

    /// Per-user requests for a cell of `k` users.
    pub fn requests(&self, k: usize) -> Result<Vec<UserRequest>, ConfigError> {
        let r = &self.requests;
        let list = |key: &str, per_user: &Option<Vec<Quantity>>, common: &Quantity, dim: Dim| {
            match per_user {
                Some(v) if v.len() != k => Err(self.error_at(
                    key,
                    format!("has {} entries for {k} users per cell", v.len()),
                )),
                Some(v) => v.iter().map(|q| self.quantity(key, q, dim)).collect(),
                None => {
                    let x = self.quantity(key, common, dim)?;
                    Ok(vec![x; k])
                }
            }
        };
        let data = list("per_user_data", &r.per_user_data, &r.data, Dim::Bits)?;
        let energy = list("per_user_energy", &r.per_user_energy, &r.energy, Dim::Energy)?;
        if let Some(bad) = data.iter().chain(&energy).find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(self.error_at("requests", format!("requests must be finite and >= 0, got {bad}")));
        }
        Ok(data
            .into_iter()
            .zip(energy)
            .map(|(d, e)| UserRequest::new(d, e))
            .collect())
    }

    /// Common task size, or the first user's when per-user sizes are given.
    pub fn data_bits(&self) -> Result<f64, ConfigError> {
        Ok(self.requests(self.system_params()?.users_per_cell)?[0].data_bits)
    }

    pub fn energy_request(&self) -> Result<f64, ConfigError> {
        Ok(self.requests(self.system_params()?.users_per_cell)?[0].energy_req)
    }

    pub fn sweep_values(&self, axis: Axis) -> Result<Vec<f64>, ConfigError> {
        match self.sweep.as_ref().filter(|s| s.axis == axis).and_then(|s| s.values.as_ref()) {
            Some(v) if v.is_empty() => Err(self.error_at("values", "needs at least one value".into())),
            Some(v) => v.iter().map(|q| self.quantity("values", q, axis.dim())).collect(),
            None => Ok(axis.default_values()),
        }
    }

    pub fn schedule(&self) -> Vec<Mode> {
        let entries = self.schedule.clone().unwrap_or_else(illustrative_schedule);
        entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.mode, e.blocks))
            .collect()
    }

    pub fn realizations_or(&self, default: usize) -> usize {
        self.realizations.unwrap_or(default)
    }
}

/// An illustrative mode schedule: joint, data-only, charging-only, joint.
pub fn illustrative_schedule() -> Vec<ScheduleEntry> {
    vec![
        ScheduleEntry { mode: Mode::DataAndCharging, blocks: 10 },
        ScheduleEntry { mode: Mode::DataOnly, blocks: 10 },
        ScheduleEntry { mode: Mode::ChargingOnly, blocks: 10 },
        ScheduleEntry { mode: Mode::DataAndCharging, blocks: 10 },
    ]
}
