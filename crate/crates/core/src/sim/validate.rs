//! Fast property checks over a handful of seeded realizations.

use super::config::{ExperimentConfig, ScheduleEntry};
use super::sweep::{charge_cell, offload_cell, rows_to_csv, run_profile, run_sweep, Axis, ChargeScheme, OffloadScheme};
use super::Mode;
use crate::channel::realize;
use crate::error::ConfigError;
use crate::model::check_feasibility;
use crate::numerics::lambert_w0;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

fn lambert_check() -> CheckOutcome {
    let mut worst = 0.0f64;
    for i in 0..200 {
        let x = -(-1.0f64).exp() + 1e-9 * 10f64.powf(i as f64 * 0.07);
        match lambert_w0(x) {
            Ok(w) => worst = worst.max((w * w.exp() - x).abs() / x.abs().max(1.0)),
            Err(_) => worst = f64::INFINITY,
        }
    }
    outcome("lambert-residual", worst <= 1e-12, format!("max scaled residual {worst:e}"))
}

/// Runs the suite on `realizations` seeds starting at the config's seed.
pub fn run_validation(cfg: &ExperimentConfig, realizations: usize) -> Result<Vec<CheckOutcome>, ConfigError> {
    let p = cfg.system_params()?;
    let k = p.users_per_cell;
    let reqs = cfg.requests(k)?;
    let data: Vec<f64> = reqs.iter().map(|r| r.data_bits).collect();
    let energy: Vec<f64> = reqs.iter().map(|r| r.energy_req).collect();
    let s = &cfg.solver;
    let mut out = vec![lambert_check()];

    let (mut feasible, mut violations, mut infeasible) = (0usize, Vec::new(), 0usize);
    let (mut opt, mut eqk, mut iso) = (0.0, 0.0, 0.0);
    let (mut dominance_ok, mut compared) = (true, 0usize);
    for r in 0..realizations as u64 {
        let seed = cfg.seed.wrapping_add(r);
        let Ok((_, chans)) = realize(&p, seed) else {
            violations.push(format!("seed {seed}: realization failed"));
            continue;
        };
        for cell in 0..p.n_cells {
            let partial = offload_cell(OffloadScheme::Partial, &chans, cell, &data, &p, s);
            let t_c = match &partial {
                Ok(sol) => {
                    let f = check_feasibility(&reqs, &sol.partition, &sol.times, &p);
                    if f.ok() {
                        feasible += 1;
                    } else {
                        violations.push(format!("seed {seed} cell {cell}: {:?}", f.violations));
                    }
                    sol.times.t_charge
                }
                Err(_) => {
                    infeasible += 1;
                    0.0
                }
            };
            for (scheme, acc) in [
                (ChargeScheme::Optimal, &mut opt),
                (ChargeScheme::EqualK, &mut eqk),
                (ChargeScheme::Isotropic, &mut iso),
            ] {
                let sol = charge_cell(scheme, &chans, cell, &energy, t_c, &p, s);
                if sol.total_power() > p.ap_power + 1e-9 {
                    violations.push(format!("seed {seed} cell {cell}: {} over power budget", scheme.name()));
                }
                for (i, (&rx, &e)) in sol.received.iter().zip(&energy).enumerate() {
                    if rx > e + 1e-9 {
                        violations.push(format!("seed {seed} cell {cell} user {i}: {} over cap", scheme.name()));
                    }
                }
                *acc += sol.total_received();
            }
            if k <= 12 {
                if let (Ok(a), Ok(b)) = (&partial, offload_cell(OffloadScheme::Binary, &chans, cell, &data, &p, s)) {
                    compared += 1;
                    dominance_ok &= a.objective() <= b.objective() * (1.0 + 1e-9) + 1e-12;
                }
            }
        }
    }
    out.push(outcome(
        "feasibility",
        violations.is_empty(),
        format!(
            "{feasible} feasible cells, {infeasible} reported infeasible, {} violations{}",
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
    ));
    out.push(outcome(
        "scheme-ordering",
        opt >= eqk && eqk >= iso,
        format!("received optimal {opt:.4e} J, equal-k {eqk:.4e} J, isotropic {iso:.4e} J"),
    ));
    out.push(outcome(
        "partial-vs-binary",
        dominance_ok,
        format!("{compared} cells compared"),
    ));

    let mut profile_cfg = cfg.clone();
    profile_cfg.schedule = Some(vec![
        ScheduleEntry { mode: Mode::DataAndCharging, blocks: 2 },
        ScheduleEntry { mode: Mode::DataOnly, blocks: 2 },
        ScheduleEntry { mode: Mode::ChargingOnly, blocks: 2 },
    ]);
    let run = run_profile(&profile_cfg)?;
    let data_only_zero = run
        .blocks
        .iter()
        .zip(&run.schedule)
        .filter(|(_, m)| **m == Mode::DataOnly)
        .all(|(cells, _)| cells.iter().all(|b| b.received() == 0.0));
    let ledgers_ok = run.ledgers.iter().all(|l| l.is_consistent());
    out.push(outcome(
        "ledger",
        data_only_zero && ledgers_ok,
        format!("data-only blocks add nothing: {data_only_zero}; ledgers consistent: {ledgers_ok}"),
    ));

    let mut det_cfg = cfg.clone();
    det_cfg.realizations = Some(1);
    det_cfg.sweep = None;
    let a = rows_to_csv(&run_sweep(&det_cfg, Axis::ChargingTime)?);
    let b = rows_to_csv(&run_sweep(&det_cfg, Axis::ChargingTime)?);
    out.push(outcome("determinism", a == b, format!("{} bytes compared", a.len())));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass() {
        let cfg = ExperimentConfig::default();
        let checks = run_validation(&cfg, 2).unwrap();
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
