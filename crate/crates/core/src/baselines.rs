//! Reference schemes: isotropic and equal-power directional charging,
//! exhaustive binary offloading and offloading at fixed transmit powers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charge::{beam_directions_low_rank, beam_gains, count_active, ChargeSolution, RhoSign, WcDuals};
use crate::error::{NumericError, SolverError};
use crate::model::{
    check_feasibility, downlink_rate, energy_breakdown, t2_closed_form, uplink_rate, CMatrix,
    CVector, DataPartition, SystemParams, TimeAllocation, UserLink, UserRequest,
};
use crate::offload::{
    box_newton, offload_bounds, solve_fixed_partition, ConvergenceLog, CoDuals, OffloadOptions,
    OffloadSolution,
};

/// How a fixed beam set is shrunk to respect the per-user energy caps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapScaling {
    /// One factor for the whole covariance, set by the most constrained user.
    #[default]
    Global,
    /// Beams are capped one at a time, strongest first.
    PerBeam,
}

fn scale_to_caps(d: &[Vec<f64>], powers: &mut [f64], caps: &[f64], mode: CapScaling) {
    match mode {
        CapScaling::Global => {
            let mut f = 1.0f64;
            for (di, &cap) in d.iter().zip(caps) {
                let load: f64 = di.iter().zip(powers.iter()).map(|(a, b)| a * b).sum();
                if load > cap {
                    f = f.min(cap / load);
                }
            }
            powers.iter_mut().for_each(|p| *p *= f);
        }
        CapScaling::PerBeam => {
            let mut used = vec![0.0; caps.len()];
            for k in 0..powers.len() {
                let mut lam = powers[k];
                for i in 0..caps.len() {
                    if d[i][k] > 0.0 {
                        lam = lam.min(((caps[i] - used[i]) / d[i][k]).max(0.0));
                    }
                }
                powers[k] = lam;
                for i in 0..caps.len() {
                    used[i] += d[i][k] * lam;
                }
            }
        }
    }
}

fn fixed_beams(
    directions: CMatrix,
    mut powers: Vec<f64>,
    h: &[CVector],
    requests: &[UserRequest],
    t_charge: f64,
    params: &SystemParams,
    mode: CapScaling,
) -> ChargeSolution {
    let k = h.len();
    let xi: Vec<f64> = (0..k).map(|i| params.xi(i)).collect();
    let d = beam_gains(&directions, h);
    // caps expressed as beam-gain budgets d_iᵀλ ≤ e_i/(ξ_i T_c)
    let caps: Vec<f64> = (0..k)
        .map(|i| {
            if xi[i] > 0.0 {
                requests[i].energy_req / (xi[i] * t_charge)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    scale_to_caps(&d, &mut powers, &caps, mode);
    let received = crate::charge::received_energy(&d, &powers, &xi, t_charge);
    let tr: f64 = powers.iter().sum();
    ChargeSolution {
        active_beams: count_active(&powers, params.ap_power),
        directions,
        powers,
        received,
        charging_energy: t_charge * tr,
        t_charge,
        duals: WcDuals {
            chi: 0.0,
            rho: vec![0.0; k],
        },
        iterations: 0,
        converged: true,
        trace: Vec::new(),
    }
}

/// `W = (P/N) I`, scaled down until no user exceeds its request.
pub fn isotropic_charging(
    h: &[CVector],
    requests: &[UserRequest],
    t_charge: f64,
    params: &SystemParams,
    mode: CapScaling,
) -> ChargeSolution {
    let n = h.first().map_or(params.n_antennas, |v| v.len());
    if t_charge <= 0.0 {
        return ChargeSolution::zero(n, h.len(), 0.0);
    }
    let powers = vec![params.ap_power / n as f64; n];
    fixed_beams(CMatrix::identity(n, n), powers, h, requests, t_charge, params, mode)
}

/// Optimal-scheme directions with zero multipliers and `P/K` on every beam,
/// scaled down until no user exceeds its request.
pub fn equal_k_charging(
    h: &[CVector],
    requests: &[UserRequest],
    t_charge: f64,
    params: &SystemParams,
    mode: CapScaling,
) -> Result<ChargeSolution, NumericError> {
    let k = h.len();
    let n = h.first().map_or(params.n_antennas, |v| v.len());
    if t_charge <= 0.0 || k == 0 {
        return Ok(ChargeSolution::zero(n, k, 0.0));
    }
    let xi: Vec<f64> = (0..k).map(|i| params.xi(i)).collect();
    let duals = WcDuals {
        chi: 0.0,
        rho: vec![0.0; k],
    };
    let (u, _) = beam_directions_low_rank(&duals, h, &xi, t_charge, RhoSign::Plus)?;
    let powers = vec![params.ap_power / k as f64; u.ncols()];
    Ok(fixed_beams(u, powers, h, requests, t_charge, params, mode))
}

/// Best of the `2^K` all-or-nothing partitions, each with optimal times.
pub fn binary_offloading(
    links: &[UserLink],
    requests: &[UserRequest],
    params: &SystemParams,
    opts: &OffloadOptions,
) -> Result<OffloadSolution, SolverError> {
    let k = requests.len();
    if k > 20 {
        return Err(SolverError::infeasible(format!(
            "exhaustive binary search limited to 20 users, got {k}"
        )));
    }
    let candidates: Vec<(u32, OffloadSolution)> = (0..1u32 << k)
        .into_par_iter()
        .filter_map(|mask| {
            let s: Vec<f64> = (0..k)
                .map(|i| if mask >> i & 1 == 1 { requests[i].data_bits } else { 0.0 })
                .collect();
            let sol = solve_fixed_partition(&s, links, requests, params, opts).ok()?;
            check_feasibility(requests, &sol.partition, &sol.times, params)
                .ok()
                .then_some((mask, sol))
        })
        .collect();
    candidates
        .into_iter()
        .min_by(|a, b| a.1.objective().total_cmp(&b.1.objective()).then(a.0.cmp(&b.0)))
        .map(|(_, s)| s)
        .ok_or_else(|| SolverError::infeasible("every binary assignment violates the latency"))
}

struct FixedRates {
    ul_time_per_bit: Vec<f64>,
    dl_time_per_bit: Vec<f64>,
}

fn fixed_rates(links: &[UserLink], params: &SystemParams) -> Result<FixedRates, SolverError> {
    let k = links.len();
    let eta = 1.0 / k.max(1) as f64;
    let mut ul = Vec::with_capacity(k);
    let mut dl = Vec::with_capacity(k);
    for l in links {
        let ru = uplink_rate(params.user_power_max, l.gamma, l.sigma1_sq, params)?;
        let rd = downlink_rate(eta, l.gamma, l.sigma2_sq, params)?;
        ul.push(1.0 / (params.bandwidth * ru));
        dl.push(params.result_ratio / (params.bandwidth * rd));
    }
    Ok(FixedRates {
        ul_time_per_bit: ul,
        dl_time_per_bit: dl,
    })
}

fn fixed_times(s: &[f64], rates: &FixedRates, params: &SystemParams) -> TimeAllocation {
    let up = s.iter().zip(&rates.ul_time_per_bit).map(|(a, b)| a * b).collect();
    let down = s.iter().zip(&rates.dl_time_per_bit).map(|(a, b)| a * b).collect();
    TimeAllocation::from_user_times(up, down, t2_closed_form(s, params), params.latency)
}

fn fixed_solution(
    s: &[f64],
    links: &[UserLink],
    requests: &[UserRequest],
    rates: &FixedRates,
    params: &SystemParams,
    log: ConvergenceLog,
) -> OffloadSolution {
    let k = s.len();
    let partition = DataPartition::new(requests, s);
    let times = fixed_times(s, rates, params);
    let energy = energy_breakdown(&partition, &times, links, params);
    let active = |i: usize| s[i] > 0.0;
    OffloadSolution {
        ul_power: (0..k).map(|i| if active(i) { params.user_power_max } else { 0.0 }).collect(),
        dl_fraction: (0..k).map(|i| if active(i) { 1.0 / k as f64 } else { 0.0 }).collect(),
        partition,
        times,
        energy,
        duals: CoDuals::zeros(k),
        log,
        dl_overcommitted: false,
    }
}

/// Offloading with every user at full power and the AP splitting its power
/// equally; only `s` is optimized. When no partition meets the latency the
/// error carries the least-offloading partition, whose total time exceeds
/// `T_d`.
pub fn fixed_power_offloading(
    links: &[UserLink],
    requests: &[UserRequest],
    params: &SystemParams,
    opts: &OffloadOptions,
) -> Result<OffloadSolution, SolverError> {
    let rates = fixed_rates(links, params)?;
    let k = requests.len();
    let bounds = offload_bounds(links, requests, params);
    let lo: Vec<f64> = bounds.iter().map(|b| b.0.min(b.1.max(0.0))).collect();
    let hi: Vec<f64> = bounds
        .iter()
        .zip(requests)
        .map(|(b, r)| b.1.clamp(0.0, r.data_bits).max(b.0.min(r.data_bits)))
        .collect();
    let w = params.energy_weight;
    let objective = |s: &[f64]| -> Option<f64> {
        let part = DataPartition::new(requests, s);
        let times = fixed_times(s, &rates, params);
        if !check_feasibility(requests, &part, &times, params).ok() {
            return None;
        }
        let e = energy_breakdown(&part, &times, links, params);
        Some((1.0 - w) * e.users + w * e.mec)
    };
    let scale: Vec<f64> = requests.iter().map(|r| r.data_bits.max(1.0)).collect();
    let init: Vec<f64> = (0..k)
        .map(|i| (0.5 * requests[i].data_bits).clamp(lo[i], hi[i].max(lo[i])))
        .collect();
    let start = [init, lo.clone()].into_iter().find(|s| objective(s).is_some());
    let Some(start) = start else {
        let log = ConvergenceLog::default();
        let best_effort = fixed_solution(&lo, links, requests, &rates, params, log);
        return Err(SolverError::Infeasible {
            reason: format!(
                "fixed-power schedule needs {:.1}% of the latency budget",
                100.0 * best_effort.times.total() / params.latency
            ),
            best_effort: Some(Box::new(best_effort)),
        });
    };
    let hi_box: Vec<f64> = hi.iter().zip(&lo).map(|(h, l)| h.max(*l)).collect();
    let r = box_newton(objective, &lo, &hi_box, &scale, start, opts)
        .ok_or_else(|| SolverError::infeasible("fixed-power start became infeasible"))?;
    let log = ConvergenceLog {
        outer_iterations: r.iterations,
        stop: Some(r.stop),
        ..Default::default()
    };
    Ok(fixed_solution(&r.s, links, requests, &rates, params, log))
}

/// Fraction of the latency budget used by a schedule, in percent.
pub fn time_usage_percent(times: &TimeAllocation, params: &SystemParams) -> f64 {
    100.0 * times.total() / params.latency
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::realize;
    use crate::charge::{solve_pwc, ChargeOptions};
    use crate::offload::outer_descent;

    fn setup(seed: u64) -> (SystemParams, crate::channel::ChannelRealization) {
        let p = SystemParams::paper_defaults();
        let (_, c) = realize(&p, seed).unwrap();
        (p, c)
    }

    #[test]
    fn isotropic_with_large_requests() {
        let (p, c) = setup(1);
        let h = c.cell_channels(0);
        let reqs = UserRequest::uniform(4, 0.0, 1e9);
        let s = isotropic_charging(&h, &reqs, 0.01, &p, CapScaling::Global);
        for (i, hi) in h.iter().enumerate() {
            let expect = 0.5 * p.ap_power / p.n_antennas as f64 * hi.norm_squared() * 0.01;
            assert!((s.received[i] - expect).abs() < 1e-9 * expect);
        }
        assert!((s.total_power() - p.ap_power).abs() < 1e-9);
    }

    #[test]
    fn isotropic_zero_request_blocks_everyone() {
        let (p, c) = setup(1);
        let h = c.cell_channels(0);
        let mut reqs = UserRequest::uniform(4, 0.0, 1.0);
        reqs[2].energy_req = 0.0;
        let s = isotropic_charging(&h, &reqs, 0.01, &p, CapScaling::Global);
        assert_eq!(s.total_received(), 0.0);
        assert_eq!(s.total_power(), 0.0);
    }

    #[test]
    fn equal_k_matches_optimum_for_one_user() {
        let mut p = SystemParams::paper_defaults();
        p.set_users_per_cell(1);
        let (_, c) = realize(&p, 3).unwrap();
        let h = c.cell_channels(0);
        let reqs = [UserRequest::new(0.0, 1e9)];
        let eq = equal_k_charging(&h, &reqs, 0.01, &p, CapScaling::Global).unwrap();
        let opt = solve_pwc(&h, &reqs, 0.01, &p, &ChargeOptions::default()).unwrap();
        assert!((eq.received[0] - opt.received[0]).abs() < 1e-9 * opt.received[0]);
    }

    #[test]
    fn equal_k_caps_and_equal_powers() {
        let (p, c) = setup(2);
        let h = c.cell_channels(1);
        let reqs = UserRequest::uniform(4, 0.0, 0.05);
        for mode in [CapScaling::Global, CapScaling::PerBeam] {
            let s = equal_k_charging(&h, &reqs, 0.01, &p, mode).unwrap();
            assert!(s.total_power() <= p.ap_power + 1e-9);
            for r in &s.received {
                assert!(*r <= 0.05 + 1e-9);
            }
        }
        let g = equal_k_charging(&h, &reqs, 0.01, &p, CapScaling::Global).unwrap();
        assert!(g.powers.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
    }

    #[test]
    fn binary_matches_direct_enumeration() {
        let mut p = SystemParams::paper_defaults();
        p.set_users_per_cell(2);
        let (_, c) = realize(&p, 5).unwrap();
        let links = c.cell_links(0);
        let reqs = UserRequest::uniform(2, 2.5e4, 0.0);
        let opts = OffloadOptions::default();
        let best = binary_offloading(&links, &reqs, &p, &opts).unwrap();
        let mut oracle = f64::INFINITY;
        for a in [0.0, 2.5e4] {
            for b in [0.0, 2.5e4] {
                if let Some(v) = crate::offload::offload_energy(&[a, b], &links, &reqs, &p) {
                    let part = DataPartition::new(&reqs, &[a, b]);
                    let lt = crate::model::local_compute_time(part.local[0].max(part.local[1]), &p);
                    if lt <= p.latency {
                        oracle = oracle.min(v);
                    }
                }
            }
        }
        assert!((best.objective() - oracle).abs() <= 1e-9 * oracle);
    }

    #[test]
    fn binary_prefers_local_when_it_fits() {
        let (p, c) = setup(6);
        let reqs = UserRequest::uniform(4, 1e3, 0.0);
        let best = binary_offloading(&c.cell_links(0), &reqs, &p, &OffloadOptions::default()).unwrap();
        assert!(best.partition.offloaded.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn partial_never_worse_than_binary() {
        let (p, c) = setup(8);
        let links = c.cell_links(2);
        let reqs = UserRequest::uniform(4, 2e4, 0.0);
        let opts = OffloadOptions::default();
        let part = outer_descent(&links, &reqs, &p, &opts).unwrap();
        let bin = binary_offloading(&links, &reqs, &p, &opts).unwrap();
        assert!(part.objective() <= bin.objective() * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn fixed_power_is_feasible_or_reports_overrun() {
        let (p, c) = setup(9);
        let links = c.cell_links(0);
        let reqs = UserRequest::uniform(4, 1e4, 0.0);
        match fixed_power_offloading(&links, &reqs, &p, &OffloadOptions::default()) {
            Ok(sol) => {
                assert!(check_feasibility(&reqs, &sol.partition, &sol.times, &p).ok());
                assert!(time_usage_percent(&sol.times, &p) <= 100.0 + 1e-4);
            }
            Err(SolverError::Infeasible { best_effort, .. }) => {
                let b = best_effort.unwrap();
                assert!(time_usage_percent(&b.times, &p) > 100.0);
            }
            Err(e) => panic!("{e}"),
        }
    }
}
