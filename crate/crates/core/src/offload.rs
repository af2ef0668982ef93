//! Energy-optimal partial offloading.
//!
//! The inner loop fixes the offloaded bits `s` and allocates transmission
//! times through a projected dual subgradient method whose primal step is the
//! Lambert-W closed form. The outer loop descends on `s` with a projected
//! Newton method driven by finite differences of the inner optimum.

use std::f64::consts::{E, LN_2};

use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::model::{
    bit_load, check_feasibility, effective_noise, energy_breakdown, local_compute_energy,
    local_compute_time, mec_compute_energy, power_from_time, t2_closed_form, DataPartition,
    Direction, EnergyBreakdown, SystemParams, TimeAllocation, UserLink, UserRequest, T_MIN,
};
use crate::numerics::{golden_section, lambert_w0, project_orthant_hyperplane, Sense, SubgradientState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OffloadOptions {
    /// Outer stopping tolerance on the normalized Newton decrement.
    pub eps1: f64,
    /// Inner stopping tolerance (subgradient change and relative duality gap).
    pub eps2: f64,
    pub max_inner_iter: usize,
    pub max_outer_iter: usize,
    pub fd_grad_rel: f64,
    pub fd_hess_rel: f64,
    pub record_trace: bool,
}

impl Default for OffloadOptions {
    fn default() -> Self {
        Self {
            eps1: 1e-3,
            eps2: 1e-4,
            max_inner_iter: 20_000,
            max_outer_iter: 100,
            fd_grad_rel: 1e-4,
            fd_hess_rel: 1e-3,
            record_trace: false,
        }
    }
}

/// Multipliers of the phase-sum latency (`lambda1`), the per-user
/// local-plus-uplink latency (`theta`), the uplink maximum (`beta`) and the
/// downlink maximum (`phi`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoDuals {
    pub lambda1: f64,
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl CoDuals {
    pub fn zeros(k: usize) -> Self {
        Self {
            lambda1: 0.0,
            beta: vec![0.0; k],
            theta: vec![0.0; k],
            phi: vec![0.0; k],
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.lambda1 >= 0.0
            && self
                .beta
                .iter()
                .chain(&self.theta)
                .chain(&self.phi)
                .all(|&v| v >= 0.0)
    }
}

/// Subgradient of the dual function with respect to each multiplier.
#[derive(Clone, Debug, PartialEq)]
pub struct CoSubgradient {
    pub lambda1: f64,
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// Nothing to optimize (no data or a single feasible point).
    Trivial,
    NewtonDecrement,
    /// The step was cut by the latency constraint and stopped making progress.
    LatencyTight,
    /// Projected gradient vanished or no descent direction improves `F`.
    Stationary,
    IterationCap,
}

impl StopReason {
    pub fn converged(self) -> bool {
        !matches!(self, StopReason::IterationCap)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub dual_residual: f64,
    pub t1: f64,
    pub t3: f64,
    pub t_charge: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLog {
    pub outer_iterations: usize,
    /// Dual updates summed over every inner solve.
    pub inner_iterations: usize,
    pub inner_solves: usize,
    pub inner_unconverged: usize,
    pub stop: Option<StopReason>,
    pub trace: Vec<TraceRow>,
}

impl ConvergenceLog {
    pub fn converged(&self) -> bool {
        self.stop.is_some_and(StopReason::converged) && self.inner_unconverged == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffloadSolution {
    pub partition: DataPartition,
    pub times: TimeAllocation,
    pub ul_power: Vec<f64>,
    pub dl_fraction: Vec<f64>,
    pub energy: EnergyBreakdown,
    pub duals: CoDuals,
    pub log: ConvergenceLog,
    /// Set when the downlink fractions sum above one; not enforced.
    pub dl_overcommitted: bool,
}

impl OffloadSolution {
    pub fn objective(&self) -> f64 {
        self.energy.weighted_total
    }

    /// Trace as CSV with a header row.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,F,dual_residual,T1,T3,T_c\n");
        for r in &self.log.trace {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e}\n",
                r.iter, r.objective, r.dual_residual, r.t1, r.t3, r.t_charge
            ));
        }
        out
    }
}

/// Per-user transmit cost `σ t (2^(L/t) − 1)`.
pub fn tx_energy(load: f64, t: f64, sigma: f64) -> f64 {
    if load <= 0.0 {
        return 0.0;
    }
    let t = t.max(T_MIN);
    sigma * t * (load * LN_2 / t).exp_m1()
}

/// Derivative of [`tx_energy`] in `t`; always ≤ 0.
pub fn tx_energy_dt(load: f64, t: f64, sigma: f64) -> f64 {
    if load <= 0.0 {
        return 0.0;
    }
    let z = load * LN_2 / t.max(T_MIN);
    sigma * (z.exp_m1() - z * z.exp())
}

/// Minimizer over `t > 0` of `weight · tx_energy(load, t, sigma) + y · t`.
///
/// Stationarity reads `(z − 1) e^z = y/(weight σ) − 1` with `z = L ln2 / t`,
/// so `z = 1 + W0((y/(weight σ) − 1)/e)`. Returns `+∞` when `y = 0`.
pub fn closed_form_time(load: f64, sigma: f64, weight: f64, y: f64) -> f64 {
    if load <= 0.0 {
        return 0.0;
    }
    let q = y / (weight * sigma);
    if !(q > 0.0) {
        return f64::INFINITY;
    }
    let z = if q < 1e-8 {
        // W0 near the branch point, written in q to avoid cancellation
        let p = (2.0 * q).sqrt();
        p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        1.0 + lambert_w0((q - 1.0) / E).unwrap_or(-1.0)
    };
    if z <= 0.0 {
        return f64::INFINITY;
    }
    load * LN_2 / z
}

/// Per-user constants of one cell.
#[derive(Clone, Debug)]
struct Cell<'a> {
    requests: &'a [UserRequest],
    params: &'a SystemParams,
    sig_u: Vec<f64>,
    sig_d: Vec<f64>,
    /// Uplink spectral efficiency at full power.
    r_max: Vec<f64>,
}

impl<'a> Cell<'a> {
    fn new(links: &[UserLink], requests: &'a [UserRequest], params: &'a SystemParams) -> Self {
        let sig_u: Vec<f64> = links
            .iter()
            .map(|l| effective_noise(l, Direction::Uplink, params))
            .collect();
        let sig_d = links
            .iter()
            .map(|l| effective_noise(l, Direction::Downlink, params))
            .collect();
        let r_max = sig_u
            .iter()
            .map(|&s| (1.0 + params.user_power_max / s).log2())
            .collect();
        Self {
            requests,
            params,
            sig_u,
            sig_d,
            r_max,
        }
    }

    fn k(&self) -> usize {
        self.requests.len()
    }

    fn w(&self) -> f64 {
        self.params.energy_weight
    }

    fn load_u(&self, s: f64) -> f64 {
        bit_load(s, Direction::Uplink, self.params)
    }

    fn load_d(&self, s: f64) -> f64 {
        bit_load(s, Direction::Downlink, self.params)
    }

    /// Shortest uplink time allowed by the power cap.
    fn t_up_min(&self, i: usize, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        (self.load_u(s) / self.r_max[i]).max(T_MIN)
    }

    /// Longest uplink time allowed by the local-plus-uplink latency.
    fn t_up_max(&self, i: usize, s: f64) -> f64 {
        let q = (self.requests[i].data_bits - s).max(0.0);
        self.params.latency - local_compute_time(q, self.params)
    }

    /// Energy that does not depend on the time allocation.
    fn fixed_energy(&self, s: &[f64]) -> f64 {
        let w = self.w();
        s.iter()
            .zip(self.requests)
            .map(|(&si, r)| {
                (1.0 - w) * local_compute_energy((r.data_bits - si).max(0.0), self.params)
                    + w * mec_compute_energy(si, self.params)
            })
            .sum()
    }

    fn time_energy(&self, s: &[f64], t_up: &[f64], t_down: &[f64]) -> f64 {
        let w = self.w();
        (0..self.k())
            .map(|i| {
                (1.0 - w) * tx_energy(self.load_u(s[i]), t_up[i], self.sig_u[i])
                    + w * tx_energy(self.load_d(s[i]), t_down[i], self.sig_d[i])
            })
            .sum()
    }
}

/// Exact time allocation for fixed `s`: every offloading user transmits as
/// long as its constraints allow, leaving a one-dimensional convex problem in
/// `T1`.
#[derive(Clone, Debug)]
struct Primal {
    t_up: Vec<f64>,
    t_down: Vec<f64>,
    t2: f64,
    value: f64,
}

fn primal_optimum(cell: &Cell<'_>, s: &[f64]) -> Option<Primal> {
    let td = cell.params.latency;
    let k = cell.k();
    let active: Vec<usize> = (0..k).filter(|&i| s[i] > 0.0).collect();
    let fixed = cell.fixed_energy(s);
    for i in 0..k {
        if cell.t_up_max(i, s[i]) < -td * 1e-12 {
            return None;
        }
    }
    if active.is_empty() {
        return Some(Primal {
            t_up: vec![0.0; k],
            t_down: vec![0.0; k],
            t2: 0.0,
            value: fixed,
        });
    }
    let t2 = t2_closed_form(s, cell.params);
    let mut lo = T_MIN;
    let mut hi_users = 0.0f64;
    for &i in &active {
        let (a, b) = (cell.t_up_min(i, s[i]), cell.t_up_max(i, s[i]));
        if a > b + 1e-12 * td {
            return None;
        }
        lo = lo.max(a);
        hi_users = hi_users.max(b.max(a));
    }
    let hi = hi_users.min(td - t2 - T_MIN);
    if lo > hi {
        return None;
    }
    let build = |t1: f64| -> (Vec<f64>, Vec<f64>) {
        let t3 = td - t2 - t1;
        let mut up = vec![0.0; k];
        let mut down = vec![0.0; k];
        for &i in &active {
            up[i] = t1.min(cell.t_up_max(i, s[i]).max(cell.t_up_min(i, s[i])));
            down[i] = t3;
        }
        (up, down)
    };
    let objective = |t1: f64| {
        let (u, d) = build(t1);
        cell.time_energy(s, &u, &d)
    };
    let (t1, v) = if hi - lo <= 1e-15 * td {
        (lo, objective(lo))
    } else {
        golden_section(objective, lo, hi, 1e-13)
    };
    if !v.is_finite() {
        return None;
    }
    let (t_up, t_down) = build(t1);
    Some(Primal {
        t_up,
        t_down,
        t2,
        value: v + fixed,
    })
}

/// Primal step of the inner loop: per-user times from the multipliers via the
/// closed form, clamped to `[t_min, T_d]` and, on the uplink, to the shortest
/// time the power cap allows.
pub fn inner_time_from_duals(
    s: &[f64],
    duals: &CoDuals,
    links: &[UserLink],
    params: &SystemParams,
) -> TimeAllocation {
    let reqs: Vec<UserRequest> = s.iter().map(|&v| UserRequest::new(v, 0.0)).collect();
    let cell = Cell::new(links, &reqs, params);
    let (up, down) = times_from_duals(&cell, s, duals);
    TimeAllocation::from_user_times(up, down, t2_closed_form(s, params), params.latency)
}

fn times_from_duals(cell: &Cell<'_>, s: &[f64], d: &CoDuals) -> (Vec<f64>, Vec<f64>) {
    let td = cell.params.latency;
    let w = cell.w();
    let k = cell.k();
    let mut up = vec![0.0; k];
    let mut down = vec![0.0; k];
    for i in 0..k {
        if s[i] <= 0.0 {
            continue;
        }
        let tu = closed_form_time(cell.load_u(s[i]), cell.sig_u[i], 1.0 - w, d.beta[i] + d.theta[i]);
        up[i] = tu.min(td).max(cell.t_up_min(i, s[i]));
        let tdn = closed_form_time(cell.load_d(s[i]), cell.sig_d[i], w, d.phi[i]);
        down[i] = tdn.clamp(T_MIN, td);
    }
    (up, down)
}

/// Subgradients of the dual function at the times produced by the primal
/// step.
pub fn co_subgradients(
    partition: &DataPartition,
    times: &TimeAllocation,
    params: &SystemParams,
) -> CoSubgradient {
    let td = params.latency;
    let k = partition.offloaded.len();
    CoSubgradient {
        lambda1: times.t1 + times.t2 + times.t3 - td,
        beta: (0..k).map(|i| times.t_up[i] - times.t1).collect(),
        theta: (0..k)
            .map(|i| local_compute_time(partition.local[i], params) + times.t_up[i] - td)
            .collect(),
        phi: (0..k).map(|i| times.t_down[i] - times.t3).collect(),
    }
}

/// Outcome of one fixed-`s` solve.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerResult {
    pub times: TimeAllocation,
    pub duals: CoDuals,
    pub iterations: usize,
    pub converged: bool,
    /// Best dual value (a lower bound on the optimum).
    pub dual_value: f64,
    /// Weighted energy of the returned times.
    pub primal_value: f64,
    pub residual: f64,
}

pub fn inner_primal_dual(
    s: &[f64],
    links: &[UserLink],
    requests: &[UserRequest],
    params: &SystemParams,
    opts: &OffloadOptions,
) -> Result<InnerResult, SolverError> {
    inner_primal_dual_warm(s, links, requests, params, opts, None)
}

/// As [`inner_primal_dual`], starting the multipliers from `warm`.
pub fn inner_primal_dual_warm(
    s: &[f64],
    links: &[UserLink],
    requests: &[UserRequest],
    params: &SystemParams,
    opts: &OffloadOptions,
    warm: Option<&CoDuals>,
) -> Result<InnerResult, SolverError> {
    let cell = Cell::new(links, requests, params);
    inner_solve(&cell, s, opts, warm)
}

fn inner_solve(
    cell: &Cell<'_>,
    s: &[f64],
    opts: &OffloadOptions,
    warm: Option<&CoDuals>,
) -> Result<InnerResult, SolverError> {
    let params = cell.params;
    let td = params.latency;
    let k = cell.k();
    let w = cell.w();
    let primal = primal_optimum(cell, s).ok_or_else(|| {
        SolverError::infeasible("no time allocation meets the latency and power limits")
    })?;
    let finish = |duals: CoDuals, iterations, converged, dual_value, residual| InnerResult {
        times: TimeAllocation::from_user_times(
            primal.t_up.clone(),
            primal.t_down.clone(),
            primal.t2,
            td,
        ),
        duals,
        iterations,
        converged,
        dual_value,
        primal_value: primal.value,
        residual,
    };
    let active: Vec<usize> = (0..k).filter(|&i| s[i] > 0.0).collect();
    if active.is_empty() {
        return Ok(finish(CoDuals::zeros(k), 0, true, primal.value, 0.0));
    }
    let m = active.len();
    let half = 0.5 * td;
    let su: Vec<f64> = active
        .iter()
        .map(|&i| (-(1.0 - w) * tx_energy_dt(cell.load_u(s[i]), half, cell.sig_u[i])).max(1e-300))
        .collect();
    let sd: Vec<f64> = active
        .iter()
        .map(|&i| (-w * tx_energy_dt(cell.load_d(s[i]), half, cell.sig_d[i])).max(1e-300))
        .collect();
    let mut a = vec![0.0; 3 * m];
    for j in 0..m {
        a[j] = su[j];
        a[2 * m + j] = -sd[j];
    }

    let mut x0 = vec![0.0; 3 * m];
    match warm {
        Some(d) if d.beta.len() == k => {
            for (j, &i) in active.iter().enumerate() {
                x0[j] = d.beta[i] / su[j];
                x0[m + j] = d.theta[i] / su[j];
                x0[2 * m + j] = d.phi[i] / sd[j];
            }
        }
        _ => {
            for j in 0..m {
                x0[j] = 1.0;
                x0[2 * m + j] = 1.0;
            }
        }
    }
    if x0.iter().any(|v| !v.is_finite()) {
        x0 = vec![0.0; 3 * m];
    }
    project_orthant_hyperplane(&mut x0, &a);

    let unscale = |x: &[f64]| -> CoDuals {
        let mut d = CoDuals::zeros(k);
        for (j, &i) in active.iter().enumerate() {
            d.beta[i] = su[j] * x[j];
            d.theta[i] = su[j] * x[m + j];
            d.phi[i] = sd[j] * x[2 * m + j];
        }
        let sb: f64 = d.beta.iter().sum();
        let sf: f64 = d.phi.iter().sum();
        d.lambda1 = sb.max(sf);
        d
    };

    let partition = DataPartition::new(cell.requests, s);
    let fixed = cell.fixed_energy(s);
    let upper = primal.value;
    let mut state = SubgradientState::new(x0, opts.eps2);
    let mut best = f64::NEG_INFINITY;
    let mut converged = false;
    let mut g = vec![0.0; 3 * m];
    let mut iterations = 0;
    while iterations < opts.max_inner_iter {
        let duals = unscale(&state.x);
        let (up, down) = times_from_duals(cell, s, &duals);
        let times = TimeAllocation::from_user_times(up, down, primal.t2, td);

        let mut value = fixed + cell.time_energy(s, &times.t_up, &times.t_down);
        value += duals.lambda1 * (primal.t2 - td);
        for &i in &active {
            value += (duals.beta[i] + duals.theta[i]) * times.t_up[i] + duals.phi[i] * times.t_down[i];
            value += duals.theta[i]
                * (local_compute_time(partition.local[i], params) - td);
        }
        best = best.max(value);

        let sub = co_subgradients(&partition, &times, params);
        for (j, &i) in active.iter().enumerate() {
            g[j] = (sub.beta[i] + 0.5 * sub.lambda1) / td;
            g[m + j] = sub.theta[i] / td;
            g[2 * m + j] = (sub.phi[i] + 0.5 * sub.lambda1) / td;
        }
        iterations += 1;
        let gap = (upper - best).max(0.0) / upper.abs().max(f64::MIN_POSITIVE);
        if gap <= opts.eps2 {
            converged = true;
            break;
        }
        state = state.step_projected(value, &g, Sense::Maximize, |x| {
            project_orthant_hyperplane(x, &a)
        });
        if state.converged && gap <= 1e-2 {
            converged = true;
            break;
        }
    }
    let best_x = if state.best_value.is_some() {
        state.best_x.clone()
    } else {
        state.x.clone()
    };
    let residual = state.residual;
    Ok(finish(unscale(&best_x), iterations, converged, best, residual))
}

/// Feasible range of each user's offloaded bits when it alone competes for
/// the latency budget.
fn user_bounds(cell: &Cell<'_>) -> Vec<(f64, f64)> {
    let p = cell.params;
    let td = p.latency;
    let delta = p.user_cycles_per_bit / p.user_freq;
    let mec = p.mec_cycles_per_bit / p.mec_freq_per_user;
    (0..cell.k())
        .map(|i| {
            let u = cell.requests[i].data_bits;
            let alpha = cell.load_u(1.0) / cell.r_max[i];
            // alpha·s + delta·(u − s) ≤ T_d  and  (alpha + mec)·s < T_d
            let (mut lo, mut hi) = (0.0f64, u);
            let slack = td - delta * u;
            if alpha < delta {
                lo = lo.max(-slack / (delta - alpha));
            } else if alpha > delta {
                hi = hi.min(slack / (alpha - delta));
            } else if slack < 0.0 {
                hi = -1.0;
            }
            hi = hi.min(td * (1.0 - 1e-9) / (alpha + mec));
            (lo, hi)
        })
        .collect()
}

/// Per-user `(lo, hi)` bounds on the offloaded bits from the single-user
/// latency and power limits.
pub(crate) fn offload_bounds(
    links: &[UserLink],
    requests: &[UserRequest],
    params: &SystemParams,
) -> Vec<(f64, f64)> {
    user_bounds(&Cell::new(links, requests, params))
}

/// Result of the box-constrained Newton descent.
#[derive(Clone, Debug)]
pub struct DescentResult {
    pub s: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// Zero-based evaluation index and objective of every accepted iterate.
    pub history: Vec<(usize, f64)>,
}

/// Projected Newton descent on a box with finite-difference derivatives.
/// `f` returns `None` where the point is infeasible. `scale` sets the
/// finite-difference steps.
pub fn box_newton<F>(
    mut f: F,
    lo: &[f64],
    hi: &[f64],
    scale: &[f64],
    s0: Vec<f64>,
    opts: &OffloadOptions,
) -> Option<DescentResult>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let n = s0.len();
    let evals = std::cell::Cell::new(0usize);
    let mut eval = |x: &[f64]| -> Option<f64> {
        evals.set(evals.get() + 1);
        f(x).filter(|v| v.is_finite())
    };
    let mut s = s0;
    let mut fs = eval(&s)?;
    let mut history = vec![(0usize, fs)];
    let free_dims: Vec<usize> = (0..n).filter(|&i| hi[i] - lo[i] > 1e-12 * scale[i].max(1.0)).collect();
    if free_dims.is_empty() {
        return Some(DescentResult {
            s,
            value: fs,
            iterations: 0,
            stop: StopReason::Trivial,
            history,
        });
    }
    let mut stop = StopReason::IterationCap;
    let mut iterations = 0;
    for it in 1..=opts.max_outer_iter {
        iterations = it;
        let mut g = vec![0.0; n];
        for &i in &free_dims {
            let h = opts.fd_grad_rel * scale[i];
            let plus = (s[i] + h <= hi[i]).then(|| shifted(&s, i, h)).and_then(|x| eval(&x));
            let minus = (s[i] - h >= lo[i]).then(|| shifted(&s, i, -h)).and_then(|x| eval(&x));
            g[i] = match (plus, minus) {
                (Some(a), Some(b)) => (a - b) / (2.0 * h),
                (Some(a), None) => (a - fs) / h,
                (None, Some(b)) => (fs - b) / h,
                (None, None) => 0.0,
            };
        }
        let at_lo = |i: usize| s[i] <= lo[i] + 1e-12 * scale[i];
        let at_hi = |i: usize| s[i] >= hi[i] - 1e-12 * scale[i];
        let free: Vec<usize> = free_dims
            .iter()
            .copied()
            .filter(|&i| !((at_lo(i) && g[i] > 0.0) || (at_hi(i) && g[i] < 0.0)))
            .collect();
        if free.is_empty() || free.iter().all(|&i| g[i] == 0.0) {
            stop = StopReason::Stationary;
            break;
        }
        let hess = fd_hessian(&mut eval, &s, fs, &free, lo, hi, scale, opts.fd_hess_rel);
        let gf: Vec<f64> = free.iter().map(|&i| g[i]).collect();
        let newton = newton_direction(&hess, &gf);

        let mut dir = vec![0.0; n];
        let mut decrement = f64::INFINITY;
        let had_newton = newton.is_some();
        if let Some((d, dec)) = newton {
            for (j, &i) in free.iter().enumerate() {
                dir[i] = d[j];
            }
            decrement = dec;
        } else {
            steepest(&mut dir, &free, &g, scale);
        }
        if decrement.is_finite() && decrement.sqrt() <= opts.eps1 * fs.abs().sqrt() {
            stop = StopReason::NewtonDecrement;
            break;
        }

        let mut accepted = line_search(&mut eval, &s, fs, &g, &dir, lo, hi);
        if accepted.is_none() && had_newton {
            steepest(&mut dir, &free, &g, scale);
            accepted = line_search(&mut eval, &s, fs, &g, &dir, lo, hi);
        }
        match accepted {
            Some((next, fnext, blocked)) => {
                let gain = fs - fnext;
                s = next;
                fs = fnext;
                history.push((evals.get() - 1, fs));
                if blocked && gain <= opts.eps1 * opts.eps1 * fs.abs() {
                    stop = StopReason::LatencyTight;
                    break;
                }
            }
            None => {
                stop = StopReason::Stationary;
                break;
            }
        }
    }
    Some(DescentResult {
        s,
        value: fs,
        iterations,
        stop,
        history,
    })
}

fn shifted(s: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut x = s.to_vec();
    x[i] += h;
    x
}

fn steepest(dir: &mut [f64], free: &[usize], g: &[f64], scale: &[f64]) {
    let norm = free
        .iter()
        .map(|&i| (g[i] * scale[i]).abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    dir.iter_mut().for_each(|d| *d = 0.0);
    for &i in free {
        dir[i] = -g[i] * scale[i] * scale[i] / norm;
    }
}

#[allow(clippy::too_many_arguments)]
fn fd_hessian(
    eval: &mut impl FnMut(&[f64]) -> Option<f64>,
    s: &[f64],
    fs: f64,
    free: &[usize],
    lo: &[f64],
    hi: &[f64],
    scale: &[f64],
    rel: f64,
) -> Vec<Vec<f64>> {
    let m = free.len();
    let mut h = vec![vec![0.0; m]; m];
    // stencil centres pulled inside the box
    let step: Vec<f64> = free.iter().map(|&i| rel * scale[i]).collect();
    let mut c = s.to_vec();
    for (j, &i) in free.iter().enumerate() {
        if hi[i] - lo[i] >= 2.0 * step[j] {
            c[i] = c[i].clamp(lo[i] + step[j], hi[i] - step[j]);
        }
    }
    let fc = if c == s { Some(fs) } else { eval(&c) };
    let Some(fc) = fc else {
        return h;
    };
    for (a, &i) in free.iter().enumerate() {
        let hi_ = step[a];
        if hi[i] - lo[i] < 2.0 * hi_ {
            continue;
        }
        let p = eval(&shifted(&c, i, hi_));
        let q = eval(&shifted(&c, i, -hi_));
        if let (Some(p), Some(q)) = (p, q) {
            h[a][a] = (p - 2.0 * fc + q) / (hi_ * hi_);
        }
        for (b, &j) in free.iter().enumerate().skip(a + 1) {
            let hj = step[b];
            if hi[j] - lo[j] < 2.0 * hj {
                continue;
            }
            let mut pts = [0.0; 4];
            let mut ok = true;
            for (k, (si, sj)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].iter().enumerate() {
                let mut x = c.clone();
                x[i] += si * hi_;
                x[j] += sj * hj;
                match eval(&x) {
                    Some(v) => pts[k] = v,
                    None => ok = false,
                }
                if !ok {
                    break;
                }
            }
            if ok {
                let v = (pts[0] - pts[1] - pts[2] + pts[3]) / (4.0 * hi_ * hj);
                h[a][b] = v;
                h[b][a] = v;
            }
        }
    }
    h
}

/// Newton direction `−H⁻¹g` with Levenberg-style regularization when `H`
/// is not positive definite. Returns the direction and `gᵀH⁻¹g`.
fn newton_direction(h: &[Vec<f64>], g: &[f64]) -> Option<(Vec<f64>, f64)> {
    let m = g.len();
    let hmax = h.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(hmax > 0.0) {
        return None;
    }
    let mut mu = 0.0;
    for _ in 0..20 {
        let mat = nalgebra::DMatrix::from_fn(m, m, |r, c| h[r][c] + if r == c { mu } else { 0.0 });
        if let Some(ch) = nalgebra::Cholesky::new(mat) {
            let rhs = nalgebra::DVector::from_column_slice(g);
            let x = ch.solve(&rhs);
            let dec = rhs.dot(&x);
            if dec.is_finite() && dec > 0.0 {
                return Some((x.iter().map(|v| -v).collect(), dec));
            }
        }
        mu = if mu == 0.0 { 1e-10 * hmax } else { mu * 10.0 };
    }
    None
}

/// Backtracking along the projected path `P(s + t·dir)`: halve until
/// feasible, then until the Armijo condition holds. Returns the new point, its
/// value and whether feasibility cut the step.
fn line_search(
    eval: &mut impl FnMut(&[f64]) -> Option<f64>,
    s: &[f64],
    fs: f64,
    g: &[f64],
    dir: &[f64],
    lo: &[f64],
    hi: &[f64],
) -> Option<(Vec<f64>, f64, bool)> {
    let mut t = 1.0;
    let mut blocked = false;
    for _ in 0..60 {
        let x: Vec<f64> = (0..s.len())
            .map(|i| (s[i] + t * dir[i]).clamp(lo[i], hi[i]))
            .collect();
        let moved: f64 = (0..s.len()).map(|i| g[i] * (x[i] - s[i])).sum();
        if x == s {
            return None;
        }
        match eval(&x) {
            None => blocked = true,
            Some(v) => {
                if v <= fs + 1e-4 * moved && v < fs {
                    return Some((x, v, blocked));
                }
            }
        }
        t *= 0.5;
    }
    None
}

/// Evaluates the fixed-`s` optimum and wraps everything the harness reports.
fn assemble(
    cell: &Cell<'_>,
    links: &[UserLink],
    s: &[f64],
    inner: InnerResult,
    log: ConvergenceLog,
) -> Result<OffloadSolution, SolverError> {
    let params = cell.params;
    let partition = DataPartition::new(cell.requests, s);
    let times = inner.times;
    let mut ul_power = vec![0.0; s.len()];
    let mut dl_fraction = vec![0.0; s.len()];
    for i in 0..s.len() {
        if s[i] > 0.0 {
            ul_power[i] = power_from_time(s[i], times.t_up[i], Direction::Uplink, &links[i], params)?;
            dl_fraction[i] =
                power_from_time(s[i], times.t_down[i], Direction::Downlink, &links[i], params)?;
        }
    }
    let energy = energy_breakdown(&partition, &times, links, params);
    let dl_overcommitted = dl_fraction.iter().sum::<f64>() > 1.0 + 1e-12;
    Ok(OffloadSolution {
        partition,
        times,
        ul_power,
        dl_fraction,
        energy,
        duals: inner.duals,
        log,
        dl_overcommitted,
    })
}

/// Solves the offloading problem of one cell.
pub fn outer_descent(
    links: &[UserLink],
    requests: &[UserRequest],
    params: &SystemParams,
    opts: &OffloadOptions,
) -> Result<OffloadSolution, SolverError> {
    params.validate()?;
    let cell = Cell::new(links, requests, params);
    let k = cell.k();
    let bounds = user_bounds(&cell);
    if let Some(i) = bounds.iter().position(|(lo, hi)| lo > hi) {
        return Err(SolverError::infeasible(format!(
            "user {i} cannot meet the latency by any split of its data"
        )));
    }
    let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let scale: Vec<f64> = requests.iter().map(|r| r.data_bits.max(1.0)).collect();
    let s_init: Vec<f64> = (0..k)
        .map(|i| (0.5 * requests[i].data_bits).clamp(lo[i], hi[i]))
        .collect();

    let mut log = ConvergenceLog::default();
    let mut warm: Option<CoDuals> = None;
    let mut records: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut objective = |x: &[f64]| -> Option<f64> {
        let r = inner_solve(&cell, x, opts, warm.as_ref()).ok();
        records.push((x.to_vec(), r.as_ref().map_or(f64::NAN, |r| r.residual)));
        let r = r?;
        log.inner_solves += 1;
        log.inner_iterations += r.iterations;
        if !r.converged {
            log.inner_unconverged += 1;
        }
        warm = Some(r.duals);
        Some(r.primal_value)
    };

    let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let Some(start) = [s_init, lo.clone(), mid, hi.clone()]
        .into_iter()
        .find(|x| primal_optimum(&cell, x).is_some())
    else {
        return Err(SolverError::infeasible(
            "no data split meets the latency and power limits",
        ));
    };
    let result = box_newton(&mut objective, &lo, &hi, &scale, start, opts)
        .ok_or_else(|| SolverError::infeasible("descent start became infeasible"))?;
    drop(objective);

    let final_inner = inner_solve(&cell, &result.s, opts, warm.as_ref())?;
    log.inner_solves += 1;
    log.inner_iterations += final_inner.iterations;
    if !final_inner.converged {
        log.inner_unconverged += 1;
    }
    log.outer_iterations = result.iterations;
    log.stop = Some(result.stop);
    if opts.record_trace {
        for (iter, &(idx, value)) in result.history.iter().enumerate() {
            let (x, residual) = &records[idx];
            let p = primal_optimum(&cell, x);
            let (t1, t3) = p.as_ref().map_or((0.0, 0.0), |p| {
                (
                    p.t_up.iter().copied().fold(0.0, f64::max),
                    p.t_down.iter().copied().fold(0.0, f64::max),
                )
            });
            log.trace.push(TraceRow {
                iter,
                objective: value,
                dual_residual: *residual,
                t1,
                t3,
                t_charge: (params.latency - t1 - t3).max(0.0),
            });
        }
    }
    let sol = assemble(&cell, links, &result.s, final_inner, log)?;
    debug_assert!(check_feasibility(requests, &sol.partition, &sol.times, params).ok());
    Ok(sol)
}

/// Energy-optimal solution at a fixed data partition (no descent on `s`).
pub fn solve_fixed_partition(
    s: &[f64],
    links: &[UserLink],
    requests: &[UserRequest],
    params: &SystemParams,
    opts: &OffloadOptions,
) -> Result<OffloadSolution, SolverError> {
    let cell = Cell::new(links, requests, params);
    let inner = inner_solve(&cell, s, opts, None)?;
    let log = ConvergenceLog {
        inner_iterations: inner.iterations,
        inner_solves: 1,
        inner_unconverged: usize::from(!inner.converged),
        stop: Some(StopReason::Trivial),
        ..Default::default()
    };
    assemble(&cell, links, s, inner, log)
}

/// Optimal weighted energy at fixed `s`, or `None` when no time allocation
/// is feasible.
pub fn offload_energy(
    s: &[f64],
    links: &[UserLink],
    requests: &[UserRequest],
    params: &SystemParams,
) -> Option<f64> {
    primal_optimum(&Cell::new(links, requests, params), s).map(|p| p.value)
}

/// Weighted time-dependent part of the Lagrangian for one user and one link
/// direction: `weight · σ t (2^(L/t) − 1) + y t`.
pub fn user_lagrangian_term(load: f64, sigma: f64, weight: f64, y: f64, t: f64) -> f64 {
    weight * tx_energy(load, t, sigma) + y * t
}
