//! Opportunistic wireless charging: energy-beam directions from the
//! eigenvectors of a dual-weighted channel matrix, beam powers from a small
//! LP, and a projected subgradient loop on the multipliers.

use serde::{Deserialize, Serialize};

use crate::error::NumericError;
use crate::model::{CMatrix, CVector, Complex64, SystemParams, UserRequest};
use crate::numerics::{
    hermitian_eig_desc, low_rank_eig_desc, solve_lp, thin_qr, LpProblem, Sense, SubgradientState,
};

/// Sign of the per-user multiplier inside the channel weighting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoSign {
    /// `1 + ρ_i`
    Plus,
    /// `1 − ρ_i`, the sign of the Lagrangian of the energy caps.
    #[default]
    Minus,
}

impl RhoSign {
    fn slope(self) -> f64 {
        match self {
            RhoSign::Plus => 1.0,
            RhoSign::Minus => -1.0,
        }
    }

    fn weight(self, rho: f64) -> f64 {
        match self {
            RhoSign::Plus => 1.0 + rho,
            RhoSign::Minus => 1.0 - rho,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChargeOptions {
    pub eps2: f64,
    pub max_iter: usize,
    pub rho_sign: RhoSign,
    /// Decompose the full `N x N` matrix instead of its `K`-dimensional
    /// reduction.
    pub full_eig: bool,
    /// Keep the beam powers in the eigenvalue order inside the LP.
    pub ordered_powers: bool,
    pub record_trace: bool,
}

impl Default for ChargeOptions {
    fn default() -> Self {
        Self {
            eps2: 1e-4,
            max_iter: 20_000,
            rho_sign: RhoSign::default(),
            full_eig: false,
            ordered_powers: false,
            record_trace: false,
        }
    }
}

/// Multipliers of the power budget (`chi`) and the per-user energy caps
/// (`rho`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WcDuals {
    pub chi: f64,
    pub rho: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WcTraceRow {
    pub iter: usize,
    pub dual_value: f64,
    pub trace_w: f64,
    pub max_cap_violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChargeSolution {
    /// `N x K`, orthonormal columns.
    pub directions: CMatrix,
    /// Beam powers, descending.
    pub powers: Vec<f64>,
    /// Energy harvested by each user (J).
    pub received: Vec<f64>,
    pub charging_energy: f64,
    pub t_charge: f64,
    pub active_beams: usize,
    pub duals: WcDuals,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<WcTraceRow>,
}

impl ChargeSolution {
    pub fn zero(n: usize, k: usize, t_charge: f64) -> Self {
        Self {
            directions: CMatrix::zeros(n, k),
            powers: vec![0.0; k],
            received: vec![0.0; k],
            charging_energy: 0.0,
            t_charge,
            active_beams: 0,
            duals: WcDuals {
                chi: 0.0,
                rho: vec![0.0; k],
            },
            iterations: 0,
            converged: true,
            trace: Vec::new(),
        }
    }

    /// `W = U diag(λ) U*`.
    pub fn covariance(&self) -> CMatrix {
        let n = self.directions.nrows();
        let mut w = CMatrix::zeros(n, n);
        for (k, &lam) in self.powers.iter().enumerate() {
            if lam != 0.0 {
                let u = self.directions.column(k);
                w += (&u * u.adjoint()) * Complex64::new(lam, 0.0);
            }
        }
        w
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }

    pub fn total_received(&self) -> f64 {
        self.received.iter().sum()
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,dual_value,trace_W,max_cap_violation\n");
        for r in &self.trace {
            out.push_str(&format!(
                "{},{:e},{:e},{:e}\n",
                r.iter, r.dual_value, r.trace_w, r.max_cap_violation
            ));
        }
        out
    }
}

/// Count of beams carrying more than `1e-6` of the power budget.
pub fn count_active(powers: &[f64], budget: f64) -> usize {
    powers.iter().filter(|&&l| l > 1e-6 * budget).count()
}

/// `C = χ I + T_c Σ_i ξ_i (1 ± ρ_i) h_i h_i*`.
pub fn build_c(duals: &WcDuals, h: &[CVector], xi: &[f64], t_charge: f64, sign: RhoSign) -> CMatrix {
    let n = h.first().map_or(0, |v| v.len());
    let mut c = CMatrix::identity(n, n) * Complex64::new(duals.chi, 0.0);
    for (i, hi) in h.iter().enumerate() {
        let wt = t_charge * xi[i] * sign.weight(duals.rho[i]);
        c += (hi * hi.adjoint()) * Complex64::new(wt, 0.0);
    }
    c
}

/// Leading `k` eigenvectors of `C`, as columns, with their eigenvalues.
pub fn beam_directions(c: &CMatrix, k: usize) -> Result<(CMatrix, Vec<f64>), NumericError> {
    let e = hermitian_eig_desc(c)?;
    let k = k.min(c.nrows());
    Ok((e.vectors.columns(0, k).into_owned(), e.values[..k].to_vec()))
}

/// Same directions as [`beam_directions`] on [`build_c`], computed through
/// the `K`-dimensional span of the channels.
pub fn beam_directions_low_rank(
    duals: &WcDuals,
    h: &[CVector],
    xi: &[f64],
    t_charge: f64,
    sign: RhoSign,
) -> Result<(CMatrix, Vec<f64>), NumericError> {
    let weights: Vec<f64> = (0..h.len())
        .map(|i| t_charge * xi[i] * sign.weight(duals.rho[i]))
        .collect();
    let e = low_rank_eig_desc(h, &weights, duals.chi, h.len())?;
    Ok((e.vectors, e.values))
}

/// `d_i[k] = |h_i* u_k|²`.
pub fn beam_gains(directions: &CMatrix, h: &[CVector]) -> Vec<Vec<f64>> {
    h.iter()
        .map(|hi| {
            (0..directions.ncols())
                .map(|k| directions.column(k).dotc(hi).norm_sqr())
                .collect()
        })
        .collect()
}

/// Beam-power LP: maximize the total harvested energy subject to the power
/// budget, the per-user caps `d_iᵀλ ≤ e_i/(ξ_i T_c)` and descending powers.
pub fn build_pbp(
    directions: &CMatrix,
    h: &[CVector],
    requests: &[UserRequest],
    xi: &[f64],
    t_charge: f64,
    budget: f64,
) -> LpProblem {
    let d = beam_gains(directions, h);
    let k = directions.ncols();
    let mut objective = vec![0.0; k];
    let mut constraints = Vec::new();
    let mut bounds = Vec::new();
    for (i, di) in d.iter().enumerate() {
        if xi[i] <= 0.0 {
            continue;
        }
        for (o, &v) in objective.iter_mut().zip(di) {
            *o += xi[i] * t_charge * v;
        }
        constraints.push(di.clone());
        bounds.push(requests[i].energy_req / (xi[i] * t_charge));
    }
    LpProblem {
        objective,
        constraints,
        bounds,
        sum_bound: Some(budget),
        descending: true,
    }
}

/// Per-user harvested energy `ξ_i T_c d_iᵀλ`.
pub fn received_energy(d: &[Vec<f64>], powers: &[f64], xi: &[f64], t_charge: f64) -> Vec<f64> {
    d.iter()
        .enumerate()
        .map(|(i, di)| xi[i] * t_charge * di.iter().zip(powers).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

fn xi_vec(params: &SystemParams, k: usize) -> Vec<f64> {
    (0..k).map(|i| params.xi(i)).collect()
}

struct LoopOutcome {
    total: f64,
    directions: CMatrix,
    powers: Vec<f64>,
    duals: WcDuals,
    iterations: usize,
    converged: bool,
    trace: Vec<WcTraceRow>,
}

fn pwc_loop(
    h: &[CVector],
    requests: &[UserRequest],
    xi: &[f64],
    t_charge: f64,
    budget: f64,
    opts: &ChargeOptions,
) -> Result<LoopOutcome, NumericError> {
    let k = h.len();
    // most energy user i could harvest: the whole budget on its own channel
    let e_scale: Vec<f64> = (0..k)
        .map(|i| (xi[i] * t_charge * budget * h[i].norm_squared()).max(f64::MIN_POSITIVE))
        .collect();
    let s = opts.rho_sign.slope();

    let mut state = SubgradientState::new(vec![0.0; k], opts.eps2);
    let mut best: Option<(f64, CMatrix, Vec<f64>, Vec<f64>, WcDuals)> = None;
    // nobody harvests past its cap or past the whole budget on its channel
    let mut best_bound: f64 = (0..k)
        .filter(|&i| xi[i] > 0.0)
        .map(|i| requests[i].energy_req.min(e_scale[i]))
        .sum();
    let mut trace = Vec::new();
    let mut g = vec![0.0; k];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let rho = state.x.clone();
        let zero_shift = WcDuals { chi: 0.0, rho: rho.clone() };
        let (u, values) = if opts.full_eig {
            beam_directions(&build_c(&zero_shift, h, &xi, t_charge, opts.rho_sign), k)?
        } else {
            beam_directions_low_rank(&zero_shift, h, &xi, t_charge, opts.rho_sign)?
        };
        let chi = values.first().copied().unwrap_or(0.0).max(0.0);
        let mut lp = build_pbp(&u, h, requests, xi, t_charge, budget);
        lp.descending = opts.ordered_powers;
        let sol = solve_lp(&lp)?;
        let d = beam_gains(&u, h);
        let received = received_energy(&d, &sol.x, &xi, t_charge);
        let total: f64 = received.iter().sum();
        let tr: f64 = sol.x.iter().sum();

        // relaxed maximizer: the whole budget on the leading direction
        let relaxed: Vec<f64> = (0..k)
            .map(|i| if chi > 0.0 { xi[i] * t_charge * budget * d[i][0] } else { 0.0 })
            .collect();
        let dual_value = budget * chi
            - s * rho.iter().zip(requests).map(|(r, q)| r * q.energy_req).sum::<f64>();
        if opts.record_trace {
            let viol = received
                .iter()
                .zip(requests)
                .map(|(r, q)| (r - q.energy_req).max(0.0))
                .fold(0.0, f64::max);
            trace.push(WcTraceRow {
                iter: iterations,
                dual_value,
                trace_w: tr,
                max_cap_violation: viol,
            });
        }
        if best.as_ref().is_none_or(|b| total > b.0) {
            best = Some((total, u.clone(), sol.x.clone(), received.clone(), WcDuals { chi, rho: rho.clone() }));
        }
        if opts.rho_sign == RhoSign::Minus {
            best_bound = best_bound.min(dual_value);
            let primal = best.as_ref().map_or(0.0, |b| b.0);
            if best_bound - primal <= opts.eps2 * best_bound.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }

        for i in 0..k {
            g[i] = s * (relaxed[i] - requests[i].energy_req) / e_scale[i];
        }
        state = state.step(dual_value, &g, Sense::Minimize);
        if state.converged && opts.rho_sign == RhoSign::Plus {
            converged = true;
            break;
        }
    }
    let (total, directions, powers, _, duals) = best.expect("at least one iteration");
    Ok(LoopOutcome {
        total,
        directions,
        powers,
        duals,
        iterations,
        converged,
        trace,
    })
}

/// Solves the charging problem of one cell given the time left for charging.
/// Users with no outstanding demand are nulled: every beam is kept orthogonal
/// to their channels.
pub fn solve_pwc(
    h: &[CVector],
    requests: &[UserRequest],
    t_charge: f64,
    params: &SystemParams,
    opts: &ChargeOptions,
) -> Result<ChargeSolution, NumericError> {
    let k = h.len();
    let n = h.first().map_or(params.n_antennas, |v| v.len());
    let budget = params.ap_power;
    if t_charge <= 0.0 || k == 0 || requests.iter().all(|r| r.energy_req <= 0.0) {
        return Ok(ChargeSolution::zero(n, k, t_charge.max(0.0)));
    }
    let xi = xi_vec(params, k);
    let (blocked, active): (Vec<usize>, Vec<usize>) =
        (0..k).partition(|&i| requests[i].energy_req <= 0.0 && xi[i] > 0.0);
    let out = if blocked.is_empty() {
        pwc_loop(h, requests, &xi, t_charge, budget, opts)?
    } else {
        let nulled: Vec<CVector> = blocked.iter().map(|&i| h[i].clone()).collect();
        let (q, _) = thin_qr(&CMatrix::from_columns(&nulled));
        let project = |v: &CVector| -> CVector { v - &q * (q.adjoint() * v) };
        let ha: Vec<CVector> = active.iter().map(|&i| project(&h[i])).collect();
        let ra: Vec<UserRequest> = active.iter().map(|&i| requests[i]).collect();
        let xa: Vec<f64> = active.iter().map(|&i| xi[i]).collect();
        let mut o = pwc_loop(&ha, &ra, &xa, t_charge, budget, opts)?;
        // beams live in the complement; re-project to scrub round-off
        for mut col in o.directions.column_iter_mut() {
            let v = project(&col.clone_owned());
            let norm = v.norm();
            if norm > 0.0 {
                col.copy_from(&(v / Complex64::new(norm, 0.0)));
            }
        }
        let mut rho = vec![0.0; k];
        for (j, &i) in active.iter().enumerate() {
            rho[i] = o.duals.rho[j];
        }
        o.duals.rho = rho;
        o
    };
    let mut order: Vec<usize> = (0..out.powers.len()).collect();
    order.sort_by(|&a, &b| out.powers[b].total_cmp(&out.powers[a]));
    let cols: Vec<CVector> = order.iter().map(|&j| out.directions.column(j).into_owned()).collect();
    let directions = if cols.is_empty() { out.directions.clone() } else { CMatrix::from_columns(&cols) };
    let powers: Vec<f64> = order.iter().map(|&j| out.powers[j]).collect();
    let d = beam_gains(&directions, h);
    let mut received = received_energy(&d, &powers, &xi, t_charge);
    for &i in &blocked {
        received[i] = 0.0;
    }
    debug_assert!((received.iter().sum::<f64>() - out.total).abs() <= 1e-9 * out.total.max(1.0));
    let tr: f64 = powers.iter().sum();
    Ok(ChargeSolution {
        active_beams: count_active(&powers, budget),
        directions,
        powers,
        received,
        charging_energy: t_charge * tr,
        t_charge,
        duals: out.duals,
        iterations: out.iterations,
        converged: out.converged,
        trace: out.trace,
    })
}
