//! Network layouts, channel realizations and the large-scale quantities the
//! solvers consume.
//!
//! Users are indexed globally as `cell * K + k`; user `k` of every cell
//! shares pilot `k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{CVector, Complex64, SystemParams, UserLink};

const PLACEMENT_ATTEMPTS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub ap_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    /// Serving AP of every user.
    pub cell_of: Vec<usize>,
    pub users_per_cell: usize,
}

impl NetworkLayout {
    pub fn n_cells(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn n_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn cell_users(&self, cell: usize) -> std::ops::Range<usize> {
        cell * self.users_per_cell..(cell + 1) * self.users_per_cell
    }

    pub fn distance(&self, ap: usize, user: usize) -> f64 {
        let a = self.ap_positions[ap];
        let u = self.user_positions[user];
        ((a[0] - u[0]).powi(2) + (a[1] - u[1]).powi(2)).sqrt()
    }

    fn nearest_ap(&self, p: [f64; 2]) -> usize {
        nearest(&self.ap_positions, p)
    }
}

fn nearest(aps: &[[f64; 2]], p: [f64; 2]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, a) in aps.iter().enumerate() {
        let d = (a[0] - p[0]).powi(2) + (a[1] - p[1]).powi(2);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

/// AP sites at the centres of a near-square grid covering the area.
pub fn ap_grid(n_cells: usize, side: f64) -> Vec<[f64; 2]> {
    let cols = (n_cells as f64).sqrt().ceil() as usize;
    let rows = n_cells.div_ceil(cols);
    (0..n_cells)
        .map(|j| {
            let (r, c) = (j / cols, j % cols);
            [
                side * (c as f64 + 0.5) / cols as f64,
                side * (r as f64 + 0.5) / rows as f64,
            ]
        })
        .collect()
}

/// Places exactly `K` users uniformly inside each AP's nearest-AP region.
///
/// Sampling the area uniformly and keeping only balanced draws gives, per
/// cell, `K` independent uniform points in that cell; the same distribution
/// is produced here by rejection one user at a time.
pub fn generate_layout(params: &SystemParams, seed: u64) -> Result<NetworkLayout, ModelError> {
    let (l, k) = (params.n_cells, params.users_per_cell);
    if l * k == 0 {
        return Err(ModelError::InvalidParam {
            name: "users_per_cell",
            reason: "network must contain at least one user".into(),
        });
    }
    let side = params.area_side;
    let aps = ap_grid(l, side);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users = Vec::with_capacity(l * k);
    let mut cell_of = Vec::with_capacity(l * k);
    for cell in 0..l {
        for _ in 0..k {
            let mut placed = false;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let p = [rng.random::<f64>() * side, rng.random::<f64>() * side];
                if nearest(&aps, p) == cell {
                    users.push(p);
                    cell_of.push(cell);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(ModelError::Unbalanced {
                    per_cell: k,
                    attempts: PLACEMENT_ATTEMPTS,
                });
            }
        }
    }
    Ok(NetworkLayout {
        ap_positions: aps,
        user_positions: users,
        cell_of,
        users_per_cell: k,
    })
}

/// One block's channels together with the derived large-scale quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    /// Channel from the serving AP to each user.
    pub h: Vec<CVector>,
    /// `beta[ap][user]`.
    pub beta: Vec<Vec<f64>>,
    /// Mean-square channel estimate at the serving AP.
    pub gamma_est: Vec<f64>,
    pub sigma1_sq: Vec<f64>,
    pub sigma2_sq: Vec<f64>,
    pub cell_of: Vec<usize>,
    pub users_per_cell: usize,
    pub rng_seed: u64,
}

impl ChannelRealization {
    pub fn n_users(&self) -> usize {
        self.h.len()
    }

    pub fn cell_users(&self, cell: usize) -> std::ops::Range<usize> {
        cell * self.users_per_cell..(cell + 1) * self.users_per_cell
    }

    pub fn link(&self, user: usize) -> UserLink {
        UserLink {
            gamma: self.gamma_est[user],
            sigma1_sq: self.sigma1_sq[user],
            sigma2_sq: self.sigma2_sq[user],
        }
    }

    pub fn cell_links(&self, cell: usize) -> Vec<UserLink> {
        self.cell_users(cell).map(|i| self.link(i)).collect()
    }

    pub fn cell_channels(&self, cell: usize) -> Vec<CVector> {
        self.cell_users(cell).map(|i| self.h[i].clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ChannelRecord::from(self)).expect("realization serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str::<ChannelRecord>(text).map(Into::into)
    }
}

/// Serialized form; complex entries are `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelRecord {
    h: Vec<Vec<[f64; 2]>>,
    beta: Vec<Vec<f64>>,
    gamma_est: Vec<f64>,
    sigma1_sq: Vec<f64>,
    sigma2_sq: Vec<f64>,
    cell_of: Vec<usize>,
    users_per_cell: usize,
    rng_seed: u64,
}

impl From<&ChannelRealization> for ChannelRecord {
    fn from(c: &ChannelRealization) -> Self {
        Self {
            h: c.h
                .iter()
                .map(|v| v.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
            beta: c.beta.clone(),
            gamma_est: c.gamma_est.clone(),
            sigma1_sq: c.sigma1_sq.clone(),
            sigma2_sq: c.sigma2_sq.clone(),
            cell_of: c.cell_of.clone(),
            users_per_cell: c.users_per_cell,
            rng_seed: c.rng_seed,
        }
    }
}

impl From<ChannelRecord> for ChannelRealization {
    fn from(r: ChannelRecord) -> Self {
        Self {
            h: r.h
                .into_iter()
                .map(|v| CVector::from_iterator(v.len(), v.into_iter().map(|[a, b]| Complex64::new(a, b))))
                .collect(),
            beta: r.beta,
            gamma_est: r.gamma_est,
            sigma1_sq: r.sigma1_sq,
            sigma2_sq: r.sigma2_sq,
            cell_of: r.cell_of,
            users_per_cell: r.users_per_cell,
            rng_seed: r.rng_seed,
        }
    }
}

/// Large-scale gain `max(d, 1)^(-γ_pl) · 10^(X/10)`.
pub fn large_scale_gain(distance: f64, shadow_db: f64, params: &SystemParams) -> f64 {
    distance.max(1.0).powf(-params.pathloss_exp) * 10f64.powf(shadow_db / 10.0)
}

/// Draws gains and small-scale fading, then fills in the channel estimates
/// and interference powers.
pub fn generate_channels(
    layout: &NetworkLayout,
    params: &SystemParams,
    seed: u64,
) -> Result<ChannelRealization, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shadow = Normal::new(0.0, params.shadow_std_db)
        .map_err(|e| ModelError::Domain(format!("shadowing distribution: {e}")))?;
    let (l, n_users) = (layout.n_cells(), layout.n_users());
    let beta: Vec<Vec<f64>> = (0..l)
        .map(|ap| {
            (0..n_users)
                .map(|u| {
                    let x = if params.shadow_std_db > 0.0 {
                        shadow.sample(&mut rng)
                    } else {
                        0.0
                    };
                    large_scale_gain(layout.distance(ap, u), x, params)
                })
                .collect()
        })
        .collect();
    let n = params.n_antennas;
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let h: Vec<CVector> = (0..n_users)
        .map(|u| {
            let amp = beta[layout.cell_of[u]][u].sqrt() * half;
            CVector::from_fn(n, |_, _| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(amp * re, amp * im)
            })
        })
        .collect();
    let mut chans = ChannelRealization {
        h,
        beta,
        gamma_est: vec![0.0; n_users],
        sigma1_sq: vec![0.0; n_users],
        sigma2_sq: vec![0.0; n_users],
        cell_of: layout.cell_of.clone(),
        users_per_cell: layout.users_per_cell,
        rng_seed: seed,
    };
    let (s1, s2) = interference_powers(layout, &chans, params);
    chans.gamma_est = (0..n_users)
        .map(|u| estimate_quality(&chans.beta, layout, layout.cell_of[u], u, params))
        .collect();
    chans.sigma1_sq = s1;
    chans.sigma2_sq = s2;
    Ok(chans)
}

/// Mean-square estimate at AP `ap` of user `user`'s channel, with
/// contamination from every user sharing its pilot.
pub fn estimate_quality(
    beta: &[Vec<f64>],
    layout: &NetworkLayout,
    ap: usize,
    user: usize,
    params: &SystemParams,
) -> f64 {
    let k = layout.users_per_cell;
    let pilot = user % k;
    let tp = params.pilot_len() * params.user_power_max;
    let contaminated: f64 = (0..layout.n_cells()).map(|c| beta[ap][c * k + pilot]).sum();
    tp * beta[ap][user].powi(2) / (params.noise_ul + tp * contaminated)
}

/// Uplink and downlink interference-plus-noise powers with every user at full
/// power and every AP splitting its power equally over its users.
pub fn interference_powers(
    layout: &NetworkLayout,
    chans: &ChannelRealization,
    params: &SystemParams,
) -> (Vec<f64>, Vec<f64>) {
    let (l, k) = (layout.n_cells(), layout.users_per_cell);
    let n = params.n_antennas as f64;
    let p = params.user_power_max;
    let ap_p = params.ap_power;
    let beta = &chans.beta;
    let n_users = layout.n_users();
    let mut s1 = vec![0.0; n_users];
    let mut s2 = vec![0.0; n_users];
    for u in 0..n_users {
        let cell = layout.cell_of[u];
        let pilot = u % k;

        let noncoherent_ul: f64 = (0..n_users).filter(|&v| v != u).map(|v| p * beta[cell][v]).sum();
        let coherent_ul: f64 = (0..l)
            .filter(|&j| j != cell)
            .map(|j| estimate_quality(beta, layout, cell, j * k + pilot, params))
            .sum();
        s1[u] = params.noise_ul + noncoherent_ul + n * p * coherent_ul;

        let mut noncoherent_dl = 0.0;
        for j in 0..l {
            let others = if j == cell { k - 1 } else { k };
            noncoherent_dl += ap_p / k as f64 * beta[j][u] * others as f64;
        }
        let coherent_dl: f64 = (0..l)
            .filter(|&j| j != cell)
            .map(|j| estimate_quality(beta, layout, j, u, params))
            .sum();
        s2[u] = params.noise_dl + noncoherent_dl + n * ap_p / k as f64 * coherent_dl;
    }
    (s1, s2)
}

/// Layout and channels for one realization seed. The channel stream is
/// decorrelated from the layout stream.
pub fn realize(
    params: &SystemParams,
    seed: u64,
) -> Result<(NetworkLayout, ChannelRealization), ModelError> {
    let layout = generate_layout(params, seed)?;
    let chans = generate_channels(&layout, params, channel_seed(seed))?;
    Ok((layout, chans))
}

pub fn channel_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x2545_F491_4F6C_DD1D)
}

impl NetworkLayout {
    /// Checks that every user is served by its nearest AP.
    pub fn is_consistent(&self) -> bool {
        (0..self.n_users()).all(|u| self.nearest_ap(self.user_positions[u]) == self.cell_of[u])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SystemParams {
        SystemParams::paper_defaults()
    }

    #[test]
    fn single_cell_layout() {
        let mut p = params();
        p.n_cells = 1;
        let l = generate_layout(&p, 1).unwrap();
        assert!(l.cell_of.iter().all(|&c| c == 0));
        assert_eq!(l.ap_positions, vec![[10.0, 10.0]]);
    }

    #[test]
    fn layouts_are_balanced_and_deterministic() {
        let p = params();
        for seed in 0..200 {
            let l = generate_layout(&p, seed).unwrap();
            for c in 0..p.n_cells {
                assert_eq!(l.cell_of.iter().filter(|&&x| x == c).count(), p.users_per_cell);
            }
            assert!(l.is_consistent());
            assert!(l
                .user_positions
                .iter()
                .all(|q| (0.0..=20.0).contains(&q[0]) && (0.0..=20.0).contains(&q[1])));
        }
        assert_eq!(generate_layout(&p, 5).unwrap(), generate_layout(&p, 5).unwrap());
        assert_ne!(generate_layout(&p, 5).unwrap(), generate_layout(&p, 6).unwrap());
    }

    #[test]
    fn ap_grid_is_two_by_two() {
        let g = ap_grid(4, 20.0);
        assert_eq!(g, vec![[5.0, 5.0], [15.0, 5.0], [5.0, 15.0], [15.0, 15.0]]);
    }

    #[test]
    fn channels_are_deterministic() {
        let p = params();
        let (_, a) = realize(&p, 42).unwrap();
        let (_, b) = realize(&p, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn channel_hardening() {
        let p = params();
        let layout = generate_layout(&p, 3).unwrap();
        let mut acc = vec![0.0; layout.n_users()];
        let draws = 1000;
        for s in 0..draws {
            let c = generate_channels(&layout, &p, 10_000 + s).unwrap();
            for (u, h) in c.h.iter().enumerate() {
                acc[u] += h.norm_squared() / p.n_antennas as f64 / c.beta[c.cell_of[u]][u];
            }
        }
        for a in acc {
            assert!((a / draws as f64 - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn gain_decreases_with_distance_without_shadowing() {
        let p = params();
        let mut prev = f64::INFINITY;
        for d in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
            let g = large_scale_gain(d, 0.0, &p);
            assert!(g <= prev);
            prev = g;
        }
        assert_eq!(large_scale_gain(0.0, 0.0, &p), 1.0);
    }

    #[test]
    fn estimates_and_noise_floors() {
        let p = params();
        for seed in 0..20 {
            let (_, c) = realize(&p, seed).unwrap();
            for u in 0..c.n_users() {
                let b = c.beta[c.cell_of[u]][u];
                assert!(c.gamma_est[u] > 0.0 && c.gamma_est[u] < b);
                assert!(c.sigma1_sq[u] >= p.noise_ul);
                assert!(c.sigma2_sq[u] >= p.noise_dl);
            }
        }
    }

    #[test]
    fn single_cell_zero_power_reduces_to_noise() {
        let mut p = params();
        p.n_cells = 1;
        p.user_power_max = 1e-30;
        let (_, c) = realize(&p, 1).unwrap();
        for s in &c.sigma1_sq {
            assert!((s - p.noise_ul).abs() <= 1e-12 * p.noise_ul);
        }
    }

    #[test]
    fn estimate_ratio_rises_with_pilot_power() {
        let p = params();
        let layout = generate_layout(&p, 2).unwrap();
        let c = generate_channels(&layout, &p, 9).unwrap();
        let mut hi = p.clone();
        hi.user_power_max *= 2.0;
        let c2 = generate_channels(&layout, &hi, 9).unwrap();
        for u in 0..c.n_users() {
            let b = c.beta[c.cell_of[u]][u];
            assert!(c2.gamma_est[u] / b >= c.gamma_est[u] / b);
            assert!(c2.sigma1_sq[u] > c.sigma1_sq[u]);
        }
    }

    #[test]
    fn json_round_trip() {
        let mut p = params();
        p.n_antennas = 4;
        let (_, c) = realize(&p, 8).unwrap();
        let back = ChannelRealization::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }
}
