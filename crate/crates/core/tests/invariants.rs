use std::f64::consts::{E, LN_2};

use mecwpt::model::check_feasibility;
use mecwpt::numerics::{lambert_w0, solve_lp, LpProblem};
use mecwpt::offload::{closed_form_time, tx_energy_dt};
use mecwpt::sim::{charging_efficiency, ChargingLedger};
use mecwpt::{
    outer_descent, realize, solve_pwc, CVector, ChargeOptions, Complex64, OffloadOptions, SystemParams,
    UserRequest,
};
use proptest::prelude::*;

#[derive(Clone, Debug)]
enum Op {
    Request(Vec<f64>),
    Credit(Vec<f64>),
    Skip,
}

fn op(k: usize) -> impl Strategy<Value = Op> {
    prop_oneof![
        prop::collection::vec(0.0..1.0f64, k).prop_map(Op::Request),
        prop::collection::vec(0.0..1.0f64, k).prop_map(Op::Credit),
        Just(Op::Skip),
    ]
}

fn channels(k: usize, n: usize, raw: &[f64]) -> Vec<CVector> {
    (0..k)
        .map(|i| CVector::from_fn(n, |r, _| Complex64::new(raw[2 * (i * n + r)], raw[2 * (i * n + r) + 1])))
        .collect()
}

proptest! {
    #[test]
    fn ledger_conserves(ops in prop::collection::vec(op(3), 1..40)) {
        let mut l = ChargingLedger::new(3);
        let mut prev = vec![0.0; 3];
        for o in &ops {
            let before = l.outstanding();
            match o {
                Op::Request(e) => l.add_requests(e),
                Op::Credit(r) => {
                    l.credit(r);
                    for (u, b) in l.users.iter().zip(&before) {
                        prop_assert!(*u.history.last().unwrap() <= b + 1e-15);
                    }
                }
                Op::Skip => l.skip(),
            }
            for (u, p) in l.users.iter().zip(&prev) {
                prop_assert!(u.received >= *p);
                prop_assert!(u.outstanding() >= 0.0);
            }
            prev = l.users.iter().map(|u| u.received).collect();
            prop_assert!(l.is_consistent());
        }
    }

    #[test]
    fn efficiency_is_a_percentage(out in prop::collection::vec(1e-6..1.0f64, 1..6), frac in 0.0..1.0f64) {
        let rx: Vec<f64> = out.iter().map(|o| o * frac).collect();
        let e = charging_efficiency(&rx, &out).unwrap();
        prop_assert!((0.0..=100.0 + 1e-9).contains(&e));
    }

    #[test]
    fn lambert_inverts(t in 0.0..1.0f64) {
        let x = -1.0 / E + (1e6f64 + 1.0 / E) * t.powi(4);
        let w = lambert_w0(x).unwrap();
        prop_assert!(w >= -1.0);
        prop_assert!((w * w.exp() - x).abs() <= 1e-12 * x.abs().max(1.0));
    }

    #[test]
    fn lambert_rejects_below_branch_point(d in 1e-9..10.0f64) {
        prop_assert!(lambert_w0(-1.0 / E - d).is_err());
    }

    #[test]
    fn product_with_exp2_reciprocal_is_convex(lx in -6.0..3.0f64) {
        let x = 10f64.powf(lx);
        let g = |x: f64| x.ln() + LN_2 / x;
        let h = 1e-4 * x;
        prop_assert!((g(x - h) - g(x)).exp_m1() + (g(x + h) - g(x)).exp_m1() > 0.0);
    }

    #[test]
    fn closed_form_is_stationary(load in 1e-4..1e-1f64, ls in -14.0..-9.0f64, w in 0.05..0.95f64, lq in -2.0..3.0f64) {
        let sigma = 10f64.powf(ls);
        let y = 10f64.powf(lq) * w * sigma;
        let t = closed_form_time(load, sigma, w, y);
        prop_assert!(t.is_finite() && t > 0.0);
        let slope = w * tx_energy_dt(load, t, sigma) + y;
        prop_assert!(slope.abs() <= 1e-8 * y, "slope {slope} y {y}");
    }

    #[test]
    fn transmit_energy_falls_with_time(load in 1e-4..1e-1f64, t in 1e-5..1.0f64) {
        prop_assert!(tx_energy_dt(load, t, 1e-12) <= 0.0);
    }

    #[test]
    fn lp_solution_is_feasible_and_beats_samples(
        n in 1usize..5,
        seed in prop::collection::vec(0.0..1.0f64, 64),
        descending in any::<bool>(),
    ) {
        let m = n;
        let p = LpProblem {
            objective: seed[..n].iter().map(|v| v + 0.01).collect(),
            constraints: (0..m).map(|i| seed[8 + i * n..8 + (i + 1) * n].iter().map(|v| v + 0.01).collect()).collect(),
            bounds: seed[40..40 + m].iter().map(|v| 1.0 + 5.0 * v).collect(),
            sum_bound: Some(4.0),
            descending,
        };
        let s = solve_lp(&p).unwrap();
        prop_assert!(s.x.iter().all(|&v| v >= -1e-12));
        for (a, b) in p.activities(&s.x).iter().zip(p.all_bounds()) {
            prop_assert!(*a <= b * (1.0 + 1e-9) + 1e-12);
        }
        if descending {
            prop_assert!(s.x.windows(2).all(|w| w[0] >= w[1] - 1e-12));
        }
        // a feasible sample: equal powers scaled into every constraint
        let ones = vec![1.0; n];
        let scale = p.activities(&ones).iter().zip(p.all_bounds()).map(|(a, b)| b / a).fold(f64::INFINITY, f64::min);
        let sample: Vec<f64> = ones.iter().map(|v| v * scale).collect();
        prop_assert!(s.objective >= p.value(&sample) * (1.0 - 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn charging_respects_budget_and_caps(
        (k, n, raw) in (1usize..4, 1usize..7).prop_flat_map(|(k, n)| (Just(k), Just(n), prop::collection::vec(-1.0..1.0f64, 2 * k * n))),
        caps in prop::collection::vec(0.0..2.0f64, 3),
        t_c in 1e-3..0.2f64,
    ) {
        let mut p = SystemParams::paper_defaults();
        p.n_antennas = n;
        let h: Vec<CVector> = channels(k, n, &raw).into_iter().map(|v| v * Complex64::new(1e-3, 0.0)).collect();
        let reqs: Vec<UserRequest> = caps[..k].iter().map(|&e| UserRequest::new(0.0, e * 1e-3)).collect();
        let sol = solve_pwc(&h, &reqs, t_c, &p, &ChargeOptions::default()).unwrap();
        prop_assert!(sol.total_power() <= p.ap_power + 1e-9);
        prop_assert!(sol.powers.iter().all(|&l| l >= 0.0));
        prop_assert!(sol.powers.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(sol.active_beams <= k);
        for (rx, r) in sol.received.iter().zip(&reqs) {
            prop_assert!(*rx <= r.energy_req + 1e-9);
        }
        let gram = sol.directions.adjoint() * &sol.directions;
        for (j, &l) in sol.powers.iter().enumerate() {
            if l > 0.0 {
                prop_assert!((gram[(j, j)].re - 1.0).abs() < 1e-8);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn offloading_solutions_are_feasible(seed in 0u64..1000, kbit in 1.0..50.0f64) {
        let p = SystemParams::paper_defaults();
        let (_, chans) = realize(&p, seed).unwrap();
        let reqs = UserRequest::uniform(p.users_per_cell, kbit * 1e3, 0.0);
        if let Ok(sol) = outer_descent(&chans.cell_links(0), &reqs, &p, &OffloadOptions::default()) {
            let f = check_feasibility(&reqs, &sol.partition, &sol.times, &p);
            prop_assert!(f.ok(), "{:?}", f.violations);
            prop_assert!(sol.times.t_charge >= 0.0);
            prop_assert!((sol.times.t_charge - (p.latency - sol.times.t1 - sol.times.t3)).abs() < 1e-12);
        }
    }
}
