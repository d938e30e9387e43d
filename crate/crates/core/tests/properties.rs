//! Property tests for intensities, parameter validation, risk sharing,
//! equilibrium quotes and the state-space layout.

mod common;

use common::{baseline, baseline_n};
use maketake::hjb::{constants, StateSpace};
use maketake::intensity::{cell_of, intensity_bound, side_intensity};
use maketake::model::{validate, ModelParams, Side};
use maketake::nash::{equilibrium_hamiltonian, fixed_point_delta, hamiltonian_i, IncentiveSlice};
use proptest::prelude::*;

fn side() -> impl Strategy<Value = Side> {
    prop_oneof![Just(Side::Ask), Just(Side::Bid)]
}

proptest! {
    #[test]
    fn per_agent_rates_partition_the_total(
        x in prop::collection::vec(-5.0f64..5.0, 3),
        q in prop::collection::vec(-10i64..=10, 3),
        s in side(),
    ) {
        let vp = baseline_n(3).modified(|p| p.q_bar = Some(10)).unwrap();
        let si = side_intensity(&x, s, &q, &vp);
        let sum: f64 = si.per_agent.iter().sum();
        let blocked = si.per_agent.iter().all(|&r| r == 0.0);
        if blocked {
            prop_assert_eq!(si.total, 0.0);
        } else {
            prop_assert!((sum - si.total).abs() <= 1e-12 * si.total);
        }
        let positive: Vec<f64> = si.per_agent.iter().copied().filter(|&r| r > 0.0).collect();
        prop_assert!(positive.windows(2).all(|w| w[0] == w[1]));
        for (m, &qm) in q.iter().enumerate() {
            if si.per_agent[m] > 0.0 {
                prop_assert!(si.at_best[m] && vp.can_trade(qm, s));
            }
        }
    }

    #[test]
    fn relabelling_agents_permutes_rates(
        x in prop::collection::vec(-5.0f64..5.0, 3),
        q in prop::collection::vec(-10i64..=10, 3),
        s in side(),
        rot in 0usize..3,
    ) {
        let vp = baseline_n(3).modified(|p| p.q_bar = Some(10)).unwrap();
        let perm = |v: &[f64]| -> Vec<f64> { (0..3).map(|m| v[(m + rot) % 3]).collect() };
        let qp: Vec<i64> = (0..3).map(|m| q[(m + rot) % 3]).collect();
        let a = side_intensity(&x, s, &q, &vp);
        let b = side_intensity(&perm(&x), s, &qp, &vp);
        prop_assert_eq!(a.total, b.total);
        prop_assert_eq!(perm(&a.per_agent), b.per_agent);
    }

    #[test]
    fn admissible_rates_respect_the_bound(
        x in prop::collection::vec(-1.0f64..=1.0, 2),
        s in side(),
    ) {
        let vp = baseline_n(2);
        let x: Vec<f64> = x.iter().map(|u| u * vp.delta_inf).collect();
        let si = side_intensity(&x, s, &[0, 0], &vp);
        prop_assert!(si.total <= intensity_bound(&vp) * (1.0 + 1e-12));
    }

    #[test]
    fn cells_cover_the_spread_range(x in 1e-9f64..=50.0) {
        let vp = baseline();
        let ell = cell_of(x, &vp).unwrap() as f64;
        prop_assert!((ell - 1.0) * vp.tick < x && x <= ell * vp.tick);
    }

    #[test]
    fn validation_is_idempotent(
        n in 1usize..=4,
        gamma in prop::collection::vec(0.001f64..0.1, 4),
        varpi in 0.1f64..2.0,
        c in -0.5f64..1.0,
    ) {
        let mut p = ModelParams::baseline_n(n);
        p.gamma = gamma[..n].to_vec();
        p.varpi = varpi;
        p.c = c;
        let vp = validate(&p).unwrap();
        let again = validate(vp.params()).unwrap();
        prop_assert_eq!(again, vp);
    }

    #[test]
    fn risk_sharing_first_order_condition(
        n in 1usize..=6,
        gamma in prop::collection::vec(0.001f64..0.2, 6),
        q in prop::collection::vec(-50i64..=50, 6),
        eta in 0.1f64..3.0,
    ) {
        let mut p = ModelParams::baseline_n(n);
        p.gamma = gamma[..n].to_vec();
        p.eta = eta;
        let vp = validate(&p).unwrap();
        let z = constants(&vp).risk.z_s(&vp.gamma, &q[..n]);
        let total: f64 = z.iter().sum();
        for i in 0..n {
            let foc = vp.gamma[i] * (z[i] + q[i] as f64) + eta * total;
            prop_assert!(foc.abs() <= 1e-12, "agent {} residual {:e}", i, foc);
        }
    }

    #[test]
    fn incentive_shift_translates_quotes(
        za in -0.5f64..0.5,
        zb in -0.5f64..0.5,
        d in -0.3f64..0.3,
        q in -40i64..=40,
    ) {
        let vp = baseline();
        let a = fixed_point_delta(&IncentiveSlice::new(za, zb, 1), &[q], &vp).unwrap();
        let b = fixed_point_delta(&IncentiveSlice::new(za + d, zb + d, 1), &[q], &vp).unwrap();
        for s in Side::BOTH {
            prop_assert!((a.get(0, s) - d - b.get(0, s)).abs() < 1e-12);
        }
    }

    #[test]
    fn equilibrium_hamiltonian_identity(
        n in 1usize..=2,
        za in -0.5f64..0.5,
        zb in -0.5f64..0.5,
        q in prop::collection::vec(-20i64..=20, 2),
    ) {
        let vp = baseline_n(n);
        let q = &q[..n];
        let z = IncentiveSlice::new(za, zb, n);
        let delta = fixed_point_delta(&z, q, &vp).unwrap();
        for i in 0..n {
            let h = hamiltonian_i(i, &delta, &z, q, &vp);
            let want = equilibrium_hamiltonian(i, &delta, q, &vp);
            prop_assert!((h - want).abs() <= 1e-10 * want.abs());
        }
    }

    #[test]
    fn state_index_round_trips(n in 1usize..=4, q_bar in 1i64..=4, symmetric: bool) {
        let space = StateSpace::new(n, q_bar, symmetric);
        let states = space.states();
        prop_assert_eq!(states.len(), space.len());
        for (k, q) in states.iter().enumerate() {
            prop_assert_eq!(space.index_of(q), Some(k));
            let mut rev = q.clone();
            rev.reverse();
            if symmetric {
                prop_assert_eq!(space.index_of(&rev), Some(k));
            }
        }
    }
}
