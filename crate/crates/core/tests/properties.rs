use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uavir_core::agent::{
    encode_state, fit_quantiles, qr_loss, ActionId, QuantileTable, StateCode, TransitionSample,
};
use uavir_core::channel::{synthetic_csi, SceneGeometry};
use uavir_core::experiment::ExperimentConfig;
use uavir_core::optimizer::{initial_point, optimize, sum_rate, OptimizerConfig};
use uavir_core::sim::{baseline_nonlearning, power_cost, SimConfig};

fn targets() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, 1..200)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_is_sorted_and_never_worse_than_previous(
        t in targets(),
        q in 1usize..41,
        prev_seed in prop::collection::vec(-1e3..1e3f64, 40),
    ) {
        let mut previous: Vec<f64> = prev_seed[..q].to_vec();
        previous.sort_by(f64::total_cmp);
        let fitted = fit_quantiles(&t, q, &previous).unwrap();
        prop_assert_eq!(fitted.len(), q);
        prop_assert!(fitted.windows(2).all(|p| p[0] <= p[1]));
        let before = qr_loss(&previous, &t).unwrap();
        let after = qr_loss(&fitted, &t).unwrap();
        prop_assert!(after <= before * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn fitted_supports_stay_within_target_range(t in targets(), q in 1usize..41) {
        let fitted = fit_quantiles(&t, q, &[]).unwrap();
        let lo = t.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(fitted.iter().all(|&z| z >= lo - 1e-9 && z <= hi + 1e-9));
    }

    #[test]
    fn state_bits_follow_threshold(powers in prop::collection::vec(0.0..1.0f64, 1..32), tau in 0.0..1.0f64) {
        let s = encode_state(&powers, tau);
        prop_assert_eq!(s.len(), powers.len());
        for (k, p) in powers.iter().enumerate() {
            prop_assert_eq!(s.bit(k), *p >= tau);
        }
        prop_assert_eq!(StateCode::parse(&s.to_string()).unwrap(), s);
    }

    #[test]
    fn bellman_update_keeps_entries_sorted_and_nonnegative(
        rewards in prop::collection::vec(0.0..1e6f64, 1..30),
        gamma in 0.0..0.99f64,
    ) {
        let mut table = QuantileTable::new(2, 8, gamma).unwrap();
        let states = [StateCode::from_bits(&[false, false]), StateCode::from_bits(&[true, false])];
        for (i, r) in rewards.iter().enumerate() {
            let s = states[i % 2];
            let s2 = states[(i + 1) % 2];
            let a = ActionId::from_ordinal(i % 4, 2).unwrap();
            table.update(&TransitionSample::one_step(s, a, *r, s2, table.greedy_action(&s2))).unwrap();
        }
        for s in states {
            for a in ActionId::all(2) {
                let z = table.supports(&s, &a);
                prop_assert!(z.windows(2).all(|p| p[0] <= p[1]));
                prop_assert!(z.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn agent_json_round_trips_exactly(
        entries in prop::collection::vec((0u32..16, 0usize..6, prop::collection::vec(-1e9..1e9f64, 5)), 0..20),
        gamma in 0.0..0.999f64,
    ) {
        let mut table = QuantileTable::new(4, 5, gamma).unwrap();
        for (bits, ord, z) in entries {
            let s = StateCode::from_bits(&(0..4).map(|k| bits >> k & 1 == 1).collect::<Vec<_>>());
            table.set_entry(s, ActionId::from_ordinal(ord, 4).unwrap(), z).unwrap();
        }
        let back = QuantileTable::from_json(&table.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, table);
    }

    #[test]
    fn config_text_round_trips(
        rho in 0.0..1e7f64,
        gamma in 0.0..0.99f64,
        alt in prop::collection::vec(5.0..60.0f64, 1..6),
        seeds in prop::collection::btree_set(0u64..1000, 1..8),
    ) {
        let mut cfg = ExperimentConfig::default();
        cfg.sim.rate_threshold = rho;
        cfg.sim.discount = gamma;
        cfg.altitude_sweep = alt;
        cfg.seeds = seeds.into_iter().collect();
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back.to_text(), cfg.to_text());
        prop_assert_eq!(back.config_hash(), cfg.config_hash());
    }

    #[test]
    fn blockage_probability_is_a_probability(
        p in 0.0..=1.0f64,
        lo in 0.0..89.0f64,
        width in 0.5..30.0f64,
        elev in -10.0..100.0f64,
    ) {
        let scene = SceneGeometry {
            ue_blockage_probability: p,
            blocker_elevation_deg: (lo, (lo + width).min(90.0)),
            ..SceneGeometry::default()
        };
        let b = scene.body_blockage_probability(elev);
        prop_assert!((0.0..=p).contains(&b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn optimizer_output_is_feasible_and_no_worse_than_start(seed in 0u64..10_000, p_max in 0.01..100.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let csi = synthetic_csi(3, 4, 2, 10.0, 0.1, &mut rng);
        let (w0, t0) = initial_point(&csi, p_max);
        let start = sum_rate(&w0, &t0, &csi).unwrap();
        let sol = optimize(&csi, &OptimizerConfig::new(p_max), &w0, &t0).unwrap();
        prop_assert!(sol.w.norm_squared() <= p_max * (1.0 + 1e-9));
        prop_assert!(sol.theta.iter().all(|t| t.norm() <= 1.0 + 1e-9));
        prop_assert!(sol.sum_rate >= start);
        prop_assert!(sol.objective_trace.windows(2).all(|p| p[1] >= p[0] * (1.0 - 1e-9)));
    }

    #[test]
    fn episode_energy_and_metrics_invariants(seed in 0u64..1000, slots in 5u32..40, rho in 0.0..5e6f64) {
        let mut cfg = SimConfig {
            ue_count: 2,
            bs_antennas: 4,
            ir_elements: 4,
            rate_threshold: rho,
            ..SimConfig::default()
        };
        cfg.initial_energy = slots as f64 * cfg.max_slot_energy();
        let log = baseline_nonlearning(&cfg, &SceneGeometry::default(), seed).unwrap();
        let summed: f64 = log.records.iter().map(|r| power_cost(r.speed, &cfg) * cfg.slot_duration).sum();
        prop_assert_eq!(summed, log.energy_drawn);
        prop_assert!(log.residual_energy() >= 0.0);
        prop_assert!(log.residual_energy() < cfg.max_slot_energy());
        prop_assert!((0.0..=1.0).contains(&log.los_probability()));
        prop_assert!(log.average_rate() >= 0.0);
        for r in &log.records {
            if r.speed > 0.0 {
                prop_assert_eq!(r.reward, 0.0);
            }
            prop_assert!(r.position.z >= cfg.min_altitude && r.position.z <= cfg.max_altitude);
        }
    }
}
