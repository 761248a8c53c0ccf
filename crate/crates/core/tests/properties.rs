//! Randomized invariant checks over generated instances, policies, and data.

use proptest::prelude::*;

use s2rlab::dataset::TransitionDataset;
use s2rlab::instances::make_random_lowrank;
use s2rlab::mdp::{
    feature_covariance, max_achievable_return, occupancy_measures, optimal_policy_vi,
    policy_value_exact, q_values_exact, sample_trajectory, tv_gap,
};
use s2rlab::policy::Policy;
use s2rlab::regression::{fqi, BufferInit};
use s2rlab::rng::StreamKey;
use s2rlab::transfer::{exploration_transfer, zeta_greedy_protocol, TrialKey};

#[derive(Debug, Clone)]
struct Shape {
    ns: usize,
    na: usize,
    hm: usize,
    d: usize,
    eps: f64,
    seed: u64,
}

fn shape_strategy() -> impl Strategy<Value = Shape> {
    (2usize..=6, 2usize..=3, 2usize..=6, 0.0f64..0.2, any::<u64>()).prop_map(
        |(ns, na, hm, eps, seed)| Shape { ns, na, hm, d: 2 + (seed as usize % 3).min(ns * na - 2), eps, seed },
    )
}

fn random_policy(shape: (usize, usize, usize), seed: u64) -> Policy {
    let (hm, ns, na) = shape;
    let mut s = StreamKey::new(seed, 0, 0).stream(1);
    let mut table = vec![vec![vec![0.0; na]; ns]; hm];
    for per_s in table.iter_mut() {
        for row in per_s.iter_mut() {
            let mut sum = 0.0;
            for p in row.iter_mut() {
                *p = -(1.0 - s.next_f64()).ln();
                sum += *p;
            }
            for p in row.iter_mut() {
                *p /= sum;
            }
        }
    }
    Policy::StochasticTable(table)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, .. ProptestConfig::default() })]

    #[test]
    fn value_transfer_bounded_by_kernel_gap(shape in shape_strategy()) {
        let b = make_random_lowrank(shape.ns, shape.na, shape.hm, shape.d, shape.eps, shape.seed).unwrap();
        let real = &b.reals[0];
        let (eps, _) = tv_gap(&b.sim, real).unwrap();
        prop_assert!(eps <= b.declared_eps_sim + 1e-12);
        let (pi_sim, _, _) = optimal_policy_vi(&b.sim, None).unwrap();
        let (_, _, v_star) = optimal_policy_vi(real, None).unwrap();
        let (v_pi, _) = policy_value_exact(real, &pi_sim).unwrap();
        let h = real.horizon as f64;
        prop_assert!(v_star - v_pi <= 2.0 * h * h * eps + 1e-9);
    }

    #[test]
    fn q_and_visitation_gaps_bounded(shape in shape_strategy(), pseed in any::<u64>()) {
        let b = make_random_lowrank(shape.ns, shape.na, shape.hm, shape.d, shape.eps, shape.seed).unwrap();
        let real = &b.reals[0];
        let (eps, _) = tv_gap(&b.sim, real).unwrap();
        let h = real.horizon as f64;
        let pol = random_policy((real.horizon, real.num_states, real.num_actions), pseed);
        let r_max = max_achievable_return(&b.sim, real);
        let qa = q_values_exact(&b.sim, &pol).unwrap();
        let qb = q_values_exact(real, &pol).unwrap();
        for (ta, tb) in qa.values.iter().zip(&qb.values) {
            for (ra, rb) in ta.iter().zip(tb) {
                for (&x, &y) in ra.iter().zip(rb) {
                    prop_assert!((x - y).abs() <= h * r_max * eps + 1e-9);
                }
            }
        }
        let wa = occupancy_measures(&b.sim, &pol).unwrap();
        let wb = occupancy_measures(real, &pol).unwrap();
        for hh in 1..=real.horizon {
            let all: Vec<(usize, usize)> = (0..real.num_states)
                .flat_map(|s| (0..real.num_actions).map(move |a| (s, a)))
                .collect();
            // Largest one-sided deviation over subsets = sum of positive parts.
            let pos: f64 = all
                .iter()
                .map(|&(s, a)| (wa.w[hh - 1][s][a] - wb.w[hh - 1][s][a]).max(0.0))
                .sum();
            prop_assert!(pos <= h * eps + 1e-9);
        }
    }

    #[test]
    fn mixture_covariance_is_weighted_average(shape in shape_strategy(), s1 in any::<u64>(), s2 in any::<u64>(), w in 0.0f64..=1.0) {
        let b = make_random_lowrank(shape.ns, shape.na, shape.hm, shape.d, shape.eps, shape.seed).unwrap();
        let sim = &b.sim;
        let dims = (sim.horizon, sim.num_states, sim.num_actions);
        let pa = random_policy(dims, s1);
        let pb = random_policy(dims, s2);
        let mix = Policy::Mixture(vec![(w, pa.clone()), (1.0 - w, pb.clone())]);
        for h in 1..=sim.horizon {
            let ca = feature_covariance(sim, &pa, h).unwrap();
            let cb = feature_covariance(sim, &pb, h).unwrap();
            let cm = feature_covariance(sim, &mix, h).unwrap();
            for i in 0..ca.lambda.len() {
                for j in 0..ca.lambda.len() {
                    let expect = w * ca.lambda[i][j] + (1.0 - w) * cb.lambda[i][j];
                    prop_assert!((cm.lambda[i][j] - expect).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn value_equals_occupancy_weighted_reward(shape in shape_strategy(), pseed in any::<u64>()) {
        let b = make_random_lowrank(shape.ns, shape.na, shape.hm, shape.d, shape.eps, shape.seed).unwrap();
        let real = &b.reals[0];
        let pol = random_policy((real.horizon, real.num_states, real.num_actions), pseed);
        let (v0, _) = policy_value_exact(real, &pol).unwrap();
        let w = occupancy_measures(real, &pol).unwrap();
        let mut total = 0.0;
        for h in 1..=real.horizon {
            for s in 0..real.num_states {
                for a in 0..real.num_actions {
                    total += w.w[h - 1][s][a] * real.reward(h, s, a);
                }
            }
        }
        prop_assert!((total - v0).abs() < 1e-9);
    }

    #[test]
    fn fqi_output_is_clipped(shape in shape_strategy(), n in 1u64..40) {
        let b = make_random_lowrank(shape.ns, shape.na, shape.hm, shape.d, shape.eps, shape.seed).unwrap();
        let real = &b.reals[0];
        let uniform = Policy::uniform(real.horizon, real.num_states, real.num_actions);
        let mut data = TransitionDataset::new(real.num_states, real.num_actions, real.horizon);
        for e in 1..=n {
            data.push_trajectory(&sample_trajectory(real, &uniform, &StreamKey::new(shape.seed, 9, e)).unwrap());
        }
        let f = fqi(&data, 0.0, real.v_max());
        for per_s in &f.values {
            for row in per_s {
                for &v in row {
                    prop_assert!((0.0..=real.v_max() + 1e-12).contains(&v));
                }
            }
        }
    }

    #[test]
    fn dataset_csv_round_trips(shape in shape_strategy(), n in 1u64..20) {
        let b = make_random_lowrank(shape.ns, shape.na, shape.hm, shape.d, shape.eps, shape.seed).unwrap();
        let real = &b.reals[0];
        let uniform = Policy::uniform(real.horizon, real.num_states, real.num_actions);
        let mut data = TransitionDataset::new(real.num_states, real.num_actions, real.horizon);
        for e in 1..=n {
            data.push_trajectory(&sample_trajectory(real, &uniform, &StreamKey::new(shape.seed, 2, e)).unwrap());
        }
        let text = data.to_csv();
        let back = TransitionDataset::from_csv(&text).unwrap();
        prop_assert_eq!(text, back.to_csv());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, .. ProptestConfig::default() })]

    #[test]
    fn protocols_respect_real_episode_budgets(t in 8u64..200, seed in any::<u64>()) {
        let b = make_random_lowrank(3, 2, 4, 2, 0.05, seed).unwrap();
        let real = &b.reals[0];
        let key = TrialKey::new(seed, 0);
        let zg = zeta_greedy_protocol(real, 0.2, t, &key, 5, BufferInit::OnePerSah, 1000).unwrap();
        prop_assert_eq!(zg.real_episodes, t);
        prop_assert_eq!(zg.sim_episodes, 0);
        let et = exploration_transfer(&b.sim, real, 0.05, 0.05, t, &key, 1000).unwrap();
        prop_assert_eq!(et.real_episodes, t / 2 + 2 * (t / 4));
        // Probe counters never decrease and never exceed the totals.
        for rec in [&zg, &et] {
            let mut prev = 0;
            for p in &rec.probes {
                prop_assert!(p.episode >= prev && p.episode <= rec.real_episodes);
                prev = p.episode;
                prop_assert_eq!(p.real_steps, p.episode * real.horizon as u64);
            }
        }
    }
}
