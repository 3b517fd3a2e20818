use crowdprice::cli::{generate_scenario, GenerationSpec};
use crowdprice::dynamics::{env_step, EnvConfig, Environment, PricingEnvironment};
use crowdprice::follower::best_response;
use crowdprice::model::Scenario;
use proptest::prelude::*;

fn scenario() -> impl Strategy<Value = Scenario> {
    (1usize..7, any::<u64>()).prop_map(|(n_mus, seed)| {
        let spec = GenerationSpec {
            n_mus,
            ..GenerationSpec::default()
        };
        generate_scenario(&spec, seed).unwrap()
    })
}

fn env_config() -> impl Strategy<Value = EnvConfig> {
    (1usize..5, 0.001..10.0f64, 0.5..2.0f64).prop_map(|(history_len, reward_scale, p_max)| EnvConfig {
        history_len,
        reward_scale,
        p_max,
        ..EnvConfig::default()
    })
}

/// Actions deliberately spill outside `[0, p_max]`.
fn actions(n: usize, steps: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..steps)
        .map(|_| (0..n).map(|_| rng.random_range(-0.5..2.5)).collect())
        .collect()
}

fn play(s: &Scenario, cfg: &EnvConfig, seed: u64, acts: &[Vec<f64>]) -> Vec<String> {
    let mut env = Environment::new(s.clone(), cfg.clone(), seed).unwrap().record_transitions();
    for a in acts {
        env.step(a).unwrap();
    }
    env.take_log()
        .iter()
        .enumerate()
        .map(|(k, t)| t.csv_row(0, k).join(","))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn identical_inputs_give_identical_transitions(s in scenario(), cfg in env_config(), seed in any::<u64>(), a in any::<u64>()) {
        let acts = actions(s.len(), 20, a);
        prop_assert_eq!(play(&s, &cfg, seed, &acts), play(&s, &cfg, seed, &acts));
    }

    #[test]
    fn history_window_tracks_the_newest_round(s in scenario(), cfg in env_config(), seed in any::<u64>(), a in any::<u64>()) {
        let mut env = Environment::new(s.clone(), cfg.clone(), seed).unwrap();
        prop_assert_eq!(env.observation_dim(), 2 * s.len() * cfg.history_len);
        for act in actions(s.len(), 10, a) {
            let before = env.state().clone();
            let fb = env.step(&act).unwrap();
            let state = env.state();
            prop_assert_eq!(state.len(), cfg.history_len);
            let clamped: Vec<f64> = act.iter().map(|p| p.clamp(0.0, cfg.p_max)).collect();
            prop_assert_eq!(&state.newest().prices, &clamped);
            for (n, mu) in s.mus().iter().enumerate() {
                prop_assert_eq!(state.newest().allocations[n], best_response(mu, clamped[n]).unwrap().x_star);
            }
            prop_assert_eq!(fb.clamped, act.iter().zip(&clamped).any(|(a, c)| a != c));
            prop_assert_eq!(&fb.observation, &state.flatten());
            // Older rounds shift by one.
            let old: Vec<_> = before.rounds().skip(1).collect();
            let new: Vec<_> = state.rounds().take(cfg.history_len - 1).collect();
            prop_assert_eq!(old, new);
        }
    }

    #[test]
    fn reward_is_the_scaled_platform_payoff(s in scenario(), cfg in env_config(), seed in any::<u64>(), a in any::<u64>()) {
        let env = Environment::new(s.clone(), cfg.clone(), seed).unwrap();
        let mut state = env.state().clone();
        for act in actions(s.len(), 10, a) {
            let t = env_step(&s, &cfg, &state, &act).unwrap();
            prop_assert_eq!(t.reward, cfg.reward_scale * t.sp_payoff);
            if t.sp_payoff != 0.0 {
                prop_assert!((t.reward / t.sp_payoff - cfg.reward_scale).abs() <= 4.0 * f64::EPSILON * cfg.reward_scale);
            }
            state = t.next_state;
        }
    }
}
