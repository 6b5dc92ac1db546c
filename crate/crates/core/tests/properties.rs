//! Property-based invariants over randomized states, actions, and draws:
//! whatever the inputs, routing conserves the census, transitions keep the
//! state well-formed, costs are non-negative, and probabilities are
//! normalized.

use poolflow::config::SystemConfig;
use poolflow::dynamics::{self, State};
use poolflow::net::{forward, NetStructure, NetworkParams};
use poolflow::policy::{self, PolicySpec};
use poolflow::presets;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn configs() -> impl Strategy<Value = SystemConfig> {
    prop_oneof![
        Just(presets::by_name("twopool-midnight").unwrap().system),
        Just(presets::by_name("twopool-8epoch").unwrap().system),
        Just(presets::tiny_three_pool()),
    ]
}

/// A well-formed pre-action state for the config: x_p up to N_p + 8 and
/// y_p within the in-service count (zero when m = 1).
fn states(cfg: SystemConfig) -> impl Strategy<Value = (SystemConfig, State)> {
    let j = cfg.j();
    let m = cfg.m();
    let servers = cfg.servers.clone();
    let xs: Vec<_> = servers.iter().map(|&n| 0..n + 8).collect();
    (xs, 0..m, proptest::collection::vec(0.0f64..1.0, j)).prop_map(
        move |(x, h, yfrac)| {
            let y: Vec<u32> = (0..j)
                .map(|p| {
                    if m == 1 {
                        0
                    } else {
                        let cap = x[p].min(servers[p]);
                        (yfrac[p] * (cap + 1) as f64) as u32
                    }
                })
                .collect();
            (cfg.clone(), State { x, y, h })
        },
    )
}

fn cfg_states() -> impl Strategy<Value = (SystemConfig, State, u64)> {
    configs()
        .prop_flat_map(states)
        .prop_flat_map(|(cfg, s)| (Just(cfg), Just(s), any::<u64>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sampled_actions_conserve_the_census((cfg, s, seed) in cfg_states()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = policy::sample_action(&PolicySpec::CompleteOverflow, &s, &cfg, &mut rng).unwrap();
        dynamics::check_feasible(&s, &f, &cfg).unwrap();
        let post = dynamics::apply_action(&s, &f, &cfg).unwrap();
        prop_assert_eq!(
            s.x.iter().sum::<u32>(),
            post.x.iter().sum::<u32>(),
            "routing changed the total customer count"
        );
        post.check(&cfg).unwrap();
    }

    #[test]
    fn transitions_stay_well_formed((cfg, s, seed) in cfg_states()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = dynamics::SystemAction::wait_all(&s, &cfg);
        let post = dynamics::apply_action(&s, &f, &cfg).unwrap();
        let (next, draw) = dynamics::step(&post, &cfg, &mut rng).unwrap();
        next.check(&cfg).unwrap();
        prop_assert_eq!(next.h, (s.h + 1) % cfg.m());
        for p in 0..cfg.j() {
            prop_assert_eq!(
                next.x[p],
                post.x[p] + draw.arrivals[p] - draw.departures[p],
                "pool flow balance"
            );
        }
    }

    #[test]
    fn costs_are_nonnegative_and_zero_only_when_idle((cfg, s, seed) in cfg_states()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = policy::sample_action(&PolicySpec::CompleteOverflow, &s, &cfg, &mut rng).unwrap();
        let g = dynamics::cost(&s, &f, &cfg).unwrap();
        prop_assert!(g >= 0.0);
        let queued: u32 = (0..cfg.j()).map(|i| s.queue(i, &cfg)).sum();
        if queued == 0 {
            prop_assert_eq!(g, 0.0, "no queue but positive cost");
        }
    }

    #[test]
    fn network_rows_are_distributions((cfg, s, seed) in cfg_states()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = NetworkParams::new(
            NetStructure::PartiallyShared,
            cfg.j(),
            cfg.m(),
            &[4],
            &mut rng,
        );
        let mut flat = params.to_flat();
        for (i, v) in flat.iter_mut().enumerate() {
            *v += 0.3 * (((seed as usize).wrapping_add(i * 97) % 13) as f64 - 6.0) / 6.0;
        }
        params.load_flat(&flat).unwrap();
        let dist = forward(&params, &s, &cfg).unwrap();
        for (i, row) in dist.kappa.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12, "row {} sums to {}", i, sum);
            for (k, &p) in row.iter().enumerate() {
                prop_assert!(p >= 0.0);
                if p > 0.0 && k != i {
                    prop_assert!(
                        dynamics::feasible_pools(&s, i, &cfg).contains(&k),
                        "mass {} on infeasible pool {} for class {}",
                        p, k, i
                    );
                }
            }
        }
    }

    #[test]
    fn config_json_round_trips(cfg in configs()) {
        let text = cfg.to_json();
        let back = SystemConfig::from_json(&text).unwrap();
        prop_assert_eq!(back.to_json(), text);
    }
}
