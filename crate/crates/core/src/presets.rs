//! Built-in benchmark instances: two-pool, five-pool, ten-pool, and
//! twenty-pool hospital overflow networks, each bundled with baseline
//! training hyperparameters.
//!
//! Within-day shapes (arrival profile and discharge CDF) are synthetic but
//! follow the usual inpatient pattern: arrivals peak in the early afternoon
//! and discharges concentrate around mid-day. All multi-epoch presets use
//! m = 8 three-hour epochs with epoch 0 at midnight.

use crate::config::{Route, SystemConfig, SCHEMA_VERSION};
use crate::net::NetStructure;
use crate::trainer::{AtomicMode, InitPolicy, TrainConfig};

/// A named benchmark instance with baseline training hyperparameters.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub system: SystemConfig,
    pub train: TrainConfig,
}

/// All preset names, in canonical order.
pub const NAMES: [&str; 6] = [
    "twopool-midnight",
    "twopool-8epoch",
    "fivepool-balanced",
    "fivepool-unbalanced",
    "tenpool",
    "twentypool",
];

/// Fraction of the daily arrival rate landing in each three-hour epoch:
/// 40% in the early afternoon (epochs 3 and 4), the rest spread evenly.
const ARRIVAL_SHAPE_M8: [f64; 8] = [0.075, 0.075, 0.10, 0.20, 0.20, 0.125, 0.125, 0.10];

/// Discharge CDF at the nine epoch boundaries: no departures overnight,
/// 70% of discharges between 12:00 and 18:00 (epochs 4 and 5).
const DISCHARGE_CDF_M8: [f64; 9] = [0.0, 0.0, 0.07, 0.14, 0.21, 0.56, 0.91, 0.96, 1.0];

/// Five-pool route pattern: (preferred, secondary 1, secondary 2) per class.
const FIVEPOOL_ROUTES: [(usize, usize, usize); 5] =
    [(4, 1, 2), (2, 3, 4), (1, 0, 4), (1, 0, 2), (0, 1, 2)];

fn arrivals_m8(rates: &[f64]) -> Vec<Vec<f64>> {
    rates
        .iter()
        .map(|&r| ARRIVAL_SHAPE_M8.iter().map(|&f| f * r).collect())
        .collect()
}

/// Splits a department's total daily rate across its pools in proportion
/// to their server counts.
fn split_rate(total: f64, servers: &[u32]) -> Vec<f64> {
    let sum: f64 = servers.iter().map(|&n| n as f64).sum();
    servers.iter().map(|&n| total * n as f64 / sum).collect()
}

fn baseline_train(classes: usize) -> TrainConfig {
    TrainConfig {
        iterations: 30,
        days_per_actor: 10_000,
        actors: 10,
        train_epochs: 15,
        clip_initial: 0.5,
        clip_final: 0.2,
        clip_switch: 10,
        reuse_window: 3,
        // Daily-cost noise at desk-scale rollout budgets is far above 0.1;
        // a loose tolerance here would stop on chance ties between
        // consecutive iterations rather than on convergence.
        tol: 1e-3,
        burn_in_days: 50,
        eval_days: 1000,
        minibatch: 1024,
        learning_rate: 3e-3,
        seed: 2024,
        structure: NetStructure::PartiallyShared,
        hidden: vec![if classes >= 10 { 64 } else { 34 }],
        init_policy: InitPolicy::CompleteOverflow,
        warm_start_iters: 200,
        atomic_mode: AtomicMode::Sequential,
    }
}

fn twopool(name: &str, m: usize) -> SystemConfig {
    let (holding, b) = if m == 1 { (24.0, 90.0) } else { (3.0, 12.0) };
    let (arrivals, cdf) = if m == 1 {
        (vec![vec![6.25], vec![6.25]], vec![vec![0.0, 1.0]; 2])
    } else {
        (
            arrivals_m8(&[6.25, 6.25]),
            vec![DISCHARGE_CDF_M8.to_vec(); 2],
        )
    };
    SystemConfig {
        schema: SCHEMA_VERSION,
        name: name.into(),
        classes: 2,
        servers: vec![28, 32],
        epochs_per_day: m,
        daily_rate: vec![6.25, 6.25],
        arrivals,
        discharge_prob: vec![0.25, 0.25],
        discharge_cdf: cdf,
        routes: vec![
            vec![Route { to: 1, cost: b }],
            vec![Route { to: 0, cost: b }],
        ],
        holding_cost: vec![holding, holding],
    }
}

fn fivepool(name: &str, servers: Vec<u32>) -> SystemConfig {
    let rates = split_rate(70.0, &servers);
    let routes = FIVEPOOL_ROUTES
        .iter()
        .map(|&(p, s1, s2)| {
            vec![
                Route { to: p, cost: 30.0 },
                Route { to: s1, cost: 35.0 },
                Route { to: s2, cost: 35.0 },
            ]
        })
        .collect();
    SystemConfig {
        schema: SCHEMA_VERSION,
        name: name.into(),
        classes: 5,
        servers,
        epochs_per_day: 8,
        daily_rate: rates.clone(),
        arrivals: arrivals_m8(&rates),
        discharge_prob: vec![0.25; 5],
        discharge_cdf: vec![DISCHARGE_CDF_M8.to_vec(); 5],
        routes,
        holding_cost: vec![6.0; 5],
    }
}

/// Ten pools: a VIP department (pools 0..5) over a regular department
/// (pools 5..10), both using the five-pool route pattern internally. VIP
/// classes may also overflow into the regular department (never the
/// reverse): first the regular twin of their own pool and of their
/// preferred pool, then the regular twins of their secondary pools.
fn tenpool() -> SystemConfig {
    let vip_servers = [39u32, 43, 46, 41, 41];
    let reg_servers = [81u32, 85, 88, 83, 83];
    let servers: Vec<u32> = vip_servers.iter().chain(&reg_servers).copied().collect();
    let mut rates = split_rate(50.0, &vip_servers);
    rates.extend(split_rate(90.0, &reg_servers));
    let mut routes = Vec::with_capacity(10);
    for (i, &(p, s1, s2)) in FIVEPOOL_ROUTES.iter().enumerate() {
        routes.push(vec![
            Route { to: p, cost: 25.0 },
            Route { to: s1, cost: 30.0 },
            Route { to: s2, cost: 30.0 },
            Route { to: i + 5, cost: 35.0 },
            Route { to: p + 5, cost: 35.0 },
            Route { to: s1 + 5, cost: 40.0 },
            Route { to: s2 + 5, cost: 40.0 },
        ]);
    }
    for &(p, s1, s2) in FIVEPOOL_ROUTES.iter() {
        routes.push(vec![
            Route { to: p + 5, cost: 25.0 },
            Route { to: s1 + 5, cost: 30.0 },
            Route { to: s2 + 5, cost: 30.0 },
        ]);
    }
    let mut holding = vec![7.0; 5];
    holding.extend(vec![6.0; 5]);
    SystemConfig {
        schema: SCHEMA_VERSION,
        name: "tenpool".into(),
        classes: 10,
        servers,
        epochs_per_day: 8,
        daily_rate: rates.clone(),
        arrivals: arrivals_m8(&rates),
        discharge_prob: vec![0.25; 10],
        discharge_cdf: vec![DISCHARGE_CDF_M8.to_vec(); 10],
        routes,
        holding_cost: holding,
    }
}

/// Twenty pools: two ten-pool hospitals (pools 0..10 and 10..20). Each
/// class keeps its in-hospital routes and may additionally overflow to the
/// mirrored pools of the other hospital, at higher cost tiers, in the same
/// priority order.
fn twentypool() -> SystemConfig {
    let servers: Vec<u32> = vec![
        32, 36, 39, 34, 34, 74, 78, 81, 76, 76, // hospital A
        46, 50, 53, 48, 48, 88, 92, 95, 90, 90, // hospital B
    ];
    let mut rates = Vec::with_capacity(20);
    for hospital in 0..2 {
        let base = hospital * 10;
        rates.extend(split_rate(50.0, &servers[base..base + 5]));
        rates.extend(split_rate(90.0, &servers[base + 5..base + 10]));
    }
    // Cost tiers: in-hospital preferred/secondary/own-twin/preferred-twin,
    // then the same four tiers mirrored into the other hospital.
    let tiers = [25.0, 30.0, 35.0, 49.0, 40.0, 45.0, 50.0, 55.0];
    let mirror = |p: usize| (p + 10) % 20;
    let mut routes = Vec::with_capacity(20);
    for hospital in 0..2 {
        let base = hospital * 10;
        for (i, &(p, s1, s2)) in FIVEPOOL_ROUTES.iter().enumerate() {
            let (p, s1, s2) = (base + p, base + s1, base + s2);
            routes.push(vec![
                Route { to: p, cost: tiers[0] },
                Route { to: s1, cost: tiers[1] },
                Route { to: s2, cost: tiers[1] },
                Route { to: base + i + 5, cost: tiers[2] },
                Route { to: p + 5, cost: tiers[2] },
                Route { to: s1 + 5, cost: tiers[3] },
                Route { to: s2 + 5, cost: tiers[3] },
                Route { to: mirror(p), cost: tiers[4] },
                Route { to: mirror(s1), cost: tiers[5] },
                Route { to: mirror(s2), cost: tiers[5] },
                Route { to: mirror(base + i + 5), cost: tiers[6] },
                Route { to: mirror(p + 5), cost: tiers[6] },
                Route { to: mirror(s1 + 5), cost: tiers[7] },
                Route { to: mirror(s2 + 5), cost: tiers[7] },
            ]);
        }
        for &(p, s1, s2) in FIVEPOOL_ROUTES.iter() {
            let (p, s1, s2) = (base + p + 5, base + s1 + 5, base + s2 + 5);
            routes.push(vec![
                Route { to: p, cost: tiers[0] },
                Route { to: s1, cost: tiers[1] },
                Route { to: s2, cost: tiers[1] },
                Route { to: mirror(p), cost: tiers[4] },
                Route { to: mirror(s1), cost: tiers[5] },
                Route { to: mirror(s2), cost: tiers[5] },
            ]);
        }
    }
    let mut holding = Vec::with_capacity(20);
    for _ in 0..2 {
        holding.extend(vec![7.0; 5]);
        holding.extend(vec![6.0; 5]);
    }
    SystemConfig {
        schema: SCHEMA_VERSION,
        name: "twentypool".into(),
        classes: 20,
        servers,
        epochs_per_day: 8,
        daily_rate: rates.clone(),
        arrivals: arrivals_m8(&rates),
        discharge_prob: vec![0.25; 20],
        discharge_cdf: vec![DISCHARGE_CDF_M8.to_vec(); 20],
        routes,
        holding_cost: holding,
    }
}

/// Looks up a preset by name; see [`NAMES`].
pub fn by_name(name: &str) -> Option<Preset> {
    let system = match name {
        "twopool-midnight" => twopool(name, 1),
        "twopool-8epoch" => twopool(name, 8),
        "fivepool-balanced" => fivepool(name, vec![63; 5]),
        "fivepool-unbalanced" => fivepool(name, vec![60, 64, 67, 62, 62]),
        "tenpool" => tenpool(),
        "twentypool" => twentypool(),
        _ => return None,
    };
    let classes = system.classes;
    let static_name = NAMES.iter().find(|&&n| n == name)?;
    Some(Preset {
        name: static_name,
        system,
        train: baseline_train(classes),
    })
}

/// Small single-epoch three-pool instance used throughout the test suite:
/// generous capacity, light traffic, and a full cyclic route structure so
/// every pool is reachable from every class.
pub fn tiny_three_pool() -> SystemConfig {
    SystemConfig {
        schema: SCHEMA_VERSION,
        name: "tiny-three-pool".into(),
        classes: 3,
        servers: vec![4, 4, 4],
        epochs_per_day: 1,
        daily_rate: vec![1.0, 1.0, 1.0],
        arrivals: vec![vec![1.0]; 3],
        discharge_prob: vec![0.5; 3],
        discharge_cdf: vec![vec![0.0, 1.0]; 3],
        routes: vec![
            vec![Route { to: 1, cost: 5.0 }, Route { to: 2, cost: 7.0 }],
            vec![Route { to: 2, cost: 5.0 }, Route { to: 0, cost: 7.0 }],
            vec![Route { to: 0, cost: 5.0 }, Route { to: 1, cost: 7.0 }],
        ],
        holding_cost: vec![2.0; 3],
    }
}
