//! Acceptance suite: one test per shipped criterion, each emitting a single
//! PASS/FAIL line with the measured margin. The lines are written straight
//! to stdout so they stay visible under the harness's output capture.
//!
//! Criteria 1–7 run here; the full five-pool benchmark reproduction is a
//! long-running optional script (`scripts/table4_fivepool.sh`) excluded
//! from the test suite.

use std::io::Write;

use poolflow::config::SystemConfig;
use poolflow::dynamics::{self, State};
use poolflow::net::{
    self, forward, twopool_gradient_oracle, NetStructure, NetworkParams, TrainSample,
};
use poolflow::oracle::{
    self, brute_force_action_prob, enumerate_feasible_actions, TruncatedMDP,
};
use poolflow::policy::{self, PolicySpec};
use poolflow::presets;
use poolflow::trainer::{self, AtomicMode};
use poolflow::value::{self, FitSample, KbarEstimate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes one verdict line for a criterion and fails the test on FAIL.
fn conclude(criterion: &str, ok: bool, detail: String) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let line = format!("acceptance {criterion}: {verdict} — {detail}");
    {
        let mut out = std::io::stdout().lock();
        writeln!(out, "{line}").unwrap();
    }
    assert!(ok, "{line}");
}

/// Least-squares affine map a·p + b minimizing Σ (a·p + b − v)²; returns
/// (a, b).
fn affine_fit(pred: &[f64], target: &[f64]) -> (f64, f64) {
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = target.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (&p, &t) in pred.iter().zip(target) {
        cov += (p - mp) * (t - mt);
        var += (p - mp) * (p - mp);
    }
    let a = if var > 0.0 { cov / var } else { 0.0 };
    (a, mt - a * mp)
}

/// Aligned mean squared error after the affine fit.
fn aligned_mse(pred: &[f64], target: &[f64]) -> f64 {
    let (a, b) = affine_fit(pred, target);
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| (a * p + b - t).powi(2))
        .sum::<f64>()
        / pred.len() as f64
}

/// R² of the affine fit of `pred` onto `target`.
fn aligned_r2(pred: &[f64], target: &[f64]) -> f64 {
    let n = target.len() as f64;
    let mt = target.iter().sum::<f64>() / n;
    let sst: f64 = target.iter().map(|&t| (t - mt).powi(2)).sum();
    let ssr = aligned_mse(pred, target) * n;
    1.0 - ssr / sst
}

/// A randomized pre-action state with the given queue sizes and every
/// other pool left with at least Σq idle beds, so batched placement can
/// never hit a capacity cap.
fn non_binding_state<R: Rng>(
    cfg: &SystemConfig,
    queued: &[(usize, u32)],
    rng: &mut R,
) -> State {
    let j = cfg.j();
    let total: u32 = queued.iter().map(|&(_, q)| q).sum();
    let mut x: Vec<u32> = cfg
        .servers
        .iter()
        .map(|&n| rng.random_range(0..=n.saturating_sub(total)))
        .collect();
    for &(i, q) in queued {
        x[i] = cfg.servers[i] + q;
    }
    let h = rng.random_range(0..cfg.m());
    let mut y = vec![0u32; j];
    if cfg.m() > 1 {
        for p in 0..j {
            let cap = x[p].min(cfg.servers[p]);
            y[p] = rng.random_range(0..=cap);
        }
    }
    State { x, y, h }
}

#[test]
fn criterion_1_action_probability_equivalence() {
    let bases = [
        presets::by_name("twopool-midnight").unwrap().system,
        presets::by_name("twopool-8epoch").unwrap().system,
        presets::tiny_three_pool(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_gap: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for trial in 0..500 {
        let cfg = &bases[trial % bases.len()];
        let j = cfg.j();
        // One or two queued classes with Σq ≤ 8 and non-binding capacity.
        let n_queued = rng.random_range(1..=2.min(j));
        let min_n = cfg.servers.iter().copied().min().unwrap();
        let budget = 8.min(min_n);
        let mut classes: Vec<usize> = (0..j).collect();
        for k in 0..n_queued {
            let pick = rng.random_range(k..j);
            classes.swap(k, pick);
        }
        let mut queued = Vec::new();
        let mut left = budget;
        for &i in classes.iter().take(n_queued) {
            if left == 0 {
                break;
            }
            let q = rng.random_range(1..=left);
            queued.push((i, q));
            left -= q;
        }
        let s = non_binding_state(cfg, &queued, &mut rng);
        // A randomized network supplies the atomic distribution.
        let mut params =
            NetworkParams::new(NetStructure::FullySeparate, j, cfg.m(), &[6], &mut rng);
        let mut flat = params.to_flat();
        for v in flat.iter_mut() {
            *v += rng.random_range(-0.8..0.8);
        }
        params.load_flat(&flat).unwrap();
        let dist = forward(&params, &s, cfg).unwrap();
        let f = policy::sample_from_rows(&dist, &s, cfg, &mut rng);
        let closed = policy::action_log_prob(&dist, &s, &f, cfg).exp();
        let brute = brute_force_action_prob(&dist, &s, &f, cfg).unwrap();
        worst_gap = worst_gap.max((closed - brute).abs());
        let sum: f64 = enumerate_feasible_actions(&s, cfg)
            .unwrap()
            .iter()
            .map(|a| policy::action_log_prob(&dist, &s, a, cfg).exp())
            .sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
    }
    conclude(
        "criterion 1 (closed-form action probabilities)",
        worst_gap < 1e-12 && worst_sum < 1e-9,
        format!(
            "500 instances, max |closed − brute| {worst_gap:.2e} (tol 1e-12), \
             max |Σp − 1| {worst_sum:.2e} (tol 1e-9)"
        ),
    );
}

/// Training samples drawn under the old policy at randomized states, in
/// both batched and sequential atomic modes.
fn gradient_check_batch<R: Rng>(
    old: &NetworkParams,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Vec<TrainSample> {
    let spec = PolicySpec::Network(old.clone());
    let mut batch = Vec::new();
    while batch.len() < 64 {
        let j = cfg.j();
        let mut x = Vec::with_capacity(j);
        let mut y = Vec::with_capacity(j);
        for p in 0..j {
            let n = cfg.servers[p];
            let xp = rng.random_range(0..n + 6);
            x.push(xp);
            let cap = xp.min(n);
            y.push(if cap > 0 { rng.random_range(0..=cap) } else { 0 });
        }
        let s = State {
            x,
            y,
            h: rng.random_range(0..cfg.m()),
        };
        if (0..j).map(|i| s.queue(i, cfg)).sum::<u32>() == 0 {
            continue;
        }
        let sequential = batch.len() % 4 == 0;
        let (action, steps, kappa_old) = if sequential {
            let (f, steps) = policy::sample_action_sequential(&spec, &s, cfg, rng).unwrap();
            (f, steps, vec![vec![0.0; j]; j])
        } else {
            let f = policy::sample_action(&spec, &s, cfg, rng).unwrap();
            let kappa = forward(old, &s, cfg).unwrap().kappa;
            (f, Vec::new(), kappa)
        };
        batch.push(TrainSample {
            state: s,
            action,
            advantage: rng.random_range(-2.0..2.0),
            kappa_old,
            atomic_steps: steps,
        });
    }
    batch
}

#[test]
fn criterion_2_gradient_oracles() {
    let cfg = presets::by_name("twopool-8epoch").unwrap().system;
    let mut worst_fd: f64 = 0.0;
    for structure in [
        NetStructure::FullyConnected,
        NetStructure::FullySeparate,
        NetStructure::PartiallyShared,
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let mut params = NetworkParams::new(structure, 2, cfg.m(), &[5], &mut rng);
        let mut flat = params.to_flat();
        for (i, v) in flat.iter_mut().enumerate() {
            *v += 0.05 * (((i * 31) % 17) as f64 - 8.0) / 8.0;
        }
        params.load_flat(&flat).unwrap();
        // The generating policy sits slightly off the current one so the
        // ratios are nontrivial but well inside the clip band.
        let mut old = params.clone();
        let mut oflat = old.to_flat();
        for (i, v) in oflat.iter_mut().enumerate() {
            *v += 0.01 * ((i % 7) as f64 - 3.0) / 3.0;
        }
        old.load_flat(&oflat).unwrap();
        let batch = gradient_check_batch(&old, &cfg, &mut rng);
        let eps = 0.5;
        let (_, grad) = net::backward(&params, &batch, eps, &cfg).unwrap();
        let gflat = grad.to_flat();
        let base = params.to_flat();
        let n = base.len();
        let mut checked = 0;
        let mut idx = 3usize;
        while checked < 200 {
            let i = idx % n;
            idx = idx.wrapping_mul(2654435761).wrapping_add(17);
            let h = 1e-5;
            let eval = |delta: f64| {
                let mut shifted = params.clone();
                let mut sf = base.clone();
                sf[i] += delta;
                shifted.load_flat(&sf).unwrap();
                net::ppo_loss(&shifted, &batch, eps, &cfg).unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let denom = fd.abs().max(gflat[i].abs()).max(1e-3);
            worst_fd = worst_fd.max((fd - gflat[i]).abs() / denom);
            checked += 1;
        }
    }
    // Closed-form symmetric two-pool gradient against exhaustive summation
    // over all batched actions.
    let cfg = presets::by_name("twopool-midnight").unwrap().system;
    let mut sym = cfg.clone();
    sym.servers = vec![28, 28];
    let mu = sym.discharge_prob[0];
    let b = sym.route_cost(0, 1).unwrap();
    let c = sym.holding_cost[0];
    let beta3 = 0.63;
    let mut worst_oracle: f64 = 0.0;
    for (x1, x2, theta) in [
        (33u32, 20u32, [0.2, -0.01, 0.015]),
        (31, 27, [-0.4, 0.02, 0.0]),
        (34, 10, [0.15, 0.005, -0.01]),
        (36, 5, [0.0, 0.0, 0.0]),
    ] {
        let s = State {
            x: vec![x1, x2],
            y: vec![0, 0],
            h: 0,
        };
        let q1 = s.queue(0, &sym) as i64;
        let z = theta[0] + theta[1] * x1 as f64 + theta[2] * x2 as f64;
        let kappa = 1.0 / (1.0 + (-z).exp());
        let mut numeric = 0.0;
        for f12 in 0..=q1 {
            let mut pmf = 1.0;
            for t in 0..f12 {
                pmf *= (q1 - t) as f64 / (t + 1) as f64;
            }
            pmf *= kappa.powi(f12 as i32) * (1.0 - kappa).powi((q1 - f12) as i32);
            let fd = f12 as f64;
            let adv = (b - c) * fd
                + beta3
                    * (1.0 - mu).powi(2)
                    * (2.0 * fd * fd - 2.0 * (x1 as f64 - x2 as f64) * fd);
            numeric += pmf * (fd - q1 as f64 * kappa) * adv;
        }
        let g = twopool_gradient_oracle(theta, &s, beta3, &sym).unwrap();
        worst_oracle = worst_oracle.max((g[0] - numeric).abs());
    }
    conclude(
        "criterion 2 (gradient oracles)",
        worst_fd < 1e-5 && worst_oracle < 1e-10,
        format!(
            "600 finite-difference coordinates, max rel err {worst_fd:.2e} (tol 1e-5); \
             closed form vs exhaustive, max abs err {worst_oracle:.2e} (tol 1e-10)"
        ),
    );
}

#[test]
fn criterion_3_near_optimality_on_exact_mdp() {
    let preset = presets::by_name("twopool-midnight").unwrap();
    let cfg = preset.system;
    let mut tc = preset.train;
    tc.days_per_actor = 500;
    tc.actors = 4;
    tc.iterations = 15;
    tc.eval_days = 1000;
    tc.burn_in_days = 30;
    tc.warm_start_iters = 100;
    tc.hidden = vec![16];
    tc.learning_rate = 1e-2;
    tc.minibatch = 256;
    tc.train_epochs = 30;
    tc.clip_switch = 12;
    tc.atomic_mode = AtomicMode::Sequential;
    let outcome = trainer::train(&tc, &cfg, None, false).unwrap();
    let x_max = 70;
    let (gamma_star, _, _) = oracle::value_iteration_midnight(&cfg, x_max, 1e-9).unwrap();
    let mdp = TruncatedMDP::new(&cfg, x_max).unwrap();
    // Exact average cost of the trained stochastic policy; simulation
    // noise at this scale would swamp a 5% margin.
    let gamma_net = mdp
        .policy_eval_distribution(
            |x1, x2| {
                mdp.network_action_distribution(&outcome.params, &cfg, x1, x2)
                    .unwrap()
            },
            1e-8,
        )
        .unwrap();
    let ratio = gamma_net / gamma_star;
    conclude(
        "criterion 3 (near-optimal training on the exact model)",
        ratio <= 1.05,
        format!(
            "trained policy exact cost {gamma_net:.4} vs optimum {gamma_star:.4} \
             (ratio {ratio:.4}, tol 1.05)"
        ),
    );
}

/// Groups record states by (x₁, x₂), returning per-cell prediction means
/// under `predict` and visit counts.
fn cell_means<F: Fn(&State) -> f64>(
    records: &[trainer::Record],
    predict: F,
) -> Vec<((u32, u32), f64, usize)> {
    let mut cells: std::collections::HashMap<(u32, u32), (f64, usize)> =
        std::collections::HashMap::new();
    for rec in records {
        let key = (rec.state.x[0], rec.state.x[1]);
        let e = cells.entry(key).or_insert((0.0, 0));
        e.0 += predict(&rec.state);
        e.1 += 1;
    }
    let mut out: Vec<_> = cells
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64, n))
        .collect();
    // Most-visited first; deterministic tie-break on the cell key.
    out.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
    out
}

#[test]
fn criterion_4_basis_beats_polynomials() {
    let cfg = presets::by_name("twopool-midnight").unwrap().system;
    let traj = trainer::rollout(
        &PolicySpec::CompleteOverflow,
        &cfg,
        5000,
        50,
        11,
        AtomicMode::Batched,
        0,
        0,
    )
    .unwrap();
    let kbar =
        value::estimate_kbar(traj.records.iter().map(|r| (&r.state, &r.kappa)), &cfg).unwrap();
    let pools = value::build_all_pool_models(&cfg, &kbar).unwrap();
    let flen = value::feature_len(2);
    let mut proposed = Vec::with_capacity(traj.records.len());
    let mut poly = Vec::with_capacity(traj.records.len());
    for (idx, rec) in traj.records.iter().enumerate() {
        let next = traj
            .records
            .get(idx + 1)
            .map(|r| &r.state)
            .unwrap_or(&traj.terminal);
        let phi = value::features(&rec.state, &pools);
        let phi_next = value::features(next, &pools);
        let strip = |mut v: Vec<f64>| -> Vec<f64> {
            v.remove(1);
            v
        };
        proposed.push(FitSample {
            h: 0,
            phi: phi.clone(),
            phi_next: phi_next.clone(),
            cost: rec.cost,
        });
        poly.push(FitSample {
            h: 0,
            phi: strip(phi),
            phi_next: strip(phi_next),
            cost: rec.cost,
        });
    }
    let model_p = value::fit_epoch_models(&proposed, 1, flen).unwrap();
    let model_q = value::fit_epoch_models(&poly, 1, flen - 1).unwrap();
    let x_max = 70;
    let (_, v_star, _) = oracle::value_iteration_midnight(&cfg, x_max, 1e-9).unwrap();
    let score = |model: &value::EpochValueModel, strip: bool| -> f64 {
        let cells = cell_means(&traj.records, |s| {
            let mut phi = value::features(s, &pools);
            if strip {
                phi.remove(1);
            }
            model.value(0, &phi)
        });
        let top = cells.len().div_ceil(10);
        let mut pred = Vec::with_capacity(top);
        let mut target = Vec::with_capacity(top);
        for &((x1, x2), mean, _) in cells.iter().take(top) {
            pred.push(mean);
            target.push(v_star[x1.min(x_max) as usize][x2.min(x_max) as usize]);
        }
        aligned_mse(&pred, &target)
    };
    let mse_p = score(&model_p, false);
    let mse_q = score(&model_q, true);
    conclude(
        "criterion 4 (decomposition basis accuracy)",
        mse_p < mse_q,
        format!(
            "top-10% visited states, aligned MSE {mse_p:.3} with the pool-value \
             basis vs {mse_q:.3} polynomial-only"
        ),
    );
}

#[test]
fn criterion_5_no_overflow_decomposition() {
    // Moderate load keeps the joint-chain truncation tail negligible
    // against the per-pool chains (the comparison is then pure modeling).
    let mut cfg = presets::by_name("twopool-midnight").unwrap().system;
    cfg.daily_rate = vec![4.5, 5.0];
    cfg.arrivals = vec![vec![4.5], vec![5.0]];
    let kbar = KbarEstimate::wait_only(&cfg);
    let pools = value::build_all_pool_models(&cfg, &kbar).unwrap();
    let mdp = TruncatedMDP::new(&cfg, 90).unwrap();
    let (_, v) = mdp.policy_eval(|_, _| (0, 0), 1e-10).unwrap();
    let traj = trainer::rollout(
        &PolicySpec::NoOverflow,
        &cfg,
        5000,
        50,
        13,
        AtomicMode::Batched,
        0,
        0,
    )
    .unwrap();
    let cells = cell_means(&traj.records, |s| {
        pools
            .iter()
            .map(|p| p.value(s.h, s.x[p.pool], s.y[p.pool]))
            .sum()
    });
    let top = cells.len().div_ceil(4);
    let mut pred = Vec::with_capacity(top);
    let mut target = Vec::with_capacity(top);
    for &((x1, x2), mean, _) in cells.iter().take(top) {
        pred.push(mean);
        target.push(v[x1.min(90) as usize][x2.min(90) as usize]);
    }
    let r2 = aligned_r2(&pred, &target);
    conclude(
        "criterion 5 (no-overflow decomposition exactness)",
        r2 >= 0.999,
        format!("top-25% visited states, affine-aligned R² {r2:.6} (tol 0.999)"),
    );
}

#[test]
fn criterion_6_tenpool_benchmarks_and_training() {
    let preset = presets::by_name("tenpool").unwrap();
    let cfg = preset.system;
    let days = 2000;
    let eval = |spec: &PolicySpec| trainer::evaluate(spec, &cfg, days, 50, 1).unwrap().0;
    let no = eval(&PolicySpec::NoOverflow);
    let co = eval(&PolicySpec::CompleteOverflow);
    let empirical = PolicySpec::Empirical {
        night_epochs: policy::default_night_epochs(cfg.m()),
    };
    let emp = eval(&empirical);
    let ordering_ok = emp < no && emp < co;
    let anchor_ok = (emp - 390.0).abs() <= 39.0;
    let mut tc = preset.train;
    tc.iterations = 10;
    tc.days_per_actor = 1000;
    tc.actors = 4;
    tc.train_epochs = 30;
    let outcome = trainer::train(&tc, &cfg, None, false).unwrap();
    assert_eq!(tc.structure, NetStructure::PartiallyShared);
    let trained = eval(&PolicySpec::Network(outcome.params));
    let improvement = 1.0 - trained / emp;
    conclude(
        "criterion 6 (ten-pool benchmarks and training)",
        ordering_ok && anchor_ok && improvement >= 0.10,
        format!(
            "benchmarks no-overflow {no:.1} / complete-overflow {co:.1} / \
             empirical {emp:.1} (anchor 390 ±10%); trained policy {trained:.1}, \
             improvement {:.1}% (tol 10%)",
            improvement * 100.0
        ),
    );
}

#[test]
fn criterion_7_dynamics_invariants() {
    let mut detail = Vec::new();
    let mut ok = true;
    // Conservation and state invariants along simulated paths.
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for name in ["twopool-8epoch", "fivepool-balanced"] {
        let cfg = presets::by_name(name).unwrap().system;
        let spec = PolicySpec::Empirical {
            night_epochs: policy::default_night_epochs(cfg.m()),
        };
        let mut s = State::empty(cfg.j());
        for _ in 0..200 * cfg.m() {
            s.check(&cfg).unwrap();
            let f = policy::sample_action(&spec, &s, &cfg, &mut rng).unwrap();
            let post = dynamics::apply_action(&s, &f, &cfg).unwrap();
            let before: u32 = s.x.iter().sum();
            let after: u32 = post.x.iter().sum();
            if before != after {
                ok = false;
                detail.push(format!("{name}: routing changed the census"));
                break;
            }
            let (next, draw) = dynamics::step(&post, &cfg, &mut rng).unwrap();
            for p in 0..cfg.j() {
                if next.x[p] != post.x[p] + draw.arrivals[p] - draw.departures[p] {
                    ok = false;
                    detail.push(format!("{name}: pool {p} flow balance broken"));
                }
            }
            next.check(&cfg).unwrap();
            s = next;
        }
    }
    // Monte-Carlo moments of the exogenous draws, 4 standard errors.
    let cfg = presets::by_name("twopool-8epoch").unwrap().system;
    let n = 20_000;
    let mut worst_se: f64 = 0.0;
    for (h, y) in [(0usize, vec![0, 0]), (5, vec![6, 9])] {
        let post = State {
            x: vec![30, 25],
            y,
            h,
        };
        let mut sums = [[0.0f64; 3]; 2];
        for _ in 0..n {
            let draw = dynamics::sample_exogenous(&post, &cfg, &mut rng).unwrap();
            for (p, sum) in sums.iter_mut().enumerate() {
                sum[0] += draw.arrivals[p] as f64;
                sum[1] += draw.departures[p] as f64;
                sum[2] += draw.new_to_depart[p] as f64;
            }
        }
        for (p, sum) in sums.iter().enumerate() {
            let lambda = cfg.epoch_arrivals(p, h);
            let (mean_dep, var_dep, mean_mark, var_mark) = if h == 0 {
                let z = post.in_service(p, &cfg) as f64;
                let mu = cfg.discharge_prob[p];
                (0.0, 0.0, z * mu, z * mu * (1.0 - mu))
            } else {
                let prob = cfg.discharge_epoch_prob(p, h).unwrap();
                let yp = post.y[p] as f64;
                (yp * prob, yp * prob * (1.0 - prob), 0.0, 0.0)
            };
            let checks = [
                (sum[0] / n as f64, lambda, lambda),
                (sum[1] / n as f64, mean_dep, var_dep),
                (sum[2] / n as f64, mean_mark, var_mark),
            ];
            for (got, want, var) in checks {
                let se = (var / n as f64).sqrt().max(1e-12);
                let z = (got - want).abs() / se;
                if var > 0.0 {
                    worst_se = worst_se.max(z);
                }
                if var > 0.0 && z > 4.0 {
                    ok = false;
                    detail.push(format!(
                        "moment check failed at h={h}, pool {p}: {got:.4} vs {want:.4} ({z:.1} SE)"
                    ));
                }
            }
        }
    }
    // Poisson-equation residuals (build_pool_model verifies ≤ 1e-8
    // internally and errors otherwise).
    for name in ["twopool-8epoch", "fivepool-balanced"] {
        let cfg = presets::by_name(name).unwrap().system;
        if let Err(e) = value::build_all_pool_models(&cfg, &KbarEstimate::wait_only(&cfg)) {
            ok = false;
            detail.push(format!("{name}: {e}"));
        }
    }
    // Per-epoch advantage means vanish after normalization.
    let cfg = presets::by_name("twopool-8epoch").unwrap().system;
    let traj = trainer::rollout(
        &PolicySpec::CompleteOverflow,
        &cfg,
        500,
        20,
        17,
        AtomicMode::Batched,
        0,
        0,
    )
    .unwrap();
    let kbar =
        value::estimate_kbar(traj.records.iter().map(|r| (&r.state, &r.kappa)), &cfg).unwrap();
    let pools = value::build_all_pool_models(&cfg, &kbar).unwrap();
    let flen = value::feature_len(cfg.j());
    let samples: Vec<FitSample> = traj
        .records
        .iter()
        .enumerate()
        .map(|(idx, rec)| {
            let next = traj
                .records
                .get(idx + 1)
                .map(|r| &r.state)
                .unwrap_or(&traj.terminal);
            FitSample {
                h: rec.state.h,
                phi: value::features(&rec.state, &pools),
                phi_next: value::features(next, &pools),
                cost: rec.cost,
            }
        })
        .collect();
    let model = value::fit_epoch_models(&samples, cfg.m(), flen).unwrap();
    let mut advantages: Vec<f64> = traj
        .records
        .iter()
        .map(|rec| {
            let phi = value::features(&rec.state, &pools);
            let exp_phi =
                value::expected_features(&rec.state, &rec.action, &cfg, &pools).unwrap();
            value::raw_advantage(&model, rec.state.h, &phi, &exp_phi, rec.cost)
        })
        .collect();
    let epochs: Vec<usize> = traj.records.iter().map(|r| r.state.h).collect();
    value::normalize_per_epoch(&epochs, &mut advantages, cfg.m());
    let mut sums = vec![0.0f64; cfg.m()];
    let mut counts = vec![0usize; cfg.m()];
    for (&h, &a) in epochs.iter().zip(&advantages) {
        sums[h] += a;
        counts[h] += 1;
    }
    let worst_mean = (0..cfg.m())
        .filter(|&h| counts[h] > 0)
        .map(|h| (sums[h] / counts[h] as f64).abs())
        .fold(0.0f64, f64::max);
    if worst_mean > 1e-9 {
        ok = false;
        detail.push(format!("per-epoch advantage mean {worst_mean:.2e}"));
    }
    let summary = if detail.is_empty() {
        format!(
            "conservation, flow balance, moments (worst {worst_se:.2} SE, tol 4), \
             Poisson residuals ≤ 1e-8, advantage means ≤ 1e-9 (worst {worst_mean:.1e})"
        )
    } else {
        detail.join("; ")
    };
    conclude("criterion 7 (dynamics invariants)", ok, summary);
}
