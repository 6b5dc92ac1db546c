//! The outer training loop: parallel rollouts under a frozen policy,
//! data reuse across iterations, value fitting, normalized advantages,
//! minibatch Adam epochs over the clipped surrogate with a learning-rate
//! halving safeguard, clip scheduling, convergence detection, and
//! batch-means policy evaluation.
//!
//! Determinism contract: a full training run is a pure function of the
//! configs and the master seed. Actor streams use seeds derived by a
//! SplitMix64 mix of (seed, iteration, actor); trajectories are always
//! concatenated in actor order; gradient reduction order is fixed.

use std::collections::VecDeque;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::dynamics::{self, State};
use crate::net::{self, NetStructure, NetworkParams, OptimizerState, TrainSample};
use crate::policy::{self, PolicySpec};
use crate::value::{self, FitSample};
use crate::Error;

/// How atomic actions are issued within a decision epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtomicMode {
    /// All atomic actions drawn from the pre-action state (default).
    Batched,
    /// State updated after every atomic placement.
    Sequential,
}

/// The policy the network imitates before iteration 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitPolicy {
    /// Keep the zero-initialized uniform-over-feasible policy.
    Uniform,
    NoOverflow,
    CompleteOverflow,
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Outer iterations R.
    pub iterations: usize,
    /// Simulated days per actor per iteration T.
    pub days_per_actor: usize,
    /// Parallel rollout actors K.
    pub actors: usize,
    /// Surrogate minimization epochs per iteration E.
    pub train_epochs: usize,
    /// Clip ε for iterations before `clip_switch`.
    pub clip_initial: f64,
    /// Clip ε afterwards.
    pub clip_final: f64,
    pub clip_switch: usize,
    /// Data-reuse window W: merge this many previous iterations' data.
    pub reuse_window: usize,
    /// Convergence tolerance δ on consecutive training average costs.
    pub tol: f64,
    /// Days discarded at the start of every rollout.
    pub burn_in_days: usize,
    /// Days per evaluation run.
    pub eval_days: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub structure: NetStructure,
    pub hidden: Vec<usize>,
    pub init_policy: InitPolicy,
    pub warm_start_iters: usize,
    pub atomic_mode: AtomicMode,
}

impl TrainConfig {
    /// Clip parameter used at a given iteration.
    pub fn clip_at(&self, iteration: usize) -> f64 {
        if iteration < self.clip_switch {
            self.clip_initial
        } else {
            self.clip_final
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.days_per_actor == 0 || self.actors == 0 || self.train_epochs == 0 {
            return Err(Error::Train("T, K, E must all be at least 1".into()));
        }
        if self.tol <= 0.0 || self.clip_initial <= 0.0 || self.clip_final <= 0.0 {
            return Err(Error::Train("tolerances and clip sizes must be positive".into()));
        }
        if self.minibatch == 0 {
            return Err(Error::Train("minibatch must be at least 1".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer; the documented actor-seed splitter.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Seed for one actor's rollout stream at one iteration.
pub fn actor_seed(master: u64, iteration: usize, actor: usize) -> u64 {
    splitmix64(master ^ ((iteration as u64) << 32) ^ (actor as u64 + 1))
}

/// One decision-epoch record of a trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Record {
    pub state: State,
    pub action: crate::dynamics::SystemAction,
    pub cost: f64,
    /// κ matrix of the acting policy at the pre-action state (networks) or
    /// the realized placement fractions (benchmark policies).
    pub kappa: Vec<Vec<f64>>,
    /// Sequential-mode atomic record; empty in batched mode.
    pub atomic_steps: Vec<(usize, usize, f64)>,
}

/// One actor's simulated data for one iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<Record>,
    /// Pre-action state one epoch past the last record.
    pub terminal: State,
    pub iteration: usize,
    pub actor: usize,
    pub seed: u64,
}

fn recorded_kappa(
    policy: &PolicySpec,
    s: &State,
    f: &crate::dynamics::SystemAction,
    cfg: &SystemConfig,
) -> Result<Vec<Vec<f64>>, Error> {
    if matches!(policy, PolicySpec::Network(_)) {
        return Ok(policy::atomic_distribution(policy, s, cfg)?.kappa);
    }
    let j = cfg.j();
    let mut kappa = vec![vec![0.0; j]; j];
    for (i, row) in kappa.iter_mut().enumerate() {
        let q = s.queue(i, cfg);
        if q == 0 {
            row[i] = 1.0;
        } else {
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = f.f[i][k] as f64 / q as f64;
            }
        }
    }
    Ok(kappa)
}

/// Simulates `days` recorded days (after `burn_in` discarded days) under a
/// policy from an empty midnight start. Deterministic given the seed.
pub fn rollout(
    policy: &PolicySpec,
    cfg: &SystemConfig,
    days: usize,
    burn_in: usize,
    seed: u64,
    mode: AtomicMode,
    iteration: usize,
    actor: usize,
) -> Result<Trajectory, Error> {
    let m = cfg.m();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = State::empty(cfg.j());
    let total = (burn_in + days) * m;
    let skip = burn_in * m;
    let mut records = Vec::with_capacity(days * m);
    for t in 0..total {
        let (f, steps) = match mode {
            AtomicMode::Batched => (policy::sample_action(policy, &s, cfg, &mut rng)?, Vec::new()),
            AtomicMode::Sequential => policy::sample_action_sequential(policy, &s, cfg, &mut rng)?,
        };
        let g = dynamics::cost(&s, &f, cfg)?;
        let post = dynamics::apply_action(&s, &f, cfg)?;
        let record = if t >= skip {
            Some(Record {
                state: s.clone(),
                action: f.clone(),
                cost: g,
                kappa: recorded_kappa(policy, &s, &f, cfg)?,
                atomic_steps: steps,
            })
        } else {
            None
        };
        let (next, _) = dynamics::step(&post, cfg, &mut rng)?;
        if let Some(r) = record {
            records.push(r);
        }
        s = next;
    }
    Ok(Trajectory {
        records,
        terminal: s,
        iteration,
        actor,
        seed,
    })
}

/// Batch-means evaluation: mean daily cost over `days` post-burn-in days,
/// with a 95% half-width from 20 equal batches.
pub fn evaluate(
    policy: &PolicySpec,
    cfg: &SystemConfig,
    days: usize,
    burn_in: usize,
    seed: u64,
) -> Result<(f64, f64), Error> {
    const BATCHES: usize = 20;
    if days < BATCHES {
        return Err(Error::Train(format!(
            "evaluation needs at least {BATCHES} days, got {days}"
        )));
    }
    let m = cfg.m();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = State::empty(cfg.j());
    let used_days = days - days % BATCHES;
    let mut daily = Vec::with_capacity(used_days);
    for day in 0..burn_in + used_days {
        let mut day_cost = 0.0;
        for _ in 0..m {
            let f = policy::sample_action(policy, &s, cfg, &mut rng)?;
            day_cost += dynamics::cost(&s, &f, cfg)?;
            let post = dynamics::apply_action(&s, &f, cfg)?;
            let (next, _) = dynamics::step(&post, cfg, &mut rng)?;
            s = next;
        }
        if day >= burn_in {
            daily.push(day_cost);
        }
    }
    let per = used_days / BATCHES;
    let means: Vec<f64> = (0..BATCHES)
        .map(|b| daily[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    let half = 1.96 * (var / BATCHES as f64).sqrt();
    Ok((mean, half))
}

/// Per-iteration summary emitted by [`train`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    /// Mean daily cost of the fresh rollouts.
    pub train_cost: f64,
    pub eval_cost: f64,
    pub eval_halfwidth: f64,
    pub loss_before: f64,
    pub loss_after: f64,
    pub clip: f64,
    pub seconds: f64,
}

/// Training result: final parameters and the per-iteration reports.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub reports: Vec<IterationReport>,
}

/// Serialized resume state written after every iteration.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    next_iteration: usize,
    params: NetworkParams,
    opt: OptimizerState,
    /// Parameters that generated the still-reusable iterations' data.
    recent: Vec<(usize, NetworkParams)>,
    train_costs: Vec<f64>,
    reports: Vec<IterationReport>,
    initial_eval: f64,
}

fn collect_rollouts(
    params: &NetworkParams,
    tc: &TrainConfig,
    cfg: &SystemConfig,
    iteration: usize,
) -> Result<Vec<Trajectory>, Error> {
    let spec = PolicySpec::Network(params.clone());
    (0..tc.actors)
        .into_par_iter()
        .map(|a| {
            rollout(
                &spec,
                cfg,
                tc.days_per_actor,
                tc.burn_in_days,
                actor_seed(tc.seed, iteration, a),
                tc.atomic_mode,
                iteration,
                a,
            )
        })
        .collect()
}

fn shuffle<R: Rng>(idx: &mut [usize], rng: &mut R) {
    for i in (1..idx.len()).rev() {
        let k = rng.random_range(0..=i);
        idx.swap(i, k);
    }
}

fn fit_value_model(
    history: &VecDeque<(usize, NetworkParams, Vec<Trajectory>)>,
    cfg: &SystemConfig,
) -> Result<(value::EpochValueModel, Vec<value::PoolModel>), Error> {
    let records: Vec<&Record> = history
        .iter()
        .flat_map(|(_, _, trajs)| trajs.iter().flat_map(|t| t.records.iter()))
        .collect();
    let kbar = value::estimate_kbar(records.iter().map(|r| (&r.state, &r.kappa)), cfg)?;
    let pools = value::build_all_pool_models(cfg, &kbar)?;
    let fits: Vec<FitSample> = history
        .par_iter()
        .flat_map_iter(|(_, _, trajs)| trajs.iter())
        .flat_map_iter(|traj| {
            let pools = &pools;
            (0..traj.records.len()).map(move |t| {
                let rec = &traj.records[t];
                let next_state = if t + 1 < traj.records.len() {
                    &traj.records[t + 1].state
                } else {
                    &traj.terminal
                };
                FitSample {
                    h: rec.state.h,
                    phi: value::features(&rec.state, pools),
                    phi_next: value::features(next_state, pools),
                    cost: rec.cost,
                }
            })
        })
        .collect();
    let model = value::fit_epoch_models(&fits, cfg.m(), value::feature_len(cfg.j()))?;
    Ok((model, pools))
}

fn build_train_batch(
    history: &VecDeque<(usize, NetworkParams, Vec<Trajectory>)>,
    model: &value::EpochValueModel,
    pools: &[value::PoolModel],
    cfg: &SystemConfig,
) -> Result<Vec<TrainSample>, Error> {
    let records: Vec<&Record> = history
        .iter()
        .flat_map(|(_, _, trajs)| trajs.iter().flat_map(|t| t.records.iter()))
        .collect();
    let mut advantages: Vec<f64> = records
        .par_iter()
        .map(|rec| {
            let phi = value::features(&rec.state, pools);
            let exp_phi = value::expected_features(&rec.state, &rec.action, cfg, pools)?;
            let raw = value::raw_advantage(model, rec.state.h, &phi, &exp_phi, rec.cost);
            // Baseline at the wait-all action (a pure state function, so the
            // gradient stays unbiased): the value-fit residual enters the raw
            // advantage identically for every action at a state, and the
            // subtraction cancels it, leaving a clean action contrast.
            let wait = crate::dynamics::SystemAction::wait_all(&rec.state, cfg);
            let wait_cost = dynamics::cost(&rec.state, &wait, cfg)?;
            let wait_phi = value::expected_features(&rec.state, &wait, cfg, pools)?;
            let base = value::raw_advantage(model, rec.state.h, &phi, &wait_phi, wait_cost);
            Ok(raw - base)
        })
        .collect::<Result<Vec<f64>, Error>>()?;
    let epochs: Vec<usize> = records.iter().map(|r| r.state.h).collect();
    value::normalize_per_epoch(&epochs, &mut advantages, cfg.m());
    Ok(records
        .into_iter()
        .zip(advantages)
        .map(|(rec, adv)| TrainSample {
            state: rec.state.clone(),
            action: rec.action.clone(),
            advantage: adv,
            kappa_old: rec.kappa.clone(),
            atomic_steps: rec.atomic_steps.clone(),
        })
        .collect())
}

fn surrogate_epochs(
    params: &mut NetworkParams,
    opt: &mut OptimizerState,
    batch: &[TrainSample],
    eps: f64,
    tc: &TrainConfig,
    cfg: &SystemConfig,
    iteration: usize,
) -> Result<(f64, f64), Error> {
    let loss_before = net::ppo_loss(params, batch, eps, cfg)?;
    // The safeguard below halves the rate while retrying a failed pass;
    // start every iteration back at the configured rate so one bad
    // iteration cannot permanently slow the rest of the run.
    opt.lr = tc.learning_rate;
    let max_attempts = 8;
    for attempt in 0..max_attempts {
        let snapshot_params = params.clone();
        let snapshot_opt = opt.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(
            tc.seed ^ 0x5e6e_a7d1 ^ ((iteration as u64) << 24) ^ (attempt as u64),
        ));
        let mut idx: Vec<usize> = (0..batch.len()).collect();
        for _ in 0..tc.train_epochs {
            shuffle(&mut idx, &mut rng);
            for chunk in idx.chunks(tc.minibatch) {
                let mb: Vec<TrainSample> = chunk.iter().map(|&i| batch[i].clone()).collect();
                let (_, grad) = net::backward(params, &mb, eps, cfg)?;
                net::adam_step(params, &grad, opt)?;
            }
        }
        let loss_after = net::ppo_loss(params, batch, eps, cfg)?;
        if loss_after <= loss_before + 1e-9 {
            return Ok((loss_before, loss_after));
        }
        // Safeguard: undo the pass and retry with a halved learning rate.
        *params = snapshot_params;
        *opt = snapshot_opt;
        opt.lr *= 0.5;
    }
    Ok((loss_before, loss_before))
}

fn write_checkpoint(dir: &Path, ck: &Checkpoint) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string(ck)?;
    std::fs::write(dir.join("checkpoint.json"), text)?;
    Ok(())
}

fn append_report(dir: &Path, report: &IterationReport) -> Result<(), Error> {
    use std::io::Write;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("reports.jsonl"))?;
    writeln!(file, "{}", serde_json::to_string(report)?)?;
    Ok(())
}

fn write_summary_csv(dir: &Path, reports: &[IterationReport]) -> Result<(), Error> {
    let mut text =
        String::from("iteration,train_cost,eval_cost,eval_halfwidth,loss_before,loss_after,clip,seconds\n");
    for r in reports {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.iteration,
            r.train_cost,
            r.eval_cost,
            r.eval_halfwidth,
            r.loss_before,
            r.loss_after,
            r.clip,
            r.seconds
        ));
    }
    std::fs::write(dir.join("summary.csv"), text)?;
    Ok(())
}

/// Warm-starts the network toward the configured initial policy by
/// cross-entropy imitation on states sampled under that policy.
fn apply_warm_start(
    params: &mut NetworkParams,
    tc: &TrainConfig,
    cfg: &SystemConfig,
) -> Result<(), Error> {
    let target_policy = match tc.init_policy {
        InitPolicy::Uniform => return Ok(()),
        InitPolicy::NoOverflow => PolicySpec::NoOverflow,
        InitPolicy::CompleteOverflow => PolicySpec::CompleteOverflow,
    };
    if tc.warm_start_iters == 0 {
        return Ok(());
    }
    let traj = rollout(
        &target_policy,
        cfg,
        120,
        tc.burn_in_days.min(30),
        splitmix64(tc.seed ^ 0x3a9d),
        AtomicMode::Batched,
        0,
        usize::MAX,
    )?;
    let mut samples = Vec::new();
    for rec in &traj.records {
        let queued: u32 = (0..cfg.j()).map(|i| rec.state.queue(i, cfg)).sum();
        if queued == 0 {
            continue;
        }
        let mut target = policy::atomic_distribution(&target_policy, &rec.state, cfg)?;
        // Mix the (typically deterministic) target with uniform over the
        // feasible pools: imitating a point mass would saturate the logits
        // and leave the network with vanishing gradients.
        for (i, row) in target.kappa.iter_mut().enumerate() {
            if rec.state.queue(i, cfg) == 0 {
                continue;
            }
            let feasible = dynamics::feasible_pools(&rec.state, i, cfg);
            let u = 0.1 / feasible.len() as f64;
            row.iter_mut().for_each(|v| *v *= 0.9);
            for p in feasible {
                row[p] += u;
            }
        }
        samples.push((rec.state.clone(), target.kappa));
        if samples.len() >= 2000 {
            break;
        }
    }
    if samples.is_empty() {
        return Ok(());
    }
    net::warm_start(params, &samples, cfg, tc.warm_start_iters, 0.02)?;
    Ok(())
}

/// Runs the full training loop. With an output directory, per-iteration
/// JSONL reports, weight checkpoints, and a final CSV summary are written;
/// with `resume`, a previous checkpoint in the directory is continued
/// bit-identically (reusable trajectories are re-rolled from their
/// recorded generating parameters and derived seeds).
pub fn train(
    tc: &TrainConfig,
    cfg: &SystemConfig,
    out_dir: Option<&Path>,
    resume: bool,
) -> Result<TrainOutcome, Error> {
    tc.validate()?;
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let mut history: VecDeque<(usize, NetworkParams, Vec<Trajectory>)> = VecDeque::new();
    let mut reports: Vec<IterationReport>;
    let mut train_costs: Vec<f64>;
    let mut params: NetworkParams;
    let mut opt: OptimizerState;
    let start_iteration;
    let initial_eval;

    let checkpoint_path = out_dir.map(|d| d.join("checkpoint.json"));
    let resuming = resume
        && checkpoint_path
            .as_ref()
            .map(|p| p.exists())
            .unwrap_or(false);
    if resuming {
        let text = std::fs::read_to_string(checkpoint_path.as_ref().unwrap())?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        params = ck.params;
        params.check(cfg)?;
        opt = ck.opt;
        reports = ck.reports;
        train_costs = ck.train_costs;
        start_iteration = ck.next_iteration;
        initial_eval = ck.initial_eval;
        for (it, gen_params) in ck.recent {
            let trajs = collect_rollouts(&gen_params, tc, cfg, it)?;
            history.push_back((it, gen_params, trajs));
        }
    } else {
        let mut init_rng = ChaCha8Rng::seed_from_u64(splitmix64(tc.seed ^ 0x1217));
        params = NetworkParams::new(tc.structure, cfg.j(), cfg.m(), &tc.hidden, &mut init_rng);
        apply_warm_start(&mut params, tc, cfg)?;
        opt = OptimizerState::new(tc.learning_rate, params.n_params());
        reports = Vec::new();
        train_costs = Vec::new();
        start_iteration = 0;
        initial_eval = evaluate(
            &PolicySpec::Network(params.clone()),
            cfg,
            tc.eval_days.max(20),
            tc.burn_in_days,
            splitmix64(tc.seed ^ 0xe0a1),
        )?
        .0;
    }

    for r in start_iteration..tc.iterations {
        let started = Instant::now();
        let eps = tc.clip_at(r);
        let trajs = collect_rollouts(&params, tc, cfg, r)?;
        let fresh_cost: f64 = trajs
            .iter()
            .flat_map(|t| t.records.iter())
            .map(|rec| rec.cost)
            .sum::<f64>()
            / (tc.actors * tc.days_per_actor) as f64;
        history.push_back((r, params.clone(), trajs));
        while history.len() > tc.reuse_window + 1 {
            history.pop_front();
        }
        let (model, pools) = fit_value_model(&history, cfg)?;
        let batch = build_train_batch(&history, &model, &pools, cfg)?;
        let (loss_before, loss_after) =
            surrogate_epochs(&mut params, &mut opt, &batch, eps, tc, cfg, r)?;
        let (eval_cost, eval_halfwidth) = evaluate(
            &PolicySpec::Network(params.clone()),
            cfg,
            tc.eval_days.max(20),
            tc.burn_in_days,
            splitmix64(tc.seed ^ 0xe0a1),
        )?;
        if eval_cost > 10.0 * initial_eval.max(1.0) {
            return Err(Error::Train(format!(
                "diverged at iteration {r}: evaluated cost {eval_cost} vs initial {initial_eval}"
            )));
        }
        let report = IterationReport {
            iteration: r,
            train_cost: fresh_cost,
            eval_cost,
            eval_halfwidth,
            loss_before,
            loss_after,
            clip: eps,
            seconds: started.elapsed().as_secs_f64(),
        };
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            append_report(dir, &report)?;
            std::fs::write(
                dir.join(format!("weights_{r:04}.json")),
                params.to_json(),
            )?;
        }
        reports.push(report);
        train_costs.push(fresh_cost);
        if let Some(dir) = out_dir {
            let recent: Vec<(usize, NetworkParams)> = history
                .iter()
                .map(|(it, p, _)| (*it, p.clone()))
                .collect();
            write_checkpoint(
                dir,
                &Checkpoint {
                    next_iteration: r + 1,
                    params: params.clone(),
                    opt: opt.clone(),
                    recent,
                    train_costs: train_costs.clone(),
                    reports: reports.clone(),
                    initial_eval,
                },
            )?;
        }
        let n = train_costs.len();
        if n >= 2 && (train_costs[n - 1] - train_costs[n - 2]).abs() < tc.tol {
            break;
        }
    }
    if let Some(dir) = out_dir {
        write_summary_csv(dir, &reports)?;
    }
    Ok(TrainOutcome { params, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn quick_config(seed: u64) -> TrainConfig {
        TrainConfig {
            iterations: 2,
            days_per_actor: 40,
            actors: 2,
            train_epochs: 3,
            clip_initial: 0.5,
            clip_final: 0.2,
            clip_switch: 6,
            reuse_window: 2,
            tol: 1e-9,
            burn_in_days: 10,
            eval_days: 60,
            minibatch: 256,
            learning_rate: 1e-3,
            seed,
            structure: NetStructure::FullyConnected,
            hidden: vec![8],
            init_policy: InitPolicy::Uniform,
            warm_start_iters: 0,
            atomic_mode: AtomicMode::Batched,
        }
    }

    #[test]
    fn rollout_is_deterministic() {
        let cfg = presets::by_name("twopool-8epoch").unwrap().system;
        let a = rollout(
            &PolicySpec::CompleteOverflow,
            &cfg,
            30,
            5,
            99,
            AtomicMode::Batched,
            0,
            0,
        )
        .unwrap();
        let b = rollout(
            &PolicySpec::CompleteOverflow,
            &cfg,
            30,
            5,
            99,
            AtomicMode::Batched,
            0,
            0,
        )
        .unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.state, rb.state);
            assert_eq!(ra.action, rb.action);
            assert_eq!(ra.cost, rb.cost);
        }
        assert_eq!(a.terminal, b.terminal);
    }

    #[test]
    fn zero_arrivals_mean_zero_cost() {
        let mut cfg = presets::by_name("twopool-8epoch").unwrap().system;
        for row in cfg.arrivals.iter_mut() {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        cfg.daily_rate = vec![0.0, 0.0];
        let traj = rollout(
            &PolicySpec::NoOverflow,
            &cfg,
            10,
            2,
            1,
            AtomicMode::Batched,
            0,
            0,
        )
        .unwrap();
        assert!(traj.records.iter().all(|r| r.cost == 0.0));
        let (mean, half) = evaluate(&PolicySpec::NoOverflow, &cfg, 40, 2, 1).unwrap();
        assert_eq!(mean, 0.0);
        assert_eq!(half, 0.0);
    }

    #[test]
    fn evaluate_is_deterministic() {
        let cfg = presets::by_name("twopool-midnight").unwrap().system;
        let a = evaluate(&PolicySpec::CompleteOverflow, &cfg, 100, 10, 7).unwrap();
        let b = evaluate(&PolicySpec::CompleteOverflow, &cfg, 100, 10, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_iterations_return_initial_params() {
        let cfg = presets::by_name("twopool-midnight").unwrap().system;
        let mut tc = quick_config(5);
        tc.iterations = 0;
        let out = train(&tc, &cfg, None, false).unwrap();
        assert!(out.reports.is_empty());
        // Matches a freshly initialized network from the same seed.
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(tc.seed ^ 0x1217));
        let fresh = NetworkParams::new(tc.structure, 2, 1, &tc.hidden, &mut rng);
        assert_eq!(out.params.to_flat(), fresh.to_flat());
    }

    #[test]
    fn short_run_trains_and_respects_safeguard() {
        let cfg = presets::by_name("twopool-midnight").unwrap().system;
        let tc = quick_config(11);
        let out = train(&tc, &cfg, None, false).unwrap();
        assert_eq!(out.reports.len(), 2);
        for r in &out.reports {
            assert!(r.eval_halfwidth >= 0.0);
            assert!(
                r.loss_after <= r.loss_before + 1e-6,
                "loss increased: {} -> {}",
                r.loss_before,
                r.loss_after
            );
        }
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = presets::by_name("twopool-midnight").unwrap().system;
        let tc = quick_config(13);
        let a = train(&tc, &cfg, None, false).unwrap();
        let b = train(&tc, &cfg, None, false).unwrap();
        assert_eq!(a.params.to_flat(), b.params.to_flat());
        for (ra, rb) in a.reports.iter().zip(&b.reports) {
            assert_eq!(ra.train_cost, rb.train_cost);
            assert_eq!(ra.eval_cost, rb.eval_cost);
        }
    }

    #[test]
    fn checkpoint_resume_is_bit_identical() {
        let cfg = presets::by_name("twopool-midnight").unwrap().system;
        let base = std::env::temp_dir().join(format!("poolflow-resume-{}", std::process::id()));
        let dir_full = base.join("full");
        let dir_split = base.join("split");
        let _ = std::fs::remove_dir_all(&base);

        let mut tc = quick_config(17);
        tc.iterations = 3;
        let full = train(&tc, &cfg, Some(&dir_full), false).unwrap();

        let mut tc_first = tc.clone();
        tc_first.iterations = 1;
        train(&tc_first, &cfg, Some(&dir_split), false).unwrap();
        let resumed = train(&tc, &cfg, Some(&dir_split), true).unwrap();

        assert_eq!(full.params.to_flat(), resumed.params.to_flat());
        assert_eq!(full.reports.len(), resumed.reports.len());
        for (ra, rb) in full.reports.iter().zip(&resumed.reports) {
            assert_eq!(ra.train_cost, rb.train_cost);
            assert_eq!(ra.eval_cost, rb.eval_cost);
            assert_eq!(ra.loss_after, rb.loss_after);
        }
        let _ = std::fs::remove_dir_all(&base);
    }
}
