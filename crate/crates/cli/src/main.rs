//! Command-line entry point: preset lookup, config loading, and the
//! simulate/train/compare/oracle/inspect-policy commands with CSV and
//! JSON-lines artifact emission.
//!
//! Exit codes: 0 on success, 2 for invalid configuration or arguments,
//! 3 for numerical failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use poolflow::config::SystemConfig;
use poolflow::dynamics;
use poolflow::net::NetworkParams;
use poolflow::oracle::TruncatedMDP;
use poolflow::policy::{self, PolicySpec};
use poolflow::presets;
use poolflow::trainer::{self, AtomicMode, TrainConfig};
use poolflow::Error;

#[derive(Parser)]
#[command(name = "poolflow", about = "Periodic overflow-routing simulator and PPO trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Instance {
    /// Path to a system config JSON file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name (see `poolflow preset --list`).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a policy and write per-epoch series and a summary.
    Simulate {
        #[command(flatten)]
        instance: Instance,
        /// Policy: no-overflow | complete-overflow | midnight | empirical |
        /// path to a weights JSON file.
        #[arg(long, default_value = "no-overflow")]
        policy: String,
        #[arg(long, default_value_t = 1000)]
        days: usize,
        /// Days discarded before statistics are collected.
        #[arg(long, default_value_t = 50)]
        burn_in: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory for series.csv and summary.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a policy network with PPO.
    Train {
        #[command(flatten)]
        instance: Instance,
        #[arg(long)]
        seed: Option<u64>,
        /// Outer training iterations.
        #[arg(long)]
        iterations: Option<usize>,
        /// Simulated days per actor per iteration.
        #[arg(long)]
        days: Option<usize>,
        /// Parallel rollout actors.
        #[arg(long)]
        actors: Option<usize>,
        /// Surrogate minimization epochs per iteration.
        #[arg(long)]
        epochs: Option<usize>,
        /// Initial clip size (the final size keeps its configured value).
        #[arg(long)]
        clip: Option<f64>,
        /// Data-reuse window in iterations.
        #[arg(long)]
        reuse: Option<usize>,
        /// Reduced desk-scale profile: T=500, K=4, R=15, small evaluations.
        #[arg(long)]
        quick: bool,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Output directory for checkpoints and reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate several policies side by side.
    Compare {
        #[command(flatten)]
        instance: Instance,
        /// Comma-separated policy list (names or weight-file paths).
        #[arg(long, default_value = "no-overflow,complete-overflow,empirical")]
        policies: String,
        #[arg(long, default_value_t = 2000)]
        days: usize,
        #[arg(long, default_value_t = 50)]
        burn_in: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a two-pool single-epoch instance exactly.
    Oracle {
        #[command(flatten)]
        instance: Instance,
        /// Span-seminorm stopping tolerance.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Truncation bound on each pool's customer count.
        #[arg(long, default_value_t = 60)]
        x_max: u32,
        /// Output CSV path for the value/policy table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump a network policy's atomic distribution over a 2-D state grid.
    InspectPolicy {
        #[command(flatten)]
        instance: Instance,
        /// Weights JSON file.
        #[arg(long)]
        weights: PathBuf,
        /// Decision epoch h.
        #[arg(long, default_value_t = 0)]
        epoch: usize,
        /// Customer class i whose atomic distribution is inspected.
        #[arg(long, default_value_t = 0)]
        class: usize,
        /// Destination pool j; κ(j|s,i) is written per grid point.
        #[arg(long)]
        to: usize,
        /// Grid over the class's primary-pool count: "lo:hi".
        #[arg(long, default_value = "0:50")]
        rows: String,
        /// Grid over the destination pool's count: "lo:hi".
        #[arg(long, default_value = "0:50")]
        cols: String,
        /// Output CSV path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print or export a built-in preset's system config.
    Preset {
        /// Preset name.
        #[arg(long, required_unless_present = "list")]
        name: Option<String>,
        /// List all preset names.
        #[arg(long)]
        list: bool,
        /// Output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_instance(instance: &Instance) -> Result<(SystemConfig, Option<presets::Preset>), Error> {
    match (&instance.config, &instance.preset) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)?;
            Ok((SystemConfig::from_json(&text)?, None))
        }
        (None, Some(name)) => {
            let preset = presets::by_name(name).ok_or_else(|| {
                Error::Config(vec![format!(
                    "unknown preset {name:?}; available: {}",
                    presets::NAMES.join(", ")
                )])
            })?;
            Ok((preset.system.clone(), Some(preset)))
        }
        _ => Err(Error::Config(vec![
            "exactly one of --config and --preset is required".into(),
        ])),
    }
}

fn resolve_policy(name: &str, cfg: &SystemConfig) -> Result<PolicySpec, Error> {
    Ok(match name {
        "no-overflow" => PolicySpec::NoOverflow,
        "complete-overflow" => PolicySpec::CompleteOverflow,
        "midnight" => PolicySpec::Midnight,
        "empirical" => PolicySpec::Empirical {
            night_epochs: policy::default_night_epochs(cfg.m()),
        },
        path => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Config(vec![format!("cannot read weights file {path:?}: {e}")])
            })?;
            PolicySpec::Network(NetworkParams::from_json(&text, cfg)?)
        }
    })
}

struct PolicyStats {
    mean: f64,
    half: f64,
    overflow_per_day: f64,
    trajectory: trainer::Trajectory,
}

/// Simulates `days` recorded days and reports the mean daily cost with a
/// 95% batch-means half-width (20 batches) plus the mean number of
/// overflow placements per day.
fn policy_stats(
    spec: &PolicySpec,
    cfg: &SystemConfig,
    days: usize,
    burn_in: usize,
    seed: u64,
) -> Result<PolicyStats, Error> {
    const BATCHES: usize = 20;
    if days < BATCHES {
        return Err(Error::Config(vec![format!(
            "need at least {BATCHES} days, got {days}"
        )]));
    }
    let used = days - days % BATCHES;
    let traj = trainer::rollout(spec, cfg, used, burn_in, seed, AtomicMode::Batched, 0, 0)?;
    let m = cfg.m();
    let mut daily = vec![0.0; used];
    let mut overflow = 0u64;
    for (t, rec) in traj.records.iter().enumerate() {
        daily[t / m] += rec.cost;
        for (i, row) in rec.action.f.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j {
                    overflow += v as u64;
                }
            }
        }
    }
    let per = used / BATCHES;
    let means: Vec<f64> = (0..BATCHES)
        .map(|b| daily[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    Ok(PolicyStats {
        mean,
        half: 1.96 * (var / BATCHES as f64).sqrt(),
        overflow_per_day: overflow as f64 / used as f64,
        trajectory: traj,
    })
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            fs::write(path, text)?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_simulate(
    instance: &Instance,
    policy: &str,
    days: usize,
    burn_in: usize,
    seed: u64,
    out: &Option<PathBuf>,
) -> Result<(), Error> {
    let (cfg, _) = load_instance(instance)?;
    let spec = resolve_policy(policy, &cfg)?;
    let stats = policy_stats(&spec, &cfg, days, burn_in, seed)?;
    let j = cfg.j();
    let m = cfg.m();
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut series = String::from("day,epoch,cost,overflow");
        for p in 0..j {
            series.push_str(&format!(",x{p},queue{p}"));
        }
        series.push('\n');
        for (t, rec) in stats.trajectory.records.iter().enumerate() {
            let overflow: u32 = rec
                .action
                .f
                .iter()
                .enumerate()
                .flat_map(|(i, row)| {
                    row.iter()
                        .enumerate()
                        .filter(move |&(k, _)| k != i)
                        .map(|(_, &v)| v)
                })
                .sum();
            series.push_str(&format!("{},{},{},{}", t / m, rec.state.h, rec.cost, overflow));
            for p in 0..j {
                series.push_str(&format!(",{},{}", rec.state.x[p], rec.state.queue(p, &cfg)));
            }
            series.push('\n');
        }
        fs::write(dir.join("series.csv"), series)?;
        let summary = format!(
            "mean_daily_cost,halfwidth_95,overflow_per_day\n{},{},{}\n",
            stats.mean, stats.half, stats.overflow_per_day
        );
        fs::write(dir.join("summary.csv"), summary)?;
    }
    println!(
        "policy={policy} days={days} mean_daily_cost={:.4} ±{:.4} overflow_per_day={:.4}",
        stats.mean, stats.half, stats.overflow_per_day
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    instance: &Instance,
    seed: Option<u64>,
    iterations: Option<usize>,
    days: Option<usize>,
    actors: Option<usize>,
    epochs: Option<usize>,
    clip: Option<f64>,
    reuse: Option<usize>,
    quick: bool,
    resume: bool,
    out: &Option<PathBuf>,
) -> Result<(), Error> {
    let (cfg, preset) = load_instance(instance)?;
    let mut tc: TrainConfig = match preset {
        Some(p) => p.train,
        None => presets::by_name("twopool-8epoch").expect("built-in preset").train,
    };
    if quick {
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
    }
    if let Some(v) = seed {
        tc.seed = v;
    }
    if let Some(v) = iterations {
        tc.iterations = v;
    }
    if let Some(v) = days {
        tc.days_per_actor = v;
    }
    if let Some(v) = actors {
        tc.actors = v;
    }
    if let Some(v) = epochs {
        tc.train_epochs = v;
    }
    if let Some(v) = clip {
        tc.clip_initial = v;
        tc.clip_final = tc.clip_final.min(v);
    }
    if let Some(v) = reuse {
        tc.reuse_window = v;
    }
    if tc.iterations == 0 {
        // Initial-policy evaluation only.
        let params = {
            let mut rng = rand_seed(tc.seed);
            NetworkParams::new(tc.structure, cfg.j(), cfg.m(), &tc.hidden, &mut rng)
        };
        let (mean, half) = trainer::evaluate(
            &PolicySpec::Network(params),
            &cfg,
            tc.eval_days.max(20),
            tc.burn_in_days,
            tc.seed,
        )?;
        println!("initial policy: eval_cost={mean:.4} ±{half:.4}");
        return Ok(());
    }
    let outcome = trainer::train(&tc, &cfg, out.as_deref(), resume)?;
    for r in &outcome.reports {
        println!(
            "iter {:>3}  train {:>10.4}  eval {:>10.4} ±{:<8.4} loss {:>9.6} -> {:>9.6}  eps {:.2}  {:.1}s",
            r.iteration,
            r.train_cost,
            r.eval_cost,
            r.eval_halfwidth,
            r.loss_before,
            r.loss_after,
            r.clip,
            r.seconds
        );
    }
    if let Some(last) = outcome.reports.last() {
        println!("final eval_cost={:.4} ±{:.4}", last.eval_cost, last.eval_halfwidth);
    }
    Ok(())
}

fn rand_seed(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn cmd_compare(
    instance: &Instance,
    policies: &str,
    days: usize,
    burn_in: usize,
    seed: u64,
    out: &Option<PathBuf>,
) -> Result<(), Error> {
    let (cfg, _) = load_instance(instance)?;
    let names: Vec<&str> = policies.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        return Err(Error::Config(vec!["--policies is empty".into()]));
    }
    let mut rows = Vec::new();
    for name in &names {
        let spec = resolve_policy(name, &cfg)?;
        let stats = policy_stats(&spec, &cfg, days, burn_in, seed)?;
        rows.push((name.to_string(), stats.mean, stats.half, stats.overflow_per_day));
    }
    let best = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap();
    let mut text = String::from("policy,mean_daily_cost,halfwidth_95,overflow_per_day,is_min\n");
    for (i, (name, mean, half, ov)) in rows.iter().enumerate() {
        text.push_str(&format!(
            "{name},{mean},{half},{ov},{}\n",
            if i == best { 1 } else { 0 }
        ));
    }
    write_or_print(out, &text)?;
    if out.is_some() {
        println!(
            "best policy: {} (mean daily cost {:.4})",
            rows[best].0, rows[best].1
        );
    }
    Ok(())
}

fn cmd_oracle(
    instance: &Instance,
    tol: f64,
    x_max: u32,
    out: &Option<PathBuf>,
) -> Result<(), Error> {
    let (cfg, _) = load_instance(instance)?;
    let mdp = TruncatedMDP::new(&cfg, x_max)?;
    let (gamma, v, pi) = mdp.value_iteration(tol)?;
    println!("gamma_star={gamma:.10}");
    if let Some(path) = out {
        let mut text = String::from("x1,x2,v,f12,f21\n");
        for (x1, row) in v.iter().enumerate() {
            for (x2, &val) in row.iter().enumerate() {
                let (f12, f21) = pi[x1][x2];
                text.push_str(&format!("{x1},{x2},{val},{f12},{f21}\n"));
            }
        }
        write_or_print(&Some(path.clone()), &text)?;
    }
    Ok(())
}

fn parse_range(text: &str) -> Result<(u32, u32), Error> {
    let parts: Vec<&str> = text.split(':').collect();
    let parse = |s: &str| {
        s.parse::<u32>()
            .map_err(|e| Error::Config(vec![format!("bad range {text:?}: {e}")]))
    };
    match parts.as_slice() {
        [lo, hi] => {
            let (lo, hi) = (parse(lo)?, parse(hi)?);
            if lo > hi {
                return Err(Error::Config(vec![format!("empty range {text:?}")]));
            }
            Ok((lo, hi))
        }
        _ => Err(Error::Config(vec![format!(
            "range must be \"lo:hi\", got {text:?}"
        )])),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_inspect_policy(
    instance: &Instance,
    weights: &Path,
    epoch: usize,
    class: usize,
    to: usize,
    rows: &str,
    cols: &str,
    out: &Option<PathBuf>,
) -> Result<(), Error> {
    let (cfg, _) = load_instance(instance)?;
    let j = cfg.j();
    if class >= j || to >= j || epoch >= cfg.m() {
        return Err(Error::Config(vec![format!(
            "class {class}, pool {to}, epoch {epoch} out of range for J={j}, m={}",
            cfg.m()
        )]));
    }
    let text = fs::read_to_string(weights)
        .map_err(|e| Error::Config(vec![format!("cannot read weights file {weights:?}: {e}")]))?;
    let params = NetworkParams::from_json(&text, &cfg)?;
    let spec = PolicySpec::Network(params);
    let (row_lo, row_hi) = parse_range(rows)?;
    let (col_lo, col_hi) = parse_range(cols)?;
    // The grid varies the class's own pool count (rows) and the destination
    // pool count (cols); all other pools sit exactly at capacity and the
    // to-depart counts are zero.
    let mut csv = String::from("x_own,x_to,kappa\n");
    for x_own in row_lo..=row_hi {
        for x_to in col_lo..=col_hi {
            let mut x: Vec<u32> = cfg.servers.clone();
            x[class] = x_own;
            x[to] = x_to;
            let s = dynamics::State {
                x,
                y: vec![0; j],
                h: epoch,
            };
            let dist = policy::atomic_distribution(&spec, &s, &cfg)?;
            csv.push_str(&format!("{x_own},{x_to},{}\n", dist.kappa[class][to]));
        }
    }
    write_or_print(out, &csv)
}

fn cmd_preset(name: &Option<String>, list: bool, out: &Option<PathBuf>) -> Result<(), Error> {
    if list {
        for n in presets::NAMES {
            println!("{n}");
        }
        return Ok(());
    }
    let name = name.as_deref().expect("clap enforces --name without --list");
    let preset = presets::by_name(name).ok_or_else(|| {
        Error::Config(vec![format!(
            "unknown preset {name:?}; available: {}",
            presets::NAMES.join(", ")
        )])
    })?;
    let mut text = preset.system.to_json();
    text.push('\n');
    write_or_print(out, &text)
}

fn run(cli: Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Simulate {
            instance,
            policy,
            days,
            burn_in,
            seed,
            out,
        } => cmd_simulate(instance, policy, *days, *burn_in, *seed, out),
        Command::Train {
            instance,
            seed,
            iterations,
            days,
            actors,
            epochs,
            clip,
            reuse,
            quick,
            resume,
            out,
        } => cmd_train(
            instance, *seed, *iterations, *days, *actors, *epochs, *clip, *reuse, *quick,
            *resume, out,
        ),
        Command::Compare {
            instance,
            policies,
            days,
            burn_in,
            seed,
            out,
        } => cmd_compare(instance, policies, *days, *burn_in, *seed, out),
        Command::Oracle {
            instance,
            tol,
            x_max,
            out,
        } => cmd_oracle(instance, *tol, *x_max, out),
        Command::InspectPolicy {
            instance,
            weights,
            epoch,
            class,
            to,
            rows,
            cols,
            out,
        } => cmd_inspect_policy(instance, weights, *epoch, *class, *to, rows, cols, out),
        Command::Preset { name, list, out } => cmd_preset(name, *list, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Config(_) | Error::Io(_) => 2u8,
                _ => 3u8,
            };
            ExitCode::from(code)
        }
    }
}
