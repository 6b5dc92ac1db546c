//! Policies over atomic actions: the benchmark policies, batched
//! multinomial sampling with capacity-aware resampling, exact system-level
//! action probabilities (the product-of-multinomials form), and probability
//! ratios with the combinatorial factors cancelled.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::dynamics::{feasible_pools, State, SystemAction};
use crate::net::{self, NetworkParams};
use crate::Error;

/// Per-class atomic-action distributions at one state: row i is κ(·|s,i),
/// the placement distribution for one waiting class-i customer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicDistribution {
    pub kappa: Vec<Vec<f64>>,
}

impl AtomicDistribution {
    /// Verifies each row is a distribution supported on the feasible pools.
    pub fn check(&self, s: &State, cfg: &SystemConfig) -> Result<(), Error> {
        let j = cfg.j();
        if self.kappa.len() != j {
            return Err(Error::Policy(format!(
                "distribution has {} rows, expected {j}",
                self.kappa.len()
            )));
        }
        for (i, row) in self.kappa.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-10 {
                return Err(Error::Policy(format!("row {i} sums to {sum}")));
            }
            let feasible = feasible_pools(s, i, cfg);
            for (k, &p) in row.iter().enumerate() {
                if p > 0.0 && !feasible.contains(&k) {
                    return Err(Error::Policy(format!(
                        "row {i} puts mass {p} on infeasible pool {k}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A system-level policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PolicySpec {
    /// Every queued customer waits.
    NoOverflow,
    /// Overflow as many customers as capacity allows, preferred routes
    /// first, classes in ascending order.
    CompleteOverflow,
    /// Complete overflow at midnight only; otherwise no overflow.
    Midnight,
    /// Complete overflow during the given night epochs; otherwise none.
    Empirical { night_epochs: Vec<usize> },
    /// Policy-network atomic distributions.
    Network(NetworkParams),
}

impl PolicySpec {
    /// Whether overflow is enabled at epoch `h` for the rule-based policies.
    fn overflow_enabled(&self, h: usize) -> bool {
        match self {
            PolicySpec::NoOverflow => false,
            PolicySpec::CompleteOverflow | PolicySpec::Network(_) => true,
            PolicySpec::Midnight => h == 0,
            PolicySpec::Empirical { night_epochs } => night_epochs.contains(&h),
        }
    }
}

/// Epochs whose interval lies entirely inside the 19:00–07:00 night window,
/// with epoch `k` covering clock hours `[24k/m, 24(k+1)/m)`. For `m = 8`
/// this gives `{0, 1, 7}`; for `m = 1` the set is empty (no full-day epoch
/// fits in the window).
pub fn default_night_epochs(m: usize) -> Vec<usize> {
    (0..m)
        .filter(|&k| {
            let start = 24.0 * k as f64 / m as f64;
            let end = 24.0 * (k + 1) as f64 / m as f64;
            end <= 7.0 || start >= 19.0
        })
        .collect()
}

/// The deterministic complete-overflow action: classes in ascending index,
/// each filling its preferred route first, then secondary routes in listed
/// order, until the queue or all idle beds are exhausted. Capacity is
/// consumed cumulatively across classes.
pub fn complete_overflow_action(s: &State, cfg: &SystemConfig) -> SystemAction {
    let j = cfg.j();
    let mut idle: Vec<u32> = (0..j).map(|p| s.idle(p, cfg)).collect();
    let mut f = vec![vec![0u32; j]; j];
    for i in 0..j {
        let mut remaining = s.queue(i, cfg);
        for route in &cfg.routes[i] {
            if remaining == 0 {
                break;
            }
            let take = remaining.min(idle[route.to]);
            if take > 0 {
                f[i][route.to] += take;
                idle[route.to] -= take;
                remaining -= take;
            }
        }
        f[i][i] = remaining;
    }
    SystemAction { f }
}

/// The atomic distribution a policy induces at a state. Rule-based
/// policies produce point-mass rows: NoOverflow always waits; complete
/// overflow puts the mass on the first route with an idle bed (the
/// deterministic sampler, not this marginal, decides realized counts).
pub fn atomic_distribution(
    policy: &PolicySpec,
    s: &State,
    cfg: &SystemConfig,
) -> Result<AtomicDistribution, Error> {
    let j = cfg.j();
    if let PolicySpec::Network(params) = policy {
        return net::forward(params, s, cfg);
    }
    let mut kappa = vec![vec![0.0; j]; j];
    for (i, row) in kappa.iter_mut().enumerate() {
        let target = if policy.overflow_enabled(s.h) {
            cfg.routes[i]
                .iter()
                .map(|r| r.to)
                .find(|&p| s.idle(p, cfg) > 0)
                .unwrap_or(i)
        } else {
            i
        };
        row[target] = 1.0;
    }
    Ok(AtomicDistribution { kappa })
}

/// Batched multinomial sampling from fixed κ rows with cumulative capacity
/// tracking: classes ascending, each waiting customer draws a pool from the
/// pre-action κ row; a draw landing on a pool with no remaining idle
/// capacity zeroes that pool's probability, renormalizes, and redraws.
/// Waiting is always available, so the procedure terminates.
pub fn sample_from_rows<R: Rng + ?Sized>(
    dist: &AtomicDistribution,
    s: &State,
    cfg: &SystemConfig,
    rng: &mut R,
) -> SystemAction {
    let j = cfg.j();
    let mut idle: Vec<u32> = (0..j).map(|p| s.idle(p, cfg)).collect();
    let mut f = vec![vec![0u32; j]; j];
    for i in 0..j {
        let q = s.queue(i, cfg);
        let mut row = dist.kappa[i].clone();
        for _ in 0..q {
            loop {
                let total: f64 = row.iter().sum();
                let mut u = rng.random_range(0.0..total);
                let mut pick = i;
                for (k, &p) in row.iter().enumerate() {
                    if p <= 0.0 {
                        continue;
                    }
                    if u < p {
                        pick = k;
                        break;
                    }
                    u -= p;
                }
                if pick == i {
                    f[i][i] += 1;
                    break;
                } else if idle[pick] > 0 {
                    idle[pick] -= 1;
                    f[i][pick] += 1;
                    break;
                } else {
                    row[pick] = 0.0;
                }
            }
        }
    }
    SystemAction { f }
}

/// Samples a feasible system action under a policy. CompleteOverflow (and
/// the rule-based policies during their overflow epochs) is deterministic;
/// network policies use batched multinomial sampling.
pub fn sample_action<R: Rng + ?Sized>(
    policy: &PolicySpec,
    s: &State,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<SystemAction, Error> {
    match policy {
        PolicySpec::Network(params) => {
            let dist = net::forward(params, s, cfg)?;
            Ok(sample_from_rows(&dist, s, cfg, rng))
        }
        _ => {
            if policy.overflow_enabled(s.h) {
                Ok(complete_overflow_action(s, cfg))
            } else {
                Ok(SystemAction::wait_all(s, cfg))
            }
        }
    }
}

/// Sequential (non-batched) sampling: atomic decisions are taken one
/// customer at a time, classes ascending, with the state updated after each
/// placement so later customers see refreshed feasibility and κ rows.
/// Returns the aggregate action and the realized atomic record
/// (class, chosen pool, probability under the acting policy).
pub fn sample_action_sequential<R: Rng + ?Sized>(
    policy: &PolicySpec,
    s: &State,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<(SystemAction, Vec<(usize, usize, f64)>), Error> {
    let j = cfg.j();
    let mut current = s.clone();
    let mut f = vec![vec![0u32; j]; j];
    let mut steps = Vec::new();
    for i in 0..j {
        let q = s.queue(i, cfg);
        for _ in 0..q {
            let dist = atomic_distribution(policy, &current, cfg)?;
            let row = &dist.kappa[i];
            let total: f64 = row.iter().sum();
            let mut u = rng.random_range(0.0..total);
            let mut pick = i;
            for (k, &p) in row.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                if u < p {
                    pick = k;
                    break;
                }
                u -= p;
            }
            steps.push((i, pick, row[pick]));
            f[i][pick] += 1;
            if pick != i {
                // The customer occupies a bed immediately; the own queue
                // stays as-is since placement order within the class batch
                // does not change remaining queue semantics.
                current.x[pick] += 1;
                current.x[i] -= 1;
            }
        }
    }
    Ok((SystemAction { f }, steps))
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Log of the system-level action probability under batched atomic
/// sampling (Lemma 1): log Π_i [q_i!/Π_j f_{i,j}!] Π_j κ(j|s,i)^{f_{i,j}},
/// with 0·log 0 = 0. A positive count on a zero-probability pool returns
/// −∞ (the action is unreachable).
pub fn action_log_prob(
    dist: &AtomicDistribution,
    s: &State,
    f: &SystemAction,
    cfg: &SystemConfig,
) -> f64 {
    let j = cfg.j();
    let mut lp = 0.0;
    for i in 0..j {
        let q = s.queue(i, cfg);
        lp += ln_factorial(q);
        for k in 0..j {
            let count = f.f[i][k];
            if count == 0 {
                continue;
            }
            let p = dist.kappa[i][k];
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            lp += count as f64 * p.ln() - ln_factorial(count);
        }
    }
    lp
}

/// Probability ratio π_new(f|s)/π_old(f|s); the multinomial coefficients
/// cancel, leaving Π_{i,j} (κ_new/κ_old)^{f_{i,j}}.
pub fn prob_ratio(
    dist_new: &AtomicDistribution,
    dist_old: &AtomicDistribution,
    f: &SystemAction,
) -> Result<f64, Error> {
    let mut log_r = 0.0;
    for (i, row) in f.f.iter().enumerate() {
        for (k, &count) in row.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let old = dist_old.kappa[i][k];
            let new = dist_new.kappa[i][k];
            if old <= 0.0 {
                return Err(Error::Policy(format!(
                    "ratio undefined: old kappa[{i}][{k}] = 0 with count {count}"
                )));
            }
            if new <= 0.0 {
                return Ok(0.0);
            }
            log_r += count as f64 * (new.ln() - old.ln());
        }
    }
    Ok(log_r.exp())
}
