//! Exact discrete-epoch dynamics: states, overflow actions, feasibility,
//! costs, and the two-time-scale arrival/departure transitions.
//!
//! A day is split into `m` epochs; epoch 0 is midnight. Customers arrive
//! throughout the day, discharge decisions are made once per day at midnight
//! (each in-service customer independently becomes to-depart with probability
//! μ_j), and marked customers leave during the day according to the
//! within-day discharge CDF. When `m == 1` the two time scales collapse:
//! customers marked at midnight leave before the next midnight, so the
//! to-depart count is never carried in the state.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::Error;

/// Pre-action system state at a decision epoch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State {
    /// Customer count per pool (waiting plus in service), X_j.
    pub x: Vec<u32>,
    /// To-depart customers per pool, Y_j. Always 0 when `m == 1`.
    pub y: Vec<u32>,
    /// Epoch of day, 0-based; 0 is midnight.
    pub h: usize,
}

impl State {
    /// The empty system at midnight.
    pub fn empty(j: usize) -> Self {
        State {
            x: vec![0; j],
            y: vec![0; j],
            h: 0,
        }
    }

    /// Queue length (x_j − N_j)⁺ at pool `j`.
    pub fn queue(&self, j: usize, cfg: &SystemConfig) -> u32 {
        self.x[j].saturating_sub(cfg.servers[j])
    }

    /// In-service count min(x_j, N_j) at pool `j`.
    pub fn in_service(&self, j: usize, cfg: &SystemConfig) -> u32 {
        self.x[j].min(cfg.servers[j])
    }

    /// Idle servers (N_j − x_j)⁺ at pool `j`.
    pub fn idle(&self, j: usize, cfg: &SystemConfig) -> u32 {
        cfg.servers[j].saturating_sub(self.x[j])
    }

    /// Checks state consistency against a config: vector lengths, epoch
    /// range, and y_j ≤ min(x_j, N_j).
    pub fn check(&self, cfg: &SystemConfig) -> Result<(), Error> {
        let j = cfg.j();
        if self.x.len() != j || self.y.len() != j {
            return Err(Error::Dynamics(format!(
                "state has {} pools, config has {j}",
                self.x.len()
            )));
        }
        if self.h >= cfg.m() {
            return Err(Error::Dynamics(format!(
                "epoch {} out of range for m={}",
                self.h,
                cfg.m()
            )));
        }
        for p in 0..j {
            if self.y[p] > self.in_service(p, cfg) {
                return Err(Error::Dynamics(format!(
                    "y[{p}]={} exceeds in-service count {}",
                    self.y[p],
                    self.in_service(p, cfg)
                )));
            }
        }
        Ok(())
    }
}

/// A full overflow action: f[i][j] for i ≠ j is the number of class-i
/// customers routed to pool j; f[i][i] is the number kept waiting. Each row
/// must sum to the class's queue length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemAction {
    pub f: Vec<Vec<u32>>,
}

impl SystemAction {
    /// The all-zero action (valid only when every queue is empty).
    pub fn zero(j: usize) -> Self {
        SystemAction {
            f: vec![vec![0; j]; j],
        }
    }

    /// The no-overflow action for a state: every queued customer waits.
    pub fn wait_all(s: &State, cfg: &SystemConfig) -> Self {
        let j = cfg.j();
        let mut f = vec![vec![0; j]; j];
        for (i, row) in f.iter_mut().enumerate() {
            row[i] = s.queue(i, cfg);
        }
        SystemAction { f }
    }

    /// Full row total for class `i` (waiting plus overflowed).
    pub fn row_sum(&self, i: usize) -> u32 {
        self.f[i].iter().sum()
    }

    /// Customers of class `i` overflowed to other pools.
    pub fn row_outflow(&self, i: usize) -> u32 {
        self.f[i]
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, &v)| v)
            .sum()
    }

    /// Customers overflowed into pool `j` from other classes.
    pub fn col_inflow(&self, j: usize) -> u32 {
        self.f
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(_, row)| row[j])
            .sum()
    }
}

/// The exogenous randomness of one epoch transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExogenousDraw {
    /// New arrivals per class during the epoch.
    pub arrivals: Vec<u32>,
    /// Departures per pool during the epoch (marked customers leaving).
    pub departures: Vec<u32>,
    /// Customers newly marked to-depart (midnight only; zero otherwise).
    pub new_to_depart: Vec<u32>,
}

/// Checks action feasibility against a pre-action state:
/// every class overflows exactly its queue, no pool receives more than its
/// idle capacity, and only configured routes carry flow.
pub fn check_feasible(s: &State, f: &SystemAction, cfg: &SystemConfig) -> Result<(), Error> {
    let j = cfg.j();
    if f.f.len() != j || f.f.iter().any(|row| row.len() != j) {
        return Err(Error::Dynamics(format!("action is not {j}x{j}")));
    }
    for i in 0..j {
        for (k, &flow) in f.f[i].iter().enumerate() {
            if flow > 0 && k != i && !cfg.is_route(i, k) {
                return Err(Error::Dynamics(format!(
                    "class {i} routed {flow} customers to non-route pool {k}"
                )));
            }
        }
        let q = s.queue(i, cfg);
        if f.row_sum(i) != q {
            return Err(Error::Dynamics(format!(
                "class {i} row sums to {} but queue is {q}",
                f.row_sum(i)
            )));
        }
    }
    for p in 0..j {
        let idle = s.idle(p, cfg);
        let inflow = f.col_inflow(p);
        if inflow > idle {
            return Err(Error::Dynamics(format!(
                "pool {p} receives {inflow} customers but has {idle} idle servers"
            )));
        }
    }
    Ok(())
}

/// Applies an overflow action, producing the post-action state.
/// The action must be feasible.
pub fn apply_action(s: &State, f: &SystemAction, cfg: &SystemConfig) -> Result<State, Error> {
    check_feasible(s, f, cfg)?;
    let j = cfg.j();
    let mut x = s.x.clone();
    for p in 0..j {
        x[p] = x[p] + f.col_inflow(p) - f.row_outflow(p);
    }
    Ok(State {
        x,
        y: s.y.clone(),
        h: s.h,
    })
}

/// One-epoch cost g(s, f): post-action holding cost plus overflow cost.
pub fn cost(s: &State, f: &SystemAction, cfg: &SystemConfig) -> Result<f64, Error> {
    let post = apply_action(s, f, cfg)?;
    let j = cfg.j();
    let mut g = 0.0;
    for p in 0..j {
        g += cfg.holding_cost[p] * post.queue(p, cfg) as f64;
    }
    for i in 0..j {
        for (k, &flow) in f.f[i].iter().enumerate() {
            if flow > 0 && k != i {
                g += cfg.route_cost(i, k).expect("checked route") * flow as f64;
            }
        }
    }
    Ok(g)
}

/// Pools a waiting customer of class `i` may be placed in right now: the own
/// pool first (waiting), then overflow routes with at least one idle server,
/// in route priority order. Cumulative assignments already made this epoch
/// must be reflected in `s` by the caller.
pub fn feasible_pools(s: &State, i: usize, cfg: &SystemConfig) -> Vec<usize> {
    let mut out = vec![i];
    for route in &cfg.routes[i] {
        if s.idle(route.to, cfg) > 0 {
            out.push(route.to);
        }
    }
    out
}

fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive mean");
    d.sample(rng) as u32
}

fn sample_binomial<R: Rng + ?Sized>(n: u32, p: f64, rng: &mut R) -> u32 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let d = Binomial::new(n as u64, p).expect("p in range");
    d.sample(rng) as u32
}

/// Samples the exogenous randomness for the transition out of the
/// post-action state `post`.
///
/// Midnight (`h == 0`, `m > 1`): Poisson arrivals plus a fresh to-depart
/// draw b_j ~ Bin(min(x⁺_j, N_j), μ_j); no departures. Other epochs:
/// Poisson arrivals and departures d_j ~ Bin(y_j, p_j^h). With `m == 1`
/// the midnight marks depart within the same day, so they are reported as
/// departures directly.
pub fn sample_exogenous<R: Rng + ?Sized>(
    post: &State,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<ExogenousDraw, Error> {
    let j = cfg.j();
    let mut arrivals = vec![0u32; j];
    let mut departures = vec![0u32; j];
    let mut new_to_depart = vec![0u32; j];
    for i in 0..j {
        arrivals[i] = sample_poisson(cfg.epoch_arrivals(i, post.h), rng);
    }
    if post.h == 0 {
        for p in 0..j {
            let marks = sample_binomial(post.in_service(p, cfg), cfg.discharge_prob[p], rng);
            if cfg.m() == 1 {
                departures[p] = marks;
            } else {
                new_to_depart[p] = marks;
            }
        }
    } else {
        for p in 0..j {
            let prob = cfg.discharge_epoch_prob(p, post.h)?;
            departures[p] = sample_binomial(post.y[p], prob, rng);
        }
    }
    Ok(ExogenousDraw {
        arrivals,
        departures,
        new_to_depart,
    })
}

/// Advances the post-action state by one epoch under a given exogenous draw.
pub fn advance(post: &State, draw: &ExogenousDraw, cfg: &SystemConfig) -> Result<State, Error> {
    let j = cfg.j();
    let m = cfg.m();
    let mut x = vec![0u32; j];
    let mut y = vec![0u32; j];
    for p in 0..j {
        if post.h == 0 {
            if m == 1 {
                if draw.departures[p] > post.in_service(p, cfg) {
                    return Err(Error::Dynamics(format!(
                        "pool {p}: {} departures exceed in-service count {}",
                        draw.departures[p],
                        post.in_service(p, cfg)
                    )));
                }
                x[p] = post.x[p] + draw.arrivals[p] - draw.departures[p];
                y[p] = 0;
            } else {
                if draw.new_to_depart[p] > post.in_service(p, cfg) {
                    return Err(Error::Dynamics(format!(
                        "pool {p}: {} to-depart marks exceed in-service count {}",
                        draw.new_to_depart[p],
                        post.in_service(p, cfg)
                    )));
                }
                if draw.departures[p] > 0 {
                    return Err(Error::Dynamics(format!(
                        "pool {p}: departures at midnight with m={m}"
                    )));
                }
                x[p] = post.x[p] + draw.arrivals[p];
                y[p] = draw.new_to_depart[p];
            }
        } else {
            if draw.departures[p] > post.y[p] {
                return Err(Error::Dynamics(format!(
                    "pool {p}: {} departures exceed to-depart count {}",
                    draw.departures[p], post.y[p]
                )));
            }
            x[p] = post.x[p] + draw.arrivals[p] - draw.departures[p];
            y[p] = post.y[p] - draw.departures[p];
        }
    }
    Ok(State {
        x,
        y,
        h: (post.h + 1) % m,
    })
}

/// Samples one full epoch transition from the post-action state.
pub fn step<R: Rng + ?Sized>(
    post: &State,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<(State, ExogenousDraw), Error> {
    let draw = sample_exogenous(post, cfg, rng)?;
    let next = advance(post, &draw, cfg)?;
    Ok((next, draw))
}
