//! Exact small-instance solvers used as ground truth: feasible-action
//! enumeration, brute-force atomic-sequence probabilities, and value/policy
//! iteration for the truncated two-pool midnight MDP.

use crate::config::SystemConfig;
use crate::dynamics::{State, SystemAction};
use crate::policy::AtomicDistribution;
use crate::Error;

/// Exhaustively enumerates every feasible system action at a state.
/// Guarded to Σq ≤ 12 and J ≤ 3.
pub fn enumerate_feasible_actions(
    s: &State,
    cfg: &SystemConfig,
) -> Result<Vec<SystemAction>, Error> {
    let j = cfg.j();
    let total_q: u32 = (0..j).map(|i| s.queue(i, cfg)).sum();
    if j > 3 || total_q > 12 {
        return Err(Error::Oracle(format!(
            "enumeration guard exceeded: J={j}, total queue {total_q}"
        )));
    }
    let mut idle: Vec<u32> = (0..j).map(|p| s.idle(p, cfg)).collect();
    let mut rows: Vec<Vec<u32>> = vec![vec![0; j]; j];
    let mut out = Vec::new();
    fn recurse(
        i: usize,
        s: &State,
        cfg: &SystemConfig,
        idle: &mut Vec<u32>,
        rows: &mut Vec<Vec<u32>>,
        out: &mut Vec<SystemAction>,
    ) {
        let j = cfg.j();
        if i == j {
            out.push(SystemAction { f: rows.clone() });
            return;
        }
        let q = s.queue(i, cfg);
        let targets: Vec<usize> = cfg.routes[i].iter().map(|r| r.to).collect();
        // Distribute q among waiting plus the route pools, respecting the
        // remaining idle capacity consumed so far.
        fn fill(
            t: usize,
            remaining: u32,
            i: usize,
            targets: &[usize],
            s: &State,
            cfg: &SystemConfig,
            idle: &mut Vec<u32>,
            rows: &mut Vec<Vec<u32>>,
            out: &mut Vec<SystemAction>,
        ) {
            if t == targets.len() {
                rows[i][i] = remaining;
                recurse(i + 1, s, cfg, idle, rows, out);
                rows[i][i] = 0;
                return;
            }
            let pool = targets[t];
            let cap = remaining.min(idle[pool]);
            for take in 0..=cap {
                rows[i][pool] = take;
                idle[pool] -= take;
                fill(t + 1, remaining - take, i, targets, s, cfg, idle, rows, out);
                idle[pool] += take;
                rows[i][pool] = 0;
            }
        }
        fill(0, q, i, &targets, s, cfg, idle, rows, out);
    }
    recurse(0, s, cfg, &mut idle, &mut rows, &mut out);
    Ok(out)
}

/// Probability of a system action by direct summation over all atomic
/// sequences: each of the q_i class-i customers independently draws a pool
/// from κ(·|s,i); sequences whose aggregate equals f are summed.
/// Guarded to Σq ≤ 8.
pub fn brute_force_action_prob(
    dist: &AtomicDistribution,
    s: &State,
    f: &SystemAction,
    cfg: &SystemConfig,
) -> Result<f64, Error> {
    let j = cfg.j();
    let total_q: u32 = (0..j).map(|i| s.queue(i, cfg)).sum();
    if total_q > 8 {
        return Err(Error::Oracle(format!(
            "brute-force guard exceeded: total queue {total_q}"
        )));
    }
    let mut prob = 1.0;
    for i in 0..j {
        let q = s.queue(i, cfg) as usize;
        let row = &dist.kappa[i];
        // Walk all j^q sequences for this class.
        let mut class_prob = 0.0;
        let mut seq = vec![0usize; q];
        loop {
            let mut counts = vec![0u32; j];
            let mut p = 1.0;
            for &pick in &seq {
                counts[pick] += 1;
                p *= row[pick];
            }
            if p > 0.0 && counts == f.f[i] {
                class_prob += p;
            }
            // Odometer increment.
            let mut pos = 0;
            loop {
                if pos == q {
                    break;
                }
                seq[pos] += 1;
                if seq[pos] < j {
                    break;
                }
                seq[pos] = 0;
                pos += 1;
            }
            if pos == q {
                break;
            }
            if q == 0 {
                break;
            }
        }
        if q == 0 {
            class_prob = if f.f[i].iter().all(|&v| v == 0) { 1.0 } else { 0.0 };
        }
        prob *= class_prob;
    }
    Ok(prob)
}

/// Truncated exact MDP for the two-pool midnight model: state (x₁, x₂)
/// with m = 1, to-depart counts collapsed into the within-day dynamics.
pub struct TruncatedMDP {
    pub x_max: u32,
    pub n: [u32; 2],
    pub c: [f64; 2],
    /// Overflow costs: b[0] = B from class 0 into pool 1, b[1] the reverse.
    /// `None` disables the route.
    pub b: [Option<f64>; 2],
    /// Per pool: transition pmf rows, `t[pool][x_post][x_next]`.
    t: [Vec<Vec<f64>>; 2],
}

fn pool_transition_rows(
    n: u32,
    mu: f64,
    lambda: f64,
    x_max: u32,
) -> Vec<Vec<f64>> {
    let size = x_max as usize + 1;
    // Poisson pmf with tail lumped at the boundary.
    let mut apmf = vec![0.0; size];
    if lambda <= 0.0 {
        apmf[0] = 1.0;
    } else {
        let mut p = (-lambda).exp();
        let mut acc = 0.0;
        for k in 0..size - 1 {
            apmf[k] = p;
            acc += p;
            p *= lambda / (k + 1) as f64;
        }
        apmf[size - 1] = (1.0 - acc).max(0.0);
    }
    let mut rows = Vec::with_capacity(size);
    for x_post in 0..=x_max {
        let served = x_post.min(n);
        // b ~ Bin(served, mu) departures, then arrivals.
        let mut bpmf = vec![0.0; served as usize + 1];
        if mu <= 0.0 {
            bpmf[0] = 1.0;
        } else if mu >= 1.0 {
            bpmf[served as usize] = 1.0;
        } else {
            bpmf[0] = (1.0 - mu).powi(served as i32);
            for k in 0..served as usize {
                bpmf[k + 1] =
                    bpmf[k] * ((served as usize - k) as f64 / (k + 1) as f64) * (mu / (1.0 - mu));
            }
        }
        let mut row = vec![0.0; size];
        for (b, &pb) in bpmf.iter().enumerate() {
            if pb == 0.0 {
                continue;
            }
            let base = x_post as usize - b;
            for (a, &pa) in apmf.iter().enumerate() {
                let next = (base + a).min(size - 1);
                row[next] += pb * pa;
            }
        }
        rows.push(row);
    }
    rows
}

impl TruncatedMDP {
    /// Builds the truncated chain from a two-pool, single-epoch config.
    pub fn new(cfg: &SystemConfig, x_max: u32) -> Result<Self, Error> {
        if cfg.j() != 2 || cfg.m() != 1 {
            return Err(Error::Oracle(
                "truncated MDP requires a two-pool single-epoch instance".into(),
            ));
        }
        let t0 = pool_transition_rows(
            cfg.servers[0],
            cfg.discharge_prob[0],
            cfg.daily_rate[0],
            x_max,
        );
        let t1 = pool_transition_rows(
            cfg.servers[1],
            cfg.discharge_prob[1],
            cfg.daily_rate[1],
            x_max,
        );
        Ok(TruncatedMDP {
            x_max,
            n: [cfg.servers[0], cfg.servers[1]],
            c: [cfg.holding_cost[0], cfg.holding_cost[1]],
            b: [cfg.route_cost(0, 1), cfg.route_cost(1, 0)],
            t: [t0, t1],
        })
    }

    fn queues(&self, x1: u32, x2: u32) -> (u32, u32) {
        (
            x1.saturating_sub(self.n[0]),
            x2.saturating_sub(self.n[1]),
        )
    }

    /// Feasible actions (f₁₂, f₂₁) at a state. At most one can be positive
    /// since a pool with a queue has no idle beds.
    pub fn actions(&self, x1: u32, x2: u32) -> Vec<(u32, u32)> {
        let (q1, q2) = self.queues(x1, x2);
        let idle1 = self.n[0].saturating_sub(x1);
        let idle2 = self.n[1].saturating_sub(x2);
        let mut out = vec![(0, 0)];
        if self.b[0].is_some() {
            for f12 in 1..=q1.min(idle2) {
                out.push((f12, 0));
            }
        }
        if self.b[1].is_some() {
            for f21 in 1..=q2.min(idle1) {
                out.push((0, f21));
            }
        }
        out
    }

    /// One-step cost of an action at a state.
    pub fn stage_cost(&self, x1: u32, x2: u32, f12: u32, f21: u32) -> f64 {
        let (q1, q2) = self.queues(x1, x2);
        self.c[0] * (q1 - f12) as f64
            + self.c[1] * (q2 - f21) as f64
            + self.b[0].unwrap_or(0.0) * f12 as f64
            + self.b[1].unwrap_or(0.0) * f21 as f64
    }

    /// Expected-next-value table over post-action states:
    /// W[x₁⁺][x₂⁺] = Σ p₁(x₁'|x₁⁺)·p₂(x₂'|x₂⁺)·v(x₁', x₂').
    fn expected_next(&self, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let size = self.x_max as usize + 1;
        // mid[x1'][x2_post] = Σ_{x2'} v[x1'][x2'] · t2[x2_post][x2'].
        let mut mid = vec![vec![0.0; size]; size];
        for x1n in 0..size {
            for x2p in 0..size {
                let row = &self.t[1][x2p];
                let mut acc = 0.0;
                for (x2n, &p) in row.iter().enumerate() {
                    if p != 0.0 {
                        acc += p * v[x1n][x2n];
                    }
                }
                mid[x1n][x2p] = acc;
            }
        }
        let mut w = vec![vec![0.0; size]; size];
        for x1p in 0..size {
            let row = &self.t[0][x1p];
            for x2p in 0..size {
                let mut acc = 0.0;
                for (x1n, &p) in row.iter().enumerate() {
                    if p != 0.0 {
                        acc += p * mid[x1n][x2p];
                    }
                }
                w[x1p][x2p] = acc;
            }
        }
        w
    }

    /// Relative value iteration with span-seminorm stopping. Returns the
    /// optimal average daily cost, the relative values (v[0][0] = 0), and
    /// the argmin action table.
    pub fn value_iteration(
        &self,
        tol: f64,
    ) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<(u32, u32)>>), Error> {
        self.solve(tol, None)
    }

    /// Exact policy evaluation: the Poisson equation under a fixed
    /// deterministic policy, solved by relative value iteration.
    pub fn policy_eval<F>(&self, policy: F, tol: f64) -> Result<(f64, Vec<Vec<f64>>), Error>
    where
        F: Fn(u32, u32) -> (u32, u32),
    {
        let (gamma, v, _) = self.solve(tol, Some(&policy))?;
        Ok((gamma, v))
    }

    fn solve(
        &self,
        tol: f64,
        policy: Option<&dyn Fn(u32, u32) -> (u32, u32)>,
    ) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<(u32, u32)>>), Error> {
        let size = self.x_max as usize + 1;
        let mut v = vec![vec![0.0; size]; size];
        let max_iters = 200_000;
        let mut gamma = 0.0;
        let mut converged = false;
        let mut pi = vec![vec![(0u32, 0u32); size]; size];
        for _ in 0..max_iters {
            let w = self.expected_next(&v);
            let mut new_v = vec![vec![0.0; size]; size];
            for x1 in 0..size as u32 {
                for x2 in 0..size as u32 {
                    let (best, arg) = match policy {
                        Some(p) => {
                            let (f12, f21) = p(x1, x2);
                            let x1p = (x1 - f12 + f21) as usize;
                            let x2p = (x2 + f12 - f21) as usize;
                            (
                                self.stage_cost(x1, x2, f12, f21) + w[x1p][x2p],
                                (f12, f21),
                            )
                        }
                        None => {
                            let mut best = f64::INFINITY;
                            let mut arg = (0, 0);
                            for (f12, f21) in self.actions(x1, x2) {
                                let x1p = (x1 - f12 + f21) as usize;
                                let x2p = (x2 + f12 - f21) as usize;
                                let val = self.stage_cost(x1, x2, f12, f21) + w[x1p][x2p];
                                if val < best {
                                    best = val;
                                    arg = (f12, f21);
                                }
                            }
                            (best, arg)
                        }
                    };
                    new_v[x1 as usize][x2 as usize] = best;
                    pi[x1 as usize][x2 as usize] = arg;
                }
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (new_row, old_row) in new_v.iter().zip(&v) {
                for (a, b) in new_row.iter().zip(old_row) {
                    let d = a - b;
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
            gamma = 0.5 * (lo + hi);
            let shift = new_v[0][0];
            for row in new_v.iter_mut() {
                row.iter_mut().for_each(|x| *x -= shift);
            }
            v = new_v;
            if hi - lo < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Oracle(format!(
                "relative value iteration did not reach span {tol} in {max_iters} sweeps"
            )));
        }
        Ok((gamma, v, pi))
    }

    /// The per-pool post-action transition pmf tables.
    pub fn transition_tables(&self) -> &[Vec<Vec<f64>>; 2] {
        &self.t
    }

    /// Exact average daily cost of a stochastic policy given as a per-state
    /// distribution over feasible actions, by relative value iteration on
    /// the policy-averaged Bellman operator.
    pub fn policy_eval_distribution<F>(&self, policy: F, tol: f64) -> Result<f64, Error>
    where
        F: Fn(u32, u32) -> Vec<((u32, u32), f64)>,
    {
        let size = self.x_max as usize + 1;
        let mut dists = Vec::with_capacity(size * size);
        for x1 in 0..=self.x_max {
            for x2 in 0..=self.x_max {
                let d = policy(x1, x2);
                let mass: f64 = d.iter().map(|&(_, p)| p).sum();
                if (mass - 1.0).abs() > 1e-9 {
                    return Err(Error::Oracle(format!(
                        "action distribution at ({x1},{x2}) sums to {mass}"
                    )));
                }
                dists.push(d);
            }
        }
        let mut v = vec![vec![0.0; size]; size];
        let max_iters = 200_000;
        for _ in 0..max_iters {
            let w = self.expected_next(&v);
            let mut new_v = vec![vec![0.0; size]; size];
            for x1 in 0..=self.x_max {
                for x2 in 0..=self.x_max {
                    let mut acc = 0.0;
                    for &((f12, f21), p) in &dists[x1 as usize * size + x2 as usize] {
                        if p == 0.0 {
                            continue;
                        }
                        let x1p = (x1 - f12 + f21) as usize;
                        let x2p = (x2 + f12 - f21) as usize;
                        acc += p * (self.stage_cost(x1, x2, f12, f21) + w[x1p][x2p]);
                    }
                    new_v[x1 as usize][x2 as usize] = acc;
                }
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (new_row, old_row) in new_v.iter().zip(&v) {
                for (a, b) in new_row.iter().zip(old_row) {
                    let d = a - b;
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
            let gamma = 0.5 * (lo + hi);
            let shift = new_v[0][0];
            for row in new_v.iter_mut() {
                row.iter_mut().for_each(|x| *x -= shift);
            }
            v = new_v;
            if hi - lo < tol {
                return Ok(gamma);
            }
        }
        Err(Error::Oracle(format!(
            "stochastic policy evaluation did not reach span {tol} in {max_iters} sweeps"
        )))
    }

    /// Distribution over (f₁₂, f₂₁) induced at a state by batched atomic
    /// sampling from a network policy: at most one class can overflow, and
    /// its count follows a capacity-capped binomial in the network's κ (the
    /// resampling step collapses to waiting once the receiving pool fills).
    pub fn network_action_distribution(
        &self,
        params: &crate::net::NetworkParams,
        cfg: &SystemConfig,
        x1: u32,
        x2: u32,
    ) -> Result<Vec<((u32, u32), f64)>, Error> {
        let (q1, q2) = self.queues(x1, x2);
        let idle1 = self.n[0].saturating_sub(x1);
        let idle2 = self.n[1].saturating_sub(x2);
        let (sender, q, cap) = if q1 > 0 && idle2 > 0 && self.b[0].is_some() {
            (0usize, q1, q1.min(idle2))
        } else if q2 > 0 && idle1 > 0 && self.b[1].is_some() {
            (1usize, q2, q2.min(idle1))
        } else {
            return Ok(vec![((0, 0), 1.0)]);
        };
        let s = State {
            x: vec![x1, x2],
            y: vec![0, 0],
            h: 0,
        };
        let dist = crate::net::forward(params, &s, cfg)?;
        let kappa = dist.kappa[sender][1 - sender];
        let ln_choose = |n: u32, k: u32| -> f64 {
            let lf = |n: u32| -> f64 { (2..=n).map(|v| (v as f64).ln()).sum() };
            lf(n) - lf(k) - lf(n - k)
        };
        let mut out = Vec::with_capacity(cap as usize + 1);
        let mut tail = 1.0;
        for k in 0..cap {
            let p = if kappa <= 0.0 {
                if k == 0 { 1.0 } else { 0.0 }
            } else if kappa >= 1.0 {
                0.0
            } else {
                (ln_choose(q, k)
                    + k as f64 * kappa.ln()
                    + (q - k) as f64 * (1.0 - kappa).ln())
                .exp()
            };
            let action = if sender == 0 { (k, 0) } else { (0, k) };
            out.push((action, p));
            tail -= p;
        }
        let last = if sender == 0 { (cap, 0) } else { (0, cap) };
        out.push((last, tail.max(0.0)));
        Ok(out)
    }

    /// Optimality-certificate residual: max over states of
    /// |min_f [g − γ + E v(s')] − v(s)|.
    pub fn bellman_residual(&self, gamma: f64, v: &[Vec<f64>]) -> f64 {
        let w = self.expected_next(v);
        let mut worst: f64 = 0.0;
        for x1 in 0..=self.x_max {
            for x2 in 0..=self.x_max {
                let mut best = f64::INFINITY;
                for (f12, f21) in self.actions(x1, x2) {
                    let x1p = (x1 - f12 + f21) as usize;
                    let x2p = (x2 + f12 - f21) as usize;
                    best = best.min(self.stage_cost(x1, x2, f12, f21) + w[x1p][x2p]);
                }
                worst = worst.max((best - gamma - v[x1 as usize][x2 as usize]).abs());
            }
        }
        worst
    }
}

/// Solves the two-pool midnight instance by relative value iteration.
pub fn value_iteration_midnight(
    cfg: &SystemConfig,
    x_max: u32,
    tol: f64,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<(u32, u32)>>), Error> {
    let mdp = TruncatedMDP::new(cfg, x_max)?;
    mdp.value_iteration(tol)
}
