//! Policy evaluation machinery: κ̄ estimation from rollout data, pool-wise
//! decomposed Poisson-equation value tables (the V_d basis), polynomial
//! features, joint per-epoch least-squares fitting, and advantages.
//!
//! Each pool is approximated as a single-server-pool periodic chain whose
//! interactions with the rest of the system are compressed into Poisson
//! inflow and outflow streams thinned by the estimated atomic routing
//! probabilities κ̄. Solving each pool's Poisson equation yields tables
//! v̂_j whose sum V_d(s) = Σ_j v̂_j(s_j) becomes the leading feature of a
//! per-epoch linear value approximation.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::dynamics::{apply_action, State, SystemAction};
use crate::Error;

/// Truncation bound for pool `j`: N_j + ceil(6·sqrt(Λ_j/μ_j)) + 20.
pub fn x_max(cfg: &SystemConfig, j: usize) -> u32 {
    let n = cfg.servers[j];
    let mu = cfg.discharge_prob[j].max(1e-6);
    let spread = (6.0 * (cfg.daily_rate[j] / mu).sqrt()).ceil() as u32;
    n + spread + 20
}

/// Poisson pmf over 0..=cap with the upper tail lumped into the last bin.
fn poisson_pmf(lambda: f64, cap: usize) -> Vec<f64> {
    let mut pmf = vec![0.0; cap + 1];
    if lambda <= 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    let mut p = (-lambda).exp();
    let mut acc = 0.0;
    for (k, slot) in pmf.iter_mut().enumerate().take(cap) {
        *slot = p;
        acc += p;
        p *= lambda / (k + 1) as f64;
    }
    pmf[cap] = (1.0 - acc).max(0.0);
    pmf
}

/// Binomial(n, p) pmf via the multiplicative recurrence.
fn binomial_pmf(n: u32, p: f64) -> Vec<f64> {
    let n = n as usize;
    let mut pmf = vec![0.0; n + 1];
    if p <= 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    if p >= 1.0 {
        pmf[n] = 1.0;
        return pmf;
    }
    pmf[0] = (1.0 - p).powi(n as i32);
    for k in 0..n {
        pmf[k + 1] = pmf[k] * ((n - k) as f64 / (k + 1) as f64) * (p / (1.0 - p));
    }
    pmf
}

/// Support cutoff for a Poisson stream: mean + 8·sqrt(mean) + 10.
fn poisson_cap(lambda: f64) -> usize {
    (lambda + 8.0 * lambda.sqrt() + 10.0).ceil() as usize
}

/// Estimated atomic routing probabilities seen from one pool's local state.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct KbarRow {
    /// Outflow probabilities, aligned with `cfg.routes[j]`: chance one
    /// queued class-j customer is overflowed to that route.
    pub outflow: Vec<f64>,
    /// Inflow probabilities, aligned with the pool's inflow class list:
    /// chance one queued customer of that class is overflowed into pool j.
    pub inflow: Vec<f64>,
    pub visits: u64,
}

/// κ̄ estimate: per pool, per (x_j, y_j, h) bucket, with a per-epoch
/// marginal fallback for unvisited buckets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KbarEstimate {
    pub buckets: Vec<HashMap<(u32, u32, usize), KbarRow>>,
    pub marginal: Vec<Vec<KbarRow>>,
    /// Classes i ≠ j that have pool j on their route list.
    pub inflow_classes: Vec<Vec<usize>>,
}

fn inflow_classes(cfg: &SystemConfig) -> Vec<Vec<usize>> {
    (0..cfg.j())
        .map(|j| {
            (0..cfg.j())
                .filter(|&i| i != j && cfg.is_route(i, j))
                .collect()
        })
        .collect()
}

impl KbarEstimate {
    /// The wait-only estimate: every overflow probability is zero.
    pub fn wait_only(cfg: &SystemConfig) -> Self {
        let j = cfg.j();
        let classes = inflow_classes(cfg);
        let marginal = (0..j)
            .map(|p| {
                (0..cfg.m())
                    .map(|_| KbarRow {
                        outflow: vec![0.0; cfg.routes[p].len()],
                        inflow: vec![0.0; classes[p].len()],
                        visits: 0,
                    })
                    .collect()
            })
            .collect();
        KbarEstimate {
            buckets: vec![HashMap::new(); j],
            marginal,
            inflow_classes: classes,
        }
    }

    /// Resolved κ̄ row for pool `j` at local state (x, y, h): exact bucket,
    /// then the per-epoch marginal, then wait-only.
    pub fn row(&self, j: usize, x: u32, y: u32, h: usize) -> &KbarRow {
        if let Some(row) = self.buckets[j].get(&(x, y, h)) {
            if row.visits > 0 {
                return row;
            }
        }
        &self.marginal[j][h]
    }
}

/// Estimates κ̄ from decision-epoch records of (pre-action state, κ matrix).
/// Bucketed by each pool's local pre-action state.
pub fn estimate_kbar<'a, I>(data: I, cfg: &SystemConfig) -> Result<KbarEstimate, Error>
where
    I: IntoIterator<Item = (&'a State, &'a Vec<Vec<f64>>)>,
{
    let j = cfg.j();
    let classes = inflow_classes(cfg);
    let mut sums: Vec<HashMap<(u32, u32, usize), KbarRow>> = vec![HashMap::new(); j];
    let mut marg: Vec<Vec<KbarRow>> = (0..j)
        .map(|p| {
            (0..cfg.m())
                .map(|_| KbarRow {
                    outflow: vec![0.0; cfg.routes[p].len()],
                    inflow: vec![0.0; classes[p].len()],
                    visits: 0,
                })
                .collect()
        })
        .collect();
    let mut total = 0u64;
    for (s, kappa) in data {
        total += 1;
        for p in 0..j {
            let key = (s.x[p], s.y[p], s.h);
            let entry = sums[p].entry(key).or_insert_with(|| KbarRow {
                outflow: vec![0.0; cfg.routes[p].len()],
                inflow: vec![0.0; classes[p].len()],
                visits: 0,
            });
            for (r, route) in cfg.routes[p].iter().enumerate() {
                entry.outflow[r] += kappa[p][route.to];
                marg[p][s.h].outflow[r] += kappa[p][route.to];
            }
            for (c, &i) in classes[p].iter().enumerate() {
                entry.inflow[c] += kappa[i][p];
                marg[p][s.h].inflow[c] += kappa[i][p];
            }
            entry.visits += 1;
            marg[p][s.h].visits += 1;
        }
    }
    if total == 0 {
        return Err(Error::Value("kbar estimation needs at least one record".into()));
    }
    for pool in sums.iter_mut() {
        for row in pool.values_mut() {
            let v = row.visits as f64;
            row.outflow.iter_mut().for_each(|x| *x /= v);
            row.inflow.iter_mut().for_each(|x| *x /= v);
        }
    }
    for pool in marg.iter_mut() {
        for row in pool.iter_mut() {
            if row.visits > 0 {
                let v = row.visits as f64;
                row.outflow.iter_mut().for_each(|x| *x /= v);
                row.inflow.iter_mut().for_each(|x| *x /= v);
            }
        }
    }
    Ok(KbarEstimate {
        buckets: sums,
        marginal: marg,
        inflow_classes: classes,
    })
}

/// Solved single-pool value tables for one pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolModel {
    pub pool: usize,
    pub n: u32,
    pub x_max: u32,
    pub epochs: usize,
    /// Average cost per epoch of the pool chain.
    pub gamma: f64,
    /// v[h][index(x, y)] on pre-action local states, reference state
    /// (x=0, y=0, h=0) normalized to zero.
    pub v: Vec<Vec<f64>>,
    /// index offsets: state (x, y) lives at offset[x] + y.
    offsets: Vec<usize>,
    /// Per-epoch within-day discharge probabilities p^h (index 0 unused).
    p_epoch: Vec<f64>,
    mu: f64,
    /// Arrival means of the pool's own class per epoch.
    lambda: Vec<f64>,
}

impl PoolModel {
    fn y_count(n: u32, x: u32, m: usize) -> usize {
        if m == 1 {
            1
        } else {
            x.min(n) as usize + 1
        }
    }

    fn index(&self, x: u32, y: u32) -> usize {
        self.offsets[x as usize] + y as usize
    }

    /// Value lookup with clamping to the truncation boundary.
    pub fn value(&self, h: usize, x: u32, y: u32) -> f64 {
        let xc = x.min(self.x_max);
        let ymax = (Self::y_count(self.n, xc, self.epochs) - 1) as u32;
        self.v[h][self.index(xc, y.min(ymax))]
    }

    /// E[v(h+1, x', y')] from a post-action local state under one
    /// exogenous step (arrivals plus departures or midnight marks).
    pub fn expected_next_value(&self, h: usize, x_post: u32, y: u32) -> f64 {
        let m = self.epochs;
        let hn = (h + 1) % m;
        let lambda = self.lambda[h];
        let apmf = poisson_pmf(lambda, poisson_cap(lambda));
        if m == 1 {
            let z = x_post.min(self.x_max);
            let served = z.min(self.n);
            let bpmf = binomial_pmf(served, self.mu);
            let mut total = 0.0;
            for (b, &pb) in bpmf.iter().enumerate() {
                if pb == 0.0 {
                    continue;
                }
                let base = z - b as u32;
                let mut inner = 0.0;
                for (a, &pa) in apmf.iter().enumerate() {
                    inner += pa * self.value(hn, base + a as u32, 0);
                }
                total += pb * inner;
            }
            return total;
        }
        if h == 0 {
            let z = x_post.min(self.x_max);
            let served = z.min(self.n);
            let bpmf = binomial_pmf(served, self.mu);
            let mut total = 0.0;
            for (b, &pb) in bpmf.iter().enumerate() {
                if pb == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                for (a, &pa) in apmf.iter().enumerate() {
                    inner += pa * self.value(hn, z + a as u32, b as u32);
                }
                total += pb * inner;
            }
            total
        } else {
            let p = self.p_epoch[h];
            let dpmf = binomial_pmf(y, p);
            let mut total = 0.0;
            for (d, &pd) in dpmf.iter().enumerate() {
                if pd == 0.0 {
                    continue;
                }
                let base = x_post.min(self.x_max).saturating_sub(d as u32);
                let yn = y - d as u32;
                let mut inner = 0.0;
                for (a, &pa) in apmf.iter().enumerate() {
                    inner += pa * self.value(hn, base + a as u32, yn);
                }
                total += pd * inner;
            }
            total
        }
    }
}

/// Internal stage tables for the solver.
struct PoolChain {
    pool: usize,
    n: u32,
    x_max: u32,
    m: usize,
    offsets: Vec<usize>,
    n_states: usize,
    mu: f64,
    p_epoch: Vec<f64>,
    lambda: Vec<f64>,
    /// Per epoch h, per x: overflow-stage pmf over resulting x⁺ values and
    /// the expected stage cost. Pre-action y does not affect the stage.
    overflow: Vec<Vec<(Vec<(u32, f64)>, f64)>>,
}

impl PoolChain {
    fn build(cfg: &SystemConfig, j: usize, kbar: &KbarEstimate) -> Result<Self, Error> {
        let n = cfg.servers[j];
        let xm = x_max(cfg, j);
        let m = cfg.m();
        let mut offsets = Vec::with_capacity(xm as usize + 1);
        let mut acc = 0usize;
        for x in 0..=xm {
            offsets.push(acc);
            acc += PoolModel::y_count(n, x, m);
        }
        let mut p_epoch = vec![0.0; m];
        for h in 1..m {
            p_epoch[h] = cfg.discharge_epoch_prob(j, h)?;
        }
        let lambda: Vec<f64> = (0..m).map(|h| cfg.epoch_arrivals(j, h)).collect();
        // Overflow stage tables. The stream rates use the arrival means of
        // the interval leading into the decision epoch, thinned by κ̄ at
        // the pool's pre-action bucket. Since κ̄ varies with y only through
        // the bucket lookup, the stage is tabulated per (h, x) with the
        // bucket resolved at y = 0 for the marginal fallback case and
        // re-resolved exactly when a bucket exists. To keep the table
        // small, the y dependence is dropped here: buckets are aggregated
        // over y by the marginal fallback, which dominates in practice.
        let mut overflow = Vec::with_capacity(m);
        for h in 0..m {
            let h_prev = (h + m - 1) % m;
            let mut per_x = Vec::with_capacity(xm as usize + 1);
            for x in 0..=xm {
                let row = kbar.row(j, x, 0, h);
                let entry = if x > n {
                    let q = x - n;
                    let out_total: f64 = row.outflow.iter().sum();
                    let rate = cfg.epoch_arrivals(j, h_prev) * out_total;
                    let pmf = poisson_pmf(rate, q as usize);
                    let mut dist = Vec::with_capacity(pmf.len());
                    let mut expected_out = 0.0;
                    let mut holding = 0.0;
                    for (o, &p) in pmf.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        dist.push((x - o as u32, p));
                        expected_out += p * o as f64;
                        holding += p * (q - o as u32) as f64;
                    }
                    let mut cost = cfg.holding_cost[j] * holding;
                    if out_total > 0.0 {
                        for (r, route) in cfg.routes[j].iter().enumerate() {
                            cost += route.cost * expected_out * row.outflow[r] / out_total;
                        }
                    }
                    (dist, cost)
                } else if x < n {
                    let idle = n - x;
                    let rate: f64 = kbar.inflow_classes[j]
                        .iter()
                        .zip(&row.inflow)
                        .map(|(&i, &k)| cfg.epoch_arrivals(i, h_prev) * k)
                        .sum();
                    let pmf = poisson_pmf(rate, idle as usize);
                    let dist = pmf
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p > 0.0)
                        .map(|(i, &p)| (x + i as u32, p))
                        .collect();
                    (dist, 0.0)
                } else {
                    (vec![(x, 1.0)], 0.0)
                };
                per_x.push(entry);
            }
            overflow.push(per_x);
        }
        Ok(PoolChain {
            pool: j,
            n,
            x_max: xm,
            m,
            offsets,
            n_states: acc,
            mu: cfg.discharge_prob[j],
            p_epoch,
            lambda,
            overflow,
        })
    }

    fn index(&self, x: u32, y: u32) -> usize {
        self.offsets[x as usize] + y as usize
    }

    fn clamped(&self, x: u32, y: u32) -> usize {
        let xc = x.min(self.x_max);
        let ymax = (PoolModel::y_count(self.n, xc, self.m) - 1) as u32;
        self.index(xc, y.min(ymax))
    }

    /// Exogenous-step expectation: from post-action (x⁺, y) at epoch h to
    /// the next epoch's value vector `vnext`.
    fn exog_apply(&self, h: usize, vnext: &[f64]) -> Vec<f64> {
        let apmf = poisson_pmf(self.lambda[h], poisson_cap(self.lambda[h]));
        let mut w = vec![0.0; self.n_states];
        if self.m == 1 || h == 0 {
            // Midnight: marks b ~ Bin(min(x⁺,N), μ); arrivals on top.
            // With m = 1 the marks depart immediately instead.
            for x in 0..=self.x_max {
                let served = x.min(self.n);
                let bpmf = binomial_pmf(served, self.mu);
                // u[b] = Σ_a pa · vnext(x ± …, b)
                let yc = PoolModel::y_count(self.n, x, self.m) as u32;
                for y in 0..yc {
                    let mut total = 0.0;
                    for (b, &pb) in bpmf.iter().enumerate() {
                        if pb == 0.0 {
                            continue;
                        }
                        let mut inner = 0.0;
                        for (a, &pa) in apmf.iter().enumerate() {
                            let idx = if self.m == 1 {
                                self.clamped(x - b as u32 + a as u32, 0)
                            } else {
                                self.clamped(x + a as u32, b as u32)
                            };
                            inner += pa * vnext[idx];
                        }
                        total += pb * inner;
                    }
                    w[self.index(x, y)] = total;
                }
            }
        } else {
            let p = self.p_epoch[h];
            // u[(z, y')] = Σ_a pa vnext(z + a, y'): shared across d.
            let mut u = vec![0.0; self.n_states];
            for z in 0..=self.x_max {
                let yc = PoolModel::y_count(self.n, z, self.m) as u32;
                for yn in 0..yc {
                    let mut inner = 0.0;
                    for (a, &pa) in apmf.iter().enumerate() {
                        inner += pa * vnext[self.clamped(z + a as u32, yn)];
                    }
                    u[self.index(z, yn)] = inner;
                }
            }
            for x in 0..=self.x_max {
                let yc = PoolModel::y_count(self.n, x, self.m) as u32;
                for y in 0..yc {
                    let dpmf = binomial_pmf(y, p);
                    let mut total = 0.0;
                    for (d, &pd) in dpmf.iter().enumerate() {
                        if pd == 0.0 {
                            continue;
                        }
                        let z = x - d as u32;
                        let yn = y - d as u32;
                        total += pd * u[self.clamped(z, yn)];
                    }
                    w[self.index(x, y)] = total;
                }
            }
        }
        w
    }

    /// One epoch of the pre-action Bellman operator without the γ shift:
    /// applied(x, y) = ḡ_h(x) + E_overflow E_exog vnext.
    fn epoch_apply(&self, h: usize, vnext: &[f64]) -> Vec<f64> {
        let w = self.exog_apply(h, vnext);
        let mut out = vec![0.0; self.n_states];
        for x in 0..=self.x_max {
            let (dist, cost) = &self.overflow[h][x as usize];
            let yc = PoolModel::y_count(self.n, x, self.m) as u32;
            for y in 0..yc {
                let mut total = *cost;
                for &(xp, p) in dist {
                    total += p * w[self.clamped(xp, y)];
                }
                out[self.index(x, y)] = total;
            }
        }
        out
    }
}

/// Builds and solves the pool-`j` chain under the κ̄ estimate: relative
/// value iteration on the daily (m-step) operator until the span of the
/// increment is below tolerance, then a backward pass recovers all epochs.
/// Poisson-equation residuals are verified to 1e-8.
pub fn build_pool_model(
    cfg: &SystemConfig,
    j: usize,
    kbar: &KbarEstimate,
) -> Result<PoolModel, Error> {
    let chain = PoolChain::build(cfg, j, kbar)?;
    let m = chain.m;
    let ref_idx = chain.index(0, 0);
    let mut v0 = vec![0.0; chain.n_states];
    let span_tol = 1e-10;
    let max_sweeps = 200_000;
    let mut gamma_daily = 0.0;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut u = v0.clone();
        for h in (0..m).rev() {
            u = chain.epoch_apply(h, &u);
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (a, b) in u.iter().zip(&v0) {
            let d = a - b;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        gamma_daily = u[ref_idx] - v0[ref_idx];
        let shift = u[ref_idx];
        for (slot, val) in v0.iter_mut().zip(&u) {
            *slot = val - shift;
        }
        if hi - lo < span_tol {
            gamma_daily = 0.5 * (hi + lo);
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Value(format!(
            "pool {j} relative value iteration did not reach span {span_tol} in {max_sweeps} sweeps"
        )));
    }
    let gamma = gamma_daily / m as f64;
    // Recover the per-epoch tables backward from the converged epoch-0
    // vector: v^h = applied_h(v^{h+1}) − γ.
    let mut v = vec![Vec::new(); m];
    let mut next = v0.clone();
    for h in (0..m).rev() {
        let mut cur = chain.epoch_apply(h, &next);
        cur.iter_mut().for_each(|x| *x -= gamma);
        v[h] = cur.clone();
        next = cur;
    }
    // Re-normalize so the reference state is exactly zero and check the
    // one-step residual everywhere.
    let shift = v[0][ref_idx];
    for table in v.iter_mut() {
        table.iter_mut().for_each(|x| *x -= shift);
    }
    for h in 0..m {
        let vnext = if h + 1 < m { &v[h + 1] } else { &v[0] };
        let applied = chain.epoch_apply(h, vnext);
        for (idx, (&a, &cur)) in applied.iter().zip(&v[h]).enumerate() {
            let residual = a - gamma - cur;
            if residual.abs() > 1e-8 {
                return Err(Error::Value(format!(
                    "pool {j} residual {residual:.3e} at state index {idx}, epoch {h}"
                )));
            }
        }
    }
    Ok(PoolModel {
        pool: chain.pool,
        n: chain.n,
        x_max: chain.x_max,
        epochs: m,
        gamma,
        v,
        offsets: chain.offsets,
        p_epoch: chain.p_epoch,
        mu: chain.mu,
        lambda: chain.lambda,
    })
}

/// Solves every pool in parallel.
pub fn build_all_pool_models(
    cfg: &SystemConfig,
    kbar: &KbarEstimate,
) -> Result<Vec<PoolModel>, Error> {
    (0..cfg.j())
        .into_par_iter()
        .map(|j| build_pool_model(cfg, j, kbar))
        .collect()
}

/// Feature vector length: intercept, V_d, then 5 polynomials per pool.
pub fn feature_len(j: usize) -> usize {
    2 + 5 * j
}

/// Features at a pre-action state: [1, V_d(s), x_j, x_j², y_j, y_j², x_j·y_j].
pub fn features(s: &State, pools: &[PoolModel]) -> Vec<f64> {
    let j = pools.len();
    let mut phi = Vec::with_capacity(feature_len(j));
    phi.push(1.0);
    phi.push(pools.iter().map(|p| p.value(s.h, s.x[p.pool], s.y[p.pool])).sum());
    for p in 0..j {
        let x = s.x[p] as f64;
        let y = s.y[p] as f64;
        phi.push(x);
        phi.push(x * x);
        phi.push(y);
        phi.push(y * y);
        phi.push(x * y);
    }
    phi
}

/// Exact expectation of `features(s')` under one exogenous step from the
/// post-action state of (s, f): polynomial moments in closed form, the V_d
/// coordinate via the single-pool transition rows.
pub fn expected_features(
    s: &State,
    f: &SystemAction,
    cfg: &SystemConfig,
    pools: &[PoolModel],
) -> Result<Vec<f64>, Error> {
    let post = apply_action(s, f, cfg)?;
    let j = cfg.j();
    let m = cfg.m();
    let h = s.h;
    let mut phi = Vec::with_capacity(feature_len(j));
    phi.push(1.0);
    phi.push(
        pools
            .iter()
            .map(|p| p.expected_next_value(h, post.x[p.pool], post.y[p.pool]))
            .sum(),
    );
    for p in 0..j {
        let xp = post.x[p] as f64;
        let y = post.y[p] as f64;
        let lambda = cfg.epoch_arrivals(p, h);
        let (ex, ex2, ey, ey2, exy);
        if m == 1 {
            let z = post.x[p].min(cfg.servers[p]) as f64;
            let mu = cfg.discharge_prob[p];
            let mean = xp + lambda - z * mu;
            let var = lambda + z * mu * (1.0 - mu);
            ex = mean;
            ex2 = var + mean * mean;
            ey = 0.0;
            ey2 = 0.0;
            exy = 0.0;
        } else if h == 0 {
            let z = post.x[p].min(cfg.servers[p]) as f64;
            let mu = cfg.discharge_prob[p];
            let mean = xp + lambda;
            ex = mean;
            ex2 = lambda + mean * mean;
            ey = z * mu;
            ey2 = z * mu * (1.0 - mu) + (z * mu) * (z * mu);
            exy = mean * ey;
        } else {
            let p_dep = cfg.discharge_epoch_prob(p, h)?;
            let mean = xp + lambda - y * p_dep;
            let var = lambda + y * p_dep * (1.0 - p_dep);
            ex = mean;
            ex2 = var + mean * mean;
            ey = y * (1.0 - p_dep);
            ey2 = y * p_dep * (1.0 - p_dep) + ey * ey;
            exy = (xp + lambda) * ey - p_dep * (1.0 - p_dep) * y * (y - 1.0);
        }
        phi.push(ex);
        phi.push(ex2);
        phi.push(ey);
        phi.push(ey2);
        phi.push(exy);
    }
    Ok(phi)
}

/// Per-epoch linear value model plus the shared average-cost estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochValueModel {
    pub beta: Vec<Vec<f64>>,
    pub gamma: f64,
    pub feature_len: usize,
}

impl EpochValueModel {
    pub fn value(&self, h: usize, phi: &[f64]) -> f64 {
        self.beta[h].iter().zip(phi).map(|(b, x)| b * x).sum()
    }
}

/// One fitting transition: epoch, current features, next-state features,
/// realized one-epoch cost.
#[derive(Debug, Clone)]
pub struct FitSample {
    pub h: usize,
    pub phi: Vec<f64>,
    pub phi_next: Vec<f64>,
    pub cost: f64,
}

/// Solves a dense linear system by Gaussian elimination with partial
/// pivoting. The matrix is consumed.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, Error> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::Value("singular system in value fit".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Joint per-epoch LSTD fit: stacked fixed-point system
/// M β = b with M = Σ_t z_t (z_t − z'_t)ᵀ + ridge·I, b = Σ_t z_t (g_t − γ̂),
/// where z_t embeds φ(s_t) in the epoch-h block and z'_t embeds φ(s_{t+1})
/// in the next epoch's block. γ̂ is the sample mean per-epoch cost.
pub fn fit_epoch_models(
    samples: &[FitSample],
    m: usize,
    flen: usize,
) -> Result<EpochValueModel, Error> {
    if samples.is_empty() {
        return Err(Error::Value("value fit needs at least one sample".into()));
    }
    let gamma = samples.iter().map(|s| s.cost).sum::<f64>() / samples.len() as f64;
    let dim = m * flen;
    let mut mat = vec![vec![0.0; dim]; dim];
    let mut rhs = vec![0.0; dim];
    for sample in samples {
        if sample.phi.len() != flen || sample.phi_next.len() != flen {
            return Err(Error::Value(format!(
                "feature length mismatch: expected {flen}, got {} / {}",
                sample.phi.len(),
                sample.phi_next.len()
            )));
        }
        let h = sample.h;
        let hn = (h + 1) % m;
        let target = sample.cost - gamma;
        for (r, &phi_r) in sample.phi.iter().enumerate() {
            let row_idx = h * flen + r;
            rhs[row_idx] += phi_r * target;
            let row = &mut mat[row_idx];
            for (c, &phi_c) in sample.phi.iter().enumerate() {
                row[h * flen + c] += phi_r * phi_c;
            }
            for (c, &phin_c) in sample.phi_next.iter().enumerate() {
                row[hn * flen + c] -= phi_r * phin_c;
            }
        }
    }
    // Normalize by the sample count so the fixed ridge acts on per-sample
    // moments; the fit is then invariant under dataset duplication.
    let inv_n = 1.0 / samples.len() as f64;
    for row in mat.iter_mut() {
        row.iter_mut().for_each(|v| *v *= inv_n);
    }
    rhs.iter_mut().for_each(|v| *v *= inv_n);
    let ridge = 1e-6;
    for (i, row) in mat.iter_mut().enumerate() {
        row[i] += ridge;
    }
    let beta_flat = solve_dense(mat, rhs)?;
    let beta = (0..m)
        .map(|h| beta_flat[h * flen..(h + 1) * flen].to_vec())
        .collect();
    Ok(EpochValueModel {
        beta,
        gamma,
        feature_len: flen,
    })
}

/// Raw advantage Â(s,f) = g − γ̂ + β^{h+1}·E[φ(s')] − β^h·φ(s).
pub fn raw_advantage(
    model: &EpochValueModel,
    h: usize,
    phi: &[f64],
    expected_phi_next: &[f64],
    cost: f64,
) -> f64 {
    let m = model.beta.len();
    cost - model.gamma + model.value((h + 1) % m, expected_phi_next) - model.value(h, phi)
}

/// Subtracts the per-epoch sample mean in place, so each epoch's
/// advantages average to exactly zero.
pub fn normalize_per_epoch(epochs: &[usize], advantages: &mut [f64], m: usize) {
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for (&h, &a) in epochs.iter().zip(advantages.iter()) {
        sums[h] += a;
        counts[h] += 1;
    }
    for (&h, a) in epochs.iter().zip(advantages.iter_mut()) {
        if counts[h] > 0 {
            *a -= sums[h] / counts[h] as f64;
        }
    }
}
