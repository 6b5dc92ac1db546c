//! Policy networks: three architectures over atomic-action logits, masked
//! softmax outputs, the clipped PPO surrogate, exact reverse-mode
//! differentiation, Adam updates, and the symmetric two-pool gradient oracle.
//!
//! All three structures map a scaled state to a J×J logit matrix whose row i
//! parameterizes κ(·|s,i). Masking happens at the probability level: a full
//! softmax over the row, then infeasible pools are zeroed and the row is
//! renormalized. Restricting the softmax to the feasible set gives the same
//! numbers; the probability-level form is what the gradients below assume.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::dynamics::{feasible_pools, State, SystemAction};
use crate::policy::AtomicDistribution;
use crate::Error;

/// The three network structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetStructure {
    /// One network; the epoch enters as a one-hot input block.
    FullyConnected,
    /// One independent network per epoch.
    FullySeparate,
    /// One shared hidden stack feeding per-epoch output blocks.
    PartiallyShared,
}

/// A dense layer, row-major weights of shape `n_out` × `n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
            n_in,
            n_out,
        }
    }

    fn init_hidden<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let mut d = Dense::zeros(n_in, n_out);
        for w in d.w.iter_mut() {
            *w = rng.random_range(-bound..bound);
        }
        d
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.b.clone();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.w[r * self.n_in..(r + 1) * self.n_in];
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        out
    }

    /// Accumulates the layer's gradient for one sample and returns the
    /// gradient w.r.t. the layer input.
    fn backward(&self, input: &[f64], dout: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.n_in];
        for (r, &d) in dout.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad.b[r] += d;
            let row = &self.w[r * self.n_in..(r + 1) * self.n_in];
            let grow = &mut grad.w[r * self.n_in..(r + 1) * self.n_in];
            for c in 0..self.n_in {
                grow[c] += d * input[c];
                dx[c] += d * row[c];
            }
        }
        dx
    }
}

/// Full parameter set of a policy network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub structure: NetStructure,
    pub classes: usize,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    /// Hidden stacks (tanh activations). One stack for FullyConnected and
    /// PartiallyShared, `epochs` stacks for FullySeparate.
    pub trunks: Vec<Vec<Dense>>,
    /// Linear output layers into the logit matrix. One for FullyConnected,
    /// `epochs` for the other two structures.
    pub heads: Vec<Dense>,
}

impl NetworkParams {
    /// Input dimension of the state encoding for this structure.
    pub fn input_dim(&self) -> usize {
        match self.structure {
            NetStructure::FullyConnected => 2 * self.classes + self.epochs,
            _ => 2 * self.classes,
        }
    }

    fn trunk_index(&self, h: usize) -> usize {
        match self.structure {
            NetStructure::FullySeparate => h,
            _ => 0,
        }
    }

    fn head_index(&self, h: usize) -> usize {
        match self.structure {
            NetStructure::FullyConnected => 0,
            _ => h,
        }
    }

    /// Creates a network with hidden weights uniform in ±1/√fan_in and
    /// zero output layers, so the initial policy is uniform over feasible
    /// pools in every state.
    pub fn new<R: Rng + ?Sized>(
        structure: NetStructure,
        classes: usize,
        epochs: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let input = match structure {
            NetStructure::FullyConnected => 2 * classes + epochs,
            _ => 2 * classes,
        };
        let out = classes * classes;
        let n_trunks = match structure {
            NetStructure::FullySeparate => epochs,
            _ => 1,
        };
        let n_heads = match structure {
            NetStructure::FullyConnected => 1,
            _ => epochs,
        };
        let mut trunks = Vec::with_capacity(n_trunks);
        for _ in 0..n_trunks {
            let mut stack = Vec::with_capacity(hidden.len());
            let mut n_in = input;
            for &width in hidden {
                stack.push(Dense::init_hidden(n_in, width, rng));
                n_in = width;
            }
            trunks.push(stack);
        }
        let head_in = hidden.last().copied().unwrap_or(input);
        let heads = (0..n_heads).map(|_| Dense::zeros(head_in, out)).collect();
        NetworkParams {
            structure,
            classes,
            epochs,
            hidden: hidden.to_vec(),
            trunks,
            heads,
        }
    }

    /// A zero-filled clone of the same shape (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for stack in z.trunks.iter_mut() {
            for layer in stack.iter_mut() {
                layer.w.iter_mut().for_each(|v| *v = 0.0);
                layer.b.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        for head in z.heads.iter_mut() {
            head.w.iter_mut().for_each(|v| *v = 0.0);
            head.b.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// Total scalar parameter count.
    pub fn n_params(&self) -> usize {
        let dense = |d: &Dense| d.w.len() + d.b.len();
        self.trunks
            .iter()
            .flat_map(|s| s.iter())
            .map(dense)
            .sum::<usize>()
            + self.heads.iter().map(dense).sum::<usize>()
    }

    /// Flattens parameters in canonical order (trunks then heads, weights
    /// before biases within a layer).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for layer in self.trunks.iter().flatten().chain(self.heads.iter()) {
            out.extend_from_slice(&layer.w);
            out.extend_from_slice(&layer.b);
        }
        out
    }

    /// Overwrites parameters from a flat vector in canonical order.
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<(), Error> {
        if flat.len() != self.n_params() {
            return Err(Error::Net(format!(
                "flat vector has {} entries, network has {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut pos = 0;
        for layer in self
            .trunks
            .iter_mut()
            .flatten()
            .chain(self.heads.iter_mut())
        {
            let wn = layer.w.len();
            layer.w.copy_from_slice(&flat[pos..pos + wn]);
            pos += wn;
            let bn = layer.b.len();
            layer.b.copy_from_slice(&flat[pos..pos + bn]);
            pos += bn;
        }
        Ok(())
    }

    /// Adds another gradient accumulator of the same shape.
    pub fn add_assign(&mut self, other: &NetworkParams) {
        for (a, b) in self
            .trunks
            .iter_mut()
            .flatten()
            .chain(self.heads.iter_mut())
            .zip(other.trunks.iter().flatten().chain(other.heads.iter()))
        {
            for (x, y) in a.w.iter_mut().zip(&b.w) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += y;
            }
        }
    }

    /// Checks shape consistency against a system config.
    pub fn check(&self, cfg: &SystemConfig) -> Result<(), Error> {
        if self.classes != cfg.j() || self.epochs != cfg.m() {
            return Err(Error::Net(format!(
                "network built for J={}, m={}, config has J={}, m={}",
                self.classes,
                self.epochs,
                cfg.j(),
                cfg.m()
            )));
        }
        Ok(())
    }

    /// Serializes the weights (with structure tag and dims) as JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("weights serialize")
    }

    /// Loads weights from JSON and validates against a config.
    pub fn from_json(text: &str, cfg: &SystemConfig) -> Result<Self, Error> {
        let p: NetworkParams = serde_json::from_str(text).map_err(|e| Error::Net(e.to_string()))?;
        p.check(cfg)?;
        Ok(p)
    }
}

/// Scaled state encoding: x_j/N_j and y_j/N_j, plus a one-hot epoch block
/// for the fully-connected structure.
pub fn input_encoding(s: &State, structure: NetStructure, cfg: &SystemConfig) -> Vec<f64> {
    let j = cfg.j();
    let mut v = Vec::with_capacity(2 * j + cfg.m());
    for p in 0..j {
        v.push(s.x[p] as f64 / cfg.servers[p] as f64);
    }
    for p in 0..j {
        v.push(s.y[p] as f64 / cfg.servers[p] as f64);
    }
    if structure == NetStructure::FullyConnected {
        for h in 0..cfg.m() {
            v.push(if h == s.h { 1.0 } else { 0.0 });
        }
    }
    v
}

/// Forward-pass cache for one sample: layer inputs and the logit matrix.
struct Cache {
    /// Input followed by each trunk layer's tanh output.
    activations: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

fn forward_cached(params: &NetworkParams, s: &State, cfg: &SystemConfig) -> Cache {
    let input = input_encoding(s, params.structure, cfg);
    let trunk = &params.trunks[params.trunk_index(s.h)];
    let mut activations = vec![input];
    for layer in trunk {
        let mut a = layer.apply(activations.last().unwrap());
        a.iter_mut().for_each(|v| *v = v.tanh());
        activations.push(a);
    }
    let logits = params.heads[params.head_index(s.h)].apply(activations.last().unwrap());
    Cache {
        activations,
        logits,
    }
}

/// Row-wise masked softmax: full softmax over each class row, infeasible
/// pools zeroed, row renormalized.
fn masked_rows(logits: &[f64], s: &State, cfg: &SystemConfig) -> Vec<Vec<f64>> {
    let j = cfg.j();
    let mut rows = Vec::with_capacity(j);
    for i in 0..j {
        let row = &logits[i * j..(i + 1) * j];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|g| (g - max).exp()).collect();
        let feasible = feasible_pools(s, i, cfg);
        let mass: f64 = feasible.iter().map(|&k| exps[k]).sum();
        let mut kappa = vec![0.0; j];
        for &k in &feasible {
            kappa[k] = exps[k] / mass;
        }
        rows.push(kappa);
    }
    rows
}

/// Forward pass: atomic distribution with feasibility masking.
pub fn forward(
    params: &NetworkParams,
    s: &State,
    cfg: &SystemConfig,
) -> Result<AtomicDistribution, Error> {
    params.check(cfg)?;
    let cache = forward_cached(params, s, cfg);
    Ok(AtomicDistribution {
        kappa: masked_rows(&cache.logits, s, cfg),
    })
}

/// One PPO training sample: the pre-action state, the realized action, its
/// normalized advantage, and the κ matrix of the policy that generated it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSample {
    pub state: State,
    pub action: SystemAction,
    pub advantage: f64,
    pub kappa_old: Vec<Vec<f64>>,
    /// Sequential-mode atomic record: (class, chosen pool, old probability)
    /// per atomic step, in realized order. Empty in batched mode.
    pub atomic_steps: Vec<(usize, usize, f64)>,
}

fn log_ratio_batched(kappa_new: &[Vec<f64>], sample: &TrainSample) -> Result<f64, Error> {
    let mut lr = 0.0;
    for (i, row) in sample.action.f.iter().enumerate() {
        for (k, &count) in row.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let new = kappa_new[i][k];
            let old = sample.kappa_old[i][k];
            if old <= 0.0 || new <= 0.0 {
                return Err(Error::Net(format!(
                    "ratio undefined: kappa[{i}][{k}] new={new}, old={old} with count {count}"
                )));
            }
            lr += count as f64 * (new.ln() - old.ln());
        }
    }
    Ok(lr)
}

/// Replays a sequential-mode atomic record and evaluates the per-step
/// clipped surrogate: every atomic decision is its own PPO sample with
/// ratio κ_θ(pick|s_step)/κ_old at the reconstructed intermediate state,
/// sharing the record's epoch advantage. The record's contribution is the
/// mean over its steps, so a long queue cannot amplify a single ratio
/// multiplicatively. With `grad`, each step's gradient is accumulated
/// through its own replayed forward pass, weighted by `scale`.
fn sequential_surrogate(
    params: &NetworkParams,
    sample: &TrainSample,
    eps: f64,
    scale: f64,
    cfg: &SystemConfig,
    mut grad: Option<&mut NetworkParams>,
) -> Result<f64, Error> {
    let j = cfg.j();
    let mut s = sample.state.clone();
    let mut total = 0.0;
    let step_weight = 1.0 / sample.atomic_steps.len() as f64;
    for &(class, pick, old_p) in &sample.atomic_steps {
        let cache = forward_cached(params, &s, cfg);
        let kappa = masked_rows(&cache.logits, &s, cfg);
        let new_p = kappa[class][pick];
        if old_p <= 0.0 || new_p <= 0.0 {
            return Err(Error::Net(format!(
                "ratio undefined at atomic step: class {class}, pool {pick}, new={new_p}, old={old_p}"
            )));
        }
        let r = new_p / old_p;
        let (term, dlogr) = surrogate(r, sample.advantage, eps);
        total += step_weight * term;
        if let Some(g) = grad.as_deref_mut() {
            if dlogr != 0.0 {
                let w = dlogr * step_weight * scale;
                let mut dlogits = vec![0.0; j * j];
                for l in 0..j {
                    if kappa[class][l] > 0.0 || l == pick {
                        let indicator = if l == pick { 1.0 } else { 0.0 };
                        dlogits[class * j + l] = w * (indicator - kappa[class][l]);
                    }
                }
                backprop(params, &cache, &s, &dlogits, g);
            }
        }
        if pick != class {
            s.x[pick] += 1;
            s.x[class] -= 1;
        }
    }
    Ok(total)
}

/// Per-sample clipped surrogate term and, if the unclipped branch is
/// active, the derivative d(term)/d(log r) = r·Â.
fn surrogate(r: f64, adv: f64, eps: f64) -> (f64, f64) {
    let unclipped = r * adv;
    let clipped = r.clamp(1.0 - eps, 1.0 + eps) * adv;
    if unclipped >= clipped {
        (unclipped, r * adv)
    } else {
        (clipped, 0.0)
    }
}

/// PPO surrogate loss (Eq. 9): mean over samples of
/// max(r·Â, clip(r, 1−ε, 1+ε)·Â), minimized during training.
pub fn ppo_loss(
    params: &NetworkParams,
    batch: &[TrainSample],
    eps: f64,
    cfg: &SystemConfig,
) -> Result<f64, Error> {
    params.check(cfg)?;
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for sample in batch {
        if !sample.atomic_steps.is_empty() {
            total += sequential_surrogate(params, sample, eps, 1.0, cfg, None)?;
            continue;
        }
        let cache = forward_cached(params, &sample.state, cfg);
        let kappa = masked_rows(&cache.logits, &sample.state, cfg);
        let lr = log_ratio_batched(&kappa, sample)?;
        let r = lr.exp();
        if !r.is_finite() {
            return Err(Error::Net(format!(
                "nonfinite ratio at state {:?}",
                sample.state
            )));
        }
        let (term, _) = surrogate(r, sample.advantage, eps);
        total += term;
    }
    Ok(total / batch.len() as f64)
}

fn sample_gradient(
    params: &NetworkParams,
    sample: &TrainSample,
    eps: f64,
    scale: f64,
    cfg: &SystemConfig,
    grad: &mut NetworkParams,
) -> Result<f64, Error> {
    let j = cfg.j();
    if !sample.atomic_steps.is_empty() {
        let term = sequential_surrogate(params, sample, eps, scale, cfg, Some(grad))?;
        return Ok(term * scale);
    }
    let cache = forward_cached(params, &sample.state, cfg);
    let kappa = masked_rows(&cache.logits, &sample.state, cfg);
    let lr = log_ratio_batched(&kappa, sample)?;
    let r = lr.exp();
    if !r.is_finite() {
        return Err(Error::Net(format!(
            "nonfinite ratio at state {:?}",
            sample.state
        )));
    }
    let (term, dlogr) = surrogate(r, sample.advantage, eps);
    if dlogr != 0.0 {
        // d(log r)/d(logit g_{i,l}) = f_{i,l} − q_i·κ(l) over feasible l.
        let mut dlogits = vec![0.0; j * j];
        for i in 0..j {
            let q: u32 = sample.action.f[i].iter().sum();
            if q == 0 {
                continue;
            }
            for l in 0..j {
                if kappa[i][l] > 0.0 || sample.action.f[i][l] > 0 {
                    dlogits[i * j + l] =
                        dlogr * scale * (sample.action.f[i][l] as f64 - q as f64 * kappa[i][l]);
                }
            }
        }
        backprop(params, &cache, &sample.state, &dlogits, grad);
    }
    Ok(term * scale)
}

fn backprop(
    params: &NetworkParams,
    cache: &Cache,
    s: &State,
    dlogits: &[f64],
    grad: &mut NetworkParams,
) {
    let ti = params.trunk_index(s.h);
    let hi = params.head_index(s.h);
    let head = &params.heads[hi];
    let mut da = head.backward(cache.activations.last().unwrap(), dlogits, &mut grad.heads[hi]);
    let trunk = &params.trunks[ti];
    for (depth, layer) in trunk.iter().enumerate().rev() {
        let a = &cache.activations[depth + 1];
        for (d, act) in da.iter_mut().zip(a) {
            *d *= 1.0 - act * act;
        }
        da = layer.backward(&cache.activations[depth], &da, &mut grad.trunks[ti][depth]);
    }
}

/// Gradient of [`ppo_loss`] w.r.t. every parameter, with the loss value.
/// Samples on the saturated clip plateau contribute zero gradient.
/// Deterministic regardless of thread scheduling: fixed-size chunks are
/// differentiated in parallel and reduced in order.
pub fn backward(
    params: &NetworkParams,
    batch: &[TrainSample],
    eps: f64,
    cfg: &SystemConfig,
) -> Result<(f64, NetworkParams), Error> {
    params.check(cfg)?;
    let mut grad = params.zeros_like();
    if batch.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / batch.len() as f64;
    let chunk = 256;
    let partials: Vec<Result<(f64, NetworkParams), Error>> = batch
        .par_chunks(chunk)
        .map(|samples| {
            let mut g = params.zeros_like();
            let mut loss = 0.0;
            for sample in samples {
                loss += sample_gradient(params, sample, eps, scale, cfg, &mut g)?;
            }
            Ok((loss, g))
        })
        .collect();
    let mut loss = 0.0;
    for part in partials {
        let (l, g) = part?;
        loss += l;
        grad.add_assign(&g);
    }
    Ok((loss, grad))
}

/// Adam optimizer state, shaped as flat moment vectors over the canonical
/// parameter order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(lr: f64, n_params: usize) -> Self {
        OptimizerState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(
    params: &mut NetworkParams,
    grad: &NetworkParams,
    opt: &mut OptimizerState,
) -> Result<(), Error> {
    let n = params.n_params();
    if opt.m.len() != n {
        return Err(Error::Net(format!(
            "optimizer sized for {} params, network has {n}",
            opt.m.len()
        )));
    }
    opt.step += 1;
    let b1t = 1.0 - opt.beta1.powi(opt.step as i32);
    let b2t = 1.0 - opt.beta2.powi(opt.step as i32);
    let mut flat = params.to_flat();
    let gflat = grad.to_flat();
    for i in 0..n {
        opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * gflat[i];
        opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * gflat[i] * gflat[i];
        let mhat = opt.m[i] / b1t;
        let vhat = opt.v[i] / b2t;
        flat[i] -= opt.lr * mhat / (vhat.sqrt() + opt.eps);
    }
    params.load_flat(&flat)
}

/// Fits the network by cross-entropy to imitate target atomic rows on a set
/// of sampled states. Targets must be supported on the feasible pools of
/// each state. Returns the final cross-entropy.
pub fn warm_start(
    params: &mut NetworkParams,
    samples: &[(State, Vec<Vec<f64>>)],
    cfg: &SystemConfig,
    iters: usize,
    lr: f64,
) -> Result<f64, Error> {
    params.check(cfg)?;
    if samples.is_empty() {
        return Err(Error::Net("warm start needs at least one state".into()));
    }
    let j = cfg.j();
    let mut opt = OptimizerState::new(lr, params.n_params());
    let mut ce = 0.0;
    for _ in 0..iters {
        let mut grad = params.zeros_like();
        ce = 0.0;
        let scale = 1.0 / samples.len() as f64;
        for (s, target) in samples {
            let cache = forward_cached(params, s, cfg);
            let kappa = masked_rows(&cache.logits, s, cfg);
            let mut dlogits = vec![0.0; j * j];
            let mut any = false;
            for i in 0..j {
                let q = s.queue(i, cfg);
                if q == 0 {
                    continue;
                }
                let weight = q as f64 * scale;
                for l in 0..j {
                    if target[i][l] > 0.0 {
                        if kappa[i][l] <= 0.0 {
                            return Err(Error::Net(format!(
                                "imitation target on masked pool {l} for class {i}"
                            )));
                        }
                        ce -= weight * target[i][l] * kappa[i][l].ln();
                    }
                    if kappa[i][l] > 0.0 || target[i][l] > 0.0 {
                        dlogits[i * j + l] = weight * (kappa[i][l] - target[i][l]);
                        any = true;
                    }
                }
            }
            if any {
                backprop(params, &cache, s, &dlogits, &mut grad);
            }
        }
        adam_step(params, &grad, &mut opt)?;
    }
    Ok(ce)
}

/// Closed-form gradient of the unclipped surrogate for the symmetric
/// two-pool instance with a logistic atomic policy
/// κ_θ(2|s,1) = σ(θ₀ + θ₁x₁ + θ₂x₂) and quadratic value coefficients β̂₃:
///
/// ∇₀ = q₁κ(1−κ)·(2β̂₃(1−μ)²(2(q₁−1)κ + x₂ − x₁ + 1) + B − C),
/// ∂/∂θ₀ = ∇₀, ∂/∂θ_k = ∇₀·x_k.
pub fn twopool_gradient_oracle(
    theta: [f64; 3],
    s: &State,
    beta3: f64,
    cfg: &SystemConfig,
) -> Result<[f64; 3], Error> {
    if cfg.j() != 2
        || cfg.servers[0] != cfg.servers[1]
        || (cfg.daily_rate[0] - cfg.daily_rate[1]).abs() > 1e-12
        || (cfg.discharge_prob[0] - cfg.discharge_prob[1]).abs() > 1e-12
        || (cfg.holding_cost[0] - cfg.holding_cost[1]).abs() > 1e-12
        || cfg.route_cost(0, 1) != cfg.route_cost(1, 0)
    {
        return Err(Error::Net(
            "gradient oracle requires a symmetric two-pool instance".into(),
        ));
    }
    let x1 = s.x[0] as f64;
    let x2 = s.x[1] as f64;
    let q1 = s.queue(0, cfg) as f64;
    let mu = cfg.discharge_prob[0];
    let b = cfg.route_cost(0, 1).expect("symmetric route");
    let c = cfg.holding_cost[0];
    let z = theta[0] + theta[1] * x1 + theta[2] * x2;
    let kappa = 1.0 / (1.0 + (-z).exp());
    let grad0 = q1
        * kappa
        * (1.0 - kappa)
        * (2.0 * beta3 * (1.0 - mu).powi(2) * (2.0 * (q1 - 1.0) * kappa + x2 - x1 + 1.0) + b - c);
    Ok([grad0, grad0 * x1, grad0 * x2])
}
