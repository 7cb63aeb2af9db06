//! Minimal advantage actor-critic.
//!
//! One shared `tanh` hidden layer feeds a policy head (categorical logits or
//! diagonal-Gaussian means with a state-independent log-std) and a scalar
//! value head. Gradients are computed by hand; see `tests/gradient_check.rs`
//! for the finite-difference oracle.
//!
//! The gradient step minimises, per sample and averaged over the batch,
//!
//! ```text
//! -log pi(a|s) * A  +  c_v * (y - V(s))^2  -  entropy_coef * H(pi(.|s))
//! ```
//!
//! with `y = r + gamma * V(s')` (zero bootstrap on `done`) and `A = y - V(s)`
//! both held fixed. The logged [`LossBreakdown`] instead keeps the signed TD
//! residual so that `total = pi_loss + v_loss * c_v`.

use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::{Action, ActionSpace, MdpSpec, Transition};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_C_V: f64 = 0.5;
pub const DEFAULT_ENTROPY_COEF: f64 = 0.01;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("state has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("action {0} does not match the policy head")]
    ActionMismatch(String),
    #[error("probability {0} is not positive")]
    NonPositiveProbability(f64),
    #[error("non-finite gradient at batch index {index}")]
    NonFiniteGradient { index: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid learning rate {0}")]
    InvalidLearningRate(f64),
    #[error("parameter vector has length {found}, architecture needs {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("unrecognised architecture descriptor `{0}`")]
    BadDescriptor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Head {
    Categorical { actions: usize },
    Gaussian { dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Architecture {
    pub state_dim: usize,
    pub hidden: usize,
    pub head: Head,
}

impl Architecture {
    pub fn for_spec(spec: &MdpSpec, hidden: usize) -> Self {
        let head = match &spec.action_space {
            ActionSpace::Discrete(n) => Head::Categorical { actions: *n },
            ActionSpace::Continuous { low, .. } => Head::Gaussian { dim: low.len() },
        };
        Architecture { state_dim: spec.state_dim, hidden, head }
    }

    pub fn out_dim(&self) -> usize {
        match self.head {
            Head::Categorical { actions } => actions,
            Head::Gaussian { dim } => dim,
        }
    }

    fn log_std_len(&self) -> usize {
        match self.head {
            Head::Categorical { .. } => 0,
            Head::Gaussian { dim } => dim,
        }
    }

    pub fn param_count(&self) -> usize {
        let (s, h, o) = (self.state_dim, self.hidden, self.out_dim());
        h * s + h + o * h + o + h + 1 + self.log_std_len()
    }

    fn layout(&self) -> Layout {
        let (s, h, o) = (self.state_dim, self.hidden, self.out_dim());
        let w1 = 0;
        let b1 = w1 + h * s;
        let wp = b1 + h;
        let bp = wp + o * h;
        let wv = bp + o;
        let bv = wv + h;
        let log_std = bv + 1;
        Layout { w1, b1, wp, bp, wv, bv, log_std, end: log_std + self.log_std_len() }
    }

    /// Canonical text form, e.g. `mlp-tanh;state=25;hidden=64;categorical=4`.
    pub fn descriptor(&self) -> String {
        let head = match self.head {
            Head::Categorical { actions } => format!("categorical={actions}"),
            Head::Gaussian { dim } => format!("gaussian={dim}"),
        };
        format!("mlp-tanh;state={};hidden={};{head}", self.state_dim, self.hidden)
    }

    pub fn from_descriptor(text: &str) -> Result<Self, LearnerError> {
        let bad = || LearnerError::BadDescriptor(text.to_string());
        let parts: Vec<&str> = text.split(';').collect();
        if parts.len() != 4 || parts[0] != "mlp-tanh" {
            return Err(bad());
        }
        let field = |part: &str, key: &str| -> Result<usize, LearnerError> {
            part.strip_prefix(key)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(bad)
        };
        let state_dim = field(parts[1], "state")?;
        let hidden = field(parts[2], "hidden")?;
        let head = if parts[3].starts_with("categorical") {
            Head::Categorical { actions: field(parts[3], "categorical")? }
        } else {
            Head::Gaussian { dim: field(parts[3], "gaussian")? }
        };
        Ok(Architecture { state_dim, hidden, head })
    }

    /// Hex SHA-256 of [`Architecture::descriptor`].
    pub fn config_hash(&self) -> String {
        Sha256::digest(self.descriptor().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    wp: usize,
    bp: usize,
    wv: usize,
    bv: usize,
    log_std: usize,
    end: usize,
}

/// Flat parameter vector laid out as
/// `[W1 (hidden x state, row-major) | b1 | Wp (out x hidden) | bp | wv | bv | log_std]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    arch: Architecture,
    data: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(arch: Architecture) -> Self {
        PolicyParams { arch, data: vec![0.0; arch.param_count()] }
    }

    /// Random trunk, zero heads (uniform initial policy), log-std of -0.5.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        let l = arch.layout();
        let scale = 1.0 / (arch.state_dim as f64).sqrt();
        for w in &mut p.data[l.w1..l.b1] {
            *w = scale * rng.sample::<f64, _>(StandardNormal);
        }
        for ls in &mut p.data[l.log_std..l.end] {
            *ls = -0.5;
        }
        p
    }

    pub fn from_flat(arch: Architecture, data: Vec<f64>) -> Result<Self, LearnerError> {
        if data.len() != arch.param_count() {
            return Err(LearnerError::LengthMismatch {
                expected: arch.param_count(),
                found: data.len(),
            });
        }
        Ok(PolicyParams { arch, data })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn policy_head_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let l = self.arch.layout();
        let (w, b) = self.data[l.wp..l.wv].split_at_mut(l.bp - l.wp);
        (w, b)
    }

    pub fn log_std(&self) -> &[f64] {
        let l = self.arch.layout();
        &self.data[l.log_std..l.end]
    }

    pub fn log_std_mut(&mut self) -> &mut [f64] {
        let l = self.arch.layout();
        &mut self.data[l.log_std..l.end]
    }

    pub fn clamp_log_std(&mut self) {
        for ls in self.log_std_mut() {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    fn check_state(&self, state: &[f64]) -> Result<(), LearnerError> {
        if state.len() != self.arch.state_dim {
            return Err(LearnerError::DimensionMismatch {
                expected: self.arch.state_dim,
                found: state.len(),
            });
        }
        Ok(())
    }

    fn forward(&self, state: &[f64]) -> Forward {
        let a = &self.arch;
        let l = a.layout();
        let d = &self.data;
        let (sd, nh, no) = (a.state_dim, a.hidden, a.out_dim());
        let mut hidden = d[l.b1..l.b1 + nh].to_vec();
        for (i, &s) in state.iter().enumerate() {
            // one-hot observations are mostly zeros
            if s == 0.0 {
                continue;
            }
            for (h, z) in hidden.iter_mut().enumerate() {
                *z += d[l.w1 + h * sd + i] * s;
            }
        }
        for z in hidden.iter_mut() {
            *z = z.tanh();
        }
        let out = (0..no)
            .map(|o| {
                let row = &d[l.wp + o * nh..l.wp + (o + 1) * nh];
                d[l.bp + o] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        let value = d[l.bv]
            + d[l.wv..l.wv + nh].iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>();
        Forward { hidden, out, value }
    }

    pub fn value(&self, state: &[f64]) -> Result<f64, LearnerError> {
        self.check_state(state)?;
        Ok(self.forward(state).value)
    }

    fn dist_from_out(&self, out: Vec<f64>) -> ActionDist {
        match self.arch.head {
            Head::Categorical { .. } => ActionDist::categorical_from_logits(&out),
            Head::Gaussian { .. } => ActionDist::Gaussian {
                mean: out,
                log_std: self.log_std().iter().map(|x| x.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect(),
            },
        }
    }
}

struct Forward {
    hidden: Vec<f64>,
    out: Vec<f64>,
    value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionDist {
    Categorical { probs: Vec<f64>, log_probs: Vec<f64> },
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

impl ActionDist {
    pub fn categorical_from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let log_probs: Vec<f64> = logits.iter().map(|x| x - lse).collect();
        let mut probs: Vec<f64> = log_probs.iter().map(|x| x.exp()).collect();
        let total: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= total;
        }
        ActionDist::Categorical { probs, log_probs }
    }

    pub fn categorical(probs: Vec<f64>) -> Self {
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        ActionDist::Categorical { probs, log_probs }
    }

    pub fn gaussian(mean: Vec<f64>, std: &[f64]) -> Self {
        ActionDist::Gaussian { mean, log_std: std.iter().map(|s| s.ln()).collect() }
    }

    pub fn std(&self) -> Option<Vec<f64>> {
        match self {
            ActionDist::Gaussian { log_std, .. } => Some(log_std.iter().map(|x| x.exp()).collect()),
            ActionDist::Categorical { .. } => None,
        }
    }

    pub fn log_prob(&self, action: &Action) -> Result<f64, LearnerError> {
        match (self, action) {
            (ActionDist::Categorical { log_probs, .. }, Action::Discrete(a)) if *a < log_probs.len() => {
                Ok(log_probs[*a])
            }
            (ActionDist::Gaussian { mean, log_std }, Action::Continuous(a)) if a.len() == mean.len() => {
                Ok(mean
                    .iter()
                    .zip(log_std)
                    .zip(a)
                    .map(|((m, ls), x)| {
                        let z = (x - m) / ls.exp();
                        -0.5 * z * z - ls - HALF_LN_2PI
                    })
                    .sum())
            }
            _ => Err(LearnerError::ActionMismatch(action.to_string())),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            ActionDist::Categorical { probs, log_probs } => {
                -probs.iter().zip(log_probs).map(|(p, lp)| p * lp).sum::<f64>()
            }
            ActionDist::Gaussian { log_std, .. } => {
                log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum()
            }
        }
    }

    /// Deterministic action: argmax (lowest index on ties) or the mean.
    pub fn greedy(&self) -> Action {
        match self {
            ActionDist::Categorical { probs, .. } => {
                let mut best = 0;
                for (i, p) in probs.iter().enumerate() {
                    if *p > probs[best] {
                        best = i;
                    }
                }
                Action::Discrete(best)
            }
            ActionDist::Gaussian { mean, .. } => Action::Continuous(mean.clone()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        match self {
            ActionDist::Categorical { probs, .. } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Action::Discrete(i);
                    }
                }
                Action::Discrete(probs.len() - 1)
            }
            ActionDist::Gaussian { mean, log_std } => Action::Continuous(
                mean.iter()
                    .zip(log_std)
                    .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            ),
        }
    }
}

pub fn policy_distribution(params: &PolicyParams, state: &[f64]) -> Result<ActionDist, LearnerError> {
    params.check_state(state)?;
    Ok(params.dist_from_out(params.forward(state).out))
}

/// Signed one-step TD residual `r + gamma * v_next - v_curr`.
pub fn value_loss(reward: f64, gamma: f64, v_next: f64, v_curr: f64) -> f64 {
    reward + gamma * v_next - v_curr
}

/// `-log(action_prob) * advantage`. For continuous heads pass the density.
pub fn policy_loss(action_prob: f64, advantage: f64) -> Result<f64, LearnerError> {
    if !(action_prob > 0.0) {
        return Err(LearnerError::NonPositiveProbability(action_prob));
    }
    Ok(-action_prob.ln() * advantage)
}

pub fn total_error(pi_loss: f64, v_loss: f64, c_v: f64) -> f64 {
    pi_loss + v_loss * c_v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub pi_loss: f64,
    pub v_loss: f64,
    pub total: f64,
    pub c_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub gamma: f64,
    pub c_v: f64,
    pub entropy_coef: f64,
}

impl LossConfig {
    pub fn new(gamma: f64) -> Self {
        LossConfig { gamma, c_v: DEFAULT_C_V, entropy_coef: DEFAULT_ENTROPY_COEF }
    }
}

/// Bootstrapped quantities frozen at the parameters a step starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub value_targets: Vec<f64>,
    pub advantages: Vec<f64>,
    pub td_residuals: Vec<f64>,
}

impl Targets {
    pub fn compute(params: &PolicyParams, batch: &[Transition], gamma: f64) -> Result<Self, LearnerError> {
        let mut out = Targets {
            value_targets: Vec::with_capacity(batch.len()),
            advantages: Vec::with_capacity(batch.len()),
            td_residuals: Vec::with_capacity(batch.len()),
        };
        for tr in batch {
            let v_curr = params.value(&tr.state)?;
            let v_next = if tr.done { 0.0 } else { params.value(&tr.next_state)? };
            let delta = value_loss(tr.reward, gamma, v_next, v_curr);
            out.value_targets.push(tr.reward + gamma * v_next);
            out.advantages.push(delta);
            out.td_residuals.push(delta);
        }
        Ok(out)
    }
}

/// Mean surrogate objective at `params` with `targets` held fixed.
pub fn surrogate_objective(
    params: &PolicyParams,
    batch: &[Transition],
    targets: &Targets,
    cfg: &LossConfig,
) -> Result<f64, LearnerError> {
    if batch.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    let mut sum = 0.0;
    for (j, tr) in batch.iter().enumerate() {
        params.check_state(&tr.state)?;
        let fwd = params.forward(&tr.state);
        let dist = params.dist_from_out(fwd.out);
        let err = targets.value_targets[j] - fwd.value;
        sum += -dist.log_prob(&tr.action)? * targets.advantages[j] + cfg.c_v * err * err
            - cfg.entropy_coef * dist.entropy();
    }
    Ok(sum / batch.len() as f64)
}

/// Analytic gradient of [`surrogate_objective`] with respect to the flat
/// parameter vector.
pub fn surrogate_gradient(
    params: &PolicyParams,
    batch: &[Transition],
    targets: &Targets,
    cfg: &LossConfig,
) -> Result<Vec<f64>, LearnerError> {
    if batch.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    let arch = params.arch;
    let l = arch.layout();
    let (sd, nh, no) = (arch.state_dim, arch.hidden, arch.out_dim());
    let d = &params.data;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; d.len()];
    let mut sample = vec![0.0; d.len()];

    for (j, tr) in batch.iter().enumerate() {
        params.check_state(&tr.state)?;
        let fwd = params.forward(&tr.state);
        let adv = targets.advantages[j];
        let d_value = -2.0 * cfg.c_v * (targets.value_targets[j] - fwd.value);
        let mut d_out = vec![0.0; no];
        sample.iter_mut().for_each(|g| *g = 0.0);

        match arch.head {
            Head::Categorical { .. } => {
                let a = tr
                    .action
                    .as_discrete()
                    .filter(|a| *a < no)
                    .ok_or_else(|| LearnerError::ActionMismatch(tr.action.to_string()))?;
                let dist = ActionDist::categorical_from_logits(&fwd.out);
                let ActionDist::Categorical { probs, log_probs } = &dist else { unreachable!() };
                let entropy = dist.entropy();
                for k in 0..no {
                    let indicator = if k == a { 1.0 } else { 0.0 };
                    d_out[k] = adv * (probs[k] - indicator)
                        + cfg.entropy_coef * probs[k] * (log_probs[k] + entropy);
                }
            }
            Head::Gaussian { .. } => {
                let a = tr
                    .action
                    .as_continuous()
                    .filter(|a| a.len() == no)
                    .ok_or_else(|| LearnerError::ActionMismatch(tr.action.to_string()))?;
                for k in 0..no {
                    let raw = d[l.log_std + k];
                    let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                    let sigma = ls.exp();
                    let z = (a[k] - fwd.out[k]) / sigma;
                    d_out[k] = -adv * z / sigma;
                    if raw == ls {
                        sample[l.log_std + k] = adv * (1.0 - z * z) - cfg.entropy_coef;
                    }
                }
            }
        }

        let mut d_hidden = vec![0.0; nh];
        for o in 0..no {
            sample[l.bp + o] = d_out[o];
            for h in 0..nh {
                sample[l.wp + o * nh + h] = d_out[o] * fwd.hidden[h];
                d_hidden[h] += d[l.wp + o * nh + h] * d_out[o];
            }
        }
        sample[l.bv] = d_value;
        for h in 0..nh {
            sample[l.wv + h] = d_value * fwd.hidden[h];
            d_hidden[h] += d[l.wv + h] * d_value;
        }
        for h in 0..nh {
            let dz = d_hidden[h] * (1.0 - fwd.hidden[h] * fwd.hidden[h]);
            sample[l.b1 + h] = dz;
            for (i, &s) in tr.state.iter().enumerate() {
                if s != 0.0 {
                    sample[l.w1 + h * sd + i] = dz * s;
                }
            }
        }

        if sample.iter().any(|g| !g.is_finite()) {
            return Err(LearnerError::NonFiniteGradient { index: j });
        }
        for (g, s) in grad.iter_mut().zip(&sample) {
            *g += s * scale;
        }
    }
    Ok(grad)
}

/// One plain gradient-descent step. Returns the updated parameters and the
/// per-sample loss terms evaluated at the incoming parameters.
pub fn train_step(
    params: &PolicyParams,
    batch: &[Transition],
    learning_rate: f64,
    cfg: &LossConfig,
) -> Result<(PolicyParams, Vec<LossBreakdown>), LearnerError> {
    if batch.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    if !(learning_rate >= 0.0) || !learning_rate.is_finite() {
        return Err(LearnerError::InvalidLearningRate(learning_rate));
    }
    let targets = Targets::compute(params, batch, cfg.gamma)?;
    let mut losses = Vec::with_capacity(batch.len());
    for (j, tr) in batch.iter().enumerate() {
        let dist = policy_distribution(params, &tr.state)?;
        let pi_loss = -dist.log_prob(&tr.action)? * targets.advantages[j];
        let v_loss = targets.td_residuals[j];
        losses.push(LossBreakdown {
            pi_loss,
            v_loss,
            total: total_error(pi_loss, v_loss, cfg.c_v),
            c_v: cfg.c_v,
        });
    }
    let grad = surrogate_gradient(params, batch, &targets, cfg)?;
    let mut next = params.clone();
    if learning_rate > 0.0 {
        for (p, g) in next.data.iter_mut().zip(&grad) {
            *p -= learning_rate * g;
        }
        next.clamp_log_std();
    }
    Ok((next, losses))
}
