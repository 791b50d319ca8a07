//! Actor-critic selector over the candidate slate plus round-robin.

mod checkpoint;
pub mod mlp;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{FORMAT_VERSION, MAGIC};
pub use mlp::Mlp;
pub use train::{agent_rng, train, train_until, BanditEnvironment, Environment, EpochReport, TrainConfig};

pub const HIDDEN: [usize; 2] = [128, 64];
pub const ITERATIONS_PER_EPOCH: usize = 96;
pub const DEFAULT_BATCH: usize = 16;
pub const INIT_SCALE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("state has {got} entries, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("action {action} out of range for {count} actions")]
    BadAction { action: usize, count: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty reward window")]
    EmptyWindow,
    #[error("latency must be positive, got {0}")]
    NonPositiveLatency(f64),
    #[error("non-finite gradient; update skipped")]
    NonFinite,
    #[error("environment: {0}")]
    Env(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("checkpoint version {found} is newer than supported {supported}")]
    Version { found: u32, supported: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub slope: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 1e-3,
            beta: 0.01,
            gamma: 0.9,
            slope: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_advantage: f64,
}

/// Gradients of the surrogate loss for one batch, with the advantages and
/// critic targets they were computed against.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub actor: Mlp,
    pub critic: Mlp,
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
    pub stats: UpdateStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub actor: Mlp,
    pub critic: Mlp,
    pub hyper: Hyperparams,
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}

impl PolicyModel {
    /// Default architecture: `input → 128 → 64 → actions` (actor) and
    /// `input → 128 → 64 → 1` (critic).
    pub fn new(input: usize, actions: usize, hyper: Hyperparams, seed: u64) -> Self {
        Self::with_hidden(input, &HIDDEN, actions, hyper, seed, INIT_SCALE)
    }

    pub fn with_hidden(
        input: usize,
        hidden: &[usize],
        actions: usize,
        hyper: Hyperparams,
        seed: u64,
        scale: f64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = |out: usize| {
            let mut d = vec![input];
            d.extend_from_slice(hidden);
            d.push(out);
            d
        };
        PolicyModel {
            actor: Mlp::uniform(&dims(actions), hyper.slope, scale, &mut rng),
            critic: Mlp::uniform(&dims(1), hyper.slope, scale, &mut rng),
            hyper,
        }
    }

    pub fn zeroed(input: usize, actions: usize, hyper: Hyperparams) -> Self {
        let dims = |out: usize| vec![input, HIDDEN[0], HIDDEN[1], out];
        PolicyModel {
            actor: Mlp::zeroed(&dims(actions), hyper.slope),
            critic: Mlp::zeroed(&dims(1), hyper.slope),
            hyper,
        }
    }

    pub fn input_len(&self) -> usize {
        self.actor.input_len()
    }

    pub fn action_count(&self) -> usize {
        self.actor.output_len()
    }

    fn check(&self, state: &[f64]) -> Result<(), RlError> {
        if state.len() != self.input_len() {
            return Err(RlError::DimensionMismatch {
                expected: self.input_len(),
                got: state.len(),
            });
        }
        Ok(())
    }

    pub fn probabilities(&self, state: &[f64]) -> Result<Vec<f64>, RlError> {
        self.check(state)?;
        Ok(softmax(&self.actor.forward(state)))
    }

    pub fn value(&self, state: &[f64]) -> Result<f64, RlError> {
        self.check(state)?;
        Ok(self.critic.forward(state)[0])
    }

    /// Samples an action from the actor's distribution.
    pub fn act(&self, state: &[f64], rng: &mut ChaCha8Rng) -> Result<(usize, Vec<f64>), RlError> {
        let p = self.probabilities(state)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut action = p.len() - 1;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                action = i;
                break;
            }
        }
        Ok((action, p))
    }

    /// Most probable action; ties go to the lowest index.
    pub fn argmax(&self, state: &[f64]) -> Result<(usize, Vec<f64>), RlError> {
        let p = self.probabilities(state)?;
        let mut best = 0;
        for (i, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = i;
            }
        }
        Ok((best, p))
    }

    fn validate_batch(&self, batch: &[Transition]) -> Result<(), RlError> {
        if batch.is_empty() {
            return Err(RlError::EmptyBatch);
        }
        for t in batch {
            self.check(&t.state)?;
            self.check(&t.next_state)?;
            if t.action >= self.action_count() {
                return Err(RlError::BadAction {
                    action: t.action,
                    count: self.action_count(),
                });
            }
        }
        Ok(())
    }

    /// Advantages `r + γV(s') − V(s)` and the critic targets `r + γV(s')`.
    pub fn advantages(&self, batch: &[Transition]) -> Result<(Vec<f64>, Vec<f64>), RlError> {
        self.validate_batch(batch)?;
        let mut adv = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for t in batch {
            let target = t.reward + self.hyper.gamma * self.critic.forward(&t.next_state)[0];
            targets.push(target);
            adv.push(target - self.critic.forward(&t.state)[0]);
        }
        Ok((adv, targets))
    }

    /// Loss whose gradient the update descends, with advantages and targets
    /// held fixed: `Σ −(A·log π(a|s) + β·H(π(·|s))) + ½(y − V(s))²`.
    pub fn surrogate_loss(&self, batch: &[Transition], advantages: &[f64], targets: &[f64]) -> f64 {
        batch
            .iter()
            .zip(advantages.iter().zip(targets))
            .map(|(t, (a, y))| {
                let z = self.actor.forward(&t.state);
                let lse = log_sum_exp(&z);
                let logp: Vec<f64> = z.iter().map(|v| v - lse).collect();
                let h: f64 = -logp.iter().map(|l| l.exp() * l).sum::<f64>();
                let v = self.critic.forward(&t.state)[0];
                -(a * logp[t.action] + self.hyper.beta * h) + 0.5 * (y - v).powi(2)
            })
            .sum()
    }

    /// Backprop gradients of [`PolicyModel::surrogate_loss`], summed over the batch.
    pub fn gradients(&self, batch: &[Transition]) -> Result<BatchGradients, RlError> {
        let (advantages, targets) = self.advantages(batch)?;
        let mut actor = Mlp::zeroed(&self.actor.dims(), self.actor.slope);
        let mut critic = Mlp::zeroed(&self.critic.dims(), self.critic.slope);
        let mut stats = UpdateStats::default();
        let beta = self.hyper.beta;
        for (t, (&a, &y)) in batch.iter().zip(advantages.iter().zip(&targets)) {
            let trace = self.actor.trace(&t.state);
            let z = trace.output();
            let lse = log_sum_exp(z);
            let logp: Vec<f64> = z.iter().map(|v| v - lse).collect();
            let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
            let h = -p.iter().zip(&logp).map(|(pi, li)| pi * li).sum::<f64>();
            // d/dz of −(A·log p_a + β·H).
            let dz: Vec<f64> = (0..z.len())
                .map(|j| {
                    let onehot = if j == t.action { 1.0 } else { 0.0 };
                    let d_logp = a * (onehot - p[j]);
                    let d_h = -p[j] * (logp[j] + h);
                    -(d_logp + beta * d_h)
                })
                .collect();
            self.actor.backward(&trace, &dz, &mut actor);

            let ctrace = self.critic.trace(&t.state);
            let v = ctrace.output()[0];
            self.critic.backward(&ctrace, &[v - y], &mut critic);

            stats.policy_loss -= a * logp[t.action];
            stats.value_loss += 0.5 * (y - v).powi(2);
            stats.entropy += h;
            stats.mean_advantage += a;
        }
        let n = batch.len() as f64;
        stats.policy_loss /= n;
        stats.value_loss /= n;
        stats.entropy /= n;
        stats.mean_advantage /= n;
        Ok(BatchGradients {
            actor,
            critic,
            advantages,
            targets,
            stats,
        })
    }

    /// One SGD step on the batch. Weights are untouched if any gradient or
    /// resulting weight is non-finite.
    pub fn update(&mut self, batch: &[Transition]) -> Result<UpdateStats, RlError> {
        let g = self.gradients(batch)?;
        if !g.actor.all_finite() || !g.critic.all_finite() {
            return Err(RlError::NonFinite);
        }
        let mut actor = self.actor.clone();
        let mut critic = self.critic.clone();
        actor.add_scaled(&g.actor, -self.hyper.alpha);
        critic.add_scaled(&g.critic, -self.hyper.alpha);
        if !actor.all_finite() || !critic.all_finite() {
            return Err(RlError::NonFinite);
        }
        self.actor = actor;
        self.critic = critic;
        Ok(g.stats)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), RlError> {
        std::fs::write(path, checkpoint::encode(self))?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, RlError> {
        checkpoint::decode(&std::fs::read(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        checkpoint::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RlError> {
        checkpoint::decode(bytes)
    }
}

/// Bytes processed and time taken by one executed workload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadRun {
    pub bytes: f64,
    pub latency: f64,
}

fn throughput(runs: &[WorkloadRun]) -> Result<f64, RlError> {
    if runs.is_empty() {
        return Err(RlError::EmptyWindow);
    }
    if let Some(r) = runs.iter().find(|r| r.latency.is_nan() || r.latency <= 0.0) {
        return Err(RlError::NonPositiveLatency(r.latency));
    }
    let bytes: f64 = runs.iter().map(|r| r.bytes).sum();
    let latency: f64 = runs.iter().map(|r| r.latency).sum();
    Ok(bytes / latency)
}

/// Aggregate throughput of `window` relative to `baseline`.
pub fn reward(window: &[WorkloadRun], baseline: &[WorkloadRun]) -> Result<f64, RlError> {
    Ok(throughput(window)? / throughput(baseline)?)
}
