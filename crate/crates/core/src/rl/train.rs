use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{PolicyModel, RlError, Transition, UpdateStats, DEFAULT_BATCH, ITERATIONS_PER_EPOCH};

/// A source of decision events: each observation is a state plus whatever the
/// environment needs to score an action taken in it.
pub trait Environment: Sync {
    type Context: Send;

    fn state_len(&self) -> usize;
    fn action_count(&self) -> usize;
    fn observe(&self, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Self::Context), RlError>;
    fn reward(&self, context: &Self::Context, action: usize) -> Result<f64, RlError>;
}

/// Fixed state, fixed reward per action.
#[derive(Debug, Clone)]
pub struct BanditEnvironment {
    pub state: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl Environment for BanditEnvironment {
    type Context = ();

    fn state_len(&self) -> usize {
        self.state.len()
    }

    fn action_count(&self) -> usize {
        self.rewards.len()
    }

    fn observe(&self, _rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, ()), RlError> {
        Ok((self.state.clone(), ()))
    }

    fn reward(&self, _: &(), action: usize) -> Result<f64, RlError> {
        self.rewards.get(action).copied().ok_or(RlError::BadAction {
            action,
            count: self.rewards.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub iterations_per_epoch: usize,
    pub agents: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: DEFAULT_BATCH,
            iterations_per_epoch: ITERATIONS_PER_EPOCH,
            agents: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// Agent `i` draws from its own stream of the run seed.
pub fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64);
    rng
}

struct Agent<C> {
    rng: ChaCha8Rng,
    pending: Option<(Vec<f64>, C)>,
}

impl<C: Send> Agent<C> {
    fn collect<E: Environment<Context = C>>(
        &mut self,
        model: &PolicyModel,
        env: &E,
        n: usize,
    ) -> Result<Vec<Transition>, RlError> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let (state, ctx) = match self.pending.take() {
                Some(p) => p,
                None => env.observe(&mut self.rng)?,
            };
            let (action, _) = model.act(&state, &mut self.rng)?;
            let reward = env.reward(&ctx, action)?;
            let next = env.observe(&mut self.rng)?;
            out.push(Transition {
                state,
                action,
                reward,
                next_state: next.0.clone(),
            });
            self.pending = Some(next);
        }
        Ok(out)
    }
}

/// Runs `epochs × iterations_per_epoch` decisions per agent. Each round every
/// agent collects up to one batch against the current weights (concurrently
/// when `agents > 1`); the batches are then applied one at a time in agent order.
pub fn train<E: Environment>(
    model: &mut PolicyModel,
    env: &E,
    cfg: &TrainConfig,
) -> Result<Vec<EpochReport>, RlError> {
    train_until(model, env, cfg, |_, _| true)
}

/// [`train`], calling `keep_going` after every epoch; training stops early
/// when it returns false.
pub fn train_until<E: Environment>(
    model: &mut PolicyModel,
    env: &E,
    cfg: &TrainConfig,
    mut keep_going: impl FnMut(&PolicyModel, &EpochReport) -> bool,
) -> Result<Vec<EpochReport>, RlError> {
    if env.state_len() != model.input_len() || env.action_count() != model.action_count() {
        return Err(RlError::DimensionMismatch {
            expected: model.input_len(),
            got: env.state_len(),
        });
    }
    let agents = cfg.agents.max(1);
    let batch = cfg.batch_size.max(1);
    let mut pool: Vec<Agent<E::Context>> = (0..agents)
        .map(|i| Agent {
            rng: agent_rng(cfg.seed, i),
            pending: None,
        })
        .collect();
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut done = 0;
        let mut reward_sum = 0.0;
        let mut reward_n = 0usize;
        let mut stats = Vec::new();
        while done < cfg.iterations_per_epoch {
            let n = batch.min(cfg.iterations_per_epoch - done);
            done += n;
            let frozen: &PolicyModel = model;
            let batches: Vec<Result<Vec<Transition>, RlError>> = if agents == 1 {
                vec![pool[0].collect(frozen, env, n)]
            } else {
                std::thread::scope(|s| {
                    let handles: Vec<_> = pool
                        .iter_mut()
                        .map(|a| s.spawn(move || a.collect(frozen, env, n)))
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("agent thread panicked"))
                        .collect()
                })
            };
            for b in batches {
                let b = b?;
                reward_sum += b.iter().map(|t| t.reward).sum::<f64>();
                reward_n += b.len();
                stats.push(model.update(&b)?);
            }
        }
        let mean = |f: fn(&UpdateStats) -> f64| {
            stats.iter().map(f).sum::<f64>() / stats.len().max(1) as f64
        };
        let report = EpochReport {
            epoch,
            mean_reward: reward_sum / reward_n.max(1) as f64,
            policy_loss: mean(|s| s.policy_loss),
            value_loss: mean(|s| s.value_loss),
            entropy: mean(|s| s.entropy),
        };
        reports.push(report);
        if !keep_going(model, &report) {
            break;
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::super::Hyperparams;
    use super::*;

    #[test]
    fn zero_epochs_is_identity() {
        let env = BanditEnvironment {
            state: vec![0.5; 4],
            rewards: vec![2.0, 1.0],
        };
        let mut m = PolicyModel::with_hidden(4, &[3], 2, Hyperparams::default(), 1, 0.1);
        let before = m.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(train(&mut m, &env, &cfg).unwrap().is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn training_is_reproducible() {
        let env = BanditEnvironment {
            state: vec![0.2, 0.8, 0.5],
            rewards: vec![1.0, 2.0, 1.0],
        };
        let cfg = TrainConfig {
            epochs: 3,
            agents: 2,
            seed: 42,
            ..Default::default()
        };
        let run = || {
            let mut m = PolicyModel::with_hidden(3, &[8, 4], 3, Hyperparams::default(), 5, 0.05);
            let r = train(&mut m, &env, &cfg).unwrap();
            (m, r)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let env = BanditEnvironment {
            state: vec![0.0; 5],
            rewards: vec![1.0; 2],
        };
        let mut m = PolicyModel::with_hidden(4, &[3], 2, Hyperparams::default(), 1, 0.1);
        assert!(matches!(
            train(&mut m, &env, &TrainConfig::default()),
            Err(RlError::DimensionMismatch { .. })
        ));
    }
}
