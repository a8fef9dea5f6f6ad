//! Actor-critic training: discrete-action SAC and PPO, rollout collection, advantage
//! estimation, greedy evaluation and learning-curve records.

mod buffer;
mod chain;
mod gae;
mod ppo;
mod sac;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision_mdp::{ActionId, DrivingEnv, TerminalStatus};
use crate::neural::{Activation, Head, NetworkParams};

pub use buffer::ReplayBuffer;
pub use chain::{chain_optimal_return, ChainEnv, CHAIN_GAMMA, CHAIN_HORIZON, CHAIN_STATES};
pub use gae::{gae_advantages, gae_with_bootstrap, normalize_advantages};
pub use ppo::{ppo_update, surrogate_grad, train_ppo, PpoBatch, PpoLosses, PpoNets};
pub use sac::{distill_value, sac_update, soft_state_value, train_sac, SacLosses, SacNets};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("non-finite {what} at update {update}")]
    NonFinite { what: String, update: u64 },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("environment: {0}")]
    Env(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub status: TerminalStatus,
}

/// Episodic environment with a discrete action space.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_count(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: usize) -> EnvStep;
}

impl Environment for DrivingEnv {
    fn observation_dim(&self) -> usize {
        crate::decision_mdp::OBS_DIM
    }

    fn action_count(&self) -> usize {
        DrivingEnv::action_count(self)
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        DrivingEnv::reset(self, seed)
            .expect("scenario config validated before training")
            .0
    }

    fn step(&mut self, action: usize) -> EnvStep {
        let kind = self.config.scenario.scenario_kind;
        let id = ActionId::from_index(kind, action).expect("action index in range");
        let out = DrivingEnv::step(self, id);
        EnvStep {
            observation: crate::decision_mdp::observe(&out.world).0,
            reward: out.reward.total,
            status: out.status,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub done: bool,
    pub terminal: TerminalStatus,
}

impl Transition {
    /// Whether the next state's value enters the target. Time limits are not terminal states.
    pub fn bootstraps(&self) -> bool {
        matches!(self.terminal, TerminalStatus::Running | TerminalStatus::Timeout)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sac,
    Ppo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    /// Environment steps; SAC performs one gradient update per step after warm-up.
    pub total_steps: u64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub gamma: f64,
    pub batch_size: usize,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub max_grad_norm: f64,
    // SAC
    pub replay_capacity: usize,
    pub warmup_steps: u64,
    pub tau: f64,
    pub initial_alpha: f64,
    pub auto_alpha: bool,
    /// Target entropy as a fraction of log|A|.
    pub target_entropy_ratio: f64,
    pub alpha_lr: f64,
    pub distill_epochs: usize,
    // PPO
    pub rollout_length: usize,
    pub epochs: usize,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub entropy_coef: f64,
    // evaluation
    pub eval_period: u64,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Sac,
            total_steps: 20_000,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            gamma: 0.99,
            batch_size: 64,
            policy_lr: 3e-4,
            value_lr: 1e-3,
            max_grad_norm: 10.0,
            replay_capacity: 50_000,
            warmup_steps: 1_000,
            tau: 0.005,
            initial_alpha: 0.2,
            auto_alpha: true,
            target_entropy_ratio: 0.3,
            alpha_lr: 3e-4,
            distill_epochs: 20,
            rollout_length: 1_024,
            epochs: 4,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            entropy_coef: 0.01,
            eval_period: 1_000,
            eval_episodes: 10,
            eval_seed: 1_000_000,
            seeds: vec![0, 1, 2],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.total_steps == 0 || self.batch_size == 0 || self.eval_period == 0 {
            return bad("step counts, batch size and eval period must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and lambda must lie in [0, 1]");
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return bad("clip ratio must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.replay_capacity < self.batch_size || self.rollout_length == 0 || self.epochs == 0 {
            return bad("replay capacity must hold a batch; rollout length and epochs positive");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive");
        }
        Ok(())
    }

    pub fn layer_dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(&self.hidden);
        d.push(output);
        d
    }

    pub fn new_policy<R: Rng + ?Sized>(&self, input: usize, actions: usize, rng: &mut R) -> NetworkParams {
        NetworkParams::random(&self.layer_dims(input, actions), self.activation, Head::Softmax, rng)
    }

    pub fn new_value<R: Rng + ?Sized>(&self, input: usize, outputs: usize, rng: &mut R) -> NetworkParams {
        NetworkParams::random(&self.layer_dims(input, outputs), self.activation, Head::Linear, rng)
    }
}

/// Samples an index from a probability vector.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Episode progress carried between rollout calls.
#[derive(Clone, Debug, Default)]
pub struct RolloutCursor {
    observation: Option<Vec<f64>>,
}

/// Collects `n_steps` transitions with actions sampled from `policy`, continuing the episode
/// in progress and resetting with seeds drawn from `rng` whenever one ends.
pub fn collect_rollouts<E: Environment, R: Rng + ?Sized>(
    env: &mut E,
    cursor: &mut RolloutCursor,
    policy: &NetworkParams,
    n_steps: usize,
    rng: &mut R,
) -> Vec<Transition> {
    let mut out = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let obs = match cursor.observation.take() {
            Some(o) => o,
            None => env.reset(rng.gen()),
        };
        let probs = policy.forward(&obs).expect("policy input matches observation");
        let action = sample_categorical(&probs, rng);
        let step = env.step(action);
        let done = step.status.is_done();
        out.push(Transition {
            observation: obs,
            action,
            reward: step.reward,
            next_observation: step.observation.clone(),
            done,
            terminal: step.status,
        });
        cursor.observation = if done { None } else { Some(step.observation) };
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_undiscounted_return: f64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub other_rate: f64,
    pub returns: Vec<f64>,
}

/// Greedy evaluation; episode `i` is reset with seed `seed ^ i`.
pub fn evaluate_policy<E: Environment>(
    env: &mut E,
    policy: &NetworkParams,
    episodes: usize,
    seed: u64,
    gamma: f64,
    max_steps: usize,
) -> EvalReport {
    let mut report = EvalReport {
        episodes,
        ..EvalReport::default()
    };
    let (mut successes, mut collisions) = (0usize, 0usize);
    for i in 0..episodes {
        let mut obs = env.reset(seed ^ i as u64);
        let (mut ret, mut undiscounted, mut discount) = (0.0, 0.0, 1.0);
        let mut status = TerminalStatus::Running;
        for _ in 0..max_steps {
            let probs = policy.forward(&obs).expect("policy input matches observation");
            let step = env.step(argmax(&probs));
            ret += discount * step.reward;
            undiscounted += step.reward;
            discount *= gamma;
            status = step.status;
            obs = step.observation;
            if status.is_done() {
                break;
            }
        }
        match status {
            TerminalStatus::TaskComplete => successes += 1,
            TerminalStatus::Collided => collisions += 1,
            _ => {}
        }
        report.returns.push(ret);
        report.mean_return += ret / episodes as f64;
        report.mean_undiscounted_return += undiscounted / episodes as f64;
    }
    report.success_rate = successes as f64 / episodes as f64;
    report.collision_rate = collisions as f64 / episodes as f64;
    report.other_rate = (episodes - successes - collisions) as f64 / episodes as f64;
    report
}

/// One row of a learning curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub seed: u64,
    pub mean_return: f64,
    pub success_rate: f64,
    pub collision_rate: f64,
}

/// Networks produced by a training run.
#[derive(Clone, Debug)]
pub struct TrainResult {
    pub policy: NetworkParams,
    pub value: NetworkParams,
    pub curve: Vec<CurvePoint>,
    /// Mean loss of each update, for reproducibility checks.
    pub loss_trace: Vec<f64>,
}

/// Upper bound on decisions per evaluation episode.
pub const EVAL_MAX_STEPS: usize = 1_000;

/// Trains with the configured algorithm using `make_env` for both training and evaluation.
pub fn train<E: Environment, F: Fn() -> E>(
    make_env: F,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainResult, TrainError> {
    cfg.validate()?;
    match cfg.algorithm {
        Algorithm::Sac => train_sac(make_env, cfg, seed),
        Algorithm::Ppo => train_ppo(make_env, cfg, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_rollout() {
        let mut env = ChainEnv::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = NetworkParams::zeros(&[5, 2], Activation::Tanh, Head::Softmax);
        assert!(collect_rollouts(&mut env, &mut RolloutCursor::default(), &p, 0, &mut rng).is_empty());
    }

    #[test]
    fn uniform_policy_action_frequencies() {
        struct Flat;
        impl Environment for Flat {
            fn observation_dim(&self) -> usize {
                1
            }
            fn action_count(&self) -> usize {
                5
            }
            fn reset(&mut self, _: u64) -> Vec<f64> {
                vec![0.0]
            }
            fn step(&mut self, _: usize) -> EnvStep {
                EnvStep {
                    observation: vec![0.0],
                    reward: 0.0,
                    status: TerminalStatus::Running,
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = NetworkParams::zeros(&[1, 5], Activation::Tanh, Head::Softmax);
        let batch = collect_rollouts(&mut Flat, &mut RolloutCursor::default(), &p, 10_000, &mut rng);
        let sigma = (10_000.0f64 * 0.2 * 0.8).sqrt();
        for a in 0..5 {
            let count = batch.iter().filter(|t| t.action == a).count() as f64;
            assert!((count - 2_000.0).abs() < 3.0 * sigma, "action {a}: {count}");
        }
    }

    #[test]
    fn rollouts_are_seed_deterministic_and_preserve_boundaries() {
        let p = NetworkParams::zeros(&[5, 2], Activation::Tanh, Head::Softmax);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            collect_rollouts(&mut ChainEnv::new(), &mut RolloutCursor::default(), &p, 200, &mut rng)
        };
        let a = run(5);
        assert_eq!(a, run(5));
        assert_ne!(a, run(6));
        for w in a.windows(2) {
            if !w[0].done {
                assert_eq!(w[0].next_observation, w[1].observation);
            } else {
                assert_eq!(w[1].observation, ChainEnv::new().reset(0));
            }
        }
    }

    #[test]
    fn two_step_return_is_exact() {
        struct TwoStep(usize);
        impl Environment for TwoStep {
            fn observation_dim(&self) -> usize {
                1
            }
            fn action_count(&self) -> usize {
                2
            }
            fn reset(&mut self, _: u64) -> Vec<f64> {
                self.0 = 0;
                vec![0.0]
            }
            fn step(&mut self, _: usize) -> EnvStep {
                self.0 += 1;
                EnvStep {
                    observation: vec![self.0 as f64],
                    reward: if self.0 == 1 { 1.5 } else { -0.25 },
                    status: if self.0 == 2 {
                        TerminalStatus::TaskComplete
                    } else {
                        TerminalStatus::Running
                    },
                }
            }
        }
        let p = NetworkParams::zeros(&[1, 2], Activation::Tanh, Head::Softmax);
        let r = evaluate_policy(&mut TwoStep(0), &p, 1, 3, 0.9, 10);
        assert_eq!(r.mean_return, 1.5 + 0.9 * -0.25);
        assert_eq!(r.success_rate + r.collision_rate + r.other_rate, 1.0);
        assert_eq!(r, evaluate_policy(&mut TwoStep(0), &p, 1, 3, 0.9, 10));
    }

    #[test]
    fn uniform_entropy_is_log_action_count() {
        assert!((entropy(&[0.2; 5]) - 5f64.ln()).abs() < 1e-15);
    }
}
