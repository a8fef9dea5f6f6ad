use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    collect_rollouts, evaluate_policy, gae_with_bootstrap, normalize_advantages, CurvePoint,
    Environment, RolloutCursor, TrainConfig, TrainError, TrainResult, Transition, EVAL_MAX_STEPS,
};
use crate::neural::{log_softmax, optimizer_step, softmax, Gradients, NetworkParams, OptimizerState};

#[derive(Clone, Debug)]
pub struct PpoNets {
    pub policy: NetworkParams,
    /// Scalar state-value network.
    pub value: NetworkParams,
    opt_policy: OptimizerState,
    opt_value: OptimizerState,
}

impl PpoNets {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, actions: usize, cfg: &TrainConfig, rng: &mut R) -> Self {
        let policy = cfg.new_policy(obs_dim, actions, rng);
        let value = cfg.new_value(obs_dim, 1, rng);
        Self {
            opt_policy: OptimizerState::adam(&policy, cfg.policy_lr),
            opt_value: OptimizerState::adam(&value, cfg.value_lr),
            policy,
            value,
        }
    }
}

/// On-policy samples with their behaviour log-probabilities and GAE targets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PpoBatch {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Builds a batch from a rollout using the current networks for log-probabilities and values.
    pub fn from_rollout(nets: &PpoNets, rollout: &[Transition], cfg: &TrainConfig) -> Result<Self, TrainError> {
        let v = |o: &[f64]| nets.value.forward(o).map(|x| x[0]);
        let err = |e: crate::neural::NetworkError| TrainError::Env(e.to_string());
        let mut values = Vec::with_capacity(rollout.len());
        let mut next_values = Vec::with_capacity(rollout.len());
        let mut old_log_probs = Vec::with_capacity(rollout.len());
        for t in rollout {
            values.push(v(&t.observation).map_err(err)?);
            next_values.push(v(&t.next_observation).map_err(err)?);
            let logits = nets.policy.logits(&t.observation).map_err(err)?;
            old_log_probs.push(log_softmax(&logits)[t.action]);
        }
        let rewards: Vec<f64> = rollout.iter().map(|t| t.reward).collect();
        let bootstrap: Vec<bool> = rollout.iter().map(|t| t.bootstraps()).collect();
        // The last sample of a rollout cuts the trace; its successor value still bootstraps.
        let mut ends: Vec<bool> = rollout.iter().map(|t| t.done).collect();
        if let Some(last) = ends.last_mut() {
            *last = true;
        }
        let (mut advantages, returns) = gae_with_bootstrap(
            &rewards,
            &values,
            &next_values,
            &bootstrap,
            &ends,
            cfg.gamma,
            cfg.gae_lambda,
        )?;
        normalize_advantages(&mut advantages);
        Ok(Self {
            observations: rollout.iter().map(|t| t.observation.clone()).collect(),
            actions: rollout.iter().map(|t| t.action).collect(),
            old_log_probs,
            advantages,
            returns,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PpoLosses {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Fraction of samples whose ratio left the clip interval, last epoch.
    pub clip_fraction: f64,
    /// Mean of `old_log_prob − new_log_prob` after the update.
    pub approx_kl: f64,
}

/// Per-sample clipped-surrogate term and its gradient with respect to the logits.
///
/// The objective maximised is `min(r·A, clip(r, 1 ± ε)·A) + c·H(π)`; the returned loss and
/// gradient are for its negation.
pub fn surrogate_grad(
    logits: &[f64],
    action: usize,
    old_log_prob: f64,
    advantage: f64,
    clip: f64,
    entropy_coef: f64,
) -> (f64, Vec<f64>, bool) {
    let p = softmax(logits);
    let logp = log_softmax(logits);
    let ratio = (logp[action] - old_log_prob).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    let active = unclipped <= clipped;
    let h: f64 = -p.iter().zip(&logp).map(|(a, b)| a * b).sum::<f64>();
    let loss = -unclipped.min(clipped) - entropy_coef * h;
    let mut g = vec![0.0; p.len()];
    if active {
        // d(r·A)/dz = A·r·(e_a − π)
        for (j, gj) in g.iter_mut().enumerate() {
            let e = if j == action { 1.0 } else { 0.0 };
            *gj -= advantage * ratio * (e - p[j]);
        }
    }
    // dH/dz_j = −π_j·(log π_j + H)
    for (j, gj) in g.iter_mut().enumerate() {
        *gj += entropy_coef * p[j] * (logp[j] + h);
    }
    (loss, g, !active)
}

fn non_finite(what: &str, update: u64) -> TrainError {
    TrainError::NonFinite {
        what: what.to_string(),
        update,
    }
}

/// Several epochs of shuffled minibatch updates on one batch.
pub fn ppo_update<R: Rng + ?Sized>(
    nets: &mut PpoNets,
    batch: &PpoBatch,
    cfg: &TrainConfig,
    update: u64,
    rng: &mut R,
) -> Result<PpoLosses, TrainError> {
    let mut losses = PpoLosses::default();
    if batch.is_empty() {
        return Ok(losses);
    }
    let err = |e: crate::neural::NetworkError| TrainError::Env(e.to_string());
    let mut order: Vec<usize> = (0..batch.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let last = epoch + 1 == cfg.epochs;
        if last {
            losses = PpoLosses::default();
        }
        for chunk in order.chunks(cfg.batch_size) {
            let n = chunk.len() as f64;
            let mut gp = Gradients::zeros_like(&nets.policy);
            let mut gv = Gradients::zeros_like(&nets.value);
            for &i in chunk {
                let obs = &batch.observations[i];
                let cp = nets.policy.forward_cached(obs).map_err(err)?;
                let logits = cp.layers.last().unwrap();
                let (loss, g, clipped) = surrogate_grad(
                    logits,
                    batch.actions[i],
                    batch.old_log_probs[i],
                    batch.advantages[i],
                    cfg.clip_ratio,
                    cfg.entropy_coef,
                );
                let g: Vec<f64> = g.iter().map(|x| x / n).collect();
                nets.policy.accumulate_backward(&cp, &g, &mut gp).map_err(err)?;
                let cv = nets.value.forward_cached(obs).map_err(err)?;
                let e = cv.output[0] - batch.returns[i];
                nets.value.accumulate_backward(&cv, &[e / n], &mut gv).map_err(err)?;
                if last {
                    let total = batch.len() as f64;
                    losses.policy_loss += loss / total;
                    losses.value_loss += 0.5 * e * e / total;
                    losses.entropy += crate::rl_training::entropy(&cp.output) / total;
                    losses.clip_fraction += if clipped { 1.0 / total } else { 0.0 };
                }
            }
            if !gp.is_finite() {
                return Err(non_finite("policy gradient", update));
            }
            if !gv.is_finite() {
                return Err(non_finite("value gradient", update));
            }
            gp.clip_norm(cfg.max_grad_norm);
            gv.clip_norm(cfg.max_grad_norm);
            let shape = |e: crate::neural::NetworkError| TrainError::Config(e.to_string());
            optimizer_step(&mut nets.policy, &gp, &mut nets.opt_policy).map_err(shape)?;
            optimizer_step(&mut nets.value, &gv, &mut nets.opt_value).map_err(shape)?;
        }
    }
    if !(losses.policy_loss.is_finite() && losses.value_loss.is_finite()) {
        return Err(non_finite("ppo loss", update));
    }
    for i in 0..batch.len() {
        let logits = nets.policy.logits(&batch.observations[i]).map_err(err)?;
        losses.approx_kl += (batch.old_log_probs[i] - log_softmax(&logits)[batch.actions[i]]) / batch.len() as f64;
    }
    Ok(losses)
}

pub fn train_ppo<E: Environment, F: Fn() -> E>(
    make_env: F,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainResult, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = make_env();
    let mut eval_env = make_env();
    let mut nets = PpoNets::new(env.observation_dim(), env.action_count(), cfg, &mut rng);
    let mut cursor = RolloutCursor::default();
    let mut curve = Vec::new();
    let mut loss_trace = Vec::new();
    let mut steps = 0u64;
    let mut next_eval = cfg.eval_period;
    let mut update = 0u64;
    while steps < cfg.total_steps {
        let n = (cfg.rollout_length as u64).min(cfg.total_steps - steps) as usize;
        let rollout = collect_rollouts(&mut env, &mut cursor, &nets.policy, n, &mut rng);
        steps += n as u64;
        let batch = PpoBatch::from_rollout(&nets, &rollout, cfg)?;
        update += 1;
        let l = ppo_update(&mut nets, &batch, cfg, update, &mut rng)?;
        loss_trace.push(l.policy_loss + l.value_loss);
        while steps >= next_eval {
            let r = evaluate_policy(
                &mut eval_env,
                &nets.policy,
                cfg.eval_episodes,
                cfg.eval_seed,
                cfg.gamma,
                EVAL_MAX_STEPS,
            );
            curve.push(CurvePoint {
                step: next_eval,
                seed,
                mean_return: r.mean_return,
                success_rate: r.success_rate,
                collision_rate: r.collision_rate,
            });
            next_eval += cfg.eval_period;
        }
    }
    Ok(TrainResult {
        policy: nets.policy,
        value: nets.value,
        curve,
        loss_trace,
    })
}
