use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    evaluate_policy, sample_categorical, CurvePoint, Environment, ReplayBuffer, TrainConfig,
    TrainError, TrainResult, Transition, EVAL_MAX_STEPS,
};
use crate::neural::{log_softmax, optimizer_step, softmax, Gradients, NetworkParams, OptimizerState};

/// Adam on a single scalar.
#[derive(Clone, Debug)]
struct ScalarAdam {
    m: f64,
    v: f64,
    t: i32,
    lr: f64,
}

impl ScalarAdam {
    fn new(lr: f64) -> Self {
        Self { m: 0.0, v: 0.0, t: 0, lr }
    }

    fn step(&mut self, x: &mut f64, g: f64) {
        self.t += 1;
        self.m = 0.9 * self.m + 0.1 * g;
        self.v = 0.999 * self.v + 0.001 * g * g;
        let m_hat = self.m / (1.0 - 0.9f64.powi(self.t));
        let v_hat = self.v / (1.0 - 0.999f64.powi(self.t));
        *x -= self.lr * m_hat / (v_hat.sqrt() + 1e-8);
    }
}

#[derive(Clone, Debug)]
pub struct SacNets {
    pub policy: NetworkParams,
    pub q1: NetworkParams,
    pub q2: NetworkParams,
    pub q1_target: NetworkParams,
    pub q2_target: NetworkParams,
    pub log_alpha: f64,
    pub target_entropy: f64,
    opt_policy: OptimizerState,
    opt_q1: OptimizerState,
    opt_q2: OptimizerState,
    opt_alpha: ScalarAdam,
}

impl SacNets {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, actions: usize, cfg: &TrainConfig, rng: &mut R) -> Self {
        let policy = cfg.new_policy(obs_dim, actions, rng);
        let q1 = cfg.new_value(obs_dim, actions, rng);
        let q2 = cfg.new_value(obs_dim, actions, rng);
        Self {
            opt_policy: OptimizerState::adam(&policy, cfg.policy_lr),
            opt_q1: OptimizerState::adam(&q1, cfg.value_lr),
            opt_q2: OptimizerState::adam(&q2, cfg.value_lr),
            opt_alpha: ScalarAdam::new(cfg.alpha_lr),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            policy,
            q1,
            q2,
            log_alpha: cfg.initial_alpha.ln(),
            target_entropy: cfg.target_entropy_ratio * (actions as f64).ln(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SacLosses {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub policy_loss: f64,
    pub alpha: f64,
    /// Mean policy entropy over the batch before the update.
    pub entropy: f64,
}

/// Σₐ π(a|s)·[min(Q₁, Q₂)(s, a) − α·log π(a|s)].
pub fn soft_state_value(
    policy: &NetworkParams,
    q1: &NetworkParams,
    q2: &NetworkParams,
    alpha: f64,
    obs: &[f64],
) -> f64 {
    let logits = policy.logits(obs).expect("observation size");
    let p = softmax(&logits);
    let logp = log_softmax(&logits);
    let a = q1.forward(obs).expect("observation size");
    let b = q2.forward(obs).expect("observation size");
    (0..p.len())
        .map(|i| p[i] * (a[i].min(b[i]) - alpha * logp[i]))
        .sum()
}

fn check(x: f64, what: &str, update: u64) -> Result<(), TrainError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(TrainError::NonFinite {
            what: what.to_string(),
            update,
        })
    }
}

/// One discrete-action SAC update on a minibatch.
pub fn sac_update(
    nets: &mut SacNets,
    batch: &[&Transition],
    cfg: &TrainConfig,
    update: u64,
) -> Result<SacLosses, TrainError> {
    let n = batch.len() as f64;
    let alpha = nets.alpha();
    let mut g_q1 = Gradients::zeros_like(&nets.q1);
    let mut g_q2 = Gradients::zeros_like(&nets.q2);
    let mut g_pi = Gradients::zeros_like(&nets.policy);
    let mut losses = SacLosses {
        alpha,
        ..SacLosses::default()
    };
    let size_err = |e: crate::neural::NetworkError| TrainError::Env(e.to_string());
    for t in batch {
        let target = if t.bootstraps() {
            let logits = nets.policy.logits(&t.next_observation).map_err(size_err)?;
            let p = softmax(&logits);
            let logp = log_softmax(&logits);
            let a = nets.q1_target.forward(&t.next_observation).map_err(size_err)?;
            let b = nets.q2_target.forward(&t.next_observation).map_err(size_err)?;
            let v: f64 = (0..p.len())
                .map(|i| p[i] * (a[i].min(b[i]) - alpha * logp[i]))
                .sum();
            t.reward + cfg.gamma * v
        } else {
            t.reward
        };
        let c1 = nets.q1.forward_cached(&t.observation).map_err(size_err)?;
        let c2 = nets.q2.forward_cached(&t.observation).map_err(size_err)?;
        for (net, cache, grads, loss) in [
            (&nets.q1, &c1, &mut g_q1, &mut losses.q1_loss),
            (&nets.q2, &c2, &mut g_q2, &mut losses.q2_loss),
        ] {
            let err = cache.output[t.action] - target;
            *loss += 0.5 * err * err / n;
            let mut d = vec![0.0; cache.output.len()];
            d[t.action] = err / n;
            net.accumulate_backward(cache, &d, grads).map_err(size_err)?;
        }
        let cp = nets.policy.forward_cached(&t.observation).map_err(size_err)?;
        let p = &cp.output;
        let logp = log_softmax(cp.layers.last().unwrap());
        let f: Vec<f64> = (0..p.len())
            .map(|i| alpha * logp[i] - c1.output[i].min(c2.output[i]))
            .collect();
        let mean_f: f64 = p.iter().zip(&f).map(|(a, b)| a * b).sum();
        let d: Vec<f64> = (0..p.len()).map(|i| p[i] * (f[i] - mean_f) / n).collect();
        nets.policy.accumulate_backward(&cp, &d, &mut g_pi).map_err(size_err)?;
        losses.policy_loss += mean_f / n;
        losses.entropy += -p.iter().zip(&logp).map(|(a, b)| a * b).sum::<f64>() / n;
    }
    check(losses.q1_loss, "q1 loss", update)?;
    check(losses.q2_loss, "q2 loss", update)?;
    check(losses.policy_loss, "policy loss", update)?;
    for (g, what) in [(&mut g_q1, "q1 gradient"), (&mut g_q2, "q2 gradient"), (&mut g_pi, "policy gradient")] {
        if !g.is_finite() {
            return Err(TrainError::NonFinite {
                what: what.to_string(),
                update,
            });
        }
        g.clip_norm(cfg.max_grad_norm);
    }
    let shape = |e: crate::neural::NetworkError| TrainError::Config(e.to_string());
    optimizer_step(&mut nets.q1, &g_q1, &mut nets.opt_q1).map_err(shape)?;
    optimizer_step(&mut nets.q2, &g_q2, &mut nets.opt_q2).map_err(shape)?;
    optimizer_step(&mut nets.policy, &g_pi, &mut nets.opt_policy).map_err(shape)?;
    if cfg.auto_alpha {
        // Loss log α · (H − H̄): raises α when the policy is less random than the target.
        let g = losses.entropy - nets.target_entropy;
        nets.opt_alpha.step(&mut nets.log_alpha, g);
        nets.log_alpha = nets.log_alpha.clamp(-20.0, 2.0);
    }
    nets.q1_target.polyak_update(&nets.q1, cfg.tau);
    nets.q2_target.polyak_update(&nets.q2, cfg.tau);
    Ok(losses)
}

/// Regresses a scalar value network onto the soft state value at the given observations.
pub fn distill_value<R: Rng + ?Sized>(
    nets: &SacNets,
    observations: &[Vec<f64>],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<NetworkParams, TrainError> {
    let dim = nets.policy.input_dim();
    let mut value = cfg.new_value(dim, 1, rng);
    let mut opt = OptimizerState::adam(&value, cfg.value_lr);
    let alpha = nets.alpha();
    let targets: Vec<f64> = observations
        .iter()
        .map(|o| soft_state_value(&nets.policy, &nets.q1, &nets.q2, alpha, o))
        .collect();
    let mut order: Vec<usize> = (0..observations.len()).collect();
    for epoch in 0..cfg.distill_epochs {
        use rand::seq::SliceRandom;
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut g = Gradients::zeros_like(&value);
            let n = chunk.len() as f64;
            for &i in chunk {
                let c = value.forward_cached(&observations[i]).expect("observation size");
                let err = c.output[0] - targets[i];
                value.accumulate_backward(&c, &[err / n], &mut g).expect("scalar head");
            }
            if !g.is_finite() {
                return Err(TrainError::NonFinite {
                    what: "value distillation gradient".into(),
                    update: epoch as u64,
                });
            }
            g.clip_norm(cfg.max_grad_norm);
            optimizer_step(&mut value, &g, &mut opt).map_err(|e| TrainError::Config(e.to_string()))?;
        }
    }
    Ok(value)
}

/// States used for value distillation.
const DISTILL_STATES: usize = 10_000;

pub fn train_sac<E: Environment, F: Fn() -> E>(
    make_env: F,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainResult, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = make_env();
    let mut eval_env = make_env();
    let actions = env.action_count();
    let mut nets = SacNets::new(env.observation_dim(), actions, cfg, &mut rng);
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let mut curve = Vec::new();
    let mut loss_trace = Vec::new();
    let mut obs = env.reset(rng.gen());
    let mut updates = 0u64;
    for step in 1..=cfg.total_steps {
        let action = if step <= cfg.warmup_steps {
            rng.gen_range(0..actions)
        } else {
            let p = nets.policy.forward(&obs).expect("observation size");
            sample_categorical(&p, &mut rng)
        };
        let out = env.step(action);
        let done = out.status.is_done();
        buffer.push(Transition {
            observation: std::mem::take(&mut obs),
            action,
            reward: out.reward,
            next_observation: out.observation.clone(),
            done,
            terminal: out.status,
        });
        obs = if done { env.reset(rng.gen()) } else { out.observation };
        if step > cfg.warmup_steps && buffer.len() >= cfg.batch_size {
            let batch = buffer.sample(cfg.batch_size, &mut rng);
            updates += 1;
            let l = sac_update(&mut nets, &batch, cfg, updates)?;
            loss_trace.push(l.q1_loss + l.q2_loss + l.policy_loss);
        }
        if step % cfg.eval_period == 0 {
            let r = evaluate_policy(
                &mut eval_env,
                &nets.policy,
                cfg.eval_episodes,
                cfg.eval_seed,
                cfg.gamma,
                EVAL_MAX_STEPS,
            );
            curve.push(CurvePoint {
                step,
                seed,
                mean_return: r.mean_return,
                success_rate: r.success_rate,
                collision_rate: r.collision_rate,
            });
        }
    }
    let mut states: Vec<Vec<f64>> = buffer.iter().map(|t| t.observation.clone()).collect();
    if states.len() > DISTILL_STATES {
        use rand::seq::SliceRandom;
        states.shuffle(&mut rng);
        states.truncate(DISTILL_STATES);
    }
    let value = distill_value(&nets, &states, cfg, &mut rng)?;
    Ok(TrainResult {
        policy: nets.policy,
        value,
        curve,
        loss_trace,
    })
}
