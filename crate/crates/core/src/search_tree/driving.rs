use rand::{Rng, RngCore};

use super::{plan, ModelStep, SearchConfig, SearchError, SearchModel, SearchTrace};
use crate::decision_mdp::{
    execute_action, goal_reached, observe, resolve_status, ActionId, EnvConfig, PeriodStats,
    StepOutcome, TerminalStatus,
};
use crate::motion::generate_plan;
use crate::neural::NetworkParams;
use crate::traffic_world::{ego_collides, predict_from_plan, WorldState};

/// Predicted worlds checked per decision period inside the tree.
pub const PREDICTION_SAMPLES: usize = 5;

#[derive(Clone, Copy, Debug)]
pub enum LeafEvaluator<'a> {
    /// Scalar value network on the observation.
    Value(&'a NetworkParams),
    /// Discounted return of uniformly random feasible actions for up to `depth` decisions.
    RandomRollout { depth: usize },
    Zero,
}

/// The driving MDP seen through the constant-velocity prediction model.
#[derive(Clone, Copy, Debug)]
pub struct DrivingModel<'a> {
    pub env: &'a EnvConfig,
    /// Prior network; uniform priors when absent.
    pub policy: Option<&'a NetworkParams>,
    pub leaf: LeafEvaluator<'a>,
    pub gamma: f64,
    pub samples: usize,
}

impl<'a> DrivingModel<'a> {
    pub fn new(env: &'a EnvConfig, policy: Option<&'a NetworkParams>, leaf: LeafEvaluator<'a>, gamma: f64) -> Self {
        Self {
            env,
            policy,
            leaf,
            gamma,
            samples: PREDICTION_SAMPLES,
        }
    }

    fn action(&self, index: usize) -> ActionId {
        ActionId::from_index(self.env.scenario.scenario_kind, index).expect("action index in range")
    }

    /// Predicted outcome of `action`, or `None` when the planner finds it infeasible.
    pub fn transition(&self, state: &WorldState, action: usize) -> Option<(WorldState, f64, TerminalStatus)> {
        let (plan, _) = generate_plan(state, self.action(action), &self.env.limits, &self.env.profiles).ok()?;
        let worlds = predict_from_plan(state, &plan, self.env.decision_period, self.samples);
        let mut stats = PeriodStats::new(state);
        let mut status = TerminalStatus::Running;
        let mut next = None;
        for w in worlds {
            stats.record(&w);
            status = resolve_status(
                ego_collides(&w),
                goal_reached(&w),
                true,
                w.time >= self.env.timeout - 1e-9,
            );
            let done = status.is_done();
            next = Some(w);
            if done {
                break;
            }
        }
        let next = next.expect("at least one predicted world");
        let reward = stats.finish(state, &next, status, &self.env.reward).total;
        Some((next, reward, status))
    }

    fn infeasible_reward(&self, state: &WorldState) -> f64 {
        let mut stats = PeriodStats::new(state);
        stats.record(state);
        stats
            .finish(state, state, TerminalStatus::Infeasible, &self.env.reward)
            .total
    }

    fn rollout(&self, state: &WorldState, depth: usize, rng: &mut dyn RngCore) -> f64 {
        let n = self.action_count();
        let mut s = state.clone();
        let (mut ret, mut discount) = (0.0, 1.0);
        for _ in 0..depth {
            let mut order: Vec<usize> = (0..n).collect();
            let mut step = None;
            while !order.is_empty() {
                let a = order.swap_remove(rng.gen_range(0..order.len()));
                if let Some(t) = self.transition(&s, a) {
                    step = Some(t);
                    break;
                }
            }
            let Some((next, r, status)) = step else {
                ret += discount * self.infeasible_reward(&s);
                break;
            };
            ret += discount * r;
            discount *= self.gamma;
            if status.is_done() {
                break;
            }
            s = next;
        }
        ret
    }
}

impl SearchModel for DrivingModel<'_> {
    type State = WorldState;

    fn action_count(&self) -> usize {
        crate::decision_mdp::action_set(self.env.scenario.scenario_kind).len()
    }

    fn feasible(&self, state: &WorldState, action: usize) -> bool {
        generate_plan(state, self.action(action), &self.env.limits, &self.env.profiles).is_ok()
    }

    fn step(&self, state: &WorldState, action: usize) -> ModelStep<WorldState> {
        match self.transition(state, action) {
            Some((next, reward, status)) => ModelStep {
                state: next,
                reward,
                terminal: status.is_done(),
            },
            None => ModelStep {
                state: state.clone(),
                reward: self.infeasible_reward(state),
                terminal: true,
            },
        }
    }

    fn priors(&self, state: &WorldState) -> Vec<f64> {
        match self.policy {
            Some(p) => p.forward(&observe(state).0).expect("policy input matches observation"),
            None => {
                let n = self.action_count();
                vec![1.0 / n as f64; n]
            }
        }
    }

    fn value(&self, state: &WorldState, rng: &mut dyn RngCore) -> f64 {
        match self.leaf {
            LeafEvaluator::Value(v) => v.forward(&observe(state).0).expect("value input matches observation")[0],
            LeafEvaluator::RandomRollout { depth } => self.rollout(state, depth, rng),
            LeafEvaluator::Zero => 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RollingOutcome {
    pub action: ActionId,
    pub outcome: StepOutcome,
    /// Absent when the root was degenerate and the fallback action was used.
    pub trace: Option<SearchTrace>,
    pub fallback: bool,
}

/// Plans from `world`, executes the chosen action for one decision period in the closed-loop
/// simulator and discards the tree.
pub fn rolling_step<R: RngCore>(
    world: &WorldState,
    model: &DrivingModel<'_>,
    cfg: &SearchConfig,
    rng: &mut R,
) -> Result<RollingOutcome, SearchError> {
    let kind = model.env.scenario.scenario_kind;
    let (action, trace, fallback) = match plan(world.clone(), model, cfg, rng) {
        Ok((a, t)) => (ActionId::from_index(kind, a).expect("action index in range"), Some(t), false),
        Err(SearchError::DegenerateRoot) => (ActionId::fallback(kind), None, true),
        Err(e) => return Err(e),
    };
    let outcome = execute_action(world, action, model.env);
    Ok(RollingOutcome {
        action,
        outcome,
        trace,
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, Head};
    use crate::search_tree::{expand_and_evaluate, Tree, TreeNode};
    use crate::traffic_world::{spawn_scenario, ScenarioConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ego_only_env() -> EnvConfig {
        let mut sc = ScenarioConfig::highway();
        sc.sv_count = 0;
        EnvConfig::for_scenario(sc)
    }

    #[test]
    fn depth_one_expansion_matches_kinematics() {
        let env = ego_only_env();
        let world = spawn_scenario(&env.scenario).unwrap();
        let mut value = NetworkParams::zeros(&[crate::decision_mdp::OBS_DIM, 1], Activation::Tanh, Head::Linear);
        value.biases[0][0] = 0.75;
        let model = DrivingModel::new(&env, None, LeafEvaluator::Value(&value), 0.99);
        let cfg = SearchConfig::default();
        let priors = model.priors(&world);
        let mut tree = Tree {
            nodes: vec![TreeNode::new(world.clone(), 0, &priors, false, 0.0, 0.0)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = ActionId::AccelInLane.index();
        let (child, r) = expand_and_evaluate(&mut tree, 0, a, &model, &cfg, &mut rng);
        assert_eq!(r, 0.75);
        let s = &tree.nodes[child].state;
        let (v0, acc, t) = (world.ego.speed, env.profiles.accel, 0.5);
        assert!((s.ego.speed - (v0 + acc * t)).abs() < 1e-9);
        assert!((s.ego.x - (v0 * t + 0.5 * acc * t * t)).abs() < 1e-9);
        assert!(s.ego.y.abs() < 1e-9);
    }

    #[test]
    fn infeasible_edge_is_terminal_with_penalty() {
        let env = ego_only_env();
        let world = spawn_scenario(&env.scenario).unwrap();
        let model = DrivingModel::new(&env, None, LeafEvaluator::Zero, 0.99);
        let a = ActionId::LaneChangeRight.index();
        assert!(!model.feasible(&world, a));
        let out = model.step(&world, a);
        assert!(out.terminal);
        let efficiency = (world.ego.speed / env.scenario.speed_limit).min(1.0);
        let expected = -5.0 + env.reward.w_efficiency * efficiency;
        assert!((out.reward - expected).abs() < 1e-12, "{}", out.reward);
    }

    #[test]
    fn rolling_steps_keep_lane_on_empty_road() {
        let env = ego_only_env();
        let world = spawn_scenario(&env.scenario).unwrap();
        let model = DrivingModel::new(&env, None, LeafEvaluator::Zero, 0.99);
        let cfg = SearchConfig {
            iterations: 20,
            ..SearchConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = rolling_step(&world, &model, &cfg, &mut rng).unwrap();
        let b = rolling_step(&world, &model, &cfg, &mut rng).unwrap();
        // Independent trees: counts never exceed one search's budget.
        for t in [&a.trace, &b.trace] {
            assert_eq!(t.as_ref().unwrap().root_visits().iter().sum::<u32>(), 20);
        }
    }
}
