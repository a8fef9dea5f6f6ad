//! Self-checks run by `oracle-check`: tree search against an enumerated toy MDP, search
//! bookkeeping, closed-form reward and search formulas, and network gradients.

use std::collections::BTreeMap;
use std::time::Instant;

use bida_core::decision_mdp::{efficiency_reward, safety_reward, success_reward, EnvConfig, TerminalStatus};
use bida_core::neural::{gradient_check, softmax, Activation, Head, NetworkParams};
use bida_core::search_tree::toy::TreeMdp;
use bida_core::search_tree::{
    backpropagate, exploration_bonus, plan, plan_with_tree, DrivingModel, LeafEvaluator, SearchConfig,
    TieBreak, Tree, TreeNode,
};
use bida_core::traffic_world::{spawn_scenario, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Deceptive depth-3 toy MDP planned with exact values, n = 200, over 100 seeds.
pub fn toy_optimality() -> CheckResult {
    let model = TreeMdp::deceptive();
    let optimal = model.optimal_root_action();
    let greedy = model.greedy_root_action();
    let cfg = SearchConfig {
        iterations: 200,
        gamma: model.gamma,
        tie_break: TieBreak::Random,
        ..SearchConfig::default()
    };
    let start = Instant::now();
    let mut hits = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Ok((a, _)) = plan(Vec::new(), &model, &cfg, &mut rng) {
            hits += (a == optimal) as usize;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    CheckResult::new(
        "toy_mdp_optimality",
        hits == 100 && secs < 5.0 && greedy != optimal,
        format!("{hits}/100 optimal (greedy {greedy}, optimal {optimal}) in {secs:.3} s"),
    )
}

/// Visit conservation, running means and the closed-form return on a driving state.
pub fn search_accounting() -> CheckResult {
    let mut worst_mean = 0.0f64;
    let mut worst_closed = 0.0f64;
    let mut conserved = true;
    for (scenario, seed) in [(ScenarioConfig::highway(), 3u64), (ScenarioConfig::t_intersection(), 5)] {
        let env = EnvConfig::for_scenario(scenario.with_seed(seed));
        let world = spawn_scenario(&env.scenario).expect("default scenario spawns");
        let model = DrivingModel::new(&env, None, LeafEvaluator::RandomRollout { depth: 3 }, 0.95);
        let cfg = SearchConfig {
            iterations: 100,
            gamma: 0.95,
            ..SearchConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Ok((_, trace, tree)) = plan_with_tree(world, &model, &cfg, &mut rng) else {
            return CheckResult::new("search_accounting", false, "degenerate root".into());
        };
        conserved &= tree.root().total_visits() as usize == cfg.iterations;
        let mut samples: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for it in &trace.iterations {
            let t = it.rewards.len() - 1;
            for (i, (&node, &a)) in it.nodes.iter().zip(&it.actions).enumerate() {
                samples.entry((node, a)).or_default().push(it.returns[i]);
                let closed: f64 = (i..=t)
                    .map(|k| cfg.gamma.powi((k - i) as i32) * it.rewards[k])
                    .sum::<f64>()
                    + cfg.gamma.powi((t - i) as i32) * it.leaf_value;
                worst_closed = worst_closed.max((closed - it.returns[i]).abs());
            }
        }
        for ((node, a), rs) in &samples {
            let e = &tree.nodes[*node].edges[*a];
            let mean = rs.iter().sum::<f64>() / rs.len() as f64;
            conserved &= e.n as usize == rs.len();
            worst_mean = worst_mean.max((e.q - mean).abs());
        }
    }
    CheckResult::new(
        "search_accounting",
        conserved && worst_mean <= 1e-9 && worst_closed <= 1e-12,
        format!("visits conserved {conserved}, max |Q - mean R| {worst_mean:.2e}, max closed-form error {worst_closed:.2e}"),
    )
}

/// Reward terms, exploration bonus and the incremental mean at hand-picked points.
pub fn point_checks() -> CheckResult {
    let mut errors = Vec::new();
    let mut check = |what: &str, got: f64, want: f64| {
        if (got - want).abs() > 1e-12 {
            errors.push(format!("{what}: {got} != {want}"));
        }
    };
    check("success collided", success_reward(TerminalStatus::Collided), -10.0);
    check("success complete", success_reward(TerminalStatus::TaskComplete), 10.0);
    check("success infeasible", success_reward(TerminalStatus::Infeasible), -5.0);
    check("safety at 2 m", safety_reward(2.0, false), -1.0 / 1.8);
    check("efficiency half speed", efficiency_reward(10.0, 20.0), 0.5);
    check("efficiency above target", efficiency_reward(25.0, 20.0), 1.0);

    let mut node = TreeNode::new((), 0, &[0.5, 0.5], false, 0.0, 0.0);
    node.edges[0].n = 3;
    node.edges[1].n = 1;
    check("exploration bonus", exploration_bonus(&node, 1), (5.0f64.ln() / 2.0).sqrt());

    let mut root = TreeNode::new((), 0, &[1.0], false, 0.0, 0.0);
    root.edges[0].q = 2.0;
    root.edges[0].n = 3;
    root.edges[0].child = Some(1);
    let leaf = TreeNode::new((), 1, &[1.0], false, 6.0, 0.0);
    let mut tree = Tree { nodes: vec![root, leaf] };
    backpropagate(&mut tree, &[(0, 0)], 6.0, 0.9);
    check("incremental mean", tree.nodes[0].edges[0].q, 3.0);

    CheckResult::new(
        "formula_point_checks",
        errors.is_empty(),
        if errors.is_empty() {
            "11 values exact to 1e-12".into()
        } else {
            errors.join("; ")
        },
    )
}

fn random_net(seed: u64) -> (NetworkParams, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=3);
    let mut dims = vec![rng.gen_range(1..=8)];
    for _ in 0..depth {
        dims.push(rng.gen_range(1..=8));
    }
    let act = if rng.gen_bool(0.5) { Activation::Tanh } else { Activation::ReLU };
    let head = if rng.gen_bool(0.5) { Head::Softmax } else { Head::Linear };
    let mut net = NetworkParams::random(&dims, act, head, &mut rng);
    // Zero biases would put ReLU pre-activations exactly on the kink.
    for b in net.biases.iter_mut().flatten() {
        *b = rng.gen_range(-0.5..0.5);
    }
    let x = (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c = (0..*dims.last().unwrap()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (net, x, c)
}

/// Central differences over 100 random networks and softmax outputs on random logits.
pub fn gradient_oracle() -> CheckResult {
    let worst = (0..100u64)
        .map(|s| {
            let (net, x, c) = random_net(s);
            gradient_check(&net, &x, &c, 1e-6)
        })
        .fold(0.0f64, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut simplex_err = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..10);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let p = softmax(&z);
        let neg = p.iter().any(|x| *x < 0.0);
        simplex_err = simplex_err.max((p.iter().sum::<f64>() - 1.0).abs() + if neg { 1.0 } else { 0.0 });
    }
    CheckResult::new(
        "network_gradients",
        worst < 1e-4 && simplex_err <= 1e-6,
        format!("max relative gradient error {worst:.2e}, max simplex error {simplex_err:.2e}"),
    )
}

pub fn run_all() -> Vec<CheckResult> {
    vec![toy_optimality(), search_accounting(), point_checks(), gradient_oracle()]
}
