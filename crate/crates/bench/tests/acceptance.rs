//! End-to-end acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::Path;
use std::time::Instant;

use bida_bench::agents::{AgentKind, Networks};
use bida_bench::aggregate::CellSummary;
use bida_bench::commands::{evaluate_command, train_networks};
use bida_bench::config::{densities, ExperimentConfig};
use bida_bench::episode::{metrics_from_trace, EpisodeTrace, TraceFrame};
use bida_bench::oracle;
use bida_core::decision_mdp::{execute_action, ActionId, EnvConfig, TerminalStatus};
use bida_core::geometry::Vec2;
use bida_core::motion::{cross_track_error, generate_plan, track_step, FeasibilityLimits, NominalProfiles};
use bida_core::rl_training::{
    chain_optimal_return, evaluate_policy, train, Algorithm, ChainEnv, CurvePoint, TrainConfig, CHAIN_GAMMA,
    CHAIN_HORIZON,
};
use bida_core::traffic_world::{spawn_scenario, ScenarioConfig, ScenarioKind, SurroundingBehavior};

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn report(id: usize, name: &'static str, passed: bool, detail: String) -> Outcome {
    let o = Outcome { id, name, passed, detail };
    println!(
        "criterion {:2} {} {}: {}",
        o.id,
        if o.passed { "PASS" } else { "FAIL" },
        o.name,
        o.detail
    );
    o
}

fn from_check(id: usize, r: oracle::CheckResult) -> Outcome {
    report(id, r.name, r.passed, r.detail)
}

fn chain_config(algorithm: Algorithm) -> TrainConfig {
    TrainConfig {
        algorithm,
        gamma: CHAIN_GAMMA,
        hidden: vec![32],
        total_steps: match algorithm {
            Algorithm::Sac => 6_000,
            Algorithm::Ppo => 20_000,
        },
        warmup_steps: 500,
        policy_lr: 3e-3,
        initial_alpha: 0.02,
        rollout_length: 512,
        eval_period: 1_000,
        eval_episodes: 1,
        ..TrainConfig::default()
    }
}

/// (mean of the first 10% of eval points, mean of the last 10%).
fn curve_ends(curve: &[CurvePoint]) -> (f64, f64) {
    let k = (curve.len() / 10).max(1);
    let mean = |ps: &[CurvePoint]| ps.iter().map(|p| p.mean_return).sum::<f64>() / ps.len() as f64;
    (mean(&curve[..k]), mean(&curve[curve.len() - k..]))
}

fn training_signal(highway_nets: &mut Option<Networks>) -> Outcome {
    let start = Instant::now();
    let optimum = chain_optimal_return();
    let mut parts = Vec::new();
    let mut ok = true;
    for algo in [Algorithm::Sac, Algorithm::Ppo] {
        let cfg = chain_config(algo);
        let r = train(ChainEnv::new, &cfg, 0).expect("chain training runs");
        let e = evaluate_policy(&mut ChainEnv::new(), &r.policy, 1, 0, CHAIN_GAMMA, CHAIN_HORIZON);
        let frac = e.mean_return / optimum;
        ok &= frac >= 0.95;
        parts.push(format!("chain {algo:?} {:.1}% of optimum", 100.0 * frac));
    }
    let cfg = ExperimentConfig::for_kind(ScenarioKind::MultiLaneHighway);
    for &seed in &cfg.train.seeds {
        let o = train_networks(&cfg, cfg.train.algorithm, seed).expect("highway-lite training runs");
        let (first, last) = curve_ends(&o.result.curve);
        ok &= last > first && o.eval.success_rate >= 0.70;
        parts.push(format!(
            "highway-lite seed {seed}: return {first:.2} -> {last:.2}, success {:.0}%",
            100.0 * o.eval.success_rate
        ));
        if highway_nets.is_none() {
            *highway_nets = Some(Networks {
                policy: o.result.policy,
                value: o.result.value,
            });
        }
    }
    parts.push(format!("{:.0} s", start.elapsed().as_secs_f64()));
    report(5, "training_signal", ok, parts.join("; "))
}

/// All four agents at the middle density of a scenario: [BIDA, PlainMCTS, RawPolicy, RuleBased].
fn middle_density_cells(kind: ScenarioKind, nets: &Networks, out: &Path) -> Vec<CellSummary> {
    let mut cfg = ExperimentConfig::for_kind(kind);
    cfg.scenario.sv_count = densities(kind)[1];
    AgentKind::ALL
        .iter()
        .map(|&agent| {
            let dir = out.join(format!("{:?}_{}", kind, agent.label()));
            evaluate_command(&cfg, agent, Some(nets), &dir).expect("evaluation runs")
        })
        .collect()
}

fn describe(cells: &[CellSummary]) -> String {
    cells
        .iter()
        .map(|c| {
            format!(
                "{} coll {} inv {} time {}",
                c.key.agent.label(),
                c.collisions,
                c.invasive_actions,
                c.mean_completion_time.map_or("-".into(), |t| format!("{t:.2}"))
            )
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn tracking() -> Outcome {
    let mut sc = ScenarioConfig::highway();
    sc.sv_count = 0;
    sc.lane_count = 3;
    let limits = FeasibilityLimits::default();
    let profiles = NominalProfiles::default();

    let mut world = spawn_scenario(&sc).unwrap();
    let (_, traj) = generate_plan(&world, ActionId::LaneChangeLeft, &limits, &profiles).unwrap();
    let dt = world.dt();
    let mut lane_change: f64 = 0.0;
    for k in 0..(traj.duration / dt).round() as usize {
        let cmd = track_step(&world.ego, &traj, k as f64 * dt).unwrap();
        world.advance(cmd.into(), dt, SurroundingBehavior::Reactive);
        lane_change = lane_change.max(cross_track_error(&traj, world.ego.position()).abs());
    }

    let mut world = spawn_scenario(&sc).unwrap();
    let (plan, _) = generate_plan(&world, ActionId::MaintainLane, &limits, &profiles).unwrap();
    let traj = plan.sample(10.0, dt);
    let mut straight: f64 = 0.0;
    for k in 0..(10.0 / dt).round() as usize {
        let cmd = track_step(&world.ego, &traj, k as f64 * dt).unwrap();
        world.advance(cmd.into(), dt, SurroundingBehavior::Reactive);
        straight = straight
            .max(cross_track_error(&traj, world.ego.position()).abs())
            .max(Vec2::new(0.0, world.ego.y).norm());
    }
    report(
        8,
        "closed_loop_tracking",
        lane_change < 0.2 && straight < 0.1,
        format!("lane change max {lane_change:.4} m, straight hold max {straight:.4} m"),
    )
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(nets: &Networks, out: &Path) -> Outcome {
    let mut cfg = ExperimentConfig::for_kind(ScenarioKind::MultiLaneHighway);
    cfg.episodes = 5;
    let a = out.join("det_a");
    let b = out.join("det_b");
    for d in [&a, &b] {
        evaluate_command(&cfg, AgentKind::Bida, Some(nets), d).expect("evaluation runs");
    }
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    let traces = ta.iter().filter(|(n, _)| n.ends_with(".jsonl")).count();
    report(
        9,
        "evaluate_determinism",
        ta == tb && traces == 5,
        format!("{} files compared, {traces} traces, identical {}", ta.len(), ta == tb),
    )
}

fn infeasibility() -> Outcome {
    let mut sc = ScenarioConfig::highway();
    sc.sv_count = 0;
    let env = EnvConfig::for_scenario(sc);
    let mut world = spawn_scenario(&env.scenario).unwrap();
    let top = world.map.lanes.len() - 1;
    world.ego.y = world.map.lanes[top].center_y;
    world.ego.lane_index = Some(top);
    world.ego_plan.target_lane = Some(top);
    let out = execute_action(&world, ActionId::LaneChangeLeft, &env);
    let frame = TraceFrame {
        episode: 0,
        seed: 0,
        decision: 0,
        time: out.world.time,
        action: ActionId::LaneChangeLeft,
        fallback: false,
        feasible: out.feasible,
        status: out.status,
        reward: out.reward.clone(),
        ego: (&out.world.ego).into(),
        svs: Vec::new(),
        walkers: Vec::new(),
        samples: out.samples.clone(),
        root: None,
    };
    let trace = EpisodeTrace { frames: vec![frame] };
    let back = EpisodeTrace::from_jsonl(&trace.to_jsonl()).unwrap();
    let recorded = &back.frames[0];
    let m = metrics_from_trace(&back, 0.99);
    let ok = recorded.status == TerminalStatus::Infeasible
        && recorded.reward.success == -5.0
        && m.outcome == TerminalStatus::Infeasible;
    report(
        10,
        "infeasibility_coupling",
        ok,
        format!("status {:?}, success component {}", recorded.status, recorded.reward.success),
    )
}

fn main() {
    let start = Instant::now();
    let scratch = tempfile::tempdir().expect("temp dir");
    let mut results = vec![
        from_check(1, oracle::toy_optimality()),
        from_check(2, oracle::search_accounting()),
        from_check(3, oracle::point_checks()),
        from_check(4, oracle::gradient_oracle()),
    ];

    let mut highway = None;
    results.push(training_signal(&mut highway));
    let highway = highway.expect("highway networks trained");
    let t_cfg = ExperimentConfig::for_kind(ScenarioKind::UnsignalizedTIntersection);
    let t = train_networks(&t_cfg, t_cfg.train.algorithm, 0).expect("T-lite training runs");
    let t_nets = Networks {
        policy: t.result.policy,
        value: t.result.value,
    };

    let mut order_ok = true;
    let mut time_ok = true;
    let mut order_detail = Vec::new();
    let mut time_detail = Vec::new();
    for (kind, nets) in [
        (ScenarioKind::MultiLaneHighway, &highway),
        (ScenarioKind::UnsignalizedTIntersection, &t_nets),
    ] {
        let cells = middle_density_cells(kind, nets, scratch.path());
        let [bida, mcts, policy, rule] = [&cells[0], &cells[1], &cells[2], &cells[3]];
        order_ok &= bida.collisions <= mcts.collisions && mcts.collisions <= policy.collisions;
        order_ok &= [mcts, policy, rule]
            .iter()
            .all(|c| bida.invasive_actions <= c.invasive_actions);
        order_detail.push(format!("{kind:?} [{}]", describe(&cells)));
        let (b, r) = (bida.mean_completion_time, rule.mean_completion_time);
        time_ok &= matches!((b, r), (Some(b), Some(r)) if b <= r);
        time_detail.push(format!(
            "{kind:?} BIDA {} vs RuleBased {}",
            b.map_or("-".into(), |x| format!("{x:.2} s")),
            r.map_or("-".into(), |x| format!("{x:.2} s"))
        ));
    }
    results.push(report(6, "collision_and_invasive_ordering", order_ok, order_detail.join("; ")));
    results.push(report(7, "completion_time_ordering", time_ok, time_detail.join("; ")));
    results.push(tracking());
    results.push(determinism(&highway, scratch.path()));
    results.push(infeasibility());

    results.sort_by_key(|o| o.id);
    let failed: Vec<String> = results
        .iter()
        .filter(|o| !o.passed)
        .map(|o| format!("{} ({})", o.id, o.name))
        .collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
