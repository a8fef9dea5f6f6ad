use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bida_bench::agents::AgentKind;
use bida_bench::commands;
use bida_bench::config::ExperimentConfig;
use bida_bench::oracle;
use bida_bench::BenchError;
use bida_core::rl_training::Algorithm;
use bida_core::traffic_world::ScenarioKind;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bida", version, about = "Train, evaluate and compare interactive driving decision makers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Sac,
    Ppo,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentArg {
    Bida,
    Mcts,
    Policy,
    Rule,
}

impl From<AgentArg> for AgentKind {
    fn from(a: AgentArg) -> Self {
        match a {
            AgentArg::Bida => AgentKind::Bida,
            AgentArg::Mcts => AgentKind::Mcts,
            AgentArg::Policy => AgentKind::Policy,
            AgentArg::Rule => AgentKind::Rule,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train policy and value networks on the config's training scenario.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run closed-loop episodes and write traces and metrics.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        agent: AgentArg,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build one comparison table from several evaluation directories.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an episode trace as text, optionally with SVG plots.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run the toy-MDP, bookkeeping, formula and gradient oracles.
    OracleCheck,
    /// Print the default experiment config for a scenario as JSON.
    DefaultConfig {
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Highway,
    TIntersection,
}

fn run(cli: Cli) -> Result<ExitCode, BenchError> {
    match cli.command {
        Command::Train { config, algo, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let algorithm = match algo {
                Algo::Sac => Algorithm::Sac,
                Algo::Ppo => Algorithm::Ppo,
            };
            let o = commands::train_command(&cfg, algorithm, seed, &out)?;
            println!(
                "trained {algorithm:?} seed {seed}: eval success {:.2}, collisions {:.2}, mean return {:.3}",
                o.eval.success_rate, o.eval.collision_rate, o.eval.mean_return
            );
        }
        Command::Evaluate { config, agent, episodes, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            let kind = AgentKind::from(agent);
            let nets = commands::load_networks(&cfg, kind)?;
            let s = commands::evaluate_command(&cfg, kind, nets.as_ref(), &out)?;
            println!(
                "{} on {} SVs: {} episodes, {} collisions, {} invasive actions, {} complete",
                kind, s.key.sv_count, s.episodes, s.collisions, s.invasive_actions, s.task_complete
            );
        }
        Command::Compare { inputs, out } => {
            let csv = commands::compare_command(&inputs, &out)?;
            print!("{csv}");
        }
        Command::Replay { trace, svg } => {
            let text = commands::replay_command(&trace, svg.as_deref())?;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| BenchError::Runtime(e.to_string()))?;
        }
        Command::DefaultConfig { scenario } => {
            let kind = match scenario {
                ScenarioArg::Highway => ScenarioKind::MultiLaneHighway,
                ScenarioArg::TIntersection => ScenarioKind::UnsignalizedTIntersection,
            };
            println!("{}", ExperimentConfig::for_kind(kind).to_json());
        }
        Command::OracleCheck => {
            let results = oracle::run_all();
            for r in &results {
                println!("{}", r.line());
            }
            if results.iter().any(|r| !r.passed) {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
