//! Five-state chain used to check that the trainers learn.
//!
//! Action 0 ("back") pays 0.05 and returns to the first state; action 1 ("forward") moves one
//! state right and pays 1 when taken in the last state, which ends the episode. The myopic
//! choice is "back" everywhere while the optimal policy always goes forward.

use super::{EnvStep, Environment};
use crate::decision_mdp::TerminalStatus;

pub const CHAIN_STATES: usize = 5;
pub const CHAIN_GAMMA: f64 = 0.9;
pub const CHAIN_HORIZON: usize = 20;
const BACK_REWARD: f64 = 0.05;
const GOAL_REWARD: f64 = 1.0;

#[derive(Clone, Debug, Default)]
pub struct ChainEnv {
    state: usize,
    t: usize,
}

impl ChainEnv {
    pub fn new() -> Self {
        Self::default()
    }

    fn obs(&self) -> Vec<f64> {
        let mut o = vec![0.0; CHAIN_STATES];
        o[self.state] = 1.0;
        o
    }
}

impl Environment for ChainEnv {
    fn observation_dim(&self) -> usize {
        CHAIN_STATES
    }

    fn action_count(&self) -> usize {
        2
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.state = 0;
        self.t = 0;
        self.obs()
    }

    fn step(&mut self, action: usize) -> EnvStep {
        self.t += 1;
        let (reward, status) = if action == 0 {
            self.state = 0;
            (BACK_REWARD, TerminalStatus::Running)
        } else if self.state + 1 == CHAIN_STATES {
            (GOAL_REWARD, TerminalStatus::TaskComplete)
        } else {
            self.state += 1;
            (0.0, TerminalStatus::Running)
        };
        let status = if status == TerminalStatus::Running && self.t >= CHAIN_HORIZON {
            TerminalStatus::Timeout
        } else {
            status
        };
        EnvStep {
            observation: self.obs(),
            reward,
            status,
        }
    }
}

/// Optimal discounted return from the start state by finite-horizon value iteration.
pub fn chain_optimal_return() -> f64 {
    // v[s] with k steps remaining.
    let mut v = [0.0f64; CHAIN_STATES];
    for _ in 0..CHAIN_HORIZON {
        let mut next = [0.0; CHAIN_STATES];
        for (s, slot) in next.iter_mut().enumerate() {
            let back = BACK_REWARD + CHAIN_GAMMA * v[0];
            let forward = if s + 1 == CHAIN_STATES {
                GOAL_REWARD
            } else {
                CHAIN_GAMMA * v[s + 1]
            };
            *slot = back.max(forward);
        }
        v = next;
    }
    v[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimal_return_is_discounted_goal() {
        assert!((chain_optimal_return() - CHAIN_GAMMA.powi(4)).abs() < 1e-15);
    }

    #[test]
    fn forward_walk_reaches_goal() {
        let mut env = ChainEnv::new();
        env.reset(0);
        for _ in 0..4 {
            assert_eq!(env.step(1).status, TerminalStatus::Running);
        }
        let last = env.step(1);
        assert_eq!((last.reward, last.status), (1.0, TerminalStatus::TaskComplete));
    }

    #[test]
    fn dawdling_times_out() {
        let mut env = ChainEnv::new();
        env.reset(0);
        for _ in 0..CHAIN_HORIZON - 1 {
            assert_eq!(env.step(0).status, TerminalStatus::Running);
        }
        assert_eq!(env.step(0).status, TerminalStatus::Timeout);
    }
}
