//! Interactive decision making for automated driving: a 2D traffic simulator, an MDP layer
//! with a five-term reward, small neural networks, SAC/PPO trainers, a network-guided
//! Monte Carlo tree search and a trajectory generator with a tracking controller.

pub mod decision_mdp;
pub mod geometry;
pub mod motion;
pub mod traffic_world;
pub mod neural;
pub mod rl_training;
pub mod search_tree;
