//! Small deterministic tree MDPs with exactly known values, used to check the search.

use rand::RngCore;

use super::{ModelStep, SearchModel};

/// Complete binary-or-wider tree of fixed depth; the state is the action history and every
/// edge carries a fixed reward. Leaves at `depth` are terminal.
#[derive(Clone, Debug)]
pub struct TreeMdp {
    pub depth: usize,
    pub actions: usize,
    pub gamma: f64,
    /// Reward of taking action `a` after history `h`, indexed by `h` encoded in base
    /// `actions` with a leading 1 (so histories of different lengths never collide).
    rewards: Vec<f64>,
    priors: Option<Vec<f64>>,
    /// Whether `value` returns the exact optimal value (otherwise 0).
    pub exact_value: bool,
}

impl TreeMdp {
    pub fn new<F: Fn(&[usize], usize) -> f64>(depth: usize, actions: usize, gamma: f64, reward: F) -> Self {
        let mut rewards = Vec::new();
        let mut stack = vec![Vec::<usize>::new()];
        while let Some(h) = stack.pop() {
            if h.len() == depth {
                continue;
            }
            for a in 0..actions {
                let key = Self::key_of(actions, &h, a);
                if rewards.len() <= key {
                    rewards.resize(key + 1, 0.0);
                }
                rewards[key] = reward(&h, a);
                let mut next = h.clone();
                next.push(a);
                stack.push(next);
            }
        }
        Self {
            depth,
            actions,
            gamma,
            rewards,
            priors: None,
            exact_value: true,
        }
    }

    /// Depth 3, two actions: the immediately better first action leads to the worse subtree.
    pub fn deceptive() -> Self {
        Self::new(3, 2, 0.9, |h, a| match (h, a) {
            ([], 0) => 1.0,
            ([], 1) => 0.0,
            ([0], _) => 0.0,
            ([1], 0) => 0.5,
            ([1], 1) => 0.0,
            ([0, 0], a) => 0.2 * a as f64,
            ([0, 1], a) => 0.1 * (1 - a) as f64,
            ([1, 0], a) => 2.0 * a as f64,
            ([1, 1], a) => 0.1 * a as f64,
            _ => 0.0,
        })
    }

    pub fn with_priors(mut self, priors: Vec<f64>) -> Self {
        self.priors = Some(priors);
        self
    }

    fn key_of(actions: usize, h: &[usize], a: usize) -> usize {
        let mut k = 1usize;
        for x in h.iter().chain(std::iter::once(&a)) {
            k = k * actions + x;
        }
        k
    }

    pub fn reward(&self, h: &[usize], a: usize) -> f64 {
        self.rewards[Self::key_of(self.actions, h, a)]
    }

    /// Optimal discounted return from history `h` by exhaustive enumeration.
    pub fn optimal_value(&self, h: &[usize]) -> f64 {
        if h.len() >= self.depth {
            return 0.0;
        }
        (0..self.actions)
            .map(|a| self.q_value(h, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn q_value(&self, h: &[usize], a: usize) -> f64 {
        let mut next = h.to_vec();
        next.push(a);
        self.reward(h, a) + self.gamma * self.optimal_value(&next)
    }

    /// Every full action sequence with its discounted return.
    pub fn enumerate(&self) -> Vec<(Vec<usize>, f64)> {
        let mut out = Vec::new();
        let total = self.actions.pow(self.depth as u32);
        for code in 0..total {
            let mut seq = Vec::with_capacity(self.depth);
            let mut c = code;
            for _ in 0..self.depth {
                seq.push(c % self.actions);
                c /= self.actions;
            }
            seq.reverse();
            let mut ret = 0.0;
            let mut discount = 1.0;
            for i in 0..self.depth {
                ret += discount * self.reward(&seq[..i], seq[i]);
                discount *= self.gamma;
            }
            out.push((seq, ret));
        }
        out
    }

    /// First action of the best enumerated sequence (ties to the lower index).
    pub fn optimal_root_action(&self) -> usize {
        let mut best: Option<(usize, f64)> = None;
        for (seq, ret) in self.enumerate() {
            if best.is_none_or(|(_, b)| ret > b) {
                best = Some((seq[0], ret));
            }
        }
        best.expect("tree has sequences").0
    }

    /// Root action with the largest immediate reward.
    pub fn greedy_root_action(&self) -> usize {
        let mut best = 0;
        for a in 1..self.actions {
            if self.reward(&[], a) > self.reward(&[], best) {
                best = a;
            }
        }
        best
    }
}

impl SearchModel for TreeMdp {
    type State = Vec<usize>;

    fn action_count(&self) -> usize {
        self.actions
    }

    fn step(&self, h: &Vec<usize>, a: usize) -> ModelStep<Vec<usize>> {
        let mut next = h.clone();
        next.push(a);
        ModelStep {
            reward: self.reward(h, a),
            terminal: next.len() >= self.depth,
            state: next,
        }
    }

    fn priors(&self, _: &Vec<usize>) -> Vec<f64> {
        self.priors
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.actions as f64; self.actions])
    }

    fn value(&self, h: &Vec<usize>, _: &mut dyn RngCore) -> f64 {
        if self.exact_value {
            self.optimal_value(h)
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deceptive_tree_punishes_greed() {
        let m = TreeMdp::deceptive();
        assert_eq!(m.enumerate().len(), 8);
        assert_eq!(m.optimal_root_action(), 1);
        assert_eq!(m.greedy_root_action(), 0);
        assert!((m.optimal_value(&[]) - (0.5 * 0.9 + 2.0 * 0.81)).abs() < 1e-12);
    }
}
