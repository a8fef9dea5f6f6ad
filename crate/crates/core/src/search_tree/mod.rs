//! Network-guided Monte Carlo tree search over discrete meta-actions with prior-weighted UCB
//! selection, value-network leaf evaluation and incremental backpropagation.

mod driving;
pub mod toy;

use std::time::Instant;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use driving::{rolling_step, DrivingModel, LeafEvaluator, RollingOutcome, PREDICTION_SAMPLES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("every root action is infeasible")]
    DegenerateRoot,
    #[error("invalid search config: {0}")]
    Config(String),
}

/// Result of applying an action inside the model.
#[derive(Clone, Debug)]
pub struct ModelStep<S> {
    pub state: S,
    pub reward: f64,
    pub terminal: bool,
}

/// Generative model the search plans in.
pub trait SearchModel {
    type State: Clone;

    fn action_count(&self) -> usize;

    /// Whether `action` can be executed from `state` at all. Only consulted at the root.
    fn feasible(&self, _state: &Self::State, _action: usize) -> bool {
        true
    }

    fn step(&self, state: &Self::State, action: usize) -> ModelStep<Self::State>;

    /// Prior over actions; must be a probability vector.
    fn priors(&self, state: &Self::State) -> Vec<f64>;

    /// Estimated return of a non-terminal leaf.
    fn value(&self, state: &Self::State, rng: &mut dyn RngCore) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RootSelection {
    MaxVisit,
    MaxQ,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieBreak {
    /// Higher prior first, then lower action index.
    Prior,
    /// Uniformly among the tied actions.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub iterations: usize,
    pub exploration: f64,
    pub max_depth: usize,
    pub decision_period: f64,
    pub gamma: f64,
    pub tie_break: TieBreak,
    pub root_selection: RootSelection,
    /// Start fresh edges at the value of their node instead of 0. With zero initialization
    /// and non-negative returns an unvisited sibling can never outscore a visited edge whose Q
    /// exceeds `c·π·√ln(1 + N)`, so the search collapses onto the first action it tries.
    pub init_q_from_value: bool,
    /// Clamp applied to leaf values.
    pub value_bounds: Option<(f64, f64)>,
    /// Discount the leaf value once more at the deepest edge (`R ← r + γR` from `R = V`).
    /// Off by default: the leaf value then enters the deepest edge undiscounted, so
    /// `R_τ = Σ_{k=τ..t} γ^{k−τ} r_k + γ^{t−τ} V`.
    pub discount_leaf_value: bool,
    /// Record per-decision wall-clock time. Off by default because it breaks trace identity.
    pub record_wall_clock: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            exploration: 1.0,
            max_depth: 10,
            decision_period: 0.5,
            gamma: 0.99,
            tie_break: TieBreak::Prior,
            root_selection: RootSelection::MaxVisit,
            init_q_from_value: true,
            value_bounds: None,
            discount_leaf_value: false,
            record_wall_clock: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.iterations == 0 || self.max_depth == 0 {
            return Err(SearchError::Config("iterations and max_depth must be ≥ 1".into()));
        }
        if !(self.exploration >= 0.0) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(SearchError::Config("need c ≥ 0 and γ ∈ [0, 1]".into()));
        }
        if !(self.decision_period > 0.0) {
            return Err(SearchError::Config("decision period must be positive".into()));
        }
        if let Some((lo, hi)) = self.value_bounds {
            if !(lo <= hi) {
                return Err(SearchError::Config("value bounds must satisfy lo ≤ hi".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub q: f64,
    pub n: u32,
    pub prior: f64,
    pub child: Option<usize>,
    /// r(s, a, s') cached at expansion.
    pub reward: f64,
    /// Whether selection may pick this edge.
    pub allowed: bool,
}

#[derive(Clone, Debug)]
pub struct TreeNode<S> {
    pub state: S,
    pub depth: usize,
    pub edges: Vec<Edge>,
    pub terminal: bool,
    /// Leaf value assigned at expansion (0 for terminal nodes).
    pub value: f64,
}

impl<S> TreeNode<S> {
    pub fn new(state: S, depth: usize, priors: &[f64], terminal: bool, value: f64, init_q: f64) -> Self {
        let edges = priors
            .iter()
            .map(|&prior| Edge {
                q: init_q,
                n: 0,
                prior,
                child: None,
                reward: 0.0,
                allowed: true,
            })
            .collect();
        Self {
            state,
            depth,
            edges,
            terminal,
            value,
        }
    }

    pub fn total_visits(&self) -> u32 {
        self.edges.iter().map(|e| e.n).sum()
    }
}

/// Arena of nodes; index 0 is the root.
#[derive(Clone, Debug)]
pub struct Tree<S> {
    pub nodes: Vec<TreeNode<S>>,
}

impl<S> Tree<S> {
    pub fn root(&self) -> &TreeNode<S> {
        &self.nodes[0]
    }
}

/// U(s, a) = √(ln(1 + Σ_b N(s, b)) / (N(s, a) + 1)).
pub fn exploration_bonus<S>(node: &TreeNode<S>, action: usize) -> f64 {
    let total = node.total_visits() as f64;
    ((1.0 + total).ln() / (node.edges[action].n as f64 + 1.0)).sqrt()
}

/// Q(s, a) + c·π(s, a)·U(s, a).
pub fn edge_score<S>(node: &TreeNode<S>, action: usize, c: f64) -> f64 {
    let e = &node.edges[action];
    e.q + c * e.prior * exploration_bonus(node, action)
}

/// Highest-scoring allowed edge. Ties go to the higher prior, then the lower index.
pub fn select_edge<S>(node: &TreeNode<S>, c: f64) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for a in 0..node.edges.len() {
        if !node.edges[a].allowed {
            continue;
        }
        let s = edge_score(node, a, c);
        best = match best {
            None => Some((a, s)),
            Some((b, bs)) => {
                if s > bs || (s == bs && node.edges[a].prior > node.edges[b].prior) {
                    Some((a, s))
                } else {
                    Some((b, bs))
                }
            }
        };
    }
    best.expect("node has an allowed edge").0
}

fn select_with<S, R: Rng + ?Sized>(node: &TreeNode<S>, cfg: &SearchConfig, rng: &mut R) -> usize {
    match cfg.tie_break {
        TieBreak::Prior => select_edge(node, cfg.exploration),
        TieBreak::Random => {
            let scores: Vec<Option<f64>> = (0..node.edges.len())
                .map(|a| node.edges[a].allowed.then(|| edge_score(node, a, cfg.exploration)))
                .collect();
            let best = scores.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
            let tied: Vec<usize> = (0..scores.len()).filter(|&a| scores[a] == Some(best)).collect();
            tied[rng.gen_range(0..tied.len())]
        }
    }
}

fn clamp_value(v: f64, cfg: &SearchConfig) -> f64 {
    match cfg.value_bounds {
        Some((lo, hi)) => v.clamp(lo, hi),
        None => v,
    }
}

/// Expands `action` at `node`, returning the new child and its leaf value.
pub fn expand_and_evaluate<M: SearchModel>(
    tree: &mut Tree<M::State>,
    node: usize,
    action: usize,
    model: &M,
    cfg: &SearchConfig,
    rng: &mut dyn RngCore,
) -> (usize, f64) {
    debug_assert!(tree.nodes[node].edges[action].child.is_none());
    let out = model.step(&tree.nodes[node].state, action);
    let depth = tree.nodes[node].depth + 1;
    let (priors, value) = if out.terminal {
        (vec![0.0; model.action_count()], 0.0)
    } else {
        (model.priors(&out.state), clamp_value(model.value(&out.state, rng), cfg))
    };
    let init_q = if cfg.init_q_from_value { value } else { 0.0 };
    let child = TreeNode::new(out.state, depth, &priors, out.terminal, value, init_q);
    let id = tree.nodes.len();
    tree.nodes.push(child);
    let e = &mut tree.nodes[node].edges[action];
    e.child = Some(id);
    e.reward = out.reward;
    (id, value)
}

/// Updates each path edge's running mean with `R_τ = Σ_{k=τ..t} γ^{k−τ} r_k + γ^{t−τ} V`,
/// computed incrementally from the leaf upward. Returns the R applied at each path position,
/// root first.
pub fn backpropagate<S>(tree: &mut Tree<S>, path: &[(usize, usize)], leaf_value: f64, gamma: f64) -> Vec<f64> {
    backpropagate_with(tree, path, leaf_value, gamma, false)
}

/// As [`backpropagate`]; with `discount_leaf` the leaf value is discounted at the deepest
/// edge too, i.e. plain `R ← r + γR` starting from `R = V`.
pub fn backpropagate_with<S>(
    tree: &mut Tree<S>,
    path: &[(usize, usize)],
    leaf_value: f64,
    gamma: f64,
    discount_leaf: bool,
) -> Vec<f64> {
    let mut r = leaf_value;
    let mut applied = vec![0.0; path.len()];
    for (i, &(node, action)) in path.iter().enumerate().rev() {
        let e = &mut tree.nodes[node].edges[action];
        let deepest = i + 1 == path.len();
        r = if deepest && !discount_leaf {
            e.reward + r
        } else {
            e.reward + gamma * r
        };
        e.q += (r - e.q) / (e.n as f64 + 1.0);
        e.n += 1;
        applied[i] = r;
    }
    applied
}

/// One select → expand → evaluate → backpropagate pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub nodes: Vec<usize>,
    pub actions: Vec<usize>,
    /// Cached edge reward at each path position.
    pub rewards: Vec<f64>,
    pub leaf_value: f64,
    pub leaf_terminal: bool,
    /// R applied at each path position, root first.
    pub returns: Vec<f64>,
    /// (Q, N) of each path edge after the update.
    pub edge_stats: Vec<(f64, u32)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootEdgeSummary {
    pub action: usize,
    pub q: f64,
    pub n: u32,
    pub prior: f64,
    pub allowed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub iterations: Vec<IterationRecord>,
    pub root: Vec<RootEdgeSummary>,
    pub chosen: usize,
    pub node_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

impl SearchTrace {
    /// One iteration record per line.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for it in &self.iterations {
            s.push_str(&serde_json::to_string(it).expect("trace serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<IterationRecord>, serde_json::Error> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect()
    }

    pub fn root_visits(&self) -> Vec<u32> {
        self.root.iter().map(|e| e.n).collect()
    }
}

/// Root action by the configured rule among allowed edges.
pub fn choose_root_action<S>(root: &TreeNode<S>, rule: RootSelection) -> usize {
    let allowed: Vec<usize> = (0..root.edges.len()).filter(|&a| root.edges[a].allowed).collect();
    let key = |a: usize| {
        let e = &root.edges[a];
        match rule {
            RootSelection::MaxVisit => (e.n as f64, e.q),
            RootSelection::MaxQ => (if e.n > 0 { e.q } else { f64::NEG_INFINITY }, e.n as f64),
        }
    };
    let mut best = allowed[0];
    for &a in &allowed[1..] {
        if key(a) > key(best) {
            best = a;
        }
    }
    best
}

/// Builds a tree from `root_state`, runs `cfg.iterations` iterations and picks a root action.
pub fn plan_with_tree<M: SearchModel, R: RngCore>(
    root_state: M::State,
    model: &M,
    cfg: &SearchConfig,
    rng: &mut R,
) -> Result<(usize, SearchTrace, Tree<M::State>), SearchError> {
    cfg.validate()?;
    let start = cfg.record_wall_clock.then(Instant::now);
    let n_actions = model.action_count();
    let allowed: Vec<bool> = (0..n_actions).map(|a| model.feasible(&root_state, a)).collect();
    if !allowed.iter().any(|x| *x) {
        return Err(SearchError::DegenerateRoot);
    }
    let priors = model.priors(&root_state);
    let root_value = clamp_value(model.value(&root_state, rng), cfg);
    let init_q = if cfg.init_q_from_value { root_value } else { 0.0 };
    let mut root = TreeNode::new(root_state, 0, &priors, false, root_value, init_q);
    for (e, ok) in root.edges.iter_mut().zip(&allowed) {
        e.allowed = *ok;
    }
    let mut tree = Tree { nodes: vec![root] };
    let mut trace = SearchTrace::default();
    for iteration in 0..cfg.iterations {
        let mut node = 0;
        let mut path = Vec::new();
        let (leaf_value, leaf_terminal) = loop {
            let n = &tree.nodes[node];
            if n.terminal {
                break (0.0, true);
            }
            if n.depth >= cfg.max_depth {
                break (n.value, false);
            }
            let a = select_with(n, cfg, rng);
            path.push((node, a));
            match n.edges[a].child {
                Some(c) => node = c,
                None => {
                    let (child, v) = expand_and_evaluate(&mut tree, node, a, model, cfg, rng);
                    break (v, tree.nodes[child].terminal);
                }
            }
        };
        let returns = backpropagate_with(&mut tree, &path, leaf_value, cfg.gamma, cfg.discount_leaf_value);
        trace.iterations.push(IterationRecord {
            iteration,
            nodes: path.iter().map(|p| p.0).collect(),
            actions: path.iter().map(|p| p.1).collect(),
            rewards: path.iter().map(|&(s, a)| tree.nodes[s].edges[a].reward).collect(),
            leaf_value,
            leaf_terminal,
            returns,
            edge_stats: path
                .iter()
                .map(|&(s, a)| (tree.nodes[s].edges[a].q, tree.nodes[s].edges[a].n))
                .collect(),
        });
    }
    let chosen = choose_root_action(tree.root(), cfg.root_selection);
    trace.root = tree
        .root()
        .edges
        .iter()
        .enumerate()
        .map(|(action, e)| RootEdgeSummary {
            action,
            q: e.q,
            n: e.n,
            prior: e.prior,
            allowed: e.allowed,
        })
        .collect();
    trace.chosen = chosen;
    trace.node_count = tree.nodes.len();
    trace.wall_clock_s = start.map(|t| t.elapsed().as_secs_f64());
    Ok((chosen, trace, tree))
}

pub fn plan<M: SearchModel, R: RngCore>(
    root_state: M::State,
    model: &M,
    cfg: &SearchConfig,
    rng: &mut R,
) -> Result<(usize, SearchTrace), SearchError> {
    plan_with_tree(root_state, model, cfg, rng).map(|(a, t, _)| (a, t))
}
