use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::scoring::{reward, uct_score, EvalOutcome, NodeStats, Score};
use super::{
    Action, Candidate, Evaluator, LossKind, Paradigm, Proposer, Refinement, SearchConfig, SearchError, SearchMode,
};
use crate::kb::{RetrievalMode, RetrievalResult};

const MAX_LEVEL: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    Fresh,
    Valid,
    Bug,
}

#[derive(Debug, Clone)]
pub struct Node {
    /// `None` at the root.
    pub action: Option<Action>,
    pub level: u8,
    pub stats: NodeStats,
    pub status: NodeStatus,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// `None` at the root.
    pub candidate: Option<Candidate>,
    /// False for a paradigm node whose backbone is still the default.
    pub backbone_chosen: bool,
    untried: Vec<Action>,
}

impl Node {
    fn root() -> Self {
        Node {
            action: None,
            level: 0,
            stats: NodeStats::default(),
            status: NodeStatus::Fresh,
            parent: None,
            children: Vec::new(),
            candidate: None,
            backbone_chosen: false,
            untried: Vec::new(),
        }
    }

    pub fn untried(&self) -> &[Action] {
        &self.untried
    }
}

/// Actions available below `node`. Debug is offered at bug nodes that have
/// not already been fixed.
pub fn legal_actions(node: &Node, mode: SearchMode, proposer: &dyn Proposer) -> Vec<Action> {
    let mut out = Vec::new();
    if node.status == NodeStatus::Bug && !node.candidate.is_some_and(|c| c.debug_fixed) {
        out.push(Action::Debug);
    }
    let Some(c) = node.candidate else {
        out.extend(Paradigm::ALL.map(Action::Paradigm));
        return out;
    };
    if node.level >= MAX_LEVEL {
        return out;
    }
    let hp_actions = |out: &mut Vec<Action>| {
        for hp in proposer.hyperparams(&c) {
            if c.hyperparams != Some(hp) {
                out.push(Action::Refinement(Refinement::Hyperparam(hp)));
            }
        }
    };
    match mode {
        SearchMode::Hierarchical => {
            if node.level == 1 {
                out.extend(c.paradigm.backbones().iter().map(|&b| Action::Backbone(b)));
            } else {
                if c.hyperparams.is_none() {
                    hp_actions(&mut out);
                }
                if c.loss == LossKind::Mse {
                    out.push(Action::Refinement(Refinement::Loss(LossKind::Huber)));
                }
            }
        }
        SearchMode::FlatAblation => {
            out.extend(c.paradigm.backbones().iter().filter(|&&b| b != c.backbone).map(|&b| Action::Backbone(b)));
            hp_actions(&mut out);
            let other = if c.loss == LossKind::Mse { LossKind::Huber } else { LossKind::Mse };
            out.push(Action::Refinement(Refinement::Loss(other)));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<Node>,
}

impl SearchTree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Actions from the root down to `id`.
    pub fn path_actions(&self, id: usize) -> Vec<Action> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(i) = cur {
            if let Some(a) = self.nodes[i].action {
                out.push(a);
            }
            cur = self.nodes[i].parent;
        }
        out.reverse();
        out
    }

    fn add_child(&mut self, parent: usize, action: Action, mode: SearchMode, proposer: &dyn Proposer, rng: &mut ChaCha8Rng) -> Result<usize, SearchError> {
        let p = &self.nodes[parent];
        let candidate = match &p.candidate {
            None => Candidate::from_actions(&[action])?,
            Some(c) => c.apply(&action)?,
        };
        let level = if action == Action::Debug { p.level } else { p.level + 1 };
        let mut node = Node {
            action: Some(action),
            level,
            stats: NodeStats::default(),
            status: NodeStatus::Fresh,
            parent: Some(parent),
            children: Vec::new(),
            candidate: Some(candidate),
            backbone_chosen: p.backbone_chosen || matches!(action, Action::Backbone(_)),
            untried: Vec::new(),
        };
        node.untried = legal_actions(&node, mode, proposer);
        node.untried.shuffle(rng);
        let id = self.nodes.len();
        self.nodes.push(node);
        self.nodes[parent].children.push(id);
        self.nodes[parent].untried.retain(|a| *a != action);
        Ok(id)
    }

    /// Nested JSON view: `{action, level, N, Q_sum, Q_max, status, candidate, children}`.
    pub fn to_json(&self) -> Value {
        self.node_json(0)
    }

    fn node_json(&self, id: usize) -> Value {
        let n = &self.nodes[id];
        json!({
            "action": n.action.map(|a| a.to_string()),
            "level": n.level,
            "N": n.stats.n,
            "Q_sum": n.stats.q_sum,
            "Q_max": (n.stats.n > 0).then_some(n.stats.q_max),
            "status": n.status,
            "candidate": n.candidate.map(|c| c.to_string()),
            "children": n.children.iter().map(|&c| self.node_json(c)).collect::<Vec<_>>(),
        })
    }
}

/// One search iteration as logged.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// 1-based.
    pub iter: usize,
    pub node: usize,
    pub path: Vec<Action>,
    pub expanded: bool,
    pub candidate: Candidate,
    pub outcome: EvalOutcome,
    pub t_ratio: f64,
    pub reward: f64,
    pub status: NodeStatus,
}

impl TrajectoryRecord {
    pub fn action(&self) -> Option<Action> {
        self.path.last().copied()
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "iter": self.iter,
            "path": self.path.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            "action": self.action().map(|a| a.to_string()),
            "expanded": self.expanded,
            "candidate": self.candidate.to_string(),
        });
        let obj = v.as_object_mut().expect("object");
        match &self.outcome.score {
            Score::Value(m) => {
                obj.insert("m_val".into(), json!(m));
            }
            Score::Undefined => {
                obj.insert("m_val".into(), json!("undefined"));
            }
            Score::Failed(msg) => {
                obj.insert("failed".into(), json!(msg));
            }
        }
        obj.insert("t_exec".into(), json!(self.outcome.t_exec));
        obj.insert("t_ratio".into(), json!(self.t_ratio));
        obj.insert("reward".into(), json!(self.reward));
        obj.insert("status".into(), json!(self.status));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestCandidate {
    pub candidate: Candidate,
    pub path: Vec<Action>,
    pub reward: f64,
    pub m_val: f64,
    pub iter: usize,
}

impl BestCandidate {
    pub fn to_json(&self) -> Value {
        json!({
            "candidate": self.candidate.key(),
            "debug_fixed": self.candidate.debug_fixed,
            "path": self.path.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            "reward": self.reward,
            "m_val": self.m_val,
            "iter": self.iter,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    /// `None` when no evaluation succeeded.
    pub best: Option<BestCandidate>,
    pub trajectory: Vec<TrajectoryRecord>,
    pub tree: SearchTree,
    pub expansions: usize,
    pub t_root: Option<f64>,
    pub budget_exhausted: bool,
}

impl SearchResult {
    pub fn best_reward(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.reward)
    }

    pub fn trajectory_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.trajectory {
            s.push_str(&r.to_json().to_string());
            s.push('\n');
        }
        s
    }
}

/// Runs up to `config.n_sim` evaluations. A warm-start retrieval injects its
/// path before the first iteration.
pub fn run_search(
    config: &SearchConfig,
    evaluator: &dyn Evaluator,
    retrieval: Option<&RetrievalResult>,
    proposer: &dyn Proposer,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tree = SearchTree { nodes: vec![Node::root()] };
    let mut root_actions = legal_actions(&tree.nodes[0], config.mode, proposer);
    root_actions.shuffle(&mut rng);
    tree.nodes[0].untried = root_actions;

    let mut expansions = 0;
    let mut pending: Option<Vec<usize>> = None;
    if let Some(eps0) = retrieval.filter(|r| r.mode == RetrievalMode::WarmStart).and_then(|r| r.epsilon0.as_ref()) {
        super::validate_action_path(eps0)?;
        let mut path = vec![0];
        for action in eps0 {
            let cur = *path.last().expect("nonempty");
            let existing = tree.nodes[cur].children.iter().copied().find(|&c| tree.nodes[c].action == Some(*action));
            if let Some(c) = existing {
                path.push(c);
                continue;
            }
            let before = tree.nodes[cur].candidate;
            if config.mode == SearchMode::FlatAblation && before.is_some_and(|c| c.apply(action).ok() == Some(c)) {
                continue;
            }
            path.push(tree.add_child(cur, *action, config.mode, proposer, &mut rng)?);
            expansions += 1;
        }
        pending = Some(path);
    }

    let mut trajectory = Vec::new();
    let mut t_root: Option<f64> = None;
    let mut best: Option<BestCandidate> = None;
    let mut budget_exhausted = false;

    for iter in 1..=config.n_sim {
        if started.elapsed().as_secs_f64() > config.wall_clock_budget {
            budget_exhausted = true;
            break;
        }
        let (path, expanded) = match pending.take() {
            Some(p) => (p, true),
            None => select_and_expand(&mut tree, config, proposer, &mut rng)?,
        };
        expansions += usize::from(expanded);
        let leaf = *path.last().expect("nonempty path");
        let Some(candidate) = tree.nodes[leaf].candidate else {
            // Only reachable if the root has no actions at all.
            break;
        };

        let outcome = evaluator.evaluate(&candidate, config.seed);
        if config.strict && evaluator.evaluate(&candidate, config.seed) != outcome {
            return Err(SearchError::Nondeterministic { candidate: candidate.to_string() });
        }
        if t_root.is_none() && !outcome.is_failed() {
            t_root = Some(outcome.t_exec);
        }
        let t_ratio = match t_root {
            Some(tr) if tr > 0.0 => outcome.t_exec / tr,
            _ => 1.0,
        };
        let r = reward(&outcome, t_ratio, config)?;

        let status = if outcome.is_failed() { NodeStatus::Bug } else { NodeStatus::Valid };
        tree.nodes[leaf].status = status;
        let node = &tree.nodes[leaf];
        if status == NodeStatus::Bug
            && !candidate.debug_fixed
            && !node.untried.contains(&Action::Debug)
            && !node.children.iter().any(|&c| tree.nodes[c].action == Some(Action::Debug))
        {
            tree.nodes[leaf].untried.insert(0, Action::Debug);
        }
        for &id in &path {
            tree.nodes[id].stats.update(r);
        }

        if status == NodeStatus::Valid && best.as_ref().is_none_or(|b| r > b.reward) {
            best = Some(BestCandidate {
                candidate,
                path: tree.path_actions(leaf),
                reward: r,
                m_val: outcome.m(),
                iter,
            });
        }
        trajectory.push(TrajectoryRecord {
            iter,
            node: leaf,
            path: tree.path_actions(leaf),
            expanded,
            candidate,
            outcome,
            t_ratio,
            reward: r,
            status,
        });
    }

    Ok(SearchResult { best, trajectory, tree, expansions, t_root, budget_exhausted })
}

fn select_and_expand(
    tree: &mut SearchTree,
    config: &SearchConfig,
    proposer: &dyn Proposer,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, bool), SearchError> {
    let mut cur = 0;
    let mut path = vec![0];
    loop {
        if let Some(&action) = tree.nodes[cur].untried.first() {
            let child = tree.add_child(cur, action, config.mode, proposer, rng)?;
            path.push(child);
            return Ok((path, true));
        }
        let node = &tree.nodes[cur];
        if node.children.is_empty() {
            return Ok((path, false));
        }
        let parent_n = node.stats.n;
        let mut best = node.children[0];
        let mut best_score = f64::NEG_INFINITY;
        for &c in &node.children {
            let s = uct_score(parent_n, &tree.nodes[c].stats, config);
            if s > best_score {
                best = c;
                best_score = s;
            }
        }
        path.push(best);
        cur = best;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::{Backbone, GridProposer, HyperParams};

    /// Scores candidates by a fixed formula; optionally fails some backbones.
    struct Toy {
        fail: Option<Backbone>,
    }

    impl Evaluator for Toy {
        fn evaluate(&self, c: &Candidate, _seed: u64) -> EvalOutcome {
            if Some(c.backbone) == self.fail && !c.debug_fixed {
                return EvalOutcome::failed("injected", 0.0);
            }
            let mut m = match c.backbone {
                Backbone::ResNet => 0.6,
                Backbone::GatedMlp => 0.5,
                Backbone::PathwayMasked => 0.4,
                Backbone::ConditionalVae => 0.3,
                Backbone::FlowMatching => 0.2,
            };
            if c.hyperparams == Some(HyperParams::GRID[3]) {
                m += 0.3;
            }
            if c.loss == LossKind::Huber {
                m -= 0.1;
            }
            EvalOutcome::value(m, 10.0)
        }
    }

    fn cfg(seed: u64, n_sim: usize) -> SearchConfig {
        SearchConfig { seed, n_sim, ..SearchConfig::default() }
    }

    #[test]
    fn root_and_generative_actions() {
        let root = Node::root();
        assert_eq!(
            legal_actions(&root, SearchMode::Hierarchical, &GridProposer),
            vec![Action::Paradigm(Paradigm::Discriminative), Action::Paradigm(Paradigm::Generative)]
        );
        let mut tree = SearchTree { nodes: vec![root] };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = tree.add_child(0, Action::Paradigm(Paradigm::Generative), SearchMode::Hierarchical, &GridProposer, &mut rng).unwrap();
        let mut got = legal_actions(tree.node(g), SearchMode::Hierarchical, &GridProposer);
        got.sort_by_key(|a| a.to_string());
        assert_eq!(got, vec![Action::Backbone(Backbone::ConditionalVae), Action::Backbone(Backbone::FlowMatching)]);

        let b = tree.add_child(g, Action::Backbone(Backbone::FlowMatching), SearchMode::Hierarchical, &GridProposer, &mut rng).unwrap();
        tree.nodes[b].status = NodeStatus::Bug;
        let acts = legal_actions(tree.node(b), SearchMode::Hierarchical, &GridProposer);
        assert_eq!(acts[0], Action::Debug);
        assert_eq!(acts.len(), 6);
    }

    #[test]
    fn single_simulation() {
        let r = run_search(&cfg(3, 1), &Toy { fail: None }, None, &GridProposer).unwrap();
        assert_eq!(r.trajectory.len(), 1);
        assert_eq!(r.best.as_ref().unwrap().candidate, r.trajectory[0].candidate);
        assert_eq!(r.t_root, Some(10.0));
        assert!((r.trajectory[0].reward - (0.8 * r.trajectory[0].outcome.m() + 0.2 * 0.8)).abs() < 1e-15);
    }

    #[test]
    fn deterministic_log() {
        let a = run_search(&cfg(9, 40), &Toy { fail: Some(Backbone::GatedMlp) }, None, &GridProposer).unwrap();
        let b = run_search(&cfg(9, 40), &Toy { fail: Some(Backbone::GatedMlp) }, None, &GridProposer).unwrap();
        assert_eq!(a.trajectory_jsonl(), b.trajectory_jsonl());
        assert_eq!(a.tree.to_json(), b.tree.to_json());
    }

    #[test]
    fn tree_consistency() {
        for seed in 0..20 {
            let r = run_search(&cfg(seed, 60), &Toy { fail: Some(Backbone::ResNet) }, None, &GridProposer).unwrap();
            for (id, node) in r.tree.nodes().iter().enumerate() {
                let ended_here = r.trajectory.iter().filter(|t| t.node == id).count() as u64;
                let through_children: u64 = node.children.iter().map(|&c| r.tree.node(c).stats.n).sum();
                assert_eq!(node.stats.n, through_children + ended_here, "node {id}");
                let rewards: Vec<f64> = r
                    .trajectory
                    .iter()
                    .filter(|t| {
                        let mut cur = Some(t.node);
                        while let Some(c) = cur {
                            if c == id {
                                return true;
                            }
                            cur = r.tree.node(c).parent;
                        }
                        false
                    })
                    .map(|t| t.reward)
                    .collect();
                if node.stats.n > 0 {
                    assert_eq!(node.stats.q_max, rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
                    assert!(node.stats.q_max >= node.stats.q_mean().unwrap() - 1e-12);
                }
            }
        }
    }

    #[test]
    fn bug_nodes_get_debug_children_and_are_never_best() {
        let r = run_search(&cfg(1, 80), &Toy { fail: Some(Backbone::ResNet) }, None, &GridProposer).unwrap();
        let best = r.best.unwrap();
        assert!(!(best.candidate.backbone == Backbone::ResNet && !best.candidate.debug_fixed));
        let mut debug_seen = false;
        for n in r.tree.nodes() {
            if n.status == NodeStatus::Bug {
                let has_debug = n.children.iter().any(|&c| r.tree.node(c).action == Some(Action::Debug));
                let pending = n.untried().contains(&Action::Debug);
                assert!(has_debug || pending);
                debug_seen |= has_debug;
            }
            if n.action == Some(Action::Debug) {
                assert_eq!(n.level, r.tree.node(n.parent.unwrap()).level);
                assert_eq!(n.status, NodeStatus::Valid);
            }
        }
        assert!(debug_seen);
    }

    #[test]
    fn all_failures_give_no_candidate() {
        struct Broken;
        impl Evaluator for Broken {
            fn evaluate(&self, _c: &Candidate, _s: u64) -> EvalOutcome {
                EvalOutcome::failed("always", 1.0)
            }
        }
        let r = run_search(&cfg(0, 10), &Broken, None, &GridProposer).unwrap();
        assert!(r.best.is_none());
        assert!(r.t_root.is_none());
        assert!(r.trajectory.iter().all(|t| t.t_ratio == 1.0 && (t.reward - 0.16).abs() < 1e-15));
    }

    #[test]
    fn strict_mode_detects_nondeterminism() {
        struct Flaky(std::cell::Cell<u32>);
        impl Evaluator for Flaky {
            fn evaluate(&self, _c: &Candidate, _s: u64) -> EvalOutcome {
                self.0.set(self.0.get() + 1);
                EvalOutcome::value(0.1 * f64::from(self.0.get() % 2), 1.0)
            }
        }
        let config = SearchConfig { strict: true, ..cfg(0, 5) };
        assert!(matches!(
            run_search(&config, &Flaky(Default::default()), None, &GridProposer),
            Err(SearchError::Nondeterministic { .. })
        ));
    }

    #[test]
    fn hierarchy_freeze_and_depth() {
        for seed in 0..30 {
            let r = run_search(&cfg(seed, 100), &Toy { fail: Some(Backbone::PathwayMasked) }, None, &GridProposer).unwrap();
            for t in &r.trajectory {
                let first_ref = t.path.iter().position(Action::is_refinement);
                if let Some(k) = first_ref {
                    assert!(t.path[k..].iter().all(|a| matches!(a, Action::Refinement(_) | Action::Debug)));
                }
            }
            assert!(r.tree.nodes().iter().all(|n| n.level <= MAX_LEVEL));
        }
    }

    #[test]
    fn flat_mode_offers_everything_after_paradigm() {
        let mut tree = SearchTree { nodes: vec![Node::root()] };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = tree.add_child(0, Action::Paradigm(Paradigm::Discriminative), SearchMode::FlatAblation, &GridProposer, &mut rng).unwrap();
        // Two non-default backbones, four grid points, one loss toggle.
        assert_eq!(tree.node(d).untried().len(), 7);
        let h = tree.add_child(d, Action::Refinement(Refinement::Loss(LossKind::Huber)), SearchMode::FlatAblation, &GridProposer, &mut rng).unwrap();
        let acts = tree.node(h).untried();
        assert!(acts.contains(&Action::Backbone(Backbone::GatedMlp)));
        assert!(acts.contains(&Action::Refinement(Refinement::Loss(LossKind::Mse))));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(run_search(&SearchConfig { n_sim: 0, ..SearchConfig::default() }, &Toy { fail: None }, None, &GridProposer).is_err());
        assert!(run_search(&SearchConfig { alpha_qmix: 1.5, ..SearchConfig::default() }, &Toy { fail: None }, None, &GridProposer).is_err());
    }
}
