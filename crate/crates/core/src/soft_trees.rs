//! Soft decision trees.
//!
//! A branch `b` splitting coordinate `j_b` at cutpoint `C_b` sends a point
//! left with probability `ψ((C_b - x_{j_b}) / τ)`, `ψ` the logistic cdf, so
//! that `τ → 0` recovers the hard rule `x_{j_b} ≤ C_b` goes left. A leaf's
//! weight is the product of the routing probabilities along its path.
//!
//! Trees are stored as an arena of nodes with parent links. Leaves are
//! always enumerated in depth-first, left-before-right order; leaf weights
//! and leaf values use that order.

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::fourier_basis::BasisFunction;
use crate::special::sigmoid;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeKind {
    Leaf { value: f64 },
    Branch { var: usize, cut: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub parent: Option<usize>,
    pub depth: usize,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

/// One soft tree together with its bandwidth and response feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftTree {
    nodes: Vec<Node>,
    pub bandwidth: f64,
    pub basis: BasisFunction,
}

/// Branching-process prior over tree topologies.
#[derive(Debug, Clone, Copy)]
pub struct TreePrior<'a> {
    pub alpha: f64,
    pub beta: f64,
    pub max_depth: usize,
    pub split_probs: &'a [f64],
}

impl TreePrior<'_> {
    /// Probability that a node at `depth` is a branch.
    pub fn split_prob(&self, depth: usize) -> f64 {
        if depth >= self.max_depth {
            0.0
        } else {
            self.alpha * (1.0 + depth as f64).powf(-self.beta)
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return Err(format!("alpha must lie in [0, 1), got {}", self.alpha));
        }
        if !(self.beta >= 0.0) {
            return Err(format!("beta must be nonnegative, got {}", self.beta));
        }
        if self.split_probs.is_empty() {
            return Err("split probabilities are empty".into());
        }
        let total: f64 = self.split_probs.iter().sum();
        if self.split_probs.iter().any(|&s| s < 0.0) || (total - 1.0).abs() > 1e-8 {
            return Err(format!("split probabilities must be a simplex (sum {total})"));
        }
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        self.split_probs.len()
    }

    fn sample_var<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        crate::stats::sample_categorical(rng, self.split_probs)
    }
}

impl SoftTree {
    /// A single leaf with value zero.
    pub fn stump(bandwidth: f64, basis: BasisFunction) -> Self {
        Self {
            nodes: vec![Node { parent: None, depth: 0, kind: NodeKind::Leaf { value: 0.0 } }],
            bandwidth,
            basis,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    /// Leaf ids in depth-first order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            match self.nodes[id].kind {
                NodeKind::Leaf { .. } => out.push(id),
                NodeKind::Branch { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }

    pub fn branches(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.nodes[i].is_leaf()).collect()
    }

    /// Branches whose children are both leaves (the prunable nodes).
    pub fn prunable(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| match self.nodes[i].kind {
                NodeKind::Branch { left, right, .. } => {
                    self.nodes[left].is_leaf() && self.nodes[right].is_leaf()
                }
                NodeKind::Leaf { .. } => false,
            })
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn n_branches(&self) -> usize {
        self.nodes.len() - self.n_leaves()
    }

    /// Maximum leaf depth.
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn leaf_values(&self) -> Vec<f64> {
        self.leaves()
            .into_iter()
            .map(|id| match self.nodes[id].kind {
                NodeKind::Leaf { value } => value,
                NodeKind::Branch { .. } => unreachable!(),
            })
            .collect()
    }

    pub fn set_leaf_values(&mut self, values: &[f64]) {
        let leaves = self.leaves();
        assert_eq!(leaves.len(), values.len(), "leaf value count mismatch");
        for (id, &v) in leaves.into_iter().zip(values) {
            self.nodes[id].kind = NodeKind::Leaf { value: v };
        }
    }

    /// Count of branches splitting on each of `n_vars` coordinates.
    pub fn split_counts(&self, n_vars: usize) -> Vec<usize> {
        let mut counts = vec![0; n_vars];
        for n in &self.nodes {
            if let NodeKind::Branch { var, .. } = n.kind {
                counts[var] += 1;
            }
        }
        counts
    }

    /// The interval of coordinate `var` values that reach `node` under hard
    /// routing, starting from `[0, 1]`.
    pub fn interval(&self, node: usize, var: usize) -> (f64, f64) {
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut child = node;
        let mut cur = self.nodes[node].parent;
        while let Some(p) = cur {
            if let NodeKind::Branch { var: v, cut, left, .. } = self.nodes[p].kind {
                if v == var {
                    if child == left {
                        hi = f64::min(hi, cut);
                    } else {
                        lo = f64::max(lo, cut);
                    }
                }
            }
            child = p;
            cur = self.nodes[p].parent;
        }
        (lo, hi)
    }

    /// Turn leaf `leaf` into a branch with two zero-valued leaves.
    pub fn grow(&mut self, leaf: usize, var: usize, cut: f64) {
        assert!(self.nodes[leaf].is_leaf(), "grow on a branch");
        let depth = self.nodes[leaf].depth + 1;
        let left = self.nodes.len();
        let right = left + 1;
        for _ in 0..2 {
            self.nodes.push(Node { parent: Some(leaf), depth, kind: NodeKind::Leaf { value: 0.0 } });
        }
        self.nodes[leaf].kind = NodeKind::Branch { var, cut, left, right };
    }

    /// Collapse a prunable branch into a zero-valued leaf.
    pub fn prune(&mut self, branch: usize) {
        let (left, right) = match self.nodes[branch].kind {
            NodeKind::Branch { left, right, .. } => (left, right),
            NodeKind::Leaf { .. } => panic!("prune on a leaf"),
        };
        assert!(self.nodes[left].is_leaf() && self.nodes[right].is_leaf(), "prune on a non-prunable branch");
        self.nodes[branch].kind = NodeKind::Leaf { value: 0.0 };
        self.compact();
    }

    /// Replace the rule of a branch.
    pub fn set_rule(&mut self, branch: usize, new_var: usize, new_cut: f64) {
        match &mut self.nodes[branch].kind {
            NodeKind::Branch { var, cut, .. } => {
                *var = new_var;
                *cut = new_cut;
            }
            NodeKind::Leaf { .. } => panic!("set_rule on a leaf"),
        }
    }

    pub fn rule(&self, branch: usize) -> (usize, f64) {
        match self.nodes[branch].kind {
            NodeKind::Branch { var, cut, .. } => (var, cut),
            NodeKind::Leaf { .. } => panic!("rule of a leaf"),
        }
    }

    /// Drop unreachable nodes and renumber in depth-first order.
    fn compact(&mut self) {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            order.push(id);
            if let NodeKind::Branch { left, right, .. } = self.nodes[id].kind {
                stack.push(right);
                stack.push(left);
            }
        }
        let mut remap = vec![usize::MAX; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let nodes = order
            .iter()
            .map(|&old| {
                let n = &self.nodes[old];
                let kind = match n.kind {
                    NodeKind::Leaf { value } => NodeKind::Leaf { value },
                    NodeKind::Branch { var, cut, left, right } => {
                        NodeKind::Branch { var, cut, left: remap[left], right: remap[right] }
                    }
                };
                Node { parent: n.parent.map(|p| remap[p]), depth: n.depth, kind }
            })
            .collect();
        self.nodes = nodes;
    }

    /// Leaf weights `φ_ℓ(x)` in depth-first leaf order.
    pub fn leaf_weights(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_leaves());
        self.leaf_weights_into(x, &mut out);
        out
    }

    /// As [`leaf_weights`](Self::leaf_weights), appending into `out`.
    pub fn leaf_weights_into(&self, x: &[f64], out: &mut Vec<f64>) {
        let mut stack: Vec<(usize, f64)> = vec![(0, 1.0)];
        while let Some((id, w)) = stack.pop() {
            match self.nodes[id].kind {
                NodeKind::Leaf { .. } => out.push(w),
                NodeKind::Branch { var, cut, left, right } => {
                    let go_left = sigmoid((cut - x[var]) / self.bandwidth);
                    stack.push((right, w * (1.0 - go_left)));
                    stack.push((left, w * go_left));
                }
            }
        }
    }

    /// `g(x) = Σ_ℓ φ_ℓ(x) μ_ℓ`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut stack: Vec<(usize, f64)> = vec![(0, 1.0)];
        while let Some((id, w)) = stack.pop() {
            match self.nodes[id].kind {
                NodeKind::Leaf { value } => total += w * value,
                NodeKind::Branch { var, cut, left, right } => {
                    let go_left = sigmoid((cut - x[var]) / self.bandwidth);
                    stack.push((right, w * (1.0 - go_left)));
                    stack.push((left, w * go_left));
                }
            }
        }
        total
    }
}

fn grow_from_prior<R: Rng + ?Sized>(rng: &mut R, tree: &mut SoftTree, node: usize, prior: &TreePrior) {
    let depth = tree.nodes[node].depth;
    if rng.random::<f64>() >= prior.split_prob(depth) {
        return;
    }
    let var = prior.sample_var(rng);
    let (lo, hi) = tree.interval(node, var);
    let cut = lo + (hi - lo) * rng.random::<f64>();
    tree.grow(node, var, cut);
    let (left, right) = match tree.nodes[node].kind {
        NodeKind::Branch { left, right, .. } => (left, right),
        NodeKind::Leaf { .. } => unreachable!(),
    };
    grow_from_prior(rng, tree, left, prior);
    grow_from_prior(rng, tree, right, prior);
}

/// Draw a topology from the branching-process prior. Leaf values are zero;
/// bandwidth and basis are placeholders for the caller to set.
pub fn sample_tree_prior<R: Rng + ?Sized>(rng: &mut R, prior: &TreePrior) -> SoftTree {
    let mut tree = SoftTree::stump(1.0, BasisFunction::constant());
    grow_from_prior(rng, &mut tree, 0, prior);
    tree
}

/// Log prior density of a topology with its splitting rules.
///
/// A cutpoint outside its reachable interval has density zero and gives
/// `-inf`; a tree deeper than the prior allows is an error.
pub fn tree_log_prior(tree: &SoftTree, prior: &TreePrior) -> Result<f64> {
    let mut total = 0.0;
    for (id, node) in tree.nodes.iter().enumerate() {
        if node.depth > prior.max_depth {
            return Err(Error::InvalidTree(format!(
                "node at depth {} exceeds max depth {}",
                node.depth, prior.max_depth
            )));
        }
        let p = prior.split_prob(node.depth);
        match node.kind {
            NodeKind::Leaf { .. } => {
                if p > 0.0 {
                    total += (-p).ln_1p();
                }
            }
            NodeKind::Branch { var, cut, .. } => {
                if var >= prior.n_vars() {
                    return Err(Error::InvalidTree(format!("split variable {var} out of range")));
                }
                let (lo, hi) = tree.interval(id, var);
                if !(cut > lo && cut < hi) {
                    return Ok(f64::NEG_INFINITY);
                }
                total += p.ln() + prior.split_probs[var].ln() - (hi - lo).ln();
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveKind {
    Birth,
    Death,
    Change,
    Prior,
}

/// Mixture weights over the four topology moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveWeights {
    pub birth: f64,
    pub death: f64,
    pub change: f64,
    pub prior: f64,
}

impl Default for MoveWeights {
    fn default() -> Self {
        Self { birth: 0.3, death: 0.3, change: 0.3, prior: 0.1 }
    }
}

impl MoveWeights {
    /// Selection probabilities at `tree`, zeroing moves that are not
    /// available and renormalizing.
    fn available(&self, tree: &SoftTree, prior: &TreePrior) -> [(MoveKind, f64); 4] {
        let can_grow = tree.leaves().iter().any(|&l| tree.nodes[l].depth < prior.max_depth);
        let has_branch = tree.n_branches() > 0;
        let raw = [
            (MoveKind::Birth, if can_grow { self.birth } else { 0.0 }),
            (MoveKind::Death, if has_branch { self.death } else { 0.0 }),
            (MoveKind::Change, if has_branch { self.change } else { 0.0 }),
            (MoveKind::Prior, self.prior),
        ];
        let total: f64 = raw.iter().map(|r| r.1).sum();
        raw.map(|(k, w)| (k, w / total))
    }

    fn prob(&self, tree: &SoftTree, prior: &TreePrior, kind: MoveKind) -> f64 {
        self.available(tree, prior).iter().find(|r| r.0 == kind).map_or(0.0, |r| r.1)
    }
}

#[derive(Debug, Clone)]
pub struct TreeProposal {
    pub tree: SoftTree,
    pub kind: MoveKind,
    /// `ln Q(T' → T) - ln Q(T → T')`.
    pub log_hastings_ratio: f64,
}

fn growable(tree: &SoftTree, prior: &TreePrior) -> Vec<usize> {
    tree.leaves().into_iter().filter(|&l| tree.nodes[l].depth < prior.max_depth).collect()
}

/// Propose a new topology for `tree`. Bandwidth and basis are carried over
/// unchanged; leaves of the proposal are zero-valued since the caller
/// integrates leaf values out and redraws them.
pub fn propose_tree<R: Rng + ?Sized>(
    rng: &mut R,
    tree: &SoftTree,
    prior: &TreePrior,
    weights: &MoveWeights,
) -> Result<TreeProposal> {
    let probs = weights.available(tree, prior);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut kind = MoveKind::Prior;
    for (k, p) in probs {
        acc += p;
        if p > 0.0 && u < acc {
            kind = k;
            break;
        }
    }
    let forward_sel = weights.prob(tree, prior, kind);

    match kind {
        MoveKind::Birth => {
            let cands = growable(tree, prior);
            let leaf = cands[rng.random_range(0..cands.len())];
            let var = prior.sample_var(rng);
            let (lo, hi) = tree.interval(leaf, var);
            let cut = lo + (hi - lo) * rng.random::<f64>();
            let mut next = tree.clone();
            next.grow(leaf, var, cut);
            let log_fwd = forward_sel.ln() - (cands.len() as f64).ln() + prior.split_probs[var].ln()
                - (hi - lo).ln();
            let log_rev = weights.prob(&next, prior, MoveKind::Death).ln()
                - (next.prunable().len() as f64).ln();
            Ok(TreeProposal { tree: next, kind, log_hastings_ratio: log_rev - log_fwd })
        }
        MoveKind::Death => {
            let cands = tree.prunable();
            let branch = cands[rng.random_range(0..cands.len())];
            let (var, _) = tree.rule(branch);
            let (lo, hi) = tree.interval(branch, var);
            let mut next = tree.clone();
            next.prune(branch);
            let log_fwd = forward_sel.ln() - (cands.len() as f64).ln();
            let log_rev = weights.prob(&next, prior, MoveKind::Birth).ln()
                - (growable(&next, prior).len() as f64).ln()
                + prior.split_probs[var].ln()
                - (hi - lo).ln();
            Ok(TreeProposal { tree: next, kind, log_hastings_ratio: log_rev - log_fwd })
        }
        MoveKind::Change => {
            let cands = tree.branches();
            let branch = cands[rng.random_range(0..cands.len())];
            let (old_var, _) = tree.rule(branch);
            let (old_lo, old_hi) = tree.interval(branch, old_var);
            let var = prior.sample_var(rng);
            let (lo, hi) = tree.interval(branch, var);
            let cut = lo + (hi - lo) * rng.random::<f64>();
            let mut next = tree.clone();
            next.set_rule(branch, var, cut);
            let log_fwd = prior.split_probs[var].ln() - (hi - lo).ln();
            let log_rev = prior.split_probs[old_var].ln() - (old_hi - old_lo).ln();
            Ok(TreeProposal { tree: next, kind, log_hastings_ratio: log_rev - log_fwd })
        }
        MoveKind::Prior => {
            let mut next = sample_tree_prior(rng, prior);
            next.bandwidth = tree.bandwidth;
            next.basis = tree.basis;
            let log_fwd = forward_sel.ln() + tree_log_prior(&next, prior)?;
            let log_rev = weights.prob(&next, prior, MoveKind::Prior).ln() + tree_log_prior(tree, prior)?;
            Ok(TreeProposal { tree: next, kind, log_hastings_ratio: log_rev - log_fwd })
        }
    }
}
