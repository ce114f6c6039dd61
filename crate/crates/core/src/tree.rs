//! Scenario trees: an exact discretization of the Brownian filtration.
//!
//! Level `l` of a binary tree holds `2^l` nodes. Node `k` at level `l` has
//! children `2k` (down increment, `-sqrt(dt)`) and `2k + 1` (up increment,
//! `+sqrt(dt)`), each reached with conditional probability one half. Reading
//! the binary digits of `k` from the most significant bit gives the Brownian
//! path from the root, with `0` meaning a down move and `1` an up move.
//!
//! Nodes are numbered breadth first, level major, so the nodes of a level are
//! contiguous in every per-node buffer. The single-branch tree is the
//! degenerate chain with one node per level and zero increments; it runs the
//! same solvers on a deterministic problem.

use core::ops::Range;

use crate::error::{Error, Result};
use crate::math;

/// Default upper bound on the number of stored nodes.
pub const DEFAULT_NODE_CAP: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Branching {
    /// Two children per node, increments `-sqrt(dt)` and `+sqrt(dt)`.
    Binary,
    /// One child per node, zero increment.
    Single,
}

impl Branching {
    pub fn factor(self) -> usize {
        match self {
            Branching::Binary => 2,
            Branching::Single => 1,
        }
    }
}

/// Position of a node in the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub level: usize,
    pub index: usize,
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { level: 0, index: 0 };

    pub fn new(level: usize, index: usize) -> Self {
        NodeId { level, index }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioTree {
    depth: usize,
    dt: f64,
    branching: Branching,
}

impl ScenarioTree {
    /// Binary tree with `depth` steps of length `dt`.
    pub fn binomial(depth: usize, dt: f64) -> Result<Self> {
        Self::with_cap(depth, dt, Branching::Binary, DEFAULT_NODE_CAP)
    }

    /// Deterministic chain with `depth` steps of length `dt`.
    pub fn single_branch(depth: usize, dt: f64) -> Result<Self> {
        Self::with_cap(depth, dt, Branching::Single, DEFAULT_NODE_CAP)
    }

    pub fn with_cap(depth: usize, dt: f64, branching: Branching, cap: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument {
                name: "depth",
                reason: "must be at least 1",
            });
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument {
                name: "dt",
                reason: "must be positive and finite",
            });
        }
        let nodes = match branching {
            Branching::Single => depth as u128 + 1,
            Branching::Binary if depth >= 127 => u128::MAX,
            Branching::Binary => (1u128 << (depth + 1)) - 1,
        };
        if nodes > cap as u128 {
            return Err(Error::TreeTooLarge { depth, nodes, cap });
        }
        Ok(ScenarioTree {
            depth,
            dt,
            branching,
        })
    }

    /// Same branching and step length with `extra` additional levels.
    pub fn extended(&self, extra: usize) -> Result<Self> {
        Self::with_cap(
            self.depth + extra,
            self.dt,
            self.branching,
            DEFAULT_NODE_CAP,
        )
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.depth as f64 * self.dt
    }

    pub fn branching(&self) -> Branching {
        self.branching
    }

    pub fn nodes_at(&self, level: usize) -> usize {
        match self.branching {
            Branching::Binary => 1 << level,
            Branching::Single => 1,
        }
    }

    /// Global index of the first node of `level`; also the number of nodes
    /// on levels `0..level`.
    pub fn level_offset(&self, level: usize) -> usize {
        match self.branching {
            Branching::Binary => (1 << level) - 1,
            Branching::Single => level,
        }
    }

    /// Number of nodes on levels `0..=depth`.
    pub fn node_count(&self) -> usize {
        self.level_offset(self.depth + 1)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes_at(self.depth)
    }

    pub fn global_index(&self, node: NodeId) -> usize {
        self.level_offset(node.level) + node.index
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        node.level >= self.depth
    }

    /// Indices, within level `node.level + 1`, of the children of `node`.
    pub fn children(&self, node: NodeId) -> Range<usize> {
        let b = self.branching.factor();
        node.index * b..node.index * b + b
    }

    /// Brownian increment on the edge that ends at `child` (level >= 1).
    pub fn increment(&self, child: NodeId) -> f64 {
        match self.branching {
            Branching::Single => 0.0,
            Branching::Binary => {
                let step = math::sqrt(self.dt);
                if child.index & 1 == 1 {
                    step
                } else {
                    -step
                }
            }
        }
    }

    /// Increment of the `j`-th child edge of any node.
    pub(crate) fn child_increment(&self, j: usize) -> f64 {
        match self.branching {
            Branching::Single => 0.0,
            Branching::Binary => {
                let step = math::sqrt(self.dt);
                if j == 1 {
                    step
                } else {
                    -step
                }
            }
        }
    }

    /// Conditional probability of each child edge.
    pub fn child_probability(&self) -> f64 {
        1.0 / self.branching.factor() as f64
    }

    /// Probability of reaching any node of `level` from the root.
    pub fn level_probability(&self, level: usize) -> f64 {
        1.0 / self.nodes_at(level) as f64
    }

    pub fn probability(&self, node: NodeId) -> f64 {
        self.level_probability(node.level)
    }

    /// `E[X | F_l]` at `node`, where `next_level` holds one value per node
    /// of level `node.level + 1`.
    pub fn conditional_expectation(&self, node: NodeId, next_level: &[f64]) -> Result<f64> {
        if self.is_leaf(node) {
            return Err(Error::LeafNode { level: node.level });
        }
        crate::error::check_len(
            "conditional expectation values",
            self.nodes_at(node.level + 1),
            next_level.len(),
        )?;
        let children = self.children(node);
        let sum: f64 = next_level[children].iter().sum();
        Ok(sum * self.child_probability())
    }

    /// Probability-weighted sum of one value per node of `level`.
    pub fn expectation(&self, level: usize, values: &[f64]) -> Result<f64> {
        if level > self.depth {
            return Err(Error::InvalidArgument {
                name: "level",
                reason: "beyond tree depth",
            });
        }
        crate::error::check_len("expectation values", self.nodes_at(level), values.len())?;
        Ok(values.iter().sum::<f64>() * self.level_probability(level))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn two_level_tree_counts() {
        let t = ScenarioTree::binomial(2, 0.5).unwrap();
        assert_eq!(t.node_count(), 7);
        assert_eq!(t.leaf_count(), 4);
        for k in 0..4 {
            assert_eq!(t.probability(NodeId::new(2, k)), 0.25);
        }
        let s = libm::sqrt(0.5);
        assert_eq!(t.increment(NodeId::new(1, 0)), -s);
        assert_eq!(t.increment(NodeId::new(1, 1)), s);
    }

    #[test]
    fn one_step_moments() {
        let t = ScenarioTree::binomial(1, 1.0).unwrap();
        let inc: Vec<f64> = (0..2).map(|k| t.increment(NodeId::new(1, k))).collect();
        assert_eq!(inc, [-1.0, 1.0]);
        assert_eq!(t.conditional_expectation(NodeId::ROOT, &inc).unwrap(), 0.0);
        let sq: Vec<f64> = inc.iter().map(|x| x * x).collect();
        assert_eq!(t.conditional_expectation(NodeId::ROOT, &sq).unwrap(), 1.0);
    }

    #[test]
    fn ten_level_tree() {
        let t = ScenarioTree::binomial(10, 0.01).unwrap();
        assert_eq!(t.node_count(), 2047);
        assert!((t.horizon() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_oversized_and_degenerate() {
        assert!(matches!(
            ScenarioTree::binomial(40, 0.1),
            Err(Error::TreeTooLarge { .. })
        ));
        assert!(ScenarioTree::binomial(0, 0.1).is_err());
        assert!(ScenarioTree::binomial(3, 0.0).is_err());
        assert!(ScenarioTree::binomial(3, f64::NAN).is_err());
    }

    #[test]
    fn conditional_expectation_of_children() {
        let t = ScenarioTree::binomial(1, 0.3).unwrap();
        assert_eq!(
            t.conditional_expectation(NodeId::ROOT, &[1.0, 3.0])
                .unwrap(),
            2.0
        );
        assert_eq!(
            t.conditional_expectation(NodeId::ROOT, &[7.5, 7.5])
                .unwrap(),
            7.5
        );
        assert_eq!(
            t.conditional_expectation(NodeId::new(1, 0), &[1.0, 1.0]),
            Err(Error::LeafNode { level: 1 })
        );
    }

    #[test]
    fn expectations() {
        let t = ScenarioTree::binomial(2, 0.5).unwrap();
        assert_eq!(t.expectation(2, &[1.0; 4]).unwrap(), 1.0);
        assert_eq!(t.expectation(1, &[2.0, 4.0]).unwrap(), 3.0);
        let v: Vec<f64> = (0..4)
            .map(|k| 1.0 / (t.probability(NodeId::new(2, k)) * 4.0))
            .collect();
        assert_eq!(t.expectation(2, &v).unwrap(), 1.0);
        assert!(t.expectation(1, &[1.0; 4]).is_err());
    }

    #[test]
    fn single_branch_chain() {
        let t = ScenarioTree::single_branch(4, 0.25).unwrap();
        assert_eq!(t.node_count(), 5);
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.increment(NodeId::new(3, 0)), 0.0);
        assert_eq!(t.probability(NodeId::new(4, 0)), 1.0);
    }

    #[test]
    fn every_interior_node_matches_brownian_moments() {
        let t = ScenarioTree::binomial(5, 0.2).unwrap();
        for level in 0..t.depth() {
            let next = level + 1;
            let inc: Vec<f64> = (0..t.nodes_at(next))
                .map(|k| t.increment(NodeId::new(next, k)))
                .collect();
            let sq: Vec<f64> = inc.iter().map(|x| x * x).collect();
            for k in 0..t.nodes_at(level) {
                let node = NodeId::new(level, k);
                assert_eq!(t.conditional_expectation(node, &inc).unwrap(), 0.0);
                assert!((t.conditional_expectation(node, &sq).unwrap() - 0.2).abs() < 1e-15);
            }
        }
    }
}
