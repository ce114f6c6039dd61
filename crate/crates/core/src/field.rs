//! Spatial fields attached to tree nodes.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::grid::{SpatialField, SpatialGrid};
use crate::math;
use crate::tree::{Branching, NodeId, ScenarioTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FieldRole {
    State,
    Control,
    Adjoint,
    Integrand,
}

fn level_offset(branching: Branching, level: usize) -> usize {
    match branching {
        Branching::Binary => (1 << level) - 1,
        Branching::Single => level,
    }
}

/// One spatial field per node on levels `0..levels`, stored level major.
///
/// Adaptedness is structural: the value at a node is a function of the path
/// leading to it and nothing else.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdaptedField {
    role: FieldRole,
    n: usize,
    levels: usize,
    branching: Branching,
    data: Vec<f64>,
}

impl AdaptedField {
    pub fn zeros(tree: &ScenarioTree, n: usize, levels: usize, role: FieldRole) -> Self {
        let branching = tree.branching();
        AdaptedField {
            role,
            n,
            levels,
            branching,
            data: vec![0.0; level_offset(branching, levels) * n],
        }
    }

    /// Builds a field from one closure call per node and grid point.
    pub fn from_fn(
        tree: &ScenarioTree,
        n: usize,
        levels: usize,
        role: FieldRole,
        mut f: impl FnMut(NodeId, usize) -> f64,
    ) -> Self {
        let mut out = Self::zeros(tree, n, levels, role);
        for level in 0..levels {
            for k in 0..tree.nodes_at(level) {
                let node = NodeId::new(level, k);
                for (i, v) in out.node_mut(node).iter_mut().enumerate() {
                    *v = f(node, i);
                }
            }
        }
        out
    }

    /// Wraps level-major data for `levels` levels of `tree`.
    pub fn from_vec(
        tree: &ScenarioTree,
        n: usize,
        levels: usize,
        role: FieldRole,
        data: Vec<f64>,
    ) -> Result<Self> {
        let branching = tree.branching();
        check_len(
            "adapted field data",
            level_offset(branching, levels) * n,
            data.len(),
        )?;
        Ok(AdaptedField {
            role,
            n,
            levels,
            branching,
            data,
        })
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn with_role(mut self, role: FieldRole) -> Self {
        self.role = role;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored levels (`depth + 1` for states, `depth` for controls).
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn branching(&self) -> Branching {
        self.branching
    }

    pub fn nodes_at(&self, level: usize) -> usize {
        level_offset(self.branching, level + 1) - level_offset(self.branching, level)
    }

    /// All node fields of `level`, concatenated in node order.
    pub fn level(&self, level: usize) -> &[f64] {
        let lo = level_offset(self.branching, level) * self.n;
        let hi = level_offset(self.branching, level + 1) * self.n;
        &self.data[lo..hi]
    }

    pub fn level_mut(&mut self, level: usize) -> &mut [f64] {
        let lo = level_offset(self.branching, level) * self.n;
        let hi = level_offset(self.branching, level + 1) * self.n;
        &mut self.data[lo..hi]
    }

    pub fn node(&self, node: NodeId) -> &[f64] {
        let start = (level_offset(self.branching, node.level) + node.index) * self.n;
        &self.data[start..start + self.n]
    }

    pub fn node_mut(&mut self, node: NodeId) -> &mut [f64] {
        let start = (level_offset(self.branching, node.level) + node.index) * self.n;
        &mut self.data[start..start + self.n]
    }

    pub fn root(&self) -> SpatialField {
        SpatialField(self.node(NodeId::ROOT).to_vec())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Checks that the field lives on `tree`, has `n` points and at least
    /// `min_levels` levels.
    pub fn check_layout(&self, tree: &ScenarioTree, n: usize, min_levels: usize) -> Result<()> {
        if self.branching != tree.branching() {
            return Err(Error::InvalidArgument {
                name: "adapted field",
                reason: "branching differs from the tree",
            });
        }
        check_len("adapted field points", n, self.n)?;
        if self.levels < min_levels || self.levels > tree.depth() + 1 {
            return Err(Error::ShapeMismatch {
                what: "adapted field levels",
                expected: min_levels,
                actual: self.levels,
            });
        }
        Ok(())
    }

    /// Copy of levels `0..levels`.
    pub fn truncated(&self, levels: usize) -> Self {
        let levels = levels.min(self.levels);
        let len = level_offset(self.branching, levels) * self.n;
        AdaptedField {
            role: self.role,
            n: self.n,
            levels,
            branching: self.branching,
            data: self.data[..len].to_vec(),
        }
    }

    /// Appends `extra` levels of zeros; node numbering of the existing levels
    /// is unchanged because storage is level major.
    pub fn zero_extended(&self, extra: usize) -> Self {
        let levels = self.levels + extra;
        let mut data = self.data.clone();
        data.resize(level_offset(self.branching, levels) * self.n, 0.0);
        AdaptedField {
            role: self.role,
            n: self.n,
            levels,
            branching: self.branching,
            data,
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &AdaptedField) -> Result<()> {
        check_len("adapted field data", self.data.len(), other.data.len())?;
        math::axpy(alpha, &other.data, &mut self.data);
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// One spatial field per leaf: a discretized `F_T`-measurable random field.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TerminalData {
    n: usize,
    leaves: usize,
    data: Vec<f64>,
}

impl TerminalData {
    pub fn zeros(tree: &ScenarioTree, n: usize) -> Self {
        TerminalData {
            n,
            leaves: tree.leaf_count(),
            data: vec![0.0; tree.leaf_count() * n],
        }
    }

    pub fn from_vec(tree: &ScenarioTree, n: usize, data: Vec<f64>) -> Result<Self> {
        check_len("terminal data", tree.leaf_count() * n, data.len())?;
        Ok(TerminalData {
            n,
            leaves: tree.leaf_count(),
            data,
        })
    }

    pub fn from_fn(tree: &ScenarioTree, n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(tree, n);
        for k in 0..out.leaves {
            for (i, v) in out.leaf_mut(k).iter_mut().enumerate() {
                *v = f(k, i);
            }
        }
        out
    }

    /// The same field on every leaf (deterministic terminal data).
    pub fn deterministic(tree: &ScenarioTree, field: &[f64]) -> Self {
        let n = field.len();
        Self::from_fn(tree, n, |_, i| field[i])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves
    }

    pub fn leaf(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn leaf_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_layout(&self, tree: &ScenarioTree, n: usize) -> Result<()> {
        check_len("terminal data leaves", tree.leaf_count(), self.leaves)?;
        check_len("terminal data points", n, self.n)
    }

    /// `E <self, other>` over the leaves.
    pub fn inner(&self, tree: &ScenarioTree, grid: &SpatialGrid, other: &TerminalData) -> f64 {
        tree.level_probability(tree.depth()) * grid.h() * math::dot(&self.data, &other.data)
    }

    /// `sqrt(E ||self||^2)` over the leaves.
    pub fn norm(&self, tree: &ScenarioTree, grid: &SpatialGrid) -> f64 {
        math::sqrt(self.inner(tree, grid, self))
    }

    /// Largest `L^2(D)` norm over the leaves.
    pub fn max_leaf_norm(&self, grid: &SpatialGrid) -> f64 {
        (0..self.leaves)
            .map(|k| math::sqrt(grid.h() * math::norm_sq(self.leaf(k))))
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &TerminalData) -> Result<()> {
        check_len("terminal data", self.data.len(), other.data.len())?;
        math::axpy(alpha, &other.data, &mut self.data);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_major_layout() {
        let tree = ScenarioTree::binomial(2, 0.1).unwrap();
        let f = AdaptedField::from_fn(&tree, 2, 3, FieldRole::State, |node, i| {
            (tree.global_index(node) * 10 + i) as f64
        });
        assert_eq!(f.as_slice().len(), 14);
        assert_eq!(f.level(1), &[10.0, 11.0, 20.0, 21.0]);
        assert_eq!(f.node(NodeId::new(2, 3)), &[60.0, 61.0]);
        let ext = f.truncated(2).zero_extended(2);
        assert_eq!(ext.levels(), 4);
        assert_eq!(ext.level(1), f.level(1));
        assert!(ext.level(3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn terminal_inner_product_is_expectation() {
        let tree = ScenarioTree::binomial(2, 0.1).unwrap();
        let grid = SpatialGrid::new(3, 1.0, 0.25, 0.75).unwrap();
        let a = TerminalData::from_fn(&tree, 3, |k, _| k as f64);
        let b = TerminalData::deterministic(&tree, &[1.0, 1.0, 1.0]);
        // E[k] * 3 points * h = 1.5 * 0.75
        assert!((a.inner(&tree, &grid, &b) - 1.125).abs() < 1e-15);
        assert!((b.max_leaf_norm(&grid) - 0.75f64.sqrt()).abs() < 1e-15);
    }
}
