//! Controlled forward equation `dy = Δy dt + χ_G u dt + a y dW` on a
//! scenario tree.
//!
//! One step from node `m` to its children `c`:
//!
//! ```text
//! (I - dt Δ_h) ŷ = y_m + dt χ_G u_m
//! y_c = (1 + a_m ΔW_{m→c}) ŷ
//! ```
//!
//! The heat part is backward Euler, the noise is explicit and evaluated with
//! the coefficient of the parent node.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::field::{AdaptedField, FieldRole, TerminalData};
use crate::grid::{ImplicitStep, SpatialGrid};
use crate::tree::{NodeId, ScenarioTree};

/// Bounded adapted noise coefficient `a`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CoefficientProcess {
    Constant(f64),
    /// One value per level `0..depth`.
    PerLevel(Vec<f64>),
    /// One value per node of levels `0..depth`, in global node order.
    PerNode(Vec<f64>),
}

impl CoefficientProcess {
    pub fn zero() -> Self {
        CoefficientProcess::Constant(0.0)
    }

    /// Value at a non-leaf node.
    pub fn value(&self, tree: &ScenarioTree, node: NodeId) -> f64 {
        match self {
            CoefficientProcess::Constant(a) => *a,
            CoefficientProcess::PerLevel(v) => v[node.level],
            CoefficientProcess::PerNode(v) => v[tree.global_index(node)],
        }
    }

    /// Uniform bound `a_max`.
    pub fn bound(&self) -> f64 {
        match self {
            CoefficientProcess::Constant(a) => a.abs(),
            CoefficientProcess::PerLevel(v) | CoefficientProcess::PerNode(v) => {
                v.iter().fold(0.0, |m, a| m.max(a.abs()))
            }
        }
    }

    pub fn validate(&self, tree: &ScenarioTree) -> Result<()> {
        let values: &[f64] = match self {
            CoefficientProcess::Constant(a) => core::slice::from_ref(a),
            CoefficientProcess::PerLevel(v) => {
                check_len("per-level coefficient", tree.depth(), v.len())?;
                v
            }
            CoefficientProcess::PerNode(v) => {
                check_len(
                    "per-node coefficient",
                    tree.level_offset(tree.depth()),
                    v.len(),
                )?;
                v
            }
        };
        if values.iter().all(|a| a.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument {
                name: "coefficient",
                reason: "values must be finite",
            })
        }
    }
}

/// A tree, a grid and a noise coefficient, with the implicit step factored
/// once. All solvers of the crate run through this type.
#[derive(Debug, Clone)]
pub struct ControlSystem<'a> {
    pub(crate) tree: &'a ScenarioTree,
    pub(crate) grid: &'a SpatialGrid,
    pub(crate) coefficient: &'a CoefficientProcess,
    pub(crate) step: ImplicitStep,
}

impl<'a> ControlSystem<'a> {
    pub fn new(
        tree: &'a ScenarioTree,
        grid: &'a SpatialGrid,
        coefficient: &'a CoefficientProcess,
    ) -> Result<Self> {
        coefficient.validate(tree)?;
        Ok(ControlSystem {
            tree,
            grid,
            coefficient,
            step: ImplicitStep::new(grid, tree.dt()),
        })
    }

    pub fn tree(&self) -> &'a ScenarioTree {
        self.tree
    }

    pub fn grid(&self) -> &'a SpatialGrid {
        self.grid
    }

    pub fn coefficient(&self) -> &'a CoefficientProcess {
        self.coefficient
    }

    /// State process on levels `0..=depth` driven by `y0` and the optional
    /// control `u` (levels `0..depth`).
    pub fn forward(&self, y0: &[f64], u: Option<&AdaptedField>) -> Result<AdaptedField> {
        let tree = self.tree;
        let n = self.grid.n();
        check_len("initial state", n, y0.len())?;
        if let Some(u) = u {
            u.check_layout(tree, n, tree.depth())?;
        }
        if !y0.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { level: 0 });
        }
        let dt = tree.dt();
        let mut state = AdaptedField::zeros(tree, n, tree.depth() + 1, FieldRole::State);
        state.node_mut(NodeId::ROOT).copy_from_slice(y0);
        let mut buf = vec![0.0; n];
        for level in 0..tree.depth() {
            for k in 0..tree.nodes_at(level) {
                let node = NodeId::new(level, k);
                buf.copy_from_slice(state.node(node));
                if let Some(u) = u {
                    let un = u.node(node);
                    for (i, &inside) in self.grid.mask().iter().enumerate() {
                        if inside {
                            buf[i] += dt * un[i];
                        }
                    }
                }
                self.step.solve_in_place(&mut buf);
                let a = self.coefficient.value(tree, node);
                for (j, c) in tree.children(node).enumerate() {
                    let factor = 1.0 + a * tree.child_increment(j);
                    let child = state.node_mut(NodeId::new(level + 1, c));
                    for (dst, src) in child.iter_mut().zip(&buf) {
                        *dst = factor * src;
                    }
                }
            }
            if !state.level(level + 1).iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { level: level + 1 });
            }
        }
        Ok(state)
    }

    /// Leaf fields of the state at the horizon.
    pub fn terminal(&self, y0: &[f64], u: Option<&AdaptedField>) -> Result<TerminalData> {
        terminal_state(self.tree, &self.forward(y0, u)?)
    }
}

/// See [`ControlSystem::forward`].
pub fn solve_forward(
    tree: &ScenarioTree,
    grid: &SpatialGrid,
    coefficient: &CoefficientProcess,
    y0: &[f64],
    u: Option<&AdaptedField>,
) -> Result<AdaptedField> {
    ControlSystem::new(tree, grid, coefficient)?.forward(y0, u)
}

/// Extracts the leaf fields of a state process.
pub fn terminal_state(tree: &ScenarioTree, state: &AdaptedField) -> Result<TerminalData> {
    check_len("state levels", tree.depth() + 1, state.levels())?;
    TerminalData::from_vec(tree, state.n(), state.level(tree.depth()).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::process_norm;

    fn setup(depth: usize, dt: f64, n: usize) -> (ScenarioTree, SpatialGrid) {
        (
            ScenarioTree::binomial(depth, dt).unwrap(),
            SpatialGrid::new(n, 1.0, 0.2, 0.8).unwrap(),
        )
    }

    #[test]
    fn eigenvector_decays_geometrically() {
        let (tree, grid) = setup(4, 0.05, 9);
        let y0 = grid.sine_mode(1);
        let lambda = grid.dirichlet_eigenvalue(1);
        let state = solve_forward(&tree, &grid, &CoefficientProcess::zero(), &y0, None).unwrap();
        for level in 0..=4 {
            let factor = (1.0 + 0.05 * lambda).powi(-(level as i32));
            for k in 0..tree.nodes_at(level) {
                for (v, e) in state.node(NodeId::new(level, k)).iter().zip(y0.iter()) {
                    assert!((v - factor * e).abs() <= 1e-12 * (factor * e).abs());
                }
            }
        }
        let leaves = terminal_state(&tree, &state).unwrap();
        assert_eq!(leaves.leaf_count(), 16);
    }

    #[test]
    fn zero_input_gives_zero_state() {
        let (tree, grid) = setup(3, 0.1, 5);
        let a = CoefficientProcess::Constant(0.4);
        let state = solve_forward(&tree, &grid, &a, &[0.0; 5], None).unwrap();
        assert_eq!(state.max_abs(), 0.0);
    }

    #[test]
    fn depth_one_has_two_leaves() {
        let (tree, grid) = setup(1, 0.1, 5);
        let a = CoefficientProcess::Constant(0.4);
        let state = solve_forward(&tree, &grid, &a, &grid.sine_mode(2), None).unwrap();
        assert_eq!(terminal_state(&tree, &state).unwrap().leaf_count(), 2);
    }

    #[test]
    fn coefficient_shapes_are_checked() {
        let (tree, grid) = setup(3, 0.1, 5);
        let bad = CoefficientProcess::PerLevel(vec![0.1, 0.2]);
        assert!(ControlSystem::new(&tree, &grid, &bad).is_err());
        let bad = CoefficientProcess::PerNode(vec![0.1; 6]);
        assert!(ControlSystem::new(&tree, &grid, &bad).is_err());
        let ok = CoefficientProcess::PerNode(vec![0.1; 7]);
        assert!(ControlSystem::new(&tree, &grid, &ok).is_ok());
    }

    #[test]
    fn blow_up_is_reported() {
        let tree = ScenarioTree::binomial(6, 1.0).unwrap();
        let grid = SpatialGrid::new(2, 1.0, 0.2, 0.8).unwrap();
        let a = CoefficientProcess::Constant(1e200);
        let err = solve_forward(&tree, &grid, &a, &[1.0, 1.0], None).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn mean_square_growth_bound() {
        let (tree, grid) = setup(6, 0.1, 8);
        let a = 0.9;
        let coeff = CoefficientProcess::Constant(a);
        let y0: Vec<f64> = (0..8).map(|i| 1.0 + (i as f64).cos()).collect();
        let state = solve_forward(&tree, &grid, &coeff, &y0, None).unwrap();
        let y0_sq = grid.inner_product(&y0, &y0).unwrap();
        for level in 0..=6 {
            let ms: f64 = (0..tree.nodes_at(level))
                .map(|k| {
                    let v = state.node(NodeId::new(level, k));
                    grid.inner_product(v, v).unwrap()
                })
                .sum::<f64>()
                * tree.level_probability(level);
            let bound = (1.0 + a * a * 0.1f64).powi(level as i32) * y0_sq;
            assert!(ms <= bound * (1.0 + 1e-12));
        }
        let _ = process_norm(&tree, &grid, &state).unwrap();
    }
}
