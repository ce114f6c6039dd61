//! Backward adjoint equation `dz = -Δz dt - a Z dt + Z dW`, `z(T) = η`.
//!
//! The discrete backward step is the transpose of the forward step under the
//! leaf-expectation and process inner products. For a node `m` with children
//! `c` reached with conditional probability `p`:
//!
//! ```text
//! z_m    = (I - dt Δ_h)^{-1} Σ_c p (1 + a_m ΔW_c) z_c
//! Zint_m = (I - dt Δ_h)^{-1} Σ_c p (ΔW_c / dt) z_c
//! ```
//!
//! With this choice `E<y(T; y0, u), η> = <y0, z(0)> + Σ_l dt E<u(l), χ_G z(l)>`
//! holds exactly up to rounding.

use alloc::vec;

use crate::error::{check_len, Result};
use crate::field::{AdaptedField, FieldRole, TerminalData};
use crate::forward::{CoefficientProcess, ControlSystem};
use crate::grid::{SpatialField, SpatialGrid};
use crate::tree::{NodeId, ScenarioTree};

/// Solution `(z, Z)` of the backward equation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdjointPair {
    /// Levels `0..=depth`.
    pub z: AdaptedField,
    /// Martingale integrand, levels `0..depth`.
    pub zint: AdaptedField,
}

impl AdjointPair {
    pub fn z0(&self) -> &[f64] {
        self.z.node(NodeId::ROOT)
    }
}

impl<'a> ControlSystem<'a> {
    pub fn adjoint(&self, eta: &TerminalData) -> Result<AdjointPair> {
        let tree = self.tree;
        let n = self.grid.n();
        eta.check_layout(tree, n)?;
        let depth = tree.depth();
        let mut z = AdaptedField::zeros(tree, n, depth + 1, FieldRole::Adjoint);
        let mut zint = AdaptedField::zeros(tree, n, depth, FieldRole::Integrand);
        z.level_mut(depth).copy_from_slice(eta.as_slice());
        let p = tree.child_probability();
        let inv_dt = 1.0 / tree.dt();
        let mut v = vec![0.0; n];
        let mut w = vec![0.0; n];
        for level in (0..depth).rev() {
            for k in 0..tree.nodes_at(level) {
                let node = NodeId::new(level, k);
                let a = self.coefficient.value(tree, node);
                v.fill(0.0);
                w.fill(0.0);
                for (j, c) in tree.children(node).enumerate() {
                    let dw = tree.child_increment(j);
                    let zc = z.node(NodeId::new(level + 1, c));
                    let fv = p * (1.0 + a * dw);
                    let fw = p * dw * inv_dt;
                    for i in 0..n {
                        v[i] += fv * zc[i];
                        w[i] += fw * zc[i];
                    }
                }
                self.step.solve_in_place(&mut v);
                self.step.solve_in_place(&mut w);
                z.node_mut(node).copy_from_slice(&v);
                zint.node_mut(node).copy_from_slice(&w);
            }
        }
        Ok(AdjointPair { z, zint })
    }

    /// `χ_G z` on levels `0..depth`, the adjoint of the control injection.
    pub fn observe(&self, pair: &AdjointPair) -> AdaptedField {
        observe(pair, self.grid, self.tree)
    }

    /// `L* η`: the observation of the adjoint solution with terminal value `η`.
    pub fn observe_terminal(&self, eta: &TerminalData) -> Result<AdaptedField> {
        Ok(self.observe(&self.adjoint(eta)?))
    }
}

/// See [`ControlSystem::adjoint`].
pub fn solve_adjoint(
    tree: &ScenarioTree,
    grid: &SpatialGrid,
    coefficient: &CoefficientProcess,
    eta: &TerminalData,
) -> Result<AdjointPair> {
    ControlSystem::new(tree, grid, coefficient)?.adjoint(eta)
}

/// Applies the control mask to `z` on levels `0..depth`.
pub fn observe(pair: &AdjointPair, grid: &SpatialGrid, tree: &ScenarioTree) -> AdaptedField {
    let mut out = pair.z.truncated(tree.depth()).with_role(FieldRole::Control);
    mask_field(grid, &mut out);
    out
}

pub(crate) fn mask_field(grid: &SpatialGrid, field: &mut AdaptedField) {
    let n = grid.n();
    for chunk in field.as_mut_slice().chunks_mut(n) {
        grid.mask_in_place(chunk);
    }
}

/// `<y0, z(0)>`.
pub fn initial_pairing(pair: &AdjointPair, grid: &SpatialGrid, y0: &[f64]) -> Result<f64> {
    check_len("initial state", grid.n(), y0.len())?;
    grid.inner_product(y0, pair.z0())
}

/// `z(0)` as a field.
pub fn initial_adjoint(pair: &AdjointPair) -> SpatialField {
    pair.z.root()
}
