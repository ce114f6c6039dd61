//! Minimal-norm null control by the Hilbert Uniqueness Method.
//!
//! With `L` the control-to-terminal map and `ŷ_T` the uncontrolled terminal
//! state, the functional
//!
//! ```text
//! J(η) = ½ ||χ_G z(·; η)||² + <y0, z(0; η)>
//! ```
//!
//! is quadratic with gradient `L L* η + ŷ_T`. Its minimizer `η*` solves the
//! Gram system `(L L* + ε I) η = -ŷ_T`, which is done by conjugate gradients
//! in the leaf-expectation inner product. The minimal-norm control is the
//! observation `u* = χ_G z(·; η*)` and its norm is `N(T, y0)`.

use alloc::vec::Vec;

use crate::adjoint::{initial_pairing, observe};
use crate::error::{check_len, Error, Result};
use crate::field::{AdaptedField, TerminalData};
use crate::forward::{CoefficientProcess, ControlSystem};
use crate::grid::{process_norm, process_norm_sq, SpatialField, SpatialGrid};
use crate::math;
use crate::tree::ScenarioTree;

/// Tikhonov levels tried, smallest first, when the unregularized solve stalls.
pub const DEFAULT_EPS_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HumOptions {
    /// Stop when the Gram residual is below `tol * ||ŷ_T||`.
    pub tol: f64,
    /// Iteration cap; `None` means `4 * leaves * n`.
    pub max_iter: Option<usize>,
    /// Tikhonov shift added to the Gram operator.
    pub eps: f64,
    /// Re-orthogonalize each residual against the previous ones (bounded by
    /// [`REORTH_BUDGET`] stored values).
    pub reorthogonalize: bool,
}

/// Maximum number of `f64` values kept for residual re-orthogonalization.
pub const REORTH_BUDGET: usize = 1 << 23;

impl Default for HumOptions {
    fn default() -> Self {
        HumOptions {
            tol: 1e-10,
            max_iter: None,
            eps: 0.0,
            reorthogonalize: true,
        }
    }
}

impl HumOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument {
                name: "tol",
                reason: "must be positive",
            });
        }
        if !(self.eps >= 0.0) {
            return Err(Error::InvalidArgument {
                name: "eps",
                reason: "must be non-negative",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HumResult {
    /// Minimizer of `J`.
    pub eta_star: TerminalData,
    /// Minimal-norm control, supported in the control region.
    pub u_star: AdaptedField,
    /// `z(0; η*)`.
    pub z0_star: SpatialField,
    /// `N(T, y0) = ||u*||`.
    pub norm_n: f64,
    /// `J(η*)`.
    pub value_v: f64,
    /// `|V + ½N²|`.
    pub duality_gap: f64,
    pub cg_iterations: usize,
    /// `||(G + ε) η* + ŷ_T|| / ||ŷ_T||`, recomputed after the iteration.
    pub gram_residual: f64,
    pub regularization_eps: f64,
    pub converged: bool,
    /// `||ŷ_T||` in the leaf-expectation norm.
    pub free_terminal_norm: f64,
    /// Largest leaf norm of `y(T; y0, u*)` divided by `||y0||`.
    pub terminal_residual: f64,
    /// Norm extrapolated to `ε = 0` when the regularization ladder was used.
    pub extrapolated_norm: Option<f64>,
}

impl HumResult {
    /// `|V + ½N²| / N²`, zero for the trivial problem.
    pub fn relative_gap(&self) -> f64 {
        let n2 = self.norm_n * self.norm_n;
        if n2 > 0.0 {
            self.duality_gap / n2
        } else {
            self.duality_gap
        }
    }
}

/// Result of the observability-constant power iteration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObservabilityEstimate {
    pub constant: f64,
    pub iterations: usize,
    /// Initial state realizing the largest quotient (`||y0|| = 1`).
    pub extremal_state: SpatialField,
}

impl<'a> ControlSystem<'a> {
    fn default_max_iter(&self) -> usize {
        4 * self.tree.leaf_count() * self.grid.n()
    }

    /// `L L* η = y(T; 0, χ_G z(·; η))`.
    pub fn gram_apply(&self, eta: &TerminalData) -> Result<TerminalData> {
        let u = self.observe_terminal(eta)?;
        let zero = SpatialField::zeros(self.grid.n());
        self.terminal(&zero, Some(&u))
    }

    /// `J(η)` evaluated from one adjoint solve.
    pub fn eval_j(&self, y0: &[f64], eta: &TerminalData) -> Result<f64> {
        check_len("initial state", self.grid.n(), y0.len())?;
        let pair = self.adjoint(eta)?;
        let obs = observe(&pair, self.grid, self.tree);
        Ok(0.5 * process_norm_sq(self.tree, self.grid, &obs)?
            + initial_pairing(&pair, self.grid, y0)?)
    }

    /// `<y0, z(0; η)> / ||χ_G z(·; η)||`. Its supremum over `η` is `N(T, y0)`,
    /// attained at `-η*`.
    pub fn characterization_ratio(&self, y0: &[f64], eta: &TerminalData) -> Result<f64> {
        check_len("initial state", self.grid.n(), y0.len())?;
        let pair = self.adjoint(eta)?;
        let obs = observe(&pair, self.grid, self.tree);
        let denom = process_norm(self.tree, self.grid, &obs)?;
        if !(denom > 0.0) {
            return Err(Error::ZeroObservation);
        }
        Ok(initial_pairing(&pair, self.grid, y0)? / denom)
    }

    /// Solves the Gram system by conjugate gradients and builds the control.
    ///
    /// Non-convergence is reported through [`HumResult::converged`], not as an
    /// error.
    pub fn minimize_j(&self, y0: &[f64], opts: &HumOptions) -> Result<HumResult> {
        opts.validate()?;
        check_len("initial state", self.grid.n(), y0.len())?;
        let (tree, grid) = (self.tree, self.grid);
        let max_iter = opts.max_iter.unwrap_or_else(|| self.default_max_iter());

        let free = self.terminal(y0, None)?;
        let b_norm = free.norm(tree, grid);
        let mut eta = TerminalData::zeros(tree, grid.n());
        let mut iterations = 0;
        let mut residual = 0.0;
        let mut converged = b_norm == 0.0;

        // Restarted CG: every restart recomputes the true residual, which
        // keeps the recurrence honest on the (singular) Gram operator.
        let mut stalled = false;
        let mut cycle_start_residual = f64::INFINITY;
        while !converged && iterations < max_iter && !stalled {
            let mut r = self.gram_apply(&eta)?;
            r.add_scaled(opts.eps, &eta)?;
            r.add_scaled(1.0, &free)?;
            r = r.scaled(-1.0);
            residual = r.norm(tree, grid) / b_norm;
            if residual <= opts.tol {
                converged = true;
                break;
            }
            // A restart cycle that did not halve the true residual means the
            // rounding floor of the Gram products has been reached.
            if residual > 0.5 * cycle_start_residual {
                break;
            }
            cycle_start_residual = residual;
            let mut p = r.clone();
            let mut rr = r.inner(tree, grid, &r);
            let start = iterations;
            let keep = if opts.reorthogonalize {
                REORTH_BUDGET / r.as_slice().len().max(1)
            } else {
                0
            };
            let mut basis: Vec<TerminalData> = Vec::new();
            if keep > 0 {
                basis.push(r.scaled(1.0 / math::sqrt(rr)));
            }
            let mut inner_converged = false;
            while iterations < max_iter {
                let mut q = self.gram_apply(&p)?;
                q.add_scaled(opts.eps, &p)?;
                let pq = p.inner(tree, grid, &q);
                iterations += 1;
                if !(pq > 0.0) {
                    break;
                }
                let alpha = rr / pq;
                eta.add_scaled(alpha, &p)?;
                r.add_scaled(-alpha, &q)?;
                for q in &basis {
                    let c = r.inner(tree, grid, q);
                    r.add_scaled(-c, q)?;
                }
                let rr_new = r.inner(tree, grid, &r);
                if basis.len() < keep && rr_new > 0.0 {
                    basis.push(r.scaled(1.0 / math::sqrt(rr_new)));
                }
                if math::sqrt(rr_new) <= opts.tol * b_norm {
                    inner_converged = true;
                    break;
                }
                let beta = rr_new / rr;
                rr = rr_new;
                let mut next = r.clone();
                next.add_scaled(beta, &p)?;
                p = next;
            }
            if !inner_converged && iterations - start <= 1 {
                stalled = true;
            }
        }

        let pair = self.adjoint(&eta)?;
        let u_star = observe(&pair, grid, tree);
        // y(T; y0, u*) = ŷ_T + L L* η*, so the reached state doubles as the
        // unshifted Gram residual.
        let reached = self.terminal(y0, Some(&u_star))?;
        if b_norm > 0.0 {
            let mut r = reached.clone();
            r.add_scaled(opts.eps, &eta)?;
            residual = r.norm(tree, grid) / b_norm;
            converged = residual <= opts.tol;
        }

        let norm_sq = process_norm_sq(tree, grid, &u_star)?;
        let norm_n = math::sqrt(norm_sq);
        let value_v = 0.5 * norm_sq + initial_pairing(&pair, grid, y0)?;
        let y0_norm = grid.norm(y0)?;
        let terminal_residual = if y0_norm > 0.0 {
            reached.max_leaf_norm(grid) / y0_norm
        } else {
            reached.max_leaf_norm(grid)
        };
        Ok(HumResult {
            z0_star: pair.z.root(),
            eta_star: eta,
            u_star,
            norm_n,
            value_v,
            duality_gap: (value_v + 0.5 * norm_sq).abs(),
            cg_iterations: iterations,
            gram_residual: residual,
            regularization_eps: opts.eps,
            converged,
            free_terminal_norm: b_norm,
            terminal_residual,
            extrapolated_norm: None,
        })
    }

    /// Runs [`Self::minimize_j`]; if the unregularized solve does not converge,
    /// retries along `ladder` and extrapolates the norm linearly to `ε = 0`
    /// from the two smallest converged levels.
    pub fn minimize_with_ladder(
        &self,
        y0: &[f64],
        opts: &HumOptions,
        ladder: &[f64],
    ) -> Result<HumResult> {
        let first = self.minimize_j(y0, opts)?;
        if first.converged || opts.eps > 0.0 || ladder.is_empty() {
            return Ok(first);
        }
        let mut runs: Vec<HumResult> = Vec::new();
        for &eps in ladder {
            let run = self.minimize_j(
                y0,
                &HumOptions {
                    eps,
                    ..opts.clone()
                },
            )?;
            if run.converged {
                runs.push(run);
            }
            if runs.len() == 2 {
                break;
            }
        }
        match runs.len() {
            0 => Ok(first),
            1 => Ok(runs.pop().unwrap()),
            _ => {
                let second = runs.pop().unwrap();
                let mut best = runs.pop().unwrap();
                let (e1, n1) = (best.regularization_eps, best.norm_n);
                let (e2, n2) = (second.regularization_eps, second.norm_n);
                best.extrapolated_norm = Some(n1 - e1 * (n2 - n1) / (e2 - e1));
                Ok(best)
            }
        }
    }

    /// Power iteration for `C = sup_η ||z(0; η)||² / ||χ_G z(·; η)||²`.
    ///
    /// The supremum equals the top eigenvalue of `y0 ↦ -z(0; η*(y0))`, whose
    /// Rayleigh quotient is `N(T, y0)²`. Each iterate contributes the quotient
    /// of an actual terminal datum, so every reported value is a lower bound
    /// of the true constant.
    pub fn estimate_observability_constant(
        &self,
        opts: &HumOptions,
        rel_tol: f64,
        max_iter: usize,
    ) -> Result<ObservabilityEstimate> {
        let grid = self.grid;
        let n = grid.n();
        let mut y: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64 / n as f64).collect();
        let scale = 1.0 / grid.norm(&y)?;
        y.iter_mut().for_each(|v| *v *= scale);

        let mut best = 0.0;
        let mut best_state = SpatialField(y.clone());
        let mut previous = f64::NAN;
        for it in 1..=max_iter {
            let res = self.minimize_j(&y, opts)?;
            let obs_sq = res.norm_n * res.norm_n;
            if !(obs_sq > 0.0) {
                return Err(Error::ZeroObservation);
            }
            let z0 = &res.z0_star;
            let z0_sq = grid.inner_product(z0, z0)?;
            let quotient = z0_sq / obs_sq;
            if quotient > best {
                best = quotient;
                best_state = SpatialField(y.clone());
            }
            if (quotient - previous).abs() <= 0.1 * rel_tol * quotient {
                return Ok(ObservabilityEstimate {
                    constant: best,
                    iterations: it,
                    extremal_state: best_state,
                });
            }
            previous = quotient;
            let z_norm = math::sqrt(z0_sq);
            y = z0.iter().map(|v| -v / z_norm).collect();
        }
        Err(Error::NotConverged {
            what: "observability power iteration",
            iterations: max_iter,
        })
    }
}

/// `L L* η`; see [`ControlSystem::gram_apply`].
pub fn gram_apply(
    tree: &ScenarioTree,
    grid: &SpatialGrid,
    coefficient: &CoefficientProcess,
    eta: &TerminalData,
) -> Result<TerminalData> {
    ControlSystem::new(tree, grid, coefficient)?.gram_apply(eta)
}

pub fn eval_j(
    tree: &ScenarioTree,
    grid: &SpatialGrid,
    coefficient: &CoefficientProcess,
    y0: &[f64],
    eta: &TerminalData,
) -> Result<f64> {
    ControlSystem::new(tree, grid, coefficient)?.eval_j(y0, eta)
}

pub fn minimize_j(
    tree: &ScenarioTree,
    grid: &SpatialGrid,
    coefficient: &CoefficientProcess,
    y0: &[f64],
    opts: &HumOptions,
) -> Result<HumResult> {
    ControlSystem::new(tree, grid, coefficient)?.minimize_j(y0, opts)
}

pub fn characterization_ratio(
    tree: &ScenarioTree,
    grid: &SpatialGrid,
    coefficient: &CoefficientProcess,
    y0: &[f64],
    eta: &TerminalData,
) -> Result<f64> {
    ControlSystem::new(tree, grid, coefficient)?.characterization_ratio(y0, eta)
}

/// Observability constant with default solver settings and a `1e-6`
/// relative stopping rule.
pub fn estimate_observability_constant(
    tree: &ScenarioTree,
    grid: &SpatialGrid,
    coefficient: &CoefficientProcess,
) -> Result<ObservabilityEstimate> {
    ControlSystem::new(tree, grid, coefficient)?.estimate_observability_constant(
        &HumOptions {
            tol: 1e-12,
            ..HumOptions::default()
        },
        1e-6,
        500,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system_parts(n: usize, depth: usize, dt: f64, g: (f64, f64)) -> (ScenarioTree, SpatialGrid) {
        (
            ScenarioTree::binomial(depth, dt).unwrap(),
            SpatialGrid::new(n, 1.0, g.0, g.1).unwrap(),
        )
    }

    #[test]
    fn zero_initial_state_needs_no_control() {
        let (tree, grid) = system_parts(4, 3, 0.1, (0.2, 0.8));
        let a = CoefficientProcess::Constant(0.3);
        let r = minimize_j(&tree, &grid, &a, &[0.0; 4], &HumOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.norm_n, 0.0);
        assert_eq!(r.cg_iterations, 0);
        assert_eq!(r.u_star.max_abs(), 0.0);
    }

    #[test]
    fn one_point_one_step_closed_form() {
        // Only u = -y0/dt works, so N = sqrt(dt h) |y0| / dt.
        let (tree, grid) = system_parts(1, 1, 0.1, (0.0, 1.0));
        let a = CoefficientProcess::Constant(0.7);
        let r = minimize_j(&tree, &grid, &a, &[3.0], &HumOptions::default()).unwrap();
        let expected = (0.1f64 * 0.5).sqrt() * 3.0 / 0.1;
        assert!(r.converged);
        assert!((r.norm_n - expected).abs() < 1e-12 * expected);
        assert!(r.relative_gap() < 1e-12);
    }

    #[test]
    fn eval_j_at_zero_is_zero_and_convex_along_lines() {
        let (tree, grid) = system_parts(5, 3, 0.1, (0.2, 0.8));
        let a = CoefficientProcess::Constant(0.4);
        let system = ControlSystem::new(&tree, &grid, &a).unwrap();
        let y0 = grid.sine_mode(1);
        assert_eq!(
            system.eval_j(&y0, &TerminalData::zeros(&tree, 5)).unwrap(),
            0.0
        );
        let p = TerminalData::from_fn(&tree, 5, |k, i| ((k + 2 * i) as f64).cos());
        let q = TerminalData::from_fn(&tree, 5, |k, i| ((3 * k + i) as f64).sin());
        let jp = system.eval_j(&y0, &p).unwrap();
        let jq = system.eval_j(&y0, &q).unwrap();
        let mut mid = p.scaled(0.5);
        mid.add_scaled(0.5, &q).unwrap();
        assert!(system.eval_j(&y0, &mid).unwrap() <= 0.5 * (jp + jq) + 1e-14);
    }

    #[test]
    fn unreachable_state_falls_back_to_regularization() {
        // One step cannot touch points outside G.
        let (tree, grid) = system_parts(6, 1, 0.1, (0.3, 0.7));
        let a = CoefficientProcess::Constant(0.3);
        let system = ControlSystem::new(&tree, &grid, &a).unwrap();
        let y0 = grid.sine_mode(1);
        let plain = system.minimize_j(&y0, &HumOptions::default()).unwrap();
        assert!(!plain.converged);
        let r = system
            .minimize_with_ladder(&y0, &HumOptions::default(), &DEFAULT_EPS_LADDER)
            .unwrap();
        assert!(r.regularization_eps > 0.0);
        assert!(r.terminal_residual > 1e-3);
    }

    #[test]
    fn observability_constant_with_full_actuation_in_one_step() {
        // z(0) = A^{-1} η and χ_G z(0) = z(0): the quotient is 1/dt.
        let (tree, grid) = system_parts(4, 1, 0.05, (0.0, 1.0));
        let a = CoefficientProcess::Constant(0.5);
        let c = estimate_observability_constant(&tree, &grid, &a).unwrap();
        assert!((c.constant - 20.0).abs() < 1e-6 * 20.0);
    }
}
