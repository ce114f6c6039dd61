//! Dense reference solver for small problems.
//!
//! The control-to-terminal map `F: u ↦ y(T; 0, u)` is assembled column by
//! column on the control degrees of freedom inside `G`. With the weights of
//! the process and leaf inner products folded in,
//!
//! ```text
//! Ã = W_r^{1/2} F W_c^{-1/2},   b̃ = -W_r^{1/2} y(T; y0, 0),
//! ```
//!
//! the minimal-norm exact null control is `W_c^{-1/2} Ã⁺ b̃`, computed by an
//! SVD pseudoinverse. It shares nothing with the conjugate-gradient path
//! except the forward step.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::field::{AdaptedField, FieldRole, TerminalData};
use crate::forward::ControlSystem;
use crate::grid::{process_norm, SpatialGrid};
use crate::math;
use crate::tree::{NodeId, ScenarioTree};

/// Largest number of terminal rows the oracle will assemble.
pub const DENSE_ROW_CAP: usize = 4096;
/// Relative residual above which `y0` is declared unreachable.
pub const REACH_TOL: f64 = 1e-8;
/// Agreement required between the oracle and the iterative solver.
pub const COMPARE_TOL: f64 = 1e-6;

const MAGIC: &[u8; 8] = b"STHMDMAP";

/// Row `r` of the dense map: leaf and grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowCode {
    pub leaf: usize,
    pub point: usize,
}

/// Column `c`: control node and grid point (always inside `G`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnCode {
    pub node: NodeId,
    pub point: usize,
}

/// The control-to-terminal map with its weights and index codebooks.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMap {
    pub matrix: DMatrix<f64>,
    pub row_weights: Vec<f64>,
    pub col_weights: Vec<f64>,
    pub rows: Vec<RowCode>,
    pub cols: Vec<ColumnCode>,
}

/// Builds `F` by probing the forward solver with unit controls.
pub fn assemble_control_to_terminal(system: &ControlSystem<'_>) -> Result<DenseMap> {
    assemble_with_cap(system, DENSE_ROW_CAP)
}

pub fn assemble_with_cap(system: &ControlSystem<'_>, cap: usize) -> Result<DenseMap> {
    let tree = system.tree();
    let grid = system.grid();
    let n = grid.n();
    let n_rows = tree.leaf_count() * n;
    if n_rows > cap {
        return Err(Error::DenseCapExceeded { rows: n_rows, cap });
    }
    let h = grid.h();
    let leaf_weight = tree.level_probability(tree.depth()) * h;
    let rows: Vec<RowCode> = (0..tree.leaf_count())
        .flat_map(|leaf| (0..n).map(move |point| RowCode { leaf, point }))
        .collect();

    let points: Vec<usize> = grid.control_points().collect();
    let mut cols = Vec::new();
    let mut col_weights = Vec::new();
    for level in 0..tree.depth() {
        let w = tree.dt() * tree.level_probability(level) * h;
        for k in 0..tree.nodes_at(level) {
            for &point in &points {
                cols.push(ColumnCode {
                    node: NodeId::new(level, k),
                    point,
                });
                col_weights.push(w);
            }
        }
    }

    let zero = vec![0.0; n];
    let mut matrix = DMatrix::zeros(n_rows, cols.len());
    let mut u = AdaptedField::zeros(tree, n, tree.depth(), FieldRole::Control);
    for (j, code) in cols.iter().enumerate() {
        u.node_mut(code.node)[code.point] = 1.0;
        let leaves = system.terminal(&zero, Some(&u))?;
        matrix.column_mut(j).copy_from_slice(leaves.as_slice());
        u.node_mut(code.node)[code.point] = 0.0;
    }
    Ok(DenseMap {
        matrix,
        row_weights: vec![leaf_weight; n_rows],
        col_weights,
        rows,
        cols,
    })
}

impl DenseMap {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `W_r^{1/2} F W_c^{-1/2}`.
    pub fn weighted(&self) -> DMatrix<f64> {
        let mut m = self.matrix.clone();
        for (j, w) in self.col_weights.iter().enumerate() {
            m.column_mut(j).scale_mut(1.0 / math::sqrt(*w));
        }
        for (i, w) in self.row_weights.iter().enumerate() {
            m.row_mut(i).scale_mut(math::sqrt(*w));
        }
        m
    }

    /// Adjoint of `F` between the weighted spaces: `W_c^{-1} Fᵀ W_r`.
    pub fn weighted_transpose(&self) -> DMatrix<f64> {
        let mut t = self.matrix.transpose();
        for (j, w) in self.row_weights.iter().enumerate() {
            t.column_mut(j).scale_mut(*w);
        }
        for (i, w) in self.col_weights.iter().enumerate() {
            t.row_mut(i).scale_mut(1.0 / w);
        }
        t
    }

    /// Scatters a column-space vector into a control field on `tree`.
    pub fn to_control(
        &self,
        tree: &ScenarioTree,
        n: usize,
        values: &[f64],
    ) -> Result<AdaptedField> {
        check_len("dense control", self.ncols(), values.len())?;
        let mut u = AdaptedField::zeros(tree, n, tree.depth(), FieldRole::Control);
        for (code, v) in self.cols.iter().zip(values) {
            u.node_mut(code.node)[code.point] = *v;
        }
        Ok(u)
    }

    /// Gathers the control degrees of freedom of `u`.
    pub fn from_control(&self, u: &AdaptedField) -> Vec<f64> {
        self.cols.iter().map(|c| u.node(c.node)[c.point]).collect()
    }

    /// Binary dump: magic, `u64` rows and columns, row weights, column
    /// weights, row codebook `(leaf, point)`, column codebook
    /// `(level, index, point)` as `u64`, then the matrix row major. Every
    /// number is little endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (r, c) = (self.nrows(), self.ncols());
        let mut out = Vec::with_capacity(24 + 8 * (r * 3 + c * 4 + r * c));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(r as u64).to_le_bytes());
        out.extend_from_slice(&(c as u64).to_le_bytes());
        for w in self.row_weights.iter().chain(&self.col_weights) {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for code in &self.rows {
            out.extend_from_slice(&(code.leaf as u64).to_le_bytes());
            out.extend_from_slice(&(code.point as u64).to_le_bytes());
        }
        for code in &self.cols {
            for v in [code.node.level, code.node.index, code.point] {
                out.extend_from_slice(&(v as u64).to_le_bytes());
            }
        }
        for i in 0..r {
            for j in 0..c {
                out.extend_from_slice(&self.matrix[(i, j)].to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = Error::InvalidArgument {
            name: "dense map bytes",
            reason: "truncated or malformed",
        };
        if bytes.len() < 24 || &bytes[..8] != MAGIC {
            return Err(bad);
        }
        let mut pos = 8;
        let mut word = || -> Option<[u8; 8]> {
            let w = bytes.get(pos..pos + 8)?.try_into().ok()?;
            pos += 8;
            Some(w)
        };
        let mut read_u = || word().map(|w| u64::from_le_bytes(w) as usize);
        let r = read_u().ok_or(bad.clone())?;
        let c = read_u().ok_or(bad.clone())?;
        let expected = 24 + 8 * (r * 3 + c * 4 + r * c);
        if bytes.len() != expected {
            return Err(bad);
        }
        let f = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let u = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap()) as usize;
        let mut at = 24;
        let mut take = |count: usize| {
            let start = at;
            at += 8 * count;
            start
        };
        let rw = take(r);
        let cw = take(c);
        let rc = take(2 * r);
        let cc = take(3 * c);
        let data = take(r * c);
        Ok(DenseMap {
            row_weights: (0..r).map(|i| f(rw + 8 * i)).collect(),
            col_weights: (0..c).map(|i| f(cw + 8 * i)).collect(),
            rows: (0..r)
                .map(|i| RowCode {
                    leaf: u(rc + 16 * i),
                    point: u(rc + 16 * i + 8),
                })
                .collect(),
            cols: (0..c)
                .map(|i| ColumnCode {
                    node: NodeId::new(u(cc + 24 * i), u(cc + 24 * i + 8)),
                    point: u(cc + 24 * i + 16),
                })
                .collect(),
            matrix: DMatrix::from_row_iterator(r, c, (0..r * c).map(|i| f(data + 8 * i))),
        })
    }
}

/// SVD by one-sided Jacobi rotations: `A V = W` with `V` orthogonal and the
/// columns of `W` mutually orthogonal, `w_j = σ_j u_j`.
///
/// nalgebra's bidiagonalization SVD loses the factorization (reconstruction
/// errors of order `1e-2`) on these maps, whose many exactly repeated and
/// exactly zero singular values come from the tree structure. Jacobi has no
/// such failure mode and is accurate to the relative precision of each
/// singular value.
#[derive(Debug, Clone)]
pub struct JacobiSvd {
    w: DMatrix<f64>,
    v: DMatrix<f64>,
    sigma: Vec<f64>,
}

const JACOBI_SWEEPS: usize = 100;

impl JacobiSvd {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let k = a.ncols();
        let mut w = a;
        let mut v = DMatrix::identity(k, k);
        let tol = f64::EPSILON * w.nrows().max(1) as f64;
        // Columns at rounding level of the whole matrix end up below the rank
        // cutoff anyway; rotating them against each other never settles.
        let negligible = w.norm_squared() * f64::EPSILON * f64::EPSILON;
        for _ in 0..JACOBI_SWEEPS {
            let mut rotated = false;
            for p in 0..k {
                for q in p + 1..k {
                    let alpha = w.column(p).norm_squared();
                    let beta = w.column(q).norm_squared();
                    let gamma = w.column(p).dot(&w.column(q));
                    if alpha <= negligible
                        || beta <= negligible
                        || gamma.abs() <= tol * math::sqrt(alpha * beta)
                    {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + math::sqrt(1.0 + zeta * zeta));
                    let c = 1.0 / math::sqrt(1.0 + t * t);
                    let s = c * t;
                    rotate(&mut w, p, q, c, s);
                    rotate(&mut v, p, q, c, s);
                }
            }
            if !rotated {
                let sigma = (0..k).map(|j| w.column(j).norm()).collect();
                return Ok(JacobiSvd { w, v, sigma });
            }
        }
        Err(Error::NotConverged {
            what: "Jacobi SVD",
            iterations: JACOBI_SWEEPS,
        })
    }

    /// Singular values in column order (not sorted).
    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.iter().cloned().fold(0.0, f64::max)
    }

    /// Singular values above `max(m, n) * ε * σ_max` count as nonzero.
    pub fn cutoff(&self) -> f64 {
        self.sigma_max() * (self.w.nrows().max(self.w.ncols()) as f64) * f64::EPSILON
    }

    pub fn rank(&self) -> usize {
        let eps = self.cutoff();
        self.sigma.iter().filter(|&&s| s > eps).count()
    }

    /// `A⁺ B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let eps = self.cutoff();
        let mut out = DMatrix::zeros(self.v.nrows(), b.ncols());
        for (j, &s) in self.sigma.iter().enumerate() {
            if s <= eps {
                continue;
            }
            // u_j = w_j / σ_j, so u_jᵀ b / σ_j = w_jᵀ b / σ_j².
            let coeff = self.w.column(j).transpose() * b / (s * s);
            out += self.v.column(j) * coeff;
        }
        out
    }
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

/// Oracle solution of the minimal-norm null-control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub control: AdaptedField,
    pub norm: f64,
    /// `||Ã ũ - b̃|| / ||b̃||`.
    pub relative_residual: f64,
    pub rank: usize,
}

/// Minimal-norm least-squares control driving `y0` to zero.
///
/// Fails with [`Error::Unreachable`] when the least-squares residual exceeds
/// [`REACH_TOL`] relative to the free terminal state.
pub fn min_norm_least_squares(system: &ControlSystem<'_>, y0: &[f64]) -> Result<OracleSolution> {
    let map = assemble_control_to_terminal(system)?;
    min_norm_with_map(system, &map, y0)
}

pub fn min_norm_with_map(
    system: &ControlSystem<'_>,
    map: &DenseMap,
    y0: &[f64],
) -> Result<OracleSolution> {
    let tree = system.tree();
    let n = system.grid().n();
    let free = system.terminal(y0, None)?;
    let b = DVector::from_iterator(
        map.nrows(),
        free.as_slice()
            .iter()
            .zip(&map.row_weights)
            .map(|(v, w)| -v * math::sqrt(*w)),
    );
    let a = map.weighted();
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(OracleSolution {
            control: AdaptedField::zeros(tree, n, tree.depth(), FieldRole::Control),
            norm: 0.0,
            relative_residual: 0.0,
            rank: 0,
        });
    }
    let svd = JacobiSvd::new(a.clone())?;
    let rank = svd.rank();
    let x: DVector<f64> = svd
        .solve(&DMatrix::from_column_slice(b.len(), 1, b.as_slice()))
        .column(0)
        .into();
    let relative_residual = (&a * &x - &b).norm() / b_norm;
    if relative_residual > REACH_TOL {
        return Err(Error::Unreachable { relative_residual });
    }
    let values: Vec<f64> = x
        .iter()
        .zip(&map.col_weights)
        .map(|(v, w)| v / math::sqrt(*w))
        .collect();
    let control = map.to_control(tree, n, &values)?;
    Ok(OracleSolution {
        norm: x.norm(),
        control,
        relative_residual,
        rank,
    })
}

/// Agreement between the oracle and an iterative solution.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleComparison {
    pub oracle_norm: f64,
    pub hum_norm: f64,
    pub norm_relative_error: f64,
    /// `||u_oracle - u_hum|| / ||u_oracle||` in the process norm.
    pub control_relative_error: f64,
    pub oracle_residual: f64,
    pub rank: usize,
    pub pass: bool,
}

/// Compares an iterative control and norm against the oracle.
pub fn compare(
    system: &ControlSystem<'_>,
    y0: &[f64],
    hum_control: &AdaptedField,
    hum_norm: f64,
) -> Result<OracleComparison> {
    let oracle = min_norm_least_squares(system, y0)?;
    let mut diff = oracle.control.clone();
    diff.add_scaled(-1.0, hum_control)?;
    let diff_norm = process_norm(system.tree(), system.grid(), &diff)?;
    let scale = oracle.norm.max(f64::MIN_POSITIVE);
    let norm_relative_error = (oracle.norm - hum_norm).abs() / scale;
    let control_relative_error = diff_norm / scale;
    Ok(OracleComparison {
        oracle_norm: oracle.norm,
        hum_norm,
        norm_relative_error,
        control_relative_error,
        oracle_residual: oracle.relative_residual,
        rank: oracle.rank,
        pass: norm_relative_error <= COMPARE_TOL && control_relative_error <= COMPARE_TOL,
    })
}

/// Observability constant as `sup_y N(T, y)² / ||y||²`, i.e. the squared
/// largest singular value of `Ã⁺ Φ̃`, where `Φ̃` is the weighted free
/// evolution `y0 ↦ -y(T; y0, 0)`.
///
/// Requires every initial state to be null controllable; otherwise the
/// supremum is infinite and [`Error::Unreachable`] is returned.
pub fn observability_constant(system: &ControlSystem<'_>) -> Result<f64> {
    let map = assemble_control_to_terminal(system)?;
    let grid = system.grid();
    let n = grid.n();
    let mut phi = DMatrix::zeros(map.nrows(), n);
    let mut e = vec![0.0; n];
    let scale = 1.0 / math::sqrt(grid.h());
    for i in 0..n {
        e[i] = scale;
        let leaves = system.terminal(&e, None)?;
        for (r, (v, w)) in leaves.as_slice().iter().zip(&map.row_weights).enumerate() {
            phi[(r, i)] = -v * math::sqrt(*w);
        }
        e[i] = 0.0;
    }
    let a = map.weighted();
    let x = JacobiSvd::new(a.clone())?.solve(&phi);
    let relative_residual = (&a * &x - &phi).norm() / phi.norm();
    if relative_residual > REACH_TOL {
        return Err(Error::Unreachable { relative_residual });
    }
    let sigma = JacobiSvd::new(x)?.sigma_max();
    Ok(sigma * sigma)
}

/// `L* η` computed from the dense map, for cross-checking the adjoint.
pub fn dense_adjoint_apply(
    map: &DenseMap,
    tree: &ScenarioTree,
    grid: &SpatialGrid,
    eta: &TerminalData,
) -> Result<AdaptedField> {
    eta.check_layout(tree, grid.n())?;
    let v = map.weighted_transpose() * DVector::from_column_slice(eta.as_slice());
    map.to_control(tree, grid.n(), v.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::CoefficientProcess;

    #[test]
    fn single_point_single_step_by_hand() {
        // n = 1: y_c = (1 ± a√dt) (y0 + dt u) / (1 + 2dt/h²).
        let (dt, a) = (0.1, 0.3);
        let tree = ScenarioTree::binomial(1, dt).unwrap();
        let grid = SpatialGrid::new(1, 1.0, 0.0, 1.0).unwrap();
        let coeff = CoefficientProcess::Constant(a);
        let system = ControlSystem::new(&tree, &grid, &coeff).unwrap();
        let map = assemble_control_to_terminal(&system).unwrap();
        let h = grid.h();
        let base = dt / (1.0 + 2.0 * dt / (h * h));
        let s = dt.sqrt();
        assert_eq!((map.nrows(), map.ncols()), (2, 1));
        assert!((map.matrix[(0, 0)] - (1.0 - a * s) * base).abs() < 1e-15);
        assert!((map.matrix[(1, 0)] - (1.0 + a * s) * base).abs() < 1e-15);
        // The exact control u = -y0/dt is the only one.
        let sol = min_norm_least_squares(&system, &[2.0]).unwrap();
        assert!((sol.control.as_slice()[0] + 20.0).abs() < 1e-12);
        assert!((sol.norm - (dt * h).sqrt() * 20.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_transpose_matches_adjoint() {
        let tree = ScenarioTree::binomial(3, 0.1).unwrap();
        let grid = SpatialGrid::new(4, 1.0, 0.2, 0.8).unwrap();
        let coeff = CoefficientProcess::PerLevel(vec![0.3, -0.2, 0.5]);
        let system = ControlSystem::new(&tree, &grid, &coeff).unwrap();
        let map = assemble_control_to_terminal(&system).unwrap();
        let eta = TerminalData::from_fn(&tree, 4, |k, i| ((3 * k + i) as f64).sin());
        let dense = dense_adjoint_apply(&map, &tree, &grid, &eta).unwrap();
        let direct = system.observe_terminal(&eta).unwrap();
        let err = dense
            .as_slice()
            .iter()
            .zip(direct.as_slice())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err < 1e-12 * direct.max_abs());
    }

    #[test]
    fn jacobi_reconstructs_rank_deficient_matrix() {
        // Two identical columns, one zero column.
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let svd = JacobiSvd::new(a.clone()).unwrap();
        assert_eq!(svd.rank(), 1);
        assert!((svd.sigma_max() - 10f64.sqrt()).abs() < 1e-14);
        let x = svd.solve(&DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 0.0]));
        // Minimal-norm solution splits evenly between the twin columns.
        assert!((x[(0, 0)] - 0.5).abs() < 1e-14 && (x[(1, 0)] - 0.5).abs() < 1e-14);
        assert_eq!(x[(2, 0)], 0.0);
    }

    #[test]
    fn bytes_round_trip() {
        let tree = ScenarioTree::binomial(2, 0.2).unwrap();
        let grid = SpatialGrid::new(3, 1.0, 0.3, 0.7).unwrap();
        let coeff = CoefficientProcess::Constant(0.3);
        let system = ControlSystem::new(&tree, &grid, &coeff).unwrap();
        let map = assemble_control_to_terminal(&system).unwrap();
        let bytes = map.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(DenseMap::from_bytes(&bytes).unwrap(), map);
        assert!(DenseMap::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn row_cap_is_enforced() {
        let tree = ScenarioTree::binomial(4, 0.1).unwrap();
        let grid = SpatialGrid::new(4, 1.0, 0.2, 0.8).unwrap();
        let coeff = CoefficientProcess::Constant(0.3);
        let system = ControlSystem::new(&tree, &grid, &coeff).unwrap();
        let err = assemble_with_cap(&system, 32).unwrap_err();
        assert_eq!(err, Error::DenseCapExceeded { rows: 64, cap: 32 });
    }

    #[test]
    fn uncovered_point_in_one_step_is_unreachable() {
        let tree = ScenarioTree::binomial(1, 0.1).unwrap();
        let grid = SpatialGrid::new(4, 1.0, 0.3, 0.7).unwrap();
        let coeff = CoefficientProcess::Constant(0.3);
        let system = ControlSystem::new(&tree, &grid, &coeff).unwrap();
        let err = min_norm_least_squares(&system, &grid.sine_mode(1)).unwrap_err();
        assert!(matches!(err, Error::Unreachable { .. }));
    }
}
