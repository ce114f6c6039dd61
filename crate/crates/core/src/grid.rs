//! Finite-difference discretization of `D = (0, L)` with homogeneous
//! Dirichlet conditions.
//!
//! Interior points sit at `x_i = (i + 1) h`, `h = L / (n + 1)`. The `L^2(D)`
//! product is the composite rectangle rule `h * sum f_i g_i`. The control
//! region is the closed interval `[control_lo, control_hi]` sampled at the
//! grid points, with a tolerance of `1e-9 h` so that grid points landing on
//! an endpoint up to rounding are members.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use crate::error::{check_len, Error, Result};
use crate::field::AdaptedField;
use crate::math;
use crate::tree::ScenarioTree;

/// Values of a function at the interior grid points.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct SpatialField(pub Vec<f64>);

impl SpatialField {
    pub fn zeros(n: usize) -> Self {
        SpatialField(vec![0.0; n])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for SpatialField {
    fn from(v: Vec<f64>) -> Self {
        SpatialField(v)
    }
}

impl Deref for SpatialField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for SpatialField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpatialGrid {
    n: usize,
    length: f64,
    h: f64,
    control_lo: f64,
    control_hi: f64,
    mask: Vec<bool>,
}

impl SpatialGrid {
    pub fn new(n: usize, length: f64, control_lo: f64, control_hi: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument {
                name: "n",
                reason: "need at least one interior point",
            });
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidArgument {
                name: "length",
                reason: "must be positive and finite",
            });
        }
        if !(control_lo < control_hi) {
            return Err(Error::InvalidArgument {
                name: "control region",
                reason: "g_lo must be strictly below g_hi",
            });
        }
        if control_lo < 0.0 || control_hi > length {
            return Err(Error::InvalidArgument {
                name: "control region",
                reason: "must lie inside [0, L]",
            });
        }
        let h = length / (n + 1) as f64;
        let slack = 1e-9 * h;
        let mask = (0..n)
            .map(|i| {
                let x = (i + 1) as f64 * h;
                x >= control_lo - slack && x <= control_hi + slack
            })
            .collect();
        Ok(SpatialGrid {
            n,
            length,
            h,
            control_lo,
            control_hi,
            mask,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Rectangle-rule weight of each interior point.
    pub fn quad_weight(&self) -> f64 {
        self.h
    }

    pub fn control_region(&self) -> (f64, f64) {
        (self.control_lo, self.control_hi)
    }

    pub fn point(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.h
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.point(i))
    }

    /// Indicator of the control region at each grid point.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Indices of the grid points inside the control region.
    pub fn control_points(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    pub fn control_point_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Eigenvalue of `-Δ_h` for the discrete sine mode `k >= 1`:
    /// `(2/h^2)(1 - cos(k π h / L))`.
    pub fn dirichlet_eigenvalue(&self, k: usize) -> f64 {
        let theta = core::f64::consts::PI * k as f64 * self.h / self.length;
        2.0 / (self.h * self.h) * (1.0 - math::cos(theta))
    }

    /// Discrete sine mode `sin(k π x_i / L)`.
    pub fn sine_mode(&self, k: usize) -> SpatialField {
        let w = core::f64::consts::PI * k as f64 / self.length;
        self.points()
            .map(|x| math::sin(w * x))
            .collect::<Vec<_>>()
            .into()
    }

    pub fn laplacian_apply(&self, f: &[f64]) -> Result<SpatialField> {
        let mut out = SpatialField::zeros(self.n);
        self.laplacian_into(f, &mut out)?;
        Ok(out)
    }

    pub(crate) fn laplacian_into(&self, f: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("spatial field", self.n, f.len())?;
        check_len("spatial field", self.n, out.len())?;
        let inv_h2 = 1.0 / (self.h * self.h);
        for i in 0..self.n {
            let left = if i > 0 { f[i - 1] } else { 0.0 };
            let right = if i + 1 < self.n { f[i + 1] } else { 0.0 };
            out[i] = (left - 2.0 * f[i] + right) * inv_h2;
        }
        Ok(())
    }

    /// Multiplication by the indicator of the control region.
    pub fn control_mask(&self, f: &[f64]) -> Result<SpatialField> {
        check_len("spatial field", self.n, f.len())?;
        let mut out = SpatialField(f.to_vec());
        self.mask_in_place(&mut out);
        Ok(out)
    }

    pub(crate) fn mask_in_place(&self, f: &mut [f64]) {
        for (v, &m) in f.iter_mut().zip(&self.mask) {
            if !m {
                *v = 0.0;
            }
        }
    }

    pub fn inner_product(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        check_len("spatial field", self.n, f.len())?;
        check_len("spatial field", self.n, g.len())?;
        Ok(self.h * math::dot(f, g))
    }

    pub fn norm(&self, f: &[f64]) -> Result<f64> {
        Ok(math::sqrt(self.inner_product(f, f)?))
    }
}

/// `sqrt( sum_{l < depth} dt * E <p(l), p(l)> )`, the discrete
/// `L^2_F(0, T; L^2(D))` norm with left-endpoint quadrature in time.
pub fn process_norm(tree: &ScenarioTree, grid: &SpatialGrid, p: &AdaptedField) -> Result<f64> {
    Ok(math::sqrt(process_norm_sq(tree, grid, p)?))
}

pub fn process_norm_sq(tree: &ScenarioTree, grid: &SpatialGrid, p: &AdaptedField) -> Result<f64> {
    process_inner(tree, grid, p, p)
}

/// `sum_{l < depth} dt * E <p(l), q(l)>`.
pub fn process_inner(
    tree: &ScenarioTree,
    grid: &SpatialGrid,
    p: &AdaptedField,
    q: &AdaptedField,
) -> Result<f64> {
    p.check_layout(tree, grid.n(), tree.depth())?;
    q.check_layout(tree, grid.n(), tree.depth())?;
    let mut total = 0.0;
    for level in 0..tree.depth() {
        let w = tree.dt() * tree.level_probability(level) * grid.h();
        total += w * math::dot(p.level(level), q.level(level));
    }
    Ok(total)
}

/// Tridiagonal factorization of `I - dt Δ_h`, reused for every node.
#[derive(Debug, Clone)]
pub struct ImplicitStep {
    /// Off-diagonal entry `-dt / h^2`.
    off: f64,
    /// Modified super-diagonal of the forward sweep.
    c_prime: Vec<f64>,
    /// Reciprocal pivots of the forward sweep.
    inv_pivot: Vec<f64>,
}

impl ImplicitStep {
    pub fn new(grid: &SpatialGrid, dt: f64) -> Self {
        let n = grid.n();
        let r = dt / (grid.h() * grid.h());
        let diag = 1.0 + 2.0 * r;
        let off = -r;
        let mut c_prime = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let pivot = diag - off * prev_c;
            inv_pivot[i] = 1.0 / pivot;
            c_prime[i] = off / pivot;
            prev_c = c_prime[i];
        }
        ImplicitStep {
            off,
            c_prime,
            inv_pivot,
        }
    }

    /// Overwrites `rhs` with `(I - dt Δ_h)^{-1} rhs`.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        debug_assert_eq!(n, self.c_prime.len());
        if n == 0 {
            return;
        }
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.off * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
    }
}
