//! The norm function `T ↦ N(T, y0)`, minimal time by bisection, the
//! time/norm equivalence and the bang-bang check.
//!
//! `N(·, y0)` is strictly decreasing and continuous, so `T(N0, y0)` is the
//! unique horizon with `N(T, y0) = N0` and bisection on the predicate
//! `N(T) <= N0` converges to it. The admissible set is read with the
//! integrated bound `||u||_{L^2_F(0,T;L^2(D))} <= N`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::AdaptedField;
use crate::forward::{CoefficientProcess, ControlSystem};
use crate::grid::{process_norm, SpatialField, SpatialGrid};
use crate::hum::{HumOptions, HumResult, DEFAULT_EPS_LADDER};
use crate::math;
use crate::tree::{Branching, NodeId, ScenarioTree};

/// How a tree is built for a given horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum HorizonPolicy {
    /// `depth = max(1, round(T / dt))`; horizons are multiples of `dt`.
    FixedDt(f64),
    /// `dt = T / depth`; horizons vary continuously.
    FixedDepth(usize),
}

/// Noise coefficient as a function of time, mapped onto any tree.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CoefficientSchedule {
    Constant(f64),
    /// `a(t) = values[j]` on `[starts[j], starts[j + 1])`; `starts[0] = 0`.
    Piecewise {
        starts: Vec<f64>,
        values: Vec<f64>,
    },
    /// A process tied to one tree; only usable at that tree's depth.
    Fixed(CoefficientProcess),
}

impl CoefficientSchedule {
    pub fn on_tree(&self, tree: &ScenarioTree) -> Result<CoefficientProcess> {
        let process = match self {
            CoefficientSchedule::Constant(a) => CoefficientProcess::Constant(*a),
            CoefficientSchedule::Piecewise { starts, values } => {
                if starts.len() != values.len() || starts.is_empty() {
                    return Err(Error::InvalidArgument {
                        name: "coefficient schedule",
                        reason: "needs one value per start time",
                    });
                }
                let per_level = (0..tree.depth())
                    .map(|l| {
                        let t = l as f64 * tree.dt();
                        let j = starts.iter().rposition(|&s| s <= t + 1e-12).unwrap_or(0);
                        values[j]
                    })
                    .collect();
                CoefficientProcess::PerLevel(per_level)
            }
            CoefficientSchedule::Fixed(p) => p.clone(),
        };
        process.validate(tree)?;
        Ok(process)
    }
}

/// Everything that defines `N(·, y0)` except the horizon.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormProblem {
    pub grid: SpatialGrid,
    pub coefficient: CoefficientSchedule,
    pub y0: SpatialField,
    pub policy: HorizonPolicy,
    pub branching: Branching,
    pub hum: HumOptions,
    /// Regularization levels used when the unregularized solve stalls.
    pub eps_ladder: Vec<f64>,
}

/// One HUM solve at a given horizon.
#[derive(Debug, Clone)]
pub struct NormSolve {
    pub tree: ScenarioTree,
    pub coefficient: CoefficientProcess,
    pub result: HumResult,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormSample {
    /// Horizon actually used (`depth * dt`).
    pub horizon: f64,
    pub depth: usize,
    pub dt: f64,
    pub norm: f64,
    pub value: f64,
    pub duality_gap: f64,
    pub cg_iterations: usize,
    pub converged: bool,
    pub regularization_eps: f64,
    pub terminal_residual: f64,
}

/// `N(T, y0)` as reported by a solve: the extrapolated value when the
/// regularization ladder was used, the control norm otherwise.
pub fn effective_norm(r: &HumResult) -> f64 {
    r.extrapolated_norm.unwrap_or(r.norm_n)
}

impl NormSample {
    fn from_solve(s: &NormSolve) -> Self {
        let r = &s.result;
        NormSample {
            horizon: s.tree.horizon(),
            depth: s.tree.depth(),
            dt: s.tree.dt(),
            norm: effective_norm(r),
            value: r.value_v,
            duality_gap: r.duality_gap,
            cg_iterations: r.cg_iterations,
            converged: r.converged,
            regularization_eps: r.regularization_eps,
            terminal_residual: r.terminal_residual,
        }
    }

    pub fn relative_gap(&self) -> f64 {
        if self.norm > 0.0 {
            self.duality_gap / (self.norm * self.norm)
        } else {
            self.duality_gap
        }
    }
}

impl NormProblem {
    /// Problem with default solver settings and the standard regularization ladder.
    pub fn new(
        grid: SpatialGrid,
        coefficient: CoefficientSchedule,
        y0: SpatialField,
        policy: HorizonPolicy,
    ) -> Self {
        NormProblem {
            grid,
            coefficient,
            y0,
            policy,
            branching: Branching::Binary,
            hum: HumOptions::default(),
            eps_ladder: DEFAULT_EPS_LADDER.to_vec(),
        }
    }

    pub fn tree(&self, horizon: f64) -> Result<ScenarioTree> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument {
                name: "horizon",
                reason: "must be positive and finite",
            });
        }
        let (depth, dt) = match self.policy {
            HorizonPolicy::FixedDt(dt) => ((math::round(horizon / dt) as usize).max(1), dt),
            HorizonPolicy::FixedDepth(depth) => (depth, horizon / depth as f64),
        };
        ScenarioTree::with_cap(depth, dt, self.branching, crate::tree::DEFAULT_NODE_CAP)
    }

    pub fn solve_on(&self, tree: ScenarioTree) -> Result<NormSolve> {
        let coefficient = self.coefficient.on_tree(&tree)?;
        let system = ControlSystem::new(&tree, &self.grid, &coefficient)?;
        let result = system.minimize_with_ladder(&self.y0, &self.hum, &self.eps_ladder)?;
        Ok(NormSolve {
            tree,
            coefficient,
            result,
        })
    }

    pub fn solve(&self, horizon: f64) -> Result<NormSolve> {
        self.solve_on(self.tree(horizon)?)
    }

    pub fn sample(&self, horizon: f64) -> Result<NormSample> {
        Ok(NormSample::from_solve(&self.solve(horizon)?))
    }

    /// `N(T, y0)`.
    pub fn norm_at(&self, horizon: f64) -> Result<f64> {
        Ok(self.sample(horizon)?.norm)
    }

    /// Same problem with the initial state multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.y0.iter_mut().for_each(|v| *v *= alpha);
        out
    }
}

/// Sampled norm function.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormCurve {
    pub samples: Vec<NormSample>,
}

impl NormCurve {
    /// Indices `i` with `N(T_{i+1}) >= N(T_i)`.
    pub fn monotonicity_violations(&self) -> Vec<usize> {
        self.samples
            .windows(2)
            .enumerate()
            .filter(|(_, w)| !(w[1].norm < w[0].norm))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.monotonicity_violations().is_empty()
    }

    pub fn all_converged(&self) -> bool {
        self.samples.iter().all(|s| s.converged)
    }

    /// `N(first) / N(last)`.
    pub fn limit_ratio(&self) -> Option<f64> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        (last.norm > 0.0).then(|| first.norm / last.norm)
    }

    /// Largest secant slope `|ΔN / ΔT|` between neighbouring samples.
    pub fn lipschitz_estimate(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| ((w[1].norm - w[0].norm) / (w[1].horizon - w[0].horizon)).abs())
            .fold(0.0, f64::max)
    }

    pub fn find(&self, horizon: f64) -> Option<&NormSample> {
        self.samples
            .iter()
            .find(|s| (s.horizon - horizon).abs() <= 1e-9 * horizon.max(1.0))
    }
}

/// Evaluates `N(T, y0)` for every horizon of a strictly increasing list.
pub fn sweep_norm_function(problem: &NormProblem, horizons: &[f64]) -> Result<NormCurve> {
    check_horizons(problem, horizons)?;
    let samples = horizons
        .iter()
        .map(|&t| problem.sample(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(NormCurve { samples })
}

/// Rejects horizon lists that are not strictly increasing after the policy
/// maps them onto trees.
pub fn check_horizons(problem: &NormProblem, horizons: &[f64]) -> Result<()> {
    if horizons.is_empty() {
        return Err(Error::InvalidArgument {
            name: "horizons",
            reason: "list is empty",
        });
    }
    let mut previous = 0.0;
    for &t in horizons {
        let actual = problem.tree(t)?.horizon();
        if !(actual > previous) {
            return Err(Error::InvalidArgument {
                name: "horizons",
                reason: "must be strictly increasing (after rounding to the time step)",
            });
        }
        previous = actual;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BisectionOptions {
    /// Stop once `T_hi - T_lo <= time_tol`.
    pub time_tol: f64,
    /// Also require `N(T_lo) - N(T_hi) <= norm_rel_tol * N0`; zero disables.
    pub norm_rel_tol: f64,
    /// Doublings (or halvings) allowed when the bracket is wrong.
    pub expand_cap: usize,
    pub max_steps: usize,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        BisectionOptions {
            time_tol: 1e-3,
            norm_rel_tol: 0.0,
            expand_cap: 8,
            max_steps: 200,
        }
    }
}

/// The zero extension of a control beyond its horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ZeroExtension {
    /// The control is the stored one on `(0, from)` and zero afterwards.
    pub from: f64,
}

#[derive(Debug, Clone)]
pub struct TimeOptimalResult {
    pub n0: f64,
    pub t_star: f64,
    pub bracket: (f64, f64),
    /// `(N(T_lo), N(T_hi))` for the final bracket.
    pub bracket_norms: (f64, f64),
    pub bisection_tol: f64,
    /// `N0 >= N(T_lo)` even after shrinking: `T*` is at or below the edge.
    pub at_bracket_edge: bool,
    pub evaluations: usize,
    /// Bisection midpoints that fell outside the current norm bracket.
    pub monotonicity_violations: usize,
    /// Local slope `|ΔN/ΔT|` of the final bracket.
    pub lipschitz: f64,
    /// `lipschitz * bisection_tol`.
    pub norm_tolerance: f64,
    /// HUM solve at `T*`; its control is the time-optimal control on `(0, T*)`.
    pub solve: NormSolve,
    pub extension: ZeroExtension,
    /// `sqrt(E ||χ_G u*(t_l)||²)` for each level.
    pub bang_bang_profile: Vec<f64>,
}

impl TimeOptimalResult {
    pub fn u_star_restricted(&self) -> &AdaptedField {
        &self.solve.result.u_star
    }

    pub fn norm_at_t_star(&self) -> f64 {
        effective_norm(&self.solve.result)
    }
}

/// Computes `T(N0, y0)` by bisection on `N(T) <= N0`.
pub fn optimal_time(
    problem: &NormProblem,
    n0: f64,
    bracket: (f64, f64),
    opts: &BisectionOptions,
) -> Result<TimeOptimalResult> {
    if !(n0 > 0.0) {
        return Err(Error::InvalidArgument {
            name: "N0",
            reason: "must be positive",
        });
    }
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidArgument {
            name: "bracket",
            reason: "need 0 < T_lo < T_hi",
        });
    }
    if !(opts.time_tol > 0.0) {
        return Err(Error::InvalidArgument {
            name: "bisection_tol",
            reason: "must be positive",
        });
    }
    if let HorizonPolicy::FixedDt(dt) = problem.policy {
        return optimal_depth(problem, n0, bracket, dt, opts);
    }

    let mut evaluations = 0;
    let mut eval = |t: f64| -> Result<f64> {
        evaluations += 1;
        problem.norm_at(t)
    };
    let mut n_lo = eval(lo)?;
    let mut n_hi = eval(hi)?;

    let mut grow = 0;
    while n_hi > n0 {
        if grow == opts.expand_cap {
            return Err(Error::BracketNotFound {
                reason: "N(T_hi) stays above N0 after expanding the horizon",
            });
        }
        lo = hi;
        n_lo = n_hi;
        hi *= 2.0;
        n_hi = eval(hi)?;
        grow += 1;
    }
    let mut shrink = 0;
    let mut at_edge = false;
    while n_lo <= n0 {
        if shrink == opts.expand_cap {
            at_edge = true;
            break;
        }
        hi = lo;
        n_hi = n_lo;
        lo *= 0.5;
        n_lo = eval(lo)?;
        shrink += 1;
    }

    let mut violations = 0;
    let mut steps = 0;
    if !at_edge {
        loop {
            let time_ok = hi - lo <= opts.time_tol;
            let norm_ok = opts.norm_rel_tol <= 0.0 || n_lo - n_hi <= opts.norm_rel_tol * n0;
            if (time_ok && norm_ok) || steps == opts.max_steps {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let n_mid = eval(mid)?;
            if n_mid > n_lo || n_mid < n_hi {
                violations += 1;
            }
            if n_mid <= n0 {
                hi = mid;
                n_hi = n_mid;
            } else {
                lo = mid;
                n_lo = n_mid;
            }
            steps += 1;
        }
    }

    let t_star = if at_edge { lo } else { 0.5 * (lo + hi) };
    let solve = problem.solve(t_star)?;
    evaluations += 1;
    let lipschitz = if hi > lo {
        (n_lo - n_hi).abs() / (hi - lo)
    } else {
        0.0
    };
    finish(
        problem,
        n0,
        t_star,
        (lo, hi),
        (n_lo, n_hi),
        opts.time_tol,
        at_edge,
        evaluations,
        violations,
        lipschitz,
        solve,
    )
}

/// Integer bisection over depths for the fixed-step policy; `T*` is the
/// smallest multiple of `dt` with `N <= N0`.
fn optimal_depth(
    problem: &NormProblem,
    n0: f64,
    bracket: (f64, f64),
    dt: f64,
    opts: &BisectionOptions,
) -> Result<TimeOptimalResult> {
    let mut evaluations = 0;
    let mut eval = |d: usize| -> Result<f64> {
        evaluations += 1;
        problem.norm_at(d as f64 * dt)
    };
    let mut lo = (math::round(bracket.0 / dt) as usize).max(1);
    let mut hi = (math::round(bracket.1 / dt) as usize).max(lo + 1);
    let mut n_lo = eval(lo)?;
    let mut n_hi = eval(hi)?;
    let mut grow = 0;
    while n_hi > n0 {
        if grow == opts.expand_cap {
            return Err(Error::BracketNotFound {
                reason: "N(T_hi) stays above N0 after expanding the horizon",
            });
        }
        lo = hi;
        n_lo = n_hi;
        hi *= 2;
        n_hi = eval(hi)?;
        grow += 1;
    }
    let at_edge = n_lo <= n0;
    let mut violations = 0;
    if !at_edge {
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let n_mid = eval(mid)?;
            if n_mid > n_lo || n_mid < n_hi {
                violations += 1;
            }
            if n_mid <= n0 {
                hi = mid;
                n_hi = n_mid;
            } else {
                lo = mid;
                n_lo = n_mid;
            }
        }
    }
    let star = if at_edge { lo } else { hi };
    let solve = problem.solve(star as f64 * dt)?;
    evaluations += 1;
    let lipschitz = (n_lo - n_hi).abs() / ((hi - lo).max(1) as f64 * dt);
    finish(
        problem,
        n0,
        star as f64 * dt,
        (lo as f64 * dt, hi as f64 * dt),
        (n_lo, n_hi),
        dt.max(opts.time_tol),
        at_edge,
        evaluations,
        violations,
        lipschitz,
        solve,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &NormProblem,
    n0: f64,
    t_star: f64,
    bracket: (f64, f64),
    bracket_norms: (f64, f64),
    bisection_tol: f64,
    at_bracket_edge: bool,
    evaluations: usize,
    monotonicity_violations: usize,
    lipschitz: f64,
    solve: NormSolve,
) -> Result<TimeOptimalResult> {
    let profile = level_profile(&solve.tree, &problem.grid, &solve.result.u_star)?;
    Ok(TimeOptimalResult {
        n0,
        t_star,
        bracket,
        bracket_norms,
        bisection_tol,
        at_bracket_edge,
        evaluations,
        monotonicity_violations,
        lipschitz,
        norm_tolerance: lipschitz * bisection_tol,
        extension: ZeroExtension {
            from: solve.tree.horizon(),
        },
        solve,
        bang_bang_profile: profile,
    })
}

/// `m(l) = sqrt(E ||χ_G u(t_l)||²)` for `l = 0..depth`.
pub fn level_profile(
    tree: &ScenarioTree,
    grid: &SpatialGrid,
    u: &AdaptedField,
) -> Result<Vec<f64>> {
    u.check_layout(tree, grid.n(), tree.depth())?;
    let h = grid.h();
    Ok((0..tree.depth())
        .map(|level| {
            let mut total = 0.0;
            for k in 0..tree.nodes_at(level) {
                let v = u.node(NodeId::new(level, k));
                total += v
                    .iter()
                    .zip(grid.mask())
                    .filter(|(_, &m)| m)
                    .map(|(x, _)| x * x)
                    .sum::<f64>();
            }
            math::sqrt(h * total * tree.level_probability(level))
        })
        .collect())
}

/// Default relative floor for the per-level norm.
pub const DEFAULT_BB_FLOOR: f64 = 1e-10;
/// Relative tolerance on `||χ_G u*|| = N`.
pub const BB_NORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BangBangStatus {
    Pass,
    Fail,
    /// Zero control (`y0 = 0`); the property has no content.
    Vacuous,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BangBangReport {
    pub profile: Vec<f64>,
    pub min_level_norm: f64,
    pub max_level_norm: f64,
    pub floor: f64,
    pub integrated_norm: f64,
    pub expected_norm: f64,
    pub norm_relative_error: f64,
    pub status: BangBangStatus,
}

/// Checks `||χ_G u|| = N` and `m(l) > floor_rel * max m` for every level.
pub fn check_bang_bang(
    tree: &ScenarioTree,
    grid: &SpatialGrid,
    control: &AdaptedField,
    expected_norm: f64,
    floor_rel: f64,
) -> Result<BangBangReport> {
    let profile = level_profile(tree, grid, control)?;
    let max = profile.iter().cloned().fold(0.0, f64::max);
    let min = profile.iter().cloned().fold(f64::INFINITY, f64::min);
    let integrated = math::sqrt(profile.iter().map(|m| tree.dt() * m * m).sum());
    let floor = floor_rel * max;
    let norm_relative_error = if expected_norm > 0.0 {
        (integrated - expected_norm).abs() / expected_norm
    } else {
        integrated
    };
    let status = if max == 0.0 {
        BangBangStatus::Vacuous
    } else if norm_relative_error <= BB_NORM_TOL && min > floor {
        BangBangStatus::Pass
    } else {
        BangBangStatus::Fail
    };
    Ok(BangBangReport {
        profile,
        min_level_norm: min,
        max_level_norm: max,
        floor,
        integrated_norm: integrated,
        expected_norm,
        norm_relative_error,
        status,
    })
}

/// Bang-bang check of a HUM control against its own norm.
pub fn bang_bang_of(solve: &NormSolve, grid: &SpatialGrid) -> Result<BangBangReport> {
    check_bang_bang(
        &solve.tree,
        grid,
        &solve.result.u_star,
        solve.result.norm_n,
        DEFAULT_BB_FLOOR,
    )
}

/// Tolerances of the equivalence pipeline.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquivalenceOptions {
    pub null_reach_tol: f64,
    pub norm_rel_tol: f64,
    pub bisection: BisectionOptions,
    /// Levels simulated after the horizon with zero control.
    pub extension_levels: usize,
}

impl Default for EquivalenceOptions {
    fn default() -> Self {
        EquivalenceOptions {
            null_reach_tol: 1e-6,
            norm_rel_tol: 1e-6,
            bisection: BisectionOptions {
                norm_rel_tol: 5e-7,
                ..BisectionOptions::default()
            },
            extension_levels: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquivalenceReport {
    pub horizon: f64,
    pub norm: f64,
    /// Largest leaf norm after the horizon under the zero-extended control,
    /// relative to `||y0||`.
    pub extension_residual: f64,
    /// Norm of the zero-extended control on the extended horizon.
    pub extension_norm: f64,
    pub extension_pass: bool,
    pub recovered_time: f64,
    pub time_error: f64,
    pub time_tolerance: f64,
    pub time_pass: bool,
    /// Norm of the time-optimal control for `N0 = N(T, y0)`.
    pub restriction_norm: f64,
    pub restriction_relative_error: f64,
    pub restriction_pass: bool,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.extension_pass && self.time_pass && self.restriction_pass
    }
}

/// Checks the time/norm equivalence at horizon `T`:
///
/// 1. the zero extension of the minimal-norm control keeps the state at zero
///    and has norm `N(T, y0)`;
/// 2. `T(N(T, y0), y0)` recovers `T`;
/// 3. the time-optimal control for that budget has norm `N(T, y0)`.
pub fn equivalence_check(
    problem: &NormProblem,
    horizon: f64,
    opts: &EquivalenceOptions,
) -> Result<EquivalenceReport> {
    let solve = problem.solve(horizon)?;
    let norm = effective_norm(&solve.result);
    let y0_norm = problem.grid.norm(&problem.y0)?;

    let extra = opts.extension_levels.max(1);
    let ext_tree = solve.tree.extended(extra)?;
    let ext_control = solve.result.u_star.zero_extended(extra);
    let ext_coefficient = match &solve.coefficient {
        CoefficientProcess::Constant(a) => CoefficientProcess::Constant(*a),
        CoefficientProcess::PerLevel(v) => {
            let mut v = v.clone();
            v.resize(ext_tree.depth(), *v.last().unwrap_or(&0.0));
            CoefficientProcess::PerLevel(v)
        }
        CoefficientProcess::PerNode(v) => {
            let mut v = v.clone();
            v.resize(ext_tree.level_offset(ext_tree.depth()), 0.0);
            CoefficientProcess::PerNode(v)
        }
    };
    let ext_system = ControlSystem::new(&ext_tree, &problem.grid, &ext_coefficient)?;
    let state = ext_system.forward(&problem.y0, Some(&ext_control))?;
    let mut worst: f64 = 0.0;
    for level in solve.tree.depth()..=ext_tree.depth() {
        for k in 0..ext_tree.nodes_at(level) {
            worst = worst.max(problem.grid.norm(state.node(NodeId::new(level, k)))?);
        }
    }
    let extension_residual = if y0_norm > 0.0 {
        worst / y0_norm
    } else {
        worst
    };
    let extension_norm = process_norm(&ext_tree, &problem.grid, &ext_control)?;
    let control_norm = solve.result.norm_n;
    let extension_pass = extension_residual <= opts.null_reach_tol
        && (extension_norm - control_norm).abs() <= 1e-12 * control_norm.max(f64::MIN_POSITIVE);

    let t = solve.tree.horizon();
    let time = optimal_time(problem, norm, (0.5 * t, 2.0 * t), &opts.bisection)?;
    let time_tolerance = 2.0 * time.bisection_tol;
    let time_error = (time.t_star - t).abs();
    let restriction_norm = time.norm_at_t_star();
    let restriction_relative_error = (restriction_norm - norm).abs() / norm;

    Ok(EquivalenceReport {
        horizon: t,
        norm,
        extension_residual,
        extension_norm,
        extension_pass,
        recovered_time: time.t_star,
        time_error,
        time_tolerance,
        time_pass: time_error <= time_tolerance,
        restriction_norm,
        restriction_relative_error,
        restriction_pass: restriction_relative_error <= opts.norm_rel_tol,
    })
}
