//! Built-in selftest on a pinned small problem: n = 8, depth 5, dt = 0.1,
//! G = [0.1, 0.9], a = 0.3, y0 = x²(1 - x).
//!
//! Checks that draw random inputs use a ChaCha stream seeded by `--prop-seed`
//! and are skipped under `--seedless`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stochum_core::grid::process_inner;
use stochum_core::optimal_time::bang_bang_of;
use stochum_core::{
    initial_pairing, observe, oracle, solve_adjoint, solve_forward, terminal_state, AdaptedField,
    CoefficientProcess, CoefficientSchedule, ControlSystem, FieldRole, HorizonPolicy, HumOptions,
    NormProblem, ScenarioTree, SpatialGrid, TerminalData,
};

use crate::record::Status;
use crate::run::{HumSummary, Session, GAP_TOL, RATIO_TOL, REACH_TOL};

pub const DEFAULT_SEED: u64 = 0x5eed;

pub const CHECKS: &[&str] = &[
    "selftest.duality",
    "selftest.hum_converged",
    "selftest.duality_gap",
    "selftest.null_reach",
    "selftest.characterization_ratio",
    "selftest.random_ratio_bound",
    "selftest.norm_monotone",
    "selftest.bang_bang",
    "selftest.oracle_compare",
    "selftest.observability_constant",
];

const N: usize = 8;
const DEPTH: usize = 5;
const DT: f64 = 0.1;
const A: f64 = 0.3;
const RANDOM_SAMPLES: usize = 20;

fn pinned_problem() -> stochum_core::Result<NormProblem> {
    let grid = SpatialGrid::new(N, 1.0, 0.1, 0.9)?;
    let y0: Vec<f64> = grid.points().map(|x| x * x * (1.0 - x)).collect();
    Ok(NormProblem::new(
        grid,
        CoefficientSchedule::Constant(A),
        y0.into(),
        HorizonPolicy::FixedDt(DT),
    ))
}

pub(crate) fn run(opts: &crate::run::RunOptions, s: &mut Session) -> Result<(), String> {
    let p = pinned_problem().map_err(|e| e.to_string())?;
    let horizon = DEPTH as f64 * DT;
    let solve = s
        .timed("solve", || p.solve(horizon))
        .map_err(|e| e.to_string())?;
    s.output("hum", HumSummary::of(&solve, &p.grid));
    let r = &solve.result;
    let tree = &solve.tree;
    let a = &solve.coefficient;
    let system = ControlSystem::new(tree, &p.grid, a).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.prop_seed);
    if opts.seedless {
        s.ledger.skip("selftest.duality", "seedless run");
    } else {
        let mut worst: f64 = 0.0;
        for _ in 0..RANDOM_SAMPLES {
            let mismatch =
                duality_mismatch(&mut rng, tree, &p.grid, a).map_err(|e| e.to_string())?;
            worst = worst.max(mismatch);
        }
        s.ledger.at_most(
            "selftest.duality",
            worst,
            1e-11,
            format!(
                "{RANDOM_SAMPLES} random (y0, v, η) triples, seed {:#x}",
                opts.prop_seed
            ),
        );
    }

    s.ledger.flag(
        "selftest.hum_converged",
        r.converged,
        format!("{} CG iterations", r.cg_iterations),
    );
    s.ledger.at_most(
        "selftest.duality_gap",
        r.relative_gap(),
        GAP_TOL,
        "|V + N²/2| / N²",
    );
    s.ledger.at_most(
        "selftest.null_reach",
        r.terminal_residual,
        REACH_TOL,
        "max leaf ||y(T)|| / ||y0||",
    );

    let ratio = system
        .characterization_ratio(&p.y0, &r.eta_star.scaled(-1.0))
        .map_err(|e| e.to_string())?;
    s.ledger.at_most(
        "selftest.characterization_ratio",
        (ratio - r.norm_n).abs() / r.norm_n,
        RATIO_TOL,
        "ratio at -η* vs N",
    );

    if opts.seedless {
        s.ledger.skip("selftest.random_ratio_bound", "seedless run");
    } else {
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..RANDOM_SAMPLES {
            let eta = TerminalData::from_fn(tree, N, |_, _| rng.gen_range(-1.0..1.0));
            let q = system
                .characterization_ratio(&p.y0, &eta)
                .map_err(|e| e.to_string())?;
            worst = worst.max(q - r.norm_n);
        }
        s.ledger.at_most(
            "selftest.random_ratio_bound",
            worst,
            1e-8,
            "largest ratio(η) - N over random η",
        );
    }

    let norms: Vec<f64> = [3usize, 4, 5]
        .iter()
        .map(|&d| p.norm_at(d as f64 * DT))
        .collect::<stochum_core::Result<_>>()
        .map_err(|e| e.to_string())?;
    s.ledger.flag(
        "selftest.norm_monotone",
        norms.windows(2).all(|w| w[1] < w[0]),
        format!("N at depths 3, 4, 5: {norms:?}"),
    );

    let bb = bang_bang_of(&solve, &p.grid).map_err(|e| e.to_string())?;
    s.ledger.push(
        "selftest.bang_bang",
        if bb.status == stochum_core::BangBangStatus::Pass {
            Status::Pass
        } else {
            Status::Fail
        },
        Some(bb.min_level_norm),
        Some(bb.floor),
        format!("integrated norm error {:.3e}", bb.norm_relative_error),
    );

    let cmp = oracle::compare(&system, &p.y0, &r.u_star, r.norm_n).map_err(|e| e.to_string())?;
    s.ledger.at_most(
        "selftest.oracle_compare",
        cmp.norm_relative_error.max(cmp.control_relative_error),
        oracle::COMPARE_TOL,
        format!("rank {}", cmp.rank),
    );

    let dense = oracle::observability_constant(&system).map_err(|e| e.to_string())?;
    let est = system
        .estimate_observability_constant(
            &HumOptions {
                tol: 1e-12,
                ..HumOptions::default()
            },
            1e-12,
            500,
        )
        .map_err(|e| e.to_string())?;
    s.ledger.at_most(
        "selftest.observability_constant",
        (est.constant - dense).abs() / dense,
        1e-6,
        format!("power iteration {:e} vs dense {:e}", est.constant, dense),
    );
    Ok(())
}

/// `E<y(T), η> - <y0, z(0)> - Σ dt E<v, χ_G z>` relative to the largest term.
fn duality_mismatch(
    rng: &mut ChaCha8Rng,
    tree: &ScenarioTree,
    grid: &SpatialGrid,
    a: &CoefficientProcess,
) -> stochum_core::Result<f64> {
    let y0: Vec<f64> = (0..N).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let v = AdaptedField::from_fn(tree, N, tree.depth(), FieldRole::Control, |_, _| {
        rng.gen_range(-1.0..1.0)
    });
    let eta = TerminalData::from_fn(tree, N, |_, _| rng.gen_range(-1.0..1.0));
    let state = solve_forward(tree, grid, a, &y0, Some(&v))?;
    let lhs = terminal_state(tree, &state)?.inner(tree, grid, &eta);
    let pair = solve_adjoint(tree, grid, a, &eta)?;
    let obs = observe(&pair, grid, tree);
    let initial = initial_pairing(&pair, grid, &y0)?;
    let running = process_inner(tree, grid, &v, &obs)?;
    let scale = lhs.abs().max(initial.abs()).max(running.abs());
    Ok((lhs - initial - running).abs() / scale)
}
