//! Mode runners.
//!
//! Each mode owns a fixed list of ledger checks. A check that cannot be
//! evaluated because a solver failed is recorded as `FAIL` with the error,
//! so the set of names in a record depends on the mode alone.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};
use stochum_core::optimal_time::{bang_bang_of, check_horizons, effective_norm, NormSolve};
use stochum_core::oracle::{self, OracleComparison};
use stochum_core::{
    check_bang_bang, equivalence_check, optimal_time, BangBangReport, BangBangStatus,
    BisectionOptions, CoefficientProcess, CoefficientSchedule, ControlSystem, EquivalenceOptions,
    Error, HumOptions, HumResult, NormCurve, NormProblem, SpatialGrid,
};

use crate::config::{read_numbers, Mode, NoiseSpec, ScenarioConfig};
use crate::output::{atomic_write, bangbang_csv, curve_csv};
use crate::record::{Ledger, ResultRecord, Status};
use crate::selftest;

/// Relative duality gap accepted at convergence.
pub const GAP_TOL: f64 = 1e-8;
/// Leaf-wise terminal norm relative to `||y0||`.
pub const REACH_TOL: f64 = 1e-6;
pub const RATIO_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Overrides `[output] dir`.
    pub out_dir: Option<PathBuf>,
    /// Forces the dense oracle on.
    pub dense_oracle: bool,
    /// Skips every check that draws random inputs.
    pub seedless: bool,
    pub prop_seed: u64,
    pub write_files: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            out_dir: None,
            dense_oracle: false,
            seedless: false,
            prop_seed: selftest::DEFAULT_SEED,
            write_files: true,
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub record: ResultRecord,
    pub files: Vec<PathBuf>,
    /// IO problems while persisting outputs.
    pub write_errors: Vec<String>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.record.passed && self.write_errors.is_empty()
    }
}

/// Ledger names per mode, in report order.
pub fn checks_for(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::Norm => &[
            "hum.converged",
            "hum.duality_gap",
            "hum.null_reach",
            "hum.nonzero_minimizer",
            "hum.characterization_ratio",
            "bang_bang",
            "oracle.compare",
        ],
        Mode::Sweep => &[
            "sweep.converged",
            "sweep.duality_gap",
            "sweep.monotone",
            "sweep.limit_ratio",
            "oracle.compare",
        ],
        Mode::Time => &[
            "time.bracket",
            "time.norm_match",
            "time.bisection_monotone",
            "bang_bang",
            "oracle.compare",
        ],
        Mode::Equivalence => &[
            "hum.converged",
            "hum.duality_gap",
            "equivalence.zero_extension",
            "equivalence.recovered_time",
            "equivalence.restriction_norm",
            "bang_bang",
            "oracle.compare",
        ],
        Mode::Selftest => selftest::CHECKS,
    }
}

/// Mode outputs and files collected while running.
pub(crate) struct Session {
    pub ledger: Ledger,
    pub outputs: Map<String, Value>,
    pub files: Vec<(String, Vec<u8>)>,
    pub timings: Vec<(String, f64)>,
}

impl Session {
    fn new() -> Self {
        Session {
            ledger: Ledger::default(),
            outputs: Map::new(),
            files: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub(crate) fn output(&mut self, key: &str, value: impl Serialize) {
        self.outputs.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }

    pub(crate) fn timed<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings
            .push((name.to_string(), start.elapsed().as_secs_f64()));
        out
    }
}

/// Runs a validated scenario and writes its outputs.
pub fn run(config: &ScenarioConfig, opts: &RunOptions) -> RunOutcome {
    let mode = config.solve.mode;
    let start = Instant::now();
    let mut session = Session::new();
    let result = match mode {
        Mode::Norm => run_norm(config, opts, &mut session),
        Mode::Sweep => run_sweep(config, opts, &mut session),
        Mode::Time => run_time(config, opts, &mut session),
        Mode::Equivalence => run_equivalence(config, opts, &mut session),
        Mode::Selftest => selftest::run(opts, &mut session),
    };
    let error = result.err();
    if let Some(e) = &error {
        session.output("error", e);
    }
    complete_ledger(mode, &mut session.ledger, error.as_deref());

    let mut record = ResultRecord::new(mode.as_str(), Some(config.clone()));
    record.outputs = Value::Object(session.outputs);
    record.ledger = session.ledger;
    record.timings = session.timings.into_iter().collect();
    record
        .timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    record.finish();

    let mut files = Vec::new();
    let mut write_errors = Vec::new();
    if opts.write_files {
        let dir = opts
            .out_dir
            .clone()
            .unwrap_or_else(|| config.output.dir.clone());
        let mut all = session.files;
        all.push(("result.json".into(), record.to_json().into_bytes()));
        for (name, bytes) in all {
            let path = dir.join(&name);
            match atomic_write(&path, &bytes) {
                Ok(()) => files.push(path),
                Err(e) => write_errors.push(format!("{}: {e}", path.display())),
            }
        }
    }
    RunOutcome {
        record,
        files,
        write_errors,
    }
}

/// Adds missing checks as failures and orders the ledger by the mode list.
fn complete_ledger(mode: Mode, ledger: &mut Ledger, error: Option<&str>) {
    let names = checks_for(mode);
    for name in names {
        if ledger.get(name).is_none() {
            let detail = match error {
                Some(e) => format!("not evaluated: {e}"),
                None => "not evaluated".to_string(),
            };
            ledger.push(name, Status::Fail, None, None, detail);
        }
    }
    ledger.checks.sort_by_key(|c| {
        names
            .iter()
            .position(|n| *n == c.name)
            .unwrap_or(usize::MAX)
    });
}

fn err(e: Error) -> String {
    e.to_string()
}

pub fn hum_options(config: &ScenarioConfig) -> HumOptions {
    HumOptions {
        tol: config.solve.cg_tol,
        max_iter: config.solve.max_iter,
        ..HumOptions::default()
    }
}

/// Builds the norm problem described by a scenario.
pub fn problem(config: &ScenarioConfig) -> Result<NormProblem, String> {
    let grid = config.grid().map_err(err)?;
    let y0 = config.initial_state(&grid)?;
    let coefficient = match &config.noise {
        NoiseSpec::Constant(a) => CoefficientSchedule::Constant(*a),
        NoiseSpec::PerLevel(v) => {
            CoefficientSchedule::Fixed(CoefficientProcess::PerLevel(v.clone()))
        }
        NoiseSpec::PerNodeFile(path) => {
            CoefficientSchedule::Fixed(CoefficientProcess::PerNode(read_numbers(path)?))
        }
    };
    let mut p = NormProblem::new(grid, coefficient, y0, config.solve.time_grid.policy());
    p.hum = hum_options(config);
    p.eps_ladder = config.solve.eps_ladder.clone();
    Ok(p)
}

#[derive(Debug, Clone, Serialize)]
pub struct HumSummary {
    pub horizon: f64,
    pub depth: usize,
    pub dt: f64,
    pub leaves: usize,
    pub norm: f64,
    pub value: f64,
    pub duality_gap: f64,
    pub relative_gap: f64,
    pub cg_iterations: usize,
    pub gram_residual: f64,
    pub regularization_eps: f64,
    pub extrapolated_norm: Option<f64>,
    pub converged: bool,
    pub terminal_residual: f64,
    pub eta_norm: f64,
}

impl HumSummary {
    pub fn of(solve: &NormSolve, grid: &SpatialGrid) -> Self {
        let r: &HumResult = &solve.result;
        HumSummary {
            horizon: solve.tree.horizon(),
            depth: solve.tree.depth(),
            dt: solve.tree.dt(),
            leaves: solve.tree.leaf_count(),
            norm: effective_norm(r),
            value: r.value_v,
            duality_gap: r.duality_gap,
            relative_gap: r.relative_gap(),
            cg_iterations: r.cg_iterations,
            gram_residual: r.gram_residual,
            regularization_eps: r.regularization_eps,
            extrapolated_norm: r.extrapolated_norm,
            converged: r.converged,
            terminal_residual: r.terminal_residual,
            eta_norm: r.eta_star.norm(&solve.tree, grid),
        }
    }
}

fn hum_checks(ledger: &mut Ledger, solve: &NormSolve, include_reach: bool) {
    let r = &solve.result;
    ledger.flag(
        "hum.converged",
        r.converged,
        format!(
            "{} CG iterations, true residual {:.3e}, eps {:e}",
            r.cg_iterations, r.gram_residual, r.regularization_eps
        ),
    );
    ledger.at_most(
        "hum.duality_gap",
        r.relative_gap(),
        GAP_TOL,
        "|V + N²/2| / N²",
    );
    if include_reach {
        ledger.at_most(
            "hum.null_reach",
            r.terminal_residual,
            REACH_TOL,
            "max leaf ||y(T)|| / ||y0||",
        );
    }
}

fn bang_bang_check(ledger: &mut Ledger, report: &BangBangReport) {
    let detail = format!(
        "min/max level norm {:.3e}/{:.3e}, integrated norm error {:.3e}",
        report.min_level_norm, report.max_level_norm, report.norm_relative_error
    );
    match report.status {
        BangBangStatus::Pass => ledger.push(
            "bang_bang",
            Status::Pass,
            Some(report.min_level_norm),
            Some(report.floor),
            detail,
        ),
        BangBangStatus::Fail => ledger.push(
            "bang_bang",
            Status::Fail,
            Some(report.min_level_norm),
            Some(report.floor),
            detail,
        ),
        BangBangStatus::Vacuous => ledger.skip("bang_bang", "vacuous: zero control (y0 = 0)"),
    }
}

fn oracle_check(
    ledger: &mut Ledger,
    session_outputs: &mut Map<String, Value>,
    enabled: bool,
    problem: &NormProblem,
    solve: &NormSolve,
) -> Option<Vec<u8>> {
    if !enabled {
        ledger.skip("oracle.compare", "dense oracle disabled");
        return None;
    }
    let system = match ControlSystem::new(&solve.tree, &problem.grid, &solve.coefficient) {
        Ok(s) => s,
        Err(e) => {
            ledger.fail("oracle.compare", e.to_string());
            return None;
        }
    };
    let map = match oracle::assemble_control_to_terminal(&system) {
        Ok(m) => m,
        Err(e @ Error::DenseCapExceeded { .. }) => {
            ledger.skip("oracle.compare", e.to_string());
            return None;
        }
        Err(e) => {
            ledger.fail("oracle.compare", e.to_string());
            return None;
        }
    };
    let r = &solve.result;
    match oracle::compare(&system, &problem.y0, &r.u_star, r.norm_n) {
        Ok(c) => {
            record_comparison(ledger, &c);
            session_outputs.insert(
                "oracle".into(),
                serde_json::to_value(&c).unwrap_or(Value::Null),
            );
        }
        Err(e) => ledger.fail("oracle.compare", e.to_string()),
    }
    Some(map.to_bytes())
}

fn record_comparison(ledger: &mut Ledger, c: &OracleComparison) {
    let worst = c.norm_relative_error.max(c.control_relative_error);
    ledger.at_most(
        "oracle.compare",
        worst,
        oracle::COMPARE_TOL,
        format!(
            "norm error {:.3e}, control error {:.3e}, rank {}",
            c.norm_relative_error, c.control_relative_error, c.rank
        ),
    );
}

fn run_norm(config: &ScenarioConfig, opts: &RunOptions, s: &mut Session) -> Result<(), String> {
    let p = problem(config)?;
    let horizon = config.solve.horizon.expect("validated");
    let solve = s.timed("solve", || p.solve(horizon)).map_err(err)?;
    s.output("hum", HumSummary::of(&solve, &p.grid));
    hum_checks(&mut s.ledger, &solve, true);

    let r = &solve.result;
    let y0_nonzero = p.y0.iter().any(|v| *v != 0.0);
    if y0_nonzero {
        s.ledger.flag(
            "hum.nonzero_minimizer",
            r.value_v < 0.0 && r.eta_star.as_slice().iter().any(|v| *v != 0.0),
            format!("V = {:e}", r.value_v),
        );
    } else {
        s.ledger.skip("hum.nonzero_minimizer", "y0 = 0");
    }

    let system = ControlSystem::new(&solve.tree, &p.grid, &solve.coefficient).map_err(err)?;
    match system.characterization_ratio(&p.y0, &r.eta_star.scaled(-1.0)) {
        Ok(ratio) => {
            let rel = (ratio - r.norm_n).abs() / r.norm_n;
            s.output("characterization_ratio", ratio);
            s.ledger.at_most(
                "hum.characterization_ratio",
                rel,
                RATIO_TOL,
                "ratio at -eta* vs N",
            );
        }
        Err(Error::ZeroObservation) if !y0_nonzero => s
            .ledger
            .skip("hum.characterization_ratio", "y0 = 0 gives eta* = 0"),
        Err(e) => s.ledger.fail("hum.characterization_ratio", e.to_string()),
    }

    let report = bang_bang_of_with_floor(&solve, &p.grid, config.solve.bb_floor).map_err(err)?;
    bang_bang_check(&mut s.ledger, &report);
    s.files.push((
        "bangbang.csv".into(),
        bangbang_csv(&report.profile, solve.tree.dt()),
    ));
    s.output("bang_bang", &report);

    let enabled = config.solve.dense_oracle || opts.dense_oracle;
    let start = Instant::now();
    if let Some(bytes) = oracle_check(&mut s.ledger, &mut s.outputs, enabled, &p, &solve) {
        s.files.push(("dense_map.bin".into(), bytes));
        s.timings
            .push(("oracle".into(), start.elapsed().as_secs_f64()));
    }
    Ok(())
}

fn bang_bang_of_with_floor(
    solve: &NormSolve,
    grid: &SpatialGrid,
    floor: f64,
) -> stochum_core::Result<BangBangReport> {
    if floor == stochum_core::optimal_time::DEFAULT_BB_FLOOR {
        return bang_bang_of(solve, grid);
    }
    check_bang_bang(
        &solve.tree,
        grid,
        &solve.result.u_star,
        solve.result.norm_n,
        floor,
    )
}

fn run_sweep(config: &ScenarioConfig, opts: &RunOptions, s: &mut Session) -> Result<(), String> {
    let p = problem(config)?;
    let horizons = config.solve.horizons.clone().expect("validated");
    check_horizons(&p, &horizons).map_err(err)?;
    // Samples are independent; collecting in input order keeps the output
    // identical to a sequential run.
    let samples = s
        .timed("sweep", || {
            horizons
                .par_iter()
                .map(|&t| p.sample(t))
                .collect::<stochum_core::Result<Vec<_>>>()
        })
        .map_err(err)?;
    let curve = NormCurve { samples };
    s.files.push(("curve.csv".into(), curve_csv(&curve)));
    s.output("curve", &curve);

    let unconverged: Vec<f64> = curve
        .samples
        .iter()
        .filter(|x| !x.converged)
        .map(|x| x.horizon)
        .collect();
    s.ledger.flag(
        "sweep.converged",
        unconverged.is_empty(),
        if unconverged.is_empty() {
            "all samples converged".to_string()
        } else {
            format!("not converged at T = {unconverged:?}")
        },
    );
    let worst_gap = curve
        .samples
        .iter()
        .filter(|x| x.converged)
        .map(|x| x.relative_gap())
        .fold(0.0, f64::max);
    s.ledger.at_most(
        "sweep.duality_gap",
        worst_gap,
        GAP_TOL,
        "largest |V + N²/2| / N² over converged samples",
    );
    let violations = curve.monotonicity_violations();
    s.ledger.flag(
        "sweep.monotone",
        violations.is_empty(),
        if violations.is_empty() {
            "strictly decreasing".to_string()
        } else {
            let at: Vec<f64> = violations
                .iter()
                .map(|&i| curve.samples[i + 1].horizon)
                .collect();
            format!("N does not decrease at T = {at:?}")
        },
    );
    match (config.solve.limit_ratio, curve.limit_ratio()) {
        (Some(want), Some(got)) => {
            s.ledger
                .at_least("sweep.limit_ratio", got, want, "N(first) / N(last)")
        }
        (Some(_), None) => s.ledger.fail("sweep.limit_ratio", "last sample has N = 0"),
        (None, _) => s
            .ledger
            .skip("sweep.limit_ratio", "no limit_ratio configured"),
    }

    if config.solve.dense_oracle || opts.dense_oracle {
        sweep_oracle(&mut s.ledger, &p, &horizons, &curve);
    } else {
        s.ledger.skip("oracle.compare", "dense oracle disabled");
    }
    Ok(())
}

/// Row count above which sweep samples are not compared. The pseudoinverse
/// of a map with `r` rows costs about `r³` and a sweep repeats it per sample.
pub const SWEEP_ORACLE_ROWS: usize = 512;

fn sweep_oracle(ledger: &mut Ledger, p: &NormProblem, horizons: &[f64], curve: &NormCurve) {
    let mut worst: f64 = 0.0;
    let mut compared = Vec::new();
    let mut skipped = Vec::new();
    for (&t, sample) in horizons.iter().zip(&curve.samples) {
        let oracle = p.tree(t).and_then(|tree| {
            let a = p.coefficient.on_tree(&tree)?;
            let system = ControlSystem::new(&tree, &p.grid, &a)?;
            let map = oracle::assemble_with_cap(&system, SWEEP_ORACLE_ROWS)?;
            oracle::min_norm_with_map(&system, &map, &p.y0)
        });
        match oracle {
            Ok(o) => {
                worst = worst.max((o.norm - sample.norm).abs() / o.norm.max(f64::MIN_POSITIVE));
                compared.push(t);
            }
            Err(Error::DenseCapExceeded { .. }) => skipped.push(t),
            Err(e) => {
                ledger.fail("oracle.compare", format!("T = {t}: {e}"));
                return;
            }
        }
    }
    if compared.is_empty() {
        ledger.skip(
            "oracle.compare",
            format!("every sample exceeds {SWEEP_ORACLE_ROWS} dense rows"),
        );
        return;
    }
    let mut detail = format!("largest relative norm error over T = {compared:?}");
    if !skipped.is_empty() {
        detail.push_str(&format!(
            "; above {SWEEP_ORACLE_ROWS} rows, not compared: T = {skipped:?}"
        ));
    }
    ledger.at_most("oracle.compare", worst, oracle::COMPARE_TOL, detail);
}

fn bisection_options(config: &ScenarioConfig) -> BisectionOptions {
    BisectionOptions {
        time_tol: config.solve.bisection_tol,
        expand_cap: config.solve.expand_cap,
        ..BisectionOptions::default()
    }
}

#[derive(Serialize)]
struct TimeSummary {
    n0: f64,
    t_star: f64,
    bracket: (f64, f64),
    bracket_norms: (f64, f64),
    bisection_tol: f64,
    at_bracket_edge: bool,
    evaluations: usize,
    monotonicity_violations: usize,
    lipschitz: f64,
    norm_tolerance: f64,
    norm_at_t_star: f64,
    /// The control is the HUM control on `(0, zero_after)` and zero afterwards.
    zero_after: f64,
    hum: HumSummary,
}

fn run_time(config: &ScenarioConfig, opts: &RunOptions, s: &mut Session) -> Result<(), String> {
    let p = problem(config)?;
    let n0 = config.solve.n0.expect("validated");
    let bracket = config.solve.bracket.expect("validated");
    let result = s.timed("bisection", || {
        optimal_time(&p, n0, bracket, &bisection_options(config))
    });
    let res = match result {
        Ok(r) => r,
        Err(e @ Error::BracketNotFound { .. }) => {
            s.ledger.fail(
                "time.bracket",
                format!("{e}; N0 = {n0:e} is below N(T) on the largest horizon tried"),
            );
            return Err(e.to_string());
        }
        Err(e) => return Err(e.to_string()),
    };
    s.ledger.flag(
        "time.bracket",
        true,
        format!("final bracket [{:.6}, {:.6}]", res.bracket.0, res.bracket.1),
    );
    let n_star = res.norm_at_t_star();
    if res.at_bracket_edge {
        s.ledger.skip(
            "time.norm_match",
            format!("N0 >= N(T_lo): T* <= {} at the bracket edge", res.bracket.0),
        );
    } else {
        let tol = res.norm_tolerance.max(1e-12 * n0);
        s.ledger.at_most(
            "time.norm_match",
            (n_star - n0).abs(),
            tol,
            "|N(T*) - N0| vs Lipschitz * bisection_tol",
        );
    }
    s.ledger.flag(
        "time.bisection_monotone",
        res.monotonicity_violations == 0,
        format!(
            "{} midpoint(s) outside the bracket norms",
            res.monotonicity_violations
        ),
    );
    let report =
        bang_bang_of_with_floor(&res.solve, &p.grid, config.solve.bb_floor).map_err(err)?;
    bang_bang_check(&mut s.ledger, &report);
    s.files.push((
        "bangbang.csv".into(),
        bangbang_csv(&report.profile, res.solve.tree.dt()),
    ));
    s.output(
        "time_optimal",
        TimeSummary {
            n0,
            t_star: res.t_star,
            bracket: res.bracket,
            bracket_norms: res.bracket_norms,
            bisection_tol: res.bisection_tol,
            at_bracket_edge: res.at_bracket_edge,
            evaluations: res.evaluations,
            monotonicity_violations: res.monotonicity_violations,
            lipschitz: res.lipschitz,
            norm_tolerance: res.norm_tolerance,
            norm_at_t_star: n_star,
            zero_after: res.extension.from,
            hum: HumSummary::of(&res.solve, &p.grid),
        },
    );
    s.output("bang_bang", &report);
    let enabled = config.solve.dense_oracle || opts.dense_oracle;
    oracle_check(&mut s.ledger, &mut s.outputs, enabled, &p, &res.solve);
    Ok(())
}

fn run_equivalence(
    config: &ScenarioConfig,
    opts: &RunOptions,
    s: &mut Session,
) -> Result<(), String> {
    let p = problem(config)?;
    let horizon = config.solve.horizon.expect("validated");
    let solve = s.timed("solve", || p.solve(horizon)).map_err(err)?;
    hum_checks(&mut s.ledger, &solve, false);
    s.output("hum", HumSummary::of(&solve, &p.grid));
    let eq_opts = EquivalenceOptions {
        bisection: BisectionOptions {
            norm_rel_tol: EquivalenceOptions::default().bisection.norm_rel_tol,
            ..bisection_options(config)
        },
        ..EquivalenceOptions::default()
    };
    let report = s
        .timed("equivalence", || equivalence_check(&p, horizon, &eq_opts))
        .map_err(err)?;
    s.ledger.push(
        "equivalence.zero_extension",
        if report.extension_pass {
            Status::Pass
        } else {
            Status::Fail
        },
        Some(report.extension_residual),
        Some(eq_opts.null_reach_tol),
        format!(
            "extended control norm {:e} vs N {:e}",
            report.extension_norm, report.norm
        ),
    );
    s.ledger.at_most(
        "equivalence.recovered_time",
        report.time_error,
        report.time_tolerance,
        format!("T(N(T)) = {}", report.recovered_time),
    );
    s.ledger.at_most(
        "equivalence.restriction_norm",
        report.restriction_relative_error,
        eq_opts.norm_rel_tol,
        "time-optimal control norm vs N(T)",
    );
    s.output("equivalence", &report);
    let bb = bang_bang_of_with_floor(&solve, &p.grid, config.solve.bb_floor).map_err(err)?;
    bang_bang_check(&mut s.ledger, &bb);
    s.files.push((
        "bangbang.csv".into(),
        bangbang_csv(&bb.profile, solve.tree.dt()),
    ));
    s.output("bang_bang", &bb);
    let enabled = config.solve.dense_oracle || opts.dense_oracle;
    oracle_check(&mut s.ledger, &mut s.outputs, enabled, &p, &solve);
    Ok(())
}
