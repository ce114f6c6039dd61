//! Scenario files.
//!
//! A scenario is a TOML document with five sections:
//!
//! ```toml
//! [domain]
//! length = 1.0
//! n = 16
//! g_lo = 0.15
//! g_hi = 0.85
//!
//! [noise]
//! a = 0.3                  # or a_levels = [...], or a_file = "a.txt"
//!
//! [initial]
//! kind = "eigen"           # "eigen" (k), "bump" (x0) or "file" (path)
//! k = 1
//!
//! [solve]
//! mode = "norm"            # norm | sweep | time | equivalence | selftest
//! depth = 6                # or dt = 0.1
//! T = 0.6
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Every key is optional unless the mode needs it. Unknown keys and keys
//! that do not apply to the selected mode are errors, and all errors of a
//! file are reported together.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use stochum_core::{HorizonPolicy, SpatialField, SpatialGrid};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Norm,
    Sweep,
    Time,
    Equivalence,
    Selftest,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Norm => "norm",
            Mode::Sweep => "sweep",
            Mode::Time => "time",
            Mode::Equivalence => "equivalence",
            Mode::Selftest => "selftest",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "norm" => Ok(Mode::Norm),
            "sweep" => Ok(Mode::Sweep),
            "time" => Ok(Mode::Time),
            "equivalence" => Ok(Mode::Equivalence),
            "selftest" => Ok(Mode::Selftest),
            other => Err(format!(
                "unknown mode {other:?} (expected norm, sweep, time, equivalence or selftest)"
            )),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainConfig {
    pub length: f64,
    pub n: usize,
    pub g_lo: f64,
    pub g_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    Constant(f64),
    PerLevel(Vec<f64>),
    /// Whitespace-separated values, one per node of levels `0..depth`.
    PerNodeFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpec {
    Eigen {
        k: usize,
        amplitude: f64,
    },
    /// Discrete unit mass at the grid point nearest to `x0`.
    Bump {
        x0: f64,
        amplitude: f64,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeGrid {
    Dt(f64),
    Depth(usize),
}

impl TimeGrid {
    pub fn policy(self) -> HorizonPolicy {
        match self {
            TimeGrid::Dt(dt) => HorizonPolicy::FixedDt(dt),
            TimeGrid::Depth(d) => HorizonPolicy::FixedDepth(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveConfig {
    pub mode: Mode,
    pub time_grid: TimeGrid,
    /// Horizon for `norm` and `equivalence`.
    pub horizon: Option<f64>,
    /// Horizons for `sweep`.
    pub horizons: Option<Vec<f64>>,
    /// Budget and bracket for `time`.
    pub n0: Option<f64>,
    pub bracket: Option<(f64, f64)>,
    pub cg_tol: f64,
    pub max_iter: Option<usize>,
    pub bisection_tol: f64,
    pub expand_cap: usize,
    pub eps_ladder: Vec<f64>,
    pub bb_floor: f64,
    /// Required `N(first) / N(last)` for a sweep; unchecked when absent.
    pub limit_ratio: Option<f64>,
    pub dense_oracle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub domain: DomainConfig,
    pub noise: NoiseSpec,
    pub initial: InitialSpec,
    pub solve: SolveConfig,
    pub output: OutputConfig,
    /// Keys that were filled in with their default value.
    pub defaults: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Every problem found in a scenario file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl ConfigErrors {
    pub fn mentions(&self, field: &str) -> bool {
        self.0.iter().any(|e| e.field == field)
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} configuration error(s)", self.0.len())?;
        for e in &self.0 {
            write!(f, "\n  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

pub const DEFAULT_HORIZON: f64 = 0.6;
pub const DEFAULT_BRACKET: (f64, f64) = (0.1, 2.0);

const SECTIONS: [(&str, &[&str]); 5] = [
    ("domain", &["length", "n", "g_lo", "g_hi"]),
    ("noise", &["a", "a_levels", "a_file"]),
    ("initial", &["kind", "k", "x0", "amplitude", "file"]),
    (
        "solve",
        &[
            "mode",
            "dt",
            "depth",
            "T",
            "T_list",
            "N0",
            "bracket",
            "cg_tol",
            "max_iter",
            "bisection_tol",
            "expand_cap",
            "eps_ladder",
            "bb_floor",
            "limit_ratio",
            "dense_oracle",
        ],
    ),
    ("output", &["dir"]),
];

/// Reads and validates a scenario file. Relative paths inside the file are
/// resolved against its directory.
pub fn parse_config(
    path: &Path,
    mode_override: Option<Mode>,
) -> Result<ScenarioConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigErrors(vec![ConfigError {
            field: path.display().to_string(),
            message: format!("cannot read: {e}"),
        }])
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_str(&text, base, mode_override)
}

pub fn parse_str(
    text: &str,
    base_dir: &Path,
    mode_override: Option<Mode>,
) -> Result<ScenarioConfig, ConfigErrors> {
    let table: Table = toml::from_str(text).map_err(|e| {
        ConfigErrors(vec![ConfigError {
            field: "file".into(),
            message: e.to_string(),
        }])
    })?;
    let mut p = Parser {
        errors: Vec::new(),
        defaults: Vec::new(),
        base_dir,
    };
    p.check_layout(&table);
    let empty = Table::new();
    let section = |name: &str| table.get(name).and_then(Value::as_table).unwrap_or(&empty);

    let domain = p.domain(section("domain"));
    let noise = p.noise(section("noise"));
    let initial = p.initial(section("initial"));
    let solve = p.solve(section("solve"), mode_override);
    let output = OutputConfig {
        dir: p
            .string(section("output"), "output", "dir")
            .map(|s| p.resolve(&s))
            .unwrap_or_else(|| p.default("output.dir", PathBuf::from("out"))),
    };
    p.cross_checks(&domain, &noise, &initial, &solve);

    if p.errors.is_empty() {
        Ok(ScenarioConfig {
            domain,
            noise,
            initial,
            solve,
            output,
            defaults: p.defaults,
        })
    } else {
        Err(ConfigErrors(p.errors))
    }
}

struct Parser<'a> {
    errors: Vec<ConfigError>,
    defaults: Vec<String>,
    base_dir: &'a Path,
}

impl Parser<'_> {
    fn error(&mut self, field: &str, message: impl Into<String>) {
        self.errors.push(ConfigError {
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn default<T>(&mut self, field: &str, value: T) -> T {
        self.defaults.push(field.to_string());
        value
    }

    fn resolve(&self, s: &str) -> PathBuf {
        let p = PathBuf::from(s);
        if p.is_absolute() {
            p
        } else {
            self.base_dir.join(p)
        }
    }

    fn check_layout(&mut self, table: &Table) {
        for (key, value) in table {
            match SECTIONS.iter().find(|(name, _)| name == key) {
                None => self.error(key, "unknown section"),
                Some((name, keys)) => match value.as_table() {
                    None => self.error(key, "must be a section"),
                    Some(inner) => {
                        for k in inner.keys() {
                            if !keys.contains(&k.as_str()) {
                                self.error(&format!("{name}.{k}"), "unknown key");
                            }
                        }
                    }
                },
            }
        }
    }

    fn float(&mut self, t: &Table, section: &str, key: &str) -> Option<f64> {
        let v = t.get(key)?;
        match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.error(&format!("{section}.{key}"), "expected a number");
                None
            }
        }
    }

    fn positive(&mut self, t: &Table, section: &str, key: &str) -> Option<f64> {
        let x = self.float(t, section, key)?;
        if x > 0.0 && x.is_finite() {
            Some(x)
        } else {
            self.error(&format!("{section}.{key}"), "must be positive and finite");
            None
        }
    }

    fn count(&mut self, t: &Table, section: &str, key: &str) -> Option<usize> {
        let v = t.get(key)?;
        match v.as_integer() {
            Some(i) if i >= 1 => Some(i as usize),
            Some(_) => {
                self.error(&format!("{section}.{key}"), "must be at least 1");
                None
            }
            None => {
                self.error(&format!("{section}.{key}"), "expected an integer");
                None
            }
        }
    }

    fn string(&mut self, t: &Table, section: &str, key: &str) -> Option<String> {
        let v = t.get(key)?;
        match v.as_str() {
            Some(s) => Some(s.to_string()),
            None => {
                self.error(&format!("{section}.{key}"), "expected a string");
                None
            }
        }
    }

    fn floats(&mut self, t: &Table, section: &str, key: &str) -> Option<Vec<f64>> {
        let v = t.get(key)?;
        let field = format!("{section}.{key}");
        let Some(items) = v.as_array() else {
            self.error(&field, "expected a list of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Value::Float(x) => out.push(*x),
                Value::Integer(i) => out.push(*i as f64),
                _ => {
                    self.error(&field, "expected a list of numbers");
                    return None;
                }
            }
        }
        if out.iter().any(|x| !x.is_finite()) {
            self.error(&field, "values must be finite");
            return None;
        }
        Some(out)
    }

    fn domain(&mut self, t: &Table) -> DomainConfig {
        let length = self
            .positive(t, "domain", "length")
            .unwrap_or_else(|| self.default("domain.length", 1.0));
        let n = self
            .count(t, "domain", "n")
            .unwrap_or_else(|| self.default("domain.n", 16));
        let g_lo = self
            .float(t, "domain", "g_lo")
            .unwrap_or_else(|| self.default("domain.g_lo", 0.15 * length));
        let g_hi = self
            .float(t, "domain", "g_hi")
            .unwrap_or_else(|| self.default("domain.g_hi", 0.85 * length));
        if g_lo < 0.0 {
            self.error("domain.g_lo", "must be non-negative");
        }
        if g_hi > length {
            self.error("domain.g_hi", "must not exceed domain.length");
        }
        if g_lo >= g_hi {
            self.error("domain.g_lo", "must be smaller than domain.g_hi");
        }
        DomainConfig {
            length,
            n,
            g_lo,
            g_hi,
        }
    }

    fn noise(&mut self, t: &Table) -> NoiseSpec {
        let given: Vec<&str> = ["a", "a_levels", "a_file"]
            .into_iter()
            .filter(|k| t.contains_key(*k))
            .collect();
        if given.len() > 1 {
            self.error("noise", "give only one of a, a_levels, a_file");
        }
        if let Some(levels) = self.floats(t, "noise", "a_levels") {
            return NoiseSpec::PerLevel(levels);
        }
        if let Some(s) = self.string(t, "noise", "a_file") {
            let path = self.resolve(&s);
            if let Err(e) = read_numbers(&path) {
                self.error("noise.a_file", e);
            }
            return NoiseSpec::PerNodeFile(path);
        }
        let a = self
            .float(t, "noise", "a")
            .unwrap_or_else(|| self.default("noise.a", 0.3));
        if !a.is_finite() {
            self.error("noise.a", "must be finite");
        }
        NoiseSpec::Constant(a)
    }

    fn initial(&mut self, t: &Table) -> InitialSpec {
        let kind = self
            .string(t, "initial", "kind")
            .unwrap_or_else(|| self.default("initial.kind", "eigen".to_string()));
        let amplitude = self.float(t, "initial", "amplitude");
        let allowed: &[&str] = match kind.as_str() {
            "eigen" => &["kind", "k", "amplitude"],
            "bump" => &["kind", "x0", "amplitude"],
            "file" => &["kind", "file"],
            _ => {
                self.error("initial.kind", "expected eigen, bump or file");
                return InitialSpec::Eigen {
                    k: 1,
                    amplitude: 1.0,
                };
            }
        };
        for key in t.keys() {
            if !allowed.contains(&key.as_str()) && SECTIONS[2].1.contains(&key.as_str()) {
                self.error(
                    &format!("initial.{key}"),
                    format!("does not apply to kind = {kind:?}"),
                );
            }
        }
        let amplitude = amplitude.unwrap_or(1.0);
        match kind.as_str() {
            "eigen" => InitialSpec::Eigen {
                k: self
                    .count(t, "initial", "k")
                    .unwrap_or_else(|| self.default("initial.k", 1)),
                amplitude,
            },
            "bump" => InitialSpec::Bump {
                x0: self.float(t, "initial", "x0").unwrap_or_else(|| {
                    self.error("initial.x0", "required for kind = \"bump\"");
                    0.0
                }),
                amplitude,
            },
            _ => match self.string(t, "initial", "file") {
                Some(s) => {
                    let path = self.resolve(&s);
                    if let Err(e) = read_numbers(&path) {
                        self.error("initial.file", e);
                    }
                    InitialSpec::File(path)
                }
                None => {
                    self.error("initial.file", "required for kind = \"file\"");
                    InitialSpec::File(PathBuf::new())
                }
            },
        }
    }

    fn solve(&mut self, t: &Table, mode_override: Option<Mode>) -> SolveConfig {
        let mode = match mode_override {
            Some(m) => m,
            None => match self.string(t, "solve", "mode") {
                Some(s) => s.parse().unwrap_or_else(|e: String| {
                    self.error("solve.mode", e);
                    Mode::Norm
                }),
                None => self.default("solve.mode", Mode::Norm),
            },
        };
        let time_grid = match (t.contains_key("dt"), t.contains_key("depth")) {
            (true, true) => {
                self.error("solve.dt", "give either dt or depth, not both");
                TimeGrid::Dt(0.1)
            }
            (false, true) => TimeGrid::Depth(self.count(t, "solve", "depth").unwrap_or(1)),
            (true, false) => TimeGrid::Dt(self.positive(t, "solve", "dt").unwrap_or(0.1)),
            (false, false) => self.default("solve.dt", TimeGrid::Dt(0.1)),
        };

        let uses = |key: &str| -> bool {
            match key {
                "T" => matches!(mode, Mode::Norm | Mode::Equivalence),
                "T_list" | "limit_ratio" => mode == Mode::Sweep,
                "N0" | "bracket" => mode == Mode::Time,
                "bisection_tol" | "expand_cap" => matches!(mode, Mode::Time | Mode::Equivalence),
                _ => true,
            }
        };
        for key in [
            "T",
            "T_list",
            "limit_ratio",
            "N0",
            "bracket",
            "bisection_tol",
            "expand_cap",
        ] {
            if t.contains_key(key) && !uses(key) {
                self.error(
                    &format!("solve.{key}"),
                    format!("does not apply to mode = {mode:?}", mode = mode.as_str()),
                );
            }
        }

        let horizon = if uses("T") {
            Some(
                self.positive(t, "solve", "T")
                    .unwrap_or_else(|| self.default("solve.T", DEFAULT_HORIZON)),
            )
        } else {
            None
        };
        let horizons = if mode == Mode::Sweep {
            match self.floats(t, "solve", "T_list") {
                Some(list) => {
                    if list.is_empty() {
                        self.error("solve.T_list", "must not be empty");
                    } else if list.iter().any(|&x| x <= 0.0) {
                        self.error("solve.T_list", "values must be positive");
                    } else if list.windows(2).any(|w| w[1] <= w[0]) {
                        self.error("solve.T_list", "must be strictly increasing");
                    }
                    Some(list)
                }
                None => {
                    if !t.contains_key("T_list") {
                        self.error("solve.T_list", "required in sweep mode");
                    }
                    None
                }
            }
        } else {
            None
        };
        let n0 = if mode == Mode::Time {
            let v = self.positive(t, "solve", "N0");
            if v.is_none() && !t.contains_key("N0") {
                self.error("solve.N0", "required in time mode");
            }
            v
        } else {
            None
        };
        let bracket = if mode == Mode::Time {
            match self.floats(t, "solve", "bracket") {
                Some(b) if b.len() == 2 && b[0] > 0.0 && b[1] > b[0] => Some((b[0], b[1])),
                Some(_) => {
                    self.error(
                        "solve.bracket",
                        "expected [T_lo, T_hi] with 0 < T_lo < T_hi",
                    );
                    None
                }
                None => Some(self.default("solve.bracket", DEFAULT_BRACKET)),
            }
        } else {
            None
        };
        let cg_tol = self
            .positive(t, "solve", "cg_tol")
            .unwrap_or_else(|| self.default("solve.cg_tol", 1e-10));
        let max_iter = self.count(t, "solve", "max_iter");
        let bisection_tol = self
            .positive(t, "solve", "bisection_tol")
            .unwrap_or_else(|| self.default("solve.bisection_tol", 1e-3));
        let expand_cap = match t.get("expand_cap").map(Value::as_integer) {
            Some(Some(i)) if i >= 0 => i as usize,
            Some(_) => {
                self.error("solve.expand_cap", "expected a non-negative integer");
                0
            }
            None => self.default("solve.expand_cap", 8),
        };
        let eps_ladder = match self.floats(t, "solve", "eps_ladder") {
            Some(l) => {
                if l.iter().any(|&e| e <= 0.0) || l.windows(2).any(|w| w[1] <= w[0]) {
                    self.error(
                        "solve.eps_ladder",
                        "must be positive and strictly increasing",
                    );
                }
                l
            }
            None => self.default(
                "solve.eps_ladder",
                stochum_core::hum::DEFAULT_EPS_LADDER.to_vec(),
            ),
        };
        let bb_floor = self
            .positive(t, "solve", "bb_floor")
            .unwrap_or_else(|| self.default("solve.bb_floor", 1e-10));
        let limit_ratio = if mode == Mode::Sweep {
            self.positive(t, "solve", "limit_ratio")
        } else {
            None
        };
        let dense_oracle = match t.get("dense_oracle") {
            Some(Value::Boolean(b)) => *b,
            Some(_) => {
                self.error("solve.dense_oracle", "expected true or false");
                false
            }
            None => self.default("solve.dense_oracle", false),
        };
        SolveConfig {
            mode,
            time_grid,
            horizon,
            horizons,
            n0,
            bracket,
            cg_tol,
            max_iter,
            bisection_tol,
            expand_cap,
            eps_ladder,
            bb_floor,
            limit_ratio,
            dense_oracle,
        }
    }

    fn cross_checks(
        &mut self,
        domain: &DomainConfig,
        noise: &NoiseSpec,
        initial: &InitialSpec,
        solve: &SolveConfig,
    ) {
        if let InitialSpec::Bump { x0, .. } = initial {
            if !(*x0 > 0.0 && *x0 < domain.length) {
                self.error("initial.x0", "must lie strictly inside the domain");
            }
        }
        if let InitialSpec::Eigen { k, .. } = initial {
            if *k > domain.n {
                self.error("initial.k", "mode index exceeds the number of grid points");
            }
        }
        if let InitialSpec::Eigen { amplitude, .. } | InitialSpec::Bump { amplitude, .. } = initial
        {
            if *amplitude == 0.0 && solve.mode != Mode::Selftest {
                self.error("initial.amplitude", "the initial state must be nonzero");
            }
        }
        if let InitialSpec::File(path) = initial {
            if let Ok(values) = read_numbers(path) {
                if values.len() != domain.n {
                    self.error(
                        "initial.file",
                        format!("has {} values, expected n = {}", values.len(), domain.n),
                    );
                } else if values.iter().all(|v| *v == 0.0) && solve.mode != Mode::Selftest {
                    self.error("initial.file", "the initial state must be nonzero");
                }
            }
        }
        let fixed_depth = match solve.time_grid {
            TimeGrid::Depth(d) => Some(d),
            TimeGrid::Dt(_) => None,
        };
        // With a fixed step, the depth is known only for a single horizon.
        let depth = fixed_depth.or(match (solve.time_grid, solve.horizon) {
            (TimeGrid::Dt(dt), Some(t)) => Some(((t / dt).round() as usize).max(1)),
            _ => None,
        });
        match noise {
            NoiseSpec::PerLevel(levels) => {
                if let Some(d) = depth {
                    if levels.len() != d {
                        self.error(
                            "noise.a_levels",
                            format!("has {} values, expected depth = {d}", levels.len()),
                        );
                    }
                }
                if fixed_depth.is_none() && matches!(solve.mode, Mode::Sweep | Mode::Time) {
                    self.error(
                        "noise.a_levels",
                        "needs a fixed depth in sweep and time modes",
                    );
                }
            }
            NoiseSpec::PerNodeFile(_) => {
                if fixed_depth.is_none() && matches!(solve.mode, Mode::Sweep | Mode::Time) {
                    self.error(
                        "noise.a_file",
                        "needs a fixed depth in sweep and time modes",
                    );
                }
            }
            NoiseSpec::Constant(_) => {}
        }
        if SpatialGrid::new(domain.n, domain.length, domain.g_lo, domain.g_hi).is_err()
            && !self.errors.iter().any(|e| e.field.starts_with("domain"))
        {
            self.error("domain", "does not define a valid grid");
        }
    }
}

/// Whitespace- or comma-separated numbers; `#` starts a comment.
pub fn read_numbers(path: &Path) -> Result<Vec<f64>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for token in line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
        {
            let v: f64 = token
                .parse()
                .map_err(|_| format!("{}: not a number: {token:?}", path.display()))?;
            if !v.is_finite() {
                return Err(format!("{}: values must be finite", path.display()));
            }
            out.push(v);
        }
    }
    Ok(out)
}

impl ScenarioConfig {
    pub fn grid(&self) -> Result<SpatialGrid, stochum_core::Error> {
        let d = &self.domain;
        SpatialGrid::new(d.n, d.length, d.g_lo, d.g_hi)
    }

    pub fn initial_state(&self, grid: &SpatialGrid) -> Result<SpatialField, String> {
        match &self.initial {
            InitialSpec::Eigen { k, amplitude } => {
                let mut f = grid.sine_mode(*k);
                f.iter_mut().for_each(|v| *v *= amplitude);
                Ok(f)
            }
            InitialSpec::Bump { x0, amplitude } => {
                let mut f = SpatialField::zeros(grid.n());
                let i = ((x0 / grid.h()).round() as usize).clamp(1, grid.n()) - 1;
                f[i] = amplitude / grid.h();
                Ok(f)
            }
            InitialSpec::File(path) => read_numbers(path).map(SpatialField::from),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioConfig, ConfigErrors> {
        parse_str(text, Path::new("."), None)
    }

    #[test]
    fn empty_file_is_a_default_norm_run() {
        let c = parse("").unwrap();
        assert_eq!(c.solve.mode, Mode::Norm);
        assert_eq!(c.solve.horizon, Some(DEFAULT_HORIZON));
        assert_eq!(c.domain.n, 16);
        assert!(c.defaults.contains(&"solve.T".to_string()));
        assert!(c.defaults.contains(&"noise.a".to_string()));
    }

    #[test]
    fn inverted_region_names_the_field() {
        let err = parse("[domain]\ng_lo = 0.8\ng_hi = 0.2\n").unwrap_err();
        assert!(err.mentions("domain.g_lo"));
    }

    #[test]
    fn unsorted_horizons_are_rejected() {
        let err = parse("[solve]\nmode = \"sweep\"\nT_list = [0.5, 0.2]\n").unwrap_err();
        assert!(err.mentions("solve.T_list"));
        assert!(err.to_string().contains("strictly increasing"));
    }

    #[test]
    fn all_errors_are_collected() {
        let err = parse("[domain]\nn = 0\nsize = 3\n[solve]\nmode = \"norm\"\nN0 = 1.0\ndt = 0.1\ndepth = 3\n[extra]\n")
            .unwrap_err();
        for field in ["domain.n", "domain.size", "solve.N0", "solve.dt", "extra"] {
            assert!(err.mentions(field), "{field} missing from {err}");
        }
    }

    #[test]
    fn mode_override_revalidates() {
        let text = "[solve]\nT = 0.5\n";
        assert!(parse_str(text, Path::new("."), Some(Mode::Equivalence)).is_ok());
        let err = parse_str(text, Path::new("."), Some(Mode::Sweep)).unwrap_err();
        assert!(err.mentions("solve.T") && err.mentions("solve.T_list"));
    }

    #[test]
    fn time_mode_needs_a_budget() {
        let err = parse("[solve]\nmode = \"time\"\n").unwrap_err();
        assert!(err.mentions("solve.N0"));
        let c = parse("[solve]\nmode = \"time\"\nN0 = 0.3\n").unwrap();
        assert_eq!(c.solve.bracket, Some(DEFAULT_BRACKET));
    }

    #[test]
    fn initial_state_kinds() {
        let c = parse("[domain]\nn = 4\n[initial]\nkind = \"bump\"\nx0 = 0.4\namplitude = 2.0\n")
            .unwrap();
        let grid = c.grid().unwrap();
        let y0 = c.initial_state(&grid).unwrap();
        assert_eq!(y0.0, vec![0.0, 10.0, 0.0, 0.0]);
        let err = parse("[initial]\nkind = \"bump\"\nk = 2\n").unwrap_err();
        assert!(err.mentions("initial.k") && err.mentions("initial.x0"));
        let err = parse("[initial]\namplitude = 0.0\n").unwrap_err();
        assert!(err.mentions("initial.amplitude"));
    }

    #[test]
    fn per_level_noise_length_is_checked() {
        let err = parse("[noise]\na_levels = [0.1, 0.2]\n[solve]\ndepth = 3\n").unwrap_err();
        assert!(err.mentions("noise.a_levels"));
        assert!(parse("[noise]\na_levels = [0.1, 0.2, 0.3]\n[solve]\ndepth = 3\n").is_ok());
    }
}
