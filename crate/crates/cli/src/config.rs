//! JSON problem configuration. Loading collects every schema violation it
//! can find instead of stopping at the first one.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rsynth_core::lti::{
    input_grid, A3Method, AbstractionParams, CertifyParams, GridSpec, LinearSystem, DEFAULT_NOISE_SAMPLES,
    DEFAULT_PRUNE_TOL,
};
use rsynth_core::mdp::{BoxRegion, Labeling};
use rsynth_core::robust_dp::DEFAULT_TOL;
use rsynth_core::scltl::{parse_formula, ApList, Formula};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub a: Rows,
    pub b: Rows,
    pub bw: Rows,
    pub c: Rows,
    pub u_box: BoxRegion,
    pub x_box: BoxRegion,
    pub x0: Vec<f64>,
}

/// How the abstract model is obtained. `k` is the feedback of the
/// interface, `u = … + K (x − P x̂)`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReductionSpec {
    /// `P = I`, abstract model = concrete model.
    Identity { k: Rows },
    /// Balanced truncation of `A + BK` to `order` states.
    Balanced { order: usize, k: Rows },
    Given {
        a_s: Rows,
        b_s: Rows,
        b_sw: Rows,
        c_s: Rows,
        p: Rows,
        k: Rows,
    },
}

impl ReductionSpec {
    pub fn k(&self) -> &Rows {
        match self {
            ReductionSpec::Identity { k } | ReductionSpec::Balanced { k, .. } | ReductionSpec::Given { k, .. } => k,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightingSpec {
    /// Lyapunov solution of the closed loop with `CᵀC` on the right.
    #[default]
    Default,
    Given { m: Rows },
    /// Minimise the smallest certifiable ε over `M`.
    Optimize {
        #[serde(default = "default_starts")]
        starts: usize,
        #[serde(default = "default_opt_iters")]
        max_iters: u64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_starts() -> usize {
    6
}

fn default_opt_iters() -> u64 {
    3000
}

/// Either `lo`/`hi` or `centre`/`widths` (cell widths), plus cell counts.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centre: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<f64>>,
    pub cells: Vec<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InputGridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsChoice {
    Fixed(f64),
    /// Use the smallest certifiable ε.
    Minimize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    #[serde(default = "default_method")]
    pub method: A3Method,
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default = "default_noise_samples")]
    pub noise_samples: usize,
}

fn default_method() -> A3Method {
    A3Method::Triangle
}

fn default_noise_samples() -> usize {
    DEFAULT_NOISE_SAMPLES
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            method: default_method(),
            noise_seed: 0,
            noise_samples: DEFAULT_NOISE_SAMPLES,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractionConfig {
    #[serde(default = "default_prune")]
    pub prune_tol: f64,
    #[serde(default = "default_sigma_cut")]
    pub sigma_cut: f64,
}

fn default_prune() -> f64 {
    DEFAULT_PRUNE_TOL
}

fn default_sigma_cut() -> f64 {
    AbstractionParams::default().sigma_cut
}

impl Default for AbstractionConfig {
    fn default() -> Self {
        AbstractionConfig {
            prune_tol: default_prune(),
            sigma_cut: default_sigma_cut(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: DEFAULT_TOL,
            max_iter: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    /// Clamp refined inputs into `U` instead of aborting.
    #[serde(default)]
    pub clamp: bool,
    /// Write `traces/run_<k>.csv` for the first `trace_runs` runs.
    #[serde(default)]
    pub trace_runs: usize,
}

fn default_runs() -> usize {
    500
}

fn default_horizon() -> usize {
    200
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            runs: default_runs(),
            horizon: default_horizon(),
            seed: 0,
            clamp: false,
            trace_runs: 0,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsCompareConfig {
    /// Defaults to `0, 5, …, 100`.
    #[serde(default)]
    pub horizons: Vec<u32>,
    /// Defaults to the configured δ.
    #[serde(default)]
    pub deltas: Vec<f64>,
}

/// Validated configuration.
#[derive(Clone, Debug)]
pub struct ProblemConfig {
    pub name: String,
    pub system: SystemSpec,
    pub reduction: ReductionSpec,
    pub weighting: WeightingSpec,
    pub grid: GridConfig,
    pub inputs: InputGridConfig,
    pub aps: Vec<String>,
    pub labels: BTreeMap<String, Vec<BoxRegion>>,
    pub formula: String,
    pub eps: EpsChoice,
    pub delta: f64,
    pub certify: CertifyConfig,
    pub abstraction: AbstractionConfig,
    pub solver: SolverConfig,
    pub simulation: SimulationConfig,
    pub bounds_compare: BoundsCompareConfig,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, source: std::io::Error },
    Parse { line: usize, column: usize, message: String },
    Schema(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            ConfigError::Parse { line, column, message } => {
                write!(f, "invalid JSON at line {line}, column {column}: {message}")
            }
            ConfigError::Schema(v) => {
                writeln!(f, "{} schema violation(s):", v.len())?;
                for (k, msg) in v.iter().enumerate() {
                    if k > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "  - {msg}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

const KNOWN_KEYS: &[&str] = &[
    "name",
    "notes",
    "system",
    "reduction",
    "weighting",
    "grid",
    "inputs",
    "aps",
    "labels",
    "formula",
    "eps",
    "delta",
    "certify",
    "abstraction",
    "solver",
    "simulation",
    "bounds_compare",
    "output_dir",
];

pub fn load_config(path: &Path) -> Result<ProblemConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ProblemConfig, ConfigError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let Value::Object(obj) = root else {
        return Err(ConfigError::Schema(vec!["top level must be a JSON object".into()]));
    };
    let mut errs = Vec::new();
    for key in obj.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            errs.push(format!("unknown field `{key}`"));
        }
    }
    let mut s = Sections { obj: &obj, errs: &mut errs };
    let name: Option<String> = s.optional("name");
    let _notes: Option<Value> = s.optional("notes");
    let system: Option<SystemSpec> = s.required("system");
    let reduction: Option<ReductionSpec> = s.optional("reduction");
    let weighting: Option<WeightingSpec> = s.optional("weighting");
    let grid: Option<GridConfig> = s.required("grid");
    let inputs: Option<InputGridConfig> = s.required("inputs");
    let aps: Option<Vec<String>> = s.required("aps");
    let labels: Option<BTreeMap<String, Vec<BoxRegion>>> = s.required("labels");
    let formula: Option<String> = s.required("formula");
    let eps_raw: Option<Value> = s.required("eps");
    let delta: Option<f64> = s.required("delta");
    let certify: Option<CertifyConfig> = s.optional("certify");
    let abstraction: Option<AbstractionConfig> = s.optional("abstraction");
    let solver: Option<SolverConfig> = s.optional("solver");
    let simulation: Option<SimulationConfig> = s.optional("simulation");
    let bounds_compare: Option<BoundsCompareConfig> = s.optional("bounds_compare");
    let output_dir: Option<PathBuf> = s.optional("output_dir");

    let eps = eps_raw.and_then(|v| match &v {
        Value::Number(n) => n.as_f64().map(EpsChoice::Fixed),
        Value::String(t) if t == "minimize-eps" => Some(EpsChoice::Minimize),
        _ => {
            errs.push(format!("`eps`: expected a number or \"minimize-eps\", got {v}"));
            None
        }
    });

    let (Some(system), Some(grid), Some(inputs), Some(aps), Some(labels), Some(formula), Some(eps), Some(delta)) =
        (system, grid, inputs, aps, labels, formula, eps, delta)
    else {
        return Err(ConfigError::Schema(errs));
    };
    let reduction = match reduction {
        Some(r) => r,
        None => {
            errs.push("`reduction` is required (it carries the interface feedback `k`)".into());
            return Err(ConfigError::Schema(errs));
        }
    };
    let cfg = ProblemConfig {
        name: name.unwrap_or_else(|| "problem".into()),
        system,
        reduction,
        weighting: weighting.unwrap_or_default(),
        grid,
        inputs,
        aps,
        labels,
        formula,
        eps,
        delta,
        certify: certify.unwrap_or_default(),
        abstraction: abstraction.unwrap_or_default(),
        solver: solver.unwrap_or_default(),
        simulation: simulation.unwrap_or_default(),
        bounds_compare: bounds_compare.unwrap_or_default(),
        output_dir,
    };
    cfg.validate(&mut errs);
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Schema(errs))
    }
}

struct Sections<'a> {
    obj: &'a Map<String, Value>,
    errs: &'a mut Vec<String>,
}

impl Sections<'_> {
    fn optional<T: DeserializeOwned>(&mut self, key: &str) -> Option<T> {
        let v = self.obj.get(key)?;
        match serde_json::from_value(v.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                self.errs.push(format!("`{key}`: {e}"));
                None
            }
        }
    }

    fn required<T: DeserializeOwned>(&mut self, key: &str) -> Option<T> {
        if !self.obj.contains_key(key) {
            self.errs.push(format!("missing required field `{key}`"));
            return None;
        }
        self.optional(key)
    }
}

/// Row-major nested arrays → matrix; `None` for ragged or empty input.
pub fn to_matrix(rows: &Rows) -> Option<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first()?.len();
    if c == 0 || rows.iter().any(|row| row.len() != c) {
        return None;
    }
    Some(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn shape(rows: &Rows) -> Option<(usize, usize)> {
    to_matrix(rows).map(|m| m.shape())
}

fn check_matrix(
    errs: &mut Vec<String>,
    name: &str,
    rows: &Rows,
    want: (Option<usize>, Option<usize>),
) -> Option<(usize, usize)> {
    let Some((r, c)) = shape(rows) else {
        errs.push(format!("`{name}` must be a nonempty rectangular matrix"));
        return None;
    };
    if want.0.is_some_and(|w| w != r) || want.1.is_some_and(|w| w != c) {
        let fmt = |o: Option<usize>| o.map_or("·".to_string(), |v| v.to_string());
        errs.push(format!("`{name}` is {r}×{c}, expected {}×{}", fmt(want.0), fmt(want.1)));
    }
    Some((r, c))
}

fn check_len(errs: &mut Vec<String>, name: &str, len: usize, want: Option<usize>) {
    if let Some(w) = want {
        if len != w {
            errs.push(format!("`{name}` has {len} entries, expected {w}"));
        }
    }
}

impl ProblemConfig {
    fn validate(&self, errs: &mut Vec<String>) {
        let sys = &self.system;
        let n = check_matrix(errs, "system.a", &sys.a, (None, None)).map(|(r, _)| r);
        let m = check_matrix(errs, "system.b", &sys.b, (n, None)).map(|(_, c)| c);
        check_matrix(errs, "system.bw", &sys.bw, (n, None));
        let ny = check_matrix(errs, "system.c", &sys.c, (None, n)).map(|(r, _)| r);
        if let Some((r, c)) = shape(&sys.a) {
            if r != c {
                errs.push(format!("`system.a` must be square, got {r}×{c}"));
            }
        }
        check_matrix(errs, "reduction.k", self.reduction.k(), (m, n));
        let n_s = match &self.reduction {
            ReductionSpec::Identity { .. } => n,
            ReductionSpec::Balanced { order, .. } => {
                if *order == 0 || n.is_some_and(|n| *order > n) {
                    errs.push(format!("`reduction.order` must lie in 1..=n, got {order}"));
                }
                Some(*order)
            }
            ReductionSpec::Given { a_s, b_s, b_sw, c_s, p, .. } => {
                let ns = check_matrix(errs, "reduction.a_s", a_s, (None, None)).map(|(r, _)| r);
                check_matrix(errs, "reduction.b_s", b_s, (ns, m));
                check_matrix(errs, "reduction.b_sw", b_sw, (ns, None));
                check_matrix(errs, "reduction.c_s", c_s, (ny, ns));
                check_matrix(errs, "reduction.p", p, (n, ns));
                ns
            }
        };
        if let WeightingSpec::Given { m: mm } = &self.weighting {
            check_matrix(errs, "weighting.m", mm, (n, n));
        }
        check_len(errs, "system.u_box.lo", sys.u_box.lo.len(), m);
        check_len(errs, "system.u_box.hi", sys.u_box.hi.len(), m);
        check_len(errs, "system.x_box.lo", sys.x_box.lo.len(), n);
        check_len(errs, "system.x_box.hi", sys.x_box.hi.len(), n);
        check_len(errs, "system.x0", sys.x0.len(), n);
        check_len(errs, "grid.cells", self.grid.cells.len(), n_s);
        check_len(errs, "inputs.lo", self.inputs.lo.len(), m);
        check_len(errs, "inputs.hi", self.inputs.hi.len(), m);
        check_len(errs, "inputs.counts", self.inputs.counts.len(), m);
        if let Err(e) = self.grid_spec() {
            errs.push(format!("`grid`: {e}"));
        }
        if let Err(e) = input_grid(&self.inputs.lo, &self.inputs.hi, &self.inputs.counts) {
            errs.push(format!("`inputs`: {e}"));
        }

        match ApList::new(self.aps.iter().cloned()) {
            Err(e) => errs.push(format!("`aps`: {e}")),
            Ok(aps) => {
                for name in self.labels.keys() {
                    if aps.index_of(name).is_none() {
                        errs.push(format!("`labels` names unknown atomic proposition `{name}`"));
                    }
                }
                for name in aps.names() {
                    if !self.labels.contains_key(name) {
                        errs.push(format!("atomic proposition `{name}` has no entry in `labels`"));
                    }
                }
                for (name, boxes) in &self.labels {
                    for (k, b) in boxes.iter().enumerate() {
                        if ny.is_some_and(|ny| b.lo.len() != ny || b.hi.len() != ny) {
                            errs.push(format!("`labels.{name}[{k}]` does not match the output dimension"));
                        } else if b.lo.iter().zip(&b.hi).any(|(l, h)| !(l <= h)) {
                            errs.push(format!("`labels.{name}[{k}]` has lo > hi"));
                        }
                    }
                }
                if let Err(e) = parse_formula(&self.formula, &aps) {
                    errs.push(format!("`formula`: {e}"));
                }
            }
        }

        if let EpsChoice::Fixed(e) = self.eps {
            if !(e >= 0.0 && e.is_finite()) {
                errs.push(format!("`eps` must be finite and nonnegative, got {e}"));
            }
        }
        if !(0.0..1.0).contains(&self.delta) {
            errs.push(format!("`delta` must lie in [0, 1), got {}", self.delta));
        }
        for &d in &self.bounds_compare.deltas {
            if !(0.0..=1.0).contains(&d) {
                errs.push(format!("`bounds_compare.deltas` entry {d} is outside [0, 1]"));
            }
        }
        if !(self.solver.tol > 0.0) {
            errs.push(format!("`solver.tol` must be positive, got {}", self.solver.tol));
        }
        if self.simulation.runs == 0 {
            errs.push("`simulation.runs` must be at least 1".into());
        }
        if !(self.abstraction.prune_tol >= 0.0) || !(self.abstraction.sigma_cut > 0.0) {
            errs.push("`abstraction` needs prune_tol ≥ 0 and sigma_cut > 0".into());
        }
        if self.certify.noise_samples < 100_000 {
            errs.push(format!(
                "`certify.noise_samples` must be at least 100000, got {}",
                self.certify.noise_samples
            ));
        }
        if matches!(self.weighting, WeightingSpec::Optimize { starts: 0, .. }) {
            errs.push("`weighting.starts` must be at least 1".into());
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec, String> {
        let g = &self.grid;
        match (&g.lo, &g.hi, &g.centre, &g.widths) {
            (Some(lo), Some(hi), None, None) => GridSpec::new(lo.clone(), hi.clone(), g.cells.clone()),
            (None, None, Some(c), Some(w)) => {
                if c.len() != w.len() || c.len() != g.cells.len() {
                    return Err("centre, widths and cells need one entry per dimension".into());
                }
                GridSpec::centred(c, w, g.cells.clone())
            }
            _ => return Err("give either lo/hi or centre/widths".into()),
        }
        .map_err(|e| e.to_string())
    }

    pub fn input_points(&self) -> Vec<DVector<f64>> {
        input_grid(&self.inputs.lo, &self.inputs.hi, &self.inputs.counts).expect("validated")
    }

    pub fn linear_system(&self) -> LinearSystem {
        let s = &self.system;
        let m = |r: &Rows| to_matrix(r).expect("validated");
        LinearSystem::new(
            m(&s.a),
            m(&s.b),
            m(&s.bw),
            m(&s.c),
            s.u_box.clone(),
            s.x_box.clone(),
            DVector::from_vec(s.x0.clone()),
        )
        .expect("validated")
    }

    pub fn feedback(&self) -> DMatrix<f64> {
        to_matrix(self.reduction.k()).expect("validated")
    }

    pub fn ap_list(&self) -> ApList {
        ApList::new(self.aps.iter().cloned()).expect("validated")
    }

    pub fn formula(&self) -> Formula {
        parse_formula(&self.formula, &self.ap_list()).expect("validated")
    }

    pub fn labeling(&self) -> Labeling {
        let regions = self.labels.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        Labeling::new(&self.ap_list(), self.system.c.len(), regions).expect("validated")
    }

    pub fn certify_params(&self) -> CertifyParams {
        CertifyParams {
            method: self.certify.method,
            noise_seed: self.certify.noise_seed,
            noise_samples: self.certify.noise_samples,
        }
    }

    pub fn abstraction_params(&self) -> AbstractionParams {
        AbstractionParams {
            prune_tol: self.abstraction.prune_tol,
            sigma_cut: self.abstraction.sigma_cut,
        }
    }

    pub fn horizons(&self) -> Vec<u32> {
        if self.bounds_compare.horizons.is_empty() {
            (0..=100).step_by(5).collect()
        } else {
            self.bounds_compare.horizons.clone()
        }
    }

    pub fn compare_deltas(&self) -> Vec<f64> {
        if self.bounds_compare.deltas.is_empty() {
            vec![self.delta]
        } else {
            self.bounds_compare.deltas.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundled(name: &str) -> ProblemConfig {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
        load_config(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
    }

    #[test]
    fn robot_config() {
        let cfg = bundled("robot.json");
        let sys = cfg.linear_system();
        assert_eq!(sys.a, DMatrix::identity(2, 2));
        assert_eq!(sys.b, DMatrix::identity(2, 2));
        let s = 0.1f64.sqrt();
        assert!((sys.bw.clone() - DMatrix::identity(2, 2) * s).amax() < 1e-15);
        let grid = cfg.grid_spec().unwrap();
        assert!((grid.width(0) - 0.41576).abs() < 1e-12);
        assert!((grid.width(1) - 0.4326).abs() < 1e-12);
        assert_eq!(cfg.eps, EpsChoice::Fixed(0.6));
        assert_eq!(cfg.delta, 0.0);
        assert_eq!(cfg.input_points().len(), 49);
        assert_eq!(sys.x0.as_slice(), &[-5.0, -7.5]);
    }

    #[test]
    fn toy_config() {
        let cfg = bundled("toy.json");
        let sys = cfg.linear_system();
        let (a1, a2, a3, b, c1, c2) = (0.3, 0.03, 0.006, 0.8, 0.8, 0.1);
        assert_eq!(sys.a, DMatrix::from_row_slice(3, 3, &[1.0, -a1, a1, 0.0, b, 0.0, 0.0, 0.0, c1]));
        assert_eq!(sys.b.as_slice(), &[-a2, 1.0, 0.0]);
        assert_eq!(sys.bw.as_slice(), &[a3, 0.0, c2]);
        assert_eq!(sys.n(), 3);
        // stored with the sign that makes A + BK Schur; the printed gain is its negative
        let k = cfg.feedback();
        assert_eq!(k.as_slice(), &[0.7738, -0.9369, 0.6829]);
        assert!(matches!(cfg.reduction, ReductionSpec::Balanced { order: 1, .. }));
        assert_eq!(cfg.delta, 0.03);
    }

    #[test]
    fn all_violations_are_listed() {
        let text = r#"{
            "system": {"a": [[1.0]], "b": [[1.0]], "bw": [[0.1]], "c": [[1.0]],
                       "u_box": {"lo": [-1], "hi": [1]}, "x_box": {"lo": [-1], "hi": [1]}, "x0": [0, 0]},
            "reduction": {"kind": "identity", "k": [[-1.0]]},
            "grid": {"lo": [-1], "hi": [1], "cells": [4]},
            "inputs": {"lo": [-1], "hi": [1], "counts": [3]},
            "aps": ["goal"],
            "labels": {"goal": [{"lo": [0.5], "hi": [1]}], "gaol": []},
            "formula": "F goal & F other",
            "eps": 0.1,
            "delta": 1.5,
            "colour": "blue"
        }"#;
        let Err(ConfigError::Schema(errs)) = parse_config(text) else {
            panic!("expected schema errors");
        };
        let joined = errs.join("\n");
        for needle in ["`colour`", "`gaol`", "`other`", "`delta`", "system.x0"] {
            assert!(joined.contains(needle), "{needle} missing from:\n{joined}");
        }
    }

    #[test]
    fn parse_error_has_location() {
        let Err(ConfigError::Parse { line, .. }) = parse_config("{\n  \"eps\": ,\n}") else {
            panic!("expected a parse error");
        };
        assert_eq!(line, 2);
    }

    #[test]
    fn minimize_eps_keyword() {
        let cfg = bundled("robot.json");
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(
            Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/robot.json"),
        )
        .unwrap())
        .unwrap();
        v["eps"] = Value::String("minimize-eps".into());
        let parsed = parse_config(&v.to_string()).unwrap();
        assert_eq!(parsed.eps, EpsChoice::Minimize);
        assert_eq!(parsed.aps, cfg.aps);
        v["eps"] = Value::String("small".into());
        assert!(matches!(parse_config(&v.to_string()), Err(ConfigError::Schema(_))));
    }
}
