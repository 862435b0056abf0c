//! Stage orchestration: translate → abstract → certify → synthesize →
//! simulate / bounds-compare. Every stage recomputes its prerequisites, so
//! any stage can be run on its own and reproduces the same artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use nalgebra::{DMatrix, DVector};
use rsynth_core::lti::{
    align_lifting, certify_relation, default_m, grid_abstraction, initial_abstract_state, normalize_output,
    optimize_m, project_inputs, reduce_balanced, solve_interface_matrices, EpsObjective, GridSpec, Interface,
    LinearSystem, OptimizeParams, ReducedModel, SimRelCert,
};
use rsynth_core::mdp::{build_label_cache, FiniteGmdp, LabelCache, Labeling};
use rsynth_core::robust_dp::{
    apply_operator, gamma_bound, hitting_tails, satisfaction_at, value_iteration, IterationReport, Operator,
    Policy, PolicyMode, SatMode, ValueFn, ViParams,
};
use rsynth_core::scltl::{to_dfa, Dfa};
use rsynth_core::sim::{monte_carlo_estimate, run_coupled_trajectory, write_trace_csv, CoupledSystem, McReport, Verdict};
use serde::Serialize;

use crate::config::{to_matrix, EpsChoice, ProblemConfig, ReductionSpec, WeightingSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CERT_FAILED: i32 = 2;
pub const EXIT_MC_VIOLATION: i32 = 3;

/// Relative slack added to the smallest certifiable ε under "minimize-eps".
const MIN_EPS_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Translate,
    Abstract,
    Certify,
    Synthesize,
    Simulate,
    BoundsCompare,
    All,
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "translate" => Stage::Translate,
            "abstract" => Stage::Abstract,
            "certify" => Stage::Certify,
            "synthesize" => Stage::Synthesize,
            "simulate" => Stage::Simulate,
            "bounds-compare" => Stage::BoundsCompare,
            "all" => Stage::All,
            _ => return Err(format!("unknown stage `{s}`")),
        })
    }
}

impl Stage {
    fn needs(self, other: Stage) -> bool {
        match (self, other) {
            (Stage::All, _) => true,
            (Stage::Simulate, Stage::BoundsCompare) | (Stage::BoundsCompare, Stage::Simulate) => false,
            _ => other <= self,
        }
    }
}

/// Concrete system, abstract model and interface, before any ε is chosen.
pub struct Model {
    pub sys: LinearSystem,
    pub reduced: ReducedModel,
    pub k: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub interface: Interface,
    pub grid: GridSpec,
    pub inputs: Vec<DVector<f64>>,
    pub hsv: Option<Vec<f64>>,
    /// Smallest ε reached by the weighting search, if one ran.
    pub weighting_objective: Option<f64>,
}

pub struct Synthesis {
    pub cache: LabelCache,
    pub robust: ValueFn,
    pub optimistic: ValueFn,
    pub policy: Policy,
    pub robust_report: IterationReport,
    pub optimistic_report: IterationReport,
    /// Satisfaction bounds from the initial abstract state.
    pub bounds: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub delta: f64,
    pub n: u32,
    pub abstract_probability: f64,
    pub gamma: f64,
    pub gamma_lower: f64,
    pub gamma_upper: f64,
    pub robust: f64,
    pub hitting_bound: f64,
}

/// Everything a run produced; stages that did not run leave `None`.
#[derive(Default)]
pub struct PipelineOutput {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub dfa: Option<Dfa>,
    pub model: Option<Model>,
    pub abstraction: Option<FiniteGmdp>,
    pub certificate: Option<SimRelCert>,
    pub synthesis: Option<Synthesis>,
    pub mc: Option<McReport>,
    pub compare: Option<Vec<CompareRow>>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    /// Overrides `simulation.seed`.
    pub seed: Option<u64>,
}

pub fn run_pipeline(cfg: &ProblemConfig, stage: Stage, opts: &RunOptions) -> Result<PipelineOutput> {
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut out = PipelineOutput {
        out_dir: out_dir.clone(),
        ..Default::default()
    };

    let aps = cfg.ap_list();
    let dfa = to_dfa(&cfg.formula().desugar(), &aps).context("translating the formula")?;
    write(&out_dir, "dfa.dot", &dfa.to_dot())?;
    log::info!("DFA: {} locations", dfa.n_locations());
    out.dfa = Some(dfa);
    if !stage.needs(Stage::Abstract) {
        return Ok(out);
    }

    let model = build_model(cfg).context("building the abstract model")?;
    let eps0 = match cfg.eps {
        EpsChoice::Fixed(e) => e,
        EpsChoice::Minimize => 0.0,
    };
    let init = initial_abstract_state(&model.sys, &model.reduced.p, &model.m, &model.grid, eps0)
        .context("placing the initial state on the grid")?;
    let g = grid_abstraction(&model.reduced, &model.grid, &model.inputs, init.cell, &cfg.abstraction_params())
        .context("computing the grid abstraction")?;
    write_json(&out_dir, "abstraction.meta.json", &abstraction_meta(cfg, &model, &g, init.cell))?;
    log::info!("abstraction: {} states × {} actions, {} nonzeros", g.n_states(), g.n_actions(), g.nnz());
    out.abstraction = Some(g);
    out.model = Some(model);
    if !stage.needs(Stage::Certify) {
        return Ok(out);
    }

    let model = out.model.as_ref().unwrap();
    let cert = certify(cfg, model).context("certifying the simulation relation")?;
    write_json(&out_dir, "certificate.json", &cert)?;
    log::info!(
        "certificate {}: ε = {}, minimal ε = {}, λ = {}",
        if cert.passed { "PASS" } else { "FAIL" },
        cert.eps,
        cert.eps_min,
        cert.lambda
    );
    let passed = cert.passed;
    out.certificate = Some(cert);
    if !passed {
        out.exit_code = EXIT_CERT_FAILED;
        return Ok(out);
    }
    if !stage.needs(Stage::Synthesize) {
        return Ok(out);
    }

    let cert = out.certificate.as_ref().unwrap();
    let g = out.abstraction.as_ref().unwrap();
    let dfa = out.dfa.as_ref().unwrap();
    let lab = cfg.labeling();
    let syn = synthesize(cfg, g, &lab, dfa, cert.eps)?;
    write_values(&out_dir, &model.grid, &syn)?;
    write_policy(&out_dir, &model.grid, &model.inputs, &syn.policy)?;
    write_json(
        &out_dir,
        "synthesis.json",
        &serde_json::json!({
            "robust_bound": syn.bounds[0],
            "optimistic_bound": syn.bounds[1],
            "initial_cell": g.initial(),
            "robust_iterations": syn.robust_report.iterations,
            "robust_residual": syn.robust_report.residual,
            "robust_converged": syn.robust_report.converged,
            "optimistic_iterations": syn.optimistic_report.iterations,
            "optimistic_residual": syn.optimistic_report.residual,
            "optimistic_converged": syn.optimistic_report.converged,
        }),
    )?;
    log::info!("bounds from the initial state: [{}, {}]", syn.bounds[0], syn.bounds[1]);

    if stage.needs(Stage::BoundsCompare) {
        let rows = bounds_compare(cfg, g, &syn);
        write_compare(&out_dir, &rows)?;
        out.compare = Some(rows);
    }
    if stage.needs(Stage::Simulate) {
        let seed = opts.seed.unwrap_or(cfg.simulation.seed);
        let cs = CoupledSystem {
            sys: &model.sys,
            reduced: &model.reduced,
            interface: &model.interface,
            m: &model.m,
            eps: cert.eps,
            grid: &model.grid,
            inputs: &model.inputs,
            policy: &syn.policy,
            dfa,
            labeling: &lab,
            x_hat0: DVector::from_vec(cert.initial.as_ref().expect("certified").x_hat0.clone()),
            clamp: cfg.simulation.clamp,
        };
        let sim = &cfg.simulation;
        let report = monte_carlo_estimate(&cs, sim.runs, sim.horizon, seed, syn.bounds).context("Monte Carlo")?;
        if sim.trace_runs > 0 {
            let dir = out_dir.join("traces");
            fs::create_dir_all(&dir)?;
            for r in 0..sim.trace_runs.min(sim.runs) {
                let t = run_coupled_trajectory(&cs, sim.horizon, seed, r as u64, true)?;
                let path = dir.join(format!("run_{r}.csv"));
                let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                write_trace_csv(BufWriter::new(f), &t.trace)?;
            }
        }
        write_json(&out_dir, "mc_report.json", &report)?;
        if report.verdict == Verdict::Fail {
            out.exit_code = EXIT_MC_VIOLATION;
        }
        out.mc = Some(report);
    }
    out.synthesis = Some(syn);
    Ok(out)
}

pub fn build_model(cfg: &ProblemConfig) -> Result<Model> {
    let sys = cfg.linear_system();
    let k = cfg.feedback();
    let grid = cfg.grid_spec().map_err(anyhow::Error::msg)?;
    let inputs = cfg.input_points();
    let mat = |r| to_matrix(r).expect("validated");
    let (base, project, hsv) = match &cfg.reduction {
        ReductionSpec::Identity { .. } => (ReducedModel::identity(&sys), false, None),
        ReductionSpec::Balanced { order, .. } => {
            let bt = reduce_balanced(&sys, &k, *order)?;
            let (aligned, q) = align_lifting(&sys, &bt.reduced)?;
            let (normalized, _) = normalize_output(&sys, &aligned, &q)?;
            (normalized, true, Some(bt.hsv))
        }
        ReductionSpec::Given { a_s, b_s, b_sw, c_s, p, .. } => (
            ReducedModel {
                a_s: mat(a_s),
                b_s: mat(b_s),
                b_sw: mat(b_sw),
                c_s: mat(c_s),
                p: mat(p),
            },
            false,
            None,
        ),
    };
    let acl = sys.closed_loop(&k)?;
    let (m, objective) = match &cfg.weighting {
        WeightingSpec::Default => (default_m(&acl, &sys.c)?, None),
        WeightingSpec::Given { m } => (mat(m), None),
        WeightingSpec::Optimize { starts, max_iters, seed } => {
            let m0 = default_m(&acl, &sys.c)?;
            let obj = EpsObjective::new(
                &sys,
                &base,
                &k,
                &grid,
                &inputs,
                cfg.delta,
                cfg.certify.method,
                project,
                *seed,
            );
            let params = OptimizeParams {
                starts: *starts,
                max_iters: *max_iters,
                seed: *seed,
            };
            let (m, v) = optimize_m(&sys.c, &m0, |m| obj.eval(m), &params)?;
            log::info!("weighting search: smallest ε {v}");
            (m, Some(v))
        }
    };
    let reduced = if project {
        project_inputs(&sys, &base, &m)?
    } else {
        base
    };
    let (q, r) = solve_interface_matrices(&sys, &reduced)?;
    let interface = Interface {
        r,
        q,
        k: k.clone(),
        p: reduced.p.clone(),
        u_box: sys.u_box.clone(),
    };
    Ok(Model {
        sys,
        reduced,
        k,
        m,
        interface,
        grid,
        inputs,
        hsv,
        weighting_objective: objective,
    })
}

pub fn certify(cfg: &ProblemConfig, model: &Model) -> Result<SimRelCert> {
    let run = |eps| {
        certify_relation(
            &model.sys,
            &model.reduced,
            &model.interface,
            &model.m,
            &model.grid,
            &model.inputs,
            eps,
            cfg.delta,
            &cfg.certify_params(),
        )
    };
    Ok(match cfg.eps {
        EpsChoice::Fixed(eps) => run(eps)?,
        EpsChoice::Minimize => {
            let probe = run(0.0)?;
            let residual = probe.initial.as_ref().map_or(0.0, |i| i.residual);
            let eps = probe.eps_min.max(residual) * (1.0 + MIN_EPS_SLACK);
            log::info!("minimal certifiable ε: {eps}");
            run(eps)?
        }
    })
}

pub fn synthesize(cfg: &ProblemConfig, g: &FiniteGmdp, lab: &Labeling, dfa: &Dfa, eps: f64) -> Result<Synthesis> {
    let cache = build_label_cache(g, lab, dfa, eps).context("labelling the abstraction")?;
    let params = ViParams {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        ..Default::default()
    };
    let (robust, policy, robust_report) =
        value_iteration(&Operator::eps_delta_robust(cfg.delta), g, &cache, &params).context("robust synthesis")?;
    let (optimistic, _, optimistic_report) =
        value_iteration(&Operator::optimistic(cfg.delta), g, &cache, &params).context("optimistic values")?;
    for (what, rep) in [("robust", &robust_report), ("optimistic", &optimistic_report)] {
        if !rep.converged {
            log::warn!("{what} value iteration stopped at residual {:e}", rep.residual);
        }
    }
    let i0 = g.initial();
    let bounds = [
        satisfaction_at(&robust, &cache, i0, SatMode::EpsDeltaRobust),
        satisfaction_at(&optimistic, &cache, i0, SatMode::Optimistic),
    ];
    Ok(Synthesis {
        cache,
        robust,
        optimistic,
        policy,
        robust_report,
        optimistic_report,
        bounds,
    })
}

/// Finite-horizon comparison from the initial abstract state under the
/// synthesized policy, with exact labels: the `N`-step probability on the
/// abstraction, the worst-case deviation `γ` around it, `N` δ-robust
/// backups, and the hitting-time lower bound on those backups.
pub fn bounds_compare(cfg: &ProblemConfig, g: &FiniteGmdp, syn: &Synthesis) -> Vec<CompareRow> {
    let mut horizons = cfg.horizons();
    horizons.sort_unstable();
    horizons.dedup();
    let n_max = *horizons.last().unwrap_or(&0) as usize;
    let cache = &syn.cache;
    let policy = &syn.policy;
    let i0 = g.initial();
    let q0 = cache.succ(i0, cache.q0());
    let accepting = cache.is_accepting(q0);
    let at = |v: &ValueFn| if accepting { 1.0 } else { v.get(i0, q0) };

    let nq = cache.n_locations();
    let target: Vec<bool> = (0..(g.n_states() + 1) * nq)
        .map(|s| s < g.n_states() * nq && cache.is_accepting(s % nq))
        .collect();
    let tails = hitting_tails(g, cache, policy, &target, n_max);
    let mut plain = vec![0.0; n_max + 1];
    let mut v = ValueFn::zeros(g.n_states(), nq);
    plain[0] = at(&v);
    for l in 1..=n_max {
        v = apply_operator(&Operator::plain(), &v, g, cache, PolicyMode::Fixed(policy)).0;
        plain[l] = at(&v);
    }

    let mut rows = Vec::new();
    for delta in cfg.compare_deltas() {
        let op = Operator::delta_robust(delta);
        let mut v = ValueFn::zeros(g.n_states(), nq);
        let mut robust = vec![at(&v)];
        for _ in 1..=n_max {
            v = apply_operator(&op, &v, g, cache, PolicyMode::Fixed(policy)).0;
            robust.push(at(&v));
        }
        for &n in &horizons {
            let l = n as usize;
            let p = plain[l];
            let gamma = gamma_bound(n, delta);
            let hitting = if accepting {
                1.0
            } else {
                p - delta * tails[1..=l].iter().sum::<f64>()
            };
            rows.push(CompareRow {
                delta,
                n,
                abstract_probability: p,
                gamma,
                gamma_lower: (p - gamma).max(0.0),
                gamma_upper: (p + gamma).min(1.0),
                robust: robust[l],
                hitting_bound: hitting,
            });
        }
    }
    rows
}

/// 17 significant digits: exact round trip for `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(dir, name, &text)
}

fn abstraction_meta(cfg: &ProblemConfig, model: &Model, g: &FiniteGmdp, initial: usize) -> serde_json::Value {
    let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
    let mut max_sink: f64 = 0.0;
    for i in 0..g.n_states() {
        for a in 0..g.n_actions() {
            max_sink = max_sink.max(g.row(i, a).2);
        }
    }
    serde_json::json!({
        "name": cfg.name,
        "n_states": g.n_states(),
        "n_actions": g.n_actions(),
        "nnz": g.nnz(),
        "sink_index": g.sink_index(),
        "max_sink_probability": max_sink,
        "initial_cell": initial,
        "initial_representative": model.grid.center(initial),
        "grid": model.grid,
        "inputs": model.inputs.iter().map(|u| u.as_slice().to_vec()).collect::<Vec<_>>(),
        "reduced": model.reduced,
        "hankel_singular_values": model.hsv,
        "m": rows(&model.m),
        "weighting_objective": model.weighting_objective,
        "prune_tol": cfg.abstraction.prune_tol,
        "sigma_cut": cfg.abstraction.sigma_cut,
    })
}

fn coord_header(dim: usize) -> String {
    (0..dim).map(|d| format!(",xhat{d}")).collect()
}

fn write_values(dir: &Path, grid: &GridSpec, syn: &Synthesis) -> Result<()> {
    let nq = syn.robust.n_locations();
    let mut s = format!("state{},q,robust,optimistic\n", coord_header(grid.dim()));
    for i in 0..syn.robust.n_states() {
        let c: String = grid.center(i).iter().map(|v| format!(",{}", fmt17(*v))).collect();
        for q in 0..nq {
            writeln!(
                s,
                "{i}{c},{q},{},{}",
                fmt17(syn.robust.get(i, q)),
                fmt17(syn.optimistic.get(i, q))
            )?;
        }
    }
    write(dir, "values.csv", &s)
}

fn write_policy(dir: &Path, grid: &GridSpec, inputs: &[DVector<f64>], policy: &Policy) -> Result<()> {
    let m = inputs.first().map_or(0, |u| u.len());
    let uh: String = (0..m).map(|d| format!(",uhat{d}")).collect();
    let mut s = format!("state{},q,action{uh}\n", coord_header(grid.dim()));
    for i in 0..policy.n_states() {
        let c: String = grid.center(i).iter().map(|v| format!(",{}", fmt17(*v))).collect();
        for q in 0..policy.n_locations() {
            let a = policy.action(i, q);
            let u: String = inputs[a].iter().map(|v| format!(",{}", fmt17(*v))).collect();
            writeln!(s, "{i}{c},{q},{a}{u}")?;
        }
    }
    write(dir, "policy.csv", &s)
}

fn write_compare(dir: &Path, rows: &[CompareRow]) -> Result<()> {
    let mut s = String::from("delta,N,abstract_probability,gamma,gamma_lower,gamma_upper,robust,hitting_bound\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            fmt17(r.delta),
            r.n,
            fmt17(r.abstract_probability),
            fmt17(r.gamma),
            fmt17(r.gamma_lower),
            fmt17(r.gamma_upper),
            fmt17(r.robust),
            fmt17(r.hitting_bound)
        )?;
    }
    write(dir, "bounds_compare.csv", &s)
}
