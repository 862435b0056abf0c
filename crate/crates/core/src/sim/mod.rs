//! Coupled simulation of the concrete system and its abstraction under a
//! synthesized policy: shared noise, interface refinement, and DFA
//! monitoring on the concrete outputs.

mod montecarlo;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::gauss::GaussianStream;
use crate::lti::{interface_apply, GridSpec, Interface, LinearSystem, LtiError, ReducedModel};
use crate::mdp::{letter_of, Labeling, MdpError};
use crate::robust_dp::Policy;
use crate::scltl::Dfa;

pub use montecarlo::{clopper_pearson, monte_carlo_estimate, McReport, Verdict, CI_LEVEL};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state became non-finite at step {step}")]
    NonFinite { step: usize },
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Labeling(#[from] MdpError),
    #[error("simulation setup: {0}")]
    Setup(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Sat,
    UnsatTrap,
    Undecided,
}

/// Controller memory: abstract cell (`None` once the abstraction has left
/// the grid), DFA location and time.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    pub cell: Option<usize>,
    pub q: usize,
    pub t: usize,
}

/// Everything the closed loop needs besides the seed.
pub struct CoupledSystem<'a> {
    pub sys: &'a LinearSystem,
    pub reduced: &'a ReducedModel,
    pub interface: &'a Interface,
    /// Weighting of the relation `‖x − P x̂‖_M ≤ ε`.
    pub m: &'a DMatrix<f64>,
    pub eps: f64,
    pub grid: &'a GridSpec,
    pub inputs: &'a [DVector<f64>],
    pub policy: &'a Policy,
    pub dfa: &'a Dfa,
    pub labeling: &'a Labeling,
    /// Abstract state at `t = 0`.
    pub x_hat0: DVector<f64>,
    /// Clamp refined inputs into `U` instead of failing.
    pub clamp: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub u: Vec<f64>,
    pub q: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub outcome: Outcome,
    pub steps: usize,
    /// Steps at which `‖x − P x̂‖_M > ε`.
    pub relation_exits: usize,
    pub clamped: usize,
    pub left_grid: bool,
    pub trace: Vec<TraceRow>,
}

impl CoupledSystem<'_> {
    fn residual(&self, x: &DVector<f64>, x_hat: &DVector<f64>) -> f64 {
        let d = x - &self.reduced.p * x_hat;
        (d.transpose() * self.m * &d)[(0, 0)].max(0.0).sqrt()
    }

    fn validate(&self) -> Result<(), SimError> {
        let n_s = self.reduced.n_s();
        if self.grid.dim() != n_s || self.x_hat0.len() != n_s {
            return Err(SimError::Setup("grid and abstract state dimensions differ".into()));
        }
        if self.policy.n_states() != self.grid.n_cells() || self.policy.n_locations() != self.dfa.n_locations() {
            return Err(SimError::Setup("policy does not cover the abstract product".into()));
        }
        if self.policy.as_slice().iter().any(|&a| a as usize >= self.inputs.len()) {
            return Err(SimError::Setup("policy refers to an unknown input".into()));
        }
        if self.labeling.dim() != self.sys.c.nrows() {
            return Err(SimError::Setup("labeling dimension differs from the output dimension".into()));
        }
        Ok(())
    }
}

/// One closed-loop run of at most `horizon` steps. Noise comes from stream
/// `stream` of `seed`; the same `w_t` drives both models.
pub fn run_coupled_trajectory(
    cs: &CoupledSystem<'_>,
    horizon: usize,
    seed: u64,
    stream: u64,
    record_trace: bool,
) -> Result<Trajectory, SimError> {
    cs.validate()?;
    let sys = cs.sys;
    let red = cs.reduced;
    let traps = cs.dfa.rejecting_traps();
    let mut rng = GaussianStream::new(seed, stream);
    let mut w = DVector::zeros(sys.bw.ncols());

    let mut x = sys.x0.clone();
    // Off the grid the abstract state keeps evolving unsnapped; the cell is gone for good.
    let mut x_hat = cs.x_hat0.clone();
    let mut state = ControllerState {
        cell: cs.grid.cell_of(x_hat.as_slice()),
        q: cs.dfa.step(cs.dfa.initial(), letter_of(cs.labeling, (&sys.c * &x).as_slice())?),
        t: 0,
    };
    let mut out = Trajectory {
        outcome: Outcome::Undecided,
        steps: 0,
        relation_exits: 0,
        clamped: 0,
        left_grid: state.cell.is_none(),
        trace: Vec::new(),
    };
    let record = |out: &mut Trajectory, st: &ControllerState, x: &DVector<f64>, xh: &DVector<f64>, u: &[f64]| {
        if record_trace {
            out.trace.push(TraceRow {
                t: st.t,
                x: x.as_slice().to_vec(),
                x_hat: xh.as_slice().to_vec(),
                u: u.to_vec(),
                q: st.q,
                residual: cs.residual(x, xh),
            });
        }
    };
    if cs.residual(&x, &x_hat) > cs.eps {
        out.relation_exits += 1;
    }

    while state.t < horizon {
        if cs.dfa.is_accepting(state.q) {
            out.outcome = Outcome::Sat;
            break;
        }
        if traps[state.q] {
            out.outcome = Outcome::UnsatTrap;
            break;
        }
        let action = match state.cell {
            Some(i) => cs.policy.action(i, state.q),
            None => 0,
        };
        let u_hat = &cs.inputs[action];
        let raw = cs.interface.raw(u_hat, &x_hat, &x);
        let u = interface_apply(cs.interface, u_hat, &x_hat, &x, cs.clamp)?;
        if u != raw {
            out.clamped += 1;
        }
        record(&mut out, &state, &x, &x_hat, u.as_slice());

        rng.fill_normal(w.as_mut_slice());
        x = &sys.a * &x + &sys.b * &u + &sys.bw * &w;
        let next = &red.a_s * &x_hat + &red.b_s * u_hat + &red.b_sw * &w;
        state.t += 1;
        if x.iter().chain(next.iter()).any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite { step: state.t });
        }
        match state.cell.and_then(|_| cs.grid.cell_of(next.as_slice())) {
            Some(j) => {
                state.cell = Some(j);
                x_hat = DVector::from_vec(cs.grid.center(j));
            }
            None => {
                if state.cell.is_some() {
                    log::debug!("abstract state left the grid at step {}", state.t);
                }
                state.cell = None;
                out.left_grid = true;
                x_hat = next;
            }
        }
        state.q = cs.dfa.step(state.q, letter_of(cs.labeling, (&sys.c * &x).as_slice())?);
        if cs.residual(&x, &x_hat) > cs.eps {
            out.relation_exits += 1;
        }
    }
    if state.t >= horizon && out.outcome == Outcome::Undecided {
        if cs.dfa.is_accepting(state.q) {
            out.outcome = Outcome::Sat;
        } else if traps[state.q] {
            out.outcome = Outcome::UnsatTrap;
        }
    }
    out.steps = state.t;
    record(&mut out, &state, &x, &x_hat, &[]);
    Ok(out)
}

/// Trace CSV: `t, x…, x̂…, u…, q, relation_residual`. The final row has
/// empty input columns.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceRow]) -> std::io::Result<()> {
    let Some(first) = trace.first() else {
        return writeln!(w, "t,q,relation_residual");
    };
    let mut header = vec!["t".to_string()];
    header.extend((0..first.x.len()).map(|i| format!("x{i}")));
    header.extend((0..first.x_hat.len()).map(|i| format!("xhat{i}")));
    let nu = trace.iter().map(|r| r.u.len()).max().unwrap_or(0);
    header.extend((0..nu).map(|i| format!("u{i}")));
    header.push("q".into());
    header.push("relation_residual".into());
    writeln!(w, "{}", header.join(","))?;
    for r in trace {
        let mut cells = vec![r.t.to_string()];
        cells.extend(r.x.iter().map(|v| format!("{v:.17e}")));
        cells.extend(r.x_hat.iter().map(|v| format!("{v:.17e}")));
        cells.extend((0..nu).map(|i| r.u.get(i).map(|v| format!("{v:.17e}")).unwrap_or_default()));
        cells.push(r.q.to_string());
        cells.push(format!("{:.17e}", r.residual));
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mdp::BoxRegion;
    use crate::scltl::{parse_formula, to_dfa, ApList};

    pub(crate) struct Fixture {
        pub sys: LinearSystem,
        pub reduced: ReducedModel,
        pub iface: Interface,
        pub m: DMatrix<f64>,
        pub grid: GridSpec,
        pub inputs: Vec<DVector<f64>>,
        pub policy: Policy,
        pub dfa: Dfa,
        pub lab: Labeling,
    }

    /// 1-D integrator driven toward the goal `[4, 6]` with no reduction.
    pub(crate) fn integrator(x0: f64, noise: f64, formula: &str) -> Fixture {
        let sys = LinearSystem::new(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, noise),
            DMatrix::identity(1, 1),
            BoxRegion::new(vec![-2.0], vec![2.0]),
            BoxRegion::new(vec![-10.0], vec![10.0]),
            DVector::from_element(1, x0),
        )
        .unwrap();
        let reduced = ReducedModel::identity(&sys);
        let iface = Interface {
            r: DMatrix::identity(1, 1),
            q: DMatrix::zeros(1, 1),
            k: -DMatrix::identity(1, 1),
            p: DMatrix::identity(1, 1),
            u_box: sys.u_box.clone(),
        };
        let grid = GridSpec::new(vec![-10.0], vec![10.0], vec![40]).unwrap();
        let inputs = vec![DVector::from_element(1, 0.0), DVector::from_element(1, 0.5)];
        let aps = ApList::new(["goal", "bad"]).unwrap();
        let dfa = to_dfa(&parse_formula(formula, &aps).unwrap().desugar(), &aps).unwrap();
        let lab = Labeling::new(
            &aps,
            1,
            vec![
                ("goal".into(), vec![BoxRegion::new(vec![4.0], vec![6.0])]),
                ("bad".into(), vec![BoxRegion::new(vec![-10.0], vec![-5.0])]),
            ],
        )
        .unwrap();
        let policy = Policy::constant(40, dfa.n_locations(), 1);
        Fixture {
            sys,
            reduced,
            iface,
            m: DMatrix::identity(1, 1),
            grid,
            inputs,
            policy,
            dfa,
            lab,
        }
    }

    impl Fixture {
        pub(crate) fn coupled(&self, eps: f64) -> CoupledSystem<'_> {
            let x_hat0 = DVector::from_vec(self.grid.snap(self.sys.x0.as_slice()).unwrap());
            CoupledSystem {
                sys: &self.sys,
                reduced: &self.reduced,
                interface: &self.iface,
                m: &self.m,
                eps,
                grid: &self.grid,
                inputs: &self.inputs,
                policy: &self.policy,
                dfa: &self.dfa,
                labeling: &self.lab,
                x_hat0,
                clamp: false,
            }
        }
    }

    #[test]
    fn immediate_satisfaction() {
        let f = integrator(5.1, 0.0, "F goal");
        let t = run_coupled_trajectory(&f.coupled(0.3), 10, 0, 0, true).unwrap();
        assert_eq!(t.outcome, Outcome::Sat);
        assert_eq!(t.steps, 0);
    }

    #[test]
    fn frozen_in_trap() {
        // !bad U goal with the state parked inside `bad`: zero input, no noise
        let mut f = integrator(-7.0, 0.0, "!bad U goal");
        f.policy = Policy::constant(40, f.dfa.n_locations(), 0);
        let t = run_coupled_trajectory(&f.coupled(0.3), 50, 0, 0, false).unwrap();
        assert_eq!(t.outcome, Outcome::UnsatTrap);
        assert!(t.steps <= f.dfa.n_locations());
    }

    #[test]
    fn deterministic_drive_reaches_goal() {
        let f = integrator(0.25, 0.0, "F goal");
        let t = run_coupled_trajectory(&f.coupled(0.3), 100, 0, 0, true).unwrap();
        assert_eq!(t.outcome, Outcome::Sat);
        // 0.25 + 0.5 k ≥ 4 first at k = 8
        assert_eq!(t.steps, 8);
        assert_eq!(t.relation_exits, 0);
        assert!(t.trace.iter().all(|r| r.residual <= 0.25 + 1e-12));
    }

    #[test]
    fn coupled_outputs_stay_close() {
        // No reduction: the gap x − x̂ is reset by the interface each step,
        // so it never exceeds the half cell width.
        let f = integrator(-3.0, 0.3, "F goal");
        for stream in 0..20 {
            let t = run_coupled_trajectory(&f.coupled(0.25), 40, 9, stream, true).unwrap();
            for r in &t.trace {
                if r.x_hat.iter().all(|v| v.abs() < 10.0) {
                    assert!(r.residual <= 0.25 + 1e-12, "stream {stream}: {r:?}");
                }
            }
        }
    }

    #[test]
    fn reproducible_and_stream_dependent() {
        let f = integrator(-3.0, 0.5, "F goal");
        let a = run_coupled_trajectory(&f.coupled(0.25), 30, 4, 1, true).unwrap();
        let b = run_coupled_trajectory(&f.coupled(0.25), 30, 4, 1, true).unwrap();
        let c = run_coupled_trajectory(&f.coupled(0.25), 30, 4, 2, true).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn input_violation_is_an_error_unless_clamped() {
        let mut f = integrator(0.0, 0.0, "F goal");
        f.inputs = vec![DVector::from_element(1, 3.0)];
        f.policy = Policy::constant(40, f.dfa.n_locations(), 0);
        assert!(matches!(
            run_coupled_trajectory(&f.coupled(0.3), 5, 0, 0, false),
            Err(SimError::Lti(LtiError::InputOutOfBounds { .. }))
        ));
        let mut cs = f.coupled(0.3);
        cs.clamp = true;
        let t = run_coupled_trajectory(&cs, 5, 0, 0, false).unwrap();
        assert!(t.clamped > 0);
    }

    #[test]
    fn trace_csv_layout() {
        let f = integrator(0.25, 0.0, "F goal");
        let t = run_coupled_trajectory(&f.coupled(0.3), 3, 0, 0, true).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &t.trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x0,xhat0,u0,q,relation_residual");
        assert_eq!(text.lines().count(), 1 + t.trace.len());
    }
}
