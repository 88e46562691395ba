//! Closed-loop simulation: RK4 flow of the plant and auxiliary states with
//! the switching parameters frozen inside each sample, and the supervisor
//! run at every sample.

use std::fmt::Write as _;
use std::io::{self, Write};

use thiserror::Error;

use crate::baselines::{nussbaum_control, nussbaum_gain, NussbaumParams, NussbaumState};
use crate::ft_controller::{ControlError, EventKind, SwitchEvent, SwitchState};
use crate::numerics::{try_rk4_step, NumericsError};
use crate::plant::{plant_derivative, PlantError, PlantModel};
use crate::supervisor::{apply_switching, init_switch_state, Evaluation, Scheme, SupervisorError};

pub const BLOW_UP: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation setting: {0}")]
    Config(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("control failure at t = {t}: {source}")]
    Control { t: f64, source: ControlError },
    #[error("switch cap of {cap} exceeded at t = {t}")]
    SwitchCap { t: f64, cap: usize },
    #[error("state blew up at t = {t}")]
    BlowUp { t: f64 },
    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },
}

/// Error raised inside the right-hand side; kept separate so RK4 stage
/// failures can be told apart.
#[derive(Debug)]
enum StageError {
    Plant(PlantError),
    Control(ControlError),
    Numerics(NumericsError),
}

impl From<NumericsError> for StageError {
    fn from(e: NumericsError) -> Self {
        StageError::Numerics(e)
    }
}

impl StageError {
    fn into_sim(self, t: f64) -> SimError {
        match self {
            StageError::Plant(PlantError::NonFinite { .. }) | StageError::Numerics(NumericsError::NonFinite { .. }) => {
                SimError::BlowUp { t }
            }
            StageError::Plant(e) => SimError::Plant(e),
            StageError::Control(e) => SimError::Control { t, source: e },
            StageError::Numerics(e) => SimError::Integration {
                t,
                reason: e.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Controller {
    Supervised(Scheme),
    Nussbaum(NussbaumParams),
}

impl Controller {
    pub fn n(&self) -> usize {
        match self {
            Controller::Supervised(s) => s.n(),
            Controller::Nussbaum(_) => 2,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Controller::Supervised(s) if s.mode().is_pft() => "pft",
            Controller::Supervised(_) => "ft",
            Controller::Nussbaum(_) => "nussbaum",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    pub tol_settle: f64,
    /// Upper bound on RK4 substeps per sample; 1 keeps the plain fixed step.
    pub max_substeps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            t_end: 10.0,
            record_stride: 100,
            tol_settle: 1e-3,
            max_substeps: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SimError::Config(format!("dt must be positive, found {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(SimError::Config(format!(
                "t_end must be positive, found {}",
                self.t_end
            )));
        }
        if self.record_stride == 0 {
            return Err(SimError::Config("record_stride must be >= 1".into()));
        }
        if self.tol_settle.is_nan() || self.tol_settle <= 0.0 {
            return Err(SimError::Config(format!(
                "tol_settle must be positive, found {}",
                self.tol_settle
            )));
        }
        if self.max_substeps == 0 {
            return Err(SimError::Config("max_substeps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-sample bookkeeping for the hybrid invariants, gathered at every
/// integration sample rather than only recorded ones.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvariantLog {
    pub samples: usize,
    /// Largest `S_i` seen at samples where no switch fired.
    pub max_quiet_supervisory: f64,
    /// Largest `S_i` right after a switch fired.
    pub max_post_switch_supervisory: f64,
    /// Largest `|s_i| / χ_i` after switching, over all samples.
    pub max_barrier_ratio: f64,
    /// Samples where a barrier was already violated before switching.
    pub pre_switch_barrier_hits: usize,
    /// Switching instants.
    pub switch_times: Vec<f64>,
    /// `Σ η_i` at every sample, starting at `t = 0`.
    pub eta_sum: Vec<f64>,
    /// Time of every sample, aligned with `eta_sum`.
    pub sample_times: Vec<f64>,
    /// Largest substep count used in one sample.
    pub max_substeps_used: usize,
    /// Sample intervals split because a barrier was crossed inside them.
    pub refined_intervals: usize,
}

impl InvariantLog {
    fn new() -> Self {
        Self {
            max_quiet_supervisory: f64::NEG_INFINITY,
            max_post_switch_supervisory: f64::NEG_INFINITY,
            max_substeps_used: 1,
            ..Default::default()
        }
    }

    /// Index of the first sample after the last switching instant.
    pub fn tail_start(&self) -> usize {
        match self.switch_times.last() {
            None => 0,
            Some(&t_last) => self.sample_times.partition_point(|&t| t <= t_last),
        }
    }

    /// Largest sample-to-sample increase of `Σ η_i` after the last switch.
    pub fn tail_max_increase(&self) -> f64 {
        let start = self.tail_start().saturating_sub(1);
        self.eta_sum[start..]
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub controller: &'static str,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub s_values: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    /// Auxiliary variables; `ξ` for the Nussbaum baseline.
    pub eta: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<u32>>,
    pub chi: Vec<Vec<f64>>,
    /// Direction estimates; `N(ξ)` for the Nussbaum baseline.
    pub theta: Vec<Vec<f64>>,
    pub events: Vec<SwitchEvent>,
    pub switch_count: usize,
    pub invariants: InvariantLog,
}

impl Trajectory {
    fn new(controller: &'static str) -> Self {
        Self {
            controller,
            times: Vec::new(),
            states: Vec::new(),
            s_values: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            eta: Vec::new(),
            sigma: Vec::new(),
            chi: Vec::new(),
            theta: Vec::new(),
            events: Vec::new(),
            switch_count: 0,
            invariants: InvariantLog::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    /// State at the last recorded time `<= t`.
    pub fn state_at(&self, t: f64) -> Option<&[f64]> {
        let k = self.times.partition_point(|&tt| tt <= t + 1e-12);
        k.checked_sub(1).map(|k| self.states[k].as_slice())
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        t: f64,
        x: &[f64],
        s: &[f64],
        u: f64,
        v: &[f64],
        eta: &[f64],
        sigma: &[u32],
        chi: &[f64],
        theta: &[f64],
    ) {
        self.times.push(t);
        self.states.push(x.to_vec());
        self.s_values.push(s.to_vec());
        self.u.push(u);
        self.v.push(v.to_vec());
        self.eta.push(eta.to_vec());
        self.sigma.push(sigma.to_vec());
        self.chi.push(chi.to_vec());
        self.theta.push(theta.to_vec());
    }
}

/// A failed run together with everything recorded up to the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct SimFailure {
    pub error: SimError,
    pub partial: Box<Trajectory>,
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn check_state(t: f64, x: &[f64]) -> Result<(), SimError> {
    if x.iter().all(|v| v.is_finite() && v.abs() <= BLOW_UP) {
        Ok(())
    } else {
        Err(SimError::BlowUp { t })
    }
}

/// Sample grid: `k dt` for `k < steps`, closing exactly on `t_end`.
fn sample_time(k: usize, steps: usize, cfg: &SimConfig) -> f64 {
    if k >= steps {
        cfg.t_end
    } else {
        k as f64 * cfg.dt
    }
}

fn step_count(cfg: &SimConfig) -> usize {
    ((cfg.t_end / cfg.dt) - 1e-9).ceil().max(1.0) as usize
}

/// `‖J‖_∞` of `f` at `(t, y)` by forward differences.
fn jacobian_norm<F>(f: &mut F, t: f64, y: &[f64], f0: &[f64]) -> Result<f64, StageError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, StageError>,
{
    let m = y.len();
    let mut rows = vec![0.0; m];
    let mut yp = y.to_vec();
    for j in 0..m {
        let h = 1e-7 * y[j].abs().max(1e-3);
        yp[j] = y[j] + h;
        let fj = f(t, &yp)?;
        yp[j] = y[j];
        for (r, (a, b)) in rows.iter_mut().zip(fj.iter().zip(f0)) {
            *r += ((a - b) / h).abs();
        }
    }
    Ok(rows.into_iter().fold(0.0, f64::max))
}

/// Advance `y` over `[t, t + h]`, splitting into enough RK4 substeps to keep
/// `h ‖J‖ / m` inside the explicit stability region.
fn advance<F>(mut f: F, t: f64, y: &[f64], h: f64, max_substeps: usize) -> Result<(Vec<f64>, usize), SimError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, StageError>,
{
    let mut m = 1usize;
    if max_substeps > 1 {
        let f0 = f(t, y).map_err(|e| e.into_sim(t))?;
        let norm = jacobian_norm(&mut f, t, y, &f0).map_err(|e| e.into_sim(t))?;
        let need = (h * norm / 2.0).ceil();
        if need > max_substeps as f64 {
            return Err(SimError::Integration {
                t,
                reason: format!("stiffness needs {need} substeps, budget is {max_substeps}"),
            });
        }
        m = need.max(1.0) as usize;
    }
    let hs = h / m as f64;
    let mut y = y.to_vec();
    for j in 0..m {
        let tj = t + j as f64 * hs;
        y = try_rk4_step(&mut f, tj, &y, hs).map_err(|e: StageError| e.into_sim(tj))?;
    }
    Ok((y, m))
}

/// Run the closed loop from `x0` to `cfg.t_end`.
pub fn simulate(
    plant: &PlantModel,
    x0: &[f64],
    controller: &Controller,
    cfg: &SimConfig,
) -> Result<Trajectory, SimFailure> {
    let mut traj = Trajectory::new(controller.label());
    let fail = |error: SimError, traj: Trajectory| SimFailure {
        error,
        partial: Box::new(traj),
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, traj));
    }
    let n = plant.n();
    if x0.len() != n || controller.n() != n {
        let e = SimError::Config(format!(
            "dimension mismatch: plant n = {n}, x0 has {}, controller expects {}",
            x0.len(),
            controller.n()
        ));
        return Err(fail(e, traj));
    }
    match controller {
        Controller::Supervised(scheme) => {
            run_supervised(plant, x0, scheme, cfg, &mut traj).map_err(|e| fail(e, traj.clone()))
        }
        Controller::Nussbaum(p) => run_nussbaum(plant, x0, p, cfg, &mut traj).map_err(|e| fail(e, traj.clone())),
    }
    .map(|_| traj)
}

fn record_supervised(traj: &mut Trajectory, t: f64, x: &[f64], ev: &Evaluation, st: &SwitchState) {
    traj.push(t, x, &ev.s, ev.u(), &ev.v, &st.eta, &st.sigma, &st.chi, &st.theta);
}

/// Deepest halving of one sample when a barrier is crossed inside it.
pub const MAX_REFINE_DEPTH: u32 = 20;

struct SupervisedRun<'a> {
    plant: &'a PlantModel,
    scheme: &'a Scheme,
    max_substeps: usize,
    x: Vec<f64>,
    state: SwitchState,
    last: Option<Evaluation>,
}

impl SupervisedRun<'_> {
    /// Flow over `[t, t + h]` with the switching parameters frozen, then
    /// switch at `t + h`. A barrier crossed inside the interval splits it in
    /// half so the supervisor gets to act at the midpoint.
    fn step(&mut self, t: f64, h: f64, depth: u32, log: &mut InvariantLog) -> Result<(), SimError> {
        let n = self.x.len();
        let (plant, scheme) = (self.plant, self.scheme);
        let theta = self.state.theta.clone();
        let chi = self.state.chi.clone();
        let mut y = self.x.clone();
        y.extend_from_slice(&self.state.eta);
        let rhs = |tt: f64, yy: &[f64]| -> Result<Vec<f64>, StageError> {
            let (xs, etas) = yy.split_at(n);
            let out = scheme.control(xs, tt, &theta, &chi).map_err(StageError::Control)?;
            let mut d = plant_derivative(plant, xs, out.u).map_err(StageError::Plant)?;
            d.extend(scheme.eta_rates(etas, &out.s, tt).map_err(StageError::Control)?);
            Ok(d)
        };
        let t_next = t + h;
        match advance(rhs, t, &y, h, self.max_substeps) {
            Ok((y_next, used)) => {
                log.max_substeps_used = log.max_substeps_used.max(used);
                self.x.copy_from_slice(&y_next[..n]);
                self.state.eta.copy_from_slice(&y_next[n..]);
                check_state(t_next, &self.x)?;
                self.switch_at(t_next, log)
            }
            Err(SimError::Control {
                source: ControlError::BarrierViolation { .. },
                ..
            }) if depth < MAX_REFINE_DEPTH => {
                log.refined_intervals += 1;
                let half = 0.5 * h;
                self.step(t, half, depth + 1, log)?;
                self.step(t + half, h - half, depth + 1, log)
            }
            Err(e) => Err(e),
        }
    }

    fn switch_at(&mut self, t: f64, log: &mut InvariantLog) -> Result<(), SimError> {
        let outcome = apply_switching(t, &self.x, &mut self.state, self.scheme).map_err(|e| supervisor_error(e, t))?;
        note_sample(
            log,
            t,
            &outcome.evaluation,
            &self.state,
            outcome.fired,
            outcome.barrier_hit,
            outcome.max_s_before,
        );
        self.last = Some(outcome.evaluation);
        Ok(())
    }

    fn record(&self, t: f64, traj: &mut Trajectory) {
        if let Some(ev) = &self.last {
            record_supervised(traj, t, &self.x, ev, &self.state);
        }
    }
}

fn run_supervised(
    plant: &PlantModel,
    x0: &[f64],
    scheme: &Scheme,
    cfg: &SimConfig,
    traj: &mut Trajectory,
) -> Result<(), SimError> {
    if let Scheme::Pft { design, .. } = scheme {
        if cfg.t_end > design.t_stop() * (1.0 + 1e-12) {
            return Err(SimError::Config(format!(
                "t_end = {} exceeds the stopping time {} of the prescribed-time law",
                cfg.t_end,
                design.t_stop()
            )));
        }
    }
    let state = init_switch_state(x0, scheme).map_err(|e| SimError::Control { t: 0.0, source: e })?;
    let mut run = SupervisedRun {
        plant,
        scheme,
        max_substeps: cfg.max_substeps,
        x: x0.to_vec(),
        state,
        last: None,
    };
    let steps = step_count(cfg);
    let mut log = std::mem::take(&mut traj.invariants);
    let mut result = run.switch_at(0.0, &mut log);
    if result.is_ok() {
        run.record(0.0, traj);
    }
    for k in 0..steps {
        if result.is_err() {
            break;
        }
        let t = sample_time(k, steps, cfg);
        let t_next = sample_time(k + 1, steps, cfg);
        result = run.step(t, t_next - t, 0, &mut log);
        if result.is_ok() && ((k + 1) % cfg.record_stride == 0 || k + 1 == steps) {
            run.record(t_next, traj);
        }
    }
    traj.invariants = log;
    traj.events = run.state.events;
    traj.switch_count = run.state.switch_count;
    result
}

fn supervisor_error(e: SupervisorError, t: f64) -> SimError {
    match e {
        SupervisorError::SwitchCap { t, cap } => SimError::SwitchCap { t, cap },
        SupervisorError::Control(source) => SimError::Control { t, source },
    }
}

fn note_sample(
    log: &mut InvariantLog,
    t: f64,
    ev: &Evaluation,
    st: &SwitchState,
    fired: bool,
    barrier_hit: bool,
    max_s_before: f64,
) {
    log.samples += 1;
    let after = ev.supervisory(&st.eta).into_iter().fold(f64::NEG_INFINITY, f64::max);
    if fired {
        log.switch_times.push(t);
        log.max_post_switch_supervisory = log.max_post_switch_supervisory.max(after);
    } else {
        log.max_quiet_supervisory = log.max_quiet_supervisory.max(max_s_before);
    }
    if barrier_hit {
        log.pre_switch_barrier_hits += 1;
    }
    for (s, chi) in ev.s.iter().zip(&st.chi) {
        log.max_barrier_ratio = log.max_barrier_ratio.max(s.abs() / chi);
    }
    log.eta_sum.push(st.eta.iter().sum());
    log.sample_times.push(t);
}

fn half_log_barrier(s: f64, chi: f64) -> f64 {
    let r = s / chi;
    -0.5 * (-r * r).ln_1p()
}

fn record_nussbaum(traj: &mut Trajectory, t: f64, x: &[f64], xi: [f64; 2], p: &NussbaumParams) -> Result<(), SimError> {
    let st = NussbaumState { xi1: xi[0], xi2: xi[1] };
    let out = nussbaum_control(x, st, p).map_err(|e| SimError::Control { t, source: e })?;
    let chi = [p.chi1, p.chi2];
    let v = [half_log_barrier(out.s[0], chi[0]), half_log_barrier(out.s[1], chi[1])];
    let theta = [nussbaum_gain(xi[0]), nussbaum_gain(xi[1])];
    traj.push(t, x, &out.s, out.u, &v, &xi, &[0, 0], &chi, &theta);
    Ok(())
}

fn run_nussbaum(
    plant: &PlantModel,
    x0: &[f64],
    p: &NussbaumParams,
    cfg: &SimConfig,
    traj: &mut Trajectory,
) -> Result<(), SimError> {
    p.validate().map_err(|e| SimError::Control { t: 0.0, source: e })?;
    let mut y = vec![x0[0], x0[1], p.xi0[0], p.xi0[1]];
    let steps = step_count(cfg);
    record_nussbaum(traj, 0.0, x0, p.xi0, p)?;
    for k in 0..steps {
        let t = sample_time(k, steps, cfg);
        let t_next = sample_time(k + 1, steps, cfg);
        let rhs = |_tt: f64, yy: &[f64]| -> Result<Vec<f64>, StageError> {
            let st = NussbaumState { xi1: yy[2], xi2: yy[3] };
            let out = nussbaum_control(&yy[..2], st, p).map_err(StageError::Control)?;
            let mut d = plant_derivative(plant, &yy[..2], out.u).map_err(StageError::Plant)?;
            d.extend_from_slice(&out.xi_rates);
            Ok(d)
        };
        let (y_next, used) = advance(rhs, t, &y, t_next - t, cfg.max_substeps)?;
        traj.invariants.max_substeps_used = traj.invariants.max_substeps_used.max(used);
        y = y_next;
        check_state(t_next, &y)?;
        if (k + 1) % cfg.record_stride == 0 || k + 1 == steps {
            record_nussbaum(traj, t_next, &y[..2], [y[2], y[3]], p)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettlingMetrics {
    /// First time after which `‖x‖_∞` stays below the tolerance; `+∞` if never.
    pub t_settle: f64,
    pub max_abs_u: f64,
    pub switch_count: usize,
    pub final_norm: f64,
}

pub fn settling_metrics(traj: &Trajectory, tol: f64) -> SettlingMetrics {
    let mut t_settle = f64::INFINITY;
    for k in (0..traj.len()).rev() {
        if inf_norm(&traj.states[k]) >= tol {
            break;
        }
        t_settle = traj.times[k];
    }
    SettlingMetrics {
        t_settle,
        max_abs_u: traj.u.iter().fold(0.0, |m, u| m.max(u.abs())),
        switch_count: traj.switch_count,
        final_norm: inf_norm(traj.final_state()),
    }
}

fn series_header(out: &mut String, prefix: &str, n: usize) {
    for i in 1..=n {
        let _ = write!(out, ",{prefix}{i}");
    }
}

fn series_row<T: std::fmt::Display>(out: &mut String, values: &[T]) {
    for v in values {
        let _ = write!(out, ",{v}");
    }
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut w: W) -> io::Result<()> {
    let n = traj.n();
    let mut header = String::from("t");
    for p in ["x", "s"] {
        series_header(&mut header, p, n);
    }
    header.push_str(",u");
    for p in ["V", "eta", "sigma", "chi", "Theta"] {
        series_header(&mut header, p, n);
    }
    writeln!(w, "{header}")?;
    for k in 0..traj.len() {
        let mut row = format!("{}", traj.times[k]);
        series_row(&mut row, &traj.states[k]);
        series_row(&mut row, &traj.s_values[k]);
        let _ = write!(row, ",{}", traj.u[k]);
        series_row(&mut row, &traj.v[k]);
        series_row(&mut row, &traj.eta[k]);
        series_row(&mut row, &traj.sigma[k]);
        series_row(&mut row, &traj.chi[k]);
        series_row(&mut row, &traj.theta[k]);
        writeln!(w, "{row}")?;
    }
    Ok(())
}

pub fn write_events_csv<W: Write>(events: &[SwitchEvent], mut w: W) -> io::Result<()> {
    writeln!(w, "t,channel,kind,old,new")?;
    for e in events {
        writeln!(w, "{},{},{},{},{}", e.t, e.channel, e.kind.as_str(), e.old, e.new)?;
    }
    Ok(())
}

/// Flat `key = value` summary.
pub fn write_metrics<W: Write>(traj: &Trajectory, m: &SettlingMetrics, mut w: W) -> io::Result<()> {
    writeln!(w, "controller = {}", traj.controller)?;
    writeln!(w, "t_settle = {}", m.t_settle)?;
    writeln!(w, "max_abs_u = {}", m.max_abs_u)?;
    writeln!(w, "switch_count = {}", m.switch_count)?;
    writeln!(w, "final_norm = {}", m.final_norm)?;
    writeln!(w, "final_time = {}", traj.times.last().copied().unwrap_or(0.0))?;
    let chi_updates = traj.events.iter().filter(|e| e.kind == EventKind::ChiUpdate).count();
    writeln!(w, "chi_updates = {chi_updates}")?;
    writeln!(
        w,
        "pre_switch_barrier_hits = {}",
        traj.invariants.pre_switch_barrier_hits
    )?;
    writeln!(w, "max_substeps_used = {}", traj.invariants.max_substeps_used)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ft_controller::FtParams;
    use crate::plant::{benchmark, BenchmarkId};

    fn ft() -> Controller {
        Controller::Supervised(Scheme::ft(FtParams::second_order().build().unwrap()))
    }

    fn short(t_end: f64) -> SimConfig {
        SimConfig {
            t_end,
            record_stride: 10,
            ..SimConfig::default()
        }
    }

    #[test]
    fn equilibrium_stays_put() {
        let case = benchmark(BenchmarkId::A);
        let traj = simulate(&case.plant, &[0.0, 0.0], &ft(), &short(0.5)).unwrap();
        assert!(traj.states.iter().all(|x| x.iter().all(|v| *v == 0.0)));
        assert!(traj.events.is_empty());
        assert_eq!(settling_metrics(&traj, 1e-3).t_settle, 0.0);
    }

    #[test]
    fn series_share_length_and_grid() {
        let case = benchmark(BenchmarkId::A);
        let traj = simulate(&case.plant, &case.x0, &ft(), &short(0.1)).unwrap();
        assert_eq!(traj.len(), 101);
        for len in [
            traj.states.len(),
            traj.u.len(),
            traj.v.len(),
            traj.eta.len(),
            traj.sigma.len(),
            traj.chi.len(),
        ] {
            assert_eq!(len, traj.len());
        }
        assert_eq!(traj.times[0], 0.0);
        assert!((traj.times[100] - 0.1).abs() < 1e-12);
        assert_eq!(traj.invariants.samples, 1001);
    }

    #[test]
    fn deterministic() {
        let case = benchmark(BenchmarkId::D);
        let a = simulate(&case.plant, &case.x0, &ft(), &short(0.3)).unwrap();
        let b = simulate(&case.plant, &case.x0, &ft(), &short(0.3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn partial_final_step_lands_on_t_end() {
        let case = benchmark(BenchmarkId::A);
        let cfg = SimConfig {
            t_end: 0.01005,
            record_stride: 1000,
            ..SimConfig::default()
        };
        let traj = simulate(&case.plant, &case.x0, &ft(), &cfg).unwrap();
        assert_eq!(*traj.times.last().unwrap(), 0.01005);
    }

    #[test]
    fn config_errors() {
        let case = benchmark(BenchmarkId::A);
        let bad = SimConfig {
            dt: 0.0,
            ..SimConfig::default()
        };
        let err = simulate(&case.plant, &case.x0, &ft(), &bad).unwrap_err();
        assert!(matches!(err.error, SimError::Config(_)));
        let err = simulate(&case.plant, &[0.1], &ft(), &SimConfig::default()).unwrap_err();
        assert!(matches!(err.error, SimError::Config(_)));
    }

    #[test]
    fn settling_metrics_examples() {
        let mut traj = Trajectory::new("ft");
        for (k, x) in [0.5, 1e-2, 1e-4, 2e-3, 1e-4, 1e-5].iter().enumerate() {
            traj.push(
                k as f64,
                &[*x],
                &[0.0],
                -(k as f64),
                &[0.0],
                &[0.0],
                &[1],
                &[1.0],
                &[1.0],
            );
        }
        let m = settling_metrics(&traj, 1e-3);
        assert_eq!(m.t_settle, 4.0);
        assert_eq!(m.max_abs_u, 5.0);
        assert_eq!(m.final_norm, 1e-5);
        traj.push(6.0, &[1.0], &[0.0], 0.0, &[0.0], &[0.0], &[1], &[1.0], &[1.0]);
        assert_eq!(settling_metrics(&traj, 1e-3).t_settle, f64::INFINITY);
    }

    #[test]
    fn csv_layout() {
        let case = benchmark(BenchmarkId::A);
        let traj = simulate(&case.plant, &case.x0, &ft(), &short(0.01)).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "t,x1,x2,s1,s2,u,V1,V2,eta1,eta2,sigma1,sigma2,chi1,chi2,Theta1,Theta2"
        );
        assert_eq!(text.lines().count(), traj.len() + 1);
        assert!(text.lines().all(|l| l.split(',').count() == 16));
    }

    #[test]
    fn substepping_matches_plain_steps_when_not_stiff() {
        let case = benchmark(BenchmarkId::A);
        let plain = simulate(&case.plant, &case.x0, &ft(), &short(0.2)).unwrap();
        let cfg = SimConfig {
            max_substeps: 64,
            ..short(0.2)
        };
        let sub = simulate(&case.plant, &case.x0, &ft(), &cfg).unwrap();
        let (a, b) = (plain.final_state(), sub.final_state());
        assert!((a[0] - b[0]).abs() < 1e-8 && (a[1] - b[1]).abs() < 1e-8);
    }

    #[test]
    fn nussbaum_records_monotone_xi() {
        let case = benchmark(BenchmarkId::A);
        let c = Controller::Nussbaum(NussbaumParams::default());
        let traj = simulate(&case.plant, &case.x0, &c, &short(2.0)).unwrap();
        for w in traj.eta.windows(2) {
            assert!(w[1][0] >= w[0][0] && w[1][1] >= w[0][1]);
        }
    }
}
