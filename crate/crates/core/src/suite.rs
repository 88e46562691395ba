//! Scenario runner and the bundled benchmark suites.
//!
//! Exit codes returned by [`RunError::exit_code`]:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O error, or a suite with failing rows |
//! | 2 | scenario file does not parse |
//! | 3 | invalid field or design parameter |
//! | 4 | integration failure: blow-up, barrier violation or stiff step |
//! | 5 | switch count exceeded its cap |

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, Scenario};
use crate::ft_controller::EventKind;
use crate::hybrid_sim::{
    settling_metrics, simulate, write_events_csv, write_metrics, write_trajectory_csv, SettlingMetrics, SimError,
    SimFailure, Trajectory,
};
use crate::numerics::RationalExponent;
use crate::verification::{check_pft_bound_lemma, comparison_sweep, pft_bound_grid, sample_inequality_suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_INTEGRATION: i32 = 4;
pub const EXIT_SWITCH_CAP: i32 = 5;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Sim(Box<SimFailure>),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Verify(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(ConfigError::Parse(_)) => EXIT_PARSE,
            RunError::Config(ConfigError::Invalid { .. }) => EXIT_INVALID,
            RunError::Config(ConfigError::Io { .. }) | RunError::Io { .. } => EXIT_IO,
            RunError::Verify(_) => EXIT_INVALID,
            RunError::Sim(f) => match f.error {
                SimError::Config(_) | SimError::Plant(_) => EXIT_INVALID,
                SimError::SwitchCap { .. } => EXIT_SWITCH_CAP,
                SimError::Control { .. } | SimError::BlowUp { .. } | SimError::Integration { .. } => EXIT_INTEGRATION,
            },
        }
    }
}

/// Scenario files shipped with the library, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig3_caseA", include_str!("../scenarios/fig3_caseA.cfg")),
    ("fig3_caseB", include_str!("../scenarios/fig3_caseB.cfg")),
    ("fig3_caseC", include_str!("../scenarios/fig3_caseC.cfg")),
    ("fig3_caseD", include_str!("../scenarios/fig3_caseD.cfg")),
    ("fig3_caseE", include_str!("../scenarios/fig3_caseE.cfg")),
    ("fig3_caseF", include_str!("../scenarios/fig3_caseF.cfg")),
    ("fig5", include_str!("../scenarios/fig5.cfg")),
    ("fig9_pft", include_str!("../scenarios/fig9_pft.cfg")),
    ("fig9_caseA", include_str!("../scenarios/fig9_caseA.cfg")),
    ("fig9_caseB", include_str!("../scenarios/fig9_caseB.cfg")),
    ("fig9_caseC", include_str!("../scenarios/fig9_caseC.cfg")),
    ("fig9_caseD", include_str!("../scenarios/fig9_caseD.cfg")),
    ("fig9_caseE", include_str!("../scenarios/fig9_caseE.cfg")),
    ("fig9_caseF", include_str!("../scenarios/fig9_caseF.cfg")),
    ("thirdorder_ppp", include_str!("../scenarios/thirdorder_ppp.cfg")),
    ("thirdorder_ppm", include_str!("../scenarios/thirdorder_ppm.cfg")),
    ("thirdorder_pmp", include_str!("../scenarios/thirdorder_pmp.cfg")),
    ("thirdorder_pmm", include_str!("../scenarios/thirdorder_pmm.cfg")),
    ("thirdorder_mpp", include_str!("../scenarios/thirdorder_mpp.cfg")),
    ("thirdorder_mpm", include_str!("../scenarios/thirdorder_mpm.cfg")),
    ("thirdorder_mmp", include_str!("../scenarios/thirdorder_mmp.cfg")),
    ("thirdorder_mmm", include_str!("../scenarios/thirdorder_mmm.cfg")),
    ("nussbaum_caseA", include_str!("../scenarios/nussbaum_caseA.cfg")),
    ("nussbaum_caseB", include_str!("../scenarios/nussbaum_caseB.cfg")),
    ("nussbaum_caseC", include_str!("../scenarios/nussbaum_caseC.cfg")),
    ("nussbaum_caseD", include_str!("../scenarios/nussbaum_caseD.cfg")),
    ("nussbaum_caseE", include_str!("../scenarios/nussbaum_caseE.cfg")),
    ("nussbaum_caseF", include_str!("../scenarios/nussbaum_caseF.cfg")),
];

/// Text of a bundled scenario; a trailing `.cfg` is ignored.
pub fn bundled(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".cfg").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn bundled_scenario(name: &str) -> Result<Scenario, ConfigError> {
    let text = bundled(name).ok_or_else(|| ConfigError::Invalid {
        field: "scenario".into(),
        reason: format!("no bundled scenario named `{name}`"),
    })?;
    Scenario::parse(text)
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub trajectory: Trajectory,
    pub metrics: SettlingMetrics,
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path).map(BufWriter::new).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn io_at(path: &Path) -> impl Fn(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_artifacts(
    scenario: &Scenario,
    traj: &Trajectory,
    metrics: &SettlingMetrics,
    status: &str,
    dir: &Path,
) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let p = dir.join("trajectory.csv");
    let mut w = create(&p)?;
    write_trajectory_csv(traj, &mut w)
        .and_then(|_| w.flush())
        .map_err(io_at(&p))?;
    let p = dir.join("events.csv");
    let mut w = create(&p)?;
    write_events_csv(&traj.events, &mut w)
        .and_then(|_| w.flush())
        .map_err(io_at(&p))?;
    let p = dir.join("metrics.txt");
    let mut w = create(&p)?;
    write_metrics(traj, metrics, &mut w)
        .and_then(|_| writeln!(w, "status = {status}"))
        .and_then(|_| w.flush())
        .map_err(io_at(&p))?;
    let p = dir.join("scenario.cfg");
    fs::write(&p, scenario.to_toml()).map_err(io_at(&p))?;
    Ok(())
}

/// Simulate `scenario`; with `out_dir`, write `trajectory.csv`, `events.csv`,
/// `metrics.txt` and the effective `scenario.cfg` there, also for failed runs.
pub fn run_scenario(scenario: &Scenario, out_dir: Option<&Path>) -> Result<ScenarioRun, RunError> {
    let result = simulate(&scenario.plant, &scenario.x0, &scenario.controller, &scenario.sim);
    let (traj, status) = match &result {
        Ok(t) => (t, "ok".to_string()),
        Err(f) => (&*f.partial, format!("failed: {}", f.error)),
    };
    let metrics = settling_metrics(traj, scenario.sim.tol_settle);
    if let Some(dir) = out_dir {
        write_artifacts(scenario, traj, &metrics, &status, dir)?;
    }
    match result {
        Ok(trajectory) => Ok(ScenarioRun { trajectory, metrics }),
        Err(f) => Err(RunError::Sim(Box::new(f))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteName {
    Fig3,
    Fig5,
    Fig9,
    ThirdOrder,
    NussbaumCompare,
    VerifyAll,
}

impl SuiteName {
    pub const ALL: [SuiteName; 6] = [
        SuiteName::Fig3,
        SuiteName::Fig5,
        SuiteName::Fig9,
        SuiteName::ThirdOrder,
        SuiteName::NussbaumCompare,
        SuiteName::VerifyAll,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::Fig3 => "fig3",
            SuiteName::Fig5 => "fig5",
            SuiteName::Fig9 => "fig9",
            SuiteName::ThirdOrder => "thirdorder",
            SuiteName::NussbaumCompare => "nussbaum_compare",
            SuiteName::VerifyAll => "verify_all",
        }
    }

    fn cases(self) -> Vec<&'static str> {
        let prefix = match self {
            SuiteName::Fig3 | SuiteName::NussbaumCompare => "fig3_case",
            SuiteName::Fig5 => "fig5",
            SuiteName::Fig9 => "fig9_case",
            SuiteName::ThirdOrder => "thirdorder_",
            SuiteName::VerifyAll => return Vec::new(),
        };
        BUNDLED
            .iter()
            .map(|(n, _)| *n)
            .filter(|n| n.starts_with(prefix))
            .collect()
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SuiteName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        SuiteName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| format!("unknown suite `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub case: String,
    pub outcome: String,
    pub final_norm: f64,
    pub switch_count: usize,
    pub detail: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: SuiteName,
    pub rows: Vec<SuiteRow>,
    /// Every simulated case by scenario name, partial for failed runs.
    pub trajectories: Vec<(String, Trajectory)>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {}", self.suite)?;
        writeln!(
            f,
            "{:<16} {:<6} {:>12} {:>8}  detail",
            "case", "result", "final_norm", "switches"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<16} {:<6} {:>12.3e} {:>8}  {}; {}",
                r.case,
                if r.pass { "PASS" } else { "FAIL" },
                r.final_norm,
                r.switch_count,
                r.outcome,
                r.detail
            )?;
        }
        let passed = self.rows.iter().filter(|r| r.pass).count();
        write!(f, "{passed}/{} passed", self.rows.len())
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub out_root: Option<PathBuf>,
    /// Overrides the integration step of every simulated case.
    pub dt: Option<f64>,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            out_root: None,
            dt: None,
            seed: 2024,
        }
    }
}

type CaseResult = (Result<ScenarioRun, RunError>, Option<Trajectory>);

fn run_named(name: &str, suite: &str, opts: &SuiteOptions) -> CaseResult {
    let mut file = match bundled(name).map(crate::config::ScenarioFile::parse) {
        Some(Ok(f)) => f,
        Some(Err(e)) => return (Err(e.into()), None),
        None => return (Err(RunError::Verify(format!("missing bundled scenario {name}"))), None),
    };
    if let Some(dt) = opts.dt {
        file.sim.dt = Some(dt);
    }
    let scenario = match Scenario::from_file(&file) {
        Ok(s) => s,
        Err(e) => return (Err(e.into()), None),
    };
    let dir = opts.out_root.as_ref().map(|r| r.join(suite).join(name));
    match run_scenario(&scenario, dir.as_deref()) {
        Err(RunError::Sim(f)) => {
            let partial = (*f.partial).clone();
            (Err(RunError::Sim(f)), Some(partial))
        }
        other => (other, None),
    }
}

/// Run the named cases concurrently, in order of `names`.
fn run_many(names: &[&str], suite: &str, opts: &SuiteOptions) -> Vec<CaseResult> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = names
            .iter()
            .map(|n| scope.spawn(move || run_named(n, suite, opts)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("case thread panicked"))
            .collect()
    })
}

fn into_trajectories(names: &[&str], results: Vec<CaseResult>) -> Vec<(String, Trajectory)> {
    names
        .iter()
        .zip(results)
        .filter_map(|(n, (res, partial))| {
            let traj = match res {
                Ok(run) => Some(run.trajectory),
                Err(_) => partial,
            };
            traj.map(|t| (n.to_string(), t))
        })
        .collect()
}

fn case_label(name: &str) -> String {
    name.rsplit('_').next().unwrap_or(name).to_string()
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn outcome(r: &Result<ScenarioRun, RunError>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => e.to_string(),
    }
}

/// Row for a run judged by its final norm, switch count and barrier record.
fn convergence_row(name: &str, r: &CaseResult, norm_tol: f64, max_switches: Option<usize>) -> SuiteRow {
    let (res, partial) = r;
    match res {
        Ok(run) => {
            let t = &run.trajectory;
            let hits = t.invariants.pre_switch_barrier_hits;
            let finite_u = t.u.iter().all(|u| u.is_finite());
            let switches_ok = max_switches.is_none_or(|m| t.switch_count < m);
            let pass = run.metrics.final_norm < norm_tol && switches_ok && hits == 0 && finite_u;
            SuiteRow {
                case: case_label(name),
                outcome: outcome(res),
                final_norm: run.metrics.final_norm,
                switch_count: t.switch_count,
                detail: format!(
                    "t_end = {}, t_settle = {:.4}, barrier hits = {hits}, max|u| = {:.3e}",
                    t.times.last().copied().unwrap_or(0.0),
                    run.metrics.t_settle,
                    run.metrics.max_abs_u
                ),
                pass,
            }
        }
        Err(_) => SuiteRow {
            case: case_label(name),
            outcome: outcome(res),
            final_norm: partial.as_ref().map_or(f64::NAN, |t| inf_norm(t.final_state())),
            switch_count: partial.as_ref().map_or(0, |t| t.switch_count),
            detail: String::new(),
            pass: false,
        },
    }
}

fn fig5_row(r: &CaseResult) -> SuiteRow {
    let mut row = convergence_row("fig5", r, 1e-3, Some(50));
    let traj = match r {
        (Ok(run), _) => &run.trajectory,
        (Err(_), Some(t)) => t,
        _ => return row,
    };
    let chi2: Vec<_> = traj
        .events
        .iter()
        .filter(|e| e.kind == EventKind::ChiUpdate && e.channel == 2)
        .collect();
    let others = traj
        .events
        .iter()
        .filter(|e| e.kind == EventKind::ChiUpdate && e.channel != 2)
        .count();
    let timing = match chi2.as_slice() {
        [e] => {
            row.detail = format!("chi2 update at t = {:.4} from {} to {:.4}", e.t, e.old, e.new);
            (0.85..=1.85).contains(&e.t) && (e.new - 4.8).abs() <= 0.5
        }
        _ => {
            row.detail = format!("{} chi2 updates", chi2.len());
            false
        }
    };
    row.pass = row.pass && timing && others == 0;
    row
}

fn nussbaum_rows(opts: &SuiteOptions) -> (Vec<SuiteRow>, Vec<(String, Trajectory)>) {
    let ft_names = SuiteName::NussbaumCompare.cases();
    let nb_names: Vec<&str> = BUNDLED
        .iter()
        .map(|(n, _)| *n)
        .filter(|n| n.starts_with("nussbaum_case"))
        .collect();
    let suite = SuiteName::NussbaumCompare.as_str();
    let mut names = ft_names.clone();
    names.extend(&nb_names);
    let results = run_many(&names, suite, opts);
    let (ft, nb) = results.split_at(ft_names.len());
    let at = |r: &CaseResult, t: f64| -> Option<f64> {
        match r {
            (Ok(run), _) => run.trajectory.state_at(t).map(inf_norm),
            _ => None,
        }
    };
    let rows = ft_names
        .iter()
        .zip(ft.iter().zip(nb))
        .map(|(name, (f, n))| {
            let label = case_label(name);
            let ft_norm = at(f, 6.5);
            let nb_norm = at(n, 6.5);
            let nb_unstable = match n {
                (Ok(run), _) => run.metrics.final_norm > 1.0,
                (Err(_), _) => true,
            };
            let ft_ok = convergence_row(name, f, 1e-3, Some(50)).pass;
            let pass = match label.as_str() {
                "caseA" => {
                    ft_ok
                        && ft_norm.is_some_and(|v| v < 1e-3)
                        && matches!((ft_norm, nb_norm), (Some(a), Some(b)) if b >= 10.0 * a)
                }
                "caseF" => ft_ok && nb_unstable,
                _ => ft_ok,
            };
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3e}"));
            SuiteRow {
                case: label,
                outcome: format!("ft {}, nussbaum {}", outcome(&f.0), outcome(&n.0)),
                final_norm: ft_norm.unwrap_or(f64::NAN),
                switch_count: f.0.as_ref().map_or(0, |r| r.trajectory.switch_count),
                detail: format!(
                    "|x(6.5)| ft = {}, nussbaum = {}, nussbaum unstable = {nb_unstable}",
                    fmt(ft_norm),
                    fmt(nb_norm)
                ),
                pass,
            }
        })
        .collect();
    (rows, into_trajectories(&names, results))
}

/// Lemma checks with their pass flags, as suite rows.
pub fn verify_rows(seed: u64) -> Vec<SuiteRow> {
    let row = |case: &str, pass: bool, detail: String| SuiteRow {
        case: case.into(),
        outcome: "ok".into(),
        final_norm: f64::NAN,
        switch_count: 0,
        detail,
        pass,
    };
    let err_row = |case: &str, e: String| SuiteRow {
        case: case.into(),
        outcome: e,
        final_norm: f64::NAN,
        switch_count: 0,
        detail: String::new(),
        pass: false,
    };
    let mut rows = Vec::new();
    match sample_inequality_suite(seed, 10_000) {
        Ok(rep) => rows.push(row(
            "inequalities",
            rep.violations.is_empty(),
            format!("{} checks, {} violations", rep.checks, rep.violations.len()),
        )),
        Err(e) => rows.push(err_row("inequalities", e.to_string())),
    }
    let gamma = RationalExponent::odd(45, 49).expect("odd ratio");
    match comparison_sweep(seed, 100, gamma) {
        Ok(rep) => rows.push(row(
            "comparison",
            rep.held == rep.runs,
            format!("{}/{} held, worst gap {:.3e}", rep.held, rep.runs, rep.worst_gap),
        )),
        Err(e) => rows.push(err_row("comparison", e.to_string())),
    }
    let grid = pft_bound_grid();
    let mut bounded = 0;
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for p in &grid {
        match check_pft_bound_lemma(p) {
            Ok(rep) => {
                bounded += usize::from(rep.bounded);
                if rep.envelope > 0.0 {
                    worst = worst.max(rep.sup_value / rep.envelope);
                }
            }
            Err(e) => failure = Some(e.to_string()),
        }
    }
    match failure {
        Some(e) => rows.push(err_row("pft_bound", e)),
        None => rows.push(row(
            "pft_bound",
            bounded == grid.len(),
            format!("{bounded}/{} bounded, worst sup/envelope {worst:.3}", grid.len()),
        )),
    }
    rows
}

/// Run every case of a suite; individual failures become failing rows.
pub fn run_suite(name: SuiteName, opts: &SuiteOptions) -> SuiteReport {
    let suite = name.as_str();
    let (rows, trajectories) = match name {
        SuiteName::Fig3 | SuiteName::ThirdOrder | SuiteName::Fig9 => {
            let names = name.cases();
            let results = run_many(&names, suite, opts);
            let (tol, cap) = match name {
                SuiteName::Fig3 => (1e-3, Some(50)),
                _ => (1e-2, None),
            };
            let rows = names
                .iter()
                .zip(&results)
                .map(|(n, r)| convergence_row(n, r, tol, cap))
                .collect();
            (rows, into_trajectories(&names, results))
        }
        SuiteName::Fig5 => {
            let r = run_named("fig5", suite, opts);
            let rows = vec![fig5_row(&r)];
            (rows, into_trajectories(&["fig5"], vec![r]))
        }
        SuiteName::NussbaumCompare => nussbaum_rows(opts),
        SuiteName::VerifyAll => (verify_rows(opts.seed), Vec::new()),
    };
    SuiteReport {
        suite: name,
        rows,
        trajectories,
    }
}
