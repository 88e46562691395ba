//! Scenario files: flat sectioned TOML resolved into a plant, a controller and
//! simulation settings.
//!
//! Every key is optional. Missing keys take the defaults for the plant order;
//! [`Scenario::effective_file`] returns the file with every default written
//! out, and that file resolves back to the same scenario.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::NussbaumParams;
use crate::ft_controller::{ControlError, FtDesign, FtParams};
use crate::hybrid_sim::{Controller, SimConfig, SimError};
use crate::numerics::{QuadratureSpec, RationalExponent};
use crate::pft_controller::PftDesign;
use crate::plant::{benchmark, custom_plant, BenchmarkId, PlantError, PlantModel};
use crate::supervisor::Scheme;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    fn invalid(field: &str, reason: impl std::fmt::Display) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Ft,
    Pft,
    Nussbaum,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Ft => "ft",
            ControllerKind::Pft => "pft",
            ControllerKind::Nussbaum => "nussbaum",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ft" => Ok(ControllerKind::Ft),
            "pft" => Ok(ControllerKind::Pft),
            "nussbaum" => Ok(ControllerKind::Nussbaum),
            other => Err(format!("unknown controller `{other}` (expected ft, pft or nussbaum)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drifts: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FtSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_gain: Option<Vec<f64>>,
    /// Rational exponent written as `"p/q"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    /// Coupling matrix, row-major, `n * n` entries.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iota1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iota2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_abs_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_max_depth: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub varsigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub varepsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub practical: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switch_cap: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PftSection {
    /// Prescribed settling time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_stop_frac: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controller: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_settle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_substeps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NussbaumSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub plant: PlantSection,
    #[serde(default)]
    pub ft: FtSection,
    #[serde(default)]
    pub supervisor: SupervisorSection,
    #[serde(default)]
    pub pft: PftSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub nussbaum: NussbaumSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string().trim_end().replace('\n', " ")))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario sections serialize")
    }
}

/// A fully resolved scenario, ready to simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: PlantModel,
    pub x0: Vec<f64>,
    pub controller: Controller,
    pub sim: SimConfig,
    pub out_dir: Option<String>,
    effective: ScenarioFile,
}

fn vec_len(field: &str, v: Vec<f64>, n: usize) -> Result<Vec<f64>, ConfigError> {
    if v.len() != n {
        return Err(ConfigError::invalid(
            field,
            format!("expected {n} entries, found {}", v.len()),
        ));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(ConfigError::invalid(field, format!("non-finite entry {bad}")));
    }
    Ok(v)
}

fn design_error(e: ControlError) -> ConfigError {
    ConfigError::invalid("design", e)
}

fn plant_error(field: &str, e: PlantError) -> ConfigError {
    ConfigError::invalid(field, e)
}

fn sim_error(e: SimError) -> ConfigError {
    ConfigError::invalid("sim", e)
}

fn default_beta(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.4 * 3f64.powi(i as i32)).collect()
}

impl Scenario {
    pub fn from_file(file: &ScenarioFile) -> Result<Self, ConfigError> {
        let mut eff = file.clone();

        let (plant, default_x0) = match (&file.plant.benchmark, &file.plant.gains, &file.plant.drifts) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(ConfigError::invalid(
                    "plant.benchmark",
                    "give either a benchmark id or gains/drifts, not both",
                ));
            }
            (Some(id), None, None) => {
                let id: BenchmarkId = id.parse().map_err(|e| plant_error("plant.benchmark", e))?;
                let case = benchmark(id);
                eff.plant.benchmark = Some(id.to_string());
                (case.plant, Some(case.x0))
            }
            (None, Some(g), Some(d)) => {
                let label = file.plant.label.clone().unwrap_or_else(|| "custom".to_string());
                eff.plant.label = Some(label.clone());
                (
                    custom_plant(&label, g, d).map_err(|e| plant_error("plant.gains", e))?,
                    None,
                )
            }
            _ => {
                return Err(ConfigError::invalid(
                    "plant",
                    "missing `benchmark` or the `gains`/`drifts` pair",
                ));
            }
        };
        let n = plant.n();
        let x0 = match file.plant.x0.clone().or(default_x0) {
            Some(x0) => vec_len("plant.x0", x0, n)?,
            None => return Err(ConfigError::invalid("plant.x0", "required for custom plants")),
        };
        eff.plant.x0 = Some(x0.clone());

        let kind: ControllerKind = file
            .sim
            .controller
            .as_deref()
            .unwrap_or("ft")
            .parse()
            .map_err(|e: String| ConfigError::invalid("sim.controller", e))?;
        eff.sim.controller = Some(kind.as_str().to_string());

        let (controller, t_end_default) = match kind {
            ControllerKind::Nussbaum => {
                if n != 2 {
                    return Err(ConfigError::invalid(
                        "sim.controller",
                        "the Nussbaum baseline needs a second-order plant",
                    ));
                }
                let p = resolve_nussbaum(&file.nussbaum, &mut eff.nussbaum)?;
                (Controller::Nussbaum(p), 10.0)
            }
            ControllerKind::Ft | ControllerKind::Pft => {
                let base = resolve_ft(n, file, &mut eff)?;
                let practical = file.supervisor.practical.unwrap_or(false);
                eff.supervisor.practical = Some(practical);
                if kind == ControllerKind::Ft {
                    (
                        Controller::Supervised(Scheme::Ft {
                            design: base,
                            practical,
                        }),
                        10.0,
                    )
                } else {
                    let pft = &file.pft;
                    let beta = vec_len("pft.beta", pft.beta.clone().unwrap_or_else(|| default_beta(n)), n)?;
                    let horizon = pft.horizon.unwrap_or(4.5);
                    let mu_max = pft.mu_max.unwrap_or(1e6);
                    let frac = pft.t_stop_frac.unwrap_or(0.9999);
                    let design = PftDesign::new(base, beta.clone(), horizon, mu_max, frac).map_err(design_error)?;
                    eff.pft = PftSection {
                        horizon: Some(horizon),
                        beta: Some(beta),
                        mu_max: Some(mu_max),
                        t_stop_frac: Some(frac),
                    };
                    let t_stop = design.t_stop();
                    (Controller::Supervised(Scheme::Pft { design, practical }), t_stop)
                }
            }
        };

        let d = SimConfig::default();
        let sim = SimConfig {
            dt: file.sim.dt.unwrap_or(d.dt),
            t_end: file.sim.t_end.unwrap_or(t_end_default),
            record_stride: file.sim.record_stride.unwrap_or(d.record_stride),
            tol_settle: file.sim.tol_settle.unwrap_or(d.tol_settle),
            max_substeps: file.sim.max_substeps.unwrap_or(d.max_substeps),
        };
        sim.validate().map_err(sim_error)?;
        if let Controller::Supervised(Scheme::Pft { design, .. }) = &controller {
            if sim.t_end > design.t_stop() {
                return Err(ConfigError::invalid(
                    "sim.t_end",
                    format!(
                        "{} exceeds the stop time {} of the prescribed horizon",
                        sim.t_end,
                        design.t_stop()
                    ),
                ));
            }
        }
        eff.sim.dt = Some(sim.dt);
        eff.sim.t_end = Some(sim.t_end);
        eff.sim.record_stride = Some(sim.record_stride);
        eff.sim.tol_settle = Some(sim.tol_settle);
        eff.sim.max_substeps = Some(sim.max_substeps);

        Ok(Self {
            plant,
            x0,
            controller,
            sim,
            out_dir: file.output.dir.clone(),
            effective: eff,
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_file(&ScenarioFile::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_file(&ScenarioFile::load(path)?)
    }

    /// The input file with every default written out.
    pub fn effective_file(&self) -> &ScenarioFile {
        &self.effective
    }

    pub fn to_toml(&self) -> String {
        self.effective.to_toml()
    }

    pub fn kind(&self) -> ControllerKind {
        match &self.controller {
            Controller::Nussbaum(_) => ControllerKind::Nussbaum,
            Controller::Supervised(s) if s.mode().is_pft() => ControllerKind::Pft,
            Controller::Supervised(_) => ControllerKind::Ft,
        }
    }
}

fn resolve_ft(n: usize, file: &ScenarioFile, eff: &mut ScenarioFile) -> Result<FtDesign, ConfigError> {
    let mut p = FtParams::for_order(n);
    let ft = &file.ft;
    let sup = &file.supervisor;
    if let Some(v) = &ft.k {
        p.k = vec_len("ft.k", v.clone(), n)?;
    }
    if let Some(v) = &ft.u_gain {
        p.u_gain = vec_len("ft.u_gain", v.clone(), n)?;
    }
    if let Some(s) = &ft.alpha {
        p.alpha = s
            .parse::<RationalExponent>()
            .map_err(|e| ConfigError::invalid("ft.alpha", e))?;
    }
    if let Some(v) = &ft.a {
        p.a = vec_len("ft.a", v.clone(), n)?;
    }
    if let Some(v) = &ft.q {
        p.big_q = vec_len("ft.q", v.clone(), n)?;
    }
    if let Some(v) = &ft.c {
        let flat = vec_len("ft.c", v.clone(), n * n)?;
        p.c = flat.chunks(n).map(|r| r.to_vec()).collect();
    }
    p.theta0 = ft.theta0.unwrap_or(p.theta0);
    p.iota1 = ft.iota1.unwrap_or(p.iota1);
    p.iota2 = ft.iota2.unwrap_or(p.iota2);
    p.quad = QuadratureSpec {
        rel_tol: ft.quad_rel_tol.unwrap_or(p.quad.rel_tol),
        abs_tol: ft.quad_abs_tol.unwrap_or(p.quad.abs_tol),
        max_depth: ft.quad_max_depth.unwrap_or(p.quad.max_depth),
    };
    p.varsigma = sup.varsigma.unwrap_or(p.varsigma);
    p.varepsilon = sup.varepsilon.unwrap_or(p.varepsilon);
    if let Some(v) = &sup.chi0 {
        p.chi0 = vec_len("supervisor.chi0", v.clone(), n)?;
    }
    p.sigma0 = sup.sigma0.unwrap_or(p.sigma0);
    p.zeta = sup.zeta.unwrap_or(p.zeta);
    p.switch_cap = sup.switch_cap.unwrap_or(p.switch_cap);

    eff.ft = FtSection {
        k: Some(p.k.clone()),
        u_gain: Some(p.u_gain.clone()),
        alpha: Some(p.alpha.to_string()),
        a: Some(p.a.clone()),
        q: Some(p.big_q.clone()),
        c: Some(p.c.iter().flatten().copied().collect()),
        theta0: Some(p.theta0),
        iota1: Some(p.iota1),
        iota2: Some(p.iota2),
        quad_rel_tol: Some(p.quad.rel_tol),
        quad_abs_tol: Some(p.quad.abs_tol),
        quad_max_depth: Some(p.quad.max_depth),
    };
    eff.supervisor = SupervisorSection {
        varsigma: Some(p.varsigma),
        varepsilon: Some(p.varepsilon),
        chi0: Some(p.chi0.clone()),
        sigma0: Some(p.sigma0),
        zeta: Some(p.zeta),
        practical: eff.supervisor.practical,
        switch_cap: Some(p.switch_cap),
    };
    p.build().map_err(design_error)
}

fn resolve_nussbaum(sec: &NussbaumSection, eff: &mut NussbaumSection) -> Result<NussbaumParams, ConfigError> {
    let d = NussbaumParams::default();
    let xi0 = match &sec.xi0 {
        Some(v) => {
            let v = vec_len("nussbaum.xi0", v.clone(), 2)?;
            [v[0], v[1]]
        }
        None => d.xi0,
    };
    let p = NussbaumParams {
        k1: sec.k1.unwrap_or(d.k1),
        u1: sec.u1.unwrap_or(d.u1),
        k2: sec.k2.unwrap_or(d.k2),
        u2: sec.u2.unwrap_or(d.u2),
        chi1: sec.chi1.unwrap_or(d.chi1),
        chi2: sec.chi2.unwrap_or(d.chi2),
        xi0,
    };
    p.validate().map_err(|e| ConfigError::invalid("nussbaum", e))?;
    *eff = NussbaumSection {
        k1: Some(p.k1),
        u1: Some(p.u1),
        k2: Some(p.k2),
        u2: Some(p.u2),
        chi1: Some(p.chi1),
        chi2: Some(p.chi2),
        xi0: Some(p.xi0.to_vec()),
    };
    Ok(p)
}
