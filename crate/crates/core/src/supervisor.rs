//! Supervisory functions, auxiliary η-dynamics and the logic-based switching
//! rule shared by the finite-time and prescribed-time laws.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::ft_controller::{
    self, lyap_v1, lyap_vi, theta_of_sigma, virtual_error, ControlError, ControlOutput, EventKind, FtDesign,
    SwitchEvent, SwitchState,
};
use crate::numerics::frac_pow;
use crate::pft_controller::{self, mu, PftDesign};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SupervisorError {
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("switch cap of {cap} exceeded at t = {t}")]
    SwitchCap { t: f64, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Ft,
    Pft,
    FtPractical,
    PftPractical,
}

impl Mode {
    pub fn is_pft(self) -> bool {
        matches!(self, Mode::Pft | Mode::PftPractical)
    }

    pub fn is_practical(self) -> bool {
        matches!(self, Mode::FtPractical | Mode::PftPractical)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ft => "ft",
            Mode::Pft => "pft",
            Mode::FtPractical => "ft_practical",
            Mode::PftPractical => "pft_practical",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ft" => Ok(Mode::Ft),
            "pft" => Ok(Mode::Pft),
            "ft_practical" => Ok(Mode::FtPractical),
            "pft_practical" => Ok(Mode::PftPractical),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

/// A supervised control law: the design constants plus the η-dynamics mode.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    Ft { design: FtDesign, practical: bool },
    Pft { design: PftDesign, practical: bool },
}

impl Scheme {
    pub fn ft(design: FtDesign) -> Self {
        Scheme::Ft {
            design,
            practical: false,
        }
    }

    pub fn pft(design: PftDesign) -> Self {
        Scheme::Pft {
            design,
            practical: false,
        }
    }

    pub fn base(&self) -> &FtDesign {
        match self {
            Scheme::Ft { design, .. } => design,
            Scheme::Pft { design, .. } => &design.base,
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Scheme::Ft { practical: false, .. } => Mode::Ft,
            Scheme::Ft { practical: true, .. } => Mode::FtPractical,
            Scheme::Pft { practical: false, .. } => Mode::Pft,
            Scheme::Pft { practical: true, .. } => Mode::PftPractical,
        }
    }

    pub fn n(&self) -> usize {
        self.base().n()
    }

    /// `μ(t)` for the prescribed-time law, 1 otherwise.
    pub fn gain(&self, t: f64) -> Result<f64, ControlError> {
        match self {
            Scheme::Ft { .. } => Ok(1.0),
            Scheme::Pft { design, .. } => mu(t, design),
        }
    }

    pub fn control(&self, x: &[f64], t: f64, theta: &[f64], chi: &[f64]) -> Result<ControlOutput, ControlError> {
        match self {
            Scheme::Ft { design, .. } => ft_controller::control_signal_with(x, theta, chi, design),
            Scheme::Pft { design, .. } => pft_controller::control_signal_with(x, mu(t, design)?, theta, chi, design),
        }
    }

    /// `s_i` of 1-based channel `i >= 2` given `x_i` and `x*_i`.
    fn error_at(&self, i: usize, x_i: f64, xstar_i: f64) -> Result<f64, ControlError> {
        match self {
            Scheme::Ft { design, .. } => virtual_error(x_i, xstar_i, design.q()[i - 1]),
            Scheme::Pft { .. } => Ok(x_i - xstar_i),
        }
    }

    fn virtual_at(&self, i: usize, s_i: f64, gain: f64, theta: f64, chi: f64) -> Result<f64, ControlError> {
        match self {
            Scheme::Ft { design, .. } => ft_controller::virtual_control_with(i, s_i, theta, chi, design),
            Scheme::Pft { design, .. } => pft_controller::virtual_control_with(i, s_i, gain, theta, chi, design),
        }
    }

    /// `V_i` of 1-based channel `i`.
    pub fn lyapunov(&self, i: usize, x_i: f64, xstar_i: f64, s_i: f64, chi_i: f64) -> Result<f64, ControlError> {
        match self {
            Scheme::Ft { design, .. } if i > 1 => lyap_vi(i, x_i, xstar_i, chi_i, design.q()[i - 1], &design.quad),
            Scheme::Ft { .. } => lyap_v1(s_i, chi_i),
            Scheme::Pft { .. } => pft_controller::pft_lyap(i, s_i, chi_i),
        }
    }

    pub fn lyapunovs(&self, x: &[f64], out: &ControlOutput, chi: &[f64]) -> Result<Vec<f64>, ControlError> {
        (1..=self.n())
            .map(|i| self.lyapunov(i, x[i - 1], out.xstar[i - 1], out.s[i - 1], chi[i - 1]))
            .collect()
    }

    /// Right-hand side of every auxiliary variable.
    pub fn eta_rates(&self, eta: &[f64], s: &[f64], t: f64) -> Result<Vec<f64>, ControlError> {
        (1..=self.n())
            .map(|i| eta_derivative(i, eta[i - 1], s, t, self))
            .collect()
    }
}

/// `η̇_i` for 1-based channel `i`; `s_{n+1}` is taken as zero.
pub fn eta_derivative(i: usize, eta_i: f64, s: &[f64], t: f64, scheme: &Scheme) -> Result<f64, ControlError> {
    let base = scheme.base();
    let n = base.n();
    let next = if i < n { s[i] } else { 0.0 };
    let mut rate;
    match scheme {
        Scheme::Ft { practical, .. } => {
            let p = base.one_plus_alpha();
            rate = -base.a[i - 1] * frac_pow(eta_i, base.gamma())? - base.big_q[i - 1] * frac_pow(s[i - 1], p)?;
            for j in 1..i {
                rate += base.coupling(i, j) * frac_pow(s[j - 1], p)?;
            }
            rate += base.coupling(i, i + 1) * frac_pow(next, p)?;
            if *practical {
                rate += base.zeta;
            }
        }
        Scheme::Pft { design, practical } => {
            let m = mu(t, design)?;
            let w = |j: usize| m.powf(design.beta[j - 1]);
            let wi = w(i);
            rate = -base.a[i - 1] * wi * eta_i - base.big_q[i - 1] * wi * s[i - 1] * s[i - 1];
            for j in 1..i {
                rate += base.coupling(i, j) * w(j) * s[j - 1] * s[j - 1];
            }
            rate += base.coupling(i, i + 1) * next * next / wi;
            if *practical && i == n {
                rate += base.zeta / wi;
            }
        }
    }
    Ok(rate)
}

/// `S_i = V_i - η_i`.
pub fn supervisory(v_i: f64, eta_i: f64) -> f64 {
    v_i - eta_i
}

/// Recursion pass that tolerates a barrier violation: channels from the
/// first violated one on report `V = +∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub s: Vec<f64>,
    pub xstar: Vec<f64>,
    pub v: Vec<f64>,
    /// 1-based channel whose barrier was violated, if any.
    pub violated: Option<usize>,
}

impl Evaluation {
    pub fn u(&self) -> f64 {
        self.xstar.last().copied().unwrap_or(f64::NAN)
    }

    pub fn supervisory(&self, eta: &[f64]) -> Vec<f64> {
        self.v.iter().zip(eta).map(|(v, e)| supervisory(*v, *e)).collect()
    }
}

pub fn evaluate(x: &[f64], t: f64, state: &SwitchState, scheme: &Scheme) -> Result<Evaluation, ControlError> {
    let n = scheme.n();
    if x.len() != n || state.n() != n {
        return Err(ControlError::Dimension {
            expected: n,
            got: x.len(),
        });
    }
    let gain = scheme.gain(t)?;
    let mut ev = Evaluation {
        s: vec![f64::NAN; n],
        xstar: vec![f64::NAN; n + 1],
        v: vec![f64::INFINITY; n],
        violated: None,
    };
    ev.xstar[0] = 0.0;
    for i in 1..=n {
        let si = if i == 1 {
            x[0]
        } else {
            scheme.error_at(i, x[i - 1], ev.xstar[i - 1])?
        };
        ev.s[i - 1] = si;
        let chi = state.chi[i - 1];
        if si.abs() >= chi {
            ev.violated = Some(i);
            break;
        }
        ev.v[i - 1] = scheme.lyapunov(i, x[i - 1], ev.xstar[i - 1], si, chi)?;
        ev.xstar[i] = scheme.virtual_at(i, si, gain, state.theta[i - 1], chi)?;
    }
    Ok(ev)
}

/// Step (b) of the switching rule, sequentially over channels: recompute
/// `s_i` under the current `Θ` and raise `χ_i` to `|s_i| + ς` where needed.
fn contain_errors(t: f64, x: &[f64], state: &mut SwitchState, scheme: &Scheme) -> Result<(), ControlError> {
    let gain = scheme.gain(t)?;
    let varsigma = scheme.base().varsigma;
    let mut xstar = 0.0;
    for i in 1..=scheme.n() {
        let si = if i == 1 {
            x[0]
        } else {
            scheme.error_at(i, x[i - 1], xstar)?
        };
        let chi = state.chi[i - 1];
        if si.abs() >= chi {
            let new = si.abs() + varsigma;
            state.chi[i - 1] = new;
            state.events.push(SwitchEvent {
                t,
                channel: i,
                kind: EventKind::ChiUpdate,
                old: chi,
                new,
            });
        }
        xstar = scheme.virtual_at(i, si, gain, state.theta[i - 1], state.chi[i - 1])?;
    }
    Ok(())
}

/// Step (c): reset `η_i := V_i + ε` wherever `V_i >= η_i`.
fn reset_auxiliaries(t: f64, x: &[f64], state: &mut SwitchState, scheme: &Scheme) -> Result<Evaluation, ControlError> {
    let ev = evaluate(x, t, state, scheme)?;
    if let Some(i) = ev.violated {
        let s_abs = ev.s[i - 1].abs();
        return Err(ControlError::BarrierViolation {
            channel: i,
            s_abs,
            chi: state.chi[i - 1],
        });
    }
    let eps = scheme.base().varepsilon;
    for i in 1..=scheme.n() {
        let v = ev.v[i - 1];
        if v >= state.eta[i - 1] {
            let old = state.eta[i - 1];
            state.eta[i - 1] = v + eps;
            state.events.push(SwitchEvent {
                t,
                channel: i,
                kind: EventKind::EtaReset,
                old,
                new: v + eps,
            });
        }
    }
    Ok(ev)
}

/// Initial switching state at `x(0)`: `σ = σ(0)`, barriers raised where the
/// configured `χ(0)` does not contain `s(0)`, `η = V(0) + ε`.
pub fn init_switch_state(x0: &[f64], scheme: &Scheme) -> Result<SwitchState, ControlError> {
    let base = scheme.base();
    let n = base.n();
    if x0.len() != n {
        return Err(ControlError::Dimension {
            expected: n,
            got: x0.len(),
        });
    }
    let theta = theta_of_sigma(base, base.sigma0);
    let mut state = SwitchState {
        sigma: vec![base.sigma0; n],
        theta: vec![theta; n],
        chi: base.chi0.clone(),
        eta: vec![0.0; n],
        events: Vec::new(),
        switch_count: 0,
    };
    contain_errors(0.0, x0, &mut state, scheme)?;
    let ev = evaluate(x0, 0.0, &state, scheme)?;
    for i in 0..n {
        state.eta[i] = ev.v[i] + base.varepsilon;
    }
    Ok(state)
}

/// What one call to [`apply_switching`] saw and did.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchOutcome {
    pub fired: bool,
    /// 1-based channels with `S_i > 0` before the update.
    pub flagged: Vec<usize>,
    /// Barrier violated at the sample before the update.
    pub barrier_hit: bool,
    /// Largest `S_i` before the update.
    pub max_s_before: f64,
    /// Evaluation after the update (equal to the pre-update one if nothing fired).
    pub evaluation: Evaluation,
}

/// Logic-based switching at one sample.
///
/// When some `S_i > 0`: (a) advance `σ_i` and `Θ_i` of every flagged channel,
/// (b) re-contain each `s_i` under the new `Θ` by raising `χ_i`, (c) reset
/// `η_i` wherever `V_i >= η_i`. Events are appended in that order.
pub fn apply_switching(
    t: f64,
    x: &[f64],
    state: &mut SwitchState,
    scheme: &Scheme,
) -> Result<SwitchOutcome, SupervisorError> {
    let before = evaluate(x, t, state, scheme)?;
    let sup = before.supervisory(&state.eta);
    let flagged: Vec<usize> = (1..=scheme.n()).filter(|&i| sup[i - 1] > 0.0).collect();
    let max_s_before = sup.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let barrier_hit = before.violated.is_some();
    if flagged.is_empty() {
        return Ok(SwitchOutcome {
            fired: false,
            flagged,
            barrier_hit,
            max_s_before,
            evaluation: before,
        });
    }
    let base = scheme.base();
    state.switch_count += 1;
    if state.switch_count > base.switch_cap {
        return Err(SupervisorError::SwitchCap {
            t,
            cap: base.switch_cap,
        });
    }
    for &i in &flagged {
        let old = state.theta[i - 1];
        state.sigma[i - 1] += 1;
        let new = theta_of_sigma(base, state.sigma[i - 1]);
        state.theta[i - 1] = new;
        state.events.push(SwitchEvent {
            t,
            channel: i,
            kind: EventKind::ThetaUpdate,
            old,
            new,
        });
    }
    contain_errors(t, x, state, scheme)?;
    let after = reset_auxiliaries(t, x, state, scheme)?;
    Ok(SwitchOutcome {
        fired: true,
        flagged,
        barrier_hit,
        max_s_before,
        evaluation: after,
    })
}
