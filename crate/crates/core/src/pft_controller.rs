//! Prescribed-finite-time controller.
//!
//! Same recursion shape as the finite-time law but with integer powers, plain
//! differences `s_{i+1} = x_{i+1} - x*_{i+1}` and a barrier term scaled by
//! `μ(t)^{β_i}`, `μ(t) = T / (T - t)`.

use crate::ft_controller::{lyap_v1, ControlError, ControlOutput, FtDesign, SwitchState};

#[derive(Debug, Clone, PartialEq)]
pub struct PftDesign {
    pub base: FtDesign,
    pub beta: Vec<f64>,
    /// Prescribed settling time `T`.
    pub horizon: f64,
    pub mu_max: f64,
    pub t_stop_frac: f64,
}

impl PftDesign {
    pub fn new(
        base: FtDesign,
        beta: Vec<f64>,
        horizon: f64,
        mu_max: f64,
        t_stop_frac: f64,
    ) -> Result<Self, ControlError> {
        let bad = |m: String| Err(ControlError::InvalidDesign(m));
        if beta.len() != base.n() {
            return bad(format!("beta has {} entries, expected {}", beta.len(), base.n()));
        }
        if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b > 1.0)) {
            return bad(format!("beta entries must exceed 1, found {b}"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return bad(format!("T must be positive, found {horizon}"));
        }
        if !(mu_max.is_finite() && mu_max >= 1.0) {
            return bad(format!("mu_max must be >= 1, found {mu_max}"));
        }
        if !(t_stop_frac > 0.0 && t_stop_frac < 1.0) {
            return bad(format!("t_stop_frac must lie in (0, 1), found {t_stop_frac}"));
        }
        Ok(Self {
            base,
            beta,
            horizon,
            mu_max,
            t_stop_frac,
        })
    }

    /// Second-order benchmark settings on top of `base`.
    pub fn second_order(base: FtDesign) -> Result<Self, ControlError> {
        Self::new(base, vec![1.4, 4.2], 4.5, 1e6, 0.9999)
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn t_stop(&self) -> f64 {
        self.t_stop_frac * self.horizon
    }
}

/// `min(T / (T - t), μ_max)`.
pub fn mu(t: f64, design: &PftDesign) -> Result<f64, ControlError> {
    let big_t = design.horizon;
    if t.is_nan() || t >= big_t || t < 0.0 {
        return Err(ControlError::InvalidDesign(format!(
            "time {t} outside [0, T) with T = {big_t}"
        )));
    }
    Ok((big_t / (big_t - t)).min(design.mu_max))
}

/// Virtual control `x*_{i+1}` of 1-based channel `i`.
pub fn pft_virtual_control(
    i: usize,
    s_i: f64,
    t: f64,
    state: &SwitchState,
    design: &PftDesign,
) -> Result<f64, ControlError> {
    let m = mu(t, design)?;
    virtual_control_with(i, s_i, m, state.theta[i - 1], state.chi[i - 1], design)
}

pub(crate) fn virtual_control_with(
    i: usize,
    s_i: f64,
    mu: f64,
    theta: f64,
    chi: f64,
    design: &PftDesign,
) -> Result<f64, ControlError> {
    if s_i.abs() >= chi {
        return Err(ControlError::BarrierViolation {
            channel: i,
            s_abs: s_i.abs(),
            chi,
        });
    }
    let base = &design.base;
    let scale = mu.powf(design.beta[i - 1]);
    Ok(theta * (-base.k[i - 1] * s_i - scale * base.u_gain[i - 1] * s_i / (chi * chi - s_i * s_i)))
}

/// `½ ln(χ² / (χ² - s²))`.
pub fn pft_lyap(i: usize, s_i: f64, chi_i: f64) -> Result<f64, ControlError> {
    lyap_v1(s_i, chi_i).map_err(|e| match e {
        ControlError::BarrierViolation { s_abs, chi, .. } => ControlError::BarrierViolation { channel: i, s_abs, chi },
        other => other,
    })
}

pub fn pft_control_signal(
    x: &[f64],
    t: f64,
    state: &SwitchState,
    design: &PftDesign,
) -> Result<ControlOutput, ControlError> {
    let m = mu(t, design)?;
    control_signal_with(x, m, &state.theta, &state.chi, design)
}

pub(crate) fn control_signal_with(
    x: &[f64],
    mu: f64,
    theta: &[f64],
    chi: &[f64],
    design: &PftDesign,
) -> Result<ControlOutput, ControlError> {
    let n = design.n();
    if x.len() != n || theta.len() != n || chi.len() != n {
        return Err(ControlError::Dimension {
            expected: n,
            got: x.len(),
        });
    }
    let mut s = Vec::with_capacity(n);
    let mut xstar = Vec::with_capacity(n + 1);
    xstar.push(0.0);
    for i in 1..=n {
        let si = x[i - 1] - xstar[i - 1];
        s.push(si);
        xstar.push(virtual_control_with(i, si, mu, theta[i - 1], chi[i - 1], design)?);
    }
    Ok(ControlOutput { u: xstar[n], s, xstar })
}
