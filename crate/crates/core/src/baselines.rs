//! Nussbaum-gain backstepping controller for second-order plants, used as the
//! comparison baseline.

use crate::ft_controller::ControlError;

/// `ξ² cos ξ`.
pub fn nussbaum_gain(xi: f64) -> f64 {
    xi * xi * xi.cos()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NussbaumParams {
    pub k1: f64,
    pub u1: f64,
    pub k2: f64,
    pub u2: f64,
    pub chi1: f64,
    pub chi2: f64,
    pub xi0: [f64; 2],
}

impl Default for NussbaumParams {
    fn default() -> Self {
        Self {
            k1: 1.0,
            u1: 1.0,
            k2: 4.0,
            u2: 4.0,
            chi1: 2.0,
            chi2: 1.0,
            xi0: [0.0, 0.0],
        }
    }
}

impl NussbaumParams {
    pub fn validate(&self) -> Result<(), ControlError> {
        let vals = [self.k1, self.u1, self.k2, self.u2, self.chi1, self.chi2];
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ControlError::InvalidDesign(
                "Nussbaum gains and barriers must be positive".into(),
            ));
        }
        if self.xi0.iter().any(|v| !v.is_finite()) {
            return Err(ControlError::InvalidDesign("Nussbaum xi0 must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NussbaumState {
    pub xi1: f64,
    pub xi2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NussbaumOutput {
    pub u: f64,
    pub s: [f64; 2],
    pub xi_rates: [f64; 2],
}

fn channel(s: f64, k: f64, gain_u: f64, chi: f64, index: usize) -> Result<(f64, f64), ControlError> {
    if s.abs() >= chi {
        return Err(ControlError::BarrierViolation {
            channel: index,
            s_abs: s.abs(),
            chi,
        });
    }
    let gap = chi * chi - s * s;
    let v = k * s + gain_u * s / gap;
    Ok((v, s * v / gap))
}

pub fn nussbaum_control(x: &[f64], state: NussbaumState, p: &NussbaumParams) -> Result<NussbaumOutput, ControlError> {
    if x.len() != 2 {
        return Err(ControlError::Dimension {
            expected: 2,
            got: x.len(),
        });
    }
    let s1 = x[0];
    let (v1, r1) = channel(s1, p.k1, p.u1, p.chi1, 1)?;
    let s2 = x[1] - nussbaum_gain(state.xi1) * v1;
    let (v2, r2) = channel(s2, p.k2, p.u2, p.chi2, 2)?;
    Ok(NussbaumOutput {
        u: nussbaum_gain(state.xi2) * v2,
        s: [s1, s2],
        xi_rates: [r1, r2],
    })
}
