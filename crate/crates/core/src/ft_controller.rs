//! Finite-time backstepping controller with switching barrier Lyapunov
//! functions.
//!
//! The recursion is
//!
//! ```text
//! s_1       = x_1
//! x*_{i+1}  = Θ_i [ -K_i s_i^{q_{i+1}} - U_i s_i^{q_{i+1}} / (χ_i² - s_i²)^{1+2α} ]
//! s_{i+1}   = x_{i+1}^{1/q_{i+1}} - (x*_{i+1})^{1/q_{i+1}}
//! u         = x*_{n+1}
//! ```
//!
//! where `Θ_i` and `χ_i` are the piecewise-constant parameters tuned by the
//! supervisor.

use thiserror::Error;

use crate::numerics::{adaptive_quad, frac_pow, q_sequence, NumericsError, QuadratureSpec, RationalExponent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("barrier violated in channel {channel}: |s| = {s_abs} >= chi = {chi}")]
    BarrierViolation { channel: usize, s_abs: f64, chi: f64 },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Design constants shared by the finite-time and prescribed-time laws.
///
/// Vectors are indexed by zero-based channel. `c[i][j]` is the coupling
/// weight `c_{i+1, j+1}`; only `j < i` and `j = i + 1` are read.
#[derive(Debug, Clone, PartialEq)]
pub struct FtDesign {
    pub k: Vec<f64>,
    pub u_gain: Vec<f64>,
    pub alpha: RationalExponent,
    pub a: Vec<f64>,
    pub big_q: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub varsigma: f64,
    pub varepsilon: f64,
    /// `θ(0)`, the magnitude used while `σ = 0`.
    pub theta0: f64,
    pub iota1: f64,
    pub iota2: f64,
    /// Initial barriers `χ_i(0)`.
    pub chi0: Vec<f64>,
    /// Initial switching index.
    pub sigma0: u32,
    /// Residual term of the practical-stability auxiliary systems; 0 disables it.
    pub zeta: f64,
    pub switch_cap: usize,
    pub quad: QuadratureSpec,
    exps: Exponents,
}

#[derive(Debug, Clone, PartialEq)]
struct Exponents {
    q: Vec<RationalExponent>,
    q_recip: Vec<RationalExponent>,
    two_minus_q: Vec<RationalExponent>,
    one_plus_alpha: RationalExponent,
    gamma: RationalExponent,
    barrier_power: f64,
}

impl Exponents {
    fn new(alpha: RationalExponent, n: usize) -> Result<Self, NumericsError> {
        let q = q_sequence(alpha, n)?;
        let two = RationalExponent::new(2, 1)?;
        let q_recip = q.iter().map(|p| p.recip()).collect::<Result<Vec<_>, _>>()?;
        let two_minus_q = q.iter().map(|p| two.sub(p)).collect::<Result<Vec<_>, _>>()?;
        let one_plus_alpha = alpha.add(&RationalExponent::one())?;
        let gamma = RationalExponent::new(one_plus_alpha.num(), 2 * one_plus_alpha.den())?;
        Ok(Self {
            q,
            q_recip,
            two_minus_q,
            one_plus_alpha,
            gamma,
            barrier_power: 1.0 + 2.0 * alpha.value(),
        })
    }
}

/// Builder input for [`FtDesign`]; every field has the value used for the
/// second-order benchmarks by default.
#[derive(Debug, Clone, PartialEq)]
pub struct FtParams {
    pub k: Vec<f64>,
    pub u_gain: Vec<f64>,
    pub alpha: RationalExponent,
    pub a: Vec<f64>,
    pub big_q: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub varsigma: f64,
    pub varepsilon: f64,
    pub theta0: f64,
    pub iota1: f64,
    pub iota2: f64,
    pub chi0: Vec<f64>,
    pub sigma0: u32,
    pub zeta: f64,
    pub switch_cap: usize,
    pub quad: QuadratureSpec,
}

impl FtParams {
    /// Second-order benchmark settings.
    pub fn second_order() -> Self {
        Self::uniform(2, 1.0, 4.0, vec![2.0, 2.0])
    }

    /// Third-order benchmark settings.
    pub fn third_order() -> Self {
        let mut p = Self::uniform(3, 1.0, 5.0, vec![2.0, 5.0, 8.0]);
        p.big_q = vec![2.0, 2.0, 1.0];
        p
    }

    /// Defaults for an `n`-channel plant: the benchmark settings for
    /// `n = 2, 3`, otherwise unit coupling with `Q_i` on the large-gain
    /// boundary.
    pub fn for_order(n: usize) -> Self {
        match n {
            2 => Self::second_order(),
            3 => Self::third_order(),
            _ => {
                let mut p = Self::uniform(n, 1.0, 4.0, vec![2.0; n]);
                p.big_q = (1..=n)
                    .map(|i| (n - i) as f64 + if i > 1 { 1.0 } else { 0.0 })
                    .collect();
                if n == 1 {
                    p.big_q = vec![1.0];
                }
                p
            }
        }
    }

    /// `n` channels with unit gains, coupling `c` and the given `ς`, `χ(0)`.
    pub fn uniform(n: usize, c: f64, varsigma: f64, chi0: Vec<f64>) -> Self {
        Self {
            k: vec![1.0; n],
            u_gain: vec![1.0; n],
            alpha: RationalExponent::odd(41, 49).expect("valid"),
            a: vec![0.2; n],
            big_q: vec![1.0; n],
            c: vec![vec![c; n]; n],
            varsigma,
            varepsilon: 0.01,
            theta0: 0.1,
            iota1: 1.0,
            iota2: 1.0,
            chi0,
            sigma0: 1,
            zeta: 0.0,
            switch_cap: 10_000,
            quad: QuadratureSpec::default(),
        }
    }

    pub fn build(self) -> Result<FtDesign, ControlError> {
        FtDesign::new(self)
    }
}

fn all_positive(name: &str, v: &[f64], n: usize) -> Result<(), ControlError> {
    if v.len() != n {
        return Err(ControlError::InvalidDesign(format!(
            "{name} has {} entries, expected {n}",
            v.len()
        )));
    }
    if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(ControlError::InvalidDesign(format!(
            "{name} entries must be positive, found {bad}"
        )));
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<(), ControlError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ControlError::InvalidDesign(format!(
            "{name} must be positive, found {v}"
        )))
    }
}

impl FtDesign {
    pub fn new(p: FtParams) -> Result<Self, ControlError> {
        let n = p.k.len();
        if n == 0 {
            return Err(ControlError::InvalidDesign("at least one channel is required".into()));
        }
        all_positive("K", &p.k, n)?;
        all_positive("U", &p.u_gain, n)?;
        all_positive("a", &p.a, n)?;
        all_positive("Q", &p.big_q, n)?;
        all_positive("chi0", &p.chi0, n)?;
        positive("varsigma", p.varsigma)?;
        positive("varepsilon", p.varepsilon)?;
        positive("theta0", p.theta0)?;
        positive("iota1", p.iota1)?;
        positive("iota2", p.iota2)?;
        if !(p.zeta >= 0.0 && p.zeta.is_finite()) {
            return Err(ControlError::InvalidDesign(format!(
                "zeta must be >= 0, found {}",
                p.zeta
            )));
        }
        if p.switch_cap == 0 {
            return Err(ControlError::InvalidDesign("switch_cap must be >= 1".into()));
        }
        if p.c.len() != n || p.c.iter().any(|row| row.len() != n) {
            return Err(ControlError::InvalidDesign(format!("c must be an {n}x{n} matrix")));
        }
        if p.c.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ControlError::InvalidDesign("c entries must be non-negative".into()));
        }
        p.quad.validate()?;
        let exps = Exponents::new(p.alpha, n)?;
        let design = FtDesign {
            k: p.k,
            u_gain: p.u_gain,
            alpha: p.alpha,
            a: p.a,
            big_q: p.big_q,
            c: p.c,
            varsigma: p.varsigma,
            varepsilon: p.varepsilon,
            theta0: p.theta0,
            iota1: p.iota1,
            iota2: p.iota2,
            chi0: p.chi0,
            sigma0: p.sigma0,
            zeta: p.zeta,
            switch_cap: p.switch_cap,
            quad: p.quad,
            exps,
        };
        for (i, margin) in design.large_gain_margins().into_iter().enumerate() {
            if margin < 0.0 {
                return Err(ControlError::InvalidDesign(format!(
                    "large-gain condition fails in channel {}: Q - sum(c) = {margin}",
                    i + 1
                )));
            }
        }
        Ok(design)
    }

    pub fn n(&self) -> usize {
        self.k.len()
    }

    /// `q_1 ..= q_{n+1}`.
    pub fn q(&self) -> &[RationalExponent] {
        &self.exps.q
    }

    /// `q_{n+1}`, the smallest power in the chain.
    pub fn q_last(&self) -> RationalExponent {
        *self.exps.q.last().expect("n >= 1")
    }

    pub fn one_plus_alpha(&self) -> RationalExponent {
        self.exps.one_plus_alpha
    }

    /// `γ = (1 + α) / 2`.
    pub fn gamma(&self) -> RationalExponent {
        self.exps.gamma
    }

    /// Coupling weight `c_{i,j}` for 1-based indices; zero outside the matrix.
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        if i == 0 || j == 0 || i > self.n() || j > self.n() {
            0.0
        } else {
            self.c[i - 1][j - 1]
        }
    }

    /// `Q_i - Σ_{j>i} c_{j,i} - c_{i-1,i}` for each channel.
    pub fn large_gain_margins(&self) -> Vec<f64> {
        let n = self.n();
        (1..=n)
            .map(|i| {
                let below: f64 = (i + 1..=n).map(|j| self.coupling(j, i)).sum();
                self.big_q[i - 1] - below - self.coupling(i - 1, i)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    ThetaUpdate,
    ChiUpdate,
    EtaReset,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ThetaUpdate => "theta",
            EventKind::ChiUpdate => "chi",
            EventKind::EtaReset => "eta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub t: f64,
    /// 1-based channel.
    pub channel: usize,
    pub kind: EventKind,
    pub old: f64,
    pub new: f64,
}

/// Per-channel adaptive parameters and the log of every update.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchState {
    pub sigma: Vec<u32>,
    pub theta: Vec<f64>,
    pub chi: Vec<f64>,
    pub eta: Vec<f64>,
    pub events: Vec<SwitchEvent>,
    /// Number of switching instants so far.
    pub switch_count: usize,
}

impl SwitchState {
    pub fn n(&self) -> usize {
        self.sigma.len()
    }
}

/// `Θ(σ)`: `+θ(0)` at `σ = 0`, otherwise `(-1)^σ (ι_1 + ι_2 σ)`.
pub fn theta_of_sigma(design: &FtDesign, sigma: u32) -> f64 {
    if sigma == 0 {
        design.theta0
    } else {
        let mag = design.iota1 + design.iota2 * sigma as f64;
        if sigma.is_multiple_of(2) {
            mag
        } else {
            -mag
        }
    }
}

fn check_barrier(channel: usize, s: f64, chi: f64) -> Result<(), ControlError> {
    if s.abs() < chi {
        Ok(())
    } else {
        Err(ControlError::BarrierViolation {
            channel,
            s_abs: s.abs(),
            chi,
        })
    }
}

/// Virtual control `x*_{i+1}` of 1-based channel `i`.
pub fn virtual_control(i: usize, s_i: f64, state: &SwitchState, design: &FtDesign) -> Result<f64, ControlError> {
    virtual_control_with(i, s_i, state.theta[i - 1], state.chi[i - 1], design)
}

pub(crate) fn virtual_control_with(
    i: usize,
    s_i: f64,
    theta: f64,
    chi: f64,
    design: &FtDesign,
) -> Result<f64, ControlError> {
    check_barrier(i, s_i, chi)?;
    if s_i == 0.0 {
        return Ok(0.0);
    }
    let sq = frac_pow(s_i, design.exps.q[i])?;
    let gap = (chi * chi - s_i * s_i).powf(design.exps.barrier_power);
    Ok(theta * (-design.k[i - 1] * sq - design.u_gain[i - 1] * sq / gap))
}

/// `x_i^{1/q_i} - (x*_i)^{1/q_i}`.
pub fn virtual_error(x_i: f64, xstar_i: f64, q_i: RationalExponent) -> Result<f64, ControlError> {
    let r = q_i.recip()?;
    Ok(frac_pow(x_i, r)? - frac_pow(xstar_i, r)?)
}

/// `½ ln(χ² / (χ² - s²))`.
pub fn lyap_v1(s1: f64, chi1: f64) -> Result<f64, ControlError> {
    check_barrier(1, s1, chi1)?;
    // ln(χ²/(χ²-s²)) = -ln(1 - (s/χ)²)
    let r = s1 / chi1;
    Ok(-0.5 * (-r * r).ln_1p())
}

/// Integral barrier `∫_{x*}^{x} υ^{2-q} / (χ² - υ²) dτ` with
/// `υ(τ) = τ^{1/q} - x*^{1/q}`.
///
/// The integration runs over `τ`; the `υ` form of the integrand keeps it
/// bounded on the whole interval whenever the endpoint error is inside the
/// barrier.
pub fn lyap_vi(
    i: usize,
    x_i: f64,
    xstar_i: f64,
    chi_i: f64,
    q_i: RationalExponent,
    quad: &QuadratureSpec,
) -> Result<f64, ControlError> {
    let s = virtual_error(x_i, xstar_i, q_i)?;
    check_barrier(i, s, chi_i)?;
    if x_i == xstar_i {
        return Ok(0.0);
    }
    let recip = q_i.recip()?;
    let two = RationalExponent::new(2, 1)?;
    let power = two.sub(&q_i)?;
    let w = frac_pow(xstar_i, recip)?;
    let chi2 = chi_i * chi_i;
    let clip = chi_i * (1.0 - 1e-12);
    let integrand = |tau: f64| {
        let ups = (frac_pow(tau, recip).unwrap_or(0.0) - w).clamp(-clip, clip);
        frac_pow(ups, power).unwrap_or(0.0) / (chi2 - ups * ups)
    };
    let v = adaptive_quad(integrand, xstar_i, x_i, quad)?;
    Ok(v.max(0.0))
}

/// Bounds on the integral barrier for fixed `(x, x*, χ, q)`, valid while
/// `|s| < χ`:
///
/// ```text
/// (q/2) 2^{3-q-2/q} |x - x*|^{2/q} / χ²  <=  V  <=  2χ² / (χ² - s²)
/// ```
pub fn barrier_bounds(x_i: f64, xstar_i: f64, chi_i: f64, q_i: RationalExponent) -> Result<(f64, f64), ControlError> {
    let s = virtual_error(x_i, xstar_i, q_i)?;
    let q = q_i.value();
    let chi2 = chi_i * chi_i;
    let lower = 0.5 * q * 2f64.powf(3.0 - q - 2.0 / q) * (x_i - xstar_i).abs().powf(2.0 / q) / chi2;
    let upper = 2.0 * chi2 / (chi2 - s * s);
    Ok((lower, upper))
}

/// Intermediates of one pass through the recursion.
///
/// `xstar[0] = 0` stands for the implicit reference of `s_1 = x_1`;
/// `xstar[i]` (`1 <= i <= n`) is `x*_{i+1}` and `xstar[n] = u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: f64,
    pub s: Vec<f64>,
    pub xstar: Vec<f64>,
}

pub fn control_signal(x: &[f64], state: &SwitchState, design: &FtDesign) -> Result<ControlOutput, ControlError> {
    control_signal_with(x, &state.theta, &state.chi, design)
}

pub(crate) fn control_signal_with(
    x: &[f64],
    theta: &[f64],
    chi: &[f64],
    design: &FtDesign,
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
        let si = if i == 1 {
            x[0]
        } else {
            virtual_error(x[i - 1], xstar[i - 1], design.exps.q[i - 1])?
        };
        s.push(si);
        xstar.push(virtual_control_with(i, si, theta[i - 1], chi[i - 1], design)?);
    }
    Ok(ControlOutput { u: xstar[n], s, xstar })
}

/// `V_1 .. V_n` for a recursion pass.
pub fn lyapunov_values(
    x: &[f64],
    out: &ControlOutput,
    chi: &[f64],
    design: &FtDesign,
) -> Result<Vec<f64>, ControlError> {
    (1..=design.n())
        .map(|i| {
            if i == 1 {
                lyap_v1(out.s[0], chi[0])
            } else {
                lyap_vi(
                    i,
                    x[i - 1],
                    out.xstar[i - 1],
                    chi[i - 1],
                    design.exps.q[i - 1],
                    &design.quad,
                )
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn design() -> FtDesign {
        FtParams::second_order().build().unwrap()
    }

    fn state(theta: &[f64], chi: &[f64]) -> SwitchState {
        SwitchState {
            sigma: vec![1; theta.len()],
            theta: theta.to_vec(),
            chi: chi.to_vec(),
            eta: vec![0.0; theta.len()],
            events: Vec::new(),
            switch_count: 0,
        }
    }

    fn r(n: i64, d: i64) -> RationalExponent {
        RationalExponent::new(n, d).unwrap()
    }

    #[test]
    fn theta_schedule() {
        let d = design();
        assert_eq!(theta_of_sigma(&d, 0), 0.1);
        assert_eq!(theta_of_sigma(&d, 1), -2.0);
        assert_eq!(theta_of_sigma(&d, 2), 3.0);
        assert_eq!(theta_of_sigma(&d, 4), 5.0);
        let mut last = 0.0;
        for s in 0..50 {
            let m = theta_of_sigma(&d, s).abs();
            assert!(m >= last);
            last = m;
        }
    }

    #[test]
    fn virtual_control_examples() {
        let d = design();
        let st = state(&[0.1, 0.1], &[2.0, 2.0]);
        assert_eq!(virtual_control(1, 0.0, &st, &d).unwrap(), 0.0);
        // 0.1 [ -1 - 1 / 3^{1 + 82/49} ]
        let expected = 0.1 * (-1.0 - 1.0 / 3f64.powf(131.0 / 49.0));
        assert!((virtual_control(1, 1.0, &st, &d).unwrap() - expected).abs() < 1e-15);
        let flipped = state(&[-0.1, 0.1], &[2.0, 2.0]);
        assert_eq!(
            virtual_control(1, 0.7, &flipped, &d).unwrap(),
            -virtual_control(1, 0.7, &st, &d).unwrap()
        );
        assert!(matches!(
            virtual_control(1, 2.0, &st, &d),
            Err(ControlError::BarrierViolation { channel: 1, .. })
        ));
    }

    #[test]
    fn virtual_error_examples() {
        assert_eq!(virtual_error(0.3, 0.3, r(41, 49)).unwrap(), 0.0);
        assert_eq!(virtual_error(0.7, -0.2, r(1, 1)).unwrap(), 0.7 - -0.2);
        assert!((virtual_error(1.0, -1.0, r(41, 49)).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn lyap_v1_examples() {
        assert_eq!(lyap_v1(0.0, 2.0).unwrap(), 0.0);
        assert!((lyap_v1(1.0, 2.0).unwrap() - 0.5 * (4.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!(lyap_v1(1.999, 2.0).unwrap() > lyap_v1(1.9, 2.0).unwrap());
        assert!(lyap_v1(2.0, 2.0).is_err());
    }

    #[test]
    fn barrier_grows_without_bound() {
        let q = r(41, 49);
        let quad = QuadratureSpec::default();
        let chi = 1.5;
        let xstar = 0.3;
        let w = frac_pow(xstar, q.recip().unwrap()).unwrap();
        let mut prev1 = 0.0;
        let mut prev2 = 0.0;
        for k in 1..=6 {
            let s = chi * (1.0 - 10f64.powi(-k));
            let v1 = lyap_v1(s, chi).unwrap();
            let x = frac_pow(w + s, q).unwrap();
            let v2 = lyap_vi(2, x, xstar, chi, q, &quad).unwrap();
            assert!(v1 > prev1 && v2 > prev2, "k = {k}");
            prev1 = v1;
            prev2 = v2;
        }
        assert!(prev1 > 6.0 && prev2 > 3.0);
    }

    #[test]
    fn lyap_vi_empty_interval_and_q_one_closed_form() {
        let quad = QuadratureSpec::default();
        assert_eq!(lyap_vi(2, 0.4, 0.4, 2.0, r(41, 49), &quad).unwrap(), 0.0);
        let v = lyap_vi(2, 0.9, -0.6, 2.0, r(1, 1), &quad).unwrap();
        let closed = 0.5 * (4.0 / (4.0 - 1.5f64 * 1.5)).ln();
        assert!((v - closed).abs() < 1e-9);
    }

    /// Brute-force composite trapezoid at 1e6 panels.
    #[test]
    fn lyap_vi_matches_trapezoid_oracle() {
        let q = 41.0 / 49.0;
        let chi2 = 4.0;
        let g = |t: f64| {
            let ups = t.abs().powf(1.0 / q) * t.signum();
            ups.abs().powf(2.0 - q) * ups.signum() / (chi2 - ups * ups)
        };
        let n = 1_000_000;
        let h = 0.5 / n as f64;
        let mut sum = 0.5 * (g(0.0) + g(0.5));
        for k in 1..n {
            sum += g(k as f64 * h);
        }
        let oracle = sum * h;
        let v = lyap_vi(2, 0.5, 0.0, 2.0, r(41, 49), &QuadratureSpec::default()).unwrap();
        assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
    }

    #[test]
    fn control_signal_origin_and_degenerate_chain() {
        let d = design();
        let st = state(&[0.1, 0.1], &[2.0, 2.0]);
        let out = control_signal(&[0.0, 0.0], &st, &d).unwrap();
        assert_eq!(out.u, 0.0);
        assert_eq!(out.s, vec![0.0, 0.0]);
        assert_eq!(out.xstar, vec![0.0, 0.0, 0.0]);

        let mut p = FtParams::uniform(1, 1.0, 4.0, vec![2.0]);
        p.big_q = vec![1.0];
        let d1 = p.build().unwrap();
        let st1 = state(&[0.1], &[2.0]);
        let out = control_signal(&[0.4], &st1, &d1).unwrap();
        assert_eq!(out.u, virtual_control(1, 0.4, &st1, &d1).unwrap());
    }

    /// Two-step hand evaluation at the benchmark initial state.
    #[test]
    fn control_signal_hand_oracle_case_a() {
        let d = design();
        let st = state(&[0.1, 0.1], &[2.0, 2.0]);
        let out = control_signal(&[0.1, 0.2], &st, &d).unwrap();
        let q2 = 41.0 / 49.0;
        let q3 = 33.0 / 49.0;
        let bp = 1.0 + 2.0 * q2;
        let s1 = 0.1f64;
        let x2s = 0.1 * (-s1.powf(q2) - s1.powf(q2) / (4.0 - s1 * s1).powf(bp));
        let s2 = 0.2f64.powf(1.0 / q2) - (-(-x2s).powf(1.0 / q2));
        let u = 0.1 * (-s2.powf(q3) - s2.powf(q3) / (4.0 - s2 * s2).powf(bp));
        assert!(x2s < 0.0 && s2 > 0.0);
        assert!((out.xstar[1] - x2s).abs() < 1e-15);
        assert!((out.s[1] - s2).abs() < 1e-15);
        assert!((out.u - u).abs() < 1e-15);
    }

    #[test]
    fn default_orders_build() {
        for n in 1..=5 {
            let d = FtParams::for_order(n).build().unwrap();
            assert_eq!(d.n(), n);
            assert!(d.large_gain_margins().iter().all(|m| *m >= 0.0));
        }
        assert_eq!(FtParams::for_order(3), FtParams::third_order());
    }

    #[test]
    fn design_rejects_bad_parameters() {
        let mut p = FtParams::second_order();
        p.k[0] = 0.0;
        assert!(p.build().is_err());
        let mut p = FtParams::second_order();
        p.big_q[0] = 0.5;
        assert!(matches!(p.build(), Err(ControlError::InvalidDesign(m)) if m.contains("large-gain")));
        let mut p = FtParams::second_order();
        p.alpha = r(1, 3);
        assert!(p.build().is_err());
        let mut p = FtParams::second_order();
        p.c = vec![vec![1.0; 3]; 2];
        assert!(p.build().is_err());
    }

    #[test]
    fn benchmark_designs_sit_on_the_large_gain_boundary() {
        assert_eq!(design().large_gain_margins(), vec![0.0, 0.0]);
        let d3 = FtParams::third_order().build().unwrap();
        assert_eq!(d3.large_gain_margins(), vec![0.0, 0.0, 0.0]);
        assert_eq!(d3.q_last(), r(25, 49));
        assert_eq!(d3.gamma(), r(45, 49));
        assert_eq!(d3.one_plus_alpha(), r(90, 49));
    }

    /// The `2^{1-1/q} (x - x*)^{2/q} / χ²` lower bound is too strong: at
    /// `q = 1` it reads `s²/χ²` while `V = ½ ln(χ²/(χ² - s²)) ≈ s²/(2χ²)`.
    #[test]
    fn uncorrected_lower_bound_fails_at_unit_power() {
        let (x, xstar, chi) = (0.1, 0.0, 1.0);
        let v = lyap_vi(2, x, xstar, chi, r(1, 1), &QuadratureSpec::default()).unwrap();
        let uncorrected = 2f64.powf(0.0) * (x - xstar).powi(2) / (chi * chi);
        assert!(v < uncorrected);
        let (lower, upper) = barrier_bounds(x, xstar, chi, r(1, 1)).unwrap();
        assert!(lower <= v && v <= upper);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn recursion_is_odd(x1 in -1.0f64..1.0, x2 in -1.0f64..1.0, t1 in -3.0f64..3.0, t2 in -3.0f64..3.0) {
            let d = design();
            let st = state(&[t1, t2], &[50.0, 50.0]);
            let a = control_signal(&[x1, x2], &st, &d);
            let b = control_signal(&[-x1, -x2], &st, &d);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert!((a.u + b.u).abs() <= 1e-12 * (1.0 + a.u.abs()));
                for (p, m) in a.s.iter().zip(&b.s) {
                    prop_assert!((p + m).abs() <= 1e-12 * (1.0 + p.abs()));
                }
            }
        }

        #[test]
        fn barrier_sandwich(
            pick in 0usize..4, xstar in -2.0f64..2.0, frac in -0.999f64..0.999, chi in 0.2f64..4.0,
        ) {
            let q = [r(1, 1), r(41, 49), r(33, 49), r(25, 49)][pick];
            let w = frac_pow(xstar, q.recip().unwrap()).unwrap();
            let x = frac_pow(w + frac * chi, q).unwrap();
            let v = lyap_vi(2, x, xstar, chi, q, &QuadratureSpec::default()).unwrap();
            let (lower, upper) = barrier_bounds(x, xstar, chi, q).unwrap();
            prop_assert!(lower <= v * (1.0 + 1e-9) + 1e-15, "lower {} > V {}", lower, v);
            prop_assert!(v <= upper, "V {} > upper {}", v, upper);
        }

        #[test]
        fn quadrature_matches_log_barrier_at_unit_power(
            xstar in -3.0f64..3.0, frac in -0.99f64..0.99, chi in 0.1f64..5.0,
        ) {
            let x = xstar + frac * chi;
            let v = lyap_vi(2, x, xstar, chi, r(1, 1), &QuadratureSpec::default()).unwrap();
            let s = x - xstar;
            let closed = 0.5 * (chi * chi / (chi * chi - s * s)).ln();
            prop_assert!((v - closed).abs() < 1e-9, "{} vs {}", v, closed);
        }
    }
}
