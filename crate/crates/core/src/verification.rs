//! Desk-scale numerical checks of the inequalities and comparison lemmas the
//! stability arguments rest on.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::numerics::{
    adaptive_quad, frac_pow, rk4_step, try_rk4_step, NumericsError, QuadratureSpec, RationalExponent,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("invalid check input: {0}")]
    Input(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// `offset + Σ amp_k sin(freq_k t + phase_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly {
    pub offset: f64,
    pub terms: Vec<(f64, f64, f64)>,
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        Self {
            offset: c,
            terms: Vec::new(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().fold(self.offset, |acc, (amp, freq, phase)| {
            acc + amp * (freq * t + phase).sin()
        })
    }

    fn random_terms(rng: &mut ChaCha8Rng) -> Vec<(f64, f64, f64)> {
        let k = rng.gen_range(1..=3);
        (0..k)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.2..4.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect()
    }

    /// Strictly positive: the offset is at least `1 + Σ|amp|`.
    pub fn random_positive(rng: &mut ChaCha8Rng) -> Self {
        let terms = Self::random_terms(rng);
        let mass: f64 = terms.iter().map(|t| t.0.abs()).sum();
        Self {
            offset: 1.0 + mass + rng.gen_range(0.0..1.0),
            terms,
        }
    }

    pub fn random_signed(rng: &mut ChaCha8Rng) -> Self {
        Self {
            offset: rng.gen_range(-1.0..1.0),
            terms: Self::random_terms(rng),
        }
    }

    /// Non-negative: offset equal to `Σ|amp|`, scaled down.
    pub fn random_nonnegative(rng: &mut ChaCha8Rng) -> Self {
        let scale = rng.gen_range(0.0..0.5);
        let terms: Vec<_> = Self::random_terms(rng)
            .into_iter()
            .map(|(a, f, p)| (a * scale, f, p))
            .collect();
        let mass: f64 = terms.iter().map(|t| t.0.abs()).sum();
        Self { offset: mass, terms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    pub holds: bool,
    /// `min_t (x(t) - y(t))`.
    pub min_gap: f64,
}

/// Round-off allowance when comparing the two integrated solutions.
pub const GAP_TOLERANCE: f64 = 1e-12;

/// Integrate `ẋ = -a x^γ + b` from `x0` and `ẏ = -a y^γ + b - slack` from
/// `x0 - ε` and report whether `x >= y` at every sample.
#[allow(clippy::too_many_arguments)]
pub fn check_comparison_lemma(
    a_fn: &TrigPoly,
    b_fn: &TrigPoly,
    slack_fn: &TrigPoly,
    gamma: RationalExponent,
    x0: f64,
    epsilon: f64,
    horizon: f64,
    dt: f64,
) -> Result<ComparisonReport, VerifyError> {
    if !(gamma.value() > 0.0 && gamma.value() <= 1.0 && gamma.is_odd_ratio()) {
        return Err(VerifyError::Input(format!(
            "gamma must be an odd ratio in (0, 1], found {gamma}"
        )));
    }
    if !(epsilon >= 0.0 && horizon > 0.0 && dt > 0.0) {
        return Err(VerifyError::Input("need epsilon >= 0, horizon > 0, dt > 0".into()));
    }
    let steps = (horizon / dt).round().max(1.0) as usize;
    let mut t = 0.0;
    let mut z = vec![x0, x0 - epsilon];
    let mut min_gap = z[0] - z[1];
    let mut holds = true;
    for k in 0..steps {
        if a_fn.eval(t) <= 0.0 {
            return Err(VerifyError::Input(format!(
                "a(t) must be positive, a({t}) = {}",
                a_fn.eval(t)
            )));
        }
        z = try_rk4_step(
            |tt, s: &[f64]| -> Result<Vec<f64>, NumericsError> {
                let (a, b) = (a_fn.eval(tt), b_fn.eval(tt));
                Ok(vec![
                    -a * frac_pow(s[0], gamma)? + b,
                    -a * frac_pow(s[1], gamma)? + b - slack_fn.eval(tt).max(0.0),
                ])
            },
            t,
            &z,
            dt,
        )?;
        t = (k + 1) as f64 * dt;
        let gap = z[0] - z[1];
        min_gap = min_gap.min(gap);
        if gap < -GAP_TOLERANCE {
            holds = false;
        }
    }
    Ok(ComparisonReport { holds, min_gap })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonSweep {
    pub runs: usize,
    pub held: usize,
    pub worst_gap: f64,
}

/// `runs` random instances seeded from `seed`, one per derived seed.
pub fn comparison_sweep(seed: u64, runs: usize, gamma: RationalExponent) -> Result<ComparisonSweep, VerifyError> {
    let mut held = 0;
    let mut worst_gap = f64::INFINITY;
    for k in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let a = TrigPoly::random_positive(&mut rng);
        let b = TrigPoly::random_signed(&mut rng);
        let slack = TrigPoly::random_nonnegative(&mut rng);
        let x0 = rng.gen_range(-2.0..2.0);
        let eps = rng.gen_range(0.0..0.5);
        let rep = check_comparison_lemma(&a, &b, &slack, gamma, x0, eps, 5.0, 1e-3)?;
        if rep.holds {
            held += 1;
        }
        worst_gap = worst_gap.min(rep.min_gap);
    }
    Ok(ComparisonSweep { runs, held, worst_gap })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PftBoundInput {
    pub a: f64,
    pub chi: f64,
    pub alpha: f64,
    pub beta: f64,
    pub horizon: f64,
    pub t1: f64,
    pub xi0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PftBoundReport {
    pub bounded: bool,
    /// `sup ξ μ^{α+β}` over the integration grid.
    pub sup_value: f64,
    pub envelope: f64,
    pub final_value: f64,
}

/// Factor between the frozen envelope and the quadrature-evaluated
/// variation-of-constants bound.
pub const ENVELOPE_FACTOR: f64 = 10.0;

/// Integrate `ξ̇ = -a μ^α ξ + χ / μ^β` from `t1` to `0.999 T` and compare
/// `sup ξ μ^{α+β}` with an envelope built from the variation-of-constants
/// formula in the `μ` variable.
pub fn check_pft_bound_lemma(p: &PftBoundInput) -> Result<PftBoundReport, VerifyError> {
    let PftBoundInput {
        a,
        chi,
        alpha,
        beta,
        horizon,
        t1,
        xi0,
    } = *p;
    if !(a > 0.0 && chi >= 0.0 && alpha > 1.0 && beta > 0.0 && horizon > 0.0 && xi0 >= 0.0) {
        return Err(VerifyError::Input(format!("invalid lemma parameters {p:?}")));
    }
    if !(t1 >= 0.0 && t1 < 0.999 * horizon) {
        return Err(VerifyError::Input(format!("t1 = {t1} must lie in [0, 0.999 T)")));
    }
    let mu = |t: f64| horizon / (horizon - t);
    let t_end = 0.999 * horizon;
    let weight = |t: f64| mu(t).powf(alpha + beta);

    let mut t = t1;
    let mut xi = vec![xi0];
    let mut sup_value = xi0 * weight(t1);
    let mut bounded = true;
    while t < t_end {
        // step limited by the local decay rate so RK4 stays stable
        let h = (1e-3 * horizon).min(0.5 / (a * mu(t).powf(alpha))).min(t_end - t);
        xi = rk4_step(
            |tt, x| vec![-a * mu(tt).powf(alpha) * x[0] + chi / mu(tt).powf(beta)],
            t,
            &xi,
            h,
        )?;
        t += h;
        let val = xi[0] * weight(t);
        if !val.is_finite() {
            bounded = false;
            break;
        }
        sup_value = sup_value.max(val);
    }
    let final_value = xi[0] * weight(t);
    let envelope = ENVELOPE_FACTOR * variation_bound(p, mu(t1), mu(t_end))?;
    Ok(PftBoundReport {
        bounded: bounded && sup_value <= envelope,
        sup_value,
        envelope,
        final_value,
    })
}

/// `max_μ ( A1(μ) + A2(μ) )` over a log-spaced grid, where in the `μ`
/// variable (`dt = T dμ / μ²`)
///
/// ```text
/// A1 = ξ0 μ^{α+β} exp(-a T (μ^{α-1} - μ1^{α-1}) / (α - 1))
/// A2 = χ T μ^{α+β} ∫_{μ1}^{μ} exp(-a T (μ^{α-1} - ν^{α-1}) / (α - 1)) ν^{-β-2} dν
/// ```
fn variation_bound(p: &PftBoundInput, mu1: f64, mu_end: f64) -> Result<f64, VerifyError> {
    let PftBoundInput {
        a,
        chi,
        alpha,
        beta,
        horizon,
        xi0,
        ..
    } = *p;
    let e = alpha - 1.0;
    let quad = QuadratureSpec {
        rel_tol: 1e-8,
        abs_tol: 1e-300,
        max_depth: 50,
    };
    let grid = 400;
    let mut best: f64 = 0.0;
    let ratio = (mu_end / mu1).ln();
    for k in 0..=grid {
        let m = mu1 * (ratio * k as f64 / grid as f64).exp();
        let w = m.powf(alpha + beta);
        let decay = |nu: f64| (-a * horizon * (m.powf(e) - nu.powf(e)) / e).exp();
        let a1 = xi0 * w * decay(mu1);
        let a2 = if chi > 0.0 && m > mu1 {
            chi * horizon * w * adaptive_quad(|nu| decay(nu) * nu.powf(-beta - 2.0), mu1, m, &quad)?
        } else {
            0.0
        };
        best = best.max(a1 + a2);
    }
    Ok(best)
}

/// Parameter grid for the prescribed-time bound check.
pub fn pft_bound_grid() -> Vec<PftBoundInput> {
    let mut out = Vec::new();
    for &alpha in &[1.4, 2.0] {
        for &beta in &[1.0, 2.0] {
            for &a in &[0.5, 1.0, 2.0] {
                for &chi in &[0.0, 0.5, 1.0] {
                    for &(t1, xi0) in &[(0.0, 1.0), (0.3, 0.2), (0.6, 2.0)] {
                        out.push(PftBoundInput {
                            a,
                            chi,
                            alpha,
                            beta,
                            horizon: 1.0,
                            t1,
                            xi0,
                        });
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inequality {
    Young,
    PowerOfDifference,
    RootOfDifference,
    RootOfSum,
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Inequality::Young => "young",
            Inequality::PowerOfDifference => "power-of-difference",
            Inequality::RootOfDifference => "root-of-difference",
            Inequality::RootOfSum => "root-of-sum",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub inequality: Inequality,
    pub inputs: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    pub seed: u64,
    pub samples: usize,
    pub checks: usize,
    pub violations: Vec<Violation>,
}

impl fmt::Display for InequalityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "inequality sweep: seed {} samples {} checks {} violations {}",
            self.seed,
            self.samples,
            self.checks,
            self.violations.len()
        )?;
        for v in &self.violations {
            writeln!(
                f,
                "  {} inputs {:?}: lhs {} > rhs {}",
                v.inequality, v.inputs, v.lhs, v.rhs
            )?;
        }
        Ok(())
    }
}

fn leq(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + 1e-12) + 1e-300
}

/// Random odd ratio `p >= 1` with numerator and denominator at most 15.
fn random_odd_power(rng: &mut ChaCha8Rng) -> RationalExponent {
    loop {
        let num = 2 * rng.gen_range(0..8) + 1;
        let den = 2 * rng.gen_range(0..8) + 1;
        if num >= den {
            if let Ok(p) = RationalExponent::odd(num, den) {
                return p;
            }
        }
    }
}

/// Deterministic sweep of the Young inequality and the three odd-power
/// inequalities.
pub fn sample_inequality_suite(seed: u64, count: usize) -> Result<InequalityReport, VerifyError> {
    if count == 0 {
        return Err(VerifyError::Input("count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    let mut checks = 0;
    let mut push = |ineq, inputs: Vec<f64>, lhs: f64, rhs: f64, checks: &mut usize| {
        *checks += 1;
        if !leq(lhs, rhs) {
            violations.push(Violation {
                inequality: ineq,
                inputs,
                lhs,
                rhs,
            });
        }
    };
    for _ in 0..count {
        let x: f64 = rng.gen_range(-3.0..3.0);
        let y: f64 = rng.gen_range(-3.0..3.0);
        let a: f64 = rng.gen_range(0.05..4.0);
        let b: f64 = rng.gen_range(0.05..4.0);
        let zeta: f64 = (rng.gen_range(-3.0f64..3.0)).exp();
        let lhs = x.abs().powf(a) * y.abs().powf(b);
        let rhs = a / (a + b) * zeta * x.abs().powf(a + b) + b / (a + b) * zeta.powf(-a / b) * y.abs().powf(a + b);
        push(Inequality::Young, vec![x, y, a, b, zeta], lhs, rhs, &mut checks);

        let p = random_odd_power(&mut rng);
        let pv = p.value();
        let lhs = (x - y).abs().powf(pv);
        let rhs = 2f64.powf(pv - 1.0) * (frac_pow(x, p)? - frac_pow(y, p)?).abs();
        push(Inequality::PowerOfDifference, vec![x, y, pv], lhs, rhs, &mut checks);

        let r = p.recip()?;
        let lhs = (frac_pow(x, r)? - frac_pow(y, r)?).abs();
        let rhs = 2f64.powf(1.0 - 1.0 / pv) * (x - y).abs().powf(1.0 / pv);
        push(Inequality::RootOfDifference, vec![x, y, pv], lhs, rhs, &mut checks);

        let n = rng.gen_range(1..=6);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let total: f64 = z.iter().map(|v| v.abs()).sum();
        let mid: f64 = z.iter().map(|v| v.abs().powf(1.0 / pv)).sum();
        let low = total.powf(1.0 / pv);
        let high = (n as f64).powf(1.0 - 1.0 / pv) * low;
        let mut inputs = z.clone();
        inputs.push(pv);
        push(Inequality::RootOfSum, inputs.clone(), low, mid, &mut checks);
        push(Inequality::RootOfSum, inputs, mid, high, &mut checks);
    }
    Ok(InequalityReport {
        seed,
        samples: count,
        checks,
        violations,
    })
}
