//! Strict-feedback plants `x_i' = h_i(x_1..x_i) x_{i+1} + f_i(x_1..x_i)`,
//! with `x_{n+1} = u`, and the registry of benchmark instances.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("state has dimension {got}, plant expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite derivative in channel {channel}")]
    NonFinite { channel: usize },
    #[error("unknown benchmark id `{0}`")]
    UnknownBenchmark(String),
    #[error("cannot parse term `{term}`: {reason}")]
    Parse { term: String, reason: String },
    #[error("channel {channel} expression references x{index}, only x1..x{channel} are allowed")]
    NonCausal { channel: usize, index: usize },
    #[error("plant needs one gain and one drift per channel (n = {n}, gains = {gains}, drifts = {drifts})")]
    Shape { n: usize, gains: usize, drifts: usize },
}

/// A channel function evaluated on the prefix `x_1..x_i` of the state.
pub type ChannelFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct PlantModel {
    pub label: String,
    gains: Vec<ChannelFn>,
    drifts: Vec<ChannelFn>,
    /// Every drift vanishes at the origin.
    pub vanishing_drift: bool,
}

impl fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("label", &self.label)
            .field("n", &self.n())
            .field("vanishing_drift", &self.vanishing_drift)
            .finish()
    }
}

impl PlantModel {
    pub fn new(
        label: impl Into<String>,
        gains: Vec<ChannelFn>,
        drifts: Vec<ChannelFn>,
        vanishing_drift: bool,
    ) -> Result<Self, PlantError> {
        if gains.is_empty() || gains.len() != drifts.len() {
            return Err(PlantError::Shape {
                n: gains.len(),
                gains: gains.len(),
                drifts: drifts.len(),
            });
        }
        Ok(Self {
            label: label.into(),
            gains,
            drifts,
            vanishing_drift,
        })
    }

    pub fn n(&self) -> usize {
        self.gains.len()
    }

    /// `h_i` for 1-based channel `i`.
    pub fn gain(&self, i: usize, x: &[f64]) -> f64 {
        (self.gains[i - 1])(&x[..i])
    }

    /// `f_i` for 1-based channel `i`.
    pub fn drift(&self, i: usize, x: &[f64]) -> f64 {
        (self.drifts[i - 1])(&x[..i])
    }
}

pub fn plant_derivative(plant: &PlantModel, x: &[f64], u: f64) -> Result<Vec<f64>, PlantError> {
    let n = plant.n();
    if x.len() != n {
        return Err(PlantError::Dimension {
            expected: n,
            got: x.len(),
        });
    }
    (1..=n)
        .map(|i| {
            let next = if i < n { x[i] } else { u };
            let d = plant.gain(i, x) * next + plant.drift(i, x);
            if d.is_finite() {
                Ok(d)
            } else {
                Err(PlantError::NonFinite { channel: i })
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkId {
    A,
    B,
    C,
    D,
    E,
    F,
    ThirdOrder([Sign; 3]),
}

impl BenchmarkId {
    pub const SECOND_ORDER: [BenchmarkId; 6] = [
        BenchmarkId::A,
        BenchmarkId::B,
        BenchmarkId::C,
        BenchmarkId::D,
        BenchmarkId::E,
        BenchmarkId::F,
    ];

    /// All eight gain-sign combinations of the third-order plant.
    pub fn third_order_all() -> Vec<BenchmarkId> {
        let signs = [Sign::Plus, Sign::Minus];
        let mut out = Vec::with_capacity(8);
        for a in signs {
            for b in signs {
                for c in signs {
                    out.push(BenchmarkId::ThirdOrder([a, b, c]));
                }
            }
        }
        out
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchmarkId::A => write!(f, "A"),
            BenchmarkId::B => write!(f, "B"),
            BenchmarkId::C => write!(f, "C"),
            BenchmarkId::D => write!(f, "D"),
            BenchmarkId::E => write!(f, "E"),
            BenchmarkId::F => write!(f, "F"),
            BenchmarkId::ThirdOrder(s) => {
                write!(f, "third{}{}{}", s[0].symbol(), s[1].symbol(), s[2].symbol())
            }
        }
    }
}

impl FromStr for BenchmarkId {
    type Err = PlantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t {
            "A" | "a" => return Ok(BenchmarkId::A),
            "B" | "b" => return Ok(BenchmarkId::B),
            "C" | "c" => return Ok(BenchmarkId::C),
            "D" | "d" => return Ok(BenchmarkId::D),
            "E" | "e" => return Ok(BenchmarkId::E),
            "F" | "f" => return Ok(BenchmarkId::F),
            _ => {}
        }
        if let Some(rest) = t.strip_prefix("third") {
            let signs: Vec<Sign> = rest
                .chars()
                .map(|c| match c {
                    '+' => Some(Sign::Plus),
                    '-' => Some(Sign::Minus),
                    _ => None,
                })
                .collect::<Option<_>>()
                .ok_or_else(|| PlantError::UnknownBenchmark(s.to_string()))?;
            if let [a, b, c] = signs[..] {
                return Ok(BenchmarkId::ThirdOrder([a, b, c]));
            }
        }
        Err(PlantError::UnknownBenchmark(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkCase {
    pub id: BenchmarkId,
    pub plant: PlantModel,
    pub x0: Vec<f64>,
}

fn constant(v: f64) -> ChannelFn {
    Arc::new(move |_| v)
}

fn fbar1(x: &[f64]) -> f64 {
    0.1 * x[0].sin() * x[0]
}

fn fbar2(x: &[f64]) -> f64 {
    -4.9 * x[0].sin() + 0.05 * x[0].sin() * (-x[1]).exp() + 0.1 * x[1].sin() * x[1] * x[1]
}

fn second_order(id: BenchmarkId, h1: f64, h2: f64, drift_scale: f64) -> BenchmarkCase {
    let drifts: Vec<ChannelFn> = if drift_scale == 1.0 {
        vec![Arc::new(fbar1), Arc::new(fbar2)]
    } else {
        vec![
            Arc::new(move |x: &[f64]| drift_scale * fbar1(x)),
            Arc::new(move |x: &[f64]| drift_scale * fbar2(x)),
        ]
    };
    BenchmarkCase {
        id,
        plant: PlantModel::new(format!("case {id}"), vec![constant(h1), constant(h2)], drifts, true)
            .expect("two channels"),
        x0: vec![0.1, 0.2],
    }
}

/// Exact dynamics and initial state of a registered benchmark.
pub fn benchmark(id: BenchmarkId) -> BenchmarkCase {
    match id {
        BenchmarkId::A => second_order(id, 1.0, 0.8, 1.0),
        BenchmarkId::B => second_order(id, 1.0, -0.8, 1.0),
        BenchmarkId::C => second_order(id, 1.0, 0.8, 5.0),
        BenchmarkId::D => second_order(id, -1.0, 0.8, 1.0),
        BenchmarkId::E => second_order(id, -1.0, -0.8, 1.0),
        BenchmarkId::F => {
            let drifts: Vec<ChannelFn> = vec![
                Arc::new(|x: &[f64]| -1.5 * x[0] * x[0] - 0.5 * x[0].powi(3)),
                Arc::new(|x: &[f64]| 0.1 * x[1].sin()),
            ];
            BenchmarkCase {
                id,
                plant: PlantModel::new("case F", vec![constant(-1.0), constant(0.8)], drifts, true)
                    .expect("two channels"),
                x0: vec![0.1, 0.2],
            }
        }
        BenchmarkId::ThirdOrder(s) => {
            let gains = vec![
                constant(s[0].value()),
                constant(s[1].value()),
                constant(3.0 * s[2].value()),
            ];
            let drifts: Vec<ChannelFn> = vec![
                Arc::new(|x: &[f64]| -1.8 * x[0] + 0.15 * x[0].sin()),
                Arc::new(|x: &[f64]| 0.7 * x[1] - 4.4 * x[0] + 0.1 * x[1].sin() * x[0] * x[0]),
                Arc::new(|x: &[f64]| -7.0 * x[1] + 0.1 * x[2].sin()),
            ];
            BenchmarkCase {
                id,
                plant: PlantModel::new(format!("{id}"), gains, drifts, true).expect("three channels"),
                x0: vec![0.1, 0.2, 0.5],
            }
        }
    }
}

/// Primitive-composed channel expressions for user plants.
///
/// Grammar (whitespace ignored):
///
/// ```text
/// expr   := term (('+' | '-') term)*
/// term   := factor ('*' factor)*
/// factor := number | var ('^' int)? | func '(' ['-'] var ')'
/// var    := 'x' index            (1-based)
/// func   := sin | cos | exp
/// ```
pub mod expr {
    use super::PlantError;

    #[derive(Debug, Clone, PartialEq)]
    enum Factor {
        Const(f64),
        Pow { var: usize, exp: i32 },
        Sin { var: usize, neg: bool },
        Cos { var: usize, neg: bool },
        Exp { var: usize, neg: bool },
    }

    impl Factor {
        fn eval(&self, x: &[f64]) -> f64 {
            let arg = |var: usize, neg: bool| if neg { -x[var] } else { x[var] };
            match *self {
                Factor::Const(c) => c,
                Factor::Pow { var, exp } => x[var].powi(exp),
                Factor::Sin { var, neg } => arg(var, neg).sin(),
                Factor::Cos { var, neg } => arg(var, neg).cos(),
                Factor::Exp { var, neg } => arg(var, neg).exp(),
            }
        }

        fn var(&self) -> Option<usize> {
            match *self {
                Factor::Const(_) => None,
                Factor::Pow { var, .. }
                | Factor::Sin { var, .. }
                | Factor::Cos { var, .. }
                | Factor::Exp { var, .. } => Some(var),
            }
        }

        /// Whether the factor is zero whenever its variable is zero.
        fn vanishes_at_zero(&self) -> bool {
            matches!(self, Factor::Pow { exp, .. } if *exp > 0) || matches!(self, Factor::Sin { .. })
        }
    }

    /// A parsed sum of products.
    #[derive(Debug, Clone, PartialEq)]
    pub struct Expr {
        source: String,
        terms: Vec<(f64, Vec<Factor>)>,
    }

    impl Expr {
        pub fn eval(&self, x: &[f64]) -> f64 {
            self.terms
                .iter()
                .map(|(sign, fs)| sign * fs.iter().map(|f| f.eval(x)).product::<f64>())
                .sum()
        }

        /// Largest 1-based state index referenced, or 0.
        pub fn max_var(&self) -> usize {
            self.terms
                .iter()
                .flat_map(|(_, fs)| fs.iter().filter_map(Factor::var))
                .map(|v| v + 1)
                .max()
                .unwrap_or(0)
        }

        /// True when every term contains a factor that vanishes at the origin.
        pub fn vanishes_at_origin(&self) -> bool {
            self.terms.iter().all(|(_, fs)| fs.iter().any(Factor::vanishes_at_zero))
        }

        pub fn source(&self) -> &str {
            &self.source
        }
    }

    fn err(term: &str, reason: impl Into<String>) -> PlantError {
        PlantError::Parse {
            term: term.to_string(),
            reason: reason.into(),
        }
    }

    fn parse_var(s: &str, whole: &str) -> Result<usize, PlantError> {
        let idx = s
            .strip_prefix('x')
            .ok_or_else(|| err(whole, format!("expected a state variable, found `{s}`")))?;
        let i: usize = idx
            .parse()
            .map_err(|_| err(whole, format!("bad state index `{idx}`")))?;
        if i == 0 {
            return Err(err(whole, "state indices start at 1"));
        }
        Ok(i - 1)
    }

    fn parse_factor(s: &str, whole: &str) -> Result<Factor, PlantError> {
        if let Ok(c) = s.parse::<f64>() {
            return Ok(Factor::Const(c));
        }
        for (name, ctor) in [
            (
                "sin(",
                (|var, neg| Factor::Sin { var, neg }) as fn(usize, bool) -> Factor,
            ),
            ("cos(", |var, neg| Factor::Cos { var, neg }),
            ("exp(", |var, neg| Factor::Exp { var, neg }),
        ] {
            if let Some(rest) = s.strip_prefix(name) {
                let inner = rest.strip_suffix(')').ok_or_else(|| err(whole, "missing `)`"))?;
                let (neg, v) = match inner.strip_prefix('-') {
                    Some(v) => (true, v),
                    None => (false, inner),
                };
                return Ok(ctor(parse_var(v, whole)?, neg));
            }
        }
        let (base, exp) = match s.split_once('^') {
            Some((b, e)) => (
                b,
                e.parse::<i32>()
                    .map_err(|_| err(whole, format!("bad integer power `{e}`")))?,
            ),
            None => (s, 1),
        };
        Ok(Factor::Pow {
            var: parse_var(base, whole)?,
            exp,
        })
    }

    impl std::str::FromStr for Expr {
        type Err = PlantError;

        fn from_str(src: &str) -> Result<Self, PlantError> {
            let s: String = src.chars().filter(|c| !c.is_whitespace()).collect();
            if s.is_empty() {
                return Err(err(src, "empty expression"));
            }
            // Split on top-level '+'/'-' that are not inside parentheses,
            // not part of an exponent marker and not directly after '*' or '('.
            let mut terms = Vec::new();
            let mut depth = 0i32;
            let mut start = 0usize;
            let mut sign = 1.0;
            let bytes = s.as_bytes();
            let mut push = |lo: usize, hi: usize, sign: f64| -> Result<(), PlantError> {
                let body = &s[lo..hi];
                if body.is_empty() {
                    return Err(err(src, "empty term"));
                }
                let factors = body
                    .split('*')
                    .map(|f| parse_factor(f, src))
                    .collect::<Result<Vec<_>, _>>()?;
                terms.push((sign, factors));
                Ok(())
            };
            let mut i = 0;
            while i < bytes.len() {
                let c = bytes[i] as char;
                match c {
                    '(' => depth += 1,
                    ')' => depth -= 1,
                    '+' | '-' if depth == 0 => {
                        let prev = if i == 0 { None } else { Some(bytes[i - 1] as char) };
                        // `1e-2`: sign of a float exponent, not a term separator
                        let is_exp_marker = matches!(prev, Some('e') | Some('E'))
                            && i >= 2
                            && (bytes[i - 2].is_ascii_digit() || bytes[i - 2] == b'.');
                        let unary = matches!(prev, None | Some('*') | Some('^'));
                        if !is_exp_marker && !unary {
                            push(start, i, sign)?;
                            sign = if c == '-' { -1.0 } else { 1.0 };
                            start = i + 1;
                        } else if prev.is_none() {
                            sign = if c == '-' { -1.0 } else { 1.0 };
                            start = i + 1;
                        }
                    }
                    _ => {}
                }
                i += 1;
            }
            if depth != 0 {
                return Err(err(src, "unbalanced parentheses"));
            }
            push(start, s.len(), sign)?;
            Ok(Expr {
                source: src.trim().to_string(),
                terms,
            })
        }
    }
}

/// Build a plant from per-channel gain and drift expressions.
pub fn custom_plant(label: &str, gains: &[String], drifts: &[String]) -> Result<PlantModel, PlantError> {
    if gains.is_empty() || gains.len() != drifts.len() {
        return Err(PlantError::Shape {
            n: gains.len().max(drifts.len()),
            gains: gains.len(),
            drifts: drifts.len(),
        });
    }
    let mut gfns: Vec<ChannelFn> = Vec::new();
    let mut dfns: Vec<ChannelFn> = Vec::new();
    let mut vanishing = true;
    for (k, (g, d)) in gains.iter().zip(drifts).enumerate() {
        let channel = k + 1;
        let g: expr::Expr = g.parse()?;
        let d: expr::Expr = d.parse()?;
        for e in [&g, &d] {
            if e.max_var() > channel {
                return Err(PlantError::NonCausal {
                    channel,
                    index: e.max_var(),
                });
            }
        }
        vanishing &= d.vanishes_at_origin();
        gfns.push(Arc::new(move |x: &[f64]| g.eval(x)));
        dfns.push(Arc::new(move |x: &[f64]| d.eval(x)));
    }
    PlantModel::new(label, gfns, dfns, vanishing)
}
