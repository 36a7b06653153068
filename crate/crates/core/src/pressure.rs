//! Two-parameter pressure `P(q, t)`, the temperature function `β(q)` and
//! the quantization-dimension fixed point `β(q_r) = r q_r`.
//!
//! Pressure is evaluated from word sums
//! `Σ_{ω ∈ I_M^n} ‖exp S_ω(F)‖^q ‖φ′_ω‖^t`. Similarity systems with
//! `x`-independent potentials use the exact one-symbol identity; everything
//! else goes through a word tree whose per-word sup-norm logs are cached once,
//! so every `(q, t)` evaluation afterwards is a single log-sum-exp.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ifs_model::{Alphabet, ContractionMap, IfsSystem, MapGenerator, TailDescriptor};
use crate::potentials::{Potential, PotentialFamily, WeightSource};

/// Lower end of the `t` bracket for systems without a finiteness threshold.
const T_FLOOR: f64 = -25.0;
/// Upper end of every `t` bracket.
const T_CEIL: f64 = 25.0;
/// Offset above `θ(q)` for the lower end of the `t` bracket.
const THETA_OFFSET: f64 = 1e-6;
/// Margin keeping the `q` bracket inside `(0, 1)`.
const Q_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// The whole alphabet. For infinite systems only available in closed form.
    Full,
    /// Symbols `1..=M`.
    At(usize),
}

impl Truncation {
    pub fn limit(self) -> Option<usize> {
        match self {
            Truncation::Full => None,
            Truncation::At(m) => Some(m),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Closed form when the system is multiplicative, word tree otherwise.
    Auto,
    /// Always sum over the word tree.
    Tree,
}

#[derive(Clone, Copy, Debug)]
pub struct PressureOptions {
    /// Base depth `n` of the telescoped estimate `(a_{2n} − a_n) / n`.
    pub depth: usize,
    pub strategy: Strategy,
    /// Cap on the number of words at depth `2n`; the base depth is lowered
    /// until `M^{2n}` fits.
    pub max_words: usize,
}

impl Default for PressureOptions {
    fn default() -> Self {
        PressureOptions {
            depth: 8,
            strategy: Strategy::Auto,
            max_words: 1 << 21,
        }
    }
}

/// Cached `(log ‖exp S_ω‖, log ‖φ′_ω‖)` for every word of one depth.
#[derive(Clone, Debug, Default)]
struct WordTable {
    log_exp_s: Vec<f64>,
    log_deriv: Vec<f64>,
}

impl WordTable {
    fn log_sum(&self, q: f64, t: f64) -> f64 {
        log_sum_exp(
            self.log_exp_s
                .iter()
                .zip(&self.log_deriv)
                .map(|(a, b)| q * a + t * b),
        )
    }
}

fn log_sum_exp<I: Iterator<Item = f64> + Clone>(terms: I) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug)]
enum Engine {
    /// `log Σ_i exp(q a_i + t b_i)` over the kept symbols.
    Product {
        log_weight: Vec<f64>,
        log_ratio: Vec<f64>,
    },
    /// Infinite geometric series with `log p_i = w0 + w1 i`,
    /// `log s_i = r0 + r1 i`.
    Series { w0: f64, w1: f64, r0: f64, r1: f64 },
    Tree {
        depth: usize,
        short: WordTable,
        long: WordTable,
    },
}

/// `P_M(q, t)` estimate with its per-depth values.
#[derive(Clone, Debug, Serialize)]
pub struct PressureEstimate {
    pub q: f64,
    pub t: f64,
    pub truncation: Truncation,
    pub depths: Vec<usize>,
    /// `a_n / n` for each depth used.
    pub per_depth: Vec<f64>,
    pub value: f64,
    pub error_indicator: f64,
    pub finite: bool,
    /// Majorant of the omitted single-symbol tail `Σ_{i>M}`, reported apart
    /// from the truncated sum.
    pub tail_bound: Option<f64>,
}

/// Evaluates `P_M(q, t)` for one system, family and truncation.
#[derive(Clone, Debug)]
pub struct PressureEvaluator {
    engine: Engine,
    truncation: Truncation,
    system: IfsSystem,
    family: PotentialFamily,
}

impl PressureEvaluator {
    pub fn new(
        system: &IfsSystem,
        family: &PotentialFamily,
        truncation: Truncation,
        opts: &PressureOptions,
    ) -> Result<Self> {
        family.check_compatible(system)?;
        if let Truncation::At(0) = truncation {
            return Err(Error::InvalidArgument(
                "truncation must be at least 1".into(),
            ));
        }
        let multiplicative = opts.strategy == Strategy::Auto && family.is_multiplicative(system);
        let engine = match (multiplicative, truncation, system.size()) {
            (true, Truncation::Full, None) => series_engine(system, family)?,
            (true, _, _) => {
                let m = truncation.limit().unwrap_or(usize::MAX);
                let maps = system.maps_upto(m);
                let (log_weight, log_ratio) = maps
                    .iter()
                    .enumerate()
                    .map(|(k, map)| {
                        let i = k as u32 + 1;
                        let w = family.log_constant(i, map).expect("multiplicative family");
                        (w, map.derivative_bound().ln())
                    })
                    .unzip();
                Engine::Product {
                    log_weight,
                    log_ratio,
                }
            }
            (false, Truncation::Full, None) => return Err(Error::TruncationRequired),
            (false, _, _) => {
                let m = truncation.limit().unwrap_or(usize::MAX);
                let k = system.truncated_size(m);
                let mut n = opts.depth.max(1);
                while n > 1 && (k as f64).powi(2 * n as i32) > opts.max_words as f64 {
                    n -= 1;
                }
                let mut tables = word_tables(system, family, k, &[n, 2 * n]);
                let long = tables.pop().unwrap();
                let short = tables.pop().unwrap();
                Engine::Tree {
                    depth: n,
                    short,
                    long,
                }
            }
        };
        Ok(PressureEvaluator {
            engine,
            truncation,
            system: system.clone(),
            family: family.clone(),
        })
    }

    /// True when values come from an exact identity rather than a depth
    /// extrapolation.
    pub fn is_exact(&self) -> bool {
        !matches!(self.engine, Engine::Tree { .. })
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    /// Base depth of the word tree, `None` for closed forms.
    pub fn tree_depth(&self) -> Option<usize> {
        match &self.engine {
            Engine::Tree { depth, .. } => Some(*depth),
            _ => None,
        }
    }

    /// Extrapolated `P_M(q, t)`; `+∞` when the defining series diverges.
    pub fn value(&self, q: f64, t: f64) -> f64 {
        match &self.engine {
            Engine::Product {
                log_weight,
                log_ratio,
            } => log_sum_exp(log_weight.iter().zip(log_ratio).map(|(a, b)| q * a + t * b)),
            Engine::Series { w0, w1, r0, r1 } => {
                let log_a = q * w1 + t * r1;
                if log_a >= 0.0 {
                    return f64::INFINITY;
                }
                // Σ_{i≥1} e^{q w0 + t r0} a^i = e^{q w0 + t r0} a / (1 − a)
                q * w0 + t * r0 + log_a - (-log_a.exp_m1()).ln()
            }
            Engine::Tree { depth, short, long } => {
                (long.log_sum(q, t) - short.log_sum(q, t)) / *depth as f64
            }
        }
    }

    pub fn estimate(&self, q: f64, t: f64) -> PressureEstimate {
        let value = self.value(q, t);
        let (depths, per_depth, error_indicator) = match &self.engine {
            Engine::Tree { depth, short, long } => {
                let a = short.log_sum(q, t) / *depth as f64;
                let b = long.log_sum(q, t) / (2 * depth) as f64;
                (vec![*depth, 2 * depth], vec![a, b], (value - b).abs())
            }
            _ => (vec![1], vec![value], 0.0),
        };
        let tail_bound = match (self.truncation, self.system.is_infinite()) {
            (Truncation::At(m), true) => {
                self.family.tail_bracket(&self.system, m, q, t).map(|b| b.1)
            }
            _ => None,
        };
        PressureEstimate {
            q,
            t,
            truncation: self.truncation,
            depths,
            per_depth,
            value,
            error_indicator,
            finite: value.is_finite(),
            tail_bound,
        }
    }
}

fn series_engine(system: &IfsSystem, family: &PotentialFamily) -> Result<Engine> {
    let geometric_maps = matches!(
        system.alphabet(),
        Alphabet::Infinite {
            generator: MapGenerator::Geometric { .. },
            ..
        }
    );
    if !geometric_maps {
        return Err(Error::TruncationRequired);
    }
    // Both log weights and log ratios are affine in i on the geometric
    // generator; read the coefficients off symbols 1 and 2.
    let (m1, m2) = (system.map(1)?, system.map(2)?);
    let f1 = family
        .log_constant(1, &m1)
        .ok_or(Error::TruncationRequired)?;
    let f2 = family
        .log_constant(2, &m2)
        .ok_or(Error::TruncationRequired)?;
    let (l1, l2) = (m1.derivative_bound().ln(), m2.derivative_bound().ln());
    Ok(Engine::Series {
        w1: f2 - f1,
        w0: 2.0 * f1 - f2,
        r1: l2 - l1,
        r0: 2.0 * l1 - l2,
    })
}

/// Per-node state on a grid of base points: `φ_ω(x_j)`, `log|φ′_ω(x_j)|`,
/// `S_ω(F)(x_j)`.
#[derive(Clone)]
struct Node {
    y: Vec<f64>,
    log_d: Vec<f64>,
    birkhoff: Vec<f64>,
}

impl Node {
    fn zeros(g: usize) -> Self {
        Node {
            y: vec![0.0; g],
            log_d: vec![0.0; g],
            birkhoff: vec![0.0; g],
        }
    }

    fn maxima(&self) -> (f64, f64) {
        let s = self
            .birkhoff
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let d = self.log_d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (s, d)
    }
}

struct TreeCtx<'a> {
    maps: Vec<ContractionMap>,
    log_weights: Vec<f64>,
    family: &'a PotentialFamily,
    depths: &'a [usize],
    max_depth: usize,
}

impl TreeCtx<'_> {
    /// Child state for `iω` from the state of `ω`: prepending a symbol keeps
    /// the base grid fixed, `S_{iω}(x) = f^(i)(φ_ω(x)) + S_ω(x)`.
    fn prepend(&self, parent: &Node, sym: usize, child: &mut Node) {
        let map = &self.maps[sym];
        let lw = self.log_weights[sym];
        for j in 0..parent.y.len() {
            let y = parent.y[j];
            let ld = map.abs_derivative(y).ln();
            child.log_d[j] = parent.log_d[j] + ld;
            child.birkhoff[j] =
                parent.birkhoff[j] + self.family.eval_with_log_derivative(lw, y, ld);
            child.y[j] = map.eval(y);
        }
    }

    fn visit(&self, nodes: &mut [Node], depth: usize, sym: usize, out: &mut [WordTable]) {
        let (head, tail) = nodes.split_at_mut(depth + 1);
        self.prepend(&head[depth], sym, &mut tail[0]);
        let d = depth + 1;
        for (k, &target) in self.depths.iter().enumerate() {
            if target == d {
                let (s, l) = tail[0].maxima();
                out[k].log_exp_s.push(s);
                out[k].log_deriv.push(l);
            }
        }
        if d < self.max_depth {
            for next in 0..self.maps.len() {
                self.visit(nodes, d, next, out);
            }
        }
    }
}

/// Word tables over `I_k^n` for each requested depth, one tree pass.
fn word_tables(
    system: &IfsSystem,
    family: &PotentialFamily,
    k: usize,
    depths: &[usize],
) -> Vec<WordTable> {
    let maps = system.maps_upto(k);
    let log_weights: Vec<f64> = maps
        .iter()
        .enumerate()
        .map(|(idx, m)| {
            family
                .log_constant(idx as u32 + 1, m)
                .map(|v| v + family.shift())
                .unwrap_or(0.0)
        })
        .collect();
    // x-independent potentials on similarities need a single base point.
    let grid = if family.is_multiplicative(system) {
        vec![system.domain().midpoint()]
    } else {
        system.domain().grid(system.grid_points())
    };
    let max_depth = depths.iter().copied().max().unwrap_or(1);
    let ctx = TreeCtx {
        maps,
        log_weights,
        family,
        depths,
        max_depth,
    };
    let g = grid.len();
    let root = Node {
        y: grid,
        log_d: vec![0.0; g],
        birkhoff: vec![0.0; g],
    };
    let parts: Vec<Vec<WordTable>> = (0..ctx.maps.len())
        .into_par_iter()
        .map(|first| {
            let mut nodes = vec![Node::zeros(g); max_depth + 1];
            nodes[0] = root.clone();
            let mut out = vec![WordTable::default(); depths.len()];
            ctx.visit(&mut nodes, 0, first, &mut out);
            out
        })
        .collect();
    let mut tables = vec![WordTable::default(); depths.len()];
    for part in parts {
        for (acc, t) in tables.iter_mut().zip(part) {
            acc.log_exp_s.extend(t.log_exp_s);
            acc.log_deriv.extend(t.log_deriv);
        }
    }
    tables
}

/// `a_n = log Σ_{ω ∈ I_M^n} ‖exp S_ω‖^q ‖φ′_ω‖^t` (not divided by `n`).
pub(crate) fn word_sum_log(
    system: &IfsSystem,
    family: &PotentialFamily,
    q: f64,
    t: f64,
    n: usize,
    m: usize,
    opts: &PressureOptions,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    if m == 0 {
        return Err(Error::InvalidArgument(
            "truncation must be at least 1".into(),
        ));
    }
    family.check_compatible(system)?;
    let k = system.truncated_size(m);
    if opts.strategy == Strategy::Auto && family.is_multiplicative(system) {
        let ev = PressureEvaluator::new(system, family, Truncation::At(k), opts)?;
        return Ok(n as f64 * ev.value(q, t));
    }
    if (k as f64).powi(n as i32) > opts.max_words as f64 * 8.0 {
        return Err(Error::InvalidArgument(format!(
            "{k}^{n} words exceed the word budget"
        )));
    }
    let tables = word_tables(system, family, k, &[n]);
    Ok(tables[0].log_sum(q, t))
}

/// `(1/n) log Σ_{ω ∈ I_M^n} ‖exp S_ω(F)‖^q ‖φ′_ω‖^t` at a single depth.
///
/// Multiplicative systems use the exact identity `log Σ_{i≤M} p_i^q s_i^t`
/// (also for `Truncation::Full` on geometric infinite systems, where a
/// divergent series gives `+∞`).
pub fn pressure_word_sum(
    system: &IfsSystem,
    family: &PotentialFamily,
    q: f64,
    t: f64,
    n: usize,
    truncation: Truncation,
) -> Result<f64> {
    pressure_word_sum_with(
        system,
        family,
        q,
        t,
        n,
        truncation,
        &PressureOptions::default(),
    )
}

pub fn pressure_word_sum_with(
    system: &IfsSystem,
    family: &PotentialFamily,
    q: f64,
    t: f64,
    n: usize,
    truncation: Truncation,
    opts: &PressureOptions,
) -> Result<f64> {
    match truncation {
        Truncation::Full if system.is_infinite() => {
            if n == 0 {
                return Err(Error::InvalidArgument("depth must be at least 1".into()));
            }
            let ev = PressureEvaluator::new(system, family, truncation, opts)?;
            Ok(ev.value(q, t))
        }
        _ => {
            let m = truncation.limit().unwrap_or(usize::MAX);
            Ok(word_sum_log(system, family, q, t, n, m, opts)? / n as f64)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMethod {
    /// Finite alphabet: every finite sum converges, `θ = −∞`.
    Unbounded,
    ClosedForm,
    TailDescriptor,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ThetaResult {
    pub q: f64,
    pub theta: f64,
    pub method: ThetaMethod,
}

/// Finiteness threshold `θ(q)`: the `t` where
/// `Σ_i ‖e^{f^(i)}‖^q ‖φ′_i‖^t` switches from divergent to convergent.
pub fn theta_of_q(system: &IfsSystem, family: &PotentialFamily, q: f64) -> Result<ThetaResult> {
    family.check_compatible(system)?;
    let tail = match system.alphabet() {
        Alphabet::Finite(_) => {
            return Ok(ThetaResult {
                q,
                theta: f64::NEG_INFINITY,
                method: ThetaMethod::Unbounded,
            })
        }
        Alphabet::Infinite { tail, .. } => *tail,
    };
    let (theta, method) = match (family.potential(), tail) {
        (Potential::Derivative { exponent, .. }, TailDescriptor::PowerLaw { p, .. }) => {
            (1.0 / p - q * exponent, ThetaMethod::TailDescriptor)
        }
        (Potential::Derivative { exponent, .. }, TailDescriptor::Geometric { .. }) => {
            (-q * exponent, ThetaMethod::ClosedForm)
        }
        (
            Potential::LogWeights(WeightSource::Geometric { ratio, .. }),
            TailDescriptor::Geometric { ratio: rs, .. },
        ) => (-q * ratio.ln() / rs.ln(), ThetaMethod::ClosedForm),
        (
            Potential::LogWeights(WeightSource::Geometric { .. }),
            TailDescriptor::PowerLaw { p, .. },
        ) => {
            let theta = if q > 0.0 {
                f64::NEG_INFINITY
            } else if q == 0.0 {
                1.0 / p
            } else {
                f64::INFINITY
            };
            (theta, ThetaMethod::TailDescriptor)
        }
        (Potential::LogWeights(WeightSource::Finite { .. }), _) => return Err(Error::MissingTail),
    };
    Ok(ThetaResult { q, theta, method })
}

/// Bisection trace: the bracket after every step.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Bisection {
    pub root: f64,
    pub iterations: usize,
    pub trace: Vec<(f64, f64)>,
}

/// Root of `f` on `[lo, hi]` given `f(lo) > 0 > f(hi)`. Stops once the
/// bracket is narrower than `tol` and `|f| ≤ tol` at the midpoint, or when the
/// bracket can no longer be split in floating point.
pub fn bisect_sign_change<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<Bisection> {
    let (mut lo, mut hi) = (lo, hi);
    let (f_lo, f_hi) = (f(lo), f(hi));
    if f_lo == 0.0 {
        return Ok(Bisection {
            root: lo,
            ..Default::default()
        });
    }
    if f_hi == 0.0 {
        return Ok(Bisection {
            root: hi,
            ..Default::default()
        });
    }
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::NoSignChange { lo, hi, f_lo, f_hi });
    }
    let mut trace = Vec::new();
    for it in 1..=2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(Bisection {
                root: mid,
                iterations: it,
                trace,
            });
        }
        let fm = f(mid);
        if fm.is_nan() {
            return Err(Error::NoSignChange {
                lo,
                hi,
                f_lo: fm,
                f_hi: fm,
            });
        }
        if fm == 0.0 {
            trace.push((mid, mid));
            return Ok(Bisection {
                root: mid,
                iterations: it,
                trace,
            });
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        trace.push((lo, hi));
        if hi - lo <= tol && fm.abs() <= tol {
            return Ok(Bisection {
                root: 0.5 * (lo + hi),
                iterations: it,
                trace,
            });
        }
    }
    Ok(Bisection {
        root: 0.5 * (lo + hi),
        iterations: 2000,
        trace,
    })
}

/// `(q_r, κ_r, D_r)` for one `r`.
#[derive(Clone, Debug, Serialize)]
pub struct QdimSolution {
    pub r: f64,
    pub q_r: f64,
    pub kappa_r: f64,
    /// `β(q_r) / (1 − q_r)`, computed from an independent solve of `β(q_r)`.
    pub d_r: f64,
    pub beta_q_r: f64,
    pub identity_residual: f64,
    pub truncation: Truncation,
    pub tolerance: f64,
    pub trace: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TemperatureSample {
    pub points: Vec<(f64, f64)>,
    /// Most negative second difference (0 when the sample is convex).
    pub convexity_defect: f64,
    pub strictly_decreasing: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub m: usize,
    pub kappa: f64,
    pub q: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TruncationSweep {
    pub r: f64,
    pub rows: Vec<SweepRow>,
    /// `κ_r` of the untruncated system when a closed form exists.
    pub full_kappa: Option<f64>,
    pub gap: Option<f64>,
    pub monotone: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FigureRow {
    pub q: f64,
    pub beta: f64,
    /// Line through `(q_r, r q_r)` and `(1, 0)`.
    pub line: f64,
    pub legendre_alpha: f64,
    pub legendre_f: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FigureData {
    pub r: f64,
    pub rows: Vec<FigureRow>,
    pub intersection: (f64, f64),
    /// y-intercept of the line through the intersection and `(1, 0)`.
    pub intercept: f64,
    pub d_r: f64,
}

/// Temperature-function solver bound to one system, family and truncation.
#[derive(Clone, Debug)]
pub struct Thermodynamics {
    system: IfsSystem,
    family: PotentialFamily,
    evaluator: PressureEvaluator,
    tolerance: f64,
}

impl Thermodynamics {
    pub fn new(
        system: &IfsSystem,
        family: &PotentialFamily,
        truncation: Truncation,
        opts: &PressureOptions,
    ) -> Result<Self> {
        let evaluator = PressureEvaluator::new(system, family, truncation, opts)?;
        let tolerance = if evaluator.is_exact() { 1e-10 } else { 1e-6 };
        Ok(Thermodynamics {
            system: system.clone(),
            family: family.clone(),
            evaluator,
            tolerance,
        })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn evaluator(&self) -> &PressureEvaluator {
        &self.evaluator
    }

    pub fn truncation(&self) -> Truncation {
        self.evaluator.truncation()
    }

    pub fn pressure(&self, q: f64, t: f64) -> f64 {
        self.evaluator.value(q, t)
    }

    /// `θ(q)` of the evaluated system: truncations are finite systems, so
    /// only the untruncated infinite system has a finite threshold.
    pub fn theta(&self, q: f64) -> Result<ThetaResult> {
        match self.truncation() {
            Truncation::Full => theta_of_q(&self.system, &self.family, q),
            Truncation::At(_) => Ok(ThetaResult {
                q,
                theta: f64::NEG_INFINITY,
                method: ThetaMethod::Unbounded,
            }),
        }
    }

    fn t_bracket(&self, q: f64) -> Result<(f64, f64)> {
        let theta = self.theta(q)?;
        if !theta.theta.is_finite() {
            if theta.theta == f64::INFINITY {
                return Err(Error::Irregular {
                    q,
                    t: f64::INFINITY,
                    value: f64::INFINITY,
                });
            }
            return Ok((T_FLOOR, T_CEIL));
        }
        // Regularity: 0 < P(q, u) < ∞ just above θ(q).
        for delta in [0.05, 0.1] {
            let u = theta.theta + delta;
            let v = self.pressure(q, u);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Irregular { q, t: u, value: v });
            }
        }
        Ok((theta.theta + THETA_OFFSET, T_CEIL))
    }

    /// `β(q)`: the root of `t ↦ P(q, t)`.
    pub fn beta(&self, q: f64) -> Result<f64> {
        self.beta_to(q, self.tolerance)
    }

    fn beta_to(&self, q: f64, tol: f64) -> Result<f64> {
        let (lo, hi) = self.t_bracket(q)?;
        Ok(bisect_sign_change(|t| self.pressure(q, t), lo, hi, tol)?.root)
    }

    /// Root of `t ↦ P(0, t)`.
    pub fn hausdorff_dim(&self) -> Result<f64> {
        let (lo, hi) = self.t_bracket(0.0)?;
        Ok(bisect_sign_change(|t| self.pressure(0.0, t), lo, hi, self.tolerance)?.root)
    }

    /// Solves `β(q_r) = r q_r`. The sign of `β(q) − r q` equals the sign of
    /// `P(q, r q)` because `P(q, ·)` is strictly decreasing, so the outer
    /// bisection runs on `P(q, r q)` directly; `β(q_r)` is then solved
    /// separately to check the identity.
    pub fn solve(&self, r: f64) -> Result<QdimSolution> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "r must be positive, got {r}"
            )));
        }
        let tol = self.tolerance;
        let beta0 = self.beta_to(0.0, tol * 0.1)?;
        if beta0 <= 0.0 {
            return Err(Error::NonPositiveBeta0(beta0));
        }
        let q_tol = tol / (10.0 * (1.0 + r));
        let bis = bisect_sign_change(|q| self.pressure(q, r * q), Q_MARGIN, 1.0 - Q_MARGIN, q_tol)?;
        let q_r = bis.root;
        let beta_q_r = self.beta_to(q_r, tol * 0.1)?;
        let identity_residual = (beta_q_r - r * q_r).abs();
        if identity_residual > tol {
            return Err(Error::IdentityResidual {
                residual: identity_residual,
                tolerance: tol,
            });
        }
        Ok(QdimSolution {
            r,
            q_r,
            kappa_r: r * q_r / (1.0 - q_r),
            d_r: beta_q_r / (1.0 - q_r),
            beta_q_r,
            identity_residual,
            truncation: self.truncation(),
            tolerance: tol,
            trace: bis.trace,
        })
    }

    pub fn beta_grid(&self, grid: &[f64]) -> Result<TemperatureSample> {
        let points: Vec<(f64, f64)> = grid
            .iter()
            .map(|&q| self.beta(q).map(|b| (q, b)))
            .collect::<Result<_>>()?;
        let convexity_defect = points
            .windows(3)
            .map(|w| {
                let (h1, h2) = (w[1].0 - w[0].0, w[2].0 - w[1].0);
                // Second divided difference scaled to unit spacing.
                let s1 = (w[1].1 - w[0].1) / h1;
                let s2 = (w[2].1 - w[1].1) / h2;
                (s2 - s1) * 0.5 * (h1 + h2)
            })
            .fold(0.0, f64::min);
        let strictly_decreasing = points.windows(2).all(|w| w[1].1 < w[0].1);
        Ok(TemperatureSample {
            points,
            convexity_defect,
            strictly_decreasing,
        })
    }

    /// β curve, the line `y = r q`, their intersection, the chord to
    /// `(1, 0)` and the discrete Legendre transform of `β`.
    pub fn figure(&self, r: f64, q_grid: &[f64]) -> Result<FigureData> {
        if q_grid.len() < 2 {
            return Err(Error::GridTooCoarse);
        }
        let sample = self.beta_grid(q_grid)?;
        let diff: Vec<f64> = sample.points.iter().map(|(q, b)| b - r * q).collect();
        let has_sign_change = diff.windows(2).any(|w| w[0] >= 0.0 && w[1] <= 0.0);
        if !has_sign_change {
            return Err(Error::GridTooCoarse);
        }
        let sol = self.solve(r)?;
        let (xq, yq) = (sol.q_r, r * sol.q_r);
        let slope = (0.0 - yq) / (1.0 - xq);
        let intercept = yq - slope * xq;

        let pts = &sample.points;
        let n = pts.len();
        let alphas: Vec<f64> = (0..n)
            .map(|i| {
                let (a, b) = match i {
                    0 => (0, 1),
                    i if i == n - 1 => (n - 2, n - 1),
                    i => (i - 1, i + 1),
                };
                -(pts[b].1 - pts[a].1) / (pts[b].0 - pts[a].0)
            })
            .collect();
        let rows = pts
            .iter()
            .zip(&alphas)
            .map(|(&(q, beta), &alpha)| FigureRow {
                q,
                beta,
                line: intercept + slope * q,
                legendre_alpha: alpha,
                legendre_f: pts
                    .iter()
                    .map(|&(qj, bj)| qj * alpha + bj)
                    .fold(f64::INFINITY, f64::min),
            })
            .collect();
        Ok(FigureData {
            r,
            rows,
            intersection: (xq, yq),
            intercept,
            d_r: sol.d_r,
        })
    }
}

/// `β(q)` at the given truncation.
pub fn beta_of_q(
    system: &IfsSystem,
    family: &PotentialFamily,
    q: f64,
    truncation: Truncation,
    tol: f64,
) -> Result<f64> {
    Thermodynamics::new(system, family, truncation, &PressureOptions::default())?
        .with_tolerance(tol)
        .beta(q)
}

pub fn solve_quantization_dim(
    system: &IfsSystem,
    family: &PotentialFamily,
    r: f64,
    truncation: Truncation,
    tol: f64,
) -> Result<QdimSolution> {
    Thermodynamics::new(system, family, truncation, &PressureOptions::default())?
        .with_tolerance(tol)
        .solve(r)
}

pub fn hausdorff_dim(
    system: &IfsSystem,
    family: &PotentialFamily,
    truncation: Truncation,
    tol: f64,
) -> Result<f64> {
    Thermodynamics::new(system, family, truncation, &PressureOptions::default())?
        .with_tolerance(tol)
        .hausdorff_dim()
}

/// `κ_{r,M}` for each `M`. Truncations whose `β_M(0)` is not positive are
/// single-point limit sets and report `κ = 0` with the degenerate flag.
pub fn truncation_sweep(
    system: &IfsSystem,
    family: &PotentialFamily,
    r: f64,
    m_list: &[usize],
    opts: &PressureOptions,
    tol: Option<f64>,
) -> Result<TruncationSweep> {
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let mut th = Thermodynamics::new(system, family, Truncation::At(m), opts)?;
        if let Some(tol) = tol {
            th = th.with_tolerance(tol);
        }
        let beta0 = th.beta(0.0)?;
        if beta0 <= th.tolerance() {
            rows.push(SweepRow {
                m,
                kappa: 0.0,
                q: 0.0,
                degenerate: true,
            });
            continue;
        }
        let sol = th.solve(r)?;
        rows.push(SweepRow {
            m,
            kappa: sol.kappa_r,
            q: sol.q_r,
            degenerate: false,
        });
    }
    let full_kappa = match PressureEvaluator::new(system, family, Truncation::Full, opts) {
        Ok(_) => {
            let mut th = Thermodynamics::new(system, family, Truncation::Full, opts)?;
            if let Some(tol) = tol {
                th = th.with_tolerance(tol);
            }
            Some(th.solve(r)?.kappa_r)
        }
        Err(Error::TruncationRequired) => None,
        Err(e) => return Err(e),
    };
    let mut by_m: Vec<&SweepRow> = rows.iter().collect();
    by_m.sort_by_key(|row| row.m);
    let slack = tol.unwrap_or(1e-6);
    let monotone = by_m.windows(2).all(|w| w[1].kappa >= w[0].kappa - slack);
    let gap = match (full_kappa, by_m.last()) {
        (Some(k), Some(last)) => Some(k - last.kappa),
        _ => None,
    };
    Ok(TruncationSweep {
        r,
        rows,
        full_kappa,
        gap,
        monotone,
    })
}

pub fn legendre_and_figure_data(
    system: &IfsSystem,
    family: &PotentialFamily,
    r: f64,
    q_grid: &[f64],
    truncation: Truncation,
) -> Result<FigureData> {
    Thermodynamics::new(system, family, truncation, &PressureOptions::default())?.figure(r, q_grid)
}

/// `count` equally spaced points on `[0, 1]`.
pub fn unit_grid(count: usize) -> Vec<f64> {
    let n = count.max(2);
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}
