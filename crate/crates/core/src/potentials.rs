//! Summable Hölder families `F = {f^(i)}` and their Birkhoff sums.
//!
//! Two families are built in: constant log-weights `f^(i) = log p_i`
//! (self-similar measures) and derivative families
//! `f^(i)(x) = g(x) + s · log|φ′_i(x)|`. Both carry a normalization shift that
//! is subtracted from every `f^(i)`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ifs_model::{random_word, ContractionMap, IfsSystem, SupNorm, TailDescriptor, Word};
use crate::pressure::{PressureEvaluator, PressureOptions, Strategy, Truncation};

/// Weights `p_i > 0` of a constant-potential family.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSource {
    Finite {
        weights: Vec<f64>,
    },
    /// `p_i = scale · ratio^i` for `i ≥ 1`.
    Geometric {
        ratio: f64,
        scale: f64,
    },
}

impl WeightSource {
    pub fn weight(&self, i: u32) -> Option<f64> {
        match self {
            WeightSource::Finite { weights } => weights.get(i as usize - 1).copied(),
            WeightSource::Geometric { ratio, scale } => Some(scale * ratio.powi(i as i32)),
        }
    }

    pub fn log_weight(&self, i: u32) -> Option<f64> {
        match self {
            WeightSource::Finite { weights } => weights.get(i as usize - 1).map(|p| p.ln()),
            WeightSource::Geometric { ratio, scale } => Some(scale.ln() + i as f64 * ratio.ln()),
        }
    }
}

/// Base function `g` of a derivative family.
#[derive(Clone)]
pub enum BaseFunction {
    Constant(f64),
    /// Arbitrary Hölder function given as an evaluation oracle.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for BaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseFunction::Constant(c) => write!(f, "Constant({c})"),
            BaseFunction::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl BaseFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            BaseFunction::Constant(c) => *c,
            BaseFunction::Custom(g) => g(x),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Potential {
    LogWeights(WeightSource),
    Derivative { exponent: f64, base: BaseFunction },
}

#[derive(Clone, Debug)]
pub struct PotentialFamily {
    potential: Potential,
    shift: f64,
    ratio_bound: Option<f64>,
}

/// Variation data of a Hölder family; `v_n ≤ v_beta · e^{−order (n−1)}` holds
/// for every sampled depth.
#[derive(Clone, Debug, Serialize)]
pub struct HolderCertificate {
    pub holder_order: f64,
    pub v_beta: f64,
    pub variations: Vec<f64>,
}

/// Sampled lower estimate of the constant `C` bounding
/// `exp(S_ω(F)(x)) / exp(S_ω(F)(y))`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RatioConstant {
    pub c: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SummabilityReport {
    /// Partial sum plus the midpoint of the tail bracket.
    pub tail_sum: f64,
    pub tail_lower: f64,
    pub tail_upper: f64,
    pub enumerated: usize,
    pub certificate: HolderCertificate,
    pub ratio: RatioConstant,
}

#[derive(Clone, Copy, Debug)]
pub struct SummabilityOptions {
    /// Symbols summed explicitly for infinite alphabets.
    pub enumerate: usize,
    /// Random (word, x, y) triples for the variation and ratio estimates.
    pub samples: usize,
    /// Symbols are drawn from `1..=max_symbol` when sampling words.
    pub max_symbol: u32,
    pub seed: u64,
}

impl Default for SummabilityOptions {
    fn default() -> Self {
        SummabilityOptions {
            enumerate: 10_000,
            samples: 10_000,
            max_symbol: 16,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalizationReport {
    pub shift: f64,
    pub depths: Vec<usize>,
    /// Successive telescoped estimates `(a_{n_k} − a_{n_{k−1}}) / (n_k − n_{k−1})`.
    pub estimates: Vec<f64>,
    pub discrepancy: f64,
}

impl PotentialFamily {
    pub fn new(potential: Potential) -> Result<Self> {
        match &potential {
            Potential::LogWeights(WeightSource::Finite { weights }) => {
                if weights.is_empty() || weights.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
                    return Err(Error::InvalidPotential("weights must be positive".into()));
                }
            }
            Potential::LogWeights(WeightSource::Geometric { ratio, scale }) => {
                if !(*ratio > 0.0 && *ratio < 1.0 && *scale > 0.0) {
                    return Err(Error::InvalidPotential(
                        "geometric weights need ratio in (0,1) and positive scale".into(),
                    ));
                }
            }
            Potential::Derivative { exponent, .. } => {
                if !(*exponent > 0.0) {
                    return Err(Error::InvalidPotential(
                        "derivative exponent must be positive".into(),
                    ));
                }
            }
        }
        Ok(PotentialFamily {
            potential,
            shift: 0.0,
            ratio_bound: None,
        })
    }

    pub fn log_weights(weights: Vec<f64>) -> Result<Self> {
        Self::new(Potential::LogWeights(WeightSource::Finite { weights }))
    }

    /// Probability weights `p_i = (1 − ρ) ρ^{i−1}`.
    pub fn geometric_weights(ratio: f64) -> Result<Self> {
        Self::new(Potential::LogWeights(WeightSource::Geometric {
            ratio,
            scale: (1.0 - ratio) / ratio,
        }))
    }

    /// `f^(i) = s · log|φ′_i|` (base `g ≡ 0`).
    pub fn derivative(exponent: f64) -> Result<Self> {
        Self::new(Potential::Derivative {
            exponent,
            base: BaseFunction::Constant(0.0),
        })
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    /// Overrides the ratio constant `C` (otherwise derived or sampled).
    pub fn with_ratio_bound(mut self, c: f64) -> Self {
        self.ratio_bound = Some(c.max(1.0));
        self
    }

    /// Checks that the family is indexed over the same alphabet as `system`.
    pub fn check_compatible(&self, system: &IfsSystem) -> Result<()> {
        match (&self.potential, system.size()) {
            (Potential::LogWeights(WeightSource::Finite { weights }), Some(n))
                if weights.len() != n =>
            {
                Err(Error::InvalidPotential(format!(
                    "{} weights for an alphabet of {n} maps",
                    weights.len()
                )))
            }
            (Potential::LogWeights(WeightSource::Finite { .. }), None) => Err(
                Error::InvalidPotential("an infinite alphabet needs a weight generator".into()),
            ),
            (Potential::LogWeights(WeightSource::Geometric { .. }), Some(_)) => Err(
                Error::InvalidPotential("geometric weights need an infinite alphabet".into()),
            ),
            _ => Ok(()),
        }
    }

    /// `f^(i)(x) − shift` for the symbol `i` with map `map`.
    pub fn eval(&self, i: u32, map: &ContractionMap, x: f64) -> f64 {
        match &self.potential {
            Potential::LogWeights(w) => {
                w.log_weight(i).expect("symbol within weights") - self.shift
            }
            Potential::Derivative { exponent, base } => {
                base.eval(x) + exponent * map.abs_derivative(x).ln() - self.shift
            }
        }
    }

    /// `f^(i)` when it does not depend on `x`.
    pub fn log_constant(&self, i: u32, map: &ContractionMap) -> Option<f64> {
        match &self.potential {
            Potential::LogWeights(w) => w.log_weight(i).map(|l| l - self.shift),
            Potential::Derivative {
                exponent,
                base: BaseFunction::Constant(c),
            } => map
                .similarity_ratio()
                .map(|r| c + exponent * r.ln() - self.shift),
            Potential::Derivative { .. } => None,
        }
    }

    /// Similarities with `x`-independent potentials: word sums factor over
    /// symbols.
    pub fn is_multiplicative(&self, system: &IfsSystem) -> bool {
        system.all_similarities()
            && match &self.potential {
                Potential::LogWeights(_) => true,
                Potential::Derivative { base, .. } => matches!(base, BaseFunction::Constant(_)),
            }
    }

    /// The constant `C` of the ratio bound. Exact families give 1; for
    /// `g` constant it is `K^s` by bounded distortion; a custom `g` falls back
    /// to a sampled estimate unless a bound was supplied.
    pub fn ratio_constant(&self, system: &IfsSystem) -> f64 {
        if let Some(c) = self.ratio_bound {
            return c;
        }
        match &self.potential {
            Potential::LogWeights(_) => 1.0,
            Potential::Derivative {
                exponent,
                base: BaseFunction::Constant(_),
            } => system.distortion().powf(*exponent),
            Potential::Derivative { .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(0xc0ffee);
                sampled_ratio(self, system, &mut rng, 8, 16, 4000)
            }
        }
    }

    /// `f^(i)(x)` given `log|φ′_i(x)|`, avoiding a second derivative call in
    /// the word-tree inner loop. `log_weight` is the cached log weight for
    /// constant families.
    #[inline]
    pub(crate) fn eval_with_log_derivative(
        &self,
        log_weight: f64,
        x: f64,
        log_derivative: f64,
    ) -> f64 {
        match &self.potential {
            Potential::LogWeights(_) => log_weight - self.shift,
            Potential::Derivative { exponent, base } => {
                base.eval(x) + exponent * log_derivative - self.shift
            }
        }
    }

    /// Bounds `[min g, max g]` of the base function over the domain.
    fn base_range(&self, system: &IfsSystem) -> (f64, f64) {
        match &self.potential {
            Potential::LogWeights(_) => (0.0, 0.0),
            Potential::Derivative { base, .. } => {
                let vals: Vec<f64> = system
                    .domain()
                    .grid(system.grid_points())
                    .into_iter()
                    .map(|x| base.eval(x))
                    .collect();
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }

    /// `‖e^{f^(i)}‖` for a single symbol.
    pub fn symbol_norm(&self, system: &IfsSystem, i: u32) -> Result<f64> {
        let map = system.map(i)?;
        if let Some(l) = self.log_constant(i, &map) {
            return Ok(l.exp());
        }
        let hi = system
            .domain()
            .grid(system.grid_points())
            .into_iter()
            .map(|x| self.eval(i, &map, x))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(hi.exp())
    }

    /// Majorant of `Σ_{i>m} ‖e^{f^(i)}‖^q ‖φ′_i‖^t` from the tail descriptor,
    /// as a bracket `[lower, upper]`. `None` when the combination has no
    /// closed-form tail.
    pub(crate) fn tail_bracket(
        &self,
        system: &IfsSystem,
        m: usize,
        q: f64,
        t: f64,
    ) -> Option<(f64, f64)> {
        let tail = system.tail()?;
        let m = m as f64;
        match (&self.potential, tail) {
            (Potential::Derivative { exponent, .. }, TailDescriptor::PowerLaw { c, p, .. }) => {
                let (_, gmax) = self.base_range(system);
                let e = p * (exponent * q + t);
                if e <= 1.0 {
                    return Some((f64::INFINITY, f64::INFINITY));
                }
                let pre = ((gmax - self.shift) * q).exp() * c.powf(exponent * q + t) / (e - 1.0);
                Some((pre * (m + 1.0).powf(1.0 - e), pre * m.powf(1.0 - e)))
            }
            (
                Potential::Derivative { exponent, .. },
                TailDescriptor::Geometric { c, ratio, .. },
            ) => {
                let (_, gmax) = self.base_range(system);
                let a = ratio.powf(exponent * q + t);
                if a >= 1.0 {
                    return Some((f64::INFINITY, f64::INFINITY));
                }
                let v =
                    ((gmax - self.shift) * q).exp() * c.powf(exponent * q + t) * a.powf(m + 1.0)
                        / (1.0 - a);
                Some((v, v))
            }
            (Potential::LogWeights(WeightSource::Geometric { ratio, scale }), tail) => {
                let w = scale * (-self.shift).exp();
                match tail {
                    TailDescriptor::Geometric { c, ratio: rs, .. } => {
                        let a = ratio.powf(q) * rs.powf(t);
                        if a >= 1.0 {
                            return Some((f64::INFINITY, f64::INFINITY));
                        }
                        let v = w.powf(q) * c.powf(t) * a.powf(m + 1.0) / (1.0 - a);
                        Some((v, v))
                    }
                    TailDescriptor::PowerLaw { c, p, .. } => {
                        // i^{−pt} ≤ (m+1)^{−pt} for t ≥ 0.
                        if q <= 0.0 || t < 0.0 {
                            return None;
                        }
                        let a = ratio.powf(q);
                        let v = w.powf(q) * c.powf(t) * (m + 1.0).powf(-p * t) * a.powf(m + 1.0)
                            / (1.0 - a);
                        Some((0.0, v))
                    }
                }
            }
            _ => None,
        }
    }
}

/// `S_ω(F)(x) = Σ_j f^(ω_j)(φ_{σ^j ω}(x))`, iterating the suffix orbit.
pub fn birkhoff_sum(
    family: &PotentialFamily,
    system: &IfsSystem,
    word: &Word,
    x: f64,
) -> Result<f64> {
    if word.is_empty() {
        return Err(Error::EmptyWord);
    }
    let d = system.domain();
    if !d.contains(x) {
        return Err(Error::OutsideDomain {
            x,
            lo: d.lo,
            hi: d.hi,
        });
    }
    let maps: Vec<ContractionMap> = word
        .symbols()
        .iter()
        .map(|&i| system.map(i))
        .collect::<Result<_>>()?;
    Ok(birkhoff_with_maps(family, word.symbols(), &maps, x))
}

fn birkhoff_with_maps(
    family: &PotentialFamily,
    symbols: &[u32],
    maps: &[ContractionMap],
    x: f64,
) -> f64 {
    let mut y = x;
    let mut sum = 0.0;
    for (&i, m) in symbols.iter().zip(maps).rev() {
        sum += family.eval(i, m, y);
        y = m.eval(y);
    }
    sum
}

/// `‖exp S_ω(F)‖`: exact for `x`-independent potentials, otherwise a grid
/// maximum with error factor bounded by the ratio constant.
pub fn sup_norm_exp_birkhoff(
    family: &PotentialFamily,
    system: &IfsSystem,
    word: &Word,
) -> Result<SupNorm> {
    if word.is_empty() {
        return Err(Error::EmptyWord);
    }
    let maps: Vec<ContractionMap> = word
        .symbols()
        .iter()
        .map(|&i| system.map(i))
        .collect::<Result<_>>()?;
    let constants: Option<Vec<f64>> = word
        .symbols()
        .iter()
        .zip(&maps)
        .map(|(&i, m)| family.log_constant(i, m))
        .collect();
    if let Some(c) = constants {
        return Ok(SupNorm {
            norm: c.iter().sum::<f64>().exp(),
            error_factor: 1.0,
        });
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in system.domain().grid(system.grid_points()) {
        let s = birkhoff_with_maps(family, word.symbols(), &maps, x);
        lo = lo.min(s);
        hi = hi.max(s);
    }
    let c = family.ratio_constant(system);
    Ok(SupNorm {
        norm: hi.exp(),
        error_factor: (c * (lo - hi).exp()).max(1.0),
    })
}

fn sampled_ratio<R: Rng>(
    family: &PotentialFamily,
    system: &IfsSystem,
    rng: &mut R,
    max_depth: usize,
    max_symbol: u32,
    samples: usize,
) -> f64 {
    let max_symbol = system.truncated_size(max_symbol as usize) as u32;
    let d = system.domain();
    let mut worst = 0.0f64;
    for k in 0..samples {
        let len = 1 + k % max_depth.max(1);
        let w = random_word(rng, len, max_symbol);
        let maps: Vec<ContractionMap> = w
            .symbols()
            .iter()
            .map(|&i| system.map(i).unwrap())
            .collect();
        let x = rng.gen_range(d.lo..=d.hi);
        let y = rng.gen_range(d.lo..=d.hi);
        let diff = birkhoff_with_maps(family, w.symbols(), &maps, x)
            - birkhoff_with_maps(family, w.symbols(), &maps, y);
        worst = worst.max(diff.abs());
    }
    worst.exp()
}

/// Summability of `Σ_i ‖e^{f^(i)}‖` together with sampled Hölder variations
/// and ratio constant. The sampled constants are diagnostics: they can
/// falsify a claimed bound, not prove one.
pub fn summability_and_holder(
    family: &PotentialFamily,
    system: &IfsSystem,
    sample_depth: usize,
    opts: &SummabilityOptions,
) -> Result<SummabilityReport> {
    family.check_compatible(system)?;
    let sample_depth = sample_depth.max(1);

    let (partial, enumerated, lower, upper) = match system.size() {
        Some(n) => {
            let s = (1..=n as u32)
                .map(|i| family.symbol_norm(system, i))
                .sum::<Result<f64>>()?;
            (s, n, 0.0, 0.0)
        }
        None => {
            let tail = system.tail().ok_or(Error::MissingTail)?;
            if let (Potential::Derivative { exponent, .. }, TailDescriptor::PowerLaw { p, .. }) =
                (&family.potential, tail)
            {
                if p * exponent <= 1.0 {
                    return Err(Error::NonSummable {
                        exponent: p * exponent,
                    });
                }
            }
            let n = opts.enumerate.max(1);
            let s = (1..=n as u32)
                .map(|i| family.symbol_norm(system, i))
                .sum::<Result<f64>>()?;
            let (lo, hi) = family
                .tail_bracket(system, n, 1.0, 0.0)
                .ok_or(Error::MissingTail)?;
            if !hi.is_finite() {
                return Err(Error::NonSummable { exponent: f64::NAN });
            }
            (s, n, lo, hi)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let max_symbol = system.truncated_size(opts.max_symbol as usize) as u32;
    let d = system.domain();
    let per_depth = (opts.samples / sample_depth).max(1);
    let mut variations = vec![0.0f64; sample_depth];
    let mut worst_ratio = 0.0f64;
    for n in 1..=sample_depth {
        for _ in 0..per_depth {
            let w = random_word(&mut rng, n, max_symbol);
            let maps: Vec<ContractionMap> = w
                .symbols()
                .iter()
                .map(|&i| system.map(i))
                .collect::<Result<_>>()?;
            let x = rng.gen_range(d.lo..=d.hi);
            let y = rng.gen_range(d.lo..=d.hi);
            // f^(ω_1) ∘ φ_{σω} at x and y.
            let tail_maps = &maps[1..];
            let (px, _) = crate::ifs_model::compose_maps(tail_maps, x);
            let (py, _) = crate::ifs_model::compose_maps(tail_maps, y);
            let s1 = w.symbols()[0];
            let v = (family.eval(s1, &maps[0], px) - family.eval(s1, &maps[0], py)).abs();
            variations[n - 1] = variations[n - 1].max(v);
            let diff = birkhoff_with_maps(family, w.symbols(), &maps, x)
                - birkhoff_with_maps(family, w.symbols(), &maps, y);
            worst_ratio = worst_ratio.max(diff.abs());
        }
    }

    let certificate = holder_certificate(variations);
    Ok(SummabilityReport {
        tail_sum: partial + 0.5 * (lower + upper),
        tail_lower: partial + lower,
        tail_upper: partial + upper,
        enumerated,
        certificate,
        ratio: RatioConstant {
            c: worst_ratio.exp(),
        },
    })
}

fn holder_certificate(variations: Vec<f64>) -> HolderCertificate {
    let v1 = variations[0];
    if variations.iter().all(|&v| v == 0.0) || v1 == 0.0 {
        let v_beta = variations.iter().copied().fold(0.0, f64::max);
        return HolderCertificate {
            holder_order: 1.0,
            v_beta,
            variations,
        };
    }
    let mut order = f64::INFINITY;
    for (k, &v) in variations.iter().enumerate().skip(1) {
        if v > 0.0 {
            order = order.min((v1 / v).ln() / k as f64);
        }
    }
    if !order.is_finite() {
        order = 1.0;
    }
    let order = order.max(1e-3);
    let v_beta = variations
        .iter()
        .enumerate()
        .map(|(k, &v)| v * (order * k as f64).exp())
        .fold(0.0, f64::max);
    HolderCertificate {
        holder_order: order,
        v_beta,
        variations,
    }
}

/// Estimates `P(F) = lim (1/n) log Σ_ω ‖exp S_ω(F)‖` and returns the family
/// shifted so its pressure is zero.
///
/// Multiplicative systems use the exact one-symbol sum. Otherwise word sums at
/// depths `depth − 4, depth − 2, depth` are telescoped pairwise and the spread
/// of the two estimates is reported as the discrepancy.
pub fn normalize_pressure(
    family: &PotentialFamily,
    system: &IfsSystem,
    depth: usize,
    truncation: Truncation,
) -> Result<(PotentialFamily, NormalizationReport)> {
    family.check_compatible(system)?;
    if let Potential::Derivative { exponent, .. } = family.potential {
        if let Some(TailDescriptor::PowerLaw { p, .. }) = system.tail() {
            if p * exponent <= 1.0 {
                return Err(Error::NonSummable {
                    exponent: p * exponent,
                });
            }
        }
    }
    let base = family.clone().with_shift(0.0);

    if base.is_multiplicative(system) {
        let eval = PressureEvaluator::new(system, &base, truncation, &PressureOptions::default())?;
        let mut p = eval.value(1.0, 0.0);
        if !p.is_finite() {
            return Err(Error::NonSummable { exponent: f64::NAN });
        }
        // Probability vectors give exactly zero up to rounding of the sum.
        if p.abs() < 1e-13 {
            p = 0.0;
        }
        return Ok((
            base.with_shift(p),
            NormalizationReport {
                shift: p,
                depths: vec![1],
                estimates: vec![p],
                discrepancy: 0.0,
            },
        ));
    }

    let depths: Vec<usize> = [depth.saturating_sub(4), depth.saturating_sub(2), depth]
        .into_iter()
        .filter(|&n| n >= 1)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let m = match truncation {
        Truncation::Full if system.is_infinite() => return Err(Error::TruncationRequired),
        Truncation::Full => usize::MAX,
        Truncation::At(m) => m,
    };
    let opts = PressureOptions {
        strategy: Strategy::Tree,
        ..PressureOptions::default()
    };
    let mut a = Vec::with_capacity(depths.len());
    for &n in &depths {
        let v = crate::pressure::word_sum_log(system, &base, 1.0, 0.0, n, m, &opts)?;
        a.push(v);
    }
    let estimates: Vec<f64> = if depths.len() == 1 {
        vec![a[0] / depths[0] as f64]
    } else {
        depths
            .windows(2)
            .zip(a.windows(2))
            .map(|(n, v)| (v[1] - v[0]) / (n[1] - n[0]) as f64)
            .collect()
    };
    let shift = *estimates.last().unwrap();
    let discrepancy = if estimates.len() >= 2 {
        (estimates[estimates.len() - 1] - estimates[estimates.len() - 2]).abs()
    } else {
        f64::NAN
    };
    Ok((
        base.with_shift(shift),
        NormalizationReport {
            shift,
            depths,
            estimates,
            discrepancy,
        },
    ))
}
