//! Conformal iterated function systems on a compact interval.
//!
//! A system is a finite list of contractions or a lazily generated infinite
//! family with a tail descriptor bounding `‖φ′_i‖`. Words are 1-based symbol
//! sequences; `φ_ω = φ_{ω_1} ∘ … ∘ φ_{ω_n}` is evaluated right to left.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Default number of evaluation points for grid sup-norms.
pub const DEFAULT_GRID: usize = 64;

/// Slack used when checking that points lie in the domain.
const DOMAIN_SLACK: f64 = 1e-12;

/// A finite word over the alphabet `{1, 2, …}`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Word(Vec<u32>);

impl Word {
    pub fn new(symbols: Vec<u32>) -> Result<Self> {
        if symbols.contains(&0) {
            return Err(Error::ZeroSymbol);
        }
        Ok(Word(symbols))
    }

    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn symbols(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<u32> {
        self.0.last().copied()
    }

    /// `ω⁻`: the word with its last letter removed.
    pub fn parent(&self) -> Option<Word> {
        if self.0.is_empty() {
            None
        } else {
            Some(Word(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// `ωi`. Panics on `symbol == 0`.
    pub fn child(&self, symbol: u32) -> Word {
        assert!(symbol >= 1, "symbols are 1-based");
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(symbol);
        Word(v)
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    /// `ω|_n`.
    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n.min(self.0.len())].to_vec())
    }

    pub fn is_prefix_of(&self, other: &Word) -> bool {
        other.0.starts_with(&self.0)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "∅");
        }
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        write!(f, "{}", parts.join("."))
    }
}

/// Draws a word of the given length with symbols uniform in `1..=max_symbol`.
pub fn random_word<R: Rng + ?Sized>(rng: &mut R, len: usize, max_symbol: u32) -> Word {
    Word((0..len).map(|_| rng.gen_range(1..=max_symbol)).collect())
}

/// Closed interval `[lo, hi]`, the compact set `X`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidSystem(format!("bad interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn unit() -> Self {
        Interval { lo: 0.0, hi: 1.0 }
    }

    pub fn diam(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = DOMAIN_SLACK * self.diam().max(1.0);
        x >= self.lo - slack && x <= self.hi + slack
    }

    /// `n` equally spaced points including both endpoints (`n == 1` gives
    /// the midpoint).
    pub fn grid(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.midpoint()],
            _ => {
                let h = self.diam() / (n - 1) as f64;
                (0..n)
                    .map(|k| {
                        if k == n - 1 {
                            self.hi
                        } else {
                            self.lo + h * k as f64
                        }
                    })
                    .collect()
            }
        }
    }
}

/// User supplied analytic branch: evaluation and derivative oracles plus a
/// bound on `sup |φ′|` over the domain.
pub trait AnalyticBranch: Send + Sync + fmt::Debug {
    fn eval(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    fn derivative_bound(&self) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Orientation {
    Preserving,
    Reversing,
}

impl Orientation {
    pub fn from_sign(sign: f64) -> Result<Self> {
        if sign == 1.0 {
            Ok(Orientation::Preserving)
        } else if sign == -1.0 {
            Ok(Orientation::Reversing)
        } else {
            Err(Error::InvalidSystem(format!(
                "orientation must be ±1, got {sign}"
            )))
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Orientation::Preserving => 1.0,
            Orientation::Reversing => -1.0,
        }
    }
}

/// One contraction `φ_i : X → X`.
#[derive(Clone, Debug)]
pub enum ContractionMap {
    /// `x ↦ orientation · ratio · x + offset`.
    Similarity {
        ratio: f64,
        offset: f64,
        orientation: Orientation,
    },
    /// `x ↦ (a x + b) / (c x + d)` with no pole on the domain. `bound` caches
    /// `sup |φ′|` over the domain.
    Mobius {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
        bound: f64,
    },
    Analytic(Arc<dyn AnalyticBranch>),
}

impl ContractionMap {
    pub fn similarity(ratio: f64, offset: f64, orientation: Orientation) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) || !offset.is_finite() {
            return Err(Error::InvalidSystem(format!(
                "similarity ratio must lie in (0,1), got {ratio}"
            )));
        }
        Ok(ContractionMap::Similarity {
            ratio,
            offset,
            orientation,
        })
    }

    pub fn mobius(a: f64, b: f64, c: f64, d: f64, domain: Interval) -> Result<Self> {
        let det = a * d - b * c;
        if det == 0.0 {
            return Err(Error::InvalidSystem("degenerate Möbius map".into()));
        }
        let den_lo = c * domain.lo + d;
        let den_hi = c * domain.hi + d;
        if den_lo == 0.0 || den_hi == 0.0 || den_lo.signum() != den_hi.signum() {
            return Err(Error::InvalidSystem(
                "Möbius map has a pole on the domain".into(),
            ));
        }
        // |φ′| = |det| / (c x + d)², extremal at an endpoint.
        let bound = det.abs() / den_lo.abs().min(den_hi.abs()).powi(2);
        Ok(ContractionMap::Mobius { a, b, c, d, bound })
    }

    /// Continued-fraction branch `x ↦ 1 / (k + x)` on `[0, 1]`.
    pub fn gauss_branch(k: u32) -> Self {
        ContractionMap::Mobius {
            a: 0.0,
            b: 1.0,
            c: 1.0,
            d: k as f64,
            bound: 1.0 / (k as f64).powi(2),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ContractionMap::Similarity {
                ratio,
                offset,
                orientation,
            } => orientation.sign() * ratio * x + offset,
            ContractionMap::Mobius { a, b, c, d, .. } => (a * x + b) / (c * x + d),
            ContractionMap::Analytic(f) => f.eval(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            ContractionMap::Similarity {
                ratio, orientation, ..
            } => orientation.sign() * ratio,
            ContractionMap::Mobius { a, b, c, d, .. } => {
                let den = c * x + d;
                (a * d - b * c) / (den * den)
            }
            ContractionMap::Analytic(f) => f.derivative(x),
        }
    }

    pub fn abs_derivative(&self, x: f64) -> f64 {
        self.derivative(x).abs()
    }

    /// Upper bound on `sup_X |φ′|`.
    pub fn derivative_bound(&self) -> f64 {
        match self {
            ContractionMap::Similarity { ratio, .. } => *ratio,
            ContractionMap::Mobius { bound, .. } => *bound,
            ContractionMap::Analytic(f) => f.derivative_bound(),
        }
    }

    pub fn similarity_ratio(&self) -> Option<f64> {
        match self {
            ContractionMap::Similarity { ratio, .. } => Some(*ratio),
            _ => None,
        }
    }
}

/// Bound of the form `‖φ′_i‖ ≤ c · i^{−p}` (power law) or `‖φ′_i‖ ≤ c · ρ^i`
/// (geometric), valid for `i ≥ from`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailDescriptor {
    PowerLaw { c: f64, p: f64, from: u32 },
    Geometric { c: f64, ratio: f64, from: u32 },
}

impl TailDescriptor {
    pub fn bound(&self, i: u32) -> f64 {
        match *self {
            TailDescriptor::PowerLaw { c, p, .. } => c * (i as f64).powf(-p),
            TailDescriptor::Geometric { c, ratio, .. } => c * ratio.powi(i as i32),
        }
    }

    pub fn from_index(&self) -> u32 {
        match *self {
            TailDescriptor::PowerLaw { from, .. } | TailDescriptor::Geometric { from, .. } => from,
        }
    }
}

/// Generator for the maps of an infinite alphabet.
#[derive(Clone)]
pub enum MapGenerator {
    /// Similarities with ratio `ρ^i` placed at `1 − ρ^{i−1}` (rescaled to the
    /// domain), leaving a gap of `ρ^{i−1}(1 − 2ρ)` between consecutive images.
    Geometric {
        ratio: f64,
    },
    /// Continued-fraction branches `1 / (i + x)` on `[0, 1]`.
    Gauss,
    Custom(Arc<dyn Fn(u32) -> ContractionMap + Send + Sync>),
}

impl fmt::Debug for MapGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapGenerator::Geometric { ratio } => write!(f, "Geometric {{ ratio: {ratio} }}"),
            MapGenerator::Gauss => write!(f, "Gauss"),
            MapGenerator::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl MapGenerator {
    fn generate(&self, i: u32, domain: Interval) -> ContractionMap {
        match self {
            MapGenerator::Geometric { ratio } => {
                let r = ratio.powi(i as i32);
                let start = domain.lo + domain.diam() * (1.0 - ratio.powi(i as i32 - 1));
                ContractionMap::Similarity {
                    ratio: r,
                    offset: start - r * domain.lo,
                    orientation: Orientation::Preserving,
                }
            }
            MapGenerator::Gauss => ContractionMap::gauss_branch(i),
            MapGenerator::Custom(g) => g(i),
        }
    }

    fn default_tail(&self) -> Option<TailDescriptor> {
        match self {
            MapGenerator::Geometric { ratio } => Some(TailDescriptor::Geometric {
                c: 1.0,
                ratio: *ratio,
                from: 1,
            }),
            MapGenerator::Gauss => Some(TailDescriptor::PowerLaw {
                c: 1.0,
                p: 2.0,
                from: 1,
            }),
            MapGenerator::Custom(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Alphabet {
    Finite(Vec<ContractionMap>),
    Infinite {
        generator: MapGenerator,
        tail: TailDescriptor,
    },
}

/// The system `Φ = {φ_i}` together with its contraction and distortion
/// metadata.
///
/// `eventual_factor` is the constant `D ≥ 1` in `‖φ′_ω‖ ≤ D · s^{|ω|}`; it is
/// 1 for uniformly contracting systems and 2 for the continued-fraction
/// branches, whose first branch has `‖φ′_1‖ = 1` on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct IfsSystem {
    domain: Interval,
    alphabet: Alphabet,
    contraction: f64,
    eventual_factor: f64,
    distortion: f64,
    open_set: Interval,
    grid: usize,
}

/// Sup-norm estimate with `norm ≤ true sup ≤ norm · error_factor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupNorm {
    pub norm: f64,
    pub error_factor: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CylinderInfo {
    pub word: Word,
    pub diameter_bound: f64,
    pub representative: f64,
    pub derivative_norm: f64,
    pub error_factor: f64,
}

/// Outcome of sampling `|φ′_ω(y)| / |φ′_ω(x)|`; it can falsify a user
/// supplied distortion constant but never certify one.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DistortionDiagnostic {
    pub asserted: f64,
    pub observed: f64,
    pub falsified: bool,
}

impl IfsSystem {
    /// Builds a system with defaults derived from the maps: `s` is the
    /// largest map Lipschitz bound, `K = 1` for pure similarity systems.
    /// Analytic systems other than the Gauss generator need an explicit `K`
    /// through [`IfsSystem::with_distortion`].
    pub fn new(domain: Interval, alphabet: Alphabet) -> Result<Self> {
        let (contraction, eventual_factor, distortion) = match &alphabet {
            Alphabet::Finite(maps) => {
                if maps.is_empty() {
                    return Err(Error::InvalidSystem("empty alphabet".into()));
                }
                let s = maps
                    .iter()
                    .map(|m| m.derivative_bound())
                    .fold(0.0, f64::max);
                let all_sim = maps.iter().all(|m| m.similarity_ratio().is_some());
                let gauss_like = maps.iter().any(|m| {
                    matches!(m, ContractionMap::Mobius { .. }) && m.derivative_bound() >= 1.0
                });
                if gauss_like {
                    (0.5, 2.0, 4.0)
                } else {
                    (s, 1.0, if all_sim { 1.0 } else { 4.0 })
                }
            }
            Alphabet::Infinite { generator, .. } => match generator {
                MapGenerator::Geometric { ratio } => (*ratio, 1.0, 1.0),
                MapGenerator::Gauss => (0.5, 2.0, 4.0),
                MapGenerator::Custom(g) => (g(1).derivative_bound(), 1.0, 4.0),
            },
        };
        let sys = IfsSystem {
            domain,
            alphabet,
            contraction,
            eventual_factor,
            distortion,
            open_set: domain,
            grid: DEFAULT_GRID,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn finite(domain: Interval, maps: Vec<ContractionMap>) -> Result<Self> {
        Self::new(domain, Alphabet::Finite(maps))
    }

    /// Infinite system; `tail` may be omitted for the built-in generators.
    pub fn infinite(
        domain: Interval,
        generator: MapGenerator,
        tail: Option<TailDescriptor>,
    ) -> Result<Self> {
        if let MapGenerator::Geometric { ratio } = generator {
            if !(ratio > 0.0 && ratio <= 0.5) {
                return Err(Error::InvalidSystem(format!(
                    "geometric generator needs ratio in (0, 1/2], got {ratio}"
                )));
            }
        }
        if matches!(generator, MapGenerator::Gauss) && domain != Interval::unit() {
            return Err(Error::InvalidSystem("Gauss branches live on [0, 1]".into()));
        }
        let tail = tail
            .or_else(|| generator.default_tail())
            .ok_or(Error::MissingTail)?;
        Self::new(domain, Alphabet::Infinite { generator, tail })
    }

    pub fn with_contraction(mut self, s: f64) -> Result<Self> {
        self.contraction = s;
        self.validate()?;
        Ok(self)
    }

    pub fn with_eventual_factor(mut self, d: f64) -> Result<Self> {
        self.eventual_factor = d;
        self.validate()?;
        Ok(self)
    }

    /// Sets `K`; ignored (kept at 1) for pure similarity systems.
    pub fn with_distortion(mut self, k: f64) -> Result<Self> {
        if !self.all_similarities() {
            self.distortion = k;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn with_open_set(mut self, open_set: Interval) -> Result<Self> {
        self.open_set = open_set;
        self.validate()?;
        Ok(self)
    }

    pub fn with_grid(mut self, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidArgument(
                "grid needs at least 2 points".into(),
            ));
        }
        self.grid = points;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let s = self.contraction;
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidSystem(format!(
                "contraction bound s = {s} not in (0,1)"
            )));
        }
        if !(self.eventual_factor >= 1.0) {
            return Err(Error::InvalidSystem("eventual factor must be >= 1".into()));
        }
        if !(self.distortion >= 1.0) {
            return Err(Error::InvalidSystem(format!(
                "distortion constant K = {} must be >= 1",
                self.distortion
            )));
        }
        if self.open_set.lo < self.domain.lo || self.open_set.hi > self.domain.hi {
            return Err(Error::InvalidSystem(
                "open set must lie inside the domain".into(),
            ));
        }
        let check_map = |i: u32, m: &ContractionMap| -> Result<()> {
            let bound = m.derivative_bound();
            if !(bound > 0.0) || bound > self.eventual_factor * s * (1.0 + 1e-12) {
                return Err(Error::InvalidSystem(format!(
                    "map {i} has ‖φ′‖ = {bound}, exceeding the contraction bound"
                )));
            }
            for x in [self.domain.lo, self.domain.hi] {
                let y = m.eval(x);
                if !self.domain.contains(y) {
                    return Err(Error::InvalidSystem(format!(
                        "map {i} sends {x} to {y}, outside the domain"
                    )));
                }
            }
            Ok(())
        };
        match &self.alphabet {
            Alphabet::Finite(maps) => {
                for (k, m) in maps.iter().enumerate() {
                    check_map(k as u32 + 1, m)?;
                }
            }
            Alphabet::Infinite { generator, tail } => {
                for i in 1..=64u32 {
                    let m = generator.generate(i, self.domain);
                    check_map(i, &m)?;
                    if i >= tail.from_index() && m.derivative_bound() > tail.bound(i) * (1.0 + 1e-9)
                    {
                        return Err(Error::InvalidSystem(format!(
                            "tail descriptor does not bound ‖φ′_{i}‖"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn contraction(&self) -> f64 {
        self.contraction
    }

    pub fn eventual_factor(&self) -> f64 {
        self.eventual_factor
    }

    pub fn distortion(&self) -> f64 {
        self.distortion
    }

    pub fn open_set(&self) -> Interval {
        self.open_set
    }

    pub fn grid_points(&self) -> usize {
        self.grid
    }

    /// Number of symbols, `None` for infinite alphabets.
    pub fn size(&self) -> Option<usize> {
        match &self.alphabet {
            Alphabet::Finite(m) => Some(m.len()),
            Alphabet::Infinite { .. } => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.size().is_none()
    }

    pub fn tail(&self) -> Option<TailDescriptor> {
        match &self.alphabet {
            Alphabet::Finite(_) => None,
            Alphabet::Infinite { tail, .. } => Some(*tail),
        }
    }

    /// Symbols kept by a truncation at `m` (all of them for finite alphabets).
    pub fn truncated_size(&self, m: usize) -> usize {
        match self.size() {
            Some(n) => n.min(m.max(1)),
            None => m.max(1),
        }
    }

    pub fn map(&self, symbol: u32) -> Result<ContractionMap> {
        if symbol == 0 {
            return Err(Error::ZeroSymbol);
        }
        match &self.alphabet {
            Alphabet::Finite(maps) => {
                maps.get(symbol as usize - 1)
                    .cloned()
                    .ok_or(Error::InvalidSymbol {
                        symbol,
                        size: maps.len(),
                    })
            }
            Alphabet::Infinite { generator, .. } => Ok(generator.generate(symbol, self.domain)),
        }
    }

    /// Maps for symbols `1..=m` (clipped to the alphabet size).
    pub fn maps_upto(&self, m: usize) -> Vec<ContractionMap> {
        (1..=self.truncated_size(m) as u32)
            .map(|i| self.map(i).expect("symbol within alphabet"))
            .collect()
    }

    fn word_maps(&self, word: &Word) -> Result<Vec<ContractionMap>> {
        word.symbols().iter().map(|&i| self.map(i)).collect()
    }

    /// True when every map (of the finite alphabet, or of the generator) is a
    /// similarity.
    pub fn all_similarities(&self) -> bool {
        match &self.alphabet {
            Alphabet::Finite(maps) => maps.iter().all(|m| m.similarity_ratio().is_some()),
            Alphabet::Infinite { generator, .. } => {
                matches!(generator, MapGenerator::Geometric { .. })
            }
        }
    }

    fn check_point(&self, x: f64) -> Result<()> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain {
                x,
                lo: self.domain.lo,
                hi: self.domain.hi,
            })
        }
    }

    /// `(φ_ω(x), |φ′_ω(x)|)`, composing right to left.
    pub fn compose_and_derivative(&self, word: &Word, x: f64) -> Result<(f64, f64)> {
        self.check_point(x)?;
        let maps = self.word_maps(word)?;
        Ok(compose_maps(&maps, x))
    }

    /// `‖φ′_ω‖` on the domain: exact for similarity words, otherwise a grid
    /// maximum whose error factor comes from bounded distortion.
    pub fn derivative_sup_norm(&self, word: &Word) -> Result<SupNorm> {
        if word.is_empty() {
            return Err(Error::EmptyWord);
        }
        let maps = self.word_maps(word)?;
        if maps.iter().all(|m| m.similarity_ratio().is_some()) {
            let norm = maps.iter().map(|m| m.derivative_bound()).product();
            return Ok(SupNorm {
                norm,
                error_factor: 1.0,
            });
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for x in self.domain.grid(self.grid) {
            let (_, d) = compose_maps(&maps, x);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        Ok(SupNorm {
            norm: hi,
            error_factor: (self.distortion * lo / hi).max(1.0),
        })
    }

    /// The image interval `φ_ω(X)`; injective continuous maps of an interval
    /// are monotone so the endpoints suffice.
    pub fn cylinder_interval(&self, word: &Word) -> Result<Interval> {
        let maps = self.word_maps(word)?;
        let a = compose_maps(&maps, self.domain.lo).0;
        let b = compose_maps(&maps, self.domain.hi).0;
        Ok(Interval {
            lo: a.min(b),
            hi: a.max(b),
        })
    }

    pub fn cylinder_geometry(&self, word: &Word) -> Result<CylinderInfo> {
        let diam = self.domain.diam();
        if word.is_empty() {
            return Ok(CylinderInfo {
                word: word.clone(),
                diameter_bound: diam,
                representative: self.domain.midpoint(),
                derivative_norm: 1.0,
                error_factor: 1.0,
            });
        }
        let sup = self.derivative_sup_norm(word)?;
        let cap = self.eventual_factor * self.contraction.powi(word.len() as i32) * diam;
        let (representative, _) = self.compose_and_derivative(word, self.domain.midpoint())?;
        Ok(CylinderInfo {
            word: word.clone(),
            diameter_bound: (sup.norm * sup.error_factor * diam).min(cap),
            representative,
            derivative_norm: sup.norm,
            error_factor: sup.error_factor,
        })
    }

    /// Samples the distortion ratio over random words of length
    /// `1..=max_depth` with symbols in `1..=max_symbol`.
    pub fn distortion_diagnostic<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        max_depth: usize,
        max_symbol: u32,
        samples: usize,
    ) -> DistortionDiagnostic {
        let max_symbol = self.truncated_size(max_symbol as usize) as u32;
        let mut observed = 1.0f64;
        for _ in 0..samples {
            let len = rng.gen_range(1..=max_depth.max(1));
            let w = random_word(rng, len, max_symbol);
            let maps = self.word_maps(&w).expect("symbols within alphabet");
            let x = rng.gen_range(self.domain.lo..=self.domain.hi);
            let y = rng.gen_range(self.domain.lo..=self.domain.hi);
            let (_, dx) = compose_maps(&maps, x);
            let (_, dy) = compose_maps(&maps, y);
            observed = observed.max(dx / dy).max(dy / dx);
        }
        DistortionDiagnostic {
            asserted: self.distortion,
            observed,
            falsified: observed > self.distortion * (1.0 + 1e-9),
        }
    }
}

/// Right-to-left composition of `maps` at `x` with the chain-rule product of
/// absolute derivatives.
pub(crate) fn compose_maps(maps: &[ContractionMap], x: f64) -> (f64, f64) {
    let mut y = x;
    let mut d = 1.0;
    for m in maps.iter().rev() {
        d *= m.abs_derivative(y);
        y = m.eval(y);
    }
    (y, d)
}
