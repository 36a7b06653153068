//! Quantization errors `V_{n,r}` of empirical measures, Lloyd codebooks, the
//! antichain codebook `Γ_n` and log-log estimates of the quantization
//! dimension.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conformal_measure::SampleSet;
use crate::error::{Error, Result};
use crate::ifs_model::{IfsSystem, Word};
use crate::potentials::{sup_norm_exp_birkhoff, PotentialFamily};
use crate::pressure::{PressureEvaluator, PressureOptions, Truncation};

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const PRESCAN: usize = 64;
const ANTICHAIN_MAX_DEPTH: usize = 1000;
/// Relative slack for threshold comparisons in the antichain expansion.
const ANTICHAIN_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Codebook {
    points: Vec<f64>,
    n: usize,
}

impl Codebook {
    /// At most `n` points, stored sorted.
    pub fn new(mut points: Vec<f64>, n: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCodebook);
        }
        if points.len() > n {
            return Err(Error::InvalidArgument(format!(
                "{} codebook points exceed n = {n}",
                points.len()
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "codebook points must be finite".into(),
            ));
        }
        points.sort_by(f64::total_cmp);
        Ok(Codebook { points, n })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `(1/N) Σ_x min_c |x − c|^r`, one merge pass over the sorted sequences.
pub fn quant_error(sample: &SampleSet, codebook: &Codebook, r: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    check_r(r)?;
    Ok(sorted_error(sample.points(), codebook.points(), r))
}

fn check_r(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "r must be positive, got {r}"
        )))
    }
}

fn sorted_error(xs: &[f64], cs: &[f64], r: f64) -> f64 {
    let mut k = 0;
    let mut acc = 0.0;
    for &x in xs {
        while k + 1 < cs.len() && (cs[k + 1] - x).abs() <= (x - cs[k]).abs() {
            k += 1;
        }
        acc += cost((x - cs[k]).abs(), r);
    }
    acc / xs.len() as f64
}

#[inline]
fn cost(d: f64, r: f64) -> f64 {
    if r == 2.0 {
        d * d
    } else {
        d.powf(r)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LloydOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for LloydOptions {
    fn default() -> Self {
        LloydOptions {
            restarts: 8,
            max_iter: 300,
            seed: 0x11_0d,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RestartTrace {
    pub restart: usize,
    pub iterations: usize,
    pub error: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct QuantizationRun {
    pub n: usize,
    pub r: f64,
    pub v_hat: f64,
    pub e_hat: f64,
    pub codebook: Codebook,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub seed: u64,
    /// Error after every iteration of the selected restart.
    pub error_trace: Vec<f64>,
    pub restart_traces: Vec<RestartTrace>,
}

/// Best of several Lloyd runs on the sorted sample: restart 0 starts from
/// sample quantiles, the others from k-means++ seeds on independent streams.
/// Within a run the error never increases; ties between restarts go to the
/// lexicographically smallest codebook.
pub fn lloyd_optimize(
    sample: &SampleSet,
    n: usize,
    r: f64,
    opts: &LloydOptions,
) -> Result<QuantizationRun> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    check_r(r)?;
    let xs = sample.points();
    let mut distinct = xs.to_vec();
    distinct.dedup();
    if distinct.len() <= n {
        return Ok(QuantizationRun {
            n,
            r,
            v_hat: 0.0,
            e_hat: 0.0,
            codebook: Codebook::new(distinct, n)?,
            iterations: 0,
            restarts: 0,
            converged: true,
            seed: opts.seed,
            error_trace: vec![0.0],
            restart_traces: Vec::new(),
        });
    }
    let restarts = opts.restarts.max(1);
    let runs: Vec<(Vec<f64>, Vec<f64>, bool)> = (0..restarts)
        .into_par_iter()
        .map(|k| {
            let init = if k == 0 {
                quantile_init(xs, n)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(k as u64);
                kmeanspp_init(xs, n, r, &mut rng)
            };
            lloyd_run(xs, init, r, opts.max_iter)
        })
        .collect();
    let restart_traces = runs
        .iter()
        .enumerate()
        .map(|(k, (_, trace, conv))| RestartTrace {
            restart: k,
            iterations: trace.len() - 1,
            error: *trace.last().unwrap(),
            converged: *conv,
        })
        .collect();
    let best = runs
        .iter()
        .min_by(|a, b| {
            let (ea, eb) = (a.1.last().unwrap(), b.1.last().unwrap());
            ea.total_cmp(eb).then_with(|| lexicographic(&a.0, &b.0))
        })
        .unwrap();
    let (centers, trace, converged) = best.clone();
    let v_hat = *trace.last().unwrap();
    Ok(QuantizationRun {
        n,
        r,
        v_hat,
        e_hat: v_hat.powf(1.0 / r),
        codebook: Codebook::new(centers, n)?,
        iterations: trace.len() - 1,
        restarts,
        converged,
        seed: opts.seed,
        error_trace: trace,
        restart_traces,
    })
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = x.total_cmp(y);
        if c.is_ne() {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

fn quantile_init(xs: &[f64], n: usize) -> Vec<f64> {
    let len = xs.len();
    let mut c: Vec<f64> = (0..n)
        .map(|j| xs[(((2 * j + 1) * len) / (2 * n)).min(len - 1)])
        .collect();
    c.dedup();
    c
}

/// k-means++ with `D^r` sampling weights.
fn kmeanspp_init(xs: &[f64], n: usize, r: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centers = vec![xs[rng.gen_range(0..xs.len())]];
    let mut dist: Vec<f64> = xs
        .iter()
        .map(|&x| cost((x - centers[0]).abs(), r))
        .collect();
    while centers.len() < n {
        let total: f64 = dist.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut u = rng.gen::<f64>() * total;
        let mut pick = xs.len() - 1;
        for (i, &d) in dist.iter().enumerate() {
            if u < d {
                pick = i;
                break;
            }
            u -= d;
        }
        let c = xs[pick];
        centers.push(c);
        for (d, &x) in dist.iter_mut().zip(xs) {
            *d = d.min(cost((x - c).abs(), r));
        }
    }
    centers.sort_by(f64::total_cmp);
    centers.dedup();
    centers
}

/// Cell boundaries of the sorted sample for sorted centres: cell `j` is
/// `xs[bounds[j]..bounds[j+1]]`.
fn partition(xs: &[f64], centers: &[f64]) -> Vec<usize> {
    let mut bounds = Vec::with_capacity(centers.len() + 1);
    bounds.push(0);
    for w in centers.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        bounds.push(xs.partition_point(|&x| x < mid));
    }
    bounds.push(xs.len());
    bounds
}

fn cell_cost(cell: &[f64], c: f64, r: f64) -> f64 {
    cell.iter().map(|&x| cost((x - c).abs(), r)).sum()
}

/// Minimiser of `c ↦ Σ |x − c|^r` over the cell.
fn cell_center(cell: &[f64], r: f64, tol: f64) -> f64 {
    if r == 2.0 {
        return cell.iter().sum::<f64>() / cell.len() as f64;
    }
    let (mut lo, mut hi) = (cell[0], cell[cell.len() - 1]);
    if hi - lo <= tol {
        return 0.5 * (lo + hi);
    }
    if r < 1.0 {
        // Nonconvex objective: bracket the best point of a uniform pre-scan.
        let step = (hi - lo) / (PRESCAN - 1) as f64;
        let best = (0..PRESCAN)
            .map(|k| lo + k as f64 * step)
            .min_by(|a, b| cell_cost(cell, *a, r).total_cmp(&cell_cost(cell, *b, r)))
            .unwrap();
        lo = (best - step).max(lo);
        hi = (best + step).min(hi);
    }
    let f = |c: f64| cell_cost(cell, c, r);
    let (mut a, mut b) = (hi - GOLDEN * (hi - lo), lo + GOLDEN * (hi - lo));
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - GOLDEN * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + GOLDEN * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// One Lloyd run. Returns centres, the error after each iteration (starting
/// with the initial codebook) and whether a fixed point was reached.
fn lloyd_run(
    xs: &[f64],
    mut centers: Vec<f64>,
    r: f64,
    max_iter: usize,
) -> (Vec<f64>, Vec<f64>, bool) {
    let tol = 1e-10 * (xs[xs.len() - 1] - xs[0]).max(f64::MIN_POSITIVE);
    let mut err = sorted_error(xs, &centers, r);
    let mut trace = vec![err];
    for _ in 0..max_iter {
        let bounds = partition(xs, &centers);
        let mut next: Vec<f64> = centers
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let cell = &xs[bounds[j]..bounds[j + 1]];
                if cell.is_empty() {
                    c
                } else {
                    cell_center(cell, r, tol)
                }
            })
            .collect();
        next.sort_by(f64::total_cmp);
        next.dedup();
        let next_err = sorted_error(xs, &next, r);
        if next_err > err {
            return (centers, trace, true);
        }
        let moved = next.len() != centers.len() || next.iter().zip(&centers).any(|(a, b)| a != b);
        let improvement = err - next_err;
        centers = next;
        err = next_err;
        trace.push(err);
        if !moved || improvement <= 1e-14 * err {
            return (centers, trace, true);
        }
    }
    (centers, trace, false)
}

#[derive(Clone, Debug, Serialize)]
pub struct AntichainResult {
    pub r: f64,
    pub n: usize,
    pub eta: f64,
    pub l: f64,
    pub rho_n: f64,
    pub threshold: f64,
    pub words: Vec<Word>,
    pub codebook: Codebook,
    pub cardinality: usize,
}

impl AntichainResult {
    /// Number of retained words that are prefixes of the symbol sequence.
    pub fn prefix_count(&self, sequence: &[u32]) -> usize {
        self.words
            .iter()
            .filter(|w| w.len() <= sequence.len() && w.symbols() == &sequence[..w.len()])
            .count()
    }

    pub fn max_depth(&self) -> usize {
        self.words.iter().map(Word::len).max().unwrap_or(0)
    }
}

/// Per-word data needed for the splitting rule: `m_N(J_ω)` and `‖φ′_ω‖`.
struct WordWeights<'a> {
    system: &'a IfsSystem,
    family: PotentialFamily,
    /// Per-symbol `(mass, derivative)` when both factor over symbols.
    factors: Option<Vec<(f64, f64)>>,
}

impl WordWeights<'_> {
    fn of(&self, word: &Word) -> Result<(f64, f64)> {
        match &self.factors {
            Some(f) => Ok(word.symbols().iter().fold((1.0, 1.0), |(m, d), &i| {
                (m * f[i as usize - 1].0, d * f[i as usize - 1].1)
            })),
            None => Ok((
                sup_norm_exp_birkhoff(&self.family, self.system, word)?.norm,
                self.system.derivative_sup_norm(word)?.norm,
            )),
        }
    }
}

/// The maximal antichain `Γ_n` over the alphabet truncated at `N`: words are
/// split breadth-first while `(m_N(J_ω) ‖φ′_ω‖^r)^η` exceeds `L / (n ρ_N)`.
/// The empty word is always split. One representative point per word forms
/// the codebook.
pub fn antichain_codebook(
    system: &IfsSystem,
    family: &PotentialFamily,
    r: f64,
    n: usize,
    truncation: Truncation,
    kappa_r: f64,
) -> Result<AntichainResult> {
    check_r(r)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(kappa_r > 0.0 && kappa_r.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "kappa_r must be positive, got {kappa_r}"
        )));
    }
    let m = match (truncation, system.size()) {
        (Truncation::At(m), _) => system.truncated_size(m),
        (Truncation::Full, Some(k)) => k,
        (Truncation::Full, None) => return Err(Error::TruncationRequired),
    };
    // Renormalize the truncated family so m_N is a probability measure.
    let shift = PressureEvaluator::new(
        system,
        family,
        Truncation::At(m),
        &PressureOptions::default(),
    )?
    .value(1.0, 0.0);
    let normalized = family.clone().with_shift(family.shift() + shift);
    let maps = system.maps_upto(m);
    let factors = if family.is_multiplicative(system) {
        Some(
            maps.iter()
                .enumerate()
                .map(|(k, map)| {
                    let lw = normalized
                        .log_constant(k as u32 + 1, map)
                        .expect("multiplicative family");
                    (lw.exp(), map.derivative_bound())
                })
                .collect(),
        )
    } else {
        None
    };
    let weights = WordWeights {
        system,
        family: normalized.clone(),
        factors,
    };

    let c = family.ratio_constant(system);
    let k = system.distortion();
    let eta = kappa_r / (r + kappa_r);
    let l = (c * k.powf(r)).powf(eta);
    let mut min_mass = f64::INFINITY;
    let mut min_deriv = f64::INFINITY;
    for i in 1..=m as u32 {
        let (mass, d) = weights.of(&Word::new(vec![i])?)?;
        min_mass = min_mass.min(mass);
        min_deriv = min_deriv.min(d);
    }
    let rho_n = (c.powi(-3) * k.powf(-r) * min_mass * min_deriv.powf(r)).powf(eta);
    let threshold = l / (n as f64 * rho_n);

    let mut words = Vec::new();
    let mut queue = VecDeque::from([Word::empty()]);
    while let Some(word) = queue.pop_front() {
        if word.len() >= ANTICHAIN_MAX_DEPTH {
            return Err(Error::AntichainDepth(ANTICHAIN_MAX_DEPTH));
        }
        let keep = !word.is_empty() && {
            let (mass, d) = weights.of(&word)?;
            (mass * d.powf(r)).powf(eta) <= threshold * (1.0 + ANTICHAIN_SLACK)
        };
        if keep {
            words.push(word);
            if words.len() > n {
                return Err(Error::AntichainTooLarge {
                    cardinality: words.len() + queue.len(),
                    n,
                });
            }
        } else {
            queue.extend((1..=m as u32).map(|i| word.child(i)));
        }
    }
    let points = words
        .iter()
        .map(|w| system.cylinder_geometry(w).map(|g| g.representative))
        .collect::<Result<Vec<_>>>()?;
    let cardinality = words.len();
    Ok(AntichainResult {
        r,
        n,
        eta,
        l,
        rho_n,
        threshold,
        words,
        codebook: Codebook::new(points, n)?,
        cardinality,
    })
}

/// Least-squares slope of `log v` against `log n`.
pub fn loglog_slope(ns: &[f64], vs: &[f64]) -> Result<f64> {
    if ns.len() != vs.len() {
        return Err(Error::InvalidArgument(
            "n and V sequences differ in length".into(),
        ));
    }
    if ns.len() < 2 {
        return Err(Error::InsufficientRuns {
            needed: 2,
            got: ns.len(),
        });
    }
    if let Some(&v) = vs.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NonPositiveError(v));
    }
    if ns.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientRuns { needed: 2, got: 1 });
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// `D = −r / slope` from the log-log regression.
pub fn dimension_from_errors(ns: &[f64], vs: &[f64], r: f64) -> Result<f64> {
    Ok(-r / loglog_slope(ns, vs)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct CoefficientSeries {
    pub t: f64,
    /// `(n, n · V̂^{t/r})`.
    pub values: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DrEstimate {
    pub d_hat: f64,
    pub slope: f64,
    /// `D` from the runs up to each `n` (`None` for the first).
    pub running: Vec<(usize, Option<f64>)>,
    pub coefficients: Vec<CoefficientSeries>,
}

/// Log-log estimate of `D_r` with the coefficient series `n V̂^{t/r}` for
/// `t = κ(1 − 0.1), κ, κ(1 + 0.1)`: bounded for `t ≤ D_r`, growing beyond.
pub fn estimate_dr(runs: &[QuantizationRun], kappa_hint: f64) -> Result<DrEstimate> {
    let mut runs: Vec<&QuantizationRun> = runs.iter().collect();
    runs.sort_by_key(|run| run.n);
    runs.dedup_by_key(|run| run.n);
    if runs.len() < 3 {
        return Err(Error::InsufficientRuns {
            needed: 3,
            got: runs.len(),
        });
    }
    let r = runs[0].r;
    if runs.iter().any(|run| run.r != r) {
        return Err(Error::InvalidArgument("runs use different r".into()));
    }
    if let Some(run) = runs.iter().find(|run| !(run.v_hat > 0.0)) {
        return Err(Error::NonPositiveError(run.v_hat));
    }
    let ns: Vec<f64> = runs.iter().map(|run| run.n as f64).collect();
    let vs: Vec<f64> = runs.iter().map(|run| run.v_hat).collect();
    let slope = loglog_slope(&ns, &vs)?;
    let running = (0..runs.len())
        .map(|k| {
            let d = (k >= 1)
                .then(|| dimension_from_errors(&ns[..=k], &vs[..=k], r).ok())
                .flatten();
            (runs[k].n, d)
        })
        .collect();
    let coefficients = [0.9, 1.0, 1.1]
        .iter()
        .map(|f| {
            let t = kappa_hint * f;
            CoefficientSeries {
                t,
                values: runs
                    .iter()
                    .map(|run| (run.n, run.n as f64 * run.v_hat.powf(t / r)))
                    .collect(),
            }
        })
        .collect();
    Ok(DrEstimate {
        d_hat: -r / slope,
        slope,
        running,
        coefficients,
    })
}
