//! Cylinder masses of the conformal measure `m_F`, the auxiliary measure
//! `m_q`, Monte-Carlo samples of `m_F` / `m_M`, and the 1-D `L_r`-minimal
//! metric between empirical measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ifs_model::{ContractionMap, IfsSystem, Word};
use crate::potentials::{sup_norm_exp_birkhoff, PotentialFamily};

/// Points per independently seeded chunk.
const CHUNK: usize = 8192;
/// Largest truncation tried when searching for a small enough tail.
const MAX_AUTO_TRUNCATION: usize = 1 << 16;
/// Letters of context used when sampling non-constant families.
const WINDOW: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MassMode {
    /// `m_F(φ_ω(J))`.
    F,
    /// `m_q(φ_ω(J))` with weight `(exp S_ω(F) |φ′_ω|^r)^q`.
    Q { q: f64, r: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CylinderMass {
    pub word: Word,
    pub lower: f64,
    pub upper: f64,
}

impl CylinderMass {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }
}

/// Bracket `[C⁻¹‖·‖, ‖·‖]` for the mass of the cylinder of `word`; exact when
/// the pair is multiplicative.
pub fn cylinder_mass(
    system: &IfsSystem,
    family: &PotentialFamily,
    word: &Word,
    mode: MassMode,
) -> Result<CylinderMass> {
    family.check_compatible(system)?;
    if let MassMode::Q { q, r } = mode {
        if !(q > 0.0 && q < 1.0) || !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "m_q needs q in (0,1) and r > 0, got q = {q}, r = {r}"
            )));
        }
    }
    if word.is_empty() {
        return Ok(CylinderMass {
            word: word.clone(),
            lower: 1.0,
            upper: 1.0,
        });
    }
    let exact = family.is_multiplicative(system);
    let weight = sup_norm_exp_birkhoff(family, system, word)?.norm;
    let c = if exact {
        1.0
    } else {
        family.ratio_constant(system)
    };
    let (upper, spread) = match mode {
        MassMode::F => (weight, c),
        MassMode::Q { q, r } => {
            let d = system.derivative_sup_norm(word)?.norm;
            let k = if exact { 1.0 } else { system.distortion() };
            ((weight * d.powf(r)).powf(q), (c * k.powf(r)).powf(q))
        }
    };
    let upper = upper.min(1.0);
    Ok(CylinderMass {
        word: word.clone(),
        lower: upper / spread,
        upper,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct SampleOptions {
    pub count: usize,
    /// Letters per point; defaults to the depth where cylinders drop below
    /// `1e-12` of the domain.
    pub depth: Option<usize>,
    /// Alphabet truncation `M`. Setting it accepts whatever tail mass it
    /// leaves; otherwise the smallest `M` below `deficit_threshold` is used.
    pub truncation: Option<usize>,
    pub seed: u64,
    pub deficit_threshold: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            count: 100_000,
            depth: None,
            truncation: None,
            seed: 0x5eed,
            deficit_threshold: 1e-6,
        }
    }
}

/// Sorted sample of points with equal weights `1/N`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    points: Vec<f64>,
    pub seed: Option<u64>,
    pub depth: usize,
    pub truncation: Option<usize>,
    /// Mass left out by the truncation, `1 − Σ_{i≤M} p_i`.
    pub deficit: f64,
    /// Worst-case ratio between the sampled and the true cylinder masses.
    pub bias_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleManifest {
    pub count: usize,
    pub seed: Option<u64>,
    pub depth: usize,
    pub truncation: Option<usize>,
    pub deficit: f64,
    pub bias_bound: f64,
}

impl SampleSet {
    /// Wraps arbitrary points (sorted on the way in).
    pub fn from_points(mut points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySample);
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "sample points must be finite".into(),
            ));
        }
        points.sort_by(f64::total_cmp);
        Ok(SampleSet {
            points,
            seed: None,
            depth: 0,
            truncation: None,
            deficit: 0.0,
            bias_bound: 1.0,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().sum::<f64>() / self.len() as f64
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        (self.points.iter().map(|x| (x - m).powi(2)).sum::<f64>() / self.len() as f64).sqrt()
    }

    /// Fraction of points inside `[lo, hi]`.
    pub fn frequency(&self, lo: f64, hi: f64) -> f64 {
        let a = self.points.partition_point(|&x| x < lo);
        let b = self.points.partition_point(|&x| x <= hi);
        (b - a) as f64 / self.len() as f64
    }

    pub fn manifest(&self) -> SampleManifest {
        SampleManifest {
            count: self.len(),
            seed: self.seed,
            depth: self.depth,
            truncation: self.truncation,
            deficit: self.deficit,
            bias_bound: self.bias_bound,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 20 + 6);
        out.push_str("point\n");
        for x in &self.points {
            out.push_str(&format!("{x}\n"));
        }
        out
    }
}

/// How the next symbol is drawn.
enum Sampler {
    /// i.i.d. symbols from a cumulative distribution over `1..=M`.
    Iid { cdf: Vec<f64> },
    /// Symbol `i` after context `u` with weight `exp S_{ui}(z)`, `u` the last
    /// `WINDOW` letters.
    Windowed { z: f64 },
}

/// Draws `count` points `φ_{ω|d}(midpoint)` from `m_F`, or from `m_M` when a
/// truncation is set. Each chunk of points has its own ChaCha stream derived
/// from `(seed, chunk)` so results do not depend on the thread count.
pub fn sample_measure(
    system: &IfsSystem,
    family: &PotentialFamily,
    opts: &SampleOptions,
) -> Result<SampleSet> {
    family.check_compatible(system)?;
    if opts.count == 0 {
        return Err(Error::EmptySample);
    }
    if opts.depth == Some(0) || opts.truncation == Some(0) {
        return Err(Error::InvalidArgument(
            "depth and truncation must be at least 1".into(),
        ));
    }
    let (m, deficit) = match opts.truncation {
        Some(m) => (system.truncated_size(m), tail_deficit(system, family, m)?),
        None => auto_truncation(system, family, opts.deficit_threshold)?,
    };
    let maps = system.maps_upto(m);
    let depth = opts.depth.unwrap_or_else(|| default_depth(system));

    let constant: Option<Vec<f64>> = maps
        .iter()
        .enumerate()
        .map(|(k, map)| family.log_constant(k as u32 + 1, map))
        .collect();
    let (sampler, bias_bound) = match constant {
        Some(logs) => (
            Sampler::Iid {
                cdf: cdf_from_logs(&logs),
            },
            1.0,
        ),
        None => (
            Sampler::Windowed {
                z: system.domain().midpoint(),
            },
            family.ratio_constant(system),
        ),
    };
    let start = system.domain().midpoint();
    let chunks = opts.count.div_ceil(CHUNK);
    let mut points: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(chunk as u64);
            let len = CHUNK.min(opts.count - chunk * CHUNK);
            let mut word = vec![0usize; depth];
            (0..len)
                .map(|_| {
                    for k in 0..depth {
                        word[k] = match &sampler {
                            Sampler::Iid { cdf } => draw(cdf, rng.gen::<f64>()),
                            Sampler::Windowed { z } => windowed_draw(
                                family,
                                &maps,
                                &word[k.saturating_sub(WINDOW)..k],
                                *z,
                                &mut rng,
                            ),
                        };
                    }
                    word.iter().rev().fold(start, |x, &i| maps[i].eval(x))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    points.sort_by(f64::total_cmp);
    Ok(SampleSet {
        points,
        seed: Some(opts.seed),
        depth,
        truncation: system.is_infinite().then_some(m),
        deficit,
        bias_bound,
    })
}

/// `⌈log(ε / (D · diam X)) / log s⌉` with `ε = 1e-12`.
pub fn default_depth(system: &IfsSystem) -> usize {
    let target = 1e-12 / (system.eventual_factor() * system.domain().diam());
    (target.ln() / system.contraction().ln()).ceil().max(1.0) as usize
}

fn cdf_from_logs(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = logs
        .iter()
        .map(|l| {
            acc += (l - max).exp();
            acc
        })
        .collect();
    let total = acc;
    for c in &mut cdf {
        *c /= total;
    }
    cdf
}

fn draw(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn windowed_draw(
    family: &PotentialFamily,
    maps: &[ContractionMap],
    context: &[usize],
    z: f64,
    rng: &mut ChaCha8Rng,
) -> usize {
    let logs: Vec<f64> = maps
        .iter()
        .enumerate()
        .map(|(i, map)| {
            let mut y = z;
            let mut s = family.eval(i as u32 + 1, map, y);
            y = map.eval(y);
            for &j in context.iter().rev() {
                s += family.eval(j as u32 + 1, &maps[j], y);
                y = maps[j].eval(y);
            }
            s
        })
        .collect();
    draw(&cdf_from_logs(&logs), rng.gen::<f64>())
}

/// Relative mass of the symbols beyond `m`: `tail / (head + tail)`.
fn tail_deficit(system: &IfsSystem, family: &PotentialFamily, m: usize) -> Result<f64> {
    if !system.is_infinite() {
        return Ok(0.0);
    }
    let head: f64 = (1..=m as u32)
        .map(|i| family.symbol_norm(system, i))
        .sum::<Result<f64>>()?;
    let tail = family
        .tail_bracket(system, m, 1.0, 0.0)
        .map(|(_, hi)| hi)
        .ok_or(Error::MissingTail)?;
    Ok(if tail.is_finite() {
        tail / (head + tail)
    } else {
        1.0
    })
}

fn auto_truncation(
    system: &IfsSystem,
    family: &PotentialFamily,
    threshold: f64,
) -> Result<(usize, f64)> {
    if let Some(n) = system.size() {
        return Ok((n, 0.0));
    }
    // Doubling then bisection on the monotone deficit.
    let mut hi = 1;
    let mut d_hi = tail_deficit(system, family, hi)?;
    while d_hi >= threshold {
        if hi >= MAX_AUTO_TRUNCATION {
            return Err(Error::TruncationDeficit {
                deficit: d_hi,
                threshold,
            });
        }
        hi *= 2;
        d_hi = tail_deficit(system, family, hi)?;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let d = tail_deficit(system, family, mid)?;
        if d < threshold {
            hi = mid;
            d_hi = d;
        } else {
            lo = mid;
        }
    }
    Ok((hi, d_hi))
}

/// `ρ_r(A, B) = (∫_0^1 |F_A^{-1}(u) − F_B^{-1}(u)|^r du)^{1/r}`, the sorted
/// (quantile) coupling. Unequal sizes are handled exactly by walking the
/// merged quantile breakpoints `k / |A|` and `j / |B|`.
pub fn wasserstein_1d(r: f64, a: &SampleSet, b: &SampleSet) -> Result<f64> {
    wasserstein_sorted(r, a.points(), b.points())
}

/// As [`wasserstein_1d`] for already sorted slices.
pub fn wasserstein_sorted(r: f64, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "r must be positive, got {r}"
        )));
    }
    let cost = |x: f64, y: f64| (x - y).abs().powf(r);
    let total = if a.len() == b.len() {
        a.iter().zip(b).map(|(&x, &y)| cost(x, y)).sum::<f64>() / a.len() as f64
    } else {
        // Positions in units of 1 / (|A| |B|).
        let (na, nb) = (a.len() as u128, b.len() as u128);
        let (mut i, mut j, mut pos) = (0usize, 0usize, 0u128);
        let mut acc = 0.0;
        while i < a.len() && j < b.len() {
            let next = ((i as u128 + 1) * nb).min((j as u128 + 1) * na);
            acc += (next - pos) as f64 * cost(a[i], b[j]);
            pos = next;
            if pos == (i as u128 + 1) * nb {
                i += 1;
            }
            if pos == (j as u128 + 1) * na {
                j += 1;
            }
        }
        acc / (na * nb) as f64
    };
    Ok(total.powf(1.0 / r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs_model::{Interval, MapGenerator, Orientation};
    use proptest::prelude::*;

    fn cantor() -> (IfsSystem, PotentialFamily) {
        let sys = IfsSystem::finite(
            Interval::unit(),
            vec![
                ContractionMap::similarity(1.0 / 3.0, 0.0, Orientation::Preserving).unwrap(),
                ContractionMap::similarity(1.0 / 3.0, 2.0 / 3.0, Orientation::Preserving).unwrap(),
            ],
        )
        .unwrap();
        (sys, PotentialFamily::log_weights(vec![0.5, 0.5]).unwrap())
    }

    fn geometric() -> (IfsSystem, PotentialFamily) {
        let sys = IfsSystem::infinite(
            Interval::unit(),
            MapGenerator::Geometric { ratio: 1.0 / 3.0 },
            None,
        )
        .unwrap();
        (sys, PotentialFamily::geometric_weights(0.5).unwrap())
    }

    fn w(s: &[u32]) -> Word {
        Word::new(s.to_vec()).unwrap()
    }

    #[test]
    fn mass_examples() {
        let (e1, f1) = cantor();
        let m = cylinder_mass(&e1, &f1, &w(&[1, 2]), MassMode::F).unwrap();
        assert_eq!((m.lower, m.upper), (0.25, 0.25));

        let q = 2f64.ln() / 18f64.ln();
        let m = cylinder_mass(&e1, &f1, &w(&[1]), MassMode::Q { q, r: 2.0 }).unwrap();
        assert!((m.upper - 0.5).abs() < 1e-14);
        assert!(m.is_exact());

        let (e3, f3) = geometric();
        let m = cylinder_mass(&e3, &f3, &w(&[2]), MassMode::F).unwrap();
        assert!((m.upper - 0.25).abs() < 1e-15 && m.is_exact());

        assert!(cylinder_mass(&e1, &f1, &w(&[1]), MassMode::Q { q: 1.5, r: 2.0 }).is_err());
    }

    #[test]
    fn mq_masses_sum_to_one_at_the_fixed_point() {
        let (e1, _) = cantor();
        let f2 = PotentialFamily::log_weights(vec![0.7, 0.3]).unwrap();
        let sol = crate::pressure::solve_quantization_dim(
            &e1,
            &f2,
            2.0,
            crate::pressure::Truncation::Full,
            1e-12,
        )
        .unwrap();
        let total: f64 = [1, 2]
            .iter()
            .map(|&i| {
                cylinder_mass(&e1, &f2, &w(&[i]), MassMode::Q { q: sol.q_r, r: 2.0 })
                    .unwrap()
                    .upper
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn children_masses_are_additive() {
        let (e3, f3) = geometric();
        let m = 30;
        let deficit = 0.5f64.powi(m as i32);
        for parent in [w(&[1]), w(&[3, 1]), w(&[2, 2, 5])] {
            let pm = cylinder_mass(&e3, &f3, &parent, MassMode::F).unwrap();
            let sum: f64 = (1..=m as u32)
                .map(|i| {
                    cylinder_mass(&e3, &f3, &parent.child(i), MassMode::F)
                        .unwrap()
                        .upper
                })
                .sum();
            assert!(sum <= pm.upper * (1.0 + 1e-12));
            assert!(sum >= pm.lower * (1.0 - deficit) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn gauss_masses_bracket() {
        let g = IfsSystem::infinite(Interval::unit(), MapGenerator::Gauss, None).unwrap();
        let f = PotentialFamily::derivative(1.0).unwrap();
        let m = cylinder_mass(&g, &f, &w(&[2, 1]), MassMode::F).unwrap();
        assert!(m.lower > 0.0 && m.lower < m.upper && m.upper <= 1.0);
        assert!((m.upper / m.lower - f.ratio_constant(&g)).abs() < 1e-12);
    }

    #[test]
    fn cantor_sample_statistics() {
        let (e1, f1) = cantor();
        let opts = SampleOptions {
            count: 100_000,
            depth: Some(40),
            seed: 7,
            ..Default::default()
        };
        let s = sample_measure(&e1, &f1, &opts).unwrap();
        assert_eq!(s.len(), 100_000);
        assert!(s.points().windows(2).all(|p| p[0] <= p[1]));
        let n = s.len() as f64;
        let sigma = (1.0f64 / 8.0).sqrt();
        assert!((s.mean() - 0.5).abs() <= 3.0 * sigma / n.sqrt());
        let freq = s.frequency(2.0 / 9.0, 1.0 / 3.0);
        assert!((freq - 0.25).abs() <= 3.0 * (0.25f64 * 0.75 / n).sqrt());
        let again = sample_measure(&e1, &f1, &opts).unwrap();
        assert_eq!(s.points(), again.points());
    }

    #[test]
    fn truncation_defaults_and_override() {
        let (e3, f3) = geometric();
        let opts = SampleOptions {
            count: 1000,
            ..Default::default()
        };
        let s = sample_measure(&e3, &f3, &opts).unwrap();
        assert_eq!(s.truncation, Some(20));
        assert!(s.deficit < 1e-6 && s.deficit > 0.0);

        let s = sample_measure(
            &e3,
            &f3,
            &SampleOptions {
                truncation: Some(4),
                ..opts
            },
        )
        .unwrap();
        assert!((s.deficit - 1.0 / 16.0).abs() < 1e-12);
        assert!(s
            .points()
            .iter()
            .all(|&x| x <= 1.0 - 1.0 / 27.0 + 1.0 / 81.0 + 1e-12));

        // 1/M tail of the continued-fraction family never gets below 1e-6.
        let g = IfsSystem::infinite(Interval::unit(), MapGenerator::Gauss, None).unwrap();
        let fam = PotentialFamily::derivative(1.0).unwrap();
        assert!(matches!(
            sample_measure(&g, &fam, &opts),
            Err(Error::TruncationDeficit { .. })
        ));
        let s = sample_measure(
            &g,
            &fam,
            &SampleOptions {
                truncation: Some(8),
                count: 2000,
                ..opts
            },
        )
        .unwrap();
        assert!(s.bias_bound > 1.0);
        assert!(s.points().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn chunking_is_thread_independent() {
        let (e1, f1) = cantor();
        let opts = SampleOptions {
            count: 3 * CHUNK + 17,
            seed: 11,
            ..Default::default()
        };
        let a = sample_measure(&e1, &f1, &opts).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool.install(|| sample_measure(&e1, &f1, &opts).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn weak_convergence_of_truncations() {
        let (e3, f3) = geometric();
        let base = SampleOptions {
            count: 20_000,
            seed: 3,
            ..Default::default()
        };
        let full = sample_measure(&e3, &f3, &base).unwrap();
        let dists: Vec<f64> = [2, 4, 8, 16]
            .iter()
            .map(|&m| {
                let s = sample_measure(
                    &e3,
                    &f3,
                    &SampleOptions {
                        truncation: Some(m),
                        ..base
                    },
                )
                .unwrap();
                wasserstein_1d(2.0, &s, &full).unwrap()
            })
            .collect();
        assert!(dists.windows(2).all(|d| d[1] <= d[0]), "{dists:?}");
    }

    #[test]
    fn wasserstein_examples() {
        let a = SampleSet::from_points(vec![0.0, 1.0]).unwrap();
        let b = SampleSet::from_points(vec![0.25, 0.75]).unwrap();
        assert!((wasserstein_1d(2.0, &a, &b).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(wasserstein_1d(1.5, &a, &a).unwrap(), 0.0);
        let zeros = SampleSet::from_points(vec![0.0; 50]).unwrap();
        let ones = SampleSet::from_points(vec![1.0; 50]).unwrap();
        for r in [0.5, 1.0, 2.0, 3.0] {
            assert!((wasserstein_1d(r, &zeros, &ones).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!(SampleSet::from_points(vec![]).is_err());
    }

    #[test]
    fn unequal_sizes_use_exact_quantile_coupling() {
        // {0, 1} against {0, 0.5, 1}: quantile pieces of length 1/3, 1/6,
        // 1/6, 1/3 with gaps 0, 0.5, 0.5, 0.
        let a = [0.0, 1.0];
        let b = [0.0, 0.5, 1.0];
        let v = wasserstein_sorted(1.0, &a, &b).unwrap();
        assert!((v - (0.5 / 6.0 + 0.5 / 6.0)).abs() < 1e-15);
        // Replicating every point leaves the measure unchanged.
        let c: Vec<f64> = b.iter().flat_map(|&x| [x, x]).collect();
        assert_eq!(wasserstein_sorted(2.0, &b, &c).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn wasserstein_is_a_metric(
            a in prop::collection::vec(-5.0f64..5.0, 1..40),
            b in prop::collection::vec(-5.0f64..5.0, 1..40),
            c in prop::collection::vec(-5.0f64..5.0, 1..40),
            r in 1.0f64..4.0,
        ) {
            let (a, b, c) = (
                SampleSet::from_points(a).unwrap(),
                SampleSet::from_points(b).unwrap(),
                SampleSet::from_points(c).unwrap(),
            );
            let ab = wasserstein_1d(r, &a, &b).unwrap();
            let ba = wasserstein_1d(r, &b, &a).unwrap();
            let bc = wasserstein_1d(r, &b, &c).unwrap();
            let ac = wasserstein_1d(r, &a, &c).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!(wasserstein_1d(r, &a, &a).unwrap() == 0.0);
        }
    }
}
