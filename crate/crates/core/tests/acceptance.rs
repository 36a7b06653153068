//! Acceptance suite: ten criteria, each checked at its stated tolerance and
//! runtime budget. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use confquant::config::presets;
use confquant::conformal_measure::{sample_measure, wasserstein_1d, SampleOptions, SampleSet};
use confquant::pressure::{
    beta_of_q, hausdorff_dim, pressure_word_sum, pressure_word_sum_with, solve_quantization_dim,
    truncation_sweep, unit_grid, PressureEvaluator, PressureOptions, Strategy, Thermodynamics,
    Truncation,
};
use confquant::quantization::{
    antichain_codebook, dimension_from_errors, lloyd_optimize, quant_error, Codebook, LloydOptions,
};
use confquant::{IfsSystem, PotentialFamily};

type Outcome = Result<String, String>;

const LOG2_LOG3: f64 = std::f64::consts::LN_2 / 1.098_612_288_668_109_8;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Oracle: `log Σ_{i≤M} p_i^q s_i^t` summed directly.
fn product_oracle(p: &[f64], s: &[f64], q: f64, t: f64) -> f64 {
    p.iter()
        .zip(s)
        .map(|(p, s)| p.powf(q) * s.powf(t))
        .sum::<f64>()
        .ln()
}

fn golden_q() -> f64 {
    ((5f64.sqrt() + 1.0) / 2.0).ln() / 18f64.ln()
}

fn c1_multiplicative_exactness() -> Outcome {
    let (e1, f1) = presets::cantor();
    let (e3, f3) = presets::geometric();
    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let e3p: Vec<f64> = (1..=50).map(|i| 0.5f64.powi(i)).collect();
    let e3s: Vec<f64> = (1..=50).map(|i| 3f64.powi(-i)).collect();
    let tree = PressureOptions {
        strategy: Strategy::Tree,
        ..PressureOptions::default()
    };
    let mut worst = 0.0f64;
    for &q in &grid {
        for &t in &grid {
            let o1 = product_oracle(&[0.5, 0.5], &[1.0 / 3.0, 1.0 / 3.0], q, t);
            let o3 = product_oracle(&e3p, &e3s, q, t);
            for n in 1..=6 {
                let v1 = pressure_word_sum(&e1, &f1, q, t, n, Truncation::Full)
                    .map_err(|e| e.to_string())?;
                let v3 = pressure_word_sum(&e3, &f3, q, t, n, Truncation::At(50))
                    .map_err(|e| e.to_string())?;
                // The word tree must reproduce the identity on E1 at every depth.
                let w1 = pressure_word_sum_with(&e1, &f1, q, t, n, Truncation::Full, &tree)
                    .map_err(|e| e.to_string())?;
                for (got, want) in [(v1, o1), (v3, o3), (w1, o1)] {
                    worst = worst.max((got - want).abs());
                }
            }
            for n in 1..=2 {
                let w3 = pressure_word_sum_with(&e3, &f3, q, t, n, Truncation::At(50), &tree)
                    .map_err(|e| e.to_string())?;
                worst = worst.max((w3 - o3).abs());
            }
        }
    }
    check!(worst <= 1e-12, "max deviation {worst:e} > 1e-12");
    Ok(format!("max deviation {worst:.1e}"))
}

fn c2_temperature_closed_form() -> Outcome {
    let (e1, f1) = presets::cantor();
    let mut worst = 0.0f64;
    for q in unit_grid(21) {
        let b = beta_of_q(&e1, &f1, q, Truncation::Full, 1e-12).map_err(|e| e.to_string())?;
        worst = worst.max((b - (1.0 - q) * LOG2_LOG3).abs());
    }
    check!(worst <= 1e-10, "beta deviation {worst:e}");
    let b1 = beta_of_q(&e1, &f1, 1.0, Truncation::Full, 1e-12).map_err(|e| e.to_string())?;
    check!(b1.abs() <= 1e-10, "beta(1) = {b1:e}");
    let b0 = beta_of_q(&e1, &f1, 0.0, Truncation::Full, 1e-12).map_err(|e| e.to_string())?;
    let dh = hausdorff_dim(&e1, &f1, Truncation::Full, 1e-12).map_err(|e| e.to_string())?;
    check!((b0 - dh).abs() <= 1e-10, "beta(0) - dim_H = {:e}", b0 - dh);
    Ok(format!(
        "max |beta - closed form| {worst:.1e}, beta(1) = {b1:.1e}"
    ))
}

fn c3_fixed_point() -> Outcome {
    let mut worst = 0.0f64;
    for (name, (sys, fam)) in [("E1", presets::cantor()), ("E3", presets::geometric())] {
        for r in [0.5, 1.0, 2.0, 3.0] {
            let s = solve_quantization_dim(&sys, &fam, r, Truncation::Full, 1e-10)
                .map_err(|e| format!("{name} r={r}: {e}"))?;
            check!(
                (s.kappa_r - LOG2_LOG3).abs() <= 1e-8 && (s.d_r - LOG2_LOG3).abs() <= 1e-8,
                "{name} r={r}: kappa {} D {}",
                s.kappa_r,
                s.d_r
            );
            check!(
                s.identity_residual <= 1e-10,
                "{name} r={r}: residual {:e}",
                s.identity_residual
            );
            worst = worst
                .max((s.kappa_r - LOG2_LOG3).abs())
                .max((s.d_r - LOG2_LOG3).abs());
        }
    }
    Ok(format!("max |kappa - log2/log3| {worst:.1e}"))
}

fn c4_truncation_sweep() -> Outcome {
    let (e3, f3) = presets::geometric();
    let ms = [1, 2, 3, 4, 6, 8, 12, 16, 20];
    let sweep = truncation_sweep(&e3, &f3, 2.0, &ms, &PressureOptions::default(), Some(1e-12))
        .map_err(|e| e.to_string())?;
    let k = |m: usize| sweep.rows.iter().find(|r| r.m == m).unwrap().kappa;
    check!(
        k(1) == 0.0 && sweep.rows[0].degenerate,
        "kappa_(2,1) = {}",
        k(1)
    );
    let q = golden_q();
    let want = 2.0 * q / (1.0 - q);
    check!(
        (k(2) - want).abs() <= 1e-8,
        "kappa_(2,2) = {} vs {want}",
        k(2)
    );
    check!(
        sweep.rows.windows(2).all(|w| w[1].kappa >= w[0].kappa),
        "sweep not nondecreasing"
    );
    // Full-system oracle: u / (1 − u) = 1 with u = 18^{−q}, so q = log 2 / log 18.
    let qf = 2f64.ln() / 18f64.ln();
    let full = 2.0 * qf / (1.0 - qf);
    check!((full - LOG2_LOG3).abs() < 1e-14, "oracle mismatch");
    check!(
        (k(20) - full).abs() <= 1e-3,
        "kappa_(2,20) = {} vs {full}",
        k(20)
    );
    Ok(format!(
        "kappa_(2,2) = {:.10}, kappa_(2,20) = {:.8}",
        k(2),
        k(20)
    ))
}

/// Oracle for the continued-fraction pair: `Z_n(t) = Σ_{ω ∈ {1,2}^n} q_n(ω)^{−2t}`
/// from continuants (`|φ′_ω(0)| = q_n^{−2}`), ratio estimates
/// `log Z_{n+1} − log Z_n` accelerated with Aitken's Δ², and bisection in `t`.
fn gauss_pair_oracle() -> f64 {
    const N0: usize = 13;
    fn continuants(depth: usize, q_prev: f64, q: f64, out: &mut Vec<Vec<f64>>) {
        if depth > 0 {
            out[depth - 1].push(q.ln());
        }
        if depth == out.len() {
            return;
        }
        for a in [1.0, 2.0] {
            continuants(depth + 1, q, a * q + q_prev, out);
        }
    }
    let mut logs = vec![Vec::new(); N0 + 3];
    continuants(0, 0.0, 1.0, &mut logs);
    let log_z = |n: usize, t: f64| -> f64 {
        let terms = &logs[n - 1];
        let max = terms
            .iter()
            .map(|l| -2.0 * t * l)
            .fold(f64::NEG_INFINITY, f64::max);
        max + terms
            .iter()
            .map(|l| (-2.0 * t * l - max).exp())
            .sum::<f64>()
            .ln()
    };
    let pressure = |t: f64| -> f64 {
        let r: Vec<f64> = (N0..N0 + 3)
            .map(|n| log_z(n + 1, t) - log_z(n, t))
            .collect();
        let d1 = r[1] - r[0];
        let d2 = r[2] - r[1];
        if (d2 - d1).abs() < 1e-300 {
            r[2]
        } else {
            r[2] - d2 * d2 / (d2 - d1)
        }
    };
    let (mut lo, mut hi) = (0.2, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if pressure(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn c5_continued_fraction() -> Outcome {
    let (g, fam) = presets::gauss_pair();
    let d = hausdorff_dim(&g, &fam, Truncation::Full, 1e-8).map_err(|e| e.to_string())?;
    let oracle = gauss_pair_oracle();
    check!(
        (oracle - 0.5313).abs() <= 1e-2,
        "oracle {oracle} far from 0.5313"
    );
    check!((d - oracle).abs() <= 1e-2, "dim_H {d} vs oracle {oracle}");
    check!((d - 0.5313).abs() <= 1e-2, "dim_H {d} vs 0.5313");
    Ok(format!("dim_H = {d:.6}, Aitken oracle = {oracle:.6}"))
}

fn cantor_sample(count: usize, seed: u64) -> Result<SampleSet, String> {
    let (e1, f1) = presets::cantor();
    sample_measure(
        &e1,
        &f1,
        &SampleOptions {
            count,
            seed,
            ..SampleOptions::default()
        },
    )
    .map_err(|e| e.to_string())
}

fn c6_quantizer_oracles() -> Outcome {
    let s = cantor_sample(200_000, 6)?;
    let opts = LloydOptions::default();
    let v1 = lloyd_optimize(&s, 1, 2.0, &opts)
        .map_err(|e| e.to_string())?
        .v_hat;
    let v2 = lloyd_optimize(&s, 2, 2.0, &opts)
        .map_err(|e| e.to_string())?
        .v_hat;
    // Oracles: Var = 1/8 for the Cantor measure; two cells of mass 1/2 with
    // variance (1/9)(1/8) each.
    check!((v1 / 0.125 - 1.0).abs() <= 0.04, "V1 = {v1}");
    check!((v2 * 72.0 - 1.0).abs() <= 0.10, "V2 = {v2}");
    let d = dimension_from_errors(&[1.0, 2.0], &[v1, v2], 2.0).map_err(|e| e.to_string())?;
    check!(
        (d / LOG2_LOG3 - 1.0).abs() <= 0.08,
        "two-point slope D = {d}"
    );
    Ok(format!("V1 = {v1:.5}, V2 = {v2:.6}, D = {d:.4}"))
}

/// Bisection oracle for `log(0.7^q + 0.3^q) = 2 q log 3`.
fn e2_kappa_oracle() -> f64 {
    let h = |q: f64| (0.7f64.powf(q) + 0.3f64.powf(q)).ln() - 2.0 * q * 3f64.ln();
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    2.0 * q / (1.0 - q)
}

fn c7_verify_dimension() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let system = dir.path().join("e2.json");
    std::fs::write(
        &system,
        r#"{"domain":[0,1],"kind":"similarity",
            "maps":[{"ratio":0.3333333333333333,"offset":0},{"ratio":0.3333333333333333,"offset":0.6666666666666666}],
            "potential":{"kind":"logweights","weights":[0.7,0.3]}}"#,
    )
    .map_err(|e| e.to_string())?;
    let report = dir.path().join("verify.json");
    let status = Command::new(env!("CARGO_BIN_EXE_confquant"))
        .args(["verify", "--system"])
        .arg(&system)
        .args([
            "--r",
            "2",
            "--n-list",
            "4,8,16,32,64,128,256,512",
            "--samples",
            "200000",
            "--out",
        ])
        .arg(&report)
        .status()
        .map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(&report).map_err(|e| e.to_string())?;
    let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let kappa = json["kappa_r"].as_f64().unwrap();
    let d_hat = json["D_hat"].as_f64().unwrap();
    let oracle = e2_kappa_oracle();
    check!(
        (kappa - oracle).abs() <= 1e-8,
        "kappa_2 {kappa} vs oracle {oracle}"
    );
    check!((oracle - 0.612).abs() <= 3e-3, "oracle {oracle} vs 0.612");
    let gap = (d_hat - oracle).abs() / oracle;
    check!(
        status.code() == Some(0),
        "verify exited with {:?}",
        status.code()
    );
    check!(gap <= 0.15, "relative gap {gap:.4} > 0.15 (D_hat {d_hat})");
    Ok(format!(
        "kappa_2 = {kappa:.6}, D_hat = {d_hat:.4}, gap = {:.2}%",
        100.0 * gap
    ))
}

fn c8_antichain_bound() -> Outcome {
    let (e1, f1) = presets::cantor();
    let s = cantor_sample(200_000, 8)?;
    let kappa = solve_quantization_dim(&e1, &f1, 2.0, Truncation::Full, 1e-10)
        .map_err(|e| e.to_string())?
        .kappa_r;
    let mut series = Vec::new();
    for k in 2..=8 {
        let n = 1usize << k;
        let res = antichain_codebook(&e1, &f1, 2.0, n, Truncation::Full, kappa)
            .map_err(|e| e.to_string())?;
        check!(
            res.cardinality <= n,
            "Card(Gamma_{n}) = {}",
            res.cardinality
        );
        let v = quant_error(&s, &res.codebook, 2.0).map_err(|e| e.to_string())?;
        series.push(n as f64 * v.powf(kappa / 2.0));
    }
    let max = series.iter().copied().fold(f64::MIN, f64::max);
    let min = series.iter().copied().fold(f64::MAX, f64::min);
    check!(max / min <= 50.0, "max/min = {}", max / min);
    Ok(format!(
        "n V^(kappa/r) in [{min:.4}, {max:.4}], ratio {:.3}",
        max / min
    ))
}

/// Standard error of `ρ = sqrt(mean d²)` for the sorted coupling.
fn rho_sigma(a: &[f64], b: &[f64], rho: f64) -> f64 {
    let n = a.len() as f64;
    let d2: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).collect();
    let m = d2.iter().sum::<f64>() / n;
    let sd = (d2.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if rho > 0.0 {
        sd / (2.0 * rho * n.sqrt())
    } else {
        0.0
    }
}

/// Standard error of `e = V^{1/2}` for a fixed codebook.
fn e_sigma(s: &SampleSet, cb: &Codebook) -> f64 {
    let c = cb.points();
    let errs: Vec<f64> = s
        .points()
        .iter()
        .map(|x| {
            c.iter()
                .map(|y| (x - y).powi(2))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let n = errs.len() as f64;
    let m = errs.iter().sum::<f64>() / n;
    let sd = (errs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    sd / (2.0 * m.sqrt() * n.sqrt())
}

fn c9_measure_convergence() -> Outcome {
    let (e3, f3) = presets::geometric();
    let base = SampleOptions {
        count: 50_000,
        seed: 9,
        ..SampleOptions::default()
    };
    let full = sample_measure(&e3, &f3, &base).map_err(|e| e.to_string())?;
    let mut prev: Option<(f64, f64)> = None;
    let mut rhos = Vec::new();
    let mut worst_gap = f64::NEG_INFINITY;
    for m in [2, 4, 8, 16] {
        let s = sample_measure(
            &e3,
            &f3,
            &SampleOptions {
                truncation: Some(m),
                ..base
            },
        )
        .map_err(|e| e.to_string())?;
        let rho = wasserstein_1d(2.0, &s, &full).map_err(|e| e.to_string())?;
        let sigma = rho_sigma(s.points(), full.points(), rho);
        if let Some((rp, sp)) = prev {
            check!(
                rho <= rp + 3.0 * (sigma * sigma + sp * sp).sqrt(),
                "rho_2 increased at M={m}: {rho} > {rp}"
            );
        }
        prev = Some((rho, sigma));
        rhos.push(rho);
        for n in [4, 16, 64] {
            let opts = LloydOptions {
                restarts: 4,
                ..LloydOptions::default()
            };
            let a = lloyd_optimize(&s, n, 2.0, &opts).map_err(|e| e.to_string())?;
            let b = lloyd_optimize(&full, n, 2.0, &opts).map_err(|e| e.to_string())?;
            let tol = rho
                + 3.0
                    * (e_sigma(&s, &a.codebook).powi(2) + e_sigma(&full, &b.codebook).powi(2))
                        .sqrt();
            let diff = (a.e_hat - b.e_hat).abs();
            worst_gap = worst_gap.max(diff - tol);
            check!(diff <= tol, "M={m} n={n}: |e_M - e_F| = {diff} > {tol}");
        }
    }
    Ok(format!(
        "rho_2 over M=2,4,8,16: {}; max slack use {worst_gap:.2e}",
        rhos.iter()
            .map(|r| format!("{r:.2e}"))
            .collect::<Vec<_>>()
            .join(", ")
    ))
}

fn second_differences_ok(
    sys: &IfsSystem,
    fam: &PotentialFamily,
    t: Truncation,
) -> Result<f64, String> {
    let th =
        Thermodynamics::new(sys, fam, t, &PressureOptions::default()).map_err(|e| e.to_string())?;
    let sample = th.beta_grid(&unit_grid(21)).map_err(|e| e.to_string())?;
    check!(sample.strictly_decreasing, "beta not strictly decreasing");
    let min = sample
        .points
        .windows(3)
        .map(|w| w[2].1 - 2.0 * w[1].1 + w[0].1)
        .fold(f64::INFINITY, f64::min);
    check!(min >= -1e-8, "second difference {min:e}");
    Ok(min)
}

fn c10_convexity_monotonicity() -> Outcome {
    let (e1, f1) = presets::cantor();
    let (e2, f2) = presets::biased_cantor();
    let (e3, f3) = presets::geometric();
    let (g, fg) = presets::gauss_pair();
    let gauss = presets::gauss();
    let normalize = |sys: &IfsSystem, fam: &PotentialFamily, t| {
        confquant::potentials::normalize_pressure(fam, sys, 8, t)
            .map(|(f, _)| f)
            .map_err(|e| e.to_string())
    };
    let fg = normalize(&g, &fg, Truncation::Full)?;
    let mut worst = f64::INFINITY;
    for (sys, fam, t) in [
        (&e1, &f1, Truncation::Full),
        (&e2, &f2, Truncation::Full),
        (&e3, &f3, Truncation::Full),
        (&e3, &f3, Truncation::At(5)),
        (&g, &fg, Truncation::Full),
    ] {
        worst = worst.min(second_differences_ok(sys, fam, t)?);
    }

    // Strict decrease in t wherever P is finite.
    let ts: Vec<f64> = (0..=20).map(|k| -0.5 + 0.1 * k as f64).collect();
    for (sys, fam, t) in [
        (&e2, &f2, Truncation::Full),
        (&e3, &f3, Truncation::Full),
        (&g, &fg, Truncation::Full),
    ] {
        let ev = PressureEvaluator::new(sys, fam, t, &PressureOptions::default())
            .map_err(|e| e.to_string())?;
        for q in [0.0, 0.3, 0.7, 1.0] {
            let vals: Vec<f64> = ts
                .iter()
                .map(|&t| ev.value(q, t))
                .filter(|v| v.is_finite())
                .collect();
            check!(vals.len() >= 2, "too few finite values");
            check!(
                vals.windows(2).all(|w| w[1] < w[0]),
                "P not strictly decreasing at q={q}"
            );
        }
    }

    // P_M ≤ P_{M+1} ≤ P on sampled grids.
    let qs = [0.0, 0.25, 0.5, 0.75, 1.0];
    let tgrid = [0.1, 0.4, 0.7, 1.0];
    let full =
        PressureEvaluator::new(&e3, &f3, Truncation::Full, &PressureOptions::default()).unwrap();
    let mut prev: Option<PressureEvaluator> = None;
    for m in 1..=30 {
        let ev = PressureEvaluator::new(&e3, &f3, Truncation::At(m), &PressureOptions::default())
            .unwrap();
        for &q in &qs {
            for &t in &tgrid {
                let v = ev.value(q, t);
                check!(v <= full.value(q, t) + 1e-15, "P_{m} > P at ({q},{t})");
                if let Some(p) = &prev {
                    check!(
                        p.value(q, t) <= v + 1e-15,
                        "P_{} > P_{m} at ({q},{t})",
                        m - 1
                    );
                }
            }
        }
        prev = Some(ev);
    }
    let opts = PressureOptions {
        depth: 3,
        ..PressureOptions::default()
    };
    let mut prev: Option<PressureEvaluator> = None;
    for m in 1..=6 {
        let ev = PressureEvaluator::new(&gauss.0, &gauss.1, Truncation::At(m), &opts)
            .map_err(|e| e.to_string())?;
        if let Some(p) = &prev {
            for &q in &qs {
                for &t in &[0.6, 0.8, 1.0, 1.5] {
                    check!(
                        p.value(q, t) <= ev.value(q, t) + 1e-12,
                        "Gauss P_{} > P_{m} at ({q},{t})",
                        m - 1
                    );
                }
            }
        }
        prev = Some(ev);
    }
    Ok(format!("min beta second difference {worst:.2e}"))
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "multiplicative exactness",
            budget: Duration::from_secs(1),
            run: c1_multiplicative_exactness,
        },
        Criterion {
            id: 2,
            name: "temperature closed form",
            budget: Duration::from_secs(1),
            run: c2_temperature_closed_form,
        },
        Criterion {
            id: 3,
            name: "fixed point",
            budget: Duration::from_secs(5),
            run: c3_fixed_point,
        },
        Criterion {
            id: 4,
            name: "truncation sweep",
            budget: Duration::from_secs(10),
            run: c4_truncation_sweep,
        },
        Criterion {
            id: 5,
            name: "continued-fraction cross-check",
            budget: Duration::from_secs(10),
            run: c5_continued_fraction,
        },
        Criterion {
            id: 6,
            name: "quantizer oracles",
            budget: Duration::from_secs(30),
            run: c6_quantizer_oracles,
        },
        Criterion {
            id: 7,
            name: "verify dimension estimate",
            budget: Duration::from_secs(120),
            run: c7_verify_dimension,
        },
        Criterion {
            id: 8,
            name: "antichain bound",
            budget: Duration::from_secs(60),
            run: c8_antichain_bound,
        },
        Criterion {
            id: 9,
            name: "measure-convergence invariants",
            budget: Duration::from_secs(60),
            run: c9_measure_convergence,
        },
        Criterion {
            id: 10,
            name: "convexity/monotonicity suite",
            budget: Duration::from_secs(5),
            run: c10_convexity_monotonicity,
        },
    ];
    let filter: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| filter.is_empty() || filter.contains(&c.id))
    {
        let start = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => {
                Err(format!("{detail}; over budget {:?}", c.budget))
            }
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if outcome.is_err() {
            failed += 1;
        }
        println!(
            "criterion {:>2} {tag} {} ({:.2}s): {detail}",
            c.id,
            c.name,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all criteria passed");
        ExitCode::SUCCESS
    }
}
