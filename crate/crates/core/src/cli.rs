//! Command-line driver: parses a system file, runs one computation and writes
//! CSV or JSON artifacts. Exit codes: 0 success, 1 malformed input,
//! 2 numerical failure, 3 verification gap above tolerance.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::config::{load_system, LoadedSystem};
use crate::conformal_measure::{sample_measure, SampleOptions};
use crate::error::{Error, Result};
use crate::potentials::normalize_pressure;
use crate::pressure::{unit_grid, PressureEvaluator, PressureOptions, Thermodynamics, Truncation};
use crate::quantization::{estimate_dr, lloyd_optimize, LloydOptions};

pub const DEFAULT_SEED: u64 = 20_240_601;
const DEFAULT_SAMPLES: usize = 200_000;
const DEFAULT_VERIFY_TOL: f64 = 0.15;
const DEFAULT_TRUNCATION: usize = 20;
const GRID_POINTS: usize = 21;
/// Word budget for depth-limited normalization sums.
const NORMALIZE_WORDS: f64 = (1u64 << 24) as f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    Pressure,
    Beta,
    Qdim,
    Dimh,
    Sweep,
    Sample,
    Quantize,
    Verify,
    Figure1,
}

#[derive(Debug, Parser)]
#[command(
    name = "confquant",
    version,
    about = "Quantization dimension of conformal IFS measures"
)]
pub struct CommandSpec {
    #[arg(value_enum)]
    pub subcommand: Subcommand,
    /// System specification (JSON).
    #[arg(long)]
    pub system: PathBuf,
    /// Output file; CSV outputs also get a `<out>.json` sidecar.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Temperature variable q.
    #[arg(long, allow_negative_numbers = true)]
    pub q: Option<f64>,
    /// Geometric exponent t.
    #[arg(long, allow_negative_numbers = true)]
    pub t: Option<f64>,
    /// Quantization order r > 0.
    #[arg(long)]
    pub r: Option<f64>,
    /// Codebook sizes, comma-separated.
    #[arg(long = "n-list", value_delimiter = ',')]
    pub n_list: Vec<usize>,
    /// Truncation levels for `sweep`; a single value elsewhere truncates the system.
    #[arg(long = "m-list", value_delimiter = ',')]
    pub m_list: Vec<usize>,
    /// Word depth for pressure estimates.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Number of sample points.
    #[arg(long)]
    pub samples: Option<usize>,
    /// RNG seed.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Solver tolerance; for `verify`, the allowed relative gap.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let spec = match CommandSpec::try_parse_from(args) {
        Ok(spec) => spec,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    run_command(&spec)
}

pub fn run_command(spec: &CommandSpec) -> i32 {
    let outcome = match spec.threads {
        Some(0) => Err(Error::InvalidArgument(
            "--threads must be at least 1".into(),
        )),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(spec)),
            Err(e) => Err(Error::InvalidArgument(e.to_string())),
        },
        None => execute(spec),
    };
    match outcome {
        Ok(Status::Ok) => 0,
        Ok(Status::Gap) => 3,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

enum Status {
    Ok,
    Gap,
}

fn require<T: Copy>(value: Option<T>, flag: &str, cmd: Subcommand) -> Result<T> {
    value.ok_or_else(|| Error::InvalidArgument(format!("{cmd:?} needs --{flag}").to_lowercase()))
}

fn validate(spec: &CommandSpec) -> Result<()> {
    use Subcommand::*;
    let cmd = spec.subcommand;
    match cmd {
        Pressure => {
            require(spec.q, "q", cmd)?;
            require(spec.t, "t", cmd)?;
        }
        Qdim | Figure1 => {
            require(spec.r, "r", cmd)?;
        }
        Sweep => {
            require(spec.r, "r", cmd)?;
            if spec.m_list.is_empty() {
                return Err(Error::InvalidArgument("sweep needs --m-list".into()));
            }
        }
        Quantize | Verify => {
            require(spec.r, "r", cmd)?;
            if spec.n_list.is_empty() {
                return Err(Error::InvalidArgument(
                    format!("{cmd:?} needs --n-list").to_lowercase(),
                ));
            }
        }
        Beta | Dimh | Sample => {}
    }
    if let Some(r) = spec.r {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "--r must be positive, got {r}"
            )));
        }
    }
    if let Some(tol) = spec.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "--tol must be positive, got {tol}"
            )));
        }
    }
    if spec.n_list.contains(&0)
        || spec.m_list.contains(&0)
        || spec.depth == Some(0)
        || spec.samples == Some(0)
    {
        return Err(Error::InvalidArgument(
            "list entries, --depth and --samples must be positive".into(),
        ));
    }
    if cmd != Sweep && spec.m_list.len() > 1 {
        return Err(Error::InvalidArgument(
            "--m-list takes a single truncation outside sweep".into(),
        ));
    }
    Ok(())
}

/// Normalized family, truncation and thermodynamics for the loaded system.
struct Context {
    loaded: LoadedSystem,
    truncation: Truncation,
    shift: f64,
    opts: PressureOptions,
}

impl Context {
    fn new(spec: &CommandSpec) -> Result<Self> {
        let loaded = load_system(&spec.system)?;
        let opts = PressureOptions {
            depth: spec.depth.unwrap_or(PressureOptions::default().depth),
            ..PressureOptions::default()
        };
        let truncation = match spec.m_list.first() {
            Some(&m) if spec.subcommand != Subcommand::Sweep => Truncation::At(m),
            _ => match PressureEvaluator::new(
                &loaded.system,
                &loaded.family,
                Truncation::Full,
                &opts,
            ) {
                Ok(_) => Truncation::Full,
                Err(Error::TruncationRequired) => Truncation::At(DEFAULT_TRUNCATION),
                Err(e) => return Err(e),
            },
        };
        let k = match truncation {
            Truncation::At(m) => loaded.system.truncated_size(m),
            Truncation::Full => loaded.system.size().unwrap_or(DEFAULT_TRUNCATION),
        };
        let budget_depth = (NORMALIZE_WORDS.ln() / (k.max(2) as f64).ln()).floor() as usize;
        let norm_depth = opts.depth.min(budget_depth).max(1);
        let norm_truncation = match (truncation, loaded.system.is_infinite()) {
            (Truncation::Full, true) if !loaded.family.is_multiplicative(&loaded.system) => {
                Truncation::At(DEFAULT_TRUNCATION)
            }
            _ => truncation,
        };
        let (family, report) =
            normalize_pressure(&loaded.family, &loaded.system, norm_depth, norm_truncation)?;
        Ok(Context {
            loaded: LoadedSystem { family, ..loaded },
            truncation,
            shift: report.shift,
            opts,
        })
    }

    fn thermo(&self, truncation: Truncation, tol: Option<f64>) -> Result<Thermodynamics> {
        let th = Thermodynamics::new(
            &self.loaded.system,
            &self.loaded.family,
            truncation,
            &self.opts,
        )?;
        Ok(match tol {
            Some(t) => th.with_tolerance(t),
            None => th,
        })
    }

    fn truncation_field(&self) -> serde_json::Value {
        truncation_json(self.truncation)
    }
}

fn truncation_json(t: Truncation) -> serde_json::Value {
    match t {
        Truncation::Full => json!("full"),
        Truncation::At(m) => json!(m),
    }
}

fn execute(spec: &CommandSpec) -> Result<Status> {
    validate(spec)?;
    let ctx = Context::new(spec)?;
    let digest = ctx.loaded.digest.clone();
    let mut header = json!({
        "command": format!("{:?}", spec.subcommand).to_lowercase(),
        "digest": digest,
        "seed": spec.seed,
        "truncation": ctx.truncation_field(),
        "normalization_shift": ctx.shift,
    });
    match spec.subcommand {
        Subcommand::Pressure => {
            let (q, t) = (spec.q.unwrap(), spec.t.unwrap());
            let ev = PressureEvaluator::new(
                &ctx.loaded.system,
                &ctx.loaded.family,
                ctx.truncation,
                &ctx.opts,
            )?;
            let est = ev.estimate(q, t);
            merge(
                &mut header,
                json!({
                    "q": q,
                    "t": t,
                    "pressure": finite_or_string(est.value),
                    "per_depth": est.per_depth.iter().map(|v| finite_or_string(*v)).collect::<Vec<_>>(),
                    "depths": est.depths,
                    "error_indicator": finite_or_string(est.error_indicator),
                    "finite": est.finite,
                    "exact": ev.is_exact(),
                    "tail_bound": est.tail_bound,
                }),
            );
            emit_json(spec.out.as_deref(), &header)?;
        }
        Subcommand::Beta => {
            let th = ctx.thermo(ctx.truncation, spec.tol)?;
            match spec.q {
                Some(q) => {
                    let beta = th.beta(q)?;
                    merge(
                        &mut header,
                        json!({"q": q, "beta": beta, "tolerance": th.tolerance()}),
                    );
                    emit_json(spec.out.as_deref(), &header)?;
                }
                None => {
                    let sample = th.beta_grid(&unit_grid(GRID_POINTS))?;
                    let mut csv = String::from("q,beta_q\n");
                    for (q, b) in &sample.points {
                        writeln!(csv, "{q},{b}").unwrap();
                    }
                    merge(
                        &mut header,
                        json!({
                            "tolerance": th.tolerance(),
                            "convexity_defect": sample.convexity_defect,
                            "strictly_decreasing": sample.strictly_decreasing,
                        }),
                    );
                    emit_csv(spec.out.as_deref(), &csv, &header)?;
                }
            }
        }
        Subcommand::Qdim => {
            let th = ctx.thermo(ctx.truncation, spec.tol)?;
            let sol = th.solve(spec.r.unwrap())?;
            merge(
                &mut header,
                json!({
                    "r": sol.r,
                    "q_r": sol.q_r,
                    "kappa_r": sol.kappa_r,
                    "D_r": sol.d_r,
                    "beta_q_r": sol.beta_q_r,
                    "identity_residual": sol.identity_residual,
                    "tolerance": sol.tolerance,
                    "bisection_steps": sol.trace.len(),
                }),
            );
            emit_json(spec.out.as_deref(), &header)?;
        }
        Subcommand::Dimh => {
            let th = ctx.thermo(ctx.truncation, spec.tol)?;
            let d = th.hausdorff_dim()?;
            merge(
                &mut header,
                json!({"dim_h": d, "tolerance": th.tolerance()}),
            );
            emit_json(spec.out.as_deref(), &header)?;
        }
        Subcommand::Sweep => {
            if !ctx.loaded.system.is_infinite() {
                return Err(Error::InvalidArgument(
                    "sweep needs an infinite alphabet".into(),
                ));
            }
            let sweep = crate::pressure::truncation_sweep(
                &ctx.loaded.system,
                &ctx.loaded.family,
                spec.r.unwrap(),
                &spec.m_list,
                &ctx.opts,
                spec.tol,
            )?;
            let mut csv = String::from("M,kappa_rM\n");
            for row in &sweep.rows {
                writeln!(csv, "{},{}", row.m, row.kappa).unwrap();
            }
            merge(
                &mut header,
                json!({
                    "r": sweep.r,
                    "rows": sweep.rows,
                    "full_kappa": sweep.full_kappa,
                    "gap": sweep.gap,
                    "monotone": sweep.monotone,
                    "tolerance": spec.tol,
                }),
            );
            emit_csv(spec.out.as_deref(), &csv, &header)?;
        }
        Subcommand::Sample => {
            let set = sample_measure(
                &ctx.loaded.system,
                &ctx.loaded.family,
                &sample_options(spec),
            )?;
            merge(&mut header, serde_json::to_value(set.manifest())?);
            emit_csv(spec.out.as_deref(), &set.to_csv(), &header)?;
        }
        Subcommand::Quantize => {
            let r = spec.r.unwrap();
            let set = sample_measure(
                &ctx.loaded.system,
                &ctx.loaded.family,
                &sample_options(spec),
            )?;
            let runs = quantize_all(&set, &spec.n_list, r, spec.seed)?;
            let ns: Vec<f64> = runs.iter().map(|run| run.n as f64).collect();
            let vs: Vec<f64> = runs.iter().map(|run| run.v_hat).collect();
            let mut csv = String::from("n,r,V_hat,e_hat,D_running\n");
            for (k, run) in runs.iter().enumerate() {
                let d = if k == 0 {
                    String::new()
                } else {
                    crate::quantization::dimension_from_errors(&ns[..=k], &vs[..=k], r)
                        .map(|d| d.to_string())
                        .unwrap_or_default()
                };
                writeln!(csv, "{},{},{},{},{}", run.n, r, run.v_hat, run.e_hat, d).unwrap();
            }
            merge(
                &mut header,
                json!({
                    "sample": set.manifest(),
                    "runs": runs.iter().map(|run| json!({
                        "n": run.n,
                        "v_hat": run.v_hat,
                        "iterations": run.iterations,
                        "converged": run.converged,
                        "seed": run.seed,
                        "restarts": run.restart_traces,
                    })).collect::<Vec<_>>(),
                }),
            );
            emit_csv(spec.out.as_deref(), &csv, &header)?;
        }
        Subcommand::Verify => {
            let r = spec.r.unwrap();
            let tolerance = spec.tol.unwrap_or(DEFAULT_VERIFY_TOL);
            let sol = ctx.thermo(ctx.truncation, None)?.solve(r)?;
            let set = sample_measure(
                &ctx.loaded.system,
                &ctx.loaded.family,
                &sample_options(spec),
            )?;
            let runs = quantize_all(&set, &spec.n_list, r, spec.seed)?;
            let est = estimate_dr(&runs, sol.kappa_r)?;
            let gap = (est.d_hat - sol.kappa_r).abs() / sol.kappa_r;
            let pass = gap <= tolerance;
            merge(
                &mut header,
                json!({
                    "r": r,
                    "kappa_r": sol.kappa_r,
                    "q_r": sol.q_r,
                    "D_hat": est.d_hat,
                    "relative_gap": gap,
                    "tolerance": tolerance,
                    "solver_tolerance": sol.tolerance,
                    "pass": pass,
                    "sample": set.manifest(),
                    "n_list": runs.iter().map(|run| run.n).collect::<Vec<_>>(),
                    "V_hat": runs.iter().map(|run| run.v_hat).collect::<Vec<_>>(),
                    "D_running": est.running,
                    "coefficients": est.coefficients,
                }),
            );
            emit_json(spec.out.as_deref(), &header)?;
            if !pass {
                return Ok(Status::Gap);
            }
        }
        Subcommand::Figure1 => {
            let th = ctx.thermo(ctx.truncation, spec.tol)?;
            let fig = th.figure(spec.r.unwrap(), &unit_grid(GRID_POINTS))?;
            let mut csv = String::from("q,beta,line,legendre_alpha,legendre_f\n");
            for row in &fig.rows {
                writeln!(
                    csv,
                    "{},{},{},{},{}",
                    row.q, row.beta, row.line, row.legendre_alpha, row.legendre_f
                )
                .unwrap();
            }
            merge(
                &mut header,
                json!({
                    "r": fig.r,
                    "intersection": [fig.intersection.0, fig.intersection.1],
                    "intercept": fig.intercept,
                    "D_r": fig.d_r,
                    "tolerance": th.tolerance(),
                }),
            );
            emit_csv(spec.out.as_deref(), &csv, &header)?;
        }
    }
    Ok(Status::Ok)
}

fn sample_options(spec: &CommandSpec) -> SampleOptions {
    SampleOptions {
        count: spec.samples.unwrap_or(DEFAULT_SAMPLES),
        depth: None,
        truncation: spec.m_list.first().copied(),
        seed: spec.seed,
        ..SampleOptions::default()
    }
}

fn quantize_all(
    set: &crate::conformal_measure::SampleSet,
    n_list: &[usize],
    r: f64,
    seed: u64,
) -> Result<Vec<crate::quantization::QuantizationRun>> {
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    ns.iter()
        .map(|&n| {
            lloyd_optimize(
                set,
                n,
                r,
                &LloydOptions {
                    seed: seed ^ n as u64,
                    ..LloydOptions::default()
                },
            )
        })
        .collect()
}

fn finite_or_string(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn merge(target: &mut serde_json::Value, extra: serde_json::Value) {
    if let (Some(t), serde_json::Value::Object(e)) = (target.as_object_mut(), extra) {
        t.extend(e);
    }
}

fn to_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn emit_json(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = to_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Writes the CSV and a JSON sidecar at `<out>.json`; without `--out` the CSV
/// goes to stdout and the sidecar is dropped.
fn emit_csv(out: Option<&Path>, csv: &str, sidecar: &serde_json::Value) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, csv)?;
            let mut side = path.as_os_str().to_owned();
            side.push(".json");
            std::fs::write(PathBuf::from(side), to_pretty(sidecar)?)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags() {
        let spec = CommandSpec::try_parse_from([
            "confquant",
            "sweep",
            "--system",
            "s.json",
            "--r",
            "2",
            "--m-list",
            "1,2,4",
            "--q",
            "-0.5",
        ])
        .unwrap();
        assert_eq!(spec.subcommand, Subcommand::Sweep);
        assert_eq!(spec.m_list, vec![1, 2, 4]);
        assert_eq!(spec.q, Some(-0.5));
        assert_eq!(spec.seed, DEFAULT_SEED);
        assert!(CommandSpec::try_parse_from(["confquant", "bogus", "--system", "s.json"]).is_err());
    }

    #[test]
    fn required_flags_are_checked_first() {
        let spec =
            CommandSpec::try_parse_from(["confquant", "qdim", "--system", "/nonexistent.json"])
                .unwrap();
        assert!(matches!(validate(&spec), Err(Error::InvalidArgument(_))));
        let spec =
            CommandSpec::try_parse_from(["confquant", "verify", "--system", "x", "--r", "2"])
                .unwrap();
        assert!(validate(&spec).is_err());
        let spec =
            CommandSpec::try_parse_from(["confquant", "beta", "--system", "x", "--m-list", "2,3"])
                .unwrap();
        assert!(validate(&spec).is_err());
    }
}
