use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::{preset, write_file, ExperimentConfig, HarnessError, RunOutput, Variant};
use crate::oracle::{bilevel_solution, tikhonov_point, OracleCache};

#[derive(Debug, Parser)]
#[command(name = "irpp", version, about = "Iteratively regularized push-pull simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shipped preset name.
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path),
            (None, Some(name)) => preset(name),
            (None, None) => Err(HarnessError::Config("either --config or --preset is required".into())),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its metrics CSV.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output path; defaults to the config's `output`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        /// Evaluate gradients on a pool of this many threads (0 = all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Run fixed-regularization push-pull from the `[baseline]` section.
        #[arg(long)]
        baseline: bool,
    },
    /// Print a preset as a TOML config.
    Show {
        /// Preset name.
        preset: String,
    },
    /// Check the mixing matrices against the standing assumptions.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// Centralized Tikhonov point `x*_λ`, or the bilevel solution for `λ = 0`.
    Oracle {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// JSON cache of oracle solutions.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Run the regularized and fixed-regularization variants side by side.
    Compare {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Entry point of the `irpp` binary. Returns the process exit code: 0 on
/// success, 1 on run or validation failure, 2 on usage errors.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                2
            } else {
                let _ = write!(out, "{rendered}");
                0
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn override_run(cfg: &mut ExperimentConfig, iterations: Option<usize>, stride: Option<usize>) {
    if let Some(k) = iterations {
        cfg.iterations = k;
    }
    if let Some(s) = stride {
        cfg.stride = s;
    }
}

fn with_threads<R: Send>(
    threads: Option<usize>,
    job: impl FnOnce(bool) -> Result<R, HarnessError> + Send,
) -> Result<R, HarnessError> {
    match threads {
        None => job(false),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
            pool.install(|| job(true))
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let stdout = Path::new("<stdout>");
    match command {
        Command::Run {
            source,
            out: path,
            iterations,
            stride,
            threads,
            baseline,
        } => {
            let mut cfg = source.load()?;
            override_run(&mut cfg, iterations, stride);
            let exp = cfg.build()?;
            let variant = if baseline { Variant::Fixed } else { Variant::Regularized };
            let result = with_threads(threads, |parallel| exp.run(variant, parallel))?;
            let bytes = result.to_csv()?;
            match path.or(cfg.output) {
                Some(p) => write_file(&p, &bytes)?,
                None => out.write_all(&bytes).map_err(io_err(stdout))?,
            }
            Ok(0)
        }
        Command::Show { preset: name } => {
            let cfg = preset(&name)?;
            out.write_all(cfg.to_toml().as_bytes()).map_err(io_err(stdout))?;
            Ok(0)
        }
        Command::Validate { source } => {
            let cfg = source.load()?;
            let (report, pair) = cfg.validate_graph()?;
            for c in &report.checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                writeln!(out, "{status} {}: {}", c.name, c.detail).map_err(io_err(stdout))?;
            }
            if let Some(pair) = pair {
                writeln!(out, "u = {}", pair.u).map_err(io_err(stdout))?;
                writeln!(out, "v = {}", pair.v).map_err(io_err(stdout))?;
                writeln!(out, "u^T v / m = {:e}", pair.u_dot_v() / pair.agents() as f64).map_err(io_err(stdout))?;
                let sched = cfg.build_schedule()?;
                sched.check_against(&pair)?;
                writeln!(out, "theta = {:e}", sched.effective_theta(&pair)).map_err(io_err(stdout))?;
            }
            Ok(if report.all_passed() { 0 } else { 1 })
        }
        Command::Oracle {
            source,
            lambda,
            tol,
            cache,
        } => {
            let cfg = source.load()?;
            let exp = cfg.build()?;
            let p = &exp.problem;
            let mut store = match &cache {
                Some(path) => OracleCache::open(path)?,
                None => OracleCache::in_memory(),
            };
            let sol = if lambda > 0.0 {
                store.get_or_compute(p, lambda, tol, || tikhonov_point(p, lambda, tol))?
            } else {
                store.get_or_compute(p, 0.0, tol, || bilevel_solution(p, tol))?
            };
            if cache.is_some() {
                store.save()?;
            }
            let x = sol.point();
            let w = |out: &mut dyn Write| -> std::io::Result<()> {
                writeln!(out, "# instance: {} fingerprint={}", p.name(), p.fingerprint())?;
                writeln!(out, "# lambda={:e} method={:?} residual={:e}", sol.lambda, sol.method, sol.residual)?;
                writeln!(out, "# f={:e} g={:e}", p.f(x.view()), p.g(x.view()))?;
                writeln!(out, "i,x")?;
                for (i, v) in x.iter().enumerate() {
                    writeln!(out, "{i},{v:e}")?;
                }
                Ok(())
            };
            w(out).map_err(io_err(stdout))?;
            Ok(0)
        }
        Command::Compare {
            source,
            out_dir,
            iterations,
            stride,
            threads,
        } => {
            let mut cfg = source.load()?;
            override_run(&mut cfg, iterations, stride);
            let exp = cfg.build()?;
            let (ir, fixed) = with_threads(threads, |parallel| {
                Ok((exp.run(Variant::Regularized, parallel)?, exp.run(Variant::Fixed, parallel)?))
            })?;
            let ir_path = out_dir.join(format!("{}-ir.csv", cfg.name));
            let fixed_path = out_dir.join(format!("{}-fixed.csv", cfg.name));
            let (ir_bytes, fixed_bytes) = (ir.to_csv()?, fixed.to_csv()?);
            write_file(&ir_path, &ir_bytes)?;
            write_file(&fixed_path, &fixed_bytes)?;
            write_comparison(out, &exp.problem, &ir, &fixed).map_err(io_err(stdout))?;
            writeln!(out, "wrote {} and {}", ir_path.display(), fixed_path.display()).map_err(io_err(stdout))?;
            Ok(0)
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into())
}

fn write_comparison(
    out: &mut dyn Write,
    p: &crate::problems::ProblemInstance,
    ir: &RunOutput,
    fixed: &RunOutput,
) -> std::io::Result<()> {
    let (a, b) = (ir.final_row(), fixed.final_row());
    writeln!(out, "{:<14} {:>16} {:>16}", "metric", "regularized", "fixed")?;
    let rows: [(&str, String, String); 7] = [
        ("k", a.k.to_string(), b.k.to_string()),
        ("f(xbar)", opt(Some(p.f(ir.xbar.view()))), opt(Some(p.f(fixed.xbar.view())))),
        ("g(xbar)", opt(Some(p.g(ir.xbar.view()))), opt(Some(p.g(fixed.xbar.view())))),
        ("dist_xstar", opt(a.dist_xstar), opt(b.dist_xstar)),
        ("subopt_f", opt(a.subopt_f), opt(b.subopt_f)),
        ("consensus_x", opt(Some(a.consensus_x)), opt(Some(b.consensus_x))),
        ("test_accuracy", opt(ir.test_accuracy), opt(fixed.test_accuracy)),
    ];
    for (name, x, y) in rows {
        writeln!(out, "{name:<14} {x:>16} {y:>16}")?;
    }
    Ok(())
}
