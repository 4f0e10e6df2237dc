//! `llg`: command-line driver for the constructive LLG solver.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure or no
//! convergence within `max_iter`, 3 divergence detected (record still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use llg_core::experiment::{cmd_compare, cmd_mms, cmd_norms, cmd_run, cmd_sweep, is_numerical, RunConfig};
use llg_core::iterate::Status;
use llg_core::Error;

#[derive(Parser)]
#[command(name = "llg", version, about = "Constructive fixed-point solver for the LLG equation")]
struct Cli {
    /// worker threads (defaults to all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// suppress the summary on stdout
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// output directory (overrides `output_dir` in the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// overrides `seed` in the config
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// iterate to a solution and write a run record
    Run(RunArgs),
    /// heat-solver convergence study on a manufactured solution
    Mms(RunArgs),
    /// run the `[sweep]` matrix of the config
    Sweep(RunArgs),
    /// diff two run records
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// write compare.json here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// H^{k,2k} norm report of a space-time snapshot
    Norms {
        snapshot: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// write norms.json and norms.csv here
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if is_numerical(&e) {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

fn load(args: &RunArgs, sub: &str) -> Result<(RunConfig, PathBuf), Failure> {
    let mut cfg = RunConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.validate()?;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| default_out(&args.config, sub));
    Ok((cfg, out))
}

fn default_out(config: &Path, sub: &str) -> PathBuf {
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    PathBuf::from("runs").join(format!("{stem}-{sub}"))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new("."))).map_err(Error::from)?;
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text + "\n").map_err(Error::from)?;
    Ok(())
}

fn execute(cli: &Cli) -> Result<u8, Failure> {
    let say = |s: String| {
        if !cli.quiet {
            println!("{s}");
        }
    };
    match &cli.cmd {
        Cmd::Run(args) => {
            let (cfg, out) = load(args, "run")?;
            let rec = cmd_run(&cfg, Some(&out))?;
            let r = &rec.report;
            for row in &rec.rows {
                say(format!(
                    "l={:>2}  r={:.3e}  R={:.3e}  q={}",
                    row.ell,
                    row.r_norm,
                    row.big_r_norm,
                    row.q.map(|q| format!("{q:.4}")).unwrap_or_else(|| "-".into())
                ));
            }
            say(format!(
                "status {:?} after {} iterations; residual {:.3e}; modulus dev {:.3e}; smoothness ratio {:.4}{}",
                r.status,
                r.iterations,
                r.final_residual_norm,
                r.verification.modulus_dev,
                r.verification.smoothness_ratio,
                r.verification.oracle_linf.map(|g| format!("; oracle gap {g:.3e}")).unwrap_or_default()
            ));
            say(format!("record written to {} ({:.1} s)", out.display(), r.wall_seconds));
            Ok(match r.status {
                Status::Converged => 0,
                Status::Diverged => 3,
                _ => 2,
            })
        }
        Cmd::Mms(args) => {
            let (cfg, out) = load(args, "mms")?;
            let rep = cmd_mms(&cfg, Some(&out))?;
            for r in &rep.rows {
                say(format!(
                    "{:?} M={:>4} err={:.3e} slope={}",
                    r.scheme,
                    r.steps,
                    r.max_error,
                    r.slope.map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into())
                ));
            }
            say(format!("zero forcing max {:e}", rep.zero_forcing_max));
            Ok(0)
        }
        Cmd::Sweep(args) => {
            let (cfg, out) = load(args, "sweep")?;
            let rows = cmd_sweep(&cfg, Some(&out))?;
            for r in &rows {
                say(format!(
                    "value={} status={} iterations={} max_q={} ratio={}",
                    r.value,
                    r.status,
                    r.iterations,
                    r.max_q.map(|q| format!("{q:.4}")).unwrap_or_else(|| "-".into()),
                    r.smoothness_ratio.map(|q| format!("{q:.4}")).unwrap_or_else(|| "-".into())
                ));
            }
            say(format!("sweep written to {}", out.join("sweep.csv").display()));
            Ok(0)
        }
        Cmd::Compare { a, b, out } => {
            let rep = cmd_compare(a, b)?;
            say(format!(
                "max gap {:e} (step ratio {}); delta residual {:e}; delta modulus dev {:e}",
                rep.max_gap, rep.step_ratio, rep.delta_final_residual_norm, rep.delta_modulus_dev
            ));
            if let Some(out) = out {
                write_json(&out.join("compare.json"), &rep)?;
            }
            Ok(0)
        }
        Cmd::Norms { snapshot, k, out } => {
            let rep = cmd_norms(snapshot, *k)?;
            say(format!("norm {:e}  seminorm {:e}", rep.norm, rep.seminorm));
            if let Some(out) = out {
                write_json(&out.join("norms.json"), &rep.to_json())?;
                let f = std::fs::File::create(out.join("norms.csv")).map_err(Error::from)?;
                rep.write_csv(f)?;
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}
