use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use relaycap::sweep::{self, Config, EngineKind};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

/// Effective capacity of full-duplex buffer-aided relaying under
/// statistical delay constraints.
#[derive(Parser, Debug)]
#[command(name = "relaycap", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Capacity of each policy at the configured point.
    Capacity(Common),
    /// Capacity along the configured sweep grid.
    Sweep(Common),
    /// Simulate the first configured policy.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Per-block trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check analytic capacities against simulation.
    Validate(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// `key = value` configuration file; defaults to the evaluation preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["quad", "mc", "enum"])]
    engine: Option<String>,
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Relative quadrature tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Write 0 in the runtime column so output is reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                Config::parse(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Config::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = &self.engine {
            cfg.engine = e.parse::<EngineKind>().map_err(anyhow::Error::msg)?;
        }
        if let Some(n) = self.mc_samples {
            cfg.mc_samples = n;
        }
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        if self.no_timing {
            cfg.timing = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn output(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            )),
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn report(errors: impl Iterator<Item = Option<String>>) -> Result<()> {
    let errors: Vec<String> = errors.flatten().collect();
    for e in &errors {
        eprintln!("error: {e}");
    }
    if !errors.is_empty() {
        bail!("{} point(s) failed", errors.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Capacity(c) => {
            let mut cfg = c.load()?;
            cfg.sweep = None;
            let rows = sweep::run_sweep(&cfg);
            sweep::write_csv(&rows, c.output()?)?;
            report(rows.into_iter().map(|r| r.error))
        }
        Cmd::Sweep(c) => {
            let cfg = c.load()?;
            if cfg.sweep.is_none() {
                bail!("the configuration has no `sweep` key");
            }
            let rows = sweep::run_sweep(&cfg);
            sweep::write_csv(&rows, c.output()?)?;
            report(rows.into_iter().map(|r| r.error))
        }
        Cmd::Simulate { common, trace } => {
            let cfg = common.load()?;
            let mut file = match &trace {
                Some(p) => Some(BufWriter::new(
                    File::create(p).with_context(|| format!("creating {}", p.display()))?,
                )),
                None => None,
            };
            let summary = sweep::run_simulation(&cfg, file.as_mut().map(|f| f as &mut dyn Write))
                .map_err(anyhow::Error::msg)?;
            if let Some(mut f) = file {
                f.flush()?;
            }
            sweep::write_simulation_csv(&summary, common.output()?)?;
            Ok(())
        }
        Cmd::Validate(c) => {
            let cfg = c.load()?;
            let rows = sweep::run_validate(&cfg);
            sweep::write_validation_csv(&rows, c.output()?)?;
            report(rows.into_iter().map(|r| r.error))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
