//! `arrival`: run presets and sweeps and write event files, histograms,
//! survival curves and metrics.

mod plan;
mod runs;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use arrival_core::output::OutputDir;
use arrival_core::Error;

use plan::{Command, Plan, RunManifest};

#[derive(Parser)]
#[command(name = "arrival", version, about = "Arrival times of entangled atom pairs in a double double slit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Bohmian joint arrival times (figs. 2-4)
    Run(Common),
    /// Absorbing-boundary detectors (figs. 5-6)
    Abr(AbrArgs),
    /// Semiclassical against Bohmian arrival times (fig. 7)
    Semi(Common),
    /// Re-run the plan recorded in a manifest
    Replay(ReplayArgs),
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// built-in setup (fig2, fig3, fig4, fig5, fig7, fig7-near, fig7-middle, fig7-far)
    #[arg(long)]
    preset: Option<String>,
    /// TOML config file; its keys override the preset
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    events: Option<usize>,
    /// one parameter over several values, e.g. `eta=-1,0,1` or `y_left=-1mm,-4mm`
    #[arg(long, allow_hyphen_values = true)]
    sweep: Option<String>,
    #[arg(long)]
    species: Option<String>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// keep both particles on the unconditioned pair wave function
    #[arg(long)]
    no_collapse: bool,
    /// number of events whose trajectories are written
    #[arg(long, default_value_t = 0)]
    trajectories: usize,
}

#[derive(Args, Clone, Debug)]
struct AbrArgs {
    #[command(flatten)]
    common: Common,
    /// detector constants in units of kappa0, e.g. `0.333,1,3`
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    kappa: Option<Vec<f64>>,
    /// trajectories stopped at the screen plane, no absorbing boundary
    #[arg(long)]
    no_backaction: bool,
}

#[derive(Args, Clone, Debug)]
struct ReplayArgs {
    manifest: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let (plan, workers, out) = match build(cli.cmd) {
        Ok(x) => x,
        Err(e) => return fail(&e),
    };
    let started = Instant::now();
    let mut dir = match OutputDir::create(&out) {
        Ok(d) => d,
        Err(e) => return fail(&e),
    };
    let result = runs::execute(&plan, workers, &mut dir).and_then(|_| {
        let manifest = RunManifest::new(&plan, started.elapsed().as_secs_f64(), &dir.files)?;
        dir.write_json("manifest.json", &manifest)
    });
    match result {
        Ok(()) => {
            log::info!("wrote {} files to {}", dir.files.len(), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            dir.remove_written();
            fail(&e)
        }
    }
}

fn build(cmd: Cmd) -> arrival_core::Result<(Plan, usize, PathBuf)> {
    Ok(match cmd {
        Cmd::Run(c) => (Plan::from_args(Command::Run, &c, None, false)?, c.workers, c.out_dir),
        Cmd::Semi(c) => (Plan::from_args(Command::Semi, &c, None, false)?, c.workers, c.out_dir),
        Cmd::Abr(a) => (
            Plan::from_args(Command::Abr, &a.common, a.kappa.as_deref(), a.no_backaction)?,
            a.common.workers,
            a.common.out_dir,
        ),
        Cmd::Replay(r) => (RunManifest::load(&r.manifest)?.plan, r.workers, r.out_dir),
    })
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_config() { 2 } else { 3 })
}
