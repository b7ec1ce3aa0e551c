use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pseudobell::config::{self, load_config, BackendKind, Experiment, OutputFormat};
use pseudobell::run::{run, RunOptions};

/// Pseudothermal-light Bell-interference simulator.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// scan-delay | scan-angle | chsh | validate
    #[arg(value_parser = |s: &str| s.parse::<Experiment>())]
    experiment: Experiment,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Gates per run.
    #[arg(long)]
    trials: Option<u64>,
    /// oracle | mc
    #[arg(long, value_parser = |s: &str| s.parse::<BackendKind>())]
    backend: Option<BackendKind>,
    /// low | high
    #[arg(long, value_parser = config::parse_flux)]
    mode: Option<pseudobell::engine::Flux>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long, value_parser = |s: &str| s.parse::<OutputFormat>())]
    format: Option<OutputFormat>,
    /// Treat regime warnings as errors.
    #[arg(long)]
    strict: bool,
    /// Also write a matplotlib script next to the results.
    #[arg(long)]
    emit_plot_script: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(4);
        }
    };
    let mut cfg = match load_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    // An explicit experiment on the command line picks its own default grid
    // unless the file set one.
    if cfg.experiment != cli.experiment {
        let default_grid = pseudobell::config::RunConfig::default_grid(cfg.experiment);
        if cfg.grid == default_grid {
            cfg.grid = pseudobell::config::RunConfig::default_grid(cli.experiment);
        }
        cfg.experiment = cli.experiment;
    }
    if let Some(mode) = cli.mode {
        if mode != cfg.mode
            && !text
                .lines()
                .any(|l| l.trim_start().starts_with("mean_photons"))
        {
            cfg.settings.mean_photons = pseudobell::config::RunConfig::default_mean_photons(mode);
        }
        if mode != cfg.mode && !text.lines().any(|l| l.trim_start().starts_with("n_trials")) {
            cfg.n_trials = pseudobell::config::RunConfig::default_trials(mode);
        }
        cfg.mode = mode;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.n_trials = trials;
    }
    if let Some(backend) = cli.backend {
        cfg.backend = backend;
    }
    if let Some(format) = cli.format {
        cfg.format = format;
    }
    if cli.out.is_some() {
        cfg.output = cli.out;
    }

    let options = RunOptions {
        strict: cli.strict,
        emit_plot_script: cli.emit_plot_script,
    };
    match run(&cfg, &options) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for line in &report.summary {
                println!("{line}");
            }
            println!("wrote {}", report.results_path.display());
            println!("wrote {}", report.metadata_path.display());
            if let Some(p) = &report.plot_script_path {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
