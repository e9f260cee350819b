//! Config-driven batch runs of the `mvharnack` checks.
//!
//! Every subcommand validates the model first and refuses to run on a model
//! that fails validation. Each run writes CSV tables and a
//! `summary_<command>.json` into the output directory and prints one line per
//! check. Exit codes: 0 all checks pass, 1 some check failed, 2 only
//! degeneracy warnings, 3 configuration or runtime error.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use mvharnack::Result;

use crate::output::{CheckLine, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Validate,
    Simulate,
    Picard,
    Bismut,
    Harnack,
    Metrics,
    Study,
    /// `validate` followed by every subcommand whose section is configured.
    Suite,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Validate,
        Command::Simulate,
        Command::Picard,
        Command::Bismut,
        Command::Harnack,
        Command::Metrics,
        Command::Study,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Picard => "picard",
            Command::Bismut => "bismut",
            Command::Harnack => "harnack",
            Command::Metrics => "metrics",
            Command::Study => "study",
            Command::Suite => "suite",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub plot_data: bool,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub checks: Vec<CheckLine>,
    pub out_dir: PathBuf,
}

/// Runs one subcommand on the configuration at `path`.
pub fn run(command: Command, path: &Path, options: &RunOptions) -> Result<RunOutcome> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| mvharnack::Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(command, path, options))
}

/// The subcommands whose `[checks.*]` section is present, after `validate`.
pub fn configured_commands(cfg: &config::LoadedConfig) -> Vec<Command> {
    let c = &cfg.config.checks;
    let present = [
        (Command::Simulate, c.simulate.is_some()),
        (Command::Picard, c.picard.is_some()),
        (Command::Bismut, c.bismut.is_some()),
        (Command::Harnack, c.harnack.is_some()),
        (Command::Metrics, c.metrics.is_some()),
        (Command::Study, c.study.is_some()),
    ];
    std::iter::once(Command::Validate)
        .chain(present.into_iter().filter(|(_, on)| *on).map(|(cmd, _)| cmd))
        .collect()
}

fn run_in_pool(command: Command, path: &Path, options: &RunOptions) -> Result<RunOutcome> {
    if command == Command::Suite {
        let commands = configured_commands(&config::load(path)?);
        let mut checks = Vec::new();
        let mut out_dir = PathBuf::new();
        for cmd in commands {
            let outcome = run_in_pool(cmd, path, options)?;
            checks.extend(outcome.checks);
            out_dir = outcome.out_dir;
        }
        let failures = checks.iter().filter(|c| c.status == output::Status::Fail).count();
        let warnings = checks.iter().filter(|c| c.status == output::Status::Warn).count();
        return Ok(RunOutcome {
            exit_code: mvharnack::harnack::exit_code(failures, warnings),
            checks,
            out_dir,
        });
    }
    let cfg = config::load(path)?;
    let out_dir = cfg.output_dir(options.out_dir.as_deref());
    let mut report = Report::new(command.name(), cfg.config.simulation.seed, &out_dir, options.plot_data)?;
    if command == Command::Validate {
        commands::validate(&cfg, &mut report)?;
    } else {
        let assumptions = commands::validation(&cfg)?;
        if !assumptions.passed() {
            report.check(
                "validate",
                false,
                format!("model fails {:?}; run `validate` for details", assumptions.failures()),
            );
            let exit_code = report.finish()?;
            return Ok(RunOutcome {
                exit_code,
                checks: report.checks,
                out_dir,
            });
        }
        report.check("validate", true, "model assumptions pass");
        match command {
            Command::Simulate => commands::simulate(&cfg, &mut report)?,
            Command::Picard => commands::picard(&cfg, &mut report)?,
            Command::Bismut => commands::bismut(&cfg, &mut report)?,
            Command::Harnack => commands::harnack(&cfg, &mut report)?,
            Command::Metrics => commands::metrics(&cfg, &mut report)?,
            Command::Study => commands::study(&cfg, &mut report)?,
            Command::Validate | Command::Suite => unreachable!(),
        }
    }
    let exit_code = report.finish()?;
    Ok(RunOutcome {
        exit_code,
        checks: report.checks,
        out_dir,
    })
}
