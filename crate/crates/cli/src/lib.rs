//! Command-line front end: argument definitions, subcommands and run
//! manifests.

pub mod args;
pub mod commands;
pub mod manifest;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use args::{ChallengeCommand, Cli, Command, Common};
use manifest::Manifest;

/// Exit status for a failed run: 1 when an I/O error caused it, 2 for
/// everything else (invalid input or configuration).
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let io = err.chain().any(|e| e.downcast_ref::<std::io::Error>().is_some());
    if io {
        1
    } else {
        2
    }
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // configured from flags only; the environment is not consulted
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

pub fn run(cli: Cli) -> Result<()> {
    init_logging(cli.verbose);
    execute(cli.command)
}

fn common(cmd: &Command) -> Option<&Common> {
    match cmd {
        Command::Score(a) => Some(&a.common),
        Command::Noise(a) => Some(&a.common),
        Command::Challenge(ChallengeCommand::Build(a)) => Some(&a.common),
        Command::Challenge(ChallengeCommand::Eval(a)) => Some(&a.common),
        Command::Evaluate(a) => Some(&a.common),
        Command::Synth(a) => Some(&a.common),
        Command::Report(_) | Command::Replay(_) => None,
    }
}

fn absolute(p: &mut PathBuf) -> Result<()> {
    *p = std::path::absolute(&*p).with_context(|| format!("cannot resolve {}", p.display()))?;
    Ok(())
}

/// Makes every input path absolute so a manifest replays from any directory.
fn absolutize_inputs(cmd: &mut Command) -> Result<()> {
    let labeled = |v: &mut Vec<(String, PathBuf)>| v.iter_mut().try_for_each(|(_, p)| absolute(p));
    match cmd {
        Command::Score(a) => absolute(&mut a.data.dataset),
        Command::Noise(a) => {
            absolute(&mut a.data.dataset)?;
            labeled(&mut a.corpora)
        }
        Command::Challenge(ChallengeCommand::Build(a)) => {
            absolute(&mut a.data.dataset)?;
            absolute(&mut a.judgments)
        }
        Command::Challenge(ChallengeCommand::Eval(a)) => {
            labeled(&mut a.triples)?;
            labeled(&mut a.triple_scores)
        }
        Command::Evaluate(a) => {
            labeled(&mut a.datasets)?;
            labeled(&mut a.judgments)?;
            labeled(&mut a.scores)?;
            labeled(&mut a.triples)?;
            labeled(&mut a.triple_scores)
        }
        Command::Report(_) | Command::Replay(_) | Command::Synth(_) => Ok(()),
    }
}

/// Runs one command inside a thread pool of the requested size.
pub fn execute(mut cmd: Command) -> Result<()> {
    if let Command::Replay(args) = &cmd {
        return replay(&args.manifest, &args.out);
    }
    absolutize_inputs(&mut cmd)?;
    let threads = common(&cmd)
        .and_then(|c| c.threads)
        .map(|t| t as usize)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("cannot start worker threads")?;
    pool.install(|| dispatch(&cmd))
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Score(a) => commands::score(cmd, a),
        Command::Noise(a) => commands::noise(cmd, a),
        Command::Challenge(ChallengeCommand::Build(a)) => commands::challenge_build(cmd, a),
        Command::Challenge(ChallengeCommand::Eval(a)) => commands::challenge_eval(cmd, a),
        Command::Evaluate(a) => commands::evaluate(cmd, a),
        Command::Report(a) => commands::report(a),
        Command::Synth(a) => commands::synth(cmd, a),
        Command::Replay(a) => replay(&a.manifest, &a.out),
    }
}

/// Re-runs a recorded command into `out` after checking its inputs.
pub fn replay(manifest: &Path, out: &Path) -> Result<()> {
    let m = Manifest::read(manifest)?;
    if m.version != env!("CARGO_PKG_VERSION") {
        log::warn!("manifest written by version {}, running {}", m.version, env!("CARGO_PKG_VERSION"));
    }
    m.verify_inputs()?;
    let mut cmd = m.command;
    let out = out.to_path_buf();
    match &mut cmd {
        Command::Score(a) => a.out = out,
        Command::Noise(a) => a.out = out,
        Command::Challenge(ChallengeCommand::Build(a)) => a.out = out,
        Command::Challenge(ChallengeCommand::Eval(a)) => a.out = Some(out),
        Command::Evaluate(a) => a.out = out,
        Command::Synth(a) => a.out = out,
        Command::Report(_) | Command::Replay(_) => bail!("manifest records a command that cannot be replayed"),
    }
    execute(cmd)
}
