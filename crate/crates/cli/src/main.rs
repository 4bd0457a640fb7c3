//! `imprecise`: inspect hierarchies, corrupt labels, extrapolate pseudo-labels,
//! evaluate predictions and run studies and self-training loops.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input.

mod commands;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use commands::{resolve_input, resolve_output, Ctx};
use manifest::{FileDigest, RunManifest};

/// Every problem found while validating the input.
#[derive(Debug)]
pub struct Invalid(pub Vec<String>);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid input:")?;
        for p in &self.0 {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser, Debug)]
#[command(
    name = "imprecise",
    version,
    about = "Learning from semantically imprecise labels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
enum Command {
    /// Print node, leaf and depth statistics of a hierarchy.
    Hierarchy(commands::HierarchyArgs),
    /// Degrade precise labels with a noise model.
    Corrupt(commands::CorruptArgs),
    /// Write synthetic conditional scores for labelled examples.
    SimulateScores(commands::SimulateArgs),
    /// Turn labels into pseudo-labels using per-example scores.
    Extrapolate(commands::ExtrapolateArgs),
    /// Hierarchical precision, recall, F1 and accuracy of predictions.
    Evaluate(commands::EvaluateArgs),
    /// One-shot extrapolation study over noise models and methods.
    Study(commands::StudyArgs),
    /// Self-training loop on the built-in synthetic task.
    Loop(commands::LoopArgs),
    /// Re-run a command from its manifest and check the outputs match.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Write the replayed outputs here instead of over the originals.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v["command"].as_str().map(str::to_owned))
            .unwrap_or_default()
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Corrupt(a) => Some(a.seed),
            Command::SimulateScores(a) => Some(a.seed),
            Command::Extrapolate(a) => Some(a.seed),
            Command::Study(a) => Some(a.seed),
            Command::Loop(a) => Some(a.seed),
            _ => None,
        }
    }

    fn inputs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::Hierarchy(a) => vec![&mut a.path],
            Command::Corrupt(a) => {
                let mut v = vec![&mut a.hierarchy, &mut a.labels];
                v.extend(a.split.as_mut());
                v
            }
            Command::SimulateScores(a) => vec![&mut a.hierarchy, &mut a.labels],
            Command::Extrapolate(a) => vec![&mut a.hierarchy, &mut a.labels, &mut a.scores],
            Command::Evaluate(a) => vec![&mut a.hierarchy, &mut a.pred, &mut a.truth],
            Command::Study(a) => a.hierarchy.iter_mut().chain(a.config.iter_mut()).collect(),
            Command::Loop(_) => vec![],
            Command::Replay(a) => vec![&mut a.manifest],
        }
    }

    fn outputs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::Hierarchy(a) => a.json.iter_mut().collect(),
            Command::Corrupt(a) => vec![&mut a.out],
            Command::SimulateScores(a) => vec![&mut a.out],
            Command::Extrapolate(a) => vec![&mut a.out],
            Command::Evaluate(a) => a.out.iter_mut().collect(),
            Command::Study(a) => vec![&mut a.out],
            Command::Loop(a) => vec![&mut a.out],
            Command::Replay(a) => a.out_dir.iter_mut().collect(),
        }
    }

    fn resolve(&mut self) {
        for p in self.inputs_mut() {
            *p = resolve_input(p);
        }
        for p in self.outputs_mut() {
            *p = resolve_output(p);
        }
    }
}

/// Runs a resolved command and writes its manifest when it produced files.
fn execute(cmd: &Command) -> Result<Option<RunManifest>> {
    let mut ctx = Ctx::default();
    match cmd {
        Command::Hierarchy(a) => commands::hierarchy(a, &mut ctx)?,
        Command::Corrupt(a) => commands::corrupt(a, &mut ctx)?,
        Command::SimulateScores(a) => commands::simulate(a, &mut ctx)?,
        Command::Extrapolate(a) => commands::extrapolate(a, &mut ctx)?,
        Command::Evaluate(a) => commands::evaluate(a, &mut ctx)?,
        Command::Study(a) => commands::study(a, &mut ctx)?,
        Command::Loop(a) => commands::run_loop(a, &mut ctx)?,
        Command::Replay(a) => {
            replay(a)?;
            return Ok(None);
        }
    }
    if ctx.outputs.is_empty() {
        return Ok(None);
    }
    let config = serde_json::to_value(cmd)?["args"].take();
    let mut m = RunManifest::new(&cmd.name(), config, cmd.seed());
    m.resolved = ctx.resolved;
    m.inputs = ctx
        .inputs
        .iter()
        .map(|p| FileDigest::of(p))
        .collect::<Result<_>>()?;
    m.outputs = ctx
        .outputs
        .iter()
        .map(|p| FileDigest::of(p))
        .collect::<Result<_>>()?;
    let path = ctx
        .manifest
        .unwrap_or_else(|| RunManifest::path_for(&ctx.outputs[0]));
    m.write(&path)?;
    Ok(Some(m))
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let original = RunManifest::read(&a.manifest)?;
    let mut cmd: Command = serde_json::from_value(serde_json::json!({
        "command": original.command,
        "args": original.config,
    }))
    .context("manifest does not describe a known command")?;
    if matches!(cmd, Command::Replay(_)) {
        return Err(Invalid(vec!["a replay manifest cannot be replayed".into()]).into());
    }
    let changed: Vec<String> = original
        .inputs
        .iter()
        .filter(|d| FileDigest::of(&d.path).map_or(true, |now| now.sha256 != d.sha256))
        .map(|d| format!("input {} is missing or changed", d.path.display()))
        .collect();
    if !changed.is_empty() {
        return Err(Invalid(changed).into());
    }
    if let Some(dir) = &a.out_dir {
        for p in cmd.outputs_mut() {
            let name = p.file_name().map(PathBuf::from).unwrap_or_default();
            *p = dir.join(name);
        }
        cmd.resolve();
    }
    let rerun = execute(&cmd)?.ok_or_else(|| anyhow!("replayed command wrote no files"))?;
    if rerun.outputs.len() != original.outputs.len() {
        return Err(anyhow!(
            "replay wrote {} files, manifest lists {}",
            rerun.outputs.len(),
            original.outputs.len()
        ));
    }
    let mismatched: Vec<String> = original
        .outputs
        .iter()
        .zip(&rerun.outputs)
        .filter(|(o, r)| o.sha256 != r.sha256)
        .map(|(o, r)| format!("{} differs from {}", r.path.display(), o.path.display()))
        .collect();
    if !mismatched.is_empty() {
        return Err(anyhow!(
            "replay is not byte-identical:\n  {}",
            mismatched.join("\n  ")
        ));
    }
    println!("replay: {} outputs byte-identical", rerun.outputs.len());
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let invalid = e
        .chain()
        .any(|c| c.is::<Invalid>() || c.is::<imprecise::Error>() || c.is::<serde_json::Error>());
    if invalid {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let mut cmd = Cli::parse().command;
    cmd.resolve();
    match execute(&cmd) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
