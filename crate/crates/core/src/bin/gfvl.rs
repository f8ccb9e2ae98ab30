use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gfvl::experiment::{self, ExperimentConfig};
use gfvl::Error;

#[derive(Parser)]
#[command(name = "gfvl", version, about = "Gossip-based federated variational learning and unlearning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace KL to the full-data posterior over seeded learning runs.
    Learn(Common),
    /// Compare unlearning against retraining from scratch.
    Unlearn(Common),
    /// Monte-Carlo cover and hitting times of the scheduler.
    CoverTime(Common),
    /// Sweep the number of local iterations at a fixed iteration budget.
    SweepL(Common),
}

#[derive(Args)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Output CSV; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// star, ring, complete or file:PATH
    #[arg(long)]
    topology: Option<String>,
    /// Extra config entries, e.g. --set agents=20
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> gfvl::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        for entry in &self.overrides {
            let (k, v) = entry
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{entry}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        if let Some(runs) = self.runs {
            cfg.runs = runs;
        }
        if let Some(t) = &self.topology {
            cfg.topology = t.parse()?;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}

fn emit(
    out: Option<&Path>,
    write_main: impl FnOnce(&mut dyn Write) -> gfvl::Result<()>,
    write_summary: Option<&dyn Fn(&mut dyn Write) -> gfvl::Result<()>>,
) -> gfvl::Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_main(&mut w)?;
            w.flush()?;
            if let Some(summary) = write_summary {
                let mut w = BufWriter::new(File::create(summary_path(path))?);
                summary(&mut w)?;
                w.flush()?;
            }
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write_main(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> gfvl::Result<()> {
    match cli.command {
        Command::Learn(common) => {
            let cfg = common.load()?;
            let result = experiment::run_experiment(&cfg)?;
            emit(
                cfg.output.as_deref(),
                |w| experiment::write_trace_csv(w, &result.rows),
                Some(&|w: &mut dyn Write| experiment::write_summary_csv(w, &result.summary)),
            )
        }
        Command::SweepL(common) => {
            let cfg = common.load()?;
            let result = experiment::run_sweep_l(&cfg)?;
            emit(
                cfg.output.as_deref(),
                |w| experiment::write_trace_csv(w, &result.rows),
                Some(&|w: &mut dyn Write| experiment::write_summary_csv(w, &result.summary)),
            )
        }
        Command::Unlearn(common) => {
            let cfg = common.load()?;
            let result = experiment::run_unlearn_experiment(&cfg)?;
            let deleted: Vec<f64> = result.deletion_slots.iter().flatten().map(|&s| s as f64).collect();
            if !deleted.is_empty() {
                eprintln!(
                    "deletion within trace in {}/{} runs, mean slot {:.4}",
                    deleted.len(),
                    result.deletion_slots.len(),
                    deleted.iter().sum::<f64>() / deleted.len() as f64
                );
            }
            emit(
                cfg.output.as_deref(),
                |w| experiment::write_trace_csv(w, &result.rows),
                Some(&|w: &mut dyn Write| experiment::write_summary_csv(w, &result.summary)),
            )
        }
        Command::CoverTime(common) => {
            let cfg = common.load()?;
            let rows = experiment::run_covertime(&cfg)?;
            emit(cfg.output.as_deref(), |w| experiment::write_cover_csv(w, &rows), None)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidTopology(_) | Error::InvalidEdge(..) | Error::DisconnectedGraph => {
                    ExitCode::from(2)
                }
                ref e if e.is_numerical() => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}
