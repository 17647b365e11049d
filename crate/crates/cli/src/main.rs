//! `escalate`: command-line access to model validation, task tables,
//! scenario runs and the diagnostic sweeps.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use escalate_core::diagnostics::{
    checkpoint_csv, longrun_report, run_scenario, run_sweep, structure_robustness, LongrunVariant, NeutralRateSweep,
    Scenario, SweepSpec, SweepTarget, DEFAULT_CHECKPOINTS,
};
use escalate_core::inference::ModelError;
use escalate_core::model_spec::{parse_model, ModelSpec};
use escalate_core::task_model::{all_tables, tables_to_csv};
use escalate_core::Model;

#[derive(Parser)]
#[command(name = "escalate", version, about = "Track escalation-stage posteriors for a case model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model document and list every finding.
    Validate {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        out: Format,
    },
    /// Print the task-configuration table of every active state.
    InterpTable { model: PathBuf },
    /// Run a scenario and print the posterior timeline.
    Run {
        model: PathBuf,
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        out: Format,
        /// JSON array of evidence events merged into the scenario.
        #[arg(long)]
        evidence: Option<PathBuf>,
    },
    /// Evolve the priors without observations; with a sweep, print the
    /// terminal split per transient-to-neutral rate instead of the trajectory.
    Longrun {
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        horizon: usize,
        /// Make an escalation state absorbing as well as neutral.
        #[arg(long)]
        mobilised_absorbing: bool,
        /// State made absorbing by --mobilised-absorbing; defaults to the
        /// model's last state.
        #[arg(long, requires = "mobilised_absorbing")]
        absorbing_state: Option<String>,
        /// `lo:hi:steps`
        #[arg(long)]
        neutral_rate_sweep: Option<NeutralRateSweep>,
        #[arg(long, value_enum, default_value_t)]
        out: Format,
    },
    /// Rerun a scenario under a range of priors or holding parameters.
    Sensitivity {
        model: PathBuf,
        scenario: PathBuf,
        /// prior:<state>, extreme:<state>, equal, zeta or zeta:<state>
        #[arg(long)]
        target: SweepTarget,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_CHECKPOINTS)]
        checkpoints: Vec<u64>,
        #[arg(long, value_enum, default_value_t)]
        out: Format,
    },
    /// Difference two structural variants of a model over one scenario.
    Compare {
        base: PathBuf,
        variant: PathBuf,
        scenario: PathBuf,
        /// `fine=coarse` pairs sending states of the larger model onto the
        /// smaller one; unlisted states match by id.
        #[arg(long, value_delimiter = ',')]
        map: Vec<String>,
        #[arg(long, value_enum, default_value_t)]
        out: Format,
    },
}

/// Failure classes with distinct exit codes.
enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn read_spec(path: &Path) -> Result<ModelSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Runtime)?;
    parse_model(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::Invalid)
}

fn load_model(path: &Path) -> Result<Arc<Model>, Failure> {
    let spec = read_spec(path)?;
    match Model::new(spec) {
        Ok(m) => {
            for w in &m.warnings().findings {
                eprintln!("warning {} at {}: {}", w.code, w.path, w.message);
            }
            Ok(m.into_shared())
        }
        Err(e) => Err(Failure::Invalid(anyhow!(e).context(format!("{} is not a usable model", path.display())))),
    }
}

fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { model, out } => {
            let spec = read_spec(&model)?;
            let (report, valid) = match Model::new(spec) {
                Ok(m) => (m.warnings().clone(), true),
                Err(ModelError::Invalid(r)) => (r, false),
            };
            match out {
                Format::Json => emit(&json(&report)?)?,
                Format::Csv if report.is_empty() => emit("ok")?,
                Format::Csv => emit(&report.to_string())?,
            }
            if !valid {
                return Err(Failure::Invalid(anyhow!("{} has validation errors", model.display())));
            }
        }
        Command::InterpTable { model } => {
            let spec = read_spec(&model)?;
            let tables = all_tables(&spec)
                .into_iter()
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::Invalid(e.into()))?;
            emit(&tables_to_csv(&spec, &tables))?;
        }
        Command::Run {
            model,
            scenario,
            out,
            evidence,
        } => {
            let model = load_model(&model)?;
            let mut scenario = Scenario::load(&scenario)?;
            if let Some(path) = evidence {
                scenario = scenario.with_evidence(Scenario::load_evidence(&path)?);
            }
            let timeline = run_scenario(&model, &scenario)?;
            match out {
                Format::Csv => emit(&timeline.to_csv())?,
                Format::Json => emit(&json(&timeline)?)?,
            }
        }
        Command::Longrun {
            model,
            horizon,
            mobilised_absorbing,
            absorbing_state,
            neutral_rate_sweep,
            out,
        } => {
            let model = load_model(&model)?;
            let spec = model.spec();
            let variant = if mobilised_absorbing {
                let state = match absorbing_state {
                    Some(id) => spec.state_index(&id)?,
                    None => spec.n_states() - 1,
                };
                LongrunVariant::MobilisedAbsorbing { state }
            } else {
                LongrunVariant::SingleAbsorbing
            };
            let report = longrun_report(spec, horizon, variant, neutral_rate_sweep)?;
            if !report.converged {
                eprintln!("warning: no convergence within {} periods", report.periods_to_converge);
            }
            match out {
                Format::Json => emit(&json(&report)?)?,
                Format::Csv if neutral_rate_sweep.is_some() => emit(&report.sweep_csv())?,
                Format::Csv => emit(&report.trajectory_csv())?,
            }
        }
        Command::Sensitivity {
            model,
            scenario,
            target,
            values,
            checkpoints,
            out,
        } => {
            let model = load_model(&model)?;
            let scenario = Scenario::load(&scenario)?;
            let points = run_sweep(model.spec(), &scenario, &SweepSpec { target, values })?;
            match out {
                Format::Csv => emit(&checkpoint_csv(&points, &checkpoints))?,
                Format::Json => emit(&json(&points)?)?,
            }
        }
        Command::Compare {
            base,
            variant,
            scenario,
            map,
            out,
        } => {
            let base = load_model(&base)?;
            let variant = load_model(&variant)?;
            let scenario = Scenario::load(&scenario)?;
            let mapping = parse_map(&map)?;
            let diff = structure_robustness(&base, &variant, &mapping, &scenario)?;
            match out {
                Format::Csv => emit(&diff.to_csv())?,
                Format::Json => emit(&json(&diff)?)?,
            }
        }
    }
    Ok(())
}

fn parse_map(pairs: &[String]) -> anyhow::Result<BTreeMap<String, String>> {
    pairs
        .iter()
        .filter(|p| !p.is_empty())
        .map(|p| match p.split_once('=') {
            Some((fine, coarse)) if !fine.is_empty() && !coarse.is_empty() => Ok((fine.to_string(), coarse.to_string())),
            _ => bail!("map entry `{p}` is not fine=coarse"),
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
