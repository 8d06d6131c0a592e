use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ldrld_cli::commands::{self, ConfigArgs};
use ldrld_cli::losscheck::{run_suite, SuiteOptions};
use ldrld_cli::report::write_json;
use ldrld_cli::sweep::parse_axis;
use ldrld_cli::{CliError, Result};
use ldrld_core::pairs::AdwParams;
use ldrld_train::data::Split;

/// Local dense relational logit distillation: train, distill, evaluate, check.
#[derive(Parser)]
#[command(name = "ldrld", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigFlags {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set distill.alpha=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory; replaces `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated student seeds; replaces `seeds` from the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

impl From<ConfigFlags> for ConfigArgs {
    fn from(f: ConfigFlags) -> Self {
        ConfigArgs { config: f.config, sets: f.sets, out: f.out, seeds: f.seeds }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Eval,
}

#[derive(Subcommand)]
enum Command {
    /// Train the teacher network and write its checkpoint and report.
    TrainTeacher(ConfigFlags),
    /// Distill one student per seed from a teacher checkpoint.
    Distill {
        #[command(flatten)]
        flags: ConfigFlags,
        #[arg(long)]
        teacher: PathBuf,
        /// Also train scratch students with the same seeds.
        #[arg(long)]
        baseline: bool,
        /// Sweep axis `key=a..b` or `key=v1,v2`; repeat for a grid.
        #[arg(long = "sweep", value_name = "KEY=RANGE")]
        sweeps: Vec<String>,
    },
    /// Accuracy of a checkpoint on one split of the configured dataset.
    Eval {
        #[command(flatten)]
        flags: ConfigFlags,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "eval")]
        split: SplitArg,
    },
    /// Check the objective against its oracles and closed forms.
    Losscheck {
        /// Random cases per property.
        #[arg(long, default_value_t = 200)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the results as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Shift ε of the pair weights (negative-control hook).
        #[arg(long, hide = true, allow_hyphen_values = true)]
        perturb_epsilon: Option<f64>,
    },
    /// Distill over a grid of config values, one report per cell.
    Sweep {
        #[command(flatten)]
        flags: ConfigFlags,
        /// Reuse a teacher; by default one is trained into the output directory.
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        baseline: bool,
        #[arg(long = "sweep", value_name = "KEY=RANGE", required = true)]
        sweeps: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainTeacher(flags) => {
            let report = commands::train_teacher(&flags.into())?;
            println!("teacher eval accuracy {:.4}", report.teacher.eval_accuracy);
        }
        Command::Distill { flags, teacher, baseline, sweeps } if !sweeps.is_empty() => {
            let axes = sweeps.iter().map(|s| parse_axis(s)).collect::<Result<Vec<_>>>()?;
            print_sweep(&commands::sweep(&flags.into(), &axes, Some(&teacher), baseline)?);
        }
        Command::Distill { flags, teacher, baseline, .. } => {
            let r = commands::distill_students(&flags.into(), &teacher, baseline)?;
            let agg = &r.aggregate.eval_accuracy;
            println!("student eval accuracy {:.4} ± {:.4} over {} seeds", agg.mean, agg.std, r.runs.len());
            if let (Some(b), Some(d)) = (&r.baseline, r.delta_vs_baseline) {
                println!("baseline eval accuracy {:.4} (delta {d:+.4})", b.aggregate.eval_accuracy.mean);
            }
        }
        Command::Eval { flags, model, split } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Validation => Split::Validation,
                SplitArg::Eval => Split::Eval,
            };
            let r = commands::evaluate(&flags.into(), &model, split)?;
            println!("{}", serde_json::to_string(&r).expect("plain data serializes"));
        }
        Command::Losscheck { cases, seed, out, perturb_epsilon } => {
            let mut adw = AdwParams::default();
            adw.epsilon += perturb_epsilon.unwrap_or(0.0);
            let results = run_suite(&SuiteOptions { cases, seed, adw });
            for r in &results {
                println!("{r}");
            }
            if let Some(path) = out {
                write_json(&path, &results)?;
            }
            let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.name.to_string()).collect();
            if !failed.is_empty() {
                return Err(CliError::ChecksFailed(failed));
            }
        }
        Command::Sweep { flags, teacher, baseline, sweeps } => {
            let axes = sweeps.iter().map(|s| parse_axis(s)).collect::<Result<Vec<_>>>()?;
            print_sweep(&commands::sweep(&flags.into(), &axes, teacher.as_deref(), baseline)?);
        }
    }
    Ok(())
}

fn print_sweep(s: &ldrld_cli::report::SweepSummary) {
    for (i, c) in s.cells.iter().enumerate() {
        let label: Vec<String> = c.assignments.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let best = if s.best_by_validation == Some(i) { "  <- best on validation" } else { "" };
        println!(
            "{:<40} eval {:.4} ± {:.4}{best}",
            label.join(" "),
            c.aggregate.eval_accuracy.mean,
            c.aggregate.eval_accuracy.std
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LDRLD_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
