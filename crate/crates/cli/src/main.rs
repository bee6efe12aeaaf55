//! `dtirs`: validate, inspect, run, predict and evaluate from the command
//! line.
//!
//! Exit codes: 0 success, 1 domain failure (invalid schema or data, failed
//! pipeline, artifact mismatch), 2 usage or I/O error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use dtirs_core::dsdl::{parse_and_validate, serialize, Schema};
use dtirs_core::engine::{run_pipeline, write_outputs, EngineConfig, ModelArtifact, DEFAULT_BUDGET, DEFAULT_SEED};
use dtirs_core::features::FeatureConfig;
use dtirs_core::table::{read_table, Dataset, Fractions, ReadOptions};
use dtirs_core::task::resolve_task;
use serde_json::json;

#[derive(Parser)]
#[command(name = "dtirs", version, about = "Schema-driven recommendation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a DsDL file and, optionally, a data file against it.
    Validate {
        #[arg(long)]
        dsdl: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        allow_extra_columns: bool,
    },
    /// Print the canonical schema and each target's task binding as JSON.
    Inspect {
        #[arg(long)]
        dsdl: PathBuf,
    },
    /// Train, select and evaluate a model for every target.
    Run(RunArgs),
    /// Apply a saved model to new rows.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        allow_extra_columns: bool,
    },
    /// Score a saved model on labelled rows; prints metrics as JSON.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        allow_extra_columns: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    dsdl: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Trials per target.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    val_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    test_frac: f64,
    /// Drop a key's training positives from its recommendations.
    #[arg(long)]
    exclude_seen: bool,
    #[arg(long)]
    allow_extra_columns: bool,
    /// Vocabulary size per categorical column.
    #[arg(long, default_value_t = FeatureConfig::default().vocab_cap)]
    vocab_cap: usize,
    /// Hash dimensions for textual columns.
    #[arg(long, default_value_t = FeatureConfig::default().text_dims)]
    text_dims: usize,
    /// Trial worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Record wall-clock timings in reports (makes them non-reproducible).
    #[arg(long)]
    record_timings: bool,
}

enum Failure {
    /// Invalid input or a failed pipeline stage: exit 1.
    Domain(Vec<String>),
    /// Bad arguments or unreadable/unwritable files: exit 2.
    Usage(String),
}

fn domain(msg: impl ToString) -> Failure {
    Failure::Domain(vec![msg.to_string()])
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn load_schema(path: &Path) -> Result<Arc<Schema>, Failure> {
    let text = read_text(path)?;
    parse_and_validate(&text)
        .map(Arc::new)
        .map_err(|diags| Failure::Domain(diags.iter().map(ToString::to_string).collect()))
}

fn load_data(path: &Path, schema: &Arc<Schema>, allow_extra_columns: bool) -> Result<Dataset, Failure> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let outcome = read_table(BufReader::new(file), schema, ReadOptions { allow_extra_columns })
        .map_err(|e| Failure::Domain(e.issues.iter().map(|i| format!("error: {i}")).collect()))?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    Ok(outcome.dataset)
}

fn load_artifact(path: &Path) -> Result<ModelArtifact, Failure> {
    let text = read_text(path)?;
    let artifact: ModelArtifact =
        serde_json::from_str(&text).map_err(|e| domain(format!("{}: not a model artifact: {e}", path.display())))?;
    Ok(artifact)
}

fn artifact_schema(artifact: &ModelArtifact) -> Result<Arc<Schema>, Failure> {
    parse_and_validate(&artifact.schema_dsdl)
        .map(Arc::new)
        .map_err(|_| domain("model artifact carries an invalid schema"))
}

fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}")
        .and_then(|()| out.flush())
        .map_err(|e| Failure::Usage(format!("writing output: {e}")))
}

fn validate(dsdl: &Path, data: Option<&Path>, allow_extra_columns: bool) -> Result<(), Failure> {
    let schema = load_schema(dsdl)?;
    if let Some(data) = data {
        load_data(data, &schema, allow_extra_columns)?;
    }
    Ok(())
}

fn inspect(dsdl: &Path) -> Result<(), Failure> {
    let schema = load_schema(dsdl)?;
    let targets: Vec<_> = schema
        .targets
        .iter()
        .map(|t| {
            let b = resolve_task(t, &schema);
            json!({
                "spec": t,
                "task_type": b.task_type,
                "loss_ids": b.loss_ids,
                "selection_metric": b.selection_metric,
                "report_metrics": b.report_metrics,
                "candidate_models": b.candidate_models,
            })
        })
        .collect();
    let doc = json!({
        "columns": schema.columns,
        "timestamp_col": schema.timestamp_col,
        "targets": targets,
        "dsdl": serialize(&schema),
    });
    emit(&serde_json::to_string_pretty(&doc).expect("json value"))
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let fractions = Fractions {
        train: args.train_frac,
        validation: args.val_frac,
        test: args.test_frac,
    };
    fractions.check().map_err(|e| Failure::Usage(e.to_string()))?;
    if args.budget == 0 {
        return Err(Failure::Usage("--budget must be at least 1".into()));
    }
    if args.text_dims == 0 {
        return Err(Failure::Usage("--text-dims must be at least 1".into()));
    }
    let schema = load_schema(&args.dsdl)?;
    let data = load_data(&args.data, &schema, args.allow_extra_columns)?;
    let config = EngineConfig {
        seed: args.seed,
        budget: args.budget,
        fractions,
        features: FeatureConfig {
            vocab_cap: args.vocab_cap,
            text_dims: args.text_dims,
            ..FeatureConfig::default()
        },
        exclude_seen: args.exclude_seen,
        workers: args.workers,
        record_timings: args.record_timings,
    };
    let result = run_pipeline(&schema, &data, &config).map_err(domain)?;
    write_outputs(&result, &args.out).map_err(|e| io_error(&args.out, e))?;
    for t in &result.targets {
        let r = &t.report;
        let sel = r.selection_metric.id.to_string();
        let value = r.metrics.get(&sel).copied().flatten();
        emit(&format!(
            "target {}: {} won trial {} ({}), test {} = {}",
            r.target_index,
            r.winner.model_id,
            r.winner.trial_index,
            r.winner.hyperparameters,
            sel,
            value.map_or("absent".to_string(), |v| format!("{v:.6}")),
        ))?;
    }
    Ok(())
}

fn predict(model: &Path, data: &Path, out: &Path, allow_extra_columns: bool) -> Result<(), Failure> {
    let artifact = load_artifact(model)?;
    let schema = artifact_schema(&artifact)?;
    let data = load_data(data, &schema, allow_extra_columns)?;
    let table = artifact.predict(&data).map_err(domain)?;
    let file = File::create(out).map_err(|e| io_error(out, e))?;
    table.write_csv(BufWriter::new(file)).map_err(|e| io_error(out, e))
}

fn evaluate(model: &Path, data: &Path, allow_extra_columns: bool) -> Result<(), Failure> {
    let artifact = load_artifact(model)?;
    let schema = artifact_schema(&artifact)?;
    let data = load_data(data, &schema, allow_extra_columns)?;
    let metrics = artifact.evaluate(&data).map_err(domain)?;
    let doc = json!({
        "target_index": artifact.target_index,
        "task_type": artifact.task_type,
        "model_id": artifact.model_id,
        "metrics": metrics,
    });
    emit(&serde_json::to_string_pretty(&doc).expect("json value"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Validate {
            dsdl,
            data,
            allow_extra_columns,
        } => validate(dsdl, data.as_deref(), *allow_extra_columns),
        Command::Inspect { dsdl } => inspect(dsdl),
        Command::Run(args) => run(args),
        Command::Predict {
            model,
            data,
            out,
            allow_extra_columns,
        } => predict(model, data, out, *allow_extra_columns),
        Command::Evaluate {
            model,
            data,
            allow_extra_columns,
        } => evaluate(model, data, *allow_extra_columns),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(lines)) => {
            for l in lines {
                eprintln!("{l}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
