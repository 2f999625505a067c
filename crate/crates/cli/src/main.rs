use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ssl_gmm_core::generate_dataset;
use ssl_gmm_lab::config::ExperimentKind;
use ssl_gmm_lab::output::{fmt, schema_line};
use ssl_gmm_lab::{run_experiment, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "ssl-gmm-lab", version, about = "Semi-supervised Gaussian-mixture experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// AMP on sampled data against state evolution, per iteration.
    AmpVsSe(RunArgs),
    /// Gradient descent against AMP, with finite-size scaling.
    GdVsAmp(RunArgs),
    /// λ(χ) curves on both fixed-point branches.
    LambdaChi(RunArgs),
    /// Phase labels and boundaries over (α_u, χ) or (α_u, λ).
    PhaseDiagram(RunArgs),
    /// Fixed-point MSE over (SNR, α_u).
    MseHeatmap(RunArgs),
    /// Regularization minimizing the RMLE error.
    OptimalLambda(RunArgs),
    /// Optimal-RMLE vs Bayes-optimal gap across SNR.
    GeCurve(RunArgs),
    /// Writes one sampled dataset as CSV.
    Dataset(DatasetArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Dotted-path override, e.g. `model.rho=0.4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct DatasetArgs {
    /// Config whose `model` table describes the data; defaults apply without it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include the unlabeled rows' labels and the true center.
    #[arg(long)]
    reveal_hidden: bool,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(path: Option<&Path>, set: &[String], kind: ExperimentKind) -> anyhow::Result<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    ExperimentConfig::from_toml_str(&text, set, Some(kind)).context("invalid config")
}

fn run(kind: ExperimentKind, args: RunArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(Some(&args.config), &args.set, kind)?;
    let report = run_experiment(
        &cfg,
        RunOptions {
            threads: args.threads,
            force: args.force,
        },
    )?;
    let m = &report.manifest;
    let failed = m.failed_tasks();
    println!(
        "{} {} -> {} ({} tasks, {} failed, {} files)",
        if report.reused { "reused" } else { "ran" },
        m.experiment,
        cfg.output_dir.display(),
        m.tasks.len(),
        failed,
        m.outputs.len()
    );
    Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn dump_dataset(args: DatasetArgs) -> anyhow::Result<ExitCode> {
    // Any experiment kind works here; only the model table is read.
    let cfg = load_config(args.config.as_deref(), &args.set, ExperimentKind::AmpVsSe)?;
    let d = generate_dataset(&cfg.model, args.seed)?;
    let sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut sink = std::io::BufWriter::new(sink);
    writeln!(sink, "{}", schema_line())?;
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["set".to_string(), "y".to_string()];
    header.extend((0..d.n_dim()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    let mut write_rows = |set: &str, x: &ndarray::Array2<f64>, y: Option<&[i8]>| -> anyhow::Result<()> {
        for (i, row) in x.rows().into_iter().enumerate() {
            let mut rec = vec![set.to_string(), y.map(|y| y[i].to_string()).unwrap_or_default()];
            rec.extend(row.iter().map(|&v| fmt(v)));
            w.write_record(&rec)?;
        }
        Ok(())
    };
    write_rows("labeled", &d.x_labeled, Some(&d.y_labeled))?;
    let hidden = args.reveal_hidden.then_some(d.y_hidden.as_slice());
    write_rows("unlabeled", &d.x_unlabeled, hidden)?;
    if args.reveal_hidden {
        let mut rec = vec!["center".to_string(), String::new()];
        rec.extend(d.w0.iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::AmpVsSe(a) => run(ExperimentKind::AmpVsSe, a),
        Command::GdVsAmp(a) => run(ExperimentKind::GdVsAmp, a),
        Command::LambdaChi(a) => run(ExperimentKind::LambdaChi, a),
        Command::PhaseDiagram(a) => run(ExperimentKind::PhaseDiagram, a),
        Command::MseHeatmap(a) => run(ExperimentKind::MseHeatmap, a),
        Command::OptimalLambda(a) => run(ExperimentKind::OptimalLambda, a),
        Command::GeCurve(a) => run(ExperimentKind::GeCurve, a),
        Command::Dataset(a) => dump_dataset(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
