use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rfkit::generators::ingest_matrix;
use rfkit::harness::{run_and_write, ExperimentConfig, ExperimentKind, SweepResult};
use rfkit::matrix::write_matrix;
use rfkit::{RfError, RfOperator};

/// Randomized filtering: compress streaming data and run the evaluation
/// experiments.
#[derive(Parser, Debug)]
#[command(name = "rfkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compress every column of a matrix file with one operator.
    Compress(CompressArgs),
    /// Generate or inspect serialized operators.
    #[command(subcommand)]
    Operator(OperatorCommand),
    /// Isometry constants across compression ratios.
    Isometry(ExperimentArgs),
    /// Event detection on a synthetic calcium-imaging movie.
    Calcium(ExperimentArgs),
    /// Forcing-phase classification on simulated vorticity.
    Vorticity(ExperimentArgs),
    /// RF versus PCA on a manifold: isometry and LLE shape.
    Manifold(ExperimentArgs),
    /// Smallest m meeting a target isometry constant as n grows.
    Scaling(ExperimentArgs),
}

#[derive(Args, Debug)]
struct CompressArgs {
    /// Input matrix, RFM1 or CSV with one sample per row.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output RFM1 file.
    #[arg(long)]
    out: PathBuf,
    /// Operator blob; replaces --n/--m/--seed.
    #[arg(long, conflicts_with_all = ["m", "seed"])]
    operator: Option<PathBuf>,
    /// Ambient dimension, checked against the input.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, required_unless_present = "operator")]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum OperatorCommand {
    /// Write an operator blob.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also store the sign and frequency vectors.
        #[arg(long)]
        extended: bool,
    },
    /// Print the parameters of an operator blob.
    Inspect {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Experiment config, or a manifest from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// First RF seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the configured ratio list; repeatable.
    #[arg(long)]
    ratio: Vec<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Large dataset presets.
    #[arg(long)]
    full: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), RfError> {
    match command {
        Command::Compress(args) => compress(&args),
        Command::Operator(OperatorCommand::Gen {
            n,
            m,
            seed,
            out,
            extended,
        }) => {
            let op = RfOperator::new(n, m, seed)?;
            let blob = if extended { op.to_blob_extended() } else { op.to_blob() };
            fs::write(&out, blob + "\n")?;
            println!("{}", out.display());
            Ok(())
        }
        Command::Operator(OperatorCommand::Inspect { input }) => {
            let op = RfOperator::from_blob(&read_text(&input)?)?;
            let shown = op.freq_indices().len().min(8);
            println!("n      {}", op.n());
            println!("m      {}", op.m());
            println!("seed   {}", op.seed());
            println!("ratio  {}", op.ratio());
            println!("scale  {}", op.scale());
            println!(
                "freqs  {:?}{}",
                &op.freq_indices()[..shown],
                if op.m() > shown { " ..." } else { "" }
            );
            println!("signs  {} negative", op.signs().iter().filter(|&&s| s < 0.0).count());
            Ok(())
        }
        Command::Isometry(a) => experiment(ExperimentKind::Isometry, &a),
        Command::Calcium(a) => experiment(ExperimentKind::Calcium, &a),
        Command::Vorticity(a) => experiment(ExperimentKind::Vorticity, &a),
        Command::Manifold(a) => experiment(ExperimentKind::Manifold, &a),
        Command::Scaling(a) => experiment(ExperimentKind::Scaling, &a),
    }
}

fn read_text(path: &Path) -> Result<String, RfError> {
    if !path.exists() {
        return Err(RfError::MissingPath(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

fn compress(args: &CompressArgs) -> Result<(), RfError> {
    let x = ingest_matrix(&args.input)?;
    let op = match (&args.operator, args.m) {
        (Some(path), _) => RfOperator::from_blob(&read_text(path)?)?,
        (None, Some(m)) => RfOperator::new(x.rows(), m, args.seed.unwrap_or(0))?,
        (None, None) => unreachable!("clap requires --m without --operator"),
    };
    if let Some(n) = args.n {
        if n != x.rows() {
            return Err(RfError::DimensionMismatch {
                expected: n,
                got: x.rows(),
            });
        }
    }
    let z = op.apply_batch(&x)?;
    write_matrix(&args.out, &z)?;
    let manifest = serde_json::json!({
        "command": "compress",
        "operator": serde_json::from_str::<serde_json::Value>(&op.to_blob()).expect("blob is JSON"),
        "input": args.input,
        "input_sha256": x.content_hash(),
        "output": args.out,
        "output_sha256": z.content_hash(),
        "versions": { "rfkit": env!("CARGO_PKG_VERSION") },
    });
    let manifest_path = with_suffix(&args.out, ".manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    println!("{} ({}x{} complex)", args.out.display(), z.rows(), z.cols());
    println!("{}", manifest_path.display());
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn experiment(kind: ExperimentKind, args: &ExperimentArgs) -> Result<(), RfError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if config.experiment != kind {
        return Err(RfError::Config(format!(
            "{} describes a {} experiment, not {}",
            args.config.display(),
            config.experiment.as_str(),
            kind.as_str()
        )));
    }
    if args.full {
        config.apply_full_scale();
    }
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    if !args.ratio.is_empty() {
        config.ratios = args.ratio.clone();
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    let (result, manifest) = run_and_write(&config)?;
    report(&result);
    println!("{}", manifest.display());
    Ok(())
}

fn report(result: &SweepResult) {
    for s in result.summary() {
        eprintln!(
            "{:<14} {:<6} {:>8} {:<20} {:>10.4} ± {:.4} (n={})",
            s.variant, s.method, s.ratio, s.metric, s.mean, s.std, s.count
        );
    }
    let failures = result.failures().count();
    if failures > 0 {
        eprintln!("{failures} failed grid points recorded");
    }
}
