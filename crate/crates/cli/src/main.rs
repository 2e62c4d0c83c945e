use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tk_core::crt::{crt_calibration, CalibrationConfig};
use tk_core::experiment::{self, ExperimentConfig, Method, SummaryRow};
use tk_core::scenario::ScenarioName;

#[derive(Parser)]
#[command(name = "tk", version, about = "Tilted knockoff simulations")]
struct Cli {
    /// Worker threads (defaults to all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replicated simulations and write a results CSV
    Run(RunArgs),
    /// Summarize a results CSV per scenario, method and q
    Summarize {
        path: PathBuf,
        /// Emit JSON instead of a table
        #[arg(long)]
        json: bool,
    },
    /// Check CRT p-value calibration on a small selected-sample design
    CrtCalibration(CrtArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<ScenarioName>,
    #[arg(long)]
    scale: Option<f64>,
    /// Comma-separated method names
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated FDR levels
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<f64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    is_draws: Option<usize>,
    #[arg(long)]
    y_bins: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CrtArgs {
    /// JSON calibration config; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    y_bins: Option<usize>,
    #[arg(long)]
    is_draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the full report (including p-values) as JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> AnyResult<T> {
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

/// Split on commas outside parentheses so `two_stage(0.25)` stays whole.
fn parse_methods(s: &str) -> AnyResult<Vec<Method>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].parse()?);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].parse()?);
    Ok(out)
}

fn experiment_config(args: &RunArgs) -> AnyResult<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.scenario {
        cfg.scenario = v;
    }
    if let Some(v) = args.scale {
        cfg.scale = v;
    }
    if let Some(v) = &args.methods {
        cfg.methods = parse_methods(v)?;
    }
    if let Some(v) = &args.q {
        cfg.q_levels = v.clone();
    }
    if let Some(v) = args.reps {
        cfg.replicates = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.is_draws {
        cfg.is_draws = Some(v);
    }
    if let Some(v) = args.y_bins {
        cfg.y_bins = v;
    }
    if let Some(v) = &args.out {
        cfg.output_path = Some(v.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(rows: &[SummaryRow]) {
    println!(
        "{:<16} {:<48} {:>5} {:>5} {:>9} {:>8} {:>10} {:>8} {:>9}",
        "scenario", "method", "q", "reps", "mean_fdp", "se_fdp", "mean_power", "se_pow", "mean_sel"
    );
    for r in rows {
        println!(
            "{:<16} {:<48} {:>5} {:>5} {:>9.4} {:>8.4} {:>10.4} {:>8.4} {:>9.2}",
            r.scenario, r.method, r.q, r.replicates, r.mean_fdp, r.se_fdp, r.mean_power, r.se_power, r.mean_selected
        );
    }
}

fn run(args: RunArgs) -> AnyResult<()> {
    let cfg = experiment_config(&args)?;
    let out_path = cfg.output_path.clone().unwrap_or_else(|| PathBuf::from("results.csv"));
    log::info!("running {} replicates of {} ({} methods)", cfg.replicates, cfg.scenario, cfg.methods.len());
    let output = experiment::run_experiment(&cfg)?;
    experiment::write_outputs(&cfg, &output, &out_path)?;
    print_summary(&experiment::aggregate(&output.records));
    if !output.failures.is_empty() {
        eprintln!("{} method runs failed; see {}", output.failures.len(), experiment::metadata_path(&out_path).display());
    }
    eprintln!("wrote {}", out_path.display());
    Ok(())
}

fn summarize(path: &Path, json: bool) -> AnyResult<()> {
    let records = experiment::read_csv(File::open(path).map_err(|e| format!("{}: {e}", path.display()))?)?;
    if records.is_empty() {
        return Err("results file has no records".into());
    }
    let rows = experiment::aggregate(&records);
    if json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        print_summary(&rows);
    }
    Ok(())
}

fn crt(args: CrtArgs) -> AnyResult<()> {
    let mut cfg: CalibrationConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => CalibrationConfig::default(),
    };
    if let Some(v) = args.runs {
        cfg.runs = v;
    }
    if let Some(v) = args.resamples {
        cfg.resamples = v;
    }
    if let Some(v) = &args.alpha {
        cfg.alphas = v.clone();
    }
    if let Some(v) = args.y_bins {
        cfg.y_bins = v;
    }
    if let Some(v) = args.is_draws {
        cfg.is_draws = Some(v);
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    let report = crt_calibration(&cfg)?;
    println!("target covariate {} with K = {}, {} runs ({} failed)", report.j, report.resamples, report.tilted.len(), report.failures);
    println!("{:<11} {:>6} {:>10} {:>8}", "resampler", "alpha", "rejection", "se");
    for r in &report.rows {
        println!("{:<11} {:>6} {:>10.4} {:>8.4}", r.resampler, r.alpha, r.rejection_rate, r.se);
    }
    if let Some(p) = &args.out {
        serde_json::to_writer_pretty(File::create(p)?, &report)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Summarize { path, json } => summarize(&path, json),
        Command::CrtCalibration(a) => crt(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
