//! Command-line front end: dataset simulation, the replication study,
//! bootstrap method comparisons, sensor-data ingestion and evaluation, and
//! factor-analysis exports.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use falris::dataset::{DataSet, Scaler};
use falris::error::{Error, ErrorKind, Result};
use falris::factor;
use falris::ingest::{
    ingest_sensor_csv, render_correlation_csv, render_real_data_csv, render_scree_csv,
    run_real_data,
};
use falris::metrics::BootstrapMode;
use falris::simulate::{simulate_dataset, SimConfig};
use falris::study::{
    compare_methods, export_results, import_results_json, run_simulation_study, ComparisonRow,
    ExportFormat, Method, MetricName, StudyConfig, StudyParams, ALL_METHODS,
};

#[derive(Parser)]
#[command(name = "falris", version, about = "Reliability estimation from binary component states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one benchmark system dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Run the replication study over the benchmark systems.
    RunStudy(RunStudyArgs),
    /// Bootstrap comparison between two methods of a saved study.
    Compare(CompareArgs),
    /// Ingest a sensor CSV and evaluate the methods on a held-out split.
    RealData(RealDataArgs),
    /// Factor-analysis exports (scree values, loadings) for a dataset CSV.
    Fa(FaArgs),
    /// Re-export a saved study result in another format.
    Export(ExportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Benchmark system id (1–4).
    #[arg(long)]
    system: u8,
    #[arg(long, default_value_t = 125)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    y0: Option<f64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Hyperparameter overrides; a `--config` file applies first, flags win.
#[derive(Args)]
struct ParamFlags {
    /// Flat key=value file, keys namespaced as module.param.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Level of the sequential factor-count test.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    y0: Option<f64>,
    #[arg(long)]
    knn_k: Option<usize>,
    #[arg(long)]
    knn_q: Option<f64>,
    #[arg(long)]
    rf_trees: Option<usize>,
    #[arg(long)]
    mlp_epochs: Option<usize>,
    #[arg(long)]
    mlp_batch: Option<usize>,
    #[arg(long)]
    mlp_learning_rate: Option<f64>,
}

impl ParamFlags {
    fn resolve(&self) -> Result<StudyParams> {
        let mut params = StudyParams::default();
        if let Some(path) = &self.config {
            for (key, value) in parse_config(path)? {
                apply_param(&mut params, &key, &value)?;
            }
        }
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    params.$field = v;
                }
            };
        }
        take!(train_fraction);
        take!(alpha);
        take!(rho);
        take!(sigma);
        take!(y0);
        take!(knn_k);
        take!(knn_q);
        take!(rf_trees);
        take!(mlp_epochs);
        take!(mlp_batch);
        take!(mlp_learning_rate);
        Ok(params)
    }
}

#[derive(Args)]
struct RunStudyArgs {
    /// Comma-separated system ids.
    #[arg(long, value_delimiter = ',', default_values_t = [1u8, 2, 3, 4])]
    systems: Vec<u8>,
    #[arg(long, default_value_t = 100)]
    replications: usize,
    #[arg(long, default_value_t = 125)]
    n: usize,
    /// Comma-separated subset of fa-lr-is,ann,knn,rf.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Study seed (required: runs must be reproducible).
    #[arg(long)]
    seed: u64,
    /// Directory for study.json / study.csv / study_boxplot.tsv.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    params: ParamFlags,
}

#[derive(Args)]
struct CompareArgs {
    /// Path to a study.json produced by run-study.
    #[arg(long)]
    study: PathBuf,
    #[arg(long, default_value = "auc")]
    metric: String,
    #[arg(long, default_value = "fa-lr-is")]
    method_a: String,
    #[arg(long, default_value = "ann")]
    method_b: String,
    #[arg(long, default_value_t = 10_000)]
    resamples: usize,
    #[arg(long)]
    seed: u64,
    /// Use the literally published p-value rule instead of the two-sided one.
    #[arg(long)]
    paper_literal: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RealDataArgs {
    /// Sensor CSV with a header row and a status column.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 60)]
    subsample: usize,
    #[arg(long, default_value = "machine_status")]
    status_column: String,
    /// Override the NORMAL→1/else→0 rule, e.g. "NORMAL=1,BROKEN=0,RECOVERING=0".
    #[arg(long)]
    status_map: Option<String>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    params: ParamFlags,
}

#[derive(Args)]
struct FaArgs {
    /// Dataset CSV (x1..xp,y[,true_r]) as written by `simulate`.
    #[arg(long)]
    input: PathBuf,
    /// Emit correlation eigenvalues as index,eigenvalue CSV.
    #[arg(long, conflicts_with = "loadings")]
    scree: bool,
    /// Emit varimax-rotated loadings as CSV.
    #[arg(long)]
    loadings: bool,
    /// Fixed factor count; defaults to the sequential-test choice.
    #[arg(long)]
    factors: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    study: PathBuf,
    /// csv, json, or boxplot.
    #[arg(long)]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

fn parse_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidParameter(format!(
                "config line {} is not key=value: '{raw}'",
                lineno + 1
            ))
        })?;
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

fn apply_param(params: &mut StudyParams, key: &str, value: &str) -> Result<()> {
    fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad value '{value}' for {key}")))
    }
    match key {
        "study.train_fraction" => params.train_fraction = num(key, value)?,
        "pipeline.alpha" => params.alpha = num(key, value)?,
        "simulate.rho" => params.rho = num(key, value)?,
        "simulate.sigma" => params.sigma = num(key, value)?,
        "simulate.y0" => params.y0 = num(key, value)?,
        "knn.k" => params.knn_k = num(key, value)?,
        "knn.q" => params.knn_q = num(key, value)?,
        "rf.trees" => params.rf_trees = num(key, value)?,
        "mlp.epochs" => params.mlp_epochs = num(key, value)?,
        "mlp.batch" => params.mlp_batch = num(key, value)?,
        "mlp.learning_rate" => params.mlp_learning_rate = num(key, value)?,
        other => {
            return Err(Error::InvalidParameter(format!("unknown config key '{other}'")));
        }
    }
    Ok(())
}

fn parse_methods(raw: &Option<Vec<String>>) -> Result<Vec<Method>> {
    match raw {
        None => Ok(ALL_METHODS.to_vec()),
        Some(names) => names.iter().map(|s| s.parse()).collect(),
    }
}

fn parse_status_map(raw: &str) -> Result<HashMap<String, u8>> {
    let mut map = HashMap::new();
    for part in raw.split(',') {
        let (status, value) = part.split_once('=').ok_or_else(|| {
            Error::InvalidParameter(format!("status-map entry '{part}' is not NAME=0|1"))
        })?;
        let bit: u8 = value
            .trim()
            .parse()
            .ok()
            .filter(|v| *v <= 1)
            .ok_or_else(|| Error::InvalidParameter(format!("status '{status}' must map to 0 or 1")))?;
        map.insert(status.trim().to_string(), bit);
    }
    Ok(map)
}

fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("system,metric,method_a,method_b,mean_difference,p_value\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6}\n",
            r.system, r.metric, r.method_a, r.method_b, r.mean_difference, r.p_value
        ));
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let mut cfg = SimConfig::new(args.n, args.seed);
            if let Some(v) = args.rho {
                cfg.rho = v;
            }
            if let Some(v) = args.sigma {
                cfg.sigma = v;
            }
            if let Some(v) = args.y0 {
                cfg.y0 = v;
            }
            let ds = simulate_dataset(args.system, &cfg)?;
            if let Some(dir) = args.out.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)?;
                }
            }
            ds.write_csv_path(&args.out)?;
            let prevalence =
                ds.labels().iter().filter(|&&y| y == 1).count() as f64 / ds.n() as f64;
            println!(
                "wrote {} ({} rows, {} components, operative share {prevalence:.3})",
                args.out.display(),
                ds.n(),
                ds.p()
            );
        }
        Command::RunStudy(args) => {
            let mut cfg = StudyConfig::new(args.systems, args.replications, args.n, args.seed);
            cfg.methods = parse_methods(&args.methods)?;
            cfg.params = args.params.resolve()?;
            cfg.output_dir = Some(args.out_dir.display().to_string());
            let result = run_simulation_study(&cfg)?;
            std::fs::create_dir_all(&args.out_dir)?;
            for (format, name) in [
                (ExportFormat::Json, "study.json"),
                (ExportFormat::Csv, "study.csv"),
                (ExportFormat::BoxplotTsv, "study_boxplot.tsv"),
            ] {
                export_results(&result, format, &args.out_dir.join(name))?;
            }
            if !result.failures.is_empty() {
                eprintln!("{} replication failures recorded in study.json", result.failures.len());
            }
            print!("{}", falris::study::render_results(&result, ExportFormat::Csv)?);
            println!("study artifacts written to {}", args.out_dir.display());
        }
        Command::Compare(args) => {
            let result = import_results_json(&std::fs::read_to_string(&args.study)?)?;
            let metric: MetricName = args.metric.parse()?;
            let method_a: Method = args.method_a.parse()?;
            let method_b: Method = args.method_b.parse()?;
            let mode = if args.paper_literal {
                BootstrapMode::PaperLiteral
            } else {
                BootstrapMode::Standard
            };
            let rows = compare_methods(
                &result,
                metric,
                method_a,
                method_b,
                args.resamples,
                args.seed,
                mode,
            )?;
            let csv = comparison_csv(&rows);
            if let Some(out) = &args.out {
                write_text(out, &csv)?;
            }
            print!("{csv}");
        }
        Command::RealData(args) => {
            let status_map = args.status_map.as_deref().map(parse_status_map).transpose()?;
            let (ds, report) = ingest_sensor_csv(
                &args.input,
                args.subsample,
                &args.status_column,
                status_map.as_ref(),
            )?;
            eprintln!(
                "ingested {} of {} rows, {} sensors kept, {} cells imputed",
                report.kept_rows,
                report.total_rows,
                report.column_bounds.len(),
                report.imputed_cells
            );
            for (name, reason) in &report.dropped_columns {
                eprintln!("dropped column {name}: {reason:?}");
            }
            let methods = parse_methods(&args.methods)?;
            let params = args.params.resolve()?;
            let result = run_real_data(&ds, &methods, &params, args.seed)?;
            std::fs::create_dir_all(&args.out_dir)?;
            let metrics_csv = render_real_data_csv(&result);
            write_text(&args.out_dir.join("real_data_metrics.csv"), &metrics_csv)?;
            write_text(
                &args.out_dir.join("correlation.csv"),
                &render_correlation_csv(&result.correlation),
            )?;
            write_text(&args.out_dir.join("scree.csv"), &render_scree_csv(&result.scree))?;
            print!("{metrics_csv}");
            println!("real-data artifacts written to {}", args.out_dir.display());
        }
        Command::Fa(args) => {
            let ds = DataSet::read_csv_path(&args.input)?;
            let scaler = Scaler::fit(ds.states())?;
            let u = scaler.apply(ds.states())?;
            let text = if args.scree {
                let scree = factor::eigen_scree(&u)?;
                let mut out = String::from("index,eigenvalue\n");
                for (i, v) in scree.iter().enumerate() {
                    out.push_str(&format!("{},{v:.8}\n", i + 1));
                }
                out
            } else if args.loadings {
                let p0 = match args.factors {
                    Some(k) => k,
                    None => factor::select_num_factors(&u, args.alpha)?.p0,
                };
                let model = factor::fit_fa(&u, p0)?;
                let lambda = model.loadings();
                let mut out = String::new();
                for i in 0..lambda.nrows() {
                    let row: Vec<String> =
                        (0..lambda.ncols()).map(|j| format!("{:.8}", lambda[(i, j)])).collect();
                    out.push_str(&row.join(","));
                    out.push('\n');
                }
                out
            } else {
                return Err(Error::InvalidParameter(
                    "fa needs one of --scree or --loadings".into(),
                ));
            };
            if let Some(out) = &args.out {
                write_text(out, &text)?;
            }
            print!("{text}");
        }
        Command::Export(args) => {
            let result = import_results_json(&std::fs::read_to_string(&args.study)?)?;
            let format: ExportFormat = args.format.parse()?;
            export_results(&result, format, &args.out)?;
            println!("wrote {}", args.out.display());
        }
    }
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let is_help = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            std::process::exit(if is_help { 0 } else { 1 });
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        let code = match err.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        };
        std::process::exit(code);
    }
}
