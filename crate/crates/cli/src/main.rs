use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semicomp::copulas::CopulaFamily;
use semicomp::dataset::{read_csv, write_csv, write_latent_csv};
use semicomp::experiments::config::{ModelChoice, StudyConfig, StudyKind};
use semicomp::experiments::report::{FitReport, ModelReport, StudyReport};
use semicomp::experiments::study::{run_fit, run_study1, run_study2, FAILURE_THRESHOLD};
use semicomp::likelihood::ModelSpec;
use semicomp::margins::MarginFamily;
use semicomp::simulation::{simulate_stream, summarize_censoring};
use semicomp::ModelError;

/// Copula regression for semi-competing risks data.
#[derive(Parser, Debug)]
#[command(name = "semicomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit copula models to a CSV dataset.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset with header x,d1,y,d2,w1..wp (overrides the config).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Simulate one dataset and write it as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the latent draws (t1, t2, c, u, v, q).
        #[arg(long)]
        latent: bool,
    },
    /// Cox versus copula models 1 and 2 on replicated data.
    Study1 {
        #[command(flatten)]
        common: Common,
    },
    /// Margin selection by AIC on replicated data.
    Study2 {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Subjects per dataset.
    #[arg(long)]
    n: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        if e.is_data_error() {
            Failure::data(e.to_string())
        } else {
            Failure::usage(e.to_string())
        }
    }
}

fn load_config(common: &Common) -> Result<StudyConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            StudyConfig::from_json(&text)?
        }
        None => StudyConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.sim.seed = seed;
    }
    if let Some(reps) = common.reps {
        cfg.replications = reps;
    }
    if let Some(n) = common.n {
        cfg.sim.n = n;
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn output_dir(cfg: &StudyConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_reports<T: serde::Serialize>(dir: &Path, stem: &str, report: &T, text: &str) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(report).map_err(|e| Failure::usage(e.to_string()))?;
    write_text(&dir.join(format!("{stem}.json")), &json)?;
    write_text(&dir.join(format!("{stem}.txt")), text)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn all_models() -> Vec<ModelChoice> {
    MarginFamily::ALL
        .iter()
        .flat_map(|&margin| CopulaFamily::ALL.iter().map(move |&copula| ModelChoice { copula, margin }))
        .collect()
}

fn cmd_fit(common: &Common, data: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    if cfg.threads == 0 {
        return Err(Failure::usage("threads must be at least 1"));
    }
    let path = data
        .or_else(|| cfg.data.clone())
        .ok_or_else(|| Failure::usage("fit needs a dataset: pass --data or set \"data\" in the config"))?;
    let file = File::open(&path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let records = read_csv(file).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let p = records[0].w.len();
    let names = cfg.covariate_names(p)?;
    let choices = if cfg.models_to_fit.is_empty() { all_models() } else { cfg.models_to_fit.clone() };
    let specs: Vec<ModelSpec> = choices.iter().map(|m| ModelSpec::new(m.copula, m.margin, p)).collect();
    let dir = output_dir(&cfg)?;
    log::info!("fitting {} models to {} records", specs.len(), records.len());
    let fits = run_fit(&specs, &records, cfg.threads)?;
    let models = fits
        .iter()
        .zip(&specs)
        .map(|(result, spec)| match result {
            Ok(f) => ModelReport::from_fit(f, &names, &cfg.time_grid),
            Err(e) => {
                log::warn!("{}: {e}", spec.label());
                ModelReport::failed(spec.label(), e)
            }
        })
        .collect();
    let report = FitReport::new(records.len(), names, summarize_censoring(&records), models);
    let text = report.to_text();
    write_reports(&dir, "fit_report", &report, &text)?;
    print!("{text}");
    let failed = report.failed_models();
    if failed as f64 > FAILURE_THRESHOLD * report.models.len() as f64 {
        return Err(Failure::numerical(format!("{failed} of {} models failed to converge", report.models.len())));
    }
    Ok(())
}

fn cmd_simulate(common: &Common, latent: bool) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let kind = cfg.kind.unwrap_or(StudyKind::Study1);
    let sim = cfg.sim_config(kind)?;
    let dir = output_dir(&cfg)?;
    let out = simulate_stream(&sim, 0)?;
    let path = dir.join("data.csv");
    write_csv(&out.records, create(&path)?).map_err(|e| Failure::usage(e.to_string()))?;
    log::info!("wrote {}", path.display());
    if latent {
        let path = dir.join("latent.csv");
        write_latent_csv(&out.latent, create(&path)?).map_err(|e| Failure::usage(e.to_string()))?;
        log::info!("wrote {}", path.display());
    }
    let s = summarize_censoring(&out.records);
    println!(
        "{} records from {} (seed {}): non-terminal censored {:.3}, terminal censored {:.3}",
        out.records.len(),
        sim.spec.label(),
        sim.seed,
        s.nonterminal_censored,
        s.terminal_censored
    );
    Ok(())
}

fn cmd_study(common: &Common, kind: StudyKind) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let plan = cfg.plan(kind)?;
    let dir = output_dir(&cfg)?;
    log::info!(
        "{} replications of n = {} from {} on {} threads",
        plan.replications,
        plan.sim.n,
        plan.sim.spec.label(),
        plan.threads
    );
    let (report, stem) = match kind {
        StudyKind::Study2 => (StudyReport::from_outcome(&run_study2(&plan)?), "study2_report"),
        _ => (StudyReport::from_outcome(&run_study1(&plan)?), "study1_report"),
    };
    let text = report.to_text();
    write_reports(&dir, stem, &report, &text)?;
    print!("{text}");
    if report.flagged {
        return Err(Failure::numerical("more than 5% of replications failed in at least one table"));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Fit { common, data } => cmd_fit(common, data.clone()),
        Command::Simulate { common, latent } => cmd_simulate(common, *latent),
        Command::Study1 { common } => cmd_study(common, StudyKind::Study1),
        Command::Study2 { common } => cmd_study(common, StudyKind::Study2),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
