//! Benchmark CLI: config-driven fitting, filtering, mode decomposition,
//! noise sweeps, and hyperparameter search.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use elto_core::bench::{
    default_sweep_values, elto_modes_from_config, filter_trace, fit_trial_model, noise_sweep,
    run_experiment, write_results_csv, write_results_json, ExperimentConfig, MethodName,
    ResultRecord, SearchMethod,
};
use elto_core::error::{EltoError, Result};
use elto_core::filter::export_trace;
use elto_core::modes::export_decomposition;
use elto_core::operators::save_model;

#[derive(Parser)]
#[command(name = "elto", version, about = "Embedded latent transfer operator benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a filter model and persist it.
    Fit(Common),
    /// Fit, filter the held-out split, and score one-step predictions.
    Filter(Common),
    /// Run a mode-decomposition experiment across the configured methods.
    Modes(Common),
    /// Sweep the experiment's noise axis over methods and trials.
    Sweep(Common),
    /// Run with hyperparameter search enabled (CMA-ES unless configured).
    Search(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration, JSON or TOML.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Stdout summary format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EltoError::Io(format!("{}: {e}", path.display())))?;
    let is_toml = path.extension().map(|e| e == "toml").unwrap_or(false);
    if is_toml {
        toml::from_str(&text)
            .map_err(|e| EltoError::InvalidArgument(format!("{}: {e}", path.display())))
    } else {
        match serde_json::from_str(&text) {
            Ok(cfg) => Ok(cfg),
            Err(json_err) => toml::from_str(&text).map_err(|toml_err| {
                EltoError::InvalidArgument(format!(
                    "{}: not valid JSON ({json_err}) nor TOML ({toml_err})",
                    path.display()
                ))
            }),
        }
    }
}

fn prepare(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    std::fs::create_dir_all(&common.out).map_err(|e| EltoError::Io(e.to_string()))?;
    Ok(cfg)
}

fn emit(records: &[ResultRecord], common: &Common) -> Result<bool> {
    let csv_path = common.out.join("results.csv");
    let json_path = common.out.join("results.json");
    write_results_csv(records, &csv_path)?;
    write_results_json(records, &json_path)?;
    match common.format {
        Format::Csv => {
            for r in records {
                let failures = r.trials.iter().filter(|t| t.failure.is_some()).count();
                println!(
                    "{},{},{},{},mean={:.6e},std={:.6e},trials={},failures={}",
                    r.experiment,
                    r.method,
                    r.noise,
                    r.metric,
                    r.mean,
                    r.std_dev,
                    r.trials.len(),
                    failures
                );
            }
        }
        Format::Json => {
            let text = serde_json::to_string_pretty(records)
                .map_err(|e| EltoError::Internal(e.to_string()))?;
            println!("{text}");
        }
    }
    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(records.iter().all(|r| !r.has_failures()))
}

fn cmd_fit(common: &Common) -> Result<bool> {
    let cfg = prepare(common)?;
    let model = fit_trial_model(&cfg)?;
    let path = common.out.join("model.json");
    save_model(&model, &path)?;
    println!(
        "fit: {} states (r={}), eps=({:.3e}, {:.3e}, {:.3e})",
        model.n_samples(),
        model.state_dim(),
        model.eps_t,
        model.eps_o,
        model.eps_q
    );
    eprintln!("wrote {}", path.display());
    Ok(true)
}

fn cmd_filter(common: &Common) -> Result<bool> {
    let cfg = prepare(common)?;
    let outputs = filter_trace(&cfg)?;
    export_trace(&outputs, &common.out.join("trace.csv"))?;
    let records = run_experiment(&cfg)?;
    emit(&records, common)
}

fn cmd_modes(common: &Common) -> Result<bool> {
    let cfg = prepare(common)?;
    let records = run_experiment(&cfg)?;
    if cfg.effective_methods().contains(&MethodName::Elto) {
        match elto_modes_from_config(&cfg) {
            Ok(dec) => export_decomposition(&dec, &common.out.join("modes.json"))?,
            Err(e) => eprintln!("mode export skipped: {e}"),
        }
    }
    emit(&records, common)
}

fn cmd_sweep(common: &Common) -> Result<bool> {
    let cfg = prepare(common)?;
    let values = if cfg.sweep_values.is_empty() {
        default_sweep_values(cfg.experiment)?
    } else {
        cfg.sweep_values.clone()
    };
    let methods = cfg.effective_methods();
    let records = noise_sweep(&cfg, &values, &methods)?;
    emit(&records, common)
}

fn cmd_search(common: &Common) -> Result<bool> {
    let mut cfg = prepare(common)?;
    if cfg.search.method == SearchMethod::None {
        cfg.search.method = SearchMethod::Cmaes;
    }
    let records = run_experiment(&cfg)?;
    if let Some(rec) = records.iter().find(|r| !r.search_trace.is_empty()) {
        if let Some(best) = rec.search_trace.last() {
            println!("best candidate (log10): {:?}, score {:.6e}", best.candidate, best.score);
        }
    }
    emit(&records, common)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match &cli.cmd {
        Cmd::Fit(c) => cmd_fit(c),
        Cmd::Filter(c) => cmd_filter(c),
        Cmd::Modes(c) => cmd_modes(c),
        Cmd::Sweep(c) => cmd_sweep(c),
        Cmd::Search(c) => cmd_search(c),
    };
    match run {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some trials failed; see results.json");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
