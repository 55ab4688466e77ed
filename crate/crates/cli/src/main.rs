//! Config-driven experiment runner.
//!
//! Exit codes: 0 success, 1 configuration/validation error, 2 a paper
//! bound or claim was violated beyond tolerance (scientific regression),
//! 3 runtime error. Errors print machine-readable JSON on stderr.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use config::{apply_override, ExperimentConfig};
use sidforest::data::{generate_sample, load_csv, Dataset};
use sidforest::error::{Error, Result};
use sidforest::evaluation::{
    bias_variance_decompose, check_prop2_bounds, check_theorem2_relevance, report_as_row,
    reports_to_csv, run_convergence_sweep, Prop2Config, SweepConfig,
};
use sidforest::forest::{serialize_tree, TrainedForest};
use sidforest::model::{describe_models, RegressionModel, MODEL_IDS};
use sidforest::population::{estimate_sid_alpha, SearchConfig};
use sidforest::ARTIFACT_VERSION;

#[derive(Parser)]
#[command(
    name = "sidforest",
    version,
    about = "Random-forest regression experiments with a population impurity oracle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON config file; missing keys take documented defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key by dotted path, e.g. --set forest.k=4
    /// (repeatable; values parse as JSON).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override (also: SIDFOREST_OUT).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a forest and serialize its trees.
    Train(RunArgs),
    /// Monte-Carlo bias/variance decomposition at fresh test points.
    Decompose(RunArgs),
    /// Decomposition sweep over (model, n, gamma0) with log-log slopes.
    Sweep(RunArgs),
    /// Estimate the SID constant from below on random cells.
    SidCheck(RunArgs),
    /// Binary-model bias and variance envelopes over a height grid.
    Prop2(RunArgs),
    /// Loss lower bound when a relevant feature is dropped from training.
    Relevance(RunArgs),
    /// List registered models, their parameters, and SID constants.
    DescribeModels {
        /// Show a single model id.
        id: Option<String>,
        /// Machine-readable listing.
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::DescribeModels { id, json } => describe_models_cmd(id.as_deref(), json),
        Command::Train(args) => with_config(&args, run_train),
        Command::Decompose(args) => with_config(&args, run_decompose),
        Command::Sweep(args) => with_config(&args, run_sweep),
        Command::SidCheck(args) => with_config(&args, run_sid_check),
        Command::Prop2(args) => with_config(&args, run_prop2),
        Command::Relevance(args) => with_config(&args, run_relevance),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let kind = classify(&e);
            eprintln!(
                "{}",
                json!({"error": {"kind": kind, "message": e.to_string()}})
            );
            match kind {
                "validation" => ExitCode::from(1),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn classify(e: &Error) -> &'static str {
    match e {
        Error::InvalidParameter { .. }
        | Error::UnknownModel { .. }
        | Error::CsvParse { .. }
        | Error::FeatureOutOfBounds { .. }
        | Error::NoObservations
        | Error::DimensionMismatch { .. }
        | Error::EmptyFeatureSet
        | Error::EmptySubsample
        | Error::EmptySweep
        | Error::FeatureOutOfRange { .. }
        | Error::OracleUnavailable => "validation",
        _ => "runtime",
    }
}

fn with_config(args: &RunArgs, run: fn(&ExperimentConfig) -> Result<ExitCode>) -> Result<ExitCode> {
    let mut value: Value = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| {
            Error::InvalidParameter {
                field: "config".into(),
                message: format!("{}: {e}", path.display()),
            }
        })?,
        None => json!({}),
    };
    if let Ok(dir) = std::env::var("SIDFOREST_OUT") {
        apply_override(&mut value, &format!("out_dir={dir}"))?;
    }
    for assignment in &args.sets {
        apply_override(&mut value, assignment)?;
    }
    if let Some(seed) = args.seed {
        apply_override(&mut value, &format!("seed={seed}"))?;
    }
    if let Some(dir) = &args.out_dir {
        apply_override(&mut value, &format!("out_dir={}", dir.display()))?;
    }
    let cfg = ExperimentConfig::from_value(value)?;
    if let Some(workers) = cfg.workers {
        // The global pool can only be installed once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    run(&cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_resolved_config(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let value = json!({
        "artifact_version": ARTIFACT_VERSION,
        "config": cfg,
    });
    write_json(&dir.join("config.resolved.json"), &value)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut payload = serde_json::to_string_pretty(value)?;
    payload.push('\n');
    std::fs::write(path, payload)?;
    Ok(())
}

fn wrap_report<T: Serialize>(cfg: &ExperimentConfig, body: &T) -> Value {
    json!({
        "artifact_version": ARTIFACT_VERSION,
        "config": cfg,
        "report": body,
    })
}

fn resolve_data(cfg: &ExperimentConfig, model: Option<&RegressionModel>) -> Result<Dataset> {
    match &cfg.data.csv {
        Some(path) => {
            let data = load_csv(Path::new(path))?;
            if let Some(m) = model {
                if data.p() != m.p() {
                    return Err(Error::DimensionMismatch {
                        expected: m.p(),
                        got: data.p(),
                    });
                }
            }
            Ok(data)
        }
        None => {
            let model = model.ok_or(Error::OracleUnavailable)?;
            generate_sample(model, cfg.data.n, cfg.data.seed)
        }
    }
}

fn require_model(cfg: &ExperimentConfig) -> Result<RegressionModel> {
    cfg.model.build()?.ok_or(Error::OracleUnavailable)
}

fn bound_violation(message: &str) -> ExitCode {
    eprintln!(
        "{}",
        json!({"error": {"kind": "bound-violation", "message": message}})
    );
    ExitCode::from(2)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn run_train(cfg: &ExperimentConfig) -> Result<ExitCode> {
    let model = cfg.model.build()?;
    let data = resolve_data(cfg, model.as_ref())?;
    let fc = cfg.forest.to_config(model.as_ref(), cfg.seed);
    let forest = TrainedForest::train(&fc, &data)?;
    let dir = out_dir(cfg)?;
    write_resolved_config(&dir, cfg)?;
    let tree_dir = dir.join("trees");
    std::fs::create_dir_all(&tree_dir)?;
    let mut files = Vec::new();
    for (idx, tree) in forest.trees.iter().enumerate() {
        let a = idx / fc.theta_draws;
        let m = idx % fc.theta_draws;
        let name = format!("tree_a{a}_m{m}.json");
        std::fs::write(tree_dir.join(&name), serialize_tree(tree))?;
        files.push(name);
    }
    let manifest = wrap_report(
        cfg,
        &json!({
            "n": data.n(),
            "p": data.p(),
            "trees": files,
            "subsample_size": forest.subsamples[0].len(),
        }),
    );
    write_json(&dir.join("manifest.json"), &manifest)?;
    println!("trained {} trees -> {}", forest.tree_count(), dir.display());
    Ok(ExitCode::SUCCESS)
}

fn run_decompose(cfg: &ExperimentConfig) -> Result<ExitCode> {
    let model = require_model(cfg)?;
    let data = resolve_data(cfg, Some(&model))?;
    let fc = cfg.forest.to_config(Some(&model), cfg.seed);
    let report = bias_variance_decompose(&model, &data, &fc, cfg.mc.n_test)?;
    let dir = out_dir(cfg)?;
    write_resolved_config(&dir, cfg)?;
    std::fs::write(
        dir.join("report.csv"),
        reports_to_csv(&[report_as_row(&report)]),
    )?;
    write_json(&dir.join("report.json"), &wrap_report(cfg, &report))?;
    println!(
        "sq_bias={} est_var={} total_loss={} -> {}",
        report.sq_bias,
        report.est_var,
        report.total_loss,
        dir.display()
    );
    if report.passes() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(bound_violation(
            "a closed-form envelope was exceeded beyond 3 standard errors",
        ))
    }
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<ExitCode> {
    let mut models = Vec::new();
    if let Some(m) = cfg.model.build()? {
        models.push(m);
    }
    for spec in &cfg.sweep.models {
        if let Some(m) = spec.build()? {
            models.push(m);
        }
    }
    let sweep_cfg = SweepConfig {
        ns: cfg.sweep.ns.clone(),
        gamma0s: cfg.sweep.gamma0s.clone(),
        c_height: cfg.sweep.c_height,
        b: cfg.forest.b,
        n_subsamples: cfg.forest.subsamples,
        theta_draws: cfg.forest.theta_draws,
        n_test: cfg.mc.n_test,
        seed: cfg.seed,
    };
    let result = run_convergence_sweep(&models, &sweep_cfg)?;
    let dir = out_dir(cfg)?;
    write_resolved_config(&dir, cfg)?;
    std::fs::write(dir.join("sweep.csv"), reports_to_csv(&result.rows))?;
    write_json(&dir.join("sweep.json"), &wrap_report(cfg, &result))?;
    for s in &result.slopes {
        println!(
            "model={} gamma0={} loss ~ n^{:.3}",
            s.model_id, s.gamma0, s.slope
        );
    }
    println!("{} rows -> {}", result.rows.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}

fn run_sid_check(cfg: &ExperimentConfig) -> Result<ExitCode> {
    let model = require_model(cfg)?;
    let cert = estimate_sid_alpha(
        &model,
        cfg.mc.sid_budget,
        cfg.mc.sid_max_depth,
        cfg.seed,
        &SearchConfig::default(),
    )?;
    let dir = out_dir(cfg)?;
    write_resolved_config(&dir, cfg)?;
    write_json(&dir.join("sid.json"), &wrap_report(cfg, &cert))?;
    println!(
        "alpha_hat={}{} claimed={:?} cells={} -> {}",
        cert.alpha_hat,
        if cert.unbounded { " (unbounded)" } else { "" },
        cert.claimed_alpha1,
        cert.cells_probed,
        dir.display()
    );
    let refuted = match cert.claimed_alpha1 {
        Some(claimed) => cert.effective_alpha() > claimed * (1.0 + 1e-9),
        None => false,
    };
    if refuted {
        Ok(bound_violation(
            "estimated SID constant exceeds the claimed constant",
        ))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn run_prop2(cfg: &ExperimentConfig) -> Result<ExitCode> {
    let p2 = Prop2Config {
        s_star: cfg.prop2.s_star,
        beta: cfg.prop2.beta,
        p: cfg.prop2.p,
        gamma0: cfg.prop2.gamma0,
        n: cfg.prop2.n,
        k_grid: cfg.prop2.k_grid.clone(),
        m_eps: cfg.prop2.m_eps,
        theta_draws: cfg.forest.theta_draws,
        n_test: cfg.mc.n_test,
        seed: cfg.seed,
    };
    let table = check_prop2_bounds(&p2)?;
    let dir = out_dir(cfg)?;
    write_resolved_config(&dir, cfg)?;
    let rows: Vec<_> = table.reports.iter().map(report_as_row).collect();
    std::fs::write(dir.join("prop2.csv"), reports_to_csv(&rows))?;
    write_json(&dir.join("prop2.json"), &wrap_report(cfg, &table))?;
    for r in &table.reports {
        println!(
            "k={} sq_bias={} (bound {:?}) est_var={} (bound {:?})",
            r.config.k, r.sq_bias, r.bound_bias, r.est_var, r.bound_var
        );
    }
    if table.all_pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(bound_violation(
            "a binary-model envelope was exceeded beyond 3 standard errors",
        ))
    }
}

fn run_relevance(cfg: &ExperimentConfig) -> Result<ExitCode> {
    let model = require_model(cfg)?;
    let data = resolve_data(cfg, Some(&model))?;
    let fc = cfg.forest.to_config(Some(&model), cfg.seed);
    let j = cfg.relevance.feature - 1; // config is 1-based
    let report =
        check_theorem2_relevance(&model, j, &data, &fc, cfg.mc.n_test, cfg.mc.iota_budget)?;
    let dir = out_dir(cfg)?;
    write_resolved_config(&dir, cfg)?;
    write_json(&dir.join("relevance.json"), &wrap_report(cfg, &report))?;
    println!(
        "dropped x{} iota={} loss_without={} -> {}",
        cfg.relevance.feature,
        report.iota,
        report.loss_without,
        dir.display()
    );
    if report.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(bound_violation(
            "loss without the relevant feature fell below iota - 3 SE",
        ))
    }
}

fn describe_models_cmd(id: Option<&str>, json_mode: bool) -> Result<ExitCode> {
    let listing = describe_models();
    if let Some(wanted) = id {
        let Some(entry) = listing.iter().find(|e| e.id == wanted) else {
            let suggestions: Vec<&str> = MODEL_IDS
                .iter()
                .copied()
                .filter(|known| {
                    known.contains(wanted)
                        || wanted.contains(known)
                        || known
                            .chars()
                            .zip(wanted.chars())
                            .take_while(|(a, b)| a == b)
                            .count()
                            >= 3
                })
                .collect();
            return Err(Error::UnknownModel {
                id: wanted.to_string(),
                known: if suggestions.is_empty() {
                    MODEL_IDS.join(", ")
                } else {
                    suggestions.join(", ")
                },
            });
        };
        if json_mode {
            println!("{}", serde_json::to_string_pretty(entry)?);
        } else {
            println!(
                "{}\n  {}\n  params: {}\n  SID constant: {}",
                entry.id, entry.summary, entry.params, entry.sid_constant
            );
            if let Some(a) = entry.default_alpha1 {
                println!("  default instance constant: {a}");
            }
        }
        return Ok(ExitCode::SUCCESS);
    }
    if json_mode {
        println!("{}", serde_json::to_string_pretty(&listing)?);
    } else {
        for entry in &listing {
            let alpha = entry
                .default_alpha1
                .map(|a| format!(" [default: {a:.4}]"))
                .unwrap_or_default();
            println!("{:<18} {}", entry.id, entry.summary);
            println!("{:<18}   params: {}", "", entry.params);
            println!("{:<18}   SID constant: {}{alpha}", "", entry.sid_constant);
        }
    }
    Ok(ExitCode::SUCCESS)
}
