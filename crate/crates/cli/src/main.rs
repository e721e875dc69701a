//! Batch front end for the activation-pattern reserving engine.
//!
//! Subcommands: `synth` (generate a synthetic portfolio), `fit` (estimate the
//! model bundle), `simulate` (predictive reserve distribution), `compare`
//! (pattern model vs independence model vs ODP chain ladder) and `stability`
//! (VaR vs replication count). Every run writes a `run_config.json` echo
//! sufficient to reproduce it bit-exactly; on failure a machine-readable
//! error record goes to stderr and the exit status is nonzero.

mod report;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

use apres_core::baselines::{chain_ladder_odp_bootstrap, OdpBootstrapConfig};
use apres_core::bundle::FittedModelBundle;
use apres_core::ingest::{parse_claims, write_claims, ParseOptions, Portfolio};
use apres_core::pipeline::{fit_bundle, fit_independence_bundle, FitConfig};
use apres_core::schema::CovariateSchema;
use apres_core::severity::Criterion;
use apres_core::sim::{run_reserving, stability_curve, summarize, IbnrSpec, SimulationConfig};
use apres_core::synth::{default_ground_truth, generate_portfolio, truncate_at, GroundTruth};
use apres_core::triangle::build_triangle;

#[derive(Parser)]
#[command(name = "apres", about = "Claims reserving on coverage activation patterns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct IoArgs {
    /// Claim transaction CSV.
    #[arg(long)]
    claims: PathBuf,
    /// Covariate schema JSON.
    #[arg(long)]
    schema: PathBuf,
    /// Evaluation date (YYYY-MM-DD).
    #[arg(long)]
    eval_date: String,
    /// Output directory (overridable via APRES_OUT_DIR).
    #[arg(long)]
    out: PathBuf,
    /// Accept negative paid amounts (recoveries).
    #[arg(long, default_value_t = false)]
    allow_negative: bool,
}

#[derive(Args, Clone)]
struct FitArgs {
    /// Development years <= this bound use the first-period models.
    #[arg(long, default_value_t = 1)]
    period_split: u32,
    /// Stabilization year for RBNS+ treatment.
    #[arg(long, default_value_t = 3)]
    j_star: u32,
    /// Simulation horizon in development years.
    #[arg(long, default_value_t = 10)]
    horizon: u32,
    /// Severity selection criterion (aic or bic).
    #[arg(long, default_value = "aic", value_parser = parse_criterion)]
    criterion: Criterion,
    /// Ridge penalty on non-intercept GLM coefficients.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
}

fn parse_criterion(s: &str) -> std::result::Result<Criterion, String> {
    match s.to_ascii_lowercase().as_str() {
        "aic" => Ok(Criterion::Aic),
        "bic" => Ok(Criterion::Bic),
        other => Err(format!("unknown criterion {other:?} (use aic or bic)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic portfolio from ground-truth parameters.
    Synth {
        /// Output directory (overridable via APRES_OUT_DIR).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20_000)]
        n_claims: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Ground-truth JSON; the built-in calibrated truth when omitted.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also truncate at this date, writing observed.csv and holdout.json.
        #[arg(long)]
        eval_date: Option<String>,
    },
    /// Fit the activation-pattern model bundle.
    Fit {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Simulate the predictive reserve distribution from a fitted bundle.
    Simulate {
        #[command(flatten)]
        io: IoArgs,
        /// Fitted bundle JSON from `fit`.
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 5_000)]
        replications: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Override the bundle's simulation horizon.
        #[arg(long)]
        horizon: Option<u32>,
        /// IBNR counts: "auto", "none", or "YEAR:COUNT,YEAR:COUNT".
        #[arg(long, default_value = "auto")]
        ibnr: String,
        /// Quantile level reported as the VaR.
        #[arg(long, default_value_t = 0.95)]
        quantile: f64,
        /// Histogram bin count for plot data.
        #[arg(long, default_value_t = 40)]
        bins: usize,
    },
    /// Fit and run the pattern model, the independence model and the ODP
    /// chain ladder on the same portfolio; write a side-by-side table.
    Compare {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, default_value_t = 5_000)]
        replications: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "auto")]
        ibnr: String,
        #[arg(long, default_value_t = 0.95)]
        quantile: f64,
    },
    /// VaR of the total reserve on growing prefixes of one replication
    /// stream.
    Stability {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long)]
        bundle: PathBuf,
        /// Ascending replication checkpoints.
        #[arg(long, default_value = "100,500,1000,2500,5000")]
        checkpoints: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "auto")]
        ibnr: String,
    },
}

fn main() {
    let cli = Cli::parse();
    let command_name = match &cli.command {
        Command::Synth { .. } => "synth",
        Command::Fit { .. } => "fit",
        Command::Simulate { .. } => "simulate",
        Command::Compare { .. } => "compare",
        Command::Stability { .. } => "stability",
    };
    if let Err(err) = run(cli) {
        let record = serde_json::json!({
            "error": format!("{err:#}"),
            "command": command_name,
        });
        eprintln!("{record}");
        std::process::exit(1);
    }
}

fn out_dir(requested: &Path) -> Result<PathBuf> {
    let dir = match std::env::var_os("APRES_OUT_DIR") {
        Some(v) => PathBuf::from(v),
        None => requested.to_path_buf(),
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").with_context(|| format!("invalid date {s:?}"))
}

fn parse_ibnr(s: &str) -> Result<IbnrSpec> {
    match s {
        "auto" => Ok(IbnrSpec::DelayEstimate),
        "none" => Ok(IbnrSpec::Explicit(vec![])),
        spec => {
            let mut counts = Vec::new();
            for part in spec.split(',') {
                let (year, count) = part
                    .split_once(':')
                    .with_context(|| format!("invalid IBNR spec {part:?}"))?;
                counts.push((year.trim().parse()?, count.trim().parse()?));
            }
            Ok(IbnrSpec::Explicit(counts))
        }
    }
}

fn load_inputs(io: &IoArgs) -> Result<(Portfolio, CovariateSchema, NaiveDate)> {
    let schema_text = fs::read_to_string(&io.schema)
        .with_context(|| format!("reading schema {}", io.schema.display()))?;
    let schema = CovariateSchema::from_json(&schema_text)?;
    let file = fs::File::open(&io.claims)
        .with_context(|| format!("reading claims {}", io.claims.display()))?;
    let portfolio = parse_claims(
        file,
        &schema,
        ParseOptions { allow_negative_amounts: io.allow_negative },
    )?;
    let eval = parse_date(&io.eval_date)?;
    Ok((portfolio, schema, eval))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn fit_config(fit: &FitArgs) -> FitConfig {
    FitConfig {
        period_split: fit.period_split,
        j_star: fit.j_star,
        horizon: fit.horizon,
        criterion: fit.criterion,
        ridge: fit.ridge,
        force_family: None,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, n_claims, seed, truth, eval_date } => {
            let dir = out_dir(&out)?;
            let truth = match truth {
                Some(path) => GroundTruth::from_json(
                    &fs::read_to_string(&path)
                        .with_context(|| format!("reading truth {}", path.display()))?,
                )?,
                None => default_ground_truth(),
            };
            let portfolio = generate_portfolio(&truth, n_claims, seed)?;
            let mut csv = Vec::new();
            write_claims(&mut csv, &portfolio, &truth.schema)?;
            fs::write(dir.join("claims.csv"), &csv)?;
            fs::write(dir.join("schema.json"), truth.schema.to_json()?)?;
            fs::write(dir.join("truth.json"), truth.to_json()?)?;
            let mut echo = serde_json::json!({
                "command": "synth",
                "n_claims": n_claims,
                "seed": seed,
                "coverages": truth.schema.coverages,
            });
            if let Some(date) = eval_date {
                let eval = parse_date(&date)?;
                let (observed, holdout) = truncate_at(&portfolio, eval);
                let mut observed_csv = Vec::new();
                write_claims(&mut observed_csv, &observed, &truth.schema)?;
                fs::write(dir.join("observed.csv"), &observed_csv)?;
                write_json(&dir, "holdout.json", &holdout)?;
                echo["eval_date"] = serde_json::json!(date);
            }
            write_json(&dir, "run_config.json", &echo)?;
            println!("synth: wrote {} claims to {}", portfolio.len(), dir.display());
            Ok(())
        }

        Command::Fit { io, fit } => {
            let dir = out_dir(&io.out)?;
            let (portfolio, schema, eval) = load_inputs(&io)?;
            let config = fit_config(&fit);
            let (bundle, fit_report) = fit_bundle(&portfolio, &schema, eval, &config)?;
            fs::write(dir.join("bundle.json"), bundle.to_json()?)?;
            write_json(&dir, "fit_report.json", &fit_report)?;
            fs::write(dir.join("aic_bic.csv"), report::selection_csv(&fit_report))?;
            fs::write(dir.join("aic_bic.txt"), report::selection_table(&fit_report))?;
            write_json(
                &dir,
                "run_config.json",
                &serde_json::json!({
                    "command": "fit",
                    "claims": io.claims,
                    "schema": io.schema,
                    "eval_date": io.eval_date,
                    "config": config,
                }),
            )?;
            println!(
                "fit: bundle with {} coverages written to {}",
                bundle.coverage_count(),
                dir.display()
            );
            Ok(())
        }

        Command::Simulate { io, bundle, replications, seed, horizon, ibnr, quantile, bins } => {
            let dir = out_dir(&io.out)?;
            let (portfolio, schema, eval) = load_inputs(&io)?;
            let bundle_text = fs::read_to_string(&bundle)
                .with_context(|| format!("reading bundle {}", bundle.display()))?;
            let bundle = FittedModelBundle::from_json(&bundle_text)?;
            let config = SimulationConfig {
                n_replications: replications,
                master_seed: seed,
                evaluation_date: eval,
                horizon,
                ibnr: parse_ibnr(&ibnr)?,
            };
            let dist = run_reserving(&portfolio, &schema, &bundle, &config)?;
            if dist.empty_warning {
                eprintln!("warning: no open claims and no IBNR; distribution is all-zero");
            }
            let summary = summarize(&dist, quantile)?;
            fs::write(
                dir.join("distribution.csv"),
                report::distribution_csv(&dist, &bundle.coverage_names),
            )?;
            write_json(
                &dir,
                "summary.json",
                &report::summary_json(&summary, &dist, &config, &bundle.coverage_names),
            )?;
            fs::write(
                dir.join("summary.txt"),
                report::summary_table(&summary, &bundle.coverage_names),
            )?;
            for (name, csv) in report::histograms(&dist, &bundle.coverage_names, bins) {
                fs::write(dir.join(format!("histogram_{name}.csv")), csv)?;
            }
            write_json(
                &dir,
                "run_config.json",
                &serde_json::json!({
                    "command": "simulate",
                    "claims": io.claims,
                    "schema": io.schema,
                    "eval_date": io.eval_date,
                    "config": config,
                    "quantile": quantile,
                }),
            )?;
            println!(
                "simulate: {} replications; total mean {:.2}, VaR {}",
                replications, summary.total.mean, summary.total.var
            );
            Ok(())
        }

        Command::Compare { io, fit, replications, seed, ibnr, quantile } => {
            let dir = out_dir(&io.out)?;
            let (portfolio, schema, eval) = load_inputs(&io)?;
            let config = fit_config(&fit);
            let ibnr = parse_ibnr(&ibnr)?;

            let (pattern_bundle, pattern_report) = fit_bundle(&portfolio, &schema, eval, &config)?;
            let (indep_bundle, _) = fit_independence_bundle(&portfolio, &schema, eval, &config)?;

            let sim_config = SimulationConfig {
                n_replications: replications,
                master_seed: seed,
                evaluation_date: eval,
                horizon: None,
                ibnr,
            };
            let pattern_dist = run_reserving(&portfolio, &schema, &pattern_bundle, &sim_config)?;
            let indep_dist = run_reserving(&portfolio, &schema, &indep_bundle, &sim_config)?;
            let pattern_summary = summarize(&pattern_dist, quantile)?;
            let indep_summary = summarize(&indep_dist, quantile)?;

            // ODP chain ladder per coverage and on the total triangle.
            let odp_config = OdpBootstrapConfig::new(replications, seed);
            let mut odp_by_coverage = Vec::new();
            for c in 0..schema.coverage_count() {
                let triangle =
                    build_triangle(&portfolio, eval, Some(apres_core::domain::CoverageId(c)))?;
                odp_by_coverage.push(chain_ladder_odp_bootstrap(&triangle, &odp_config)?);
            }
            let total_triangle = build_triangle(&portfolio, eval, None)?;
            let odp_total = chain_ladder_odp_bootstrap(&total_triangle, &odp_config)?;

            let comparison = report::comparison(
                &schema.coverages,
                quantile,
                &pattern_summary,
                &indep_summary,
                &odp_by_coverage,
                &odp_total,
            );
            write_json(&dir, "comparison.json", &comparison)?;
            fs::write(dir.join("comparison.csv"), report::comparison_csv(&comparison))?;
            fs::write(dir.join("comparison.txt"), report::comparison_table(&comparison))?;
            write_json(&dir, "fit_report.json", &pattern_report)?;
            write_json(
                &dir,
                "run_config.json",
                &serde_json::json!({
                    "command": "compare",
                    "claims": io.claims,
                    "schema": io.schema,
                    "eval_date": io.eval_date,
                    "fit": config,
                    "simulation": sim_config,
                    "quantile": quantile,
                }),
            )?;
            println!(
                "compare: pattern mean {:.2} | independence mean {:.2} | ODP mean {:.2}",
                pattern_summary.total.mean,
                indep_summary.total.mean,
                odp_total.bootstrap_reserves.iter().sum::<f64>()
                    / odp_total.bootstrap_reserves.len() as f64
            );
            Ok(())
        }

        Command::Stability { io, bundle, checkpoints, seed, ibnr } => {
            let dir = out_dir(&io.out)?;
            let (portfolio, schema, eval) = load_inputs(&io)?;
            let bundle_text = fs::read_to_string(&bundle)
                .with_context(|| format!("reading bundle {}", bundle.display()))?;
            let bundle = FittedModelBundle::from_json(&bundle_text)?;
            let checkpoints: Vec<usize> = checkpoints
                .split(',')
                .map(|s| s.trim().parse().context("invalid checkpoint"))
                .collect::<Result<_>>()?;
            let config = SimulationConfig {
                n_replications: *checkpoints.last().unwrap_or(&1),
                master_seed: seed,
                evaluation_date: eval,
                horizon: None,
                ibnr: parse_ibnr(&ibnr)?,
            };
            let points = stability_curve(&portfolio, &schema, &bundle, &config, &checkpoints)?;
            write_json(&dir, "stability.json", &points)?;
            fs::write(dir.join("stability.csv"), report::stability_csv(&points))?;
            write_json(
                &dir,
                "run_config.json",
                &serde_json::json!({
                    "command": "stability",
                    "claims": io.claims,
                    "schema": io.schema,
                    "eval_date": io.eval_date,
                    "checkpoints": checkpoints,
                    "seed": seed,
                }),
            )?;
            for p in &points {
                println!(
                    "stability: n={:<6} VaR={} ({})",
                    p.n_replications,
                    p.var_total,
                    p.rel_change
                        .map(|r| format!("{:+.2}%", r * 100.0))
                        .unwrap_or_else(|| "-".into())
                );
            }
            Ok(())
        }
    }
}
