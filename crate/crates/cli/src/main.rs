//! `flam` — fit, tune, and simulate fused lasso additive models from CSV
//! data.
//!
//! Exit codes: 0 success, 2 usage error, 3 data/IO error, 4 numeric
//! failure.

mod csvio;
mod errors;
mod model;

use clap::{Parser, Subcommand, ValueEnum};
use csvio::{fmt_f64, load_dataset, read_table, select_columns, write_csv_records};
use errors::{CliError, CliResult};
use flam_core::dataset::PenaltySpec;
use flam_core::fit::{flam_bcd, flam_path_at, lambda_grid, FitConfig, FlamFit};
use flam_core::glm::{expit, logistic_flam, logistic_path_at, GgdConfig, LossKind, LINPRED_CAP};
use flam_core::inference::{df_flam, df_monte_carlo, knot_count};
use flam_core::modelsel::{cross_validate, lambda_sparse_threshold, step_functions};
use flam_core::sim::{
    consistency_experiment, df_experiment, generate, logistic_experiment, scenario_experiment,
    ConsistencyConfig, DfExperimentConfig, LogisticExperimentConfig, ScenarioExperimentConfig,
    ScenarioSpec,
};
use flam_core::Dataset;
use model::{FeatureModel, ModelFile, FORMAT_VERSION};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "flam", version, about = "Fused lasso additive models")]
struct Cli {
    /// Worker threads for folds and replicates (FLAM_THREADS is the
    /// fallback; outputs do not depend on this)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum LossArg {
    Squared,
    Logistic,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> LossKind {
        match l {
            LossArg::Squared => LossKind::Squared,
            LossArg::Logistic => LossKind::Logistic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model at one lambda or along the whole path
    Fit(FitArgs),
    /// Choose lambda by k-fold cross-validation
    Cv(CvArgs),
    /// Predict new data from a saved model
    Predict(PredictArgs),
    /// Degrees of freedom of a fit (optionally Monte-Carlo validated)
    Df(DfArgs),
    /// Smallest lambda that zeroes every feature
    LambdaMax(LambdaMaxArgs),
    /// Run a simulation experiment and export CSV
    Simulate(SimulateArgs),
    /// Export fitted step functions as long-format plot data
    ExportPlot(ExportPlotArgs),
}

#[derive(clap::Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Name of the response column; all other columns are features
    #[arg(long)]
    response: String,
    #[arg(long, value_enum, default_value = "squared")]
    loss: LossArg,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Fit this single lambda; omit to fit the full path
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 50)]
    nlambda: usize,
    #[arg(long, default_value_t = 1e-3)]
    lambda_min_ratio: f64,
    /// Which path fit to store in the model file (default: last)
    #[arg(long)]
    lambda_index: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_sweeps: usize,
    /// Output model file (JSON)
    #[arg(long)]
    model: PathBuf,
}

#[derive(clap::Args)]
struct CvArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    #[arg(long, value_enum, default_value = "squared")]
    loss: LossArg,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 50)]
    nlambda: usize,
    #[arg(long, default_value_t = 1e-3)]
    lambda_min_ratio: f64,
    /// Fold-assignment seed (required for reproducibility)
    #[arg(long)]
    seed: u64,
    /// CV curve output CSV (lambda, mean_loss, se_loss)
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct DfArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    response: Option<String>,
    /// Simulation scenario id (1-4) when no data file is given
    #[arg(long)]
    scenario: Option<u8>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value_t = 2)]
    n_signal: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Ridge stabilizer in the df inverse (default: 0 for alpha = 1,
    /// otherwise 1e-8)
    #[arg(long)]
    epsilon: Option<f64>,
    /// Also estimate df by Monte-Carlo with this many replicates
    /// (simulation mode only)
    #[arg(long)]
    mc_reps: Option<usize>,
}

#[derive(clap::Args)]
struct LambdaMaxArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ExperimentArg {
    /// Train/test error along the path on scenario data
    Scenario,
    /// Trace df estimator vs Monte-Carlo covariance estimator
    Df,
    /// Finite-sample prediction-error bound check
    Consistency,
    /// Two-feature logistic surface recovery
    Logistic,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    experiment: ExperimentArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    scenario: u8,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    p: usize,
    #[arg(long)]
    n_signal: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Comma-separated alpha values (scenario / df experiments)
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Single alpha (consistency experiment)
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Comma-separated sample sizes (consistency experiment)
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Comma-separated threshold fractions (df experiment)
    #[arg(long, value_delimiter = ',')]
    lambda_fracs: Option<Vec<f64>>,
    #[arg(long, default_value_t = 25)]
    nlambda: usize,
    #[arg(long, default_value_t = 1e-3)]
    lambda_min_ratio: f64,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 50)]
    grid_size: usize,
}

#[derive(clap::Args)]
struct ExportPlotArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("FLAM_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            std::process::exit(2);
        }
        // ignore failure: the pool may already be initialized in tests
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Df(args) => cmd_df(args),
        Command::LambdaMax(args) => cmd_lambda_max(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::ExportPlot(args) => cmd_export_plot(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn fit_one(
    data: &Dataset,
    loss: LossKind,
    penalty: &PenaltySpec,
    config: &FitConfig,
    warm: Option<&FlamFit>,
) -> CliResult<FlamFit> {
    let fit = match loss {
        LossKind::Squared => flam_bcd(data, penalty, config, warm)?,
        LossKind::Logistic => {
            logistic_flam(data, penalty, &GgdConfig { tol: config.tol, max_iter: 5000 })?
        }
    };
    Ok(fit)
}

fn report_line(
    data: &Dataset,
    loss: LossKind,
    fit: &FlamFit,
    lambda: f64,
    alpha: f64,
) -> CliResult<String> {
    let knots = knot_count(fit);
    let df = match loss {
        LossKind::Squared => {
            let eps = if alpha == 1.0 { 0.0 } else { PenaltySpec::DEFAULT_EPSILON };
            let penalty = PenaltySpec::with_epsilon(lambda, alpha, eps)?;
            format!("{:.4}", df_flam(data, fit, &penalty)?.df)
        }
        LossKind::Logistic => "-".to_string(),
    };
    Ok(format!(
        "lambda={lambda:<12.6} objective={:<14.6} active={}/{} knots={knots} df={df} converged={}",
        fit.objective,
        fit.active_features.len(),
        data.p(),
        fit.converged
    ))
}

fn build_model(
    data: &Dataset,
    feature_names: &[String],
    fit: &FlamFit,
    loss: LossKind,
    response: &str,
    lambda: f64,
    alpha: f64,
) -> CliResult<ModelFile> {
    let steps = step_functions(fit, data)?;
    let features = feature_names
        .iter()
        .zip(steps)
        .map(|(name, step)| FeatureModel { name: name.clone(), step })
        .collect();
    Ok(ModelFile {
        format_version: FORMAT_VERSION,
        loss,
        response: response.to_string(),
        theta0: fit.theta0,
        lambda,
        alpha,
        epsilon: 0.0,
        converged: fit.converged,
        iterations: fit.iterations,
        objective: fit.objective,
        features,
    })
}

fn cmd_fit(args: FitArgs) -> CliResult<()> {
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(CliError::usage("--alpha must be in [0, 1]"));
    }
    let loaded = load_dataset(&args.data, &args.response)?;
    let data = &loaded.dataset;
    let loss: LossKind = args.loss.into();
    let config = FitConfig { tol: args.tol, max_sweeps: args.max_sweeps, ..Default::default() };
    let threshold = lambda_sparse_threshold(data, args.alpha)?;
    println!("n={} p={} sparsity threshold={threshold}", data.n(), data.p());

    let (fit, lambda) = match args.lambda {
        Some(lambda) => {
            if lambda < 0.0 {
                return Err(CliError::usage("--lambda must be >= 0"));
            }
            let penalty = PenaltySpec::with_epsilon(lambda, args.alpha, 0.0)?;
            let fit = fit_one(data, loss, &penalty, &config, None)?;
            println!("{}", report_line(data, loss, &fit, lambda, args.alpha)?);
            (fit, lambda)
        }
        None => {
            let grid = lambda_grid(threshold, args.nlambda, args.lambda_min_ratio);
            let path = match loss {
                LossKind::Squared => flam_path_at(data, args.alpha, &grid, &config)?,
                LossKind::Logistic => logistic_path_at(data, args.alpha, &grid, &config)?,
            };
            for (i, fit) in path.fits.iter().enumerate() {
                println!(
                    "[{i:3}] {}",
                    report_line(data, loss, fit, path.lambdas[i], args.alpha)?
                );
            }
            let idx = args.lambda_index.unwrap_or(path.fits.len() - 1);
            if idx >= path.fits.len() {
                return Err(CliError::usage(format!(
                    "--lambda-index {idx} out of range (path has {} fits)",
                    path.fits.len()
                )));
            }
            (path.fits[idx].clone(), path.lambdas[idx])
        }
    };

    let model = build_model(
        data,
        &loaded.feature_names,
        &fit,
        loss,
        &args.response,
        lambda,
        args.alpha,
    )?;
    model.save(&args.model)?;
    let per_feature = fit.knots_per_feature();
    println!("knots per feature:");
    for (name, k) in loaded.feature_names.iter().zip(&per_feature) {
        println!("  {name}: {k}");
    }
    println!(
        "saved model (lambda={lambda}, alpha={}, {} active of {} features) to {}",
        args.alpha,
        fit.active_features.len(),
        data.p(),
        args.model.display()
    );
    Ok(())
}

fn cmd_cv(args: CvArgs) -> CliResult<()> {
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(CliError::usage("--alpha must be in [0, 1]"));
    }
    let loaded = load_dataset(&args.data, &args.response)?;
    let data = &loaded.dataset;
    let loss: LossKind = args.loss.into();
    let threshold = lambda_sparse_threshold(data, args.alpha)?;
    if threshold == 0.0 {
        return Err(CliError::data("response is constant; nothing to tune"));
    }
    let grid = lambda_grid(threshold, args.nlambda, args.lambda_min_ratio);
    let config = FitConfig::default();
    let result = cross_validate(data, args.alpha, args.folds, &grid, loss, args.seed, &config)?;
    write_csv_records(
        &args.out,
        &["lambda", "mean_loss", "se_loss"],
        result
            .lambdas
            .iter()
            .zip(result.mean_loss.iter().zip(&result.se_loss))
            .map(|(l, (m, s))| vec![fmt_f64(*l), fmt_f64(*m), fmt_f64(*s)]),
    )?;
    println!("chosen_lambda={} (index {})", result.chosen_lambda, result.chosen_index);
    println!("cv curve written to {}", args.out.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> CliResult<()> {
    let model = ModelFile::load(&args.model)?;
    let table = read_table(&args.data)?;
    let names: Vec<String> = model.features.iter().map(|f| f.name.clone()).collect();
    let cols = select_columns(&table, &names, &args.data)?;
    let logistic = model.loss == LossKind::Logistic;
    let header: &[&str] =
        if logistic { &["prediction", "probability"] } else { &["prediction"] };
    let rows = (0..table.n_rows).map(|i| {
        let row: Vec<f64> = cols.iter().map(|c| c[i]).collect();
        let eta = model.predict_eta(&row);
        if logistic {
            let p = expit(eta.clamp(-LINPRED_CAP, LINPRED_CAP));
            vec![fmt_f64(if p >= 0.5 { 1.0 } else { 0.0 }), fmt_f64(p)]
        } else {
            vec![fmt_f64(eta)]
        }
    });
    write_csv_records(&args.out, header, rows)?;
    println!("{} predictions written to {}", table.n_rows, args.out.display());
    Ok(())
}

fn cmd_df(args: DfArgs) -> CliResult<()> {
    if args.lambda < 0.0 {
        return Err(CliError::usage("--lambda must be >= 0"));
    }
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(CliError::usage("--alpha must be in [0, 1]"));
    }
    let epsilon = args.epsilon.unwrap_or(if args.alpha == 1.0 {
        0.0
    } else {
        PenaltySpec::DEFAULT_EPSILON
    });
    let penalty = PenaltySpec::with_epsilon(args.lambda, args.alpha, epsilon)?;
    let config = FitConfig::default();

    match (&args.data, &args.response, args.scenario) {
        (Some(path), Some(response), None) => {
            if args.mc_reps.is_some() {
                return Err(CliError::usage(
                    "--mc-reps requires a simulation spec (--scenario/--n/--p), not --data",
                ));
            }
            let loaded = load_dataset(path, response)?;
            let fit = flam_bcd(&loaded.dataset, &penalty, &config, None)?;
            let est = df_flam(&loaded.dataset, &fit, &penalty)?;
            println!("df_estimate={}", est.df);
            if est.ridge_fallback {
                println!("note: singular system at epsilon=0; re-solved with epsilon=1e-8");
            }
        }
        (None, None, Some(scenario)) => {
            if !(1..=4).contains(&scenario) {
                return Err(CliError::usage("--scenario must be 1-4"));
            }
            let (n, p) = match (args.n, args.p) {
                (Some(n), Some(p)) => (n, p),
                _ => return Err(CliError::usage("simulation mode needs --n and --p")),
            };
            let spec = ScenarioSpec {
                scenario,
                n,
                p_total: p,
                n_signal: args.n_signal.min(p).min(4),
                noise_sd: args.sigma,
                seed: args.seed,
            };
            let sim = generate(&spec)?;
            let fit = flam_bcd(&sim.data, &penalty, &config, None)?;
            let est = df_flam(&sim.data, &fit, &penalty)?;
            println!("df_estimate={}", est.df);
            if let Some(reps) = args.mc_reps {
                let columns: Vec<Vec<f64>> =
                    (0..p).map(|j| sim.data.column(j).to_vec()).collect();
                let mc = df_monte_carlo(
                    &sim.mu,
                    args.sigma,
                    |y| {
                        let d = Dataset::new(y.to_vec(), columns.clone())
                            .expect("replicate dataset");
                        flam_bcd(&d, &penalty, &config, None)
                            .expect("replicate fit")
                            .fitted_values()
                    },
                    reps,
                    args.seed,
                )?;
                println!("df_monte_carlo={} (se {})", mc.df, mc.se);
            }
        }
        _ => {
            return Err(CliError::usage(
                "provide either --data and --response, or --scenario with --n/--p",
            ))
        }
    }
    Ok(())
}

fn cmd_lambda_max(args: LambdaMaxArgs) -> CliResult<()> {
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(CliError::usage("--alpha must be in [0, 1]"));
    }
    let loaded = load_dataset(&args.data, &args.response)?;
    let threshold = lambda_sparse_threshold(&loaded.dataset, args.alpha)?;
    println!("{threshold}");
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    if !(1..=4).contains(&args.scenario) {
        return Err(CliError::usage("--scenario must be 1-4"));
    }
    match args.experiment {
        ExperimentArg::Scenario => {
            let cfg = ScenarioExperimentConfig {
                scenario: args.scenario,
                n: args.n,
                p_total: args.p,
                n_signal: args.n_signal.unwrap_or(args.p.min(4)),
                sigma: args.sigma,
                alphas: args.alphas.unwrap_or_else(|| vec![0.5, 1.0]),
                n_lambda: args.nlambda,
                lambda_min_ratio: args.lambda_min_ratio,
                n_reps: args.reps,
                seed: args.seed,
            };
            let rows = scenario_experiment(&cfg)?;
            csvio::write_serializable(&args.out, &rows)?;
            println!("{} rows written to {}", rows.len(), args.out.display());
        }
        ExperimentArg::Df => {
            let mut cfg = DfExperimentConfig {
                n: args.n,
                p: args.p,
                n_signal: args.n_signal.unwrap_or(2),
                sigma: args.sigma,
                n_reps: args.reps,
                seed: args.seed,
                ..Default::default()
            };
            if let Some(alphas) = args.alphas {
                cfg.alphas = alphas;
            }
            if let Some(fracs) = args.lambda_fracs {
                cfg.lambda_fracs = fracs;
            }
            let cells = df_experiment(&cfg)?;
            csvio::write_serializable(&args.out, &cells)?;
            println!("{} cells written to {}", cells.len(), args.out.display());
        }
        ExperimentArg::Consistency => {
            let cfg = ConsistencyConfig {
                n_grid: args.n_grid.unwrap_or_else(|| vec![50, 100, 200]),
                p: args.p,
                sigma: args.sigma,
                alpha: args.alpha,
                n_reps: args.reps,
                seed: args.seed,
            };
            let rows = consistency_experiment(&cfg)?;
            csvio::write_serializable(&args.out, &rows)?;
            println!("{} rows written to {}", rows.len(), args.out.display());
        }
        ExperimentArg::Logistic => {
            let cfg = LogisticExperimentConfig {
                n: args.n,
                n_reps: args.reps,
                n_lambda: args.nlambda,
                lambda_min_ratio: args.lambda_min_ratio,
                grid_size: args.grid_size,
                seed: args.seed,
            };
            let result = logistic_experiment(&cfg)?;
            csvio::write_serializable(&args.out, &result.rows)?;
            println!("mean_surface_correlation={}", result.mean_surface_correlation);
            println!("{} rows written to {}", result.rows.len(), args.out.display());
        }
    }
    Ok(())
}

fn cmd_export_plot(args: ExportPlotArgs) -> CliResult<()> {
    let model = ModelFile::load(&args.model)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for f in &model.features {
        let span = (f.step.domain_hi - f.step.domain_lo).abs().max(1.0);
        let delta = 1e-6 * span;
        let mut xs = vec![f.step.domain_lo];
        for &k in &f.step.knots {
            xs.push(k - delta);
            xs.push(k + delta);
        }
        xs.push(f.step.domain_hi);
        for x in xs {
            rows.push(vec![
                f.name.clone(),
                fmt_f64(x),
                fmt_f64(f.step.evaluate(x)),
            ]);
        }
    }
    let n = rows.len();
    write_csv_records(&args.out, &["feature", "x", "fitted_level"], rows.into_iter())?;
    println!("{n} rows written to {}", args.out.display());
    Ok(())
}
