//! Command-line interface: `fit`, `simulate` and `summarize`.
//!
//! Exit codes: 0 on success, 2 for invalid input or configuration, 3 for
//! numerical failure during sampling.

pub mod io;
pub mod settings;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{modifier_index, CrossBasis, Family};
use crate::error::{DlimError, Result};
use crate::metrics::{aggregate, score_replicate, ReplicateScore};
use crate::posterior::{
    default_grid, summarize_effects, summarize_weights, windows_of_susceptibility, EffectSign, DEFAULT_ALPHA,
    DEFAULT_GRID_POINTS,
};
use crate::priors::{PriorConfig, DEFAULT_IG_SCALE, DEFAULT_IG_SHAPE, DEFAULT_INCLUSION, DEFAULT_TAU2, DEFAULT_XI2};
use crate::sampler::{posterior_mean_rho, run_multichain, PosteriorDraws, SamplerConfig, DEFAULT_ADAPT_TARGET, DEFAULT_ADAPT_WINDOW};
use crate::simulation::{simulate_cohort, ExposureSource, Scenario, ScenarioSpec, SimulatedCohort};

use self::io::{fmt_f64, load_cohort, read_draws, write_csv, write_draws, write_matrix, write_text, DataSources, RawTable};
pub use self::settings::Settings;
use self::settings::broadcast;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const OUTPUT_ROOT_ENV: &str = "DLIM_OUTPUT_ROOT";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Parser)]
#[command(name = "dlimim", version, about = "Distributed lag models with a weighted modifier index")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to cohort data.
    Fit(RunArgs),
    /// Generate data sets, fit estimated- and fixed-weight models, and score them.
    Simulate(RunArgs),
    /// Recompute summaries from the draws written by `fit`.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML file with any of the flag values; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Clone, Args)]
pub struct SummarizeArgs {
    /// Output directory of a previous `fit`.
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

/// Exit code for an error.
pub fn exit_code(err: &DlimError) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Fit(args) => resolve(args.config.as_deref(), &args.settings).and_then(|s| cmd_fit(&s)),
        Command::Simulate(args) => resolve(args.config.as_deref(), &args.settings).and_then(|s| cmd_simulate(&s)),
        Command::Summarize(args) => cmd_summarize(&args.draws, args.config.as_deref(), &args.settings),
    };
    match result {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve(config: Option<&Path>, flags: &Settings) -> Result<Settings> {
    let base = match config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    Ok(base.overlay(flags))
}

fn output_dir(settings: &Settings, command: &str) -> PathBuf {
    if let Some(dir) = &settings.output {
        return dir.clone();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(command),
        None => PathBuf::from("dlimim-output").join(command),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| DlimError::InvalidData(format!("cannot create output directory {}: {e}", dir.display())))
}

/// Fills every sampler and summary setting with its default so that the
/// manifest records the complete run.
fn complete_common(mut s: Settings, modifiers: usize) -> Result<Settings> {
    s.seed.get_or_insert(1);
    s.chains.get_or_insert(1);
    s.iterations.get_or_insert(5_000);
    s.burn_in.get_or_insert(2_000);
    s.thin.get_or_insert(1);
    s.df_mod.get_or_insert(5);
    s.df_time.get_or_insert(5);
    s.selection.get_or_insert(false);
    s.random_scan.get_or_insert(false);
    s.adapt_target.get_or_insert(DEFAULT_ADAPT_TARGET);
    s.adapt_window.get_or_insert(DEFAULT_ADAPT_WINDOW);
    s.q = Some(broadcast(s.q.as_ref(), modifiers, 1.0, "q")?);
    s.nu = Some(broadcast(s.nu.as_ref(), modifiers, DEFAULT_INCLUSION, "nu")?);
    s.tau2.get_or_insert(DEFAULT_TAU2);
    s.xi2.get_or_insert(DEFAULT_XI2);
    s.ig_shape.get_or_insert(DEFAULT_IG_SHAPE);
    s.ig_scale.get_or_insert(DEFAULT_IG_SCALE);
    s.alpha.get_or_insert(DEFAULT_ALPHA);
    s.percentiles.get_or_insert_with(Vec::new);
    s.grid_points.get_or_insert(DEFAULT_GRID_POINTS);
    s.svg.get_or_insert(false);
    check_percentiles(s.percentiles.as_deref().unwrap_or_default())?;
    Ok(s)
}

fn check_percentiles(p: &[f64]) -> Result<()> {
    if p.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(DlimError::InvalidConfig("percentiles must lie in (0, 1)".into()));
    }
    if p.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DlimError::InvalidConfig("percentiles must be strictly increasing".into()));
    }
    Ok(())
}

/// Sampler configuration from completed settings.
pub fn sampler_config(s: &Settings, modifiers: usize) -> Result<SamplerConfig> {
    let missing = |k: &str| DlimError::InvalidConfig(format!("setting '{k}' is missing"));
    let priors = PriorConfig {
        q: s.q.clone().ok_or_else(|| missing("q"))?,
        tau2: s.tau2.ok_or_else(|| missing("tau2"))?,
        xi2: s.xi2.ok_or_else(|| missing("xi2"))?,
        ig_shape: s.ig_shape.ok_or_else(|| missing("ig_shape"))?,
        ig_scale: s.ig_scale.ok_or_else(|| missing("ig_scale"))?,
        nu: s.nu.clone().ok_or_else(|| missing("nu"))?,
        selection: s.selection.unwrap_or(false),
    };
    let mut config = SamplerConfig::new(modifiers);
    config.nu_mod = s.df_mod.ok_or_else(|| missing("df_mod"))?;
    config.nu_time = s.df_time.ok_or_else(|| missing("df_time"))?;
    config.iterations = s.iterations.ok_or_else(|| missing("iterations"))?;
    config.burn_in = s.burn_in.ok_or_else(|| missing("burn_in"))?;
    config.thin = s.thin.ok_or_else(|| missing("thin"))?;
    config.chains = s.chains.ok_or_else(|| missing("chains"))?;
    config.seed = s.seed.ok_or_else(|| missing("seed"))?;
    config.adapt_target = s.adapt_target.ok_or_else(|| missing("adapt_target"))?;
    config.adapt_window = s.adapt_window.ok_or_else(|| missing("adapt_window"))?;
    config.random_scan = s.random_scan.unwrap_or(false);
    config.priors = priors;
    config.validate()?;
    Ok(config)
}

/// Keeps the successful chains; the first failure is returned after them.
fn split_chains(results: Vec<Result<PosteriorDraws>>) -> (Vec<PosteriorDraws>, Option<DlimError>) {
    let mut ok = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(d) => ok.push(d),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    (ok, first_err)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChainRecord {
    chain: usize,
    seed: u64,
    draws: usize,
    acceptance_rates: Vec<f64>,
    blocked_deaths: u64,
    final_zeta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunRecord {
    command: String,
    version: String,
    n: usize,
    times: usize,
    modifier_names: Vec<String>,
    #[serde(default)]
    chains: Vec<ChainRecord>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    #[serde(flatten)]
    settings: &'a Settings,
    run: &'a RunRecord,
}

/// The output directory is left out so that a run can be repeated elsewhere
/// with identical files.
fn write_manifest(dir: &Path, settings: &Settings, run: &RunRecord) -> Result<()> {
    let settings = &Settings {
        output: None,
        ..settings.clone()
    };
    let text = toml::to_string(&Manifest { settings, run })
        .map_err(|e| DlimError::InvalidConfig(format!("cannot serialize manifest: {e}")))?;
    write_text(&dir.join(MANIFEST_FILE), &text)
}

fn read_manifest(dir: &Path) -> Result<(Settings, RunRecord)> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| DlimError::InvalidData(format!("cannot read {}: {e}", path.display())))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| DlimError::InvalidData(format!("{}: {e}", path.display())))?;
    let run = table
        .remove("run")
        .ok_or_else(|| DlimError::InvalidData(format!("{}: no [run] record", path.display())))?;
    let run: RunRecord = run
        .try_into()
        .map_err(|e| DlimError::InvalidData(format!("{}: {e}", path.display())))?;
    let settings: Settings = table
        .try_into()
        .map_err(|e| DlimError::InvalidData(format!("{}: {e}", path.display())))?;
    Ok((settings, run))
}

fn chain_record(d: &PosteriorDraws) -> ChainRecord {
    ChainRecord {
        chain: d.chain_id + 1,
        seed: d.seed,
        draws: d.len(),
        acceptance_rates: d.acceptance_rates(),
        blocked_deaths: d.blocked_deaths,
        final_zeta: d.final_zeta.clone(),
    }
}

/// Inputs of the summary files shared by `fit` and `summarize`.
struct SummaryInputs<'a> {
    chains: &'a [PosteriorDraws],
    basis: &'a CrossBasis,
    modifier_names: &'a [String],
    fitted_index: &'a [f64],
    settings: &'a Settings,
}

fn write_summaries(dir: &Path, inp: &SummaryInputs<'_>) -> Result<()> {
    let s = inp.settings;
    let alpha = s.alpha.unwrap_or(DEFAULT_ALPHA);
    let grid_points = s.grid_points.unwrap_or(DEFAULT_GRID_POINTS);
    let percentiles = s.percentiles.clone().unwrap_or_default();
    check_percentiles(&percentiles)?;
    let pooled = PosteriorDraws::pool(inp.chains)?;
    let grid = default_grid(grid_points, inp.fitted_index, &percentiles);
    let summary = summarize_effects(&pooled.theta, inp.basis, &grid, alpha)?;

    let header = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (g, &m) in grid.iter().enumerate() {
        for t in 0..summary.times() {
            rows.push(vec![
                fmt_f64(m),
                (t + 1).to_string(),
                fmt_f64(summary.pointwise_mean[(g, t)]),
                fmt_f64(summary.pointwise_lower[(g, t)]),
                fmt_f64(summary.pointwise_upper[(g, t)]),
            ]);
        }
    }
    write_csv(&dir.join("pointwise.csv"), &header(&["m_star", "t", "mean", "lower", "upper"]), rows)?;
    let rows = grid.iter().enumerate().map(|(g, &m)| {
        vec![
            fmt_f64(m),
            fmt_f64(summary.cumulative_mean[g]),
            fmt_f64(summary.cumulative_lower[g]),
            fmt_f64(summary.cumulative_upper[g]),
        ]
    });
    write_csv(&dir.join("cumulative.csv"), &header(&["m_star", "mean", "lower", "upper"]), rows)?;

    let mut rows = Vec::new();
    for &m in &grid {
        for w in windows_of_susceptibility(&summary, m)? {
            let sign = match w.sign {
                EffectSign::Positive => "positive",
                EffectSign::Negative => "negative",
            };
            rows.push(vec![fmt_f64(m), w.start.to_string(), w.end.to_string(), sign.to_string()]);
        }
    }
    write_csv(&dir.join("windows.csv"), &header(&["m_star", "start", "end", "sign"]), rows)?;

    let weight_rows = |d: &PosteriorDraws| -> Result<Vec<Vec<String>>> {
        let w = summarize_weights(d)?;
        Ok((0..w.pip.len())
            .map(|l| {
                vec![
                    inp.modifier_names[l].clone(),
                    fmt_f64(w.rho_mean[l]),
                    fmt_f64(w.rho_sd[l]),
                    fmt_f64(w.pip[l]),
                ]
            })
            .collect())
    };
    let weight_header = header(&["modifier", "rho_mean", "rho_sd", "pip"]);
    write_csv(&dir.join("weights.csv"), &weight_header, weight_rows(&pooled)?)?;
    for d in inp.chains {
        write_csv(&dir.join(format!("weights_chain_{}.csv", d.chain_id + 1)), &weight_header, weight_rows(d)?)?;
    }

    if s.svg.unwrap_or(false) {
        let k = grid_points;
        let chart = svg::ribbon_chart(
            "Cumulative effect",
            "modifier index",
            &grid[..k],
            &summary.cumulative_mean[..k],
            &summary.cumulative_lower[..k],
            &summary.cumulative_upper[..k],
        );
        write_text(&dir.join("cumulative.svg"), &chart)?;
        let times: Vec<f64> = (1..=summary.times()).map(|t| t as f64).collect();
        for (i, p) in percentiles.iter().enumerate() {
            let g = k + i;
            let row = |m: &nalgebra::DMatrix<f64>| m.row(g).iter().copied().collect::<Vec<_>>();
            let chart = svg::ribbon_chart(
                &format!("Effect at the {}th percentile of the index", p * 100.0),
                "exposure time",
                &times,
                &row(&summary.pointwise_mean),
                &row(&summary.pointwise_lower),
                &row(&summary.pointwise_upper),
            );
            write_text(&dir.join(format!("pointwise_p{}.svg", p * 100.0)), &chart)?;
        }
    }
    Ok(())
}

/// `fit`: returns the output directory.
pub fn cmd_fit(settings: &Settings) -> Result<PathBuf> {
    let family: Family = settings.family.as_deref().unwrap_or("gaussian").parse()?;
    let roles = settings.role.clone().unwrap_or_default();
    let loaded = load_cohort(&DataSources {
        response: settings.response.as_deref(),
        exposure: settings.exposure.as_deref(),
        modifiers: settings.modifiers.as_deref(),
        covariates: settings.covariates.as_deref(),
        combined: settings.combined.as_deref(),
        roles: &roles,
        family,
        scale_modifiers: settings.scale_modifiers.unwrap_or(false),
    })?;
    let data = &loaded.data;
    let mut s = complete_common(settings.clone(), data.modifiers())?;
    s.family = Some(family.as_str().to_string());
    s.scale_modifiers.get_or_insert(false);
    let config = sampler_config(&s, data.modifiers())?;
    let basis = CrossBasis::new(config.nu_mod, config.nu_time, data.times())?;

    let dir = output_dir(&s, "fit");
    create_dir(&dir)?;
    let (chains, failure) = split_chains(run_multichain(data, &config));
    for d in &chains {
        write_draws(&dir.join(format!("chain_{}.csv", d.chain_id + 1)), d)?;
    }
    if let Some(e) = failure {
        return Err(e);
    }

    let pooled = PosteriorDraws::pool(&chains)?;
    let rho_hat = posterior_mean_rho(&pooled);
    let fitted: Vec<f64> = modifier_index(&data.m, &rho_hat)?.iter().copied().collect();
    write_csv(
        &dir.join("fitted_index.csv"),
        &["id".to_string(), "m_hat".to_string()],
        fitted.iter().enumerate().map(|(i, &m)| vec![(i + 1).to_string(), fmt_f64(m)]),
    )?;
    write_summaries(
        &dir,
        &SummaryInputs {
            chains: &chains,
            basis: &basis,
            modifier_names: &loaded.modifier_names,
            fitted_index: &fitted,
            settings: &s,
        },
    )?;
    let run = RunRecord {
        command: "fit".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        n: data.n(),
        times: data.times(),
        modifier_names: loaded.modifier_names.clone(),
        chains: chains.iter().map(chain_record).collect(),
    };
    write_manifest(&dir, &s, &run)?;
    Ok(dir)
}

/// `summarize`: recomputes summaries from a fit directory.
pub fn cmd_summarize(draws_dir: &Path, config: Option<&Path>, flags: &Settings) -> Result<PathBuf> {
    if !draws_dir.is_dir() {
        return Err(DlimError::InvalidData(format!("{} is not a directory", draws_dir.display())));
    }
    let (manifest_settings, run) = read_manifest(draws_dir)?;
    let mut s = manifest_settings;
    if let Some(path) = config {
        s = s.overlay(&Settings::load(path)?);
    }
    s = s.overlay(flags);

    let mut files: Vec<(usize, PathBuf)> = std::fs::read_dir(draws_dir)
        .map_err(|e| DlimError::InvalidData(format!("cannot list {}: {e}", draws_dir.display())))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().to_string();
            let idx = name.strip_prefix("chain_")?.strip_suffix(".csv")?.parse::<usize>().ok()?;
            Some((idx, e.path()))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(DlimError::InvalidData(format!("no chain_*.csv draw files in {}", draws_dir.display())));
    }
    let mut chains = Vec::new();
    let mut header: Option<Vec<String>> = None;
    for (idx, path) in &files {
        let (h, d) = read_draws(path, idx - 1)?;
        match &header {
            Some(first) if *first != h => {
                return Err(DlimError::InvalidData(format!(
                    "{}: header differs from the other chains",
                    path.display()
                )))
            }
            _ => header = Some(h),
        }
        chains.push(d);
    }

    let df_mod = s.df_mod.ok_or_else(|| DlimError::InvalidConfig("manifest lacks df_mod".into()))?;
    let df_time = s.df_time.ok_or_else(|| DlimError::InvalidConfig("manifest lacks df_time".into()))?;
    let basis = CrossBasis::new(df_mod, df_time, run.times)?;
    if chains[0].theta.ncols() != basis.n_theta() {
        return Err(DlimError::mismatch("theta columns in draws", basis.n_theta(), chains[0].theta.ncols()));
    }
    if run.modifier_names.len() != chains[0].a.ncols() {
        return Err(DlimError::mismatch("modifier names", chains[0].a.ncols(), run.modifier_names.len()));
    }
    let fitted_table = RawTable::read(&draws_dir.join("fitted_index.csv"))?;
    let fitted: Vec<f64> = fitted_table.numeric(&fitted_table.resolve("m_hat")?)?.iter().copied().collect();

    let dir = flags.output.clone().unwrap_or_else(|| draws_dir.to_path_buf());
    create_dir(&dir)?;
    write_summaries(
        &dir,
        &SummaryInputs {
            chains: &chains,
            basis: &basis,
            modifier_names: &run.modifier_names,
            fitted_index: &fitted,
            settings: &s,
        },
    )?;
    Ok(dir)
}

fn complete_simulation(settings: &Settings) -> Result<(Settings, ScenarioSpec)> {
    let mut s = settings.clone();
    let scenario: Scenario = s.scenario.as_deref().unwrap_or("equal").parse()?;
    s.scenario = Some(scenario.as_str().to_string());
    let l = *s.num_modifiers.get_or_insert(match scenario {
        Scenario::Sparse => 10,
        _ => 3,
    });
    s.snr.get_or_insert(1.0);
    s.n.get_or_insert(500);
    s.times.get_or_insert(crate::simulation::DEFAULT_TIMES);
    s.replicates.get_or_insert(20);
    s.save_data.get_or_insert(false);
    let mut s = complete_common(s, l)?;
    let mut spec = ScenarioSpec::new(
        scenario,
        l,
        s.snr.unwrap_or(1.0),
        s.n.unwrap_or(500),
        s.replicates.unwrap_or(20),
        s.seed.unwrap_or(1),
    )?;
    spec.times = s.times.unwrap_or(crate::simulation::DEFAULT_TIMES);
    if let Some(pool) = &s.exposure_pool {
        let rows = RawTable::read(pool)?.all_numeric()?;
        let replace = *s.pool_replace.get_or_insert(true);
        spec.exposures = ExposureSource::CsvPool { rows, replace };
    }
    spec.validate()?;
    Ok((s, spec))
}

const SCORE_COLUMNS: [&str; 8] = [
    "index_rmse",
    "index_abs_bias",
    "ce_rmse",
    "ce_coverage",
    "ce_width",
    "pw_rmse",
    "pw_coverage",
    "pw_width",
];

fn score_fields(s: &ReplicateScore) -> Vec<String> {
    [
        s.index_rmse,
        s.index_abs_bias,
        s.cumulative.rmse,
        s.cumulative.coverage,
        s.cumulative.width,
        s.pointwise.rmse,
        s.pointwise.coverage,
        s.pointwise.width,
    ]
    .iter()
    .map(|&v| fmt_f64(v))
    .collect()
}

/// Fit one replicate with both arms and score them.
pub fn fit_and_score(
    cohort: &SimulatedCohort,
    config: &SamplerConfig,
    alpha: f64,
) -> Result<(ReplicateScore, ReplicateScore)> {
    let basis = CrossBasis::new(config.nu_mod, config.nu_time, cohort.data.times())?;
    let fit = |cfg: &SamplerConfig| -> Result<ReplicateScore> {
        let (chains, failure) = split_chains(run_multichain(&cohort.data, cfg));
        if let Some(e) = failure {
            return Err(e);
        }
        score_replicate(cohort, &PosteriorDraws::pool(&chains)?, &basis, alpha)
    };
    let estimated = fit(config)?;
    let fixed = fit(&config.clone().fixed_equal_weights())?;
    Ok((estimated, fixed))
}

fn save_cohort(dir: &Path, cohort: &SimulatedCohort) -> Result<()> {
    create_dir(dir)?;
    let d = &cohort.data;
    let names = |prefix: &str, k: usize| (1..=k).map(|j| format!("{prefix}{j}")).collect::<Vec<_>>();
    write_matrix(&dir.join("exposure.csv"), &names("x", d.times()), &d.x)?;
    write_matrix(&dir.join("modifiers.csv"), &names("m", d.modifiers()), &d.m)?;
    let cov = d.z.columns(1, d.covariates() - 1).clone_owned();
    write_matrix(&dir.join("covariates.csv"), &names("z", cov.ncols()), &cov)?;
    write_matrix(&dir.join("response.csv"), &["y".to_string()], &nalgebra::DMatrix::from_column_slice(d.n(), 1, d.y.as_slice()))?;
    write_matrix(&dir.join("beta_true.csv"), &names("t", d.times()), &cohort.beta_true)?;
    let mut truth = vec![vec!["sigma".to_string(), fmt_f64(cohort.sigma_true)]];
    truth.extend(cohort.rho_true.iter().enumerate().map(|(l, &r)| vec![format!("rho_{}", l + 1), fmt_f64(r)]));
    truth.extend(cohort.gamma_true.iter().enumerate().map(|(j, &g)| vec![format!("gamma_{}", j + 1), fmt_f64(g)]));
    write_csv(&dir.join("truth.csv"), &["parameter".to_string(), "value".to_string()], truth)
}

/// `simulate`: returns the output directory.
pub fn cmd_simulate(settings: &Settings) -> Result<PathBuf> {
    let (s, spec) = complete_simulation(settings)?;
    let base_config = sampler_config(&s, spec.modifiers)?;
    let alpha = s.alpha.unwrap_or(DEFAULT_ALPHA);
    let dir = output_dir(&s, "simulate");
    create_dir(&dir)?;
    let save = s.save_data.unwrap_or(false);

    let results: Vec<Result<(ReplicateScore, ReplicateScore)>> = (0..spec.replicate_count)
        .into_par_iter()
        .map(|r| {
            let cohort = simulate_cohort(&spec, r)?;
            if save {
                save_cohort(&dir.join(format!("replicate_{:03}", r + 1)), &cohort)?;
            }
            let mut config = base_config.clone();
            config.seed = spec.replicate_seed(r);
            fit_and_score(&cohort, &config, alpha)
        })
        .collect();
    let mut scores = Vec::with_capacity(results.len());
    for r in results {
        scores.push(r?);
    }

    let arm = if base_config.priors.selection { "dlim-im-sel" } else { "dlim-im" };
    let mut header = vec!["replicate".to_string(), "seed".to_string(), "model".to_string()];
    header.extend(SCORE_COLUMNS.iter().map(|c| c.to_string()));
    let mut rows = Vec::new();
    for (r, (est, fixed)) in scores.iter().enumerate() {
        for (model, sc) in [(arm, est), ("fixed-index", fixed)] {
            let mut row = vec![(r + 1).to_string(), spec.replicate_seed(r).to_string(), model.to_string()];
            row.extend(score_fields(sc));
            rows.push(row);
        }
    }
    write_csv(&dir.join("replicate_scores.csv"), &header, rows)?;

    let mut header = vec!["scenario".to_string(), "snr".to_string(), "model".to_string()];
    header.extend(SCORE_COLUMNS.iter().map(|c| c.to_string()));
    let est: Vec<ReplicateScore> = scores.iter().map(|(e, _)| *e).collect();
    let fixed: Vec<ReplicateScore> = scores.iter().map(|(_, f)| *f).collect();
    let rows = [(arm, aggregate(&est)?), ("fixed-index", aggregate(&fixed)?)].map(|(model, sc)| {
        let mut row = vec![spec.id.as_str().to_string(), fmt_f64(spec.snr), model.to_string()];
        row.extend(score_fields(&sc));
        row
    });
    write_csv(&dir.join("summary.csv"), &header, rows)?;

    let run = RunRecord {
        command: "simulate".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        n: spec.n,
        times: spec.times,
        modifier_names: (1..=spec.modifiers).map(|l| format!("m{l}")).collect(),
        chains: Vec::new(),
    };
    write_manifest(&dir, &s, &run)?;
    Ok(dir)
}
