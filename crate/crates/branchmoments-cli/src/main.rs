//! Command-line front end for the branchmoments library: simulate barcoded
//! read-count datasets, fit rate parameters by correlation matching, and run
//! bootstrap / cross-validation / simulation-study pipelines on files.
//!
//! Exit codes: 0 on success, 1 on a domain error (bad data, infeasible
//! model, failed check), 2 on a usage error. Every command that consumes
//! randomness takes `--seed`; without it a fixed default of 0 is used and
//! announced on stderr, so reruns are reproducible either way. The
//! `BRANCHMOMENTS_THREADS` environment variable caps worker threads
//! (0 or unset = library default); outputs do not depend on it.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use branchmoments::estimator::{empirical_correlations, fit, FitConfig, OptimizerKind};
use branchmoments::io;
use branchmoments::model::{FixedMask, ModelTopology, Params};
use branchmoments::moments::{build_moment_set, model_correlations};
use branchmoments::par::run_with_threads;
use branchmoments::presets::{
    design_sample_sizes, desk_schedule, study_truth, DESIGN_SAMPLE_FRACTION, DESK_LINEAGES,
    DESK_RESTARTS,
};
use branchmoments::simulator::{simulate_dataset, ReadDataset, SimConfig};
use branchmoments::validation::{
    bootstrap, cross_validate, simulation_study, BootstrapConfig, CvCandidate, StudySpec,
};

#[derive(Parser)]
#[command(name = "branchmoments")]
#[command(about = "Rate estimation for branching processes observed through barcode reads")]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a barcoded read-count dataset (writes reads.csv, cbc.csv)
    Simulate(SimulateArgs),
    /// Model vs empirical read correlations for a dataset, no fitting
    Moments(MomentsArgs),
    /// Fit the free model parameters to a dataset
    Fit(FitArgs),
    /// Bootstrap confidence intervals around a full-data fit
    Bootstrap(BootstrapArgs),
    /// Cross-validated comparison of candidate models
    Cv(CvArgs),
    /// Simulated parameter-recovery or misspecification study
    Study(StudyArgs),
    /// Built-in self checks
    Check(CheckArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model file (model.json) or preset name (a, b, c, f)
    #[arg(long)]
    model: String,
    /// Number of simulated lineages (barcodes before read filtering)
    #[arg(long, default_value_t = DESK_LINEAGES)]
    n: usize,
    /// Observation times, comma separated (default: the built-in 10-point
    /// schedule)
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    times: Option<Vec<f64>>,
    /// Cells sampled per mature type at each observation time (default:
    /// a fixed fraction of the smallest expected population of each type)
    #[arg(long)]
    sample_size: Option<u64>,
    /// Drop barcodes whose largest read count stays below this
    #[arg(long, default_value_t = 0)]
    threshold: u64,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Read-count table (reads.csv)
    #[arg(long)]
    reads: PathBuf,
    /// Sampling-size table (cbc.csv)
    #[arg(long)]
    cbc: PathBuf,
    /// Observation times to drop before analysis, comma separated
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    exclude_times: Option<Vec<f64>>,
}

#[derive(Args)]
struct MomentsArgs {
    /// Model file (model.json) or preset name (a, b, c, f)
    #[arg(long)]
    model: String,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OptimizerArg {
    /// Nelder-Mead simplex descent (default)
    NelderMead,
    /// Finite-difference BFGS
    QuasiNewton,
}

impl From<OptimizerArg> for OptimizerKind {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::NelderMead => OptimizerKind::NelderMead,
            OptimizerArg::QuasiNewton => OptimizerKind::QuasiNewton,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Model file (model.json) or preset name (a, b, c, f)
    #[arg(long)]
    model: String,
    #[command(flatten)]
    data: DataArgs,
    /// Independent optimizer starts
    #[arg(long, default_value_t = DESK_RESTARTS)]
    restarts: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::NelderMead)]
    optimizer: OptimizerArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct BootstrapArgs {
    /// Model file (model.json) or preset name (a, b, c, f)
    #[arg(long)]
    model: String,
    #[command(flatten)]
    data: DataArgs,
    /// Bootstrap replicates
    #[arg(long, default_value_t = 200)]
    replicates: usize,
    /// Restarts for the full-data point fit
    #[arg(long, default_value_t = DESK_RESTARTS)]
    restarts: usize,
    /// Restarts per replicate refit (first is warm-started at the point fit)
    #[arg(long, default_value_t = 10)]
    restarts_per_replicate: usize,
    /// Skip the read-resampling noise layer (barcode resampling only)
    #[arg(long)]
    nonparametric: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    /// Candidate model: file or preset name; repeat the flag per candidate
    #[arg(long, required = true)]
    model: Vec<String>,
    #[command(flatten)]
    data: DataArgs,
    /// Number of folds
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Restarts per training fit
    #[arg(long, default_value_t = DESK_RESTARTS)]
    restarts: usize,
    /// Rank candidates even when their mature-type sets differ
    #[arg(long)]
    force: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    /// Generating model preset (a, b, c, f)
    #[arg(long)]
    model: String,
    /// Preset fitted to each replicate dataset (default: the generating
    /// model, i.e. a recovery study)
    #[arg(long)]
    fit_model: Option<String>,
    /// Study scale
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    /// Override the profile's replicate count
    #[arg(long)]
    replicates: Option<usize>,
    /// Override the profile's lineage count
    #[arg(long)]
    n: Option<usize>,
    /// Override the profile's restart count
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Profile {
    /// 20 replicates, N=2,000, 50 restarts
    Desk,
    /// 400 replicates, N=20,000, 250 restarts (long-running)
    Paper,
}

#[derive(Args)]
struct CheckArgs {
    /// Compare the closed-form moments against the numeric ODE oracle and
    /// print the max relative error
    #[arg(long)]
    oracle: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match std::env::var("BRANCHMOMENTS_THREADS") {
        Err(_) => 0,
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) => t,
            Err(_) => {
                eprintln!("usage error: BRANCHMOMENTS_THREADS must be a non-negative integer");
                return ExitCode::from(2);
            }
        },
    };
    match run_with_threads(threads, || dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Moments(a) => cmd_moments(a),
        Cmd::Fit(a) => cmd_fit(a),
        Cmd::Bootstrap(a) => cmd_bootstrap(a),
        Cmd::Cv(a) => cmd_cv(a),
        Cmd::Study(a) => cmd_study(a),
        Cmd::Check(a) => cmd_check(a),
    }
}

/// Resolve `--seed`, announcing the fixed default when it is omitted.
fn resolve_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            eprintln!("no --seed given; using fixed seed 0");
            0
        }
    }
}

/// A model argument is either a model.json path or a preset name. Returns a
/// display name with the loaded definition.
fn load_model(spec: &str) -> Result<(String, ModelTopology, Params, FixedMask)> {
    let path = Path::new(spec);
    if path.is_file() {
        let (topo, params, mask) =
            io::read_model_json(path).with_context(|| format!("reading model {spec}"))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| spec.to_string());
        return Ok((name, topo, params, mask));
    }
    match study_truth(spec) {
        Ok(t) => Ok((spec.to_string(), t.topo, t.params, t.mask)),
        Err(_) => bail!(
            "--model '{spec}' is neither a readable file nor a preset name (a, b, c, f)"
        ),
    }
}

fn load_data(args: &DataArgs) -> Result<ReadDataset> {
    let data = io::load_dataset(&args.reads, &args.cbc)?;
    let Some(exclude) = &args.exclude_times else {
        return Ok(data);
    };
    let mut drop = Vec::with_capacity(exclude.len());
    for &t in exclude {
        let j = data
            .times
            .iter()
            .position(|&x| x == t)
            .with_context(|| format!("--exclude-times {t}: no such observation time"))?;
        drop.push(j);
    }
    if drop.len() == data.n_times() {
        bail!("--exclude-times removes every observation time");
    }
    Ok(data.without_times(&drop))
}

fn out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))
}

fn to_f64(table: &[Vec<u64>]) -> Vec<Vec<f64>> {
    table
        .iter()
        .map(|row| row.iter().map(|&x| x as f64).collect())
        .collect()
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let seed = resolve_seed(a.seed);
    let (name, topo, params, _) = load_model(&a.model)?;
    let times = a.times.clone().unwrap_or_else(desk_schedule);
    let sample_sizes = match a.sample_size {
        Some(b) => vec![b; topo.n_mat()],
        None => design_sample_sizes(&topo, &params, &times, a.n, DESIGN_SAMPLE_FRACTION)?,
    };
    let mut cfg = SimConfig::new(&params, a.n, times.clone(), 1, seed);
    cfg.sample_sizes = sample_sizes.clone();
    cfg.read_filter_threshold = a.threshold;
    let data = simulate_dataset(&topo, &params, &cfg)?;
    if data.n_barcodes() == 0 {
        eprintln!(
            "warning: read filter threshold {} dropped every barcode",
            a.threshold
        );
    }
    out_dir(&a.out)?;
    io::write_reads_csv(&data, &a.out.join("reads.csv"))?;
    io::write_cbc_csv(&data, &a.out.join("cbc.csv"))?;
    let config = serde_json::json!({
        "model": name,
        "n": a.n,
        "times": times,
        "sample_sizes": sample_sizes,
        "threshold": a.threshold,
    });
    io::write_manifest(
        &a.out.join("manifest.json"),
        "simulate",
        seed,
        &config,
        &["reads.csv", "cbc.csv"],
    )?;
    println!(
        "simulated {} lineages at {} times; kept {} barcodes after filtering",
        a.n,
        data.n_times(),
        data.n_barcodes()
    );
    Ok(())
}

fn cmd_moments(a: MomentsArgs) -> Result<()> {
    let (name, topo, params, _) = load_model(&a.model)?;
    let data = load_data(&a.data)?;
    if data.types != topo.matures {
        bail!(
            "dataset types {:?} do not match model mature types {:?}",
            data.types,
            topo.matures
        );
    }
    let psi_hat = empirical_correlations(&data)?;
    let mset = build_moment_set(&topo, &params)?;
    let psi_model = model_correlations(
        &mset,
        &params.pi,
        &data.times,
        &to_f64(&data.b),
        &to_f64(&data.big_b),
    )?;
    out_dir(&a.out)?;
    io::write_corr_csv(&a.out.join("corr.csv"), &topo, &psi_model, &psi_hat)?;
    let config = serde_json::json!({
        "model": name,
        "reads": a.data.reads.display().to_string(),
        "cbc": a.data.cbc.display().to_string(),
        "exclude_times": a.data.exclude_times,
    });
    io::write_manifest(&a.out.join("manifest.json"), "moments", 0, &config, &["corr.csv"])?;
    println!(
        "wrote model and empirical correlations for {} times x {} pairs",
        psi_hat.times.len(),
        psi_hat.pairs.len()
    );
    Ok(())
}

fn fit_config(restarts: usize, seed: u64, optimizer: OptimizerArg) -> FitConfig {
    FitConfig {
        n_restarts: restarts,
        seed,
        optimizer: optimizer.into(),
        ..FitConfig::default()
    }
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let seed = resolve_seed(a.seed);
    let (name, topo, base, mask) = load_model(&a.model)?;
    let data = load_data(&a.data)?;
    let cfg = fit_config(a.restarts, seed, a.optimizer);
    let result = fit(&topo, &base, &mask, &data, &cfg)?;
    print_warnings(&result.warnings);
    out_dir(&a.out)?;
    io::write_fit_json(&a.out.join("fit.json"), &result)?;
    io::write_corr_fit_csv(&a.out.join("corr_fit.csv"), &result)?;
    let config = serde_json::json!({
        "model": name,
        "reads": a.data.reads.display().to_string(),
        "cbc": a.data.cbc.display().to_string(),
        "exclude_times": a.data.exclude_times,
        "restarts": a.restarts,
        "optimizer": format!("{:?}", a.optimizer),
    });
    io::write_manifest(
        &a.out.join("manifest.json"),
        "fit",
        seed,
        &config,
        &["fit.json", "corr_fit.csv"],
    )?;
    let values = branchmoments::model::param_values(&result.topo, &result.mask, &result.params);
    for (n, v) in result.param_names.iter().zip(&values) {
        println!("{n} = {v:.6}");
    }
    println!("objective = {:.6e} (restart {})", result.objective, result.best_restart);
    Ok(())
}

fn cmd_bootstrap(a: BootstrapArgs) -> Result<()> {
    let seed = resolve_seed(a.seed);
    let (name, topo, base, mask) = load_model(&a.model)?;
    let data = load_data(&a.data)?;
    let fit_cfg = fit_config(a.restarts, seed, OptimizerArg::NelderMead);
    let boot_cfg = BootstrapConfig {
        n_replicates: a.replicates,
        seed,
        resample_reads: !a.nonparametric,
        restarts_per_replicate: a.restarts_per_replicate,
    };
    let result = bootstrap(&topo, &base, &mask, &data, &fit_cfg, &boot_cfg)?;
    print_warnings(&result.warnings);
    out_dir(&a.out)?;
    io::write_fit_json(&a.out.join("fit.json"), &result.point)?;
    io::write_bootstrap_csv(&a.out.join("bootstrap.csv"), &result)?;
    let config = serde_json::json!({
        "model": name,
        "reads": a.data.reads.display().to_string(),
        "cbc": a.data.cbc.display().to_string(),
        "exclude_times": a.data.exclude_times,
        "replicates": a.replicates,
        "restarts": a.restarts,
        "restarts_per_replicate": a.restarts_per_replicate,
        "nonparametric": a.nonparametric,
    });
    io::write_manifest(
        &a.out.join("manifest.json"),
        "bootstrap",
        seed,
        &config,
        &["fit.json", "bootstrap.csv"],
    )?;
    let point = branchmoments::model::param_values(
        &result.point.topo,
        &result.point.mask,
        &result.point.params,
    );
    println!("{} of {} replicates succeeded", result.replicates.len(), a.replicates);
    for (i, n) in result.param_names.iter().enumerate() {
        println!(
            "{n} = {:.6}  (95% CI {:.6} .. {:.6}, median {:.6})",
            point[i], result.ci[i].0, result.ci[i].1, result.medians[i]
        );
    }
    Ok(())
}

fn cmd_cv(a: CvArgs) -> Result<()> {
    let seed = resolve_seed(a.seed);
    let mut candidates = Vec::with_capacity(a.model.len());
    for spec in &a.model {
        let (name, topo, base, mask) = load_model(spec)?;
        candidates.push(CvCandidate { name, topo, base, mask });
    }
    let data = load_data(&a.data)?;
    let fit_cfg = fit_config(a.restarts, seed, OptimizerArg::NelderMead);
    let results = cross_validate(&candidates, &data, a.folds, &fit_cfg, seed, a.force)?;
    out_dir(&a.out)?;
    io::write_cv_json(&a.out.join("cv.json"), &results)?;
    let config = serde_json::json!({
        "models": candidates.iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
        "reads": a.data.reads.display().to_string(),
        "cbc": a.data.cbc.display().to_string(),
        "exclude_times": a.data.exclude_times,
        "folds": a.folds,
        "restarts": a.restarts,
        "force": a.force,
    });
    io::write_manifest(&a.out.join("manifest.json"), "cv", seed, &config, &["cv.json"])?;
    let mut ranked: Vec<_> = results.iter().collect();
    ranked.sort_by(|x, y| x.1.mean_objective.total_cmp(&y.1.mean_objective));
    for (rank, (name, r)) in ranked.iter().enumerate() {
        println!(
            "#{} {name}: mean held-out objective {:.6e} over {} folds",
            rank + 1,
            r.mean_objective,
            r.folds
        );
    }
    Ok(())
}

fn cmd_study(a: StudyArgs) -> Result<()> {
    let seed = resolve_seed(a.seed);
    let mut spec = match a.profile {
        Profile::Desk => StudySpec::desk(&a.model, seed)?,
        Profile::Paper => StudySpec::paper(&a.model, seed)?,
    };
    spec.fit_model = a.fit_model.clone();
    if let Some(r) = a.replicates {
        spec.n_replicates = r;
    }
    if let Some(n) = a.n {
        spec.n_lineages = n;
        // sample sizes track the lineage count so the sampled pool
        // fraction stays at the design point
        let gen = study_truth(&a.model)?;
        spec.sample_sizes = design_sample_sizes(
            &gen.topo,
            &gen.params,
            &spec.times,
            n,
            DESIGN_SAMPLE_FRACTION,
        )?;
    }
    if let Some(r) = a.restarts {
        spec.n_restarts = r;
    }
    let summary = simulation_study(&spec)?;
    out_dir(&a.out)?;
    let study_json = serde_json::json!({
        "param_names": summary.param_names,
        "truth": summary.truth,
        "median": summary.median,
        "mad": summary.mad,
        "sd": summary.sd,
        "median_rel_err": summary.median_rel_err,
        "objectives": summary.objectives,
        "estimates": summary.estimates,
    });
    std::fs::write(
        a.out.join("study.json"),
        serde_json::to_string_pretty(&study_json)? + "\n",
    )?;
    let config = serde_json::json!({
        "gen_model": spec.gen_model,
        "fit_model": spec.fit_model,
        "replicates": spec.n_replicates,
        "lineages": spec.n_lineages,
        "restarts": spec.n_restarts,
        "times": spec.times,
        "sample_sizes": spec.sample_sizes,
        "threshold": spec.threshold,
    });
    io::write_manifest(&a.out.join("manifest.json"), "study", seed, &config, &["study.json"])?;
    for (i, n) in summary.param_names.iter().enumerate() {
        match (&summary.truth, &summary.median_rel_err) {
            (Some(truth), Some(rel)) => println!(
                "{n}: truth {:.6}, median {:.6}, MAD {:.3e}, SD {:.3e}, median rel err {:+.2}%",
                truth[i],
                summary.median[i],
                summary.mad[i],
                summary.sd[i],
                100.0 * rel[i]
            ),
            _ => println!(
                "{n}: median {:.6}, MAD {:.3e}, SD {:.3e}",
                summary.median[i], summary.mad[i], summary.sd[i]
            ),
        }
    }
    Ok(())
}

/// Fixed parameter sets for the oracle self-check: each preset's truth, a
/// uniformly scaled variant, and a variant with deliberately coincident
/// rates to exercise the resonant closed-form branches.
fn oracle_variants(truth: &Params) -> Vec<Params> {
    let mut scaled = truth.clone();
    scaled.lambda *= 3.0;
    for v in scaled
        .nu_prog
        .iter_mut()
        .chain(&mut scaled.mu_prog)
        .chain(&mut scaled.nu_mat)
        .chain(&mut scaled.mu_mat)
    {
        *v *= 3.0;
    }
    let mut coincident = truth.clone();
    for m in &mut coincident.mu_mat {
        *m = truth.mu_prog[0];
    }
    if coincident.nu_mat.len() > 1 {
        coincident.nu_mat[1] = coincident.nu_mat[0];
    }
    vec![truth.clone(), scaled, coincident]
}

fn cmd_check(a: CheckArgs) -> Result<()> {
    if !a.oracle {
        bail!("nothing to check; pass --oracle");
    }
    let times = [0.5, 1.0, 2.0, 5.0, 10.0, 30.0];
    let mut worst = 0.0f64;
    for preset in ["a", "c", "f"] {
        let truth = study_truth(preset)?;
        for (variant, params) in ["truth", "scaled", "coincident"]
            .iter()
            .zip(oracle_variants(&truth.params))
        {
            let err =
                branchmoments::moments::oracle::oracle_max_rel_err(&truth.topo, &params, &times)?;
            println!("model {preset}, {variant}: max relative error {err:.3e}");
            worst = worst.max(err);
        }
    }
    println!("closed-form vs ODE oracle max relative error: {worst:.3e}");
    if worst > 1e-6 {
        bail!("oracle disagreement {worst:.3e} exceeds 1e-6");
    }
    Ok(())
}
