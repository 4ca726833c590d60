//! Uncertainty and model checking on top of the fitter: nonparametric
//! bootstrap with an optional read-resampling layer, k-fold cross-validation
//! over candidate topologies, and the simulation-study harness (parameter
//! recovery and misspecification experiments at configurable scale).
//!
//! Seeds fix everything downstream — resampling, restart draws, simulated
//! datasets — so every routine here is reproducible byte for byte.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::estimator::{empirical_correlations, fit, loss, FitConfig, FitResult};
use crate::model::{param_values, FixedMask, ModelTopology, Params};
use crate::par::par_map_indexed;
use crate::presets::{
    design_sample_sizes, desk_schedule, study_truth, DESIGN_SAMPLE_FRACTION, DESK_LINEAGES,
    DESK_REPLICATES, DESK_RESTARTS,
    PAPER_LINEAGES, PAPER_REPLICATES, PAPER_RESTARTS,
};
use crate::simulator::{mvhypergeom_sample, round_ties_even, simulate_dataset, ReadDataset, SimConfig};
use crate::{Error, Result};

/// Mix a salt into a seed so nested stages (resampling, per-replicate fits,
/// per-replicate simulations) draw from unrelated streams.
fn mix_seed(seed: u64, salt: u64) -> u64 {
    seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn to_f64_table(rows: &[Vec<u64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect()
}

fn median_of(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Raw median absolute deviation (no consistency scaling).
fn mad_of(v: &[f64]) -> f64 {
    let m = median_of(v.to_vec());
    median_of(v.iter().map(|x| (x - m).abs()).collect())
}

fn sd_of(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Linear-interpolated percentile of a sorted slice, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    /// Number of bootstrap replicates (R >= 2).
    pub n_replicates: usize,
    pub seed: u64,
    /// Re-draw the hypergeometric read sampling from each resampled
    /// barcode's inferred cell counts (reads scaled by B/b, rounded), adding
    /// the sequencing-noise layer on top of barcode resampling. Assumes unit
    /// amplification constants; turn off for a purely nonparametric
    /// bootstrap.
    pub resample_reads: bool,
    /// Restart budget per replicate fit. The first restart is warm-started
    /// at the full-data estimate, so a small budget suffices.
    pub restarts_per_replicate: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_replicates: 200,
            seed: 0,
            resample_reads: true,
            restarts_per_replicate: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapResult {
    /// Full-data fit the replicates are warm-started from.
    pub point: FitResult,
    /// Column labels for `replicates`.
    pub param_names: Vec<String>,
    /// One row per successful replicate, columns as `param_names`.
    pub replicates: Vec<Vec<f64>>,
    /// Replicates whose refit failed (excluded from the rows above).
    pub failed: usize,
    /// Percentile intervals (2.5%, 97.5%) per parameter.
    pub ci: Vec<(f64, f64)>,
    /// Per-parameter medians across replicates.
    pub medians: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Draw one bootstrap dataset: resample barcodes with replacement, then
/// optionally re-draw the read sampling from the resampled barcodes'
/// inferred cell counts.
fn bootstrap_dataset(
    data: &ReadDataset,
    resample_reads: bool,
    rng: &mut ChaCha12Rng,
) -> Result<ReadDataset> {
    let n = data.n_barcodes();
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut boot = data.subset(&rows);
    if !resample_reads {
        return Ok(boot);
    }
    for j in 0..boot.n_times() {
        for m in 0..boot.n_types() {
            let b = data.b[j][m];
            let ratio = data.big_b[j][m] as f64 / b as f64;
            let pop: Vec<u64> = (0..n)
                .map(|p| round_ties_even(boot.read(p, j, m) as f64 * ratio))
                .collect();
            let total: u64 = pop.iter().sum();
            if b > total {
                return Err(Error::SampleExceedsPopulation {
                    sample: b,
                    population: total,
                    context: format!(
                        "bootstrap read re-draw for type '{}' at t={}",
                        boot.types[m], boot.times[j]
                    ),
                });
            }
            let draw = mvhypergeom_sample(&pop, b, rng)?;
            for (p, &y) in draw.iter().enumerate() {
                let idx = (p * boot.n_times() + j) * boot.n_types() + m;
                boot.reads[idx] = y;
            }
            boot.big_b[j][m] = total;
        }
    }
    Ok(boot)
}

/// Bootstrap confidence intervals for the free parameters: fit the full
/// data, then refit `n_replicates` resampled datasets (barcodes with
/// replacement, plus the read-sampling layer unless disabled), each
/// warm-started at the full-data estimate. Failed replicate fits are
/// excluded with a warning when they exceed 5% of the budget.
pub fn bootstrap(
    topo: &ModelTopology,
    base: &Params,
    mask: &FixedMask,
    data: &ReadDataset,
    fit_cfg: &FitConfig,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult> {
    if cfg.n_replicates < 2 {
        return Err(Error::InvalidData(
            "bootstrap needs at least 2 replicates".into(),
        ));
    }
    let point = fit(topo, base, mask, data, fit_cfg)?;
    let mut warnings = point.warnings.clone();

    let outcomes: Vec<std::result::Result<Vec<f64>, String>> =
        par_map_indexed(cfg.n_replicates, |r| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            let boot = match bootstrap_dataset(data, cfg.resample_reads, &mut rng) {
                Ok(d) => d,
                Err(e) => return Err(e.to_string()),
            };
            let rep_cfg = FitConfig {
                n_restarts: cfg.restarts_per_replicate,
                seed: mix_seed(cfg.seed, r as u64 + 1),
                warm_starts: vec![point.params.clone()],
                ..fit_cfg.clone()
            };
            match fit(topo, base, mask, &boot, &rep_cfg) {
                Ok(fr) => Ok(param_values(topo, mask, &fr.params)),
                Err(e) => Err(e.to_string()),
            }
        });

    let mut replicates = Vec::with_capacity(cfg.n_replicates);
    let mut failed = 0usize;
    let mut first_failure = None;
    for o in outcomes {
        match o {
            Ok(row) => replicates.push(row),
            Err(msg) => {
                failed += 1;
                first_failure.get_or_insert(msg);
            }
        }
    }
    if replicates.len() < 2 {
        return Err(Error::Fit(format!(
            "only {} of {} bootstrap replicates could be fit (first failure: {})",
            replicates.len(),
            cfg.n_replicates,
            first_failure.as_deref().unwrap_or("none")
        )));
    }
    if failed * 20 > cfg.n_replicates {
        warnings.push(format!(
            "{failed} of {} bootstrap replicates failed (> 5%); intervals may be unreliable \
             (first failure: {})",
            cfg.n_replicates,
            first_failure.as_deref().unwrap_or("none")
        ));
    }

    let n_params = replicates[0].len();
    let mut ci = Vec::with_capacity(n_params);
    let mut medians = Vec::with_capacity(n_params);
    for p in 0..n_params {
        let mut col: Vec<f64> = replicates.iter().map(|row| row[p]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ci.push((percentile(&col, 0.025), percentile(&col, 0.975)));
        medians.push(percentile(&col, 0.5));
    }

    Ok(BootstrapResult {
        param_names: point.param_names.clone(),
        point,
        replicates,
        failed,
        ci,
        medians,
        warnings,
    })
}

/// One topology entered into cross-validation, with its fixed parameter
/// values and mask.
#[derive(Debug, Clone)]
pub struct CvCandidate {
    pub name: String,
    pub topo: ModelTopology,
    pub base: Params,
    pub mask: FixedMask,
}

#[derive(Debug, Clone)]
pub struct CVResult {
    pub folds: usize,
    /// Held-out objective per fold: squared correlation distance (no
    /// barrier) of the training-data fit against the test fold's empirical
    /// correlations.
    pub per_fold: Vec<f64>,
    pub mean_objective: f64,
}

/// Shuffled near-equal partition of `0..n` into `k` folds.
fn fold_partition(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let mut fold: Vec<usize> = idx[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    folds
}

/// K-fold cross-validation over candidate topologies: one shared random
/// barcode partition; per candidate and fold, fit on the other K-1 folds
/// and score the fit against the held-out fold's empirical correlations
/// (pure squared distance, no barrier). Results come back in candidate
/// order.
///
/// Candidates with different mature-type sets have objectives built from
/// different numbers of correlation terms and are not comparable; ranking
/// them is refused unless `force` is set.
pub fn cross_validate(
    candidates: &[CvCandidate],
    data: &ReadDataset,
    k: usize,
    fit_cfg: &FitConfig,
    seed: u64,
    force: bool,
) -> Result<Vec<(String, CVResult)>> {
    if candidates.is_empty() {
        return Err(Error::CrossValidation("no candidate models".into()));
    }
    if k < 2 {
        return Err(Error::CrossValidation("need at least 2 folds".into()));
    }
    let n = data.n_barcodes();
    if n < 5 * k {
        return Err(Error::CrossValidation(format!(
            "{k} folds over {n} barcodes leave folds too small for correlation estimation \
             (need at least 5 barcodes per fold)"
        )));
    }
    let mats: Vec<usize> = candidates.iter().map(|c| c.topo.n_mat()).collect();
    if !force && mats.iter().any(|&m| m != mats[0]) {
        return Err(Error::CrossValidation(format!(
            "candidates have different mature-type counts {mats:?}; their objectives sum \
             different numbers of correlation terms and are not comparable (pass force to \
             rank them anyway)"
        )));
    }

    let folds = fold_partition(n, k, seed);
    let mut out = Vec::with_capacity(candidates.len());
    for (ci, cand) in candidates.iter().enumerate() {
        let mut per_fold = Vec::with_capacity(k);
        for (f, fold) in folds.iter().enumerate() {
            let train_rows: Vec<usize> = (0..n).filter(|i| !fold.contains(i)).collect();
            let train = data.subset(&train_rows);
            let test = data.subset(fold);
            let cfg = FitConfig {
                seed: mix_seed(seed, (ci * k + f) as u64 + 1),
                ..fit_cfg.clone()
            };
            let fr = fit(&cand.topo, &cand.base, &cand.mask, &train, &cfg)?;
            let test_psi = empirical_correlations(&test)?;
            let held_out = loss(
                &cand.topo,
                &fr.params,
                &test_psi,
                &to_f64_table(&test.b),
                &to_f64_table(&test.big_b),
                None,
            )?;
            per_fold.push(held_out);
        }
        let mean_objective = per_fold.iter().sum::<f64>() / k as f64;
        out.push((
            cand.name.clone(),
            CVResult {
                folds: k,
                per_fold,
                mean_objective,
            },
        ));
    }
    Ok(out)
}

/// A recovery or misspecification experiment: simulate replicate datasets
/// from a ground-truth preset and fit each one, optionally with a different
/// topology than the generating one.
#[derive(Debug, Clone)]
pub struct StudySpec {
    /// Preset the datasets are generated from ("a", "b", "c", "f").
    pub gen_model: String,
    /// Preset fitted to each dataset; `None` fits the generating model
    /// (recovery study), `Some(other)` is a misspecification study and must
    /// share the mature types of `gen_model`.
    pub fit_model: Option<String>,
    pub n_replicates: usize,
    pub n_lineages: usize,
    pub n_restarts: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    /// Per-type sequencing sample sizes (one entry per mature type, or a
    /// single broadcast entry).
    pub sample_sizes: Vec<u64>,
    /// Read filter threshold for the simulated datasets. Studies default to
    /// 0 (keep everything): the filter models real-data preprocessing at
    /// sequencing depths far above the synthetic default.
    pub threshold: u64,
}

impl StudySpec {
    /// Quick workstation-scale study: 20 replicates of N=2,000 lineages,
    /// 50 restarts per fit. Fails only if `gen_model` is not a preset.
    pub fn desk(gen_model: &str, seed: u64) -> Result<StudySpec> {
        let truth = study_truth(gen_model)?;
        let times = desk_schedule();
        let sample_sizes = design_sample_sizes(
            &truth.topo,
            &truth.params,
            &times,
            DESK_LINEAGES,
            DESIGN_SAMPLE_FRACTION,
        )?;
        Ok(StudySpec {
            gen_model: gen_model.to_string(),
            fit_model: None,
            n_replicates: DESK_REPLICATES,
            n_lineages: DESK_LINEAGES,
            n_restarts: DESK_RESTARTS,
            seed,
            times,
            sample_sizes,
            threshold: 0,
        })
    }

    /// Full-scale study: 400 replicates of N=20,000 lineages, 250 restarts
    /// per fit. Long-running. Sample sizes scale with the lineage count so
    /// the sampled fraction of each type's pool matches the desk profile.
    pub fn paper(gen_model: &str, seed: u64) -> Result<StudySpec> {
        let mut spec = StudySpec::desk(gen_model, seed)?;
        let truth = study_truth(gen_model)?;
        spec.n_replicates = PAPER_REPLICATES;
        spec.n_lineages = PAPER_LINEAGES;
        spec.n_restarts = PAPER_RESTARTS;
        spec.sample_sizes = design_sample_sizes(
            &truth.topo,
            &truth.params,
            &spec.times,
            PAPER_LINEAGES,
            DESIGN_SAMPLE_FRACTION,
        )?;
        Ok(spec)
    }
}

#[derive(Debug, Clone)]
pub struct StudySummary {
    /// Column labels for `estimates` and the summary rows.
    pub param_names: Vec<String>,
    /// Ground-truth values for the fitted parameters; `None` for
    /// misspecification studies (no truth in the fitted parametrization).
    pub truth: Option<Vec<f64>>,
    /// One row per replicate.
    pub estimates: Vec<Vec<f64>>,
    /// Fit objective per replicate (barrier included).
    pub objectives: Vec<f64>,
    pub median: Vec<f64>,
    pub mad: Vec<f64>,
    pub sd: Vec<f64>,
    /// Per-parameter median of the replicate relative errors
    /// `(estimate - truth) / truth`; `None` for misspecification studies.
    pub median_rel_err: Option<Vec<f64>>,
}

/// Run a simulation study: per replicate, simulate a dataset from the
/// generating preset and fit the fitting preset to it. Replicate datasets
/// depend only on `(seed, replicate index, gen_model, N, schedule)`, so a
/// recovery and a misspecification study with the same spec fields fit the
/// exact same datasets.
pub fn simulation_study(spec: &StudySpec) -> Result<StudySummary> {
    if spec.n_replicates == 0 {
        return Err(Error::InvalidData("study needs at least one replicate".into()));
    }
    let gen = study_truth(&spec.gen_model)?;
    let fit_name = spec.fit_model.as_deref().unwrap_or(&spec.gen_model);
    let fitted = study_truth(fit_name)?;
    if fitted.topo.matures != gen.topo.matures {
        return Err(Error::InvalidData(format!(
            "fit model '{fit_name}' and generating model '{}' have different mature types",
            spec.gen_model
        )));
    }
    let recovery = fit_name == spec.gen_model;

    let mut estimates = Vec::with_capacity(spec.n_replicates);
    let mut objectives = Vec::with_capacity(spec.n_replicates);
    for r in 0..spec.n_replicates {
        let sim_seed = mix_seed(spec.seed, 2 * r as u64 + 1);
        let mut sim_cfg = SimConfig::new(
            &gen.params,
            spec.n_lineages,
            spec.times.clone(),
            1,
            sim_seed,
        );
        sim_cfg.sample_sizes = spec.sample_sizes.clone();
        sim_cfg.read_filter_threshold = spec.threshold;
        let data = simulate_dataset(&gen.topo, &gen.params, &sim_cfg)?;

        let fit_cfg = FitConfig {
            n_restarts: spec.n_restarts,
            seed: mix_seed(spec.seed, 2 * r as u64 + 2),
            ..FitConfig::default()
        };
        let fr = fit(&fitted.topo, &fitted.params, &fitted.mask, &data, &fit_cfg)?;
        estimates.push(param_values(&fitted.topo, &fitted.mask, &fr.params));
        objectives.push(fr.objective);
    }

    let param_names = crate::model::param_names(&fitted.topo, &fitted.mask);
    let n_params = param_names.len();
    let mut median = Vec::with_capacity(n_params);
    let mut mad = Vec::with_capacity(n_params);
    let mut sd = Vec::with_capacity(n_params);
    for p in 0..n_params {
        let col: Vec<f64> = estimates.iter().map(|row| row[p]).collect();
        median.push(median_of(col.clone()));
        mad.push(mad_of(&col));
        sd.push(sd_of(&col));
    }

    let (truth, median_rel_err) = if recovery {
        let tv = param_values(&fitted.topo, &fitted.mask, &fitted.params);
        let rel: Vec<f64> = (0..n_params)
            .map(|p| {
                median_of(
                    estimates
                        .iter()
                        .map(|row| (row[p] - tv[p]) / tv[p])
                        .collect(),
                )
            })
            .collect();
        (Some(tv), Some(rel))
    } else {
        (None, None)
    };

    Ok(StudySummary {
        param_names,
        truth,
        estimates,
        objectives,
        median,
        mad,
        sd,
        median_rel_err,
    })
}
