//! Exact stochastic simulation of the lineage process and the observation
//! pipeline: Gillespie's direct method per barcode, multivariate
//! hypergeometric blood sampling per cell type and time point, linear PCR
//! scaling, and the read-count filter.
//!
//! Every random decision draws from a ChaCha12 stream selected by work-item
//! index (lineage index, or a disjoint stream block for the sampling
//! stage), so datasets are identical no matter how work is scheduled.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::model::{build_reactions, validate_params, validate_topology, ModelTopology, Params, Reaction};
use crate::par::par_map_indexed;
use crate::{Error, Result};

/// Stream ids `0..n_lineages` drive lineages; read-sampling streams start
/// here so the two never collide.
const SAMPLING_STREAM_BASE: u64 = 1 << 40;

/// Snapshot of one lineage during simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct LineageState {
    /// Cell counts per global compartment index.
    pub counts: Vec<u64>,
    /// Current simulation time.
    pub t: f64,
    /// Events executed so far.
    pub events: u64,
}

/// How the read filter aggregates a barcode's reads before thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum FilterMode {
    /// Keep a barcode if any single (type, time) cell meets the threshold.
    #[default]
    MaxCell,
    /// Keep a barcode if reads summed over types meet the threshold at any
    /// time point.
    TimeSum,
}

/// Configuration of one synthetic dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    /// Number of independent lineages (barcodes) to simulate.
    pub n_lineages: usize,
    /// Observation times, strictly increasing and positive.
    pub obs_times: Vec<f64>,
    /// RNG seed; everything about the dataset is a function of it.
    pub seed: u64,
    /// Initial-compartment distribution (stem + progenitors).
    pub pi: Vec<f64>,
    /// Cells sampled per mature type at each observation (`b_m`).
    pub sample_sizes: Vec<u64>,
    /// PCR amplification constants `d_m(t_j)`, row per time; `None` means 1.
    pub pcr_constants: Option<Vec<Vec<f64>>>,
    /// Barcodes whose reads never reach this are dropped (0 keeps all).
    pub read_filter_threshold: u64,
    /// Filter aggregation mode.
    pub filter_mode: FilterMode,
    /// Per-lineage event budget; exceeding it aborts with an error rather
    /// than looping on a supercritical blow-up.
    pub max_events: u64,
}

impl SimConfig {
    /// Reasonable defaults around a parameter set: its `pi`, the given
    /// schedule, uniform sample sizes, no PCR scaling, threshold 1000.
    pub fn new(params: &Params, n_lineages: usize, obs_times: Vec<f64>, b: u64, seed: u64) -> Self {
        SimConfig {
            n_lineages,
            obs_times,
            seed,
            pi: params.pi.clone(),
            // a single entry is broadcast to every mature type
            sample_sizes: vec![b],
            pcr_constants: None,
            read_filter_threshold: 1000,
            filter_mode: FilterMode::MaxCell,
            max_events: 10_000_000,
        }
    }
}

/// Synthetic or loaded read-count data: one row of reads per kept barcode
/// per (time, type), plus the sampling constants needed by the moment
/// formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadDataset {
    /// Stable barcode identifiers (original lineage indices for simulated
    /// data).
    pub barcode_ids: Vec<u64>,
    /// Observation times.
    pub times: Vec<f64>,
    /// Mature type labels, declaration order.
    pub types: Vec<String>,
    /// Read counts, layout `[barcode][time][type]` flattened.
    pub reads: Vec<u64>,
    /// Cells sampled per (time, type): `b[j][m]`.
    pub b: Vec<Vec<u64>>,
    /// Population totals per (time, type): `B[j][m]`.
    pub big_b: Vec<Vec<u64>>,
}

impl ReadDataset {
    pub fn n_barcodes(&self) -> usize {
        self.barcode_ids.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_types(&self) -> usize {
        self.types.len()
    }

    pub fn read(&self, p: usize, j: usize, m: usize) -> u64 {
        self.reads[(p * self.n_times() + j) * self.n_types() + m]
    }

    /// One (time, type) column over barcodes, as floats.
    pub fn column(&self, j: usize, m: usize) -> Vec<f64> {
        (0..self.n_barcodes())
            .map(|p| self.read(p, j, m) as f64)
            .collect()
    }

    /// New dataset holding the given barcode rows (duplicates allowed, as
    /// in bootstrap resampling). Barcode ids are renumbered sequentially.
    pub fn subset(&self, rows: &[usize]) -> ReadDataset {
        let (jn, mn) = (self.n_times(), self.n_types());
        let mut reads = Vec::with_capacity(rows.len() * jn * mn);
        for &p in rows {
            let base = p * jn * mn;
            reads.extend_from_slice(&self.reads[base..base + jn * mn]);
        }
        ReadDataset {
            barcode_ids: (0..rows.len() as u64).collect(),
            times: self.times.clone(),
            types: self.types.clone(),
            reads,
            b: self.b.clone(),
            big_b: self.big_b.clone(),
        }
    }

    /// Drop the observation times at the given indices (for schedule
    /// ablations).
    pub fn without_times(&self, drop: &[usize]) -> ReadDataset {
        let keep: Vec<usize> = (0..self.n_times()).filter(|j| !drop.contains(j)).collect();
        let (jn, mn) = (self.n_times(), self.n_types());
        let mut reads = Vec::with_capacity(self.n_barcodes() * keep.len() * mn);
        for p in 0..self.n_barcodes() {
            for &j in &keep {
                let base = (p * jn + j) * mn;
                reads.extend_from_slice(&self.reads[base..base + mn]);
            }
        }
        ReadDataset {
            barcode_ids: self.barcode_ids.clone(),
            times: keep.iter().map(|&j| self.times[j]).collect(),
            types: self.types.clone(),
            reads,
            b: keep.iter().map(|&j| self.b[j].clone()).collect(),
            big_b: keep.iter().map(|&j| self.big_b[j].clone()).collect(),
        }
    }
}

/// Run one lineage with Gillespie's direct method, recording full
/// compartment counts at each observation time. A lineage that dies out is
/// recorded as all zeros from its extinction onward.
pub fn simulate_lineage(
    reactions: &[Reaction],
    init_compartment: usize,
    obs_times: &[f64],
    max_events: u64,
    lineage: u64,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<u64>>> {
    let c = reactions
        .first()
        .map(|r| r.delta.len())
        .expect("nonempty reaction table");
    let mut counts = vec![0u64; c];
    counts[init_compartment] = 1;
    let mut t = 0.0;
    let mut events = 0u64;
    let mut out = Vec::with_capacity(obs_times.len());
    let mut next_obs = 0;

    loop {
        let total: f64 = reactions
            .iter()
            .map(|r| r.rate * counts[r.parent] as f64)
            .sum();
        if total <= 0.0 {
            break; // absorbed (extinct): state can never change again
        }
        let u: f64 = rng.random();
        let dt = -(1.0 - u).ln() / total;
        let t_next = t + dt;
        while next_obs < obs_times.len() && obs_times[next_obs] < t_next {
            out.push(counts.clone());
            next_obs += 1;
        }
        if next_obs == obs_times.len() {
            break; // horizon reached; no need to apply the pending event
        }
        // pick the firing reaction proportionally to rate * parent count
        let mut target = rng.random::<f64>() * total;
        let mut chosen = reactions.len() - 1;
        for (i, r) in reactions.iter().enumerate() {
            target -= r.rate * counts[r.parent] as f64;
            if target <= 0.0 {
                chosen = i;
                break;
            }
        }
        for (ci, d) in reactions[chosen].delta.iter().enumerate() {
            counts[ci] = (counts[ci] as i64 + d) as u64;
        }
        t = t_next;
        events += 1;
        if events > max_events {
            return Err(Error::EventBudgetExceeded {
                lineage,
                max_events,
                t,
                population: counts.iter().sum(),
            });
        }
    }
    while out.len() < obs_times.len() {
        out.push(counts.clone());
    }
    Ok(out)
}

/// Joint sample from the multivariate hypergeometric distribution: draw
/// `sample` balls without replacement from an urn with `population[i]`
/// balls of color `i`.
///
/// Implemented by drawing a uniformly random `sample`-subset of ball
/// positions (Floyd's algorithm, O(sample) work independent of the urn
/// size) and bucketing the positions into colors by binary search on the
/// cumulative counts. Exact for any population size.
pub fn mvhypergeom_sample(
    population: &[u64],
    sample: u64,
    rng: &mut impl Rng,
) -> Result<Vec<u64>> {
    let total: u64 = population.iter().sum();
    if sample > total {
        return Err(Error::SampleExceedsPopulation {
            sample,
            population: total,
            context: "multivariate hypergeometric draw".into(),
        });
    }
    if sample == total {
        return Ok(population.to_vec());
    }
    let mut cum = Vec::with_capacity(population.len());
    let mut acc = 0u64;
    for &k in population {
        acc += k;
        cum.push(acc);
    }
    let mut out = vec![0u64; population.len()];
    let mut chosen: HashSet<u64> = HashSet::with_capacity(sample as usize);
    for j in (total - sample)..total {
        let t = rng.random_range(0..=j);
        let pos = if chosen.insert(t) { t } else {
            chosen.insert(j);
            j
        };
        out[cum.partition_point(|&c| c <= pos)] += 1;
    }
    Ok(out)
}

/// Simulate a full dataset: lineages in parallel, exact population totals,
/// per-(type, time) hypergeometric read sampling over barcodes, PCR
/// scaling with round-half-to-even, and the read filter.
pub fn simulate_dataset(
    topo: &ModelTopology,
    params: &Params,
    cfg: &SimConfig,
) -> Result<ReadDataset> {
    validate_topology(topo)?;
    validate_params(topo, params, false)?;
    let n_mat = topo.n_mat();
    let n_times = cfg.obs_times.len();
    if cfg.obs_times.is_empty()
        || cfg.obs_times[0] <= 0.0
        || cfg.obs_times.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidData(
            "observation times must be strictly increasing and positive".into(),
        ));
    }
    if cfg.pi.len() != 1 + topo.n_prog() {
        return Err(Error::InvalidParams(format!(
            "simulation pi has {} entries, topology wants {}",
            cfg.pi.len(),
            1 + topo.n_prog()
        )));
    }
    let b_row = expand_sample_sizes(&cfg.sample_sizes, n_mat)?;
    if let Some(d) = &cfg.pcr_constants {
        if d.len() != n_times || d.iter().any(|row| row.len() != n_mat) {
            return Err(Error::InvalidData(
                "pcr_constants must be one row per time with one entry per type".into(),
            ));
        }
    }

    // latent mature counts per lineage at each observation time
    let reactions = build_reactions(topo, params);
    let per_lineage: Vec<Result<Vec<Vec<u64>>>> = par_map_indexed(cfg.n_lineages, |p| {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        rng.set_stream(p as u64);
        let init = sample_initial_compartment(topo, &cfg.pi, &mut rng);
        let states = simulate_lineage(
            &reactions,
            init,
            &cfg.obs_times,
            cfg.max_events,
            p as u64,
            &mut rng,
        )?;
        // keep only the mature block
        Ok(states
            .into_iter()
            .map(|s| s[1 + topo.n_prog()..].to_vec())
            .collect())
    });
    let mut latent = Vec::with_capacity(cfg.n_lineages);
    for r in per_lineage {
        latent.push(r?);
    }

    // exact population totals B_m(t_j)
    let mut big_b = vec![vec![0u64; n_mat]; n_times];
    for lineage in &latent {
        for (j, row) in lineage.iter().enumerate() {
            for m in 0..n_mat {
                big_b[j][m] += row[m];
            }
        }
    }
    for j in 0..n_times {
        for m in 0..n_mat {
            if b_row[m] > big_b[j][m] {
                return Err(Error::SampleExceedsPopulation {
                    sample: b_row[m],
                    population: big_b[j][m],
                    context: format!(
                        "type '{}' at t={} (lower b or more lineages needed)",
                        topo.matures[m], cfg.obs_times[j]
                    ),
                });
            }
        }
    }

    // read sampling per (time, type): one joint draw over all barcodes
    let cells: Vec<Vec<u64>> = par_map_indexed(n_times * n_mat, |jm| {
        let (j, m) = (jm / n_mat, jm % n_mat);
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        rng.set_stream(SAMPLING_STREAM_BASE + jm as u64);
        let population: Vec<u64> = latent.iter().map(|l| l[j][m]).collect();
        mvhypergeom_sample(&population, b_row[m], &mut rng).expect("b <= B checked above")
    });

    // PCR scaling and filtering
    let mut kept_rows: Vec<usize> = Vec::new();
    let mut reads_all: Vec<u64> = vec![0; cfg.n_lineages * n_times * n_mat];
    for j in 0..n_times {
        for m in 0..n_mat {
            let d = cfg
                .pcr_constants
                .as_ref()
                .map_or(1.0, |rows| rows[j][m]);
            let col = &cells[j * n_mat + m];
            for p in 0..cfg.n_lineages {
                let y = if d == 1.0 {
                    col[p]
                } else {
                    round_ties_even(d * col[p] as f64)
                };
                reads_all[(p * n_times + j) * n_mat + m] = y;
            }
        }
    }
    for p in 0..cfg.n_lineages {
        let row = &reads_all[p * n_times * n_mat..(p + 1) * n_times * n_mat];
        let keep = match cfg.filter_mode {
            FilterMode::MaxCell => row.iter().max().copied().unwrap_or(0) >= cfg.read_filter_threshold,
            FilterMode::TimeSum => (0..n_times)
                .map(|j| row[j * n_mat..(j + 1) * n_mat].iter().sum::<u64>())
                .max()
                .unwrap_or(0)
                >= cfg.read_filter_threshold,
        };
        if keep {
            kept_rows.push(p);
        }
    }

    let mut reads = Vec::with_capacity(kept_rows.len() * n_times * n_mat);
    for &p in &kept_rows {
        reads.extend_from_slice(&reads_all[p * n_times * n_mat..(p + 1) * n_times * n_mat]);
    }
    Ok(ReadDataset {
        barcode_ids: kept_rows.iter().map(|&p| p as u64).collect(),
        times: cfg.obs_times.clone(),
        types: topo.matures.clone(),
        reads,
        b: vec![b_row; n_times],
        big_b,
    })
}

fn expand_sample_sizes(sizes: &[u64], n_mat: usize) -> Result<Vec<u64>> {
    let row = match sizes.len() {
        1 => vec![sizes[0]; n_mat],
        n if n == n_mat => sizes.to_vec(),
        n => {
            return Err(Error::InvalidData(format!(
                "sample_sizes has {n} entries; want 1 or {n_mat}"
            )))
        }
    };
    if row.iter().any(|&b| b == 0) {
        return Err(Error::InvalidData("sample sizes must be positive".into()));
    }
    Ok(row)
}

fn sample_initial_compartment(topo: &ModelTopology, pi: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in pi.iter().enumerate() {
        acc += p;
        if u < acc {
            return if k == 0 { 0 } else { topo.prog_index(k - 1) };
        }
    }
    topo.prog_index(topo.n_prog() - 1)
}

/// Round half to even ("banker's rounding"), the tie rule used for PCR
/// scaled read counts so that systematic .5 ties do not bias sums upward.
pub fn round_ties_even(x: f64) -> u64 {
    let floor = x.floor();
    let frac = x - floor;
    let f = floor as u64;
    match frac.partial_cmp(&0.5).expect("finite") {
        std::cmp::Ordering::Less => f,
        std::cmp::Ordering::Greater => f + 1,
        std::cmp::Ordering::Equal => {
            if f % 2 == 0 {
                f
            } else {
                f + 1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical_model;

    fn model_a_truth() -> (ModelTopology, Params) {
        let topo = canonical_model("a").unwrap();
        let params = Params {
            lambda: 0.028,
            nu_prog: vec![0.020],
            mu_prog: vec![0.008],
            nu_mat: vec![36.0, 15.0, 7.0],
            mu_mat: vec![0.24, 0.14, 0.09],
            pi: vec![0.1, 0.9],
        };
        (topo, params)
    }

    fn small_cfg(params: &Params, n: usize, seed: u64) -> SimConfig {
        SimConfig {
            read_filter_threshold: 0,
            ..SimConfig::new(params, n, vec![5.0, 10.0], 50, seed)
        }
    }

    #[test]
    fn same_seed_same_dataset_different_seed_differs() {
        let (topo, params) = model_a_truth();
        let cfg = small_cfg(&params, 400, 7);
        let d1 = simulate_dataset(&topo, &params, &cfg).unwrap();
        let d2 = simulate_dataset(&topo, &params, &cfg).unwrap();
        assert_eq!(d1, d2);
        let cfg2 = SimConfig { seed: 8, ..cfg };
        let d3 = simulate_dataset(&topo, &params, &cfg2).unwrap();
        assert_ne!(d1.reads, d3.reads);
    }

    #[test]
    fn lineage_mean_matches_closed_form() {
        // single-progenitor start: E[X_m(t)] = M_{m|a}(t); group-mean MC
        // against the exact curve
        let (topo, params) = model_a_truth();
        let reactions = build_reactions(&topo, &params);
        let mset = crate::moments::build_moment_set(&topo, &params).unwrap();
        let t = 5.0;
        let n = 40_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for p in 0..n {
            let mut rng = ChaCha12Rng::seed_from_u64(42);
            rng.set_stream(p);
            let states =
                simulate_lineage(&reactions, 1, &[t], 10_000_000, p, &mut rng).unwrap();
            let x = states[0][2] as f64; // mature type "1"
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let sd = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        let want = mset.mean(0, 1).eval(t);
        assert!(
            (mean - want).abs() < 4.0 * sd,
            "MC mean {mean} vs closed form {want} (4 SE = {})",
            4.0 * sd
        );
    }

    #[test]
    fn merged_lineages_double_the_mean() {
        // linearity: two independent single-cell lineages summed behave as
        // one lineage started with two cells
        let (topo, params) = model_a_truth();
        let reactions = build_reactions(&topo, &params);
        let t = 5.0;
        let n = 20_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for p in 0..n {
            let mut rng = ChaCha12Rng::seed_from_u64(9000);
            rng.set_stream(p);
            let a = simulate_lineage(&reactions, 1, &[t], 10_000_000, p, &mut rng).unwrap();
            let b = simulate_lineage(&reactions, 1, &[t], 10_000_000, p, &mut rng).unwrap();
            let x = (a[0][2] + b[0][2]) as f64;
            sum += x;
            sumsq += x * x;
        }
        let mset = crate::moments::build_moment_set(&topo, &params).unwrap();
        let mean = sum / n as f64;
        let sd = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        let want = 2.0 * mset.mean(0, 1).eval(t);
        assert!((mean - want).abs() < 4.0 * sd, "{mean} vs {want}");
    }

    #[test]
    fn event_budget_guards_supercritical_blowup() {
        let topo = canonical_model("a").unwrap();
        let params = Params {
            lambda: 60.0, // wildly supercritical
            nu_prog: vec![0.01],
            mu_prog: vec![0.01],
            nu_mat: vec![1.0, 1.0, 1.0],
            mu_mat: vec![0.1, 0.1, 0.1],
            pi: vec![1.0, 0.0],
        };
        let reactions = build_reactions(&topo, &params);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let err = simulate_lineage(&reactions, 0, &[5.0], 10_000, 0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::EventBudgetExceeded { .. }), "{err}");
    }

    #[test]
    fn mvhypergeom_sums_and_support() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let pop = [5u64, 0, 3, 2];
        for _ in 0..2000 {
            let s = mvhypergeom_sample(&pop, 4, &mut rng).unwrap();
            assert_eq!(s.iter().sum::<u64>(), 4);
            assert_eq!(s[1], 0);
            for (x, p) in s.iter().zip(pop.iter()) {
                assert!(x <= p);
            }
        }
        assert!(mvhypergeom_sample(&pop, 11, &mut rng).is_err());
        // exhaustive draw returns the population itself
        let all = mvhypergeom_sample(&pop, 10, &mut rng).unwrap();
        assert_eq!(all, pop);
    }

    #[test]
    fn mvhypergeom_marginal_mean() {
        // E[x_0] = b K / N = 4 * 5 / 10 = 2
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let pop = [5u64, 3, 2];
        let n = 20_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += mvhypergeom_sample(&pop, 4, &mut rng).unwrap()[0] as f64;
        }
        let mean = sum / n as f64;
        // Var[x_0] = b (K/N)((N-K)/N)((N-b)/(N-1)) = 4*.5*.5*(6/9) = 2/3
        let se = (2.0 / 3.0 / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn read_columns_sum_to_b_without_pcr() {
        let (topo, params) = model_a_truth();
        let cfg = small_cfg(&params, 500, 11);
        let data = simulate_dataset(&topo, &params, &cfg).unwrap();
        assert_eq!(data.n_barcodes(), 500, "threshold 0 keeps every barcode");
        for j in 0..data.n_times() {
            for m in 0..data.n_types() {
                let total: u64 = (0..data.n_barcodes()).map(|p| data.read(p, j, m)).sum();
                assert_eq!(total, data.b[j][m]);
                assert!(data.b[j][m] <= data.big_b[j][m]);
            }
        }
    }

    #[test]
    fn pcr_scaling_rounds_ties_to_even() {
        assert_eq!(round_ties_even(0.5), 0);
        assert_eq!(round_ties_even(1.5), 2);
        assert_eq!(round_ties_even(2.5), 2);
        assert_eq!(round_ties_even(2.4999), 2);
        assert_eq!(round_ties_even(2.5001), 3);
        let (topo, params) = model_a_truth();
        let mut cfg = small_cfg(&params, 300, 13);
        let base = simulate_dataset(&topo, &params, &cfg).unwrap();
        cfg.pcr_constants = Some(vec![vec![10.0, 1.0, 0.5]; 2]);
        let scaled = simulate_dataset(&topo, &params, &cfg).unwrap();
        for p in 0..300 {
            for j in 0..2 {
                assert_eq!(scaled.read(p, j, 0), base.read(p, j, 0) * 10);
                assert_eq!(scaled.read(p, j, 1), base.read(p, j, 1));
                assert_eq!(
                    scaled.read(p, j, 2),
                    round_ties_even(base.read(p, j, 2) as f64 * 0.5)
                );
            }
        }
    }

    #[test]
    fn filter_drops_dim_barcodes() {
        let (topo, params) = model_a_truth();
        let mut cfg = small_cfg(&params, 500, 17);
        cfg.read_filter_threshold = 1; // drops barcodes with zero reads everywhere
        let all = simulate_dataset(
            &topo,
            &params,
            &SimConfig {
                read_filter_threshold: 0,
                ..cfg.clone()
            },
        )
        .unwrap();
        let filtered = simulate_dataset(&topo, &params, &cfg).unwrap();
        let zero_rows = (0..all.n_barcodes())
            .filter(|&p| (0..2).all(|j| (0..3).all(|m| all.read(p, j, m) == 0)))
            .count();
        assert_eq!(filtered.n_barcodes(), all.n_barcodes() - zero_rows);
        assert!(zero_rows > 0, "seed should produce some unread barcodes");
        // filtering relabels nothing: kept ids are the original indices
        for (&id, p) in filtered.barcode_ids.iter().zip(0..) {
            let _ = p;
            assert!((0..2).any(|j| (0..3).any(|m| all.read(id as usize, j, m) > 0)));
        }
    }

    #[test]
    fn oversampling_is_an_error() {
        let (topo, params) = model_a_truth();
        let cfg = SimConfig {
            read_filter_threshold: 0,
            ..SimConfig::new(&params, 5, vec![1.0], 100_000, 23)
        };
        let err = simulate_dataset(&topo, &params, &cfg).unwrap_err();
        assert!(matches!(err, Error::SampleExceedsPopulation { .. }), "{err}");
    }

    #[test]
    fn subset_and_time_drop() {
        let (topo, params) = model_a_truth();
        let cfg = small_cfg(&params, 50, 29);
        let data = simulate_dataset(&topo, &params, &cfg).unwrap();
        let sub = data.subset(&[3, 3, 10]);
        assert_eq!(sub.n_barcodes(), 3);
        assert_eq!(sub.read(0, 1, 2), data.read(3, 1, 2));
        assert_eq!(sub.read(1, 1, 2), data.read(3, 1, 2));
        assert_eq!(sub.read(2, 0, 0), data.read(10, 0, 0));
        let dropped = data.without_times(&[0]);
        assert_eq!(dropped.times, vec![10.0]);
        assert_eq!(dropped.read(5, 0, 1), data.read(5, 1, 1));
        assert_eq!(dropped.big_b[0], data.big_b[1]);
    }
}
