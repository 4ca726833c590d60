//! Parameter estimation by correlation matching: empirical read-count
//! correlations across barcodes are compared against the model-implied
//! observed-count correlations, and free rates (in log space) plus the
//! initial-condition logits are adjusted to minimize the squared distance,
//! with a log-barrier keeping the net stem growth rate positive. Multi-start
//! local optimization makes the procedure robust to the multimodal loss
//! surface; everything is deterministic given the seed, independent of
//! thread count.

pub mod optimizer;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::model::{
    gamma_to_pi, param_names, pi_to_gamma, validate_params, validate_topology, FixedMask,
    GammaVector, ModelTopology, Params, PiFix,
};
use crate::moments::{build_moment_set, model_correlations, offdiag_pairs, CorrTable};
use crate::par::par_map_indexed;
use crate::simulator::ReadDataset;
use crate::{Error, Result};
use optimizer::{bfgs_fd, nelder_mead, OptOptions, OptStatus};

/// Weight of the log-barrier `-tau * ln(lambda - sum nu_prog)` added to the
/// fitting loss. Small enough to leave the optimum essentially untouched,
/// large enough to repel the optimizer from the subcritical boundary.
pub const BARRIER_TAU: f64 = 1e-6;

/// Two restart objectives within this of each other count as a tie, resolved
/// toward the lower restart index so that reruns pick the same optimum.
pub const TIE_TOL: f64 = 1e-12;

/// Pearson correlation of two equally long columns; `None` when either has
/// zero variance. Two-pass for accuracy; scaling either column by a positive
/// constant cancels exactly up to rounding.
fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - mx, yi - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx > 0.0 && syy > 0.0 {
        Some(sxy / (sxx.sqrt() * syy.sqrt()))
    } else {
        None
    }
}

/// Empirical cross-type correlations of read counts across barcodes, one
/// cell per (observation time, unordered type pair). Cells where either
/// column is constant (for example an undetected cell type) are `None` and
/// are skipped by the loss. Needs at least three barcodes.
pub fn empirical_correlations(data: &ReadDataset) -> Result<CorrTable> {
    if data.n_barcodes() < 3 {
        return Err(Error::InvalidData(format!(
            "need at least 3 barcodes to estimate correlations, have {}",
            data.n_barcodes()
        )));
    }
    let pairs = offdiag_pairs(data.n_types());
    let mut psi = Vec::with_capacity(data.n_times());
    for j in 0..data.n_times() {
        let cols: Vec<Vec<f64>> = (0..data.n_types()).map(|m| data.column(j, m)).collect();
        psi.push(
            pairs
                .iter()
                .map(|&(m, n)| pearson(&cols[m], &cols[n]))
                .collect(),
        );
    }
    Ok(CorrTable {
        times: data.times.clone(),
        pairs,
        psi,
    })
}

/// Squared correlation distance between model and data, summed over ordered
/// off-diagonal pairs (each unordered pair counted twice) and observation
/// times, plus the optional growth-rate log-barrier.
///
/// `None` cells in `psi_hat` contribute nothing. Returns `+inf` when the
/// parameters are outside the admissible domain (negative or non-finite
/// rates, non-positive net growth while the barrier is active) or when the
/// model correlation is undefined at a cell where the data has a value.
pub fn loss(
    topo: &ModelTopology,
    params: &Params,
    psi_hat: &CorrTable,
    b: &[Vec<f64>],
    big_b: &[Vec<f64>],
    barrier_tau: Option<f64>,
) -> Result<f64> {
    if psi_hat.pairs != offdiag_pairs(topo.n_mat()) {
        return Err(Error::InvalidData(
            "correlation table pairs do not match the topology".into(),
        ));
    }
    if b.len() != psi_hat.times.len() || big_b.len() != psi_hat.times.len() {
        return Err(Error::InvalidData(
            "sample-size tables must have one row per observation time".into(),
        ));
    }
    if validate_params(topo, params, false).is_err() {
        return Ok(f64::INFINITY);
    }
    Ok(loss_value(topo, params, psi_hat, b, big_b, barrier_tau))
}

/// Hot path shared with the optimizer closure: assumes shapes are right.
fn loss_value(
    topo: &ModelTopology,
    params: &Params,
    psi_hat: &CorrTable,
    b: &[Vec<f64>],
    big_b: &[Vec<f64>],
    barrier_tau: Option<f64>,
) -> f64 {
    let all_rates = params
        .nu_prog
        .iter()
        .chain(&params.mu_prog)
        .chain(&params.nu_mat)
        .chain(&params.mu_mat)
        .chain(std::iter::once(&params.lambda));
    for &r in all_rates {
        if !r.is_finite() || r < 0.0 {
            return f64::INFINITY;
        }
    }
    let growth = params.net_growth();
    if barrier_tau.is_some() && growth <= 0.0 {
        return f64::INFINITY;
    }
    let mset = match build_moment_set(topo, params) {
        Ok(m) => m,
        Err(_) => return f64::INFINITY,
    };
    let psi_model = match model_correlations(&mset, &params.pi, &psi_hat.times, b, big_b) {
        Ok(t) => t,
        Err(_) => return f64::INFINITY,
    };
    let mut acc = 0.0;
    for (row_hat, row_model) in psi_hat.psi.iter().zip(&psi_model.psi) {
        for (cell_hat, cell_model) in row_hat.iter().zip(row_model) {
            match (cell_hat, cell_model) {
                (None, _) => {}
                (Some(_), None) => return f64::INFINITY,
                (Some(h), Some(m)) => {
                    let d = m - h;
                    acc += 2.0 * d * d;
                }
            }
        }
    }
    if let Some(tau) = barrier_tau {
        acc -= tau * growth.ln();
    }
    acc
}

/// Which coordinate of [`Params`] a free-vector slot maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RateCoord {
    Lambda,
    NuProg(usize),
    MuProg(usize),
    NuMat(usize),
    MuMat(usize),
}

/// Mapping between the unconstrained optimizer vector and [`Params`]: free
/// rates are stored as natural logs, the initial-condition distribution as
/// multinomial logits (full or progenitor-only depending on the mask).
#[derive(Debug, Clone)]
struct FreeLayout {
    rates: Vec<RateCoord>,
    n_gamma: usize,
    pi_fix: PiFix,
}

impl FreeLayout {
    fn new(topo: &ModelTopology, mask: &FixedMask) -> FreeLayout {
        let mut rates = Vec::new();
        if !mask.lambda {
            rates.push(RateCoord::Lambda);
        }
        for (a, fixed) in mask.nu_prog.iter().enumerate() {
            if !fixed {
                rates.push(RateCoord::NuProg(a));
            }
        }
        for (a, fixed) in mask.mu_prog.iter().enumerate() {
            if !fixed {
                rates.push(RateCoord::MuProg(a));
            }
        }
        for (m, fixed) in mask.nu_mat.iter().enumerate() {
            if !fixed {
                rates.push(RateCoord::NuMat(m));
            }
        }
        for (m, fixed) in mask.mu_mat.iter().enumerate() {
            if !fixed {
                rates.push(RateCoord::MuMat(m));
            }
        }
        FreeLayout {
            rates,
            n_gamma: mask.n_free_gamma(topo.n_prog()),
            pi_fix: mask.pi,
        }
    }

    fn dim(&self) -> usize {
        self.rates.len() + self.n_gamma
    }

    /// Natural parameters -> free vector. Free rates must be strictly
    /// positive (they are optimized in log space).
    fn encode(&self, params: &Params) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.dim());
        for &coord in &self.rates {
            let v = match coord {
                RateCoord::Lambda => params.lambda,
                RateCoord::NuProg(a) => params.nu_prog[a],
                RateCoord::MuProg(a) => params.mu_prog[a],
                RateCoord::NuMat(m) => params.nu_mat[m],
                RateCoord::MuMat(m) => params.mu_mat[m],
            };
            if v <= 0.0 {
                return Err(Error::Fit(format!(
                    "free rate {coord:?} = {v} cannot be log-encoded; start it strictly positive"
                )));
            }
            x.push(v.ln());
        }
        match self.pi_fix {
            PiFix::Free => x.extend(pi_to_gamma(&params.pi)?.0),
            PiFix::FixedHsc if self.n_gamma > 0 => {
                // logits of the progenitor split, conditional on pi[0]
                let rest: f64 = params.pi[1..].iter().sum();
                if rest <= 0.0 {
                    return Err(Error::Fit(
                        "progenitor occupation is zero; cannot log-encode the split".into(),
                    ));
                }
                let q: Vec<f64> = params.pi[1..].iter().map(|&p| p / rest).collect();
                x.extend(pi_to_gamma(&q)?.0);
            }
            _ => {}
        }
        Ok(x)
    }

    /// Free vector -> natural parameters, fixed entries taken from `base`.
    fn decode(&self, x: &[f64], base: &Params) -> Params {
        let mut params = base.clone();
        for (&coord, &xi) in self.rates.iter().zip(x) {
            let v = xi.exp();
            match coord {
                RateCoord::Lambda => params.lambda = v,
                RateCoord::NuProg(a) => params.nu_prog[a] = v,
                RateCoord::MuProg(a) => params.mu_prog[a] = v,
                RateCoord::NuMat(m) => params.nu_mat[m] = v,
                RateCoord::MuMat(m) => params.mu_mat[m] = v,
            }
        }
        let gamma = &x[self.rates.len()..];
        match self.pi_fix {
            PiFix::Free => {
                params.pi = gamma_to_pi(&GammaVector(gamma.to_vec()));
            }
            PiFix::FixedHsc if self.n_gamma > 0 => {
                let q = gamma_to_pi(&GammaVector(gamma.to_vec()));
                let rest = 1.0 - base.pi[0];
                for (a, &qa) in q.iter().enumerate() {
                    params.pi[1 + a] = rest * qa;
                }
            }
            _ => {}
        }
        params
    }
}

/// Local-minimizer backend for each restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    /// Derivative-free simplex descent; robust to the barrier wall.
    #[default]
    NelderMead,
    /// Finite-difference BFGS; faster per restart when the surface is
    /// smooth, but less forgiving near the domain boundary.
    QuasiNewton,
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Independent optimizer starts; the best objective wins.
    pub n_restarts: usize,
    /// Seed for the restart-sampling RNG streams.
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub opt: OptOptions,
    pub barrier_tau: f64,
    /// Start-point sampling range for free rates (log-uniform). `None`
    /// derives `[1e-4, 100 * max fixed death rate]` from the mask.
    pub start_rate_bounds: Option<(f64, f64)>,
    /// Start logits are uniform on `[-bound, bound]`.
    pub gamma_start_bound: f64,
    /// Parameter sets to use as the first restarts' start points (used by
    /// the bootstrap to warm-start replicate fits at the point estimate).
    pub warm_starts: Vec<Params>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_restarts: 250,
            seed: 0,
            optimizer: OptimizerKind::NelderMead,
            opt: OptOptions::default(),
            barrier_tau: BARRIER_TAU,
            start_rate_bounds: None,
            gamma_start_bound: 3.0,
            warm_starts: Vec::new(),
        }
    }
}

/// One restart's outcome, in the unconstrained coordinates.
#[derive(Debug, Clone)]
pub struct RestartRecord {
    pub index: usize,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub objective: f64,
    pub n_evals: usize,
    pub status: OptStatus,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub topo: ModelTopology,
    /// Mask the fit ran under (which entries were free).
    pub mask: FixedMask,
    /// Best-fit parameter set (fixed entries carried through unchanged).
    pub params: Params,
    /// Loss at `params`, including the barrier term.
    pub objective: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartRecord>,
    /// Model correlations at the optimum, on the data schedule.
    pub psi_model: CorrTable,
    /// Empirical correlations the fit targeted.
    pub psi_hat: CorrTable,
    /// Names of the reported free parameters (fit tables, bootstrap columns).
    pub param_names: Vec<String>,
    pub warnings: Vec<String>,
}

fn default_start_bounds(base: &Params, mask: &FixedMask) -> (f64, f64) {
    let mut max_fixed_death: f64 = 0.0;
    for (a, &fixed) in mask.mu_prog.iter().enumerate() {
        if fixed {
            max_fixed_death = max_fixed_death.max(base.mu_prog[a]);
        }
    }
    for (m, &fixed) in mask.mu_mat.iter().enumerate() {
        if fixed {
            max_fixed_death = max_fixed_death.max(base.mu_mat[m]);
        }
    }
    let scale = if max_fixed_death > 0.0 {
        max_fixed_death
    } else {
        1.0
    };
    (1e-4, 100.0 * scale)
}

fn sample_start(
    rng: &mut ChaCha12Rng,
    layout: &FreeLayout,
    rate_bounds: (f64, f64),
    gamma_bound: f64,
) -> Vec<f64> {
    let (lo, hi) = (rate_bounds.0.ln(), rate_bounds.1.ln());
    let mut x = Vec::with_capacity(layout.dim());
    for _ in 0..layout.rates.len() {
        x.push(lo + rng.random::<f64>() * (hi - lo));
    }
    for _ in 0..layout.n_gamma {
        x.push(gamma_bound * (2.0 * rng.random::<f64>() - 1.0));
    }
    x
}

/// Fit the free parameters of `topo` to the read data by multi-start local
/// minimization of [`loss`]. `base` supplies the fixed parameter values and
/// the shapes; `mask` says what is free.
///
/// Restarts are independent (warm starts first, then random starts sampled
/// from per-restart RNG streams), run in parallel, and the winner is the
/// lowest objective with ties going to the lowest restart index — so the
/// result is byte-identical across reruns and thread counts.
pub fn fit(
    topo: &ModelTopology,
    base: &Params,
    mask: &FixedMask,
    data: &ReadDataset,
    cfg: &FitConfig,
) -> Result<FitResult> {
    validate_topology(topo)?;
    validate_params(topo, base, false)?;
    if data.n_types() != topo.n_mat() {
        return Err(Error::InvalidData(format!(
            "data has {} cell types, topology has {}",
            data.n_types(),
            topo.n_mat()
        )));
    }
    if cfg.n_restarts == 0 {
        return Err(Error::Fit("need at least one restart".into()));
    }

    let psi_hat = empirical_correlations(data)?;
    let n_valid = psi_hat
        .psi
        .iter()
        .flatten()
        .filter(|c| c.is_some())
        .count();
    if n_valid == 0 {
        return Err(Error::Fit(
            "no (time, pair) cell has a defined empirical correlation".into(),
        ));
    }

    let b: Vec<Vec<f64>> = data
        .b
        .iter()
        .map(|row| row.iter().map(|&v| v as f64).collect())
        .collect();
    let big_b: Vec<Vec<f64>> = data
        .big_b
        .iter()
        .map(|row| row.iter().map(|&v| v as f64).collect())
        .collect();
    for j in 0..data.n_times() {
        for m in 0..data.n_types() {
            if !(b[j][m] > 0.0 && big_b[j][m] >= 2.0 && b[j][m] <= big_b[j][m]) {
                return Err(Error::InvalidData(format!(
                    "need 0 < b <= B and B >= 2 at time {} type {}: b={} B={}",
                    data.times[j], data.types[m], b[j][m], big_b[j][m]
                )));
            }
        }
    }

    let layout = FreeLayout::new(topo, mask);
    if layout.dim() == 0 {
        return Err(Error::Fit("no free parameters to fit".into()));
    }

    let mut warnings = Vec::new();
    let free_mu_mat: Vec<&str> = mask
        .mu_mat
        .iter()
        .enumerate()
        .filter(|(_, fixed)| !**fixed)
        .map(|(m, _)| topo.matures[m].as_str())
        .collect();
    if !free_mu_mat.is_empty() {
        warnings.push(format!(
            "mature death rates are left free for type(s) {}; correlations constrain them \
             only weakly, consider fixing them to measured turnover rates",
            free_mu_mat.join(", ")
        ));
    }

    let rate_bounds = cfg
        .start_rate_bounds
        .unwrap_or_else(|| default_start_bounds(base, mask));
    if !(rate_bounds.0 > 0.0 && rate_bounds.1 > rate_bounds.0) {
        return Err(Error::Fit(format!(
            "start-rate bounds must satisfy 0 < lo < hi, got {rate_bounds:?}"
        )));
    }

    let warm: Vec<Vec<f64>> = cfg
        .warm_starts
        .iter()
        .map(|p| {
            validate_params(topo, p, false)?;
            layout.encode(p)
        })
        .collect::<Result<_>>()?;

    let objective =
        |x: &[f64]| loss_value(topo, &layout.decode(x, base), &psi_hat, &b, &big_b, Some(cfg.barrier_tau));

    let records: Vec<RestartRecord> = par_map_indexed(cfg.n_restarts, |r| {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        let x0 = if r < warm.len() {
            Some(warm[r].clone())
        } else {
            // rejection-sample a start with a finite objective
            let mut found = None;
            let mut last = Vec::new();
            for _ in 0..200 {
                let x = sample_start(&mut rng, &layout, rate_bounds, cfg.gamma_start_bound);
                if objective(&x).is_finite() {
                    found = Some(x);
                    break;
                }
                last = x;
            }
            if found.is_none() {
                return RestartRecord {
                    index: r,
                    start: last.clone(),
                    end: last,
                    objective: f64::INFINITY,
                    n_evals: 200,
                    status: OptStatus::Degenerate,
                };
            }
            found
        }
        .unwrap();
        let out = match cfg.optimizer {
            OptimizerKind::NelderMead => nelder_mead(objective, &x0, &cfg.opt),
            OptimizerKind::QuasiNewton => bfgs_fd(objective, &x0, &cfg.opt),
        };
        RestartRecord {
            index: r,
            start: x0,
            end: out.x,
            objective: out.fx,
            n_evals: out.n_evals,
            status: out.status,
        }
    });

    let mut best = 0usize;
    for (r, rec) in records.iter().enumerate().skip(1) {
        let obj = if rec.objective.is_nan() {
            f64::INFINITY
        } else {
            rec.objective
        };
        if obj < records[best].objective - TIE_TOL {
            best = r;
        }
    }
    if !records[best].objective.is_finite() {
        return Err(Error::Fit(
            "no restart reached a finite objective; the data may be degenerate for this model"
                .into(),
        ));
    }

    let params = layout.decode(&records[best].end, base);
    let mset = build_moment_set(topo, &params)?;
    let psi_model = model_correlations(&mset, &params.pi, &psi_hat.times, &b, &big_b)?;

    Ok(FitResult {
        topo: topo.clone(),
        mask: mask.clone(),
        params,
        objective: records[best].objective,
        best_restart: best,
        restarts: records,
        psi_model,
        psi_hat,
        param_names: param_names(topo, mask),
        warnings,
    })
}
