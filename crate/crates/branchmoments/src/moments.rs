//! First and second moments of the branching process, exact in time.
//!
//! Writing `M_{m|i}(t)` for the expected count of mature type `m` at time
//! `t` started from one cell of compartment `i`, and `U_{mn|i}(t)` for the
//! factorial product moment `E[X_m X_n]` (`E[X_m(X_m-1)]` when `m = n`),
//! the moment ODEs are linear with coefficients given by the first and
//! second partial derivatives (`kappa`) of the pseudo-generating functions
//! at `s = 1`:
//!
//! ```text
//! dM_{m|i}/dt = sum_k kappa[i][k] M_{m|k}
//! dU_{mn|i}/dt = sum_j kappa[i][j] U_{mn|j}
//!              + sum_{j,k} kappa2[i][j][k] M_{m|j} M_{n|k}
//! ```
//!
//! The compartment graph is a tree, so the systems are triangular: mature
//! sources first (pure death), then progenitors, then the stem compartment.
//! Each step is one linear ODE with an exponential-polynomial forcing,
//! solved exactly by [`ExpSum::solve_linear_ode`]. [`oracle`] integrates
//! the same ODEs numerically with an independent Runge-Kutta code and is
//! used to cross-check this cascade.
//!
//! From the per-source curves, [`latent_moments`] marginalizes over the
//! initial-compartment distribution `pi`, [`observed_moments`] applies the
//! without-replacement read-sampling corrections, and
//! [`model_correlations`] produces the pairwise correlation table that the
//! estimator matches against data.

pub mod oracle;

use crate::expsum::ExpSum;
use crate::model::{ModelTopology, Params};
use crate::{Error, Result};

/// First partials of the pseudo-generating functions at `s = 1`:
/// `kappa[i][k] = d u_i / d s_k (1)`. This is the coefficient matrix of the
/// mean ODE system (and of the homogeneous part of the second-moment one).
pub fn kappa_first(topo: &ModelTopology, params: &Params) -> Vec<Vec<f64>> {
    let c = topo.n_compartments();
    let mut k = vec![vec![0.0; c]; c];
    // stem: u_0 = lambda s_0^2 + sum_a nu_a s_a - (lambda + sum_a nu_a) s_0
    k[0][0] = params.lambda - params.nu_prog.iter().sum::<f64>();
    for a in 0..topo.n_prog() {
        k[0][topo.prog_index(a)] = params.nu_prog[a];
    }
    // progenitor a: u_a = sum_{m: child} nu_m s_a s_m + mu_a
    //                     - (mu_a + sum_{m: child} nu_m) s_a
    for a in 0..topo.n_prog() {
        let ia = topo.prog_index(a);
        k[ia][ia] = -params.mu_prog[a];
        for m in topo.children(a) {
            k[ia][topo.mat_index(m)] = params.nu_mat[m];
        }
    }
    // mature m: u_m = mu_m - mu_m s_m
    for m in 0..topo.n_mat() {
        let im = topo.mat_index(m);
        k[im][im] = -params.mu_mat[m];
    }
    k
}

/// Nonzero second partials `kappa2[i][j][k] = d^2 u_i / d s_j d s_k (1)`,
/// returned as `(i, j, k, value)` entries. Only the stem self-renewal and
/// the progenitor production terms are quadratic in `s`.
pub fn kappa_second(topo: &ModelTopology, params: &Params) -> Vec<(usize, usize, usize, f64)> {
    let mut entries = vec![(0usize, 0usize, 0usize, 2.0 * params.lambda)];
    for a in 0..topo.n_prog() {
        let ia = topo.prog_index(a);
        for m in topo.children(a) {
            let im = topo.mat_index(m);
            entries.push((ia, ia, im, params.nu_mat[m]));
            entries.push((ia, im, ia, params.nu_mat[m]));
        }
    }
    entries
}

/// Index of the unordered pair `(m, n)` (with `m <= n`) in row-major
/// upper-triangular order over `n_mat` mature types, diagonal included.
pub fn tri_index(m: usize, n: usize, n_mat: usize) -> usize {
    debug_assert!(m <= n && n < n_mat);
    m * n_mat - m * (m + 1) / 2 + n
}

/// Number of unordered pairs including the diagonal.
pub fn n_tri(n_mat: usize) -> usize {
    n_mat * (n_mat + 1) / 2
}

/// Off-diagonal pairs `(m, n)`, `m < n`, in lexicographic order. This is the
/// pair ordering used by correlation tables and loss sums.
pub fn offdiag_pairs(n_mat: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n_mat * (n_mat - 1) / 2);
    for m in 0..n_mat {
        for n in (m + 1)..n_mat {
            out.push((m, n));
        }
    }
    out
}

/// Exact moment curves for every source compartment: `m[mature][source]`
/// and `u[tri_index(m,n)][source]`, sources indexed globally (stem,
/// progenitors, matures). Mature-source second moments are identically zero
/// (a single mature cell never holds two cells), kept for uniformity.
#[derive(Debug, Clone)]
pub struct MomentSet {
    pub topo: ModelTopology,
    pub m: Vec<Vec<ExpSum>>,
    pub u: Vec<Vec<ExpSum>>,
}

impl MomentSet {
    pub fn mean(&self, mature: usize, source: usize) -> &ExpSum {
        &self.m[mature][source]
    }

    pub fn second(&self, m: usize, n: usize, source: usize) -> &ExpSum {
        let (lo, hi) = if m <= n { (m, n) } else { (n, m) };
        &self.u[tri_index(lo, hi, self.topo.n_mat())][source]
    }
}

/// Solve the full moment cascade symbolically.
///
/// Order: mature sources (pure exponentials), then for each progenitor its
/// children's means, then stem means, then second moments progenitor-source
/// and finally stem-source, whose forcing couples the stem self-renewal
/// term `kappa2[0][0][0] M_{m|0} M_{n|0}` with the differentiation-weighted
/// progenitor solutions.
pub fn build_moment_set(topo: &ModelTopology, params: &Params) -> Result<MomentSet> {
    crate::model::validate_params(topo, params, false)?;
    let n_mat = topo.n_mat();
    let n_prog = topo.n_prog();
    let c = topo.n_compartments();
    let kappa00 = params.lambda - params.nu_prog.iter().sum::<f64>();

    let mut m = vec![vec![ExpSum::zero(); c]; n_mat];
    // mature source: M_{m|m} = e^{-mu_m t}
    for mat in 0..n_mat {
        m[mat][topo.mat_index(mat)] = ExpSum::term(1.0, 0, -params.mu_mat[mat]);
    }
    // progenitor sources: dM_{m|a}/dt = -mu_a M_{m|a} + nu_m M_{m|m}
    for a in 0..n_prog {
        let ia = topo.prog_index(a);
        for mat in topo.children(a) {
            let forcing = m[mat][topo.mat_index(mat)].scale(params.nu_mat[mat]);
            m[mat][ia] = ExpSum::solve_linear_ode(-params.mu_prog[a], &forcing, 0.0)?;
        }
    }
    // stem source: dM_{m|0}/dt = kappa00 M_{m|0} + nu_a M_{m|a}, a = parent(m)
    for mat in 0..n_mat {
        let a = topo.parent[mat];
        let forcing = m[mat][topo.prog_index(a)].scale(params.nu_prog[a]);
        m[mat][0] = ExpSum::solve_linear_ode(kappa00, &forcing, 0.0)?;
    }

    let mut u = vec![vec![ExpSum::zero(); c]; n_tri(n_mat)];
    // progenitor sources: forcing nu_n M_{m|a} M_{n|n} + nu_m M_{n|a} M_{m|m}
    // (the two orderings of the mixed second partial; for m = n they are
    // equal and the factor 2 appears automatically). Each ordering exists
    // only when the produced type is one of a's children: the production
    // reaction a -> a + m has no analogue for another progenitor's matures,
    // so cross-parent pairs get no forcing here and stay zero.
    for a in 0..n_prog {
        let ia = topo.prog_index(a);
        for pm in 0..n_mat {
            for pn in pm..n_mat {
                let mut forcing = ExpSum::zero();
                if topo.parent[pn] == a {
                    forcing = forcing.add(
                        &m[pm][ia]
                            .mul(&m[pn][topo.mat_index(pn)])?
                            .scale(params.nu_mat[pn]),
                    );
                }
                if topo.parent[pm] == a {
                    forcing = forcing.add(
                        &m[pn][ia]
                            .mul(&m[pm][topo.mat_index(pm)])?
                            .scale(params.nu_mat[pm]),
                    );
                }
                if !forcing.is_zero() {
                    u[tri_index(pm, pn, n_mat)][ia] =
                        ExpSum::solve_linear_ode(-params.mu_prog[a], &forcing, 0.0)?;
                }
            }
        }
    }
    // stem source: forcing 2 lambda M_{m|0} M_{n|0} + sum_a nu_a U_{mn|a}
    for pm in 0..n_mat {
        for pn in pm..n_mat {
            let pair = tri_index(pm, pn, n_mat);
            let mut forcing = m[pm][0].mul(&m[pn][0])?.scale(2.0 * params.lambda);
            for a in 0..n_prog {
                forcing = forcing.add(&u[pair][topo.prog_index(a)].scale(params.nu_prog[a]));
            }
            u[pair][0] = ExpSum::solve_linear_ode(kappa00, &forcing, 0.0)?;
        }
    }

    Ok(MomentSet {
        topo: topo.clone(),
        m,
        u,
    })
}

/// Moments of the latent mature counts at one time, marginalized over the
/// initial-compartment distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMoments {
    pub mean: Vec<f64>,
    /// Variances (also on the diagonal of `cov`).
    pub var: Vec<f64>,
    /// Full symmetric covariance matrix.
    pub cov: Vec<Vec<f64>>,
}

/// Marginalize the per-source curves over `pi` (stem + progenitors):
/// `E[X_m] = sum_k pi_k M_{m|k}`,
/// `E[X_m X_n] = sum_k pi_k U_{mn|k}` (plus `E[X_m]` on the diagonal,
/// since `U` is factorial), and covariances subtract the product of means.
pub fn latent_moments(mset: &MomentSet, pi: &[f64], t: f64) -> Result<LatentMoments> {
    let topo = &mset.topo;
    let n_mat = topo.n_mat();
    let n_sources = 1 + topo.n_prog();
    if pi.len() != n_sources {
        return Err(Error::InvalidParams(format!(
            "pi has {} entries, expected {}",
            pi.len(),
            n_sources
        )));
    }
    let mean: Vec<f64> = (0..n_mat)
        .map(|m| {
            (0..n_sources)
                .map(|k| pi[k] * mset.m[m][k].eval(t))
                .sum::<f64>()
        })
        .collect();
    let mut cov = vec![vec![0.0; n_mat]; n_mat];
    for m in 0..n_mat {
        for n in m..n_mat {
            let u_mixed: f64 = (0..n_sources)
                .map(|k| pi[k] * mset.u[tri_index(m, n, n_mat)][k].eval(t))
                .sum();
            // E[X_m X_n]; the diagonal adds back E[X_m] (factorial moment)
            let raw = if m == n { u_mixed + mean[m] } else { u_mixed };
            let c = raw - mean[m] * mean[n];
            cov[m][n] = c;
            cov[n][m] = c;
        }
    }
    let var = (0..n_mat).map(|m| cov[m][m]).collect();
    Ok(LatentMoments { mean, var, cov })
}

/// Moments of the read counts `Y_m` after sampling `b_m` of the `B_m`
/// circulating cells without replacement (amplification constants drop out
/// of correlations, so they are not modeled here).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMoments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// Apply the hypergeometric sampling corrections to latent moments:
///
/// ```text
/// E[Y_m]        = (b_m/B_m) E[X_m]
/// Cov[Y_m, Y_n] = (b_m b_n)/(B_m B_n) Cov[X_m, X_n]          (m != n)
/// Var[Y_m]      = b_m(B_m-b_m)/(B_m(B_m-1)) E[X_m]
///               - b_m(B_m-b_m)/(B_m^2(B_m-1)) E[X_m^2]
///               + (b_m/B_m)^2 Var[X_m]
/// ```
///
/// `B_m` are the population totals at the observation time, treated as
/// known constants. Requires `0 < b_m <= B_m` and `B_m >= 2`.
pub fn observed_moments(lat: &LatentMoments, b: &[f64], big_b: &[f64]) -> Result<ObservedMoments> {
    let n_mat = lat.mean.len();
    if b.len() != n_mat || big_b.len() != n_mat {
        return Err(Error::InvalidData(format!(
            "sample sizes have {}/{} entries for {} mature types",
            b.len(),
            big_b.len(),
            n_mat
        )));
    }
    for m in 0..n_mat {
        if !(b[m] > 0.0 && big_b[m] >= 2.0 && b[m] <= big_b[m]) {
            return Err(Error::InvalidData(format!(
                "need 0 < b <= B and B >= 2, got b={} B={} for type {m}",
                b[m], big_b[m]
            )));
        }
    }
    let mean: Vec<f64> = (0..n_mat).map(|m| b[m] / big_b[m] * lat.mean[m]).collect();
    let mut cov = vec![vec![0.0; n_mat]; n_mat];
    let mut var = vec![0.0; n_mat];
    for m in 0..n_mat {
        let (bm, bb) = (b[m], big_b[m]);
        let ex2 = lat.var[m] + lat.mean[m] * lat.mean[m];
        let hyper = bm * (bb - bm) / (bb * (bb - 1.0));
        var[m] = hyper * lat.mean[m] - hyper / bb * ex2 + (bm / bb) * (bm / bb) * lat.var[m];
        cov[m][m] = var[m];
        for n in (m + 1)..n_mat {
            let c = bm * b[n] / (bb * big_b[n]) * lat.cov[m][n];
            cov[m][n] = c;
            cov[n][m] = c;
        }
    }
    Ok(ObservedMoments { mean, var, cov })
}

/// Pairwise correlation table over observation times: `psi[time][pair]`
/// with pairs in [`offdiag_pairs`] order. `None` marks cells where a
/// correlation is undefined (zero variance).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrTable {
    pub times: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub psi: Vec<Vec<Option<f64>>>,
}

/// Model correlations of observed read counts for each observation time.
/// `b[j]` and `big_b[j]` give the per-type sample and population sizes at
/// time `times[j]`.
pub fn model_correlations(
    mset: &MomentSet,
    pi: &[f64],
    times: &[f64],
    b: &[Vec<f64>],
    big_b: &[Vec<f64>],
) -> Result<CorrTable> {
    let n_mat = mset.topo.n_mat();
    if b.len() != times.len() || big_b.len() != times.len() {
        return Err(Error::InvalidData(
            "sample-size tables must have one row per observation time".into(),
        ));
    }
    let pairs = offdiag_pairs(n_mat);
    let mut psi = Vec::with_capacity(times.len());
    for (j, &t) in times.iter().enumerate() {
        let lat = latent_moments(mset, pi, t)?;
        let obs = observed_moments(&lat, &b[j], &big_b[j])?;
        let row = pairs
            .iter()
            .map(|&(m, n)| {
                let denom = obs.var[m] * obs.var[n];
                if denom > 0.0 {
                    Some(obs.cov[m][n] / denom.sqrt())
                } else {
                    None
                }
            })
            .collect();
        psi.push(row);
    }
    Ok(CorrTable { times: times.to_vec(), pairs, psi })
}
