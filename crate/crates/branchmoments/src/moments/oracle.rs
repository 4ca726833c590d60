//! Independent numerical check of the closed-form moment cascade.
//!
//! Integrates the full coupled moment ODE systems for every source
//! compartment with an adaptive embedded Dormand-Prince 4(5) pair, written
//! directly from the generic `kappa`/`kappa2` sums with no reference to the
//! triangular structure the symbolic engine exploits. Agreement between the
//! two is the main correctness gate for the moment machinery (`check
//! --oracle` on the CLI, plus the acceptance suite).

use super::{kappa_first, kappa_second, n_tri, tri_index, MomentSet};
use crate::model::{ModelTopology, Params};
use crate::{Error, Result};

/// Relative tolerance of the adaptive integrator.
pub const RTOL: f64 = 1e-12;
/// Absolute tolerance floor of the adaptive integrator. Kept far below
/// `RTOL` so that per-step error control stays relative even for cells
/// whose trajectories peak at ~1e-6: with a larger floor the accumulated
/// absolute drift on such cells exceeds one part in 1e6 of their scale,
/// which is the margin the equivalence checks certify.
pub const ATOL: f64 = 1e-16;

/// Numeric moment tables on a time grid: `m[ti][source][mature]` and
/// `u[ti][source][tri_index(m,n)]`.
#[derive(Debug, Clone)]
pub struct OracleTables {
    pub times: Vec<f64>,
    pub m: Vec<Vec<Vec<f64>>>,
    pub u: Vec<Vec<Vec<f64>>>,
}

struct MomentOde {
    c: usize,
    n_mat: usize,
    n_pairs: usize,
    kappa: Vec<Vec<f64>>,
    /// second partials grouped by source: `kappa2[i]` lists `(j, k, value)`
    kappa2: Vec<Vec<(usize, usize, f64)>>,
    pairs: Vec<(usize, usize)>,
}

impl MomentOde {
    fn new(topo: &ModelTopology, params: &Params) -> Self {
        let c = topo.n_compartments();
        let n_mat = topo.n_mat();
        let mut kappa2 = vec![Vec::new(); c];
        for (i, j, k, v) in kappa_second(topo, params) {
            kappa2[i].push((j, k, v));
        }
        let mut pairs = Vec::with_capacity(n_tri(n_mat));
        for m in 0..n_mat {
            for n in m..n_mat {
                pairs.push((m, n));
            }
        }
        MomentOde {
            c,
            n_mat,
            n_pairs: pairs.len(),
            kappa: kappa_first(topo, params),
            kappa2,
            pairs,
        }
    }

    fn dim(&self) -> usize {
        self.c * self.n_mat + self.c * self.n_pairs
    }

    /// Initial condition: `M_{m|i}(0) = 1{i == mat_index(m)}`, `U(0) = 0`.
    fn initial(&self, topo: &ModelTopology) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for m in 0..self.n_mat {
            y[topo.mat_index(m) * self.n_mat + m] = 1.0;
        }
        y
    }

    fn m_at(&self, y: &[f64], src: usize, mat: usize) -> f64 {
        y[src * self.n_mat + mat]
    }

    fn u_block(&self) -> usize {
        self.c * self.n_mat
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let ub = self.u_block();
        for i in 0..self.c {
            for mat in 0..self.n_mat {
                let mut d = 0.0;
                for k in 0..self.c {
                    d += self.kappa[i][k] * y[k * self.n_mat + mat];
                }
                dy[i * self.n_mat + mat] = d;
            }
            for (p, &(pm, pn)) in self.pairs.iter().enumerate() {
                let mut d = 0.0;
                for k in 0..self.c {
                    d += self.kappa[i][k] * y[ub + k * self.n_pairs + p];
                }
                for &(j, k, v) in &self.kappa2[i] {
                    d += v * self.m_at(y, j, pm) * self.m_at(y, k, pn);
                }
                dy[ub + i * self.n_pairs + p] = d;
            }
        }
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One adaptive step attempt from `(t, y)` with size `h`. Returns the fifth
/// order solution and the scaled error norm.
fn dp_step(
    ode: &MomentOde,
    y: &[f64],
    h: f64,
    rtol: f64,
    atol: f64,
    scratch: &mut [Vec<f64>],
) -> (Vec<f64>, f64) {
    let dim = y.len();
    let (ks, ytmp) = scratch.split_at_mut(7);
    let ytmp = &mut ytmp[0];
    ode.rhs(y, &mut ks[0]);
    for stage in 0..6 {
        for i in 0..dim {
            let mut acc = 0.0;
            for (s, k) in ks[..=stage].iter().enumerate() {
                acc += A[stage][s] * k[i];
            }
            ytmp[i] = y[i] + h * acc;
        }
        let (done, rest) = ks.split_at_mut(stage + 1);
        let _ = done;
        ode.rhs(ytmp, &mut rest[0]);
    }
    let mut y5 = vec![0.0; dim];
    let mut err_norm_sq = 0.0;
    for i in 0..dim {
        let mut acc5 = 0.0;
        let mut acc4 = 0.0;
        for s in 0..7 {
            acc5 += B5[s] * ks[s][i];
            acc4 += B4[s] * ks[s][i];
        }
        y5[i] = y[i] + h * acc5;
        let err = h * (acc5 - acc4);
        let sc = atol + rtol * y[i].abs().max(y5[i].abs());
        err_norm_sq += (err / sc) * (err / sc);
    }
    (y5, (err_norm_sq / dim as f64).sqrt())
}

/// Integrate the generic moment ODEs and record the state at each requested
/// time. `times` must be strictly increasing and nonnegative.
pub fn ode_oracle(topo: &ModelTopology, params: &Params, times: &[f64]) -> Result<OracleTables> {
    ode_oracle_with_tol(topo, params, times, RTOL, ATOL)
}

/// Same as [`ode_oracle`] with caller-chosen step tolerances.
pub fn ode_oracle_with_tol(
    topo: &ModelTopology,
    params: &Params,
    times: &[f64],
    rtol: f64,
    atol: f64,
) -> Result<OracleTables> {
    crate::model::validate_params(topo, params, false)?;
    if times.windows(2).any(|w| w[0] >= w[1]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidData(
            "oracle time grid must be strictly increasing and nonnegative".into(),
        ));
    }
    let ode = MomentOde::new(topo, params);
    let dim = ode.dim();
    let mut y = ode.initial(topo);
    let mut t = 0.0;
    let mut h: f64 = 1e-4;
    let mut scratch: Vec<Vec<f64>> = vec![vec![0.0; dim]; 8];

    let mut out_m = Vec::with_capacity(times.len());
    let mut out_u = Vec::with_capacity(times.len());
    let mut record = |y: &[f64]| {
        let mut m = vec![vec![0.0; ode.n_mat]; ode.c];
        let mut u = vec![vec![0.0; ode.n_pairs]; ode.c];
        for src in 0..ode.c {
            for mat in 0..ode.n_mat {
                m[src][mat] = y[src * ode.n_mat + mat];
            }
            for p in 0..ode.n_pairs {
                u[src][p] = y[ode.u_block() + src * ode.n_pairs + p];
            }
        }
        out_m.push(m);
        out_u.push(u);
    };

    let mut steps: u64 = 0;
    for &target in times {
        if target == t {
            record(&y);
            continue;
        }
        while t < target {
            let h_try = h.min(target - t);
            let (y5, err) = dp_step(&ode, &y, h_try, rtol, atol, &mut scratch);
            steps += 1;
            if steps > 20_000_000 {
                return Err(Error::OdeStepUnderflow { t });
            }
            if err <= 1.0 {
                t += h_try;
                y = y5;
                h = h_try * (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
            } else {
                h = h_try * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            }
            if h < 1e-14 * (1.0 + t.abs()) {
                return Err(Error::OdeStepUnderflow { t });
            }
        }
        record(&y);
    }
    Ok(OracleTables {
        times: times.to_vec(),
        m: out_m,
        u: out_u,
    })
}

/// Roundoff headroom granted to a closed-form evaluation, as a multiple of
/// machine epsilon times the cell's absolute term magnitude
/// [`ExpSum::abs_eval`]. Coefficients pass through a few dozen floating
/// point operations during the cascade, so disagreement below this scale
/// says nothing about the symbolic pipeline.
pub const EVAL_COND_EPS: f64 = 16.0 * f64::EPSILON;

/// Trajectory scale below which a cell is compared absolutely rather than
/// relatively: the oracle cannot certify relative agreement on components
/// that never rise above this within the checked window.
pub const ORACLE_SCALE_GUARD: f64 = 1e-9;

/// Largest relative disagreement between the symbolic cascade and the
/// numeric oracle over all sources, matures/pairs and grid times.
///
/// Each cell's discrepancy is measured against that cell's trajectory
/// scale, `max_t max(|a(t)|, |b(t)|)` — the usual notion of global
/// relative accuracy for an ODE solution. A pointwise quotient would be
/// meaningless for components that decay to values far below the
/// integrator's absolute resolution (step sizes are shared across the
/// coupled system, so a cell at 1e-10 rides on steps sized for cells at
/// 1e+4). Because a stiff component can peak long before the first
/// requested time, the scale is taken over a log-spaced probe grid
/// spanning the whole window, not just the requested times; the
/// discrepancy itself is measured at the requested times only. The
/// numerator subtracts `EVAL_COND_EPS * abs_eval(t)`: near-cancelling
/// exponential sums (clustered rates at small `t`) cannot evaluate more
/// accurately than their coefficient scale allows, in this or any other
/// closed form.
pub fn oracle_max_rel_err(topo: &ModelTopology, params: &Params, times: &[f64]) -> Result<f64> {
    let mset: MomentSet = super::build_moment_set(topo, params)?;
    let t_max = times.iter().fold(0.0f64, |a, &t| a.max(t));
    let mut all_times = times.to_vec();
    let span = 1e4f64;
    let n_probe = 40;
    for k in 0..n_probe {
        all_times.push(t_max / span * span.powf(k as f64 / (n_probe - 1) as f64));
    }
    all_times.sort_by(f64::total_cmp);
    all_times.dedup();
    let requested: Vec<bool> = all_times.iter().map(|t| times.contains(t)).collect();
    let tables = ode_oracle(topo, params, &all_times)?;
    let n_mat = topo.n_mat();
    let c = topo.n_compartments();
    let cell_rel = |cell: &crate::expsum::ExpSum, oracle_at: &dyn Fn(usize) -> f64| {
        let mut scale = 0.0f64;
        let mut diff = 0.0f64;
        for (ti, &t) in all_times.iter().enumerate() {
            let a = cell.eval(t);
            let b = oracle_at(ti);
            scale = scale.max(a.abs().max(b.abs()));
            if requested[ti] {
                let floor = EVAL_COND_EPS * cell.abs_eval(t);
                diff = diff.max(((a - b).abs() - floor).max(0.0));
            }
        }
        diff / (ORACLE_SCALE_GUARD + scale)
    };
    let mut worst = 0.0f64;
    for src in 0..c {
        for mat in 0..n_mat {
            worst = worst.max(cell_rel(&mset.m[mat][src], &|ti| tables.m[ti][src][mat]));
        }
        for m in 0..n_mat {
            for n in m..n_mat {
                let k = tri_index(m, n, n_mat);
                worst = worst.max(cell_rel(&mset.u[k][src], &|ti| tables.u[ti][src][k]));
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical_model;

    #[test]
    fn oracle_agrees_with_cascade_at_study_truth() {
        let topo = canonical_model("a").unwrap();
        let params = Params {
            lambda: 0.028,
            nu_prog: vec![0.020],
            mu_prog: vec![0.008],
            nu_mat: vec![36.0, 15.0, 7.0],
            mu_mat: vec![0.24, 0.14, 0.09],
            pi: vec![0.1, 0.9],
        };
        let err = oracle_max_rel_err(&topo, &params, &[0.5, 1.0, 2.0, 5.0, 10.0, 30.0]).unwrap();
        assert!(err <= 1e-6, "max rel err {err}");
    }

    #[test]
    fn oracle_agrees_under_coincident_rates() {
        // degeneracies that force the resonant branches of the cascade
        let topo = canonical_model("a").unwrap();
        let params = Params {
            lambda: 0.3,
            nu_prog: vec![0.1],
            mu_prog: vec![0.2],
            nu_mat: vec![3.0, 2.0, 1.0],
            mu_mat: vec![0.2, 0.1, 0.4],
            pi: vec![0.5, 0.5],
        };
        let err = oracle_max_rel_err(&topo, &params, &[0.5, 2.0, 10.0, 30.0]).unwrap();
        assert!(err <= 1e-6, "max rel err {err}");
    }

    #[test]
    fn pure_death_solution_is_exact_exponential() {
        let topo = canonical_model("a").unwrap();
        let params = Params {
            lambda: 0.05,
            nu_prog: vec![0.02],
            mu_prog: vec![0.01],
            nu_mat: vec![1.0, 1.0, 1.0],
            mu_mat: vec![0.25, 0.5, 0.75],
            pi: vec![0.5, 0.5],
        };
        let tables = ode_oracle(&topo, &params, &[1.0, 4.0]).unwrap();
        for (ti, &t) in [1.0, 4.0].iter().enumerate() {
            for m in 0..3 {
                let got = tables.m[ti][topo.mat_index(m)][m];
                let want = (-params.mu_mat[m] * t).exp();
                assert!((got - want).abs() < 1e-9, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn grid_must_be_increasing() {
        let topo = canonical_model("a").unwrap();
        let params = Params {
            lambda: 0.05,
            nu_prog: vec![0.02],
            mu_prog: vec![0.01],
            nu_mat: vec![1.0, 1.0, 1.0],
            mu_mat: vec![0.25, 0.5, 0.75],
            pi: vec![0.5, 0.5],
        };
        assert!(ode_oracle(&topo, &params, &[2.0, 1.0]).is_err());
    }
}
