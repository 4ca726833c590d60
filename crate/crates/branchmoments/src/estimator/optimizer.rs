//! Local minimizers for the correlation loss: derivative-free Nelder-Mead
//! (default) and a finite-difference BFGS line-search method. Both treat
//! `+inf` objective values as "outside the domain" (rejected moves), keep
//! the best-seen value monotone non-increasing, and terminate on objective
//! and parameter tolerances or an iteration cap. Everything is a pure
//! function of the start point, so parallel multi-start stays deterministic.

/// Termination / budget knobs shared by both methods.
#[derive(Debug, Clone, Copy)]
pub struct OptOptions {
    pub max_iters: usize,
    /// Converged when the function spread (NM) or improvement (BFGS) falls
    /// below `tol_obj * (1 + |f_best|)`.
    pub tol_obj: f64,
    /// ... and the parameter spread / step falls below `tol_param`.
    pub tol_param: f64,
}

impl Default for OptOptions {
    fn default() -> Self {
        OptOptions {
            max_iters: 2000,
            tol_obj: 1e-10,
            tol_param: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptStatus {
    Converged,
    MaxIters,
    /// Could not find any point with a finite objective.
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct OptOutcome {
    pub x: Vec<f64>,
    pub fx: f64,
    pub n_evals: usize,
    pub status: OptStatus,
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Nelder-Mead simplex descent with the dimension-adaptive coefficients of
/// Gao & Han (expansion 1 + 2/n, contraction 0.75 - 1/(2n), shrink
/// 1 - 1/n), which behave much better than the classic constants once the
/// dimension grows past a handful.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &OptOptions) -> OptOutcome {
    let n = x0.len();
    assert!(n > 0);
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);

    let mut n_evals = 0usize;
    let mut eval = |x: &[f64]| {
        n_evals += 1;
        finite_or_inf(f(x))
    };

    // initial simplex: x0 plus one step along each coordinate
    let step = 0.25;
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    if fvals.iter().all(|v| v.is_infinite()) {
        return OptOutcome {
            x: x0.to_vec(),
            fx: f64::INFINITY,
            n_evals,
            status: OptStatus::Degenerate,
        };
    }

    let mut status = OptStatus::MaxIters;
    for _iter in 0..opts.max_iters {
        // order by objective, index-stable for determinism
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap().then(a.cmp(&b)));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let f_spread = fvals[worst] - fvals[best];
        let x_spread = simplex
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if (f_spread.is_finite() && f_spread <= opts.tol_obj * (1.0 + fvals[best].abs()))
            && x_spread <= opts.tol_param
        {
            status = OptStatus::Converged;
            break;
        }

        // centroid of all but the worst
        let mut c = vec![0.0; n];
        for (i, v) in simplex.iter().enumerate() {
            if i != worst {
                for (ci, vi) in c.iter_mut().zip(v) {
                    *ci += vi / nf;
                }
            }
        }

        let reflect: Vec<f64> = c
            .iter()
            .zip(&simplex[worst])
            .map(|(ci, wi)| ci + alpha * (ci - wi))
            .collect();
        let f_r = eval(&reflect);

        if f_r < fvals[best] {
            // try to expand further along the same direction
            let expand: Vec<f64> = c
                .iter()
                .zip(&reflect)
                .map(|(ci, ri)| ci + beta * (ri - ci))
                .collect();
            let f_e = eval(&expand);
            if f_e < f_r {
                simplex[worst] = expand;
                fvals[worst] = f_e;
            } else {
                simplex[worst] = reflect;
                fvals[worst] = f_r;
            }
        } else if f_r < fvals[second_worst] {
            simplex[worst] = reflect;
            fvals[worst] = f_r;
        } else {
            // contract, outside or inside depending on the reflection
            let (point, f_ref) = if f_r < fvals[worst] {
                let outside: Vec<f64> = c
                    .iter()
                    .zip(&reflect)
                    .map(|(ci, ri)| ci + gamma * (ri - ci))
                    .collect();
                (outside, f_r)
            } else {
                let inside: Vec<f64> = c
                    .iter()
                    .zip(&simplex[worst])
                    .map(|(ci, wi)| ci + gamma * (wi - ci))
                    .collect();
                (inside, fvals[worst])
            };
            let f_c = eval(&point);
            if f_c < f_ref {
                simplex[worst] = point;
                fvals[worst] = f_c;
            } else {
                // shrink toward the best vertex
                let best_x = simplex[best].clone();
                for (i, v) in simplex.iter_mut().enumerate() {
                    if i != best {
                        for (vi, bi) in v.iter_mut().zip(&best_x) {
                            *vi = bi + delta * (*vi - bi);
                        }
                        fvals[i] = eval(v);
                    }
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if fvals[i] < fvals[best] {
            best = i;
        }
    }
    if fvals[best].is_infinite() {
        status = OptStatus::Degenerate;
    }
    OptOutcome {
        x: simplex[best].clone(),
        fx: fvals[best],
        n_evals,
        status,
    }
}

/// BFGS with central finite-difference gradients and Armijo backtracking.
/// All matrix work is dense; the free-parameter dimension here is at most a
/// couple dozen.
pub fn bfgs_fd<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &OptOptions) -> OptOutcome {
    let n = x0.len();
    let mut n_evals = 0usize;
    let mut eval = |x: &[f64]| {
        n_evals += 1;
        finite_or_inf(f(x))
    };

    let mut x = x0.to_vec();
    let mut fx = eval(&x);
    if fx.is_infinite() {
        return OptOutcome {
            x,
            fx,
            n_evals,
            status: OptStatus::Degenerate,
        };
    }

    let grad = |x: &[f64], eval: &mut dyn FnMut(&[f64]) -> f64| -> Option<Vec<f64>> {
        let mut g = vec![0.0; n];
        let mut xp = x.to_vec();
        for i in 0..n {
            let h = 1e-6 * (1.0 + x[i].abs());
            xp[i] = x[i] + h;
            let fp = eval(&xp);
            xp[i] = x[i] - h;
            let fm = eval(&xp);
            xp[i] = x[i];
            if !fp.is_finite() || !fm.is_finite() {
                return None; // too close to the domain boundary
            }
            g[i] = (fp - fm) / (2.0 * h);
        }
        Some(g)
    };

    // inverse Hessian approximation, start with identity
    let mut h_inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut g = match grad(&x, &mut eval) {
        Some(g) => g,
        None => {
            return OptOutcome {
                x,
                fx,
                n_evals,
                status: OptStatus::Degenerate,
            }
        }
    };

    let mut status = OptStatus::MaxIters;
    for _iter in 0..opts.max_iters {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= 1e-9 * (1.0 + fx.abs()) {
            status = OptStatus::Converged;
            break;
        }
        // d = -H g
        let mut d = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                d[i] -= h_inv[i][j] * g[j];
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();
        if slope >= 0.0 {
            // not a descent direction (stale curvature); reset to steepest
            for i in 0..n {
                for j in 0..n {
                    h_inv[i][j] = if i == j { 1.0 } else { 0.0 };
                }
                d[i] = -g[i];
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();

        // Armijo backtracking, rejecting infinite (out-of-domain) points
        let mut t = 1.0;
        let mut x_new = Vec::new();
        let mut f_new = f64::INFINITY;
        let mut ok = false;
        for _ in 0..50 {
            x_new = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            f_new = eval(&x_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * t * slope {
                ok = true;
                break;
            }
            t *= 0.5;
        }
        if !ok {
            status = OptStatus::Converged; // no further progress possible
            break;
        }

        let step_norm: f64 = d.iter().map(|di| (t * di) * (t * di)).sum::<f64>().sqrt();
        let improvement = fx - f_new;

        let g_new = match grad(&x_new, &mut eval) {
            Some(g) => g,
            None => {
                x = x_new;
                fx = f_new;
                break; // accept the point but stop: boundary too close
            }
        };

        // BFGS update of the inverse Hessian
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            // H = (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            let mut hy = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    hy[i] += h_inv[i][j] * y[j];
                }
            }
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h_inv[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                        + rho * rho * yhy * s[i] * s[j]
                        + rho * s[i] * s[j];
                }
            }
        }

        x = x_new;
        fx = f_new;
        g = g_new;

        if improvement <= opts.tol_obj * (1.0 + fx.abs()) && step_norm <= opts.tol_param {
            status = OptStatus::Converged;
            break;
        }
    }

    OptOutcome {
        x,
        fx,
        n_evals,
        status,
    }
}
