//! Ground-truth parameter sets for the canonical topologies, used by the
//! simulation studies and the integration tests. Each preset carries the
//! topology, the generating rates, the initial-condition weights and the
//! fixed-parameter mask used when fitting (mature death rates are fixed by
//! default because they are only weakly identified by correlation data).

use crate::model::{canonical_model, FixedMask, ModelTopology, Params};
use crate::Result;

/// A named ground-truth configuration for simulation studies.
#[derive(Debug, Clone)]
pub struct StudyTruth {
    pub topo: ModelTopology,
    pub params: Params,
    pub mask: FixedMask,
}

/// Default observation schedule for simulation studies: ten irregular
/// times spanning two years in the five-day units the preset rates are
/// expressed in. The span matters — the slow progenitor dynamics that
/// identify the early-compartment rates only unfold over the full window.
pub fn desk_schedule() -> Vec<f64> {
    vec![2.0, 6.0, 12.0, 20.0, 32.0, 48.0, 66.0, 88.0, 112.0, 146.0]
}

/// Fraction of the smallest expected per-type population drawn as the
/// sequencing sample in [`design_sample_sizes`]. Large enough that read
/// counts carry the latent correlation signal (a sample far below the
/// per-barcode cell scale buries correlations in sampling noise), small
/// enough that the sample essentially never exceeds the realized pool.
pub const DESIGN_SAMPLE_FRACTION: f64 = 0.25;

/// Per-type sequencing sample sizes for a simulated study design: a fixed
/// fraction of the smallest expected population of each type over the
/// schedule, `b_m = max(1, floor(fraction * n * min_j E[X_m(t_j)]))`.
/// Mirrors the real protocol, where the sorted blood samples are a sizable
/// constant number of cells per type at every draw.
pub fn design_sample_sizes(
    topo: &ModelTopology,
    params: &Params,
    times: &[f64],
    n_lineages: usize,
    fraction: f64,
) -> Result<Vec<u64>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(crate::Error::InvalidParams(format!(
            "sample fraction must be in (0, 1], got {fraction}"
        )));
    }
    let mset = crate::moments::build_moment_set(topo, params)?;
    let mut min_mean = vec![f64::INFINITY; topo.n_mat()];
    for &t in times {
        let lat = crate::moments::latent_moments(&mset, &params.pi, t)?;
        for (mm, &mean) in min_mean.iter_mut().zip(&lat.mean) {
            *mm = mm.min(mean);
        }
    }
    Ok(min_mean
        .iter()
        .map(|&m| ((fraction * n_lineages as f64 * m).floor() as u64).max(1))
        .collect())
}

/// Lineage count and restart budget for a quick desk-scale study.
pub const DESK_LINEAGES: usize = 2000;
pub const DESK_RESTARTS: usize = 50;
pub const DESK_REPLICATES: usize = 20;

/// Lineage count and restart budget for a full-scale study.
pub const PAPER_LINEAGES: usize = 20_000;
pub const PAPER_RESTARTS: usize = 250;
pub const PAPER_REPLICATES: usize = 400;

/// Ground truth for a canonical topology. Supported names: "a", "b", "c",
/// "f".
pub fn study_truth(name: &str) -> Result<StudyTruth> {
    let topo = canonical_model(name)?;
    let (lambda, nu_prog, mu_prog, nu_mat, mu_mat, pi) = match name {
        "a" => (
            0.028,
            vec![0.020],
            vec![0.008],
            vec![36.0, 15.0, 7.0],
            vec![0.24, 0.14, 0.09],
            vec![0.1, 0.9],
        ),
        "b" => (
            0.0285,
            vec![0.02],
            vec![0.008],
            vec![36.0, 15.0, 10.0, 20.0, 7.0],
            vec![0.26, 0.13, 0.11, 0.16, 0.09],
            vec![0.1, 0.9],
        ),
        "c" => (
            0.0285,
            vec![0.013, 0.007],
            vec![0.005, 0.004],
            vec![36.0, 15.0, 10.0, 20.0, 7.0],
            vec![0.26, 0.13, 0.11, 0.16, 0.09],
            vec![0.1, 0.6, 0.3],
        ),
        "f" => (
            0.05,
            vec![0.028, 0.014, 0.007],
            vec![0.008, 0.006, 0.002],
            vec![40.0, 18.0, 14.0, 20.0, 8.0],
            vec![0.24, 0.13, 0.12, 0.18, 0.1],
            vec![0.1, 0.55, 0.20, 0.15],
        ),
        other => {
            return Err(crate::Error::InvalidParams(format!(
                "no ground-truth preset for model '{other}' (expected a, b, c or f)"
            )));
        }
    };
    let params = Params {
        lambda,
        nu_prog,
        mu_prog,
        nu_mat,
        mu_mat,
        pi,
    };
    crate::model::validate_params(&topo, &params, true)?;
    let mask = FixedMask::free_except_mu_mat(&topo);
    Ok(StudyTruth { topo, params, mask })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_are_valid_and_growing() {
        for name in ["a", "b", "c", "f"] {
            let t = study_truth(name).unwrap();
            let net = t.params.lambda - t.params.nu_prog.iter().sum::<f64>();
            assert!(net > 0.0, "model {name} must have positive net growth");
            let pi_sum: f64 = t.params.pi.iter().sum();
            assert!((pi_sum - 1.0).abs() < 1e-12);
            assert_eq!(t.params.pi.len(), 1 + t.topo.n_prog());
        }
    }

    #[test]
    fn preset_shapes_match_topologies() {
        let a = study_truth("a").unwrap();
        assert_eq!(a.topo.n_prog(), 1);
        assert_eq!(a.topo.n_mat(), 3);
        let c = study_truth("c").unwrap();
        assert_eq!(c.topo.n_prog(), 2);
        assert_eq!(c.topo.n_mat(), 5);
        let f = study_truth("f").unwrap();
        assert_eq!(f.topo.n_prog(), 3);
        assert_eq!(f.topo.n_mat(), 5);
    }

    #[test]
    fn mature_death_rates_are_fixed_by_default() {
        let t = study_truth("b").unwrap();
        assert!(t.mask.mu_mat.iter().all(|&fixed| fixed));
        assert!(!t.mask.lambda);
        assert!(t.mask.nu_prog.iter().all(|&fixed| !fixed));
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(study_truth("z").is_err());
    }
}
