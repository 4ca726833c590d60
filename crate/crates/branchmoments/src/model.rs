//! Model structure: compartment topology, rate parameters, the logit
//! reparametrization of the initial-compartment distribution, and the
//! reaction table used by the simulator.
//!
//! Compartment indexing convention, used everywhere in this crate:
//! index 0 is the stem compartment (HSC), indices `1..=A` are the
//! progenitors in declaration order, indices `A+1..A+1+M` are the mature
//! types in declaration order.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tree-shaped differentiation topology: one self-renewing stem compartment,
/// `A` progenitors fed by it, and `M` mature types each produced by exactly
/// one parent progenitor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelTopology {
    /// Label of the stem compartment.
    pub hsc: String,
    /// Progenitor labels, declaration order.
    pub progenitors: Vec<String>,
    /// Mature type labels, declaration order.
    pub matures: Vec<String>,
    /// `parent[m]` is the index into `progenitors` of mature `m`'s parent.
    pub parent: Vec<usize>,
}

impl ModelTopology {
    pub fn n_prog(&self) -> usize {
        self.progenitors.len()
    }

    pub fn n_mat(&self) -> usize {
        self.matures.len()
    }

    /// Total number of compartments (stem + progenitors + matures).
    pub fn n_compartments(&self) -> usize {
        1 + self.n_prog() + self.n_mat()
    }

    /// Global compartment index of progenitor `a`.
    pub fn prog_index(&self, a: usize) -> usize {
        1 + a
    }

    /// Global compartment index of mature `m`.
    pub fn mat_index(&self, m: usize) -> usize {
        1 + self.n_prog() + m
    }

    /// Matures of progenitor `a` (indices into `matures`).
    pub fn children(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter(move |&(_, &p)| p == a)
            .map(|(m, _)| m)
    }

    /// Label of the compartment with global index `i`.
    pub fn label(&self, i: usize) -> &str {
        if i == 0 {
            &self.hsc
        } else if i <= self.n_prog() {
            &self.progenitors[i - 1]
        } else {
            &self.matures[i - 1 - self.n_prog()]
        }
    }
}

/// Structural validation. All violations are collected so a malformed model
/// file reports every problem at once instead of one per run.
pub fn validate_topology(topo: &ModelTopology) -> Result<()> {
    let mut errs = Vec::new();
    if topo.progenitors.is_empty() {
        errs.push("model needs at least one progenitor".to_string());
    }
    if topo.matures.is_empty() {
        errs.push("model needs at least one mature type".to_string());
    }
    if topo.parent.len() != topo.matures.len() {
        errs.push(format!(
            "parent map has {} entries for {} mature types",
            topo.parent.len(),
            topo.matures.len()
        ));
    }
    let mut seen = std::collections::HashSet::new();
    for label in std::iter::once(&topo.hsc)
        .chain(&topo.progenitors)
        .chain(&topo.matures)
    {
        if label.is_empty() {
            errs.push("empty compartment label".to_string());
        }
        if label.contains(&[',', ':', '\n', '\r'][..]) {
            errs.push(format!(
                "label '{}' contains a character reserved by the file formats \
                 (comma, colon, or newline)",
                label.escape_default()
            ));
        }
        if !seen.insert(label.as_str()) {
            errs.push(format!("duplicate compartment label '{label}'"));
        }
    }
    for (m, &p) in topo.parent.iter().enumerate() {
        if p >= topo.progenitors.len() {
            errs.push(format!(
                "mature '{}' refers to nonexistent progenitor index {p}",
                topo.matures.get(m).map_or("?", |s| s.as_str())
            ));
        }
    }
    for (a, label) in topo.progenitors.iter().enumerate() {
        if !topo.parent.contains(&a) {
            errs.push(format!(
                "progenitor '{label}' has no mature children; it would be unobservable"
            ));
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Topology(errs))
    }
}

/// Rate parameters and initial-compartment distribution for a topology.
///
/// All rates are per cell per unit time. `pi` is the distribution of a
/// lineage's starting compartment over stem + progenitors (index 0 is the
/// stem compartment), so `pi.len() == 1 + A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Stem self-renewal rate.
    pub lambda: f64,
    /// Stem -> progenitor differentiation rates, one per progenitor.
    pub nu_prog: Vec<f64>,
    /// Progenitor death rates.
    pub mu_prog: Vec<f64>,
    /// Mature production rates (parent progenitor is unchanged).
    pub nu_mat: Vec<f64>,
    /// Mature death rates.
    pub mu_mat: Vec<f64>,
    /// Initial-compartment distribution over stem + progenitors.
    pub pi: Vec<f64>,
}

impl Params {
    /// Net stem growth rate `lambda - sum(nu_prog)`; must stay positive for
    /// the log-barrier used during fitting.
    pub fn net_growth(&self) -> f64 {
        self.lambda - self.nu_prog.iter().sum::<f64>()
    }
}

/// Check parameter invariants against a topology. With `require_growth` the
/// net stem growth rate must be strictly positive (the constraint enforced
/// by the fitting barrier).
pub fn validate_params(topo: &ModelTopology, params: &Params, require_growth: bool) -> Result<()> {
    let check_rates = |name: &str, v: &[f64], want: usize| -> Result<()> {
        if v.len() != want {
            return Err(Error::InvalidParams(format!(
                "{name} has {} entries, topology wants {want}",
                v.len()
            )));
        }
        for (i, &x) in v.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidParams(format!("{name}[{i}] = {x} (must be finite and >= 0)")));
            }
        }
        Ok(())
    };
    if !params.lambda.is_finite() || params.lambda < 0.0 {
        return Err(Error::InvalidParams(format!("lambda = {}", params.lambda)));
    }
    check_rates("nu_prog", &params.nu_prog, topo.n_prog())?;
    check_rates("mu_prog", &params.mu_prog, topo.n_prog())?;
    check_rates("nu_mat", &params.nu_mat, topo.n_mat())?;
    check_rates("mu_mat", &params.mu_mat, topo.n_mat())?;
    if params.pi.len() != 1 + topo.n_prog() {
        return Err(Error::InvalidParams(format!(
            "pi has {} entries, topology wants {}",
            params.pi.len(),
            1 + topo.n_prog()
        )));
    }
    let mut sum = 0.0;
    for (i, &p) in params.pi.iter().enumerate() {
        if !p.is_finite() || p < 0.0 || p > 1.0 {
            return Err(Error::InvalidParams(format!("pi[{i}] = {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParams(format!("pi sums to {sum}, not 1")));
    }
    if require_growth && params.net_growth() <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "net stem growth lambda - sum(nu_prog) = {} must be > 0",
            params.net_growth()
        )));
    }
    Ok(())
}

/// Multinomial-logit coordinates for the initial-compartment distribution:
/// `gamma[i] = ln(pi[i] / pi[K-1])` for `i < K-1`, with the last compartment
/// as reference. Unconstrained, which is what the optimizer wants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaVector(pub Vec<f64>);

/// Map logit coordinates to a distribution on the `K = gamma.len() + 1`
/// simplex. Always produces strictly positive entries summing to one.
pub fn gamma_to_pi(gamma: &GammaVector) -> Vec<f64> {
    // Subtract the max exponent so huge gammas cannot overflow.
    let m = gamma.0.iter().fold(0.0_f64, |acc, &g| acc.max(g));
    let exps: Vec<f64> = gamma.0.iter().map(|&g| (g - m).exp()).collect();
    let denom = (-m).exp() + exps.iter().sum::<f64>();
    let mut pi: Vec<f64> = exps.iter().map(|&e| e / denom).collect();
    pi.push((-m).exp() / denom);
    pi
}

/// Inverse of [`gamma_to_pi`]. Requires strictly positive entries.
pub fn pi_to_gamma(pi: &[f64]) -> Result<GammaVector> {
    let k = pi.len();
    if k < 2 {
        return Err(Error::InvalidParams(
            "pi needs at least two entries for the logit map".into(),
        ));
    }
    let last = pi[k - 1];
    if pi.iter().any(|&p| p <= 0.0) {
        return Err(Error::InvalidParams(
            "pi entries must be strictly positive for the logit map".into(),
        ));
    }
    Ok(GammaVector(
        pi[..k - 1].iter().map(|&p| (p / last).ln()).collect(),
    ))
}

/// One reaction channel: a parent compartment whose per-cell rate drives the
/// exponential clock, and the state change applied when it fires.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    /// Global compartment index whose count multiplies the rate.
    pub parent: usize,
    /// State change over all compartments.
    pub delta: Vec<i64>,
    /// Per-cell rate.
    pub rate: f64,
}

/// Build the reaction table in transition-table order: self-renewal, stem
/// differentiations, mature productions, progenitor deaths, mature deaths.
/// Total `1 + A + M + A + M` reactions.
pub fn build_reactions(topo: &ModelTopology, params: &Params) -> Vec<Reaction> {
    let c = topo.n_compartments();
    let mut out = Vec::with_capacity(1 + 2 * topo.n_prog() + 2 * topo.n_mat());
    let mut delta = vec![0i64; c];
    delta[0] = 1;
    out.push(Reaction {
        parent: 0,
        delta,
        rate: params.lambda,
    });
    for a in 0..topo.n_prog() {
        // Differentiation consumes the stem cell.
        let mut delta = vec![0i64; c];
        delta[0] = -1;
        delta[topo.prog_index(a)] = 1;
        out.push(Reaction {
            parent: 0,
            delta,
            rate: params.nu_prog[a],
        });
    }
    for m in 0..topo.n_mat() {
        // Production leaves the progenitor unchanged.
        let mut delta = vec![0i64; c];
        delta[topo.mat_index(m)] = 1;
        out.push(Reaction {
            parent: topo.prog_index(topo.parent[m]),
            delta,
            rate: params.nu_mat[m],
        });
    }
    for a in 0..topo.n_prog() {
        let mut delta = vec![0i64; c];
        delta[topo.prog_index(a)] = -1;
        out.push(Reaction {
            parent: topo.prog_index(a),
            delta,
            rate: params.mu_prog[a],
        });
    }
    for m in 0..topo.n_mat() {
        let mut delta = vec![0i64; c];
        delta[topo.mat_index(m)] = -1;
        out.push(Reaction {
            parent: topo.mat_index(m),
            delta,
            rate: params.mu_mat[m],
        });
    }
    out
}

/// The six candidate topologies used throughout the examples and studies.
/// They differ in how five mature types (three for `a`) are grouped under
/// one to three progenitors.
pub fn canonical_model(name: &str) -> Result<ModelTopology> {
    let (progs, parent): (Vec<&str>, Vec<usize>) = match name {
        // One multipotent progenitor, three mature types.
        "a" => (vec!["a"], vec![0, 0, 0]),
        // One multipotent progenitor, five mature types.
        "b" => (vec!["a"], vec![0, 0, 0, 0, 0]),
        // Myeloid {1,2} vs lymphoid {3,4,5} split.
        "c" => (vec!["a", "b"], vec![0, 0, 1, 1, 1]),
        // Type 5 grouped with the myeloid pair instead.
        "d" => (vec!["a", "b"], vec![0, 0, 1, 1, 0]),
        // Three progenitors: {1,2}, {3,4}, {5}.
        "e" => (vec!["a", "b", "c"], vec![0, 0, 1, 1, 2]),
        // Three progenitors: {1,2,5}, {3}, {4}.
        "f" => (vec!["a", "b", "c"], vec![0, 0, 1, 2, 0]),
        other => {
            return Err(Error::InvalidParams(format!(
                "unknown canonical model '{other}' (expected a-f)"
            )))
        }
    };
    let n_mat = parent.len();
    let topo = ModelTopology {
        hsc: "HSC".to_string(),
        progenitors: progs.into_iter().map(String::from).collect(),
        matures: (1..=n_mat).map(|i| i.to_string()).collect(),
        parent,
    };
    validate_topology(&topo)?;
    Ok(topo)
}

/// Which entries of [`Params`] are held fixed during fitting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedMask {
    pub lambda: bool,
    pub nu_prog: Vec<bool>,
    pub mu_prog: Vec<bool>,
    pub nu_mat: Vec<bool>,
    pub mu_mat: Vec<bool>,
    pub pi: PiFix,
}

/// Treatment of the initial-compartment distribution during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PiFix {
    /// All of `pi` free (K-1 logit coordinates).
    Free,
    /// Stem probability `pi[0]` fixed, progenitor split free (A-1 logit
    /// coordinates over the progenitor sub-simplex).
    FixedHsc,
    /// Entire vector fixed.
    Fixed,
}

impl FixedMask {
    /// Everything free.
    pub fn all_free(topo: &ModelTopology) -> Self {
        FixedMask {
            lambda: false,
            nu_prog: vec![false; topo.n_prog()],
            mu_prog: vec![false; topo.n_prog()],
            nu_mat: vec![false; topo.n_mat()],
            mu_mat: vec![false; topo.n_mat()],
            pi: PiFix::Free,
        }
    }

    /// The usual estimation setup: mature death rates pinned to externally
    /// measured values, everything else free.
    pub fn free_except_mu_mat(topo: &ModelTopology) -> Self {
        FixedMask {
            mu_mat: vec![true; topo.n_mat()],
            ..FixedMask::all_free(topo)
        }
    }

    /// Number of free rate coordinates (excludes `pi`).
    pub fn n_free_rates(&self) -> usize {
        usize::from(!self.lambda)
            + self.nu_prog.iter().filter(|f| !**f).count()
            + self.mu_prog.iter().filter(|f| !**f).count()
            + self.nu_mat.iter().filter(|f| !**f).count()
            + self.mu_mat.iter().filter(|f| !**f).count()
    }

    /// Number of free logit coordinates for `pi` given `K = 1 + A`.
    pub fn n_free_gamma(&self, n_prog: usize) -> usize {
        match self.pi {
            PiFix::Free => n_prog, // K - 1
            PiFix::FixedHsc => n_prog.saturating_sub(1),
            PiFix::Fixed => 0,
        }
    }
}

/// Names of the reported free parameters, in the order used by fit tables
/// and bootstrap columns: free rates first (lambda, nu_prog, mu_prog,
/// nu_mat, mu_mat), then the reported progenitor occupation probabilities.
///
/// When `pi` is free the progenitor entries `pi[1..]` are reported (the stem
/// entry is their complement); when only the stem entry is fixed the
/// progenitor entries are still the natural report; fully fixed reports
/// nothing.
pub fn param_names(topo: &ModelTopology, mask: &FixedMask) -> Vec<String> {
    let mut names = Vec::new();
    if !mask.lambda {
        names.push("lambda".to_string());
    }
    for (a, fixed) in mask.nu_prog.iter().enumerate() {
        if !fixed {
            names.push(format!("nu_prog.{}", topo.progenitors[a]));
        }
    }
    for (a, fixed) in mask.mu_prog.iter().enumerate() {
        if !fixed {
            names.push(format!("mu_prog.{}", topo.progenitors[a]));
        }
    }
    for (m, fixed) in mask.nu_mat.iter().enumerate() {
        if !fixed {
            names.push(format!("nu_mat.{}", topo.matures[m]));
        }
    }
    for (m, fixed) in mask.mu_mat.iter().enumerate() {
        if !fixed {
            names.push(format!("mu_mat.{}", topo.matures[m]));
        }
    }
    let report_pi = match mask.pi {
        PiFix::Free => true,
        PiFix::FixedHsc => topo.n_prog() > 1,
        PiFix::Fixed => false,
    };
    if report_pi {
        for label in &topo.progenitors {
            names.push(format!("pi.{label}"));
        }
    }
    names
}

/// Values matching [`param_names`] for a concrete parameter vector.
pub fn param_values(topo: &ModelTopology, mask: &FixedMask, params: &Params) -> Vec<f64> {
    let mut vals = Vec::new();
    if !mask.lambda {
        vals.push(params.lambda);
    }
    for (a, fixed) in mask.nu_prog.iter().enumerate() {
        if !fixed {
            vals.push(params.nu_prog[a]);
        }
    }
    for (a, fixed) in mask.mu_prog.iter().enumerate() {
        if !fixed {
            vals.push(params.mu_prog[a]);
        }
    }
    for (m, fixed) in mask.nu_mat.iter().enumerate() {
        if !fixed {
            vals.push(params.nu_mat[m]);
        }
    }
    for (m, fixed) in mask.mu_mat.iter().enumerate() {
        if !fixed {
            vals.push(params.mu_mat[m]);
        }
    }
    let report_pi = match mask.pi {
        PiFix::Free => true,
        PiFix::FixedHsc => topo.n_prog() > 1,
        PiFix::Fixed => false,
    };
    if report_pi {
        vals.extend_from_slice(&params.pi[1..]);
    }
    vals
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn four_type() -> ModelTopology {
        ModelTopology {
            hsc: "HSC".into(),
            progenitors: vec!["a".into()],
            matures: vec!["1".into(), "2".into(), "3".into()],
            parent: vec![0, 0, 0],
        }
    }

    #[test]
    fn canonical_models_have_expected_shape() {
        for (name, n_prog, n_mat) in [
            ("a", 1, 3),
            ("b", 1, 5),
            ("c", 2, 5),
            ("d", 2, 5),
            ("e", 3, 5),
            ("f", 3, 5),
        ] {
            let topo = canonical_model(name).unwrap();
            assert_eq!(topo.n_prog(), n_prog, "model {name}");
            assert_eq!(topo.n_mat(), n_mat, "model {name}");
            validate_topology(&topo).unwrap();
        }
        assert!(canonical_model("z").is_err());
    }

    #[test]
    fn model_c_groups_myeloid_and_lymphoid() {
        let topo = canonical_model("c").unwrap();
        assert_eq!(topo.children(0).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(topo.children(1).collect::<Vec<_>>(), vec![2, 3, 4]);
    }

    #[test]
    fn validation_collects_all_errors() {
        let topo = ModelTopology {
            hsc: "HSC".into(),
            progenitors: vec!["a".into(), "a".into(), "dead".into()],
            matures: vec!["1".into()],
            parent: vec![9],
        };
        let err = validate_topology(&topo).unwrap_err();
        match err {
            Error::Topology(list) => {
                // duplicate label, bad parent index, and two childless progenitors
                assert!(list.len() >= 3, "got {list:?}");
                assert!(list.iter().any(|e| e.contains("duplicate")));
                assert!(list.iter().any(|e| e.contains("nonexistent")));
                assert!(list.iter().any(|e| e.contains("no mature children")));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn labels_with_format_reserved_characters_are_rejected() {
        for bad in ["a,b", "a:b", "a\nb"] {
            let topo = ModelTopology {
                hsc: "HSC".into(),
                progenitors: vec![bad.into()],
                matures: vec!["1".into()],
                parent: vec![0],
            };
            let err = validate_topology(&topo).unwrap_err();
            assert!(err.to_string().contains("reserved"), "{bad:?}: {err}");
        }
    }

    #[test]
    fn reaction_table_matches_transition_deltas() {
        // Four-compartment model: the table should enumerate, in order,
        // self-renewal, differentiation, three productions, progenitor death
        // and three mature deaths.
        let topo = four_type();
        let params = Params {
            lambda: 0.028,
            nu_prog: vec![0.020],
            mu_prog: vec![0.008],
            nu_mat: vec![36.0, 15.0, 7.0],
            mu_mat: vec![0.24, 0.14, 0.09],
            pi: vec![0.1, 0.9],
        };
        let rx = build_reactions(&topo, &params);
        assert_eq!(rx.len(), 9);
        let expect: Vec<(usize, Vec<i64>, f64)> = vec![
            (0, vec![1, 0, 0, 0, 0], 0.028),
            (0, vec![-1, 1, 0, 0, 0], 0.020),
            (1, vec![0, 0, 1, 0, 0], 36.0),
            (1, vec![0, 0, 0, 1, 0], 15.0),
            (1, vec![0, 0, 0, 0, 1], 7.0),
            (1, vec![0, -1, 0, 0, 0], 0.008),
            (2, vec![0, 0, -1, 0, 0], 0.24),
            (3, vec![0, 0, 0, -1, 0], 0.14),
            (4, vec![0, 0, 0, 0, -1], 0.09),
        ];
        for (r, (parent, delta, rate)) in rx.iter().zip(expect) {
            assert_eq!(r.parent, parent);
            assert_eq!(r.delta, delta);
            assert_eq!(r.rate, rate);
        }
    }

    #[test]
    fn reaction_counts_by_shape() {
        // 1 + 2A + 2M for each canonical topology.
        for (name, want) in [("a", 9), ("b", 13), ("c", 15), ("e", 17), ("f", 17)] {
            let topo = canonical_model(name).unwrap();
            let params = Params {
                lambda: 1.0,
                nu_prog: vec![0.1; topo.n_prog()],
                mu_prog: vec![0.1; topo.n_prog()],
                nu_mat: vec![1.0; topo.n_mat()],
                mu_mat: vec![0.1; topo.n_mat()],
                pi: {
                    let mut pi = vec![0.5];
                    pi.extend(vec![0.5 / topo.n_prog() as f64; topo.n_prog()]);
                    pi
                },
            };
            assert_eq!(build_reactions(&topo, &params).len(), want, "model {name}");
        }
    }

    #[test]
    fn single_mature_model_has_five_reactions() {
        let topo = ModelTopology {
            hsc: "HSC".into(),
            progenitors: vec!["p".into()],
            matures: vec!["m".into()],
            parent: vec![0],
        };
        let params = Params {
            lambda: 1.0,
            nu_prog: vec![0.5],
            mu_prog: vec![0.1],
            nu_mat: vec![2.0],
            mu_mat: vec![0.3],
            pi: vec![0.5, 0.5],
        };
        assert_eq!(build_reactions(&topo, &params).len(), 5);
    }

    #[test]
    fn gamma_pi_two_compartment_example() {
        let pi = vec![0.13, 0.87];
        let gamma = pi_to_gamma(&pi).unwrap();
        assert_eq!(gamma.0.len(), 1);
        assert!((gamma.0[0] - (0.13f64 / 0.87).ln()).abs() < 1e-15);
        assert!((gamma.0[0] + 1.901).abs() < 1e-3);
        let back = gamma_to_pi(&gamma);
        assert!((back[0] - 0.13).abs() < 1e-12);
        assert!((back[1] - 0.87).abs() < 1e-12);
    }

    #[test]
    fn gamma_to_pi_is_safe_at_extremes() {
        let pi = gamma_to_pi(&GammaVector(vec![800.0, -800.0]));
        assert!(pi.iter().all(|p| p.is_finite() && *p >= 0.0));
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((pi[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn params_validation_catches_bad_pi_and_growth() {
        let topo = four_type();
        let mut params = Params {
            lambda: 0.028,
            nu_prog: vec![0.020],
            mu_prog: vec![0.008],
            nu_mat: vec![36.0, 15.0, 7.0],
            mu_mat: vec![0.24, 0.14, 0.09],
            pi: vec![0.1, 0.8],
        };
        assert!(validate_params(&topo, &params, false).is_err());
        params.pi = vec![0.1, 0.9];
        validate_params(&topo, &params, true).unwrap();
        params.nu_prog[0] = 0.03; // exceeds lambda
        assert!(validate_params(&topo, &params, true).is_err());
        assert!(validate_params(&topo, &params, false).is_ok());
    }

    proptest! {
        #[test]
        fn gamma_pi_round_trip(gs in proptest::collection::vec(-20.0f64..20.0, 1..5)) {
            let gamma = GammaVector(gs);
            let pi = gamma_to_pi(&gamma);
            prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(pi.iter().all(|&p| p > 0.0));
            let back = pi_to_gamma(&pi).unwrap();
            for (g0, g1) in gamma.0.iter().zip(back.0.iter()) {
                prop_assert!((g0 - g1).abs() < 1e-9 * (1.0 + g0.abs()), "{g0} vs {g1}");
            }
        }
    }
}
