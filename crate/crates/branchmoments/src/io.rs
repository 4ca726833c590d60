//! File formats: long-format read counts (`reads.csv`), per-(time, type)
//! sampling sizes (`cbc.csv`), model definitions (`model.json`), and the
//! result artifacts (`fit.json`, `corr_fit.csv`, `bootstrap.csv`,
//! `cv.json`, `manifest.json`).
//!
//! The CSV schemas are fixed four-or-five-column files written and parsed
//! by hand so that float formatting (shortest round-trip `{}`), row order
//! and line endings are fully deterministic: rerunning a command with the
//! same inputs reproduces its outputs byte for byte. Integer counts and
//! `f64` times survive a write/read cycle exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::estimator::optimizer::OptStatus;
use crate::estimator::FitResult;
use crate::model::{
    validate_params, validate_topology, FixedMask, ModelTopology, Params, PiFix,
};
use crate::moments::CorrTable;
use crate::simulator::ReadDataset;
use crate::validation::{BootstrapResult, CVResult};
use crate::{Error, Result};

fn parse_err(file: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Split a CSV line into exactly `n` bare fields (no quoting; labels are
/// validated against reserved characters when models are built).
fn split_fields<'a>(file: &Path, lineno: usize, line: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != n {
        return Err(parse_err(
            file,
            lineno,
            format!("expected {n} comma-separated fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

fn parse_field<T: std::str::FromStr>(
    file: &Path,
    lineno: usize,
    what: &str,
    raw: &str,
) -> Result<T> {
    raw.trim().parse::<T>().map_err(|_| {
        parse_err(file, lineno, format!("cannot parse {what} from '{raw}'"))
    })
}

/// Write read counts in long format: `barcode_id,time,cell_type,read_count`.
/// Zero cells are omitted except that a barcode with no reads anywhere gets
/// a single explicit zero row, so the barcode set survives the round trip.
pub fn write_reads_csv(data: &ReadDataset, path: &Path) -> Result<()> {
    let mut out = String::from("barcode_id,time,cell_type,read_count\n");
    for p in 0..data.n_barcodes() {
        let mut wrote_any = false;
        for (j, &t) in data.times.iter().enumerate() {
            for (m, label) in data.types.iter().enumerate() {
                let y = data.read(p, j, m);
                if y > 0 {
                    out.push_str(&format!("{},{},{},{}\n", data.barcode_ids[p], t, label, y));
                    wrote_any = true;
                }
            }
        }
        if !wrote_any {
            out.push_str(&format!(
                "{},{},{},0\n",
                data.barcode_ids[p], data.times[0], data.types[0]
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write the sampling-size table: `time,cell_type,B,b`, time-major with
/// types in declaration order. This file defines the canonical time and
/// type ordering when a dataset is loaded back.
pub fn write_cbc_csv(data: &ReadDataset, path: &Path) -> Result<()> {
    let mut out = String::from("time,cell_type,B,b\n");
    for (j, &t) in data.times.iter().enumerate() {
        for (m, label) in data.types.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                t, label, data.big_b[j][m], data.b[j][m]
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn expect_header(file: &Path, content: &str, want: &str) -> Result<()> {
    match content.lines().next() {
        Some(h) if h.trim() == want => Ok(()),
        other => Err(parse_err(
            file,
            1,
            format!("expected header '{want}', found '{}'", other.unwrap_or("")),
        )),
    }
}

/// Load a dataset from `reads.csv` + `cbc.csv`. Times and type order come
/// from the cbc file; read rows for unknown (time, type) combinations are
/// errors, and missing rows are zero reads.
pub fn load_dataset(reads_path: &Path, cbc_path: &Path) -> Result<ReadDataset> {
    // cbc first: it defines the grid
    let cbc = fs::read_to_string(cbc_path)?;
    expect_header(cbc_path, &cbc, "time,cell_type,B,b")?;
    let mut times: Vec<f64> = Vec::new();
    let mut types: Vec<String> = Vec::new();
    let mut rows: Vec<(f64, String, u64, u64)> = Vec::new();
    for (lineno, line) in cbc.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f = split_fields(cbc_path, lineno + 1, line, 4)?;
        let t: f64 = parse_field(cbc_path, lineno + 1, "time", f[0])?;
        let label = f[1].trim().to_string();
        let big_b: u64 = parse_field(cbc_path, lineno + 1, "B", f[2])?;
        let b: u64 = parse_field(cbc_path, lineno + 1, "b", f[3])?;
        if !times.iter().any(|&x| x == t) {
            times.push(t);
        }
        if !types.iter().any(|x| *x == label) {
            types.push(label.clone());
        }
        rows.push((t, label, big_b, b));
    }
    if times.is_empty() || types.is_empty() {
        return Err(parse_err(cbc_path, 1, "no sampling rows"));
    }
    let time_index = |t: f64| times.iter().position(|&x| x == t);
    let type_index = |s: &str| types.iter().position(|x| x == s);
    let mut b = vec![vec![None; types.len()]; times.len()];
    let mut big_b = vec![vec![None; types.len()]; times.len()];
    for (t, label, big, small) in rows {
        let (j, m) = (time_index(t).unwrap(), type_index(&label).unwrap());
        if b[j][m].is_some() {
            return Err(parse_err(
                cbc_path,
                1,
                format!("duplicate sampling row for time {t}, type '{label}'"),
            ));
        }
        b[j][m] = Some(small);
        big_b[j][m] = Some(big);
    }
    let unwrap_table = |tab: Vec<Vec<Option<u64>>>, name: &str| -> Result<Vec<Vec<u64>>> {
        tab.into_iter()
            .enumerate()
            .map(|(j, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(m, v)| {
                        v.ok_or_else(|| {
                            parse_err(
                                cbc_path,
                                1,
                                format!(
                                    "missing {name} entry for time {}, type '{}'",
                                    times[j], types[m]
                                ),
                            )
                        })
                    })
                    .collect()
            })
            .collect()
    };
    let b = unwrap_table(b, "b")?;
    let big_b = unwrap_table(big_b, "B")?;

    // reads: sparse long format over the cbc grid
    let reads_text = fs::read_to_string(reads_path)?;
    expect_header(reads_path, &reads_text, "barcode_id,time,cell_type,read_count")?;
    let mut barcode_ids: Vec<u64> = Vec::new();
    let mut barcode_row: std::collections::HashMap<u64, usize> = std::collections::HashMap::new();
    let mut reads: Vec<u64> = Vec::new();
    let cell_count = times.len() * types.len();
    for (lineno, line) in reads_text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f = split_fields(reads_path, lineno + 1, line, 4)?;
        let id: u64 = parse_field(reads_path, lineno + 1, "barcode_id", f[0])?;
        let t: f64 = parse_field(reads_path, lineno + 1, "time", f[1])?;
        let label = f[2].trim();
        let y: u64 = parse_field(reads_path, lineno + 1, "read_count", f[3])?;
        let j = time_index(t).ok_or_else(|| {
            parse_err(reads_path, lineno + 1, format!("time {t} not in the cbc table"))
        })?;
        let m = type_index(label).ok_or_else(|| {
            parse_err(
                reads_path,
                lineno + 1,
                format!("cell type '{label}' not in the cbc table"),
            )
        })?;
        let row = *barcode_row.entry(id).or_insert_with(|| {
            barcode_ids.push(id);
            reads.resize(reads.len() + cell_count, 0);
            barcode_ids.len() - 1
        });
        reads[row * cell_count + j * types.len() + m] += y;
    }
    if barcode_ids.is_empty() {
        return Err(parse_err(reads_path, 1, "no read rows"));
    }
    Ok(ReadDataset {
        barcode_ids,
        times,
        types,
        reads,
        b,
        big_b,
    })
}

/// `model.json` schema. Map keys are compartment labels; declaration order
/// of progenitors and matures comes from the `compartments` block (children
/// lists concatenated in progenitor order).
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    compartments: CompartmentsFile,
    params: ParamsFile,
    #[serde(default)]
    fixed: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CompartmentsFile {
    hsc: String,
    progenitors: Vec<ProgenitorFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProgenitorFile {
    id: String,
    children: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsFile {
    lambda: f64,
    nu_prog: BTreeMap<String, f64>,
    mu_prog: BTreeMap<String, f64>,
    nu_mat: BTreeMap<String, f64>,
    mu_mat: BTreeMap<String, f64>,
    pi: BTreeMap<String, f64>,
}

fn params_to_file(topo: &ModelTopology, params: &Params) -> ParamsFile {
    let zip_map = |labels: &[String], vals: &[f64]| -> BTreeMap<String, f64> {
        labels.iter().cloned().zip(vals.iter().copied()).collect()
    };
    let mut pi = BTreeMap::new();
    pi.insert(topo.hsc.clone(), params.pi[0]);
    for (a, label) in topo.progenitors.iter().enumerate() {
        pi.insert(label.clone(), params.pi[1 + a]);
    }
    ParamsFile {
        lambda: params.lambda,
        nu_prog: zip_map(&topo.progenitors, &params.nu_prog),
        mu_prog: zip_map(&topo.progenitors, &params.mu_prog),
        nu_mat: zip_map(&topo.matures, &params.nu_mat),
        mu_mat: zip_map(&topo.matures, &params.mu_mat),
        pi,
    }
}

fn map_to_vec(
    path: &Path,
    what: &str,
    map: &BTreeMap<String, f64>,
    labels: &[String],
) -> Result<Vec<f64>> {
    if map.len() != labels.len() {
        return Err(parse_err(
            path,
            0,
            format!(
                "{what} has {} entries for {} compartments",
                map.len(),
                labels.len()
            ),
        ));
    }
    labels
        .iter()
        .map(|l| {
            map.get(l).copied().ok_or_else(|| {
                parse_err(path, 0, format!("{what} is missing an entry for '{l}'"))
            })
        })
        .collect()
}

/// Names accepted in the `fixed` list: rate entries as `<field>.<label>`
/// (e.g. `mu_mat.1`), `lambda`, and for the initial condition either `pi`
/// (whole vector fixed) or `pi.<hsc label>` (stem entry fixed, progenitor
/// split free).
fn fixed_names_to_mask(path: &Path, topo: &ModelTopology, fixed: &[String]) -> Result<FixedMask> {
    let mut mask = FixedMask::all_free(topo);
    let find = |labels: &[String], l: &str| labels.iter().position(|x| x == l);
    for name in fixed {
        let ok = match name.split_once('.') {
            None => match name.as_str() {
                "lambda" => {
                    mask.lambda = true;
                    true
                }
                "pi" => {
                    mask.pi = PiFix::Fixed;
                    true
                }
                _ => false,
            },
            Some((field, label)) => {
                let slot = match field {
                    "nu_prog" => find(&topo.progenitors, label).map(|a| &mut mask.nu_prog[a]),
                    "mu_prog" => find(&topo.progenitors, label).map(|a| &mut mask.mu_prog[a]),
                    "nu_mat" => find(&topo.matures, label).map(|m| &mut mask.nu_mat[m]),
                    "mu_mat" => find(&topo.matures, label).map(|m| &mut mask.mu_mat[m]),
                    "pi" if label == topo.hsc => {
                        if mask.pi == PiFix::Free {
                            mask.pi = PiFix::FixedHsc;
                        }
                        continue;
                    }
                    _ => None,
                };
                match slot {
                    Some(s) => {
                        *s = true;
                        true
                    }
                    None => false,
                }
            }
        };
        if !ok {
            return Err(parse_err(
                path,
                0,
                format!("unknown name '{name}' in the fixed list"),
            ));
        }
    }
    Ok(mask)
}

fn mask_to_fixed_names(topo: &ModelTopology, mask: &FixedMask) -> Vec<String> {
    let mut names = Vec::new();
    if mask.lambda {
        names.push("lambda".to_string());
    }
    for (a, &f) in mask.nu_prog.iter().enumerate() {
        if f {
            names.push(format!("nu_prog.{}", topo.progenitors[a]));
        }
    }
    for (a, &f) in mask.mu_prog.iter().enumerate() {
        if f {
            names.push(format!("mu_prog.{}", topo.progenitors[a]));
        }
    }
    for (m, &f) in mask.nu_mat.iter().enumerate() {
        if f {
            names.push(format!("nu_mat.{}", topo.matures[m]));
        }
    }
    for (m, &f) in mask.mu_mat.iter().enumerate() {
        if f {
            names.push(format!("mu_mat.{}", topo.matures[m]));
        }
    }
    match mask.pi {
        PiFix::Free => {}
        PiFix::FixedHsc => names.push(format!("pi.{}", topo.hsc)),
        PiFix::Fixed => names.push("pi".to_string()),
    }
    names
}

/// Write a model definition (topology, parameter values, fixed-entry list).
pub fn write_model_json(
    path: &Path,
    topo: &ModelTopology,
    params: &Params,
    mask: &FixedMask,
) -> Result<()> {
    validate_topology(topo)?;
    validate_params(topo, params, false)?;
    let file = ModelFile {
        compartments: CompartmentsFile {
            hsc: topo.hsc.clone(),
            progenitors: topo
                .progenitors
                .iter()
                .enumerate()
                .map(|(a, id)| ProgenitorFile {
                    id: id.clone(),
                    children: topo.children(a).map(|m| topo.matures[m].clone()).collect(),
                })
                .collect(),
        },
        params: params_to_file(topo, params),
        fixed: mask_to_fixed_names(topo, mask),
    };
    fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}

/// Read a model definition back. The returned topology lists matures in
/// children order (progenitor-major), matching what the writer produces.
pub fn read_model_json(path: &Path) -> Result<(ModelTopology, Params, FixedMask)> {
    let file: ModelFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let mut matures = Vec::new();
    let mut parent = Vec::new();
    for (a, p) in file.compartments.progenitors.iter().enumerate() {
        for child in &p.children {
            matures.push(child.clone());
            parent.push(a);
        }
    }
    let topo = ModelTopology {
        hsc: file.compartments.hsc.clone(),
        progenitors: file
            .compartments
            .progenitors
            .iter()
            .map(|p| p.id.clone())
            .collect(),
        matures,
        parent,
    };
    validate_topology(&topo)?;
    let pf = &file.params;
    let mut pi_labels = vec![topo.hsc.clone()];
    pi_labels.extend(topo.progenitors.iter().cloned());
    let params = Params {
        lambda: pf.lambda,
        nu_prog: map_to_vec(path, "nu_prog", &pf.nu_prog, &topo.progenitors)?,
        mu_prog: map_to_vec(path, "mu_prog", &pf.mu_prog, &topo.progenitors)?,
        nu_mat: map_to_vec(path, "nu_mat", &pf.nu_mat, &topo.matures)?,
        mu_mat: map_to_vec(path, "mu_mat", &pf.mu_mat, &topo.matures)?,
        pi: map_to_vec(path, "pi", &pf.pi, &pi_labels)?,
    };
    validate_params(&topo, &params, false)?;
    let mask = fixed_names_to_mask(path, &topo, &file.fixed)?;
    Ok((topo, params, mask))
}

fn status_name(status: OptStatus) -> &'static str {
    match status {
        OptStatus::Converged => "converged",
        OptStatus::MaxIters => "max-iters",
        OptStatus::Degenerate => "degenerate",
    }
}

#[derive(Debug, Serialize)]
struct RestartRow {
    index: usize,
    objective: f64,
    status: &'static str,
    n_evals: usize,
}

#[derive(Debug, Serialize)]
struct FitFile<'a> {
    params: ParamsFile,
    fixed: Vec<String>,
    objective: f64,
    best_restart: usize,
    param_names: &'a [String],
    param_values: Vec<f64>,
    warnings: &'a [String],
    restarts: Vec<RestartRow>,
}

/// Write the fit summary: best-fit parameters (full set plus the reported
/// free values), objective, warnings, and the per-restart table.
pub fn write_fit_json(path: &Path, fit: &FitResult) -> Result<()> {
    let file = FitFile {
        params: params_to_file(&fit.topo, &fit.params),
        fixed: mask_to_fixed_names(&fit.topo, &fit.mask),
        objective: fit.objective,
        best_restart: fit.best_restart,
        param_names: &fit.param_names,
        param_values: crate::model::param_values(&fit.topo, &fit.mask, &fit.params),
        warnings: &fit.warnings,
        restarts: fit
            .restarts
            .iter()
            .map(|r| RestartRow {
                index: r.index,
                objective: r.objective,
                status: status_name(r.status),
                n_evals: r.n_evals,
            })
            .collect(),
    };
    fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}

/// Plot-ready comparison of model and empirical correlations:
/// `time,pair,psi_model,psi_hat` with pairs as `<type>:<type>` and
/// undefined cells written as `NA`. Both tables must share the grid the
/// library produces them on (same times, pairs in canonical order).
pub fn write_corr_csv(
    path: &Path,
    topo: &ModelTopology,
    psi_model: &CorrTable,
    psi_hat: &CorrTable,
) -> Result<()> {
    if psi_model.times != psi_hat.times || psi_model.pairs != psi_hat.pairs {
        return Err(Error::InvalidData(
            "model and empirical correlation tables are on different grids".into(),
        ));
    }
    let fmt = |c: &Option<f64>| match c {
        Some(v) => format!("{v}"),
        None => "NA".to_string(),
    };
    let mut out = String::from("time,pair,psi_model,psi_hat\n");
    for (j, &t) in psi_hat.times.iter().enumerate() {
        for (idx, &(m, n)) in psi_hat.pairs.iter().enumerate() {
            out.push_str(&format!(
                "{},{}:{},{},{}\n",
                t,
                topo.matures[m],
                topo.matures[n],
                fmt(&psi_model.psi[j][idx]),
                fmt(&psi_hat.psi[j][idx]),
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// [`write_corr_csv`] on a fit's model/empirical tables.
pub fn write_corr_fit_csv(path: &Path, fit: &FitResult) -> Result<()> {
    write_corr_csv(path, &fit.topo, &fit.psi_model, &fit.psi_hat)
}

/// One row per successful bootstrap replicate, columns as the reported
/// free-parameter names.
pub fn write_bootstrap_csv(path: &Path, boot: &BootstrapResult) -> Result<()> {
    let mut out = String::from("replicate");
    for name in &boot.param_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (r, row) in boot.replicates.iter().enumerate() {
        out.push_str(&format!("{r}"));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CvFile<'a> {
    folds: usize,
    results: Vec<CvEntry<'a>>,
}

#[derive(Debug, Serialize)]
struct CvEntry<'a> {
    model: &'a str,
    per_fold: &'a [f64],
    mean_objective: f64,
}

/// Cross-validation summary, candidates in input order.
pub fn write_cv_json(path: &Path, results: &[(String, CVResult)]) -> Result<()> {
    if results.is_empty() {
        return Err(Error::InvalidData("no cross-validation results".into()));
    }
    let file = CvFile {
        folds: results[0].1.folds,
        results: results
            .iter()
            .map(|(name, r)| CvEntry {
                model: name,
                per_fold: &r.per_fold,
                mean_objective: r.mean_objective,
            })
            .collect(),
    };
    fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ManifestFile<'a> {
    command: &'a str,
    seed: u64,
    version: &'static str,
    config_sha256: String,
    outputs: &'a [&'a str],
}

/// Provenance record for a command run: seed, crate version, SHA-256 of the
/// canonical configuration JSON, and the files written. Contains nothing
/// time- or host-dependent, so a rerun writes identical bytes.
pub fn write_manifest(
    path: &Path,
    command: &str,
    seed: u64,
    config: &serde_json::Value,
    outputs: &[&str],
) -> Result<()> {
    let canonical = serde_json::to_string(config)?;
    let digest = Sha256::digest(canonical.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let file = ManifestFile {
        command,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: hex,
        outputs,
    };
    fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{fit, FitConfig};
    use crate::presets::study_truth;
    use crate::simulator::{simulate_dataset, SimConfig};

    fn tmpdir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("branchmoments-io-{tag}-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn sim_small(seed: u64) -> ReadDataset {
        let truth = study_truth("a").unwrap();
        let mut cfg = SimConfig::new(&truth.params, 40, vec![4.0, 10.0], 300, seed);
        cfg.read_filter_threshold = 0;
        simulate_dataset(&truth.topo, &truth.params, &cfg).unwrap()
    }

    #[test]
    fn reads_and_cbc_round_trip_losslessly() {
        let dir = tmpdir("roundtrip");
        let data = sim_small(5);
        let (rp, cp) = (dir.join("reads.csv"), dir.join("cbc.csv"));
        write_reads_csv(&data, &rp).unwrap();
        write_cbc_csv(&data, &cp).unwrap();
        let back = load_dataset(&rp, &cp).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn all_zero_barcodes_survive_the_round_trip() {
        let dir = tmpdir("zeros");
        let mut data = sim_small(7);
        // erase one barcode's reads entirely
        let cells = data.n_times() * data.n_types();
        for c in 0..cells {
            data.reads[2 * cells + c] = 0;
        }
        let (rp, cp) = (dir.join("reads.csv"), dir.join("cbc.csv"));
        write_reads_csv(&data, &rp).unwrap();
        write_cbc_csv(&data, &cp).unwrap();
        let back = load_dataset(&rp, &cp).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn missing_rows_read_as_zero_and_bad_rows_error() {
        let dir = tmpdir("sparse");
        let cp = dir.join("cbc.csv");
        fs::write(
            &cp,
            "time,cell_type,B,b\n2,x,100,10\n2,y,200,20\n",
        )
        .unwrap();
        let rp = dir.join("reads.csv");
        fs::write(
            &rp,
            "barcode_id,time,cell_type,read_count\n11,2,y,4\n",
        )
        .unwrap();
        let data = load_dataset(&rp, &cp).unwrap();
        assert_eq!(data.barcode_ids, vec![11]);
        assert_eq!(data.types, vec!["x", "y"]);
        assert_eq!(data.read(0, 0, 0), 0, "missing row is zero reads");
        assert_eq!(data.read(0, 0, 1), 4);
        assert_eq!(data.big_b, vec![vec![100, 200]]);

        fs::write(
            &rp,
            "barcode_id,time,cell_type,read_count\n11,9,x,4\n",
        )
        .unwrap();
        let err = load_dataset(&rp, &cp).unwrap_err();
        assert!(err.to_string().contains("not in the cbc table"), "{err}");

        fs::write(&rp, "wrong,header\n").unwrap();
        assert!(load_dataset(&rp, &cp).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let dir = tmpdir("model");
        let truth = study_truth("c").unwrap();
        let path = dir.join("model.json");
        write_model_json(&path, &truth.topo, &truth.params, &truth.mask).unwrap();
        let (topo, params, mask) = read_model_json(&path).unwrap();
        assert_eq!(topo, truth.topo);
        assert_eq!(params, truth.params);
        assert_eq!(mask, truth.mask);
    }

    #[test]
    fn model_json_pi_fix_variants_round_trip() {
        let dir = tmpdir("pifix");
        let truth = study_truth("c").unwrap();
        for pi in [PiFix::Free, PiFix::FixedHsc, PiFix::Fixed] {
            let mask = FixedMask {
                pi,
                ..truth.mask.clone()
            };
            let path = dir.join("model.json");
            write_model_json(&path, &truth.topo, &truth.params, &mask).unwrap();
            let (_, _, back) = read_model_json(&path).unwrap();
            assert_eq!(back.pi, pi);
        }
    }

    #[test]
    fn model_json_rejects_unknown_fixed_names_and_bad_maps() {
        let dir = tmpdir("badmodel");
        let path = dir.join("model.json");
        let good = r#"{
            "compartments": {"hsc": "HSC", "progenitors": [{"id": "a", "children": ["1"]}]},
            "params": {"lambda": 0.03, "nu_prog": {"a": 0.01}, "mu_prog": {"a": 0.005},
                       "nu_mat": {"1": 5.0}, "mu_mat": {"1": 0.2}, "pi": {"HSC": 0.2, "a": 0.8}},
            "fixed": ["mu_mat.1"]
        }"#;
        fs::write(&path, good).unwrap();
        assert!(read_model_json(&path).is_ok());

        fs::write(&path, good.replace("mu_mat.1", "mu_mat.9")).unwrap();
        assert!(read_model_json(&path).unwrap_err().to_string().contains("unknown name"));

        fs::write(&path, good.replace(r#""a": 0.01"#, r#""z": 0.01"#)).unwrap();
        assert!(read_model_json(&path).is_err());
    }

    #[test]
    fn fit_artifacts_and_manifest_are_deterministic() {
        let dir = tmpdir("artifacts");
        let truth = study_truth("a").unwrap();
        let data = {
            let mut cfg = SimConfig::new(&truth.params, 120, vec![4.0, 10.0], 400, 3);
            cfg.read_filter_threshold = 0;
            simulate_dataset(&truth.topo, &truth.params, &cfg).unwrap()
        };
        let cfg = FitConfig {
            n_restarts: 2,
            seed: 9,
            opt: crate::estimator::optimizer::OptOptions {
                max_iters: 120,
                ..Default::default()
            },
            ..FitConfig::default()
        };
        let fr = fit(&truth.topo, &truth.params, &truth.mask, &data, &cfg).unwrap();

        let fit_path = dir.join("fit.json");
        write_fit_json(&fit_path, &fr).unwrap();
        let text = fs::read_to_string(&fit_path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v["objective"].is_f64() || v["objective"].is_number());
        assert_eq!(v["restarts"].as_array().unwrap().len(), 2);
        assert_eq!(
            v["param_names"].as_array().unwrap().len(),
            v["param_values"].as_array().unwrap().len()
        );

        let corr_path = dir.join("corr_fit.csv");
        write_corr_fit_csv(&corr_path, &fr).unwrap();
        let corr = fs::read_to_string(&corr_path).unwrap();
        assert!(corr.starts_with("time,pair,psi_model,psi_hat\n"));
        // 2 times x 3 pairs + header
        assert_eq!(corr.lines().count(), 1 + 2 * 3);
        assert!(corr.contains("4,1:2,"));

        let man_a = dir.join("manifest_a.json");
        let man_b = dir.join("manifest_b.json");
        let config = serde_json::json!({"n": 120, "times": [4.0, 10.0], "model": "a"});
        write_manifest(&man_a, "simulate", 3, &config, &["reads.csv", "cbc.csv"]).unwrap();
        write_manifest(&man_b, "simulate", 3, &config, &["reads.csv", "cbc.csv"]).unwrap();
        assert_eq!(
            fs::read_to_string(&man_a).unwrap(),
            fs::read_to_string(&man_b).unwrap()
        );
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&man_a).unwrap()).unwrap();
        assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
        assert_eq!(m["seed"], 3);
    }

    #[test]
    fn bootstrap_and_cv_writers_produce_expected_shapes() {
        let dir = tmpdir("valout");
        let boot = BootstrapResult {
            point: dummy_fit(),
            param_names: vec!["lambda".into(), "nu_prog.a".into()],
            replicates: vec![vec![0.03, 0.02], vec![0.028, 0.019]],
            failed: 0,
            ci: vec![(0.028, 0.03), (0.019, 0.02)],
            medians: vec![0.029, 0.0195],
            warnings: vec![],
        };
        let bp = dir.join("bootstrap.csv");
        write_bootstrap_csv(&bp, &boot).unwrap();
        let text = fs::read_to_string(&bp).unwrap();
        assert_eq!(
            text,
            "replicate,lambda,nu_prog.a\n0,0.03,0.02\n1,0.028,0.019\n"
        );

        let cv = vec![
            (
                "b".to_string(),
                CVResult {
                    folds: 2,
                    per_fold: vec![1.0, 3.0],
                    mean_objective: 2.0,
                },
            ),
            (
                "c".to_string(),
                CVResult {
                    folds: 2,
                    per_fold: vec![0.5, 1.5],
                    mean_objective: 1.0,
                },
            ),
        ];
        let cp = dir.join("cv.json");
        write_cv_json(&cp, &cv).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&cp).unwrap()).unwrap();
        assert_eq!(v["folds"], 2);
        assert_eq!(v["results"][1]["model"], "c");
        assert_eq!(v["results"][1]["mean_objective"], 1.0);
    }

    fn dummy_fit() -> FitResult {
        let truth = study_truth("a").unwrap();
        let data = sim_small(19);
        let cfg = FitConfig {
            n_restarts: 1,
            seed: 1,
            opt: crate::estimator::optimizer::OptOptions {
                max_iters: 3,
                ..Default::default()
            },
            warm_starts: vec![truth.params.clone()],
            ..FitConfig::default()
        };
        fit(&truth.topo, &truth.params, &truth.mask, &data, &cfg).unwrap()
    }
}
