//! Report directories: per-component rankings, memberships, and temporal
//! profiles, per-metric test tables and density curves, plus a manifest
//! tying the outputs back to the model file they came from.
//!
//! Outputs are deterministic: files are emitted in a fixed order with fixed
//! formatting and the manifest carries no timestamps, so re-running the same
//! report reproduces it byte for byte. If any step fails, files already
//! written for this report are removed.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::analysis::{
    compare_groups, temporal_profile, top_individuals, top_variables, Membership, MetadataTable,
    TestSelection,
};
use crate::error::{Error, Result};
use crate::io::{write_atomic, StoredModel};
use crate::stats::DegreesOfFreedom;

/// Knobs for report generation.
#[derive(Debug, Clone)]
pub struct ReportConfig {
    /// Variables listed per component (clamped to the variable count).
    pub top_k: usize,
    /// Membership cut: top `fraction` of individuals by loading.
    pub top_fraction: f64,
    /// Statistical test family for metric comparisons.
    pub selection: TestSelection,
    /// Metrics to compare; `None` compares every metric in the table.
    pub metrics: Option<Vec<String>>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            top_k: 15,
            top_fraction: 0.25,
            selection: TestSelection::Welch,
            metrics: None,
        }
    }
}

/// What a report run produced.
#[derive(Debug)]
pub struct ReportOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn df_field(df: &DegreesOfFreedom) -> String {
    match df {
        DegreesOfFreedom::None => String::new(),
        DegreesOfFreedom::Single(d) => format!("{d}"),
        DegreesOfFreedom::Pair(d1, d2) => format!("{d1}/{d2}"),
    }
}

/// File-name-safe version of a metric name.
fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

/// Writes a full report for `stored` into `dir`. `model_path` is the model
/// file the report describes; its SHA-256 goes into the manifest so a report
/// can be matched to the exact model bytes that produced it.
pub fn write_report(
    dir: &Path,
    stored: &StoredModel,
    metadata: &MetadataTable,
    cfg: &ReportConfig,
    model_path: &Path,
) -> Result<ReportOutput> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    match build(dir, stored, metadata, cfg, model_path, &mut files) {
        Ok(warnings) => Ok(ReportOutput { files, warnings }),
        Err(e) => {
            for f in &files {
                let _ = fs::remove_file(f);
            }
            Err(e)
        }
    }
}

fn emit(dir: &Path, name: &str, content: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    write_atomic(&path, content)?;
    files.push(path);
    Ok(())
}

fn build(
    dir: &Path,
    stored: &StoredModel,
    metadata: &MetadataTable,
    cfg: &ReportConfig,
    model_path: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<Vec<String>> {
    if cfg.top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1".to_string()));
    }
    let model = &stored.model;
    let rank = model.rank();
    let k = cfg.top_k.min(stored.variables.len());
    let mut warnings = Vec::new();

    let mut memberships: Vec<Membership> = Vec::with_capacity(rank);
    for r in 1..=rank {
        let top = top_variables(model, &stored.variables, r, k)?;
        let mut out = String::from("variable,weight\n");
        for (name, w) in &top {
            let _ = writeln!(out, "{name},{w}");
        }
        emit(dir, &format!("component_{r}_top_variables.csv"), &out, files)?;

        let membership = top_individuals(model, &stored.individuals, r, cfg.top_fraction)?;
        let mut out = String::from("individual,weight\n");
        for (name, w) in &membership.members {
            let _ = writeln!(out, "{name},{w}");
        }
        emit(dir, &format!("component_{r}_membership.csv"), &out, files)?;
        memberships.push(membership);

        let profile = temporal_profile(model, r)?;
        let mut out = String::from("day,weight\n");
        for (idx, w) in &profile {
            let _ = writeln!(out, "{},{w}", stored.days[*idx]);
        }
        emit(dir, &format!("component_{r}_temporal.csv"), &out, files)?;
    }

    let metrics: Vec<String> = match &cfg.metrics {
        Some(list) => {
            let known: BTreeSet<&str> = metadata.metrics().into_iter().collect();
            for m in list {
                if !known.contains(m.as_str()) {
                    return Err(Error::data(format!("metric {m:?} is not in the metadata")));
                }
            }
            list.clone()
        }
        None => metadata.metrics().into_iter().map(str::to_string).collect(),
    };
    let mut seen_names = BTreeSet::new();
    for m in &metrics {
        if !seen_names.insert(sanitize(m)) {
            return Err(Error::invalid(format!(
                "metric {m:?} collides with another metric after file-name sanitization"
            )));
        }
    }

    if rank < 2 && !metrics.is_empty() {
        warnings.push("model has a single component; metric comparisons skipped".to_string());
    } else {
        for metric in &metrics {
            let cmp = match compare_groups(&memberships, metadata, metric, cfg.selection) {
                Ok(c) => c,
                Err(e) => {
                    warnings.push(format!("metric {metric}: {e}"));
                    continue;
                }
            };
            let safe = sanitize(metric);
            let mut out = String::from("test,groups,statistic,df,p_value\n");
            let rows = cmp.omnibus.iter().chain(cmp.pairwise.iter());
            for t in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    t.test,
                    t.group_labels.join("|"),
                    t.statistic,
                    df_field(&t.df),
                    t.p_value
                );
            }
            emit(dir, &format!("metric_{safe}_tests.csv"), &out, files)?;
            for (label, curve) in &cmp.curves {
                let mut out = String::new();
                let _ = writeln!(out, "# bandwidth={}", curve.bandwidth);
                out.push_str("x,density\n");
                for (x, d) in curve.grid.iter().zip(curve.density.iter()) {
                    let _ = writeln!(out, "{x},{d}");
                }
                emit(dir, &format!("metric_{safe}_kde_{label}.csv"), &out, files)?;
            }
            for w in cmp.warnings {
                warnings.push(format!("metric {metric}: {w}"));
            }
        }
    }

    let mut manifest = String::from("# report manifest\n");
    let _ = writeln!(manifest, "model {}", model_path.display());
    let _ = writeln!(manifest, "model_sha256 {}", sha256_hex(model_path)?);
    let _ = writeln!(manifest, "rank {rank}");
    if let Some(seed) = stored.meta.seed {
        let _ = writeln!(manifest, "seed {seed}");
    }
    let _ = writeln!(manifest, "test {}", cfg.selection.name());
    let _ = writeln!(manifest, "top_k {k}");
    let _ = writeln!(manifest, "top_fraction {}", cfg.top_fraction);
    let _ = writeln!(
        manifest,
        "metrics {}",
        if metrics.is_empty() { "none".to_string() } else { metrics.join(",") }
    );
    let mut names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    names.sort();
    for name in names {
        let _ = writeln!(manifest, "file {name}");
    }
    emit(dir, "manifest.txt", &manifest, files)?;
    Ok(warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::CpModel;
    use crate::io::{write_model, ModelMeta};
    use crate::tensor::Matrix;
    use std::collections::BTreeMap;
    use tempfile::tempdir;

    fn stored() -> StoredModel {
        let u = Matrix::from_vec(
            6,
            2,
            vec![0.9, 0.1, 0.8, 0.15, 0.7, 0.2, 0.1, 0.9, 0.15, 0.8, 0.2, 0.7],
        )
        .unwrap();
        let v = Matrix::from_vec(3, 2, vec![0.5, 0.3, 0.6, 0.9, 0.1, 0.3]).unwrap();
        let t = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let model = CpModel::from_parts(vec![2.0, 1.0], u, v, t).unwrap();
        StoredModel {
            model,
            individuals: (0..6).map(|i| format!("u{i}")).collect(),
            variables: vec!["va".into(), "vb".into(), "vc".into()],
            days: vec!["0".into(), "1".into()],
            meta: ModelMeta { seed: Some(3), ..ModelMeta::default() },
        }
    }

    fn metadata() -> MetadataTable {
        let mut rows = Vec::new();
        for (i, v) in [1.0, 1.2, 0.9, 3.0, 3.1, 2.9].iter().enumerate() {
            rows.push((format!("u{i}"), "gpa".to_string(), *v));
        }
        MetadataTable::from_rows(rows).unwrap()
    }

    fn write_model_file(dir: &Path, stored: &StoredModel) -> PathBuf {
        let path = dir.join("m.model");
        write_model(&path, stored).unwrap();
        path
    }

    fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
        let mut map = BTreeMap::new();
        for entry in fs::read_dir(dir).unwrap() {
            let entry = entry.unwrap();
            map.insert(
                entry.file_name().to_string_lossy().into_owned(),
                fs::read(entry.path()).unwrap(),
            );
        }
        map
    }

    #[test]
    fn report_writes_expected_files() {
        let dir = tempdir().unwrap();
        let stored = stored();
        let model_path = write_model_file(dir.path(), &stored);
        let out_dir = dir.path().join("report");
        let cfg = ReportConfig { top_fraction: 0.5, ..ReportConfig::default() };
        let out = write_report(&out_dir, &stored, &metadata(), &cfg, &model_path).unwrap();
        let names: Vec<String> = out
            .files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        for expected in [
            "component_1_top_variables.csv",
            "component_1_membership.csv",
            "component_1_temporal.csv",
            "component_2_top_variables.csv",
            "component_2_membership.csv",
            "component_2_temporal.csv",
            "metric_gpa_tests.csv",
            "metric_gpa_kde_component_1.csv",
            "metric_gpa_kde_component_2.csv",
            "manifest.txt",
        ] {
            assert!(names.contains(&expected.to_string()), "missing {expected}: {names:?}");
        }
        let tests = fs::read_to_string(out_dir.join("metric_gpa_tests.csv")).unwrap();
        let mut lines = tests.lines();
        assert_eq!(lines.next().unwrap(), "test,groups,statistic,df,p_value");
        assert!(lines.next().unwrap().starts_with("anova_f,component_1|component_2,"));
        assert!(lines.next().unwrap().starts_with("welch_t,component_1|component_2,"));
        let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
        assert!(manifest.contains("model_sha256 "));
        assert!(manifest.contains("rank 2"));
        assert!(manifest.contains("metrics gpa"));
        assert!(!manifest.to_lowercase().contains("time"), "manifest must not carry timestamps");
        let kde = fs::read_to_string(out_dir.join("metric_gpa_kde_component_1.csv")).unwrap();
        assert!(kde.starts_with("# bandwidth="));
        assert_eq!(kde.lines().count(), 2 + crate::stats::KDE_GRID_SIZE);
    }

    #[test]
    fn report_is_byte_identical_across_runs() {
        let dir = tempdir().unwrap();
        let stored = stored();
        let model_path = write_model_file(dir.path(), &stored);
        let cfg = ReportConfig { top_fraction: 0.5, ..ReportConfig::default() };
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        write_report(&out_a, &stored, &metadata(), &cfg, &model_path).unwrap();
        write_report(&out_b, &stored, &metadata(), &cfg, &model_path).unwrap();
        assert_eq!(snapshot(&out_a), snapshot(&out_b));
    }

    #[test]
    fn unknown_metric_fails_and_cleans_up() {
        let dir = tempdir().unwrap();
        let stored = stored();
        let model_path = write_model_file(dir.path(), &stored);
        let out_dir = dir.path().join("report");
        let cfg = ReportConfig {
            metrics: Some(vec!["nope".to_string()]),
            top_fraction: 0.5,
            ..ReportConfig::default()
        };
        let err = write_report(&out_dir, &stored, &metadata(), &cfg, &model_path).unwrap_err();
        assert!(err.to_string().contains("nope"), "{err}");
        let leftover: Vec<_> = fs::read_dir(&out_dir).unwrap().collect();
        assert!(leftover.is_empty(), "partial outputs were not cleaned up");
    }

    #[test]
    fn sparse_metadata_demotes_tests_to_warnings() {
        let dir = tempdir().unwrap();
        let stored = stored();
        let model_path = write_model_file(dir.path(), &stored);
        // only one user has the metric: no group reaches n >= 2
        let table =
            MetadataTable::from_rows(vec![("u0".to_string(), "gpa".to_string(), 1.0)]).unwrap();
        let out_dir = dir.path().join("report");
        let cfg = ReportConfig { top_fraction: 0.5, ..ReportConfig::default() };
        let out = write_report(&out_dir, &stored, &table, &cfg, &model_path).unwrap();
        assert!(out.warnings.iter().any(|w| w.contains("gpa")), "{:?}", out.warnings);
        assert!(!out_dir.join("metric_gpa_tests.csv").exists());
        assert!(out_dir.join("manifest.txt").exists());
    }
}
