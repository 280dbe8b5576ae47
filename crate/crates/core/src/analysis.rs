//! Turning a fitted model into statements about people: top variables and
//! members per component, temporal profiles, and metadata-driven group
//! comparisons.

use std::collections::BTreeMap;

use crate::decomp::CpModel;
use crate::error::{Error, Result};
use crate::stats::{
    kde, ks_two_sample, kruskal_wallis, one_way_anova, welch_t_test, KdeCurve, SampleGroup,
    TestResult, KDE_GRID_SIZE, KDE_SPAN_FACTOR,
};

/// Individuals loading most strongly on one component. `component` is
/// 1-based everywhere user-facing.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub component: usize,
    pub fraction: f64,
    /// (individual, loading), descending by loading.
    pub members: Vec<(String, f64)>,
}

impl Membership {
    pub fn label(&self) -> String {
        format!("component_{}", self.component)
    }
}

/// user -> metric -> value lookup for outcome metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetadataTable {
    by_metric: BTreeMap<String, BTreeMap<String, f64>>,
}

impl MetadataTable {
    pub fn from_rows(rows: Vec<(String, String, f64)>) -> Result<Self> {
        let mut by_metric: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (user, metric, value) in rows {
            if user.is_empty() || metric.is_empty() {
                return Err(Error::data("metadata rows need a user id and a metric name".to_string()));
            }
            if !value.is_finite() {
                return Err(Error::data(format!(
                    "metadata value for ({user}, {metric}) is not finite"
                )));
            }
            if by_metric.entry(metric.clone()).or_default().insert(user.clone(), value).is_some() {
                return Err(Error::data(format!("duplicate metadata row for ({user}, {metric})")));
            }
        }
        Ok(MetadataTable { by_metric })
    }

    pub fn metrics(&self) -> Vec<&str> {
        self.by_metric.keys().map(|s| s.as_str()).collect()
    }

    /// All rows as (metric, user, value), sorted by metric then user.
    pub fn rows(&self) -> Vec<(&str, &str, f64)> {
        let mut out = Vec::new();
        for (metric, users) in &self.by_metric {
            for (user, value) in users {
                out.push((metric.as_str(), user.as_str(), *value));
            }
        }
        out
    }

    pub fn get(&self, metric: &str, user: &str) -> Option<f64> {
        self.by_metric.get(metric).and_then(|m| m.get(user)).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.by_metric.is_empty()
    }
}

fn check_component(model: &CpModel, component: usize) -> Result<usize> {
    if component == 0 || component > model.rank() {
        return Err(Error::invalid(format!(
            "component must be in 1..={}, got {component}",
            model.rank()
        )));
    }
    Ok(component - 1)
}

/// Top-k variables by loading on the given component, ties broken by axis
/// order.
pub fn top_variables(
    model: &CpModel,
    variables: &[String],
    component: usize,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    let col = check_component(model, component)?;
    if variables.len() != model.v().rows() {
        return Err(Error::invalid(format!(
            "{} variable labels for a {}-row factor",
            variables.len(),
            model.v().rows()
        )));
    }
    if k == 0 || k > variables.len() {
        return Err(Error::invalid(format!(
            "k must be in 1..={}, got {k}",
            variables.len()
        )));
    }
    let mut idx: Vec<usize> = (0..variables.len()).collect();
    // stable sort keeps axis order for tied loadings
    idx.sort_by(|&a, &b| {
        model
            .v()
            .get(b, col)
            .partial_cmp(&model.v().get(a, col))
            .expect("loadings are finite")
    });
    Ok(idx
        .into_iter()
        .take(k)
        .map(|j| (variables[j].clone(), model.v().get(j, col)))
        .collect())
}

/// Individuals in the top `fraction` (by loading) of the given component;
/// the member count is `ceil(fraction * n)`.
pub fn top_individuals(
    model: &CpModel,
    individuals: &[String],
    component: usize,
    fraction: f64,
) -> Result<Membership> {
    let col = check_component(model, component)?;
    if individuals.len() != model.u().rows() {
        return Err(Error::invalid(format!(
            "{} individual labels for a {}-row factor",
            individuals.len(),
            model.u().rows()
        )));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let count = ((fraction * individuals.len() as f64).ceil() as usize).min(individuals.len());
    let mut idx: Vec<usize> = (0..individuals.len()).collect();
    idx.sort_by(|&a, &b| {
        model
            .u()
            .get(b, col)
            .partial_cmp(&model.u().get(a, col))
            .expect("loadings are finite")
    });
    Ok(Membership {
        component,
        fraction,
        members: idx
            .into_iter()
            .take(count)
            .map(|i| (individuals[i].clone(), model.u().get(i, col)))
            .collect(),
    })
}

/// Day-by-day loading of one component: (day index, weight).
pub fn temporal_profile(model: &CpModel, component: usize) -> Result<Vec<(usize, f64)>> {
    let col = check_component(model, component)?;
    Ok((0..model.t().rows()).map(|k| (k, model.t().get(k, col))).collect())
}

/// Which test family drives a metadata comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestSelection {
    Welch,
    Ks,
    Anova,
    KruskalWallis,
}

impl TestSelection {
    pub fn name(&self) -> &'static str {
        match self {
            TestSelection::Welch => "welch",
            TestSelection::Ks => "ks",
            TestSelection::Anova => "anova",
            TestSelection::KruskalWallis => "kruskal",
        }
    }

    pub fn parse(s: &str) -> Result<TestSelection> {
        match s {
            "welch" => Ok(TestSelection::Welch),
            "ks" => Ok(TestSelection::Ks),
            "anova" => Ok(TestSelection::Anova),
            "kruskal" => Ok(TestSelection::KruskalWallis),
            _ => Err(Error::invalid(format!(
                "unknown test {s:?}; expected welch, ks, anova or kruskal"
            ))),
        }
    }

    fn parametric(&self) -> bool {
        matches!(self, TestSelection::Welch | TestSelection::Anova)
    }
}

/// Outcome of comparing component memberships on one metadata metric.
#[derive(Debug, Clone)]
pub struct GroupComparison {
    pub metric: String,
    /// k-sample test over all usable groups; absent if it could not be run.
    pub omnibus: Option<TestResult>,
    pub pairwise: Vec<TestResult>,
    pub curves: Vec<(String, KdeCurve)>,
    pub group_sizes: Vec<(String, usize)>,
    /// Members with no value for the metric.
    pub dropped_users: usize,
    pub warnings: Vec<String>,
}

/// Compares the metric across memberships. Parametric selections run an
/// ANOVA omnibus and Welch pairwise tests; nonparametric ones run
/// Kruskal-Wallis and pairwise KS. Groups need at least 2 members with the
/// metric to participate.
pub fn compare_groups(
    memberships: &[Membership],
    metadata: &MetadataTable,
    metric: &str,
    selection: TestSelection,
) -> Result<GroupComparison> {
    if memberships.len() < 2 {
        return Err(Error::invalid(format!(
            "group comparison needs at least 2 memberships, got {}",
            memberships.len()
        )));
    }
    let mut out = GroupComparison {
        metric: metric.to_string(),
        omnibus: None,
        pairwise: Vec::new(),
        curves: Vec::new(),
        group_sizes: Vec::new(),
        dropped_users: 0,
        warnings: Vec::new(),
    };
    let mut groups: Vec<SampleGroup> = Vec::new();
    for membership in memberships {
        let label = membership.label();
        let mut values = Vec::new();
        for (user, _) in &membership.members {
            match metadata.get(metric, user) {
                Some(v) => values.push(v),
                None => out.dropped_users += 1,
            }
        }
        out.group_sizes.push((label.clone(), values.len()));
        if values.len() >= 2 {
            groups.push(SampleGroup::new(label, values)?);
        } else {
            out.warnings.push(format!(
                "{label}: only {} members with {metric}; excluded from tests",
                values.len()
            ));
        }
    }
    if groups.len() < 2 {
        return Err(Error::data(format!(
            "metric {metric}: fewer than 2 groups have enough members to compare"
        )));
    }

    let omnibus = if selection.parametric() {
        one_way_anova(&groups)
    } else {
        kruskal_wallis(&groups)
    };
    match omnibus {
        Ok(r) => out.omnibus = Some(r),
        Err(e) => out.warnings.push(format!("omnibus test failed: {e}")),
    }
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let pair = if selection.parametric() {
                welch_t_test(&groups[a], &groups[b])
            } else {
                ks_two_sample(&groups[a], &groups[b])
            };
            match pair {
                Ok(r) => out.pairwise.push(r),
                Err(e) => out.warnings.push(format!(
                    "pairwise test {} vs {} failed: {e}",
                    groups[a].label, groups[b].label
                )),
            }
        }
    }
    for g in &groups {
        out.curves.push((g.label.clone(), kde(&g.values, KDE_GRID_SIZE, KDE_SPAN_FACTOR)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    fn model() -> CpModel {
        // u: 4 individuals, 2 components; v: 3 variables; t: 2 days
        let u = Matrix::from_vec(4, 2, vec![0.9, 0.1, 0.8, 0.2, 0.1, 0.7, 0.2, 0.9]).unwrap();
        let v = Matrix::from_vec(3, 2, vec![0.5, 0.3, 0.5, 0.9, 0.1, 0.3]).unwrap();
        let t = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        CpModel::from_parts(vec![2.0, 1.0], u, v, t).unwrap()
    }

    fn labels(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn top_variables_sorts_and_breaks_ties_by_axis_order() {
        let m = model();
        let vars = labels("var", 3);
        let top = top_variables(&m, &vars, 1, 3).unwrap();
        // weights 0.5, 0.5, 0.1: tie between var0 and var1 keeps axis order
        assert_eq!(top[0].0, "var0");
        assert_eq!(top[1].0, "var1");
        assert_eq!(top[2].0, "var2");
        let top2 = top_variables(&m, &vars, 2, 1).unwrap();
        assert_eq!(top2[0].0, "var1");
        assert!(top_variables(&m, &vars, 3, 1).is_err());
        assert!(top_variables(&m, &vars, 1, 0).is_err());
        assert!(top_variables(&m, &vars, 1, 4).is_err());
    }

    #[test]
    fn top_individuals_takes_ceil_fraction() {
        let m = model();
        let inds = labels("u", 4);
        let mem = top_individuals(&m, &inds, 1, 0.25).unwrap();
        assert_eq!(mem.members.len(), 1);
        assert_eq!(mem.members[0].0, "u0");
        let mem = top_individuals(&m, &inds, 2, 0.5).unwrap();
        assert_eq!(mem.members.len(), 2);
        assert_eq!(mem.members[0].0, "u3");
        assert_eq!(mem.members[1].0, "u2");
        assert_eq!(mem.label(), "component_2");
        assert!(top_individuals(&m, &inds, 1, 0.0).is_err());
        assert!(top_individuals(&m, &inds, 1, 1.5).is_err());
    }

    #[test]
    fn temporal_profile_returns_day_series() {
        let m = model();
        assert_eq!(temporal_profile(&m, 1).unwrap(), vec![(0, 1.0), (1, 0.0)]);
        assert_eq!(temporal_profile(&m, 2).unwrap(), vec![(0, 0.0), (1, 1.0)]);
    }

    fn metadata() -> MetadataTable {
        let mut rows = Vec::new();
        for (i, v) in [1.0, 1.1, 0.9, 1.2, 3.0, 3.2, 2.9, 3.1].iter().enumerate() {
            rows.push((format!("u{i}"), "gpa".to_string(), *v));
        }
        MetadataTable::from_rows(rows).unwrap()
    }

    fn membership(component: usize, users: &[&str]) -> Membership {
        Membership {
            component,
            fraction: 0.5,
            members: users.iter().map(|u| (u.to_string(), 1.0)).collect(),
        }
    }

    #[test]
    fn compare_groups_runs_matching_families() {
        let meta = metadata();
        let groups = [
            membership(1, &["u0", "u1", "u2", "u3"]),
            membership(2, &["u4", "u5", "u6", "u7"]),
        ];
        let cmp = compare_groups(&groups, &meta, "gpa", TestSelection::Welch).unwrap();
        let omni = cmp.omnibus.as_ref().unwrap();
        assert_eq!(omni.test, "anova_f");
        assert_eq!(cmp.pairwise.len(), 1);
        assert_eq!(cmp.pairwise[0].test, "welch_t");
        assert!(cmp.pairwise[0].p_value < 0.01);
        assert_eq!(cmp.curves.len(), 2);
        assert_eq!(cmp.dropped_users, 0);

        let cmp = compare_groups(&groups, &meta, "gpa", TestSelection::Ks).unwrap();
        assert_eq!(cmp.omnibus.as_ref().unwrap().test, "kruskal_wallis_h");
        assert_eq!(cmp.pairwise[0].test, "ks_d");
    }

    #[test]
    fn compare_groups_drops_users_without_the_metric() {
        let meta = metadata();
        let groups = [
            membership(1, &["u0", "u1", "nobody"]),
            membership(2, &["u4", "u5", "u6"]),
        ];
        let cmp = compare_groups(&groups, &meta, "gpa", TestSelection::Welch).unwrap();
        assert_eq!(cmp.dropped_users, 1);
        assert_eq!(cmp.group_sizes[0], ("component_1".to_string(), 2));
    }

    #[test]
    fn compare_groups_needs_two_usable_groups() {
        let meta = metadata();
        let groups = [membership(1, &["u0", "u1"]), membership(2, &["nobody", "missing"])];
        let err = compare_groups(&groups, &meta, "gpa", TestSelection::Welch).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn metadata_table_rejects_duplicates_and_bad_rows() {
        assert!(MetadataTable::from_rows(vec![
            ("u0".into(), "gpa".into(), 3.0),
            ("u0".into(), "gpa".into(), 3.1),
        ])
        .is_err());
        assert!(MetadataTable::from_rows(vec![("".into(), "gpa".into(), 3.0)]).is_err());
        assert!(MetadataTable::from_rows(vec![("u0".into(), "gpa".into(), f64::NAN)]).is_err());
    }
}
