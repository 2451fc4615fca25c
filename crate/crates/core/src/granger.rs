//! Pairwise conditional Granger causality between channel groups and the
//! sensor-suppression ranking built on it.
//!
//! For target group X, source group Y and the remaining groups Z, two VARs of
//! the same order are fitted over the same sample range: the full model on
//! `[X, Y, Z]` and the reduced model on `[X, Z]`. The causality is
//!
//! ```text
//! F(Y→X|Z) = ln det Σ'_xx − ln det Σ_xx      (nats)
//! ```
//!
//! where `Σ_xx`, `Σ'_xx` are the X-block residual covariances of the full and
//! reduced fits. Summing F over every target for a fixed source gives that
//! source's general causality F_G; the groups with the smallest F_G lose the
//! least predictive information when dropped.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{partition, select_channels, DofLabel, GroupPartition, TimeSeries};
use crate::varx::{fit_var, log_det_spd};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcRow {
    pub x: u32,
    pub y: u32,
    /// F(Y→X|Z) in nats.
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcTable {
    pub order: usize,
    pub n_samples: usize,
    /// Sorted by `(y, x)`.
    pub rows: Vec<GcRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralCausality {
    pub group: u32,
    pub f_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcSummary {
    /// One entry per source group, ascending group id.
    pub groups: Vec<GeneralCausality>,
}

impl GcSummary {
    pub fn get(&self, group: u32) -> Option<f64> {
        self.groups.iter().find(|g| g.group == group).map(|g| g.f_g)
    }

    /// Group ids by ascending F_G, ties to the smaller id.
    pub fn ranking(&self) -> Vec<u32> {
        let mut g = self.groups.clone();
        g.sort_by(|a, b| a.f_g.total_cmp(&b.f_g).then(a.group.cmp(&b.group)));
        g.into_iter().map(|g| g.group).collect()
    }
}

/// `F(Y→X|Z)` for groups `x_id`, `y_id` of `u`; Z is every other group.
pub fn pairwise_conditional_f(u: &TimeSeries, groups: &GroupPartition, x_id: u32, y_id: u32, p: usize) -> Result<f64> {
    pairwise_conditional_f_with(u, groups, x_id, y_id, p, &[])
}

/// As [`pairwise_conditional_f`], with `extra` channels appended to Z.
pub fn pairwise_conditional_f_with(
    u: &TimeSeries,
    groups: &GroupPartition,
    x_id: u32,
    y_id: u32,
    p: usize,
    extra: &[DofLabel],
) -> Result<f64> {
    if p == 0 {
        return Err(Error::InvalidArgument("VAR order must be at least 1".into()));
    }
    let split = partition(u, groups, x_id, y_id)?;
    let x: Vec<DofLabel> = split.x.channels().to_vec();
    let mut z: Vec<DofLabel> = split.z.channels().to_vec();
    z.extend_from_slice(extra);

    let mut full_labels = x.clone();
    full_labels.extend_from_slice(split.y.channels());
    full_labels.extend_from_slice(&z);
    let mut reduced_labels = x.clone();
    reduced_labels.extend_from_slice(&z);

    let full = fit_var(&select_channels(u, &full_labels)?, p)?;
    let reduced = fit_var(&select_channels(u, &reduced_labels)?, p)?;
    let nx = x.len();
    let sigma = full.residuals.covariance.view((0, 0), (nx, nx)).into_owned();
    let sigma_reduced = reduced.residuals.covariance.view((0, 0), (nx, nx)).into_owned();
    Ok(log_det_spd(&sigma_reduced)? - log_det_spd(&sigma)?)
}

/// Every ordered pair of distinct groups, rows sorted by `(y, x)`.
pub fn gc_analysis(u: &TimeSeries, groups: &GroupPartition, p: usize) -> Result<GcTable> {
    gc_analysis_with(u, groups, p, &[])
}

pub fn gc_analysis_with(u: &TimeSeries, groups: &GroupPartition, p: usize, extra: &[DofLabel]) -> Result<GcTable> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("causality analysis needs at least two groups".into()));
    }
    let ids = groups.ids();
    let mut pairs: Vec<(u32, u32)> = ids
        .iter()
        .flat_map(|&y| ids.iter().filter(move |&&x| x != y).map(move |&x| (x, y)))
        .collect();
    pairs.sort_by_key(|&(x, y)| (y, x));
    let rows = pairs
        .par_iter()
        .map(|&(x, y)| {
            pairwise_conditional_f_with(u, groups, x, y, p, extra).map(|f| GcRow { x, y, f })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GcTable {
        order: p,
        n_samples: u.n_samples(),
        rows,
    })
}

/// `F_G(g) = Σ_{rows with y = g} F`, summed in table order.
pub fn general_causality(table: &GcTable) -> GcSummary {
    let mut sums: BTreeMap<u32, f64> = BTreeMap::new();
    for row in &table.rows {
        sums.entry(row.x).or_insert(0.0);
        *sums.entry(row.y).or_insert(0.0) += row.f;
    }
    GcSummary {
        groups: sums.into_iter().map(|(group, f_g)| GeneralCausality { group, f_g }).collect(),
    }
}

/// The `count` groups with the smallest F_G, ascending.
pub fn select_suppressible(summary: &GcSummary, count: usize) -> Result<Vec<u32>> {
    let total = summary.groups.len();
    if count == 0 || count >= total {
        return Err(Error::InvalidArgument(format!(
            "suppression count must lie in 1..{total}, got {count}"
        )));
    }
    Ok(summary.ranking().into_iter().take(count).collect())
}

/// Serialized result of one causality run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcReport {
    pub order: usize,
    pub order_policy: String,
    pub n_samples: usize,
    pub groups: String,
    pub conditioned_on: Vec<DofLabel>,
    pub rows: Vec<GcRow>,
    pub summary: Vec<GeneralCausality>,
    pub ranking: Vec<u32>,
    pub selected: Vec<u32>,
}

impl GcReport {
    pub fn new(
        table: &GcTable,
        order_policy: &str,
        groups: &GroupPartition,
        conditioned_on: &[DofLabel],
        select_count: usize,
    ) -> Result<Self> {
        let summary = general_causality(table);
        let selected = select_suppressible(&summary, select_count)?;
        Ok(GcReport {
            order: table.order,
            order_policy: order_policy.to_string(),
            n_samples: table.n_samples,
            groups: groups.to_string(),
            conditioned_on: conditioned_on.to_vec(),
            rows: table.rows.clone(),
            ranking: summary.ranking(),
            summary: summary.groups,
            selected,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("GC report, line {} column {}", e.line(), e.column()), e))
    }
}
