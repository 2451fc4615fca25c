//! Condition assessment from incomplete observations.
//!
//! The healthy VARX model is run forward over a new record. Measured
//! endogenous channels enter the lag regressors as measured; suppressed
//! channels are never observed, so their lags are the model's own earlier
//! estimates. The damage indicator is the mean absolute deviation between
//! measured and estimated values over the measured endogenous channels.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::signal::{format_real, select_channels, DofLabel, TimeSeries};
use crate::varx::VarxModel;

/// Default classification ratio: damaged iff `DI > γ · baseline`.
pub const DEFAULT_GAMMA: f64 = 5.0;

/// Endogenous channels that are not measured during evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SuppressionSet {
    labels: BTreeSet<DofLabel>,
}

impl SuppressionSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_labels(labels: impl IntoIterator<Item = DofLabel>) -> Self {
        SuppressionSet {
            labels: labels.into_iter().collect(),
        }
    }

    /// Both axes of every listed node.
    pub fn from_nodes(nodes: &[u32]) -> Result<Self> {
        let mut labels = BTreeSet::new();
        for &n in nodes {
            labels.extend(DofLabel::node_pair(n)?);
        }
        Ok(SuppressionSet { labels })
    }

    /// Parses `7,8` (node ids) or `z7x,z7y` (labels); empty string is the empty set.
    pub fn parse(s: &str) -> Result<Self> {
        let mut labels = BTreeSet::new();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            if tok.starts_with('z') {
                labels.insert(tok.parse()?);
            } else {
                let node: u32 = tok
                    .parse()
                    .map_err(|_| Error::parse("suppression set", format!("bad node id `{tok}`")))?;
                labels.extend(DofLabel::node_pair(node)?);
            }
        }
        Ok(SuppressionSet { labels })
    }

    pub fn contains(&self, l: &DofLabel) -> bool {
        self.labels.contains(l)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> Vec<DofLabel> {
        self.labels.iter().copied().collect()
    }

    pub fn nodes(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.labels.iter().map(|l| l.node()).collect();
        set.into_iter().collect()
    }

    /// Short tag for file names and plot data: nodes joined with `+`, or
    /// labels when only one axis of a node is suppressed, `none` when empty.
    pub fn tag(&self) -> String {
        if self.labels.is_empty() {
            return "none".into();
        }
        let whole_nodes = self
            .nodes()
            .iter()
            .all(|&n| DofLabel::node_pair(n).map(|p| p.iter().all(|l| self.labels.contains(l))).unwrap_or(false));
        if whole_nodes {
            self.nodes().iter().map(u32::to_string).collect::<Vec<_>>().join("+")
        } else {
            self.labels.iter().map(ToString::to_string).collect::<Vec<_>>().join("+")
        }
    }

    /// Must be a strict subset of the model's endogenous channels.
    pub fn validate(&self, model: &VarxModel) -> Result<()> {
        if let Some(l) = self.labels.iter().find(|l| !model.endog_labels().contains(l)) {
            return Err(Error::InvalidArgument(format!("suppressed channel {l} is not an endogenous model channel")));
        }
        if self.labels.len() >= model.n_endog() {
            return Err(Error::InvalidArgument(
                "at least one endogenous channel must remain measured".into(),
            ));
        }
        Ok(())
    }
}

/// Runs the healthy model over `measured_endog` (non-suppressed endogenous
/// channels) and `exog`, returning estimates for all endogenous channels.
///
/// Output row `r` is the estimate at input sample `s + r`, `s = max(p, q)`,
/// so the result has `N - s` rows and starts at time `t0 + s / fs`. Lags of
/// suppressed channels that fall before `s` take the stored channel mean.
pub fn recursive_estimate(
    model: &VarxModel,
    measured_endog: &TimeSeries,
    exog: Option<&TimeSeries>,
    suppressed: &SuppressionSet,
) -> Result<TimeSeries> {
    suppressed.validate(model)?;
    let expected: Vec<DofLabel> = model
        .endog_labels()
        .iter()
        .filter(|l| !suppressed.contains(l))
        .copied()
        .collect();
    let mut have: Vec<DofLabel> = measured_endog.channels().to_vec();
    have.sort();
    let mut want = expected.clone();
    want.sort();
    if have != want {
        return Err(Error::InvalidArgument(format!(
            "measured endogenous channels [{}] do not match the non-suppressed model channels [{}]",
            join(measured_endog.channels()),
            join(&expected)
        )));
    }
    let n_samples = measured_endog.n_samples();
    let (n, m) = (model.n_endog(), model.n_exog());
    let x = match (m, exog) {
        (0, _) => DMatrix::zeros(n_samples, 0),
        (_, None) => return Err(Error::InvalidArgument("model has exogenous inputs but none were supplied".into())),
        (_, Some(ex)) => {
            if !measured_endog.same_sampling(ex) {
                return Err(Error::InvalidArgument(
                    "endogenous and exogenous records differ in sampling rate or length".into(),
                ));
            }
            let mut d = select_channels(ex, model.exog_labels())?.data().clone();
            for (mut col, mu) in d.column_iter_mut().zip(model.exog_means().iter()) {
                col.add_scalar_mut(-mu);
            }
            d
        }
    };
    if let Some(meta) = model.meta() {
        if (meta.fs - measured_endog.fs()).abs() > 1e-9 * meta.fs {
            return Err(Error::InvalidArgument(format!(
                "record sampled at {} Hz, model fitted at {} Hz",
                measured_endog.fs(),
                meta.fs
            )));
        }
    }
    let start = model.max_lag();
    if n_samples <= start {
        return Err(Error::InsufficientSamples {
            available: n_samples,
            required: start + 1,
        });
    }

    // Working buffer in centered coordinates: measured columns filled in,
    // suppressed columns start at zero (the stored mean) and are overwritten
    // with estimates as they become available.
    let mut work = DMatrix::zeros(n_samples, n);
    let mut is_measured = vec![false; n];
    for (c, label) in model.endog_labels().iter().enumerate() {
        if let Some(src) = measured_endog.index_of(label) {
            is_measured[c] = true;
            let mu = model.endog_means()[c];
            for k in 0..n_samples {
                work[(k, c)] = measured_endog.data()[(k, src)] - mu;
            }
        }
    }

    let n_est = n_samples - start;
    let mut out = DMatrix::zeros(n_est, n);
    let mut yhat = DVector::zeros(n);
    for k in start..n_samples {
        yhat.fill(0.0);
        for (i, ai) in model.a().iter().enumerate() {
            yhat.gemv(1.0, ai, &work.row(k - i - 1).transpose(), 1.0);
        }
        for (j, bj) in model.b().iter().enumerate() {
            yhat.gemv(1.0, bj, &x.row(k - j - 1).transpose(), 1.0);
        }
        for c in 0..n {
            if !is_measured[c] {
                work[(k, c)] = yhat[c];
            }
            out[(k - start, c)] = yhat[c] + model.endog_means()[c];
        }
    }
    TimeSeries::with_start(
        measured_endog.fs(),
        measured_endog.time(start),
        model.endog_labels().to_vec(),
        out,
    )
}

fn join(labels: &[DofLabel]) -> String {
    labels.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// `DI = Σ_channels Σ_samples |ŷ − y| / (M · N)` over `compare_labels`.
pub fn damage_indicator(measured: &TimeSeries, estimated: &TimeSeries, compare_labels: &[DofLabel]) -> Result<f64> {
    if compare_labels.is_empty() {
        return Err(Error::InvalidArgument("no channels to compare".into()));
    }
    if measured.n_samples() != estimated.n_samples() {
        return Err(Error::InvalidArgument(format!(
            "measured has {} samples, estimated has {}",
            measured.n_samples(),
            estimated.n_samples()
        )));
    }
    let mut total = 0.0;
    for label in compare_labels {
        let a = measured.column(label)?;
        let b = estimated.column(label)?;
        total += a.iter().zip(&b).map(|(y, yhat)| (yhat - y).abs()).sum::<f64>();
    }
    Ok(total / (compare_labels.len() * measured.n_samples()) as f64)
}

/// Evaluation settings shared by every scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    pub gamma: f64,
    /// Leading estimated samples excluded from the indicator.
    pub burn_in: usize,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            gamma: DEFAULT_GAMMA,
            burn_in: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamageReport {
    pub scenario: String,
    /// Position of the scenario and suppression set in the run, for stable ordering.
    pub scenario_index: usize,
    pub suppression_index: usize,
    pub suppression: String,
    pub suppressed: Vec<DofLabel>,
    pub compared: Vec<DofLabel>,
    pub di: f64,
    /// Measured endogenous channels compared.
    pub m: usize,
    /// Estimated samples produced, `N - max(p, q)`.
    pub n_est: usize,
    pub burn_in: usize,
    pub baseline_di: Option<f64>,
    pub gamma: f64,
    /// `None` when no baseline was supplied.
    pub damaged: Option<bool>,
    /// `DI / baseline`.
    pub ratio: Option<f64>,
    pub companion_radius: f64,
    pub warnings: Vec<String>,
    pub model_sha256: String,
    pub data_sha256: String,
}

impl DamageReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("damage report, line {} column {}", e.line(), e.column()), e))
    }
}

/// Hex SHA-256 of a series: shape, sampling, labels and raw little-endian samples.
pub fn series_sha256(ts: &TimeSeries) -> String {
    let mut h = Sha256::new();
    h.update(format!("{}|{}|{}|", ts.n_samples(), format_real(ts.fs()), format_real(ts.t0())).as_bytes());
    for l in ts.channels() {
        h.update(l.to_string().as_bytes());
        h.update(b",");
    }
    for v in ts.data().iter() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn text_sha256(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Splits `dataset` by the model's labels, estimates, scores and classifies.
pub fn evaluate(
    model: &VarxModel,
    dataset: &TimeSeries,
    suppressed: &SuppressionSet,
    baseline_di: Option<f64>,
    options: &DetectOptions,
    scenario: &str,
) -> Result<DamageReport> {
    suppressed.validate(model)?;
    if !(options.gamma.is_finite() && options.gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {}", options.gamma)));
    }
    let measured_labels: Vec<DofLabel> = model
        .endog_labels()
        .iter()
        .filter(|l| !suppressed.contains(l))
        .copied()
        .collect();
    let measured = select_channels(dataset, &measured_labels)?;
    let exog = if model.n_exog() > 0 {
        Some(select_channels(dataset, model.exog_labels())?)
    } else {
        None
    };
    let estimated = recursive_estimate(model, &measured, exog.as_ref(), suppressed)?;
    let n_est = estimated.n_samples();
    if options.burn_in >= n_est {
        return Err(Error::InvalidArgument(format!(
            "burn-in {} leaves no samples out of {n_est}",
            options.burn_in
        )));
    }
    let start = model.max_lag() + options.burn_in;
    let len = n_est - options.burn_in;
    let di = damage_indicator(
        &measured.slice_rows(start, len)?,
        &estimated.slice_rows(options.burn_in, len)?,
        &measured_labels,
    )?;

    let companion_radius = model.companion_spectral_radius();
    let mut warnings = Vec::new();
    if !suppressed.is_empty() && companion_radius >= 1.0 {
        warnings.push(format!(
            "model companion spectral radius {companion_radius:.6} >= 1; recursive estimates of suppressed channels may diverge"
        ));
    }
    if model.max_lag() > 0 {
        warnings.push(format!(
            "estimates start at sample {} (lags must lie inside the record); {} of {} samples estimated",
            model.max_lag(),
            n_est,
            dataset.n_samples()
        ));
    }
    let (damaged, ratio) = match baseline_di {
        Some(b) => (Some(di > options.gamma * b), (b > 0.0).then(|| di / b)),
        None => (None, None),
    };
    Ok(DamageReport {
        scenario: scenario.to_string(),
        scenario_index: 0,
        suppression_index: 0,
        suppression: suppressed.tag(),
        suppressed: suppressed.labels(),
        m: measured_labels.len(),
        compared: measured_labels,
        di,
        n_est,
        burn_in: options.burn_in,
        baseline_di,
        gamma: options.gamma,
        damaged,
        ratio,
        companion_radius,
        warnings,
        model_sha256: text_sha256(&model.to_json()),
        data_sha256: series_sha256(dataset),
    })
}
