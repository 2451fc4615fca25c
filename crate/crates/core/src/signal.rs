//! Labeled multichannel time series and channel-group partitions.
//!
//! Channels are addressed by [`DofLabel`] (node id + axis), never by column
//! index. Data is stored sample-major: row `k` is the sample at time
//! `t0 + k / fs`.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn offset(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            other => Err(Error::InvalidArgument(format!("axis must be x or y, got `{other}`"))),
        }
    }
}

/// One displacement coordinate of a lattice node, rendered as `z<node><axis>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DofLabel {
    node: u32,
    axis: Axis,
}

impl DofLabel {
    pub fn new(node: u32, axis: Axis) -> Result<Self> {
        if node == 0 {
            return Err(Error::BadLabel(format!("z{node}{axis}")));
        }
        Ok(DofLabel { node, axis })
    }

    pub fn node(&self) -> u32 {
        self.node
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    /// Both axes of a node, x first.
    pub fn node_pair(node: u32) -> Result<[DofLabel; 2]> {
        Ok([DofLabel::new(node, Axis::X)?, DofLabel::new(node, Axis::Y)?])
    }
}

impl fmt::Display for DofLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "z{}{}", self.node, self.axis)
    }
}

impl FromStr for DofLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadLabel(s.to_string());
        let body = s.trim().strip_prefix('z').ok_or_else(bad)?;
        if body.len() < 2 {
            return Err(bad());
        }
        let (digits, axis) = body.split_at(body.len() - 1);
        if !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let node: u32 = digits.parse().map_err(|_| bad())?;
        let axis: Axis = axis.parse().map_err(|_| bad())?;
        DofLabel::new(node, axis).map_err(|_| bad())
    }
}

impl Serialize for DofLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DofLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma-separated label list such as `z6x,z6y`.
pub fn parse_label_list(s: &str) -> Result<Vec<DofLabel>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect()
}

fn check_unique(labels: &[DofLabel]) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for l in labels {
        if !seen.insert(*l) {
            return Err(Error::DuplicateLabel(l.to_string()));
        }
    }
    Ok(())
}

/// Uniformly sampled multichannel record.
///
/// A series built through [`TimeSeries::new`] always has at least one sample
/// and one channel. The conditioning remainder returned by [`partition`] is
/// the one place a zero-channel series can appear.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    fs: f64,
    t0: f64,
    channels: Vec<DofLabel>,
    data: DMatrix<f64>,
}

impl TimeSeries {
    pub fn new(fs: f64, channels: Vec<DofLabel>, data: DMatrix<f64>) -> Result<Self> {
        Self::with_start(fs, 0.0, channels, data)
    }

    pub fn with_start(fs: f64, t0: f64, channels: Vec<DofLabel>, data: DMatrix<f64>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidSeries("no channels".into()));
        }
        Self::build(fs, t0, channels, data)
    }

    fn build(fs: f64, t0: f64, channels: Vec<DofLabel>, data: DMatrix<f64>) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidSeries(format!("sampling frequency must be positive, got {fs}")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidSeries("non-finite start time".into()));
        }
        if data.nrows() == 0 {
            return Err(Error::InvalidSeries("no samples".into()));
        }
        if data.ncols() != channels.len() {
            return Err(Error::InvalidSeries(format!(
                "{} columns for {} channel labels",
                data.ncols(),
                channels.len()
            )));
        }
        check_unique(&channels)?;
        if let Some((idx, _)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (r, c) = (idx % data.nrows(), idx / data.nrows());
            return Err(Error::InvalidSeries(format!(
                "non-finite value at sample {r}, channel {}",
                channels[c]
            )));
        }
        Ok(TimeSeries {
            fs,
            t0,
            channels,
            data,
        })
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn channels(&self) -> &[DofLabel] {
        &self.channels
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.fs
    }

    pub fn index_of(&self, label: &DofLabel) -> Option<usize> {
        self.channels.iter().position(|l| l == label)
    }

    pub fn column(&self, label: &DofLabel) -> Result<Vec<f64>> {
        let idx = self
            .index_of(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        Ok(self.data.column(idx).iter().copied().collect())
    }

    pub fn same_sampling(&self, other: &TimeSeries) -> bool {
        (self.fs - other.fs).abs() <= 1e-9 * self.fs && self.n_samples() == other.n_samples()
    }

    /// Column-wise copy; empty `labels` yields a zero-channel series.
    fn select_allow_empty(&self, labels: &[DofLabel]) -> Result<TimeSeries> {
        let idx = labels
            .iter()
            .map(|l| self.index_of(l).ok_or_else(|| Error::UnknownLabel(l.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let data = self.data.select_columns(idx.iter());
        Self::build(self.fs, self.t0, labels.to_vec(), data)
    }

    /// Rows `start..start+len` as a new series with the start time shifted.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<TimeSeries> {
        if len == 0 || start + len > self.n_samples() {
            return Err(Error::InvalidArgument(format!(
                "row range {start}..{} outside 0..{}",
                start + len,
                self.n_samples()
            )));
        }
        let data = self.data.rows(start, len).into_owned();
        Self::build(self.fs, self.time(start), self.channels.clone(), data)
    }

    /// Writes the CSV form: `t,<label>...` header, one row per sample.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let mut header = Vec::with_capacity(self.n_channels() + 1);
        header.push("t".to_string());
        header.extend(self.channels.iter().map(ToString::to_string));
        w.write_record(&header).map_err(csv_err)?;
        let mut row = Vec::with_capacity(header.len());
        for k in 0..self.n_samples() {
            row.clear();
            row.push(format_real(self.time(k)));
            row.extend(self.data.row(k).iter().map(|v| format_real(*v)));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// Reads the CSV form written by [`TimeSeries::write_csv`]. The sampling
    /// frequency is recovered from the time column, which must be uniform.
    pub fn read_csv<R: Read>(reader: R, context: &str) -> Result<TimeSeries> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = r.headers().map_err(|e| Error::parse(context, e))?.clone();
        if headers.get(0).map(str::trim) != Some("t") {
            return Err(Error::parse(format!("{context}, line 1"), "first column must be `t`"));
        }
        let channels = headers
            .iter()
            .skip(1)
            .map(|h| h.parse::<DofLabel>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::parse(format!("{context}, line 1"), e))?;
        let width = channels.len();
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::parse(format!("{context}, line {line}"), e))?;
            if rec.len() != width + 1 {
                return Err(Error::parse(
                    format!("{context}, line {line}"),
                    format!("expected {} fields, found {}", width + 1, rec.len()),
                ));
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    let name = if j == 0 { "t".to_string() } else { channels[j - 1].to_string() };
                    Error::parse(
                        format!("{context}, line {line}, field `{name}`"),
                        format!("not a number: `{field}`"),
                    )
                })?;
                if j == 0 {
                    times.push(v);
                } else {
                    values.push(v);
                }
            }
        }
        let n = times.len();
        if n < 2 {
            return Err(Error::parse(context, "at least two samples are needed to infer the sampling rate"));
        }
        let span = times[n - 1] - times[0];
        if !(span > 0.0) {
            return Err(Error::parse(context, "time column is not increasing"));
        }
        let mut fs = (n - 1) as f64 / span;
        let rounded = fs.round();
        if rounded > 0.0 && (fs - rounded).abs() <= 1e-9 * fs {
            fs = rounded;
        }
        let t0 = times[0];
        for (k, t) in times.iter().enumerate() {
            let expected = t0 + k as f64 / fs;
            if (t - expected).abs() > 1e-6 / fs {
                return Err(Error::parse(
                    format!("{context}, line {}", k + 2),
                    format!("non-uniform sampling: t = {t}, expected {expected}"),
                ));
            }
        }
        let data = DMatrix::from_row_slice(n, width, &values);
        TimeSeries::with_start(fs, t0, channels, data).map_err(|e| Error::parse(context, e))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::parse("<csv writer>", e)
}

/// Fixed 17-significant-digit scientific notation; round-trips every f64.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Returns the requested columns in the requested order.
pub fn select_channels(ts: &TimeSeries, labels: &[DofLabel]) -> Result<TimeSeries> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty channel selection".into()));
    }
    check_unique(labels)?;
    ts.select_allow_empty(labels)
}

/// Disjoint channel groups, identified by integer ids (node ids in practice).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    groups: Vec<(u32, Vec<DofLabel>)>,
}

impl GroupPartition {
    pub fn new(groups: Vec<(u32, Vec<DofLabel>)>) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut owner: std::collections::HashMap<DofLabel, u32> = Default::default();
        for (id, labels) in &groups {
            if !ids.insert(*id) {
                return Err(Error::InvalidArgument(format!("group id {id} declared twice")));
            }
            if labels.is_empty() {
                return Err(Error::InvalidArgument(format!("group {id} has no channels")));
            }
            for l in labels {
                if let Some(first) = owner.insert(*l, *id) {
                    return Err(Error::OverlappingGroups {
                        label: l.to_string(),
                        first,
                        second: *id,
                    });
                }
            }
        }
        Ok(GroupPartition { groups })
    }

    /// One group per node, holding both axes.
    pub fn by_node(nodes: &[u32]) -> Result<Self> {
        let groups = nodes
            .iter()
            .map(|&n| Ok((n, DofLabel::node_pair(n)?.to_vec())))
            .collect::<Result<Vec<_>>>()?;
        Self::new(groups)
    }

    /// Parses `id:label[,label...];id:label[,label...]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut groups = Vec::new();
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (id, labels) = part
                .split_once(':')
                .ok_or_else(|| Error::parse("group spec", format!("`{part}` lacks `id:`")))?;
            let id: u32 = id
                .trim()
                .parse()
                .map_err(|_| Error::parse("group spec", format!("bad group id `{id}`")))?;
            groups.push((id, parse_label_list(labels)?));
        }
        Self::new(groups)
    }

    pub fn groups(&self) -> &[(u32, Vec<DofLabel>)] {
        &self.groups
    }

    pub fn ids(&self) -> Vec<u32> {
        self.groups.iter().map(|(id, _)| *id).collect()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn labels_of(&self, id: u32) -> Result<&[DofLabel]> {
        self.groups
            .iter()
            .find(|(g, _)| *g == id)
            .map(|(_, l)| l.as_slice())
            .ok_or(Error::UnknownGroup(id))
    }

    /// All grouped channels in partition order.
    pub fn all_labels(&self) -> Vec<DofLabel> {
        self.groups.iter().flat_map(|(_, l)| l.iter().copied()).collect()
    }
}

impl fmt::Display for GroupPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (id, labels)) in self.groups.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{id}:")?;
            for (j, l) in labels.iter().enumerate() {
                if j > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{l}")?;
            }
        }
        Ok(())
    }
}

/// Target, source and conditioning blocks for one causality evaluation.
#[derive(Debug, Clone)]
pub struct Split {
    pub x: TimeSeries,
    pub y: TimeSeries,
    /// May have zero channels when the partition has only two groups.
    pub z: TimeSeries,
}

/// Splits `ts` into X (group `x_id`), Y (group `y_id`) and Z (every other
/// group, concatenated in partition order).
pub fn partition(ts: &TimeSeries, groups: &GroupPartition, x_id: u32, y_id: u32) -> Result<Split> {
    if x_id == y_id {
        return Err(Error::InvalidArgument(format!("X and Y must differ (both {x_id})")));
    }
    let x_labels = groups.labels_of(x_id)?;
    let y_labels = groups.labels_of(y_id)?;
    let z_labels: Vec<DofLabel> = groups
        .groups()
        .iter()
        .filter(|(id, _)| *id != x_id && *id != y_id)
        .flat_map(|(_, l)| l.iter().copied())
        .collect();
    Ok(Split {
        x: ts.select_allow_empty(x_labels)?,
        y: ts.select_allow_empty(y_labels)?,
        z: ts.select_allow_empty(&z_labels)?,
    })
}
