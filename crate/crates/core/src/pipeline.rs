//! End-to-end run driven by a [`ScenarioConfig`], plus the stage functions
//! the command-line subcommands call individually.
//!
//! Output layout under the run directory:
//!
//! ```text
//! config.cfg                 copy of the configuration text
//! data/<record>.csv          healthy, baseline and damage records
//! model.json                 healthy VARX model
//! gc_report.json             causality table, F_G summary and selection
//! baseline/<set>.json        healthy held-out evaluation per suppression set
//! reports/<scenario>__<set>.json
//! di_plot.csv                scenario, suppression, di
//! manifest.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, BASELINE, HEALTHY};
use crate::detect::{evaluate, text_sha256, DamageReport, SuppressionSet};
use crate::error::{Error, Result};
use crate::granger::{gc_analysis_with, GcReport};
use crate::lattice::{apply_damage, simulate, ExcitationSpec, RNG_ALGORITHM};
use crate::order::OrderPolicy;
use crate::signal::{format_real, select_channels, DofLabel, GroupPartition, TimeSeries};
use crate::varx::{fit_varx, VarxFit};

pub const MANIFEST_FORMAT: &str = "shmx-run/1";

/// Per-record excitation seed: one draw from ChaCha20 seeded with the master
/// seed on stream `role`. Roles: healthy 0, baseline 1, damage scenario `i`
/// (file order) `2 + i`.
pub fn derive_seed(master: u64, role: u64) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(role);
    rng.next_u64()
}

/// Every record the configuration defines, in role order.
pub fn record_ids(config: &ScenarioConfig) -> Vec<String> {
    let mut ids = config.scenario_ids();
    ids.insert(1, BASELINE.to_string());
    ids
}

fn role_of(config: &ScenarioConfig, record: &str) -> Result<u64> {
    record_ids(config)
        .iter()
        .position(|r| r == record)
        .map(|i| i as u64)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown scenario `{record}` (known: {})",
                record_ids(config).join(", ")
            ))
        })
}

pub fn record_seed(config: &ScenarioConfig, record: &str, master: u64) -> Result<u64> {
    Ok(derive_seed(master, role_of(config, record)?))
}

/// Simulates one record: all free DOFs, starting from rest.
pub fn simulate_record(config: &ScenarioConfig, record: &str, master: u64) -> Result<TimeSeries> {
    let seed = record_seed(config, record, master)?;
    let healthy = config.healthy_model()?;
    let model = match config.damage(record) {
        Some(d) => apply_damage(&healthy, d.spring, d.loss)?,
        None => healthy,
    };
    let exc = ExcitationSpec {
        node: config.excitation.node,
        axis: config.excitation.axis,
        std: config.excitation.std,
        seed,
    };
    simulate(&model, &exc, config.fs, config.duration)
}

/// Fits the healthy VARX(p, q) on the named channels of `data`.
pub fn identify(data: &TimeSeries, endog: &[DofLabel], exog: &[DofLabel], p: usize, q: usize) -> Result<VarxFit> {
    let y = select_channels(data, endog)?;
    let x = if exog.is_empty() {
        None
    } else {
        Some(select_channels(data, exog)?)
    };
    fit_varx(&y, if q > 0 { x.as_ref() } else { None }, p, q)
}

/// Orders the VAR with `policy` on the grouped channels, runs every pairwise
/// conditional test (with `conditioned_on` added to each Z) and selects the
/// `select_count` least causal groups.
pub fn granger(
    data: &TimeSeries,
    groups: &GroupPartition,
    policy: &dyn OrderPolicy,
    conditioned_on: &[DofLabel],
    select_count: usize,
) -> Result<GcReport> {
    let pooled = select_channels(data, &groups.all_labels())?;
    let p = policy.select(&pooled)?;
    let mut universe = groups.all_labels();
    universe.extend_from_slice(conditioned_on);
    let u = select_channels(data, &universe)?;
    let table = gc_analysis_with(&u, groups, p, conditioned_on)?;
    GcReport::new(&table, &policy.spec(), groups, conditioned_on, select_count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub scenario: String,
    pub suppression: String,
    pub di: f64,
}

/// Plot rows ordered by run position, then by name.
pub fn plot_rows(reports: &[DamageReport]) -> Vec<PlotRow> {
    let mut sorted: Vec<&DamageReport> = reports.iter().collect();
    sorted.sort_by(|a, b| {
        (a.scenario_index, a.suppression_index, &a.scenario, &a.suppression).cmp(&(
            b.scenario_index,
            b.suppression_index,
            &b.scenario,
            &b.suppression,
        ))
    });
    sorted
        .into_iter()
        .map(|r| PlotRow {
            scenario: r.scenario.clone(),
            suppression: r.suppression.clone(),
            di: r.di,
        })
        .collect()
}

pub fn plot_csv(rows: &[PlotRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let ser = |e: csv::Error| Error::InvalidArgument(format!("plot data: {e}"));
    w.write_record(["scenario", "suppression", "di"]).map_err(ser)?;
    for r in rows {
        w.write_record([r.scenario.as_str(), r.suppression.as_str(), &format_real(r.di)])
            .map_err(ser)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("plot data: {e}")))?;
    Ok(String::from_utf8(bytes).expect("ascii output"))
}

/// Every `*.json` damage report directly inside `dir`, by file name.
pub fn load_reports(dir: &Path) -> Result<Vec<DamageReport>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            DamageReport::from_json(&text).map_err(|e| match e {
                Error::Parse { context, message } => Error::Parse {
                    context: format!("{}: {context}", p.display()),
                    message,
                },
                other => other,
            })
        })
        .collect()
}

// Files ---------------------------------------------------------------------

/// Writes `contents` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_series(path: &Path, ts: &TimeSeries) -> Result<()> {
    let mut buf = Vec::new();
    ts.write_csv(&mut buf)?;
    write_atomic(path, &buf)
}

pub fn read_series(path: &Path) -> Result<TimeSeries> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    TimeSeries::read_csv(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// File name of a scenario report.
pub fn report_name(scenario: &str, suppression: &SuppressionSet) -> String {
    format!("{scenario}__{}.json", suppression.tag())
}

// Manifest ------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub tool_version: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub rng_algorithm: String,
    /// Excitation seed of every record.
    pub seeds: BTreeMap<String, u64>,
    pub started_unix_s: u64,
    pub finished_unix_s: Option<u64>,
    pub status: RunStatus,
    pub failure: Option<StageFailure>,
    pub gc_selected: Vec<u32>,
    /// Output name to path relative to the run directory.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("manifest, line {} column {}", e.line(), e.column()), e))
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

struct Run<'a> {
    config: &'a ScenarioConfig,
    out: &'a Path,
    manifest: RunManifest,
}

impl Run<'_> {
    fn put(&mut self, key: &str, rel: &str, contents: &[u8]) -> Result<()> {
        write_atomic(&self.out.join(rel), contents)?;
        self.manifest.outputs.insert(key.to_string(), rel.to_string());
        Ok(())
    }

    fn stage<T>(&self, name: &'static str, r: Result<T>) -> std::result::Result<T, (&'static str, Error)> {
        r.map_err(|e| (name, e))
    }

    fn execute(&mut self) -> std::result::Result<(), (&'static str, Error)> {
        let config = self.config;
        let master = self.manifest.master_seed;

        let r = self.put("config", "config.cfg", config.source.as_bytes());
        self.stage("setup", r)?;

        let ids = record_ids(config);
        let sims = ids
            .par_iter()
            .map(|id| simulate_record(config, id, master))
            .collect::<Result<Vec<_>>>();
        let sims = self.stage("simulate", sims)?;
        let mut records: BTreeMap<String, TimeSeries> = BTreeMap::new();
        for (id, ts) in ids.iter().zip(sims) {
            let rel = format!("data/{id}.csv");
            let r = write_series(&self.out.join(&rel), &ts);
            self.stage("simulate", r)?;
            self.manifest.outputs.insert(format!("data:{id}"), rel);
            records.insert(id.clone(), ts);
        }

        let fit = identify(
            &records[HEALTHY],
            &config.endogenous_labels(),
            &config.exogenous_labels(),
            config.p,
            config.q,
        );
        let model = self.stage("identify", fit)?.model;
        let model_json = model.to_json();
        let r = self.put("model", "model.json", model_json.as_bytes());
        self.stage("identify", r)?;

        let groups = self.stage("gc", GroupPartition::by_node(&config.endogenous_nodes))?;
        let boundary = if config.gc_include_boundary {
            config.exogenous_labels()
        } else {
            Vec::new()
        };
        let report = granger(
            &records[HEALTHY],
            &groups,
            config.gc_policy().as_ref(),
            &boundary,
            config.select_count,
        );
        let report = self.stage("gc", report)?;
        self.manifest.gc_selected = report.selected.clone();
        let r = self.put("gc_report", "gc_report.json", report.to_json().as_bytes());
        self.stage("gc", r)?;

        let suppressions = if config.suppressions.is_empty() {
            vec![self.stage("detect", SuppressionSet::from_nodes(&report.selected))?]
        } else {
            config.suppressions.clone()
        };

        let baselines = suppressions
            .par_iter()
            .map(|s| evaluate(&model, &records[BASELINE], s, None, &config.detection, BASELINE))
            .collect::<Result<Vec<_>>>();
        let mut baselines = self.stage("baseline", baselines)?;
        for (j, (b, s)) in baselines.iter_mut().zip(&suppressions).enumerate() {
            b.suppression_index = j;
            let rel = format!("baseline/{}.json", s.tag());
            let r = self.put(&format!("baseline:{}", s.tag()), &rel, b.to_json().as_bytes());
            self.stage("baseline", r)?;
        }

        let scenarios = config.scenario_ids();
        let jobs: Vec<(usize, usize)> = (0..scenarios.len())
            .flat_map(|i| (0..suppressions.len()).map(move |j| (i, j)))
            .collect();
        let reports = jobs
            .par_iter()
            .map(|&(i, j)| {
                let id = &scenarios[i];
                let mut r = evaluate(
                    &model,
                    &records[id],
                    &suppressions[j],
                    Some(baselines[j].di),
                    &config.detection,
                    id,
                )?;
                r.scenario_index = i;
                r.suppression_index = j;
                Ok(r)
            })
            .collect::<Result<Vec<_>>>();
        let reports = self.stage("detect", reports)?;
        for r in &reports {
            let name = report_name(&r.scenario, &suppressions[r.suppression_index]);
            let rel = format!("reports/{name}");
            let w = self.put(&format!("report:{}", name.trim_end_matches(".json")), &rel, r.to_json().as_bytes());
            self.stage("detect", w)?;
        }

        let csv = self.stage("plot-data", plot_csv(&plot_rows(&reports)))?;
        let r = self.put("di_plot", "di_plot.csv", csv.as_bytes());
        self.stage("plot-data", r)
    }
}

/// Runs every stage and writes `manifest.json` last. On failure the manifest
/// is still written, with status `failed` and the failing stage; files
/// produced before the failure are kept.
pub fn run_pipeline(config: &ScenarioConfig, out_dir: &Path, master_seed: Option<u64>) -> Result<RunManifest> {
    let master = master_seed.unwrap_or(config.excitation.seed);
    let seeds = record_ids(config)
        .into_iter()
        .map(|id| {
            let s = record_seed(config, &id, master).expect("known record");
            (id, s)
        })
        .collect();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut run = Run {
        config,
        out: out_dir,
        manifest: RunManifest {
            format: MANIFEST_FORMAT.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: text_sha256(&config.source),
            master_seed: master,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            seeds,
            started_unix_s: unix_now(),
            finished_unix_s: None,
            status: RunStatus::Running,
            failure: None,
            gc_selected: Vec::new(),
            outputs: BTreeMap::new(),
        },
    };
    let outcome = run.execute();
    let mut manifest = run.manifest;
    manifest.finished_unix_s = Some(unix_now());
    let result = match outcome {
        Ok(()) => {
            manifest.status = RunStatus::Succeeded;
            Ok(())
        }
        Err((stage, e)) => {
            manifest.status = RunStatus::Failed;
            manifest.failure = Some(StageFailure {
                stage: stage.to_string(),
                message: e.to_string(),
            });
            Err(e.in_stage(stage))
        }
    };
    write_atomic(&out_dir.join("manifest.json"), manifest.to_json().as_bytes())?;
    result.map(|()| manifest)
}
