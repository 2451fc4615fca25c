//! Scenario configuration: a TOML file describing the lattice, the
//! substructure split, acquisition, model orders, damage scenarios,
//! suppression sets and detection settings.
//!
//! Every validation failure names the offending field by its dotted path.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::detect::{DetectOptions, SuppressionSet};
use crate::error::{Error, Result};
use crate::lattice::{build_lattice, LatticeModel, LatticeSpec, Node, Spring};
use crate::order::{OrderPolicy, OrderPolicyRegistry};
use crate::signal::{Axis, DofLabel};

/// Text of the bundled canonical experiment.
pub const CANONICAL_CONFIG: &str = include_str!("../configs/canonical.cfg");

/// Id of the undamaged record; the model is identified from it.
pub const HEALTHY: &str = "healthy";

/// Held-out healthy record that sets the classification baseline.
pub const BASELINE: &str = "baseline";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    lattice: RawLattice,
    substructure: RawSubstructure,
    excitation: RawExcitation,
    acquisition: RawAcquisition,
    model: RawModel,
    #[serde(default)]
    damage: Vec<RawDamage>,
    #[serde(default)]
    suppression: Option<RawSuppression>,
    #[serde(default)]
    detection: Option<RawDetection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLattice {
    nodes: Vec<Node>,
    fixed_nodes: Vec<u32>,
    springs: Vec<RawSpring>,
    default_stiffness: Option<f64>,
    mass: f64,
    alpha: f64,
    beta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawSpring {
    Pair([u32; 2]),
    Detailed { nodes: [u32; 2], stiffness: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubstructure {
    exogenous_nodes: Vec<u32>,
    endogenous_nodes: Vec<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExcitation {
    node: u32,
    axis: String,
    std: f64,
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAcquisition {
    fs: f64,
    duration: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    p: usize,
    q: usize,
    gc_order: Option<String>,
    #[serde(default)]
    gc_include_boundary: bool,
    select_count: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDamage {
    id: String,
    spring: [u32; 2],
    loss: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSuppression {
    sets: Vec<Vec<u32>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    gamma: Option<f64>,
    burn_in: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationConfig {
    pub node: u32,
    pub axis: Axis,
    pub std: f64,
    /// Default master seed when none is given on the command line.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DamageScenario {
    pub id: String,
    pub spring: (u32, u32),
    pub loss: f64,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub lattice: LatticeSpec,
    pub exogenous_nodes: Vec<u32>,
    pub endogenous_nodes: Vec<u32>,
    pub excitation: ExcitationConfig,
    pub fs: f64,
    pub duration: f64,
    pub p: usize,
    pub q: usize,
    pub gc_order: String,
    pub gc_include_boundary: bool,
    pub select_count: usize,
    pub damages: Vec<DamageScenario>,
    pub suppressions: Vec<SuppressionSet>,
    pub detection: DetectOptions,
    /// Exact text the configuration was parsed from.
    pub source: String,
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be a positive finite number, got {v}")))
    }
}

fn check_nonnegative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be a non-negative finite number, got {v}")))
    }
}

fn unique_nodes(field: &str, nodes: &[u32]) -> Result<BTreeSet<u32>> {
    let mut seen = BTreeSet::new();
    for &n in nodes {
        if !seen.insert(n) {
            return Err(Error::config(field, format!("node {n} listed twice")));
        }
    }
    Ok(seen)
}

impl ScenarioConfig {
    pub fn canonical() -> Self {
        Self::from_toml_str(CANONICAL_CONFIG).expect("bundled configuration is valid")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let context = match e.span() {
                Some(span) => {
                    let line = text[..span.start].matches('\n').count() + 1;
                    format!("config, line {line}")
                }
                None => "config".to_string(),
            };
            Error::parse(context, e.message())
        })?;
        Self::validate(raw, text)
    }

    fn validate(raw: RawConfig, text: &str) -> Result<Self> {
        let lattice = Self::lattice_spec(&raw.lattice)?;
        let model = build_lattice(&lattice).map_err(|e| Error::config("lattice", e.to_string()))?;
        let free: BTreeSet<u32> = model.dofs().iter().map(|d| d.node()).collect();

        let exo = unique_nodes("substructure.exogenous_nodes", &raw.substructure.exogenous_nodes)?;
        let endo = unique_nodes("substructure.endogenous_nodes", &raw.substructure.endogenous_nodes)?;
        if endo.is_empty() {
            return Err(Error::config("substructure.endogenous_nodes", "must not be empty"));
        }
        for (field, set) in [
            ("substructure.exogenous_nodes", &exo),
            ("substructure.endogenous_nodes", &endo),
        ] {
            if let Some(n) = set.iter().find(|n| !free.contains(n)) {
                return Err(Error::config(field, format!("node {n} is not a free lattice node")));
            }
        }
        if let Some(n) = exo.intersection(&endo).next() {
            return Err(Error::config(
                "substructure",
                format!("node {n} is both exogenous and endogenous"),
            ));
        }

        let ex = &raw.excitation;
        if !free.contains(&ex.node) {
            return Err(Error::config("excitation.node", format!("node {} is not a free lattice node", ex.node)));
        }
        let axis: Axis = ex
            .axis
            .parse()
            .map_err(|_| Error::config("excitation.axis", format!("expected `x` or `y`, got `{}`", ex.axis)))?;
        check_nonnegative("excitation.std", ex.std)?;

        let acq = &raw.acquisition;
        check_positive("acquisition.fs", acq.fs)?;
        check_positive("acquisition.duration", acq.duration)?;

        let m = &raw.model;
        if m.p == 0 {
            return Err(Error::config("model.p", "must be at least 1"));
        }
        if m.q > 0 && exo.is_empty() {
            return Err(Error::config("model.q", "exogenous lags need at least one exogenous node"));
        }
        let gc_order = m.gc_order.clone().unwrap_or_else(|| "aic:20".to_string());
        let policy = OrderPolicyRegistry::default()
            .parse(&gc_order)
            .map_err(|e| Error::config("model.gc_order", e.to_string()))?;
        let select_count = m.select_count.unwrap_or(1);
        if select_count == 0 || select_count >= endo.len() {
            return Err(Error::config(
                "model.select_count",
                format!("must lie in 1..{} for {} endogenous nodes", endo.len(), endo.len()),
            ));
        }

        let mut damages = Vec::with_capacity(raw.damage.len());
        let mut ids = BTreeSet::new();
        for (i, d) in raw.damage.iter().enumerate() {
            let field = |f: &str| format!("damage[{i}].{f}");
            let valid_id = !d.id.is_empty()
                && d.id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
            if !valid_id {
                return Err(Error::config(field("id"), format!("`{}` must be non-empty [A-Za-z0-9_-]", d.id)));
            }
            if [HEALTHY, BASELINE].contains(&d.id.as_str()) || !ids.insert(d.id.clone()) {
                return Err(Error::config(field("id"), format!("`{}` is reserved or already used", d.id)));
            }
            let [a, b] = d.spring;
            if model.spring(a, b).is_none() {
                return Err(Error::config(field("spring"), format!("no spring connects nodes {a} and {b}")));
            }
            if !(d.loss.is_finite() && (0.0..1.0).contains(&d.loss)) {
                return Err(Error::config(field("loss"), format!("must lie in [0, 1), got {}", d.loss)));
            }
            damages.push(DamageScenario {
                id: d.id.clone(),
                spring: (a.min(b), a.max(b)),
                loss: d.loss,
            });
        }

        let sets = raw.suppression.map(|s| s.sets).unwrap_or_default();
        let mut suppressions = Vec::with_capacity(sets.len());
        for (i, nodes) in sets.iter().enumerate() {
            let field = format!("suppression.sets[{i}]");
            let set = unique_nodes(&field, nodes)?;
            if let Some(n) = set.iter().find(|n| !endo.contains(n)) {
                return Err(Error::config(field, format!("node {n} is not endogenous")));
            }
            if set.len() == endo.len() {
                return Err(Error::config(field, "must leave at least one endogenous node measured"));
            }
            let s = SuppressionSet::from_nodes(nodes)?;
            if suppressions.contains(&s) {
                return Err(Error::config(field, "duplicate suppression set"));
            }
            suppressions.push(s);
        }

        let mut detection = DetectOptions::default();
        if let Some(d) = &raw.detection {
            if let Some(g) = d.gamma {
                check_positive("detection.gamma", g)?;
                detection.gamma = g;
            }
            if let Some(b) = d.burn_in {
                detection.burn_in = b;
            }
        }

        let n = (acq.fs * acq.duration).round() as usize;
        if n <= m.p.max(m.q) + detection.burn_in {
            return Err(Error::config(
                "acquisition.duration",
                format!("{n} samples leave nothing to evaluate after lags and burn-in"),
            ));
        }

        Ok(ScenarioConfig {
            lattice,
            exogenous_nodes: raw.substructure.exogenous_nodes,
            endogenous_nodes: raw.substructure.endogenous_nodes,
            excitation: ExcitationConfig {
                node: ex.node,
                axis,
                std: ex.std,
                seed: ex.seed,
            },
            fs: acq.fs,
            duration: acq.duration,
            p: m.p,
            q: m.q,
            gc_order: policy.spec(),
            gc_include_boundary: m.gc_include_boundary,
            select_count,
            damages,
            suppressions,
            detection,
            source: text.to_string(),
        })
    }

    fn lattice_spec(raw: &RawLattice) -> Result<LatticeSpec> {
        check_positive("lattice.mass", raw.mass)?;
        check_nonnegative("lattice.alpha", raw.alpha)?;
        check_nonnegative("lattice.beta", raw.beta)?;
        let mut ids = BTreeSet::new();
        for (i, n) in raw.nodes.iter().enumerate() {
            if n.id == 0 || !ids.insert(n.id) {
                return Err(Error::config(format!("lattice.nodes[{i}].id"), format!("{} is zero or repeated", n.id)));
            }
            if !(n.x.is_finite() && n.y.is_finite()) {
                return Err(Error::config(format!("lattice.nodes[{i}]"), "coordinates must be finite"));
            }
        }
        for &f in &raw.fixed_nodes {
            if !ids.contains(&f) {
                return Err(Error::config("lattice.fixed_nodes", format!("unknown node {f}")));
            }
        }
        let mut springs = Vec::with_capacity(raw.springs.len());
        for (i, s) in raw.springs.iter().enumerate() {
            let field = format!("lattice.springs[{i}]");
            let ([a, b], k) = match *s {
                RawSpring::Pair(nodes) => (
                    nodes,
                    raw.default_stiffness
                        .ok_or_else(|| Error::config(&field, "no stiffness given and no lattice.default_stiffness"))?,
                ),
                RawSpring::Detailed { nodes, stiffness } => (nodes, stiffness),
            };
            for n in [a, b] {
                if !ids.contains(&n) {
                    return Err(Error::config(&field, format!("unknown node {n}")));
                }
            }
            let spring = Spring::new(a, b, k).map_err(|e| Error::config(&field, e.to_string()))?;
            if springs.iter().any(|t: &Spring| t.id() == spring.id()) {
                return Err(Error::config(&field, format!("spring {a}-{b} listed twice")));
            }
            springs.push(spring);
        }
        Ok(LatticeSpec {
            nodes: raw.nodes.clone(),
            fixed_nodes: raw.fixed_nodes.clone(),
            springs,
            nodal_mass: raw.mass,
            rayleigh_alpha: raw.alpha,
            rayleigh_beta: raw.beta,
        })
    }

    pub fn endogenous_labels(&self) -> Vec<DofLabel> {
        node_labels(&self.endogenous_nodes)
    }

    pub fn exogenous_labels(&self) -> Vec<DofLabel> {
        node_labels(&self.exogenous_nodes)
    }

    pub fn healthy_model(&self) -> Result<LatticeModel> {
        build_lattice(&self.lattice)
    }

    /// `healthy` followed by the damage ids in file order.
    pub fn scenario_ids(&self) -> Vec<String> {
        std::iter::once(HEALTHY.to_string())
            .chain(self.damages.iter().map(|d| d.id.clone()))
            .collect()
    }

    pub fn damage(&self, id: &str) -> Option<&DamageScenario> {
        self.damages.iter().find(|d| d.id == id)
    }

    pub fn gc_policy(&self) -> Box<dyn OrderPolicy> {
        OrderPolicyRegistry::default()
            .parse(&self.gc_order)
            .expect("validated at load")
    }
}

fn node_labels(nodes: &[u32]) -> Vec<DofLabel> {
    nodes
        .iter()
        .flat_map(|&n| DofLabel::node_pair(n).expect("validated node id"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with(from: &str, to: &str) -> Result<ScenarioConfig> {
        assert!(CANONICAL_CONFIG.contains(from), "{from}");
        ScenarioConfig::from_toml_str(&CANONICAL_CONFIG.replacen(from, to, 1))
    }

    fn field_of(r: Result<ScenarioConfig>) -> String {
        match r {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn canonical_matches_builtin_lattice() {
        let c = ScenarioConfig::canonical();
        assert_eq!(c.lattice, LatticeSpec::canonical());
        assert_eq!((c.p, c.q, c.fs, c.duration), (2, 1, 1000.0, 2.0));
        assert_eq!(c.scenario_ids(), ["healthy", "k13", "k67", "k78"]);
        assert_eq!(c.suppressions.len(), 3);
        assert_eq!(c.gc_order, "aic:20");
        assert_eq!(c.endogenous_labels().len(), 6);
        assert_eq!(c.exogenous_labels().len(), 4);
        assert_eq!(c.detection, DetectOptions::default());
    }

    #[test]
    fn rejections_name_the_field() {
        let cases = [
            ("endogenous_nodes = [6, 7, 8]", "endogenous_nodes = [5, 7, 8]", "substructure"),
            ("endogenous_nodes = [6, 7, 8]", "endogenous_nodes = [1, 7, 8]", "substructure.endogenous_nodes"),
            ("spring = [6, 7]", "spring = [6, 3]", "damage[1].spring"),
            ("loss = 0.2", "loss = 1.0", "damage[0].loss"),
            ("id = \"k67\"", "id = \"k13\"", "damage[1].id"),
            ("id = \"k67\"", "id = \"baseline\"", "damage[1].id"),
            ("id = \"k67\"", "id = \"k 67\"", "damage[1].id"),
            ("sets = [[7], [8], [7, 8]]", "sets = [[7], [6, 7, 8]]", "suppression.sets[1]"),
            ("sets = [[7], [8], [7, 8]]", "sets = [[4]]", "suppression.sets[0]"),
            ("axis = \"y\"", "axis = \"z\"", "excitation.axis"),
            ("fs = 1000.0", "fs = -1.0", "acquisition.fs"),
            ("p = 2", "p = 0", "model.p"),
            ("gc_order = \"aic:20\"", "gc_order = \"bic:3\"", "model.gc_order"),
            ("select_count = 2", "select_count = 3", "model.select_count"),
            ("gamma = 5.0", "gamma = 0.0", "detection.gamma"),
            ("[1, 3], [3, 5]", "[1, 3], [1, 3]", "lattice.springs[8]"),
            ("[2, 4], [4, 6], [6, 8],", "[2, 4], [4, 6],", "lattice"),
        ];
        for (from, to, field) in cases {
            assert_eq!(field_of(with(from, to)), field, "{to}");
        }
    }

    #[test]
    fn syntax_errors_carry_a_line_number() {
        let err = with("mass = 1.0", "mass = \"heavy\"").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("line 6"), "{err}");
        assert!(with("[detection]", "[detection]\nthreshold = 3").is_err());
    }

    #[test]
    fn optional_blocks_default() {
        let text = CANONICAL_CONFIG.split("[[damage]]").next().unwrap();
        let c = ScenarioConfig::from_toml_str(text).unwrap();
        assert!(c.damages.is_empty() && c.suppressions.is_empty());
        assert_eq!(c.detection, DetectOptions::default());
        let c = with("[1, 2], [2, 3]", "{ nodes = [1, 2], stiffness = 2.0e5 }, [2, 3]").unwrap();
        assert_eq!(c.lattice.springs[0].stiffness, 2.0e5);
    }
}
