//! Experiment configuration: a TOML file with flat keys and nested sections.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hallq::models::{ModelFile, ModelRecipe, RecipeName};
use hallq::quasiadiabatic::FilterKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const SCHEMA_VERSION: u32 = 1;

/// Embedded defaults, printed by `hallq defaults`.
pub const DEFAULTS: &str = r#"# hallq experiment configuration
# experiment: validate | spectrum | conductance | chern | loop-phase | stokes | lemma-checks | quantize
experiment = "validate"
seed = 1

[model]
# built-in recipe name, or `file = "model.toml"` for a model definition file
recipe = "qwz_fermion"
L = 3
# charge = 9            # sector Q; recipe default when omitted

[model.params]
# recipe parameters override the documented defaults, e.g. m = -0.25

[filter]
kind = "spline"         # spline | gaussian
delta = "gamma/2"       # number, or "gamma/2" for half the gap at zero flux

[numeric]
tol = 1e-9              # integrator error per unit flux length
chern_tol = 1e-12       # Lanczos / CG tolerance for many-body Kubo
grid_n = 8
method = "auto"         # auto | many_body | single_particle
r = [0.2, 0.1, 0.05]
N = 4                   # Stokes grid, loop side r = 2 pi / N
stokes_mode = "state"   # state | unitary
M_list = [2, 3, 4, 5]
theta = 1.0
scan_points = 16
basepoints = [[1.5707963267948966, 0.0], [0.0, 1.5707963267948966], [1.5707963267948966, 1.5707963267948966], [0.7853981633974483, 0.7853981633974483]]

[output]
dir = "results"
"#;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub recipe: Option<RecipeName>,
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(default)]
    pub charge: Option<usize>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaSpec {
    Value(f64),
    Rule(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub kind: FilterKind,
    pub delta: DeltaSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Auto,
    ManyBody,
    SingleParticle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StokesChoice {
    State,
    Unitary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericSection {
    pub tol: f64,
    pub chern_tol: f64,
    pub grid_n: usize,
    pub method: MethodChoice,
    pub r: Vec<f64>,
    #[serde(rename = "N")]
    pub stokes_n: usize,
    pub stokes_mode: StokesChoice,
    #[serde(rename = "M_list")]
    pub m_list: Vec<usize>,
    pub theta: f64,
    pub scan_points: usize,
    pub basepoints: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Validate,
    Spectrum,
    Conductance,
    Chern,
    LoopPhase,
    Stokes,
    LemmaChecks,
    Quantize,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Spectrum => "spectrum",
            Experiment::Conductance => "conductance",
            Experiment::Chern => "chern",
            Experiment::LoopPhase => "loop-phase",
            Experiment::Stokes => "stokes",
            Experiment::LemmaChecks => "lemma-checks",
            Experiment::Quantize => "quantize",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub model: ModelSection,
    pub filter: FilterSection,
    pub numeric: NumericSection,
    pub output: OutputSection,
}

/// Sets `a.b.c = value` in a TOML tree, creating tables on the way.
fn set_dotted(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), Failure> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().ok_or_else(|| Failure::Config(format!("empty override key '{key}'")))?;
    let mut table = root;
    for p in path {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| Failure::Config(format!("override '{key}': '{p}' is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Parses `key=value`; the value is read as TOML and falls back to a string.
fn parse_override(spec: &str) -> Result<(String, toml::Value), Failure> {
    let (k, v) = spec.split_once('=').ok_or_else(|| Failure::Config(format!("override '{spec}' is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ExperimentConfig {
    /// Defaults, then the file (if any), then the overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, Failure> {
        let mut tree: toml::Table = toml::from_str(DEFAULTS).expect("embedded defaults parse");
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            let user: toml::Table = toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            if user.get("model").and_then(|m| m.get("file")).is_some() {
                // a model file replaces the default recipe
                if let Some(toml::Value::Table(m)) = tree.get_mut("model") {
                    m.remove("recipe");
                }
            }
            merge(&mut tree, user);
        }
        for o in overrides {
            let (k, v) = parse_override(o)?;
            if k == "model.file" {
                if let Some(toml::Value::Table(m)) = tree.get_mut("model") {
                    m.remove("recipe");
                }
            }
            set_dotted(&mut tree, &k, v)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(tree).try_into().map_err(|e: toml::de::Error| Failure::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), Failure> {
        let bad = |m: &str| Err(Failure::Config(m.to_string()));
        match (&self.model.recipe, &self.model.file) {
            (Some(_), Some(_)) => return bad("model: give either recipe or file, not both"),
            (None, None) => return bad("model: recipe or file is required"),
            _ => {}
        }
        let n = &self.numeric;
        if !(n.tol > 0.0 && n.chern_tol > 0.0) {
            return bad("numeric: tolerances must be positive");
        }
        if n.grid_n < 2 {
            return bad("numeric.grid_n must be at least 2");
        }
        if n.stokes_n == 0 {
            return bad("numeric.N must be at least 1");
        }
        if n.r.is_empty() || n.r.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("numeric.r must be a non-empty list of positive radii");
        }
        if n.scan_points == 0 {
            return bad("numeric.scan_points must be positive");
        }
        if let DeltaSpec::Value(d) = self.filter.delta {
            if !(d.is_finite() && d > 0.0) {
                return bad("filter.delta must be positive");
            }
        } else if let DeltaSpec::Rule(r) = &self.filter.delta {
            if r != "gamma/2" {
                return bad("filter.delta must be a number or \"gamma/2\"");
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form without the output location, hex encoded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("output");
        }
        let canonical = serde_json::to_string(&v).expect("json");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn recipe(&self) -> Option<ModelRecipe> {
        self.model.recipe.map(|name| ModelRecipe { name, params: self.model.params.clone(), charge: self.model.charge })
    }

    /// Parsed model definition file, with the configured charge taking precedence.
    pub fn model_file(&self) -> Result<Option<ModelFile>, Failure> {
        let Some(p) = &self.model.file else { return Ok(None) };
        let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
        let mut f: ModelFile = toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
        if let Some(q) = self.model.charge {
            f.charge = q;
        }
        Ok(Some(f))
    }
}
