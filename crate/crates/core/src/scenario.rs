//! Scenario configuration: a TOML file fully describing one experiment
//! (network, thermostats, grid, integrator, initial data, analysis knobs,
//! output location). Unknown keys are rejected; semantic violations name
//! the broken invariant. Failing the controllability check is a warning,
//! not an error, so negative fixtures can still be run and inspected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::analysis::{ReportOptions, SearchOptions};
use crate::dynamics::{IntegratorConfig, Scheme, System};
use crate::error::{Error, Result};
use crate::kernel;
use crate::network::{NetworkSpec, PotentialSpec, Thermostat, VertexId};
use crate::thermostat::{build_grid, BathInitSpec, CouplingSpec};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    /// Reserved for stochastic extensions; recorded so a scenario stays
    /// reproducible byte-for-byte. Nothing in the current pipeline draws
    /// random numbers (multistart points are low-discrepancy).
    #[serde(default)]
    seed: u64,
    network: NetworkSection,
    #[serde(rename = "thermostat", default)]
    thermostats: Vec<ThermostatSection>,
    grid: GridSection,
    integrator: IntegratorSection,
    initial: InitialSection,
    #[serde(default)]
    analysis: AnalysisSection,
    #[serde(default)]
    gle: GleSection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    vertices: Vec<u32>,
    #[serde(default)]
    edges: Vec<[u32; 2]>,
    /// per-vertex pinning potentials: key "default" or a vertex id
    pins: BTreeMap<String, PotentialSpec>,
    /// per-edge interaction potentials: key "default" or "a-b"
    #[serde(default)]
    interactions: BTreeMap<String, PotentialSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThermostatSection {
    vertex: u32,
    coupling: CouplingSpec,
    #[serde(default = "zero_init")]
    init: BathInitSpec,
}

fn zero_init() -> BathInitSpec {
    BathInitSpec::Zero
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    nu_max: f64,
    count: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorSection {
    dt: f64,
    horizon: f64,
    sample_every: usize,
    #[serde(default = "default_scheme")]
    scheme: Scheme,
    #[serde(default = "default_drift_abort")]
    drift_abort: f64,
}

fn default_scheme() -> Scheme {
    Scheme::StrangExactBath
}

fn default_drift_abort() -> f64 {
    1e-4
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    q: Vec<f64>,
    p: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalysisSection {
    tail_fraction: Option<f64>,
    spectral_fraction: Option<f64>,
    band_epsilon: Option<f64>,
    truncation: Option<f64>,
    search_box: Option<f64>,
    n_starts: Option<usize>,
    newton_tol: Option<f64>,
    dedup_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GleSection {
    dtau: Option<f64>,
    tau_max: Option<f64>,
    tail_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<String>,
}

/// Kernel-tabulation settings for the reduced runs.
#[derive(Clone, Debug)]
pub struct GleSettings {
    pub dtau: f64,
    /// per-thermostat lag cutoff
    pub tau_max: Vec<f64>,
    pub tail_tol: f64,
}

/// Analysis settings resolved against the network size.
#[derive(Clone, Debug)]
pub struct AnalysisSettings {
    pub report: ReportOptions,
    pub search: SearchOptions,
    /// truncation time for the two-bath defect; defaults to the horizon
    pub truncation: f64,
}

/// A fully validated scenario, ready to run.
#[derive(Debug)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub system: System,
    pub bath_init: Vec<BathInitSpec>,
    pub q0: Vec<f64>,
    pub p0: Vec<f64>,
    pub integrator: IntegratorConfig,
    pub analysis: AnalysisSettings,
    pub gle: GleSettings,
    pub out_dir: Option<PathBuf>,
    /// non-fatal findings (e.g. the controllability check failing)
    pub warnings: Vec<String>,
    /// raw config text, hashed into the manifest
    pub source: String,
}

/// Parse and validate a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let source = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_scenario_str(&source, &path.display().to_string())
}

/// Parse and validate scenario TOML from a string; `origin` names the
/// source in error messages.
pub fn parse_scenario_str(source: &str, origin: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(source)
        .map_err(|e| Error::Config(format!("{origin}: {e}")))?;
    assemble(file, source.to_string()).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{origin}: {msg}")),
        other => other,
    })
}

fn assemble(file: ScenarioFile, source: String) -> Result<Scenario> {
    let vertices: Vec<VertexId> = file.network.vertices.iter().copied().map(VertexId).collect();

    let mut pins: BTreeMap<VertexId, PotentialSpec> = BTreeMap::new();
    let default_pin = file.network.pins.get("default").cloned();
    for key in file.network.pins.keys() {
        if key != "default" {
            let id: u32 = key
                .parse()
                .map_err(|_| Error::Config(format!("pins key '{key}' is neither 'default' nor a vertex id")))?;
            if !file.network.vertices.contains(&id) {
                return Err(Error::Config(format!("pins references unknown vertex {id}")));
            }
        }
    }
    for v in &vertices {
        let specific = file.network.pins.get(&v.0.to_string()).cloned();
        match specific.or_else(|| default_pin.clone()) {
            Some(p) => {
                pins.insert(*v, p);
            }
            None => {
                return Err(Error::Config(format!(
                    "vertex {v} has no pinning potential and no default is given"
                )))
            }
        }
    }

    let default_edge = file.network.interactions.get("default").cloned();
    for key in file.network.interactions.keys() {
        if key != "default" && parse_edge_key(key).is_none() {
            return Err(Error::Config(format!(
                "interactions key '{key}' is neither 'default' nor of the form 'a-b'"
            )));
        }
    }
    let mut interactions = Vec::new();
    for [a, b] in &file.network.edges {
        let (lo, hi) = if a <= b { (*a, *b) } else { (*b, *a) };
        let specific = file
            .network
            .interactions
            .get(&format!("{lo}-{hi}"))
            .or_else(|| file.network.interactions.get(&format!("{hi}-{lo}")))
            .cloned();
        match specific.or_else(|| default_edge.clone()) {
            Some(pot) => interactions.push(((VertexId(*a), VertexId(*b)), pot)),
            None => {
                return Err(Error::Config(format!(
                    "edge ({a}, {b}) has no interaction potential and no default is given"
                )))
            }
        }
    }

    let thermostats: Vec<Thermostat> = file
        .thermostats
        .iter()
        .map(|t| Thermostat { vertex: VertexId(t.vertex), coupling: t.coupling.clone() })
        .collect();
    let bath_init: Vec<BathInitSpec> = file.thermostats.iter().map(|t| t.init.clone()).collect();

    let net = NetworkSpec::new(vertices, pins, interactions, thermostats)
        .map_err(|e| Error::Config(e.to_string()))?;
    let grid = build_grid(file.grid.nu_max, file.grid.count).map_err(|e| Error::Config(e.to_string()))?;

    let integrator = IntegratorConfig {
        dt: file.integrator.dt,
        horizon: file.integrator.horizon,
        sample_every: file.integrator.sample_every,
        scheme: file.integrator.scheme,
        drift_abort: file.integrator.drift_abort,
    };
    // the recurrence guard is a hard error at parse time
    integrator.validate(&grid).map_err(|e| Error::Config(e.to_string()))?;

    let system = System::new(net, grid)?;

    let n = system.net().n();
    if file.initial.q.len() != n || file.initial.p.len() != n {
        return Err(Error::Config(format!(
            "initial q and p must each have {n} entries (one per vertex)"
        )));
    }
    if !file.initial.q.iter().chain(&file.initial.p).all(|x| x.is_finite()) {
        return Err(Error::Config("initial q/p must be finite".into()));
    }

    let a = &file.analysis;
    for (label, v) in [("tail_fraction", a.tail_fraction), ("spectral_fraction", a.spectral_fraction)] {
        if let Some(x) = v {
            if !(x > 0.0 && x <= 1.0) {
                return Err(Error::Config(format!("{label} must lie in (0, 1]")));
            }
        }
    }
    let truncation = a.truncation.unwrap_or(integrator.horizon);
    if !(truncation > 0.0) || truncation > integrator.horizon {
        return Err(Error::Config(format!(
            "analysis truncation {truncation} must lie in (0, horizon = {}]",
            integrator.horizon
        )));
    }
    let analysis = AnalysisSettings {
        report: ReportOptions {
            tail_fraction: a.tail_fraction.unwrap_or(0.25),
            spectral_fraction: a.spectral_fraction.unwrap_or(0.5),
            band_epsilon: a.band_epsilon,
        },
        search: SearchOptions {
            box_halfwidth: a.search_box.unwrap_or(5.0),
            n_starts: a.n_starts.unwrap_or(64 * n),
            newton_tol: a.newton_tol.unwrap_or(1e-10),
            dedup_tol: a.dedup_tol.unwrap_or(1e-6),
            max_iters: 100,
        },
        truncation,
    };

    let dtau = file.gle.dtau.unwrap_or(integrator.dt);
    if (dtau - integrator.dt).abs() > 1e-12 * integrator.dt {
        return Err(Error::Config(format!(
            "gle.dtau = {dtau} must equal integrator.dt = {} for the reduced runs",
            integrator.dt
        )));
    }
    let tau_max: Vec<f64> = system
        .net()
        .thermostats()
        .iter()
        .map(|t| file.gle.tau_max.unwrap_or_else(|| kernel::default_tau_max(&t.coupling)))
        .collect();
    let gle = GleSettings { dtau, tau_max, tail_tol: file.gle.tail_tol.unwrap_or(1e-8) };

    let mut warnings = Vec::new();
    let closure = system.net().controllability_closure();
    if closure.len() != n {
        warnings.push(format!(
            "controllability closure covers only {} of {} vertices; the \
             convergence statements are not guaranteed for this network",
            closure.len(),
            n
        ));
    }

    Ok(Scenario {
        name: file.name,
        seed: file.seed,
        system,
        bath_init,
        q0: file.initial.q,
        p0: file.initial.p,
        integrator,
        analysis,
        gle,
        out_dir: file.output.dir.map(PathBuf::from),
        warnings,
        source,
    })
}

fn parse_edge_key(key: &str) -> Option<(u32, u32)> {
    let (a, b) = key.split_once('-')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

/// Bundled scenario presets, embedded at compile time. `chain3_center` is a
/// deliberate negative fixture: its coupled set cannot control the chain,
/// so parsing reports a warning.
pub const PRESET_NAMES: [&str; 10] = [
    "single1",
    "single1_gle",
    "chain3",
    "chain3_refined",
    "chain3_center",
    "chain5",
    "star4",
    "tree7",
    "twobath_sym",
    "twobath_asym",
];

pub fn preset(name: &str) -> Option<&'static str> {
    match name {
        "single1" => Some(include_str!("../../../presets/single1.toml")),
        "single1_gle" => Some(include_str!("../../../presets/single1_gle.toml")),
        "chain3" => Some(include_str!("../../../presets/chain3.toml")),
        "chain3_refined" => Some(include_str!("../../../presets/chain3_refined.toml")),
        "chain3_center" => Some(include_str!("../../../presets/chain3_center.toml")),
        "chain5" => Some(include_str!("../../../presets/chain5.toml")),
        "star4" => Some(include_str!("../../../presets/star4.toml")),
        "tree7" => Some(include_str!("../../../presets/tree7.toml")),
        "twobath_sym" => Some(include_str!("../../../presets/twobath_sym.toml")),
        "twobath_asym" => Some(include_str!("../../../presets/twobath_asym.toml")),
        _ => None,
    }
}

/// Parse a bundled preset by name.
pub fn from_preset(name: &str) -> Result<Scenario> {
    let src = preset(name)
        .ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))?;
    parse_scenario_str(src, &format!("preset:{name}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain3_preset_parses_and_satisfies_a5() {
        let sc = from_preset("chain3").unwrap();
        assert_eq!(sc.system.net().n(), 3);
        assert_eq!(sc.system.n_thermostats(), 2);
        assert!(sc.warnings.is_empty(), "{:?}", sc.warnings);
        assert_eq!(sc.system.net().controllability_closure().len(), 3);
    }

    #[test]
    fn center_fixture_warns_but_parses() {
        let sc = from_preset("chain3_center").unwrap();
        assert_eq!(sc.warnings.len(), 1);
        assert!(sc.warnings[0].contains("controllability"));
    }

    #[test]
    fn every_preset_parses() {
        for name in PRESET_NAMES {
            let sc = from_preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!sc.name.is_empty());
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let src = preset("single1").unwrap().replace("[grid]", "typo_key = 1\n[grid]");
        let err = parse_scenario_str(&src, "test").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(err.to_string().contains("typo_key"), "{err}");
    }

    #[test]
    fn syntax_error_carries_line_number() {
        let src = "name = \"x\"\nbroken [ = 1\n";
        let err = parse_scenario_str(src, "test").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn horizon_past_guard_is_a_hard_error() {
        let src = preset("chain3").unwrap().replace("horizon = 200.0", "horizon = 220.0");
        let err = parse_scenario_str(&src, "test").unwrap_err();
        assert!(err.to_string().contains("recurrence"), "{err}");
    }

    #[test]
    fn initial_length_mismatch_is_rejected() {
        let src = preset("chain3").unwrap().replace("q = [", "q = [0.5, ");
        assert!(parse_scenario_str(&src, "test").is_err());
    }

    #[test]
    fn misaligned_sampling_is_rejected() {
        let src = preset("chain3").unwrap().replace("sample_every = 10", "sample_every = 3");
        let err = parse_scenario_str(&src, "test").unwrap_err();
        assert!(err.to_string().contains("multiple"), "{err}");
    }
}
