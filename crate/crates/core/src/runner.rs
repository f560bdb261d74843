//! Scenario runner: executes direct and/or reduced simulations, the
//! analyses, and writes the artifact set (CSV trajectories, kernel and
//! bath dumps, JSON reports, a hash manifest).
//!
//! Artifacts are staged in a `<dir>.partial` directory and swapped in on
//! success, so a failed run never leaves a half-written output directory.
//! All payloads are byte-deterministic for a given scenario; the manifest's
//! `created_unix_ms` is the single wall-clock field and is excluded from
//! hashing/comparison.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{
    convergence_report, equilibrium_defect, find_critical_points, CriticalSet, TwoBathReport,
};
use crate::dynamics::{simulate, FullState, Trajectory, TrajectoryMeta};
use crate::error::{Error, Result};
use crate::kernel::{build_kernel, integrate_gle, MemoryKernel};
use crate::network::validate_assumptions;
use crate::scenario::Scenario;
use crate::thermostat::recurrence_horizon;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    Direct,
    Gle,
    Both,
    AnalyzeOnly,
}

impl std::str::FromStr for RunMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(RunMode::Direct),
            "gle" => Ok(RunMode::Gle),
            "both" => Ok(RunMode::Both),
            "analyze-only" => Ok(RunMode::AnalyzeOnly),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected direct|gle|both|analyze-only)"
            ))),
        }
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunMode::Direct => "direct",
            RunMode::Gle => "gle",
            RunMode::Both => "both",
            RunMode::AnalyzeOnly => "analyze-only",
        })
    }
}

/// Where the artifacts went and what was written.
#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

/// Default output root: $OSCIBATH_OUT or ./out.
pub fn output_root() -> PathBuf {
    std::env::var_os("OSCIBATH_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

fn resolve_dir(scenario: &Scenario, out_override: Option<&Path>) -> PathBuf {
    match (out_override, &scenario.out_dir) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => p.clone(),
        (None, None) => output_root().join(&scenario.name),
    }
}

/// Lossless decimal formatting for f64 (17 significant digits).
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct Staging {
    dir: PathBuf,
    files: Vec<(String, String)>, // (name, sha256)
}

impl Staging {
    fn create(final_dir: &Path) -> Result<Self> {
        let dir = final_dir.with_extension("partial");
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(Staging { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, payload: &str) -> Result<()> {
        let path = self.dir.join(name);
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        f.write_all(payload.as_bytes()).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.files.push((name.to_string(), sha256_hex(payload.as_bytes())));
        Ok(())
    }

    /// Replace `final_dir` with the staged contents.
    fn commit(self, final_dir: &Path) -> Result<()> {
        if final_dir.exists() {
            std::fs::remove_dir_all(final_dir)
                .map_err(|e| Error::io(final_dir.display().to_string(), e))?;
        }
        if let Some(parent) = final_dir.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)
                    .map_err(|e| Error::io(parent.display().to_string(), e))?;
            }
        }
        std::fs::rename(&self.dir, final_dir)
            .map_err(|e| Error::io(final_dir.display().to_string(), e))
    }

    fn abort(self) {
        let _ = std::fs::remove_dir_all(&self.dir);
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Serialize)]
struct ManifestFile {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    scenario: String,
    mode: String,
    seed: u64,
    config_sha256: String,
    /// wall clock; excluded from determinism comparisons
    created_unix_ms: u128,
    files: Vec<ManifestFile>,
}

/// Trajectory CSV: `t,q_<id>..,p_<id>..,E,E_<m>..,phi_<m>..` with 17
/// significant digits per value.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut header = String::from("t");
    for v in &traj.meta.vertex_ids {
        let _ = write!(header, ",q_{v}");
    }
    for v in &traj.meta.vertex_ids {
        let _ = write!(header, ",p_{v}");
    }
    header.push_str(",E");
    for m in 1..=traj.meta.n_thermostats {
        let _ = write!(header, ",E_{m}");
    }
    for m in 1..=traj.meta.n_thermostats {
        let _ = write!(header, ",phi_{m}");
    }
    let mut out = header;
    out.push('\n');
    for i in 0..traj.times.len() {
        let mut row = fmt_f64(traj.times[i]);
        for x in traj.q[i].iter().chain(&traj.p[i]) {
            let _ = write!(row, ",{}", fmt_f64(*x));
        }
        let _ = write!(row, ",{}", fmt_f64(traj.energy[i]));
        for x in &traj.bath_energy[i] {
            let _ = write!(row, ",{}", fmt_f64(*x));
        }
        for x in &traj.phi[i] {
            let _ = write!(row, ",{}", fmt_f64(*x));
        }
        out.push_str(&row);
        out.push('\n');
    }
    out
}

/// Parse a trajectory CSV produced by [`trajectory_csv`] back, rebuilding
/// the metadata from the scenario it was generated from.
pub fn parse_trajectory_csv(content: &str, scenario: &Scenario) -> Result<Trajectory> {
    let sys = &scenario.system;
    let nv = sys.net().n();
    let nm = sys.n_thermostats();
    let mut lines = content.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty trajectory CSV".into()))?;
    let expected_cols = 1 + 2 * nv + 1 + 2 * nm;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() != expected_cols {
        return Err(Error::Config(format!(
            "trajectory CSV has {} columns, scenario expects {expected_cols}",
            cols.len()
        )));
    }
    let mut traj = Trajectory {
        times: Vec::new(),
        q: Vec::new(),
        p: Vec::new(),
        bath_energy: Vec::new(),
        phi: Vec::new(),
        energy: Vec::new(),
        eta_energy: None,
        final_state: None,
        meta: TrajectoryMeta {
            vertex_ids: sys.net().vertices().to_vec(),
            n_thermostats: nm,
            thermostat_vertex: (0..nm).map(|m| sys.thermostat_vertex_index(m)).collect(),
            dt: scenario.integrator.dt,
            sample_dt: scenario.integrator.dt * scenario.integrator.sample_every as f64,
            horizon: scenario.integrator.horizon,
            recurrence_horizon: recurrence_horizon(sys.grid()),
            scheme: scenario.integrator.scheme,
        },
    };
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    Error::Config(format!("trajectory CSV line {}: bad number '{s}'", lineno + 2))
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() != expected_cols {
            return Err(Error::Config(format!(
                "trajectory CSV line {}: {} fields, expected {expected_cols}",
                lineno + 2,
                vals.len()
            )));
        }
        let mut it = vals.into_iter();
        traj.times.push(it.next().unwrap());
        traj.q.push((&mut it).take(nv).collect());
        traj.p.push((&mut it).take(nv).collect());
        traj.energy.push(it.next().unwrap());
        traj.bath_energy.push((&mut it).take(nm).collect());
        traj.phi.push((&mut it).take(nm).collect());
    }
    if traj.times.len() < 2 {
        return Err(Error::Config("trajectory CSV has fewer than 2 samples".into()));
    }
    let h = traj.times[1] - traj.times[0];
    if (h - traj.meta.sample_dt).abs() > 1e-9 * traj.meta.sample_dt {
        return Err(Error::Config(format!(
            "trajectory CSV sample spacing {h} does not match the scenario's {}",
            traj.meta.sample_dt
        )));
    }
    Ok(traj)
}

fn bath_csv(state: &FullState, sys: &crate::dynamics::System, m: usize) -> String {
    let mut out = String::from("nu,xi,xidot\n");
    let grid = sys.grid();
    for k in 0..grid.count() {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_f64(grid.nodes()[k]),
            fmt_f64(state.baths[m].xi[k]),
            fmt_f64(state.baths[m].xidot[k])
        );
    }
    out
}

fn kernel_csv(ker: &MemoryKernel) -> String {
    let mut out = String::from("tau,w\n");
    for (i, w) in ker.w.iter().enumerate() {
        let _ = writeln!(out, "{},{}", fmt_f64(i as f64 * ker.dtau), fmt_f64(*w));
    }
    out
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct OracleDiff {
    sup_abs_dq: f64,
    at_time: f64,
    samples_compared: usize,
    horizon: f64,
}

fn oracle_diff(direct: &Trajectory, reduced: &Trajectory) -> OracleDiff {
    let mut sup = 0.0f64;
    let mut at = 0.0f64;
    let n = direct.times.len().min(reduced.times.len());
    for i in 0..n {
        for v in 0..direct.meta.vertex_ids.len() {
            let d = (direct.q[i][v] - reduced.q[i][v]).abs();
            if d > sup {
                sup = d;
                at = direct.times[i];
            }
        }
    }
    OracleDiff { sup_abs_dq: sup, at_time: at, samples_compared: n, horizon: direct.meta.horizon }
}

fn critical_set_csv(cs: &CriticalSet, nv: usize) -> String {
    let mut out = String::from("point");
    for j in 0..nv {
        let _ = write!(out, ",q{j}");
    }
    out.push_str(",morse_index,min_abs_eigenvalue\n");
    for (i, p) in cs.points.iter().enumerate() {
        let _ = write!(out, "{i}");
        for x in &p.q {
            let _ = write!(out, ",{}", fmt_f64(*x));
        }
        let _ = writeln!(out, ",{},{}", p.morse_index, fmt_f64(p.hessian_min_abs_eigenvalue));
    }
    out
}

fn build_kernels(scenario: &Scenario) -> Result<Vec<MemoryKernel>> {
    scenario
        .system
        .net()
        .thermostats()
        .iter()
        .enumerate()
        .map(|(m, t)| {
            build_kernel(&t.coupling, scenario.gle.dtau, scenario.gle.tau_max[m], scenario.gle.tail_tol)
        })
        .collect()
}

fn two_bath_report(
    scenario: &Scenario,
    init: &FullState,
    traj: &Trajectory,
    cs: &CriticalSet,
) -> Result<Option<TwoBathReport>> {
    if scenario.system.two_bath_pair().is_none() || scenario.system.net().n() != 1 {
        return Ok(None);
    }
    equilibrium_defect(&scenario.system, init, traj, cs, scenario.analysis.truncation).map(Some)
}

/// Execute a scenario and write its artifact directory. Returns the final
/// directory and the list of files written (manifest last).
pub fn run(scenario: &Scenario, mode: RunMode, out_override: Option<&Path>) -> Result<RunOutcome> {
    let final_dir = resolve_dir(scenario, out_override);
    if mode == RunMode::AnalyzeOnly {
        return analyze_only(scenario, &final_dir);
    }

    let mut staging = Staging::create(&final_dir)?;
    let result = run_into(scenario, mode, &mut staging);
    match result {
        Ok(()) => {
            let files: Vec<String> = staging.files.iter().map(|(n, _)| n.clone()).collect();
            let manifest = Manifest {
                scenario: scenario.name.clone(),
                mode: mode.to_string(),
                seed: scenario.seed,
                config_sha256: sha256_hex(scenario.source.as_bytes()),
                created_unix_ms: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_millis())
                    .unwrap_or(0),
                files: staging
                    .files
                    .iter()
                    .map(|(path, sha256)| ManifestFile { path: path.clone(), sha256: sha256.clone() })
                    .collect(),
            };
            let payload = to_json(&manifest)?;
            staging.write("manifest.json", &payload)?;
            staging.commit(&final_dir)?;
            let mut files = files;
            files.push("manifest.json".into());
            Ok(RunOutcome { dir: final_dir, files })
        }
        Err(e) => {
            staging.abort();
            Err(e)
        }
    }
}

fn run_into(scenario: &Scenario, mode: RunMode, staging: &mut Staging) -> Result<()> {
    let sys = &scenario.system;
    let init = sys.init_state(scenario.q0.clone(), scenario.p0.clone(), &scenario.bath_init)?;
    let cs = find_critical_points(sys.net(), &sys.k_by_vertex(), scenario.analysis.search);
    staging.write("critical_points.csv", &critical_set_csv(&cs, sys.net().n()))?;
    staging.write(
        "assumptions.json",
        &to_json(&validate_assumptions(sys.net(), sys.k_per_thermostat()))?,
    )?;

    let mut direct_traj = None;
    if matches!(mode, RunMode::Direct | RunMode::Both) {
        let traj = simulate(sys, &init, &scenario.integrator)?;
        staging.write("trajectory.csv", &trajectory_csv(&traj))?;
        if let Some(final_state) = &traj.final_state {
            for m in 0..sys.n_thermostats() {
                staging.write(&format!("bath_{}.csv", m + 1), &bath_csv(final_state, sys, m))?;
            }
        }
        let report = convergence_report(sys, &traj, &cs, &scenario.analysis.report)?;
        staging.write("report.json", &to_json(&report)?)?;
        if let Some(tb) = two_bath_report(scenario, &init, &traj, &cs)? {
            staging.write("twobath.json", &to_json(&tb)?)?;
        }
        direct_traj = Some(traj);
    }

    if matches!(mode, RunMode::Gle | RunMode::Both) {
        let kernels = build_kernels(scenario)?;
        for (m, ker) in kernels.iter().enumerate() {
            staging.write(&format!("kernel_{}.csv", m + 1), &kernel_csv(ker))?;
        }
        let traj = integrate_gle(sys, &kernels, &init, &scenario.integrator)?;
        staging.write("trajectory_gle.csv", &trajectory_csv(&traj))?;
        let report = convergence_report(sys, &traj, &cs, &scenario.analysis.report)?;
        staging.write("report_gle.json", &to_json(&report)?)?;
        if let Some(direct) = &direct_traj {
            staging.write("oracle_diff.json", &to_json(&oracle_diff(direct, &traj))?)?;
        }
    }
    Ok(())
}

/// Recompute the reports from an existing trajectory.csv; deterministic, so
/// a re-analysis reproduces report.json byte-for-byte.
fn analyze_only(scenario: &Scenario, dir: &Path) -> Result<RunOutcome> {
    let path = dir.join("trajectory.csv");
    let content =
        std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let traj = parse_trajectory_csv(&content, scenario)?;
    let sys = &scenario.system;
    let cs = find_critical_points(sys.net(), &sys.k_by_vertex(), scenario.analysis.search);
    let report = convergence_report(sys, &traj, &cs, &scenario.analysis.report)?;
    let mut files = Vec::new();
    let report_path = dir.join("report.json");
    std::fs::write(&report_path, to_json(&report)?)
        .map_err(|e| Error::io(report_path.display().to_string(), e))?;
    files.push("report.json".to_string());
    if sys.two_bath_pair().is_some() && sys.net().n() == 1 {
        let init = sys.init_state(scenario.q0.clone(), scenario.p0.clone(), &scenario.bath_init)?;
        if let Some(tb) = two_bath_report(scenario, &init, &traj, &cs)? {
            let tb_path = dir.join("twobath.json");
            std::fs::write(&tb_path, to_json(&tb)?)
                .map_err(|e| Error::io(tb_path.display().to_string(), e))?;
            files.push("twobath.json".to_string());
        }
    }
    Ok(RunOutcome { dir: dir.to_path_buf(), files })
}

impl Error {
    /// Process exit code: 2 for configuration errors, 3 for numerical
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::IntegratorFailure { .. } | Error::Quadrature(_) | Error::KernelTail { .. } => 3,
            _ => 2,
        }
    }
}
