//! JSON-configured experiments with artifact manifests.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dynamics::{self, DiagnosticRecord, SolverConfig};
use crate::error::{Error, Result};
use crate::families::{self, FamilyReport, FamilySpec, ReportConfig, SpurtSpec};
use crate::flows::{self, FlowPreset};
use crate::grid::{write_vector_dump, GridSpec};
use crate::uniqueness::{self, GronwallConstants};
use crate::velocity_recovery::{self, BoxGreenSpec, BumpStudyLevel, QuadratureRule};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Invariants,
    BiotSavart,
    ExactFamilies,
    Uniqueness,
    GreenFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    /// Initial vorticity for `simulate`, `invariants` and `uniqueness`.
    #[serde(default)]
    pub initial: Option<FlowPreset>,
    #[serde(default)]
    pub family: Option<FamilySection>,
    #[serde(default)]
    pub invariants: Option<InvariantsSection>,
    #[serde(default)]
    pub biot_savart: Option<BiotSavartSection>,
    #[serde(default)]
    pub uniqueness: Option<UniquenessSection>,
    #[serde(default)]
    pub green: Option<GreenSection>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Replaces the seed of random initial fields and drives random sampling.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    pub report: ReportConfig,
    #[serde(default)]
    pub families: Vec<FamilySpec>,
    #[serde(default)]
    pub spurts: Vec<SpurtSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantsSection {
    /// Each value replaces `solver.mollify_delta` for one run.
    #[serde(default)]
    pub mollify_deltas: Vec<f64>,
    #[serde(default = "default_invariant_tol")]
    pub tolerance: f64,
}

fn default_invariant_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiotSavartSection {
    #[serde(default = "default_resolutions")]
    pub resolutions: Vec<usize>,
    #[serde(default)]
    pub rule: QuadratureRule,
}

fn default_resolutions() -> Vec<usize> {
    vec![16, 32, 64]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub mode: [i64; 3],
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessSection {
    /// Second field is the first plus this mode.
    pub perturbation: Perturbation,
    #[serde(default)]
    pub constants: GronwallConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenSection {
    #[serde(rename = "box")]
    pub box_spec: BoxGreenSpec,
    #[serde(default = "default_green_samples")]
    pub samples: usize,
}

fn default_green_samples() -> usize {
    100
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::ConfigInvalid(msg.into())
}

fn require<'a, T>(v: &'a Option<T>, name: &str, kind: ExperimentKind) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| invalid(format!("experiment {kind:?} needs a `{name}` section")))
}

impl ExperimentConfig {
    pub fn from_value(v: Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| invalid(e.to_string()))
    }

    /// Checks every section the experiment uses, without computing anything.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let k = self.experiment;
        let wrap = |name: &str, r: Result<()>| r.map_err(|e| invalid(format!("{name}: {e}")));
        match k {
            ExperimentKind::Simulate | ExperimentKind::Invariants | ExperimentKind::Uniqueness => {
                let grid = require(&self.grid, "grid", k)?;
                wrap("grid", grid.validate())?;
                if !grid.is_periodic() {
                    return Err(invalid("grid: time stepping needs a Periodic grid"));
                }
                wrap("solver", require(&self.solver, "solver", k)?.validate())?;
                if let FlowPreset::Random { kmax, .. } = require(&self.initial, "initial", k)? {
                    let nmin = grid.nx.min(grid.ny).min(grid.nz);
                    if *kmax == 0 || 2 * kmax >= nmin {
                        return Err(invalid(format!(
                            "initial: kmax = {kmax} must be in 1..{}",
                            nmin / 2
                        )));
                    }
                }
            }
            _ => {}
        }
        match k {
            ExperimentKind::Invariants => {
                if let Some(s) = &self.invariants {
                    if !s.mollify_deltas.iter().all(|d| d.is_finite() && *d >= 0.0) {
                        return Err(invalid(
                            "invariants: mollify_deltas must be finite and >= 0",
                        ));
                    }
                    if !(s.tolerance > 0.0) {
                        return Err(invalid("invariants: tolerance must be > 0"));
                    }
                }
            }
            ExperimentKind::Uniqueness => {
                let s = require(&self.uniqueness, "uniqueness", k)?;
                wrap("uniqueness.constants", s.constants.validate())?;
                if s.perturbation.mode == [0; 3] || !s.perturbation.amplitude.is_finite() {
                    return Err(invalid(
                        "uniqueness.perturbation needs a nonzero mode and finite amplitude",
                    ));
                }
            }
            ExperimentKind::ExactFamilies => {
                let s = require(&self.family, "family", k)?;
                wrap("family.report", s.report.validate())?;
                for f in &s.families {
                    wrap(&format!("family {}", f.name()), f.validate())?;
                }
                for sp in &s.spurts {
                    wrap("spurt", sp.validate())?;
                }
                if s.families.is_empty() && s.spurts.is_empty() {
                    return Err(invalid("family: no families or spurts given"));
                }
            }
            ExperimentKind::BiotSavart => {
                let r = self
                    .biot_savart
                    .as_ref()
                    .map(|s| s.resolutions.clone())
                    .unwrap_or_else(default_resolutions);
                if r.is_empty() || r.iter().any(|&n| n < 5) {
                    return Err(invalid(
                        "biot_savart.resolutions must be nonempty with every entry >= 5",
                    ));
                }
            }
            ExperimentKind::GreenFunction => {
                let s = require(&self.green, "green", k)?;
                wrap("green.box", s.box_spec.validate())?;
            }
            _ => {}
        }
        Ok(())
    }
}

/// Sets `key` (dotted path, numeric segments index arrays) to `value`, parsed as JSON
/// when possible and as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| invalid(format!("override `{assignment}` is not key=value")))?;
    if key.is_empty() {
        return Err(invalid(format!("override `{assignment}` has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| invalid(format!("override `{key}`: `{part}` is not an index")))?;
                items
                    .get_mut(idx)
                    .ok_or_else(|| invalid(format!("override `{key}`: index {idx} out of range")))?
            }
            Value::Object(map) => map.entry(part.to_string()).or_insert(Value::Null),
            slot @ Value::Null => {
                *slot = Value::Object(Default::default());
                slot.as_object_mut()
                    .unwrap()
                    .entry(part.to_string())
                    .or_insert(Value::Null)
            }
            _ => {
                return Err(invalid(format!(
                    "override `{key}`: `{part}` is inside a non-object value"
                )))
            }
        };
        if last {
            *cur = value;
            return Ok(());
        }
    }
    unreachable!()
}

/// Reads a config file and applies overrides; returns the effective JSON and its parse.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<(Value, ExperimentConfig)> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let cfg = ExperimentConfig::from_value(value.clone())?;
    Ok((value, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: ExperimentKind,
    pub status: String,
    #[serde(default)]
    pub message: Option<String>,
    pub config: Value,
    pub artifacts: Vec<ArtifactEntry>,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    pub threads: usize,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed,
    /// Numerical divergence; partial artifacts were kept.
    Aborted(String),
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Completed => 0,
            Outcome::Aborted(_) => 2,
        }
    }
}

/// Exit status for an error: 2 for numerical failures, 1 for everything else.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::NumericalAbort { .. } | Error::CflExceeded { .. } | Error::NonFinite { .. } => 2,
        _ => 1,
    }
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
    ) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn entries(&self) -> Result<Vec<ArtifactEntry>> {
        self.files
            .iter()
            .map(|name| {
                let bytes = fs::read(self.dir.join(name))?;
                Ok(ArtifactEntry {
                    path: name.clone(),
                    sha256: sha256_hex(&bytes),
                    bytes: bytes.len() as u64,
                })
            })
            .collect()
    }
}

/// Runs a validated experiment into `out_dir` and writes the manifest last. Numerical
/// aborts still produce a manifest that lists the partial artifacts.
pub fn run_experiment(
    effective: &Value,
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<Outcome> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let mut art = Artifacts {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    let result = match cfg.experiment {
        ExperimentKind::Simulate => simulate(cfg, &mut art),
        ExperimentKind::Invariants => invariants(cfg, &mut art),
        ExperimentKind::BiotSavart => biot_savart(cfg, &mut art),
        ExperimentKind::ExactFamilies => exact_families(cfg, &mut art),
        ExperimentKind::Uniqueness => paired(cfg, &mut art),
        ExperimentKind::GreenFunction => green(cfg, &mut art),
    };
    let (status, message) = match &result {
        Ok(Outcome::Completed) => ("completed", None),
        Ok(Outcome::Aborted(m)) => ("aborted", Some(m.clone())),
        Err(e) if error_exit_code(e) == 2 => ("aborted", Some(e.to_string())),
        Err(e) => ("failed", Some(e.to_string())),
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: cfg.experiment,
        status: status.into(),
        message,
        config: effective.clone(),
        artifacts: art.entries()?,
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    };
    let mut w = BufWriter::new(File::create(out_dir.join(MANIFEST_NAME))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    writeln!(w)?;
    w.flush()?;
    result
}

fn initial_field(
    cfg: &ExperimentConfig,
) -> Result<(GridSpec, SolverConfig, crate::grid::VectorField)> {
    let k = cfg.experiment;
    let grid = *require(&cfg.grid, "grid", k)?;
    let solver = *require(&cfg.solver, "solver", k)?;
    let w0 = require(&cfg.initial, "initial", k)?.vorticity(grid, cfg.seed)?;
    Ok((grid, solver, w0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mollify_delta: f64,
    pub steps: usize,
    pub final_time: f64,
    pub abort: Option<String>,
    pub resolution_loss_time: Option<f64>,
    pub cfl_warnings: usize,
    pub relative_energy_drift: f64,
    pub max_abs_int_v: f64,
    /// Largest `|int d^a V|` over the nine spatial multi-indices.
    pub max_abs_moment: f64,
}

fn summarize(out: &dynamics::RunOutput, delta: f64) -> RunSummary {
    let r = &out.records;
    let e0 = r[0].energy;
    let drift = r
        .iter()
        .map(|x| ((x.energy - e0) / e0).abs())
        .fold(0.0, f64::max);
    RunSummary {
        mollify_delta: delta,
        steps: out.steps,
        final_time: out.final_time,
        abort: out.abort.clone(),
        resolution_loss_time: out.resolution_loss_time,
        cfl_warnings: out.cfl_warnings,
        relative_energy_drift: if e0 > 0.0 { drift } else { 0.0 },
        max_abs_int_v: r
            .iter()
            .map(|x| x.total_vorticity_integral.abs())
            .fold(0.0, f64::max),
        max_abs_moment: r
            .iter()
            .flat_map(|x| x.moment_integrals)
            .map(f64::abs)
            .fold(0.0, f64::max),
    }
}

fn write_diagnostics(art: &mut Artifacts, name: &str, records: &[DiagnosticRecord]) -> Result<()> {
    art.write(name, |w| dynamics::write_diagnostics_csv(w, records))
}

fn simulate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    let (_, solver, w0) = initial_field(cfg)?;
    let mut dumps = Vec::new();
    let out = dynamics::run(&w0, &solver, |step, _, s| {
        let name = format!("snapshots/vorticity_{step:06}.bin");
        let w = s.vorticity();
        dumps.push((name, w));
        Ok(())
    });
    for (name, w) in &dumps {
        art.write(name, |f| write_vector_dump(f, w))?;
    }
    let out = out?;
    write_diagnostics(art, "diagnostics.csv", &out.records)?;
    let summary = summarize(&out, solver.mollify_delta);
    art.json("summary.json", &summary)?;
    Ok(match out.abort {
        Some(m) => Outcome::Aborted(m),
        None => Outcome::Completed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantsReport {
    pub tolerance: f64,
    pub runs: Vec<RunSummary>,
    pub within_tolerance: bool,
    /// Largest difference of `int V` and its moments between any run and the first one.
    pub max_cross_run_difference: f64,
}

fn invariants(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    let (_, solver, w0) = initial_field(cfg)?;
    let section = cfg.invariants.clone().unwrap_or(InvariantsSection {
        mollify_deltas: vec![],
        tolerance: 1e-12,
    });
    let deltas = if section.mollify_deltas.is_empty() {
        vec![solver.mollify_delta]
    } else {
        section.mollify_deltas
    };
    let mut runs = Vec::new();
    let mut first: Option<Vec<DiagnosticRecord>> = None;
    let mut cross: f64 = 0.0;
    let mut abort = None;
    for &d in &deltas {
        let sc = SolverConfig {
            mollify_delta: d,
            ..solver
        };
        let out = dynamics::run(&w0, &sc, |_, _, _| Ok(()))?;
        let name = if deltas.len() == 1 {
            "diagnostics.csv".to_string()
        } else {
            format!("diagnostics_delta_{d}.csv")
        };
        write_diagnostics(art, &name, &out.records)?;
        match &first {
            None => first = Some(out.records.clone()),
            Some(f) => {
                for (a, b) in f.iter().zip(&out.records) {
                    cross =
                        cross.max((a.total_vorticity_integral - b.total_vorticity_integral).abs());
                    for (x, y) in a.moment_integrals.iter().zip(&b.moment_integrals) {
                        cross = cross.max((x - y).abs());
                    }
                }
            }
        }
        if abort.is_none() {
            abort = out.abort.clone();
        }
        runs.push(summarize(&out, d));
    }
    let within = runs
        .iter()
        .all(|r| r.max_abs_int_v <= section.tolerance && r.max_abs_moment <= section.tolerance);
    art.json(
        "invariants.json",
        &InvariantsReport {
            tolerance: section.tolerance,
            runs,
            within_tolerance: within,
            max_cross_run_difference: cross,
        },
    )?;
    Ok(match abort {
        Some(m) => Outcome::Aborted(m),
        None => Outcome::Completed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiotSavartReport {
    pub levels: Vec<BumpStudyLevel>,
    pub divergence_orders: Vec<f64>,
    pub error_orders: Vec<f64>,
}

fn biot_savart(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    let s = cfg.biot_savart.clone().unwrap_or(BiotSavartSection {
        resolutions: default_resolutions(),
        rule: Default::default(),
    });
    let levels = velocity_recovery::bump_convergence_study(&s.resolutions, s.rule)?;
    let report = BiotSavartReport {
        divergence_orders: velocity_recovery::observed_orders(&levels, |l| l.max_divergence),
        error_orders: velocity_recovery::observed_orders(&levels, |l| l.max_error),
        levels,
    };
    art.write("biot_savart.csv", |w| {
        writeln!(w, "n,h,max_divergence,max_error")?;
        for l in &report.levels {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e}",
                l.n, l.h, l.max_divergence, l.max_error
            )?;
        }
        Ok(())
    })?;
    art.json("biot_savart.json", &report)?;
    Ok(Outcome::Completed)
}

fn exact_families(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    let s = require(&cfg.family, "family", cfg.experiment)?;
    let mut reports: Vec<FamilyReport> = Vec::new();
    for f in &s.families {
        reports.push(families::family_residual_report(f, &s.report)?);
    }
    for sp in &s.spurts {
        reports.push(families::spurt_residual_report(sp, &s.report)?);
    }
    art.json("families.json", &reports)?;
    art.write("families.csv", |w| {
        writeln!(w, "{}", families::REPORT_CSV_HEADER)?;
        for r in &reports {
            r.write_csv_rows(&mut *w)?;
        }
        Ok(())
    })?;
    Ok(Outcome::Completed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessSummary {
    pub samples: usize,
    pub all_satisfied: bool,
    /// Largest `phi_norm_sq / bound` over samples with a positive bound.
    pub max_bound_ratio: f64,
    pub final_phi_norm_sq: f64,
    pub final_bound: f64,
    pub abort: Option<String>,
    pub constants: GronwallConstants,
}

fn paired(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    let (grid, solver, w1) = initial_field(cfg)?;
    let s = require(&cfg.uniqueness, "uniqueness", cfg.experiment)?;
    let w2 = w1.add(&flows::single_mode(
        grid,
        s.perturbation.mode,
        s.perturbation.amplitude,
    )?)?;
    let out = uniqueness::run_paired(&w1, &w2, &solver, &s.constants)?;
    art.write("gronwall.csv", |w| {
        uniqueness::write_trace_csv(w, &out.trace)
    })?;
    let last = out.trace.last().copied();
    let summary = UniquenessSummary {
        samples: out.trace.len(),
        all_satisfied: out.trace.iter().all(|r| r.satisfied),
        max_bound_ratio: out
            .trace
            .iter()
            .filter(|r| r.bound > 0.0)
            .map(|r| r.phi_norm_sq / r.bound)
            .fold(0.0, f64::max),
        final_phi_norm_sq: last.map_or(0.0, |r| r.phi_norm_sq),
        final_bound: last.map_or(0.0, |r| r.bound),
        abort: out.abort.clone(),
        constants: s.constants,
    };
    art.json("uniqueness.json", &summary)?;
    Ok(match out.abort {
        Some(m) => Outcome::Aborted(m),
        None => Outcome::Completed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenReport {
    pub box_spec: BoxGreenSpec,
    pub samples: usize,
    /// Largest `|G(x, x') - G(x', x)|`.
    pub box_symmetry_max: f64,
    /// Largest `|G|` with `x` on a face.
    pub box_face_max: f64,
    pub box_tail_max: f64,
    /// Largest `|G_c|` with `x` on the wall `z = 0`.
    pub halfspace_wall_max: f64,
}

fn green(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    let s = require(&cfg.green, "green", cfg.experiment)?;
    let b = s.box_spec;
    let l = b.lengths();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(0));
    let interior = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        std::array::from_fn(|a| l[a] * rng.random_range(0.01..0.99))
    };
    let mut rows = Vec::with_capacity(s.samples);
    let (mut sym, mut face, mut tail, mut wall): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..s.samples {
        let x = interior(&mut rng);
        let xp = interior(&mut rng);
        let g = velocity_recovery::box_green(x, xp, &b)?;
        let gt = velocity_recovery::box_green(xp, x, &b)?;
        sym = sym.max((g.value - gt.value).abs());
        tail = tail.max(g.tail_estimate);
        let mut xf = x;
        xf[i % 3] = if (i / 3) % 2 == 0 { 0.0 } else { l[i % 3] };
        face = face.max(velocity_recovery::box_green(xf, xp, &b)?.value.abs());
        let wall_point = [
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            0.0,
        ];
        let source = [
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(0.05..5.0),
        ];
        wall = wall.max(velocity_recovery::halfspace_green(wall_point, source).abs());
        rows.push((x, xp, g));
    }
    art.write("green_samples.csv", |w| {
        writeln!(w, "x,y,z,xp,yp,zp,value,tail_estimate")?;
        for (x, xp, g) in &rows {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                x[0], x[1], x[2], xp[0], xp[1], xp[2], g.value, g.tail_estimate
            )?;
        }
        Ok(())
    })?;
    art.json(
        "green.json",
        &GreenReport {
            box_spec: b,
            samples: s.samples,
            box_symmetry_max: sym,
            box_face_max: face,
            box_tail_max: tail,
            halfspace_wall_max: wall,
        },
    )?;
    Ok(Outcome::Completed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn simulate_json() -> Value {
        json!({
            "schema_version": 1,
            "experiment": "simulate",
            "grid": {"nx": 8, "ny": 8, "nz": 8, "lx": 6.283185307179586, "ly": 6.283185307179586,
                     "lz": 6.283185307179586, "domain_kind": "Periodic"},
            "solver": {"dt": 0.01, "t_end": 0.05, "diag_every": 1},
            "initial": {"kind": "abc"}
        })
    }

    #[test]
    fn overrides_set_nested_keys() {
        let mut v = simulate_json();
        apply_override(&mut v, "solver.dt=0.002").unwrap();
        apply_override(&mut v, "grid.domain_kind=Periodic").unwrap();
        apply_override(&mut v, "uniqueness.perturbation.mode=[1,0,0]").unwrap();
        assert_eq!(v["solver"]["dt"], json!(0.002));
        assert_eq!(v["grid"]["domain_kind"], json!("Periodic"));
        assert_eq!(v["uniqueness"]["perturbation"]["mode"], json!([1, 0, 0]));
        assert!(apply_override(&mut v, "solver.dt.x=1").is_err());
        assert!(apply_override(&mut v, "nokey").is_err());
    }

    #[test]
    fn odd_grid_is_rejected_by_name() {
        let mut v = simulate_json();
        apply_override(&mut v, "grid.nx=5").unwrap();
        let e = ExperimentConfig::from_value(v)
            .unwrap()
            .validate()
            .unwrap_err();
        assert!(matches!(e, Error::ConfigInvalid(_)));
        assert!(e.to_string().contains("even"), "{e}");
        assert_eq!(error_exit_code(&e), 1);
    }

    #[test]
    fn unknown_fields_and_versions_are_rejected() {
        let mut v = simulate_json();
        v["bogus"] = json!(1);
        assert!(ExperimentConfig::from_value(v).is_err());
        let mut v = simulate_json();
        v["schema_version"] = json!(2);
        assert!(ExperimentConfig::from_value(v).unwrap().validate().is_err());
    }

    #[test]
    fn simulate_writes_manifest_with_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let v = simulate_json();
        let cfg = ExperimentConfig::from_value(v.clone()).unwrap();
        assert_eq!(
            run_experiment(&v, &cfg, dir.path()).unwrap(),
            Outcome::Completed
        );
        let m: Manifest =
            serde_json::from_slice(&fs::read(dir.path().join(MANIFEST_NAME)).unwrap()).unwrap();
        assert_eq!(m.status, "completed");
        assert_eq!(m.config, v);
        for a in &m.artifacts {
            let bytes = fs::read(dir.path().join(&a.path)).unwrap();
            assert_eq!(sha256_hex(&bytes), a.sha256);
        }
        assert!(m.artifacts.iter().any(|a| a.path == "diagnostics.csv"));
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
