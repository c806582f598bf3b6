//! Config-driven experiments: one JSON spec in, CSV/JSON artifacts and a
//! text report out.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::audit::{audit, cell_periodic_multiplier, translation_operator, AuditReport};
use crate::bloch::{free_particle_energies, solve_bands, BlochBasis};
use crate::error::Error;
use crate::lattice::{make_rgrid, LatticeConfig, Mode};
use crate::measurement::{
    coherence_test, estimate_phase, estimate_phase_exact, sample_shots, site_distribution, wrap_angle, CoherenceResult,
    PhaseEstimate, SiteDistribution, COHERENCE_SIGMAS,
};
use crate::state::{hamiltonian, mixture, phased_pair, wannier_projector, QuantumState, StateVector};
use crate::wannier::{check_orthonormality, density_norm, spread, wannier, DEFAULT_POINTS_PER_CELL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Interference,
    Mixture,
    Audit,
    BandStructure,
    WannierProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    /// Band of the first constituent (and of projectors / profiles).
    pub n: usize,
    /// Band of the second constituent.
    pub m: usize,
    pub l1: usize,
    pub l2: usize,
    pub phi: f64,
    /// Projector / profile site, as a position.
    pub r0: f64,
    pub shots: usize,
    pub seed: u64,
    /// Number of consecutive seeds in the sweep, starting at `seed`.
    pub seeds: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n: 0,
            m: 0,
            l1: 0,
            l2: 1,
            phi: 0.0,
            r0: 0.0,
            shots: 10_000,
            seed: 0,
            seeds: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub lattice: LatticeConfig,
    pub scenario: Scenario,
    #[serde(default)]
    pub params: ScenarioParams,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("numerical invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Other(#[from] Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config { .. } => 2,
            RunError::Invariant(_) => 3,
            RunError::Other(_) => 1,
        }
    }
}

fn config_err(field: &str, reason: impl Into<String>) -> RunError {
    RunError::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

impl ExperimentSpec {
    /// Accepts either a spec or a manifest written by [`run`], whose embedded
    /// spec is used.
    pub fn from_value(mut value: Value) -> Result<Self, RunError> {
        if value.get("config_hash").is_some() {
            value = value
                .get("spec")
                .cloned()
                .ok_or_else(|| config_err("spec", "manifest has no embedded spec"))?;
        }
        let spec: Self = serde_json::from_value(value).map_err(|e| config_err(&json_field(&e), e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.lattice.validate().map_err(|e| match e {
            Error::InvalidConfig { field, reason } => config_err(&format!("lattice.{field}"), reason),
            other => RunError::Other(other),
        })?;
        let p = &self.params;
        let (bands, cells) = (self.lattice.n_bands, self.lattice.n_cells);
        if p.n >= bands {
            return Err(config_err("params.n", format!("band {} >= n_bands {bands}", p.n)));
        }
        if p.m >= bands {
            return Err(config_err("params.m", format!("band {} >= n_bands {bands}", p.m)));
        }
        if p.l1 >= cells {
            return Err(config_err("params.l1", format!("k-index {} >= N {cells}", p.l1)));
        }
        if p.l2 >= cells {
            return Err(config_err("params.l2", format!("k-index {} >= N {cells}", p.l2)));
        }
        if !p.phi.is_finite() {
            return Err(config_err("params.phi", "must be finite"));
        }
        make_rgrid(&self.lattice)
            .index_of(p.r0)
            .map_err(|e| config_err("params.r0", e.to_string()))?;
        if p.shots == 0 {
            return Err(config_err("params.shots", "must be >= 1"));
        }
        if p.seeds == 0 {
            return Err(config_err("params.seeds", "must be >= 1"));
        }
        if matches!(self.scenario, Scenario::Interference | Scenario::Mixture) && p.l1 == p.l2 {
            return Err(config_err("params.l2", "must differ from l1 for a fringe"));
        }
        Ok(())
    }

    /// SHA-256 of the spec without its output directory.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("serializable");
        v.as_object_mut().expect("object").remove("output_dir");
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

fn json_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    // serde reports "unknown field `x`" / "missing field `x`"
    msg.split('`').nth(1).unwrap_or("spec").to_string()
}

/// Sets `dotted.path=value`; the value is parsed as JSON, else taken as a
/// string.
pub fn apply_override(spec: &mut Value, assignment: &str) -> Result<(), RunError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(assignment, "override must be key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cursor = spec;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = cursor
            .as_object_mut()
            .ok_or_else(|| config_err(path, "path runs through a non-object"))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cursor = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one key")
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl InvariantCheck {
    fn below(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value < tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub seed: u64,
    pub phi_hat: f64,
    pub visibility: f64,
    pub stderr: f64,
    pub verdict: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResults {
    pub scenario: Scenario,
    pub config_hash: String,
    pub seed: u64,
    pub estimate: Option<PhaseEstimate>,
    pub coherence: Option<CoherenceResult>,
    pub sweep: Vec<SweepRow>,
    pub audits: Vec<AuditReport>,
    pub spread: Option<f64>,
    pub notes: Vec<String>,
    pub invariants: Vec<InvariantCheck>,
    pub files: Vec<String>,
}

impl RunResults {
    pub fn all_passed(&self) -> bool {
        self.invariants.iter().all(|c| c.passed)
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, Error> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), Error> {
        self.files.push(name.to_string());
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        Ok(())
    }
}

/// Runs the scenario, writes every artifact plus `report.txt` and
/// `manifest.json`, and fails with [`RunError::Invariant`] if any check
/// failed (artifacts are still written).
pub fn run(spec: &ExperimentSpec) -> Result<RunResults, RunError> {
    spec.validate()?;
    fs::create_dir_all(&spec.output_dir).map_err(Error::from)?;
    let mut out = Outputs {
        dir: spec.output_dir.clone(),
        files: Vec::new(),
    };
    let basis = solve_bands(&spec.lattice)?;
    let mut results = RunResults {
        scenario: spec.scenario,
        config_hash: spec.config_hash(),
        seed: spec.params.seed,
        estimate: None,
        coherence: None,
        sweep: Vec::new(),
        audits: Vec::new(),
        spread: None,
        notes: Vec::new(),
        invariants: Vec::new(),
        files: Vec::new(),
    };

    match spec.scenario {
        Scenario::Interference | Scenario::Mixture => fringe_scenario(spec, &basis, &mut out, &mut results)?,
        Scenario::Audit => audit_scenario(spec, &basis, &mut out, &mut results)?,
        Scenario::BandStructure => band_scenario(spec, &basis, &mut out, &mut results)?,
        Scenario::WannierProfile => profile_scenario(spec, &basis, &mut out, &mut results)?,
    }

    out.files.push("report.txt".into());
    out.files.push("manifest.json".into());
    results.files = out.files.clone();
    fs::write(spec.output_dir.join("report.txt"), emit_report(&results)).map_err(Error::from)?;
    let manifest = serde_json::json!({
        "config_hash": results.config_hash,
        "seed": spec.params.seed,
        "scenario": spec.scenario,
        "versions": { env!("CARGO_PKG_NAME"): env!("CARGO_PKG_VERSION") },
        "outputs": results.files,
        "spec": spec,
    });
    out.json("manifest.json", &manifest)?;
    out.files.pop();

    if let Some(bad) = results.invariants.iter().find(|c| !c.passed) {
        return Err(RunError::Invariant(format!(
            "{} = {:e} (tolerance {:e})",
            bad.name, bad.value, bad.tolerance
        )));
    }
    Ok(results)
}

fn fringe_scenario(
    spec: &ExperimentSpec,
    basis: &BlochBasis,
    out: &mut Outputs,
    results: &mut RunResults,
) -> Result<(), RunError> {
    let p = &spec.params;
    let first = StateVector::bloch(basis, p.n, p.l1)?;
    let second = StateVector::bloch(basis, p.m, p.l2)?;
    let coherent = spec.scenario == Scenario::Interference;
    let state: Box<dyn QuantumState> = if coherent {
        Box::new(phased_pair(&first, &second, p.phi)?)
    } else {
        Box::new(mixture(&[first.clone(), second.clone()], &[0.5, 0.5])?)
    };
    let k = basis.kgrid();
    let delta_k = k.get(p.l2) - k.get(p.l1);

    let dist = site_distribution(state.as_ref(), basis)?;
    dist.write_csv(out.create("site_distribution.csv")?)?;
    let total: f64 = dist.probs().iter().sum();
    results.invariants.push(InvariantCheck::below("distribution_sum", (total - 1.0).abs(), 1e-10));
    let ortho_tol = if basis.mode() == Mode::TightBinding { 1e-12 } else { 1e-10 };
    results.invariants.push(InvariantCheck::below(
        "wannier_orthonormality",
        check_orthonormality(basis),
        ortho_tol,
    ));
    fringe_invariants(spec, &dist, delta_k, coherent, results)?;

    let r0 = make_rgrid(&spec.lattice).index_of(p.r0)?;
    let projector = wannier_projector(basis, p.n, r0)?;
    let value = crate::state::expectation(&projector, state.as_ref())?;
    results.notes.push(format!("<W(n={},R0={})|rho|W> = {:.12}", p.n, p.r0, value));

    let rec = sample_shots(&dist, p.shots, p.seed)?;
    rec.write_csv(out.create("shots.csv")?)?;
    let estimate = estimate_phase(&rec, delta_k)?;
    out.json("phase_estimate.json", &estimate)?;
    let coherence = coherence_test(&rec, delta_k)?;
    out.json("coherence.json", &coherence)?;
    results.estimate = Some(estimate);
    results.coherence = Some(coherence);

    if p.seeds > 1 {
        let rows: Vec<SweepRow> = (0..p.seeds as u64)
            .into_par_iter()
            .map(|i| {
                let seed = p.seed.wrapping_add(i);
                let rec = sample_shots(&dist, p.shots, seed)?;
                let est = estimate_phase(&rec, delta_k)?;
                let verdict = coherence_test(&rec, delta_k)?.verdict;
                Ok(SweepRow {
                    seed,
                    phi_hat: est.phi_hat,
                    visibility: est.visibility,
                    stderr: est.stderr,
                    verdict: verdict.to_string(),
                })
            })
            .collect::<Result<_, Error>>()?;
        let mut w = out.create("sweep.csv")?;
        use std::io::Write;
        writeln!(w, "seed,phi_hat,visibility,stderr,verdict").map_err(Error::from)?;
        for r in &rows {
            writeln!(w, "{},{:.16e},{:.16e},{:.16e},{}", r.seed, r.phi_hat, r.visibility, r.stderr, r.verdict)
                .map_err(Error::from)?;
        }
        results.sweep = rows;
    }
    Ok(())
}

fn fringe_invariants(
    spec: &ExperimentSpec,
    dist: &SiteDistribution,
    delta_k: f64,
    coherent: bool,
    results: &mut RunResults,
) -> Result<(), RunError> {
    let p = &spec.params;
    let n_cells = dist.n_cells();
    let nf = n_cells as f64;
    let a = spec.lattice.lattice_constant;
    if p.n != p.m || !coherent {
        // Band-diagonal readout sees no fringe.
        let mean = 1.0 / dist.probs().iter().filter(|q| **q > 0.0).count().max(1) as f64;
        let dev = dist
            .probs()
            .iter()
            .filter(|q| **q > 0.0)
            .fold(0.0f64, |m, q| m.max((q - mean).abs()));
        results.invariants.push(InvariantCheck::below("distribution_flatness", dev, 1e-12));
        return Ok(());
    }
    let dev = (0..n_cells)
        .map(|r| (dist.get(p.n, r) - (1.0 + (delta_k * r as f64 * a + p.phi).cos()) / nf).abs())
        .fold(0.0f64, f64::max);
    results.invariants.push(InvariantCheck::below("interference_law", dev, 1e-10));
    // At Δk = π/a the fringe only carries cos φ.
    let half_ring = 2 * ((p.l2 + n_cells - p.l1) % n_cells) == n_cells;
    if !half_ring {
        let exact = estimate_phase_exact(dist, delta_k)?;
        results.invariants.push(InvariantCheck::below(
            "exact_phase_recovery",
            wrap_angle(exact.phi_hat - p.phi).abs(),
            1e-12,
        ));
        results
            .invariants
            .push(InvariantCheck::below("exact_visibility", (exact.visibility - 1.0).abs(), 1e-12));
    } else {
        results.notes.push("delta_k = pi/a: fringe is real, only cos(phi) is identifiable".into());
    }
    Ok(())
}

fn audit_scenario(
    spec: &ExperimentSpec,
    basis: &BlochBasis,
    out: &mut Outputs,
    results: &mut RunResults,
) -> Result<(), RunError> {
    let p = &spec.params;
    let r0 = make_rgrid(&spec.lattice).index_of(p.r0)?;
    let mut ops = vec![
        ("wannier_projector", wannier_projector(basis, p.n, r0)?),
        ("translation", translation_operator(basis)),
        ("hamiltonian", hamiltonian(basis)),
    ];
    if basis.mode() == Mode::PlaneWave {
        let cos = std::collections::BTreeMap::from([
            (1, num_complex::Complex64::new(0.5, 0.0)),
            (-1, num_complex::Complex64::new(0.5, 0.0)),
        ]);
        ops.push(("cell_periodic_cos", cell_periodic_multiplier(basis, &cos)?));
    }
    for (name, op) in &ops {
        let report = audit(op, basis)?;
        out.json(&format!("audit_{name}.json"), &report)?;
        results.invariants.push(InvariantCheck {
            name: format!("{name}: cell-periodic => block-diagonal"),
            value: report.max_offdiag_k,
            tolerance: report.tolerance,
            passed: report.implication_holds,
        });
        if *name == "wannier_projector" {
            results.invariants.push(InvariantCheck::below(
                "wannier_projector max_offdiag_k - 1/N",
                (report.max_offdiag_k - 1.0 / basis.n_cells() as f64).abs(),
                1e-12,
            ));
        }
        results.audits.push(report);
    }
    Ok(())
}

fn band_scenario(
    spec: &ExperimentSpec,
    basis: &BlochBasis,
    out: &mut Outputs,
    results: &mut RunResults,
) -> Result<(), RunError> {
    basis.write_bands_csv(out.create("bands.csv")?)?;
    if basis.mode() == Mode::PlaneWave && spec.lattice.potential_depth == 0.0 {
        let mut dev = 0.0f64;
        for l in 0..basis.n_cells() {
            let free = free_particle_energies(basis.kgrid().get(l), &spec.lattice);
            for n in 0..basis.n_bands() {
                dev = dev.max((basis.state(n, l).energy - free[n]).abs());
            }
        }
        results.invariants.push(InvariantCheck::below("free_particle_parabolas", dev, 1e-10));
    }
    let mut worst = 0.0f64;
    for l in 0..basis.n_cells() {
        for n in 0..basis.n_bands() {
            for m in 0..basis.n_bands() {
                let z: num_complex::Complex64 = basis
                    .state(n, l)
                    .coeffs
                    .iter()
                    .zip(&basis.state(m, l).coeffs)
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                worst = worst.max((z - if n == m { 1.0 } else { 0.0 }).norm());
            }
        }
    }
    results.invariants.push(InvariantCheck::below("per_k_orthonormality", worst, 1e-10));
    Ok(())
}

fn profile_scenario(
    spec: &ExperimentSpec,
    basis: &BlochBasis,
    out: &mut Outputs,
    results: &mut RunResults,
) -> Result<(), RunError> {
    let p = &spec.params;
    let r0 = make_rgrid(&spec.lattice).index_of(p.r0)?;
    let w = wannier(basis, p.n, r0)?;
    w.write_density_csv(basis, out.create("wannier_density.csv")?)?;
    let (value, norm) = match basis.mode() {
        Mode::PlaneWave => (spread(&w, basis)?, density_norm(&w, basis, DEFAULT_POINTS_PER_CELL)?),
        // site-localized by construction
        Mode::TightBinding => (0.0, 1.0),
    };
    out.json(
        "spread.json",
        &serde_json::json!({ "band": p.n, "site": p.r0, "spread": value, "norm": norm }),
    )?;
    results.invariants.push(InvariantCheck::below("density_norm", (norm - 1.0).abs(), 1e-8));
    results.spread = Some(value);
    Ok(())
}

/// One-page plain-text summary of a run.
pub fn emit_report(results: &RunResults) -> String {
    let mut s = String::new();
    let scenario = serde_json::to_value(results.scenario).unwrap_or_default();
    let _ = writeln!(s, "scenario: {}", scenario.as_str().unwrap_or_default());
    let _ = writeln!(s, "config hash: {}", results.config_hash);
    let _ = writeln!(s, "seed: {}", results.seed);
    if let Some(e) = &results.estimate {
        let _ = writeln!(
            s,
            "phase estimate: phi_hat = {:.6} +/- {:.6} rad, visibility = {:.6} ({} shots)",
            e.phi_hat, e.stderr, e.visibility, e.shots
        );
    }
    if let Some(c) = &results.coherence {
        let _ = writeln!(s, "verdict: {} (visibility {:.6} vs threshold {:.6})", c.verdict, c.visibility, c.threshold);
        let _ = writeln!(
            s,
            "threshold 6/sqrt(M) = {COHERENCE_SIGMAS} x the mixture-null RMS visibility 2/sqrt(M)"
        );
    }
    if !results.sweep.is_empty() {
        let coherent = results.sweep.iter().filter(|r| r.verdict == "coherent").count();
        let _ = writeln!(s, "sweep: {} seeds, {} coherent", results.sweep.len(), coherent);
    }
    for a in &results.audits {
        let _ = writeln!(
            s,
            "audit {}: cell_periodic = {}, commutator = {:.3e}, max_offdiag_k = {:.3e}",
            a.operator_name, a.is_cell_periodic, a.commutator_norm, a.max_offdiag_k
        );
    }
    if let Some(v) = results.spread {
        let _ = writeln!(s, "wannier spread: {v:.12e}");
    }
    for note in &results.notes {
        let _ = writeln!(s, "note: {note}");
    }
    let _ = writeln!(s, "invariants:");
    for c in &results.invariants {
        let _ = writeln!(
            s,
            "  [{}] {} = {:.3e} (tol {:.0e})",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    s
}

/// Loads a spec (or manifest) file and applies CLI overrides.
pub fn load_spec(
    path: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    overrides: &[String],
) -> Result<ExperimentSpec, RunError> {
    let text = fs::read_to_string(path).map_err(|e| config_err("spec", format!("{}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| config_err("spec", e.to_string()))?;
    if value.get("config_hash").is_some() {
        value = value
            .get("spec")
            .cloned()
            .ok_or_else(|| config_err("spec", "manifest has no embedded spec"))?;
    }
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    if let Some(seed) = seed {
        apply_override(&mut value, &format!("params.seed={seed}"))?;
    }
    if let Some(dir) = out {
        value["output_dir"] = Value::String(dir.to_string_lossy().into_owned());
    }
    ExperimentSpec::from_value(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_value() -> Value {
        serde_json::json!({
            "lattice": {"n_cells": 8, "lattice_constant": 1.0, "potential_depth": 8.0,
                        "pw_cutoff": 4, "n_bands": 2, "mode": "plane_wave"},
            "scenario": "interference",
            "params": {"l1": 0, "l2": 1, "phi": 1.0471975511965976, "shots": 2000, "seed": 7}
        })
    }

    #[test]
    fn override_paths() {
        let mut v = spec_value();
        apply_override(&mut v, "lattice.n_cells=4").unwrap();
        apply_override(&mut v, "scenario=audit").unwrap();
        apply_override(&mut v, "params.extra.deep=1").unwrap();
        assert_eq!(v["lattice"]["n_cells"], 4);
        assert_eq!(v["scenario"], "audit");
        assert!(apply_override(&mut v, "novalue").is_err());
    }

    #[test]
    fn validation_names_field() {
        let mut v = spec_value();
        v["params"]["l2"] = 9.into();
        match ExperimentSpec::from_value(v) {
            Err(RunError::Config { field, .. }) => assert_eq!(field, "params.l2"),
            other => panic!("{other:?}"),
        }
        let mut v = spec_value();
        v["lattice"]["bogus"] = 1.into();
        match ExperimentSpec::from_value(v) {
            Err(e @ RunError::Config { .. }) => {
                assert_eq!(e.exit_code(), 2);
                assert!(e.to_string().contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
        let mut v = spec_value();
        v["params"]["r0"] = 0.5.into();
        assert!(matches!(ExperimentSpec::from_value(v), Err(RunError::Config { field, .. }) if field == "params.r0"));
        let mut v = spec_value();
        v["lattice"]["n_bands"] = 10.into();
        assert!(matches!(ExperimentSpec::from_value(v), Err(RunError::Config { field, .. }) if field == "lattice.n_bands"));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut a = ExperimentSpec::from_value(spec_value()).unwrap();
        let h = a.config_hash();
        a.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.config_hash(), h);
        a.params.seed = 8;
        assert_ne!(a.config_hash(), h);
    }
}
