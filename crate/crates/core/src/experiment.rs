//! Configuration-driven experiments with persisted, reproducible outputs.
//!
//! A run directory holds `config.json` (the canonical echo of the input),
//! `result.json` (schema [`SCHEMA`]) and plot-ready CSV tables.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::cgo::{self, CgoVariant};
use crate::error::{EclError, Result};
use crate::geometry::{a_for_cube_lattice, build_cluster, inclusion_quadrature, Domain, ShapeB};
use crate::kernels::ElasticBackground;
use crate::linearization::{cosine_density, Linearization};
use crate::nd_maps::{convergence_study, DensityKind, StudyConfig};
use crate::operators::{newton_spectrum, GreenMode, NeumannGreen, ShiftedNeumann};
use crate::resonance::{beta_coefficients, effective_p2, scattering_alpha, solve_w, tune_frequency, EffectiveParams};

/// Result JSON schema version.
pub const SCHEMA: &str = "ecl-1";

/// Number of Newton eigenvalues reported by the spectrum experiment.
pub const SPECTRUM_COUNT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Spectrum,
    Effective,
    NdConvergence,
    Reconstruct,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::Effective => "effective",
            ExperimentKind::NdConvergence => "nd_convergence",
            ExperimentKind::Reconstruct => "reconstruct",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub h: f64,
    pub a_list: Vec<f64>,
    pub shape_b: ShapeB,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            h: 0.5,
            a_list: (3..=5).map(|k| a_for_cube_lattice(k, 0.5)).collect(),
            shape_b: ShapeB::Ball,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningConfig {
    /// One-based resonant mode index.
    pub n0: usize,
    pub c_n0: f64,
    pub rho_tilde1: f64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            n0: 1,
            c_n0: -1.0,
            rho_tilde1: 1.0,
        }
    }
}

/// Where the reconstruction takes its Fourier data from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Oracle,
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CgoConfig {
    /// Largest `|k|_∞` of the synthesized lattice.
    pub lattice_cut: usize,
    pub iota: f64,
    /// `𝒫²` to use instead of the tuned effective value.
    pub p2_override: Option<f64>,
    pub data_source: DataSource,
    /// Frequency of the boundary route.
    pub omega: f64,
    /// Largest `|k|_∞` compared between boundary route and oracle; 0 skips.
    pub boundary_check_cut: usize,
}

impl Default for CgoConfig {
    fn default() -> Self {
        CgoConfig {
            lattice_cut: 4,
            iota: 1.0,
            p2_override: None,
            data_source: DataSource::Oracle,
            omega: 1.0,
            boundary_check_cut: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolutionConfig {
    pub vol: usize,
    pub bdry: usize,
    pub inclusion: usize,
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        ResolutionConfig {
            vol: 8,
            bdry: 6,
            inclusion: 3,
        }
    }
}

/// A complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_domain")]
    pub domain: Domain,
    #[serde(default = "ElasticBackground::unit")]
    pub bg: ElasticBackground,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub tuning: TuningConfig,
    #[serde(default)]
    pub cgo: CgoConfig,
    #[serde(default)]
    pub resolution: ResolutionConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_green_mode")]
    pub green_mode: GreenMode,
    /// Worker threads; `None` uses all cores.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_domain() -> Domain {
    Domain::Cube
}

fn default_green_mode() -> GreenMode {
    GreenMode::FreeSpace
}

impl ExperimentConfig {
    /// Default configuration for an experiment kind.
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            domain: default_domain(),
            bg: ElasticBackground::unit(),
            cluster: ClusterConfig::default(),
            tuning: TuningConfig::default(),
            cgo: CgoConfig::default(),
            resolution: ResolutionConfig::default(),
            seed: 0,
            green_mode: default_green_mode(),
            threads: None,
        }
    }

    /// Parses a JSON document; errors carry line and column.
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| EclError::validation("config", format!("cannot parse configuration: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Canonical pretty JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON.
    pub fn digest(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(serde_json::to_vec(self)?)))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One violated precondition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

/// Every violated precondition of `config`, without computing anything.
pub fn validate(config: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut bad = |field: &str, message: String| {
        out.push(Diagnostic {
            field: field.into(),
            message,
        })
    };
    if let Err(e) = config.bg.validate() {
        bad("bg", e.to_string());
    }
    let h = config.cluster.h;
    if !(h > 1.0 / 3.0 && h < 1.0) {
        bad("cluster.h", format!("h = {h} violates the range 1/3 < h < 1"));
    }
    if config.cluster.a_list.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        bad("cluster.a_list", "every a must satisfy 0 < a < 1".into());
    }
    match config.experiment {
        ExperimentKind::NdConvergence if config.cluster.a_list.len() < 3 => {
            bad("cluster.a_list", format!("need >= 3 points, got {}", config.cluster.a_list.len()))
        }
        ExperimentKind::Effective if config.cluster.a_list.is_empty() => bad("cluster.a_list", "need >= 1 point".into()),
        _ => {}
    }
    if config.tuning.n0 == 0 {
        bad("tuning.n0", "n0 is one-based and must be >= 1".into());
    }
    if !(config.tuning.c_n0 < 0.0) || !config.tuning.c_n0.is_finite() {
        bad("tuning.c_n0", format!("c_n0 = {} must be a negative constant", config.tuning.c_n0));
    }
    if !(config.tuning.rho_tilde1 > 0.0) || !config.tuning.rho_tilde1.is_finite() {
        bad("tuning.rho_tilde1", "rho_tilde1 must be > 0".into());
    }
    if config.resolution.vol < 2 {
        bad("resolution.vol", "must be >= 2".into());
    }
    if config.resolution.bdry < 2 {
        bad("resolution.bdry", "must be >= 2".into());
    }
    if config.resolution.inclusion < 2 {
        bad("resolution.inclusion", "must be >= 2".into());
    }
    if config.cgo.lattice_cut == 0 {
        bad("cgo.lattice_cut", "must be >= 1".into());
    }
    if !(config.cgo.iota > 0.0) || !config.cgo.iota.is_finite() {
        bad("cgo.iota", "iota must be > 0".into());
    }
    if let Some(p) = config.cgo.p2_override {
        if !(p > 0.0) || !p.is_finite() {
            bad("cgo.p2_override", "P² must be > 0".into());
        }
    }
    if !(config.cgo.omega > 0.0) || !config.cgo.omega.is_finite() {
        bad("cgo.omega", "omega must be > 0".into());
    }
    if config.experiment == ExperimentKind::Reconstruct && config.domain != Domain::Cube {
        bad("domain", "reconstruct needs the period cube".into());
    }
    if config.threads == Some(0) {
        bad("threads", "must be >= 1".into());
    }
    out
}

/// Result JSON plus CSV tables, before anything touches the disk.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub result: Value,
    /// `(file name, contents)`.
    pub tables: Vec<(String, String)>,
}

/// Validates and runs an experiment in memory.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutput> {
    let diags = validate(config);
    if !diags.is_empty() {
        let msg = diags
            .iter()
            .map(|d| format!("{}: {}", d.field, d.message))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(EclError::validation("run", msg));
    }
    let (results, provenance, tables) = match config.experiment {
        ExperimentKind::Spectrum => run_spectrum(config)?,
        ExperimentKind::Effective => run_effective(config)?,
        ExperimentKind::NdConvergence => run_nd(config)?,
        ExperimentKind::Reconstruct => run_reconstruct(config)?,
    };
    let result = json!({
        "schema": SCHEMA,
        "experiment": config.experiment.name(),
        "config_digest": config.digest()?,
        "seed": config.seed,
        "results": results,
        "provenance": provenance,
        "tables": tables.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
    });
    Ok(RunOutput { result, tables })
}

type Parts = (Value, BTreeMap<&'static str, &'static str>, Vec<(String, String)>);

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let io = |e: csv::Error| EclError::Io(std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| EclError::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| EclError::Io(std::io::Error::other(e.to_string())))
}

fn num(v: f64) -> String {
    format!("{v:.17e}")
}

fn run_spectrum(config: &ExperimentConfig) -> Result<Parts> {
    let rule = inclusion_quadrature(config.cluster.shape_b, config.resolution.inclusion)?;
    let spec = newton_spectrum(&rule, &config.bg, SPECTRUM_COUNT)?;
    let table = csv_table(
        &["n", "lambda", "coupling"],
        (0..spec.len()).map(|n| vec![(n + 1).to_string(), num(spec.eigenvalues[n]), num(spec.coupling[n])]),
    )?;
    let results = json!({
        "eigenvalues": spec.eigenvalues,
        "coupling": spec.coupling,
        "effective_coupling": (0..spec.len()).map(|n| spec.effective_coupling(n)).collect::<Vec<_>>(),
        "first_coupled_mode": spec.first_coupled_mode(),
        "inclusion_nodes": rule.len(),
    });
    let prov = BTreeMap::from([
        ("eigenvalues", "operators::newton_spectrum"),
        ("coupling", "operators::newton_spectrum"),
        ("effective_coupling", "operators::NewtonSpectrum::effective_coupling"),
        ("first_coupled_mode", "operators::NewtonSpectrum::first_coupled_mode"),
    ]);
    Ok((results, prov, vec![("spectrum.csv".into(), table)]))
}

/// Least-squares `α ≈ s a^{1−h} + t a`.
pub fn fit_alpha_law(a: &[f64], alpha: &[f64], h: f64) -> Option<(f64, f64)> {
    if a.len() < 2 || a.len() != alpha.len() {
        return None;
    }
    let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(alpha) {
        let (p, q) = (x.powf(1.0 - h), x);
        s11 += p * p;
        s12 += p * q;
        s22 += q * q;
        b1 += p * y;
        b2 += q * y;
    }
    let det = s11 * s22 - s12 * s12;
    if !(det.abs() > 1e-14 * s11 * s22) {
        return None;
    }
    Some(((b1 * s22 - b2 * s12) / det, (s11 * b2 - s12 * b1) / det))
}

fn run_effective(config: &ExperimentConfig) -> Result<Parts> {
    let bg = &config.bg;
    let t = &config.tuning;
    let h = config.cluster.h;
    let reference = inclusion_quadrature(config.cluster.shape_b, config.resolution.inclusion)?;
    let spec = newton_spectrum(&reference, bg, (t.n0 + 2).max(SPECTRUM_COUNT))?;
    let p2 = effective_p2(&spec, t.n0, t.c_n0)?;
    let vol = config.domain.volume_rule(config.resolution.vol)?;
    let bdry = config.domain.boundary_rule(config.resolution.bdry)?;
    let rho0 = bg.rho0;
    let green = NeumannGreen::new(&vol, &bdry, bg, |_| rho0, 0.0, config.green_mode)?;
    let rows: Vec<(f64, usize, f64, EffectiveParams)> = config
        .cluster
        .a_list
        .par_iter()
        .map(|&a| {
            let cluster = build_cluster(config.domain, h, a, config.cluster.shape_b)?;
            let setting = tune_frequency(&spec, t.n0, t.c_n0, a, h, t.rho_tilde1)?;
            let d = reference.mapped([0.0; 3], a);
            let w = solve_w(&d, &setting, bg)?;
            let alpha = scattering_alpha(&w, &d)?;
            let beta = beta_coefficients(&cluster, &w, &green)?;
            Ok((a, cluster.m(), setting.omega, EffectiveParams { p2, alpha, beta }))
        })
        .collect::<Result<_>>()?;
    let a: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let alpha: Vec<f64> = rows.iter().map(|r| r.3.alpha).collect();
    let fit =
        fit_alpha_law(&a, &alpha, h).map(|(s, t)| json!({ "s": s, "t": t, "p2_recovered": -s, "relative_error": ((-s - p2) / p2).abs() }));
    let effective: Vec<Value> = rows
        .iter()
        .map(|(a, m, omega, e)| {
            let s = e.summary();
            json!({ "a": a, "M": m, "omega": omega, "p2": s.p2, "alpha": s.alpha, "beta_stats": s.beta_stats })
        })
        .collect();
    let table = csv_table(
        &["a", "M", "omega", "P2", "alpha", "beta_mean", "beta_max_dev"],
        rows.iter().map(|(a, m, omega, e)| {
            let b = e.beta_stats();
            vec![
                num(*a),
                m.to_string(),
                num(*omega),
                num(e.p2),
                num(e.alpha),
                num(b.mean),
                num(b.max_dev),
            ]
        }),
    )?;
    let results = json!({ "p2": p2, "effective": effective, "alpha_fit": fit });
    let prov = BTreeMap::from([
        ("p2", "resonance::effective_p2"),
        ("effective.omega", "resonance::tune_frequency"),
        ("effective.alpha", "resonance::scattering_alpha"),
        ("effective.beta_stats", "resonance::beta_coefficients"),
        ("alpha_fit", "experiment::fit_alpha_law"),
    ]);
    Ok((results, prov, vec![("effective.csv".into(), table)]))
}

fn run_nd(config: &ExperimentConfig) -> Result<Parts> {
    let study = StudyConfig {
        domain: config.domain,
        bg: config.bg,
        h: config.cluster.h,
        a_list: config.cluster.a_list.clone(),
        shape: config.cluster.shape_b,
        n0: config.tuning.n0,
        c_n0: config.tuning.c_n0,
        rho_tilde1: config.tuning.rho_tilde1,
        vol_res: config.resolution.vol,
        bdry_order: config.resolution.bdry,
        inclusion_res: config.resolution.inclusion,
        green_mode: config.green_mode,
        pairs: DensityKind::pair_family(),
    };
    let table = convergence_study(&study)?;
    let mut tables = Vec::new();
    for s in &table.series {
        tables.push((format!("nd_{}.csv", s.label()), s.to_csv()?));
    }
    let series: Vec<Value> = table
        .series
        .iter()
        .map(|s| {
            json!({
                "pair": s.label(),
                "a": s.rows.iter().map(|r| r.a).collect::<Vec<_>>(),
                "j_abs": s.rows.iter().map(|r| r.j_abs).collect::<Vec<_>>(),
                "slope": s.slope,
                "strictly_decreasing": s.strictly_decreasing(),
            })
        })
        .collect();
    let results = json!({ "p2": table.p2, "M": table.m, "series": series, "summary": table.summary });
    let prov = BTreeMap::from([
        ("p2", "resonance::effective_p2"),
        ("series.j_abs", "nd_maps::nd_gap"),
        ("summary", "nd_maps::convergence_study"),
        ("summary.reference_slope", "nd_maps::reference_exponent"),
    ]);
    Ok((results, prov, tables))
}

fn run_reconstruct(config: &ExperimentConfig) -> Result<Parts> {
    let bg = &config.bg;
    let c = &config.cgo;
    let p2 = match c.p2_override {
        Some(p) => p,
        None => {
            let reference = inclusion_quadrature(config.cluster.shape_b, config.resolution.inclusion)?;
            let spec = newton_spectrum(&reference, bg, (config.tuning.n0 + 2).max(SPECTRUM_COUNT))?;
            effective_p2(&spec, config.tuning.n0, config.tuning.c_n0)?
        }
    };
    let vol = Domain::Cube.volume_rule(config.resolution.vol)?;
    let need_boundary = c.data_source == DataSource::Boundary || c.boundary_check_cut > 0;
    let lin = if need_boundary {
        let bdry = Domain::Cube.boundary_rule(config.resolution.bdry)?;
        let sn = ShiftedNeumann::new(&vol, &bdry, bg, p2)?;
        Some(Linearization::new(sn, cosine_density, c.omega)?)
    } else {
        None
    };
    let pair = |k: [i64; 3]| cgo::make_cgo_pair(k, p2, bg, CgoVariant::Remark, None, c.omega);
    let check_keys = if c.boundary_check_cut > 0 {
        cgo::lattice(c.boundary_check_cut)
    } else {
        Vec::new()
    };
    let route: Vec<cgo::BoundaryRouteDatum> = match &lin {
        Some(lin) => {
            let keys = if c.data_source == DataSource::Boundary {
                let mut k = cgo::lattice(c.lattice_cut.max(c.boundary_check_cut));
                k.retain(|k| k.iter().all(|v| v.unsigned_abs() as usize <= c.lattice_cut) || check_keys.contains(k));
                k
            } else {
                check_keys.clone()
            };
            keys.par_iter()
                .map(|&k| cgo::boundary_route(&pair(k)?, lin, cosine_density))
                .collect::<Result<_>>()?
        }
        None => Vec::new(),
    };
    let data: BTreeMap<[i64; 3], C64> = match c.data_source {
        DataSource::Oracle => cgo::lattice(c.lattice_cut)
            .par_iter()
            .map(|&k| Ok((k, cgo::oracle_coefficient(&pair(k)?, cosine_density, &vol)?)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .collect(),
        DataSource::Boundary => route.iter().map(|d| (d.k, d.boundary)).collect(),
    };
    let rec = cgo::reconstruct_density(&data, c.lattice_cut, &vol)?;
    let rel = rec.relative_error(cosine_density);
    let truth: Vec<f64> = vol.nodes.iter().map(|&x| cosine_density(x)).collect();
    let mean = vol.weights.iter().zip(&truth).map(|(w, v)| w * v).sum::<f64>() / vol.measure();
    let checked: Vec<&cgo::BoundaryRouteDatum> = route.iter().filter(|d| check_keys.contains(&d.k)).collect();
    let field = csv_table(
        &["x1", "x2", "x3", "reconstructed", "truth_minus_mean"],
        vol.nodes
            .iter()
            .zip(&rec.synthesized)
            .zip(&truth)
            .map(|((x, r), t)| vec![num(x[0]), num(x[1]), num(x[2]), num(*r), num(t - mean)]),
    )?;
    let route_csv = csv_table(
        &[
            "xi1",
            "xi2",
            "xi3",
            "boundary_re",
            "boundary_im",
            "linearized_re",
            "linearized_im",
            "oracle_re",
            "oracle_im",
            "remainder_bound",
        ],
        checked.iter().map(|d| {
            vec![
                d.k[0].to_string(),
                d.k[1].to_string(),
                d.k[2].to_string(),
                num(d.boundary.re),
                num(d.boundary.im),
                num(d.linearized.re),
                num(d.linearized.im),
                num(d.oracle.re),
                num(d.oracle.im),
                num(d.remainder_bound),
            ]
        }),
    )?;
    let theorem_scale = cgo::make_cgo_pair([1, 0, 0], p2, bg, CgoVariant::Theorem, Some(c.iota), c.omega)?.remainder_scale();
    let results = json!({
        "p2": p2,
        "data_source": c.data_source,
        "lattice_cut": c.lattice_cut,
        "relative_error": rel,
        "truth_mean": mean,
        "truncation_error_estimate": rec.truncation_error_estimate,
        "conjugate_symmetry_defect": rec.conjugate_symmetry_defect(),
        "eta": lin.as_ref().map(|l| l.eta),
        "boundary_check": {
            "count": checked.len(),
            "all_within_bound": checked.iter().all(|d| d.within_bound()),
            "max_discrepancy_over_bound": checked.iter().map(|d| d.discrepancy() / d.remainder_bound).fold(0.0, f64::max),
        },
        "theorem_remainder_scale": theorem_scale,
    });
    let prov = BTreeMap::from([
        ("p2", "resonance::effective_p2"),
        ("relative_error", "cgo::FourierReconstruction::relative_error"),
        ("truncation_error_estimate", "cgo::reconstruct_density"),
        ("conjugate_symmetry_defect", "cgo::FourierReconstruction::conjugate_symmetry_defect"),
        ("eta", "linearization::Linearization::new"),
        ("boundary_check", "cgo::boundary_route"),
        ("theorem_remainder_scale", "cgo::CgoPair::remainder_scale"),
    ]);
    Ok((
        results,
        prov,
        vec![
            ("coefficients.csv".into(), rec.coefficients_csv()?),
            ("field.csv".into(), field),
            ("boundary_route.csv".into(), route_csv),
        ],
    ))
}

/// Runs an experiment and writes its bundle to `dir`. Output is staged in a
/// sibling directory and renamed into place, so failures leave nothing behind.
pub fn run(config: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
    if dir.exists() && !dir.join("result.json").exists() && fs::read_dir(dir)?.next().is_some() {
        return Err(EclError::validation(
            "run",
            format!("{} exists and is not a run directory", dir.display()),
        ));
    }
    let out = execute(config)?;
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let staging = dir.with_file_name(format!(".{name}.partial-{}", std::process::id()));
    let write = || -> Result<()> {
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        fs::write(staging.join("config.json"), config.to_json()? + "\n")?;
        fs::write(staging.join("result.json"), serde_json::to_string_pretty(&out.result)? + "\n")?;
        for (n, body) in &out.tables {
            fs::write(staging.join(n), body)?;
        }
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::rename(&staging, dir)?;
        Ok(())
    };
    if let Err(e) = write() {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    Ok(dir.to_path_buf())
}

/// Default run directory `<root>/<experiment>-<digest prefix>`.
pub fn default_run_dir(config: &ExperimentConfig, root: &Path) -> Result<PathBuf> {
    Ok(root.join(format!("{}-{}", config.experiment.name(), &config.digest()?[..12])))
}

/// Reads `result.json` from a run directory.
pub fn load_result(dir: &Path) -> Result<Value> {
    let path = dir.join("result.json");
    if !path.exists() {
        return Err(EclError::validation("show", format!("{} has no result.json", dir.display())));
    }
    let v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    if v.get("schema").and_then(Value::as_str) != Some(SCHEMA) {
        return Err(EclError::validation("show", format!("unsupported schema, expected {SCHEMA}")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_clean_and_round_trips() {
        for k in [
            ExperimentKind::Spectrum,
            ExperimentKind::Effective,
            ExperimentKind::NdConvergence,
            ExperimentKind::Reconstruct,
        ] {
            let c = ExperimentConfig::new(k);
            assert!(validate(&c).is_empty(), "{k:?}");
            let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.digest().unwrap(), c.digest().unwrap());
        }
        let c = ExperimentConfig::from_json(r#"{"experiment":"spectrum"}"#).unwrap();
        assert_eq!(c, ExperimentConfig::new(ExperimentKind::Spectrum));
    }

    #[test]
    fn validation_lists_every_violation() {
        let mut c = ExperimentConfig::new(ExperimentKind::NdConvergence);
        c.cluster.h = 0.2;
        c.tuning.c_n0 = 1.0;
        c.cluster.a_list = vec![0.01];
        let d = validate(&c);
        let fields: Vec<&str> = d.iter().map(|d| d.field.as_str()).collect();
        assert_eq!(fields, ["cluster.h", "cluster.a_list", "tuning.c_n0"]);
        assert!(d[0].message.contains("1/3 < h < 1"));
        assert!(d[1].message.contains("need >= 3 points"));
        assert!(d[2].message.contains("negative"));
        assert_eq!(execute(&c).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn parse_errors_report_position() {
        let e = ExperimentConfig::from_json("{\n  \"experiment\": \"spectrum\",\n  \"seed\": x\n}")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 3"), "{e}");
        assert!(ExperimentConfig::from_json(r#"{"experiment":"spectrum","bogus":1}"#).is_err());
    }

    #[test]
    fn alpha_law_fit_recovers_coefficients() {
        let a = [0.04, 0.02, 0.01];
        let y: Vec<f64> = a.iter().map(|x: &f64| -3.0 * x.powf(0.5) + 0.7 * x).collect();
        let (s, t) = fit_alpha_law(&a, &y, 0.5).unwrap();
        assert!((s + 3.0).abs() < 1e-10 && (t - 0.7).abs() < 1e-8);
        assert!(fit_alpha_law(&a[..1], &y[..1], 0.5).is_none());
    }
}
