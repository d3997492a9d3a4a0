//! Neumann-to-Dirichlet pairings `⟨Λ_e f; g⟩`, `⟨Λ_D f; g⟩`, `⟨Λ_P f; g⟩`,
//! the gap functional 𝖩 and the convergence study in the inclusion radius.
//!
//! Pairings are bilinear (no conjugation): `⟨u; v⟩ = Σ w u·v`.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EclError, Result};
use crate::foldy_lax::{background_field, solve_continuous_lse, VolumeField};
use crate::geometry::{build_cluster, inclusion_quadrature, pairwise_sum, ClusterGeometry, Domain, QuadratureRule, ShapeB};
use crate::kernels::ElasticBackground;
use crate::linalg::{self, RMat, RealLu};
use crate::operators::{newton_spectrum, GreenMode, NeumannGreen};
use crate::resonance::{effective_p2, tune_frequency, FrequencySetting};
use crate::vec3::{self, Point};

/// ε used for the reference exponent of the gap estimate.
pub const REFERENCE_EPSILON: f64 = 0.1;

/// Which map a pairing belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingKind {
    E,
    D,
    P,
    Gap,
}

/// One N–D pairing value with a digest of its inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NdPairing {
    pub value: C64,
    pub kind: PairingKind,
    pub inputs_hash: String,
}

/// Boundary densities of the test family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityKind {
    /// `e_axis`.
    Constant { axis: usize },
    /// `(x_coord − c_coord) e_axis`, with `c` the domain centre.
    Linear { coord: usize, axis: usize },
    /// Outward normal `ν`.
    Normal,
    /// Identically zero.
    Zero,
}

impl DensityKind {
    /// Nodal values on a boundary rule of `domain`.
    pub fn sample(&self, domain: Domain, rule: &QuadratureRule) -> Result<Vec<C64>> {
        let Some(normals) = rule.normals.as_ref() else {
            return Err(EclError::validation("density", "expected a boundary rule"));
        };
        match *self {
            DensityKind::Constant { axis } | DensityKind::Linear { axis, .. } if axis > 2 => {
                return Err(EclError::validation("density", format!("axis {axis} out of range")));
            }
            DensityKind::Linear { coord, .. } if coord > 2 => {
                return Err(EclError::validation("density", format!("coordinate {coord} out of range")));
            }
            _ => {}
        }
        let c = domain.center();
        Ok(rule
            .nodes
            .iter()
            .zip(normals)
            .flat_map(|(x, n)| {
                let v = match *self {
                    DensityKind::Constant { axis } => unit(axis),
                    DensityKind::Linear { coord, axis } => vec3::scale(unit(axis), x[coord] - c[coord]),
                    DensityKind::Normal => *n,
                    DensityKind::Zero => [0.0; 3],
                };
                v.map(|t| C64::new(t, 0.0))
            })
            .collect())
    }

    pub fn label(&self) -> String {
        const AX: [&str; 3] = ["x", "y", "z"];
        match *self {
            DensityKind::Constant { axis } => format!("const_{}", AX[axis.min(2)]),
            DensityKind::Linear { coord, axis } => format!("lin_{}{}", AX[coord.min(2)], AX[axis.min(2)]),
            DensityKind::Normal => "normal".into(),
            DensityKind::Zero => "zero".into(),
        }
    }

    /// Default densities.
    pub fn family() -> Vec<DensityKind> {
        vec![
            DensityKind::Constant { axis: 0 },
            DensityKind::Constant { axis: 2 },
            DensityKind::Linear { coord: 0, axis: 0 },
            DensityKind::Normal,
        ]
    }

    /// Default `(f, g)` pairs. Pairs whose pairing vanishes identically by
    /// the reflection symmetry of the cube are left out.
    pub fn pair_family() -> Vec<[DensityKind; 2]> {
        let cx = DensityKind::Constant { axis: 0 };
        let cz = DensityKind::Constant { axis: 2 };
        let lin = DensityKind::Linear { coord: 0, axis: 0 };
        let nu = DensityKind::Normal;
        vec![[cx, cx], [cz, cz], [lin, lin], [nu, nu], [lin, nu], [nu, lin]]
    }
}

fn unit(k: usize) -> Point {
    let mut e = [0.0; 3];
    e[k] = 1.0;
    e
}

/// Bilinear pairing `Σ w u·v` over a rule.
pub fn bilinear(rule: &QuadratureRule, u: &[C64], v: &[C64]) -> C64 {
    let re: Vec<f64> = (0..u.len()).map(|i| rule.weights[i / 3] * (u[i] * v[i]).re).collect();
    let im: Vec<f64> = (0..u.len()).map(|i| rule.weights[i / 3] * (u[i] * v[i]).im).collect();
    C64::new(pairwise_sum(&re), pairwise_sum(&im))
}

fn weighted_bilinear(rule: &QuadratureRule, weight: &[f64], u: &[C64], v: &[C64]) -> C64 {
    let re: Vec<f64> = (0..u.len())
        .map(|i| rule.weights[i / 3] * weight[i / 3] * (u[i] * v[i]).re)
        .collect();
    let im: Vec<f64> = (0..u.len())
        .map(|i| rule.weights[i / 3] * weight[i / 3] * (u[i] * v[i]).im)
        .collect();
    C64::new(pairwise_sum(&re), pairwise_sum(&im))
}

/// SHA-256 digest of densities, rule digests and free-form tags.
pub fn inputs_hash(fields: &[&[C64]], rules: &[&QuadratureRule], tags: &[String]) -> String {
    let mut h = Sha256::new();
    for f in fields {
        for v in *f {
            h.update(v.re.to_le_bytes());
            h.update(v.im.to_le_bytes());
        }
        h.update(b"|");
    }
    for r in rules {
        h.update(r.hash().as_bytes());
    }
    for t in tags {
        h.update(t.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn check_mode(op: &'static str, green: &NeumannGreen, mode: GreenMode) -> Result<()> {
    if green.mode != mode {
        return Err(EclError::validation(
            op,
            format!("Green evaluator is in {:?} mode but {:?} was requested", green.mode, mode),
        ));
    }
    Ok(())
}

/// Weight-symmetrized boundary single layer `½(W S + Sᵀ W)`, so that
/// `⟨Λ_e f; g⟩ = gᵀ B f`.
pub struct BoundaryPairing {
    pub rule: QuadratureRule,
    pub matrix: RMat,
}

impl BoundaryPairing {
    pub fn new(green: &NeumannGreen) -> Result<Self> {
        let s = green.single_layer_trace()?;
        let w = linalg::expand3(&green.bdry_rule().weights);
        let ws = linalg::scale_rows_cols(&s, &w, &vec![1.0; w.len()]);
        Ok(BoundaryPairing {
            rule: green.bdry_rule().clone(),
            matrix: linalg::symmetric_part(&ws),
        })
    }

    /// `gᵀ B f`.
    pub fn pair(&self, f: &[C64], g: &[C64]) -> Result<C64> {
        let n = self.matrix.nrows();
        if f.len() != n || g.len() != n {
            return Err(EclError::validation(
                "pairing_lambda_e",
                "density length does not match the boundary rule",
            ));
        }
        let fr: Vec<f64> = f.iter().map(|v| v.re).collect();
        let fi: Vec<f64> = f.iter().map(|v| v.im).collect();
        let a = linalg::matvec(&self.matrix, &fr);
        let b = linalg::matvec(&self.matrix, &fi);
        let bf: Vec<C64> = a.into_iter().zip(b).map(|(x, y)| C64::new(x, y)).collect();
        let terms: Vec<C64> = g.iter().zip(&bf).map(|(x, y)| x * y).collect();
        Ok(crate::geometry::pairwise_sum_c(&terms))
    }
}

/// `⟨Λ_e f; g⟩` with `u^f = SL_Γ(f)` traced on the boundary nodes.
pub fn pairing_lambda_e(f: &[C64], g: &[C64], green: &NeumannGreen, rule_bdry: &QuadratureRule, mode: GreenMode) -> Result<NdPairing> {
    let op = "pairing_lambda_e";
    check_mode(op, green, mode)?;
    if rule_bdry.hash() != green.bdry_rule().hash() {
        return Err(EclError::validation(op, "boundary rule differs from the Green evaluator's"));
    }
    let value = BoundaryPairing::new(green)?.pair(f, g)?;
    Ok(NdPairing {
        value,
        kind: PairingKind::E,
        inputs_hash: inputs_hash(&[f, g], &[rule_bdry], &[format!("{mode:?}")]),
    })
}

/// Union of the scaled inclusion rules of a cluster.
pub fn inclusion_union_rule(cluster: &ClusterGeometry, reference: &QuadratureRule) -> QuadratureRule {
    let rules: Vec<QuadratureRule> = (0..cluster.m()).map(|j| cluster.inclusion_rule(reference, j)).collect();
    QuadratureRule::union(&rules)
}

fn solve_split(lu: &RealLu, v: &[C64]) -> Vec<C64> {
    let re: Vec<f64> = v.iter().map(|c| c.re).collect();
    let im: Vec<f64> = v.iter().map(|c| c.im).collect();
    let a = lu.solve_vec(&re);
    let b = lu.solve_vec(&im);
    a.into_iter().zip(b).map(|(x, y)| C64::new(x, y)).collect()
}

/// Factorized `I − ω² K_D (ρ₁ − ρ)` on the union of inclusion rules.
pub struct InclusionSolver {
    pub rule: QuadratureRule,
    /// `ρ₁ − ρ(x)` at each node.
    pub contrast: Vec<f64>,
    /// `ρ(x)` at each node.
    pub rho: Vec<f64>,
    pub omega2: f64,
    lu: Option<RealLu>,
}

impl InclusionSolver {
    pub fn new<F>(rule: QuadratureRule, setting: &FrequencySetting, rho: F, green: &NeumannGreen) -> Result<Self>
    where
        F: Fn(Point) -> f64,
    {
        let op = "solve_vg";
        if let Some(p) = rule.nodes.iter().find(|&&p| !(green.domain.depth(p) > 0.0)) {
            return Err(EclError::validation(op, format!("inclusion node {p:?} is not inside the domain")));
        }
        let rho: Vec<f64> = rule.nodes.iter().map(|&x| rho(x)).collect();
        if rho.iter().any(|r| !r.is_finite()) {
            return Err(EclError::validation(op, "density is not finite"));
        }
        let contrast: Vec<f64> = rho.iter().map(|r| setting.rho1 - r).collect();
        let omega2 = setting.omega * setting.omega;
        let lu = if contrast.iter().all(|c| *c == 0.0) {
            None
        } else {
            let k = green.operator_on(&rule)?;
            let c3 = linalg::expand3(&contrast);
            let n = k.nrows();
            let a = RMat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - omega2 * k[(i, j)] * c3[j]);
            Some(RealLu::new(op, &a)?)
        };
        Ok(InclusionSolver {
            rule,
            contrast,
            rho,
            omega2,
            lu,
        })
    }

    /// `v` with `v − ω² ∫_D Γ (ρ₁ − ρ) v = s`.
    pub fn solve(&self, s: &VolumeField) -> Result<VolumeField> {
        if s.rule.hash() != self.rule.hash() {
            return Err(EclError::validation("solve_vg", "source field lives on a different rule"));
        }
        let v = match &self.lu {
            None => s.flat(),
            Some(lu) => solve_split(lu, &s.flat()),
        };
        if v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(EclError::numerical("solve_vg", "non-finite solution"));
        }
        VolumeField::from_flat(self.rule.clone(), &v)
    }
}

/// `v^g` on the union of inclusions for the boundary density `g`.
pub fn solve_vg<F>(
    cluster: &ClusterGeometry,
    reference: &QuadratureRule,
    setting: &FrequencySetting,
    rho: F,
    g: &[C64],
    green: &NeumannGreen,
) -> Result<VolumeField>
where
    F: Fn(Point) -> f64,
{
    let rule = inclusion_union_rule(cluster, reference);
    let s = background_field(g, green.bdry_rule(), green, &rule)?;
    InclusionSolver::new(rule, setting, rho, green)?.solve(&s)
}

/// `⟨Λ_D f; g⟩ = ⟨Λ_e f; g⟩ + ω²⟨(ρ₁ − ρ) v^g; u^f⟩_D`.
pub fn pairing_lambda_d<F>(
    lambda_e: &NdPairing,
    vg: &VolumeField,
    uf: &VolumeField,
    setting: &FrequencySetting,
    rho: F,
) -> Result<NdPairing>
where
    F: Fn(Point) -> f64,
{
    let op = "pairing_lambda_d";
    if lambda_e.kind != PairingKind::E {
        return Err(EclError::validation(op, "expected a Λ_e pairing"));
    }
    if vg.rule.hash() != uf.rule.hash() {
        return Err(EclError::validation(op, "v^g and u^f live on different rules"));
    }
    let contrast: Vec<f64> = vg.rule.nodes.iter().map(|&x| setting.rho1 - rho(x)).collect();
    let w2 = setting.omega * setting.omega;
    let term = weighted_bilinear(&vg.rule, &contrast, &vg.flat(), &uf.flat()) * w2;
    Ok(NdPairing {
        value: lambda_e.value + term,
        kind: PairingKind::D,
        inputs_hash: inputs_hash(
            &[&vg.flat(), &uf.flat()],
            &[&vg.rule],
            &[lambda_e.inputs_hash.clone(), setting_tag(setting)],
        ),
    })
}

/// `⟨Λ_P f; g⟩ = ⟨Λ_e f; g⟩ − 𝒫²⟨q^g; u^f⟩_Ω`.
pub fn pairing_lambda_p(lambda_e: &NdPairing, qg: &VolumeField, uf: &VolumeField, p2: f64) -> Result<NdPairing> {
    let op = "pairing_lambda_p";
    if lambda_e.kind != PairingKind::E {
        return Err(EclError::validation(op, "expected a Λ_e pairing"));
    }
    if qg.rule.hash() != uf.rule.hash() {
        return Err(EclError::validation(op, "q^g and u^f live on different rules"));
    }
    let term = bilinear(&qg.rule, &qg.flat(), &uf.flat()) * p2;
    Ok(NdPairing {
        value: lambda_e.value - term,
        kind: PairingKind::P,
        inputs_hash: inputs_hash(
            &[&qg.flat(), &uf.flat()],
            &[&qg.rule],
            &[lambda_e.inputs_hash.clone(), format!("{p2:e}")],
        ),
    })
}

fn setting_tag(s: &FrequencySetting) -> String {
    serde_json::to_string(s).unwrap_or_default()
}

/// Fields entering 𝖩 for one pair `(f, g)`, on shared rules.
pub struct NdFields {
    pub setting: FrequencySetting,
    pub p2: f64,
    /// `u^f` on the inclusion nodes.
    pub uf_d: VolumeField,
    /// `v^g` on the inclusion nodes.
    pub vg: VolumeField,
    /// `ρ` on the inclusion nodes.
    pub rho_d: Vec<f64>,
    /// `u^f` on the Ω rule.
    pub uf_omega: VolumeField,
    /// `q^g` on the Ω rule.
    pub qg: VolumeField,
}

/// `𝖩 = ω²ρ₁⟨v^g; u^f⟩_D + 𝒫²⟨q^g; u^f⟩_Ω − ω²⟨ρ v^g; u^f⟩_D`.
pub fn nd_gap(fields: &NdFields) -> Result<NdPairing> {
    let op = "nd_gap";
    if fields.vg.rule.hash() != fields.uf_d.rule.hash() || fields.qg.rule.hash() != fields.uf_omega.rule.hash() {
        return Err(EclError::validation(op, "fields do not share rules"));
    }
    if fields.rho_d.len() != fields.vg.rule.len() {
        return Err(EclError::validation(op, "ρ samples do not match the inclusion rule"));
    }
    let s = &fields.setting;
    let w2 = s.omega * s.omega;
    let v = fields.vg.flat();
    let u = fields.uf_d.flat();
    let value = bilinear(&fields.vg.rule, &v, &u) * (w2 * s.rho1)
        + bilinear(&fields.qg.rule, &fields.qg.flat(), &fields.uf_omega.flat()) * fields.p2
        - weighted_bilinear(&fields.vg.rule, &fields.rho_d, &v, &u) * w2;
    Ok(NdPairing {
        value,
        kind: PairingKind::Gap,
        inputs_hash: inputs_hash(
            &[&v, &u, &fields.qg.flat(), &fields.uf_omega.flat()],
            &[&fields.vg.rule, &fields.qg.rule],
            &[setting_tag(s), format!("{:e}", fields.p2)],
        ),
    })
}

/// Reference exponent `(1−h)(9−5ε)/(18(3−ε))` of the gap estimate.
pub fn reference_exponent(h: f64, eps: f64) -> f64 {
    (1.0 - h) * (9.0 - 5.0 * eps) / (18.0 * (3.0 - eps))
}

/// Sweep definition for [`convergence_study`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub domain: Domain,
    pub bg: ElasticBackground,
    pub h: f64,
    pub a_list: Vec<f64>,
    pub shape: ShapeB,
    pub n0: usize,
    pub c_n0: f64,
    pub rho_tilde1: f64,
    /// Cells per unit edge of the Ω volume rule.
    pub vol_res: usize,
    pub bdry_order: usize,
    /// Cells per diameter of the reference inclusion rule.
    pub inclusion_res: usize,
    pub green_mode: GreenMode,
    pub pairs: Vec<[DensityKind; 2]>,
}

impl StudyConfig {
    /// Cube, `h = 0.5`, `M = 27, 64, 125`, free-space kernel.
    pub fn default_cube() -> Self {
        let h = 0.5;
        StudyConfig {
            domain: Domain::Cube,
            bg: ElasticBackground::unit(),
            h,
            a_list: (3..=5).map(|k| crate::geometry::a_for_cube_lattice(k, h)).collect(),
            shape: ShapeB::Ball,
            n0: 1,
            c_n0: -1.0,
            rho_tilde1: 1.0,
            vol_res: 8,
            bdry_order: 6,
            inclusion_res: 3,
            green_mode: GreenMode::FreeSpace,
            pairs: DensityKind::pair_family(),
        }
    }
}

/// One sweep point for one pair `(f, g)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub a: f64,
    pub m: usize,
    pub p2: f64,
    pub j_abs: f64,
    /// Local log–log slope against the previous row, if any.
    pub exponent_running: Option<f64>,
    /// `|𝖩| / (𝒫⁶ a^{reference})`.
    pub p6_ratio: f64,
    pub lambda_e: f64,
    pub gap_identity_error: f64,
}

/// Sweep for one pair `(f, g)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSeries {
    pub f: DensityKind,
    pub g: DensityKind,
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of `log|𝖩|` against `log a`; `None` when `𝖩`
    /// vanishes at some point.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

impl PairSeries {
    pub fn label(&self) -> String {
        format!("{}__{}", self.f.label(), self.g.label())
    }

    /// Whether `|𝖩|` strictly decreases as `a` decreases.
    pub fn strictly_decreasing(&self) -> bool {
        let mut r = self.rows.clone();
        r.sort_by(|x, y| y.a.total_cmp(&x.a));
        r.windows(2).all(|w| w[1].j_abs < w[0].j_abs)
    }

    /// CSV with columns `a,M,P2,J_abs,exponent_running`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| EclError::Io(std::io::Error::other(e.to_string()));
        w.write_record(["a", "M", "P2", "J_abs", "exponent_running"]).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                format!("{:.17e}", r.a),
                r.m.to_string(),
                format!("{:.17e}", r.p2),
                format!("{:.17e}", r.j_abs),
                r.exponent_running.map_or(String::new(), |e| format!("{e:.17e}")),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| EclError::Io(std::io::Error::other(e.to_string())))?;
        String::from_utf8(bytes).map_err(|e| EclError::Io(std::io::Error::other(e.to_string())))
    }
}

/// JSON summary of a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    /// Smallest fitted slope over the family; `None` if any is undefined.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub reference_slope: f64,
    pub all_strictly_decreasing: bool,
    pub max_gap_identity_error: f64,
}

/// Complete study output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub p2: f64,
    pub m: Vec<usize>,
    pub series: Vec<PairSeries>,
    pub summary: StudySummary,
}

/// Least-squares line through `(x, y)`; `None` for fewer than two points or
/// non-finite data.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|v| !v.is_finite()) {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let s = sxy / sxx;
    Some((s, my - s * mx))
}

struct PointResult {
    a: f64,
    m: usize,
    /// Per pair: (|𝖩|, Λ_e, identity error relative to the largest pairing).
    values: Vec<(f64, f64, f64)>,
}

/// Runs the N–D gap sweep over `config.a_list`.
pub fn convergence_study(config: &StudyConfig) -> Result<ConvergenceTable> {
    let op = "convergence_study";
    if config.a_list.len() < 3 {
        return Err(EclError::validation(op, format!("need >= 3 points, got {}", config.a_list.len())));
    }
    if config.pairs.is_empty() {
        return Err(EclError::validation(op, "empty (f, g) family"));
    }
    config.bg.validate()?;
    let clusters: Vec<ClusterGeometry> = config
        .a_list
        .iter()
        .map(|&a| build_cluster(config.domain, config.h, a, config.shape))
        .collect::<Result<_>>()?;
    let reference = inclusion_quadrature(config.shape, config.inclusion_res)?;
    let spectrum = newton_spectrum(&reference, &config.bg, config.n0.max(1) + 2)?;
    let p2 = effective_p2(&spectrum, config.n0, config.c_n0)?;
    let vol = config.domain.volume_rule(config.vol_res)?;
    let bdry = config.domain.boundary_rule(config.bdry_order)?;
    let rho0 = config.bg.rho0;
    let green = NeumannGreen::new(&vol, &bdry, &config.bg, |_| rho0, 0.0, config.green_mode)?;
    let mut kinds: Vec<DensityKind> = Vec::new();
    for k in config.pairs.iter().flatten() {
        if !kinds.contains(k) {
            kinds.push(*k);
        }
    }
    let idx = |k: &DensityKind| kinds.iter().position(|x| x == k).unwrap();
    let pairs: Vec<(usize, usize)> = config.pairs.iter().map(|[f, g]| (idx(f), idx(g))).collect();
    let dens: Vec<Vec<C64>> = kinds.iter().map(|d| d.sample(config.domain, &bdry)).collect::<Result<_>>()?;
    let bp = BoundaryPairing::new(&green)?;
    let u_omega: Vec<VolumeField> = dens
        .iter()
        .map(|f| background_field(f, &bdry, &green, &vol))
        .collect::<Result<_>>()?;
    let q: Vec<VolumeField> = u_omega
        .iter()
        .map(|s| solve_continuous_lse(p2, &green, &vol, s))
        .collect::<Result<_>>()?;
    let lam_e: Vec<C64> = pairs.iter().map(|&(f, g)| bp.pair(&dens[f], &dens[g])).collect::<Result<_>>()?;
    let points: Vec<PointResult> = clusters
        .par_iter()
        .map(|cl| {
            let setting = tune_frequency(&spectrum, config.n0, config.c_n0, cl.a, config.h, config.rho_tilde1)?;
            let rule = inclusion_union_rule(cl, &reference);
            let solver = InclusionSolver::new(rule.clone(), &setting, |_| rho0, &green)?;
            let u_d: Vec<VolumeField> = dens
                .iter()
                .map(|f| background_field(f, &bdry, &green, &rule))
                .collect::<Result<_>>()?;
            let v: Vec<VolumeField> = u_d.iter().map(|s| solver.solve(s)).collect::<Result<_>>()?;
            let raw: Vec<(C64, C64, C64)> = pairs
                .iter()
                .zip(&lam_e)
                .map(|(&(fi, gi), le)| {
                    let e = NdPairing {
                        value: *le,
                        kind: PairingKind::E,
                        inputs_hash: String::new(),
                    };
                    let d = pairing_lambda_d(&e, &v[gi], &u_d[fi], &setting, |_| rho0)?;
                    let p = pairing_lambda_p(&e, &q[gi], &u_omega[fi], p2)?;
                    let fields = NdFields {
                        setting,
                        p2,
                        uf_d: u_d[fi].clone(),
                        vg: v[gi].clone(),
                        rho_d: solver.rho.clone(),
                        uf_omega: u_omega[fi].clone(),
                        qg: q[gi].clone(),
                    };
                    Ok((nd_gap(&fields)?.value, d.value, p.value))
                })
                .collect::<Result<_>>()?;
            let scale = raw.iter().map(|v| v.1.norm().max(v.2.norm())).fold(0.0, f64::max).max(1e-300);
            let values = raw
                .iter()
                .zip(&lam_e)
                .map(|(&(j, d, p), le)| (j.norm(), le.re, (j - (d - p)).norm() / scale))
                .collect();
            Ok(PointResult {
                a: cl.a,
                m: cl.m(),
                values,
            })
        })
        .collect::<Result<_>>()?;
    let reference_slope = reference_exponent(config.h, REFERENCE_EPSILON);
    let mut series = Vec::new();
    for (pi, pair) in config.pairs.iter().enumerate() {
        let mut rows: Vec<StudyRow> = Vec::with_capacity(points.len());
        for (k, pt) in points.iter().enumerate() {
            let (j, le, err) = pt.values[pi];
            let exponent_running = if k == 0 {
                None
            } else {
                let prev = &points[k - 1];
                let s = (j / prev.values[pi].0).ln() / (pt.a / prev.a).ln();
                s.is_finite().then_some(s)
            };
            rows.push(StudyRow {
                a: pt.a,
                m: pt.m,
                p2,
                j_abs: j,
                exponent_running,
                p6_ratio: j / (p2.powi(3) * pt.a.powf(reference_slope)),
                lambda_e: le,
                gap_identity_error: err,
            });
        }
        let lx: Vec<f64> = rows.iter().map(|r| r.a.ln()).collect();
        let ly: Vec<f64> = rows.iter().map(|r| r.j_abs.ln()).collect();
        let fit = if rows.iter().all(|r| r.j_abs > 0.0) {
            fit_line(&lx, &ly)
        } else {
            None
        };
        series.push(PairSeries {
            f: pair[0],
            g: pair[1],
            rows,
            slope: fit.map(|v| v.0),
            intercept: fit.map(|v| v.1),
        });
    }
    let slopes: Option<Vec<(f64, f64)>> = series.iter().map(|s| s.slope.zip(s.intercept)).collect();
    let worst = slopes.and_then(|v| v.into_iter().min_by(|a, b| a.0.total_cmp(&b.0)));
    let summary = StudySummary {
        slope: worst.map(|v| v.0),
        intercept: worst.map(|v| v.1),
        reference_slope,
        all_strictly_decreasing: series.iter().all(|s| s.strictly_decreasing()),
        max_gap_identity_error: series
            .iter()
            .flat_map(|s| s.rows.iter().map(|r| r.gap_identity_error))
            .fold(0.0, f64::max),
    };
    Ok(ConvergenceTable {
        p2,
        m: points.iter().map(|p| p.m).collect(),
        series,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::a_for_cube_lattice;

    fn cube_green(mode: GreenMode) -> (NeumannGreen, QuadratureRule) {
        let vol = Domain::Cube.volume_rule(4).unwrap();
        let bd = Domain::Cube.boundary_rule(4).unwrap();
        (
            NeumannGreen::new(&vol, &bd, &ElasticBackground::unit(), |_| 0.0, 0.0, mode).unwrap(),
            bd,
        )
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn lambda_e_is_bilinear_symmetric_and_vanishes_for_zero_g() {
        let (g, bd) = cube_green(GreenMode::FreeSpace);
        let f = DensityKind::Normal.sample(Domain::Cube, &bd).unwrap();
        let h = DensityKind::Linear { coord: 1, axis: 0 }.sample(Domain::Cube, &bd).unwrap();
        let zero = vec![C64::new(0.0, 0.0); f.len()];
        let p = |a: &[C64], b: &[C64]| pairing_lambda_e(a, b, &g, &bd, GreenMode::FreeSpace).unwrap().value;
        assert_eq!(p(&f, &zero), C64::new(0.0, 0.0));
        let f2: Vec<C64> = f.iter().map(|v| v * 2.0).collect();
        assert!((p(&f2, &h) - p(&f, &h) * 2.0).norm() <= 1e-14 * p(&f, &h).norm());
        assert!(
            (p(&f, &h) - p(&h, &f)).norm() <= 1e-10 * p(&f, &f).norm(),
            "{} {}",
            p(&f, &h),
            p(&h, &f)
        );
        assert!(pairing_lambda_e(&f, &h, &g, &bd, GreenMode::Corrected).is_err());
    }

    #[test]
    fn lambda_e_energy_is_nonnegative_for_static_neumann_function() {
        let vol = Domain::Ball.volume_rule(3).unwrap();
        let bd = Domain::Ball.boundary_rule(6).unwrap();
        let g = NeumannGreen::new(&vol, &bd, &ElasticBackground::unit(), |_| 0.0, 0.0, GreenMode::Corrected).unwrap();
        let bp = BoundaryPairing::new(&g).unwrap();
        let mut seed = 7u64;
        for _ in 0..20 {
            let f: Vec<C64> = (0..3 * bd.len()).map(|_| C64::new(lcg(&mut seed), 0.0)).collect();
            let e = bp.pair(&f, &f).unwrap();
            assert!(e.im == 0.0 && e.re >= -1e-10 * norm_sq(&f), "energy {e}");
        }
    }

    fn norm_sq(f: &[C64]) -> f64 {
        f.iter().map(|v| v.norm_sqr()).sum()
    }

    fn small_setup(
        k: usize,
    ) -> (
        ClusterGeometry,
        QuadratureRule,
        FrequencySetting,
        NeumannGreen,
        QuadratureRule,
        QuadratureRule,
        f64,
    ) {
        let h = 0.5;
        let bg = ElasticBackground::unit();
        let cl = build_cluster(Domain::Cube, h, a_for_cube_lattice(k, h), ShapeB::Ball).unwrap();
        let reference = inclusion_quadrature(ShapeB::Ball, 3).unwrap();
        let spec = newton_spectrum(&reference, &bg, 4).unwrap();
        let setting = tune_frequency(&spec, 1, -1.0, cl.a, h, 1.0).unwrap();
        let p2 = effective_p2(&spec, 1, -1.0).unwrap();
        let vol = Domain::Cube.volume_rule(4).unwrap();
        let bd = Domain::Cube.boundary_rule(4).unwrap();
        let g = NeumannGreen::new(&vol, &bd, &bg, |_| 1.0, 0.0, GreenMode::FreeSpace).unwrap();
        (cl, reference, setting, g, vol, bd, p2)
    }

    #[test]
    fn gap_identity_and_reciprocity_hold_to_solver_tolerance() {
        let (cl, reference, setting, g, vol, bd, p2) = small_setup(2);
        let fam = DensityKind::family();
        let d: Vec<Vec<C64>> = fam.iter().map(|k| k.sample(Domain::Cube, &bd).unwrap()).collect();
        let rule = inclusion_union_rule(&cl, &reference);
        let solver = InclusionSolver::new(rule.clone(), &setting, |_| 1.0, &g).unwrap();
        let ud: Vec<VolumeField> = d.iter().map(|f| background_field(f, &bd, &g, &rule).unwrap()).collect();
        let uo: Vec<VolumeField> = d.iter().map(|f| background_field(f, &bd, &g, &vol).unwrap()).collect();
        let v: Vec<VolumeField> = ud.iter().map(|s| solver.solve(s).unwrap()).collect();
        let q: Vec<VolumeField> = uo.iter().map(|s| solve_continuous_lse(p2, &g, &vol, s).unwrap()).collect();
        let mut dmat = vec![vec![C64::new(0.0, 0.0); 4]; 4];
        let mut pmat = dmat.clone();
        let mut gaps = dmat.clone();
        for i in 0..4 {
            for j in 0..4 {
                let e = pairing_lambda_e(&d[i], &d[j], &g, &bd, GreenMode::FreeSpace).unwrap();
                let dd = pairing_lambda_d(&e, &v[j], &ud[i], &setting, |_| 1.0).unwrap();
                let pp = pairing_lambda_p(&e, &q[j], &uo[i], p2).unwrap();
                let fields = NdFields {
                    setting,
                    p2,
                    uf_d: ud[i].clone(),
                    vg: v[j].clone(),
                    rho_d: solver.rho.clone(),
                    uf_omega: uo[i].clone(),
                    qg: q[j].clone(),
                };
                gaps[i][j] = nd_gap(&fields).unwrap().value;
                dmat[i][j] = dd.value;
                pmat[i][j] = pp.value;
            }
        }
        let scale = dmat.iter().chain(&pmat).flatten().map(|v| v.norm()).fold(0.0, f64::max);
        for i in 0..4 {
            for j in 0..4 {
                assert!((gaps[i][j] - (dmat[i][j] - pmat[i][j])).norm() <= 1e-10 * scale, "gap {i}{j}");
                let s = scale;
                assert!((dmat[i][j] - dmat[j][i]).norm() <= 1e-10 * s, "Λ_D {i}{j}");
                assert!((pmat[i][j] - pmat[j][i]).norm() <= 1e-10 * s, "Λ_P {i}{j}");
            }
        }
    }

    #[test]
    fn vanishing_contrast_and_shift_reduce_to_lambda_e() {
        let (cl, reference, setting, g, vol, bd, _) = small_setup(2);
        let f = DensityKind::Normal.sample(Domain::Cube, &bd).unwrap();
        let rule = inclusion_union_rule(&cl, &reference);
        let rho1 = setting.rho1;
        let vg = solve_vg(&cl, &reference, &setting, |_| rho1, &f, &g).unwrap();
        let s = background_field(&f, &bd, &g, &rule).unwrap();
        assert_eq!(vg.flat(), s.flat());
        let e = pairing_lambda_e(&f, &f, &g, &bd, GreenMode::FreeSpace).unwrap();
        let d = pairing_lambda_d(&e, &vg, &s, &setting, |_| rho1).unwrap();
        assert_eq!(d.value, e.value);
        let uo = background_field(&f, &bd, &g, &vol).unwrap();
        let p = pairing_lambda_p(&e, &uo, &uo, 0.0).unwrap();
        assert_eq!(p.value, e.value);
        let zero = VolumeField::new(rule.clone(), vec![[C64::new(0.0, 0.0); 3]; rule.len()]).unwrap();
        let d0 = pairing_lambda_d(&e, &vg, &zero, &setting, |_| 1.0).unwrap();
        assert_eq!(d0.value, e.value);
    }

    #[test]
    fn single_inclusion_off_resonance_matches_one_born_step() {
        let (cl, reference, mut setting, g, _, bd, _) = small_setup(2);
        setting.omega *= 0.05;
        let one = ClusterGeometry {
            centers: vec![cl.centers[0]],
            ..cl
        };
        let f = DensityKind::Constant { axis: 0 }.sample(Domain::Cube, &bd).unwrap();
        let rule = inclusion_union_rule(&one, &reference);
        let v = solve_vg(&one, &reference, &setting, |_| 1.0, &f, &g).unwrap();
        let s = background_field(&f, &bd, &g, &rule).unwrap();
        let k = g.operator_on(&rule).unwrap();
        let c = setting.rho1 - 1.0;
        let w2 = setting.omega * setting.omega;
        let sf = s.flat();
        let sr: Vec<f64> = sf.iter().map(|z| z.re).collect();
        let ks = linalg::matvec(&k, &sr);
        let born: Vec<f64> = sr.iter().zip(&ks).map(|(a, b)| a + w2 * c * b).collect();
        let vr: Vec<f64> = v.flat().iter().map(|z| z.re).collect();
        let err: f64 = vr.iter().zip(&born).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let nrm: f64 = vr.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err <= 0.05 * nrm, "{err} vs {nrm}");
    }

    #[test]
    fn study_needs_three_points_and_reports_undefined_slopes() {
        let mut cfg = StudyConfig::default_cube();
        cfg.a_list.truncate(2);
        assert!(matches!(convergence_study(&cfg), Err(EclError::Validation { .. })));
        assert_eq!(fit_line(&[0.0, 0.0], &[1.0, 2.0]), None);
        assert!((reference_exponent(0.5, 0.1) - 0.5 * 8.5 / (18.0 * 2.9)).abs() < 1e-15);
    }

    #[test]
    fn zero_densities_give_an_undefined_slope() {
        let mut cfg = StudyConfig::default_cube();
        cfg.a_list = (2..=4).map(|k| a_for_cube_lattice(k, 0.5)).collect();
        cfg.vol_res = 3;
        cfg.bdry_order = 3;
        cfg.inclusion_res = 2;
        cfg.pairs = vec![[DensityKind::Zero, DensityKind::Zero], [DensityKind::Normal, DensityKind::Normal]];
        let t = convergence_study(&cfg).unwrap();
        assert_eq!(t.m, vec![8, 27, 64]);
        assert!(t.series[0].rows.iter().all(|r| r.j_abs == 0.0));
        assert_eq!(t.series[0].slope, None);
        assert_eq!(t.summary.slope, None);
        assert!(t.series[1].slope.is_some());
        assert!(t.summary.max_gap_identity_error < 1e-10);
        let csv = t.series[1].to_csv().unwrap();
        assert_eq!(csv.lines().next().unwrap(), "a,M,P2,J_abs,exponent_running");
        assert_eq!(csv.lines().count(), 4);
    }
}
