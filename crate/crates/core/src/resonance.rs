//! Frequency tuning near a Newtonian eigenvalue, the effective shift 𝒫², the
//! per-inclusion resolvent field `W` and the weights α and β.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EclError, Result};
use crate::geometry::{pairwise_sum, ClusterGeometry, QuadratureRule};
use crate::kernels::ElasticBackground;
use crate::linalg::{self, RMat, RealLu};
use crate::operators::{assemble_newtonian, NeumannGreen, NewtonSpectrum};
use crate::vec3;
use num_complex::Complex64 as C64;

/// Driving frequency tuned against mode `n0` of the reference spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencySetting {
    /// One-based mode index.
    pub n0: usize,
    pub c_n0: f64,
    pub h: f64,
    pub a: f64,
    pub rho_tilde1: f64,
    /// Inclusion density `ρ̃₁ a⁻²`.
    pub rho1: f64,
    /// `λ_{n0}^B`.
    pub lambda_b: f64,
    pub omega0: f64,
    pub omega: f64,
}

impl FrequencySetting {
    /// Contrast `ω²ρ₁`.
    pub fn contrast(&self) -> f64 {
        self.omega * self.omega * self.rho1
    }

    /// `1 − ω²ρ₁λ^{D}` for a reference eigenvalue `λ^B`, with `λ^D = a²λ^B`.
    pub fn gap(&self, lambda_b: f64) -> f64 {
        1.0 - self.omega * self.omega * self.rho_tilde1 * lambda_b
    }
}

fn mode_index(op: &'static str, spectrum: &NewtonSpectrum, n0: usize) -> Result<usize> {
    if n0 == 0 || n0 > spectrum.len() {
        return Err(EclError::validation(
            op,
            format!("n0 = {n0} outside the computed range 1..={}", spectrum.len()),
        ));
    }
    Ok(n0 - 1)
}

/// Chooses `ω² = ω₀²(1 − c_{n0} a^h)` with `ω₀² = 1/(ρ̃₁ λ_{n0}^B)`, so that
/// the gap at `n0` is exactly `c_{n0} a^h`.
pub fn tune_frequency(spectrum: &NewtonSpectrum, n0: usize, c_n0: f64, a: f64, h: f64, rho_tilde1: f64) -> Result<FrequencySetting> {
    let op = "tune_frequency";
    let i = mode_index(op, spectrum, n0)?;
    if !(c_n0 < 0.0) || !c_n0.is_finite() {
        return Err(EclError::validation(op, format!("c_n0 must be negative, got {c_n0}")));
    }
    if !(h > 1.0 / 3.0 && h < 1.0) {
        return Err(EclError::validation(op, format!("h = {h} violates 1/3 < h < 1")));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(EclError::validation(op, "a must be > 0"));
    }
    if !(rho_tilde1 > 0.0) || !rho_tilde1.is_finite() {
        return Err(EclError::validation(op, "rho_tilde1 must be > 0"));
    }
    let lambda_b = spectrum.eigenvalues[i];
    if !(lambda_b > 0.0) {
        return Err(EclError::validation(op, "eigenvalue must be positive"));
    }
    let omega0 = (1.0 / (rho_tilde1 * lambda_b)).sqrt();
    let omega = omega0 * (1.0 - c_n0 * a.powf(h)).sqrt();
    Ok(FrequencySetting {
        n0,
        c_n0,
        h,
        a,
        rho_tilde1,
        rho1: rho_tilde1 / (a * a),
        lambda_b,
        omega0,
        omega,
    })
}

/// Gaps `1 − ω²ρ₁λ_n^D` for every computed mode.
pub fn spectral_gaps(spectrum: &NewtonSpectrum, setting: &FrequencySetting) -> Vec<f64> {
    spectrum.eigenvalues.iter().map(|&l| setting.gap(l)).collect()
}

/// `𝒫² = −s_{n0}/(λ_{n0}^B c_{n0})` with the cluster-averaged coupling.
pub fn effective_p2(spectrum: &NewtonSpectrum, n0: usize, c_n0: f64) -> Result<f64> {
    let op = "effective_p2";
    let i = mode_index(op, spectrum, n0)?;
    if !(c_n0 < 0.0) || !c_n0.is_finite() {
        return Err(EclError::validation(op, format!("c_n0 must be negative, got {c_n0}")));
    }
    let s = spectrum.effective_coupling(i);
    let scale = spectrum.weights.iter().sum::<f64>();
    if !(s > 1e-8 * scale) {
        let hint = spectrum
            .first_coupled_mode()
            .map_or(String::new(), |m| format!("; first coupled mode is {m}"));
        return Err(EclError::validation(op, format!("mode {n0} has zero coupling{hint}")));
    }
    Ok(-s / (spectrum.eigenvalues[i] * c_n0))
}

/// A 3×3-valued field on the nodes of a volume rule.
#[derive(Clone, Debug)]
pub struct TensorField {
    pub rule: QuadratureRule,
    pub values: Vec<[[f64; 3]; 3]>,
}

impl TensorField {
    /// `∫ F dx`.
    pub fn integral(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for k in 0..3 {
            for l in 0..3 {
                let t: Vec<f64> = self.values.iter().zip(&self.rule.weights).map(|(v, w)| w * v[k][l]).collect();
                out[k][l] = pairwise_sum(&t);
            }
        }
        out
    }

    /// `(∫ |F|²_F dx)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let t: Vec<f64> = self
            .values
            .iter()
            .zip(&self.rule.weights)
            .map(|(v, w)| w * v.iter().flatten().map(|x| x * x).sum::<f64>())
            .collect();
        pairwise_sum(&t).sqrt()
    }

    /// Column `l` as a flat nodal vector field.
    pub fn column(&self, l: usize) -> Vec<f64> {
        self.values.iter().flat_map(|v| [v[0][l], v[1][l], v[2][l]]).collect()
    }
}

/// Solves `(ω²ρ₁)⁻¹ W − N_D[W] = 𝕀` column by column on a rule for `D`.
pub fn solve_w(rule_dm: &QuadratureRule, setting: &FrequencySetting, bg: &ElasticBackground) -> Result<TensorField> {
    let op = "solve_w";
    if rule_dm.is_boundary() || rule_dm.is_empty() {
        return Err(EclError::validation(op, "expected a non-empty volume rule"));
    }
    let kappa = setting.contrast();
    let n = rule_dm.len();
    let nd = assemble_newtonian(rule_dm, bg)?;
    let ev = linalg::sym_eigenvalues(op, &linalg::symmetric_part(&nd.weighted()))?;
    let gap = ev.iter().map(|l| (1.0 - kappa * l).abs()).fold(f64::INFINITY, f64::min);
    if gap < 1e-12 {
        return Err(EclError::numerical(
            op,
            format!("contrast hits a discrete eigenvalue (gap {gap:.3e})"),
        ));
    }
    let a = RMat::from_fn(3 * n, 3 * n, |i, j| if i == j { 1.0 / kappa } else { 0.0 } - nd.re[(i, j)]);
    let rhs = RMat::from_fn(3 * n, 3, |i, l| if i % 3 == l { 1.0 } else { 0.0 });
    let sol = RealLu::new(op, &a)?.solve(&rhs);
    let values = (0..n)
        .map(|j| {
            let mut v = [[0.0; 3]; 3];
            for k in 0..3 {
                for l in 0..3 {
                    v[k][l] = sol[(3 * j + k, l)];
                }
            }
            v
        })
        .collect();
    Ok(TensorField {
        rule: rule_dm.clone(),
        values,
    })
}

/// Scalar scattering weight `α = (1/3) tr ∫_D W dx`.
pub fn scattering_alpha(w_field: &TensorField, rule_dm: &QuadratureRule) -> Result<f64> {
    if w_field.values.len() != rule_dm.len() {
        return Err(EclError::validation("scattering_alpha", "field and rule sizes differ"));
    }
    let m = TensorField {
        rule: rule_dm.clone(),
        values: w_field.values.clone(),
    }
    .integral();
    Ok((m[0][0] + m[1][1] + m[2][2]) / 3.0)
}

/// `β_m = 1 − (1/3) tr ∫_{D_m} W(x) R(x, z_m) dx`. `w` lives on the centred
/// copy `aB`; it is translated to every center.
pub fn beta_coefficients(cluster: &ClusterGeometry, w: &TensorField, green: &NeumannGreen) -> Result<Vec<C64>> {
    let op = "beta_coefficients";
    let centroid = w
        .rule
        .nodes
        .iter()
        .zip(&w.rule.weights)
        .fold([0.0; 3], |acc, (p, wt)| vec3::add(acc, vec3::scale(*p, *wt)));
    let vol = w.rule.measure();
    if vec3::norm(centroid) > 1e-9 * vol.cbrt() * vol {
        return Err(EclError::validation(op, "W must be given on an inclusion centred at the origin"));
    }
    let betas: Vec<C64> = cluster
        .centers
        .par_iter()
        .map(|&z| {
            let targets: Vec<_> = w.rule.nodes.iter().map(|&x| vec3::add(z, x)).collect();
            let r = green.regular_part(&targets, &[z])?.remove(0);
            let mut tr = 0.0;
            for (t, rt) in r.iter().enumerate() {
                let rr = rt.re();
                for k in 0..3 {
                    for l in 0..3 {
                        tr += w.rule.weights[t] * w.values[t][k][l] * rr[l][k];
                    }
                }
            }
            Ok(C64::new(1.0 - tr / 3.0, 0.0))
        })
        .collect::<Result<_>>()?;
    if let Some((m, b)) = betas.iter().enumerate().find(|(_, b)| !(b.norm() > 0.5)) {
        return Err(EclError::numerical(
            op,
            format!("|beta_{}| = {:.3e} is not above 0.5", m + 1, b.norm()),
        ));
    }
    Ok(betas)
}

/// 𝒫², α and the β coefficients of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub p2: f64,
    pub alpha: f64,
    pub beta: Vec<C64>,
}

/// Mean of β and the largest `|β − 1|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaStats {
    pub mean: f64,
    pub max_dev: f64,
}

/// Serialized form of [`EffectiveParams`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSummary {
    pub p2: f64,
    pub alpha: f64,
    pub beta_stats: BetaStats,
}

impl EffectiveParams {
    pub fn beta_stats(&self) -> BetaStats {
        let n = self.beta.len().max(1) as f64;
        BetaStats {
            mean: self.beta.iter().map(|b| b.re).sum::<f64>() / n,
            max_dev: self.beta.iter().map(|b| (b - 1.0).norm()).fold(0.0, f64::max),
        }
    }

    pub fn summary(&self) -> EffectiveSummary {
        EffectiveSummary {
            p2: self.p2,
            alpha: self.alpha,
            beta_stats: self.beta_stats(),
        }
    }
}
