//! Complex geometric optics pairs, Fourier data of the density from volume
//! and boundary identities, and Fourier synthesis on the unit period cube.
//!
//! Lattice vectors are integer triples `k`; the physical frequency is
//! `ξ = 2πk`, so `e^{iξ·x}` is periodic on `[0,1]³`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{EclError, Result};
use crate::geometry::{pairwise_sum, pairwise_sum_c, QuadratureRule};
use crate::kernels::ElasticBackground;
use crate::linearization::Linearization;
use crate::norms;
use crate::vec3::{self, Point};

/// Complex 3-vector.
pub type CVec = [C64; 3];

/// Which CGO construction a pair follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgoVariant {
    /// Exact plane-wave solutions of `(𝓛 − 𝒫²)u = 0`.
    Remark,
    /// Parameter skeleton with `t = sqrt(𝒫^{4+2ι} + k_s²)`; correction fields
    /// are not solved.
    Theorem,
}

/// CGO pair for one lattice vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgoPair {
    pub k: [i64; 3],
    /// `ξ = 2πk`.
    pub xi: Point,
    /// `(e₁, e₂, e₃)` with `e₁ = ξ/|ξ|`.
    pub basis: [Point; 3],
    pub zeta1: CVec,
    pub zeta2: CVec,
    pub eta1: CVec,
    pub eta2: CVec,
    pub variant: CgoVariant,
    pub p2: f64,
    pub mu: f64,
    pub t: Option<f64>,
    pub iota: Option<f64>,
    pub k_s: Option<f64>,
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn ci(im: f64) -> C64 {
    C64::new(0.0, im)
}

fn combo(terms: &[(C64, Point)]) -> CVec {
    let mut out = [C64::new(0.0, 0.0); 3];
    for (s, v) in terms {
        for i in 0..3 {
            out[i] += s * v[i];
        }
    }
    out
}

/// Bilinear dot product (no conjugation).
pub fn cdot(a: &CVec, b: &CVec) -> C64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cdot_real(a: &CVec, b: Point) -> C64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Orthonormal basis with `e₁ = ξ/|ξ|`, `e₂ = normalize(e₁ × ê)` for the
/// canonical axis `ê` least aligned with `e₁`, and `e₃ = e₁ × e₂`.
pub fn cgo_basis(xi: Point) -> Result<[Point; 3]> {
    let n = vec3::norm(xi);
    if !(n > 0.0) || !n.is_finite() {
        return Err(EclError::validation("make_cgo_pair", "xi must be nonzero"));
    }
    let e1 = vec3::scale(xi, 1.0 / n);
    let mut axis = 0;
    for k in 1..3 {
        if e1[k].abs() < e1[axis].abs() {
            axis = k;
        }
    }
    let mut ehat = [0.0; 3];
    ehat[axis] = 1.0;
    let x = vec3::cross(e1, ehat);
    let e2 = vec3::scale(x, 1.0 / vec3::norm(x));
    let e3 = vec3::cross(e1, e2);
    Ok([e1, e2, e3])
}

/// Builds the CGO pair for lattice vector `k`. The theorem variant needs
/// `iota > 0` and uses `k_s = ω/c_s`.
pub fn make_cgo_pair(k: [i64; 3], p2: f64, bg: &ElasticBackground, variant: CgoVariant, iota: Option<f64>, omega: f64) -> Result<CgoPair> {
    let op = "make_cgo_pair";
    if k == [0, 0, 0] {
        return Err(EclError::validation(op, "xi must be nonzero"));
    }
    if !(p2 > 0.0) || !p2.is_finite() {
        return Err(EclError::validation(op, "P² must be > 0"));
    }
    bg.validate()?;
    let xi = k.map(|v| 2.0 * PI * v as f64);
    let basis = cgo_basis(xi)?;
    let [e1, e2, e3] = basis;
    let nx = vec3::norm(xi);
    let mu = bg.mu;
    match variant {
        CgoVariant::Remark => {
            let s = (p2 / mu + nx * nx / 4.0).sqrt();
            let r = (1.0 + 4.0 * p2 / (mu * nx * nx)).sqrt();
            Ok(CgoPair {
                k,
                xi,
                basis,
                zeta1: combo(&[(c(-nx / 2.0), e1), (ci(s), e2)]),
                zeta2: combo(&[(c(-nx / 2.0), e1), (ci(-s), e2)]),
                eta1: combo(&[(ci(r), e1), (c(1.0), e2)]),
                eta2: combo(&[(ci(r), e1), (c(-1.0), e2)]),
                variant,
                p2,
                mu,
                t: None,
                iota: None,
                k_s: None,
            })
        }
        CgoVariant::Theorem => {
            let Some(iota) = iota.filter(|i| *i > 0.0 && i.is_finite()) else {
                return Err(EclError::validation(op, "theorem variant needs iota > 0"));
            };
            if !(omega >= 0.0) || !omega.is_finite() {
                return Err(EclError::validation(op, "omega must be finite and >= 0"));
            }
            let ks = bg.k_s(omega);
            let t = (p2.powf(2.0 + iota) + ks * ks).sqrt();
            if !(t > ks) {
                return Err(EclError::validation(op, format!("t = {t} must exceed k_s = {ks}")));
            }
            let s = (t * t - ks * ks + nx * nx / 4.0).sqrt();
            Ok(CgoPair {
                k,
                xi,
                basis,
                zeta1: combo(&[(c(-nx / 2.0), e1), (ci(s), e2), (c(t), e3)]),
                zeta2: combo(&[(c(-nx / 2.0), e1), (ci(-s), e2), (c(-t), e3)]),
                eta1: combo(&[(c(1.0), e1), (c(nx / (2.0 * t)), e2)]),
                eta2: combo(&[(c(1.0), e1), (c(-nx / (2.0 * t)), e2)]),
                variant,
                p2,
                mu,
                t: Some(t),
                iota: Some(iota),
                k_s: Some(ks),
            })
        }
    }
}

impl CgoPair {
    /// `η₁·η₂ = −2 − 4𝒫²/(μ|ξ|²)` for the remark variant.
    pub fn divisor(&self) -> C64 {
        cdot(&self.eta1, &self.eta2)
    }

    /// Remainder scale `𝒫²/t` of the theorem variant.
    pub fn remainder_scale(&self) -> Option<f64> {
        self.t.map(|t| self.p2 / t)
    }

    fn parts(&self, which: u8) -> Result<(&CVec, &CVec)> {
        if self.variant != CgoVariant::Remark {
            return Err(EclError::unsupported(
                "cgo_field",
                "theorem-variant fields need the correction fields F₁, F₂",
            ));
        }
        match which {
            1 => Ok((&self.zeta1, &self.eta1)),
            2 => Ok((&self.zeta2, &self.eta2)),
            _ => Err(EclError::validation("cgo_field", "which must be 1 or 2")),
        }
    }
}

/// `η e^{iζ·x}` for member `which` (1 or 2) of a remark-variant pair.
pub fn cgo_field(pair: &CgoPair, which: u8, x: Point) -> Result<CVec> {
    let (z, e) = pair.parts(which)?;
    let ph = (ci(1.0) * cdot_real(z, x)).exp();
    Ok(e.map(|v| v * ph))
}

/// Traction `iμ e^{iζ·x}[(ζ·ν)η + (η·ν)ζ]` of a remark-variant field.
pub fn cgo_traction(pair: &CgoPair, which: u8, x: Point, nu: Point) -> Result<CVec> {
    let (z, e) = pair.parts(which)?;
    let ph = (ci(1.0) * cdot_real(z, x)).exp() * ci(pair.mu);
    let zn = cdot_real(z, nu);
    let en = cdot_real(e, nu);
    Ok([0, 1, 2].map(|i| ph * (zn * e[i] + en * z[i])))
}

/// Nodal samples of a CGO field, flat `3n`.
pub fn sample_field(pair: &CgoPair, which: u8, rule: &QuadratureRule) -> Result<Vec<C64>> {
    let mut out = Vec::with_capacity(3 * rule.len());
    for &x in &rule.nodes {
        out.extend(cgo_field(pair, which, x)?);
    }
    Ok(out)
}

/// Nodal samples of a CGO traction on a boundary rule, flat `3n`.
pub fn sample_traction(pair: &CgoPair, which: u8, rule: &QuadratureRule) -> Result<Vec<C64>> {
    let Some(normals) = rule.normals.as_ref() else {
        return Err(EclError::validation("cgo_traction", "expected a boundary rule"));
    };
    let mut out = Vec::with_capacity(3 * rule.len());
    for (&x, &n) in rule.nodes.iter().zip(normals) {
        out.extend(cgo_traction(pair, which, x, n)?);
    }
    Ok(out)
}

/// `∫_Ω ρ Q^f·Q^g dx` by direct quadrature.
pub fn fourier_datum_volume_oracle<F>(pair: &CgoPair, rho: F, rule_vol: &QuadratureRule) -> Result<C64>
where
    F: Fn(Point) -> f64,
{
    if rule_vol.is_boundary() {
        return Err(EclError::validation("fourier_datum_volume_oracle", "expected a volume rule"));
    }
    let mut terms = Vec::with_capacity(rule_vol.len());
    for (&x, &w) in rule_vol.nodes.iter().zip(&rule_vol.weights) {
        let q = cgo_field(pair, 1, x)?;
        let v = cgo_field(pair, 2, x)?;
        terms.push(cdot(&q, &v) * (w * rho(x)));
    }
    Ok(pairwise_sum_c(&terms))
}

/// Fourier coefficient `∫_Ω ρ e^{−iξ·x} dx` from the volume oracle.
pub fn oracle_coefficient<F>(pair: &CgoPair, rho: F, rule_vol: &QuadratureRule) -> Result<C64>
where
    F: Fn(Point) -> f64,
{
    Ok(fourier_datum_volume_oracle(pair, rho, rule_vol)? / pair.divisor())
}

/// `∫_{∂Ω} 𝒲·∂_ν(η₂e^{iζ₂·x}) dσ / (η₁·η₂)`, the Fourier coefficient of
/// `ρχ_Ω` from the boundary trace of `𝒲^{Q^f}`.
pub fn fourier_datum_boundary(pair: &CgoPair, wqf_trace: &[C64], rule_bdry: &QuadratureRule) -> Result<C64> {
    let op = "fourier_datum_boundary";
    if wqf_trace.len() != 3 * rule_bdry.len() {
        return Err(EclError::validation(op, "trace length does not match the boundary rule"));
    }
    let t = sample_traction(pair, 2, rule_bdry)?;
    let terms: Vec<C64> = (0..t.len()).map(|i| wqf_trace[i] * t[i] * rule_bdry.weights[i / 3]).collect();
    Ok(pairwise_sum_c(&terms) / pair.divisor())
}

/// Boundary-route datum for one lattice vector next to its volume oracle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryRouteDatum {
    pub k: [i64; 3],
    /// From `(Λ_P(f) − γQ^f)/ω²` with `f` the traction of `Q^f`.
    pub boundary: C64,
    /// From the linearized trace `γ𝒲^{Q^f}`.
    pub linearized: C64,
    pub oracle: C64,
    /// `‖rest‖ ‖∂_ν v‖ / (ω²|η₁·η₂|)` in boundary L².
    pub remainder_bound: f64,
}

impl BoundaryRouteDatum {
    pub fn discrepancy(&self) -> f64 {
        (self.boundary - self.oracle).norm()
    }

    pub fn within_bound(&self) -> bool {
        self.discrepancy() <= self.remainder_bound
    }
}

/// Runs the boundary route for one pair through the linearization solver.
pub fn boundary_route<F>(pair: &CgoPair, lin: &Linearization, rho: F) -> Result<BoundaryRouteDatum>
where
    F: Fn(Point) -> f64,
{
    if !(lin.omega > 0.0) {
        return Err(EclError::validation("boundary_route", "omega must be > 0"));
    }
    let rule = &lin.sn.bdry_rule;
    let w2 = lin.omega * lin.omega;
    let f = sample_traction(pair, 1, rule)?;
    let rec = lin.check(&f)?;
    let data: Vec<C64> = rec.boundary_lhs.iter().map(|v| v / w2).collect();
    let lin_trace: Vec<C64> = rec.boundary_rhs.iter().map(|v| v / w2).collect();
    let rest: Vec<C64> = data.iter().zip(&lin_trace).map(|(a, b)| a - b).collect();
    let tv = sample_traction(pair, 2, rule)?;
    Ok(BoundaryRouteDatum {
        k: pair.k,
        boundary: fourier_datum_boundary(pair, &data, rule)?,
        linearized: fourier_datum_boundary(pair, &lin_trace, rule)?,
        oracle: oracle_coefficient(pair, rho, &lin.sn.vol_rule)?,
        remainder_bound: norms::l2_norm(rule, &rest) * norms::l2_norm(rule, &tv) / pair.divisor().norm(),
    })
}

/// Symmetric lattice `|k|_∞ ≤ cut` without the origin, in lexicographic order.
pub fn lattice(cut: usize) -> Vec<[i64; 3]> {
    let c = cut as i64;
    let mut out = Vec::new();
    for i in -c..=c {
        for j in -c..=c {
            for l in -c..=c {
                if [i, j, l] != [0, 0, 0] {
                    out.push([i, j, l]);
                }
            }
        }
    }
    out
}

/// Synthesized density `ρ − mean` on a volume rule.
#[derive(Clone, Debug)]
pub struct FourierReconstruction {
    pub lattice_cut: usize,
    pub coeffs: BTreeMap<[i64; 3], C64>,
    pub rule: QuadratureRule,
    /// Real part of `Σ_{k≠0} c_k e^{2πik·x}` at each node.
    pub synthesized: Vec<f64>,
    /// `sqrt(Σ |c_k|²)` over the outermost shell `|k|_∞ = cut`.
    pub truncation_error_estimate: f64,
}

/// Synthesizes `ρ − mean` from coefficients covering `|k|_∞ ≤ lattice_cut`.
pub fn reconstruct_density(data: &BTreeMap<[i64; 3], C64>, lattice_cut: usize, rule_vol: &QuadratureRule) -> Result<FourierReconstruction> {
    let op = "reconstruct_density";
    if lattice_cut == 0 {
        return Err(EclError::validation(op, "lattice_cut must be >= 1"));
    }
    let keys = lattice(lattice_cut);
    let missing: Vec<String> = keys.iter().filter(|k| !data.contains_key(*k)).map(|k| format!("{k:?}")).collect();
    if !missing.is_empty() {
        return Err(EclError::validation(op, format!("missing lattice entries: {}", missing.join(", "))));
    }
    let coeffs: BTreeMap<[i64; 3], C64> = keys.iter().map(|k| (*k, data[k])).collect();
    let synthesized = rule_vol
        .nodes
        .iter()
        .map(|x| {
            let terms: Vec<f64> = coeffs
                .iter()
                .map(|(k, c)| {
                    let ph = 2.0 * PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2]);
                    (c * C64::new(0.0, ph).exp()).re
                })
                .collect();
            pairwise_sum(&terms)
        })
        .collect();
    let shell: Vec<f64> = coeffs
        .iter()
        .filter(|(k, _)| k.iter().map(|v| v.unsigned_abs() as usize).max() == Some(lattice_cut))
        .map(|(_, c)| c.norm_sqr())
        .collect();
    Ok(FourierReconstruction {
        lattice_cut,
        coeffs,
        rule: rule_vol.clone(),
        synthesized,
        truncation_error_estimate: pairwise_sum(&shell).sqrt(),
    })
}

impl FourierReconstruction {
    /// Relative L² error of the synthesized field against `truth − mean(truth)`.
    pub fn relative_error<F>(&self, truth: F) -> f64
    where
        F: Fn(Point) -> f64,
    {
        let r = &self.rule;
        let vals: Vec<f64> = r.nodes.iter().map(|&x| truth(x)).collect();
        let wsum = r.weights.iter().sum::<f64>();
        let mean = pairwise_sum(&vals.iter().zip(&r.weights).map(|(v, w)| v * w).collect::<Vec<_>>()) / wsum;
        let mut num = Vec::with_capacity(r.len());
        let mut den = Vec::with_capacity(r.len());
        for ((v, s), w) in vals.iter().zip(&self.synthesized).zip(&r.weights) {
            num.push(w * (s - (v - mean)).powi(2));
            den.push(w * (v - mean).powi(2));
        }
        let d = pairwise_sum(&den).sqrt();
        if d == 0.0 {
            return pairwise_sum(&num).sqrt();
        }
        pairwise_sum(&num).sqrt() / d
    }

    /// `max_k |c_{−k} − conj(c_k)|`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, c)| (self.coeffs[&k.map(|v| -v)] - c.conj()).norm())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `xi1,xi2,xi3,re,im` (integer lattice indices).
    pub fn coefficients_csv(&self) -> Result<String> {
        coefficients_csv(&self.coeffs)
    }
}

/// CSV with columns `xi1,xi2,xi3,re,im` (integer lattice indices).
pub fn coefficients_csv(coeffs: &BTreeMap<[i64; 3], C64>) -> Result<String> {
    let io = |e: csv::Error| EclError::Io(std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["xi1", "xi2", "xi3", "re", "im"]).map_err(io)?;
    for (k, c) in coeffs {
        w.write_record([
            k[0].to_string(),
            k[1].to_string(),
            k[2].to_string(),
            format!("{:.17e}", c.re),
            format!("{:.17e}", c.im),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| EclError::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| EclError::Io(std::io::Error::other(e.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    fn bg() -> ElasticBackground {
        ElasticBackground::new(2.0, 1.5, 1.0).unwrap()
    }

    #[test]
    fn remark_pair_invariants() {
        let b = bg();
        for p2 in [1.0, 10.0, 100.0] {
            for k in [[1, 0, 0], [0, -2, 1], [3, 1, -2], [1, 1, 1]] {
                let p = make_cgo_pair(k, p2, &b, CgoVariant::Remark, None, 0.0).unwrap();
                let nx2 = vec3::dot(p.xi, p.xi);
                let tol = 1e-12 * (1.0 + p2 + nx2);
                assert!((cdot(&p.zeta1, &p.zeta1) + p2 / b.mu).norm() < tol);
                assert!((cdot(&p.zeta2, &p.zeta2) + p2 / b.mu).norm() < tol);
                assert!(cdot(&p.zeta1, &p.eta1).norm() < tol);
                assert!(cdot(&p.zeta2, &p.eta2).norm() < tol);
                for i in 0..3 {
                    assert!((p.zeta1[i] + p.zeta2[i] + p.xi[i]).norm() < tol);
                }
                assert!((p.divisor() - c(-2.0 - 4.0 * p2 / (b.mu * nx2))).norm() < tol);
            }
        }
    }

    #[test]
    fn basis_is_orthonormal_and_right_handed() {
        let [e1, e2, e3] = cgo_basis([1.0, 2.0, -0.5]).unwrap();
        for (a, b) in [(e1, e2), (e1, e3), (e2, e3)] {
            assert!(vec3::dot(a, b).abs() < 1e-15);
        }
        assert!(vec3::dist(vec3::cross(e1, e2), e3) < 1e-15);
        assert!((vec3::norm(e2) - 1.0).abs() < 1e-15);
        assert!(make_cgo_pair([0, 0, 0], 1.0, &bg(), CgoVariant::Remark, None, 0.0).is_err());
    }

    #[test]
    fn field_at_origin_and_product_identity() {
        let p = make_cgo_pair([1, -1, 2], 10.0, &bg(), CgoVariant::Remark, None, 0.0).unwrap();
        assert_eq!(cgo_field(&p, 1, [0.0; 3]).unwrap(), p.eta1);
        let x = [0.3, -0.2, 0.7];
        let q = cgo_field(&p, 1, x).unwrap();
        let v = cgo_field(&p, 2, x).unwrap();
        let expect = p.divisor() * C64::new(0.0, -vec3::dot(p.xi, x)).exp();
        assert!((cdot(&q, &v) - expect).norm() < 1e-10 * expect.norm());
    }

    /// `(𝓛 − 𝒫²)u` by centred differences of the closed form.
    fn fd_residual(p: &CgoPair, x: Point, b: &ElasticBackground) -> f64 {
        let h = 1e-3;
        let u = |y: Point| cgo_field(p, 1, y).unwrap();
        let mut hess = [[[C64::new(0.0, 0.0); 3]; 3]; 3];
        for a in 0..3 {
            for bb in 0..3 {
                let mut pp = x;
                let mut pm = x;
                let mut mp = x;
                let mut mm = x;
                pp[a] += h;
                pp[bb] += h;
                pm[a] += h;
                pm[bb] -= h;
                mp[a] -= h;
                mp[bb] += h;
                mm[a] -= h;
                mm[bb] -= h;
                let (fpp, fpm, fmp, fmm) = (u(pp), u(pm), u(mp), u(mm));
                for i in 0..3 {
                    hess[i][a][bb] = (fpp[i] - fpm[i] - fmp[i] + fmm[i]) / (4.0 * h * h);
                }
            }
        }
        let u0 = u(x);
        let mut res = [C64::new(0.0, 0.0); 3];
        for i in 0..3 {
            let lap = hess[i][0][0] + hess[i][1][1] + hess[i][2][2];
            let grad_div = hess[0][0][i] + hess[1][1][i] + hess[2][2][i];
            res[i] = lap * b.mu + grad_div * (b.lambda + b.mu) - u0[i] * p.p2;
        }
        let zn = p.zeta1.iter().map(|v| v.norm_sqr()).sum::<f64>();
        let scale = u0.iter().map(|v| v.norm()).fold(0.0, f64::max) * (p.p2 + (b.lambda + 2.0 * b.mu) * zn);
        res.iter().map(|v| v.norm()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn closed_form_solves_the_shifted_navier_equation() {
        let b = bg();
        let p = make_cgo_pair([1, 0, 1], 10.0, &b, CgoVariant::Remark, None, 0.0).unwrap();
        for x in [[0.1, 0.2, 0.3], [0.8, 0.5, 0.1], [0.4, 0.9, 0.6]] {
            let r = fd_residual(&p, x, &b);
            assert!(r < 1e-5, "{r}");
        }
    }

    #[test]
    fn traction_matches_finite_differences() {
        let b = bg();
        let p = make_cgo_pair([0, 1, 1], 4.0, &b, CgoVariant::Remark, None, 0.0).unwrap();
        let x = [0.3, 0.6, 0.2];
        let nu = vec3::scale([1.0, -2.0, 0.5], 1.0 / vec3::norm([1.0, -2.0, 0.5]));
        let h = 1e-5;
        let mut grad = [[C64::new(0.0, 0.0); 3]; 3];
        for j in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (a, m) = (cgo_field(&p, 2, xp).unwrap(), cgo_field(&p, 2, xm).unwrap());
            for i in 0..3 {
                grad[i][j] = (a[i] - m[i]) / (2.0 * h);
            }
        }
        let div = grad[0][0] + grad[1][1] + grad[2][2];
        let fd: CVec = [0, 1, 2].map(|i| {
            let mut s = div * b.lambda * nu[i];
            for j in 0..3 {
                s += (grad[i][j] + grad[j][i]) * b.mu * nu[j];
            }
            s
        });
        let t = cgo_traction(&p, 2, x, nu).unwrap();
        let scale = t.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for i in 0..3 {
            assert!((t[i] - fd[i]).norm() < 1e-8 * scale, "{} vs {}", t[i], fd[i]);
        }
    }

    #[test]
    fn theorem_variant_skeleton() {
        let b = bg();
        let p2: f64 = 16.0;
        let p = make_cgo_pair([2, 1, 0], p2, &b, CgoVariant::Theorem, Some(1.0), 0.7).unwrap();
        let t = p.t.unwrap();
        let ks = b.k_s(0.7);
        assert!((t - (p2.powf(3.0) + ks * ks).sqrt()).abs() < 1e-12 * t);
        for i in 0..3 {
            assert!((p.zeta1[i] + p.zeta2[i] + p.xi[i]).norm() < 1e-10 * t);
        }
        let nx = vec3::norm(p.xi);
        let e2 = p.basis[1];
        for i in 0..3 {
            assert!((p.eta1[i] - c(p.basis[0][i] + nx / (2.0 * t) * e2[i])).norm() < 1e-14);
            assert!((p.eta2[i] - c(p.basis[0][i] - nx / (2.0 * t) * e2[i])).norm() < 1e-14);
        }
        assert!(matches!(cgo_field(&p, 1, [0.0; 3]), Err(EclError::Unsupported { .. })));
        assert!(make_cgo_pair([1, 0, 0], p2, &b, CgoVariant::Theorem, None, 0.0).is_err());
        // 𝒫²/t scales like 𝒫^{−ι}
        let r: Vec<f64> = [10.0f64, 100.0, 1000.0]
            .iter()
            .map(|&q| {
                make_cgo_pair([1, 0, 0], q, &b, CgoVariant::Theorem, Some(1.0), 0.0)
                    .unwrap()
                    .remainder_scale()
                    .unwrap()
            })
            .collect();
        let slope = (r[2] / r[0]).ln() / (1000.0f64.sqrt() / 10.0f64.sqrt()).ln();
        assert!((slope + 1.0).abs() < 1e-6, "{slope}");
    }

    #[test]
    fn volume_oracle_on_constant_and_single_mode_densities() {
        let b = bg();
        let rule = Domain::Cube.volume_rule(8).unwrap();
        let p = make_cgo_pair([1, 0, 0], 10.0, &b, CgoVariant::Remark, None, 0.0).unwrap();
        assert_eq!(fourier_datum_volume_oracle(&p, |_| 0.0, &rule).unwrap(), C64::new(0.0, 0.0));
        let d = fourier_datum_volume_oracle(&p, |_| 2.5, &rule).unwrap();
        assert!(d.norm() < 1e-10 * p.divisor().norm(), "{d}");
        let k0 = [1i64, 1, 0];
        let rho = |x: Point| 2.0 * PI * (k0[0] as f64 * x[0] + k0[1] as f64 * x[1]);
        let peak = |k: [i64; 3]| {
            let p = make_cgo_pair(k, 10.0, &b, CgoVariant::Remark, None, 0.0).unwrap();
            let re = oracle_coefficient(&p, |x| rho(x).cos(), &rule).unwrap();
            let im = oracle_coefficient(&p, |x| rho(x).sin(), &rule).unwrap();
            (re + ci(1.0) * im).norm()
        };
        let at = peak(k0);
        for k in [[0, 1, 0], [1, 0, 0], [2, 1, 0], [1, 1, 1], [1, 2, 0]] {
            assert!(at >= 10.0 * peak(k), "{k:?}");
        }
    }

    #[test]
    fn synthesis_recovers_single_mode_density() {
        let b = bg();
        let rule = Domain::Cube.volume_rule(8).unwrap();
        let truth = |x: Point| 1.0 + 0.3 * (2.0 * PI * x[0]).cos();
        let data: BTreeMap<[i64; 3], C64> = lattice(2)
            .into_iter()
            .map(|k| {
                let p = make_cgo_pair(k, 10.0, &b, CgoVariant::Remark, None, 0.0).unwrap();
                (k, oracle_coefficient(&p, truth, &rule).unwrap())
            })
            .collect();
        let rec = reconstruct_density(&data, 2, &rule).unwrap();
        assert!(rec.relative_error(truth) < 0.05);
        assert!(rec.conjugate_symmetry_defect() < 1e-12);
        let zero: BTreeMap<[i64; 3], C64> = lattice(1).into_iter().map(|k| (k, C64::new(0.0, 0.0))).collect();
        let z = reconstruct_density(&zero, 1, &rule).unwrap();
        assert!(z.synthesized.iter().all(|v| *v == 0.0));
        let mut gap = zero.clone();
        gap.remove(&[1, 0, 0]);
        let err = reconstruct_density(&gap, 1, &rule).unwrap_err().to_string();
        assert!(err.contains("[1, 0, 0]"), "{err}");
        let csv = rec.coefficients_csv().unwrap();
        assert_eq!(csv.lines().next().unwrap(), "xi1,xi2,xi3,re,im");
        assert_eq!(csv.lines().count(), 1 + 124);
    }

    #[test]
    fn boundary_datum_of_zero_trace_vanishes() {
        let rule = Domain::Cube.boundary_rule(3).unwrap();
        let p = make_cgo_pair([1, 0, 0], 10.0, &bg(), CgoVariant::Remark, None, 0.0).unwrap();
        let z = vec![C64::new(0.0, 0.0); 3 * rule.len()];
        assert_eq!(fourier_datum_boundary(&p, &z, &rule).unwrap(), C64::new(0.0, 0.0));
        assert!(fourier_datum_boundary(&p, &z[3..], &rule).is_err());
    }

    #[test]
    fn boundary_route_stays_within_remainder_bound() {
        use crate::linearization::cosine_density;
        use crate::operators::ShiftedNeumann;
        let b = ElasticBackground::unit();
        let vol = Domain::Cube.volume_rule(4).unwrap();
        let bd = Domain::Cube.boundary_rule(4).unwrap();
        let sn = ShiftedNeumann::new(&vol, &bd, &b, 10.0).unwrap();
        let lin = Linearization::new(sn, cosine_density, 1.0).unwrap();
        for k in [[1, 0, 0], [0, 1, 1]] {
            let p = make_cgo_pair(k, 10.0, &b, CgoVariant::Remark, None, 0.0).unwrap();
            let d = boundary_route(&p, &lin, cosine_density).unwrap();
            assert!(d.within_bound(), "{d:?}");
            assert!((d.boundary - d.linearized).norm() <= d.remainder_bound);
        }
    }
}
