//! Neumann resolvent of the shifted Lamé operator `𝓛 − 𝒫²` on Ω.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{assemble_volume, BlockOperator, LayerEngine, LayerKind, Target};
use crate::error::{EclError, Result};
use crate::geometry::{Carrier, QuadratureRule};
use crate::kernels::ElasticBackground;
use crate::linalg::{self, RMat, RealLu};
use crate::sphere;
use crate::vec3::Point;

/// Discrete Neumann solution operators for `(𝓛 − 𝒫²)u = −φ`, `∂_ν u = f`.
#[derive(Clone)]
pub struct ShiftedNeumann {
    pub p2: f64,
    pub vol_rule: QuadratureRule,
    pub bdry_rule: QuadratureRule,
    /// Neumann single layer `SL^𝒫`: boundary traction → volume nodes.
    pub sl: RMat,
    /// Resolvent `𝒩^𝒫`: volume density → volume nodes, weight-symmetrized.
    pub np: RMat,
    /// Boundary trace `γ𝒩^𝒫`: volume density → boundary nodes, the weighted
    /// transpose of `sl`.
    pub trace: RMat,
    /// `½I + K^{i𝒫,*}` on the boundary nodes.
    pub half_kstar: RMat,
    pub bg: ElasticBackground,
}

impl ShiftedNeumann {
    pub fn new(vol_rule: &QuadratureRule, bdry_rule: &QuadratureRule, bg: &ElasticBackground, p2: f64) -> Result<Self> {
        if !(p2 > 0.0) || !p2.is_finite() {
            return Err(EclError::validation("assemble_np", "P² must be > 0"));
        }
        if vol_rule.is_boundary() {
            return Err(EclError::validation("assemble_np", "expected a volume rule"));
        }
        let waves = bg.shifted_waves(p2.sqrt());
        let eng = LayerEngine::new(bdry_rule)?;
        let phi = assemble_volume(vol_rule, bg, waves)?.re;
        let targets: Vec<Target> = vol_rule.nodes.iter().map(|&x| Target::point(x)).collect();
        let mut rows = eng.rows(&targets, &[LayerKind::Single, LayerKind::Double], bg, waves)?;
        let dl = rows.pop().unwrap();
        let sv = rows.pop().unwrap();
        let half_kstar = eng.half_plus_kstar(bg, waves)?;
        let lu = RealLu::new("assemble_np", &half_kstar)?;
        // sl = S_v A⁻¹  ⇔  slᵀ = A⁻ᵀ S_vᵀ
        let sl = lu.solve_transpose(&sv.transpose().to_owned()).transpose().to_owned();
        let wv = linalg::expand3(&vol_rule.weights);
        let wb = linalg::expand3(&bdry_rule.weights);
        let inv_wb: Vec<f64> = wb.iter().map(|w| 1.0 / w).collect();
        // traction at ∂Ω of the shifted volume potential, via the double-layer kernel
        let t_bv = linalg::scale_rows_cols(&dl.transpose().to_owned(), &inv_wb, &wv);
        let corr = &sl * &t_bv;
        let raw = RMat::from_fn(phi.nrows(), phi.ncols(), |i, j| phi[(i, j)] - corr[(i, j)]);
        let sq: Vec<f64> = wv.iter().map(|w| w.sqrt()).collect();
        let isq: Vec<f64> = sq.iter().map(|s| 1.0 / s).collect();
        let sym = linalg::symmetric_part(&linalg::scale_rows_cols(&raw, &sq, &isq));
        let np = linalg::scale_rows_cols(&sym, &isq, &sq);
        let trace = linalg::scale_rows_cols(&sl.transpose().to_owned(), &inv_wb, &wv);
        Ok(ShiftedNeumann {
            p2,
            vol_rule: vol_rule.clone(),
            bdry_rule: bdry_rule.clone(),
            sl,
            np,
            trace,
            half_kstar,
            bg: *bg,
        })
    }

    /// Boundary trace of `SL^𝒫`: boundary traction → boundary nodes.
    pub fn sl_trace(&self) -> Result<RMat> {
        let eng = LayerEngine::new(&self.bdry_rule)?;
        let waves = self.bg.shifted_waves(self.p2.sqrt());
        let sb = eng.rows(&eng.surface_targets(), &[LayerKind::Single], &self.bg, waves)?.remove(0);
        let lu = RealLu::new("sl_trace", &self.half_kstar)?;
        Ok(lu.solve_transpose(&sb.transpose().to_owned()).transpose().to_owned())
    }

    /// `SL^𝒫` evaluated at arbitrary interior points.
    pub fn sl_at(&self, points: &[Point]) -> Result<RMat> {
        let eng = LayerEngine::new(&self.bdry_rule)?;
        let waves = self.bg.shifted_waves(self.p2.sqrt());
        let tg: Vec<Target> = points.iter().map(|&x| Target::point(x)).collect();
        let s = eng.rows(&tg, &[LayerKind::Single], &self.bg, waves)?.remove(0);
        let lu = RealLu::new("sl_at", &self.half_kstar)?;
        Ok(lu.solve_transpose(&s.transpose().to_owned()).transpose().to_owned())
    }

    /// `𝒩^𝒫` as a block operator on the volume rule.
    pub fn operator(&self) -> Result<BlockOperator> {
        BlockOperator::new(self.vol_rule.clone(), self.vol_rule.clone(), self.np.clone(), None)
    }

    /// Weighted L² operator norm of `𝒩^𝒫`.
    pub fn np_norm(&self) -> Result<f64> {
        let sq: Vec<f64> = linalg::expand3(&self.vol_rule.weights).iter().map(|w| w.sqrt()).collect();
        let isq: Vec<f64> = sq.iter().map(|s| 1.0 / s).collect();
        let s = linalg::scale_rows_cols(&self.np, &sq, &isq);
        let ev = linalg::sym_eigenvalues("np_norm", &s)?;
        Ok(ev.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    /// Extreme eigenvalues (min, max) of the weight-symmetrized `𝒩^𝒫`.
    pub fn np_eigen_range(&self) -> Result<(f64, f64)> {
        let sq: Vec<f64> = linalg::expand3(&self.vol_rule.weights).iter().map(|w| w.sqrt()).collect();
        let isq: Vec<f64> = sq.iter().map(|s| 1.0 / s).collect();
        let s = linalg::scale_rows_cols(&self.np, &sq, &isq);
        let ev = linalg::sym_eigenvalues("np_eigen_range", &s)?;
        Ok((ev[0], ev[ev.len() - 1]))
    }
}

/// Degree-resolved norm of `SL^𝒫 : H^{-1/2}(∂B₁) → L²(B₁)` on the unit ball,
/// equal by duality to the norm of `γ𝒩^𝒫 : L²(B₁) → H^{1/2}(∂B₁)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceNorm {
    pub p2: f64,
    /// Norm restricted to densities of degree `l`, indexed by `l`.
    pub per_degree: Vec<f64>,
    pub norm: f64,
}

/// Zonal vector spherical harmonics of degree `l` at a unit vector:
/// `Y r̂`, `∂_θY θ̂`, `∂_θY φ̂`.
fn zonal_vsh(l: usize, p: Point) -> [[f64; 3]; 3] {
    let ct = p[2].clamp(-1.0, 1.0);
    let st = (1.0 - ct * ct).sqrt();
    let (cp, sp) = if st > 1e-14 { (p[0] / st, p[1] / st) } else { (1.0, 0.0) };
    let c = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt();
    let (pl, dpl) = if l == 0 {
        (1.0, 0.0)
    } else {
        sphere::legendre_with_derivative(l, ct)
    };
    let y = c * pl;
    let dy = -c * st * dpl;
    let et = [ct * cp, ct * sp, -st];
    let ep = [-sp, cp, 0.0];
    [[y * p[0], y * p[1], y * p[2]], et.map(|v| dy * v), ep.map(|v| dy * v)]
}

/// Evaluates [`TraceNorm`] for a unit-sphere boundary rule. The operator is
/// rotation-equivariant, so each degree is probed with its zonal fields and
/// the volume integral reduces to a meridian rule graded toward the surface.
pub fn ball_trace_norm(bdry_rule: &QuadratureRule, bg: &ElasticBackground, p2: f64) -> Result<TraceNorm> {
    let Carrier::UnitSphere { order } = bdry_rule.carrier else {
        return Err(EclError::validation("ball_trace_norm", "expected a unit-sphere boundary rule"));
    };
    if !(p2 > 0.0) {
        return Err(EclError::validation("ball_trace_norm", "P² must be > 0"));
    }
    let lmax = order - 1;
    let waves = bg.shifted_waves(p2.sqrt());
    let eng = LayerEngine::new(bdry_rule)?;
    let lu = RealLu::new("ball_trace_norm", &eng.half_plus_kstar(bg, waves)?)?;
    let mut breaks = vec![0.0, 0.5];
    let mut t = 0.5;
    while t > 2e-3 {
        t *= 0.5;
        breaks.push(1.0 - t);
    }
    breaks.push(1.0);
    let mut radial = Vec::new();
    for w in breaks.windows(2) {
        let (x, wt) = sphere::gauss_legendre_on(8, w[0], w[1]);
        radial.extend(x.into_iter().zip(wt).map(|(r, wr)| (r, wr * r * r)));
    }
    let (ct, wct) = sphere::gauss_legendre(2 * lmax + 8);
    let mut targets = Vec::with_capacity(radial.len() * ct.len());
    let mut wts = Vec::with_capacity(radial.len() * ct.len());
    for &(r, wr) in &radial {
        for (c, wc) in ct.iter().zip(&wct) {
            let s = (1.0 - c * c).sqrt();
            targets.push(Target::point([r * s, 0.0, r * c]));
            wts.push(2.0 * PI * wr * wc);
        }
    }
    let sv = eng.rows(&targets, &[LayerKind::Single], bg, waves)?.remove(0);
    let nb = bdry_rule.len();
    let ncol = 3 * (lmax + 1);
    let mut rhs = RMat::zeros(3 * nb, ncol);
    for l in 0..=lmax {
        for (j, p) in bdry_rule.nodes.iter().enumerate() {
            let v = zonal_vsh(l, *p);
            for a in 0..3 {
                for k in 0..3 {
                    rhs[(3 * j + k, 3 * l + a)] = v[a][k];
                }
            }
        }
    }
    let u = &sv * &lu.solve(&rhs);
    let mut per_degree = Vec::with_capacity(lmax + 1);
    for l in 0..=lmax {
        let types: &[usize] = if l == 0 { &[0] } else { &[0, 1, 2] };
        let ll = (l * (l + 1)) as f64;
        let h = (1.0 + ll).powf(-0.25);
        let nrm: Vec<f64> = types.iter().map(|&a| if a == 0 { h } else { h * ll.sqrt() }).collect();
        let n = types.len();
        let mut g = RMat::zeros(n, n);
        for (ia, &a) in types.iter().enumerate() {
            for (ib, &b) in types.iter().enumerate() {
                let mut acc = 0.0;
                for (t, w) in wts.iter().enumerate() {
                    for k in 0..3 {
                        acc += w * u[(3 * t + k, 3 * l + a)] * u[(3 * t + k, 3 * l + b)];
                    }
                }
                g[(ia, ib)] = acc / (nrm[ia] * nrm[ib]);
            }
        }
        let ev = linalg::sym_eigenvalues("ball_trace_norm", &linalg::symmetric_part(&g))?;
        per_degree.push(ev[n - 1].max(0.0).sqrt());
    }
    let norm = per_degree.iter().cloned().fold(0.0, f64::max);
    Ok(TraceNorm { p2, per_degree, norm })
}

/// Discretized `𝒩^𝒫` on the volume rule.
pub fn assemble_np(rule_vol: &QuadratureRule, rule_bdry: &QuadratureRule, bg: &ElasticBackground, p2: f64) -> Result<BlockOperator> {
    ShiftedNeumann::new(rule_vol, rule_bdry, bg, p2)?.operator()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use num_complex::Complex64 as C64;

    #[test]
    fn resolvent_norm_decays_like_inverse_shift() {
        let bg = ElasticBackground::unit();
        let vol = Domain::Ball.volume_rule(6).unwrap();
        let bd = Domain::Ball.boundary_rule(8).unwrap();
        for p2 in [10.0, 100.0] {
            let np = ShiftedNeumann::new(&vol, &bd, &bg, p2).unwrap();
            let norm = np.np_norm().unwrap();
            assert!(norm <= 1.05 / p2, "P²={p2}: {norm}");
            let (lo, _) = np.np_eigen_range().unwrap();
            assert!(lo >= -1e-8 * norm, "P²={p2}: min eigenvalue {lo}");
        }
    }

    #[test]
    fn resolvent_maps_zero_to_zero_and_trace_is_weighted_transpose() {
        let bg = ElasticBackground::unit();
        let vol = Domain::Cube.volume_rule(4).unwrap();
        let bd = Domain::Cube.boundary_rule(4).unwrap();
        let np = ShiftedNeumann::new(&vol, &bd, &bg, 10.0).unwrap();
        let op = np.operator().unwrap();
        let zero = vec![C64::new(0.0, 0.0); op.cols()];
        assert!(op.apply(&zero).unwrap().iter().all(|v| v.norm() == 0.0));
        // ⟨γ𝒩φ, f⟩_{∂Ω} = ⟨φ, SL f⟩_Ω
        let nv = 3 * vol.len();
        let nb = 3 * bd.len();
        let phi: Vec<f64> = (0..nv).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let f: Vec<f64> = (0..nb).map(|i| ((i * 5 % 13) as f64 - 6.0) / 6.0).collect();
        let wv = linalg::expand3(&vol.weights);
        let wb = linalg::expand3(&bd.weights);
        let tphi = linalg::matvec(&np.trace, &phi);
        let slf = linalg::matvec(&np.sl, &f);
        let lhs: f64 = (0..nb).map(|i| wb[i] * tphi[i] * f[i]).sum();
        let rhs: f64 = (0..nv).map(|i| wv[i] * phi[i] * slf[i]).sum();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()));
    }

    #[test]
    fn rejects_nonpositive_shift() {
        let bg = ElasticBackground::unit();
        let vol = Domain::Ball.volume_rule(3).unwrap();
        let bd = Domain::Ball.boundary_rule(4).unwrap();
        assert!(ShiftedNeumann::new(&vol, &bd, &bg, 0.0).is_err());
        assert!(ball_trace_norm(&Domain::Cube.boundary_rule(3).unwrap(), &bg, 1.0).is_err());
    }
}
