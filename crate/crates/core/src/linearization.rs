//! First-order linearization of the effective N–D map in the density:
//! `Λ_P(f) − γQ^f = ω² γ𝒲^{Q^f} + remainder`, with `Q^f = SL^𝒫(f)` and
//! `𝒲^{Q^f} = 𝒩^𝒫(ρ Q^f)`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{EclError, Result};
use crate::foldy_lax::VolumeField;
use crate::geometry::{Carrier, QuadratureRule};
use crate::linalg::{self, RMat, RealLu};
use crate::norms;
use crate::operators::{BlockOperator, LayerEngine, ShiftedNeumann};
use crate::vec3::Point;

/// `Q^f` on the volume nodes and on the boundary nodes.
#[derive(Clone, Debug)]
pub struct ShiftedField {
    pub volume: VolumeField,
    /// Nodal boundary trace, length `3nb`.
    pub boundary: Vec<C64>,
}

/// Both sides of the linearized identity for one boundary density.
#[derive(Clone, Debug)]
pub struct LinearizedRecord {
    pub qf: ShiftedField,
    pub wqf: VolumeField,
    /// `Λ_P(f) − γQ^f` at the boundary nodes.
    pub boundary_lhs: Vec<C64>,
    /// `ω² γ𝒲^{Q^f}` at the boundary nodes.
    pub boundary_rhs: Vec<C64>,
    /// `ω⁴ γ𝒩^𝒫(ρ 𝒩^𝒫(ρ Q^f))`, the second Born term.
    pub second_born: Vec<C64>,
    pub remainder_norm: f64,
    pub report: LinearizationReport,
}

/// Per-density JSON record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearizationReport {
    pub p2: f64,
    pub omega: f64,
    /// `ω² ‖ρ‖_∞ ‖𝒩^𝒫‖`.
    pub eta: f64,
    pub remainder_norm: f64,
    /// `remainder_norm · 𝒫⁴ / ‖f‖`.
    pub remainder_times_p4: f64,
    pub f_norm: f64,
    /// Boundary norm used for the remainder (`H^{1/2}` on the sphere, `L²` otherwise).
    pub remainder_space: String,
    /// Boundary norm used for `f` (`H^{-1/2}` on the sphere, `L²` otherwise).
    pub density_space: String,
}

fn split_apply(m: &RMat, v: &[C64]) -> Vec<C64> {
    let re: Vec<f64> = v.iter().map(|c| c.re).collect();
    let im: Vec<f64> = v.iter().map(|c| c.im).collect();
    let a = linalg::matvec(m, &re);
    let b = linalg::matvec(m, &im);
    a.into_iter().zip(b).map(|(x, y)| C64::new(x, y)).collect()
}

fn split_solve(lu: &RealLu, v: &[C64]) -> Vec<C64> {
    let re: Vec<f64> = v.iter().map(|c| c.re).collect();
    let im: Vec<f64> = v.iter().map(|c| c.im).collect();
    let a = lu.solve_vec(&re);
    let b = lu.solve_vec(&im);
    a.into_iter().zip(b).map(|(x, y)| C64::new(x, y)).collect()
}

fn scale_nodal(rho: &[f64], v: &[C64]) -> Vec<C64> {
    v.iter().enumerate().map(|(i, x)| x * rho[i / 3]).collect()
}

/// `Q^f = SL^𝒫(f)` on the volume and boundary nodes of `sn`.
pub fn solve_qf(f: &[C64], sn: &ShiftedNeumann) -> Result<ShiftedField> {
    if f.len() != 3 * sn.bdry_rule.len() {
        return Err(EclError::validation("solve_qf", "density length does not match the boundary rule"));
    }
    let volume = VolumeField::from_flat(sn.vol_rule.clone(), &split_apply(&sn.sl, f))?;
    let boundary = split_apply(&sn.sl_trace()?, f);
    if boundary.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(EclError::numerical("solve_qf", "non-finite single layer"));
    }
    Ok(ShiftedField { volume, boundary })
}

/// `𝒲 = 𝒩^𝒫(ρ Q^f)` by one application of `np_op`.
pub fn solve_wqf(qf: &VolumeField, rho: &[f64], np_op: &BlockOperator) -> Result<VolumeField> {
    let op = "solve_wqf";
    if qf.rule.hash() != np_op.source_rule.hash() || rho.len() != qf.rule.len() {
        return Err(EclError::validation(op, "Q^f, ρ and the resolvent must share one volume rule"));
    }
    VolumeField::from_flat(qf.rule.clone(), &np_op.apply(&scale_nodal(rho, &qf.flat()))?)
}

/// Shared state for linearization runs at one `𝒫²`.
pub struct Linearization {
    pub sn: ShiftedNeumann,
    pub omega: f64,
    /// `ρ` at the volume nodes.
    pub rho: Vec<f64>,
    pub eta: f64,
    engine: LayerEngine,
    sl_trace: RMat,
    /// Factorized `I − ω² 𝒩^𝒫 ρ`.
    lu: RealLu,
}

impl Linearization {
    /// Assembles the operators and checks `η = ω²‖ρ‖_∞‖𝒩^𝒫‖ < 1`.
    pub fn new<F>(sn: ShiftedNeumann, rho: F, omega: f64) -> Result<Self>
    where
        F: Fn(Point) -> f64,
    {
        let op = "linearization_check";
        if !(omega >= 0.0) || !omega.is_finite() {
            return Err(EclError::validation(op, "omega must be finite and >= 0"));
        }
        let rho: Vec<f64> = sn.vol_rule.nodes.iter().map(|&x| rho(x)).collect();
        if rho.iter().any(|r| !r.is_finite()) {
            return Err(EclError::validation(op, "density is not finite"));
        }
        let rho_inf = rho.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let w2 = omega * omega;
        let eta = w2 * rho_inf * sn.np_norm()?;
        if !(eta < 1.0) {
            return Err(EclError::validation(
                op,
                format!("eta = {eta:.4} violates the geometric-series condition eta < 1"),
            ));
        }
        let n = sn.np.nrows();
        let r3 = linalg::expand3(&rho);
        let a = RMat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - w2 * sn.np[(i, j)] * r3[j]);
        let lu = RealLu::new(op, &a)?;
        let engine = LayerEngine::new(&sn.bdry_rule)?;
        let sl_trace = sn.sl_trace()?;
        Ok(Linearization {
            sn,
            omega,
            rho,
            eta,
            engine,
            sl_trace,
            lu,
        })
    }

    fn is_sphere(&self) -> bool {
        matches!(self.sn.bdry_rule.carrier, Carrier::UnitSphere { .. })
    }

    /// Boundary norm of a remainder-type field.
    pub fn trace_norm(&self, v: &[C64]) -> Result<f64> {
        if self.is_sphere() {
            norms::boundary_norm(&self.engine, 0.5, v)
        } else {
            Ok(norms::l2_norm(&self.sn.bdry_rule, v))
        }
    }

    /// Boundary norm of a traction density.
    pub fn density_norm(&self, f: &[C64]) -> Result<f64> {
        if self.is_sphere() {
            norms::boundary_norm(&self.engine, -0.5, f)
        } else {
            Ok(norms::l2_norm(&self.sn.bdry_rule, f))
        }
    }

    /// `Λ_P(f)` at the boundary nodes from `q = Q^f + ω²𝒩^𝒫(ρ q)`.
    pub fn lambda_p_trace(&self, qf: &ShiftedField) -> Vec<C64> {
        let q = split_solve(&self.lu, &qf.volume.flat());
        let t = split_apply(&self.sn.trace, &scale_nodal(&self.rho, &q));
        let w2 = self.omega * self.omega;
        qf.boundary.iter().zip(t).map(|(a, b)| a + b * w2).collect()
    }

    /// Computes both sides of the linearized identity for `f`.
    pub fn check(&self, f: &[C64]) -> Result<LinearizedRecord> {
        let qf = ShiftedField {
            volume: VolumeField::from_flat(self.sn.vol_rule.clone(), &split_apply(&self.sn.sl, f))?,
            boundary: split_apply(&self.sl_trace, f),
        };
        let w2 = self.omega * self.omega;
        let rq = scale_nodal(&self.rho, &qf.volume.flat());
        let wv = split_apply(&self.sn.np, &rq);
        let wqf = VolumeField::from_flat(self.sn.vol_rule.clone(), &wv)?;
        let boundary_rhs: Vec<C64> = split_apply(&self.sn.trace, &rq).into_iter().map(|v| v * w2).collect();
        let lp = self.lambda_p_trace(&qf);
        let boundary_lhs: Vec<C64> = lp.iter().zip(&qf.boundary).map(|(a, b)| a - b).collect();
        let second_born: Vec<C64> = split_apply(&self.sn.trace, &scale_nodal(&self.rho, &wv))
            .into_iter()
            .map(|v| v * (w2 * w2))
            .collect();
        let rem: Vec<C64> = boundary_lhs.iter().zip(&boundary_rhs).map(|(a, b)| a - b).collect();
        let remainder_norm = self.trace_norm(&rem)?;
        let f_norm = self.density_norm(f)?;
        let (rs, ds) = if self.is_sphere() { ("H^1/2", "H^-1/2") } else { ("L2", "L2") };
        let report = LinearizationReport {
            p2: self.sn.p2,
            omega: self.omega,
            eta: self.eta,
            remainder_norm,
            remainder_times_p4: if f_norm > 0.0 {
                remainder_norm * self.sn.p2 * self.sn.p2 / f_norm
            } else {
                0.0
            },
            f_norm,
            remainder_space: rs.into(),
            density_space: ds.into(),
        };
        Ok(LinearizedRecord {
            qf,
            wqf,
            boundary_lhs,
            boundary_rhs,
            second_born,
            remainder_norm,
            report,
        })
    }
}

/// One-shot linearization check for a boundary density.
pub fn linearization_check<F>(f: &[C64], sn: ShiftedNeumann, rho: F, omega: f64) -> Result<LinearizedRecord>
where
    F: Fn(Point) -> f64,
{
    Linearization::new(sn, rho, omega)?.check(f)
}

/// `ρ(x) = 1 + 0.3 cos(2π x₁)`, the default background density.
pub fn cosine_density(x: Point) -> f64 {
    1.0 + 0.3 * (2.0 * std::f64::consts::PI * x[0]).cos()
}

/// Weighted L² norm of a volume field given on `rule`.
pub fn volume_norm(rule: &QuadratureRule, v: &[C64]) -> f64 {
    norms::l2_norm(rule, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use crate::kernels::ElasticBackground;
    use crate::nd_maps::DensityKind;

    fn setup(p2: f64) -> ShiftedNeumann {
        let vol = Domain::Ball.volume_rule(5).unwrap();
        let bd = Domain::Ball.boundary_rule(6).unwrap();
        ShiftedNeumann::new(&vol, &bd, &ElasticBackground::unit(), p2).unwrap()
    }

    #[test]
    fn zero_density_and_zero_rho_are_trivial() {
        let sn = setup(10.0);
        let zero = vec![C64::new(0.0, 0.0); 3 * sn.bdry_rule.len()];
        let q = solve_qf(&zero, &sn).unwrap();
        assert!(q.volume.flat().iter().chain(&q.boundary).all(|v| v.norm() == 0.0));
        let f = DensityKind::Normal.sample(Domain::Ball, &sn.bdry_rule).unwrap();
        let rec = linearization_check(&f, sn, |_| 0.0, 1.0).unwrap();
        assert_eq!(rec.remainder_norm, 0.0);
        assert!(rec.wqf.flat().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn traction_of_qf_reproduces_the_density() {
        let sn = setup(10.0);
        let f = DensityKind::Linear { coord: 2, axis: 0 }
            .sample(Domain::Ball, &sn.bdry_rule)
            .unwrap();
        let fr: Vec<f64> = f.iter().map(|v| v.re).collect();
        let lu = RealLu::new("test", &sn.half_kstar).unwrap();
        let t = linalg::matvec(&sn.half_kstar, &lu.solve_vec(&fr));
        let err: f64 = t.iter().zip(&fr).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn eta_condition_is_enforced() {
        let sn = setup(1.0);
        let norm = sn.np_norm().unwrap();
        let omega = (2.0 / norm).sqrt();
        assert!(matches!(Linearization::new(sn, |_| 1.0, omega), Err(EclError::Validation { .. })));
    }

    #[test]
    fn norm_chain_and_second_born_dominance() {
        let sn = setup(10.0);
        let np_norm = sn.np_norm().unwrap();
        let op = sn.operator().unwrap();
        let lin = Linearization::new(sn, cosine_density, 1.0).unwrap();
        let f = DensityKind::Normal.sample(Domain::Ball, &lin.sn.bdry_rule).unwrap();
        let rec = lin.check(&f).unwrap();
        let w = solve_wqf(&rec.qf.volume, &lin.rho, &op).unwrap();
        assert_eq!(w.flat(), rec.wqf.flat());
        let q_norm = rec.qf.volume.l2_norm();
        assert!(rec.wqf.l2_norm() <= np_norm * 1.3 * q_norm * (1.0 + 1e-12));
        let rem: Vec<C64> = rec.boundary_lhs.iter().zip(&rec.boundary_rhs).map(|(a, b)| a - b).collect();
        let diff: Vec<C64> = rem.iter().zip(&rec.second_born).map(|(a, b)| a - b).collect();
        let rel = lin.trace_norm(&diff).unwrap() / lin.trace_norm(&rec.second_born).unwrap();
        assert!(rel < 0.3, "second Born term misses the remainder by {rel}");
    }

    #[test]
    fn duality_between_single_layer_and_resolvent_trace() {
        let sn = setup(10.0);
        let mut seed = 11u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let phi: Vec<C64> = (0..3 * sn.vol_rule.len()).map(|_| C64::new(rnd(), rnd())).collect();
        let f: Vec<C64> = (0..3 * sn.bdry_rule.len()).map(|_| C64::new(rnd(), rnd())).collect();
        let q = solve_qf(&f, &sn).unwrap();
        let lhs = crate::nd_maps::bilinear(&sn.vol_rule, &phi, &q.volume.flat());
        let t = split_apply(&sn.trace, &phi);
        let rhs = crate::nd_maps::bilinear(&sn.bdry_rule, &f, &t);
        assert!((lhs - rhs).norm() <= 1e-8 * lhs.norm());
    }
}
