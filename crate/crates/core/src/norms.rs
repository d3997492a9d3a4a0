//! Discrete L² and boundary Sobolev norms.
//!
//! On the unit sphere `‖f‖²_{H^s} = Σ_{l,m} (1 + l(l+1))^s |f̂_lm|²` with the
//! coefficients obtained from the product rule.

use num_complex::Complex64 as C64;

use crate::error::{EclError, Result};
use crate::geometry::{pairwise_sum, QuadratureRule};
use crate::linalg::{self, RMat};
use crate::operators::LayerEngine;
use crate::sphere;

/// Weighted L² norm of a flat 3-vector field on the nodes of `rule`.
pub fn l2_norm(rule: &QuadratureRule, f: &[C64]) -> f64 {
    let terms: Vec<f64> = f.iter().enumerate().map(|(i, v)| rule.weights[i / 3] * v.norm_sqr()).collect();
    pairwise_sum(&terms).sqrt()
}

/// Weighted L² norm of a real flat 3-vector field.
pub fn l2_norm_real(rule: &QuadratureRule, f: &[f64]) -> f64 {
    let terms: Vec<f64> = f.iter().enumerate().map(|(i, v)| rule.weights[i / 3] * v * v).collect();
    pairwise_sum(&terms).sqrt()
}

/// Weighted L² inner product `Σ w (f · conj(g))`.
pub fn l2_inner(rule: &QuadratureRule, f: &[C64], g: &[C64]) -> C64 {
    let re: Vec<f64> = (0..f.len()).map(|i| rule.weights[i / 3] * (f[i] * g[i].conj()).re).collect();
    let im: Vec<f64> = (0..f.len()).map(|i| rule.weights[i / 3] * (f[i] * g[i].conj()).im).collect();
    C64::new(pairwise_sum(&re), pairwise_sum(&im))
}

/// Matrix `M` with `‖M f‖₂ = ‖f‖_{H^s(∂Ω)}` for nodal fields on a sphere
/// engine; for `s = 0` on any engine it is the square-root weight diagonal.
pub fn boundary_sobolev_map(engine: &LayerEngine, s: f64) -> Result<RMat> {
    let rule = engine.rule();
    match (engine.sphere_projection(), engine.sphere_lmax()) {
        (Some(yw), Some(lmax)) => {
            let deg = sphere::sh_degrees(lmax);
            let nsh = deg.len();
            let nn = rule.len();
            let scale: Vec<f64> = deg.iter().map(|&l| (1.0 + (l * (l + 1)) as f64).powf(s / 2.0)).collect();
            let mut m = RMat::zeros(3 * nsh, 3 * nn);
            for q in 0..nsh {
                for j in 0..nn {
                    let v = scale[q] * yw[(q, j)];
                    for k in 0..3 {
                        m[(3 * q + k, 3 * j + k)] = v;
                    }
                }
            }
            Ok(m)
        }
        _ if s == 0.0 => {
            let sq: Vec<f64> = linalg::expand3(&rule.weights).iter().map(|w| w.sqrt()).collect();
            Ok(RMat::from_fn(sq.len(), sq.len(), |i, j| if i == j { sq[i] } else { 0.0 }))
        }
        _ => Err(EclError::unsupported(
            "boundary_sobolev_map",
            "fractional norms need a sphere boundary rule",
        )),
    }
}

/// `‖f‖_{H^s(∂Ω)}` of a nodal field.
pub fn boundary_norm(engine: &LayerEngine, s: f64, f: &[C64]) -> Result<f64> {
    let m = boundary_sobolev_map(engine, s)?;
    let re: Vec<f64> = f.iter().map(|v| v.re).collect();
    let im: Vec<f64> = f.iter().map(|v| v.im).collect();
    let a = linalg::matvec(&m, &re);
    let b = linalg::matvec(&m, &im);
    let terms: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * x + y * y).collect();
    Ok(pairwise_sum(&terms).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    #[test]
    fn sphere_norms_of_constants_and_linear_fields() {
        let rule = Domain::Ball.boundary_rule(10).unwrap();
        let eng = LayerEngine::new(&rule).unwrap();
        let one: Vec<C64> = (0..rule.len())
            .flat_map(|_| [C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)])
            .collect();
        let area = 4.0 * std::f64::consts::PI;
        assert!((boundary_norm(&eng, 0.5, &one).unwrap() - area.sqrt()).abs() < 1e-10);
        assert!((l2_norm(&rule, &one) - area.sqrt()).abs() < 1e-10);
        // x₃ e₁ lives in degree 1: ‖·‖²_{H^s} = 3^s ‖·‖²_{L²}
        let lin: Vec<C64> = rule
            .nodes
            .iter()
            .flat_map(|p| [C64::new(p[2], 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)])
            .collect();
        let l2 = l2_norm(&rule, &lin);
        let h = boundary_norm(&eng, 1.0, &lin).unwrap();
        assert!((h / l2 - 3f64.sqrt()).abs() < 1e-10);
    }
}
