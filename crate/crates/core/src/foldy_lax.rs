//! Discrete Foldy–Lax system for the cluster unknowns `Y_m`, the continuous
//! Lippmann–Schwinger equation for `Y(z)` and the gap between them.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{EclError, Result};
use crate::geometry::{pairwise_sum, Carrier, ClusterGeometry, QuadratureRule};
use crate::linalg::{self, CMat, ComplexLu, RMat, RealLu};
use crate::operators::{BlockOperator, NeumannGreen};
use crate::vec3::{self, Point};

/// Complex 3-vector per node of a rule.
#[derive(Clone, Debug)]
pub struct VolumeField {
    pub rule: QuadratureRule,
    pub values: Vec<[C64; 3]>,
}

impl VolumeField {
    pub fn new(rule: QuadratureRule, values: Vec<[C64; 3]>) -> Result<Self> {
        if values.len() != rule.len() {
            return Err(EclError::validation(
                "VolumeField",
                format!("{} values for {} nodes", values.len(), rule.len()),
            ));
        }
        Ok(VolumeField { rule, values })
    }

    /// Values as a flat `3n` vector.
    pub fn flat(&self) -> Vec<C64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn from_flat(rule: QuadratureRule, v: &[C64]) -> Result<Self> {
        let values = v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        VolumeField::new(rule, values)
    }

    /// Weighted L² norm.
    pub fn l2_norm(&self) -> f64 {
        crate::norms::l2_norm(&self.rule, &self.flat())
    }
}

/// Rule on a set of points with unit weights.
pub fn point_rule(points: &[Point]) -> QuadratureRule {
    QuadratureRule {
        nodes: points.to_vec(),
        weights: vec![1.0; points.len()],
        normals: None,
        carrier: Carrier::Points,
    }
}

/// `S(x) = ∫_{∂Ω} Γ(x, y) g(y) dσ_y` at the nodes of `targets`.
pub fn background_field(g: &[C64], rule_bdry: &QuadratureRule, green: &NeumannGreen, targets: &QuadratureRule) -> Result<VolumeField> {
    let op = "background_field";
    if green.bdry_rule().hash() != rule_bdry.hash() {
        return Err(EclError::validation(op, "boundary rule differs from the Green evaluator's"));
    }
    if let Some(p) = targets.nodes.iter().find(|&&p| !(green.domain.depth(p) > 0.0)) {
        return Err(EclError::validation(op, format!("target {p:?} is not strictly inside the domain")));
    }
    let v = green.single_layer(g, &targets.nodes)?;
    VolumeField::new(targets.clone(), v)
}

/// Assembled Foldy–Lax system `Y_m + Σ_{j≠m} Γ(z_m, z_j) 𝒫² a^{1−h} β_j⁻¹ Y_j = S(z_m)`.
#[derive(Clone, Debug)]
pub struct FoldyLaxSystem {
    pub centers: Vec<Point>,
    pub matrix: CMat,
    pub rhs: Vec<C64>,
    pub solution: Option<Vec<[C64; 3]>>,
}

/// Solve diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// `σ_max/σ_min`.
    pub condition: f64,
    /// `‖A⁻¹‖₂ = 1/σ_min`.
    pub stability_constant: f64,
    /// `‖A Y − S‖/‖S‖`.
    pub residual: f64,
    /// `‖Y‖₂/‖S‖₂`.
    pub amplification: f64,
}

pub fn assemble_system(
    cluster: &ClusterGeometry,
    green: &NeumannGreen,
    p2: f64,
    beta: &[C64],
    s_at_centers: &[[C64; 3]],
) -> Result<FoldyLaxSystem> {
    let op = "assemble_system";
    let m = cluster.m();
    if beta.len() != m || s_at_centers.len() != m {
        return Err(EclError::validation(op, format!("expected {m} beta values and {m} samples of S")));
    }
    if !(p2 >= 0.0) || !p2.is_finite() {
        return Err(EclError::validation(op, "P² must be finite and >= 0"));
    }
    if let Some(b) = beta.iter().find(|b| !(b.norm() > 0.0)) {
        return Err(EclError::validation(op, format!("beta = {b} is zero")));
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if vec3::dist(cluster.centers[i], cluster.centers[j]) < 1e-12 {
                return Err(EclError::validation(op, format!("centers {} and {} coincide", i + 1, j + 1)));
            }
        }
    }
    let coef = p2 * cluster.a.powf(1.0 - cluster.h);
    let pairs = green.pair_tensors(&cluster.centers)?;
    let mut a = CMat::from_fn(3 * m, 3 * m, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let s = coef / beta[j];
            for k in 0..3 {
                for l in 0..3 {
                    a[(3 * i + k, 3 * j + l)] = pairs[i][j].0[k][l] * s;
                }
            }
        }
    }
    Ok(FoldyLaxSystem {
        centers: cluster.centers.clone(),
        matrix: a,
        rhs: s_at_centers.iter().flatten().copied().collect(),
        solution: None,
    })
}

fn l2(v: &[C64]) -> f64 {
    let t: Vec<f64> = v.iter().map(|x| x.norm_sqr()).collect();
    pairwise_sum(&t).sqrt()
}

/// Dense direct solve; stores `Y_m` in the system and reports diagnostics.
pub fn solve_system(system: &mut FoldyLaxSystem) -> Result<(Vec<[C64; 3]>, SolveReport)> {
    let op = "solve_system";
    let sv = linalg::singular_values_c(op, &system.matrix)?;
    let (smax, smin) = (sv[0], sv[sv.len() - 1]);
    if !(smin > 1e-14 * smax) {
        return Err(EclError::numerical(op, format!("singular system (condition {:.3e})", smax / smin)));
    }
    let y = ComplexLu::new(op, &system.matrix)?.solve_vec(&system.rhs);
    let ay = linalg::matvec_c(&system.matrix, &y);
    let r: Vec<C64> = ay.iter().zip(&system.rhs).map(|(a, b)| a - b).collect();
    let sn = l2(&system.rhs);
    let report = SolveReport {
        condition: smax / smin,
        stability_constant: 1.0 / smin,
        residual: if sn > 0.0 { l2(&r) / sn } else { l2(&r) },
        amplification: if sn > 0.0 { l2(&y) / sn } else { 0.0 },
    };
    let ys: Vec<[C64; 3]> = y.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    system.solution = Some(ys.clone());
    Ok((ys, report))
}

impl FoldyLaxSystem {
    /// Writes the matrix in the operator binary format and the right-hand
    /// side and solution to `path.system.json`.
    pub fn export(&self, path: &Path) -> Result<()> {
        let rule = point_rule(&self.centers);
        let re = RMat::from_fn(self.matrix.nrows(), self.matrix.ncols(), |i, j| self.matrix[(i, j)].re);
        let im = RMat::from_fn(self.matrix.nrows(), self.matrix.ncols(), |i, j| self.matrix[(i, j)].im);
        BlockOperator::new(rule.clone(), rule, re, Some(im))?.export(path)?;
        #[derive(Serialize)]
        struct Dump<'a> {
            centers: &'a [Point],
            rhs: &'a [C64],
            solution: &'a Option<Vec<[C64; 3]>>,
        }
        let mut p = path.as_os_str().to_owned();
        p.push(".system.json");
        std::fs::write(
            p,
            serde_json::to_string_pretty(&Dump {
                centers: &self.centers,
                rhs: &self.rhs,
                solution: &self.solution,
            })?,
        )?;
        Ok(())
    }
}

fn solve_real_split(lu: &RealLu, v: &[C64]) -> Vec<C64> {
    let re: Vec<f64> = v.iter().map(|c| c.re).collect();
    let im: Vec<f64> = v.iter().map(|c| c.im).collect();
    let a = lu.solve_vec(&re);
    let b = lu.solve_vec(&im);
    a.into_iter().zip(b).map(|(x, y)| C64::new(x, y)).collect()
}

/// Nyström solve of `Y + 𝒫² ∫_Ω Γ(·, y) Y(y) dy = S` on the Green evaluator's
/// volume rule.
pub fn solve_continuous_lse(p2: f64, green: &NeumannGreen, rule_vol: &QuadratureRule, s: &VolumeField) -> Result<VolumeField> {
    let op = "solve_continuous_lse";
    if !(p2 >= 0.0) || !p2.is_finite() {
        return Err(EclError::validation(op, "P² must be finite and >= 0"));
    }
    if rule_vol.hash() != green.vol_rule().hash() || s.rule.hash() != rule_vol.hash() {
        return Err(EclError::validation(
            op,
            "S, the volume rule and the Green evaluator must share one rule",
        ));
    }
    if p2 == 0.0 {
        return Ok(s.clone());
    }
    let k = green.volume_operator()?;
    let n = k.nrows();
    let a = RMat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + p2 * k[(i, j)]);
    let lu = RealLu::new(op, &a)?;
    VolumeField::from_flat(rule_vol.clone(), &solve_real_split(&lu, &s.flat()))
}

/// `Y(z) = S(z) − 𝒫² ∫_Ω Γ(z, y) Y(y) dy` re-evaluated at arbitrary points.
pub fn lse_at_points(
    p2: f64,
    green: &NeumannGreen,
    y_cont: &VolumeField,
    s_at_points: &[[C64; 3]],
    points: &[Point],
) -> Result<Vec<[C64; 3]>> {
    if s_at_points.len() != points.len() {
        return Err(EclError::validation("lse_at_points", "one sample of S per point is required"));
    }
    let rows = green.volume_rows(points)?;
    let y = y_cont.flat();
    let re: Vec<f64> = y.iter().map(|c| c.re).collect();
    let im: Vec<f64> = y.iter().map(|c| c.im).collect();
    let a = linalg::matvec(&rows, &re);
    let b = linalg::matvec(&rows, &im);
    Ok((0..points.len())
        .map(|t| [0, 1, 2].map(|k| s_at_points[t][k] - p2 * C64::new(a[3 * t + k], b[3 * t + k])))
        .collect())
}

/// `RMS_m |Y_m − Y(z_m)| / RMS_m |Y(z_m)|`.
pub fn discrete_continuous_gap(ys: &[[C64; 3]], y_at_centers: &[[C64; 3]]) -> Result<f64> {
    if ys.len() != y_at_centers.len() || ys.is_empty() {
        return Err(EclError::validation(
            "discrete_continuous_gap",
            "inputs must be non-empty and of equal length",
        ));
    }
    let d: Vec<C64> = ys.iter().flatten().zip(y_at_centers.iter().flatten()).map(|(a, b)| a - b).collect();
    let r: Vec<C64> = y_at_centers.iter().flatten().copied().collect();
    let den = l2(&r);
    if den == 0.0 {
        return Err(EclError::numerical(
            "discrete_continuous_gap",
            "continuous solution vanishes at the centers",
        ));
    }
    Ok(l2(&d) / den)
}
