//! Volume potentials and the spectrum of the Newtonian operator.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::BlockOperator;
use crate::error::{EclError, Result};
use crate::geometry::QuadratureRule;
use crate::kernels::{self, ElasticBackground, Waves};
use crate::linalg::{self, RMat};
use crate::vec3::{self, Point};

/// Radius of the ball with the volume of a quadrature cell.
pub(crate) fn equivalent_radius(w: f64) -> f64 {
    (3.0 * w / (4.0 * PI)).cbrt()
}

fn check_volume(op: &'static str, rule: &QuadratureRule) -> Result<()> {
    if rule.is_boundary() {
        return Err(EclError::validation(op, "expected a volume rule, got a boundary rule"));
    }
    rule.validate()
}

/// Volume potential `∫ Γ(x, y) φ(y) dy` on the nodes of `rule`; the diagonal
/// blocks integrate the kernel over the ball with the cell's volume.
pub fn assemble_volume(rule: &QuadratureRule, bg: &ElasticBackground, waves: Waves) -> Result<BlockOperator> {
    check_volume("assemble_volume", rule)?;
    let n = rule.len();
    let self_terms: Vec<C64> = rule
        .weights
        .iter()
        .map(|&w| kernels::ball_integral(equivalent_radius(w), bg, waves))
        .collect();
    let rows: Vec<Vec<C64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![C64::new(0.0, 0.0); 9 * n];
            for j in 0..n {
                if i == j {
                    for k in 0..3 {
                        row[(3 * k) * n + 3 * j + k] = self_terms[i];
                    }
                    continue;
                }
                let t = kernels::tensor(rule.nodes[i], rule.nodes[j], bg, waves).expect("distinct quadrature nodes");
                let w = rule.weights[j];
                for k in 0..3 {
                    for l in 0..3 {
                        row[(3 * k) * n + 3 * j + l] = t.0[k][l] * w;
                    }
                }
            }
            row
        })
        .collect();
    let complex = !(waves.ks.re == 0.0 && waves.kp.re == 0.0);
    let re = RMat::from_fn(3 * n, 3 * n, |r, c| rows[r / 3][(r % 3) * 3 * n + c].re);
    let im = complex.then(|| RMat::from_fn(3 * n, 3 * n, |r, c| rows[r / 3][(r % 3) * 3 * n + c].im));
    BlockOperator::new(rule.clone(), rule.clone(), re, im)
}

/// Static Newtonian potential `N_D` with the Kelvin kernel.
pub fn assemble_newtonian(rule: &QuadratureRule, bg: &ElasticBackground) -> Result<BlockOperator> {
    assemble_volume(rule, bg, Waves::STATIC)
}

/// Rows `3·|targets| × 3·|rule|` of the volume potential at arbitrary points.
/// A target inside a node's equivalent ball receives that ball's integral.
pub fn volume_rows(targets: &[Point], rule: &QuadratureRule, bg: &ElasticBackground, waves: Waves) -> Result<RMat> {
    check_volume("volume_rows", rule)?;
    if !(waves.ks.re == 0.0 && waves.kp.re == 0.0) {
        return Err(EclError::unsupported("volume_rows", "real kernels only"));
    }
    let n = rule.len();
    let radii: Vec<f64> = rule.weights.iter().map(|&w| equivalent_radius(w)).collect();
    let rows: Vec<Vec<f64>> = targets
        .par_iter()
        .map(|&x| {
            let mut row = vec![0.0; 9 * n];
            for j in 0..n {
                let d = vec3::dist(x, rule.nodes[j]);
                if d < radii[j] {
                    let s = kernels::ball_integral(radii[j], bg, waves).re;
                    for k in 0..3 {
                        row[(3 * k) * n + 3 * j + k] = s;
                    }
                    continue;
                }
                let t = kernels::tensor(x, rule.nodes[j], bg, waves).expect("distinct points");
                let w = rule.weights[j];
                for k in 0..3 {
                    for l in 0..3 {
                        row[(3 * k) * n + 3 * j + l] = t.0[k][l].re * w;
                    }
                }
            }
            row
        })
        .collect();
    Ok(RMat::from_fn(3 * targets.len(), 3 * n, |r, c| rows[r / 3][(r % 3) * 3 * n + c]))
}

/// Leading eigenpairs of the Newtonian operator on a reference shape.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NewtonSpectrum {
    /// Descending positive eigenvalues `λ_n^B`.
    pub eigenvalues: Vec<f64>,
    /// Eigenfields: `eigenvectors[n][3i + k]` is component `k` at node `i`,
    /// orthonormal in the weighted L² inner product.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Moments `m_n = ∫_B ẽ_n dx`.
    pub moments: Vec<[f64; 3]>,
    /// Couplings `s_n = |m_n|²`.
    pub coupling: Vec<f64>,
    /// Quadrature weights of the rule the spectrum was computed on.
    pub weights: Vec<f64>,
    pub nodes: Vec<Point>,
}

/// Relative tolerance for grouping numerically degenerate eigenvalues.
pub const DEGENERACY_TOL: f64 = 1e-6;

impl NewtonSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Zero-based indices of the eigenvalues degenerate with mode `n` (zero-based).
    pub fn cluster(&self, n: usize) -> Vec<usize> {
        let l = self.eigenvalues[n];
        (0..self.len())
            .filter(|&m| (self.eigenvalues[m] - l).abs() <= DEGENERACY_TOL * l)
            .collect()
    }

    /// Coupling of mode `n` (zero-based) averaged over its degenerate cluster
    /// and the three coordinate directions: `(1/3) Σ_cluster |m|²`.
    pub fn effective_coupling(&self, n: usize) -> f64 {
        self.cluster(n).iter().map(|&m| self.coupling[m]).sum::<f64>() / 3.0
    }

    /// First (one-based) mode whose cluster carries a nonzero moment.
    pub fn first_coupled_mode(&self) -> Option<usize> {
        let scale = self.weights.iter().sum::<f64>();
        (0..self.len()).find(|&n| self.effective_coupling(n) > 1e-8 * scale).map(|n| n + 1)
    }
}

/// Top `n_count` eigenpairs of the sqrt-weight symmetrized Newtonian operator.
pub fn newton_spectrum(rule_b: &QuadratureRule, bg: &ElasticBackground, n_count: usize) -> Result<NewtonSpectrum> {
    if n_count == 0 {
        return Err(EclError::validation("newton_spectrum", "n_count must be >= 1"));
    }
    let op = assemble_newtonian(rule_b, bg)?;
    let s = linalg::symmetric_part(&op.weighted());
    let (vals, vecs) = linalg::sym_eigen("newton_spectrum", &s)?;
    let n = rule_b.len();
    let count = n_count.min(3 * n);
    let sq: Vec<f64> = linalg::expand3(&rule_b.weights).iter().map(|w| w.sqrt()).collect();
    let mut eigenvectors = Vec::with_capacity(count);
    let mut moments = Vec::with_capacity(count);
    let mut coupling = Vec::with_capacity(count);
    for c in 0..count {
        if !(vals[c] > 0.0) {
            return Err(EclError::numerical(
                "newton_spectrum",
                format!("eigenvalue {} = {:.3e} is not positive", c + 1, vals[c]),
            ));
        }
        let mut e = vec![0.0; 3 * n];
        let mut m = [0.0; 3];
        for i in 0..3 * n {
            e[i] = vecs[(i, c)] / sq[i];
            m[i % 3] += vecs[(i, c)] * sq[i];
        }
        coupling.push(vec3::dot(m, m));
        moments.push(m);
        eigenvectors.push(e);
    }
    Ok(NewtonSpectrum {
        eigenvalues: vals[..count].to_vec(),
        eigenvectors,
        moments,
        coupling,
        weights: rule_b.weights.clone(),
        nodes: rule_b.nodes.clone(),
    })
}
