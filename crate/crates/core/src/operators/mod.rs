//! Discretized integral operators: volume potentials, layer potentials,
//! the shifted Neumann resolvent and the Neumann Green tensor.

mod green;
mod layers;
mod shifted;
mod volume;

pub use green::{GreenMode, NeumannGreen, RigidBasis};
pub use layers::{assemble_layer, neumann_poincare, LayerEngine, LayerKind, Target};
pub use shifted::{assemble_np, ball_trace_norm, ShiftedNeumann, TraceNorm};
pub use volume::{assemble_newtonian, assemble_volume, newton_spectrum, volume_rows, NewtonSpectrum};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{EclError, Result};
use crate::geometry::QuadratureRule;
use crate::kernels::Tensor3;
use crate::linalg::{self, RMat};

/// Dense matrix of 3×3 blocks mapping nodal vector fields on the source rule
/// to nodal vector fields on the target rule. Block `(i, j)` occupies rows
/// `3i..3i+3` and columns `3j..3j+3`.
#[derive(Clone, Debug)]
pub struct BlockOperator {
    pub source_rule: QuadratureRule,
    pub target_rule: QuadratureRule,
    pub re: RMat,
    pub im: Option<RMat>,
}

/// Sidecar metadata written next to an exported operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSidecar {
    pub rows: usize,
    pub cols: usize,
    pub source_rule_hash: String,
    pub target_rule_hash: String,
}

impl BlockOperator {
    pub fn new(source_rule: QuadratureRule, target_rule: QuadratureRule, re: RMat, im: Option<RMat>) -> Result<Self> {
        let (r, c) = (3 * target_rule.len(), 3 * source_rule.len());
        if re.nrows() != r || re.ncols() != c {
            return Err(EclError::validation(
                "BlockOperator",
                format!("expected {r}x{c}, got {}x{}", re.nrows(), re.ncols()),
            ));
        }
        if let Some(m) = &im {
            if m.nrows() != r || m.ncols() != c {
                return Err(EclError::validation("BlockOperator", "imaginary part has the wrong shape"));
            }
        }
        Ok(BlockOperator {
            source_rule,
            target_rule,
            re,
            im,
        })
    }

    pub fn rows(&self) -> usize {
        self.re.nrows()
    }

    pub fn cols(&self) -> usize {
        self.re.ncols()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_none()
    }

    pub fn block(&self, i: usize, j: usize) -> Tensor3 {
        let mut t = Tensor3::zero();
        for k in 0..3 {
            for l in 0..3 {
                let im = self.im.as_ref().map_or(0.0, |m| m[(3 * i + k, 3 * j + l)]);
                t.0[k][l] = C64::new(self.re[(3 * i + k, 3 * j + l)], im);
            }
        }
        t
    }

    /// Applies the operator to a flat field of `3·|source|` complex values.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.cols() {
            return Err(EclError::validation(
                "BlockOperator::apply",
                "field length does not match source rule",
            ));
        }
        let xr: Vec<f64> = x.iter().map(|v| v.re).collect();
        let xi: Vec<f64> = x.iter().map(|v| v.im).collect();
        let rr = linalg::matvec(&self.re, &xr);
        let ri = linalg::matvec(&self.re, &xi);
        let mut out: Vec<C64> = rr.iter().zip(&ri).map(|(a, b)| C64::new(*a, *b)).collect();
        if let Some(m) = &self.im {
            let ir = linalg::matvec(m, &xr);
            let ii = linalg::matvec(m, &xi);
            for (o, (a, b)) in out.iter_mut().zip(ir.iter().zip(&ii)) {
                *o += C64::new(-b, *a);
            }
        }
        Ok(out)
    }

    /// Applies the real part to a real field.
    pub fn apply_real(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols() {
            return Err(EclError::validation(
                "BlockOperator::apply_real",
                "field length does not match source rule",
            ));
        }
        Ok(linalg::matvec(&self.re, x))
    }

    /// `W_t^{1/2} A W_s^{-1/2}` of the real part: the matrix of the operator
    /// between weighted discrete L² spaces.
    pub fn weighted(&self) -> RMat {
        let l: Vec<f64> = linalg::expand3(&self.target_rule.weights).iter().map(|w| w.sqrt()).collect();
        let r: Vec<f64> = linalg::expand3(&self.source_rule.weights).iter().map(|w| 1.0 / w.sqrt()).collect();
        linalg::scale_rows_cols(&self.re, &l, &r)
    }

    /// Operator norm between the weighted discrete L² spaces (real part).
    pub fn l2_norm(&self) -> Result<f64> {
        linalg::spectral_norm("BlockOperator::l2_norm", &self.weighted())
    }

    /// Writes `path` (row-major little-endian complex128) and `path.json`.
    pub fn export(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                let im = self.im.as_ref().map_or(0.0, |m| m[(i, j)]);
                f.write_all(&self.re[(i, j)].to_le_bytes())?;
                f.write_all(&im.to_le_bytes())?;
            }
        }
        f.flush()?;
        let side = OperatorSidecar {
            rows: self.rows(),
            cols: self.cols(),
            source_rule_hash: self.source_rule.hash(),
            target_rule_hash: self.target_rule.hash(),
        };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Reads an exported operator back as (sidecar, row-major complex entries).
pub fn import_operator(path: &Path) -> Result<(OperatorSidecar, Vec<C64>)> {
    let side: OperatorSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != 16 * side.rows * side.cols {
        return Err(EclError::validation("import_operator", "binary size does not match sidecar"));
    }
    let data = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect();
    Ok((side, data))
}

/// Writes a flat real matrix in the same binary format.
pub fn export_matrix(path: &Path, m: &RMat, source_hash: &str, target_hash: &str) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            f.write_all(&m[(i, j)].to_le_bytes())?;
            f.write_all(&0.0f64.to_le_bytes())?;
        }
    }
    f.flush()?;
    let side = OperatorSidecar {
        rows: m.nrows(),
        cols: m.ncols(),
        source_rule_hash: source_hash.to_string(),
        target_rule_hash: target_hash.to_string(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

/// Six rigid displacement fields sampled on the nodes, orthonormal in the
/// weighted inner product, as columns of a `3n × 6` matrix.
pub fn rigid_modes(rule: &QuadratureRule) -> RMat {
    let n = rule.len();
    let c = {
        let m = rule.measure();
        let mut c = [0.0; 3];
        for (p, w) in rule.nodes.iter().zip(&rule.weights) {
            for k in 0..3 {
                c[k] += w * p[k] / m;
            }
        }
        c
    };
    let mut r = RMat::zeros(3 * n, 6);
    for (i, p) in rule.nodes.iter().enumerate() {
        let d = crate::vec3::sub(*p, c);
        for k in 0..3 {
            r[(3 * i + k, k)] = 1.0;
        }
        // rotations e_a × d
        for a in 0..3 {
            let mut e = [0.0; 3];
            e[a] = 1.0;
            let v = crate::vec3::cross(e, d);
            for k in 0..3 {
                r[(3 * i + k, 3 + a)] = v[k];
            }
        }
    }
    let w = linalg::expand3(&rule.weights);
    // modified Gram–Schmidt in the weighted inner product
    for j in 0..6 {
        for q in 0..j {
            let dot: f64 = (0..3 * n).map(|i| w[i] * r[(i, j)] * r[(i, q)]).sum();
            for i in 0..3 * n {
                let v = r[(i, q)];
                r[(i, j)] -= dot * v;
            }
        }
        let nrm: f64 = (0..3 * n).map(|i| w[i] * r[(i, j)] * r[(i, j)]).sum::<f64>().sqrt();
        for i in 0..3 * n {
            r[(i, j)] /= nrm;
        }
    }
    r
}

/// Removes the rigid components of a boundary field in the weighted inner product.
pub fn project_out_rigid(rule: &QuadratureRule, modes: &RMat, f: &mut [f64]) {
    let w = linalg::expand3(&rule.weights);
    for j in 0..modes.ncols() {
        let dot: f64 = (0..f.len()).map(|i| w[i] * modes[(i, j)] * f[i]).sum();
        for (i, v) in f.iter_mut().enumerate() {
            *v -= dot * modes[(i, j)];
        }
    }
}
