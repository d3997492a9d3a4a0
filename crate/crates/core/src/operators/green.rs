//! Neumann Green tensor `Γ = Γ⁰ + R` of `𝓛 + ω²ρ` on Ω.
//!
//! The static generalized Neumann function `G_N` has traction
//! `−Σ_q r_q(x) r_q(y)` and no rigid component on ∂Ω, where `r_q` are the
//! rigid motions orthonormal in `L²(∂Ω)`. With it the Green tensor solves
//!
//! `Γ(x,y) = G_N(x,y) + ω² ∫_Ω G_N(x,z) ρ(z) Γ(z,y) dz + Σ_q r_q(x) c_q(y)`,
//! `ω² ∫_Ω ρ(z) r_q(z)·Γ(z,y) dz = −r_q(y)`,
//!
//! which makes the traction of Γ vanish on ∂Ω. When `ω²ρ ≡ 0` the Neumann
//! problem has no solution and `G_N` itself is returned.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::volume::equivalent_radius;
use super::{assemble_volume, project_out_rigid, volume_rows, LayerEngine, LayerKind, Target};
use crate::error::{EclError, Result};
use crate::geometry::{Carrier, Domain, QuadratureRule};
use crate::kernels::{self, ElasticBackground, Tensor3, Waves};
use crate::linalg::{self, RMat, RealLu};
use crate::vec3::{self, Point};
use num_complex::Complex64 as C64;

/// Which Green tensor an evaluator returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenMode {
    /// `Γ = Γ⁰`.
    FreeSpace,
    /// `Γ = Γ⁰ + R` with zero traction on ∂Ω.
    Corrected,
}

/// Rigid motions `r_q(x) = t_q + w_q × (x − c)` orthonormal on a boundary rule.
#[derive(Clone, Debug)]
pub struct RigidBasis {
    center: Point,
    /// `coef[(a, q)]`: weight of raw field `a` in mode `q`.
    coef: RMat,
}

fn raw_rigid(c: Point, x: Point, a: usize) -> Point {
    let mut e = [0.0; 3];
    if a < 3 {
        e[a] = 1.0;
        e
    } else {
        e[a - 3] = 1.0;
        vec3::cross(e, vec3::sub(x, c))
    }
}

impl RigidBasis {
    pub fn new(rule: &QuadratureRule) -> Self {
        let m = rule.measure();
        let mut c = [0.0; 3];
        for (p, w) in rule.nodes.iter().zip(&rule.weights) {
            c = vec3::add(c, vec3::scale(*p, w / m));
        }
        let mut gram = [[0.0; 6]; 6];
        for (p, w) in rule.nodes.iter().zip(&rule.weights) {
            for a in 0..6 {
                for b in 0..6 {
                    gram[a][b] += w * vec3::dot(raw_rigid(c, *p, a), raw_rigid(c, *p, b));
                }
            }
        }
        let inner = |u: &[f64; 6], v: &[f64; 6]| -> f64 {
            let mut s = 0.0;
            for a in 0..6 {
                for b in 0..6 {
                    s += u[a] * gram[a][b] * v[b];
                }
            }
            s
        };
        let mut cols: Vec<[f64; 6]> = Vec::with_capacity(6);
        for q in 0..6 {
            let mut v = [0.0; 6];
            v[q] = 1.0;
            for u in &cols {
                let d = inner(u, &v);
                for a in 0..6 {
                    v[a] -= d * u[a];
                }
            }
            let n = inner(&v, &v).sqrt();
            cols.push(v.map(|x| x / n));
        }
        RigidBasis {
            center: c,
            coef: RMat::from_fn(6, 6, |a, q| cols[q][a]),
        }
    }

    /// `out[k][q]` = component `k` of mode `q` at `x`.
    pub fn values(&self, x: Point) -> [[f64; 6]; 3] {
        let mut out = [[0.0; 6]; 3];
        for a in 0..6 {
            let r = raw_rigid(self.center, x, a);
            for q in 0..6 {
                for k in 0..3 {
                    out[k][q] += self.coef[(a, q)] * r[k];
                }
            }
        }
        out
    }

    /// Mode values at points, as a `3·|points| × 6` matrix.
    pub fn matrix(&self, points: &[Point]) -> RMat {
        let mut m = RMat::zeros(3 * points.len(), 6);
        for (i, p) in points.iter().enumerate() {
            let v = self.values(*p);
            for k in 0..3 {
                for q in 0..6 {
                    m[(3 * i + k, q)] = v[k][q];
                }
            }
        }
        m
    }
}

struct Corrected {
    /// Deflated `½I + K* + R_b R_bᵀ W_b`.
    lu_b: RealLu,
    rigid: RigidBasis,
    rb: RMat,
    rv: RMat,
    sb: RMat,
    sv: RMat,
    /// Boundary densities of `G_N(·, z)` for every volume node `z`.
    psi_v: RMat,
    /// Rigid normalization `⟨Γ⁰(·,z) + SL ψ_z, r_q⟩_{∂Ω}` per volume node.
    nrm_v: RMat,
    /// `G_N` between volume nodes with quadrature weights on the columns.
    kvv: RMat,
    system: Option<RealLu>,
}

/// Green tensor evaluator.
pub struct NeumannGreen {
    pub mode: GreenMode,
    pub bg: ElasticBackground,
    pub omega: f64,
    pub domain: Domain,
    vol_rule: QuadratureRule,
    engine: LayerEngine,
    rho: Vec<f64>,
    corrected: Option<Corrected>,
}

fn domain_of(rule: &QuadratureRule) -> Result<Domain> {
    match rule.carrier {
        Carrier::UnitSphere { .. } => Ok(Domain::Ball),
        Carrier::CubeSurface { .. } => Ok(Domain::Cube),
        _ => Err(EclError::validation("neumann_green", "unsupported boundary rule")),
    }
}

/// Kelvin traction at the boundary nodes for unit sources at `y`, `3nb × 3`.
fn kelvin_traction(bdry: &QuadratureRule, y: Point, bg: &ElasticBackground) -> Result<RMat> {
    let normals = bdry.normals.as_ref().unwrap();
    let mut t = RMat::zeros(3 * bdry.len(), 3);
    for j in 0..bdry.len() {
        let k = kernels::traction_kernel(bdry.nodes[j], y, normals[j], bg, Waves::STATIC)?;
        for a in 0..3 {
            for l in 0..3 {
                t[(3 * j + a, l)] = k.0[a][l].re;
            }
        }
    }
    Ok(t)
}

/// Kelvin tensor from `y` to each point, `3·|points| × 3`.
fn kelvin_columns(points: &[Point], y: Point, bg: &ElasticBackground) -> Result<RMat> {
    let mut g = RMat::zeros(3 * points.len(), 3);
    for (i, &x) in points.iter().enumerate() {
        let t = kernels::kelvin_tensor(x, y, bg)?;
        for k in 0..3 {
            for l in 0..3 {
                g[(3 * i + k, l)] = t.0[k][l].re;
            }
        }
    }
    Ok(g)
}

fn add_into(a: &mut RMat, b: &RMat, s: f64) {
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            a[(i, j)] += s * b[(i, j)];
        }
    }
}

impl NeumannGreen {
    pub fn new<F>(
        vol_rule: &QuadratureRule,
        bdry_rule: &QuadratureRule,
        bg: &ElasticBackground,
        density: F,
        omega: f64,
        mode: GreenMode,
    ) -> Result<Self>
    where
        F: Fn(Point) -> f64,
    {
        if !(omega >= 0.0) || !omega.is_finite() {
            return Err(EclError::validation("neumann_green", "omega must be finite and >= 0"));
        }
        if vol_rule.is_boundary() {
            return Err(EclError::validation("neumann_green", "expected a volume rule"));
        }
        let domain = domain_of(bdry_rule)?;
        let engine = LayerEngine::new(bdry_rule)?;
        let rho: Vec<f64> = vol_rule.nodes.iter().map(|&x| density(x)).collect();
        if rho.iter().any(|r| !r.is_finite()) {
            return Err(EclError::validation("neumann_green", "density is not finite"));
        }
        let corrected = match mode {
            GreenMode::FreeSpace => None,
            GreenMode::Corrected => Some(Self::build(vol_rule, &engine, bg, &rho, omega)?),
        };
        Ok(NeumannGreen {
            mode,
            bg: *bg,
            omega,
            domain,
            vol_rule: vol_rule.clone(),
            engine,
            rho,
            corrected,
        })
    }

    fn build(vol: &QuadratureRule, eng: &LayerEngine, bg: &ElasticBackground, rho: &[f64], omega: f64) -> Result<Corrected> {
        let bdry = eng.rule();
        let nv = vol.len();
        let nb3 = 3 * bdry.len();
        let rigid = RigidBasis::new(bdry);
        let rb = rigid.matrix(&bdry.nodes);
        let rv = rigid.matrix(&vol.nodes);
        let wb = linalg::expand3(&bdry.weights);
        let wv = linalg::expand3(&vol.weights);
        let mut a = eng.half_plus_kstar(bg, Waves::STATIC)?;
        let rw = RMat::from_fn(6, nb3, |q, j| rb[(j, q)] * wb[j]);
        add_into(&mut a, &(&rb * &rw), 1.0);
        let lu_b = RealLu::new("neumann_green", &a)?;
        let vt: Vec<Target> = vol.nodes.iter().map(|&x| Target::point(x)).collect();
        let sv = eng.rows(&vt, &[LayerKind::Single], bg, Waves::STATIC)?.remove(0);
        let sb = eng.rows(&eng.surface_targets(), &[LayerKind::Single], bg, Waves::STATIC)?.remove(0);
        let cols: Vec<(RMat, RMat)> = (0..nv)
            .into_par_iter()
            .map(|z| {
                Ok((
                    kelvin_traction(bdry, vol.nodes[z], bg)?,
                    kelvin_columns(&bdry.nodes, vol.nodes[z], bg)?,
                ))
            })
            .collect::<Result<_>>()?;
        let mut rhs = RMat::zeros(nb3, 3 * nv);
        let mut gb = RMat::zeros(nb3, 3 * nv);
        for (z, (t, g)) in cols.iter().enumerate() {
            for l in 0..3 {
                let mut f: Vec<f64> = (0..nb3).map(|i| -t[(i, l)]).collect();
                project_out_rigid(bdry, &rb, &mut f);
                for i in 0..nb3 {
                    rhs[(i, 3 * z + l)] = f[i];
                    gb[(i, 3 * z + l)] = g[(i, l)];
                }
            }
        }
        let psi_v = lu_b.solve(&rhs);
        add_into(&mut gb, &(&sb * &psi_v), 1.0);
        let nrm_v = &rw * &gb;
        let mut kvv = assemble_volume(vol, bg, Waves::STATIC)?.re;
        let mut reg = &sv * &psi_v;
        add_into(&mut reg, &(&rv * &nrm_v), -1.0);
        add_into(&mut kvv, &linalg::scale_rows_cols(&reg, &vec![1.0; 3 * nv], &wv), 1.0);
        let w2 = omega * omega;
        let dynamic = w2 > 0.0 && rho.iter().any(|r| *r != 0.0);
        let system = if dynamic {
            let n = 3 * nv;
            let p3 = linalg::expand3(rho);
            let mut m = RMat::zeros(n + 6, n + 6);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = -w2 * kvv[(i, j)] * p3[j];
                }
                m[(i, i)] += 1.0;
                for q in 0..6 {
                    m[(i, n + q)] = -rv[(i, q)];
                    m[(n + q, i)] = w2 * rv[(i, q)] * wv[i] * p3[i];
                }
            }
            Some(RealLu::new("neumann_green", &m)?)
        } else {
            None
        };
        Ok(Corrected {
            lu_b,
            rigid,
            rb,
            rv,
            sb,
            sv,
            psi_v,
            nrm_v,
            kvv,
            system,
        })
    }

    pub fn vol_rule(&self) -> &QuadratureRule {
        &self.vol_rule
    }

    pub fn bdry_rule(&self) -> &QuadratureRule {
        self.engine.rule()
    }

    pub fn engine(&self) -> &LayerEngine {
        &self.engine
    }

    /// Whether Γ is the static generalized Neumann function (`ω²ρ ≡ 0`).
    pub fn is_generalized(&self) -> bool {
        self.corrected.as_ref().is_some_and(|c| c.system.is_none())
    }

    /// Rigid motions orthonormal on the boundary rule (corrected mode).
    pub fn rigid_basis(&self) -> Option<&RigidBasis> {
        self.corrected.as_ref().map(|c| &c.rigid)
    }

    fn check_source(&self, y: Point) -> Result<()> {
        if self.domain.depth(y) <= 1e-9 {
            return Err(EclError::validation("neumann_green", "source point must lie strictly inside Ω"));
        }
        Ok(())
    }

    fn single_rows(&self, targets: &[Point]) -> Result<RMat> {
        let tg: Vec<Target> = targets.iter().map(|&x| Target::point(x)).collect();
        Ok(self.engine.rows(&tg, &[LayerKind::Single], &self.bg, Waves::STATIC)?.remove(0))
    }

    /// Kelvin columns from `y` on the volume nodes, with the cell containing
    /// `y` replaced by its equivalent-ball average.
    fn kelvin_on_nodes(&self, y: Point) -> RMat {
        let vol = &self.vol_rule;
        let mut g = RMat::zeros(3 * vol.len(), 3);
        for k in 0..vol.len() {
            let r = equivalent_radius(vol.weights[k]);
            if vec3::dist(vol.nodes[k], y) < r {
                let s = kernels::ball_integral(r, &self.bg, Waves::STATIC).re / vol.weights[k];
                for c in 0..3 {
                    g[(3 * k + c, c)] = s;
                }
            } else {
                let t = kernels::kelvin_tensor(vol.nodes[k], y, &self.bg).expect("distinct points");
                for c in 0..3 {
                    for l in 0..3 {
                        g[(3 * k + c, l)] = t.0[c][l].re;
                    }
                }
            }
        }
        g
    }

    /// Boundary density and rigid normalization of `G_N − Γ⁰` for an
    /// equilibrated boundary traction datum (`3nb × ncol`).
    fn static_part(&self, c: &Corrected, data: &RMat, boundary_values: &RMat) -> (RMat, RMat) {
        let psi = c.lu_b.solve(data);
        let wb = linalg::expand3(&self.engine.rule().weights);
        let mut vals = boundary_values.clone();
        add_into(&mut vals, &(&c.sb * &psi), 1.0);
        let rw = RMat::from_fn(6, wb.len(), |q, j| c.rb[(j, q)] * wb[j]);
        (psi, &rw * &vals)
    }

    /// `G_N(x_t, z) w_z` for all volume nodes `z`.
    fn gn_rows(&self, c: &Corrected, targets: &[Point], st: &RMat, rt: &RMat) -> Result<RMat> {
        let wv = linalg::expand3(&self.vol_rule.weights);
        let mut reg = st * &c.psi_v;
        add_into(&mut reg, &(rt * &c.nrm_v), -1.0);
        let mut out = volume_rows(targets, &self.vol_rule, &self.bg, Waves::STATIC)?;
        add_into(&mut out, &linalg::scale_rows_cols(&reg, &vec![1.0; reg.nrows()], &wv), 1.0);
        Ok(out)
    }

    /// Solves the volume system for volume data `f_v` (`3nv × ncol`) and
    /// constraint data `f_c` (`6 × ncol`); returns volume values and rigid
    /// coefficients.
    fn solve_volume(lu: &RealLu, f_v: &RMat, f_c: &RMat) -> (RMat, RMat) {
        let n = f_v.nrows();
        let ncol = f_v.ncols();
        let rhs = RMat::from_fn(n + 6, ncol, |i, j| if i < n { f_v[(i, j)] } else { f_c[(i - n, j)] });
        let sol = lu.solve(&rhs);
        (
            RMat::from_fn(n, ncol, |i, j| sol[(i, j)]),
            RMat::from_fn(6, ncol, |i, j| sol[(n + i, j)]),
        )
    }

    /// Adds the dynamic terms `ω² ∫ G_N ρ u + Σ r_q c_q` to `out`, given the
    /// static part of the field on the volume nodes and the constraint data.
    #[allow(clippy::too_many_arguments)]
    fn add_dynamic(
        &self,
        c: &Corrected,
        lu: &RealLu,
        f_v: &RMat,
        f_c: &RMat,
        targets: &[Point],
        st: &RMat,
        rt: &RMat,
        out: &mut RMat,
    ) -> Result<()> {
        let w2 = self.omega * self.omega;
        let (u, coef) = Self::solve_volume(lu, f_v, f_c);
        let p3 = linalg::expand3(&self.rho);
        let pu = RMat::from_fn(u.nrows(), u.ncols(), |i, j| p3[i] * u[(i, j)]);
        let gn = self.gn_rows(c, targets, st, rt)?;
        add_into(out, &(&gn * &pu), w2);
        add_into(out, &(rt * &coef), 1.0);
        Ok(())
    }

    /// Regular part `R(x_t, y_s)`, indexed `[source][target]`.
    pub fn regular_part(&self, targets: &[Point], sources: &[Point]) -> Result<Vec<Vec<Tensor3>>> {
        for &y in sources {
            self.check_source(y)?;
        }
        let Some(c) = &self.corrected else {
            return Ok(vec![vec![Tensor3::zero(); targets.len()]; sources.len()]);
        };
        let bdry = self.engine.rule();
        let nb3 = 3 * bdry.len();
        let ns = sources.len();
        let mut data = RMat::zeros(nb3, 3 * ns);
        let mut bvals = RMat::zeros(nb3, 3 * ns);
        for (s, &y) in sources.iter().enumerate() {
            let t = kelvin_traction(bdry, y, &self.bg)?;
            let g = kelvin_columns(&bdry.nodes, y, &self.bg)?;
            for l in 0..3 {
                let mut f: Vec<f64> = (0..nb3).map(|i| -t[(i, l)]).collect();
                project_out_rigid(bdry, &c.rb, &mut f);
                for i in 0..nb3 {
                    data[(i, 3 * s + l)] = f[i];
                    bvals[(i, 3 * s + l)] = g[(i, l)];
                }
            }
        }
        let (psi, nrm) = self.static_part(c, &data, &bvals);
        let st = self.single_rows(targets)?;
        let rt = c.rigid.matrix(targets);
        let mut r = &st * &psi;
        add_into(&mut r, &(&rt * &nrm), -1.0);
        if let Some(lu) = &c.system {
            let nv3 = 3 * self.vol_rule.len();
            let mut f_v = &c.sv * &psi;
            add_into(&mut f_v, &(&c.rv * &nrm), -1.0);
            let mut f_c = RMat::zeros(6, 3 * ns);
            for (s, &y) in sources.iter().enumerate() {
                let g0 = self.kelvin_on_nodes(y);
                let ry = c.rigid.values(y);
                for l in 0..3 {
                    for i in 0..nv3 {
                        f_v[(i, 3 * s + l)] += g0[(i, l)];
                    }
                    for q in 0..6 {
                        f_c[(q, 3 * s + l)] = -ry[l][q];
                    }
                }
            }
            self.add_dynamic(c, lu, &f_v, &f_c, targets, &st, &rt, &mut r)?;
        }
        Ok((0..ns)
            .map(|s| {
                (0..targets.len())
                    .map(|t| {
                        let mut m = [[0.0; 3]; 3];
                        for k in 0..3 {
                            for l in 0..3 {
                                m[k][l] = r[(3 * t + k, 3 * s + l)];
                            }
                        }
                        Tensor3::from_real(m)
                    })
                    .collect()
            })
            .collect())
    }

    /// `Γ(x, y)`; exactly the Kelvin tensor in free-space mode.
    pub fn tensor(&self, x: Point, y: Point) -> Result<Tensor3> {
        let g0 = kernels::kelvin_tensor(x, y, &self.bg)?;
        if self.mode == GreenMode::FreeSpace {
            return Ok(g0);
        }
        let r = self.regular_part(&[x], &[y])?;
        Ok(g0.add(&r[0][0]))
    }

    /// Matrix `3·|targets| × 3·|boundary nodes|` mapping a boundary traction
    /// `f` to `∫_{∂Ω} Γ(x_t, y) f(y) dσ_y`. In the generalized static case the
    /// rigid component of `f` is discarded.
    pub fn single_layer_rows(&self, targets: &[Point]) -> Result<RMat> {
        let st = self.single_rows(targets)?;
        self.complete_single_layer(st, targets)
    }

    /// On-surface trace of the single layer at the boundary nodes,
    /// `3nb × 3nb`.
    pub fn single_layer_trace(&self) -> Result<RMat> {
        let st = self
            .engine
            .rows(&self.engine.surface_targets(), &[LayerKind::Single], &self.bg, Waves::STATIC)?
            .remove(0);
        let nodes = self.engine.rule().nodes.clone();
        self.complete_single_layer(st, &nodes)
    }

    /// Adds the regular part to Kelvin single-layer rows `st`.
    fn complete_single_layer(&self, st: RMat, targets: &[Point]) -> Result<RMat> {
        let Some(c) = &self.corrected else {
            return Ok(st);
        };
        let bdry = self.engine.rule();
        let nb3 = 3 * bdry.len();
        let wb = linalg::expand3(&bdry.weights);
        let rw = RMat::from_fn(6, nb3, |q, j| c.rb[(j, q)] * wb[j]);
        let mut proj = RMat::from_fn(nb3, nb3, |i, j| if i == j { 1.0 } else { 0.0 });
        add_into(&mut proj, &(&c.rb * &rw), -1.0);
        let (psi, nrm) = self.static_part(c, &proj, &RMat::zeros(nb3, nb3));
        let rt = c.rigid.matrix(targets);
        let mut out = &st * &psi;
        add_into(&mut out, &(&rt * &nrm), -1.0);
        if let Some(lu) = &c.system {
            let mut f_v = &c.sv * &psi;
            add_into(&mut f_v, &(&c.rv * &nrm), -1.0);
            let f_c = RMat::from_fn(6, nb3, |q, j| -rw[(q, j)]);
            self.add_dynamic(c, lu, &f_v, &f_c, targets, &st, &rt, &mut out)?;
        }
        Ok(out)
    }

    /// `∫_{∂Ω} Γ(x_t, y) f(y) dσ_y` at each target for a complex density.
    pub fn single_layer(&self, f: &[C64], targets: &[Point]) -> Result<Vec<[C64; 3]>> {
        let nb3 = 3 * self.engine.rule().len();
        if f.len() != nb3 {
            return Err(EclError::validation(
                "single_layer",
                "density length does not match the boundary rule",
            ));
        }
        let m = self.single_layer_rows(targets)?;
        let re: Vec<f64> = f.iter().map(|v| v.re).collect();
        let im: Vec<f64> = f.iter().map(|v| v.im).collect();
        let a = linalg::matvec(&m, &re);
        let b = linalg::matvec(&m, &im);
        Ok((0..targets.len())
            .map(|t| [0, 1, 2].map(|k| C64::new(a[3 * t + k], b[3 * t + k])))
            .collect())
    }

    /// Rows `3·|targets| × 3·|volume nodes|` of `φ ↦ ∫_Ω Γ(x_t, z) φ(z) dz`.
    pub fn volume_rows(&self, targets: &[Point]) -> Result<RMat> {
        let mut m = volume_rows(targets, &self.vol_rule, &self.bg, Waves::STATIC)?;
        if self.corrected.is_none() {
            return Ok(m);
        }
        let reg = self.regular_part(targets, &self.vol_rule.nodes)?;
        for (s, row) in reg.iter().enumerate() {
            let w = self.vol_rule.weights[s];
            for (t, r) in row.iter().enumerate() {
                for k in 0..3 {
                    for l in 0..3 {
                        m[(3 * t + k, 3 * s + l)] += r.0[k][l].re * w;
                    }
                }
            }
        }
        Ok(m)
    }

    /// `Γ(p_i, p_j)` for all `i ≠ j`, indexed `[i][j]`; diagonal blocks are zero.
    pub fn pair_tensors(&self, points: &[Point]) -> Result<Vec<Vec<Tensor3>>> {
        let n = points.len();
        let reg = match self.mode {
            GreenMode::FreeSpace => None,
            GreenMode::Corrected => Some(self.regular_part(points, points)?),
        };
        let mut out = vec![vec![Tensor3::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let g = kernels::kelvin_tensor(points[i], points[j], &self.bg)?;
                out[i][j] = match &reg {
                    Some(r) => g.add(&r[j][i]),
                    None => g,
                };
            }
        }
        Ok(out)
    }

    /// Nyström matrix of `φ ↦ ∫ Γ(·, z) φ(z) dz` on the nodes of an arbitrary
    /// volume rule inside Ω.
    pub fn operator_on(&self, rule: &QuadratureRule) -> Result<RMat> {
        if rule.is_boundary() {
            return Err(EclError::validation("neumann_green", "expected a volume rule"));
        }
        let mut m = assemble_volume(rule, &self.bg, Waves::STATIC)?.re;
        if self.corrected.is_none() {
            return Ok(m);
        }
        let reg = self.regular_part(&rule.nodes, &rule.nodes)?;
        for (s, row) in reg.iter().enumerate() {
            for (t, r) in row.iter().enumerate() {
                for k in 0..3 {
                    for l in 0..3 {
                        m[(3 * t + k, 3 * s + l)] += r.0[k][l].re * rule.weights[s];
                    }
                }
            }
        }
        Ok(m)
    }

    /// Nyström matrix of `φ ↦ ∫_Ω Γ(·, z) φ(z) dz` on the volume nodes.
    pub fn volume_operator(&self) -> Result<RMat> {
        let Some(c) = &self.corrected else {
            return Ok(assemble_volume(&self.vol_rule, &self.bg, Waves::STATIC)?.re);
        };
        if c.system.is_none() {
            return Ok(c.kvv.clone());
        }
        let nodes = self.vol_rule.nodes.clone();
        let wv = linalg::expand3(&self.vol_rule.weights);
        let mut m = assemble_volume(&self.vol_rule, &self.bg, Waves::STATIC)?.re;
        let reg = self.regular_part(&nodes, &nodes)?;
        for (s, row) in reg.iter().enumerate() {
            for (t, r) in row.iter().enumerate() {
                for k in 0..3 {
                    for l in 0..3 {
                        m[(3 * t + k, 3 * s + l)] += r.0[k][l].re * wv[3 * s + l];
                    }
                }
            }
        }
        Ok(m)
    }
}
