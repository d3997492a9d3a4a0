//! Single layer, double layer and traction operators on ∂Ω.
//!
//! On the unit sphere the density is represented by its spherical-harmonic
//! projection and every target row is integrated with a rule concentrated
//! around the target's closest surface point, which handles on-surface
//! principal values and near-surface targets. On the cube the density is
//! piecewise constant on the face panels and nearby panels are integrated
//! with refined tensor Gauss rules.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BlockOperator;
use crate::error::{EclError, Result};
use crate::geometry::{Carrier, QuadratureRule};
use crate::kernels::{self, ElasticBackground, Radial, Waves};
use crate::linalg::RMat;
use crate::sphere;
use crate::vec3::{self, Point};

/// Layer kernel family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// `Γ(x, y)`.
    Single,
    /// `(∂_{ν_y} Γ(y, x))ᵀ`, the double-layer kernel.
    Double,
    /// `∂_{ν_x} Γ(x, y)`, the traction of the single layer at the target.
    Traction,
}

/// Evaluation point, with the normal used by [`LayerKind::Traction`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub x: Point,
    pub normal: Option<Point>,
}

impl Target {
    pub fn point(x: Point) -> Self {
        Target { x, normal: None }
    }

    pub fn with_normal(x: Point, n: Point) -> Self {
        Target { x, normal: Some(n) }
    }
}

fn real_waves(w: Waves) -> bool {
    w.ks.re == 0.0 && w.kp.re == 0.0
}

/// Kernel entries (row-major 3×3) for each requested kind at one pair.
fn kernel_entries(
    kinds: &[LayerKind],
    x: Point,
    nx: Option<Point>,
    y: Point,
    ny: Point,
    bg: &ElasticBackground,
    w: Waves,
    out: &mut [[f64; 9]],
) {
    let d = vec3::sub(x, y);
    let r = vec3::norm(d);
    let rad = kernels::radial(r, bg, w);
    for (slot, kind) in out.iter_mut().zip(kinds) {
        match kind {
            LayerKind::Single => {
                let rh = vec3::scale(d, 1.0 / r);
                for k in 0..3 {
                    for l in 0..3 {
                        let mut v = rad.b.re * rh[k] * rh[l];
                        if k == l {
                            v += rad.a.re;
                        }
                        slot[3 * k + l] = v;
                    }
                }
            }
            LayerKind::Double => {
                let t = kernels::traction_tensor(&rad, vec3::scale(d, -1.0), ny, bg);
                for k in 0..3 {
                    for l in 0..3 {
                        slot[3 * k + l] = t.0[l][k].re;
                    }
                }
            }
            LayerKind::Traction => {
                let t = kernels::traction_tensor(&rad, d, nx.expect("traction target needs a normal"), bg);
                for k in 0..3 {
                    for l in 0..3 {
                        slot[3 * k + l] = t.0[k][l].re;
                    }
                }
            }
        }
    }
}

fn static_radial(r: f64, bg: &ElasticBackground) -> Radial {
    kernels::radial(r, bg, Waves::STATIC)
}

/// Accurate layer operators for a sphere or cube boundary rule.
pub enum LayerEngine {
    Sphere(SphereLayers),
    Cube(CubeLayers),
}

/// Engine for the unit sphere product rule.
pub struct SphereLayers {
    rule: QuadratureRule,
    lmax: usize,
    /// `Y_lm(y_j) w_j`, one row per harmonic.
    yw: RMat,
}

/// Engine for the per-face midpoint rule on [0,1]³.
pub struct CubeLayers {
    rule: QuadratureRule,
    h: f64,
    tangents: Vec<(Point, Point)>,
    gl: Vec<(usize, Vec<f64>, Vec<f64>)>,
}

impl LayerEngine {
    pub fn new(rule: &QuadratureRule) -> Result<Self> {
        if rule.normals.is_none() {
            return Err(EclError::validation("LayerEngine", "boundary rule without normals"));
        }
        match rule.carrier {
            Carrier::UnitSphere { order } => {
                let lmax = order - 1;
                let nsh = sphere::sh_count(lmax);
                let mut yw = RMat::zeros(nsh, rule.len());
                let mut y = vec![0.0; nsh];
                for (j, (p, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
                    sphere::real_sh(lmax, *p, &mut y);
                    for s in 0..nsh {
                        yw[(s, j)] = y[s] * w;
                    }
                }
                Ok(LayerEngine::Sphere(SphereLayers {
                    rule: rule.clone(),
                    lmax,
                    yw,
                }))
            }
            Carrier::CubeSurface { n } => {
                let normals = rule.normals.as_ref().unwrap();
                let tangents = normals
                    .iter()
                    .map(|nu| {
                        let a = (0..3).find(|&k| nu[k] != 0.0).unwrap();
                        let mut t1 = [0.0; 3];
                        let mut t2 = [0.0; 3];
                        t1[(a + 1) % 3] = 1.0;
                        t2[(a + 2) % 3] = 1.0;
                        (t1, t2)
                    })
                    .collect();
                let gl = [2usize, 8]
                    .iter()
                    .map(|&s| {
                        let (x, w) = sphere::gauss_legendre(s);
                        (s, x, w)
                    })
                    .collect();
                Ok(LayerEngine::Cube(CubeLayers {
                    rule: rule.clone(),
                    h: 1.0 / n as f64,
                    tangents,
                    gl,
                }))
            }
            _ => Err(EclError::validation(
                "LayerEngine",
                "boundary rule must be the unit-sphere product rule or the cube face rule",
            )),
        }
    }

    pub fn rule(&self) -> &QuadratureRule {
        match self {
            LayerEngine::Sphere(s) => &s.rule,
            LayerEngine::Cube(c) => &c.rule,
        }
    }

    /// Boundary nodes as on-surface targets with their outward normals.
    pub fn surface_targets(&self) -> Vec<Target> {
        let r = self.rule();
        r.nodes
            .iter()
            .zip(r.normals.as_ref().unwrap())
            .map(|(x, n)| Target::with_normal(*x, *n))
            .collect()
    }

    /// One `3·|targets| × 3·|nodes|` matrix per requested kind. Only real
    /// wavenumber families (static or shifted) are supported.
    pub fn rows(&self, targets: &[Target], kinds: &[LayerKind], bg: &ElasticBackground, waves: Waves) -> Result<Vec<RMat>> {
        if !real_waves(waves) {
            return Err(EclError::unsupported("layer rows", "oscillatory kernels are not supported"));
        }
        if kinds.contains(&LayerKind::Traction) && targets.iter().any(|t| t.normal.is_none()) {
            return Err(EclError::validation("layer rows", "traction rows need target normals"));
        }
        let nn = self.rule().len();
        let blocks: Vec<Vec<RMat>> = match self {
            LayerEngine::Sphere(s) => targets
                .par_iter()
                .map(|t| s.target_blocks(t, kinds, bg, waves))
                .collect::<Result<_>>()?,
            LayerEngine::Cube(c) => targets
                .par_iter()
                .map(|t| c.target_blocks(t, kinds, bg, waves))
                .collect::<Result<_>>()?,
        };
        Ok((0..kinds.len())
            .map(|q| {
                RMat::from_fn(3 * targets.len(), 3 * nn, |r, c| {
                    let (t, k) = (r / 3, r % 3);
                    let (j, l) = (c / 3, c % 3);
                    blocks[t][q][(3 * k + l, j)]
                })
            })
            .collect())
    }

    /// On-surface traction operator `K*` at the boundary nodes.
    pub fn kstar(&self, bg: &ElasticBackground, waves: Waves) -> Result<RMat> {
        Ok(self.rows(&self.surface_targets(), &[LayerKind::Traction], bg, waves)?.remove(0))
    }

    /// `½ I + K*`, the interior traction limit of the single layer.
    pub fn half_plus_kstar(&self, bg: &ElasticBackground, waves: Waves) -> Result<RMat> {
        let mut k = self.kstar(bg, waves)?;
        for i in 0..k.nrows() {
            k[(i, i)] += 0.5;
        }
        Ok(k)
    }

    /// Maps nodal densities to their interpolant at arbitrary surface points
    /// (`3·|points| × 3·|nodes|`).
    pub fn interpolation(&self, points: &[Point]) -> Result<RMat> {
        match self {
            LayerEngine::Sphere(s) => {
                let nsh = sphere::sh_count(s.lmax);
                let mut y = vec![0.0; nsh];
                let nn = s.rule.len();
                let mut m = RMat::zeros(3 * points.len(), 3 * nn);
                for (i, p) in points.iter().enumerate() {
                    sphere::real_sh(s.lmax, vec3::normalize(*p), &mut y);
                    for j in 0..nn {
                        let v: f64 = (0..nsh).map(|q| y[q] * s.yw[(q, j)]).sum();
                        for k in 0..3 {
                            m[(3 * i + k, 3 * j + k)] = v;
                        }
                    }
                }
                Ok(m)
            }
            LayerEngine::Cube(c) => {
                let nn = c.rule.len();
                let normals = c.rule.normals.as_ref().unwrap();
                let mut m = RMat::zeros(3 * points.len(), 3 * nn);
                for (i, p) in points.iter().enumerate() {
                    let j = (0..nn)
                        .filter(|&j| vec3::dot(vec3::sub(*p, c.rule.nodes[j]), normals[j]).abs() < 1e-9)
                        .min_by(|&a, &b| {
                            vec3::dist(*p, c.rule.nodes[a])
                                .partial_cmp(&vec3::dist(*p, c.rule.nodes[b]))
                                .unwrap()
                        })
                        .ok_or_else(|| EclError::validation("interpolation", "point is not on the cube surface"))?;
                    for k in 0..3 {
                        m[(3 * i + k, 3 * j + k)] = 1.0;
                    }
                }
                Ok(m)
            }
        }
    }

    /// Spherical-harmonic degree of each flat coefficient, for sphere engines.
    pub fn sphere_lmax(&self) -> Option<usize> {
        match self {
            LayerEngine::Sphere(s) => Some(s.lmax),
            LayerEngine::Cube(_) => None,
        }
    }

    /// Projection of nodal values onto spherical-harmonic coefficients
    /// (`nsh × nodes`), for sphere engines.
    pub fn sphere_projection(&self) -> Option<&RMat> {
        match self {
            LayerEngine::Sphere(s) => Some(&s.yw),
            LayerEngine::Cube(_) => None,
        }
    }
}

impl SphereLayers {
    fn target_blocks(&self, t: &Target, kinds: &[LayerKind], bg: &ElasticBackground, w: Waves) -> Result<Vec<RMat>> {
        let rx = vec3::norm(t.x);
        let p0 = if rx < 1e-12 { [0.0, 0.0, 1.0] } else { vec3::scale(t.x, 1.0 / rx) };
        let mut delta = (1.0 - rx).abs();
        let x = if delta < 1e-12 {
            delta = 0.0;
            p0
        } else {
            t.x
        };
        let (pts, ws) = sphere::rotated_rule(p0, delta, self.lmax);
        let nk = pts.len();
        let nsh = sphere::sh_count(self.lmax);
        let nkind = kinds.len();
        let mut kmat = RMat::zeros(9 * nkind, nk);
        let mut ymat = RMat::zeros(nk, nsh);
        let mut ent = vec![[0.0; 9]; nkind];
        let mut y = vec![0.0; nsh];
        for (k, (p, wk)) in pts.iter().zip(&ws).enumerate() {
            kernel_entries(kinds, x, t.normal, *p, *p, bg, w, &mut ent);
            for q in 0..nkind {
                for e in 0..9 {
                    kmat[(9 * q + e, k)] = ent[q][e] * wk;
                }
            }
            sphere::real_sh(self.lmax, *p, &mut y);
            for s in 0..nsh {
                ymat[(k, s)] = y[s];
            }
        }
        let c = &kmat * &ymat;
        let full = &c * &self.yw;
        Ok((0..nkind)
            .map(|q| RMat::from_fn(9, self.rule.len(), |e, j| full[(9 * q + e, j)]))
            .collect())
    }
}

/// `∫_{[-h/2,h/2]²} 1/r dA = 4h ln(1+√2)`.
fn square_inv_r(h: f64) -> f64 {
    4.0 * h * (1.0 + 2f64.sqrt()).ln()
}

impl CubeLayers {
    fn gl(&self, s: usize) -> (&[f64], &[f64]) {
        let g = self.gl.iter().find(|g| g.0 == s).unwrap();
        (&g.1, &g.2)
    }

    fn target_blocks(&self, t: &Target, kinds: &[LayerKind], bg: &ElasticBackground, w: Waves) -> Result<Vec<RMat>> {
        let nn = self.rule.len();
        let normals = self.rule.normals.as_ref().unwrap();
        let nkind = kinds.len();
        let mut out: Vec<RMat> = (0..nkind).map(|_| RMat::zeros(9, nn)).collect();
        let mut ent = vec![[0.0; 9]; nkind];
        let h = self.h;
        let stat = w.is_static();
        for j in 0..nn {
            let c = self.rule.nodes[j];
            let ny = normals[j];
            let (t1, t2) = self.tangents[j];
            let dist = vec3::dist(t.x, c);
            let mut acc = vec![[0.0; 9]; nkind];
            if dist < 1e-12 {
                for (q, kind) in kinds.iter().enumerate() {
                    if *kind != LayerKind::Single {
                        continue;
                    }
                    let s0 = square_inv_r(h) / (4.0 * std::f64::consts::PI);
                    let g1 = bg.gamma1() * s0;
                    let g2 = 0.5 * bg.gamma2() * s0;
                    for k in 0..3 {
                        for l in 0..3 {
                            let id = if k == l { 1.0 } else { 0.0 };
                            acc[q][3 * k + l] = g1 * id + g2 * (id - ny[k] * ny[l]);
                        }
                    }
                    if !stat {
                        let (gx, gw) = self.gl(8);
                        for (a, wa) in gx.iter().zip(gw) {
                            for (b, wb) in gx.iter().zip(gw) {
                                let y = vec3::add(c, vec3::add(vec3::scale(t1, 0.5 * h * a), vec3::scale(t2, 0.5 * h * b)));
                                let wt = wa * wb * 0.25 * h * h;
                                single_difference(t.x, y, bg, w, wt, &mut acc[q]);
                            }
                        }
                    }
                }
            } else {
                let s = if dist < 2.5 * h {
                    0
                } else if dist < 5.0 * h {
                    2
                } else {
                    1
                };
                if s == 0 {
                    let panel = Panel {
                        c,
                        t1,
                        t2,
                        ny,
                        half: 0.5 * h,
                    };
                    self.adaptive(t, kinds, bg, w, &panel, 0, &mut acc, &mut ent);
                } else if s == 1 {
                    kernel_entries(kinds, t.x, t.normal, c, ny, bg, w, &mut ent);
                    for q in 0..nkind {
                        for e in 0..9 {
                            acc[q][e] = ent[q][e] * h * h;
                        }
                    }
                } else {
                    let (gx, gw) = self.gl(s);
                    for (a, wa) in gx.iter().zip(gw) {
                        for (b, wb) in gx.iter().zip(gw) {
                            let y = vec3::add(c, vec3::add(vec3::scale(t1, 0.5 * h * a), vec3::scale(t2, 0.5 * h * b)));
                            let wt = wa * wb * 0.25 * h * h;
                            kernel_entries(kinds, t.x, t.normal, y, ny, bg, w, &mut ent);
                            for q in 0..nkind {
                                for e in 0..9 {
                                    acc[q][e] += ent[q][e] * wt;
                                }
                            }
                        }
                    }
                }
            }
            for q in 0..nkind {
                for e in 0..9 {
                    out[q][(e, j)] = acc[q][e];
                }
            }
        }
        Ok(out)
    }
}

/// Square sub-panel of a cube face.
struct Panel {
    c: Point,
    t1: Point,
    t2: Point,
    ny: Point,
    half: f64,
}

impl Panel {
    /// Distance from `x` to the closest point of the square.
    fn distance(&self, x: Point) -> f64 {
        let d = vec3::sub(x, self.c);
        let u = (vec3::dot(d, self.t1).abs() - self.half).max(0.0);
        let v = (vec3::dot(d, self.t2).abs() - self.half).max(0.0);
        let n = vec3::dot(d, self.ny);
        (u * u + v * v + n * n).sqrt()
    }
}

impl CubeLayers {
    /// Quadtree refinement of a panel toward a nearby target.
    #[allow(clippy::too_many_arguments)]
    fn adaptive(
        &self,
        t: &Target,
        kinds: &[LayerKind],
        bg: &ElasticBackground,
        w: Waves,
        p: &Panel,
        depth: usize,
        acc: &mut [[f64; 9]],
        ent: &mut [[f64; 9]],
    ) {
        let size = 2.0 * p.half;
        if p.distance(t.x) < 0.75 * size && depth < 24 {
            let q = 0.5 * p.half;
            for (a, b) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
                let c = vec3::add(p.c, vec3::add(vec3::scale(p.t1, a * q), vec3::scale(p.t2, b * q)));
                let child = Panel {
                    c,
                    t1: p.t1,
                    t2: p.t2,
                    ny: p.ny,
                    half: q,
                };
                self.adaptive(t, kinds, bg, w, &child, depth + 1, acc, ent);
            }
            return;
        }
        let (gx, gw) = self.gl(8);
        for (a, wa) in gx.iter().zip(gw) {
            for (b, wb) in gx.iter().zip(gw) {
                let y = vec3::add(p.c, vec3::add(vec3::scale(p.t1, p.half * a), vec3::scale(p.t2, p.half * b)));
                let wt = wa * wb * p.half * p.half;
                kernel_entries(kinds, t.x, t.normal, y, p.ny, bg, w, ent);
                for q in 0..kinds.len() {
                    for e in 0..9 {
                        acc[q][e] += ent[q][e] * wt;
                    }
                }
            }
        }
    }
}

/// Adds `wt·(Γ_w − Γ⁰)(x, y)` to a row-major 3×3 accumulator.
fn single_difference(x: Point, y: Point, bg: &ElasticBackground, w: Waves, wt: f64, acc: &mut [f64; 9]) {
    let d = vec3::sub(x, y);
    let r = vec3::norm(d);
    let rh = vec3::scale(d, 1.0 / r);
    let a = kernels::radial(r, bg, w);
    let a0 = static_radial(r, bg);
    for k in 0..3 {
        for l in 0..3 {
            let mut v = (a.b.re - a0.b.re) * rh[k] * rh[l];
            if k == l {
                v += a.a.re - a0.a.re;
            }
            acc[3 * k + l] += wt * v;
        }
    }
}

/// Plain product-rule layer potential with blocks `w_j K(x_i, y_j)` for
/// targets away from ∂Ω.
pub fn assemble_layer(
    rule_bdry: &QuadratureRule,
    rule_target: &QuadratureRule,
    bg: &ElasticBackground,
    kind: LayerKind,
) -> Result<BlockOperator> {
    let normals = rule_bdry
        .normals
        .as_ref()
        .ok_or_else(|| EclError::validation("assemble_layer", "boundary rule has no normals"))?;
    if kind == LayerKind::Traction && rule_target.normals.is_none() {
        return Err(EclError::validation("assemble_layer", "traction targets need normals"));
    }
    let nt = rule_target.len();
    let nb = rule_bdry.len();
    let mut m = RMat::zeros(3 * nt, 3 * nb);
    let mut ent = [[0.0; 9]];
    for i in 0..nt {
        let x = rule_target.nodes[i];
        let nx = rule_target.normals.as_ref().map(|n| n[i]);
        for j in 0..nb {
            if vec3::dist(x, rule_bdry.nodes[j]) < 1e-12 {
                return Err(EclError::Singular { op: "assemble_layer" });
            }
            kernel_entries(&[kind], x, nx, rule_bdry.nodes[j], normals[j], bg, Waves::STATIC, &mut ent);
            for k in 0..3 {
                for l in 0..3 {
                    m[(3 * i + k, 3 * j + l)] = ent[0][3 * k + l] * rule_bdry.weights[j];
                }
            }
        }
    }
    BlockOperator::new(rule_bdry.clone(), rule_target.clone(), m, None)
}

/// On-surface traction-of-single-layer operator `K*` for the kernel shifted by `𝒫 = shift`.
pub fn neumann_poincare(rule_bdry: &QuadratureRule, bg: &ElasticBackground, shift: f64) -> Result<BlockOperator> {
    if !(shift >= 0.0) {
        return Err(EclError::validation("neumann_poincare", "shift must be >= 0"));
    }
    let eng = LayerEngine::new(rule_bdry)?;
    let k = eng.kstar(bg, bg.shifted_waves(shift))?;
    BlockOperator::new(rule_bdry.clone(), rule_bdry.clone(), k, None)
}
