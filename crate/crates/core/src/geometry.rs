//! Domains, quadrature rules and the periodic inclusion cluster.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;

use crate::error::{EclError, Result};
use crate::sphere;
use crate::vec3::{self, Point};

/// Fraction of the cell edge kept free between retained cells and ∂Ω.
pub const CLEARANCE_FACTOR: f64 = 0.1;

/// Desk-scale domains: the unit ball centred at the origin or the cube [0,1]³.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Ball,
    Cube,
}

impl Domain {
    pub fn measure(&self) -> f64 {
        match self {
            Domain::Ball => 4.0 * PI / 3.0,
            Domain::Cube => 1.0,
        }
    }

    pub fn boundary_measure(&self) -> f64 {
        match self {
            Domain::Ball => 4.0 * PI,
            Domain::Cube => 6.0,
        }
    }

    pub fn center(&self) -> Point {
        match self {
            Domain::Ball => [0.0; 3],
            Domain::Cube => [0.5; 3],
        }
    }

    /// Signed distance to ∂Ω, positive inside.
    pub fn depth(&self, p: Point) -> f64 {
        match self {
            Domain::Ball => 1.0 - vec3::norm(p),
            Domain::Cube => p.iter().map(|&c| c.min(1.0 - c)).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.depth(p) > 0.0
    }

    /// Volume rule with `n` cells per unit of the bounding box edge.
    pub fn volume_rule(&self, n: usize) -> Result<QuadratureRule> {
        if n < 2 {
            return Err(EclError::validation("volume_rule", "resolution must be >= 2"));
        }
        Ok(match self {
            Domain::Ball => ball_cells([0.0; 3], 1.0, n),
            Domain::Cube => cube_cells([0.0; 3], 1.0, n),
        })
    }

    pub fn boundary_rule(&self, order: usize) -> Result<QuadratureRule> {
        boundary_quadrature(*self, order)
    }
}

/// What a quadrature rule discretizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Carrier {
    /// Volume rule.
    Volume,
    /// Gauss–Legendre × azimuth product rule on the unit sphere.
    UnitSphere { order: usize },
    /// Per-face midpoint rule on the surface of [0,1]³.
    CubeSurface { n: usize },
    /// Any other point set with weights.
    Points,
}

/// Nodes and positive weights, plus outward normals for boundary rules.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    pub normals: Option<Vec<Point>>,
    pub carrier: Carrier,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn measure(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    pub fn is_boundary(&self) -> bool {
        self.normals.is_some()
    }

    /// Copy `z + a·x` of a reference volume rule, weights scaled by a³.
    pub fn mapped(&self, z: Point, a: f64) -> QuadratureRule {
        QuadratureRule {
            nodes: self.nodes.iter().map(|&x| vec3::add(z, vec3::scale(x, a))).collect(),
            weights: self.weights.iter().map(|w| w * a * a * a).collect(),
            normals: None,
            carrier: Carrier::Points,
        }
    }

    /// Concatenation of volume rules.
    pub fn union(rules: &[QuadratureRule]) -> QuadratureRule {
        QuadratureRule {
            nodes: rules.iter().flat_map(|r| r.nodes.iter().copied()).collect(),
            weights: rules.iter().flat_map(|r| r.weights.iter().copied()).collect(),
            normals: None,
            carrier: Carrier::Points,
        }
    }

    /// Short content digest used to tag exported operators.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (p, w) in self.nodes.iter().zip(&self.weights) {
            for c in p {
                h.update(c.to_le_bytes());
            }
            h.update(w.to_le_bytes());
        }
        if let Some(ns) = &self.normals {
            for n in ns {
                for c in n {
                    h.update(c.to_le_bytes());
                }
            }
        }
        let out = h.finalize();
        out.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() != self.weights.len() {
            return Err(EclError::validation("QuadratureRule", "node and weight counts differ"));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(EclError::validation("QuadratureRule", "weights must be positive"));
        }
        Ok(())
    }
}

/// Sum with a fixed pairwise order, independent of thread count.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Complex pairwise sum.
pub fn pairwise_sum_c(v: &[C64]) -> C64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum_c(&v[..mid]) + pairwise_sum_c(&v[mid..])
}

/// Volume and first moments of `[lo, hi] ∩ {|x|² < r2}`, integrated along the
/// last axis in closed form.
fn clipped_cell(lo: Point, hi: Point, r2: f64, gx: &[f64], gw: &[f64]) -> (f64, [f64; 3]) {
    let (hx, hy) = (hi[0] - lo[0], hi[1] - lo[1]);
    let mut vol = 0.0;
    let mut m = [0.0; 3];
    for (xa, wa) in gx.iter().zip(gw) {
        let x = lo[0] + 0.5 * hx * (xa + 1.0);
        for (yb, wb) in gx.iter().zip(gw) {
            let y = lo[1] + 0.5 * hy * (yb + 1.0);
            let s = r2 - x * x - y * y;
            if s <= 0.0 {
                continue;
            }
            let zr = s.sqrt();
            let z0 = lo[2].max(-zr);
            let z1 = hi[2].min(zr);
            if z1 <= z0 {
                continue;
            }
            let w = wa * wb * 0.25 * hx * hy;
            let len = z1 - z0;
            vol += w * len;
            m[0] += w * len * x;
            m[1] += w * len * y;
            m[2] += w * 0.5 * (z1 * z1 - z0 * z0);
        }
    }
    (vol, m)
}

/// Cells of edge `2·radius/n` covering the ball; partial cells carry the
/// clipped volume and centroid, averaged over the three axis orderings so the
/// rule keeps the symmetry of the cube.
fn ball_cells(center: Point, radius: f64, n: usize) -> QuadratureRule {
    let h = 2.0 * radius / n as f64;
    let (gx, gw) = sphere::gauss_legendre(24);
    let r2 = radius * radius;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let lo = [-radius + i as f64 * h, -radius + j as f64 * h, -radius + k as f64 * h];
                let hi = [lo[0] + h, lo[1] + h, lo[2] + h];
                let near: f64 = (0..3)
                    .map(|d| {
                        let c = 0.0_f64.clamp(lo[d], hi[d]);
                        c * c
                    })
                    .sum();
                if near >= r2 {
                    continue;
                }
                let far: f64 = (0..3).map(|d| lo[d].abs().max(hi[d].abs()).powi(2)).sum();
                if far <= r2 {
                    let mid = [lo[0] + h / 2.0, lo[1] + h / 2.0, lo[2] + h / 2.0];
                    nodes.push(vec3::add(center, mid));
                    weights.push(h * h * h);
                    continue;
                }
                let mut vol = 0.0;
                let mut m = [0.0; 3];
                for rot in 0..3 {
                    let p = |v: [f64; 3]| [v[rot], v[(rot + 1) % 3], v[(rot + 2) % 3]];
                    let (v, mm) = clipped_cell(p(lo), p(hi), r2, &gx, &gw);
                    vol += v / 3.0;
                    for d in 0..3 {
                        m[(rot + d) % 3] += mm[d] / 3.0;
                    }
                }
                if vol > 1e-12 * h * h * h {
                    nodes.push(vec3::add(center, [m[0] / vol, m[1] / vol, m[2] / vol]));
                    weights.push(vol);
                }
            }
        }
    }
    QuadratureRule {
        nodes,
        weights,
        normals: None,
        carrier: Carrier::Volume,
    }
}

/// Midpoint rule on the cube `lo + [0, edge]³` with `n³` cells.
fn cube_cells(lo: Point, edge: f64, n: usize) -> QuadratureRule {
    let h = edge / n as f64;
    let mut nodes = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                nodes.push([
                    lo[0] + (i as f64 + 0.5) * h,
                    lo[1] + (j as f64 + 0.5) * h,
                    lo[2] + (k as f64 + 0.5) * h,
                ]);
            }
        }
    }
    let weights = vec![h * h * h; nodes.len()];
    QuadratureRule {
        nodes,
        weights,
        normals: None,
        carrier: Carrier::Volume,
    }
}

/// Reference inclusion shape: unit ball (radius 1) or unit cube [−½,½]³.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeB {
    Ball,
    Cube,
}

impl ShapeB {
    /// Radius of the smallest centred ball containing B.
    pub fn outer_radius(&self) -> f64 {
        match self {
            ShapeB::Ball => 1.0,
            ShapeB::Cube => 0.5 * 3f64.sqrt(),
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            ShapeB::Ball => 4.0 * PI / 3.0,
            ShapeB::Cube => 1.0,
        }
    }
}

/// Midpoint-type rule on the reference shape with `resolution` cells per edge.
pub fn inclusion_quadrature(shape: ShapeB, resolution: usize) -> Result<QuadratureRule> {
    if resolution < 2 {
        return Err(EclError::validation("inclusion_quadrature", "resolution must be >= 2"));
    }
    Ok(match shape {
        ShapeB::Ball => ball_cells([0.0; 3], 1.0, resolution),
        ShapeB::Cube => cube_cells([-0.5; 3], 1.0, resolution),
    })
}

/// Boundary rule with outward normals.
pub fn boundary_quadrature(domain: Domain, order: usize) -> Result<QuadratureRule> {
    if order < 2 {
        return Err(EclError::validation("boundary_quadrature", "order must be >= 2"));
    }
    match domain {
        Domain::Ball => {
            let (nodes, weights) = sphere::sphere_product(order);
            Ok(QuadratureRule {
                normals: Some(nodes.clone()),
                nodes,
                weights,
                carrier: Carrier::UnitSphere { order },
            })
        }
        Domain::Cube => {
            let n = order;
            let h = 1.0 / n as f64;
            let mut nodes = Vec::with_capacity(6 * n * n);
            let mut normals = Vec::with_capacity(6 * n * n);
            for axis in 0..3 {
                for side in 0..2 {
                    let mut nu = [0.0; 3];
                    nu[axis] = if side == 0 { -1.0 } else { 1.0 };
                    for i in 0..n {
                        for j in 0..n {
                            let mut p = [0.0; 3];
                            p[axis] = side as f64;
                            p[(axis + 1) % 3] = (i as f64 + 0.5) * h;
                            p[(axis + 2) % 3] = (j as f64 + 0.5) * h;
                            nodes.push(p);
                            normals.push(nu);
                        }
                    }
                }
            }
            let weights = vec![h * h; nodes.len()];
            Ok(QuadratureRule {
                nodes,
                weights,
                normals: Some(normals),
                carrier: Carrier::CubeSurface { n },
            })
        }
    }
}

/// Mean of a vector field over the sphere of radius `r` about `center`.
pub fn spherical_mean<F>(field: F, center: Point, r: f64, order: usize) -> Result<[C64; 3]>
where
    F: Fn(Point) -> [C64; 3],
{
    if !(r > 0.0) {
        return Err(EclError::validation("spherical_mean", "radius must be > 0"));
    }
    if order < 2 {
        return Err(EclError::validation("spherical_mean", "order must be >= 2"));
    }
    let (pts, ws) = sphere::sphere_product(order);
    let mut acc = [C64::new(0.0, 0.0); 3];
    for (p, w) in pts.iter().zip(&ws) {
        let v = field(vec3::add(center, vec3::scale(*p, r)));
        for k in 0..3 {
            acc[k] += v[k] * *w;
        }
    }
    let area = 4.0 * PI;
    Ok([acc[0] / area, acc[1] / area, acc[2] / area])
}

/// Periodic inclusion cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterGeometry {
    pub domain: Domain,
    pub h: f64,
    pub a: f64,
    pub centers: Vec<Point>,
    pub cell_volume: f64,
    /// Cell edge `(|Ω| a^{1−h})^{1/3}`.
    pub cell_edge: f64,
    pub d: f64,
    pub kappa: f64,
    pub shape_b: ShapeB,
}

#[derive(Serialize, Deserialize)]
struct ClusterFile {
    domain: Domain,
    h: f64,
    a: f64,
    centers: Vec<Point>,
    #[serde(rename = "shape_B")]
    shape_b: ShapeB,
}

fn check_h(op: &'static str, h: f64) -> Result<()> {
    if !(h > 1.0 / 3.0 && h < 1.0) {
        return Err(EclError::validation(op, format!("h = {h} violates 1/3 < h < 1")));
    }
    Ok(())
}

/// Cubic lattice of cells of volume `|Ω|·a^{1−h}` clipped to Ω with clearance κ.
pub fn build_cluster(domain: Domain, h: f64, a: f64, shape_b: ShapeB) -> Result<ClusterGeometry> {
    check_h("build_cluster", h)?;
    if !(a > 0.0) || !a.is_finite() {
        return Err(EclError::validation("build_cluster", "a must be > 0"));
    }
    let cell_volume = domain.measure() * a.powf(1.0 - h);
    let edge = cell_volume.cbrt();
    if a * shape_b.outer_radius() >= 0.5 * edge {
        return Err(EclError::validation(
            "build_cluster",
            format!("inclusion radius {a} does not fit inside cells of edge {edge:.4}"),
        ));
    }
    let kappa = CLEARANCE_FACTOR * edge;
    let centers = match domain {
        Domain::Cube => {
            let k = ((1.0 - 2.0 * kappa) / edge + 1e-9).floor().max(0.0) as usize;
            let mut c = Vec::with_capacity(k * k * k);
            let off = |i: usize| 0.5 + (i as f64 - (k as f64 - 1.0) / 2.0) * edge;
            for i in 0..k {
                for j in 0..k {
                    for l in 0..k {
                        c.push([off(i), off(j), off(l)]);
                    }
                }
            }
            c
        }
        Domain::Ball => {
            let lim = 1.0 - kappa;
            let span = (1.0 / edge).ceil() as i64 + 1;
            let mut best: Vec<Point> = Vec::new();
            for shift in [0.0, 0.5] {
                let mut c = Vec::new();
                for i in -span..=span {
                    for j in -span..=span {
                        for l in -span..=span {
                            let z = [(i as f64 + shift) * edge, (j as f64 + shift) * edge, (l as f64 + shift) * edge];
                            let far: f64 = z.iter().map(|v| (v.abs() + 0.5 * edge).powi(2)).sum();
                            if far.sqrt() <= lim + 1e-12 {
                                c.push(z);
                            }
                        }
                    }
                }
                if c.len() > best.len() {
                    best = c;
                }
            }
            best
        }
    };
    if centers.is_empty() {
        return Err(EclError::EmptyCluster {
            msg: format!("no cell of edge {edge:.4} fits with clearance {kappa:.4} (a = {a})"),
        });
    }
    Ok(ClusterGeometry {
        domain,
        h,
        a,
        d: min_spacing(&centers).unwrap_or(edge),
        centers,
        cell_volume,
        cell_edge: edge,
        kappa,
        shape_b,
    })
}

fn min_spacing(c: &[Point]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..c.len() {
        for j in (i + 1)..c.len() {
            let d = vec3::dist(c[i], c[j]);
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
    }
    best
}

/// Radius `a` for which the cube cluster is exactly a `k³` block.
pub fn a_for_cube_lattice(k: usize, h: f64) -> f64 {
    (k as f64 + 0.25).powf(-3.0 / (1.0 - h))
}

impl ClusterGeometry {
    pub fn m(&self) -> usize {
        self.centers.len()
    }

    /// Rule on D_j = z_j + aB obtained from the reference rule.
    pub fn inclusion_rule(&self, reference: &QuadratureRule, j: usize) -> QuadratureRule {
        reference.mapped(self.centers[j], self.a)
    }

    /// Distance from the inclusion D_j to ∂Ω.
    pub fn boundary_distance(&self, j: usize) -> f64 {
        self.domain.depth(self.centers[j]) - self.a * self.shape_b.outer_radius()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ClusterFile {
            domain: self.domain,
            h: self.h,
            a: self.a,
            centers: self.centers.clone(),
            shape_b: self.shape_b,
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ClusterFile = serde_json::from_str(s)?;
        let mut g = build_cluster(f.domain, f.h, f.a, f.shape_b)?;
        g.d = min_spacing(&f.centers).unwrap_or(g.cell_edge);
        g.centers = f.centers;
        Ok(g)
    }
}
