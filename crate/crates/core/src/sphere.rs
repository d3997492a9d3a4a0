//! Gauss–Legendre rules, real spherical harmonics and the rotated-pole
//! product rule used for singular and near-singular surface integrals.

use std::f64::consts::PI;

use crate::vec3::{self, Point};

/// Gauss–Legendre nodes and weights on [−1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Legendre polynomial `P_n(z)` and its derivative, for |z| < 1.
pub(crate) fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    (x.iter().map(|t| a + h * (t + 1.0)).collect(), w.iter().map(|v| v * h).collect())
}

/// Number of real spherical harmonics of degree ≤ `lmax`.
pub fn sh_count(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 1)
}

/// Index of `Y_lm` in the flat ordering `l² + l + m`.
pub fn sh_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Orthonormal real spherical harmonics up to degree `lmax` at the unit vector `p`.
/// `out` must hold `sh_count(lmax)` values.
pub fn real_sh(lmax: usize, p: Point, out: &mut [f64]) {
    let ct = p[2].clamp(-1.0, 1.0);
    let st = (p[0] * p[0] + p[1] * p[1]).sqrt();
    let (cphi, sphi) = if st > 1e-300 { (p[0] / st, p[1] / st) } else { (1.0, 0.0) };
    let nl = lmax + 1;
    // cos(mφ), sin(mφ)
    let mut cm = vec![1.0; nl];
    let mut sm = vec![0.0; nl];
    for m in 1..nl {
        cm[m] = cm[m - 1] * cphi - sm[m - 1] * sphi;
        sm[m] = sm[m - 1] * cphi + cm[m - 1] * sphi;
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut pmm = 1.0 / (4.0 * PI).sqrt();
    for m in 0..nl {
        if m > 0 {
            pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * st;
        }
        let mf = m as f64;
        let store = |l: usize, val: f64, out: &mut [f64]| {
            if m == 0 {
                out[sh_index(l, 0)] = val;
            } else {
                out[sh_index(l, m as i64)] = sqrt2 * val * cm[m];
                out[sh_index(l, -(m as i64))] = sqrt2 * val * sm[m];
            }
        };
        store(m, pmm, out);
        if m < lmax {
            let mut p_lm2 = pmm;
            let mut p_lm1 = (2.0 * mf + 3.0).sqrt() * ct * pmm;
            store(m + 1, p_lm1, out);
            for l in (m + 2)..=lmax {
                let lf = l as f64;
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
                let p = a * (ct * p_lm1 - b * p_lm2);
                store(l, p, out);
                p_lm2 = p_lm1;
                p_lm1 = p;
            }
        }
    }
}

/// Degree of each flat harmonic index.
pub fn sh_degrees(lmax: usize) -> Vec<usize> {
    let mut d = Vec::with_capacity(sh_count(lmax));
    for l in 0..=lmax {
        for _ in 0..(2 * l + 1) {
            d.push(l);
        }
    }
    d
}

/// Unit-sphere product rule: Gauss–Legendre in cos θ times `2·order` uniform azimuths.
/// Returns (points, weights).
pub fn sphere_product(order: usize) -> (Vec<Point>, Vec<f64>) {
    let (ct, wt) = gauss_legendre(order);
    let nphi = 2 * order;
    let dphi = 2.0 * PI / nphi as f64;
    let mut pts = Vec::with_capacity(order * nphi);
    let mut ws = Vec::with_capacity(order * nphi);
    for (c, w) in ct.iter().zip(wt.iter()) {
        let s = (1.0 - c * c).max(0.0).sqrt();
        for j in 0..nphi {
            let phi = dphi * j as f64;
            pts.push([s * phi.cos(), s * phi.sin(), *c]);
            ws.push(w * dphi);
        }
    }
    (pts, ws)
}

/// Rotated-pole rule on the unit sphere concentrated around the pole `p0`.
///
/// `delta` is the distance of the evaluation point from the sphere (zero for
/// on-surface evaluation) and `lmax` the band limit of the integrated density.
/// Returns (points on the sphere, area weights).
pub fn rotated_rule(p0: Point, delta: f64, lmax: usize) -> (Vec<Point>, Vec<f64>) {
    let rot = vec3::rotation_to(p0);
    let mut breaks = vec![0.0];
    let mut t = delta.clamp(1e-7, 0.05);
    if delta == 0.0 {
        t = 0.05;
    }
    while t < 0.4 {
        breaks.push(t);
        t *= 2.0;
    }
    breaks.push(0.4);
    let rest = PI - 0.4;
    let nuni = ((rest / 0.4).ceil() as usize).max(((lmax as f64) / 4.0).ceil() as usize);
    for k in 1..=nuni {
        breaks.push(0.4 + rest * k as f64 / nuni as f64);
    }
    let mut th = Vec::new();
    let mut wth = Vec::new();
    for win in breaks.windows(2) {
        let (x, w) = gauss_legendre_on(10, win[0], win[1]);
        th.extend(x);
        wth.extend(w);
    }
    let mut nphi = lmax + 8;
    if nphi % 2 == 1 {
        nphi += 1;
    }
    let dphi = 2.0 * PI / nphi as f64;
    let mut pts = Vec::with_capacity(th.len() * nphi);
    let mut ws = Vec::with_capacity(th.len() * nphi);
    for (t, w) in th.iter().zip(wth.iter()) {
        let (s, c) = t.sin_cos();
        for j in 0..nphi {
            let phi = dphi * (j as f64 + 0.5);
            let local = [s * phi.cos(), s * phi.sin(), c];
            pts.push(vec3::mat_vec(&rot, local));
            ws.push(w * s * dphi);
        }
    }
    (pts, ws)
}

/// Spherical Bessel function j₀.
pub fn j0(t: f64) -> f64 {
    if t.abs() < 1e-4 {
        1.0 - t * t / 6.0 + t.powi(4) / 120.0
    } else {
        t.sin() / t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((q - 2.0 / 13.0).abs() < 1e-14);
    }

    #[test]
    fn harmonics_are_orthonormal() {
        let lmax = 6;
        let (pts, ws) = sphere_product(lmax + 1);
        let n = sh_count(lmax);
        let mut gram = vec![0.0; n * n];
        let mut y = vec![0.0; n];
        for (p, w) in pts.iter().zip(&ws) {
            real_sh(lmax, *p, &mut y);
            for i in 0..n {
                for j in 0..n {
                    gram[i * n + j] += w * y[i] * y[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i * n + j] - e).abs() < 1e-12, "{i} {j} {}", gram[i * n + j]);
            }
        }
    }

    #[test]
    fn rotated_rule_has_sphere_area() {
        for &d in &[0.0, 1e-3, 0.2] {
            let (_, w) = rotated_rule(vec3::normalize([0.3, -0.2, 0.9]), d, 12);
            let s: f64 = w.iter().sum();
            assert!((s - 4.0 * PI).abs() < 1e-12);
        }
    }
}
