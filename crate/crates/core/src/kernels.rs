//! Elastic fundamental tensors.
//!
//! Every isotropic tensor here has the form `Γ(x,y) = A(r) I + B(r) r̂ r̂ᵀ` with
//! `r = |x − y|` and `r̂ = (x − y)/r`.  The Kelvin, Kupradze and shifted
//! (Yukawa-type) tensors differ only in the radial profiles `A`, `B`, which are
//! evaluated either in closed form or through the power series in `ω`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{EclError, Result};
use crate::vec3::{self, Point};

const FOUR_PI: f64 = 4.0 * PI;
/// Below this value of `max|k|·r` the series form replaces the closed form,
/// which suffers cancellation in `∇∇(φ_s − φ_p)/k_s²`.
const SERIES_SWITCH: f64 = 0.5;
const SERIES_CAP: usize = 60;

/// Lamé moduli and background density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticBackground {
    pub lambda: f64,
    pub mu: f64,
    pub rho0: f64,
}

impl ElasticBackground {
    pub fn new(lambda: f64, mu: f64, rho0: f64) -> Result<Self> {
        let bg = ElasticBackground { lambda, mu, rho0 };
        bg.validate()?;
        Ok(bg)
    }

    /// λ = μ = ρ₀ = 1.
    pub fn unit() -> Self {
        ElasticBackground {
            lambda: 1.0,
            mu: 1.0,
            rho0: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let op = "ElasticBackground";
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(EclError::validation(op, format!("mu must be > 0, got {}", self.mu)));
        }
        if !(3.0 * self.lambda + 2.0 * self.mu > 0.0) || !self.lambda.is_finite() {
            return Err(EclError::validation(op, "3 lambda + 2 mu must be > 0"));
        }
        if !(self.rho0 > 0.0) || !self.rho0.is_finite() {
            return Err(EclError::validation(op, format!("rho0 must be > 0, got {}", self.rho0)));
        }
        Ok(())
    }

    /// P-wave modulus λ + 2μ.
    pub fn p_modulus(&self) -> f64 {
        self.lambda + 2.0 * self.mu
    }

    pub fn c_p(&self) -> f64 {
        (self.p_modulus() / self.rho0).sqrt()
    }

    pub fn c_s(&self) -> f64 {
        (self.mu / self.rho0).sqrt()
    }

    pub fn gamma1(&self) -> f64 {
        0.5 * (1.0 / self.mu + 1.0 / self.p_modulus())
    }

    pub fn gamma2(&self) -> f64 {
        0.5 * (1.0 / self.mu - 1.0 / self.p_modulus())
    }

    pub fn k_p(&self, omega: f64) -> f64 {
        omega / self.c_p()
    }

    pub fn k_s(&self, omega: f64) -> f64 {
        omega / self.c_s()
    }

    /// Wavenumbers of the time-harmonic operator `𝓛 + ω²ρ₀`.
    pub fn waves(&self, omega: f64) -> Waves {
        Waves {
            ks: C64::new(self.k_s(omega), 0.0),
            kp: C64::new(self.k_p(omega), 0.0),
        }
    }

    /// Wavenumbers of the shifted operator `𝓛 − 𝒫²`: `k_s = i𝒫/√μ`, `k_p = i𝒫/√(λ+2μ)`.
    pub fn shifted_waves(&self, p: f64) -> Waves {
        Waves {
            ks: C64::new(0.0, p / self.mu.sqrt()),
            kp: C64::new(0.0, p / self.p_modulus().sqrt()),
        }
    }
}

/// Shear and compressional wavenumbers; both zero selects the Kelvin tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waves {
    pub ks: C64,
    pub kp: C64,
}

impl Waves {
    pub const STATIC: Waves = Waves {
        ks: C64 { re: 0.0, im: 0.0 },
        kp: C64 { re: 0.0, im: 0.0 },
    };

    pub fn is_static(&self) -> bool {
        self.ks == C64::new(0.0, 0.0) && self.kp == C64::new(0.0, 0.0)
    }

    fn kmax(&self) -> f64 {
        self.ks.norm().max(self.kp.norm())
    }
}

/// A 3×3 complex tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor3(pub [[C64; 3]; 3]);

impl Tensor3 {
    pub fn zero() -> Self {
        Tensor3([[C64::new(0.0, 0.0); 3]; 3])
    }

    pub fn identity() -> Self {
        let mut t = Self::zero();
        for k in 0..3 {
            t.0[k][k] = C64::new(1.0, 0.0);
        }
        t
    }

    pub fn from_real(m: [[f64; 3]; 3]) -> Self {
        let mut t = Self::zero();
        for k in 0..3 {
            for l in 0..3 {
                t.0[k][l] = C64::new(m[k][l], 0.0);
            }
        }
        t
    }

    pub fn get(&self, k: usize, l: usize) -> C64 {
        self.0[k][l]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zero();
        for k in 0..3 {
            for l in 0..3 {
                t.0[k][l] = self.0[l][k];
            }
        }
        t
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut t = *self;
        t.0.iter_mut().flatten().for_each(|v| *v *= s);
        t
    }

    pub fn add(&self, o: &Tensor3) -> Self {
        let mut t = *self;
        for k in 0..3 {
            for l in 0..3 {
                t.0[k][l] += o.0[k][l];
            }
        }
        t
    }

    pub fn sub(&self, o: &Tensor3) -> Self {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn matmul(&self, o: &Tensor3) -> Self {
        let mut t = Self::zero();
        for k in 0..3 {
            for l in 0..3 {
                t.0[k][l] = (0..3).map(|m| self.0[k][m] * o.0[m][l]).sum();
            }
        }
        t
    }

    pub fn apply(&self, v: [C64; 3]) -> [C64; 3] {
        let mut out = [C64::new(0.0, 0.0); 3];
        for k in 0..3 {
            out[k] = self.0[k][0] * v[0] + self.0[k][1] * v[1] + self.0[k][2] * v[2];
        }
        out
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn re(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for k in 0..3 {
            for l in 0..3 {
                m[k][l] = self.0[k][l].re;
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Radial profiles `A`, `B` and their first derivatives.
#[derive(Clone, Copy, Debug)]
pub struct Radial {
    pub a: C64,
    pub b: C64,
    pub da: C64,
    pub db: C64,
}

fn coincident(x: Point, y: Point) -> bool {
    let scale = 1.0_f64.max(vec3::norm(x)).max(vec3::norm(y));
    vec3::dist(x, y) < 1e-12 * scale
}

fn check_distinct(op: &'static str, x: Point, y: Point) -> Result<()> {
    if coincident(x, y) {
        Err(EclError::Singular { op })
    } else {
        Ok(())
    }
}

/// Kahan-compensated accumulator.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: C64,
    c: C64,
}

impl Kahan {
    fn add(&mut self, v: C64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Partial sums of the series through `n_max`, or to the 1e−16 relative cutoff
/// when `n_max` is `None`.
fn radial_series(r: f64, bg: &ElasticBackground, w: Waves, n_max: Option<usize>) -> Radial {
    let mu = bg.mu;
    let pm = bg.p_modulus();
    let i = C64::new(0.0, 1.0);
    // (i k r)^n / n!
    let mut ts = C64::new(1.0, 0.0);
    let mut tp = C64::new(1.0, 0.0);
    let (mut a, mut b, mut da, mut db) = (Kahan::default(), Kahan::default(), Kahan::default(), Kahan::default());
    let cap = n_max.unwrap_or(SERIES_CAP);
    let mut small_run = 0;
    for n in 0..=cap {
        if n > 0 {
            ts *= i * w.ks * r / n as f64;
            tp *= i * w.kp * r / n as f64;
        }
        let nf = n as f64;
        // coefficient of r^{n−1}, already multiplied by r^{n}
        let an = ((nf + 1.0) * ts / mu + tp / pm) / ((nf + 2.0) * FOUR_PI);
        let bn = -(nf - 1.0) * (ts / mu - tp / pm) / ((nf + 2.0) * FOUR_PI);
        let ta = an / r;
        let tb = bn / r;
        a.add(ta);
        b.add(tb);
        da.add(ta * (nf - 1.0) / r);
        db.add(tb * (nf - 1.0) / r);
        if n_max.is_none() && n >= 2 {
            let mag = ta.norm() + tb.norm();
            if mag <= 1e-16 * (a.sum.norm() + b.sum.norm()) {
                small_run += 1;
                if small_run >= 2 {
                    break;
                }
            } else {
                small_run = 0;
            }
        }
        if w.is_static() {
            break;
        }
    }
    Radial {
        a: a.sum,
        b: b.sum,
        da: da.sum,
        db: db.sum,
    }
}

/// `g = e^{ikr}/r` and its first three derivatives.
fn helmholtz_derivs(k: C64, r: f64) -> [C64; 4] {
    let i = C64::new(0.0, 1.0);
    let e = (i * k * r).exp();
    let r2 = r * r;
    let r3 = r2 * r;
    let r4 = r3 * r;
    let k2 = k * k;
    [
        e / r,
        e * (i * k / r - 1.0 / r2),
        e * (-k2 / r - 2.0 * i * k / r2 + 2.0 / r3),
        e * (-i * k2 * k / r + 3.0 * k2 / r2 + 6.0 * i * k / r3 - 6.0 / r4),
    ]
}

fn radial_closed(r: f64, bg: &ElasticBackground, w: Waves) -> Radial {
    let mu = bg.mu;
    let gs = helmholtz_derivs(w.ks, r);
    let gp = helmholtz_derivs(w.kp, r);
    let f: Vec<C64> = (0..4).map(|j| (gs[j] - gp[j]) / FOUR_PI).collect();
    let c = 1.0 / (mu * w.ks * w.ks);
    Radial {
        a: gs[0] / (FOUR_PI * mu) + f[1] * c / r,
        b: (f[2] - f[1] / r) * c,
        da: gs[1] / (FOUR_PI * mu) + (f[2] / r - f[1] / (r * r)) * c,
        db: (f[3] - f[2] / r + f[1] / (r * r)) * c,
    }
}

/// Radial profiles at distance `r > 0`.
pub fn radial(r: f64, bg: &ElasticBackground, w: Waves) -> Radial {
    if w.is_static() {
        let g1 = bg.gamma1() / FOUR_PI;
        let g2 = bg.gamma2() / FOUR_PI;
        return Radial {
            a: C64::new(g1 / r, 0.0),
            b: C64::new(g2 / r, 0.0),
            da: C64::new(-g1 / (r * r), 0.0),
            db: C64::new(-g2 / (r * r), 0.0),
        };
    }
    if w.kmax() * r < SERIES_SWITCH {
        radial_series(r, bg, w, None)
    } else {
        radial_closed(r, bg, w)
    }
}

fn assemble(rad: &Radial, rhat: Point) -> Tensor3 {
    let mut t = Tensor3::zero();
    for k in 0..3 {
        for l in 0..3 {
            let mut v = rad.b * (rhat[k] * rhat[l]);
            if k == l {
                v += rad.a;
            }
            t.0[k][l] = v;
        }
    }
    t
}

/// Tensor `Γ(x,y)` for the given wavenumbers.
pub fn tensor(x: Point, y: Point, bg: &ElasticBackground, w: Waves) -> Result<Tensor3> {
    check_distinct("tensor", x, y)?;
    let d = vec3::sub(x, y);
    let r = vec3::norm(d);
    Ok(assemble(&radial(r, bg, w), vec3::scale(d, 1.0 / r)))
}

/// Kelvin tensor Γ⁰(x,y).
pub fn kelvin_tensor(x: Point, y: Point, bg: &ElasticBackground) -> Result<Tensor3> {
    check_distinct("kelvin_tensor", x, y)?;
    tensor(x, y, bg, Waves::STATIC)
}

/// Kupradze tensor Γ^ω(x,y); `ω = 0` gives the Kelvin tensor.
pub fn kupradze_tensor(x: Point, y: Point, bg: &ElasticBackground, omega: f64) -> Result<Tensor3> {
    if !(omega >= 0.0) {
        return Err(EclError::validation("kupradze_tensor", "omega must be >= 0"));
    }
    check_distinct("kupradze_tensor", x, y)?;
    tensor(x, y, bg, bg.waves(omega))
}

/// Shifted tensor Φ_{i𝒫}(x,y), the fundamental solution of `𝓛 − 𝒫²`.
pub fn shifted_tensor(x: Point, y: Point, bg: &ElasticBackground, p: f64) -> Result<Tensor3> {
    tensor(x, y, bg, bg.shifted_waves(p))
}

/// Partial sum of the power series of Γ^ω in ω through `n_max`.
pub fn kupradze_series(x: Point, y: Point, bg: &ElasticBackground, omega: f64, n_max: usize) -> Result<Tensor3> {
    check_distinct("kupradze_series", x, y)?;
    let d = vec3::sub(x, y);
    let r = vec3::norm(d);
    let w = bg.waves(omega);
    let rad = if omega == 0.0 {
        radial_series(r, bg, Waves::STATIC, Some(0))
    } else {
        radial_series(r, bg, w, Some(n_max))
    };
    Ok(assemble(&rad, vec3::scale(d, 1.0 / r)))
}

/// Far-field tensors `(Γ_p^∞, Γ_s^∞)` for the unit direction `xhat`.
pub fn far_field_tensors(xhat: Point, y: Point, bg: &ElasticBackground, omega: f64) -> Result<(Tensor3, Tensor3)> {
    if (vec3::norm(xhat) - 1.0).abs() > 1e-10 {
        return Err(EclError::validation("far_field_tensors", "direction must have unit length"));
    }
    let i = C64::new(0.0, 1.0);
    let phase = vec3::dot(xhat, y);
    let ep = (-i * bg.k_p(omega) * phase).exp() / (FOUR_PI * bg.p_modulus());
    let es = (-i * bg.k_s(omega) * phase).exp() / (FOUR_PI * bg.mu);
    let mut gp = Tensor3::zero();
    let mut gs = Tensor3::zero();
    for k in 0..3 {
        for l in 0..3 {
            let xx = xhat[k] * xhat[l];
            gp.0[k][l] = ep * xx;
            gs.0[k][l] = es * ((if k == l { 1.0 } else { 0.0 }) - xx);
        }
    }
    Ok((gp, gs))
}

/// Gradient with respect to the first argument: `g[m][k][l] = ∂Γ_kl/∂x_m`.
pub fn gradient_x(x: Point, y: Point, bg: &ElasticBackground, w: Waves) -> Result<[[[C64; 3]; 3]; 3]> {
    check_distinct("gradient", x, y)?;
    let d = vec3::sub(x, y);
    let r = vec3::norm(d);
    let rh = vec3::scale(d, 1.0 / r);
    let rad = radial(r, bg, w);
    let br = rad.b / r;
    let mut g = [[[C64::new(0.0, 0.0); 3]; 3]; 3];
    for m in 0..3 {
        for k in 0..3 {
            for l in 0..3 {
                let dmk = if m == k { 1.0 } else { 0.0 };
                let dml = if m == l { 1.0 } else { 0.0 };
                let dkl = if k == l { 1.0 } else { 0.0 };
                g[m][k][l] = rad.da * (rh[m] * dkl)
                    + rad.db * (rh[m] * rh[k] * rh[l])
                    + br * (dmk * rh[l] + dml * rh[k] - 2.0 * rh[k] * rh[l] * rh[m]);
            }
        }
    }
    Ok(g)
}

/// Kelvin gradient with respect to the source point: `g[m][k][l] = ∂Γ⁰_kl/∂y_m`.
pub fn kelvin_gradient(x: Point, y: Point, bg: &ElasticBackground) -> Result<[[[f64; 3]; 3]; 3]> {
    check_distinct("kelvin_gradient", x, y)?;
    let gx = gradient_x(x, y, bg, Waves::STATIC)?;
    let mut g = [[[0.0; 3]; 3]; 3];
    for m in 0..3 {
        for k in 0..3 {
            for l in 0..3 {
                g[m][k][l] = -gx[m][k][l].re;
            }
        }
    }
    Ok(g)
}

/// Traction with respect to `x` (normal `nu` at `x`) of the columns of `Γ(·,y)`:
/// row `k` is the traction component, column `l` the source direction.
pub fn traction_tensor(rad: &Radial, d: Point, nu: Point, bg: &ElasticBackground) -> Tensor3 {
    let r = vec3::norm(d);
    let rh = vec3::scale(d, 1.0 / r);
    let rn = vec3::dot(rh, nu);
    let br = rad.b / r;
    let lam = bg.lambda;
    let mu = bg.mu;
    let c_id = mu * rn * (rad.da + br);
    let c_rr = mu * rn * (2.0 * rad.db - 4.0 * br);
    let c_nr = lam * (rad.da + rad.db + 2.0 * br) + 2.0 * mu * br;
    let c_rn = mu * (br + rad.da);
    let mut t = Tensor3::zero();
    for k in 0..3 {
        for l in 0..3 {
            let mut v = c_rr * (rh[k] * rh[l]) + c_nr * (nu[k] * rh[l]) + c_rn * (rh[k] * nu[l]);
            if k == l {
                v += c_id;
            }
            t.0[k][l] = v;
        }
    }
    t
}

/// Traction kernel `T_x Γ(x,y)` with normal `nu` at `x`.
pub fn traction_kernel(x: Point, y: Point, nu: Point, bg: &ElasticBackground, w: Waves) -> Result<Tensor3> {
    check_distinct("traction_kernel", x, y)?;
    let d = vec3::sub(x, y);
    Ok(traction_tensor(&radial(vec3::norm(d), bg, w), d, nu, bg))
}

/// Integral of `Γ(0,·)` over the ball of radius `radius`, a multiple of the identity.
pub fn ball_integral(radius: f64, bg: &ElasticBackground, w: Waves) -> C64 {
    if w.is_static() {
        return C64::new((bg.gamma1() + bg.gamma2() / 3.0) * radius * radius / 2.0, 0.0);
    }
    // 4π ∫₀^R (A + B/3) r² dr, integrand smooth in r
    let (xs, ws) = crate::sphere::gauss_legendre(24);
    let mut acc = C64::new(0.0, 0.0);
    for (x, wq) in xs.iter().zip(ws.iter()) {
        let r = 0.5 * radius * (x + 1.0);
        let rad = radial(r, bg, w);
        acc += (rad.a + rad.b / 3.0) * (r * r) * (0.5 * radius * wq);
    }
    acc * FOUR_PI
}
