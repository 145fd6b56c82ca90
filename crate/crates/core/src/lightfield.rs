//! Monochromatic free-space light fields in the angular-spectrum picture.
//!
//! A field propagating towards +z is written as
//! `E(r) = Σ_σ ∫ d²k/(2π)² β_σ(k) ê_σ(k) e^{i k·R + i k_z z}` with
//! `ê_s = (−k_y, k_x, 0)/k` and `ê_p = (k_z k − k² ẑ)/(k₀ k)`, and the time
//! dependence `2 Re{E e^{−iωt}}`. Wave vectors are in nm⁻¹, fields in
//! statvolt/cm, and 2D coefficients in statvolt cm⁻¹ nm².

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::io::{fmt_f64, Meta, Table};
use crate::kinematics::{power_watts_per_nm_unit, LightParams, C_CM_PER_S};
use crate::quad::{adaptive, AdaptiveOptions, CVec, GaussLegendre};
use crate::special::bessel_j_triplet;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Polarisation channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    S,
    P,
}

/// Anything that can report `β_σ(k⊥)` at an arbitrary transverse wave vector.
pub trait AngularSpectrum2D: Sync {
    fn k0(&self) -> f64;

    /// `[β_s, β_p]` at `(kx, ky)`; zero outside the light cone.
    fn beta(&self, kx: f64, ky: f64) -> [Complex64; 2];

    /// Radius beyond which the coefficients vanish.
    fn support_radius(&self) -> f64 {
        self.k0()
    }

    /// Radii where the coefficients are discontinuous; quadratures split there.
    fn radial_breaks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `k_z = sqrt(k₀² − k²)`, zero outside the light cone.
#[inline]
pub fn kz_of(k0: f64, k: f64) -> f64 {
    let d = k0 * k0 - k * k;
    if d > 0.0 {
        d.sqrt()
    } else {
        0.0
    }
}

/// Cartesian polarisation unit vectors `(ê_s, ê_p)` for `k⊥ = k (cos φ, sin φ)`.
#[inline]
pub fn polarization_vectors(k0: f64, k: f64, phi: f64) -> ([f64; 3], [f64; 3]) {
    let (s, c) = phi.sin_cos();
    let kz = kz_of(k0, k);
    ([-s, c, 0.0], [kz * c / k0, kz * s / k0, -k / k0])
}

/// Coefficients on a uniform Cartesian k-grid, bilinearly interpolated between
/// nodes and forced to zero outside `|k⊥| < k₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct LightSpectrum2D {
    pub k0: f64,
    /// Node coordinates along both kx and ky.
    pub axis: UniformGrid,
    /// Row-major `[iy][ix]` pairs `[β_s, β_p]`.
    pub coeffs: Vec<[Complex64; 2]>,
}

impl LightSpectrum2D {
    /// Default resolution per axis.
    pub const DEFAULT_N: usize = 256;

    /// `n × n` nodes spanning `[-extent, extent]` inclusive.
    pub fn zeros(k0: f64, extent: f64, n: usize) -> Result<Self> {
        if !(k0 > 0.0) || !(extent > 0.0) || n < 2 {
            return Err(Error::domain(
                "spectrum grid needs k0 > 0, extent > 0 and at least 2 nodes per axis",
            ));
        }
        Ok(Self {
            k0,
            axis: UniformGrid::inclusive(-extent, extent, n),
            coeffs: vec![[ZERO; 2]; n * n],
        })
    }

    pub fn from_fn(
        k0: f64,
        extent: f64,
        n: usize,
        mut f: impl FnMut(f64, f64) -> [Complex64; 2],
    ) -> Result<Self> {
        let mut s = Self::zeros(k0, extent, n)?;
        for iy in 0..n {
            for ix in 0..n {
                let (kx, ky) = (s.axis.at(ix), s.axis.at(iy));
                if kx.hypot(ky) < k0 {
                    s.coeffs[iy * n + ix] = f(kx, ky);
                }
            }
        }
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.axis.n
    }

    pub fn node(&self, ix: usize, iy: usize) -> [Complex64; 2] {
        self.coeffs[iy * self.n() + ix]
    }

    /// Zeroes every node outside the light cone.
    pub fn enforce_light_cone(&mut self) {
        let n = self.n();
        for iy in 0..n {
            for ix in 0..n {
                if self.axis.at(ix).hypot(self.axis.at(iy)) >= self.k0 {
                    self.coeffs[iy * n + ix] = [ZERO; 2];
                }
            }
        }
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            c[0] *= s;
            c[1] *= s;
        }
        out
    }

    /// Text table `k_x k_y Re β_s Im β_s Re β_p Im β_p`, `k_x` fastest.
    pub fn to_text(&self, meta: &Meta) -> String {
        let mut meta = meta.clone();
        meta.set("k0_per_nm", fmt_f64(self.k0));
        meta.set("n", self.n());
        meta.set("columns", "kx_per_nm ky_per_nm re_beta_s im_beta_s re_beta_p im_beta_p");
        let mut out = String::new();
        meta.write_header(&mut out);
        let n = self.n();
        for (i, c) in self.coeffs.iter().enumerate() {
            out.push_str(&format!(
                "{} {} {} {} {} {}\n",
                fmt_f64(self.axis.at(i % n)),
                fmt_f64(self.axis.at(i / n)),
                fmt_f64(c[0].re),
                fmt_f64(c[0].im),
                fmt_f64(c[1].re),
                fmt_f64(c[1].im)
            ));
        }
        out
    }

    /// Parses [`LightSpectrum2D::to_text`] output; the grid must be square,
    /// symmetric about zero and the header must give `k0_per_nm`.
    pub fn from_text(text: &str) -> Result<Self> {
        let t = Table::parse(text)?;
        t.require_columns(6)?;
        let k0 = t.meta.get_f64("k0_per_nm").ok_or_else(|| Error::Parse {
            line: 0,
            msg: "2D spectrum header lacks k0_per_nm".into(),
        })?;
        let rows = t.rows.len();
        let n = (rows as f64).sqrt().round() as usize;
        if n * n != rows || n < 2 {
            return Err(Error::Parse {
                line: 0,
                msg: format!("2D spectrum needs n² rows, found {rows}"),
            });
        }
        let extent = t.rows[n - 1][0];
        let mut s = Self::zeros(k0, extent, n)?;
        let tol = 1e-6 * s.axis.step;
        for (i, r) in t.rows.iter().enumerate() {
            if (r[0] - s.axis.at(i % n)).abs() > tol || (r[1] - s.axis.at(i / n)).abs() > tol {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "2D spectrum row off the symmetric square grid".into(),
                });
            }
            s.coeffs[i] = [Complex64::new(r[2], r[3]), Complex64::new(r[4], r[5])];
        }
        Ok(s)
    }
}

impl AngularSpectrum2D for LightSpectrum2D {
    fn k0(&self) -> f64 {
        self.k0
    }

    fn beta(&self, kx: f64, ky: f64) -> [Complex64; 2] {
        if kx.hypot(ky) >= self.k0 {
            return [ZERO; 2];
        }
        let n = self.n();
        let tx = (kx - self.axis.start) / self.axis.step;
        let ty = (ky - self.axis.start) / self.axis.step;
        let last = (n - 1) as f64;
        if !(tx >= 0.0 && ty >= 0.0 && tx <= last && ty <= last) {
            return [ZERO; 2];
        }
        let ix = (tx.floor() as usize).min(n - 2);
        let iy = (ty.floor() as usize).min(n - 2);
        let fx = tx - ix as f64;
        let fy = ty - iy as f64;
        let c00 = self.coeffs[iy * n + ix];
        let c10 = self.coeffs[iy * n + ix + 1];
        let c01 = self.coeffs[(iy + 1) * n + ix];
        let c11 = self.coeffs[(iy + 1) * n + ix + 1];
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w10 = fx * (1.0 - fy);
        let w01 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        [
            c00[0] * w00 + c10[0] * w10 + c01[0] * w01 + c11[0] * w11,
            c00[1] * w00 + c10[1] * w10 + c01[1] * w01 + c11[1] * w11,
        ]
    }

    fn support_radius(&self) -> f64 {
        self.k0.min(self.axis.last().abs() * std::f64::consts::SQRT_2)
    }
}

/// 1D spectrum `E(x, z) ŷ = ∫ dk_x/2π β(k_x) e^{i(k_x x + k_z z)} ŷ` sampled on a
/// cell-centred grid inside `(−k₀, k₀)`; coefficients in statvolt cm⁻¹ nm.
#[derive(Debug, Clone, PartialEq)]
pub struct LightSpectrum1D {
    pub k0: f64,
    pub grid: UniformGrid,
    pub beta: Vec<Complex64>,
}

impl LightSpectrum1D {
    /// `n` cell-centred nodes tiling `(−k₀, k₀)`; `n` must be even so that
    /// `k_x = 0` is never a node.
    pub fn zeros(k0: f64, n: usize) -> Result<Self> {
        if !(k0 > 0.0) || n < 2 || n % 2 == 1 {
            return Err(Error::domain(
                "1D spectrum needs k0 > 0 and an even number of nodes",
            ));
        }
        Ok(Self {
            k0,
            grid: UniformGrid::cell_centered(-k0, k0, n),
            beta: vec![ZERO; n],
        })
    }

    pub fn from_fn(k0: f64, n: usize, mut f: impl FnMut(f64) -> Complex64) -> Result<Self> {
        let mut s = Self::zeros(k0, n)?;
        for (i, b) in s.beta.iter_mut().enumerate() {
            *b = f(s.grid.at(i));
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

/// Azimuthal-order-`m` beam with constant `β_s`, `β_p` over the cone
/// `k⊥ < k₀ sin θ_L` (a top-hat angular spectrum carrying `e^{imφ_k}`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VortexBeamSpec {
    pub m: u32,
    /// Divergence half-angle, rad.
    pub theta_l: f64,
    pub beta_s: Complex64,
    pub beta_p: Complex64,
    pub k0: f64,
}

impl VortexBeamSpec {
    pub fn new(
        m: u32,
        theta_l: f64,
        beta_s: Complex64,
        beta_p: Complex64,
        light: &LightParams,
    ) -> Result<Self> {
        if !(theta_l > 0.0 && theta_l < PI / 2.0) {
            return Err(Error::domain(format!(
                "divergence half-angle must lie in (0, π/2), got {theta_l}"
            )));
        }
        Ok(Self {
            m,
            theta_l,
            beta_s,
            beta_p,
            k0: light.k0,
        })
    }

    /// s-polarised beam scaled to carry `power_w` watts.
    pub fn with_power(m: u32, theta_l: f64, power_w: f64, light: &LightParams) -> Result<Self> {
        let unit = Self::new(m, theta_l, Complex64::new(1.0, 0.0), ZERO, light)?;
        let p1 = unit.power_exact(light);
        Self::new(
            m,
            theta_l,
            Complex64::new((power_w / p1).sqrt(), 0.0),
            ZERO,
            light,
        )
    }

    /// Edge of the top-hat, `k₀ sin θ_L`.
    pub fn k_cut(&self) -> f64 {
        self.k0 * self.theta_l.sin()
    }

    /// Paraxial validity radius `λ₀/(2π θ_L)`.
    pub fn paraxial_radius(&self) -> f64 {
        1.0 / (self.k0 * self.theta_l)
    }

    /// Closed-form beam power for the top-hat (no paraxial approximation).
    pub fn power_exact(&self, light: &LightParams) -> f64 {
        let kz = kz_of(self.k0, self.k_cut());
        let radial = (self.k0.powi(3) - kz.powi(3)) / 3.0;
        let b2 = self.beta_s.norm_sqr() + self.beta_p.norm_sqr();
        power_watts_per_nm_unit(light) * 2.0 * PI * radial * b2
    }

    /// `(θ_L² ω² / 8π² c)(|β_s|² + |β_p|²)`, evaluated in Gaussian units.
    pub fn power_paraxial(&self, light: &LightParams) -> f64 {
        let b2_cgs = (self.beta_s.norm_sqr() + self.beta_p.norm_sqr()) * 1e-28;
        let erg_per_s =
            self.theta_l.powi(2) * light.omega.powi(2) / (8.0 * PI * PI * C_CM_PER_S) * b2_cgs;
        erg_per_s * 1e-7
    }
}

impl AngularSpectrum2D for VortexBeamSpec {
    fn k0(&self) -> f64 {
        self.k0
    }

    fn beta(&self, kx: f64, ky: f64) -> [Complex64; 2] {
        if kx.hypot(ky) >= self.k_cut() {
            return [ZERO; 2];
        }
        let rot = Complex64::from_polar(1.0, self.m as f64 * ky.atan2(kx));
        [self.beta_s * rot, self.beta_p * rot]
    }

    fn support_radius(&self) -> f64 {
        self.k_cut()
    }

    fn radial_breaks(&self) -> Vec<f64> {
        vec![self.k_cut()]
    }
}

/// Complex field vector at one point, Cartesian components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub e: [Complex64; 3],
}

impl FieldSample {
    pub fn zero() -> Self {
        Self { e: [ZERO; 3] }
    }

    /// `|E_x|² + |E_y|² + |E_z|²/γ²`, the combination the imprinted phase integrates.
    pub fn weighted_intensity(&self, gamma: f64) -> f64 {
        self.e[0].norm_sqr() + self.e[1].norm_sqr() + self.e[2].norm_sqr() / (gamma * gamma)
    }

    pub fn intensity(&self) -> f64 {
        self.e.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `(E_R, E_φ, E_z)` at azimuth `phi`.
    pub fn cylindrical(&self, phi: f64) -> [Complex64; 3] {
        let (s, c) = phi.sin_cos();
        [
            self.e[0] * c + self.e[1] * s,
            -self.e[0] * s + self.e[1] * c,
            self.e[2],
        ]
    }

    fn from_cylindrical(cyl: [Complex64; 3], phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self {
            e: [cyl[0] * c - cyl[1] * s, cyl[0] * s + cyl[1] * c, cyl[2]],
        }
    }
}

/// Field of a 1D spectrum at `(x, z)`: midpoint quadrature of the `k_x` integral.
pub fn sample_field_1d(spec: &LightSpectrum1D, x: f64, z: f64) -> FieldSample {
    let dk = spec.grid.step;
    let mut acc = ZERO;
    for (i, b) in spec.beta.iter().enumerate() {
        let kx = spec.grid.at(i);
        let kz = kz_of(spec.k0, kx);
        acc += b * Complex64::from_polar(1.0, kx * x + kz * z);
    }
    FieldSample {
        e: [ZERO, acc * (dk / (2.0 * PI)), ZERO],
    }
}

/// Bessel-beam decomposition of a vortex beam: the radial `k⊥` integral of the
/// s and p Bessel modes, evaluated at cylindrical position `(R, φ, z)`.
pub fn sample_vortex_field(spec: &VortexBeamSpec, r: f64, phi: f64, z: f64) -> Result<FieldSample> {
    let m = spec.m;
    let mf = m as f64;
    let integrand = |k: f64| -> CVec<3> {
        let mut scratch = Vec::with_capacity(m as usize + 2);
        let j = bessel_j_triplet(m, k * r, &mut scratch);
        vortex_mode(spec, mf, k, z, j)
    };
    let opts = AdaptiveOptions {
        rel_tol: 1e-9,
        abs_tol: 0.0,
        initial_panels: 8 + oscillations(spec.k0, spec.k_cut(), r, z),
        max_depth: 40,
        noise_rel: 64.0 * f64::EPSILON * (1.0 + max_phase(spec.k0, spec.k_cut(), r, z)),
        ..AdaptiveOptions::default()
    };
    let cyl = adaptive(integrand, 0.0, spec.k_cut(), &[], opts)?;
    let pref = I.powu(m) / (2.0 * PI) * Complex64::from_polar(1.0, mf * phi + spec.k0 * z);
    let cyl = [cyl.0[0] * pref, cyl.0[1] * pref, cyl.0[2] * pref];
    Ok(FieldSample::from_cylindrical(cyl, phi))
}

/// Largest phase of `e^{i(k_z − k₀)z}` and `J_m(kR)` across `(0, k_c)`.
fn max_phase(k0: f64, kc: f64, r: f64, z: f64) -> f64 {
    (k0 - kz_of(k0, kc)) * z.abs() + kc * r
}

/// Two panels per phase turn.
fn oscillations(k0: f64, kc: f64, r: f64, z: f64) -> usize {
    (max_phase(k0, kc, r, z) / PI).ceil().min(1e6) as usize
}

/// `k [iβ_s E_s − β_p E_p]` without the `e^{imφ}` factor, cylindrical components.
#[inline]
fn vortex_mode(spec: &VortexBeamSpec, mf: f64, k: f64, z: f64, j: [f64; 3]) -> CVec<3> {
    let k0 = spec.k0;
    let kz = kz_of(k0, k);
    // (m/x) J_m = (J_{m-1} + J_{m+1})/2 stays finite at x = 0.
    let m_over_x_jm = if mf == 0.0 { 0.0 } else { 0.5 * (j[0] + j[2]) };
    let jp = 0.5 * (j[0] - j[2]);
    let es = [I * m_over_x_jm, Complex64::new(-jp, 0.0), ZERO];
    let ep = [
        I * jp * (kz / k0),
        Complex64::new(-m_over_x_jm * kz / k0, 0.0),
        Complex64::new(k / k0 * j[1], 0.0),
    ];
    // e^{i k_z z} without the common factor e^{i k₀ z}, applied by the caller;
    // keeps the phase argument small at large |z|.
    let prop = Complex64::from_polar(k, -k * k / (k0 + kz) * z);
    let bs = I * spec.beta_s;
    let bp = spec.beta_p;
    CVec([
        (bs * es[0] - bp * ep[0]) * prop,
        (bs * es[1] - bp * ep[1]) * prop,
        (bs * es[2] - bp * ep[2]) * prop,
    ])
}

/// Polar quadrature settings for direct angular-spectrum field sums.
#[derive(Debug, Clone, Copy)]
pub struct FieldQuadrature {
    pub radial_panels: usize,
    pub radial_order: usize,
    pub azimuthal: usize,
}

impl Default for FieldQuadrature {
    fn default() -> Self {
        Self {
            radial_panels: 32,
            radial_order: 8,
            azimuthal: 256,
        }
    }
}

/// Direct polar quadrature of the general angular-spectrum field at `(x, y, z)`.
pub fn sample_field_2d(
    spec: &dyn AngularSpectrum2D,
    x: f64,
    y: f64,
    z: f64,
    quad: FieldQuadrature,
) -> FieldSample {
    let k0 = spec.k0();
    let rule = GaussLegendre::new(quad.radial_order);
    let mut edges = vec![0.0];
    edges.extend(
        spec.radial_breaks()
            .into_iter()
            .filter(|&b| b > 0.0 && b < spec.support_radius()),
    );
    edges.push(spec.support_radius());
    let dphi = 2.0 * PI / quad.azimuthal as f64;
    let mut e = [ZERO; 3];
    for w in edges.windows(2) {
        let (ks, ws) = rule.composite_nodes(w[0], w[1], quad.radial_panels);
        for (&k, &wk) in ks.iter().zip(&ws) {
            let kz = kz_of(k0, k);
            for a in 0..quad.azimuthal {
                let phi = a as f64 * dphi;
                let (sn, cs) = phi.sin_cos();
                let b = spec.beta(k * cs, k * sn);
                if b[0] == ZERO && b[1] == ZERO {
                    continue;
                }
                let (es, ep) = polarization_vectors(k0, k, phi);
                let wave = Complex64::from_polar(wk * k * dphi, k * (cs * x + sn * y) + kz * z);
                for c in 0..3 {
                    e[c] += (b[0] * es[c] + b[1] * ep[c]) * wave;
                }
            }
        }
    }
    let norm = 1.0 / (4.0 * PI * PI);
    FieldSample {
        e: [e[0] * norm, e[1] * norm, e[2] * norm],
    }
}

/// Beam power in watts, `(c²/8π³ω) Σ_σ ∫ d²k k_z |β_σ|²`, by polar quadrature.
pub fn beam_power(spec: &dyn AngularSpectrum2D, light: &LightParams, quad: FieldQuadrature) -> f64 {
    let k0 = spec.k0();
    let rule = GaussLegendre::new(quad.radial_order);
    let mut edges = vec![0.0];
    edges.extend(
        spec.radial_breaks()
            .into_iter()
            .filter(|&b| b > 0.0 && b < spec.support_radius()),
    );
    edges.push(spec.support_radius());
    let dphi = 2.0 * PI / quad.azimuthal as f64;
    let mut acc = 0.0;
    for w in edges.windows(2) {
        // k = k0 sin t removes the square-root edge of k_z at the light cone.
        let t0 = (w[0] / k0).min(1.0).asin();
        let t1 = (w[1] / k0).min(1.0).asin();
        let (ts, ws) = rule.composite_nodes(t0, t1, quad.radial_panels);
        for (&t, &wt) in ts.iter().zip(&ws) {
            let k = k0 * t.sin();
            let jac = k0 * t.cos();
            let kz = kz_of(k0, k);
            let mut ring = 0.0;
            for a in 0..quad.azimuthal {
                let phi = a as f64 * dphi;
                let b = spec.beta(k * phi.cos(), k * phi.sin());
                ring += b[0].norm_sqr() + b[1].norm_sqr();
            }
            acc += wt * jac * k * kz * ring * dphi;
        }
    }
    power_watts_per_nm_unit(light) * acc
}
