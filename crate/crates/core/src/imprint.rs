//! Ponderomotive phase imprinted on a fast electron crossing a light field,
//! `φ(R) = −(1/Mω²) ∫dz [|E_x|² + |E_y|² + |E_z|²/γ²]`, and the closed forms
//! and power budgets that follow from it for vortex beams.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::io::{encode_pgm, fmt_f64, to_gray, Meta, Table};
use crate::kinematics::{ElectronParams, LightParams, C_M_PER_S, HBAR_C_EV_NM, ALPHA_INV, NM_PER_MM};
use crate::lightfield::{kz_of, FieldSample, VortexBeamSpec};
use crate::quad::{adaptive, AdaptiveOptions};
use crate::special::bessel_j_triplet;

/// Sample positions of a phase map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Axes {
    Line(UniformGrid),
    Plane { x: UniformGrid, y: UniformGrid },
}

/// Real phase (rad) on a 1D or 2D grid of transverse positions in nm.
/// 2D values are row-major `[iy][ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub r_max: f64,
    pub axes: Axes,
    pub phi: Vec<f64>,
    pub meta: Meta,
}

impl PhaseMap {
    pub fn line(x: UniformGrid, phi: Vec<f64>, r_max: f64) -> Result<Self> {
        Self::new(Axes::Line(x), phi, r_max)
    }

    pub fn plane(x: UniformGrid, y: UniformGrid, phi: Vec<f64>, r_max: f64) -> Result<Self> {
        Self::new(Axes::Plane { x, y }, phi, r_max)
    }

    fn new(axes: Axes, phi: Vec<f64>, r_max: f64) -> Result<Self> {
        let n = match axes {
            Axes::Line(x) => x.n,
            Axes::Plane { x, y } => x.n * y.n,
        };
        if phi.len() != n {
            return Err(Error::grid(format!(
                "phase map has {} values for {n} grid nodes",
                phi.len()
            )));
        }
        if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("phase value {i} is not finite")));
        }
        if !(r_max > 0.0) {
            return Err(Error::domain("aperture radius must be positive"));
        }
        Ok(Self {
            r_max,
            axes,
            phi,
            meta: Meta::new(),
        })
    }

    /// `n` nodes per axis spanning `[−R_max, R_max]` inclusive, filled from `f(x, y)`.
    pub fn from_fn_plane(n: usize, r_max: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let g = UniformGrid::inclusive(-r_max, r_max, n);
        let mut phi = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                phi.push(f(g.at(ix), g.at(iy)));
            }
        }
        Self::plane(g, g, phi, r_max)
    }

    pub fn from_fn_line(n: usize, r_max: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let g = UniformGrid::inclusive(-r_max, r_max, n);
        Self::line(g, g.coords().into_iter().map(f).collect(), r_max)
    }

    pub fn is_plane(&self) -> bool {
        matches!(self.axes, Axes::Plane { .. })
    }

    pub fn x_axis(&self) -> UniformGrid {
        match self.axes {
            Axes::Line(x) | Axes::Plane { x, .. } => x,
        }
    }

    /// Linear (1D) or bilinear (2D) interpolation; `None` outside the grid.
    pub fn value_at(&self, x: f64, y: f64) -> Option<f64> {
        match self.axes {
            Axes::Line(g) => g.interpolate(&self.phi, x),
            Axes::Plane { x: gx, y: gy } => {
                let tx = (x - gx.start) / gx.step;
                let ty = (y - gy.start) / gy.step;
                let (lx, ly) = ((gx.n - 1) as f64, (gy.n - 1) as f64);
                let tol = 0.5 + 1e-9;
                if tx < -tol || ty < -tol || tx > lx + tol || ty > ly + tol {
                    return None;
                }
                let tx = tx.clamp(0.0, lx);
                let ty = ty.clamp(0.0, ly);
                let ix = (tx.floor() as usize).min(gx.n.saturating_sub(2));
                let iy = (ty.floor() as usize).min(gy.n.saturating_sub(2));
                let (fx, fy) = (tx - ix as f64, ty - iy as f64);
                let at = |i: usize, j: usize| self.phi[j.min(gy.n - 1) * gx.n + i.min(gx.n - 1)];
                Some(
                    at(ix, iy) * (1.0 - fx) * (1.0 - fy)
                        + at(ix + 1, iy) * fx * (1.0 - fy)
                        + at(ix, iy + 1) * (1.0 - fx) * fy
                        + at(ix + 1, iy + 1) * fx * fy,
                )
            }
        }
    }

    /// Whether the grid reaches `R_max` in every direction.
    pub fn covers_aperture(&self) -> bool {
        let covers = |g: UniformGrid| {
            let tol = 0.5 * g.step.abs() + 1e-9 * self.r_max;
            g.start <= -self.r_max + tol && g.last() >= self.r_max - tol
        };
        match self.axes {
            Axes::Line(x) => covers(x),
            Axes::Plane { x, y } => covers(x) && covers(y),
        }
    }

    pub fn add_constant(&mut self, c: f64) {
        for v in self.phi.iter_mut() {
            *v += c;
        }
    }

    /// Mean over nodes inside the aperture (`|x| ≤ R_max` or `R ≤ R_max`).
    pub fn aperture_mean(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        self.for_each_in_aperture(|v| {
            sum += v;
            count += 1;
        });
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Shifts the map to zero mean over the aperture and returns the removed constant.
    pub fn remove_mean(&mut self) -> f64 {
        let m = self.aperture_mean();
        self.add_constant(-m);
        m
    }

    fn for_each_in_aperture(&self, mut f: impl FnMut(f64)) {
        let r2 = self.r_max * self.r_max * (1.0 + 1e-12);
        match self.axes {
            Axes::Line(g) => {
                for (i, &v) in self.phi.iter().enumerate() {
                    if g.at(i).powi(2) <= r2 {
                        f(v);
                    }
                }
            }
            Axes::Plane { x, y } => {
                for iy in 0..y.n {
                    for ix in 0..x.n {
                        if x.at(ix).powi(2) + y.at(iy).powi(2) <= r2 {
                            f(self.phi[iy * x.n + ix]);
                        }
                    }
                }
            }
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.phi
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Delimited text: `x, phi` or `x, y, phi` per node, with header metadata.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut meta = self.meta.clone();
        meta.set("r_max_nm", fmt_f64(self.r_max));
        match self.axes {
            Axes::Line(x) => {
                meta.set("nx", x.n);
                meta.set("columns", "x_nm phi_rad");
                meta.write_header(&mut out);
                for (i, v) in self.phi.iter().enumerate() {
                    out.push_str(&format!("{} {}\n", fmt_f64(x.at(i)), fmt_f64(*v)));
                }
            }
            Axes::Plane { x, y } => {
                meta.set("nx", x.n);
                meta.set("ny", y.n);
                meta.set("columns", "x_nm y_nm phi_rad");
                meta.write_header(&mut out);
                for iy in 0..y.n {
                    for ix in 0..x.n {
                        out.push_str(&format!(
                            "{} {} {}\n",
                            fmt_f64(x.at(ix)),
                            fmt_f64(y.at(iy)),
                            fmt_f64(self.phi[iy * x.n + ix])
                        ));
                    }
                }
            }
        }
        out
    }

    /// Parses the format written by [`PhaseMap::to_text`]. Rows must lie on a
    /// uniform grid; 2D rows are ordered with x varying fastest.
    pub fn from_text(text: &str) -> Result<Self> {
        let t = Table::parse(text)?;
        let r_max_hint = t.meta.get_f64("r_max_nm");
        match t.columns() {
            2 => {
                let xs: Vec<f64> = t.rows.iter().map(|r| r[0]).collect();
                let g = uniform_from(&xs)?;
                let r_max = r_max_hint.unwrap_or_else(|| g.start.abs().max(g.last().abs()));
                let mut m = Self::line(g, t.rows.iter().map(|r| r[1]).collect(), r_max)?;
                m.meta = t.meta;
                Ok(m)
            }
            3 => {
                let nx = t.rows.iter().take_while(|r| r[1] == t.rows[0][1]).count();
                if nx == 0 || t.rows.len() % nx != 0 {
                    return Err(Error::Parse {
                        line: 0,
                        msg: "2D phase rows do not form a rectangular grid".into(),
                    });
                }
                let ny = t.rows.len() / nx;
                let xs: Vec<f64> = t.rows[..nx].iter().map(|r| r[0]).collect();
                let ys: Vec<f64> = (0..ny).map(|j| t.rows[j * nx][1]).collect();
                let gx = uniform_from(&xs)?;
                let gy = uniform_from(&ys)?;
                for (i, r) in t.rows.iter().enumerate() {
                    let (ix, iy) = (i % nx, i / nx);
                    let tol = 1e-6 * gx.step.abs().max(gy.step.abs());
                    if (r[0] - gx.at(ix)).abs() > tol || (r[1] - gy.at(iy)).abs() > tol {
                        return Err(Error::Parse {
                            line: i + 1,
                            msg: "2D phase row off the uniform grid".into(),
                        });
                    }
                }
                let r_max = r_max_hint.unwrap_or_else(|| gx.last().abs().max(gx.start.abs()));
                let mut m = Self::plane(gx, gy, t.rows.iter().map(|r| r[2]).collect(), r_max)?;
                m.meta = t.meta;
                Ok(m)
            }
            c => Err(Error::Parse {
                line: 0,
                msg: format!("phase file needs 2 or 3 columns, found {c}"),
            }),
        }
    }

    /// 8-bit graymap with `[min φ, 0] → [0, 255]`. A 1D map becomes a one-row image.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (lo, _) = self.min_max();
        let lo = lo.min(0.0);
        let (w, h) = match self.axes {
            Axes::Line(x) => (x.n, 1),
            Axes::Plane { x, y } => (x.n, y.n),
        };
        // graymaps store the top row first; flip so +y points up
        let mut px = Vec::with_capacity(w * h);
        for row in (0..h).rev() {
            px.extend(to_gray(&self.phi[row * w..(row + 1) * w], lo, 0.0));
        }
        encode_pgm(w, h, &px, &self.meta)
    }
}

fn uniform_from(xs: &[f64]) -> Result<UniformGrid> {
    if xs.len() < 2 {
        return Err(Error::Parse {
            line: 0,
            msg: "a grid needs at least two nodes".into(),
        });
    }
    let g = UniformGrid::inclusive(xs[0], xs[xs.len() - 1], xs.len());
    let tol = 1e-6 * g.step.abs();
    if g.step == 0.0 || xs.iter().enumerate().any(|(i, &x)| (x - g.at(i)).abs() > tol) {
        return Err(Error::Parse {
            line: 0,
            msg: "coordinates are not uniformly spaced".into(),
        });
    }
    Ok(g)
}

/// Control of the axial (z) line integral.
#[derive(Debug, Clone, Copy)]
pub struct ZQuadrature {
    /// Initial half-width of the symmetric window, nm.
    pub half_width: f64,
    /// Expected axial oscillation length, nm; sets the initial panel count.
    pub resolution: f64,
    /// Allowed relative uncertainty of the tail correction.
    pub tail_tol: f64,
    /// Number of times the window may be doubled before giving up.
    pub max_doublings: u32,
}

impl ZQuadrature {
    pub const DEFAULT_TAIL_TOL: f64 = 1e-3;

    /// Window of 64 axial lengths `scale`, resolved at `scale`.
    pub fn for_length(scale: f64) -> Self {
        Self {
            half_width: 64.0 * scale,
            resolution: scale,
            tail_tol: Self::DEFAULT_TAIL_TOL,
            max_doublings: 4,
        }
    }
}

/// One line-integral result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZIntegral {
    /// `∫dz W` including the algebraic-tail correction, statvolt² cm⁻² nm.
    pub value: f64,
    /// Tail beyond the final window that was added to `value`.
    pub tail: f64,
    /// Estimated uncertainty of the tail correction.
    pub uncertainty: f64,
    pub half_width: f64,
}

/// `∫dz W(z)` for a non-negative `W` decaying at least like `1/z²`.
///
/// The integral over the last octave `[Z/2, Z]` of each side doubles as the
/// estimate `A/Z` of the `A/z²` tail beyond `Z`; the mismatch with half the
/// previous octave measures how far the integrand is from that asymptote.
pub fn integrate_axial(w: impl Fn(f64) -> Result<f64>, zq: ZQuadrature) -> Result<ZIntegral> {
    let opts = |len: f64| AdaptiveOptions {
        rel_tol: 1e-3 * zq.tail_tol,
        abs_tol: 0.0,
        initial_panels: ((len / zq.resolution).ceil() as usize).clamp(4, 1 << 16),
        max_depth: 30,
        ..AdaptiveOptions::default()
    };
    let err = std::cell::RefCell::new(None);
    let f = |z: f64| match w(z) {
        Ok(v) => v,
        Err(e) => {
            err.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let mut z_max = zq.half_width;
    let mut last = None;
    for _ in 0..=zq.max_doublings {
        let mut core = 0.0;
        let mut tail = 0.0;
        let mut unc = 0.0;
        for side in [-1.0, 1.0] {
            let g = |t: f64| f(side * t);
            let inner = adaptive(g, 0.0, z_max / 4.0, &[], opts(z_max / 4.0))?;
            let prev = adaptive(g, z_max / 4.0, z_max / 2.0, &[], opts(z_max / 4.0))?;
            let outer = adaptive(g, z_max / 2.0, z_max, &[], opts(z_max / 2.0))?;
            core += inner + prev + outer;
            tail += outer;
            unc += (outer - 0.5 * prev).abs();
        }
        if let Some(e) = err.borrow_mut().take() {
            return Err(e);
        }
        let total = core + tail;
        let res = ZIntegral {
            value: total,
            tail,
            uncertainty: unc,
            half_width: z_max,
        };
        if unc <= zq.tail_tol * total.abs() || total == 0.0 {
            return Ok(res);
        }
        last = Some(res);
        z_max *= 2.0;
    }
    let res = last.expect("at least one window evaluated");
    Err(Error::Convergence {
        what: format!(
            "axial tail beyond z = ±{:.3e} nm (estimate {:.3e} of a total {:.3e})",
            res.half_width, res.tail, res.value
        ),
        estimate: res.uncertainty / res.value.abs(),
        tolerance: zq.tail_tol,
    })
}

/// Imprinted phase at one transverse point from a field sampler `(x, y, z)`.
pub fn imprint_phase_at<F>(
    field: &F,
    x: f64,
    y: f64,
    electron: &ElectronParams,
    light: &LightParams,
    zq: ZQuadrature,
) -> Result<(f64, ZIntegral)>
where
    F: Fn(f64, f64, f64) -> Result<FieldSample> + Sync,
{
    let g = electron.gamma;
    let zi = integrate_axial(|z| Ok(field(x, y, z)?.weighted_intensity(g)), zq)?;
    Ok((-electron.phase_coupling(light) * zi.value, zi))
}

/// Phase map over the given axes by z-quadrature of the sampled field.
/// The largest tail correction and uncertainty are recorded in the metadata.
pub fn imprint_phase<F>(
    field: &F,
    axes: Axes,
    r_max: f64,
    electron: &ElectronParams,
    light: &LightParams,
    zq: ZQuadrature,
) -> Result<PhaseMap>
where
    F: Fn(f64, f64, f64) -> Result<FieldSample> + Sync,
{
    let points: Vec<(f64, f64)> = match axes {
        Axes::Line(x) => x.coords().into_iter().map(|x| (x, 0.0)).collect(),
        Axes::Plane { x, y } => (0..y.n)
            .flat_map(|iy| (0..x.n).map(move |ix| (x.at(ix), y.at(iy))))
            .collect(),
    };
    let results = points
        .par_iter()
        .map(|&(x, y)| imprint_phase_at(field, x, y, electron, light, zq))
        .collect::<Result<Vec<_>>>()?;
    let phi = results.iter().map(|r| r.0).collect();
    let rel = |f: fn(&ZIntegral) -> f64| {
        results
            .iter()
            .map(|r| if r.1.value > 0.0 { f(&r.1) / r.1.value } else { 0.0 })
            .fold(0.0, f64::max)
    };
    let mut map = PhaseMap::new(axes, phi, r_max)?;
    map.meta.set("z_tail_relative_max", fmt_f64(rel(|z| z.tail)));
    map.meta
        .set("z_uncertainty_relative_max", fmt_f64(rel(|z| z.uncertainty)));
    Ok(map)
}

/// Exact phase of a vortex beam by radial quadrature of its Bessel-mode
/// decomposition (the z integral is done analytically).
///
/// `φ(R) = −(1/2πMω²) ∫₀^{k_c} k k_z dk [½|β_s + iκβ_p|² J²_{m−1} +
/// ½|β_s − iκβ_p|² J²_{m+1} + (k²/γ²k₀²)|β_p|² J²_m]`, `κ = k_z/k₀`.
pub fn vortex_phase_radial(
    spec: &VortexBeamSpec,
    electron: &ElectronParams,
    light: &LightParams,
    r: f64,
) -> Result<f64> {
    let k0 = spec.k0;
    let m = spec.m;
    let g2 = electron.gamma * electron.gamma;
    let integrand = |k: f64| {
        let mut scratch = Vec::with_capacity(m as usize + 2);
        let j = bessel_j_triplet(m, k * r, &mut scratch);
        let kz = kz_of(k0, k);
        let ik = num_complex::Complex64::new(0.0, kz / k0);
        let a = (spec.beta_s + ik * spec.beta_p).norm_sqr();
        let b = (spec.beta_s - ik * spec.beta_p).norm_sqr();
        let c = (k * k) / (k0 * k0 * g2) * spec.beta_p.norm_sqr();
        k * kz * (0.5 * a * j[0] * j[0] + 0.5 * b * j[2] * j[2] + c * j[1] * j[1])
    };
    let opts = AdaptiveOptions {
        rel_tol: 1e-10,
        abs_tol: 0.0,
        initial_panels: 8 + (spec.k_cut() * r / PI).ceil() as usize,
        max_depth: 40,
        ..AdaptiveOptions::default()
    };
    let v = adaptive(integrand, 0.0, spec.k_cut(), &[], opts)?;
    Ok(-electron.phase_coupling(light) * v / (2.0 * PI))
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn check_paraxial(theta_l: f64, k0: f64, r: f64) -> Option<String> {
    (r * k0 * theta_l > 0.3).then(|| {
        format!(
            "R = {r:.3e} nm is not small against the paraxial radius {:.3e} nm",
            1.0 / (k0 * theta_l)
        )
    })
}

/// Lowest-order paraxial vortex phase,
/// `φ = −(π m P / m!² Mc²ω)(k₀θ_L R/2)^{2(m−1)}`, as derived from the Bessel-mode
/// expansion together with the paraxial beam power.
pub fn paraxial_appendix(
    m: i64,
    power_w: f64,
    theta_l: f64,
    electron: &ElectronParams,
    light: &LightParams,
    r: f64,
) -> Result<f64> {
    if m < 1 {
        return Err(Error::domain(format!(
            "paraxial vortex phase needs an azimuthal number m ≥ 1, got {m}"
        )));
    }
    let mu = m as u32;
    let x = light.k0 * theta_l * r / 2.0;
    Ok(-PI * m as f64 * power_w / (factorial(mu).powi(2) * electron.mass_energy_rate_watts(light))
        * x.powi(2 * (mu as i32 - 1)))
}

/// The `m = 3` closed form `φ = −(π² P / 96 Mc²ω)(θ_L R/λ₀)⁴`.
pub fn paraxial_main_text(
    power_w: f64,
    theta_l: f64,
    electron: &ElectronParams,
    light: &LightParams,
    r: f64,
) -> f64 {
    -PI * PI * power_w / (96.0 * electron.mass_energy_rate_watts(light))
        * (theta_l * r / light.wavelength).powi(4)
}

/// Paraxial vortex phase with a validity check; the returned warning is set
/// when `R` is not small against `λ₀/(2πθ_L)`.
pub fn vortex_phase_paraxial(
    m: i64,
    power_w: f64,
    theta_l: f64,
    electron: &ElectronParams,
    light: &LightParams,
    r: f64,
) -> Result<(f64, Option<String>)> {
    let phi = paraxial_appendix(m, power_w, theta_l, electron, light, r)?;
    Ok((phi, check_paraxial(theta_l, light.k0, r)))
}

/// Effective interaction length `L = 2λ₀/θ_L²` of an `m = 1` paraxial vortex.
pub fn effective_length(theta_l: f64, lambda0: f64) -> Result<f64> {
    if !(theta_l > 0.0) {
        return Err(Error::domain(
            "divergence half-angle must be positive (zero gives an infinite interaction length)",
        ));
    }
    Ok(2.0 * lambda0 / (theta_l * theta_l))
}

/// Beam power of an `m = 1` vortex imprinting `φ_target`: `|φ/2π| · 2Mc²ω`.
pub fn power_for_phase(phi_target: f64, electron: &ElectronParams, light: &LightParams) -> f64 {
    (phi_target / (2.0 * PI)).abs() * 2.0 * electron.mass_energy_rate_watts(light)
}

/// `P = (6ħc²/π⁴α) C₃ q₀² λ₀³ / θ_L⁴ (z_f − z_L)⁴`, the `m = 3` beam power that
/// cancels spherical aberration. Returns the power in watts and, when the
/// aperture radius is given, a warning if it exceeds the paraxial range.
pub fn aberration_correction_power(
    c3_mm: f64,
    electron: &ElectronParams,
    light: &LightParams,
    theta_l: f64,
    zf_minus_zl_mm: f64,
) -> Result<f64> {
    if !(theta_l > 0.0) || !(zf_minus_zl_mm > 0.0) {
        return Err(Error::domain(
            "aberration correction needs a positive divergence angle and lens-to-focus distance",
        ));
    }
    let c3 = c3_mm * NM_PER_MM;
    let d = zf_minus_zl_mm * NM_PER_MM;
    // ħc² in W·nm²: (eV·nm → J·nm) × c in nm/s
    let hbar_c2 = HBAR_C_EV_NM * 1.602_176_634e-19 * C_M_PER_S * 1e9;
    let geom = c3 * electron.q0.powi(2) * light.wavelength.powi(3) / (theta_l.powi(4) * d.powi(4));
    Ok(6.0 * hbar_c2 * ALPHA_INV / PI.powi(4) * geom)
}

/// Paraxial validity warning for an aperture of radius `r_max_nm`.
pub fn paraxial_warning(theta_l: f64, light: &LightParams, r_max_nm: f64) -> Option<String> {
    check_paraxial(theta_l, light.k0, r_max_nm)
}

/// Which `m = 3` closed form reproduces the quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefactorWinner {
    Appendix,
    MainText,
    Neither,
    Both,
}

impl std::fmt::Display for PrefactorWinner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PrefactorWinner::Appendix => "appendix (pi^5/12)",
            PrefactorWinner::MainText => "main_text (pi^2/96)",
            PrefactorWinner::Neither => "neither",
            PrefactorWinner::Both => "both",
        })
    }
}

/// Comparison of the two `m = 3` closed forms against the exact quadrature,
/// all expressed as `φ/(P/Mc²ω · (θ_L R/λ₀)⁴)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefactorReport {
    pub quadrature: f64,
    pub appendix: f64,
    pub main_text: f64,
    pub winner: PrefactorWinner,
}

impl PrefactorReport {
    pub fn to_meta(&self) -> Meta {
        let mut m = Meta::new();
        m.set("m3_prefactor_quadrature", fmt_f64(self.quadrature));
        m.set("m3_prefactor_appendix", fmt_f64(self.appendix));
        m.set("m3_prefactor_main_text", fmt_f64(self.main_text));
        m.set("m3_prefactor_winner", self.winner);
        m
    }
}

/// Evaluates the `m = 3` phase of an s-polarised top-hat vortex of the given
/// power at `R = 0.02/(k₀θ_L)` by radial quadrature and normalises it by
/// `P/Mc²ω · (θ_L R/λ₀)⁴`; a closed form "wins" when within `rel_tol`.
pub fn arbitrate_m3_prefactor(
    theta_l: f64,
    electron: &ElectronParams,
    light: &LightParams,
    rel_tol: f64,
) -> Result<PrefactorReport> {
    let power = 1.0e6;
    let spec = VortexBeamSpec::with_power(3, theta_l, power, light)?;
    let r = 0.02 / (light.k0 * theta_l);
    let phi = vortex_phase_radial(&spec, electron, light, r)?;
    let unit = power / electron.mass_energy_rate_watts(light) * (theta_l * r / light.wavelength).powi(4);
    let quadrature = -phi / unit;
    let appendix = PI.powi(5) / 12.0;
    let main_text = PI * PI / 96.0;
    let ok = |c: f64| (quadrature / c - 1.0).abs() <= rel_tol;
    let winner = match (ok(appendix), ok(main_text)) {
        (true, false) => PrefactorWinner::Appendix,
        (false, true) => PrefactorWinner::MainText,
        (true, true) => PrefactorWinner::Both,
        (false, false) => PrefactorWinner::Neither,
    };
    Ok(PrefactorReport {
        quadrature,
        appendix,
        main_text,
        winner,
    })
}
