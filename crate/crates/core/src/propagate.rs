//! Paraxial electron propagation from the lens plane to the focal region.
//!
//! The focal wave function is
//! `ψ(R_f) ∝ ∫_{θ<NA} d²θ e^{−iq₀θ·R_f} e^{iχ(θ) + iφ(R)} e^{iq₀R²Δ/2}`, `θ = R/(z_f − z_L)`.
//! It is evaluated in the universal coordinates `u = R/R_max` and
//! `v = R_f/λ_e⊥`, where the kernel becomes `e^{−2πi u·v}`, by a zero-padded
//! FFT. The overall factor `e^{iq₀R_f²/2(z_f−z_L)}` is dropped; its largest
//! value over the focal window is reported as a diagnostic.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fft_1d, fft_2d, Direction, UniformGrid};
use crate::imprint::PhaseMap;
use crate::io::{encode_pgm, fmt_f64, to_gray, Meta};
use crate::kinematics::{ElectronParams, NM_PER_MM, NM_PER_UM};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Crossover, lens and focal-plane positions (mm), focal length (mm) and
/// aperture radius (µm) of the simplified objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroscopeGeometry {
    pub z_xo: f64,
    pub z_l: f64,
    pub z_f: f64,
    pub f: f64,
    pub r_max_um: f64,
}

impl MicroscopeGeometry {
    pub fn new(z_xo: f64, z_l: f64, z_f: f64, f: f64, r_max_um: f64) -> Result<Self> {
        if !(z_xo < z_l && z_l < z_f) {
            return Err(Error::domain(format!(
                "planes must be ordered z_xo < z_L < z_f, got {z_xo}, {z_l}, {z_f} mm"
            )));
        }
        if !(f > 0.0) || !(r_max_um > 0.0) {
            return Err(Error::domain(
                "focal length and aperture radius must be positive",
            ));
        }
        let g = Self {
            z_xo,
            z_l,
            z_f,
            f,
            r_max_um,
        };
        let na = g.na();
        if !(na < 1.0) {
            return Err(Error::domain(format!("numerical aperture {na} is not below 1")));
        }
        Ok(g)
    }

    /// In-focus geometry (`Δ = 0`) with the crossover at `z_L − crossover_mm`,
    /// the lens at 0 and the focal length chosen to satisfy the lens equation.
    pub fn in_focus(lens_to_focus_mm: f64, crossover_mm: f64, r_max_um: f64) -> Result<Self> {
        let f = 1.0 / (1.0 / lens_to_focus_mm + 1.0 / crossover_mm);
        Self::new(-crossover_mm, 0.0, lens_to_focus_mm, f, r_max_um)
    }

    /// Lens-to-focus distance `z_f − z_L`, nm.
    pub fn distance_nm(&self) -> f64 {
        (self.z_f - self.z_l) * NM_PER_MM
    }

    pub fn r_max_nm(&self) -> f64 {
        self.r_max_um * NM_PER_UM
    }

    pub fn na(&self) -> f64 {
        self.r_max_nm() / self.distance_nm()
    }

    /// `Δ = 1/(z_f − z_L) + 1/(z_L − z_xo) − 1/f`, mm⁻¹.
    pub fn delta(&self) -> f64 {
        1.0 / (self.z_f - self.z_l) + 1.0 / (self.z_l - self.z_xo) - 1.0 / self.f
    }

    /// `λ_e⊥ = λ_e/NA`, nm.
    pub fn lambda_e_perp(&self, electron: &ElectronParams) -> f64 {
        electron.wavelength / self.na()
    }
}

/// Spherical aberration `χ = C₃q₀θ⁴/4`, optionally replaced by a table of
/// `(θ, χ)` pairs (θ ascending, linear interpolation).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AberrationSpec {
    pub c3_mm: f64,
    pub table: Option<Vec<(f64, f64)>>,
}

impl AberrationSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn spherical(c3_mm: f64) -> Self {
        Self {
            c3_mm,
            table: None,
        }
    }

    pub fn tabulated(table: Vec<(f64, f64)>) -> Result<Self> {
        if table.len() < 2 || table.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::domain(
                "aberration table needs at least two strictly ascending angles",
            ));
        }
        if table.iter().any(|(t, c)| !t.is_finite() || !c.is_finite()) {
            return Err(Error::domain("aberration table holds non-finite values"));
        }
        Ok(Self {
            c3_mm: 0.0,
            table: Some(table),
        })
    }

    pub fn is_zero(&self) -> bool {
        self.c3_mm == 0.0 && self.table.is_none()
    }
}

/// Aberration phase (rad) at polar angle `theta` (rad); `q0` in nm⁻¹.
pub fn aberration_phase(spec: &AberrationSpec, theta: f64, q0: f64) -> f64 {
    match &spec.table {
        Some(t) => {
            let theta = theta.abs();
            let i = t.partition_point(|p| p.0 <= theta);
            if i == 0 {
                t[0].1
            } else if i == t.len() {
                t[t.len() - 1].1
            } else {
                let (a, b) = (t[i - 1], t[i]);
                a.1 + (b.1 - a.1) * (theta - a.0) / (b.0 - a.0)
            }
        }
        None => spec.c3_mm * NM_PER_MM * q0 * theta.powi(4) / 4.0,
    }
}

/// Paraxial free propagation of a sampled field over `distance` nm
/// (negative distances back-propagate) by the transfer function
/// `e^{−iQ²d/2q₀}`; periodic boundary conditions.
pub fn fresnel_propagate_1d(psi: &[Complex64], dx: f64, distance: f64, q0: f64) -> Vec<Complex64> {
    let n = psi.len();
    let mut buf = psi.to_vec();
    if distance == 0.0 || n == 0 {
        return buf;
    }
    fft_1d(&mut buf, Direction::Forward);
    let dq = 2.0 * PI / (n as f64 * dx);
    for (i, b) in buf.iter_mut().enumerate() {
        let q = freq_index(i, n) as f64 * dq;
        *b *= Complex64::from_polar(1.0 / n as f64, -q * q * distance / (2.0 * q0));
    }
    fft_1d(&mut buf, Direction::Inverse);
    buf
}

/// Two-dimensional counterpart of [`fresnel_propagate_1d`] on a square
/// `n × n` row-major grid.
pub fn fresnel_propagate_2d(
    psi: &[Complex64],
    n: usize,
    dx: f64,
    distance: f64,
    q0: f64,
) -> Vec<Complex64> {
    assert_eq!(psi.len(), n * n);
    let mut buf = psi.to_vec();
    if distance == 0.0 || n == 0 {
        return buf;
    }
    fft_2d(&mut buf, n, n, Direction::Forward);
    let dq = 2.0 * PI / (n as f64 * dx);
    let norm = 1.0 / (n * n) as f64;
    buf.par_chunks_mut(n).enumerate().for_each(|(iy, row)| {
        let qy = freq_index(iy, n) as f64 * dq;
        for (ix, b) in row.iter_mut().enumerate() {
            let qx = freq_index(ix, n) as f64 * dq;
            *b *= Complex64::from_polar(norm, -(qx * qx + qy * qy) * distance / (2.0 * q0));
        }
    });
    fft_2d(&mut buf, n, n, Direction::Inverse);
    buf
}

fn freq_index(i: usize, n: usize) -> isize {
    if i < n.div_ceil(2) {
        i as isize
    } else {
        i as isize - n as isize
    }
}

/// Aperture sampling for the focal transform: `n` cell-centred samples per
/// axis across `[−R_max, R_max]`, zero-padded to `padding · n`. The focal grid
/// spacing is `λ_e⊥ / (2 · padding)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalSampling {
    pub n: usize,
    pub padding: usize,
}

impl FocalSampling {
    pub const DEFAULT_PADDING: usize = 4;

    pub fn new(n: usize, padding: usize) -> Result<Self> {
        if n < 2 || n % 2 == 1 || padding == 0 {
            return Err(Error::grid(
                "focal sampling needs an even aperture sample count and padding ≥ 1",
            ));
        }
        Ok(Self { n, padding })
    }

    /// Aperture nodes in units of `R_max`.
    pub fn aperture_axis(&self) -> UniformGrid {
        UniformGrid::cell_centered(-1.0, 1.0, self.n)
    }

    /// Focal nodes in units of `λ_e⊥`, node `m/2` at the origin.
    pub fn focal_axis(&self) -> UniformGrid {
        let m = self.n * self.padding;
        let dv = 1.0 / (2.0 * self.padding as f64);
        UniformGrid::new(-((m / 2) as f64) * dv, dv, m)
    }
}

/// Dimensionality of the focal transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    /// Integrates over `θ_x` only; the `θ_y` integral is a constant factor.
    One,
    Two,
}

/// Focal-plane wave function on a grid in units of `λ_e⊥`.
///
/// `psi` holds raw values `∫dᵈu e^{−2πi u·v}(…)` with `u = R/R_max`; the
/// physical amplitude is `R_maxᵈ` times this up to a global constant.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalProfile {
    pub dim: Dim,
    pub axis: UniformGrid,
    pub psi: Vec<Complex64>,
    pub lambda_e_perp: f64,
    pub r_max: f64,
    pub meta: Meta,
}

impl FocalProfile {
    pub fn intensity(&self) -> Vec<f64> {
        self.psi.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Largest `|ψ|²` and its index.
    pub fn peak(&self) -> (usize, f64) {
        self.psi
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm_sqr()))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
    }

    /// `(v_x, v_y)` of the intensity maximum, in units of `λ_e⊥`.
    pub fn peak_position(&self) -> (f64, f64) {
        let (i, _) = self.peak();
        match self.dim {
            Dim::One => (self.axis.at(i), 0.0),
            Dim::Two => (self.axis.at(i % self.axis.n), self.axis.at(i / self.axis.n)),
        }
    }

    /// `ψ / max|ψ|`.
    pub fn normalized_psi(&self) -> Vec<Complex64> {
        let peak = self.peak().1.sqrt();
        let s = if peak > 0.0 { 1.0 / peak } else { 0.0 };
        self.psi.iter().map(|c| c * s).collect()
    }

    /// `∫|ψ|² dᵈv` in universal units.
    pub fn flux(&self) -> f64 {
        let cell = match self.dim {
            Dim::One => self.axis.step,
            Dim::Two => self.axis.step * self.axis.step,
        };
        self.psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * cell
    }

    /// Flux of the physical amplitude, `R_max^{2d} λ_e⊥^d ∫|ψ|²dᵈv`.
    pub fn physical_flux(&self) -> f64 {
        let d = match self.dim {
            Dim::One => 1,
            Dim::Two => 2,
        };
        self.flux() * self.r_max.powi(2 * d) * self.lambda_e_perp.powi(d)
    }

    /// The sub-window `|v| ≤ v_max` (per axis).
    pub fn crop(&self, v_max: f64) -> Self {
        let keep: Vec<usize> = (0..self.axis.n)
            .filter(|&i| self.axis.at(i).abs() <= v_max + 1e-12)
            .collect();
        let (lo, n) = (keep[0], keep.len());
        let axis = UniformGrid::new(self.axis.at(lo), self.axis.step, n);
        let psi = match self.dim {
            Dim::One => self.psi[lo..lo + n].to_vec(),
            Dim::Two => {
                let m = self.axis.n;
                (lo..lo + n)
                    .flat_map(|iy| (lo..lo + n).map(move |ix| (iy, ix)))
                    .map(|(iy, ix)| self.psi[iy * m + ix])
                    .collect()
            }
        };
        Self {
            axis,
            psi,
            meta: self.meta.clone(),
            ..*self
        }
    }

    /// One-dimensional intensity cut through the peak along x.
    pub fn x_cut(&self) -> Vec<f64> {
        match self.dim {
            Dim::One => self.intensity(),
            Dim::Two => {
                let m = self.axis.n;
                let row = self.peak().0 / m;
                self.psi[row * m..(row + 1) * m]
                    .iter()
                    .map(|c| c.norm_sqr())
                    .collect()
            }
        }
    }

    /// Full width at half maximum of the main peak along x, in units of
    /// `λ_e⊥`, with linear interpolation of the half-maximum crossings.
    pub fn fwhm(&self) -> f64 {
        fwhm(&self.x_cut(), self.axis.step)
    }

    /// Text table `v_x[, v_y], Re ψ, Im ψ, |ψ|²` with `ψ` normalised to a
    /// unit maximum; the raw scale is kept in the header.
    pub fn to_text(&self) -> String {
        let mut meta = self.meta.clone();
        let (_, peak) = self.peak();
        meta.set("normalization", "psi / max|psi|; raw = integral over u = R/R_max");
        meta.set("raw_peak_abs", fmt_f64(peak.sqrt()));
        meta.set("lambda_e_perp_nm", fmt_f64(self.lambda_e_perp));
        meta.set("r_max_nm", fmt_f64(self.r_max));
        let psi = self.normalized_psi();
        let mut out = String::new();
        match self.dim {
            Dim::One => {
                meta.set("columns", "x_f/lambda_e_perp re_psi im_psi abs2_psi");
                meta.write_header(&mut out);
                for (i, c) in psi.iter().enumerate() {
                    out.push_str(&format!(
                        "{} {} {} {}\n",
                        fmt_f64(self.axis.at(i)),
                        fmt_f64(c.re),
                        fmt_f64(c.im),
                        fmt_f64(c.norm_sqr())
                    ));
                }
            }
            Dim::Two => {
                meta.set(
                    "columns",
                    "x_f/lambda_e_perp y_f/lambda_e_perp re_psi im_psi abs2_psi",
                );
                meta.write_header(&mut out);
                let m = self.axis.n;
                for (i, c) in psi.iter().enumerate() {
                    out.push_str(&format!(
                        "{} {} {} {} {}\n",
                        fmt_f64(self.axis.at(i % m)),
                        fmt_f64(self.axis.at(i / m)),
                        fmt_f64(c.re),
                        fmt_f64(c.im),
                        fmt_f64(c.norm_sqr())
                    ));
                }
            }
        }
        out
    }

    /// Graymap of `|ψ|²` scaled to its maximum (one row for 1D profiles).
    pub fn to_pgm(&self) -> Vec<u8> {
        let int = self.intensity();
        let (_, peak) = self.peak();
        let (w, h) = match self.dim {
            Dim::One => (self.axis.n, 1),
            Dim::Two => (self.axis.n, self.axis.n),
        };
        let mut px = Vec::with_capacity(w * h);
        for row in (0..h).rev() {
            px.extend(to_gray(&int[row * w..(row + 1) * w], 0.0, peak));
        }
        encode_pgm(w, h, &px, &self.meta)
    }
}

/// Full width at half maximum of the highest peak of `y` sampled at spacing `dx`.
pub fn fwhm(y: &[f64], dx: f64) -> f64 {
    let (ip, peak) = y
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let half = 0.5 * peak;
    let mut left = 0.0;
    for i in (0..ip).rev() {
        if y[i] < half {
            left = i as f64 + (half - y[i]) / (y[i + 1] - y[i]);
            break;
        }
    }
    let mut right = (y.len() - 1) as f64;
    for i in ip + 1..y.len() {
        if y[i] < half {
            right = (i - 1) as f64 + (y[i - 1] - half) / (y[i - 1] - y[i]);
            break;
        }
    }
    (right - left) * dx
}

/// Focal wave function for a phase map. The map must cover the aperture of
/// `geom`; values between its nodes are interpolated.
pub fn focal_wavefunction(
    phase: &PhaseMap,
    aberr: &AberrationSpec,
    geom: &MicroscopeGeometry,
    electron: &ElectronParams,
    sampling: FocalSampling,
) -> Result<FocalProfile> {
    let r_max = geom.r_max_nm();
    let check = PhaseMap {
        r_max,
        ..phase.clone()
    };
    if !check.covers_aperture() {
        return Err(Error::grid(format!(
            "phase map does not cover the aperture of radius {r_max:.4e} nm"
        )));
    }
    let dim = if phase.is_plane() { Dim::Two } else { Dim::One };
    let f = |x: f64, y: f64| phase.value_at(x, y).unwrap_or(0.0);
    focal_from_fn(dim, &f, aberr, geom, electron, sampling)
}

/// Focal wave function for a phase given as a function of `(x, y)` in nm.
pub fn focal_from_fn(
    dim: Dim,
    phase: &(dyn Fn(f64, f64) -> f64 + Sync),
    aberr: &AberrationSpec,
    geom: &MicroscopeGeometry,
    electron: &ElectronParams,
    sampling: FocalSampling,
) -> Result<FocalProfile> {
    let delta_nm = geom.delta() / NM_PER_MM;
    focal_with_delta(dim, phase, aberr, geom, electron, sampling, delta_nm)
}

fn focal_with_delta(
    dim: Dim,
    phase: &(dyn Fn(f64, f64) -> f64 + Sync),
    aberr: &AberrationSpec,
    geom: &MicroscopeGeometry,
    electron: &ElectronParams,
    sampling: FocalSampling,
    delta_nm: f64,
) -> Result<FocalProfile> {
    let n = sampling.n;
    let m = n * sampling.padding;
    let r_max = geom.r_max_nm();
    let dist = geom.distance_nm();
    let q0 = electron.q0;
    let ua = sampling.aperture_axis();
    let va = sampling.focal_axis();
    let du = ua.step;
    let pupil = |x: f64, y: f64| -> Complex64 {
        let r2 = x * x + y * y;
        if r2 >= r_max * r_max {
            return ZERO;
        }
        let chi = aberration_phase(aberr, r2.sqrt() / dist, q0);
        let ph = chi + phase(x, y) + 0.5 * q0 * r2 * delta_nm;
        Complex64::from_polar(1.0, ph)
    };
    // Σ_j f(u_j) e^{−2πi u_j v_k} with u_j = u₀ + j du, v_k = v₀ + k dv, and
    // du·dv = 1/m: the j·k term is a length-m DFT, the rest are phase ramps.
    let ramp_out: Vec<Complex64> = (0..m)
        .map(|k| Complex64::from_polar(du, -2.0 * PI * ua.start * va.at(k)))
        .collect();
    let ramp_in: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 * du * va.start))
        .collect();
    let psi = match dim {
        Dim::One => {
            let mut buf = vec![ZERO; m];
            for j in 0..n {
                buf[j] = pupil(ua.at(j) * r_max, 0.0) * ramp_in[j];
            }
            if buf.iter().all(|c| *c == ZERO) {
                return Err(Error::grid("aperture holds no samples"));
            }
            fft_1d(&mut buf, Direction::Forward);
            buf.iter().zip(&ramp_out).map(|(b, r)| b * r).collect::<Vec<_>>()
        }
        Dim::Two => {
            let mut buf = vec![ZERO; m * m];
            buf.par_chunks_mut(m).take(n).enumerate().for_each(|(jy, row)| {
                let y = ua.at(jy) * r_max;
                for jx in 0..n {
                    row[jx] = pupil(ua.at(jx) * r_max, y) * ramp_in[jx] * ramp_in[jy];
                }
            });
            fft_2d(&mut buf, m, m, Direction::Forward);
            buf.par_chunks_mut(m).enumerate().for_each(|(ky, row)| {
                for (kx, b) in row.iter_mut().enumerate() {
                    *b *= ramp_out[kx] * ramp_out[ky];
                }
            });
            buf
        }
    };
    let lambda_e_perp = geom.lambda_e_perp(electron);
    let v_edge = va.start.abs().max(va.last().abs()) * lambda_e_perp;
    let mut meta = Meta::new();
    meta.set("dimensions", if dim == Dim::One { 1 } else { 2 });
    meta.set("aperture_samples", n);
    meta.set("padding", sampling.padding);
    meta.set("na", fmt_f64(geom.na()));
    meta.set("delta_per_mm", fmt_f64(delta_nm * NM_PER_MM));
    meta.set(
        "dismissed_phase_max_rad",
        fmt_f64(q0 * v_edge * v_edge / (2.0 * dist)),
    );
    Ok(FocalProfile {
        dim,
        axis: va,
        psi,
        lambda_e_perp,
        r_max,
        meta,
    })
}

/// Peak focal intensity `max|ψ|²` as a function of defocus `Δ` (mm⁻¹),
/// replacing the geometric defocus of `geom`.
pub fn defocus_scan(
    dim: Dim,
    phase: &(dyn Fn(f64, f64) -> f64 + Sync),
    aberr: &AberrationSpec,
    geom: &MicroscopeGeometry,
    electron: &ElectronParams,
    sampling: FocalSampling,
    deltas_per_mm: &[f64],
) -> Result<Vec<(f64, f64)>> {
    deltas_per_mm
        .iter()
        .map(|&d| {
            let p = focal_with_delta(dim, phase, aberr, geom, electron, sampling, d / NM_PER_MM)?;
            Ok((d, p.peak().1))
        })
        .collect()
}

/// `max|ψ|²` relative to the aberration- and phase-free reference.
pub fn strehl_ratio(profile: &FocalProfile, reference: &FocalProfile) -> f64 {
    profile.peak().1 / reference.peak().1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::bessel_j;

    fn electron() -> ElectronParams {
        ElectronParams::new(60.0).unwrap()
    }

    /// 1 mm lens-to-focus, in focus, aperture radius in µm.
    fn geom(r_max_um: f64) -> MicroscopeGeometry {
        MicroscopeGeometry::in_focus(1.0, 200.0, r_max_um).unwrap()
    }

    #[test]
    fn geometry_invariants() {
        let g = MicroscopeGeometry::new(-100.0, 0.0, 1.0, 0.5, 10.0).unwrap();
        assert!((g.delta() - (1.0 + 0.01 - 2.0)).abs() < 1e-12);
        assert!((g.na() - 0.01).abs() < 1e-15);
        let e = electron();
        assert!((g.lambda_e_perp(&e) - e.wavelength / 0.01).abs() < 1e-12);
        assert!(geom(10.0).delta().abs() < 1e-12);
        assert!(MicroscopeGeometry::new(0.0, -1.0, 1.0, 1.0, 1.0).is_err());
        assert!(MicroscopeGeometry::new(-1.0, 0.0, 1e-3, 1.0, 2e3).is_err());
    }

    #[test]
    fn aberration_values() {
        let s = AberrationSpec::spherical(1.0);
        assert_eq!(aberration_phase(&s, 0.0, 1291.0), 0.0);
        let chi = aberration_phase(&s, 0.01, 1291.0);
        let by_hand = 1e6 * 1291.0 * 1e-8 / 4.0;
        assert!((chi - by_hand).abs() < 1e-12 && (chi - 3.2275).abs() < 1e-3);
        assert!((aberration_phase(&s, 0.02, 1291.0) / chi - 16.0).abs() < 1e-12);
        let t = AberrationSpec::tabulated(vec![(0.0, 0.0), (0.01, 1.0), (0.02, 3.0)]).unwrap();
        assert!((aberration_phase(&t, 0.015, 1.0) - 2.0).abs() < 1e-12);
        assert!(AberrationSpec::tabulated(vec![(0.0, 0.0), (0.0, 1.0)]).is_err());
    }

    fn gaussian(n: usize, dx: f64, w: f64) -> Vec<Complex64> {
        (0..n)
            .map(|i| {
                let x = (i as f64 - n as f64 / 2.0) * dx;
                Complex64::new((-x * x / (w * w)).exp(), 0.0)
            })
            .collect()
    }

    #[test]
    fn fresnel_round_trip_and_flux() {
        let q0 = 1291.0;
        let psi = gaussian(512, 0.1, 3.0);
        let fwd = fresnel_propagate_1d(&psi, 0.1, 5e3, q0);
        let back = fresnel_propagate_1d(&fwd, 0.1, -5e3, q0);
        for (a, b) in psi.iter().zip(&back) {
            assert!((a - b).norm() < 1e-10);
        }
        let f0: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        let f1: f64 = fwd.iter().map(|c| c.norm_sqr()).sum();
        assert!((f1 / f0 - 1.0).abs() < 1e-10);
        assert_eq!(fresnel_propagate_1d(&psi, 0.1, 0.0, q0), psi);
    }

    #[test]
    fn fresnel_gaussian_spreading() {
        let q0 = 1291.0;
        let (n, dx, w, d) = (1024, 0.05, 2.0, 4e3);
        let psi = gaussian(n, dx, w);
        let out = fresnel_propagate_1d(&psi, dx, d, q0);
        let qc = Complex64::new(0.0, -q0 * w * w / 2.0);
        for i in (0..n).step_by(7) {
            let x = (i as f64 - n as f64 / 2.0) * dx;
            let exact = (qc / (qc + d)).sqrt() * (Complex64::new(0.0, q0 * x * x / 2.0) / (qc + d)).exp();
            assert!((out[i] - exact).norm() < 1e-6, "x={x}");
        }
        let n2 = 256;
        let dx2 = 0.2;
        let psi2: Vec<Complex64> = (0..n2 * n2)
            .map(|i| {
                let x = ((i % n2) as f64 - n2 as f64 / 2.0) * dx2;
                let y = ((i / n2) as f64 - n2 as f64 / 2.0) * dx2;
                Complex64::new((-(x * x + y * y) / (w * w)).exp(), 0.0)
            })
            .collect();
        let out2 = fresnel_propagate_2d(&psi2, n2, dx2, d, q0);
        for i in (0..n2 * n2).step_by(1031) {
            let x = ((i % n2) as f64 - n2 as f64 / 2.0) * dx2;
            let y = ((i / n2) as f64 - n2 as f64 / 2.0) * dx2;
            let exact = qc / (qc + d) * (Complex64::new(0.0, q0 * (x * x + y * y) / 2.0) / (qc + d)).exp();
            assert!((out2[i] - exact).norm() < 1e-6);
        }
    }

    #[test]
    fn airy_pattern_2d() {
        let e = electron();
        let g = geom(10.0);
        let s = FocalSampling::new(256, 4).unwrap();
        let p = focal_from_fn(Dim::Two, &|_, _| 0.0, &AberrationSpec::none(), &g, &e, s).unwrap();
        assert_eq!(p.peak_position(), (0.0, 0.0));
        // compare the x cut to 2 J1(2πv)/(2πv) (normalised)
        let cut = p.x_cut();
        let peak = cut[p.axis.n / 2];
        for i in (0..p.axis.n).step_by(3) {
            let v = p.axis.at(i);
            if v.abs() > 3.0 {
                continue;
            }
            let x = 2.0 * PI * v;
            let airy = if x == 0.0 { 1.0 } else { (2.0 * bessel_j(1, x) / x).powi(2) };
            assert!((cut[i] / peak - airy).abs() < 2e-3, "v={v}: {} vs {airy}", cut[i] / peak);
        }
        // first dark ring near 0.61 λ_e⊥
        let first_min = (p.axis.n / 2..p.axis.n)
            .find(|&i| cut[i + 1] > cut[i])
            .map(|i| p.axis.at(i))
            .unwrap();
        assert!((first_min - 0.61).abs() <= p.axis.step, "{first_min}");
    }

    #[test]
    fn linear_phase_shifts_peak() {
        let e = electron();
        let g = geom(10.0);
        let r = g.r_max_nm();
        let s = FocalSampling::new(512, 8).unwrap();
        let base = focal_from_fn(Dim::One, &|_, _| 0.0, &AberrationSpec::none(), &g, &e, s).unwrap();
        for a in [PI, 2.0 * PI, 3.0 * PI] {
            let b = 0.7;
            let p = focal_from_fn(Dim::One, &move |x, _| a * x / r + b, &AberrationSpec::none(), &g, &e, s)
                .unwrap();
            let (v, _) = p.peak_position();
            assert!((v - a / (2.0 * PI)).abs() <= 0.5 * p.axis.step);
            // same shape: intensity is the base profile translated
            let shift = (a / (2.0 * PI) / p.axis.step).round() as usize;
            let ib = base.intensity();
            let ip = p.intensity();
            for i in 100..p.axis.n - 100 - shift {
                assert!((ip[i + shift] - ib[i]).abs() < 1e-9 * ib[p.axis.n / 2]);
            }
        }
    }

    #[test]
    fn aberration_cancelled_by_opposite_phase() {
        let e = electron();
        let g = geom(30.0);
        let aberr = AberrationSpec::spherical(1.0);
        let d = g.distance_nm();
        let q0 = e.q0;
        let s = FocalSampling::new(128, 4).unwrap();
        let reference = focal_from_fn(Dim::Two, &|_, _| 0.0, &AberrationSpec::none(), &g, &e, s).unwrap();
        let corrected = focal_from_fn(
            Dim::Two,
            &|x, y| -aberration_phase(&AberrationSpec::spherical(1.0), (x * x + y * y).sqrt() / d, q0),
            &aberr,
            &g,
            &e,
            s,
        )
        .unwrap();
        let num: f64 = corrected
            .psi
            .iter()
            .zip(&reference.psi)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den: f64 = reference.psi.iter().map(|c| c.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-10);
        let aberrated = focal_from_fn(Dim::Two, &|_, _| 0.0, &aberr, &g, &e, s).unwrap();
        assert!(strehl_ratio(&aberrated, &reference) < 0.8);
    }

    #[test]
    fn defocus_symmetry_and_optimum() {
        let e = electron();
        let g = geom(10.0);
        let s = FocalSampling::new(256, 4).unwrap();
        let step = 2e-3;
        let deltas: Vec<f64> = (-10..=10).map(|i| i as f64 * step).collect();
        let scan = defocus_scan(Dim::Two, &|_, _| 0.0, &AberrationSpec::none(), &g, &e, s, &deltas).unwrap();
        let best = scan.iter().cloned().fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        assert!(best.0.abs() <= step);
        for i in 0..10 {
            let (a, b) = (scan[i].1, scan[20 - i].1);
            assert!((a - b).abs() <= 1e-8 * a.max(b));
        }
        let ab = AberrationSpec::spherical(1e3);
        let g30 = geom(30.0);
        let scan = defocus_scan(Dim::Two, &|_, _| 0.0, &ab, &g30, &e, s, &deltas).unwrap();
        let best = scan.iter().cloned().fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        assert!(best.0.abs() > step);
    }

    #[test]
    fn universal_scaling() {
        // Same R_max-normalised phase at different absolute scales gives the
        // same curves in λ_e⊥ units.
        let s = FocalSampling::new(256, 4).unwrap();
        let phase = |r: f64| move |x: f64, _: f64| 3.0 * (x / r).powi(2) - 2.0 * x / r;
        let e1 = ElectronParams::new(60.0).unwrap();
        let g1 = MicroscopeGeometry::in_focus(1.0, 100.0, 10.0).unwrap();
        let e2 = ElectronParams::new(200.0).unwrap();
        let g2 = MicroscopeGeometry::in_focus(3.0, 50.0, 77.0).unwrap();
        let p1 = focal_from_fn(Dim::One, &phase(g1.r_max_nm()), &AberrationSpec::none(), &g1, &e1, s).unwrap();
        let p2 = focal_from_fn(Dim::One, &phase(g2.r_max_nm()), &AberrationSpec::none(), &g2, &e2, s).unwrap();
        let (a, b) = (p1.normalized_psi(), p2.normalized_psi());
        for (x, y) in a.iter().zip(&b) {
            assert!((x.norm_sqr() - y.norm_sqr()).abs() < 1e-8);
        }
    }

    #[test]
    fn global_phase_and_aperture_flux() {
        let e = electron();
        let s = FocalSampling::new(128, 4).unwrap();
        let g = geom(10.0);
        let f = |x: f64, _: f64| (x / 3e3).sin();
        let a = focal_from_fn(Dim::One, &f, &AberrationSpec::none(), &g, &e, s).unwrap();
        let b = focal_from_fn(Dim::One, &move |x, y| f(x, y) + 1.234, &AberrationSpec::none(), &g, &e, s).unwrap();
        for (x, y) in a.psi.iter().zip(&b.psi) {
            assert!((x.norm_sqr() - y.norm_sqr()).abs() < 1e-12 * a.peak().1);
        }
        let mut last = 0.0;
        for r in [5.0, 10.0, 20.0, 40.0] {
            let p = focal_from_fn(Dim::Two, &|_, _| 0.0, &AberrationSpec::none(), &geom(r), &e, s).unwrap();
            let flux = p.physical_flux();
            assert!(flux >= last);
            last = flux;
        }
    }

    #[test]
    fn phase_map_must_cover_aperture() {
        let e = electron();
        let g = geom(10.0);
        let small = PhaseMap::from_fn_line(64, 5e3, |_| 0.0).unwrap();
        let s = FocalSampling::new(64, 4).unwrap();
        let err = focal_wavefunction(&small, &AberrationSpec::none(), &g, &e, s).unwrap_err();
        assert!(matches!(err, Error::Grid(_)));
        let full = PhaseMap::from_fn_line(64, 1e4, |_| 0.0).unwrap();
        assert!(focal_wavefunction(&full, &AberrationSpec::none(), &g, &e, s).is_ok());
    }

    #[test]
    fn fwhm_of_triangle() {
        let y: Vec<f64> = (0..21).map(|i| 10.0 - (i as f64 - 10.0).abs()).collect();
        assert!((fwhm(&y, 0.5) - 5.0).abs() < 1e-12);
    }
}
