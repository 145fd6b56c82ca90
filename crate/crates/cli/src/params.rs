//! Physical parameters shared by several commands.

use std::f64::consts::PI;

use ofem::kinematics::{degrees_to_radians, ElectronParams, LightParams};
use ofem::propagate::{AberrationSpec, MicroscopeGeometry};

use crate::config::Config;
use crate::context::{CliResult, Stage};

pub fn electron(cfg: &Config) -> CliResult<ElectronParams> {
    let kev = cfg.positive_or("electron", "energy_kev", 60.0)?;
    ElectronParams::new(kev).stage("electron")
}

pub fn light(cfg: &Config) -> CliResult<LightParams> {
    let nm = cfg.positive_or("light", "wavelength_nm", 500.0)?;
    LightParams::new(nm).stage("light")
}

/// Angle given in degrees under `key`, returned in radians.
pub fn angle(cfg: &Config, section: &str, key: &str, default_deg: f64) -> CliResult<f64> {
    let deg = cfg.positive_or(section, key, default_deg)?;
    if deg >= 90.0 {
        return Err(cfg.error_at(section, key, "angle must be below 90 degrees").into());
    }
    Ok(degrees_to_radians(deg))
}

/// Objective geometry. Without `focal_length_mm` the lens focuses exactly on
/// the focal plane.
pub fn geometry(cfg: &Config, r_max_um: f64) -> CliResult<MicroscopeGeometry> {
    let d = cfg.positive_or("geometry", "lens_to_focus_mm", 1.0)?;
    let xo = cfg.positive_or("geometry", "crossover_mm", 200.0)?;
    match cfg.opt_f64("geometry", "focal_length_mm")? {
        Some(f) => MicroscopeGeometry::new(-xo, 0.0, d, f, r_max_um).stage("geometry"),
        None => MicroscopeGeometry::in_focus(d, xo, r_max_um).stage("geometry"),
    }
}

pub fn aberration(cfg: &Config) -> CliResult<AberrationSpec> {
    let c3 = cfg.f64_or("aberration", "c3_mm", 0.0)?;
    Ok(if c3 == 0.0 {
        AberrationSpec::none()
    } else {
        AberrationSpec::spherical(c3)
    })
}

/// Analytic one-dimensional phase profiles in units of `x/R_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `A x/R_max + B`.
    Linear { a: f64, b: f64 },
    /// Slope `a1` for `x < 0`, slope `a2` and extra `offset` for `x ≥ 0`.
    TwoSlope { a1: f64, a2: f64, offset: f64 },
}

impl Profile {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Profile::Linear { a, b } => a * u + b,
            Profile::TwoSlope { a1, a2, offset } => {
                if u < 0.0 {
                    a1 * u
                } else {
                    a2 * u + offset
                }
            }
        }
    }

    /// Reads `linear` (`a_rad`, `b_rad`) or `piecewise` (`a1_rad`, `a2_rad`,
    /// `offset_rad`) from `section`.
    pub fn from_config(cfg: &Config, section: &str, kind: &str) -> CliResult<Option<Self>> {
        Ok(match kind {
            "linear" => Some(Profile::Linear {
                a: cfg.f64_or(section, "a_rad", 4.0 * PI)?,
                b: cfg.f64_or(section, "b_rad", 0.0)?,
            }),
            "piecewise" => Some(Profile::TwoSlope {
                a1: cfg.f64_or(section, "a1_rad", -4.0 * PI)?,
                a2: cfg.f64_or(section, "a2_rad", 4.0 * PI)?,
                offset: cfg.f64_or(section, "offset_rad", 0.0)?,
            }),
            _ => None,
        })
    }
}
