//! `power`: beam power budgets.

use std::f64::consts::PI;

use ofem::imprint::{aberration_correction_power, arbitrate_m3_prefactor, effective_length, power_for_phase};
use ofem::io::{fmt_f64, Meta};

use crate::context::{CliResult, Context, Stage};
use crate::params;

pub fn run(mut ctx: Context) -> CliResult<String> {
    let e = params::electron(&ctx.cfg)?;
    let l = params::light(&ctx.cfg)?;
    let phase = ctx.cfg.f64_or("beam", "phase_rad", 2.0 * PI)?;
    let theta = params::angle(&ctx.cfg, "beam", "theta_l_deg", 0.15)?;
    let c3 = ctx.cfg.positive_or("aberration", "c3_mm", 1.0)?;
    let d = ctx.cfg.positive_or("geometry", "lens_to_focus_mm", 1.0)?;
    let tol = ctx.tol(0.05)?;
    ctx.finish_config()?;

    let mut s = Meta::new();
    s.set("electron_gamma", fmt_f64(e.gamma));
    s.set("electron_q0_per_nm", fmt_f64(e.q0));
    s.set("electron_wavelength_nm", fmt_f64(e.wavelength));
    s.set("mass_energy_rate_w", fmt_f64(e.mass_energy_rate_watts(&l)));
    s.set("power_for_phase_w", fmt_f64(power_for_phase(phase, &e, &l)));
    s.set(
        "effective_length_nm",
        fmt_f64(effective_length(theta, l.wavelength).stage("effective length")?),
    );
    let p = aberration_correction_power(c3, &e, &l, theta, d).stage("aberration correction power")?;
    s.set("aberration_correction_power_w", fmt_f64(p));
    let report = arbitrate_m3_prefactor(theta, &e, &l, tol).stage("m=3 prefactor")?;
    s.extend(&report.to_meta());
    ctx.finish(&s)
}
