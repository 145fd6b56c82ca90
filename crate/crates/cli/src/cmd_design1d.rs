//! `design1d`: light coefficients for a one-dimensional target phase.

use ofem::design1d::{
    diffraction_limited_phase, forward_phase_from_beta, invert_beam_coefficients, spectrum_to_text, TargetPhase1D,
};
use ofem::imprint::PhaseMap;
use ofem::io::{fmt_f64, Meta};

use crate::context::{CliError, CliResult, Context, Stage};
use crate::params::{self, Profile};

pub fn run(mut ctx: Context) -> CliResult<String> {
    let e = params::electron(&ctx.cfg)?;
    let l = params::light(&ctx.cfg)?;
    let kind = ctx
        .cfg
        .opt_str("target", "type")?
        .ok_or_else(|| CliError::config("missing [target] type (file, linear, piecewise)"))?;
    let target = if kind == "file" {
        let text = ctx
            .input_text("target", "file")?
            .ok_or_else(|| CliError::config("missing required key [target] file"))?;
        TargetPhase1D::from_text(&text).stage("target file")?
    } else {
        let Some(p) = Profile::from_config(&ctx.cfg, "target", &kind)? else {
            return Err(ctx
                .cfg
                .error_at("target", "type", format!("unknown target type {kind:?}"))
                .into());
        };
        let r = ctx.cfg.positive_or("geometry", "r_max_um", 10.0)? * 1e3;
        let points = ctx.grid("target", "points", ((32.0 * r / l.wavelength) as usize + 1).max(101))?;
        TargetPhase1D::from_fn(points, r, |x| p.eval(x / r)).stage("target phase")?
    };
    let k_nodes = match ctx.cfg.has("numerics", "k_nodes") {
        true => Some(ctx.cfg.usize_or("numerics", "k_nodes", 1)?),
        false => None,
    };
    ctx.finish_config()?;

    let spec = invert_beam_coefficients(&target, &e, &l, k_nodes).stage("inversion")?;
    let forward = forward_phase_from_beta(&spec, &e, target.grid, target.r_max).stage("forward phase")?;
    let mut smooth = diffraction_limited_phase(&target, l.k0).stage("diffraction-limited phase")?;
    smooth.remove_mean();
    let num: f64 = forward.phi.iter().zip(&smooth.phi).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = smooth.phi.iter().map(|b| b * b).sum();
    let l2 = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };

    let mut s = Meta::new();
    s.set("r_max_over_lambda0", fmt_f64(target.r_max / l.wavelength));
    s.set("target_points", target.grid.n);
    s.set("k_nodes", spec.len());
    s.set("round_trip_relative_l2", fmt_f64(l2));
    if let Some(off) = forward.meta.get("offset_to_absolute_rad") {
        s.set("offset_to_absolute_rad", off);
    }
    let peak = spec.beta.iter().map(|b| b.norm()).fold(0.0, f64::max);
    s.set("max_abs_beta", fmt_f64(peak));

    let mut t = PhaseMap::line(target.grid, target.phi.clone(), target.r_max).stage("target phase")?;
    t.meta.set("operation", "target phase");
    ctx.write_phase("target", &t)?;
    ctx.write_phase("smoothed", &smooth)?;
    ctx.write_phase("forward", &forward)?;
    let mut m = ctx.provenance().clone();
    m.set("operation", "light coefficients for the target phase");
    let text = spectrum_to_text(&spec, &m);
    ctx.write("spectrum.txt", text.as_bytes())?;
    ctx.finish(&s)
}
