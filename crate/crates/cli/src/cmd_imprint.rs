//! `imprint`: phase imprinted by a vortex beam or a sampled light spectrum.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ofem::design1d::{forward_phase_from_beta, spectrum_from_text};
use ofem::grid::UniformGrid;
use ofem::imprint::{
    arbitrate_m3_prefactor, effective_length, imprint_phase, paraxial_appendix, paraxial_main_text,
    paraxial_warning, power_for_phase, vortex_phase_radial, Axes, PhaseMap, ZQuadrature,
};
use ofem::io::{fmt_f64, Meta};
use ofem::kinematics::{ElectronParams, LightParams};
use ofem::lightfield::{sample_vortex_field, LightSpectrum2D, VortexBeamSpec};
use ofem::synth2d::{phase_direct_quadrature, phase_fast, DirectOptions, FastOptions};

use crate::context::{CliError, CliResult, Context, Stage};
use crate::params;

pub fn run(ctx: Context) -> CliResult<String> {
    let kind = ctx.cfg.opt_str("source", "type")?.ok_or_else(|| {
        CliError::config("missing field source: set [source] type to vortex, spectrum1d or spectrum2d")
    })?;
    match kind.as_str() {
        "vortex" => vortex(ctx),
        "spectrum1d" => spectrum1d(ctx),
        "spectrum2d" => spectrum2d(ctx),
        other => Err(ctx
            .cfg
            .error_at("source", "type", format!("unknown source {other:?} (vortex, spectrum1d, spectrum2d)"))
            .into()),
    }
}

fn dims(ctx: &Context) -> CliResult<usize> {
    let d = ctx.cfg.usize_or("grid", "dims", 1)?;
    if d > 2 {
        return Err(ctx.cfg.error_at("grid", "dims", "dims must be 1 or 2").into());
    }
    Ok(d)
}

fn vortex(mut ctx: Context) -> CliResult<String> {
    let e = params::electron(&ctx.cfg)?;
    let l = params::light(&ctx.cfg)?;
    let m = ctx.cfg.count_or("source", "m", 1)?;
    let theta = params::angle(&ctx.cfg, "source", "theta_l_deg", 1.0)?;
    let power = ctx
        .cfg
        .opt_f64("source", "power_w")?
        .ok_or_else(|| CliError::config("missing required key [source] power_w"))?;
    if !(power > 0.0) {
        return Err(ctx.cfg.error_at("source", "power_w", "must be positive").into());
    }
    let method = ctx.cfg.str_or("source", "method", "radial")?;
    let d = dims(&ctx)?;
    let n = ctx.grid("grid", "n", if d == 1 { 101 } else { 64 })?;
    let spec = VortexBeamSpec::with_power(m, theta, power, &l).stage("vortex beam")?;
    let r_max = ctx.cfg.positive_or("grid", "r_max_nm", 2.0 * spec.paraxial_radius())?;
    let zq = match method.as_str() {
        "radial" => None,
        "z-quadrature" => {
            let tol = ctx.tol(ZQuadrature::DEFAULT_TAIL_TOL)?;
            let len = effective_length(theta, l.wavelength).stage("vortex beam")?;
            let base = ZQuadrature::for_length(len);
            Some(ZQuadrature {
                tail_tol: tol,
                max_doublings: ctx.cfg.count_or("numerics", "max_doublings", base.max_doublings)?,
                ..base
            })
        }
        other => {
            return Err(ctx
                .cfg
                .error_at("source", "method", format!("unknown method {other:?} (radial, z-quadrature)"))
                .into())
        }
    };
    ctx.finish_config()?;

    let g = UniformGrid::inclusive(-r_max, r_max, n);
    let axes = if d == 1 { Axes::Line(g) } else { Axes::Plane { x: g, y: g } };
    let mut map = match zq {
        None => radial_map(&spec, &e, &l, g, d, r_max)?,
        Some(zq) => {
            let field = |x: f64, y: f64, z: f64| sample_vortex_field(&spec, x.hypot(y), y.atan2(x), z);
            imprint_phase(&field, axes, r_max, &e, &l, zq).stage("axial quadrature")?
        }
    };

    let mut s = Meta::new();
    let axis = vortex_phase_radial(&spec, &e, &l, 0.0).stage("radial quadrature")?;
    s.set("phi_axis_rad", fmt_f64(axis));
    s.set("power_w", fmt_f64(power));
    s.set("power_exact_w", fmt_f64(spec.power_exact(&l)));
    s.set("power_for_2pi_w", fmt_f64(power_for_phase(2.0 * PI, &e, &l)));
    if m == 1 {
        s.set("power_for_axis_phase_w", fmt_f64(power_for_phase(axis, &e, &l)));
        s.set(
            "effective_length_nm",
            fmt_f64(effective_length(theta, l.wavelength).stage("vortex beam")?),
        );
    }
    s.set("paraxial_radius_nm", fmt_f64(spec.paraxial_radius()));
    if m >= 1 {
        let r = spec.paraxial_radius() * 0.1;
        let exact = vortex_phase_radial(&spec, &e, &l, r).stage("radial quadrature")?;
        let closed = paraxial_appendix(m as i64, power, theta, &e, &l, r).stage("paraxial phase")?;
        s.set("reference_radius_nm", fmt_f64(r));
        s.set("phi_quadrature_at_reference_rad", fmt_f64(exact));
        s.set("phi_paraxial_at_reference_rad", fmt_f64(closed));
        if m == 3 {
            s.set(
                "phi_paraxial_main_text_at_reference_rad",
                fmt_f64(paraxial_main_text(power, theta, &e, &l, r)),
            );
            let rep = arbitrate_m3_prefactor(theta, &e, &l, 0.05).stage("m=3 prefactor")?;
            s.extend(&rep.to_meta());
        }
    }
    if let Some(w) = paraxial_warning(theta, &l, r_max) {
        eprintln!("warning: {w}");
        s.set("paraxial_warning", w);
    }
    for (k, v) in &s.0 {
        map.meta.set(k, v);
    }
    map.meta.set("lambda0_nm", fmt_f64(l.wavelength));
    map.meta.set("electron_energy_kev", fmt_f64(e.energy_kev));
    map.meta.set("method", &method);
    ctx.write_phase("imprint", &map)?;
    ctx.finish(&s)
}

/// Radial quadrature on every node, evaluated once per distinct radius.
fn radial_map(
    spec: &VortexBeamSpec,
    e: &ElectronParams,
    l: &LightParams,
    g: UniformGrid,
    d: usize,
    r_max: f64,
) -> CliResult<PhaseMap> {
    let n = g.n as i64;
    // node i sits at (2i − (n−1))·step/2, so squared radii are integers in half steps
    let key = |i: usize| {
        let a = 2 * i as i64 - (n - 1);
        a * a
    };
    let mut cache: BTreeMap<i64, f64> = BTreeMap::new();
    let mut eval = |k: i64| -> CliResult<f64> {
        if let Some(v) = cache.get(&k) {
            return Ok(*v);
        }
        let r = (k as f64).sqrt() * g.step / 2.0;
        let v = vortex_phase_radial(spec, e, l, r).stage("radial quadrature")?;
        cache.insert(k, v);
        Ok(v)
    };
    let mut map = if d == 1 {
        let phi = (0..g.n).map(|i| eval(key(i))).collect::<CliResult<Vec<_>>>()?;
        PhaseMap::line(g, phi, r_max).stage("phase map")?
    } else {
        let mut phi = Vec::with_capacity(g.n * g.n);
        for iy in 0..g.n {
            for ix in 0..g.n {
                phi.push(eval(key(ix) + key(iy))?);
            }
        }
        PhaseMap::plane(g, g, phi, r_max).stage("phase map")?
    };
    map.meta.set("operation", "vortex beam phase by radial quadrature");
    Ok(map)
}

fn spectrum1d(mut ctx: Context) -> CliResult<String> {
    let e = params::electron(&ctx.cfg)?;
    let text = ctx
        .input_text("source", "file")?
        .ok_or_else(|| CliError::config("missing required key [source] file"))?;
    let spec = spectrum_from_text(&text).stage("spectrum file")?;
    let lambda0 = 2.0 * PI / spec.k0;
    let n = ctx.grid("grid", "n", 201)?;
    let r_max = ctx.cfg.positive_or("grid", "r_max_nm", 10.0 * lambda0)?;
    ctx.finish_config()?;
    let axis = UniformGrid::inclusive(-r_max, r_max, n);
    let map = forward_phase_from_beta(&spec, &e, axis, r_max).stage("phase from spectrum")?;
    let mut s = Meta::new();
    s.set("lambda0_nm", fmt_f64(lambda0));
    s.set("k_nodes", spec.len());
    let (lo, hi) = map.min_max();
    s.set("phase_span_rad", fmt_f64(hi - lo));
    if let Some(off) = map.meta.get("offset_to_absolute_rad") {
        s.set("offset_to_absolute_rad", off);
    }
    ctx.write_phase("imprint", &map)?;
    ctx.finish(&s)
}

fn spectrum2d(mut ctx: Context) -> CliResult<String> {
    let e = params::electron(&ctx.cfg)?;
    let text = ctx
        .input_text("source", "file")?
        .ok_or_else(|| CliError::config("missing required key [source] file"))?;
    let spec = LightSpectrum2D::from_text(&text).stage("spectrum file")?;
    let lambda0 = 2.0 * PI / spec.k0;
    let method = ctx.cfg.str_or("source", "method", "fast")?;
    let n = ctx.grid("grid", "n", 32)?;
    let r_max = ctx.cfg.positive_or("grid", "r_max_nm", 2.0 * lambda0)?;
    let padding = ctx.cfg.usize_or("grid", "padding", FastOptions::default().padding)?;
    if !matches!(method.as_str(), "fast" | "direct") {
        return Err(ctx
            .cfg
            .error_at("source", "method", format!("unknown method {method:?} (fast, direct)"))
            .into());
    }
    ctx.finish_config()?;
    let map = if method == "fast" {
        let opts = FastOptions {
            padding,
            ..FastOptions::default()
        };
        phase_fast(&spec, &e, n, r_max, opts).stage("fast phase evaluation")?
    } else {
        phase_direct_quadrature(&spec, &e, n, r_max, DirectOptions::for_grid(n)).stage("direct quadrature")?
    };
    let mut s = Meta::new();
    s.set("lambda0_nm", fmt_f64(lambda0));
    let (lo, hi) = map.min_max();
    s.set("phase_span_rad", fmt_f64(hi - lo));
    if let Some(off) = map.meta.get("offset_to_absolute_rad") {
        s.set("offset_to_absolute_rad", off);
    }
    ctx.write_phase("imprint", &map)?;
    ctx.finish(&s)
}
