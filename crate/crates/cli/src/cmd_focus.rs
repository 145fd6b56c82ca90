//! `focus`: focal-plane wave function for a phase map or an analytic phase.

use ofem::design1d::{diffraction_limited_phase, TargetPhase1D};
use ofem::imprint::PhaseMap;
use ofem::io::{fmt_f64, Meta};
use ofem::propagate::{
    aberration_phase, defocus_scan, focal_from_fn, focal_wavefunction, AberrationSpec, Dim, FocalProfile,
    FocalSampling,
};

use crate::context::{CliError, CliResult, Context, Stage};
use crate::params::{self, Profile};

enum Source {
    File(PhaseMap),
    Analytic(Profile),
    Quartic(f64),
}

pub fn run(mut ctx: Context) -> CliResult<String> {
    let e = params::electron(&ctx.cfg)?;
    let r_um = ctx.cfg.positive_or("geometry", "r_max_um", 10.0)?;
    let geom = params::geometry(&ctx.cfg, r_um)?;
    let aberr = params::aberration(&ctx.cfg)?;
    let kind = ctx
        .cfg
        .opt_str("phase", "type")?
        .ok_or_else(|| CliError::config("missing [phase] type (file, linear, piecewise, quartic)"))?;
    let source = match kind.as_str() {
        "file" => {
            let text = ctx
                .input_text("phase", "file")?
                .ok_or_else(|| CliError::config("missing required key [phase] file"))?;
            Source::File(PhaseMap::from_text(&text).stage("phase file")?)
        }
        "quartic" => Source::Quartic(ctx.cfg.f64_or("phase", "c3_mm", aberr.c3_mm)?),
        other => match Profile::from_config(&ctx.cfg, "phase", other)? {
            Some(p) => Source::Analytic(p),
            None => {
                return Err(ctx
                    .cfg
                    .error_at("phase", "type", format!("unknown phase type {other:?}"))
                    .into())
            }
        },
    };
    let dim = match &source {
        Source::File(m) => {
            if m.is_plane() {
                Dim::Two
            } else {
                Dim::One
            }
        }
        _ => match ctx.cfg.usize_or("focus", "dims", 1)? {
            1 => Dim::One,
            2 => Dim::Two,
            _ => return Err(ctx.cfg.error_at("focus", "dims", "dims must be 1 or 2").into()),
        },
    };
    let diffraction_limited = match source {
        Source::Analytic(_) => ctx.cfg.bool_or("phase", "diffraction_limited", false)?,
        _ => false,
    };
    if diffraction_limited && dim == Dim::Two {
        return Err(ctx
            .cfg
            .error_at("phase", "diffraction_limited", "diffraction-limited profiles are one-dimensional")
            .into());
    }
    let light = if diffraction_limited {
        Some(params::light(&ctx.cfg)?)
    } else {
        None
    };
    let n = ctx.grid("focus", "n", if dim == Dim::One { 1024 } else { 128 })?;
    let padding = ctx.cfg.usize_or("focus", "padding", FocalSampling::DEFAULT_PADDING)?;
    let deltas = ctx.cfg.f64_list("focus", "defocus_per_mm")?;
    ctx.finish_config()?;

    let sampling = FocalSampling::new(n, padding).stage("focal sampling")?;
    let r = geom.r_max_nm();
    let dist = geom.distance_nm();
    let q0 = e.q0;
    let is_file = matches!(source, Source::File(_));
    let is_quartic = matches!(source, Source::Quartic(_));
    let mut s = Meta::new();
    let (map, phase_fn): (PhaseMap, Box<dyn Fn(f64, f64) -> f64 + Sync>) = match source {
        Source::File(m) => {
            let f = {
                let m = m.clone();
                move |x: f64, y: f64| m.value_at(x, y).unwrap_or(0.0)
            };
            (m, Box::new(f))
        }
        Source::Analytic(p) if diffraction_limited => {
            let l = light.expect("light parameters are read for diffraction-limited phases");
            let points = ((32.0 * r / l.wavelength) as usize + 1).max(101);
            let target = TargetPhase1D::from_fn(points, r, |x| p.eval(x / r)).stage("target phase")?;
            let m = diffraction_limited_phase(&target, l.k0).stage("diffraction-limited phase")?;
            s.set("r_max_over_lambda0", fmt_f64(r / l.wavelength));
            let f = {
                let m = m.clone();
                move |x: f64, y: f64| m.value_at(x, y).unwrap_or(0.0)
            };
            (m, Box::new(f))
        }
        Source::Analytic(p) => {
            let f = move |x: f64, _: f64| p.eval(x / r);
            (sampled(dim, r, &f)?, Box::new(f))
        }
        Source::Quartic(c3) => {
            let spec = AberrationSpec::spherical(c3);
            let f = move |x: f64, y: f64| -aberration_phase(&spec, x.hypot(y) / dist, q0);
            (sampled(dim, r, &f)?, Box::new(f))
        }
    };
    let profile = if is_file {
        focal_wavefunction(&map, &aberr, &geom, &e, sampling).stage("focal transform")?
    } else {
        focal_from_fn(dim, &*phase_fn, &aberr, &geom, &e, sampling).stage("focal transform")?
    };
    let zero = |_: f64, _: f64| 0.0;
    let reference =
        focal_from_fn(dim, &zero, &AberrationSpec::none(), &geom, &e, sampling).stage("reference focus")?;

    let (vx, vy) = profile.peak_position();
    s.set("lambda_e_perp_nm", fmt_f64(profile.lambda_e_perp));
    s.set("peak_x_over_lambda_e_perp", fmt_f64(vx));
    s.set("peak_y_over_lambda_e_perp", fmt_f64(vy));
    s.set("strehl", fmt_f64(ofem::propagate::strehl_ratio(&profile, &reference)));
    s.set("fwhm_over_lambda_e_perp", fmt_f64(profile.fwhm()));
    if is_quartic {
        let bare = focal_from_fn(dim, &zero, &aberr, &geom, &e, sampling).stage("uncorrected focus")?;
        s.set("strehl_uncorrected", fmt_f64(ofem::propagate::strehl_ratio(&bare, &reference)));
    }
    if let Some((a, b, node)) = two_peaks(&profile) {
        s.set("peak1_x_over_lambda_e_perp", fmt_f64(a));
        s.set("peak2_x_over_lambda_e_perp", fmt_f64(b));
        s.set("node_x_over_lambda_e_perp", fmt_f64(node.0));
        s.set("node_depth", fmt_f64(node.1));
    }
    ctx.write_phase("phase", &map)?;
    ctx.write_focal("focus", &profile)?;
    if !deltas.is_empty() {
        let scan = defocus_scan(dim, &*phase_fn, &aberr, &geom, &e, sampling, &deltas).stage("defocus scan")?;
        let peak = reference.peak().1;
        let rows: Vec<Vec<f64>> = scan.iter().map(|&(d, p)| vec![d, p, p / peak]).collect();
        let mut m = Meta::new();
        m.set("reference_peak_abs2", fmt_f64(peak));
        ctx.write_table("defocus", &m, &["delta_per_mm", "peak_abs2", "strehl"], &rows)?;
    }
    ctx.finish(&s)
}

/// Phase sampled for output on the aperture.
fn sampled(dim: Dim, r: f64, f: &dyn Fn(f64, f64) -> f64) -> CliResult<PhaseMap> {
    match dim {
        Dim::One => PhaseMap::from_fn_line(401, r, |x| f(x, 0.0)),
        Dim::Two => PhaseMap::from_fn_plane(129, r, f),
    }
    .stage("phase map")
}

/// The two highest local maxima of the x cut and the intensity minimum
/// between them as `(position, minimum / lower peak)`.
pub fn two_peaks(p: &FocalProfile) -> Option<(f64, f64, (f64, f64))> {
    let y = p.x_cut();
    let mut maxima: Vec<usize> = (1..y.len().saturating_sub(1))
        .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1])
        .collect();
    maxima.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    let (&i, &j) = (maxima.first()?, maxima.get(1)?);
    let (i, j) = (i.min(j), i.max(j));
    // ignore side lobes far below the main peak
    if y[j].min(y[i]) < 0.1 * y[i].max(y[j]) {
        return None;
    }
    let k = (i..=j).min_by(|&a, &b| y[a].total_cmp(&y[b]))?;
    let depth = y[k] / y[i].min(y[j]);
    Some((p.axis.at(i), p.axis.at(j), (p.axis.at(k), depth)))
}
