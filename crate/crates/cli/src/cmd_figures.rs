//! `figures`: data behind the one-dimensional focus-shaping panels at two
//! aperture-to-wavelength ratios and the two-dimensional synthesis example.

use std::f64::consts::PI;

use ofem::design1d::{diffraction_limited_phase, TargetPhase1D};
use ofem::io::{fmt_f64, Meta};
use ofem::kinematics::{ElectronParams, LightParams};
use ofem::propagate::{focal_from_fn, focal_wavefunction, AberrationSpec, Dim, FocalProfile, FocalSampling, MicroscopeGeometry};
use ofem::synth2d::{normalized_correlation, synthesize_focus, ShapeMask, SynthOptions};

use crate::cmd_focus::two_peaks;
use crate::config::Config;
use crate::context::{CliResult, Context, Stage};
use crate::params::{self, Profile};

/// One 1D run: aperture radius in µm and `R_max/λ₀`.
struct Series {
    name: &'static str,
    r_um: f64,
    ratio: f64,
}

const SERIES: [Series; 2] = [
    Series {
        name: "fig2",
        r_um: 10.0,
        ratio: 12.5,
    },
    Series {
        name: "figS1",
        r_um: 100.0,
        ratio: 125.0,
    },
];

struct Settings {
    e: ElectronParams,
    light: LightParams,
    slopes: Vec<f64>,
    two_slope: f64,
    n: usize,
    padding: usize,
    v_max: f64,
    fig3_n: usize,
    fig3_ratio: f64,
    fig3_mask: String,
    fig3_unit: usize,
}

fn settings(ctx: &Context) -> CliResult<Settings> {
    let cfg: &Config = &ctx.cfg;
    let mut slopes = cfg.f64_list("figures", "slopes_rad")?;
    if slopes.is_empty() {
        slopes = vec![PI, 2.0 * PI, 4.0 * PI];
        cfg.set_resolved("figures", "slopes_rad", "[pi, 2pi, 4pi]");
    }
    Ok(Settings {
        e: params::electron(cfg)?,
        light: params::light(cfg)?,
        slopes,
        two_slope: cfg.f64_or("figures", "two_slope_rad", 4.0 * PI)?,
        n: ctx.grid("figures", "n", 1024)?,
        padding: cfg.usize_or("figures", "padding", 8)?,
        v_max: cfg.positive_or("figures", "focal_window", 4.0)?,
        fig3_n: cfg.usize_or("figures", "fig3_n", 512)?,
        fig3_ratio: cfg.positive_or("figures", "fig3_r_max_over_lambda0", 30.0)?,
        fig3_mask: cfg.str_or("figures", "fig3_mask", "two-bar")?,
        fig3_unit: cfg.usize_or("figures", "fig3_mask_unit", 4)?,
    })
}

pub fn run(mut ctx: Context) -> CliResult<String> {
    let st = settings(&ctx)?;
    let d = ctx.cfg.positive_or("geometry", "lens_to_focus_mm", 1.0)?;
    let xo = ctx.cfg.positive_or("geometry", "crossover_mm", 200.0)?;
    ctx.finish_config()?;

    let mut s = Meta::new();
    for series in &SERIES {
        let geom = MicroscopeGeometry::in_focus(d, xo, series.r_um).stage("geometry")?;
        let l = LightParams::new(series.r_um * 1e3 / series.ratio).stage("light")?;
        one_dimensional(&mut ctx, &mut s, series, &st, &geom, &l)?;
    }
    // compare the steepest ramp of both ratios
    let k = st.slopes.len();
    let fwhm = |name: &str| s.get_f64(&format!("{name}_slope{k}_fwhm_over_lambda_e_perp")).unwrap_or(f64::NAN);
    let (a, b) = (fwhm(SERIES[0].name), fwhm(SERIES[1].name));
    s.set("sharper_at_larger_ratio", b < a);

    let l = st.light;
    let r_um = st.fig3_ratio * l.wavelength / 1e3;
    let geom = MicroscopeGeometry::in_focus(d, xo, r_um).stage("geometry")?;
    let mask = ShapeMask::preset_scaled(&st.fig3_mask, st.fig3_n, st.fig3_unit).stage("fig3 mask")?;
    let out = synthesize_focus(&mask, &geom, &st.e, &l, SynthOptions::default()).stage("fig3 synthesis")?;
    s.set(
        "fig3_focus_mask_correlation",
        fmt_f64(normalized_correlation(&out.focus.intensity(), &mask.as_f64())),
    );
    let m = ctx.header(&Meta::new());
    ctx.write("fig3_a_mask.pgm", &mask.to_pgm(&m))?;
    ctx.write_phase("fig3_b_target_phase", &out.target)?;
    ctx.write_phase("fig3_c_filtered_phase", &out.filtered)?;
    ctx.write_focal("fig3_d_focus", &out.focus)?;
    ctx.finish(&s)
}

fn one_dimensional(
    ctx: &mut Context,
    s: &mut Meta,
    series: &Series,
    st: &Settings,
    geom: &MicroscopeGeometry,
    l: &LightParams,
) -> CliResult<()> {
    let r = geom.r_max_nm();
    let sampling = FocalSampling::new(st.n, st.padding).stage("focal sampling")?;
    let points = (32.0 * series.ratio) as usize + 1;
    let a = st.two_slope;
    let panels: [(&str, Vec<Profile>); 3] = [
        ("ab", st.slopes.iter().map(|&a| Profile::Linear { a, b: 0.0 }).collect()),
        ("cd", vec![Profile::TwoSlope { a1: -a, a2: a, offset: 0.0 }]),
        ("ef", vec![Profile::TwoSlope { a1: -a, a2: a, offset: PI }]),
    ];
    for (tag, profiles) in panels {
        let mut phase_cols: Vec<Vec<f64>> = Vec::new();
        let mut focus_cols: Vec<Vec<f64>> = Vec::new();
        let mut names_phase = vec!["x_over_r_max".to_string()];
        let mut names_focus = vec!["x_f_over_lambda_e_perp".to_string()];
        let mut axis_phase = Vec::new();
        let mut axis_focus = Vec::new();
        for (i, p) in profiles.iter().enumerate() {
            let target = TargetPhase1D::from_fn(points, r, |x| p.eval(x / r)).stage("target phase")?;
            let dl = diffraction_limited_phase(&target, l.k0).stage("diffraction-limited phase")?;
            let f = |x: f64, _: f64| p.eval(x / r);
            let ideal = focal_from_fn(Dim::One, &f, &AberrationSpec::none(), geom, &st.e, sampling)
                .stage("ideal focus")?;
            let real = focal_wavefunction(&dl, &AberrationSpec::none(), geom, &st.e, sampling).stage("focus")?;
            let peak = ideal.peak().1;
            let (ic, rc) = (ideal.crop(st.v_max), real.crop(st.v_max));
            axis_phase = target.grid.coords().iter().map(|x| x / r).collect();
            axis_focus = ic.axis.coords();
            phase_cols.push(target.phi.clone());
            phase_cols.push(dl.phi.clone());
            focus_cols.push(ic.intensity().iter().map(|v| v / peak).collect());
            focus_cols.push(rc.intensity().iter().map(|v| v / peak).collect());
            names_phase.push(format!("target_{}", i + 1));
            names_phase.push(format!("diffraction_limited_{}", i + 1));
            names_focus.push(format!("abs2_target_{}", i + 1));
            names_focus.push(format!("abs2_diffraction_limited_{}", i + 1));
            record(s, series.name, tag, i, p, &real);
        }
        let mut m = Meta::new();
        m.set("r_max_over_lambda0", fmt_f64(series.ratio));
        m.set("r_max_um", fmt_f64(series.r_um));
        m.set("na", fmt_f64(geom.na()));
        m.set("lambda_e_perp_nm", fmt_f64(geom.lambda_e_perp(&st.e)));
        m.set("normalization", "abs2 divided by the peak of the matching target focus");
        let phase_names: Vec<&str> = names_phase.iter().map(String::as_str).collect();
        let focus_names: Vec<&str> = names_focus.iter().map(String::as_str).collect();
        let (p_tag, f_tag) = (&tag[..1], &tag[1..]);
        ctx.write_table(
            &format!("{}_{p_tag}_phase", series.name),
            &m,
            &phase_names,
            &rows(&axis_phase, &phase_cols),
        )?;
        ctx.write_table(
            &format!("{}_{f_tag}_focus", series.name),
            &m,
            &focus_names,
            &rows(&axis_focus, &focus_cols),
        )?;
    }
    Ok(())
}

fn rows(axis: &[f64], cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..axis.len())
        .map(|i| std::iter::once(axis[i]).chain(cols.iter().map(|c| c[i])).collect())
        .collect()
}

fn record(s: &mut Meta, name: &str, tag: &str, i: usize, p: &Profile, real: &FocalProfile) {
    match (tag, p) {
        ("ab", Profile::Linear { a, .. }) => {
            let (v, _) = real.peak_position();
            s.set(&format!("{name}_slope{}_rad", i + 1), fmt_f64(*a));
            s.set(&format!("{name}_slope{}_peak_over_lambda_e_perp", i + 1), fmt_f64(v));
            s.set(&format!("{name}_slope{}_fwhm_over_lambda_e_perp", i + 1), fmt_f64(real.fwhm()));
        }
        (_, Profile::TwoSlope { .. }) => {
            if let Some((a, b, (node, depth))) = two_peaks(real) {
                s.set(&format!("{name}_{tag}_peaks_over_lambda_e_perp"), format!("{} {}", fmt_f64(a), fmt_f64(b)));
                s.set(&format!("{name}_{tag}_min_between_over_lambda_e_perp"), fmt_f64(node));
                s.set(&format!("{name}_{tag}_min_between_relative"), fmt_f64(depth));
            }
        }
        _ => {}
    }
}
