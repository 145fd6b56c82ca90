//! `synth2d`: aperture phase for a designated two-dimensional focal shape.

use ofem::io::{fmt_f64, Meta};
use ofem::synth2d::{normalized_correlation, synthesize_focus, ShapeMask, SynthOptions, MASK_PIXEL};

use crate::context::{CliError, CliResult, Context, Stage};
use crate::params;

pub fn run(mut ctx: Context) -> CliResult<String> {
    let e = params::electron(&ctx.cfg)?;
    let l = params::light(&ctx.cfg)?;
    let mask = match (ctx.cfg.has("mask", "file"), ctx.cfg.has("mask", "preset")) {
        (true, true) => {
            return Err(ctx
                .cfg
                .error_at("mask", "preset", "give either [mask] file or [mask] preset, not both")
                .into())
        }
        (true, false) => {
            let bytes = ctx.input_file("mask", "file")?.expect("key is present");
            if bytes.first() == Some(&b'P') {
                ShapeMask::from_pnm(&bytes).stage("mask file")?
            } else {
                let text = String::from_utf8(bytes).map_err(|_| ctx.cfg.error_at("mask", "file", "not a text grid or image"))?;
                ShapeMask::from_text(&text).stage("mask file")?
            }
        }
        (false, true) => {
            let name = ctx.cfg.opt_str("mask", "preset")?.expect("key is present");
            let n = ctx.grid("mask", "n", 256)?;
            let unit = ctx.cfg.usize_or("mask", "unit", (n / 32).max(1))?;
            ShapeMask::preset_scaled(&name, n, unit).map_err(|err| ctx.cfg.error_at("mask", "preset", err.to_string()))?
        }
        (false, false) => return Err(CliError::config("missing focal shape: set [mask] file or [mask] preset")),
    };
    let ratio = ctx.cfg.positive_or("geometry", "r_max_over_lambda0", 30.0)?;
    let geom = params::geometry(&ctx.cfg, ratio * l.wavelength / 1e3)?;
    let d = SynthOptions::default();
    let opts = SynthOptions {
        lowpass: ctx.cfg.bool_or("synthesis", "lowpass", d.lowpass)?,
        lowpass_padding: ctx.cfg.usize_or("synthesis", "lowpass_padding", d.lowpass_padding)?,
        focal_padding: ctx.cfg.usize_or("synthesis", "focal_padding", d.focal_padding)?,
    };
    ctx.finish_config()?;

    let out = synthesize_focus(&mask, &geom, &e, &l, opts).stage("synthesis")?;
    let mut s = Meta::new();
    s.set("mask_pixels", mask.n);
    s.set("mask_on_count", mask.count());
    s.set("lambda_e_perp_nm", fmt_f64(out.focus.lambda_e_perp));
    s.set("mask_pixel_over_lambda_e_perp", fmt_f64(MASK_PIXEL));
    s.set("r_max_nm", fmt_f64(geom.r_max_nm()));
    if opts.focal_padding == 1 {
        let c = normalized_correlation(&out.focus.intensity(), &mask.as_f64());
        s.set("focus_mask_correlation", fmt_f64(c));
    }
    let m = ctx.header(&Meta::new());
    ctx.write("mask.pgm", &mask.to_pgm(&m))?;
    ctx.write_phase("target", &out.target)?;
    ctx.write_phase("filtered", &out.filtered)?;
    ctx.write_focal("focus", &out.focus)?;
    ctx.finish(&s)
}
