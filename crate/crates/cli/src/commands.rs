use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use lunar_sfs_core::config::KeyValues;
use lunar_sfs_core::dataset::{read_raster, slice_patches, write_raster, MaskSampler, Modality, Raster};
use lunar_sfs_core::metrics::{mse, psnr, remaining_error, rmse, ssim};
use lunar_sfs_core::photometry::{HapkeParams, IlluminationGeometry};
use lunar_sfs_core::render::{lambert_shade, render_image, ReflectanceModel, SSIM_LIGHT};
use lunar_sfs_core::sfs::{SfsConfig, SfsProblem};
use lunar_sfs_core::terrain::{gradient_field, normals_from_gradient, synth_terrain, Dem, TerrainSpec};
use lunar_sfs_core::vq::{
    detokenize, fit_codebook, load_codebook, patch_vectors, save_codebook, tokenize_image, FitConfig, TokenGrid,
};
use lunar_sfs_core::Grid;

use crate::{EvalArgs, GenTerrainArgs, MaskArgs, RenderArgs, SfsArgs, SliceArgs, VqCodeArgs, VqFitArgs};

fn read_grid(path: &Path) -> Result<Grid> {
    let raster = read_raster(path).with_context(|| format!("reading {}", path.display()))?;
    raster
        .to_grid()
        .with_context(|| format!("{} must be single-channel", path.display()))
}

fn read_dem(path: &Path, pixel_size: f64) -> Result<Dem> {
    Ok(Dem::new(read_grid(path)?, pixel_size)?)
}

fn write(path: &Path, raster: &Raster) -> Result<()> {
    write_raster(path, raster).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_config(path: &Path) -> Result<KeyValues> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    KeyValues::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn gen_terrain(args: GenTerrainArgs) -> Result<()> {
    let mut spec = TerrainSpec::default();
    if let Some(path) = &args.spec {
        let mut kv = read_config(path)?;
        spec.apply(&mut kv)?;
        kv.finish().with_context(|| format!("in {}", path.display()))?;
    }
    if let Some(v) = args.width {
        spec.width = v;
    }
    if let Some(v) = args.height {
        spec.height = v;
    }
    if let Some(v) = args.crater_count {
        spec.crater_count = v;
    }
    if let Some(v) = args.amplitude {
        spec.fractal_amplitude = v;
    }
    if let Some(v) = args.pixel_size {
        spec.pixel_size = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    let dem = synth_terrain(&spec)?;
    write(&args.out, &Raster::from_grid(dem.heights()))
}

fn geometry(sun: (f64, f64), view: (f64, f64)) -> Result<IlluminationGeometry> {
    Ok(IlluminationGeometry::from_az_el(sun, view)?)
}

pub fn render(args: RenderArgs) -> Result<()> {
    let dem = read_dem(&args.dem, args.pixel_size)?;
    let albedo = match (&args.albedo, args.albedo_const) {
        (Some(path), _) => read_grid(path)?,
        (None, Some(a)) => Grid::filled(dem.width(), dem.height(), a),
        (None, None) => unreachable!("clap requires one albedo source"),
    };
    let model: ReflectanceModel = args.model.parse()?;
    let illum = geometry(args.sun, args.view)?;
    let image = render_image(&dem, &albedo, &illum, model, &HapkeParams::default())?;
    write(&args.out, &Raster::from_grid(&image))
}

fn hapke_overrides(kv: &mut KeyValues, params: &mut HapkeParams) -> Result<()> {
    kv.update("albedo_init", &mut params.w)?;
    kv.update("b", &mut params.b)?;
    kv.update("c", &mut params.c)?;
    kv.update("b_s0", &mut params.b_s0)?;
    kv.update("h_s", &mut params.h_s)?;
    Ok(())
}

pub fn sfs(args: SfsArgs) -> Result<()> {
    let image = read_grid(&args.image)?;
    let init = read_dem(&args.init_dem, args.pixel_size)?;
    let mut cfg = SfsConfig::default();
    let mut params = HapkeParams::default();
    if let Some(path) = &args.config {
        let mut kv = read_config(path)?;
        cfg.apply(&mut kv)?;
        hapke_overrides(&mut kv, &mut params)?;
        kv.finish().with_context(|| format!("in {}", path.display()))?;
    }
    let illum = geometry(args.sun, args.view)?;
    let state = SfsProblem::new(image, init, illum, params, cfg)?.reconstruct()?;

    write(&args.out_dem, &Raster::from_grid(state.z.heights()))?;
    if let Some(path) = &args.out_normals {
        let normals = normals_from_gradient(&gradient_field(&state.z));
        let channels: Vec<Grid> = (0..3).map(|c| normals.component(c)).collect();
        write(path, &Raster::from_grids(&channels)?)?;
    }
    if let Some(path) = &args.out_albedo {
        write(path, &Raster::from_grid(&state.albedo))?;
    }
    if let Some(path) = &args.log {
        let mut log = String::new();
        for r in &state.history {
            let t = r.terms;
            writeln!(
                log,
                "{}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}",
                r.iteration, t.total, t.intensity, t.integrability, t.relative_depth, t.absolute_depth
            )?;
        }
        write_text(path, &log)?;
    }
    let last = state.history.last().expect("history holds the initial energy");
    eprintln!("{} iterations, final energy {:e}", last.iteration, last.terms.total);
    Ok(())
}

/// All channels stacked vertically, for pooled pixel statistics.
fn pooled(r: &Raster) -> Grid {
    let data = r.as_slice().iter().map(|&v| v as f64).collect();
    Grid::from_vec(r.width(), r.height() * r.channels(), data).expect("raster dimensions")
}

/// Min-max rescale of both grids by their joint range; constant pairs map to 0.5.
fn joint_unit_range(a: &Grid, b: &Grid) -> (Grid, Grid) {
    let lo = a.min().min(b.min());
    let hi = a.max().max(b.max());
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        return (a.map(|_| 0.5), b.map(|_| 0.5));
    }
    let f = |v: f64| ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    (a.map(f), b.map(f))
}

fn format_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        v.to_string()
    }
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let modality: Modality = args.modality.parse()?;
    let pred = read_raster(&args.pred).with_context(|| format!("reading {}", args.pred.display()))?;
    let truth = read_raster(&args.truth).with_context(|| format!("reading {}", args.truth.display()))?;
    if (pred.width(), pred.height(), pred.channels()) != (truth.width(), truth.height(), truth.channels()) {
        bail!(
            "prediction is {}x{}x{}, truth is {}x{}x{}",
            pred.width(),
            pred.height(),
            pred.channels(),
            truth.width(),
            truth.height(),
            truth.channels()
        );
    }
    if pred.channels() != modality.channels() {
        bail!("{modality} expects {} channel(s), got {}", modality.channels(), pred.channels());
    }
    let (p, t) = (pooled(&pred), pooled(&truth));
    let structural = match modality {
        Modality::Dem => {
            let sp = lambert_shade(&Dem::new(pred.to_grid()?, args.pixel_size)?, SSIM_LIGHT)?;
            let st = lambert_shade(&Dem::new(truth.to_grid()?, args.pixel_size)?, SSIM_LIGHT)?;
            ssim(&sp, &st)?
        }
        Modality::Normals => {
            let unit = |g: Grid| g.map(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0));
            let mut acc = 0.0;
            for c in 0..3 {
                acc += ssim(&unit(pred.channel(c)?), &unit(truth.channel(c)?))?;
            }
            acc / 3.0
        }
        Modality::Gray | Modality::Albedo => {
            let (a, b) = joint_unit_range(&p, &t);
            ssim(&a, &b)?
        }
    };
    let mut report = String::new();
    writeln!(report, "mse\t{}", format_value(mse(&p, &t)?))?;
    writeln!(report, "rmse\t{}", format_value(rmse(&p, &t)?))?;
    writeln!(report, "psnr\t{}", format_value(psnr(&p, &t, args.datarange)?))?;
    writeln!(report, "ssim\t{}", format_value(structural))?;
    for &th in &args.thresholds {
        writeln!(report, "re_{th}\t{}", format_value(remaining_error(&p, &t, th)?))?;
    }
    match &args.report {
        Some(path) => write_text(path, &report),
        None => {
            print!("{report}");
            Ok(())
        }
    }
}

pub fn slice(args: SliceArgs) -> Result<()> {
    let raster = read_raster(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let patches = slice_patches(&raster, args.size, args.stride)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut index = String::new();
    for (k, p) in patches.iter().enumerate() {
        let name = format!("patch_{k:05}.sfsr");
        write(&args.out_dir.join(&name), &p.raster)?;
        writeln!(index, "{name}\t{}\t{}", p.x, p.y)?;
    }
    print!("{index}");
    Ok(())
}

pub fn mask(args: MaskArgs) -> Result<()> {
    let sampler = MaskSampler::new(args.tokens_per_modality)?;
    let plan = match (&args.alphas, args.uniform) {
        (Some(alphas), _) => sampler.dirichlet(alphas, args.budget, args.seed)?,
        (None, Some(m)) => sampler.uniform(m, args.budget, args.seed)?,
        (None, None) => unreachable!("clap requires a mode"),
    };
    let plan = match &args.names {
        Some(names) => plan.with_names(names)?,
        None => plan,
    };
    let text = plan.to_text();
    match &args.out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn vq_fit(args: VqFitArgs) -> Result<()> {
    let modality: Modality = args.modality.parse()?;
    let mut rows = Vec::new();
    let mut dim = None;
    for path in &args.input {
        let raster = read_raster(path).with_context(|| format!("reading {}", path.display()))?;
        if raster.channels() != modality.channels() {
            bail!("{}: {modality} expects {} channel(s)", path.display(), modality.channels());
        }
        let v = patch_vectors(&raster).with_context(|| format!("cutting {}", path.display()))?;
        dim = Some(v.width());
        rows.extend(v.into_vec());
    }
    let dim = dim.expect("clap requires an input");
    let data = Grid::from_vec(dim, rows.len() / dim, rows)?;
    let cfg = FitConfig {
        vocab_size: args.vocab_size.unwrap_or(modality.vocab_size()),
        epochs: args.epochs,
        seed: args.seed,
        ..FitConfig::for_modality(modality)
    };
    let fit = fit_codebook(&data, &cfg)?;
    save_codebook(&args.out, &fit.codebook.with_modality(Some(modality)))
        .with_context(|| format!("writing {}", args.out.display()))?;
    let mut log = String::new();
    for (e, err) in fit.error_log.iter().enumerate() {
        writeln!(log, "{}\t{err:e}", e + 1)?;
    }
    match &args.log {
        Some(path) => write_text(path, &log),
        None => {
            eprint!("{log}");
            Ok(())
        }
    }
}

pub fn vq_code(args: VqCodeArgs) -> Result<()> {
    let cb = load_codebook(&args.codebook).with_context(|| format!("loading {}", args.codebook.display()))?;
    if let Some(path) = &args.decode {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let tokens = TokenGrid::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        let raster = detokenize(&tokens.indices, tokens.cells_x, tokens.cells_y, &cb)?;
        let out = args.out.as_ref().expect("clap requires --out with --decode");
        return write(out, &raster);
    }
    let input = args.input.as_ref().expect("clap requires --input or --decode");
    let raster = read_raster(input).with_context(|| format!("reading {}", input.display()))?;
    let indices = tokenize_image(&raster, &cb)?;
    let (cx, cy) = (raster.width() / 8, raster.height() / 8);
    let tokens = TokenGrid::new(cx, cy, indices)?;
    write_text(args.tokens.as_ref().expect("clap requires --tokens"), &tokens.to_text())?;

    let recon = detokenize(&tokens.indices, cx, cy, &cb)?;
    if let Some(out) = &args.out {
        write(out, &recon)?;
    }
    let (a, b) = (pooled(&raster), pooled(&recon));
    let range = (a.max() - a.min()).max(f64::MIN_POSITIVE);
    println!("tokens\t{}", tokens.indices.len());
    println!("mse\t{}", format_value(mse(&a, &b)?));
    println!("psnr\t{}", format_value(psnr(&a, &b, range)?));
    Ok(())
}
