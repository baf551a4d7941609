//! Render a synthetic crater field, reconstruct it from the image and a
//! smoothed initial DEM, and print slope/height errors.
//!
//! `cargo run --release --example crater_scene -- [key=value ...]` where keys
//! are solver settings (gamma, delta, tau, lowpass_scale, max_iters, ...) plus
//! `seed`, `incidence` (degrees), `azimuth` (degrees) and `scene=albedo`, which
//! swaps the craters for flat ground under a two-tone albedo.

use std::time::Instant;

use lunar_sfs_core::config::KeyValues;
use lunar_sfs_core::metrics::remaining_error;
use lunar_sfs_core::photometry::{HapkeParams, IlluminationGeometry};
use lunar_sfs_core::render::{render_image, ReflectanceModel};
use lunar_sfs_core::sfs::{SfsConfig, SfsProblem};
use lunar_sfs_core::terrain::{gradient_field, lowpass, slope_map, synth_terrain, Dem, TerrainSpec};
use lunar_sfs_core::{Grid, Result};

fn slope_rmse_deg(a: &Dem, b: &Dem) -> f64 {
    let sa = slope_map(&gradient_field(a));
    let sb = slope_map(&gradient_field(b));
    let mse = sa.iter().zip(sb.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / sa.len() as f64;
    mse.sqrt().to_degrees()
}

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut kv = KeyValues::parse(&args.join("\n"))?;
    let seed = kv.take::<u64>("seed")?.unwrap_or(7);
    let incidence = kv.take::<f64>("incidence")?.unwrap_or(45.0);
    let azimuth = kv.take::<f64>("azimuth")?.unwrap_or(0.0);
    let flat = kv.take::<String>("scene")?.as_deref() == Some("albedo");
    let mut cfg = SfsConfig::default();
    cfg.apply(&mut kv)?;
    kv.finish()?;

    let truth = if flat {
        Dem::new(Grid::zeros(128, 128), 1.0)?
    } else {
        synth_terrain(&TerrainSpec {
            seed,
            ..TerrainSpec::default()
        })?
    };
    let params = HapkeParams::default();
    let illum = IlluminationGeometry::from_az_el((azimuth, 90.0 - incidence), (0.0, 90.0))?;
    let albedo = if flat {
        Grid::from_fn(128, 128, |x, _| if x < 64 { 0.25 } else { 0.35 })
    } else {
        Grid::filled(truth.width(), truth.height(), params.w)
    };
    let image = render_image(&truth, &albedo, &illum, ReflectanceModel::Hapke, &params)?;
    let init = Dem::new(lowpass(truth.heights(), 8.0), truth.pixel_size())?;

    let problem = SfsProblem::new(image, init.clone(), illum, params, cfg)?;
    let start = Instant::now();
    let state = problem.reconstruct()?;
    let elapsed = start.elapsed();
    let first = state.history.first().unwrap().terms;
    let last = state.history.last().unwrap().terms;
    println!("iterations     {}", state.history.len() - 1);
    println!("runtime        {:.2?}", elapsed);
    println!("energy         {:.4e} -> {:.4e}", first.total, last.total);
    println!("  terms        {:?}", last);
    println!("slope rmse     init {:.4} deg  out {:.4} deg", slope_rmse_deg(&init, &truth), slope_rmse_deg(&state.z, &truth));
    println!(
        "RE<2m          init {:.4}  out {:.4}",
        remaining_error(init.heights(), truth.heights(), 2.0)?,
        remaining_error(state.z.heights(), truth.heights(), 2.0)?
    );
    println!("albedo         min {:.4} max {:.4}", state.albedo.min(), state.albedo.max());
    let mae = |lo: usize, hi: usize| {
        let mut s = 0.0;
        for y in 0..albedo.height() {
            for x in lo..hi {
                s += (state.albedo[(x, y)] - albedo[(x, y)]).abs();
            }
        }
        s / ((hi - lo) * albedo.height()) as f64
    };
    let half = albedo.width() / 2;
    println!("albedo mae     left {:.5} right {:.5}", mae(0, half), mae(half, albedo.width()));
    Ok(())
}
