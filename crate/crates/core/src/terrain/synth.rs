//! Synthetic lunar-like ground truth: a spectral fractal surface with
//! paraboloid craters on top.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};

use super::Dem;
use crate::config::KeyValues;
use crate::error::{invalid, Result};
use crate::grid::Grid;

/// Rim crest height as a fraction of the bowl depth.
const RIM_HEIGHT_RATIO: f64 = 0.2;
/// The rim tapers to zero between `R` and `(1 + RIM_WIDTH_RATIO)·R`.
const RIM_WIDTH_RATIO: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct TerrainSpec {
    pub width: usize,
    pub height: usize,
    /// Meters per pixel.
    pub pixel_size: f64,
    pub crater_count: usize,
    /// Crater radius range in meters, inclusive.
    pub crater_radius: (f64, f64),
    /// Crater depth range (rim-free bowl depth below the surroundings) in meters.
    pub crater_depth: (f64, f64),
    /// RMS height of the fractal base surface in meters.
    pub fractal_amplitude: f64,
    /// Hurst exponent of the base surface; amplitude spectrum falls off as
    /// `|k|^-(H+1)`.
    pub roughness: f64,
    pub seed: u64,
}

impl Default for TerrainSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            pixel_size: 1.0,
            crater_count: 6,
            crater_radius: (8.0, 20.0),
            crater_depth: (1.5, 4.0),
            fractal_amplitude: 0.5,
            roughness: 0.8,
            seed: 0,
        }
    }
}

impl TerrainSpec {
    /// Applies `key = value` overrides; unknown keys are left in `kv`.
    /// Ranges are written `lo, hi`.
    pub fn apply(&mut self, kv: &mut KeyValues) -> Result<()> {
        kv.update("width", &mut self.width)?;
        kv.update("height", &mut self.height)?;
        kv.update("pixel_size", &mut self.pixel_size)?;
        kv.update("crater_count", &mut self.crater_count)?;
        if let Some(r) = kv.take_pair("crater_radius")? {
            self.crater_radius = r;
        }
        if let Some(d) = kv.take_pair("crater_depth")? {
            self.crater_depth = d;
        }
        kv.update("fractal_amplitude", &mut self.fractal_amplitude)?;
        kv.update("roughness", &mut self.roughness)?;
        kv.update("seed", &mut self.seed)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 3 || self.height < 3 {
            return invalid(format!(
                "terrain must be at least 3x3 pixels, got {}x{}",
                self.width, self.height
            ));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return invalid("pixel_size must be positive");
        }
        if !(self.fractal_amplitude >= 0.0 && self.fractal_amplitude.is_finite()) {
            return invalid("fractal_amplitude must be nonnegative");
        }
        if !(self.roughness > 0.0 && self.roughness <= 1.0) {
            return invalid(format!("roughness {} outside (0, 1]", self.roughness));
        }
        if self.crater_count > 0 {
            let (rmin, rmax) = self.crater_radius;
            let extent = 0.5 * self.width.min(self.height) as f64 * self.pixel_size;
            if !(rmin > 0.0 && rmin <= rmax && rmax <= extent) {
                return invalid(format!(
                    "crater radius range ({rmin}, {rmax}) must satisfy 0 < min <= max <= {extent} m"
                ));
            }
            let (dmin, dmax) = self.crater_depth;
            if !(dmin >= 0.0 && dmin <= dmax && dmax.is_finite()) {
                return invalid(format!("crater depth range ({dmin}, {dmax}) is invalid"));
            }
        }
        Ok(())
    }
}

/// A crater placed by [`synth_terrain_with_craters`]; center in pixel
/// coordinates, radius and depth in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crater {
    pub center: (f64, f64),
    pub radius: f64,
    pub depth: f64,
}

impl Crater {
    /// Height contribution at distance `r` meters from the center.
    pub fn profile(&self, r: f64) -> f64 {
        let rim = RIM_HEIGHT_RATIO * self.depth;
        let outer = (1.0 + RIM_WIDTH_RATIO) * self.radius;
        if r < self.radius {
            let t = r / self.radius;
            -self.depth + (self.depth + rim) * t * t
        } else if r < outer {
            let t = (r - self.radius) / (outer - self.radius);
            0.5 * rim * (1.0 + (PI * t).cos())
        } else {
            0.0
        }
    }
}

pub fn synth_terrain(spec: &TerrainSpec) -> Result<Dem> {
    synth_terrain_with_craters(spec).map(|(dem, _)| dem)
}

/// Generates the DEM and reports where the craters went.
pub fn synth_terrain_with_craters(spec: &TerrainSpec) -> Result<(Dem, Vec<Crater>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut heights = if spec.fractal_amplitude > 0.0 {
        fractal_surface(spec, &mut rng)
    } else {
        Grid::zeros(spec.width, spec.height)
    };

    let mut craters = Vec::with_capacity(spec.crater_count);
    for _ in 0..spec.crater_count {
        let crater = Crater {
            center: (
                rng.random_range(0.0..spec.width as f64),
                rng.random_range(0.0..spec.height as f64),
            ),
            radius: sample_range(&mut rng, spec.crater_radius),
            depth: sample_range(&mut rng, spec.crater_depth),
        };
        let reach = (1.0 + RIM_WIDTH_RATIO) * crater.radius / spec.pixel_size;
        let x0 = (crater.center.0 - reach).floor().max(0.0) as usize;
        let x1 = ((crater.center.0 + reach).ceil() as usize).min(spec.width - 1);
        let y0 = (crater.center.1 - reach).floor().max(0.0) as usize;
        let y1 = ((crater.center.1 + reach).ceil() as usize).min(spec.height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 - crater.center.0;
                let dy = y as f64 - crater.center.1;
                heights[(x, y)] += crater.profile(dx.hypot(dy) * spec.pixel_size);
            }
        }
        craters.push(crater);
    }

    Ok((Dem::new(heights, spec.pixel_size)?, craters))
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Gaussian random field with power-law amplitude spectrum, scaled to the
/// requested RMS height.
fn fractal_surface(spec: &TerrainSpec, rng: &mut ChaCha8Rng) -> Grid {
    let (w, h) = (spec.width, spec.height);
    let exponent = spec.roughness + 1.0;
    let freq = |i: usize, n: usize| {
        let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        k / n as f64
    };

    let mut spectrum: Vec<Complex<f64>> = Vec::with_capacity(w * h);
    for ky in 0..h {
        for kx in 0..w {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let k = freq(kx, w).hypot(freq(ky, h));
            let amp = if k > 0.0 { k.powf(-exponent) } else { 0.0 };
            spectrum.push(Complex::new(re * amp, im * amp));
        }
    }

    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_inverse(w);
    for row in spectrum.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_inverse(h);
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = spectrum[y * w + x];
        }
        col_fft.process(&mut column);
        for y in 0..h {
            spectrum[y * w + x] = column[y];
        }
    }

    let mut grid = Grid::from_vec(w, h, spectrum.iter().map(|c| c.re).collect())
        .expect("spectrum has w*h samples");
    let mean = grid.mean();
    let rms = (grid.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / grid.len() as f64).sqrt();
    if rms > 0.0 {
        let scale = spec.fractal_amplitude / rms;
        grid.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = (*v - mean) * scale);
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_spec() -> TerrainSpec {
        TerrainSpec {
            width: 40,
            height: 30,
            crater_count: 0,
            fractal_amplitude: 0.0,
            ..TerrainSpec::default()
        }
    }

    #[test]
    fn no_craters_no_fractal_is_flat() {
        let dem = synth_terrain(&flat_spec()).unwrap();
        assert_eq!(dem.shape(), (40, 30));
        assert!(dem.heights().iter().all(|&z| z == 0.0));
    }

    #[test]
    fn deterministic_for_seed() {
        let spec = TerrainSpec {
            width: 64,
            height: 48,
            seed: 42,
            ..TerrainSpec::default()
        };
        let a = synth_terrain(&spec).unwrap();
        let b = synth_terrain(&spec).unwrap();
        assert!(a
            .heights()
            .iter()
            .zip(b.heights().iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = synth_terrain(&TerrainSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_crater_minimum_at_center() {
        let spec = TerrainSpec {
            width: 64,
            height: 64,
            crater_count: 1,
            crater_radius: (10.0, 12.0),
            fractal_amplitude: 0.0,
            seed: 7,
            ..TerrainSpec::default()
        };
        let (dem, craters) = synth_terrain_with_craters(&spec).unwrap();
        // scan the emitted grid for its argmin
        let (mut best, mut arg) = (f64::INFINITY, (0, 0));
        for y in 0..64 {
            for x in 0..64 {
                if dem.heights()[(x, y)] < best {
                    best = dem.heights()[(x, y)];
                    arg = (x, y);
                }
            }
        }
        let (cx, cy) = craters[0].center;
        assert_eq!(arg, (cx.round() as usize, cy.round() as usize));
    }

    #[test]
    fn fractal_has_requested_rms() {
        let spec = TerrainSpec {
            crater_count: 0,
            fractal_amplitude: 2.5,
            ..TerrainSpec::default()
        };
        let dem = synth_terrain(&spec).unwrap();
        let g = dem.heights();
        let rms = (g.iter().map(|v| v * v).sum::<f64>() / g.len() as f64).sqrt();
        assert!((rms - 2.5).abs() < 1e-9);
        assert!(g.mean().abs() < 1e-9);
    }

    #[test]
    fn profile_is_continuous() {
        let c = Crater {
            center: (0.0, 0.0),
            radius: 10.0,
            depth: 3.0,
        };
        assert_eq!(c.profile(0.0), -3.0);
        assert!((c.profile(10.0 - 1e-9) - c.profile(10.0 + 1e-9)).abs() < 1e-6);
        assert!(c.profile(15.0 - 1e-9).abs() < 1e-6);
        assert_eq!(c.profile(20.0), 0.0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = [
            TerrainSpec { width: 2, ..TerrainSpec::default() },
            TerrainSpec { pixel_size: 0.0, ..TerrainSpec::default() },
            TerrainSpec { crater_radius: (5.0, 1.0), ..TerrainSpec::default() },
            TerrainSpec { crater_radius: (5.0, 500.0), ..TerrainSpec::default() },
            TerrainSpec { roughness: 0.0, ..TerrainSpec::default() },
            TerrainSpec { fractal_amplitude: -1.0, ..TerrainSpec::default() },
        ];
        for spec in bad {
            assert!(synth_terrain(&spec).is_err(), "{spec:?}");
        }
    }
}
