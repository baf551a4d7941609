//! Forward model: reflectance images from a DEM, an albedo map and a
//! distant-source illumination geometry.

use crate::error::{invalid, Result};
use crate::grid::Grid;
use crate::photometry::{dot, hapke_from_cosines, HapkeParams, IlluminationGeometry, Vec3};
use crate::terrain::{gradient_field, normal_from_slopes, Dem, GradientField};

/// Illumination vector used to shade DEMs before SSIM scoring.
pub const SSIM_LIGHT: Vec3 = [0.5, 0.0, 0.4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReflectanceModel {
    Hapke,
    Lambert,
}

impl std::str::FromStr for ReflectanceModel {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hapke" => Ok(Self::Hapke),
            "lambert" => Ok(Self::Lambert),
            other => invalid(format!("unknown reflectance model '{other}'")),
        }
    }
}

/// Renders the I/F image of `dem` under `illum`. Cast shadows are not modelled;
/// self-shadowed facets are 0.
pub fn render_image(
    dem: &Dem,
    albedo: &Grid,
    illum: &IlluminationGeometry,
    model: ReflectanceModel,
    params: &HapkeParams,
) -> Result<Grid> {
    dem.heights().check_same_shape(albedo)?;
    match model {
        ReflectanceModel::Hapke => {
            params.validate()?;
            if let Some(bad) = albedo.iter().find(|&&w| !(w > 0.0 && w <= 1.0)) {
                return invalid(format!("Hapke albedo {bad} outside (0, 1]"));
            }
        }
        ReflectanceModel::Lambert => {
            if let Some(bad) = albedo.iter().find(|&&a| !(a >= 0.0)) {
                return invalid(format!("Lambert albedo {bad} must be nonnegative"));
            }
        }
    }
    let gf = gradient_field(dem);
    Ok(match model {
        ReflectanceModel::Hapke => render_hapke(&gf, albedo, illum, params),
        ReflectanceModel::Lambert => {
            let s = illum.sun();
            Grid::from_fn(albedo.width(), albedo.height(), |x, y| {
                let n = normal_from_slopes(gf.p[(x, y)], gf.q[(x, y)]);
                albedo[(x, y)] * dot(n, s).max(0.0)
            })
        }
    })
}

/// Hapke image for a gradient field; shared with the SfS energy so that the
/// solver and the renderer agree bit for bit.
pub(crate) fn render_hapke(
    gf: &GradientField,
    albedo: &Grid,
    illum: &IlluminationGeometry,
    params: &HapkeParams,
) -> Grid {
    let (s, v) = (illum.sun(), illum.view());
    let phase_term = params.phase_term(illum.phase());
    Grid::from_fn(albedo.width(), albedo.height(), |x, y| {
        let n = normal_from_slopes(gf.p[(x, y)], gf.q[(x, y)]);
        hapke_from_cosines(dot(n, s), dot(n, v), phase_term, albedo[(x, y)]).0
    })
}

/// Lambertian shading with the raw (unnormalized) `light` vector, min-max
/// rescaled to `[0, 1]` over the tile. Constant tiles map to 0.5.
pub fn lambert_shade(dem: &Dem, light: Vec3) -> Result<Grid> {
    if !light.iter().all(|c| c.is_finite()) || light == [0.0; 3] {
        return invalid(format!("light vector {light:?} must be finite and non-zero"));
    }
    let gf = gradient_field(dem);
    let raw = gf
        .p
        .zip_map(&gf.q, |p, q| dot(normal_from_slopes(p, q), light).max(0.0))?;
    let (lo, hi) = (raw.min(), raw.max());
    let range = hi - lo;
    if range <= f64::EPSILON * hi.abs().max(1.0) {
        return Ok(Grid::filled(raw.width(), raw.height(), 0.5));
    }
    Ok(raw.map(|v| ((v - lo) / range).clamp(0.0, 1.0)))
}
