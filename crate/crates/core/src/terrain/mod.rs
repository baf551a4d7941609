//! DEM calculus: finite-difference gradients, surface normals and slope.

mod filter;
mod synth;

pub use filter::{gaussian_blur, lowpass};
pub(crate) use filter::{lowpass_adjoint, lowpass_gram_diagonal};
pub use synth::{synth_terrain, synth_terrain_with_craters, Crater, TerrainSpec};

use crate::error::{invalid, Result};
use crate::grid::Grid;
use crate::photometry::Vec3;

/// Digital elevation model: heights in meters on a square-pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dem {
    heights: Grid,
    pixel_size: f64,
}

impl Dem {
    pub fn new(heights: Grid, pixel_size: f64) -> Result<Self> {
        if heights.width() < 3 || heights.height() < 3 {
            return invalid(format!(
                "DEM must be at least 3x3, got {}x{}",
                heights.width(),
                heights.height()
            ));
        }
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return invalid(format!("pixel size {pixel_size} must be positive"));
        }
        if !heights.all_finite() {
            return invalid("DEM contains non-finite heights");
        }
        Ok(Self {
            heights,
            pixel_size,
        })
    }

    pub fn heights(&self) -> &Grid {
        &self.heights
    }

    pub fn into_heights(self) -> Grid {
        self.heights
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn width(&self) -> usize {
        self.heights.width()
    }

    pub fn height(&self) -> usize {
        self.heights.height()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.heights.shape()
    }

    /// Area of one pixel, `dx·dy`.
    pub fn pixel_area(&self) -> f64 {
        self.pixel_size * self.pixel_size
    }

    pub fn gradient(&self) -> GradientField {
        gradient_field(self)
    }

    /// Same DEM with `offset` meters added everywhere.
    pub fn offset(&self, offset: f64) -> Self {
        Self {
            heights: self.heights.map(|z| z + offset),
            pixel_size: self.pixel_size,
        }
    }
}

/// Surface gradient `(p, q) = (∂z/∂x, ∂z/∂y)`, dimensionless.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub p: Grid,
    pub q: Grid,
}

impl GradientField {
    pub fn new(p: Grid, q: Grid) -> Result<Self> {
        p.check_same_shape(&q)?;
        Ok(Self { p, q })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.p.shape()
    }
}

/// Per-pixel unit surface normals.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    normals: Vec<Vec3>,
}

impl NormalMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> Vec3 {
        self.normals[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[Vec3] {
        &self.normals
    }

    /// Component `c` (0 = x, 1 = y, 2 = z) as a grid.
    pub fn component(&self, c: usize) -> Grid {
        Grid::from_vec(
            self.width,
            self.height,
            self.normals.iter().map(|n| n[c]).collect(),
        )
        .expect("normal map dimensions are consistent")
    }
}

/// Derivative of `values` along x with spacing `h`: central differences in
/// the interior, one-sided at the first and last column.
pub(crate) fn diff_x(values: &Grid, h: f64) -> Grid {
    let (w, ht) = values.shape();
    let mut out = Grid::zeros(w, ht);
    for y in 0..ht {
        let row = values.row(y);
        out[(0, y)] = (row[1] - row[0]) / h;
        for x in 1..w - 1 {
            out[(x, y)] = (row[x + 1] - row[x - 1]) / (2.0 * h);
        }
        out[(w - 1, y)] = (row[w - 1] - row[w - 2]) / h;
    }
    out
}

/// Derivative along y, same stencil as [`diff_x`].
pub(crate) fn diff_y(values: &Grid, h: f64) -> Grid {
    let (w, ht) = values.shape();
    let mut out = Grid::zeros(w, ht);
    for x in 0..w {
        out[(x, 0)] = (values[(x, 1)] - values[(x, 0)]) / h;
        out[(x, ht - 1)] = (values[(x, ht - 1)] - values[(x, ht - 2)]) / h;
    }
    for y in 1..ht - 1 {
        for x in 0..w {
            out[(x, y)] = (values[(x, y + 1)] - values[(x, y - 1)]) / (2.0 * h);
        }
    }
    out
}

/// Transpose of [`diff_x`] as a linear map.
pub(crate) fn diff_x_adjoint(r: &Grid, h: f64) -> Grid {
    let (w, ht) = r.shape();
    let mut out = Grid::zeros(w, ht);
    for y in 0..ht {
        let row = r.row(y);
        out[(1, y)] += row[0] / h;
        out[(0, y)] -= row[0] / h;
        for x in 1..w - 1 {
            let v = row[x] / (2.0 * h);
            out[(x + 1, y)] += v;
            out[(x - 1, y)] -= v;
        }
        out[(w - 1, y)] += row[w - 1] / h;
        out[(w - 2, y)] -= row[w - 1] / h;
    }
    out
}

/// Transpose of [`diff_y`] as a linear map.
pub(crate) fn diff_y_adjoint(r: &Grid, h: f64) -> Grid {
    let (w, ht) = r.shape();
    let mut out = Grid::zeros(w, ht);
    for x in 0..w {
        out[(x, 1)] += r[(x, 0)] / h;
        out[(x, 0)] -= r[(x, 0)] / h;
        out[(x, ht - 1)] += r[(x, ht - 1)] / h;
        out[(x, ht - 2)] -= r[(x, ht - 1)] / h;
    }
    for y in 1..ht - 1 {
        for x in 0..w {
            let v = r[(x, y)] / (2.0 * h);
            out[(x, y + 1)] += v;
            out[(x, y - 1)] -= v;
        }
    }
    out
}

pub fn gradient_field(dem: &Dem) -> GradientField {
    let h = dem.pixel_size();
    GradientField {
        p: diff_x(dem.heights(), h),
        q: diff_y(dem.heights(), h),
    }
}

#[inline]
pub(crate) fn normal_from_slopes(p: f64, q: f64) -> Vec3 {
    let inv = 1.0 / (p * p + q * q + 1.0).sqrt();
    [-p * inv, -q * inv, inv]
}

pub fn normals_from_gradient(gf: &GradientField) -> NormalMap {
    let (width, height) = gf.shape();
    let normals = gf
        .p
        .iter()
        .zip(gf.q.iter())
        .map(|(&p, &q)| normal_from_slopes(p, q))
        .collect();
    NormalMap {
        width,
        height,
        normals,
    }
}

/// Slope angle `atan(√(p²+q²))` in radians.
pub fn slope_map(gf: &GradientField) -> Grid {
    gf.p.zip_map(&gf.q, |p, q| p.hypot(q).atan())
        .expect("gradient components share a shape")
}
