//! Multimodal sample assembly: raster I/O, patch slicing, per-modality
//! normalization and the Dirichlet masking sampler.

mod mask;
mod raster;

pub use mask::{dirichlet_mask, uniform_mask, MaskPlan, MaskSampler, ModalityMask};
pub use raster::{read_raster, write_raster, Raster, HEADER_LEN};

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// Side of a training patch in pixels.
pub const PATCH_SIZE: usize = 224;
/// Offset between neighbouring patch origins.
pub const PATCH_STRIDE: usize = 32;
/// Side of one token cell in pixels.
pub const TOKEN_SIZE: usize = 8;
/// Tokens along one side of a patch.
pub const TOKEN_GRID: usize = PATCH_SIZE / TOKEN_SIZE;
/// Tokens per modality per patch.
pub const TOKENS_PER_PATCH: usize = TOKEN_GRID * TOKEN_GRID;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Gray,
    Dem,
    Normals,
    Albedo,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Self::Gray, Self::Dem, Self::Normals, Self::Albedo];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gray => "gray",
            Self::Dem => "dem",
            Self::Normals => "normals",
            Self::Albedo => "albedo",
        }
    }

    pub fn channels(self) -> usize {
        match self {
            Self::Normals => 3,
            _ => 1,
        }
    }

    /// Codebook size used by the tokenizer of this modality.
    pub fn vocab_size(self) -> usize {
        match self {
            Self::Gray => 1536,
            Self::Dem => 2048,
            Self::Normals => 1536,
            Self::Albedo => 1024,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown modality '{s}' (gray|dem|normals|albedo)")))
    }
}

/// Global statistics for the modalities normalized by `(x − mean)/std`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

/// One window cut from a larger raster, with its top-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub x: usize,
    pub y: usize,
    pub raster: Raster,
}

/// Number of windows [`slice_patches`] produces along an axis of length `n`.
pub fn patch_count(n: usize, size: usize, stride: usize) -> usize {
    if size == 0 || stride == 0 || n < size {
        0
    } else {
        (n - size) / stride + 1
    }
}

/// Cuts `size`×`size` windows every `stride` pixels, row-major by origin.
pub fn slice_patches(raster: &Raster, size: usize, stride: usize) -> Result<Vec<Patch>> {
    if size == 0 || stride == 0 {
        return invalid("patch size and stride must be positive");
    }
    if raster.width() < size || raster.height() < size {
        return invalid(format!(
            "{}x{} raster is smaller than a {size}x{size} patch",
            raster.width(),
            raster.height()
        ));
    }
    let nx = patch_count(raster.width(), size, stride);
    let ny = patch_count(raster.height(), size, stride);
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (i * stride, j * stride);
            out.push(Patch {
                x,
                y,
                raster: raster.window(x, y, size, size)?,
            });
        }
    }
    Ok(out)
}

fn channel_mean(values: &[f32]) -> f64 {
    values.iter().map(|&v| v as f64).sum::<f64>() / values.len().max(1) as f64
}

/// Normalizes one patch of `modality`.
///
/// DEMs lose their own mean (a second pass removes the f32 rounding residue),
/// gray and albedo are standardized with the supplied global `stats`, and
/// normals pass through unchanged.
pub fn normalize_modality(raster: &Raster, modality: Modality, stats: Option<NormStats>) -> Result<Raster> {
    let (w, h, c) = (raster.width(), raster.height(), raster.channels());
    let data: Vec<f32> = match modality {
        Modality::Normals => return Ok(raster.clone()),
        Modality::Dem => (0..c)
            .flat_map(|ch| {
                let plane = raster.channel_slice(ch);
                let m = channel_mean(plane);
                let centred: Vec<f32> = plane.iter().map(|&v| (v as f64 - m) as f32).collect();
                let residue = channel_mean(&centred);
                centred
                    .into_iter()
                    .map(move |v| (v as f64 - residue) as f32)
            })
            .collect(),
        Modality::Gray | Modality::Albedo => {
            let Some(NormStats { mean, std }) = stats else {
                return invalid(format!("{modality} normalization needs global mean/std"));
            };
            if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
                return invalid(format!("normalization std must be positive and finite, got {std}"));
            }
            raster
                .as_slice()
                .iter()
                .map(|&v| ((v as f64 - mean) / std) as f32)
                .collect()
        }
    };
    Raster::new(w, h, c, data)
}

/// Co-registered rasters of one patch; absent modalities are `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MultimodalSample {
    pub gray: Option<Raster>,
    pub dem: Option<Raster>,
    pub normals: Option<Raster>,
    pub albedo: Option<Raster>,
}

impl MultimodalSample {
    pub fn get(&self, m: Modality) -> Option<&Raster> {
        match m {
            Modality::Gray => self.gray.as_ref(),
            Modality::Dem => self.dem.as_ref(),
            Modality::Normals => self.normals.as_ref(),
            Modality::Albedo => self.albedo.as_ref(),
        }
    }

    fn slot(&mut self, m: Modality) -> &mut Option<Raster> {
        match m {
            Modality::Gray => &mut self.gray,
            Modality::Dem => &mut self.dem,
            Modality::Normals => &mut self.normals,
            Modality::Albedo => &mut self.albedo,
        }
    }

    /// Checks channel counts and that every present modality shares one shape.
    pub fn validate(&self) -> Result<()> {
        let mut shape = None;
        for m in Modality::ALL {
            let Some(r) = self.get(m) else { continue };
            if r.channels() != m.channels() {
                return invalid(format!("{m} needs {} channel(s), got {}", m.channels(), r.channels()));
            }
            match shape {
                None => shape = Some((r.width(), r.height())),
                Some(s) if s != (r.width(), r.height()) => {
                    return Err(Error::ShapeMismatch {
                        expected: s,
                        actual: (r.width(), r.height()),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Applies [`normalize_modality`] to every present modality.
    pub fn normalized(&self, gray: Option<NormStats>, albedo: Option<NormStats>) -> Result<Self> {
        self.validate()?;
        let mut out = self.clone();
        for m in Modality::ALL {
            let stats = match m {
                Modality::Gray => gray,
                Modality::Albedo => albedo,
                _ => None,
            };
            if let Some(r) = self.get(m) {
                *out.slot(m) = Some(normalize_modality(r, m, stats)?);
            }
        }
        Ok(out)
    }
}
