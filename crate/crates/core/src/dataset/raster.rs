//! SFSR: a minimal little-endian float32 raster container.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SFSR" (53 46 53 52)
//!      4     2  version = 1 (u16)
//!      6     4  width (u32)
//!     10     4  height (u32)
//!     14     2  channels (u16)
//!     16     1  dtype = 0 (float32)
//!     17     2  reserved, zero
//!     19     …  width·height·channels f32, planar, row-major per channel
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;

pub const MAGIC: [u8; 4] = *b"SFSR";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;
pub const HEADER_LEN: usize = 19;

/// Multi-channel float32 raster, channel-planar.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return invalid("raster needs at least one channel");
        }
        if width > u32::MAX as usize || height > u32::MAX as usize || channels > u16::MAX as usize {
            return invalid("raster dimensions exceed the SFSR header limits");
        }
        if data.len() != width * height * channels {
            return invalid(format!(
                "raster data has {} samples, expected {width}x{height}x{channels}",
                data.len()
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel raster from a grid (samples rounded to f32).
    pub fn from_grid(grid: &Grid) -> Self {
        Self::from_grids(std::slice::from_ref(grid)).expect("one channel")
    }

    /// Stacks equal-shape grids as channels.
    pub fn from_grids(channels: &[Grid]) -> Result<Self> {
        let Some(first) = channels.first() else {
            return invalid("raster needs at least one channel");
        };
        let mut data = Vec::with_capacity(first.len() * channels.len());
        for g in channels {
            first.check_same_shape(g)?;
            data.extend(g.iter().map(|&v| v as f32));
        }
        Self::new(first.width(), first.height(), channels.len(), data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn channel_slice(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel(&self, c: usize) -> Result<Grid> {
        if c >= self.channels {
            return invalid(format!("channel {c} out of range ({} channels)", self.channels));
        }
        Grid::from_vec(
            self.width,
            self.height,
            self.channel_slice(c).iter().map(|&v| v as f64).collect(),
        )
    }

    pub fn to_grids(&self) -> Vec<Grid> {
        (0..self.channels)
            .map(|c| self.channel(c).expect("channel in range"))
            .collect()
    }

    /// The only channel of a single-channel raster.
    pub fn to_grid(&self) -> Result<Grid> {
        if self.channels != 1 {
            return invalid(format!("expected a single-channel raster, got {}", self.channels));
        }
        self.channel(0)
    }

    /// Copy of a `w`×`h` window of every channel.
    pub fn window(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return invalid(format!(
                "window {w}x{h} at ({x0},{y0}) exceeds {}x{} raster",
                self.width, self.height
            ));
        }
        let mut data = Vec::with_capacity(w * h * self.channels);
        for c in 0..self.channels {
            let plane = self.channel_slice(c);
            for y in y0..y0 + h {
                data.extend_from_slice(&plane[y * self.width + x0..y * self.width + x0 + w]);
            }
        }
        Self::new(w, h, self.channels, data)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.channels as u16).to_le_bytes());
        out.push(DTYPE_F32);
        out.extend_from_slice(&[0, 0]);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes an SFSR byte buffer. Errors carry the byte offset of the
    /// offending field.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, message: String| Error::Format {
            offset: offset as u64,
            message,
        };
        if bytes.len() < HEADER_LEN {
            return Err(fail(
                bytes.len(),
                format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
            ));
        }
        if bytes[0..4] != MAGIC {
            return Err(fail(0, format!("bad magic {:02x?}", &bytes[0..4])));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
        let version = u16_at(4);
        if version != VERSION {
            return Err(fail(4, format!("unsupported version {version}")));
        }
        let width = u32_at(6) as usize;
        let height = u32_at(10) as usize;
        let channels = u16_at(14) as usize;
        if channels == 0 {
            return Err(fail(14, "zero channels".into()));
        }
        let dtype = bytes[16];
        if dtype != DTYPE_F32 {
            return Err(fail(16, format!("unsupported dtype {dtype}")));
        }
        if let Some(i) = (17..HEADER_LEN).find(|&i| bytes[i] != 0) {
            return Err(fail(i, "reserved header bytes must be zero".into()));
        }
        let samples = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| fail(6, "raster dimensions overflow".into()))?;
        let payload = samples
            .checked_mul(4)
            .ok_or_else(|| fail(6, "raster dimensions overflow".into()))?;
        let available = bytes.len() - HEADER_LEN;
        if available < payload {
            return Err(fail(
                bytes.len(),
                format!("truncated payload: {available} of {payload} bytes"),
            ));
        }
        if available > payload {
            return Err(fail(
                HEADER_LEN + payload,
                format!("{} trailing bytes", available - payload),
            ));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }
}

pub fn write_raster(path: impl AsRef<Path>, raster: &Raster) -> Result<()> {
    if raster.data.iter().any(|v| !v.is_finite()) {
        return invalid("refusing to write non-finite samples");
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&raster.encode())?;
    Ok(())
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    Raster::decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_file_is_23_bytes() {
        let r = Raster::new(1, 1, 1, vec![0.0]).unwrap();
        let bytes = r.encode();
        assert_eq!(bytes.len(), 23);
        assert_eq!(&bytes[..4], &[0x53, 0x46, 0x53, 0x52]);
        assert_eq!(Raster::decode(&bytes).unwrap(), r);
    }

    #[test]
    fn header_layout() {
        let r = Raster::new(3, 2, 2, (0..12).map(|v| v as f32).collect()).unwrap();
        let b = r.encode();
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[6..10], &[3, 0, 0, 0]);
        assert_eq!(&b[10..14], &[2, 0, 0, 0]);
        assert_eq!(&b[14..16], &[2, 0]);
        assert_eq!(b[16], 0);
        assert_eq!(&b[17..19], &[0, 0]);
        // planar: second channel starts after width*height samples
        assert_eq!(&b[19 + 6 * 4..19 + 7 * 4], &6f32.to_le_bytes());
    }

    #[test]
    fn corrupt_inputs_report_offsets() {
        let good = Raster::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap().encode();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(Raster::decode(&bad), Err(Error::Format { offset: 0, .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(Raster::decode(&bad), Err(Error::Format { offset: 4, .. })));

        let mut bad = good.clone();
        bad[16] = 1;
        assert!(matches!(Raster::decode(&bad), Err(Error::Format { offset: 16, .. })));

        let mut bad = good.clone();
        bad[18] = 1;
        assert!(matches!(Raster::decode(&bad), Err(Error::Format { offset: 18, .. })));

        let truncated = &good[..good.len() - 1];
        assert!(matches!(Raster::decode(truncated), Err(Error::Format { offset: 34, .. })));
        assert!(matches!(Raster::decode(&good[..10]), Err(Error::Format { offset: 10, .. })));

        let mut long = good.clone();
        long.push(0);
        assert!(matches!(Raster::decode(&long), Err(Error::Format { offset: 35, .. })));
    }

    #[test]
    fn huge_dimensions_do_not_allocate() {
        let mut b = Raster::new(1, 1, 1, vec![0.0]).unwrap().encode();
        b[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        b[10..14].copy_from_slice(&u32::MAX.to_le_bytes());
        b[14..16].copy_from_slice(&u16::MAX.to_le_bytes());
        assert!(Raster::decode(&b).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("sfsr-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("r.sfsr");
        let r = Raster::new(2, 3, 1, vec![-1.5, 0.0, f32::MIN_POSITIVE, 7.25, 1e30, -0.0]).unwrap();
        write_raster(&path, &r).unwrap();
        let back = read_raster(&path).unwrap();
        assert!(r.as_slice().iter().zip(back.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn refuses_non_finite() {
        let r = Raster::new(1, 1, 1, vec![f32::NAN]).unwrap();
        assert!(write_raster(std::env::temp_dir().join("never.sfsr"), &r).is_err());
    }
}
