//! Binary image and sinogram formats, view export, and atomic file writes.
//!
//! All multi-byte fields are little-endian.
//!
//! ```text
//! LAIM: "LAIM" u32 version u32 size f32[size*size]
//! LASG: "LASG" u32 version u32 num_angles u32 num_detectors
//!       f64 angle_start_deg f64 angle_step_deg f64 source_to_center
//!       f64 center_to_detector f64 detector_pixel_size u32 image_size
//!       f64 image_pixel_size f32[num_angles*num_detectors]
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::FanBeamGeometry;
use crate::image::{Image, Sinogram};

pub const IMAGE_MAGIC: &[u8; 4] = b"LAIM";
pub const SINOGRAM_MAGIC: &[u8; 4] = b"LASG";
pub const FORMAT_VERSION: u32 = 1;

/// Cursor over a byte buffer that reports truncation as a typed error.
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8], format: &'static str) -> Self {
        Self { buf, pos: 0, format }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                format: self.format,
                needed: self.pos.saturating_add(n),
                available: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let found = self.take(4)?;
        if found != expected {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u32) -> Result<()> {
        let found = self.u32()?;
        if found != expected {
            return Err(Error::UnsupportedVersion {
                format: self.format,
                expected,
                found,
            });
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Reads `count` f32 values, checking the length before allocating.
    pub fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let bytes = count.checked_mul(4).ok_or_else(|| self.malformed("element count overflows"))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.malformed("string is not UTF-8"))
    }

    pub fn finish(self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.malformed(&format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }

    pub fn malformed(&self, reason: &str) -> Error {
        Error::Malformed {
            format: self.format,
            reason: reason.to_string(),
        }
    }
}

/// Little-endian append helpers.
pub trait PutLe {
    fn put_u32(&mut self, v: u32);
    fn put_u64(&mut self, v: u64);
    fn put_f64(&mut self, v: f64);
    fn put_f32s(&mut self, v: &[f32]);
    fn put_string(&mut self, s: &str);
}

impl PutLe for Vec<u8> {
    fn put_u32(&mut self, v: u32) {
        self.extend_from_slice(&v.to_le_bytes());
    }
    fn put_u64(&mut self, v: u64) {
        self.extend_from_slice(&v.to_le_bytes());
    }
    fn put_f64(&mut self, v: f64) {
        self.extend_from_slice(&v.to_le_bytes());
    }
    fn put_f32s(&mut self, v: &[f32]) {
        self.reserve(v.len() * 4);
        for x in v {
            self.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn put_string(&mut self, s: &str) {
        self.put_u32(s.len() as u32);
        self.extend_from_slice(s.as_bytes());
    }
}

fn to_u32(what: &str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit in u32")))
}

pub fn encode_image(image: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + image.values().len() * 4);
    out.extend_from_slice(IMAGE_MAGIC);
    out.put_u32(FORMAT_VERSION);
    out.put_u32(to_u32("image size", image.size())?);
    out.put_f32s(image.values());
    Ok(out)
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let mut r = ByteReader::new(bytes, "LAIM");
    r.magic(IMAGE_MAGIC)?;
    r.version(FORMAT_VERSION)?;
    let size = r.u32()? as usize;
    if size == 0 {
        return Err(r.malformed("image size is zero"));
    }
    let count = size.checked_mul(size).ok_or_else(|| r.malformed("image size overflows"))?;
    let values = r.f32s(count)?;
    r.finish()?;
    Image::from_vec(size, values)
}

fn encode_geometry(out: &mut Vec<u8>, g: &FanBeamGeometry) -> Result<()> {
    out.put_u32(to_u32("num_angles", g.num_angles)?);
    out.put_u32(to_u32("num_detectors", g.num_detectors)?);
    out.put_f64(g.angle_start_deg);
    out.put_f64(g.angle_step_deg);
    out.put_f64(g.source_to_center);
    out.put_f64(g.center_to_detector);
    out.put_f64(g.detector_pixel_size);
    out.put_u32(to_u32("image_size", g.image_size)?);
    out.put_f64(g.image_pixel_size);
    Ok(())
}

fn decode_sinogram_header(r: &mut ByteReader<'_>) -> Result<FanBeamGeometry> {
    r.magic(SINOGRAM_MAGIC)?;
    r.version(FORMAT_VERSION)?;
    let g = FanBeamGeometry {
        num_angles: r.u32()? as usize,
        num_detectors: r.u32()? as usize,
        angle_start_deg: r.f64()?,
        angle_step_deg: r.f64()?,
        source_to_center: r.f64()?,
        center_to_detector: r.f64()?,
        detector_pixel_size: r.f64()?,
        image_size: r.u32()? as usize,
        image_pixel_size: r.f64()?,
    };
    g.validate().map_err(|e| r.malformed(&format!("invalid geometry in header: {e}")))?;
    Ok(g)
}

pub fn encode_sinogram(sino: &Sinogram) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(68 + sino.values().len() * 4);
    out.extend_from_slice(SINOGRAM_MAGIC);
    out.put_u32(FORMAT_VERSION);
    encode_geometry(&mut out, sino.geometry())?;
    out.put_f32s(sino.values());
    Ok(out)
}

pub fn decode_sinogram(bytes: &[u8]) -> Result<Sinogram> {
    let mut r = ByteReader::new(bytes, "LASG");
    let g = decode_sinogram_header(&mut r)?;
    let count = g
        .num_angles
        .checked_mul(g.num_detectors)
        .ok_or_else(|| r.malformed("sinogram size overflows"))?;
    let values = r.f32s(count)?;
    r.finish()?;
    Sinogram::from_vec(g, values)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    decode_image(&read_file(path.as_ref())?)
}

pub fn write_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    write_atomic(path.as_ref(), &encode_image(image)?)
}

pub fn read_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    decode_sinogram(&read_file(path.as_ref())?)
}

/// Reads a sinogram and checks that it was acquired with `expected`.
pub fn read_sinogram_expecting(path: impl AsRef<Path>, expected: &FanBeamGeometry) -> Result<Sinogram> {
    let s = read_sinogram(path)?;
    s.check_geometry(expected)?;
    Ok(s)
}

pub fn write_sinogram(path: impl AsRef<Path>, sino: &Sinogram) -> Result<()> {
    write_atomic(path.as_ref(), &encode_sinogram(sino)?)
}

/// Reads only the LASG header.
pub fn probe_sinogram(path: impl AsRef<Path>) -> Result<FanBeamGeometry> {
    use std::io::Read;
    let path = path.as_ref();
    let mut head = Vec::with_capacity(68);
    fs::File::open(path)
        .and_then(|f| f.take(68).read_to_end(&mut head))
        .map_err(|e| Error::io(path, e))?;
    decode_sinogram_header(&mut ByteReader::new(&head, "LASG"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewMode {
    /// Binary PGM with 16-bit samples.
    Pgm16,
    /// 8-bit grayscale PNG.
    Png8,
}

impl std::str::FromStr for ViewMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgm16" | "pgm" => Ok(ViewMode::Pgm16),
            "png8" | "png" => Ok(ViewMode::Png8),
            _ => Err(Error::InvalidArgument(format!("unknown view mode {s:?}"))),
        }
    }
}

fn quantize(v: f32, lo: f64, hi: f64, max: f64) -> f64 {
    let t = if hi > lo { (v as f64 - lo) / (hi - lo) } else { 0.0 };
    (t.clamp(0.0, 1.0) * max).round()
}

/// Encodes `image` for viewing with `window = (lo, hi)` mapped onto the full
/// integer range.
pub fn encode_view(image: &Image, mode: ViewMode, window: (f64, f64)) -> Result<Vec<u8>> {
    let (lo, hi) = window;
    let n = image.size();
    match mode {
        ViewMode::Pgm16 => {
            let mut out = format!("P5\n{n} {n}\n65535\n").into_bytes();
            for &v in image.values() {
                out.extend_from_slice(&(quantize(v, lo, hi, 65535.0) as u16).to_be_bytes());
            }
            Ok(out)
        }
        ViewMode::Png8 => {
            let pixels: Vec<u8> = image.values().iter().map(|&v| quantize(v, lo, hi, 255.0) as u8).collect();
            let mut out = Vec::new();
            {
                let mut enc = png::Encoder::new(&mut out, n as u32, n as u32);
                enc.set_color(png::ColorType::Grayscale);
                enc.set_depth(png::BitDepth::Eight);
                let mut w = enc.write_header()?;
                w.write_image_data(&pixels)?;
            }
            Ok(out)
        }
    }
}

pub fn export_view(image: &Image, path: impl AsRef<Path>, mode: ViewMode, window: (f64, f64)) -> Result<()> {
    write_atomic(path.as_ref(), &encode_view(image, mode, window)?)
}
