//! Plane file formats: PFM (32-bit float), PGM (8/16-bit), and a PPM writer
//! for false-colour renders.
//!
//! PFM stores `f32`, so it rounds `f64` samples. For a lossless float file
//! use [`PlaneFormat::Pfd`]: the PFM layout with magic `Pd` and 64-bit
//! samples, bit-exact on roundtrip.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::plane::Plane;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneFormat {
    Pfm,
    Pfd,
    Pgm8,
    Pgm16,
}

impl PlaneFormat {
    pub fn extension(self) -> &'static str {
        match self {
            PlaneFormat::Pfm => "pfm",
            PlaneFormat::Pfd => "pfd",
            PlaneFormat::Pgm8 | PlaneFormat::Pgm16 => "pgm",
        }
    }

    fn maxval(self) -> Option<u32> {
        match self {
            PlaneFormat::Pfm | PlaneFormat::Pfd => None,
            PlaneFormat::Pgm8 => Some(255),
            PlaneFormat::Pgm16 => Some(65535),
        }
    }
}

impl FromStr for PlaneFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pfm" => Ok(PlaneFormat::Pfm),
            "pfd" | "float64" => Ok(PlaneFormat::Pfd),
            "pgm8" | "8" => Ok(PlaneFormat::Pgm8),
            "pgm16" | "16" => Ok(PlaneFormat::Pgm16),
            _ => Err(Error::Lookup {
                kind: "format",
                name: s.to_string(),
            }),
        }
    }
}

fn unsupported(path: &Path, reason: impl Into<String>) -> Error {
    Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Pulls `n` whitespace-separated header tokens, skipping `#` comments, and
/// returns them with the offset just past the single whitespace byte that
/// terminates the last one.
fn header_tokens(bytes: &[u8], n: usize, path: &Path) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(n);
    let mut i = 0;
    while tokens.len() < n {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(unsupported(path, "truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return Err(unsupported(path, "missing pixel data"));
    }
    Ok((tokens, i + 1))
}

fn parse_num<T: FromStr>(token: &str, path: &Path, what: &str) -> Result<T> {
    token.parse().map_err(|_| unsupported(path, format!("bad {what} `{token}`")))
}

/// Reads a single-channel plane, detecting the format from the magic bytes.
/// Integer samples are scaled by `1/maxval`.
pub fn read_plane(path: &Path) -> Result<Plane> {
    let bytes = read_bytes(path)?;
    match bytes.get(..2) {
        Some(b"Pf") => read_float(&bytes, path, 4),
        Some(b"Pd") => read_float(&bytes, path, 8),
        Some(b"P5") => read_pgm(&bytes, path),
        Some(b"PF") => Err(unsupported(path, "colour PFM; expected single-channel `Pf`")),
        Some(b"P6") | Some(b"P3") => Err(unsupported(path, "colour PPM; expected single-channel plane")),
        _ => Err(unsupported(path, "unrecognised magic number")),
    }
}

fn read_float(bytes: &[u8], path: &Path, sample: usize) -> Result<Plane> {
    let (tok, offset) = header_tokens(bytes, 4, path)?;
    let width: usize = parse_num(&tok[1], path, "width")?;
    let height: usize = parse_num(&tok[2], path, "height")?;
    let scale: f64 = parse_num(&tok[3], path, "scale")?;
    if width == 0 || height == 0 || scale == 0.0 {
        return Err(unsupported(path, "zero dimension or scale"));
    }
    let little = scale < 0.0;
    let data = &bytes[offset..];
    if data.len() < width * height * sample {
        return Err(unsupported(path, "pixel data shorter than header dimensions"));
    }
    let mut out = vec![0.0; width * height];
    // Rows are stored bottom to top.
    for (k, chunk) in data.chunks_exact(sample).take(width * height).enumerate() {
        let v = match (sample, little) {
            (4, true) => f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64,
            (4, false) => f32::from_be_bytes(chunk.try_into().expect("4 bytes")) as f64,
            (_, true) => f64::from_le_bytes(chunk.try_into().expect("8 bytes")),
            (_, false) => f64::from_be_bytes(chunk.try_into().expect("8 bytes")),
        };
        let (r, c) = (height - 1 - k / width, k % width);
        out[r * width + c] = v;
    }
    let plane = Plane::new(width, height, out)?;
    if !plane.is_finite() {
        return Err(unsupported(path, "non-finite sample"));
    }
    Ok(plane)
}

fn read_pgm(bytes: &[u8], path: &Path) -> Result<Plane> {
    let (tok, offset) = header_tokens(bytes, 4, path)?;
    let width: usize = parse_num(&tok[1], path, "width")?;
    let height: usize = parse_num(&tok[2], path, "height")?;
    let maxval: u32 = parse_num(&tok[3], path, "maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(unsupported(path, "bad dimensions or maxval"));
    }
    let wide = maxval > 255;
    let n = width * height;
    let data = &bytes[offset..];
    if data.len() < n * if wide { 2 } else { 1 } {
        return Err(unsupported(path, "pixel data shorter than header dimensions"));
    }
    let scale = 1.0 / maxval as f64;
    let out: Vec<f64> = if wide {
        data.chunks_exact(2).take(n).map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 * scale).collect()
    } else {
        data[..n].iter().map(|&b| b as f64 * scale).collect()
    };
    Plane::new(width, height, out)
}

/// Writes a plane. Integer formats reject samples outside `[0, 1]` unless
/// `clip` is set.
pub fn write_plane(path: &Path, plane: &Plane, format: PlaneFormat, clip: bool) -> Result<()> {
    let (w, h) = plane.dims();
    let bytes = match format.maxval() {
        None => {
            let wide = format == PlaneFormat::Pfd;
            let magic = if wide { "Pd" } else { "Pf" };
            let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
            for r in (0..h).rev() {
                for &v in plane.row(r) {
                    if wide {
                        out.extend_from_slice(&v.to_le_bytes());
                    } else {
                        out.extend_from_slice(&(v as f32).to_le_bytes());
                    }
                }
            }
            out
        }
        Some(maxval) => {
            if !clip {
                if let Some((index, &value)) = plane.as_slice().iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::OutOfRange { value, index });
                }
            }
            let mut out = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
            for &v in plane.as_slice() {
                let q = (v.clamp(0.0, 1.0) * maxval as f64).round() as u32;
                if maxval > 255 {
                    out.extend_from_slice(&(q as u16).to_be_bytes());
                } else {
                    out.push(q as u8);
                }
            }
            out
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes an 8-bit binary PPM from row-major RGB triples in `[0, 1]`.
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[[f64; 3]]) -> Result<()> {
    if rgb.len() != width * height {
        return Err(Error::validation(format!("{} pixels for a {width}x{height} image", rgb.len())));
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for px in rgb {
        out.extend(px.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Paths of the three orientation planes of one capture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriplePaths {
    pub i0: PathBuf,
    pub i45: PathBuf,
    pub i90: PathBuf,
}

impl TriplePaths {
    /// `{stem}_i0.{ext}`, `{stem}_i45.{ext}`, `{stem}_i90.{ext}`.
    pub fn from_stem(stem: &Path, ext: &str) -> Self {
        let with = |tag: &str| {
            let mut s = stem.as_os_str().to_os_string();
            s.push(format!("_{tag}.{ext}"));
            PathBuf::from(s)
        };
        Self {
            i0: with("i0"),
            i45: with("i45"),
            i90: with("i90"),
        }
    }

    /// Finds an existing triple for `stem`, trying PFD, PFM and then PGM.
    pub fn resolve(stem: &Path) -> Result<Self> {
        for ext in ["pfd", "pfm", "pgm"] {
            let t = Self::from_stem(stem, ext);
            if t.i0.exists() {
                return Ok(t);
            }
        }
        Err(Error::MissingFile(Self::from_stem(stem, "pfm").i0))
    }

    pub fn as_array(&self) -> [&Path; 3] {
        [&self.i0, &self.i45, &self.i90]
    }
}
