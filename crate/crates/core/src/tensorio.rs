//! Latent and mask buffer types plus their on-disk formats.
//!
//! Two in-memory value types live here: [`LatentVideo`] (an `N x C x h x w`
//! real buffer in frame, channel, row, column order) and [`BoolGrid`]
//! (an `N x h x w` bit grid used for new-perspective regions and foreground
//! masks). Elements are stored as `f32`; IO round-trips are bit-exact.
//! Arithmetic elsewhere in the crate widens to `f64` before accumulating.
//!
//! # LMT container
//!
//! A deliberately minimal binary layout so any consumer can parse it in a
//! few dozen lines:
//!
//! ```text
//! bytes 0..4   magic 4C 4D 54 01          ("LMT" + version 1)
//! bytes 4..24  five u32 little-endian:    kind, N, C, h, w
//! bytes 24..   payload, little-endian     kind 0: N*C*h*w f32
//!                                         kind 1: N*h*w u8 in {0,1}, C = 1
//! ```
//!
//! Files are written to a temporary sibling and renamed into place, so a
//! reader never observes a partial write. Trailing bytes after the payload
//! are rejected.
//!
//! CSV output is plain comma-joined text with an LF terminator per line;
//! real cells carry at least nine significant digits.

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const LMT_MAGIC: [u8; 4] = [0x4C, 0x4D, 0x54, 0x01];
const LMT_HEADER_LEN: usize = 24;
const KIND_LATENT: u32 = 0;
const KIND_BOOL: u32 = 1;

/// An `N x C x h x w` buffer of latent values in frame, channel, row,
/// column order. Construction validates that every element is finite and
/// that the buffer length matches the shape exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVideo {
    n_frames: usize,
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl LatentVideo {
    /// Builds a latent buffer from raw data, validating shape and finiteness.
    pub fn new(
        n_frames: usize,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        check_positive_dims(&[
            ("n_frames", n_frames),
            ("channels", channels),
            ("height", height),
            ("width", width),
        ])?;
        let expected = n_frames * channels * height * width;
        if data.len() != expected {
            return Err(Error::Shape {
                expected: format!("{n_frames}x{channels}x{height}x{width} = {expected} elements"),
                actual: format!("{} elements", data.len()),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                context: format!("latent data element {pos}"),
            });
        }
        Ok(LatentVideo {
            n_frames,
            channels,
            height,
            width,
            data,
        })
    }

    /// All-zero buffer of the given shape.
    pub fn zeros(n_frames: usize, channels: usize, height: usize, width: usize) -> Self {
        LatentVideo {
            n_frames,
            channels,
            height,
            width,
            data: vec![0.0; n_frames * channels * height * width],
        }
    }

    /// Builds a buffer by evaluating `f(frame, channel, row, col)` per element.
    pub fn from_fn(
        n_frames: usize,
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(n_frames * channels * height * width);
        for i in 0..n_frames {
            for c in 0..channels {
                for r in 0..height {
                    for k in 0..width {
                        data.push(f(i, c, r, k));
                    }
                }
            }
        }
        LatentVideo {
            n_frames,
            channels,
            height,
            width,
            data,
        }
    }

    /// Frame count `N`.
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    /// Channel count `C`.
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Latent height `h`.
    pub fn height(&self) -> usize {
        self.height
    }

    /// Latent width `w`.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Shape tuple `(N, C, h, w)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n_frames, self.channels, self.height, self.width)
    }

    /// Human-readable `NxCxhxw` string for error reporting.
    pub fn shape_string(&self) -> String {
        format!(
            "{}x{}x{}x{}",
            self.n_frames, self.channels, self.height, self.width
        )
    }

    /// Flat index of `(frame, channel, row, col)`, all zero-based.
    #[inline]
    pub fn idx(&self, frame: usize, channel: usize, row: usize, col: usize) -> usize {
        ((frame * self.channels + channel) * self.height + row) * self.width + col
    }

    /// Element at `(frame, channel, row, col)`, all zero-based.
    #[inline]
    pub fn get(&self, frame: usize, channel: usize, row: usize, col: usize) -> f32 {
        self.data[self.idx(frame, channel, row, col)]
    }

    /// Overwrites the element at `(frame, channel, row, col)`.
    #[inline]
    pub fn set(&mut self, frame: usize, channel: usize, row: usize, col: usize, value: f32) {
        let i = self.idx(frame, channel, row, col);
        self.data[i] = value;
    }

    /// Read-only view of the flat element buffer.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable view of the flat element buffer. Shape is fixed; callers are
    /// responsible for keeping values finite.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// True when `other` has the identical shape.
    pub fn same_shape(&self, other: &LatentVideo) -> bool {
        self.shape() == other.shape()
    }

    /// Population variance of all elements, accumulated in `f64`.
    pub fn population_variance(&self) -> f64 {
        crate::diagnostics::population_variance(&self.data)
    }
}

/// An `N x h x w` boolean grid in frame, row, column order. Used both for
/// the new-perspective region and for foreground masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolGrid {
    n_frames: usize,
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BoolGrid {
    /// Builds a grid from raw bits, validating the length.
    pub fn new(n_frames: usize, height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        check_positive_dims(&[("n_frames", n_frames), ("height", height), ("width", width)])?;
        let expected = n_frames * height * width;
        if bits.len() != expected {
            return Err(Error::Shape {
                expected: format!("{n_frames}x{height}x{width} = {expected} bits"),
                actual: format!("{} bits", bits.len()),
            });
        }
        Ok(BoolGrid {
            n_frames,
            height,
            width,
            bits,
        })
    }

    /// Grid with every bit set to `value`.
    pub fn filled(n_frames: usize, height: usize, width: usize, value: bool) -> Self {
        BoolGrid {
            n_frames,
            height,
            width,
            bits: vec![value; n_frames * height * width],
        }
    }

    /// Frame count `N`.
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    /// Grid height `h`.
    pub fn height(&self) -> usize {
        self.height
    }

    /// Grid width `w`.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Shape tuple `(N, h, w)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_frames, self.height, self.width)
    }

    /// Flat index of `(frame, row, col)`, all zero-based.
    #[inline]
    pub fn idx(&self, frame: usize, row: usize, col: usize) -> usize {
        (frame * self.height + row) * self.width + col
    }

    /// Bit at `(frame, row, col)`.
    #[inline]
    pub fn get(&self, frame: usize, row: usize, col: usize) -> bool {
        self.bits[self.idx(frame, row, col)]
    }

    /// Sets the bit at `(frame, row, col)`.
    #[inline]
    pub fn set(&mut self, frame: usize, row: usize, col: usize, value: bool) {
        let i = self.idx(frame, row, col);
        self.bits[i] = value;
    }

    /// Read-only view of the flat bit buffer.
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Number of set bits over the whole grid.
    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Number of set bits within one frame.
    pub fn count_true_in_frame(&self, frame: usize) -> usize {
        let base = frame * self.height * self.width;
        self.bits[base..base + self.height * self.width]
            .iter()
            .filter(|&&b| b)
            .count()
    }
}

fn check_positive_dims(dims: &[(&'static str, usize)]) -> Result<()> {
    for &(name, v) in dims {
        if v == 0 {
            return Err(Error::Parameter {
                field: name,
                reason: "must be positive".to_string(),
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// LMT container
// ---------------------------------------------------------------------------

fn push_header(buf: &mut Vec<u8>, kind: u32, n: usize, c: usize, h: usize, w: usize) -> Result<()> {
    buf.extend_from_slice(&LMT_MAGIC);
    for (name, v) in [
        ("kind", kind as usize),
        ("n_frames", n),
        ("channels", c),
        ("height", h),
        ("width", w),
    ] {
        let v32 = u32::try_from(v).map_err(|_| Error::Parameter {
            field: name,
            reason: format!("{v} exceeds the u32 header field"),
        })?;
        buf.extend_from_slice(&v32.to_le_bytes());
    }
    Ok(())
}

/// Writes a latent buffer as an LMT file (kind 0), atomically.
pub fn write_lmt(v: &LatentVideo, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(LMT_HEADER_LEN + v.data.len() * 4);
    push_header(&mut buf, KIND_LATENT, v.n_frames, v.channels, v.height, v.width)?;
    for &x in &v.data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    atomic_write(path, &buf)
}

/// Reads a latent buffer from an LMT file (kind 0).
pub fn read_lmt(path: &Path) -> Result<LatentVideo> {
    let bytes = std::fs::read(path)?;
    let (kind, n, c, h, w) = parse_header(&bytes)?;
    if kind != KIND_LATENT {
        return Err(Error::Format {
            offset: 4,
            detail: format!("expected kind 0 (latent f32), found kind {kind}"),
        });
    }
    let count = checked_element_count(n, c, h, w)?;
    let payload = payload_slice(&bytes, count, 4)?;
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        if !v.is_finite() {
            return Err(Error::Format {
                offset: (LMT_HEADER_LEN + i * 4) as u64,
                detail: format!("non-finite latent value {v}"),
            });
        }
        data.push(v);
    }
    LatentVideo::new(n, c, h, w, data)
}

/// Writes a boolean grid as an LMT file (kind 1, C = 1), atomically.
pub fn write_mask_lmt(g: &BoolGrid, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(LMT_HEADER_LEN + g.bits.len());
    push_header(&mut buf, KIND_BOOL, g.n_frames, 1, g.height, g.width)?;
    buf.extend(g.bits.iter().map(|&b| b as u8));
    atomic_write(path, &buf)
}

/// Reads a boolean grid from an LMT file (kind 1).
pub fn read_mask_lmt(path: &Path) -> Result<BoolGrid> {
    let bytes = std::fs::read(path)?;
    let (kind, n, c, h, w) = parse_header(&bytes)?;
    if kind != KIND_BOOL {
        return Err(Error::Format {
            offset: 4,
            detail: format!("expected kind 1 (bool u8), found kind {kind}"),
        });
    }
    if c != 1 {
        return Err(Error::Format {
            offset: 12,
            detail: format!("bool grids require channels = 1, found {c}"),
        });
    }
    let count = checked_element_count(n, 1, h, w)?;
    let payload = payload_slice(&bytes, count, 1)?;
    let mut bits = Vec::with_capacity(count);
    for (i, &b) in payload.iter().enumerate() {
        match b {
            0 => bits.push(false),
            1 => bits.push(true),
            other => {
                return Err(Error::Format {
                    offset: (LMT_HEADER_LEN + i) as u64,
                    detail: format!("bool payload byte must be 0 or 1, found {other}"),
                });
            }
        }
    }
    BoolGrid::new(n, h, w, bits)
}

fn parse_header(bytes: &[u8]) -> Result<(u32, usize, usize, usize, usize)> {
    if bytes.len() < LMT_HEADER_LEN {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            detail: format!(
                "truncated header: {} bytes present, {LMT_HEADER_LEN} required",
                bytes.len()
            ),
        });
    }
    if bytes[..4] != LMT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            detail: format!(
                "bad magic {:02X} {:02X} {:02X} {:02X}",
                bytes[0], bytes[1], bytes[2], bytes[3]
            ),
        });
    }
    let u32_at = |off: usize| -> u32 {
        u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4-byte field"))
    };
    let kind = u32_at(4);
    if kind != KIND_LATENT && kind != KIND_BOOL {
        return Err(Error::Format {
            offset: 4,
            detail: format!("unknown kind tag {kind}"),
        });
    }
    let fields = [u32_at(8), u32_at(12), u32_at(16), u32_at(20)];
    for (j, &v) in fields.iter().enumerate() {
        if v == 0 {
            return Err(Error::Format {
                offset: (8 + 4 * j) as u64,
                detail: "zero dimension in header".to_string(),
            });
        }
    }
    Ok((
        kind,
        fields[0] as usize,
        fields[1] as usize,
        fields[2] as usize,
        fields[3] as usize,
    ))
}

fn checked_element_count(n: usize, c: usize, h: usize, w: usize) -> Result<usize> {
    n.checked_mul(c)
        .and_then(|x| x.checked_mul(h))
        .and_then(|x| x.checked_mul(w))
        .ok_or(Error::Format {
            offset: 8,
            detail: "header dimensions overflow".to_string(),
        })
}

fn payload_slice(bytes: &[u8], count: usize, elem_size: usize) -> Result<&[u8]> {
    let need = count.checked_mul(elem_size).ok_or(Error::Format {
        offset: 8,
        detail: "payload size overflows".to_string(),
    })?;
    let have = bytes.len() - LMT_HEADER_LEN;
    if have < need {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            detail: format!("truncated payload: {have} bytes present, {need} required"),
        });
    }
    if have > need {
        return Err(Error::Format {
            offset: (LMT_HEADER_LEN + need) as u64,
            detail: format!("{} trailing bytes after payload", have - need),
        });
    }
    Ok(&bytes[LMT_HEADER_LEN..LMT_HEADER_LEN + need])
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

/// One CSV cell. Integers print plain; reals print with at least nine
/// significant digits; text must not contain commas or line breaks.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    /// Integer cell, printed without a decimal point.
    Int(i64),
    /// Real cell, printed with >= 9 significant digits.
    Real(f64),
    /// Short label cell.
    Text(String),
}

impl Cell {
    fn render(&self) -> Result<String> {
        match self {
            Cell::Int(v) => Ok(v.to_string()),
            Cell::Real(v) => Ok(format_real(*v)),
            Cell::Text(s) => {
                if s.contains([',', '\n', '\r']) {
                    return Err(Error::Parameter {
                        field: "csv text cell",
                        reason: format!("contains a comma or line break: {s:?}"),
                    });
                }
                Ok(s.clone())
            }
        }
    }
}

/// Formats a real with at least nine significant digits: fixed-point inside
/// `[1e-3, 1e9)`, scientific outside.
fn format_real(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0.00000000".to_string();
    }
    let a = v.abs();
    if (1e-3..1e9).contains(&a) {
        let leading = a.log10().floor() as i64 + 1;
        let places = (9 - leading).max(0) as usize;
        format!("{v:.places$}")
    } else {
        format!("{v:.8e}")
    }
}

/// Writes a CSV file: one header line, then one line per row, LF-terminated,
/// written atomically. Every row must match the header arity.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for (ri, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::RowArity {
                row: ri,
                expected: header.len(),
                actual: row.len(),
            });
        }
        let cells: Result<Vec<String>> = row.iter().map(Cell::render).collect();
        out.push_str(&cells?.join(","));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}
