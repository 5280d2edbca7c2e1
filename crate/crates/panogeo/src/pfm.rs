//! PFM image files: the portable float map format used to move depth maps
//! and feature planes in and out of the toolkit.
//!
//! A PFM file is a three-line ASCII header followed by raw 32-bit floats:
//!
//! ```text
//! Pf              (or "PF" for three interleaved channels)
//! <width> <height>
//! <scale>         (negative means little-endian payload)
//! <payload: height rows bottom-to-top, width pixels left-to-right>
//! ```
//!
//! In memory an image is [`PfmImage`]: 64-bit planar values in top-to-bottom
//! row order, so converting to [`ErpTensor`] or [`DepthMap`] is a plain
//! copy. Reading widens each 32-bit value exactly; writing narrows back and
//! always emits little-endian with scale -1.0 (the scale's magnitude has no
//! consumer here and is not applied on input). Non-finite payload values
//! are rejected in both directions. Every parse failure reports the byte
//! offset at which the problem was detected.

use std::path::Path;

use crate::sphere::GridShape;
use crate::tensor::{DepthMap, ErpTensor};
use crate::{Error, Result};

/// Header kind, fixing the channel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfmKind {
    /// "Pf": one channel.
    Gray,
    /// "PF": three interleaved channels.
    Rgb,
}

impl PfmKind {
    pub fn channels(self) -> usize {
        match self {
            PfmKind::Gray => 1,
            PfmKind::Rgb => 3,
        }
    }

    fn magic(self) -> &'static [u8] {
        match self {
            PfmKind::Gray => b"Pf",
            PfmKind::Rgb => b"PF",
        }
    }
}

/// A decoded image: finite 64-bit values, planar channel-major layout,
/// rows top-to-bottom (disk order is bottom-to-top; the codec flips).
///
/// Unlike the grid types, width and height may be as small as 1; grid
/// constraints apply only once an image is converted to a tensor or depth
/// map.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    kind: PfmKind,
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl PfmImage {
    /// # Errors
    /// Shape error on zero dimensions or a payload length other than
    /// `channels * width * height`; domain error on non-finite values.
    pub fn new(kind: PfmKind, width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape("image dimensions must be positive".into()));
        }
        if data.len() != kind.channels() * width * height {
            return Err(Error::Shape(format!(
                "{} values for a {}-channel {width}x{height} image",
                data.len(),
                kind.channels()
            )));
        }
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!(
                "image value at flat index {bad} is {}, values must be finite",
                data[bad]
            )));
        }
        Ok(Self {
            kind,
            width,
            height,
            data,
        })
    }

    pub fn kind(&self) -> PfmKind {
        self.kind
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Planar values, channel-major then row-major top-to-bottom.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// # Errors
    /// Shape error if either dimension is below the grid minimum of 2.
    pub fn to_tensor(&self) -> Result<ErpTensor> {
        let shape = GridShape::new(self.height, self.width)?;
        ErpTensor::new(self.kind.channels(), shape, self.data.clone())
    }

    /// # Errors
    /// Format error on a three-channel image; shape error on dimensions
    /// below the grid minimum.
    pub fn to_depth_map(&self) -> Result<DepthMap> {
        if self.kind != PfmKind::Gray {
            return Err(Error::Format {
                msg: "three-channel image where a single-channel depth map was expected".into(),
                offset: Some(0),
            });
        }
        let shape = GridShape::new(self.height, self.width)?;
        DepthMap::new(shape, self.data.clone())
    }

    /// # Errors
    /// Shape error unless the tensor has one or three channels.
    pub fn from_tensor(t: &ErpTensor) -> Result<Self> {
        let kind = match t.channels() {
            1 => PfmKind::Gray,
            3 => PfmKind::Rgb,
            c => {
                return Err(Error::Shape(format!(
                    "{c}-channel tensor cannot be stored; the format holds 1 or 3 channels"
                )))
            }
        };
        Self::new(kind, t.shape().width(), t.shape().height(), t.data().to_vec())
    }

    pub fn from_depth_map(d: &DepthMap) -> Self {
        Self {
            kind: PfmKind::Gray,
            width: d.shape().width(),
            height: d.shape().height(),
            data: d.values().to_vec(),
        }
    }
}

fn format_err(msg: impl Into<String>, offset: usize) -> Error {
    Error::Format {
        msg: msg.into(),
        offset: Some(offset as u64),
    }
}

/// One whitespace-delimited ASCII token starting at `pos`; returns the
/// token and the offset just past it.
fn token(bytes: &[u8], mut pos: usize, what: &str) -> Result<(String, usize)> {
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    let start = pos;
    while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    if start == pos {
        return Err(format_err(format!("missing {what}"), start));
    }
    let text = std::str::from_utf8(&bytes[start..pos])
        .map_err(|_| format_err(format!("{what} is not ASCII"), start))?;
    Ok((text.to_string(), pos))
}

/// Parses a complete file image from bytes, also returning the byte
/// offset at which the payload starts (useful for digesting the payload
/// alone).
///
/// # Errors
/// Format error, carrying the byte offset, for a bad magic, malformed
/// dimensions or scale, truncated or oversized payload, or non-finite
/// payload values.
pub fn parse_pfm_with_offset(bytes: &[u8]) -> Result<(PfmImage, usize)> {
    let (magic, pos) = token(bytes, 0, "format magic")?;
    let kind = match magic.as_str() {
        "Pf" => PfmKind::Gray,
        "PF" => PfmKind::Rgb,
        other => return Err(format_err(format!("unknown format magic {other:?}"), 0)),
    };
    let (width_text, after_w) = token(bytes, pos, "width")?;
    let width: usize = width_text
        .parse()
        .map_err(|_| format_err(format!("invalid width {width_text:?}"), after_w - width_text.len()))?;
    let (height_text, after_h) = token(bytes, after_w, "height")?;
    let height: usize = height_text.parse().map_err(|_| {
        format_err(
            format!("invalid height {height_text:?}"),
            after_h - height_text.len(),
        )
    })?;
    if width == 0 || height == 0 {
        return Err(format_err("dimensions must be positive", after_h));
    }
    let (scale_text, after_s) = token(bytes, after_h, "scale")?;
    let scale: f64 = scale_text.parse().map_err(|_| {
        format_err(
            format!("invalid scale {scale_text:?}"),
            after_s - scale_text.len(),
        )
    })?;
    if !scale.is_finite() || scale == 0.0 {
        return Err(format_err(
            format!("scale must be finite and nonzero, got {scale_text}"),
            after_s - scale_text.len(),
        ));
    }
    let little_endian = scale < 0.0;
    // Exactly one whitespace byte separates the header from the payload.
    if after_s >= bytes.len() || !bytes[after_s].is_ascii_whitespace() {
        return Err(format_err("missing separator before payload", after_s));
    }
    let payload_start = after_s + 1;
    let channels = kind.channels();
    let expected = channels
        .checked_mul(width)
        .and_then(|n| n.checked_mul(height))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| format_err("dimensions overflow the addressable size", after_h))?;
    let available = bytes.len() - payload_start;
    if available < expected {
        return Err(format_err(
            format!("payload holds {available} bytes, expected {expected}"),
            bytes.len(),
        ));
    }
    if available > expected {
        return Err(format_err(
            "trailing bytes after payload",
            payload_start + expected,
        ));
    }
    // Disk rows run bottom-to-top with channels interleaved per pixel;
    // memory is planar top-to-bottom.
    let mut data = vec![0.0f64; channels * width * height];
    for disk_row in 0..height {
        let row = height - 1 - disk_row;
        for col in 0..width {
            for ch in 0..channels {
                let at = payload_start + ((disk_row * width + col) * channels + ch) * 4;
                let raw: [u8; 4] = bytes[at..at + 4].try_into().expect("length checked");
                let bits = if little_endian {
                    u32::from_le_bytes(raw)
                } else {
                    u32::from_be_bytes(raw)
                };
                let value = f32::from_bits(bits);
                if !value.is_finite() {
                    return Err(format_err(
                        format!("non-finite payload value {value}"),
                        at,
                    ));
                }
                data[ch * height * width + row * width + col] = f64::from(value);
            }
        }
    }
    Ok((
        PfmImage {
            kind,
            width,
            height,
            data,
        },
        payload_start,
    ))
}

/// Parses a complete file image from bytes. See [`parse_pfm_with_offset`].
///
/// # Errors
/// As [`parse_pfm_with_offset`].
pub fn parse_pfm(bytes: &[u8]) -> Result<PfmImage> {
    parse_pfm_with_offset(bytes).map(|(img, _)| img)
}

/// Encodes an image: little-endian payload, scale -1.0.
///
/// # Errors
/// Domain error if a value does not fit a 32-bit float's range.
pub fn encode_pfm(img: &PfmImage) -> Result<Vec<u8>> {
    let channels = img.kind.channels();
    let mut out = Vec::with_capacity(32 + img.data.len() * 4);
    out.extend_from_slice(img.kind.magic());
    out.push(b'\n');
    out.extend_from_slice(format!("{} {}\n", img.width, img.height).as_bytes());
    out.extend_from_slice(b"-1.0\n");
    for disk_row in 0..img.height {
        let row = img.height - 1 - disk_row;
        for col in 0..img.width {
            for ch in 0..channels {
                let value = img.data[ch * img.height * img.width + row * img.width + col];
                let narrow = value as f32;
                if !narrow.is_finite() {
                    return Err(Error::Domain(format!(
                        "value {value} at row {row}, column {col} overflows 32-bit storage"
                    )));
                }
                out.extend_from_slice(&narrow.to_bits().to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// # Errors
/// Io error on read failure; format error (with byte offset) on malformed
/// content.
pub fn read_pfm(path: impl AsRef<Path>) -> Result<PfmImage> {
    parse_pfm(&std::fs::read(path)?)
}

/// # Errors
/// As [`read_pfm`], plus shape errors for grids below the 2x2 minimum.
pub fn read_pfm_tensor(path: impl AsRef<Path>) -> Result<ErpTensor> {
    read_pfm(path)?.to_tensor()
}

/// # Errors
/// As [`read_pfm`], plus a format error when the file holds three
/// channels.
pub fn read_pfm_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    read_pfm(path)?.to_depth_map()
}

/// # Errors
/// Domain error on values outside 32-bit range; io error on write
/// failure.
pub fn write_pfm(img: &PfmImage, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_pfm(img)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// # Errors
/// As [`write_pfm`], plus shape errors for channel counts other than 1
/// or 3.
pub fn write_pfm_tensor(t: &ErpTensor, path: impl AsRef<Path>) -> Result<()> {
    write_pfm(&PfmImage::from_tensor(t)?, path)
}

/// # Errors
/// As [`write_pfm`].
pub fn write_pfm_depth(d: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    write_pfm(&PfmImage::from_depth_map(d), path)
}
