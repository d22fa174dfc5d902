//! Image files to and from [`GridImage`], on the `[0, 255]` scale.
//!
//! Accepted inputs are 8- or 16-bit grayscale or RGB PNG and binary
//! PGM/PPM. Sixteen-bit samples are scaled by `255 / 65535`. Images with an
//! alpha channel are rejected.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma, Rgb};

use crate::error::{Error, Result};
use crate::grid::GridImage;

/// Bit depth of written files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(Self::Eight),
            16 => Ok(Self::Sixteen),
            other => Err(Error::UnsupportedFormat(format!("{other}-bit output"))),
        }
    }
}

fn format_of(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(ImageFormat::Png),
        "pgm" | "ppm" | "pnm" => Ok(ImageFormat::Pnm),
        _ => Err(Error::UnsupportedFormat(format!(
            "{}: expected .png, .pgm or .ppm",
            path.display()
        ))),
    }
}

fn image_error(e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(e)
            if matches!(e.kind(), std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::InvalidData) =>
        {
            Error::CorruptFile(e.to_string())
        }
        image::ImageError::IoError(e) => Error::Io(e),
        image::ImageError::Unsupported(e) => Error::UnsupportedFormat(e.to_string()),
        other => Error::CorruptFile(other.to_string()),
    }
}

fn planes_from<T: Copy + Into<f64>>(raw: &[T], h: usize, w: usize, channels: usize, scale: f64) -> GridImage {
    let mut data = vec![0.0; raw.len()];
    for c in 0..channels {
        for p in 0..h * w {
            data[c * h * w + p] = raw[p * channels + c].into() * scale;
        }
    }
    GridImage::from_raw(h, w, channels, data)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GridImage> {
    let path = path.as_ref();
    format_of(path)?;
    let reader = ImageReader::open(path)?;
    let decoded = reader
        .with_guessed_format()?
        .decode()
        .map_err(image_error)?;
    if decoded.color().has_alpha() {
        return Err(Error::AlphaNotSupported);
    }
    let (h, w) = (decoded.height() as usize, decoded.width() as usize);
    const SCALE16: f64 = 255.0 / 65535.0;
    Ok(match decoded {
        DynamicImage::ImageLuma8(b) => planes_from(b.as_raw(), h, w, 1, 1.0),
        DynamicImage::ImageRgb8(b) => planes_from(b.as_raw(), h, w, 3, 1.0),
        DynamicImage::ImageLuma16(b) => planes_from(b.as_raw(), h, w, 1, SCALE16),
        DynamicImage::ImageRgb16(b) => planes_from(b.as_raw(), h, w, 3, SCALE16),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{:?} pixels in {}",
                other.color(),
                path.display()
            )))
        }
    })
}

fn quantize(v: f64, max: f64) -> f64 {
    // f64::round rounds half away from zero.
    (v.clamp(0.0, 255.0) * max / 255.0).round()
}

fn interleaved<T>(img: &GridImage, max: f64, cast: impl Fn(f64) -> T) -> Vec<T> {
    let (c, len) = (img.channels(), img.plane_len());
    let mut out = Vec::with_capacity(c * len);
    for p in 0..len {
        for ch in 0..c {
            out.push(cast(quantize(img.channel(ch)[p], max)));
        }
    }
    out
}

/// Writes `img` after clamping to `[0, 255]` and rounding half away from zero.
pub fn save_image(img: &GridImage, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let format = format_of(path)?;
    if img.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (h, w) = (img.height() as u32, img.width() as u32);
    let mismatch = || Error::size("consistent buffer", img.shape_string());
    let result = match (img.channels(), depth) {
        (1, BitDepth::Eight) => ImageBuffer::<Luma<u8>, _>::from_raw(w, h, interleaved(img, 255.0, |v| v as u8))
            .ok_or_else(mismatch)?
            .save_with_format(path, format),
        (3, BitDepth::Eight) => ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, interleaved(img, 255.0, |v| v as u8))
            .ok_or_else(mismatch)?
            .save_with_format(path, format),
        (1, BitDepth::Sixteen) => {
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, interleaved(img, 65535.0, |v| v as u16))
                .ok_or_else(mismatch)?
                .save_with_format(path, format)
        }
        (3, BitDepth::Sixteen) => {
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, interleaved(img, 65535.0, |v| v as u16))
                .ok_or_else(mismatch)?
                .save_with_format(path, format)
        }
        (c, _) => return Err(Error::InvalidChannels(c)),
    };
    result.map_err(image_error)
}

/// Centered `height x width` window of `img`.
pub fn center_crop(img: &GridImage, height: usize, width: usize) -> Result<GridImage> {
    let (m, n) = img.dims();
    if height == 0 || width == 0 || height > m || width > n {
        return Err(Error::size(format!("crop within {m}x{n}"), format!("{height}x{width}")));
    }
    let (i0, j0) = ((m - height) / 2, (n - width) / 2);
    let mut data = Vec::with_capacity(height * width * img.channels());
    for c in 0..img.channels() {
        for i in 0..height {
            let row = &img.channel(c)[(i0 + i) * n + j0..(i0 + i) * n + j0 + width];
            data.extend_from_slice(row);
        }
    }
    Ok(GridImage::from_raw(height, width, img.channels(), data))
}

/// Largest `(M, N)` not exceeding `img`'s size with both sides divisible by `r`.
pub fn divisible_dims(dims: (usize, usize), r: usize) -> (usize, usize) {
    (dims.0 - dims.0 % r, dims.1 - dims.1 % r)
}
