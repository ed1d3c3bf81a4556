//! 8-bit grayscale frames and their PGM (P5) file form.

use std::path::Path;

use image::{imageops::FilterType, ImageBuffer, ImageFormat, Luma};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image must be at least 1x1, got {height}x{width}")]
    Empty { height: usize, width: usize },
    #[error("pixel buffer has {actual} bytes, expected {expected} for {height}x{width}")]
    Length {
        height: usize,
        width: usize,
        expected: usize,
        actual: usize,
    },
    #[error("invalid PGM data: {0}")]
    Decode(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::Empty { height, width });
        }
        if pixels.len() != height * width {
            return Err(ImageError::Length {
                height,
                width,
                expected: height * width,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Resamples so that the shorter side equals `short_side`, keeping the
    /// aspect ratio. Returns a clone when the short side already matches.
    pub fn resize_short_side(&self, short_side: usize) -> GrayImage {
        let short = self.height.min(self.width);
        if short == short_side || short_side == 0 {
            return self.clone();
        }
        let scale = short_side as f64 / short as f64;
        let (new_h, new_w) = if self.height <= self.width {
            (
                short_side,
                ((self.width as f64 * scale).round() as usize).max(1),
            )
        } else {
            (
                ((self.height as f64 * scale).round() as usize).max(1),
                short_side,
            )
        };
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
                .expect("buffer length checked at construction");
        let resized =
            image::imageops::resize(&buf, new_w as u32, new_h as u32, FilterType::Triangle);
        GrayImage {
            height: new_h,
            width: new_w,
            pixels: resized.into_raw(),
        }
    }

    /// Binary PGM (P5) encoding with maxval 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Decodes a PGM file. 16-bit samples are reduced to 8 bits.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self, ImageError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
            .map_err(|e| ImageError::Decode(e.to_string()))?
            .to_luma8();
        let (w, h) = img.dimensions();
        Self::new(h as usize, w as usize, img.into_raw())
    }

    pub fn read_pgm(path: &Path) -> Result<Self, ImageError> {
        let bytes = std::fs::read(path).map_err(|source| ImageError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_pgm(&bytes)
    }

    pub fn write_pgm(&self, path: &Path) -> Result<(), ImageError> {
        std::fs::write(path, self.to_pgm()).map_err(|source| ImageError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length() {
        assert!(matches!(
            GrayImage::new(2, 2, vec![0; 3]),
            Err(ImageError::Length { expected: 4, .. })
        ));
        assert!(GrayImage::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage::from_fn(3, 5, |r, c| (r * 40 + c * 7) as u8).unwrap();
        let back = GrayImage::from_pgm(&img.to_pgm()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_with_comment_header() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 9]);
        let img = GrayImage::from_pgm(&bytes).unwrap();
        assert_eq!((img.height(), img.width()), (1, 2));
        assert_eq!(img.pixels(), &[7, 9]);
    }

    #[test]
    fn garbage_is_decode_error() {
        assert!(matches!(
            GrayImage::from_pgm(b"not an image"),
            Err(ImageError::Decode(_))
        ));
    }

    #[test]
    fn resize_halves_960_short_side() {
        let img = GrayImage::filled(960, 1280, 80).unwrap();
        let small = img.resize_short_side(480);
        assert_eq!((small.height(), small.width()), (480, 640));
        assert!(small.pixels().iter().all(|&p| p == 80));

        let tall = GrayImage::filled(1000, 500, 1)
            .unwrap()
            .resize_short_side(480);
        assert_eq!((tall.height(), tall.width()), (960, 480));
    }
}
