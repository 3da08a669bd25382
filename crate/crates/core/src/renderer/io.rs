//! Frame and mask files: 8-bit RGB PNG and binary PGM.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use super::frame::{Frame, Mask};
use crate::error::{Error, Result};
use crate::scalar::Real;

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

/// Maps `[0, 1]` linearly onto `0..=255` with rounding.
pub fn quantize<T: Real>(v: T) -> u8 {
    let x = (v.as_f64().clamp(0.0, 1.0) * 255.0).round();
    x as u8
}

pub fn dequantize<T: Real>(v: u8) -> T {
    T::lit(v as f64 / 255.0)
}

pub fn save_png<T: Real>(frame: &Frame<T>, path: &Path) -> Result<()> {
    let buf: Vec<u8> = frame.pixels.iter().map(|v| quantize(*v)).collect();
    image::save_buffer(
        path,
        &buf,
        frame.width as u32,
        frame.height as u32,
        ExtendedColorType::Rgb8,
    )
    .map_err(|e| image_err(path, e))
}

pub fn load_png<T: Real>(path: &Path) -> Result<Frame<T>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    let pixels = img.into_raw().into_iter().map(dequantize).collect();
    Frame::new(w as usize, h as usize, pixels)
}

pub fn save_pgm(mask: &Mask, path: &Path) -> Result<()> {
    let buf: Vec<u8> = mask.data.iter().map(|b| if *b { 255 } else { 0 }).collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&buf, mask.width as u32, mask.height as u32, ExtendedColorType::L8)
        .map_err(|e| image_err(path, e))
}

/// Loads a grayscale mask; any nonzero sample is foreground.
pub fn load_pgm(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    let (w, h) = img.dimensions();
    Mask::new(w as usize, h as usize, img.into_raw().into_iter().map(|v| v != 0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mask_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mask = Mask::new(37, 23, (0..37 * 23).map(|_| rng.random_bool(0.3)).collect()).unwrap();
        let path = dir.path().join("m.pgm");
        save_pgm(&mask, &path).unwrap();
        assert_eq!(load_pgm(&path).unwrap(), mask);
    }

    #[test]
    fn png_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = Frame::new(9, 5, (0..135).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let path = dir.path().join("f.png");
        save_png(&f, &path).unwrap();
        let back: Frame<f64> = load_png(&path).unwrap();
        assert_eq!((back.width, back.height), (9, 5));
        for (a, b) in f.pixels.iter().zip(&back.pixels) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        // Quantized values survive a second trip unchanged.
        save_png(&back, &path).unwrap();
        assert_eq!(load_png::<f64>(&path).unwrap(), back);
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(load_png::<f64>(Path::new("/nonexistent/x.png")).is_err());
        assert!(load_pgm(Path::new("/nonexistent/x.pgm")).is_err());
    }
}
