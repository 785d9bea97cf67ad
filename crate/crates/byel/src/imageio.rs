//! 8-bit grayscale PNG storage of benchmark images.

use std::fs;
use std::path::Path;

use byel_core::data::{DatasetManifest, Image};
use image::GrayImage;

use crate::error::{IoContext, Result, RunError};

pub fn save_png(path: &Path, img: &Image) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).ctx(|| format!("creating {}", dir.display()))?;
    }
    let gray = GrayImage::from_raw(img.width() as u32, img.height() as u32, img.to_u8())
        .expect("buffer matches dimensions");
    gray.save(path).map_err(|e| image_err(path, e))
}

pub fn load_png(path: &Path) -> Result<Image> {
    if !path.exists() {
        return Err(RunError::MissingArtifact(path.to_path_buf()));
    }
    let gray = image::open(path).map_err(|e| image_err(path, e))?.into_luma8();
    let (w, h) = gray.dimensions();
    Ok(Image::from_u8(h as usize, w as usize, gray.as_raw())?)
}

/// Loads every image a manifest references, relative to `root`, checking
/// each against `image_size`.
pub fn load_images(root: &Path, manifest: &DatasetManifest, image_size: usize) -> Result<Vec<Image>> {
    manifest
        .entries()
        .iter()
        .map(|e| {
            let img = load_png(&root.join(&e.image))?;
            if img.height() != image_size || img.width() != image_size {
                return Err(RunError::Config(format!(
                    "{} is {}x{}, expected {image_size}x{image_size}",
                    e.image,
                    img.height(),
                    img.width()
                )));
            }
            Ok(img)
        })
        .collect()
}

fn image_err(path: &Path, e: image::ImageError) -> RunError {
    match e {
        image::ImageError::IoError(io) => RunError::io(format!("accessing {}", path.display()), io),
        other => RunError::io(
            format!("decoding {}", path.display()),
            std::io::Error::new(std::io::ErrorKind::InvalidData, other.to_string()),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_lossless_on_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let bytes: Vec<u8> = (0..16 * 16).map(|i| (i * 7 % 256) as u8).collect();
        let img = Image::from_u8(16, 16, &bytes).unwrap();
        let path = dir.path().join("a/b.png");
        save_png(&path, &img).unwrap();
        assert_eq!(load_png(&path).unwrap(), img);
    }

    #[test]
    fn missing_file() {
        let err = load_png(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(matches!(err, RunError::MissingArtifact(_)));
    }
}
