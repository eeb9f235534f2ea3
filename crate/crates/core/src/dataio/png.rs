//! PNG-backed rasters: depth maps, images, moving masks and instance ids.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::imagery::{Image as Raster, ScalarMap, Units};
use crate::movemask::InstanceMap;

/// KITTI depth PNGs store meters * 256 in 16-bit grayscale; 0 marks an
/// invalid pixel.
pub const KITTI_DEPTH_SCALE: f64 = 256.0;

/// Virtual-KITTI depth PNGs store centimeters in 16-bit grayscale; 65535
/// is the saturation value for sky / beyond range.
pub const VKITTI_DEPTH_SCALE: f64 = 100.0;
const VKITTI_SATURATED: u16 = u16::MAX;

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| match e {
        image::ImageError::IoError(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Format {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    })
}

fn layout_name(img: &DynamicImage) -> &'static str {
    match img {
        DynamicImage::ImageLuma8(_) => "8-bit grayscale",
        DynamicImage::ImageLumaA8(_) => "8-bit grayscale+alpha",
        DynamicImage::ImageRgb8(_) => "8-bit rgb",
        DynamicImage::ImageRgba8(_) => "8-bit rgba",
        DynamicImage::ImageLuma16(_) => "16-bit grayscale",
        DynamicImage::ImageLumaA16(_) => "16-bit grayscale+alpha",
        DynamicImage::ImageRgb16(_) => "16-bit rgb",
        DynamicImage::ImageRgba16(_) => "16-bit rgba",
        DynamicImage::ImageRgb32F(_) => "32-bit float rgb",
        DynamicImage::ImageRgba32F(_) => "32-bit float rgba",
        _ => "unsupported",
    }
}

fn expect_luma16(path: &Path, img: DynamicImage) -> Result<ImageBuffer<Luma<u16>, Vec<u16>>> {
    match img {
        DynamicImage::ImageLuma16(buf) => Ok(buf),
        other => Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!(
                "expected 16-bit single-channel png, found {}",
                layout_name(&other)
            ),
        }),
    }
}

/// Reads a KITTI-convention depth PNG (16-bit, meters = value / 256,
/// value 0 = invalid).
pub fn read_depth_png_kitti(path: &Path) -> Result<ScalarMap> {
    let buf = expect_luma16(path, open(path)?)?;
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let mut data = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for px in buf.pixels() {
        let v = px.0[0];
        if v == 0 {
            data.push(0.0);
            valid.push(false);
        } else {
            data.push(v as f64 / KITTI_DEPTH_SCALE);
            valid.push(true);
        }
    }
    ScalarMap::new(w, h, Units::Meters, data, valid)
}

/// Writes a KITTI-convention depth PNG. Invalid pixels become 0; valid
/// depths are quantized to 1/256 m and saturate at the 16-bit range.
pub fn write_depth_png_kitti(path: &Path, depth: &ScalarMap) -> Result<()> {
    depth.expect_units("write_depth_png_kitti input", Units::Meters)?;
    let (w, h) = (depth.width(), depth.height());
    let mut buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(w as u32, h as u32);
    for v in 0..h {
        for u in 0..w {
            let value = match depth.get(u, v) {
                Some(d) => (d * KITTI_DEPTH_SCALE).round().clamp(0.0, u16::MAX as f64) as u16,
                None => 0,
            };
            buf.put_pixel(u as u32, v as u32, Luma([value]));
        }
    }
    buf.save(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Reads a virtual-KITTI depth PNG (16-bit, meters = value / 100,
/// value 65535 = saturated / beyond range).
pub fn read_depth_png_vkitti(path: &Path) -> Result<ScalarMap> {
    let buf = expect_luma16(path, open(path)?)?;
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let mut data = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for px in buf.pixels() {
        let v = px.0[0];
        if v == VKITTI_SATURATED {
            data.push(0.0);
            valid.push(false);
        } else {
            data.push(v as f64 / VKITTI_DEPTH_SCALE);
            valid.push(true);
        }
    }
    ScalarMap::new(w, h, Units::Meters, data, valid)
}

/// Writes a virtual-KITTI depth PNG. Invalid pixels become the saturation
/// value; valid depths are quantized to 1 cm.
pub fn write_depth_png_vkitti(path: &Path, depth: &ScalarMap) -> Result<()> {
    depth.expect_units("write_depth_png_vkitti input", Units::Meters)?;
    let (w, h) = (depth.width(), depth.height());
    let mut buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(w as u32, h as u32);
    for v in 0..h {
        for u in 0..w {
            let value = match depth.get(u, v) {
                Some(d) => (d * VKITTI_DEPTH_SCALE)
                    .round()
                    .clamp(0.0, (VKITTI_SATURATED - 1) as f64) as u16,
                None => VKITTI_SATURATED,
            };
            buf.put_pixel(u as u32, v as u32, Luma([value]));
        }
    }
    buf.save(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Reads an intensity image (8/16-bit grayscale or rgb) into `[0, 1]`
/// floating values.
pub fn read_image_png(path: &Path) -> Result<Raster> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match &img {
        DynamicImage::ImageLuma8(buf) => {
            (1, buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect())
        }
        DynamicImage::ImageLuma16(buf) => (
            1,
            buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        ),
        DynamicImage::ImageRgb8(buf) => (
            3,
            buf.pixels()
                .flat_map(|p| p.0.iter().map(|&c| c as f64 / 255.0).collect::<Vec<_>>())
                .collect(),
        ),
        DynamicImage::ImageRgb16(buf) => (
            3,
            buf.pixels()
                .flat_map(|p| p.0.iter().map(|&c| c as f64 / 65535.0).collect::<Vec<_>>())
                .collect(),
        ),
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!(
                    "expected 8/16-bit grayscale or rgb png, found {}",
                    layout_name(other)
                ),
            })
        }
    };
    Raster::new(w, h, channels, data)
}

/// Writes an intensity image as a 16-bit PNG (grayscale or rgb), the
/// near-lossless counterpart of [`read_image_png`].
pub fn write_image_png(path: &Path, img: &Raster) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let quantize = |x: f64| (x * 65535.0).round().clamp(0.0, 65535.0) as u16;
    let save: std::result::Result<(), image::ImageError> = match img.channels() {
        1 => {
            let mut buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(w, h);
            for v in 0..img.height() {
                for u in 0..img.width() {
                    buf.put_pixel(u as u32, v as u32, Luma([quantize(img.get(u, v, 0))]));
                }
            }
            buf.save(path)
        }
        _ => {
            let mut buf: ImageBuffer<image::Rgb<u16>, Vec<u16>> = ImageBuffer::new(w, h);
            for v in 0..img.height() {
                for u in 0..img.width() {
                    buf.put_pixel(
                        u as u32,
                        v as u32,
                        image::Rgb([
                            quantize(img.get(u, v, 0)),
                            quantize(img.get(u, v, 1)),
                            quantize(img.get(u, v, 2)),
                        ]),
                    );
                }
            }
            buf.save(path)
        }
    };
    save.map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Reads an 8-bit single-channel moving-mask PNG into a probability map
/// (255 = moving = 1.0).
pub fn read_mask_png(path: &Path) -> Result<ScalarMap> {
    let img = open(path)?;
    let buf = match img {
        DynamicImage::ImageLuma8(buf) => buf,
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!(
                    "expected 8-bit single-channel png, found {}",
                    layout_name(&other)
                ),
            })
        }
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let data = buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
    ScalarMap::new(w, h, Units::Probability, data, vec![true; w * h])
}

/// Writes a moving mask as an 8-bit single-channel PNG, 255 = moving,
/// 0 = static. Probabilities are binarized at 0.5; invalid pixels write
/// as static.
pub fn write_mask_png(path: &Path, mask: &ScalarMap) -> Result<()> {
    mask.expect_units("write_mask_png input", Units::Probability)?;
    let (w, h) = (mask.width(), mask.height());
    let mut buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::new(w as u32, h as u32);
    for v in 0..h {
        for u in 0..w {
            let value = match mask.get(u, v) {
                Some(p) if p >= 0.5 => 255,
                _ => 0,
            };
            buf.put_pixel(u as u32, v as u32, Luma([value]));
        }
    }
    buf.save(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Reads per-pixel instance ids from an 8- or 16-bit single-channel PNG
/// (id 0 = background).
pub fn read_instance_png(path: &Path) -> Result<InstanceMap> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let ids: Vec<u32> = match img {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| p.0[0] as u32).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| p.0[0] as u32).collect(),
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!(
                    "expected 8- or 16-bit single-channel png, found {}",
                    layout_name(&other)
                ),
            })
        }
    };
    InstanceMap::new(w, h, ids)
}
