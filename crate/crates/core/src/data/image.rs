use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// Pixels in `[0, 1]`, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::Data(format!(
                "invalid image shape {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Data(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data("pixel values must lie in [0, 1]".into()));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for ch in 0..channels {
                    data.push(f(x, y, ch));
                }
            }
        }
        ImageBuffer::new(width, height, channels, data)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, ch: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + ch]
    }
}

fn scaled(values: impl Iterator<Item = f64>, max: f64) -> Vec<f64> {
    values.map(|v| v / max).collect()
}

/// Decodes a PNG or TIFF file. 8-bit samples are divided by 255, 16-bit
/// samples by 65535; alpha is dropped.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    match ImageFormat::from_path(path) {
        Ok(ImageFormat::Png) | Ok(ImageFormat::Tiff) => {}
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        image::ImageError::Unsupported(_) => Error::UnsupportedFormat(path.to_path_buf()),
        other => Error::CorruptImage {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, data) = match &decoded {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            (1, scaled(decoded.to_luma8().into_raw().into_iter().map(f64::from), 255.0))
        }
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
            (1, scaled(decoded.to_luma16().into_raw().into_iter().map(f64::from), 65535.0))
        }
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            (3, scaled(decoded.to_rgb8().into_raw().into_iter().map(f64::from), 255.0))
        }
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            (3, scaled(decoded.to_rgb16().into_raw().into_iter().map(f64::from), 65535.0))
        }
        _ => (
            3,
            decoded
                .to_rgb32f()
                .into_raw()
                .into_iter()
                .map(|v| f64::from(v).clamp(0.0, 1.0))
                .collect(),
        ),
    };
    ImageBuffer::new(w, h, channels, data).map_err(|e| Error::CorruptImage {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Luminance `0.299 R + 0.587 G + 0.114 B`; single-channel input is
/// returned unchanged.
pub fn to_grayscale(img: &ImageBuffer) -> ImageBuffer {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
        .collect();
    ImageBuffer {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
    }
}

/// Source pixels and their weights for every target pixel when `n` source
/// pixels are averaged down to `m`.
fn area_weights(n: usize, m: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n as f64 / m as f64;
    (0..m)
        .map(|t| {
            let lo = t as f64 * scale;
            let hi = (t + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n);
            (first..last)
                .filter_map(|s| {
                    let overlap = (hi.min((s + 1) as f64) - lo.max(s as f64)).max(0.0);
                    (overlap > 0.0).then_some((s, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Area-averaging (box) resampling to exactly `target_w x target_h`.
pub fn downsample(img: &ImageBuffer, target_w: usize, target_h: usize) -> Result<ImageBuffer> {
    if target_w == 0 || target_h == 0 || target_w > img.width || target_h > img.height {
        return Err(Error::UpsampleRequested {
            width: img.width,
            height: img.height,
            target_w,
            target_h,
        });
    }
    let ch = img.channels;
    let wx = area_weights(img.width, target_w);
    let wy = area_weights(img.height, target_h);
    let mut rows = vec![0.0; target_w * img.height * ch];
    for y in 0..img.height {
        for (tx, weights) in wx.iter().enumerate() {
            for c in 0..ch {
                rows[(y * target_w + tx) * ch + c] =
                    weights.iter().map(|&(x, w)| w * img.get(x, y, c)).sum();
            }
        }
    }
    let mut data = vec![0.0; target_w * target_h * ch];
    for (ty, weights) in wy.iter().enumerate() {
        for tx in 0..target_w {
            for c in 0..ch {
                let v: f64 = weights
                    .iter()
                    .map(|&(y, w)| w * rows[(y * target_w + tx) * ch + c])
                    .sum();
                data[(ty * target_w + tx) * ch + c] = v.clamp(0.0, 1.0);
            }
        }
    }
    ImageBuffer::new(target_w, target_h, ch, data)
}

/// Per-pixel inclusion flags, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl RegionMask {
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        RegionMask {
            width,
            height,
            data,
        }
    }

    /// Middle half of each dimension.
    pub fn centered(width: usize, height: usize) -> Self {
        let (x0, x1) = (width / 4, width / 4 + width.div_ceil(2));
        let (y0, y1) = (height / 4, height / 4 + height.div_ceil(2));
        RegionMask::from_fn(width, height, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y))
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Single-channel image, nonzero pixels included.
    pub fn load(path: &Path) -> Result<Self> {
        let img = to_grayscale(&load_image(path)?);
        Ok(RegionMask {
            width: img.width,
            height: img.height,
            data: img.data.iter().map(|&v| v > 0.0).collect(),
        })
    }

    /// Box-downsampled mask; a target pixel stays included only when every
    /// source pixel under it was included.
    pub fn downsample(&self, target_w: usize, target_h: usize) -> Result<Self> {
        let as_image = ImageBuffer::new(
            self.width,
            self.height,
            1,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )?;
        let small = downsample(&as_image, target_w, target_h)?;
        Ok(RegionMask {
            width: target_w,
            height: target_h,
            data: small.data.iter().map(|&v| v >= 1.0 - 1e-9).collect(),
        })
    }
}

/// Encodes a single-channel image as a 16-bit grayscale PNG.
pub fn encode_png16(img: &ImageBuffer) -> Result<Vec<u8>> {
    let gray = to_grayscale(img);
    let raw: Vec<u16> = gray
        .data
        .iter()
        .map(|&v| (v * 65535.0).round() as u16)
        .collect();
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
        gray.width as u32,
        gray.height as u32,
        raw,
    )
    .expect("buffer length matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    DynamicImage::ImageLuma16(buf)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Data(format!("png encoding failed: {e}")))?;
    Ok(out.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_coefficients() {
        let red = ImageBuffer::from_fn(1, 1, 3, |_, _, c| if c == 0 { 1.0 } else { 0.0 }).unwrap();
        assert!((to_grayscale(&red).data[0] - 0.299).abs() < 1e-15);
        let white = ImageBuffer::from_fn(1, 1, 3, |_, _, _| 1.0).unwrap();
        assert!((to_grayscale(&white).data[0] - 1.0).abs() < 1e-15);
        let gray = ImageBuffer::from_fn(2, 2, 1, |x, y, _| (x + y) as f64 / 2.0).unwrap();
        assert_eq!(to_grayscale(&gray), gray);
    }

    #[test]
    fn downsample_cases() {
        let checker = ImageBuffer::from_fn(2, 2, 1, |x, y, _| ((x + y) % 2) as f64).unwrap();
        assert_eq!(downsample(&checker, 1, 1).unwrap().data, vec![0.5]);
        let flat = ImageBuffer::from_fn(1360, 1024, 1, |_, _, _| 0.3).unwrap();
        let small = downsample(&flat, 272, 205).unwrap();
        assert_eq!((small.width, small.height), (272, 205));
        assert!(small.data.iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert!(matches!(
            downsample(&checker, 3, 1),
            Err(Error::UpsampleRequested { .. })
        ));
    }

    #[test]
    fn fractional_downsample_preserves_mean() {
        let img = ImageBuffer::from_fn(7, 5, 1, |x, y, _| ((x * 3 + y * 5) % 11) as f64 / 10.0)
            .unwrap();
        let small = downsample(&img, 3, 2).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&img.data) - mean(&small.data)).abs() < 1e-12);
    }

    #[test]
    fn centered_mask_covers_middle() {
        let m = RegionMask::centered(8, 4);
        assert!(m.contains(2, 1) && m.contains(5, 2));
        assert!(!m.contains(1, 1) && !m.contains(6, 1) && !m.contains(3, 0));
        assert_eq!(m.data.iter().filter(|&&b| b).count(), 4 * 2);
    }
}
