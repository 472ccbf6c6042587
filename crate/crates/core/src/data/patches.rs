use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::{ImageBuffer, RegionMask};
use crate::error::{Error, Result};
use crate::model::TrainingSet;
use crate::numerics::{Matrix, Vector};

/// A square sub-image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub size: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Patch {
    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.size + col) * self.channels + ch]
    }

    pub fn dim(&self) -> usize {
        self.size * self.size * self.channels
    }
}

/// The `size x size` block with top-left corner `(x, y)`.
pub fn crop(img: &ImageBuffer, x: usize, y: usize, size: usize) -> Patch {
    let ch = img.channels;
    let mut data = Vec::with_capacity(size * size * ch);
    for row in y..y + size {
        let start = (row * img.width + x) * ch;
        data.extend_from_slice(&img.data[start..start + size * ch]);
    }
    Patch {
        size,
        channels: ch,
        data,
    }
}

/// Subtracts the mean of all values of the patch from every value.
pub fn subtract_patch_mean(patch: &mut Patch) {
    if patch.data.is_empty() {
        return;
    }
    let mean = patch.data.iter().sum::<f64>() / patch.data.len() as f64;
    for v in &mut patch.data {
        *v -= mean;
    }
}

/// Column-major flattening: rows vary fastest, then columns, then channels.
pub fn vectorize_patch(patch: &Patch) -> Vector {
    let mut out = Vec::with_capacity(patch.dim());
    for ch in 0..patch.channels {
        for col in 0..patch.size {
            for row in 0..patch.size {
                out.push(patch.get(row, col, ch));
            }
        }
    }
    Vector::from_vec(out)
}

/// Inverse of [`vectorize_patch`].
pub fn devectorize_patch(v: &Vector, size: usize, channels: usize) -> Result<Patch> {
    if v.len() != size * size * channels {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} is not a {size}x{size}x{channels} patch",
            v.len()
        )));
    }
    let mut data = vec![0.0; v.len()];
    let mut it = v.iter();
    for ch in 0..channels {
        for col in 0..size {
            for row in 0..size {
                data[(row * size + col) * channels + ch] = *it.next().expect("length checked");
            }
        }
    }
    Ok(Patch {
        size,
        channels,
        data,
    })
}

/// Vectorized patches as the columns of a matrix.
pub fn patches_to_matrix(patches: &[Patch]) -> Matrix {
    let d = patches.first().map_or(0, Patch::dim);
    let mut m = Matrix::zeros(d, patches.len());
    for (j, p) in patches.iter().enumerate() {
        m.set_column(j, &vectorize_patch(p));
    }
    m
}

/// Top-left corners whose `size x size` block lies inside the image and,
/// when a mask is given, entirely inside the mask.
pub fn valid_positions(
    img: &ImageBuffer,
    size: usize,
    mask: Option<&RegionMask>,
) -> Result<Vec<(usize, usize)>> {
    if let Some(m) = mask {
        if (m.width, m.height) != (img.width, img.height) {
            return Err(Error::DimensionMismatch(format!(
                "mask is {}x{}, image is {}x{}",
                m.width, m.height, img.width, img.height
            )));
        }
    }
    if size == 0 || size > img.width || size > img.height {
        return Ok(Vec::new());
    }
    let (w, h) = (img.width, img.height);
    // Summed-area table of excluded pixels.
    let mut excluded = vec![0u32; (w + 1) * (h + 1)];
    if let Some(m) = mask {
        for y in 0..h {
            for x in 0..w {
                let out = u32::from(!m.contains(x, y));
                excluded[(y + 1) * (w + 1) + x + 1] = out
                    + excluded[y * (w + 1) + x + 1]
                    + excluded[(y + 1) * (w + 1) + x]
                    - excluded[y * (w + 1) + x];
            }
        }
    }
    let at = |x: usize, y: usize| excluded[y * (w + 1) + x];
    let mut out = Vec::new();
    for y in 0..=h - size {
        for x in 0..=w - size {
            let bad = at(x + size, y + size) + at(x, y) - at(x + size, y) - at(x, y + size);
            if bad == 0 {
                out.push((x, y));
            }
        }
    }
    Ok(out)
}

/// `n` patches drawn uniformly, with replacement, over the valid placements.
pub fn extract_random_patches(
    img: &ImageBuffer,
    n: usize,
    size: usize,
    mask: Option<&RegionMask>,
    seed: u64,
) -> Result<Vec<Patch>> {
    let positions = valid_positions(img, size, mask)?;
    if positions.is_empty() {
        return Err(Error::NoValidPlacement);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let (x, y) = positions[rng.random_range(0..positions.len())];
            crop(img, x, y, size)
        })
        .collect())
}

/// Non-overlapping patches in row-major grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBatch {
    pub rows: usize,
    pub cols: usize,
    pub patches: Vec<Patch>,
}

impl PatchBatch {
    pub fn to_matrix(&self) -> Matrix {
        patches_to_matrix(&self.patches)
    }
}

/// Tiles the image with `size x size` patches; the right and bottom
/// remainders are dropped.
pub fn extract_grid_patches(img: &ImageBuffer, size: usize) -> Result<PatchBatch> {
    let cols = img.width.checked_div(size).unwrap_or(0);
    let rows = img.height.checked_div(size).unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(Error::ImageTooSmall {
            width: img.width,
            height: img.height,
            size,
        });
    }
    let mut patches = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            patches.push(crop(img, j * size, i * size, size));
        }
    }
    Ok(PatchBatch {
        rows,
        cols,
        patches,
    })
}

/// Stacks per-class patch lists into a training set.
pub fn build_training_set(per_class: &[Vec<Patch>], labels: Vec<String>) -> Result<TrainingSet> {
    if per_class.is_empty() {
        return Err(Error::InsufficientData("no classes".into()));
    }
    let d = per_class.iter().flatten().next().map(Patch::dim);
    let mut mats = Vec::with_capacity(per_class.len());
    for (c, patches) in per_class.iter().enumerate() {
        if patches.is_empty() {
            return Err(Error::EmptyClass(c));
        }
        if patches.iter().any(|p| Some(p.dim()) != d) {
            return Err(Error::DimensionMismatch(format!("class {c} mixes patch shapes")));
        }
        mats.push(patches_to_matrix(patches));
    }
    TrainingSet::new(mats, labels)
}

/// Per-image seed derived from the master seed and a stable key such as the
/// image path, independent of processing order.
pub fn derive_seed(master: u64, key: &str) -> u64 {
    // FNV-1a, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h ^ master.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
