use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::Tensor;
use crate::error::{Error, Result};
use crate::plane::{Plane, Rect};
use crate::seed;

/// Geometric augmentation applied between face crop and network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Augment {
    /// Side the face crop is first resized to.
    pub resize_to: usize,
    /// Side of the random (training) or centred (evaluation) crop.
    pub crop_to: usize,
    pub horizontal_flip: bool,
}

impl Augment {
    pub fn validate(&self, input_side: usize) -> Result<()> {
        if self.resize_to == 0 || self.crop_to == 0 || input_side == 0 {
            return Err(Error::Parameter("augment sizes must be positive".into()));
        }
        if self.crop_to > self.resize_to {
            return Err(Error::Parameter(format!(
                "crop_to {} exceeds resize_to {}",
                self.crop_to, self.resize_to
            )));
        }
        Ok(())
    }
}

/// Area weights mapping `src` samples onto `dst` samples along one axis.
/// Entry `i` lists `(source index, weight)` with weights summing to 1.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let mut w = Vec::new();
            let start = lo.floor() as usize;
            let end = (hi.ceil() as usize).min(src);
            for j in start..end {
                let overlap = (hi.min((j + 1) as f64) - lo.max(j as f64)).max(0.0);
                if overlap > 0.0 {
                    w.push((j, overlap / scale));
                }
            }
            w
        })
        .collect()
}

/// Resamples a plane by exact area averaging (box filter with fractional
/// pixel coverage). Equal sizes reproduce the input.
pub fn resize_area(plane: &Plane, width: usize, height: usize) -> Result<Plane> {
    if width == 0 || height == 0 {
        return Err(Error::Dimension("resize to an empty plane".into()));
    }
    if plane.dims() == (width, height) {
        return Ok(plane.clone());
    }
    let wx = area_weights(plane.width(), width);
    let wy = area_weights(plane.height(), height);
    // horizontal pass then vertical
    let tmp = Plane::from_fn(width, plane.height(), |x, y| {
        wx[x].iter().map(|&(j, w)| w * plane.get(j, y)).sum()
    });
    Ok(Plane::from_fn(width, height, |x, y| {
        wy[y].iter().map(|&(j, w)| w * tmp.get(x, j)).sum()
    }))
}

/// Face crop resized to the `resize_to` square; the deterministic first half
/// of [`preprocess`], cacheable per image.
pub fn crop_and_resize(image: &Plane, crop: Rect, augment: &Augment) -> Result<Plane> {
    if crop.width == 0 || crop.height == 0 {
        return Err(Error::Dimension(format!("degenerate crop {crop:?}")));
    }
    let face = image.crop(crop)?;
    resize_area(&face, augment.resize_to, augment.resize_to)
}

/// Second half of [`preprocess`]: crop to `crop_to` (random offset and
/// optional flip when training, centred otherwise) and downsample to the
/// network input side.
pub fn finish(
    resized: &Plane,
    augment: &Augment,
    input_side: usize,
    seed: u64,
    training: bool,
) -> Result<Tensor> {
    let slack = augment.resize_to - augment.crop_to;
    let (ox, oy, flip) = if training {
        let mut rng = seed::rng(seed);
        let ox = rng.random_range(0..=slack);
        let oy = rng.random_range(0..=slack);
        let flip = augment.horizontal_flip && rng.random::<bool>();
        (ox, oy, flip)
    } else {
        (slack / 2, slack / 2, false)
    };
    let mut patch = resized.crop(Rect::new(ox, oy, augment.crop_to, augment.crop_to))?;
    if flip {
        let src = patch.clone();
        let w = src.width();
        patch = Plane::from_fn(w, src.height(), |x, y| src.get(w - 1 - x, y));
    }
    let input = resize_area(&patch, input_side, input_side)?;
    Tensor::new(1, input_side, input_side, input.into_data())
}

/// Full preprocessing chain from a frame and its face rectangle to a network
/// input tensor: crop, resize to `resize_to`, crop to `crop_to` (random with
/// optional horizontal flip in training, centred in evaluation), downsample to
/// `input_side`.
pub fn preprocess(
    image: &Plane,
    crop: Rect,
    augment: &Augment,
    input_side: usize,
    seed: u64,
    training: bool,
) -> Result<Tensor> {
    augment.validate(input_side)?;
    let resized = crop_and_resize(image, crop, augment)?;
    finish(&resized, augment, input_side, seed, training)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_aug(side: usize) -> Augment {
        Augment {
            resize_to: side,
            crop_to: side,
            horizontal_flip: true,
        }
    }

    #[test]
    fn evaluation_identity_path() {
        let img = Plane::from_fn(8, 8, |x, y| (x * 8 + y) as f64 / 64.0);
        let t = preprocess(&img, img.full_rect(), &identity_aug(8), 8, 3, false).unwrap();
        assert_eq!(t.data, img.data());
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let img = Plane::from_fn(20, 24, |x, y| ((x * 7 + y * 3) % 11) as f64 / 11.0);
        let aug = Augment {
            resize_to: 16,
            crop_to: 12,
            horizontal_flip: true,
        };
        let r = Rect::new(2, 3, 15, 18);
        let a = preprocess(&img, r, &aug, 8, 99, true).unwrap();
        let b = preprocess(&img, r, &aug, 8, 99, true).unwrap();
        assert_eq!(a, b);
        let differs = (0..20).any(|s| preprocess(&img, r, &aug, 8, s, true).unwrap() != a);
        assert!(differs);
    }

    #[test]
    fn area_downsample_of_affine_gradient_is_block_mean() {
        let f = |x: usize, y: usize| 0.1 + 0.03 * x as f64 + 0.05 * y as f64;
        let img = Plane::from_fn(16, 12, f);
        let half = resize_area(&img, 8, 6).unwrap();
        for y in 0..6 {
            for x in 0..8 {
                let block = (f(2 * x, 2 * y)
                    + f(2 * x + 1, 2 * y)
                    + f(2 * x, 2 * y + 1)
                    + f(2 * x + 1, 2 * y + 1))
                    / 4.0;
                assert!((half.get(x, y) - block).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn area_resize_preserves_mean() {
        let img = Plane::from_fn(13, 9, |x, y| ((x * x + 3 * y) % 7) as f64);
        let r = resize_area(&img, 5, 4).unwrap();
        assert!((r.mean() - img.mean()).abs() < 1e-12);
        let up = resize_area(&img, 26, 18).unwrap();
        assert!((up.mean() - img.mean()).abs() < 1e-12);
    }

    #[test]
    fn flip_mirrors_columns() {
        let img = Plane::from_fn(4, 4, |x, _| x as f64);
        let aug = identity_aug(4);
        // find a seed that flips
        let flipped = (0..64)
            .map(|s| preprocess(&img, img.full_rect(), &aug, 4, s, true).unwrap())
            .find(|t| t.data[0] == 3.0)
            .expect("some seed flips");
        assert_eq!(&flipped.data[..4], &[3.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn degenerate_crop_rejected() {
        let img = Plane::filled(8, 8, 0.0);
        let aug = identity_aug(4);
        assert!(matches!(
            preprocess(&img, Rect::new(0, 0, 0, 4), &aug, 4, 0, false),
            Err(Error::Dimension(_))
        ));
        assert!(preprocess(&img, Rect::new(6, 6, 4, 4), &aug, 4, 0, false).is_err());
        let bad = Augment {
            resize_to: 4,
            crop_to: 5,
            horizontal_flip: false,
        };
        assert!(preprocess(&img, img.full_rect(), &bad, 4, 0, false).is_err());
    }
}
