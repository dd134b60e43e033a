//! Intensity normalisation and random cropping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::volume::{Dims, Intensity, LabelVolume};
use crate::{Error, Result};

pub const HU_MIN: f64 = -1024.0;
pub const HU_MAX: f64 = 1024.0;

/// Clamps to `[-1024, 1024]` HU and maps affinely onto `[0, 1]`.
pub fn normalize_value(hu: f64) -> f64 {
    (hu.clamp(HU_MIN, HU_MAX) - HU_MIN) / (HU_MAX - HU_MIN)
}

pub fn normalize_intensity(volume: &Intensity) -> Intensity {
    volume.map(|&v| normalize_value(v))
}

/// Offset of a crop of extent `size`, uniform over all valid positions.
pub fn crop_offset(dims: Dims, size: Dims, rng: &mut impl Rng) -> Result<[usize; 3]> {
    if !dims.contains(size) {
        return Err(Error::InvalidArgument(format!("crop {size} larger than volume {dims}")));
    }
    Ok([
        rng.random_range(0..=dims.x - size.x),
        rng.random_range(0..=dims.y - size.y),
        rng.random_range(0..=dims.z - size.z),
    ])
}

/// Crops image and labels at the same random offset.
pub fn random_crop_with(
    intensity: &Intensity,
    labels: &LabelVolume,
    size: Dims,
    rng: &mut impl Rng,
) -> Result<(Intensity, LabelVolume, [usize; 3])> {
    intensity.check_same_dims(labels)?;
    let offset = crop_offset(intensity.dims(), size, rng)?;
    Ok((intensity.crop(offset, size)?, labels.crop(offset, size)?, offset))
}

/// Seeded variant of [`random_crop_with`].
pub fn random_crop(
    intensity: &Intensity,
    labels: &LabelVolume,
    size: Dims,
    seed: u64,
) -> Result<(Intensity, LabelVolume, [usize; 3])> {
    random_crop_with(intensity, labels, size, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;

    #[test]
    fn normalization_points() {
        assert_eq!(normalize_value(-1024.0), 0.0);
        assert_eq!(normalize_value(1024.0), 1.0);
        assert_eq!(normalize_value(0.0), 0.5);
        assert_eq!(normalize_value(3000.0), 1.0);
        assert_eq!(normalize_value(-5000.0), 0.0);
    }

    fn ramp(d: Dims) -> (Intensity, LabelVolume) {
        (
            Intensity::from_fn(d, Spacing::default(), |x, y, z| (x + 100 * y + 10000 * z) as f64),
            LabelVolume::from_fn(d, Spacing::default(), |x, y, z| (x + 10 * y + 100 * z) as u16),
        )
    }

    #[test]
    fn full_size_crop_is_identity() {
        let (img, lab) = ramp(Dims::new(5, 4, 3));
        let (a, b, off) = random_crop(&img, &lab, img.dims(), 1).unwrap();
        assert_eq!(off, [0, 0, 0]);
        assert_eq!(a, img);
        assert_eq!(b, lab);
    }

    #[test]
    fn same_seed_same_offset_and_aligned() {
        let (img, lab) = ramp(Dims::cube(8));
        let (a, b, off) = random_crop(&img, &lab, Dims::cube(4), 99).unwrap();
        assert_eq!(off, random_crop(&img, &lab, Dims::cube(4), 99).unwrap().2);
        assert_eq!(*a.get(0, 0, 0), (off[0] + 100 * off[1] + 10000 * off[2]) as f64);
        assert_eq!(*b.get(0, 0, 0), (off[0] + 10 * off[1] + 100 * off[2]) as u16);
    }

    #[test]
    fn oversized_crop_fails() {
        let (img, lab) = ramp(Dims::cube(4));
        assert!(random_crop(&img, &lab, Dims::new(5, 1, 1), 0).is_err());
    }

    #[test]
    fn offsets_are_uniform() {
        // 1000 crops of 4³ from 8³: 5 positions per axis, χ² with 4 dof.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = [[0usize; 5]; 3];
        for _ in 0..1000 {
            let off = crop_offset(Dims::cube(8), Dims::cube(4), &mut rng).unwrap();
            for a in 0..3 {
                counts[a][off[a]] += 1;
            }
        }
        for axis in counts {
            let chi2: f64 = axis.iter().map(|&c| (c as f64 - 200.0).powi(2) / 200.0).sum();
            // 99.9th percentile of χ²(4)
            assert!(chi2 < 18.47, "chi2 {chi2}");
        }
    }
}
