//! Synthetic nested-anatomy volumes on the thorax label tree.
//!
//! A body ellipsoid holds a thoracic cavity, which holds two lungs and a
//! mediastinum box. Each region is clipped to its parent, so nesting holds by
//! construction; the remainder of each parent becomes its "other" leaf.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tree::LabelTree;
use crate::volume::{Dims, Intensity, LabelVolume, Mask, Spacing};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhantomConfig {
    pub dims: Dims,
    pub spacing: Spacing,
    /// Standard deviation of the additive Gaussian noise in HU.
    pub noise_sigma: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            dims: Dims::cube(48),
            spacing: Spacing::isotropic(1.5),
            noise_sigma: 20.0,
        }
    }
}

/// Leaves painted by the generator with their mean intensity (HU).
pub const LEAF_INTENSITIES: [(&str, f64); 6] = [
    ("background", -1000.0),
    ("lung_left", -600.0),
    ("lung_right", -200.0),
    ("other_thx", 200.0),
    ("mediastinum", 600.0),
    ("other_body", 1000.0),
];

/// Internal regions whose construction masks are kept for auditing.
pub const REGIONS: [&str; 3] = ["body", "thoracic_cavity", "lungs"];

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub intensity: Intensity,
    pub labels: LabelVolume,
    pub spacing: Spacing,
    pub seed: u64,
    /// Construction masks of [`REGIONS`], in that order.
    pub regions: Vec<(String, Mask)>,
}

struct Ellipsoid {
    center: [f64; 3],
    radii: [f64; 3],
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.radii[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }
}

fn resolve(tree: &LabelTree, name: &str) -> Result<usize> {
    tree.find(name)
        .ok_or_else(|| Error::InvalidArgument(format!("phantom tree lacks node {name:?}")))
}

/// Checks that `tree` contains the regions the generator paints, nested the
/// way the generator nests them.
fn check_tree(tree: &LabelTree) -> Result<[u16; 6]> {
    let mut ids = [0u16; 6];
    for (slot, (name, _)) in ids.iter_mut().zip(LEAF_INTENSITIES) {
        let id = resolve(tree, name)?;
        if !tree.is_leaf(id) {
            return Err(Error::InvalidArgument(format!("phantom node {name:?} must be a leaf")));
        }
        *slot = u16::try_from(id).map_err(|_| Error::InvalidArgument("node id exceeds 16 bits".into()))?;
    }
    let nesting = [
        ("body", "thoracic_cavity"),
        ("body", "other_body"),
        ("thoracic_cavity", "lungs"),
        ("thoracic_cavity", "mediastinum"),
        ("thoracic_cavity", "other_thx"),
        ("lungs", "lung_left"),
        ("lungs", "lung_right"),
    ];
    for (outer, inner) in nesting {
        if !tree.is_ancestor_or_self(resolve(tree, outer)?, resolve(tree, inner)?) {
            return Err(Error::InvalidArgument(format!("{inner:?} must lie under {outer:?}")));
        }
    }
    if tree.is_ancestor_or_self(resolve(tree, "body")?, resolve(tree, "background")?) {
        return Err(Error::InvalidArgument("background must lie outside body".into()));
    }
    Ok(ids)
}

pub fn generate_phantom(config: &PhantomConfig, tree: &LabelTree, seed: u64) -> Result<Phantom> {
    config.spacing.validate()?;
    let d = config.dims;
    if d.x < 16 || d.y < 16 || d.z < 8 {
        return Err(Error::InvalidArgument(format!(
            "regions cannot nest in a {d} grid (need at least 16x16x8)"
        )));
    }
    if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument("noise sigma must be non-negative".into()));
    }
    let ids = check_tree(tree)?;
    let [background, lung_left, lung_right, other_thx, mediastinum, other_body] = ids;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |scale: f64| 1.0 + rng.random_range(-scale..scale);
    let half = [d.x as f64 / 2.0, d.y as f64 / 2.0, d.z as f64 / 2.0];
    let body = Ellipsoid {
        center: [half[0] * jitter(0.04), half[1] * jitter(0.04), half[2] * jitter(0.04)],
        radii: [
            0.86 * half[0] * jitter(0.05),
            0.72 * half[1] * jitter(0.05),
            0.9 * half[2] * jitter(0.05),
        ],
    };
    let thorax = Ellipsoid {
        center: [
            body.center[0],
            body.center[1] * jitter(0.03),
            body.center[2] * jitter(0.05),
        ],
        radii: [0.78 * body.radii[0], 0.75 * body.radii[1], 0.7 * body.radii[2]],
    };
    let lung_r = [
        0.36 * thorax.radii[0] * jitter(0.08),
        0.72 * thorax.radii[1] * jitter(0.08),
        0.8 * thorax.radii[2],
    ];
    let lung_dx = 0.5 * thorax.radii[0] * jitter(0.05);
    let left = Ellipsoid {
        center: [thorax.center[0] - lung_dx, thorax.center[1], thorax.center[2]],
        radii: lung_r,
    };
    let right = Ellipsoid {
        center: [thorax.center[0] + lung_dx, thorax.center[1], thorax.center[2]],
        radii: lung_r,
    };
    let med_half = [0.24 * thorax.radii[0], 0.45 * thorax.radii[1], 0.55 * thorax.radii[2]];

    let dims = d;
    let mut labels = LabelVolume::filled(dims, config.spacing, background);
    let mut region_masks: Vec<Mask> = REGIONS
        .iter()
        .map(|_| Mask::filled(dims, config.spacing, false))
        .collect();
    for z in 0..d.z {
        for y in 0..d.y {
            for x in 0..d.x {
                let p = [x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5];
                let i = dims.index(x, y, z);
                if !body.contains(p) {
                    continue;
                }
                region_masks[0].as_mut_slice()[i] = true;
                if !thorax.contains(p) {
                    labels.as_mut_slice()[i] = other_body;
                    continue;
                }
                region_masks[1].as_mut_slice()[i] = true;
                let in_left = left.contains(p) && p[0] < thorax.center[0] - med_half[0];
                let in_right = right.contains(p) && p[0] > thorax.center[0] + med_half[0];
                let in_med = (0..3).all(|a| (p[a] - thorax.center[a]).abs() <= med_half[a]);
                labels.as_mut_slice()[i] = if in_left {
                    lung_left
                } else if in_right {
                    lung_right
                } else if in_med {
                    mediastinum
                } else {
                    other_thx
                };
                if in_left || in_right {
                    region_masks[2].as_mut_slice()[i] = true;
                }
            }
        }
    }

    for (leaf, (name, _)) in ids.iter().zip(LEAF_INTENSITIES) {
        if !labels.as_slice().contains(leaf) {
            return Err(Error::InvalidArgument(format!("region {name:?} is empty at {d}")));
        }
    }

    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mean_of = |label: u16| {
        let k = ids.iter().position(|&id| id == label).expect("painted leaf");
        LEAF_INTENSITIES[k].1
    };
    let intensity_values: Vec<f64> = labels
        .as_slice()
        .iter()
        .map(|&l| mean_of(l) + noise.sample(&mut rng))
        .collect();
    let intensity = Intensity::from_vec(dims, config.spacing, intensity_values)?;

    Ok(Phantom {
        intensity,
        labels,
        spacing: config.spacing,
        seed,
        regions: REGIONS.iter().map(|s| s.to_string()).zip(region_masks).collect(),
    })
}
