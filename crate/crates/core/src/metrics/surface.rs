//! Normalized surface Dice.
//!
//! The surface of a mask is the set of foreground voxels with at least one
//! face neighbour in the background (the grid border counts as background).
//! Distances are Euclidean between voxel centres in millimetres.

use crate::volume::{Mask, Spacing};
use crate::{Error, Result};

/// Default NSD tolerance in millimetres.
pub const NSD_TOLERANCE_MM: f64 = 3.0;

/// Voxel coordinates of the surface of `mask`.
pub fn surface_voxels(mask: &Mask) -> Vec<[i64; 3]> {
    let d = mask.dims();
    let inside = |x: i64, y: i64, z: i64| -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < d.x
            && (y as usize) < d.y
            && (z as usize) < d.z
            && *mask.get(x as usize, y as usize, z as usize)
    };
    const FACES: [[i64; 3]; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];
    let mut out = Vec::new();
    for z in 0..d.z as i64 {
        for y in 0..d.y as i64 {
            for x in 0..d.x as i64 {
                if inside(x, y, z) && FACES.iter().any(|f| !inside(x + f[0], y + f[1], z + f[2])) {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Squared physical distance for an integer voxel offset.
#[inline]
pub fn offset_distance_sq(delta: [i64; 3], spacing: Spacing) -> f64 {
    let s = spacing.0;
    let dx = delta[0] as f64 * s[0];
    let dy = delta[1] as f64 * s[1];
    let dz = delta[2] as f64 * s[2];
    dx * dx + dy * dy + dz * dz
}

/// Integer offsets within `tau` mm, nearest first.
fn ball_offsets(spacing: Spacing, tau: f64) -> Vec<[i64; 3]> {
    let r: Vec<i64> = spacing.0.iter().map(|s| (tau / s).floor() as i64 + 1).collect();
    let tau_sq = tau * tau;
    let mut offsets = Vec::new();
    for dz in -r[2]..=r[2] {
        for dy in -r[1]..=r[1] {
            for dx in -r[0]..=r[0] {
                let o = [dx, dy, dz];
                if offset_distance_sq(o, spacing) <= tau_sq {
                    offsets.push(o);
                }
            }
        }
    }
    offsets.sort_by(|a, b| offset_distance_sq(*a, spacing).total_cmp(&offset_distance_sq(*b, spacing)));
    offsets
}

/// Number of `from` points that have a `to` point within `tau`.
fn count_within(from: &[[i64; 3]], to: &[[i64; 3]], target: &Mask, spacing: Spacing, tau: f64) -> usize {
    let tau_sq = tau * tau;
    let offsets = ball_offsets(spacing, tau);
    if offsets.len() >= to.len() {
        return from
            .iter()
            .filter(|a| {
                to.iter()
                    .any(|b| offset_distance_sq([b[0] - a[0], b[1] - a[1], b[2] - a[2]], spacing) <= tau_sq)
            })
            .count();
    }
    // lookup grid of target surface voxels
    let d = target.dims();
    let mut on_surface = vec![false; d.len()];
    for p in to {
        on_surface[d.index(p[0] as usize, p[1] as usize, p[2] as usize)] = true;
    }
    let (dx, dy, dz) = (d.x as i64, d.y as i64, d.z as i64);
    from.iter()
        .filter(|a| {
            offsets.iter().any(|o| {
                let (x, y, z) = (a[0] + o[0], a[1] + o[1], a[2] + o[2]);
                x >= 0
                    && y >= 0
                    && z >= 0
                    && x < dx
                    && y < dy
                    && z < dz
                    && on_surface[d.index(x as usize, y as usize, z as usize)]
            })
        })
        .count()
}

/// Fraction of both surfaces lying within `tau` mm of the other surface.
///
/// Both masks empty gives 1, exactly one empty gives 0.
pub fn nsd(gt: &Mask, pred: &Mask, spacing: Spacing, tau: f64) -> Result<f64> {
    gt.check_same_dims(pred)?;
    spacing.validate()?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tau}")));
    }
    let s_gt = surface_voxels(gt);
    let s_pred = surface_voxels(pred);
    match (s_gt.is_empty(), s_pred.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let gt_close = count_within(&s_gt, &s_pred, pred, spacing, tau);
    let pred_close = count_within(&s_pred, &s_gt, gt, spacing, tau);
    Ok((gt_close + pred_close) as f64 / (s_gt.len() + s_pred.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;

    fn cube(dims: Dims, lo: [usize; 3], hi: [usize; 3]) -> Mask {
        Mask::from_fn(dims, Spacing::default(), |x, y, z| {
            (lo[0]..hi[0]).contains(&x) && (lo[1]..hi[1]).contains(&y) && (lo[2]..hi[2]).contains(&z)
        })
    }

    #[test]
    fn surface_of_solid_cube() {
        let m = cube(Dims::cube(6), [1, 1, 1], [5, 5, 5]);
        // 4^3 cube minus its 2^3 interior
        assert_eq!(surface_voxels(&m).len(), 64 - 8);
        let full = Mask::filled(Dims::cube(3), Spacing::default(), true);
        assert_eq!(surface_voxels(&full).len(), 26);
    }

    #[test]
    fn identical_masks() {
        let m = cube(Dims::cube(8), [2, 2, 2], [6, 6, 6]);
        assert_eq!(nsd(&m, &m, Spacing::isotropic(1.5), 3.0).unwrap(), 1.0);
    }

    #[test]
    fn far_single_voxels() {
        let d = Dims::new(12, 1, 1);
        let a = cube(d, [0, 0, 0], [1, 1, 1]);
        let b = cube(d, [10, 0, 0], [11, 1, 1]);
        assert_eq!(nsd(&a, &b, Spacing::isotropic(1.5), 3.0).unwrap(), 0.0);
    }

    #[test]
    fn shifted_cube() {
        let d = Dims::cube(10);
        let a = cube(d, [2, 2, 2], [7, 7, 7]);
        let b = cube(d, [3, 2, 2], [8, 7, 7]);
        assert_eq!(nsd(&a, &b, Spacing::isotropic(1.5), 3.0).unwrap(), 1.0);
    }

    #[test]
    fn empty_conventions_and_errors() {
        let d = Dims::cube(4);
        let e = Mask::filled(d, Spacing::default(), false);
        let m = cube(d, [1, 1, 1], [2, 2, 2]);
        assert_eq!(nsd(&e, &e, Spacing::default(), 3.0).unwrap(), 1.0);
        assert_eq!(nsd(&e, &m, Spacing::default(), 3.0).unwrap(), 0.0);
        assert_eq!(nsd(&m, &e, Spacing::default(), 3.0).unwrap(), 0.0);
        assert!(nsd(&m, &m, Spacing([1.0, 0.0, 1.0]), 3.0).is_err());
        assert!(nsd(&m, &m, Spacing::default(), 0.0).is_err());
        assert!(nsd(&m, &cube(Dims::cube(5), [0; 3], [1; 3]), Spacing::default(), 1.0).is_err());
    }

    #[test]
    fn ball_is_symmetric_and_sorted() {
        let sp = Spacing([1.5, 1.0, 2.0]);
        let b = ball_offsets(sp, 3.0);
        assert_eq!(b[0], [0, 0, 0]);
        for o in &b {
            assert!(b.contains(&[-o[0], -o[1], -o[2]]));
        }
        assert!(b.contains(&[2, 0, 0]));
        assert!(!b.contains(&[3, 0, 0]));
        assert!(b.contains(&[0, 0, 1]) && !b.contains(&[0, 0, 2]));
    }
}
