//! Dense voxel grids.
//!
//! All volumes are stored flat with `x` varying fastest, i.e. the voxel at
//! `(x, y, z)` lives at index `x + X * (y + Y * z)`.

use crate::{Error, Result};

/// Grid extent in voxels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Dims {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }

    pub const fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub const fn len(&self) -> usize {
        self.x * self.y * self.z
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.x * (y + self.y * z)
    }

    #[inline]
    pub const fn coords(&self, index: usize) -> (usize, usize, usize) {
        let x = index % self.x;
        let rest = index / self.x;
        (x, rest % self.y, rest / self.y)
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.x, self.y, self.z]
    }

    /// True when `other` fits inside `self` along every axis.
    pub fn contains(&self, other: Dims) -> bool {
        other.x <= self.x && other.y <= self.y && other.z <= self.z
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.x, self.y, self.z)
    }
}

/// Physical voxel size in millimetres along x, y, z.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spacing(pub [f64; 3]);

impl Spacing {
    pub const fn isotropic(mm: f64) -> Self {
        Self([mm, mm, mm])
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "spacing must be positive, got {:?}",
                self.0
            )))
        }
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Self::isotropic(1.0)
    }
}

/// A scalar field over a voxel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    dims: Dims,
    spacing: Spacing,
    data: Vec<T>,
}

/// Per-voxel node ids.
pub type LabelVolume = Volume<u16>;
/// Binary mask.
pub type Mask = Volume<bool>;
/// Real-valued intensities.
pub type Intensity = Volume<f64>;

impl<T: Clone> Volume<T> {
    pub fn filled(dims: Dims, spacing: Spacing, value: T) -> Self {
        Self {
            dims,
            spacing,
            data: vec![value; dims.len()],
        }
    }
}

impl<T> Volume<T> {
    pub fn from_vec(dims: Dims, spacing: Spacing, data: Vec<T>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::ShapeMismatch(format!("{} values for a {dims} grid", data.len())));
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for z in 0..dims.z {
            for y in 0..dims.y {
                for x in 0..dims.x {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { dims, spacing, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn set_spacing(&mut self, spacing: Spacing) {
        self.spacing = spacing;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> &T {
        &self.data[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize, z: usize) -> &mut T {
        let i = self.dims.index(x, y, z);
        &mut self.data[i]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Volume<U> {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Errors unless both volumes share the same grid.
    pub fn check_same_dims<U>(&self, other: &Volume<U>) -> Result<()> {
        if self.dims == other.dims {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "volume dims {} vs {}",
                self.dims, other.dims
            )))
        }
    }
}

impl<T: Copy> Volume<T> {
    /// Copies the sub-block of extent `size` starting at `offset`.
    pub fn crop(&self, offset: [usize; 3], size: Dims) -> Result<Self> {
        let end = Dims::new(offset[0] + size.x, offset[1] + size.y, offset[2] + size.z);
        if !self.dims.contains(end) {
            return Err(Error::ShapeMismatch(format!(
                "crop {size} at {offset:?} exceeds {}",
                self.dims
            )));
        }
        Ok(Self::from_fn(size, self.spacing, |x, y, z| {
            *self.get(x + offset[0], y + offset[1], z + offset[2])
        }))
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}
