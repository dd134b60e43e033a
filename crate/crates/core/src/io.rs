//! The `SALTVOL` volume file format.
//!
//! ```text
//! magic    8 bytes  "SALTV001"
//! dims     3 × u32  x, y, z
//! spacing  3 × f32  mm
//! dtype    u8       0 = u16 labels, 1 = f32 intensity
//! payload  x fastest, then y, then z; little-endian
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::volume::{Dims, Intensity, LabelVolume, Spacing, Volume};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SALTV001";
const HEADER_LEN: usize = 8 + 12 + 12 + 1;

#[derive(Clone, Debug, PartialEq)]
pub enum VolumeFile {
    Labels(LabelVolume),
    /// Stored as f32; widened on read.
    Intensity(Intensity),
}

impl VolumeFile {
    pub fn dims(&self) -> Dims {
        match self {
            Self::Labels(v) => v.dims(),
            Self::Intensity(v) => v.dims(),
        }
    }

    pub fn spacing(&self) -> Spacing {
        match self {
            Self::Labels(v) => v.spacing(),
            Self::Intensity(v) => v.spacing(),
        }
    }

    pub fn into_labels(self) -> Result<LabelVolume> {
        match self {
            Self::Labels(v) => Ok(v),
            Self::Intensity(_) => Err(Error::Format("expected a label volume, found intensities".into())),
        }
    }

    pub fn into_intensity(self) -> Result<Intensity> {
        match self {
            Self::Intensity(v) => Ok(v),
            Self::Labels(_) => Err(Error::Format("expected an intensity volume, found labels".into())),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let (dims, spacing, dtype) = match self {
            Self::Labels(v) => (v.dims(), v.spacing(), 0u8),
            Self::Intensity(v) => (v.dims(), v.spacing(), 1u8),
        };
        let mut header = Vec::with_capacity(HEADER_LEN);
        header.extend_from_slice(MAGIC);
        for d in dims.as_array() {
            let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
            header.extend_from_slice(&d.to_le_bytes());
        }
        for s in spacing.0 {
            header.extend_from_slice(&(s as f32).to_le_bytes());
        }
        header.push(dtype);
        w.write_all(&header)?;
        let payload: Vec<u8> = match self {
            Self::Labels(v) => v.as_slice().iter().flat_map(|l| l.to_le_bytes()).collect(),
            Self::Intensity(v) => v.as_slice().iter().flat_map(|&x| (x as f32).to_le_bytes()).collect(),
        };
        w.write_all(&payload)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        if &header[..8] != MAGIC {
            return Err(Error::Format("not a SALTVOL file (bad magic)".into()));
        }
        let u = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let f = |i: usize| f32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let dims = Dims::new(u(8) as usize, u(12) as usize, u(16) as usize);
        let spacing = Spacing([f(20) as f64, f(24) as f64, f(28) as f64]);
        spacing.validate()?;
        let len = dims
            .x
            .checked_mul(dims.y)
            .and_then(|v| v.checked_mul(dims.z))
            .filter(|&v| v > 0 && v <= 1 << 31)
            .ok_or_else(|| Error::Format(format!("unsupported dimensions {dims}")))?;
        match header[32] {
            0 => {
                let mut raw = vec![0u8; len * 2];
                r.read_exact(&mut raw)?;
                let data = raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
                Ok(Self::Labels(Volume::from_vec(dims, spacing, data)?))
            }
            1 => {
                let mut raw = vec![0u8; len * 4];
                r.read_exact(&mut raw)?;
                let data = raw
                    .chunks_exact(4)
                    .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
                    .collect();
                Ok(Self::Intensity(Volume::from_vec(dims, spacing, data)?))
            }
            other => Err(Error::Format(format!("unknown dtype byte {other}"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }
}

pub fn save_labels(path: impl AsRef<Path>, labels: &LabelVolume) -> Result<()> {
    VolumeFile::Labels(labels.clone()).save(path)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    VolumeFile::load(path)?.into_labels()
}

pub fn save_intensity(path: impl AsRef<Path>, intensity: &Intensity) -> Result<()> {
    VolumeFile::Intensity(intensity.clone()).save(path)
}

pub fn load_intensity(path: impl AsRef<Path>) -> Result<Intensity> {
    VolumeFile::load(path)?.into_intensity()
}
