//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "SALTCKP1"
//! version      u32      1
//! tree hash    32 bytes SHA-256 of the canonical tree text
//! dtype        u8       0 = f32, 1 = f64
//! tensors      u32      count, then per tensor:
//!   name_len   u16
//!   name       utf-8
//!   rank       u8
//!   dims       rank × u32
//!   data       product(dims) values of dtype
//! ```
//!
//! Tensors come in `conv{i}.weight` (`[out, in, 3, 3, 3]`), `conv{i}.bias`
//! (`[out]`) pairs, in layer order.

use std::io::{Read, Write};
use std::path::Path;

use super::net::{Conv3d, Precision, Scalar, TinyNet};
use super::train::Model;
use crate::tree::LabelTree;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SALTCKP1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub tree_hash: [u8; 32],
    pub model: Model,
}

impl Checkpoint {
    pub fn new(model: Model, tree: &LabelTree) -> Self {
        Self {
            tree_hash: tree.fingerprint(),
            model,
        }
    }

    /// Errors unless the checkpoint was trained against `tree`.
    pub fn check_tree(&self, tree: &LabelTree) -> Result<()> {
        if self.tree_hash != tree.fingerprint() {
            return Err(Error::Format("checkpoint was trained on a different tree".into()));
        }
        if self.model.out_channels() != tree.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} output channels, tree has {} nodes",
                self.model.out_channels(),
                tree.len()
            )));
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.tree_hash)?;
        match &self.model {
            Model::F32(net) => write_net(w, 0, net, |v| v.to_le_bytes().to_vec()),
            Model::F64(net) => write_net(w, 1, net, |v| v.to_le_bytes().to_vec()),
        }
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut tree_hash = [0u8; 32];
        r.read_exact(&mut tree_hash)?;
        let model = match read_u8(r)? {
            0 => Model::F32(read_net(r, |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))?),
            1 => Model::F64(read_net(r, |b| {
                f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]])
            })?),
            other => return Err(Error::Format(format!("unknown dtype byte {other}"))),
        };
        Ok(Self { tree_hash, model })
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

fn write_net<T: Scalar>(w: &mut impl Write, dtype: u8, net: &TinyNet<T>, enc: impl Fn(T) -> Vec<u8>) -> Result<()> {
    debug_assert_eq!(dtype, if T::DTYPE == Precision::F32 { 0 } else { 1 });
    w.write_all(&[dtype])?;
    let tensors = net.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, shape, data) in tensors {
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[shape.len() as u8])?;
        for d in shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in data {
            w.write_all(&enc(v))?;
        }
    }
    Ok(())
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

struct Tensor<T> {
    name: String,
    shape: Vec<usize>,
    data: Vec<T>,
}

fn read_tensor<T: Scalar>(r: &mut impl Read, dec: &impl Fn(&[u8]) -> T) -> Result<Tensor<T>> {
    let name_len = read_u16(r)? as usize;
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not utf-8".into()))?;
    let rank = read_u8(r)? as usize;
    let shape = (0..rank)
        .map(|_| read_u32(r).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let count: usize = shape.iter().product();
    // Every parameter tensor in a TinyNet is small; refuse absurd sizes
    // before allocating.
    if count > 1 << 28 {
        return Err(Error::Format(format!("tensor {name} is implausibly large")));
    }
    let width = std::mem::size_of::<T>();
    let mut raw = vec![0u8; count * width];
    r.read_exact(&mut raw)?;
    let data = raw.chunks_exact(width).map(dec).collect();
    Ok(Tensor { name, shape, data })
}

fn read_net<T: Scalar>(r: &mut impl Read, dec: impl Fn(&[u8]) -> T) -> Result<TinyNet<T>> {
    let count = read_u32(r)? as usize;
    if count == 0 || !count.is_multiple_of(2) {
        return Err(Error::Format(format!(
            "expected weight/bias pairs, found {count} tensors"
        )));
    }
    let mut layers = Vec::with_capacity(count / 2);
    for i in 1..=count / 2 {
        let w = read_tensor(r, &dec)?;
        let b = read_tensor(r, &dec)?;
        if w.name != format!("conv{i}.weight") || b.name != format!("conv{i}.bias") {
            return Err(Error::Format(format!(
                "unexpected tensors {:?}, {:?} for layer {i}",
                w.name, b.name
            )));
        }
        let (out, inp) = match w.shape[..] {
            [o, c, 3, 3, 3] => (o, c),
            _ => return Err(Error::Format(format!("{} has shape {:?}", w.name, w.shape))),
        };
        if b.shape != [out] {
            return Err(Error::Format(format!("{} has shape {:?}", b.name, b.shape)));
        }
        layers.push(Conv3d {
            in_channels: inp,
            out_channels: out,
            weight: w.data,
            bias: b.data,
        });
    }
    TinyNet::from_layers(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::fixtures::{flat, t1};

    fn round_trip(ckpt: &Checkpoint) -> Checkpoint {
        let mut buf = Vec::new();
        ckpt.write_to(&mut buf).unwrap();
        Checkpoint::read_from(&mut buf.as_slice()).unwrap()
    }

    #[test]
    fn round_trips_both_precisions() {
        let tree = t1();
        for model in [Model::F32(TinyNet::new(10, 3)), Model::F64(TinyNet::new(10, 4))] {
            let ckpt = Checkpoint::new(model, &tree);
            assert_eq!(round_trip(&ckpt), ckpt);
            ckpt.check_tree(&tree).unwrap();
        }
    }

    #[test]
    fn header_layout() {
        let tree = t1();
        let ckpt = Checkpoint::new(Model::F32(TinyNet::with_plan(&[1, 10], 0)), &tree);
        let mut buf = Vec::new();
        ckpt.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"SALTCKP1");
        assert_eq!(&buf[8..12], &[1, 0, 0, 0]);
        assert_eq!(buf[12..44], tree.fingerprint());
        assert_eq!(buf[44], 0);
        assert_eq!(&buf[45..49], &[2, 0, 0, 0]);
        // weight 10·1·27 + bias 10, f32, plus two headers
        let headers = (2 + 12 + 1 + 5 * 4) + (2 + 10 + 1 + 4);
        assert_eq!(buf.len(), 49 + headers + 4 * (270 + 10));
    }

    #[test]
    fn rejects_other_tree() {
        let ckpt = Checkpoint::new(Model::F64(TinyNet::new(10, 0)), &t1());
        assert!(ckpt.check_tree(&flat(10)).is_err());
    }

    #[test]
    fn rejects_corruption() {
        let ckpt = Checkpoint::new(Model::F32(TinyNet::new(10, 0)), &t1());
        let mut buf = Vec::new();
        ckpt.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Checkpoint::read_from(&mut bad.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[44] = 9;
        assert!(Checkpoint::read_from(&mut bad.as_slice()).is_err());
        assert!(Checkpoint::read_from(&mut &buf[..buf.len() - 1]).is_err());
    }
}
