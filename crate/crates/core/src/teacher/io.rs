//! Binary network format, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes   "TDSTLNET"
//! version    u32       1
//! output     u8        0 = classifier, 1 = regressor
//! classes    u32       0 for regressors
//! input      u32       input width
//! layers     u32       number of dense layers (hidden + output)
//! scaler     input × f64 mean, then input × f64 scale
//! per layer:
//!   out      u32
//!   in       u32
//!   act      u8        0 = relu, 1 = identity
//!   dropout  f64
//!   weights  out × in f64, row-major
//!   bias     out × f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::net::{Activation, InputScaler, Layer, OutputKind, TeacherNet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TDSTLNET";
pub const VERSION: u32 = 1;

fn corrupt(reason: impl Into<String>) -> Error {
    Error::format("network file", reason)
}

impl TeacherNet {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        match self.output {
            OutputKind::Classifier { classes } => {
                w.write_u8(0)?;
                w.write_u32::<LittleEndian>(classes as u32)?;
            }
            OutputKind::Regressor => {
                w.write_u8(1)?;
                w.write_u32::<LittleEndian>(0)?;
            }
        }
        w.write_u32::<LittleEndian>(self.input_dim() as u32)?;
        w.write_u32::<LittleEndian>(self.layers.len() as u32)?;
        for v in self.scaler.mean.iter().chain(self.scaler.scale.iter()) {
            w.write_f64::<LittleEndian>(*v)?;
        }
        for l in &self.layers {
            w.write_u32::<LittleEndian>(l.out_dim() as u32)?;
            w.write_u32::<LittleEndian>(l.in_dim() as u32)?;
            w.write_u8(match l.activation {
                Activation::Relu => 0,
                Activation::Identity => 1,
            })?;
            w.write_f64::<LittleEndian>(l.dropout)?;
            for v in l.weights.iter().chain(l.bias.iter()) {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Decodes a network, rejecting truncated, oversized or inconsistent
    /// input without panicking.
    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let r = &mut bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| corrupt("truncated header"))?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let rd = |e: std::io::Error| corrupt(format!("truncated: {e}"));
        let version = r.read_u32::<LittleEndian>().map_err(rd)?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let kind = r.read_u8().map_err(rd)?;
        let classes = r.read_u32::<LittleEndian>().map_err(rd)? as usize;
        let output = match kind {
            0 if classes > 0 => OutputKind::Classifier { classes },
            1 => OutputKind::Regressor,
            _ => return Err(corrupt("bad output kind")),
        };
        let input = r.read_u32::<LittleEndian>().map_err(rd)? as usize;
        let n_layers = r.read_u32::<LittleEndian>().map_err(rd)? as usize;
        if n_layers == 0 {
            return Err(corrupt("no layers"));
        }
        let read_f64s = |r: &mut &[u8], n: usize| -> Result<Vec<f64>> {
            let bytes = n.checked_mul(8).ok_or_else(|| corrupt("size overflow"))?;
            if r.len() < bytes {
                return Err(corrupt("truncated payload"));
            }
            let mut v = vec![0.0; n];
            r.read_f64_into::<LittleEndian>(&mut v).map_err(rd)?;
            Ok(v)
        };
        let mean = read_f64s(r, input)?;
        let scale = read_f64s(r, input)?;
        // each layer needs at least its 17-byte header
        if r.len() / 17 < n_layers {
            return Err(corrupt("truncated layer table"));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let out = r.read_u32::<LittleEndian>().map_err(rd)? as usize;
            let inp = r.read_u32::<LittleEndian>().map_err(rd)? as usize;
            let activation = match r.read_u8().map_err(rd)? {
                0 => Activation::Relu,
                1 => Activation::Identity,
                a => return Err(corrupt(format!("bad activation {a}"))),
            };
            let dropout = r.read_f64::<LittleEndian>().map_err(rd)?;
            let count = out.checked_mul(inp).ok_or_else(|| corrupt("size overflow"))?;
            let weights = read_f64s(r, count)?;
            let bias = read_f64s(r, out)?;
            layers.push(Layer {
                weights: Array2::from_shape_vec((out, inp), weights).map_err(|e| corrupt(e.to_string()))?,
                bias: Array1::from(bias),
                activation,
                dropout,
            });
        }
        if !r.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        if !mean.iter().all(|v| v.is_finite()) || !scale.iter().all(|&s| s.is_finite() && s > 0.0) {
            return Err(corrupt("bad input scaler"));
        }
        let scaler = InputScaler {
            mean: Array1::from(mean),
            scale: Array1::from(scale),
        };
        let net = TeacherNet::from_layers(layers, output, scaler).map_err(|e| corrupt(e.to_string()))?;
        if !net.all_finite() {
            return Err(corrupt("non-finite parameter"));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teacher::Architecture;

    fn net() -> TeacherNet {
        TeacherNet::init(
            &Architecture {
                input: 3,
                hidden: vec![4, 2],
                dropout: vec![0.5, 0.0],
                output: OutputKind::Classifier { classes: 3 },
            },
            11,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let n = net();
        let bytes = n.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(TeacherNet::from_bytes(&bytes).unwrap(), n);
        let dir = tempfile::tempdir().unwrap();
        n.save(dir.path().join("t.bin")).unwrap();
        assert_eq!(TeacherNet::load(dir.path().join("t.bin")).unwrap(), n);
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = net().to_bytes();
        for cut in 0..bytes.len() {
            assert!(TeacherNet::from_bytes(&bytes[..cut]).is_err(), "prefix {cut} accepted");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(TeacherNet::from_bytes(&extra).is_err());
    }

    #[test]
    fn absurd_sizes_do_not_allocate() {
        let mut bytes = Vec::from(&MAGIC[..]);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.push(1);
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(TeacherNet::from_bytes(&bytes).is_err());
    }

    #[test]
    fn bad_scaler_is_rejected() {
        let bytes = net().to_bytes();
        // the scale vector follows the 25-byte header and 3 means
        let at = 25 + 3 * 8;
        for bad in [f64::NAN, 0.0, -1.0, f64::INFINITY] {
            let mut b = bytes.clone();
            b[at..at + 8].copy_from_slice(&bad.to_le_bytes());
            assert!(TeacherNet::from_bytes(&b).is_err(), "scale {bad} accepted");
        }
        let mut b = bytes;
        b[25..33].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(TeacherNet::from_bytes(&b).is_err());
    }
}
