//! Model checkpoint file.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! "DGNW"                      magic
//! u8                          format version (1)
//! u16 ×7                      input channels, height, width,
//!                             conv1 filters, conv2 filters, fc1 width, fc2 width
//! f64                         dropout rate
//! u8                          loss code (0 crossentropy, 1 mse)
//! u8                          optimizer code (rmsprop, adam, sgd, adagrad,
//!                             adadelta, adamax, nadam = 0..6)
//! u32                         tensor count (18)
//! per tensor:  u8 rank, u32 × rank dims, f64 × Πdims values
//! ```
//!
//! Tensors follow the trainable order (conv1 w/b, bn1 γ/β, conv2 w/b,
//! bn2 γ/β, fc1 w/b, fc2 w/b, fc3 w/b) and then the running statistics
//! (bn1 mean/var, bn2 mean/var).

use std::fs;
use std::path::Path;

use super::network::{LossKind, NetworkSpec, Parameters};
use super::optim::OptimizerKind;
use super::tensor::Tensor;
use super::NetError;

pub const MAGIC: &[u8; 4] = b"DGNW";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub params: Parameters,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, NetError> {
        self.params.check(&self.spec)?;
        let s = &self.spec;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        for v in [
            s.input_channels,
            s.input_height,
            s.input_width,
            s.conv1_filters,
            s.conv2_filters,
            s.fc1_width,
            s.fc2_width,
        ] {
            let v = u16::try_from(v)
                .map_err(|_| NetError::BadCheckpoint(format!("dimension {v} exceeds u16")))?;
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&s.dropout_rate.to_le_bytes());
        out.push(s.loss.code());
        out.push(s.optimizer.code());
        let tensors: Vec<&Tensor> = self
            .params
            .trainable
            .iter()
            .chain(&self.params.running)
            .collect();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(NetError::BadCheckpoint("bad magic".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(NetError::BadCheckpoint(format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 7];
        for d in dims.iter_mut() {
            *d = r.u16()? as usize;
        }
        let dropout_rate = r.f64()?;
        let loss = LossKind::from_code(r.u8()?)
            .ok_or_else(|| NetError::BadCheckpoint("unknown loss code".into()))?;
        let optimizer = OptimizerKind::from_code(r.u8()?)
            .ok_or_else(|| NetError::BadCheckpoint("unknown optimizer code".into()))?;
        let spec = NetworkSpec {
            input_channels: dims[0],
            input_height: dims[1],
            input_width: dims[2],
            conv1_filters: dims[3],
            conv2_filters: dims[4],
            fc1_width: dims[5],
            fc2_width: dims[6],
            dropout_rate,
            loss,
            optimizer,
        };
        spec.validate()?;

        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let rank = r.u8()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| {
                NetError::BadCheckpoint("tensor size overflow".into())
            })?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Tensor::from_vec(shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(NetError::BadCheckpoint("trailing bytes".into()));
        }
        let n_train = spec.parameter_shapes().len();
        if tensors.len() != n_train + 4 {
            return Err(NetError::BadCheckpoint(format!(
                "expected {} tensors, found {}",
                n_train + 4,
                tensors.len()
            )));
        }
        let running = tensors.split_off(n_train);
        let params = Parameters {
            trainable: tensors,
            running,
        };
        params.check(&spec)?;
        Ok(Self { spec, params })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NetError::BadCheckpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NetError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, NetError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NetError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), NetError> {
    fs::write(path, checkpoint.to_bytes()?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, NetError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
