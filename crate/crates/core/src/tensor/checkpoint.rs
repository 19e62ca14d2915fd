//! Binary parameter file: `CVAE1`, a little-endian `u32` tensor count, then
//! per tensor a `u32` name length, the UTF-8 name, a `u32` rank, `u32`
//! extents and raw little-endian `f64` values. An optional trailing
//! metadata section (`u32` length + UTF-8 text) carries non-tensor state.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"CVAE1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
    pub metadata: String,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("checkpoint truncated at byte {0}")]
    Truncated(u64),
    #[error("malformed checkpoint at byte {offset}: {reason}")]
    Malformed { offset: u64, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_checkpoint(mut w: impl Write, ckpt: &Checkpoint) -> io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(ckpt.tensors.len() as u32).to_le_bytes())?;
    for (name, t) in &ckpt.tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    if !ckpt.metadata.is_empty() {
        w.write_all(&(ckpt.metadata.len() as u32).to_le_bytes())?;
        w.write_all(ckpt.metadata.as_bytes())?;
    }
    Ok(())
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn exact(&mut self, buf: &mut [u8]) -> Result<(), CheckpointError> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(CheckpointError::Truncated(self.offset)),
            Err(e) => Err(e.into()),
        }
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let mut b = [0u8; 4];
        self.exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn string(&mut self, len: usize) -> Result<String, CheckpointError> {
        let at = self.offset;
        let mut buf = vec![0u8; len];
        self.exact(&mut buf)?;
        String::from_utf8(buf).map_err(|_| CheckpointError::Malformed {
            offset: at,
            reason: "invalid UTF-8".into(),
        })
    }

    /// Reads a `u32` if any bytes remain, `None` at a clean end of input.
    fn try_u32(&mut self) -> Result<Option<u32>, CheckpointError> {
        let mut b = [0u8; 4];
        let mut got = 0;
        while got < 4 {
            match self.inner.read(&mut b[got..]) {
                Ok(0) => break,
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += got as u64;
        match got {
            0 => Ok(None),
            4 => Ok(Some(u32::from_le_bytes(b))),
            _ => Err(CheckpointError::Truncated(self.offset)),
        }
    }
}

pub fn read_checkpoint(r: impl Read) -> Result<Checkpoint, CheckpointError> {
    let mut cur = Cursor { inner: r, offset: 0 };
    let mut magic = [0u8; 5];
    cur.exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let count = cur.u32()?;
    let mut tensors = Vec::with_capacity(count.min(1 << 16) as usize);
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = cur.string(name_len)?;
        let at = cur.offset;
        let rank = cur.u32()? as usize;
        if rank > 8 {
            return Err(CheckpointError::Malformed {
                offset: at,
                reason: format!("rank {rank} for tensor `{name}`"),
            });
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut bytes = vec![0u8; numel * 8];
        cur.exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let tensor = Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed {
            offset: at,
            reason: e.to_string(),
        })?;
        tensors.push((name, tensor));
    }
    let metadata = match cur.try_u32()? {
        None => String::new(),
        Some(len) => cur.string(len as usize)?,
    };
    Ok(Checkpoint { tensors, metadata })
}
