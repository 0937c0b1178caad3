//! Versioned little-endian binary checkpoints.
//!
//! Layout: magic `GSPKCKPT`, version u32, config text, epoch u64, best
//! metric f64, generator state, optimiser step u64, parameter count u32,
//! then per parameter its name, shape, values and both moment buffers.
//! Strings are a u32 byte length followed by UTF-8.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GSPKCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Exact position of a ChaCha8 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Flat `key = value` configuration the parameters were trained with.
    pub config: String,
    /// Epochs completed.
    pub epoch: u64,
    pub best_metric: f64,
    pub rng: RngState,
    pub params: ParamStore,
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b)?;
        Ok(())
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64s(&mut self, v: &[f64]) -> Result<()> {
        for x in v {
            self.bytes(&x.to_le_bytes())?;
        }
        Ok(())
    }
    fn string(&mut self, s: &str) -> Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| truncated(e, "checkpoint"))?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| Ok(f64::from_le_bytes(self.array()?))).collect()
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let mut b = vec![0u8; n];
        self.0.read_exact(&mut b).map_err(|e| truncated(e, "checkpoint"))?;
        String::from_utf8(b).map_err(|_| Error::invalid("checkpoint string is not UTF-8"))
    }
}

fn truncated(e: std::io::Error, what: &str) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::invalid(format!("{what} is truncated"))
    } else {
        Error::Io(e)
    }
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut w = Writer(BufWriter::new(File::create(path)?));
    w.bytes(MAGIC)?;
    w.u32(CHECKPOINT_VERSION)?;
    w.string(&ck.config)?;
    w.u64(ck.epoch)?;
    w.f64s(&[ck.best_metric])?;
    w.bytes(&ck.rng.seed)?;
    w.u64(ck.rng.stream)?;
    w.bytes(&ck.rng.word_pos.to_le_bytes())?;
    let p = &ck.params;
    w.u64(p.step)?;
    w.u32(p.len() as u32)?;
    for k in 0..p.len() {
        w.string(&p.names[k])?;
        let shape = p.values[k].shape();
        w.u32(shape.len() as u32)?;
        for &d in shape {
            w.u64(d as u64)?;
        }
        w.f64s(p.values[k].data())?;
        w.f64s(p.m[k].data())?;
        w.f64s(p.v[k].data())?;
    }
    w.0.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = Reader(BufReader::new(File::open(path)?));
    if &r.array::<8>()? != MAGIC {
        return Err(Error::invalid(format!("{} is not a checkpoint", path.display())));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::invalid(format!(
            "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let config = r.string()?;
    let epoch = r.u64()?;
    let best_metric = r.f64s(1)?[0];
    let seed = r.array::<32>()?;
    let stream = r.u64()?;
    let word_pos = u128::from_le_bytes(r.array()?);
    let mut params = ParamStore::new();
    params.step = r.u64()?;
    let count = r.u32()?;
    for _ in 0..count {
        let name = r.string()?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| Ok(r.u64()? as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let value = Tensor::from_vec(&shape, r.f64s(len)?)?;
        let id = params.add(name, value);
        params.m[id.0] = Tensor::from_vec(&shape, r.f64s(len)?)?;
        params.v[id.0] = Tensor::from_vec(&shape, r.f64s(len)?)?;
    }
    Ok(Checkpoint {
        config,
        epoch,
        best_metric,
        rng: RngState { seed, stream, word_pos },
        params,
    })
}
