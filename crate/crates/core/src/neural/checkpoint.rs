//! Binary checkpoint container. Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "SSWSCKPT"
//! version      u32      1
//! n_tensors    u32
//! per tensor:
//!   name_len   u32, name (UTF-8, name_len bytes)
//!   ndim       u32, dims (u32 × ndim)
//!   values     f32 × product(dims)
//! has_adam     u8       0 or 1
//! if has_adam:
//!   step_count u64
//!   beta1, beta2, epsilon   f64 × 3
//!   per tensor, in the order above:
//!     first_moment  f32 × len
//!     second_moment f32 × len
//! ```
//!
//! See also `docs/formats.md`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AdamState, NeuralError, ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SSWSCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(
    path: &Path,
    params: &ParamStore<f32>,
    adam: Option<&AdamState>,
) -> Result<(), NeuralError> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_checkpoint(&mut w, params, adam)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(ParamStore<f32>, Option<AdamState>), NeuralError> {
    let mut r = BufReader::new(File::open(path)?);
    decode_checkpoint(&mut r)
}

pub fn encode_checkpoint<W: Write>(
    w: &mut W,
    params: &ParamStore<f32>,
    adam: Option<&AdamState>,
) -> Result<(), NeuralError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        write_f32s(w, t.data())?;
    }
    match adam {
        None => w.write_all(&[0])?,
        Some(st) => {
            if st.first_moment.len() != params.len() {
                return Err(NeuralError::Format(
                    "optimizer state does not match parameter count".into(),
                ));
            }
            w.write_all(&[1])?;
            w.write_all(&st.step_count.to_le_bytes())?;
            for v in [st.beta1, st.beta2, st.epsilon] {
                w.write_all(&v.to_le_bytes())?;
            }
            for (m, v) in st.first_moment.iter().zip(&st.second_moment) {
                write_f32s(w, m)?;
                write_f32s(w, v)?;
            }
        }
    }
    Ok(())
}

pub fn decode_checkpoint<R: Read>(
    r: &mut R,
) -> Result<(ParamStore<f32>, Option<AdamState>), NeuralError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NeuralError::Format(
            "not a checkpoint file (bad magic)".into(),
        ));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(NeuralError::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let n = read_u32(r)? as usize;
    let mut params = ParamStore::new();
    for _ in 0..n {
        let name_len = read_u32(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| NeuralError::Format("tensor name is not UTF-8".into()))?;
        let ndim = read_u32(r)? as usize;
        let dims = (0..ndim)
            .map(|_| read_u32(r).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let len = dims.iter().product();
        let data = read_f32s(r, len)?;
        params.insert(name, Tensor::new(dims, data)?)?;
    }
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let adam = match flag[0] {
        0 => None,
        1 => {
            let mut b8 = [0u8; 8];
            r.read_exact(&mut b8)?;
            let step_count = u64::from_le_bytes(b8);
            let mut hyper = [0f64; 3];
            for h in hyper.iter_mut() {
                r.read_exact(&mut b8)?;
                *h = f64::from_le_bytes(b8);
            }
            let mut first_moment = Vec::with_capacity(n);
            let mut second_moment = Vec::with_capacity(n);
            for (_, t) in params.iter() {
                first_moment.push(read_f32s(r, t.len())?);
                second_moment.push(read_f32s(r, t.len())?);
            }
            Some(AdamState {
                step_count,
                beta1: hyper[0],
                beta2: hyper[1],
                epsilon: hyper[2],
                first_moment,
                second_moment,
            })
        }
        other => return Err(NeuralError::Format(format!("bad optimizer flag {other}"))),
    };
    Ok((params, adam))
}

fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NeuralError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, len: usize) -> Result<Vec<f32>, NeuralError> {
    let mut buf = vec![0u8; len * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
