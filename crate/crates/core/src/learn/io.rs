//! Model file format: magic + version header, architecture dims, then the
//! parameter tensors row-major as little-endian f32.

use std::path::Path;

use crate::bytesio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::model::Model;
use super::train::TraceRow;

const MAGIC: &[u8; 4] = b"FQKM";
const VERSION: u32 = 1;

pub fn model_to_bytes(model: &Model) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u8(u8::from(model.is_mlp()));
    w.u32(model.in_dim as u32);
    w.u32(model.hidden.unwrap_or(0) as u32);
    w.u32(model.out_dim as u32);
    for tensor in model.tensors() {
        for &v in tensor {
            w.f32(v as f32);
        }
    }
    w.into_vec()
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = ByteReader::new(bytes);
    let model = read_model(&mut r)?;
    if !r.is_at_end() {
        return Err(Error::ModelFormat("trailing bytes in model file".into()));
    }
    Ok(model)
}

pub(crate) fn read_model(r: &mut ByteReader) -> Result<Model> {
    r.expect_magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let is_mlp = r.u8()? != 0;
    let in_dim = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let out_dim = r.u32()? as usize;
    if is_mlp && hidden == 0 {
        return Err(Error::ModelFormat("MLP with zero hidden units".into()));
    }
    let read_tensor = |r: &mut ByteReader, n: usize| -> Result<Vec<f64>> {
        (0..n).map(|_| r.f32().map(f64::from)).collect()
    };
    if is_mlp {
        let w1 = Matrix::from_vec(hidden, in_dim, read_tensor(r, hidden * in_dim)?)?;
        let b1 = read_tensor(r, hidden)?;
        let w2 = Matrix::from_vec(out_dim, hidden, read_tensor(r, out_dim * hidden)?)?;
        let b2 = read_tensor(r, out_dim)?;
        Ok(Model {
            in_dim,
            out_dim,
            hidden: Some(hidden),
            w1,
            b1,
            w2: Some(w2),
            b2: Some(b2),
        })
    } else {
        let w1 = Matrix::from_vec(out_dim, in_dim, read_tensor(r, out_dim * in_dim)?)?;
        let b1 = read_tensor(r, out_dim)?;
        Ok(Model {
            in_dim,
            out_dim,
            hidden: None,
            w1,
            b1,
            w2: None,
            b2: None,
        })
    }
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

/// Loss trace as CSV: `step,lr,loss`.
pub fn write_loss_trace(trace: &[TraceRow], path: &Path) -> Result<()> {
    let mut out = String::from("step,lr,loss\n");
    for row in trace {
        out.push_str(&format!("{},{},{}\n", row.step, row.lr, row.loss));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
