//! Binary model files: little-endian header, weight tensors with shape
//! headers, and a trailing SHA-256 over everything before it.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::predictor::{ModelKind, PredictorModel};
use crate::models::ValueTransform;
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"NTCM";
pub const MODEL_VERSION: u16 = 1;
pub const HASH_BYTES: usize = 32;

pub type ModelHash = [u8; HASH_BYTES];

fn body(model: &PredictorModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(model.kind.tag());
    out.extend_from_slice(&(model.hidden as u32).to_le_bytes());
    out.extend_from_slice(&(model.w_past as u32).to_le_bytes());
    let (tag, mean, std) = match model.transform {
        ValueTransform::Identity => (0u8, 0.0, 1.0),
        ValueTransform::Log1p { mean, std } => (1u8, mean, std),
    };
    out.push(tag);
    out.extend_from_slice(&mean.to_le_bytes());
    out.extend_from_slice(&std.to_le_bytes());
    let tensors = model.weights.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn model_to_bytes(model: &PredictorModel) -> Vec<u8> {
    let mut out = body(model);
    let hash = Sha256::digest(&out);
    out.extend_from_slice(&hash);
    out
}

/// Content hash binding a container to the exact model that coded it.
pub fn model_hash(model: &PredictorModel) -> ModelHash {
    Sha256::digest(body(model)).into()
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::Corrupt("model file truncated".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<PredictorModel> {
    if bytes.len() < MODEL_MAGIC.len() + HASH_BYTES || &bytes[..4] != MODEL_MAGIC {
        return Err(Error::Corrupt("not a model file".into()));
    }
    let (content, stored) = bytes.split_at(bytes.len() - HASH_BYTES);
    if Sha256::digest(content).as_slice() != stored {
        return Err(Error::Corrupt("model content hash mismatch".into()));
    }
    let mut r = Reader { data: content, pos: 4 };
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(Error::Corrupt(format!("unsupported model version {version}")));
    }
    let kind = ModelKind::from_tag(r.u8()?)
        .ok_or_else(|| Error::Corrupt("unknown model kind".into()))?;
    let hidden = r.u32()? as usize;
    let w_past = r.u32()? as usize;
    let transform = match (r.u8()?, r.f64()?, r.f64()?) {
        (0, _, _) => ValueTransform::Identity,
        (1, mean, std) => ValueTransform::Log1p { mean, std },
        (t, _, _) => return Err(Error::Corrupt(format!("unknown transform tag {t}"))),
    };
    if hidden == 0 || hidden > 4096 {
        return Err(Error::Corrupt(format!("implausible hidden size {hidden}")));
    }
    let mut model = PredictorModel::zeros(kind, hidden, w_past, transform)
        .map_err(|e| Error::Corrupt(e.to_string()))?;
    let count = r.u32()? as usize;
    let mut tensors = model.weights.tensors_mut();
    if count != tensors.len() {
        return Err(Error::Corrupt(format!(
            "expected {} tensors, found {count}",
            tensors.len()
        )));
    }
    for t in tensors.iter_mut() {
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        if shape != t.shape() {
            return Err(Error::Corrupt(format!(
                "tensor shape {shape:?}, expected {:?}",
                t.shape()
            )));
        }
        for v in t.data_mut() {
            *v = r.f64()?;
        }
    }
    if r.pos != content.len() {
        return Err(Error::Corrupt("trailing bytes in model file".into()));
    }
    if !model.weights.is_finite() {
        return Err(Error::Corrupt("non-finite weights".into()));
    }
    Ok(model)
}

pub fn save_model(model: &PredictorModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<PredictorModel> {
    model_from_bytes(&std::fs::read(path)?)
}
