//! GAPCKPT1 checkpoints: a little-endian tensor block followed by packed
//! mask bitsets. The tensor and mask blocks are also the payload of the
//! parallel worker protocol.

use std::path::Path;

use crate::error::{io_at, GapError, Result};
use crate::model::{Layer, Linear, LossHead, Model};
use crate::sparsity::{Mask, MaskSet};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"GAPCKPT1";
const DTYPE_F64: u8 = 1;

/// A named tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

pub fn weight_name(layer: usize) -> String {
    format!("fc{layer}.weight")
}

pub fn bias_name(layer: usize) -> String {
    format!("fc{layer}.bias")
}

fn mask_name(layer: usize) -> String {
    format!("fc{layer}.mask")
}

/// Weight and bias tensors of the given linear layers, in order.
pub fn layer_tensors(model: &Model, layers: &[usize]) -> Result<Vec<NamedTensor>> {
    let mut out = Vec::with_capacity(layers.len() * 2);
    for &id in layers {
        let l = model
            .linear(id)
            .ok_or_else(|| GapError::Shape(format!("model has no layer {id}")))?;
        out.push(NamedTensor {
            name: weight_name(id),
            tensor: l.weight.clone(),
        });
        out.push(NamedTensor {
            name: bias_name(id),
            tensor: l.bias.clone(),
        });
    }
    Ok(out)
}

pub fn write_tensor_block(out: &mut Vec<u8>, tensors: &[NamedTensor]) -> Result<()> {
    put_u32(out, tensors.len())?;
    for t in tensors {
        put_name(out, &t.name)?;
        let shape = t.tensor.shape();
        let rank = u8::try_from(shape.len())
            .map_err(|_| GapError::Format("tensor rank exceeds 255".into()))?;
        out.push(rank);
        for &d in shape {
            put_u32(out, d)?;
        }
        out.push(DTYPE_F64);
        for v in t.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(())
}

pub fn read_tensor_block(r: &mut Reader<'_>) -> Result<Vec<NamedTensor>> {
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = r.name()?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let dtype = r.u8()?;
        if dtype != DTYPE_F64 {
            return Err(GapError::Format(format!(
                "tensor {name}: unsupported dtype code {dtype}"
            )));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(
            n.checked_mul(8)
                .ok_or_else(|| GapError::Format("tensor too large".into()))?,
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::new(shape, data)
            .map_err(|e| GapError::Format(format!("tensor {name}: {e}")))?;
        out.push(NamedTensor { name, tensor });
    }
    Ok(out)
}

/// Packs bits LSB-first: `[1,0,1,0,0,1]` becomes `0b00100101`.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

pub fn unpack_bits(bytes: &[u8], len: usize) -> Vec<bool> {
    (0..len).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

pub fn write_mask_block(out: &mut Vec<u8>, masks: &MaskSet) -> Result<()> {
    put_u32(out, masks.len())?;
    for (id, m) in masks.masks().iter().enumerate() {
        put_name(out, &mask_name(id))?;
        put_u32(out, m.len())?;
        out.extend_from_slice(&pack_bits(m.bits()));
    }
    Ok(())
}

/// Reads mask bitsets; shapes are taken from the matching weight tensors.
pub fn read_mask_block(r: &mut Reader<'_>, model: &Model) -> Result<MaskSet> {
    let count = r.u32()? as usize;
    if count != model.num_linear() {
        return Err(GapError::Format(format!(
            "{count} masks for {} weight layers",
            model.num_linear()
        )));
    }
    let mut masks = Vec::with_capacity(count);
    for id in 0..count {
        let name = r.name()?;
        if name != mask_name(id) {
            return Err(GapError::Format(format!(
                "expected mask {}, found {name}",
                mask_name(id)
            )));
        }
        let len = r.u32()? as usize;
        let shape = model.linear(id).expect("counted").weight.shape().to_vec();
        let bits = unpack_bits(r.take(len.div_ceil(8))?, len);
        masks.push(
            Mask::from_bits(shape, bits)
                .map_err(|e| GapError::Format(format!("mask {name}: {e}")))?,
        );
    }
    Ok(MaskSet::new(masks))
}

/// Rebuilds a ReLU MLP from `fc{i}.weight` / `fc{i}.bias` pairs.
pub fn model_from_tensors(tensors: Vec<NamedTensor>) -> Result<Model> {
    if tensors.is_empty() || !tensors.len().is_multiple_of(2) {
        return Err(GapError::Format(format!(
            "expected weight/bias pairs, found {} tensors",
            tensors.len()
        )));
    }
    let n = tensors.len() / 2;
    let mut layers = Vec::with_capacity(2 * n - 1);
    let mut it = tensors.into_iter();
    for id in 0..n {
        let w = it.next().expect("paired");
        let b = it.next().expect("paired");
        if w.name != weight_name(id) || b.name != bias_name(id) {
            return Err(GapError::Format(format!(
                "expected {} and {}, found {} and {}",
                weight_name(id),
                bias_name(id),
                w.name,
                b.name
            )));
        }
        if id > 0 {
            layers.push(Layer::Relu);
        }
        layers.push(Layer::Linear(Linear {
            weight: w.tensor,
            bias: b.tensor,
        }));
    }
    Model::new(layers, LossHead::SoftmaxCrossEntropy).map_err(|e| GapError::Format(e.to_string()))
}

pub fn to_bytes(model: &Model, masks: &MaskSet) -> Result<Vec<u8>> {
    masks.check_aligned(model)?;
    let mut out = MAGIC.to_vec();
    let all: Vec<usize> = (0..model.num_linear()).collect();
    write_tensor_block(&mut out, &layer_tensors(model, &all)?)?;
    write_mask_block(&mut out, masks)?;
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(Model, MaskSet)> {
    let mut r = Reader::new(bytes);
    if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        return Err(GapError::Format(
            "not a GAPCKPT1 checkpoint (bad magic)".into(),
        ));
    }
    let model = model_from_tensors(read_tensor_block(&mut r)?)?;
    let masks = read_mask_block(&mut r, &model)?;
    r.finish()?;
    Ok((model, masks))
}

pub fn save_checkpoint(model: &Model, masks: &MaskSet, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model, masks)?).map_err(io_at(path))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, MaskSet)> {
    from_bytes(&std::fs::read(path).map_err(io_at(path))?)
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| GapError::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_name(out: &mut Vec<u8>, name: &str) -> Result<()> {
    let len = u16::try_from(name.len())
        .map_err(|_| GapError::Format("name longer than 65535 bytes".into()))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    Ok(())
}

/// Bounds-checked little-endian cursor.
pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| GapError::Format(format!("truncated input at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn name(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| GapError::Format("name is not UTF-8".into()))
    }

    /// Errors if unread bytes remain.
    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(GapError::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn packing_is_lsb_first() {
        let bits = [true, false, true, false, false, true];
        assert_eq!(pack_bits(&bits), vec![0b0010_0101]);
        assert_eq!(unpack_bits(&[0b0010_0101], 6), bits.to_vec());
        assert_eq!(pack_bits(&[true; 9]), vec![0xff, 0x01]);
    }

    #[test]
    fn roundtrip_and_resave() {
        let model = Model::mlp(&[5, 4, 3], &mut rng_for(1, 1, 0, 0)).unwrap();
        let mut masks = MaskSet::dense_for(&model);
        masks.mask_mut(0).bits_mut()[3] = false;
        let bytes = to_bytes(&model, &masks).unwrap();
        let (m2, k2) = from_bytes(&bytes).unwrap();
        assert_eq!(m2, model);
        assert_eq!(k2, masks);
        assert_eq!(to_bytes(&m2, &k2).unwrap(), bytes);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let model = Model::mlp(&[2, 2], &mut rng_for(1, 1, 0, 0)).unwrap();
        let masks = MaskSet::dense_for(&model);
        let mut bytes = to_bytes(&model, &masks).unwrap();
        assert!(matches!(
            from_bytes(&bytes[..bytes.len() - 1]),
            Err(GapError::Format(_))
        ));
        bytes[7] = b'2';
        assert!(matches!(from_bytes(&bytes), Err(GapError::Format(_))));
        assert!(matches!(from_bytes(b"GAP"), Err(GapError::Format(_))));
    }
}
