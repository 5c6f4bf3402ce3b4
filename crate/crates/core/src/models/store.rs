//! Binary model store.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "ORCA" | u16 format | u8 family | [u8; 8] schema digest
//! u64 trained_at | u32 version | u32 dim | u32 seq_len (0 = vector)
//! u32 n + spec JSON | u32 n + schema JSON | u32 n + n x u64 descriptor
//! u64 parameter count | u64 calibration count
//! f64 parameters | f64 calibration | f64 mean, std, median (dim each)
//! [u8; 8] sha256 prefix of everything above
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Calibration, ModelError, ModelFamily, ModelSpec, TrainedModel};
use crate::telemetry::{FeatureSchema, NormStats};

pub const MAGIC: &[u8; 4] = b"ORCA";
pub const FORMAT_VERSION: u16 = 1;

fn digest8(bytes: &[u8]) -> [u8; 8] {
    let d = Sha256::digest(bytes);
    let mut out = [0u8; 8];
    out.copy_from_slice(&d[..8]);
    out
}

pub fn encode_model(m: &TrainedModel) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    b.push(m.family().tag());
    b.extend_from_slice(&digest8(m.schema.canonical().as_bytes()));
    b.extend_from_slice(&m.trained_at.to_le_bytes());
    b.extend_from_slice(&m.version.to_le_bytes());
    b.extend_from_slice(&(m.schema.dim() as u32).to_le_bytes());
    b.extend_from_slice(&(m.schema.seq_len().unwrap_or(0) as u32).to_le_bytes());
    for blob in [serde_json::to_vec(&m.spec), serde_json::to_vec(&m.schema)] {
        let blob = blob.expect("spec and schema serialize");
        b.extend_from_slice(&(blob.len() as u32).to_le_bytes());
        b.extend_from_slice(&blob);
    }
    let desc = m.descriptor();
    b.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    desc.iter().for_each(|v| b.extend_from_slice(&v.to_le_bytes()));
    let params = m.parameters();
    let cal = m.calibration.values();
    b.extend_from_slice(&(params.len() as u64).to_le_bytes());
    b.extend_from_slice(&(cal.len() as u64).to_le_bytes());
    let stats = &m.norm_stats;
    for v in params.iter().chain(cal).chain(&stats.mean).chain(&stats.std).chain(&stats.median) {
        b.extend_from_slice(&v.to_le_bytes());
    }
    let check = digest8(&b);
    b.extend_from_slice(&check);
    b
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ModelError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn corrupt(msg: &str) -> ModelError {
    ModelError::CorruptStore(msg.to_owned())
}

pub fn decode_model(buf: &[u8]) -> Result<TrainedModel, ModelError> {
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut r = Reader { buf, pos: 4 };
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    if buf.len() < 8 + r.pos || digest8(&buf[..buf.len() - 8]) != buf[buf.len() - 8..] {
        return Err(corrupt("checksum mismatch"));
    }
    let body = &buf[..buf.len() - 8];
    let mut r = Reader { buf: body, pos: r.pos };
    let family = ModelFamily::from_tag(r.take(1)?[0]).ok_or_else(|| corrupt("unknown family"))?;
    let digest: [u8; 8] = r.take(8)?.try_into().unwrap();
    let trained_at = r.u64()?;
    let model_version = r.u32()?;
    let dim = r.u32()? as usize;
    let seq_len = r.u32()? as usize;
    let n = r.u32()? as usize;
    let spec: ModelSpec = serde_json::from_slice(r.take(n)?).map_err(|e| corrupt(&e.to_string()))?;
    let n = r.u32()? as usize;
    let schema: FeatureSchema = serde_json::from_slice(r.take(n)?).map_err(|e| corrupt(&e.to_string()))?;
    if spec.family() != family {
        return Err(corrupt("family tag disagrees with spec"));
    }
    if digest8(schema.canonical().as_bytes()) != digest
        || schema.dim() != dim
        || schema.seq_len().unwrap_or(0) != seq_len
    {
        return Err(corrupt("schema digest mismatch"));
    }
    let n = r.u32()? as usize;
    let descriptor = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
    let n_params = r.u64()? as usize;
    let n_cal = r.u64()? as usize;
    let params = r.f64s(n_params)?;
    let cal = r.f64s(n_cal)?;
    let mean = r.f64s(dim)?;
    let std = r.f64s(dim)?;
    let median = r.f64s(dim)?;
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }
    if cal.windows(2).any(|w| w[0] > w[1]) {
        return Err(corrupt("calibration not sorted"));
    }
    let calibration = Calibration::new(cal).ok_or_else(|| corrupt("empty calibration"))?;
    TrainedModel::from_parts(
        spec,
        schema,
        NormStats { mean, std, median },
        &descriptor,
        params,
        calibration,
        trained_at,
        model_version,
    )
    .map_err(|e| corrupt(&e))
}

pub fn save_model(m: &TrainedModel, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, encode_model(m))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel, ModelError> {
    decode_model(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::super::tests::gaussian_dataset;
    use super::super::{train_ocsvm, ModelFamily, ModelSpec};
    use super::*;

    fn model() -> TrainedModel {
        train_ocsvm(&gaussian_dataset(120, 3, 2), &ModelSpec::default_for(ModelFamily::Ocsvm)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model().with_meta(42, 3);
        let back = decode_model(&encode_model(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncation_and_corruption_detected() {
        let bytes = encode_model(&model());
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode_model(&bytes[..cut]), Err(ModelError::CorruptStore(_))), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        let k = flipped.len() - 20;
        flipped[k] ^= 1;
        assert!(matches!(decode_model(&flipped), Err(ModelError::CorruptStore(_))));
    }

    #[test]
    fn version_checked() {
        let mut bytes = encode_model(&model());
        bytes[4] = 9;
        assert!(matches!(decode_model(&bytes), Err(ModelError::VersionMismatch { found: 9, expected: 1 })));
    }
}
