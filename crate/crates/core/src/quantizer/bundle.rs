//! Binary codebook bundle.
//!
//! Layout (little-endian): 8-byte magic, `u32` N, N_e, D_latent, d_full,
//! N pairs `(d_i, K_i)` as `u32`, then `proj_in` weight and bias, `proj_out`
//! weight and bias, then every codebook, all as row-major `f64`. A CRC32 of
//! every preceding byte closes the file.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{to_row_major, Matrix};

use super::codebook::Codebook;
use super::config::{QuantizerKind, VoRvqConfig};
use super::forward::Quantizer;
use super::projections::Projections;

pub const MAGIC: &[u8; 8] = b"VORVQ1\0\0";

/// Everything the binary format stores.
///
/// `stage_dims` and `enhanced_stages` are the effective values, so a plain
/// RVQ is stored with every stage unmasked and every stage accumulated.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizerBundle {
    pub num_stages: usize,
    pub enhanced_stages: usize,
    pub latent_dim: usize,
    pub full_dim: usize,
    pub stage_dims: Vec<usize>,
    pub codebook_sizes: Vec<usize>,
    pub projections: Projections,
    pub codebooks: Vec<Codebook>,
}

impl QuantizerBundle {
    pub fn from_quantizer(q: &Quantizer) -> Self {
        Self {
            num_stages: q.config.num_stages,
            enhanced_stages: q.accumulated_stages(),
            latent_dim: q.config.latent_dim,
            full_dim: q.config.full_dim,
            stage_dims: q.stage_dims(),
            codebook_sizes: q.codebooks.iter().map(Codebook::size).collect(),
            projections: q.projections.clone(),
            codebooks: q.codebooks.clone(),
        }
    }

    /// Rebuilds a quantizer with the same forward behaviour.
    ///
    /// A bundle with every stage unmasked and accumulated comes back as
    /// [`QuantizerKind::Rvq`]; anything else as [`QuantizerKind::VoRvq`].
    pub fn to_quantizer(&self, seed: u64) -> Result<Quantizer> {
        let config = VoRvqConfig {
            num_stages: self.num_stages,
            enhanced_stages: self.enhanced_stages,
            noise_stages: self.num_stages - self.enhanced_stages,
            latent_dim: self.latent_dim,
            full_dim: self.full_dim,
            stage_dims: self.stage_dims.clone(),
            codebook_sizes: self.codebook_sizes.clone(),
            seed,
        };
        config.validate()?;
        let unmasked = self.stage_dims.iter().all(|&d| d == self.full_dim);
        let kind = if unmasked && self.enhanced_stages == self.num_stages {
            QuantizerKind::Rvq
        } else {
            QuantizerKind::VoRvq
        };
        Ok(Quantizer {
            kind,
            config,
            projections: self.projections.clone(),
            codebooks: self.codebooks.clone(),
        })
    }
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_bundle(b: &QuantizerBundle) -> Result<Vec<u8>> {
    if b.stage_dims.len() != b.num_stages
        || b.codebook_sizes.len() != b.num_stages
        || b.codebooks.len() != b.num_stages
    {
        return Err(Error::Format("per-stage lists disagree with num_stages".into()));
    }
    b.projections.validate()?;
    if b.projections.latent_dim() != b.latent_dim || b.projections.full_dim() != b.full_dim {
        return Err(Error::Format("projection shapes disagree with header".into()));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    for v in [b.num_stages, b.enhanced_stages, b.latent_dim, b.full_dim] {
        put_u32(&mut buf, v)?;
    }
    for (i, cb) in b.codebooks.iter().enumerate() {
        if cb.dim() != b.stage_dims[i] || cb.size() != b.codebook_sizes[i] {
            return Err(Error::Format(format!("codebook {} disagrees with header", i + 1)));
        }
        put_u32(&mut buf, b.stage_dims[i])?;
        put_u32(&mut buf, b.codebook_sizes[i])?;
    }
    let p = &b.projections;
    put_f64s(&mut buf, &to_row_major(&p.in_weight));
    put_f64s(&mut buf, &p.in_bias);
    put_f64s(&mut buf, &to_row_major(&p.out_weight));
    put_f64s(&mut buf, &p.out_bias);
    for cb in &b.codebooks {
        put_f64s(&mut buf, &to_row_major(cb.vectors()));
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::Format("truncated bundle".into()))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Format("array size overflow".into()))?;
        let bytes = self.take(len)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("matrix size overflow".into()))?;
        Ok(Matrix::from_row_slice(rows, cols, &self.f64s(n)?))
    }
}

pub fn decode_bundle(bytes: &[u8]) -> Result<QuantizerBundle> {
    if bytes.len() < MAGIC.len() + 4 {
        return Err(Error::Format("file too short".into()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]);
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Format(format!(
            "CRC mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let mut r = Reader {
        data: body,
        pos: MAGIC.len(),
    };
    let num_stages = r.u32()?;
    let enhanced_stages = r.u32()?;
    let latent_dim = r.u32()?;
    let full_dim = r.u32()?;
    if enhanced_stages > num_stages {
        return Err(Error::Format("N_e exceeds N".into()));
    }
    let mut stage_dims = Vec::new();
    let mut codebook_sizes = Vec::new();
    for _ in 0..num_stages {
        stage_dims.push(r.u32()?);
        codebook_sizes.push(r.u32()?);
    }
    let in_weight = r.matrix(latent_dim, full_dim)?;
    let in_bias = r.f64s(full_dim)?;
    let out_weight = r.matrix(full_dim, latent_dim)?;
    let out_bias = r.f64s(latent_dim)?;
    let projections = Projections {
        in_weight,
        in_bias,
        out_weight,
        out_bias,
    };
    projections.validate()?;
    let mut codebooks = Vec::with_capacity(num_stages);
    for (i, (&d, &k)) in stage_dims.iter().zip(&codebook_sizes).enumerate() {
        codebooks.push(Codebook::new(i + 1, r.matrix(k, d)?)?);
    }
    if r.pos != body.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes before checksum",
            body.len() - r.pos
        )));
    }
    Ok(QuantizerBundle {
        num_stages,
        enhanced_stages,
        latent_dim,
        full_dim,
        stage_dims,
        codebook_sizes,
        projections,
        codebooks,
    })
}

pub fn save_bundle(path: impl AsRef<Path>, b: &QuantizerBundle) -> Result<()> {
    fs::write(path, encode_bundle(b)?)?;
    Ok(())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<QuantizerBundle> {
    decode_bundle(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> QuantizerBundle {
        let cfg = VoRvqConfig::new(2, 1, 3, 2, 2, 0).unwrap();
        let mut proj = Projections::identity(3, 2);
        proj.in_bias = vec![0.5, -0.25];
        let codebooks = vec![
            Codebook::new(1, Matrix::from_row_slice(2, 1, &[0.0, 1.5])).unwrap(),
            Codebook::new(2, Matrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4])).unwrap(),
        ];
        QuantizerBundle::from_quantizer(&Quantizer {
            kind: QuantizerKind::VoRvq,
            config: cfg,
            projections: proj,
            codebooks,
        })
    }

    #[test]
    fn header_layout() {
        let bytes = encode_bundle(&sample()).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let words: Vec<u32> = bytes[8..8 + 8 * 4]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(words, vec![2, 1, 3, 2, 1, 2, 2, 2]);
        let floats = 3 * 2 + 2 + 2 * 3 + 3 + 2 + 4;
        assert_eq!(bytes.len(), 8 + 32 + floats * 8 + 4);
    }

    #[test]
    fn round_trip() {
        let b = sample();
        let bytes = encode_bundle(&b).unwrap();
        let back = decode_bundle(&bytes).unwrap();
        assert_eq!(back, b);
        assert_eq!(encode_bundle(&back).unwrap(), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = encode_bundle(&sample()).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        assert!(matches!(decode_bundle(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_and_truncation() {
        let bytes = encode_bundle(&sample()).unwrap();
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode_bundle(&wrong).is_err());
        assert!(decode_bundle(&bytes[..bytes.len() - 9]).is_err());
    }

    #[test]
    fn rvq_bundle_restores_rvq_behaviour() {
        let b = sample();
        let mut q = b.to_quantizer(0).unwrap();
        assert_eq!(q.kind, QuantizerKind::VoRvq);
        q.kind = QuantizerKind::Rvq;
        q.codebooks[0] = Codebook::new(1, Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0])).unwrap();
        let stored = QuantizerBundle::from_quantizer(&q);
        assert_eq!(stored.stage_dims, vec![2, 2]);
        assert_eq!(stored.enhanced_stages, 2);
        assert_eq!(stored.to_quantizer(0).unwrap().kind, QuantizerKind::Rvq);
    }
}
