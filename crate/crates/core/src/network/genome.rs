use std::io::{Read, Write};
use std::path::Path;

use crate::error::Error;
use crate::fixedpoint::{dequantize, QFormat, QValue};

use super::NetworkSpec;

pub const GENOME_MAGIC: [u8; 4] = *b"GNOM";
pub const GENOME_VERSION: u16 = 1;
pub const GENOME_HEADER_LEN: usize = 16;

pub type GenomeId = u64;

/// One mutation step: which parent, which noise seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lineage {
    pub parent_id: GenomeId,
    pub mutation_seed: u64,
}

/// A flat vector of weight-format raw values in canonical layout
/// (layer, output channel, input channel, row, column).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Genome {
    id: GenomeId,
    weights: Vec<i16>,
    lineage: Vec<Lineage>,
}

impl Genome {
    pub fn zeros(spec: &NetworkSpec, id: GenomeId) -> Self {
        Genome { id, weights: vec![0; spec.total_params()], lineage: Vec::new() }
    }

    pub fn from_raw(id: GenomeId, weights: Vec<i16>) -> Self {
        Genome { id, weights, lineage: Vec::new() }
    }

    pub fn with_lineage(mut self, lineage: Vec<Lineage>) -> Self {
        self.lineage = lineage;
        self
    }

    pub fn with_id(mut self, id: GenomeId) -> Self {
        self.id = id;
        self
    }

    pub fn id(&self) -> GenomeId {
        self.id
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn raw(&self) -> &[i16] {
        &self.weights
    }

    pub fn raw_mut(&mut self) -> &mut [i16] {
        &mut self.weights
    }

    pub fn lineage(&self) -> &[Lineage] {
        &self.lineage
    }

    pub fn weight(&self, i: usize) -> QValue {
        weight_value(self.weights[i])
    }

    /// Real-valued weights.
    pub fn to_f64(&self) -> Vec<f64> {
        self.weights.iter().map(|&w| dequantize(weight_value(w))).collect()
    }

    /// Squared L2 norm of the real-valued weights.
    pub fn norm_sq(&self) -> f64 {
        let step = QFormat::WEIGHTS.step();
        self.weights.iter().map(|&w| (f64::from(w) * step).powi(2)).sum()
    }

    pub fn check_len(&self, spec: &NetworkSpec) -> Result<(), Error> {
        if self.weights.len() != spec.total_params() {
            return Err(Error::config(format!(
                "genome has {} weights, network expects {}",
                self.weights.len(),
                spec.total_params()
            )));
        }
        Ok(())
    }

    /// GNOM file: 16-byte header (magic, u16 version, u16 reserved,
    /// u32 parameter count, u32 reserved), then little-endian i16 weights.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(GENOME_HEADER_LEN + 2 * self.weights.len());
        out.extend_from_slice(&GENOME_MAGIC);
        out.extend_from_slice(&GENOME_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.weights.len() as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(id: GenomeId, bytes: &[u8]) -> Result<Self, Error> {
        if bytes.len() < GENOME_HEADER_LEN {
            return Err(Error::format("genome file shorter than its header"));
        }
        if bytes[0..4] != GENOME_MAGIC {
            return Err(Error::format("genome file has bad magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != GENOME_VERSION {
            return Err(Error::format(format!("unsupported genome version {version}")));
        }
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[GENOME_HEADER_LEN..];
        if body.len() != 2 * count {
            return Err(Error::format(format!(
                "genome declares {count} weights but carries {} bytes",
                body.len()
            )));
        }
        let weights = body.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect();
        Ok(Genome::from_raw(id, weights))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), Error> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(id: GenomeId, mut r: impl Read) -> Result<Self, Error> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(id, &buf)
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path, id: GenomeId) -> Result<Self, Error> {
        Self::from_bytes(id, &std::fs::read(path)?)
    }
}

fn weight_value(raw: i16) -> QValue {
    QValue::new(i64::from(raw), QFormat::WEIGHTS).expect("i16 fits 16 bits")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::default_spec;

    #[test]
    fn file_roundtrip_and_header() {
        let g = Genome::from_raw(3, vec![1, -2, 32767, -32768]);
        let bytes = g.to_bytes();
        assert_eq!(&bytes[0..4], b"GNOM");
        assert_eq!(bytes.len(), 16 + 8);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        assert_eq!(&bytes[16..18], &[1, 0]);
        assert_eq!(Genome::from_bytes(3, &bytes).unwrap(), g);
    }

    #[test]
    fn file_errors() {
        let bytes = Genome::from_raw(0, vec![5; 4]).to_bytes();
        assert!(Genome::from_bytes(0, &bytes[..10]).is_err());
        assert!(Genome::from_bytes(0, &bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Genome::from_bytes(0, &bad).is_err());
        let mut bad = bytes;
        bad[4] = 9;
        assert!(Genome::from_bytes(0, &bad).is_err());
    }

    #[test]
    fn length_check() {
        let spec = default_spec();
        assert!(Genome::zeros(&spec, 0).check_len(&spec).is_ok());
        assert!(Genome::from_raw(0, vec![0; 10]).check_len(&spec).is_err());
    }

    #[test]
    fn norm_of_unit_weights() {
        let g = Genome::from_raw(0, vec![8192, -8192, 4096]);
        assert_eq!(g.norm_sq(), 2.25);
        assert_eq!(g.to_f64(), vec![1.0, -1.0, 0.5]);
    }
}
