use std::path::Path;

use crate::error::Error;
use crate::network::{Genome, Lineage};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"NFCK";
const CHECKPOINT_VERSION: u16 = 1;

/// Resume point after a generation: the parent pool (elite first) and the
/// elite's re-evaluation mean. Random draws are keyed by generation, so the
/// generation index is the only RNG cursor needed.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub generation: u32,
    pub master_seed: u64,
    pub elite_mean: f64,
    pub parents: Vec<Genome>,
}

impl Checkpoint {
    pub fn elite(&self) -> Option<&Genome> {
        self.parents.first()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&self.generation.to_le_bytes());
        out.extend_from_slice(&self.master_seed.to_le_bytes());
        out.extend_from_slice(&self.elite_mean.to_le_bytes());
        out.extend_from_slice(&(self.parents.len() as u32).to_le_bytes());
        for g in &self.parents {
            out.extend_from_slice(&g.id().to_le_bytes());
            out.extend_from_slice(&(g.lineage().len() as u32).to_le_bytes());
            for l in g.lineage() {
                out.extend_from_slice(&l.parent_id.to_le_bytes());
                out.extend_from_slice(&l.mutation_seed.to_le_bytes());
            }
            let body = g.to_bytes();
            out.extend_from_slice(&(body.len() as u32).to_le_bytes());
            out.extend_from_slice(&body);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, Error> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::format("checkpoint has bad magic"));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!("unsupported checkpoint version {version}")));
        }
        r.u16()?;
        let generation = r.u32()?;
        let master_seed = r.u64()?;
        let elite_mean = f64::from_bits(r.u64()?);
        let count = r.u32()?;
        let mut parents = Vec::new();
        for _ in 0..count {
            let id = r.u64()?;
            let n = r.u32()?;
            let mut lineage = Vec::new();
            for _ in 0..n {
                lineage.push(Lineage { parent_id: r.u64()?, mutation_seed: r.u64()? });
            }
            let len = r.u32()? as usize;
            parents.push(Genome::from_bytes(id, r.take(len)?)?.with_lineage(lineage));
        }
        if r.pos != bytes.len() {
            return Err(Error::format("trailing bytes after checkpoint"));
        }
        Ok(Checkpoint { generation, master_seed, elite_mean, parents })
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        // write-then-rename so an interrupted save never leaves a torn file
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, Error> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, Error> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, Error> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_truncation() {
        let g = Genome::from_raw(7, vec![1, 2, 3]).with_lineage(vec![Lineage { parent_id: 1, mutation_seed: 99 }]);
        let ck = Checkpoint { generation: 4, master_seed: 11, elite_mean: -2.5, parents: vec![g.clone(), g.with_id(8)] };
        let b = ck.to_bytes();
        assert_eq!(Checkpoint::from_bytes(&b).unwrap(), ck);
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(&b[..3]).is_err());
    }
}
