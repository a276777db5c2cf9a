//! Precomputed per-anchor Hamming-distance buckets.
//!
//! For every anchor the other instances are stored in one contiguous row,
//! ordered by (distance, ordinal), with an offset table giving where each
//! distance bucket starts. Lookup of all candidates at a given distance is a
//! slice borrow.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic "MNIX" | version u16 | n u64 | n_bits u32 | schema_hash u64 | d_max u32
//! offsets: n * (n_bits + 2) u32      (row-relative bucket starts, d = 0..=n_bits+1)
//! ids:     n * (n - 1) u32           (instance ordinals)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifest::ManifestDataset;

pub const INDEX_MAGIC: &[u8; 4] = b"MNIX";
pub const INDEX_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HammingIndex {
    n: usize,
    n_bits: usize,
    schema_hash: u64,
    d_max_observed: u32,
    offsets: Vec<u32>,
    ids: Vec<u32>,
}

impl HammingIndex {
    /// Builds the index over every pair of records. Buckets hold ordinals in
    /// ascending order.
    pub fn build(ds: &ManifestDataset) -> Result<Self> {
        let n = ds.len();
        if n == 0 {
            return Err(Error::InvalidParameter("cannot index an empty dataset".into()));
        }
        if n > u32::MAX as usize {
            return Err(Error::InvalidParameter("too many instances for u32 ids".into()));
        }
        let n_bits = ds.schema().len();
        let stride = n_bits + 2;
        let row_len = n - 1;
        let mut offsets = vec![0u32; n * stride];
        let mut ids = vec![0u32; n * row_len];
        let mut dist = vec![0u32; n];
        let mut counts = vec![0u32; n_bits + 1];
        let mut d_max = 0;

        for a in 0..n {
            counts.iter_mut().for_each(|c| *c = 0);
            for (j, d) in dist.iter_mut().enumerate() {
                if j != a {
                    *d = ds.distance(a, j);
                    counts[*d as usize] += 1;
                }
            }
            let off = &mut offsets[a * stride..(a + 1) * stride];
            let mut acc = 0;
            for d in 0..=n_bits {
                off[d] = acc;
                acc += counts[d];
                if counts[d] > 0 {
                    d_max = d_max.max(d as u32);
                }
            }
            off[n_bits + 1] = acc;
            let row = &mut ids[a * row_len..(a + 1) * row_len];
            let mut cursor: Vec<u32> = off[..=n_bits].to_vec();
            for (j, &d) in dist.iter().enumerate() {
                if j != a {
                    let c = &mut cursor[d as usize];
                    row[*c as usize] = j as u32;
                    *c += 1;
                }
            }
        }

        Ok(Self {
            n,
            n_bits,
            schema_hash: ds.schema().hash(),
            d_max_observed: d_max,
            offsets,
            ids,
        })
    }

    pub fn n_instances(&self) -> usize {
        self.n
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn schema_hash(&self) -> u64 {
        self.schema_hash
    }

    pub fn d_max_observed(&self) -> u32 {
        self.d_max_observed
    }

    /// Ordinals at exactly distance `d` from `anchor`; empty beyond the
    /// schema length.
    pub fn candidates_at(&self, anchor: usize, d: u32) -> Result<&[u32]> {
        if anchor >= self.n {
            return Err(Error::UnknownAnchor(anchor));
        }
        let d = d as usize;
        if d > self.n_bits {
            return Ok(&[]);
        }
        let stride = self.n_bits + 2;
        let off = &self.offsets[anchor * stride..(anchor + 1) * stride];
        let base = anchor * (self.n - 1);
        Ok(&self.ids[base + off[d] as usize..base + off[d + 1] as usize])
    }

    /// Bucket sizes for `anchor`, indexed by distance `0..=n_bits`.
    pub fn bucket_sizes(&self, anchor: usize) -> Result<Vec<u32>> {
        if anchor >= self.n {
            return Err(Error::UnknownAnchor(anchor));
        }
        let stride = self.n_bits + 2;
        let off = &self.offsets[anchor * stride..(anchor + 1) * stride];
        Ok(off.windows(2).map(|w| w[1] - w[0]).collect())
    }

    /// Number of anchors with a nonempty bucket at each distance.
    pub fn occupancy(&self) -> Vec<usize> {
        let mut occ = vec![0; self.n_bits + 1];
        for a in 0..self.n {
            for (d, s) in self.bucket_sizes(a).unwrap().into_iter().enumerate() {
                if s > 0 {
                    occ[d] += 1;
                }
            }
        }
        occ
    }

    /// Errors unless the index was built over a dataset of this shape.
    pub fn check_compatible(&self, ds: &ManifestDataset) -> Result<()> {
        if ds.len() != self.n || ds.schema().hash() != self.schema_hash {
            return Err(Error::Schema(format!(
                "index ({} instances, schema {:016x}) does not match dataset ({} instances, schema {:016x})",
                self.n,
                self.schema_hash,
                ds.len(),
                ds.schema().hash()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(30 + 4 * (self.offsets.len() + self.ids.len()));
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_bits as u32).to_le_bytes());
        out.extend_from_slice(&self.schema_hash.to_le_bytes());
        out.extend_from_slice(&self.d_max_observed.to_le_bytes());
        for v in self.offsets.iter().chain(&self.ids) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != INDEX_MAGIC {
            return Err(parse_err("bad magic"));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != INDEX_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: INDEX_VERSION,
            });
        }
        let n = r.u64()? as usize;
        let n_bits = r.u32()? as usize;
        let schema_hash = r.u64()?;
        let d_max_observed = r.u32()?;
        if n == 0 {
            return Err(parse_err("index has zero instances"));
        }
        let n_offsets = n
            .checked_mul(n_bits + 2)
            .ok_or_else(|| parse_err("size overflow"))?;
        let n_ids = n
            .checked_mul(n - 1)
            .ok_or_else(|| parse_err("size overflow"))?;
        let offsets = r.u32_vec(n_offsets)?;
        let ids = r.u32_vec(n_ids)?;
        if r.pos != bytes.len() {
            return Err(parse_err("trailing bytes after index"));
        }
        let idx = Self {
            n,
            n_bits,
            schema_hash,
            d_max_observed,
            offsets,
            ids,
        };
        idx.check_offsets()?;
        Ok(idx)
    }

    fn check_offsets(&self) -> Result<()> {
        let stride = self.n_bits + 2;
        for a in 0..self.n {
            let off = &self.offsets[a * stride..(a + 1) * stride];
            if off[0] != 0
                || off[stride - 1] as usize != self.n - 1
                || off.windows(2).any(|w| w[0] > w[1])
            {
                return Err(parse_err(&format!("corrupt offset table for anchor {a}")));
            }
        }
        if self.ids.iter().any(|&i| i as usize >= self.n) {
            return Err(parse_err("instance id out of range"));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn parse_err(msg: &str) -> Error {
    Error::Parse {
        row: None,
        message: msg.to_string(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(k)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| parse_err("truncated index file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32_vec(&mut self, k: usize) -> Result<Vec<u32>> {
        let raw = self.take(k.checked_mul(4).ok_or_else(|| parse_err("size overflow"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
