//! Manifestation schema, packed binary trait vectors and dataset I/O.
//!
//! A manifestation is a fixed-length binary vector: one bit per option of
//! every trait group, laid out group by group in schema order. The default
//! schema has 9 groups and 35 options. Its bit layout is frozen (group
//! offsets 0, 4, 8, 11, 14, 17, 20, 23, 26) because persisted indexes refer
//! to it through the schema hash.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One trait group and its ordered options.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitGroup {
    pub name: String,
    pub options: Vec<String>,
    /// At most one option of an exclusive group may be set.
    pub exclusive: bool,
}

/// Ordered trait groups with precomputed bit offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestationSchema {
    groups: Vec<TraitGroup>,
    offsets: Vec<usize>,
    len: usize,
}

const MAMMOGRAPHY_GROUPS: &[(&str, &[&str], bool)] = &[
    ("mass shape", &["irregular", "lobulated", "ovoid", "round"], true),
    (
        "mass edge",
        &["microlobulated", "obscured", "spiculated", "well-circumscribed"],
        true,
    ),
    ("mass density", &["low", "median", "high"], true),
    ("mass size", &["≤2cm", "2-5cm", ">5cm"], true),
    (
        "calcification shape",
        &[
            "branching",
            "crescentic/annular/gritty/thread-like",
            "granular/popcorn-like/large rod-like/eggshell-like",
        ],
        true,
    ),
    ("calcification size", &["coarse", "tiny", "uneven"], true),
    ("calcification density", &["low", "high", "uneven"], true),
    (
        "calcification distribution",
        &["scattered", "clustered", "linear/segmental"],
        true,
    ),
    (
        "miscellaneous",
        &[
            "architectural distortion",
            "focal asymmetrical density",
            "duct sign",
            "comet tail sign",
            "halo sign",
            "focal skin thickening/retraction",
            "nipple retraction",
            "abnormal blood vessel shadow",
            "abnormal lymph node shadow",
        ],
        false,
    ),
];

impl Default for ManifestationSchema {
    fn default() -> Self {
        Self::mammography()
    }
}

impl ManifestationSchema {
    /// The 35-option mammography schema.
    pub fn mammography() -> Self {
        let groups = MAMMOGRAPHY_GROUPS
            .iter()
            .map(|(name, options, exclusive)| TraitGroup {
                name: name.to_string(),
                options: options.iter().map(|o| o.to_string()).collect(),
                exclusive: *exclusive,
            })
            .collect();
        Self::new(groups).expect("built-in schema is valid")
    }

    /// A schema of `n` independent, unnamed traits in a single group.
    pub fn flat(n: usize) -> Self {
        Self::new(vec![TraitGroup {
            name: "trait".into(),
            options: (0..n).map(|i| format!("t{i}")).collect(),
            exclusive: false,
        }])
        .expect("flat schema is valid")
    }

    pub fn new(groups: Vec<TraitGroup>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Schema("schema has no groups".into()));
        }
        let mut names = HashSet::new();
        let mut offsets = Vec::with_capacity(groups.len());
        let mut len = 0;
        for g in &groups {
            if g.options.is_empty() {
                return Err(Error::Schema(format!("group `{}` has no options", g.name)));
            }
            if !names.insert(g.name.as_str()) {
                return Err(Error::Schema(format!("duplicate group `{}`", g.name)));
            }
            let mut seen = HashSet::new();
            for o in &g.options {
                if !seen.insert(o.as_str()) {
                    return Err(Error::Schema(format!(
                        "duplicate option `{o}` in group `{}`",
                        g.name
                    )));
                }
            }
            offsets.push(len);
            len += g.options.len();
        }
        Ok(Self {
            groups,
            offsets,
            len,
        })
    }

    pub fn groups(&self) -> &[TraitGroup] {
        &self.groups
    }

    /// Bit offset of each group.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Total option count, i.e. the bit-vector length.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bit position of `option` within `group`.
    pub fn position(&self, group: &str, option: &str) -> Result<usize> {
        let (gi, g) = self
            .groups
            .iter()
            .enumerate()
            .find(|(_, g)| g.name == group)
            .ok_or_else(|| Error::UnknownOption {
                group: group.into(),
                option: option.into(),
            })?;
        let oi = g
            .options
            .iter()
            .position(|o| o == option)
            .ok_or_else(|| Error::UnknownOption {
                group: group.into(),
                option: option.into(),
            })?;
        Ok(self.offsets[gi] + oi)
    }

    /// Column names used by the CSV format, in bit order (`group:option`).
    pub fn column_names(&self) -> Vec<String> {
        self.groups
            .iter()
            .flat_map(|g| g.options.iter().map(move |o| format!("{}:{}", g.name, o)))
            .collect()
    }

    /// Checks the exclusive-group invariant, returning the first offending group.
    pub fn validate(&self, bits: &Bits) -> std::result::Result<(), String> {
        for (g, &off) in self.groups.iter().zip(&self.offsets) {
            if g.exclusive {
                let set = (off..off + g.options.len()).filter(|&p| bits.get(p)).count();
                if set > 1 {
                    return Err(g.name.clone());
                }
            }
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint of the schema (first 8 bytes of a SHA-256).
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_vec(&self.groups).expect("schema serializes");
        let digest = Sha256::digest(&json);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let groups: Vec<TraitGroup> = serde_json::from_str(&text)?;
        Self::new(groups)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(&self.groups)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

/// Bit vector packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bits {
    words: Vec<u64>,
    len: usize,
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut out = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            out.set(i, b);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Popcount of the XOR. Callers guarantee equal lengths.
    #[inline]
    pub(crate) fn xor_count(&self, other: &Bits) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

/// Opaque key; equal iff the underlying bit vectors are identical.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DedupKey(Bits);

/// One instance's manifestation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifestation {
    pub id: u64,
    pub bits: Bits,
}

impl Manifestation {
    pub fn new(id: u64, bits: Bits) -> Self {
        Self { id, bits }
    }

    pub fn dedup_key(&self) -> DedupKey {
        dedup_key(self)
    }
}

/// Per-group option selections for one instance, keyed by group name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawRecord {
    pub id: u64,
    pub selections: BTreeMap<String, Vec<String>>,
}

impl RawRecord {
    pub fn new(id: u64) -> Self {
        Self {
            id,
            selections: BTreeMap::new(),
        }
    }

    pub fn select(mut self, group: &str, option: &str) -> Self {
        self.selections
            .entry(group.to_string())
            .or_default()
            .push(option.to_string());
        self
    }
}

pub fn encode_record(raw: &RawRecord, schema: &ManifestationSchema) -> Result<Manifestation> {
    let mut bits = Bits::zeros(schema.len());
    for (group, options) in &raw.selections {
        let g = schema
            .groups()
            .iter()
            .find(|g| &g.name == group)
            .ok_or_else(|| Error::UnknownOption {
                group: group.clone(),
                option: options.first().cloned().unwrap_or_default(),
            })?;
        let mut distinct: Vec<&String> = options.iter().collect();
        distinct.sort();
        distinct.dedup();
        if g.exclusive && distinct.len() > 1 {
            return Err(Error::ExclusivityViolation {
                group: group.clone(),
                row: None,
            });
        }
        for o in distinct {
            bits.set(schema.position(group, o)?, true);
        }
    }
    Ok(Manifestation::new(raw.id, bits))
}

/// Inverse of [`encode_record`]; groups with nothing selected are omitted.
pub fn decode(m: &Manifestation, schema: &ManifestationSchema) -> RawRecord {
    let mut raw = RawRecord::new(m.id);
    for (g, &off) in schema.groups().iter().zip(schema.offsets()) {
        let chosen: Vec<String> = g
            .options
            .iter()
            .enumerate()
            .filter(|(i, _)| m.bits.get(off + i))
            .map(|(_, o)| o.clone())
            .collect();
        if !chosen.is_empty() {
            raw.selections.insert(g.name.clone(), chosen);
        }
    }
    raw
}

pub fn hamming(a: &Manifestation, b: &Manifestation) -> Result<u32> {
    if a.bits.len() != b.bits.len() {
        return Err(Error::LengthMismatch {
            left: a.bits.len(),
            right: b.bits.len(),
        });
    }
    Ok(a.bits.xor_count(&b.bits))
}

pub fn dedup_key(m: &Manifestation) -> DedupKey {
    DedupKey(m.bits.clone())
}

/// File format for [`ManifestDataset`] persistence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Json,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: u64,
    bits: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
}

/// Instances over which sampling runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestDataset {
    schema: ManifestationSchema,
    records: Vec<Manifestation>,
    labels: Option<Vec<bool>>,
}

impl ManifestDataset {
    pub fn new(
        schema: ManifestationSchema,
        records: Vec<Manifestation>,
        labels: Option<Vec<bool>>,
    ) -> Result<Self> {
        let mut ids = HashSet::with_capacity(records.len());
        for (row, r) in records.iter().enumerate() {
            if r.bits.len() != schema.len() {
                return Err(Error::LengthMismatch {
                    left: r.bits.len(),
                    right: schema.len(),
                });
            }
            if !ids.insert(r.id) {
                return Err(Error::Schema(format!("duplicate instance id {}", r.id)));
            }
            if let Err(group) = schema.validate(&r.bits) {
                return Err(Error::ExclusivityViolation {
                    group,
                    row: Some(row + 1),
                });
            }
        }
        if let Some(l) = &labels {
            if l.len() != records.len() {
                return Err(Error::Schema(format!(
                    "{} labels for {} records",
                    l.len(),
                    records.len()
                )));
            }
        }
        Ok(Self {
            schema,
            records,
            labels,
        })
    }

    /// Builds a dataset from bare bit vectors, ids = ordinals.
    pub fn from_bits(schema: ManifestationSchema, bits: Vec<Bits>) -> Result<Self> {
        let records = bits
            .into_iter()
            .enumerate()
            .map(|(i, b)| Manifestation::new(i as u64, b))
            .collect();
        Self::new(schema, records, None)
    }

    pub fn schema(&self) -> &ManifestationSchema {
        &self.schema
    }

    pub fn records(&self) -> &[Manifestation] {
        &self.records
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Hamming distance between the records at two ordinals.
    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> u32 {
        self.records[i].bits.xor_count(&self.records[j].bits)
    }

    /// Subset by ordinal, preserving ids and labels.
    pub fn subset(&self, ordinals: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            records: ordinals.iter().map(|&i| self.records[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| ordinals.iter().map(|&i| l[i]).collect()),
        }
    }

    pub fn load(path: impl AsRef<Path>, format: DataFormat) -> Result<Self> {
        Self::load_with_schema(path, format, ManifestationSchema::default())
    }

    pub fn load_with_schema(
        path: impl AsRef<Path>,
        format: DataFormat,
        schema: ManifestationSchema,
    ) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match format {
            DataFormat::Csv => Self::parse_csv(&text, schema),
            DataFormat::Json => Self::parse_json(&text, schema),
        }
    }

    fn parse_csv(text: &str, schema: ManifestationSchema) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        let columns = schema.column_names();
        let mut bit_col = vec![usize::MAX; columns.len()];
        let mut id_col = None;
        let mut label_col = None;
        for (ci, name) in header.iter().enumerate() {
            let name = name.trim();
            match name {
                "id" if id_col.is_none() => id_col = Some(ci),
                "label" if label_col.is_none() => label_col = Some(ci),
                _ => match columns.iter().position(|c| c == name) {
                    Some(p) if bit_col[p] == usize::MAX => bit_col[p] = ci,
                    Some(_) => return Err(Error::Schema(format!("duplicate column `{name}`"))),
                    None => return Err(Error::Schema(format!("unexpected column `{name}`"))),
                },
            }
        }
        if let Some(p) = bit_col.iter().position(|&c| c == usize::MAX) {
            return Err(Error::Schema(format!("missing column `{}`", columns[p])));
        }

        let mut records = Vec::new();
        let mut labels = label_col.map(|_| Vec::new());
        for (ri, row) in reader.records().enumerate() {
            let rownum = ri + 1;
            let row = row.map_err(|e| Error::Parse {
                row: Some(rownum),
                message: e.to_string(),
            })?;
            let cell = |ci: usize| -> Result<&str> {
                row.get(ci).map(str::trim).ok_or_else(|| Error::Parse {
                    row: Some(rownum),
                    message: format!("missing cell {ci}"),
                })
            };
            let mut bits = Bits::zeros(schema.len());
            for (p, &ci) in bit_col.iter().enumerate() {
                bits.set(p, parse_binary(cell(ci)?, rownum)?);
            }
            let id = match id_col {
                Some(ci) => cell(ci)?.parse::<u64>().map_err(|e| Error::Parse {
                    row: Some(rownum),
                    message: format!("bad id: {e}"),
                })?,
                None => ri as u64,
            };
            if let Err(group) = schema.validate(&bits) {
                return Err(Error::ExclusivityViolation {
                    group,
                    row: Some(rownum),
                });
            }
            if let (Some(ci), Some(l)) = (label_col, labels.as_mut()) {
                l.push(parse_binary(cell(ci)?, rownum)?);
            }
            records.push(Manifestation::new(id, bits));
        }
        Self::new(schema, records, labels)
    }

    fn parse_json(text: &str, schema: ManifestationSchema) -> Result<Self> {
        let rows: Vec<JsonRecord> = serde_json::from_str(text)?;
        let with_label = rows.iter().filter(|r| r.label.is_some()).count();
        if with_label != 0 && with_label != rows.len() {
            return Err(Error::Schema("label present on some records only".into()));
        }
        let mut records = Vec::with_capacity(rows.len());
        let mut labels = Vec::new();
        for (ri, r) in rows.iter().enumerate() {
            let rownum = ri + 1;
            if r.bits.len() != schema.len() {
                return Err(Error::Parse {
                    row: Some(rownum),
                    message: format!("expected {} bits, found {}", schema.len(), r.bits.len()),
                });
            }
            let mut bits = Bits::zeros(schema.len());
            for (p, &v) in r.bits.iter().enumerate() {
                bits.set(p, binary_value(v, rownum)?);
            }
            if let Err(group) = schema.validate(&bits) {
                return Err(Error::ExclusivityViolation {
                    group,
                    row: Some(rownum),
                });
            }
            if let Some(l) = r.label {
                labels.push(binary_value(l, rownum)?);
            }
            records.push(Manifestation::new(r.id, bits));
        }
        let labels = (with_label > 0).then_some(labels);
        Self::new(schema, records, labels)
    }

    pub fn save(&self, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes(format)?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// The file contents [`save`](Self::save) would write.
    pub fn to_bytes(&self, format: DataFormat) -> Result<Vec<u8>> {
        Ok(match format {
            DataFormat::Csv => self.to_csv()?,
            DataFormat::Json => {
                let rows: Vec<JsonRecord> = self
                    .records
                    .iter()
                    .enumerate()
                    .map(|(i, r)| JsonRecord {
                        id: r.id,
                        bits: r.bits.to_bools().into_iter().map(u8::from).collect(),
                        label: self.labels.as_ref().map(|l| u8::from(l[i])),
                    })
                    .collect();
                serde_json::to_vec(&rows)?
            }
        })
    }

    fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string()];
        header.extend(self.schema.column_names());
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        for (i, r) in self.records.iter().enumerate() {
            let mut row = vec![r.id.to_string()];
            row.extend(r.bits.to_bools().into_iter().map(|b| u8::from(b).to_string()));
            if let Some(l) = &self.labels {
                row.push(u8::from(l[i]).to_string());
            }
            w.write_record(&row)?;
        }
        w.into_inner()
            .map_err(|e| Error::Parse {
                row: None,
                message: e.to_string(),
            })
    }
}

fn parse_binary(cell: &str, row: usize) -> Result<bool> {
    match cell {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse {
            row: Some(row),
            message: format!("expected 0 or 1, found `{other}`"),
        }),
    }
}

fn binary_value(v: u8, row: usize) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(Error::Parse {
            row: Some(row),
            message: format!("expected 0 or 1, found {other}"),
        }),
    }
}
