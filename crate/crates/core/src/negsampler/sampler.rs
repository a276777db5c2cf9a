//! Batch construction: manifestation-guided and uniform.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::trunc_gauss::{trunc_gauss_pmf, DiscreteSampler, TruncGaussSpec};
use crate::error::{Error, Result};
use crate::hamming_index::HammingIndex;
use crate::manifest::{DedupKey, ManifestDataset};

/// A sampled negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    /// Instance ordinal in the dataset.
    pub id: usize,
    /// Hamming distance to the anchor.
    pub distance: u32,
    /// The drawn distance had no candidates and a neighbouring bucket was used.
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub anchor: usize,
    pub members: Vec<Member>,
    pub target_size: usize,
}

impl Batch {
    /// Anchor followed by members.
    pub fn instances(&self) -> Vec<usize> {
        std::iter::once(self.anchor)
            .chain(self.members.iter().map(|m| m.id))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.members.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// What to do when the drawn distance has no candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyBucketPolicy {
    /// Walk to the nearest nonempty distance, ties toward the smaller one.
    #[default]
    NearestHarder,
    /// Draw from the pmf restricted to the anchor's nonempty buckets.
    Renormalize,
    /// Treat an empty bucket as an error.
    Strict,
}

fn check_anchor(ds: &ManifestDataset, anchor: usize, size: usize) -> Result<()> {
    if anchor >= ds.len() {
        return Err(Error::UnknownAnchor(anchor));
    }
    if size < 2 {
        return Err(Error::InvalidParameter(format!("batch size must be ≥ 2, got {size}")));
    }
    Ok(())
}

/// Nearest nonempty distance ≥ 1 to `d`, preferring the smaller on ties.
fn nearest_nonempty(sizes: &[u32], d: i64) -> Option<u32> {
    let max = sizes.len() as i64 - 1;
    for delta in 0..=(max + d.abs()) {
        for cand in [d - delta, d + delta] {
            if (1..=max).contains(&cand) && sizes[cand as usize] > 0 {
                return Some(cand as u32);
            }
        }
    }
    None
}

/// Removes members whose manifestation repeats the anchor's or an earlier
/// member's.
pub fn deduplicate(ds: &ManifestDataset, anchor: usize, members: Vec<Member>) -> Vec<Member> {
    let mut seen: HashSet<DedupKey> = HashSet::with_capacity(members.len() + 1);
    seen.insert(ds.records()[anchor].dedup_key());
    members
        .into_iter()
        .filter(|m| seen.insert(ds.records()[m.id].dedup_key()))
        .collect()
}

/// Builds one batch around `anchor`: `size − 1` distances are drawn (with
/// replacement) from the truncated Gaussian, one instance is picked
/// uniformly at each distance, then duplicates are removed. The batch
/// shrinks rather than refills.
pub fn sample_batch_maninegs<R: Rng + ?Sized>(
    idx: &HammingIndex,
    ds: &ManifestDataset,
    anchor: usize,
    spec: &TruncGaussSpec,
    size: usize,
    policy: EmptyBucketPolicy,
    rng: &mut R,
) -> Result<Batch> {
    check_anchor(ds, anchor, size)?;
    if idx.n_instances() != ds.len() {
        return Err(Error::InvalidParameter("index was built over a different dataset".into()));
    }
    let members = draw_negatives(idx, anchor, spec, size - 1, policy, rng)?;
    Ok(Batch {
        anchor,
        members: deduplicate(ds, anchor, members),
        target_size: size,
    })
}

/// The draw stage of [`sample_batch_maninegs`], before deduplication.
pub fn draw_negatives<R: Rng + ?Sized>(
    idx: &HammingIndex,
    anchor: usize,
    spec: &TruncGaussSpec,
    count: usize,
    policy: EmptyBucketPolicy,
    rng: &mut R,
) -> Result<Vec<Member>> {
    let sizes = idx.bucket_sizes(anchor)?;
    if sizes.iter().skip(1).all(|&s| s == 0) {
        return Err(Error::ExhaustedCandidates);
    }
    let nonempty = |d: i64| d >= 1 && (d as usize) < sizes.len() && sizes[d as usize] > 0;

    let base = DiscreteSampler::from_spec(spec)?;
    let restricted = match policy {
        EmptyBucketPolicy::Renormalize => {
            let pmf = trunc_gauss_pmf(spec)?;
            let w: Vec<f64> = spec
                .support()
                .zip(&pmf)
                .map(|(d, &p)| if nonempty(d) { p } else { 0.0 })
                .collect();
            DiscreteSampler::new(spec.a, &w)
        }
        _ => None,
    };
    let draw = restricted.as_ref().unwrap_or(&base);

    let mut members = Vec::with_capacity(count);
    for _ in 0..count {
        let d = draw.sample(rng);
        let (dist, fallback_used) = if nonempty(d) {
            (d as u32, false)
        } else if policy == EmptyBucketPolicy::Strict {
            return Err(Error::InvalidParameter(format!(
                "anchor {anchor} has no candidates at distance {d}"
            )));
        } else {
            (nearest_nonempty(&sizes, d).expect("a nonempty bucket exists"), true)
        };
        let cands = idx.candidates_at(anchor, dist)?;
        let pick = cands[rng.random_range(0..cands.len())] as usize;
        members.push(Member {
            id: pick,
            distance: dist,
            fallback_used,
        });
    }
    Ok(members)
}

/// Uniform draw of `size − 1` distinct other instances. No deduplication
/// unless `dedup` is set.
pub fn sample_batch_uniform<R: Rng + ?Sized>(
    ds: &ManifestDataset,
    anchor: usize,
    size: usize,
    dedup: bool,
    rng: &mut R,
) -> Result<Batch> {
    check_anchor(ds, anchor, size)?;
    if size > ds.len() {
        return Err(Error::SizeExceedsDataset { size, n: ds.len() });
    }
    let members: Vec<Member> = index::sample(rng, ds.len() - 1, size - 1)
        .into_iter()
        .map(|k| {
            let id = if k < anchor { k } else { k + 1 };
            Member {
                id,
                distance: ds.distance(anchor, id),
                fallback_used: false,
            }
        })
        .collect();
    let members = if dedup {
        deduplicate(ds, anchor, members)
    } else {
        members
    };
    Ok(Batch {
        anchor,
        members,
        target_size: size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{Bits, ManifestationSchema};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bits(s: &str) -> Bits {
        Bits::from_bools(&s.chars().map(|c| c == '1').collect::<Vec<_>>())
    }

    fn ds(rows: &[&str]) -> ManifestDataset {
        ManifestDataset::from_bits(
            ManifestationSchema::flat(rows[0].len()),
            rows.iter().map(|r| bits(r)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn nearest_prefers_harder() {
        // sizes indexed by distance 0..=5
        let sizes = [0, 0, 3, 0, 3, 0];
        assert_eq!(nearest_nonempty(&sizes, 3), Some(2));
        assert_eq!(nearest_nonempty(&sizes, 5), Some(4));
        assert_eq!(nearest_nonempty(&sizes, 0), Some(2));
        assert_eq!(nearest_nonempty(&sizes, 1), Some(2));
        assert_eq!(nearest_nonempty(&sizes, 40), Some(4));
        assert_eq!(nearest_nonempty(&[5, 0, 0], 1), None);
    }

    #[test]
    fn toy_point_mass() {
        let data = ds(&["0000", "0001", "0011"]);
        let idx = HammingIndex::build(&data).unwrap();
        let spec = TruncGaussSpec::new(1.0, 1.0, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = sample_batch_maninegs(&idx, &data, 0, &spec, 3, Default::default(), &mut rng)
            .unwrap();
        assert_eq!(b.instances(), vec![0, 1]);
        assert_eq!(b.members[0].distance, 1);
        assert!(!b.members[0].fallback_used);
        assert_eq!(b.target_size, 3);
    }

    #[test]
    fn identical_dataset_is_exhausted() {
        let data = ds(&["0101", "0101", "0101"]);
        let idx = HammingIndex::build(&data).unwrap();
        let spec = TruncGaussSpec::new(1.0, 1.0, 1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = sample_batch_maninegs(&idx, &data, 1, &spec, 3, Default::default(), &mut rng);
        assert!(matches!(err, Err(Error::ExhaustedCandidates)));
    }

    #[test]
    fn fallback_is_flagged() {
        let data = ds(&["0000", "0111", "0011"]);
        let idx = HammingIndex::build(&data).unwrap();
        // all mass at distance 1, which is empty for anchor 0
        let spec = TruncGaussSpec::new(1.0, 1.0, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = sample_batch_maninegs(&idx, &data, 0, &spec, 4, Default::default(), &mut rng)
            .unwrap();
        assert_eq!(b.members.len(), 1);
        assert_eq!(b.members[0].id, 2);
        assert_eq!(b.members[0].distance, 2);
        assert!(b.members[0].fallback_used);

        let strict =
            sample_batch_maninegs(&idx, &data, 0, &spec, 4, EmptyBucketPolicy::Strict, &mut rng);
        assert!(strict.is_err());
    }

    #[test]
    fn dedup_removes_anchor_copies_and_repeats() {
        let data = ds(&["0000", "0000", "0001", "0001", "0011"]);
        let idx = HammingIndex::build(&data).unwrap();
        let spec = TruncGaussSpec::new(1.0, 3.0, 0, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let b =
                sample_batch_maninegs(&idx, &data, 0, &spec, 8, Default::default(), &mut rng)
                    .unwrap();
            let keys: HashSet<_> = b
                .instances()
                .iter()
                .map(|&i| data.records()[i].dedup_key())
                .collect();
            assert_eq!(keys.len(), b.len());
            assert!(b.members.len() <= 2);
            assert!(b.members.iter().all(|m| m.id != 1));
        }
    }

    #[test]
    fn uniform_full_batch_and_errors() {
        let data = ds(&["0000", "0001", "0011", "0111", "1111"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = sample_batch_uniform(&data, 2, 5, false, &mut rng).unwrap();
        let mut ids: Vec<usize> = b.members.iter().map(|m| m.id).collect();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 3, 4]);
        for m in &b.members {
            assert_eq!(m.distance, data.distance(2, m.id));
        }
        assert!(matches!(
            sample_batch_uniform(&data, 0, 6, false, &mut rng),
            Err(Error::SizeExceedsDataset { size: 6, n: 5 })
        ));
        assert!(sample_batch_uniform(&data, 0, 1, false, &mut rng).is_err());
    }
}
