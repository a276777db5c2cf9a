use maninex::{Bits, Error, HammingIndex, ManifestDataset, ManifestationSchema};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(rows: &[Vec<bool>], bits: usize) -> ManifestDataset {
    let bits_rows = rows.iter().map(|r| Bits::from_bools(r)).collect();
    ManifestDataset::from_bits(ManifestationSchema::flat(bits), bits_rows).unwrap()
}

/// Small alphabets force duplicates and empty buckets.
fn small_dataset() -> impl Strategy<Value = ManifestDataset> {
    (1usize..9).prop_flat_map(|bits| {
        proptest::collection::vec(proptest::collection::vec(any::<bool>(), bits), 1..40)
            .prop_map(move |rows| dataset(&rows, bits))
    })
}

fn xor_count(a: &Bits, b: &Bits) -> u32 {
    (0..a.len()).filter(|&i| a.get(i) != b.get(i)).count() as u32
}

proptest! {
    #[test]
    fn buckets_partition_the_other_instances(ds in small_dataset()) {
        let idx = HammingIndex::build(&ds).unwrap();
        for a in 0..ds.len() {
            let total: u32 = idx.bucket_sizes(a).unwrap().iter().sum();
            prop_assert_eq!(total as usize, ds.len() - 1);
            for d in 0..=ds.schema().len() as u32 {
                let c = idx.candidates_at(a, d).unwrap();
                prop_assert!(c.windows(2).all(|w| w[0] < w[1]));
                for &j in c {
                    prop_assert!(j as usize != a);
                    prop_assert_eq!(xor_count(&ds.records()[a].bits, &ds.records()[j as usize].bits), d);
                }
            }
        }
    }

    #[test]
    fn membership_is_symmetric(ds in small_dataset(), picks in proptest::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>(), 0u32..9), 20)) {
        let idx = HammingIndex::build(&ds).unwrap();
        for (a, j, d) in picks {
            let (a, j) = (a.index(ds.len()), j.index(ds.len()));
            let fwd = idx.candidates_at(a, d).unwrap().contains(&(j as u32));
            let back = idx.candidates_at(j, d).unwrap().contains(&(a as u32));
            prop_assert_eq!(fwd, back);
        }
    }

    #[test]
    fn build_is_deterministic_and_round_trips(ds in small_dataset()) {
        let idx = HammingIndex::build(&ds).unwrap();
        prop_assert_eq!(&HammingIndex::build(&ds).unwrap(), &idx);
        let bytes = idx.to_bytes();
        let back = HammingIndex::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &idx);
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_never_yields_an_index(ds in small_dataset(), cut in any::<prop::sample::Index>()) {
        let bytes = HammingIndex::build(&ds).unwrap().to_bytes();
        let at = cut.index(bytes.len());
        prop_assert!(HammingIndex::from_bytes(&bytes[..at]).is_err());
    }
}

#[test]
fn five_hundred_records_match_distance_matrix() {
    let mut g = ChaCha8Rng::seed_from_u64(500);
    let rows: Vec<Vec<bool>> = (0..500).map(|_| (0..35).map(|_| g.random()).collect()).collect();
    let ds = dataset(&rows, 35);
    let idx = HammingIndex::build(&ds).unwrap();
    for a in 0..500 {
        for j in (0..500).filter(|&j| j != a) {
            let d = rows[a].iter().zip(&rows[j]).filter(|(x, y)| x != y).count() as u32;
            assert!(idx.candidates_at(a, d).unwrap().contains(&(j as u32)));
        }
    }
}

#[test]
fn wrong_version_is_reported() {
    let ds = dataset(&[vec![true, false], vec![false, false]], 2);
    let mut bytes = HammingIndex::build(&ds).unwrap().to_bytes();
    bytes[4] = 9;
    assert!(matches!(HammingIndex::from_bytes(&bytes), Err(Error::VersionMismatch { found: 9, .. })));
}

#[test]
fn full_scale_synthetic_index_reserializes_identically() {
    let data = maninex::toytrain::generate_synthetic(&Default::default(), 2024).unwrap();
    let idx = HammingIndex::build(&data.dataset).unwrap();
    let once = idx.to_bytes();
    assert_eq!(HammingIndex::from_bytes(&once).unwrap().to_bytes(), once);
    idx.check_compatible(&data.dataset).unwrap();
}
