//! Build the precomputed Hamming index over a synthetic population and
//! inspect bucket occupancy for one anchor.

use maninex::toytrain::{generate_synthetic, SyntheticSpec};
use maninex::HammingIndex;

fn main() -> maninex::Result<()> {
    let data = generate_synthetic(&SyntheticSpec::default(), 2024)?;
    let idx = HammingIndex::build(&data.dataset)?;
    println!(
        "{} instances, {} bits, largest observed distance {}",
        idx.n_instances(),
        idx.n_bits(),
        idx.d_max_observed()
    );

    let sizes = idx.bucket_sizes(0)?;
    println!("anchor 0 bucket sizes:");
    for (d, n) in sizes.iter().enumerate().filter(|(_, &n)| n > 0) {
        let first: Vec<u32> = idx.candidates_at(0, d as u32)?.iter().take(5).copied().collect();
        println!("  d={d:2}  {n:5}  e.g. {first:?}");
    }

    // the binary form round-trips byte for byte
    let bytes = idx.to_bytes();
    assert_eq!(HammingIndex::from_bytes(&bytes)?, idx);
    println!("serialized: {} bytes", bytes.len());
    Ok(())
}
