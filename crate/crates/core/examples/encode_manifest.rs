//! Encode a few hand-written records with the mammography schema, then
//! decode them and measure their pairwise Hamming distances.

use maninex::{decode, encode_record, hamming, ManifestationSchema, RawRecord};

fn main() -> maninex::Result<()> {
    let schema = ManifestationSchema::mammography();
    println!("schema: {} bits in {} groups", schema.len(), schema.groups().len());

    let raws = [
        RawRecord::new(1)
            .select("mass shape", "irregular")
            .select("mass edge", "spiculated")
            .select("mass density", "high"),
        RawRecord::new(2)
            .select("mass shape", "irregular")
            .select("mass edge", "obscured")
            .select("mass density", "high"),
        RawRecord::new(3).select("mass shape", "round").select("mass size", "≤2cm"),
    ];
    let encoded = raws
        .iter()
        .map(|r| encode_record(r, &schema))
        .collect::<maninex::Result<Vec<_>>>()?;

    for m in &encoded {
        let bits: String = m.bits.to_bools().iter().map(|&b| if b { '1' } else { '0' }).collect();
        println!("id {} -> {bits}", m.id);
        assert_eq!(decode(m, &schema), raws[m.id as usize - 1]);
    }
    for (i, a) in encoded.iter().enumerate() {
        for b in &encoded[i + 1..] {
            println!("d({}, {}) = {}", a.id, b.id, hamming(a, b)?);
        }
    }

    // two options in an exclusive group are rejected
    let bad = RawRecord::new(9).select("mass shape", "round").select("mass shape", "ovoid");
    println!("conflicting record: {}", encode_record(&bad, &schema).unwrap_err());
    Ok(())
}
