//! Draw hard-negative batches while the truncated-Gaussian mean anneals,
//! and compare their anchor distances with uniform batches.

use maninex::negsampler::{
    anchor_distance_histogram, epoch_iterator, ManiNegParams, SamplerRng, SamplingStrategy,
};
use maninex::toytrain::{generate_synthetic, SyntheticSpec};
use maninex::HammingIndex;

fn main() -> maninex::Result<()> {
    let data = generate_synthetic(&SyntheticSpec::default(), 2024)?;
    let ds = &data.dataset;
    let idx = HammingIndex::build(ds)?;
    let rng = SamplerRng::new(7);

    let params = ManiNegParams::default();
    let it = epoch_iterator(Some(&idx), ds, SamplingStrategy::Maninegs(params), 64, rng)?;
    println!("step    mu  batch  mean anchor distance");
    for sb in it.take(2000).step_by(250) {
        let sb = sb?;
        let h = anchor_distance_histogram(std::slice::from_ref(&sb.batch));
        println!(
            "{:4}  {:4.1}  {:5}  {:.2}",
            sb.step,
            sb.mu.unwrap_or(f64::NAN),
            sb.batch.len(),
            h.mean().unwrap_or(f64::NAN)
        );
    }

    let uniform = epoch_iterator(None, ds, SamplingStrategy::Uniform { dedup: false }, 64, rng)?;
    let batches = uniform.take(200).map(|b| b.map(|s| s.batch)).collect::<maninex::Result<Vec<_>>>()?;
    println!("uniform mean anchor distance {:.2}", anchor_distance_histogram(&batches).mean().unwrap());
    Ok(())
}
