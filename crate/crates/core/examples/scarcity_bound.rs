//! Distance below which uniform sampling almost never yields a negative,
//! next to the exact binomial moments and the mass that lies below it.

use maninex::negsampler::{binomial_pmf, scarcity_lower_bound};

fn main() {
    let p = 0.5;
    println!("  n      mean        sd     bound  P(d < bound)");
    for n in [1u32, 2, 5, 10, 35, 100, 200] {
        let pmf = binomial_pmf(n, p);
        let mean: f64 = pmf.iter().enumerate().map(|(k, q)| k as f64 * q).sum();
        let var: f64 = pmf.iter().enumerate().map(|(k, q)| (k as f64 - mean).powi(2) * q).sum();
        let bound = scarcity_lower_bound(n, p);
        let below: f64 = pmf.iter().enumerate().filter(|(k, _)| (*k as f64) < bound).fold(0.0, |acc, (_, q)| acc + q);
        println!("{n:3}  {mean:8.3}  {:8.4}  {bound:8.4}  {below:.2e}", var.sqrt());
    }
}
