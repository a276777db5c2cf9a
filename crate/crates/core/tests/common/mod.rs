//! Test-only reference implementations, written independently of the crate's
//! loss code: plain double loops, direct exponentials, explicit masks.
#![allow(dead_code)]

use maninex::contrastive::{Modality, ProjectionSet};
use rand::Rng;

pub fn ref_cos(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for k in 0..u.len() {
        dot += u[k] * v[k];
        nu += u[k] * u[k];
        nv += v[k] * v[k];
    }
    dot / (nu.sqrt() * nv.sqrt())
}

/// −log( exp(s_ij/τ) / Σ_{k allowed} exp(s_ik/τ) ).
pub fn ref_term(b: &ProjectionSet, i: usize, j: usize, tau: f64, allowed: impl Fn(usize) -> bool) -> f64 {
    let num = (ref_cos(b.row(i), b.row(j)) / tau).exp();
    let mut den = 0.0;
    for k in 0..b.len() {
        if k != i && allowed(k) {
            den += (ref_cos(b.row(i), b.row(k)) / tau).exp();
        }
    }
    -(num / den).ln()
}

pub fn ref_nt_xent(b: &ProjectionSet, i: usize, j: usize, tau: f64) -> f64 {
    ref_term(b, i, j, tau, |_| true)
}

fn partner(b: &ProjectionSet, r: usize, m: Modality) -> usize {
    (0..b.len())
        .find(|&k| b.instance(k) == b.instance(r) && b.modality(k) == m)
        .expect("paired")
}

pub fn ref_unimodal(b: &ProjectionSet, tau: f64) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for r in 0..b.len() {
        let other = match b.modality(r) {
            Modality::ImageCc => Modality::ImageMlo,
            Modality::ImageMlo => Modality::ImageCc,
            Modality::Manifestation => continue,
        };
        let p = partner(b, r, other);
        total += ref_term(b, r, p, tau, |k| b.modality(k) != Modality::Manifestation);
        count += 1;
    }
    total / count as f64
}

pub fn ref_inter(b: &ProjectionSet, view: Modality, tau: f64) -> f64 {
    let mut img_to_m = 0.0;
    let mut m_to_img = 0.0;
    let mut n = 0;
    for r in 0..b.len() {
        if b.modality(r) != view {
            continue;
        }
        let m = partner(b, r, Modality::Manifestation);
        img_to_m += ref_term(b, r, m, tau, |k| b.modality(k) == Modality::Manifestation);
        m_to_img += ref_term(b, m, r, tau, |k| b.modality(k) == view);
        n += 1;
    }
    0.5 * (img_to_m / n as f64 + m_to_img / n as f64)
}

pub fn ref_multimodal(b: &ProjectionSet, tau: f64) -> (f64, f64, f64) {
    let l_uni = ref_unimodal(b, tau);
    let l_m = 0.5 * (ref_inter(b, Modality::ImageCc, tau) + ref_inter(b, Modality::ImageMlo, tau));
    (l_m + l_uni, l_uni, l_m)
}

/// `n` instances, each with cc, mlo and manifestation rows, in shuffled row order.
pub fn random_batch<R: Rng>(rng: &mut R, n: usize, dim: usize) -> ProjectionSet {
    let mut rows: Vec<(Modality, u64)> = (0..n as u64)
        .flat_map(|i| {
            [Modality::ImageCc, Modality::ImageMlo, Modality::Manifestation]
                .into_iter()
                .map(move |m| (m, i * 7 + 3))
        })
        .collect();
    for k in (1..rows.len()).rev() {
        rows.swap(k, rng.random_range(0..=k));
    }
    let mut b = ProjectionSet::new(dim);
    for (m, id) in rows {
        let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        b.push(&v, m, id);
    }
    b
}

/// Relative error with the denominator floored at `floor`: below it the
/// comparison is absolute at resolution `tol · floor`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Gradient floor. Central differences with h = 1e-5 in f64 carry ~1e-10
/// absolute noise, so a 1e-6 relative check is only resolvable above ~1e-4.
pub const GRAD_FLOOR: f64 = 1e-3;

/// Central finite differences of `f` over every vector component and log τ.
pub fn finite_differences(
    b: &ProjectionSet,
    tau: f64,
    h: f64,
    f: impl Fn(&ProjectionSet, f64) -> f64,
) -> (Vec<f64>, f64) {
    let dim = b.dim();
    let mut out = Vec::with_capacity(b.data().len());
    for idx in 0..b.data().len() {
        let (r, c) = (idx / dim, idx % dim);
        let mut p = b.clone();
        p.row_mut(r)[c] += h;
        let mut m = b.clone();
        m.row_mut(r)[c] -= h;
        out.push((f(&p, tau) - f(&m, tau)) / (2.0 * h));
    }
    let lt = tau.ln();
    let dt = (f(b, (lt + h).exp()) - f(b, (lt - h).exp())) / (2.0 * h);
    (out, dt)
}
