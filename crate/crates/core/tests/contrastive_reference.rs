mod common;

use common::*;
use maninex::contrastive::{
    gradients, loss_inter, loss_multimodal, loss_unimodal, nt_xent, LossKind, Modality,
    ProjectionSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIZES: [usize; 4] = [2, 4, 8, 16];

#[test]
fn losses_match_double_loop_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..100 {
        let n = SIZES[trial % 4];
        let b = random_batch(&mut rng, n, 12);
        let tau = rng.random_range(0.05..2.0);
        for _ in 0..4 {
            let i = rng.random_range(0..b.len());
            let j = (i + 1 + rng.random_range(0..b.len() - 1)) % b.len();
            let got = nt_xent(&b, i, j, tau).unwrap();
            assert!((got - ref_nt_xent(&b, i, j, tau)).abs() <= 1e-12);
        }
        let uni = loss_unimodal(&b, tau).unwrap();
        assert!((uni - ref_unimodal(&b, tau)).abs() <= 1e-12, "{uni}");
        for view in [Modality::ImageCc, Modality::ImageMlo] {
            let got = loss_inter(&b, view, tau).unwrap();
            assert!((got - ref_inter(&b, view, tau)).abs() <= 1e-12);
        }
        let multi = loss_multimodal(&b, tau).unwrap();
        let (l_multi, l_uni, l_m) = ref_multimodal(&b, tau);
        assert!((multi.l_multi - l_multi).abs() <= 1e-12);
        assert!((multi.l_uni - l_uni).abs() <= 1e-12);
        assert!((multi.l_m - l_m).abs() <= 1e-12);
        assert_eq!(multi.l_multi, multi.l_m + multi.l_uni);
    }
}

/// Adds rows that must be masked out of the loss under test.
fn with_distractors(b: &ProjectionSet, modality: Modality, count: usize, rng: &mut ChaCha8Rng) -> ProjectionSet {
    let mut out = b.clone();
    for c in 0..count {
        let v: Vec<f64> = (0..b.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
        out.push(&v, modality, 1_000_000 + c as u64);
    }
    out
}

#[test]
fn inter_loss_ignores_other_view_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in SIZES {
        let b = random_batch(&mut rng, n, 8);
        let base = loss_inter(&b, Modality::ImageCc, 0.4).unwrap();
        // unpaired mlo rows cannot enter ℓ_inter(cc, M)
        let noisy = with_distractors(&b, Modality::ImageMlo, 5, &mut rng);
        assert_eq!(loss_inter(&noisy, Modality::ImageCc, 0.4).unwrap(), base);
    }
}

#[test]
fn image_anchor_denominator_excludes_same_modality() {
    // The cross-modal term for an image anchor only ranks manifestation rows,
    // so moving any other image row leaves it unchanged.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let b = random_batch(&mut rng, 6, 8);
    let base = loss_inter(&b, Modality::ImageCc, 0.5).unwrap();
    let mut moved = b.clone();
    for r in 0..b.len() {
        if b.modality(r) == Modality::ImageMlo {
            moved.row_mut(r).iter_mut().for_each(|x| *x = -*x * 3.0);
        }
    }
    assert_eq!(loss_inter(&moved, Modality::ImageCc, 0.5).unwrap(), base);
    assert!(loss_unimodal(&moved, 0.5).unwrap() != loss_unimodal(&b, 0.5).unwrap());
}

#[test]
fn losses_are_scale_invariant_per_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let b = random_batch(&mut rng, 8, 6);
    let mut scaled = b.clone();
    for r in 0..b.len() {
        let c = rng.random_range(0.1..10.0);
        scaled.row_mut(r).iter_mut().for_each(|x| *x *= c);
    }
    let a = loss_multimodal(&b, 0.3).unwrap();
    let s = loss_multimodal(&scaled, 0.3).unwrap();
    assert!((a.l_multi - s.l_multi).abs() < 1e-12);
}

fn check_gradients(kind: LossKind, f: impl Fn(&ProjectionSet, f64) -> f64 + Copy) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst: f64 = 0.0;
    for trial in 0..40 {
        let n = SIZES[trial % 4];
        let b = random_batch(&mut rng, n, 8);
        let tau = rng.random_range(0.2..1.2);
        let g = gradients(&b, tau, kind).unwrap();
        assert!((g.loss - f(&b, tau)).abs() < 1e-12);
        let (fd, fd_tau) = finite_differences(&b, tau, 1e-5, f);
        for (a, n) in g.d_vectors.iter().zip(&fd) {
            worst = worst.max(rel_err(*a, *n, GRAD_FLOOR));
        }
        worst = worst.max(rel_err(g.d_log_tau, fd_tau, GRAD_FLOOR));
    }
    worst
}

#[test]
fn unimodal_gradient_matches_finite_differences() {
    let w = check_gradients(LossKind::Unimodal, ref_unimodal);
    assert!(w <= 1e-6, "worst relative error {w:e}");
}

#[test]
fn inter_gradient_matches_finite_differences() {
    let w = check_gradients(LossKind::Inter(Modality::ImageMlo), |b, t| {
        ref_inter(b, Modality::ImageMlo, t)
    });
    assert!(w <= 1e-6, "worst relative error {w:e}");
}

#[test]
fn multimodal_gradient_matches_finite_differences() {
    let w = check_gradients(LossKind::Multimodal, |b, t| ref_multimodal(b, t).0);
    assert!(w <= 1e-6, "worst relative error {w:e}");
}
