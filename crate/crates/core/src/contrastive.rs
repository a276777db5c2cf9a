//! NT-Xent contrastive losses over raw projection vectors, with exact
//! gradients.
//!
//! Every loss here is a weighted sum of softmax cross-entropy terms. A term
//! has an anchor row `i`, a positive row `j` and a candidate set `C ∋ j`:
//!
//! ```text
//! ℓ = −sim(z_i, z_j)/τ + log Σ_{k∈C} exp(sim(z_i, z_k)/τ)
//! ```
//!
//! The unimodal loss uses all other image rows as candidates. The
//! cross-modal loss masks same-modality rows: an image anchor only sees
//! manifestation rows and a manifestation anchor only sees rows of one image
//! view. Gradients flow through the cosine normalization back to the raw
//! vectors and to `log τ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    ImageCc,
    ImageMlo,
    Manifestation,
}

impl Modality {
    pub fn is_image(self) -> bool {
        !matches!(self, Modality::Manifestation)
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::ImageCc => "image_cc",
            Modality::ImageMlo => "image_mlo",
            Modality::Manifestation => "manifestation",
        }
    }
}

/// Projection vectors (rows) tagged with modality and instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    dim: usize,
    data: Vec<f64>,
    modality: Vec<Modality>,
    instance: Vec<u64>,
}

impl ProjectionSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
            modality: Vec::new(),
            instance: Vec::new(),
        }
    }

    /// `data` is row-major with `dim` columns.
    pub fn from_parts(
        dim: usize,
        data: Vec<f64>,
        modality: Vec<Modality>,
        instance: Vec<u64>,
    ) -> Result<Self> {
        if dim == 0 || data.len() != dim * modality.len() || modality.len() != instance.len() {
            return Err(Error::InvalidParameter(format!(
                "projection set shape mismatch: {} values, dim {dim}, {} rows, {} instances",
                data.len(),
                modality.len(),
                instance.len()
            )));
        }
        Ok(Self {
            dim,
            data,
            modality,
            instance,
        })
    }

    pub fn push(&mut self, v: &[f64], modality: Modality, instance: u64) {
        assert_eq!(v.len(), self.dim, "row dimension");
        self.data.extend_from_slice(v);
        self.modality.push(modality);
        self.instance.push(instance);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.modality.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modality.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn modality(&self, i: usize) -> Modality {
        self.modality[i]
    }

    pub fn instance(&self, i: usize) -> u64 {
        self.instance[i]
    }
}

/// Trainable temperature kept in the log domain, clamped to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temperature {
    pub log_tau: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for Temperature {
    fn default() -> Self {
        Self::new(0.7)
    }
}

impl Temperature {
    pub fn new(tau: f64) -> Self {
        let mut t = Self {
            log_tau: tau.ln(),
            lo: 0.01,
            hi: 10.0,
        };
        t.clamp();
        t
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    fn clamp(&mut self) {
        self.log_tau = self.log_tau.clamp(self.lo.ln(), self.hi.ln());
    }

    /// Gradient step on `log τ`.
    pub fn step(&mut self, grad_log_tau: f64, lr: f64) {
        self.log_tau -= lr * grad_log_tau;
        self.clamp();
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 {
        return Err(Error::ZeroNorm(0));
    }
    if nv == 0.0 {
        return Err(Error::ZeroNorm(1));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Unit rows, their original norms and the full cosine matrix.
struct Cosines {
    n: usize,
    dim: usize,
    unit: Vec<f64>,
    norms: Vec<f64>,
    sim: Vec<f64>,
}

impl Cosines {
    fn new(batch: &ProjectionSet) -> Result<Self> {
        let (n, dim) = (batch.len(), batch.dim());
        let mut unit = batch.data.clone();
        let mut norms = Vec::with_capacity(n);
        for i in 0..n {
            let r = &mut unit[i * dim..(i + 1) * dim];
            let nr = norm(r);
            if nr == 0.0 || !nr.is_finite() {
                return Err(Error::ZeroNorm(i));
            }
            r.iter_mut().for_each(|x| *x /= nr);
            norms.push(nr);
        }
        let mut sim = vec![0.0; n * n];
        for i in 0..n {
            let ui = &unit[i * dim..(i + 1) * dim];
            sim[i * n + i] = 1.0;
            for k in i + 1..n {
                let uk = &unit[k * dim..(k + 1) * dim];
                let s: f64 = ui.iter().zip(uk).map(|(a, b)| a * b).sum();
                sim[i * n + k] = s;
                sim[k * n + i] = s;
            }
        }
        Ok(Self {
            n,
            dim,
            unit,
            norms,
            sim,
        })
    }

    fn s(&self, i: usize, k: usize) -> f64 {
        self.sim[i * self.n + k]
    }
}

/// One softmax cross-entropy term.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub anchor: usize,
    pub positive: usize,
    /// Must contain `positive`, must not contain `anchor`.
    pub candidates: Vec<usize>,
    pub weight: f64,
}

/// Stable softmax over `logits`, returning (probabilities, log-sum-exp).
fn softmax(logits: &[f64]) -> (Vec<f64>, f64) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = e.iter().sum();
    (e.iter().map(|x| x / z).collect(), max + z.ln())
}

fn term_loss(cos: &Cosines, t: &Term, tau: f64) -> f64 {
    let logits: Vec<f64> = t.candidates.iter().map(|&k| cos.s(t.anchor, k) / tau).collect();
    let (_, lse) = softmax(&logits);
    lse - cos.s(t.anchor, t.positive) / tau
}

fn check_rows(batch: &ProjectionSet, i: usize, j: usize) -> Result<()> {
    if i >= batch.len() || j >= batch.len() || i == j || batch.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need distinct rows i={i}, j={j} in a batch of {}",
            batch.len()
        )));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("temperature must be positive, got {tau}")))
    }
}

/// NT-Xent for anchor `i` and positive `j` over every other row.
pub fn nt_xent(batch: &ProjectionSet, i: usize, j: usize, tau: f64) -> Result<f64> {
    check_rows(batch, i, j)?;
    check_tau(tau)?;
    let cos = Cosines::new(batch)?;
    let t = Term {
        anchor: i,
        positive: j,
        candidates: (0..batch.len()).filter(|&k| k != i).collect(),
        weight: 1.0,
    };
    Ok(term_loss(&cos, &t, tau))
}

/// Softmax of `sim(z_i, z_k)/τ` over `k ≠ i`, as `(k, q_k)` in row order.
pub fn q_distribution(batch: &ProjectionSet, i: usize, tau: f64) -> Result<Vec<(usize, f64)>> {
    if batch.len() < 2 || i >= batch.len() {
        return Err(Error::InvalidParameter(format!(
            "row {i} in a batch of {}",
            batch.len()
        )));
    }
    check_tau(tau)?;
    let cos = Cosines::new(batch)?;
    let ks: Vec<usize> = (0..batch.len()).filter(|&k| k != i).collect();
    let logits: Vec<f64> = ks.iter().map(|&k| cos.s(i, k) / tau).collect();
    let (q, _) = softmax(&logits);
    Ok(ks.into_iter().zip(q).collect())
}

/// Cross-modal NT-Xent for one anchor: same-modality rows are masked out of
/// the denominator. An image anchor is contrasted against manifestation
/// rows; a manifestation anchor against rows of the positive's image view.
pub fn inter_anchor_loss(batch: &ProjectionSet, i: usize, j: usize, tau: f64) -> Result<f64> {
    check_rows(batch, i, j)?;
    check_tau(tau)?;
    let cos = Cosines::new(batch)?;
    let t = Term {
        anchor: i,
        positive: j,
        candidates: inter_candidates(batch, i, j)?,
        weight: 1.0,
    };
    Ok(term_loss(&cos, &t, tau))
}

fn inter_candidates(batch: &ProjectionSet, i: usize, j: usize) -> Result<Vec<usize>> {
    let (ma, mp) = (batch.modality(i), batch.modality(j));
    if ma.is_image() == mp.is_image() {
        return Err(Error::InvalidParameter(
            "cross-modal pair must join an image row and a manifestation row".into(),
        ));
    }
    let keep = |m: Modality| if ma.is_image() { !m.is_image() } else { m == mp };
    Ok((0..batch.len())
        .filter(|&k| k != i && keep(batch.modality(k)))
        .collect())
}

/// Maps instance → row for one modality; duplicates are an error.
fn rows_of(batch: &ProjectionSet, m: Modality) -> Result<Vec<(u64, usize)>> {
    let mut rows: Vec<(u64, usize)> = (0..batch.len())
        .filter(|&r| batch.modality(r) == m)
        .map(|r| (batch.instance(r), r))
        .collect();
    rows.sort();
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::UnpairedInstance(w[0].0));
    }
    Ok(rows)
}

/// Pairs rows of two modalities by instance; every row must have a partner.
fn pair_rows(batch: &ProjectionSet, a: Modality, b: Modality) -> Result<Vec<(usize, usize)>> {
    let ra = rows_of(batch, a)?;
    let rb = rows_of(batch, b)?;
    if ra.is_empty() {
        return Err(Error::MissingModality(a.name()));
    }
    if rb.is_empty() {
        return Err(Error::MissingModality(b.name()));
    }
    let mut out = Vec::with_capacity(ra.len());
    let (mut x, mut y) = (0, 0);
    while x < ra.len() || y < rb.len() {
        match (ra.get(x), rb.get(y)) {
            (Some(p), Some(q)) if p.0 == q.0 => {
                out.push((p.1, q.1));
                x += 1;
                y += 1;
            }
            (Some(p), Some(q)) => return Err(Error::UnpairedInstance(p.0.min(q.0))),
            (Some(p), None) => return Err(Error::UnpairedInstance(p.0)),
            (None, Some(q)) => return Err(Error::UnpairedInstance(q.0)),
            (None, None) => unreachable!(),
        }
    }
    Ok(out)
}

/// Terms of the unimodal loss: every cc and mlo row is an anchor, its
/// other view is the positive, all other image rows are candidates.
pub fn unimodal_terms(batch: &ProjectionSet) -> Result<Vec<Term>> {
    let pairs = pair_rows(batch, Modality::ImageCc, Modality::ImageMlo)?;
    let images: Vec<usize> = (0..batch.len())
        .filter(|&r| batch.modality(r).is_image())
        .collect();
    let w = 1.0 / (2 * pairs.len()) as f64;
    let mut terms = Vec::with_capacity(2 * pairs.len());
    for &(cc, mlo) in &pairs {
        for (a, p) in [(cc, mlo), (mlo, cc)] {
            terms.push(Term {
                anchor: a,
                positive: p,
                candidates: images.iter().copied().filter(|&k| k != a).collect(),
                weight: w,
            });
        }
    }
    Ok(terms)
}

/// Terms of the cross-modal loss between one image view and the
/// manifestation rows, both anchor directions averaged.
pub fn inter_terms(batch: &ProjectionSet, view: Modality) -> Result<Vec<Term>> {
    if !view.is_image() {
        return Err(Error::InvalidParameter("view must be an image modality".into()));
    }
    let pairs = pair_rows(batch, view, Modality::Manifestation)?;
    let w = 1.0 / (2 * pairs.len()) as f64;
    let mut terms = Vec::with_capacity(2 * pairs.len());
    for &(img, man) in &pairs {
        for (a, p) in [(img, man), (man, img)] {
            terms.push(Term {
                anchor: a,
                positive: p,
                candidates: inter_candidates(batch, a, p)?,
                weight: w,
            });
        }
    }
    Ok(terms)
}

fn evaluate(cos: &Cosines, terms: &[Term], tau: f64) -> f64 {
    terms.iter().map(|t| t.weight * term_loss(cos, t, tau)).sum()
}

pub fn loss_unimodal(batch: &ProjectionSet, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let terms = unimodal_terms(batch)?;
    Ok(evaluate(&Cosines::new(batch)?, &terms, tau))
}

pub fn loss_inter(batch: &ProjectionSet, view: Modality, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let terms = inter_terms(batch, view)?;
    Ok(evaluate(&Cosines::new(batch)?, &terms, tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultimodalLoss {
    pub l_multi: f64,
    pub l_uni: f64,
    pub l_m: f64,
}

/// `ℓ_multi = ℓ_M + ℓ_uni` with `ℓ_M` the mean of the cc and mlo
/// cross-modal losses.
pub fn loss_multimodal(batch: &ProjectionSet, tau: f64) -> Result<MultimodalLoss> {
    check_tau(tau)?;
    check_full_pairing(batch)?;
    let cos = Cosines::new(batch)?;
    let l_uni = evaluate(&cos, &unimodal_terms(batch)?, tau);
    let l_cc = evaluate(&cos, &inter_terms(batch, Modality::ImageCc)?, tau);
    let l_mlo = evaluate(&cos, &inter_terms(batch, Modality::ImageMlo)?, tau);
    let l_m = 0.5 * (l_cc + l_mlo);
    Ok(MultimodalLoss {
        l_multi: l_m + l_uni,
        l_uni,
        l_m,
    })
}

fn check_full_pairing(batch: &ProjectionSet) -> Result<()> {
    pair_rows(batch, Modality::ImageCc, Modality::ImageMlo)?;
    pair_rows(batch, Modality::ImageCc, Modality::Manifestation)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Unimodal,
    Inter(Modality),
    Multimodal,
}

impl LossKind {
    /// Flattened terms; the multimodal loss halves each cross-modal term.
    pub fn terms(self, batch: &ProjectionSet) -> Result<Vec<Term>> {
        match self {
            LossKind::Unimodal => unimodal_terms(batch),
            LossKind::Inter(view) => inter_terms(batch, view),
            LossKind::Multimodal => {
                check_full_pairing(batch)?;
                let mut terms = unimodal_terms(batch)?;
                for view in [Modality::ImageCc, Modality::ImageMlo] {
                    terms.extend(inter_terms(batch, view)?.into_iter().map(|mut t| {
                        t.weight *= 0.5;
                        t
                    }));
                }
                Ok(terms)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub loss: f64,
    /// Same row-major layout as the batch.
    pub d_vectors: Vec<f64>,
    pub d_log_tau: f64,
}

/// Loss and its analytic gradient for an explicit list of terms.
pub fn term_gradients(batch: &ProjectionSet, terms: &[Term], tau: f64) -> Result<LossGradients> {
    check_tau(tau)?;
    let cos = Cosines::new(batch)?;
    let n = cos.n;
    // g[i*n+k] = ∂L/∂sim(z_i, z_k), accumulated per (anchor, candidate)
    let mut g = vec![0.0; n * n];
    let mut loss = 0.0;
    let mut d_log_tau = 0.0;
    for t in terms {
        let logits: Vec<f64> = t.candidates.iter().map(|&k| cos.s(t.anchor, k) / tau).collect();
        let (q, lse) = softmax(&logits);
        let lpos = cos.s(t.anchor, t.positive) / tau;
        loss += t.weight * (lse - lpos);
        let mut expected_logit = 0.0;
        for ((&k, &qk), &lk) in t.candidates.iter().zip(&q).zip(&logits) {
            let delta = if k == t.positive { 1.0 } else { 0.0 };
            g[t.anchor * n + k] += t.weight * (qk - delta) / tau;
            expected_logit += qk * lk;
        }
        // logits scale as e^{-log τ}
        d_log_tau += t.weight * (lpos - expected_logit);
    }
    let dim = cos.dim;
    let mut d_vectors = vec![0.0; n * dim];
    for i in 0..n {
        let ui = &cos.unit[i * dim..(i + 1) * dim];
        let mut radial = 0.0;
        let out = &mut d_vectors[i * dim..(i + 1) * dim];
        for k in 0..n {
            let h = g[i * n + k] + g[k * n + i];
            if h == 0.0 || k == i {
                continue;
            }
            let uk = &cos.unit[k * dim..(k + 1) * dim];
            out.iter_mut().zip(uk).for_each(|(o, x)| *o += h * x);
            radial += h * cos.s(i, k);
        }
        let inv = 1.0 / cos.norms[i];
        out.iter_mut()
            .zip(ui)
            .for_each(|(o, x)| *o = (*o - radial * x) * inv);
    }
    Ok(LossGradients {
        loss,
        d_vectors,
        d_log_tau,
    })
}

/// Analytic gradients of the selected loss with respect to every
/// projection vector and `log τ`.
pub fn gradients(batch: &ProjectionSet, tau: f64, kind: LossKind) -> Result<LossGradients> {
    term_gradients(batch, &kind.terms(batch)?, tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[(&[f64], Modality, u64)]) -> ProjectionSet {
        let mut s = ProjectionSet::new(rows[0].0.len());
        for (v, m, i) in rows {
            s.push(v, *m, *i);
        }
        s
    }

    use Modality::{ImageCc as Cc, ImageMlo as Mlo, Manifestation as Man};

    #[test]
    fn cosine_cases() {
        assert!((cosine_sim(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((cosine_sim(&[1.0, -2.0], &[-1.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm(0))));
    }

    #[test]
    fn two_rows_give_zero() {
        let b = set(&[(&[1.0, 0.3], Cc, 0), (&[-0.2, 1.0], Mlo, 0)]);
        assert_eq!(nt_xent(&b, 0, 1, 0.5).unwrap(), 0.0);
        assert_eq!(loss_unimodal(&b, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_four_rows() {
        let b = set(&[
            (&[1.0, 0.0, 0.0], Cc, 0),
            (&[2.0, 0.0, 0.0], Mlo, 0),
            (&[0.0, 1.0, 0.0], Cc, 1),
            (&[0.0, 0.0, 1.0], Mlo, 1),
        ]);
        let e = std::f64::consts::E;
        let expected = -(e / (e + 2.0)).ln();
        assert!((nt_xent(&b, 0, 1, 1.0).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn equal_similarities_give_uniform_q() {
        let v = [0.3, -0.1, 0.7];
        let b = set(&[(&v, Cc, 0), (&v, Mlo, 0), (&v, Cc, 1), (&v, Mlo, 1), (&v, Cc, 2), (&v, Mlo, 2)]);
        let q = q_distribution(&b, 2, 0.3).unwrap();
        assert_eq!(q.len(), 5);
        assert!(q.iter().all(|(_, p)| (p - 0.2).abs() < 1e-15));
        let l = loss_unimodal(&b, 0.3).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sharper_with_lower_temperature() {
        let b = set(&[
            (&[1.0, 0.1], Cc, 0),
            (&[0.9, 0.2], Mlo, 0),
            (&[0.2, 1.0], Cc, 1),
            (&[0.8, 0.5], Mlo, 1),
        ]);
        let peak = |tau| {
            q_distribution(&b, 0, tau)
                .unwrap()
                .iter()
                .map(|x| x.1)
                .fold(0.0, f64::max)
        };
        assert!(peak(1e-3) > peak(1e-2));
    }

    #[test]
    fn single_instance_cross_modal_is_zero() {
        let b = set(&[(&[1.0, 0.0], Cc, 0), (&[0.5, 0.5], Mlo, 0), (&[0.0, 1.0], Man, 0)]);
        let l = loss_multimodal(&b, 0.7).unwrap();
        assert_eq!(l.l_m, 0.0);
        assert_eq!(l.l_uni, 0.0);
        assert_eq!(l.l_multi, 0.0);
    }

    #[test]
    fn pairing_errors() {
        let b = set(&[(&[1.0, 0.0], Cc, 0), (&[0.5, 0.5], Mlo, 1)]);
        assert!(matches!(loss_unimodal(&b, 0.7), Err(Error::UnpairedInstance(0))));
        let b = set(&[(&[1.0, 0.0], Cc, 0), (&[0.5, 0.5], Mlo, 0)]);
        assert!(matches!(
            loss_multimodal(&b, 0.7),
            Err(Error::MissingModality("manifestation"))
        ));
        let b = set(&[(&[1.0, 0.0], Cc, 0), (&[0.0, 0.0], Mlo, 0)]);
        assert!(matches!(loss_unimodal(&b, 0.7), Err(Error::ZeroNorm(1))));
    }

    #[test]
    fn temperature_is_clamped() {
        let mut t = Temperature::default();
        assert!((t.tau() - 0.7).abs() < 1e-15);
        t.step(-1e6, 1.0);
        assert!((t.tau() - 10.0).abs() < 1e-9);
        t.step(1e6, 1.0);
        assert!((t.tau() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn identical_vectors_have_finite_gradients() {
        let v = [0.5, 0.5, -0.2];
        let b = set(&[(&v, Cc, 0), (&v, Mlo, 0), (&v, Man, 0), (&v, Cc, 1), (&v, Mlo, 1), (&v, Man, 1)]);
        let g = gradients(&b, 0.7, LossKind::Multimodal).unwrap();
        assert!(g.d_vectors.iter().all(|x| x.is_finite()));
        // all rows parallel: gradients are orthogonal to the shared direction
        for r in 0..b.len() {
            let dot: f64 = g.d_vectors[r * 3..r * 3 + 3].iter().zip(&v).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-12);
        }
    }
}
