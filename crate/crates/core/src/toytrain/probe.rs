//! Frozen-encoder evaluation: linear probe AUC and cross-modal alignment.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::model::ToyModel;
use super::synthetic::ToyData;
use super::train::project;
use crate::contrastive::{cosine_sim, Modality};
use crate::error::{Error, Result};

/// Mean of the cc and mlo representations `y` (pre-projector).
pub fn representations(model: &ToyModel, data: &ToyData, rows: &[usize]) -> Array2<f64> {
    let cc = model.f_i.apply(&data.cc.select(Axis(0), rows));
    let mlo = model.f_i.apply(&data.mlo.select(Axis(0), rows));
    (cc + mlo) * 0.5
}

/// Area under the ROC curve via the rank-sum statistic; tied scores
/// share their average rank.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassSplit(if n_pos == 0 { "no positives" } else { "no negatives" }));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based: i+1 ..= j+1
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// L2-regularised logistic regression on standardised features, fitted by
/// Newton's method. Minimises `Σ logloss + λ/2 ‖w‖²`; the intercept is
/// not penalised.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    mean: Array1<f64>,
    scale: Array1<f64>,
    w: DVector<f64>,
    bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticRegression {
    pub fn fit(x: &Array2<f64>, y: &[bool], lambda: f64, max_iter: usize) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.nrows(),
                right: y.len(),
            });
        }
        if !y.iter().any(|&l| l) || y.iter().all(|&l| l) {
            return Err(Error::SingleClassSplit("probe training labels"));
        }
        let mean = x.mean_axis(Axis(0)).expect("nonempty");
        let scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        let (n, d) = x.dim();
        // design matrix with a trailing intercept column
        let a = DMatrix::from_fn(n, d + 1, |i, j| {
            if j == d {
                1.0
            } else {
                (x[[i, j]] - mean[j]) / scale[j]
            }
        });
        let t = DVector::from_iterator(n, y.iter().map(|&l| if l { 1.0 } else { 0.0 }));
        let mut beta = DVector::zeros(d + 1);
        let mut penalty = DVector::from_element(d + 1, lambda);
        penalty[d] = 0.0;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < max_iter {
            iterations += 1;
            let p = (&a * &beta).map(sigmoid);
            let grad = a.transpose() * (&p - &t) + penalty.component_mul(&beta);
            let wts = p.map(|v| (v * (1.0 - v)).max(1e-12));
            let mut hess = a.transpose() * DMatrix::from_fn(n, d + 1, |i, j| a[(i, j)] * wts[i]);
            for k in 0..=d {
                hess[(k, k)] += penalty[k] + 1e-10;
            }
            let delta = hess
                .cholesky()
                .ok_or_else(|| Error::InvalidParameter("probe Hessian not positive definite".into()))?
                .solve(&grad);
            beta -= &delta;
            if delta.amax() < 1e-10 {
                converged = true;
                break;
            }
        }
        Ok(Self {
            mean,
            scale,
            w: beta.rows(0, d).into_owned(),
            bias: beta[d],
            iterations,
            converged,
        })
    }

    /// Decision values `w · x̃ + b`.
    pub fn decision(&self, x: &Array2<f64>) -> Vec<f64> {
        x.axis_iter(Axis(0))
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| self.w[j] * (v - self.mean[j]) / self.scale[j])
                    .sum::<f64>()
                    + self.bias
            })
            .collect()
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub lambda: f64,
    pub max_iter: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lambda: 3.16,
            max_iter: 1000,
        }
    }
}

/// Fits the probe on `train` representations and returns test AUC.
pub fn linear_probe(
    model: &ToyModel,
    data: &ToyData,
    train: &[usize],
    test: &[usize],
    cfg: ProbeConfig,
) -> Result<f64> {
    let pick = |rows: &[usize]| rows.iter().map(|&r| data.labels[r]).collect::<Vec<_>>();
    let (y_train, y_test) = (pick(train), pick(test));
    if !y_test.iter().any(|&l| l) || y_test.iter().all(|&l| l) {
        return Err(Error::SingleClassSplit("probe test labels"));
    }
    let lr = LogisticRegression::fit(&representations(model, data, train), &y_train, cfg.lambda, cfg.max_iter)?;
    auc(&lr.decision(&representations(model, data, test)), &y_test)
}

/// Cosine distances between image and manifestation projections of the
/// same instance, both views, plus a fixed-bin histogram over `[0, 2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentHistogram {
    pub distances: Vec<f64>,
    pub mean: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl AlignmentHistogram {
    pub fn from_distances(distances: Vec<f64>, bins: usize) -> Self {
        let bins = bins.max(1);
        let bin_width = 2.0 / bins as f64;
        let mut counts = vec![0; bins];
        for &d in &distances {
            let k = ((d / bin_width).floor().max(0.0) as usize).min(bins - 1);
            counts[k] += 1;
        }
        let mean = distances.iter().sum::<f64>() / distances.len().max(1) as f64;
        Self {
            distances,
            mean,
            bin_width,
            counts,
        }
    }
}

pub fn alignment_histogram(model: &ToyModel, data: &ToyData, rows: &[usize], bins: usize) -> Result<AlignmentHistogram> {
    if model.f_m.inputs() != data.dataset.schema().len() {
        return Err(Error::MissingModality("manifestation"));
    }
    if rows.is_empty() {
        return Err(Error::InvalidParameter("no instances to align".into()));
    }
    let set = project(model, data, rows)?;
    let b = rows.len();
    let mut distances = Vec::with_capacity(2 * b);
    for view in 0..2 {
        for r in 0..b {
            let img = view * b + r;
            debug_assert_eq!(set.modality(2 * b + r), Modality::Manifestation);
            distances.push(1.0 - cosine_sim(set.row(img), set.row(2 * b + r))?);
        }
    }
    Ok(AlignmentHistogram::from_distances(distances, bins))
}
