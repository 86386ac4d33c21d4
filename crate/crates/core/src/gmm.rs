//! Full-covariance Gaussian mixtures: density evaluation, EM fitting,
//! kernel-count selection and conditioning.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_COMPONENTS: usize = 50;
pub const KERNEL_LADDER: [usize; 7] = [1, 2, 4, 8, 16, 32, 50];

/// Weighted sum of Gaussians. Covariances are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
}

/// Lower Cholesky factor of a row-major matrix, `None` unless positive
/// definite.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Pre-factored component used in density evaluation.
#[derive(Debug, Clone)]
struct Factor {
    chol: Vec<f64>,
    /// log w - d/2 log 2pi - 1/2 log det
    log_scale: f64,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn mahalanobis_sq(chol: &[f64], d: usize, diff: &mut [f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..d {
        let mut s = diff[i];
        for k in 0..i {
            s -= chol[i * d + k] * diff[k];
        }
        let z = s / chol[i * d + i];
        diff[i] = z;
        acc += z * z;
    }
    acc
}

impl GaussianMixture {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covariances.len() != k {
            return Err(Error::invalid(
                "mixture needs matching, nonempty weights, means and covariances",
            ));
        }
        let dim = means[0].len();
        for (m, c) in means.iter().zip(&covariances) {
            if m.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.len(),
                });
            }
            if c.len() != dim * dim {
                return Err(Error::DimensionMismatch {
                    expected: dim * dim,
                    got: c.len(),
                });
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("mixture weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("mixture weights sum to {total}")));
        }
        Ok(Self {
            dim,
            weights,
            means,
            covariances,
        })
    }

    pub fn single(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![covariance])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn factors(&self) -> Result<Vec<Factor>> {
        let d = self.dim;
        self.covariances
            .iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(k, (c, &w))| {
                let chol = cholesky(c, d).ok_or(Error::SingularCovariance { component: k })?;
                let half_log_det: f64 = (0..d).map(|i| chol[i * d + i].ln()).sum();
                Ok(Factor {
                    chol,
                    log_scale: w.ln() - 0.5 * d as f64 * (2.0 * PI).ln() - half_log_det,
                })
            })
            .collect()
    }

    /// Log of each weighted component density at `x`.
    fn weighted_log_densities(
        &self,
        factors: &[Factor],
        x: &[f64],
        out: &mut Vec<f64>,
        scratch: &mut [f64],
    ) {
        out.clear();
        for (f, mean) in factors.iter().zip(&self.means) {
            for i in 0..self.dim {
                scratch[i] = x[i] - mean[i];
            }
            let m = mahalanobis_sq(&f.chol, self.dim, scratch);
            out.push(f.log_scale - 0.5 * m);
        }
    }

    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        Ok(self.logpdf_many(&[x])?[0])
    }

    pub fn logpdf_many<P: AsRef<[f64]>>(&self, points: &[P]) -> Result<Vec<f64>> {
        let factors = self.factors()?;
        let mut buf = Vec::with_capacity(self.len());
        let mut scratch = vec![0.0; self.dim];
        points
            .iter()
            .map(|p| {
                let p = p.as_ref();
                if p.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        got: p.len(),
                    });
                }
                self.weighted_log_densities(&factors, p, &mut buf, &mut scratch);
                Ok(log_sum_exp(&buf))
            })
            .collect()
    }

    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        Ok(self.logpdf(x)?.exp())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for (a, b) in m.iter_mut().zip(mu) {
                *a += w * b;
            }
        }
        m
    }

    /// Overall covariance by the law of total variance.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let mean = self.mean();
        let mut c = vec![0.0; d * d];
        for ((w, mu), cov) in self.weights.iter().zip(&self.means).zip(&self.covariances) {
            for i in 0..d {
                for j in 0..d {
                    c[i * d + j] += w * (cov[i * d + j] + (mu[i] - mean[i]) * (mu[j] - mean[j]));
                }
            }
        }
        c
    }

    fn check_dims(&self, dims: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.dim];
        for &i in dims {
            if i >= self.dim || seen[i] {
                return Err(Error::invalid(format!(
                    "invalid dimension selection {dims:?}"
                )));
            }
            seen[i] = true;
        }
        Ok(())
    }

    /// Marginal over `dims`, in the given order.
    pub fn marginal(&self, dims: &[usize]) -> Result<Self> {
        self.check_dims(dims)?;
        let d = self.dim;
        let n = dims.len();
        let means = self
            .means
            .iter()
            .map(|m| dims.iter().map(|&i| m[i]).collect())
            .collect();
        let covariances = self
            .covariances
            .iter()
            .map(|c| {
                let mut s = vec![0.0; n * n];
                for (a, &i) in dims.iter().enumerate() {
                    for (b, &j) in dims.iter().enumerate() {
                        s[a * n + b] = c[i * d + j];
                    }
                }
                s
            })
            .collect();
        Ok(Self {
            dim: n,
            weights: self.weights.clone(),
            means,
            covariances,
        })
    }

    /// Conditional mixture over the dimensions not in `observed`, in
    /// ascending order. Component weights are reweighted by each component's
    /// marginal density at `values`; components whose weight underflows to
    /// zero are dropped.
    pub fn condition(&self, observed: &[usize], values: &[f64]) -> Result<Self> {
        self.check_dims(observed)?;
        if observed.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: observed.len(),
                got: values.len(),
            });
        }
        let rest: Vec<usize> = (0..self.dim).filter(|i| !observed.contains(i)).collect();
        if rest.is_empty() {
            return Err(Error::invalid(
                "conditioning on every dimension leaves nothing",
            ));
        }
        let d = self.dim;
        let (na, nb) = (rest.len(), observed.len());
        let xb = DVector::from_column_slice(values);
        let mut log_w = Vec::with_capacity(self.len());
        let mut means = Vec::with_capacity(self.len());
        let mut covs = Vec::with_capacity(self.len());
        for (k, (mu, c)) in self.means.iter().zip(&self.covariances).enumerate() {
            let sub = |r: &[usize], s: &[usize]| {
                DMatrix::from_fn(r.len(), s.len(), |i, j| c[r[i] * d + s[j]])
            };
            let saa = sub(&rest, &rest);
            let sab = sub(&rest, observed);
            let sbb = sub(observed, observed);
            let mua = DVector::from_iterator(na, rest.iter().map(|&i| mu[i]));
            let mub = DVector::from_iterator(nb, observed.iter().map(|&i| mu[i]));
            let chol = sbb
                .clone()
                .cholesky()
                .ok_or(Error::SingularCovariance { component: k })?;
            let diff = &xb - &mub;
            let alpha = chol.solve(&diff);
            let half_log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum();
            let maha = diff.dot(&alpha);
            log_w.push(
                self.weights[k].ln()
                    - 0.5 * nb as f64 * (2.0 * PI).ln()
                    - half_log_det
                    - 0.5 * maha,
            );
            let mean = &mua + &sab * &alpha;
            let gain = chol.solve(&sab.transpose());
            let mut cov = &saa - &sab * gain;
            cov = (&cov + cov.transpose()) * 0.5;
            means.push(mean.iter().copied().collect::<Vec<f64>>());
            covs.push(cov.transpose().iter().copied().collect::<Vec<f64>>());
        }
        let norm = log_sum_exp(&log_w);
        if !norm.is_finite() {
            return Err(Error::Numerical(
                "observation has zero density under every component".into(),
            ));
        }
        let mut out = Self {
            dim: na,
            weights: Vec::new(),
            means: Vec::new(),
            covariances: Vec::new(),
        };
        for ((lw, m), c) in log_w.into_iter().zip(means).zip(covs) {
            let w = (lw - norm).exp();
            if w > 0.0 {
                out.weights.push(w);
                out.means.push(m);
                out.covariances.push(c);
            }
        }
        let total: f64 = out.weights.iter().sum();
        out.weights.iter_mut().for_each(|w| *w /= total);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmConfig {
    /// Stop when the relative log-likelihood improvement falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Floor on covariance eigenvalues.
    pub regularization: f64,
    /// Components lighter than this are dropped.
    pub min_weight: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 500,
            regularization: 1e-6,
            min_weight: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub mixture: GaussianMixture,
    /// Mean log-likelihood per point, one entry per E-step.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub dropped: usize,
}

impl EmFit {
    pub fn final_log_likelihood(&self) -> f64 {
        self.log_likelihood
            .last()
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }
}

/// Raises every eigenvalue of a symmetric matrix to at least `floor`. For a
/// fixed mean this is the maximum-likelihood covariance under the
/// eigenvalue constraint, so EM stays monotone.
fn clip_eigenvalues(s: &[f64], d: usize, floor: f64) -> Vec<f64> {
    let m = DMatrix::from_row_slice(d, d, s);
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        let m = DMatrix::from_row_slice(d, d, s);
        let m = (&m + m.transpose()) * 0.5;
        return m.transpose().iter().copied().collect();
    }
    let clipped = eig.eigenvalues.map(|v| v.max(floor));
    let r = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let r = (&r + r.transpose()) * 0.5;
    r.transpose().iter().copied().collect()
}

fn kmeans_pp<R: Rng>(points: &[Vec<f64>], k: usize, scale: &[f64], rng: &mut R) -> Vec<usize> {
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .zip(scale)
            .map(|((x, y), s)| ((x - y) / s).powi(2))
            .sum::<f64>()
    };
    let mut centers = vec![rng.random_range(0..points.len())];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| dist(p, &points[centers[0]]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &v) in d2.iter().enumerate() {
                if u < v {
                    pick = i;
                    break;
                }
                u -= v;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist(p, &points[next]));
        }
    }
    centers
}

/// Weighted M-step: returns (weights, means, covariances) for components
/// with nonzero mass; `resp` is row-major points x components.
fn m_step(
    points: &[Vec<f64>],
    resp: &[f64],
    k: usize,
    floor: f64,
) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = points[0].len();
    let n = points.len();
    let mut nk = vec![0.0; k];
    let mut sums = vec![vec![0.0; d]; k];
    for (i, p) in points.iter().enumerate() {
        for c in 0..k {
            let r = resp[i * k + c];
            if r == 0.0 {
                continue;
            }
            nk[c] += r;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += r * v;
            }
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&nk)
        .map(|(s, &w)| {
            s.iter()
                .map(|v| if w > 0.0 { v / w } else { 0.0 })
                .collect()
        })
        .collect();
    let mut scatter = vec![vec![0.0; d * d]; k];
    let mut diff = vec![0.0; d];
    for (i, p) in points.iter().enumerate() {
        for c in 0..k {
            let r = resp[i * k + c];
            if r == 0.0 {
                continue;
            }
            for a in 0..d {
                diff[a] = p[a] - means[c][a];
            }
            let s = &mut scatter[c];
            for a in 0..d {
                let ra = r * diff[a];
                for b in 0..=a {
                    s[a * d + b] += ra * diff[b];
                }
            }
        }
    }
    let mut weights = Vec::new();
    let mut out_means = Vec::new();
    let mut covs = Vec::new();
    for c in 0..k {
        if nk[c] <= 0.0 {
            continue;
        }
        let s = &mut scatter[c];
        for a in 0..d {
            for b in 0..a {
                s[b * d + a] = s[a * d + b];
            }
        }
        s.iter_mut().for_each(|v| *v /= nk[c]);
        weights.push(nk[c] / n as f64);
        out_means.push(means[c].clone());
        covs.push(clip_eigenvalues(s, d, floor));
    }
    (weights, out_means, covs)
}

/// Fits a `k`-component full-covariance mixture by EM, initialized with
/// k-means++ seeding and a hard-assignment first M-step.
pub fn fit_em(points: &[Vec<f64>], k: usize, config: &EmConfig, seed: u64) -> Result<EmFit> {
    if k == 0 || k > MAX_COMPONENTS {
        return Err(Error::invalid(format!(
            "component count must be in 1..={MAX_COMPONENTS}, got {k}"
        )));
    }
    if points.len() < 10 * k {
        return Err(Error::invalid(format!(
            "{} points are too few for {k} components (need {})",
            points.len(),
            10 * k
        )));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::invalid("points must share a nonzero dimension"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("points must be finite"));
    }
    let n = points.len();
    let mut scale = vec![0.0; d];
    let mut mean = vec![0.0; d];
    for p in points {
        for a in 0..d {
            mean[a] += p[a] / n as f64;
        }
    }
    for p in points {
        for a in 0..d {
            scale[a] += (p[a] - mean[a]).powi(2) / n as f64;
        }
    }
    let scale: Vec<f64> = scale.iter().map(|v| v.sqrt().max(1e-12)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp(points, k, &scale, &mut rng);
    let mut resp = vec![0.0; n * k];
    for (i, p) in points.iter().enumerate() {
        let best = (0..k)
            .min_by(|&a, &b| {
                let da: f64 = p
                    .iter()
                    .zip(&points[centers[a]])
                    .zip(&scale)
                    .map(|((x, y), s)| ((x - y) / s).powi(2))
                    .sum();
                let db: f64 = p
                    .iter()
                    .zip(&points[centers[b]])
                    .zip(&scale)
                    .map(|((x, y), s)| ((x - y) / s).powi(2))
                    .sum();
                da.total_cmp(&db)
            })
            .unwrap_or(0);
        resp[i * k + best] = 1.0;
    }
    let (w, m, mut c) = m_step(points, &resp, k, config.regularization);
    // widen the hard-assignment start so tiny clusters do not begin as spikes
    for cov in &mut c {
        for a in 0..d {
            cov[a * d + a] += 1e-3 * scale[a] * scale[a];
        }
    }
    let mut mixture = GaussianMixture {
        dim: d,
        weights: w,
        means: m,
        covariances: c,
    };
    let mut dropped = k - mixture.len();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut buf = Vec::new();
    let mut scratch = vec![0.0; d];
    for _ in 0..config.max_iterations {
        iterations += 1;
        let kk = mixture.len();
        let factors = mixture.factors()?;
        let mut resp = vec![0.0; n * kk];
        let mut total = 0.0;
        for (i, p) in points.iter().enumerate() {
            mixture.weighted_log_densities(&factors, p, &mut buf, &mut scratch);
            let lse = log_sum_exp(&buf);
            total += lse;
            for c in 0..kk {
                resp[i * kk + c] = (buf[c] - lse).exp();
            }
        }
        let ll = total / n as f64;
        if !ll.is_finite() {
            return Err(Error::Numerical(format!(
                "log-likelihood became {ll} at iteration {iterations}"
            )));
        }
        if let Some(&prev) = trace.last() {
            trace.push(ll);
            if ll - prev < config.tolerance * f64::abs(prev).max(1.0) {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        let (mut w, mut m, mut c) = m_step(points, &resp, kk, config.regularization);
        let kept: Vec<usize> = (0..w.len())
            .filter(|&i| w[i] >= config.min_weight)
            .collect();
        if kept.len() < w.len() {
            log::info!("dropped {} degenerate components", w.len() - kept.len());
            let s: f64 = kept.iter().map(|&i| w[i]).sum();
            w = kept.iter().map(|&i| w[i] / s).collect();
            m = kept.iter().map(|&i| m[i].clone()).collect();
            c = kept.iter().map(|&i| c[i].clone()).collect();
        }
        dropped += kk - w.len();
        mixture = GaussianMixture {
            dim: d,
            weights: w,
            means: m,
            covariances: c,
        };
    }
    Ok(EmFit {
        mixture,
        log_likelihood: trace,
        iterations,
        converged,
        dropped,
    })
}

pub fn parameter_count(k: usize, d: usize) -> usize {
    (k - 1) + k * d + k * d * (d + 1) / 2
}

/// Bayesian information criterion of a fit on `n` points.
pub fn bic(fit: &EmFit, n: usize) -> f64 {
    let k = fit.mixture.len();
    -2.0 * fit.final_log_likelihood() * n as f64
        + parameter_count(k, fit.mixture.dim) as f64 * (n as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub requested: usize,
    pub components: usize,
    pub log_likelihood: f64,
    pub bic: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSelection {
    pub fit: EmFit,
    pub trace: Vec<SelectionStep>,
}

/// Fits every ladder size up to `k_max` that the data supports and keeps
/// the fit with the smallest BIC.
pub fn select_kernels(
    points: &[Vec<f64>],
    k_max: usize,
    config: &EmConfig,
    seed: u64,
) -> Result<KernelSelection> {
    if k_max == 0 || k_max > MAX_COMPONENTS {
        return Err(Error::invalid(format!(
            "k_max must be in 1..={MAX_COMPONENTS}, got {k_max}"
        )));
    }
    let mut best: Option<(f64, EmFit)> = None;
    let mut trace = Vec::new();
    for &k in KERNEL_LADDER
        .iter()
        .filter(|&&k| k <= k_max && points.len() >= 10 * k)
    {
        let fit = fit_em(points, k, config, seed.wrapping_add(k as u64))?;
        let score = bic(&fit, points.len());
        log::debug!("k={k}: ll={:.5} bic={score:.2}", fit.final_log_likelihood());
        trace.push(SelectionStep {
            requested: k,
            components: fit.mixture.len(),
            log_likelihood: fit.final_log_likelihood(),
            bic: score,
            iterations: fit.iterations,
        });
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, fit));
        }
    }
    let (_, fit) = best.ok_or_else(|| {
        Error::invalid(format!(
            "{} points are too few for one component",
            points.len()
        ))
    })?;
    Ok(KernelSelection { fit, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn cloud(centers: &[[f64; 2]], sd: f64, per: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for c in centers {
            for _ in 0..per {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                out.push(vec![c[0] + sd * a, c[1] + sd * b]);
            }
        }
        out
    }

    #[test]
    fn standard_normal_density() {
        let g = GaussianMixture::single(vec![0.0], vec![1.0]).unwrap();
        assert!((g.logpdf(&[0.0]).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-12);
        let far = g.logpdf(&[1e5]).unwrap();
        assert!(far.is_finite() && far < -1e9);
    }

    #[test]
    fn duplicated_component_collapses() {
        let cov = vec![2.0, 0.3, 0.3, 1.0];
        let one = GaussianMixture::single(vec![1.0, -1.0], cov.clone()).unwrap();
        let two = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![1.0, -1.0]; 2],
            vec![cov.clone(), cov],
        )
        .unwrap();
        for x in [[0.0, 0.0], [3.0, 1.0], [-2.0, 5.0]] {
            assert!((one.logpdf(&x).unwrap() - two.logpdf(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_gaussian_mean_recovered() {
        let pts = cloud(&[[2.0, -1.0]], 1.0, 500, 1);
        let fit = fit_em(&pts, 1, &EmConfig::default(), 0).unwrap();
        let n = pts.len() as f64;
        for a in 0..2 {
            let m: f64 = pts.iter().map(|p| p[a]).sum::<f64>() / n;
            assert!((fit.mixture.means[0][a] - m).abs() < 3.0 / n.sqrt());
        }
    }

    #[test]
    fn separated_clusters_get_hard_responsibilities() {
        let pts = cloud(&[[0.0, 0.0], [10.0, 10.0]], 1.0, 300, 2);
        let fit = fit_em(&pts, 2, &EmConfig::default(), 3).unwrap();
        let mut means = fit.mixture.means.clone();
        means.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!(means[0].iter().all(|v| v.abs() < 0.3));
        assert!(means[1].iter().all(|v| (v - 10.0).abs() < 0.3));
        let f = fit.mixture.factors().unwrap();
        let mut buf = Vec::new();
        let mut scratch = vec![0.0; 2];
        for p in &pts {
            fit.mixture
                .weighted_log_densities(&f, p, &mut buf, &mut scratch);
            let lse = log_sum_exp(&buf);
            let rmax = buf.iter().map(|v| (v - lse).exp()).fold(0.0, f64::max);
            assert!(rmax > 0.999);
        }
    }

    #[test]
    fn em_is_monotone() {
        for seed in 0..5 {
            let pts = cloud(&[[0.0, 0.0], [3.0, 1.0], [1.0, 4.0]], 1.2, 80, seed);
            let fit = fit_em(&pts, 4, &EmConfig::default(), seed).unwrap();
            for w in fit.log_likelihood.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "{w:?}");
            }
        }
    }

    #[test]
    fn too_many_kernels_rejected() {
        let pts = cloud(&[[0.0, 0.0]], 1.0, 1000, 0);
        assert!(fit_em(&pts, 51, &EmConfig::default(), 0).is_err());
        assert!(fit_em(&pts[..15], 2, &EmConfig::default(), 0).is_err());
    }

    #[test]
    fn bic_prefers_truth() {
        let one = cloud(&[[0.0, 0.0]], 1.0, 600, 7);
        assert_eq!(
            select_kernels(&one, 50, &EmConfig::default(), 1)
                .unwrap()
                .fit
                .mixture
                .len(),
            1
        );
        let three = cloud(&[[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]], 1.0, 300, 8);
        let sel = select_kernels(&three, 50, &EmConfig::default(), 1).unwrap();
        let k = sel.fit.mixture.len();
        assert!((2..=4).contains(&k), "k = {k}");
        assert_eq!(
            sel,
            select_kernels(&three, 50, &EmConfig::default(), 1).unwrap()
        );
    }

    #[test]
    fn independent_blocks_condition_to_marginal() {
        let cov = vec![
            1.0, 0.2, 0.0, 0.0, //
            0.2, 2.0, 0.0, 0.0, //
            0.0, 0.0, 0.5, 0.1, //
            0.0, 0.0, 0.1, 0.7,
        ];
        let g = GaussianMixture::single(vec![1.0, 2.0, 3.0, 4.0], cov).unwrap();
        let c = g.condition(&[0, 1], &[5.0, -3.0]).unwrap();
        assert!((c.means[0][0] - 3.0).abs() < 1e-12);
        assert!((c.means[0][1] - 4.0).abs() < 1e-12);
        assert!((c.covariances[0][1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn bivariate_conditional_line() {
        let (sx, sy, rho) = (2.0, 0.5, 0.6);
        let g = GaussianMixture::single(
            vec![1.0, -1.0],
            vec![sx * sx, rho * sx * sy, rho * sx * sy, sy * sy],
        )
        .unwrap();
        let c = g.condition(&[0], &[3.0]).unwrap();
        let mean = -1.0 + rho * sy / sx * (3.0 - 1.0);
        let var = sy * sy * (1.0 - rho * rho);
        assert!((c.means[0][0] - mean).abs() < 1e-12);
        assert!((c.covariances[0][0] - var).abs() < 1e-12);
    }

    #[test]
    fn clipping_raises_small_eigenvalues() {
        let c = clip_eigenvalues(&[1.0, 1.0, 1.0, 1.0], 2, 1e-3);
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(2, 2, &c));
        assert!(eig.eigenvalues.iter().all(|&v| v >= 1e-3 - 1e-12));
    }
}
