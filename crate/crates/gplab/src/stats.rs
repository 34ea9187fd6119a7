//! Monte Carlo estimation and the statistical verdicts built on it:
//! binomial interval estimates, level bisection, decay-rate fits, ordered
//! comparisons, field moments, and the Gaussian reweighting identity
//! `P[g + h ∈ E] = E[exp(⟨w, g⟩ − ½ wᵀKw) 1_{g ∈ E}]` with `Kw = h`.

use crate::field::FieldModel;
use crate::rng::{self, substream};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

/// Two-sided 95% normal quantile.
pub const Z_TWO_SIDED_95: f64 = 1.959963984540054;
/// One-sided 95% normal quantile.
pub const Z_ONE_SIDED_95: f64 = 1.6448536269514722;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("bisection not bracketed: p({lo}) = {p_lo}, p({hi}) = {p_hi} do not straddle {target}")]
    BisectionNonBracketed { lo: f64, hi: f64, p_lo: f64, p_hi: f64, target: f64 },
    #[error("insufficient hits: {hits} hits at {context}, need at least {need}")]
    InsufficientHits { hits: u64, need: u64, context: String },
    #[error("matrix not positive definite at pivot {pivot}")]
    NotPSD { pivot: usize },
}

/// A binomial proportion with its Wilson score interval.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Estimate {
    pub hits: u64,
    pub replicas: u64,
    pub p: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Estimate {
    /// Wald standard error of the proportion.
    pub fn se(&self) -> f64 {
        (self.p * (1.0 - self.p) / self.replicas as f64).sqrt()
    }
}

/// Wilson score interval at normal quantile `z`.
pub fn wilson(hits: u64, replicas: u64, z: f64) -> Estimate {
    assert!(replicas > 0 && hits <= replicas);
    let n = replicas as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z2 / (4.0 * n)) / n).sqrt() / denom;
    // at the boundary counts the score equation has p̂ itself as a root;
    // pin it so rounding cannot push the interval off the estimate
    let lo = if hits == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if hits == replicas { 1.0 } else { (center + half).min(1.0) };
    Estimate { hits, replicas, p, lo, hi }
}

/// Monte Carlo event probability over replicas `0..replicas`. Replicas are
/// evaluated in parallel; the integer hit count makes the result
/// independent of scheduling.
pub fn estimate(replicas: u64, z: f64, hit: impl Fn(u64) -> bool + Sync) -> Estimate {
    let hits: u64 = (0..replicas).into_par_iter().map(|r| hit(r) as u64).sum();
    wilson(hits, replicas, z)
}

/// One bisection run: the located level and every probe along the way.
#[derive(Clone, Debug, Serialize)]
pub struct Bisection {
    pub level: f64,
    pub probes: Vec<(f64, Estimate)>,
}

/// Bisects a level-monotone event probability to `p(level) = target`.
/// `prob` must be increasing in the level; the initial bracket must
/// straddle the target.
pub fn bisect_lc(
    mut prob: impl FnMut(f64) -> Estimate,
    mut lo: f64,
    mut hi: f64,
    target: f64,
    tol: f64,
) -> Result<Bisection, StatsError> {
    assert!(lo < hi && tol > 0.0);
    let p_lo = prob(lo);
    let p_hi = prob(hi);
    if !(p_lo.p < target && target < p_hi.p) {
        return Err(StatsError::BisectionNonBracketed {
            lo,
            hi,
            p_lo: p_lo.p,
            p_hi: p_hi.p,
            target,
        });
    }
    let mut probes = vec![(lo, p_lo), (hi, p_hi)];
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let p_mid = prob(mid);
        probes.push((mid, p_mid));
        if p_mid.p < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Bisection { level: 0.5 * (lo + hi), probes })
}

/// Exponential-decay fit `ln p(R) ≈ intercept − rate · R`.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(R, ln p̂(R))` pairs entering the fit.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares decay fit. Radii with fewer than `min_hits` hits make the
/// log-probability unreliable and abort the fit.
pub fn fit_decay(radii: &[f64], estimates: &[Estimate], min_hits: u64) -> Result<DecayFit, StatsError> {
    assert_eq!(radii.len(), estimates.len());
    assert!(radii.len() >= 2);
    for (r, e) in radii.iter().zip(estimates) {
        if e.hits < min_hits {
            return Err(StatsError::InsufficientHits {
                hits: e.hits,
                need: min_hits,
                context: format!("radius {r}"),
            });
        }
    }
    let points: Vec<(f64, f64)> = radii.iter().zip(estimates).map(|(r, e)| (*r, e.p.ln())).collect();
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|(x, _)| x).sum();
    let sy: f64 = points.iter().map(|(_, y)| y).sum();
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = points.iter().map(|(_, y)| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(DecayFit { rate: -slope, intercept, r_squared, points })
}

/// Verdict on a hypothesized ordering `P[lesser] ≤ P[greater]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OrderVerdict {
    /// The ordering holds strictly beyond noise.
    Confirms,
    /// Within noise of equality.
    Consistent,
    /// The data contradict the ordering beyond noise.
    Refutes,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Comparison {
    /// `p(greater) − p(lesser)`.
    pub diff: f64,
    pub se: f64,
    pub z_score: f64,
    pub verdict: OrderVerdict,
}

/// Tests the ordering `P[lesser] ≤ P[greater]` at normal quantile `z`.
pub fn compare(lesser: &Estimate, greater: &Estimate, z: f64) -> Comparison {
    let diff = greater.p - lesser.p;
    let se = (lesser.se().powi(2) + greater.se().powi(2)).sqrt();
    let z_score = if se > 0.0 {
        diff / se
    } else if diff > 0.0 {
        f64::INFINITY
    } else if diff < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    let verdict = if z_score > z {
        OrderVerdict::Confirms
    } else if z_score < -z {
        OrderVerdict::Refutes
    } else {
        OrderVerdict::Consistent
    };
    Comparison { diff, se, z_score, verdict }
}

/// Pooled second moments of the field over window and replicas.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentReport {
    pub variance: f64,
    pub lag_correlation: f64,
    pub nodes: usize,
    pub replicas: u64,
}

/// Variance and lag correlation of the (centered) field, pooled over all
/// evaluation nodes and replicas. Sequential accumulation keeps the floats
/// deterministic.
pub fn field_moments(model: &Arc<FieldModel>, seed: u64, replicas: u64, lag: &[i64]) -> MomentReport {
    assert_eq!(lag.len(), model.eval.dim());
    let mut sum_sq = 0.0;
    let mut sum_lag = 0.0;
    let mut n_sq = 0u64;
    let mut n_lag = 0u64;
    let mut shifted = vec![0i64; lag.len()];
    for r in 0..replicas {
        let s = model.sample(seed, r);
        model.eval.visit(|idx, flat| {
            let v = s.fine[flat];
            sum_sq += v * v;
            n_sq += 1;
            for a in 0..lag.len() {
                shifted[a] = idx[a] + lag[a];
            }
            if model.eval.contains(&shifted) {
                sum_lag += v * s.fine[model.eval.flat(&shifted)];
                n_lag += 1;
            }
        });
    }
    let variance = sum_sq / n_sq as f64;
    let lag_correlation = (sum_lag / n_lag as f64) / variance;
    MomentReport {
        variance,
        lag_correlation,
        nodes: model.eval.len(),
        replicas,
    }
}

/// Both sides of the reweighting identity, estimated on `replicas`
/// independent Gaussian vectors per arm.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CmCheck {
    /// Direct arm: `P[g + h ∈ E]`.
    pub direct: Estimate,
    /// Reweighted arm: `E[exp(⟨w, g⟩ − ½ wᵀKw) 1_{g ∈ E}]`.
    pub reweighted: f64,
    pub reweighted_se: f64,
    /// Mean of the bare weight; 1 in expectation.
    pub weight_mean: f64,
    pub weight_se: f64,
}

/// Checks the shift identity for an m-dimensional centered Gaussian vector
/// with covariance `cov`, shift `shift`, and the box event
/// `E = Π [lo_i, hi_i]` (infinite endpoints allowed).
pub fn cameron_martin_check(
    cov: &[Vec<f64>],
    shift: &[f64],
    lo: &[f64],
    hi: &[f64],
    seed: u64,
    replicas: u64,
    z: f64,
) -> Result<CmCheck, StatsError> {
    let m = cov.len();
    assert!(m > 0 && m <= 64, "vector dimension must be in 1..=64");
    assert!(shift.len() == m && lo.len() == m && hi.len() == m);
    let chol = cholesky(cov)?;
    let w = solve_spd(&chol, shift);
    // ½ wᵀKw = ½ ⟨w, h⟩ because Kw = h
    let quad = 0.5 * w.iter().zip(shift).map(|(a, b)| a * b).sum::<f64>();
    let in_box = |g: &[f64], offset: &[f64]| -> bool {
        g.iter()
            .enumerate()
            .all(|(i, v)| v + offset[i] >= lo[i] && v + offset[i] <= hi[i])
    };
    let zero = vec![0.0; m];

    let mut direct_hits = 0u64;
    let mut sum_w = 0.0;
    let mut sum_w2 = 0.0;
    let mut sum_hit = 0.0;
    let mut sum_hit2 = 0.0;
    let mut g = vec![0.0; m];
    let mut zbuf = vec![0.0; m];
    for r in 0..replicas {
        let mut rng_direct = rng::stream(rng::salt(seed, 1), r, substream::GAUSSIAN_VECTOR);
        for slot in zbuf.iter_mut() {
            *slot = rng_direct.sample(StandardNormal);
        }
        mul_lower(&chol, &zbuf, &mut g);
        if in_box(&g, shift) {
            direct_hits += 1;
        }

        let mut rng_weight = rng::stream(rng::salt(seed, 2), r, substream::GAUSSIAN_VECTOR);
        for slot in zbuf.iter_mut() {
            *slot = rng_weight.sample(StandardNormal);
        }
        mul_lower(&chol, &zbuf, &mut g);
        let weight = (w.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() - quad).exp();
        let contrib = if in_box(&g, &zero) { weight } else { 0.0 };
        sum_w += weight;
        sum_w2 += weight * weight;
        sum_hit += contrib;
        sum_hit2 += contrib * contrib;
    }
    let n = replicas as f64;
    let mean_se = |sum: f64, sum2: f64| {
        let mean = sum / n;
        let var = (sum2 / n - mean * mean).max(0.0);
        (mean, (var / n).sqrt())
    };
    let (reweighted, reweighted_se) = mean_se(sum_hit, sum_hit2);
    let (weight_mean, weight_se) = mean_se(sum_w, sum_w2);
    Ok(CmCheck {
        direct: wilson(direct_hits, replicas, z),
        reweighted,
        reweighted_se,
        weight_mean,
        weight_se,
    })
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite
/// matrix.
fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, StatsError> {
    let m = a.len();
    let mut l = vec![vec![0.0; m]; m];
    for i in 0..m {
        assert_eq!(a[i].len(), m);
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 1e-12 {
                    return Err(StatsError::NotPSD { pivot: i });
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b`.
fn solve_spd(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let m = l.len();
    let mut y = vec![0.0; m];
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = y[i];
        for k in i + 1..m {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

fn mul_lower(l: &[Vec<f64>], z: &[f64], out: &mut [f64]) {
    for i in 0..l.len() {
        out[i] = l[i][..=i].iter().zip(z).map(|(a, b)| a * b).sum();
    }
}
