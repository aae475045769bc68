//! Convergence statistics and estimation metrics.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{IrtmError, Result};
use crate::model::{ParamGroup, PosteriorDraws};
use crate::sampling::{normal_cdf, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ess {
    pub ess: f64,
    /// Every draw identical; `ess` is then the draw count.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rhat {
    pub rhat: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Geweke {
    pub z: f64,
    pub p: f64,
    pub degenerate: bool,
}

fn check_chains(chains: &[Vec<f64>]) -> Result<usize> {
    let n = chains.first().map_or(0, Vec::len);
    if chains.is_empty() || n < 4 {
        return Err(IrtmError::Contract("need at least one chain of at least 4 draws".into()));
    }
    if chains.iter().any(|c| c.len() != n) {
        return Err(IrtmError::Contract("chains must have equal length".into()));
    }
    Ok(n)
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains[0][0];
    chains.iter().all(|c| c.iter().all(|&x| x == first))
}

/// Split each chain into two halves, dropping the middle draw when odd.
fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Pooled average ranks mapped to normal scores, Φ⁻¹((r − 3/8)/(S + 1/4)).
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(Vec::len).sum();
    let mut idx: Vec<(f64, usize, usize)> = Vec::with_capacity(total);
    for (c, chain) in chains.iter().enumerate() {
        for (t, &x) in chain.iter().enumerate() {
            idx.push((x, c, t));
        }
    }
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let s = total as f64;
    let mut start = 0;
    while start < total {
        let mut end = start + 1;
        while end < total && idx[end].0 == idx[start].0 {
            end += 1;
        }
        // ranks are 1-based; ties share their average rank
        let rank = (start + end + 1) as f64 / 2.0;
        let z = normal_quantile((rank - 0.375) / (s + 0.25));
        for &(_, c, t) in &idx[start..end] {
            out[c][t] = z;
        }
        start = end;
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Biased autocovariance at one lag.
fn autocov(xs: &[f64], m: f64, lag: usize) -> f64 {
    let n = xs.len();
    let mut s = 0.0;
    for t in 0..n - lag {
        s += (xs[t] - m) * (xs[t + lag] - m);
    }
    s / n as f64
}

/// Upper bound on ESS as a multiple of the total draw count.
pub const ESS_CAP: f64 = 1.5;

/// Multi-chain ESS with Geyer's initial monotone sequence.
fn ess_raw(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov0: Vec<f64> = chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, 0)).collect();
    let nf = n as f64;
    let w = acov0.iter().map(|a| a * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let b_over_n = if m > 1 {
        let gm = mean(&means);
        means.iter().map(|x| (x - gm).powi(2)).sum::<f64>() / (m as f64 - 1.0)
    } else {
        0.0
    };
    let var_plus = w * (nf - 1.0) / nf + b_over_n;
    if !(var_plus > 0.0) {
        return (m * n) as f64;
    }
    let rho = |lag: usize| -> f64 {
        if lag == 0 {
            return 1.0;
        }
        let mean_acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocov(c, mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };
    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while 2 * t + 1 < n {
        let mut p = rho(2 * t) + rho(2 * t + 1);
        if p <= 0.0 {
            break;
        }
        p = p.min(prev);
        sum_pairs += p;
        prev = p;
        t += 1;
    }
    let total = (m * n) as f64;
    // Stan's floor, further capped so that ESS never exceeds 1.5 × total
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / total.log10()).max(1.0 / ESS_CAP);
    total / tau
}

/// Rank-normalized split-chain effective sample size.
pub fn ess_rank_normalized(chains: &[Vec<f64>]) -> Result<Ess> {
    let n = check_chains(chains)?;
    let total = (n * chains.len()) as f64;
    if is_constant(chains) {
        return Ok(Ess {
            ess: total,
            degenerate: true,
        });
    }
    let z = rank_normalize(&split(chains));
    Ok(Ess {
        ess: ess_raw(&z),
        degenerate: false,
    })
}

/// Rank-normalized split R̂.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<Rhat> {
    check_chains(chains)?;
    if is_constant(chains) {
        return Ok(Rhat {
            rhat: 1.0,
            degenerate: true,
        });
    }
    let z = rank_normalize(&split(chains));
    let m = z.len() as f64;
    let n = z[0].len() as f64;
    let means: Vec<f64> = z.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = z
        .iter()
        .zip(&means)
        .map(|(c, &mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .collect();
    let w = mean(&vars);
    let gm = mean(&means);
    let b = n * means.iter().map(|x| (x - gm).powi(2)).sum::<f64>() / (m - 1.0);
    if !(w > 0.0) {
        return Ok(Rhat {
            rhat: f64::INFINITY,
            degenerate: true,
        });
    }
    Ok(Rhat {
        rhat: ((w * (n - 1.0) / n + b / n) / w).sqrt(),
        degenerate: false,
    })
}

/// Fraction of the window length used as the Bartlett truncation lag.
pub const GEWEKE_TAPER: f64 = 0.04;

/// Variance of the window mean: spectral density at zero over n.
fn spectral_variance_of_mean(xs: &[f64]) -> f64 {
    let n = xs.len();
    let mu = mean(xs);
    let lag_max = ((GEWEKE_TAPER * n as f64).ceil() as usize).min(n - 1);
    let mut s0 = autocov(xs, mu, 0);
    for h in 1..=lag_max {
        let w = 1.0 - h as f64 / (lag_max + 1) as f64;
        s0 += 2.0 * w * autocov(xs, mu, h);
    }
    s0.max(0.0) / n as f64
}

/// Geweke z comparing the first `frac_first` and last `frac_last` of a chain.
pub fn geweke_z(chain: &[f64], frac_first: f64, frac_last: f64) -> Result<Geweke> {
    if !(frac_first > 0.0 && frac_last > 0.0 && frac_first + frac_last <= 1.0) {
        return Err(IrtmError::Contract(format!(
            "invalid Geweke windows {frac_first}, {frac_last}"
        )));
    }
    let n = chain.len();
    let na = (frac_first * n as f64).floor() as usize;
    let nb = (frac_last * n as f64).floor() as usize;
    if na < 2 || nb < 2 {
        return Err(IrtmError::Contract(format!("chain of {n} draws is too short for Geweke windows")));
    }
    let a = &chain[..na];
    let b = &chain[n - nb..];
    let var = spectral_variance_of_mean(a) + spectral_variance_of_mean(b);
    if !(var > 0.0) {
        return Ok(Geweke {
            z: 0.0,
            p: 1.0,
            degenerate: true,
        });
    }
    let z = (mean(a) - mean(b)) / var.sqrt();
    Ok(Geweke {
        z,
        p: 2.0 * normal_cdf(-z.abs()),
        degenerate: false,
    })
}

/// Mean squared error over all entries; no alignment.
pub fn mse_theta(estimates: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    if estimates.dim() != truth.dim() {
        return Err(IrtmError::Contract(format!(
            "shape mismatch: {:?} vs {:?}",
            estimates.dim(),
            truth.dim()
        )));
    }
    if estimates.is_empty() {
        return Err(IrtmError::Contract("empty input".into()));
    }
    let sse: f64 = estimates.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum();
    Ok(sse / estimates.len() as f64)
}

/// Linear interpolation between order statistics of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty data");
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed interval from draws.
pub fn credible_interval(draws: &[f64], level: f64) -> (f64, f64) {
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(&s, tail), quantile_sorted(&s, 1.0 - tail))
}

/// Share of parameters whose truth lies in its equal-tailed interval.
/// `draws[p]` holds the draws of parameter p. Level 0 is an empty interval.
pub fn ci_coverage(draws: &[Vec<f64>], truth: &[f64], level: f64) -> Result<f64> {
    if draws.len() != truth.len() || draws.is_empty() {
        return Err(IrtmError::Contract(format!(
            "{} parameter draw sets vs {} true values",
            draws.len(),
            truth.len()
        )));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(IrtmError::Contract(format!("level {level} outside [0, 1]")));
    }
    if level == 0.0 {
        return Ok(0.0);
    }
    let hits = draws
        .iter()
        .zip(truth)
        .filter(|(d, &t)| {
            let (lo, hi) = credible_interval(d, level);
            lo <= t && t <= hi
        })
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoordinateDiagnostics {
    pub index: Vec<usize>,
    pub ess: Ess,
    pub rhat: Rhat,
    /// One entry per chain.
    pub geweke: Vec<Geweke>,
}

/// ESS, R̂ and per-chain Geweke for every coordinate of a parameter group.
pub fn diagnose_group(draws: &PosteriorDraws, group: ParamGroup) -> Result<Vec<CoordinateDiagnostics>> {
    draws
        .coordinate_chains(group)
        .into_iter()
        .map(|(index, chains)| {
            let geweke = chains
                .iter()
                .map(|c| geweke_z(c, 0.1, 0.5))
                .collect::<Result<_>>()?;
            Ok(CoordinateDiagnostics {
                ess: ess_rank_normalized(&chains)?,
                rhat: split_rhat(&chains)?,
                geweke,
                index,
            })
        })
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut s: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if s.is_empty() {
        return f64::NAN;
    }
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::sampling::standard_normal;

    fn iid(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0);
        (0..n).map(|_| standard_normal(&mut rng)).collect()
    }

    #[test]
    fn constant_chain_is_degenerate() {
        let c = vec![vec![2.0; 50]];
        let e = ess_rank_normalized(&c).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.ess, 50.0);
        assert!(split_rhat(&c).unwrap().degenerate);
        assert!(geweke_z(&c[0], 0.1, 0.5).unwrap().degenerate);
    }

    #[test]
    fn too_short_chain_rejected() {
        assert!(ess_rank_normalized(&[vec![1.0, 2.0, 3.0]]).is_err());
        assert!(ess_rank_normalized(&[]).is_err());
    }

    #[test]
    fn disjoint_chains_have_large_rhat() {
        let a = iid(1, 500);
        let b: Vec<f64> = iid(2, 500).into_iter().map(|x| x + 10.0).collect();
        assert!(split_rhat(&[a, b]).unwrap().rhat > 1.5);
    }

    #[test]
    fn level_shift_gives_small_p() {
        let mut c = iid(3, 2000);
        for x in c.iter_mut().take(1000) {
            *x += 2.0;
        }
        let g = geweke_z(&c, 0.1, 0.5).unwrap();
        assert!(g.p < 0.01 && g.z > 0.0);
    }

    #[test]
    fn quantile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
    }

    #[test]
    fn coverage_edge_cases() {
        let draws = vec![vec![0.0, 1.0, 2.0], vec![5.0, 6.0, 7.0]];
        assert_eq!(ci_coverage(&draws, &[1.0, 6.0], 0.95).unwrap(), 1.0);
        assert_eq!(ci_coverage(&draws, &[1.0, 6.0], 0.0).unwrap(), 0.0);
        assert!(ci_coverage(&draws, &[1.0], 0.95).is_err());
    }

    #[test]
    fn mse_examples() {
        let t = Array2::zeros((3, 2));
        assert_eq!(mse_theta(&t, &t).unwrap(), 0.0);
        assert_eq!(mse_theta(&Array2::ones((3, 2)), &t).unwrap(), 1.0);
        assert!(mse_theta(&Array2::ones((2, 2)), &t).is_err());
    }
}
