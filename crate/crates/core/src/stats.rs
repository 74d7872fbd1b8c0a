//! Ensemble statistics and error measures.

use rand::Rng;

/// Per-replica population samples: `runs[r][k][s]`.
pub type Trajectories = [Vec<Vec<u32>>];

/// Mean and standard error of each sample and species over replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub mean: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
    pub replicas: usize,
}

pub fn summarize(runs: &Trajectories) -> EnsembleSummary {
    let n = runs.len();
    let Some(first) = runs.first() else {
        return EnsembleSummary {
            mean: Vec::new(),
            std_error: Vec::new(),
            replicas: 0,
        };
    };
    let (n_samples, n_species) = (first.len(), first.first().map_or(0, Vec::len));
    let mut mean = vec![vec![0.0; n_species]; n_samples];
    let mut sq = vec![vec![0.0; n_species]; n_samples];
    for run in runs {
        for (k, row) in run.iter().enumerate() {
            for (s, &c) in row.iter().enumerate() {
                mean[k][s] += c as f64;
                sq[k][s] += (c as f64) * (c as f64);
            }
        }
    }
    let nf = n as f64;
    let mut std_error = vec![vec![0.0; n_species]; n_samples];
    for k in 0..n_samples {
        for s in 0..n_species {
            mean[k][s] /= nf;
            let var = if n > 1 {
                (sq[k][s] / nf - mean[k][s] * mean[k][s]).max(0.0) * nf / (nf - 1.0)
            } else {
                0.0
            };
            std_error[k][s] = (var / nf).sqrt();
        }
    }
    EnsembleSummary {
        mean,
        std_error,
        replicas: n,
    }
}

/// Largest absolute difference over sample times of the mean of `species`.
pub fn max_norm_error(a: &[Vec<f64>], b: &[Vec<f64>], species: usize) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x[species] - y[species]).abs())
        .fold(0.0, f64::max)
}

/// Average over sample times of the summed absolute mean differences over `species`.
pub fn mean_abs_error(a: &[Vec<f64>], b: &[Vec<f64>], species: &[usize]) -> f64 {
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| species.iter().map(|&s| (x[s] - y[s]).abs()).sum::<f64>())
        .sum();
    total / a.len().max(1) as f64
}

/// Bootstrap standard error of `stat(a, b)`, resampling replicas of both
/// ensembles independently.
pub fn bootstrap_se<R: Rng + ?Sized>(
    a: &Trajectories,
    b: &Trajectories,
    resamples: usize,
    rng: &mut R,
    stat: impl Fn(&[Vec<f64>], &[Vec<f64>]) -> f64,
) -> f64 {
    bootstrap_se_many(&[a, b], resamples, rng, |m| stat(&m[0], &m[1]))
}

/// Bootstrap standard error of a statistic of several ensemble means.
pub fn bootstrap_se_many<R: Rng + ?Sized>(
    ensembles: &[&Trajectories],
    resamples: usize,
    rng: &mut R,
    stat: impl Fn(&[Vec<Vec<f64>>]) -> f64,
) -> f64 {
    let values: Vec<f64> = (0..resamples)
        .map(|_| {
            let means: Vec<Vec<Vec<f64>>> = ensembles.iter().map(|runs| resampled_mean(runs, rng)).collect();
            stat(&means)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / resamples as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (resamples - 1).max(1) as f64).sqrt()
}

fn resampled_mean<R: Rng + ?Sized>(runs: &Trajectories, rng: &mut R) -> Vec<Vec<f64>> {
    let n = runs.len();
    let (ns, nsp) = (runs[0].len(), runs[0].first().map_or(0, Vec::len));
    let mut m = vec![vec![0.0; nsp]; ns];
    for _ in 0..n {
        let r = &runs[rng.random_range(0..n)];
        for (acc, row) in m.iter_mut().zip(r) {
            for (x, &c) in acc.iter_mut().zip(row) {
                *x += c as f64;
            }
        }
    }
    for row in &mut m {
        for x in row {
            *x /= n as f64;
        }
    }
    m
}

/// Normalized histogram of `log10(t)` over `[log10(lo), log10(hi))` with
/// `bins` bins; values below `lo` go to the first bin and values above
/// `hi` or `None` (censored) to an extra overflow bin.
pub fn log_histogram(times: &[Option<f64>], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    let mut h = vec![0.0; bins + 1];
    let w = 1.0 / times.len().max(1) as f64;
    for t in times {
        let k = match t {
            Some(t) if *t < hi => (((t.max(lo).log10() - a) / (b - a) * bins as f64) as usize).min(bins - 1),
            _ => bins,
        };
        h[k] += w;
    }
    h
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;

    #[test]
    fn summary_of_constant_runs() {
        let runs = vec![vec![vec![2, 4]; 3]; 5];
        let s = summarize(&runs);
        assert_eq!(s.mean[1], vec![2.0, 4.0]);
        assert_eq!(s.std_error[2], vec![0.0, 0.0]);
    }

    #[test]
    fn error_measures() {
        let a = vec![vec![1.0, 0.0], vec![3.0, 1.0]];
        let b = vec![vec![1.5, 0.0], vec![1.0, 2.0]];
        assert_eq!(max_norm_error(&a, &b, 0), 2.0);
        assert_eq!(mean_abs_error(&a, &b, &[0, 1]), (0.5 + 3.0) / 2.0);
    }

    #[test]
    fn histogram_mass_and_overflow() {
        let h = log_histogram(&[Some(1e-9), Some(1e-3), Some(0.5), None, Some(2.0)], 1e-8, 1.0, 8);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((h[0] - 0.2).abs() < 1e-12);
        assert!((h[8] - 0.4).abs() < 1e-12);
        assert_eq!(l1_distance(&h, &h), 0.0);
    }

    #[test]
    fn bootstrap_matches_analytic_se() {
        let mut rng = replica_rng(3, 0);
        let a: Vec<Vec<Vec<u32>>> = (0..400).map(|_| vec![vec![rng.random_range(0..10)]]).collect();
        let b = vec![vec![vec![0u32]]; 400];
        let se = bootstrap_se(&a, &b, 400, &mut rng, |x, y| x[0][0] - y[0][0]);
        let want = summarize(&a).std_error[0][0];
        assert!((se / want - 1.0).abs() < 0.15, "{se} vs {want}");
    }
}
