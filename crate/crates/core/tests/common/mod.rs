#![allow(dead_code)]

use bridgesim::Path;

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// `|mean - m| ≤ 3 SE` and `|var - v| ≤ 3 SE` (Gaussian variance SE).
pub fn assert_moments(xs: &[f64], m: f64, v: f64) {
    let n = xs.len() as f64;
    let (mean, var) = mean_var(xs);
    let se_mean = (v / n).sqrt();
    let se_var = v * (2.0 / (n - 1.0)).sqrt();
    assert!((mean - m).abs() <= 3.0 * se_mean, "mean {mean} vs {m} (se {se_mean})");
    assert!((var - v).abs() <= 3.0 * se_var, "variance {var} vs {v} (se {se_var})");
}

pub fn marginal(paths: &[Path], k: usize) -> Vec<f64> {
    paths.iter().map(|p| p.coord(k, 0)).collect()
}
