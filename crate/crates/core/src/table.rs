//! CSV encodings of paths, weights, histograms and scans.
//!
//! Floats use Rust's shortest round-trip decimal form.

use crate::error::{invalid, Result};
use crate::sde::Path;
use crate::tuner::KlScan;
use nalgebra::DVector;

fn write(header: Vec<String>, rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn f(x: f64) -> String {
    x.to_string()
}

/// Columns `path_id, t, x_1, …, x_d`, one row per node.
pub fn paths_csv<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Vec<u8> {
    let paths: Vec<&Path> = paths.into_iter().collect();
    let d = paths.first().map_or(1, |p| p.dim());
    let mut header = vec!["path_id".to_string(), "t".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    let rows = paths.iter().enumerate().flat_map(|(id, p)| {
        p.grid().nodes().iter().enumerate().map(move |(k, t)| {
            let mut row = vec![id.to_string(), f(*t)];
            row.extend(p.states().row(k).iter().map(|x| f(*x)));
            row
        })
    });
    write(header, rows)
}

/// Columns `path_id, log_weight, weight` with self-normalized weights.
pub fn weights_csv(log_weights: &[f64]) -> Vec<u8> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    let rows = log_weights
        .iter()
        .zip(&raw)
        .enumerate()
        .map(|(i, (l, r))| vec![i.to_string(), f(*l), f(r / total)]);
    write(vec!["path_id".into(), "log_weight".into(), "weight".into()], rows)
}

/// Columns `theta, kl_estimate, std_err, ess`.
pub fn kl_scan_csv(scan: &KlScan) -> Vec<u8> {
    let rows = scan
        .points
        .iter()
        .map(|p| vec![f(p.theta), f(p.kl), f(p.std_err), f(p.ess)]);
    write(
        vec!["theta".into(), "kl_estimate".into(), "std_err".into(), "ess".into()],
        rows,
    )
}

/// Columns `iteration, theta_1, …, theta_p`.
pub fn theta_trace_csv(thetas: &[DVector<f64>]) -> Vec<u8> {
    let p = thetas.first().map_or(1, |t| t.len());
    let mut header = vec!["iteration".to_string()];
    header.extend((1..=p).map(|i| format!("theta_{i}")));
    let rows = thetas.iter().enumerate().map(|(n, t)| {
        let mut row = vec![n.to_string()];
        row.extend(t.iter().map(|x| f(*x)));
        row
    });
    write(header, rows)
}

/// Normalized weighted histogram on `bins` equal cells of `[lo, hi)`.
/// Values outside the range are counted in the normalization but not binned.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn new(values: &[f64], weights: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if values.len() != weights.len() || bins == 0 || !(hi > lo) {
            return invalid("histogram needs matching values/weights, bins ≥ 1 and lo < hi");
        }
        let width = (hi - lo) / bins as f64;
        let total: f64 = weights.iter().sum();
        let mut density = vec![0.0; bins];
        for (x, w) in values.iter().zip(weights) {
            let j = ((x - lo) / width).floor();
            if j >= 0.0 && (j as usize) < bins {
                density[j as usize] += w;
            }
        }
        for d in &mut density {
            *d /= total * width;
        }
        Ok(Self { lo, hi, density })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.density.len() as f64
    }

    /// Columns `bin_left, bin_right, density`.
    pub fn to_csv(&self) -> Vec<u8> {
        let w = self.width();
        let rows = self.density.iter().enumerate().map(|(j, d)| {
            let left = self.lo + j as f64 * w;
            vec![f(left), f(left + w), f(*d)]
        });
        write(vec!["bin_left".into(), "bin_right".into(), "density".into()], rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_normalize() {
        let out = String::from_utf8(weights_csv(&[0.0, 2f64.ln()])).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "path_id,log_weight,weight");
        assert!(lines[1].ends_with(&(1.0 / 3.0f64).to_string()));
    }

    #[test]
    fn histogram_integrates_to_one() {
        let h = Histogram::new(&[0.1, 0.2, 0.7], &[1.0, 1.0, 2.0], 0.0, 1.0, 4).unwrap();
        let integral: f64 = h.density.iter().map(|d| d * h.width()).sum();
        assert!((integral - 1.0).abs() < 1e-12);
        assert_eq!(h.density[0], 2.0);
    }
}
