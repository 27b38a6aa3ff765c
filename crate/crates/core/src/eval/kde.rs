//! Gaussian kernel density estimation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the kernel bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Bandwidth {
    /// `0.9 · min(σ, IQR/1.34) · n^(−1/5)`, floored at 1e-6.
    #[default]
    Silverman,
    Fixed(f64),
}

/// A density evaluated on an ascending grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeCurve {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Silverman's rule-of-thumb bandwidth.
///
/// When the interquartile range is zero the standard deviation alone is
/// used, so heavily tied samples still get a usable kernel.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    const FLOOR: f64 = 1e-6;
    let n = samples.len();
    if n < 2 {
        return FLOOR;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sigma = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sigma.min(iqr / 1.34) } else { sigma };
    (0.9 * spread * (n as f64).powf(-0.2)).max(FLOOR)
}

pub fn resolve_bandwidth(samples: &[f64], rule: Bandwidth) -> Result<f64> {
    let h = match rule {
        Bandwidth::Silverman => silverman_bandwidth(samples),
        Bandwidth::Fixed(h) => h,
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("bandwidth {h} must be positive")));
    }
    Ok(h)
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Grid spanning the samples extended by `pad` bandwidths on each side.
pub fn default_grid(samples: &[f64], bandwidth: f64, pad: f64, points: usize) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    linspace(lo - pad * bandwidth, hi + pad * bandwidth, points)
}

/// `f(x) = 1/(n·h) Σ φ((x − s_i)/h)` with the standard normal pdf `φ`.
pub fn kde(samples: &[f64], grid: &[f64], rule: Bandwidth) -> Result<KdeCurve> {
    if samples.is_empty() {
        return Err(Error::invalid("kernel density of zero samples"));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("kde samples".into()));
    }
    let h = resolve_bandwidth(samples, rule)?;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&s| {
                    let u = (x - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(KdeCurve {
        grid: grid.to_vec(),
        density,
        bandwidth: h,
    })
}

/// `∫ min(f, g)` over a shared grid; 1 for identical densities, 0 for disjoint.
pub fn density_overlap(a: &KdeCurve, b: &KdeCurve) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::shape("densities evaluated on different grids"));
    }
    let m: Vec<f64> = a.density.iter().zip(&b.density).map(|(x, y)| x.min(*y)).collect();
    Ok(trapezoid(&a.grid, &m))
}
