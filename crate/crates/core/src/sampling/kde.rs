//! One-dimensional Gaussian kernel density over centroid distances.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serialized as `"scott"`, `"silverman"` or `"fixed:<h>"`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Bandwidth {
    #[default]
    /// `sigma * N^(-1/5)` with `sigma` the sample standard deviation.
    Scott,
    /// `0.9 * min(sigma, IQR / 1.34) * N^(-1/5)`.
    Silverman,
    Fixed(f64),
}

impl std::fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bandwidth::Scott => f.write_str("scott"),
            Bandwidth::Silverman => f.write_str("silverman"),
            Bandwidth::Fixed(h) => write!(f, "fixed:{h}"),
        }
    }
}

impl From<Bandwidth> for String {
    fn from(b: Bandwidth) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for Bandwidth {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl std::str::FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scott" => Ok(Bandwidth::Scott),
            "silverman" => Ok(Bandwidth::Silverman),
            other => {
                let num = other.strip_prefix("fixed:").unwrap_or(other);
                num.parse::<f64>()
                    .map(Bandwidth::Fixed)
                    .map_err(|_| Error::Config(format!("unknown bandwidth rule {s:?}")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeDensity {
    pub densities: Vec<f64>,
    /// Bandwidth used, `None` when the uniform fallback applied.
    pub bandwidth: Option<f64>,
    pub fallback: bool,
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn resolve(distances: &[f64], rule: Bandwidth) -> f64 {
    let n = distances.len() as f64;
    let sigma = sample_std(distances);
    match rule {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Scott => sigma * n.powf(-0.2),
        Bandwidth::Silverman => {
            let mut sorted = distances.to_vec();
            sorted.sort_by(f64::total_cmp);
            let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
            let spread = if iqr > 0.0 {
                sigma.min(iqr / 1.34)
            } else {
                sigma
            };
            0.9 * spread * n.powf(-0.2)
        }
    }
}

/// Gaussian KDE evaluated at each input distance.
///
/// Identical inputs (zero spread) yield uniform densities `1/N` and set
/// `fallback`.
pub fn kde_density(distances: &[f64], rule: Bandwidth) -> Result<KdeDensity> {
    if distances.is_empty() {
        return Err(Error::Sampling("KDE needs at least one distance".into()));
    }
    if let Some(d) = distances.iter().find(|d| !d.is_finite() || **d < 0.0) {
        return Err(Error::Sampling(format!(
            "distances must be finite and nonnegative, got {d}"
        )));
    }
    if let Bandwidth::Fixed(h) = rule {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Sampling(format!(
                "fixed bandwidth must be > 0, got {h}"
            )));
        }
    }
    let n = distances.len();
    let all_equal = distances.iter().all(|&d| d == distances[0]);
    let h = resolve(distances, rule);
    if all_equal || !(h > 0.0) {
        log::warn!("KDE over {n} identical distances; using uniform densities");
        return Ok(KdeDensity {
            densities: vec![1.0 / n as f64; n],
            bandwidth: None,
            fallback: true,
        });
    }
    let norm = 1.0 / (n as f64 * h * (2.0 * PI).sqrt());
    let densities = distances
        .iter()
        .map(|&di| {
            let s: f64 = distances
                .iter()
                .map(|&dj| {
                    let u = (di - dj) / h;
                    (-0.5 * u * u).exp()
                })
                .sum();
            norm * s
        })
        .collect();
    Ok(KdeDensity {
        densities,
        bandwidth: Some(h),
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_distances_fall_back_to_uniform() {
        let k = kde_density(&[0.4; 5], Bandwidth::Scott).unwrap();
        assert!(k.fallback);
        assert_eq!(k.densities, vec![0.2; 5]);
        let k = kde_density(&[3.0], Bandwidth::Silverman).unwrap();
        assert_eq!(k.densities, vec![1.0]);
    }

    #[test]
    fn dense_points_beat_isolated_point() {
        // Direct evaluation with h = 1, N = 3:
        // rho(0) = (phi(0) + phi(0) + phi(10)) / 3, rho(10) = (2 phi(10) + phi(0)) / 3.
        let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * PI).sqrt();
        let k = kde_density(&[0.0, 0.0, 10.0], Bandwidth::Fixed(1.0)).unwrap();
        let want0 = (2.0 * phi(0.0) + phi(10.0)) / 3.0;
        let want10 = (phi(0.0) + 2.0 * phi(10.0)) / 3.0;
        assert!((k.densities[0] - want0).abs() < 1e-15);
        assert!((k.densities[2] - want10).abs() < 1e-15);
        assert!(k.densities[0] > k.densities[2]);
        assert_eq!(k.densities[0], k.densities[1]);
    }

    #[test]
    fn scott_bandwidth_value() {
        // std of [1,2,3,4] (ddof 1) = sqrt(5/3); h = std * 4^(-1/5)
        let k = kde_density(&[1.0, 2.0, 3.0, 4.0], Bandwidth::Scott).unwrap();
        let want = (5.0f64 / 3.0).sqrt() * 4f64.powf(-0.2);
        assert!((k.bandwidth.unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn silverman_bandwidth_value() {
        // sorted [1,2,3,4,10]: q25 = 2, q75 = 4, IQR/1.34 = 1.4925..; std = 3.5355..
        let d = [10.0, 1.0, 3.0, 2.0, 4.0];
        let k = kde_density(&d, Bandwidth::Silverman).unwrap();
        let want = 0.9 * (2.0 / 1.34) * 5f64.powf(-0.2);
        assert!((k.bandwidth.unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kde_density(&[], Bandwidth::Scott).is_err());
        assert!(kde_density(&[-1.0, 2.0], Bandwidth::Scott).is_err());
        assert!(kde_density(&[1.0, 2.0], Bandwidth::Fixed(0.0)).is_err());
    }

    #[test]
    fn parses_rules() {
        assert_eq!("Scott".parse::<Bandwidth>().unwrap(), Bandwidth::Scott);
        assert_eq!(
            "fixed:0.5".parse::<Bandwidth>().unwrap(),
            Bandwidth::Fixed(0.5)
        );
        assert_eq!("0.25".parse::<Bandwidth>().unwrap(), Bandwidth::Fixed(0.25));
        assert!("wide".parse::<Bandwidth>().is_err());
    }

    proptest! {
        #[test]
        fn positive_and_permutation_invariant(
            d in proptest::collection::vec(0.0f64..50.0, 1..40),
            rot in 0usize..40,
        ) {
            let k = kde_density(&d, Bandwidth::Scott).unwrap();
            prop_assert!(k.densities.iter().all(|&r| r > 0.0));
            let total: f64 = k.densities.iter().sum();
            let p_sum: f64 = k.densities.iter().map(|r| r / total).sum();
            prop_assert!((p_sum - 1.0).abs() < 1e-12);

            let r = rot % d.len();
            let mut rotated = d.clone();
            rotated.rotate_left(r);
            let kr = kde_density(&rotated, Bandwidth::Scott).unwrap();
            for (i, &rho) in k.densities.iter().enumerate() {
                let j = (i + d.len() - r) % d.len();
                prop_assert!((kr.densities[j] - rho).abs() <= 1e-12 * rho.max(1e-300));
            }
        }
    }
}
