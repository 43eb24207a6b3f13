//! Concentration statistics, trimming, smoothing and the influence and
//! sample-window cross-checks of linear local projections.

mod concentration;
mod influence;
mod trim;
mod windows;

pub use concentration::{concentration, concentration_report, ConcentrationReport, ConcentrationRow, Share};
pub use influence::{influence_split, InfluenceSplit};
pub use trim::{trimmed_irf, TrimBasis, TrimResult};
pub use windows::{window_paths, WindowPaths};

/// Trailing moving average used to smooth weight and contribution series.
pub use crate::dataset::transform::moving_average;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_matches_prefix_sums() {
        let x: Vec<f64> = (0..30).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let w = 6;
        let got = moving_average(&x, w).unwrap();
        let mut prefix = vec![0.0];
        for v in &x {
            prefix.push(prefix.last().unwrap() + v);
        }
        for (i, g) in got.iter().enumerate() {
            let oracle = (prefix[i + w] - prefix[i]) / w as f64;
            assert!((g - oracle).abs() < 1e-12);
        }
        assert_eq!(moving_average(&x, 1).unwrap(), x);
        assert!(moving_average(&x, 31).is_err());
    }
}
