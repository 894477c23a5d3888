//! Statistics used by the experiments: empirical CDFs, two-sample
//! Kolmogorov-Smirnov distance, t-based confidence intervals, least-squares
//! slope tests and the Mann-Whitney U test.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Empirical CDF evaluated at `x` over sorted `data`.
pub fn ecdf(data_sorted: &[f64], x: f64) -> f64 {
    if data_sorted.is_empty() {
        return 0.0;
    }
    data_sorted.partition_point(|v| *v <= x) as f64 / data_sorted.len() as f64
}

/// sup |F_a − F_b| over the pooled sample. Zero when either side is empty.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanCi {
    pub mean: f64,
    /// Half width of the 95% interval; zero for fewer than two samples.
    pub half_width: f64,
    pub n: usize,
}

/// Sample mean with a Student-t 95% confidence interval.
pub fn mean_ci95(xs: &[f64]) -> MeanCi {
    let n = xs.len();
    if n == 0 {
        return MeanCi {
            mean: f64::NAN,
            half_width: f64::NAN,
            n,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return MeanCi {
            mean,
            half_width: 0.0,
            n,
        };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    MeanCi {
        mean,
        half_width: t * (var / n as f64).sqrt(),
        n,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Two-sided p-value of the null hypothesis slope = 0.
    pub p_value: f64,
}

/// Ordinary least squares fit of `ys` on `xs`. Needs at least three points
/// and two distinct abscissae.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let n = xs.len();
    if n != ys.len() || n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_se = (sse / (nf - 2.0) / sxx).sqrt();
    let p_value = if slope_se == 0.0 {
        if slope == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        let t = StudentsT::new(0.0, 1.0, nf - 2.0).expect("positive degrees of freedom");
        2.0 * (1.0 - t.cdf((slope / slope_se).abs()))
    };
    Some(SlopeFit {
        slope,
        intercept,
        slope_se,
        p_value,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub z: f64,
    /// One-sided p-value for "the first sample tends to be larger".
    pub p_greater: f64,
}

/// Mann-Whitney U test with mid-ranks for ties and the tie-corrected normal
/// approximation (continuity-corrected).
pub fn mann_whitney(x: &[f64], y: &[f64]) -> Option<MannWhitney> {
    let (n1, n2) = (x.len(), y.len());
    if n1 == 0 || n2 == 0 {
        return None;
    }
    let mut all: Vec<(f64, bool)> = x
        .iter()
        .map(|v| (*v, true))
        .chain(y.iter().map(|v| (*v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = all.len();
    let mut rank_x = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let mid = (i + j + 2) as f64 / 2.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_x += mid * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (f1, f2, nf) = (n1 as f64, n2 as f64, n as f64);
    let u = rank_x - f1 * (f1 + 1.0) / 2.0;
    let mean = f1 * f2 / 2.0;
    let var = f1 * f2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)).max(1.0));
    if var <= 0.0 {
        return Some(MannWhitney {
            u,
            z: 0.0,
            p_greater: 0.5,
        });
    }
    let z = (u - mean - 0.5) / var.sqrt();
    let p = 1.0 - Normal::standard().cdf(z);
    Some(MannWhitney { u, z, p_greater: p })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecdf_counts_values_at_or_below() {
        let d = [1.0, 2.0, 2.0, 4.0];
        assert_eq!(ecdf(&d, 0.5), 0.0);
        assert_eq!(ecdf(&d, 2.0), 0.75);
        assert_eq!(ecdf(&d, 10.0), 1.0);
    }

    #[test]
    fn ks_distance_hand_computed() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_distance(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        // at x = 2: F_a = 1, F_b = 1/4
        let d = ks_distance(&[1.0, 2.0], &[1.5, 2.5, 3.0, 4.0]);
        assert!((d - 0.75).abs() < 1e-12, "{d}");
        // ties across samples move both CDFs together
        assert_eq!(ks_distance(&[1.0, 1.0], &[1.0]), 0.0);
    }

    #[test]
    fn mean_ci_uses_student_t() {
        // t_{0.975, 1} = 12.7062
        let c = mean_ci95(&[1.0, 3.0]);
        assert_eq!(c.mean, 2.0);
        assert!((c.half_width - 12.706_204_736 * 1.0).abs() < 1e-6, "{c:?}");
        // t_{0.975, 4} = 2.7764, s = sqrt(2.5)
        let c = mean_ci95(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((c.half_width - 2.776_445_105 * (2.5f64 / 5.0).sqrt()).abs() < 1e-6);
        assert_eq!(mean_ci95(&[4.0]).half_width, 0.0);
    }

    #[test]
    fn linear_fit_recovers_an_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert_eq!(f.p_value, 0.0);
        let flat = linear_fit(&xs, &[5.0; 4]).unwrap();
        assert_eq!(flat.p_value, 1.0);
        assert!(linear_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn linear_fit_p_value_matches_hand_computation() {
        // residuals (0.3, -0.6, 0.3) around slope 1: se = sqrt(0.54/1/2), t = 1/0.5196
        let f = linear_fit(&[0.0, 1.0, 2.0], &[0.3, 0.4, 2.3]).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        let t = 1.0 / (0.27f64).sqrt();
        // two-sided p for t with 1 dof: 1 - 2/pi * atan(t)
        let expect = 1.0 - 2.0 / std::f64::consts::PI * t.atan();
        assert!((f.p_value - expect).abs() < 1e-9, "{} vs {expect}", f.p_value);
    }

    #[test]
    fn mann_whitney_statistics() {
        let r = mann_whitney(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.u, 9.0);
        let r = mann_whitney(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        // ties: x = {1, 2}, y = {2, 3}; ranks 1, 2.5 | 2.5, 4
        let r = mann_whitney(&[1.0, 2.0], &[2.0, 3.0]).unwrap();
        assert_eq!(r.u, 0.5);
        // large shifted samples are detected, identical ones are not
        let x: Vec<f64> = (0..200).map(|i| i as f64 + 20.0).collect();
        let y: Vec<f64> = (0..200).map(|i| i as f64).collect();
        assert!(mann_whitney(&x, &y).unwrap().p_greater < 0.01);
        assert!(mann_whitney(&y, &y).unwrap().p_greater > 0.4);
    }
}
