//! Small statistics toolkit for the estimators and the experiment harness.

use statrs::distribution::{ContinuousCDF, Normal};

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (m, f64::INFINITY);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (m, (v / n as f64).sqrt())
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Sample variance with its standard error `s^2 sqrt(2/(n-1) + kurtosis excess / n)`,
/// using the empirical fourth moment.
pub fn variance_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let v = m2 * n / (n - 1.0);
    (v, ((m4 - m2 * m2) / n).max(0.0).sqrt())
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sq = ne.sqrt();
    (d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d))
}

/// `Q_KS(x) = 2 sum_k (-1)^(k-1) exp(-2 k^2 x^2)`.
pub fn kolmogorov_q(x: f64) -> f64 {
    if x < 1e-3 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Silverman's rule-of-thumb bandwidth.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    1.06 * variance(xs).sqrt() * (xs.len() as f64).powf(-0.2)
}

/// Gaussian kernel density estimate at `y` with its standard error.
pub fn kde(xs: &[f64], bw: f64, y: f64) -> (f64, f64) {
    let c = 1.0 / (bw * (2.0 * std::f64::consts::PI).sqrt());
    let vals: Vec<f64> = xs.iter().map(|x| c * (-0.5 * ((y - x) / bw).powi(2)).exp()).collect();
    mean_stderr(&vals)
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Total-variation distance between two 1-D Gaussians on a fixed binning:
/// `bins` equal cells over `center +/- width_sd * sd_ref`, plus the two
/// tails as extra cells.
pub fn tv_gaussians_binned(m1: f64, v1: f64, m2: f64, v2: f64, center: f64, sd_ref: f64, bins: usize, width_sd: f64) -> f64 {
    let p = Normal::new(m1, v1.sqrt()).unwrap();
    let q = Normal::new(m2, v2.sqrt()).unwrap();
    let lo = center - width_sd * sd_ref;
    let hi = center + width_sd * sd_ref;
    let mut tv = (p.cdf(lo) - q.cdf(lo)).abs() + (q.cdf(hi) - p.cdf(hi)).abs();
    let step = (hi - lo) / bins as f64;
    for b in 0..bins {
        let (a, c) = (lo + b as f64 * step, lo + (b + 1) as f64 * step);
        tv += ((p.cdf(c) - p.cdf(a)) - (q.cdf(c) - q.cdf(a))).abs();
    }
    0.5 * tv
}

/// TV distance between an empirical sample and a 1-D Gaussian on the same
/// binning as [`tv_gaussians_binned`].
pub fn tv_sample_gaussian_binned(xs: &[f64], m: f64, v: f64, center: f64, sd_ref: f64, bins: usize, width_sd: f64) -> f64 {
    let q = Normal::new(m, v.sqrt()).unwrap();
    let lo = center - width_sd * sd_ref;
    let hi = center + width_sd * sd_ref;
    let step = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins + 2];
    for x in xs {
        let idx = if *x < lo {
            0
        } else if *x >= hi {
            bins + 1
        } else {
            1 + (((x - lo) / step) as usize).min(bins - 1)
        };
        counts[idx] += 1;
    }
    let n = xs.len() as f64;
    let mut tv = (counts[0] as f64 / n - q.cdf(lo)).abs() + (counts[bins + 1] as f64 / n - (1.0 - q.cdf(hi))).abs();
    for b in 0..bins {
        let (a, c) = (lo + b as f64 * step, lo + (b + 1) as f64 * step);
        tv += (counts[b + 1] as f64 / n - (q.cdf(c) - q.cdf(a))).abs();
    }
    0.5 * tv
}

/// Trapezoid rule on a uniform or non-uniform abscissa.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert!(p > 0.99);
        let b: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert!((d - 0.2).abs() < 2e-3);
        assert!(p < 1e-10);
    }

    #[test]
    fn tv_basics() {
        assert!(tv_gaussians_binned(0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 256, 6.0) < 1e-15);
        let far = tv_gaussians_binned(0.0, 1.0, 50.0, 1.0, 0.0, 1.0, 256, 6.0);
        assert!((far - 1.0).abs() < 1e-9);
        // with the crossing point on a bin edge the binning is lossless:
        // exact TV of a mean shift is 2 Phi(0.25) - 1
        let tv = tv_gaussians_binned(0.0, 1.0, 0.5, 1.0, 0.25, 1.0, 256, 6.0);
        assert!((tv - 0.197_412_651_366).abs() < 1e-9, "{tv}");
        let off = tv_gaussians_binned(0.0, 1.0, 0.5, 1.0, 0.0, 1.0, 256, 6.0);
        assert!(off < tv && off > tv - 1e-3);
    }

    #[test]
    fn mean_and_trapezoid() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((trapezoid(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]) - 2.0).abs() < 1e-15);
    }
}
