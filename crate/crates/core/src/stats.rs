//! Small numerical helpers shared by the verification suites.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Least-squares line `y ≈ slope·x + intercept`. Returns `None` with fewer
/// than two distinct abscissae.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs[..n].iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs[..n].iter().zip(&ys[..n]).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Seeded generator for an independent stream of a suite.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// `max / min` over positive finite entries; `None` if there are none.
pub fn spread(values: &[f64]) -> Option<f64> {
    let pos: Vec<f64> = values.iter().copied().filter(|v| v.is_finite() && *v > 0.0).collect();
    if pos.is_empty() {
        return None;
    }
    let hi = pos.iter().cloned().fold(f64::MIN, f64::max);
    let lo = pos.iter().cloned().fold(f64::MAX, f64::min);
    Some(hi / lo)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| -0.75 * x + 2.0).collect();
        let (s, b) = linear_fit(&xs, &ys).unwrap();
        assert!((s + 0.75).abs() < 1e-14 && (b - 2.0).abs() < 1e-14);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn spread_ignores_zeros() {
        assert_eq!(spread(&[0.0, 2.0, 8.0]), Some(4.0));
        assert_eq!(spread(&[0.0]), None);
    }
}
