//! Running integrals on the uniform grid.
//!
//! Even-indexed nodes accumulate composite Simpson panels. An odd-indexed
//! node adds one cell to the preceding even node using the three-point
//! single-cell rule, so every node carries an `O(h^4)` value and the total
//! over `[0, pi]` is plain composite Simpson when the node count is odd.

/// Cumulative integral `F_j = int_0^{x_j} f` from samples `f` with spacing `h`.
pub fn cumulative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (f[0] + f[1]);
        return out;
    }
    let mut j = 2;
    while j < n {
        out[j] = out[j - 2] + h / 3.0 * (f[j - 2] + 4.0 * f[j - 1] + f[j]);
        j += 2;
    }
    let mut j = 1;
    while j < n {
        out[j] = if j + 1 < n {
            out[j - 1] + h / 12.0 * (5.0 * f[j - 1] + 8.0 * f[j] - f[j + 1])
        } else {
            // last node, odd index: close the final cell from the left
            out[j - 1] + h / 12.0 * (-f[j - 2] + 8.0 * f[j - 1] + 5.0 * f[j])
        };
        j += 2;
    }
    out
}

/// Cumulative integral from values, first and second derivatives: each cell
/// integrates the quintic Hermite interpolant exactly, `O(h^6)` overall.
pub fn hermite_cumulative(f: &[f64], df: &[f64], ddf: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    for j in 1..f.len() {
        out[j] = out[j - 1]
            + h * (0.5 * (f[j - 1] + f[j]) + h * (df[j - 1] - df[j]) / 10.0 + h * h * (ddf[j - 1] + ddf[j]) / 120.0);
    }
    out
}

/// Integral over the full grid; identical to the last entry of [`cumulative`].
pub fn integrate(f: &[f64], h: f64) -> f64 {
    cumulative(f, h).last().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn samples(n: usize, f: impl Fn(f64) -> f64) -> (Vec<f64>, f64) {
        let h = PI / (n - 1) as f64;
        ((0..n).map(|i| f(i as f64 * h)).collect(), h)
    }

    #[test]
    fn quadratic_exact_everywhere_cubic_at_even_nodes() {
        for n in [3, 4, 9, 10] {
            let (f, h) = samples(n, |x| 1.0 - 2.0 * x + 0.7 * x * x);
            for (i, v) in cumulative(&f, h).iter().enumerate() {
                let x = i as f64 * h;
                let exact = x - x * x + 0.7 * x.powi(3) / 3.0;
                assert!((v - exact).abs() < 1e-12, "n={n} i={i} {v} vs {exact}");
            }
            let (f, h) = samples(n, |x| 1.0 - 2.0 * x + 0.5 * x * x * x);
            for (i, v) in cumulative(&f, h).iter().enumerate().step_by(2) {
                let x = i as f64 * h;
                let exact = x - x * x + x.powi(4) / 8.0;
                assert!((v - exact).abs() < 1e-12, "n={n} i={i} {v} vs {exact}");
            }
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |n| {
            let (f, h) = samples(n, |x: f64| x.sin().powi(2));
            cumulative(&f, h)
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let x = i as f64 * h;
                    (v - (x / 2.0 - (2.0 * x).sin() / 4.0)).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(41), err(81));
        assert!(e1 / e2 > 12.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn hermite_rule_sixth_order() {
        let err = |n| {
            let (f, h) = samples(n, |x: f64| (3.0 * x).sin() * x.cos());
            let (df, _) = samples(n, |x: f64| 3.0 * (3.0 * x).cos() * x.cos() - (3.0 * x).sin() * x.sin());
            let (ddf, _) = samples(n, |x: f64| -10.0 * (3.0 * x).sin() * x.cos() - 6.0 * (3.0 * x).cos() * x.sin());
            let exact = |x: f64| -(4.0 * x).cos() / 8.0 - (2.0 * x).cos() / 4.0 + 0.375;
            hermite_cumulative(&f, &df, &ddf, h)
                .iter()
                .enumerate()
                .map(|(i, v)| (v - exact(i as f64 * h)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(21), err(41));
        assert!(e1 < 1e-6 && e1 / e2 > 50.0, "{e1} {e2}");
    }

    #[test]
    fn total_matches_cumulative() {
        let (f, h) = samples(12, |x| x.exp());
        assert_eq!(integrate(&f, h), *cumulative(&f, h).last().unwrap());
        assert!((integrate(&f, h) - (PI.exp() - 1.0)).abs() < 1e-2);
    }
}
