//! Difference weights and Gauss–Legendre quadrature.

/// Fornberg weights for the `m`-th derivative at `x0` on nodes `xs`.
pub fn fornberg(m: usize, x0: f64, xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[m]).collect()
}

/// Radius of the central stencil with the given accuracy order for the
/// `m`-th derivative.
pub fn central_radius(m: usize, accuracy: usize) -> usize {
    if m == 0 {
        return 0;
    }
    (2 * m.div_ceil(2) - 1 + accuracy - 1) / 2
}

/// Central weights on integer offsets `-r..=r` for unit spacing.
pub fn central_weights(m: usize, accuracy: usize) -> Vec<f64> {
    let r = central_radius(m, accuracy) as i64;
    let xs: Vec<f64> = (-r..=r).map(|k| k as f64).collect();
    let mut w = fornberg(m, 0.0, &xs);
    // symmetrise away rounding so odd stencils are exactly antisymmetric
    let len = w.len();
    for k in 0..len / 2 {
        let (a, b) = (w[k], w[len - 1 - k]);
        let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
        let avg = 0.5 * (a + sign * b);
        w[k] = avg;
        w[len - 1 - k] = sign * avg;
    }
    if m % 2 == 1 {
        w[len / 2] = 0.0;
    }
    w
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre nodes (ascending) and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[i] = 0.5 * (b - a) * x + 0.5 * (b + a);
        weights[i] = (b - a) / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Differentiation matrix of the interpolating polynomial on `xs`.
pub fn differentiation_matrix(xs: &[f64]) -> Vec<Vec<f64>> {
    let n = xs.len();
    let w: Vec<f64> = (0..n)
        .map(|j| 1.0 / (0..n).filter(|&k| k != j).map(|k| xs[j] - xs[k]).product::<f64>())
        .collect();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                d[i][j] = w[j] / w[i] / (xs[i] - xs[j]);
                diag -= d[i][j];
            }
        }
        d[i][i] = diag;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_central_weights() {
        let w = central_weights(1, 4);
        let want = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
        let w2 = central_weights(2, 4);
        let want2 = [-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w2.iter().zip(want2) {
            assert!((a - b).abs() < 1e-13);
        }
        assert_eq!(central_radius(3, 4), 3);
        assert_eq!(central_radius(1, 8), 4);
        assert_eq!(central_radius(3, 8), 5);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(12, 0.0, 2.0);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(21)).sum();
        assert!((s - 2f64.powi(22) / 22.0).abs() < 1e-9 * 2f64.powi(22) / 22.0);
    }

    #[test]
    fn differentiation_matrix_is_spectral() {
        let (x, _) = gauss_legendre(24, 0.0, 1.5);
        let d = differentiation_matrix(&x);
        for i in 0..x.len() {
            let v: f64 = (0..x.len()).map(|j| d[i][j] * (2.0 * x[j]).sin()).sum();
            assert!((v - 2.0 * (2.0 * x[i]).cos()).abs() < 1e-11);
        }
    }
}
