//! Gauss-Legendre quadrature rules.

/// Nodes and weights on [-1, 1], exact for polynomials of degree 2m - 1.
pub fn legendre_rule(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_m.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(m, x);
        nodes[m - 1 - i] = x;
        weights[m - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // Symmetrize exactly to kill the last rounding bit.
    for i in 0..m / 2 {
        let a = 0.5 * (nodes[i] - nodes[m - 1 - i]);
        nodes[i] = a;
        nodes[m - 1 - i] = -a;
        let w = 0.5 * (weights[i] + weights[m - 1 - i]);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Rule mapped to [a, b].
pub fn rule_on_interval(m: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = legendre_rule(m);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        xs.iter().map(|&x| mid + half * x).collect(),
        ws.iter().map(|&w| w * half).collect(),
    )
}

/// Tensor rule over a box: node coordinates and weights, lexicographic in
/// the per-axis index.
pub fn tensor_rule(m: usize, lo: &[f64], hi: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dim = lo.len();
    let per_axis: Vec<(Vec<f64>, Vec<f64>)> = (0..dim)
        .map(|a| rule_on_interval(m, lo[a], hi[a]))
        .collect();
    let total = m.pow(dim as u32);
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    loop {
        let mut x = Vec::with_capacity(dim);
        let mut w = 1.0;
        for a in 0..dim {
            x.push(per_axis[a].0[idx[a]]);
            w *= per_axis[a].1[idx[a]];
        }
        nodes.push(x);
        weights.push(w);
        let mut a = 0;
        loop {
            if a == dim {
                return (nodes, weights);
            }
            idx[a] += 1;
            if idx[a] < m {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_interval_length() {
        for m in 1..=12 {
            let (_, ws) = legendre_rule(m);
            let s: f64 = ws.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "order {m}: {s}");
        }
    }

    #[test]
    fn exact_for_degree_2m_minus_1() {
        for m in 1..=8 {
            let (xs, ws) = rule_on_interval(m, 0.0, 1.0);
            for k in 0..2 * m {
                let got: f64 = xs
                    .iter()
                    .zip(&ws)
                    .map(|(&x, &w)| w * x.powi(k as i32))
                    .sum();
                let want = 1.0 / (k as f64 + 1.0);
                assert!(
                    (got - want).abs() < 1e-13,
                    "order {m}, moment {k}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn nodes_are_symmetric() {
        let (xs, ws) = legendre_rule(7);
        for i in 0..7 {
            assert_eq!(xs[i], -xs[6 - i]);
            assert_eq!(ws[i], ws[6 - i]);
        }
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn tensor_rule_integrates_mixed_monomial() {
        let (nodes, ws) = tensor_rule(4, &[0.0, -1.0, 0.5], &[2.0, 1.0, 1.0]);
        // Integral of x^3 y^2 z over the box.
        let got: f64 = nodes
            .iter()
            .zip(&ws)
            .map(|(x, &w)| w * x[0].powi(3) * x[1].powi(2) * x[2])
            .sum();
        let want = (16.0 / 4.0) * (2.0 / 3.0) * ((1.0 - 0.25) / 2.0);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}
