//! Gauss-Hermite quadrature.
//!
//! Nodes and weights for the weight function `e^{-x²}`, computed by Newton
//! iteration on the orthonormal Hermite recurrence. The crate-wide node
//! count lives in [`GH_NODES`]; the table for that count is computed once
//! and cached.

use std::sync::OnceLock;

/// Node count used by the scalar-MMSE integrals.
pub const GH_NODES: usize = 61;

/// Nodes `x_i` and weights `w_i` with `Σ w_i f(x_i) ≈ ∫ f(x) e^{-x²} dx`.
///
/// Exact for polynomials up to degree `2n - 1`. Roots are found from
/// asymptotic initial guesses refined by Newton's method on the orthonormal
/// recurrence, which stays well-scaled for large `n`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        // Initial guesses for successive roots, largest first.
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            // Orthonormal Hermite recurrence up to degree n; p1 = p_n(z).
            let mut p1 = std::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 * (1.0 + z.abs()) {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    // Symmetrize exactly: odd n puts the middle root at zero.
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn cached_table() -> &'static (Vec<f64>, Vec<f64>) {
    static TABLE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    TABLE.get_or_init(|| gauss_hermite(GH_NODES))
}

/// `E[f(r)]` for `r ~ N(0, sigma2)` via the cached Gauss-Hermite table.
pub fn gaussian_expectation(sigma2: f64, f: impl Fn(f64) -> f64) -> f64 {
    debug_assert!(sigma2 >= 0.0);
    if sigma2 == 0.0 {
        return f(0.0);
    }
    let (nodes, weights) = cached_table();
    let scale = (2.0 * sigma2).sqrt();
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let mut acc = 0.0;
    for (&x, &w) in nodes.iter().zip(weights.iter()) {
        acc += w * f(scale * x);
    }
    acc * inv_sqrt_pi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_integrate_the_weight_function() {
        for n in [1usize, 2, 5, 20, 61] {
            let (_, w) = gauss_hermite(n);
            let total: f64 = w.iter().sum();
            assert!(
                (total - std::f64::consts::PI.sqrt()).abs() < 1e-12,
                "n={n}: {total}"
            );
        }
    }

    #[test]
    fn gaussian_moments_are_exact() {
        let s2 = 0.37;
        assert!((gaussian_expectation(s2, |r| r * r) - s2).abs() < 1e-13);
        assert!((gaussian_expectation(s2, |r| r * r * r * r) - 3.0 * s2 * s2).abs() < 1e-13);
        assert!(gaussian_expectation(s2, |r| r).abs() < 1e-13);
        assert!((gaussian_expectation(0.0, |r| r + 2.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn high_degree_polynomials_are_exact() {
        // Degree 20 << 2*61 - 1; E[x^20] for N(0,1) is (20-1)!! = 654729075.
        let m20 = gaussian_expectation(1.0, |r| r.powi(20));
        let expect = 654_729_075.0;
        assert!((m20 - expect).abs() / expect < 1e-10, "{m20}");
    }
}
