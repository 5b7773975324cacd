//! Gauss-Legendre rules and the half-range Hermite integrals behind the
//! half-flux matrix.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Integrate `f` over `[lo, hi]` with an `n`-point Gauss-Legendre rule.
pub fn integrate_fixed<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, n: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| wi * f(mid + half * xi))
        .sum::<f64>()
        * half
}

/// Orthonormal probabilists' Hermite polynomials `he_0..=he_kmax` at `t`.
pub fn hermite_orthonormal(kmax: usize, t: f64) -> Vec<f64> {
    let mut he = vec![0.0; kmax + 1];
    he[0] = 1.0;
    if kmax >= 1 {
        he[1] = t;
    }
    for k in 1..kmax {
        he[k + 1] = (t * he[k] - (k as f64).sqrt() * he[k - 1]) / ((k + 1) as f64).sqrt();
    }
    he
}

const HALF_RANGE_CUTOFF: f64 = 40.0;
const HALF_RANGE_START_NODES: usize = 200;
const HALF_RANGE_AGREEMENT: f64 = 1e-13;

/// Table of `J(p, q) = ∫ |t| g(t) he_p(t) he_q(t) dt` for `p, q <= kmax`,
/// with `g` the standard Gaussian density.
///
/// Gauss-Legendre on `[0, 40]`, starting at 200 nodes and doubling until two
/// successive tables agree entrywise to `1e-13`.
pub fn half_range_table(kmax: usize) -> Vec<Vec<f64>> {
    let mut nodes = HALF_RANGE_START_NODES;
    let mut prev = half_range_table_fixed(kmax, nodes);
    loop {
        nodes *= 2;
        let next = half_range_table_fixed(kmax, nodes);
        let diff = prev
            .iter()
            .flatten()
            .zip(next.iter().flatten())
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0_f64, f64::max);
        if diff <= HALF_RANGE_AGREEMENT || nodes >= 1 << 14 {
            return next;
        }
        prev = next;
    }
}

fn half_range_table_fixed(kmax: usize, nodes: usize) -> Vec<Vec<f64>> {
    let (x, w) = gauss_legendre(nodes);
    let half = 0.5 * HALF_RANGE_CUTOFF;
    let norm = 1.0 / (2.0 * PI).sqrt();
    let mut table = vec![vec![0.0; kmax + 1]; kmax + 1];
    for (&xi, &wi) in x.iter().zip(&w) {
        let t = half * (xi + 1.0);
        let he = hermite_orthonormal(kmax, t);
        // even integrand in t: fold the negative half onto the positive one
        let base = 2.0 * wi * half * t * norm * (-0.5 * t * t).exp();
        for p in 0..=kmax {
            for q in (p % 2..=kmax).step_by(2) {
                table[p][q] += base * he[p] * he[q];
            }
        }
    }
    table
}
