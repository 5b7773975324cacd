//! Independent oracles shared by the integration tests: adaptive
//! Gauss-Kronrod quadrature and seeded random exp-poly generators.

#![allow(dead_code, clippy::excessive_precision)]

use halfspace_core::exppoly::{ExpPolyVec, Term};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Kronrod value, error estimate and Kronrod value of `|f|`.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut kabs = WGK[7] * fc.abs();
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let (fl, fr) = (f(c - x), f(c + x));
        k += WGK[j] * (fl + fr);
        kabs += WGK[j] * (fl.abs() + fr.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (fl + fr);
        }
    }
    (k * h, (k - g).abs() * h, kabs * h)
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, density: f64, depth: u32) -> f64 {
    let (k, err, kabs) = gk15(f, a, b);
    // Tolerance per unit length, so the total stays bounded without halving;
    // the relative floor stops refinement at rounding level.
    assert!(err.is_finite(), "non-finite quadrature error on [{a}, {b}]");
    if err <= (density * (b - a)).max(50.0 * f64::EPSILON * kabs) || depth == 0 {
        return k;
    }
    let m = 0.5 * (a + b);
    adaptive(f, a, m, density, depth - 1) + adaptive(f, m, b, density, depth - 1)
}

/// `∫_a^b f` by adaptive G7-K15 on a 64-panel start, absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let panels = 64;
    let w = (b - a) / panels as f64;
    let density = tol / (b - a);
    (0..panels)
        .map(|i| adaptive(f, a + i as f64 * w, a + (i + 1) as f64 * w, density, 24))
        .sum()
}

/// `e^{shift·y} f(y)` summed term by term, so large weights never overflow.
pub fn shifted_eval(f: &ExpPolyVec, shift: f64, y: f64) -> nalgebra::DVector<f64> {
    let mut out = nalgebra::DVector::zeros(f.dim());
    for t in f.terms() {
        let mut p = nalgebra::DVector::zeros(f.dim());
        for k in 0..t.coeffs.ncols() {
            p += t.coeffs.column(k) * y.powi(k as i32);
        }
        out += p * ((shift - t.rate) * y).exp();
    }
    out
}

/// Upper integration limit past which `y^deg e^{-c y}` is negligible.
pub fn cutoff(c: f64) -> f64 {
    90.0 / c
}

pub fn random_exppoly(
    rng: &mut ChaCha8Rng,
    dim: usize,
    terms: usize,
    rate_lo: f64,
    rate_hi: f64,
    max_deg: usize,
) -> ExpPolyVec {
    let terms = (0..terms)
        .map(|_| {
            let deg = rng.gen_range(0..=max_deg);
            Term {
                rate: rng.gen_range(rate_lo..rate_hi),
                coeffs: DMatrix::from_fn(dim, deg + 1, |_, _| rng.gen_range(-1.0..1.0)),
            }
        })
        .collect();
    ExpPolyVec::from_terms(dim, terms).expect("random terms are valid")
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}
