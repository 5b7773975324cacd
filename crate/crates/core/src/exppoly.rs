//! Vector-valued exponential-polynomials `f(y) = Σ_k P_k(y) e^{-b_k y}`.
//!
//! The class is closed under every transform the half-space solution needs:
//! tail integrals, the decaying and growing characteristic convolutions,
//! derivatives and constant matrix products. Weighted norms
//! `‖f‖_a = (∫_0^∞ e^{2ay} fᵀf dy)^{1/2}` are evaluated in closed form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest polynomial degree a term may carry.
pub const MAX_DEGREE: usize = 32;
/// Relative distance `|b - 1/λ|` below which a convolution is resonant.
pub const RESONANCE_TOL: f64 = 1e-12;

/// One term `P(y) e^{-rate·y}`; `coeffs` is `dim × (degree + 1)`, column `k`
/// holding the coefficients of `y^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub rate: f64,
    pub coeffs: DMatrix<f64>,
}

impl Term {
    pub fn degree(&self) -> usize {
        self.coeffs.ncols().saturating_sub(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpPolyVec {
    dim: usize,
    terms: Vec<Term>,
}

/// Values returned by [`ExpPolyVec::check_poincare`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareCheck {
    /// `‖r‖_a` for the tail integral `r`.
    pub lhs: f64,
    /// `‖f‖_a / a`.
    pub bound: f64,
    /// `‖r(0)‖`.
    pub trace: f64,
    /// `√(2/a) ‖f‖_a`.
    pub trace_bound: f64,
}

impl ExpPolyVec {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
        }
    }

    /// Build from raw terms; equal rates are merged, trailing zero
    /// coefficients trimmed and vanishing terms dropped.
    pub fn from_terms(dim: usize, terms: Vec<Term>) -> Result<Self> {
        let mut out = Self {
            dim,
            terms: Vec::new(),
        };
        for t in terms {
            if t.coeffs.nrows() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "term has {} components, expected {dim}",
                    t.coeffs.nrows()
                )));
            }
            if !(t.rate.is_finite() && t.rate >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "rates must be finite and >= 0, got {}",
                    t.rate
                )));
            }
            out.push(t);
        }
        out.normalize()?;
        Ok(out)
    }

    /// Scalar-profile vector `direction · p(y) e^{-rate y}`.
    pub fn outer(direction: &DVector<f64>, rate: f64, poly: &[f64]) -> Result<Self> {
        let coeffs = direction * DMatrix::from_row_slice(1, poly.len(), poly);
        Self::from_terms(direction.len(), vec![Term { rate, coeffs }])
    }

    /// Scalar function `p(y) e^{-rate y}`.
    pub fn scalar(rate: f64, poly: &[f64]) -> Result<Self> {
        Self::outer(&DVector::from_element(1, 1.0), rate, poly)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Smallest rate among nonzero terms.
    pub fn min_rate(&self) -> Option<f64> {
        self.terms.iter().map(|t| t.rate).reduce(f64::min)
    }

    pub fn max_degree(&self) -> usize {
        self.terms.iter().map(Term::degree).max().unwrap_or(0)
    }

    /// `true` when every nonzero term decays faster than `e^{-a y}`.
    pub fn finite_a_norm(&self, a: f64) -> bool {
        self.terms.iter().all(|t| t.rate > a)
    }

    fn push(&mut self, t: Term) {
        if let Some(existing) = self.terms.iter_mut().find(|e| same_rate(e.rate, t.rate)) {
            let cols = existing.coeffs.ncols().max(t.coeffs.ncols());
            let mut sum = DMatrix::zeros(self.dim, cols);
            sum.columns_mut(0, existing.coeffs.ncols())
                .copy_from(&existing.coeffs);
            let mut head = sum.columns_mut(0, t.coeffs.ncols());
            head += &t.coeffs;
            existing.coeffs = sum;
        } else {
            self.terms.push(t);
        }
    }

    fn normalize(&mut self) -> Result<()> {
        for t in &mut self.terms {
            let keep = (0..t.coeffs.ncols())
                .rev()
                .find(|&k| t.coeffs.column(k).iter().any(|v| *v != 0.0))
                .map_or(0, |k| k + 1);
            if keep < t.coeffs.ncols() {
                t.coeffs = t.coeffs.columns(0, keep).into_owned();
            }
        }
        self.terms.retain(|t| t.coeffs.ncols() > 0);
        self.terms.sort_by(|a, b| a.rate.total_cmp(&b.rate));
        if let Some(t) = self.terms.iter().find(|t| t.degree() > MAX_DEGREE) {
            return Err(Error::DegreeOverflow(t.degree()));
        }
        Ok(())
    }

    pub fn eval(&self, y: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for t in &self.terms {
            // Horner over the columns
            let mut acc = DVector::zeros(self.dim);
            for k in (0..t.coeffs.ncols()).rev() {
                acc *= y;
                acc += t.coeffs.column(k);
            }
            out += acc * (-t.rate * y).exp();
        }
        out
    }

    pub fn derivative(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let n = t.coeffs.ncols();
                let mut c = &t.coeffs * (-t.rate);
                for k in 1..n {
                    let col = t.coeffs.column(k) * k as f64;
                    let mut dst = c.column_mut(k - 1);
                    dst += &col;
                }
                Term {
                    rate: t.rate,
                    coeffs: c,
                }
            })
            .collect();
        Self::from_terms(self.dim, terms).expect("derivative keeps rates and degrees")
    }

    pub fn scale(&self, c: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                rate: t.rate,
                coeffs: &t.coeffs * c,
            })
            .collect();
        Self::from_terms(self.dim, terms).expect("scaling keeps shape")
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::ShapeMismatch(format!(
                "dims {} and {}",
                self.dim, other.dim
            )));
        }
        Self::from_terms(
            self.dim,
            self.terms.iter().chain(&other.terms).cloned().collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    /// `m · f(y)` for a constant matrix `m` with `dim` columns.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<Self> {
        if m.ncols() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "matrix has {} columns, function has {} components",
                m.ncols(),
                self.dim
            )));
        }
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                rate: t.rate,
                coeffs: m * &t.coeffs,
            })
            .collect();
        Self::from_terms(m.nrows(), terms)
    }

    /// Component `i` as a scalar function.
    pub fn component(&self, i: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                rate: t.rate,
                coeffs: t.coeffs.rows(i, 1).into_owned(),
            })
            .collect();
        Self::from_terms(1, terms).expect("component of a valid function")
    }

    /// Stack scalar or vector parts on top of each other.
    pub fn stack(parts: &[Self]) -> Result<Self> {
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let mut terms = Vec::new();
        let mut offset = 0;
        for p in parts {
            for t in &p.terms {
                let mut c = DMatrix::zeros(dim, t.coeffs.ncols());
                c.view_mut((offset, 0), t.coeffs.shape())
                    .copy_from(&t.coeffs);
                terms.push(Term {
                    rate: t.rate,
                    coeffs: c,
                });
            }
            offset += p.dim;
        }
        Self::from_terms(dim, terms)
    }

    fn require_decay(&self, what: &str) -> Result<()> {
        match self.terms.iter().find(|t| t.rate <= 0.0) {
            Some(t) => Err(Error::Divergent(format!(
                "{what}: term with rate {} does not decay",
                t.rate
            ))),
            None => Ok(()),
        }
    }

    /// `r(y) = -∫_y^∞ f(s) ds`.
    pub fn integrate_tail(&self) -> Result<Self> {
        self.require_decay("tail integral")?;
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                rate: t.rate,
                coeffs: tail_moment_poly(&t.coeffs, t.rate) * -1.0,
            })
            .collect();
        Self::from_terms(self.dim, terms)
    }

    /// `g(y) = (1/λ) ∫_0^y e^{(s-y)/λ} f(s) ds` for `λ > 0`; solves
    /// `λ g' = -g + f`, `g(0) = 0`.
    pub fn convolve_decay(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "decay convolution needs λ > 0, got {lambda}"
            )));
        }
        let mu = 1.0 / lambda;
        let mut terms = Vec::new();
        for t in &self.terms {
            let b = t.rate;
            let d = mu - b;
            let n = t.coeffs.ncols();
            if d.abs() <= RESONANCE_TOL * b.max(mu) {
                // μ ∫_0^y P(s) ds at rate μ
                let mut c = DMatrix::zeros(self.dim, n + 1);
                for k in 0..n {
                    let col = t.coeffs.column(k) * (mu / (k + 1) as f64);
                    c.set_column(k + 1, &col);
                }
                terms.push(Term {
                    rate: mu,
                    coeffs: c,
                });
                continue;
            }
            // ∫_0^y s^k e^{ds} ds = [e^{ds} Σ_j (-1)^{k-j} k!/j! s^j / d^{k-j+1}]_0^y
            let mut same = DMatrix::zeros(self.dim, n);
            let mut at_zero = DVector::zeros(self.dim);
            for k in 0..n {
                let ck = t.coeffs.column(k);
                let mut fact_ratio = 1.0; // k!/j!
                for j in (0..=k).rev() {
                    let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
                    let w = sign * fact_ratio / d.powi((k - j + 1) as i32);
                    same.column_mut(j).axpy(w, &ck, 1.0);
                    if j == 0 {
                        at_zero.axpy(w, &ck, 1.0);
                    }
                    fact_ratio *= j as f64;
                }
            }
            terms.push(Term {
                rate: b,
                coeffs: same * mu,
            });
            terms.push(Term {
                rate: mu,
                coeffs: DMatrix::from_column_slice(self.dim, 1, (at_zero * -mu).as_slice()),
            });
        }
        Self::from_terms(self.dim, terms)
    }

    /// `z(y) = -(1/λ) ∫_y^∞ e^{(s-y)/λ} f(s) ds` for `λ < 0`; solves
    /// `λ z' = -z + f`, `z(∞) = 0`.
    pub fn convolve_growth_tail(&self, lambda: f64) -> Result<Self> {
        if !(lambda < 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "growth convolution needs λ < 0, got {lambda}"
            )));
        }
        self.require_decay("growth tail convolution")?;
        let kappa = -1.0 / lambda;
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                rate: t.rate,
                coeffs: tail_moment_poly(&t.coeffs, kappa + t.rate) * kappa,
            })
            .collect();
        Self::from_terms(self.dim, terms)
    }

    /// Closed-form `‖f‖_a`.
    pub fn weighted_norm(&self, a: f64) -> Result<f64> {
        // Near-resonant terms carry large cancelling coefficients, so the
        // pair sums are accumulated in double-double.
        let mut total = Dd::ZERO;
        for (i, ti) in self.terms.iter().enumerate() {
            for tj in &self.terms[i..] {
                let c = ti.rate + tj.rate - 2.0 * a;
                if c <= 0.0 {
                    return Err(Error::Divergent(format!(
                        "weighted norm with a = {a}: rates {} and {} give exponent {c}",
                        ti.rate, tj.rate
                    )));
                }
                let cd = Dd::sum(ti.rate, tj.rate).add_f64(-2.0 * a);
                let smax = ti.coeffs.ncols() + tj.coeffs.ncols();
                // ∫_0^∞ y^s e^{-cy} dy = s!/c^{s+1}
                let mut moments = Vec::with_capacity(smax);
                let mut m = Dd::ONE.div(cd);
                for s in 0..smax {
                    if s > 0 {
                        m = m.mul_f64(s as f64).div(cd);
                    }
                    moments.push(m);
                }
                let mult = if std::ptr::eq(ti, tj) { 1.0 } else { 2.0 };
                for k in 0..ti.coeffs.ncols() {
                    for l in 0..tj.coeffs.ncols() {
                        let mut g = Dd::ZERO;
                        for r in 0..self.dim {
                            g = g.add(Dd::prod(ti.coeffs[(r, k)], tj.coeffs[(r, l)]));
                        }
                        total = total.add(g.mul(moments[k + l]).mul_f64(mult));
                    }
                }
            }
        }
        Ok(total.hi.max(0.0).sqrt())
    }

    /// Tail-integral Poincaré and trace inequalities for this `f`.
    pub fn check_poincare(&self, a: f64) -> Result<PoincareCheck> {
        let fnorm = self.weighted_norm(a)?;
        let r = self.integrate_tail()?;
        Ok(PoincareCheck {
            lhs: r.weighted_norm(a)?,
            bound: fnorm / a,
            trace: r.eval(0.0).norm(),
            trace_bound: (2.0 / a).sqrt() * fnorm,
        })
    }

    pub fn to_document(&self) -> ExpPolyDocument {
        ExpPolyDocument {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| TermDocument {
                    rate: t.rate,
                    coeffs: t
                        .coeffs
                        .row_iter()
                        .map(|r| r.iter().copied().collect())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &ExpPolyDocument) -> Result<Self> {
        let mut terms = Vec::with_capacity(doc.terms.len());
        for t in &doc.terms {
            if t.coeffs.len() != doc.dim {
                return Err(Error::ShapeMismatch(format!(
                    "term with rate {} lists {} components, expected {}",
                    t.rate,
                    t.coeffs.len(),
                    doc.dim
                )));
            }
            let cols = t.coeffs.iter().map(Vec::len).max().unwrap_or(0);
            let mut c = DMatrix::zeros(doc.dim, cols);
            for (i, row) in t.coeffs.iter().enumerate() {
                for (k, v) in row.iter().enumerate() {
                    c[(i, k)] = *v;
                }
            }
            terms.push(Term {
                rate: t.rate,
                coeffs: c,
            });
        }
        Self::from_terms(doc.dim, terms)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }
}

/// Coefficients of `Q` with `∫_y^∞ P(s) e^{-c s} ds = Q(y) e^{-c y}`, i.e.
/// `Q_j = Σ_{k>=j} P_k · k!/j! / c^{k-j+1}`.
fn tail_moment_poly(coeffs: &DMatrix<f64>, c: f64) -> DMatrix<f64> {
    let (dim, n) = coeffs.shape();
    let mut out = DMatrix::zeros(dim, n);
    for k in 0..n {
        let ck = coeffs.column(k);
        let mut fact_ratio = 1.0;
        for j in (0..=k).rev() {
            out.column_mut(j)
                .axpy(fact_ratio / c.powi((k - j + 1) as i32), &ck, 1.0);
            fact_ratio *= j as f64;
        }
    }
    out
}

/// JSON form: `{"dim": d, "terms": [{"rate": b, "coeffs": [[c00, c01, …], …]}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpPolyDocument {
    pub dim: usize,
    pub terms: Vec<TermDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermDocument {
    pub rate: f64,
    pub coeffs: Vec<Vec<f64>>,
}

/// Rates this close are one rate: the difference is below what the
/// eigen-solver resolves, and keeping them apart only breeds cancellation.
const RATE_MERGE_TOL: f64 = 1e-14;

fn same_rate(a: f64, b: f64) -> bool {
    (a - b).abs() <= RATE_MERGE_TOL * a.abs().max(b.abs())
}

/// Unevaluated sum `hi + lo` carrying about 32 significant digits.
#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    fn sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn fast(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd {
            hi: s,
            lo: b - (s - a),
        }
    }

    fn prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::sum(self.hi, o.hi);
        let t = Dd::sum(self.lo, o.lo);
        let u = Dd::fast(s.hi, s.lo + t.hi);
        Dd::fast(u.hi, u.lo + t.lo)
    }

    fn add_f64(self, b: f64) -> Dd {
        let s = Dd::sum(self.hi, b);
        Dd::fast(s.hi, s.lo + self.lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = Dd::prod(self.hi, o.hi);
        Dd::fast(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi))
    }

    fn mul_f64(self, b: f64) -> Dd {
        let p = Dd::prod(self.hi, b);
        Dd::fast(p.hi, p.lo + self.lo * b)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul_f64(-q1));
        let q2 = r.hi / o.hi;
        let r = r.add(o.mul_f64(-q2));
        let q3 = r.hi / o.hi;
        Dd::fast(q1, q2).add_f64(q3)
    }
}
