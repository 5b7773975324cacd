//! Well-posedness verdicts for boundary operators acting on `V3ᵀW(0)`.
//!
//! A square operator `B` (one row per positive eigenvalue) gives a solvable
//! problem when `B T+` is invertible and a stable one when additionally
//! `B T0 = 0`. Rectangular operators are reduced to the square case through a
//! certificate `C` with `CᵀB T+` invertible and `CᵀB T0 = 0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::moments::rows_of;
use crate::transform::{direct_inertia, BlockCounts, SpectralFactorization, SubspaceDecomposition};

/// Relative threshold for rank decisions on `B T+`.
pub const TOL_RANK: f64 = 1e-10;
/// Relative threshold on `‖B T0‖` against `‖B‖ ‖T0‖`.
pub const TOL_STABLE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcKind {
    Grad,
    Modified,
    Custom,
}

/// `B3 · V3ᵀW(0) = g`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryOperator {
    pub b3: DMatrix<f64>,
    pub g: nalgebra::DVector<f64>,
    pub description: BcKind,
}

impl BoundaryOperator {
    pub fn new(b3: DMatrix<f64>, g: nalgebra::DVector<f64>, description: BcKind) -> Result<Self> {
        if g.len() != b3.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "boundary data has {} entries for {} rows",
                g.len(),
                b3.nrows()
            )));
        }
        Ok(Self { b3, g, description })
    }

    /// Homogeneous operator, `g = 0`.
    pub fn homogeneous(b3: DMatrix<f64>, description: BcKind) -> Self {
        let g = nalgebra::DVector::zeros(b3.nrows());
        Self { b3, g, description }
    }

    pub fn rows(&self) -> usize {
        self.b3.nrows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// `σ_min(B T+)`, or of `CᵀB T+` when a certificate was used.
    pub sigma_min_bt_plus: f64,
    pub sigma_max_bt_plus: f64,
    /// `‖B T0‖` (Frobenius) of the operator as given.
    pub bt_zero_norm: f64,
    /// `‖CᵀB T0‖` for the certificate, equal to `bt_zero_norm` when square.
    pub reduced_bt_zero_norm: f64,
    pub b_norm: f64,
    pub t_zero_norm: f64,
    pub stable_tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellposednessVerdict {
    pub solvable: bool,
    pub stable: bool,
    pub rows: usize,
    pub n_plus: usize,
    pub n_zero: usize,
    pub n_minus: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_plus_expected: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<BlockCounts>,
    pub margins: Margins,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_sigma_min: Option<f64>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        rename = "certificate_C"
    )]
    pub certificate_c: Option<Vec<Vec<f64>>>,
}

fn check_columns(b3: &DMatrix<f64>, spec: &SpectralFactorization) -> Result<()> {
    if b3.ncols() != spec.dim() {
        return Err(Error::ShapeMismatch(format!(
            "boundary operator has {} columns, reduced dimension is {}",
            b3.ncols(),
            spec.dim()
        )));
    }
    Ok(())
}

fn stable_tolerance(b: &DMatrix<f64>, t0: &DMatrix<f64>) -> f64 {
    TOL_STABLE * b.norm() * t0.norm()
}

fn verdict(
    b: &DMatrix<f64>,
    reduced: &DMatrix<f64>,
    cert: Option<&DMatrix<f64>>,
    dec: &SubspaceDecomposition,
    spec: &SpectralFactorization,
) -> WellposednessVerdict {
    let tp = spec.t_plus();
    let t0 = spec.t_zero();
    let n_plus = spec.inertia.plus;
    let bt_plus = reduced * &tp;
    let sv = linalg::singular_values(&bt_plus);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = if n_plus == 0 {
        0.0
    } else {
        sv.get(n_plus - 1).copied().unwrap_or(0.0)
    };
    let solvable = n_plus == 0 || (reduced.nrows() >= n_plus && smin > TOL_RANK * smax);
    let tol = stable_tolerance(b, &t0);
    let bt0 = (b * &t0).norm();
    let red_bt0 = (reduced * &t0).norm();
    let stable = solvable && red_bt0 <= tol;
    let counts = dec.parity.as_ref().map(|p| p.counts());
    WellposednessVerdict {
        solvable,
        stable,
        rows: b.nrows(),
        n_plus,
        n_zero: spec.inertia.zero,
        n_minus: spec.inertia.minus,
        n_plus_expected: dec
            .parity
            .as_ref()
            .map(|p| p.n.saturating_sub(p.counts().r2 + p.counts().p1)),
        counts,
        margins: Margins {
            sigma_min_bt_plus: smin,
            sigma_max_bt_plus: smax,
            bt_zero_norm: bt0,
            reduced_bt_zero_norm: red_bt0,
            b_norm: b.norm(),
            t_zero_norm: t0.norm(),
            stable_tolerance: tol,
        },
        certificate_sigma_min: cert.map(|_| smin),
        certificate_c: cert.map(rows_of),
    }
}

/// Verdict for an operator with exactly `n+` rows.
pub fn check_square_bc(
    b: &DMatrix<f64>,
    dec: &SubspaceDecomposition,
    spec: &SpectralFactorization,
) -> Result<WellposednessVerdict> {
    check_columns(b, spec)?;
    if b.nrows() != spec.inertia.plus {
        return Err(Error::ShapeMismatch(format!(
            "square boundary operator needs {} rows, got {}",
            spec.inertia.plus,
            b.nrows()
        )));
    }
    Ok(verdict(b, b, None, dec, spec))
}

/// Verdict for an operator with any number of rows. Square operators are
/// judged directly; otherwise stability means a certificate exists.
pub fn check_general_bc(
    bc: &BoundaryOperator,
    dec: &SubspaceDecomposition,
    spec: &SpectralFactorization,
) -> Result<WellposednessVerdict> {
    check_columns(&bc.b3, spec)?;
    if bc.rows() == spec.inertia.plus {
        return check_square_bc(&bc.b3, dec, spec);
    }
    match find_certificate_c(&bc.b3, spec) {
        Some(c) => {
            let reduced = c.transpose() * &bc.b3;
            Ok(verdict(&bc.b3, &reduced, Some(&c), dec, spec))
        }
        None => {
            let mut v = verdict(&bc.b3, &bc.b3, None, dec, spec);
            v.stable = false;
            Ok(v)
        }
    }
}

/// Search for `C` with `CᵀB3 T+` invertible and `CᵀB3 T0 = 0`: restrict to
/// the left null space of `B3 T0`, then keep the `n+` directions that see
/// `B3 T+` most strongly.
pub fn find_certificate_c(b3: &DMatrix<f64>, spec: &SpectralFactorization) -> Option<DMatrix<f64>> {
    let k = b3.nrows();
    let n_plus = spec.inertia.plus;
    let tp = spec.t_plus();
    let t0 = spec.t_zero();
    let bt0 = b3 * &t0;
    let tol = stable_tolerance(b3, &t0);
    let p = if bt0.norm() <= tol {
        DMatrix::identity(k, k)
    } else {
        let rel = tol / linalg::sigma_max(&bt0);
        linalg::nullspace_basis(&bt0.transpose(), rel.max(linalg::default_rank_tol(&bt0)))
    };
    if p.ncols() < n_plus {
        return None;
    }
    if n_plus == 0 {
        return Some(DMatrix::zeros(k, 0));
    }
    let projected = p.transpose() * b3 * &tp;
    let svd = projected.clone().svd(true, false);
    let u = svd.u.as_ref()?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    if order.len() < n_plus {
        return None;
    }
    let mut top = DMatrix::zeros(p.ncols(), n_plus);
    for (c, &i) in order.iter().take(n_plus).enumerate() {
        let mut col = u.column(i).into_owned();
        linalg::fix_sign(&mut col);
        top.set_column(c, &col);
    }
    let c = &p * top;
    let check = certify(b3, &c, spec);
    (check.sigma_min > TOL_RANK * linalg::sigma_max(&(b3 * &tp)) && check.leak <= tol).then_some(c)
}

/// `σ_min(CᵀB3 T+)` and `‖CᵀB3 T0‖` for a proposed certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub sigma_min: f64,
    pub leak: f64,
}

pub fn certify(
    b3: &DMatrix<f64>,
    c: &DMatrix<f64>,
    spec: &SpectralFactorization,
) -> CertificateCheck {
    let reduced = c.transpose() * b3;
    CertificateCheck {
        sigma_min: linalg::sigma_min(&(&reduced * spec.t_plus())),
        leak: (&reduced * spec.t_zero()).norm(),
    }
}

/// Parity counting: `n+ = n - r2 - p1` and the identity `r1 + p2 = r2 + p1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedCounts {
    pub n_plus: usize,
    pub spectral_n_plus: usize,
    pub counts: BlockCounts,
    pub identity_holds: bool,
}

impl PredictedCounts {
    pub fn matches(&self) -> bool {
        self.n_plus == self.spectral_n_plus && self.identity_holds
    }
}

pub fn predicted_counts(
    dec: &SubspaceDecomposition,
    spec: &SpectralFactorization,
) -> Result<PredictedCounts> {
    let pb = dec.parity.as_ref().ok_or(Error::NoParity)?;
    let c = pb.counts();
    let n_plus = pb.n.saturating_sub(c.r2 + c.p1);
    Ok(PredictedCounts {
        n_plus,
        spectral_n_plus: spec.inertia.plus,
        counts: c,
        identity_holds: c.r1 + c.p2 == c.r2 + c.p1,
    })
}

/// Inertia of `[[0, D], [Dᵀ, 0]]` from the rank of `D`: `(γ, γ, α+β-2γ)`.
pub fn offdiag_signature(d: &DMatrix<f64>) -> (usize, usize, usize) {
    let gamma = linalg::numerical_rank(d, linalg::default_rank_tol(d).max(1e-12));
    (gamma, gamma, d.nrows() + d.ncols() - 2 * gamma)
}

/// The same triple read off an eigendecomposition of the assembled matrix.
pub fn offdiag_signature_direct(d: &DMatrix<f64>) -> (usize, usize, usize) {
    let (a, b) = d.shape();
    let mut m = DMatrix::zeros(a + b, a + b);
    m.view_mut((0, a), (a, b)).copy_from(d);
    m.view_mut((a, 0), (b, a)).copy_from(&d.transpose());
    let i = direct_inertia(&m, 1e-12);
    (i.plus, i.minus, i.zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::MomentSystem;
    use crate::transform::build_decomposition;

    fn setup(order: u32) -> (SubspaceDecomposition, SpectralFactorization) {
        let sys = MomentSystem::full3d(order, 1.0).unwrap();
        let dec = build_decomposition(&sys).unwrap();
        let spec = SpectralFactorization::new(&dec, None).unwrap();
        (dec, spec)
    }

    /// Left inverse of `T+` in the `Q33` geometry: `T+ᵀ Q33`.
    fn ideal_bc(dec: &SubspaceDecomposition, spec: &SpectralFactorization) -> DMatrix<f64> {
        spec.t_plus().transpose() * dec.q_block(3, 3)
    }

    #[test]
    fn vacuous_when_no_positive_modes() {
        let sys = MomentSystem::kramers3(1.0).unwrap();
        let dec = build_decomposition(&sys).unwrap();
        let spec = SpectralFactorization::new(&dec, None).unwrap();
        let v = check_square_bc(&DMatrix::zeros(0, 1), &dec, &spec).unwrap();
        assert!(v.solvable && v.stable);
        assert_eq!(v.n_plus_expected, Some(0));
    }

    #[test]
    fn ideal_operator_is_stable() {
        let (dec, spec) = setup(3);
        let b = ideal_bc(&dec, &spec);
        assert!(
            (&b * spec.t_plus() - DMatrix::identity(spec.inertia.plus, spec.inertia.plus)).norm()
                < 1e-12
        );
        let v = check_square_bc(&b, &dec, &spec).unwrap();
        assert!(v.solvable && v.stable, "{v:?}");
    }

    #[test]
    fn t0_leak_breaks_stability() {
        let (dec, spec) = setup(3);
        let mut b = ideal_bc(&dec, &spec);
        let t0 = spec.t_zero();
        let row = t0.column(0).transpose();
        let mut r0 = b.row_mut(0);
        r0 += &row;
        let v = check_square_bc(&b, &dec, &spec).unwrap();
        assert!(v.solvable);
        assert!(!v.stable);
        assert!(v.margins.bt_zero_norm > 1e-3);
    }

    #[test]
    fn shape_errors() {
        let (dec, spec) = setup(3);
        let d = spec.dim();
        assert!(check_square_bc(&DMatrix::zeros(1, d), &dec, &spec).is_err());
        assert!(check_square_bc(&DMatrix::zeros(spec.inertia.plus, d + 1), &dec, &spec).is_err());
    }

    #[test]
    fn left_multiplication_keeps_verdict() {
        let (dec, spec) = setup(3);
        let b = ideal_bc(&dec, &spec);
        let np = spec.inertia.plus;
        let m = DMatrix::from_fn(np, np, |i, j| {
            if i == j {
                2.0
            } else {
                0.3 / (1.0 + i as f64 + j as f64)
            }
        });
        let v1 = check_square_bc(&b, &dec, &spec).unwrap();
        let v2 = check_square_bc(&(m * &b), &dec, &spec).unwrap();
        assert_eq!((v1.solvable, v1.stable), (v2.solvable, v2.stable));
    }

    #[test]
    fn certificate_for_padded_operator() {
        let (dec, spec) = setup(3);
        let ideal = ideal_bc(&dec, &spec);
        // extra rows living entirely in T0 directions
        let extra = spec.t_zero().transpose() * dec.q_block(3, 3);
        let b3 = DMatrix::from_fn(ideal.nrows() + extra.nrows(), ideal.ncols(), |i, j| {
            if i < ideal.nrows() {
                ideal[(i, j)]
            } else {
                extra[(i - ideal.nrows(), j)]
            }
        });
        let bc = BoundaryOperator::homogeneous(b3.clone(), BcKind::Custom);
        let v = check_general_bc(&bc, &dec, &spec).unwrap();
        assert!(v.solvable && v.stable, "{v:?}");
        let c = find_certificate_c(&b3, &spec).unwrap();
        let chk = certify(&b3, &c, &spec);
        assert!(chk.sigma_min > 1e-8 && chk.leak < 1e-10);
    }

    #[test]
    fn no_certificate_for_t0_rows() {
        let (dec, spec) = setup(3);
        let b3 = spec.t_zero().transpose() * dec.q_block(3, 3);
        assert!(find_certificate_c(&b3, &spec).is_none());
        let v = check_general_bc(
            &BoundaryOperator::homogeneous(b3, BcKind::Custom),
            &dec,
            &spec,
        )
        .unwrap();
        assert!(!v.solvable && !v.stable);
    }

    #[test]
    fn counting_matches_spectrum() {
        for order in 3..=5 {
            let (dec, spec) = setup(order);
            let p = predicted_counts(&dec, &spec).unwrap();
            assert!(p.matches(), "M={order}: {p:?}");
        }
        for order in [3, 5, 7] {
            let sys = MomentSystem::reduced_couette(order, 1.0).unwrap();
            let dec = build_decomposition(&sys).unwrap();
            let spec = SpectralFactorization::new(&dec, None).unwrap();
            let p = predicted_counts(&dec, &spec).unwrap();
            assert!(p.matches());
            assert_eq!(p.n_plus, ((order - 3) / 2) as usize);
        }
    }

    #[test]
    fn offdiag_examples() {
        assert_eq!(
            offdiag_signature(&DMatrix::from_element(1, 1, 1.0)),
            (1, 1, 0)
        );
        assert_eq!(offdiag_signature(&DMatrix::zeros(2, 3)), (0, 0, 5));
        let d = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 2.0, -1.0, 1.0]);
        assert_eq!(offdiag_signature(&d), (2, 2, 1));
        assert_eq!(offdiag_signature_direct(&d), (2, 2, 1));
    }
}
