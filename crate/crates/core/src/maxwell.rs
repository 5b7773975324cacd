//! Maxwell-type wall conditions for parity systems, `W = (W_e, W_o)`.
//!
//! The Grad condition takes the rows `E M (W_o - b_o) + χ̂ E S (W_e - b_e)`;
//! the modified condition replaces them by `H (W_o - b_o) + χ̂ Mᵀ (W_e - b_e)`
//! with `H` symmetric positive definite. Only the latter leads to a stable
//! half-space problem, solved here in two stages: a reduced condition on the
//! layer, then a compatibility system for the outer-flow data.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exppoly::ExpPolyVec;
use crate::linalg;
use crate::moments::{check_chi, chi_hat, matrix_from_rows, rows_of, MomentSystem, TOL_SPD};
use crate::solver::{solve, HalfspaceSolution};
use crate::transform::{SpectralFactorization, SubspaceDecomposition};
use crate::wellposed::{BcKind, BoundaryOperator};

/// Pivot ratio below which the compatibility system counts as singular.
pub const TOL_COMPAT: f64 = 1e-12;

/// Half-flux matrix in the normalization of the wall condition:
/// `√(π/2)` times the raw half-range moment matrix.
pub fn wall_half_flux(sys: &MomentSystem) -> Result<DMatrix<f64>> {
    Ok(sys.half_flux()? * (PI / 2.0).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub enum HChoice {
    Identity,
    /// `Mᵀ S⁻¹ M`.
    Flux,
    Matrix(DMatrix<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxwellBC {
    pub kind: BcKind,
    pub chi: f64,
    pub chi_hat: f64,
    /// Odd-block weight (modified kind only).
    pub h: Option<DMatrix<f64>>,
    /// `n × N` rows over `(W_e, W_o)`.
    pub op: DMatrix<f64>,
    pub m: usize,
    pub n: usize,
}

impl MaxwellBC {
    /// `B3 = op · V3`.
    pub fn b3(&self, dec: &SubspaceDecomposition) -> DMatrix<f64> {
        &self.op * &dec.v3
    }

    pub fn boundary_operator(
        &self,
        dec: &SubspaceDecomposition,
        g: Option<DVector<f64>>,
    ) -> Result<BoundaryOperator> {
        let b3 = self.b3(dec);
        match g {
            Some(g) => BoundaryOperator::new(b3, g, self.kind),
            None => Ok(BoundaryOperator::homogeneous(b3, self.kind)),
        }
    }
}

fn parity_dims(sys: &MomentSystem) -> Result<(usize, usize)> {
    let p = sys.parity().ok_or(Error::NoParity)?;
    Ok((p.m, p.n))
}

/// Rows `[χ̂ E S, E M]`.
pub fn assemble_grad_bc(sys: &MomentSystem, chi: f64) -> Result<MaxwellBC> {
    check_chi(chi)?;
    let (m, n) = parity_dims(sys)?;
    let e = sys.selection()?;
    let s = wall_half_flux(sys)?;
    let mflux = sys.flux_block()?;
    let ch = chi_hat(chi);
    let mut op = DMatrix::zeros(n, m + n);
    op.view_mut((0, 0), (n, m)).copy_from(&(&e * &s * ch));
    op.view_mut((0, m), (n, n)).copy_from(&(&e * &mflux));
    Ok(MaxwellBC {
        kind: BcKind::Grad,
        chi,
        chi_hat: ch,
        h: None,
        op,
        m,
        n,
    })
}

fn check_spd(h: &DMatrix<f64>, n: usize) -> Result<()> {
    if h.shape() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "H must be {n}×{n}, got {}×{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let asym = (h - h.transpose()).amax();
    if asym > TOL_SPD * h.amax().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "H is not symmetric (asymmetry {asym:e})"
        )));
    }
    let min = linalg::min_sym_eigenvalue(h);
    if min <= TOL_SPD * h.amax().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "H is not positive definite (min eigenvalue {min:e})"
        )));
    }
    Ok(())
}

/// Rows `[χ̂ Mᵀ, H]`.
pub fn assemble_modified_bc(sys: &MomentSystem, h: &HChoice, chi: f64) -> Result<MaxwellBC> {
    check_chi(chi)?;
    let (m, n) = parity_dims(sys)?;
    let mflux = sys.flux_block()?;
    let h = match h {
        HChoice::Identity => DMatrix::identity(n, n),
        HChoice::Flux => {
            let s = wall_half_flux(sys)?;
            let s_inv = s.cholesky().ok_or(Error::CholeskyFailure)?.inverse();
            let h = mflux.transpose() * s_inv * &mflux;
            (&h + h.transpose()) * 0.5
        }
        HChoice::Matrix(h) => h.clone(),
    };
    check_spd(&h, n)?;
    let ch = chi_hat(chi);
    let mut op = DMatrix::zeros(n, m + n);
    op.view_mut((0, 0), (n, m))
        .copy_from(&(mflux.transpose() * ch));
    op.view_mut((0, m), (n, n)).copy_from(&h);
    Ok(MaxwellBC {
        kind: BcKind::Modified,
        chi,
        chi_hat: ch,
        h: Some(h),
        op,
        m,
        n,
    })
}

/// The one-row condition `c σ12 + χ̂ (u1 + √2 f3)` of the three-moment
/// Kramers system, i.e. the modified condition with `H = c`.
pub fn kramers_modified_bc(sys: &MomentSystem, c: f64, chi: f64) -> Result<MaxwellBC> {
    assemble_modified_bc(sys, &HChoice::Matrix(DMatrix::from_element(1, 1, c)), chi)
}

/// Odd block `Z3` of `V3`.
fn z3(dec: &SubspaceDecomposition) -> Result<&DMatrix<f64>> {
    Ok(&dec.parity.as_ref().ok_or(Error::NoParity)?.z3)
}

/// `(‖Z3ᵀ Mᵀ Y1‖, ‖Z3ᵀ Mᵀ G_e‖)` where `Y1 = G_e X_e` is the even part of `V1`.
pub fn split_identities(sys: &MomentSystem, dec: &SubspaceDecomposition) -> Result<(f64, f64)> {
    let pb = dec.parity.as_ref().ok_or(Error::NoParity)?;
    let mt = sys.flux_block()?.transpose();
    let y1 = &pb.g_e * &pb.x_e;
    Ok((
        (pb.z3.transpose() * &mt * y1).norm(),
        (pb.z3.transpose() * &mt * &pb.g_e).norm(),
    ))
}

/// The reduced operator `Z3ᵀ B3`.
pub fn reduced_operator(bc: &MaxwellBC, dec: &SubspaceDecomposition) -> Result<DMatrix<f64>> {
    Ok(z3(dec)?.transpose() * bc.b3(dec))
}

/// Quadratic-form positivity behind the certificate `C = Z3`: for `x`,
/// `u = T+ x` split as `(u_e, u_o)` over `(Y3, Z3)` gives
/// `u_oᵀ Z3ᵀ B3 T+ x = (χ̂/2) xᵀ Λ+ x + ‖H^{1/2} Z3 u_o‖²`.
/// Returns `(lhs, h_term)`.
pub fn certificate_quadratic_form(
    bc: &MaxwellBC,
    dec: &SubspaceDecomposition,
    spec: &SpectralFactorization,
    x: &DVector<f64>,
) -> Result<(f64, f64)> {
    let pb = dec.parity.as_ref().ok_or(Error::NoParity)?;
    let h = bc
        .h
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("quadratic form needs the modified kind".into()))?;
    let ne = pb.y3.ncols();
    let u = spec.t_plus() * x;
    let u_o = u.rows(ne, u.len() - ne).into_owned();
    let lhs = u_o.dot(&(reduced_operator(bc, dec)? * spec.t_plus() * x));
    let zo = &pb.z3 * &u_o;
    Ok((lhs, zo.dot(&(h * &zo))))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxwellSolution {
    pub solution: HalfspaceSolution,
    /// `G_eᵀ(W̄_e - b_e)`.
    pub compat: DVector<f64>,
    /// Max-norm of `H(W_o(0) + g1) + χ̂ Mᵀ(W_e(0) + G_e compat + g2)`.
    pub boundary_residual: f64,
    pub compat_pivot_ratio: f64,
    /// `(‖W‖_a + ‖compat‖) / (‖h‖_a + ‖g1‖ + ‖g2‖)`.
    pub ratio: f64,
    pub g2_projected: DVector<f64>,
}

/// Solve the layer with a modified condition, then recover the outer-flow
/// compatibility data. `g1 = W̄_o - b_o`, `g2` carries `W̄_e - b_e` (its
/// component along `G_e` is discarded and returned as `compat`).
#[allow(clippy::too_many_arguments)]
pub fn solve_layer_with_maxwell(
    sys: &MomentSystem,
    dec: &SubspaceDecomposition,
    spec: &SpectralFactorization,
    bc: &MaxwellBC,
    g1: &DVector<f64>,
    g2: &DVector<f64>,
    h: &ExpPolyVec,
    a: f64,
) -> Result<MaxwellSolution> {
    if bc.kind != BcKind::Modified {
        return Err(Error::InvalidParameter(
            "the split solve needs a modified boundary condition".into(),
        ));
    }
    if bc.chi_hat <= 0.0 {
        return Err(Error::InvalidParameter(
            "the split solve needs χ̂ > 0".into(),
        ));
    }
    let pb = dec.parity.as_ref().ok_or(Error::NoParity)?;
    let counts = pb.counts();
    if counts.r2 != 0 {
        return Err(Error::NonzeroR2(counts.r2));
    }
    let (m, n) = (pb.m, pb.n);
    if g1.len() != n || g2.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "g1 needs {n} and g2 needs {m} entries, got {} and {}",
            g1.len(),
            g2.len()
        )));
    }
    let hmat = bc.h.as_ref().expect("modified kind carries H");
    let mt = sys.flux_block()?.transpose();
    let g_e = &pb.g_e;
    let g2p = g2 - g_e * (g_e.transpose() * g2);
    let data = hmat * g1 + &mt * &g2p * bc.chi_hat;

    // V2ᵀW(0) is fixed by the source alone; it has to be known before the rhs
    let q0 = h.apply(&dec.g.transpose())?.integrate_tail()?.eval(0.0);
    let k_inv_t = dec
        .k
        .transpose()
        .try_inverse()
        .ok_or(Error::DecompositionInvariant {
            what: "K invertible",
            residual: 0.0,
            tolerance: 0.0,
        })?;
    let v2w0 = k_inv_t * q0;
    let z3t = pb.z3.transpose();
    let rhs = -(&z3t * &data) - &z3t * (&bc.op * (&dec.v2 * v2w0));
    let b_red = &z3t * bc.b3(dec);
    let red = BoundaryOperator::new(b_red, rhs, BcKind::Modified)?;
    let solution = solve(sys, dec, spec, &red, h, a)?;

    // remaining rows: U0ᵀ(...) = 0 with U0 = [G_o, Mᵀ G_e X_e]
    let w0 = solution.w.eval(0.0);
    let u0 = linalg::hstack(n, &[&pb.g_o, &(&mt * g_e * &pb.x_e)]);
    let lhs = u0.transpose() * &mt * g_e * bc.chi_hat;
    let rhs_c = -(u0.transpose() * (&data + &bc.op * &w0));
    let (compat, pivot) = if lhs.nrows() == 0 && lhs.ncols() == 0 {
        (Some(DVector::zeros(0)), 1.0)
    } else if lhs.nrows() != lhs.ncols() {
        return Err(Error::SingularCompatibility(0.0));
    } else {
        linalg::solve_pivoted(&lhs, &rhs_c)
    };
    let compat = match compat {
        Some(c) if pivot > TOL_COMPAT => c,
        _ => return Err(Error::SingularCompatibility(pivot)),
    };

    let w_e = w0.rows(0, m).into_owned();
    let w_o = w0.rows(m, n).into_owned();
    let identity = hmat * (w_o + g1) + &mt * (w_e + g_e * &compat + &g2p) * bc.chi_hat;
    let denom = solution.norms.h_a + g1.norm() + g2.norm();
    let numer = solution.norms.w_a + compat.norm();
    let ratio = if denom > 0.0 {
        numer / denom
    } else if numer == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(MaxwellSolution {
        solution,
        compat,
        boundary_residual: identity.amax(),
        compat_pivot_ratio: pivot,
        ratio,
        g2_projected: g2p,
    })
}

/// `"identity"`, `"flux"` or an explicit matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HDocument {
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

/// JSON form of a wall condition and its data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxwellBcDocument {
    pub kind: BcKind,
    pub chi: f64,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<HDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2: Option<Vec<f64>>,
}

impl MaxwellBcDocument {
    pub fn h_choice(&self) -> Result<HChoice> {
        match &self.h {
            None => Ok(HChoice::Flux),
            Some(HDocument::Named(s)) => match s.as_str() {
                "identity" => Ok(HChoice::Identity),
                "flux" => Ok(HChoice::Flux),
                other => Err(Error::InvalidParameter(format!(
                    "unknown H choice '{other}'"
                ))),
            },
            Some(HDocument::Matrix(rows)) => Ok(HChoice::Matrix(matrix_from_rows(rows)?)),
        }
    }

    pub fn assemble(&self, sys: &MomentSystem) -> Result<MaxwellBC> {
        match self.kind {
            BcKind::Grad => assemble_grad_bc(sys, self.chi),
            BcKind::Modified => assemble_modified_bc(sys, &self.h_choice()?, self.chi),
            BcKind::Custom => Err(Error::InvalidParameter(
                "custom kind has no Maxwell assembly".into(),
            )),
        }
    }

    pub fn from_bc(bc: &MaxwellBC) -> Self {
        Self {
            kind: bc.kind,
            chi: bc.chi,
            h: bc.h.as_ref().map(|h| HDocument::Matrix(rows_of(h))),
            g1: None,
            g2: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::build_decomposition;
    use crate::wellposed::{certify, check_general_bc};
    use std::f64::consts::SQRT_2;

    fn setup(sys: &MomentSystem) -> (SubspaceDecomposition, SpectralFactorization) {
        let dec = build_decomposition(sys).unwrap();
        let spec = SpectralFactorization::new(&dec, None).unwrap();
        (dec, spec)
    }

    #[test]
    fn kramers_grad_row() {
        let sys = MomentSystem::kramers3(1.0).unwrap();
        let bc = assemble_grad_bc(&sys, 1.0).unwrap();
        let ch = 2.0 / (2.0 * PI).sqrt();
        assert!((bc.chi_hat - ch).abs() < 1e-15);
        // (u1, f3, σ12)
        let expect = [ch, ch * SQRT_2 / 2.0, 1.0];
        for (j, e) in expect.iter().enumerate() {
            assert!((bc.op[(0, j)] - e).abs() < 1e-12, "{}", bc.op);
        }
        let specular = assemble_grad_bc(&sys, 0.0).unwrap();
        assert_eq!(specular.chi_hat, 0.0);
        assert_eq!(specular.op.columns(0, 2).amax(), 0.0);
        assert!(assemble_grad_bc(&sys, 1.5).is_err());
    }

    #[test]
    fn kramers_modified_row() {
        let sys = MomentSystem::kramers3(1.0).unwrap();
        let bc = kramers_modified_bc(&sys, 2.0, 1.0).unwrap();
        let ch = bc.chi_hat;
        let expect = [ch, ch * SQRT_2, 2.0];
        for (j, e) in expect.iter().enumerate() {
            assert!((bc.op[(0, j)] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn kramers_compat_gives_slip() {
        // h = (0, f, 0), g1 = σ̄, g2 = 0: ū = -c σ̄ / χ̂ whatever f is
        let sys = MomentSystem::kramers3(1.0).unwrap();
        let (dec, spec) = setup(&sys);
        let sigma_bar = 0.7;
        let g1 = DVector::from_element(1, sigma_bar);
        let g2 = DVector::zeros(2);
        for (c, amp) in [(1.0, 0.0), (1.0, 2.0), (1.5, 0.0), (1.5, 1.0), (0.4, -3.0)] {
            let bc = kramers_modified_bc(&sys, c, 1.0).unwrap();
            let h =
                ExpPolyVec::outer(&DVector::from_vec(vec![0.0, amp, 0.0]), 1.0, &[1.0]).unwrap();
            let out = solve_layer_with_maxwell(&sys, &dec, &spec, &bc, &g1, &g2, &h, 0.5).unwrap();
            assert_eq!(out.compat.len(), 1);
            let ubar = out.compat[0] * dec.parity.as_ref().unwrap().g_e[(0, 0)];
            assert!((ubar + c * sigma_bar / bc.chi_hat).abs() < 1e-12, "{ubar}");
            assert!(out.boundary_residual < 1e-12);
        }
    }

    #[test]
    fn zero_data() {
        let sys = MomentSystem::full3d(3, 1.0).unwrap();
        let (dec, spec) = setup(&sys);
        let bc = assemble_modified_bc(&sys, &HChoice::Identity, 1.0).unwrap();
        let p = sys.parity().unwrap();
        let out = solve_layer_with_maxwell(
            &sys,
            &dec,
            &spec,
            &bc,
            &DVector::zeros(p.n),
            &DVector::zeros(p.m),
            &ExpPolyVec::zero(sys.dim()),
            0.3,
        )
        .unwrap();
        assert!(out.solution.w.is_zero());
        assert_eq!(out.compat.amax(), 0.0);
    }

    #[test]
    fn flux_h_is_spd_and_modified_is_stable() {
        let sys = MomentSystem::full3d(3, 1.0).unwrap();
        let (dec, spec) = setup(&sys);
        for h in [HChoice::Identity, HChoice::Flux] {
            for chi in [0.0, 0.5, 1.0] {
                let bc = assemble_modified_bc(&sys, &h, chi).unwrap();
                let v = check_general_bc(&bc.boundary_operator(&dec, None).unwrap(), &dec, &spec)
                    .unwrap();
                assert!(v.solvable && v.stable, "{h:?} χ={chi}: {v:?}");
                let chk = certify(&bc.b3(&dec), z3(&dec).unwrap(), &spec);
                assert!(chk.sigma_min > 1e-8 && chk.leak < 1e-10, "{chk:?}");
                for k in 0..spec.inertia.plus {
                    let x =
                        DVector::from_fn(spec.inertia.plus, |i, _| if i == k { 1.0 } else { 0.3 });
                    let (lhs, h_term) = certificate_quadratic_form(&bc, &dec, &spec, &x).unwrap();
                    let exact = h_term
                        + 0.5
                            * bc.chi_hat
                            * (0..x.len())
                                .map(|i| spec.lambda[i] * x[i] * x[i])
                                .sum::<f64>();
                    assert!(h_term > 0.0 && lhs >= h_term - 1e-12);
                    assert!(
                        (lhs - exact).abs() < 1e-10 * (1.0 + exact),
                        "{lhs} vs {exact}"
                    );
                }
            }
        }
        let (a, b) = split_identities(&sys, &dec).unwrap();
        assert!(a < 1e-12 && b < 1e-12);
    }

    #[test]
    fn rejects_non_spd_h() {
        let sys = MomentSystem::kramers3(1.0).unwrap();
        assert!(kramers_modified_bc(&sys, -1.0, 1.0).is_err());
        assert!(
            assemble_modified_bc(&sys, &HChoice::Matrix(DMatrix::identity(2, 2)), 1.0).is_err()
        );
    }

    #[test]
    fn document_roundtrip() {
        let doc: MaxwellBcDocument =
            serde_json::from_str(r#"{"kind":"modified","chi":0.5,"H":"identity"}"#).unwrap();
        assert_eq!(doc.h_choice().unwrap(), HChoice::Identity);
        let doc: MaxwellBcDocument =
            serde_json::from_str(r#"{"kind":"modified","chi":0.5,"H":[[2.0]]}"#).unwrap();
        let sys = MomentSystem::kramers3(1.0).unwrap();
        let bc = doc.assemble(&sys).unwrap();
        assert_eq!(bc.h.as_ref().unwrap()[(0, 0)], 2.0);
        let back: MaxwellBcDocument =
            serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
        assert_eq!(back, doc);
    }
}
