//! Closed-form solution of `A W' = -Q W + h`, `B3 V3ᵀW(0) = g`, `W(∞) = 0`.
//!
//! In the coordinates `W = V1 w1 + V2 w2 + V3 w3` the first block row is a pure
//! tail integral for `w2`, the third block decouples into scalar
//! characteristic equations after the `T` change of variables, and the second
//! block row then yields `w1` by one more tail integral.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exppoly::ExpPolyVec;
use crate::linalg;
use crate::moments::{MomentSystem, MultiIndex};
use crate::transform::{SpectralFactorization, SubspaceDecomposition};
use crate::wellposed::{find_certificate_c, BoundaryOperator, TOL_RANK, TOL_STABLE};

/// Points in the residual grid.
pub const RESIDUAL_GRID: usize = 512;
/// The grid spans `[0, RESIDUAL_SPAN / min_rate]`.
pub const RESIDUAL_SPAN: f64 = 20.0;

/// How a boundary operator with `k != n+` rows was reduced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Square,
    Certificate,
    LeastSquares,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionNorms {
    pub w_a: f64,
    pub h_a: f64,
    pub g: f64,
    pub ratio: f64,
}

/// `w_{e2}(0)` next to whether the source has a mass component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalVelocityCheck {
    pub w_e2_at_0: f64,
    pub mass_source_vanishes: bool,
    /// Only judged when the mass source vanishes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vanishes: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HalfspaceSolution {
    pub w: ExpPolyVec,
    pub v1w: ExpPolyVec,
    pub v2w: ExpPolyVec,
    pub v3w: ExpPolyVec,
    pub z_plus0: DVector<f64>,
    pub z_zero0: DVector<f64>,
    pub z_minus0: DVector<f64>,
    pub norms: SolutionNorms,
    pub residual_sup: f64,
    /// `max ‖h‖_∞` over the residual grid.
    pub h_sup: f64,
    pub a: f64,
    pub reduction: Reduction,
    /// `‖B3 V3ᵀW(0) - g‖`; zero up to rounding unless least squares was used.
    pub bc_residual: f64,
    pub normal_velocity: Option<NormalVelocityCheck>,
}

/// Boundary rows actually imposed on `z+(0)`.
struct ReducedBc {
    b: DMatrix<f64>,
    g: DVector<f64>,
    reduction: Reduction,
}

fn reduce_bc(bc: &BoundaryOperator, spec: &SpectralFactorization) -> Result<ReducedBc> {
    if bc.b3.ncols() != spec.dim() {
        return Err(Error::ShapeMismatch(format!(
            "boundary operator has {} columns, reduced dimension is {}",
            bc.b3.ncols(),
            spec.dim()
        )));
    }
    let n_plus = spec.inertia.plus;
    if bc.rows() == n_plus {
        return Ok(ReducedBc {
            b: bc.b3.clone(),
            g: bc.g.clone(),
            reduction: Reduction::Square,
        });
    }
    if let Some(c) = find_certificate_c(&bc.b3, spec) {
        return Ok(ReducedBc {
            b: c.transpose() * &bc.b3,
            g: c.transpose() * &bc.g,
            reduction: Reduction::Certificate,
        });
    }
    Ok(ReducedBc {
        b: bc.b3.clone(),
        g: bc.g.clone(),
        reduction: Reduction::LeastSquares,
    })
}

/// Map `x ↦ (B T+)⁻¹ x` (pseudo-inverse for least squares).
fn bt_plus_inverse(red: &ReducedBc, spec: &SpectralFactorization) -> Result<DMatrix<f64>> {
    let n_plus = spec.inertia.plus;
    if n_plus == 0 {
        return Ok(DMatrix::zeros(0, red.b.nrows()));
    }
    let btp = &red.b * spec.t_plus();
    let sv = linalg::singular_values(&btp);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.get(n_plus - 1).copied().unwrap_or(0.0);
    if btp.nrows() < n_plus || smin <= TOL_RANK * smax || smax == 0.0 {
        return Err(Error::Unsolvable(smin));
    }
    match red.reduction {
        Reduction::LeastSquares => Ok(linalg::pseudo_inverse(&btp, TOL_RANK)),
        _ => btp.try_inverse().ok_or(Error::Unsolvable(smin)),
    }
}

fn scalar_parts(f: &ExpPolyVec, offset: usize, count: usize) -> Vec<ExpPolyVec> {
    (offset..offset + count).map(|i| f.component(i)).collect()
}

/// Solve the half-space problem for source `h` and weight `a`.
pub fn solve(
    sys: &MomentSystem,
    dec: &SubspaceDecomposition,
    spec: &SpectralFactorization,
    bc: &BoundaryOperator,
    h: &ExpPolyVec,
    a: f64,
) -> Result<HalfspaceSolution> {
    let n = sys.dim();
    if h.dim() != n {
        return Err(Error::ShapeMismatch(format!(
            "source has {} components, system has {n}",
            h.dim()
        )));
    }
    spec.check_weight(a)?;
    if !h.finite_a_norm(a) {
        return Err(Error::Divergent(format!(
            "source rate {} does not exceed the weight a = {a}",
            h.min_rate().unwrap_or(0.0)
        )));
    }
    let red = reduce_bc(bc, spec)?;
    let bt_inv = bt_plus_inverse(&red, spec)?;

    // first block: GᵀA W = -∫_y^∞ Gᵀh, and GᵀA W = Kᵀ w2
    let gt_h = h.apply(&dec.g.transpose())?;
    let q = gt_h.integrate_tail()?;
    let k_inv_t = dec
        .k
        .transpose()
        .try_inverse()
        .ok_or(Error::DecompositionInvariant {
            what: "K invertible",
            residual: 0.0,
            tolerance: 0.0,
        })?;
    let v2w = q.apply(&k_inv_t)?;
    let v2w_prime = gt_h.apply(&k_inv_t)?;

    // third block: Λ z' + z = T⁻¹ h3
    let q33 = dec.q_block(3, 3);
    let v3t_h = h.apply(&dec.v3.transpose())?;
    let rhs3 = v3t_h
        .sub(&v2w.apply(dec.q_block(3, 2))?)?
        .sub(&v2w_prime.apply(dec.a_block(3, 2))?)?;
    let d = spec.dim();
    let q33_inv = if d == 0 {
        DMatrix::zeros(0, 0)
    } else {
        q33.clone()
            .cholesky()
            .ok_or(Error::CholeskyFailure)?
            .inverse()
    };
    let h3 = rhs3.apply(&q33_inv)?;
    let hz = h3.apply(&spec.t_inv)?;
    let (np, n0, nm) = (spec.inertia.plus, spec.inertia.zero, spec.inertia.minus);

    let z0_parts = scalar_parts(&hz, np, n0);
    let mut zm_parts = Vec::with_capacity(nm);
    for (i, f) in scalar_parts(&hz, np + n0, nm).into_iter().enumerate() {
        zm_parts.push(f.convolve_growth_tail(spec.lambda_minus()[i])?);
    }
    let mut zp_forced = Vec::with_capacity(np);
    for (i, f) in scalar_parts(&hz, 0, np).into_iter().enumerate() {
        zp_forced.push(f.convolve_decay(spec.lambda_plus()[i])?);
    }
    let eval0 = |parts: &[ExpPolyVec]| {
        DVector::from_iterator(parts.len(), parts.iter().map(|p| p.eval(0.0)[0]))
    };
    let z_zero0 = eval0(&z0_parts);
    let z_minus0 = eval0(&zm_parts);

    // boundary rows fix z+(0)
    let t0 = spec.t_zero();
    let tm = spec.t_minus();
    let rhs_bc = &red.g - &red.b * (&t0 * &z_zero0) - &red.b * (&tm * &z_minus0);
    let z_plus0 = &bt_inv * rhs_bc;
    let mut zp_parts = Vec::with_capacity(np);
    for (i, forced) in zp_forced.into_iter().enumerate() {
        let free = ExpPolyVec::scalar(1.0 / spec.lambda_plus()[i], &[z_plus0[i]])?;
        zp_parts.push(forced.add(&free)?);
    }
    let z = ExpPolyVec::stack(&[zp_parts, z0_parts, zm_parts].concat())?;
    let v3w = z.apply(&spec.t)?;

    // second block: A21 w1 = -A22 w2 - A23 w3 + tail(U2ᵀh - Q22 w2 - Q23 w3)
    let r = dec.r;
    let v1w = if r == 0 {
        ExpPolyVec::zero(0)
    } else {
        let forcing = h
            .apply(&dec.u2.transpose())?
            .sub(&v2w.apply(dec.q_block(2, 2))?)?
            .sub(&v3w.apply(dec.q_block(2, 3))?)?;
        let rhs = forcing
            .integrate_tail()?
            .sub(&v2w.apply(dec.a_block(2, 2))?)?
            .sub(&v3w.apply(dec.a_block(2, 3))?)?;
        let a21_inv = dec.a_block(2, 1).clone().try_inverse().ok_or({
            Error::DecompositionInvariant {
                what: "A21 invertible",
                residual: 0.0,
                tolerance: 0.0,
            }
        })?;
        rhs.apply(&a21_inv)?
    };

    let w = v1w
        .apply(&dec.v1)?
        .add(&v2w.apply(&dec.v2)?)?
        .add(&v3w.apply(&dec.v3)?)?;

    let (residual_sup, h_sup) = residual(sys, &w, h);
    let w_a = w.weighted_norm(a)?;
    let h_a = h.weighted_norm(a)?;
    let g_norm = bc.g.norm();
    let bc_residual = (&bc.b3 * (dec.v3.transpose() * w.eval(0.0)) - &bc.g).norm();
    let mut sol = HalfspaceSolution {
        normal_velocity: normal_velocity(sys, &w, h),
        w,
        v1w,
        v2w,
        v3w,
        z_plus0,
        z_zero0,
        z_minus0,
        norms: SolutionNorms {
            w_a,
            h_a,
            g: g_norm,
            ratio: 0.0,
        },
        residual_sup,
        h_sup,
        a,
        reduction: red.reduction,
        bc_residual,
    };
    sol.norms.ratio = verify_estimate(&sol);
    Ok(sol)
}

/// Sample points of the residual grid for `f` and `h`.
pub fn residual_grid(w: &ExpPolyVec, h: &ExpPolyVec) -> Vec<f64> {
    let rate = [w.min_rate(), h.min_rate()]
        .into_iter()
        .flatten()
        .fold(f64::INFINITY, f64::min);
    let span = if rate.is_finite() && rate > 0.0 {
        RESIDUAL_SPAN / rate
    } else {
        RESIDUAL_SPAN
    };
    (0..RESIDUAL_GRID)
        .map(|i| span * i as f64 / (RESIDUAL_GRID - 1) as f64)
        .collect()
}

/// `(max ‖A W' + Q W - h‖_∞, max ‖h‖_∞)` over the residual grid.
pub fn residual(sys: &MomentSystem, w: &ExpPolyVec, h: &ExpPolyVec) -> (f64, f64) {
    let wp = w.derivative();
    let mut worst = 0.0_f64;
    let mut h_sup = 0.0_f64;
    for y in residual_grid(w, h) {
        let hy = h.eval(y);
        let res = sys.a() * wp.eval(y) + sys.q() * w.eval(y) - &hy;
        worst = worst.max(res.amax());
        h_sup = h_sup.max(hy.amax());
    }
    (worst, h_sup)
}

fn normal_velocity(
    sys: &MomentSystem,
    w: &ExpPolyVec,
    h: &ExpPolyVec,
) -> Option<NormalVelocityCheck> {
    let mass = sys.position(MultiIndex::new(0, 0, 0))?;
    let normal = sys.position(MultiIndex::new(0, 1, 0))?;
    let w_e2_at_0 = w.eval(0.0)[normal];
    let mass_source_vanishes = h.component(mass).is_zero();
    let scale = 1e-10 * (1.0 + w.eval(0.0).amax());
    Some(NormalVelocityCheck {
        w_e2_at_0,
        mass_source_vanishes,
        vanishes: mass_source_vanishes.then_some(w_e2_at_0.abs() <= scale),
    })
}

/// `‖W‖_a / (‖h‖_a + ‖g‖)`; `0` for zero data with zero solution and `∞`
/// when zero data produced a nonzero solution.
pub fn verify_estimate(sol: &HalfspaceSolution) -> f64 {
    let denom = sol.norms.h_a + sol.norms.g;
    if denom > 0.0 {
        sol.norms.w_a / denom
    } else if sol.norms.w_a == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `A21 V1ᵀW(0) + A23 V3ᵀW(0)` and an a-priori bound in terms of `‖h‖_a`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceCombination {
    pub value: DVector<f64>,
    pub norm: f64,
    pub bound: f64,
}

impl TraceCombination {
    pub fn within_bound(&self) -> bool {
        self.norm <= self.bound * (1.0 + 1e-12) + 1e-14
    }
}

/// The trace combination that stays controlled by the source even when the
/// boundary operator is unstable. The bound follows from the tail-integral
/// trace inequality `‖r(0)‖ ≤ √(2/a) ‖f‖_a` and `‖r‖_a ≤ ‖f‖_a / a`.
pub fn bounded_trace_combination(
    dec: &SubspaceDecomposition,
    sol: &HalfspaceSolution,
) -> Result<TraceCombination> {
    let value = dec.a_block(2, 1) * sol.v1w.eval(0.0) + dec.a_block(2, 3) * sol.v3w.eval(0.0);
    let a = sol.a;
    let op = |m: &DMatrix<f64>| linalg::sigma_max(m);
    let k_inv = dec.k.clone().try_inverse().map(|k| op(&k)).unwrap_or(0.0);
    let h_a = sol.norms.h_a;
    let trace = (2.0 / a).sqrt();
    let w2_trace = k_inv * trace * h_a;
    let w2_norm = k_inv * h_a / a;
    let v3w_a = sol.v3w.weighted_norm(a)?;
    let bound = op(dec.a_block(2, 2)) * w2_trace
        + op(dec.a_block(2, 3)) * sol.v3w.eval(0.0).norm()
        + trace
            * (op(&dec.u2) * h_a + op(dec.q_block(2, 2)) * w2_norm + op(dec.q_block(2, 3)) * v3w_a);
    Ok(TraceCombination {
        norm: value.norm(),
        value,
        bound,
    })
}

/// Sources `U⁻ᵀ (0, 0, Q33 T0 c0)ᵀ φ(y)` for all `c0`: the columns of the
/// returned `N × n0` matrix. Such a source leaves `w2` and the `U2` rows
/// untouched and feeds only `z0 = c0 φ`.
pub fn pure_t0_directions(
    dec: &SubspaceDecomposition,
    spec: &SpectralFactorization,
) -> Result<DMatrix<f64>> {
    let n = dec.dim;
    let d = spec.dim();
    let mut rhs = DMatrix::zeros(n, spec.inertia.zero);
    let block = dec.q_block(3, 3) * spec.t_zero();
    rhs.view_mut((n - d, 0), block.shape()).copy_from(&block);
    dec.u()
        .transpose()
        .lu()
        .solve(&rhs)
        .ok_or(Error::DecompositionInvariant {
            what: "U invertible",
            residual: 0.0,
            tolerance: 0.0,
        })
}

/// Unit-norm profile `φ_s(y) = √(2(s-a)) e^{-s y}`.
pub fn witness_profile(s: f64, a: f64) -> Result<ExpPolyVec> {
    if s <= a {
        return Err(Error::InvalidParameter(format!(
            "profile rate {s} must exceed a = {a}"
        )));
    }
    ExpPolyVec::scalar(s, &[(2.0 * (s - a)).sqrt()])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessSample {
    pub s: f64,
    pub h_norm: f64,
    pub z_plus0_norm: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstabilityWitness {
    pub h: ExpPolyVec,
    pub s: f64,
    pub c0: DVector<f64>,
    /// Largest gain `‖z+(0)‖ / φ_s(0)` over unit-norm sources.
    pub gain: f64,
    pub h_norm: f64,
    pub z_plus0_norm: f64,
    pub target: f64,
    /// Solves at increasing `s`, the last one being the reported witness.
    pub samples: Vec<WitnessSample>,
}

/// Build a unit-norm source whose solution has `‖z+(0)‖ ≥ target`, or
/// `None` when the boundary operator filters every `T0` direction.
pub fn instability_witness(
    sys: &MomentSystem,
    dec: &SubspaceDecomposition,
    spec: &SpectralFactorization,
    bc: &BoundaryOperator,
    a: f64,
    target: f64,
) -> Result<Option<InstabilityWitness>> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target must be positive, got {target}"
        )));
    }
    spec.check_weight(a)?;
    let red = reduce_bc(bc, spec)?;
    let bt_inv = bt_plus_inverse(&red, spec)?;
    if spec.inertia.zero == 0 || spec.inertia.plus == 0 {
        return Ok(None);
    }
    let t0 = spec.t_zero();
    let gain_map = &bt_inv * (&red.b * &t0);
    let scale = linalg::sigma_max(&bt_inv) * red.b.norm() * t0.norm();
    if gain_map.norm() <= TOL_STABLE * scale {
        return Ok(None);
    }

    // maximise ‖gain_map c0‖ subject to ‖N0 c0‖ = 1
    let n0 = pure_t0_directions(dec, spec)?;
    let (_, r) = linalg::gram_schmidt_qr(&n0).ok_or(Error::DecompositionInvariant {
        what: "pure T0 directions independent",
        residual: 0.0,
        tolerance: 0.0,
    })?;
    let r_inv = r.try_inverse().ok_or(Error::DecompositionInvariant {
        what: "pure T0 directions independent",
        residual: 0.0,
        tolerance: 0.0,
    })?;
    let m = &gain_map * &r_inv;
    let svd = m.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested");
    let (best, gain) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold(
            (0, -1.0),
            |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc },
        );
    let mut d_vec = v_t.row(best).transpose();
    linalg::fix_sign(&mut d_vec);
    let c0 = &r_inv * d_vec;
    let direction = &n0 * &c0;

    // ‖z+(0)‖ = gain · √(2(s-a)); land just past the target
    let s_star = a + 0.5 * (target / gain).powi(2) * (1.0 + 1e-9);
    let build = |s: f64| -> Result<(ExpPolyVec, WitnessSample)> {
        let profile = witness_profile(s, a)?;
        let h = ExpPolyVec::outer(&direction, s, &[profile.terms()[0].coeffs[(0, 0)]])?;
        let sol = solve(
            sys,
            dec,
            spec,
            &BoundaryOperator::homogeneous(bc.b3.clone(), bc.description),
            &h,
            a,
        )?;
        let sample = WitnessSample {
            s,
            h_norm: sol.norms.h_a,
            z_plus0_norm: sol.z_plus0.norm(),
            ratio: sol.norms.ratio,
        };
        Ok((h, sample))
    };
    let mut samples = Vec::new();
    for frac in [1.0 / 16.0, 0.25] {
        let s = a + (s_star - a) * frac;
        if s > a + 1e-12 {
            samples.push(build(s)?.1);
        }
    }
    let (h, last) = build(s_star)?;
    samples.push(last.clone());
    Ok(Some(InstabilityWitness {
        h,
        s: s_star,
        c0,
        gain,
        h_norm: last.h_norm,
        z_plus0_norm: last.z_plus0_norm,
        target,
        samples,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::build_decomposition;
    use crate::wellposed::BcKind;
    use std::f64::consts::SQRT_2;

    fn kramers() -> (MomentSystem, SubspaceDecomposition, SpectralFactorization) {
        let sys = MomentSystem::kramers3(1.0).unwrap();
        let dec = build_decomposition(&sys).unwrap();
        let spec = SpectralFactorization::new(&dec, None).unwrap();
        (sys, dec, spec)
    }

    fn kramers_source() -> ExpPolyVec {
        ExpPolyVec::outer(&DVector::from_vec(vec![0.0, 1.0, 0.0]), 1.0, &[1.0]).unwrap()
    }

    #[test]
    fn kramers_closed_form() {
        let (sys, dec, spec) = kramers();
        let bc = BoundaryOperator::homogeneous(DMatrix::zeros(0, 1), BcKind::Custom);
        let sol = solve(&sys, &dec, &spec, &bc, &kramers_source(), 0.5).unwrap();
        let expect =
            ExpPolyVec::outer(&DVector::from_vec(vec![-SQRT_2, 1.0, 0.0]), 1.0, &[1.0]).unwrap();
        let diff = sol.w.sub(&expect).unwrap();
        let err = diff
            .terms()
            .iter()
            .map(|t| t.coeffs.amax())
            .fold(0.0, f64::max);
        assert!(err <= 1e-12, "{:?}", sol.w);
        assert!(sol.residual_sup <= 1e-12);
        assert!((sol.norms.ratio - 3.0_f64.sqrt()).abs() < 1e-12);
        let tc = bounded_trace_combination(&dec, &sol).unwrap();
        assert!(tc.norm < 1e-12);
        assert!(tc.within_bound());
    }

    #[test]
    fn zero_data_zero_solution() {
        let sys = MomentSystem::full3d(3, 1.0).unwrap();
        let dec = build_decomposition(&sys).unwrap();
        let spec = SpectralFactorization::new(&dec, None).unwrap();
        let b = spec.t_plus().transpose() * dec.q_block(3, 3);
        let bc = BoundaryOperator::homogeneous(b, BcKind::Custom);
        let sol = solve(&sys, &dec, &spec, &bc, &ExpPolyVec::zero(sys.dim()), 0.3).unwrap();
        assert!(sol.w.is_zero());
        assert_eq!(verify_estimate(&sol), 0.0);
    }

    #[test]
    fn boundary_layer_modes() {
        let sys = MomentSystem::full3d(3, 1.0).unwrap();
        let dec = build_decomposition(&sys).unwrap();
        let spec = SpectralFactorization::new(&dec, None).unwrap();
        let b = spec.t_plus().transpose() * dec.q_block(3, 3);
        let g = DVector::from_fn(spec.inertia.plus, |i, _| 1.0 + i as f64);
        let bc = BoundaryOperator::new(b.clone(), g.clone(), BcKind::Custom).unwrap();
        let sol = solve(&sys, &dec, &spec, &bc, &ExpPolyVec::zero(sys.dim()), 0.3).unwrap();
        assert!(sol.residual_sup < 1e-12);
        assert!((&b * (dec.v3.transpose() * sol.w.eval(0.0)) - &g).norm() < 1e-12);
        assert!(sol.v1w.is_zero() || sol.v1w.eval(0.0).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_weight_and_source() {
        let (sys, dec, spec) = kramers();
        let bc = BoundaryOperator::homogeneous(DMatrix::zeros(0, 1), BcKind::Custom);
        assert!(solve(&sys, &dec, &spec, &bc, &kramers_source(), 1.5).is_err());
        assert!(solve(&sys, &dec, &spec, &bc, &ExpPolyVec::zero(2), 0.5).is_err());
    }

    #[test]
    fn profile_has_unit_norm() {
        for s in [0.6, 2.0, 50.0] {
            let p = witness_profile(s, 0.25).unwrap();
            assert!((p.weighted_norm(0.25).unwrap() - 1.0).abs() < 1e-14);
        }
        assert!(witness_profile(0.2, 0.25).is_err());
    }
}
