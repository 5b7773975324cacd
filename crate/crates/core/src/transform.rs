//! Simultaneous transformation of `(A, Q)` that splits off the collision
//! invariants and the degenerate flux directions, followed by the spectral
//! factorization of the reduced pencil `(A33, Q33)`.
//!
//! With `G` an orthonormal basis of `Null(Q)` and `X` one of `Null(GᵀAG)`:
//!
//! ```text
//! V = [V1, V2, V3] = [G X, qr(A G), complement]     (orthogonal)
//! U = [U1, U2, U3] = [G,   A G X,   V3]             (invertible)
//! ```
//!
//! and the blocks `A_ij = U_iᵀ A V_j`, `Q_ij = U_iᵀ Q V_j` satisfy
//! `Q_1j = Q_i1 = 0`, `Q33 ≻ 0`, `A31 = 0`, `rank A21 = r`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, embed_rows, hstack};
use crate::moments::MomentSystem;

/// Relative tolerance of the block-structure assertions.
pub const TOL_BLOCK: f64 = 1e-12;
/// Relative tolerance of the eigen-identities of the reduced pencil.
pub const TOL_SPECTRAL: f64 = 1e-10;

/// Outcome of the `Null(A) ∩ Null(Q) = {0}` test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Compatibility {
    pub compatible: bool,
    pub joint_nullity: usize,
    pub asymmetry: f64,
    pub q_min_eigenvalue: f64,
}

/// Validate symmetry of `A`, semi-definiteness of `Q`, and compute the joint
/// nullspace dimension from the stacked matrix `[A; Q]`.
pub fn check_compatibility(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Compatibility> {
    let n = a.nrows();
    if a.shape() != (n, n) || q.shape() != (n, n) {
        return Err(Error::ShapeMismatch(
            "A and Q must be square of equal size".into(),
        ));
    }
    let asymmetry = (a - a.transpose()).norm();
    if asymmetry > TOL_BLOCK * a.norm().max(1.0) {
        return Err(Error::AsymmetricFlux(asymmetry));
    }
    if (q - q.transpose()).norm() > TOL_BLOCK * q.norm().max(1.0) {
        return Err(Error::IndefiniteCollision(f64::NAN));
    }
    let q_min = linalg::min_sym_eigenvalue(q);
    let qscale = linalg::sym_eigen_desc(q)
        .0
        .first()
        .copied()
        .unwrap_or(0.0)
        .abs()
        .max(1.0);
    if q_min < -TOL_BLOCK * qscale {
        return Err(Error::IndefiniteCollision(q_min));
    }
    let mut stacked = DMatrix::zeros(2 * n, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(a);
    stacked.view_mut((n, 0), (n, n)).copy_from(q);
    let rank = linalg::numerical_rank(&stacked, linalg::default_rank_tol(&stacked));
    Ok(Compatibility {
        compatible: rank == n,
        joint_nullity: n - rank,
        asymmetry,
        q_min_eigenvalue: q_min,
    })
}

/// Parity split of the transformation: `G = diag(G_e, G_o)`,
/// `X = diag(X_e, X_o)`, `V3 = diag(Y3, Z3)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParityBlocks {
    pub m: usize,
    pub n: usize,
    pub g_e: DMatrix<f64>,
    pub g_o: DMatrix<f64>,
    pub x_e: DMatrix<f64>,
    pub x_o: DMatrix<f64>,
    pub y3: DMatrix<f64>,
    pub z3: DMatrix<f64>,
}

impl ParityBlocks {
    pub fn counts(&self) -> BlockCounts {
        BlockCounts {
            p1: self.g_e.ncols(),
            p2: self.g_o.ncols(),
            r1: self.x_e.ncols(),
            r2: self.x_o.ncols(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCounts {
    pub p1: usize,
    pub p2: usize,
    pub r1: usize,
    pub r2: usize,
}

/// Residual norms of each block assertion, with the tolerance each was held to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockResiduals {
    pub v_orthogonality: f64,
    pub q_first_row: f64,
    pub q_first_col: f64,
    pub q33_min_eigenvalue: f64,
    pub a31: f64,
    pub a33_asymmetry: f64,
    pub span_residual: f64,
    pub rank_a21: usize,
    pub rank_u2: usize,
    pub u_sigma_min: f64,
    pub tol_a: f64,
    pub tol_q: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceDecomposition {
    pub dim: usize,
    pub p: usize,
    pub r: usize,
    pub g: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub v1: DMatrix<f64>,
    pub v2: DMatrix<f64>,
    pub v3: DMatrix<f64>,
    pub u2: DMatrix<f64>,
    /// Upper-triangular factor with `A G = V2 K`.
    pub k: DMatrix<f64>,
    a_blocks: [[DMatrix<f64>; 3]; 3],
    q_blocks: [[DMatrix<f64>; 3]; 3],
    pub residuals: BlockResiduals,
    pub parity: Option<ParityBlocks>,
}

impl SubspaceDecomposition {
    /// `A_ij = U_iᵀ A V_j` with 1-based block labels.
    pub fn a_block(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.a_blocks[i - 1][j - 1]
    }

    /// `Q_ij = U_iᵀ Q V_j` with 1-based block labels.
    pub fn q_block(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.q_blocks[i - 1][j - 1]
    }

    pub fn reduced_dim(&self) -> usize {
        self.v3.ncols()
    }

    pub fn u(&self) -> DMatrix<f64> {
        hstack(self.dim, &[&self.g, &self.u2, &self.v3])
    }

    pub fn v(&self) -> DMatrix<f64> {
        hstack(self.dim, &[&self.v1, &self.v2, &self.v3])
    }

    /// The same transformation with `V2 -> -V2` (optionally) and
    /// `V3 -> V3 · rotation`. Used to check that solutions do not depend on
    /// these non-unique choices.
    pub fn reoriented(
        &self,
        sys: &MomentSystem,
        flip_v2: bool,
        rotation: &DMatrix<f64>,
    ) -> Result<Self> {
        let d = self.reduced_dim();
        if rotation.shape() != (d, d) {
            return Err(Error::ShapeMismatch(format!("rotation must be {d}×{d}")));
        }
        let sign = if flip_v2 { -1.0 } else { 1.0 };
        let v2 = &self.v2 * sign;
        let k = &self.k * sign;
        let v3 = &self.v3 * rotation;
        let parity = self.parity.as_ref().and_then(|pb| {
            // keep parity blocks only when the rotation respects them
            let ne = pb.y3.ncols();
            let off = rotation.view((0, ne), (ne, d - ne)).norm()
                + rotation.view((ne, 0), (d - ne, ne)).norm();
            (off == 0.0).then(|| {
                let mut pb = pb.clone();
                pb.y3 = &pb.y3 * rotation.view((0, 0), (ne, ne));
                pb.z3 = &pb.z3 * rotation.view((ne, ne), (d - ne, d - ne));
                pb
            })
        });
        finish(sys, self.g.clone(), self.x.clone(), v2, k, v3, parity)
    }
}

/// Build the transformation for `sys`, using the parity split when the
/// system carries one.
pub fn build_decomposition(sys: &MomentSystem) -> Result<SubspaceDecomposition> {
    let compat = check_compatibility(sys.a(), sys.q())?;
    if !compat.compatible {
        return Err(Error::IncompatibleSystem(compat.joint_nullity));
    }
    match sys.parity() {
        Some(p) if parity_structured(sys) => build_with_parity(sys, p.m, p.n),
        _ => build_general(sys),
    }
}

fn parity_structured(sys: &MomentSystem) -> bool {
    let Some(p) = sys.parity() else { return false };
    let (m, n) = (p.m, p.n);
    sys.a().view((0, 0), (m, m)).iter().all(|v| *v == 0.0)
        && sys.a().view((m, m), (n, n)).iter().all(|v| *v == 0.0)
        && sys.q().view((0, m), (m, n)).iter().all(|v| *v == 0.0)
        && sys.q().view((m, 0), (n, m)).iter().all(|v| *v == 0.0)
}

fn build_general(sys: &MomentSystem) -> Result<SubspaceDecomposition> {
    let n = sys.dim();
    let a = sys.a();
    let g = linalg::nullspace_basis(sys.q(), linalg::default_rank_tol(sys.q()));
    let gag = g.transpose() * a * &g;
    let x = rank_tolerant_null(&gag, a.norm());
    let v1 = &g * &x;
    let ag = a * &g;
    let (v2, k) = linalg::gram_schmidt_qr(&ag).ok_or(Error::IncompatibleSystem(0))?;
    let dim3 = n - g.ncols() - x.ncols();
    let v12 = hstack(n, &[&v1, &v2]);
    let v3 = linalg::orthogonal_complement(&v12, n, dim3);
    finish(sys, g, x, v2, k, v3, None)
}

fn build_with_parity(sys: &MomentSystem, m: usize, n: usize) -> Result<SubspaceDecomposition> {
    let big_n = m + n;
    let a = sys.a();
    let q = sys.q();
    let mflux = a.view((0, m), (m, n)).into_owned();
    let q_e = q.view((0, 0), (m, m)).into_owned();
    let q_o = q.view((m, m), (n, n)).into_owned();
    let g_e = linalg::nullspace_basis(&q_e, linalg::default_rank_tol(&q_e));
    let g_o = if n > 0 {
        linalg::nullspace_basis(&q_o, linalg::default_rank_tol(&q_o))
    } else {
        DMatrix::zeros(0, 0)
    };
    let (p1, p2) = (g_e.ncols(), g_o.ncols());
    let g = hstack(
        big_n,
        &[&embed_rows(&g_e, big_n, 0), &embed_rows(&g_o, big_n, m)],
    );

    // GᵀAG = [[0, D], [Dᵀ, 0]]  =>  Null = Null(Dᵀ) ⊕ Null(D)
    let d = g_e.transpose() * &mflux * &g_o;
    let scale = a.norm();
    let x_e = if p2 == 0 {
        DMatrix::identity(p1, p1)
    } else {
        rank_tolerant_null(&d.transpose(), scale)
    };
    let x_o = if p1 == 0 {
        DMatrix::identity(p2, p2)
    } else {
        rank_tolerant_null(&d, scale)
    };
    let (r1, r2) = (x_e.ncols(), x_o.ncols());
    let mut x = DMatrix::zeros(p1 + p2, r1 + r2);
    x.view_mut((0, 0), (p1, r1)).copy_from(&x_e);
    x.view_mut((p1, r1), (p2, r2)).copy_from(&x_o);

    let v1 = &g * &x;
    let ag = a * &g;
    let (v2, k) = linalg::gram_schmidt_qr(&ag).ok_or(Error::IncompatibleSystem(0))?;

    let v12 = hstack(big_n, &[&v1, &v2]);
    let even_part = v12.view((0, 0), (m, v12.ncols())).into_owned();
    let odd_part = v12.view((m, 0), (n, v12.ncols())).into_owned();
    let y3 = linalg::orthogonal_complement(&even_part, m, m - r1 - p2);
    let z3 = linalg::orthogonal_complement(&odd_part, n, n - r2 - p1);
    let v3 = hstack(
        big_n,
        &[&embed_rows(&y3, big_n, 0), &embed_rows(&z3, big_n, m)],
    );

    let parity = ParityBlocks {
        m,
        n,
        g_e,
        g_o,
        x_e,
        x_o,
        y3,
        z3,
    };
    finish(sys, g, x, v2, k, v3, Some(parity))
}

/// Null space of a block of `A`-products; zero singular values are judged
/// against the scale of `A` rather than the block itself.
fn rank_tolerant_null(m: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let smax = linalg::sigma_max(m);
    if smax <= 1e3 * f64::EPSILON * scale.max(1.0) {
        return DMatrix::identity(m.ncols(), m.ncols());
    }
    let rel = (1e3 * f64::EPSILON * scale.max(1.0) / smax).max(linalg::default_rank_tol(m));
    linalg::nullspace_basis(m, rel)
}

fn finish(
    sys: &MomentSystem,
    g: DMatrix<f64>,
    x: DMatrix<f64>,
    v2: DMatrix<f64>,
    k: DMatrix<f64>,
    v3: DMatrix<f64>,
    parity: Option<ParityBlocks>,
) -> Result<SubspaceDecomposition> {
    let n = sys.dim();
    let a = sys.a();
    let q = sys.q();
    let v1 = &g * &x;
    let u2 = a * &v1;
    let us = [&g, &u2, &v3];
    let vs = [&v1, &v2, &v3];
    let block = |m: &DMatrix<f64>, i: usize, j: usize| us[i].transpose() * m * vs[j];
    let mut a_blocks: [[DMatrix<f64>; 3]; 3] = Default::default();
    let mut q_blocks: [[DMatrix<f64>; 3]; 3] = Default::default();
    for i in 0..3 {
        for j in 0..3 {
            a_blocks[i][j] = block(a, i, j);
            q_blocks[i][j] = block(q, i, j);
        }
    }
    let a33 = &a_blocks[2][2];
    let a33_asymmetry = (a33 - a33.transpose()).norm();
    a_blocks[2][2] = (a33 + a33.transpose()) * 0.5;
    let q33 = &q_blocks[2][2];
    q_blocks[2][2] = (q33 + q33.transpose()) * 0.5;

    let v = hstack(n, &vs);
    let u = hstack(n, &us);
    let tol_a = TOL_BLOCK * a.norm().max(f64::MIN_POSITIVE);
    let tol_q = TOL_BLOCK * q.norm().max(f64::MIN_POSITIVE);
    let q_first_row = (0..3).map(|j| q_blocks[0][j].norm()).fold(0.0, f64::max);
    let q_first_col = (0..3).map(|i| q_blocks[i][0].norm()).fold(0.0, f64::max);
    let residuals = BlockResiduals {
        v_orthogonality: (v.transpose() * &v - DMatrix::identity(n, n)).norm(),
        q_first_row,
        q_first_col,
        q33_min_eigenvalue: linalg::min_sym_eigenvalue(&q_blocks[2][2]),
        a31: a_blocks[2][0].norm(),
        a33_asymmetry,
        span_residual: (a * &g - &v2 * &k).norm(),
        rank_a21: linalg::numerical_rank(&a_blocks[1][0], 1e-10),
        rank_u2: linalg::numerical_rank(&u2, 1e-10),
        u_sigma_min: linalg::sigma_min(&u),
        tol_a,
        tol_q,
    };

    let r = x.ncols();
    let check = |what: &'static str, residual: f64, tolerance: f64| -> Result<()> {
        if residual <= tolerance {
            Ok(())
        } else {
            Err(Error::DecompositionInvariant {
                what,
                residual,
                tolerance,
            })
        }
    };
    check(
        "V orthogonal",
        residuals.v_orthogonality,
        TOL_BLOCK * (n as f64).max(1.0),
    )?;
    check("Q_1j = 0", residuals.q_first_row, tol_q)?;
    check("Q_i1 = 0", residuals.q_first_col, tol_q)?;
    check("A_31 = 0", residuals.a31, tol_a)?;
    check("A33 symmetric", a33_asymmetry, tol_a)?;
    check("A G = V2 K", residuals.span_residual, tol_a)?;
    if v3.ncols() > 0 && residuals.q33_min_eigenvalue <= 0.0 {
        return Err(Error::DecompositionInvariant {
            what: "Q33 positive definite",
            residual: residuals.q33_min_eigenvalue,
            tolerance: 0.0,
        });
    }
    if residuals.rank_a21 != r || residuals.rank_u2 != r {
        return Err(Error::DecompositionInvariant {
            what: "rank A21 = rank U2 = r",
            residual: residuals.rank_a21 as f64,
            tolerance: r as f64,
        });
    }
    let u_tol = linalg::default_rank_tol(&u) * linalg::sigma_max(&u);
    check("U invertible", u_tol, residuals.u_sigma_min)?;

    Ok(SubspaceDecomposition {
        dim: n,
        p: g.ncols(),
        r,
        g,
        x,
        v1,
        v2,
        v3,
        u2,
        k,
        a_blocks,
        q_blocks,
        residuals,
        parity,
    })
}

/// Inertia counts `(n+, n0, n-)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inertia {
    pub plus: usize,
    pub zero: usize,
    pub minus: usize,
}

/// `Q33 = L Lᵀ`, `L⁻¹ A33 L⁻ᵀ R = R Λ`, `T = L⁻ᵀ R = [T+, T0, T-]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFactorization {
    pub l: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Eigenvalues in descending order: positive block, zero block, negative block.
    pub lambda: Vec<f64>,
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
    pub inertia: Inertia,
    pub lambda_max: f64,
    pub tol_eig: f64,
    pub eigen_residual: f64,
    pub pencil_residual: f64,
}

impl SpectralFactorization {
    /// Factor the reduced pencil of `dec`. `tol_eig` overrides the default
    /// zero-eigenvalue threshold `1e-10 · max(1, max|λ|)`.
    pub fn new(dec: &SubspaceDecomposition, tol_eig: Option<f64>) -> Result<Self> {
        let a33 = dec.a_block(3, 3);
        let q33 = dec.q_block(3, 3);
        let d = a33.nrows();
        let l = if d == 0 {
            DMatrix::zeros(0, 0)
        } else {
            q33.clone().cholesky().ok_or(Error::CholeskyFailure)?.l()
        };
        let l_inv = l
            .clone()
            .try_inverse()
            .unwrap_or_else(|| DMatrix::zeros(d, d));
        let c = &l_inv * a33 * l_inv.transpose();
        let (lambda, r) = linalg::sym_eigen_desc(&c);
        let abs_max = lambda.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol_eig = tol_eig.unwrap_or(1e-10 * abs_max.max(1.0));
        let inertia = Inertia {
            plus: lambda.iter().filter(|&&v| v > tol_eig).count(),
            zero: lambda.iter().filter(|&&v| v.abs() <= tol_eig).count(),
            minus: lambda.iter().filter(|&&v| v < -tol_eig).count(),
        };
        let t = l_inv.transpose() * &r;
        let t_inv = r.transpose() * l.transpose();
        let lam = DMatrix::from_diagonal(&DVector::from_vec(lambda.clone()));

        let eigen_residual = (&c * &r - &r * &lam).norm();
        let pencil_residual = (a33 * &t - q33 * &t * &lam).norm();
        let a_scale = a33.norm();
        if eigen_residual > TOL_SPECTRAL * a_scale.max(f64::MIN_POSITIVE) && eigen_residual > 0.0 {
            return Err(Error::DecompositionInvariant {
                what: "L⁻¹A33L⁻ᵀR = RΛ",
                residual: eigen_residual,
                tolerance: TOL_SPECTRAL * a_scale,
            });
        }
        let t_scale = t.norm();
        if pencil_residual > TOL_SPECTRAL * (a_scale * t_scale).max(f64::MIN_POSITIVE)
            && pencil_residual > 0.0
        {
            return Err(Error::DecompositionInvariant {
                what: "A33 T = Q33 T Λ",
                residual: pencil_residual,
                tolerance: TOL_SPECTRAL * a_scale * t_scale,
            });
        }
        Ok(Self {
            l,
            r,
            lambda_max: lambda.first().copied().unwrap_or(0.0),
            lambda,
            t,
            t_inv,
            inertia,
            tol_eig,
            eigen_residual,
            pencil_residual,
        })
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn t_plus(&self) -> DMatrix<f64> {
        self.t.columns(0, self.inertia.plus).into_owned()
    }

    pub fn t_zero(&self) -> DMatrix<f64> {
        self.t
            .columns(self.inertia.plus, self.inertia.zero)
            .into_owned()
    }

    pub fn t_minus(&self) -> DMatrix<f64> {
        self.t
            .columns(self.inertia.plus + self.inertia.zero, self.inertia.minus)
            .into_owned()
    }

    pub fn lambda_plus(&self) -> &[f64] {
        &self.lambda[..self.inertia.plus]
    }

    pub fn lambda_minus(&self) -> &[f64] {
        &self.lambda[self.inertia.plus + self.inertia.zero..]
    }

    /// Distance of each eigenvalue from the zero threshold: `|λ| - tol_eig`.
    pub fn margins(&self) -> Vec<f64> {
        self.lambda.iter().map(|v| v.abs() - self.tol_eig).collect()
    }

    /// Upper bound `1/λ_max` on the decay weight, `None` if vacuous.
    pub fn weight_limit(&self) -> Option<f64> {
        (self.inertia.plus > 0).then(|| 1.0 / self.lambda_max)
    }

    pub fn check_weight(&self, a: f64) -> Result<()> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "weight must be positive, got {a}"
            )));
        }
        match self.weight_limit() {
            Some(limit) if a >= limit => Err(Error::WeightViolation { a, limit }),
            _ => Ok(()),
        }
    }
}

/// Factor the pencil and validate the decay weight `a`.
pub fn spectral_factorization(
    dec: &SubspaceDecomposition,
    a: f64,
) -> Result<SpectralFactorization> {
    let spec = SpectralFactorization::new(dec, None)?;
    spec.check_weight(a)?;
    Ok(spec)
}

/// Inertia of a symmetric matrix from its own eigenvalues, zero threshold
/// `rel_tol · max(1, max|λ|)`.
pub fn direct_inertia(m: &DMatrix<f64>, rel_tol: f64) -> Inertia {
    let (vals, _) = linalg::sym_eigen_desc(m);
    let tol = rel_tol * vals.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    Inertia {
        plus: vals.iter().filter(|&&v| v > tol).count(),
        zero: vals.iter().filter(|&&v| v.abs() <= tol).count(),
        minus: vals.iter().filter(|&&v| v < -tol).count(),
    }
}

/// JSON report of a decomposition and its factorization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub dim: usize,
    pub p: usize,
    pub r: usize,
    pub n_plus: usize,
    pub n_zero: usize,
    pub n_minus: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<BlockCounts>,
    pub eigenvalues: Vec<f64>,
    pub margins: Vec<f64>,
    pub tol_eig: f64,
    pub lambda_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_limit: Option<f64>,
    pub residuals: BlockResiduals,
    pub eigen_residual: f64,
    pub pencil_residual: f64,
}

impl AnalysisReport {
    pub fn new(dec: &SubspaceDecomposition, spec: &SpectralFactorization) -> Self {
        Self {
            dim: dec.dim,
            p: dec.p,
            r: dec.r,
            n_plus: spec.inertia.plus,
            n_zero: spec.inertia.zero,
            n_minus: spec.inertia.minus,
            counts: dec.parity.as_ref().map(ParityBlocks::counts),
            eigenvalues: spec.lambda.clone(),
            margins: spec.margins(),
            tol_eig: spec.tol_eig,
            lambda_max: spec.lambda_max,
            weight_limit: spec.weight_limit(),
            residuals: dec.residuals.clone(),
            eigen_residual: spec.eigen_residual,
            pencil_residual: spec.pencil_residual,
        }
    }
}
