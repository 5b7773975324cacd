//! Hermite multi-indices and the constant matrices of the linear moment
//! system `A W' = -Q W + h` together with its wall operators.
//!
//! Indices are stored with every even-`α2` index ahead of every odd-`α2`
//! index, so the flux matrix has the off-diagonal block form
//! `[[0, M], [Mᵀ, 0]]` and BGK collision matrices are block diagonal.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::quadrature::half_range_table;

/// Smallest admissible eigenvalue of the half-flux matrix.
pub const TOL_SPD: f64 = 1e-12;

/// Hermite multi-index `(α1, α2, α3)`; `α2` is the wall-normal direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub [u32; 3]);

impl MultiIndex {
    pub const fn new(a1: u32, a2: u32, a3: u32) -> Self {
        Self([a1, a2, a3])
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `true` when `α2` is even.
    pub fn is_even(&self) -> bool {
        self.0[1].is_multiple_of(2)
    }

    pub fn normal(&self) -> u32 {
        self.0[1]
    }

    fn graded_key(&self) -> (u32, std::cmp::Reverse<[u32; 3]>) {
        (self.degree(), std::cmp::Reverse(self.0))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

/// Sizes of the even/odd parity blocks; the first `m` unknowns are even.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parity {
    pub m: usize,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full3d,
    Kramers3,
    Reduced1d,
    Explicit,
}

/// All multi-indices with `|α| <= order`, even-`α2` block first, graded
/// lexicographic inside each block. Returns the list and the block sizes.
pub fn enumerate_indices(order: u32) -> (Vec<MultiIndex>, Parity) {
    let mut even = Vec::new();
    let mut odd = Vec::new();
    for a1 in 0..=order {
        for a2 in 0..=order - a1 {
            for a3 in 0..=order - a1 - a2 {
                let idx = MultiIndex::new(a1, a2, a3);
                if idx.is_even() {
                    even.push(idx);
                } else {
                    odd.push(idx);
                }
            }
        }
    }
    even.sort_by_key(MultiIndex::graded_key);
    odd.sort_by_key(MultiIndex::graded_key);
    let parity = Parity {
        m: even.len(),
        n: odd.len(),
    };
    even.extend(odd);
    (even, parity)
}

/// Flux matrix `⟨M ξ2 φα φβ⟩` from the three-term Hermite recursion.
///
/// Only the entry pairs `(α, α+e2)` are written, each once for both
/// triangles, so the result is exactly symmetric.
pub fn build_flux_matrix(indices: &[MultiIndex]) -> DMatrix<f64> {
    let n = indices.len();
    let mut a = DMatrix::zeros(n, n);
    for (i, alpha) in indices.iter().enumerate() {
        let up = MultiIndex::new(alpha.0[0], alpha.0[1] + 1, alpha.0[2]);
        if let Some(j) = indices.iter().position(|b| *b == up) {
            let v = ((alpha.0[1] + 1) as f64).sqrt();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// Coefficient vectors of the five collision invariants that are fully
/// represented in `indices`, orthonormalised with re-orthogonalisation.
pub fn collision_invariants(indices: &[MultiIndex]) -> DMatrix<f64> {
    let n = indices.len();
    let pos = |idx: MultiIndex| indices.iter().position(|b| *b == idx);
    let mut raw: Vec<DVector<f64>> = Vec::new();
    let singles = [
        MultiIndex::new(0, 0, 0),
        MultiIndex::new(1, 0, 0),
        MultiIndex::new(0, 1, 0),
        MultiIndex::new(0, 0, 1),
    ];
    for idx in singles {
        if let Some(i) = pos(idx) {
            let mut v = DVector::zeros(n);
            v[i] = 1.0;
            raw.push(v);
        }
    }
    let energy = [
        MultiIndex::new(2, 0, 0),
        MultiIndex::new(0, 2, 0),
        MultiIndex::new(0, 0, 2),
    ];
    let slots: Vec<_> = energy.iter().filter_map(|&e| pos(e)).collect();
    if slots.len() == 3 {
        let mut v = DVector::zeros(n);
        for i in slots {
            v[i] = 1.0 / 3f64.sqrt();
        }
        raw.push(v);
    }

    let mut basis: Vec<DVector<f64>> = Vec::new();
    for mut v in raw {
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v.axpy(-d, b, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-12 {
            basis.push(v / nv);
        }
    }
    let mut out = DMatrix::zeros(n, basis.len());
    for (k, b) in basis.iter().enumerate() {
        out.set_column(k, b);
    }
    out
}

/// BGK collision matrix `ν (I - Π)`, `Π` the projector onto the collision
/// invariants.
pub fn build_bgk_collision(indices: &[MultiIndex], nu: f64) -> Result<DMatrix<f64>> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "BGK rate must be positive, got {nu}"
        )));
    }
    let inv = collision_invariants(indices);
    let n = indices.len();
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut pij = 0.0;
            for k in 0..inv.ncols() {
                pij += inv[(i, k)] * inv[(j, k)];
            }
            let v = nu * (if i == j { 1.0 } else { 0.0 } - pij);
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    Ok(q)
}

/// Half-flux matrix `⟨M |ξ2| φα φβ⟩` over even-`α2` indices.
pub fn build_half_flux_matrix(even: &[MultiIndex]) -> Result<DMatrix<f64>> {
    let kmax = even.iter().map(|a| a.normal()).max().unwrap_or(0) as usize;
    let table = half_range_table(kmax);
    let m = even.len();
    let mut s = DMatrix::zeros(m, m);
    for (i, a) in even.iter().enumerate() {
        for (j, b) in even.iter().enumerate() {
            if a.0[0] == b.0[0] && a.0[2] == b.0[2] {
                s[(i, j)] = table[a.normal() as usize][b.normal() as usize];
            }
        }
    }
    let s = (&s + s.transpose()) * 0.5;
    let min_eig = linalg::min_sym_eigenvalue(&s);
    if min_eig <= TOL_SPD {
        return Err(Error::HalfFluxNotSpd(min_eig));
    }
    Ok(s)
}

/// Zero-one matrix selecting the even indices with `|α| <= order - 1`.
/// Its row count must equal the odd block size `n`.
pub fn build_selection_matrix(even: &[MultiIndex], order: u32, n: usize) -> Result<DMatrix<f64>> {
    let rows: Vec<usize> = even
        .iter()
        .enumerate()
        .filter(|(_, a)| a.degree() < order)
        .map(|(i, _)| i)
        .collect();
    if rows.len() != n {
        return Err(Error::InconsistentIndices(format!(
            "{} even indices with |α| <= {} but odd block has {}",
            rows.len(),
            order.saturating_sub(1),
            n
        )));
    }
    let mut e = DMatrix::zeros(n, even.len());
    for (r, &c) in rows.iter().enumerate() {
        e[(r, c)] = 1.0;
    }
    Ok(e)
}

/// Wall data of the Maxwell accommodation model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub rho_w: f64,
    pub u_w: [f64; 3],
    pub theta_w: f64,
    pub chi: f64,
}

impl BoundaryData {
    pub fn new(rho_w: f64, u_w: [f64; 3], theta_w: f64, chi: f64) -> Result<Self> {
        if u_w[1] != 0.0 {
            return Err(Error::InvalidParameter(
                "wall velocity must be tangential (u_w[1] = 0)".into(),
            ));
        }
        check_chi(chi)?;
        Ok(Self {
            rho_w,
            u_w,
            theta_w,
            chi,
        })
    }

    pub fn chi_hat(&self) -> f64 {
        chi_hat(self.chi)
    }
}

pub(crate) fn check_chi(chi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&chi) {
        return Err(Error::InvalidParameter(format!(
            "accommodation coefficient must lie in [0, 1], got {chi}"
        )));
    }
    Ok(())
}

/// `χ̂ = (2χ / (2 - χ)) / √(2π)`.
pub fn chi_hat(chi: f64) -> f64 {
    2.0 * chi / (2.0 - chi) / (2.0 * PI).sqrt()
}

/// Wall vector: `b_0 = ρw`, `b_{e_i} = u_i`, `b_{2e_i} = θw / √2`.
pub fn build_wall_vector(indices: &[MultiIndex], bd: &BoundaryData) -> DVector<f64> {
    let mut b = DVector::zeros(indices.len());
    for (i, a) in indices.iter().enumerate() {
        b[i] = match a.0 {
            [0, 0, 0] => bd.rho_w,
            [1, 0, 0] => bd.u_w[0],
            [0, 1, 0] => bd.u_w[1],
            [0, 0, 1] => bd.u_w[2],
            [2, 0, 0] | [0, 2, 0] | [0, 0, 2] => bd.theta_w / SQRT_2,
            _ => 0.0,
        };
    }
    b
}

/// The pair `(A, Q)` with its index bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSystem {
    order: u32,
    variant: Variant,
    nu: f64,
    indices: Option<Vec<MultiIndex>>,
    parity: Option<Parity>,
    a: DMatrix<f64>,
    q: DMatrix<f64>,
}

impl MomentSystem {
    /// Full three-dimensional BGK system of order `order >= 2`.
    pub fn full3d(order: u32, nu: f64) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidParameter(format!(
                "moment order must be >= 2, got {order}"
            )));
        }
        let (indices, parity) = enumerate_indices(order);
        let a = build_flux_matrix(&indices);
        let q = build_bgk_collision(&indices, nu)?;
        Ok(Self {
            order,
            variant: Variant::Full3d,
            nu,
            indices: Some(indices),
            parity: Some(parity),
            a,
            q,
        })
    }

    /// The three-variable Kramers system on `(u1, f3, σ12)`.
    pub fn kramers3(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "BGK rate must be positive, got {nu}"
            )));
        }
        let indices = vec![
            MultiIndex::new(1, 0, 0),
            MultiIndex::new(1, 2, 0),
            MultiIndex::new(1, 1, 0),
        ];
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(3, 3, &[
            0.0, 0.0, 1.0,
            0.0, 0.0, SQRT_2,
            1.0, SQRT_2, 0.0,
        ]);
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, nu, nu]));
        Ok(Self {
            order: 3,
            variant: Variant::Kramers3,
            nu,
            indices: Some(indices),
            parity: Some(Parity { m: 2, n: 1 }),
            a,
            q,
        })
    }

    /// Reduced one-dimensional shear system of odd order `order >= 3` on
    /// `W_e = (f1, f3, …, f_M)`, `W_o = (f2, …, f_{M-1})`, where `f_k` is the
    /// coefficient of index `(1, k-1, 0)`.
    pub fn reduced_couette(order: u32, nu: f64) -> Result<Self> {
        if order < 3 || order.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "reduced shear system needs odd order >= 3, got {order}"
            )));
        }
        let mut indices: Vec<MultiIndex> = (1..=order)
            .step_by(2)
            .map(|k| MultiIndex::new(1, k - 1, 0))
            .collect();
        let m = indices.len();
        indices.extend((2..order).step_by(2).map(|k| MultiIndex::new(1, k - 1, 0)));
        let a = build_flux_matrix(&indices);
        let q = build_bgk_collision(&indices, nu)?;
        Ok(Self {
            order,
            variant: Variant::Reduced1d,
            nu,
            parity: Some(Parity {
                m,
                n: indices.len() - m,
            }),
            indices: Some(indices),
            a,
            q,
        })
    }

    /// A system given directly by its matrices. `parity`, when present, asserts
    /// that the first `m` unknowns form the even block.
    pub fn explicit(
        a: DMatrix<f64>,
        q: DMatrix<f64>,
        parity: Option<Parity>,
        nu: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.shape() != (n, n) || q.shape() != (n, n) {
            return Err(Error::ShapeMismatch(format!(
                "A is {:?}, Q is {:?}; both must be square and equal",
                a.shape(),
                q.shape()
            )));
        }
        if let Some(p) = parity {
            if p.m + p.n != n {
                return Err(Error::ShapeMismatch(format!(
                    "parity {}+{} != {n}",
                    p.m, p.n
                )));
            }
        }
        Ok(Self {
            order: 0,
            variant: Variant::Explicit,
            nu,
            indices: None,
            parity,
            a,
            q,
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }
    pub fn variant(&self) -> Variant {
        self.variant
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn parity(&self) -> Option<Parity> {
        self.parity
    }
    pub fn indices(&self) -> Option<&[MultiIndex]> {
        self.indices.as_deref()
    }

    pub fn even_indices(&self) -> Result<&[MultiIndex]> {
        let p = self.parity.ok_or(Error::NoParity)?;
        Ok(&self.indices.as_deref().ok_or(Error::MissingIndices)?[..p.m])
    }

    /// Upper-right `m × n` block `M` of the flux matrix.
    pub fn flux_block(&self) -> Result<DMatrix<f64>> {
        let p = self.parity.ok_or(Error::NoParity)?;
        Ok(self.a.view((0, p.m), (p.m, p.n)).into_owned())
    }

    /// Half-flux matrix `S` over the even block.
    pub fn half_flux(&self) -> Result<DMatrix<f64>> {
        build_half_flux_matrix(self.even_indices()?)
    }

    pub fn selection(&self) -> Result<DMatrix<f64>> {
        let p = self.parity.ok_or(Error::NoParity)?;
        build_selection_matrix(self.even_indices()?, self.order, p.n)
    }

    pub fn wall_vector(&self, bd: &BoundaryData) -> Result<DVector<f64>> {
        Ok(build_wall_vector(
            self.indices.as_deref().ok_or(Error::MissingIndices)?,
            bd,
        ))
    }

    /// Position of `idx` in the unknown vector.
    pub fn position(&self, idx: MultiIndex) -> Option<usize> {
        self.indices.as_ref()?.iter().position(|b| *b == idx)
    }

    /// Residuals of the parity block structure: `(‖A_ee‖, ‖A_oo‖, ‖Q_eo‖)`.
    pub fn block_structure_residuals(&self) -> Option<(f64, f64, f64)> {
        let p = self.parity?;
        let (m, n) = (p.m, p.n);
        Some((
            self.a.view((0, 0), (m, m)).norm(),
            self.a.view((m, m), (n, n)).norm(),
            self.q.view((0, m), (m, n)).norm(),
        ))
    }

    pub fn to_document(&self) -> SystemDocument {
        let explicit = self.variant == Variant::Explicit;
        SystemDocument {
            order: self.order,
            variant: self.variant,
            nu: self.nu,
            a: explicit.then(|| rows_of(&self.a)),
            q: explicit.then(|| rows_of(&self.q)),
            parity: self.parity,
        }
    }

    pub fn from_document(doc: &SystemDocument) -> Result<Self> {
        match doc.variant {
            Variant::Full3d => Self::full3d(doc.order, doc.nu),
            Variant::Kramers3 => Self::kramers3(doc.nu),
            Variant::Reduced1d => Self::reduced_couette(doc.order, doc.nu),
            Variant::Explicit => {
                let a = doc
                    .a
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("explicit system needs \"A\"".into()))?;
                let q = doc
                    .q
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("explicit system needs \"Q\"".into()))?;
                let mut sys = Self::explicit(
                    matrix_from_rows(a)?,
                    matrix_from_rows(q)?,
                    doc.parity,
                    doc.nu,
                )?;
                sys.order = doc.order;
                Ok(sys)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }
}

/// JSON form of a [`MomentSystem`]. Matrices appear only for explicit systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemDocument {
    pub order: u32,
    pub variant: Variant,
    pub nu: f64,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parity: Option<Parity>,
}

/// Row-major nested vectors.
pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::ShapeMismatch("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_row_iterator(
        nr,
        nc,
        rows.iter().flatten().copied(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_zero_and_one() {
        let (idx, p) = enumerate_indices(0);
        assert_eq!(idx, vec![MultiIndex::new(0, 0, 0)]);
        assert_eq!(p, Parity { m: 1, n: 0 });

        let (idx, p) = enumerate_indices(1);
        assert_eq!(
            idx,
            vec![
                MultiIndex::new(0, 0, 0),
                MultiIndex::new(1, 0, 0),
                MultiIndex::new(0, 0, 1),
                MultiIndex::new(0, 1, 0)
            ]
        );
        assert_eq!(p, Parity { m: 3, n: 1 });
    }

    #[test]
    fn flux_matrix_order_one() {
        let (idx, _) = enumerate_indices(1);
        let a = build_flux_matrix(&idx);
        assert_eq!(a[(0, 3)], 1.0);
        assert_eq!(a[(3, 0)], 1.0);
        assert_eq!(a.iter().filter(|v| **v != 0.0).count(), 2);
    }

    #[test]
    fn row_sums_follow_recursion() {
        let order = 4;
        let (idx, _) = enumerate_indices(order);
        let a = build_flux_matrix(&idx);
        for (i, al) in idx.iter().enumerate() {
            let s: f64 = a.row(i).iter().map(|v| v.abs()).sum();
            let mut expect = (al.normal() as f64).sqrt();
            if al.degree() < order {
                expect += ((al.normal() + 1) as f64).sqrt();
            }
            assert!((s - expect).abs() < 1e-15, "{al}");
        }
    }

    #[test]
    fn bgk_spectrum_order_two() {
        let (idx, _) = enumerate_indices(2);
        let q = build_bgk_collision(&idx, 1.0).unwrap();
        let (vals, _) = linalg::sym_eigen_desc(&q);
        let zeros = vals.iter().filter(|v| v.abs() < 1e-12).count();
        let ones = vals.iter().filter(|v| (*v - 1.0).abs() < 1e-12).count();
        assert_eq!(zeros, 5);
        assert_eq!(ones, idx.len() - 5);
        let inv = collision_invariants(&idx);
        assert!((&q * inv).norm() < 1e-14);
    }

    #[test]
    fn bgk_rejects_nonpositive_rate() {
        let (idx, _) = enumerate_indices(2);
        assert!(build_bgk_collision(&idx, 0.0).is_err());
        assert!(build_bgk_collision(&idx, -1.0).is_err());
    }

    #[test]
    fn selection_rows_sum_to_one() {
        let sys = MomentSystem::full3d(3, 1.0).unwrap();
        let e = sys.selection().unwrap();
        assert_eq!(e.nrows(), 7);
        for r in e.row_iter() {
            assert_eq!(r.sum(), 1.0);
        }
        // E M picks rows of the flux block
        let em = &e * sys.flux_block().unwrap();
        assert_eq!(em.nrows(), 7);
    }

    #[test]
    fn selection_count_mismatch_is_reported() {
        let (idx, p) = enumerate_indices(3);
        assert!(build_selection_matrix(&idx[..p.m], 3, p.n + 1).is_err());
    }

    #[test]
    fn wall_vector_entries() {
        let (idx, _) = enumerate_indices(2);
        let b = build_wall_vector(&idx, &BoundaryData::new(1.0, [0.0; 3], 0.0, 1.0).unwrap());
        assert_eq!(b[0], 1.0);
        assert_eq!(b.iter().filter(|v| **v != 0.0).count(), 1);

        let b = build_wall_vector(
            &idx,
            &BoundaryData::new(0.0, [0.0; 3], SQRT_2, 1.0).unwrap(),
        );
        for (i, a) in idx.iter().enumerate() {
            let expect = if a.degree() == 2 && a.0.contains(&2) {
                1.0
            } else {
                0.0
            };
            assert!((b[i] - expect).abs() < 1e-15);
        }

        let b = build_wall_vector(&idx, &BoundaryData::new(0.0, [0.0; 3], 0.0, 0.0).unwrap());
        assert_eq!(b.norm(), 0.0);
    }

    #[test]
    fn boundary_data_validation() {
        assert!(BoundaryData::new(0.0, [0.0, 1.0, 0.0], 0.0, 0.5).is_err());
        assert!(BoundaryData::new(0.0, [0.0; 3], 0.0, 1.5).is_err());
        assert!((chi_hat(1.0) - 2.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert_eq!(chi_hat(0.0), 0.0);
    }

    #[test]
    fn kramers_matrices() {
        let s = MomentSystem::kramers3(1.5).unwrap();
        assert_eq!(s.a()[(0, 2)], 1.0);
        assert_eq!(s.a()[(1, 2)], SQRT_2);
        assert_eq!(s.a(), &s.a().transpose());
        assert_eq!(
            s.q(),
            &DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.5, 1.5]))
        );
    }

    #[test]
    fn reduced_couette_is_tridiagonal_in_natural_order() {
        let order = 7;
        let s = MomentSystem::reduced_couette(order, 1.0).unwrap();
        let idx = s.indices().unwrap();
        // natural ordering f1..f_M
        let natural: Vec<usize> = (0..order)
            .map(|k| idx.iter().position(|a| a.normal() == k).unwrap())
            .collect();
        for i in 0..order as usize {
            for j in 0..order as usize {
                let v = s.a()[(natural[i], natural[j])];
                let expect = if j == i + 1 || i == j + 1 {
                    ((i.max(j)) as f64).sqrt()
                } else {
                    0.0
                };
                assert!((v - expect).abs() < 1e-15);
            }
        }
        let zeros = s.q().diagonal().iter().filter(|v| **v == 0.0).count();
        assert_eq!(zeros, 1);
        assert!(MomentSystem::reduced_couette(4, 1.0).is_err());
    }

    #[test]
    fn reduced_couette_three_is_kramers() {
        let c = MomentSystem::reduced_couette(3, 2.0).unwrap();
        let k = MomentSystem::kramers3(2.0).unwrap();
        assert_eq!(c.indices(), k.indices());
        assert!((c.a() - k.a()).norm() < 1e-15);
        assert!((c.q() - k.q()).norm() < 1e-15);
    }

    #[test]
    fn system_json_roundtrip() {
        let s = MomentSystem::full3d(3, 0.7).unwrap();
        assert_eq!(MomentSystem::from_json(&s.to_json().unwrap()).unwrap(), s);
        let e = MomentSystem::explicit(s.a().clone(), s.q().clone(), s.parity(), 0.7).unwrap();
        let back = MomentSystem::from_json(&e.to_json().unwrap()).unwrap();
        assert_eq!(back.a(), e.a());
        assert_eq!(back.q(), e.q());
    }
}
