//! Dense linear-algebra helpers shared by the builders, the subspace transform
//! and the solver. Everything here is deterministic: bases come out with a
//! fixed column order and sign so that two runs agree bit-for-bit.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Default relative rank tolerance: `max(rows, cols) * eps`.
pub fn default_rank_tol(m: &DMatrix<f64>) -> f64 {
    m.nrows().max(m.ncols()).max(1) as f64 * f64::EPSILON
}

/// Singular values sorted in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&v| v > rel_tol * smax).count(),
        _ => 0,
    }
}

/// Smallest singular value (`0` for empty matrices with a nonzero column count).
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    if m.ncols() == 0 {
        return f64::INFINITY;
    }
    if m.nrows() < m.ncols() {
        return 0.0;
    }
    singular_values(m).last().copied().unwrap_or(0.0)
}

pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Orthonormal basis of `span(cols)` by modified Gram-Schmidt with column
/// pivoting and one re-orthogonalisation pass.
///
/// Columns are returned sorted by the index of the spanning column they were
/// pivoted from, and each is signed so that its largest entry is positive.
/// Iteration stops after `max_cols` vectors or when every residual column has
/// norm at most `abs_tol`.
pub fn pivoted_orthonormal(
    cols: &DMatrix<f64>,
    max_cols: Option<usize>,
    abs_tol: f64,
) -> (DMatrix<f64>, Vec<usize>) {
    let n = cols.nrows();
    let limit = max_cols.unwrap_or(cols.ncols()).min(cols.ncols()).min(n);
    let mut residual = cols.clone();
    let mut basis: Vec<(usize, DVector<f64>)> = Vec::with_capacity(limit);

    while basis.len() < limit {
        let (mut best, mut best_norm) = (usize::MAX, abs_tol);
        for j in 0..residual.ncols() {
            let nrm = residual.column(j).norm();
            if nrm > best_norm {
                best = j;
                best_norm = nrm;
            }
        }
        if best == usize::MAX {
            break;
        }
        let mut q: DVector<f64> = residual.column(best) / best_norm;
        for _ in 0..2 {
            for (_, b) in &basis {
                let d = b.dot(&q);
                q.axpy(-d, b, 1.0);
            }
        }
        let qn = q.norm();
        if qn <= f64::EPSILON {
            // numerically dependent; drop the column and continue
            residual.column_mut(best).fill(0.0);
            continue;
        }
        q /= qn;
        let proj = q.transpose() * &residual;
        residual -= &q * proj;
        residual.column_mut(best).fill(0.0);
        basis.push((best, q));
    }

    basis.sort_by_key(|(p, _)| *p);
    let pivots: Vec<usize> = basis.iter().map(|(p, _)| *p).collect();
    let mut out = DMatrix::zeros(n, basis.len());
    for (k, (_, mut q)) in basis.into_iter().enumerate() {
        fix_sign(&mut q);
        out.set_column(k, &q);
    }
    (out, pivots)
}

/// Flip `v` so its largest-magnitude entry (first one on ties) is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut idx = 0;
    let mut best = -1.0_f64;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best + 1e-14 * best.abs() {
            best = x.abs();
            idx = i;
        }
    }
    if !v.is_empty() && v[idx] < 0.0 {
        v.neg_mut();
    }
}

/// Orthonormal basis of `Null(m)`: singular values `<= rel_tol * sigma_max`
/// are treated as zero. The basis is canonicalised by pivoted Gram-Schmidt on
/// the null-space projector, so coordinate-aligned null vectors come out as
/// unit vectors and block structure in `m` is preserved.
pub fn nullspace_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return DMatrix::identity(n, n);
    }
    let null_rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= rel_tol * smax)
        .collect();
    if null_rows.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    let mut raw = DMatrix::zeros(n, null_rows.len());
    for (k, &i) in null_rows.iter().enumerate() {
        raw.set_column(k, &vt.row(i).transpose());
    }
    let projector = &raw * raw.transpose();
    let (basis, _) = pivoted_orthonormal(&projector, Some(null_rows.len()), 1e-8);
    basis
}

/// Orthonormal basis of the orthogonal complement of the orthonormal columns
/// of `v`, of exactly `dim` columns.
pub fn orthogonal_complement(v: &DMatrix<f64>, n: usize, dim: usize) -> DMatrix<f64> {
    let mut p = DMatrix::identity(n, n);
    if v.ncols() > 0 {
        p -= v * v.transpose();
    }
    let (basis, _) = pivoted_orthonormal(&p, Some(dim), 1e-10);
    basis
}

/// Thin QR by modified Gram-Schmidt with re-orthogonalisation, without
/// pivoting. `R` is upper triangular with a nonnegative diagonal.
/// Returns `None` if a column is numerically dependent on the previous ones.
pub fn gram_schmidt_qr(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, k) = m.shape();
    let mut q = DMatrix::zeros(n, k);
    let mut r = DMatrix::zeros(k, k);
    let scale = m.norm().max(f64::MIN_POSITIVE);
    for j in 0..k {
        let mut v: DVector<f64> = m.column(j).into_owned();
        for _ in 0..2 {
            for i in 0..j {
                let d = q.column(i).dot(&v);
                r[(i, j)] += d;
                v.axpy(-d, &q.column(i), 1.0);
            }
        }
        let nv = v.norm();
        if nv <= 1e3 * f64::EPSILON * scale {
            return None;
        }
        r[(j, j)] = nv;
        q.set_column(j, &(v / nv));
    }
    Some((q, r))
}

/// Symmetric eigendecomposition with eigenvalues in descending order and
/// sign-normalised eigenvectors.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut c: DVector<f64> = eig.eigenvectors.column(i).into_owned();
        fix_sign(&mut c);
        vecs.set_column(k, &c);
    }
    (vals, vecs)
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen_desc(m).0.last().copied().unwrap_or(f64::INFINITY)
}

/// `[a, b, ...]` horizontally; all blocks must share the row count `n`.
pub fn hstack(n: usize, blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let k: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, k);
    let mut c = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), n);
        out.view_mut((0, c), (n, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Embed `block` into `n` rows starting at row `offset`.
pub fn embed_rows(block: &DMatrix<f64>, n: usize, offset: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, block.ncols());
    out.view_mut((offset, 0), block.shape()).copy_from(block);
    out
}

/// Solve a square system by QR with column pivoting. Returns the solution and
/// the ratio of the smallest to the largest pivot magnitude.
pub fn solve_pivoted(m: &DMatrix<f64>, rhs: &DVector<f64>) -> (Option<DVector<f64>>, f64) {
    let n = m.nrows();
    if n == 0 {
        return (Some(DVector::zeros(0)), 1.0);
    }
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let dmax = (0..n).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    let dmin = (0..n)
        .map(|i| r[(i, i)].abs())
        .fold(f64::INFINITY, f64::min);
    let ratio = if dmax > 0.0 { dmin / dmax } else { 0.0 };
    (qr.solve(rhs), ratio)
}

/// Moore-Penrose pseudo-inverse with relative cutoff.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    let eps = rel_tol * smax;
    svd.pseudo_inverse(eps.max(f64::MIN_POSITIVE))
        .expect("u and v computed")
}
