//! Dense linear-algebra helpers shared by the other modules.
//!
//! Everything here works on `DMatrix<f64>`; sizes in this crate stay in the
//! low hundreds of rows, so full decompositions are always affordable.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

/// Full singular value decomposition `M = U diag(sigma) V^T` with a square,
/// complete `U` (rows x rows) and singular values sorted descending.
///
/// `sigma` has `min(rows, cols)` entries. Left singular vectors beyond that
/// count span the left null space.
pub fn full_left_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if rows == 0 {
        return (DMatrix::zeros(0, 0), Vec::new());
    }
    // Zero columns leave the singular values unchanged but make the thin U square.
    let padded = if cols < rows {
        let mut p = DMatrix::zeros(rows, rows);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sigma: Vec<f64> = svd.singular_values.iter().take(k).copied().collect();
    (u.columns(0, rows).into_owned(), sigma)
}

/// Singular values, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = SVD::new(m.clone(), false, false);
    svd.singular_values.iter().copied().collect()
}

/// Spectral norm, computed from the SVD.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Rank cut used throughout: `sigma_i > rel_tol * sigma_max * max(rows, cols)`.
pub fn rank_from_singular_values(sigma: &[f64], rel_tol: f64, rows: usize, cols: usize) -> usize {
    let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let cut = rel_tol * smax * rows.max(cols) as f64;
    sigma.iter().filter(|&&s| s > cut).count()
}

/// Orthonormal basis of the column space (columns of the result).
pub fn column_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (u, sigma) = full_left_svd(m);
    let r = rank_from_singular_values(&sigma, rel_tol, m.nrows(), m.ncols());
    u.columns(0, r).into_owned()
}

/// Orthonormal basis of the left null space, returned as rows: `K * M = 0`.
pub fn left_null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (u, sigma) = full_left_svd(m);
    let r = rank_from_singular_values(&sigma, rel_tol, m.nrows(), m.ncols());
    u.columns(r, m.nrows() - r).transpose()
}

/// Orthogonal complement of an orthonormal column basis, as columns.
pub fn complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, _) = full_left_svd(basis);
    let r = basis.ncols();
    u.columns(r, basis.nrows() - r).into_owned()
}

/// Sorted (descending) eigen decomposition of a symmetric matrix.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(m.nrows(), idx.len());
    for (dst, &src) in idx.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Symmetric PSD square root; negative eigenvalues (round-off) are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(m);
    let d = DVector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0).sqrt()));
    &vecs * DMatrix::from_diagonal(&d) * vecs.transpose()
}

/// Spectral radius from the real Schur form.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Powers `[I, M, M^2, ..., M^(count-1)]`. Once a power underflows below
/// 1e-300 the remaining ones are exact zeros.
pub fn powers(m: &DMatrix<f64>, count: usize) -> Vec<DMatrix<f64>> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(DMatrix::identity(n, n));
    let mut vanished = false;
    for k in 1..count {
        if vanished {
            out.push(DMatrix::zeros(n, n));
            continue;
        }
        let next = &out[k - 1] * m;
        if next.amax() < 1e-300 {
            vanished = true;
            out.push(DMatrix::zeros(n, n));
        } else {
            out.push(next);
        }
    }
    out
}

/// Stack matrices with equal column counts on top of each other.
pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Place matrices with equal row counts side by side.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// `‖P_a - P_b‖₂` for orthonormal column bases `a` and `b` of one ambient space.
pub fn basis_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let pa = a * a.transpose();
    let pb = b * b.transpose();
    spectral_norm(&(pa - pb))
}

/// Largest deviation of `Q^T Q` from the identity.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    (g - DMatrix::identity(q.ncols(), q.ncols())).amax()
}
