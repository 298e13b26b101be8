//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest absolute entry.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Singular values in descending order together with the matching right
/// singular vectors as the columns of the returned matrix.
pub fn svd_sorted(m: &Mat) -> (Vec<f64>, Mat) {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigmas = order.iter().map(|&k| svd.singular_values[k]).collect();
    let mut v = Mat::zeros(m.ncols(), order.len());
    for (col, &k) in order.iter().enumerate() {
        v.set_column(col, &v_t.row(k).transpose());
    }
    (sigmas, v)
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Eigen-decomposition of a symmetric matrix with ascending eigenvalues.
pub fn symmetric_eigen_sorted(m: &Mat) -> (Vec<f64>, Mat) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = Mat::zeros(m.nrows(), order.len());
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Orthonormal basis of the column range of `m`, using a relative SVD cut.
pub fn range_basis(m: &Mat, rel_tol: f64) -> Mat {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested left singular vectors");
    let top = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| top > 0.0 && svd.singular_values[k] > rel_tol * top)
        .collect();
    let mut basis = Mat::zeros(m.nrows(), cols.len());
    for (c, &k) in cols.iter().enumerate() {
        basis.set_column(c, &u.column(k));
    }
    basis
}
