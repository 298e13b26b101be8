//! Low-order discretization oracle: linear finite elements with a lumped
//! mass matrix, which on a uniform grid is the three-point central
//! difference scheme. Eigenvalues converge as `O(h²)`.
//!
//! The boundary pairs enter through the quadratic form. Solutions of
//! `B φ' + A φ = 0` are exactly `φ = B* z, φ' = -A* z`, so `φ(0)` is confined
//! to `range B*` and `φ'(0)·φ(0) = -⟨A B* z, z⟩`, a symmetric form in `φ(0)`.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{range_basis, symmetric_eigen_sorted, symmetrize, Mat, Vector};
use crate::model::{BoundaryPair, Problem};

/// Allowed end values and the boundary form on them, `(E, H)` with
/// `φ = E z` and form `⟨H z, z⟩ = ⟨A B* w, w⟩` where `φ = B* w`.
fn end_space(pair: &BoundaryPair) -> (Mat, Mat) {
    let bt = pair.b.transpose();
    let e = range_basis(&bt, 1e-10);
    if e.ncols() == 0 {
        return (e, Mat::zeros(0, 0));
    }
    let pinv = bt.clone().pseudo_inverse(1e-10).expect("pseudo-inverse of B*");
    let h = e.transpose() * pinv.transpose() * &pair.a * &e;
    (e, symmetrize(&h))
}

/// Lowest eigenvalues of the discretized operator on an `n_fd`-node grid,
/// ascending and repeated by multiplicity.
pub fn fd_eigenvalues(p: &Problem, n_fd: usize) -> Result<Vec<f64>> {
    if n_fd < 5 {
        return Err(Error::GridTooSmall { nodes: n_fd, required: 5 });
    }
    let grid = Grid::new(n_fd)?;
    let h = grid.step();
    let n = p.dim();
    let (e0, h0) = end_space(&p.left);
    let (e1, h1) = end_space(&p.right);

    // Unknowns: z0 (left end), interior nodes, z1 (right end).
    let r0 = e0.ncols();
    let r1 = e1.ncols();
    let interior = n_fd - 2;
    let dof = r0 + interior * n + r1;
    if dof == 0 {
        return Ok(Vec::new());
    }
    // Node i's value as a combination of dofs: u_i = Σ x_d v_d.
    let terms = |i: usize| -> Vec<(usize, Vector)> {
        if i == 0 {
            (0..r0).map(|c| (c, e0.column(c).into_owned())).collect()
        } else if i == n_fd - 1 {
            (0..r1).map(|c| (dof - r1 + c, e1.column(c).into_owned())).collect()
        } else {
            let off = r0 + (i - 1) * n;
            (0..n).map(|c| (off + c, Vector::from_fn(n, |r, _| f64::from(u8::from(r == c))))).collect()
        }
    };
    let nodes: Vec<Vec<(usize, Vector)>> = (0..n_fd).map(terms).collect();
    let mut stiff = Mat::zeros(dof, dof);
    let mut mass = vec![0.0; dof];
    for (i, node) in nodes.iter().enumerate() {
        let w = if i == 0 || i == n_fd - 1 { 0.5 * h } else { h };
        let pot = p.potential.eval(grid.node(i));
        for (d1, v1) in node {
            mass[*d1] += w * v1.norm_squared();
            for (d2, v2) in node {
                stiff[(*d1, *d2)] += w * v1.dot(&(&pot * v2));
            }
        }
    }
    for i in 0..n_fd - 1 {
        let diff: Vec<(usize, Vector)> = nodes[i + 1]
            .iter()
            .cloned()
            .chain(nodes[i].iter().map(|(d, v)| (*d, -v)))
            .collect();
        for (d1, v1) in &diff {
            for (d2, v2) in &diff {
                stiff[(*d1, *d2)] += v1.dot(v2) / h;
            }
        }
    }
    for r in 0..r0 {
        for c in 0..r0 {
            stiff[(r, c)] -= h0[(r, c)];
        }
    }
    for r in 0..r1 {
        for c in 0..r1 {
            stiff[(dof - r1 + r, dof - r1 + c)] += h1[(r, c)];
        }
    }
    let scale: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let s = Mat::from_fn(dof, dof, |r, c| stiff[(r, c)] * scale[r] * scale[c]);
    let (values, _) = symmetric_eigen_sorted(&s);
    Ok(values)
}

/// A scan window holding the lowest `count` eigenvalues (by the oracle),
/// padded so the scan brackets them.
pub fn suggest_window(p: &Problem, count: usize) -> Result<(f64, f64)> {
    let values = fd_eigenvalues(p, 201)?;
    let count = count.clamp(1, values.len());
    let lo = values[0];
    let hi = values[count - 1];
    let pad = 0.5 + 0.05 * (hi - lo).abs();
    Ok((lo - pad - 0.05 * lo.abs(), hi + pad + 0.05 * hi.abs()))
}
