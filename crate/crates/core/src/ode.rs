//! Fixed-step integration of the matrix problem `-Y'' + P(x) Y = λ Y`.
//!
//! Classical fourth-order Runge–Kutta on the first-order system `(Y, Y')`,
//! one step per grid cell, with the potential sampled at half-steps.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{is_finite, Mat};
use crate::model::{MatrixPotential, PotentialTable};

/// Solution of the matrix initial-value problem sampled at the grid nodes.
#[derive(Debug, Clone)]
pub struct MatrixSolutionPath {
    pub grid: Grid,
    pub lambda: f64,
    pub y: Vec<Mat>,
    pub yp: Vec<Mat>,
    /// `Y'' = (P - λ) Y` at the nodes, used for dense output.
    pub ypp: Vec<Mat>,
}

/// Terminal state of a shot plus the path magnitudes seen on the way.
#[derive(Debug, Clone)]
pub struct EndState {
    pub y: Mat,
    pub yp: Mat,
    pub max_y: f64,
    pub max_yp: f64,
}

fn rhs(p: &Mat, lambda: f64, y: &Mat) -> Mat {
    let mut out = p * y;
    out -= y * lambda;
    out
}

fn check_dims(table: &PotentialTable, y0: &Mat, yp0: &Mat) -> Result<()> {
    let n = table.dim();
    if y0.nrows() != n || yp0.nrows() != n || y0.ncols() != yp0.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "initial data {}x{} / {}x{} for a {n}x{n} potential",
            y0.nrows(),
            y0.ncols(),
            yp0.nrows(),
            yp0.ncols()
        )));
    }
    Ok(())
}

/// Integrate over the whole grid, calling `visit(i, y, yp)` at every node.
fn march(
    table: &PotentialTable,
    grid: &Grid,
    lambda: f64,
    y0: &Mat,
    yp0: &Mat,
    mut visit: impl FnMut(usize, &Mat, &Mat),
) -> Result<(Mat, Mat)> {
    check_dims(table, y0, yp0)?;
    let h = grid.step();
    let mut y = y0.clone();
    let mut z = yp0.clone();
    visit(0, &y, &z);
    for i in 0..grid.len() - 1 {
        let (p0, pm, p1) = (table.node(i), table.midpoint(i), table.node(i + 1));

        let k1y = z.clone();
        let k1z = rhs(p0, lambda, &y);
        let k2y = &z + &k1z * (0.5 * h);
        let k2z = rhs(pm, lambda, &(&y + &k1y * (0.5 * h)));
        let k3y = &z + &k2z * (0.5 * h);
        let k3z = rhs(pm, lambda, &(&y + &k2y * (0.5 * h)));
        let k4y = &z + &k3z * h;
        let k4z = rhs(p1, lambda, &(&y + &k3y * h));

        y += (k1y + (k2y + k3y) * 2.0 + k4y) * (h / 6.0);
        z += (k1z + (k2z + k3z) * 2.0 + k4z) * (h / 6.0);
        if !is_finite(&y) || !is_finite(&z) {
            return Err(Error::NonFiniteState { lambda, x: grid.node(i + 1) });
        }
        visit(i + 1, &y, &z);
    }
    Ok((y, z))
}

/// Integrate and keep only the state at `x = π`.
pub fn shoot_end(
    table: &PotentialTable,
    grid: &Grid,
    lambda: f64,
    y0: &Mat,
    yp0: &Mat,
) -> Result<EndState> {
    let (mut max_y, mut max_yp) = (0.0_f64, 0.0_f64);
    let (y, yp) = march(table, grid, lambda, y0, yp0, |_, y, z| {
        max_y = max_y.max(y.norm());
        max_yp = max_yp.max(z.norm());
    })?;
    Ok(EndState { y, yp, max_y, max_yp })
}

/// Integrate with a pre-tabulated potential and keep the full path.
pub fn integrate_table(
    table: &PotentialTable,
    grid: &Grid,
    lambda: f64,
    y0: &Mat,
    yp0: &Mat,
) -> Result<MatrixSolutionPath> {
    let mut ys = Vec::with_capacity(grid.len());
    let mut yps = Vec::with_capacity(grid.len());
    march(table, grid, lambda, y0, yp0, |_, y, z| {
        ys.push(y.clone());
        yps.push(z.clone());
    })?;
    let ypp = ys
        .iter()
        .enumerate()
        .map(|(i, y)| rhs(table.node(i), lambda, y))
        .collect();
    Ok(MatrixSolutionPath { grid: grid.clone(), lambda, y: ys, yp: yps, ypp })
}

pub fn integrate_ivp(
    pot: &MatrixPotential,
    lambda: f64,
    y0: &Mat,
    yp0: &Mat,
    grid: &Grid,
) -> Result<MatrixSolutionPath> {
    integrate_table(&pot.tabulate(grid), grid, lambda, y0, yp0)
}

/// `(Y(x), Y'(x))` by quintic Hermite interpolation of `Y, Y', Y''`; exact at nodes.
pub fn evaluate_path(path: &MatrixSolutionPath, x: f64) -> Result<(Mat, Mat)> {
    let (i, s) = path.grid.locate(x)?;
    if let Some(j) = path.grid.node_index(x) {
        return Ok((path.y[j].clone(), path.yp[j].clone()));
    }
    let h = path.grid.step();
    let t = s / h;
    let (t2, t3) = (t * t, t * t * t);
    let (t4, t5) = (t3 * t, t3 * t2);

    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    let g0 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let g1 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let g2 = 0.5 * t3 - t4 + 0.5 * t5;

    let dh0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
    let dh1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
    let dh2 = t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4;
    let dg0 = -dh0;
    let dg1 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
    let dg2 = 1.5 * t2 - 4.0 * t3 + 2.5 * t4;

    let (y0, y1) = (&path.y[i], &path.y[i + 1]);
    let (d0, d1) = (&path.yp[i], &path.yp[i + 1]);
    let (s0, s1) = (&path.ypp[i], &path.ypp[i + 1]);

    let y = y0 * h0 + d0 * (h * h1) + s0 * (h * h * h2) + y1 * g0 + d1 * (h * g1) + s1 * (h * h * g2);
    let yp = (y0 * dh0 + y1 * dg0) / h + d0 * dh1 + d1 * dg1 + (s0 * dh2 + s1 * dg2) * h;
    Ok((y, yp))
}
