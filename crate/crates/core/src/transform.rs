//! Finite-rank Gel'fand–Levitan transform.
//!
//! Selected eigenfunctions `φ_1..φ_M` with weights `c_j` define the kernel
//! `𝓕(x, y) = Φ(x) C Φ*(y)`. The integral equation
//! `K(x,y) + 𝓕(x,y) + ∫_0^x K(x,t) 𝓕(t,y) dt = 0` is then solved exactly by
//! `K(x, y) = A(x) Φ*(y)` with
//!
//! ```text
//! A(x) = -Φ(x) C (I + G(x) C)^{-1},   G(x) = ∫_0^x Φ* Φ dt.
//! ```
//!
//! The new potential is `Q = P + 2 d/dx K(x,x)`, the new boundary matrices
//! are `Ã = A - B K(0,0)` and `𝓐̃ = 𝓐 - 𝓑 K(π,π)`, and eigenfunctions map
//! to `ψ = φ + ∫_0^x K(x,t) φ(t) dt`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::VectorFunction;
use crate::grid::Grid;
use crate::linalg::{max_abs, singular_values, symmetrize, Mat, Vector};
use crate::model::{MatrixPotential, Problem, SampledPotential};
use crate::quadrature;
use crate::spectrum::SpectrumReport;

/// Smallest accepted reciprocal condition number of `I + G(x) C`.
pub const RESOLVENT_RCOND: f64 = 1e-12;

/// One requested weight: eigenvalue index `k` (0-based, ascending), basis
/// index `i` (1-based within the eigenspace) and coefficient `c`.
///
/// With `theta` set, the eigenfunction is `Y(x; λ_k) θ` instead of the
/// `i`-th computed basis function; the rest of the basis is re-chosen
/// orthogonally around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationEntry {
    pub k: usize,
    pub i: usize,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
}

impl PerturbationEntry {
    pub fn new(k: usize, i: usize, c: f64) -> Self {
        Self { k, i, c, theta: None }
    }

    pub fn with_theta(k: usize, i: usize, c: f64, theta: Vec<f64>) -> Self {
        Self { k, i, c, theta: Some(theta) }
    }
}

/// A weighted eigenfunction entering the kernel.
#[derive(Debug, Clone)]
pub struct SelectedMode {
    pub k: usize,
    pub i: usize,
    pub c: f64,
    pub lambda: f64,
    pub theta: Vector,
    pub phi: VectorFunction,
    /// `φ''` at the nodes.
    pub phi_dd: Vec<Vector>,
    pub norm_sq: f64,
}

impl SelectedMode {
    /// A mode from sampled `φ, φ', φ''`; `‖φ‖²` uses the kernel's quadrature.
    #[allow(clippy::too_many_arguments)]
    pub fn from_samples(k: usize, i: usize, c: f64, lambda: f64, theta: Vector, phi: VectorFunction, phi_dd: Vec<Vector>, h: f64) -> Self {
        let norm_sq = hermite_norm_sq(&phi, &phi_dd, h);
        Self { k, i, c, lambda, theta, phi, phi_dd, norm_sq }
    }

    /// `1 + c ‖φ‖²`, which must stay positive.
    pub fn margin(&self) -> f64 {
        1.0 + self.c * self.norm_sq
    }
}

#[derive(Debug, Clone)]
pub struct Perturbation {
    pub grid: Grid,
    pub dim: usize,
    pub modes: Vec<SelectedMode>,
}

impl Perturbation {
    /// Wrap modes sampled on `grid`, checking `1 + c‖φ‖² > 0` for each.
    pub fn from_modes(grid: Grid, dim: usize, modes: Vec<SelectedMode>) -> Result<Self> {
        for m in &modes {
            if m.phi.len() != grid.len() || m.phi_dd.len() != grid.len() {
                return Err(Error::GridMismatch(format!("mode ({}, {}) is not sampled on the grid", m.k, m.i)));
            }
            if m.phi.dim() != dim {
                return Err(Error::DimensionMismatch(format!("mode ({}, {}) has {} components", m.k, m.i, m.phi.dim())));
            }
            let margin = m.margin();
            if margin.is_nan() || margin <= 0.0 {
                return Err(Error::ConditionViolated { k: m.k, i: m.i, margin });
            }
        }
        Ok(Self { grid, dim, modes })
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `Σ c φ_j(0) φ_j*(0)`, equal to `B* (Σ c θ θ*) B` for the left pair `(A, B)`.
    pub fn f00(&self, n: usize) -> Mat {
        self.modes.iter().fold(Mat::zeros(n, n), |acc, m| {
            let v = &m.phi.values[0];
            acc + v * v.transpose() * m.c
        })
    }
}

/// Resolve `entries` against a computed spectrum and check `1 + c‖φ‖² > 0`.
pub fn build_perturbation(report: &SpectrumReport, entries: &[PerturbationEntry]) -> Result<Perturbation> {
    let mut by_k: BTreeMap<usize, Vec<&PerturbationEntry>> = BTreeMap::new();
    for e in entries {
        let pair = report.pairs.get(e.k).ok_or_else(|| {
            Error::IndexOutOfRange(format!("k = {} but only {} eigenvalues were found", e.k, report.pairs.len()))
        })?;
        if e.i == 0 || e.i > pair.multiplicity {
            return Err(Error::IndexOutOfRange(format!(
                "i = {} for eigenvalue {} of multiplicity {}",
                e.i, e.k, pair.multiplicity
            )));
        }
        let list = by_k.entry(e.k).or_default();
        if list.iter().any(|o| o.i == e.i) {
            return Err(Error::DuplicateEntry { k: e.k, i: e.i });
        }
        list.push(e);
    }

    let mut bases = BTreeMap::new();
    for (&k, list) in &by_k {
        let pair = &report.pairs[k];
        let mut directed: Vec<&PerturbationEntry> = list.iter().copied().filter(|e| e.theta.is_some()).collect();
        if directed.is_empty() {
            bases.insert(k, pair.clone());
            continue;
        }
        directed.sort_by_key(|e| e.i);
        let leading: Vec<Vector> = directed
            .iter()
            .map(|e| Vector::from_column_slice(e.theta.as_deref().unwrap_or_default()))
            .collect();
        let rebased = pair.with_leading(k, &leading, report.options.rank_tol)?;
        // Directed entries take their own slot `i`; the completion fills the rest in order.
        let m = pair.multiplicity;
        let mut order: Vec<Option<usize>> = vec![None; m];
        for (pos, e) in directed.iter().enumerate() {
            order[e.i - 1] = Some(pos);
        }
        let mut fill = directed.len()..m;
        let slots: Vec<usize> = order.iter().map(|o| o.unwrap_or_else(|| fill.next().unwrap_or(0))).collect();
        let mut permuted = rebased.clone();
        permuted.thetas = slots.iter().map(|&s| rebased.thetas[s].clone()).collect();
        permuted.phis = slots.iter().map(|&s| rebased.phis[s].clone()).collect();
        permuted.norms_sq = slots.iter().map(|&s| rebased.norms_sq[s]).collect();
        bases.insert(k, permuted);
    }

    let mut modes = Vec::with_capacity(entries.len());
    for e in entries {
        let pair = &bases[&e.k];
        let theta = pair.thetas[e.i - 1].clone();
        let phi = pair.phis[e.i - 1].clone();
        let phi_dd: Vec<Vector> = pair.path.ypp.iter().map(|y| y * &theta).collect();
        let h = report.grid.step();
        modes.push(SelectedMode::from_samples(e.k, e.i, e.c, pair.lambda, theta, phi, phi_dd, h));
    }
    Perturbation::from_modes(report.grid.clone(), report.dim, modes)
}

/// `‖φ‖²` with the same Hermite rule the kernel uses for its Gram matrix.
fn hermite_norm_sq(phi: &VectorFunction, phi_dd: &[Vector], h: f64) -> f64 {
    let f: Vec<f64> = phi.values.iter().map(|v| v.norm_squared()).collect();
    let df: Vec<f64> = phi.values.iter().zip(&phi.derivs).map(|(v, d)| 2.0 * v.dot(d)).collect();
    let ddf: Vec<f64> = (0..phi.len())
        .map(|x| 2.0 * phi_dd[x].dot(&phi.values[x]) + 2.0 * phi.derivs[x].norm_squared())
        .collect();
    quadrature::hermite_cumulative(&f, &df, &ddf, h).last().copied().unwrap_or(0.0)
}

/// Degenerate representation `K(x, y) = A(x) Φ*(y)` sampled at the nodes.
#[derive(Debug, Clone)]
pub struct KernelField {
    pub grid: Grid,
    pub dim: usize,
    pub coeffs: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// `Φ`, `Φ'`, `Φ''` at each node, `N x M`.
    pub phi: Vec<Mat>,
    pub dphi: Vec<Mat>,
    pub ddphi: Vec<Mat>,
    /// Running Gram `G(x)`, `M x M`.
    pub gram: Vec<Mat>,
    /// `(I + G(x) C)^{-1}`.
    pub resolvent: Vec<Mat>,
    /// `A(x)` and `A'(x)`, `N x M`.
    pub a: Vec<Mat>,
    pub da: Vec<Mat>,
}

impl KernelField {
    pub fn rank(&self) -> usize {
        self.coeffs.len()
    }

    fn c(&self) -> Mat {
        Mat::from_diagonal(&Vector::from_column_slice(&self.coeffs))
    }

    /// `K(x_i, y_j)`; zero above the diagonal.
    pub fn kernel(&self, i: usize, j: usize) -> Mat {
        if j > i || self.rank() == 0 {
            return Mat::zeros(self.dim, self.dim);
        }
        &self.a[i] * self.phi[j].transpose()
    }

    /// `∂K/∂y (x_i, y_j)` for `j ≤ i`.
    pub fn kernel_dy(&self, i: usize, j: usize) -> Mat {
        if j > i || self.rank() == 0 {
            return Mat::zeros(self.dim, self.dim);
        }
        &self.a[i] * self.dphi[j].transpose()
    }

    /// `K(x_i, x_i)`.
    pub fn diagonal(&self, i: usize) -> Mat {
        self.kernel(i, i)
    }

    /// `d/dx K(x, x) = A' Φ* + A Φ'*` at node `i`.
    pub fn diagonal_derivative(&self, i: usize) -> Mat {
        if self.rank() == 0 {
            return Mat::zeros(self.dim, self.dim);
        }
        &self.da[i] * self.phi[i].transpose() + &self.a[i] * self.dphi[i].transpose()
    }

    /// Column `j` of `A` as a function: `a_j(x)`.
    pub fn a_column(&self, j: usize) -> Vec<Vector> {
        self.a.iter().map(|a| a.column(j).into_owned()).collect()
    }

    /// `∫_0^x Φ* φ dt` for a solution `φ` of the base equation at `lambda`.
    ///
    /// With `Pφ_r = φ_r'' + λ_r φ_r` the second derivative of `⟨φ_r, φ⟩` is
    /// `2⟨φ_r'', φ⟩ + 2⟨φ_r', φ'⟩ + (λ_r - λ)⟨φ_r, φ⟩`, so the sixth-order
    /// Hermite rule needs no potential values.
    pub fn running_inner(&self, phi: &VectorFunction, lambda: f64) -> Result<Vec<Vector>> {
        let n = self.grid.len();
        if phi.len() != n {
            return Err(Error::GridMismatch(format!("function has {} samples, kernel grid {n}", phi.len())));
        }
        let m = self.rank();
        let h = self.grid.step();
        let mut columns = Vec::with_capacity(m);
        for r in 0..m {
            let mut f = Vec::with_capacity(n);
            let mut df = Vec::with_capacity(n);
            let mut ddf = Vec::with_capacity(n);
            for x in 0..n {
                let (p, dp, ddp) = (self.phi[x].column(r), self.dphi[x].column(r), self.ddphi[x].column(r));
                let (v, dv) = (&phi.values[x], &phi.derivs[x]);
                let inner = p.dot(v);
                f.push(inner);
                df.push(dp.dot(v) + p.dot(dv));
                ddf.push(2.0 * ddp.dot(v) + 2.0 * dp.dot(dv) + (self.lambdas[r] - lambda) * inner);
            }
            columns.push(quadrature::hermite_cumulative(&f, &df, &ddf, h));
        }
        Ok((0..n).map(|x| Vector::from_fn(m, |r, _| columns[r][x])).collect())
    }
}

fn mode_matrix(modes: &[SelectedMode], dim: usize, x: usize, pick: impl Fn(&SelectedMode, usize) -> &Vector) -> Mat {
    let mut m = Mat::zeros(dim, modes.len());
    for (j, mode) in modes.iter().enumerate() {
        m.set_column(j, pick(mode, x));
    }
    m
}

/// Solve the integral equation for a finite-rank `𝓕` in closed form.
pub fn solve_kernel(pert: &Perturbation, grid: &Grid) -> Result<KernelField> {
    if *grid != pert.grid {
        return Err(Error::GridMismatch(format!(
            "perturbation sampled on {} nodes, kernel requested on {}",
            pert.grid.len(),
            grid.len()
        )));
    }
    let n = grid.len();
    let modes = &pert.modes;
    let m = modes.len();
    let dim = pert.dim;
    let phi: Vec<Mat> = (0..n).map(|x| mode_matrix(modes, dim, x, |md, x| &md.phi.values[x])).collect();
    let dphi: Vec<Mat> = (0..n).map(|x| mode_matrix(modes, dim, x, |md, x| &md.phi.derivs[x])).collect();
    let ddphi: Vec<Mat> = (0..n).map(|x| mode_matrix(modes, dim, x, |md, x| &md.phi_dd[x])).collect();
    let mut field = KernelField {
        grid: grid.clone(),
        dim,
        coeffs: modes.iter().map(|md| md.c).collect(),
        lambdas: modes.iter().map(|md| md.lambda).collect(),
        phi,
        dphi,
        ddphi,
        gram: Vec::new(),
        resolvent: Vec::new(),
        a: Vec::new(),
        da: Vec::new(),
    };
    if m == 0 {
        return Ok(field);
    }

    let columns: Vec<Vec<Vector>> =
        modes.iter().map(|md| field.running_inner(&md.phi, md.lambda)).collect::<Result<_>>()?;
    field.gram = (0..n).map(|x| Mat::from_fn(m, m, |r, j| columns[j][x][r])).collect();

    let c = field.c();
    let solved: Vec<(Mat, Mat, Mat)> = (0..n)
        .into_par_iter()
        .map(|x| {
            let g = &field.gram[x];
            let system = Mat::identity(m, m) + g * &c;
            let sv = singular_values(&system);
            let rcond = sv.last().copied().unwrap_or(0.0) / sv[0];
            if rcond.is_nan() || rcond <= RESOLVENT_RCOND {
                return Err(Error::SingularResolvent { x: grid.node(x), rcond });
            }
            let r = system
                .try_inverse()
                .ok_or(Error::SingularResolvent { x: grid.node(x), rcond })?;
            let (p, dp) = (&field.phi[x], &field.dphi[x]);
            let cr = &c * &r;
            let a = -(p * &cr);
            let g_prime = p.transpose() * p;
            let da = -(dp * &cr) + p * &cr * g_prime * &cr;
            Ok((r, a, da))
        })
        .collect::<Result<_>>()?;
    for (r, a, da) in solved {
        field.resolvent.push(r);
        field.a.push(a);
        field.da.push(da);
    }
    Ok(field)
}

/// `Q(x_i) = P(x_i) + 2 d/dx K(x,x)` before symmetrization.
pub fn potential_q_samples(kernel: &KernelField, base: &MatrixPotential) -> Vec<Mat> {
    let samples = base.samples_on(&kernel.grid);
    if kernel.rank() == 0 {
        return samples;
    }
    samples
        .into_iter()
        .enumerate()
        .map(|(i, p)| p + kernel.diagonal_derivative(i) * 2.0)
        .collect()
}

/// The transformed potential, sampled on the kernel grid and symmetrized.
pub fn potential_q(kernel: &KernelField, base: &MatrixPotential) -> Result<MatrixPotential> {
    let samples = potential_q_samples(kernel, base).iter().map(symmetrize).collect();
    Ok(MatrixPotential::Sampled(SampledPotential::new(kernel.grid.clone(), samples)?))
}

/// `(Ã, 𝓐̃) = (A - B K(0,0), 𝓐 - 𝓑 K(π,π))`.
pub fn boundary_matrices(kernel: &KernelField, p: &Problem) -> (Mat, Mat) {
    let last = kernel.grid.len() - 1;
    let k00 = kernel_or_zero(kernel, 0, p.dim());
    let kpp = kernel_or_zero(kernel, last, p.dim());
    (&p.left.a - &p.left.b * k00, &p.right.a - &p.right.b * kpp)
}

fn kernel_or_zero(kernel: &KernelField, i: usize, n: usize) -> Mat {
    if kernel.rank() == 0 {
        Mat::zeros(n, n)
    } else {
        kernel.diagonal(i)
    }
}

/// `ψ = φ + ∫_0^x K(x,t) φ(t) dt` and `ψ' = φ' + K(x,x) φ + ∫_0^x K_x(x,t) φ(t) dt`.
pub fn transform_eigenfunction(kernel: &KernelField, phi: &VectorFunction, lambda: f64) -> Result<VectorFunction> {
    if phi.len() != kernel.grid.len() {
        return Err(Error::GridMismatch(format!(
            "function has {} samples, kernel grid {}",
            phi.len(),
            kernel.grid.len()
        )));
    }
    if kernel.rank() == 0 {
        return Ok(phi.clone());
    }
    let g = kernel.running_inner(phi, lambda)?;
    let values = (0..phi.len()).map(|x| &phi.values[x] + &kernel.a[x] * &g[x]).collect();
    let derivs = (0..phi.len())
        .map(|x| {
            let local = kernel.phi[x].transpose() * &phi.values[x];
            &phi.derivs[x] + &kernel.a[x] * local + &kernel.da[x] * &g[x]
        })
        .collect();
    Ok(VectorFunction { values, derivs })
}

/// A transformed selected eigenfunction.
#[derive(Debug, Clone)]
pub struct TransformedMode {
    pub k: usize,
    pub i: usize,
    pub lambda: f64,
    pub psi: VectorFunction,
}

#[derive(Debug, Clone)]
pub struct TransformResult {
    pub kernel: KernelField,
    /// `Q` samples at the nodes, symmetrized.
    pub q: Vec<Mat>,
    /// `max ‖Q - Q*‖` before symmetrization.
    pub q_asymmetry: f64,
    pub a_tilde: Mat,
    pub cal_a_tilde: Mat,
    pub k00: Mat,
    pub kpipi: Mat,
    /// `Σ c φ(0) φ*(0)`; the solved kernel has `K(0,0) = -𝓕(0,0)`.
    pub f00: Mat,
    pub psis: Vec<TransformedMode>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryOutput {
    pub a_tilde: Vec<Vec<f64>>,
    pub cal_a_tilde: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub cal_b: Vec<Vec<f64>>,
    pub k00: Vec<Vec<f64>>,
    pub kpipi: Vec<Vec<f64>>,
    pub f00: Vec<Vec<f64>>,
    pub q_asymmetry: f64,
}

pub fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TransformResult {
    pub fn boundary_output(&self, p: &Problem) -> BoundaryOutput {
        BoundaryOutput {
            a_tilde: rows(&self.a_tilde),
            cal_a_tilde: rows(&self.cal_a_tilde),
            b: rows(&p.left.b),
            cal_b: rows(&p.right.b),
            k00: rows(&self.k00),
            kpipi: rows(&self.kpipi),
            f00: rows(&self.f00),
            q_asymmetry: self.q_asymmetry,
        }
    }
}

/// Build `(Q, Ã, B, 𝓐̃, 𝓑)` from `p` and a perturbation resolved on `grid`.
/// An empty perturbation returns `p` itself.
pub fn transform_problem(p: &Problem, pert: &Perturbation, grid: &Grid) -> Result<(Problem, TransformResult)> {
    let kernel = solve_kernel(pert, grid)?;
    let n = p.dim();
    if kernel.rank() > 0 && kernel.dim != n {
        return Err(Error::DimensionMismatch(format!(
            "perturbation functions have {} components, problem has {n}",
            kernel.dim
        )));
    }
    let raw = potential_q_samples(&kernel, &p.potential);
    let q_asymmetry = raw.iter().map(|q| max_abs(&(q - q.transpose()))).fold(0.0, f64::max);
    let q: Vec<Mat> = raw.iter().map(symmetrize).collect();
    let (a_tilde, cal_a_tilde) = boundary_matrices(&kernel, p);
    let last = grid.len() - 1;
    let k00 = kernel_or_zero(&kernel, 0, n);
    let kpipi = kernel_or_zero(&kernel, last, n);
    let f00 = pert.f00(n);
    let psis = pert
        .modes
        .iter()
        .map(|md| {
            Ok(TransformedMode {
                k: md.k,
                i: md.i,
                lambda: md.lambda,
                psi: transform_eigenfunction(&kernel, &md.phi, md.lambda)?,
            })
        })
        .collect::<Result<_>>()?;

    let problem = if pert.is_empty() {
        p.clone()
    } else {
        let mut left = p.left.clone();
        let mut right = p.right.clone();
        left.a = a_tilde.clone();
        right.a = cal_a_tilde.clone();
        Problem::new(MatrixPotential::Sampled(SampledPotential::new(grid.clone(), q.clone())?), left, right)?
    };
    let result = TransformResult { kernel, q, q_asymmetry, a_tilde, cal_a_tilde, k00, kpipi, f00, psis };
    Ok((problem, result))
}
