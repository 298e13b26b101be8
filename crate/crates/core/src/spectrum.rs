//! Eigenvalues from the characteristic matrix `W(λ) = 𝓑 Y'(π; λ) + 𝓐 Y(π; λ)`.
//!
//! `λ` is an eigenvalue exactly when `W(λ)` is singular and its multiplicity
//! is `dim Null W(λ)`. Roots are located as zeros of the smallest singular
//! value of `W` (relative to the magnitude of the shooting path), so
//! even-multiplicity eigenvalues, where `det W` touches zero without a sign
//! change, are found like any other. Scan cells where `det W` changes sign
//! with no nearby minimum are bisected, and a final parity check flags roots
//! the scan resolution could not separate.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::VectorFunction;
use crate::grid::Grid;
use crate::linalg::{range_basis, svd_sorted, symmetric_eigen_sorted, Mat, Vector};
use crate::model::{PotentialTable, Problem};
use crate::ode::{integrate_table, shoot_end, MatrixSolutionPath};
use crate::quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanOptions {
    /// Target spacing of the coarse `λ` scan.
    pub step: f64,
    /// Refinement tolerance on each eigenvalue.
    pub tol: f64,
    /// Singular values below `rank_tol` times the path scale count as zero.
    pub rank_tol: f64,
    /// Integration grid node count.
    pub grid_nodes: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { step: 0.02, tol: 1e-10, rank_tol: 1e-6, grid_nodes: 401 }
    }
}

/// `W(λ)` together with its singular values and the scale they are judged against.
#[derive(Debug, Clone)]
pub struct CharacteristicEval {
    pub lambda: f64,
    pub w: Mat,
    /// Descending singular values of `W`.
    pub sigmas: Vec<f64>,
    /// Right singular vectors matching `sigmas`.
    pub right_vectors: Mat,
    /// `‖𝓐‖ max‖Y‖ + ‖𝓑‖ max‖Y'‖`, an upper bound for `σ_1(W)`.
    pub scale: f64,
    pub det: f64,
}

impl CharacteristicEval {
    pub fn relative_sigma_min(&self) -> f64 {
        self.sigmas.last().copied().unwrap_or(0.0) / self.scale
    }

    /// Number of singular values at or below `rank_tol · scale`.
    pub fn nullity(&self, rank_tol: f64) -> usize {
        self.sigmas.iter().filter(|&&s| s <= rank_tol * self.scale).count()
    }
}

/// Shooting data reused across many `λ` for one problem and grid.
pub struct Shooter<'a> {
    problem: &'a Problem,
    grid: Grid,
    table: PotentialTable,
    y0: Mat,
    yp0: Mat,
}

impl<'a> Shooter<'a> {
    pub fn new(problem: &'a Problem, grid: Grid) -> Self {
        let table = problem.potential.tabulate(&grid);
        Self {
            problem,
            grid,
            table,
            y0: problem.left.b.transpose(),
            yp0: -problem.left.a.transpose(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn evaluate(&self, lambda: f64) -> Result<CharacteristicEval> {
        let end = shoot_end(&self.table, &self.grid, lambda, &self.y0, &self.yp0)?;
        let right = &self.problem.right;
        let w = &right.b * &end.yp + &right.a * &end.y;
        let scale = (right.a.norm() * end.max_y + right.b.norm() * end.max_yp).max(f64::MIN_POSITIVE);
        let (sigmas, right_vectors) = svd_sorted(&w);
        let det = w.determinant();
        Ok(CharacteristicEval { lambda, w, sigmas, right_vectors, scale, det })
    }

    pub fn path(&self, lambda: f64) -> Result<MatrixSolutionPath> {
        integrate_table(&self.table, &self.grid, lambda, &self.y0, &self.yp0)
    }
}

pub fn characteristic_matrix(p: &Problem, lambda: f64, grid: &Grid) -> Result<Mat> {
    Ok(Shooter::new(p, grid.clone()).evaluate(lambda)?.w)
}

/// One eigenvalue with an L²-orthogonal basis of its eigenspace.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub lambda: f64,
    pub multiplicity: usize,
    /// Constant vectors `θ_l` with `φ_l = Y(·; λ) θ_l`.
    pub thetas: Vec<Vector>,
    pub phis: Vec<VectorFunction>,
    /// `‖φ_l‖²` by the grid quadrature.
    pub norms_sq: Vec<f64>,
    /// `σ_min(W) / scale` at `lambda`.
    pub residual: f64,
    /// All singular values of `W(λ)` divided by the scale.
    pub relative_sigmas: Vec<f64>,
    /// Orthonormal basis of `Null W(λ)`, one column per vector.
    pub null_basis: Mat,
    /// `∫ Y* Y dx`, the Gram matrix of the shooting path.
    pub path_gram: Mat,
    pub path: MatrixSolutionPath,
}

impl Eigenpair {
    fn from_parts(
        lambda: f64,
        eval: &CharacteristicEval,
        path: MatrixSolutionPath,
        null_basis: Mat,
        thetas: Vec<Vector>,
        path_gram: Mat,
    ) -> Self {
        let h = path.grid.step();
        let phis: Vec<VectorFunction> = thetas.iter().map(|t| VectorFunction::from_path(&path, t)).collect();
        let norms_sq = phis.iter().map(|f| f.norm_sq(h)).collect();
        Self {
            lambda,
            multiplicity: thetas.len(),
            thetas,
            phis,
            norms_sq,
            residual: eval.relative_sigma_min(),
            relative_sigmas: eval.sigmas.iter().map(|s| s / eval.scale).collect(),
            null_basis,
            path_gram,
            path,
        }
    }

    /// Gram matrix `∫ ⟨φ_i, φ_j⟩` of the returned basis.
    pub fn gram(&self) -> Mat {
        let h = self.path.grid.step();
        let m = self.phis.len();
        Mat::from_fn(m, m, |i, j| self.phis[i].inner(&self.phis[j], h))
    }

    /// Re-choose the eigenspace basis so that it starts with the given
    /// directions `θ` (each must lie in the null space and be mutually
    /// L²-orthogonal); the remainder is completed orthogonally.
    pub fn with_leading(&self, k: usize, leading: &[Vector], rank_tol: f64) -> Result<Self> {
        let n = self.null_basis.nrows();
        let m = self.multiplicity;
        if leading.len() > m {
            return Err(Error::InvalidDirection {
                k,
                detail: format!("{} directions for an eigenspace of dimension {m}", leading.len()),
            });
        }
        let mut coords = Vec::with_capacity(leading.len());
        for theta in leading {
            if theta.len() != n {
                return Err(Error::InvalidDirection {
                    k,
                    detail: format!("theta has {} components, expected {n}", theta.len()),
                });
            }
            let norm = theta.norm();
            let c = self.null_basis.transpose() * theta;
            let off = (theta - &self.null_basis * &c).norm();
            if norm == 0.0 || off > rank_tol.sqrt() * norm {
                return Err(Error::InvalidDirection {
                    k,
                    detail: format!("theta is not in the null space (off-space part {off:e})"),
                });
            }
            coords.push(c);
        }
        let gv = self.null_basis.transpose() * &self.path_gram * &self.null_basis;
        for a in 0..coords.len() {
            for b in 0..a {
                let ab = coords[a].dot(&(&gv * &coords[b]));
                let scale = (coords[a].dot(&(&gv * &coords[a])) * coords[b].dot(&(&gv * &coords[b]))).sqrt();
                if ab.abs() > 1e-8 * scale {
                    return Err(Error::InvalidDirection {
                        k,
                        detail: format!("directions {b} and {a} are not L2-orthogonal"),
                    });
                }
            }
        }

        let mut thetas: Vec<Vector> = leading.to_vec();
        if coords.len() < m {
            // complement: Gv-orthogonal to the leading coordinates, then diagonalised
            let complement = if coords.is_empty() {
                Mat::identity(m, m)
            } else {
                let mut t = Mat::zeros(coords.len(), m);
                for (r, c) in coords.iter().enumerate() {
                    t.set_row(r, &(&gv * c).transpose());
                }
                let range = range_basis(&t.transpose(), 1e-12);
                let projector = Mat::identity(m, m) - &range * range.transpose();
                let (values, vectors) = symmetric_eigen_sorted(&projector);
                let keep: Vec<usize> = (0..m).filter(|&c| values[c] > 0.5).collect();
                Mat::from_fn(m, keep.len(), |r, c| vectors[(r, keep[c])])
            };
            let restricted = complement.transpose() * &gv * &complement;
            let (_, u) = symmetric_eigen_sorted(&restricted);
            let basis = &self.null_basis * complement * u;
            thetas.extend(basis.column_iter().map(|c| c.into_owned()));
        }
        let eval = CharacteristicEval {
            lambda: self.lambda,
            w: Mat::zeros(0, 0),
            sigmas: self.relative_sigmas.clone(),
            right_vectors: Mat::zeros(0, 0),
            scale: 1.0,
            det: 0.0,
        };
        Ok(Self::from_parts(
            self.lambda,
            &eval,
            self.path.clone(),
            self.null_basis.clone(),
            thetas,
            self.path_gram.clone(),
        ))
    }
}

fn path_gram(path: &MatrixSolutionPath) -> Mat {
    let n = path.y[0].ncols();
    let h = path.grid.step();
    let products: Vec<Mat> = path.y.iter().map(|y| y.transpose() * y).collect();
    Mat::from_fn(n, n, |i, j| {
        let f: Vec<f64> = products.iter().map(|p| p[(i, j)]).collect();
        quadrature::integrate(&f, h)
    })
}

fn eigenbasis_with(shooter: &Shooter<'_>, lambda: f64, rank_tol: f64) -> Result<Eigenpair> {
    let eval = shooter.evaluate(lambda)?;
    let m = eval.nullity(rank_tol);
    if m == 0 {
        return Err(Error::NotAnEigenvalue { lambda, relative_sigma: eval.relative_sigma_min() });
    }
    let n = eval.sigmas.len();
    assert!(m <= n, "multiplicity {m} exceeds dimension {n}");
    let null_basis = eval.right_vectors.columns(n - m, m).into_owned();
    let path = shooter.path(lambda)?;
    let gram = path_gram(&path);
    let v = null_basis.transpose() * &gram * &null_basis;
    let (_, u) = symmetric_eigen_sorted(&v);
    let basis = &null_basis * u;
    let thetas = basis.column_iter().map(|c| c.into_owned()).collect();
    Ok(Eigenpair::from_parts(lambda, &eval, path, null_basis, thetas, gram))
}

/// Orthogonal eigenbasis at a refined eigenvalue `lambda_k`.
pub fn eigenbasis(p: &Problem, lambda_k: f64, grid: &Grid, rank_tol: f64) -> Result<Eigenpair> {
    eigenbasis_with(&Shooter::new(p, grid.clone()), lambda_k, rank_tol)
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Problem dimension `N`.
    pub dim: usize,
    pub pairs: Vec<Eigenpair>,
    pub window: (f64, f64),
    pub options: ScanOptions,
    pub grid: Grid,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumEntry {
    pub lambda: f64,
    pub multiplicity: usize,
    pub residual: f64,
}

impl SpectrumReport {
    /// Eigenvalues repeated by multiplicity, ascending.
    pub fn sigma_sequence(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.lambda, p.multiplicity))
            .collect()
    }

    pub fn entries(&self) -> Vec<SpectrumEntry> {
        self.pairs
            .iter()
            .map(|p| SpectrumEntry { lambda: p.lambda, multiplicity: p.multiplicity, residual: p.residual })
            .collect()
    }

    pub fn eigenvalues(&self) -> Vec<(f64, usize)> {
        self.pairs.iter().map(|p| (p.lambda, p.multiplicity)).collect()
    }
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
fn golden_min(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a) > 2.0 * tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

struct Candidate {
    lambda: f64,
    relative: f64,
    nullity: usize,
    /// Scan indices of the samples bracketing the root.
    lo: usize,
    hi: usize,
}

/// Sub-cells per level when a region fails the parity check, and the number
/// of levels tried before giving up.
const REFINE_CELLS: usize = 16;
const REFINE_DEPTH: usize = 3;

/// All eigenvalues in `[lambda_min, lambda_max]` with multiplicities and
/// orthogonal eigenbases.
pub fn scan_spectrum(p: &Problem, lambda_min: f64, lambda_max: f64, opts: ScanOptions) -> Result<SpectrumReport> {
    if !(lambda_min.is_finite() && lambda_max.is_finite() && lambda_min < lambda_max) {
        return Err(Error::InvalidWindow { min: lambda_min, max: lambda_max });
    }
    if !(opts.step > 0.0 && opts.tol > 0.0 && opts.rank_tol > 0.0) {
        return Err(Error::Parse("scan step and tolerances must be positive".into()));
    }
    let grid = Grid::new(opts.grid_nodes)?;
    let shooter = Shooter::new(p, grid.clone());

    let cells = ((lambda_max - lambda_min) / opts.step).ceil().max(1.0) as usize;
    let dl = (lambda_max - lambda_min) / cells as f64;
    const PAD: usize = 2;
    let lambdas: Vec<f64> = (0..cells + 1 + 2 * PAD)
        .map(|j| lambda_min + (j as f64 - PAD as f64) * dl)
        .collect();
    let roots = locate_roots(&shooter, &lambdas, (lambda_min, lambda_max), opts, 0)?;

    let pairs = roots
        .par_iter()
        .filter(|r| r.lambda >= lambda_min - opts.tol && r.lambda <= lambda_max + opts.tol)
        .map(|r| eigenbasis_with(&shooter, r.lambda, opts.rank_tol))
        .collect::<Result<Vec<_>>>()?;

    Ok(SpectrumReport { dim: p.dim(), pairs, window: (lambda_min, lambda_max), options: opts, grid })
}

/// Roots of `W` between `lambdas[0]` and the last sample, sorted. Minima of
/// `σ_min` are refined by golden section; sign changes of `det W` with no
/// minimum beside them are bisected; regions whose `det W` parity disagrees
/// with the multiplicity found are rescanned on a finer grid.
fn locate_roots(
    shooter: &Shooter<'_>,
    lambdas: &[f64],
    window: (f64, f64),
    opts: ScanOptions,
    depth: usize,
) -> Result<Vec<Candidate>> {
    let evals: Vec<CharacteristicEval> =
        lambdas.par_iter().map(|&l| shooter.evaluate(l)).collect::<Result<_>>()?;
    let rel: Vec<f64> = evals.iter().map(|e| e.relative_sigma_min()).collect();
    let positive = |j: usize| evals[j].det >= 0.0;

    let local_minima: Vec<usize> =
        (1..rel.len() - 1).filter(|&j| rel[j] <= rel[j - 1] && rel[j] <= rel[j + 1]).collect();
    let refined: Vec<Option<Candidate>> = local_minima
        .par_iter()
        .map(|&j| {
            let lambda = golden_min(lambdas[j - 1], lambdas[j + 1], opts.tol, |l| {
                Ok(shooter.evaluate(l)?.relative_sigma_min())
            })?;
            candidate(shooter, lambda, opts.rank_tol, j - 1, j + 1)
        })
        .collect::<Result<_>>()?;
    let mut roots = merge_candidates(refined.into_iter().flatten().collect(), opts.tol);

    let unresolved: Vec<usize> = (0..lambdas.len() - 1)
        .filter(|&j| positive(j) != positive(j + 1) && !roots.iter().any(|r| r.lo <= j && j < r.hi))
        .collect();
    if !unresolved.is_empty() {
        let extra: Vec<Option<Candidate>> = unresolved
            .par_iter()
            .map(|&j| {
                let lambda = bisect_det(shooter, lambdas[j], lambdas[j + 1], positive(j), opts.tol)?;
                candidate(shooter, lambda, opts.rank_tol, j, j + 1)
            })
            .collect::<Result<_>>()?;
        roots.extend(extra.into_iter().flatten());
        roots.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        roots = merge_candidates(roots, opts.tol);
    }

    let in_window = |a: usize, b: usize| lambdas[b] >= window.0 && lambdas[a] <= window.1;
    let mut out: Vec<Candidate> = Vec::with_capacity(roots.len());
    for (a, b, members) in regions(roots) {
        let total: usize = members.iter().map(|r| r.nullity).sum();
        if (positive(a) != positive(b)) == (total % 2 == 1) || !in_window(a, b) {
            out.extend(members);
        } else if depth < REFINE_DEPTH {
            let dl = (lambdas[b] - lambdas[a]) / REFINE_CELLS as f64;
            let sub: Vec<f64> = (0..=REFINE_CELLS).map(|j| lambdas[a] + j as f64 * dl).collect();
            let mut found = locate_roots(shooter, &sub, window, opts, depth + 1)?;
            for r in &mut found {
                r.lo = a;
                r.hi = b;
            }
            out.extend(found);
        } else {
            return Err(Error::WindowTooCoarse {
                lambda: 0.5 * (lambdas[a] + lambdas[b]),
                detail: format!(
                    "det W parity over [{}, {}] disagrees with total multiplicity {total}",
                    lambdas[a], lambdas[b]
                ),
            });
        }
    }
    out.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(merge_candidates(out, opts.tol))
}

fn candidate(shooter: &Shooter<'_>, lambda: f64, rank_tol: f64, lo: usize, hi: usize) -> Result<Option<Candidate>> {
    let eval = shooter.evaluate(lambda)?;
    let nullity = eval.nullity(rank_tol);
    Ok((nullity > 0).then(|| Candidate { lambda, relative: eval.relative_sigma_min(), nullity, lo, hi }))
}

/// Group roots whose bracketing sample spans overlap; input sorted by `λ`.
fn regions(roots: Vec<Candidate>) -> Vec<(usize, usize, Vec<Candidate>)> {
    let mut out: Vec<(usize, usize, Vec<Candidate>)> = Vec::new();
    for r in roots {
        match out.last_mut() {
            Some(last) if r.lo <= last.1 => {
                last.1 = last.1.max(r.hi);
                last.2.push(r);
            }
            _ => out.push((r.lo, r.hi, vec![r])),
        }
    }
    out
}

/// Fold candidates that converged to the same root; input sorted by `λ`.
fn merge_candidates(cands: Vec<Candidate>, tol: f64) -> Vec<Candidate> {
    let mut roots: Vec<Candidate> = Vec::new();
    for cand in cands {
        match roots.last_mut() {
            Some(last) if (cand.lambda - last.lambda).abs() <= 10.0 * tol.max(1e-12) => {
                last.hi = last.hi.max(cand.hi);
                last.lo = last.lo.min(cand.lo);
                if cand.relative < last.relative {
                    last.lambda = cand.lambda;
                    last.relative = cand.relative;
                    last.nullity = cand.nullity;
                }
            }
            _ => roots.push(cand),
        }
    }
    roots
}

/// Root of `det W` in `[a, b]` given a sign change, to width `tol`.
fn bisect_det(shooter: &Shooter<'_>, mut a: f64, mut b: f64, positive_at_a: bool, tol: f64) -> Result<f64> {
    while b - a > tol {
        let m = 0.5 * (a + b);
        let d = shooter.evaluate(m)?.det;
        if d == 0.0 {
            return Ok(m);
        }
        if (d >= 0.0) == positive_at_a {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}
