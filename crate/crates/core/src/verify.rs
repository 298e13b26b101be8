//! Numerical checks of a transform: equality of the two spectra, residuals of
//! the kernel identities, and the commutator `[Q, Q']` that certifies `Q` is
//! not simultaneously diagonalizable.
//!
//! Derivatives of sampled data use second-order differences (centered inside,
//! one-sided at the ends); the default tolerances are stated for
//! `h = π/400` and grow as `h²` on coarser grids.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::VectorFunction;
use crate::grid::Grid;
use crate::linalg::{max_abs, Mat};
use crate::model::{MatrixPotential, Problem};
use crate::quadrature;
use crate::spectrum::{scan_spectrum, ScanOptions, SpectrumEntry, SpectrumReport};
use crate::transform::{build_perturbation, transform_problem, KernelField, Perturbation, PerturbationEntry, TransformResult};

pub const ISOSPECTRAL_TOL: f64 = 1e-4;
pub const WAVE_TOL: f64 = 5e-4;
pub const EIGEN_ODE_TOL: f64 = 5e-4;
pub const GOURSAT_TOL: f64 = 1e-6;
pub const TRACE_TOL: f64 = 1e-6;
pub const BOUNDARY_TOL: f64 = 1e-8;
pub const ENDPOINT_TOL: f64 = 1e-8;
pub const REPRESENTATION_TOL: f64 = 1e-9;

/// `tol` at `h = π/400`, widened by `(h / (π/400))²` on coarser grids.
pub fn second_order_tol(tol: f64, grid: &Grid) -> f64 {
    let ratio = grid.step() / (std::f64::consts::PI / 400.0);
    tol * ratio.powi(2).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub name: String,
    pub max_residual: f64,
    /// `x` (and `y` for kernel identities) where the maximum occurs.
    pub x: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl ResidualReport {
    pub fn new(name: &str, max_residual: f64, x: f64, y: Option<f64>, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            max_residual,
            x,
            y,
            tolerance,
            passed: max_residual <= tolerance,
        }
    }
}

/// Running maximum with its location.
#[derive(Default)]
struct Peak {
    value: f64,
    x: f64,
    y: Option<f64>,
}

impl Peak {
    fn offer(&mut self, value: f64, x: f64, y: Option<f64>) {
        if value > self.value || value.is_nan() {
            *self = Self { value, x, y };
        }
    }

    fn report(self, name: &str, tolerance: f64) -> ResidualReport {
        ResidualReport::new(name, self.value, self.x, self.y, tolerance)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchedEigenvalue {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IsospectralReport {
    pub window: (f64, f64),
    pub pairs_a: Vec<SpectrumEntry>,
    pub pairs_b: Vec<SpectrumEntry>,
    /// Σ-sequences matched by position.
    pub matched: Vec<MatchedEigenvalue>,
    pub max_shift: f64,
    pub multiplicity_match: bool,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compare two computed spectra position by position in their Σ-sequences.
pub fn compare_spectra(a: &SpectrumReport, b: &SpectrumReport, tol: f64) -> IsospectralReport {
    let (sa, sb) = (a.sigma_sequence(), b.sigma_sequence());
    let matched: Vec<MatchedEigenvalue> = sa
        .iter()
        .zip(&sb)
        .map(|(&la, &lb)| MatchedEigenvalue { lambda_a: la, lambda_b: lb, shift: (la - lb).abs() })
        .collect();
    let max_shift = matched.iter().map(|m| m.shift).fold(0.0, f64::max);
    let multiplicity_match = a.pairs.len() == b.pairs.len()
        && a.pairs.iter().zip(&b.pairs).all(|(x, y)| x.multiplicity == y.multiplicity);
    IsospectralReport {
        window: a.window,
        pairs_a: a.entries(),
        pairs_b: b.entries(),
        matched,
        max_shift,
        multiplicity_match,
        tolerance: tol,
        passed: multiplicity_match && sa.len() == sb.len() && max_shift <= tol,
    }
}

pub fn check_isospectral(
    pa: &Problem,
    pb: &Problem,
    window: (f64, f64),
    tol: f64,
    opts: ScanOptions,
) -> Result<IsospectralReport> {
    if pa.dim() != pb.dim() {
        return Err(Error::DimensionMismatch(format!("problems of size {} and {}", pa.dim(), pb.dim())));
    }
    let (ra, rb) = rayon::join(
        || scan_spectrum(pa, window.0, window.1, opts),
        || scan_spectrum(pb, window.0, window.1, opts),
    );
    Ok(compare_spectra(&ra?, &rb?, tol))
}

fn second_difference(f: &[Mat], i: usize, h: f64) -> Mat {
    let n = f.len();
    let h2 = h * h;
    if i == 0 {
        (&f[0] * 2.0 - &f[1] * 5.0 + &f[2] * 4.0 - &f[3]) / h2
    } else if i == n - 1 {
        (&f[n - 1] * 2.0 - &f[n - 2] * 5.0 + &f[n - 3] * 4.0 - &f[n - 4]) / h2
    } else {
        (&f[i + 1] - &f[i] * 2.0 + &f[i - 1]) / h2
    }
}

fn first_difference(f: &[Mat], i: usize, h: f64) -> Mat {
    let n = f.len();
    if i == 0 {
        (&f[1] * 4.0 - &f[0] * 3.0 - &f[2]) / (2.0 * h)
    } else if i == n - 1 {
        (&f[n - 1] * 3.0 - &f[n - 2] * 4.0 + &f[n - 3]) / (2.0 * h)
    } else {
        (&f[i + 1] - &f[i - 1]) / (2.0 * h)
    }
}

fn require_nodes(grid: &Grid, required: usize) -> Result<()> {
    if grid.len() < required {
        return Err(Error::GridTooSmall { nodes: grid.len(), required });
    }
    Ok(())
}

/// `K_xx - Q(x) K - K_yy + K P(y)` on interior nodes with `y < x`.
pub fn residual_wave_equation(kernel: &KernelField, p: &MatrixPotential, q: &MatrixPotential) -> Result<ResidualReport> {
    let grid = &kernel.grid;
    require_nodes(grid, 5)?;
    let tol = second_order_tol(WAVE_TOL, grid);
    let mut peak = Peak::default();
    if kernel.rank() == 0 {
        return Ok(peak.report("wave-eq", tol));
    }
    let n = grid.len();
    let h = grid.step();
    let ps = p.samples_on(grid);
    let qs = q.samples_on(grid);
    // K = A Φ*: residual (A'' - Q A) Φ* - A (Φ'' - P Φ)*.
    let left: Vec<Mat> = (0..n).map(|i| second_difference(&kernel.a, i, h) - &qs[i] * &kernel.a[i]).collect();
    let right: Vec<Mat> = (0..n).map(|j| second_difference(&kernel.phi, j, h) - &ps[j] * &kernel.phi[j]).collect();
    for (i, (l, a)) in left.iter().zip(&kernel.a).enumerate().take(n - 1).skip(2) {
        for (j, (phi, r)) in kernel.phi.iter().zip(&right).enumerate().take(i).skip(1) {
            let r = l * phi.transpose() - a * r.transpose();
            peak.offer(max_abs(&r), grid.node(i), Some(grid.node(j)));
        }
    }
    Ok(peak.report("wave-eq", tol))
}

/// `𝓕(0,0) = B* (Σ c θ θ*) B`.
pub fn f00_from_thetas(p: &Problem, pert: &Perturbation) -> Mat {
    let b = &p.left.b;
    let inner = pert.modes.iter().fold(Mat::zeros(p.dim(), p.dim()), |acc, m| {
        acc + &m.theta * m.theta.transpose() * m.c
    });
    b.transpose() * inner * b
}

/// Goursat condition `K(x,0) A* + K_y(x,0) B* = 0` and the trace identity
/// `K(x,x) = ½ ∫_0^x (Q - P) dt - 𝓕(0,0)`.
pub fn residual_goursat(
    kernel: &KernelField,
    p: &Problem,
    pert: &Perturbation,
    q: &MatrixPotential,
) -> Result<Vec<ResidualReport>> {
    let grid = &kernel.grid;
    let n = grid.len();
    let mut goursat = Peak::default();
    let mut trace = Peak::default();
    if kernel.rank() == 0 {
        return Ok(vec![goursat.report("goursat", GOURSAT_TOL), trace.report("trace", TRACE_TOL)]);
    }
    let (a_t, b_t) = (p.left.a.transpose(), p.left.b.transpose());
    for i in 0..n {
        let r = kernel.kernel(i, 0) * &a_t + kernel.kernel_dy(i, 0) * &b_t;
        goursat.offer(max_abs(&r), grid.node(i), Some(0.0));
    }

    let dim = p.dim();
    let f00 = f00_from_thetas(p, pert);
    let ps = p.potential.samples_on(grid);
    let qs = q.samples_on(grid);
    let mut integral = vec![Mat::zeros(dim, dim); n];
    for r in 0..dim {
        for c in 0..dim {
            let f: Vec<f64> = (0..n).map(|i| qs[i][(r, c)] - ps[i][(r, c)]).collect();
            for (i, v) in quadrature::cumulative(&f, grid.step()).into_iter().enumerate() {
                integral[i][(r, c)] = v;
            }
        }
    }
    for (i, int) in integral.iter().enumerate() {
        let r = kernel.diagonal(i) - int * 0.5 + &f00;
        trace.offer(max_abs(&r), grid.node(i), None);
    }
    Ok(vec![goursat.report("goursat", GOURSAT_TOL), trace.report("trace", TRACE_TOL)])
}

/// `-ψ'' + Qψ - λψ` on interior nodes, and both boundary conditions of
/// `p_new`. `ψ''` uses values and the exact `ψ'`:
/// `2(ψ₊ - 2ψ + ψ₋)/h² - (ψ'₊ - ψ'₋)/2h`, whose `h²` error terms cancel.
pub fn residual_transformed_eigen(p_new: &Problem, grid: &Grid, lambda: f64, psi: &VectorFunction) -> Result<Vec<ResidualReport>> {
    require_nodes(grid, 5)?;
    if psi.len() != grid.len() {
        return Err(Error::GridMismatch(format!("function has {} samples, grid {}", psi.len(), grid.len())));
    }
    let n = grid.len();
    let h = grid.step();
    let qs = p_new.potential.samples_on(grid);
    let (v, d) = (&psi.values, &psi.derivs);
    let mut ode = Peak::default();
    for i in 1..n - 1 {
        let second = (&v[i + 1] - &v[i] * 2.0 + &v[i - 1]) * (2.0 / (h * h)) - (&d[i + 1] - &d[i - 1]) / (2.0 * h);
        let r = -second + &qs[i] * &v[i] - &v[i] * lambda;
        ode.offer(r.amax(), grid.node(i), None);
    }
    let scale = psi.sup_norm().max(1.0);
    let left = &p_new.left.b * &psi.derivs[0] + &p_new.left.a * &psi.values[0];
    let right = &p_new.right.b * &psi.derivs[n - 1] + &p_new.right.a * &psi.values[n - 1];
    Ok(vec![
        ode.report("eigen-ode", second_order_tol(EIGEN_ODE_TOL, grid)),
        ResidualReport::new("eigen-left", left.amax(), 0.0, None, BOUNDARY_TOL * scale),
        ResidualReport::new("eigen-right", right.amax(), grid.node(n - 1), None, BOUNDARY_TOL * scale),
    ])
}

/// `ψ_j(π) (1 + c_j ‖φ_j‖²) = φ_j(π)`, relative to `sup |φ_j|`.
pub fn residual_endpoint(pert: &Perturbation, result: &TransformResult) -> ResidualReport {
    let mut peak = Peak::default();
    let last = pert.grid.len() - 1;
    for (mode, t) in pert.modes.iter().zip(&result.psis) {
        let lhs = &t.psi.values[last] * mode.margin();
        let r = (lhs - &mode.phi.values[last]).amax() / mode.phi.sup_norm().max(f64::MIN_POSITIVE);
        peak.offer(r, pert.grid.node(last), None);
    }
    peak.report("endpoint", ENDPOINT_TOL)
}

/// `a_j(x) = -c_j ψ_j(x)` at every node.
pub fn residual_representation(pert: &Perturbation, result: &TransformResult) -> ResidualReport {
    let mut peak = Peak::default();
    for (j, (mode, t)) in pert.modes.iter().zip(&result.psis).enumerate() {
        for (x, a) in result.kernel.a_column(j).iter().enumerate() {
            peak.offer((a + &t.psi.values[x] * mode.c).amax(), pert.grid.node(x), None);
        }
    }
    peak.report("representation", REPRESENTATION_TOL)
}

/// `max ‖B Ã* - Ã B*‖` over both ends.
pub fn self_adjoint_defect(p_new: &Problem) -> f64 {
    p_new.left.self_adjoint_defect().max(p_new.right.self_adjoint_defect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommutatorReport {
    /// `max_x ‖Q Q' - Q' Q‖_F`.
    pub max_norm: f64,
    pub x: f64,
}

/// Largest Frobenius norm of `[Q, Q']` over the nodes, `Q'` by differencing.
pub fn commutator_diagnostic(q: &MatrixPotential, grid: &Grid) -> Result<CommutatorReport> {
    require_nodes(grid, 5)?;
    let qs = q.samples_on(grid);
    let h = grid.step();
    let mut peak = Peak::default();
    for (i, qi) in qs.iter().enumerate() {
        let d = first_difference(&qs, i, h);
        let c = qi * &d - &d * qi;
        peak.offer(c.norm(), grid.node(i), None);
    }
    Ok(CommutatorReport { max_norm: peak.value, x: peak.x })
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub isospectral: IsospectralReport,
    pub residuals: Vec<ResidualReport>,
    pub self_adjoint_defect: f64,
    pub self_adjoint_passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub commutator: Option<CommutatorReport>,
    pub passed: bool,
}

/// Everything a pipeline run produces, for callers that want the pieces.
pub struct PipelineRun {
    pub original: SpectrumReport,
    pub perturbation: Perturbation,
    pub transformed: Problem,
    pub result: TransformResult,
    pub report: PipelineReport,
}

/// Self-adjointness of the new boundary pairs, absolute.
pub const SELF_ADJOINT_TOL: f64 = 1e-10;

/// Spectrum → perturbation → transform → all checks. With `q_override` the
/// transformed problem uses that potential instead of the computed `Q`
/// (for checking externally supplied or edited artifacts).
pub fn run_pipeline(
    p: &Problem,
    entries: &[PerturbationEntry],
    window: (f64, f64),
    iso_tol: f64,
    opts: ScanOptions,
    q_override: Option<MatrixPotential>,
) -> Result<PipelineRun> {
    let original = scan_spectrum(p, window.0, window.1, opts)?;
    let perturbation = build_perturbation(&original, entries)?;
    let grid = original.grid.clone();
    let (mut transformed, result) = transform_problem(p, &perturbation, &grid)?;
    if let Some(q) = q_override {
        transformed = transformed.with_potential(q)?;
    }
    let after = scan_spectrum(&transformed, window.0, window.1, opts)?;
    let isospectral = compare_spectra(&original, &after, iso_tol);

    let mut residuals = vec![residual_wave_equation(&result.kernel, &p.potential, &transformed.potential)?];
    residuals.extend(residual_goursat(&result.kernel, p, &perturbation, &transformed.potential)?);
    for t in &result.psis {
        for mut r in residual_transformed_eigen(&transformed, &grid, t.lambda, &t.psi)? {
            r.name = format!("{}[k={},i={}]", r.name, t.k, t.i);
            residuals.push(r);
        }
    }
    residuals.push(residual_endpoint(&perturbation, &result));
    residuals.push(residual_representation(&perturbation, &result));
    let defect = self_adjoint_defect(&transformed);
    let commutator = (p.dim() >= 2).then(|| commutator_diagnostic(&transformed.potential, &grid)).transpose()?;
    let passed = isospectral.passed && residuals.iter().all(|r| r.passed) && defect <= SELF_ADJOINT_TOL;
    let report = PipelineReport {
        isospectral,
        residuals,
        self_adjoint_defect: defect,
        self_adjoint_passed: defect <= SELF_ADJOINT_TOL,
        commutator,
        passed,
    };
    Ok(PipelineRun { original, perturbation, transformed, result, report })
}
