//! Problems `(P, A, B, 𝓐, 𝓑)`: matrix potentials, boundary pairs and the
//! structural checks that make the operator self-adjoint.
//!
//! The equation is `-φ'' + P(x) φ = λ φ` on `[0, π]` with
//! `B φ'(0) + A φ(0) = 0` and `𝓑 φ'(π) + 𝓐 φ(π) = 0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{max_abs, singular_values, Mat};
use crate::spline::CubicSpline;

/// Relative tolerance for `B A* = A B*` and sample symmetry.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative singular-value cut for `rank [A, B] = N`.
pub const RANK_TOL: f64 = 1e-10;

/// Closed-form rank-one transformed potential
/// `Q = diag(base) - 2 d/dx [ φ φ* / (1 + c ∫_0^x |φ|²) ]`
/// with `φ_i(x) = amplitude_i · sin(frequency_i · x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneSine {
    pub base: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub c: f64,
}

impl RankOneSine {
    pub fn phi(&self, x: f64) -> Vec<f64> {
        self.amplitudes
            .iter()
            .zip(&self.frequencies)
            .map(|(a, k)| a * (k * x).sin())
            .collect()
    }

    fn dphi(&self, x: f64) -> Vec<f64> {
        self.amplitudes
            .iter()
            .zip(&self.frequencies)
            .map(|(a, k)| a * k * (k * x).cos())
            .collect()
    }

    /// `∫_0^x |φ(t)|² dt`.
    pub fn running_norm(&self, x: f64) -> f64 {
        self.amplitudes
            .iter()
            .zip(&self.frequencies)
            .map(|(a, &k)| {
                if k == 0.0 {
                    0.0
                } else {
                    a * a * (x / 2.0 - (2.0 * k * x).sin() / (4.0 * k))
                }
            })
            .sum()
    }

    pub fn eval(&self, x: f64) -> Mat {
        let n = self.base.len();
        let phi = self.phi(x);
        let dphi = self.dphi(x);
        let d = 1.0 + self.c * self.running_norm(x);
        let norm2: f64 = phi.iter().map(|v| v * v).sum();
        Mat::from_fn(n, n, |i, j| {
            let diag = if i == j { self.base[i] } else { 0.0 };
            let outer = phi[i] * phi[j];
            let deriv = (dphi[i] * phi[j] + phi[i] * dphi[j]) / d - self.c * norm2 * outer / (d * d);
            diag - 2.0 * self.c * deriv
        })
    }
}

/// Potential sampled on a uniform grid, interpolated entrywise by
/// not-a-knot cubic splines of the symmetrized samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPotential {
    grid: Grid,
    samples: Vec<Mat>,
    splines: Vec<CubicSpline>,
}

impl SampledPotential {
    pub fn new(grid: Grid, samples: Vec<Mat>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a grid of {} nodes",
                samples.len(),
                grid.len()
            )));
        }
        let n = samples.first().map(|m| m.nrows()).unwrap_or(0);
        if n == 0 || samples.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::DimensionMismatch(
                "potential samples must be square matrices of one size".into(),
            ));
        }
        let mut splines = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                let ys = samples.iter().map(|m| 0.5 * (m[(i, j)] + m[(j, i)])).collect();
                splines.push(CubicSpline::new(0.0, grid.step(), ys));
            }
        }
        Ok(Self { grid, samples, splines })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[Mat] {
        &self.samples
    }

    fn dim(&self) -> usize {
        self.samples[0].nrows()
    }

    fn eval(&self, x: f64) -> Mat {
        if let Some(j) = self.grid.node_index(x) {
            return self.samples[j].clone();
        }
        let n = self.dim();
        let mut m = Mat::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                let v = self.splines[k].eval(x);
                m[(i, j)] = v;
                m[(j, i)] = v;
                k += 1;
            }
        }
        m
    }
}

/// Symmetric matrix potential `P(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixPotential {
    ConstantDiagonal(Vec<f64>),
    /// A closed-form potential known by name.
    Builtin { name: String, form: RankOneSine },
    Sampled(SampledPotential),
}

impl MatrixPotential {
    pub fn dim(&self) -> usize {
        match self {
            Self::ConstantDiagonal(d) => d.len(),
            Self::Builtin { form, .. } => form.base.len(),
            Self::Sampled(s) => s.dim(),
        }
    }

    pub fn eval(&self, x: f64) -> Mat {
        match self {
            Self::ConstantDiagonal(d) => Mat::from_diagonal(&nalgebra::DVector::from_column_slice(d)),
            Self::Builtin { form, .. } => form.eval(x),
            Self::Sampled(s) => s.eval(x),
        }
    }

    /// Values at the nodes of `grid`.
    pub fn samples_on(&self, grid: &Grid) -> Vec<Mat> {
        match self {
            Self::Sampled(s) if s.grid == *grid => s.samples.clone(),
            _ => grid.nodes().iter().map(|&x| self.eval(x)).collect(),
        }
    }

    /// Values at nodes and cell midpoints: entry `2i` is node `i`, `2i + 1`
    /// the midpoint of cell `i`.
    pub fn tabulate(&self, grid: &Grid) -> PotentialTable {
        let h = grid.step();
        let n = grid.len();
        let values = (0..2 * n - 1)
            .map(|k| {
                if k % 2 == 0 {
                    self.eval(grid.node(k / 2))
                } else {
                    self.eval(grid.node(k / 2) + 0.5 * h)
                }
            })
            .collect();
        PotentialTable { values }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let form = match name {
            "rank-one-mixed-2x2" => RankOneSine {
                base: vec![-3.0, 0.0],
                amplitudes: vec![1.0, 1.0],
                frequencies: vec![2.0, 1.0],
                c: 1.0,
            },
            "rank-one-diagonal-2x2" => RankOneSine {
                base: vec![-3.0, 0.0],
                amplitudes: vec![0.0, 1.0],
                frequencies: vec![2.0, 1.0],
                c: 1.0,
            },
            "rank-one-scalar" => RankOneSine {
                base: vec![0.0],
                amplitudes: vec![1.0],
                frequencies: vec![1.0],
                c: 1.0,
            },
            _ => return Err(Error::UnknownName(name.to_string())),
        };
        Ok(Self::Builtin { name: name.to_string(), form })
    }
}

/// Potential tabulated at the nodes and half-steps a fixed-step integrator needs.
#[derive(Debug, Clone)]
pub struct PotentialTable {
    values: Vec<Mat>,
}

impl PotentialTable {
    pub fn node(&self, i: usize) -> &Mat {
        &self.values[2 * i]
    }

    pub fn midpoint(&self, i: usize) -> &Mat {
        &self.values[2 * i + 1]
    }

    pub fn dim(&self) -> usize {
        self.values[0].nrows()
    }
}

/// Boundary pair `(A, B)` for the condition `B φ' + A φ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPair {
    pub a: Mat,
    pub b: Mat,
}

impl BoundaryPair {
    pub fn new(a: Mat, b: Mat) -> Self {
        Self { a, b }
    }

    pub fn dirichlet(n: usize) -> Self {
        Self { a: Mat::identity(n, n), b: Mat::zeros(n, n) }
    }

    pub fn neumann(n: usize) -> Self {
        Self { a: Mat::zeros(n, n), b: Mat::identity(n, n) }
    }

    /// `max |B A* - A B*|`.
    pub fn self_adjoint_defect(&self) -> f64 {
        max_abs(&(&self.b * self.a.transpose() - &self.a * self.b.transpose()))
    }

    /// Singular values of the `N x 2N` block `[A, B]`, descending.
    pub fn block_singular_values(&self) -> Vec<f64> {
        let n = self.a.nrows();
        let mut block = Mat::zeros(n, 2 * n);
        block.view_mut((0, 0), (n, n)).copy_from(&self.a);
        block.view_mut((0, n), (n, n)).copy_from(&self.b);
        singular_values(&block)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub potential: MatrixPotential,
    pub left: BoundaryPair,
    pub right: BoundaryPair,
}

impl Problem {
    pub fn new(potential: MatrixPotential, left: BoundaryPair, right: BoundaryPair) -> Result<Self> {
        let n = potential.dim();
        for (side, pair) in [("left", &left), ("right", &right)] {
            for (label, m) in [("A", &pair.a), ("B", &pair.b)] {
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "{side} {label} is {}x{}, potential is {n}x{n}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
            }
        }
        Ok(Self { potential, left, right })
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    /// Same boundary pairs, new potential.
    pub fn with_potential(&self, potential: MatrixPotential) -> Result<Self> {
        Self::new(potential, self.left.clone(), self.right.clone())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub defect: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Check symmetry of `P`, self-adjointness and rank of both boundary pairs.
/// Violations are reported, never raised.
pub fn validate_problem(p: &Problem) -> Result<ValidationReport> {
    let n = p.dim();
    for m in [&p.left.a, &p.left.b, &p.right.a, &p.right.b] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "boundary matrix is {}x{}, expected {n}x{n}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    let mut checks = Vec::new();

    let samples = match &p.potential {
        MatrixPotential::Sampled(s) => s.samples().to_vec(),
        other => other.samples_on(&Grid::new(101)?),
    };
    let (mut defect, mut threshold) = (0.0_f64, SYMMETRY_TOL);
    for m in &samples {
        let d = max_abs(&(m - m.transpose()));
        let t = SYMMETRY_TOL * (1.0 + max_abs(m));
        if d - t > defect - threshold {
            defect = d;
            threshold = t;
        }
    }
    checks.push(Check {
        name: "potential-symmetry".into(),
        passed: defect <= threshold,
        defect,
        threshold,
    });

    for (side, pair) in [("left", &p.left), ("right", &p.right)] {
        let defect = pair.self_adjoint_defect();
        let threshold = SYMMETRY_TOL * (1.0 + max_abs(&pair.a) * max_abs(&pair.b));
        checks.push(Check {
            name: format!("{side}-self-adjoint"),
            passed: defect <= threshold,
            defect,
            threshold,
        });
        let sv = pair.block_singular_values();
        let sigma_n = sv.get(n - 1).copied().unwrap_or(0.0);
        let threshold = RANK_TOL * sv[0];
        checks.push(Check {
            name: format!("{side}-rank"),
            passed: sigma_n > threshold,
            defect: sigma_n,
            threshold,
        });
    }
    Ok(ValidationReport { checks })
}

/// Names accepted by [`builtin_problem`].
pub const BUILTIN_PROBLEMS: &[&str] = &[
    "paper-example-2x2",
    "scalar-zero",
    "free-2x2",
    "neumann-left-scalar",
    "transformed-mixed-2x2",
    "transformed-diagonal-2x2",
    "scalar-transformed",
];

pub fn builtin_problem(name: &str) -> Result<Problem> {
    let dirichlet = |potential: MatrixPotential| {
        let n = potential.dim();
        Problem::new(potential, BoundaryPair::dirichlet(n), BoundaryPair::dirichlet(n))
    };
    match name {
        "paper-example-2x2" => dirichlet(MatrixPotential::ConstantDiagonal(vec![-3.0, 0.0])),
        "scalar-zero" => dirichlet(MatrixPotential::ConstantDiagonal(vec![0.0])),
        "free-2x2" => dirichlet(MatrixPotential::ConstantDiagonal(vec![0.0, 0.0])),
        "neumann-left-scalar" => Problem::new(
            MatrixPotential::ConstantDiagonal(vec![0.0]),
            BoundaryPair::neumann(1),
            BoundaryPair::dirichlet(1),
        ),
        "transformed-mixed-2x2" => dirichlet(MatrixPotential::builtin("rank-one-mixed-2x2")?),
        "transformed-diagonal-2x2" => {
            dirichlet(MatrixPotential::builtin("rank-one-diagonal-2x2")?)
        }
        "scalar-transformed" => dirichlet(MatrixPotential::builtin("rank-one-scalar")?),
        _ => Err(Error::UnknownName(name.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn two_branch_example_validates() {
        let p = builtin_problem("paper-example-2x2").unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.potential.eval(1.3), Mat::from_row_slice(2, 2, &[-3.0, 0.0, 0.0, 0.0]));
        let r = validate_problem(&p).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.checks.len(), 5);
    }

    #[test]
    fn zero_pair_fails_rank() {
        let mut p = builtin_problem("free-2x2").unwrap();
        p.left = BoundaryPair::new(Mat::zeros(2, 2), Mat::zeros(2, 2));
        let r = validate_problem(&p).unwrap();
        let failed: Vec<_> = r.failures().map(|c| c.name.as_str()).collect();
        assert_eq!(failed, vec!["left-rank"]);
    }

    #[test]
    fn non_symmetric_pair_fails_self_adjointness() {
        let mut p = builtin_problem("free-2x2").unwrap();
        p.left = BoundaryPair::new(Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]), Mat::identity(2, 2));
        let r = validate_problem(&p).unwrap();
        let failed: Vec<_> = r.failures().map(|c| c.name.as_str()).collect();
        assert_eq!(failed, vec!["left-self-adjoint"]);
        assert_eq!(r.checks[1].defect, 1.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = Problem::new(
            MatrixPotential::ConstantDiagonal(vec![0.0, 0.0]),
            BoundaryPair::dirichlet(3),
            BoundaryPair::dirichlet(2),
        );
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn builtins_resolve() {
        assert_eq!(builtin_problem("scalar-zero").unwrap().dim(), 1);
        assert_eq!(builtin_problem("free-2x2").unwrap().dim(), 2);
        for name in BUILTIN_PROBLEMS {
            assert!(validate_problem(&builtin_problem(name).unwrap()).unwrap().passed(), "{name}");
        }
        assert!(matches!(builtin_problem("nope"), Err(Error::UnknownName(_))));
    }

    #[test]
    fn sampled_potential_exact_at_nodes_and_symmetric_between() {
        let grid = Grid::new(21).unwrap();
        let samples: Vec<Mat> = grid
            .nodes()
            .iter()
            .map(|&x| Mat::from_row_slice(2, 2, &[x.sin(), x * x, x * x, (2.0 * x).cos()]))
            .collect();
        let pot = MatrixPotential::Sampled(SampledPotential::new(grid.clone(), samples.clone()).unwrap());
        for (i, &x) in grid.nodes().iter().enumerate() {
            assert_eq!(pot.eval(x), samples[i]);
        }
        let m = pot.eval(0.123);
        assert_eq!(m[(0, 1)], m[(1, 0)]);
        assert!((m[(0, 0)] - 0.123_f64.sin()).abs() < 1e-5);
        assert_eq!(pot.eval(0.123), m);
    }

    #[test]
    fn closed_form_diagonal_case_stays_diagonal() {
        let q = MatrixPotential::builtin("rank-one-diagonal-2x2").unwrap();
        for k in 0..20 {
            let m = q.eval(k as f64 * PI / 19.0);
            assert_eq!(m[(0, 0)], -3.0);
            assert_eq!(m[(0, 1)], 0.0);
        }
    }

    #[test]
    fn closed_form_matches_finite_difference_derivative() {
        // Q - P = -2 d/dx [φφ*/D]; compare against a central difference of the bracket.
        let form = match MatrixPotential::builtin("rank-one-mixed-2x2").unwrap() {
            MatrixPotential::Builtin { form, .. } => form,
            _ => unreachable!(),
        };
        let bracket = |x: f64| {
            let phi = form.phi(x);
            let d = 1.0 + form.running_norm(x);
            Mat::from_fn(2, 2, |i, j| phi[i] * phi[j] / d)
        };
        let x = 1.1;
        let eps = 1e-5;
        let fd = (bracket(x + eps) - bracket(x - eps)) / (2.0 * eps) * -2.0;
        let q = form.eval(x) - Mat::from_row_slice(2, 2, &[-3.0, 0.0, 0.0, 0.0]);
        assert!(max_abs(&(q - fd)) < 1e-8);
    }
}
