use crate::linalg::Vector;
use crate::ode::MatrixSolutionPath;
use crate::quadrature;

/// Vector-valued function sampled at the grid nodes together with its derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFunction {
    pub values: Vec<Vector>,
    pub derivs: Vec<Vector>,
}

impl VectorFunction {
    /// `x ↦ Y(x) θ` and its derivative.
    pub fn from_path(path: &MatrixSolutionPath, theta: &Vector) -> Self {
        Self {
            values: path.y.iter().map(|y| y * theta).collect(),
            derivs: path.yp.iter().map(|y| y * theta).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    /// `∫_0^π ⟨self, other⟩ dx` with the grid quadrature.
    pub fn inner(&self, other: &Self, h: f64) -> f64 {
        let f: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a.dot(b)).collect();
        quadrature::integrate(&f, h)
    }

    pub fn norm_sq(&self, h: f64) -> f64 {
        self.inner(self, h)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().flat_map(|v| v.iter()).fold(0.0, |a, b| a.max(b.abs()))
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }
}
