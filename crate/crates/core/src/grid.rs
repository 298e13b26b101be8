use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Uniform grid on `[0, pi]` with `n >= 3` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    h: f64,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes, got {n}")));
        }
        let h = PI / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        nodes[n - 1] = PI;
        Ok(Self { nodes, h })
    }

    /// Rebuild a grid from explicit abscissae, checking they are uniform on `[0, pi]`.
    pub fn from_nodes(xs: &[f64]) -> Result<Self> {
        let grid = Self::new(xs.len())?;
        let tol = 1e-9 * grid.h.max(1e-3);
        for (i, (&x, &g)) in xs.iter().zip(&grid.nodes).enumerate() {
            if (x - g).abs() > tol {
                return Err(Error::InvalidGrid(format!(
                    "node {i} at {x} is not on the uniform grid (expected {g})"
                )));
            }
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Index of the node equal to `x` up to rounding, if any.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        let j = (x / self.h).round();
        if j < 0.0 || j as usize >= self.len() {
            return None;
        }
        let j = j as usize;
        ((x - self.nodes[j]).abs() <= 1e-12).then_some(j)
    }

    /// Cell index `i` with `x` in `[x_i, x_{i+1}]` and the offset `x - x_i`.
    pub fn locate(&self, x: f64) -> Result<(usize, f64)> {
        if !(0.0..=PI).contains(&x) {
            return Err(Error::OutOfDomain(x));
        }
        let i = ((x / self.h).floor() as usize).min(self.len() - 2);
        Ok((i, x - self.nodes[i]))
    }
}
