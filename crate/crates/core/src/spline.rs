/// Not-a-knot cubic spline on a uniform grid starting at `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    /// `y` must hold at least three samples.
    pub fn new(x0: f64, h: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        assert!(n >= 3, "spline needs at least three samples");
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    0.0
                } else {
                    6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h)
                }
            })
            .collect();
        let mut m = vec![0.0; n];
        if n == 3 {
            m.fill(rhs[1] / 6.0);
        } else {
            // not-a-knot pins the second interior moments directly
            m[1] = rhs[1] / 6.0;
            m[n - 2] = rhs[n - 2] / 6.0;
            let inner = n - 4;
            if inner > 0 {
                // M_{i-1} + 4 M_i + M_{i+1} = r_i for i = 2..n-3
                let mut diag = vec![4.0; inner];
                let mut r: Vec<f64> = (2..n - 2).map(|i| rhs[i]).collect();
                r[0] -= m[1];
                r[inner - 1] -= m[n - 2];
                for k in 1..inner {
                    let w = 1.0 / diag[k - 1];
                    diag[k] -= w;
                    r[k] -= w * r[k - 1];
                }
                m[inner + 1] = r[inner - 1] / diag[inner - 1];
                for k in (0..inner - 1).rev() {
                    m[k + 2] = (r[k] - m[k + 3]) / diag[k];
                }
            }
            m[0] = 2.0 * m[1] - m[2];
            m[n - 1] = 2.0 * m[n - 2] - m[n - 3];
        }
        Self { x0, h, y, m }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let s = (x - self.x0) / self.h;
        let i = (s.floor().max(0.0) as usize).min(n - 2);
        let t = x - (self.x0 + i as f64 * self.h);
        let (mi, mj) = (self.m[i], self.m[i + 1]);
        let b = (self.y[i + 1] - self.y[i]) / self.h - self.h * (2.0 * mi + mj) / 6.0;
        self.y[i] + t * (b + t * (0.5 * mi + t * (mj - mi) / (6.0 * self.h)))
    }

    pub fn samples(&self) -> &[f64] {
        &self.y
    }
}
