//! Central-cut ellipsoid method for convex minimization.
//!
//! The ellipsoid is `{x : (x - c)^T A^{-1} (x - c) <= 1}`. Each cut with a
//! (sub)gradient `g` at the center keeps the half-space `g^T (x - c) <= 0`.

use nalgebra::{DMatrix, DVector};

pub(crate) struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
}

impl Ellipsoid {
    /// Axis-aligned start with per-coordinate radii. Needs dimension >= 2
    /// for the general update; dimension 1 degenerates to interval halving.
    pub fn new(center: Vec<f64>, radii: &[f64]) -> Self {
        let n = center.len();
        assert_eq!(n, radii.len());
        let shape = DMatrix::from_fn(n, n, |i, j| if i == j { radii[i] * radii[i] } else { 0.0 });
        Ellipsoid {
            center: DVector::from_vec(center),
            shape,
        }
    }

    pub fn center(&self) -> &[f64] {
        self.center.as_slice()
    }

    /// Largest semi-axis bound, `sqrt(max diag(A))`.
    pub fn width(&self) -> f64 {
        self.shape
            .diagonal()
            .iter()
            .fold(0.0f64, |m, v| m.max(*v))
            .sqrt()
    }

    /// Applies a central cut. Returns `false` when `g` is (numerically) zero
    /// in the ellipsoid metric, so no progress is possible.
    pub fn cut(&mut self, g: &[f64]) -> bool {
        let n = self.center.len() as f64;
        let g = DVector::from_column_slice(g);
        let ag = &self.shape * &g;
        let gag = g.dot(&ag);
        if !(gag > 0.0) || !gag.is_finite() {
            return false;
        }
        let b = ag / gag.sqrt();
        if self.center.len() == 1 {
            self.center -= &b / 2.0;
            self.shape /= 4.0;
            return true;
        }
        self.center -= &b / (n + 1.0);
        let outer = &b * b.transpose();
        self.shape = (&self.shape - outer * (2.0 / (n + 1.0))) * (n * n / (n * n - 1.0));
        // keep A symmetric against drift
        self.shape = (&self.shape + self.shape.transpose()) * 0.5;
        true
    }
}
