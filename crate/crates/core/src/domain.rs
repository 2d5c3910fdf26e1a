use crate::error::{invalid, Result};
use crate::linalg;

/// Euclidean ball used as the constraint set. The diameter `2 * radius`
/// plays the role of `R` in every schedule formula.
#[derive(Debug, Clone, PartialEq)]
pub struct BallDomain {
    center: Vec<f64>,
    radius: f64,
}

impl BallDomain {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(invalid("domain dimension must be positive"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid(format!("domain radius must be positive, got {radius}")));
        }
        if !linalg::is_finite(&center) {
            return Err(invalid("domain center must be finite"));
        }
        Ok(Self { center, radius })
    }

    /// Ball of the given radius centered at the origin.
    pub fn centered(dim: usize, radius: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], radius)
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        // small relative slack for rounding in the projection itself
        linalg::dist(x, &self.center) <= self.radius * (1.0 + 1e-12)
    }

    /// Euclidean projection onto the ball.
    pub fn project(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.dim() {
            return Err(invalid(format!(
                "dimension mismatch: point has {}, domain has {}",
                u.len(),
                self.dim()
            )));
        }
        if !linalg::is_finite(u) {
            return Err(invalid("cannot project a non-finite vector"));
        }
        let mut out = u.to_vec();
        self.project_in_place(&mut out);
        Ok(out)
    }

    /// Projection for vectors already known to be finite and of the right size.
    pub(crate) fn project_in_place(&self, u: &mut [f64]) {
        let d = linalg::dist(u, &self.center);
        if d > self.radius {
            let s = self.radius / d;
            for (ui, ci) in u.iter_mut().zip(&self.center) {
                *ui = ci + s * (*ui - ci);
            }
        }
    }
}
