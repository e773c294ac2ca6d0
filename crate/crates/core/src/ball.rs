use std::sync::Arc;

use crate::error::{check_finite, check_len, Error, Result};
use crate::grid::LocalCost;

/// The feasible set `{Π ≥ 0, Π1 = x, ⟨Π, C⟩ ≤ δ}` around a clean image `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSpec {
    center: Vec<f64>,
    epsilon: f64,
    radius: f64,
    cost: Arc<LocalCost>,
}

impl BallSpec {
    /// Ball with budget proportional to the total mass, `δ = ε · 1ᵀx`.
    pub fn new(cost: Arc<LocalCost>, center: Vec<f64>, epsilon: f64) -> Result<Self> {
        validate_center(&cost, &center)?;
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let mass: f64 = center.iter().sum();
        Ok(Self {
            radius: epsilon * mass,
            epsilon,
            center,
            cost,
        })
    }

    /// Ball with an absolute transport budget `δ`.
    pub fn with_radius(cost: Arc<LocalCost>, center: Vec<f64>, radius: f64) -> Result<Self> {
        validate_center(&cost, &center)?;
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "radius must be positive, got {radius}"
            )));
        }
        let mass: f64 = center.iter().sum();
        Ok(Self {
            epsilon: radius / mass,
            radius,
            center,
            cost,
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The transport budget `δ`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn cost(&self) -> &Arc<LocalCost> {
        &self.cost
    }

    pub fn mass(&self) -> f64 {
        self.center.iter().sum()
    }
}

fn validate_center(cost: &LocalCost, center: &[f64]) -> Result<()> {
    check_len(cost.n(), center.len())?;
    check_finite(center, "ball center")?;
    if center.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("ball center has negative mass".into()));
    }
    if center.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidInput(
            "ball center has zero total mass".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_euclidean_cost, GridShape};

    #[test]
    fn radius_scales_with_mass() {
        let c = Arc::new(build_euclidean_cost(GridShape::square(2).unwrap(), 3).unwrap());
        let b = BallSpec::new(c.clone(), vec![1.0, 2.0, 0.0, 1.0], 0.1).unwrap();
        assert!((b.radius() - 0.4).abs() < 1e-15);
        assert!(BallSpec::new(c.clone(), vec![0.0; 4], 0.1).is_err());
        assert!(BallSpec::new(c.clone(), vec![1.0, -1.0, 0.0, 1.0], 0.1).is_err());
        assert!(BallSpec::new(c.clone(), vec![1.0; 4], 0.0).is_err());
        assert!(BallSpec::with_radius(c, vec![1.0; 3], 1.0).is_err());
    }
}
