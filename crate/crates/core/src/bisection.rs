//! Bisection on the derivative of a concave univariate dual.

use crate::error::{Error, Result};

/// How the maximizer of a dual is searched for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualSearch {
    /// Plain bisection on the derivative.
    #[default]
    Bisection,
    /// Newton steps on the derivative, safeguarded by bisection. Usually
    /// needs a handful of evaluations where bisection needs 15 to 20.
    Newton,
}

/// State of a dual bisection when it stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualBracket {
    /// Largest point known to have positive derivative (0 initially).
    pub lower: f64,
    /// Smallest point known to have nonpositive derivative.
    pub upper: f64,
    /// Multiplier the primal solution should be recovered at.
    pub lambda: f64,
    /// Dual derivative at `lambda`.
    pub derivative: f64,
    /// Number of bisection steps, excluding the final recovery.
    pub iterations: usize,
}

/// Maximizes a concave function on `[0, upper]` given its derivative.
///
/// `eval(λ)` returns the derivative at `λ`. Stops when `u − l ≤ tol` or
/// `|g′(λ)| ≤ tol`. On a bracket exit `λ` is the upper end, whose derivative
/// is nonpositive, so the relaxed constraint holds at the primal point
/// recovered there. When the lower end never moved, `λ = 0` is checked
/// directly since it may be the maximizer.
pub(crate) fn maximize<F>(upper: f64, tol: f64, eval: F) -> Result<DualBracket>
where
    F: FnMut(f64) -> Result<f64>,
{
    maximize_from(None, upper, tol, eval)
}

/// [`maximize`] with an optional starting guess. The bracket is first
/// narrowed around `hint` by probing at doubling distances, then bisected as
/// usual. Probes count as iterations.
pub(crate) fn maximize_from<F>(
    hint: Option<f64>,
    upper: f64,
    tol: f64,
    mut eval: F,
) -> Result<DualBracket>
where
    F: FnMut(f64) -> Result<f64>,
{
    check_inputs(upper, tol)?;
    let mut state = Bracket::new(upper);

    let mut probe = hint.filter(|h| h.is_finite() && *h >= 0.0 && *h < upper);
    let mut width = hint.map_or(tol, |h| (h * 1e-3).max(tol));
    while state.width() > tol {
        let mid = probe.unwrap_or_else(|| state.mid());
        let d = eval(mid)?;
        if let Some(done) = state.record(mid, d, tol)? {
            return Ok(done);
        }
        if let Some(p) = probe {
            // Step away from the last probe in the direction of the maximizer
            // until the bracket closes around it, then fall back to halving.
            let next = if d > 0.0 { p + width } else { p - width };
            width *= 2.0;
            probe = Some(next)
                .filter(|q| *q > state.lower && *q < state.upper && state.width() > 4.0 * width);
        }
    }
    state.finish(tol, eval)
}

/// [`maximize_from`] taking Newton steps on the derivative where they stay
/// inside the bracket and shrink it fast enough, and halving otherwise.
/// `eval(λ)` also returns the second derivative. Same stopping rule and
/// recovery as [`maximize`].
pub(crate) fn maximize_newton_from<F>(
    hint: Option<f64>,
    upper: f64,
    tol: f64,
    mut eval: F,
) -> Result<DualBracket>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    check_inputs(upper, tol)?;
    let mut state = Bracket::new(upper);
    let mut x = hint
        .filter(|h| h.is_finite() && *h >= 0.0 && *h < upper)
        .unwrap_or(0.5 * upper);
    let mut last_step = upper;
    while state.width() > tol {
        let (d, d2) = eval(x)?;
        if let Some(done) = state.record(x, d, tol)? {
            return Ok(done);
        }
        let step = -d / d2;
        let next = x + step;
        if d2 < 0.0 && next > state.lower && next < state.upper && 2.0 * step.abs() <= last_step {
            last_step = step.abs();
            x = next;
        } else {
            last_step = state.width();
            x = state.mid();
        }
    }
    state.finish(tol, |l| eval(l).map(|(d, _)| d))
}

fn check_inputs(upper: f64, tol: f64) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bisection tolerance must be positive, got {tol}"
        )));
    }
    if !(upper.is_finite() && upper >= 0.0) {
        return Err(Error::Numerical(format!(
            "dual upper bound is not a finite nonnegative number: {upper}"
        )));
    }
    Ok(())
}

struct Bracket {
    lower: f64,
    upper: f64,
    at_upper: Option<f64>,
    iterations: usize,
}

impl Bracket {
    fn new(upper: f64) -> Self {
        Self {
            lower: 0.0,
            upper,
            at_upper: None,
            iterations: 0,
        }
    }

    fn width(&self) -> f64 {
        self.upper - self.lower
    }

    fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// Shrinks the bracket with the derivative `d` at `x`. Returns the final
    /// bracket when `|d| ≤ tol`.
    fn record(&mut self, x: f64, d: f64, tol: f64) -> Result<Option<DualBracket>> {
        self.iterations += 1;
        if !d.is_finite() {
            return Err(Error::Numerical(format!(
                "dual derivative is not finite at {x}"
            )));
        }
        if d > 0.0 {
            self.lower = x;
        } else {
            self.upper = x;
            self.at_upper = Some(d);
        }
        Ok((d.abs() <= tol).then_some(DualBracket {
            lower: self.lower,
            upper: self.upper,
            lambda: x,
            derivative: d,
            iterations: self.iterations,
        }))
    }

    /// Exit after the bracket closed: try `λ = 0` if the lower end never
    /// moved, otherwise settle on the upper end.
    fn finish<F>(self, tol: f64, mut eval: F) -> Result<DualBracket>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        if self.lower == 0.0 && self.upper > 0.0 {
            let d0 = eval(0.0)?;
            if d0 <= tol {
                return Ok(DualBracket {
                    lower: 0.0,
                    upper: if d0 <= 0.0 { 0.0 } else { self.upper },
                    lambda: 0.0,
                    derivative: d0,
                    iterations: self.iterations,
                });
            }
        }
        let derivative = match self.at_upper {
            Some(d) => d,
            None => eval(self.upper)?,
        };
        Ok(DualBracket {
            lower: self.lower,
            upper: self.upper,
            lambda: self.upper,
            derivative,
            iterations: self.iterations,
        })
    }
}

/// Bisection steps needed to shrink `[0, upper]` below `tol`.
pub fn iteration_bound(upper: f64, tol: f64) -> usize {
    if upper <= tol {
        0
    } else {
        (upper / tol).log2().ceil() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_root() {
        // g(λ) = −(λ − 1.3)², derivative 2(1.3 − λ)
        let out = maximize(4.0, 1e-6, |l| Ok(2.0 * (1.3 - l))).unwrap();
        assert!((out.lambda - 1.3).abs() < 1e-6);
        assert!(out.iterations <= iteration_bound(4.0, 1e-6));
    }

    #[test]
    fn boundary_maximizer() {
        let out = maximize(3.0, 1e-4, |l| Ok(-1.0 - l)).unwrap();
        assert_eq!(out.lambda, 0.0);
        assert_eq!(out.derivative, -1.0);
    }

    #[test]
    fn recovery_at_upper_has_nonpositive_derivative() {
        // Piecewise-constant derivative: positive below 0.7, negative above.
        let out = maximize(3.0, 1e-4, |l| Ok(if l < 0.7 { 0.5 } else { -0.5 })).unwrap();
        assert!(out.derivative <= 0.0);
        assert!(out.lambda >= 0.7);
        assert!(out.upper - out.lower <= 1e-4);
        assert_eq!(out.iterations, 15);
    }

    #[test]
    fn warm_start_matches_cold() {
        let derivative = |l: f64| 2.0 * (0.4137 - l);
        let cold = maximize(4.0, 1e-9, |l| Ok(derivative(l))).unwrap();
        for hint in [0.41, 0.4137, 0.5, 3.9, 1e-6] {
            let warm = maximize_from(Some(hint), 4.0, 1e-9, |l| Ok(derivative(l))).unwrap();
            assert!((warm.lambda - cold.lambda).abs() <= 2e-9);
        }
        let near = maximize_from(Some(0.41369), 4.0, 1e-9, |l| Ok(derivative(l))).unwrap();
        assert!(near.iterations < cold.iterations);
    }

    #[test]
    fn newton_matches_bisection() {
        // g′(λ) = e^{−λ} − 0.3, concave dual with root ln(1/0.3).
        let root = (1.0f64 / 0.3).ln();
        let bisected = maximize(10.0, 1e-10, |l| Ok((-l).exp() - 0.3)).unwrap();
        for hint in [None, Some(0.0), Some(1.2), Some(9.0)] {
            let newton =
                maximize_newton_from(hint, 10.0, 1e-10, |l| Ok(((-l).exp() - 0.3, -(-l).exp())))
                    .unwrap();
            assert!((newton.lambda - root).abs() <= 1e-9);
            assert!(newton.iterations < bisected.iterations);
        }
    }

    #[test]
    fn newton_survives_flat_pieces() {
        // Zero second derivative everywhere forces pure halving.
        let out = maximize_newton_from(None, 3.0, 1e-4, |l| {
            Ok((if l < 0.7 { 0.5 } else { -0.5 }, 0.0))
        })
        .unwrap();
        assert!(out.derivative <= 0.0);
        assert!(out.lambda >= 0.7 && out.upper - out.lower <= 1e-4);
    }

    #[test]
    fn iteration_bound_values() {
        assert_eq!(iteration_bound(3.0, 1e-4), 15);
        assert_eq!(iteration_bound(5e-5, 1e-4), 0);
        assert_eq!(iteration_bound(0.0, 1e-4), 0);
    }
}
