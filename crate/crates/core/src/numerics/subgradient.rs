//! Projected subgradient stepping with the diminishing rule `β_k = 1/√k`.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    /// Ascend on a concave function (`x ← x + β g`).
    Maximize,
    /// Descend on a convex function (`x ← x − β g`).
    Minimize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubgradientState {
    pub x: Vec<f64>,
    /// Index of the next step, starting at 1.
    pub k: usize,
    pub best_value: Option<f64>,
    pub best_x: Vec<f64>,
    pub last_g: Option<Vec<f64>>,
    /// `‖g^(k) − g^(k−1)‖₂` of the latest step.
    pub residual: f64,
    pub converged: bool,
    pub tol: f64,
}

impl SubgradientState {
    pub fn new(x0: Vec<f64>, tol: f64) -> Self {
        let x: Vec<f64> = x0.into_iter().map(|v| v.max(0.0)).collect();
        Self {
            best_x: x.clone(),
            x,
            k: 1,
            best_value: None,
            last_g: None,
            residual: f64::INFINITY,
            converged: false,
            tol,
        }
    }

    pub fn step_size(&self) -> f64 {
        1.0 / (self.k as f64).sqrt()
    }

    /// Records `value` (the function at the current `x`) and `g` (a
    /// subgradient there), then moves `x` and projects onto `x ≥ 0`.
    pub fn step(self, value: f64, g: &[f64], sense: Sense) -> Self {
        self.step_projected(value, g, sense, |_| {})
    }

    /// As [`step`](Self::step), applying `project` after the orthant
    /// projection.
    pub fn step_projected(
        mut self,
        value: f64,
        g: &[f64],
        sense: Sense,
        project: impl FnOnce(&mut [f64]),
    ) -> Self {
        let improved = match (self.best_value, sense) {
            (None, _) => true,
            (Some(b), Sense::Maximize) => value > b,
            (Some(b), Sense::Minimize) => value < b,
        };
        if improved && value.is_finite() {
            self.best_value = Some(value);
            self.best_x.clone_from(&self.x);
        }
        if let Some(prev) = &self.last_g {
            self.residual = prev
                .iter()
                .zip(g)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            self.converged = self.residual <= self.tol;
        }
        let beta = self.step_size();
        let sign = match sense {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        };
        for (x, gi) in self.x.iter_mut().zip(g) {
            *x = (*x + sign * beta * gi).max(0.0);
        }
        project(&mut self.x);
        self.last_g = Some(g.to_vec());
        self.k += 1;
        self
    }
}

/// Projects `x` onto `{x ≥ 0, aᵀx = 0}` in the Euclidean norm. `a` must have
/// entries of both signs (or be zero) for the set to contain more than the
/// origin.
pub fn project_orthant_hyperplane(x: &mut [f64], a: &[f64]) {
    let residual = |tau: f64| -> f64 {
        x.iter()
            .zip(a)
            .map(|(&xi, &ai)| ai * (xi - tau * ai).max(0.0))
            .sum()
    };
    let r0 = residual(0.0);
    if r0 == 0.0 {
        for v in x.iter_mut() {
            *v = v.max(0.0);
        }
        return;
    }
    // residual(τ) is nonincreasing in τ; bracket its root
    let mut step = 1.0f64;
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    step = step.max(scale / amax);
    let (mut lo, mut hi) = if r0 > 0.0 { (0.0, step) } else { (-step, 0.0) };
    for _ in 0..200 {
        if r0 > 0.0 && residual(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
        } else if r0 < 0.0 && residual(lo) < 0.0 {
            hi = lo;
            lo *= 2.0;
        } else {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(lo.abs()).max(1e-300) {
            break;
        }
    }
    let tau = 0.5 * (lo + hi);
    for (xi, &ai) in x.iter_mut().zip(a) {
        *xi = (*xi - tau * ai).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_subgradient_keeps_point() {
        let s = SubgradientState::new(vec![1.0, 2.0], 1e-4);
        let s = s.step(0.0, &[0.0, 0.0], Sense::Maximize);
        assert_eq!(s.x, vec![1.0, 2.0]);
        assert!(!s.converged);
        let s = s.step(0.0, &[0.0, 0.0], Sense::Maximize);
        assert!(s.converged);
    }

    #[test]
    fn projection_zeroes_negatives() {
        let s = SubgradientState::new(vec![0.1, 0.5], 1e-4);
        let s = s.step(0.0, &[1.0, -0.2], Sense::Minimize);
        assert_eq!(s.x[0], 0.0);
        assert!((s.x[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn scalar_concave_maximization() {
        let mut s = SubgradientState::new(vec![5.0], 0.0);
        for _ in 0..10_000 {
            let x = s.x[0];
            s = s.step(-(x - 1.0).powi(2), &[-2.0 * (x - 1.0)], Sense::Maximize);
        }
        assert!((s.x[0] - 1.0).abs() < 1e-2);
        assert!((s.best_x[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn best_value_is_monotone() {
        let mut s = SubgradientState::new(vec![3.0], 0.0);
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..100 {
            let x = s.x[0];
            s = s.step(-(x - 1.0).abs(), &[-(x - 1.0).signum()], Sense::Maximize);
            let b = s.best_value.unwrap();
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn hyperplane_projection() {
        let a = [1.0, 1.0, -1.0, -1.0];
        let mut x = [3.0, 1.0, 0.5, 0.0];
        project_orthant_hyperplane(&mut x, &a);
        let dot: f64 = x.iter().zip(&a).map(|(x, a)| x * a).sum();
        assert!(dot.abs() < 1e-12);
        assert!(x.iter().all(|&v| v >= 0.0));
        // x' = max(0, x - τa) with τ = 7/8 here
        assert!((x[0] - 2.125).abs() < 1e-9);
        assert!((x[3] - 0.875).abs() < 1e-9);
    }
}
