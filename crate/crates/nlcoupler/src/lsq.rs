//! Levenberg-Marquardt with a forward-difference Jacobian over closures.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DMatrix, DVector, Dyn};

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub x: Vec<f64>,
    /// Σ r² at `x`.
    pub cost: f64,
    pub evaluations: usize,
    pub converged: bool,
}

struct Problem<'a, F: Fn(&[f64]) -> Option<Vec<f64>>> {
    f: &'a F,
    x: DVector<f64>,
    r: Option<DVector<f64>>,
    step: f64,
}

impl<F: Fn(&[f64]) -> Option<Vec<f64>>> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, F> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.x = x.clone();
        self.r = (self.f)(x.as_slice()).map(DVector::from_vec);
    }

    fn params(&self) -> DVector<f64> {
        self.x.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        self.r.clone()
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let r0 = self.r.as_ref()?;
        jacobian(self.f, self.x.as_slice(), r0.as_slice(), self.step)
    }
}

/// Forward differences with relative step `step`.
pub(crate) fn jacobian<F: Fn(&[f64]) -> Option<Vec<f64>>>(
    f: &F,
    x: &[f64],
    r0: &[f64],
    step: f64,
) -> Option<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(r0.len(), x.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        let h = step * x[k].abs().max(1.0);
        xp[k] = x[k] + h;
        let rp = f(&xp)?;
        xp[k] = x[k];
        if rp.len() != r0.len() {
            return None;
        }
        for (i, (a, b)) in rp.iter().zip(r0).enumerate() {
            jac[(i, k)] = (a - b) / h;
        }
    }
    Some(jac)
}

/// Minimises Σ f(x)² from `x0`. `f` returns `None` outside its domain.
pub(crate) fn minimize<F: Fn(&[f64]) -> Option<Vec<f64>>>(
    f: &F,
    x0: &[f64],
    step: f64,
    tol: f64,
    patience: usize,
) -> Option<Solution> {
    let mut problem = Problem { f, x: DVector::from_column_slice(x0), r: None, step };
    problem.set_params(&DVector::from_column_slice(x0));
    problem.r.as_ref()?;
    let (done, report) = LevenbergMarquardt::new()
        .with_ftol(tol)
        .with_xtol(tol)
        .with_gtol(0.0)
        .with_patience(patience)
        .minimize(problem);
    let r = done.r.as_ref()?;
    Some(Solution {
        x: done.x.as_slice().to_vec(),
        cost: r.norm_squared(),
        evaluations: report.number_of_evaluations,
        converged: report.termination.was_successful(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|&t| 2.0 * (-1.3 * t).exp()).collect();
        let f = |x: &[f64]| Some(t.iter().zip(&y).map(|(&t, &y)| x[0] * (-x[1] * t).exp() - y).collect());
        let s = minimize(&f, &[1.0, 0.5], 1e-7, 1e-12, 200).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-6 && (s.x[1] - 1.3).abs() < 1e-6, "{:?}", s.x);
    }
}
