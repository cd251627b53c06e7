use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DMatrix, DVector, Dyn};

use super::linear::{solve_nnls, LinearFit};
use super::FitOptions;
use crate::error::{Error, Result};

/// Model `y ≈ Σ_j c_j·φ_j(θ)`: nonlinear parameters θ, linear coefficients c.
/// The coefficients are eliminated exactly at every θ, so the damped
/// solver only walks the nonlinear directions.
struct Separable<'a, B> {
    basis: &'a B,
    y: &'a [f64],
    w: &'a [f64],
    nonneg: &'a [bool],
    theta: DVector<f64>,
}

impl<B> Clone for Separable<'_, B> {
    fn clone(&self) -> Self {
        Self {
            theta: self.theta.clone(),
            ..*self
        }
    }
}

impl<B: Fn(&[f64]) -> Vec<Vec<f64>>> Separable<'_, B> {
    fn linear(&self) -> Option<(Vec<Vec<f64>>, LinearFit)> {
        let cols = (self.basis)(self.theta.as_slice());
        if cols.iter().flatten().any(|v| !v.is_finite()) {
            return None;
        }
        let fit = solve_nnls(&cols, self.y, self.w, self.nonneg)?;
        Some((cols, fit))
    }
}

impl<B: Fn(&[f64]) -> Vec<Vec<f64>>> LeastSquaresProblem<f64, Dyn, Dyn> for Separable<'_, B> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.theta.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.theta.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let (cols, fit) = self.linear()?;
        Some(DVector::from_fn(self.y.len(), |i, _| {
            let m: f64 = cols.iter().zip(&fit.coef).map(|(c, k)| c[i] * k).sum();
            self.w[i].sqrt() * (self.y[i] - m)
        }))
    }

    /// Central differences, one pair of residual evaluations per column.
    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let n = self.theta.len();
        let mut jac = DMatrix::zeros(self.y.len(), n);
        let mut probe = self.clone();
        for j in 0..n {
            let h = 1e-6 * self.theta[j].abs().max(1.0);
            probe.theta.copy_from(&self.theta);
            probe.theta[j] += h;
            let up = probe.residuals()?;
            probe.theta[j] -= 2.0 * h;
            let down = probe.residuals()?;
            jac.set_column(j, &((up - down) / (2.0 * h)));
        }
        Some(jac)
    }
}

pub(crate) struct SeparableFit {
    pub theta: Vec<f64>,
    pub coef: Vec<f64>,
    pub chi2: f64,
    pub iterations: usize,
}

/// Damped least squares over `theta` with the linear coefficients projected out.
pub(crate) fn fit_separable<B>(
    basis: &B,
    y: &[f64],
    w: &[f64],
    nonneg: &[bool],
    theta0: &[f64],
    opts: &FitOptions,
) -> Result<SeparableFit>
where
    B: Fn(&[f64]) -> Vec<Vec<f64>>,
{
    let problem = Separable {
        basis,
        y,
        w,
        nonneg,
        theta: DVector::from_column_slice(theta0),
    };
    // One evaluation per iteration plus the numerical Jacobian columns.
    let patience = opts.max_iterations.div_ceil(theta0.len() + 1).max(1);
    let (problem, report) = LevenbergMarquardt::new()
        .with_xtol(opts.step_tolerance)
        .with_patience(patience)
        .minimize(problem);
    let theta = problem.theta.as_slice().to_vec();
    let iterations = report.number_of_evaluations;
    if !report.termination.was_successful() {
        return Err(Error::NonConvergence { iterations, last: theta });
    }
    let (_, fit) = problem.linear().ok_or_else(|| Error::NonConvergence {
        iterations,
        last: theta.clone(),
    })?;
    Ok(SeparableFit {
        theta,
        coef: fit.coef,
        chi2: fit.chi2,
        iterations,
    })
}
