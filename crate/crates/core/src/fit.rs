//! Least-squares fitting with analytic Jacobians.

use levenberg_marquardt as lm;
use nalgebra::{DMatrix, DVector, Dyn, VecStorage, U1};

use crate::error::{Error, Result};

/// Residual model: `residuals(p)` and its Jacobian `∂r_i/∂p_j`.
pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;
    fn residuals(&self, params: &[f64]) -> Vec<f64>;
    fn jacobian(&self, params: &[f64]) -> DMatrix<f64>;
}

#[derive(Debug, Clone)]
pub struct LmOptions {
    /// Evaluation budget, in units of `n_params + 1` residual evaluations.
    pub patience: usize,
    /// Shared ftol/xtol/gtol.
    pub tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { patience: 200, tol: 30.0 * f64::EPSILON }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    pub residual_norm: f64,
    pub evaluations: usize,
}

/// Bridges [`LeastSquaresProblem`] to the `levenberg-marquardt` crate.
struct Adapter<'a, P> {
    problem: &'a P,
    params: DVector<f64>,
}

impl<P: LeastSquaresProblem> lm::LeastSquaresProblem<f64, Dyn, Dyn> for Adapter<'_, P> {
    type ResidualStorage = VecStorage<f64, Dyn, U1>;
    type JacobianStorage = VecStorage<f64, Dyn, Dyn>;
    type ParameterStorage = VecStorage<f64, Dyn, U1>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.params.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.params.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        Some(DVector::from_vec(self.problem.residuals(self.params.as_slice())))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        Some(self.problem.jacobian(self.params.as_slice()))
    }
}

/// Minimises `|r(p)|²` starting from `p0`.
pub fn levenberg_marquardt<P: LeastSquaresProblem>(
    problem: &P,
    p0: &[f64],
    opts: &LmOptions,
) -> Result<LmReport> {
    if problem.residuals(p0).iter().any(|x| !x.is_finite()) {
        return Err(Error::Fit("residuals not finite at the initial guess".into()));
    }
    let solver = lm::LevenbergMarquardt::new().with_tol(opts.tol).with_patience(opts.patience);
    let (done, report) = solver.minimize(Adapter { problem, params: DVector::from_column_slice(p0) });
    // NoImprovementPossible: a minimum to machine precision, tighter than `tol` can express.
    let ok = report.termination.was_successful()
        || matches!(report.termination, lm::TerminationReason::NoImprovementPossible(_));
    if !ok {
        return Err(Error::Fit(format!(
            "{:?} after {} evaluations (params {:?})",
            report.termination,
            report.number_of_evaluations,
            done.params.as_slice()
        )));
    }
    Ok(LmReport {
        params: done.params.as_slice().to_vec(),
        residual_norm: (2.0 * report.objective_function).sqrt(),
        evaluations: report.number_of_evaluations,
    })
}

/// Central finite-difference Jacobian, used to check analytic Jacobians.
pub fn numeric_jacobian<P: LeastSquaresProblem>(problem: &P, params: &[f64]) -> DMatrix<f64> {
    let m = problem.residuals(params).len();
    let n = params.len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let h = 1e-6 * params[j].abs().max(1.0);
        let mut up = params.to_vec();
        let mut dn = params.to_vec();
        up[j] += h;
        dn[j] -= h;
        let (ru, rd) = (problem.residuals(&up), problem.residuals(&dn));
        for i in 0..m {
            jac[(i, j)] = (ru[i] - rd[i]) / (2.0 * h);
        }
    }
    jac
}

/// Ordinary linear least squares `min |A x - y|` via SVD.
pub fn linear_lstsq(a: &DMatrix<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let svd = a.clone().svd(true, true);
    let x = svd.solve(y, 1e-12).ok()?;
    let resid = (a * &x - y).norm_squared();
    Some((x, resid))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Line {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquaresProblem for Line {
        fn n_params(&self) -> usize {
            2
        }
        fn residuals(&self, p: &[f64]) -> Vec<f64> {
            self.x.iter().zip(&self.y).map(|(x, y)| p[0] * (p[1] * x).exp() - y).collect()
        }
        fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
            DMatrix::from_fn(self.x.len(), 2, |i, j| {
                let e = (p[1] * self.x[i]).exp();
                if j == 0 {
                    e
                } else {
                    p[0] * self.x[i] * e
                }
            })
        }
    }

    #[test]
    fn recovers_exponential_growth() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 2.5 * (0.7 * x).exp()).collect();
        let prob = Line { x, y };
        let rep = levenberg_marquardt(&prob, &[1.0, 0.1], &LmOptions::default()).unwrap();
        assert!((rep.params[0] - 2.5).abs() < 1e-9);
        assert!((rep.params[1] - 0.7).abs() < 1e-9);
        let ja = prob.jacobian(&rep.params);
        let jn = numeric_jacobian(&prob, &rep.params);
        assert!((ja - jn).amax() < 1e-6);
    }

    #[test]
    fn linear_lstsq_exact() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0]);
        let (x, r) = linear_lstsq(&a, &y).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
        assert!(r < 1e-20);
    }
}
