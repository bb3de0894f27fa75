//! Concave-convex procedure for maximizing `η̃ᵀ·Re{Ψ}·η̃`.
//!
//! Each step linearizes the convex objective at the previous iterate and
//! solves the resulting SOCP over the unchanged constraint set, so every
//! iterate is feasible and the objective never decreases.

use super::solver::{solve_socp, SocpProblem, SolveStatus};
use super::AllocationConstraints;
use crate::error::{invalid, Error, Result};
use crate::linalg::{CMat, RMat, RVec};
use crate::signal::SqrtPowerVector;

/// Tolerance on the starting point's scaled constraint margin.
const START_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcpOptions {
    /// Stop once `‖Re{Ψ}·(η̃ᵗ − η̃ᵗ⁻¹)‖ ≤ epsilon·‖Re{Ψ}‖_F`.
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for CcpOptions {
    fn default() -> Self {
        Self { epsilon: 1e-6, max_iters: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct CcpOutcome {
    pub eta: SqrtPowerVector,
    /// `η̃ᵀ·Re{Ψ}·η̃` at the start and after every accepted iterate.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl CcpOutcome {
    /// Final value of `η̃ᵀ·Re{Ψ}·η̃`.
    pub fn objective(&self) -> f64 {
        self.trace.last().copied().unwrap_or(0.0)
    }
}

fn objective(psi: &RMat, x: &RVec) -> f64 {
    x.dot(&(psi * x))
}

pub fn ccp_sensing_centric(
    psi: &CMat,
    constraints: &AllocationConstraints,
    eta0: &SqrtPowerVector,
    options: &CcpOptions,
) -> Result<CcpOutcome> {
    let n = constraints.dim();
    if psi.shape() != (n, n) {
        return Err(invalid(format!("Ψ is {}×{}, expected {n}×{n}", psi.nrows(), psi.ncols())));
    }
    if !(options.epsilon > 0.0) || options.max_iters == 0 {
        return Err(invalid("CCP needs epsilon > 0 and at least one iteration"));
    }
    if eta0.len() != n || !constraints.is_feasible(eta0.as_vector(), START_TOL) {
        return Err(invalid("initial iterate is infeasible"));
    }
    let re_psi = psi.map(|z| z.re);
    let psi_norm = re_psi.norm();
    let cons = constraints.all();

    let mut current = eta0.as_vector().clone();
    let mut value = objective(&re_psi, &current);
    let mut trace = vec![value];
    if psi_norm == 0.0 {
        return Ok(CcpOutcome { eta: eta0.clone(), trace, iterations: 0, converged: true });
    }

    for iteration in 1..=options.max_iters {
        let grad = &re_psi * &current;
        let problem = SocpProblem { objective: -grad, constraints: cons.clone(), nonneg: true };
        let result = solve_socp(&problem).map_err(|e| Error::InnerSolve { iteration, source: Box::new(e) })?;
        if result.status != SolveStatus::Optimal {
            let cause = match result.status {
                SolveStatus::Infeasible => Error::InfeasibleConstraint("inner SOCP reported infeasible".into()),
                _ => Error::NumericalFailure(format!("inner SOCP residual {:.3e}", result.kkt_residuals.max())),
            };
            return Err(Error::InnerSolve { iteration, source: Box::new(cause) });
        }
        let mut next = result.x.map(|v| v.max(0.0));
        for &i in &constraints.pinned {
            next[i] = 0.0;
        }
        let next_value = objective(&re_psi, &next);
        // a linearized step can only lose value through solver round-off; that is convergence
        if next_value < value {
            return Ok(CcpOutcome { eta: SqrtPowerVector::new(current)?, trace, iterations: iteration, converged: true });
        }
        let step = (&re_psi * (&next - &current)).norm();
        current = next;
        value = next_value;
        trace.push(value);
        if step <= options.epsilon * psi_norm {
            return Ok(CcpOutcome { eta: SqrtPowerVector::new(current)?, trace, iterations: iteration, converged: true });
        }
    }
    Ok(CcpOutcome { eta: SqrtPowerVector::new(current)?, trace, iterations: options.max_iters, converged: false })
}
