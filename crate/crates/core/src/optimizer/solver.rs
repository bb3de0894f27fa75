//! SOCP solve over the constraint types of this crate.
//!
//! Problems are handed to the Clarabel interior-point solver after each
//! constraint is row-normalized; status and KKT residuals are recomputed here
//! from the returned primal/dual pair.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::soc::SocConstraint;
use crate::error::{invalid, Error, Result};
use crate::linalg::RVec;

/// Feasibility / optimality tolerance used to accept a solution.
pub const KKT_TOL: f64 = 1e-6;

/// Minimize `objectiveᵀ·x` subject to SOC constraints and optionally `x ≥ 0`.
#[derive(Debug, Clone)]
pub struct SocpProblem {
    pub objective: RVec,
    pub constraints: Vec<SocConstraint>,
    pub nonneg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: RVec,
    pub status: SolveStatus,
    pub kkt_residuals: KktResiduals,
    pub iterations: u32,
}

impl SolveResult {
    pub fn objective(&self, problem: &SocpProblem) -> f64 {
        problem.objective.dot(&self.x)
    }
}

/// Conic data in `A·x + s = b, s ∈ K` form.
struct ConicData {
    q: Vec<f64>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    m: usize,
}

impl ConicData {
    fn push(&mut self, row: usize, col: usize, val: f64) {
        if val != 0.0 {
            self.rows.push(row);
            self.cols.push(col);
            self.vals.push(val);
        }
    }
}

fn conic_form(problem: &SocpProblem) -> ConicData {
    let n = problem.objective.len();
    let obj_scale = problem.objective.amax();
    let q = if obj_scale > 0.0 {
        problem.objective.iter().map(|v| v / obj_scale).collect()
    } else {
        vec![0.0; n]
    };
    let mut data = ConicData { q, rows: vec![], cols: vec![], vals: vec![], b: vec![], cones: vec![], m: 0 };

    for con in &problem.constraints {
        let scale = con.scale();
        if scale == 0.0 {
            continue;
        }
        let inv = 1.0 / scale;
        // s = [cᵀx + d; A·x + b] ∈ SOC  ⇔  −[cᵀ; A]·x + s = [d; b]
        let head = data.m;
        for j in 0..n {
            data.push(head, j, -con.c_vector[j] * inv);
        }
        data.b.push(con.d_scalar * inv);
        for i in 0..con.a_matrix.nrows() {
            for j in 0..n {
                data.push(head + 1 + i, j, -con.a_matrix[(i, j)] * inv);
            }
            data.b.push(con.b_vector[i] * inv);
        }
        let rows = con.a_matrix.nrows() + 1;
        data.cones.push(if rows == 1 {
            SupportedConeT::NonnegativeConeT(1)
        } else {
            SupportedConeT::SecondOrderConeT(rows)
        });
        data.m += rows;
    }

    if problem.nonneg && n > 0 {
        for j in 0..n {
            data.push(data.m + j, j, -1.0);
            data.b.push(0.0);
        }
        data.cones.push(SupportedConeT::NonnegativeConeT(n));
        data.m += n;
    }
    data
}

/// Residuals of the row-normalized problem at the primal/dual pair `(x, z)`.
fn residuals(data: &ConicData, problem: &SocpProblem, x: &[f64], z: &[f64]) -> KktResiduals {
    let n = x.len();
    let xv = RVec::from_column_slice(x);
    let mut primal = 0.0_f64;
    for con in &problem.constraints {
        primal = primal.max(-con.scaled_margin(&xv));
    }
    if problem.nonneg {
        primal = primal.max(-xv.min());
    }

    // stationarity q + Aᵀz = 0
    let mut grad = data.q.clone();
    for ((&r, &c), &v) in data.rows.iter().zip(&data.cols).zip(&data.vals) {
        grad[c] += v * z[r];
    }
    let dual = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));

    let pobj: f64 = (0..n).map(|j| data.q[j] * x[j]).sum();
    let dobj: f64 = -data.b.iter().zip(z).map(|(b, z)| b * z).sum::<f64>();
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
    KktResiduals { primal: primal.max(0.0), dual, gap }
}

/// Solves the SOCP. Infeasible problems come back with
/// [`SolveStatus::Infeasible`]; unbounded ones are an error.
pub fn solve_socp(problem: &SocpProblem) -> Result<SolveResult> {
    let n = problem.objective.len();
    if n == 0 {
        return Err(invalid("empty decision vector"));
    }
    if problem.constraints.iter().any(|c| c.dim() != n) {
        return Err(invalid("constraint dimension does not match the objective"));
    }
    if problem.objective.iter().any(|v| !v.is_finite()) {
        return Err(invalid("objective has non-finite entries"));
    }
    let data = conic_form(problem);
    if data.m == 0 {
        return if data.q.iter().all(|&v| v == 0.0) {
            Ok(SolveResult { x: RVec::zeros(n), status: SolveStatus::Optimal, kkt_residuals: KktResiduals::default(), iterations: 0 })
        } else {
            Err(Error::Unbounded)
        };
    }

    let p = CscMatrix::<f64>::zeros((n, n));
    let a = CscMatrix::new_from_triplets(data.m, n, data.rows.clone(), data.cols.clone(), data.vals.clone());
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(200)
        .tol_gap_abs(1e-9)
        .tol_gap_rel(1e-9)
        .tol_feas(1e-9)
        .tol_ktratio(1e-7)
        .build()
        .map_err(|e| Error::NumericalFailure(format!("solver settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &data.q, &a, &data.b, &data.cones, settings)
        .map_err(|e| Error::NumericalFailure(format!("solver setup: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let x = RVec::from_column_slice(&sol.x);
    let kkt = residuals(&data, problem, &sol.x, &sol.z);
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            if kkt.max() <= KKT_TOL {
                SolveStatus::Optimal
            } else {
                SolveStatus::MaxIterations
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => return Err(Error::Unbounded),
        _ => SolveStatus::MaxIterations,
    };
    Ok(SolveResult { x, status, kkt_residuals: kkt, iterations: sol.iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RMat;

    fn ball(n: usize, radius: f64) -> SocConstraint {
        SocConstraint::new(RMat::identity(n, n), RVec::zeros(n), RVec::zeros(n), radius).unwrap()
    }

    #[test]
    fn one_dimensional_boundary() {
        let p = SocpProblem { objective: RVec::from_vec(vec![-1.0]), constraints: vec![ball(1, 1.0)], nonneg: true };
        let r = solve_socp(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn symmetric_quarter_disc() {
        let p = SocpProblem { objective: RVec::from_vec(vec![-1.0, -1.0]), constraints: vec![ball(2, 1.0)], nonneg: true };
        let r = solve_socp(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r.x[0] - h).abs() < 1e-7 && (r.x[1] - h).abs() < 1e-7);
        assert!(r.kkt_residuals.max() <= KKT_TOL);
    }

    #[test]
    fn infeasible_and_unbounded() {
        // x ≥ 2 and ‖x‖ ≤ 1
        let lower = SocConstraint::linear(RVec::from_vec(vec![1.0]), -2.0);
        let p = SocpProblem { objective: RVec::from_vec(vec![1.0]), constraints: vec![lower, ball(1, 1.0)], nonneg: true };
        assert_eq!(solve_socp(&p).unwrap().status, SolveStatus::Infeasible);

        let p = SocpProblem { objective: RVec::from_vec(vec![-1.0]), constraints: vec![], nonneg: true };
        assert!(matches!(solve_socp(&p), Err(Error::Unbounded)));
    }

    #[test]
    fn tiny_scale_data_is_handled() {
        // ‖(1e-6·x₀, 3e-7)‖ ≤ 2e-6·x₁ together with x₀ + x₁ ≤ 1, minimize x₁
        let soc = SocConstraint::new(
            RMat::from_row_slice(2, 2, &[1e-6, 0.0, 0.0, 0.0]),
            RVec::from_vec(vec![0.0, 3e-7]),
            RVec::from_vec(vec![0.0, 2e-6]),
            0.0,
        )
        .unwrap();
        let budget = SocConstraint::linear(RVec::from_vec(vec![-1.0, -1.0]), 1.0);
        let p = SocpProblem { objective: RVec::from_vec(vec![0.0, 1.0]), constraints: vec![soc, budget], nonneg: true };
        let r = solve_socp(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[1] - 0.15).abs() < 1e-7, "{}", r.x);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = SocpProblem { objective: RVec::from_vec(vec![1.0, 1.0]), constraints: vec![ball(3, 1.0)], nonneg: true };
        assert!(solve_socp(&p).is_err());
    }
}
