//! Power allocation over the square-root power vector `η̃`.
//!
//! [`AllocationConstraints`] collects the per-UE QoS cones and per-AP power
//! cones of one drop. The communication-centric baseline minimizes total
//! transmit power over that set; the sensing-centric scheme maximizes
//! `η̃ᵀ·Re{Ψ}·η̃` with the concave-convex procedure in [`ccp`].

pub mod ccp;
pub mod soc;
pub mod solver;

pub use ccp::{ccp_sensing_centric, CcpOptions, CcpOutcome};
pub use soc::{build_power_soc, build_sinr_soc, power_gains, power_soc_from_gains, SocConstraint};
pub use solver::{solve_socp, KktResiduals, SocpProblem, SolveResult, SolveStatus, KKT_TOL};

use crate::error::{invalid, ConstraintFamily, Error, Result};
use crate::linalg::{CMat, RMat, RVec};
use crate::precoding::PrecoderSet;
use crate::signal::{SinrTerms, SqrtPowerVector};

/// Weight of the interior point when nudging the baseline off the boundary.
const CENTER_WEIGHT: f64 = 0.01;

/// Constraint set of one power-allocation instance.
#[derive(Debug, Clone)]
pub struct AllocationConstraints {
    pub qos: Vec<SocConstraint>,
    pub power: Vec<SocConstraint>,
    /// Decision entries forced to zero (the sensing stream when `x_0` is off).
    pub pinned: Vec<usize>,
    dim: usize,
}

impl AllocationConstraints {
    pub fn new(qos: Vec<SocConstraint>, power: Vec<SocConstraint>, pinned: Vec<usize>) -> Result<Self> {
        let dim = qos
            .iter()
            .chain(&power)
            .map(SocConstraint::dim)
            .next()
            .ok_or_else(|| invalid("empty constraint set"))?;
        if qos.iter().chain(&power).any(|c| c.dim() != dim) {
            return Err(invalid("constraints disagree on the decision dimension"));
        }
        if pinned.iter().any(|&i| i >= dim) {
            return Err(invalid("pinned index out of range"));
        }
        Ok(Self { qos, power, pinned, dim })
    }

    /// QoS cones for every UE and power cones for every transmit AP.
    pub fn build(
        terms: &SinrTerms,
        precoders: &PrecoderSet,
        gamma_thresh: f64,
        noise_variance: f64,
        frame_len: usize,
        p_max: f64,
        sensing_symbol: bool,
    ) -> Result<Self> {
        let qos = (0..terms.n_ue())
            .map(|u| build_sinr_soc(terms, u, gamma_thresh, noise_variance, frame_len))
            .collect::<Result<Vec<_>>>()?;
        let power = (0..precoders.n_tx)
            .map(|k| build_power_soc(precoders, k, p_max))
            .collect::<Result<Vec<_>>>()?;
        Self::new(qos, power, if sensing_symbol { vec![] } else { vec![0] })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn pins(&self) -> impl Iterator<Item = SocConstraint> + '_ {
        self.pinned.iter().map(move |&i| {
            let mut c = RVec::zeros(self.dim);
            c[i] = -1.0;
            SocConstraint::linear(c, 0.0)
        })
    }

    /// Every constraint, pins included, as handed to the SOCP solver.
    pub fn all(&self) -> Vec<SocConstraint> {
        self.qos.iter().chain(&self.power).cloned().chain(self.pins()).collect()
    }

    /// Smallest scaled margin over the QoS and power cones.
    pub fn min_margin(&self, x: &RVec) -> f64 {
        self.qos
            .iter()
            .chain(&self.power)
            .map(|c| c.scaled_margin(x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_feasible(&self, x: &RVec, tol: f64) -> bool {
        x.len() == self.dim
            && x.iter().all(|&v| v >= -tol)
            && self.pinned.iter().all(|&i| x[i].abs() <= tol)
            && self.min_margin(x) >= -tol
    }

    /// Names the family that rules out feasibility: QoS if the SINR cones
    /// alone are already infeasible, otherwise the power budget.
    pub fn diagnose(&self) -> Result<ConstraintFamily> {
        let qos_only = SocpProblem {
            objective: RVec::zeros(self.dim),
            constraints: self.qos.iter().cloned().chain(self.pins()).collect(),
            nonneg: true,
        };
        Ok(match solve_socp(&qos_only)?.status {
            SolveStatus::Infeasible => ConstraintFamily::Qos,
            _ => ConstraintFamily::PowerBudget,
        })
    }
}

fn solve_or_report(problem: &SocpProblem, constraints: &AllocationConstraints) -> Result<RVec> {
    let result = solve_socp(problem)?;
    match result.status {
        SolveStatus::Optimal => Ok(result.x),
        SolveStatus::Infeasible => Err(Error::Infeasible { family: constraints.diagnose()? }),
        SolveStatus::MaxIterations => Err(Error::NumericalFailure(format!(
            "SOCP did not converge (residual {:.3e})",
            result.kkt_residuals.max()
        ))),
    }
}

/// Minimum total transmit power `Σ_k P_k` over the constraint set.
///
/// `Σ_k P_k = ‖D·η̃‖²` with `D = diag(√Σ_k ‖W_{u,k}‖_F²)`, so the problem is the
/// single epigraph cone `‖D·η̃‖ ≤ t`, minimizing `t`.
pub fn comm_centric_baseline(constraints: &AllocationConstraints, gains: &[RVec]) -> Result<SqrtPowerVector> {
    let n = constraints.dim();
    if gains.is_empty() || gains.iter().any(|g| g.len() != n) {
        return Err(invalid("one gain vector of the decision dimension per AP is required"));
    }
    let weights = RVec::from_fn(n, |u, _| gains.iter().map(|g| g[u] * g[u]).sum::<f64>().sqrt());
    let mut a = RMat::zeros(n, n + 1);
    a.view_mut((0, 0), (n, n)).set_diagonal(&weights);
    let mut c = RVec::zeros(n + 1);
    c[n] = 1.0;
    let epigraph = SocConstraint::new(a, RVec::zeros(n), c.clone(), 0.0)?;

    let mut cons: Vec<SocConstraint> = constraints.all().iter().map(|s| s.embed(n + 1)).collect();
    cons.push(epigraph);
    let x = solve_or_report(&SocpProblem { objective: c, constraints: cons, nonneg: true }, constraints)?;
    let mut eta = x.rows(0, n).map(|v| v.max(0.0));
    // Entries that only cost power sit at O(√gap) instead of zero; drop them
    // when the point stays feasible without them.
    for i in 0..n {
        if eta[i] == 0.0 {
            continue;
        }
        let mut trial = eta.clone();
        trial[i] = 0.0;
        if constraints.min_margin(&trial) >= constraints.min_margin(&eta).min(0.0) {
            eta = trial;
        }
    }
    SqrtPowerVector::new(eta)
}

/// Total power `Σ_k P_k = Σ_k ‖G_kᵀ·η̃‖²`.
pub fn total_power(eta: &SqrtPowerVector, gains: &[RVec]) -> f64 {
    gains.iter().map(|g| g.component_mul(eta.as_vector()).norm_squared()).sum()
}

/// Point maximizing the smallest scaled margin of the QoS and power cones,
/// with that margin (capped at 1).
pub fn max_margin_point(constraints: &AllocationConstraints) -> Result<(SqrtPowerVector, f64)> {
    let (mut x, depth) = interior_point(constraints)?;
    for &i in &constraints.pinned {
        x[i] = 0.0;
    }
    Ok((SqrtPowerVector::from_solver(&x)?, depth))
}

fn interior_point(constraints: &AllocationConstraints) -> Result<(RVec, f64)> {
    let n = constraints.dim();
    let mut cons = Vec::new();
    for con in constraints.qos.iter().chain(&constraints.power) {
        let scale = con.scale();
        let mut lifted = con.embed(n + 1);
        if scale > 0.0 {
            lifted.a_matrix /= scale;
            lifted.b_vector /= scale;
            lifted.c_vector /= scale;
            lifted.d_scalar /= scale;
        }
        lifted.c_vector[n] = -1.0;
        cons.push(lifted);
    }
    cons.extend(constraints.pins().map(|p| p.embed(n + 1)));
    let mut cap = RVec::zeros(n + 1);
    cap[n] = -1.0;
    cons.push(SocConstraint::linear(cap, 1.0));
    let mut objective = RVec::zeros(n + 1);
    objective[n] = -1.0;
    let x = solve_or_report(&SocpProblem { objective, constraints: cons, nonneg: true }, constraints)?;
    Ok((x.rows(0, n).into_owned(), x[n]))
}

/// Moves `point` a small step toward the interior point `center` and checks
/// strict feasibility.
fn nudge(constraints: &AllocationConstraints, point: &RVec, center: &RVec, depth: f64) -> Result<SqrtPowerVector> {
    let mut start = (point * (1.0 - CENTER_WEIGHT) + center * CENTER_WEIGHT).map(|v| v.max(0.0));
    for &i in &constraints.pinned {
        start[i] = 0.0;
    }
    if constraints.min_margin(&start) < 1e-8 * CENTER_WEIGHT * depth {
        return Err(Error::NumericalFailure("initial point is not strictly feasible".into()));
    }
    SqrtPowerVector::new(start)
}

fn center_of(constraints: &AllocationConstraints) -> Result<(RVec, f64)> {
    let (center, depth) = interior_point(constraints)?;
    if depth <= 1e-8 {
        return Err(Error::Infeasible { family: constraints.diagnose()? });
    }
    Ok((center, depth))
}

/// Strictly feasible starting point: the baseline moved a small step toward
/// the max-margin interior point.
pub fn find_feasible_initial(constraints: &AllocationConstraints, gains: &[RVec]) -> Result<SqrtPowerVector> {
    let base = comm_centric_baseline(constraints, gains)?;
    let (center, depth) = center_of(constraints)?;
    nudge(constraints, base.as_vector(), &center, depth)
}

/// Feasible point maximizing the single coordinate `i`.
pub fn coordinate_vertex(constraints: &AllocationConstraints, i: usize) -> Result<SqrtPowerVector> {
    let mut objective = RVec::zeros(constraints.dim());
    objective[i] = -1.0;
    let problem = SocpProblem { objective, constraints: constraints.all(), nonneg: true };
    let mut x = solve_or_report(&problem, constraints)?.map(|v| v.max(0.0));
    for &p in &constraints.pinned {
        x[p] = 0.0;
    }
    SqrtPowerVector::new(x)
}

/// Sensing-centric allocation: CCP from several feasible starts, keeping the
/// best local maximizer.
///
/// A start with `η̃_i ≈ 0` can leave stream `i` switched off for good, because
/// the linearized objective has no pull on a coordinate whose Ψ cross terms
/// vanish. Besides the nudged baseline and the max-margin point, each free
/// coordinate's maximizing vertex is therefore tried as well.
pub fn sensing_centric_allocation(
    psi: &CMat,
    constraints: &AllocationConstraints,
    gains: &[RVec],
    options: &CcpOptions,
) -> Result<CcpOutcome> {
    let (center, depth) = center_of(constraints)?;
    let mut starts = vec![find_feasible_initial(constraints, gains)?, SqrtPowerVector::from_solver(&center)?];
    for i in (0..constraints.dim()).filter(|i| !constraints.pinned.contains(i)) {
        starts.push(nudge(constraints, coordinate_vertex(constraints, i)?.as_vector(), &center, depth)?);
    }
    let mut best: Option<CcpOutcome> = None;
    for start in &starts {
        let out = ccp_sensing_centric(psi, constraints, start, options)?;
        if best.as_ref().is_none_or(|b| out.objective() > b.objective()) {
            best = Some(out);
        }
    }
    Ok(best.expect("the start list is never empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::tests::fixture;
    use crate::signal::{ap_power, sinr_terms, ue_sinr};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const NOISE: f64 = 3.981_071_705_534_969e-13;

    fn instance(seed: u64, gamma: f64, p_max: f64, sensing: bool) -> (AllocationConstraints, Vec<RVec>, SinrTerms, PrecoderSet) {
        let f = fixture(4, 2, 4, 1, 2, 2, seed);
        let terms = sinr_terms(&f.channels, &f.precoders, &f.frames).unwrap();
        let cons = AllocationConstraints::build(&terms, &f.precoders, gamma, NOISE, 8, p_max, sensing).unwrap();
        let gains = (0..f.precoders.n_tx).map(|k| power_gains(&f.precoders, k)).collect();
        (cons, gains, terms, f.precoders)
    }

    #[test]
    fn baseline_meets_qos_and_leaves_sensing_off() {
        let gamma = 10f64.powf(0.2);
        let (cons, gains, terms, precoders) = instance(11, gamma, 1.0, true);
        let eta = comm_centric_baseline(&cons, &gains).unwrap();
        for s in ue_sinr(&terms, &eta, NOISE, 8) {
            assert!(s >= gamma - 1e-6, "SINR {s}");
        }
        assert!(eta.get(0) < 1e-6);
        for k in 0..precoders.n_tx {
            assert!(ap_power(&precoders, k, &eta) <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn baseline_beats_random_feasible_points() {
        let (cons, gains, _, _) = instance(12, 1.5, 1.0, true);
        let eta = comm_centric_baseline(&cons, &gains).unwrap();
        let best = total_power(&eta, &gains);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tested = 0;
        while tested < 1000 {
            let trial = eta.as_vector().map(|v| (v * (1.0 + rng.random_range(-0.2..0.2))).max(0.0));
            let trial = &trial + RVec::from_fn(trial.len(), |_, _| rng.random_range(0.0..1e-3));
            if cons.is_feasible(&trial, 0.0) {
                let p = total_power(&SqrtPowerVector::new(trial).unwrap(), &gains);
                assert!(p >= best * (1.0 - 1e-7), "{p} < {best}");
                tested += 1;
            }
        }
    }

    #[test]
    fn initial_point_is_strictly_feasible() {
        let (cons, gains, _, _) = instance(13, 1e-3, 1.0, true);
        let eta = find_feasible_initial(&cons, &gains).unwrap();
        assert!(cons.min_margin(eta.as_vector()) > 0.0);
        for c in cons.all() {
            assert!(c.margin(eta.as_vector()) >= -1e-8);
        }
    }

    #[test]
    fn pinned_sensing_stays_zero() {
        let (cons, gains, _, _) = instance(14, 1.0, 1.0, false);
        let eta = find_feasible_initial(&cons, &gains).unwrap();
        assert_eq!(eta.get(0), 0.0);
        assert!(cons.is_feasible(eta.as_vector(), 1e-12));
    }

    #[test]
    fn impossible_targets_report_family() {
        let (cons, gains, _, _) = instance(15, 1e9, 1e-9, true);
        assert!(matches!(find_feasible_initial(&cons, &gains), Err(Error::Infeasible { .. })));

        // loose QoS but a budget below what the noise floor demands
        let (cons, gains, _, _) = instance(15, 1.5, 1e-15, true);
        match comm_centric_baseline(&cons, &gains) {
            Err(Error::Infeasible { family }) => assert_eq!(family, ConstraintFamily::PowerBudget),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn qos_family_detected() {
        // two UEs that each need SINR 4 while seeing each other at full strength
        let terms = SinrTerms { ds: vec![1.0, 1.0], iui: RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), si: vec![0.0, 0.0] };
        let qos = (0..2).map(|u| build_sinr_soc(&terms, u, 4.0, 1e-3, 1).unwrap()).collect();
        let power = vec![power_soc_from_gains(&RVec::from_vec(vec![1.0, 1.0, 1.0]), 100.0).unwrap()];
        let cons = AllocationConstraints::new(qos, power, vec![]).unwrap();
        assert_eq!(cons.diagnose().unwrap(), ConstraintFamily::Qos);
    }

    #[test]
    fn constructor_validation() {
        assert!(AllocationConstraints::new(vec![], vec![], vec![]).is_err());
        let a = SocConstraint::linear(RVec::zeros(2), 1.0);
        let b = SocConstraint::linear(RVec::zeros(3), 1.0);
        assert!(AllocationConstraints::new(vec![a.clone()], vec![b], vec![]).is_err());
        assert!(AllocationConstraints::new(vec![a], vec![], vec![2]).is_err());
    }
}
