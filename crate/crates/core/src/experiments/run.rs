//! Monte Carlo drops and sweeps.
//!
//! A drop draws one geometry, one channel realization and one set of frames,
//! then runs every configured scheme on them. Each scheme's detector sees the
//! same calibration and detection noise sub-streams, so scheme differences
//! within a drop come from the power allocation alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{linear_to_db, ExperimentConfig, Scheme};
use crate::channel::{build_target_links, generate_scenario, sample_ue_channel, TargetLink, UeChannel};
use crate::detector::{calibrate_threshold, estimate_pd, DetectorConfig, Maprt, PdEstimate};
use crate::error::{Error, Result};
use crate::linalg::RVec;
use crate::optimizer::{
    comm_centric_baseline, power_gains, sensing_centric_allocation, total_power, AllocationConstraints, CcpOptions,
};
use crate::otfs::generate_dd_frame;
use crate::precoding::PrecoderSet;
use crate::signal::{
    assemble_all, build_omega, psi_matrix, sensing_snr, sinr_terms, ue_sinr, SinrTerms, SqrtPowerVector, TransmitFrames,
};

// Sub-stream identifiers inside one drop.
const STREAM_CHANNEL: u64 = 0;
const STREAM_CALIBRATION: u64 = 1;
const STREAM_DETECTION: u64 = 2;

/// Random stream `(seed, drop, purpose)`; independent of execution order.
pub fn drop_rng(seed: u64, drop_index: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((drop_index as u64) << 8) | purpose);
    rng
}

/// Result of one scheme on one drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeRecord {
    pub scheme: Scheme,
    pub eta: Vec<f64>,
    pub sinr: Vec<f64>,
    /// `min_u SINR_u / γ`.
    pub min_sinr_margin: f64,
    pub sensing_snr: f64,
    pub total_power: f64,
    pub ccp_iterations: usize,
    pub threshold: f64,
    pub pd: PdEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SchemeOutcome {
    Feasible(SchemeRecord),
    /// The drop could not be served; the message names the cause.
    Infeasible { scheme: Scheme, reason: String },
}

impl SchemeOutcome {
    pub fn scheme(&self) -> Scheme {
        match self {
            SchemeOutcome::Feasible(r) => r.scheme,
            SchemeOutcome::Infeasible { scheme, .. } => *scheme,
        }
    }

    pub fn record(&self) -> Option<&SchemeRecord> {
        match self {
            SchemeOutcome::Feasible(r) => Some(r),
            SchemeOutcome::Infeasible { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropRecord {
    pub drop_index: usize,
    pub outcomes: Vec<SchemeOutcome>,
}

impl DropRecord {
    pub fn outcome(&self, scheme: Scheme) -> Option<&SchemeOutcome> {
        self.outcomes.iter().find(|o| o.scheme() == scheme)
    }
}

/// Channels, precoders and frames shared by every scheme of a drop.
pub struct DropInstance {
    pub channels: Vec<UeChannel>,
    pub precoders: PrecoderSet,
    pub frames: TransmitFrames,
    pub links: Vec<Vec<TargetLink>>,
    pub terms: SinrTerms,
    pub gains: Vec<RVec>,
    pub frame_len: usize,
}

impl DropInstance {
    pub fn generate(config: &ExperimentConfig, drop_index: usize) -> Result<Self> {
        let mut rng = drop_rng(config.seed, drop_index, STREAM_CHANNEL);
        let scenario = generate_scenario(&config.scenario_config()?, &mut rng)?;
        let channels = (0..scenario.n_ue())
            .map(|u| sample_ue_channel(&scenario, u, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let precoders = PrecoderSet::build(&channels, &scenario.tx_steering(), config.psi())?;
        let dd: Vec<_> = (0..precoders.n_streams()).map(|_| generate_dd_frame(&scenario.frame, &mut rng)).collect();
        let frames = TransmitFrames::from_dd(&dd, &scenario.frame)?;
        let links = build_target_links(&scenario)?;
        let terms = sinr_terms(&channels, &precoders, &frames)?;
        let gains = (0..precoders.n_tx).map(|k| power_gains(&precoders, k)).collect();
        Ok(Self { channels, precoders, frames, links, terms, gains, frame_len: scenario.frame.len() })
    }

    pub fn constraints(&self, config: &ExperimentConfig, scheme: Scheme) -> Result<AllocationConstraints> {
        AllocationConstraints::build(
            &self.terms,
            &self.precoders,
            config.gamma_thresh,
            config.noise_variance,
            self.frame_len,
            config.p_max,
            scheme.uses_sensing_symbol(),
        )
    }

    /// Power allocation of `scheme`, with the CCP iteration count (0 for the baseline).
    pub fn allocate(&self, config: &ExperimentConfig, scheme: Scheme) -> Result<(SqrtPowerVector, usize)> {
        let constraints = self.constraints(config, scheme)?;
        match scheme {
            Scheme::CommCentric => Ok((comm_centric_baseline(&constraints, &self.gains)?, 0)),
            Scheme::SensingCentricWithX0 | Scheme::SensingCentricWithoutX0 => {
                let psi = psi_matrix(&self.precoders, &self.frames, &self.links, config.rcs_variance)?;
                let options = CcpOptions { epsilon: config.ccp_epsilon, max_iters: config.ccp_max_iters };
                let out = sensing_centric_allocation(&psi, &constraints, &self.gains, &options)?;
                Ok((out.eta, out.iterations))
            }
        }
    }

    fn evaluate(&self, config: &ExperimentConfig, drop_index: usize, scheme: Scheme) -> Result<SchemeRecord> {
        let (eta, ccp_iterations) = self.allocate(config, scheme)?;
        let sinr = ue_sinr(&self.terms, &eta, config.noise_variance, self.frame_len);
        let min_sinr = sinr.iter().copied().fold(f64::INFINITY, f64::min);
        let psi = psi_matrix(&self.precoders, &self.frames, &self.links, config.rcs_variance)?;
        let snr = sensing_snr(&psi, &eta, config.antennas, self.frame_len, self.links.len(), config.noise_variance);

        let transmit = assemble_all(&self.precoders, &self.frames, &eta)?;
        let omega = build_omega(&self.links, &transmit, self.frame_len)?;
        let detector = Maprt::new(omega, config.noise_variance, config.rcs_variance)?;
        let det_config = DetectorConfig {
            noise_variance: config.noise_variance,
            rcs_variance: config.rcs_variance,
            p_fa: config.p_fa,
            calibration_trials: config.calibration_trials,
        };
        let threshold = calibrate_threshold(&detector, &det_config, &mut drop_rng(config.seed, drop_index, STREAM_CALIBRATION))?;
        let pd = estimate_pd(
            &detector,
            threshold,
            config.noise_variance,
            config.rcs_variance,
            config.trials_per_drop,
            &mut drop_rng(config.seed, drop_index, STREAM_DETECTION),
        )?;
        Ok(SchemeRecord {
            scheme,
            eta: eta.as_vector().iter().copied().collect(),
            sinr,
            min_sinr_margin: min_sinr / config.gamma_thresh,
            sensing_snr: snr,
            total_power: total_power(&eta, &self.gains),
            ccp_iterations,
            threshold,
            pd,
        })
    }
}

fn is_per_drop(err: &Error) -> bool {
    matches!(
        err,
        Error::Infeasible { .. }
            | Error::InfeasibleConstraint(_)
            | Error::InfeasiblePrecoder { .. }
            | Error::NumericalFailure(_)
            | Error::InnerSolve { .. }
    )
}

/// Runs every configured scheme on drop `drop_index`. Infeasible or
/// numerically failed allocations are recorded, not propagated; only
/// configuration-level errors abort.
pub fn run_drop(config: &ExperimentConfig, drop_index: usize) -> Result<DropRecord> {
    let instance = match DropInstance::generate(config, drop_index) {
        Ok(instance) => instance,
        Err(e) if is_per_drop(&e) => {
            let outcomes = config
                .schemes
                .iter()
                .map(|&scheme| SchemeOutcome::Infeasible { scheme, reason: e.to_string() })
                .collect();
            return Ok(DropRecord { drop_index, outcomes });
        }
        Err(e) => return Err(e),
    };
    let mut outcomes = Vec::with_capacity(config.schemes.len());
    for &scheme in &config.schemes {
        outcomes.push(match instance.evaluate(config, drop_index, scheme) {
            Ok(record) => SchemeOutcome::Feasible(record),
            Err(e) if is_per_drop(&e) => SchemeOutcome::Infeasible { scheme, reason: e.to_string() },
            Err(e) => return Err(e),
        });
    }
    Ok(DropRecord { drop_index, outcomes })
}

/// All drops of one configuration, evaluated in parallel and returned in drop order.
pub fn run_drops(config: &ExperimentConfig) -> Result<Vec<DropRecord>> {
    config.validate()?;
    (0..config.drops).into_par_iter().map(|d| run_drop(config, d)).collect()
}

/// One aggregated line of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub scheme: Scheme,
    /// Pooled detection probability; `None` when every drop was infeasible.
    pub pd: Option<f64>,
    pub pd_ci_low: Option<f64>,
    pub pd_ci_high: Option<f64>,
    pub mean_sensing_snr_db: Option<f64>,
    pub mean_min_sinr_margin_db: Option<f64>,
    pub drops_used: usize,
    pub drops_infeasible: usize,
    pub seed: u64,
}

/// Pools the feasible drops of `scheme`: detections and trials are summed,
/// so the result does not depend on drop order.
pub fn aggregate(records: &[DropRecord], scheme: Scheme, sweep_value: f64, seed: u64) -> ResultRow {
    let used: Vec<&SchemeRecord> = records
        .iter()
        .filter_map(|d| d.outcome(scheme).and_then(SchemeOutcome::record))
        .collect();
    let infeasible = records.iter().filter(|d| matches!(d.outcome(scheme), Some(SchemeOutcome::Infeasible { .. }))).count();
    if used.is_empty() {
        return ResultRow {
            sweep_value,
            scheme,
            pd: None,
            pd_ci_low: None,
            pd_ci_high: None,
            mean_sensing_snr_db: None,
            mean_min_sinr_margin_db: None,
            drops_used: 0,
            drops_infeasible: infeasible,
            seed,
        };
    }
    let detections = used.iter().map(|r| r.pd.detections).sum();
    let trials = used.iter().map(|r| r.pd.trials).sum();
    let pooled = PdEstimate::from_counts(detections, trials);
    let n = used.len() as f64;
    // order-independent means: sort before summing
    let mean_db = |values: Vec<f64>| {
        let mut values = values;
        values.sort_by(f64::total_cmp);
        values.iter().sum::<f64>() / n
    };
    ResultRow {
        sweep_value,
        scheme,
        pd: Some(pooled.pd),
        pd_ci_low: Some(pooled.ci_low),
        pd_ci_high: Some(pooled.ci_high),
        mean_sensing_snr_db: Some(mean_db(used.iter().map(|r| linear_to_db(r.sensing_snr)).collect())),
        mean_min_sinr_margin_db: Some(mean_db(used.iter().map(|r| linear_to_db(r.min_sinr_margin)).collect())),
        drops_used: used.len(),
        drops_infeasible: infeasible,
        seed,
    }
}

/// Runs the configured sweep and aggregates each (value, scheme) pair. Rows
/// come sorted by sweep value, then scheme order. Without a sweep the single
/// row per scheme reports the RCS variance as its sweep value.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let points: Vec<(f64, ExperimentConfig)> = match &config.sweep {
        Some(sweep) => {
            let mut values = sweep.values.clone();
            values.sort_by(f64::total_cmp);
            values.dedup();
            values.into_iter().map(|v| (v, config.at_sweep_value(sweep.param, v))).collect()
        }
        None => vec![(config.rcs_variance, config.clone())],
    };
    let mut rows = Vec::new();
    for (value, point) in points {
        let records = run_drops(&point)?;
        for &scheme in &config.schemes {
            rows.push(aggregate(&records, scheme, value, config.seed));
        }
    }
    Ok(rows)
}
