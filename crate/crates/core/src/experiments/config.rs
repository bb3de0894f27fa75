//! Experiment configuration and its flat `key = value` file format.
//!
//! Quantities may carry a unit suffix that is converted at parse time:
//! `dB` for ratios, `dBm`/`dBW`/`W`/`mW` for powers, `dBsm`/`m2` for radar
//! cross sections, `Hz`/`kHz`/`MHz`/`GHz`, `s`/`ms`/`us`, and `m`.
//! Lines starting with `#` are comments.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ScenarioConfig;
use crate::error::{Error, Result};
use crate::otfs::FrameParams;

/// Power-allocation scheme compared in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "sensing-centric-with-x0")]
    SensingCentricWithX0,
    #[serde(rename = "sensing-centric-without-x0")]
    SensingCentricWithoutX0,
    #[serde(rename = "comm-centric")]
    CommCentric,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::SensingCentricWithX0, Scheme::SensingCentricWithoutX0, Scheme::CommCentric];

    pub fn label(&self) -> &'static str {
        match self {
            Scheme::SensingCentricWithX0 => "sensing-centric-with-x0",
            Scheme::SensingCentricWithoutX0 => "sensing-centric-without-x0",
            Scheme::CommCentric => "comm-centric",
        }
    }

    /// Whether the dedicated sensing stream may carry power.
    pub fn uses_sensing_symbol(&self) -> bool {
        !matches!(self, Scheme::SensingCentricWithoutX0)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|scheme| scheme.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "rcs_variance")]
    RcsVariance,
    #[serde(rename = "num_ues")]
    NumUes,
    #[serde(rename = "num_rx_aps")]
    NumRxAps,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::RcsVariance => "rcs_variance",
            SweepParam::NumUes => "num_ues",
            SweepParam::NumRxAps => "num_rx_aps",
        }
    }

    /// Parses one sweep value in the parameter's own units.
    pub fn parse_value(&self, raw: &str) -> Result<f64> {
        match self {
            SweepParam::RcsVariance => parse_quantity(raw, Unit::CrossSection),
            SweepParam::NumUes | SweepParam::NumRxAps => parse_count(raw).map(|c| c as f64),
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rcs_variance" => Ok(SweepParam::RcsVariance),
            "num_ues" => Ok(SweepParam::NumUes),
            "num_rx_aps" => Ok(SweepParam::NumRxAps),
            _ => Err(Error::Config(format!("unknown sweep parameter '{s}' (expected rcs_variance, num_ues or num_rx_aps)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    /// Values in SI units (m² for RCS variance, plain counts otherwise).
    pub values: Vec<f64>,
}

/// Every knob of a Monte Carlo run, in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub area_side: f64,
    pub num_tx_aps: usize,
    pub num_rx_aps: usize,
    pub num_ues: usize,
    pub antennas: usize,
    pub p_max: f64,
    pub gamma_thresh: f64,
    pub carrier_freq: f64,
    pub noise_variance: f64,
    pub rcs_variance: f64,
    pub delay_bins: usize,
    pub doppler_bins: usize,
    pub sample_interval: f64,
    pub paths: usize,
    pub delay_spread_min: f64,
    pub delay_spread_max: f64,
    pub doppler_spread_min: f64,
    pub doppler_spread_max: f64,
    pub reflection_gain: f64,
    pub target_doppler: f64,
    /// RZF loading ψ; `None` means `σ_n²·N_ue`.
    pub psi_reg: Option<f64>,
    pub schemes: Vec<Scheme>,
    pub sweep: Option<Sweep>,
    pub drops: usize,
    pub trials_per_drop: usize,
    pub calibration_trials: usize,
    pub p_fa: f64,
    pub ccp_epsilon: f64,
    pub ccp_max_iters: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            area_side: 500.0,
            num_tx_aps: 8,
            num_rx_aps: 2,
            num_ues: 2,
            antennas: 2,
            p_max: 1.0,
            gamma_thresh: db_to_linear(2.0),
            carrier_freq: 1.9e9,
            noise_variance: dbm_to_watts(-94.0),
            rcs_variance: db_to_linear(-20.0),
            delay_bins: 16,
            doppler_bins: 8,
            sample_interval: 2.08e-6,
            paths: 5,
            delay_spread_min: 2.08e-6,
            delay_spread_max: 10.41e-6,
            doppler_spread_min: 0.0,
            doppler_spread_max: 1.88e3,
            reflection_gain: DEFAULT_REFLECTION_GAIN,
            target_doppler: 0.0,
            psi_reg: None,
            schemes: Scheme::ALL.to_vec(),
            sweep: None,
            drops: 20,
            trials_per_drop: 200,
            calibration_trials: 2000,
            p_fa: 1e-2,
            ccp_epsilon: 1e-6,
            ccp_max_iters: 100,
            seed: 1,
        }
    }
}

/// Large-scale power gain of the target reflection (the same for every
/// transmit/receive AP pair). Chosen so that detection probabilities at
/// σ_rcs² around −20 dBsm sit between 0 and 1 for every scheme.
pub const DEFAULT_REFLECTION_GAIN: f64 = 4e-11;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Ratio,
    Power,
    CrossSection,
    Frequency,
    Time,
    Length,
}

fn parse_quantity(raw: &str, unit: Unit) -> Result<f64> {
    let raw = raw.trim();
    let bytes = raw.as_bytes();
    let is_exponent = |i: usize| {
        matches!(bytes[i], b'e' | b'E')
            && i > 0
            && (bytes[i - 1].is_ascii_digit() || bytes[i - 1] == b'.')
            && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit() || *b == b'-' || *b == b'+')
    };
    let split = (0..bytes.len())
        .find(|&i| bytes[i].is_ascii_alphabetic() && !is_exponent(i))
        .unwrap_or(bytes.len());
    let (number, suffix) = raw.split_at(split);
    let value: f64 = number
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("'{raw}' is not a number")))?;
    if !value.is_finite() {
        return Err(Error::Config(format!("'{raw}' is not finite")));
    }
    let suffix = suffix.trim();
    let converted = match (unit, suffix) {
        (_, "") => value,
        (Unit::Ratio, "dB") => db_to_linear(value),
        (Unit::Power, "W") => value,
        (Unit::Power, "mW") => value * 1e-3,
        (Unit::Power, "dBm") => dbm_to_watts(value),
        (Unit::Power, "dBW") => db_to_linear(value),
        (Unit::CrossSection, "m2") => value,
        (Unit::CrossSection, "dBsm") => db_to_linear(value),
        (Unit::Frequency, "Hz") => value,
        (Unit::Frequency, "kHz") => value * 1e3,
        (Unit::Frequency, "MHz") => value * 1e6,
        (Unit::Frequency, "GHz") => value * 1e9,
        (Unit::Time, "s") => value,
        (Unit::Time, "ms") => value * 1e-3,
        (Unit::Time, "us") => value * 1e-6,
        (Unit::Length, "m") => value,
        _ => return Err(Error::Config(format!("unit '{suffix}' not accepted in '{raw}'"))),
    };
    Ok(converted)
}

fn parse_count(raw: &str) -> Result<usize> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Config(format!("'{}' is not a nonnegative integer", raw.trim())))
}

impl ExperimentConfig {
    /// Parses the text of a config file on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut sweep_param: Option<SweepParam> = None;
        let mut sweep_values: Option<String> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "sweep" => sweep_param = Some(value.parse()?),
                "sweep_values" => sweep_values = Some(value.to_string()),
                _ => config.set(key, value).map_err(|e| match e {
                    Error::Config(msg) => Error::Config(format!("line {}: {msg}", lineno + 1)),
                    other => other,
                })?,
            }
        }
        match (sweep_param, sweep_values) {
            (Some(param), Some(values)) => config.set_sweep(param, &values)?,
            (None, None) => {}
            _ => return Err(Error::Config("'sweep' and 'sweep_values' must be given together".into())),
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Sets one field from its textual value. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "area_side" => self.area_side = parse_quantity(value, Unit::Length)?,
            "num_tx_aps" => self.num_tx_aps = parse_count(value)?,
            "num_rx_aps" => self.num_rx_aps = parse_count(value)?,
            "num_ues" => self.num_ues = parse_count(value)?,
            "antennas" => self.antennas = parse_count(value)?,
            "p_max" => self.p_max = parse_quantity(value, Unit::Power)?,
            "gamma_thresh" => self.gamma_thresh = parse_quantity(value, Unit::Ratio)?,
            "carrier_freq" => self.carrier_freq = parse_quantity(value, Unit::Frequency)?,
            "noise_variance" => self.noise_variance = parse_quantity(value, Unit::Power)?,
            "rcs_variance" => self.rcs_variance = parse_quantity(value, Unit::CrossSection)?,
            "delay_bins" => self.delay_bins = parse_count(value)?,
            "doppler_bins" => self.doppler_bins = parse_count(value)?,
            "sample_interval" => self.sample_interval = parse_quantity(value, Unit::Time)?,
            "paths" => self.paths = parse_count(value)?,
            "delay_spread_min" => self.delay_spread_min = parse_quantity(value, Unit::Time)?,
            "delay_spread_max" => self.delay_spread_max = parse_quantity(value, Unit::Time)?,
            "doppler_spread_min" => self.doppler_spread_min = parse_quantity(value, Unit::Frequency)?,
            "doppler_spread_max" => self.doppler_spread_max = parse_quantity(value, Unit::Frequency)?,
            "reflection_gain" => self.reflection_gain = parse_quantity(value, Unit::Ratio)?,
            "target_doppler" => self.target_doppler = parse_quantity(value, Unit::Frequency)?,
            "psi_reg" => {
                self.psi_reg = match value {
                    "auto" => None,
                    v => Some(parse_quantity(v, Unit::Power)?),
                }
            }
            "schemes" => {
                self.schemes = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<Vec<_>>>()?
            }
            "drops" => self.drops = parse_count(value)?,
            "trials_per_drop" => self.trials_per_drop = parse_count(value)?,
            "calibration_trials" => self.calibration_trials = parse_count(value)?,
            "p_fa" => self.p_fa = parse_quantity(value, Unit::Ratio)?,
            "ccp_epsilon" => self.ccp_epsilon = parse_quantity(value, Unit::Ratio)?,
            "ccp_max_iters" => self.ccp_max_iters = parse_count(value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::Config(format!("'{value}' is not a 64-bit unsigned seed")))?
            }
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Sets the sweep from a comma-separated value list.
    pub fn set_sweep(&mut self, param: SweepParam, values: &str) -> Result<()> {
        let values = values
            .split(',')
            .map(|v| param.parse_value(v))
            .collect::<Result<Vec<_>>>()?;
        self.sweep = Some(Sweep { param, values });
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        let positive = [
            ("area_side", self.area_side),
            ("p_max", self.p_max),
            ("gamma_thresh", self.gamma_thresh),
            ("carrier_freq", self.carrier_freq),
            ("noise_variance", self.noise_variance),
            ("rcs_variance", self.rcs_variance),
            ("sample_interval", self.sample_interval),
            ("ccp_epsilon", self.ccp_epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let counts = [
            ("num_tx_aps", self.num_tx_aps),
            ("num_rx_aps", self.num_rx_aps),
            ("num_ues", self.num_ues),
            ("antennas", self.antennas),
            ("delay_bins", self.delay_bins),
            ("doppler_bins", self.doppler_bins),
            ("paths", self.paths),
            ("drops", self.drops),
            ("trials_per_drop", self.trials_per_drop),
            ("ccp_max_iters", self.ccp_max_iters),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.reflection_gain >= 0.0 && self.reflection_gain.is_finite()) {
            return fail("reflection_gain must be nonnegative");
        }
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return fail("p_fa must lie in (0, 1)");
        }
        if !(0.0 <= self.delay_spread_min && self.delay_spread_min <= self.delay_spread_max) {
            return fail("delay spread must satisfy 0 ≤ min ≤ max");
        }
        if !(0.0 <= self.doppler_spread_min && self.doppler_spread_min <= self.doppler_spread_max) {
            return fail("Doppler spread must satisfy 0 ≤ min ≤ max");
        }
        if let Some(psi) = self.psi_reg {
            if !(psi > 0.0) {
                return fail("psi_reg must be positive");
            }
        }
        if self.schemes.is_empty() {
            return fail("at least one scheme is required");
        }
        let needed = crate::detector::DetectorConfig::min_calibration_trials(self.p_fa).max(100);
        if self.calibration_trials < needed {
            return Err(Error::Config(format!(
                "calibration_trials = {} cannot resolve p_fa = {}; need at least {needed} (smallest resolvable p_fa is {})",
                self.calibration_trials,
                self.p_fa,
                10.0 / self.calibration_trials.max(1) as f64
            )));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return fail("sweep needs at least one value");
            }
            for &v in &sweep.values {
                let ok = match sweep.param {
                    SweepParam::RcsVariance => v > 0.0 && v.is_finite(),
                    SweepParam::NumUes | SweepParam::NumRxAps => v >= 1.0 && v.fract() == 0.0,
                };
                if !ok {
                    return Err(Error::Config(format!("sweep value {v} out of range for {}", sweep.param.name())));
                }
            }
        }
        Ok(())
    }

    /// The same config with the sweep parameter set to `value`.
    pub fn at_sweep_value(&self, param: SweepParam, value: f64) -> Self {
        let mut config = self.clone();
        match param {
            SweepParam::RcsVariance => config.rcs_variance = value,
            SweepParam::NumUes => config.num_ues = value as usize,
            SweepParam::NumRxAps => config.num_rx_aps = value as usize,
        }
        config.sweep = None;
        config
    }

    pub fn frame(&self) -> Result<FrameParams> {
        FrameParams::new(self.delay_bins, self.doppler_bins, self.sample_interval, self.carrier_freq)
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        Ok(ScenarioConfig {
            area_side: self.area_side,
            n_tx: self.num_tx_aps,
            n_rx: self.num_rx_aps,
            n_ue: self.num_ues,
            antennas: self.antennas,
            noise_variance: self.noise_variance,
            rcs_variance: self.rcs_variance,
            paths: self.paths,
            delay_spread: (self.delay_spread_min, self.delay_spread_max),
            doppler_spread: (self.doppler_spread_min, self.doppler_spread_max),
            frame: self.frame()?,
            reflection_gain: self.reflection_gain,
            target_doppler: self.target_doppler,
        })
    }

    pub fn psi(&self) -> f64 {
        self.psi_reg.unwrap_or(self.noise_variance * self.num_ues as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units_convert() {
        assert!((parse_quantity("2 dB", Unit::Ratio).unwrap() - 1.584_893_192_461_113_5).abs() < 1e-15);
        let dbm = parse_quantity("-94 dBm", Unit::Power).unwrap();
        assert!((dbm / 3.981_071_705_534_969e-13 - 1.0).abs() < 1e-12);
        assert!((parse_quantity("-20dBsm", Unit::CrossSection).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(parse_quantity("1.9 GHz", Unit::Frequency).unwrap(), 1.9e9);
        assert!((parse_quantity("2.08 us", Unit::Time).unwrap() - 2.08e-6).abs() < 1e-20);
        assert_eq!(parse_quantity("1e-2", Unit::Ratio).unwrap(), 0.01);
        assert!(parse_quantity("3 dBsm", Unit::Power).is_err());
        assert!(parse_quantity("abc", Unit::Ratio).is_err());
    }

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!((c.num_tx_aps, c.num_rx_aps, c.num_ues, c.antennas), (8, 2, 2, 2));
        assert_eq!((c.delay_bins, c.doppler_bins, c.paths), (16, 8, 5));
        assert_eq!(c.p_max, 1.0);
        assert!((c.psi() - 2.0 * c.noise_variance).abs() < 1e-30);
    }

    #[test]
    fn parse_file_text() {
        let text = "# comment\nnum_ues = 4\nrcs_variance = -26 dBsm\nschemes = comm-centric, sensing-centric-with-x0\n\
                    sweep = num_rx_aps\nsweep_values = 1, 2, 3\nseed = 7\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.num_ues, 4);
        assert!((c.rcs_variance - db_to_linear(-26.0)).abs() < 1e-18);
        assert_eq!(c.schemes, vec![Scheme::CommCentric, Scheme::SensingCentricWithX0]);
        assert_eq!(c.sweep, Some(Sweep { param: SweepParam::NumRxAps, values: vec![1.0, 2.0, 3.0] }));
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn parse_rejects_bad_input() {
        for text in [
            "unknown_key = 1",
            "num_ues = -1",
            "num_ues",
            "p_fa = 2",
            "sweep = num_ues",
            "sweep = rcs_variance\nsweep_values = 0 m2",
            "sweep = num_ues\nsweep_values = 1.5",
            "calibration_trials = 50",
            "schemes = nope",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn sweep_override() {
        let c = ExperimentConfig::default();
        let d = c.at_sweep_value(SweepParam::NumUes, 6.0);
        assert_eq!(d.num_ues, 6);
        assert!(d.sweep.is_none());
        assert_eq!(c.at_sweep_value(SweepParam::RcsVariance, 0.5).rcs_variance, 0.5);
    }

    #[test]
    fn scheme_labels_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.label().parse::<Scheme>().unwrap(), s);
        }
        assert!(!Scheme::SensingCentricWithoutX0.uses_sensing_symbol());
    }
}
