//! Experiment runner behind the command-line tool: presets, key-value config
//! files, sweeps, CSV tables and slope fits.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::benchmarks::{simulate_relays, RelayConfig, RelayEstimates};
use crate::channel::{dbm_to_watts, thermal_noise_dbm, Combining, NetworkConfig, User};
use crate::closedform::{
    energy_total, ergodic_rate_v, ergodic_rate_w_closed, ergodic_rate_w_quad, moment_match, moment_match_user,
    outage_prob, outage_prob_asymptotic, outage_prob_no_direct, outage_thresholds, BoundCase, EnergyModel,
    ThetaPolicy,
};
use crate::error::{Error, Result};
use crate::montecarlo::{simulate_grid, EstimateWithCI, LinkEstimates, MonteCarloConfig};
use crate::specfun::QuadratureSpec;

pub const ASYMPTOTIC_MAX_TERMS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig2,
    Fig3,
    Fig4,
    Fig5a,
    Fig5b,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 10] = [
        Preset::Fig2,
        Preset::Fig3,
        Preset::Fig4,
        Preset::Fig5a,
        Preset::Fig5b,
        Preset::Fig6,
        Preset::Fig7,
        Preset::Fig8,
        Preset::Fig9,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5a => "fig5a",
            Preset::Fig5b => "fig5b",
            Preset::Fig6 => "fig6",
            Preset::Fig7 => "fig7",
            Preset::Fig8 => "fig8",
            Preset::Fig9 => "fig9",
            Preset::Custom => "custom",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::Fig2 => "outage of user W vs transmit power, N in {1, 2, 3}",
            Preset::Fig3 => "outage vs transmit power for W in {2, 3, 4} users, alpha = 3",
            Preset::Fig4 => "outage vs transmit power for fading shape m in {1, 2, 3}",
            Preset::Fig5a => "ergodic rate of user W vs transmit power, with and without RIS",
            Preset::Fig5b => "ergodic rate of user v vs transmit power, with and without RIS",
            Preset::Fig6 => "NOMA vs OMA spectral efficiency, m = 3, N in {4, 8}",
            Preset::Fig7 => "RIS-NOMA vs FD/HD relay throughput vs N, no direct link",
            Preset::Fig8 => "spectral efficiency vs transmit power, with and without RIS",
            Preset::Fig9 => "energy efficiency vs N for p in {10, 20, 30} dBm",
            Preset::Custom => "user-defined sweep from a config file",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown preset '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    SnrDbm,
    NRis,
    Users,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SnrDbm => "snr_dbm",
            SweepAxis::NRis => "n_ris",
            SweepAxis::Users => "users",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr_dbm" => Ok(SweepAxis::SnrDbm),
            "n_ris" => Ok(SweepAxis::NRis),
            "users" => Ok(SweepAxis::Users),
            _ => Err(Error::Parse(format!("unknown sweep axis '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    OpWorst,
    OpBest,
    OpAsym,
    OpSim,
    RateWWorst,
    RateWBest,
    RateWSim,
    RateV,
    RateVSim,
    Oma,
    Se,
    Ee,
    FdRelay,
    HdRelay,
    DiversityFit,
    SlopeFit,
}

impl Output {
    pub const ALL: [Output; 16] = [
        Output::OpWorst,
        Output::OpBest,
        Output::OpAsym,
        Output::OpSim,
        Output::RateWWorst,
        Output::RateWBest,
        Output::RateWSim,
        Output::RateV,
        Output::RateVSim,
        Output::Oma,
        Output::Se,
        Output::Ee,
        Output::FdRelay,
        Output::HdRelay,
        Output::DiversityFit,
        Output::SlopeFit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Output::OpWorst => "op_worst",
            Output::OpBest => "op_best",
            Output::OpAsym => "op_asym",
            Output::OpSim => "op_sim",
            Output::RateWWorst => "rate_W_worst",
            Output::RateWBest => "rate_W_best",
            Output::RateWSim => "rate_W_sim",
            Output::RateV => "rate_v",
            Output::RateVSim => "rate_v_sim",
            Output::Oma => "oma",
            Output::Se => "se",
            Output::Ee => "ee",
            Output::FdRelay => "fd_relay",
            Output::HdRelay => "hd_relay",
            Output::DiversityFit => "diversity_fit",
            Output::SlopeFit => "slope_fit",
        }
    }

    fn needs_link_sim(self) -> bool {
        matches!(
            self,
            Output::OpSim | Output::RateWSim | Output::RateVSim | Output::Oma | Output::Se | Output::Ee
        )
    }

    fn needs_relay_sim(self) -> bool {
        matches!(self, Output::FdRelay | Output::HdRelay)
    }
}

impl FromStr for Output {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Output::ALL
            .into_iter()
            .find(|o| o.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown output '{s}'")))
    }
}

/// Everything needed to evaluate one curve family at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: NetworkConfig,
    /// Transmit power used when the sweep axis is not the power.
    pub snr_dbm: f64,
    pub relay: RelayConfig,
    pub energy: EnergyModel,
    pub theta: ThetaPolicy,
    pub quad: QuadratureSpec,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            snr_dbm: 30.0,
            relay: RelayConfig::default(),
            energy: EnergyModel::default(),
            theta: ThetaPolicy::Average,
            quad: QuadratureSpec::default(),
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    match value.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        v => v
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("{key}: expected a number, got '{value}'"))),
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("{key}: expected a nonnegative integer, got '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Parse(format!("{key}: expected true/false, got '{value}'"))),
    }
}

impl Scenario {
    /// Applies one `key = value` setting. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase();
        let net = &mut self.network;
        let k = key.as_str();
        match k {
            "n_ris" => net.n_ris = parse_usize(k, value)?,
            "n_users" => net.n_users = parse_usize(k, value)?,
            "v_index" => net.v_index = parse_usize(k, value)?,
            "m" => {
                let m = parse_f64(k, value)?;
                net.m1 = m;
                net.m_w = m;
                net.m_v = m;
            }
            "m1" => net.m1 = parse_f64(k, value)?,
            "m_w" => net.m_w = parse_f64(k, value)?,
            "m_v" => net.m_v = parse_f64(k, value)?,
            "d1" => net.d1 = parse_f64(k, value)?,
            "d2_w" => net.d2_w = parse_f64(k, value)?,
            "d2_v" => net.d2_v = parse_f64(k, value)?,
            "d3_w" => net.d3_w = parse_f64(k, value)?,
            "d3_v" => net.d3_v = parse_f64(k, value)?,
            "alpha" => {
                let a = parse_f64(k, value)?;
                net.alpha_l = a;
                net.alpha_n = a;
            }
            "alpha_l" => net.alpha_l = parse_f64(k, value)?,
            "alpha_n" => net.alpha_n = parse_f64(k, value)?,
            "a_v_sq" => net.a_v_sq = parse_f64(k, value)?,
            "a_w_sq" => net.a_w_sq = parse_f64(k, value)?,
            "rate_w" => net.rate_w = parse_f64(k, value)?,
            "rate_v" => net.rate_v = parse_f64(k, value)?,
            "ref_loss_db" => net.ref_loss_db = parse_f64(k, value)?,
            "bandwidth_hz" => {
                net.bandwidth_hz = parse_f64(k, value)?;
                net.noise_dbm = thermal_noise_dbm(net.bandwidth_hz);
            }
            "noise_dbm" => net.noise_dbm = parse_f64(k, value)?,
            "direct_link" => net.direct_link = parse_bool(k, value)?,
            "v_aligned" => net.v_aligned = parse_bool(k, value)?,
            "combining" => {
                net.combining = match value.trim() {
                    "power_sum" => Combining::PowerSum,
                    "coherent" => Combining::Coherent,
                    other => {
                        return Err(Error::Parse(format!(
                            "combining: expected power_sum or coherent, got '{other}'"
                        )))
                    }
                }
            }
            "snr_dbm" => self.snr_dbm = parse_f64(k, value)?,
            "eps_h" => self.relay.eps_h = parse_f64(k, value)?,
            "relay_power_offset_db" => self.relay.relay_power_offset_db = parse_f64(k, value)?,
            "m_relay" => self.relay.m_relay = parse_f64(k, value)?,
            "p_bs_static" => self.energy.p_bs_static = parse_f64(k, value)?,
            "eps_b" => self.energy.eps_b = parse_f64(k, value)?,
            "p_user" => self.energy.p_user = parse_f64(k, value)?,
            "p_ris_ctrl" => self.energy.p_ris_ctrl = parse_f64(k, value)?,
            "theta_policy" => {
                let v = value.trim();
                self.theta = if v == "average" {
                    ThetaPolicy::Average
                } else if let Some(t) = v.strip_prefix("fixed:") {
                    ThetaPolicy::Fixed(parse_f64(k, t)?)
                } else {
                    return Err(Error::Parse(format!(
                        "theta_policy: expected 'average' or 'fixed:<value>', got '{v}'"
                    )));
                }
            }
            "abs_tol" => self.quad.abs_tol = parse_f64(k, value)?,
            "rel_tol" => self.quad.rel_tol = parse_f64(k, value)?,
            "max_subdivisions" => self.quad.max_subdivisions = parse_usize(k, value)?,
            _ => return Err(Error::Parse(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.relay.validate()?;
        self.energy.validate()?;
        self.quad.validate()?;
        if !self.snr_dbm.is_finite() {
            return Err(Error::InvalidConfig("snr_dbm must be finite".into()));
        }
        Ok(())
    }
}

/// One curve of a preset: a label and the settings that distinguish it.
#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub label: String,
    pub settings: Vec<(String, String)>,
}

impl Family {
    fn new(label: &str, settings: &[(&str, &str)]) -> Self {
        Self {
            label: label.to_string(),
            settings: settings.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub sweep_axis: SweepAxis,
    pub grid: Vec<f64>,
    pub outputs: Vec<Output>,
    pub mc: MonteCarloConfig,
    pub base: Scenario,
    /// User settings applied on top of the preset base, before family settings.
    pub overrides: Vec<(String, String)>,
    pub families: Vec<Family>,
}

fn range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// Parses `a, b, c` or `start:stop:step`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let start = parse_f64("grid", parts[0])?;
        let stop = parse_f64("grid", parts[1])?;
        let step = parse_f64("grid", parts[2])?;
        if !(step > 0.0) || stop < start {
            return Err(Error::Parse(format!("grid: bad range '{text}'")));
        }
        return Ok(range(start, stop, step));
    }
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_f64("grid", s))
        .collect()
}

pub fn parse_outputs(text: &str) -> Result<Vec<Output>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Output::from_str)
        .collect()
}

const DEFAULT_SEED: u64 = 20_200_601;

impl ExperimentSpec {
    pub fn from_preset(preset: Preset) -> Self {
        use Output::*;
        let snr_grid = range(-15.0, 30.0, 5.0);
        let high_grid = range(0.0, 40.0, 2.5);
        let mut spec = ExperimentSpec {
            preset,
            sweep_axis: SweepAxis::SnrDbm,
            grid: snr_grid,
            outputs: vec![OpWorst, OpBest, OpAsym, OpSim, DiversityFit],
            mc: MonteCarloConfig::new(1_000_000, DEFAULT_SEED),
            base: Scenario::default(),
            overrides: Vec::new(),
            families: Vec::new(),
        };
        match preset {
            Preset::Fig2 => {
                spec.outputs = vec![OpWorst, OpBest, OpAsym, OpSim];
                spec.families = (1..=3)
                    .map(|n| Family::new(&format!("N={n}"), &[("n_ris", &n.to_string())]))
                    .collect();
            }
            Preset::Fig3 => {
                spec.grid = range(-15.0, 30.0, 2.5);
                spec.base.network.alpha_l = 3.0;
                spec.base.network.alpha_n = 3.0;
                spec.families = (2..=4)
                    .map(|w| Family::new(&format!("W={w}"), &[("n_users", &w.to_string())]))
                    .collect();
            }
            Preset::Fig4 => {
                spec.grid = range(-15.0, 30.0, 2.5);
                spec.families = (1..=3)
                    .map(|m| Family::new(&format!("m={m}"), &[("m", &m.to_string())]))
                    .collect();
            }
            Preset::Fig5a | Preset::Fig5b | Preset::Fig8 => {
                spec.grid = range(-10.0, 40.0, 2.5);
                spec.families = vec![
                    Family::new("N=0", &[("n_ris", "0")]),
                    Family::new("N=3,m=1", &[("n_ris", "3"), ("m", "1")]),
                    Family::new("N=3,m=3", &[("n_ris", "3"), ("m", "3")]),
                    Family::new("N=10,m=1", &[("n_ris", "10"), ("m", "1")]),
                ];
                spec.outputs = match preset {
                    Preset::Fig5a => vec![RateWWorst, RateWBest, RateWSim, SlopeFit],
                    Preset::Fig5b => vec![RateV, RateVSim, SlopeFit],
                    _ => vec![Se, Oma, SlopeFit],
                };
            }
            Preset::Fig6 => {
                spec.grid = high_grid;
                spec.base.network.m1 = 3.0;
                spec.base.network.m_w = 3.0;
                spec.base.network.m_v = 3.0;
                spec.families = vec![
                    Family::new("N=4", &[("n_ris", "4")]),
                    Family::new("N=8", &[("n_ris", "8")]),
                ];
                spec.outputs = vec![RateWSim, RateVSim, Se, Oma, SlopeFit];
            }
            Preset::Fig7 => {
                spec.sweep_axis = SweepAxis::NRis;
                spec.grid = range(2.0, 40.0, 2.0);
                spec.base.network.m1 = 3.0;
                spec.base.network.m_w = 3.0;
                spec.base.network.m_v = 3.0;
                spec.base.network.alpha_l = 2.5;
                spec.base.network.direct_link = false;
                spec.base.snr_dbm = 0.0;
                spec.mc = MonteCarloConfig::new(200_000, DEFAULT_SEED);
                spec.families = vec![Family::new("p=0dBm", &[])];
                spec.outputs = vec![Se, FdRelay, HdRelay];
            }
            Preset::Fig9 => {
                spec.sweep_axis = SweepAxis::NRis;
                spec.grid = range(2.0, 40.0, 1.0);
                spec.mc = MonteCarloConfig::new(100_000, DEFAULT_SEED);
                spec.families = [10, 20, 30]
                    .iter()
                    .map(|p| Family::new(&format!("p={p}dBm"), &[("snr_dbm", &p.to_string())]))
                    .collect();
                spec.outputs = vec![Ee];
            }
            Preset::Custom => {
                spec.families = vec![Family::new("custom", &[])];
                spec.outputs = Vec::new();
            }
        }
        spec
    }

    /// Applies a `key = value` config text. Experiment keys (`sweep_axis`,
    /// `grid`, `outputs`, `trials`, `seed`, `batch_size`) set the sweep; all
    /// other keys become scenario overrides.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        let mut batch_size = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            match key.as_str() {
                "sweep_axis" => self.sweep_axis = value.parse()?,
                "grid" => self.grid = parse_grid(value)?,
                "outputs" => self.outputs = parse_outputs(value)?,
                "trials" => {
                    let t = parse_usize("trials", value)? as u64;
                    self.mc = MonteCarloConfig::new(t, self.mc.master_seed);
                }
                "seed" => {
                    self.mc.master_seed = value
                        .parse()
                        .map_err(|_| Error::Parse(format!("seed: expected u64, got '{value}'")))?
                }
                "batch_size" => batch_size = Some(parse_usize("batch_size", value)? as u64),
                _ => {
                    // check the key and value now so errors carry the line number
                    let mut probe = self.base.clone();
                    probe
                        .set(&key, value)
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                    self.overrides.push((key, value.to_string()));
                }
            }
        }
        if let Some(b) = batch_size {
            self.mc.batch_size = b;
        }
        Ok(())
    }

    pub fn set_trials(&mut self, trials: u64) {
        self.mc = MonteCarloConfig::new(trials, self.mc.master_seed);
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.mc.master_seed = seed;
    }

    /// Scenario of one family with preset base, overrides and family settings applied.
    pub fn scenario(&self, family: &Family) -> Result<Scenario> {
        let mut s = self.base.clone();
        for (k, v) in self.overrides.iter().chain(&family.settings) {
            s.set(k, v)?;
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.outputs.is_empty() {
            return Err(Error::InvalidConfig("outputs must list at least one metric".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("grid must be nonempty".into()));
        }
        let increasing = self.grid.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.grid.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(Error::InvalidConfig("grid must be strictly monotone".into()));
        }
        if self.grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("grid values must be finite".into()));
        }
        if matches!(self.sweep_axis, SweepAxis::NRis | SweepAxis::Users)
            && self.grid.iter().any(|x| *x < 0.0 || x.fract() != 0.0)
        {
            return Err(Error::InvalidConfig(format!(
                "grid values of axis {} must be nonnegative integers",
                self.sweep_axis.name()
            )));
        }
        if self.families.is_empty() {
            return Err(Error::InvalidConfig("at least one curve family is required".into()));
        }
        self.mc.validate()?;
        for f in &self.families {
            let s = self.scenario(f)?;
            s.validate()
                .map_err(|e| Error::InvalidConfig(format!("family '{}': {e}", f.label)))?;
        }
        Ok(())
    }
}

/// One table row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub metric: String,
    pub value: f64,
    pub std_error: Option<f64>,
    pub case_label: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

pub const CSV_HEADER: [&str; 5] = ["axis_value", "metric", "value", "std_error", "case_label"];

impl SweepResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let se = r.std_error.map(|s| s.to_string()).unwrap_or_default();
            w.write_record([
                r.axis_value.to_string(),
                r.metric.clone(),
                r.value.to_string(),
                se,
                r.case_label.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != CSV_HEADER {
            return Err(Error::Parse(format!("unexpected CSV header {header:?}")));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(Error::Parse(format!("row {}: expected 5 fields", i + 2)));
            }
            let num = |j: usize| -> Result<f64> {
                rec[j]
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: bad number '{}'", i + 2, &rec[j])))
            };
            rows.push(SweepRow {
                axis_value: num(0)?,
                metric: rec[1].to_string(),
                value: num(2)?,
                std_error: if rec[3].is_empty() { None } else { Some(num(3)?) },
                case_label: rec[4].to_string(),
            });
        }
        Ok(SweepResult { rows })
    }

    /// `(axis, value)` pairs of one metric, optionally restricted to a case label.
    pub fn series(&self, metric: &str, case_label: Option<&str>) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric && case_label.is_none_or(|c| r.case_label == c))
            .map(|r| (r.axis_value, r.value))
            .collect()
    }

    pub fn case_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = Vec::new();
        for r in &self.rows {
            if !labels.contains(&r.case_label) {
                labels.push(r.case_label.clone());
            }
        }
        labels
    }

    pub fn value(&self, metric: &str, case_label: &str, axis_value: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.case_label == case_label && r.axis_value == axis_value)
    }
}

fn is_outage_metric(metric: &str) -> bool {
    metric.starts_with("op_")
}

/// Least-squares slope over the top decade of the axis.
///
/// For outage metrics (`op_*`) returns the diversity order: minus the slope
/// of `log10(value)` against `log10(SNR)`, with the axis in dB. Otherwise
/// returns the slope of the value against `log2(SNR)`. Non-positive outage
/// values are skipped. Needs at least 4 points in the window.
pub fn fit_slope(table: &SweepResult, metric: &str, case_label: Option<&str>, axis: SweepAxis) -> Result<f64> {
    let pts = table.series(metric, case_label);
    fit_slope_points(&pts, is_outage_metric(metric), axis)
}

pub fn fit_slope_points(points: &[(f64, f64)], outage: bool, axis: SweepAxis) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Domain("no points to fit".into()));
    }
    // axis → log10 of the linear quantity
    let to_log10 = |a: f64| match axis {
        SweepAxis::SnrDbm => a / 10.0,
        _ => a.log10(),
    };
    let top = points.iter().map(|p| to_log10(p.0)).fold(f64::NEG_INFINITY, f64::max);
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|(a, v)| to_log10(*a) >= top - 1.0 - 1e-12 && (!outage || *v > 0.0))
        .map(|&(a, v)| {
            let lx = to_log10(a);
            if outage {
                (lx, v.log10())
            } else {
                (lx * std::f64::consts::LOG2_10, v)
            }
        })
        .collect();
    if xy.len() < 4 {
        return Err(Error::Domain(format!(
            "slope fit needs at least 4 points in the top decade, got {}",
            xy.len()
        )));
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::Domain("slope fit needs distinct axis values".into()));
    }
    let slope = sxy / sxx;
    Ok(if outage { -slope } else { slope })
}

fn analytic_row(axis: f64, metric: &str, value: f64, label: &str) -> SweepRow {
    SweepRow {
        axis_value: axis,
        metric: metric.to_string(),
        value,
        std_error: None,
        case_label: label.to_string(),
    }
}

fn sim_row(axis: f64, metric: &str, e: EstimateWithCI, scale: f64, label: &str) -> SweepRow {
    SweepRow {
        axis_value: axis,
        metric: metric.to_string(),
        value: e.mean * scale,
        std_error: Some(e.std_error * scale),
        case_label: label.to_string(),
    }
}

struct PointInput<'a> {
    axis: f64,
    scenario: Scenario,
    p_dbm: f64,
    link: Option<&'a LinkEstimates>,
    relay: Option<&'a RelayEstimates>,
}

fn evaluate_point(outputs: &[Output], input: &PointInput, label: &str) -> Result<Vec<SweepRow>> {
    let has = |o: Output| outputs.contains(&o);
    let s = &input.scenario;
    let cfg = &s.network;
    let axis = input.axis;
    let p_tx = dbm_to_watts(input.p_dbm);
    let p = cfg.received_power(p_tx);
    let sigma2 = cfg.noise_watts();
    let w = cfg.n_users;
    let worst = moment_match(cfg, BoundCase::Worst);
    let best = moment_match(cfg, BoundCase::Best);
    let thr = outage_thresholds(cfg, p, sigma2)
        .map_err(|e| Error::InvalidConfig(format!("{label} at axis value {axis}: {e}")))?;
    let consumed = energy_total(&s.energy, p_tx, cfg.n_ris);
    let mut rows = Vec::new();

    if has(Output::OpWorst) {
        rows.push(analytic_row(axis, "op_worst", outage_prob(&worst, &thr, w), label));
    }
    if has(Output::OpBest) {
        rows.push(analytic_row(axis, "op_best", outage_prob(&best, &thr, w), label));
    }
    if has(Output::OpAsym) {
        for g in [&worst, &best] {
            let name = format!("op_asym_{}", g.case.label());
            let v = outage_prob_asymptotic(g, &thr, w, ASYMPTOTIC_MAX_TERMS).value;
            rows.push(analytic_row(axis, &name, v, label));
        }
        if !cfg.direct_link {
            for case in [BoundCase::Worst, BoundCase::Best] {
                let name = format!("op_nodirect_{}", case.label());
                rows.push(analytic_row(axis, &name, outage_prob_no_direct(cfg, &thr, case), label));
            }
        }
    }
    if let Some(l) = input.link {
        if has(Output::OpSim) {
            rows.push(sim_row(axis, "op_sim", l.outage_w, 1.0, label));
        }
    }

    let need_rate_w = has(Output::RateWWorst) || has(Output::Se) || has(Output::Ee);
    let need_rate_w_best = has(Output::RateWBest) || has(Output::Se) || has(Output::Ee);
    let rate_w_worst = if need_rate_w {
        Some(ergodic_rate_w_quad(&worst, cfg, p, sigma2, &s.quad)?)
    } else {
        None
    };
    let rate_w_best = if need_rate_w_best {
        Some(ergodic_rate_w_quad(&best, cfg, p, sigma2, &s.quad)?)
    } else {
        None
    };
    if has(Output::RateWWorst) {
        rows.push(analytic_row(axis, "rate_W_worst", rate_w_worst.unwrap_or_default(), label));
        let cf = ergodic_rate_w_closed(&worst, cfg, p, sigma2)?;
        rows.push(analytic_row(axis, "rate_W_closed_worst", cf.value, label));
    }
    if has(Output::RateWBest) {
        rows.push(analytic_row(axis, "rate_W_best", rate_w_best.unwrap_or_default(), label));
        let cf = ergodic_rate_w_closed(&best, cfg, p, sigma2)?;
        rows.push(analytic_row(axis, "rate_W_closed_best", cf.value, label));
    }
    if let Some(l) = input.link {
        if has(Output::RateWSim) {
            rows.push(sim_row(axis, "rate_W_sim", l.rate_w, 1.0, label));
        }
    }

    let need_rate_v = has(Output::RateV) || has(Output::Se) || has(Output::Ee);
    let (rate_v_worst, rate_v_best) = if need_rate_v {
        let gw = moment_match_user(cfg, User::Weak, BoundCase::Worst);
        let gb = moment_match_user(cfg, User::Weak, BoundCase::Best);
        (
            ergodic_rate_v(&gw, cfg, p, sigma2, s.theta, &s.quad)?,
            ergodic_rate_v(&gb, cfg, p, sigma2, s.theta, &s.quad)?,
        )
    } else {
        (0.0, 0.0)
    };
    if has(Output::RateV) {
        rows.push(analytic_row(axis, "rate_v_worst", rate_v_worst, label));
        rows.push(analytic_row(axis, "rate_v_best", rate_v_best, label));
    }
    if let Some(l) = input.link {
        if has(Output::RateVSim) {
            rows.push(sim_row(axis, "rate_v_sim", l.rate_v, 1.0, label));
        }
        if has(Output::Oma) {
            rows.push(sim_row(axis, "oma_W_sim", l.oma_w, 1.0, label));
            rows.push(sim_row(axis, "oma_v_sim", l.oma_v, 1.0, label));
            rows.push(sim_row(axis, "oma_sim", l.oma_sum_rate, 1.0, label));
        }
    }

    let se_worst = rate_w_worst.unwrap_or_default() + rate_v_worst;
    let se_best = rate_w_best.unwrap_or_default() + rate_v_best;
    if has(Output::Se) {
        rows.push(analytic_row(axis, "se_worst", se_worst, label));
        rows.push(analytic_row(axis, "se_best", se_best, label));
        if let Some(l) = input.link {
            rows.push(sim_row(axis, "se_sim", l.sum_rate, 1.0, label));
        }
    }
    if has(Output::Ee) {
        rows.push(analytic_row(axis, "ee_worst", se_worst / consumed, label));
        rows.push(analytic_row(axis, "ee_best", se_best / consumed, label));
        if let Some(l) = input.link {
            rows.push(sim_row(axis, "ee_sim", l.sum_rate, 1.0 / consumed, label));
        }
    }
    if let Some(r) = input.relay {
        if has(Output::FdRelay) {
            rows.push(analytic_row(axis, "fd_relay", r.fd_throughput(), label));
        }
        if has(Output::HdRelay) {
            rows.push(analytic_row(axis, "hd_relay", r.hd_throughput(), label));
        }
    }
    Ok(rows)
}

fn apply_axis(scenario: &mut Scenario, axis: SweepAxis, value: f64) -> f64 {
    match axis {
        SweepAxis::SnrDbm => value,
        SweepAxis::NRis => {
            scenario.network.n_ris = value as usize;
            scenario.snr_dbm
        }
        SweepAxis::Users => {
            scenario.network.n_users = value as usize;
            scenario.snr_dbm
        }
    }
}

fn run_family(spec: &ExperimentSpec, family: &Family) -> Result<Vec<SweepRow>> {
    let base = spec.scenario(family)?;
    let label = family.label.as_str();
    let link_sim = spec.outputs.iter().any(|o| o.needs_link_sim());
    let relay_sim = spec.outputs.iter().any(|o| o.needs_relay_sim());

    let mut points = Vec::with_capacity(spec.grid.len());
    for &a in &spec.grid {
        let mut s = base.clone();
        let p_dbm = apply_axis(&mut s, spec.sweep_axis, a);
        s.validate()
            .map_err(|e| Error::InvalidConfig(format!("{label} at axis value {a}: {e}")))?;
        points.push((a, s, p_dbm));
    }

    // one Monte Carlo pass covers the whole power grid; other axes need one per point
    let (links, relays): (Vec<Option<LinkEstimates>>, Vec<Option<RelayEstimates>>) = match spec.sweep_axis {
        SweepAxis::SnrDbm => {
            let cfg = &base.network;
            let powers: Vec<f64> = spec.grid.iter().map(|&d| cfg.received_power_dbm(d)).collect();
            let links = if link_sim {
                simulate_grid(cfg, &spec.mc, &powers, cfg.noise_watts())?.into_iter().map(Some).collect()
            } else {
                vec![None; powers.len()]
            };
            let relays = if relay_sim {
                simulate_relays(cfg, &base.relay, &spec.mc, &powers, cfg.noise_watts())?
                    .into_iter()
                    .map(Some)
                    .collect()
            } else {
                vec![None; powers.len()]
            };
            (links, relays)
        }
        _ => {
            let mut links = Vec::with_capacity(points.len());
            let mut relays = Vec::with_capacity(points.len());
            for (_, s, p_dbm) in &points {
                let cfg = &s.network;
                let p = cfg.received_power_dbm(*p_dbm);
                links.push(if link_sim {
                    Some(simulate_grid(cfg, &spec.mc, &[p], cfg.noise_watts())?[0])
                } else {
                    None
                });
                relays.push(if relay_sim {
                    Some(simulate_relays(cfg, &s.relay, &spec.mc, &[p], cfg.noise_watts())?[0])
                } else {
                    None
                });
            }
            (links, relays)
        }
    };

    let per_point: Vec<Vec<SweepRow>> = points
        .into_par_iter()
        .zip(links.par_iter())
        .zip(relays.par_iter())
        .map(|(((axis, scenario, p_dbm), link), relay)| {
            evaluate_point(
                &spec.outputs,
                &PointInput {
                    axis,
                    scenario,
                    p_dbm,
                    link: link.as_ref(),
                    relay: relay.as_ref(),
                },
                label,
            )
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<SweepRow> = per_point.into_iter().flatten().collect();

    let last_axis = spec.grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fits = if spec.sweep_axis == SweepAxis::SnrDbm {
        let family_table = SweepResult { rows: rows.clone() };
        let mut metrics: Vec<String> = Vec::new();
        for r in &rows {
            if !metrics.contains(&r.metric) {
                metrics.push(r.metric.clone());
            }
        }
        let mut fits = Vec::new();
        for m in metrics {
            let wanted = if is_outage_metric(&m) {
                spec.outputs.contains(&Output::DiversityFit)
            } else {
                spec.outputs.contains(&Output::SlopeFit)
            };
            if !wanted {
                continue;
            }
            let prefix = if is_outage_metric(&m) { "diversity_fit_" } else { "slope_fit_" };
            // fits that lack points (e.g. all-zero simulated outage) are skipped
            if let Ok(v) = fit_slope(&family_table, &m, None, SweepAxis::SnrDbm) {
                fits.push(analytic_row(last_axis, &format!("{prefix}{m}"), v, label));
            }
        }
        if spec.outputs.contains(&Output::DiversityFit) {
            for case in [BoundCase::Worst, BoundCase::Best] {
                let k = moment_match(&base.network, case).k;
                let name = format!("diversity_order_{}", case.label());
                fits.push(analytic_row(last_axis, &name, k * base.network.n_users as f64, label));
            }
        }
        fits
    } else {
        Vec::new()
    };
    rows.extend(fits);
    Ok(rows)
}

/// Runs every family of the spec in order on the current rayon pool.
pub fn run(spec: &ExperimentSpec) -> Result<SweepResult> {
    spec.validate()?;
    let mut rows = Vec::new();
    for f in &spec.families {
        rows.extend(run_family(spec, f)?);
    }
    Ok(SweepResult { rows })
}

/// Runs on a dedicated pool of `threads` workers.
pub fn run_with_threads(spec: &ExperimentSpec, threads: usize) -> Result<SweepResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| run(spec))
}

/// Short human-readable digest: first and last value of every curve plus fits.
pub fn summary(spec: &ExperimentSpec, table: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "preset {} | axis {} | {} grid points | {} trials, seed {}\n",
        spec.preset.name(),
        spec.sweep_axis.name(),
        spec.grid.len(),
        spec.mc.trials,
        spec.mc.master_seed
    ));
    for label in table.case_labels() {
        out.push_str(&format!("[{label}]\n"));
        let mut seen: Vec<&str> = Vec::new();
        for r in table.rows.iter().filter(|r| r.case_label == label) {
            if seen.contains(&r.metric.as_str()) {
                continue;
            }
            seen.push(&r.metric);
            let s = table.series(&r.metric, Some(&label));
            let (first, last) = (s[0], s[s.len() - 1]);
            if s.len() == 1 {
                out.push_str(&format!("  {:<24} {:.6e}\n", r.metric, first.1));
            } else {
                out.push_str(&format!(
                    "  {:<24} {:.6e} @ {} .. {:.6e} @ {}\n",
                    r.metric, first.1, first.0, last.1, last.0
                ));
            }
        }
    }
    out
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
