//! Discrete-time model of the gasoil heating loop.
//!
//! Three tanks: the receiving tank (RT) is filled from an unlimited source,
//! its contents are heated portion by portion in the heating tank (HT) and
//! pumped back, and once RT is warm enough it is drained to the collector
//! tank (CT). A downstream consumer empties CT while no internal transfer is
//! running. The controller is a phase machine stepped with explicit Euler.
//!
//! Set-point attacks replace one controller parameter from a start time on.
//! Traces carry three nested label channels: ATTACK (the parameter has been
//! tampered with), DANGER (the process left its nominal envelope) and FAULT
//! (a hard physical limit was hit).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::{TimeSeries, ATTACK, DANGER, FAULT};
use crate::error::{Error, Result};
use crate::rng;

pub const RT_LEVEL: &str = "RT_level";
pub const RT_TEMPERATURE: &str = "RT_temperature";
pub const HT_LEVEL: &str = "HT_level";
pub const HT_TEMPERATURE: &str = "HT_temperature";
pub const INJ_VALVE_ACT: &str = "inj_valve_act";
pub const HEATER_ACT: &str = "heater_act";

/// Output channels, in emission order.
pub const CHANNELS: [&str; 6] = [
    RT_LEVEL,
    RT_TEMPERATURE,
    HT_LEVEL,
    HT_TEMPERATURE,
    INJ_VALVE_ACT,
    HEATER_ACT,
];

/// Upper bound on heating portions per cycle before a configuration is
/// considered unable to finish a cycle.
pub const MAX_PORTIONS_PER_CYCLE: usize = 200;

/// Plant constants. Volumes are in m³, temperatures in °C, times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub rt_capacity: f64,
    pub ht_capacity: f64,
    pub ct_capacity: f64,
    pub max_rt_level_setpoint: f64,
    pub max_ht_temp_setpoint: f64,
    pub pump_rate: f64,
    pub fill_rate: f64,
    /// HT heating rate (°C/s) when HT holds `reference_volume`.
    pub heater_power: f64,
    pub ambient_loss_coeff: f64,
    pub relax_time: f64,
    pub dt: f64,
    pub ambient_temp: f64,
    /// Volume moved into HT per heating portion.
    pub ht_portion: f64,
    pub reference_volume: f64,
    pub ct_outflow_rate: f64,
    /// RT counts as heated once it is within this band below the HT set point.
    pub rt_temp_band: f64,
    /// HT temperature allowed above its set point before DANGER is raised.
    pub ht_temp_margin: f64,
    pub damage_temp: f64,
    /// Relative amplitude bound of the smooth fill-rate perturbation.
    pub fill_noise: f64,
    pub noise_corr_time: f64,
    /// Seconds run from the empty plant and discarded before recording, so
    /// traces start from a plant that has completed a cycle.
    pub warmup: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            rt_capacity: 100.0,
            ht_capacity: 30.0,
            ct_capacity: 400.0,
            max_rt_level_setpoint: 80.0,
            max_ht_temp_setpoint: 60.0,
            pump_rate: 0.1,
            fill_rate: 0.04,
            heater_power: 0.05,
            ambient_loss_coeff: 2e-6,
            relax_time: 100.0,
            dt: 1.0,
            ambient_temp: 20.0,
            ht_portion: 20.0,
            reference_volume: 20.0,
            ct_outflow_rate: 0.02,
            rt_temp_band: 1.0,
            ht_temp_margin: 1.0,
            damage_temp: 100.0,
            fill_noise: 0.02,
            noise_corr_time: 600.0,
            warmup: 13_000.0,
        }
    }
}

macro_rules! param_fields {
    ($mac:ident) => {
        $mac!(
            rt_capacity,
            ht_capacity,
            ct_capacity,
            max_rt_level_setpoint,
            max_ht_temp_setpoint,
            pump_rate,
            fill_rate,
            heater_power,
            ambient_loss_coeff,
            relax_time,
            dt,
            ambient_temp,
            ht_portion,
            reference_volume,
            ct_outflow_rate,
            rt_temp_band,
            ht_temp_margin,
            damage_temp,
            fill_noise,
            noise_corr_time,
            warmup
        )
    };
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rt_capacity", self.rt_capacity),
            ("ht_capacity", self.ht_capacity),
            ("ct_capacity", self.ct_capacity),
            ("pump_rate", self.pump_rate),
            ("fill_rate", self.fill_rate),
            ("heater_power", self.heater_power),
            ("dt", self.dt),
            ("ht_portion", self.ht_portion),
            ("reference_volume", self.reference_volume),
            ("noise_corr_time", self.noise_corr_time),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("ambient_loss_coeff", self.ambient_loss_coeff),
            ("relax_time", self.relax_time),
            ("ct_outflow_rate", self.ct_outflow_rate),
            ("rt_temp_band", self.rt_temp_band),
            ("ht_temp_margin", self.ht_temp_margin),
            ("warmup", self.warmup),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be ≥ 0, got {v}")));
            }
        }
        if !(self.max_rt_level_setpoint > 0.0 && self.max_rt_level_setpoint <= self.rt_capacity) {
            return Err(Error::InvalidParam(format!(
                "max_rt_level_setpoint {} must lie in (0, rt_capacity = {}]",
                self.max_rt_level_setpoint, self.rt_capacity
            )));
        }
        if self.max_ht_temp_setpoint <= self.ambient_temp {
            return Err(Error::InvalidParam(
                "max_ht_temp_setpoint must exceed ambient_temp".into(),
            ));
        }
        if self.damage_temp <= self.max_ht_temp_setpoint + self.ht_temp_margin {
            return Err(Error::InvalidParam(
                "damage_temp must exceed max_ht_temp_setpoint + ht_temp_margin".into(),
            ));
        }
        if self.ht_portion > self.ht_capacity || self.ht_portion > self.max_rt_level_setpoint {
            return Err(Error::InvalidParam(
                "ht_portion must fit in HT and in a filled RT".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.fill_noise) {
            return Err(Error::InvalidParam("fill_noise must lie in [0, 0.5)".into()));
        }
        if self.ambient_loss_coeff * self.dt >= 1.0 {
            return Err(Error::InvalidParam("ambient_loss_coeff·dt must be < 1".into()));
        }
        Ok(())
    }

    /// Parses a flat `key = value` file body. Unknown keys are rejected;
    /// missing keys keep their defaults. `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut map = parse_kv(text)?;
        let params = Self::default().with_overrides(&mut map)?;
        if let Some(key) = map.keys().next() {
            return Err(Error::InvalidParam(format!("unknown plant parameter {key:?}")));
        }
        Ok(params)
    }

    /// Applies and removes every recognised key of `map`.
    pub fn with_overrides(mut self, map: &mut BTreeMap<String, String>) -> Result<Self> {
        macro_rules! take {
            ($($f:ident),*) => {
                $(
                    if let Some(v) = map.remove(stringify!($f)) {
                        self.$f = v.parse().map_err(|_| {
                            Error::InvalidParam(format!("{}: not a number: {v:?}", stringify!($f)))
                        })?;
                    }
                )*
            };
        }
        param_fields!(take);
        self.validate()?;
        Ok(self)
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        macro_rules! emit {
            ($($f:ident),*) => {
                $( out.push_str(&format!("{} = {}\n", stringify!($f), self.$f)); )*
            };
        }
        param_fields!(emit);
        out
    }

    pub fn to_kv_map(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        macro_rules! emit {
            ($($f:ident),*) => {
                $( out.insert(stringify!($f).to_string(), self.$f.to_string()); )*
            };
        }
        param_fields!(emit);
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(&text)
    }

    fn rt_target_temp(&self) -> f64 {
        self.max_ht_temp_setpoint - self.rt_temp_band
    }

    /// Length of one noiseless fill-heat-drain cycle starting from an empty
    /// plant, in seconds.
    pub fn nominal_cycle_duration(&self) -> Result<f64> {
        self.validate()?;
        let mut state = PlantState::initial(self);
        let mut left_filling = false;
        let limit = self.step_budget();
        for k in 0..limit {
            state = step(&state, self, None, k as f64 * self.dt);
            if state.phase != Phase::Filling {
                left_filling = true;
            } else if left_filling {
                return Ok((k + 1) as f64 * self.dt);
            }
        }
        Err(Error::InvalidParam(format!(
            "plant does not complete a cycle within {limit} steps"
        )))
    }

    fn step_budget(&self) -> usize {
        let portion_time = 2.0 * self.ht_portion / self.pump_rate
            + self.relax_time
            + (self.max_ht_temp_setpoint - self.ambient_temp) / self.heater_power
                * (self.ht_portion / self.reference_volume);
        let total = self.rt_capacity / self.fill_rate
            + 2.0 * self.rt_capacity / self.pump_rate
            + MAX_PORTIONS_PER_CYCLE as f64 * portion_time;
        (total / self.dt).ceil() as usize + 1
    }
}

pub(crate) fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidParam(format!("line {}: expected key = value, got {raw:?}", i + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Filling,
    PumpToHT,
    Heating,
    PumpToRT,
    Relaxing,
    DrainToCT,
}

impl Phase {
    pub fn is_internal_transfer(self) -> bool {
        matches!(self, Phase::PumpToHT | Phase::PumpToRT | Phase::DrainToCT)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub rt_level: f64,
    pub ht_level: f64,
    pub ct_level: f64,
    pub rt_temp: f64,
    pub ht_temp: f64,
    pub phase: Phase,
    pub phase_timer: f64,
    pub inj_valve_act: u8,
    pub heater_act: u8,
    /// Multiplier on the nominal fill rate for the next step.
    pub fill_factor: f64,
}

impl PlantState {
    /// Empty RT and HT at ambient temperature, filling.
    pub fn initial(params: &PlantParams) -> Self {
        PlantState {
            rt_level: 0.0,
            ht_level: 0.0,
            ct_level: 0.0,
            rt_temp: params.ambient_temp,
            ht_temp: params.ambient_temp,
            phase: Phase::Filling,
            phase_timer: 0.0,
            inj_valve_act: 1,
            heater_act: 0,
            fill_factor: 1.0,
        }
    }

    pub fn total_volume(&self) -> f64 {
        self.rt_level + self.ht_level + self.ct_level
    }

    fn channel_values(&self) -> [f64; 6] {
        [
            self.rt_level,
            self.rt_temp,
            self.ht_level,
            self.ht_temp,
            f64::from(self.inj_valve_act),
            f64::from(self.heater_act),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackKind {
    MaxRtLevel,
    MaxHtTemp,
    PumpFreq,
    RelaxTime,
}

impl AttackKind {
    pub fn nominal(self, params: &PlantParams) -> f64 {
        match self {
            AttackKind::MaxRtLevel => params.max_rt_level_setpoint,
            AttackKind::MaxHtTemp => params.max_ht_temp_setpoint,
            AttackKind::PumpFreq => params.pump_rate,
            AttackKind::RelaxTime => params.relax_time,
        }
    }

    fn apply(self, params: &mut PlantParams, value: f64) {
        match self {
            AttackKind::MaxRtLevel => params.max_rt_level_setpoint = value,
            AttackKind::MaxHtTemp => params.max_ht_temp_setpoint = value,
            AttackKind::PumpFreq => params.pump_rate = value,
            AttackKind::RelaxTime => params.relax_time = value,
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::MaxRtLevel => "max-rt-level",
            AttackKind::MaxHtTemp => "max-ht-temp",
            AttackKind::PumpFreq => "pump-freq",
            AttackKind::RelaxTime => "relax-time",
        })
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max-rt-level" => Ok(AttackKind::MaxRtLevel),
            "max-ht-temp" => Ok(AttackKind::MaxHtTemp),
            "pump-freq" => Ok(AttackKind::PumpFreq),
            "relax-time" => Ok(AttackKind::RelaxTime),
            other => Err(Error::InvalidParam(format!("unknown attack kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub start_time: f64,
    pub hacked_value: f64,
}

impl AttackSpec {
    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start_time
    }

    fn validate(&self, params: &PlantParams, horizon: f64) -> Result<()> {
        if !(self.start_time >= 0.0 && self.start_time < horizon) {
            return Err(Error::InvalidParam(format!(
                "attack start {} outside [0, {horizon})",
                self.start_time
            )));
        }
        if self.hacked_value == self.kind.nominal(params) {
            return Err(Error::InvalidParam(
                "hacked value equals the nominal parameter".into(),
            ));
        }
        if !(self.hacked_value > 0.0 && self.hacked_value.is_finite()) {
            return Err(Error::InvalidParam("hacked value must be positive".into()));
        }
        Ok(())
    }
}

fn mix(level: f64, temp: f64, added: f64, added_temp: f64) -> f64 {
    let total = level + added;
    if total <= 0.0 {
        added_temp
    } else {
        (level * temp + added * added_temp) / total
    }
}

/// Advances the plant by one time step. An active attack overrides its
/// target parameter before the dynamics run; phase transitions are decided
/// on the post-step state.
pub fn step(
    state: &PlantState,
    params: &PlantParams,
    attack: Option<&AttackSpec>,
    t: f64,
) -> PlantState {
    let mut p = params.clone();
    if let Some(a) = attack.filter(|a| a.is_active(t)) {
        a.kind.apply(&mut p, a.hacked_value);
    }
    let dt = p.dt;
    let amb = p.ambient_temp;
    let mut s = state.clone();
    s.phase_timer += dt;

    // heat losses to ambient
    s.rt_temp -= p.ambient_loss_coeff * (s.rt_temp - amb) * dt;
    s.ht_temp -= p.ambient_loss_coeff * (s.ht_temp - amb) * dt;

    match s.phase {
        Phase::Filling => {
            let inflow = p.fill_rate * s.fill_factor * dt;
            let room = (p.max_rt_level_setpoint - s.rt_level).max(0.0);
            let added = inflow.min(room);
            s.rt_temp = mix(s.rt_level, s.rt_temp, added, amb);
            // anything beyond capacity spills
            s.rt_level = (s.rt_level + added).min(p.rt_capacity);
        }
        Phase::PumpToHT => {
            let q = (p.pump_rate * dt)
                .min(s.rt_level)
                .min((p.ht_portion - s.ht_level).max(0.0))
                .min(p.ht_capacity - s.ht_level);
            s.ht_temp = mix(s.ht_level, s.ht_temp, q, s.rt_temp);
            s.rt_level -= q;
            s.ht_level += q;
        }
        Phase::Heating => {
            if s.ht_level > 0.0 {
                s.ht_temp += f64::from(s.heater_act)
                    * p.heater_power
                    * (p.reference_volume / s.ht_level)
                    * dt;
            }
        }
        Phase::PumpToRT => {
            let q = (p.pump_rate * dt)
                .min(s.ht_level)
                .min(p.rt_capacity - s.rt_level);
            s.rt_temp = mix(s.rt_level, s.rt_temp, q, s.ht_temp);
            s.ht_level -= q;
            s.rt_level += q;
        }
        Phase::Relaxing => {}
        Phase::DrainToCT => {
            let q = (p.pump_rate * dt)
                .min(s.rt_level)
                .min(p.ct_capacity - s.ct_level);
            s.rt_level -= q;
            s.ct_level += q;
        }
    }
    if !s.phase.is_internal_transfer() {
        s.ct_level -= (p.ct_outflow_rate * dt).min(s.ct_level);
    }

    s.rt_level = s.rt_level.clamp(0.0, p.rt_capacity);
    s.ht_level = s.ht_level.clamp(0.0, p.ht_capacity);
    s.ct_level = s.ct_level.clamp(0.0, p.ct_capacity);
    s.rt_temp = s.rt_temp.max(amb);
    s.ht_temp = s.ht_temp.max(amb);

    let next = match s.phase {
        Phase::Filling if s.rt_level >= p.max_rt_level_setpoint => Some(Phase::PumpToHT),
        Phase::PumpToHT if s.ht_level >= p.ht_portion || s.rt_level <= 0.0 => {
            Some(Phase::Heating)
        }
        Phase::Heating if s.ht_temp >= p.max_ht_temp_setpoint || s.ht_level <= 0.0 => {
            Some(Phase::PumpToRT)
        }
        Phase::PumpToRT if s.ht_level <= 0.0 => Some(Phase::Relaxing),
        Phase::Relaxing if s.phase_timer >= p.relax_time => {
            if s.rt_temp >= p.rt_target_temp() {
                Some(Phase::DrainToCT)
            } else {
                Some(Phase::PumpToHT)
            }
        }
        Phase::DrainToCT if s.rt_level <= 0.0 => Some(Phase::Filling),
        _ => None,
    };
    if let Some(phase) = next {
        s.phase = phase;
        s.phase_timer = 0.0;
    }
    s.inj_valve_act = u8::from(s.phase == Phase::Filling);
    s.heater_act = u8::from(s.phase == Phase::Heating);

    debug_assert!(s.rt_level >= 0.0 && s.rt_level <= p.rt_capacity);
    debug_assert!(s.ht_level >= 0.0 && s.ht_level <= p.ht_capacity);
    debug_assert!(s.ct_level >= 0.0 && s.ct_level <= p.ct_capacity);
    s
}

/// Whether the state lies outside what the nominal controller can produce.
pub fn exceeds_envelope(state: &PlantState, nominal: &PlantParams) -> bool {
    let eps = 1e-9;
    state.rt_level > nominal.max_rt_level_setpoint * (1.0 + eps)
        || state.ht_level > nominal.ht_portion * (1.0 + eps)
        || state.ht_temp > nominal.max_ht_temp_setpoint + nominal.ht_temp_margin
}

/// Overflow of any tank or HT at damage temperature.
pub fn hits_hard_limit(state: &PlantState, params: &PlantParams) -> bool {
    state.rt_level >= params.rt_capacity
        || state.ht_level >= params.ht_capacity
        || state.ct_level >= params.ct_capacity
        || state.ht_temp >= params.damage_temp
}

/// Plant channels plus the three label channels, on one time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrace {
    pub series: TimeSeries,
    pub attack: Vec<bool>,
    pub danger: Vec<bool>,
    pub fault: Vec<bool>,
}

impl LabeledTrace {
    /// Plant channels followed by ATTACK, DANGER, FAULT as 0/1 columns.
    pub fn to_series(&self) -> TimeSeries {
        let to_f = |v: &Vec<bool>| v.iter().map(|&b| f64::from(u8::from(b))).collect();
        let labels = TimeSeries::from_columns(
            vec![ATTACK.into(), DANGER.into(), FAULT.into()],
            &[to_f(&self.attack), to_f(&self.danger), to_f(&self.fault)],
            self.series.dt(),
        )
        .expect("label columns match the trace length");
        self.series.hstack(&labels).expect("same length")
    }

    /// Splits label channels back out. Missing label columns read as zero.
    pub fn from_series<S: AsRef<str>>(series: &TimeSeries, channels: &[S]) -> Result<Self> {
        let read = |name: &str| {
            series
                .channel(name)
                .map(|c| c.iter().map(|&v| v != 0.0).collect())
                .unwrap_or_else(|| vec![false; series.len()])
        };
        Ok(LabeledTrace {
            series: series.select(channels)?,
            attack: read(ATTACK),
            danger: read(DANGER),
            fault: read(FAULT),
        })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn decimate(&self, factor: usize) -> Result<Self> {
        let pick = |v: &Vec<bool>| v.iter().step_by(factor).copied().collect();
        Ok(LabeledTrace {
            series: self.series.decimate(factor)?,
            attack: pick(&self.attack),
            danger: pick(&self.danger),
            fault: pick(&self.fault),
        })
    }
}

/// Runs the plant from an empty start, discards `params.warmup` seconds,
/// then records `horizon` seconds. Attack start times count from the
/// first recorded sample.
pub fn simulate(
    params: &PlantParams,
    horizon: f64,
    attack: Option<&AttackSpec>,
    seed: u64,
) -> Result<LabeledTrace> {
    params.validate()?;
    let cycle = params.nominal_cycle_duration()?;
    if !(horizon >= cycle) {
        return Err(Error::InvalidParam(format!(
            "horizon {horizon} s is shorter than one plant cycle ({cycle} s)"
        )));
    }
    if let Some(a) = attack {
        a.validate(params, horizon)?;
    }

    let n = (horizon / params.dt).floor() as usize;
    let mut noise_rng = rng::substream(seed, rng::SIM);
    let rho = (-params.dt / params.noise_corr_time).exp();
    let innovation = (1.0 - rho * rho).sqrt();
    let mut latent: f64 = noise_rng.sample(StandardNormal);

    let mut values = Vec::with_capacity(n * CHANNELS.len());
    let mut attack_lbl = Vec::with_capacity(n);
    let mut danger_lbl = Vec::with_capacity(n);
    let mut fault_lbl = Vec::with_capacity(n);
    let (mut danger, mut fault) = (false, false);

    let mut state = PlantState::initial(params);
    for k in 0..(params.warmup / params.dt).floor() as usize {
        state.fill_factor = 1.0 + params.fill_noise * latent.tanh();
        state = step(&state, params, None, k as f64 * params.dt);
        let xi: f64 = noise_rng.sample(StandardNormal);
        latent = rho * latent + innovation * xi;
    }
    for k in 0..n {
        let t = k as f64 * params.dt;
        state.fill_factor = 1.0 + params.fill_noise * latent.tanh();

        let active = attack.is_some_and(|a| a.is_active(t));
        danger = danger || (active && exceeds_envelope(&state, params));
        fault = fault || (danger && hits_hard_limit(&state, params));
        attack_lbl.push(active);
        danger_lbl.push(danger);
        fault_lbl.push(fault);
        values.extend_from_slice(&state.channel_values());

        state = step(&state, params, attack, t);
        let xi: f64 = noise_rng.sample(StandardNormal);
        latent = rho * latent + innovation * xi;
    }

    let names = CHANNELS.iter().map(|s| s.to_string()).collect();
    Ok(LabeledTrace {
        series: TimeSeries::from_flat(names, values, params.dt)?,
        attack: attack_lbl,
        danger: danger_lbl,
        fault: fault_lbl,
    })
}

/// A family of attacked runs: start times and hacked values are spread
/// over their ranges with a low-discrepancy sequence, one seed per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSweep {
    pub kind: AttackKind,
    pub count: usize,
    pub horizon: f64,
    pub start_range: (f64, f64),
    pub value_range: (f64, f64),
    pub base_seed: u64,
}

impl AttackSweep {
    /// `(seed, attack)` for every run.
    pub fn runs(&self) -> Vec<(u64, AttackSpec)> {
        const GOLDEN: f64 = 0.618_033_988_749_894_9;
        (0..self.count)
            .map(|k| {
                let fs = (k as f64 + 0.5) / self.count as f64;
                let fv = (0.5 + k as f64 * GOLDEN).fract();
                let lerp = |(lo, hi): (f64, f64), f: f64| lo + (hi - lo) * f;
                let spec = AttackSpec {
                    kind: self.kind,
                    start_time: lerp(self.start_range, fs).floor(),
                    hacked_value: lerp(self.value_range, fv),
                };
                (self.base_seed + 1 + k as u64, spec)
            })
            .collect()
    }

    pub fn simulate(&self, params: &PlantParams) -> Result<Vec<(u64, AttackSpec, LabeledTrace)>> {
        self.runs()
            .into_iter()
            .map(|(seed, spec)| Ok((seed, spec, simulate(params, self.horizon, Some(&spec), seed)?)))
            .collect()
    }
}
