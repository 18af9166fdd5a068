//! Experiment configuration, training and evaluation recipes, and result files.
//!
//! Configuration is flat `key = value` text. Blank lines and `#` comments are
//! ignored, unknown keys are rejected, and missing keys keep their defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::agent::{ActionId, ExplorationSchedule, QuantileTable, StateCode};
use crate::channel::{Building, Point3, SceneGeometry};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::sim::{
    calibrate_power_threshold, dbm_to_watts, run_episode, EpisodeLog, MobilityModel, Policy,
    SimConfig, TargetPolicy,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MobilityKind {
    Anchored,
    ReflectedWalk,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Scenario parameters. `p_max` and `noise_power` are derived from the
    /// dBm fields below.
    pub sim: SimConfig,
    pub scene: SceneGeometry,
    pub p_max_dbm: f64,
    pub noise_power_dbm: f64,
    pub mobility_kind: MobilityKind,
    pub arena_half_width: f64,
    pub q_count: usize,
    pub train_slots: u64,
    pub train_episode_slots: u64,
    pub exploration_start: f64,
    pub exploration_end: f64,
    /// Fraction of the training budget over which ε decays.
    pub exploration_decay_fraction: f64,
    pub calibration_slots: u64,
    pub altitude_sweep: Vec<f64>,
    pub pmax_sweep_dbm: Vec<f64>,
    pub eval_slots: u64,
    pub seeds: Vec<u64>,
    pub train_seed: u64,
    pub query_state: Option<StateCode>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut cfg = ExperimentConfig {
            sim: SimConfig::default(),
            scene: SceneGeometry::default(),
            p_max_dbm: 40.0,
            noise_power_dbm: -102.0,
            mobility_kind: MobilityKind::Anchored,
            arena_half_width: 20.0,
            q_count: 40,
            train_slots: 50_000,
            train_episode_slots: 2_000,
            exploration_start: 0.3,
            exploration_end: 0.02,
            exploration_decay_fraction: 0.5,
            calibration_slots: 200,
            altitude_sweep: vec![20.0, 30.0, 40.0, 50.0, 60.0],
            pmax_sweep_dbm: vec![20.0, 25.0, 30.0, 35.0, 40.0],
            eval_slots: 600,
            seeds: (0..5).collect(),
            train_seed: 12_345,
            query_state: None,
            output_dir: PathBuf::from("out"),
        };
        cfg.sync();
        cfg
    }
}

fn invalid(field: &str, value: &str) -> Error {
    Error::field(field, format!("cannot parse {value:?}"))
}

fn parse_f64(field: &str, v: &str) -> Result<f64> {
    match v {
        "inf" => Ok(f64::INFINITY),
        _ => v.parse().map_err(|_| invalid(field, v)),
    }
}

fn parse_int<T: std::str::FromStr>(field: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| invalid(field, v))
}

fn parse_list<T>(field: &str, v: &str, item: fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| item(field, s.trim())).collect()
}

fn parse_point(field: &str, v: &str) -> Result<Point3> {
    let xs = parse_list(field, v, parse_f64)?;
    match xs.as_slice() {
        [x, y, z] => Ok(Point3::new(*x, *y, *z)),
        _ => Err(Error::field(field, "expected x,y,z")),
    }
}

fn parse_pair(field: &str, v: &str) -> Result<(f64, f64)> {
    let xs = parse_list(field, v, parse_f64)?;
    match xs.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::field(field, "expected two comma-separated numbers")),
    }
}

fn parse_bool(field: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(invalid(field, v)),
    }
}

fn fmt_f(x: f64) -> String {
    if x.is_infinite() && x > 0.0 {
        "inf".into()
    } else {
        format!("{x}")
    }
}

fn fmt_list<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn fmt_point(p: &Point3) -> String {
    format!("{},{},{}", p.x, p.y, p.z)
}

const DEFAULT_BUILDING: (f64, f64, f64, f64, f64) = (10.0, 0.0, 4.0, 40.0, 18.0);

impl ExperimentConfig {
    /// Recomputes derived fields.
    fn sync(&mut self) {
        self.sim.p_max = dbm_to_watts(self.p_max_dbm);
        self.sim.noise_power = dbm_to_watts(self.noise_power_dbm);
        self.sim.mobility = match self.mobility_kind {
            MobilityKind::Anchored => MobilityModel::Anchored,
            MobilityKind::ReflectedWalk => MobilityModel::ReflectedWalk {
                half_width: self.arena_half_width,
            },
        };
    }

    fn building_mut(&mut self) -> &mut Building {
        let (cx, cy, ex, ey, h) = DEFAULT_BUILDING;
        self.scene.building.get_or_insert(Building {
            center: Point3::new(cx, cy, 0.0),
            extents: (ex, ey),
            height: h,
        })
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let s = &mut self.sim;
        match key {
            "slot_duration" => s.slot_duration = parse_f64(key, v)?,
            "rate_threshold" => s.rate_threshold = parse_f64(key, v)?,
            "power_threshold" => {
                s.power_threshold = match v {
                    "auto" => None,
                    _ => Some(parse_f64(key, v)?),
                }
            }
            "uav_speed" => s.uav_speed = parse_f64(key, v)?,
            "p_hover" => s.p_hover = parse_f64(key, v)?,
            "p_move" => s.p_move = parse_f64(key, v)?,
            "p_reflect" => s.p_reflect = parse_f64(key, v)?,
            "initial_energy" => s.initial_energy = parse_f64(key, v)?,
            "ue_count" => s.ue_count = parse_int(key, v)?,
            "bs_antennas" => s.bs_antennas = parse_int(key, v)?,
            "ir_elements" => s.ir_elements = parse_int(key, v)?,
            "carrier_frequency" => s.carrier_frequency = parse_f64(key, v)?,
            "bandwidth" => s.bandwidth = parse_f64(key, v)?,
            "noise_power_dbm" => self.noise_power_dbm = parse_f64(key, v)?,
            "p_max_dbm" => self.p_max_dbm = parse_f64(key, v)?,
            "min_altitude" => s.min_altitude = parse_f64(key, v)?,
            "max_altitude" => s.max_altitude = parse_f64(key, v)?,
            "initial_uav" => s.initial_uav = parse_point(key, v)?,
            "static_ir" => s.static_ir = parse_point(key, v)?,
            "ue_center" => s.ue_center = parse_pair(key, v)?,
            "ue_variance" => s.ue_variance = parse_f64(key, v)?,
            "ue_step_variance" => s.ue_step_variance = parse_f64(key, v)?,
            "ue_mobility" => {
                self.mobility_kind = match v {
                    "anchored" => MobilityKind::Anchored,
                    "reflected_walk" => MobilityKind::ReflectedWalk,
                    _ => return Err(invalid(key, v)),
                }
            }
            "arena_half_width" => self.arena_half_width = parse_f64(key, v)?,
            "los_exponent" => s.path_loss.los_exponent = parse_f64(key, v)?,
            "nlos_exponent" => s.path_loss.nlos_exponent = parse_f64(key, v)?,
            "nlos_penalty_db" => s.path_loss.nlos_penalty_db = parse_f64(key, v)?,
            "building_loss_db" => s.path_loss.building_loss_db = parse_f64(key, v)?,
            "rician_k_db" => s.path_loss.rician_k_db = parse_f64(key, v)?,
            "backhaul_rician_k_db" => s.path_loss.backhaul_rician_k_db = parse_f64(key, v)?,
            "discount" => s.discount = parse_f64(key, v)?,
            "target_policy" => {
                s.target_policy = match v {
                    "greedy" => TargetPolicy::Greedy,
                    "on_policy" => TargetPolicy::OnPolicy,
                    _ => return Err(invalid(key, v)),
                }
            }
            "optimizer_outer_tolerance" => s.opt_outer_tolerance = parse_f64(key, v)?,
            "optimizer_max_outer" => s.opt_max_outer = parse_int(key, v)?,
            "optimizer_inner_tolerance" => s.opt_inner_tolerance = parse_f64(key, v)?,
            "optimizer_max_inner" => s.opt_max_inner = parse_int(key, v)?,
            "optimizer_single_user_starts" => s.opt_single_user_starts = parse_bool(key, v)?,
            "bs_position" => self.scene.bs_position = parse_point(key, v)?,
            "building" => {
                if parse_bool(key, v)? {
                    self.building_mut();
                } else {
                    self.scene.building = None;
                }
            }
            "building_center" => {
                let (x, y) = parse_pair(key, v)?;
                self.building_mut().center = Point3::new(x, y, 0.0);
            }
            "building_extents" => self.building_mut().extents = parse_pair(key, v)?,
            "building_height" => self.building_mut().height = parse_f64(key, v)?,
            "ue_blockage_probability" => self.scene.ue_blockage_probability = parse_f64(key, v)?,
            "blocker_elevation_deg" => self.scene.blocker_elevation_deg = parse_pair(key, v)?,
            "blockage_correlation" => self.scene.blockage_correlation = parse_f64(key, v)?,
            "q_count" => self.q_count = parse_int(key, v)?,
            "train_slots" => self.train_slots = parse_int(key, v)?,
            "train_episode_slots" => self.train_episode_slots = parse_int(key, v)?,
            "exploration_start" => self.exploration_start = parse_f64(key, v)?,
            "exploration_end" => self.exploration_end = parse_f64(key, v)?,
            "exploration_decay_fraction" => self.exploration_decay_fraction = parse_f64(key, v)?,
            "calibration_slots" => self.calibration_slots = parse_int(key, v)?,
            "altitude_sweep" => self.altitude_sweep = parse_list(key, v, parse_f64)?,
            "pmax_sweep_dbm" => self.pmax_sweep_dbm = parse_list(key, v, parse_f64)?,
            "eval_slots" => self.eval_slots = parse_int(key, v)?,
            "seeds" => self.seeds = parse_list(key, v, parse_int::<u64>)?,
            "train_seed" => self.train_seed = parse_int(key, v)?,
            "query_state" => {
                self.query_state = match v {
                    "zero" => None,
                    _ => Some(StateCode::parse(v).map_err(|_| invalid(key, v))?),
                }
            }
            "output_dir" => self.output_dir = PathBuf::from(v),
            _ => return Err(Error::field(key, "unknown key")),
        }
        Ok(())
    }

    /// All keys with their current values, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.sim;
        let mut out = vec![
            ("slot_duration", fmt_f(s.slot_duration)),
            ("rate_threshold", fmt_f(s.rate_threshold)),
            (
                "power_threshold",
                s.power_threshold.map_or("auto".into(), fmt_f),
            ),
            ("uav_speed", fmt_f(s.uav_speed)),
            ("p_hover", fmt_f(s.p_hover)),
            ("p_move", fmt_f(s.p_move)),
            ("p_reflect", fmt_f(s.p_reflect)),
            ("initial_energy", fmt_f(s.initial_energy)),
            ("ue_count", s.ue_count.to_string()),
            ("bs_antennas", s.bs_antennas.to_string()),
            ("ir_elements", s.ir_elements.to_string()),
            ("carrier_frequency", fmt_f(s.carrier_frequency)),
            ("bandwidth", fmt_f(s.bandwidth)),
            ("noise_power_dbm", fmt_f(self.noise_power_dbm)),
            ("p_max_dbm", fmt_f(self.p_max_dbm)),
            ("min_altitude", fmt_f(s.min_altitude)),
            ("max_altitude", fmt_f(s.max_altitude)),
            ("initial_uav", fmt_point(&s.initial_uav)),
            ("static_ir", fmt_point(&s.static_ir)),
            ("ue_center", format!("{},{}", s.ue_center.0, s.ue_center.1)),
            ("ue_variance", fmt_f(s.ue_variance)),
            ("ue_step_variance", fmt_f(s.ue_step_variance)),
            (
                "ue_mobility",
                match self.mobility_kind {
                    MobilityKind::Anchored => "anchored".into(),
                    MobilityKind::ReflectedWalk => "reflected_walk".into(),
                },
            ),
            ("arena_half_width", fmt_f(self.arena_half_width)),
            ("los_exponent", fmt_f(s.path_loss.los_exponent)),
            ("nlos_exponent", fmt_f(s.path_loss.nlos_exponent)),
            ("nlos_penalty_db", fmt_f(s.path_loss.nlos_penalty_db)),
            ("building_loss_db", fmt_f(s.path_loss.building_loss_db)),
            ("rician_k_db", fmt_f(s.path_loss.rician_k_db)),
            ("backhaul_rician_k_db", fmt_f(s.path_loss.backhaul_rician_k_db)),
            ("discount", fmt_f(s.discount)),
            (
                "target_policy",
                match s.target_policy {
                    TargetPolicy::Greedy => "greedy".into(),
                    TargetPolicy::OnPolicy => "on_policy".into(),
                },
            ),
            ("optimizer_outer_tolerance", fmt_f(s.opt_outer_tolerance)),
            ("optimizer_max_outer", s.opt_max_outer.to_string()),
            ("optimizer_inner_tolerance", fmt_f(s.opt_inner_tolerance)),
            ("optimizer_max_inner", s.opt_max_inner.to_string()),
            ("optimizer_single_user_starts", s.opt_single_user_starts.to_string()),
            ("bs_position", fmt_point(&self.scene.bs_position)),
            ("building", self.scene.building.is_some().to_string()),
        ];
        if let Some(b) = &self.scene.building {
            out.push(("building_center", format!("{},{}", b.center.x, b.center.y)));
            out.push(("building_extents", format!("{},{}", b.extents.0, b.extents.1)));
            out.push(("building_height", fmt_f(b.height)));
        }
        let (lo, hi) = self.scene.blocker_elevation_deg;
        out.extend([
            ("ue_blockage_probability", fmt_f(self.scene.ue_blockage_probability)),
            ("blocker_elevation_deg", format!("{lo},{hi}")),
            ("blockage_correlation", fmt_f(self.scene.blockage_correlation)),
            ("q_count", self.q_count.to_string()),
            ("train_slots", self.train_slots.to_string()),
            ("train_episode_slots", self.train_episode_slots.to_string()),
            ("exploration_start", fmt_f(self.exploration_start)),
            ("exploration_end", fmt_f(self.exploration_end)),
            ("exploration_decay_fraction", fmt_f(self.exploration_decay_fraction)),
            ("calibration_slots", self.calibration_slots.to_string()),
            ("altitude_sweep", fmt_list(&self.altitude_sweep)),
            ("pmax_sweep_dbm", fmt_list(&self.pmax_sweep_dbm)),
            ("eval_slots", self.eval_slots.to_string()),
            ("seeds", fmt_list(&self.seeds)),
            ("train_seed", self.train_seed.to_string()),
            (
                "query_state",
                self.query_state.map_or("zero".into(), |s| s.to_string()),
            ),
            ("output_dir", self.output_dir.display().to_string()),
        ]);
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                reason: format!("expected key = value, got {raw:?}"),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.sync();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.scene.validate()?;
        if self.q_count == 0 {
            return Err(Error::field("q_count", "must be >= 1"));
        }
        if self.train_episode_slots == 0 {
            return Err(Error::field("train_episode_slots", "must be >= 1"));
        }
        for (name, v) in [
            ("exploration_start", self.exploration_start),
            ("exploration_end", self.exploration_end),
            ("exploration_decay_fraction", self.exploration_decay_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::field(name, "must lie in [0, 1]"));
            }
        }
        if self.altitude_sweep.is_empty() {
            return Err(Error::field("altitude_sweep", "must not be empty"));
        }
        if let Some(h) = self
            .altitude_sweep
            .iter()
            .find(|h| !(self.sim.min_altitude..=self.sim.max_altitude).contains(*h))
        {
            return Err(Error::field(
                "altitude_sweep",
                format!("{h} lies outside [min_altitude, max_altitude]"),
            ));
        }
        if self.pmax_sweep_dbm.is_empty() {
            return Err(Error::field("pmax_sweep_dbm", "must not be empty"));
        }
        if self.pmax_sweep_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::field("pmax_sweep_dbm", "values must be finite"));
        }
        if self.seeds.is_empty() {
            return Err(Error::field("seeds", "must not be empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::field("seeds", "must be distinct"));
        }
        if self.eval_slots == 0 {
            return Err(Error::field("eval_slots", "must be >= 1"));
        }
        if let Some(s) = self.query_state {
            if s.len() != self.sim.ue_count {
                return Err(Error::field("query_state", "needs one bit per UE"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical text with `output_dir` left out, first 16 hex digits.
    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.entries() {
            if k != "output_dir" {
                hasher.update(format!("{k}={v}\n").as_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn with_p_max_dbm(&self, dbm: f64) -> Self {
        let mut c = self.clone();
        c.p_max_dbm = dbm;
        c.sync();
        c
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train_seed = seed;
        self
    }

    pub fn exploration(&self) -> ExplorationSchedule {
        ExplorationSchedule {
            start: self.exploration_start,
            end: self.exploration_end,
            decay_slots: (self.train_slots as f64 * self.exploration_decay_fraction) as u64,
        }
    }

    pub fn query_state(&self) -> StateCode {
        self.query_state
            .unwrap_or_else(|| StateCode::zero(self.sim.ue_count))
    }
}

/// `p = 10^((dBm − 30)/10)` watts.
pub fn dbm_to_w(dbm: f64) -> f64 {
    dbm_to_watts(dbm)
}

/// Resolves the state threshold for the given config: the configured value,
/// or the static-reflector median calibrated with `train_seed`.
pub fn resolve_power_threshold(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.sim.power_threshold {
        Some(t) => Ok(t),
        None => calibrate_power_threshold(
            &cfg.sim,
            &cfg.scene,
            cfg.calibration_slots,
            cfg.train_seed,
        ),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub table: QuantileTable,
    pub power_threshold: f64,
    pub episodes: u64,
    pub slots: u64,
    pub mean_episode_rate: Vec<f64>,
}

fn episode_seed(base: u64, index: u64) -> u64 {
    use rand::Rng;
    stream_rng(base, Stream::Instance, index).random()
}

/// Trains a fresh table for `train_slots` slots. Energy is refilled between
/// episodes; each episode is capped at `train_episode_slots`.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let tau = resolve_power_threshold(cfg)?;
    let mut table = QuantileTable::new(cfg.sim.ue_count, cfg.q_count, cfg.sim.discount)?;
    let exploration = cfg.exploration();
    let mut sim = cfg.sim.clone();
    sim.power_threshold = Some(tau);
    let mut done = 0u64;
    let mut episodes = 0u64;
    let mut rates = Vec::new();
    while done < cfg.train_slots {
        sim.max_slots = Some(cfg.train_episode_slots.min(cfg.train_slots - done));
        let mut policy = Policy::DrlLearning {
            table: &mut table,
            exploration,
            slot_offset: done,
        };
        let log = run_episode(&sim, &cfg.scene, &mut policy, episode_seed(cfg.train_seed, episodes))?;
        episodes += 1;
        if log.slots() == 0 {
            break;
        }
        done += log.slots();
        rates.push(log.average_rate());
    }
    Ok(TrainOutcome {
        table,
        power_threshold: tau,
        episodes,
        slots: done,
        mean_episode_rate: rates,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Drl,
    NonLearning,
    Static,
    Direct,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Drl => "drl",
            PolicyKind::NonLearning => "nonlearning",
            PolicyKind::Static => "static",
            PolicyKind::Direct => "direct",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub policy: PolicyKind,
    pub sweep_value: f64,
    pub seed: u64,
    pub los_probability: f64,
    pub avg_rate_bps: f64,
    pub energy_used_j: f64,
    pub slots: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub policy: PolicyKind,
    pub sweep_value: f64,
    pub los_probability: f64,
    pub avg_rate_bps: f64,
    pub episodes: usize,
}

/// Per-episode rows for one sweep experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    /// CSV name of the swept quantity (`altitude_m` or `pmax_dbm`).
    pub sweep_name: String,
    pub config_hash: String,
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "policy,{},seed,los_probability,avg_rate_bps,energy_used_j,slots,config_hash\n",
            self.sweep_name
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.policy.name(),
                r.sweep_value,
                r.seed,
                r.los_probability,
                r.avg_rate_bps,
                r.energy_used_j,
                r.slots,
                self.config_hash
            );
        }
        out
    }

    /// Seed-averaged metrics per (policy, sweep value), in first-seen order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out: Vec<SummaryRow> = Vec::new();
        for r in &self.rows {
            match out
                .iter_mut()
                .find(|s| s.policy == r.policy && s.sweep_value == r.sweep_value)
            {
                Some(s) => {
                    s.los_probability += r.los_probability;
                    s.avg_rate_bps += r.avg_rate_bps;
                    s.episodes += 1;
                }
                None => out.push(SummaryRow {
                    policy: r.policy,
                    sweep_value: r.sweep_value,
                    los_probability: r.los_probability,
                    avg_rate_bps: r.avg_rate_bps,
                    episodes: 1,
                }),
            }
        }
        for s in &mut out {
            s.los_probability /= s.episodes as f64;
            s.avg_rate_bps /= s.episodes as f64;
        }
        out
    }

    pub fn mean(&self, policy: PolicyKind, sweep_value: f64) -> Option<SummaryRow> {
        self.summary()
            .into_iter()
            .find(|s| s.policy == policy && s.sweep_value == sweep_value)
    }

    pub fn summary_json(&self, cfg: &ExperimentConfig) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            sweep: &'a str,
            config_hash: &'a str,
            config: std::collections::BTreeMap<&'static str, String>,
            results: Vec<SummaryRow>,
        }
        let config = cfg
            .entries()
            .into_iter()
            .filter(|(k, _)| *k != "output_dir")
            .collect();
        Ok(serde_json::to_string_pretty(&Summary {
            sweep: &self.sweep_name,
            config_hash: &self.config_hash,
            config,
            results: self.summary(),
        })?)
    }
}

fn row_from_log(policy: PolicyKind, sweep_value: f64, seed: u64, log: &EpisodeLog) -> MetricsRow {
    MetricsRow {
        policy,
        sweep_value,
        seed,
        los_probability: log.los_probability(),
        avg_rate_bps: log.average_rate(),
        energy_used_j: log.energy_drawn,
        slots: log.slots(),
    }
}

fn evaluate(
    sim: &SimConfig,
    scene: &SceneGeometry,
    kind: PolicyKind,
    table: &QuantileTable,
    seed: u64,
) -> Result<EpisodeLog> {
    let mut policy = match kind {
        PolicyKind::Drl => Policy::Drl(table),
        PolicyKind::NonLearning => Policy::NonLearning,
        PolicyKind::Static => Policy::StaticIr,
        PolicyKind::Direct => Policy::Direct,
    };
    run_episode(sim, scene, &mut policy, seed)
}

pub const LOS_POLICIES: [PolicyKind; 3] = [PolicyKind::Drl, PolicyKind::NonLearning, PolicyKind::Static];
pub const RATE_POLICIES: [PolicyKind; 4] = [
    PolicyKind::Drl,
    PolicyKind::NonLearning,
    PolicyKind::Static,
    PolicyKind::Direct,
];

/// LOS probability per policy as the UAV's starting altitude is swept.
pub fn run_los_probability_experiment(
    cfg: &ExperimentConfig,
    table: &QuantileTable,
    power_threshold: f64,
) -> Result<MetricsReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &h in &cfg.altitude_sweep {
        let mut sim = cfg.sim.clone();
        sim.initial_uav.z = h;
        sim.max_slots = Some(cfg.eval_slots);
        sim.power_threshold = Some(power_threshold);
        for kind in LOS_POLICIES {
            for &seed in &cfg.seeds {
                let log = evaluate(&sim, &cfg.scene, kind, table, seed)?;
                rows.push(row_from_log(kind, h, seed, &log));
            }
        }
    }
    Ok(MetricsReport {
        sweep_name: "altitude_m".into(),
        config_hash: cfg.config_hash(),
        rows,
    })
}

/// Time-average rate per policy as the BS power budget is swept. With an
/// automatic state threshold it is recalibrated at every power level.
pub fn run_rate_vs_power_experiment(cfg: &ExperimentConfig, table: &QuantileTable) -> Result<MetricsReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &dbm in &cfg.pmax_sweep_dbm {
        let point = cfg.with_p_max_dbm(dbm);
        let mut sim = point.sim.clone();
        sim.max_slots = Some(cfg.eval_slots);
        sim.power_threshold = Some(resolve_power_threshold(&point)?);
        for kind in RATE_POLICIES {
            for &seed in &cfg.seeds {
                let log = evaluate(&sim, &cfg.scene, kind, table, seed)?;
                rows.push(row_from_log(kind, dbm, seed, &log));
            }
        }
    }
    Ok(MetricsReport {
        sweep_name: "pmax_dbm".into(),
        config_hash: cfg.config_hash(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReturnDistribution {
    pub action: String,
    pub ordinal: usize,
    pub visited: bool,
    pub expected_return: f64,
    pub supports: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReturnReadout {
    pub state: String,
    pub argmax_action: String,
    pub distributions: Vec<ReturnDistribution>,
}

/// Per-action supports and means at `state`. Unvisited pairs report the
/// all-zero initialisation.
pub fn dump_return_distributions(table: &QuantileTable, state: &StateCode) -> Result<ReturnReadout> {
    if state.len() != table.ue_count() {
        return Err(Error::AgentMismatch {
            field: "ue_count".into(),
            reason: format!("state has {} bits, table has {} UEs", state.len(), table.ue_count()),
        });
    }
    let distributions = ActionId::all(table.ue_count())
        .into_iter()
        .map(|a| ReturnDistribution {
            action: a.to_string(),
            ordinal: a.ordinal(),
            visited: table.entry(state, &a).is_some(),
            expected_return: table.expected_return(state, &a),
            supports: table.supports(state, &a),
        })
        .collect();
    Ok(ReturnReadout {
        state: state.to_string(),
        argmax_action: table.greedy_action(state).to_string(),
        distributions,
    })
}

impl ReturnReadout {
    pub fn to_csv(&self) -> String {
        let q = self.distributions.first().map_or(0, |d| d.supports.len());
        let mut out = String::from("state,action,ordinal,visited,expected_return");
        for i in 1..=q {
            let _ = write!(out, ",z{i}");
        }
        out.push('\n');
        for d in &self.distributions {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                self.state, d.action, d.ordinal, d.visited, d.expected_return
            );
            for z in &d.supports {
                let _ = write!(out, ",{z}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.sim.bs_antennas, 16);
        assert_eq!(cfg.sim.ir_elements, 16);
        assert_eq!(cfg.sim.ue_count, 4);
        assert_eq!(cfg.q_count, 40);
        assert_eq!(cfg.sim.discount, 0.9);
        assert_eq!(cfg.sim.carrier_frequency, 30e9);
        assert_eq!(cfg.sim.bandwidth, 2e6);
        assert_eq!(cfg.sim.p_max, 10.0);
        assert_eq!(cfg.sim.slot_duration, 0.1);
        assert_eq!(cfg.sim.initial_energy, 20.0 * 3600.0);
    }

    #[test]
    fn dbm_conversion() {
        assert_eq!(dbm_to_w(40.0), 10.0);
        assert_eq!(dbm_to_w(30.0), 1.0);
        assert!((dbm_to_w(20.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn non_positive_slot_duration_names_field() {
        for text in ["slot_duration = 0", "slot_duration = -0.1"] {
            match ExperimentConfig::parse(text) {
                Err(Error::InvalidField { field, .. }) => assert_eq!(field, "slot_duration"),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        match ExperimentConfig::parse("# comment\nwarp_drive = 3\n") {
            Err(Error::InvalidField { field, .. }) => assert_eq!(field, "warp_drive"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            ExperimentConfig::parse("no equals sign"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.seeds = vec![3, 1, 4];
        cfg.scene.building = None;
        cfg.sim.power_threshold = Some(1.25e-13);
        cfg.mobility_kind = MobilityKind::ReflectedWalk;
        cfg.sim.path_loss.building_loss_db = f64::INFINITY;
        cfg.query_state = Some(StateCode::parse("0110").unwrap());
        cfg.sync();
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.config_hash(), cfg.config_hash());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.config_hash(), b.config_hash());
        b.train_slots += 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn duplicate_seeds_rejected() {
        match ExperimentConfig::parse("seeds = 1,2,1") {
            Err(Error::InvalidField { field, .. }) => assert_eq!(field, "seeds"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn untrained_readout_is_all_zero() {
        let table = QuantileTable::new(4, 40, 0.9).unwrap();
        let r = dump_return_distributions(&table, &StateCode::zero(4)).unwrap();
        assert_eq!(r.distributions.len(), 6);
        for d in &r.distributions {
            assert!(!d.visited);
            assert_eq!(d.supports, vec![0.0; 40]);
            assert_eq!(d.expected_return, 0.0);
        }
        assert_eq!(r.argmax_action, "ascend");
    }
}
