//! Slot-level episode engine: hovering slots serve the UEs through the
//! optimised precoder and reflector, movement slots relocate the UAV.

use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::agent::{encode_state, ActionId, ExplorationSchedule, QuantileTable, StateCode, TransitionSample};
use crate::channel::{
    direct_csi, effective_csi, ArrayGeometry, Building, ChannelModel, PathLossModel, Point3,
    SceneGeometry, C64,
};
use crate::error::{Error, Result};
use crate::optimizer::{self, OptimizerConfig, ReflectionMode};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MobilityModel {
    /// Mean-reverting Gaussian chain whose stationary law is the placement
    /// distribution; per-slot displacement variance is `ue_step_variance`.
    Anchored,
    /// Gaussian random walk reflected at a square arena of the given half
    /// width around the placement centre.
    ReflectedWalk { half_width: f64 },
}

/// Which next action the distributional target bootstraps from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetPolicy {
    Greedy,
    OnPolicy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub slot_duration: f64,
    /// Per-UE rate threshold in bits/s; relocation triggers below `K·ρ`.
    pub rate_threshold: f64,
    /// Received-power threshold for the binary state. `None` until calibrated.
    pub power_threshold: Option<f64>,
    pub uav_speed: f64,
    pub p_hover: f64,
    pub p_move: f64,
    pub p_reflect: f64,
    pub initial_energy: f64,
    pub ue_count: usize,
    pub bs_antennas: usize,
    pub ir_elements: usize,
    pub carrier_frequency: f64,
    pub bandwidth: f64,
    pub noise_power: f64,
    pub p_max: f64,
    pub min_altitude: f64,
    pub max_altitude: f64,
    pub initial_uav: Point3,
    pub static_ir: Point3,
    pub ue_center: (f64, f64),
    pub ue_variance: f64,
    pub ue_step_variance: f64,
    pub mobility: MobilityModel,
    pub path_loss: PathLossModel,
    /// Hard cap on slots per episode (in addition to the energy budget).
    pub max_slots: Option<u64>,
    pub discount: f64,
    pub target_policy: TargetPolicy,
    pub opt_outer_tolerance: f64,
    pub opt_max_outer: usize,
    pub opt_inner_tolerance: f64,
    pub opt_max_inner: usize,
    pub opt_single_user_starts: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            slot_duration: 0.1,
            rate_threshold: 5e5,
            power_threshold: None,
            uav_speed: 10.0,
            p_hover: 16.0,
            p_move: 20.0,
            p_reflect: 0.16,
            initial_energy: 72_000.0,
            ue_count: 4,
            bs_antennas: 16,
            ir_elements: 16,
            carrier_frequency: 30e9,
            bandwidth: 2e6,
            noise_power: dbm_to_watts(-174.0 + 10.0 * 2e6f64.log10() + 9.0),
            p_max: 10.0,
            min_altitude: 5.0,
            max_altitude: 60.0,
            initial_uav: Point3::new(10.0, 0.0, 25.0),
            static_ir: Point3::new(20.0, 10.0, 20.0),
            ue_center: (20.0, 0.0),
            ue_variance: 8.0,
            ue_step_variance: 0.25,
            mobility: MobilityModel::Anchored,
            path_loss: PathLossModel::default(),
            max_slots: None,
            discount: 0.9,
            target_policy: TargetPolicy::Greedy,
            opt_outer_tolerance: 1e-4,
            opt_max_outer: 10,
            opt_inner_tolerance: 1e-6,
            opt_max_inner: 10,
            opt_single_user_starts: false,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::field(name, "must be positive and finite"))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        positive("slot_duration", self.slot_duration)?;
        positive("uav_speed", self.uav_speed)?;
        positive("p_hover", self.p_hover)?;
        positive("p_move", self.p_move)?;
        positive("bandwidth", self.bandwidth)?;
        positive("noise_power", self.noise_power)?;
        positive("p_max", self.p_max)?;
        positive("carrier_frequency", self.carrier_frequency)?;
        if !(self.p_reflect >= 0.0) {
            return Err(Error::field("p_reflect", "must be >= 0"));
        }
        if !(self.initial_energy >= 0.0) {
            return Err(Error::field("initial_energy", "must be >= 0"));
        }
        if !(self.rate_threshold >= 0.0) {
            return Err(Error::field("rate_threshold", "must be >= 0"));
        }
        if let Some(t) = self.power_threshold {
            if !(t >= 0.0) {
                return Err(Error::field("power_threshold", "must be >= 0"));
            }
        }
        if self.ue_count == 0 || self.ue_count > StateCode::MAX_UES {
            return Err(Error::field("ue_count", "must be in 1..=32"));
        }
        for (name, n) in [("bs_antennas", self.bs_antennas), ("ir_elements", self.ir_elements)] {
            if square_side(n).is_none() {
                return Err(Error::field(name, "must be a positive perfect square"));
            }
        }
        if !(0.0 < self.min_altitude && self.min_altitude <= self.max_altitude) {
            return Err(Error::field("min_altitude", "need 0 < min_altitude <= max_altitude"));
        }
        if !(self.ue_variance >= 0.0) {
            return Err(Error::field("ue_variance", "must be >= 0"));
        }
        if !(self.ue_step_variance >= 0.0) {
            return Err(Error::field("ue_step_variance", "must be >= 0"));
        }
        if let MobilityModel::Anchored = self.mobility {
            if self.ue_step_variance > 0.0 && self.ue_step_variance > 4.0 * self.ue_variance {
                return Err(Error::field(
                    "ue_step_variance",
                    "anchored chain needs ue_step_variance <= 4 * ue_variance",
                ));
            }
        }
        if let MobilityModel::ReflectedWalk { half_width } = self.mobility {
            positive("arena_half_width", half_width)?;
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::field("discount", "must lie in [0, 1)"));
        }
        self.optimizer_config().validate()
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            p_max: self.p_max,
            outer_tolerance: self.opt_outer_tolerance,
            max_outer_iterations: self.opt_max_outer,
            inner_tolerance: self.opt_inner_tolerance,
            max_inner_iterations: self.opt_max_inner,
            single_user_starts: self.opt_single_user_starts,
            ..OptimizerConfig::new(self.p_max)
        }
    }

    pub fn channel_model(&self, scene: &SceneGeometry) -> ChannelModel {
        ChannelModel {
            scene: scene.clone(),
            bs_array: ArrayGeometry::square(self.bs_antennas, self.carrier_frequency),
            ir_array: ArrayGeometry::square(self.ir_elements, self.carrier_frequency),
            path_loss: self.path_loss.clone(),
        }
    }

    pub fn hover_power(&self) -> f64 {
        self.p_hover + self.p_reflect
    }

    pub fn max_slot_energy(&self) -> f64 {
        self.p_move.max(self.hover_power()) * self.slot_duration
    }
}

fn square_side(n: usize) -> Option<usize> {
    let s = (n as f64).sqrt().round() as usize;
    (n > 0 && s * s == n).then_some(s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UavState {
    pub position: Point3,
    pub speed: f64,
    pub energy: f64,
    pub move_target: Option<Point3>,
}

impl UavState {
    pub fn hovering_at(position: Point3, energy: f64) -> Self {
        UavState {
            position,
            speed: 0.0,
            energy,
            move_target: None,
        }
    }

    pub fn is_moving(&self) -> bool {
        self.move_target.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UePopulation {
    pub positions: Vec<Vector2<f64>>,
}

impl UePopulation {
    pub fn sample<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Self {
        let sd = config.ue_variance.sqrt();
        let (cx, cy) = config.ue_center;
        let positions = (0..config.ue_count)
            .map(|_| {
                let x: f64 = StandardNormal.sample(rng);
                let y: f64 = StandardNormal.sample(rng);
                Vector2::new(cx + sd * x, cy + sd * y)
            })
            .collect();
        UePopulation { positions }
    }

    pub fn ground_points(&self) -> Vec<Point3> {
        self.positions
            .iter()
            .map(|p| Point3::new(p.x, p.y, 0.0))
            .collect()
    }
}

/// Mean-reversion factor of the anchored chain.
pub fn anchored_reversion(config: &SimConfig) -> f64 {
    if config.ue_variance == 0.0 {
        return 0.0;
    }
    1.0 - config.ue_step_variance / (2.0 * config.ue_variance)
}

fn reflect_into(x: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    let mut y = (x - lo).rem_euclid(2.0 * width);
    if y > width {
        y = 2.0 * width - y;
    }
    lo + y
}

/// One Markov step for every UE. Heights stay zero by construction.
pub fn step_ue_mobility<R: Rng + ?Sized>(
    pop: &UePopulation,
    config: &SimConfig,
    rng: &mut R,
) -> UePopulation {
    let (cx, cy) = config.ue_center;
    let center = Vector2::new(cx, cy);
    let positions = pop
        .positions
        .iter()
        .map(|p| {
            let e = Vector2::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            );
            match config.mobility {
                MobilityModel::Anchored => {
                    let a = anchored_reversion(config);
                    let sd = (config.ue_variance * (1.0 - a * a)).max(0.0).sqrt();
                    center + (p - center) * a + e * sd
                }
                MobilityModel::ReflectedWalk { half_width } => {
                    let q = p + e * config.ue_step_variance.sqrt();
                    Vector2::new(
                        reflect_into(q.x, cx - half_width, cx + half_width),
                        reflect_into(q.y, cy - half_width, cy + half_width),
                    )
                }
            }
        })
        .collect();
    UePopulation { positions }
}

/// `p(v) = 1{v=0}(p_h + p_r) + 1{v>0} p_m`.
pub fn power_cost(speed: f64, config: &SimConfig) -> f64 {
    if speed == 0.0 {
        config.hover_power()
    } else {
        config.p_move
    }
}

/// Data delivered in one slot: `1{v=0}·C·ΔT`.
pub fn slot_reward(rate: f64, speed: f64, slot_duration: f64) -> f64 {
    if speed == 0.0 {
        rate * slot_duration
    } else {
        0.0
    }
}

pub fn blockage_triggered(rate: f64, config: &SimConfig) -> bool {
    rate < config.ue_count as f64 * config.rate_threshold
}

fn inside_building(p: &Point3, building: &Option<Building>) -> bool {
    building.as_ref().is_some_and(|b| {
        (p.x - b.center.x).abs() <= b.extents.0 / 2.0
            && (p.y - b.center.y).abs() <= b.extents.1 / 2.0
            && p.z < b.height
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct MoveOutcome {
    /// The requested altitude fell outside the allowed band and was clamped.
    pub clamped: bool,
    /// The target lay inside the building; the UAV stays put.
    pub obstructed: bool,
}

/// Sets the movement target for `action`. A zero displacement leaves the UAV
/// hovering.
pub fn apply_action(
    uav: &UavState,
    action: ActionId,
    ue_positions: &[Point3],
    config: &SimConfig,
    scene: &SceneGeometry,
) -> Result<(UavState, MoveOutcome)> {
    let p = uav.position;
    let mut outcome = MoveOutcome::default();
    let mut target = match action {
        ActionId::Ascend1m => p + Point3::new(0.0, 0.0, 1.0),
        ActionId::Descend1m => p - Point3::new(0.0, 0.0, 1.0),
        ActionId::MoveTowardUe(k) => {
            let ue = ue_positions.get(k).ok_or_else(|| {
                Error::field("action", format!("UE index {k} out of range"))
            })?;
            let dir = Vector2::new(ue.x - p.x, ue.y - p.y);
            let dist = dir.norm();
            if dist <= 1e-12 {
                p
            } else {
                let step = dir * (dist.min(1.0) / dist);
                Point3::new(p.x + step.x, p.y + step.y, p.z)
            }
        }
    };
    let z = target.z.clamp(config.min_altitude, config.max_altitude);
    if z != target.z {
        outcome.clamped = true;
        target.z = z;
    }
    if inside_building(&target, &scene.building) {
        outcome.obstructed = true;
        target = p;
    }
    let mut next = uav.clone();
    if (target - p).norm() > 0.0 {
        next.move_target = Some(target);
        next.speed = config.uav_speed;
    } else {
        next.move_target = None;
        next.speed = 0.0;
    }
    Ok((next, outcome))
}

/// Actions that actually displace the UAV from its current position.
pub fn feasible_actions(
    uav: &UavState,
    ue_positions: &[Point3],
    config: &SimConfig,
    scene: &SceneGeometry,
) -> Vec<ActionId> {
    ActionId::all(config.ue_count)
        .into_iter()
        .filter(|&a| {
            apply_action(uav, a, ue_positions, config, scene)
                .map(|(next, _)| next.is_moving())
                .unwrap_or(false)
        })
        .collect()
}

/// Number of slots a straight move of `distance` metres takes.
pub fn movement_slots(distance: f64, config: &SimConfig) -> u64 {
    (distance / (config.uav_speed * config.slot_duration) - 1e-9).ceil().max(0.0) as u64
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlotRecord {
    pub t: u64,
    pub position: Point3,
    pub speed: f64,
    pub state: Option<StateCode>,
    pub action: Option<ActionId>,
    pub rate: f64,
    pub reward: f64,
    /// Empty on movement slots.
    pub los_flags: Vec<bool>,
    pub received_powers: Vec<f64>,
    pub energy_spent: f64,
}

impl SlotRecord {
    pub fn is_hovering(&self) -> bool {
        self.speed == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct EpisodeLog {
    pub records: Vec<SlotRecord>,
    pub initial_energy: f64,
    pub energy_drawn: f64,
    pub slot_duration: f64,
    /// True when the episode ended because the next slot was unaffordable.
    pub energy_exhausted: bool,
}

impl EpisodeLog {
    pub fn slots(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn residual_energy(&self) -> f64 {
        self.initial_energy - self.energy_drawn
    }

    pub fn hovering_slots(&self) -> u64 {
        self.records.iter().filter(|r| r.is_hovering()).count() as u64
    }

    /// Fraction of hovering UE-slots with a LOS reflector → UE link.
    pub fn los_counts(&self) -> (u64, u64) {
        self.records
            .iter()
            .filter(|r| r.is_hovering())
            .flat_map(|r| r.los_flags.iter())
            .fold((0, 0), |(los, all), &f| (los + f as u64, all + 1))
    }

    pub fn los_probability(&self) -> f64 {
        let (los, all) = self.los_counts();
        if all == 0 {
            0.0
        } else {
            los as f64 / all as f64
        }
    }

    /// Rate averaged over every slot; movement slots count as zero.
    pub fn average_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.reward).sum::<f64>()
            / (self.records.len() as f64 * self.slot_duration)
    }

    /// Rate averaged over hovering slots only.
    pub fn hovering_average_rate(&self) -> f64 {
        let hovering: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.is_hovering())
            .map(|r| r.rate)
            .collect();
        crate::agent::mean(&hovering)
    }

    pub fn total_reward(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    pub fn logged_energy(&self) -> f64 {
        self.records.iter().map(|r| r.energy_spent).sum()
    }
}

pub enum Policy<'a> {
    /// Reflector fixed at `SimConfig::static_ir`.
    StaticIr,
    /// On each trigger, moves 1 m toward a uniformly drawn blocked UE. A UE
    /// counts as blocked when its state bit is clear (received power below
    /// the threshold), or from the LOS flags when no threshold is set.
    NonLearning,
    /// No reflector; the BS serves the UEs over the direct links.
    Direct,
    /// Frozen greedy placement from a trained table.
    Drl(&'a QuantileTable),
    /// ε-greedy placement that updates the table as it goes.
    DrlLearning {
        table: &'a mut QuantileTable,
        exploration: ExplorationSchedule,
        /// Global slot counter at episode start, for the ε schedule.
        slot_offset: u64,
    },
}

impl Policy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::StaticIr => "static",
            Policy::NonLearning => "nonlearning",
            Policy::Direct => "direct",
            Policy::Drl(_) | Policy::DrlLearning { .. } => "drl",
        }
    }

    fn needs_state(&self) -> bool {
        matches!(self, Policy::Drl(_) | Policy::DrlLearning { .. })
    }
}

struct Pending {
    state: StateCode,
    action: ActionId,
    reward: f64,
    weight: f64,
    steps: u32,
}

struct ServiceOutcome {
    rate: f64,
    los_flags: Vec<bool>,
    powers: Vec<f64>,
}

fn serve_slot(
    config: &SimConfig,
    model: &ChannelModel,
    reflector: Option<&Point3>,
    ues: &[Point3],
    rng: &mut impl Rng,
) -> Result<ServiceOutcome> {
    let (csi, los_flags, mut opt) = match reflector {
        Some(pos) => {
            let real = model.sample_channels(pos, ues, rng)?;
            let csi = effective_csi(&real, config.noise_power, config.bandwidth)?;
            (csi, real.los_flags, config.optimizer_config())
        }
        None => {
            let (rows, flags) = model.sample_direct(ues, rng)?;
            let csi = direct_csi(&rows, config.noise_power, config.bandwidth);
            let mut opt = config.optimizer_config();
            opt.reflection = ReflectionMode::Fixed;
            (csi, flags, opt)
        }
    };
    let (w0, theta0): (DMatrix<C64>, DVector<C64>) = optimizer::initial_point(&csi, config.p_max);
    opt.p_max = config.p_max;
    let sol = optimizer::optimize(&csi, &opt, &w0, &theta0)?;
    let powers = optimizer::received_powers(&sol.w, &sol.theta, &csi);
    Ok(ServiceOutcome {
        rate: sol.sum_rate,
        los_flags,
        powers,
    })
}

/// Runs one episode until the next slot is unaffordable (or `max_slots`).
///
/// Randomness is drawn from per-slot streams keyed by `seed`, so policies
/// that sit at the same place in the same slot see the same channel.
pub fn run_episode(
    config: &SimConfig,
    scene: &SceneGeometry,
    policy: &mut Policy<'_>,
    seed: u64,
) -> Result<EpisodeLog> {
    config.validate()?;
    scene.validate()?;
    let tau = match (policy.needs_state(), config.power_threshold) {
        (true, None) => {
            return Err(Error::field("power_threshold", "must be set for the learning policy"))
        }
        (_, t) => t,
    };
    let table_ues = match policy {
        Policy::Drl(t) => Some(t.ue_count()),
        Policy::DrlLearning { table, .. } => Some(table.ue_count()),
        _ => None,
    };
    if let Some(n) = table_ues {
        if n != config.ue_count {
            return Err(Error::AgentMismatch {
                field: "ue_count".into(),
                reason: format!("table has {n}, config has {}", config.ue_count),
            });
        }
    }
    let model = config.channel_model(scene);
    let start = match policy {
        Policy::StaticIr => config.static_ir,
        _ => config.initial_uav,
    };
    let mut uav = UavState::hovering_at(start, config.initial_energy);
    let mut ues = UePopulation::sample(config, &mut stream_rng(seed, Stream::Placement, 0));
    let mut log = EpisodeLog {
        initial_energy: config.initial_energy,
        slot_duration: config.slot_duration,
        ..Default::default()
    };
    let mut pending: Option<Pending> = None;
    let mut t = 0u64;

    loop {
        if config.max_slots.is_some_and(|cap| t >= cap) {
            break;
        }
        let cost = power_cost(uav.speed, config) * config.slot_duration;
        let drawn = log.energy_drawn + cost;
        if drawn > config.initial_energy {
            log.energy_exhausted = true;
            break;
        }
        log.energy_drawn = drawn;
        uav.energy = config.initial_energy - drawn;
        let ue_points = ues.ground_points();

        let record = if let Some(target) = uav.move_target {
            let step = config.uav_speed * config.slot_duration;
            let to_go = target - uav.position;
            let record_speed = uav.speed;
            if to_go.norm() <= step * (1.0 + 1e-12) {
                uav.position = target;
                uav.move_target = None;
                uav.speed = 0.0;
            } else {
                uav.position += to_go * (step / to_go.norm());
            }
            if let Some(p) = pending.as_mut() {
                p.weight *= config.discount;
                p.steps += 1;
            }
            SlotRecord {
                t,
                position: uav.position,
                speed: record_speed,
                state: None,
                action: None,
                rate: 0.0,
                reward: 0.0,
                los_flags: Vec::new(),
                received_powers: Vec::new(),
                energy_spent: cost,
            }
        } else {
            let reflector = match policy {
                Policy::Direct => None,
                _ => Some(&uav.position),
            };
            let mut ch_rng = stream_rng(seed, Stream::Channel, t);
            let svc = serve_slot(config, &model, reflector, &ue_points, &mut ch_rng)?;
            let reward = slot_reward(svc.rate, 0.0, config.slot_duration);
            let state = tau.map(|tau| encode_state(&svc.powers, tau));
            let triggered = blockage_triggered(svc.rate, config);
            let mut pol_rng = stream_rng(seed, Stream::Policy, t);

            if let Some(p) = pending.as_mut() {
                p.reward += p.weight * reward;
                p.weight *= config.discount;
                p.steps += 1;
            }

            let action = match policy {
                Policy::StaticIr | Policy::Direct => None,
                Policy::NonLearning => triggered.then(|| {
                    let blocked: Vec<usize> = (0..config.ue_count)
                        .filter(|&k| match &state {
                            Some(s) => !s.bit(k),
                            None => !svc.los_flags[k],
                        })
                        .collect();
                    let k = if blocked.is_empty() {
                        pol_rng.random_range(0..config.ue_count)
                    } else {
                        blocked[pol_rng.random_range(0..blocked.len())]
                    };
                    ActionId::MoveTowardUe(k)
                }),
                Policy::Drl(table) => triggered.then(|| {
                    let allowed = feasible_actions(&uav, &ue_points, config, scene);
                    table.greedy_among(&state.unwrap(), &allowed)
                }),
                Policy::DrlLearning {
                    table,
                    exploration,
                    slot_offset,
                } => {
                    if triggered {
                        let s = state.unwrap();
                        let eps = exploration.epsilon(*slot_offset + t);
                        let allowed = feasible_actions(&uav, &ue_points, config, scene);
                        let a = table.select_among(&s, &allowed, eps, &mut pol_rng);
                        if let Some(p) = pending.take() {
                            let next_action = match config.target_policy {
                                TargetPolicy::Greedy => table.greedy_action(&s),
                                TargetPolicy::OnPolicy => a,
                            };
                            table.update(&TransitionSample {
                                state: p.state,
                                action: p.action,
                                reward: p.reward,
                                next_state: s,
                                next_action,
                                steps: p.steps,
                                terminal: false,
                            })?;
                        }
                        pending = Some(Pending {
                            state: s,
                            action: a,
                            reward: 0.0,
                            weight: 1.0,
                            steps: 0,
                        });
                        Some(a)
                    } else {
                        None
                    }
                }
            };
            if let Some(a) = action {
                let (next, _) = apply_action(&uav, a, &ue_points, config, scene)?;
                uav = next;
            }
            SlotRecord {
                t,
                position: uav.position,
                speed: 0.0,
                state,
                action,
                rate: svc.rate,
                reward,
                los_flags: svc.los_flags,
                received_powers: svc.powers,
                energy_spent: cost,
            }
        };
        log.records.push(record);
        ues = step_ue_mobility(&ues, config, &mut stream_rng(seed, Stream::Mobility, t));
        t += 1;
    }

    if let (Policy::DrlLearning { table, .. }, Some(p)) = (policy, pending) {
        if log.energy_exhausted {
            table.update(&TransitionSample {
                state: p.state,
                action: p.action,
                reward: p.reward,
                next_state: p.state,
                next_action: p.action,
                steps: p.steps.max(1),
                terminal: true,
            })?;
        }
    }
    Ok(log)
}

pub fn baseline_direct(config: &SimConfig, scene: &SceneGeometry, seed: u64) -> Result<EpisodeLog> {
    run_episode(config, scene, &mut Policy::Direct, seed)
}

pub fn baseline_static_ir(config: &SimConfig, scene: &SceneGeometry, seed: u64) -> Result<EpisodeLog> {
    run_episode(config, scene, &mut Policy::StaticIr, seed)
}

pub fn baseline_nonlearning(config: &SimConfig, scene: &SceneGeometry, seed: u64) -> Result<EpisodeLog> {
    run_episode(config, scene, &mut Policy::NonLearning, seed)
}

/// Median per-UE received power over a static-reflector run of `slots` slots.
pub fn calibrate_power_threshold(
    config: &SimConfig,
    scene: &SceneGeometry,
    slots: u64,
    seed: u64,
) -> Result<f64> {
    let mut cfg = config.clone();
    cfg.max_slots = Some(slots);
    cfg.initial_energy = f64::MAX;
    let log = baseline_static_ir(&cfg, scene, seed)?;
    let mut powers: Vec<f64> = log
        .records
        .iter()
        .flat_map(|r| r.received_powers.iter().copied())
        .collect();
    if powers.is_empty() {
        return Err(Error::field("power_threshold", "calibration produced no samples"));
    }
    powers.sort_by(f64::total_cmp);
    let n = powers.len();
    Ok(if n % 2 == 1 {
        powers[n / 2]
    } else {
        0.5 * (powers[n / 2 - 1] + powers[n / 2])
    })
}
