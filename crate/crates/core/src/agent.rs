//! Tabular distributional return model over binary communication states.
//!
//! Each (state, action) pair owns `Q` support points with fixed cumulative
//! probabilities `q/Q`. Targets come from a support-wise Bellman map and the
//! supports are refit by minimising the asymmetric squared quantile loss,
//! which is separable across supports.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One bit per UE: set when that UE's received power reaches the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateCode {
    mask: u32,
    len: u8,
}

impl StateCode {
    pub const MAX_UES: usize = 32;

    pub fn from_bits(bits: &[bool]) -> Self {
        assert!(bits.len() <= Self::MAX_UES, "at most 32 UEs");
        let mask = bits
            .iter()
            .enumerate()
            .fold(0u32, |m, (k, &b)| if b { m | (1 << k) } else { m });
        StateCode {
            mask,
            len: bits.len() as u8,
        }
    }

    pub fn zero(ue_count: usize) -> Self {
        Self::from_bits(&vec![false; ue_count])
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, k: usize) -> bool {
        self.mask & (1 << k) != 0
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.len()).map(|k| self.bit(k)).collect()
    }

    /// Parses a bit string where the first character is UE 1.
    pub fn parse(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::field("state", format!("bad bit string {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if bits.is_empty() || bits.len() > Self::MAX_UES {
            return Err(Error::field("state", "need 1..=32 bits"));
        }
        Ok(Self::from_bits(&bits))
    }
}

impl fmt::Display for StateCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..self.len() {
            f.write_str(if self.bit(k) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

pub fn encode_state(received_powers: &[f64], tau: f64) -> StateCode {
    let bits: Vec<bool> = received_powers.iter().map(|&p| p >= tau).collect();
    StateCode::from_bits(&bits)
}

/// Placement moves. Ordinals: ascend 0, descend 1, towards UE `k` is `2 + k`
/// (`k` zero-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionId {
    Ascend1m,
    Descend1m,
    MoveTowardUe(usize),
}

impl ActionId {
    pub fn ordinal(&self) -> usize {
        match self {
            ActionId::Ascend1m => 0,
            ActionId::Descend1m => 1,
            ActionId::MoveTowardUe(k) => 2 + k,
        }
    }

    pub fn from_ordinal(ordinal: usize, ue_count: usize) -> Option<Self> {
        match ordinal {
            0 => Some(ActionId::Ascend1m),
            1 => Some(ActionId::Descend1m),
            o if o < ue_count + 2 => Some(ActionId::MoveTowardUe(o - 2)),
            _ => None,
        }
    }

    pub fn all(ue_count: usize) -> Vec<ActionId> {
        (0..ue_count + 2)
            .filter_map(|o| Self::from_ordinal(o, ue_count))
            .collect()
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionId::Ascend1m => f.write_str("ascend"),
            ActionId::Descend1m => f.write_str("descend"),
            ActionId::MoveTowardUe(k) => write!(f, "toward_ue{}", k + 1),
        }
    }
}

/// One learning transition between consecutive decisions.
///
/// `reward` is the discounted data volume collected over the `steps` slots
/// between the two decisions; `steps = 1` is the plain one-slot transition.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionSample {
    pub state: StateCode,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: StateCode,
    pub next_action: ActionId,
    pub steps: u32,
    /// No bootstrap from the next entry (episode ended).
    pub terminal: bool,
}

impl TransitionSample {
    pub fn one_step(
        state: StateCode,
        action: ActionId,
        reward: f64,
        next_state: StateCode,
        next_action: ActionId,
    ) -> Self {
        TransitionSample {
            state,
            action,
            reward,
            next_state,
            next_action,
            steps: 1,
            terminal: false,
        }
    }
}

/// Quantile midpoints `ω_q = (2q − 1) / (2Q)`.
pub fn quantile_midpoints(q_count: usize) -> Vec<f64> {
    (1..=q_count)
        .map(|q| (2 * q - 1) as f64 / (2 * q_count) as f64)
        .collect()
}

fn coordinate_loss(support: f64, omega: f64, targets: &[f64]) -> f64 {
    targets
        .iter()
        .map(|&z| {
            let weight = if z < support { 1.0 - omega } else { omega };
            weight * (z - support) * (z - support)
        })
        .sum::<f64>()
        / targets.len() as f64
}

/// `Σ_q E_z[|ω_q − 1{z < z_q}|·(z − z_q)²]` with the expectation taken as the
/// uniform average over `targets`.
pub fn qr_loss(supports: &[f64], targets: &[f64]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let omegas = quantile_midpoints(supports.len());
    Ok(supports
        .iter()
        .zip(&omegas)
        .map(|(&s, &w)| coordinate_loss(s, w, targets))
        .sum())
}

/// Exact minimiser of one coordinate of the loss.
///
/// The derivative is continuous, increasing and piecewise linear with breaks
/// at the sorted targets, so the root is found by locating its bracket and
/// solving the linear piece there.
fn fit_coordinate(sorted: &[f64], prefix: &[f64], omega: f64) -> f64 {
    let s = sorted.len();
    let total = prefix[s];
    let root_with_below = |j: usize| -> f64 {
        let num = (1.0 - omega) * prefix[j] + omega * (total - prefix[j]);
        let den = (1.0 - omega) * j as f64 + omega * (s - j) as f64;
        num / den
    };
    let slope_at = |x: f64, j: usize| -> f64 {
        (1.0 - omega) * (j as f64 * x - prefix[j])
            + omega * ((s - j) as f64 * x - (total - prefix[j]))
    };
    // Smallest sample index whose derivative is non-negative.
    let (mut lo, mut hi) = (0usize, s);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if slope_at(sorted[mid], mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    match lo {
        0 => root_with_below(0).min(sorted[0]),
        i if i == s => root_with_below(s).max(sorted[s - 1]),
        i => root_with_below(i).clamp(sorted[i - 1], sorted[i]),
    }
}

/// Refits `q_count` supports to the target samples. Output is sorted and its
/// loss never exceeds the loss of `previous` (when `previous` has length `Q`).
pub fn fit_quantiles(targets: &[f64], q_count: usize, previous: &[f64]) -> Result<Vec<f64>> {
    if targets.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let mut sorted = targets.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut prefix = Vec::with_capacity(sorted.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &z in &sorted {
        acc += z;
        prefix.push(acc);
    }
    let omegas = quantile_midpoints(q_count);
    let mut fitted: Vec<f64> = omegas
        .iter()
        .enumerate()
        .map(|(q, &w)| {
            let x = fit_coordinate(&sorted, &prefix, w);
            match previous.get(q) {
                Some(&p) if previous.len() == q_count
                    && coordinate_loss(p, w, targets) < coordinate_loss(x, w, targets) =>
                {
                    p
                }
                _ => x,
            }
        })
        .collect();
    fitted.sort_by(f64::total_cmp);
    Ok(fitted)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantileTable {
    ue_count: usize,
    q_count: usize,
    discount: f64,
    entries: BTreeMap<(StateCode, ActionId), Vec<f64>>,
}

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TableFile {
    version: u32,
    ue_count: usize,
    q_count: usize,
    discount: f64,
    entries: BTreeMap<String, Vec<f64>>,
}

fn entry_key(state: &StateCode, action: &ActionId) -> String {
    format!("e:{}|a:{}", state, action.ordinal())
}

impl QuantileTable {
    pub fn new(ue_count: usize, q_count: usize, discount: f64) -> Result<Self> {
        if ue_count == 0 || ue_count > StateCode::MAX_UES {
            return Err(Error::field("ue_count", "must be in 1..=32"));
        }
        if q_count == 0 {
            return Err(Error::field("q_count", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::field("discount", "must lie in [0, 1)"));
        }
        Ok(QuantileTable {
            ue_count,
            q_count,
            discount,
            entries: BTreeMap::new(),
        })
    }

    pub fn ue_count(&self) -> usize {
        self.ue_count
    }

    pub fn q_count(&self) -> usize {
        self.q_count
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn actions(&self) -> Vec<ActionId> {
        ActionId::all(self.ue_count)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, state: &StateCode, action: &ActionId) -> Option<&[f64]> {
        self.entries.get(&(*state, *action)).map(Vec::as_slice)
    }

    /// Stored supports, or the all-zero initialisation for unseen pairs.
    pub fn supports(&self, state: &StateCode, action: &ActionId) -> Vec<f64> {
        self.entry(state, action)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.q_count])
    }

    /// Overwrites one entry; supports must have length `Q` and are stored sorted.
    pub fn set_entry(&mut self, state: StateCode, action: ActionId, mut supports: Vec<f64>) -> Result<()> {
        if supports.len() != self.q_count {
            return Err(Error::field(
                "supports",
                format!("expected {} values, got {}", self.q_count, supports.len()),
            ));
        }
        supports.sort_by(f64::total_cmp);
        self.entries.insert((state, action), supports);
        Ok(())
    }

    pub fn expected_return(&self, state: &StateCode, action: &ActionId) -> f64 {
        self.entry(state, action).map_or(0.0, mean)
    }

    /// Highest expected return; ties go to the lowest ordinal.
    pub fn greedy_action(&self, state: &StateCode) -> ActionId {
        self.greedy_among(state, &self.actions())
    }

    /// Greedy choice restricted to `candidates` (all actions if empty).
    pub fn greedy_among(&self, state: &StateCode, candidates: &[ActionId]) -> ActionId {
        let all;
        let candidates = if candidates.is_empty() {
            all = self.actions();
            &all
        } else {
            candidates
        };
        let mut best = candidates[0];
        let mut best_value = f64::NEG_INFINITY;
        for action in candidates {
            let v = self.expected_return(state, action);
            if v > best_value || (v == best_value && action.ordinal() < best.ordinal()) {
                best = *action;
                best_value = v;
            }
        }
        best
    }

    /// ε-greedy selection.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        state: &StateCode,
        exploration: f64,
        rng: &mut R,
    ) -> ActionId {
        self.select_among(state, &self.actions(), exploration, rng)
    }

    /// ε-greedy selection restricted to `candidates` (all actions if empty).
    pub fn select_among<R: Rng + ?Sized>(
        &self,
        state: &StateCode,
        candidates: &[ActionId],
        exploration: f64,
        rng: &mut R,
    ) -> ActionId {
        let all = self.actions();
        let pool = if candidates.is_empty() { &all[..] } else { candidates };
        if exploration > 0.0 && rng.random::<f64>() < exploration {
            pool[rng.random_range(0..pool.len())]
        } else {
            self.greedy_among(state, pool)
        }
    }

    /// Support-wise `r + γ^steps · z_i(next_state, next_action)`.
    pub fn bellman_target(&self, sample: &TransitionSample) -> Vec<f64> {
        if sample.terminal {
            return vec![sample.reward; self.q_count];
        }
        let factor = self.discount.powi(sample.steps as i32);
        self.supports(&sample.next_state, &sample.next_action)
            .into_iter()
            .map(|z| sample.reward + factor * z)
            .collect()
    }

    pub fn update(&mut self, sample: &TransitionSample) -> Result<()> {
        let target = self.bellman_target(sample);
        let previous = self.supports(&sample.state, &sample.action);
        let fitted = fit_quantiles(&target, self.q_count, &previous)?;
        self.entries.insert((sample.state, sample.action), fitted);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = TableFile {
            version: FORMAT_VERSION,
            ue_count: self.ue_count,
            q_count: self.q_count,
            discount: self.discount,
            entries: self
                .entries
                .iter()
                .map(|((s, a), v)| (entry_key(s, a), v.clone()))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(text)?;
        if file.version != FORMAT_VERSION {
            return Err(Error::AgentMismatch {
                field: "version".into(),
                reason: format!("expected {FORMAT_VERSION}, found {}", file.version),
            });
        }
        let mut table = QuantileTable::new(file.ue_count, file.q_count, file.discount)?;
        for (key, supports) in file.entries {
            let (state, action) = parse_key(&key, file.ue_count)?;
            if supports.len() != file.q_count {
                return Err(Error::AgentMismatch {
                    field: "q_count".into(),
                    reason: format!(
                        "entry {key} has {} supports, header says {}",
                        supports.len(),
                        file.q_count
                    ),
                });
            }
            if supports.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::AgentMismatch {
                    field: "entries".into(),
                    reason: format!("entry {key} is not sorted"),
                });
            }
            table.entries.insert((state, action), supports);
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn parse_key(key: &str, ue_count: usize) -> Result<(StateCode, ActionId)> {
    let bad = || Error::AgentMismatch {
        field: "entries".into(),
        reason: format!("malformed key {key:?}"),
    };
    let (e, a) = key.split_once('|').ok_or_else(bad)?;
    let bits = e.strip_prefix("e:").ok_or_else(bad)?;
    let ordinal: usize = a
        .strip_prefix("a:")
        .ok_or_else(bad)?
        .parse()
        .map_err(|_| bad())?;
    if bits.len() != ue_count {
        return Err(Error::AgentMismatch {
            field: "ue_count".into(),
            reason: format!("key {key} has {} bits, header says {ue_count}", bits.len()),
        });
    }
    let state = StateCode::parse(bits).map_err(|_| bad())?;
    let action = ActionId::from_ordinal(ordinal, ue_count).ok_or_else(|| Error::AgentMismatch {
        field: "ue_count".into(),
        reason: format!("action ordinal {ordinal} out of range for {ue_count} UEs"),
    })?;
    Ok((state, action))
}

/// Writes the table to `path`.
pub fn persist_agent(table: &QuantileTable, path: &Path) -> Result<()> {
    table.save(path)
}

/// Loads a table and checks it against the expected UE count and `Q`.
pub fn load_agent(path: &Path, ue_count: usize, q_count: usize) -> Result<QuantileTable> {
    let table = QuantileTable::load(path)?;
    if table.ue_count != ue_count {
        return Err(Error::AgentMismatch {
            field: "ue_count".into(),
            reason: format!("file has {}, expected {ue_count}", table.ue_count),
        });
    }
    if table.q_count != q_count {
        return Err(Error::AgentMismatch {
            field: "q_count".into(),
            reason: format!("file has {}, expected {q_count}", table.q_count),
        });
    }
    Ok(table)
}

/// Linear ε decay from `start` to `end` over `decay_slots`, then flat.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExplorationSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_slots: u64,
}

impl ExplorationSchedule {
    pub fn constant(eps: f64) -> Self {
        ExplorationSchedule {
            start: eps,
            end: eps,
            decay_slots: 0,
        }
    }

    pub fn epsilon(&self, slot: u64) -> f64 {
        if self.decay_slots == 0 || slot >= self.decay_slots {
            return self.end;
        }
        let frac = slot as f64 / self.decay_slots as f64;
        self.start + (self.end - self.start) * frac
    }
}
