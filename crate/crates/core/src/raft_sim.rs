//! Discrete-event simulation of leader heartbeats over a lossy network.
//!
//! Only the follower-to-candidate transition is modeled: the leader never
//! fails, candidates never request votes and never revert. A trial ends when
//! `floor(N/2) + 1` followers are candidates (a network split) or when the
//! leader has sent `max_steps` heartbeats (censored).
//!
//! Two fidelities are available. `Lockstep` is the integer-step chain: every
//! heartbeat is delivered instantly and resets the follower's counter to a
//! timeout drawn from `timeout_steps`. `Timed` runs an event queue with
//! real-valued timers: deliveries arrive after a uniform latency and reset
//! the election deadline to `now + E_t`, `E_t ~ U[a, b]`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::split_model::split_threshold;

pub const DEFAULT_HEARTBEAT_MS: f64 = 50.0;
pub const DEFAULT_LATENCY_MS: (f64, f64) = (0.5, 10.0);
pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    Lockstep,
    Timed,
}

impl std::str::FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lockstep" => Ok(Self::Lockstep),
            "timed" => Ok(Self::Timed),
            other => Err(Error::InvalidConfig(format!(
                "unknown fidelity {other:?} (expected lockstep or timed)"
            ))),
        }
    }
}

impl std::fmt::Display for Fidelity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Lockstep => "lockstep",
            Self::Timed => "timed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub n_nodes: usize,
    pub loss_rate: f64,
    pub heartbeat_interval_ms: f64,
    /// Election timeout range `[a, b]` in ms, used by timed mode.
    pub timeout_range_ms: (f64, f64),
    /// Counter values drawn uniformly on each reset in lockstep mode.
    pub timeout_steps: Vec<u32>,
    pub latency_range_ms: (f64, f64),
    pub fidelity: Fidelity,
    pub trials: usize,
    pub master_seed: u64,
    pub max_steps: u64,
}

impl SimConfig {
    /// Config whose timeout range is `[K_1 h, K_r h]` for the given counter
    /// values, with the remaining fields at their defaults.
    pub fn from_timeout_steps(n_nodes: usize, loss_rate: f64, timeout_steps: Vec<u32>) -> Self {
        let h = DEFAULT_HEARTBEAT_MS;
        let lo = timeout_steps.first().copied().unwrap_or(0) as f64 * h;
        let hi = timeout_steps.last().copied().unwrap_or(0) as f64 * h;
        Self {
            n_nodes,
            loss_rate,
            heartbeat_interval_ms: h,
            timeout_range_ms: (lo, hi),
            timeout_steps,
            latency_range_ms: DEFAULT_LATENCY_MS,
            fidelity: Fidelity::Lockstep,
            trials: DEFAULT_TRIALS,
            master_seed: 0,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    /// Config from a timeout range in ms; the lockstep counter set is
    /// `floor(a/h) ..= floor(b/h)`.
    pub fn from_timeout_range(n_nodes: usize, loss_rate: f64, range_ms: (f64, f64), heartbeat_ms: f64) -> Self {
        let mut cfg = Self::from_timeout_steps(n_nodes, loss_rate, steps_for_range(range_ms, heartbeat_ms));
        cfg.heartbeat_interval_ms = heartbeat_ms;
        cfg.timeout_range_ms = range_ms;
        cfg
    }

    pub fn followers(&self) -> usize {
        self.n_nodes - 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_nodes < 3 {
            return bad(format!("need at least 3 nodes, got {}", self.n_nodes));
        }
        if !(0.0..=1.0).contains(&self.loss_rate) {
            return bad(format!("loss rate must lie in [0, 1], got {}", self.loss_rate));
        }
        let h = self.heartbeat_interval_ms;
        if !(h.is_finite() && h > 0.0) {
            return bad(format!("heartbeat interval must be positive, got {h}"));
        }
        let (a, b) = self.timeout_range_ms;
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return bad(format!("timeout range must satisfy a <= b, got {a}:{b}"));
        }
        if (a / h).floor() < 1.0 {
            return bad(format!("timeout range lower bound {a} ms is below one heartbeat interval ({h} ms)"));
        }
        if self.timeout_steps.is_empty()
            || self.timeout_steps[0] == 0
            || self.timeout_steps.windows(2).any(|w| w[0] >= w[1])
        {
            return bad(format!(
                "timeout steps must be a nonempty ascending set of values >= 1, got {:?}",
                self.timeout_steps
            ));
        }
        let (lo, hi) = self.latency_range_ms;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return bad(format!("latency range must satisfy 0 <= lo <= hi, got {lo}:{hi}"));
        }
        if hi >= h {
            return bad(format!("latency upper bound {hi} ms must be below the heartbeat interval {h} ms"));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.max_steps == 0 {
            return bad("max steps must be >= 1".into());
        }
        Ok(())
    }
}

/// `floor(a/h) ..= floor(b/h)`.
pub fn steps_for_range(range_ms: (f64, f64), heartbeat_ms: f64) -> Vec<u32> {
    let lo = (range_ms.0 / heartbeat_ms).floor().max(0.0) as u32;
    let hi = (range_ms.1 / heartbeat_ms).floor().max(0.0) as u32;
    (lo..=hi).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    /// Heartbeats sent when the split happened; `max_steps` when censored.
    pub split_step: u64,
    pub split_time_ms: f64,
    pub censored: bool,
    pub candidacy_steps: Vec<Option<u64>>,
    /// Heartbeats delivered to each follower before its candidacy (or before
    /// the trial ended).
    pub heartbeats_received: Vec<u64>,
}

impl TrialOutcome {
    pub fn candidates(&self) -> usize {
        self.candidacy_steps.iter().filter(|c| c.is_some()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Leader,
    Follower,
    Candidate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub role: Role,
    pub election_deadline_ms: f64,
    pub timeout_draw_ms: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial seed, a function of `(master_seed, trial_index)` only.
pub fn trial_seed(master_seed: u64, trial_index: usize) -> u64 {
    splitmix64(splitmix64(master_seed) ^ trial_index as u64)
}

struct TrialRecord {
    candidacy_steps: Vec<Option<u64>>,
    heartbeats_received: Vec<u64>,
    candidates: usize,
}

impl TrialRecord {
    fn new(followers: usize) -> Self {
        Self {
            candidacy_steps: vec![None; followers],
            heartbeats_received: vec![0; followers],
            candidates: 0,
        }
    }

    fn into_outcome(self, trial: usize, seed: u64, split: Option<(u64, f64)>, cfg: &SimConfig) -> TrialOutcome {
        let (split_step, split_time_ms, censored) = match split {
            Some((step, time)) => (step, time, false),
            None => (cfg.max_steps, cfg.max_steps as f64 * cfg.heartbeat_interval_ms, true),
        };
        TrialOutcome {
            trial,
            seed,
            split_step,
            split_time_ms,
            censored,
            candidacy_steps: self.candidacy_steps,
            heartbeats_received: self.heartbeats_received,
        }
    }
}

/// Runs one trial; deterministic in `(config, trial_index)`.
pub fn run_trial(config: &SimConfig, trial_index: usize) -> Result<TrialOutcome> {
    config.validate()?;
    Ok(run_trial_unchecked(config, trial_index))
}

fn run_trial_unchecked(config: &SimConfig, trial_index: usize) -> TrialOutcome {
    let seed = trial_seed(config.master_seed, trial_index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match config.fidelity {
        Fidelity::Lockstep => lockstep_trial(config, trial_index, seed, &mut rng),
        Fidelity::Timed => timed_trial(config, trial_index, seed, &mut rng),
    }
}

fn draw_counter(steps: &[u32], rng: &mut ChaCha8Rng) -> u32 {
    match steps {
        [k] => *k,
        _ => steps[rng.random_range(0..steps.len())],
    }
}

fn lockstep_trial(cfg: &SimConfig, trial: usize, seed: u64, rng: &mut ChaCha8Rng) -> TrialOutcome {
    let followers = cfg.followers();
    let threshold = split_threshold(cfg.n_nodes);
    let mut record = TrialRecord::new(followers);
    let mut counters: Vec<u32> = (0..followers).map(|_| draw_counter(&cfg.timeout_steps, rng)).collect();

    for step in 1..=cfg.max_steps {
        for f in 0..followers {
            if record.candidacy_steps[f].is_some() {
                continue;
            }
            if rng.random_bool(cfg.loss_rate) {
                counters[f] -= 1;
                if counters[f] == 0 {
                    record.candidacy_steps[f] = Some(step);
                    record.candidates += 1;
                }
            } else {
                record.heartbeats_received[f] += 1;
                counters[f] = draw_counter(&cfg.timeout_steps, rng);
            }
        }
        if record.candidates >= threshold {
            let time = step as f64 * cfg.heartbeat_interval_ms;
            return record.into_outcome(trial, seed, Some((step, time)), cfg);
        }
    }
    record.into_outcome(trial, seed, None, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Broadcast { round: u64 },
    Deliver { follower: usize },
    Deadline { follower: usize, generation: u64 },
}

impl EventKind {
    // at equal times: heartbeats go out, then arrive, then timers fire
    fn rank(&self) -> u8 {
        match self {
            Self::Broadcast { .. } => 0,
            Self::Deliver { .. } => 1,
            Self::Deadline { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.kind.rank().cmp(&self.kind.rank()))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct EventQueue {
    heap: BinaryHeap<Event>,
    seq: u64,
}

impl EventQueue {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.heap.push(Event { time, seq: self.seq, kind });
        self.seq += 1;
    }
}

fn draw_uniform(range: (f64, f64), rng: &mut ChaCha8Rng) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

fn timed_trial(cfg: &SimConfig, trial: usize, seed: u64, rng: &mut ChaCha8Rng) -> TrialOutcome {
    let followers = cfg.followers();
    let threshold = split_threshold(cfg.n_nodes);
    let h = cfg.heartbeat_interval_ms;
    let mut record = TrialRecord::new(followers);
    let mut queue = EventQueue {
        heap: BinaryHeap::new(),
        seq: 0,
    };

    // node 0 is the leader; followers start as if a heartbeat just arrived at t = 0
    let mut nodes: Vec<NodeState> = (0..followers)
        .map(|_| {
            let draw = draw_uniform(cfg.timeout_range_ms, rng);
            NodeState {
                role: Role::Follower,
                election_deadline_ms: draw,
                timeout_draw_ms: draw,
            }
        })
        .collect();
    let mut generations = vec![0u64; followers];
    for (f, node) in nodes.iter().enumerate() {
        queue.push(node.election_deadline_ms, EventKind::Deadline { follower: f, generation: 0 });
    }
    queue.push(h, EventKind::Broadcast { round: 1 });
    let mut sent = 0u64;

    while let Some(event) = queue.heap.pop() {
        let now = event.time;
        match event.kind {
            EventKind::Broadcast { round } => {
                if round > cfg.max_steps {
                    break;
                }
                sent = round;
                for (f, node) in nodes.iter().enumerate() {
                    if node.role == Role::Candidate {
                        continue;
                    }
                    if !rng.random_bool(cfg.loss_rate) {
                        let latency = draw_uniform(cfg.latency_range_ms, rng);
                        queue.push(now + latency, EventKind::Deliver { follower: f });
                    }
                }
                queue.push((round + 1) as f64 * h, EventKind::Broadcast { round: round + 1 });
            }
            EventKind::Deliver { follower } => {
                let node = &mut nodes[follower];
                if node.role == Role::Candidate {
                    continue;
                }
                record.heartbeats_received[follower] += 1;
                node.timeout_draw_ms = draw_uniform(cfg.timeout_range_ms, rng);
                node.election_deadline_ms = now + node.timeout_draw_ms;
                generations[follower] += 1;
                queue.push(
                    node.election_deadline_ms,
                    EventKind::Deadline {
                        follower,
                        generation: generations[follower],
                    },
                );
            }
            EventKind::Deadline { follower, generation } => {
                let node = &mut nodes[follower];
                if node.role == Role::Candidate || generation != generations[follower] {
                    continue;
                }
                node.role = Role::Candidate;
                record.candidacy_steps[follower] = Some(sent);
                record.candidates += 1;
                if record.candidates >= threshold {
                    return record.into_outcome(trial, seed, Some((sent, now)), cfg);
                }
            }
        }
    }
    record.into_outcome(trial, seed, None, cfg)
}

/// Runs trials `0..config.trials` in parallel; the result does not depend
/// on scheduling.
pub fn run_batch(config: &SimConfig) -> Result<Vec<TrialOutcome>> {
    config.validate()?;
    Ok((0..config.trials)
        .into_par_iter()
        .map(|i| run_trial_unchecked(config, i))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeartbeatStats {
    /// Mean heartbeats received per follower before candidacy, counting the
    /// heartbeat that started the term.
    pub mean_heartbeats_before_candidacy: f64,
    /// Total steps to candidacy over total heartbeats received.
    pub mean_receipt_interval_steps: f64,
    pub follower_samples: usize,
    /// Followers that became candidates without a single delivery.
    pub zero_receipt_followers: usize,
}

/// Per-follower heartbeat statistics over followers that reached candidacy.
///
/// A trial stops at the split, so with `N > 3` the followers still alive at
/// that point are unobserved and the sample leans toward early candidacies.
/// With `N = 3` every follower of an uncensored trial is observed.
pub fn empirical_heartbeat_stats(outcomes: &[TrialOutcome]) -> Result<HeartbeatStats> {
    let mut samples = 0usize;
    let mut zero = 0usize;
    let mut visits = 0u64;
    let mut steps = 0u64;
    for outcome in outcomes {
        for (candidacy, &received) in outcome.candidacy_steps.iter().zip(&outcome.heartbeats_received) {
            if let Some(step) = candidacy {
                samples += 1;
                if received == 0 {
                    zero += 1;
                }
                visits += received + 1;
                steps += step;
            }
        }
    }
    if samples == 0 {
        return Err(Error::NoCandidacies);
    }
    Ok(HeartbeatStats {
        mean_heartbeats_before_candidacy: visits as f64 / samples as f64,
        mean_receipt_interval_steps: steps as f64 / visits as f64,
        follower_samples: samples,
        zero_receipt_followers: zero,
    })
}
