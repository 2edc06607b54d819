//! Configurable reassembly engines for IP fragments and TCP segments.
//!
//! Both engines keep a queue of disjoint blocks. An arriving chunk is compared
//! with each queued block in ascending start order; the Allen relation
//! `queued r newcomer` selects an entry of the [`PolicyTable`].

mod queue;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{pattern_for, ChunkSpec, Family, Protocol, TestCaseInstance};
use crate::interval::{AllenRelation, Interval};
use crate::policy::{self, Observation, PolicyError, TimePolicyRecord};

use queue::{Knobs, Queue};

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("preset `{preset}` does not apply to {protocol}")]
    PresetProtocol { preset: String, protocol: Protocol },
    #[error("policy table has no entry for {0}")]
    MissingRelation(AllenRelation),
    #[error("policy table entry for non-overlapping relation {0}")]
    NonOverlapping(AllenRelation),
    #[error("unknown pair policy `{0}`")]
    UnknownPolicy(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Which chunk keeps the data of a pairwise overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairPolicy {
    Old,
    New,
    Ignore,
}

impl PairPolicy {
    pub fn name(self) -> &'static str {
        match self {
            PairPolicy::Old => "old",
            PairPolicy::New => "new",
            PairPolicy::Ignore => "ignore",
        }
    }
}

impl FromStr for PairPolicy {
    type Err = SimulatorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "old" => Ok(PairPolicy::Old),
            "new" => Ok(PairPolicy::New),
            "ignore" | "ignores" => Ok(PairPolicy::Ignore),
            _ => Err(SimulatorError::UnknownPolicy(s.to_string())),
        }
    }
}

/// Pair time policy for each of the nine overlapping relations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<AllenRelation, PairPolicy>", into = "BTreeMap<AllenRelation, PairPolicy>")]
pub struct PolicyTable([PairPolicy; 9]);

impl PolicyTable {
    pub fn uniform(p: PairPolicy) -> Self {
        PolicyTable([p; 9])
    }

    pub fn from_fn(mut f: impl FnMut(AllenRelation) -> PairPolicy) -> Self {
        PolicyTable(AllenRelation::OVERLAPPING.map(&mut f))
    }

    /// Policy for an overlapping relation.
    ///
    /// # Panics
    /// If `r` is one of B, Bi, M, Mi.
    pub fn get(&self, r: AllenRelation) -> PairPolicy {
        self.0[slot(r).unwrap_or_else(|| panic!("{r} has no policy entry"))]
    }

    pub fn set(&mut self, r: AllenRelation, p: PairPolicy) -> Result<(), SimulatorError> {
        let i = slot(r).ok_or(SimulatorError::NonOverlapping(r))?;
        self.0[i] = p;
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (AllenRelation, PairPolicy)> + '_ {
        AllenRelation::OVERLAPPING.iter().copied().zip(self.0.iter().copied())
    }
}

fn slot(r: AllenRelation) -> Option<usize> {
    AllenRelation::OVERLAPPING.iter().position(|&o| o == r)
}

impl TryFrom<BTreeMap<AllenRelation, PairPolicy>> for PolicyTable {
    type Error = SimulatorError;
    fn try_from(m: BTreeMap<AllenRelation, PairPolicy>) -> Result<Self, Self::Error> {
        if let Some(r) = m.keys().find(|r| !r.is_overlapping()) {
            return Err(SimulatorError::NonOverlapping(*r));
        }
        let mut out = [PairPolicy::Old; 9];
        for (i, r) in AllenRelation::OVERLAPPING.iter().enumerate() {
            out[i] = *m.get(r).ok_or(SimulatorError::MissingRelation(*r))?;
        }
        Ok(PolicyTable(out))
    }
}

impl From<PolicyTable> for BTreeMap<AllenRelation, PairPolicy> {
    fn from(t: PolicyTable) -> Self {
        t.entries().collect()
    }
}

impl fmt::Display for PolicyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.entries().map(|(r, p)| format!("{r}:{}", p.name())).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alteration {
    Immediate,
    Delayed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Merging {
    No,
    /// Only blocks whose relation to the newcomer was M or Mi.
    Meet,
    /// Adjacency or overlap.
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IgnoreInterp {
    /// Poison the flow: every current and future chunk is dropped.
    TripletAllDrop,
    /// Drop the queued block and the newcomer.
    PairDrop,
    /// Drop the queued block and keep resolving the newcomer.
    PairOldestDrop,
    /// Drop the newcomer.
    PairNewestDrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub alteration: Alteration,
    pub merging: Merging,
    /// IP only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ignore_interp: Option<IgnoreInterp>,
}

impl MechanismConfig {
    pub fn ip(alteration: Alteration, merging: Merging, ignore: IgnoreInterp) -> Self {
        MechanismConfig { alteration, merging, ignore_interp: Some(ignore) }
    }

    pub fn tcp(alteration: Alteration, merging: Merging) -> Self {
        MechanismConfig { alteration, merging, ignore_interp: None }
    }

    pub fn is_tcp(&self) -> bool {
        self.ignore_interp.is_none()
    }

    fn knobs<'a>(&self, table: &'a PolicyTable) -> Knobs<'a> {
        Knobs { table, alteration: self.alteration, merging: self.merging, ignore: self.ignore_interp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlgorithmPreset {
    pub name: &'static str,
    pub config: MechanismConfig,
}

const fn ip(name: &'static str, alteration: Alteration, merging: Merging, ignore: IgnoreInterp) -> AlgorithmPreset {
    AlgorithmPreset { name, config: MechanismConfig { alteration, merging, ignore_interp: Some(ignore) } }
}

const fn tcp(name: &'static str, alteration: Alteration, merging: Merging) -> AlgorithmPreset {
    AlgorithmPreset { name, config: MechanismConfig { alteration, merging, ignore_interp: None } }
}

pub const IP_PRESETS: [AlgorithmPreset; 12] = [
    ip("aimnipa", Alteration::Immediate, Merging::No, IgnoreInterp::PairDrop),
    ip("aimnipn", Alteration::Immediate, Merging::No, IgnoreInterp::PairNewestDrop),
    ip("aimnita", Alteration::Immediate, Merging::No, IgnoreInterp::TripletAllDrop),
    ip("admnita", Alteration::Delayed, Merging::No, IgnoreInterp::TripletAllDrop),
    ip("aimaipa", Alteration::Immediate, Merging::Any, IgnoreInterp::PairDrop),
    ip("aimaipn", Alteration::Immediate, Merging::Any, IgnoreInterp::PairNewestDrop),
    ip("aimaita", Alteration::Immediate, Merging::Any, IgnoreInterp::TripletAllDrop),
    ip("admaita", Alteration::Delayed, Merging::Any, IgnoreInterp::TripletAllDrop),
    ip("aimmipa", Alteration::Immediate, Merging::Meet, IgnoreInterp::PairDrop),
    ip("aimmipn", Alteration::Immediate, Merging::Meet, IgnoreInterp::PairNewestDrop),
    ip("aimmita", Alteration::Immediate, Merging::Meet, IgnoreInterp::TripletAllDrop),
    ip("admmita", Alteration::Delayed, Merging::Meet, IgnoreInterp::TripletAllDrop),
];

pub const TCP_PRESETS: [AlgorithmPreset; 6] = [
    tcp("aimn", Alteration::Immediate, Merging::No),
    tcp("admn", Alteration::Delayed, Merging::No),
    tcp("aima", Alteration::Immediate, Merging::Any),
    tcp("adma", Alteration::Delayed, Merging::Any),
    tcp("aimm", Alteration::Immediate, Merging::Meet),
    tcp("admm", Alteration::Delayed, Merging::Meet),
];

pub fn all_presets() -> impl Iterator<Item = &'static AlgorithmPreset> {
    IP_PRESETS.iter().chain(TCP_PRESETS.iter())
}

pub fn preset(name: &str) -> Result<MechanismConfig, SimulatorError> {
    all_presets()
        .find(|p| p.name == name)
        .map(|p| p.config)
        .ok_or_else(|| SimulatorError::UnknownPreset(name.to_string()))
}

/// Preset lookup that also checks the protocol family.
pub fn preset_for(name: &str, protocol: Protocol) -> Result<MechanismConfig, SimulatorError> {
    let cfg = preset(name)?;
    if cfg.is_tcp() == protocol.is_ip() {
        return Err(SimulatorError::PresetProtocol { preset: name.to_string(), protocol });
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Delivered,
    NoResponse,
    Poisoned,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReassemblyOutcome {
    pub status: Status,
    /// Source chunk of every cell held at session end, from cell 0. When
    /// delivered this is exactly the delivered data.
    pub cells: Vec<Option<u32>>,
    /// Delivered length in cells (0 unless delivered).
    pub delivered: u32,
}

impl ReassemblyOutcome {
    fn from_map(status: Status, map: &BTreeMap<u32, u32>, delivered: u32) -> Self {
        let len = map.keys().next_back().map_or(0, |&c| c + 1);
        let mut cells = vec![None; len as usize];
        for (&c, &o) in map {
            cells[c as usize] = Some(o);
        }
        ReassemblyOutcome { status, cells, delivered }
    }

    /// Delivered bytes, or `None` when nothing was delivered.
    pub fn payload(&self, family: Family) -> Option<Vec<u8>> {
        if self.status != Status::Delivered {
            return None;
        }
        let mut out = Vec::with_capacity(self.delivered as usize * 8);
        for (c, owner) in self.cells.iter().enumerate().take(self.delivered as usize) {
            let owner = owner.expect("delivered data is contiguous");
            out.extend_from_slice(&pattern_for(owner, c as u32, family).expect("corpus ids are in range"));
        }
        Some(out)
    }
}

fn held(queue: &Queue) -> BTreeMap<u32, u32> {
    let mut map = BTreeMap::new();
    for e in &queue.entries {
        for (i, &o) in e.owners.iter().enumerate() {
            map.insert(e.start + i as u32, o);
        }
    }
    map
}

/// IP reassembly; completion is evaluated once all chunks have arrived.
pub fn simulate_ip(chunks: &[ChunkSpec], table: &PolicyTable, mech: MechanismConfig) -> ReassemblyOutcome {
    let knobs = mech.knobs(table);
    let mut queue = Queue::default();
    let mut dropped: BTreeSet<u32> = BTreeSet::new();
    for c in chunks {
        let a = queue.arrive(c.chunk_id, c.extent(), knobs);
        if a.poisoned {
            return ReassemblyOutcome { status: Status::Poisoned, cells: Vec::new(), delivered: 0 };
        }
        if a.newcomer_dropped {
            dropped.insert(c.chunk_id);
        }
        dropped.extend(a.evicted);
    }
    let map = held(&queue);
    let last = chunks.iter().filter(|c| c.mf_unset && !dropped.contains(&c.chunk_id)).map(|c| c.end_cell).max();
    match last {
        Some(l) if (0..l).all(|c| map.contains_key(&c)) => {
            let map: BTreeMap<u32, u32> = map.into_iter().filter(|(c, _)| *c < l).collect();
            ReassemblyOutcome::from_map(Status::Delivered, &map, l)
        }
        _ => ReassemblyOutcome::from_map(Status::NoResponse, &map, 0),
    }
}

/// Incremental TCP receiver: an out-of-order queue above the next-expected pointer.
#[derive(Debug, Clone)]
pub struct TcpEngine<'a> {
    knobs: Knobs<'a>,
    queue: Queue,
    stream: Vec<u32>,
}

impl<'a> TcpEngine<'a> {
    pub fn new(table: &'a PolicyTable, mech: MechanismConfig) -> Self {
        TcpEngine { knobs: mech.knobs(table), queue: Queue::default(), stream: Vec::new() }
    }

    /// Next expected cell.
    pub fn next_expected(&self) -> u32 {
        self.stream.len() as u32
    }

    /// Source chunk of every delivered cell.
    pub fn stream(&self) -> &[u32] {
        &self.stream
    }

    /// Process one segment; returns the range of cells newly delivered.
    pub fn push(&mut self, chunk_id: u32, ext: Interval) -> std::ops::Range<u32> {
        let before = self.next_expected();
        let ext = Interval { start: ext.start.max(before), end: ext.end };
        if !ext.is_empty() {
            self.queue.arrive(chunk_id, ext, self.knobs);
        }
        while self.queue.first_start() == Some(self.next_expected()) {
            let e = self.queue.pop_front();
            self.stream.extend_from_slice(&e.owners);
        }
        before..self.next_expected()
    }

    pub fn outcome(&self) -> ReassemblyOutcome {
        let mut map = held(&self.queue);
        map.extend(self.stream.iter().enumerate().map(|(c, &o)| (c as u32, o)));
        let delivered = self.next_expected();
        let status = if delivered > 0 { Status::Delivered } else { Status::NoResponse };
        ReassemblyOutcome::from_map(status, &map, delivered)
    }
}

/// TCP reassembly; the outcome is the stream delivered by session end.
pub fn simulate_tcp(chunks: &[ChunkSpec], table: &PolicyTable, mech: MechanismConfig) -> ReassemblyOutcome {
    let mut engine = TcpEngine::new(table, mech);
    for c in chunks {
        engine.push(c.chunk_id, c.extent());
    }
    engine.outcome()
}

pub fn simulate(instance: &TestCaseInstance, table: &PolicyTable, mech: MechanismConfig) -> ReassemblyOutcome {
    if instance.protocol.is_ip() {
        simulate_ip(&instance.chunks, table, mech)
    } else {
        simulate_tcp(&instance.chunks, table, mech)
    }
}

/// The observation a target behaving like the engine would produce.
pub fn observe(instance: &TestCaseInstance, outcome: &ReassemblyOutcome) -> Observation {
    Observation {
        test_case_id: instance.id.clone(),
        payload: outcome.payload(instance.family()),
        reply_before_complete: false,
        session_terminated: (!instance.protocol.is_ip()).then_some(true),
    }
}

/// Simulate `instance` under the named preset and extract its time policy.
pub fn predict_policy(
    instance: &TestCaseInstance,
    pair_policies: &PolicyTable,
    preset_name: &str,
) -> Result<TimePolicyRecord, SimulatorError> {
    let mech = preset_for(preset_name, instance.protocol)?;
    let outcome = simulate(instance, pair_policies, mech);
    Ok(policy::extract_policy(instance, &observe(instance, &outcome))?)
}
