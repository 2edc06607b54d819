//! Test-case corpora: coherent relation sequences expanded with scenario
//! context and populated with checksum-impactless patterns.

mod manifest;
mod pattern;
mod scenario;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::interval::{self, IntervalAssignment, IntervalError, RelationSequence};

pub use manifest::{read_manifest, write_manifest, ChunkRecord, ManifestRecord, WireKeys};
pub use pattern::{parse_pattern, pattern_for, render, Family, PatternRangeError, CELL_LEN, MAX_ID};
pub use scenario::{Agnostic, Anchor, MfStrategy, ScenarioSpec, Slot};

/// Base test cases per scenario: 13 pairs and 409 triplets.
pub const BASE_CASES: usize = 422;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("scenario `{scenario}` is not valid for {protocol}")]
    UnsupportedScenario { protocol: Protocol, scenario: String },
    #[error("MF strategy {0} cannot be applied to a chunk list containing an End chunk")]
    MfWithEnd(MfStrategy),
    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),
    #[error("malformed test case id `{0}`")]
    BadId(String),
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error(transparent)]
    Pattern(#[from] PatternRangeError),
    #[error("manifest I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ipv4,
    Ipv6,
    Tcp,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Ipv4, Protocol::Ipv6, Protocol::Tcp];

    pub fn is_ip(self) -> bool {
        !matches!(self, Protocol::Tcp)
    }

    /// Pattern family; TCP reuses the IPv4 correction rule.
    pub fn family(self) -> Family {
        match self {
            Protocol::Ipv6 => Family::V6,
            _ => Family::V4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Ipv4 => "ipv4",
            Protocol::Ipv6 => "ipv6",
            Protocol::Tcp => "tcp",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ipv4" | "ip4" | "v4" => Ok(Protocol::Ipv4),
            "ipv6" | "ip6" | "v6" => Ok(Protocol::Ipv6),
            "tcp" => Ok(Protocol::Tcp),
            _ => Err(CorpusError::UnknownProtocol(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Test,
    Start,
    End,
}

/// One chunk of a concrete test case, in global cell coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChunkSpec {
    pub chunk_id: u32,
    pub time_index: u32,
    pub start_cell: u32,
    pub end_cell: u32,
    pub role: Role,
    pub carries_header: bool,
    pub mf_unset: bool,
}

impl ChunkSpec {
    pub fn extent(&self) -> interval::Interval {
        interval::Interval { start: self.start_cell, end: self.end_cell }
    }

    pub fn cells(&self) -> std::ops::Range<u32> {
        self.start_cell..self.end_cell
    }

    /// Pattern bytes for every cell of the chunk.
    pub fn payload(&self, family: Family) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.cells().len() * CELL_LEN);
        for c in self.cells() {
            out.extend_from_slice(&pattern_for(self.chunk_id, c, family).expect("cell ids below 1000"));
        }
        out
    }
}

/// A fully populated test case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCaseInstance {
    pub id: String,
    pub protocol: Protocol,
    /// Index of the base relation sequence (0..13 pairs, 13..422 triplets).
    pub ordinal: usize,
    pub relations: RelationSequence,
    pub scenario: ScenarioSpec,
    /// Chunks sorted by `time_index`.
    pub chunks: Vec<ChunkSpec>,
    pub dedup_key: String,
}

impl TestCaseInstance {
    /// Number of test chunks (excluding Start/End).
    pub fn n(&self) -> usize {
        self.relations.n()
    }

    /// Test chunks indexed by chunk id, i.e. by time rank among test chunks.
    pub fn test_chunks(&self) -> Vec<&ChunkSpec> {
        let mut out: Vec<&ChunkSpec> = self.chunks.iter().filter(|c| c.role == Role::Test).collect();
        out.sort_by_key(|c| c.chunk_id);
        out
    }

    pub fn family(&self) -> Family {
        self.protocol.family()
    }

    /// Start cell offset introduced by the scenario (1 when a Start chunk exists).
    pub fn shift(&self) -> u32 {
        u32::from(self.scenario.agnostic.has_start())
    }
}

/// Stable test-case key: `<protocol>:<scenario>:<ordinal>`.
pub fn test_case_id(protocol: Protocol, scenario: &ScenarioSpec, ordinal: usize) -> String {
    format!("{protocol}:{scenario}:{ordinal:03}")
}

/// Split a test-case id into its parts.
pub fn parse_test_case_id(id: &str) -> Result<(Protocol, ScenarioSpec, usize), CorpusError> {
    let bad = || CorpusError::BadId(id.to_string());
    let mut it = id.split(':');
    let (Some(p), Some(s), Some(o), None) = (it.next(), it.next(), it.next(), it.next()) else {
        return Err(bad());
    };
    let ordinal: usize = o.parse().map_err(|_| bad())?;
    if ordinal >= BASE_CASES {
        return Err(bad());
    }
    Ok((p.parse()?, s.parse()?, ordinal))
}

/// Base relation sequences in ordinal order: 13 pairs then 409 triplets.
pub fn base_sequences() -> &'static [(RelationSequence, IntervalAssignment)] {
    static BASE: OnceLock<Vec<(RelationSequence, IntervalAssignment)>> = OnceLock::new();
    BASE.get_or_init(|| {
        let mut out = Vec::with_capacity(BASE_CASES);
        for n in [2, 3] {
            for seq in interval::enumerate_coherent(n).expect("n is supported") {
                let q = interval::quantify(&seq).expect("enumerated sequences are coherent");
                out.push((seq, q));
            }
        }
        out
    })
}

/// Place a quantified base test case in its scenario context.
///
/// A Start chunk takes cell 0 and shifts the test chunks right by one cell;
/// an End chunk takes the cell right after the rightmost test cell. For IP
/// the End chunk carries the unset MF bit and, without End, `mf_assign`
/// applies the scenario's strategy.
pub fn apply_scenario(
    base: &IntervalAssignment,
    scenario: &ScenarioSpec,
    protocol: Protocol,
) -> Result<Vec<ChunkSpec>, CorpusError> {
    scenario.validate(protocol)?;
    let n = base.chunks.len() as u32;
    let shift = u32::from(scenario.agnostic.has_start());
    let right = base.chunks.iter().map(|c| c.end).max().unwrap_or(0) + shift;
    let ip = protocol.is_ip();

    let mut chunks = Vec::with_capacity(base.chunks.len() + 2);
    let mut time = 0u32;
    for slot in scenario.agnostic.send_order() {
        match slot {
            Slot::Test => {
                for (i, c) in base.chunks.iter().enumerate() {
                    chunks.push(ChunkSpec {
                        chunk_id: i as u32,
                        time_index: time,
                        start_cell: c.start + shift,
                        end_cell: c.end + shift,
                        role: Role::Test,
                        carries_header: ip && c.start + shift == 0,
                        mf_unset: false,
                    });
                    time += 1;
                }
            }
            Slot::Start => {
                chunks.push(ChunkSpec {
                    chunk_id: n,
                    time_index: time,
                    start_cell: 0,
                    end_cell: 1,
                    role: Role::Start,
                    carries_header: ip,
                    mf_unset: false,
                });
                time += 1;
            }
            Slot::End => {
                chunks.push(ChunkSpec {
                    chunk_id: n + 1,
                    time_index: time,
                    start_cell: right,
                    end_cell: right + 1,
                    role: Role::End,
                    carries_header: ip && right == 0,
                    mf_unset: ip,
                });
                time += 1;
            }
        }
    }
    match scenario.mf_strategy {
        Some(strategy) if ip => mf_assign(chunks, strategy),
        _ => Ok(chunks),
    }
}

/// Unset the MF bit on the strategy's selection of rightmost test chunks.
pub fn mf_assign(mut chunks: Vec<ChunkSpec>, strategy: MfStrategy) -> Result<Vec<ChunkSpec>, CorpusError> {
    if chunks.iter().any(|c| c.role == Role::End) {
        return Err(CorpusError::MfWithEnd(strategy));
    }
    let key = |c: &ChunkSpec| match strategy.anchor() {
        Anchor::Finishing => c.end_cell,
        Anchor::Starting => c.start_cell,
    };
    let best = chunks.iter().filter(|c| c.role == Role::Test).map(key).max();
    let mut candidates: Vec<usize> =
        (0..chunks.len()).filter(|&i| chunks[i].role == Role::Test && Some(key(&chunks[i])) == best).collect();
    candidates.sort_by_key(|&i| chunks[i].time_index);
    let picked: Vec<usize> = strategy.positions(candidates.len()).into_iter().map(|p| candidates[p]).collect();
    for (i, c) in chunks.iter_mut().enumerate() {
        c.mf_unset = picked.contains(&i);
    }
    Ok(chunks)
}

/// Canonical wire fingerprint: chunks in send order with extents, MF flag and payload.
pub fn dedup_key(chunks: &[ChunkSpec], family: Family) -> String {
    let mut ordered: Vec<&ChunkSpec> = chunks.iter().collect();
    ordered.sort_by_key(|c| c.time_index);
    let mut h = Sha256::new();
    for c in ordered {
        h.update(c.start_cell.to_be_bytes());
        h.update(c.end_cell.to_be_bytes());
        h.update([u8::from(c.mf_unset)]);
        h.update(c.payload(family));
        h.update(b"|");
    }
    hex::encode(h.finalize())
}

/// Build one instance of the corpus.
pub fn build_instance(
    protocol: Protocol,
    scenario: &ScenarioSpec,
    ordinal: usize,
) -> Result<TestCaseInstance, CorpusError> {
    let (seq, base) = base_sequences().get(ordinal).ok_or_else(|| CorpusError::BadId(format!("ordinal {ordinal}")))?;
    let chunks = apply_scenario(base, scenario, protocol)?;
    let dedup_key = dedup_key(&chunks, protocol.family());
    Ok(TestCaseInstance {
        id: test_case_id(protocol, scenario, ordinal),
        protocol,
        ordinal,
        relations: seq.clone(),
        scenario: *scenario,
        chunks,
        dedup_key,
    })
}

/// Rebuild the instance a test-case id refers to.
pub fn instance_for_id(id: &str) -> Result<TestCaseInstance, CorpusError> {
    let (protocol, scenario, ordinal) = parse_test_case_id(id)?;
    build_instance(protocol, &scenario, ordinal)
}

/// Per-scenario generation counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioCount {
    pub scenario: String,
    pub instances: usize,
    /// Instances whose wire traffic first appears in this scenario.
    pub unique: usize,
}

/// A generated corpus, all scenario instances kept with their dedup mapping.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub protocol: Protocol,
    pub scenarios: Vec<ScenarioSpec>,
    pub instances: Vec<TestCaseInstance>,
    /// For every instance, the index of the first instance with the same fingerprint.
    canonical: Vec<usize>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Instances that are first of their fingerprint, in generation order.
    pub fn unique(&self) -> impl Iterator<Item = &TestCaseInstance> {
        self.instances.iter().enumerate().filter(|(i, _)| self.canonical[*i] == *i).map(|(_, t)| t)
    }

    pub fn unique_count(&self) -> usize {
        self.unique().count()
    }

    /// The instance actually carried on the wire for `index`.
    pub fn canonical_of(&self, index: usize) -> &TestCaseInstance {
        &self.instances[self.canonical[index]]
    }

    pub fn counts(&self) -> Vec<ScenarioCount> {
        self.scenarios
            .iter()
            .map(|s| {
                let idx: Vec<usize> = (0..self.instances.len()).filter(|&i| self.instances[i].scenario == *s).collect();
                ScenarioCount {
                    scenario: s.to_string(),
                    instances: idx.len(),
                    unique: idx.iter().filter(|&&i| self.canonical[i] == i).count(),
                }
            })
            .collect()
    }

    /// Manifest records, one per instance, wire keys unset.
    pub fn manifest(&self) -> Vec<ManifestRecord> {
        self.instances
            .iter()
            .enumerate()
            .map(|(i, t)| ManifestRecord::from_instance(t, &self.instances[self.canonical[i]].id))
            .collect()
    }
}

/// Unique IP test cases the corpus-wide figure refers to.
pub const IP_UNIQUE_TARGET: usize = 10_362;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpretationCount {
    /// Scenario selector the count is taken over (`all`, `mf`, `end`).
    pub selection: String,
    pub scenarios: usize,
    pub instances: usize,
    pub unique: usize,
    /// `unique - target`
    pub gap: i64,
}

/// How far each reading of the corpus-wide IP count is from the target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reconciliation {
    pub protocol: Protocol,
    pub target: usize,
    pub interpretations: Vec<InterpretationCount>,
    /// Per-scenario counts over all scenarios, in canonical order.
    pub per_scenario: Vec<ScenarioCount>,
}

impl Reconciliation {
    pub fn matches(&self) -> bool {
        self.interpretations.iter().any(|i| i.gap == 0)
    }
}

pub fn reconcile_ip_count(protocol: Protocol) -> Result<Reconciliation, CorpusError> {
    if !protocol.is_ip() {
        return Err(CorpusError::UnsupportedScenario { protocol, scenario: "all".into() });
    }
    let mut interpretations = Vec::new();
    let mut per_scenario = Vec::new();
    for selection in ["all", "mf", "end"] {
        let corpus = build_corpus(protocol, &ScenarioSpec::select(protocol, selection)?)?;
        let unique = corpus.unique_count();
        interpretations.push(InterpretationCount {
            selection: selection.to_string(),
            scenarios: corpus.scenarios.len(),
            instances: corpus.len(),
            unique,
            gap: unique as i64 - IP_UNIQUE_TARGET as i64,
        });
        if selection == "all" {
            per_scenario = corpus.counts();
        }
    }
    Ok(Reconciliation { protocol, target: IP_UNIQUE_TARGET, interpretations, per_scenario })
}

/// Generate all instances of `scenarios`, collapsing identical wire traffic corpus-wide.
pub fn build_corpus(protocol: Protocol, scenarios: &[ScenarioSpec]) -> Result<Corpus, CorpusError> {
    for s in scenarios {
        s.validate(protocol)?;
    }
    let mut instances = Vec::with_capacity(scenarios.len() * BASE_CASES);
    let mut canonical = Vec::with_capacity(scenarios.len() * BASE_CASES);
    let mut first: HashMap<String, usize> = HashMap::new();
    for s in scenarios {
        for ordinal in 0..BASE_CASES {
            let t = build_instance(protocol, s, ordinal)?;
            let idx = instances.len();
            canonical.push(*first.entry(t.dedup_key.clone()).or_insert(idx));
            instances.push(t);
        }
    }
    Ok(Corpus { protocol, scenarios: scenarios.to_vec(), instances, canonical })
}
