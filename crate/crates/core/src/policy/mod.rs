//! Time-policy extraction and reassembly error detection from observed payloads.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{parse_pattern, Family, Protocol, TestCaseInstance, CELL_LEN};
use crate::interval::{pair_indices, Interval};

pub use report::{read_observations, read_report, write_observations, write_report, ObservationLine, ReportRecord};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("observation for `{observed}` applied to test case `{expected}`")]
    IdMismatch { expected: String, observed: String },
    #[error("bad payload hex for `{id}`: {source}")]
    Hex { id: String, source: hex::FromHexError },
    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path} line {line}: {source}")]
    Json { path: String, line: usize, source: serde_json::Error },
}

/// What a target returned for one test case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub test_case_id: String,
    /// Reassembled data after the upper-layer header; `None` when nothing came back.
    pub payload: Option<Vec<u8>>,
    pub reply_before_complete: bool,
    /// TCP only: whether the session ended with FIN or RST.
    pub session_terminated: Option<bool>,
}

impl Observation {
    pub fn absent(id: &str) -> Self {
        Observation {
            test_case_id: id.to_string(),
            payload: None,
            reply_before_complete: false,
            session_terminated: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Pattern {
        chunk_id: u32,
        index: u32,
    },
    /// All `.` or all zero bytes.
    Filler,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CellMap {
    pub cells: Vec<Cell>,
    /// Bytes past the last full cell.
    pub trailing: usize,
}

impl CellMap {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, c: u32) -> Option<Cell> {
        self.cells.get(c as usize).copied()
    }
}

pub fn decode_cells(payload: &[u8], family: Family) -> CellMap {
    let chunks = payload.chunks_exact(CELL_LEN);
    let trailing = chunks.remainder().len();
    let cells = chunks
        .map(|c| match parse_pattern(c, family) {
            Some((chunk_id, index)) => Cell::Pattern { chunk_id, index },
            None if c.iter().all(|&b| b == b'.') || c.iter().all(|&b| b == 0) => Cell::Filler,
            None => Cell::Unknown,
        })
        .collect();
    CellMap { cells, trailing }
}

/// Overlap geometry of a test case, in global cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Regions {
    Pair(Option<Interval>),
    Triplet {
        triple: Option<Interval>,
        /// Residual of pairs (0,1), (0,2), (1,2); each up to two intervals.
        residuals: [Vec<Interval>; 3],
    },
}

pub fn regions(instance: &TestCaseInstance) -> Regions {
    let c: Vec<Interval> = instance.test_chunks().iter().map(|c| c.extent()).collect();
    match c.len() {
        2 => Regions::Pair(c[0].intersection(&c[1])),
        _ => {
            let triple = c[0].intersection(&c[1]).and_then(|x| x.intersection(&c[2]));
            let residuals = [(0, 1), (0, 2), (1, 2)].map(|(i, j)| match (c[i].intersection(&c[j]), triple) {
                (None, _) => Vec::new(),
                (Some(p), None) => vec![p],
                (Some(p), Some(t)) => p.subtract(&t),
            });
            Regions::Triplet { triple, residuals }
        }
    }
}

/// Region label; `anomalous` covers regions no single label describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Label {
    None,
    Old,
    New,
    Middle,
    Ignores,
    PartialIgnore,
    Anomalous,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::None => "none",
            Label::Old => "old",
            Label::New => "new",
            Label::Middle => "middle",
            Label::Ignores => "ignores",
            Label::PartialIgnore => "partialIgnore",
            Label::Anomalous => "anomalous",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Anomaly {
    /// `pair`, `t`, `rp01`, `rp02` or `rp12`.
    pub region: String,
    /// One entry per cell: `<cell>:<chunk><index>`, `<cell>:absent` or `<cell>:unknown`.
    pub cells: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TimePolicyRecord {
    Pair {
        policy: Label,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        anomalies: Vec<Anomaly>,
    },
    Triplet {
        triple: Label,
        residuals: [Label; 3],
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        anomalies: Vec<Anomaly>,
    },
    /// No response at all.
    Ignores { n: usize },
}

impl TimePolicyRecord {
    pub fn is_anomalous(&self) -> bool {
        match self {
            TimePolicyRecord::Pair { anomalies, .. } | TimePolicyRecord::Triplet { anomalies, .. } => {
                !anomalies.is_empty()
            }
            TimePolicyRecord::Ignores { .. } => false,
        }
    }

    /// Labels of the three residual pairs, if this is a triplet-shaped record.
    pub fn residuals(&self) -> Option<[Label; 3]> {
        match self {
            TimePolicyRecord::Triplet { residuals, .. } => Some(*residuals),
            TimePolicyRecord::Ignores { n: 3 } => Some([Label::Ignores; 3]),
            _ => None,
        }
    }
}

fn check_id(instance: &TestCaseInstance, obs: &Observation) -> Result<(), PolicyError> {
    if instance.id != obs.test_case_id {
        return Err(PolicyError::IdMismatch { expected: instance.id.clone(), observed: obs.test_case_id.clone() });
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Fill {
    From(u32),
    Absent,
    Other,
}

fn fill(map: &CellMap, c: u32) -> Fill {
    match map.get(c) {
        None | Some(Cell::Filler) => Fill::Absent,
        Some(Cell::Pattern { chunk_id, index }) if index == c => Fill::From(chunk_id),
        Some(_) => Fill::Other,
    }
}

fn describe(map: &CellMap, c: u32) -> String {
    match map.get(c) {
        None | Some(Cell::Filler) => format!("{c}:absent"),
        Some(Cell::Pattern { chunk_id, index }) => format!("{c}:{chunk_id:03}{index:03}"),
        Some(Cell::Unknown) => format!("{c}:unknown"),
    }
}

/// Label one region; `ranks` maps a chunk id to the label its data earns there.
fn label_region(
    map: &CellMap,
    region: &[Interval],
    ranks: &[(u32, Label)],
    absent: Label,
    name: &str,
    anomalies: &mut Vec<Anomaly>,
) -> Label {
    let cells: Vec<u32> = region.iter().flat_map(|i| i.cells()).collect();
    if cells.is_empty() {
        return Label::None;
    }
    let fills: BTreeSet<Fill> = cells.iter().map(|&c| fill(map, c)).collect();
    let label = match fills.iter().collect::<Vec<_>>().as_slice() {
        [Fill::Absent] => Some(absent),
        [Fill::From(id)] => ranks.iter().find(|(r, _)| r == id).map(|&(_, l)| l),
        _ => None,
    };
    label.unwrap_or_else(|| {
        anomalies.push(Anomaly { region: name.to_string(), cells: cells.iter().map(|&c| describe(map, c)).collect() });
        Label::Anomalous
    })
}

impl PartialOrd for Fill {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fill {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let key = |f: &Fill| match f {
            Fill::From(id) => (0, *id),
            Fill::Absent => (1, 0),
            Fill::Other => (2, 0),
        };
        key(self).cmp(&key(other))
    }
}

pub fn extract_policy(instance: &TestCaseInstance, obs: &Observation) -> Result<TimePolicyRecord, PolicyError> {
    check_id(instance, obs)?;
    let Some(payload) = &obs.payload else {
        return Ok(TimePolicyRecord::Ignores { n: instance.n() });
    };
    let map = decode_cells(payload, instance.family());
    let mut anomalies = Vec::new();
    Ok(match regions(instance) {
        Regions::Pair(r) => {
            let region: Vec<Interval> = r.into_iter().collect();
            let ranks = [(0, Label::Old), (1, Label::New)];
            let policy = label_region(&map, &region, &ranks, Label::Ignores, "pair", &mut anomalies);
            TimePolicyRecord::Pair { policy, anomalies }
        }
        Regions::Triplet { triple, residuals } => {
            let t: Vec<Interval> = triple.into_iter().collect();
            let ranks = [(0, Label::Old), (1, Label::Middle), (2, Label::New)];
            let triple = label_region(&map, &t, &ranks, Label::Ignores, "t", &mut anomalies);
            let mut labels = [Label::None; 3];
            for (k, (i, j)) in pair_indices(3).into_iter().enumerate() {
                let ranks = [(i as u32, Label::Old), (j as u32, Label::New)];
                let name = format!("rp{i}{j}");
                labels[k] = label_region(&map, &residuals[k], &ranks, Label::PartialIgnore, &name, &mut anomalies);
            }
            TimePolicyRecord::Triplet { triple, residuals: labels, anomalies }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    HoleInPayload,
    DataAfterHole,
    Truncation,
    EarlyResponse,
    DuplicatePattern,
    MisplacedPattern,
    SessionNotTerminated,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub class: ErrorClass,
    /// Half-open cell range the error covers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chunks: Vec<u32>,
}

impl ErrorRecord {
    fn new(class: ErrorClass, cells: Option<[u32; 2]>, chunks: Vec<u32>) -> Self {
        ErrorRecord { class, cells, chunks }
    }
}

pub fn detect_errors(instance: &TestCaseInstance, obs: &Observation) -> Result<Vec<ErrorRecord>, PolicyError> {
    check_id(instance, obs)?;
    let mut out = Vec::new();
    if let Some(payload) = &obs.payload {
        let map = decode_cells(payload, instance.family());
        if instance.protocol == Protocol::Tcp {
            stream_errors(instance, &map, &mut out);
        } else {
            datagram_errors(instance, &map, &mut out);
        }
    }
    if obs.reply_before_complete {
        out.push(ErrorRecord::new(ErrorClass::EarlyResponse, None, Vec::new()));
    }
    if obs.session_terminated == Some(false) {
        out.push(ErrorRecord::new(ErrorClass::SessionNotTerminated, None, Vec::new()));
    }
    Ok(out)
}

fn filler_runs(map: &CellMap, out: &mut Vec<ErrorRecord>) {
    let mut run: Option<u32> = None;
    for c in 0..=map.len() as u32 {
        match (map.get(c) == Some(Cell::Filler), run) {
            (true, None) => run = Some(c),
            (false, Some(s)) => {
                out.push(ErrorRecord::new(ErrorClass::HoleInPayload, Some([s, c]), Vec::new()));
                run = None;
            }
            _ => {}
        }
    }
}

fn datagram_errors(instance: &TestCaseInstance, map: &CellMap, out: &mut Vec<ErrorRecord>) {
    filler_runs(map, out);
    let mut seen: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for (pos, cell) in map.cells.iter().enumerate() {
        let pos = pos as u32;
        if let Cell::Pattern { chunk_id, index } = *cell {
            if index != pos {
                out.push(ErrorRecord::new(ErrorClass::MisplacedPattern, Some([pos, pos + 1]), vec![chunk_id]));
            }
            if seen.insert((chunk_id, index), pos).is_some() {
                out.push(ErrorRecord::new(ErrorClass::DuplicatePattern, Some([pos, pos + 1]), vec![chunk_id]));
            }
        }
    }
    // the shortest datagram any MF-unset chunk can terminate
    let expected = instance.chunks.iter().filter(|c| c.mf_unset).map(|c| c.end_cell).min();
    if let Some(l) = expected {
        let got = map.len() as u32;
        if got < l {
            out.push(ErrorRecord::new(ErrorClass::Truncation, Some([got, l]), Vec::new()));
        }
    }
}

fn stream_errors(instance: &TestCaseInstance, map: &CellMap, out: &mut Vec<ErrorRecord>) {
    let mut expected = 0u32;
    let mut seen: BTreeSet<(u32, u32)> = BTreeSet::new();
    for (pos, cell) in map.cells.iter().enumerate() {
        let pos = pos as u32;
        match *cell {
            Cell::Pattern { chunk_id, index } => {
                if index > expected {
                    out.push(ErrorRecord::new(ErrorClass::DataAfterHole, Some([expected, index]), vec![chunk_id]));
                } else if index < expected {
                    let class = if seen.contains(&(chunk_id, index)) {
                        ErrorClass::DuplicatePattern
                    } else {
                        ErrorClass::MisplacedPattern
                    };
                    out.push(ErrorRecord::new(class, Some([pos, pos + 1]), vec![chunk_id]));
                }
                seen.insert((chunk_id, index));
                expected = expected.max(index + 1);
            }
            Cell::Filler => {
                out.push(ErrorRecord::new(ErrorClass::HoleInPayload, Some([pos, pos + 1]), Vec::new()));
                expected += 1;
            }
            Cell::Unknown => expected += 1,
        }
    }
    let got = map.len() as u32;
    let full = contiguous_extent(instance);
    if got < full {
        out.push(ErrorRecord::new(ErrorClass::Truncation, Some([got, full]), Vec::new()));
    }
}

/// End of the longest run of cells from 0 covered by some chunk.
fn contiguous_extent(instance: &TestCaseInstance) -> u32 {
    let mut ext: Vec<Interval> = instance.chunks.iter().map(|c| c.extent()).collect();
    ext.sort_by_key(|i| i.start);
    let mut end = 0;
    for i in ext {
        if i.start > end {
            break;
        }
        end = end.max(i.end);
    }
    end
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_instance, pattern_for, ScenarioSpec, BASE_CASES};
    use crate::interval::RelationSequence;

    fn find(protocol: Protocol, scenario: &str, tags: &[&str]) -> TestCaseInstance {
        let seq = RelationSequence::from_tags(tags).unwrap();
        let scenario: ScenarioSpec = scenario.parse().unwrap();
        (0..BASE_CASES).map(|o| build_instance(protocol, &scenario, o).unwrap()).find(|t| t.relations == seq).unwrap()
    }

    fn text(s: &str) -> Vec<u8> {
        s.split(' ').flat_map(|c| c.bytes()).collect()
    }

    fn seen(t: &TestCaseInstance, payload: &str) -> Observation {
        Observation { payload: Some(text(payload)), ..Observation::absent(&t.id) }
    }

    #[test]
    fn decode_printed_cells() {
        let m = decode_cells(&text("000001on 001003nl"), Family::V4);
        assert_eq!(m.cells, vec![Cell::Pattern { chunk_id: 0, index: 1 }, Cell::Pattern { chunk_id: 1, index: 3 }]);
        assert!(decode_cells(&[], Family::V4).is_empty());
        assert_eq!(decode_cells(b"........", Family::V4).cells, vec![Cell::Filler]);
        assert_eq!(decode_cells(b"000001oo", Family::V4).cells, vec![Cell::Unknown]);
        assert_eq!(decode_cells(b"000001on12", Family::V4).trailing, 2);
    }

    #[test]
    fn decode_inverts_patterns() {
        for fam in [Family::V4, Family::V6] {
            let ids: Vec<(u32, u32)> = (0..5).flat_map(|c| (0..12).map(move |i| (c, i))).collect();
            let bytes: Vec<u8> = ids.iter().flat_map(|&(c, i)| pattern_for(c, i, fam).unwrap()).collect();
            let back: Vec<(u32, u32)> = decode_cells(&bytes, fam)
                .cells
                .into_iter()
                .map(|c| match c {
                    Cell::Pattern { chunk_id, index } => (chunk_id, index),
                    other => panic!("{other:?}"),
                })
                .collect();
            assert_eq!(back, ids);
        }
    }

    #[test]
    fn odo_oi_geometry() {
        let t = find(Protocol::Ipv4, "s_c-of", &["O", "D", "Oi"]);
        let iv = |s, e| Interval { start: s, end: e };
        assert_eq!(
            regions(&t),
            Regions::Triplet { triple: Some(iv(2, 3)), residuals: [vec![], vec![iv(1, 2)], vec![iv(3, 4)]] }
        );
    }

    #[test]
    fn regions_edge_cases() {
        assert_eq!(regions(&find(Protocol::Ipv4, "s_c-of", &["B"])), Regions::Pair(None));
        let t = find(Protocol::Tcp, "s_c", &["Eq", "Eq", "Eq"]);
        let Regions::Triplet { triple, residuals } = regions(&t) else { panic!() };
        assert_eq!(triple, Some(t.chunks[0].extent()));
        assert!(residuals.iter().all(Vec::is_empty));
    }

    #[test]
    fn odo_oi_payload_is_none_old_old() {
        let t = find(Protocol::Ipv4, "s_c-of", &["O", "D", "Oi"]);
        let rec = extract_policy(&t, &seen(&t, "002000mo 000001on 000002om 001003nl 001004nk")).unwrap();
        assert_eq!(
            rec,
            TimePolicyRecord::Triplet {
                triple: Label::Old,
                residuals: [Label::None, Label::Old, Label::Old],
                anomalies: vec![]
            }
        );
    }

    #[test]
    fn pair_labels() {
        let t = find(Protocol::Ipv4, "s_c-of", &["O"]);
        let newer = extract_policy(&t, &seen(&t, "000000oo 001001nn 001002nm")).unwrap();
        assert_eq!(newer, TimePolicyRecord::Pair { policy: Label::New, anomalies: vec![] });
        assert_eq!(extract_policy(&t, &Observation::absent(&t.id)).unwrap(), TimePolicyRecord::Ignores { n: 2 });
        let odd = extract_policy(&t, &seen(&t, "000000oo 00000100 001002nm")).unwrap();
        assert!(odd.is_anomalous());
        let other = Observation::absent("ipv4:s_c-of:001");
        assert!(extract_policy(&t, &other).is_err());
    }

    #[test]
    fn record_json_shape() {
        let rec = TimePolicyRecord::Triplet {
            triple: Label::Middle,
            residuals: [Label::None, Label::PartialIgnore, Label::Old],
            anomalies: vec![],
        };
        let s = serde_json::to_string(&rec).unwrap();
        assert_eq!(s, r#"{"kind":"triplet","triple":"middle","residuals":["none","partialIgnore","old"]}"#);
        assert_eq!(serde_json::from_str::<TimePolicyRecord>(&s).unwrap(), rec);
    }

    #[test]
    fn hole_fixture() {
        // a triplet whose test chunks span [0,4) and whose End chunk is cell 4
        let scenario: ScenarioSpec = "s_ep".parse().unwrap();
        let t = (13..BASE_CASES)
            .map(|o| build_instance(Protocol::Ipv4, &scenario, o).unwrap())
            .find(|t| {
                let c = t.test_chunks();
                c[2].start_cell == 0 && c[2].end_cell >= 2 && c[1].start_cell <= 2 && c[1].end_cell == 4
            })
            .unwrap();
        let errs = detect_errors(&t, &seen(&t, "002000mo 002001mn 001002nm 001003nl ........")).unwrap();
        assert_eq!(errs, vec![ErrorRecord::new(ErrorClass::HoleInPayload, Some([4, 5]), vec![])]);
    }

    #[test]
    fn data_after_hole_fixture() {
        let t = find(Protocol::Tcp, "s_c", &["B"]);
        let errs = detect_errors(&t, &seen(&t, "000000oo 001002nm")).unwrap();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].class, ErrorClass::DataAfterHole);
        assert_eq!(errs[0].cells, Some([1, 2]));
    }

    #[test]
    fn complete_payload_is_clean() {
        let t = find(Protocol::Ipv4, "s_c-of", &["O", "D", "Oi"]);
        let errs = detect_errors(&t, &seen(&t, "002000mo 000001on 000002om 001003nl 001004nk")).unwrap();
        assert!(errs.is_empty());
    }

    #[test]
    fn flags_and_misplacement() {
        let t = find(Protocol::Tcp, "s_c", &["O"]);
        let mut obs = seen(&t, "000000oo 000001on 000000oo");
        obs.reply_before_complete = true;
        obs.session_terminated = Some(false);
        let classes: Vec<ErrorClass> = detect_errors(&t, &obs).unwrap().into_iter().map(|e| e.class).collect();
        assert_eq!(
            classes,
            vec![ErrorClass::DuplicatePattern, ErrorClass::EarlyResponse, ErrorClass::SessionNotTerminated]
        );
        let t = find(Protocol::Ipv4, "s_c-of", &["O"]);
        let classes: Vec<ErrorClass> =
            detect_errors(&t, &seen(&t, "000000oo 001002nm")).unwrap().into_iter().map(|e| e.class).collect();
        assert_eq!(classes, vec![ErrorClass::MisplacedPattern, ErrorClass::Truncation]);
    }
}
