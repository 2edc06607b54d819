//! Comparisons over policy reports: similarity, scenario grouping, and
//! pair-to-triplet consistency checks.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    base_sequences, instance_for_id, parse_test_case_id, test_case_id, Corpus, CorpusError, Protocol, TestCaseInstance,
};
use crate::interval::{AllenRelation, Interval};
use crate::policy::{
    detect_errors, extract_policy, regions, ErrorRecord, Label, PolicyError, Regions, ReportRecord, TimePolicyRecord,
};
use crate::simulator::{observe, predict_policy, preset_for, simulate, PairPolicy, PolicyTable, SimulatorError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("reports cover different protocols ({0} and {1})")]
    ProtocolMismatch(Protocol, Protocol),
    #[error("reports share no test cases")]
    EmptyIntersection,
    #[error("report mixes protocols")]
    MixedReport,
    #[error("duplicate report record for `{0}`")]
    Duplicate(String),
    #[error("empty report")]
    EmptyReport,
    #[error("no pair record `{id}` needed for relation {relation}")]
    MissingPair { id: String, relation: AllenRelation },
    #[error("pair record `{0}` has no usable policy label")]
    UnusablePair(String),
    #[error("no pair policies for scenario `{0}`")]
    MissingScenario(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub time_policy: TimePolicyRecord,
    pub errors: Vec<ErrorRecord>,
}

/// One implementation's observed time policies, keyed by (scenario, test case id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyReport {
    pub implementation: String,
    pub protocol: Protocol,
    pub records: BTreeMap<(String, String), Entry>,
}

impl PolicyReport {
    pub fn from_records(records: Vec<ReportRecord>) -> Result<Self, AnalysisError> {
        let first = records.first().ok_or(AnalysisError::EmptyReport)?;
        let (implementation, protocol) = (first.implementation.clone(), first.protocol);
        let mut map = BTreeMap::new();
        for r in records {
            if r.protocol != protocol {
                return Err(AnalysisError::MixedReport);
            }
            parse_test_case_id(&r.test_case_id)?;
            let key = (r.scenario, r.test_case_id);
            if map.contains_key(&key) {
                return Err(AnalysisError::Duplicate(key.1));
            }
            map.insert(key, Entry { time_policy: r.time_policy, errors: r.errors });
        }
        Ok(PolicyReport { implementation, protocol, records: map })
    }

    pub fn to_records(&self) -> Vec<ReportRecord> {
        self.records
            .iter()
            .map(|((scenario, id), e)| ReportRecord {
                implementation: self.implementation.clone(),
                protocol: self.protocol,
                scenario: scenario.clone(),
                test_case_id: id.clone(),
                time_policy: e.time_policy.clone(),
                errors: e.errors.clone(),
            })
            .collect()
    }

    pub fn scenarios(&self) -> BTreeSet<&str> {
        self.records.keys().map(|(s, _)| s.as_str()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Entry> {
        let (_, scenario, _) = parse_test_case_id(id).ok()?;
        self.records.get(&(scenario.to_string(), id.to_string()))
    }

    pub fn error_count(&self) -> usize {
        self.records.values().map(|e| e.errors.len()).sum()
    }
}

/// Report for every corpus instance as reassembled by the simulator.
pub fn simulated_report(
    corpus: &Corpus,
    table: &PolicyTable,
    preset_name: &str,
    implementation: &str,
) -> Result<PolicyReport, AnalysisError> {
    let mech = preset_for(preset_name, corpus.protocol)?;
    let mut records = Vec::with_capacity(corpus.len());
    for t in &corpus.instances {
        let obs = observe(t, &simulate(t, table, mech));
        records.push(ReportRecord {
            implementation: implementation.to_string(),
            protocol: t.protocol,
            scenario: t.scenario.to_string(),
            test_case_id: t.id.clone(),
            time_policy: extract_policy(t, &obs)?,
            errors: detect_errors(t, &obs)?,
        });
    }
    PolicyReport::from_records(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Similarity {
    pub percent: f64,
    pub common: usize,
    pub identical: usize,
    pub differing: Vec<String>,
}

/// Share of common test cases with identical time-policy records. With
/// `only`, the comparison is restricted to those ids.
pub fn similarity(
    a: &PolicyReport,
    b: &PolicyReport,
    only: Option<&BTreeSet<String>>,
) -> Result<Similarity, AnalysisError> {
    if a.protocol != b.protocol {
        return Err(AnalysisError::ProtocolMismatch(a.protocol, b.protocol));
    }
    let mut common = 0;
    let mut differing = Vec::new();
    for (key, ea) in &a.records {
        if only.is_some_and(|o| !o.contains(&key.1)) {
            continue;
        }
        if let Some(eb) = b.records.get(key) {
            common += 1;
            if ea.time_policy != eb.time_policy {
                differing.push(key.1.clone());
            }
        }
    }
    if common == 0 {
        return Err(AnalysisError::EmptyIntersection);
    }
    let identical = common - differing.len();
    Ok(Similarity { percent: 100.0 * identical as f64 / common as f64, common, identical, differing })
}

/// Partition scenarios by identical per-ordinal policy vectors; groups and
/// their members are sorted by name.
pub fn scenario_groups(report: &PolicyReport) -> Vec<Vec<String>> {
    let mut vectors: BTreeMap<&str, BTreeMap<usize, &TimePolicyRecord>> = BTreeMap::new();
    for ((scenario, id), e) in &report.records {
        let ordinal = parse_test_case_id(id).map(|(_, _, o)| o).expect("validated on load");
        vectors.entry(scenario.as_str()).or_default().insert(ordinal, &e.time_policy);
    }
    let mut groups: Vec<(BTreeMap<usize, &TimePolicyRecord>, Vec<String>)> = Vec::new();
    for (name, v) in vectors {
        match groups.iter_mut().find(|(g, _)| *g == v) {
            Some((_, members)) => members.push(name.to_string()),
            None => groups.push((v, vec![name.to_string()])),
        }
    }
    groups.into_iter().map(|(_, m)| m).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    BaselineResidualMismatch,
    PredictionMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConsistencyFinding {
    pub test_case_id: String,
    /// `t`, `rp01`, `rp02`, `rp12`, `pair`, or `anomalies`.
    pub component: String,
    pub expected: Label,
    pub observed: Label,
    pub kind: FindingKind,
}

const RESIDUAL_NAMES: [&str; 3] = ["rp01", "rp02", "rp12"];

fn pair_ordinal(r: AllenRelation) -> usize {
    base_sequences()
        .iter()
        .position(|(s, _)| s.n() == 2 && s.relations()[0] == r)
        .expect("every relation is a pair test case")
}

/// Whether the chunks leave a hole below their maximum end; such a datagram
/// can never complete, so a missing reply says nothing about policies.
fn has_gap(instance: &TestCaseInstance) -> bool {
    let end = instance.chunks.iter().map(|c| c.end_cell).max().unwrap_or(0);
    (0..end).any(|cell| !instance.chunks.iter().any(|c| c.cells().contains(&cell)))
}

fn region_empty(r: &[Interval]) -> bool {
    r.is_empty()
}

/// (component name, label) for every region of a record, expanding a
/// top-level no-response into per-region ignores.
fn components(rec: &TimePolicyRecord, instance: &TestCaseInstance) -> Vec<(&'static str, Label)> {
    match (rec, regions(instance)) {
        (TimePolicyRecord::Pair { policy, .. }, _) => vec![("pair", *policy)],
        (TimePolicyRecord::Triplet { triple, residuals, .. }, _) => {
            let mut v = vec![("t", *triple)];
            v.extend(RESIDUAL_NAMES.iter().zip(residuals).map(|(n, l)| (*n, *l)));
            v
        }
        (TimePolicyRecord::Ignores { .. }, Regions::Pair(r)) => {
            vec![("pair", if r.is_some() { Label::Ignores } else { Label::None })]
        }
        (TimePolicyRecord::Ignores { .. }, Regions::Triplet { triple, residuals }) => {
            let lab = |empty: bool| if empty { Label::None } else { Label::Ignores };
            let mut v = vec![("t", lab(triple.is_none()))];
            v.extend(RESIDUAL_NAMES.iter().zip(&residuals).map(|(n, r)| (*n, lab(region_empty(r)))));
            v
        }
    }
}

fn pair_label(e: &Entry, id: &str) -> Result<Label, AnalysisError> {
    match &e.time_policy {
        TimePolicyRecord::Pair { policy, .. } => Ok(*policy),
        TimePolicyRecord::Ignores { .. } => Ok(Label::Ignores),
        TimePolicyRecord::Triplet { .. } => Err(AnalysisError::UnusablePair(id.to_string())),
    }
}

fn normalize(l: Label) -> Label {
    if l == Label::PartialIgnore {
        Label::Ignores
    } else {
        l
    }
}

/// Compare every non-none residual-pair label of `triplets` with the pair
/// policy of the same relation in `pairs` (same scenario). Triple-overlap
/// labels are not compared.
pub fn baseline_consistency(
    pairs: &PolicyReport,
    triplets: &PolicyReport,
) -> Result<Vec<ConsistencyFinding>, AnalysisError> {
    if pairs.protocol != triplets.protocol {
        return Err(AnalysisError::ProtocolMismatch(pairs.protocol, triplets.protocol));
    }
    let mut out = Vec::new();
    for ((_, id), e) in &triplets.records {
        let instance = instance_for_id(id)?;
        if instance.n() != 3 || (matches!(e.time_policy, TimePolicyRecord::Ignores { .. }) && has_gap(&instance)) {
            continue;
        }
        for (k, (name, label)) in components(&e.time_policy, &instance).into_iter().skip(1).enumerate() {
            if label == Label::None {
                continue;
            }
            let relation = instance.relations.relations()[k];
            let pid = test_case_id(instance.protocol, &instance.scenario, pair_ordinal(relation));
            let pe = pairs.get(&pid).ok_or_else(|| AnalysisError::MissingPair { id: pid.clone(), relation })?;
            let expected = pair_label(pe, &pid)?;
            if normalize(label) != expected {
                out.push(ConsistencyFinding {
                    test_case_id: id.clone(),
                    component: name.to_string(),
                    expected,
                    observed: label,
                    kind: FindingKind::BaselineResidualMismatch,
                });
            }
        }
    }
    Ok(out)
}

/// Pair policy tables per scenario.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairPolicies(pub BTreeMap<String, PolicyTable>);

impl PairPolicies {
    pub fn uniform<'a>(table: &PolicyTable, scenarios: impl IntoIterator<Item = &'a str>) -> Self {
        PairPolicies(scenarios.into_iter().map(|s| (s.to_string(), table.clone())).collect())
    }

    /// Read each scenario's table off its 13 pair records.
    pub fn from_pair_report(report: &PolicyReport) -> Result<Self, AnalysisError> {
        let mut out = BTreeMap::new();
        for scenario in report.scenarios() {
            let spec = scenario.parse()?;
            let mut table = PolicyTable::uniform(PairPolicy::Old);
            for r in AllenRelation::OVERLAPPING {
                let id = test_case_id(report.protocol, &spec, pair_ordinal(r));
                let e = report.get(&id).ok_or_else(|| AnalysisError::MissingPair { id: id.clone(), relation: r })?;
                let p = match pair_label(e, &id)? {
                    Label::Old => PairPolicy::Old,
                    Label::New => PairPolicy::New,
                    Label::Ignores => PairPolicy::Ignore,
                    _ => return Err(AnalysisError::UnusablePair(id)),
                };
                table.set(r, p)?;
            }
            out.insert(scenario.to_string(), table);
        }
        Ok(PairPolicies(out))
    }

    pub fn table(&self, scenario: &str) -> Result<&PolicyTable, AnalysisError> {
        self.0.get(scenario).ok_or_else(|| AnalysisError::MissingScenario(scenario.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredictionSummary {
    pub preset: String,
    pub checked: usize,
    pub mismatched_cases: usize,
    pub per_scenario: BTreeMap<String, usize>,
    pub findings: Vec<ConsistencyFinding>,
}

/// Predict every triplet record with `preset_name` and the scenario's pair
/// table, and diff the full records.
pub fn prediction_consistency(
    observed: &PolicyReport,
    pair_policies: &PairPolicies,
    preset_name: &str,
) -> Result<PredictionSummary, AnalysisError> {
    preset_for(preset_name, observed.protocol)?;
    let mut summary = PredictionSummary {
        preset: preset_name.to_string(),
        checked: 0,
        mismatched_cases: 0,
        per_scenario: BTreeMap::new(),
        findings: Vec::new(),
    };
    for ((scenario, id), e) in &observed.records {
        let instance = instance_for_id(id)?;
        if instance.n() != 3 {
            continue;
        }
        summary.checked += 1;
        let predicted = predict_policy(&instance, pair_policies.table(scenario)?, preset_name)?;
        let count = summary.per_scenario.entry(scenario.clone()).or_insert(0);
        if predicted == e.time_policy {
            continue;
        }
        *count += 1;
        summary.mismatched_cases += 1;
        let before = summary.findings.len();
        let want = components(&predicted, &instance);
        for ((name, exp), (_, obs)) in want.into_iter().zip(components(&e.time_policy, &instance)) {
            if exp != obs {
                summary.findings.push(ConsistencyFinding {
                    test_case_id: id.clone(),
                    component: name.to_string(),
                    expected: exp,
                    observed: obs,
                    kind: FindingKind::PredictionMismatch,
                });
            }
        }
        if summary.findings.len() == before {
            summary.findings.push(ConsistencyFinding {
                test_case_id: id.clone(),
                component: "anomalies".to_string(),
                expected: Label::Anomalous,
                observed: Label::Anomalous,
                kind: FindingKind::PredictionMismatch,
            });
        }
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Explanation {
    pub mismatches: BTreeMap<String, usize>,
    /// Presets reproducing every triplet record.
    pub explained_by: Vec<String>,
}

/// Run the prediction check for each preset; an implementation is explained
/// by a preset with zero mismatching test cases.
pub fn explain(
    observed: &PolicyReport,
    pair_policies: &PairPolicies,
    presets: &[&str],
) -> Result<Explanation, AnalysisError> {
    let mut mismatches = BTreeMap::new();
    for p in presets {
        let s = prediction_consistency(observed, pair_policies, p)?;
        mismatches.insert(p.to_string(), s.mismatched_cases);
    }
    let explained_by = mismatches.iter().filter(|(_, &n)| n == 0).map(|(p, _)| p.clone()).collect();
    Ok(Explanation { mismatches, explained_by })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, ScenarioSpec};

    fn simulated(protocol: Protocol, scenarios: &[&str], table: &PolicyTable, preset_name: &str) -> PolicyReport {
        let specs: Vec<ScenarioSpec> = scenarios.iter().map(|s| s.parse().unwrap()).collect();
        simulated_report(&build_corpus(protocol, &specs).unwrap(), table, preset_name, preset_name).unwrap()
    }

    fn s_new_table() -> PolicyTable {
        PolicyTable::from_fn(|r| if r == AllenRelation::S { PairPolicy::New } else { PairPolicy::Old })
    }

    #[test]
    fn similarity_arithmetic() {
        let a = simulated(Protocol::Tcp, &["s_c"], &PolicyTable::uniform(PairPolicy::Old), "aimn");
        let s = similarity(&a, &a, None).unwrap();
        assert_eq!((s.percent, s.common), (100.0, 422));
        let mut b = a.clone();
        let key = b.records.keys().nth(40).unwrap().clone();
        b.records.get_mut(&key).unwrap().time_policy = TimePolicyRecord::Ignores { n: 3 };
        let s = similarity(&a, &b, None).unwrap();
        assert_eq!(s.identical, 421);
        assert!((s.percent - 99.76).abs() < 0.005);
        assert_eq!(s.differing, vec![key.1.clone()]);
        assert_eq!(similarity(&b, &a, None).unwrap().percent, s.percent);
        let other = simulated(Protocol::Tcp, &["s_sf"], &PolicyTable::uniform(PairPolicy::Old), "aimn");
        assert!(matches!(similarity(&a, &other, None), Err(AnalysisError::EmptyIntersection)));
    }

    #[test]
    fn always_old_is_one_group() {
        let scenarios: Vec<String> = ScenarioSpec::all_for(Protocol::Tcp).iter().map(|s| s.to_string()).collect();
        let names: Vec<&str> = scenarios.iter().map(String::as_str).collect();
        let r = simulated(Protocol::Tcp, &names, &PolicyTable::uniform(PairPolicy::Old), "aimn");
        let groups = scenario_groups(&r);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].len(), 11);
    }

    #[test]
    fn pointer_sensitive_tcp_splits_start_first_family() {
        // all-new: a segment delivered at once cannot be overwritten, so only
        // scenarios that hold test data back until Start arrives look "new"
        let r = simulated(
            Protocol::Tcp,
            &["s_c", "s_sp", "s_sf", "s_ef_sf"],
            &PolicyTable::uniform(PairPolicy::New),
            "aimn",
        );
        let groups = scenario_groups(&r);
        assert!(groups.len() >= 2);
        assert!(groups.iter().any(|g| g.contains(&"s_sf".to_string()) && !g.contains(&"s_c".to_string())));
        let covered: usize = groups.iter().map(Vec::len).sum();
        assert_eq!(covered, 4);
    }

    #[test]
    fn one_differing_case_separates_scenarios() {
        let mut r = simulated(Protocol::Tcp, &["s_c", "s_ep"], &PolicyTable::uniform(PairPolicy::Old), "aimn");
        assert_eq!(scenario_groups(&r).len(), 1);
        let key = r.records.keys().find(|(s, _)| s == "s_ep").unwrap().clone();
        r.records.get_mut(&key).unwrap().time_policy = TimePolicyRecord::Ignores { n: 2 };
        assert_eq!(scenario_groups(&r), vec![vec!["s_c".to_string()], vec!["s_ep".to_string()]]);
    }

    #[test]
    fn baseline_all_old_is_clean() {
        let r = simulated(Protocol::Ipv4, &["s_c-of"], &PolicyTable::uniform(PairPolicy::Old), "aimnipa");
        let f = baseline_consistency(&r, &r).unwrap();
        assert!(f.is_empty(), "{} {:?}", f.len(), &f[..f.len().min(5)]);
    }

    #[test]
    fn baseline_flags_merge_side_effect() {
        let r = simulated(Protocol::Tcp, &["s_sf"], &s_new_table(), "aima");
        let findings = baseline_consistency(&r, &r).unwrap();
        let mms = base_sequences().iter().position(|(s, _)| s.to_string() == "(M, M, S)").unwrap();
        let id = test_case_id(Protocol::Tcp, &"s_sf".parse().unwrap(), mms);
        assert!(findings.iter().any(|f| f.test_case_id == id), "{findings:?}");
    }

    #[test]
    fn baseline_needs_pair_records() {
        let r = simulated(Protocol::Tcp, &["s_c"], &s_new_table(), "aimn");
        let mut pairs = r.clone();
        pairs.records.retain(|(_, id), _| !id.ends_with(":004"));
        assert!(matches!(baseline_consistency(&pairs, &r), Err(AnalysisError::MissingPair { .. })));
    }

    #[test]
    fn prediction_closed_loop_and_merge_divergence() {
        let table = s_new_table();
        let observed = simulated(Protocol::Tcp, &["s_sf"], &table, "aima");
        let pp = PairPolicies::uniform(&table, ["s_sf"]);
        assert_eq!(prediction_consistency(&observed, &pp, "aima").unwrap().mismatched_cases, 0);
        let s = prediction_consistency(&observed, &pp, "aimn").unwrap();
        assert!(s.mismatched_cases > 0);
        let mms = base_sequences().iter().position(|(s, _)| s.to_string() == "(M, M, S)").unwrap();
        assert!(s.findings.iter().any(|f| f.test_case_id.ends_with(&format!(":{mms:03}"))));
        assert!(prediction_consistency(&observed, &pp, "nope").is_err());
        let e = explain(&observed, &pp, &["aimn", "aima"]).unwrap();
        assert!(e.explained_by.contains(&"aima".to_string()));
        assert!(!e.explained_by.contains(&"aimn".to_string()));
    }

    #[test]
    fn pair_policies_from_report() {
        let table = PolicyTable::from_fn(|r| match r {
            AllenRelation::O => PairPolicy::Ignore,
            AllenRelation::D => PairPolicy::New,
            _ => PairPolicy::Old,
        });
        let r = simulated(Protocol::Ipv4, &["s_c-of"], &table, "aimnipa");
        assert_eq!(PairPolicies::from_pair_report(&r).unwrap().table("s_c-of").unwrap(), &table);
    }
}
