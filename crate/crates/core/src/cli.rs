//! Command-line front end: generate, synth, simulate, extract, analyze.
//!
//! Layout under the output directory:
//!
//! ```text
//! <out>/<protocol>/manifest.jsonl
//! <out>/<protocol>/counts.json
//! <out>/<protocol>/reconciliation.json        (IP only)
//! <out>/<protocol>/<scenario>/requests.pcap
//! <out>/<protocol>/<scenario>/capture.pcap     (synth --reflect)
//! <out>/<protocol>/reports/<name>.jsonl
//! <out>/<protocol>/analysis/*.json, similarity.txt
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    self, baseline_consistency, explain, prediction_consistency, scenario_groups, similarity, simulated_report,
    AnalysisError, PairPolicies, PolicyReport,
};
use crate::corpus::{
    build_corpus, read_manifest, reconcile_ip_count, write_manifest, CorpusError, ManifestRecord, Protocol,
    ScenarioSpec,
};
use crate::policy::{
    detect_errors, extract_policy, read_observations, read_report, write_report, Observation, PolicyError, ReportRecord,
};
use crate::simulator::{all_presets, preset_for, PairPolicy, PolicyTable, SimulatorError};
use crate::wire::{
    assign_wire_keys, extract_replies, from_frames, read_pcap, reflect, synth_instance, to_frames, write_pcap,
    FrameBlueprint, NetConfig, WireError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_REASSEMBLY_ERRORS: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0} reassembly error(s) detected")]
    ReassemblyErrors(usize),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::ReassemblyErrors(_) => EXIT_REASSEMBLY_ERRORS,
            CliError::Other(_) => EXIT_OTHER,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io(source) => CliError::Io { context: "manifest".into(), source },
            CorpusError::UnknownScenario(_)
            | CorpusError::UnsupportedScenario { .. }
            | CorpusError::UnknownProtocol(_) => CliError::Config(e.to_string()),
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::Io(source) => CliError::Io { context: "report".into(), source },
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<SimulatorError> for CliError {
    fn from(e: SimulatorError) -> Self {
        match e {
            SimulatorError::Policy(p) => p.into(),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<WireError> for CliError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Io(source) => CliError::Io { context: "pcap".into(), source },
            WireError::Config(_) | WireError::KeyOverflow { .. } => CliError::Config(e.to_string()),
            WireError::Corpus(c) => c.into(),
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Corpus(c) => c.into(),
            AnalysisError::Simulator(s) => s.into(),
            AnalysisError::Policy(p) => p.into(),
            AnalysisError::ProtocolMismatch(..) => CliError::Config(e.to_string()),
            e => CliError::Other(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSelection {
    /// `all`, `end`, `mf`, an agnostic scenario name or a full name.
    Selector(String),
    List(Vec<String>),
}

impl Default for ScenarioSelection {
    fn default() -> Self {
        ScenarioSelection::Selector("all".into())
    }
}

impl ScenarioSelection {
    /// Resolve to scenarios in canonical order, without repeats.
    pub fn resolve(&self, protocol: Protocol) -> Result<Vec<ScenarioSpec>, CorpusError> {
        let selectors: Vec<&str> = match self {
            ScenarioSelection::Selector(s) => vec![s.as_str()],
            ScenarioSelection::List(v) => v.iter().map(String::as_str).collect(),
        };
        let mut picked = BTreeSet::new();
        for s in selectors {
            picked.extend(ScenarioSpec::select(protocol, s)?);
        }
        Ok(ScenarioSpec::all_for(protocol).into_iter().filter(|s| picked.contains(s)).collect())
    }
}

/// Contents of the configuration file; every field may be overridden by flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub scenarios: ScenarioSelection,
    pub output_dir: PathBuf,
    /// Presets used by `analyze` for prediction; empty means every preset of the protocol.
    pub presets: Vec<String>,
    /// Report files read by `analyze` in addition to those on the command line.
    pub reports: Vec<PathBuf>,
    pub net: NetConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            protocol: Protocol::Ipv4,
            scenarios: ScenarioSelection::default(),
            output_dir: PathBuf::from("out"),
            presets: Vec::new(),
            reports: Vec::new(),
            net: NetConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    fn validate(&self) -> Result<Vec<ScenarioSpec>, CliError> {
        self.net.validate()?;
        for p in &self.presets {
            preset_for(p, self.protocol)?;
        }
        Ok(self.scenarios.resolve(self.protocol)?)
    }

    pub fn protocol_dir(&self) -> PathBuf {
        self.output_dir.join(self.protocol.name())
    }

    fn manifest_path(&self) -> PathBuf {
        self.protocol_dir().join("manifest.jsonl")
    }
}

#[derive(Debug, Parser)]
#[command(name = "overlap-audit", version, about = "Overlapping fragment and segment reassembly test harness")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// ipv4, ipv6 or tcp.
    #[arg(long, short, global = true)]
    pub protocol: Option<Protocol>,
    /// Comma-separated scenario selectors (`all`, `end`, `mf`, names).
    #[arg(long, short, global = true, value_delimiter = ',')]
    pub scenarios: Option<Vec<String>>,
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the corpus and write the manifest and counts.
    Generate,
    /// Write request PCAPs per scenario; optionally a simulated target's capture.
    Synth {
        /// Also write capture.pcap as answered by this preset.
        #[arg(long)]
        reflect: Option<String>,
        #[command(flatten)]
        table: TableArgs,
    },
    /// Simulate the corpus with a preset and write a policy report.
    Simulate {
        #[arg(long)]
        preset: String,
        #[command(flatten)]
        table: TableArgs,
        /// Report name; defaults to the preset.
        #[arg(long)]
        name: Option<String>,
    },
    /// Turn captures (or an observation file) into a policy report.
    Extract {
        /// Observation JSONL instead of per-scenario capture.pcap files.
        #[arg(long)]
        observations: Option<PathBuf>,
        #[arg(long, default_value = "capture")]
        name: String,
    },
    /// Compare reports: similarity, scenario groups, consistency.
    Analyze {
        reports: Vec<PathBuf>,
        /// Restrict prediction to these presets.
        #[arg(long, value_delimiter = ',')]
        presets: Option<Vec<String>>,
    },
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// JSON pair-policy table (relation tag -> old/new/ignore).
    #[arg(long, conflicts_with = "uniform")]
    pub table: Option<PathBuf>,
    /// Same policy for every overlapping relation.
    #[arg(long)]
    pub uniform: Option<PairPolicy>,
}

impl TableArgs {
    fn load(&self) -> Result<PolicyTable, CliError> {
        match (&self.table, self.uniform) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
            }
            (None, Some(p)) => Ok(PolicyTable::uniform(p)),
            (None, None) => Ok(PolicyTable::uniform(PairPolicy::Old)),
        }
    }
}

pub fn resolve_config(g: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = g.protocol {
        cfg.protocol = p;
    }
    if let Some(s) = &g.scenarios {
        cfg.scenarios = ScenarioSelection::List(s.clone());
    }
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.global)?;
    let scenarios = cfg.validate()?;
    match &cli.command {
        Command::Generate => cmd_generate(&cfg, &scenarios, out),
        Command::Synth { reflect, table } => {
            let server = match reflect {
                Some(p) => Some((table.load()?, p.as_str())),
                None => None,
            };
            cmd_synth(&cfg, server.as_ref().map(|(t, p)| (t, *p)), out)
        }
        Command::Simulate { preset, table, name } => {
            let name = name.as_deref().unwrap_or(preset);
            cmd_simulate(&cfg, &scenarios, &table.load()?, preset, name, out).map(|_| ())
        }
        Command::Extract { observations, name } => cmd_extract(&cfg, observations.as_deref(), name, out).map(|_| ()),
        Command::Analyze { reports, presets } => {
            let mut paths = cfg.reports.clone();
            paths.extend(reports.iter().cloned());
            let presets = presets.clone().unwrap_or_else(|| cfg.presets.clone());
            cmd_analyze(&cfg, &paths, &presets, out)
        }
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(format!("writing {}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(format!("creating {}", path.display())))
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(io_err("writing output"))
}

#[derive(Debug, Serialize)]
struct CountsFile<'a> {
    protocol: Protocol,
    instances: usize,
    unique: usize,
    per_scenario: &'a [crate::corpus::ScenarioCount],
}

pub fn cmd_generate(cfg: &RunConfig, scenarios: &[ScenarioSpec], out: &mut dyn Write) -> Result<(), CliError> {
    let corpus = build_corpus(cfg.protocol, scenarios)?;
    let dir = cfg.protocol_dir();
    create_dir(&dir)?;
    write_manifest(&cfg.manifest_path(), &corpus.manifest())?;
    let counts = corpus.counts();
    for c in &counts {
        say(out, format_args!("{:<12} {:>5} instances {:>5} unique", c.scenario, c.instances, c.unique))?;
    }
    let unique = corpus.unique_count();
    say(out, format_args!("{} total: {} instances, {} after dedup", cfg.protocol, corpus.len(), unique))?;
    write_json(
        &dir.join("counts.json"),
        &CountsFile { protocol: cfg.protocol, instances: corpus.len(), unique, per_scenario: &counts },
    )?;
    if cfg.protocol.is_ip() {
        let r = reconcile_ip_count(cfg.protocol)?;
        for i in &r.interpretations {
            say(
                out,
                format_args!("reconciliation [{}]: {} unique vs {} ({:+})", i.selection, i.unique, r.target, i.gap),
            )?;
        }
        write_json(&dir.join("reconciliation.json"), &r)?;
    }
    Ok(())
}

fn load_manifest(cfg: &RunConfig) -> Result<Vec<ManifestRecord>, CliError> {
    let path = cfg.manifest_path();
    if !path.exists() {
        return Err(CliError::Io {
            context: format!("reading {}", path.display()),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "run `generate` first"),
        });
    }
    let records = read_manifest(&path)?;
    if records.iter().any(|r| r.protocol != cfg.protocol) {
        return Err(CliError::Config(format!("{} holds another protocol", path.display())));
    }
    Ok(records)
}

/// Scenarios in manifest order.
fn manifest_scenarios(records: &[ManifestRecord]) -> Vec<ScenarioSpec> {
    let mut seen = Vec::new();
    for r in records {
        if !seen.contains(&r.scenario) {
            seen.push(r.scenario);
        }
    }
    seen
}

pub fn cmd_synth(cfg: &RunConfig, server: Option<(&PolicyTable, &str)>, out: &mut dyn Write) -> Result<(), CliError> {
    let mut records = load_manifest(cfg)?;
    assign_wire_keys(&mut records, &cfg.net)?;
    let mech = server.map(|(_, p)| preset_for(p, cfg.protocol)).transpose()?;
    let dir = cfg.protocol_dir();
    for scenario in manifest_scenarios(&records) {
        let mut requests: Vec<FrameBlueprint> = Vec::new();
        for r in records.iter().filter(|r| r.scenario == scenario && r.is_canonical()) {
            let keys = r.wire.expect("keys assigned above");
            requests.extend(synth_instance(&r.to_instance()?, keys, &cfg.net)?);
        }
        let sdir = dir.join(scenario.to_string());
        create_dir(&sdir)?;
        write_pcap(&to_frames(&requests, cfg.net.spacing_us), &sdir.join("requests.pcap"))?;
        let mut line = format!("{scenario}: {} request frames", requests.len());
        if let (Some((table, _)), Some(mech)) = (server, mech) {
            let capture = reflect(&requests, table, mech)?;
            write_pcap(&to_frames(&capture, cfg.net.spacing_us), &sdir.join("capture.pcap"))?;
            line.push_str(&format!(", {} capture frames", capture.len()));
        }
        say(out, format_args!("{line}"))?;
    }
    write_manifest(&cfg.manifest_path(), &records)?;
    Ok(())
}

fn reports_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let d = cfg.protocol_dir().join("reports");
    create_dir(&d)?;
    Ok(d)
}

fn check_name(name: &str) -> Result<(), CliError> {
    if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(CliError::Config(format!("bad report name `{name}`")));
    }
    Ok(())
}

pub fn cmd_simulate(
    cfg: &RunConfig,
    scenarios: &[ScenarioSpec],
    table: &PolicyTable,
    preset: &str,
    name: &str,
    out: &mut dyn Write,
) -> Result<PathBuf, CliError> {
    check_name(name)?;
    preset_for(preset, cfg.protocol)?;
    let corpus = build_corpus(cfg.protocol, scenarios)?;
    let report = simulated_report(&corpus, table, preset, name)?;
    let path = reports_dir(cfg)?.join(format!("{name}.jsonl"));
    write_report(&path, &report.to_records())?;
    say(out, format_args!("{name}: {} records, {} errors", report.records.len(), report.error_count()))?;
    Ok(path)
}

/// Writes the report, then fails with `ReassemblyErrors` if any record carries errors.
pub fn cmd_extract(
    cfg: &RunConfig,
    observations: Option<&Path>,
    name: &str,
    out: &mut dyn Write,
) -> Result<PathBuf, CliError> {
    check_name(name)?;
    let records = load_manifest(cfg)?;
    let mut observed: BTreeMap<String, Observation> = BTreeMap::new();
    match observations {
        Some(path) => {
            for o in read_observations(path)? {
                observed.insert(o.test_case_id.clone(), o);
            }
        }
        None => {
            for scenario in manifest_scenarios(&records) {
                let path = cfg.protocol_dir().join(scenario.to_string()).join("capture.pcap");
                let frames = from_frames(&read_pcap(&path)?)?;
                let canonical: Vec<ManifestRecord> =
                    records.iter().filter(|r| r.scenario == scenario && r.is_canonical()).cloned().collect();
                for o in extract_replies(&frames, &canonical)? {
                    observed.insert(o.test_case_id.clone(), o);
                }
            }
        }
    }
    let mut report = Vec::with_capacity(records.len());
    for r in &records {
        let o = observed
            .get(&r.id)
            .or_else(|| observed.get(&r.canonical_id))
            .ok_or_else(|| CliError::Other(format!("no observation for `{}`", r.id)))?;
        let o = Observation { test_case_id: r.id.clone(), ..o.clone() };
        let t = r.to_instance()?;
        report.push(ReportRecord {
            implementation: name.to_string(),
            protocol: r.protocol,
            scenario: r.scenario.to_string(),
            test_case_id: r.id.clone(),
            time_policy: extract_policy(&t, &o)?,
            errors: detect_errors(&t, &o)?,
        });
    }
    let path = reports_dir(cfg)?.join(format!("{name}.jsonl"));
    write_report(&path, &report)?;
    let errors: usize = report.iter().map(|r| r.errors.len()).sum();
    say(out, format_args!("{name}: {} records, {errors} errors", report.len()))?;
    if errors > 0 {
        return Err(CliError::ReassemblyErrors(errors));
    }
    Ok(path)
}

#[derive(Debug, Serialize)]
struct SimilarityFile {
    implementations: Vec<String>,
    /// Row-major percentages; `null` where two reports share no test case.
    percent: Vec<Vec<Option<f64>>>,
    common: Vec<Vec<usize>>,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum Section<T> {
    Ok(T),
    Unavailable { unavailable: String },
}

impl<T> Section<T> {
    fn from(r: Result<T, AnalysisError>) -> Self {
        match r {
            Ok(v) => Section::Ok(v),
            Err(e) => Section::Unavailable { unavailable: e.to_string() },
        }
    }
}

#[derive(Debug, Serialize)]
struct BaselineSummary {
    findings: usize,
    per_scenario: BTreeMap<String, usize>,
    details: Vec<analysis::ConsistencyFinding>,
}

#[derive(Debug, Serialize)]
struct PresetRow {
    mismatched_cases: usize,
    per_scenario: BTreeMap<String, usize>,
}

#[derive(Debug, Serialize)]
struct PredictionFile {
    explained_by: Vec<String>,
    presets: BTreeMap<String, PresetRow>,
}

/// Canonical ids over the scenarios present in `reports`.
fn canonical_ids(protocol: Protocol, reports: &[PolicyReport]) -> Result<BTreeSet<String>, CliError> {
    let present: BTreeSet<String> = reports.iter().flat_map(|r| r.scenarios()).map(str::to_string).collect();
    let scenarios: Vec<ScenarioSpec> =
        ScenarioSpec::all_for(protocol).into_iter().filter(|s| present.contains(&s.to_string())).collect();
    let corpus = build_corpus(protocol, &scenarios)?;
    Ok(corpus.unique().map(|t| t.id.clone()).collect())
}

fn scenario_of(id: &str) -> String {
    id.split(':').nth(1).unwrap_or_default().to_string()
}

pub fn cmd_analyze(
    cfg: &RunConfig,
    paths: &[PathBuf],
    presets: &[String],
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if paths.is_empty() {
        return Err(CliError::Config("analyze needs at least one report".into()));
    }
    let mut reports = Vec::new();
    for p in paths {
        if !p.exists() {
            return Err(CliError::Io {
                context: format!("reading {}", p.display()),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such report"),
            });
        }
        reports.push(PolicyReport::from_records(read_report(p)?)?);
    }
    let protocol = reports[0].protocol;
    if let Some(r) = reports.iter().find(|r| r.protocol != protocol) {
        return Err(AnalysisError::ProtocolMismatch(protocol, r.protocol).into());
    }
    let names: Vec<String> = reports.iter().map(|r| r.implementation.clone()).collect();
    if names.iter().collect::<BTreeSet<_>>().len() != names.len() {
        return Err(CliError::Config("reports must have distinct implementation names".into()));
    }
    let presets: Vec<String> = if presets.is_empty() {
        all_presets().filter(|p| p.config.is_tcp() == (protocol == Protocol::Tcp)).map(|p| p.name.to_string()).collect()
    } else {
        presets.to_vec()
    };
    for p in &presets {
        preset_for(p, protocol)?;
    }
    let dir = cfg.output_dir.join(protocol.name()).join("analysis");
    create_dir(&dir)?;

    if reports.len() >= 2 {
        let canonical = canonical_ids(protocol, &reports)?;
        let n = reports.len();
        let mut percent = vec![vec![None; n]; n];
        let mut common = vec![vec![0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if let Ok(s) = similarity(&reports[i], &reports[j], Some(&canonical)) {
                    percent[i][j] = Some((s.percent * 100.0).round() / 100.0);
                    common[i][j] = s.common;
                }
            }
        }
        let mut txt = String::from("implementation");
        for nm in &names {
            txt.push('\t');
            txt.push_str(nm);
        }
        txt.push('\n');
        for (i, row) in percent.iter().enumerate() {
            txt.push_str(&names[i]);
            for v in row {
                txt.push('\t');
                txt.push_str(&v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}")));
            }
            txt.push('\n');
        }
        fs::write(dir.join("similarity.txt"), &txt).map_err(io_err("writing similarity.txt"))?;
        write_json(&dir.join("similarity.json"), &SimilarityFile { implementations: names.clone(), percent, common })?;
        say(out, format_args!("similarity matrix over {n} reports written"))?;
    }

    let mut groups = BTreeMap::new();
    let mut baseline = BTreeMap::new();
    let mut prediction = BTreeMap::new();
    for r in &reports {
        let g = scenario_groups(r);
        say(out, format_args!("{}: {} scenario group(s)", r.implementation, g.len()))?;
        groups.insert(r.implementation.clone(), g);

        let b = baseline_consistency(r, r).map(|details| {
            let mut per_scenario = BTreeMap::new();
            for f in &details {
                *per_scenario.entry(scenario_of(&f.test_case_id)).or_insert(0) += 1;
            }
            BaselineSummary { findings: details.len(), per_scenario, details }
        });
        if let Ok(b) = &b {
            say(out, format_args!("{}: {} baseline finding(s)", r.implementation, b.findings))?;
        }
        baseline.insert(r.implementation.clone(), Section::from(b));

        let p = PairPolicies::from_pair_report(r).and_then(|pairs| {
            let refs: Vec<&str> = presets.iter().map(String::as_str).collect();
            let e = explain(r, &pairs, &refs)?;
            let mut rows = BTreeMap::new();
            for p in &presets {
                let s = prediction_consistency(r, &pairs, p)?;
                rows.insert(
                    p.clone(),
                    PresetRow { mismatched_cases: s.mismatched_cases, per_scenario: s.per_scenario },
                );
            }
            Ok(PredictionFile { explained_by: e.explained_by, presets: rows })
        });
        if let Ok(p) = &p {
            say(out, format_args!("{}: explained by [{}]", r.implementation, p.explained_by.join(", ")))?;
        }
        prediction.insert(r.implementation.clone(), Section::from(p));
    }
    write_json(&dir.join("groups.json"), &groups)?;
    write_json(&dir.join("baseline.json"), &baseline)?;
    write_json(&dir.join("prediction.json"), &prediction)?;
    Ok(())
}
