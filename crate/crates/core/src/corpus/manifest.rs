//! Line-delimited JSON manifest, one record per instance.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChunkSpec, CorpusError, Protocol, Role, ScenarioSpec, TestCaseInstance};
use crate::interval::RelationSequence;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub chunk_id: u32,
    pub time_index: u32,
    pub start_cell: u32,
    pub end_cell: u32,
    pub role: Role,
    pub carries_header: bool,
    pub mf_unset: bool,
    pub payload_hex: String,
}

/// Identifiers used on the wire to correlate replies with an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireKeys {
    /// IPv4 Identification or IPv6 Fragment header Identification.
    pub ip_id: u32,
    pub icmp_id: u16,
    /// TCP client source port.
    pub src_port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub protocol: Protocol,
    pub relations: RelationSequence,
    pub scenario: ScenarioSpec,
    pub chunks: Vec<ChunkRecord>,
    pub dedup_key: String,
    /// Id of the instance whose traffic is actually sent for this fingerprint.
    pub canonical_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wire: Option<WireKeys>,
}

impl ManifestRecord {
    pub fn from_instance(t: &TestCaseInstance, canonical_id: &str) -> Self {
        let family = t.family();
        ManifestRecord {
            id: t.id.clone(),
            protocol: t.protocol,
            relations: t.relations.clone(),
            scenario: t.scenario,
            chunks: t
                .chunks
                .iter()
                .map(|c| ChunkRecord {
                    chunk_id: c.chunk_id,
                    time_index: c.time_index,
                    start_cell: c.start_cell,
                    end_cell: c.end_cell,
                    role: c.role,
                    carries_header: c.carries_header,
                    mf_unset: c.mf_unset,
                    payload_hex: hex::encode(c.payload(family)),
                })
                .collect(),
            dedup_key: t.dedup_key.clone(),
            canonical_id: canonical_id.to_string(),
            wire: None,
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.id == self.canonical_id
    }

    /// Rebuild the instance from the record's geometry.
    pub fn to_instance(&self) -> Result<TestCaseInstance, CorpusError> {
        let (_, _, ordinal) = super::parse_test_case_id(&self.id)?;
        Ok(TestCaseInstance {
            id: self.id.clone(),
            protocol: self.protocol,
            ordinal,
            relations: self.relations.clone(),
            scenario: self.scenario,
            chunks: self
                .chunks
                .iter()
                .map(|c| ChunkSpec {
                    chunk_id: c.chunk_id,
                    time_index: c.time_index,
                    start_cell: c.start_cell,
                    end_cell: c.end_cell,
                    role: c.role,
                    carries_header: c.carries_header,
                    mf_unset: c.mf_unset,
                })
                .collect(),
            dedup_key: self.dedup_key.clone(),
        })
    }
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| CorpusError::Json { line: 0, source: e })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, CorpusError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Json { line: i + 1, source: e })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, ScenarioSpec};

    #[test]
    fn manifest_round_trip() {
        let scen: Vec<ScenarioSpec> = ["s_c-of", "s_c-nf"].iter().map(|s| s.parse().unwrap()).collect();
        let c = build_corpus(Protocol::Ipv4, &scen).unwrap();
        let recs = c.manifest();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        write_manifest(&p, &recs).unwrap();
        let back = read_manifest(&p).unwrap();
        assert_eq!(back, recs);
        for (r, t) in back.iter().zip(&c.instances) {
            assert_eq!(&r.to_instance().unwrap(), t);
        }
        // some of_/nf_ instances collapse onto the of_ one
        assert!(back.iter().any(|r| !r.is_canonical()));
    }
}
