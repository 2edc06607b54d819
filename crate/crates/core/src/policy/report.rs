//! Line-delimited report and observation files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ErrorRecord, Observation, PolicyError, TimePolicyRecord};
use crate::corpus::Protocol;

/// One line of a policy report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub implementation: String,
    pub protocol: Protocol,
    pub scenario: String,
    pub test_case_id: String,
    pub time_policy: TimePolicyRecord,
    #[serde(default)]
    pub errors: Vec<ErrorRecord>,
}

/// One line of an observation file. `payload_hex` is `"none"` for no response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationLine {
    pub test_case_id: String,
    pub payload_hex: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reply_before_complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_terminated: Option<bool>,
}

impl From<&Observation> for ObservationLine {
    fn from(o: &Observation) -> Self {
        ObservationLine {
            test_case_id: o.test_case_id.clone(),
            payload_hex: o.payload.as_ref().map_or_else(|| "none".to_string(), hex::encode),
            reply_before_complete: o.reply_before_complete,
            session_terminated: o.session_terminated,
        }
    }
}

impl TryFrom<ObservationLine> for Observation {
    type Error = PolicyError;
    fn try_from(l: ObservationLine) -> Result<Self, Self::Error> {
        let payload = match l.payload_hex.as_str() {
            "none" => None,
            h => Some(hex::decode(h).map_err(|source| PolicyError::Hex { id: l.test_case_id.clone(), source })?),
        };
        Ok(Observation {
            test_case_id: l.test_case_id,
            payload,
            reply_before_complete: l.reply_before_complete,
            session_terminated: l.session_terminated,
        })
    }
}

fn write_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), PolicyError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        let line = serde_json::to_string(&item).map_err(|source| PolicyError::Json {
            path: path.display().to_string(),
            line: 0,
            source,
        })?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PolicyError> {
    let r = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| PolicyError::Json {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn write_report(path: &Path, records: &[ReportRecord]) -> Result<(), PolicyError> {
    write_lines(path, records)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRecord>, PolicyError> {
    read_lines(path)
}

pub fn write_observations(path: &Path, obs: &[Observation]) -> Result<(), PolicyError> {
    write_lines(path, obs.iter().map(ObservationLine::from))
}

pub fn read_observations(path: &Path) -> Result<Vec<Observation>, PolicyError> {
    read_lines::<ObservationLine>(path)?.into_iter().map(Observation::try_from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_none_and_hex() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("obs.jsonl");
        fs::write(
            &p,
            "{\"test_case_id\":\"tcp:s_c:000\",\"payload_hex\":\"none\"}\n\n{\"test_case_id\":\"tcp:s_c:001\",\"payload_hex\":\"3030\",\"session_terminated\":false}\n",
        )
        .unwrap();
        let obs = read_observations(&p).unwrap();
        assert_eq!(obs[0].payload, None);
        assert_eq!(obs[1].payload.as_deref(), Some(&b"00"[..]));
        assert_eq!(obs[1].session_terminated, Some(false));
        write_observations(&p, &obs).unwrap();
        assert_eq!(read_observations(&p).unwrap(), obs);
        fs::write(&p, "{\"test_case_id\":\"x\",\"payload_hex\":\"zz\"}\n").unwrap();
        assert!(matches!(read_observations(&p), Err(PolicyError::Hex { .. })));
    }
}
