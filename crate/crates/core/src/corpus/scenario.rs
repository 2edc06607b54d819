//! Testing scenarios: the Start/End context chunks and, for IP, the
//! strategy choosing which rightmost chunk(s) carry an unset MF bit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Protocol};

/// Where a context chunk sits in send order relative to the test chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Start,
    Test,
    End,
}

/// The eleven protocol-agnostic scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Agnostic {
    Continuous,
    StartPrecedes,
    StartFollows,
    EndPrecedes,
    EndFollows,
    StartFollowsEndFollows,
    EndFollowsStartFollows,
    StartPrecedesEndFollows,
    EndPrecedesStartFollows,
    StartPrecedesEndPrecedes,
    EndPrecedesStartPrecedes,
}

impl Agnostic {
    pub const ALL: [Agnostic; 11] = [
        Agnostic::Continuous,
        Agnostic::StartPrecedes,
        Agnostic::StartFollows,
        Agnostic::EndPrecedes,
        Agnostic::EndFollows,
        Agnostic::StartFollowsEndFollows,
        Agnostic::EndFollowsStartFollows,
        Agnostic::StartPrecedesEndFollows,
        Agnostic::EndPrecedesStartFollows,
        Agnostic::StartPrecedesEndPrecedes,
        Agnostic::EndPrecedesStartPrecedes,
    ];

    pub fn name(self) -> &'static str {
        use Agnostic::*;
        match self {
            Continuous => "s_c",
            StartPrecedes => "s_sp",
            StartFollows => "s_sf",
            EndPrecedes => "s_ep",
            EndFollows => "s_ef",
            StartFollowsEndFollows => "s_sf_ef",
            EndFollowsStartFollows => "s_ef_sf",
            StartPrecedesEndFollows => "s_sp_ef",
            EndPrecedesStartFollows => "s_ep_sf",
            StartPrecedesEndPrecedes => "s_sp_ep",
            EndPrecedesStartPrecedes => "s_ep_sp",
        }
    }

    /// Send order of the context chunks around the test chunks.
    pub fn send_order(self) -> &'static [Slot] {
        use Agnostic::*;
        use Slot::*;
        match self {
            Continuous => &[Test],
            StartPrecedes => &[Start, Test],
            StartFollows => &[Test, Start],
            EndPrecedes => &[End, Test],
            EndFollows => &[Test, End],
            StartFollowsEndFollows => &[Test, Start, End],
            EndFollowsStartFollows => &[Test, End, Start],
            StartPrecedesEndFollows => &[Start, Test, End],
            EndPrecedesStartFollows => &[End, Test, Start],
            StartPrecedesEndPrecedes => &[Start, End, Test],
            EndPrecedesStartPrecedes => &[End, Start, Test],
        }
    }

    pub fn has_start(self) -> bool {
        self.send_order().contains(&Slot::Start)
    }

    pub fn has_end(self) -> bool {
        self.send_order().contains(&Slot::End)
    }
}

impl FromStr for Agnostic {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Agnostic::ALL.iter().copied().find(|a| a.name() == s).ok_or_else(|| CorpusError::UnknownScenario(s.to_string()))
    }
}

/// Which rightmost chunks an MF strategy looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    /// chunks with the maximal end cell
    Finishing,
    /// chunks with the maximal start cell
    Starting,
}

const OLDEST: u8 = 1;
const MIDDLE: u8 = 2;
const NEWEST: u8 = 4;
const ALL: u8 = 8;

/// One of the fourteen MF-bit unsetting strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MfStrategy(u8);

impl MfStrategy {
    const TABLE: [(&'static str, Anchor, u8); 14] = [
        ("of", Anchor::Finishing, OLDEST),
        ("nf", Anchor::Finishing, NEWEST),
        ("mf", Anchor::Finishing, MIDDLE),
        ("onf", Anchor::Finishing, OLDEST | NEWEST),
        ("omf", Anchor::Finishing, OLDEST | MIDDLE),
        ("mnf", Anchor::Finishing, MIDDLE | NEWEST),
        ("af", Anchor::Finishing, ALL),
        ("os", Anchor::Starting, OLDEST),
        ("ns", Anchor::Starting, NEWEST),
        ("ms", Anchor::Starting, MIDDLE),
        ("ons", Anchor::Starting, OLDEST | NEWEST),
        ("oms", Anchor::Starting, OLDEST | MIDDLE),
        ("mns", Anchor::Starting, MIDDLE | NEWEST),
        ("as", Anchor::Starting, ALL),
    ];

    pub fn all() -> impl Iterator<Item = MfStrategy> {
        (0..Self::TABLE.len() as u8).map(MfStrategy)
    }

    pub fn name(self) -> &'static str {
        Self::TABLE[self.0 as usize].0
    }

    pub fn anchor(self) -> Anchor {
        Self::TABLE[self.0 as usize].1
    }

    /// Positions selected from a time-sorted candidate list of length `k`.
    pub fn positions(self, k: usize) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let mask = Self::TABLE[self.0 as usize].2;
        if mask & ALL != 0 {
            return (0..k).collect();
        }
        let mut out = Vec::new();
        if mask & OLDEST != 0 {
            out.push(0);
        }
        if mask & MIDDLE != 0 {
            out.push((k - 1) / 2);
        }
        if mask & NEWEST != 0 {
            out.push(k - 1);
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

impl FromStr for MfStrategy {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::TABLE
            .iter()
            .position(|(n, _, _)| *n == s)
            .map(|i| MfStrategy(i as u8))
            .ok_or_else(|| CorpusError::UnknownScenario(s.to_string()))
    }
}

impl fmt::Display for MfStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A full testing scenario, e.g. `s_sf` (TCP) or `s_c-of` (IP).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScenarioSpec {
    pub agnostic: Agnostic,
    pub mf_strategy: Option<MfStrategy>,
}

impl ScenarioSpec {
    pub fn new(agnostic: Agnostic, mf_strategy: Option<MfStrategy>) -> Self {
        ScenarioSpec { agnostic, mf_strategy }
    }

    /// Check the MF part is present exactly for IP scenarios without End.
    pub fn validate(&self, protocol: Protocol) -> Result<(), CorpusError> {
        let needs_mf = protocol.is_ip() && !self.agnostic.has_end();
        if needs_mf != self.mf_strategy.is_some() {
            return Err(CorpusError::UnsupportedScenario { protocol, scenario: self.to_string() });
        }
        Ok(())
    }

    /// Every scenario applicable to `protocol`, in canonical order.
    pub fn all_for(protocol: Protocol) -> Vec<ScenarioSpec> {
        let mut out = Vec::new();
        for a in Agnostic::ALL {
            if protocol.is_ip() && !a.has_end() {
                out.extend(MfStrategy::all().map(|m| ScenarioSpec::new(a, Some(m))));
            } else {
                out.push(ScenarioSpec::new(a, None));
            }
        }
        out
    }

    /// Expand a user-facing selector (`all`, `end`, `mf`, an agnostic name, or a full name).
    pub fn select(protocol: Protocol, selector: &str) -> Result<Vec<ScenarioSpec>, CorpusError> {
        let all = Self::all_for(protocol);
        let picked: Vec<ScenarioSpec> = match selector {
            "all" => all,
            "end" => all.into_iter().filter(|s| s.agnostic.has_end()).collect(),
            "mf" => all.into_iter().filter(|s| s.mf_strategy.is_some()).collect(),
            name => {
                let spec: ScenarioSpec = name.parse()?;
                if spec.mf_strategy.is_none() && protocol.is_ip() && !spec.agnostic.has_end() {
                    // bare agnostic name on IP: every MF strategy
                    all.into_iter().filter(|s| s.agnostic == spec.agnostic).collect()
                } else {
                    spec.validate(protocol)?;
                    vec![spec]
                }
            }
        };
        Ok(picked)
    }
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.agnostic.name())?;
        if let Some(m) = self.mf_strategy {
            write!(f, "-{m}")?;
        }
        Ok(())
    }
}

impl FromStr for ScenarioSpec {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('-') {
            Some((a, m)) => Ok(ScenarioSpec::new(a.parse()?, Some(m.parse()?))),
            None => Ok(ScenarioSpec::new(s.parse()?, None)),
        }
    }
}

impl Serialize for ScenarioSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ScenarioSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_per_protocol() {
        assert_eq!(ScenarioSpec::all_for(Protocol::Tcp).len(), 11);
        let ip = ScenarioSpec::all_for(Protocol::Ipv4);
        assert_eq!(ip.len(), 50);
        assert_eq!(ip.iter().filter(|s| s.mf_strategy.is_some()).count(), 42);
        assert_eq!(ip.iter().filter(|s| s.agnostic.has_end()).count(), 8);
    }

    #[test]
    fn names_round_trip() {
        for p in [Protocol::Tcp, Protocol::Ipv6] {
            for s in ScenarioSpec::all_for(p) {
                assert_eq!(s.to_string().parse::<ScenarioSpec>().unwrap(), s);
            }
        }
        assert_eq!(ScenarioSpec::all_for(Protocol::Ipv4)[0].to_string(), "s_c-of");
    }

    #[test]
    fn ef_sf_sends_end_then_start() {
        assert_eq!(Agnostic::EndFollowsStartFollows.send_order(), &[Slot::Test, Slot::End, Slot::Start]);
        assert_eq!(Agnostic::EndPrecedesStartFollows.send_order(), &[Slot::End, Slot::Test, Slot::Start]);
    }

    #[test]
    fn mf_positions() {
        let of: MfStrategy = "of".parse().unwrap();
        let mnf: MfStrategy = "mnf".parse().unwrap();
        let a: MfStrategy = "as".parse().unwrap();
        assert_eq!(of.positions(3), vec![0]);
        assert_eq!(mnf.positions(3), vec![1, 2]);
        assert_eq!(mnf.positions(2), vec![0, 1]);
        assert_eq!(mnf.positions(1), vec![0]);
        assert_eq!(a.positions(2), vec![0, 1]);
        assert_eq!(a.anchor(), Anchor::Starting);
    }

    #[test]
    fn validation() {
        let sc: ScenarioSpec = "s_c".parse().unwrap();
        assert!(sc.validate(Protocol::Tcp).is_ok());
        assert!(sc.validate(Protocol::Ipv4).is_err());
        let sc_of: ScenarioSpec = "s_c-of".parse().unwrap();
        assert!(sc_of.validate(Protocol::Ipv4).is_ok());
        assert!(sc_of.validate(Protocol::Tcp).is_err());
        let ep_of: ScenarioSpec = "s_ep-of".parse().unwrap();
        assert!(ep_of.validate(Protocol::Ipv6).is_err());
        assert!("s_zz".parse::<ScenarioSpec>().is_err());
    }

    #[test]
    fn selectors() {
        assert_eq!(ScenarioSpec::select(Protocol::Ipv4, "end").unwrap().len(), 8);
        assert_eq!(ScenarioSpec::select(Protocol::Ipv4, "s_c").unwrap().len(), 14);
        assert_eq!(ScenarioSpec::select(Protocol::Ipv4, "s_c-of").unwrap().len(), 1);
        assert_eq!(ScenarioSpec::select(Protocol::Tcp, "all").unwrap().len(), 11);
        assert!(ScenarioSpec::select(Protocol::Tcp, "s_c-of").is_err());
    }
}
