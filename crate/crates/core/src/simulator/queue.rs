//! Out-of-order queue shared by the IP and TCP engines.

use std::collections::BTreeSet;

use crate::interval::{relate_unchecked, AllenRelation, Interval};

use super::{Alteration, IgnoreInterp, Merging, PairPolicy, PolicyTable};

/// A queued block of cells with the chunk that supplied each cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Entry {
    pub start: u32,
    pub owners: Vec<u32>,
    pub members: BTreeSet<u32>,
}

impl Entry {
    fn new(ext: Interval, chunk_id: u32) -> Self {
        Entry { start: ext.start, owners: vec![chunk_id; ext.len() as usize], members: BTreeSet::from([chunk_id]) }
    }

    pub fn end(&self) -> u32 {
        self.start + self.owners.len() as u32
    }

    pub fn extent(&self) -> Interval {
        Interval { start: self.start, end: self.end() }
    }

    /// The parts of this entry outside `cut`.
    fn without(&self, cut: Interval) -> Vec<Entry> {
        self.extent()
            .subtract(&cut)
            .into_iter()
            .map(|p| Entry {
                start: p.start,
                owners: self.owners[(p.start - self.start) as usize..(p.end - self.start) as usize].to_vec(),
                members: self.members.clone(),
            })
            .collect()
    }
}

/// What happened to an arriving chunk.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub(crate) struct Arrival {
    pub newcomer_dropped: bool,
    pub poisoned: bool,
    /// Chunks removed from the queue by an ignore interpretation.
    pub evicted: BTreeSet<u32>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Knobs<'a> {
    pub table: &'a PolicyTable,
    pub alteration: Alteration,
    pub merging: Merging,
    /// `None` means the newcomer is dropped (TCP).
    pub ignore: Option<IgnoreInterp>,
}

/// Disjoint entries sorted by start.
#[derive(Debug, Default, Clone)]
pub(crate) struct Queue {
    pub entries: Vec<Entry>,
}

struct Kept {
    entry: Entry,
    rel: Option<AllenRelation>,
    /// Delayed `New` resolution: loses its overlap with the newcomer at insertion.
    trim: bool,
}

impl Kept {
    fn plain(entry: Entry, rel: Option<AllenRelation>) -> Self {
        Kept { entry, rel, trim: false }
    }
}

enum OnIgnore {
    Continue,
    Stop,
}

impl Queue {
    pub fn first_start(&self) -> Option<u32> {
        self.entries.first().map(|e| e.start)
    }

    pub fn pop_front(&mut self) -> Entry {
        self.entries.remove(0)
    }

    /// Resolve `ext` from chunk `chunk_id` against the queue and insert what survives.
    pub fn arrive(&mut self, chunk_id: u32, ext: Interval, k: Knobs<'_>) -> Arrival {
        let mut out = Arrival::default();
        let snapshot = std::mem::take(&mut self.entries);
        // entries after resolution, each with the relation it had to the newcomer
        let mut kept: Vec<Kept> = Vec::with_capacity(snapshot.len() + 1);
        let mut pieces = vec![ext];
        let mut cuts: Vec<Interval> = Vec::new();
        let mut stopped = false;

        let mut rest = snapshot.into_iter();
        for e in rest.by_ref() {
            let eext = e.extent();
            let operand = match k.alteration {
                Alteration::Immediate => pieces
                    .iter()
                    .copied()
                    .find(|p| p.overlaps(&eext))
                    .or_else(|| pieces.iter().copied().find(|p| touches(*p, eext))),
                Alteration::Delayed => Some(ext),
            };
            let Some(operand) = operand else {
                kept.push(Kept::plain(e, None));
                continue;
            };
            let rel = relate_unchecked(eext, operand);
            if !rel.is_overlapping() {
                kept.push(Kept::plain(e, Some(rel)));
                continue;
            }
            match k.table.get(rel) {
                PairPolicy::Old => match k.alteration {
                    Alteration::Immediate => pieces = pieces.iter().flat_map(|p| p.subtract(&eext)).collect(),
                    Alteration::Delayed => cuts.push(eext),
                },
                PairPolicy::New => {
                    match k.alteration {
                        Alteration::Immediate => {
                            kept.extend(e.without(operand).into_iter().map(|p| Kept::plain(p, Some(rel))))
                        }
                        Alteration::Delayed => kept.push(Kept { entry: e, rel: Some(rel), trim: true }),
                    }
                    continue;
                }
                PairPolicy::Ignore => match self.ignore(k.ignore, e, &mut kept, &mut out) {
                    OnIgnore::Continue => continue,
                    OnIgnore::Stop => {
                        stopped = true;
                        break;
                    }
                },
            }
            kept.push(Kept::plain(e, Some(rel)));
        }

        if out.poisoned {
            self.entries.clear();
            return out;
        }
        if stopped {
            out.newcomer_dropped = true;
            // pending delayed trims are discarded with the newcomer
            self.entries = kept.into_iter().map(|kp| kp.entry).chain(rest).collect();
            self.entries.sort_by_key(|e| e.start);
            return out;
        }

        for c in &cuts {
            pieces = pieces.iter().flat_map(|p| p.subtract(c)).collect();
        }
        let mut resolved = Vec::with_capacity(kept.len());
        for kp in kept {
            if kp.trim {
                resolved.extend(kp.entry.without(ext).into_iter().map(|p| (p, kp.rel)));
            } else {
                resolved.push((kp.entry, kp.rel));
            }
        }
        self.insert(chunk_id, pieces, resolved, k.merging);
        out
    }

    fn ignore(&self, interp: Option<IgnoreInterp>, e: Entry, kept: &mut Vec<Kept>, out: &mut Arrival) -> OnIgnore {
        match interp {
            None | Some(IgnoreInterp::PairNewestDrop) => {
                kept.push(Kept::plain(e, None));
                OnIgnore::Stop
            }
            Some(IgnoreInterp::TripletAllDrop) => {
                out.poisoned = true;
                OnIgnore::Stop
            }
            Some(IgnoreInterp::PairDrop) => {
                out.evicted.extend(e.members.iter().copied());
                OnIgnore::Stop
            }
            Some(IgnoreInterp::PairOldestDrop) => {
                out.evicted.extend(e.members.iter().copied());
                OnIgnore::Continue
            }
        }
    }

    fn insert(
        &mut self,
        chunk_id: u32,
        pieces: Vec<Interval>,
        kept: Vec<(Entry, Option<AllenRelation>)>,
        merging: Merging,
    ) {
        // (entry, is newcomer piece, relation to newcomer)
        let mut items: Vec<(Entry, bool, Option<AllenRelation>)> =
            kept.into_iter().map(|(e, r)| (e, false, r)).collect();
        items.extend(pieces.into_iter().filter(|p| !p.is_empty()).map(|p| (Entry::new(p, chunk_id), true, None)));
        items.sort_by_key(|(e, _, _)| e.start);

        if merging == Merging::No {
            self.entries = items.into_iter().map(|(e, _, _)| e).collect();
            return;
        }
        let eligible = |r: Option<AllenRelation>| match (merging, r) {
            (_, None) => false,
            (Merging::Meet, Some(r)) => matches!(r, AllenRelation::M | AllenRelation::Mi),
            (Merging::Any, Some(r)) => !matches!(r, AllenRelation::B | AllenRelation::Bi),
            (Merging::No, _) => false,
        };
        let mut merged: Vec<Entry> = Vec::with_capacity(items.len());
        let mut prev: Option<(bool, Option<AllenRelation>)> = None;
        for (e, is_new, rel) in items {
            let link = match (merged.last(), prev) {
                (Some(last), Some((prev_new, prev_rel))) if last.end() == e.start => {
                    (prev_new && !is_new && eligible(rel)) || (is_new && !prev_new && eligible(prev_rel))
                }
                _ => false,
            };
            if link {
                let last = merged.last_mut().expect("checked above");
                last.owners.extend_from_slice(&e.owners);
                last.members.extend(e.members.iter().copied());
            } else {
                merged.push(e);
            }
            prev = Some((is_new, rel));
        }
        self.entries = merged;
    }
}

fn touches(a: Interval, b: Interval) -> bool {
    a.end == b.start || b.end == a.start
}
