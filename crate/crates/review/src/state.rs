use std::collections::BTreeMap;

use ethnocode_core::coder::{Decision, ReliabilityReport};
use ethnocode_core::corpus::UnitKey;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("sequence number {got} does not follow {last}")]
    OutOfOrder { last: u64, got: u64 },
    #[error("queue version {got} for `{code}` does not follow {current}")]
    BadVersion { code: String, current: u64, got: u64 },
    #[error("no queue for code `{0}`")]
    UnknownCode(String),
    #[error("unit {unit} is not in the `{code}` queue")]
    NotQueued { code: String, unit: UnitKey },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuedUnit {
    pub unit: UnitKey,
    pub score: f64,
}

/// One logged event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    /// A new queue version for `code`. Decisions of the previous version
    /// move to the code's history.
    Queue {
        code: String,
        version: u64,
        items: Vec<QueuedUnit>,
        report: Option<ReliabilityReport>,
    },
    Decision {
        code: String,
        version: u64,
        unit: UnitKey,
        decision: Decision,
        reviewer: String,
        timestamp: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemState {
    pub unit: UnitKey,
    pub score: f64,
    pub decision: Decision,
    pub reviewer: Option<String>,
    pub timestamp: Option<String>,
    /// Sequence number of the entry that set the current decision (the
    /// queue entry while untouched).
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CodeState {
    pub version: u64,
    /// Score descending, ties by unit key.
    pub items: Vec<ItemState>,
    pub report: Option<ReliabilityReport>,
    /// Final decisions from earlier queue versions.
    #[serde(with = "pairs")]
    pub history: BTreeMap<UnitKey, Decision>,
}

/// Maps with struct keys, written as a list of pairs.
mod pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<K: Serialize, V: Serialize, S: Serializer>(map: &BTreeMap<K, V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Ok(Vec::<(K, V)>::deserialize(d)?.into_iter().collect())
    }
}

impl CodeState {
    pub fn item(&self, unit: &UnitKey) -> Option<&ItemState> {
        self.items.iter().find(|i| &i.unit == unit)
    }

    pub fn count(&self, decision: Decision) -> usize {
        self.items.iter().filter(|i| i.decision == decision).count()
    }

    /// Every decided unit: history overlaid with the live queue.
    pub fn decided(&self) -> BTreeMap<UnitKey, Decision> {
        let mut all = self.history.clone();
        for i in &self.items {
            if i.decision != Decision::Pending {
                all.insert(i.unit.clone(), i.decision);
            }
        }
        all
    }
}

/// Queue and decision state reconstructed from the log.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReviewState {
    pub seq: u64,
    pub codes: BTreeMap<String, CodeState>,
}

impl ReviewState {
    pub fn code(&self, code: &str) -> Option<&CodeState> {
        self.codes.get(code)
    }

    /// Checks an entry against the current state without applying it.
    pub fn check(&self, entry: &LogEntry) -> Result<(), StateError> {
        if entry.seq <= self.seq {
            return Err(StateError::OutOfOrder {
                last: self.seq,
                got: entry.seq,
            });
        }
        match &entry.event {
            Event::Queue { code, version, .. } => {
                let current = self.codes.get(code).map_or(0, |c| c.version);
                if *version != current + 1 {
                    return Err(StateError::BadVersion {
                        code: code.clone(),
                        current,
                        got: *version,
                    });
                }
            }
            Event::Decision { code, version, unit, .. } => {
                let state = self.codes.get(code).ok_or_else(|| StateError::UnknownCode(code.clone()))?;
                if *version != state.version {
                    return Err(StateError::BadVersion {
                        code: code.clone(),
                        current: state.version,
                        got: *version,
                    });
                }
                if state.item(unit).is_none() {
                    return Err(StateError::NotQueued {
                        code: code.clone(),
                        unit: unit.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, entry: &LogEntry) -> Result<(), StateError> {
        self.check(entry)?;
        self.seq = entry.seq;
        match &entry.event {
            Event::Queue {
                code,
                version,
                items,
                report,
            } => {
                let state = self.codes.entry(code.clone()).or_default();
                state.history = state.decided();
                state.version = *version;
                state.report = report.clone();
                state.items = items
                    .iter()
                    .map(|q| ItemState {
                        unit: q.unit.clone(),
                        score: q.score,
                        decision: Decision::Pending,
                        reviewer: None,
                        timestamp: None,
                        seq: entry.seq,
                    })
                    .collect();
                state
                    .items
                    .sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.unit.cmp(&b.unit)));
            }
            Event::Decision {
                code,
                unit,
                decision,
                reviewer,
                timestamp,
                ..
            } => {
                let state = self.codes.get_mut(code).expect("checked");
                let item = state.items.iter_mut().find(|i| &i.unit == unit).expect("checked");
                item.decision = *decision;
                item.reviewer = Some(reviewer.clone());
                item.timestamp = Some(timestamp.clone());
                item.seq = entry.seq;
            }
        }
        Ok(())
    }

    /// The sequence number that already records this decision, if posting it
    /// again would change nothing.
    pub fn duplicate_of(&self, code: &str, unit: &UnitKey, decision: Decision, reviewer: &str) -> Option<u64> {
        let item = self.codes.get(code)?.item(unit)?;
        let same = item.decision == decision
            && (decision == Decision::Pending || item.reviewer.as_deref() == Some(reviewer));
        same.then_some(item.seq)
    }
}
