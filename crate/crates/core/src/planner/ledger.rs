use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Family, PlannerError};
use crate::Period;

/// Tolerance under which a re-asserted commitment counts as unchanged.
pub const COMMIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DecisionKey {
    pub family: Family,
    /// Product for X/ST, action for B, `supplier/component` for A and
    /// [`super::PLANT`] for HS.
    pub item: String,
    pub period: Period,
}

impl DecisionKey {
    pub fn new(family: Family, item: impl Into<String>, period: Period) -> Self {
        DecisionKey {
            family,
            item: item.into(),
            period,
        }
    }
}

impl std::fmt::Display for DecisionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}({}, {})", self.family, self.item, self.period)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    #[serde(flatten)]
    pub key: DecisionKey,
    pub value: f64,
    /// Planning step that committed the value (0 for the initial pipeline).
    pub step: Period,
}

/// Write-once record of decisions that can no longer be revised.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<LedgerEntry>", into = "Vec<LedgerEntry>")]
pub struct CommitLedger {
    entries: BTreeMap<DecisionKey, (f64, Period)>,
}

impl From<Vec<LedgerEntry>> for CommitLedger {
    fn from(v: Vec<LedgerEntry>) -> Self {
        CommitLedger {
            entries: v.into_iter().map(|e| (e.key, (e.value, e.step))).collect(),
        }
    }
}

impl From<CommitLedger> for Vec<LedgerEntry> {
    fn from(l: CommitLedger) -> Self {
        l.entries
            .into_iter()
            .map(|(key, (value, step))| LedgerEntry { key, value, step })
            .collect()
    }
}

impl CommitLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, family: Family, item: &str, period: Period) -> Option<f64> {
        self.entries
            .get(&DecisionKey::new(family, item, period))
            .map(|e| e.0)
    }

    pub fn step_of(&self, key: &DecisionKey) -> Option<Period> {
        self.entries.get(key).map(|e| e.1)
    }

    /// Records `value`, or checks it against an earlier commitment.
    pub fn record(&mut self, key: DecisionKey, value: f64, step: Period) -> Result<(), PlannerError> {
        if key.family == Family::B && value != 0.0 && value != 1.0 {
            return Err(PlannerError::LedgerConflict {
                key: key.to_string(),
                value,
                reason: "binary decisions must be 0 or 1".into(),
            });
        }
        if !(value.is_finite() && value >= 0.0) {
            return Err(PlannerError::LedgerConflict {
                key: key.to_string(),
                value,
                reason: "committed quantities must be finite and non-negative".into(),
            });
        }
        match self.entries.get(&key) {
            Some(&(old, _)) if (old - value).abs() > COMMIT_TOLERANCE => {
                Err(PlannerError::Overwrite {
                    key: key.to_string(),
                    old,
                    new: value,
                })
            }
            Some(_) => Ok(()),
            None => {
                self.entries.insert(key, (value, step));
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DecisionKey, f64, Period)> {
        self.entries.iter().map(|(k, &(v, s))| (k, v, s))
    }

    pub fn contains(&self, key: &DecisionKey) -> bool {
        self.entries.contains_key(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_once() {
        let mut l = CommitLedger::new();
        let k = DecisionKey::new(Family::X, "P", 3);
        l.record(k.clone(), 10.0, 1).unwrap();
        l.record(k.clone(), 10.0 + 1e-12, 3).unwrap();
        assert_eq!(l.step_of(&k), Some(1));
        assert!(matches!(l.record(k, 11.0, 3), Err(PlannerError::Overwrite { .. })));
    }

    #[test]
    fn binaries_are_zero_or_one() {
        let mut l = CommitLedger::new();
        assert!(l.record(DecisionKey::new(Family::B, "a", 1), 0.5, 1).is_err());
        assert!(l.record(DecisionKey::new(Family::B, "a", 1), 1.0, 1).is_ok());
        assert!(l.record(DecisionKey::new(Family::X, "P", 1), -1.0, 1).is_err());
    }

    #[test]
    fn serializes_as_entry_list() {
        let mut l = CommitLedger::new();
        l.record(DecisionKey::new(Family::A, "s1/C1", 4), 3.5, 1).unwrap();
        let json = serde_json::to_string(&l).unwrap();
        assert_eq!(json, r#"[{"family":"A","item":"s1/C1","period":4,"value":3.5,"step":1}]"#);
        let back: CommitLedger = serde_json::from_str(&json).unwrap();
        assert_eq!(back, l);
    }
}
