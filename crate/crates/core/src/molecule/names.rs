//! Compound name → SMILES lookup over the bundled table.

use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::tools::fuzzy::{self, normalize};

const NAME_TABLE: &str = include_str!("../../data/compounds.tsv");

/// Minimum fuzzy score accepted for a name that is not an exact match.
pub const NAME_THRESHOLD: f64 = 0.72;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NameMatch {
    pub smiles: String,
    pub matched_name: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NameError {
    #[error("name is empty")]
    Empty,
    #[error("unknown compound name '{name}'; closest: {}", candidates.join(", "))]
    Unknown {
        name: String,
        candidates: Vec<String>,
    },
}

pub(super) fn table() -> &'static [(String, String)] {
    static TABLE: OnceLock<Vec<(String, String)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        NAME_TABLE
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| {
                let (name, smiles) = l.split_once('\t').expect("name<TAB>smiles");
                (name.trim().to_string(), smiles.trim().to_string())
            })
            .collect()
    })
}

pub fn smiles_from_molecule_name(name: &str) -> Result<NameMatch, NameError> {
    smiles_from_name_with_threshold(name, NAME_THRESHOLD)
}

pub fn smiles_from_name_with_threshold(name: &str, threshold: f64) -> Result<NameMatch, NameError> {
    let query = normalize(name);
    if query.is_empty() {
        return Err(NameError::Empty);
    }
    if let Some((n, s)) = table().iter().find(|(n, _)| normalize(n) == query) {
        return Ok(NameMatch {
            smiles: s.clone(),
            matched_name: n.clone(),
            confidence: 1.0,
        });
    }
    let ranked = fuzzy::rank(
        name,
        table().iter().map(|(n, _)| (n.as_str(), vec![n.as_str()])),
    )
    .map_err(|_| NameError::Empty)?;
    match ranked.first() {
        Some(best) if best.score >= threshold => {
            let smiles = table()
                .iter()
                .find(|(n, _)| *n == best.key)
                .map(|(_, s)| s.clone())
                .expect("ranked key comes from the table");
            Ok(NameMatch {
                smiles,
                matched_name: best.key.clone(),
                confidence: best.score,
            })
        }
        _ => Err(NameError::Unknown {
            name: name.to_string(),
            candidates: ranked.iter().take(3).map(|r| r.key.clone()).collect(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_is_case_insensitive() {
        let m = smiles_from_molecule_name("Aspirin").unwrap();
        assert_eq!(m.smiles, "CC(=O)Oc1ccccc1C(=O)O");
        assert_eq!(m.confidence, 1.0);
    }

    #[test]
    fn misspelling_matches_fuzzily() {
        let m = smiles_from_molecule_name("asprin").unwrap();
        assert_eq!(m.matched_name, "aspirin");
        assert!(m.confidence < 1.0 && m.confidence >= NAME_THRESHOLD);
    }

    #[test]
    fn unknown_lists_three() {
        match smiles_from_molecule_name("unobtainium") {
            Err(NameError::Unknown { candidates, .. }) => assert_eq!(candidates.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn every_table_entry_parses() {
        assert!(table().len() >= 100);
        for (n, s) in table() {
            assert!(super::super::parse_smiles(s).is_ok(), "{n}: {s}");
        }
    }
}
