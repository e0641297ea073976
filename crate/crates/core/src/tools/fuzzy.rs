//! Fuzzy name matching shared by actor/lab lookup and compound-name lookup.
//!
//! `score = max(1 − DL(q, c) / max(|q|, |c|), |shared tokens| / |union tokens|)`
//! on normalized strings, where DL is the Damerau–Levenshtein distance.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

/// Minimum score for actor and lab lookups.
pub const LOOKUP_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("fuzzy query is empty after normalization")]
pub struct EmptyQuery;

/// Lowercases, collapses runs of whitespace, `-` and `_` into one space and
/// trims.
pub fn normalize(s: &str) -> String {
    s.to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '-' || c == '_')
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn edit_component(q: &str, c: &str) -> f64 {
    let longest = q.chars().count().max(c.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::damerau_levenshtein(q, c) as f64 / longest as f64
}

pub fn token_component(q: &str, c: &str) -> f64 {
    let a: BTreeSet<&str> = q.split(' ').collect();
    let b: BTreeSet<&str> = c.split(' ').collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

pub fn fuzzy_score(query: &str, candidate: &str) -> Result<f64, EmptyQuery> {
    let (q, c) = (normalize(query), normalize(candidate));
    if q.is_empty() || c.is_empty() {
        return Err(EmptyQuery);
    }
    Ok(edit_component(&q, &c).max(token_component(&q, &c)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranked {
    pub key: String,
    pub label: String,
    pub score: f64,
}

/// Scores `query` against every `(key, labels...)` candidate, keeping each
/// key's best label, sorted by score descending then key.
pub fn rank<'a, I>(query: &str, candidates: I) -> Result<Vec<Ranked>, EmptyQuery>
where
    I: IntoIterator<Item = (&'a str, Vec<&'a str>)>,
{
    if normalize(query).is_empty() {
        return Err(EmptyQuery);
    }
    let mut out = Vec::new();
    for (key, labels) in candidates {
        let best = labels
            .into_iter()
            .filter_map(|l| fuzzy_score(query, l).ok().map(|s| (s, l)))
            .fold(None::<(f64, &str)>, |acc, (s, l)| match acc {
                Some((bs, _)) if bs >= s => acc,
                _ => Some((s, l)),
            });
        if let Some((score, label)) = best {
            out.push(Ranked {
                key: key.to_string(),
                label: label.to_string(),
                score,
            });
        }
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.key.cmp(&b.key)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_identity() {
        assert_eq!(normalize("  Lab--A_ x "), "lab a x");
        assert_eq!(fuzzy_score("Lab-A", "lab a").unwrap(), 1.0);
    }

    #[test]
    fn hplc_example() {
        let s = fuzzy_score("HPLC 1", "hplc 01").unwrap();
        assert!((s - 6.0 / 7.0).abs() < 1e-12);
        assert!((token_component("hplc 1", "hplc 01") - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn transposition_counts_once() {
        assert!((edit_component("ab", "ba") - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(fuzzy_score("", "x"), Err(EmptyQuery));
        assert_eq!(fuzzy_score(" - _", "x"), Err(EmptyQuery));
    }

    #[test]
    fn ranking_order() {
        let r = rank(
            "hplc",
            vec![("b", vec!["HPLC"]), ("a", vec!["HPLC"]), ("c", vec!["LH"])],
        )
        .unwrap();
        assert_eq!(r[0].key, "a");
        assert_eq!(r[1].key, "b");
        assert!(r[2].score < r[1].score);
    }
}
