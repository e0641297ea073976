//! Fuzzy resolution of human-typed actor and lab references.

use serde::Serialize;
use thiserror::Error;

use super::fuzzy::{rank, Ranked, LOOKUP_THRESHOLD};
use crate::lab_model::World;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alternate {
    pub candidate_id: String,
    pub candidate_name: String,
    pub score: f64,
}

/// The best candidate plus up to three runners-up, best first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzyMatch {
    pub candidate_id: String,
    pub candidate_name: String,
    pub score: f64,
    pub alternates: Vec<Alternate>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LookupError {
    #[error("query is empty after normalization")]
    EmptyQuery,
    #[error("no {0} to search")]
    NoData(&'static str),
    #[error("no confident {kind} match for '{query}'; closest: {}", format_candidates(.candidates))]
    NoConfidentMatch {
        kind: &'static str,
        query: String,
        candidates: Vec<Alternate>,
    },
}

fn format_candidates(c: &[Alternate]) -> String {
    c.iter()
        .map(|a| format!("{} ({:.2})", a.candidate_id, a.score))
        .collect::<Vec<_>>()
        .join(", ")
}

fn to_alternate(r: &Ranked, names: &dyn Fn(&str) -> String) -> Alternate {
    Alternate {
        candidate_id: r.key.clone(),
        candidate_name: names(&r.key),
        score: r.score,
    }
}

fn resolve<'a>(
    kind: &'static str,
    query: &str,
    candidates: Vec<(&'a str, Vec<&'a str>)>,
    names: &dyn Fn(&str) -> String,
) -> Result<FuzzyMatch, LookupError> {
    if candidates.is_empty() {
        return Err(LookupError::NoData(kind));
    }
    let ranked = rank(query, candidates).map_err(|_| LookupError::EmptyQuery)?;
    let best = &ranked[0];
    if best.score < LOOKUP_THRESHOLD {
        return Err(LookupError::NoConfidentMatch {
            kind,
            query: query.to_string(),
            candidates: ranked
                .iter()
                .take(3)
                .map(|r| to_alternate(r, names))
                .collect(),
        });
    }
    Ok(FuzzyMatch {
        candidate_id: best.key.clone(),
        candidate_name: names(&best.key),
        score: best.score,
        alternates: ranked[1..]
            .iter()
            .take(3)
            .map(|r| to_alternate(r, names))
            .collect(),
    })
}

/// Scores the query against every actor's id and name.
pub fn fuzzy_lookup_actor(world: &World, query: &str) -> Result<FuzzyMatch, LookupError> {
    let candidates = world
        .actors
        .values()
        .map(|a| (a.id.as_str(), vec![a.id.as_str(), a.name.as_str()]))
        .collect();
    resolve("actor", query, candidates, &|id| {
        world.actors[id].name.clone()
    })
}

/// Scores the query against every lab's id and name.
pub fn fuzzy_lookup_lab(world: &World, query: &str) -> Result<FuzzyMatch, LookupError> {
    let candidates = world
        .labs
        .values()
        .map(|l| (l.id.as_str(), vec![l.id.as_str(), l.name.as_str()]))
        .collect();
    resolve("lab", query, candidates, &|id| world.labs[id].name.clone())
}
