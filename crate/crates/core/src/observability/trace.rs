//! Span tracing for agent turns. Spans are kept per conversation and, when
//! a sink is configured, appended to a JSON-lines file as they end.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const TRACE_FILE: &str = "traces.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    Turn,
    ModelCall,
    ToolCall,
    Handoff,
    Guardrail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpan {
    pub span_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_span_id: Option<String>,
    pub conversation_id: String,
    pub turn_id: String,
    pub kind: SpanKind,
    pub name: String,
    pub start_s: f64,
    pub end_s: f64,
    pub status: SpanStatus,
    #[serde(default)]
    pub attributes: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanNode {
    #[serde(flatten)]
    pub span: TraceSpan,
    pub children: Vec<SpanNode>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("span '{0}' is not open")]
    NotOpen(String),
    #[error("trace sink: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace file line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

#[derive(Default)]
struct Inner {
    next: u64,
    open: BTreeMap<String, TraceSpan>,
    closed: BTreeMap<String, Vec<TraceSpan>>,
}

#[derive(Default)]
pub struct Tracer {
    inner: Mutex<Inner>,
    sink: Option<PathBuf>,
}

/// Reads a trace file back into per-conversation span lists in file order.
pub fn replay(path: &Path) -> Result<BTreeMap<String, Vec<TraceSpan>>, TraceError> {
    let mut out: BTreeMap<String, Vec<TraceSpan>> = BTreeMap::new();
    if !path.exists() {
        return Ok(out);
    }
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let span: TraceSpan = serde_json::from_str(&line).map_err(|e| TraceError::Corrupt {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.entry(span.conversation_id.clone())
            .or_default()
            .push(span);
    }
    Ok(out)
}

/// Nests spans under their parents. Roots and siblings are ordered by
/// start time, then span id.
pub fn build_tree(spans: &[TraceSpan]) -> Vec<SpanNode> {
    let mut children: BTreeMap<Option<&str>, Vec<&TraceSpan>> = BTreeMap::new();
    for s in spans {
        children
            .entry(s.parent_span_id.as_deref())
            .or_default()
            .push(s);
    }
    for list in children.values_mut() {
        list.sort_by(|a, b| {
            a.start_s
                .total_cmp(&b.start_s)
                .then_with(|| a.span_id.cmp(&b.span_id))
        });
    }
    fn build(
        id: Option<&str>,
        children: &BTreeMap<Option<&str>, Vec<&TraceSpan>>,
    ) -> Vec<SpanNode> {
        children
            .get(&id)
            .map(|list| {
                list.iter()
                    .map(|s| SpanNode {
                        span: (*s).clone(),
                        children: build(Some(&s.span_id), children),
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
    build(None, &children)
}

/// Checks timing, parent existence, one root per turn id, and that only
/// turn spans are roots while non-turn spans sit inside a turn.
pub fn check_well_formed(spans: &[TraceSpan]) -> Result<(), String> {
    let by_id: BTreeMap<&str, &TraceSpan> = spans.iter().map(|s| (s.span_id.as_str(), s)).collect();
    if by_id.len() != spans.len() {
        return Err("duplicate span ids".into());
    }
    let mut roots_per_turn: BTreeMap<&str, usize> = BTreeMap::new();
    for s in spans {
        if s.end_s < s.start_s {
            return Err(format!("span {} ends before it starts", s.span_id));
        }
        match &s.parent_span_id {
            None => {
                if s.kind != SpanKind::Turn {
                    return Err(format!(
                        "span {} of kind {:?} has no parent",
                        s.span_id, s.kind
                    ));
                }
                *roots_per_turn.entry(&s.turn_id).or_default() += 1;
            }
            Some(p) => {
                let parent = by_id
                    .get(p.as_str())
                    .ok_or_else(|| format!("span {} has orphan parent {p}", s.span_id))?;
                if s.kind == SpanKind::Turn {
                    return Err(format!("turn span {} is nested", s.span_id));
                }
                if parent.turn_id != s.turn_id {
                    return Err(format!("span {} crosses turns", s.span_id));
                }
            }
        }
    }
    let turns: BTreeSet<&str> = spans.iter().map(|s| s.turn_id.as_str()).collect();
    for t in turns {
        if roots_per_turn.get(t).copied().unwrap_or(0) != 1 {
            return Err(format!("turn {t} does not have exactly one root"));
        }
    }
    Ok(())
}

impl Tracer {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Appends to `path`, first loading the spans it already holds.
    pub fn open(path: &Path) -> Result<Self, TraceError> {
        let closed = replay(path)?;
        let next = closed.values().map(Vec::len).sum::<usize>() as u64;
        Ok(Self {
            inner: Mutex::new(Inner {
                next,
                open: BTreeMap::new(),
                closed,
            }),
            sink: Some(path.to_path_buf()),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn begin(
        &self,
        conversation_id: &str,
        turn_id: &str,
        parent: Option<&str>,
        kind: SpanKind,
        name: &str,
        attributes: BTreeMap<String, Value>,
        now_s: f64,
    ) -> String {
        let mut inner = self.lock();
        inner.next += 1;
        let id = format!("span-{:08}", inner.next);
        inner.open.insert(
            id.clone(),
            TraceSpan {
                span_id: id.clone(),
                parent_span_id: parent.map(str::to_string),
                conversation_id: conversation_id.to_string(),
                turn_id: turn_id.to_string(),
                kind,
                name: name.to_string(),
                start_s: now_s,
                end_s: now_s,
                status: SpanStatus::Ok,
                attributes,
            },
        );
        id
    }

    /// Closes a span, merging `extra` into its attributes, and flushes it.
    pub fn end(
        &self,
        span_id: &str,
        status: SpanStatus,
        extra: BTreeMap<String, Value>,
        now_s: f64,
    ) -> Result<TraceSpan, TraceError> {
        let mut inner = self.lock();
        let mut span = inner
            .open
            .remove(span_id)
            .ok_or_else(|| TraceError::NotOpen(span_id.to_string()))?;
        span.end_s = now_s.max(span.start_s);
        span.status = status;
        span.attributes.extend(extra);
        inner
            .closed
            .entry(span.conversation_id.clone())
            .or_default()
            .push(span.clone());
        if let Some(path) = &self.sink {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(
                f,
                "{}",
                serde_json::to_string(&span).expect("span serializes")
            )?;
        }
        Ok(span)
    }

    /// Closed spans of a conversation in the order they ended.
    pub fn spans(&self, conversation_id: &str) -> Vec<TraceSpan> {
        self.lock()
            .closed
            .get(conversation_id)
            .cloned()
            .unwrap_or_default()
    }

    pub fn tree(&self, conversation_id: &str) -> Vec<SpanNode> {
        build_tree(&self.spans(conversation_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs() -> BTreeMap<String, Value> {
        BTreeMap::new()
    }

    #[test]
    fn nested_spans_and_tree() {
        let t = Tracer::in_memory();
        let turn = t.begin("c1", "t1", None, SpanKind::Turn, "turn", attrs(), 0.0);
        let g = t.begin(
            "c1",
            "t1",
            Some(&turn),
            SpanKind::Guardrail,
            "input",
            attrs(),
            0.0,
        );
        t.end(&g, SpanStatus::Ok, attrs(), 0.0).unwrap();
        let m = t.begin(
            "c1",
            "t1",
            Some(&turn),
            SpanKind::ModelCall,
            "supervisor",
            attrs(),
            1.0,
        );
        t.end(&m, SpanStatus::Ok, attrs(), 2.0).unwrap();
        t.end(&turn, SpanStatus::Ok, attrs(), 2.0).unwrap();
        let spans = t.spans("c1");
        assert_eq!(spans.len(), 3);
        check_well_formed(&spans).unwrap();
        let tree = t.tree("c1");
        assert_eq!(tree.len(), 1);
        assert_eq!(tree[0].children.len(), 2);
        assert_eq!(tree[0].children[0].span.kind, SpanKind::Guardrail);
    }

    #[test]
    fn ending_twice_is_an_error() {
        let t = Tracer::in_memory();
        let s = t.begin("c", "t", None, SpanKind::Turn, "turn", attrs(), 0.0);
        t.end(&s, SpanStatus::Ok, attrs(), 0.0).unwrap();
        assert!(matches!(
            t.end(&s, SpanStatus::Ok, attrs(), 0.0),
            Err(TraceError::NotOpen(_))
        ));
    }

    #[test]
    fn file_replay_matches_memory() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRACE_FILE);
        let t = Tracer::open(&path).unwrap();
        for conv in ["a", "b"] {
            let turn = t.begin(conv, "t1", None, SpanKind::Turn, "turn", attrs(), 0.0);
            let c = t.begin(
                conv,
                "t1",
                Some(&turn),
                SpanKind::ToolCall,
                "list_labs",
                attrs(),
                0.0,
            );
            t.end(&c, SpanStatus::Error, attrs(), 0.0).unwrap();
            t.end(&turn, SpanStatus::Ok, attrs(), 0.0).unwrap();
        }
        let replayed = replay(&path).unwrap();
        assert_eq!(replayed["a"], t.spans("a"));
        assert_eq!(build_tree(&replayed["b"]), t.tree("b"));
        let reopened = Tracer::open(&path).unwrap();
        let next = reopened.begin("a", "t2", None, SpanKind::Turn, "turn", attrs(), 0.0);
        assert!(t.spans("a").iter().all(|s| s.span_id != next));
    }

    #[test]
    fn malformed_trees_detected() {
        let t = Tracer::in_memory();
        let s = t.begin(
            "c",
            "t",
            Some("ghost"),
            SpanKind::ToolCall,
            "x",
            attrs(),
            0.0,
        );
        t.end(&s, SpanStatus::Ok, attrs(), 0.0).unwrap();
        assert!(check_well_formed(&t.spans("c")).is_err());
    }
}
