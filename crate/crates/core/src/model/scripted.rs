//! Deterministic model double driven by an ordered rule table.
//!
//! Each non-comment line of the table is `agent | trigger | pattern | action`:
//!
//! - `agent`: an agent name or `*`.
//! - `trigger`: what the agent is reacting to. `user` is the latest user
//!   message, `tool` or `tool:<name>` a successful tool result, `error` a
//!   failed tool result, `return` or `return:<agent>` a specialist handing
//!   control back, and `*` anything.
//! - `pattern`: matched against the trigger text. `*` matches anything. A
//!   pattern containing `*` wildcards or `{name}` captures must match the
//!   whole text (case-insensitive, trailing `?.!` ignored); any other
//!   pattern is a case-insensitive substring.
//! - `action`: `final <text>`, `handoff <agent>[: reason]`, or one or more
//!   `call <tool> <json arguments>` joined by ` ;; `.
//!
//! Templates may use `{capture}`, `{text}` (the trigger text), `{user}`
//! (latest user message), `{ctx.key}` (shared context) and `{$.path}` (the
//! latest tool result, where `[]` maps over an array and joins the results
//! with ", "). A rule whose placeholders cannot all be resolved is skipped.
//! The first rule that matches wins; when none does the model answers with
//! [`FALLBACK_REPLY`].

use std::path::Path;

use regex::Regex;
use serde_json::{Map, Value};
use thiserror::Error;

use super::{
    Handoff, Message, ModelAction, ModelAdapter, ModelError, ModelRequest, Role, ToolCall,
};
use crate::agent::{CONTEXT_PREFIX, RETURN_PREFIX};

pub const FALLBACK_REPLY: &str = "I'm sorry, I don't have a scripted response for that request.";

#[derive(Debug, Clone, PartialEq, Error)]
#[error("rule table line {line}: {message}")]
pub struct RuleLoadError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Trigger {
    Any,
    User,
    Tool(Option<String>),
    Error,
    Return(Option<String>),
}

#[derive(Debug, Clone)]
enum Pattern {
    Any,
    Substring(String),
    Anchored(Regex),
}

#[derive(Debug, Clone)]
enum ActionTemplate {
    Final(String),
    Handoff { target: String, reason: String },
    Calls(Vec<(String, String)>),
}

#[derive(Debug, Clone)]
struct Rule {
    agent: String,
    trigger: Trigger,
    pattern: Pattern,
    action: ActionTemplate,
}

#[derive(Debug, Clone)]
pub struct ScriptedModel {
    rules: Vec<Rule>,
}

fn err(line: usize, message: impl Into<String>) -> RuleLoadError {
    RuleLoadError {
        line,
        message: message.into(),
    }
}

fn placeholder_re() -> Regex {
    Regex::new(r"\{([A-Za-z_$][A-Za-z0-9_.$\[\]]*)\}").expect("static regex")
}

fn parse_trigger(s: &str, line: usize) -> Result<Trigger, RuleLoadError> {
    let (head, arg) = match s.split_once(':') {
        Some((h, a)) => (h, Some(a.trim().to_string())),
        None => (s, None),
    };
    match (head, arg) {
        ("*", None) => Ok(Trigger::Any),
        ("user", None) => Ok(Trigger::User),
        ("error", None) => Ok(Trigger::Error),
        ("tool", a) => Ok(Trigger::Tool(a)),
        ("return", a) => Ok(Trigger::Return(a)),
        _ => Err(err(line, format!("unknown trigger '{s}'"))),
    }
}

fn parse_pattern(s: &str, line: usize) -> Result<Pattern, RuleLoadError> {
    if s == "*" {
        return Ok(Pattern::Any);
    }
    if s.is_empty() {
        return Err(err(line, "empty pattern"));
    }
    if !s.contains('*') && !s.contains('{') && !s.contains('}') {
        return Ok(Pattern::Substring(s.to_lowercase()));
    }
    let mut re = String::from("(?is)^");
    let mut names: Vec<String> = Vec::new();
    let mut rest = s;
    while !rest.is_empty() {
        if let Some(after) = rest.strip_prefix('{') {
            let close = after
                .find('}')
                .ok_or_else(|| err(line, "unclosed '{' in pattern"))?;
            let name = &after[..close];
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(err(line, format!("bad capture name '{name}'")));
            }
            if names.iter().any(|n| n == name) {
                return Err(err(line, format!("duplicate capture '{name}'")));
            }
            names.push(name.to_string());
            rest = &after[close + 1..];
            re.push_str(&format!("(?P<{name}>.+?)"));
        } else if let Some(after) = rest.strip_prefix('*') {
            re.push_str(".*?");
            rest = after;
        } else if rest.starts_with('}') {
            return Err(err(line, "unmatched '}' in pattern"));
        } else {
            let end = rest.find(['{', '}', '*']).unwrap_or(rest.len());
            re.push_str(&regex::escape(&rest[..end]));
            rest = &rest[end..];
        }
    }
    re.push_str(r"[\s?.!]*$");
    Regex::new(&re)
        .map(Pattern::Anchored)
        .map_err(|e| err(line, format!("bad pattern: {e}")))
}

/// Checks a `call` argument template renders to a JSON object when every
/// placeholder is replaced by a plain string.
fn check_json_template(t: &str, line: usize) -> Result<(), RuleLoadError> {
    let probe = placeholder_re().replace_all(t, "x");
    match serde_json::from_str::<Value>(&probe) {
        Ok(Value::Object(_)) => Ok(()),
        Ok(_) => Err(err(line, "call arguments must be a JSON object")),
        Err(e) => Err(err(line, format!("call arguments are not valid JSON: {e}"))),
    }
}

fn parse_action(s: &str, line: usize) -> Result<ActionTemplate, RuleLoadError> {
    let (verb, rest) = s.split_once(' ').map_or((s, ""), |(v, r)| (v, r.trim()));
    match verb {
        "final" => {
            if rest.is_empty() {
                return Err(err(line, "final needs text"));
            }
            Ok(ActionTemplate::Final(rest.to_string()))
        }
        "handoff" => {
            let (target, reason) = rest
                .split_once(':')
                .map_or((rest, ""), |(t, r)| (t.trim(), r.trim()));
            if target.is_empty() {
                return Err(err(line, "handoff needs a target"));
            }
            Ok(ActionTemplate::Handoff {
                target: target.to_string(),
                reason: reason.to_string(),
            })
        }
        "call" => {
            let mut calls = Vec::new();
            for (i, part) in s.split(" ;; ").enumerate() {
                let part = part.trim();
                let body = part
                    .strip_prefix("call ")
                    .ok_or_else(|| err(line, format!("call #{} must start with 'call'", i + 1)))?
                    .trim();
                let (tool, args) = body
                    .split_once(' ')
                    .map_or((body, "{}"), |(t, a)| (t, a.trim()));
                if tool.is_empty() {
                    return Err(err(line, "call needs a tool name"));
                }
                check_json_template(args, line)?;
                calls.push((tool.to_string(), args.to_string()));
            }
            Ok(ActionTemplate::Calls(calls))
        }
        other => Err(err(line, format!("unknown action '{other}'"))),
    }
}

impl ScriptedModel {
    pub fn parse(text: &str) -> Result<Self, RuleLoadError> {
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.splitn(4, '|').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(err(line, "expected 'agent | trigger | pattern | action'"));
            }
            if fields[0].is_empty() {
                return Err(err(line, "empty agent"));
            }
            rules.push(Rule {
                agent: fields[0].to_string(),
                trigger: parse_trigger(fields[1], line)?,
                pattern: parse_pattern(fields[2], line)?,
                action: parse_action(fields[3], line)?,
            });
        }
        Ok(Self { rules })
    }

    pub fn load(path: &Path) -> Result<Self, RuleLoadError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(0, format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }
}

/// What the active agent is reacting to.
#[derive(Debug)]
enum Stimulus<'a> {
    User(&'a str),
    Tool {
        name: &'a str,
        text: &'a str,
        is_error: bool,
    },
    Return {
        from: &'a str,
        text: &'a str,
    },
}

fn stimulus(messages: &[Message]) -> Option<Stimulus<'_>> {
    for (i, m) in messages.iter().enumerate().rev() {
        match m.role {
            Role::Tool => {
                return Some(Stimulus::Tool {
                    name: m.name.as_deref().unwrap_or_default(),
                    text: &m.content,
                    is_error: m.is_error,
                })
            }
            Role::User => return Some(Stimulus::User(&m.content)),
            Role::System => {
                if let Some(from) = m
                    .content
                    .strip_prefix(RETURN_PREFIX)
                    .and_then(|r| r.strip_suffix("]]"))
                {
                    let text = messages[..i]
                        .iter()
                        .rev()
                        .find(|p| p.role == Role::Assistant && p.agent.as_deref() == Some(from))
                        .map_or("", |p| p.content.as_str());
                    return Some(Stimulus::Return { from, text });
                }
            }
            Role::Assistant => {}
        }
    }
    None
}

struct Scope<'a> {
    captures: Vec<(String, String)>,
    text: &'a str,
    user: Option<&'a str>,
    context: Option<Map<String, Value>>,
    tool_result: Option<Value>,
}

fn lookup_path(root: &Value, path: &str) -> Option<String> {
    // Split "a.b[].c" into segments, where "[]" is its own segment.
    let mut segs: Vec<&str> = Vec::new();
    for part in path.split('.').filter(|p| !p.is_empty()) {
        let mut p = part;
        while let Some(i) = p.find("[]") {
            if i > 0 {
                segs.push(&p[..i]);
            }
            segs.push("[]");
            p = &p[i + 2..];
        }
        if !p.is_empty() {
            segs.push(p);
        }
    }
    fn walk<'v>(v: &'v Value, segs: &[&str], out: &mut Vec<&'v Value>) -> bool {
        let Some((first, rest)) = segs.split_first() else {
            out.push(v);
            return true;
        };
        if *first == "[]" {
            let Some(items) = v.as_array() else {
                return false;
            };
            return items.iter().all(|item| walk(item, rest, out));
        }
        let next = match v {
            Value::Object(m) => m.get(*first),
            Value::Array(a) => first.parse::<usize>().ok().and_then(|i| a.get(i)),
            _ => None,
        };
        next.is_some_and(|n| walk(n, rest, out))
    }
    let mut out = Vec::new();
    if !walk(root, &segs, &mut out) {
        return None;
    }
    let rendered: Vec<String> = out
        .into_iter()
        .map(|v| match v {
            Value::Null => None,
            Value::String(s) => Some(s.clone()),
            other => Some(other.to_string()),
        })
        .collect::<Option<_>>()?;
    Some(rendered.join(", "))
}

impl Scope<'_> {
    fn resolve(&self, key: &str) -> Option<String> {
        if let Some(path) = key.strip_prefix('$') {
            return lookup_path(self.tool_result.as_ref()?, path);
        }
        if let Some(k) = key.strip_prefix("ctx.") {
            return match self.context.as_ref()?.get(k)? {
                Value::String(s) => Some(s.clone()),
                Value::Null => None,
                other => Some(other.to_string()),
            };
        }
        match key {
            "text" => Some(self.text.to_string()),
            "user" => self.user.map(str::to_string),
            _ => self
                .captures
                .iter()
                .find(|(n, _)| n == key)
                .map(|(_, v)| v.clone()),
        }
    }

    /// Substitutes placeholders; `json` escapes values for use inside JSON
    /// string literals. `None` when any placeholder is unresolved.
    fn render(&self, template: &str, json: bool) -> Option<String> {
        let re = placeholder_re();
        let mut out = String::new();
        let mut last = 0;
        for c in re.captures_iter(template) {
            let m = c.get(0).expect("whole match");
            out.push_str(&template[last..m.start()]);
            let value = self.resolve(&c[1])?;
            if json {
                let quoted = Value::String(value).to_string();
                out.push_str(&quoted[1..quoted.len() - 1]);
            } else {
                out.push_str(&value);
            }
            last = m.end();
        }
        out.push_str(&template[last..]);
        Some(out)
    }
}

fn trigger_matches(trigger: &Trigger, s: &Stimulus<'_>) -> bool {
    match (trigger, s) {
        (Trigger::Any, _) => true,
        (Trigger::User, Stimulus::User(_)) => true,
        (
            Trigger::Tool(want),
            Stimulus::Tool {
                name,
                is_error: false,
                ..
            },
        ) => want.as_deref().is_none_or(|w| w == *name),
        (Trigger::Error, Stimulus::Tool { is_error: true, .. }) => true,
        (Trigger::Return(want), Stimulus::Return { from, .. }) => {
            want.as_deref().is_none_or(|w| w == *from)
        }
        _ => false,
    }
}

fn pattern_captures(p: &Pattern, text: &str) -> Option<Vec<(String, String)>> {
    match p {
        Pattern::Any => Some(Vec::new()),
        Pattern::Substring(s) => text.to_lowercase().contains(s.as_str()).then(Vec::new),
        Pattern::Anchored(re) => {
            let c = re.captures(text.trim())?;
            Some(
                re.capture_names()
                    .flatten()
                    .filter_map(|n| {
                        c.name(n)
                            .map(|m| (n.to_string(), m.as_str().trim().to_string()))
                    })
                    .collect(),
            )
        }
    }
}

impl ModelAdapter for ScriptedModel {
    fn complete(&self, request: &ModelRequest) -> Result<ModelAction, ModelError> {
        let Some(stim) = stimulus(&request.messages) else {
            return Ok(ModelAction::FinalText(FALLBACK_REPLY.into()));
        };
        let text = match &stim {
            Stimulus::User(t) => *t,
            Stimulus::Tool { text, .. } | Stimulus::Return { text, .. } => *text,
        };
        let user = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str());
        let context = request
            .messages
            .iter()
            .rev()
            .find_map(|m| {
                (m.role == Role::System)
                    .then(|| m.content.strip_prefix(CONTEXT_PREFIX))
                    .flatten()
            })
            .and_then(|c| serde_json::from_str::<Map<String, Value>>(c).ok());
        let tool_result = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == Role::Tool)
            .and_then(|m| serde_json::from_str::<Value>(&m.content).ok());
        let tool_calls_so_far = request
            .messages
            .iter()
            .filter(|m| m.role == Role::Tool)
            .count();

        for rule in &self.rules {
            if rule.agent != "*" && rule.agent != request.agent {
                continue;
            }
            if !trigger_matches(&rule.trigger, &stim) {
                continue;
            }
            let Some(captures) = pattern_captures(&rule.pattern, text) else {
                continue;
            };
            let scope = Scope {
                captures,
                text,
                user,
                context: context.clone(),
                tool_result: tool_result.clone(),
            };
            let action = match &rule.action {
                ActionTemplate::Final(t) => scope.render(t, false).map(ModelAction::FinalText),
                ActionTemplate::Handoff { target, reason } => {
                    scope.render(reason, false).map(|reason| {
                        ModelAction::Handoff(Handoff {
                            target: target.clone(),
                            reason,
                        })
                    })
                }
                ActionTemplate::Calls(calls) => calls
                    .iter()
                    .enumerate()
                    .map(|(i, (tool, args))| {
                        let rendered = scope.render(args, true)?;
                        let arguments =
                            serde_json::from_str::<Map<String, Value>>(&rendered).ok()?;
                        Some(ToolCall {
                            id: format!("{}-{}", request.agent, tool_calls_so_far + i + 1),
                            tool_name: tool.clone(),
                            arguments,
                        })
                    })
                    .collect::<Option<Vec<_>>>()
                    .map(ModelAction::ToolCalls),
            };
            if let Some(a) = action {
                return Ok(a);
            }
        }
        Ok(ModelAction::FinalText(FALLBACK_REPLY.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn req(agent: &str, messages: Vec<Message>) -> ModelRequest {
        ModelRequest {
            agent: agent.into(),
            messages,
            available_tools: vec![],
            available_handoffs: vec![],
        }
    }

    #[test]
    fn capture_into_tool_arguments() {
        let m = ScriptedModel::parse(
            "molecule | user | molecular weight of {name} | call smiles_from_molecule_name {\"name\": \"{name}\"}",
        )
        .unwrap();
        let a = m
            .complete(&req(
                "molecule",
                vec![Message::user("molecular weight of caffeine")],
            ))
            .unwrap();
        match a {
            ModelAction::ToolCalls(c) => {
                assert_eq!(c[0].tool_name, "smiles_from_molecule_name");
                assert_eq!(c[0].arguments["name"], "caffeine");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn first_rule_wins_and_fallback() {
        let m = ScriptedModel::parse("* | user | labs | final one\n* | user | list | final two")
            .unwrap();
        assert_eq!(
            m.complete(&req("lab", vec![Message::user("list labs")]))
                .unwrap(),
            ModelAction::FinalText("one".into())
        );
        assert_eq!(
            m.complete(&req("lab", vec![Message::user("hello")]))
                .unwrap(),
            ModelAction::FinalText(FALLBACK_REPLY.into())
        );
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = "# header\n\n* | user | a | final x\n* | user | b | final y\n\n\nsupervisor | user | {bad name} | final z\n";
        let e = ScriptedModel::parse(text).unwrap_err();
        assert_eq!(e.line, 7);
        assert!(e.to_string().contains("line 7"));
        assert_eq!(ScriptedModel::parse("a | b | c").unwrap_err().line, 1);
        assert!(ScriptedModel::parse("a | user | x | call t {not json}").is_err());
        assert!(ScriptedModel::parse("a | sometimes | x | final y").is_err());
    }

    #[test]
    fn tool_results_context_and_arrays() {
        let m = ScriptedModel::parse(
            "lab | tool:list_labs | * | final Labs: {$[].name} ({ctx.focus})\nlab | error | * | final failed: {text}",
        )
        .unwrap();
        let msgs = vec![
            Message::system(format!("{CONTEXT_PREFIX}{}", json!({"focus": "CCO"}))),
            Message::user("list labs"),
            Message::tool(
                "lab",
                "c1",
                "list_labs",
                json!([{"name": "A"}, {"name": "B"}]).to_string(),
                false,
            ),
        ];
        assert_eq!(
            m.complete(&req("lab", msgs)).unwrap(),
            ModelAction::FinalText("Labs: A, B (CCO)".into())
        );
        let msgs = vec![
            Message::user("x"),
            Message::tool("lab", "c1", "list_labs", "boom", true),
        ];
        assert_eq!(
            m.complete(&req("lab", msgs)).unwrap(),
            ModelAction::FinalText("failed: boom".into())
        );
    }

    #[test]
    fn unresolved_placeholder_skips_rule() {
        let m = ScriptedModel::parse(
            "lab | user | * | final {ctx.missing}\nlab | user | * | final plain",
        )
        .unwrap();
        assert_eq!(
            m.complete(&req("lab", vec![Message::user("x")])).unwrap(),
            ModelAction::FinalText("plain".into())
        );
    }

    #[test]
    fn return_trigger_sees_specialist_text() {
        let m = ScriptedModel::parse("supervisor | return:molecule | * | final {text}").unwrap();
        let msgs = vec![
            Message::user("q"),
            Message::assistant("molecule", "mw is 46.069"),
            Message::system(format!("{RETURN_PREFIX}molecule]]")),
        ];
        assert_eq!(
            m.complete(&req("supervisor", msgs)).unwrap(),
            ModelAction::FinalText("mw is 46.069".into())
        );
    }

    #[test]
    fn anchored_patterns_ignore_trailing_punctuation() {
        let m = ScriptedModel::parse("* | user | *weight of {name} | final {name}").unwrap();
        assert_eq!(
            m.complete(&req(
                "x",
                vec![Message::user("What is the weight of Ethanol?")]
            ))
            .unwrap(),
            ModelAction::FinalText("Ethanol".into())
        );
    }
}
