//! Deterministic input and output filtering from bundled rule lists.
//!
//! Text is lowercased and every run of non-alphanumeric characters becomes
//! one space. Injection and unsafe-content rules match as whole-word
//! phrases. Inputs must also share a word stem with the topic lexicon or
//! name a known entity. The first blocking rule wins in the order
//! injection, unsafe content, off topic.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardCategory {
    PromptInjection,
    UnsafeContent,
    OffTopic,
}

impl GuardCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            GuardCategory::PromptInjection => "prompt_injection",
            GuardCategory::UnsafeContent => "unsafe_content",
            GuardCategory::OffTopic => "off_topic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Allow,
    Block,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardrailVerdict {
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<GuardCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_rule: Option<String>,
}

impl GuardrailVerdict {
    pub fn allow() -> Self {
        Self {
            decision: Decision::Allow,
            category: None,
            matched_rule: None,
        }
    }

    fn block(category: GuardCategory, rule: &str) -> Self {
        Self {
            decision: Decision::Block,
            category: Some(category),
            matched_rule: Some(rule.to_string()),
        }
    }

    pub fn is_blocked(&self) -> bool {
        self.decision == Decision::Block
    }
}

pub fn normalize_text(s: &str) -> String {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Crude suffix stripping so that "labs", "running" and "lab" share stems.
pub fn stem(token: &str) -> String {
    for suffix in ["ing", "ed", "es", "s"] {
        if let Some(base) = token.strip_suffix(suffix) {
            if base.chars().count() >= 3 {
                return base.to_string();
            }
        }
    }
    token.to_string()
}

fn rule_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(normalize_text)
        .filter(|l| !l.is_empty())
        .collect()
}

fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    format!(" {haystack} ").contains(&format!(" {phrase} "))
}

#[derive(Debug, Clone, Default)]
pub struct Guardrail {
    injection: Vec<String>,
    unsafe_terms: Vec<String>,
    lexicon: BTreeSet<String>,
    /// Multi-word topic lines, matched as whole phrases.
    topic_phrases: Vec<String>,
}

impl Guardrail {
    /// Builds from the three rule files: one phrase per line, `#` comments.
    pub fn from_rules(injection: &str, unsafe_terms: &str, topics: &str) -> Self {
        Self {
            injection: rule_lines(injection),
            unsafe_terms: rule_lines(unsafe_terms),
            lexicon: rule_lines(topics)
                .iter()
                .filter(|l| !l.contains(' '))
                .map(|l| stem(l))
                .collect(),
            topic_phrases: rule_lines(topics)
                .into_iter()
                .filter(|l| l.contains(' '))
                .collect(),
        }
    }

    fn screen(&self, norm: &str) -> Option<GuardrailVerdict> {
        if let Some(r) = self.injection.iter().find(|r| contains_phrase(norm, r)) {
            return Some(GuardrailVerdict::block(GuardCategory::PromptInjection, r));
        }
        if let Some(r) = self.unsafe_terms.iter().find(|r| contains_phrase(norm, r)) {
            return Some(GuardrailVerdict::block(GuardCategory::UnsafeContent, r));
        }
        None
    }

    /// Checks a user message. `entities` are names or ids of existing labs,
    /// actors, workflows, jobs and conversations; mentioning one keeps an
    /// otherwise unrecognized message on topic.
    pub fn guard_input(&self, text: &str, entities: &[String]) -> GuardrailVerdict {
        let norm = normalize_text(text);
        if let Some(v) = self.screen(&norm) {
            return v;
        }
        if norm.split(' ').any(|t| self.lexicon.contains(&stem(t)))
            || self.topic_phrases.iter().any(|p| contains_phrase(&norm, p))
        {
            return GuardrailVerdict::allow();
        }
        if entities
            .iter()
            .map(|e| normalize_text(e))
            .any(|e| !e.is_empty() && contains_phrase(&norm, &e))
        {
            return GuardrailVerdict::allow();
        }
        GuardrailVerdict::block(GuardCategory::OffTopic, "topic lexicon")
    }

    /// Checks an agent reply; the topical check does not apply.
    pub fn guard_output(&self, text: &str) -> GuardrailVerdict {
        self.screen(&normalize_text(text))
            .unwrap_or_else(GuardrailVerdict::allow)
    }
}
